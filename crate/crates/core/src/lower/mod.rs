//! Lowering: unrolls one function of a program against concrete inputs
//! (scalar bindings, array placements, initial contents, scripted call
//! effects) into a flat dynamic instruction stream, and provides the
//! in-order reference executor used as the architectural oracle.

mod inputs;

pub use inputs::{parse_inputs, ArrayLayout, CallEffect, InputsError, LoweringInputs, Placement};

use crate::mir::*;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

/// Dynamic sequence number; equals the op's index in the trace.
pub type Seq = u64;

/// Interned register index into [`Trace::reg_names`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Reg(pub u32);

/// A source operand. Induction variables and scripted constants are folded
/// to immediates during unrolling; register operands carry the sequence
/// number of their producer, if any op in the stream wrote the register
/// earlier (`None` means the initial register value is read).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand {
    Imm(i64),
    Reg { reg: Reg, producer: Option<Seq> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemWrite {
    pub addr: u64,
    pub size: u32,
    pub value: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DynKind {
    Load {
        dst: Reg,
        addr: u64,
        size: u32,
    },
    Store {
        addr: u64,
        size: u32,
        value: Operand,
    },
    Alu {
        dst: Reg,
        lhs: Operand,
        op: AluOp,
        rhs: Operand,
    },
    /// Scripted call effects execute atomically at the op's position.
    Call {
        writes: Vec<MemWrite>,
    },
}

/// One dynamic instruction instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DynOp {
    pub seq: Seq,
    pub pc: u64,
    pub pnd: bool,
    /// Extra cycles, beyond register-operand readiness, before the op's
    /// address resolves and it becomes issue-eligible. Zero unless the
    /// scenario injects producer latency.
    pub addr_ready_latency: u64,
    pub kind: DynKind,
}

impl DynOp {
    pub fn is_load(&self) -> bool {
        matches!(self.kind, DynKind::Load { .. })
    }

    pub fn is_store_like(&self) -> bool {
        matches!(self.kind, DynKind::Store { .. } | DynKind::Call { .. })
    }

    pub fn is_mem(&self) -> bool {
        matches!(self.kind, DynKind::Load { .. } | DynKind::Store { .. })
    }

    /// Byte ranges this op reads or writes.
    pub fn ranges(&self) -> Vec<(u64, u32)> {
        match &self.kind {
            DynKind::Load { addr, size, .. } | DynKind::Store { addr, size, .. } => {
                vec![(*addr, *size)]
            }
            DynKind::Call { writes } => writes.iter().map(|w| (w.addr, w.size)).collect(),
            DynKind::Alu { .. } => Vec::new(),
        }
    }

    pub fn dst(&self) -> Option<Reg> {
        match &self.kind {
            DynKind::Load { dst, .. } | DynKind::Alu { dst, .. } => Some(*dst),
            _ => None,
        }
    }

    pub fn src_operands(&self) -> Vec<Operand> {
        match &self.kind {
            DynKind::Store { value, .. } => vec![*value],
            DynKind::Alu { lhs, rhs, .. } => vec![*lhs, *rhs],
            _ => Vec::new(),
        }
    }
}

/// The lowered stream plus the register name table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub ops: Vec<DynOp>,
    pub reg_names: Vec<String>,
    pub entry: String,
}

impl Trace {
    pub fn reg_name(&self, r: Reg) -> &str {
        &self.reg_names[r.0 as usize]
    }

    /// Diagnostic text form, one op per line: seq, pc, kind, addr, pnd.
    pub fn dump_text(&self) -> String {
        let mut out = String::new();
        for op in &self.ops {
            let (kind, addr) = match &op.kind {
                DynKind::Load { addr, .. } => ("load", format!("{addr:#x}")),
                DynKind::Store { addr, .. } => ("store", format!("{addr:#x}")),
                DynKind::Alu { .. } => ("alu", "-".to_string()),
                DynKind::Call { writes } => (
                    "call",
                    if writes.is_empty() {
                        "-".to_string()
                    } else {
                        writes
                            .iter()
                            .map(|w| format!("{:#x}", w.addr))
                            .collect::<Vec<_>>()
                            .join(",")
                    },
                ),
            };
            writeln!(
                out,
                "{:6} pc={:#06x} {:5} addr={} pnd={}",
                op.seq, op.pc, kind, addr, op.pnd as u8
            )
            .unwrap();
        }
        out
    }
}

/// Architectural state: byte-addressable memory and named registers.
/// Absent bytes and registers read as zero; loads sign-extend from their
/// element size.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MachineState {
    pub memory: BTreeMap<u64, u8>,
    pub registers: BTreeMap<String, i64>,
}

impl MachineState {
    pub fn read_mem(&self, addr: u64, size: u32) -> i64 {
        let mut raw = [0u8; 8];
        for (i, byte) in raw.iter_mut().enumerate().take(size as usize) {
            *byte = self.memory.get(&(addr + i as u64)).copied().unwrap_or(0);
        }
        sign_extend(u64::from_le_bytes(raw), size)
    }

    pub fn write_mem(&mut self, addr: u64, size: u32, value: i64) {
        let raw = (value as u64).to_le_bytes();
        for i in 0..size as usize {
            self.memory.insert(addr + i as u64, raw[i]);
        }
    }

    pub fn reg(&self, name: &str) -> i64 {
        self.registers.get(name).copied().unwrap_or(0)
    }
}

pub fn sign_extend(raw: u64, size: u32) -> i64 {
    if size >= 8 {
        return raw as i64;
    }
    let shift = 64 - size * 8;
    ((raw << shift) as i64) >> shift
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LowerError {
    #[error("program is invalid: {0}")]
    Invalid(String),
    #[error("function {0:?} not found")]
    NoSuchFunction(String),
    #[error("unbound scalar parameter {0:?} (needed for a loop bound)")]
    UnboundTripCount(String),
    #[error("array parameter {0:?} has no placement")]
    UnplacedParam(String),
    #[error("instr {id}: address {addr:#x} out of bounds for array {base:?}")]
    OutOfBounds { id: u32, base: String, addr: u64 },
    #[error("call effect writes {base:?}, outside the declared may-write set")]
    EffectOutsideSummary { base: String },
    #[error("{0}")]
    Inputs(#[from] InputsError),
}

struct LowerCtx<'a> {
    inputs: &'a LoweringInputs,
    layouts: BTreeMap<String, ArrayLayout>,
    reg_ids: BTreeMap<String, Reg>,
    reg_names: Vec<String>,
    last_writer: BTreeMap<Reg, Seq>,
    ivars: BTreeMap<String, i64>,
    ops: Vec<DynOp>,
}

/// Unroll `inputs.entry` (default: the first function) into a dynamic
/// stream. The stream carries the same pnd bits as the static loads it
/// instantiates.
pub fn lower(program: &Program, inputs: &LoweringInputs) -> Result<Trace, LowerError> {
    let diags = validate(program);
    if !diags.is_empty() {
        return Err(LowerError::Invalid(diags[0].message.clone()));
    }
    let entry = match &inputs.entry {
        Some(name) => program
            .function(name)
            .ok_or_else(|| LowerError::NoSuchFunction(name.clone()))?,
        None => program
            .functions
            .first()
            .ok_or_else(|| LowerError::NoSuchFunction("<first>".to_string()))?,
    };
    let layouts = inputs.layouts(program, entry)?;
    let mut ctx = LowerCtx {
        inputs,
        layouts,
        reg_ids: BTreeMap::new(),
        reg_names: Vec::new(),
        last_writer: BTreeMap::new(),
        ivars: BTreeMap::new(),
        ops: Vec::new(),
    };
    for _ in 0..inputs.repeat.max(1) {
        ctx.stmts(&entry.body)?;
    }
    Ok(Trace {
        ops: ctx.ops,
        reg_names: ctx.reg_names,
        entry: entry.name.clone(),
    })
}

impl<'a> LowerCtx<'a> {
    fn stmts(&mut self, body: &[Stmt]) -> Result<(), LowerError> {
        for s in body {
            match s {
                Stmt::Loop(l) => self.unroll(l)?,
                Stmt::Instr(i) => self.instr(i)?,
            }
        }
        Ok(())
    }

    fn unroll(&mut self, l: &Loop) -> Result<(), LowerError> {
        let lo = self.bound(&l.lower)?;
        let hi = self.bound(&l.upper)?;
        let mut i = lo;
        while (l.step > 0 && i < hi) || (l.step < 0 && i > hi) {
            self.ivars.insert(l.ivar.clone(), i);
            self.stmts(&l.body)?;
            i += l.step;
        }
        self.ivars.remove(&l.ivar);
        Ok(())
    }

    fn bound(&self, b: &Bound) -> Result<i64, LowerError> {
        match b {
            Bound::Const(v) => Ok(*v),
            Bound::Sym(name) => self
                .inputs
                .binds
                .get(name)
                .copied()
                .ok_or_else(|| LowerError::UnboundTripCount(name.clone())),
        }
    }

    fn reg(&mut self, name: &str) -> Reg {
        if let Some(r) = self.reg_ids.get(name) {
            return *r;
        }
        let r = Reg(self.reg_names.len() as u32);
        self.reg_names.push(name.to_string());
        self.reg_ids.insert(name.to_string(), r);
        r
    }

    /// Resolve a source name: enclosing ivar -> immediate, else register.
    fn operand(&mut self, name: &str) -> Operand {
        if let Some(v) = self.ivars.get(name) {
            return Operand::Imm(*v);
        }
        let reg = self.reg(name);
        Operand::Reg {
            reg,
            producer: self.last_writer.get(&reg).copied(),
        }
    }

    fn resolve_addr(&self, id: InstrId, addr: &AddrExpr) -> Result<(u64, u32), LowerError> {
        let layout = &self.layouts[&addr.base];
        let index = addr.index.eval(&self.ivars);
        if index < 0 || index as u64 >= layout.len {
            return Err(LowerError::OutOfBounds {
                id: id.0,
                base: addr.base.clone(),
                addr: layout
                    .base
                    .wrapping_add((index.wrapping_mul(layout.esz as i64)) as u64),
            });
        }
        Ok((layout.base + index as u64 * layout.esz as u64, layout.esz))
    }

    fn push(&mut self, pc: u64, pnd: bool, extra: u64, kind: DynKind) {
        let seq = self.ops.len() as Seq;
        if let Some(dst) = match &kind {
            DynKind::Load { dst, .. } | DynKind::Alu { dst, .. } => Some(*dst),
            _ => None,
        } {
            self.last_writer.insert(dst, seq);
        }
        self.ops.push(DynOp {
            seq,
            pc,
            pnd,
            addr_ready_latency: extra,
            kind,
        });
    }

    fn instr(&mut self, i: &Instr) -> Result<(), LowerError> {
        let extra = self.inputs.delays.get(&i.id.0).copied().unwrap_or(0);
        match &i.kind {
            InstrKind::Load { dst, addr, pnd } => {
                let (byte, size) = self.resolve_addr(i.id, addr)?;
                let dst = self.reg(dst);
                self.push(
                    i.id.pc(),
                    *pnd,
                    extra,
                    DynKind::Load {
                        dst,
                        addr: byte,
                        size,
                    },
                );
            }
            InstrKind::Store { addr, src } => {
                let (byte, size) = self.resolve_addr(i.id, addr)?;
                let value = self.operand(src);
                self.push(
                    i.id.pc(),
                    false,
                    extra,
                    DynKind::Store {
                        addr: byte,
                        size,
                        value,
                    },
                );
            }
            InstrKind::Alu { dst, lhs, op, rhs } => {
                let lhs = self.operand(lhs);
                let rhs = self.operand(rhs);
                let dst = self.reg(dst);
                self.push(
                    i.id.pc(),
                    false,
                    extra,
                    DynKind::Alu {
                        dst,
                        lhs,
                        op: *op,
                        rhs,
                    },
                );
            }
            InstrKind::Call { callee, summary } => {
                let mut writes = Vec::new();
                for effect in self
                    .inputs
                    .call_effects
                    .get(callee)
                    .map(|v| v.as_slice())
                    .unwrap_or(&[])
                {
                    if !summary.may_write.may_touch(&effect.array) {
                        return Err(LowerError::EffectOutsideSummary {
                            base: effect.array.clone(),
                        });
                    }
                    let addr = AddrExpr {
                        base: effect.array.clone(),
                        index: effect.index.clone(),
                    };
                    let (byte, size) = self.resolve_addr(i.id, &addr)?;
                    writes.push(MemWrite {
                        addr: byte,
                        size,
                        value: effect.value.eval(&self.ivars),
                    });
                }
                self.push(i.id.pc(), false, extra, DynKind::Call { writes });
            }
        }
        Ok(())
    }
}

/// Execute a trace strictly in sequence order. This is the golden reference
/// every out-of-order run must match; it never looks at pnd bits.
pub fn run_inorder(trace: &Trace, init: &MachineState) -> MachineState {
    let mut state = init.clone();
    let mut reg_vals: Vec<i64> = trace
        .reg_names
        .iter()
        .map(|name| state.reg(name))
        .collect();
    let value = |vals: &[i64], op: &Operand| match op {
        Operand::Imm(v) => *v,
        Operand::Reg { reg, .. } => vals[reg.0 as usize],
    };
    for op in &trace.ops {
        match &op.kind {
            DynKind::Load { dst, addr, size } => {
                let v = state.read_mem(*addr, *size);
                reg_vals[dst.0 as usize] = v;
                state.registers.insert(trace.reg_name(*dst).to_string(), v);
            }
            DynKind::Store { addr, size, value: v } => {
                let v = value(&reg_vals, v);
                state.write_mem(*addr, *size, v);
            }
            DynKind::Alu { dst, lhs, op: alu, rhs } => {
                let v = alu.apply(value(&reg_vals, lhs), value(&reg_vals, rhs));
                reg_vals[dst.0 as usize] = v;
                state.registers.insert(trace.reg_name(*dst).to_string(), v);
            }
            DynKind::Call { writes } => {
                for w in writes {
                    state.write_mem(w.addr, w.size, w.value);
                }
            }
        }
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mir::parse_program;
    use crate::samples::{LISTING1, LISTING2};

    fn listing1_inputs(n: i64) -> LoweringInputs {
        parse_inputs(&format!(
            "bind n = {n}\n\
             place a = 0x1000 len 256 esz 4\n\
             place b = 0x2000 len 256 esz 4\n\
             fill a = 1\n\
             fill b = 2\n"
        ))
        .unwrap()
    }

    #[test]
    fn listing1_unrolls_to_four_ops_per_iteration() {
        let p = parse_program(LISTING1).unwrap();
        let trace = lower(&p, &listing1_inputs(4)).unwrap();
        assert_eq!(trace.ops.len(), 16);
        // seq strictly increasing and equal to position
        for (i, op) in trace.ops.iter().enumerate() {
            assert_eq!(op.seq, i as u64);
        }
        // First iteration: load b[0], load a[0], alu, store a[0]
        assert_eq!(trace.ops[0].pc, 0);
        assert!(matches!(
            trace.ops[0].kind,
            DynKind::Load { addr: 0x2000, size: 4, .. }
        ));
        assert!(matches!(
            trace.ops[3].kind,
            DynKind::Store { addr: 0x1000, size: 4, .. }
        ));
        // Second iteration advances by the element size.
        assert!(matches!(
            trace.ops[4].kind,
            DynKind::Load { addr: 0x2004, .. }
        ));
    }

    #[test]
    fn zero_trip_count_gives_empty_stream() {
        let p = parse_program(LISTING1).unwrap();
        let trace = lower(&p, &listing1_inputs(0)).unwrap();
        assert!(trace.ops.is_empty());
    }

    #[test]
    fn listing2_orders_first_loop_before_second() {
        let p = parse_program(LISTING2).unwrap();
        let inputs = parse_inputs(
            "bind n = 8\nplace a = 0x1000 len 8 esz 4\nplace b = 0x2000 len 8 esz 4\n",
        )
        .unwrap();
        let trace = lower(&p, &inputs).unwrap();
        assert_eq!(trace.ops.len(), 8 + 4 * 8);
        assert!(trace.ops[..8].iter().all(|op| op.is_store_like()));
    }

    #[test]
    fn listing1_inorder_semantics() {
        let p = parse_program(LISTING1).unwrap();
        let inputs = listing1_inputs(4);
        let trace = lower(&p, &inputs).unwrap();
        let init = inputs.initial_state(&p).unwrap();
        let state = run_inorder(&trace, &init);
        for i in 0..4 {
            assert_eq!(state.read_mem(0x1000 + 4 * i, 4), 3); // a[i] = 1 + 2
            assert_eq!(state.read_mem(0x2000 + 4 * i, 4), 2); // b untouched
        }
    }

    #[test]
    fn listing2_inorder_semantics() {
        // Hand-evaluated: first loop writes b[i] = i, second does a[i] += b[i].
        let p = parse_program(LISTING2).unwrap();
        let inputs = parse_inputs(
            "bind n = 4\nplace a = 0x1000 len 4 esz 4\nplace b = 0x2000 len 4 esz 4\nfill b = 9\n",
        )
        .unwrap();
        let trace = lower(&p, &inputs).unwrap();
        let state = run_inorder(&trace, &inputs.initial_state(&p).unwrap());
        for i in 0..4i64 {
            assert_eq!(state.read_mem(0x2000 + 4 * i as u64, 4), i);
            assert_eq!(state.read_mem(0x1000 + 4 * i as u64, 4), i);
        }
    }

    #[test]
    fn empty_stream_leaves_state_unchanged() {
        let trace = Trace {
            ops: Vec::new(),
            reg_names: Vec::new(),
            entry: "f".into(),
        };
        let mut init = MachineState::default();
        init.write_mem(0x10, 4, 42);
        assert_eq!(run_inorder(&trace, &init), init);
    }

    #[test]
    fn pnd_bits_survive_lowering_and_do_not_change_semantics() {
        let p = parse_program(LISTING1).unwrap();
        let (labelled, _) = crate::analysis::label_pass(&p);
        let inputs = listing1_inputs(4);
        let plain = lower(&p, &inputs).unwrap();
        let flagged = lower(&labelled, &inputs).unwrap();
        assert!(flagged.ops.iter().step_by(4).all(|op| op.pnd));
        assert!(plain.ops.iter().all(|op| !op.pnd));
        let init = inputs.initial_state(&p).unwrap();
        assert_eq!(run_inorder(&plain, &init), run_inorder(&flagged, &init));
    }

    #[test]
    fn out_of_bounds_is_an_error() {
        let p = parse_program(LISTING1).unwrap();
        let inputs = parse_inputs(
            "bind n = 4\nplace a = 0x1000 len 2 esz 4\nplace b = 0x2000 len 8 esz 4\n",
        )
        .unwrap();
        let err = lower(&p, &inputs).unwrap_err();
        assert!(matches!(err, LowerError::OutOfBounds { base, .. } if base == "a"));
    }

    #[test]
    fn unbound_trip_count_is_an_error() {
        let p = parse_program(LISTING1).unwrap();
        let inputs =
            parse_inputs("place a = 0x1000 len 8 esz 4\nplace b = 0x2000 len 8 esz 4\n").unwrap();
        assert!(matches!(
            lower(&p, &inputs),
            Err(LowerError::UnboundTripCount(name)) if name == "n"
        ));
    }

    #[test]
    fn store_of_induction_variable_folds_to_immediate() {
        let p = parse_program(LISTING2).unwrap();
        let inputs = parse_inputs(
            "bind n = 2\nplace a = 0x1000 len 2 esz 4\nplace b = 0x2000 len 2 esz 4\n",
        )
        .unwrap();
        let trace = lower(&p, &inputs).unwrap();
        assert!(matches!(
            trace.ops[1].kind,
            DynKind::Store { value: Operand::Imm(1), .. }
        ));
    }

    #[test]
    fn producers_track_last_writer() {
        let p = parse_program(LISTING1).unwrap();
        let trace = lower(&p, &listing1_inputs(2)).unwrap();
        // Iteration 1's alu reads the registers written by iteration 1's loads.
        let DynKind::Alu { lhs, rhs, .. } = trace.ops[6].kind else {
            panic!()
        };
        assert_eq!(
            lhs,
            Operand::Reg { reg: Reg(0), producer: Some(4) }
        );
        assert_eq!(
            rhs,
            Operand::Reg { reg: Reg(1), producer: Some(5) }
        );
    }

    #[test]
    fn sign_extension_round_trips_negative_values() {
        let mut st = MachineState::default();
        st.write_mem(0x0, 4, -1);
        assert_eq!(st.read_mem(0x0, 4), -1);
        st.write_mem(0x8, 2, -300);
        assert_eq!(st.read_mem(0x8, 2), -300);
        st.write_mem(0x10, 8, i64::MIN);
        assert_eq!(st.read_mem(0x10, 8), i64::MIN);
    }
}
