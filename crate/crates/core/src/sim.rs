//! Cycle-based out-of-order window model.
//!
//! The model covers the machinery that memory dependence prediction lives
//! in: dispatch into an instruction queue, reorder buffer and load/store
//! queues; speculative load issue past stores whose addresses have not
//! resolved; store-to-load forwarding; violation detection when a store's
//! address resolves; squash and replay from the violating load; in-order
//! commit with stores writing memory at commit.
//!
//! Per-cycle order: completions feed commit, then stores execute (address
//! resolution + load-queue violation search), then loads and alus issue,
//! then up to `width` new ops dispatch. A load issues as soon as its
//! operands are ready unless the predictor holds it behind an in-flight
//! store; older stores with unknown addresses are ignored — that is the
//! speculation the violation machinery backstops.
//!
//! There is no cache hierarchy: loads that reach memory pay a flat
//! `load_latency`. Address operands follow the same scoreboard as data
//! operands, plus a per-instruction extra latency that scenarios use to
//! force late-resolving stores.

use crate::lower::{DynKind, DynOp, MachineState, Operand, Seq, Trace};
use crate::storesets::{PredictorConfig, StoreSetsPredictor};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpuConfig {
    pub width: u64,
    pub iq_entries: usize,
    pub rob_entries: usize,
    pub lq_entries: usize,
    pub sq_entries: usize,
    pub predictor: PredictorConfig,
    #[serde(default = "default_load_latency")]
    pub load_latency: u64,
    #[serde(default = "default_alu_latency")]
    pub alu_latency: u64,
    #[serde(default = "default_forward_latency")]
    pub forward_latency: u64,
    #[serde(default = "default_squash_penalty")]
    pub squash_penalty: u64,
    /// Hold a store behind its same-set predecessor from the predictor.
    #[serde(default = "default_true")]
    pub store_store_ordering: bool,
}

fn default_load_latency() -> u64 {
    4
}
fn default_alu_latency() -> u64 {
    1
}
fn default_forward_latency() -> u64 {
    1
}
fn default_squash_penalty() -> u64 {
    10
}
fn default_true() -> bool {
    true
}

impl CpuConfig {
    fn sized(width: u64, iq: usize, rob: usize, lsq: usize, tables: usize) -> Self {
        CpuConfig {
            width,
            iq_entries: iq,
            rob_entries: rob,
            // One published LSQ size applies to each of LQ and SQ.
            lq_entries: lsq,
            sq_entries: lsq,
            predictor: PredictorConfig::new(tables, tables, tables as u64 * 244),
            load_latency: default_load_latency(),
            alu_latency: default_alu_latency(),
            forward_latency: default_forward_latency(),
            squash_penalty: default_squash_penalty(),
            store_store_ordering: true,
        }
    }

    /// Modern-phone-class core.
    pub fn small() -> Self {
        Self::sized(8, 64, 192, 32, 32)
    }

    /// Workstation-class core.
    pub fn large() -> Self {
        Self::sized(12, 192, 576, 96, 128)
    }

    /// Next-generation workstation-class core.
    pub fn xlarge() -> Self {
        Self::sized(12, 384, 1024, 192, 256)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "small" => Some(Self::small()),
            "large" => Some(Self::large()),
            "xlarge" => Some(Self::xlarge()),
            _ => None,
        }
    }

    pub fn assert_valid(&self) {
        assert!(self.width > 0);
        assert!(self.iq_entries > 0 && self.rob_entries > 0);
        assert!(self.lq_entries > 0 && self.sq_entries > 0);
        assert!(self.load_latency > 0 && self.alu_latency > 0 && self.forward_latency > 0);
    }
}

/// Counters for one simulation run. `cpi` and `lpki` are derived exactly
/// from the integer fields.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    pub cycles: u64,
    pub committed_insts: u64,
    pub mdp_lookups: u64,
    pub bypassed_lookups: u64,
    pub violations: u64,
    pub squashed_ops: u64,
    pub index_collisions: u64,
    pub false_dependencies: u64,
    pub forwardings: u64,
    pub trainings: u64,
    pub clears: u64,
    pub cpi: f64,
    pub lpki: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SimEventKind {
    Dispatch,
    Issue,
    StoreExecute,
    Forward,
    Complete,
    Commit,
    Violation,
    Squash,
    TablesCleared,
}

/// One line of the per-cycle trace log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimEvent {
    pub cycle: u64,
    pub kind: SimEventKind,
    pub seq: Seq,
    pub pc: u64,
    pub addr: Option<u64>,
}

impl std::fmt::Display for SimEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:6} {:14} seq={:<6} pc={:#06x}",
            self.cycle,
            format!("{:?}", self.kind).to_lowercase(),
            self.seq,
            self.pc
        )?;
        if let Some(a) = self.addr {
            write!(f, " addr={a:#x}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotState {
    Dispatched,
    Ready,
    Issued,
    Completed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LoadSource {
    Memory,
    Forward(Seq),
}

/// One in-flight op. States move forward only; squashed slots leave the
/// window. `predicted_dep` is only ever set on non-PND loads.
#[derive(Debug, Clone)]
struct WindowSlot {
    seq: Seq,
    state: SlotState,
    dispatch_cycle: u64,
    /// First cycle all register operands were available (at the earliest
    /// the cycle after dispatch). The op's extra latency counts from here.
    ready_since: Option<u64>,
    issue_cycle: Option<u64>,
    complete_cycle: Option<u64>,
    /// Store/call: address resolved and violation search done.
    addr_known: bool,
    predicted_dep: Option<Seq>,
    /// Load was at some point ready to issue except for its predicted dep.
    pred_held: bool,
    /// Same-set predecessor returned by the predictor at dispatch.
    store_pred: Option<Seq>,
    source: Option<LoadSource>,
    value: Option<i64>,
}

/// The simulator: a configuration plus a predictor whose state persists
/// across runs until [`Simulator::reset`].
pub struct Simulator {
    cfg: CpuConfig,
    predictor: StoreSetsPredictor,
}

/// Result of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub state: MachineState,
    pub metrics: RunMetrics,
}

impl Simulator {
    pub fn new(cfg: CpuConfig) -> Self {
        cfg.assert_valid();
        Simulator {
            predictor: StoreSetsPredictor::new(cfg.predictor),
            cfg,
        }
    }

    /// Clear all predictor state and counters.
    pub fn reset(&mut self) {
        self.predictor = StoreSetsPredictor::new(self.cfg.predictor);
    }

    pub fn config(&self) -> &CpuConfig {
        &self.cfg
    }

    pub fn predictor(&self) -> &StoreSetsPredictor {
        &self.predictor
    }

    /// Run a trace to completion. With `labels_enabled` false every pnd bit
    /// is treated as clear, which is how the unlabelled baseline is modelled.
    pub fn run(&mut self, trace: &Trace, init: &MachineState, labels_enabled: bool) -> SimRun {
        self.run_inner(trace, init, labels_enabled, None).0
    }

    /// As [`run`](Self::run), also returning the per-cycle event log.
    pub fn run_logged(
        &mut self,
        trace: &Trace,
        init: &MachineState,
        labels_enabled: bool,
    ) -> (SimRun, Vec<SimEvent>) {
        let (run, log) = self.run_inner(trace, init, labels_enabled, Some(Vec::new()));
        (run, log.unwrap())
    }

    fn run_inner(
        &mut self,
        trace: &Trace,
        init: &MachineState,
        labels_enabled: bool,
        log: Option<Vec<SimEvent>>,
    ) -> (SimRun, Option<Vec<SimEvent>>) {
        let before = self.predictor.counters();
        let mut engine = Engine {
            trace,
            cfg: &self.cfg,
            predictor: &mut self.predictor,
            labels_enabled,
            window: VecDeque::new(),
            cursor: 0,
            cycle: 0,
            dispatch_stall_until: 0,
            iq_occ: 0,
            lq_occ: 0,
            sq_occ: 0,
            state: init.clone(),
            init_regs: trace.reg_names.iter().map(|n| init.reg(n)).collect(),
            values: HashMap::new(),
            committed: 0,
            violations: 0,
            squashed_ops: 0,
            false_dependencies: 0,
            forwardings: 0,
            last_commit_cycle: 0,
            log,
        };
        engine.run_to_completion();
        let committed = engine.committed;
        let cycles = engine.cycle;
        let violations = engine.violations;
        let squashed_ops = engine.squashed_ops;
        let false_dependencies = engine.false_dependencies;
        let forwardings = engine.forwardings;
        let state = std::mem::take(&mut engine.state);
        let log = engine.log.take();
        drop(engine);
        let after = self.predictor.counters();
        let lookups = after.lookups - before.lookups;
        let metrics = RunMetrics {
            cycles,
            committed_insts: committed,
            mdp_lookups: lookups,
            bypassed_lookups: after.bypassed_lookups - before.bypassed_lookups,
            violations,
            squashed_ops,
            index_collisions: after.index_collisions - before.index_collisions,
            false_dependencies,
            forwardings,
            trainings: after.trainings - before.trainings,
            clears: after.clears - before.clears,
            cpi: if committed == 0 {
                0.0
            } else {
                cycles as f64 / committed as f64
            },
            lpki: if committed == 0 {
                0.0
            } else {
                1000.0 * lookups as f64 / committed as f64
            },
        };
        (SimRun { state, metrics }, log)
    }
}

/// One-shot convenience wrapper around a fresh [`Simulator`].
pub fn simulate(
    trace: &Trace,
    cfg: &CpuConfig,
    init: &MachineState,
    labels_enabled: bool,
) -> SimRun {
    Simulator::new(cfg.clone()).run(trace, init, labels_enabled)
}

struct Engine<'a> {
    trace: &'a Trace,
    cfg: &'a CpuConfig,
    predictor: &'a mut StoreSetsPredictor,
    labels_enabled: bool,
    window: VecDeque<WindowSlot>,
    cursor: usize,
    cycle: u64,
    dispatch_stall_until: u64,
    iq_occ: usize,
    lq_occ: usize,
    sq_occ: usize,
    /// Committed architectural state (stores write here at commit).
    state: MachineState,
    init_regs: Vec<i64>,
    /// Results of completed ops by seq; squash removes its range.
    values: HashMap<Seq, i64>,
    committed: u64,
    violations: u64,
    squashed_ops: u64,
    false_dependencies: u64,
    forwardings: u64,
    last_commit_cycle: u64,
    log: Option<Vec<SimEvent>>,
}

enum IssueAction {
    None,
    HeldByPrediction,
    WaitOnStore,
    IssueLoad {
        source: LoadSource,
        value: i64,
        complete: u64,
        false_dep: bool,
    },
    IssueAlu {
        value: i64,
    },
}

impl<'a> Engine<'a> {
    fn op(&self, seq: Seq) -> &'a DynOp {
        &self.trace.ops[seq as usize]
    }

    fn emit(&mut self, kind: SimEventKind, seq: Seq, addr: Option<u64>) {
        if let Some(log) = &mut self.log {
            log.push(SimEvent {
                cycle: self.cycle,
                kind,
                seq,
                pc: self.trace.ops[seq as usize].pc,
                addr,
            });
        }
    }

    fn run_to_completion(&mut self) {
        while self.cursor < self.trace.ops.len() || !self.window.is_empty() {
            self.complete_stage();
            self.ready_scan();
            self.commit_stage();
            self.watchdog();
            self.store_execute_stage();
            self.issue_stage();
            self.dispatch_stage();
            self.cycle += 1;
        }
    }

    /// Record when each waiting op first has all register operands
    /// available; injected latency counts from that point.
    fn ready_scan(&mut self) {
        for i in 0..self.window.len() {
            let slot = &self.window[i];
            if slot.state != SlotState::Dispatched
                || slot.ready_since.is_some()
                || self.cycle <= slot.dispatch_cycle
            {
                continue;
            }
            if self.operands_ready(self.op(slot.seq)) {
                let slot = &mut self.window[i];
                slot.ready_since = Some(self.cycle);
                slot.state = SlotState::Ready;
            }
        }
    }

    fn watchdog(&self) {
        if self.window.is_empty() && self.cursor >= self.trace.ops.len() {
            return;
        }
        let budget = self.cfg.rob_entries as u64 * 64;
        assert!(
            self.cycle - self.last_commit_cycle <= budget,
            "no forward progress: nothing committed for {budget} cycles (cycle {})",
            self.cycle
        );
    }

    fn operand_ready(&self, op: &Operand) -> bool {
        match op {
            Operand::Imm(_) => true,
            Operand::Reg { producer: None, .. } => true,
            Operand::Reg {
                producer: Some(s), ..
            } => self.values.contains_key(s),
        }
    }

    fn operand_value(&self, op: &Operand) -> i64 {
        match op {
            Operand::Imm(v) => *v,
            Operand::Reg {
                reg,
                producer: None,
            } => self.init_regs[reg.0 as usize],
            Operand::Reg {
                producer: Some(s), ..
            } => self.values[s],
        }
    }

    fn operands_ready(&self, op: &DynOp) -> bool {
        op.src_operands().iter().all(|o| self.operand_ready(o))
    }

    /// Operands ready and past the op's extra latency.
    fn eligible(&self, slot: &WindowSlot, op: &DynOp) -> bool {
        match slot.ready_since {
            Some(ready) => self.cycle >= ready + op.addr_ready_latency,
            None => false,
        }
    }

    fn slot_pos(&self, seq: Seq) -> Option<usize> {
        self.window.binary_search_by_key(&seq, |s| s.seq).ok()
    }

    // ---- per-cycle stages ------------------------------------------------

    fn complete_stage(&mut self) {
        for i in 0..self.window.len() {
            let slot = &self.window[i];
            if slot.state == SlotState::Issued && slot.complete_cycle.unwrap() <= self.cycle {
                let seq = slot.seq;
                let value = slot.value;
                self.window[i].state = SlotState::Completed;
                if self.op(seq).dst().is_some() {
                    self.values
                        .insert(seq, value.expect("completed op has a value"));
                }
                self.emit(SimEventKind::Complete, seq, None);
            }
        }
    }

    fn commit_stage(&mut self) {
        let mut done = 0;
        while done < self.cfg.width {
            let Some(front) = self.window.front() else {
                break;
            };
            if front.state != SlotState::Completed {
                break;
            }
            let slot = self.window.pop_front().unwrap();
            let op = self.op(slot.seq);
            match &op.kind {
                DynKind::Store { addr, size, .. } => {
                    self.state.write_mem(*addr, *size, slot.value.unwrap());
                    self.sq_occ -= 1;
                }
                DynKind::Call { writes } => {
                    for w in writes {
                        self.state.write_mem(w.addr, w.size, w.value);
                    }
                    self.sq_occ -= 1;
                }
                DynKind::Load { dst, .. } => {
                    let name = self.trace.reg_name(*dst).to_string();
                    self.state.registers.insert(name, slot.value.unwrap());
                    self.lq_occ -= 1;
                }
                DynKind::Alu { dst, .. } => {
                    let name = self.trace.reg_name(*dst).to_string();
                    self.state.registers.insert(name, slot.value.unwrap());
                }
            }
            self.committed += 1;
            self.last_commit_cycle = self.cycle;
            self.emit(SimEventKind::Commit, slot.seq, None);
            done += 1;
        }
    }

    /// Resolve store/call addresses. A store executes once its operands are
    /// ready (address and data follow one scoreboard) plus any injected
    /// latency; execution computes the value, publishes the address for
    /// disambiguation, and searches the load queue for younger loads that
    /// issued too early.
    fn store_execute_stage(&mut self) {
        'rescan: loop {
            for i in 0..self.window.len() {
                let slot = &self.window[i];
                let op = self.op(slot.seq);
                if !op.is_store_like() || slot.addr_known {
                    continue;
                }
                if !self.eligible(slot, op) || !self.store_pred_satisfied(slot) {
                    continue;
                }
                let seq = slot.seq;
                let value = match &op.kind {
                    DynKind::Store { value, .. } => Some(self.operand_value(value)),
                    _ => None,
                };
                {
                    let slot = &mut self.window[i];
                    slot.addr_known = true;
                    slot.value = value;
                    slot.state = SlotState::Issued;
                    slot.issue_cycle = Some(self.cycle);
                    slot.complete_cycle = Some(self.cycle + 1);
                }
                self.iq_occ -= 1;
                self.predictor.store_issued(op.pc, seq);
                self.emit(
                    SimEventKind::StoreExecute,
                    seq,
                    op.ranges().first().map(|r| r.0),
                );
                if let Some(victim) = self.find_violation(seq) {
                    self.squash(victim, seq);
                    continue 'rescan;
                }
            }
            break;
        }
    }

    fn store_pred_satisfied(&self, slot: &WindowSlot) -> bool {
        if !self.cfg.store_store_ordering {
            return true;
        }
        let Some(pred) = slot.store_pred else {
            return true;
        };
        if pred >= slot.seq {
            return true;
        }
        match self.slot_pos(pred) {
            None => true,
            Some(i) => matches!(
                self.window[i].state,
                SlotState::Issued | SlotState::Completed
            ),
        }
    }

    /// Oldest younger load that already issued with an overlapping address
    /// and did not get its value from this store or a younger one.
    fn find_violation(&self, store_seq: Seq) -> Option<Seq> {
        let ranges = self.op(store_seq).ranges();
        for slot in &self.window {
            if slot.seq <= store_seq {
                continue;
            }
            let op = self.op(slot.seq);
            if !op.is_load() || !matches!(slot.state, SlotState::Issued | SlotState::Completed) {
                continue;
            }
            if let Some(LoadSource::Forward(src)) = slot.source {
                if src > store_seq {
                    continue; // value came from a newer store; unaffected
                }
            }
            let lrange = op.ranges()[0];
            if ranges.iter().any(|r| ranges_overlap(*r, lrange)) {
                return Some(slot.seq);
            }
        }
        None
    }

    fn issue_stage(&mut self) {
        for i in 0..self.window.len() {
            let action = self.issue_action(i);
            let seq = self.window[i].seq;
            match action {
                IssueAction::None => {}
                IssueAction::HeldByPrediction => self.window[i].pred_held = true,
                IssueAction::WaitOnStore => {}
                IssueAction::IssueLoad {
                    source,
                    value,
                    complete,
                    false_dep,
                } => {
                    let addr = self.op(seq).ranges()[0].0;
                    {
                        let slot = &mut self.window[i];
                        slot.state = SlotState::Issued;
                        slot.issue_cycle = Some(self.cycle);
                        slot.complete_cycle = Some(complete);
                        slot.source = Some(source);
                        slot.value = Some(value);
                    }
                    self.iq_occ -= 1;
                    if false_dep {
                        self.false_dependencies += 1;
                    }
                    if let LoadSource::Forward(_) = source {
                        self.forwardings += 1;
                        self.emit(SimEventKind::Forward, seq, Some(addr));
                    }
                    self.emit(SimEventKind::Issue, seq, Some(addr));
                }
                IssueAction::IssueAlu { value } => {
                    let complete = self.cycle + self.cfg.alu_latency;
                    {
                        let slot = &mut self.window[i];
                        slot.state = SlotState::Issued;
                        slot.issue_cycle = Some(self.cycle);
                        slot.complete_cycle = Some(complete);
                        slot.value = Some(value);
                    }
                    self.iq_occ -= 1;
                    self.emit(SimEventKind::Issue, seq, None);
                }
            }
        }
    }

    fn issue_action(&self, i: usize) -> IssueAction {
        let slot = &self.window[i];
        if !matches!(slot.state, SlotState::Dispatched | SlotState::Ready) {
            return IssueAction::None;
        }
        let op = self.op(slot.seq);
        match &op.kind {
            DynKind::Store { .. } | DynKind::Call { .. } => IssueAction::None,
            DynKind::Alu {
                lhs, rhs, op: alu, ..
            } => {
                if !self.eligible(slot, op) {
                    IssueAction::None
                } else {
                    IssueAction::IssueAlu {
                        value: alu.apply(self.operand_value(lhs), self.operand_value(rhs)),
                    }
                }
            }
            DynKind::Load { addr, size, .. } => {
                if !self.eligible(slot, op) {
                    return IssueAction::None;
                }
                if let Some(pred) = slot.predicted_dep {
                    if let Some(p) = self.slot_pos(pred) {
                        if matches!(
                            self.window[p].state,
                            SlotState::Dispatched | SlotState::Ready
                        ) {
                            return IssueAction::HeldByPrediction;
                        }
                    }
                }
                let lrange = (*addr, *size);
                // Youngest older store-like op with a known overlapping
                // address decides: exact store match forwards, anything
                // else makes the load wait. Unknown addresses are ignored.
                let mut hit: Option<(Seq, bool, Option<i64>)> = None;
                for other in self.window.iter().take(i) {
                    if !other.addr_known {
                        continue;
                    }
                    let oop = self.op(other.seq);
                    if !oop.is_store_like() {
                        continue;
                    }
                    let overlaps = oop.ranges().iter().any(|r| ranges_overlap(*r, lrange));
                    if !overlaps {
                        continue;
                    }
                    let exact = matches!(
                        &oop.kind,
                        DynKind::Store { addr: sa, size: ss, .. } if (*sa, *ss) == lrange
                    );
                    hit = Some((other.seq, exact, other.value));
                }
                let false_dep = slot.pred_held
                    && slot
                        .predicted_dep
                        .map(|p| {
                            let pranges = self.op(p).ranges();
                            !pranges.iter().any(|r| ranges_overlap(*r, lrange))
                        })
                        .unwrap_or(false);
                match hit {
                    Some((src, true, value)) => IssueAction::IssueLoad {
                        source: LoadSource::Forward(src),
                        value: value.expect("executed store has a value"),
                        complete: self.cycle + self.cfg.forward_latency,
                        false_dep,
                    },
                    Some((_, false, _)) => IssueAction::WaitOnStore,
                    None => IssueAction::IssueLoad {
                        source: LoadSource::Memory,
                        value: self.state.read_mem(*addr, *size),
                        complete: self.cycle + self.cfg.load_latency,
                        false_dep,
                    },
                }
            }
        }
    }

    fn dispatch_stage(&mut self) {
        if self.cycle < self.dispatch_stall_until {
            return;
        }
        let mut done = 0;
        while done < self.cfg.width && self.cursor < self.trace.ops.len() {
            if self.window.len() >= self.cfg.rob_entries || self.iq_occ >= self.cfg.iq_entries {
                break;
            }
            let op = &self.trace.ops[self.cursor];
            match &op.kind {
                DynKind::Load { .. } if self.lq_occ >= self.cfg.lq_entries => break,
                DynKind::Store { .. } | DynKind::Call { .. }
                    if self.sq_occ >= self.cfg.sq_entries =>
                {
                    break
                }
                _ => {}
            }
            let seq = op.seq;
            let pnd_eff = op.pnd && self.labels_enabled;
            let mut predicted_dep = None;
            let mut store_pred = None;
            if op.is_load() {
                predicted_dep = self
                    .predictor
                    .lookup_load(op.pc, pnd_eff)
                    .filter(|p| *p < seq);
                self.lq_occ += 1;
            } else if op.is_store_like() {
                store_pred = self.predictor.dispatch_store(op.pc, seq);
                self.sq_occ += 1;
            }
            if op.is_mem() && self.predictor.memop_tick() {
                self.emit(SimEventKind::TablesCleared, seq, None);
            }
            self.iq_occ += 1;
            self.window.push_back(WindowSlot {
                seq,
                state: SlotState::Dispatched,
                dispatch_cycle: self.cycle,
                ready_since: None,
                issue_cycle: None,
                complete_cycle: None,
                addr_known: false,
                predicted_dep,
                pred_held: false,
                store_pred,
                source: None,
                value: None,
            });
            self.emit(SimEventKind::Dispatch, seq, None);
            self.cursor += 1;
            done += 1;
        }
    }

    /// Roll back from the violating load onwards: the load itself
    /// re-executes. Train the predictor on the pair, drop every squashed
    /// op from the window, rewind the dispatch cursor, and stall dispatch
    /// for the refetch bubble.
    fn squash(&mut self, load_seq: Seq, store_seq: Seq) {
        let load_op = self.op(load_seq);
        let store_op = self.op(store_seq);
        self.violations += 1;
        self.emit(
            SimEventKind::Violation,
            load_seq,
            store_op.ranges().first().map(|r| r.0),
        );
        self.predictor.train_violation(
            load_op.pc,
            store_op.pc,
            load_op.pnd && self.labels_enabled,
        );
        let keep = self
            .window
            .iter()
            .position(|s| s.seq >= load_seq)
            .unwrap_or(self.window.len());
        while self.window.len() > keep {
            let slot = self.window.pop_back().unwrap();
            let op = self.op(slot.seq);
            if op.is_load() {
                self.lq_occ -= 1;
            } else if op.is_store_like() {
                self.sq_occ -= 1;
            }
            if matches!(slot.state, SlotState::Dispatched | SlotState::Ready) {
                self.iq_occ -= 1;
            }
            self.values.remove(&slot.seq);
            self.squashed_ops += 1;
        }
        self.predictor.squash_from(load_seq);
        self.cursor = load_seq as usize;
        self.dispatch_stall_until = self.cycle + self.cfg.squash_penalty;
        self.emit(SimEventKind::Squash, load_seq, None);
    }
}

fn ranges_overlap(a: (u64, u32), b: (u64, u32)) -> bool {
    a.0 < b.0 + b.1 as u64 && b.0 < a.0 + a.1 as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lower::{lower, parse_inputs, run_inorder};
    use crate::mir::parse_program;

    fn tiny_cfg() -> CpuConfig {
        CpuConfig {
            width: 2,
            iq_entries: 8,
            rob_entries: 16,
            lq_entries: 4,
            sq_entries: 4,
            predictor: PredictorConfig::new(8, 8, 64),
            load_latency: 4,
            alu_latency: 1,
            forward_latency: 1,
            squash_penalty: 3,
            store_store_ordering: true,
        }
    }

    fn prep(text: &str, inputs: &str) -> (Trace, MachineState) {
        let p = parse_program(text).unwrap();
        let inputs = parse_inputs(inputs).unwrap();
        let trace = lower(&p, &inputs).unwrap();
        let init = inputs.initial_state(&p).unwrap();
        (trace, init)
    }

    #[test]
    fn empty_trace_runs_zero_cycles() {
        let (trace, init) = prep("fn f(int n) {\n}\n", "");
        let run = simulate(&trace, &tiny_cfg(), &init, true);
        assert_eq!(run.metrics.cycles, 0);
        assert_eq!(run.metrics.committed_insts, 0);
        assert_eq!(run.state, init);
    }

    #[test]
    fn single_load_timing() {
        let (trace, init) = prep(
            "array t[4] esz 4\nfn f(int n) { load r0 = t[1] }",
            "place t = 0x100\ninit t = 5 6 7 8\n",
        );
        let mut sim = Simulator::new(tiny_cfg());
        let (run, log) = sim.run_logged(&trace, &init, true);
        // dispatch at 0, issue at 1 (empty store queue), complete at 1+4,
        // commit at 5, so 6 cycles total.
        let issue = log.iter().find(|e| e.kind == SimEventKind::Issue).unwrap();
        assert_eq!(issue.cycle, 1);
        assert_eq!(issue.addr, Some(0x104));
        let commit = log.iter().find(|e| e.kind == SimEventKind::Commit).unwrap();
        assert_eq!(commit.cycle, 5);
        assert_eq!(run.metrics.cycles, 6);
        assert_eq!(run.state.registers["r0"], 6);
        assert_eq!(run.metrics.violations, 0);
    }

    #[test]
    fn store_to_load_forwarding() {
        // Store then same-address load; the load forwards instead of
        // reading memory.
        let text = "\
array t[4] esz 4
fn f(int n) {
  alu v = x + y
  store t[2] = v
  load r0 = t[2]
}
";
        let (trace, init) = prep(text, "place t = 0x0\nfill t = 9\n");
        let run = simulate(&trace, &tiny_cfg(), &init, true);
        assert_eq!(run.metrics.forwardings, 1);
        assert_eq!(run.metrics.violations, 0);
        assert_eq!(run.state.registers["r0"], 0); // x + y = 0 + 0
        assert_eq!(run.state.read_mem(8, 4), 0);
    }

    #[test]
    fn late_store_address_causes_violation_and_rollback_stays_correct() {
        let text = "\
array t[4] esz 4
fn f(int n) {
  alu v = x + y
  store t[2] = v
  load r0 = t[2]
}
";
        // Delay the store's address resolution so the load issues first.
        let (trace, init) = prep(text, "place t = 0x0\nfill t = 9\ndelay 1 = 8\n");
        let mut sim = Simulator::new(tiny_cfg());
        let (run, log) = sim.run_logged(&trace, &init, true);
        assert_eq!(run.metrics.violations, 1);
        assert!(run.metrics.squashed_ops >= 1);
        assert_eq!(
            run.state.registers["r0"], 0,
            "load must replay and see the store"
        );
        assert!(log.iter().any(|e| e.kind == SimEventKind::Violation));
        assert_eq!(run.state, run_inorder(&trace, &init));
    }

    #[test]
    fn unknown_address_stores_are_ignored_by_load_issue() {
        // A delayed store to a *different* address does not hold the load.
        let text = "\
array t[8] esz 4
fn f(int n) {
  alu v = x + y
  store t[0] = v
  load r0 = t[4]
}
";
        let (trace, init) = prep(text, "place t = 0x0\nfill t = 3\ndelay 1 = 20\n");
        let mut sim = Simulator::new(tiny_cfg());
        let (run, log) = sim.run_logged(&trace, &init, true);
        let issue = log
            .iter()
            .find(|e| e.kind == SimEventKind::Issue && e.seq == 2)
            .unwrap();
        let dispatch = log
            .iter()
            .find(|e| e.kind == SimEventKind::Dispatch && e.seq == 2)
            .unwrap();
        assert_eq!(
            issue.cycle,
            dispatch.cycle + 1,
            "load issues immediately past the unknown store"
        );
        assert_eq!(run.metrics.violations, 0);
        assert_eq!(run.state.registers["r0"], 3);
    }

    #[test]
    fn overlapping_but_not_exact_store_makes_the_load_wait() {
        // 8-byte store over two 4-byte elements, 4-byte load of the upper
        // half: no forward, the load waits for the store to commit.
        let text = "\
array w[2] esz 8
array t[4] esz 4
fn f(int n) {
  store w[0] = x
  load r0 = t[1]
}
";
        let (trace, init) = prep(text, "place w = 0x0\nplace t = 0x0 \ninit t = 11 22 33 44\n");
        let run = simulate(&trace, &tiny_cfg(), &init, true);
        assert_eq!(run.metrics.forwardings, 0);
        assert_eq!(run.metrics.violations, 0);
        // The 8-byte store of 0 clobbers t[0] and t[1].
        assert_eq!(run.state.registers["r0"], 0);
        assert_eq!(run.state, run_inorder(&trace, &init));
    }

    #[test]
    fn committed_equals_trace_length_despite_squashes() {
        let (trace, init) = prep(
            "array t[4] esz 4\nfn f(int n) { for i = 0 to n step 1 { alu v = x + i\nstore t[0] = v\nload r0 = t[0] } }",
            "bind n = 5\nplace t = 0x0\ndelay 1 = 6\n",
        );
        let run = simulate(&trace, &tiny_cfg(), &init, true);
        assert_eq!(run.metrics.committed_insts, trace.ops.len() as u64);
        assert!(run.metrics.violations >= 1);
        assert_eq!(run.state, run_inorder(&trace, &init));
    }

    #[test]
    fn reset_gives_fresh_counters_and_tables() {
        let (trace, init) = prep(
            "array t[4] esz 4\nfn f(int n) { alu v = x + y\nstore t[0] = v\nload r0 = t[0] }",
            "place t = 0x0\ndelay 1 = 8\n",
        );
        let mut sim = Simulator::new(tiny_cfg());
        let first = sim.run(&trace, &init, true);
        assert_eq!(first.metrics.violations, 1);
        sim.reset();
        sim.reset(); // two resets behave like one
        assert!(sim.predictor().tables_empty());
        assert_eq!(sim.predictor().counters().lookups, 0);
        let again = sim.run(&trace, &init, true);
        assert_eq!(again.metrics, first.metrics);
        // Without a reset the trained predictor prevents the violation.
        let warm = sim.run(&trace, &init, true);
        assert_eq!(warm.metrics.violations, 0);
    }

    #[test]
    fn trained_predictor_prevents_the_replay_violation() {
        // Conflicting iterations: the first trains, the rest wait.
        let (trace, init) = prep(
            "array t[4] esz 4\nfn f(int n) { for i = 0 to n step 1 { alu v = x + i\nstore t[0] = v\nload r0 = t[0] } }",
            "bind n = 2\nplace t = 0x0\ndelay 1 = 6\n",
        );
        let run = simulate(&trace, &tiny_cfg(), &init, true);
        assert_eq!(run.metrics.violations, 1);
        assert_eq!(run.state, run_inorder(&trace, &init));
    }

    #[test]
    fn zero_store_stream_issues_every_load_as_soon_as_ready() {
        let (trace, init) = prep(
            "array t[64] esz 4\nfn f(int n) { for i = 0 to n step 1 { load r0 = t[i] } }",
            "bind n = 8\nplace t = 0x0\nfill t = 1\n",
        );
        let mut sim = Simulator::new(tiny_cfg());
        let (run, log) = sim.run_logged(&trace, &init, true);
        assert_eq!(run.metrics.violations, 0);
        for e in log.iter().filter(|e| e.kind == SimEventKind::Issue) {
            let dispatch = log
                .iter()
                .find(|d| d.kind == SimEventKind::Dispatch && d.seq == e.seq)
                .unwrap();
            assert_eq!(e.cycle, dispatch.cycle + 1);
        }
    }

    #[test]
    fn labels_only_change_counters_never_architecture() {
        let p = parse_program(crate::samples::LISTING1).unwrap();
        let (labelled, _) = crate::analysis::label_pass(&p);
        let inputs = parse_inputs(
            "bind n = 64\nplace a = 0x1000 len 64 esz 4\nplace b = 0x2000 len 64 esz 4\nfill a = 1\nfill b = 2\n",
        )
        .unwrap();
        let trace = lower(&labelled, &inputs).unwrap();
        let init = inputs.initial_state(&labelled).unwrap();
        let cfg = CpuConfig::small();
        let on = simulate(&trace, &cfg, &init, true);
        let off = simulate(&trace, &cfg, &init, false);
        assert_eq!(on.state, off.state);
        assert_eq!(on.state, run_inorder(&trace, &init));
        assert_eq!(on.metrics.violations, 0);
        assert_eq!(off.metrics.violations, 0);
        assert_eq!(on.metrics.bypassed_lookups, 64);
        assert_eq!(off.metrics.bypassed_lookups, 0);
        assert_eq!(
            off.metrics.mdp_lookups - on.metrics.mdp_lookups,
            on.metrics.bypassed_lookups
        );
        assert_eq!(on.metrics.committed_insts, off.metrics.committed_insts);
    }

    #[test]
    fn false_dependency_counted_on_collision() {
        // Train a (load, store) pair, then a different load whose pc folds
        // to the same SSIT index gets held behind an unrelated store.
        use crate::lower::Reg;
        let mk = |seq: u64, pc: u64, delay: u64, kind: DynKind| DynOp {
            seq,
            pc,
            pnd: false,
            addr_ready_latency: delay,
            kind,
        };
        // pcs 4 and 4+8*4=36 collide in an 8-entry SSIT.
        let ops = vec![
            mk(
                0,
                8,
                6,
                DynKind::Store {
                    addr: 0x0,
                    size: 4,
                    value: Operand::Imm(7),
                },
            ),
            mk(
                1,
                4,
                0,
                DynKind::Load {
                    dst: Reg(0),
                    addr: 0x0,
                    size: 4,
                },
            ),
            mk(
                2,
                8,
                6,
                DynKind::Store {
                    addr: 0x0,
                    size: 4,
                    value: Operand::Imm(9),
                },
            ),
            mk(
                3,
                36,
                0,
                DynKind::Load {
                    dst: Reg(1),
                    addr: 0x40,
                    size: 4,
                },
            ),
        ];
        let trace = Trace {
            ops,
            reg_names: vec!["r0".into(), "r1".into()],
            entry: "f".into(),
        };
        let init = MachineState::default();
        let run = simulate(&trace, &tiny_cfg(), &init, true);
        assert_eq!(run.metrics.violations, 1);
        assert_eq!(run.metrics.index_collisions, 1);
        assert_eq!(run.metrics.false_dependencies, 1);
        assert_eq!(run.state, run_inorder(&trace, &init));
    }

    #[test]
    fn determinism() {
        let (trace, init) = prep(
            "array t[8] esz 4\nfn f(int n) { for i = 0 to n step 1 { alu v = x + i\nstore t[0] = v\nload r0 = t[0]\nload r1 = t[3] } }",
            "bind n = 6\nplace t = 0x0\ndelay 1 = 5\n",
        );
        let a = simulate(&trace, &tiny_cfg(), &init, true);
        let b = simulate(&trace, &tiny_cfg(), &init, true);
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.state, b.state);
    }
}
