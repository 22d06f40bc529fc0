//! Mini loop IR: array declarations, functions over array/scalar parameters,
//! counted loops, and straight-line load/store/alu/call instructions whose
//! addresses are affine in the enclosing induction variables.
//!
//! The textual grammar is line-oriented; `#` starts a comment. A program
//! round-trips through [`print_program`] and [`parse_program`] bit-for-bit
//! at the AST level (instruction ids are reassigned in pre-order, which is
//! the same order the printer emits, so ids are stable across cycles).

mod parse;
mod print;
mod validate;

pub use parse::{parse_affine, parse_program, ParseError};
pub use print::print_program;
pub use validate::{trip_count, validate, Diagnostic, LoopRange, NestInfo};

use std::collections::BTreeSet;

/// Static instruction id. Dense, assigned in pre-order by the parser.
/// The id doubles as the instruction's PC after lowering (scaled by 4 to
/// mimic 4-byte instruction alignment).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InstrId(pub u32);

impl InstrId {
    /// PC of this instruction in the lowered stream.
    pub fn pc(self) -> u64 {
        self.0 as u64 * 4
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub globals: Vec<ArrayDecl>,
    pub functions: Vec<Function>,
}

/// A global array: `array NAME[len] esz BYTES`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayDecl {
    pub name: String,
    pub len: u64,
    pub esz: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// `arr NAME` — an array pointer.
    Array,
    /// `int NAME` — a scalar, usable as a loop bound.
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    /// No other name in the function accesses this parameter's memory.
    pub restrict: bool,
    /// The memory this parameter points to is never written during the
    /// function, neither by stores nor by callees.
    pub readonly: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Loop(Loop),
    Instr(Instr),
}

/// `for ivar = lower to upper step k { ... }`; iterates while `ivar < upper`
/// for positive steps and `ivar > upper` for negative ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Loop {
    pub ivar: String,
    pub lower: Bound,
    pub upper: Bound,
    pub step: i64,
    pub body: Vec<Stmt>,
}

/// A loop bound: an integer constant or a scalar parameter bound at lowering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Bound {
    Const(i64),
    Sym(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instr {
    pub id: InstrId,
    pub kind: InstrKind,
}

/// In source operand positions a name that matches an enclosing loop's
/// induction variable reads that variable's current value; any other name
/// reads a register (registers default to zero). Destination positions must
/// name registers — writing an induction variable is a validation error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InstrKind {
    Load {
        dst: String,
        addr: AddrExpr,
        /// "Predict no dependency": the load bypasses the memory dependence
        /// predictor and is never trained into it.
        pnd: bool,
    },
    Store {
        addr: AddrExpr,
        src: String,
    },
    Alu {
        dst: String,
        lhs: String,
        op: AluOp,
        rhs: String,
    },
    Call {
        callee: String,
        summary: ModRefSummary,
    },
}

impl Instr {
    pub fn is_load(&self) -> bool {
        matches!(self.kind, InstrKind::Load { .. })
    }

    pub fn is_store(&self) -> bool {
        matches!(self.kind, InstrKind::Store { .. })
    }

    pub fn addr(&self) -> Option<&AddrExpr> {
        match &self.kind {
            InstrKind::Load { addr, .. } | InstrKind::Store { addr, .. } => Some(addr),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AluOp {
    Add,
    Sub,
    Mul,
}

impl AluOp {
    pub fn apply(self, a: i64, b: i64) -> i64 {
        match self {
            AluOp::Add => a.wrapping_add(b),
            AluOp::Sub => a.wrapping_sub(b),
            AluOp::Mul => a.wrapping_mul(b),
        }
    }

    pub fn symbol(self) -> char {
        match self {
            AluOp::Add => '+',
            AluOp::Sub => '-',
            AluOp::Mul => '*',
        }
    }
}

/// An array access `base[index]` with the index in element units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddrExpr {
    pub base: String,
    pub index: AffineExpr,
}

/// Canonical affine form: `sum(coef * ivar) + offset`. Terms are sorted by
/// induction-variable name and carry non-zero coefficients, so structural
/// equality is semantic equality.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AffineExpr {
    pub terms: Vec<(i64, String)>,
    pub offset: i64,
}

impl AffineExpr {
    pub fn constant(offset: i64) -> Self {
        AffineExpr {
            terms: Vec::new(),
            offset,
        }
    }

    /// Build the canonical form: fold duplicate ivars, drop zero coefficients,
    /// sort terms by name.
    pub fn new(terms: Vec<(i64, String)>, offset: i64) -> Self {
        let mut folded: std::collections::BTreeMap<String, i64> = std::collections::BTreeMap::new();
        for (c, v) in terms {
            *folded.entry(v).or_insert(0) += c;
        }
        AffineExpr {
            terms: folded
                .into_iter()
                .filter(|(_, c)| *c != 0)
                .map(|(v, c)| (c, v))
                .collect(),
            offset,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    /// Evaluate under an ivar environment. Missing ivars evaluate to zero.
    pub fn eval(&self, env: &std::collections::BTreeMap<String, i64>) -> i64 {
        let mut v = self.offset;
        for (c, name) in &self.terms {
            v = v.wrapping_add(c.wrapping_mul(*env.get(name).copied().get_or_insert(0)));
        }
        v
    }
}

/// Declared set of arrays a call may touch. `Unknown` subsumes any set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModRef {
    Unknown,
    Known(BTreeSet<String>),
}

impl ModRef {
    pub fn known<I: IntoIterator<Item = S>, S: Into<String>>(names: I) -> Self {
        ModRef::Known(names.into_iter().map(Into::into).collect())
    }

    pub fn may_touch(&self, base: &str) -> bool {
        match self {
            ModRef::Unknown => true,
            ModRef::Known(set) => set.contains(base),
        }
    }
}

/// Mod/ref summary declared at the call site; callees are opaque.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModRefSummary {
    pub may_read: ModRef,
    pub may_write: ModRef,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn global(&self, name: &str) -> Option<&ArrayDecl> {
        self.globals.iter().find(|g| g.name == name)
    }

    /// All instructions of all functions in pre-order.
    pub fn instrs(&self) -> Vec<&Instr> {
        let mut out = Vec::new();
        for f in &self.functions {
            collect_instrs(&f.body, &mut out);
        }
        out
    }
}

fn collect_instrs<'a>(body: &'a [Stmt], out: &mut Vec<&'a Instr>) {
    for s in body {
        match s {
            Stmt::Instr(i) => out.push(i),
            Stmt::Loop(l) => collect_instrs(&l.body, out),
        }
    }
}

impl Function {
    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }
}
