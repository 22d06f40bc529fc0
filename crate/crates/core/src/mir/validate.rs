//! Structural validation. Returns diagnostics instead of failing, so a
//! driver can report everything at once.

use super::*;
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn diag(out: &mut Vec<Diagnostic>, message: String) {
    out.push(Diagnostic { message });
}

/// Check every type invariant. The empty list means the program is valid.
pub fn validate(p: &Program) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    let mut global_names = BTreeSet::new();
    for g in &p.globals {
        if !global_names.insert(g.name.clone()) {
            diag(&mut out, format!("duplicate global array {:?}", g.name));
        }
        if g.len == 0 {
            diag(&mut out, format!("global array {:?} has zero length", g.name));
        }
        if g.esz == 0 || g.esz > 8 {
            diag(
                &mut out,
                format!("global array {:?} element size must be 1..=8 bytes", g.name),
            );
        }
    }

    let mut fn_names = BTreeSet::new();
    for f in &p.functions {
        if !fn_names.insert(f.name.clone()) {
            diag(&mut out, format!("duplicate function {:?}", f.name));
        }
        validate_function(p, f, &mut out);
    }

    let mut seen_ids = BTreeSet::new();
    for instr in p.instrs() {
        if !seen_ids.insert(instr.id) {
            diag(&mut out, format!("duplicate instruction id {}", instr.id.0));
        }
    }

    out
}

struct FnCtx<'a> {
    program: &'a Program,
    function: &'a Function,
}

impl<'a> FnCtx<'a> {
    fn array_base(&self, name: &str) -> Option<BaseRef<'a>> {
        if let Some(param) = self.function.param(name) {
            if param.kind == ParamKind::Array {
                return Some(BaseRef::Param(param));
            }
            return None;
        }
        self.program.global(name).map(|_| BaseRef::Global)
    }
}

enum BaseRef<'a> {
    Global,
    Param(&'a Param),
}

fn validate_function(p: &Program, f: &Function, out: &mut Vec<Diagnostic>) {
    let mut param_names = BTreeSet::new();
    for param in &f.params {
        if !param_names.insert(param.name.clone()) {
            diag(
                out,
                format!("function {:?}: duplicate parameter {:?}", f.name, param.name),
            );
        }
        if p.global(&param.name).is_some() {
            diag(
                out,
                format!(
                    "function {:?}: parameter {:?} shadows a global array",
                    f.name, param.name
                ),
            );
        }
        if param.kind == ParamKind::Scalar && (param.restrict || param.readonly) {
            diag(
                out,
                format!(
                    "function {:?}: attributes are only valid on array parameters ({:?})",
                    f.name, param.name
                ),
            );
        }
    }

    let ctx = FnCtx {
        program: p,
        function: f,
    };
    let mut ivars: Vec<String> = Vec::new();
    validate_stmts(&ctx, &f.body, &mut ivars, out);
}

fn validate_stmts(
    ctx: &FnCtx<'_>,
    body: &[Stmt],
    ivars: &mut Vec<String>,
    out: &mut Vec<Diagnostic>,
) {
    let f = ctx.function;
    for s in body {
        match s {
            Stmt::Loop(l) => {
                if l.step == 0 {
                    diag(out, format!("loop over {:?} has step 0", l.ivar));
                }
                if ivars.contains(&l.ivar) {
                    diag(out, format!("loop variable {:?} shadows an enclosing one", l.ivar));
                }
                if f.param(&l.ivar).is_some() || ctx.program.global(&l.ivar).is_some() {
                    diag(
                        out,
                        format!("loop variable {:?} collides with a parameter or global", l.ivar),
                    );
                }
                for b in [&l.lower, &l.upper] {
                    if let Bound::Sym(name) = b {
                        let ok = f
                            .param(name)
                            .map(|p| p.kind == ParamKind::Scalar)
                            .unwrap_or(false);
                        if !ok {
                            diag(
                                out,
                                format!(
                                    "loop bound {:?} is not a scalar parameter of {:?}",
                                    name, f.name
                                ),
                            );
                        }
                    }
                }
                ivars.push(l.ivar.clone());
                validate_stmts(ctx, &l.body, ivars, out);
                ivars.pop();
            }
            Stmt::Instr(instr) => validate_instr(ctx, instr, ivars, out),
        }
    }
}

fn validate_instr(ctx: &FnCtx<'_>, instr: &Instr, ivars: &[String], out: &mut Vec<Diagnostic>) {
    let id = instr.id.0;
    if let Some(addr) = instr.addr() {
        match ctx.array_base(&addr.base) {
            None => diag(
                out,
                format!("instr {id}: {:?} is not a declared array or array parameter", addr.base),
            ),
            Some(BaseRef::Param(param)) => {
                if param.readonly && instr.is_store() {
                    diag(
                        out,
                        format!("instr {id}: store through readonly parameter {:?}", param.name),
                    );
                }
            }
            Some(BaseRef::Global) => {}
        }
        for (_, ivar) in &addr.index.terms {
            if !ivars.contains(ivar) {
                diag(
                    out,
                    format!("instr {id}: address uses {:?}, which is not an enclosing loop variable", ivar),
                );
            }
        }
    }
    match &instr.kind {
        InstrKind::Load { dst, .. } | InstrKind::Alu { dst, .. } => {
            if ivars.contains(dst) {
                diag(
                    out,
                    format!("instr {id}: cannot write loop variable {dst:?}"),
                );
            }
        }
        InstrKind::Call { summary, .. } => {
            for (what, set) in [("reads", &summary.may_read), ("writes", &summary.may_write)] {
                if let ModRef::Known(names) = set {
                    for name in names {
                        match ctx.array_base(name) {
                            None => diag(
                                out,
                                format!(
                                    "instr {id}: call {what} set names {name:?}, which is not a declared array"
                                ),
                            ),
                            Some(BaseRef::Param(param)) if param.readonly && what == "writes" => {
                                diag(
                                    out,
                                    format!(
                                        "instr {id}: call may write readonly parameter {:?}",
                                        param.name
                                    ),
                                )
                            }
                            _ => {}
                        }
                    }
                }
            }
        }
        InstrKind::Store { .. } => {}
    }
}

/// Per-ivar loop bounds for the instructions of one nest; used by the
/// dependence tests.
#[derive(Debug, Clone, Default)]
pub struct NestInfo {
    pub loops: BTreeMap<String, LoopRange>,
}

#[derive(Debug, Clone)]
pub struct LoopRange {
    pub lower: Bound,
    pub upper: Bound,
    pub step: i64,
}

impl NestInfo {
    /// Number of iterations of `ivar`'s loop when both bounds are constants.
    pub fn static_trip_count(&self, ivar: &str) -> Option<i64> {
        let range = self.loops.get(ivar)?;
        let (Bound::Const(lo), Bound::Const(hi)) = (&range.lower, &range.upper) else {
            return None;
        };
        Some(trip_count(*lo, *hi, range.step))
    }
}

/// Iterations of `for i = lo to hi step s`: counts `i` values with
/// `lo <= i < hi` (or `hi < i <= lo` for negative steps).
pub fn trip_count(lo: i64, hi: i64, step: i64) -> i64 {
    if step > 0 {
        if hi <= lo {
            0
        } else {
            (hi - lo + step - 1) / step
        }
    } else if step < 0 {
        if hi >= lo {
            0
        } else {
            (lo - hi + (-step) - 1) / (-step)
        }
    } else {
        0
    }
}
