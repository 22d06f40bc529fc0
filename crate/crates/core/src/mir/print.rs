//! Pretty-printer. Output reparses to an identical AST.

use super::*;
use std::fmt::Write;

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for g in &p.globals {
        writeln!(out, "array {}[{}] esz {}", g.name, g.len, g.esz).unwrap();
    }
    for (i, f) in p.functions.iter().enumerate() {
        if !p.globals.is_empty() || i > 0 {
            out.push('\n');
        }
        write_function(&mut out, f);
    }
    out
}

fn write_function(out: &mut String, f: &Function) {
    write!(out, "fn {}(", f.name).unwrap();
    for (i, param) in f.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let kw = match param.kind {
            ParamKind::Array => "arr",
            ParamKind::Scalar => "int",
        };
        write!(out, "{kw} {}", param.name).unwrap();
        if param.restrict {
            out.push_str(" restrict");
        }
        if param.readonly {
            out.push_str(" readonly");
        }
    }
    out.push_str(") {\n");
    write_stmts(out, &f.body, 1);
    out.push_str("}\n");
}

fn write_stmts(out: &mut String, body: &[Stmt], depth: usize) {
    for s in body {
        for _ in 0..depth {
            out.push_str("  ");
        }
        match s {
            Stmt::Loop(l) => {
                writeln!(
                    out,
                    "for {} = {} to {} step {} {{",
                    l.ivar,
                    bound(&l.lower),
                    bound(&l.upper),
                    l.step
                )
                .unwrap();
                write_stmts(out, &l.body, depth + 1);
                for _ in 0..depth {
                    out.push_str("  ");
                }
                out.push_str("}\n");
            }
            Stmt::Instr(i) => {
                writeln!(out, "{}", instr(i)).unwrap();
            }
        }
    }
}

fn bound(b: &Bound) -> String {
    match b {
        Bound::Const(v) => v.to_string(),
        Bound::Sym(s) => s.clone(),
    }
}

fn instr(i: &Instr) -> String {
    match &i.kind {
        InstrKind::Load { dst, addr, pnd } => {
            let prefix = if *pnd { "pnd " } else { "" };
            format!("{prefix}load {dst} = {}", addr_expr(addr))
        }
        InstrKind::Store { addr, src } => format!("store {} = {src}", addr_expr(addr)),
        InstrKind::Alu { dst, lhs, op, rhs } => {
            format!("alu {dst} = {lhs} {} {rhs}", op.symbol())
        }
        InstrKind::Call { callee, summary } => format!(
            "call {callee} reads({}) writes({})",
            modref(&summary.may_read),
            modref(&summary.may_write)
        ),
    }
}

fn modref(m: &ModRef) -> String {
    match m {
        ModRef::Unknown => "*".to_string(),
        ModRef::Known(names) => names.iter().cloned().collect::<Vec<_>>().join(", "),
    }
}

fn addr_expr(a: &AddrExpr) -> String {
    format!("{}[{}]", a.base, affine(&a.index))
}

pub(super) fn affine(e: &AffineExpr) -> String {
    if e.terms.is_empty() {
        return e.offset.to_string();
    }
    let mut out = String::new();
    for (i, (coef, ivar)) in e.terms.iter().enumerate() {
        let mag = coef.unsigned_abs();
        if i == 0 {
            if *coef < 0 {
                out.push('-');
            }
        } else if *coef < 0 {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        if mag == 1 {
            out.push_str(ivar);
        } else {
            write!(out, "{mag}*{ivar}").unwrap();
        }
    }
    if e.offset != 0 {
        if e.offset < 0 {
            write!(out, " - {}", e.offset.unsigned_abs()).unwrap();
        } else {
            write!(out, " + {}", e.offset).unwrap();
        }
    }
    out
}
