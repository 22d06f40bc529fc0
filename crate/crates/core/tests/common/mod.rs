//! Seeded random program generator shared by the property suites.
//!
//! Generated programs are always valid (checked against the validator),
//! use only non-negative indices, and come with lowering inputs whose
//! placements are disjoint and sized to keep every access in bounds.

use mdsim::lower::LoweringInputs;
use mdsim::mir::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::BTreeMap;

pub struct GenProgram {
    pub program: Program,
    pub inputs: LoweringInputs,
}

pub struct GenOptions {
    pub max_trip: i64,
    pub max_nests: usize,
    pub allow_calls: bool,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            max_trip: 24,
            max_nests: 2,
            allow_calls: true,
        }
    }
}

struct Gen {
    rng: StdRng,
    next_ivar: u32,
    next_id: u32,
    bound_n: i64,
    /// base name -> (esz, max element index seen)
    extents: BTreeMap<String, (u32, i64)>,
    effects: Vec<(String, String, i64)>, // callee, base, const index
}

pub fn gen_program(seed: u64) -> GenProgram {
    gen_program_with(seed, &GenOptions::default())
}

pub fn gen_program_with(seed: u64, opts: &GenOptions) -> GenProgram {
    let mut g = Gen {
        rng: StdRng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15),
        next_ivar: 0,
        next_id: 0,
        bound_n: 0,
        extents: BTreeMap::new(),
        effects: Vec::new(),
    };
    g.bound_n = g.rng.gen_range(2..=opts.max_trip);

    let n_globals = g.rng.gen_range(1..=3usize);
    let mut globals = Vec::new();
    for k in 0..n_globals {
        let esz = *[1u32, 2, 4, 8].get(g.rng.gen_range(0..4)).unwrap();
        let name = format!("g{k}");
        g.extents.insert(name.clone(), (esz, 0));
        globals.push(ArrayDecl {
            name,
            len: 0, // patched below
            esz,
        });
    }
    let n_params = g.rng.gen_range(0..=2usize);
    let mut params = Vec::new();
    for k in 0..n_params {
        let name = format!("pa{k}");
        let esz = *[1u32, 2, 4, 8].get(g.rng.gen_range(0..4)).unwrap();
        g.extents.insert(name.clone(), (esz, 0));
        params.push(Param {
            name,
            kind: ParamKind::Array,
            restrict: g.rng.gen_bool(0.5),
            readonly: g.rng.gen_bool(0.25),
        });
    }
    params.push(Param {
        name: "n".to_string(),
        kind: ParamKind::Scalar,
        restrict: false,
        readonly: false,
    });

    let mut body = Vec::new();
    let n_nests = g.rng.gen_range(1..=opts.max_nests);
    // Occasionally a load outside any loop; it must never be labelled.
    if g.rng.gen_bool(0.2) {
        if let Some(instr) = g.gen_load(&params, &[]) {
            body.push(Stmt::Instr(instr));
        }
    }
    for _ in 0..n_nests {
        let nest = g.gen_loop(&params, &[], opts, 0);
        body.push(Stmt::Loop(nest));
    }

    let function = Function {
        name: "f".to_string(),
        params,
        body,
    };
    let mut program = Program {
        globals,
        functions: vec![function],
    };

    // Patch array lengths to cover every touched index.
    for decl in &mut program.globals {
        let (_, max_idx) = g.extents[&decl.name];
        decl.len = (max_idx + 1).max(1) as u64;
    }

    let mut inputs = LoweringInputs {
        binds: BTreeMap::from([("n".to_string(), g.bound_n)]),
        ..Default::default()
    };
    // Pack placements with generous gaps; placements never overlap.
    let mut base = 0x1000u64;
    for (name, (esz, max_idx)) in &g.extents {
        let len = (*max_idx + 1).max(1) as u64;
        let (p_len, p_esz) = if program.global(name).is_some() {
            (None, None)
        } else {
            (Some(len), Some(*esz))
        };
        inputs.placements.insert(
            name.clone(),
            mdsim::lower::Placement {
                base,
                len: p_len,
                esz: p_esz,
            },
        );
        base += (len * *esz as u64 + 0x3f) & !0x3f;
        base += 0x40;
    }
    let fill_names: Vec<String> = g.extents.keys().cloned().collect();
    for name in fill_names {
        if g.rng.gen_bool(0.6) {
            let v = g.rng.gen_range(-100..100);
            inputs.fills.insert(name, v);
        }
    }
    for (callee, array, idx) in &g.effects {
        inputs
            .call_effects
            .entry(callee.clone())
            .or_default()
            .push(mdsim::lower::CallEffect {
                array: array.clone(),
                index: AffineExpr::constant(*idx),
                value: AffineExpr::constant(g.rng.gen_range(-50..50)),
            });
    }

    let diags = validate(&program);
    assert!(
        diags.is_empty(),
        "generator produced an invalid program: {diags:?}\n{}",
        print_program(&program)
    );
    GenProgram { program, inputs }
}

fn g2_bool(rng: &mut StdRng, p: f64) -> bool {
    rng.gen_bool(p)
}

impl Gen {
    fn fresh_id(&mut self) -> InstrId {
        let id = InstrId(self.next_id);
        self.next_id += 1;
        id
    }

    fn ivar_max(&self, upper: &Bound) -> i64 {
        match upper {
            Bound::Const(c) => (*c - 1).max(0),
            Bound::Sym(_) => (self.bound_n - 1).max(0),
        }
    }

    fn gen_loop(
        &mut self,
        params: &[Param],
        enclosing: &[(String, i64)],
        opts: &GenOptions,
        depth: usize,
    ) -> Loop {
        let ivar = format!("iv{}", self.next_ivar);
        self.next_ivar += 1;
        let upper = if self.rng.gen_bool(0.4) {
            Bound::Sym("n".to_string())
        } else {
            Bound::Const(self.rng.gen_range(1..=opts.max_trip))
        };
        let step = *[1i64, 1, 2, 3].get(self.rng.gen_range(0..4)).unwrap();
        let max_iv = self.ivar_max(&upper);
        let mut scope: Vec<(String, i64)> = enclosing.to_vec();
        scope.push((ivar.clone(), max_iv));

        let mut body = Vec::new();
        let n_stmts = self.rng.gen_range(1..=4usize);
        for _ in 0..n_stmts {
            let roll: f64 = self.rng.gen();
            if roll < 0.40 {
                if let Some(i) = self.gen_load(params, &scope) {
                    body.push(Stmt::Instr(i));
                }
            } else if roll < 0.65 {
                if let Some(i) = self.gen_store(params, &scope) {
                    body.push(Stmt::Instr(i));
                }
            } else if roll < 0.90 {
                body.push(Stmt::Instr(self.gen_alu(&scope)));
            } else if opts.allow_calls {
                body.push(Stmt::Instr(self.gen_call()));
            }
        }
        if depth + 1 < 2 && self.rng.gen_bool(0.35) {
            let inner = self.gen_loop(params, &scope, opts, depth + 1);
            let pos = self.rng.gen_range(0..=body.len());
            body.insert(pos, Stmt::Loop(inner));
        }
        if body.is_empty() {
            body.push(Stmt::Instr(self.gen_alu(&scope)));
        }
        Loop {
            ivar,
            lower: Bound::Const(0),
            upper,
            step,
            body,
        }
    }

    fn pick_base(&mut self, writeable_only: bool, params: &[Param]) -> Option<String> {
        let names: Vec<String> = self
            .extents
            .keys()
            .filter(|name| {
                if !writeable_only {
                    return true;
                }
                params
                    .iter()
                    .find(|p| &&p.name == name)
                    .map(|p| !p.readonly)
                    .unwrap_or(true)
            })
            .cloned()
            .collect();
        if names.is_empty() {
            return None;
        }
        let i = self.rng.gen_range(0..names.len());
        Some(names[i].clone())
    }

    fn gen_addr(&mut self, base: String, scope: &[(String, i64)]) -> AddrExpr {
        let mut terms = Vec::new();
        let mut max_index = 0i64;
        for (ivar, max_iv) in scope {
            if self.rng.gen_bool(0.5) {
                let coef = self.rng.gen_range(1..=3i64);
                terms.push((coef, ivar.clone()));
                max_index += coef * max_iv;
            }
        }
        let offset = self.rng.gen_range(0..=7i64);
        max_index += offset;
        let e = self.extents.get_mut(&base).unwrap();
        e.1 = e.1.max(max_index);
        AddrExpr {
            base,
            index: AffineExpr::new(terms, offset),
        }
    }

    fn reg(&mut self) -> String {
        format!("r{}", self.rng.gen_range(0..6))
    }

    fn src(&mut self, scope: &[(String, i64)]) -> String {
        if !scope.is_empty() && self.rng.gen_bool(0.3) {
            let i = self.rng.gen_range(0..scope.len());
            scope[i].0.clone()
        } else {
            self.reg()
        }
    }

    fn gen_load(&mut self, params: &[Param], scope: &[(String, i64)]) -> Option<Instr> {
        let base = self.pick_base(false, params)?;
        let addr = self.gen_addr(base, scope);
        let dst = self.reg();
        Some(Instr {
            id: self.fresh_id(),
            kind: InstrKind::Load {
                dst,
                addr,
                pnd: false,
            },
        })
    }

    fn gen_store(&mut self, params: &[Param], scope: &[(String, i64)]) -> Option<Instr> {
        let base = self.pick_base(true, params)?;
        let addr = self.gen_addr(base, scope);
        let src = self.src(scope);
        Some(Instr {
            id: self.fresh_id(),
            kind: InstrKind::Store { addr, src },
        })
    }

    fn gen_alu(&mut self, scope: &[(String, i64)]) -> Instr {
        let ops = [AluOp::Add, AluOp::Sub, AluOp::Mul];
        Instr {
            id: self.fresh_id(),
            kind: InstrKind::Alu {
                dst: self.reg(),
                lhs: self.src(scope),
                op: ops[self.rng.gen_range(0..3)],
                rhs: self.src(scope),
            },
        }
    }

    fn gen_call(&mut self) -> Instr {
        let callee = format!("c{}", self.rng.gen_range(0..2));
        let all: Vec<String> = self.extents.keys().cloned().collect();
        let mut pick_set = |rng: &mut StdRng| -> ModRef {
            if rng.gen_bool(0.15) {
                ModRef::Unknown
            } else {
                ModRef::Known(
                    all.iter()
                        .filter(|_| rng.gen_bool(0.4))
                        .cloned()
                        .collect(),
                )
            }
        };
        let may_read = pick_set(&mut self.rng);
        let may_write = pick_set(&mut self.rng);
        // Script a concrete write within the declared set so calls have
        // real architectural effects.
        if let ModRef::Known(set) = &may_write {
            if let Some(base) = set.iter().next().cloned() {
                let idx = self.rng.gen_range(0..=3i64);
                let e = self.extents.get_mut(&base).unwrap();
                e.1 = e.1.max(idx);
                self.effects.push((callee.clone(), base, idx));
            }
        }
        Instr {
            id: self.fresh_id(),
            kind: InstrKind::Call {
                callee,
                summary: ModRefSummary {
                    may_read,
                    may_write,
                },
            },
        }
    }
}
