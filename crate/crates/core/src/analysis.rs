//! Static no-dependence labelling over loop nests.
//!
//! For every load in a loop nest the pass pairs the load with every store
//! and every call in the nest — the whole outermost loop, regardless of
//! inner structure — and asks whether a dependence between the pair can be
//! ruled out. Loads with no possible dependence are flagged "predict no
//! dependency" (PND) and bypass the memory dependence predictor at run time.
//!
//! A pair is ruled out only by one of a small set of arguments:
//! distinct memory objects (distinct globals, or a restrict-qualified
//! parameter), a readonly parameter as the load's base, a disjoint affine
//! index range on the same base (ZIV and strong-SIV forms), or a call
//! mod/ref set that excludes the load's base. Anything else is conservative:
//! a may-dependence in either direction blocks the label.

use crate::mir::*;
use serde::Serialize;
use std::collections::BTreeMap;

/// Can two accesses touch the same location?
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AliasResult {
    NoAlias,
    MayAlias,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepValue {
    NoDep,
    MayDep,
}

/// Why a pair was (or was not) ruled out. `NoDep` always carries a
/// non-`Conservative` reason.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DepReason {
    DistinctRestrictBases,
    ReadOnlyBase,
    DisjointAffine,
    Conservative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DepResult {
    pub value: DepValue,
    pub reason: DepReason,
}

impl DepResult {
    pub fn no_dep(reason: DepReason) -> Self {
        debug_assert!(reason != DepReason::Conservative);
        DepResult {
            value: DepValue::NoDep,
            reason,
        }
    }

    pub fn may_dep() -> Self {
        DepResult {
            value: DepValue::MayDep,
            reason: DepReason::Conservative,
        }
    }

    pub fn blocks(&self) -> bool {
        self.value == DepValue::MayDep
    }
}

/// What kind of object an access base names, within one function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseKind {
    Global,
    ArrayParam { restrict: bool, readonly: bool },
}

/// Resolves base names for one function.
#[derive(Debug, Clone, Default)]
pub struct AccessScope {
    bases: BTreeMap<String, BaseKind>,
}

impl AccessScope {
    pub fn for_function(program: &Program, function: &Function) -> Self {
        let mut bases = BTreeMap::new();
        for g in &program.globals {
            bases.insert(g.name.clone(), BaseKind::Global);
        }
        for p in &function.params {
            if p.kind == ParamKind::Array {
                bases.insert(
                    p.name.clone(),
                    BaseKind::ArrayParam {
                        restrict: p.restrict,
                        readonly: p.readonly,
                    },
                );
            }
        }
        AccessScope { bases }
    }

    pub fn base_kind(&self, name: &str) -> Option<BaseKind> {
        self.bases.get(name).copied()
    }

    fn is_restrict(&self, name: &str) -> bool {
        matches!(
            self.base_kind(name),
            Some(BaseKind::ArrayParam { restrict: true, .. })
        )
    }

    pub fn is_readonly(&self, name: &str) -> bool {
        matches!(
            self.base_kind(name),
            Some(BaseKind::ArrayParam { readonly: true, .. })
        )
    }
}

/// Can accesses `a` and `b` alias? `NoAlias` when the bases are distinct
/// globals, when the bases are distinct and at least one is a restrict
/// parameter, or when they share a base whose affine index ranges are
/// provably disjoint.
pub fn alias_query(
    a: &AddrExpr,
    b: &AddrExpr,
    scope: &AccessScope,
    nest: &NestInfo,
) -> AliasResult {
    if a.base != b.base {
        let distinct = match (scope.base_kind(&a.base), scope.base_kind(&b.base)) {
            (Some(BaseKind::Global), Some(BaseKind::Global)) => true,
            _ => scope.is_restrict(&a.base) || scope.is_restrict(&b.base),
        };
        return if distinct {
            AliasResult::NoAlias
        } else {
            AliasResult::MayAlias
        };
    }
    match dep_test(&a.index, &b.index, nest).value {
        DepValue::NoDep => AliasResult::NoAlias,
        DepValue::MayDep => AliasResult::MayAlias,
    }
}

/// Same-base dependence test over affine indices.
///
/// Handles two shapes and is conservative elsewhere:
/// - ZIV: both indices loop-invariant; disjoint iff the constants differ.
/// - strong SIV: both indices use the same single induction variable with
///   equal coefficients; with value sets `{c*i + o : i in iter(ivar)}` the
///   accesses are disjoint iff the offset delta is not divisible by the
///   effective stride `c * step`, or the iteration distance is at least the
///   loop's trip count (known only for constant bounds).
pub fn dep_test(load: &AffineExpr, store: &AffineExpr, nest: &NestInfo) -> DepResult {
    if load.is_constant() && store.is_constant() {
        return if load.offset != store.offset {
            DepResult::no_dep(DepReason::DisjointAffine)
        } else {
            DepResult::may_dep()
        };
    }
    if load.terms.len() == 1 && store.terms.len() == 1 {
        let (lc, livar) = &load.terms[0];
        let (sc, sivar) = &store.terms[0];
        if livar == sivar && lc == sc {
            let Some(range) = nest.loops.get(livar) else {
                return DepResult::may_dep();
            };
            let stride = lc.wrapping_mul(range.step);
            if stride == 0 {
                return DepResult::may_dep();
            }
            let delta = store.offset - load.offset;
            if delta % stride != 0 {
                return DepResult::no_dep(DepReason::DisjointAffine);
            }
            if let Some(trips) = nest.static_trip_count(livar) {
                let distance = (delta / stride).abs();
                if distance >= trips {
                    return DepResult::no_dep(DepReason::DisjointAffine);
                }
            }
        }
    }
    DepResult::may_dep()
}

/// Does a call block a load? Blocks unless the call's may-write set is a
/// known set that excludes the load's base. Reads never block a load.
pub fn modref_blocks(call: &ModRefSummary, load_addr: &AddrExpr) -> DepResult {
    match &call.may_write {
        ModRef::Unknown => DepResult::may_dep(),
        ModRef::Known(set) => {
            if set.contains(&load_addr.base) {
                DepResult::may_dep()
            } else {
                DepResult::no_dep(DepReason::DistinctRestrictBases)
            }
        }
    }
}

/// Load-vs-store decision combining the readonly contract, the alias query,
/// and the same-base affine test.
pub fn load_store_dep(
    load_addr: &AddrExpr,
    store_addr: &AddrExpr,
    scope: &AccessScope,
    nest: &NestInfo,
) -> DepResult {
    if scope.is_readonly(&load_addr.base) {
        return DepResult::no_dep(DepReason::ReadOnlyBase);
    }
    if load_addr.base != store_addr.base {
        return match alias_query(load_addr, store_addr, scope, nest) {
            AliasResult::NoAlias => DepResult::no_dep(DepReason::DistinctRestrictBases),
            AliasResult::MayAlias => DepResult::may_dep(),
        };
    }
    dep_test(&load_addr.index, &store_addr.index, nest)
}

/// Per-load labelling outcome. Only loads inside loop nests are reported;
/// loads outside any loop are never candidates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelReport {
    pub loads: Vec<LoadLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoadLabel {
    /// PC of the load (static id scaled by instruction size).
    pub pc: u64,
    pub labelled: bool,
    /// Pairs that blocked the label, empty iff labelled.
    pub blockers: Vec<Blocker>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Blocker {
    /// PC of the blocking store or call.
    pub pc: u64,
    pub reason: DepReason,
}

impl LabelReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.loads).unwrap()
    }

    pub fn labelled_count(&self) -> usize {
        self.loads.iter().filter(|l| l.labelled).count()
    }
}

/// Run the labelling pass. Pre-existing pnd flags are cleared first; the
/// returned program differs from the input only in pnd flags.
pub fn label_pass(p: &Program) -> (Program, LabelReport) {
    let mut labelled = p.clone();
    let mut report = LabelReport { loads: Vec::new() };
    for fi in 0..labelled.functions.len() {
        let scope = AccessScope::for_function(p, &p.functions[fi]);
        let function = &mut labelled.functions[fi];
        // Clear all flags, including loads outside any nest.
        clear_pnd(&mut function.body);
        for stmt in &mut function.body {
            if let Stmt::Loop(outer) = stmt {
                label_nest(outer, &scope, &mut report);
            }
        }
    }
    (labelled, report)
}

fn clear_pnd(body: &mut [Stmt]) {
    for s in body {
        match s {
            Stmt::Instr(Instr {
                kind: InstrKind::Load { pnd, .. },
                ..
            }) => *pnd = false,
            Stmt::Loop(l) => clear_pnd(&mut l.body),
            _ => {}
        }
    }
}

/// Hazards a load is paired against: every store and every call in the nest.
enum Hazard {
    Store { id: InstrId, addr: AddrExpr },
    Call { id: InstrId, summary: ModRefSummary },
}

fn label_nest(outer: &mut Loop, scope: &AccessScope, report: &mut LabelReport) {
    let mut nest = NestInfo::default();
    let mut hazards = Vec::new();
    collect_nest(outer, &mut nest, &mut hazards);

    label_loads(&mut outer.body, &nest, &hazards, scope, report);
}

fn collect_nest(l: &Loop, nest: &mut NestInfo, hazards: &mut Vec<Hazard>) {
    nest.loops.insert(
        l.ivar.clone(),
        LoopRange {
            lower: l.lower.clone(),
            upper: l.upper.clone(),
            step: l.step,
        },
    );
    for s in &l.body {
        match s {
            Stmt::Loop(inner) => collect_nest(inner, nest, hazards),
            Stmt::Instr(i) => match &i.kind {
                InstrKind::Store { addr, .. } => hazards.push(Hazard::Store {
                    id: i.id,
                    addr: addr.clone(),
                }),
                InstrKind::Call { summary, .. } => hazards.push(Hazard::Call {
                    id: i.id,
                    summary: summary.clone(),
                }),
                _ => {}
            },
        }
    }
}

fn label_loads(
    body: &mut [Stmt],
    nest: &NestInfo,
    hazards: &[Hazard],
    scope: &AccessScope,
    report: &mut LabelReport,
) {
    for s in body {
        match s {
            Stmt::Loop(l) => label_loads(&mut l.body, nest, hazards, scope, report),
            Stmt::Instr(Instr {
                id,
                kind: InstrKind::Load { addr, pnd, .. },
            }) => {
                let mut blockers = Vec::new();
                for hazard in hazards {
                    let (hid, dep) = match hazard {
                        Hazard::Store { id: hid, addr: saddr } => {
                            (*hid, load_store_dep(addr, saddr, scope, nest))
                        }
                        Hazard::Call { id: hid, summary } => (*hid, modref_blocks(summary, addr)),
                    };
                    if dep.blocks() {
                        blockers.push(Blocker {
                            pc: hid.pc(),
                            reason: dep.reason,
                        });
                    }
                }
                *pnd = blockers.is_empty();
                report.loads.push(LoadLabel {
                    pc: id.pc(),
                    labelled: *pnd,
                    blockers,
                });
            }
            Stmt::Instr(_) => {}
        }
    }
}
