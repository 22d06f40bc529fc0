//! Store Sets memory dependence predictor.
//!
//! Two tables drive the prediction. The SSIT (store set id table) is
//! PC-indexed — it carries no tags, so two instructions whose PCs fold to
//! the same index share an entry, and such collisions are what produce
//! false dependencies. The LFST (last fetched store table) records, per
//! store set, the most recently dispatched store that has not yet issued.
//! A load that hits a valid SSIT entry whose set has a live LFST entry is
//! predicted dependent on that store.
//!
//! A clear period bounds staleness: after a fixed number of dispatched
//! memory operations both tables are wholesale invalidated.
//!
//! Loads carrying the PND flag bypass the predictor entirely: they make no
//! lookup, and a violation they cause trains nothing.
//!
//! Each SSIT entry also keeps the full PC that last wrote it. That shadow
//! PC is instrumentation only — it feeds the index-collision counter and
//! the debug dump, and never influences a prediction.

use crate::lower::Seq;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub ssit_entries: usize,
    pub lfst_entries: usize,
    /// Memory operations dispatched between wholesale table clears.
    pub clear_period: u64,
}

impl PredictorConfig {
    pub fn new(ssit_entries: usize, lfst_entries: usize, clear_period: u64) -> Self {
        assert!(ssit_entries.is_power_of_two());
        assert!(lfst_entries.is_power_of_two());
        assert!(clear_period > 0);
        PredictorConfig {
            ssit_entries,
            lfst_entries,
            clear_period,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct SsitEntry {
    valid: bool,
    ssid: usize,
    /// Instrumentation only; see module docs.
    shadow_pc: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct LfstEntry {
    valid: bool,
    store_seq: Seq,
}

/// Monotone event counters, reported into run metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorCounters {
    pub lookups: u64,
    pub index_collisions: u64,
    pub trainings: u64,
    pub clears: u64,
    /// PND loads dispatched (lookups skipped).
    pub bypassed_lookups: u64,
}

#[derive(Debug, Clone)]
pub struct StoreSetsPredictor {
    cfg: PredictorConfig,
    ssit: Vec<SsitEntry>,
    lfst: Vec<LfstEntry>,
    memops: u64,
    counters: PredictorCounters,
    shadow_enabled: bool,
}

/// Copyable view of the table state, for tests and the debug dump.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictorSnapshot {
    pub ssit: Vec<Option<(usize, u64)>>,
    pub lfst: Vec<Option<Seq>>,
}

impl StoreSetsPredictor {
    pub fn new(cfg: PredictorConfig) -> Self {
        Self::with_shadow(cfg, true)
    }

    /// `shadow` disables the shadow-PC instrumentation when false; all
    /// predictions and table state are bit-identical either way, only the
    /// collision counter stops moving.
    pub fn with_shadow(cfg: PredictorConfig, shadow: bool) -> Self {
        StoreSetsPredictor {
            ssit: vec![SsitEntry::default(); cfg.ssit_entries],
            lfst: vec![LfstEntry::default(); cfg.lfst_entries],
            memops: 0,
            counters: PredictorCounters::default(),
            shadow_enabled: shadow,
            cfg,
        }
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.cfg
    }

    pub fn counters(&self) -> PredictorCounters {
        self.counters
    }

    /// SSIT index of a PC: instructions are 4-byte aligned, so drop the low
    /// two bits and fold into the table.
    pub fn index(&self, pc: u64) -> usize {
        ((pc / 4) as usize) & (self.cfg.ssit_entries - 1)
    }

    fn ssid_of(&self, pc: u64) -> Option<usize> {
        let e = self.ssit[self.index(pc)];
        e.valid.then_some(e.ssid)
    }

    /// Load dispatch. PND loads bypass: no table is touched and no lookup
    /// is counted. Otherwise returns the sequence number of the store this
    /// load is predicted to depend on, if its set has one in flight.
    pub fn lookup_load(&mut self, pc: u64, pnd: bool) -> Option<Seq> {
        if pnd {
            self.counters.bypassed_lookups += 1;
            return None;
        }
        self.counters.lookups += 1;
        let entry = self.ssit[self.index(pc)];
        if !entry.valid {
            return None;
        }
        if self.shadow_enabled && entry.shadow_pc != pc {
            self.counters.index_collisions += 1;
        }
        let lfst = self.lfst[entry.ssid];
        lfst.valid.then_some(lfst.store_seq)
    }

    /// Store dispatch, in program order. If the store belongs to a set,
    /// returns the set's previous last-fetched store (store-store ordering
    /// within the set) and becomes the new last-fetched store.
    pub fn dispatch_store(&mut self, pc: u64, seq: Seq) -> Option<Seq> {
        let ssid = self.ssid_of(pc)?;
        let prev = self.lfst[ssid];
        self.lfst[ssid] = LfstEntry {
            valid: true,
            store_seq: seq,
        };
        prev.valid.then_some(prev.store_seq)
    }

    /// Store issue: release the LFST entry if this store still holds it.
    pub fn store_issued(&mut self, pc: u64, seq: Seq) {
        if let Some(ssid) = self.ssid_of(pc) {
            if self.lfst[ssid].valid && self.lfst[ssid].store_seq == seq {
                self.lfst[ssid].valid = false;
            }
        }
    }

    /// Train on a detected memory order violation. Violations of PND loads
    /// train nothing — neither side's entry is written, so no half-set ever
    /// forms. Otherwise the pair is merged into one store set: allocate a
    /// fresh set when neither entry is valid, adopt the valid side's set
    /// when exactly one is, and merge to the smaller ssid when both are.
    pub fn train_violation(&mut self, load_pc: u64, store_pc: u64, load_is_pnd: bool) {
        if load_is_pnd {
            return;
        }
        self.counters.trainings += 1;
        let li = self.index(load_pc);
        let si = self.index(store_pc);
        let ssid = match (self.ssit[li].valid, self.ssit[si].valid) {
            (false, false) => li & (self.cfg.lfst_entries - 1),
            (true, false) => self.ssit[li].ssid,
            (false, true) => self.ssit[si].ssid,
            (true, true) => self.ssit[li].ssid.min(self.ssit[si].ssid),
        };
        self.ssit[li] = SsitEntry {
            valid: true,
            ssid,
            shadow_pc: load_pc,
        };
        self.ssit[si] = SsitEntry {
            valid: true,
            ssid,
            shadow_pc: store_pc,
        };
    }

    /// Count one dispatched memory operation (loads and stores, PND loads
    /// included). When the clear period elapses both tables are wholesale
    /// invalidated; returns true on the tick that cleared.
    pub fn memop_tick(&mut self) -> bool {
        self.memops += 1;
        if self.memops >= self.cfg.clear_period {
            self.memops = 0;
            self.counters.clears += 1;
            self.clear_tables();
            return true;
        }
        false
    }

    /// Drop LFST entries whose store was squashed (store no longer counts
    /// as dispatched). SSIT training survives a squash.
    pub fn squash_from(&mut self, seq: Seq) {
        for e in &mut self.lfst {
            if e.valid && e.store_seq >= seq {
                e.valid = false;
            }
        }
    }

    fn clear_tables(&mut self) {
        self.ssit.fill(SsitEntry::default());
        self.lfst.fill(LfstEntry::default());
    }

    pub fn tables_empty(&self) -> bool {
        self.ssit.iter().all(|e| !e.valid) && self.lfst.iter().all(|e| !e.valid)
    }

    pub fn snapshot(&self) -> PredictorSnapshot {
        PredictorSnapshot {
            ssit: self
                .ssit
                .iter()
                .map(|e| e.valid.then_some((e.ssid, e.shadow_pc)))
                .collect(),
            lfst: self
                .lfst
                .iter()
                .map(|e| e.valid.then_some(e.store_seq))
                .collect(),
        }
    }

    /// Human-readable dump of both tables, valid entries only.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "SSIT ({} entries), LFST ({} entries), clear period {}",
            self.cfg.ssit_entries, self.cfg.lfst_entries, self.cfg.clear_period
        )
        .unwrap();
        for (i, e) in self.ssit.iter().enumerate() {
            if e.valid {
                writeln!(
                    out,
                    "  ssit[{i:4}] ssid={:4} shadow_pc={:#x}",
                    e.ssid, e.shadow_pc
                )
                .unwrap();
            }
        }
        for (i, e) in self.lfst.iter().enumerate() {
            if e.valid {
                writeln!(out, "  lfst[{i:4}] store_seq={}", e.store_seq).unwrap();
            }
        }
        out
    }
}
