//! Private caches, a shared physically indexed LLC, and DRAM banks with an
//! open-row buffer.
//!
//! Every access terminates at exactly one level: a private hit, an LLC hit,
//! or a DRAM access that is a row hit, a cold row miss, or a row conflict.
//! Lines are filled on the miss path at every level (non-inclusive: LLC
//! evictions do not invalidate private copies). Replacement is LRU with the
//! lowest invalid way filled first.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocator::{AllocError, Allocator};
use crate::mapping::{AddressMapping, MappingError, PhysAddr};
use crate::workloads::{Trace, TraceRecord};
use crate::AppId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HierarchyError {
    #[error("cache geometry {0:?} is not a power-of-two size = sets x ways x line")]
    BadGeometry(CacheConfig),
    #[error("LLC has {llc} sets but the address mapping indexes {mapping}")]
    SetCountMismatch { llc: u64, mapping: u64 },
    #[error("core {0} has no private cache")]
    UnknownCore(usize),
    #[error("latency table has no entry for '{0}'")]
    MissingLatency(String),
    #[error(transparent)]
    Mapping(#[from] MappingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheConfig {
    pub size_bytes: u64,
    pub ways: u32,
    pub line_bytes: u64,
}

impl CacheConfig {
    pub fn sets(&self) -> u64 {
        self.size_bytes / (self.ways as u64 * self.line_bytes)
    }

    pub fn validate(&self) -> Result<(), HierarchyError> {
        let ok = self.size_bytes.is_power_of_two()
            && self.line_bytes.is_power_of_two()
            && self.ways > 0
            && (self.ways as u64) * self.line_bytes <= self.size_bytes
            && self.sets().is_power_of_two()
            && self.sets() * self.ways as u64 * self.line_bytes == self.size_bytes;
        if ok {
            Ok(())
        } else {
            Err(HierarchyError::BadGeometry(*self))
        }
    }
}

/// Cycles charged per terminal outcome. Only used for relative comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, u64>", into = "BTreeMap<String, u64>")]
pub struct LatencyTable {
    pub private_hit: u64,
    pub llc_hit: u64,
    pub row_hit: u64,
    pub row_miss: u64,
    pub row_conflict: u64,
}

impl Default for LatencyTable {
    fn default() -> Self {
        Self {
            private_hit: 4,
            llc_hit: 40,
            row_hit: 120,
            row_miss: 200,
            row_conflict: 300,
        }
    }
}

const LATENCY_KEYS: [&str; 5] = ["private_hit", "llc_hit", "row_hit", "row_miss", "row_conflict"];

impl LatencyTable {
    pub fn from_map(map: &BTreeMap<String, u64>) -> Result<Self, HierarchyError> {
        let get = |k: &str| {
            map.get(k)
                .copied()
                .ok_or_else(|| HierarchyError::MissingLatency(k.to_string()))
        };
        Ok(Self {
            private_hit: get("private_hit")?,
            llc_hit: get("llc_hit")?,
            row_hit: get("row_hit")?,
            row_miss: get("row_miss")?,
            row_conflict: get("row_conflict")?,
        })
    }
}

impl TryFrom<BTreeMap<String, u64>> for LatencyTable {
    type Error = HierarchyError;

    fn try_from(map: BTreeMap<String, u64>) -> Result<Self, Self::Error> {
        Self::from_map(&map)
    }
}

impl From<LatencyTable> for BTreeMap<String, u64> {
    fn from(t: LatencyTable) -> Self {
        let vals = [t.private_hit, t.llc_hit, t.row_hit, t.row_miss, t.row_conflict];
        LATENCY_KEYS
            .iter()
            .zip(vals)
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierarchyConfig {
    pub cores: usize,
    /// One private level standing in for L1 + L2.
    pub private: CacheConfig,
    pub llc: CacheConfig,
    pub latency: LatencyTable,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            cores: 4,
            private: CacheConfig {
                size_bytes: 256 << 10,
                ways: 8,
                line_bytes: 64,
            },
            llc: CacheConfig {
                size_bytes: 8 << 20,
                ways: 16,
                line_bytes: 64,
            },
            latency: LatencyTable::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Line {
    tag: u64,
    /// 0 marks an invalid way.
    stamp: u64,
    owner: AppId,
}

/// Result of one cache lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    Hit,
    /// Line filled; `evicted` is the displaced valid line, if any.
    Miss { evicted: Option<(u64, AppId)> },
}

impl Lookup {
    pub fn is_hit(self) -> bool {
        matches!(self, Lookup::Hit)
    }
}

/// Set-associative LRU cache of line tags.
#[derive(Debug, Clone)]
pub struct SetAssocCache {
    ways: usize,
    sets: usize,
    lines: Vec<Line>,
    clock: u64,
}

impl SetAssocCache {
    pub fn new(sets: usize, ways: usize) -> Self {
        Self {
            ways,
            sets,
            lines: vec![Line::default(); sets * ways],
            clock: 0,
        }
    }

    pub fn sets(&self) -> usize {
        self.sets
    }

    /// Look `tag` up in `set`, filling it on a miss.
    pub fn access(&mut self, set: usize, tag: u64, owner: AppId) -> Lookup {
        self.clock += 1;
        let ways = &mut self.lines[set * self.ways..(set + 1) * self.ways];
        if let Some(line) = ways.iter_mut().find(|l| l.stamp != 0 && l.tag == tag) {
            line.stamp = self.clock;
            return Lookup::Hit;
        }
        let victim = match ways.iter().position(|l| l.stamp == 0) {
            Some(i) => i,
            None => {
                let mut best = 0;
                for (i, l) in ways.iter().enumerate().skip(1) {
                    if l.stamp < ways[best].stamp {
                        best = i;
                    }
                }
                best
            }
        };
        let old = ways[victim];
        ways[victim] = Line {
            tag,
            stamp: self.clock,
            owner,
        };
        Lookup::Miss {
            evicted: (old.stamp != 0).then_some((old.tag, old.owner)),
        }
    }

    pub fn contains(&self, set: usize, tag: u64) -> bool {
        self.lines[set * self.ways..(set + 1) * self.ways]
            .iter()
            .any(|l| l.stamp != 0 && l.tag == tag)
    }

    /// Sets holding at least one line owned by `owner`.
    pub fn sets_owned_by(&self, owner: AppId) -> Vec<usize> {
        (0..self.sets)
            .filter(|&s| {
                self.lines[s * self.ways..(s + 1) * self.ways]
                    .iter()
                    .any(|l| l.stamp != 0 && l.owner == owner)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BankState {
    pub open_row: Option<u64>,
    pub last_app: Option<AppId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DramOutcome {
    None,
    RowHit,
    RowMiss,
    RowConflict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessOutcome {
    pub private_hit: bool,
    pub llc_hit: bool,
    pub dram: DramOutcome,
    /// Row conflict on a row opened by another app.
    pub cross_app_conflict: bool,
    /// LLC set looked up, when the private cache missed.
    pub llc_set: Option<u64>,
    /// Owner of the LLC line displaced by the fill, if any.
    pub llc_evicted_owner: Option<AppId>,
    pub cross_app_llc_eviction: bool,
    pub bank: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub accesses: u64,
    pub private_hits: u64,
    pub llc_hits: u64,
    pub llc_misses: u64,
    pub row_hits: u64,
    pub row_misses: u64,
    pub row_conflicts: u64,
    pub cross_app_conflicts: u64,
    pub cross_app_llc_evictions: u64,
}

impl Counters {
    fn record(&mut self, o: &AccessOutcome) {
        self.accesses += 1;
        if o.private_hit {
            self.private_hits += 1;
        } else if o.llc_hit {
            self.llc_hits += 1;
        } else {
            self.llc_misses += 1;
        }
        match o.dram {
            DramOutcome::None => {}
            DramOutcome::RowHit => self.row_hits += 1,
            DramOutcome::RowMiss => self.row_misses += 1,
            DramOutcome::RowConflict => self.row_conflicts += 1,
        }
        self.cross_app_conflicts += o.cross_app_conflict as u64;
        self.cross_app_llc_evictions += o.cross_app_llc_eviction as u64;
    }

    pub fn llc_miss_rate(&self) -> f64 {
        let lookups = self.llc_hits + self.llc_misses;
        if lookups == 0 {
            0.0
        } else {
            self.llc_misses as f64 / lookups as f64
        }
    }

    pub fn row_hit_rate(&self) -> f64 {
        let dram = self.row_hits + self.row_misses + self.row_conflicts;
        if dram == 0 {
            0.0
        } else {
            self.row_hits as f64 / dram as f64
        }
    }

    pub fn add(&mut self, o: &Counters) {
        self.accesses += o.accesses;
        self.private_hits += o.private_hits;
        self.llc_hits += o.llc_hits;
        self.llc_misses += o.llc_misses;
        self.row_hits += o.row_hits;
        self.row_misses += o.row_misses;
        self.row_conflicts += o.row_conflicts;
        self.cross_app_conflicts += o.cross_app_conflicts;
        self.cross_app_llc_evictions += o.cross_app_llc_evictions;
    }
}

/// Weighted sum of terminal outcomes.
pub fn proxy_cycles(c: &Counters, lat: &LatencyTable) -> u64 {
    c.private_hits * lat.private_hit
        + c.llc_hits * lat.llc_hit
        + c.row_hits * lat.row_hit
        + c.row_misses * lat.row_miss
        + c.row_conflicts * lat.row_conflict
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metrics {
    pub global: Counters,
    /// Indexed by `AppId`.
    pub per_app: Vec<Counters>,
}

impl Metrics {
    fn record(&mut self, app: AppId, o: &AccessOutcome) {
        self.global.record(o);
        let i = app.0 as usize;
        if self.per_app.len() <= i {
            self.per_app.resize(i + 1, Counters::default());
        }
        self.per_app[i].record(o);
    }

    pub fn app(&self, app: AppId) -> Counters {
        self.per_app.get(app.0 as usize).copied().unwrap_or_default()
    }

    pub fn report(&self, names: &[String], lat: &LatencyTable) -> MetricsReport {
        MetricsReport {
            global: CountersReport::new(&self.global, lat),
            per_app: self
                .per_app
                .iter()
                .enumerate()
                .filter(|(_, c)| c.accesses > 0)
                .map(|(i, c)| {
                    let name = names.get(i).cloned().unwrap_or_else(|| format!("app{i}"));
                    (name, CountersReport::new(c, lat))
                })
                .collect(),
        }
    }
}

/// Serialized form of a counter set with derived values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountersReport {
    #[serde(flatten)]
    pub counters: Counters,
    pub proxy_cycles: u64,
    pub llc_miss_rate: f64,
    pub row_hit_rate: f64,
}

impl CountersReport {
    pub fn new(c: &Counters, lat: &LatencyTable) -> Self {
        Self {
            counters: *c,
            proxy_cycles: proxy_cycles(c, lat),
            llc_miss_rate: c.llc_miss_rate(),
            row_hit_rate: c.row_hit_rate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub global: CountersReport,
    pub per_app: BTreeMap<String, CountersReport>,
}

#[derive(Debug, Clone)]
pub struct Hierarchy {
    mapping: AddressMapping,
    cfg: HierarchyConfig,
    private: Vec<SetAssocCache>,
    llc: SetAssocCache,
    banks: Vec<BankState>,
    metrics: Metrics,
}

impl Hierarchy {
    pub fn new(cfg: HierarchyConfig, mapping: &AddressMapping) -> Result<Self, HierarchyError> {
        cfg.private.validate()?;
        cfg.llc.validate()?;
        if cfg.llc.sets() != mapping.set_count() {
            return Err(HierarchyError::SetCountMismatch {
                llc: cfg.llc.sets(),
                mapping: mapping.set_count(),
            });
        }
        let private = (0..cfg.cores)
            .map(|_| SetAssocCache::new(cfg.private.sets() as usize, cfg.private.ways as usize))
            .collect();
        Ok(Self {
            mapping: mapping.clone(),
            private,
            llc: SetAssocCache::new(cfg.llc.sets() as usize, cfg.llc.ways as usize),
            banks: vec![BankState::default(); mapping.bank_count() as usize],
            metrics: Metrics::default(),
            cfg,
        })
    }

    pub fn config(&self) -> &HierarchyConfig {
        &self.cfg
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn llc(&self) -> &SetAssocCache {
        &self.llc
    }

    pub fn bank(&self, id: u64) -> BankState {
        self.banks[id as usize]
    }

    pub fn access(&mut self, core: usize, app: AppId, a: PhysAddr) -> Result<AccessOutcome, HierarchyError> {
        self.mapping.check_addr(a)?;
        let private = self
            .private
            .get_mut(core)
            .ok_or(HierarchyError::UnknownCore(core))?;
        let line = a.0 / self.cfg.private.line_bytes;
        let pset = (line % private.sets() as u64) as usize;
        let mut out = AccessOutcome {
            private_hit: false,
            llc_hit: false,
            dram: DramOutcome::None,
            cross_app_conflict: false,
            llc_set: None,
            llc_evicted_owner: None,
            cross_app_llc_eviction: false,
            bank: None,
        };
        if private.access(pset, line, app).is_hit() {
            out.private_hit = true;
        } else {
            let d = self.mapping.decompose_unchecked(a);
            out.llc_set = Some(d.set_id);
            match self.llc.access(d.set_id as usize, d.line_tag, app) {
                Lookup::Hit => out.llc_hit = true,
                Lookup::Miss { evicted } => {
                    if let Some((_, owner)) = evicted {
                        out.llc_evicted_owner = Some(owner);
                        out.cross_app_llc_eviction = owner != app;
                    }
                    out.bank = Some(d.bank_id);
                    let bank = &mut self.banks[d.bank_id as usize];
                    out.dram = match bank.open_row {
                        None => DramOutcome::RowMiss,
                        Some(r) if r == d.row_id => DramOutcome::RowHit,
                        Some(_) => {
                            out.cross_app_conflict = bank.last_app != Some(app);
                            DramOutcome::RowConflict
                        }
                    };
                    bank.open_row = Some(d.row_id);
                    bank.last_app = Some(app);
                }
            }
        }
        self.metrics.record(app, &out);
        Ok(out)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("trace record {index}: {source}")]
pub struct RunError {
    pub index: usize,
    pub source: SimError,
}

/// Cumulative global counters after an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EpochSnapshot {
    pub epoch: usize,
    pub records: u64,
    #[serde(flatten)]
    pub counters: Counters,
    pub proxy_cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult {
    pub metrics: Metrics,
    pub epochs: Vec<EpochSnapshot>,
}

/// Translate one record through the allocator and push it down the
/// hierarchy.
pub fn step(alloc: &mut Allocator, hier: &mut Hierarchy, rec: &TraceRecord) -> Result<AccessOutcome, SimError> {
    let page_bits = alloc.mapping().page_offset_bits;
    let pfn = alloc.touch(rec.app, rec.vaddr >> page_bits)?;
    let paddr = (pfn.0 << page_bits) | (rec.vaddr & ((1 << page_bits) - 1));
    Ok(hier.access(rec.core as usize, rec.app, PhysAddr(paddr))?)
}

/// Replay `trace` in order. A snapshot is taken every `epoch_len` records
/// (0 disables snapshots) and after the last record.
pub fn run_trace(
    trace: &Trace,
    alloc: &mut Allocator,
    hier: &mut Hierarchy,
    epoch_len: u64,
) -> Result<RunResult, RunError> {
    let lat = hier.config().latency;
    let mut epochs = Vec::new();
    let snapshot = |hier: &Hierarchy, records: u64, epochs: &mut Vec<EpochSnapshot>| {
        let counters = hier.metrics().global;
        epochs.push(EpochSnapshot {
            epoch: epochs.len(),
            records,
            counters,
            proxy_cycles: proxy_cycles(&counters, &lat),
        });
    };
    for (index, rec) in trace.records.iter().enumerate() {
        step(alloc, hier, rec).map_err(|source| RunError { index, source })?;
        let done = index as u64 + 1;
        if epoch_len > 0 && done.is_multiple_of(epoch_len) {
            snapshot(hier, done, &mut epochs);
        }
    }
    let n = trace.records.len() as u64;
    if n > 0 && (epoch_len == 0 || !n.is_multiple_of(epoch_len)) {
        snapshot(hier, n, &mut epochs);
    }
    Ok(RunResult {
        metrics: hier.metrics().clone(),
        epochs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::AllocatorConfig;
    use crate::policies::{policy_spec, PolicyKind};
    use crate::workloads::Op;

    const A: AppId = AppId(0);
    const B: AppId = AppId(1);

    fn hier() -> Hierarchy {
        Hierarchy::new(HierarchyConfig::default(), &AddressMapping::default()).unwrap()
    }

    #[test]
    fn default_geometry() {
        let c = HierarchyConfig::default();
        assert_eq!(c.llc.sets(), 8192);
        assert_eq!(c.private.sets(), 512);
        let bad = CacheConfig {
            size_bytes: 3000,
            ways: 2,
            line_bytes: 64,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn llc_must_match_mapping() {
        let mut c = HierarchyConfig::default();
        c.llc.size_bytes = 4 << 20;
        assert!(matches!(
            Hierarchy::new(c, &AddressMapping::default()),
            Err(HierarchyError::SetCountMismatch { .. })
        ));
    }

    #[test]
    fn repeat_access_hits_private() {
        let mut h = hier();
        let first = h.access(0, A, PhysAddr(0x1234_5000)).unwrap();
        assert!(!first.private_hit && !first.llc_hit);
        assert_eq!(first.dram, DramOutcome::RowMiss);
        let second = h.access(0, A, PhysAddr(0x1234_5000)).unwrap();
        assert!(second.private_hit);
        assert_eq!(second.dram, DramOutcome::None);
        // another core misses privately but hits the shared LLC
        let third = h.access(1, B, PhysAddr(0x1234_5000)).unwrap();
        assert!(!third.private_hit && third.llc_hit);
    }

    #[test]
    fn ping_pong_on_one_bank_conflicts_across_apps() {
        let mut h = hier();
        // same bank (all index bits zero), rows 1 and 2
        let ra = PhysAddr(1 << 23);
        let rb = PhysAddr(2 << 23);
        let seq = [(A, ra), (B, rb), (A, PhysAddr(ra.0 + 64)), (B, PhysAddr(rb.0 + 64))];
        let outs: Vec<AccessOutcome> = seq
            .iter()
            .enumerate()
            .map(|(core, &(app, a))| h.access(core, app, a).unwrap())
            .collect();
        assert_eq!(outs[0].dram, DramOutcome::RowMiss);
        for o in &outs[1..] {
            assert_eq!(o.dram, DramOutcome::RowConflict);
            assert!(o.cross_app_conflict);
        }
        assert_eq!(h.metrics().global.cross_app_conflicts, 3);
    }

    #[test]
    fn same_app_conflict_is_not_cross_app() {
        let mut h = hier();
        h.access(0, A, PhysAddr(1 << 23)).unwrap();
        let o = h.access(0, A, PhysAddr(2 << 23)).unwrap();
        assert_eq!(o.dram, DramOutcome::RowConflict);
        assert!(!o.cross_app_conflict);
    }

    #[test]
    fn lru_evicts_oldest_way() {
        let mut c = SetAssocCache::new(1, 2);
        assert_eq!(c.access(0, 1, A), Lookup::Miss { evicted: None });
        assert_eq!(c.access(0, 2, B), Lookup::Miss { evicted: None });
        assert_eq!(c.access(0, 1, A), Lookup::Hit);
        assert_eq!(c.access(0, 3, A), Lookup::Miss { evicted: Some((2, B)) });
        assert!(c.contains(0, 1) && c.contains(0, 3) && !c.contains(0, 2));
    }

    #[test]
    fn proxy_cycles_is_linear() {
        let lat = LatencyTable::default();
        assert_eq!(proxy_cycles(&Counters::default(), &lat), 0);
        let c = Counters {
            private_hits: 10,
            accesses: 10,
            ..Default::default()
        };
        assert_eq!(proxy_cycles(&c, &lat), 40);
        let c = Counters {
            accesses: 9,
            private_hits: 1,
            llc_hits: 2,
            llc_misses: 6,
            row_hits: 3,
            row_misses: 2,
            row_conflicts: 1,
            ..Default::default()
        };
        let mut d = c;
        d.add(&c);
        assert_eq!(proxy_cycles(&d, &lat), 2 * proxy_cycles(&c, &lat));
    }

    #[test]
    fn latency_table_requires_every_entry() {
        let mut map: BTreeMap<String, u64> = LatencyTable::default().into();
        assert_eq!(LatencyTable::from_map(&map).unwrap(), LatencyTable::default());
        map.remove("row_conflict");
        assert_eq!(
            LatencyTable::from_map(&map),
            Err(HierarchyError::MissingLatency("row_conflict".into()))
        );
    }

    #[test]
    fn empty_trace_gives_zero_metrics() {
        let m = AddressMapping::default();
        let mut alloc = Allocator::new(
            1 << 21,
            policy_spec(PolicyKind::Interleaving, &m).unwrap(),
            &m,
            AllocatorConfig::default(),
        );
        let mut h = hier();
        let r = run_trace(&Trace::default(), &mut alloc, &mut h, 100).unwrap();
        assert_eq!(r.metrics, Metrics::default());
        assert!(r.epochs.is_empty());
    }

    #[test]
    fn run_trace_reports_failing_index() {
        let m = AddressMapping::default();
        let mut alloc = Allocator::new(
            16,
            policy_spec(PolicyKind::Interleaving, &m).unwrap(),
            &m,
            AllocatorConfig::default(),
        );
        alloc.register(A);
        let mut t = Trace::default();
        t.app_names.push("A".into());
        for p in 0..20u64 {
            t.records.push(TraceRecord {
                app: A,
                core: 0,
                vaddr: p << 12,
                op: Op::Read,
            });
        }
        let err = run_trace(&t, &mut alloc, &mut hier(), 0).unwrap_err();
        assert_eq!(err.index, 16);
        assert!(matches!(err.source, SimError::Alloc(AllocError::OutOfMemory { .. })));
    }

    #[test]
    fn epochs_are_cumulative() {
        let m = AddressMapping::default();
        let mut alloc = Allocator::new(
            1 << 21,
            policy_spec(PolicyKind::Interleaving, &m).unwrap(),
            &m,
            AllocatorConfig::default(),
        );
        alloc.register(A);
        let mut t = Trace::default();
        t.app_names.push("A".into());
        for i in 0..25u64 {
            t.records.push(TraceRecord {
                app: A,
                core: 0,
                vaddr: i * 64,
                op: Op::Read,
            });
        }
        let r = run_trace(&t, &mut alloc, &mut hier(), 10).unwrap();
        let recs: Vec<u64> = r.epochs.iter().map(|e| e.records).collect();
        assert_eq!(recs, [10, 20, 25]);
        assert!(r.epochs.windows(2).all(|w| w[0].proxy_cycles <= w[1].proxy_cycles));
        assert_eq!(r.epochs[2].counters, r.metrics.global);
    }
}
