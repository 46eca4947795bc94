//! Application categories and how to assign them.
//!
//! The offline oracle runs an app twice, once with the whole LLC and once
//! confined to one eighth of it, and classifies by the relative slowdown.
//! The online classifier only looks at page-table state: JOB1 counts hot
//! pages by scanning and clearing access bits every sampling period, JOB2
//! buckets per-page access counters into power-of-two ranges and reduces
//! them to a weighted page distribution (WPD).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocator::{AllocError, Allocator, AllocatorConfig};
use crate::hierarchy::{proxy_cycles, run_trace, Hierarchy, HierarchyConfig, HierarchyError, RunError};
use crate::mapping::AddressMapping;
use crate::policies::{PolicyKind, PolicySpec};
use crate::workloads::{ArchetypeKind, Trace};
use crate::AppId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "CCF", alias = "ccf")]
    Ccf,
    #[serde(rename = "LLCT", alias = "llct")]
    Llct,
    #[serde(rename = "LLCM", alias = "llcm")]
    Llcm,
    #[serde(rename = "LLCH", alias = "llch")]
    Llch,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Ccf, Category::Llct, Category::Llcm, Category::Llch];

    pub fn name(self) -> &'static str {
        match self {
            Category::Ccf => "CCF",
            Category::Llct => "LLCT",
            Category::Llcm => "LLCM",
            Category::Llch => "LLCH",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = ClassifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ClassifyError::UnknownCategory(s.to_string()))
    }
}

impl From<ArchetypeKind> for Category {
    fn from(k: ArchetypeKind) -> Self {
        match k {
            ArchetypeKind::Ccf => Category::Ccf,
            ArchetypeKind::Llct => Category::Llct,
            ArchetypeKind::Llcm => Category::Llcm,
            ArchetypeKind::Llch => Category::Llch,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("unknown category '{0}'")]
    UnknownCategory(String),
    #[error("empty trace")]
    EmptyTrace,
    #[error("all page counters are zero")]
    NoAccesses,
    #[error("no completed sampling interval")]
    NoEvidence,
    #[error("mapping has {have} C/O bits, the 1/8 quota needs 3")]
    TooFewColorBits { have: usize },
    #[error("invalid sampler config: {0}")]
    BadSampler(String),
    #[error("invalid thresholds: {0}")]
    BadThresholds(String),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// Sampling period and the WPD bucketing.
///
/// Bucket `b` holds counts in `[2^b, 2^(b+1))`; the last bucket is open
/// ended. Weight of bucket `b` defaults to `b + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub period: u64,
    pub buckets: usize,
    pub weights: Option<Vec<f64>>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            period: 100_000,
            buckets: 32,
            weights: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        let bad = |m: &str| Err(ClassifyError::BadSampler(m.to_string()));
        if self.period == 0 {
            return bad("period must be > 0");
        }
        if self.buckets == 0 || self.buckets > 64 {
            return bad("buckets must be in 1..=64");
        }
        if let Some(w) = &self.weights {
            if w.len() != self.buckets {
                return bad("one weight per bucket");
            }
            if w.windows(2).any(|p| p[1] < p[0]) || w.iter().any(|x| !x.is_finite()) {
                return bad("weights must be finite and non-decreasing");
            }
        }
        Ok(())
    }

    pub fn bucket(&self, count: u64) -> usize {
        debug_assert!(count > 0);
        (63 - count.leading_zeros() as usize).min(self.buckets - 1)
    }

    pub fn weight(&self, bucket: usize) -> f64 {
        match &self.weights {
            Some(w) => w[bucket],
            None => (bucket + 1) as f64,
        }
    }
}

/// JOB2's reduction: mean bucket weight over touched pages. Zero counters
/// are untouched pages and do not count.
pub fn job2_wpd(counters: &[u64], cfg: &SamplerConfig) -> Result<f64, ClassifyError> {
    let mut hist = vec![0u64; cfg.buckets];
    for &c in counters.iter().filter(|&&c| c > 0) {
        hist[cfg.bucket(c)] += 1;
    }
    let touched: u64 = hist.iter().sum();
    if touched == 0 {
        return Err(ClassifyError::NoAccesses);
    }
    let weighted: f64 = hist
        .iter()
        .enumerate()
        .map(|(b, &n)| cfg.weight(b) * n as f64)
        .sum();
    Ok(weighted / touched as f64)
}

/// JOB1: hot pages since the last scan.
pub fn job1_step(alloc: &mut Allocator, app: AppId) -> Result<u64, ClassifyError> {
    Ok(alloc.access_bit_scan_and_clear(app)?)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OnlineEvidence {
    /// JOB1 result per interval.
    pub hot_pages: Vec<u64>,
    /// JOB2 result per interval.
    pub interval_wpd: Vec<f64>,
    /// Cumulative access count per virtual page.
    #[serde(skip)]
    pub access_counters: BTreeMap<u64, u64>,
}

impl OnlineEvidence {
    pub fn mean_hot_pages(&self) -> Option<f64> {
        if self.hot_pages.is_empty() {
            return None;
        }
        Some(self.hot_pages.iter().sum::<u64>() as f64 / self.hot_pages.len() as f64)
    }

    pub fn wpd(&self) -> Option<f64> {
        if self.interval_wpd.is_empty() {
            return None;
        }
        Some(self.interval_wpd.iter().sum::<f64>() / self.interval_wpd.len() as f64)
    }
}

/// Replay `app`'s records of `trace` through the allocator only, running
/// JOB1 and JOB2 at the end of every `period` accesses.
///
/// A trailing partial interval is used only when no interval completed.
pub fn collect_evidence(
    trace: &Trace,
    app: AppId,
    alloc: &mut Allocator,
    cfg: &SamplerConfig,
) -> Result<OnlineEvidence, ClassifyError> {
    cfg.validate()?;
    let page_bits = alloc.mapping().page_offset_bits;
    alloc.register(app);
    job1_step(alloc, app)?;
    let mut ev = OnlineEvidence::default();
    let mut interval: HashMap<u64, u64> = HashMap::new();
    let mut in_interval = 0u64;
    let close = |alloc: &mut Allocator, interval: &mut HashMap<u64, u64>, ev: &mut OnlineEvidence| {
        let hot = job1_step(alloc, app)?;
        let counts: Vec<u64> = interval.values().copied().collect();
        let wpd = job2_wpd(&counts, cfg)?;
        ev.hot_pages.push(hot);
        ev.interval_wpd.push(wpd);
        interval.clear();
        Ok::<(), ClassifyError>(())
    };
    for r in trace.records.iter().filter(|r| r.app == app) {
        let vpn = r.vaddr >> page_bits;
        alloc.touch(app, vpn)?;
        *interval.entry(vpn).or_insert(0) += 1;
        *ev.access_counters.entry(vpn).or_insert(0) += 1;
        in_interval += 1;
        if in_interval == cfg.period {
            close(alloc, &mut interval, &mut ev)?;
            in_interval = 0;
        }
    }
    if ev.hot_pages.is_empty() && in_interval > 0 {
        close(alloc, &mut interval, &mut ev)?;
    }
    Ok(ev)
}

/// Online evidence for a single-app trace, sampled on a fresh interleaved
/// allocator.
pub fn sample_app(trace: &Trace, app: AppId, m: &AddressMapping, cfg: &SamplerConfig) -> Result<OnlineEvidence, ClassifyError> {
    let spec = PolicySpec::from_bits(PolicyKind::Interleaving, &[], m).expect("interleave has no bits");
    let mut alloc = Allocator::new(m.total_pages(), spec, m, AllocatorConfig::default());
    collect_evidence(trace, app, &mut alloc, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub hot_page_low: f64,
    pub hot_page_high: f64,
    pub wpd_low: f64,
    pub wpd_high: f64,
    /// Offline: slowdown below this is quota-insensitive (CCF or LLCT).
    pub d_ccf_llct: f64,
    /// Offline: slowdown at or above this is LLCH.
    pub d_llch: f64,
    /// Offline: footprint separating CCF from LLCT. `None` uses the private
    /// cache capacity.
    pub footprint_pages: Option<u64>,
}

impl Default for Thresholds {
    /// Online values are the output of `calibrate` over the canonical and
    /// randomized archetype corpora (`examples/calibrate.rs`), rounded. The
    /// search collapsed the hot-page band to a single cut: CCF sits below
    /// it, everything else above, and WPD does the rest.
    fn default() -> Self {
        Self {
            hot_page_low: 96.0,
            hot_page_high: 96.0,
            wpd_low: 1.2,
            wpd_high: 5.0,
            d_ccf_llct: 0.05,
            d_llch: 0.20,
            footprint_pages: None,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        let bad = |m: &str| Err(ClassifyError::BadThresholds(m.to_string()));
        if self.hot_page_low > self.hot_page_high {
            return bad("hot_page_low > hot_page_high");
        }
        if self.wpd_low > self.wpd_high {
            return bad("wpd_low > wpd_high");
        }
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !unit(self.d_ccf_llct) || !unit(self.d_llch) || self.d_ccf_llct > self.d_llch {
            return bad("cutoffs must satisfy 0 < d_ccf_llct <= d_llch < 1");
        }
        Ok(())
    }
}

/// Decision over mean hot pages `h` and WPD `w`. Boundaries belong to the
/// `>=` / `<=` side named in each rule.
pub fn classify_features(h: f64, w: f64, t: &Thresholds) -> Category {
    if h <= t.hot_page_low {
        Category::Ccf
    } else if h >= t.hot_page_high && w <= t.wpd_low {
        Category::Llct
    } else if h >= t.hot_page_high && w >= t.wpd_high {
        Category::Llch
    } else {
        Category::Llcm
    }
}

pub fn classify_online(ev: &OnlineEvidence, t: &Thresholds) -> Result<Category, ClassifyError> {
    let h = ev.mean_hot_pages().ok_or(ClassifyError::NoEvidence)?;
    let w = ev.wpd().ok_or(ClassifyError::NoEvidence)?;
    Ok(classify_features(h, w, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OfflineVerdict {
    pub category: Category,
    /// Relative proxy-cycle increase from the full LLC to one eighth.
    pub degradation: f64,
    pub cycles_full: u64,
    pub cycles_eighth: u64,
    pub footprint_pages: u64,
}

/// The eight-group LLC partition used by the oracle: the three lowest
/// C ∪ O bits.
pub fn eighth_spec(m: &AddressMapping) -> Result<PolicySpec, ClassifyError> {
    let mut bits: Vec<u32> = m.c_bits.iter().chain(&m.o_bits).copied().collect();
    bits.sort_unstable();
    if bits.len() < 3 {
        return Err(ClassifyError::TooFewColorBits { have: bits.len() });
    }
    bits.truncate(3);
    Ok(PolicySpec::from_bits(PolicyKind::CVp, &bits, m).expect("C/O bits are colorable"))
}

fn run_with_quota(
    trace: &Trace,
    m: &AddressMapping,
    hcfg: &HierarchyConfig,
    spec: &PolicySpec,
    colors: &[u32],
) -> Result<u64, ClassifyError> {
    let mut alloc = Allocator::new(m.total_pages(), spec.clone(), m, AllocatorConfig::default());
    for app in trace.apps() {
        alloc.register(app);
        alloc.assign_quota(app, colors)?;
    }
    let mut hcfg = *hcfg;
    hcfg.cores = hcfg.cores.max(1 + trace.records.iter().map(|r| r.core as usize).max().unwrap_or(0));
    let mut hier = Hierarchy::new(hcfg, m)?;
    let r = run_trace(trace, &mut alloc, &mut hier, 0)?;
    Ok(proxy_cycles(&r.metrics.global, &hcfg.latency))
}

/// Classify a single-app trace by its slowdown when its LLC share drops from
/// 8/8 to 1/8.
pub fn classify_offline(
    trace: &Trace,
    m: &AddressMapping,
    hcfg: &HierarchyConfig,
    t: &Thresholds,
) -> Result<OfflineVerdict, ClassifyError> {
    if trace.records.is_empty() {
        return Err(ClassifyError::EmptyTrace);
    }
    let spec = eighth_spec(m)?;
    let all: Vec<u32> = spec.colors().collect();
    let cycles_full = run_with_quota(trace, m, hcfg, &spec, &all)?;
    let cycles_eighth = run_with_quota(trace, m, hcfg, &spec, &[0])?;
    let degradation = (cycles_eighth as f64 - cycles_full as f64) / cycles_full.max(1) as f64;
    let footprint_pages = trace.apps().map(|a| trace.distinct_pages(a) as u64).sum();
    let capacity = t
        .footprint_pages
        .unwrap_or(hcfg.private.size_bytes / m.page_bytes());
    let category = if degradation < t.d_ccf_llct {
        if footprint_pages <= capacity {
            Category::Ccf
        } else {
            Category::Llct
        }
    } else if degradation >= t.d_llch {
        Category::Llch
    } else {
        Category::Llcm
    };
    Ok(OfflineVerdict {
        category,
        degradation,
        cycles_full,
        cycles_eighth,
        footprint_pages,
    })
}

/// One labelled point for threshold calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample {
    pub hot_pages: f64,
    pub wpd: f64,
    pub label: Category,
}

struct Cut {
    value: f64,
    gap: f64,
}

/// Thresholds strictly between neighbouring distinct values, plus one below
/// and one above the range. `log` measures gaps on a log scale.
fn cuts(values: impl Iterator<Item = f64>, log: bool) -> Vec<Cut> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    let mut out = Vec::new();
    let Some(&first) = v.first() else {
        return out;
    };
    let last = *v.last().unwrap();
    out.push(Cut {
        value: if log { first / 2.0 } else { first - 1.0 },
        gap: 0.0,
    });
    for p in v.windows(2) {
        let (value, gap) = if log {
            ((p[0].max(1e-9) * p[1]).sqrt(), (p[1] / p[0].max(1e-9)).ln())
        } else {
            ((p[0] + p[1]) / 2.0, p[1] - p[0])
        };
        out.push(Cut { value, gap });
    }
    out.push(Cut {
        value: if log { last * 2.0 } else { last + 1.0 },
        gap: 0.0,
    });
    out
}

/// Grid search over online thresholds maximizing agreement with the labels.
/// Ties go to the candidate with the widest margins. Offline cutoffs are
/// copied from `base`.
pub fn calibrate(samples: &[CalibrationSample], base: &Thresholds) -> (Thresholds, usize) {
    let hcuts = cuts(samples.iter().map(|s| s.hot_pages.max(1e-9)), true);
    let wcuts = cuts(samples.iter().map(|s| s.wpd), false);
    let mut best = (*base, 0usize, f64::NEG_INFINITY);
    for (i, lo) in hcuts.iter().enumerate() {
        for hi in &hcuts[i..] {
            let mut fixed = 0usize;
            let mut upper = Vec::new();
            for s in samples {
                let h = s.hot_pages;
                if h <= lo.value {
                    fixed += (s.label == Category::Ccf) as usize;
                } else if h >= hi.value {
                    upper.push((s.wpd, s.label));
                } else {
                    fixed += (s.label == Category::Llcm) as usize;
                }
            }
            for (a, wl) in wcuts.iter().enumerate() {
                for wh in &wcuts[a..] {
                    let correct = fixed
                        + upper
                            .iter()
                            .filter(|&&(w, label)| {
                                let got = if w <= wl.value {
                                    Category::Llct
                                } else if w >= wh.value {
                                    Category::Llch
                                } else {
                                    Category::Llcm
                                };
                                got == label
                            })
                            .count();
                    let margin = lo.gap + hi.gap + wl.gap + wh.gap;
                    if (correct, margin) > (best.1, best.2) {
                        best = (
                            Thresholds {
                                hot_page_low: lo.value,
                                hot_page_high: hi.value,
                                wpd_low: wl.value,
                                wpd_high: wh.value,
                                ..*base
                            },
                            correct,
                            margin,
                        );
                    }
                }
            }
        }
    }
    (best.0, best.1)
}
