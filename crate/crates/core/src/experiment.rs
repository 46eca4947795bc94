//! Experiment configuration and the commands behind the CLI.
//!
//! Every command computes its full output in memory before anything is
//! written, so a failing run leaves no partial files behind.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advisor::{advise, even_split, plan_quotas, AdviceContext, AdviceInput, AppProfile, PolicyDecision, WorkloadProfile};
use crate::allocator::{AllocRecord, Allocator, AllocatorConfig};
use crate::classifier::{classify_offline, classify_online, sample_app, Category, OfflineVerdict, SamplerConfig, Thresholds};
use crate::hierarchy::{run_trace, EpochSnapshot, Hierarchy, HierarchyConfig, MetricsReport};
use crate::mapping::AddressMapping;
use crate::policies::{PolicyKind, PolicyTable};
use crate::workloads::{gen, mix, read_trace, write_trace, ArchetypeKind, ArchetypeParams, Reuse, Trace};
use crate::AppId;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl ExpError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExpError::Usage(_) => 1,
            ExpError::Config(_) => 2,
            ExpError::Runtime(_) => 3,
        }
    }
}

fn runtime(e: impl fmt::Display) -> ExpError {
    ExpError::Runtime(e.to_string())
}

fn config(e: impl fmt::Display) -> ExpError {
    ExpError::Config(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PolicyChoice {
    #[default]
    Auto,
    Fixed(PolicyKind),
}

impl FromStr for PolicyChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(PolicyChoice::Auto);
        }
        s.parse::<PolicyKind>().map(PolicyChoice::Fixed).map_err(|e| e.to_string())
    }
}

impl TryFrom<String> for PolicyChoice {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PolicyChoice> for String {
    fn from(p: PolicyChoice) -> Self {
        match p {
            PolicyChoice::Auto => "auto".into(),
            PolicyChoice::Fixed(k) => k.name().into(),
        }
    }
}

/// A `[[workload]]` entry: either a trace file or archetype parameters.
/// Unset archetype fields take the canonical value for the kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    pub name: Option<String>,
    pub trace: Option<PathBuf>,
    pub kind: Option<ArchetypeKind>,
    pub pages: Option<u64>,
    pub accesses: Option<u64>,
    pub reuse: Option<Reuse>,
    pub stride: Option<u64>,
    pub seed: Option<u64>,
}

pub fn kind_name(k: ArchetypeKind) -> &'static str {
    match k {
        ArchetypeKind::Ccf => "ccf",
        ArchetypeKind::Llct => "llct",
        ArchetypeKind::Llcm => "llcm",
        ArchetypeKind::Llch => "llch",
    }
}

impl WorkloadSpec {
    pub fn archetype(kind: ArchetypeKind) -> Self {
        Self {
            kind: Some(kind),
            ..Default::default()
        }
    }

    fn validate(&self, i: usize) -> Result<(), ExpError> {
        let tuned = self.pages.is_some()
            || self.accesses.is_some()
            || self.reuse.is_some()
            || self.stride.is_some()
            || self.seed.is_some();
        match (&self.trace, &self.kind) {
            (Some(_), Some(_)) => Err(config(format!("workload {i}: give either trace or kind, not both"))),
            (None, None) => Err(config(format!("workload {i}: needs trace or kind"))),
            (Some(_), None) if tuned => Err(config(format!("workload {i}: archetype fields need kind"))),
            _ => Ok(()),
        }
    }

    /// Parameters for an archetype entry; the default seed is offset by the
    /// entry's position so identical entries differ.
    pub fn params(&self, i: usize, base_seed: u64) -> Option<ArchetypeParams> {
        let kind = self.kind?;
        let c = ArchetypeParams::canonical(kind, self.seed.unwrap_or(base_seed.wrapping_add(i as u64)));
        Some(ArchetypeParams {
            working_set_pages: self.pages.unwrap_or(c.working_set_pages),
            access_count: self.accesses.unwrap_or(c.access_count),
            reuse: self.reuse.unwrap_or(c.reuse),
            stride: self.stride.unwrap_or(c.stride),
            ..c
        })
    }

    pub fn app_name(&self, i: usize) -> String {
        match (&self.name, self.kind) {
            (Some(n), _) => n.clone(),
            (None, Some(k)) => format!("{}{i}", kind_name(k)),
            (None, None) => format!("w{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub policy: PolicyChoice,
    pub multithreaded: bool,
    /// Records per app per round-robin turn when mixing.
    pub interleave: usize,
    /// Records between epoch snapshots; 0 keeps only the final one.
    pub epoch: u64,
    pub out_dir: Option<PathBuf>,
    pub mapping: AddressMapping,
    pub policies: PolicyTable,
    pub hierarchy: HierarchyConfig,
    pub sampler: SamplerConfig,
    pub thresholds: Thresholds,
    #[serde(rename = "workload")]
    pub workloads: Vec<WorkloadSpec>,
    #[serde(rename = "profile")]
    pub profile: Vec<AppProfile>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            policy: PolicyChoice::Auto,
            multithreaded: false,
            interleave: 1,
            epoch: 100_000,
            out_dir: None,
            mapping: AddressMapping::default(),
            policies: PolicyTable::default(),
            hierarchy: HierarchyConfig::default(),
            sampler: SamplerConfig::default(),
            thresholds: Thresholds::default(),
            workloads: Vec::new(),
            profile: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ExpError> {
        let cfg: Self = toml::from_str(text).map_err(config)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load and validate a config. Relative trace paths are resolved against
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self, ExpError> {
        let text = fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for w in &mut cfg.workloads {
            if let Some(t) = &w.trace {
                if t.is_relative() {
                    w.trace = Some(base.join(t));
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExpError> {
        let report = self.mapping.validate();
        if !report.is_ok() {
            let v: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
            return Err(config(format!("mapping: {}", v.join("; "))));
        }
        Hierarchy::new(self.hierarchy, &self.mapping).map_err(config)?;
        self.sampler.validate().map_err(config)?;
        self.thresholds.validate().map_err(config)?;
        for &k in self.policies.overrides.keys() {
            self.policies.spec(k, &self.mapping).map_err(config)?;
        }
        if self.interleave == 0 {
            return Err(config("interleave must be >= 1"));
        }
        for (i, w) in self.workloads.iter().enumerate() {
            w.validate(i)?;
            if let Some(p) = w.params(i, self.seed) {
                p.validate().map_err(|e| config(format!("workload {i}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn cores(&self) -> usize {
        self.hierarchy.cores
    }

    fn advice_context(&self) -> AdviceContext {
        AdviceContext {
            mapping: self.mapping.clone(),
            policies: self.policies.clone(),
            sampler: self.sampler.clone(),
            thresholds: self.thresholds,
        }
    }

    /// One single-app trace per app. Trace files holding several apps are
    /// split by app.
    pub fn load_traces(&self) -> Result<Vec<Trace>, ExpError> {
        let mut out = Vec::new();
        for (i, w) in self.workloads.iter().enumerate() {
            if let Some(p) = w.params(i, self.seed) {
                out.push(gen(&p, &w.app_name(i)).map_err(config)?);
                continue;
            }
            let path = w.trace.as_ref().expect("validated");
            let t = read_trace(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
            if let (Some(name), 1) = (&w.name, t.app_names.len()) {
                let mut t = t;
                t.app_names[0] = name.clone();
                out.push(t);
            } else {
                out.extend(t.apps().map(|a| t.project(a)));
            }
        }
        let mut seen = BTreeSet::new();
        for t in &out {
            for n in &t.app_names {
                if !seen.insert(n.clone()) {
                    return Err(config(format!("duplicate app '{n}'")));
                }
            }
        }
        Ok(out)
    }

    fn workload_traces(&self) -> Result<Vec<Trace>, ExpError> {
        if self.workloads.is_empty() {
            return Err(ExpError::Usage("no [[workload]] entries".into()));
        }
        let traces = self.load_traces()?;
        if traces.iter().all(|t| t.records.is_empty()) {
            return Err(ExpError::Usage("workloads contain no records".into()));
        }
        Ok(traces)
    }
}

fn app_names(traces: &[Trace]) -> Vec<String> {
    traces.iter().flat_map(|t| t.app_names.iter().cloned()).collect()
}

/// The workload's profile: the `[[profile]]` table when given, otherwise
/// online classification of every trace.
pub fn profile_of(cfg: &ExperimentConfig, traces: &[Trace]) -> Result<WorkloadProfile, ExpError> {
    let apps = if !cfg.profile.is_empty() {
        cfg.profile.clone()
    } else {
        let mut apps = Vec::new();
        for t in traces {
            let ev = sample_app(t, AppId(0), &cfg.mapping, &cfg.sampler).map_err(runtime)?;
            let category = classify_online(&ev, &cfg.thresholds).map_err(runtime)?;
            apps.push(AppProfile {
                app: t.app_names[0].clone(),
                category,
            });
        }
        apps
    };
    Ok(WorkloadProfile {
        apps,
        multithreaded: cfg.multithreaded,
        cores: cfg.cores(),
    })
}

pub struct RunOutput {
    pub decision: PolicyDecision,
    pub metrics: MetricsReport,
    pub epochs: Vec<EpochSnapshot>,
    pub alloc_log: Vec<AllocRecord>,
    pub app_names: Vec<String>,
}

/// Mix `traces` and replay them under `decision`.
pub fn execute(cfg: &ExperimentConfig, traces: &[Trace], decision: &PolicyDecision, log: bool) -> Result<RunOutput, ExpError> {
    let mixed = mix(traces, cfg.interleave, cfg.cores()).map_err(|e| ExpError::Usage(e.to_string()))?;
    let spec = cfg.policies.spec(decision.policy, &cfg.mapping).map_err(config)?;
    let mut alloc = Allocator::new(
        cfg.mapping.total_pages(),
        spec,
        &cfg.mapping,
        AllocatorConfig {
            seed: cfg.seed,
            allow_fallback: false,
            log,
        },
    );
    let ids: BTreeMap<String, AppId> = mixed
        .app_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), AppId(i as u16)))
        .collect();
    for &id in ids.values() {
        alloc.register(id);
    }
    decision.apply(&mut alloc, &ids).map_err(runtime)?;
    let mut hier = Hierarchy::new(cfg.hierarchy, &cfg.mapping).map_err(config)?;
    let r = run_trace(&mixed, &mut alloc, &mut hier, cfg.epoch).map_err(runtime)?;
    Ok(RunOutput {
        decision: decision.clone(),
        metrics: r.metrics.report(&mixed.app_names, &cfg.hierarchy.latency),
        epochs: r.epochs,
        alloc_log: alloc.take_log(),
        app_names: mixed.app_names,
    })
}

/// Quotas for `kind`: the coalesced plan when the profile fits the policy,
/// an even split otherwise.
pub fn decision_for(cfg: &ExperimentConfig, profile: &WorkloadProfile, kind: PolicyKind) -> Result<PolicyDecision, ExpError> {
    let spec = cfg.policies.spec(kind, &cfg.mapping).map_err(config)?;
    match plan_quotas(profile, kind, &spec) {
        Ok(d) => Ok(d),
        Err(_) => {
            let names: Vec<String> = profile.apps.iter().map(|a| a.app.clone()).collect();
            Ok(even_split(&names, kind, &spec))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct RunReport<'a> {
    policy: PolicyKind,
    decision: &'a PolicyDecision,
    metrics: &'a MetricsReport,
}

#[derive(Serialize)]
struct EpochRow {
    epoch: usize,
    records: u64,
    accesses: u64,
    private_hits: u64,
    llc_hits: u64,
    llc_misses: u64,
    row_hits: u64,
    row_misses: u64,
    row_conflicts: u64,
    cross_app_conflicts: u64,
    cross_app_llc_evictions: u64,
    proxy_cycles: u64,
}

#[derive(Serialize)]
struct AllocRow<'a> {
    app: &'a str,
    vpn: u64,
    pfn: u64,
    color: u32,
    llc_group: u32,
    bank_group: u32,
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>, ExpError> {
    let mut s = serde_json::to_vec_pretty(v).map_err(runtime)?;
    s.push(b'\n');
    Ok(s)
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>, ExpError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(runtime)?;
    }
    w.into_inner().map_err(runtime)
}

fn epochs_csv(epochs: &[EpochSnapshot]) -> Result<Vec<u8>, ExpError> {
    to_csv(epochs.iter().map(|e| {
        let c = &e.counters;
        EpochRow {
            epoch: e.epoch,
            records: e.records,
            accesses: c.accesses,
            private_hits: c.private_hits,
            llc_hits: c.llc_hits,
            llc_misses: c.llc_misses,
            row_hits: c.row_hits,
            row_misses: c.row_misses,
            row_conflicts: c.row_conflicts,
            cross_app_conflicts: c.cross_app_conflicts,
            cross_app_llc_evictions: c.cross_app_llc_evictions,
            proxy_cycles: e.proxy_cycles,
        }
    }))
}

fn alloc_csv(log: &[AllocRecord], names: &[String]) -> Result<Vec<u8>, ExpError> {
    to_csv(log.iter().map(|r| AllocRow {
        app: &names[r.app.0 as usize],
        vpn: r.vpn,
        pfn: r.pfn.0,
        color: r.color,
        llc_group: r.llc_group,
        bank_group: r.bank_group,
    }))
}

/// Files produced by a command, written together.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Write everything under `dir`. If any write fails the files already
    /// written are removed.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, ExpError> {
        fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
        let mut done = Vec::new();
        for (name, bytes) in &self.files {
            let p = dir.join(name);
            if let Err(e) = fs::write(&p, bytes) {
                for q in &done {
                    let _ = fs::remove_file(q);
                }
                return Err(runtime(format!("{}: {e}", p.display())));
            }
            done.push(p);
        }
        Ok(done)
    }
}

/// Generate every archetype workload of the config into `<name>.trace`.
pub fn cmd_gen(cfg: &ExperimentConfig) -> Result<Outputs, ExpError> {
    let mut out = Outputs::default();
    for (i, w) in cfg.workloads.iter().enumerate() {
        if let Some(p) = w.params(i, cfg.seed) {
            let name = w.app_name(i);
            let t = gen(&p, &name).map_err(config)?;
            out.add(&format!("{name}.trace"), t.to_text().into_bytes());
        }
    }
    if out.files.is_empty() {
        return Err(ExpError::Usage("no archetype workloads to generate".into()));
    }
    Ok(out)
}

/// Generate a single archetype trace straight to `path`.
pub fn gen_file(params: &ArchetypeParams, name: &str, path: &Path) -> Result<(), ExpError> {
    let t = gen(params, name).map_err(|e| ExpError::Usage(e.to_string()))?;
    write_trace(path, &t).map_err(runtime)
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Outputs, ExpError> {
    let traces = cfg.workload_traces()?;
    let decision = match cfg.policy {
        PolicyChoice::Auto => {
            let input = if cfg.profile.is_empty() {
                AdviceInput::Traces {
                    traces: &traces,
                    multithreaded: cfg.multithreaded,
                    cores: cfg.cores(),
                }
            } else {
                AdviceInput::Profile(profile_of(cfg, &traces)?)
            };
            advise(input, &cfg.advice_context()).map_err(runtime)?
        }
        PolicyChoice::Fixed(k) => {
            let spec = cfg.policies.spec(k, &cfg.mapping).map_err(config)?;
            even_split(&app_names(&traces), k, &spec)
        }
    };
    let r = execute(cfg, &traces, &decision, true)?;
    let mut out = Outputs::default();
    out.add(
        "metrics.json",
        to_json(&RunReport {
            policy: decision.policy,
            decision: &r.decision,
            metrics: &r.metrics,
        })?,
    );
    out.add("epochs.csv", epochs_csv(&r.epochs)?);
    out.add("alloc.csv", alloc_csv(&r.alloc_log, &r.app_names)?);
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    pub app: String,
    pub hot_pages: Vec<u64>,
    pub wpd: f64,
    pub category: Category,
    pub thresholds_used: Thresholds,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offline: Option<OfflineVerdict>,
}

pub fn classify_traces(cfg: &ExperimentConfig, traces: &[Trace], offline: bool) -> Result<Vec<Classification>, ExpError> {
    traces
        .iter()
        .map(|t| {
            let ev = sample_app(t, AppId(0), &cfg.mapping, &cfg.sampler).map_err(runtime)?;
            let category = classify_online(&ev, &cfg.thresholds).map_err(runtime)?;
            let offline = if offline {
                Some(classify_offline(t, &cfg.mapping, &cfg.hierarchy, &cfg.thresholds).map_err(runtime)?)
            } else {
                None
            };
            Ok(Classification {
                app: t.app_names[0].clone(),
                wpd: ev.wpd().unwrap_or(0.0),
                hot_pages: ev.hot_pages,
                category,
                thresholds_used: cfg.thresholds,
                offline,
            })
        })
        .collect()
}

pub fn cmd_classify(cfg: &ExperimentConfig, offline: bool) -> Result<Outputs, ExpError> {
    let traces = cfg.workload_traces()?;
    let c = classify_traces(cfg, &traces, offline)?;
    let mut out = Outputs::default();
    out.add("classification.json", to_json(&c)?);
    Ok(out)
}

/// Advise from `[[profile]]` when present, otherwise from the workloads.
pub fn cmd_advise(cfg: &ExperimentConfig) -> Result<Outputs, ExpError> {
    let ctx = cfg.advice_context();
    let d = if !cfg.profile.is_empty() {
        advise(AdviceInput::Profile(profile_of(cfg, &[])?), &ctx)
    } else {
        let traces = cfg.workload_traces()?;
        advise(
            AdviceInput::Traces {
                traces: &traces,
                multithreaded: cfg.multithreaded,
                cores: cfg.cores(),
            },
            &ctx,
        )
    }
    .map_err(runtime)?;
    let mut out = Outputs::default();
    out.add("decision.json", to_json(&d)?);
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub policy: PolicyKind,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proxy_cycles: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub profile: WorkloadProfile,
    pub cells: Vec<SweepCell>,
    pub best_policy: Option<PolicyKind>,
    pub pdt_policy: PolicyKind,
    /// The decision tree picked the empirically best policy.
    pub agreement: bool,
    /// (pdt - best) / best in proxy cycles.
    pub pdt_gap: Option<f64>,
}

impl SweepReport {
    pub fn cycles(&self, k: PolicyKind) -> Option<u64> {
        self.cells.iter().find(|c| c.policy == k).and_then(|c| c.proxy_cycles)
    }
}

/// Run every policy on the same traces. A failing cell is reported, not
/// fatal.
pub fn sweep(cfg: &ExperimentConfig, traces: &[Trace], profile: &WorkloadProfile) -> Result<SweepReport, ExpError> {
    profile.validate().map_err(runtime)?;
    let cells: Vec<SweepCell> = PolicyKind::ALL
        .par_iter()
        .map(|&k| {
            let r = decision_for(cfg, profile, k).and_then(|d| execute(cfg, traces, &d, false));
            match r {
                Ok(r) => SweepCell {
                    policy: k,
                    ok: true,
                    error: None,
                    proxy_cycles: Some(r.metrics.global.proxy_cycles),
                    metrics: Some(r.metrics),
                },
                Err(e) => SweepCell {
                    policy: k,
                    ok: false,
                    error: Some(e.to_string()),
                    proxy_cycles: None,
                    metrics: None,
                },
            }
        })
        .collect();
    let best_policy = cells
        .iter()
        .filter_map(|c| c.proxy_cycles.map(|p| (p, c.policy)))
        .min()
        .map(|(_, k)| k);
    let pdt_policy = crate::advisor::decide_policy(profile);
    let mut report = SweepReport {
        profile: profile.clone(),
        cells,
        best_policy,
        pdt_policy,
        agreement: best_policy == Some(pdt_policy),
        pdt_gap: None,
    };
    if let (Some(b), Some(p)) = (best_policy.and_then(|b| report.cycles(b)), report.cycles(pdt_policy)) {
        report.pdt_gap = Some((p as f64 - b as f64) / b.max(1) as f64);
    }
    Ok(report)
}

#[derive(Serialize)]
struct SweepRow {
    policy: PolicyKind,
    ok: bool,
    proxy_cycles: Option<u64>,
    llc_miss_rate: Option<f64>,
    row_hit_rate: Option<f64>,
    cross_app_conflicts: Option<u64>,
    cross_app_llc_evictions: Option<u64>,
    pdt: bool,
    best: bool,
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Outputs, ExpError> {
    let traces = cfg.workload_traces()?;
    let profile = profile_of(cfg, &traces)?;
    let report = sweep(cfg, &traces, &profile)?;
    let rows = report.cells.iter().map(|c| {
        let m = c.metrics.as_ref().map(|m| &m.global);
        SweepRow {
            policy: c.policy,
            ok: c.ok,
            proxy_cycles: c.proxy_cycles,
            llc_miss_rate: m.map(|m| m.llc_miss_rate),
            row_hit_rate: m.map(|m| m.row_hit_rate),
            cross_app_conflicts: m.map(|m| m.counters.cross_app_conflicts),
            cross_app_llc_evictions: m.map(|m| m.counters.cross_app_llc_evictions),
            pdt: c.policy == report.pdt_policy,
            best: Some(c.policy) == report.best_policy,
        }
    });
    let mut out = Outputs::default();
    out.add("sweep.csv", to_csv(rows)?);
    out.add("sweep.json", to_json(&report)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
seed = 3
policy = "a-vp"

[[workload]]
name = "hot"
kind = "llch"
accesses = 40000

[[workload]]
name = "tiny"
kind = "ccf"
accesses = 40000
"#;

    #[test]
    fn parse_and_defaults() {
        let cfg = ExperimentConfig::parse(SMALL).unwrap();
        assert_eq!(cfg.policy, PolicyChoice::Fixed(PolicyKind::AVp));
        assert_eq!(cfg.cores(), 4);
        assert_eq!(cfg.workloads.len(), 2);
        let p = cfg.workloads[0].params(0, cfg.seed).unwrap();
        assert_eq!(p.access_count, 40_000);
        assert_eq!(p.seed, 3);
        assert_eq!(cfg.workloads[1].params(1, cfg.seed).unwrap().seed, 4);
    }

    #[test]
    fn config_errors() {
        let e = ExperimentConfig::parse("bogus = 1").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = ExperimentConfig::parse("[mapping]\no_bits = [10]").unwrap_err();
        assert!(e.to_string().contains("below page offset"), "{e}");
        let e = ExperimentConfig::parse("[[workload]]\nname = \"x\"").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = ExperimentConfig::parse("policy = \"fastest\"").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn empty_workload_is_usage_error() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cmd_run(&cfg).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn run_writes_three_reports() {
        let cfg = ExperimentConfig::parse(SMALL).unwrap();
        let out = cmd_run(&cfg).unwrap();
        let names: Vec<&str> = out.files.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["metrics.json", "epochs.csv", "alloc.csv"]);
        let v: serde_json::Value = serde_json::from_slice(out.get("metrics.json").unwrap()).unwrap();
        assert_eq!(v["policy"], "a-vp");
        assert_eq!(v["metrics"]["cross_app_conflicts"], 0);
        let alloc = std::str::from_utf8(out.get("alloc.csv").unwrap()).unwrap();
        assert!(alloc.starts_with("app,vpn,pfn,color,llc_group,bank_group\n"));
        assert_eq!(alloc.lines().count(), 1 + 512 + 8);
    }

    #[test]
    fn profile_only_advice() {
        let cfg = ExperimentConfig::parse(
            r#"
[[profile]]
app = "a"
category = "LLCH"
[[profile]]
app = "b"
category = "llcm"
"#,
        )
        .unwrap();
        let out = cmd_advise(&cfg).unwrap();
        let v: serde_json::Value = serde_json::from_slice(out.get("decision.json").unwrap()).unwrap();
        assert_eq!(v["policy"], "bank-only");
        let mt = ExperimentConfig {
            multithreaded: true,
            ..cfg
        };
        let v: serde_json::Value = serde_json::from_slice(cmd_advise(&mt).unwrap().get("decision.json").unwrap()).unwrap();
        assert_eq!(v["policy"], "random");
    }

    #[test]
    fn outputs_land_in_dir() {
        let dir = tempfile::tempdir().unwrap();
        let mut o = Outputs::default();
        o.add("a.txt", b"x".to_vec());
        let written = o.write(&dir.path().join("sub")).unwrap();
        assert_eq!(fs::read(&written[0]).unwrap(), b"x");
    }

    #[test]
    fn sweep_marks_failed_cells() {
        // 8 GiB cannot hold two 3 GiB streams inside one eighth of memory
        let cfg = ExperimentConfig::parse(
            r#"
[hierarchy]
cores = 8
[[workload]]
kind = "llct"
pages = 200000
stride = 4096
[[workload]]
kind = "llct"
pages = 200000
stride = 4096
"#,
        )
        .unwrap();
        let traces = cfg.load_traces().unwrap();
        let profile = WorkloadProfile::new(&[("llct0", Category::Llct), ("llct1", Category::Llct)], false, 8);
        let r = sweep(&cfg, &traces, &profile).unwrap();
        let cvp = r.cells.iter().find(|c| c.policy == PolicyKind::CVp).unwrap();
        assert!(!cvp.ok);
        assert!(cvp.error.as_deref().unwrap().contains("out of memory"));
        assert!(r.cells.iter().find(|c| c.policy == PolicyKind::Interleaving).unwrap().ok);
        assert_eq!(r.pdt_policy, PolicyKind::CVp);
        assert!(r.pdt_gap.is_none());
    }
}
