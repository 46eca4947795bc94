//! Synthetic application traces and the text trace format.
//!
//! Traces carry virtual addresses; placement is the allocator's business.
//! The text form has one record per line, `app core 0xvaddr r|w`, with `#`
//! starting a comment line.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::AppId;

pub const PAGE_BYTES: u64 = 4096;
pub const LINE_BYTES: u64 = 64;
const HEADER: &str = "# app core vaddr op";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid archetype parameters: {0}")]
    Params(String),
    #[error("{apps} apps but only {cores} cores")]
    TooManyApps { apps: usize, cores: usize },
    #[error("app '{0}' appears in more than one trace")]
    DuplicateApp(String),
    #[error("mix needs at least one trace and k >= 1")]
    EmptyMix,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceRecord {
    pub app: AppId,
    pub core: u16,
    pub vaddr: u64,
    pub op: Op,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    /// `app_names[i]` names `AppId(i)`.
    pub app_names: Vec<String>,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn intern(&mut self, name: &str) -> AppId {
        match self.app_names.iter().position(|n| n == name) {
            Some(i) => AppId(i as u16),
            None => {
                self.app_names.push(name.to_string());
                AppId(self.app_names.len() as u16 - 1)
            }
        }
    }

    pub fn name(&self, app: AppId) -> &str {
        &self.app_names[app.0 as usize]
    }

    pub fn apps(&self) -> impl Iterator<Item = AppId> {
        (0..self.app_names.len() as u16).map(AppId)
    }

    /// Records of one app, in order, as a standalone single-app trace.
    pub fn project(&self, app: AppId) -> Trace {
        Trace {
            app_names: vec![self.name(app).to_string()],
            records: self
                .records
                .iter()
                .filter(|r| r.app == app)
                .map(|r| TraceRecord { app: AppId(0), ..*r })
                .collect(),
        }
    }

    pub fn distinct_pages(&self, app: AppId) -> usize {
        self.records
            .iter()
            .filter(|r| r.app == app)
            .map(|r| r.vaddr / PAGE_BYTES)
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Core each app runs on (the core of its first record).
    pub fn cores(&self) -> BTreeMap<AppId, u16> {
        let mut m = BTreeMap::new();
        for r in &self.records {
            m.entry(r.app).or_insert(r.core);
        }
        m
    }

    pub fn to_text(&self) -> String {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        String::from_utf8(out).expect("trace text is ASCII")
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{HEADER}")?;
        for r in &self.records {
            let op = match r.op {
                Op::Read => 'r',
                Op::Write => 'w',
            };
            writeln!(w, "{} {} {:#x} {}", self.name(r.app), r.core, r.vaddr, op)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Trace, TraceError> {
        let mut t = Trace::default();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let s = line.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            let err = |msg: String| TraceError::Parse { line: lineno, msg };
            let fields: Vec<&str> = s.split_whitespace().collect();
            let [app, core, vaddr, op] = fields[..] else {
                return Err(err(format!("expected 4 fields, found {}", fields.len())));
            };
            let core: u16 = core.parse().map_err(|_| err(format!("bad core '{core}'")))?;
            let hex = vaddr
                .strip_prefix("0x")
                .or_else(|| vaddr.strip_prefix("0X"))
                .unwrap_or(vaddr);
            let vaddr = u64::from_str_radix(hex, 16).map_err(|_| err(format!("bad hex address '{vaddr}'")))?;
            let op = match op {
                "r" => Op::Read,
                "w" => Op::Write,
                other => return Err(err(format!("unknown op '{other}'"))),
            };
            let app = t.intern(app);
            t.records.push(TraceRecord { app, core, vaddr, op });
        }
        Ok(t)
    }
}

pub fn write_trace(path: &Path, trace: &Trace) -> Result<(), TraceError> {
    let mut w = BufWriter::new(File::create(path)?);
    trace.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Trace, TraceError> {
    Trace::read_from(BufReader::new(File::open(path)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchetypeKind {
    Ccf,
    Llct,
    Llcm,
    Llch,
}

impl ArchetypeKind {
    pub const ALL: [ArchetypeKind; 4] = [
        ArchetypeKind::Ccf,
        ArchetypeKind::Llct,
        ArchetypeKind::Llcm,
        ArchetypeKind::Llch,
    ];
}

impl FromStr for ArchetypeKind {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ccf" => Ok(Self::Ccf),
            "llct" => Ok(Self::Llct),
            "llcm" => Ok(Self::Llcm),
            "llch" => Ok(Self::Llch),
            _ => Err(TraceError::Params(format!("unknown archetype '{s}'"))),
        }
    }
}

/// How an archetype revisits its working set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Reuse {
    /// Walk the working set once.
    None,
    /// Walk it cyclically.
    Loop,
    /// Draw slots from a Zipf law with exponent `s`, hottest slots first in
    /// address order.
    Zipf(f64),
}

pub const DEFAULT_ZIPF_S: f64 = 1.55;

impl fmt::Display for Reuse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reuse::None => write!(f, "none"),
            Reuse::Loop => write!(f, "loop"),
            Reuse::Zipf(s) => write!(f, "zipf:{s}"),
        }
    }
}

impl FromStr for Reuse {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Reuse::None),
            "loop" => Ok(Reuse::Loop),
            "zipf" => Ok(Reuse::Zipf(DEFAULT_ZIPF_S)),
            _ => s
                .strip_prefix("zipf:")
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|v| *v > 0.0 && v.is_finite())
                .map(Reuse::Zipf)
                .ok_or_else(|| TraceError::Params(format!("bad reuse mode '{s}'"))),
        }
    }
}

impl TryFrom<String> for Reuse {
    type Error = TraceError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Reuse> for String {
    fn from(r: Reuse) -> Self {
        r.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchetypeParams {
    pub kind: ArchetypeKind,
    pub working_set_pages: u64,
    /// Trace length. Ignored by `Reuse::None`, whose length is one visit per
    /// slot.
    pub access_count: u64,
    pub reuse: Reuse,
    /// Bytes between consecutive slots; must divide the page size.
    pub stride: u64,
    pub seed: u64,
}

/// Access count used by the canonical archetypes.
pub const CANONICAL_ACCESSES: u64 = 100_000;

impl ArchetypeParams {
    /// Default parameterization of each category.
    ///
    /// * ccf: 8-page loop, well inside the private cache.
    /// * llct: one touch per page, no reuse.
    /// * llcm: steep Zipf reuse over half the LLC; the head fits one eighth
    ///   of the LLC, the tail does not.
    /// * llch: a loop over a quarter of the LLC, which thrashes once the LLC
    ///   share shrinks to one eighth.
    pub fn canonical(kind: ArchetypeKind, seed: u64) -> Self {
        let (working_set_pages, reuse, stride) = match kind {
            ArchetypeKind::Ccf => (8, Reuse::Loop, 64),
            ArchetypeKind::Llct => (CANONICAL_ACCESSES, Reuse::None, PAGE_BYTES),
            ArchetypeKind::Llcm => (1024, Reuse::Zipf(DEFAULT_ZIPF_S), 64),
            ArchetypeKind::Llch => (512, Reuse::Loop, 64),
        };
        Self {
            kind,
            working_set_pages,
            access_count: CANONICAL_ACCESSES,
            reuse,
            stride,
            seed,
        }
    }

    pub fn slots_per_page(&self) -> u64 {
        PAGE_BYTES / self.stride
    }

    pub fn slots(&self) -> u64 {
        self.working_set_pages * self.slots_per_page()
    }

    /// Number of records `gen` will emit.
    pub fn trace_len(&self) -> u64 {
        match self.reuse {
            Reuse::None => self.slots(),
            _ => self.access_count,
        }
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |m: String| Err(TraceError::Params(m));
        if self.working_set_pages == 0 {
            return bad("working_set_pages must be >= 1".into());
        }
        if self.stride < LINE_BYTES || !self.stride.is_power_of_two() || self.stride > PAGE_BYTES {
            return bad(format!("stride {} must be a power of two in {LINE_BYTES}..={PAGE_BYTES}", self.stride));
        }
        match self.reuse {
            Reuse::None => {}
            Reuse::Loop if self.access_count < self.slots() => {
                return bad(format!(
                    "loop over {} slots needs access_count >= {}",
                    self.slots(),
                    self.slots()
                ))
            }
            Reuse::Zipf(_) if self.access_count < self.working_set_pages => {
                return bad(format!(
                    "zipf over {} pages needs access_count >= {}",
                    self.working_set_pages, self.working_set_pages
                ))
            }
            _ => {}
        }
        Ok(())
    }
}

/// Generate a single-app trace named `app` on core 0.
///
/// Every mode touches exactly `working_set_pages` distinct pages. Zipf
/// traces start with one touch per page so the tail of the distribution is
/// always mapped. One access in four is a write.
pub fn gen(params: &ArchetypeParams, app: &str) -> Result<Trace, TraceError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let spp = params.slots_per_page();
    // Strides wider than a line start at a page-dependent line so sparse
    // streams still cover every cache set.
    let lines_per_slot = params.stride / LINE_BYTES;
    let slot_addr = |slot: u64| {
        let page = slot / spp;
        page * PAGE_BYTES + (slot % spp) * params.stride + (page % lines_per_slot) * LINE_BYTES
    };
    let mut t = Trace::default();
    let id = t.intern(app);
    let mut emit = |vaddr: u64, rng: &mut ChaCha8Rng| {
        let op = if rng.random_bool(0.25) { Op::Write } else { Op::Read };
        t.records.push(TraceRecord {
            app: id,
            core: 0,
            vaddr,
            op,
        });
    };
    match params.reuse {
        Reuse::None => {
            for slot in 0..params.slots() {
                emit(slot_addr(slot), &mut rng);
            }
        }
        Reuse::Loop => {
            let slots = params.slots();
            for i in 0..params.access_count {
                emit(slot_addr(i % slots), &mut rng);
            }
        }
        Reuse::Zipf(s) => {
            for page in 0..params.working_set_pages {
                emit(slot_addr(page * spp), &mut rng);
            }
            let zipf = Zipf::new(params.slots() as f64, s)
                .map_err(|e| TraceError::Params(format!("zipf: {e}")))?;
            for _ in params.working_set_pages..params.access_count {
                let rank = zipf.sample(&mut rng) as u64;
                emit(slot_addr(rank - 1), &mut rng);
            }
        }
    }
    Ok(t)
}

/// `n` archetype parameterizations with perturbed sizes, lengths and
/// exponents around the canonical ones, cycling through the four kinds.
pub fn randomized_corpus(n: usize, seed: u64) -> Vec<ArchetypeParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let kind = ArchetypeKind::ALL[i % 4];
            let c = ArchetypeParams::canonical(kind, rng.random());
            let access_count = rng.random_range(75_000..=125_000);
            let (working_set_pages, reuse) = match kind {
                // colored frames also halve the private cache, so stay within half of it
                ArchetypeKind::Ccf => (rng.random_range(1..=24), c.reuse),
                ArchetypeKind::Llct => (rng.random_range(75_000..=125_000), c.reuse),
                ArchetypeKind::Llcm => (
                    rng.random_range(768..=1536),
                    Reuse::Zipf(DEFAULT_ZIPF_S + rng.random_range(-0.05..=0.05)),
                ),
                ArchetypeKind::Llch => (rng.random_range(384..=768), c.reuse),
            };
            ArchetypeParams {
                working_set_pages,
                access_count,
                reuse,
                ..c
            }
        })
        .collect()
}

/// Interleave traces round-robin, `k` records per turn, giving the i-th
/// input core i. Each input keeps its internal order.
pub fn mix(traces: &[Trace], k: usize, cores: usize) -> Result<Trace, TraceError> {
    if traces.is_empty() || k == 0 {
        return Err(TraceError::EmptyMix);
    }
    if traces.len() > cores {
        return Err(TraceError::TooManyApps {
            apps: traces.len(),
            cores,
        });
    }
    let mut out = Trace::default();
    let mut remap: Vec<Vec<AppId>> = Vec::with_capacity(traces.len());
    for t in traces {
        let mut ids = Vec::new();
        for name in &t.app_names {
            if out.app_names.contains(name) {
                return Err(TraceError::DuplicateApp(name.clone()));
            }
            ids.push(out.intern(name));
        }
        remap.push(ids);
    }
    let total: usize = traces.iter().map(|t| t.records.len()).sum();
    out.records.reserve(total);
    let mut cursors = vec![0usize; traces.len()];
    while out.records.len() < total {
        for (i, t) in traces.iter().enumerate() {
            let end = (cursors[i] + k).min(t.records.len());
            for r in &t.records[cursors[i]..end] {
                out.records.push(TraceRecord {
                    app: remap[i][r.app.0 as usize],
                    core: i as u16,
                    ..*r
                });
            }
            cursors[i] = end;
        }
    }
    Ok(out)
}
