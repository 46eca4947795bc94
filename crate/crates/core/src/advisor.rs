//! Policy decision tree and quota planning.
//!
//! Rules are evaluated in order: multithreaded workloads get random
//! interleaving; anything with an LLCT app gets an O-bit partition (A-VP on
//! 4 cores, C-VP on 8); LLCH without LLCT gets bank-only; LLCM alone gets
//! A-VP or B-VP; all-CCF needs no partitioning.
//!
//! Quotas are planned by coalescing: LLCH and LLCM apps share the bulk of
//! the LLC, LLCT apps share one LLC group, CCF apps share another.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocator::{AllocError, Allocator};
use crate::classifier::{classify_online, sample_app, Category, ClassifyError, SamplerConfig, Thresholds};
use crate::mapping::AddressMapping;
use crate::policies::{ColorId, PolicyError, PolicyKind, PolicySpec, PolicyTable};
use crate::workloads::Trace;
use crate::AppId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdviceError {
    #[error("workload profile has no apps")]
    EmptyProfile,
    #[error("core count must be 4 or 8, got {0}")]
    BadCoreCount(usize),
    #[error("duplicate app '{0}' in profile")]
    DuplicateApp(String),
    #[error("trace for '{0}' must contain exactly one app")]
    NotSingleApp(String),
    #[error("{policy} has {have} LLC groups but the plan needs {needed}")]
    TooFewLlcGroups { policy: PolicyKind, needed: u32, have: u32 },
    #[error("spec is for {spec}, decision is {policy}")]
    SpecMismatch { policy: PolicyKind, spec: PolicyKind },
    #[error("app '{0}' is not in the decision")]
    MissingApp(String),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppProfile {
    pub app: String,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadProfile {
    pub apps: Vec<AppProfile>,
    pub multithreaded: bool,
    pub cores: usize,
}

impl WorkloadProfile {
    pub fn new(cats: &[(&str, Category)], multithreaded: bool, cores: usize) -> Self {
        Self {
            apps: cats
                .iter()
                .map(|&(app, category)| AppProfile {
                    app: app.to_string(),
                    category,
                })
                .collect(),
            multithreaded,
            cores,
        }
    }

    pub fn validate(&self) -> Result<(), AdviceError> {
        if self.apps.is_empty() {
            return Err(AdviceError::EmptyProfile);
        }
        if self.cores != 4 && self.cores != 8 {
            return Err(AdviceError::BadCoreCount(self.cores));
        }
        let mut seen = BTreeSet::new();
        for a in &self.apps {
            if !seen.insert(&a.app) {
                return Err(AdviceError::DuplicateApp(a.app.clone()));
            }
        }
        Ok(())
    }

    fn has(&self, c: Category) -> bool {
        self.apps.iter().any(|a| a.category == c)
    }
}

pub fn decide_policy(p: &WorkloadProfile) -> PolicyKind {
    let eight = p.cores >= 8;
    if p.multithreaded {
        PolicyKind::RandomInterleave
    } else if p.has(Category::Llct) {
        if eight {
            PolicyKind::CVp
        } else {
            PolicyKind::AVp
        }
    } else if p.has(Category::Llch) {
        PolicyKind::BankOnly
    } else if p.has(Category::Llcm) {
        if eight {
            PolicyKind::BVp
        } else {
            PolicyKind::AVp
        }
    } else {
        PolicyKind::Interleaving
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupTag {
    CacheShare,
    SmallShareLlct,
    SmallShareCcf,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotaGroup {
    pub apps: Vec<String>,
    pub tag: GroupTag,
    pub llc_groups: Vec<u32>,
    /// Union of the members' colors.
    pub colors: Vec<ColorId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppEvidence {
    pub category: Category,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hot_pages: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wpd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub policy: PolicyKind,
    pub groups: Vec<QuotaGroup>,
    pub quotas: BTreeMap<String, Vec<ColorId>>,
    pub evidence: BTreeMap<String, AppEvidence>,
}

impl PolicyDecision {
    /// Apply quotas and coalescing to an allocator built for this policy.
    /// Groups whose members were given different bank colors are only
    /// assigned, not merged.
    pub fn apply(&self, alloc: &mut Allocator, ids: &BTreeMap<String, AppId>) -> Result<(), AdviceError> {
        let id = |name: &String| ids.get(name).copied().ok_or_else(|| AdviceError::MissingApp(name.clone()));
        for (name, colors) in &self.quotas {
            let app = id(name)?;
            alloc.register(app);
            alloc.assign_quota(app, colors)?;
        }
        let mut merge = Vec::new();
        for g in self.groups.iter().filter(|g| g.tag != GroupTag::None) {
            let same = g.apps.windows(2).all(|w| self.quotas.get(&w[0]) == self.quotas.get(&w[1]));
            if same {
                merge.push(g.apps.iter().map(id).collect::<Result<Vec<_>, _>>()?);
            }
        }
        alloc.coalesce(&merge)?;
        Ok(())
    }
}

/// Bank colors inside the cache-share group are dealt out per app only when
/// the policy has pure B-bits to deal.
fn splits_banks(kind: PolicyKind) -> bool {
    matches!(kind, PolicyKind::BVp | PolicyKind::BankOnly)
}

pub fn plan_quotas(p: &WorkloadProfile, policy: PolicyKind, spec: &PolicySpec) -> Result<PolicyDecision, AdviceError> {
    p.validate()?;
    if spec.kind != policy {
        return Err(AdviceError::SpecMismatch {
            policy,
            spec: spec.kind,
        });
    }
    let evidence = p
        .apps
        .iter()
        .map(|a| {
            (
                a.app.clone(),
                AppEvidence {
                    category: a.category,
                    hot_pages: None,
                    wpd: None,
                },
            )
        })
        .collect();
    if !spec.partitioning {
        let apps: Vec<String> = p.apps.iter().map(|a| a.app.clone()).collect();
        return Ok(PolicyDecision {
            policy,
            quotas: apps.iter().map(|a| (a.clone(), vec![0])).collect(),
            groups: vec![QuotaGroup {
                apps,
                tag: GroupTag::None,
                llc_groups: vec![0],
                colors: vec![0],
            }],
            evidence,
        });
    }

    let members = |cats: &[Category]| -> Vec<String> {
        p.apps
            .iter()
            .filter(|a| cats.contains(&a.category))
            .map(|a| a.app.clone())
            .collect()
    };
    let cache = members(&[Category::Llch, Category::Llcm]);
    let small = [
        (GroupTag::SmallShareLlct, members(&[Category::Llct])),
        (GroupTag::SmallShareCcf, members(&[Category::Ccf])),
    ];
    let n_small = small.iter().filter(|(_, m)| !m.is_empty()).count() as u32;
    let needed = n_small + u32::from(!cache.is_empty());
    if needed > spec.llc_groups {
        return Err(AdviceError::TooFewLlcGroups {
            policy,
            needed,
            have: spec.llc_groups,
        });
    }

    let mut groups = Vec::new();
    let mut quotas = BTreeMap::new();
    let cache_groups: Vec<u32> = (0..spec.llc_groups - n_small).collect();
    if !cache.is_empty() {
        let colors = spec.colors_in_llc_groups(&cache_groups);
        let n = cache.len() as u32;
        let slices = spec.b_values();
        for (j, app) in cache.iter().enumerate() {
            let mine = if splits_banks(policy) && n > 1 && slices > 1 {
                let k = n.min(slices);
                colors
                    .iter()
                    .copied()
                    .filter(|&c| spec.b_component(c) % k == j as u32 % k)
                    .collect()
            } else {
                colors.clone()
            };
            quotas.insert(app.clone(), mine);
        }
        groups.push(QuotaGroup {
            apps: cache,
            tag: GroupTag::CacheShare,
            llc_groups: cache_groups.clone(),
            colors,
        });
    }
    let mut next = spec.llc_groups - n_small;
    for (tag, apps) in small {
        if apps.is_empty() {
            continue;
        }
        let colors = spec.colors_in_llc_groups(&[next]);
        for a in &apps {
            quotas.insert(a.clone(), colors.clone());
        }
        groups.push(QuotaGroup {
            apps,
            tag,
            llc_groups: vec![next],
            colors,
        });
        next += 1;
    }
    Ok(PolicyDecision {
        policy,
        groups,
        quotas,
        evidence,
    })
}

/// Quotas for a policy chosen by hand: color `c` goes to app `c mod n`.
/// With more apps than colors, apps share colors in the same pattern.
pub fn even_split(apps: &[String], policy: PolicyKind, spec: &PolicySpec) -> PolicyDecision {
    let n = apps.len().max(1) as u32;
    let k = n.min(spec.page_colors);
    let quotas: BTreeMap<String, Vec<ColorId>> = apps
        .iter()
        .enumerate()
        .map(|(j, a)| {
            let colors = spec.colors().filter(|c| c % k == j as u32 % k).collect();
            (a.clone(), colors)
        })
        .collect();
    let groups = apps
        .iter()
        .map(|a| {
            let colors = quotas[a].clone();
            let llc: BTreeSet<u32> = colors.iter().map(|&c| spec.llc_group(c)).collect();
            QuotaGroup {
                apps: vec![a.clone()],
                tag: GroupTag::None,
                llc_groups: llc.into_iter().collect(),
                colors,
            }
        })
        .collect();
    PolicyDecision {
        policy,
        groups,
        quotas,
        evidence: BTreeMap::new(),
    }
}

/// What the advisor is asked about: a known profile, or one single-app trace
/// per app to classify first.
#[derive(Debug, Clone)]
pub enum AdviceInput<'a> {
    Profile(WorkloadProfile),
    Traces {
        traces: &'a [Trace],
        multithreaded: bool,
        cores: usize,
    },
}

#[derive(Debug, Clone, Default)]
pub struct AdviceContext {
    pub mapping: AddressMapping,
    pub policies: PolicyTable,
    pub sampler: SamplerConfig,
    pub thresholds: Thresholds,
}

pub fn advise(input: AdviceInput<'_>, ctx: &AdviceContext) -> Result<PolicyDecision, AdviceError> {
    let (profile, sampled) = match input {
        AdviceInput::Profile(p) => (p, BTreeMap::new()),
        AdviceInput::Traces {
            traces,
            multithreaded,
            cores,
        } => {
            let mut apps = Vec::new();
            let mut sampled = BTreeMap::new();
            for t in traces {
                if t.app_names.len() != 1 {
                    return Err(AdviceError::NotSingleApp(t.app_names.join(",")));
                }
                let name = t.app_names[0].clone();
                let ev = sample_app(t, AppId(0), &ctx.mapping, &ctx.sampler)?;
                let category = classify_online(&ev, &ctx.thresholds)?;
                sampled.insert(name.clone(), (ev.mean_hot_pages(), ev.wpd()));
                apps.push(AppProfile { app: name, category });
            }
            (
                WorkloadProfile {
                    apps,
                    multithreaded,
                    cores,
                },
                sampled,
            )
        }
    };
    profile.validate()?;
    let policy = decide_policy(&profile);
    let spec = ctx.policies.spec(policy, &ctx.mapping)?;
    let mut d = plan_quotas(&profile, policy, &spec)?;
    for (name, (h, w)) in sampled {
        if let Some(e) = d.evidence.get_mut(&name) {
            e.hot_pages = h;
            e.wpd = w;
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::AllocatorConfig;
    use crate::policies::policy_spec;
    use Category::*;

    fn prof(cats: &[Category], cores: usize) -> WorkloadProfile {
        let names: Vec<String> = (0..cats.len()).map(|i| ((b'A' + i as u8) as char).to_string()).collect();
        let pairs: Vec<(&str, Category)> = names.iter().map(String::as_str).zip(cats.iter().copied()).collect();
        WorkloadProfile::new(&pairs, false, cores)
    }

    fn spec(k: PolicyKind) -> PolicySpec {
        policy_spec(k, &AddressMapping::default()).unwrap()
    }

    #[test]
    fn decision_examples() {
        assert_eq!(decide_policy(&prof(&[Llct, Llch, Ccf, Ccf], 4)), PolicyKind::AVp);
        assert_eq!(decide_policy(&prof(&[Llch, Llcm], 4)), PolicyKind::BankOnly);
        assert_eq!(decide_policy(&prof(&[Llcm, Ccf], 8)), PolicyKind::BVp);
        assert_eq!(decide_policy(&prof(&[Llct], 8)), PolicyKind::CVp);
        assert_eq!(decide_policy(&prof(&[Ccf, Ccf], 4)), PolicyKind::Interleaving);
        let mut p = prof(&[Llct, Llch], 4);
        p.multithreaded = true;
        assert_eq!(decide_policy(&p), PolicyKind::RandomInterleave);
    }

    #[test]
    fn profile_validation() {
        assert_eq!(prof(&[], 4).validate(), Err(AdviceError::EmptyProfile));
        assert_eq!(prof(&[Ccf], 6).validate(), Err(AdviceError::BadCoreCount(6)));
        let p = WorkloadProfile::new(&[("x", Ccf), ("x", Llct)], false, 4);
        assert_eq!(p.validate(), Err(AdviceError::DuplicateApp("x".into())));
    }

    #[test]
    fn four_category_avp_plan() {
        let p = prof(&[Llch, Llcm, Llct, Ccf], 4);
        let d = plan_quotas(&p, PolicyKind::AVp, &spec(PolicyKind::AVp)).unwrap();
        let by_tag: BTreeMap<GroupTag, &QuotaGroup> = d.groups.iter().map(|g| (g.tag, g)).collect();
        assert_eq!(by_tag.len(), 3);
        assert_eq!(by_tag[&GroupTag::CacheShare].apps, vec!["A", "B"]);
        assert_eq!(by_tag[&GroupTag::CacheShare].llc_groups, vec![0, 1]);
        assert_eq!(by_tag[&GroupTag::SmallShareLlct].apps, vec!["C"]);
        assert_eq!(by_tag[&GroupTag::SmallShareLlct].llc_groups, vec![2]);
        assert_eq!(by_tag[&GroupTag::SmallShareCcf].llc_groups, vec![3]);
        assert_eq!(d.quotas["A"], d.quotas["B"]);
        assert_eq!(d.quotas["D"], vec![3]);
    }

    #[test]
    fn llct_pair_shares_one_group() {
        let p = prof(&[Llct, Llct], 8);
        let s = spec(PolicyKind::CVp);
        let d = plan_quotas(&p, PolicyKind::CVp, &s).unwrap();
        assert_eq!(d.groups.len(), 1);
        assert_eq!(d.groups[0].tag, GroupTag::SmallShareLlct);
        assert_eq!(d.groups[0].llc_groups.len(), 1);
        assert_eq!(d.quotas["A"], d.quotas["B"]);
    }

    #[test]
    fn non_partitioning_is_one_group() {
        let p = prof(&[Ccf, Ccf, Ccf], 4);
        let d = plan_quotas(&p, PolicyKind::Interleaving, &spec(PolicyKind::Interleaving)).unwrap();
        assert_eq!(d.groups.len(), 1);
        assert_eq!(d.groups[0].tag, GroupTag::None);
        assert_eq!(d.groups[0].apps.len(), 3);
    }

    #[test]
    fn bank_only_splits_bank_colors_in_cache_group() {
        let p = prof(&[Llch, Llcm, Ccf], 4);
        let s = spec(PolicyKind::BankOnly);
        let d = plan_quotas(&p, PolicyKind::BankOnly, &s).unwrap();
        let (a, b) = (&d.quotas["A"], &d.quotas["B"]);
        assert!(a.iter().all(|c| !b.contains(c)));
        let llc = |q: &Vec<ColorId>| q.iter().map(|&c| s.llc_group(c)).collect::<BTreeSet<_>>();
        assert_eq!(llc(a), llc(b));
        assert_eq!(llc(a), BTreeSet::from([0]));
        assert_eq!(llc(&d.quotas["C"]), BTreeSet::from([1]));
    }

    #[test]
    fn too_few_groups_is_reported() {
        let p = prof(&[Llch, Llct, Ccf], 4);
        let err = plan_quotas(&p, PolicyKind::BankOnly, &spec(PolicyKind::BankOnly)).unwrap_err();
        assert!(matches!(err, AdviceError::TooFewLlcGroups { needed: 3, have: 2, .. }));
    }

    #[test]
    fn even_split_round_robin() {
        let s = spec(PolicyKind::AVp);
        let apps = vec!["x".to_string(), "y".to_string()];
        let d = even_split(&apps, PolicyKind::AVp, &s);
        assert_eq!(d.quotas["x"], vec![0, 2]);
        assert_eq!(d.quotas["y"], vec![1, 3]);
        let many: Vec<String> = (0..6).map(|i| i.to_string()).collect();
        let d = even_split(&many, PolicyKind::AVp, &s);
        assert_eq!(d.quotas["4"], vec![0]);
    }

    #[test]
    fn apply_coalesces_identical_quotas() {
        let m = AddressMapping::default();
        let s = spec(PolicyKind::AVp);
        let p = prof(&[Llch, Llcm, Ccf], 4);
        let d = plan_quotas(&p, PolicyKind::AVp, &s).unwrap();
        let mut alloc = Allocator::new(1 << 12, s, &m, AllocatorConfig::default());
        let ids: BTreeMap<String, AppId> = ["A", "B", "C"].iter().enumerate().map(|(i, n)| (n.to_string(), AppId(i as u16))).collect();
        d.apply(&mut alloc, &ids).unwrap();
        let qa = alloc.quota(AppId(0)).unwrap();
        assert_eq!(qa.shared_group, alloc.quota(AppId(1)).unwrap().shared_group);
        assert!(qa.shared_group.is_some());
        assert_eq!(qa.allowed_colors, vec![0, 1, 2]);
    }

    #[test]
    fn profile_input_decides_like_trace_input() {
        let ctx = AdviceContext::default();
        let d = advise(AdviceInput::Profile(prof(&[Llch, Llcm], 4)), &ctx).unwrap();
        assert_eq!(d.policy, PolicyKind::BankOnly);
        let mut p = prof(&[Llch, Llcm], 4);
        p.multithreaded = true;
        assert_eq!(advise(AdviceInput::Profile(p), &ctx).unwrap().policy, PolicyKind::RandomInterleave);
    }

    #[test]
    fn single_ccf_trace_gives_interleave() {
        use crate::workloads::{gen, ArchetypeKind, ArchetypeParams};
        let t = gen(&ArchetypeParams::canonical(ArchetypeKind::Ccf, 3), "c").unwrap();
        let d = advise(
            AdviceInput::Traces {
                traces: std::slice::from_ref(&t),
                multithreaded: false,
                cores: 4,
            },
            &AdviceContext::default(),
        )
        .unwrap();
        assert_eq!(d.policy, PolicyKind::Interleaving);
        assert_eq!(d.groups.len(), 1);
        assert!(d.evidence["c"].hot_pages.is_some());
    }
}
