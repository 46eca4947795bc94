//! Cross-module properties: allocator isolation and conservation, hierarchy
//! partitions, advisor rule structure, offline classifier monotonicity.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use vertmem::advisor::{decide_policy, plan_quotas, GroupTag, WorkloadProfile};
use vertmem::allocator::{Allocator, AllocatorConfig};
use vertmem::classifier::{classify_offline, Category, Thresholds};
use vertmem::hierarchy::{step, DramOutcome, Hierarchy, HierarchyConfig};
use vertmem::mapping::{gather_bits, AddressMapping, PageFrame};
use vertmem::policies::{policy_spec, ColorId, PolicyKind, PolicySpec};
use vertmem::workloads::{gen, ArchetypeKind, ArchetypeParams, Op, TraceRecord};
use vertmem::AppId;

const PARTITIONING: [PolicyKind; 4] = [PolicyKind::BankOnly, PolicyKind::AVp, PolicyKind::BVp, PolicyKind::CVp];

fn partitioning() -> impl Strategy<Value = PolicyKind> {
    prop::sample::select(PARTITIONING.to_vec())
}

fn category() -> impl Strategy<Value = Category> {
    prop::sample::select(Category::ALL.to_vec())
}

fn color(spec: &PolicySpec, m: &AddressMapping, f: PageFrame) -> ColorId {
    spec.page_color(f, m).unwrap()
}

/// Split the colors of `spec` into two quotas with no LLC group and no bank
/// group in common, by dealing LLC groups out according to `mask`.
fn disjoint_quotas(spec: &PolicySpec, mask: u32) -> (Vec<ColorId>, Vec<ColorId>) {
    let g = spec.llc_groups;
    let mine = |c: ColorId| (mask >> (spec.llc_group(c) % g)) & 1 == 1;
    let a: Vec<ColorId> = spec.colors().filter(|&c| mine(c)).collect();
    let a_banks: BTreeSet<u32> = a.iter().map(|&c| spec.bank_group(c)).collect();
    let b: Vec<ColorId> = spec
        .colors()
        .filter(|&c| !mine(c) && !a_banks.contains(&spec.bank_group(c)))
        .collect();
    (a, b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn allocator_isolation_and_conservation(
        kind in partitioning(),
        mask in 1u32..255,
        touches in prop::collection::vec((0u16..2, 0u64..400), 1..400),
    ) {
        let m = AddressMapping::default();
        let spec = policy_spec(kind, &m).unwrap();
        let (qa, qb) = disjoint_quotas(&spec, mask);
        prop_assume!(!qa.is_empty() && !qb.is_empty());
        let total = 1 << 14;
        let mut alloc = Allocator::new(total, spec.clone(), &m, AllocatorConfig::default());
        for (i, q) in [&qa, &qb].into_iter().enumerate() {
            alloc.register(AppId(i as u16));
            alloc.assign_quota(AppId(i as u16), q).unwrap();
        }
        let mut pairs = [BTreeSet::new(), BTreeSet::new()];
        for &(app, vpn) in &touches {
            let f = alloc.touch(AppId(app), vpn).unwrap();
            let c = color(&spec, &m, f);
            pairs[app as usize].insert((spec.llc_group(c), spec.bank_group(c)));
            prop_assert!(pairs[0].is_disjoint(&pairs[1]));
            let owned: usize = (0..2).map(|a| alloc.mapped_pages(AppId(a)).unwrap()).sum();
            prop_assert_eq!(alloc.free_frames() + owned as u64, total);
        }
        let mut frames = BTreeSet::new();
        for a in 0..2 {
            for f in alloc.frames_of(AppId(a)).unwrap() {
                prop_assert!(frames.insert(f), "frame {:?} owned twice", f);
            }
        }
        prop_assert!(alloc.audit().is_ok());
    }

    #[test]
    fn allocation_is_deterministic(
        kind in prop::sample::select(PolicyKind::ALL.to_vec()),
        seed in 0u64..1000,
        touches in prop::collection::vec((0u16..3, 0u64..200), 1..200),
    ) {
        let m = AddressMapping::default();
        let run = || {
            let spec = policy_spec(kind, &m).unwrap();
            let cfg = AllocatorConfig { seed, ..AllocatorConfig::default() };
            let mut alloc = Allocator::new(1 << 13, spec, &m, cfg);
            for a in 0..3 {
                alloc.register(AppId(a));
            }
            touches.iter().map(|&(a, v)| alloc.touch(AppId(a), v).unwrap()).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn hierarchy_respects_llc_and_bank_partitions(
        kind in partitioning(),
        mask in 1u32..255,
        seed in 0u64..1000,
    ) {
        let m = AddressMapping::default();
        let spec = policy_spec(kind, &m).unwrap();
        let (qa, qb) = disjoint_quotas(&spec, mask);
        prop_assume!(!qa.is_empty() && !qb.is_empty());
        let groups: Vec<BTreeSet<u32>> = [&qa, &qb]
            .iter()
            .map(|q| q.iter().map(|&c| spec.llc_group(c)).collect())
            .collect();
        let mut alloc = Allocator::new(m.total_pages(), spec.clone(), &m, AllocatorConfig::default());
        for (i, q) in [&qa, &qb].into_iter().enumerate() {
            alloc.register(AppId(i as u16));
            alloc.assign_quota(AppId(i as u16), q).unwrap();
        }
        let mut hier = Hierarchy::new(HierarchyConfig::default(), &m).unwrap();
        let mut x = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
        for _ in 0..4000 {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            let app = (x & 1) as u16;
            let rec = TraceRecord {
                app: AppId(app),
                core: app,
                vaddr: ((x >> 8) % (1500 * 4096)) & !63,
                op: Op::Read,
            };
            let o = step(&mut alloc, &mut hier, &rec).unwrap();
            let terminal = [o.private_hit, o.llc_hit, o.dram != DramOutcome::None];
            prop_assert_eq!(terminal.iter().filter(|&&t| t).count(), 1);
            prop_assert!(!o.cross_app_conflict && !o.cross_app_llc_eviction);
            if let Some(set) = o.llc_set {
                // The set's group, read from the color bits it indexes.
                let g = spec.llc_group(gather_bits(set << m.line_offset_bits, &spec.color_bits) as ColorId);
                prop_assert!(groups[app as usize].contains(&g));
            }
            if let Some(owner) = o.llc_evicted_owner {
                prop_assert_eq!(owner, AppId(app));
            }
        }
    }

    #[test]
    fn decision_ignores_app_order(
        cats in prop::collection::vec(category(), 1..7),
        mt: bool,
        eight: bool,
        rot in 0usize..7,
    ) {
        let cores = if eight { 8 } else { 4 };
        let named: Vec<String> = (0..cats.len()).map(|i| format!("a{i}")).collect();
        let pairs: Vec<(&str, Category)> = named.iter().map(String::as_str).zip(cats.iter().copied()).collect();
        let mut turned = pairs.clone();
        turned.rotate_left(rot % pairs.len());
        let mut reversed = pairs.clone();
        reversed.reverse();
        let base = decide_policy(&WorkloadProfile::new(&pairs, mt, cores));
        prop_assert_eq!(base, decide_policy(&WorkloadProfile::new(&turned, mt, cores)));
        prop_assert_eq!(base, decide_policy(&WorkloadProfile::new(&reversed, mt, cores)));
    }

    #[test]
    fn llct_forces_vertical_partitioning(cats in prop::collection::vec(category(), 0..6), eight: bool) {
        let cores = if eight { 8 } else { 4 };
        let mut cats = cats;
        cats.push(Category::Llct);
        let named: Vec<String> = (0..cats.len()).map(|i| format!("a{i}")).collect();
        let pairs: Vec<(&str, Category)> = named.iter().map(String::as_str).zip(cats.iter().copied()).collect();
        let k = decide_policy(&WorkloadProfile::new(&pairs, false, cores));
        prop_assert!(k == PolicyKind::AVp || k == PolicyKind::CVp);
    }

    #[test]
    fn plans_are_well_formed(
        cats in prop::collection::vec(category(), 1..8),
        kind in prop::sample::select(PolicyKind::ALL.to_vec()),
        eight: bool,
    ) {
        let m = AddressMapping::default();
        let spec = policy_spec(kind, &m).unwrap();
        let named: Vec<String> = (0..cats.len()).map(|i| format!("a{i}")).collect();
        let pairs: Vec<(&str, Category)> = named.iter().map(String::as_str).zip(cats.iter().copied()).collect();
        let p = WorkloadProfile::new(&pairs, false, if eight { 8 } else { 4 });
        let Ok(d) = plan_quotas(&p, kind, &spec) else {
            // Only a shortage of LLC groups may refuse a plan.
            let small = [Category::Llct, Category::Ccf].iter().filter(|c| cats.contains(c)).count();
            let cache = cats.iter().any(|c| matches!(c, Category::Llch | Category::Llcm));
            prop_assert!(small + usize::from(cache) > spec.llc_groups as usize);
            return Ok(());
        };
        prop_assert_eq!(d.policy, kind);
        let names: BTreeSet<&String> = d.quotas.keys().collect();
        prop_assert_eq!(names, named.iter().collect::<BTreeSet<_>>());
        let mut seen_apps = BTreeMap::new();
        let mut seen_groups = BTreeSet::new();
        for g in &d.groups {
            for a in &g.apps {
                prop_assert!(seen_apps.insert(a.clone(), g.tag).is_none(), "{} in two groups", a);
                let q = &d.quotas[a];
                prop_assert!(!q.is_empty());
                prop_assert!(q.iter().all(|c| g.colors.contains(c)));
            }
            if g.tag == GroupTag::None {
                continue;
            }
            for &l in &g.llc_groups {
                prop_assert!(seen_groups.insert(l), "LLC group {} shared by two groups", l);
            }
            prop_assert!(g.colors.iter().all(|&c| g.llc_groups.contains(&spec.llc_group(c))));
            if matches!(g.tag, GroupTag::SmallShareLlct | GroupTag::SmallShareCcf) {
                prop_assert_eq!(g.llc_groups.len(), 1);
            }
        }
        prop_assert_eq!(seen_apps.len(), cats.len());
    }
}

#[test]
fn avp_slices_are_vertical() {
    let m = AddressMapping::default();
    let spec = policy_spec(PolicyKind::AVp, &m).unwrap();
    for c in spec.colors() {
        assert_eq!(spec.llc_group(c), spec.bank_group(c));
    }
}

#[test]
fn llch_degradation_grows_with_working_set() {
    let m = AddressMapping::default();
    let h = HierarchyConfig::default();
    let t = Thresholds::default();
    let d: Vec<f64> = [256, 512, 1024]
        .iter()
        .map(|&pages| {
            // Same number of passes at every size, so cold misses weigh alike.
            let p = ArchetypeParams {
                working_set_pages: pages,
                access_count: pages * 64 * 4,
                ..ArchetypeParams::canonical(ArchetypeKind::Llch, 1)
            };
            classify_offline(&gen(&p, "h").unwrap(), &m, &h, &t).unwrap().degradation
        })
        .collect();
    assert!(d.windows(2).all(|w| w[0] <= w[1]), "{d:?}");
}
