//! Color-constrained page allocation.
//!
//! Free frames live in one pool per page color (a single pool when the policy
//! does not partition). Each application owns a page table mapping virtual
//! page numbers to frames, with an access bit per entry. Frames are handed
//! out on first touch.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mapping::{AddressMapping, PageFrame};
use crate::policies::{ColorId, PolicyKind, PolicySpec};
use crate::AppId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AllocError {
    #[error("unknown app {0}")]
    UnknownApp(AppId),
    #[error("empty color quota for app {0}")]
    EmptyQuota(AppId),
    #[error("unknown color {color} ({colors} colors under this policy)")]
    UnknownColor { color: ColorId, colors: u32 },
    #[error("app {0} already has pages; its quota cannot change")]
    QuotaLocked(AppId),
    #[error("app {0} appears in more than one coalescing group")]
    OverlappingGroups(AppId),
    #[error("out of memory for app {app}: color pools {empty_colors:?} are empty")]
    OutOfMemory { app: AppId, empty_colors: Vec<ColorId> },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AllocatorConfig {
    pub seed: u64,
    /// Take frames outside the quota once every allowed pool is empty.
    pub allow_fallback: bool,
    /// Keep a log of every placement.
    pub log: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorQuota {
    pub app: AppId,
    pub allowed_colors: Vec<ColorId>,
    pub shared_group: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pte {
    pub pfn: PageFrame,
    pub accessed: bool,
}

/// One placement decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AllocRecord {
    pub app: AppId,
    pub vpn: u64,
    pub pfn: PageFrame,
    pub color: ColorId,
    pub llc_group: u32,
    pub bank_group: u32,
}

#[derive(Debug, Default)]
struct AppState {
    quota: Option<Vec<ColorId>>,
    shared_group: Option<u32>,
    cursor: usize,
    table: HashMap<u64, Pte>,
}

#[derive(Debug)]
pub struct Allocator {
    mapping: AddressMapping,
    spec: PolicySpec,
    pools: Vec<Vec<u32>>,
    total_pages: u64,
    free: u64,
    apps: Vec<Option<AppState>>,
    next_group: u32,
    rng: ChaCha8Rng,
    allow_fallback: bool,
    log: Option<Vec<AllocRecord>>,
}

impl Allocator {
    /// Place every frame below `total_pages` into the pool of its color.
    /// Pools are kept in descending order so `pop` yields the lowest frame.
    pub fn new(total_pages: u64, spec: PolicySpec, mapping: &AddressMapping, cfg: AllocatorConfig) -> Self {
        assert!(total_pages > 0, "allocator needs at least one frame");
        assert!(total_pages <= u32::MAX as u64 + 1);
        let mut pools = vec![Vec::new(); spec.page_colors as usize];
        for pfn in (0..total_pages).rev() {
            let c = spec.color_of(PageFrame(pfn), mapping) as usize;
            pools[c].push(pfn as u32);
        }
        Self {
            mapping: mapping.clone(),
            spec,
            pools,
            total_pages,
            free: total_pages,
            apps: Vec::new(),
            next_group: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            allow_fallback: cfg.allow_fallback,
            log: cfg.log.then(Vec::new),
        }
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn mapping(&self) -> &AddressMapping {
        &self.mapping
    }

    pub fn total_pages(&self) -> u64 {
        self.total_pages
    }

    pub fn free_frames(&self) -> u64 {
        self.free
    }

    pub fn pool_count(&self) -> usize {
        self.pools.len()
    }

    pub fn free_in_pool(&self, color: ColorId) -> usize {
        self.pools.get(color as usize).map_or(0, Vec::len)
    }

    pub fn register(&mut self, app: AppId) {
        let i = app.0 as usize;
        if self.apps.len() <= i {
            self.apps.resize_with(i + 1, || None);
        }
        if self.apps[i].is_none() {
            self.apps[i] = Some(AppState::default());
        }
    }

    fn app(&self, app: AppId) -> Result<&AppState, AllocError> {
        self.apps
            .get(app.0 as usize)
            .and_then(Option::as_ref)
            .ok_or(AllocError::UnknownApp(app))
    }

    fn app_mut(&mut self, app: AppId) -> Result<&mut AppState, AllocError> {
        self.apps
            .get_mut(app.0 as usize)
            .and_then(Option::as_mut)
            .ok_or(AllocError::UnknownApp(app))
    }

    pub fn apps(&self) -> impl Iterator<Item = AppId> + '_ {
        self.apps
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_some())
            .map(|(i, _)| AppId(i as u16))
    }

    /// Restrict an app to `colors`. Non-partitioning policies accept only
    /// color 0 and ignore the quota.
    pub fn assign_quota(&mut self, app: AppId, colors: &[ColorId]) -> Result<(), AllocError> {
        if colors.is_empty() {
            return Err(AllocError::EmptyQuota(app));
        }
        let page_colors = self.spec.page_colors;
        if let Some(&bad) = colors.iter().find(|&&c| c >= page_colors) {
            return Err(AllocError::UnknownColor {
                color: bad,
                colors: page_colors,
            });
        }
        let st = self.app_mut(app)?;
        if !st.table.is_empty() {
            return Err(AllocError::QuotaLocked(app));
        }
        let set: BTreeSet<ColorId> = colors.iter().copied().collect();
        st.quota = Some(set.into_iter().collect());
        st.cursor = 0;
        Ok(())
    }

    pub fn quota(&self, app: AppId) -> Result<ColorQuota, AllocError> {
        let st = self.app(app)?;
        Ok(ColorQuota {
            app,
            allowed_colors: st
                .quota
                .clone()
                .unwrap_or_else(|| self.spec.colors().collect()),
            shared_group: st.shared_group,
        })
    }

    /// Merge the quotas of each group so that every member may allocate from
    /// the union. Singleton groups are left alone.
    pub fn coalesce(&mut self, groups: &[Vec<AppId>]) -> Result<(), AllocError> {
        let mut seen = BTreeSet::new();
        for g in groups {
            for &a in g {
                self.app(a)?;
                if !seen.insert(a) {
                    return Err(AllocError::OverlappingGroups(a));
                }
            }
        }
        for g in groups.iter().filter(|g| g.len() > 1) {
            let mut union = BTreeSet::new();
            for &a in g {
                union.extend(self.quota(a)?.allowed_colors);
            }
            let union: Vec<ColorId> = union.into_iter().collect();
            let label = self.next_group;
            self.next_group += 1;
            for &a in g {
                let st = self.app_mut(a)?;
                st.quota = Some(union.clone());
                st.shared_group = Some(label);
            }
        }
        Ok(())
    }

    /// Translate `vpn` for `app`, allocating on first touch. Always sets the
    /// access bit.
    pub fn touch(&mut self, app: AppId, vpn: u64) -> Result<PageFrame, AllocError> {
        let st = self.app_mut(app)?;
        if let Some(pte) = st.table.get_mut(&vpn) {
            pte.accessed = true;
            return Ok(pte.pfn);
        }
        let pfn = self.allocate(app)?;
        let st = self.app_mut(app)?;
        st.table.insert(
            vpn,
            Pte {
                pfn,
                accessed: true,
            },
        );
        self.free -= 1;
        if let Some(log) = self.log.as_mut() {
            let color = self.spec.color_of(pfn, &self.mapping);
            log.push(AllocRecord {
                app,
                vpn,
                pfn,
                color,
                llc_group: self.spec.llc_group(color),
                bank_group: self.spec.bank_group(color),
            });
        }
        Ok(pfn)
    }

    fn allocate(&mut self, app: AppId) -> Result<PageFrame, AllocError> {
        match self.spec.kind {
            PolicyKind::Interleaving => self.pools[0]
                .pop()
                .map(|p| PageFrame(p as u64))
                .ok_or(AllocError::OutOfMemory {
                    app,
                    empty_colors: vec![0],
                }),
            PolicyKind::RandomInterleave => {
                let pool = &mut self.pools[0];
                if pool.is_empty() {
                    return Err(AllocError::OutOfMemory {
                        app,
                        empty_colors: vec![0],
                    });
                }
                let i = self.rng.random_range(0..pool.len());
                Ok(PageFrame(pool.swap_remove(i) as u64))
            }
            _ => self.allocate_colored(app),
        }
    }

    fn allocate_colored(&mut self, app: AppId) -> Result<PageFrame, AllocError> {
        let all: Vec<ColorId>;
        let st = self.apps[app.0 as usize].as_mut().expect("registered");
        let colors: &[ColorId] = match &st.quota {
            Some(q) => q,
            None => {
                all = self.spec.colors().collect();
                &all
            }
        };
        let n = colors.len();
        for k in 0..n {
            let c = colors[(st.cursor + k) % n];
            if let Some(p) = self.pools[c as usize].pop() {
                st.cursor = (st.cursor + k + 1) % n;
                return Ok(PageFrame(p as u64));
            }
        }
        let empty_colors = colors.to_vec();
        if self.allow_fallback {
            if let Some(p) = self.pools.iter_mut().find_map(|pool| pool.pop()) {
                return Ok(PageFrame(p as u64));
            }
        }
        Err(AllocError::OutOfMemory { app, empty_colors })
    }

    /// Count entries with the access bit set, then clear them all.
    pub fn access_bit_scan_and_clear(&mut self, app: AppId) -> Result<u64, AllocError> {
        let st = self.app_mut(app)?;
        let mut hot = 0;
        for pte in st.table.values_mut() {
            if pte.accessed {
                hot += 1;
                pte.accessed = false;
            }
        }
        Ok(hot)
    }

    pub fn translate(&self, app: AppId, vpn: u64) -> Option<PageFrame> {
        self.app(app).ok()?.table.get(&vpn).map(|p| p.pfn)
    }

    pub fn mapped_pages(&self, app: AppId) -> Result<usize, AllocError> {
        Ok(self.app(app)?.table.len())
    }

    /// Frames owned by `app`, ascending.
    pub fn frames_of(&self, app: AppId) -> Result<Vec<PageFrame>, AllocError> {
        let mut v: Vec<PageFrame> = self.app(app)?.table.values().map(|p| p.pfn).collect();
        v.sort_unstable();
        Ok(v)
    }

    pub fn take_log(&mut self) -> Vec<AllocRecord> {
        self.log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Check that every frame is in exactly one place and that colored
    /// allocations respect quotas. Returns a description of the first
    /// inconsistency.
    pub fn audit(&self) -> Result<(), String> {
        let mut seen = vec![false; self.total_pages as usize];
        let mut mark = |pfn: u64, what: &str| -> Result<(), String> {
            let slot = seen
                .get_mut(pfn as usize)
                .ok_or_else(|| format!("{what}: frame {pfn} out of range"))?;
            if *slot {
                return Err(format!("{what}: frame {pfn} owned twice"));
            }
            *slot = true;
            Ok(())
        };
        let mut pooled = 0u64;
        for (c, pool) in self.pools.iter().enumerate() {
            for &p in pool {
                if self.spec.partitioning && self.spec.color_of(PageFrame(p as u64), &self.mapping) as usize != c {
                    return Err(format!("frame {p} in pool {c} has another color"));
                }
                mark(p as u64, "free list")?;
                pooled += 1;
            }
        }
        let mut owned = 0u64;
        for (i, st) in self.apps.iter().enumerate() {
            let Some(st) = st else { continue };
            for pte in st.table.values() {
                mark(pte.pfn.0, "page table")?;
                owned += 1;
                if self.spec.partitioning && !self.allow_fallback {
                    let c = self.spec.color_of(pte.pfn, &self.mapping);
                    if let Some(q) = &st.quota {
                        if !q.contains(&c) {
                            return Err(format!("app {i} holds frame {} of color {c} outside its quota", pte.pfn.0));
                        }
                    }
                }
            }
        }
        if pooled != self.free || pooled + owned != self.total_pages {
            return Err(format!(
                "conservation: {pooled} free + {owned} owned != {} total (free counter {})",
                self.total_pages, self.free
            ));
        }
        Ok(())
    }
}
