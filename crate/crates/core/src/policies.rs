//! The partitioning policy space.
//!
//! Each policy picks a subset of the colorable bits. Bits in C ∪ O split the
//! LLC, bits in B ∪ O split the banks; O-bits do both at once, which is what
//! makes the *-VP policies vertical.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mapping::{gather_bits, AddressMapping, MappingError, PageFrame};

pub type ColorId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "interleave")]
    Interleaving,
    #[serde(rename = "bank-only")]
    BankOnly,
    #[serde(rename = "a-vp")]
    AVp,
    #[serde(rename = "b-vp")]
    BVp,
    #[serde(rename = "c-vp")]
    CVp,
    #[serde(rename = "random")]
    RandomInterleave,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Interleaving,
        PolicyKind::BankOnly,
        PolicyKind::AVp,
        PolicyKind::BVp,
        PolicyKind::CVp,
        PolicyKind::RandomInterleave,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Interleaving => "interleave",
            PolicyKind::BankOnly => "bank-only",
            PolicyKind::AVp => "a-vp",
            PolicyKind::BVp => "b-vp",
            PolicyKind::CVp => "c-vp",
            PolicyKind::RandomInterleave => "random",
        }
    }

    pub fn is_partitioning(self) -> bool {
        !matches!(self, PolicyKind::Interleaving | PolicyKind::RandomInterleave)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| PolicyError::UnknownPolicy(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("unknown policy '{0}' (expected interleave, bank-only, a-vp, b-vp, c-vp or random)")]
    UnknownPolicy(String),
    #[error("{policy} needs at least {needed} {class}-bits, mapping has {have}")]
    NotEnoughBits {
        policy: PolicyKind,
        class: char,
        needed: usize,
        have: usize,
    },
    #[error("{0} does not partition; page colors are undefined")]
    NotPartitioning(PolicyKind),
    #[error("color {color} out of range for {policy} ({colors} colors)")]
    ColorOutOfRange {
        policy: PolicyKind,
        color: ColorId,
        colors: u32,
    },
    #[error("override for {policy}: {source}")]
    BadOverride {
        policy: PolicyKind,
        source: MappingError,
    },
    #[error("override for {0} must list at least one bit")]
    EmptyOverride(PolicyKind),
    #[error(transparent)]
    Mapping(#[from] MappingError),
}

/// One row of the policy table, resolved against a mapping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Ascending; bit i of a color is the address bit at `color_bits[i]`.
    pub color_bits: Vec<u32>,
    /// Color-bit indices (into `color_bits`) that affect the LLC set.
    #[serde(skip)]
    llc_slots: Vec<u32>,
    /// Color-bit indices that affect the bank.
    #[serde(skip)]
    bank_slots: Vec<u32>,
    /// Color-bit indices of pure B-bits.
    #[serde(skip)]
    b_slots: Vec<u32>,
    pub llc_groups: u32,
    pub bank_groups: u32,
    pub page_colors: u32,
    pub partitioning: bool,
}

fn lowest(bits: &[u32], n: usize) -> Vec<u32> {
    let mut v = bits.to_vec();
    v.sort_unstable();
    v.truncate(n);
    v
}

fn highest(bits: &[u32], n: usize) -> Vec<u32> {
    let mut v = bits.to_vec();
    v.sort_unstable();
    v.split_off(v.len().saturating_sub(n))
}

fn require(policy: PolicyKind, class: char, bits: &[u32], needed: usize) -> Result<(), PolicyError> {
    if bits.len() < needed {
        return Err(PolicyError::NotEnoughBits {
            policy,
            class,
            needed,
            have: bits.len(),
        });
    }
    Ok(())
}

/// The built-in bit binding of each policy, derived from the bit classes:
///
/// | policy    | bits                      | default mapping |
/// |-----------|---------------------------|-----------------|
/// | bank-only | top two B + second O      | {15, 21, 22}    |
/// | a-vp      | lowest two O              | {14, 15}        |
/// | b-vp      | top B + lowest two O      | {14, 15, 22}    |
/// | c-vp      | lowest C + lowest two O   | {14, 15, 16}    |
pub fn default_binding(kind: PolicyKind, m: &AddressMapping) -> Result<Vec<u32>, PolicyError> {
    let mut bits = match kind {
        PolicyKind::Interleaving | PolicyKind::RandomInterleave => Vec::new(),
        PolicyKind::BankOnly => {
            require(kind, 'B', &m.b_bits, 2)?;
            require(kind, 'O', &m.o_bits, 2)?;
            let mut v = highest(&m.b_bits, 2);
            v.push(lowest(&m.o_bits, 2)[1]);
            v
        }
        PolicyKind::AVp => {
            require(kind, 'O', &m.o_bits, 2)?;
            lowest(&m.o_bits, 2)
        }
        PolicyKind::BVp => {
            require(kind, 'O', &m.o_bits, 2)?;
            require(kind, 'B', &m.b_bits, 1)?;
            let mut v = lowest(&m.o_bits, 2);
            v.extend(highest(&m.b_bits, 1));
            v
        }
        PolicyKind::CVp => {
            require(kind, 'O', &m.o_bits, 2)?;
            require(kind, 'C', &m.c_bits, 1)?;
            let mut v = lowest(&m.o_bits, 2);
            v.extend(lowest(&m.c_bits, 1));
            v
        }
    };
    bits.sort_unstable();
    Ok(bits)
}

impl PolicySpec {
    /// Build a spec from an explicit bit set.
    pub fn from_bits(kind: PolicyKind, bits: &[u32], m: &AddressMapping) -> Result<Self, PolicyError> {
        let mut color_bits = bits.to_vec();
        color_bits.sort_unstable();
        color_bits.dedup();
        if kind.is_partitioning() && color_bits.is_empty() {
            return Err(PolicyError::EmptyOverride(kind));
        }
        if !kind.is_partitioning() {
            color_bits.clear();
        }
        // page_color does the class and granularity checks
        if !color_bits.is_empty() {
            m.page_color(PageFrame(0), &color_bits)
                .map_err(|source| PolicyError::BadOverride { policy: kind, source })?;
        }
        let slots = |pred: &dyn Fn(u32) -> bool| -> Vec<u32> {
            color_bits
                .iter()
                .enumerate()
                .filter(|(_, &b)| pred(b))
                .map(|(i, _)| i as u32)
                .collect()
        };
        let llc_slots = slots(&|b| m.is_llc_bit(b));
        let bank_slots = slots(&|b| m.is_bank_bit(b));
        let b_slots = slots(&|b| m.b_bits.contains(&b));
        Ok(Self {
            kind,
            llc_groups: 1 << llc_slots.len(),
            bank_groups: 1 << bank_slots.len(),
            page_colors: 1 << color_bits.len(),
            partitioning: kind.is_partitioning(),
            color_bits,
            llc_slots,
            bank_slots,
            b_slots,
        })
    }

    pub fn page_color(&self, f: PageFrame, m: &AddressMapping) -> Result<ColorId, PolicyError> {
        if !self.partitioning {
            return Err(PolicyError::NotPartitioning(self.kind));
        }
        Ok(m.page_color(f, &self.color_bits)? as ColorId)
    }

    /// Color without range or class checks, for hot paths. Non-partitioning
    /// specs map every frame to color 0.
    #[inline]
    pub(crate) fn color_of(&self, f: PageFrame, m: &AddressMapping) -> ColorId {
        gather_bits(f.0 << m.page_offset_bits, &self.color_bits) as ColorId
    }

    fn check_color(&self, color: ColorId) -> Result<(), PolicyError> {
        if color >= self.page_colors {
            return Err(PolicyError::ColorOutOfRange {
                policy: self.kind,
                color,
                colors: self.page_colors,
            });
        }
        Ok(())
    }

    /// Split a color into its (LLC group, bank group) coordinates.
    pub fn project(&self, color: ColorId) -> Result<(u32, u32), PolicyError> {
        self.check_color(color)?;
        Ok((self.llc_group(color), self.bank_group(color)))
    }

    #[inline]
    pub fn llc_group(&self, color: ColorId) -> u32 {
        gather_bits(color as u64, &self.llc_slots) as u32
    }

    #[inline]
    pub fn bank_group(&self, color: ColorId) -> u32 {
        gather_bits(color as u64, &self.bank_slots) as u32
    }

    /// The pure-B part of a color: which bank slice it selects without
    /// touching the LLC.
    pub fn b_component(&self, color: ColorId) -> u32 {
        gather_bits(color as u64, &self.b_slots) as u32
    }

    pub fn b_values(&self) -> u32 {
        1 << self.b_slots.len()
    }

    pub fn colors(&self) -> impl Iterator<Item = ColorId> {
        0..self.page_colors
    }

    /// All colors whose LLC group is in `groups`.
    pub fn colors_in_llc_groups(&self, groups: &[u32]) -> Vec<ColorId> {
        self.colors()
            .filter(|&c| groups.contains(&self.llc_group(c)))
            .collect()
    }
}

/// Policy bit bindings, overridable per policy.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolicyTable {
    pub overrides: BTreeMap<PolicyKind, Vec<u32>>,
}

impl PolicyTable {
    pub fn spec(&self, kind: PolicyKind, m: &AddressMapping) -> Result<PolicySpec, PolicyError> {
        match self.overrides.get(&kind) {
            Some(bits) => PolicySpec::from_bits(kind, bits, m),
            None => policy_spec(kind, m),
        }
    }
}

pub fn policy_spec(kind: PolicyKind, m: &AddressMapping) -> Result<PolicySpec, PolicyError> {
    let bits = default_binding(kind, m)?;
    PolicySpec::from_bits(kind, &bits, m)
}
