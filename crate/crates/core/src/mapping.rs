//! Physical address decomposition and page-color bit classes.
//!
//! A physical address feeds two hardware index functions: the LLC set index
//! and the DRAM bank index. Bits above the page offset that participate in
//! those functions can be steered by the OS when it picks a page frame. They
//! fall into three classes:
//!
//! * **B-bits** index DRAM banks only,
//! * **C-bits** index LLC sets only,
//! * **O-bits** index both (the overlap that makes vertical partitioning work).
//!
//! Multi-bit fields are assembled LSB-first: the first listed position becomes
//! bit 0 of the result. Color bit sets are always kept in ascending position
//! order, so a color integer is the canonical LSB-first gather of its bits.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 8 GiB of physical memory.
pub const DEFAULT_MEMORY_BYTES: u64 = 8 << 30;

/// A physical byte address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhysAddr(pub u64);

/// A physical page-frame number (`address >> page_offset_bits`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PageFrame(pub u64);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MappingError {
    #[error("address {addr:#x} outside physical memory of {limit:#x} bytes")]
    AddressOutOfRange { addr: u64, limit: u64 },
    #[error("page frame {pfn} outside physical memory of {total} frames")]
    FrameOutOfRange { pfn: u64, total: u64 },
    #[error("bit {0} lies below page granularity and cannot be colored")]
    BelowPageOffset(u32),
    #[error("bit {0} is not a B-, C- or O-bit")]
    NotColorBit(u32),
    #[error("invalid address mapping: {0}")]
    Invalid(ValidationReport),
}

/// A single broken mapping invariant, naming the offending bit position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    PositionTooHigh(u32),
    DuplicatePosition(u32),
    EmptySetIndex,
    EmptyBankIndex,
    LineOffsetAbovePage,
    SetBitBelowLineOffset(u32),
    RowOverlapsIndex(u32),
    MemoryNotPowerOfTwo(u64),
    OBitBelowPageOffset(u32),
    OBitNotInSetIndex(u32),
    OBitNotInBankIndex(u32),
    BBitBelowPageOffset(u32),
    BBitNotInBankIndex(u32),
    BBitIndexesSets(u32),
    CBitBelowPageOffset(u32),
    CBitNotInSetIndex(u32),
    CBitIndexesBanks(u32),
    ClassOverlap(u32),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match *self {
            PositionTooHigh(b) => write!(f, "bit {b} exceeds a 64-bit address"),
            DuplicatePosition(b) => write!(f, "bit {b} listed twice"),
            EmptySetIndex => write!(f, "set index has no bits"),
            EmptyBankIndex => write!(f, "bank index has no bits"),
            LineOffsetAbovePage => write!(f, "line offset wider than page offset"),
            SetBitBelowLineOffset(b) => write!(f, "set-index bit {b} below line offset"),
            RowOverlapsIndex(b) => write!(f, "bank-index bit {b} at or above row shift"),
            MemoryNotPowerOfTwo(m) => write!(f, "memory size {m} is not a power of two"),
            OBitBelowPageOffset(b) => write!(f, "o-bit {b} below page offset"),
            OBitNotInSetIndex(b) => write!(f, "o-bit {b} does not index sets"),
            OBitNotInBankIndex(b) => write!(f, "o-bit {b} does not index banks"),
            BBitBelowPageOffset(b) => write!(f, "b-bit {b} below page offset"),
            BBitNotInBankIndex(b) => write!(f, "b-bit {b} does not index banks"),
            BBitIndexesSets(b) => write!(f, "b-bit {b} indexes sets"),
            CBitBelowPageOffset(b) => write!(f, "c-bit {b} below page offset"),
            CBitNotInSetIndex(b) => write!(f, "c-bit {b} does not index sets"),
            CBitIndexesBanks(b) => write!(f, "c-bit {b} indexes banks"),
            ClassOverlap(b) => write!(f, "bit {b} belongs to more than one color class"),
        }
    }
}

/// Result of [`AddressMapping::validate`]. Empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Where each index function takes its bits from.
///
/// The default models a 64-bank, 8 GiB machine with an 8 MiB 16-way LLC:
/// B-bits {21,22}, C-bits {16,17,18}, O-bits {14,15}. Bank-index bits 19 and
/// 20 exist in the hardware function but are not colorable classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AddressMapping {
    pub page_offset_bits: u32,
    pub line_offset_bits: u32,
    pub set_index_bits: Vec<u32>,
    pub bank_index_bits: Vec<u32>,
    pub b_bits: Vec<u32>,
    pub c_bits: Vec<u32>,
    pub o_bits: Vec<u32>,
    pub row_shift: u32,
    pub memory_bytes: u64,
}

impl Default for AddressMapping {
    fn default() -> Self {
        Self {
            page_offset_bits: 12,
            line_offset_bits: 6,
            set_index_bits: (6..=18).collect(),
            bank_index_bits: vec![14, 15, 19, 20, 21, 22],
            b_bits: vec![21, 22],
            c_bits: vec![16, 17, 18],
            o_bits: vec![14, 15],
            row_shift: 23,
            memory_bytes: DEFAULT_MEMORY_BYTES,
        }
    }
}

/// Indices an address resolves to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decomposed {
    pub set_id: u64,
    pub bank_id: u64,
    pub row_id: u64,
    pub line_tag: u64,
}

/// Gather the bits of `value` at `positions` into an integer, LSB-first.
#[inline]
pub fn gather_bits(value: u64, positions: &[u32]) -> u64 {
    positions
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &p)| acc | (((value >> p) & 1) << i))
}

fn duplicates(list: &[u32]) -> Vec<u32> {
    let mut seen = BTreeSet::new();
    list.iter().copied().filter(|b| !seen.insert(*b)).collect()
}

impl AddressMapping {
    pub fn validate(&self) -> ValidationReport {
        use Violation::*;
        let mut v = Vec::new();
        let sets: BTreeSet<u32> = self.set_index_bits.iter().copied().collect();
        let banks: BTreeSet<u32> = self.bank_index_bits.iter().copied().collect();
        let page = self.page_offset_bits;

        for list in [
            &self.set_index_bits,
            &self.bank_index_bits,
            &self.b_bits,
            &self.c_bits,
            &self.o_bits,
        ] {
            for &b in list.iter() {
                if b >= 64 {
                    v.push(PositionTooHigh(b));
                }
            }
            v.extend(duplicates(list).into_iter().map(DuplicatePosition));
        }
        if self.set_index_bits.is_empty() {
            v.push(EmptySetIndex);
        }
        if self.bank_index_bits.is_empty() {
            v.push(EmptyBankIndex);
        }
        if self.line_offset_bits > page {
            v.push(LineOffsetAbovePage);
        }
        for &b in &self.set_index_bits {
            if b < self.line_offset_bits {
                v.push(SetBitBelowLineOffset(b));
            }
        }
        for &b in &self.bank_index_bits {
            if b >= self.row_shift {
                v.push(RowOverlapsIndex(b));
            }
        }
        if !self.memory_bytes.is_power_of_two() || self.memory_bytes < (1 << page) {
            v.push(MemoryNotPowerOfTwo(self.memory_bytes));
        }

        for &b in &self.o_bits {
            if b < page {
                v.push(OBitBelowPageOffset(b));
            }
            if !sets.contains(&b) {
                v.push(OBitNotInSetIndex(b));
            }
            if !banks.contains(&b) {
                v.push(OBitNotInBankIndex(b));
            }
        }
        for &b in &self.b_bits {
            if b < page {
                v.push(BBitBelowPageOffset(b));
            }
            if !banks.contains(&b) {
                v.push(BBitNotInBankIndex(b));
            }
            if sets.contains(&b) {
                v.push(BBitIndexesSets(b));
            }
        }
        for &b in &self.c_bits {
            if b < page {
                v.push(CBitBelowPageOffset(b));
            }
            if !sets.contains(&b) {
                v.push(CBitNotInSetIndex(b));
            }
            if banks.contains(&b) {
                v.push(CBitIndexesBanks(b));
            }
        }
        let mut class_seen = BTreeSet::new();
        for list in [&self.b_bits, &self.c_bits, &self.o_bits] {
            let uniq: BTreeSet<u32> = list.iter().copied().collect();
            for b in uniq {
                if !class_seen.insert(b) {
                    v.push(ClassOverlap(b));
                }
            }
        }
        ValidationReport { violations: v }
    }

    /// `self` if valid, otherwise the violation report as an error.
    pub fn checked(self) -> Result<Self, MappingError> {
        let report = self.validate();
        if report.is_ok() {
            Ok(self)
        } else {
            Err(MappingError::Invalid(report))
        }
    }

    pub fn total_pages(&self) -> u64 {
        self.memory_bytes >> self.page_offset_bits
    }

    pub fn page_bytes(&self) -> u64 {
        1 << self.page_offset_bits
    }

    pub fn set_count(&self) -> u64 {
        1 << self.set_index_bits.len()
    }

    pub fn bank_count(&self) -> u64 {
        1 << self.bank_index_bits.len()
    }

    /// B ∪ C ∪ O, ascending.
    pub fn colorable_bits(&self) -> Vec<u32> {
        let all: BTreeSet<u32> = self
            .b_bits
            .iter()
            .chain(&self.c_bits)
            .chain(&self.o_bits)
            .copied()
            .collect();
        all.into_iter().collect()
    }

    pub fn is_llc_bit(&self, bit: u32) -> bool {
        self.c_bits.contains(&bit) || self.o_bits.contains(&bit)
    }

    pub fn is_bank_bit(&self, bit: u32) -> bool {
        self.b_bits.contains(&bit) || self.o_bits.contains(&bit)
    }

    pub fn check_addr(&self, a: PhysAddr) -> Result<(), MappingError> {
        if a.0 >= self.memory_bytes {
            return Err(MappingError::AddressOutOfRange {
                addr: a.0,
                limit: self.memory_bytes,
            });
        }
        Ok(())
    }

    pub fn decompose(&self, a: PhysAddr) -> Result<Decomposed, MappingError> {
        self.check_addr(a)?;
        Ok(self.decompose_unchecked(a))
    }

    #[inline]
    pub(crate) fn decompose_unchecked(&self, a: PhysAddr) -> Decomposed {
        Decomposed {
            set_id: gather_bits(a.0, &self.set_index_bits),
            bank_id: gather_bits(a.0, &self.bank_index_bits),
            row_id: a.0 >> self.row_shift,
            line_tag: a.0 >> self.line_offset_bits,
        }
    }

    pub fn frame_addr(&self, f: PageFrame) -> PhysAddr {
        PhysAddr(f.0 << self.page_offset_bits)
    }

    /// Color of a frame over `bits`, which must be colorable positions.
    /// Positions are gathered in ascending order.
    pub fn page_color(&self, f: PageFrame, bits: &[u32]) -> Result<u64, MappingError> {
        if f.0 >= self.total_pages() {
            return Err(MappingError::FrameOutOfRange {
                pfn: f.0,
                total: self.total_pages(),
            });
        }
        for &b in bits {
            if b < self.page_offset_bits {
                return Err(MappingError::BelowPageOffset(b));
            }
            if !self.b_bits.contains(&b) && !self.c_bits.contains(&b) && !self.o_bits.contains(&b)
            {
                return Err(MappingError::NotColorBit(b));
            }
        }
        let mut sorted = bits.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        Ok(gather_bits(self.frame_addr(f).0, &sorted))
    }
}
