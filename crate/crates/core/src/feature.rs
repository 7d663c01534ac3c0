//! Feature extraction, the preference hypercube, the density archive and the
//! coverage metrics computed from it.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::ResourceLimits;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Character count.
    pub length: usize,
    /// Count of ASCII digits.
    pub num_digits: usize,
}

impl FeatureVector {
    pub fn new(length: usize, num_digits: usize) -> Self {
        Self { length, num_digits }
    }
}

pub fn extract_features(s: &str) -> FeatureVector {
    FeatureVector {
        length: s.chars().count(),
        num_digits: s.bytes().filter(u8::is_ascii_digit).count(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("empty range {lo}..={hi}")]
    EmptyRange { lo: usize, hi: usize },
    #[error("cannot parse hypercube `{0}`, expected LEN_LO:LEN_HI,DIG_LO:DIG_HI")]
    Parse(String),
    #[error("{0:?} lies outside the preference hypercube")]
    OutsideCube(FeatureVector),
    #[error("normalization undefined: no positive coverage value")]
    UndefinedNormalization,
}

/// Inclusive integer interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[usize; 2]", into = "[usize; 2]")]
pub struct FeatureRange {
    lo: usize,
    hi: usize,
}

impl FeatureRange {
    pub fn new(lo: usize, hi: usize) -> Result<Self, FeatureError> {
        if lo > hi {
            return Err(FeatureError::EmptyRange { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.hi
    }

    pub fn width(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn contains(&self, v: usize) -> bool {
        (self.lo..=self.hi).contains(&v)
    }
}

impl TryFrom<[usize; 2]> for FeatureRange {
    type Error = FeatureError;

    fn try_from([lo, hi]: [usize; 2]) -> Result<Self, Self::Error> {
        Self::new(lo, hi)
    }
}

impl From<FeatureRange> for [usize; 2] {
    fn from(r: FeatureRange) -> Self {
        [r.lo, r.hi]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceHypercube {
    pub length: FeatureRange,
    pub digits: FeatureRange,
}

impl PreferenceHypercube {
    pub fn new(length: FeatureRange, digits: FeatureRange) -> Self {
        Self { length, digits }
    }

    /// Lengths 3..=50, digits 2..=25.
    pub fn standard() -> Self {
        Self {
            length: FeatureRange { lo: 3, hi: 50 },
            digits: FeatureRange { lo: 2, hi: 25 },
        }
    }

    pub fn cell_count(&self) -> usize {
        self.length.width() * self.digits.width()
    }

    pub fn classify(&self, fv: FeatureVector) -> Classification {
        if self.length.contains(fv.length) && self.digits.contains(fv.num_digits) {
            Classification::Preferred
        } else {
            Classification::Outside
        }
    }

    /// Dense index of the cell holding `fv`, if inside.
    pub fn cell_index(&self, fv: FeatureVector) -> Option<usize> {
        match self.classify(fv) {
            Classification::Preferred => Some(
                (fv.length - self.length.lo) * self.digits.width()
                    + (fv.num_digits - self.digits.lo),
            ),
            Classification::Outside => None,
        }
    }

    pub fn cell_at(&self, index: usize) -> FeatureVector {
        FeatureVector {
            length: self.length.lo + index / self.digits.width(),
            num_digits: self.digits.lo + index % self.digits.width(),
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = FeatureVector> + '_ {
        (0..self.cell_count()).map(|i| self.cell_at(i))
    }
}

impl Default for PreferenceHypercube {
    fn default() -> Self {
        Self::standard()
    }
}

impl fmt::Display for PreferenceHypercube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{},{}:{}",
            self.length.lo, self.length.hi, self.digits.lo, self.digits.hi
        )
    }
}

impl FromStr for PreferenceHypercube {
    type Err = FeatureError;

    /// Parses `LEN_LO:LEN_HI,DIG_LO:DIG_HI`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || FeatureError::Parse(s.to_string());
        let range = |part: &str| -> Result<FeatureRange, FeatureError> {
            let (lo, hi) = part.split_once(':').ok_or_else(bad)?;
            let lo = lo.trim().parse().map_err(|_| bad())?;
            let hi = hi.trim().parse().map_err(|_| bad())?;
            FeatureRange::new(lo, hi)
        };
        let (len, dig) = s.split_once(',').ok_or_else(bad)?;
        Ok(Self {
            length: range(len)?,
            digits: range(dig)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Classification {
    Preferred,
    Outside,
}

/// Per-cell counts of recorded in-cube data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DensityArchive {
    cube: PreferenceHypercube,
    counts: Vec<u32>,
    total: usize,
    covered: usize,
}

impl DensityArchive {
    pub fn new(cube: PreferenceHypercube) -> Self {
        Self {
            cube,
            counts: vec![0; cube.cell_count()],
            total: 0,
            covered: 0,
        }
    }

    pub fn cube(&self) -> &PreferenceHypercube {
        &self.cube
    }

    /// Records a preferred datum. Outside data are a contract violation.
    pub fn record(&mut self, fv: FeatureVector) -> Result<u32, FeatureError> {
        let idx = self
            .cube
            .cell_index(fv)
            .ok_or(FeatureError::OutsideCube(fv))?;
        let c = &mut self.counts[idx];
        if *c == 0 {
            self.covered += 1;
        }
        *c += 1;
        self.total += 1;
        Ok(*c)
    }

    /// Count of the cell holding `fv`; `None` when outside the cube.
    pub fn count(&self, fv: FeatureVector) -> Option<u32> {
        self.cube.cell_index(fv).map(|i| self.counts[i])
    }

    pub fn covered(&self) -> usize {
        self.covered
    }

    pub fn total_recorded(&self) -> usize {
        self.total
    }

    pub fn covered_cells(&self) -> impl Iterator<Item = FeatureVector> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, _)| self.cube.cell_at(i))
    }

    pub fn fshc(&self) -> f64 {
        fshc(self.covered, &self.cube)
    }

    /// CSV with columns `cell_length,cell_digits,count`, one row per cell.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "cell_length,cell_digits,count")?;
        for (i, &c) in self.counts.iter().enumerate() {
            let cell = self.cube.cell_at(i);
            writeln!(out, "{},{},{}", cell.length, cell.num_digits, c)?;
        }
        Ok(())
    }
}

/// Feature space hypercube coverage, in percent.
pub fn fshc(covered: usize, cube: &PreferenceHypercube) -> f64 {
    100.0 * covered as f64 / cube.cell_count() as f64
}

/// Each value relative to the largest, in percent.
pub fn nfshc(values: &[f64]) -> Result<Vec<f64>, FeatureError> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_nan() || max <= 0.0 {
        return Err(FeatureError::UndefinedNormalization);
    }
    Ok(values.iter().map(|v| 100.0 * v / max).collect())
}

/// Set of `(length, num_digits)` pairs, stored as one bit row per length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReachableSet {
    max_length: usize,
    words: usize,
    rows: Vec<u64>,
}

impl ReachableSet {
    pub fn empty(max_length: usize) -> Self {
        let words = max_length / 64 + 1;
        Self {
            max_length,
            words,
            rows: vec![0; words * (max_length + 1)],
        }
    }

    pub fn max_length(&self) -> usize {
        self.max_length
    }

    pub fn insert(&mut self, length: usize, digits: usize) {
        assert!(length <= self.max_length && digits <= self.max_length);
        self.rows[length * self.words + digits / 64] |= 1 << (digits % 64);
    }

    pub fn contains(&self, length: usize, digits: usize) -> bool {
        length <= self.max_length
            && digits <= self.max_length
            && self.rows[length * self.words + digits / 64] & (1 << (digits % 64)) != 0
    }

    fn row(&self, length: usize) -> &[u64] {
        &self.rows[length * self.words..(length + 1) * self.words]
    }

    pub fn union_with(&mut self, other: &Self) {
        assert_eq!(self.max_length, other.max_length);
        for (a, b) in self.rows.iter_mut().zip(&other.rows) {
            *a |= b;
        }
    }

    /// Every member with its length increased by `extra` (digits unchanged).
    pub fn shifted(&self, extra: usize) -> Self {
        let mut out = Self::empty(self.max_length);
        for len in 0..=self.max_length.saturating_sub(extra) {
            let dst = (len + extra) * self.words;
            out.rows[dst..dst + self.words].copy_from_slice(self.row(len));
        }
        out
    }

    /// Pairwise sums of members of `self` and `other`, plus `extra` length.
    pub fn concat(&self, other: &Self, extra: usize) -> Self {
        let mut out = Self::empty(self.max_length);
        for l1 in 0..=self.max_length {
            for d1 in (0..=l1.min(self.max_length)).filter(|&d| self.contains(l1, d)) {
                for l2 in 0..=self.max_length.saturating_sub(l1 + extra) {
                    let src = other.row(l2);
                    if src.iter().all(|&w| w == 0) {
                        continue;
                    }
                    let dst = l1 + l2 + extra;
                    or_shifted(
                        &mut out.rows[dst * self.words..(dst + 1) * self.words],
                        src,
                        d1,
                    );
                }
            }
        }
        out
    }
}

// dst |= src << shift, truncated to dst's width
fn or_shifted(dst: &mut [u64], src: &[u64], shift: usize) {
    let (word_shift, bit_shift) = (shift / 64, shift % 64);
    for i in (word_shift..dst.len()).rev() {
        let j = i - word_shift;
        let mut v = src[j] << bit_shift;
        if bit_shift > 0 && j > 0 {
            v |= src[j - 1] >> (64 - bit_shift);
        }
        dst[i] |= v;
    }
}

/// Grammars that can report which feature vectors their sentences reach.
pub trait FeatureReachability {
    fn reachable(&self, max_length: usize, limits: &ResourceLimits) -> ReachableSet;
}

/// Number of cube cells that at least one feasible sentence maps to.
pub fn max_achievable_cells<G: FeatureReachability + ?Sized>(
    cube: &PreferenceHypercube,
    grammar: &G,
    limits: &ResourceLimits,
) -> usize {
    let reach = grammar.reachable(cube.length.hi, limits);
    cube.cells()
        .filter(|c| reach.contains(c.length, c.num_digits))
        .count()
}
