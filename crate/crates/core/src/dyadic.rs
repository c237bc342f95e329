//! Dyadic cube geometry and finite windows of the index set `N_0 x Z^d`.
//!
//! A cube `Q_{j,k}` is the half-open box `[2^-j k, 2^-j (k+1))`. Coordinates
//! are kept as exact dyadic rationals so that membership and measure counts
//! never depend on floating point.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact dyadic rational `mantissa / 2^shift`, kept in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DyadicRational {
    mantissa: i64,
    shift: u32,
}

impl DyadicRational {
    pub fn new(mantissa: i64, shift: u32) -> Self {
        let mut m = mantissa;
        let mut s = shift;
        while s > 0 && m % 2 == 0 {
            m /= 2;
            s -= 1;
        }
        if m == 0 {
            s = 0;
        }
        Self {
            mantissa: m,
            shift: s,
        }
    }

    pub fn integer(n: i64) -> Self {
        Self::new(n, 0)
    }

    pub fn mantissa(&self) -> i64 {
        self.mantissa
    }

    pub fn shift(&self) -> u32 {
        self.shift
    }

    pub fn to_f64(&self) -> f64 {
        self.mantissa as f64 * (-(self.shift as f64)).exp2()
    }

    fn aligned(&self, other: &Self) -> (i128, i128) {
        let s = self.shift.max(other.shift);
        (
            (self.mantissa as i128) << (s - self.shift),
            (other.mantissa as i128) << (s - other.shift),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        let s = self.shift.max(other.shift);
        let (a, b) = self.aligned(other);
        Self::new((a + b) as i64, s)
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::new(self.mantissa * other.mantissa, self.shift + other.shift)
    }
}

impl PartialOrd for DyadicRational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for DyadicRational {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = self.aligned(other);
        a.cmp(&b)
    }
}

impl fmt::Display for DyadicRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.shift == 0 {
            write!(f, "{}", self.mantissa)
        } else {
            write!(f, "{}/{}", self.mantissa, 1u64 << self.shift)
        }
    }
}

/// Address `(j, k)` of the dyadic cube `Q_{j,k}`.
///
/// Ordering is level-major, then lexicographic in `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicIndex {
    pub level: u32,
    pub pos: Vec<i64>,
}

impl DyadicIndex {
    pub fn new(level: u32, pos: impl Into<Vec<i64>>) -> Self {
        Self {
            level,
            pos: pos.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.pos.len()
    }

    /// Exact bounds of the cube, one `[lower, upper)` pair per coordinate.
    pub fn cube_bounds(&self) -> DyadicBox {
        let lower = self
            .pos
            .iter()
            .map(|&k| DyadicRational::new(k, self.level))
            .collect();
        let upper = self
            .pos
            .iter()
            .map(|&k| DyadicRational::new(k + 1, self.level))
            .collect();
        DyadicBox { lower, upper }
    }

    /// Volume `2^{-jd}` as an exact dyadic rational.
    pub fn volume(&self) -> DyadicRational {
        DyadicRational::new(1, self.level * self.dim() as u32)
    }

    pub fn volume_f64(&self) -> f64 {
        (-((self.level as usize * self.dim()) as f64)).exp2()
    }

    /// The unique cube at `level` containing this one.
    pub fn ancestor(&self, level: u32) -> Result<DyadicIndex> {
        if level > self.level {
            return Err(Error::LevelOutOfRange {
                level,
                max: self.level,
            });
        }
        let shift = self.level - level;
        // arithmetic shift floors toward -inf
        let pos = self.pos.iter().map(|&k| k >> shift).collect();
        Ok(DyadicIndex { level, pos })
    }

    /// The `2^d` children one level down.
    pub fn children(&self) -> Vec<DyadicIndex> {
        let d = self.dim();
        (0..(1usize << d))
            .map(|mask| {
                let pos = (0..d)
                    .map(|i| 2 * self.pos[i] + ((mask >> (d - 1 - i)) & 1) as i64)
                    .collect();
                DyadicIndex {
                    level: self.level + 1,
                    pos,
                }
            })
            .collect()
    }

    pub fn contains_point(&self, x: &[DyadicRational]) -> bool {
        let b = self.cube_bounds();
        x.len() == self.dim() && b.contains(x)
    }
}

impl fmt::Display for DyadicIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},(", self.level)?;
        for (i, k) in self.pos.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, "))")
    }
}

/// Half-open axis-parallel box with dyadic corners.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DyadicBox {
    pub lower: Vec<DyadicRational>,
    pub upper: Vec<DyadicRational>,
}

impl DyadicBox {
    pub fn contains(&self, x: &[DyadicRational]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(xi, (lo, hi))| lo <= xi && xi < hi)
    }

    pub fn lower_f64(&self) -> Vec<f64> {
        self.lower.iter().map(DyadicRational::to_f64).collect()
    }

    pub fn upper_f64(&self) -> Vec<f64> {
        self.upper.iter().map(DyadicRational::to_f64).collect()
    }
}

/// Finite truncation of the index set: levels `0..=J`, cubes inside `[-K, K)^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub dim: usize,
    pub finest_level: u32,
    pub half_extent: u32,
}

impl Window {
    pub fn new(dim: usize, finest_level: u32, half_extent: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("window dimension must be >= 1".into()));
        }
        if half_extent == 0 {
            return Err(Error::InvalidParameter("window half extent must be >= 1".into()));
        }
        let side = 2 * half_extent as u64 * (1u64 << finest_level);
        if (side as f64).powi(dim as i32) > 1e9 {
            return Err(Error::InvalidParameter(format!(
                "window d={dim} J={finest_level} K={half_extent} is too large"
            )));
        }
        Ok(Self {
            dim,
            finest_level,
            half_extent,
        })
    }

    /// Number of positions per axis at `level`.
    pub fn side(&self, level: u32) -> usize {
        2 * self.half_extent as usize * (1usize << level)
    }

    fn min_pos(&self, level: u32) -> i64 {
        -((self.half_extent as i64) << level)
    }

    /// Number of in-window cubes at `level`.
    pub fn level_len(&self, level: u32) -> usize {
        self.side(level).pow(self.dim as u32)
    }

    pub fn finest_count(&self) -> usize {
        self.level_len(self.finest_level)
    }

    /// Volume of one finest cell.
    pub fn finest_volume(&self) -> f64 {
        (-((self.finest_level as usize * self.dim) as f64)).exp2()
    }

    /// Total number of in-window indices over all levels.
    pub fn index_count(&self) -> usize {
        (0..=self.finest_level).map(|j| self.level_len(j)).sum()
    }

    pub fn contains(&self, idx: &DyadicIndex) -> bool {
        if idx.dim() != self.dim || idx.level > self.finest_level {
            return false;
        }
        let lo = self.min_pos(idx.level);
        idx.pos.iter().all(|&k| k >= lo && k < -lo)
    }

    pub fn check(&self, idx: &DyadicIndex) -> Result<()> {
        if idx.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: idx.dim(),
            });
        }
        if !self.contains(idx) {
            return Err(Error::OutsideWindow(idx.to_string()));
        }
        Ok(())
    }

    /// Row-major offset of an in-window index within its level (first axis most significant).
    pub fn offset(&self, idx: &DyadicIndex) -> usize {
        let side = self.side(idx.level) as i64;
        let lo = self.min_pos(idx.level);
        idx.pos
            .iter()
            .fold(0i64, |acc, &k| acc * side + (k - lo)) as usize
    }

    pub fn index_at(&self, level: u32, offset: usize) -> DyadicIndex {
        let side = self.side(level);
        let lo = self.min_pos(level);
        let mut pos = vec![0i64; self.dim];
        let mut rest = offset;
        for slot in pos.iter_mut().rev() {
            *slot = (rest % side) as i64 + lo;
            rest /= side;
        }
        DyadicIndex { level, pos }
    }

    /// All in-window cubes at `level`, in offset order.
    pub fn indices_at(&self, level: u32) -> impl Iterator<Item = DyadicIndex> + '_ {
        (0..self.level_len(level)).map(move |o| self.index_at(level, o))
    }

    /// All in-window cubes, level-major.
    pub fn indices(&self) -> impl Iterator<Item = DyadicIndex> + '_ {
        (0..=self.finest_level).flat_map(move |j| self.indices_at(j))
    }

    /// Offset at `level` of the ancestor of the finest cell with offset `finest`.
    pub fn ancestor_offset(&self, finest: usize, level: u32) -> usize {
        let shift = self.finest_level - level;
        let side_f = self.side(self.finest_level);
        let side_l = self.side(level);
        let mut rest = finest;
        let mut coords = vec![0usize; self.dim];
        for slot in coords.iter_mut().rev() {
            *slot = rest % side_f;
            rest /= side_f;
        }
        // both grids start at -K, so shifting non-negative offsets is exact
        coords
            .iter()
            .fold(0usize, |acc, &c| acc * side_l + (c >> shift))
    }

    /// Level-`J` descendants of `idx`, in offset order.
    pub fn finest_cells(&self, idx: &DyadicIndex) -> Result<Vec<DyadicIndex>> {
        Ok(self
            .finest_offsets(idx)?
            .into_iter()
            .map(|o| self.index_at(self.finest_level, o))
            .collect())
    }

    /// Offsets of the level-`J` descendants of `idx`.
    pub fn finest_offsets(&self, idx: &DyadicIndex) -> Result<Vec<usize>> {
        self.check(idx)?;
        let shift = self.finest_level - idx.level;
        let n = 1i64 << shift;
        let side = self.side(self.finest_level) as i64;
        let lo = self.min_pos(self.finest_level);
        let starts: Vec<i64> = idx.pos.iter().map(|&k| (k << shift) - lo).collect();
        let count = (n as usize).pow(self.dim as u32);
        let mut out = Vec::with_capacity(count);
        let mut local = vec![0i64; self.dim];
        for _ in 0..count {
            let off = starts
                .iter()
                .zip(&local)
                .fold(0i64, |acc, (s, l)| acc * side + s + l);
            out.push(off as usize);
            for slot in local.iter_mut().rev() {
                *slot += 1;
                if *slot < n {
                    break;
                }
                *slot = 0;
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "window d={} J={} K={}",
            self.dim, self.finest_level, self.half_extent
        )
    }
}

/// Dense per-index table over a window: one `Vec` per level, indexed by [`Window::offset`].
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTable {
    window: Window,
    levels: Vec<Vec<f64>>,
}

impl LevelTable {
    pub fn from_finest(window: Window, finest: Vec<f64>) -> Result<Self> {
        if finest.len() != window.finest_count() {
            return Err(Error::InvalidParameter(format!(
                "expected {} finest values, got {}",
                window.finest_count(),
                finest.len()
            )));
        }
        let mut levels = vec![Vec::new(); window.finest_level as usize + 1];
        levels[window.finest_level as usize] = finest;
        for j in (0..window.finest_level).rev() {
            let mut coarse = vec![0.0; window.level_len(j)];
            let fine = &levels[j as usize + 1];
            for (o, v) in fine.iter().enumerate() {
                let parent = ancestor_one_up(&window, j + 1, o);
                coarse[parent] += v;
            }
            levels[j as usize] = coarse;
        }
        Ok(Self { window, levels })
    }

    pub fn from_levels(window: Window, levels: Vec<Vec<f64>>) -> Result<Self> {
        if levels.len() != window.finest_level as usize + 1
            || levels
                .iter()
                .enumerate()
                .any(|(j, l)| l.len() != window.level_len(j as u32))
        {
            return Err(Error::InvalidParameter(
                "level table shape does not match window".into(),
            ));
        }
        Ok(Self { window, levels })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn level(&self, j: u32) -> &[f64] {
        &self.levels[j as usize]
    }

    pub fn finest(&self) -> &[f64] {
        &self.levels[self.window.finest_level as usize]
    }

    pub fn get(&self, idx: &DyadicIndex) -> Option<f64> {
        if self.window.contains(idx) {
            Some(self.levels[idx.level as usize][self.window.offset(idx)])
        } else {
            None
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            window: self.window,
            levels: self
                .levels
                .iter()
                .map(|l| l.iter().map(|&v| f(v)).collect())
                .collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.window != other.window {
            return Err(Error::InvalidParameter("tables live on different windows".into()));
        }
        Ok(Self {
            window: self.window,
            levels: self
                .levels
                .iter()
                .zip(&other.levels)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
                .collect(),
        })
    }
}

fn ancestor_one_up(window: &Window, level: u32, offset: usize) -> usize {
    let side = window.side(level);
    let side_up = window.side(level - 1);
    let mut rest = offset;
    let mut acc = 0usize;
    let mut mult = 1usize;
    for _ in 0..window.dim {
        let c = rest % side;
        rest /= side;
        acc += (c >> 1) * mult;
        mult *= side_up;
    }
    acc
}
