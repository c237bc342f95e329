//! Deterministic random instances.
//!
//! Instance `i` of seed `s` is drawn from `ChaCha8Rng::seed_from_u64(s)` with the
//! stream set to `i`, so every instance is reproducible on its own and batches can
//! be generated in any order. Magnitudes are `2^u` with `u` uniform in `[-8, 8]`;
//! complex instances multiply by `e^{i phi}` with `phi` uniform in `[0, 2 pi)`.
//! Sparse supports are drawn uniformly without replacement from the allowed levels.

use std::f64::consts::TAU;
use std::str::FromStr;

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dyadic::{DyadicIndex, Window};
use crate::error::{Error, Result};
use crate::maximal::CellFunction;
use crate::seqspaces::Sequence;
use crate::weights::{CellMeasure, Weight};

pub const LOG2_MAGNITUDE_RANGE: f64 = 8.0;

/// Generator for instance `index` of `seed`.
pub fn instance_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn log_uniform_magnitude<R: Rng>(rng: &mut R) -> f64 {
    rng.gen_range(-LOG2_MAGNITUDE_RANGE..=LOG2_MAGNITUDE_RANGE).exp2()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    /// Every in-window index on the allowed levels.
    Dense,
    /// `n` distinct indices (capped by the number available).
    Sparse(usize),
}

/// Window, allowed levels, support and value type of random sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeSpec {
    pub window: Window,
    pub levels: (u32, u32),
    pub support: Support,
    pub complex: bool,
}

impl ShapeSpec {
    pub fn dense(window: Window) -> Self {
        Self {
            window,
            levels: (0, window.finest_level),
            support: Support::Dense,
            complex: false,
        }
    }

    pub fn sparse(window: Window, n: usize) -> Self {
        Self {
            support: Support::Sparse(n),
            ..Self::dense(window)
        }
    }

    pub fn with_levels(self, lo: u32, hi: u32) -> Self {
        Self {
            levels: (lo, hi),
            ..self
        }
    }

    pub fn with_complex(self, complex: bool) -> Self {
        Self { complex, ..self }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.levels;
        if lo > hi || hi > self.window.finest_level {
            return Err(Error::LevelOutOfRange {
                level: hi.max(lo),
                max: self.window.finest_level,
            });
        }
        Ok(())
    }

    /// Number of in-window indices on the allowed levels.
    pub fn available(&self) -> usize {
        (self.levels.0..=self.levels.1).map(|j| self.window.level_len(j)).sum()
    }
}

/// `"dense|sparse:N [levels A..B] [complex] d=D J=J K=K"`, tokens separated by whitespace or commas.
impl FromStr for ShapeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (mut d, mut j, mut k) = (1usize, 4u32, 1u32);
        let mut support = Support::Dense;
        let mut levels = None;
        let mut complex = false;
        let bad = |t: &str| Error::InvalidParameter(format!("bad shape token '{t}'"));
        let mut tokens = s.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty());
        while let Some(t) = tokens.next() {
            let num = |v: &str| v.parse::<u64>().map_err(|_| bad(t));
            match t {
                "dense" => support = Support::Dense,
                "complex" => complex = true,
                "real" => complex = false,
                "levels" | "level" => {
                    let r = tokens.next().ok_or_else(|| bad(t))?;
                    levels = Some(parse_range(r).ok_or_else(|| bad(r))?);
                }
                _ => {
                    if let Some(n) = t.strip_prefix("sparse:") {
                        support = Support::Sparse(num(n)? as usize);
                    } else if let Some(v) = t.strip_prefix("d=") {
                        d = num(v)? as usize;
                    } else if let Some(v) = t.strip_prefix("J=") {
                        j = num(v)? as u32;
                    } else if let Some(v) = t.strip_prefix("K=") {
                        k = num(v)? as u32;
                    } else if let Some(v) = t.strip_prefix("levels=") {
                        levels = Some(parse_range(v).ok_or_else(|| bad(t))?);
                    } else if t.eq_ignore_ascii_case("1d") || t.eq_ignore_ascii_case("2d") || t.eq_ignore_ascii_case("3d") {
                        d = t[..1].parse().map_err(|_| bad(t))?;
                    } else {
                        return Err(bad(t));
                    }
                }
            }
        }
        let window = Window::new(d, j, k)?;
        let spec = ShapeSpec {
            window,
            levels: levels.unwrap_or((0, j)),
            support,
            complex,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_range(s: &str) -> Option<(u32, u32)> {
    let (a, b) = s.split_once("..")?;
    let b = b.strip_prefix('=').unwrap_or(b);
    Some((a.parse().ok()?, b.parse().ok()?))
}

/// One random sequence with the given shape.
pub fn random_sequence<R: Rng>(rng: &mut R, shape: &ShapeSpec) -> Result<Sequence> {
    shape.validate()?;
    let w = shape.window;
    let (lo, hi) = shape.levels;
    let total = shape.available();
    let picks: Vec<usize> = match shape.support {
        Support::Dense => (0..total).collect(),
        Support::Sparse(n) => {
            let mut v = sample(rng, total, n.min(total)).into_vec();
            v.sort_unstable();
            v
        }
    };
    let mut seq = Sequence::new(w);
    for flat in picks {
        let idx = flat_index(&w, lo, hi, flat);
        let mag = log_uniform_magnitude(rng);
        let v = if shape.complex {
            Complex64::from_polar(mag, rng.gen_range(0.0..TAU))
        } else {
            Complex64::new(mag, 0.0)
        };
        seq.insert(idx, v)?;
    }
    Ok(seq)
}

fn flat_index(w: &Window, lo: u32, hi: u32, mut flat: usize) -> DyadicIndex {
    for j in lo..=hi {
        let n = w.level_len(j);
        if flat < n {
            return w.index_at(j, flat);
        }
        flat -= n;
    }
    unreachable!("flat index checked against the level count")
}

/// `count` sequences, instance `i` drawn from [`instance_rng`]`(seed, i)`.
pub fn generate_instances(seed: u64, count: usize, shape: &ShapeSpec) -> Result<Vec<Sequence>> {
    (0..count)
        .map(|i| random_sequence(&mut instance_rng(seed, i as u64), shape))
        .collect()
}

/// Sum of `terms` indicators of random in-window cubes (levels `0..=J`) with log-uniform heights.
pub fn random_cell_function<R: Rng>(rng: &mut R, window: &Window, terms: usize) -> Result<CellFunction> {
    let mut values = vec![0.0; window.finest_count()];
    for _ in 0..terms {
        let j = rng.gen_range(0..=window.finest_level);
        let idx = window.index_at(j, rng.gen_range(0..window.level_len(j)));
        let h = log_uniform_magnitude(rng);
        for o in window.finest_offsets(&idx)? {
            values[o] += h;
        }
    }
    CellFunction::new(*window, values)
}

/// Log-uniform value on every finest cell.
pub fn random_dense_cell_function<R: Rng>(rng: &mut R, window: &Window) -> Result<CellFunction> {
    let values = (0..window.finest_count()).map(|_| log_uniform_magnitude(rng)).collect();
    CellFunction::new(*window, values)
}

/// One of: constant, radial power `|x|^a` with `a` in `[-0.9, 0.9]`, exponential
/// `e^{r|x|}` with `r` in `[-1, 1]`, or a cell measure with log-uniform density in `[1/4, 4]`.
pub fn random_weight<R: Rng>(rng: &mut R, window: &Window) -> Result<Weight> {
    Ok(match rng.gen_range(0..4) {
        0 => Weight::constant(rng.gen_range(-2.0f64..=2.0).exp2()),
        1 => Weight::power(rng.gen_range(-0.9..=0.9)),
        2 => Weight::exponential(rng.gen_range(-1.0..=1.0)),
        _ => {
            let vol = window.finest_volume();
            let masses = (0..window.finest_count())
                .map(|_| vol * rng.gen_range(-2.0f64..=2.0).exp2())
                .collect();
            Weight::cells(CellMeasure::new(*window, masses)?)
        }
    })
}

/// A family of `size` random cell functions.
pub fn random_family<R: Rng>(rng: &mut R, window: &Window, size: usize, terms: usize) -> Result<Vec<CellFunction>> {
    (0..size).map(|_| random_cell_function(rng, window, terms)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinism_and_empty() {
        let shape = ShapeSpec::sparse(Window::new(1, 4, 2).unwrap(), 5).with_complex(true);
        assert!(generate_instances(1, 0, &shape).unwrap().is_empty());
        let a = generate_instances(1, 3, &shape).unwrap();
        let b = generate_instances(1, 3, &shape).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0], random_sequence(&mut instance_rng(1, 0), &shape).unwrap());
        assert_ne!(a[0], a[1]);
        assert!(a.iter().all(|s| s.len() == 5));
    }

    #[test]
    fn dense_support_counts_indices() {
        let shape: ShapeSpec = "dense levels 0..3 1D K=2 J=3".parse().unwrap();
        let seq = random_sequence(&mut instance_rng(3, 0), &shape).unwrap();
        assert_eq!(seq.len(), 4 + 8 + 16 + 32);
        assert_eq!(seq.len(), shape.window.index_count());
        for (_, v) in seq.iter() {
            let l = v.norm().log2();
            assert!((-8.0..=8.0).contains(&l));
        }
    }

    #[test]
    fn shape_parsing() {
        let s: ShapeSpec = "sparse:6,levels=1..2,complex,d=2,J=3,K=1".parse().unwrap();
        assert_eq!(s.support, Support::Sparse(6));
        assert_eq!(s.levels, (1, 2));
        assert!(s.complex);
        assert_eq!(s.window.dim, 2);
        assert!("dense levels 0..9 J=3".parse::<ShapeSpec>().is_err());
        assert!("wobbly".parse::<ShapeSpec>().is_err());
    }

    #[test]
    fn cell_functions_are_nonnegative() {
        let w = Window::new(1, 3, 1).unwrap();
        let mut rng = instance_rng(9, 0);
        let f = random_cell_function(&mut rng, &w, 4).unwrap();
        assert!(!f.is_zero());
        let fam = random_family(&mut rng, &w, 3, 2).unwrap();
        assert_eq!(fam.len(), 3);
    }
}
