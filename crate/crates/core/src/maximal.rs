//! Dyadic local maximal operator and the weighted vector-valued maximal ratio.
//!
//! The supremum runs over the dyadic ancestors (levels `0..=J`) of each finest
//! cell, so every cube involved has volume at most one.

use rayon::prelude::*;

use crate::dyadic::{LevelTable, Window};
use crate::error::{Error, Result};
use crate::weights::{parse_cell_table, write_cell_table, Weight};

/// Nonnegative function, constant on the finest cells of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFunction {
    window: Window,
    values: Vec<f64>,
}

impl CellFunction {
    pub fn new(window: Window, values: Vec<f64>) -> Result<Self> {
        if values.len() != window.finest_count() {
            return Err(Error::InvalidParameter(format!(
                "cell function needs {} values, got {}",
                window.finest_count(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "cell values must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Self { window, values })
    }

    pub fn constant(window: Window, c: f64) -> Result<Self> {
        Self::new(window, vec![c; window.finest_count()])
    }

    /// Indicator of the finest cell with offset `cell`.
    pub fn indicator(window: Window, cell: usize) -> Result<Self> {
        let mut values = vec![0.0; window.finest_count()];
        *values
            .get_mut(cell)
            .ok_or_else(|| Error::OutsideWindow(format!("finest offset {cell}")))? = 1.0;
        Self::new(window, values)
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    /// `(sum_m f_m^p mass_m)^{1/p}`, or `max_m f_m` for `p = inf`.
    pub fn lp_norm(&self, masses: &[f64], p: f64) -> f64 {
        lp_norm(&self.values, masses, p)
    }

    /// Same text format as cell measures; the last column holds the value.
    pub fn parse(text: &str) -> Result<Self> {
        let (window, values) = parse_cell_table(text)?;
        Self::new(window, values)
    }

    pub fn to_text(&self) -> String {
        write_cell_table(&self.window, &self.values)
    }
}

pub(crate) fn lp_norm(values: &[f64], masses: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0f64, |m, v| m.max(*v));
    }
    values
        .iter()
        .zip(masses)
        .filter(|(v, _)| **v != 0.0)
        .map(|(v, m)| v.powf(p) * m)
        .sum::<f64>()
        .powf(1.0 / p)
}

/// `M^loc f` restricted to dyadic ancestors: the largest ancestor average.
pub fn m_loc(f: &CellFunction) -> CellFunction {
    let w = f.window;
    let sums = LevelTable::from_finest(w, f.values.clone()).expect("length checked");
    let mut out = f.values.clone();
    for j in 0..w.finest_level {
        let count = ((w.finest_level - j) as usize * w.dim) as f64;
        let inv = (-count).exp2();
        let level = sums.level(j);
        for (m, o) in out.iter_mut().enumerate() {
            let avg = level[w.ancestor_offset(m, j)] * inv;
            if avg > *o {
                *o = avg;
            }
        }
    }
    CellFunction {
        window: w,
        values: out,
    }
}

fn lq_pointwise(fs: &[CellFunction], q: f64) -> Vec<f64> {
    let n = fs[0].values.len();
    (0..n)
        .map(|m| {
            if q.is_infinite() {
                fs.iter().fold(0.0f64, |a, f| a.max(f.values[m]))
            } else {
                fs.iter()
                    .map(|f| f.values[m])
                    .filter(|v| *v != 0.0)
                    .map(|v| v.powf(q))
                    .sum::<f64>()
                    .powf(1.0 / q)
            }
        })
        .collect()
}

/// `||(sum_i (M^loc f_i)^q)^{1/q}||_{L_p(w)} / ||(sum_i f_i^q)^{1/q}||_{L_p(w)}`.
pub fn vv_maximal_constant(family: &[CellFunction], p: f64, q: f64, w: &Weight, tol: f64) -> Result<f64> {
    let window = family
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty family".into()))?
        .window;
    let masses = w.mass_table(&window, tol)?;
    vv_maximal_constant_with(family, p, q, masses.finest())
}

/// As [`vv_maximal_constant`] with precomputed finest-cell masses.
pub fn vv_maximal_constant_with(family: &[CellFunction], p: f64, q: f64, masses: &[f64]) -> Result<f64> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("need 1 < p < inf, got {p}")));
    }
    if !(q > 1.0) {
        return Err(Error::InvalidParameter(format!("need 1 < q <= inf, got {q}")));
    }
    let first = family
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty family".into()))?;
    if family.iter().any(|f| f.window != first.window) {
        return Err(Error::InvalidParameter("family spans several windows".into()));
    }
    if masses.len() != first.values.len() {
        return Err(Error::InvalidParameter("mass table does not match window".into()));
    }
    let maxed: Vec<CellFunction> = family.par_iter().map(m_loc).collect();
    let den = lp_norm(&lq_pointwise(family, q), masses, p);
    if den == 0.0 {
        return Err(Error::InvalidParameter("zero family".into()));
    }
    let num = lp_norm(&lq_pointwise(&maxed, q), masses, p);
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_are_fixed() {
        let w = Window::new(1, 4, 2).unwrap();
        let f = CellFunction::constant(w, 2.5).unwrap();
        assert_eq!(m_loc(&f), f);
        let r = vv_maximal_constant(&[f.clone(), f], 2.0, 2.0, &Weight::one(), 1e-10).unwrap();
        assert!((r - 1.0).abs() < 1e-14);
    }

    #[test]
    fn indicator_averages() {
        let j_max = 3;
        let w = Window::new(1, j_max, 1).unwrap();
        // finest cell [0, 1/8) has offset 8
        let f = CellFunction::indicator(w, 8).unwrap();
        let mf = m_loc(&f);
        assert_eq!(mf.values()[8], 1.0);
        assert_eq!(mf.values()[9], 0.5);
        assert_eq!(mf.values()[10], 0.25);
        assert_eq!(mf.values()[12], 0.125);
        assert_eq!(mf.values()[7], 0.0);
        let r = vv_maximal_constant(&[f], 2.0, 2.0, &Weight::one(), 1e-10).unwrap();
        // (1 + 1/4 + 2/16 + 4/64)^{1/2}
        assert!((r - (1.4375f64).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        let w = Window::new(1, 2, 1).unwrap();
        let z = CellFunction::constant(w, 0.0).unwrap();
        assert!(vv_maximal_constant(&[z], 2.0, 2.0, &Weight::one(), 1e-8).is_err());
        assert!(vv_maximal_constant(&[], 2.0, 2.0, &Weight::one(), 1e-8).is_err());
        assert!(CellFunction::new(w, vec![-1.0; 8]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let w = Window::new(1, 1, 1).unwrap();
        let f = CellFunction::new(w, vec![0.0, 1.0, 2.5, 0.125]).unwrap();
        assert_eq!(CellFunction::parse(&f.to_text()).unwrap(), f);
    }
}
