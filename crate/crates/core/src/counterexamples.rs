//! Witnesses for the boundary cases: a sequence in the intersection of two
//! `b_{p,inf}` spaces whose cutoffs do not converge, and embedding-chain ratios.

use serde::Serialize;
use serde_json::{json, Value};

use crate::dyadic::{DyadicIndex, Window};
use crate::error::{Error, Result};
use crate::report::{json_f64, ReportRecord};
use crate::seqspaces::{interpolate_exponent, ring_convergence_profile_in, Sequence, Space, SpaceParams};
use crate::weights::{check_theta, Weight, DEFAULT_QUAD_TOL};

/// Profile values at or above this count as non-convergent.
pub const NON_CONVERGENCE_FLOOR: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapSpec {
    pub d: usize,
    pub s0: f64,
    pub s1: f64,
    pub p0: f64,
    pub p1: f64,
    pub theta: f64,
}

impl GapSpec {
    /// `d = 1, s0 = s1 = 0, p0 = 1, p1 = 2, theta = 1/2`.
    pub fn canonical() -> Self {
        Self {
            d: 1,
            s0: 0.0,
            s1: 0.0,
            p0: 1.0,
            p1: 2.0,
            theta: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_theta(self.theta)?;
        if self.d == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if !(self.p0 >= 1.0 && self.p0 < self.p1) || self.p0.is_infinite() {
            return Err(Error::Precondition(format!(
                "need 1 <= p0 < p1 <= inf, got p0={} p1={}",
                self.p0, self.p1
            )));
        }
        let d = self.d as f64;
        let lhs = self.s0 - d / self.p0;
        let rhs = self.s1 - d / self.p1;
        if lhs > rhs + 1e-12 {
            return Err(Error::Precondition(format!(
                "need s0 - d/p0 <= s1 - d/p1, got {lhs} > {rhs}"
            )));
        }
        Ok(())
    }

    /// `(s, p)` of the intermediate space.
    pub fn target(&self) -> (f64, f64) {
        (
            (1.0 - self.theta) * self.s0 + self.theta * self.s1,
            interpolate_exponent(self.p0, self.p1, self.theta),
        )
    }

    /// `log2 #K_j / j` before rounding: `-((s1-s0)/(1/p1-1/p0) - d)`.
    fn growth(&self) -> f64 {
        let inv1 = if self.p1.is_infinite() { 0.0 } else { 1.0 / self.p1 };
        -((self.s1 - self.s0) / (inv1 - 1.0 / self.p0) - self.d as f64)
    }

    /// `#K_j = ceil(2^{-j((s1-s0)/(1/p1-1/p0) - d)})`.
    pub fn cardinality(&self, j: u32) -> Result<u64> {
        let x = j as f64 * self.growth();
        let r = x.round();
        if (x - r).abs() <= 1e-9 {
            if r <= 0.0 {
                return Ok(1);
            }
            if r >= 63.0 {
                return Err(Error::WindowTooSmall(format!("#K_{j} = 2^{r} is out of range")));
            }
            return Ok(1u64 << (r as u32));
        }
        let v = x.exp2().ceil();
        if !(v.is_finite() && v < 9.0e18) {
            return Err(Error::WindowTooSmall(format!("#K_{j} overflows")));
        }
        Ok(v as u64)
    }

    /// `log2` of the entry value `2^{j(p1 s1 - p0 s0)/(p0 - p1)}` (`-j s1` for `p1 = inf`).
    pub fn log2_value(&self, j: u32) -> f64 {
        let e = if self.p1.is_infinite() {
            -self.s1
        } else {
            (self.p1 * self.s1 - self.p0 * self.s0) / (self.p0 - self.p1)
        };
        j as f64 * e
    }
}

/// Entries `2^{j(p1s1-p0s0)/(p0-p1)}` on the first `#K_j` nonnegative positions of each level.
pub fn gap_sequence(spec: &GapSpec, window: &Window) -> Result<Sequence> {
    spec.validate()?;
    if window.dim != spec.d {
        return Err(Error::DimensionMismatch {
            expected: spec.d,
            found: window.dim,
        });
    }
    let mut seq = Sequence::new(*window);
    for j in 0..=window.finest_level {
        let n = spec.cardinality(j)?;
        let half = window.side(j) / 2;
        let available = (half as u64).checked_pow(window.dim as u32).unwrap_or(u64::MAX);
        if n > available {
            return Err(Error::WindowTooSmall(format!(
                "level {j} needs {n} positions, window offers {available}"
            )));
        }
        let value = spec.log2_value(j).exp2();
        for i in 0..n {
            // lexicographic order, first axis most significant
            let mut pos = vec![0i64; window.dim];
            let mut rest = i;
            for slot in pos.iter_mut().rev() {
                *slot = (rest % half as u64) as i64;
                rest /= half as u64;
            }
            seq.insert(DyadicIndex::new(j, pos), value)?;
        }
    }
    Ok(seq)
}

/// Norms of a gap candidate and its cutoff profile in `b^s_{p,inf}`.
#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub spec: GapSpec,
    pub window: Window,
    pub norm_target: f64,
    pub norm0: f64,
    pub norm1: f64,
    pub ms: Vec<u32>,
    pub profile: Vec<f64>,
    pub witnessed: bool,
    pub conclusion: String,
}

impl GapReport {
    pub fn records(&self) -> Vec<ReportRecord> {
        let params = json!({
            "d": self.spec.d, "s0": self.spec.s0, "s1": self.spec.s1,
            "p0": json_f64(self.spec.p0), "p1": json_f64(self.spec.p1),
            "theta": self.spec.theta, "window": self.window,
        });
        let mut out = vec![
            ReportRecord::number("gap", 0, "norm_b_s0_p0_inf", self.norm0, self.norm0.is_finite(), params.clone()),
            ReportRecord::number("gap", 0, "norm_b_s1_p1_inf", self.norm1, self.norm1.is_finite(), params.clone()),
            ReportRecord::number("gap", 0, "norm_b_s_p_inf", self.norm_target, self.norm_target.is_finite(), params.clone()),
        ];
        for (i, (m, v)) in self.ms.iter().zip(&self.profile).enumerate() {
            let mut p = params.clone();
            p["M"] = json!(m);
            out.push(ReportRecord::number("gap", i, "cutoff_residual", *v, *v >= NON_CONVERGENCE_FLOOR, p));
        }
        out.push(ReportRecord::new(
            "gap",
            0,
            "conclusion",
            Value::from(self.conclusion.clone()),
            self.witnessed,
            params,
        ));
        out
    }
}

/// Report for an arbitrary candidate sequence (used for negative controls).
pub fn gap_report_for(seq: &Sequence, spec: &GapSpec, ms: &[u32]) -> Result<GapReport> {
    spec.validate()?;
    let window = *seq.window();
    let (s, p) = spec.target();
    let space = |s: f64, p: f64| -> Result<Space> {
        Space::new(SpaceParams::b(s, p, f64::INFINITY, Weight::one())?, &window, DEFAULT_QUAD_TOL)
    };
    let target = space(s, p)?;
    let norm0 = space(spec.s0, spec.p0)?.norm(seq)?;
    let norm1 = space(spec.s1, spec.p1)?.norm(seq)?;
    let norm_target = target.norm(seq)?;
    let profile = ring_convergence_profile_in(seq, &target, ms)?;
    let witnessed = norm0.is_finite()
        && norm1.is_finite()
        && !profile.is_empty()
        && profile.iter().all(|v| *v >= NON_CONVERGENCE_FLOOR);
    let conclusion = if witnessed {
        "strict inclusion witnessed"
    } else {
        "no gap witnessed"
    };
    Ok(GapReport {
        spec: *spec,
        window,
        norm_target,
        norm0,
        norm1,
        ms: ms.to_vec(),
        profile,
        witnessed,
        conclusion: conclusion.into(),
    })
}

pub fn gap_report(spec: &GapSpec, window: &Window, ms: &[u32]) -> Result<GapReport> {
    gap_report_for(&gap_sequence(spec, window)?, spec, ms)
}

/// The three spaces `f^{s0}_{p0,inf} -> f^s_{p,1} -> f^{s1}_{p1,inf}` on one window.
#[derive(Debug, Clone)]
pub struct EmbeddingChain {
    pub outer0: Space,
    pub middle: Space,
    pub outer1: Space,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EmbeddingRatios {
    pub c01: f64,
    pub c12: f64,
}

impl EmbeddingChain {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        s0: f64,
        p0: f64,
        s1: f64,
        p1: f64,
        theta: f64,
        w: &Weight,
        window: &Window,
        tol: f64,
    ) -> Result<Self> {
        check_theta(theta)?;
        let d = window.dim as f64;
        let ok = if p0 == p1 {
            s0 > s1
        } else {
            p0 < p1 && p1.is_finite() && s0 - d / p0 >= s1 - d / p1 - 1e-12
        };
        if !ok {
            return Err(Error::Precondition(format!(
                "embedding needs p0 = p1 with s0 > s1, or p0 < p1 < inf with s0 - d/p0 >= s1 - d/p1 \
                 (got s0={s0} p0={p0} s1={s1} p1={p1})"
            )));
        }
        let s = (1.0 - theta) * s0 + theta * s1;
        let p = interpolate_exponent(p0, p1, theta);
        let inf = f64::INFINITY;
        Ok(Self {
            outer0: Space::new(SpaceParams::f(s0, p0, inf, w.clone())?, window, tol)?,
            middle: Space::new(SpaceParams::f(s, p, 1.0, w.clone())?, window, tol)?,
            outer1: Space::new(SpaceParams::f(s1, p1, inf, w.clone())?, window, tol)?,
        })
    }

    /// `None` for the zero sequence.
    pub fn check(&self, seq: &Sequence) -> Result<Option<EmbeddingRatios>> {
        if seq.is_empty() {
            return Ok(None);
        }
        let n0 = self.outer0.norm(seq)?;
        let nm = self.middle.norm(seq)?;
        let n1 = self.outer1.norm(seq)?;
        Ok(Some(EmbeddingRatios {
            c01: nm / n0,
            c12: n1 / nm,
        }))
    }
}

#[allow(clippy::too_many_arguments)]
pub fn embedding_chain_check(
    seq: &Sequence,
    s0: f64,
    p0: f64,
    s1: f64,
    p1: f64,
    theta: f64,
    w: &Weight,
) -> Result<Option<EmbeddingRatios>> {
    EmbeddingChain::new(s0, p0, s1, p1, theta, w, seq.window(), DEFAULT_QUAD_TOL)?.check(seq)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_cardinalities() {
        let spec = GapSpec::canonical();
        for j in 0..12 {
            assert_eq!(spec.cardinality(j).unwrap(), 1u64 << j);
            assert_eq!(spec.log2_value(j), 0.0);
        }
        let two = GapSpec { d: 2, ..spec };
        assert_eq!(two.cardinality(3).unwrap(), 64);
    }

    #[test]
    fn non_integral_cardinality_rounds_up() {
        let spec = GapSpec {
            d: 1,
            s0: 0.25,
            s1: 0.0,
            p0: 1.0,
            p1: 2.0,
            theta: 0.5,
        };
        spec.validate().unwrap();
        // log2 #K_j = j/2
        assert_eq!(spec.cardinality(1).unwrap(), 2);
        assert_eq!(spec.cardinality(3).unwrap(), 3);
        assert_eq!(spec.cardinality(4).unwrap(), 4);
    }

    #[test]
    fn canonical_gap_sequence() {
        let w = Window::new(1, 6, 1).unwrap();
        let seq = gap_sequence(&GapSpec::canonical(), &w).unwrap();
        assert_eq!(seq.len(), 127);
        assert_eq!(seq.get(&DyadicIndex::new(6, vec![63])).re, 1.0);
        assert_eq!(seq.get(&DyadicIndex::new(6, vec![-1])).re, 0.0);
        let ms: Vec<u32> = (0..6).collect();
        let rep = gap_report(&GapSpec::canonical(), &w, &ms).unwrap();
        for v in [rep.norm0, rep.norm1, rep.norm_target] {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!(rep.profile.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(rep.witnessed);
        assert_eq!(rep.conclusion, "strict inclusion witnessed");
        assert!(rep.records().iter().all(|r| r.pass));
    }

    #[test]
    fn finite_control_and_refusals() {
        let w = Window::new(1, 6, 1).unwrap();
        let seq = Sequence::from_entries(w, [(DyadicIndex::new(1, vec![1]), 1.0)]).unwrap();
        let rep = gap_report_for(&seq, &GapSpec::canonical(), &(0..6).collect::<Vec<_>>()).unwrap();
        assert!(!rep.witnessed);
        assert_eq!(*rep.profile.last().unwrap(), 0.0);
        let bad = GapSpec {
            s0: 1.0,
            ..GapSpec::canonical()
        };
        assert!(matches!(gap_sequence(&bad, &w), Err(Error::Precondition(_))));
        let big = GapSpec {
            s1: 0.5,
            ..GapSpec::canonical()
        };
        assert!(matches!(gap_sequence(&big, &w), Err(Error::WindowTooSmall(_))));
    }

    #[test]
    fn embedding_single_entry() {
        let w = Window::new(1, 2, 1).unwrap();
        let seq = Sequence::from_entries(w, [(DyadicIndex::new(0, vec![0]), 2.0)]).unwrap();
        // one unit cube: every norm is |lambda| = 2
        let r = embedding_chain_check(&seq, 1.0, 1.0, 0.0, 2.0, 0.5, &Weight::one())
            .unwrap()
            .unwrap();
        assert!((r.c01 - 1.0).abs() < 1e-14 && (r.c12 - 1.0).abs() < 1e-14);
        let zero = Sequence::new(w);
        assert!(embedding_chain_check(&zero, 1.0, 1.0, 0.0, 2.0, 0.5, &Weight::one())
            .unwrap()
            .is_none());
        assert!(embedding_chain_check(&seq, 0.0, 1.0, 0.0, 2.0, 0.5, &Weight::one()).is_err());
        assert!(embedding_chain_check(&seq, 0.0, 2.0, 0.5, 2.0, 0.5, &Weight::one()).is_err());
    }
}
