//! Calderón products of weighted sequence spaces: Hölder bounds, explicit
//! factorizations `|lambda| = |lambda^0|^{1-t} |lambda^1|^t`, and a brute-force
//! estimate of the product quasi-norm on small supports.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::dyadic::{DyadicIndex, LevelTable, Window};
use crate::error::{Error, Result};
use crate::maximal::{lp_norm, CellFunction};
use crate::seqspaces::{
    exponent_ratio, interpolate_exponent, interpolate_triple, stacks, Scale, Sequence, Space,
    SpaceParams, YTable,
};
use crate::weights::{check_theta, combine, combine_exponents, Weight};

/// Below this magnitude `gamma` is treated as zero.
pub const GAMMA_EPS: f64 = 1e-12;
pub const DEFAULT_SUPPORT_CAP: usize = 8;
pub const DEFAULT_ORACLE_TOL: f64 = 1e-6;
pub const DEFAULT_ORACLE_STARTS: usize = 8;

fn inv(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        1.0 / x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CoupleKind {
    Weighted,
    YProduct,
}

/// Two spaces, a parameter `theta` and the interpolated target space, all on one window.
#[derive(Debug, Clone)]
pub struct Couple {
    pub theta: f64,
    pub space0: Space,
    pub space1: Space,
    pub target: Space,
    kind: CoupleKind,
}

impl Couple {
    /// Target weight `w0^{(1-t)p/p0} w1^{t p/p1}`.
    pub fn new(p0: &SpaceParams, p1: &SpaceParams, theta: f64, window: &Window, tol: f64) -> Result<Self> {
        check_theta(theta)?;
        if p0.scale != p1.scale {
            return Err(Error::ScaleMismatch("couple mixes F and B scales".into()));
        }
        let t = interpolate_triple((p0.s, p0.p, p0.q), (p1.s, p1.p, p1.q), theta);
        let w = combine(&p0.weight, &p1.weight, theta, p0.p, p1.p)?;
        let target = SpaceParams::new(t.s, t.p, t.q, p0.scale, w)?;
        Ok(Self {
            theta,
            space0: Space::new(p0.clone(), window, tol)?,
            space1: Space::new(p1.clone(), window, tol)?,
            target: Space::new(target, window, tol)?,
            kind: CoupleKind::Weighted,
        })
    }

    /// `b(s-y)` couple with target `y = y0^{(1-t)p/p0} y1^{t p/p1}`.
    pub fn from_y(
        t0: (f64, f64, f64),
        t1: (f64, f64, f64),
        theta: f64,
        y0: &YTable,
        y1: &YTable,
    ) -> Result<Self> {
        check_theta(theta)?;
        if y0.window() != y1.window() {
            return Err(Error::InvalidParameter("y tables live on different windows".into()));
        }
        let t = interpolate_triple(t0, t1, theta);
        let (a, b) = combine_exponents(theta, t0.1, t1.1);
        let y = YTable::new(y0.table().zip_with(y1.table(), |u, v| u.powf(a) * v.powf(b))?)?;
        Ok(Self {
            theta,
            space0: Space::from_y(t0.0, t0.1, t0.2, y0)?,
            space1: Space::from_y(t1.0, t1.1, t1.2, y1)?,
            target: Space::from_y(t.s, t.p, t.q, &y)?,
            kind: CoupleKind::YProduct,
        })
    }

    /// `b(s-y)` couple whose `y` tables are the cell masses of the weights.
    pub fn y_from_weights(p0: &SpaceParams, p1: &SpaceParams, theta: f64, window: &Window, tol: f64) -> Result<Self> {
        let y0 = YTable::from_weight(&p0.weight, window, tol)?;
        let y1 = YTable::from_weight(&p1.weight, window, tol)?;
        Self::from_y((p0.s, p0.p, p0.q), (p1.s, p1.p, p1.q), theta, &y0, &y1)
    }

    pub fn window(&self) -> &Window {
        self.target.window()
    }

    pub fn scale(&self) -> Scale {
        self.target.params.scale
    }

    fn triple(space: &Space) -> (f64, f64, f64) {
        (space.params.s, space.params.p, space.params.q)
    }

    fn check_window(&self, seq: &Sequence) -> Result<()> {
        if seq.window() != self.window() {
            return Err(Error::InvalidParameter(format!(
                "sequence on {} but couple on {}",
                seq.window(),
                self.window()
            )));
        }
        Ok(())
    }

    /// `product = |lambda0|^{1-t} |lambda1|^t` and the Hölder comparison.
    pub fn holder(&self, lambda0: &Sequence, lambda1: &Sequence, tol: f64) -> Result<HolderCheck> {
        self.check_window(lambda0)?;
        self.check_window(lambda1)?;
        let t = self.theta;
        let a0 = lambda0.abs_table();
        let a1 = lambda1.abs_table();
        let prod = a0.zip_with(&a1, |u, v| {
            if u == 0.0 || v == 0.0 {
                0.0
            } else {
                u.powf(1.0 - t) * v.powf(t)
            }
        })?;
        let lhs = self.target.norm_abs(&prod);
        let n0 = self.space0.norm_abs(&a0);
        let n1 = self.space1.norm_abs(&a1);
        let rhs = n0.powf(1.0 - t) * n1.powf(t);
        Ok(HolderCheck {
            product: Sequence::from_table(&prod),
            lhs_norm: lhs,
            rhs,
            ok: lhs <= rhs * (1.0 + tol),
        })
    }

    fn finish(&self, lambda: &Sequence, l0: LevelTable, l1: LevelTable, level_sets: Option<LevelSets>, uncaptured: Vec<DyadicIndex>) -> Factorization {
        let lambda0 = Sequence::from_table(&l0);
        let lambda1 = Sequence::from_table(&l1);
        let mut f = Factorization {
            lambda: lambda.clone(),
            lambda0,
            lambda1,
            theta: self.theta,
            space0: self.space0.clone(),
            space1: self.space1.clone(),
            target: self.target.clone(),
            metrics: Metrics::default(),
            level_sets,
            uncaptured,
        };
        f.metrics = f.compute_metrics();
        f
    }

    /// Factorization along the level sets `A_l` and classes `C_l` (f-scale only).
    pub fn f_factorize(&self, lambda: &Sequence) -> Result<Factorization> {
        if self.scale() != Scale::F {
            return Err(Error::ScaleMismatch("f_factorize needs F-scale spaces".into()));
        }
        self.check_window(lambda)?;
        let abs = lambda.abs_table();
        let (l0, l1, ls) = f_factorize_abs(&abs, &self.space0, &self.space1, &self.target, self.theta)?;
        let uncaptured = match &ls {
            Some(ls) => lambda
                .support()
                .into_iter()
                .filter(|idx| ls.class_of(idx).is_none())
                .collect(),
            None => Vec::new(),
        };
        Ok(self.finish(lambda, l0, l1, ls, uncaptured))
    }

    /// Closed-form optimal factorization for `b(s-y)` couples.
    pub fn b_factorize(&self, lambda: &Sequence) -> Result<Factorization> {
        if self.kind != CoupleKind::YProduct {
            return Err(Error::InvalidParameter(
                "b_factorize needs a y-table couple (see Couple::from_y)".into(),
            ));
        }
        self.check_window(lambda)?;
        let abs = lambda.abs_table();
        let (l0, l1) = b_factorize_abs(
            &abs,
            Self::triple(&self.space0),
            Self::triple(&self.space1),
            self.theta,
            self.space0.masses(),
            self.space1.masses(),
            self.target.masses(),
        );
        Ok(self.finish(lambda, l0, l1, None, Vec::new()))
    }

    /// Minimizes `||lambda0||^{1-t} ||lambda1||^t` over exact factorizations on the support.
    pub fn oracle(&self, lambda: &Sequence, opts: &OracleOptions) -> Result<OracleResult> {
        self.check_window(lambda)?;
        oracle_impl(self, lambda, opts)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HolderCheck {
    #[serde(skip)]
    pub product: Sequence,
    pub lhs_norm: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// Checks `||product||_P <= ||lambda0||^{1-t} ||lambda1||^t` for explicit spaces.
pub fn holder_product_bound(
    lambda0: &Sequence,
    lambda1: &Sequence,
    theta: f64,
    p0: &SpaceParams,
    p1: &SpaceParams,
    p: &SpaceParams,
    tol: f64,
) -> Result<HolderCheck> {
    let t = interpolate_triple((p0.s, p0.p, p0.q), (p1.s, p1.p, p1.q), theta);
    let close = |a: f64, b: f64| (a.is_infinite() && b.is_infinite()) || (a - b).abs() <= 1e-12 * a.abs().max(1.0);
    if !(close(t.s, p.s) && close(t.p, p.p) && close(t.q, p.q)) || p.scale != p0.scale {
        return Err(Error::InvalidParameter(format!(
            "target {p} does not match the interpolated parameters"
        )));
    }
    let window = lambda0.window();
    let couple = Couple {
        theta,
        space0: Space::new(p0.clone(), window, crate::weights::DEFAULT_QUAD_TOL)?,
        space1: Space::new(p1.clone(), window, crate::weights::DEFAULT_QUAD_TOL)?,
        target: Space::new(p.clone(), window, crate::weights::DEFAULT_QUAD_TOL)?,
        kind: CoupleKind::Weighted,
    };
    couple.holder(lambda0, lambda1, tol)
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Metrics {
    pub recon_err: f64,
    pub norm0: f64,
    pub norm1: f64,
    pub norm_target: f64,
    pub achieved_constant: f64,
}

#[derive(Debug, Clone)]
pub struct Factorization {
    pub lambda: Sequence,
    pub lambda0: Sequence,
    pub lambda1: Sequence,
    pub theta: f64,
    pub space0: Space,
    pub space1: Space,
    pub target: Space,
    pub metrics: Metrics,
    pub level_sets: Option<LevelSets>,
    /// Support indices outside every `C_l`.
    pub uncaptured: Vec<DyadicIndex>,
}

/// Largest relative deviation of `|a0|^{1-t} |a1|^t` from `|lambda|`.
fn reconstruction_error(lambda: &LevelTable, a0: &LevelTable, a1: &LevelTable, t: f64) -> f64 {
    let w = *lambda.window();
    let mut err: f64 = 0.0;
    for j in 0..=w.finest_level {
        for ((l, u), v) in lambda.level(j).iter().zip(a0.level(j)).zip(a1.level(j)) {
            let prod = if *u == 0.0 || *v == 0.0 {
                0.0
            } else {
                u.powf(1.0 - t) * v.powf(t)
            };
            let e = if *l == 0.0 {
                if prod == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (prod - l).abs() / l
            };
            err = err.max(e);
        }
    }
    err
}

fn ratio_constant(n0: f64, n1: f64, t: f64, target: f64) -> f64 {
    let num = n0.powf(1.0 - t) * n1.powf(t);
    if target == 0.0 {
        if num == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        num / target
    }
}

impl Factorization {
    fn compute_metrics(&self) -> Metrics {
        let l = self.lambda.abs_table();
        let a0 = self.lambda0.abs_table();
        let a1 = self.lambda1.abs_table();
        let norm0 = self.space0.norm_abs(&a0);
        let norm1 = self.space1.norm_abs(&a1);
        let norm_target = self.target.norm_abs(&l);
        Metrics {
            recon_err: reconstruction_error(&l, &a0, &a1, self.theta),
            norm0,
            norm1,
            norm_target,
            achieved_constant: ratio_constant(norm0, norm1, self.theta, norm_target),
        }
    }

    /// Structured record; exponents equal to infinity are written as `"inf"`.
    pub fn to_json(&self) -> Value {
        let num = |v: f64| -> Value {
            if v.is_finite() {
                json!(v)
            } else if v.is_nan() {
                json!("nan")
            } else if v > 0.0 {
                json!("inf")
            } else {
                json!("-inf")
            }
        };
        let seq = |s: &Sequence| -> Value {
            Value::Array(
                s.iter()
                    .map(|(idx, v)| json!({"j": idx.level, "k": idx.pos, "re": v.re, "im": v.im}))
                    .collect(),
            )
        };
        let (s0, s1) = (&self.space0.params, &self.space1.params);
        json!({
            "theta": self.theta,
            "p0": num(s0.p), "q0": num(s0.q), "s0": num(s0.s),
            "p1": num(s1.p), "q1": num(s1.q), "s1": num(s1.s),
            "norm0": num(self.metrics.norm0),
            "norm1": num(self.metrics.norm1),
            "norm_target": num(self.metrics.norm_target),
            "achieved_constant": num(self.metrics.achieved_constant),
            "recon_err": num(self.metrics.recon_err),
            "scale": self.target.params.scale.to_string(),
            "window": self.lambda.window(),
            "lambda0": seq(&self.lambda0),
            "lambda1": seq(&self.lambda1),
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct VerifyReport {
    pub reconstruction_ok: bool,
    pub holder_ok: bool,
    pub recon_err: f64,
    pub achieved_constant: f64,
}

/// Recomputes the metrics of `f` from its sequences and spaces.
pub fn verify_factorization(f: &Factorization, tol: f64) -> VerifyReport {
    let m = f.compute_metrics();
    VerifyReport {
        reconstruction_ok: m.recon_err <= tol,
        holder_ok: m.achieved_constant >= 1.0 - tol,
        recon_err: m.recon_err,
        achieved_constant: m.achieved_constant,
    }
}

/// Which exponents are infinite in the f-factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FBranch {
    /// `q0, q1 < inf`
    Finite,
    /// `q1 < q0 = inf`
    FirstInfinite,
    /// `q0 < q1 = inf`
    SecondInfinite,
    /// `q0 = q1 = inf`
    BothInfinite,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FExponents {
    pub branch: FBranch,
    pub gamma: f64,
    pub delta: f64,
    pub u: f64,
    pub v: f64,
    /// `(s, p, q)` of the target.
    pub s: f64,
    pub p: f64,
    pub q: f64,
}

/// Exponents `gamma, delta, u, v` for `(s0,p0,q0)`, `(s1,p1,q1)`, `theta`.
pub fn f_exponents(t0: (f64, f64, f64), t1: (f64, f64, f64), theta: f64) -> FExponents {
    let (s0, p0, q0) = t0;
    let (s1, p1, q1) = t1;
    let t = interpolate_triple(t0, t1, theta);
    let (s, p, q) = (t.s, t.p, t.q);
    let branch = match (q0.is_infinite(), q1.is_infinite()) {
        (false, false) => FBranch::Finite,
        (true, false) => FBranch::FirstInfinite,
        (false, true) => FBranch::SecondInfinite,
        (true, true) => FBranch::BothInfinite,
    };
    let (gamma, delta, u, v) = match branch {
        FBranch::BothInfinite => (
            p / p0 - 1.0,
            p / p1 - 1.0,
            theta * (s1 - s0),
            (1.0 - theta) * (s0 - s1),
        ),
        _ => (
            p / p0 - exponent_ratio(q, q0),
            p / p1 - exponent_ratio(q, q1),
            q * theta * (s1 * inv(q0) - s0 * inv(q1)),
            q * (1.0 - theta) * (s0 * inv(q1) - s1 * inv(q0)),
        ),
    };
    FExponents {
        branch,
        gamma,
        delta,
        u,
        v,
        s,
        p,
        q,
    }
}

/// Super-level sets `A_l = {g > 2^l}` of `g = S (w/w0)^e` on finest cells, and
/// the classes `C_l` of every in-window cube.
#[derive(Debug, Clone)]
pub struct LevelSets {
    window: Window,
    log2_g: Vec<f64>,
    classes: Vec<Vec<Option<i64>>>,
    pub ell_min: i64,
    pub ell_max: i64,
}

impl LevelSets {
    fn build(window: Window, log2_g: Vec<f64>) -> Self {
        let finite = log2_g.iter().filter(|v| v.is_finite());
        let lo = finite.clone().fold(f64::INFINITY, |a, b| a.min(*b));
        let hi = finite.fold(f64::NEG_INFINITY, |a, b| a.max(*b));
        let (ell_min, ell_max) = if lo.is_finite() {
            (lo.floor() as i64 - 1, hi.ceil() as i64)
        } else {
            (0, -1)
        };
        let classes = (0..=window.finest_level)
            .map(|j| {
                let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); window.level_len(j)];
                for (m, g) in log2_g.iter().enumerate() {
                    buckets[window.ancestor_offset(m, j)].push(*g);
                }
                buckets
                    .into_iter()
                    .map(|mut b| {
                        // C_l membership holds iff the (n/2+1)-th largest value lies in (l, l+1]
                        let k = b.len() / 2;
                        let (_, t, _) = b.select_nth_unstable_by(k, |x, y| y.total_cmp(x));
                        if t.is_finite() {
                            Some(t.ceil() as i64 - 1)
                        } else {
                            None
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            window,
            log2_g,
            classes,
            ell_min,
            ell_max,
        }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    /// `log2 g` per finest cell (`-inf` where `g = 0`).
    pub fn log2_g(&self) -> &[f64] {
        &self.log2_g
    }

    pub fn in_a(&self, cell: usize, ell: i64) -> bool {
        self.log2_g[cell] > ell as f64
    }

    /// Finest offsets in `A_l`.
    pub fn a_set(&self, ell: i64) -> Vec<usize> {
        (0..self.log2_g.len()).filter(|m| self.in_a(*m, ell)).collect()
    }

    /// Number of finest cells of `idx` inside `A_l`.
    pub fn count_in_a(&self, idx: &DyadicIndex, ell: i64) -> Result<usize> {
        Ok(self
            .window
            .finest_offsets(idx)?
            .into_iter()
            .filter(|m| self.in_a(*m, ell))
            .count())
    }

    pub fn class_of(&self, idx: &DyadicIndex) -> Option<i64> {
        if !self.window.contains(idx) {
            return None;
        }
        self.classes[idx.level as usize][self.window.offset(idx)]
    }

    pub fn c_set(&self, ell: i64) -> Vec<DyadicIndex> {
        let mut out = Vec::new();
        for (j, level) in self.classes.iter().enumerate() {
            for (o, c) in level.iter().enumerate() {
                if *c == Some(ell) {
                    out.push(self.window.index_at(j as u32, o));
                }
            }
        }
        out
    }
}

/// Level sets for target stack `S` and ratio `w/w0` of finest-cell masses raised to `exponent`.
pub fn build_level_sets(lambda: &Sequence, target: &Space, base: &Space, exponent: f64) -> Result<LevelSets> {
    if target.params.scale != Scale::F || base.window() != target.window() {
        return Err(Error::InvalidParameter("level sets need F-scale spaces on one window".into()));
    }
    if lambda.window() != target.window() {
        return Err(Error::InvalidParameter("sequence and space windows differ".into()));
    }
    Ok(level_sets_abs(&lambda.abs_table(), target, base, exponent))
}

fn level_sets_abs(abs: &LevelTable, target: &Space, base: &Space, exponent: f64) -> LevelSets {
    let st = stacks(abs, target.params.s, target.params.q);
    let mw = target.masses().expect("finite p").finest();
    let m0 = base.masses().expect("finite p").finest();
    let log2_g = st
        .iter()
        .zip(mw.iter().zip(m0))
        .map(|(s, (a, b))| {
            if *s == 0.0 {
                f64::NEG_INFINITY
            } else {
                s.log2() + exponent * (a.log2() - b.log2())
            }
        })
        .collect();
    LevelSets::build(*abs.window(), log2_g)
}

fn same_masses(a: &Space, b: &Space) -> bool {
    match (a.masses(), b.masses()) {
        (Some(x), Some(y)) => x
            .finest()
            .iter()
            .zip(y.finest())
            .all(|(u, v)| (u - v).abs() <= 1e-12 * u.abs().max(v.abs())),
        _ => false,
    }
}

type FTables = (LevelTable, LevelTable, Option<LevelSets>);

fn f_factorize_abs(abs: &LevelTable, s0: &Space, s1: &Space, target: &Space, theta: f64) -> Result<FTables> {
    let t0 = (s0.params.s, s0.params.p, s0.params.q);
    let t1 = (s1.params.s, s1.params.p, s1.params.q);
    let e = f_exponents(t0, t1, theta);
    let swap = match e.branch {
        FBranch::SecondInfinite => true,
        FBranch::FirstInfinite => false,
        FBranch::Finite | FBranch::BothInfinite => e.gamma < -GAMMA_EPS,
    };
    if swap {
        let (b, a, ls) = f_factorize_abs(abs, s1, s0, target, 1.0 - theta)?;
        return Ok((a, b, ls));
    }
    let w = *abs.window();
    let r0 = exponent_ratio(e.q, t0.2);
    let r1 = exponent_ratio(e.q, t1.2);
    let mut l0 = abs.map(|_| 0.0);
    let mut l1 = abs.map(|_| 0.0);
    let mut fill = |class: &dyn Fn(u32, usize) -> Option<i64>| {
        let mut levels0 = Vec::with_capacity(w.finest_level as usize + 1);
        let mut levels1 = Vec::with_capacity(w.finest_level as usize + 1);
        for j in 0..=w.finest_level {
            let mut v0 = vec![0.0; w.level_len(j)];
            let mut v1 = vec![0.0; w.level_len(j)];
            for (o, a) in abs.level(j).iter().enumerate() {
                if *a == 0.0 {
                    continue;
                }
                let Some(ell) = class(j, o) else { continue };
                let la = a.log2();
                let (ell, jf) = (ell as f64, j as f64);
                v0[o] = (ell * e.gamma + jf * e.u + r0 * la).exp2();
                v1[o] = (ell * e.delta + jf * e.v + r1 * la).exp2();
            }
            levels0.push(v0);
            levels1.push(v1);
        }
        l0 = LevelTable::from_levels(w, levels0).expect("shape");
        l1 = LevelTable::from_levels(w, levels1).expect("shape");
    };
    if e.gamma.abs() <= GAMMA_EPS {
        if !same_masses(s0, s1) {
            return Err(Error::DegenerateSingular(format!(
                "gamma = 0 (p/p0 = q/q0 = {}) with different weights; use the oracle",
                e.p / t0.1
            )));
        }
        fill(&|_, _| Some(0));
        return Ok((l0, l1, None));
    }
    let exponent = 1.0 / (t0.1 * e.gamma);
    let ls = level_sets_abs(abs, target, s0, exponent);
    fill(&|j, o| ls.classes[j as usize][o]);
    Ok((l0, l1, Some(ls)))
}

/// Factorizes `lambda` in `f^s_{p,q}(w)` for the couple `(P0, P1)`.
pub fn f_factorize(lambda: &Sequence, p0: &SpaceParams, p1: &SpaceParams, theta: f64, tol: f64) -> Result<Factorization> {
    Couple::new(p0, p1, theta, lambda.window(), tol)?.f_factorize(lambda)
}

fn b_factorize_abs(
    abs: &LevelTable,
    t0: (f64, f64, f64),
    t1: (f64, f64, f64),
    theta: f64,
    y0: Option<&LevelTable>,
    y1: Option<&LevelTable>,
    y: Option<&LevelTable>,
) -> (LevelTable, LevelTable) {
    let w = *abs.window();
    let t = interpolate_triple(t0, t1, theta);
    let (s, p, q) = (t.s, t.p, t.q);
    let side = |ti: (f64, f64, f64), yi: Option<&LevelTable>| {
        let (si, pi, qi) = ti;
        let rp = exponent_ratio(p, pi);
        let rq = exponent_ratio(q, qi);
        let ip = inv(pi);
        let levels = (0..=w.finest_level)
            .map(|j| {
                let jf = j as f64;
                let level = abs.level(j);
                let f = (jf * s).exp2();
                let m = if p.is_infinite() {
                    level.iter().fold(0.0f64, |a, v| a.max(f * v))
                } else {
                    let yl = y.expect("finite p").level(j);
                    level
                        .iter()
                        .zip(yl)
                        .filter(|(v, _)| **v != 0.0)
                        .map(|(v, yy)| (f * v).powf(p) * yy)
                        .sum::<f64>()
                        .powf(1.0 / p)
                };
                let mut out = vec![0.0; level.len()];
                if m == 0.0 {
                    return out;
                }
                let lm = m.log2();
                for (o, a) in level.iter().enumerate() {
                    if *a == 0.0 {
                        continue;
                    }
                    let mut l = -jf * si + rp * (jf * s + a.log2()) + (rq - rp) * lm;
                    if ip != 0.0 {
                        let yv = y.expect("finite p").level(j)[o];
                        let yi = yi.expect("finite p_i").level(j)[o];
                        l += ip * (yv.log2() - yi.log2());
                    }
                    out[o] = l.exp2();
                }
                out
            })
            .collect();
        LevelTable::from_levels(w, levels).expect("shape")
    };
    (side(t0, y0), side(t1, y1))
}

/// Closed-form factorization in `b^s_{p,q}(s-y)`; attains constant 1.
#[allow(clippy::too_many_arguments)]
pub fn b_factorize(
    lambda: &Sequence,
    t0: (f64, f64, f64),
    t1: (f64, f64, f64),
    theta: f64,
    y0: &YTable,
    y1: &YTable,
) -> Result<Factorization> {
    Couple::from_y(t0, t1, theta, y0, y1)?.b_factorize(lambda)
}

/// Result of the exact L_p factorization.
#[derive(Debug, Clone, Serialize)]
pub struct LpFactorization {
    #[serde(skip)]
    pub f0: CellFunction,
    #[serde(skip)]
    pub f1: CellFunction,
    pub p: f64,
    pub norm0: f64,
    pub norm1: f64,
    pub norm_target: f64,
    pub recon_err: f64,
    /// `|norm0^{1-t} norm1^t / norm_target - 1|`.
    pub norm_rel_err: f64,
}

/// `f0 = f^{p/p0} (w/w0)^{1/p0}`, `f1 = f^{p/p1} (w/w1)^{1/p1}` with the
/// weights replaced by their finest-cell masses and `w = w0^{(1-t)p/p0} w1^{t p/p1}`.
pub fn lp_factorize(
    f: &CellFunction,
    w0: &Weight,
    w1: &Weight,
    theta: f64,
    p0: f64,
    p1: f64,
    tol: f64,
) -> Result<LpFactorization> {
    check_theta(theta)?;
    let window = f.window();
    let m0 = w0.mass_table(window, tol)?.finest().to_vec();
    let m1 = w1.mass_table(window, tol)?.finest().to_vec();
    let p = interpolate_exponent(p0, p1, theta);
    let (a, b) = combine_exponents(theta, p0, p1);
    let m: Vec<f64> = m0.iter().zip(&m1).map(|(u, v)| u.powf(a) * v.powf(b)).collect();
    let vals = f.values();
    let side = |pi: f64, mi: &[f64]| -> Vec<f64> {
        if pi.is_infinite() {
            if p.is_infinite() {
                return vals.to_vec();
            }
            return vec![1.0; vals.len()];
        }
        vals.iter()
            .zip(m.iter().zip(mi))
            .map(|(v, (mw, mm))| {
                if *v == 0.0 {
                    0.0
                } else {
                    v.powf(p / pi) * (mw / mm).powf(1.0 / pi)
                }
            })
            .collect()
    };
    let f0 = CellFunction::new(*window, side(p0, &m0))?;
    let f1 = CellFunction::new(*window, side(p1, &m1))?;
    let norm0 = lp_norm(f0.values(), &m0, p0);
    let norm1 = lp_norm(f1.values(), &m1, p1);
    let norm_target = lp_norm(vals, &m, p);
    let recon_err = vals
        .iter()
        .zip(f0.values().iter().zip(f1.values()))
        .map(|(v, (u0, u1))| {
            let r = u0.powf(1.0 - theta) * u1.powf(theta);
            if *v == 0.0 {
                r
            } else {
                (r - v).abs() / v
            }
        })
        .fold(0.0f64, f64::max);
    let c = ratio_constant(norm0, norm1, theta, norm_target);
    Ok(LpFactorization {
        f0,
        f1,
        p,
        norm0,
        norm1,
        norm_target,
        recon_err,
        norm_rel_err: (c - 1.0).abs(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleOptions {
    pub support_cap: usize,
    pub tol: f64,
    pub starts: usize,
    pub seed: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            support_cap: DEFAULT_SUPPORT_CAP,
            tol: DEFAULT_ORACLE_TOL,
            starts: DEFAULT_ORACLE_STARTS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    /// Smallest `||lambda0||^{1-t} ||lambda1||^t` found.
    pub value: f64,
    /// Optimal ratios `r = lambda0 / lambda1` per support index.
    pub ratios: Vec<(DyadicIndex, f64)>,
    pub evaluations: usize,
}

struct Objective<'a> {
    couple: &'a Couple,
    offsets: Vec<(usize, usize)>,
    mags: Vec<f64>,
    evals: std::cell::Cell<usize>,
}

impl Objective<'_> {
    /// `(1-t) ln||lambda0|| + t ln||lambda1||` at `x = ln r`.
    fn eval(&self, x: &[f64]) -> f64 {
        self.evals.set(self.evals.get() + 1);
        let t = self.couple.theta;
        let w = *self.couple.window();
        let mut l0: Vec<Vec<f64>> = (0..=w.finest_level).map(|j| vec![0.0; w.level_len(j)]).collect();
        let mut l1 = l0.clone();
        for ((j, o), (m, xi)) in self.offsets.iter().zip(self.mags.iter().zip(x)) {
            l0[*j][*o] = m * (t * xi).exp();
            l1[*j][*o] = m * (-(1.0 - t) * xi).exp();
        }
        let a0 = LevelTable::from_levels(w, l0).expect("shape");
        let a1 = LevelTable::from_levels(w, l1).expect("shape");
        (1.0 - t) * self.couple.space0.norm_abs(&a0).ln() + t * self.couple.space1.norm_abs(&a1).ln()
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Minimizes a convex `phi` along a line, starting from `phi(0) = f0`.
fn line_min(phi: &dyn Fn(f64) -> f64, f0: f64) -> (f64, f64) {
    const STEP: f64 = 0.5;
    const REACH: f64 = 64.0;
    let mut best = (0.0, f0);
    let fp = phi(STEP);
    let fm = phi(-STEP);
    let (lo, hi) = if fp < f0 || fm < f0 {
        let dir = if fp < f0 { 1.0 } else { -1.0 };
        let (mut x0, mut x1, mut f1): (f64, f64, f64) = (0.0, dir * STEP, if dir > 0.0 { fp } else { fm });
        best = (x1, f1);
        loop {
            let x2 = 2.0 * x1;
            let f2 = phi(x2);
            if f2 >= f1 || x2.abs() >= REACH {
                if f2 < f1 {
                    best = (x2, f2);
                }
                break (x0.min(x2), x0.max(x2));
            }
            x0 = x1;
            x1 = x2;
            f1 = f2;
            best = (x1, f1);
        }
    } else {
        (-STEP, STEP)
    };
    let (mut a, mut b) = (lo, hi);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = phi(c);
    let mut fd = phi(d);
    while b - a > 1e-12 * (1.0 + a.abs().max(b.abs())) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = phi(d);
        }
    }
    for (h, v) in [(c, fc), (d, fd)] {
        if v < best.1 {
            best = (h, v);
        }
    }
    best
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

/// Coordinate descent with a line search along each sweep's displacement; once
/// sweeps stall, directions `e_i +- e_j` are added to get past the kinks of sup-type norms.
fn descend(obj: &Objective<'_>, mut x: Vec<f64>, tol: f64) -> (Vec<f64>, f64) {
    let n = x.len();
    let mut fx = obj.eval(&x);
    let mut directions: Vec<Vec<f64>> = (0..n).map(|i| unit(n, i)).collect();
    let mut with_pairs = n < 2;
    let step = |x: &mut Vec<f64>, fx: &mut f64, dvec: &[f64]| {
        let phi = |h: f64| {
            let y: Vec<f64> = x.iter().zip(dvec).map(|(a, b)| a + h * b).collect();
            obj.eval(&y)
        };
        let (h, v) = line_min(&phi, *fx);
        if v < *fx {
            for (a, b) in x.iter_mut().zip(dvec) {
                *a += h * b;
            }
            *fx = v;
        }
    };
    for _ in 0..1000 {
        let start = fx;
        let x_start = x.clone();
        for dvec in &directions {
            step(&mut x, &mut fx, dvec);
        }
        // net displacement of the sweep follows ridges the fixed directions zigzag on
        let disp: Vec<f64> = x.iter().zip(&x_start).map(|(a, b)| a - b).collect();
        let len = disp.iter().map(|v| v * v).sum::<f64>().sqrt();
        if len > 0.0 {
            let dvec: Vec<f64> = disp.iter().map(|v| v / len).collect();
            step(&mut x, &mut fx, &dvec);
        }
        // fx is a logarithm, so this is the relative improvement of the value
        if start - fx < tol {
            if with_pairs {
                break;
            }
            with_pairs = true;
            for i in 0..n {
                for j in i + 1..n {
                    for sg in [1.0, -1.0] {
                        let mut e = unit(n, i);
                        e[j] = sg;
                        directions.push(e);
                    }
                }
            }
        }
    }
    (x, fx)
}

fn oracle_impl(couple: &Couple, lambda: &Sequence, opts: &OracleOptions) -> Result<OracleResult> {
    let support = lambda.support();
    if support.len() > opts.support_cap {
        return Err(Error::SupportCap {
            size: support.len(),
            cap: opts.support_cap,
        });
    }
    if support.is_empty() {
        return Ok(OracleResult {
            value: 0.0,
            ratios: Vec::new(),
            evaluations: 0,
        });
    }
    let w = *couple.window();
    let obj = Objective {
        couple,
        offsets: support.iter().map(|i| (i.level as usize, w.offset(i))).collect(),
        mags: support.iter().map(|i| lambda.get(i).norm()).collect(),
        evals: std::cell::Cell::new(0),
    };
    let n = support.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![vec![0.0; n]];
    for _ in 0..opts.starts {
        starts.push((0..n).map(|_| rng.gen_range(-4.0..=4.0)).collect());
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    for x0 in starts {
        let (x, fx) = descend(&obj, x0, opts.tol);
        if best.as_ref().is_none_or(|b| fx < b.1) {
            best = Some((x, fx));
        }
    }
    let (x, fx) = best.expect("at least one start");
    Ok(OracleResult {
        value: fx.exp(),
        ratios: support.into_iter().zip(x.iter().map(|v| v.exp())).collect(),
        evaluations: obj.evals.get(),
    })
}

/// Brute-force Calderón-product quasi-norm for `lambda` with small support.
pub fn oracle_calderon_norm(
    lambda: &Sequence,
    p0: &SpaceParams,
    p1: &SpaceParams,
    theta: f64,
    opts: &OracleOptions,
    quad_tol: f64,
) -> Result<OracleResult> {
    Couple::new(p0, p1, theta, lambda.window(), quad_tol)?.oracle(lambda, opts)
}

/// Runs the oracle over a batch in parallel; results keep the input order.
pub fn oracle_batch(couple: &Couple, batch: &[Sequence], opts: &OracleOptions) -> Vec<Result<OracleResult>> {
    batch
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let o = OracleOptions {
                seed: opts.seed.wrapping_add(i as u64),
                ..opts.clone()
            };
            couple.oracle(s, &o)
        })
        .collect()
}
