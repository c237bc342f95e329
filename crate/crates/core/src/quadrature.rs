//! Box quadrature for weights of the form
//! `c * |x|^a * |x_1|^b * exp(r |x|) * prod_i rho_i(x)^{e_i}`
//! where each `rho_i` is piecewise constant on a dyadic grid.
//!
//! Boxes are split along grid lines and coordinate hyperplanes first, so every
//! piece sees a smooth integrand except possibly at its own boundary. Pieces
//! with the origin as a vertex use a self-similar halving scheme; pieces
//! touching `x_1 = 0` use the substitution `x_1 = h v^{1/(b+1)}`.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const GAUSS_POINTS: usize = 8;
const MAX_DEPTH: u32 = 48;
const MAX_CORNER_STEPS: u32 = 200;

fn gauss_legendre() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GAUSS_POINTS;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let k = k as f64;
                    let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // map [-1,1] to [0,1]
            out.push((0.5 * (x + 1.0), 0.5 * w));
        }
        out
    })
}

/// Piecewise-constant factor sampled on the finest grid of a window.
pub(crate) trait GridFactor: Send + Sync {
    fn finest_level(&self) -> u32;
    fn half_extent(&self) -> u32;
    fn density_at(&self, x: &[f64]) -> Option<f64>;
}

pub(crate) struct Integrand<'a> {
    pub dim: usize,
    pub scale: f64,
    pub radial: f64,
    pub first: f64,
    pub exp_rate: f64,
    pub grids: Vec<(&'a dyn GridFactor, f64)>,
}

impl Integrand<'_> {
    fn analytic(&self, x: &[f64], with_first: bool) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let r = r2.sqrt();
        let mut v = 1.0;
        if self.radial != 0.0 {
            v *= r.powf(self.radial);
        }
        if with_first && self.first != 0.0 {
            v *= x[0].abs().powf(self.first);
        }
        if self.exp_rate != 0.0 {
            v *= (self.exp_rate * r).exp();
        }
        v
    }

    fn grid_constant(&self, lo: &[f64], hi: &[f64]) -> Result<f64> {
        let mid: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let mut c = self.scale;
        for (g, e) in &self.grids {
            let rho = g.density_at(&mid).ok_or_else(|| {
                Error::OutsideWindow(format!("point {mid:?} outside cell-measure window"))
            })?;
            if rho == 0.0 && *e < 0.0 {
                return Err(Error::Divergent(
                    "negative power of a zero cell density".into(),
                ));
            }
            c *= rho.powf(*e);
        }
        Ok(c)
    }

    fn is_flat(&self) -> bool {
        self.radial == 0.0 && self.first == 0.0 && self.exp_rate == 0.0
    }
}

/// Integral of the weight over the box `[lo, hi)`.
pub(crate) fn integrate(f: &Integrand<'_>, lo: &[f64], hi: &[f64], tol: f64) -> Result<f64> {
    if lo.len() != f.dim || hi.len() != f.dim {
        return Err(Error::DimensionMismatch {
            expected: f.dim,
            found: lo.len(),
        });
    }
    let mut f = Integrand {
        dim: f.dim,
        scale: f.scale,
        radial: f.radial,
        first: f.first,
        exp_rate: f.exp_rate,
        grids: f.grids.clone(),
    };
    if f.dim == 1 {
        f.radial += f.first;
        f.first = 0.0;
    }
    let mut pieces = vec![(lo.to_vec(), hi.to_vec())];
    for (g, _) in &f.grids {
        let ext = g.half_extent() as f64;
        for (a, b) in lo.iter().zip(hi) {
            if *a < -ext || *b > ext {
                return Err(Error::OutsideWindow(format!(
                    "box [{lo:?}, {hi:?}) leaves the cell-measure window [-{ext},{ext})"
                )));
            }
        }
        let step = (-(g.finest_level() as f64)).exp2();
        pieces = pieces
            .into_iter()
            .flat_map(|(l, h)| split_grid(&l, &h, step))
            .collect();
    }
    if !f.is_flat() {
        pieces = pieces
            .into_iter()
            .flat_map(|(l, h)| split_grid(&l, &h, f64::INFINITY))
            .collect();
    }
    let mut total = 0.0;
    for (l, h) in pieces {
        total += piece(&f, &l, &h, tol)?;
    }
    Ok(total)
}

/// Split a box along multiples of `step` (and always along 0 when `step` is infinite).
fn split_grid(lo: &[f64], hi: &[f64], step: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut out = vec![(lo.to_vec(), hi.to_vec())];
    for axis in 0..lo.len() {
        let mut next = Vec::new();
        for (l, h) in out {
            let cuts: Vec<f64> = if step.is_infinite() {
                if l[axis] < 0.0 && h[axis] > 0.0 {
                    vec![0.0]
                } else {
                    Vec::new()
                }
            } else {
                let first = (l[axis] / step).floor() + 1.0;
                let last = (h[axis] / step).ceil() - 1.0;
                let mut v = Vec::new();
                let mut c = first;
                while c <= last {
                    v.push(c * step);
                    c += 1.0;
                }
                v
            };
            let mut a = l[axis];
            for c in cuts.into_iter().chain(std::iter::once(h[axis])) {
                let mut nl = l.clone();
                let mut nh = h.clone();
                nl[axis] = a;
                nh[axis] = c;
                next.push((nl, nh));
                a = c;
            }
        }
        out = next;
    }
    out
}

fn volume(lo: &[f64], hi: &[f64]) -> f64 {
    lo.iter().zip(hi).map(|(a, b)| b - a).product()
}

/// `int_lo^hi |t|^g dt` for an interval not straddling 0.
pub(crate) fn power_interval(lo: f64, hi: f64, g: f64) -> Result<f64> {
    let (a, b) = if hi <= 0.0 { (-hi, -lo) } else { (lo, hi) };
    if a == 0.0 {
        if g <= -1.0 {
            return Err(Error::Divergent(format!(
                "|t|^{g} is not integrable at 0"
            )));
        }
        return Ok(b.powf(g + 1.0) / (g + 1.0));
    }
    let e = g + 1.0;
    if e == 0.0 {
        return Ok((b / a).ln());
    }
    // a^e * expm1(e ln(b/a)) / e keeps precision on thin intervals
    Ok(a.powf(e) * (e * ((b - a) / a).ln_1p()).exp_m1() / e)
}

fn touches_zero(lo: f64, hi: f64) -> bool {
    lo == 0.0 || hi == 0.0
}

fn piece(f: &Integrand<'_>, lo: &[f64], hi: &[f64], tol: f64) -> Result<f64> {
    let c = f.grid_constant(lo, hi)?;
    if c == 0.0 {
        return Ok(0.0);
    }
    if !c.is_finite() {
        return Err(Error::Divergent("infinite cell density factor".into()));
    }
    if f.is_flat() {
        return Ok(c * volume(lo, hi));
    }
    let d = f.dim;
    if f.exp_rate == 0.0 && f.radial == 0.0 {
        // separable |x_1|^b
        let rest: f64 = lo[1..].iter().zip(&hi[1..]).map(|(a, b)| b - a).product();
        return Ok(c * rest * power_interval(lo[0], hi[0], f.first)?);
    }
    if d == 1 && f.exp_rate == 0.0 {
        return Ok(c * power_interval(lo[0], hi[0], f.radial)?);
    }
    let at_origin = lo.iter().zip(hi).all(|(a, b)| touches_zero(*a, *b));
    let singular = f.radial != 0.0 || f.first != 0.0;
    let v = if at_origin && singular {
        corner(f, lo, hi, tol)?
    } else {
        if f.first <= -1.0 && touches_zero(lo[0], hi[0]) {
            return Err(Error::Divergent(format!(
                "|x_1|^{} is not integrable near x_1 = 0",
                f.first
            )));
        }
        let root = rule(f, lo, hi);
        adapt(f, lo, hi, tol, root.abs() * tol * 1e-3, 0)
    };
    let out = c * v;
    if !out.is_finite() {
        return Err(Error::Divergent("weight integral overflowed".into()));
    }
    Ok(out)
}

/// Tensor Gauss rule; applies the `x_1` substitution when the box touches `x_1 = 0`.
fn rule(f: &Integrand<'_>, lo: &[f64], hi: &[f64]) -> f64 {
    let gl = gauss_legendre();
    let d = lo.len();
    let sub = f.first != 0.0 && touches_zero(lo[0], hi[0]);
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut total = 0.0;
    let n = gl.len();
    let (h1, anchor, sign) = if hi[0] <= 0.0 {
        (hi[0] - lo[0], hi[0], -1.0)
    } else {
        (hi[0] - lo[0], lo[0], 1.0)
    };
    let c = 1.0 / (f.first + 1.0);
    loop {
        let mut w = 1.0;
        for i in 0..d {
            let (t, wt) = gl[idx[i]];
            if i == 0 && sub {
                x[0] = anchor + sign * h1 * t.powf(c);
                w *= wt;
            } else {
                x[i] = lo[i] + (hi[i] - lo[i]) * t;
                w *= wt * (hi[i] - lo[i]);
            }
        }
        let val = if sub {
            f.analytic(&x, false) * h1.powf(f.first + 1.0) * c
        } else {
            f.analytic(&x, true)
        };
        total += w * val;
        let mut k = 0;
        loop {
            if k == d {
                return total;
            }
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn children(lo: &[f64], hi: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let d = lo.len();
    (0..(1usize << d))
        .map(|mask| {
            let mut l = lo.to_vec();
            let mut h = hi.to_vec();
            for i in 0..d {
                let mid = 0.5 * (lo[i] + hi[i]);
                if (mask >> i) & 1 == 0 {
                    h[i] = mid;
                } else {
                    l[i] = mid;
                }
            }
            (l, h)
        })
        .collect()
}

fn adapt(f: &Integrand<'_>, lo: &[f64], hi: &[f64], tol: f64, floor: f64, depth: u32) -> f64 {
    let coarse = rule(f, lo, hi);
    let kids = children(lo, hi);
    let fine: Vec<f64> = kids.iter().map(|(l, h)| rule(f, l, h)).collect();
    let sum: f64 = fine.iter().sum();
    if !sum.is_finite() {
        return sum;
    }
    let err = (sum - coarse).abs();
    if err <= tol * sum.abs() || err <= floor || depth >= MAX_DEPTH {
        return sum;
    }
    let share = floor / kids.len() as f64;
    kids.iter()
        .map(|(l, h)| adapt(f, l, h, tol, share, depth + 1))
        .sum()
}

/// Box with the origin as a vertex: halve toward the origin, integrate the
/// rest regularly, and close with the homogeneous part once the exponential
/// factor is flat to tolerance on the remaining corner.
fn corner(f: &Integrand<'_>, lo: &[f64], hi: &[f64], tol: f64) -> Result<f64> {
    let d = f.dim as f64;
    let kappa = f.radial + f.first + d;
    if kappa <= 0.0 {
        return Err(Error::Divergent(format!(
            "|x|^{} |x_1|^{} is not integrable at the origin",
            f.radial, f.first
        )));
    }
    if f.first <= -1.0 {
        return Err(Error::Divergent(format!(
            "|x_1|^{} is not integrable near x_1 = 0",
            f.first
        )));
    }
    let homogeneous = Integrand {
        dim: f.dim,
        scale: 1.0,
        radial: f.radial,
        first: f.first,
        exp_rate: 0.0,
        grids: Vec::new(),
    };
    let ring = |g: &Integrand<'_>, l: &[f64], h: &[f64]| -> f64 {
        children(l, h)
            .into_iter()
            .filter(|(cl, ch)| !cl.iter().zip(ch).all(|(a, b)| touches_zero(*a, *b)))
            .map(|(cl, ch)| {
                let root = rule(g, &cl, &ch);
                adapt(g, &cl, &ch, tol, root.abs() * tol * 1e-3, 0)
            })
            .sum()
    };
    // homogeneous integral over the starting corner box via self-similarity
    let shrink = (-kappa).exp2();
    let h_root = ring(&homogeneous, lo, hi) / (1.0 - shrink);
    if f.exp_rate == 0.0 {
        return Ok(h_root);
    }
    let mut total = 0.0;
    let mut l = lo.to_vec();
    let mut h = hi.to_vec();
    let mut h_corner = h_root;
    for _ in 0..MAX_CORNER_STEPS {
        let diam: f64 = l
            .iter()
            .zip(&h)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt();
        let drift = (f.exp_rate.abs() * diam).exp_m1();
        if h_corner * drift <= tol * 1e-2 * (total + h_corner).abs() {
            // exp factor equals 1 at the origin
            return Ok(total + h_corner * (1.0 + 0.5 * drift * f.exp_rate.signum()));
        }
        total += ring(f, &l, &h);
        for i in 0..l.len() {
            l[i] *= 0.5;
            h[i] *= 0.5;
        }
        h_corner *= shrink;
    }
    Ok(total + h_corner)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain(dim: usize, radial: f64, first: f64, exp_rate: f64) -> Integrand<'static> {
        Integrand {
            dim,
            scale: 1.0,
            radial,
            first,
            exp_rate,
            grids: Vec::new(),
        }
    }

    #[test]
    fn gauss_rule_integrates_polynomials() {
        let gl = gauss_legendre();
        let w: f64 = gl.iter().map(|(_, w)| w).sum();
        assert!((w - 1.0).abs() < 1e-14);
        // degree 15 is exact for 8 points
        let m: f64 = gl.iter().map(|(x, w)| w * x.powi(15)).sum();
        assert!((m - 1.0 / 16.0).abs() < 1e-14);
    }

    #[test]
    fn power_interval_closed_forms() {
        assert!((power_interval(0.0, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((power_interval(-1.0, 0.0, 2.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((power_interval(1.0, 2.0, -1.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(matches!(
            power_interval(0.0, 1.0, -1.0),
            Err(Error::Divergent(_))
        ));
    }

    #[test]
    fn exponential_in_one_dimension() {
        let f = plain(1, 0.0, 0.0, 1.0);
        let v = integrate(&f, &[-1.0], &[2.0], 1e-12).unwrap();
        let exact = (1f64.exp() - 1.0) + (2f64.exp() - 1.0);
        assert!((v - exact).abs() < 1e-11 * exact);
    }

    #[test]
    fn power_times_exponential_one_dimension() {
        // int_0^1 x^{-1/2} e^x dx = sqrt(pi) erfi(1) = 2.9253034918143...
        let f = plain(1, -0.5, 0.0, 1.0);
        let v = integrate(&f, &[0.0], &[1.0], 1e-12).unwrap();
        assert!((v - 2.925_303_491_814_362).abs() < 1e-9, "{v}");
    }

    #[test]
    fn radial_power_in_two_dimensions() {
        // int over the unit disk quarter is not a box; use the full square [-1,1)^2
        // of |x|^{-1}: 8 * int_0^{pi/4} int_0^{sec t} dr dt = 8 asinh(1)
        let f = plain(2, -1.0, 0.0, 0.0);
        let v = integrate(&f, &[-1.0, -1.0], &[1.0, 1.0], 1e-12).unwrap();
        let exact = 8.0 * 1f64.asinh();
        assert!((v - exact).abs() < 1e-9 * exact, "{v} vs {exact}");
    }

    #[test]
    fn first_coordinate_power_two_dimensions_with_exp() {
        // |x_1|^{-1/2} e^{|x|} has no closed form; compare halves by symmetry
        let f = plain(2, 0.0, -0.5, 0.3);
        let a = integrate(&f, &[0.0, 0.0], &[1.0, 1.0], 1e-10).unwrap();
        let b = integrate(&f, &[-1.0, 0.0], &[0.0, 1.0], 1e-10).unwrap();
        assert!((a - b).abs() < 1e-9 * a);
        // bracket: e^0 * 2 <= a <= e^{0.3 sqrt 2} * 2
        assert!(a > 2.0 && a < 2.0 * (0.3 * 2f64.sqrt()).exp());
    }

    #[test]
    fn divergence_is_reported() {
        let f = plain(2, -2.5, 0.0, 0.0);
        assert!(matches!(
            integrate(&f, &[0.0, 0.0], &[1.0, 1.0], 1e-8),
            Err(Error::Divergent(_))
        ));
        let f = plain(1, -1.5, 0.0, 0.5);
        assert!(matches!(
            integrate(&f, &[-1.0], &[1.0], 1e-8),
            Err(Error::Divergent(_))
        ));
    }
}
