//! Weights, per-cell masses `w(Q_{j,k})`, Muckenhoupt estimates and the
//! product-comparability check for weight pairs.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::dyadic::{DyadicIndex, LevelTable, Window};
use crate::error::{Error, Result};
use crate::quadrature::{self, GridFactor, Integrand};
use crate::seqspaces::{exponent_ratio, interpolate_exponent};

/// Default relative tolerance for weight quadrature.
pub const DEFAULT_QUAD_TOL: f64 = 1e-8;
/// Estimates above this value are reported as diverging.
pub const DEFAULT_DIVERGENCE_CAP: f64 = 1e12;
/// Growth factor over the last three refinements that flags divergence.
pub const DIVERGENCE_GROWTH: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PowerAxis {
    /// `|x|^alpha`
    Radial,
    /// `|x_1|^alpha`
    FirstCoordinate,
}

/// Nonnegative weight on `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    Power { alpha: f64, axis: PowerAxis },
    /// `exp(rate * |x|)`
    Exponential { rate: f64 },
    Constant(f64),
    /// Pointwise product of powers of the factors.
    PowerProduct(Vec<(Weight, f64)>),
    /// Piecewise-constant weight given by its masses on the finest cells of a window.
    CellMeasure(Arc<CellMeasure>),
}

/// Masses of a weight on the finest cells of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMeasure {
    window: Window,
    masses: Vec<f64>,
}

impl CellMeasure {
    pub fn new(window: Window, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != window.finest_count() {
            return Err(Error::InvalidParameter(format!(
                "cell measure needs {} masses, got {}",
                window.finest_count(),
                masses.len()
            )));
        }
        if let Some(bad) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "cell masses must be positive and finite, found {bad}"
            )));
        }
        Ok(Self { window, masses })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Exact mass of an in-window cube (sum over its finest cells).
    pub fn mass_of(&self, idx: &DyadicIndex) -> Result<f64> {
        if idx.level > self.window.finest_level {
            let anc = idx.ancestor(self.window.finest_level)?;
            self.window.check(&anc)?;
            let frac = (-(((idx.level - self.window.finest_level) as usize * self.window.dim)
                as f64))
                .exp2();
            return Ok(self.masses[self.window.offset(&anc)] * frac);
        }
        Ok(self
            .window
            .finest_offsets(idx)?
            .into_iter()
            .map(|o| self.masses[o])
            .sum())
    }

    /// Parse the `window d J K` / `j k_1 .. k_d mass` text format.
    pub fn parse(text: &str) -> Result<Self> {
        let (window, values) = parse_cell_table(text)?;
        Self::new(window, values)
    }

    pub fn to_text(&self) -> String {
        write_cell_table(&self.window, &self.masses)
    }
}

impl GridFactor for CellMeasure {
    fn finest_level(&self) -> u32 {
        self.window.finest_level
    }

    fn half_extent(&self) -> u32 {
        self.window.half_extent
    }

    fn density_at(&self, x: &[f64]) -> Option<f64> {
        if x.len() != self.window.dim {
            return None;
        }
        let scale = (self.window.finest_level as f64).exp2();
        let pos: Vec<i64> = x.iter().map(|v| (v * scale).floor() as i64).collect();
        let idx = DyadicIndex::new(self.window.finest_level, pos);
        if !self.window.contains(&idx) {
            return None;
        }
        Some(self.masses[self.window.offset(&idx)] / self.window.finest_volume())
    }
}

/// Parse a per-finest-cell table with a `window d J K` header.
pub(crate) fn parse_cell_table(text: &str) -> Result<(Window, Vec<f64>)> {
    let mut window = None;
    let mut values: Vec<Option<f64>> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] == "window" {
            if fields.len() != 4 {
                return Err(Error::parse(n + 1, "header must be `window d J K`"));
            }
            let nums: Vec<u64> = fields[1..]
                .iter()
                .map(|f| f.parse::<u64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(n + 1, e.to_string()))?;
            let w = Window::new(nums[0] as usize, nums[1] as u32, nums[2] as u32)?;
            values = vec![None; w.finest_count()];
            window = Some(w);
            continue;
        }
        let w = window.ok_or_else(|| Error::parse(n + 1, "record before `window` header"))?;
        if fields.len() != w.dim + 2 {
            return Err(Error::parse(
                n + 1,
                format!("expected {} fields, got {}", w.dim + 2, fields.len()),
            ));
        }
        let j: u32 = fields[0]
            .parse()
            .map_err(|e: std::num::ParseIntError| Error::parse(n + 1, e.to_string()))?;
        if j != w.finest_level {
            return Err(Error::parse(n + 1, "records must be at the finest level"));
        }
        let pos: Vec<i64> = fields[1..=w.dim]
            .iter()
            .map(|f| f.parse::<i64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(n + 1, e.to_string()))?;
        let v: f64 = fields[w.dim + 1]
            .parse()
            .map_err(|e: std::num::ParseFloatError| Error::parse(n + 1, e.to_string()))?;
        let idx = DyadicIndex::new(j, pos);
        if !w.contains(&idx) {
            return Err(Error::parse(n + 1, format!("{idx} outside {w}")));
        }
        values[w.offset(&idx)] = Some(v);
    }
    let window = window.ok_or_else(|| Error::parse(0, "missing `window d J K` header"))?;
    let values = values
        .into_iter()
        .enumerate()
        .map(|(o, v)| {
            v.ok_or_else(|| {
                Error::MissingEntry(window.index_at(window.finest_level, o).to_string())
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((window, values))
}

pub(crate) fn write_cell_table(window: &Window, values: &[f64]) -> String {
    let mut out = format!(
        "window {} {} {}\n",
        window.dim, window.finest_level, window.half_extent
    );
    for (o, v) in values.iter().enumerate() {
        let idx = window.index_at(window.finest_level, o);
        out.push_str(&idx.level.to_string());
        for k in &idx.pos {
            out.push(' ');
            out.push_str(&k.to_string());
        }
        out.push_str(&format!(" {v:e}\n"));
    }
    out
}

/// Flattened form `scale * |x|^radial * |x_1|^first * exp(rate |x|) * prod rho_i^e_i`.
#[derive(Debug, Clone)]
struct Canonical {
    scale: f64,
    radial: f64,
    first: f64,
    exp_rate: f64,
    cells: Vec<(Arc<CellMeasure>, f64)>,
}

impl Canonical {
    fn of(w: &Weight) -> Self {
        let mut c = Canonical {
            scale: 1.0,
            radial: 0.0,
            first: 0.0,
            exp_rate: 0.0,
            cells: Vec::new(),
        };
        c.absorb(w, 1.0);
        c
    }

    fn absorb(&mut self, w: &Weight, e: f64) {
        match w {
            Weight::Constant(v) => self.scale *= v.powf(e),
            Weight::Power {
                alpha,
                axis: PowerAxis::Radial,
            } => self.radial += alpha * e,
            Weight::Power {
                alpha,
                axis: PowerAxis::FirstCoordinate,
            } => self.first += alpha * e,
            Weight::Exponential { rate } => self.exp_rate += rate * e,
            Weight::CellMeasure(cm) => self.cells.push((cm.clone(), e)),
            Weight::PowerProduct(factors) => {
                for (f, fe) in factors {
                    self.absorb(f, e * fe);
                }
            }
        }
    }

    fn integrand(&self, dim: usize) -> Integrand<'_> {
        Integrand {
            dim,
            scale: self.scale,
            radial: self.radial,
            first: self.first,
            exp_rate: self.exp_rate,
            grids: self
                .cells
                .iter()
                .map(|(c, e)| (c.as_ref() as &dyn GridFactor, *e))
                .collect(),
        }
    }
}

impl Weight {
    pub fn power(alpha: f64) -> Self {
        Weight::Power {
            alpha,
            axis: PowerAxis::Radial,
        }
    }

    pub fn power_first(alpha: f64) -> Self {
        Weight::Power {
            alpha,
            axis: PowerAxis::FirstCoordinate,
        }
    }

    pub fn exponential(rate: f64) -> Self {
        Weight::Exponential { rate }
    }

    pub fn constant(c: f64) -> Self {
        Weight::Constant(c)
    }

    pub fn one() -> Self {
        Weight::Constant(1.0)
    }

    /// The radial trace weight `|t|^{d-1}` on the line.
    pub fn radial_trace(d: usize) -> Self {
        Weight::power((d as f64) - 1.0)
    }

    pub fn cells(cm: CellMeasure) -> Self {
        Weight::CellMeasure(Arc::new(cm))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Weight::Constant(c) if !(c.is_finite() && *c > 0.0) => Err(Error::InvalidParameter(
                format!("constant weight must be positive, got {c}"),
            )),
            Weight::Power { alpha, .. } if !alpha.is_finite() => {
                Err(Error::InvalidParameter("power exponent must be finite".into()))
            }
            Weight::Exponential { rate } if !rate.is_finite() => {
                Err(Error::InvalidParameter("exponential rate must be finite".into()))
            }
            Weight::PowerProduct(f) => {
                for (w, e) in f {
                    if !e.is_finite() {
                        return Err(Error::InvalidParameter("product exponent must be finite".into()));
                    }
                    w.validate()?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Pointwise value; cell measures evaluate to their cell-averaged density.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            Weight::Constant(c) => *c,
            Weight::Power { alpha, axis } => {
                let base = match axis {
                    PowerAxis::Radial => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
                    PowerAxis::FirstCoordinate => x[0].abs(),
                };
                base.powf(*alpha)
            }
            Weight::Exponential { rate } => {
                (rate * x.iter().map(|v| v * v).sum::<f64>().sqrt()).exp()
            }
            Weight::PowerProduct(f) => f.iter().map(|(w, e)| w.evaluate(x).powf(*e)).product(),
            Weight::CellMeasure(cm) => cm.density_at(x).unwrap_or(f64::NAN),
        }
    }

    /// `int_{[lo,hi)} w(x) dx`.
    pub fn box_integral(&self, lo: &[f64], hi: &[f64], tol: f64) -> Result<f64> {
        let canon = Canonical::of(self);
        let v = quadrature::integrate(&canon.integrand(lo.len()), lo, hi, tol)?;
        if !v.is_finite() {
            return Err(Error::Divergent("weight integral is not finite".into()));
        }
        Ok(v)
    }

    /// `w(Q_{j,k}) = int_{Q_{j,k}} w(x) dx`.
    pub fn cell_mass(&self, idx: &DyadicIndex, tol: f64) -> Result<f64> {
        if let Weight::CellMeasure(cm) = self {
            return cm.mass_of(idx);
        }
        let b = idx.cube_bounds();
        self.box_integral(&b.lower_f64(), &b.upper_f64(), tol)
    }

    /// Masses of every in-window cube; coarse masses are sums of finest masses.
    pub fn mass_table(&self, window: &Window, tol: f64) -> Result<LevelTable> {
        if let Weight::CellMeasure(cm) = self {
            if cm.window == *window {
                return LevelTable::from_finest(*window, cm.masses.clone());
            }
        }
        let finest: Vec<f64> = (0..window.finest_count())
            .into_par_iter()
            .map(|o| self.cell_mass(&window.index_at(window.finest_level, o), tol))
            .collect::<Result<_>>()?;
        if let Some(bad) = finest.iter().position(|m| !(*m > 0.0)) {
            return Err(Error::ZeroMass(
                window.index_at(window.finest_level, bad).to_string(),
            ));
        }
        LevelTable::from_finest(*window, finest)
    }

    /// Replace the weight by its finest-cell masses on `window`.
    pub fn discretize(&self, window: &Window, tol: f64) -> Result<CellMeasure> {
        let t = self.mass_table(window, tol)?;
        CellMeasure::new(*window, t.finest().to_vec())
    }

    /// `w^e` as a weight.
    pub fn pow(&self, e: f64) -> Weight {
        if e == 1.0 {
            return self.clone();
        }
        Weight::PowerProduct(vec![(self.clone(), e)])
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Weight::Constant(c) => write!(f, "const:{c}"),
            Weight::Power {
                alpha,
                axis: PowerAxis::Radial,
            } => write!(f, "power:{alpha}"),
            Weight::Power {
                alpha,
                axis: PowerAxis::FirstCoordinate,
            } => write!(f, "power-x1:{alpha}"),
            Weight::Exponential { rate } => write!(f, "exp:{rate}"),
            Weight::CellMeasure(cm) => write!(f, "cells:<{}>", cm.window),
            Weight::PowerProduct(fs) => {
                for (i, (w, e)) in fs.iter().enumerate() {
                    if i > 0 {
                        write!(f, "*")?;
                    }
                    write!(f, "{w}^{e}")?;
                }
                Ok(())
            }
        }
    }
}

/// Parses `const:c`, `power:a`, `power-x1:a`, `exp:r`, and products `f^e*g^e`.
/// Cell measures must be loaded from files and are not accepted here.
impl FromStr for Weight {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.contains('*') || s.contains('^') {
            let factors = s
                .split('*')
                .map(|part| {
                    let (base, e) = match part.rsplit_once('^') {
                        Some((b, e)) => (b, parse_real(e)?),
                        None => (part, 1.0),
                    };
                    Ok((base.parse::<Weight>()?, e))
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok(Weight::PowerProduct(factors));
        }
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidParameter(format!("weight spec `{s}` needs kind:value")))?;
        let v = parse_real(arg)?;
        let w = match kind {
            "const" | "constant" => Weight::Constant(v),
            "power" => Weight::power(v),
            "power-x1" => Weight::power_first(v),
            "exp" => Weight::exponential(v),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown weight kind `{other}`"
                )))
            }
        };
        w.validate()?;
        Ok(w)
    }
}

/// Parses a real number, `inf`, or a fraction `a/b`.
pub fn parse_real(s: &str) -> Result<f64> {
    let t = s.trim();
    match t {
        "inf" | "infinity" | "Inf" | "∞" => Ok(f64::INFINITY),
        _ => {
            if let Some((a, b)) = t.split_once('/') {
                let a: f64 = a.trim().parse().map_err(|_| bad_real(t))?;
                let b: f64 = b.trim().parse().map_err(|_| bad_real(t))?;
                return Ok(a / b);
            }
            t.parse().map_err(|_| bad_real(t))
        }
    }
}

fn bad_real(s: &str) -> Error {
    Error::InvalidParameter(format!("cannot parse `{s}` as a real number"))
}

/// Exponents `((1-t) p / p0, t p / p1)` of the combined weight.
pub fn combine_exponents(theta: f64, p0: f64, p1: f64) -> (f64, f64) {
    let p = interpolate_exponent(p0, p1, theta);
    if p0.is_infinite() && p1.is_infinite() {
        return (0.0, 0.0);
    }
    if p1.is_infinite() {
        return (1.0, 0.0);
    }
    if p0.is_infinite() {
        return (0.0, 1.0);
    }
    (
        (1.0 - theta) * exponent_ratio(p, p0),
        theta * exponent_ratio(p, p1),
    )
}

/// `w = w0^{(1-t)p/p0} w1^{t p/p1}`.
pub fn combine(w0: &Weight, w1: &Weight, theta: f64, p0: f64, p1: f64) -> Result<Weight> {
    check_theta(theta)?;
    if p0.is_infinite() && p1.is_infinite() {
        return Ok(Weight::one());
    }
    if w0 == w1 {
        return Ok(w0.clone());
    }
    let (a, b) = combine_exponents(theta, p0, p1);
    let factors: Vec<(Weight, f64)> = [(w0, a), (w1, b)]
        .into_iter()
        .filter(|(_, e)| *e != 0.0)
        .map(|(w, e)| (w.clone(), e))
        .collect();
    Ok(match factors.as_slice() {
        [(w, e)] if *e == 1.0 => w.clone(),
        _ => Weight::PowerProduct(factors),
    })
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("theta must lie in (0,1), got {theta}")))
    }
}

/// Sampling ball; in `d >= 2` the sup-norm ball (a cube) is used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn volume(&self) -> f64 {
        (2.0 * self.radius).powi(self.center.len() as i32)
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.center.iter().map(|c| c - self.radius).collect(),
            self.center.iter().map(|c| c + self.radius).collect(),
        )
    }
}

/// Nested sample sets of balls with volume `<= 1`: refinement `n` uses centers on
/// the grid `2^{-n} Z^d` inside `[-extent, extent]^d` and radii `2^{-1} .. 2^{-n}`.
pub fn local_ball_refinements(dim: usize, refinements: u32, extent: f64) -> Vec<Vec<Ball>> {
    (1..=refinements)
        .map(|n| {
            let step = (-(n as f64)).exp2();
            let count = (extent / step).round() as i64;
            let axis: Vec<f64> = (-count..=count).map(|i| i as f64 * step).collect();
            let centers = cartesian(&axis, dim);
            let mut out = Vec::new();
            for c in &centers {
                for r in 1..=n {
                    out.push(Ball::new(c.clone(), (-(r as f64)).exp2()));
                }
            }
            out
        })
        .collect()
}

/// Nested sample sets for the global constant: refinement `m` adds radius `2^m`
/// with centers at `0` and `±2^i e_1`, `i < m`.
pub fn global_ball_refinements(dim: usize, max_exp: u32) -> Vec<Vec<Ball>> {
    (1..=max_exp)
        .map(|m| {
            let mut centers = vec![vec![0.0; dim]];
            for i in 0..m {
                for s in [-1.0, 1.0] {
                    let mut c = vec![0.0; dim];
                    c[0] = s * (i as f64).exp2();
                    centers.push(c);
                }
            }
            let mut out = Vec::new();
            for c in &centers {
                for r in 1..=m {
                    out.push(Ball::new(c.clone(), (r as f64).exp2()));
                }
            }
            out
        })
        .collect()
}

fn cartesian(axis: &[f64], dim: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ApScope {
    Local,
    Global,
}

/// Lower estimate of `A_p(w)` or `A_p^loc(w)` over a finite ball sample.
#[derive(Debug, Clone, Serialize)]
pub struct ApEstimate {
    pub p: f64,
    pub constant: f64,
    pub n_balls: usize,
    pub scope: ApScope,
    pub diverging: bool,
    pub worst_ball: Option<Ball>,
}

/// `max_B (avg_B w)^{1/p} (avg_B w^{-p'/p})^{1/p'}` over the given balls.
pub fn ap_constant(w: &Weight, p: f64, balls: &[Ball], local: bool, tol: f64) -> Result<ApEstimate> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("A_p needs 1 < p < inf, got {p}")));
    }
    if local {
        if let Some(b) = balls.iter().find(|b| b.volume() > 1.0 + 1e-15) {
            return Err(Error::InvalidParameter(format!(
                "local A_p ball of volume {} > 1",
                b.volume()
            )));
        }
    }
    let dual = w.pow(-1.0 / (p - 1.0));
    let values: Vec<Option<f64>> = balls
        .par_iter()
        .map(|b| {
            let (lo, hi) = b.bounds();
            let vol = b.volume();
            let avg_w = match w.box_integral(&lo, &hi, tol) {
                Ok(v) => v / vol,
                Err(Error::Divergent(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let avg_s = match dual.box_integral(&lo, &hi, tol) {
                Ok(v) => v / vol,
                Err(Error::Divergent(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let v = avg_w.powf(1.0 / p) * avg_s.powf((p - 1.0) / p);
            Ok(if v.is_finite() { Some(v) } else { None })
        })
        .collect::<Result<_>>()?;
    let mut constant: f64 = 0.0;
    let mut worst = None;
    let mut diverging = false;
    for (b, v) in balls.iter().zip(values) {
        match v {
            None => {
                diverging = true;
                constant = f64::INFINITY;
                worst = Some(b.clone());
                break;
            }
            Some(v) if v > constant => {
                constant = v;
                worst = Some(b.clone());
            }
            _ => {}
        }
    }
    if constant > DEFAULT_DIVERGENCE_CAP {
        diverging = true;
    }
    Ok(ApEstimate {
        p,
        constant,
        n_balls: balls.len(),
        scope: if local { ApScope::Local } else { ApScope::Global },
        diverging,
        worst_ball: worst,
    })
}

/// Estimates over nested sample sets, with the divergence rule applied to the sequence.
#[derive(Debug, Clone, Serialize)]
pub struct ApProfile {
    pub estimates: Vec<f64>,
    pub diverging: bool,
}

pub fn ap_profile(
    w: &Weight,
    p: f64,
    refinements: &[Vec<Ball>],
    local: bool,
    tol: f64,
) -> Result<ApProfile> {
    let mut estimates = Vec::with_capacity(refinements.len());
    let mut diverging = false;
    for balls in refinements {
        let est = ap_constant(w, p, balls, local, tol)?;
        estimates.push(est.constant);
        if est.diverging {
            diverging = true;
            break;
        }
    }
    let n = estimates.len();
    if n >= 4 && estimates[n - 1] >= DIVERGENCE_GROWTH * estimates[n - 4] {
        diverging = true;
    }
    Ok(ApProfile {
        estimates,
        diverging,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WClassRatio {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub argmin: DyadicIndex,
    pub argmax: DyadicIndex,
}

/// `int_Q w / ((int_Q w0)^{(1-t)p/p0} (int_Q w1)^{t p/p1})` over all in-window cubes.
pub fn w_class_ratio(
    w0: &Weight,
    w1: &Weight,
    theta: f64,
    p0: f64,
    p1: f64,
    window: &Window,
    tol: f64,
) -> Result<WClassRatio> {
    let w = combine(w0, w1, theta, p0, p1)?;
    let (a, b) = combine_exponents(theta, p0, p1);
    let mw = w.mass_table(window, tol)?;
    let m0 = w0.mass_table(window, tol)?;
    let m1 = w1.mass_table(window, tol)?;
    let mut best = (f64::INFINITY, 0u32, 0usize);
    let mut worst = (f64::NEG_INFINITY, 0u32, 0usize);
    for j in 0..=window.finest_level {
        for (o, ((x, y0), y1)) in mw
            .level(j)
            .iter()
            .zip(m0.level(j))
            .zip(m1.level(j))
            .enumerate()
        {
            let r = x / (y0.powf(a) * y1.powf(b));
            if r < best.0 {
                best = (r, j, o);
            }
            if r > worst.0 {
                worst = (r, j, o);
            }
        }
    }
    Ok(WClassRatio {
        min_ratio: best.0,
        max_ratio: worst.0,
        argmin: window.index_at(best.1, best.2),
        argmax: window.index_at(worst.1, worst.2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx1(j: u32, k: i64) -> DyadicIndex {
        DyadicIndex::new(j, vec![k])
    }

    #[test]
    fn cell_mass_examples() {
        let m = Weight::one().cell_mass(&idx1(1, 0), 1e-8).unwrap();
        assert_eq!(m, 0.5);
        let m = Weight::power(1.0).cell_mass(&idx1(0, 0), 1e-8).unwrap();
        assert!((m - 0.5).abs() < 1e-15);
        assert!(matches!(
            Weight::power(-1.0).cell_mass(&idx1(0, 0), 1e-8),
            Err(Error::Divergent(_))
        ));
        // negative side by symmetry: int_{-1}^{-1/2} |x|^2 = 7/24
        let m = Weight::power(2.0).cell_mass(&idx1(1, -2), 1e-8).unwrap();
        assert!((m - 7.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn cell_measure_mass_is_exact_sum() {
        let w = Window::new(1, 2, 1).unwrap();
        let cm = CellMeasure::new(w, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let wt = Weight::cells(cm);
        assert_eq!(wt.cell_mass(&idx1(0, 0), 1e-8).unwrap(), 26.0);
        assert_eq!(wt.cell_mass(&idx1(1, -1), 1e-8).unwrap(), 7.0);
        // below the finest level, mass is split evenly
        assert_eq!(wt.cell_mass(&idx1(3, 0), 1e-8).unwrap(), 2.5);
        assert!(wt.cell_mass(&idx1(0, 1), 1e-8).is_err());
        assert!(CellMeasure::new(w, vec![1.0; 7]).is_err());
        assert!(CellMeasure::new(w, vec![0.0; 8]).is_err());
    }

    #[test]
    fn products_of_cell_measures_are_exact() {
        let w = Window::new(1, 1, 1).unwrap();
        let a = Weight::cells(CellMeasure::new(w, vec![1.0, 4.0, 9.0, 16.0]).unwrap());
        let b = Weight::cells(CellMeasure::new(w, vec![16.0, 9.0, 4.0, 1.0]).unwrap());
        let prod = Weight::PowerProduct(vec![(a, 0.5), (b, 0.5)]);
        // densities are 2*mass; sqrt(2a * 2b) * 1/2 = sqrt(a b)
        let m = prod.cell_mass(&idx1(0, -1), 1e-8).unwrap();
        assert!((m - (4.0 + 6.0)).abs() < 1e-12);
    }

    #[test]
    fn combine_examples() {
        let w = Weight::exponential(0.7);
        let c = combine(&w, &w, 0.3, 1.5, 4.0).unwrap();
        for x in [-1.5, 0.0, 0.25, 2.0] {
            assert!((c.evaluate(&[x]) - w.evaluate(&[x])).abs() < 1e-12);
        }
        let c = combine(&Weight::power(2.0), &Weight::one(), 0.5, 2.0, 2.0).unwrap();
        for x in [-1.5f64, 0.25, 2.0] {
            assert!((c.evaluate(&[x]) - x.abs()).abs() < 1e-12);
        }
        let w0 = Weight::power(0.5);
        let c = combine(&w0, &Weight::exponential(3.0), 0.5, 2.0, f64::INFINITY).unwrap();
        assert_eq!(c, w0);
        let c = combine(&w0, &Weight::power(1.0), 0.5, f64::INFINITY, f64::INFINITY).unwrap();
        assert_eq!(c, Weight::one());
        assert!(combine(&w0, &w0, 1.0, 2.0, 2.0).is_err());
        assert!(combine(&w0, &w0, 0.0, 2.0, 2.0).is_err());
    }

    #[test]
    fn combine_exponents_sum_to_one() {
        for &(t, p0, p1) in &[
            (0.5, 1.0, 2.0),
            (0.2, 0.5, 4.0),
            (0.9, 3.0, f64::INFINITY),
            (0.1, f64::INFINITY, 0.7),
        ] {
            let (a, b) = combine_exponents(t, p0, p1);
            assert!((a + b - 1.0).abs() < 1e-15, "{t} {p0} {p1}");
        }
    }

    #[test]
    fn ap_constant_of_constant_is_one() {
        let balls = local_ball_refinements(1, 3, 1.0).pop().unwrap();
        let est = ap_constant(&Weight::constant(3.5), 2.0, &balls, true, 1e-10).unwrap();
        assert!((est.constant - 1.0).abs() < 1e-12);
        assert!(!est.diverging);
    }

    #[test]
    fn ap_power_centered_ball_closed_form() {
        // centered interval: (1/(1+a))^{1/2} (1/(1-a))^{1/2} for p = 2
        let a = 0.5;
        let balls = vec![Ball::new(vec![0.0], 0.25)];
        let est = ap_constant(&Weight::power(a), 2.0, &balls, true, 1e-12).unwrap();
        let exact = (1.0 / ((1.0 + a) * (1.0 - a))).sqrt();
        assert!((est.constant - exact).abs() < 1e-12);
    }

    #[test]
    fn ap_local_rejects_big_balls() {
        let balls = vec![Ball::new(vec![0.0], 1.0)];
        assert!(ap_constant(&Weight::one(), 2.0, &balls, true, 1e-8).is_err());
        assert!(ap_constant(&Weight::one(), 1.0, &balls, false, 1e-8).is_err());
    }

    #[test]
    fn ap_monotone_in_p_on_fixed_sample() {
        let balls = local_ball_refinements(1, 3, 1.0).pop().unwrap();
        let w = Weight::power(0.4);
        let a2 = ap_constant(&w, 2.0, &balls, true, 1e-10).unwrap().constant;
        let a3 = ap_constant(&w, 3.0, &balls, true, 1e-10).unwrap().constant;
        assert!(a3 <= a2 * (1.0 + 1e-10));
    }

    #[test]
    fn w_class_identity_pair() {
        let win = Window::new(1, 3, 2).unwrap();
        let r = w_class_ratio(&Weight::one(), &Weight::one(), 0.4, 2.0, 3.0, &win, 1e-10).unwrap();
        assert!((r.min_ratio - 1.0).abs() < 1e-14 && (r.max_ratio - 1.0).abs() < 1e-14);
    }

    #[test]
    fn w_class_two_cell_counterexample() {
        // ratio on [0,1) is 2 / (eps + 1/eps)
        let win = Window::new(1, 1, 1).unwrap();
        let eps = 1e-4;
        let w0 = Weight::cells(CellMeasure::new(win, vec![1.0, 1.0, eps, 1.0 / eps]).unwrap());
        let w1 = Weight::cells(CellMeasure::new(win, vec![1.0, 1.0, 1.0 / eps, eps]).unwrap());
        let r = w_class_ratio(&w0, &w1, 0.5, 2.0, 2.0, &win, 1e-10).unwrap();
        let expect = 2.0 / (eps + 1.0 / eps);
        assert!((r.min_ratio - expect).abs() < 1e-12 * expect.max(1.0));
        assert_eq!(r.argmin, DyadicIndex::new(0, vec![0]));
        assert!(r.max_ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn weight_spec_parsing() {
        assert_eq!("power:0.5".parse::<Weight>().unwrap(), Weight::power(0.5));
        assert_eq!("exp:-1".parse::<Weight>().unwrap(), Weight::exponential(-1.0));
        assert_eq!("const:2".parse::<Weight>().unwrap(), Weight::constant(2.0));
        let w: Weight = "power:1^0.5*exp:2^0.5".parse().unwrap();
        assert_eq!(
            w,
            Weight::PowerProduct(vec![(Weight::power(1.0), 0.5), (Weight::exponential(2.0), 0.5)])
        );
        assert!("bogus:1".parse::<Weight>().is_err());
        assert!("const:0".parse::<Weight>().is_err());
    }

    #[test]
    fn cell_table_text_round_trip() {
        let w = Window::new(2, 1, 1).unwrap();
        let masses: Vec<f64> = (1..=16).map(|v| v as f64 * 0.125).collect();
        let cm = CellMeasure::new(w, masses).unwrap();
        let back = CellMeasure::parse(&cm.to_text()).unwrap();
        assert_eq!(back, cm);
        assert!(CellMeasure::parse("1 0 1.0\n").is_err());
        assert!(CellMeasure::parse("window 1 1 1\n1 0 1.0\n").is_err());
    }
}
