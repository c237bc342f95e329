//! Sparse dyadic sequences and the quasi-norms of `f^s_{p,q}(w)`,
//! `b^s_{p,q}(w)` and `b^s_{p,q}(s-y)` on a finite window.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicIndex, LevelTable, Window};
use crate::error::{Error, Result};
use crate::weights::{parse_real, CellMeasure, Weight, DEFAULT_QUAD_TOL};

/// `1/p = (1-t)/p0 + t/p1` with `1/inf = 0`.
pub fn interpolate_exponent(p0: f64, p1: f64, theta: f64) -> f64 {
    let inv = (1.0 - theta) / p0 + theta / p1;
    1.0 / inv
}

/// `a / a_i`, with `inf/inf = 1` and `a/inf = 0` for finite `a`.
pub fn exponent_ratio(a: f64, ai: f64) -> f64 {
    if ai.is_infinite() {
        if a.is_infinite() {
            1.0
        } else {
            0.0
        }
    } else {
        a / ai
    }
}

/// Exact version of [`interpolate_exponent`]; `None` stands for `inf`.
pub fn interpolate_exponent_exact(
    p0: Option<Rational64>,
    p1: Option<Rational64>,
    theta: Rational64,
) -> Option<Rational64> {
    let one = Rational64::from_integer(1);
    let inv = p0.map_or(Rational64::from_integer(0), |p| (one - theta) / p)
        + p1.map_or(Rational64::from_integer(0), |p| theta / p);
    if inv == Rational64::from_integer(0) {
        None
    } else {
        Some(one / inv)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scale {
    F,
    B,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "F" | "f" => Ok(Scale::F),
            "B" | "b" => Ok(Scale::B),
            other => Err(Error::InvalidParameter(format!("unknown scale `{other}`"))),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::F => "F",
            Scale::B => "B",
        })
    }
}

/// Parameters `(s, p, q, scale, w)` of one sequence space.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceParams {
    pub s: f64,
    pub p: f64,
    pub q: f64,
    pub scale: Scale,
    pub weight: Weight,
}

impl SpaceParams {
    /// Validates exponents; `p = inf` replaces the weight by `1`.
    pub fn new(s: f64, p: f64, q: f64, scale: Scale, weight: Weight) -> Result<Self> {
        if !s.is_finite() {
            return Err(Error::InvalidParameter(format!("s must be finite, got {s}")));
        }
        for (name, v) in [("p", p), ("q", q)] {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if scale == Scale::F && p.is_infinite() {
            return Err(Error::InvalidParameter("f-spaces need p < inf".into()));
        }
        weight.validate()?;
        let weight = if p.is_infinite() { Weight::one() } else { weight };
        Ok(Self {
            s,
            p,
            q,
            scale,
            weight,
        })
    }

    pub fn f(s: f64, p: f64, q: f64, weight: Weight) -> Result<Self> {
        Self::new(s, p, q, Scale::F, weight)
    }

    pub fn b(s: f64, p: f64, q: f64, weight: Weight) -> Result<Self> {
        Self::new(s, p, q, Scale::B, weight)
    }

    pub fn with_weight(&self, weight: Weight) -> Result<Self> {
        Self::new(self.s, self.p, self.q, self.scale, weight)
    }

    pub fn with_s(&self, s: f64) -> Result<Self> {
        Self::new(s, self.p, self.q, self.scale, self.weight.clone())
    }
}

fn fmt_real(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

impl fmt::Display for SpaceParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "s={} p={} q={} scale={} weight={}",
            fmt_real(self.s),
            fmt_real(self.p),
            fmt_real(self.q),
            self.scale,
            self.weight
        )
    }
}

/// Parses `s=<real> p=<real|inf> q=<real|inf> scale=F|B weight=<spec>`;
/// `weight=cells:<path>` loads a cell-measure table. Missing `weight` means `1`.
impl FromStr for SpaceParams {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let (mut s, mut p, mut q, mut scale, mut weight) = (None, None, None, None, None);
        for tok in text.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("expected key=value, got `{tok}`")))?;
            match k {
                "s" => s = Some(parse_real(v)?),
                "p" => p = Some(parse_real(v)?),
                "q" => q = Some(parse_real(v)?),
                "scale" => scale = Some(v.parse::<Scale>()?),
                "weight" => weight = Some(parse_weight_spec(v)?),
                other => {
                    return Err(Error::InvalidParameter(format!("unknown space key `{other}`")))
                }
            }
        }
        let need = |name: &str| Error::InvalidParameter(format!("space spec is missing `{name}`"));
        Self::new(
            s.ok_or_else(|| need("s"))?,
            p.ok_or_else(|| need("p"))?,
            q.ok_or_else(|| need("q"))?,
            scale.ok_or_else(|| need("scale"))?,
            weight.unwrap_or_else(Weight::one),
        )
    }
}

/// Weight spec including `cells:<path>` (file-backed cell measures).
pub fn parse_weight_spec(spec: &str) -> Result<Weight> {
    if let Some(path) = spec.trim().strip_prefix("cells:") {
        let text = std::fs::read_to_string(path)?;
        return Ok(Weight::cells(CellMeasure::parse(&text)?));
    }
    spec.parse()
}

/// Interpolated `(s, p, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterpolatedParams {
    pub s: f64,
    pub p: f64,
    pub q: f64,
}

pub fn interpolate_params(p0: &SpaceParams, p1: &SpaceParams, theta: f64) -> InterpolatedParams {
    interpolate_triple((p0.s, p0.p, p0.q), (p1.s, p1.p, p1.q), theta)
}

pub fn interpolate_triple(a: (f64, f64, f64), b: (f64, f64, f64), theta: f64) -> InterpolatedParams {
    InterpolatedParams {
        s: (1.0 - theta) * a.0 + theta * b.0,
        p: interpolate_exponent(a.1, b.1, theta),
        q: interpolate_exponent(a.2, b.2, theta),
    }
}

/// Positive per-index table `y_{j,k}` for `b^s_{p,q}(s-y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct YTable {
    table: LevelTable,
}

impl YTable {
    pub fn new(table: LevelTable) -> Result<Self> {
        let w = *table.window();
        for j in 0..=w.finest_level {
            if let Some(o) = table.level(j).iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::ZeroMass(format!(
                    "y entry at {} is {}",
                    w.index_at(j, o),
                    table.level(j)[o]
                )));
            }
        }
        Ok(Self { table })
    }

    /// Cell masses of a weight.
    pub fn from_weight(w: &Weight, window: &Window, tol: f64) -> Result<Self> {
        Self::new(w.mass_table(window, tol)?)
    }

    /// Cube volumes `2^{-jd}`.
    pub fn volumes(window: &Window) -> Self {
        let levels = (0..=window.finest_level)
            .map(|j| vec![(-((j as usize * window.dim) as f64)).exp2(); window.level_len(j)])
            .collect();
        Self {
            table: LevelTable::from_levels(*window, levels).expect("shape matches window"),
        }
    }

    pub fn table(&self) -> &LevelTable {
        &self.table
    }

    pub fn window(&self) -> &Window {
        self.table.window()
    }
}

/// Sparse coefficients `lambda_{j,k}` inside a window; absent entries are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    window: Window,
    entries: BTreeMap<DyadicIndex, Complex64>,
}

impl Sequence {
    pub fn new(window: Window) -> Self {
        Self {
            window,
            entries: BTreeMap::new(),
        }
    }

    pub fn from_entries<I, V>(window: Window, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (DyadicIndex, V)>,
        V: Into<Complex64>,
    {
        let mut seq = Self::new(window);
        for (idx, v) in entries {
            seq.insert(idx, v)?;
        }
        Ok(seq)
    }

    /// Nonzero entries of a dense table of (real) values.
    pub fn from_table(table: &LevelTable) -> Self {
        let window = *table.window();
        let mut entries = BTreeMap::new();
        for j in 0..=window.finest_level {
            for (o, &v) in table.level(j).iter().enumerate() {
                if v != 0.0 {
                    entries.insert(window.index_at(j, o), Complex64::new(v, 0.0));
                }
            }
        }
        Self { window, entries }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    /// Sets an entry; zero values remove it.
    pub fn insert(&mut self, idx: DyadicIndex, v: impl Into<Complex64>) -> Result<()> {
        self.window.check(&idx)?;
        let v = v.into();
        if v == Complex64::new(0.0, 0.0) {
            self.entries.remove(&idx);
        } else {
            self.entries.insert(idx, v);
        }
        Ok(())
    }

    pub fn get(&self, idx: &DyadicIndex) -> Complex64 {
        self.entries.get(idx).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DyadicIndex, &Complex64)> {
        self.entries.iter()
    }

    pub fn support(&self) -> Vec<DyadicIndex> {
        self.entries.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Dense table of `|lambda_{j,k}|`.
    pub fn abs_table(&self) -> LevelTable {
        let w = self.window;
        let mut levels: Vec<Vec<f64>> = (0..=w.finest_level).map(|j| vec![0.0; w.level_len(j)]).collect();
        for (idx, v) in &self.entries {
            levels[idx.level as usize][w.offset(idx)] = v.norm();
        }
        LevelTable::from_levels(w, levels).expect("shape matches window")
    }

    pub fn abs(&self) -> Sequence {
        self.map(|_, v| Complex64::new(v.norm(), 0.0))
    }

    pub fn map(&self, f: impl Fn(&DyadicIndex, Complex64) -> Complex64) -> Sequence {
        let entries = self
            .entries
            .iter()
            .map(|(k, v)| (k.clone(), f(k, *v)))
            .filter(|(_, v)| *v != Complex64::new(0.0, 0.0))
            .collect();
        Sequence {
            window: self.window,
            entries,
        }
    }

    pub fn scaled(&self, c: Complex64) -> Sequence {
        self.map(|_, v| v * c)
    }

    pub fn add(&self, other: &Sequence) -> Result<Sequence> {
        if self.window != other.window {
            return Err(Error::InvalidParameter("sequences live on different windows".into()));
        }
        let mut out = self.clone();
        for (k, v) in &other.entries {
            let sum = out.get(k) + v;
            out.insert(k.clone(), sum)?;
        }
        Ok(out)
    }

    /// Parses records `j k_1 .. k_d re [im]`, with an optional `window d J K` header.
    pub fn parse(text: &str, window: Option<Window>) -> Result<Sequence> {
        let mut window = window;
        let mut pending: Vec<(usize, DyadicIndex, Complex64)> = Vec::new();
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
                let nums: Vec<u32> = fields[1..]
                    .iter()
                    .map(|f| f.parse::<u32>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::parse(n + 1, e.to_string()))?;
                window = Some(Window::new(nums[0] as usize, nums[1], nums[2])?);
                continue;
            }
            let w = window.ok_or_else(|| Error::parse(n + 1, "no window given for sequence"))?;
            let d = w.dim;
            if fields.len() != d + 2 && fields.len() != d + 3 {
                return Err(Error::parse(n + 1, format!("expected {} or {} fields", d + 2, d + 3)));
            }
            let j: u32 = fields[0]
                .parse()
                .map_err(|e: std::num::ParseIntError| Error::parse(n + 1, e.to_string()))?;
            let pos: Vec<i64> = fields[1..=d]
                .iter()
                .map(|f| f.parse::<i64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(n + 1, e.to_string()))?;
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::parse(n + 1, e.to_string()))
            };
            let re = num(fields[d + 1])?;
            let im = if fields.len() == d + 3 { num(fields[d + 2])? } else { 0.0 };
            pending.push((n + 1, DyadicIndex::new(j, pos), Complex64::new(re, im)));
        }
        let w = window.ok_or_else(|| Error::parse(0, "no window given for sequence"))?;
        let mut seq = Sequence::new(w);
        for (line, idx, v) in pending {
            if !w.contains(&idx) {
                return Err(Error::parse(line, format!("{idx} outside {w}")));
            }
            seq.insert(idx, v)?;
        }
        Ok(seq)
    }

    pub fn to_text(&self) -> String {
        let w = self.window;
        let mut out = format!("window {} {} {}\n", w.dim, w.finest_level, w.half_extent);
        for (idx, v) in &self.entries {
            out.push_str(&idx.level.to_string());
            for k in &idx.pos {
                out.push_str(&format!(" {k}"));
            }
            if v.im == 0.0 {
                out.push_str(&format!(" {:e}\n", v.re));
            } else {
                out.push_str(&format!(" {:e} {:e}\n", v.re, v.im));
            }
        }
        out
    }
}

fn level_factor(j: u32, s: f64) -> f64 {
    (j as f64 * s).exp2()
}

/// Per finest cell: `(sum_j (2^{js} a_{j,anc})^q)^{1/q}`, or the sup for `q = inf`.
pub(crate) fn stacks(abs: &LevelTable, s: f64, q: f64) -> Vec<f64> {
    let w = *abs.window();
    let n = w.finest_count();
    let mut acc = vec![0.0f64; n];
    for j in 0..=w.finest_level {
        let f = level_factor(j, s);
        let level = abs.level(j);
        for (m, a) in acc.iter_mut().enumerate() {
            let v = level[w.ancestor_offset(m, j)];
            if v == 0.0 {
                continue;
            }
            let t = f * v;
            if q.is_infinite() {
                *a = a.max(t);
            } else {
                *a += t.powf(q);
            }
        }
    }
    if q.is_finite() {
        for a in &mut acc {
            *a = a.powf(1.0 / q);
        }
    }
    acc
}

/// `(sum_m S(m)^p mass_m)^{1/p}`.
pub(crate) fn f_norm_abs(abs: &LevelTable, s: f64, p: f64, q: f64, finest_mass: &[f64]) -> f64 {
    let st = stacks(abs, s, q);
    let sum: f64 = st
        .iter()
        .zip(finest_mass)
        .filter(|(v, _)| **v != 0.0)
        .map(|(v, m)| v.powf(p) * m)
        .sum();
    sum.powf(1.0 / p)
}

/// Per-level inner norms `(sum_k (2^{js}|lambda|)^p y_{j,k})^{1/p}` (sup for `p = inf`).
pub(crate) fn b_level_norms(abs: &LevelTable, s: f64, p: f64, y: Option<&LevelTable>) -> Vec<f64> {
    let w = *abs.window();
    (0..=w.finest_level)
        .map(|j| {
            let f = level_factor(j, s);
            let level = abs.level(j);
            if p.is_infinite() {
                level.iter().fold(0.0f64, |m, v| m.max(f * v))
            } else {
                let y = y.expect("finite p needs masses").level(j);
                let sum: f64 = level
                    .iter()
                    .zip(y)
                    .filter(|(v, _)| **v != 0.0)
                    .map(|(v, m)| (f * v).powf(p) * m)
                    .sum();
                sum.powf(1.0 / p)
            }
        })
        .collect()
}

pub(crate) fn lq_norm(values: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        values.iter().fold(0.0f64, |m, v| m.max(*v))
    } else {
        values
            .iter()
            .filter(|v| **v != 0.0)
            .map(|v| v.powf(q))
            .sum::<f64>()
            .powf(1.0 / q)
    }
}

pub(crate) fn b_norm_abs(abs: &LevelTable, s: f64, p: f64, q: f64, y: Option<&LevelTable>) -> f64 {
    lq_norm(&b_level_norms(abs, s, p, y), q)
}

/// A space bound to a window with precomputed cell masses.
#[derive(Debug, Clone)]
pub struct Space {
    pub params: SpaceParams,
    window: Window,
    masses: Option<LevelTable>,
}

impl Space {
    pub fn new(params: SpaceParams, window: &Window, tol: f64) -> Result<Self> {
        let masses = if params.p.is_infinite() {
            None
        } else {
            Some(params.weight.mass_table(window, tol)?)
        };
        Ok(Self {
            params,
            window: *window,
            masses,
        })
    }

    /// `b^s_{p,q}(s-y)`.
    pub fn from_y(s: f64, p: f64, q: f64, y: &YTable) -> Result<Self> {
        let params = SpaceParams::b(s, p, q, Weight::one())?;
        Ok(Self {
            params,
            window: *y.window(),
            masses: if p.is_infinite() { None } else { Some(y.table().clone()) },
        })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    /// Cell masses, `None` when `p = inf`.
    pub fn masses(&self) -> Option<&LevelTable> {
        self.masses.as_ref()
    }

    pub fn norm(&self, seq: &Sequence) -> Result<f64> {
        if *seq.window() != self.window {
            return Err(Error::InvalidParameter(format!(
                "sequence on {} but space on {}",
                seq.window(),
                self.window
            )));
        }
        Ok(self.norm_abs(&seq.abs_table()))
    }

    pub fn norm_abs(&self, abs: &LevelTable) -> f64 {
        let sp = &self.params;
        match sp.scale {
            Scale::F => f_norm_abs(
                abs,
                sp.s,
                sp.p,
                sp.q,
                self.masses.as_ref().expect("f-space has finite p").finest(),
            ),
            Scale::B => b_norm_abs(abs, sp.s, sp.p, sp.q, self.masses.as_ref()),
        }
    }
}

/// `||lambda | f^s_{p,q}(w)||`.
pub fn f_norm(seq: &Sequence, params: &SpaceParams) -> Result<f64> {
    if params.scale != Scale::F {
        return Err(Error::ScaleMismatch("f_norm needs scale F".into()));
    }
    Space::new(params.clone(), seq.window(), DEFAULT_QUAD_TOL)?.norm(seq)
}

/// `||lambda | b^s_{p,q}(w)||`.
pub fn b_norm(seq: &Sequence, params: &SpaceParams) -> Result<f64> {
    if params.scale != Scale::B {
        return Err(Error::ScaleMismatch("b_norm needs scale B".into()));
    }
    Space::new(params.clone(), seq.window(), DEFAULT_QUAD_TOL)?.norm(seq)
}

/// Norm in whichever scale `params` names.
pub fn norm(seq: &Sequence, params: &SpaceParams) -> Result<f64> {
    Space::new(params.clone(), seq.window(), DEFAULT_QUAD_TOL)?.norm(seq)
}

/// `||lambda | b^s_{p,q}(s-y)||`.
pub fn b_norm_y(seq: &Sequence, s: f64, p: f64, q: f64, y: &YTable) -> Result<f64> {
    if y.window() != seq.window() {
        return Err(Error::MissingEntry(format!(
            "y table on {} does not cover {}",
            y.window(),
            seq.window()
        )));
    }
    Space::from_y(s, p, q, y)?.norm(seq)
}

/// Drops entries with `j > M` or `max_i |k_i| > M`.
pub fn cutoff(seq: &Sequence, m: u32) -> Sequence {
    let m = m as i64;
    let entries = seq
        .entries
        .iter()
        .filter(|(idx, _)| (idx.level as i64) <= m && idx.pos.iter().all(|k| k.abs() <= m))
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    Sequence {
        window: seq.window,
        entries,
    }
}

/// `||lambda - lambda^{(M)}||` for each `M`.
pub fn ring_convergence_profile(seq: &Sequence, params: &SpaceParams, ms: &[u32]) -> Result<Vec<f64>> {
    let space = Space::new(params.clone(), seq.window(), DEFAULT_QUAD_TOL)?;
    ring_convergence_profile_in(seq, &space, ms)
}

pub fn ring_convergence_profile_in(seq: &Sequence, space: &Space, ms: &[u32]) -> Result<Vec<f64>> {
    ms.iter()
        .map(|&m| {
            let kept = cutoff(seq, m);
            let rest = seq.add(&kept.scaled(Complex64::new(-1.0, 0.0)))?;
            space.norm(&rest)
        })
        .collect()
}

/// `(I_sigma lambda)_{j,k} = 2^{j sigma} lambda_{j,k}`.
pub fn lift_seq(seq: &Sequence, sigma: f64) -> Sequence {
    seq.map(|idx, v| v * level_factor(idx.level, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn win1(j: u32, k: u32) -> Window {
        Window::new(1, j, k).unwrap()
    }

    fn two_entry() -> Sequence {
        Sequence::from_entries(
            win1(1, 1),
            [(DyadicIndex::new(0, vec![0]), 1.0), (DyadicIndex::new(1, vec![0]), 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn interpolation_examples() {
        let r = interpolate_triple((0.0, 1.0, 4.0), (1.0, 2.0, 2.0), 0.5);
        assert!((r.s - 0.5).abs() < 1e-15);
        assert!((r.p - 4.0 / 3.0).abs() < 1e-15);
        assert!((r.q - 8.0 / 3.0).abs() < 1e-15);
        let half = Rational64::new(1, 2);
        let i = |n| Some(Rational64::from_integer(n));
        assert_eq!(interpolate_exponent_exact(i(1), i(2), half), Some(Rational64::new(4, 3)));
        assert_eq!(interpolate_exponent_exact(i(4), i(2), half), Some(Rational64::new(8, 3)));
        assert_eq!(interpolate_exponent_exact(None, i(2), half), i(4));
        assert_eq!(interpolate_exponent_exact(None, None, half), None);
        assert_eq!(interpolate_exponent(f64::INFINITY, 2.0, 0.5), 4.0);
        assert!(interpolate_exponent(f64::INFINITY, f64::INFINITY, 0.3).is_infinite());
        let same = interpolate_triple((0.3, 1.5, 2.5), (0.3, 1.5, 2.5), 0.7);
        assert!((same.p - 1.5).abs() < 1e-15 && (same.q - 2.5).abs() < 1e-15);
    }

    #[test]
    fn f_norm_examples() {
        let w = win1(0, 1);
        let one = Sequence::from_entries(w, [(DyadicIndex::new(0, vec![0]), 1.0)]).unwrap();
        let p = SpaceParams::f(0.0, 2.0, 2.0, Weight::one()).unwrap();
        assert_eq!(f_norm(&one, &p).unwrap(), 1.0);

        let seq = two_entry();
        let p = SpaceParams::f(1.0, 1.0, 1.0, Weight::one()).unwrap();
        assert!((f_norm(&seq, &p).unwrap() - 2.0).abs() < 1e-15);
        let p = SpaceParams::f(1.0, 1.0, f64::INFINITY, Weight::one()).unwrap();
        assert!((f_norm(&seq, &p).unwrap() - 1.5).abs() < 1e-15);
        assert!(matches!(
            b_norm(&seq, &p),
            Err(Error::ScaleMismatch(_))
        ));
        assert!(SpaceParams::f(0.0, f64::INFINITY, 1.0, Weight::one()).is_err());
    }

    #[test]
    fn b_norm_examples() {
        let seq = two_entry();
        let p = SpaceParams::b(1.0, 1.0, 1.0, Weight::one()).unwrap();
        assert!((b_norm(&seq, &p).unwrap() - 2.0).abs() < 1e-15);
        let p = SpaceParams::b(1.0, f64::INFINITY, f64::INFINITY, Weight::one()).unwrap();
        assert_eq!(b_norm(&seq, &p).unwrap(), 2.0);
        // one term: 2^{js} v 2^{-jd/p}
        let w = win1(3, 1);
        let seq = Sequence::from_entries(w, [(DyadicIndex::new(3, vec![-5]), 0.7)]).unwrap();
        let p = SpaceParams::b(0.6, 1.5, 0.8, Weight::one()).unwrap();
        let exact = (3.0f64 * 0.6).exp2() * 0.7 * (-3.0f64 / 1.5).exp2();
        assert!((b_norm(&seq, &p).unwrap() - exact).abs() < 1e-14 * exact);
    }

    #[test]
    fn b_norm_y_examples() {
        let w = win1(0, 1);
        let seq = Sequence::from_entries(w, [(DyadicIndex::new(0, vec![0]), 1.0)]).unwrap();
        let y = YTable::new(LevelTable::from_levels(w, vec![vec![3.0, 4.0]]).unwrap()).unwrap();
        assert!((b_norm_y(&seq, 0.0, 2.0, 1.0, &y).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(b_norm_y(&seq, 0.0, f64::INFINITY, 1.0, &y).unwrap(), 1.0);
        let seq = two_entry();
        let vols = YTable::volumes(seq.window());
        let p = SpaceParams::b(0.3, 1.7, 0.9, Weight::one()).unwrap();
        assert_eq!(
            b_norm_y(&seq, 0.3, 1.7, 0.9, &vols).unwrap(),
            b_norm(&seq, &p).unwrap()
        );
        assert!(YTable::new(LevelTable::from_levels(w, vec![vec![0.0, 1.0]]).unwrap()).is_err());
    }

    #[test]
    fn cutoff_examples() {
        let w = win1(2, 2);
        let seq = Sequence::from_entries(
            w,
            [
                (DyadicIndex::new(0, vec![0]), 1.0),
                (DyadicIndex::new(0, vec![-1]), 2.0),
                (DyadicIndex::new(1, vec![0]), 3.0),
                (DyadicIndex::new(2, vec![7]), 4.0),
            ],
        )
        .unwrap();
        assert_eq!(cutoff(&seq, 10), seq);
        let c0 = cutoff(&seq, 0);
        assert_eq!(c0.support(), vec![DyadicIndex::new(0, vec![0])]);
        let c1 = cutoff(&seq, 1);
        assert_eq!(c1.len(), 3);
    }

    #[test]
    fn ring_profile_geometric() {
        let j_max = 12;
        let w = win1(j_max, 1);
        let seq = Sequence::from_entries(
            w,
            (0..=j_max).map(|j| (DyadicIndex::new(j, vec![0]), (-(j as f64)).exp2())),
        )
        .unwrap();
        let p = SpaceParams::b(0.0, 1.0, 1.0, Weight::one()).unwrap();
        let ms: Vec<u32> = (0..=j_max).collect();
        let prof = ring_convergence_profile(&seq, &p, &ms).unwrap();
        for (m, v) in ms.iter().zip(&prof) {
            let exact: f64 = (m + 1..=j_max).map(|j| (-2.0 * j as f64).exp2()).sum();
            assert!((v - exact).abs() <= 1e-14 * exact.max(1e-300), "M={m}");
        }
        assert_eq!(*prof.last().unwrap(), 0.0);
        // infinite-window limit
        let inf = 4.0 / 3.0 * 4f64.powi(-1);
        assert!((prof[0] - inf).abs() < 1e-6);
    }

    #[test]
    fn lift_identity_single_entry() {
        let w = win1(3, 1);
        let seq = Sequence::from_entries(w, [(DyadicIndex::new(2, vec![1]), 1.25)]).unwrap();
        let lifted = lift_seq(&seq, 1.5);
        assert_eq!(lifted.get(&DyadicIndex::new(2, vec![1])).re, 1.25 * 8.0);
        assert_eq!(lift_seq(&seq, 0.0), seq);
        let p = SpaceParams::f(0.7, 2.0, 3.0, Weight::power(0.5)).unwrap();
        let a = f_norm(&seq, &p).unwrap();
        let b = f_norm(&lifted, &p.with_s(0.7 - 1.5).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn space_params_text() {
        let p: SpaceParams = "s=0.5 p=4/3 q=inf scale=F weight=power:0.5".parse().unwrap();
        assert_eq!(p.s, 0.5);
        assert!((p.p - 4.0 / 3.0).abs() < 1e-15);
        assert!(p.q.is_infinite());
        assert_eq!(p.weight, Weight::power(0.5));
        let back: SpaceParams = p.to_string().parse().unwrap();
        assert_eq!(back.scale, Scale::F);
        let inf: SpaceParams = "s=0 p=inf q=1 scale=B weight=exp:1".parse().unwrap();
        assert_eq!(inf.weight, Weight::one());
        assert!("s=0 p=2 scale=B".parse::<SpaceParams>().is_err());
        assert!("s=0 p=2 q=2 scale=X".parse::<SpaceParams>().is_err());
    }

    #[test]
    fn sequence_text_round_trip() {
        let w = Window::new(2, 2, 1).unwrap();
        let seq = Sequence::from_entries(
            w,
            [
                (DyadicIndex::new(0, vec![0, -1]), Complex64::new(1.5, -0.25)),
                (DyadicIndex::new(2, vec![3, -4]), Complex64::new(-2.0, 0.0)),
            ],
        )
        .unwrap();
        let back = Sequence::parse(&seq.to_text(), None).unwrap();
        assert_eq!(back, seq);
        let plain = Sequence::parse("0 0 0 1\n", Some(w)).unwrap();
        assert_eq!(plain.len(), 1);
        assert!(Sequence::parse("0 5 0 1\n", Some(w)).is_err());
        assert!(Sequence::parse("0 0 1\n", None).is_err());
        assert!(Sequence::parse("", Some(w)).unwrap().is_empty());
    }
}
