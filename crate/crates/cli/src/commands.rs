use std::fs;
use std::path::{Path, PathBuf};

use calderon::calderon::{lp_factorize, Couple, OracleOptions};
use calderon::counterexamples::{gap_report, EmbeddingChain, GapSpec};
use calderon::instances::{
    instance_rng, random_dense_cell_function, random_family, random_sequence, ShapeSpec,
};
use calderon::maximal::{vv_maximal_constant_with, CellFunction};
use calderon::report::{all_pass, json_f64, ReportRecord};
use calderon::seqspaces::parse_weight_spec;
use calderon::suite::{run_criterion, SuiteConfig, SuiteScale, CRITERIA};
use calderon::weights::{ap_profile, global_ball_refinements, local_ball_refinements, w_class_ratio};
use calderon::{Error, Result, Scale, Sequence, Space, SpaceParams, Weight, Window};
use serde_json::{json, Value};

use crate::config::{emit, OUT_DIR_ENV};
use crate::{Cli, Command, CoupleArgs, InputArgs, OracleArgs, WindowArgs};

fn window(w: &WindowArgs) -> Result<Window> {
    Window::new(w.d, w.j, w.k)
}

fn weight(spec: &str) -> Result<Weight> {
    parse_weight_spec(spec)
}

/// Sequences from the input file, or `batch` random ones (`instance_rng(seed, i)`).
fn sequences(input: &InputArgs, w: &Window, seed: u64, quick: bool) -> Result<Vec<Sequence>> {
    if let Some(path) = &input.input {
        return Ok(vec![Sequence::parse(&fs::read_to_string(path)?, Some(*w))?]);
    }
    let shape: ShapeSpec = format!("{} d={} J={} K={}", input.shape, w.dim, w.finest_level, w.half_extent).parse()?;
    let n = if quick { input.batch.min(5) } else { input.batch };
    (0..n as u64)
        .map(|i| random_sequence(&mut instance_rng(seed, i), &shape))
        .collect()
}

fn couple_params(c: &CoupleArgs, scale: Scale) -> Result<(SpaceParams, SpaceParams)> {
    Ok((
        SpaceParams::new(c.s0, c.p0, c.q0, scale, weight(&c.w0)?)?,
        SpaceParams::new(c.s1, c.p1, c.q1, scale, weight(&c.w1)?)?,
    ))
}

fn couple_json(a: &SpaceParams, b: &SpaceParams, theta: f64) -> Value {
    let p = |x: &SpaceParams| json!({ "s": x.s, "p": json_f64(x.p), "q": json_f64(x.q), "weight": x.weight.to_string() });
    json!({ "scale": a.scale.to_string(), "P0": p(a), "P1": p(b), "theta": theta })
}

fn with(params: &Value, key: &str, v: Value) -> Value {
    let mut p = params.clone();
    p[key] = v;
    p
}

fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Norm { .. } => "norm",
        Command::FactorizeF { .. } => "factorize-f",
        Command::FactorizeB { .. } => "factorize-b",
        Command::FactorizeLp { .. } => "factorize-lp",
        Command::Oracle { .. } => "oracle",
        Command::Holder { .. } => "holder",
        Command::Apconst { .. } => "apconst",
        Command::Wclass { .. } => "wclass",
        Command::Maximal { .. } => "maximal",
        Command::Gap { .. } => "gap",
        Command::Embed { .. } => "embed",
        Command::Suite { .. } => "suite",
    }
}

/// Runs the command, writes the report and returns whether every record passed.
pub fn run(cli: &Cli) -> Result<bool> {
    let g = &cli.global;
    let exp = name(&cli.command);
    let records = records(cli)?;
    let dir: Option<PathBuf> = g.out.clone().or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from));
    match emit(exp, &records, dir.as_deref()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
        r => r?,
    }
    Ok(all_pass(&records))
}

fn records(cli: &Cli) -> Result<Vec<ReportRecord>> {
    let g = &cli.global;
    let (seed, quick, tol) = (g.seed, g.quick, g.quad_tol);
    let exp = name(&cli.command);
    let mut out = Vec::new();
    match &cli.command {
        Command::Norm { space, window: wa, input } => {
            let w = window(wa)?;
            let sp = SpaceParams::new(space.s, space.p, space.q, space.scale, weight(&space.weight)?)?;
            let params = json!({ "space": sp.to_string(), "window": w });
            let space = Space::new(sp, &w, tol)?;
            for (i, l) in sequences(input, &w, seed, quick)?.iter().enumerate() {
                let v = space.norm(l)?;
                out.push(ReportRecord::number(exp, i, "norm", v, v.is_finite() && v >= 0.0, with(&params, "support", json!(l.len()))));
            }
        }
        Command::FactorizeF { couple, window: wa, input, recon_tol } => {
            let w = window(wa)?;
            let (a, b) = couple_params(couple, Scale::F)?;
            let params = couple_json(&a, &b, couple.theta);
            let c = Couple::new(&a, &b, couple.theta, &w, tol)?;
            for (i, l) in sequences(input, &w, seed, quick)?.iter().enumerate() {
                let f = c.f_factorize(l)?;
                let m = f.metrics;
                let p = with(&params, "factorization", f.to_json());
                out.push(ReportRecord::number(exp, i, "recon_err", m.recon_err, m.recon_err <= *recon_tol, p.clone()));
                out.push(ReportRecord::number(exp, i, "uncaptured", f.uncaptured.len() as f64, f.uncaptured.is_empty(), params.clone()));
                out.push(ReportRecord::number(
                    exp,
                    i,
                    "achieved_constant",
                    m.achieved_constant,
                    m.achieved_constant >= 1.0 - 1e-12,
                    params.clone(),
                ));
            }
        }
        Command::FactorizeB { couple, window: wa, input, constant_tol } => {
            let w = window(wa)?;
            let (a, b) = couple_params(couple, Scale::B)?;
            let params = couple_json(&a, &b, couple.theta);
            let c = Couple::y_from_weights(&a, &b, couple.theta, &w, tol)?;
            for (i, l) in sequences(input, &w, seed, quick)?.iter().enumerate() {
                let f = c.b_factorize(l)?;
                let m = f.metrics;
                let dev = (m.achieved_constant - 1.0).abs();
                out.push(ReportRecord::number(
                    exp,
                    i,
                    "achieved_constant",
                    m.achieved_constant,
                    dev <= *constant_tol,
                    with(&params, "factorization", f.to_json()),
                ));
                out.push(ReportRecord::number(exp, i, "recon_err", m.recon_err, m.recon_err <= 1e-12, params.clone()));
            }
        }
        Command::FactorizeLp { couple, window: wa, input, batch, norm_tol } => {
            let w = window(wa)?;
            let (w0, w1) = (weight(&couple.w0)?, weight(&couple.w1)?);
            let params = json!({ "p0": json_f64(couple.p0), "p1": json_f64(couple.p1), "theta": couple.theta,
                                 "w0": w0.to_string(), "w1": w1.to_string(), "window": w });
            let fs: Vec<CellFunction> = match input {
                Some(path) => vec![CellFunction::parse(&fs::read_to_string(path)?)?],
                None => {
                    let n = if quick { (*batch).min(5) } else { *batch };
                    (0..n as u64)
                        .map(|i| random_dense_cell_function(&mut instance_rng(seed, i), &w))
                        .collect::<Result<_>>()?
                }
            };
            for (i, f) in fs.iter().enumerate() {
                let lp = lp_factorize(f, &w0, &w1, couple.theta, couple.p0, couple.p1, tol)?;
                out.push(ReportRecord::number(exp, i, "norm_rel_err", lp.norm_rel_err, lp.norm_rel_err <= *norm_tol, params.clone()));
                out.push(ReportRecord::number(exp, i, "recon_err", lp.recon_err, lp.recon_err <= 1e-12, params.clone()));
            }
        }
        Command::Oracle { couple, scale, window: wa, input, oracle, sandwich_tol } => {
            let w = window(wa)?;
            let (a, b) = couple_params(couple, *scale)?;
            let params = couple_json(&a, &b, couple.theta);
            let c = match scale {
                Scale::F => Couple::new(&a, &b, couple.theta, &w, tol)?,
                Scale::B => Couple::y_from_weights(&a, &b, couple.theta, &w, tol)?,
            };
            let OracleArgs { support_cap, oracle_tol, starts } = oracle;
            for (i, l) in sequences(input, &w, seed, quick)?.iter().enumerate() {
                let f = match scale {
                    Scale::F => c.f_factorize(l)?,
                    Scale::B => c.b_factorize(l)?,
                };
                let opts = OracleOptions {
                    support_cap: *support_cap,
                    tol: *oracle_tol,
                    starts: *starts,
                    seed: seed.wrapping_add(i as u64),
                };
                let o = c.oracle(l, &opts)?;
                let norm = f.metrics.norm_target;
                let ratio = if norm == 0.0 { 1.0 } else { o.value / norm };
                let p = with(&params, "evaluations", json!(o.evaluations));
                out.push(ReportRecord::number(exp, i, "oracle_value", o.value, o.value.is_finite(), p.clone()));
                out.push(ReportRecord::number(exp, i, "oracle_over_norm", ratio, ratio >= 1.0 - sandwich_tol, p.clone()));
                let gap = ratio - f.metrics.achieved_constant;
                out.push(ReportRecord::number(exp, i, "oracle_ratio_minus_constant", gap, gap <= *sandwich_tol, p));
            }
        }
        Command::Holder { couple, scale, window: wa, input, input1, slack } => {
            let w = window(wa)?;
            let (a, b) = couple_params(couple, *scale)?;
            let params = couple_json(&a, &b, couple.theta);
            let c = Couple::new(&a, &b, couple.theta, &w, tol)?;
            let first = sequences(input, &w, seed, quick)?;
            let second: Vec<Sequence> = match input1 {
                Some(path) => vec![Sequence::parse(&fs::read_to_string(path)?, Some(w))?],
                None => {
                    let other = InputArgs { input: None, ..input.clone() };
                    sequences(&other, &w, seed.wrapping_add(1), quick)?
                }
            };
            for (i, (l0, l1)) in first.iter().zip(&second).enumerate() {
                let h = c.holder(l0, l1, *slack)?;
                let ratio = if h.rhs == 0.0 { 0.0 } else { h.lhs_norm / h.rhs };
                out.push(ReportRecord::number(exp, i, "product_over_bound", ratio, h.ok, params.clone()));
            }
        }
        Command::Apconst { weight: ws, p, d, global, refinements, extent, expect, bound } => {
            let wt = weight(ws)?;
            let balls = if *global {
                global_ball_refinements(*d, *refinements)
            } else {
                local_ball_refinements(*d, *refinements, *extent)
            };
            let prof = ap_profile(&wt, *p, &balls, !*global, tol)?;
            let params = json!({ "weight": wt.to_string(), "p": p, "d": d,
                                 "scope": if *global { "global" } else { "local" } });
            for (i, e) in prof.estimates.iter().enumerate() {
                out.push(ReportRecord::number(exp, i, "estimate", *e, true, with(&params, "refinement", json!(i + 1))));
            }
            let last = prof.estimates.last().copied().unwrap_or(f64::INFINITY);
            let pass = match expect.as_deref() {
                None => true,
                Some("bounded") => !prof.diverging && last < *bound,
                Some("diverging") => prof.diverging,
                Some(other) => {
                    return Err(Error::InvalidParameter(format!("--expect takes bounded or diverging, got `{other}`")))
                }
            };
            out.push(ReportRecord::new(exp, 0, "diverging", Value::from(prof.diverging), pass, params));
        }
        Command::Wclass { w0, w1, theta, p0, p1, window: wa, floor } => {
            let w = window(wa)?;
            let (a, b) = (weight(w0)?, weight(w1)?);
            let r = w_class_ratio(&a, &b, *theta, *p0, *p1, &w, tol)?;
            let params = json!({ "w0": a.to_string(), "w1": b.to_string(), "theta": theta,
                                 "p0": json_f64(*p0), "p1": json_f64(*p1), "window": w });
            let pass = floor.is_none_or(|f| r.min_ratio > f);
            out.push(ReportRecord::number(exp, 0, "min_ratio", r.min_ratio, pass, with(&params, "argmin", json!(r.argmin.to_string()))));
            out.push(ReportRecord::number(exp, 0, "max_ratio", r.max_ratio, true, with(&params, "argmax", json!(r.argmax.to_string()))));
        }
        Command::Maximal { weight: ws, p, q, window: wa, inputs, batch, family_size, terms } => {
            let wt = weight(ws)?;
            let families: Vec<Vec<CellFunction>> = if inputs.is_empty() {
                let w = window(wa)?;
                let n = if quick { (*batch).min(5) } else { *batch };
                (0..n as u64)
                    .map(|i| random_family(&mut instance_rng(seed, i), &w, *family_size, *terms))
                    .collect::<Result<_>>()?
            } else {
                vec![inputs.iter().map(|p| read_cell_function(p)).collect::<Result<_>>()?]
            };
            let w = *families[0][0].window();
            let masses = wt.mass_table(&w, tol)?;
            let params = json!({ "weight": wt.to_string(), "p": p, "q": json_f64(*q), "window": w });
            for (i, fam) in families.iter().enumerate() {
                let c = vv_maximal_constant_with(fam, *p, *q, masses.finest())?;
                out.push(ReportRecord::number(exp, i, "vv_constant", c, c >= 1.0 - 1e-12, params.clone()));
            }
        }
        Command::Gap { d, s0, s1, p0, p1, theta, j, k } => {
            let spec = GapSpec { d: *d, s0: *s0, s1: *s1, p0: *p0, p1: *p1, theta: *theta };
            let w = Window::new(*d, *j, *k)?;
            let ms: Vec<u32> = (0..*j).collect();
            out.extend(gap_report(&spec, &w, &ms)?.records());
        }
        Command::Embed { s0, p0, s1, p1, theta, weight: ws, window: wa, input } => {
            let w = window(wa)?;
            let wt = weight(ws)?;
            let chain = EmbeddingChain::new(*s0, *p0, *s1, *p1, *theta, &wt, &w, tol)?;
            let params = json!({ "s0": s0, "p0": json_f64(*p0), "s1": s1, "p1": json_f64(*p1),
                                 "theta": theta, "weight": wt.to_string(), "window": w });
            let (mut m01, mut m12) = (0.0f64, 0.0f64);
            for (i, l) in sequences(input, &w, seed, quick)?.iter().enumerate() {
                if let Some(r) = chain.check(l)? {
                    m01 = m01.max(r.c01);
                    m12 = m12.max(r.c12);
                    out.push(ReportRecord::number(exp, i, "c01", r.c01, r.c01.is_finite(), params.clone()));
                    out.push(ReportRecord::number(exp, i, "c12", r.c12, r.c12.is_finite(), params.clone()));
                }
            }
            out.push(ReportRecord::number(exp, 0, "batch_max_c01", m01, m01.is_finite(), params.clone()));
            out.push(ReportRecord::number(exp, 0, "batch_max_c12", m12, m12.is_finite(), params));
        }
        Command::Suite { criteria } => {
            let cfg = SuiteConfig::new(seed, if quick { SuiteScale::Quick } else { SuiteScale::Full });
            let ids: Vec<u8> = if criteria.is_empty() {
                CRITERIA.iter().map(|(i, _)| *i).collect()
            } else {
                criteria.clone()
            };
            for id in ids {
                let o = run_criterion(id, &cfg)?;
                eprintln!("{o}");
                out.push(ReportRecord::new(
                    exp,
                    id as usize,
                    "criterion",
                    Value::from(o.name.clone()),
                    o.pass,
                    json!({ "detail": o.detail, "elapsed_s": o.elapsed_s, "seed": seed, "quick": quick }),
                ));
                out.extend(o.records);
            }
        }
    }
    Ok(out)
}

fn read_cell_function(path: &Path) -> Result<CellFunction> {
    CellFunction::parse(&fs::read_to_string(path)?)
}
