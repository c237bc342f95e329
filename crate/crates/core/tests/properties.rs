use calderon::calderon::{f_exponents, f_factorize, Couple};
use calderon::instances::{instance_rng, random_cell_function, random_sequence, random_weight, ShapeSpec};
use calderon::maximal::m_loc;
use calderon::seqspaces::{
    b_norm, b_norm_y, cutoff, exponent_ratio, f_norm, interpolate_exponent, lift_seq, norm, ring_convergence_profile,
};
use calderon::weights::{ap_constant, combine_exponents, local_ball_refinements};
use calderon::{Scale, Sequence, SpaceParams, Weight, Window, YTable};
use num_complex::Complex64;
use proptest::prelude::*;

const EXPS: [f64; 6] = [0.5, 1.0, 4.0 / 3.0, 2.0, 4.0, f64::INFINITY];

fn window() -> Window {
    Window::new(1, 4, 1).unwrap()
}

fn seq(seed: u64, n: usize) -> Sequence {
    let shape = ShapeSpec::sparse(window(), n).with_complex(seed.is_multiple_of(2));
    random_sequence(&mut instance_rng(seed, 0), &shape).unwrap()
}

fn params(seed: u64, scale: Scale, p: usize, q: usize, s: f64) -> SpaceParams {
    let w = random_weight(&mut instance_rng(seed, 1), &window()).unwrap();
    let p = if scale == Scale::F { EXPS[p % 5] } else { EXPS[p % 6] };
    SpaceParams::new(s, p, EXPS[q % 6], scale, w).unwrap()
}

fn scale_of(b: bool) -> Scale {
    if b {
        Scale::B
    } else {
        Scale::F
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn homogeneity(seed in any::<u64>(), n in 1usize..20, p in 0usize..6, q in 0usize..6,
                   s in -1.0f64..1.0, b in any::<bool>(), re in -4.0f64..4.0, im in -4.0f64..4.0) {
        let sp = params(seed, scale_of(b), p, q, s);
        let l = seq(seed, n);
        let c = Complex64::new(re, im);
        let lhs = norm(&l.scaled(c), &sp).unwrap();
        let rhs = c.norm() * norm(&l, &sp).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
    }

    #[test]
    fn r_triangle(seed in any::<u64>(), n in 1usize..20, p in 0usize..6, q in 0usize..6,
                  s in -1.0f64..1.0, b in any::<bool>()) {
        let sp = params(seed, scale_of(b), p, q, s);
        let l = seq(seed, n);
        let m = seq(seed.wrapping_add(1), n);
        let r = sp.p.min(sp.q).min(1.0);
        let lhs = norm(&l.add(&m).unwrap(), &sp).unwrap().powf(r);
        let rhs = norm(&l, &sp).unwrap().powf(r) + norm(&m, &sp).unwrap().powf(r);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }

    #[test]
    fn lattice_monotone(seed in any::<u64>(), n in 1usize..20, p in 0usize..6, q in 0usize..6,
                        s in -1.0f64..1.0, b in any::<bool>(), shrink in 0.0f64..1.0) {
        let sp = params(seed, scale_of(b), p, q, s);
        let l = seq(seed, n);
        let smaller = l.map(|idx, v| v * if idx.level % 2 == 0 { shrink } else { 1.0 });
        prop_assert!(norm(&smaller, &sp).unwrap() <= norm(&l, &sp).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn q_monotone(seed in any::<u64>(), n in 1usize..20, p in 0usize..5, q0 in 0usize..6, q1 in 0usize..6,
                  s in -1.0f64..1.0, b in any::<bool>()) {
        let (lo, hi) = (q0.min(q1), q0.max(q1));
        let a = params(seed, scale_of(b), p, lo, s);
        let c = SpaceParams { q: EXPS[hi], ..a.clone() };
        let l = seq(seed, n);
        prop_assert!(norm(&l, &c).unwrap() <= norm(&l, &a).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn f_equals_b_on_diagonal(seed in any::<u64>(), n in 1usize..30, p in 0usize..5, s in -1.0f64..1.0) {
        let f = params(seed, Scale::F, p, p, s);
        let b = SpaceParams { scale: Scale::B, ..f.clone() };
        let l = seq(seed, n);
        let (x, y) = (f_norm(&l, &f).unwrap(), b_norm(&l, &b).unwrap());
        prop_assert!((x - y).abs() <= 1e-12 * x);
    }

    #[test]
    fn y_table_of_masses_is_the_weighted_norm(seed in any::<u64>(), n in 1usize..30, p in 0usize..6,
                                              q in 0usize..6, s in -1.0f64..1.0) {
        let b = params(seed, Scale::B, p, q, s);
        let l = seq(seed, n);
        let y = YTable::from_weight(&b.weight, &window(), 1e-8).unwrap();
        prop_assert_eq!(b_norm_y(&l, s, b.p, b.q, &y).unwrap(), b_norm(&l, &b).unwrap());
    }

    #[test]
    fn lift_shifts_smoothness(seed in any::<u64>(), n in 1usize..20, p in 0usize..6, q in 0usize..6,
                              s in -1.0f64..1.0, sigma in -2.0f64..2.0, b in any::<bool>()) {
        let sp = params(seed, scale_of(b), p, q, s);
        let l = seq(seed, n);
        let lifted = norm(&lift_seq(&l, sigma), &sp.with_s(s - sigma).unwrap()).unwrap();
        let base = norm(&l, &sp).unwrap();
        prop_assert!((lifted - base).abs() <= 1e-12 * base);
    }

    #[test]
    fn finite_sequences_are_ring_convergent(seed in any::<u64>(), n in 1usize..20, p in 0usize..6,
                                            q in 0usize..6, b in any::<bool>()) {
        let sp = params(seed, scale_of(b), p, q, 0.0);
        let l = seq(seed, n);
        let prof = ring_convergence_profile(&l, &sp, &[0, 2, 4, 16]).unwrap();
        prop_assert_eq!(*prof.last().unwrap(), 0.0);
        prop_assert!(prof.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        prop_assert_eq!(cutoff(&l, 16), l);
    }

    #[test]
    fn text_round_trip(seed in any::<u64>(), n in 0usize..20) {
        let l = seq(seed, n);
        prop_assert_eq!(Sequence::parse(&l.to_text(), None).unwrap(), l);
    }

    #[test]
    fn combine_exponents_sum_to_one(theta in 0.01f64..0.99, p0 in 0usize..5, p1 in 0usize..5) {
        let (a, b) = combine_exponents(theta, EXPS[p0], EXPS[p1]);
        prop_assert!((a + b - 1.0).abs() < 1e-14);
        let p = interpolate_exponent(EXPS[p0], EXPS[p1], theta);
        prop_assert!((1.0 / p - (1.0 - theta) / EXPS[p0] - theta / EXPS[p1]).abs() < 1e-14);
    }

    #[test]
    fn exponent_identities(s0 in -2.0f64..2.0, s1 in -2.0f64..2.0, p0 in 0.25f64..8.0, p1 in 0.25f64..8.0,
                           q0 in 0usize..6, q1 in 0usize..6, theta in 0.01f64..0.99) {
        let (q0, q1) = (EXPS[q0], EXPS[q1]);
        let e = f_exponents((s0, p0, q0), (s1, p1, q1), theta);
        prop_assert!(((1.0 - theta) * e.gamma + theta * e.delta).abs() < 1e-12);
        prop_assert!(((1.0 - theta) * e.u + theta * e.v).abs() < 1e-12);
        prop_assert!((e.u + s0 - e.s * exponent_ratio(e.q, q0)).abs() < 1e-12);
        prop_assert!((e.v + s1 - e.s * exponent_ratio(e.q, q1)).abs() < 1e-12);
    }

    #[test]
    fn ap_classes_nest(alpha in -0.9f64..0.9, p in 1.2f64..4.0, dp in 0.1f64..3.0) {
        let balls = local_ball_refinements(1, 4, 1.0).pop().unwrap();
        let w = Weight::power(alpha);
        let a = ap_constant(&w, p, &balls, true, 1e-8).unwrap().constant;
        let b = ap_constant(&w, p + dp, &balls, true, 1e-8).unwrap().constant;
        prop_assert!(b <= a * (1.0 + 1e-9));
        prop_assert!(a >= 1.0 - 1e-9);
    }

    #[test]
    fn b_factorization_attains_one(seed in any::<u64>(), n in 1usize..30, t in prop::array::uniform6(0usize..6),
                                   theta in 0.05f64..0.95) {
        let w = window();
        let mut rng = instance_rng(seed, 2);
        let y0 = YTable::from_weight(&random_weight(&mut rng, &w).unwrap(), &w, 1e-8).unwrap();
        let y1 = YTable::from_weight(&random_weight(&mut rng, &w).unwrap(), &w, 1e-8).unwrap();
        let t0 = (t[0] as f64 / 3.0 - 1.0, EXPS[t[1]], EXPS[t[2]]);
        let t1 = (t[3] as f64 / 3.0 - 1.0, EXPS[t[4]], EXPS[t[5]]);
        let couple = Couple::from_y(t0, t1, theta, &y0, &y1).unwrap();
        let f = couple.b_factorize(&seq(seed, n)).unwrap();
        prop_assert!((f.metrics.achieved_constant - 1.0).abs() < 1e-9);
        prop_assert!(f.metrics.recon_err < 1e-12);
    }

    #[test]
    fn f_factorization_reconstructs(seed in any::<u64>(), n in 1usize..30, p in prop::array::uniform4(0usize..5),
                                    qi in prop::array::uniform2(0usize..6), theta in 0.05f64..0.95) {
        let w = window();
        let mut rng = instance_rng(seed, 3);
        let a = SpaceParams::f(0.5, EXPS[p[0]], EXPS[qi[0]], random_weight(&mut rng, &w).unwrap()).unwrap();
        let b = SpaceParams::f(-0.5, EXPS[p[1]], EXPS[qi[1]], random_weight(&mut rng, &w).unwrap()).unwrap();
        match f_factorize(&seq(seed, n), &a, &b, theta, 1e-8) {
            Ok(f) => {
                prop_assert!(f.metrics.recon_err < 1e-12);
                prop_assert!(f.uncaptured.is_empty());
                prop_assert!(f.metrics.achieved_constant >= 1.0 - 1e-12);
            }
            Err(calderon::Error::DegenerateSingular(_)) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn maximal_dominates(seed in any::<u64>(), terms in 1usize..8) {
        let f = random_cell_function(&mut instance_rng(seed, 4), &window(), terms).unwrap();
        let m = m_loc(&f);
        prop_assert!(m.values().iter().zip(f.values()).all(|(a, b)| a >= b));
        let mm = m_loc(&m);
        prop_assert!(mm.values().iter().zip(m.values()).all(|(a, b)| a >= b));
    }
}
