use calderon::calderon::{f_factorize, lp_factorize, oracle_calderon_norm, Couple, OracleOptions};
use calderon::counterexamples::EmbeddingChain;
use calderon::instances::{generate_instances, instance_rng, random_sequence, ShapeSpec};
use calderon::maximal::CellFunction;
use calderon::seqspaces::b_norm;
use calderon::{DyadicIndex, Sequence, SpaceParams, Weight, Window};

#[test]
fn holder_f_scale_power_weights_over_seeds() {
    let w = Window::new(1, 5, 1).unwrap();
    let p0 = SpaceParams::f(0.5, 1.0, 4.0, Weight::power(0.5)).unwrap();
    let p1 = SpaceParams::f(-0.5, 2.0, 2.0, Weight::power(-0.5)).unwrap();
    let couple = Couple::new(&p0, &p1, 0.5, &w, 1e-10).unwrap();
    let shape = ShapeSpec::sparse(w, 16).with_complex(true);
    for seed in 0..100 {
        let l0 = random_sequence(&mut instance_rng(seed, 0), &shape).unwrap();
        let l1 = random_sequence(&mut instance_rng(seed, 1), &shape).unwrap();
        assert!(couple.holder(&l0, &l1, 1e-10).unwrap().ok, "seed {seed}");
    }
}

#[test]
fn holder_disjoint_supports() {
    let w = Window::new(1, 2, 1).unwrap();
    let p = SpaceParams::b(0.0, 2.0, 2.0, Weight::one()).unwrap();
    let couple = Couple::new(&p, &p, 0.5, &w, 1e-10).unwrap();
    let a = Sequence::from_entries(w, [(DyadicIndex::new(0, vec![0]), 1.0)]).unwrap();
    let b = Sequence::from_entries(w, [(DyadicIndex::new(1, vec![0]), 1.0)]).unwrap();
    let h = couple.holder(&a, &b, 1e-12).unwrap();
    assert!(h.product.is_empty());
    assert_eq!(h.lhs_norm, 0.0);
    assert!(h.ok);
}

#[test]
fn oracle_matches_lp_factorization_on_one_level() {
    // window with level 0 only: the b-norm is the L_p norm of a cellwise constant function
    let w = Window::new(1, 0, 3).unwrap();
    let (w0, w1) = (Weight::power(0.5), Weight::exponential(-0.5));
    let (p0, p1, theta) = (1.0, 4.0, 0.4);
    let values = vec![1.5, 0.25, 3.0, 0.0, 2.0, 0.75];
    let f = CellFunction::new(w, values.clone()).unwrap();
    let lp = lp_factorize(&f, &w0, &w1, theta, p0, p1, 1e-12).unwrap();
    let lambda = Sequence::from_entries(w, w.indices_at(0).zip(values).collect::<Vec<_>>()).unwrap();
    let a = SpaceParams::b(0.0, p0, 2.0, w0).unwrap();
    let b = SpaceParams::b(0.0, p1, 1.0, w1).unwrap();
    let opts = OracleOptions {
        tol: 1e-10,
        ..OracleOptions::default()
    };
    let o = oracle_calderon_norm(&lambda, &a, &b, theta, &opts, 1e-12).unwrap();
    let product = lp.norm0.powf(1.0 - theta) * lp.norm1.powf(theta);
    assert!((o.value - product).abs() <= 1e-6 * product, "{} vs {product}", o.value);
}

#[test]
fn f_factorization_both_infinite_unweighted() {
    let w = Window::new(1, 4, 1).unwrap();
    let p0 = SpaceParams::f(1.0, 1.0, f64::INFINITY, Weight::one()).unwrap();
    let p1 = SpaceParams::f(0.0, 2.0, f64::INFINITY, Weight::one()).unwrap();
    for lambda in generate_instances(11, 100, &ShapeSpec::sparse(w, 10)).unwrap() {
        let f = f_factorize(&lambda, &p0, &p1, 0.5, 1e-10).unwrap();
        assert!(f.metrics.recon_err <= 1e-12);
        assert!(f.uncaptured.is_empty());
        assert!(f.metrics.achieved_constant.is_finite());
    }
}

#[test]
fn f_factorization_symmetric_couple() {
    let w = Window::new(1, 4, 1).unwrap();
    let p = SpaceParams::f(0.5, 2.0, 2.0, Weight::power(0.5)).unwrap();
    for lambda in generate_instances(12, 50, &ShapeSpec::sparse(w, 10)).unwrap() {
        let f = f_factorize(&lambda, &p, &p, 0.3, 1e-10).unwrap();
        assert!(f.metrics.recon_err <= 1e-12);
        assert!((f.metrics.achieved_constant - 1.0).abs() <= 0.1);
    }
}

#[test]
fn embedding_batch_max_is_window_stable() {
    let mut maxes = Vec::new();
    for j in [5u32, 6] {
        let w = Window::new(1, j, 1).unwrap();
        let chain = EmbeddingChain::new(1.0, 1.0, 0.0, 2.0, 0.5, &Weight::one(), &w, 1e-10).unwrap();
        let (mut c01, mut c12) = (0.0f64, 0.0f64);
        for lambda in generate_instances(13, 100, &ShapeSpec::sparse(w, 12)).unwrap() {
            let r = chain.check(&lambda).unwrap().unwrap();
            assert!(r.c01.is_finite() && r.c12.is_finite());
            c01 = c01.max(r.c01);
            c12 = c12.max(r.c12);
        }
        maxes.push((c01, c12));
    }
    let close = |a: f64, b: f64| (a - b).abs() <= 0.25 * a.min(b);
    assert!(close(maxes[0].0, maxes[1].0), "{maxes:?}");
    assert!(close(maxes[0].1, maxes[1].1), "{maxes:?}");
}

#[test]
fn b_norm_y_volumes_match_unweighted() {
    let w = Window::new(2, 2, 1).unwrap();
    let y = calderon::YTable::volumes(&w);
    let p = SpaceParams::b(0.3, 4.0 / 3.0, 3.0, Weight::one()).unwrap();
    for lambda in generate_instances(14, 20, &ShapeSpec::sparse(w, 8)).unwrap() {
        let a = calderon::seqspaces::b_norm_y(&lambda, p.s, p.p, p.q, &y).unwrap();
        let b = b_norm(&lambda, &p).unwrap();
        assert!((a - b).abs() <= 1e-13 * b);
    }
}
