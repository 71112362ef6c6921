mod common;

use common::test_rng;
use hmmlab_core::convergence::{
    bound_b1s, check_lemma34, check_lemma34_segment, check_lemma_a1, diff_series,
    empirical_bconv_exponent, gen_feasible, gen_tight, laplace_events,
    laplace_stabilization_report, verify_ineq_system, BconvOutcome, DecayOptions, LemmaA1Check,
};
use hmmlab_core::map::{prefix_series, LaplaceMapDp, SolverConfig};
use hmmlab_core::model::{sample_trajectory, ExpPower, LaplaceGaussian, LinearGaussian};
use rand::Rng;

#[test]
fn laplace_freezing_at_scale() {
    for seed in 0..3 {
        let t = sample_trajectory(&LaplaceGaussian, 2000, seed).unwrap();
        let dp = LaplaceMapDp::new(&t.observations).unwrap();
        let rep = laplace_stabilization_report(&dp, 1e-8);
        assert!(!rep.events.is_empty());
        assert!(
            rep.all_pass(),
            "seed {seed}: {} violations",
            rep.violations()
        );
    }
}

#[test]
fn stabilization_report_matches_naive_recomputation() {
    let t = sample_trajectory(&LaplaceGaussian, 150, 7).unwrap();
    let y = &t.observations;
    let dp = LaplaceMapDp::new(y).unwrap();
    let rep = laplace_stabilization_report(&dp, 1e-8);
    let events = laplace_events(y);
    assert_eq!(
        rep.events.iter().map(|e| e.index).collect::<Vec<_>>(),
        events
    );
    for e in &rep.events {
        let m = e.index;
        let base = dp.path_at(m + 2).unwrap();
        let mut value_dev: f64 = 0.0;
        let mut prefix_dev: f64 = 0.0;
        for n in m + 2..=y.len() {
            let p = dp.path_at(n).unwrap();
            value_dev = value_dev.max((p[m] - y[m]).abs());
            for j in 0..=m {
                prefix_dev = prefix_dev.max((p[j] - base[j]).abs());
            }
        }
        assert_eq!(e.value_deviation, value_dev);
        assert_eq!(e.prefix_deviation, prefix_dev);
    }
}

/// `P(Z + W ≥ t)` for `Z` Laplace with scale 2 and `W` standard normal,
/// by trapezoidal quadrature over `W`.
fn laplace_plus_normal_survival(t: f64) -> f64 {
    let laplace_sf = |s: f64| {
        if s >= 0.0 {
            0.5 * (-s / 2.0).exp()
        } else {
            1.0 - 0.5 * (s / 2.0).exp()
        }
    };
    integrate(|w| normal_pdf(w) * laplace_sf(t - w))
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn integrate(f: impl Fn(f64) -> f64) -> f64 {
    let (lo, hi, k) = (-12.0, 12.0, 2400);
    let h = (hi - lo) / k as f64;
    (0..=k)
        .map(|i| {
            let w = if i == 0 || i == k { 0.5 } else { 1.0 };
            w * f(lo + i as f64 * h)
        })
        .sum::<f64>()
        * h
}

#[test]
fn laplace_event_frequency() {
    // Given the middle observation noise e, both increments are independent:
    // P(A_k) = ∫ φ(e) P(Z + W ≥ 1 - e) P(Z + W ≥ 1 + e) de.
    let p = integrate(|e| {
        normal_pdf(e)
            * laplace_plus_normal_survival(1.0 - e)
            * laplace_plus_normal_survival(1.0 + e)
    });
    let mut hits = 0usize;
    let mut slots = 0usize;
    for seed in 0..50 {
        let t = sample_trajectory(&LaplaceGaussian, 2000, seed).unwrap();
        hits += laplace_events(&t.observations).len();
        slots += 1998;
    }
    let freq = hits as f64 / slots as f64;
    let sd = (p * (1.0 - p) / slots as f64).sqrt();
    // neighbouring events are dependent; allow a generous multiple of the iid sd
    assert!((freq - p).abs() < 6.0 * sd, "freq {freq} vs {p}");
}

#[test]
fn gaussian_prefix_decays_exponentially() {
    let m = LinearGaussian::stationary(0.9, 1.0).unwrap();
    let cfg = SolverConfig::default();
    for seed in 0..5 {
        let t = sample_trajectory(&m, 60, seed).unwrap();
        let ps = prefix_series(&m, &t.observations, 1, &cfg).unwrap();
        let opts = DecayOptions {
            window: Some((10, 60)),
            ..DecayOptions::default()
        };
        let rep = diff_series(&ps, &opts).unwrap();
        let fit = rep.exp_fit.unwrap();
        assert!(fit.slope < 0.0 && fit.r2 >= 0.95, "{fit:?}");
        let b = empirical_bconv_exponent(&rep, 2.0, opts.noise_floor).unwrap();
        assert_eq!(b.outcome, BconvOutcome::Pass);
    }
}

#[test]
fn lemma34_on_random_models() {
    let mut rng = test_rng(34);
    let cfg = SolverConfig::default();
    for k in 0..20 {
        let a = rng.random_range(-0.95..0.95);
        let n = rng.random_range(1..=30);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let u0 = rng.random_range(-3.0..3.0);
        let u1 = rng.random_range(-3.0..3.0);
        let rep = if k % 2 == 0 {
            let m = LinearGaussian::stationary(a, rng.random_range(0.5..2.0)).unwrap();
            check_lemma34_segment(&m, &y, u0, u1, &cfg, 1e-4).unwrap()
        } else {
            let m = ExpPower::new(a, rng.random_range(0.5..2.0), 0.5, 0.5, 0.5).unwrap();
            check_lemma34_segment(&m, &y, u0, u1, &cfg, 1e-4).unwrap()
        };
        assert!(rep.all_pass(), "instance {k}");
        assert!(rep.integrated_b1.is_finite());
    }
    let m = LinearGaussian::standard();
    let r = check_lemma34(&m, &[0.3, -1.0, 2.0], 0.5, &cfg, 1e-4).unwrap();
    assert_eq!(r.rows.len(), 3);
    assert!(r.all_pass() && r.worst_margin() > 0.0);
}

#[test]
fn b1_bound_on_generated_systems() {
    let e = std::f64::consts::E;
    let mut checked = 0;
    for &theta in &[1.0, 2.0, 5.0] {
        let n0 = (theta * theta * e).ceil() as usize;
        for k in 0..60u64 {
            let n = n0 + (k as usize * 7) % (200 - n0 + 1);
            let seq = gen_feasible(k, n, theta).unwrap();
            assert!(verify_ineq_system(&seq.b, &seq.c).unwrap().holds);
            assert!(seq.c.iter().all(|&c| c <= theta));
            match check_lemma_a1(&seq, theta).unwrap() {
                LemmaA1Check::Checked { holds, .. } => {
                    assert!(holds);
                    checked += 1;
                }
                LemmaA1Check::NotApplicable(why) => panic!("{why}"),
            }
        }
    }
    assert_eq!(checked, 180);
}

#[test]
fn tight_systems_stay_feasible_and_bounded() {
    for &theta in &[1.0, 2.0, 5.0] {
        let n = (theta * theta * std::f64::consts::E).ceil() as usize + 5;
        let seq = gen_tight(n, theta, 0.999).unwrap();
        assert!(verify_ineq_system(&seq.b, &seq.c).unwrap().holds);
        assert!(seq.b[0] <= bound_b1s(theta, n));
    }
    // a violated system is reported, not silently accepted
    let bad = verify_ineq_system(&[1.0, 1.0], &[0.1, 0.1]).unwrap();
    assert!(!bad.holds && bad.first_violation == Some(0));
}
