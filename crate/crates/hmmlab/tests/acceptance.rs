//! Acceptance suite: runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion. Exits nonzero if any fails.

#[path = "../../core/tests/common/kalman.rs"]
mod kalman;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use hmmlab::config::{Command, ExperimentConfig};
use hmmlab::output::{write_outputs, Check};
use hmmlab_core::convergence::{
    bound_b1s, check_lemma34_segment, check_lemma_a1, diff_series, empirical_bconv_exponent,
    gen_feasible, laplace_stabilization_report, verify_ineq_system, BconvOutcome, DecayOptions,
    LemmaA1Check,
};
use hmmlab_core::divergence::{closed_form_map, track_jstar, DivergenceModel};
use hmmlab_core::map::{prefix_series, solve_constrained, solve_map, LaplaceMapDp, SolverConfig};
use hmmlab_core::model::{
    sample_trajectory, ContinuousHmm, DiscreteHmm, ExpPower, GaussianEmission, LaplaceGaussian,
    LinearGaussian,
};
use hmmlab_core::rng::{stream_rng, StreamRng};
use hmmlab_core::viterbi::{brute_force_map, renewal_times, viterbi};
use rand::Rng;
use serde_json::json;

/// Stream id for instance generation inside this suite.
const SUITE: u64 = 99;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("kalman_equivalence", kalman_equivalence),
        ("exponential_prefix_decay", exponential_prefix_decay),
        ("laplace_freezing", laplace_freezing),
        ("decoder_exactness", decoder_exactness),
        ("d_set_freezing", d_set_freezing),
        ("divergence_oracle_equality", divergence_oracle_equality),
        ("divergence_growth", divergence_growth),
        ("sensitivity_inequalities", sensitivity_inequalities),
        ("b1_decay_bound", b1_decay_bound),
        ("chain_rule_consistency", chain_rule_consistency),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} [{:>2}] {name}: {} ({secs:.2} s)",
            if o.pass { "PASS" } else { "FAIL" },
            k + 1,
            o.detail
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn within(elapsed: Duration, limit_secs: f64) -> bool {
    elapsed.as_secs_f64() < limit_secs
}

fn kalman_equivalence() -> Outcome {
    let start = Instant::now();
    let m = LinearGaussian::stationary(0.9, 1.0).unwrap();
    let cfg = SolverConfig::default();
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let y = sample_trajectory(&m, 300, seed).unwrap().observations;
        let sol = solve_map(&m, &y, &cfg).unwrap();
        let oracle = kalman::rts_smoother(0.9, 1.0, 1.0, 1.0, m.init_var, &y);
        for (x, o) in sol.path.iter().zip(&oracle) {
            worst = worst.max((x - o).abs());
        }
    }
    let t = start.elapsed();
    outcome(
        worst <= 1e-6 && within(t, 2.0),
        format!("max |MAP - smoother| = {worst:.2e} (tol 1e-6) over 20 seeds, n=300, {:.2} s (limit 2 s)", t.as_secs_f64()),
    )
}

fn exponential_prefix_decay() -> Outcome {
    let m = LinearGaussian::stationary(0.9, 1.0).unwrap();
    let cfg = SolverConfig::default();
    let opts = DecayOptions {
        window: Some((10, 60)),
        ..DecayOptions::default()
    };
    let mut worst_slope = f64::NEG_INFINITY;
    let mut worst_r2 = f64::INFINITY;
    let mut failures = 0;
    for seed in 0..20 {
        let y = sample_trajectory(&m, 60, seed).unwrap().observations;
        let ps = prefix_series(&m, &y, 1, &cfg).unwrap();
        let rep = diff_series(&ps, &opts).unwrap();
        let bconv = empirical_bconv_exponent(&rep, 2.0, opts.noise_floor).unwrap();
        match rep.exp_fit {
            Some(f) => {
                worst_slope = worst_slope.max(f.slope);
                worst_r2 = worst_r2.min(f.r2);
                if !(f.slope < 0.0 && f.r2 >= 0.95 && bconv.outcome == BconvOutcome::Pass) {
                    failures += 1;
                }
            }
            None => failures += 1,
        }
    }
    outcome(
        failures == 0,
        format!(
            "20 seeds, N=60, window [10,60]: worst slope {worst_slope:.3}, worst r² {worst_r2:.4} (min 0.95), bconv β=2; {failures} failures"
        ),
    )
}

fn laplace_freezing() -> Outcome {
    let mut events = 0;
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let y = sample_trajectory(&LaplaceGaussian, 2000, seed)
            .unwrap()
            .observations;
        let dp = LaplaceMapDp::new(&y).unwrap();
        let rep = laplace_stabilization_report(&dp, 1e-8);
        events += rep.events.len();
        violations += rep.violations();
        for e in &rep.events {
            worst = worst.max(e.value_deviation.max(e.prefix_deviation));
        }
    }
    outcome(
        violations == 0 && events > 0,
        format!("10 seeds, N=2000: {events} events, {violations} violations, worst deviation {worst:.1e} (tol 1e-8)"),
    )
}

fn random_row(rng: &mut StreamRng, d: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..d).map(|_| rng.random::<f64>() + 0.01).collect();
    let s: f64 = w.iter().sum();
    let mut p: Vec<f64> = w.iter().map(|v| v / s).collect();
    let head: f64 = p[..d - 1].iter().sum();
    p[d - 1] = 1.0 - head;
    p
}

fn decoder_exactness() -> Outcome {
    let mut rng = stream_rng(4, SUITE);
    let (d, n) = (3, 7);
    let mut mismatches = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let init = random_row(&mut rng, d);
        let trans: Vec<f64> = (0..d).flat_map(|_| random_row(&mut rng, d)).collect();
        let means = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let sds = (0..d).map(|_| rng.random_range(0.5..1.5)).collect();
        let model =
            DiscreteHmm::new(init, trans, GaussianEmission::new(means, sds).unwrap()).unwrap();
        let y = model.sample(n, rng.random()).unwrap().observations;
        let v = viterbi(&model, &y).unwrap();
        let (bp, bs) = brute_force_map(&model, &y).unwrap();
        let diff = (v.log_score - bs).abs();
        worst = worst.max(diff);
        if bp != v.path || diff > 1e-12 {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("500 instances, d=3, n=7: {mismatches} mismatches, worst score gap {worst:.1e} (tol 1e-12)"),
    )
}

fn d_set_freezing() -> Outcome {
    let model = DiscreteHmm::new(
        vec![0.5, 0.5],
        vec![0.8, 0.2, 0.3, 0.7],
        GaussianEmission::new(vec![0.0, 6.0], vec![1.0, 1.0]).unwrap(),
    )
    .unwrap();
    let n = 200;
    let mut renewals = 0;
    let mut violations = 0;
    for seed in 0..10 {
        let y = model.sample(n, seed).unwrap().observations;
        let paths: Vec<Vec<usize>> = (1..=n)
            .map(|k| viterbi(&model, &y[..k]).unwrap().path)
            .collect();
        for i0 in 0..2 {
            for &r in &renewal_times(&model, &y, i0).times {
                renewals += 1;
                // horizons k = r+1..=N in 1-based terms
                violations += paths[r..].iter().filter(|p| p[r] != i0).count();
            }
        }
    }
    outcome(
        violations == 0 && renewals > 0,
        format!("strong 2-state model, N=200, 10 seeds: {renewals} renewal times, {violations} violations"),
    )
}

fn divergence_oracle_equality() -> Outcome {
    let model = DivergenceModel::new(0.1).unwrap();
    let mut rng = stream_rng(6, SUITE);
    let mut instances = 0;
    let mut path_mismatch = 0;
    let mut beaten = 0;
    for seed in 0..200 {
        for n in 2..=8 {
            instances += 1;
            let p = model.sample(n, seed).unwrap();
            let est = closed_form_map(&p.y).unwrap();
            let vmax = est.jstar + 3;
            let (v, _) = model.brute_force_v(&p.y, vmax).unwrap();
            if v != est.v_hat {
                path_mismatch += 1;
            }
            let best = model.log_likelihood(&est.u_hat, &est.v_hat, &p.y).unwrap();
            for _ in 0..1000 {
                let mut v = vec![rng.random_range(1..=vmax)];
                for _ in 1..n {
                    let last = *v.last().unwrap();
                    let next = (last + rng.random_range(0..3usize))
                        .saturating_sub(1)
                        .clamp(1, vmax);
                    v.push(next);
                }
                let u: Vec<f64> = (0..n)
                    .map(|m| {
                        if rng.random::<bool>() {
                            est.u_hat[m]
                        } else {
                            rng.random()
                        }
                    })
                    .collect();
                if model.log_likelihood(&u, &v, &p.y).unwrap() > best {
                    beaten += 1;
                }
            }
        }
    }
    outcome(
        path_mismatch == 0 && beaten == 0,
        format!(
            "{instances} instances (200 seeds, n=2..8): {path_mismatch} oracle mismatches, {beaten} of {} competitors beat the closed form",
            instances * 1000
        ),
    )
}

/// Fraction of seeds in `seeds` whose `j*(n)` reaches `threshold`.
fn jstar_hit_rate(
    model: &DivergenceModel,
    n: usize,
    seeds: std::ops::Range<u64>,
    threshold: usize,
) -> f64 {
    let count = seeds.clone().count();
    let hits = seeds
        .filter(|&s| {
            let y = model.sample(n, s).unwrap().y;
            track_jstar(&y).unwrap()[n - 1] >= threshold
        })
        .count();
    hits as f64 / count as f64
}

fn divergence_growth() -> Outcome {
    let n = 20_000;
    let threshold = 3;
    let min_fraction = 0.9;
    let config: ExperimentConfig = ExperimentConfig::from_json(
        &json!({
            "model": {"kind": "divergence", "eps": 0.1},
            "n": n,
            "seeds": (0..50).collect::<Vec<u64>>(),
            "diverge": {"jstar_threshold": threshold, "min_fraction": min_fraction},
        })
        .to_string(),
    )
    .unwrap();
    let start = Instant::now();
    let jobs = std::thread::available_parallelism().map_or(1, |j| j.get());
    let mut summary = hmmlab::run(Command::Diverge, &config, jobs).unwrap();
    let elapsed = start.elapsed();

    // calibration on seeds disjoint from the test seeds
    let model = DivergenceModel::new(0.1).unwrap();
    let calibrated = jstar_hit_rate(&model, n, 10_000..10_200, threshold);
    summary.checks.push(Check::new(
        "threshold_calibration",
        calibrated - min_fraction,
        json!({ "calibration_seeds": "10000..10200", "estimated_hit_rate": calibrated, "min_fraction": min_fraction }),
    ));
    let monotone = summary
        .checks
        .iter()
        .find(|c| c.name == "jstar_monotone")
        .unwrap()
        .pass;
    let growth = summary
        .checks
        .iter()
        .find(|c| c.name == "jstar_growth")
        .unwrap();
    let fraction = growth.parameters["fraction"].as_f64().unwrap();
    let median = growth.parameters["median_jstar"].clone();
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"))
        .join("acceptance")
        .join("diverge");
    write_outputs(&dir, &summary).unwrap();
    outcome(
        monotone && fraction >= min_fraction && within(elapsed, 30.0),
        format!(
            "50 seeds, N=20000: monotone={monotone}, j*(N)≥{threshold} in {:.0}% (min {:.0}%, calibrated {:.1}% on 200 other seeds), median j*(N)={median}, {:.2} s (limit 30 s); summary at {}",
            100.0 * fraction,
            100.0 * min_fraction,
            100.0 * calibrated,
            elapsed.as_secs_f64(),
            dir.join("summary.json").display()
        ),
    )
}

fn sensitivity_inequalities() -> Outcome {
    let mut rng = stream_rng(8, SUITE);
    let cfg = SolverConfig::default();
    let mut rows = 0;
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for k in 0..100 {
        let a = rng.random_range(-1.2..1.2);
        let b = rng.random_range(0.3..2.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let model: Box<dyn ContinuousHmm> = if k % 2 == 0 {
            let sd = rng.random_range(0.5..2.0);
            let tau = rng.random_range(0.5..2.0);
            Box::new(LinearGaussian::new(a, b, sd, tau, rng.random_range(0.5..3.0)).unwrap())
        } else {
            Box::new(ExpPower::new(a, b, 0.5, rng.random_range(0.0..1.0), 0.5).unwrap())
        };
        let n = rng.random_range(1..=30);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let u0 = rng.random_range(-4.0..4.0);
        let u1 = rng.random_range(-4.0..4.0);
        let seg = check_lemma34_segment(model.as_ref(), &y, u0, u1, &cfg, 1e-4).unwrap();
        for (_, rep) in &seg.points {
            for r in &rep.rows {
                rows += 1;
                worst = worst.min(r.residual + r.tol);
                if !r.pass() {
                    violations += 1;
                }
            }
        }
    }
    outcome(
        violations == 0,
        format!("50 linear-Gaussian + 50 exp-power (δ=0.5) models, n≤30, s∈{{0,0.5,1}}: {rows} rows, {violations} violations, worst margin {worst:.2e}"),
    )
}

/// Recheck of the inequality system written out directly.
fn system_holds(b: &[f64], c: &[f64]) -> bool {
    let n = b.len();
    (0..n).all(|j| {
        let lhs: f64 = b[..=j].iter().map(|v| v * v).sum();
        let rhs = if j + 1 < n {
            b[j] * b[j + 1] * c[j]
        } else {
            b[j] * c[j]
        };
        lhs <= rhs * (1.0 + 1e-12) + 1e-12
    })
}

fn b1_decay_bound() -> Outcome {
    let e = std::f64::consts::E;
    let mut cases = 0;
    let mut bound_fail = 0;
    let mut unsound = 0;
    let mut worst_ratio: f64 = 0.0;
    for (t, &theta) in [1.0, 2.0, 5.0].iter().enumerate() {
        let n0 = (theta * theta * e).ceil() as usize;
        let span = 200 - n0 + 1;
        let count = if t == 0 { 3334 } else { 3333 };
        for k in 0..count {
            let n = n0 + k % span;
            let seq = gen_feasible(((t as u64) << 32) | k as u64, n, theta).unwrap();
            cases += 1;
            let claimed = verify_ineq_system(&seq.b, &seq.c).unwrap().holds;
            if !claimed || !system_holds(&seq.b, &seq.c) || seq.c.iter().any(|&c| c > theta) {
                unsound += 1;
            }
            match check_lemma_a1(&seq, theta).unwrap() {
                LemmaA1Check::Checked { b1, bound, holds } => {
                    worst_ratio = worst_ratio.max(b1 / bound);
                    if !holds || b1 > bound_b1s(theta, n) {
                        bound_fail += 1;
                    }
                }
                LemmaA1Check::NotApplicable(_) => bound_fail += 1,
            }
        }
    }
    outcome(
        cases == 10_000 && bound_fail == 0 && unsound == 0,
        format!("{cases} sequences, θ∈{{1,2,5}}, n=⌈θ²e⌉..200: {bound_fail} bound failures, {unsound} unsound outputs, worst b₁/bound {worst_ratio:.2e}"),
    )
}

fn chain_rule_consistency() -> Outcome {
    let mut rng = stream_rng(10, SUITE);
    let cfg = SolverConfig::default();
    let tol = 10.0 * cfg.grad_tol;
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for k in 0..100 {
        let a = rng.random_range(-1.2..1.2);
        let b = rng.random_range(0.3..2.0);
        let model: Box<dyn ContinuousHmm> = if k % 2 == 0 {
            Box::new(
                LinearGaussian::new(
                    a,
                    b,
                    rng.random_range(0.5..2.0),
                    rng.random_range(0.5..2.0),
                    1.0,
                )
                .unwrap(),
            )
        } else {
            Box::new(ExpPower::new(a, b, 0.5, rng.random_range(0.0..1.0), 0.5).unwrap())
        };
        let n = rng.random_range(2..=20);
        let m = rng.random_range(1..n);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let full = solve_map(model.as_ref(), &y, &cfg).unwrap();
        let part = solve_constrained(model.as_ref(), &y[..m], full.path[m], &cfg).unwrap();
        let d = part
            .path
            .iter()
            .zip(&full.path)
            .map(|(p, f)| (p - f).abs())
            .fold(0.0, f64::max);
        worst = worst.max(d);
        if d > tol {
            failures += 1;
        }
    }
    outcome(
        failures == 0,
        format!("100 triples (m<n≤20): worst |constrained - unconstrained| {worst:.1e} (tol {tol:.0e}); {failures} failures"),
    )
}
