//! Command execution: one job per seed, merged in seed order.

use hmmlab_core::convergence::{
    check_lemma34_segment, check_lemma_a1, diff_series, empirical_bconv_exponent, gen_feasible,
    laplace_stabilization_report, verify_ineq_system, BconvOutcome, DecayOptions, LemmaA1Check,
};
use hmmlab_core::divergence::{closed_form_map, track_jstar};
use hmmlab_core::map::{
    laplace_objective, prefix_series, solve_constrained, solve_map, LaplaceMapDp, PrefixSeries,
    SolverConfig,
};
use hmmlab_core::model::{
    eval_h, sample_trajectory, validate_assumptions, ContinuousHmm, GridSpec,
};
use hmmlab_core::rng::stream_rng;
use hmmlab_core::viterbi::{brute_force_map, renewal_times, viterbi, BRUTE_FORCE_LIMIT};
use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Command, ExperimentConfig, Model, VerifyCheck};
use crate::output::{fold_checks, Cell, Check, Csv, SeedRun, Summary};
use crate::CliError;

/// Stream id for the random instances drawn by `verify`.
const VERIFY_STREAM: u64 = 16;

type JobResult = Result<(Csv, Vec<Check>, Value), hmmlab_core::Error>;

struct Ctx<'a> {
    command: Command,
    config: &'a ExperimentConfig,
    model: Option<Model>,
    solver: SolverConfig,
}

/// Runs `command` over every seed with `jobs` worker threads.
pub fn run(command: Command, config: &ExperimentConfig, jobs: usize) -> Result<Summary, CliError> {
    config.validate()?;
    let ctx = Ctx {
        command,
        config,
        model: needed_model(command, config)?,
        solver: config.solver.config()?,
    };
    let mut seeds = config.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    let runs: Vec<SeedRun> = pool.install(|| seeds.par_iter().map(|&s| ctx.job(s)).collect());

    let mut checks = fold_checks(&runs);
    if command == Command::Diverge {
        checks.push(divergence_growth(config, &runs));
    }
    Ok(Summary {
        command: command.name(),
        pass: checks.iter().all(|c| c.pass),
        checks,
        config: experiment_echo(config),
        runs,
    })
}

/// The config as recorded in the summary, without execution details, so that
/// output bytes do not depend on the thread count or output location.
fn experiment_echo(config: &ExperimentConfig) -> Value {
    let mut c = config.clone();
    c.out = None;
    c.jobs = None;
    serde_json::to_value(c).expect("config serializes")
}

fn needed_model(command: Command, config: &ExperimentConfig) -> Result<Option<Model>, CliError> {
    let wrong = |want: &str| {
        CliError::Input(format!(
            "`{}` needs a {want} model, got `{}`",
            command.name(),
            config.model.as_ref().map_or("none", |m| m.kind())
        ))
    };
    if command == Command::Verify {
        let spec = config
            .verify
            .ok_or_else(|| CliError::Input("`verify` needs a `verify` section".into()))?;
        if spec.check == VerifyCheck::LemmaA1 {
            if !(spec.theta >= 1.0 && spec.theta.is_finite()) {
                return Err(CliError::Input("verify.theta must be at least 1".into()));
            }
            return Ok(None);
        }
        let m = config.model()?;
        return match (&m, spec.check) {
            (Model::Continuous(_), _) | (Model::Laplace(_), VerifyCheck::Assumptions) => {
                Ok(Some(m))
            }
            _ => Err(wrong("smooth continuous-state")),
        };
    }
    let m = config.model()?;
    let ok = match command {
        Command::Simulate => true,
        Command::Map | Command::Converge => matches!(m, Model::Continuous(_) | Model::Laplace(_)),
        Command::Viterbi => matches!(m, Model::Discrete(_)),
        Command::Diverge => matches!(m, Model::Divergence(_)),
        Command::Verify => unreachable!(),
    };
    if !ok {
        return Err(wrong(match command {
            Command::Viterbi => "discrete_gaussian",
            Command::Diverge => "divergence",
            _ => "continuous-state",
        }));
    }
    let horizon = config.horizon()?;
    if command == Command::Converge && horizon < 11 {
        return Err(CliError::Input("converge needs n of at least 11".into()));
    }
    Ok(Some(m))
}

impl Ctx<'_> {
    fn job(&self, seed: u64) -> SeedRun {
        let result = match self.command {
            Command::Simulate => self.simulate(seed),
            Command::Map => self.map(seed),
            Command::Viterbi => self.viterbi(seed),
            Command::Converge => self.converge(seed),
            Command::Diverge => self.diverge(seed),
            Command::Verify => self.verify(seed),
        };
        let file = format!("{}_{seed}.csv", self.command.name());
        match result {
            Ok((csv, checks, stats)) => SeedRun {
                seed,
                file,
                checks,
                stats,
                csv: csv.into_string(),
            },
            Err(e) => {
                let msg = e.to_string();
                let mut csv = Csv::new(&["error"]);
                csv.row(vec![Cell::Text("see summary.json")]);
                SeedRun {
                    seed,
                    file,
                    checks: vec![Check::flag("run", false, json!({ "error": msg }))],
                    stats: Value::Null,
                    csv: csv.into_string(),
                }
            }
        }
    }

    fn n(&self) -> usize {
        self.config.n.expect("checked in needed_model")
    }

    fn model(&self) -> &Model {
        self.model.as_ref().expect("checked in needed_model")
    }

    fn smooth(&self) -> &dyn ContinuousHmm {
        match self.model() {
            Model::Continuous(m) => m.as_ref(),
            Model::Laplace(m) => m,
            _ => unreachable!("checked in needed_model"),
        }
    }

    fn simulate(&self, seed: u64) -> JobResult {
        let n = self.n();
        let csv = match self.model() {
            Model::Continuous(_) | Model::Laplace(_) => {
                let t = sample_trajectory(self.smooth(), n, seed)?;
                let mut csv = Csv::new(&["m", "state", "observation"]);
                for (k, (x, y)) in t.states.iter().zip(&t.observations).enumerate() {
                    csv.row(vec![(k + 1).into(), (*x).into(), (*y).into()]);
                }
                csv
            }
            Model::Discrete(d) => {
                let t = d.sample(n, seed)?;
                let mut csv = Csv::new(&["m", "state", "observation"]);
                for (k, (x, y)) in t.states.iter().zip(&t.observations).enumerate() {
                    csv.row(vec![(k + 1).into(), (x + 1).into(), (*y).into()]);
                }
                csv
            }
            Model::Divergence(d) => {
                let p = d.sample(n, seed)?;
                let mut csv = Csv::new(&["m", "u", "v", "y"]);
                for k in 0..n {
                    csv.row(vec![
                        (k + 1).into(),
                        p.u[k].into(),
                        p.v[k].into(),
                        p.y[k].into(),
                    ]);
                }
                csv
            }
        };
        Ok((csv, Vec::new(), json!({ "n": n })))
    }

    fn map(&self, seed: u64) -> JobResult {
        let n = self.n();
        let model = self.smooth();
        let y = sample_trajectory(model, n, seed)?.observations;
        let (path, objective, grad, iters, converged) = match self.model() {
            Model::Laplace(_) => {
                let path = LaplaceMapDp::new(&y)?.path_at(n)?;
                let obj = laplace_objective(&path, &y)?;
                (path, obj, None, 0, true)
            }
            _ => {
                let s = solve_map(model, &y, &self.solver)?;
                (
                    s.path,
                    s.objective,
                    Some(s.grad_inf_norm),
                    s.iterations,
                    s.converged,
                )
            }
        };
        let mut csv = Csv::new(&[
            "n",
            "coordinate",
            "value",
            "objective",
            "grad_inf_norm",
            "iterations",
        ]);
        for (k, x) in path.iter().enumerate() {
            csv.row(vec![
                n.into(),
                (k + 1).into(),
                (*x).into(),
                objective.into(),
                grad.into(),
                iters.into(),
            ]);
        }
        let zero = vec![0.0; n];
        let obs: Vec<f64> = y.iter().map(|&v| model.obs_argmin(v)).collect();
        let mut checks = vec![
            Check::new(
                "probe_zero",
                eval_h(model, &zero, &y)? - objective,
                json!({}),
            ),
            Check::new(
                "probe_observation",
                eval_h(model, &obs, &y)? - objective,
                json!({}),
            ),
        ];
        if let Some(g) = grad {
            let tol = self.solver.grad_tol;
            checks.push(Check::new(
                "converged",
                if converged { tol - g } else { -1.0 },
                json!({ "grad_tol": tol }),
            ));
        }
        Ok((
            csv,
            checks,
            json!({ "n": n, "objective": objective, "iterations": iters }),
        ))
    }

    fn viterbi(&self, seed: u64) -> JobResult {
        let Model::Discrete(model) = self.model() else {
            unreachable!()
        };
        let n = self.n();
        let t = model.sample(n, seed)?;
        let y = &t.observations;
        let v = viterbi(model, y)?;
        let mut csv = Csv::new(&["m", "state", "true_state"]);
        for k in 0..n {
            csv.row(vec![
                (k + 1).into(),
                (v.path[k] + 1).into(),
                (t.states[k] + 1).into(),
            ]);
        }
        let mut checks = Vec::new();
        let d = model.num_states();
        let size = (d as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if size <= BRUTE_FORCE_LIMIT {
            let (bp, bs) = brute_force_map(model, y)?;
            let same = bp == v.path;
            let tol = self.config.tolerances.score;
            checks.push(Check::new(
                "brute_force",
                if same {
                    tol - (bs - v.log_score).abs()
                } else {
                    -1.0
                },
                json!({ "score_tol": tol }),
            ));
        }

        // every horizon's path, to test freezing at all renewal times at once
        let paths: Vec<Vec<usize>> = (1..=n)
            .map(|k| viterbi(model, &y[..k]).map(|r| r.path))
            .collect::<Result<_, _>>()?;
        let mut renewals = 0usize;
        let mut violations = 0usize;
        for i0 in 0..d {
            for &r in &renewal_times(model, y, i0).times {
                renewals += 1;
                let base = &paths[r];
                if paths[r..]
                    .iter()
                    .any(|p| p[r] != i0 || p[..=r] != base[..=r])
                {
                    violations += 1;
                }
            }
        }
        checks.push(Check::flag(
            "d_set_freezing",
            violations == 0,
            json!({ "renewals": renewals, "violations": violations }),
        ));
        Ok((
            csv,
            checks,
            json!({
                "n": n,
                "log_score": v.log_score,
                "stabilized_prefix": v.stabilized_prefix,
            }),
        ))
    }

    fn converge(&self, seed: u64) -> JobResult {
        let n = self.n();
        let m = self.config.m.min(n);
        let spec = self.config.converge;
        if spec.coordinate == 0 || spec.coordinate > m {
            return Err(hmmlab_core::Error::InvalidParameter {
                name: "converge.coordinate",
                reason: format!("must lie in 1..={m}"),
            });
        }
        let model = self.smooth();
        let y = sample_trajectory(model, n, seed)?.observations;
        let tol = self.config.tolerances;
        let mut checks = Vec::new();
        let (ps, laplace_dp) = match self.model() {
            Model::Laplace(_) => {
                let dp = LaplaceMapDp::new(&y)?;
                (dp.prefix_series(m)?, Some(dp))
            }
            _ => (prefix_series(model, &y, m, &self.solver)?, None),
        };
        let csv = prefix_csv(&ps, spec.coordinate - 1);
        let window = spec.window.or((n > 20).then_some((10, n)));
        let opts = DecayOptions {
            coordinate: spec.coordinate - 1,
            window,
            noise_floor: tol.noise_floor,
            ..DecayOptions::default()
        };
        let report = diff_series(&ps, &opts)?;
        let mut stats = json!({
            "n": n,
            "m": m,
            "window": report.window,
            "exp_rate": report.exp_rate(),
            "poly_exponent": report.poly_exponent(),
            "r2_exp": report.exp_fit.map(|f| f.r2),
            "exactly_stabilized": report.exactly_stabilized,
            "stabilized_from": report.stabilized_from,
        });

        if let Some(dp) = laplace_dp {
            let rep = laplace_stabilization_report(&dp, tol.freeze);
            let worst = rep
                .events
                .iter()
                .map(|e| e.value_deviation.max(e.prefix_deviation))
                .fold(0.0, f64::max);
            checks.push(Check::new(
                "laplace_freezing",
                tol.freeze - worst,
                json!({ "tol": tol.freeze }),
            ));
            stats["events"] = json!(rep.events.len());
            stats["violations"] = json!(rep.violations());
        } else {
            if !ps.skipped.is_empty() {
                checks.push(Check::flag(
                    "all_horizons_solved",
                    false,
                    json!({ "skipped": ps.skipped }),
                ));
            }
            if matches!(
                self.config.model,
                Some(crate::config::ModelSpec::LinearGaussian { .. })
            ) {
                let margin = match report.exp_fit {
                    _ if report.exactly_stabilized => 0.0,
                    Some(f) => (-f.slope).min(f.r2 - tol.decay_r2),
                    None => -1.0,
                };
                checks.push(Check::new(
                    "exp_decay",
                    margin,
                    json!({ "min_r2": tol.decay_r2 }),
                ));
            }
            let b = empirical_bconv_exponent(&report, spec.beta, tol.noise_floor)?;
            let params = json!({ "beta": spec.beta, "constant": finite(b.constant) });
            checks.push(match b.outcome {
                BconvOutcome::Inconclusive => Check::flag("bconv", true, params),
                _ => Check::new("bconv", 1.0 - b.worst_ratio, params),
            });
        }
        Ok((csv, checks, stats))
    }

    fn diverge(&self, seed: u64) -> JobResult {
        let Model::Divergence(model) = self.model() else {
            unreachable!()
        };
        let n = self.n();
        let p = model.sample(n, seed)?;
        let js = track_jstar(&p.y)?;
        let mut csv = Csv::new(&["n", "jstar", "vhat_1", "v_true_1"]);
        for (k, &j) in js.iter().enumerate() {
            let vhat = if j > 1 { j } else { 2 };
            csv.row(vec![(k + 1).into(), j.into(), vhat.into(), p.v[0].into()]);
        }
        let monotone = js.windows(2).all(|w| w[0] <= w[1]);
        let last = *js.last().expect("n >= 1");
        let agrees = closed_form_map(&p.y)?.jstar == last;
        let checks = vec![Check::flag("jstar_monotone", monotone && agrees, json!({}))];
        Ok((
            csv,
            checks,
            json!({ "n": n, "jstar_final": last, "v_true_final": p.v[n - 1] }),
        ))
    }

    fn verify(&self, seed: u64) -> JobResult {
        let spec = self.config.verify.expect("checked in needed_model");
        let mut rng = stream_rng(seed, VERIFY_STREAM);
        match spec.check {
            VerifyCheck::LemmaA1 => {
                let theta = spec.theta;
                let n0 = (theta * theta * std::f64::consts::E).ceil() as usize;
                let n = match self.config.n {
                    Some(n) => n,
                    None if n0 < 200 => rng.random_range(n0..=200),
                    None => n0,
                };
                let seq = gen_feasible(seed, n, theta)?;
                let mut csv = Csv::new(&["i", "b", "c"]);
                for (i, (b, c)) in seq.b.iter().zip(&seq.c).enumerate() {
                    csv.row(vec![(i + 1).into(), (*b).into(), (*c).into()]);
                }
                let sound = verify_ineq_system(&seq.b, &seq.c)?;
                let mut checks = vec![Check::flag(
                    "ineq_system",
                    sound.holds,
                    json!({ "first_violation": sound.first_violation.map(|j| j + 1) }),
                )];
                let params = json!({ "theta": theta });
                checks.push(match check_lemma_a1(&seq, theta)? {
                    // relative: the bound itself is tiny for large n
                    LemmaA1Check::Checked { b1, bound, .. } => {
                        Check::new("b1s_bound", 1.0 - b1 / bound, params)
                    }
                    LemmaA1Check::NotApplicable(why) => Check::flag(
                        "b1s_bound",
                        true,
                        json!({ "theta": theta, "not_applicable": why }),
                    ),
                });
                Ok((csv, checks, json!({ "n": n, "b1": seq.b[0] })))
            }
            VerifyCheck::Lemma34 => {
                let model = self.smooth();
                let n = self.config.n.unwrap_or_else(|| rng.random_range(1..=30));
                let y = sample_trajectory(model, n, seed)?.observations;
                let u0 = rng.random_range(-3.0..3.0);
                let u1 = rng.random_range(-3.0..3.0);
                let rel = self.config.tolerances.lemma34_rel;
                let seg = check_lemma34_segment(model, &y, u0, u1, &self.solver, rel)?;
                let mut csv = Csv::new(&["s", "j", "lhs", "rhs", "residual", "tol"]);
                let mut margin = f64::INFINITY;
                for (s, rep) in &seg.points {
                    for r in &rep.rows {
                        csv.row(vec![
                            (*s).into(),
                            r.j.into(),
                            r.lhs.into(),
                            r.rhs.into(),
                            r.residual.into(),
                            r.tol.into(),
                        ]);
                        margin = margin.min(r.residual + r.tol);
                    }
                }
                let checks = vec![Check::new("lemma34", margin, json!({ "rel_tol": rel }))];
                Ok((
                    csv,
                    checks,
                    json!({ "n": n, "u0": u0, "u1": u1, "integrated_b1": seg.integrated_b1 }),
                ))
            }
            VerifyCheck::ChainRule => {
                let model = self.smooth();
                let n = self.config.n.unwrap_or(20);
                if n < 2 {
                    return Err(hmmlab_core::Error::InvalidParameter {
                        name: "n",
                        reason: "chain_rule needs n of at least 2".into(),
                    });
                }
                let y = sample_trajectory(model, n, seed)?.observations;
                let k = rng.random_range(1..n);
                let full = solve_map(model, &y, &self.solver)?;
                let part = solve_constrained(model, &y[..k], full.path[k], &self.solver)?;
                let mut csv = Csv::new(&["j", "constrained", "unconstrained", "abs_diff"]);
                let mut worst: f64 = 0.0;
                for j in 0..k {
                    let diff = (part.path[j] - full.path[j]).abs();
                    worst = worst.max(diff);
                    csv.row(vec![
                        (j + 1).into(),
                        part.path[j].into(),
                        full.path[j].into(),
                        diff.into(),
                    ]);
                }
                let bound = self.config.tolerances.chain_rule_factor * self.solver.grad_tol;
                let checks = vec![Check::new(
                    "chain_rule",
                    bound - worst,
                    json!({ "bound": bound }),
                )];
                Ok((csv, checks, json!({ "n": n, "m": k })))
            }
            VerifyCheck::Assumptions => {
                let rep = validate_assumptions(self.smooth(), &GridSpec::default())?;
                let mut csv = Csv::new(&["check", "pass", "margin", "worst_x", "worst_y"]);
                let mut checks = Vec::new();
                for c in &rep.checks {
                    csv.row(vec![
                        Cell::Text(c.name),
                        c.pass.into(),
                        c.margin.into(),
                        c.worst_at.0.into(),
                        c.worst_at.1.into(),
                    ]);
                    checks.push(Check {
                        name: c.name.into(),
                        pass: c.pass,
                        margin: finite(c.margin),
                        parameters: json!({}),
                    });
                }
                Ok((csv, checks, json!({ "shifts": rep.shifts })))
            }
        }
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// One row per horizon: the tracked prefix, solver diagnostics and the
/// difference to the next horizon in the fitted coordinate.
fn prefix_csv(ps: &PrefixSeries, coordinate: usize) -> Csv {
    let mut header = vec!["n".to_string()];
    header.extend((1..=ps.m).map(|j| format!("x_{j}")));
    header.extend(["objective", "grad_inf_norm", "iterations", "d_n"].map(String::from));
    let mut csv = Csv::with_columns(header);
    for (k, row) in ps.rows.iter().enumerate() {
        let next = ps.rows.get(k + 1).filter(|r| r.n == row.n + 1);
        let mut cells: Vec<Cell> = vec![row.n.into()];
        cells.extend(row.prefix.iter().map(|&x| Cell::Float(x)));
        cells.push(row.objective.into());
        cells.push(row.grad_inf_norm.into());
        cells.push(row.iterations.into());
        cells.push(
            next.map(|r| match &r.increment {
                Some(inc) => inc[coordinate].abs(),
                None => (r.prefix[coordinate] - row.prefix[coordinate]).abs(),
            })
            .into(),
        );
        csv.row(cells);
    }
    csv
}

/// Fraction of seeds whose final `j*` reaches the threshold, with the
/// empirical distribution of `j*(N)` for calibration.
fn divergence_growth(config: &ExperimentConfig, runs: &[SeedRun]) -> Check {
    let spec = config.diverge;
    let mut finals: Vec<u64> = runs
        .iter()
        .filter_map(|r| r.stats.get("jstar_final").and_then(Value::as_u64))
        .collect();
    finals.sort_unstable();
    let hits = finals
        .iter()
        .filter(|&&j| j >= spec.jstar_threshold as u64)
        .count();
    let fraction = if runs.is_empty() {
        0.0
    } else {
        hits as f64 / runs.len() as f64
    };
    let median = if finals.is_empty() {
        Value::Null
    } else {
        let k = finals.len();
        json!(if k % 2 == 1 {
            finals[k / 2] as f64
        } else {
            (finals[k / 2 - 1] + finals[k / 2]) as f64 / 2.0
        })
    };
    let mut histogram = serde_json::Map::new();
    for j in &finals {
        let e = histogram.entry(j.to_string()).or_insert(json!(0));
        *e = json!(e.as_u64().unwrap_or(0) + 1);
    }
    Check::new(
        "jstar_growth",
        fraction - spec.min_fraction,
        json!({
            "threshold": spec.jstar_threshold,
            "min_fraction": spec.min_fraction,
            "fraction": fraction,
            "median_jstar": median,
            "jstar_histogram": histogram,
        }),
    )
}
