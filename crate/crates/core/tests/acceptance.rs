//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run all with `cargo test --release --test acceptance`, or a subset by
//! number: `cargo test --release --test acceptance -- 3 9`.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use stochopt::adversarial::{compare_with_float, make_instance, run_lower_bound};
use stochopt::analysis::{cosine_sum, fit_loglog_slope, fit_semilog, lemma_suite};
use stochopt::linalg;
use stochopt::optimizers::{
    compare_ftrl_with_o2b, default_x1, example_ninety_expectation, noise_rng, run, AlphaSeq,
    Method, MomentumRule, Oracle, RunOptions, Trace,
};
use stochopt::problems::{
    make_convex_lipschitz, make_finite_sum, make_pl_nonconvex, make_quadratic, NoiseModel, Problem,
};
use stochopt::schedules::{cosine_restart_plan, Schedule, ScheduleKind};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn run_with(
    problem: &Problem,
    noise: &NoiseModel,
    method: &Method,
    horizon: usize,
    seed: u64,
    keep: bool,
) -> Trace {
    let x1 = default_x1(problem.dim(), seed);
    let mut source = Oracle::new(problem, noise, noise_rng(seed));
    let opts = RunOptions {
        keep_iterates: keep,
        seed,
        ..RunOptions::default()
    };
    run(problem, method, &mut source, horizon, &x1, &opts).expect("valid run")
}

/// Perturbing `g_k` leaves `eta_1..eta_k` bit-identical, for every `k`.
fn delayed_contract() -> Outcome {
    let horizon = 1000;
    let dim = 4;
    let kinds = [
        (
            "global",
            ScheduleKind::DelayedAdaGradGlobal {
                alpha: 0.7,
                beta: 0.3,
                eps: 0.1,
            },
        ),
        (
            "coordinate",
            ScheduleKind::DelayedAdaGradCoord {
                alpha: 0.7,
                beta: 0.3,
                eps: 0.2,
            },
        ),
        (
            "coordinate, eps = 0",
            ScheduleKind::DelayedAdaGradCoord {
                alpha: 0.7,
                beta: 0.3,
                eps: 0.0,
            },
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let stream: Vec<Vec<f64>> = (0..horizon)
        .map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    let mut failures = Vec::new();
    for (name, kind) in kinds {
        let etas = |perturb: Option<usize>, upto: usize| {
            let mut s = Schedule::new(kind.clone(), dim).unwrap();
            let mut out = Vec::with_capacity(upto);
            for t in 1..=upto {
                out.push(s.step_size(t).unwrap());
                let mut g = stream[t - 1].clone();
                if perturb == Some(t) {
                    g.iter_mut().for_each(|v| *v = 1e3 * *v + 7.0);
                }
                s.observe(t, &g).unwrap();
            }
            out
        };
        let base = etas(None, horizon);
        let bad: Vec<usize> = (1..=horizon)
            .into_par_iter()
            .filter(|&k| etas(Some(k), k) != base[..k])
            .collect();
        // The perturbation must reach the next step, or the check is vacuous.
        let reaches = etas(Some(500), 501)[500] != base[500];
        if !bad.is_empty() || !reaches {
            failures.push(format!(
                "{name}: changed at k={:?}, reaches_next={reaches}",
                bad.first()
            ));
        }
    }
    if failures.is_empty() {
        outcome(
            true,
            format!("3 rules x {horizon} perturbation points, exact equality"),
        )
    } else {
        outcome(false, failures.join("; "))
    }
}

fn example_ninety() -> Outcome {
    let e0 = example_ninety_expectation(1.0, 10.0, 10.0, 0.0, 1.0);
    let e1 = example_ninety_expectation(1.0, 10.0, 10.0, 0.1, 1.0);
    let exact = 7.0 / 15.0 * 11.0 / 131f64.sqrt()
        - 1.0 / 5.0 * 14.0 / 206f64.sqrt()
        - 1.0 / 3.0 * 4.0 / 26f64.sqrt();
    let passed =
        e0 < 0.0 && e1 < 0.0 && (e0 - exact).abs() <= 1e-6 && (exact + 0.0081).abs() < 5e-5;
    outcome(
        passed,
        format!("eps=0: {e0:.6} (three-term sum {exact:.6}), eps=0.1: {e1:.6}"),
    )
}

fn lower_bound() -> Outcome {
    let mut grid = Vec::new();
    for beta in [0.0, 0.5, 0.9] {
        for alpha in [0.0, 0.25, 0.5] {
            for horizon in [100, 1000, 10_000] {
                grid.push((beta, alpha, horizon));
            }
        }
    }
    let failures: Vec<String> = grid
        .par_iter()
        .filter_map(|&(beta, alpha, horizon)| {
            let inst = make_instance(horizon, 1.0, beta, alpha, 1.0).unwrap();
            let (_, cert) = run_lower_bound(&inst, false);
            let n = horizon as f64;
            let lhs = cert.f_last * n.powf(alpha);
            let rhs = (1.0 - beta).powi(2) * n.ln() / 32.0;
            let checks_ok = cert
                .checks
                .iter()
                .filter(|c| c.name != "last_iterate_bound")
                .all(|c| c.passed);
            (!(checks_ok && lhs >= rhs))
                .then(|| format!("beta={beta} alpha={alpha} T={horizon}: {lhs} vs {rhs}"))
        })
        .collect();
    let mut exact_failures = Vec::new();
    let mut worst_rel: f64 = 0.0;
    for beta in [0.0, 0.5, 0.9] {
        for alpha in [0.0, 0.25, 0.5] {
            for horizon in 2..=30 {
                let inst = make_instance(horizon, 1.0, beta, alpha, 1.0).unwrap();
                let a = compare_with_float(&inst).unwrap();
                worst_rel = worst_rel.max(a.max_rel_error);
                if !a.passed {
                    exact_failures.push(format!("beta={beta} alpha={alpha} T={horizon}"));
                }
            }
        }
    }
    let passed = failures.is_empty() && exact_failures.is_empty();
    let detail = if passed {
        format!(
            "27 instances certified; exact replay T=2..30 agrees (zero pattern and argmax sets exact, values within {worst_rel:.1e})"
        )
    } else {
        format!("bound: {failures:?}; exact: {exact_failures:?}")
    };
    outcome(passed, detail)
}

fn ftrl_equivalence() -> Outcome {
    let horizon = 1000;
    let p = make_convex_lipschitz(5).unwrap();
    let noise = NoiseModel::BoundedSupport { radius: 1.0 };
    let g = 2.0;
    let rules = [
        ScheduleKind::FtrlConstT { c: 1.0, g, horizon },
        ScheduleKind::FtrlSqrtT { c: 1.0, g },
        ScheduleKind::FtrlAdaGlobal { alpha: 1.0, g },
        ScheduleKind::FtrlAdaCoord {
            alpha: 1.0,
            g_inf: g,
        },
    ];
    let reports: Vec<_> = rules
        .into_iter()
        .map(|gamma| {
            compare_ftrl_with_o2b(&p, &noise, AlphaSeq::Constant(1.0), gamma, horizon, 3, 1e-9)
                .unwrap()
        })
        .collect();
    let worst = reports.iter().map(|r| r.max_rel_dist).fold(0.0, f64::max);
    outcome(
        reports.iter().all(|r| r.passed),
        format!("4 gamma rules, T={horizon}, max relative distance {worst:.2e}"),
    )
}

fn pl_adaptivity() -> Outcome {
    let (mu, l, a) = (1.0, 4.0, 0.0);
    let p = make_quadratic(10, mu, l, 0).unwrap();
    let horizon = 10_000;
    let eta0 = 1.0 / (l * (1.0 + a));
    let schedules = [
        (
            "exponential",
            ScheduleKind::exponential_horizon(eta0, l * (1.0 + a) / mu, horizon).unwrap(),
            -0.5,
        ),
        ("cosine", ScheduleKind::Cosine { eta0, horizon }, -0.4),
    ];
    let mut passed = true;
    let mut parts = Vec::new();
    for (name, schedule, max_slope) in schedules {
        let method = Method::Sgd { schedule };
        let clean = run_with(&p, &NoiseModel::None, &method, horizon, 0, false);
        match fit_semilog(&clean, "f_gap", None) {
            Ok(fit) => {
                passed &= fit.r_squared >= 0.99;
                parts.push(format!("{name} sigma=0 semilog r2={:.3}", fit.r_squared));
            }
            Err(e) => {
                passed = false;
                parts.push(format!(
                    "{name} sigma=0 unfittable ({e}; final gap {:e})",
                    clean.final_gap
                ));
            }
        }
        let noise = NoiseModel::AffineVariance { a: 0.0, b: 1.0 };
        let slopes: Vec<f64> = (0..20u64)
            .into_par_iter()
            .map(|seed| {
                let tr = run_with(&p, &noise, &method, horizon, seed, false);
                fit_loglog_slope(&tr, "f_gap", None).map_or(f64::NAN, |f| f.slope)
            })
            .collect();
        let med = median(slopes);
        passed &= med <= max_slope;
        parts.push(format!(
            "{name} sigma=1 median slope {med:.3} (need <= {max_slope})"
        ));
    }
    outcome(passed, parts.join("; "))
}

fn adaptivity_without_pl() -> Outcome {
    let p = make_quadratic(10, 1.0, 4.0, 0).unwrap();
    let horizon = 100_000;
    let method = Method::Sgd {
        // 2 * alpha * L < beta^(1/2) keeps the step below the stability limit.
        schedule: ScheduleKind::DelayedAdaGradGlobal {
            alpha: 0.03,
            beta: 1.0,
            eps: 0.0,
        },
    };
    let mut parts = Vec::new();
    let mut passed = true;
    for (sigma, lo, hi) in [(0.0, f64::NEG_INFINITY, -0.85), (1.0, -0.65, -0.35)] {
        let noise = NoiseModel::AffineVariance {
            a: 0.0,
            b: sigma * sigma,
        };
        let slopes: Vec<f64> = (0..20u64)
            .into_par_iter()
            .map(|seed| {
                let tr = run_with(&p, &noise, &method, horizon, seed, false);
                fit_loglog_slope(&tr, "min_grad_norm_sq", None).map_or(f64::NAN, |f| f.slope)
            })
            .collect();
        let med = median(slopes);
        passed &= med >= lo && med <= hi;
        parts.push(format!("sigma={sigma}: median min-grad^2 slope {med:.3}"));
    }
    outcome(passed, parts.join("; "))
}

fn last_iterate_bound() -> Outcome {
    let p = make_convex_lipschitz(10).unwrap();
    let support = 1.0;
    let noise = NoiseModel::BoundedSupport { radius: support };
    let g = (p.g_lip.unwrap().powi(2) + support * support).sqrt();
    let c = 1.0;
    let x_star = p.x_star.clone().unwrap();
    let mut passed = true;
    let mut parts = Vec::new();
    for horizon in [1000, 10_000] {
        let method = Method::FtrlSgdm {
            alphas: AlphaSeq::Constant(1.0),
            gamma: ScheduleKind::FtrlConstT { c, g, horizon },
        };
        let runs: Vec<(f64, f64)> = (0..50u64)
            .into_par_iter()
            .map(|seed| {
                let tr = run_with(&p, &noise, &method, horizon, seed, false);
                let d = linalg::dist(&default_x1(p.dim(), seed), &x_star);
                (tr.at(horizon).unwrap().f_gap, d * d)
            })
            .collect();
        let mean_gap = runs.iter().map(|r| r.0).sum::<f64>() / runs.len() as f64;
        let mean_d2 = runs.iter().map(|r| r.1).sum::<f64>() / runs.len() as f64;
        let rt = (horizon as f64).sqrt();
        let bound = mean_d2 * g / (c * rt) + 2.0 * c * g / rt;
        passed &= mean_gap <= bound;
        parts.push(format!(
            "T={horizon}: mean gap {mean_gap:.4e} <= {bound:.4e}"
        ));
    }
    outcome(passed, parts.join("; "))
}

fn momentum_forms() -> Outcome {
    let p = make_quadratic(4, 1.0, 4.0, 2).unwrap();
    let noise = NoiseModel::AdditiveSubGaussian { sigma: 0.5 };
    let mu = 0.9;
    let compare = |schedule: ScheduleKind, horizon: usize| {
        let classic = Method::Sgdm {
            schedule: schedule.clone(),
            momentum: MomentumRule::ClassicHb { mu },
        };
        let current = Method::Sgdm {
            schedule,
            momentum: MomentumRule::CurrentRateHb { mu },
        };
        let a = run_with(&p, &noise, &classic, horizon, 4, true)
            .iterates
            .unwrap();
        let b = run_with(&p, &noise, &current, horizon, 4, true)
            .iterates
            .unwrap();
        a.iter()
            .zip(&b)
            .map(|(u, v)| linalg::dist(u, v))
            .collect::<Vec<_>>()
    };
    let same = compare(ScheduleKind::constant(0.05), 200);
    let max_same = same.iter().copied().fold(0.0, f64::max);
    let adaptive = compare(
        ScheduleKind::DelayedAdaGradCoord {
            alpha: 0.5,
            beta: 1.0,
            eps: 0.0,
        },
        5,
    );
    // x_1..x_5 are the iterates up to step 5.
    let gap_by_5 = adaptive[..5].iter().copied().fold(0.0, f64::max);
    let passed = max_same <= 1e-12 && gap_by_5 > 1e-6;
    outcome(
        passed,
        format!("constant step: max |dx| {max_same:.1e}; delayed coordinate AdaGrad: |dx| {gap_by_5:.3e} by step 5"),
    )
}

fn lemmas() -> Outcome {
    let reports = lemma_suite(100_000, 2024).unwrap();
    let violated: Vec<&str> = reports
        .iter()
        .filter(|r| r.violated)
        .map(|r| r.lemma_id.as_str())
        .collect();
    let worst = reports
        .iter()
        .map(|r| r.worst_margin)
        .fold(f64::INFINITY, f64::min);
    let worst_cos = (1..=10_000usize)
        .into_par_iter()
        .map(|t| (cosine_sum(t) + 1.0).abs())
        .reduce(|| 0.0, f64::max);
    outcome(
        violated.is_empty() && worst_cos <= 1e-12,
        format!(
            "{} lemmas x 1e5 trials, violations {violated:?}, worst margin {worst:.2e}; max |sum cos + 1| over T<=1e4: {worst_cos:.1e}",
            reports.len()
        ),
    )
}

fn interpolation() -> Outcome {
    let (p, noise) = make_finite_sum(10, 10, 1.0, 4.0, 5).unwrap();
    let horizon = 10_000;
    let method = Method::FtrlSgdm {
        alphas: AlphaSeq::Constant(1.0),
        gamma: ScheduleKind::FtrlAdaGlobal { alpha: 1.0, g: 4.0 },
    };
    let pairs: Vec<(f64, f64)> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let noisy = run_with(&p, &noise, &method, horizon, seed, false);
            let clean = run_with(&p, &NoiseModel::None, &method, horizon, seed, false);
            (
                noisy.at(horizon).unwrap().f_gap,
                clean.at(horizon).unwrap().f_gap,
            )
        })
        .collect();
    let noisy = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
    let clean = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
    outcome(
        noisy <= 10.0 * clean,
        format!("mean gap at T={horizon}: sampled components {noisy:.3e}, full gradients {clean:.3e}, ratio {:.2}", noisy / clean),
    )
}

fn cosine_restart() -> Outcome {
    let p = make_pl_nonconvex();
    let eta0 = 1.0 / p.l_smooth.unwrap();
    let (t0, r, stages) = (128, 2.0, 5);
    let plan = cosine_restart_plan(t0, r, stages).unwrap();
    let horizon: usize = plan.iter().sum();
    let method = Method::Sgd {
        schedule: ScheduleKind::CosineRestart {
            eta0,
            t0,
            r,
            stages,
        },
    };
    let tr = run_with(&p, &NoiseModel::None, &method, horizon, 0, false);
    // Gap after each stage: f(x_{S_i + 1}).
    let mut ends = Vec::new();
    let mut s = 0;
    for len in &plan {
        s += len;
        ends.push(if s == horizon {
            tr.final_gap
        } else {
            tr.at(s + 1).unwrap().f_gap
        });
    }
    let start = tr.records[0].f_gap;
    let mut prev = start;
    let mut passed = true;
    for &e in &ends {
        passed &= e < 0.5 * prev;
        prev = e;
    }
    let shown: Vec<String> = ends.iter().map(|e| format!("{e:.3e}")).collect();
    outcome(
        passed,
        format!(
            "start gap {start:.3e}, stage-end gaps [{}]",
            shown.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [(usize, &str, fn() -> Outcome); 11] = [
        (
            1,
            "delayed step sizes ignore the current gradient",
            delayed_contract,
        ),
        (
            2,
            "current-gradient step sizes can point uphill",
            example_ninety,
        ),
        (3, "last-iterate lower bound for momentum SGD", lower_bound),
        (
            4,
            "FTRL-based SGDM equals anytime online-to-batch FTRL",
            ftrl_equivalence,
        ),
        (
            5,
            "noise adaptivity under PL (exponential, cosine)",
            pl_adaptivity,
        ),
        (
            6,
            "noise adaptivity of delayed AdaGrad without PL",
            adaptivity_without_pl,
        ),
        (
            7,
            "last-iterate bound of FTRL-based SGDM",
            last_iterate_bound,
        ),
        (8, "classic vs current-rate heavy ball", momentum_forms),
        (9, "technical lemmas hold on random inputs", lemmas),
        (10, "interpolation regime", interpolation),
        (
            11,
            "cosine restarts decay geometrically per stage",
            cosine_restart,
        ),
    ];
    let mut failed = 0;
    for (n, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        if !o.passed {
            failed += 1;
        }
        println!(
            "criterion {n:>2} {} {name}: {} [{:.1}s]",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion/criteria failed");
        ExitCode::FAILURE
    }
}
