//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

mod common;

use std::time::Instant;

use fairprice::bandit::{make_params, run_bandit, ParamMode};
use fairprice::demand::{validate_bounds, DemandModel, LinkFunction};
use fairprice::env::Environment;
use fairprice::estimation::{default_init, log_likelihood, mle_fit, LikelihoodSpec, Observation};
use fairprice::harness::{loglog_slope, regret_sweep, run_trials, trial_seed};
use fairprice::io::trace_table;
use fairprice::solver::cost::cost_of_fairness_numeric_with;
use fairprice::solver::dp::{brute_force_solve, solve_dp, DpConfig};
use fairprice::solver::{
    build_policy, check_fairness, cost_of_fairness_linear, linear_optimal_policy,
};
use fairprice::utility::{discretize, DistributionKind, UtilityDistribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{median, random_instance, two_price_observations, LINKS};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn closed_form_cost() -> Outcome {
    let rho = cost_of_fairness_linear(1.0, 0.5, 1.0, 2.0).map_err(|e| e.to_string())?;
    ensure(rho == 0.875, || format!("rho(0.5) = {rho}, expected 0.875"))?;
    for d in [1.0, 1.0 + 1e-12, 1.25, 2.0, 10.0, 1e6] {
        let r = cost_of_fairness_linear(1.0, d, 1.0, 2.0).map_err(|e| e.to_string())?;
        ensure(r == 1.0, || format!("rho({d}) = {r}, expected 1"))?;
    }
    Ok("rho(0.5) = 0.875; rho = 1 for delta0 >= 1".into())
}

fn dp_matches_closed_form() -> Outcome {
    let model = DemandModel::new(LinkFunction::Linear, vec![1.0], 1.0, 0.0, 2.0).unwrap();
    let dist = UtilityDistribution::uniform(0.0, 2.0, 2.0).unwrap();
    let eps = 0.01;
    let grid = discretize(&dist, 2.0, eps).unwrap();
    let m = dist.moments();
    let l_f = validate_bounds(&model, (-2.0, 2.0)).unwrap().bounds.l_f;
    let config = DpConfig::with_price_points(10_000);
    let mut worst = 0.0f64;
    for i in 1..=9 {
        let d = i as f64 / 10.0;
        let num = cost_of_fairness_numeric_with(&model, &grid, d, eps, &config)
            .map_err(|e| e.to_string())?;
        let exact = cost_of_fairness_linear(1.0, d, m.mu, m.nu_sq).unwrap();
        let tol = 8.0 * l_f * d * eps / num.unconstrained_revenue;
        let gap = (num.rho - exact).abs();
        ensure(gap <= tol, || {
            format!(
                "delta0 = {d}: |{} - {exact}| = {gap:.3e} > {tol:.3e}",
                num.rho
            )
        })?;
        worst = worst.max(gap / tol);
    }
    Ok(format!("worst gap {worst:.2e} of the tolerance"))
}

fn dp_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..200 {
        let mp = rng.random_range(1..=5);
        let inst = random_instance(&mut rng, 7, mp);
        let dp =
            solve_dp(&inst.model, &inst.grid, inst.delta0, inst.eps).map_err(|e| e.to_string())?;
        ensure(dp.price_grid.len() == mp, || {
            format!("case {case}: {} price points", dp.price_grid.len())
        })?;
        let bf = brute_force_solve(&inst.model, &inst.grid, &dp.price_grid)
            .map_err(|e| e.to_string())?;
        let gap = (dp.objective - bf.objective).abs();
        ensure(gap <= 1e-12, || {
            format!(
                "case {case}: dp {} vs enumeration {}",
                dp.objective, bf.objective
            )
        })?;
    }
    Ok("200 instances agree within 1e-12".into())
}

fn linear_structure() -> Outcome {
    let model = DemandModel::new(LinkFunction::Linear, vec![1.0], 1.0, 0.0, 2.0).unwrap();
    let dist = UtilityDistribution::uniform(0.0, 2.0, 2.0).unwrap();
    let eps = 0.01;
    let grid = discretize(&dist, 2.0, eps).unwrap();
    let (lo, hi) = grid.support().unwrap();

    let d = 0.5;
    let sol = solve_dp(&model, &grid, d, eps).map_err(|e| e.to_string())?;
    let ps = sol.prices();
    let step = sol.price_grid[1] - sol.price_grid[0];
    let worst_slope = (lo..hi)
        .map(|k| ((ps[k + 1] - ps[k]) / eps - d).abs())
        .fold(0.0, f64::max);
    ensure(worst_slope <= step / eps, || {
        format!("slope off by {worst_slope} (one step is {})", step / eps)
    })?;

    let d = 2.0;
    let sol = solve_dp(&model, &grid, d, eps).map_err(|e| e.to_string())?;
    let ps = sol.prices();
    let step = sol.price_grid[1] - sol.price_grid[0];
    let worst_point = (lo..=hi)
        .map(|k| (ps[k] - grid.points[k] / model.alpha0).abs() / step)
        .fold(0.0, f64::max);
    ensure(worst_point <= 2.0, || {
        format!("price off p*(u) by {worst_point} steps")
    })?;
    Ok(format!(
        "slope deviation {worst_slope:.1e} at delta0 = 0.5; {worst_point:.2} steps from p* at delta0 = 2"
    ))
}

fn rho_curve_shape() -> Outcome {
    for (mu, nu_sq) in [(1.0, 2.0), (1.0, 4.0 / 3.0), (0.2, 1.0), (3.0, 9.5)] {
        let rho: Vec<f64> = (1..100)
            .map(|i| cost_of_fairness_linear(1.0, i as f64 / 100.0, mu, nu_sq).unwrap())
            .collect();
        for (i, w) in rho.windows(2).enumerate() {
            ensure(w[1] - w[0] >= -1e-12, || {
                format!("mu={mu}, nu^2={nu_sq}: decrease at step {i}")
            })?;
        }
        for (i, w) in rho.windows(3).enumerate() {
            ensure(w[2] - 2.0 * w[1] + w[0] <= 1e-12, || {
                format!("mu={mu}, nu^2={nu_sq}: convex at step {i}")
            })?;
        }
    }
    Ok("non-decreasing and concave on (0, 1)".into())
}

fn mle_consistency() -> Outcome {
    let spec = LikelihoodSpec::new(LinkFunction::Logistic);
    let errors = |n: usize| -> Result<Vec<f64>, String> {
        (0..20u64)
            .map(|seed| {
                let data = two_price_observations(seed, n);
                let est = mle_fit(
                    &spec,
                    &data,
                    &default_init(LinkFunction::Logistic, 1),
                    1e-8,
                    100,
                )
                .map_err(|e| e.to_string())?;
                ensure(est.converged, || {
                    format!("seed {seed}, n = {n}: fit did not converge")
                })?;
                Ok(((est.theta_hat[0] - 1.0).powi(2) + (est.alpha_hat - 1.0).powi(2)).sqrt())
            })
            .collect()
    };
    let small = median(errors(10_000)?);
    let large = median(errors(40_000)?);
    let ratio = large / small;
    ensure(small <= 0.1, || {
        format!("median error {small:.4} at n = 1e4 exceeds 0.1")
    })?;
    ensure(ratio <= 0.6, || {
        format!("median error ratio {ratio:.3} > 0.6 ({large:.4} / {small:.4})")
    })?;
    Ok(format!(
        "median error {small:.4} -> {large:.4}, ratio {ratio:.3}"
    ))
}

fn bandit_fairness() -> Outcome {
    let env = Environment::linear_preset(1, 1).map_err(|e| e.to_string())?;
    let bench = env.benchmark(0.3).map_err(|e| e.to_string())?;
    let seeds: Vec<u64> = (0..20).map(|i| trial_seed(2024, i)).collect();
    let out = run_trials(&env, &bench, 10_000, ParamMode::Computational, &seeds)
        .map_err(|e| e.to_string())?;
    let clean = out.iter().filter(|o| o.fairness_violations == 0).count();
    ensure(clean >= 19, || {
        format!("only {clean}/20 runs without violations")
    })?;
    Ok(format!("{clean}/20 runs without violations"))
}

fn regret_scaling() -> Outcome {
    let env = Environment::logistic_preset(3, 1).map_err(|e| e.to_string())?;
    let bench = env.benchmark(0.3).map_err(|e| e.to_string())?;
    let seeds: Vec<u64> = (0..20).map(|i| trial_seed(2024, i)).collect();
    let horizons: Vec<usize> = (10..=17).map(|k| 1usize << k).collect();
    let rows = regret_sweep(&env, &bench, &horizons, &seeds, ParamMode::Computational)
        .map_err(|e| e.to_string())?;
    for w in rows.windows(2) {
        ensure(w[1].mean_rel_regret < w[0].mean_rel_regret, || {
            format!(
                "relative regret rises from T = {} to T = {}",
                w[0].horizon, w[1].horizon
            )
        })?;
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.horizon as f64, r.mean_rel_regret))
        .collect();
    let slope = loglog_slope(&pts).map_err(|e| e.to_string())?;
    ensure((-0.45..=-0.10).contains(&slope), || {
        format!("slope {slope:.3} outside [-0.45, -0.10]")
    })?;
    Ok(format!(
        "relative regret {:.4} -> {:.4}, slope {slope:.3}",
        rows[0].mean_rel_regret,
        rows.last().unwrap().mean_rel_regret
    ))
}

fn property_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut policies = 0;
    for case in 0..200 {
        let mp = rng.random_range(1..=5);
        let inst = random_instance(&mut rng, 7, mp);
        let sol =
            solve_dp(&inst.model, &inst.grid, inst.delta0, inst.eps).map_err(|e| e.to_string())?;
        let policy = build_policy(&sol, &inst.grid, inst.delta0).map_err(|e| e.to_string())?;
        ensure(check_fairness(&policy, inst.delta0, 1e-9), || {
            format!("dp policy {case} is not fair")
        })?;
        policies += 1;
    }
    for case in 0..50 {
        let link = [LinkFunction::Linear, LinkFunction::Logistic][case % 2];
        let alpha = rng.random_range(0.5..2.0);
        let model =
            DemandModel::new(link, vec![1.0], alpha, 0.0, rng.random_range(1.0..5.0)).unwrap();
        let dist = UtilityDistribution::new(
            DistributionKind::Normal,
            rng.random_range(0.0..2.0),
            0.5,
            3.0,
        )
        .unwrap();
        let grid = discretize(&dist, 3.0, 0.05).unwrap();
        let bounds = validate_bounds(&model, (-3.0, 3.0)).unwrap().bounds;
        let d = rng.random_range(0.05..1.5);
        let lin = linear_optimal_policy(&model, &grid, dist.moments(), d, &bounds)
            .map_err(|e| e.to_string())?;
        ensure(check_fairness(&lin.policy, d, 1e-9), || {
            format!("linear policy {case} is not fair")
        })?;
        policies += 1;
    }

    let h = 1e-5;
    for link in LINKS {
        for _ in 0..200 {
            let u = match link {
                LinkFunction::Exponential => rng.random_range(0.01..5.0),
                _ => rng.random_range(-5.0..5.0),
            };
            let fd = (link.value(u + h).unwrap() - link.value(u - h).unwrap()) / (2.0 * h);
            let fd2 =
                (link.derivative(u + h).unwrap() - link.derivative(u - h).unwrap()) / (2.0 * h);
            ensure(
                (fd - link.derivative(u).unwrap()).abs() <= 10.0 * h * h,
                || format!("{link:?} f' at {u}"),
            )?;
            ensure(
                (fd2 - link.second_derivative(u).unwrap()).abs() <= 10.0 * h * h,
                || format!("{link:?} f'' at {u}"),
            )?;
        }
        let spec = LikelihoodSpec::new(link);
        for _ in 0..50 {
            let data: Vec<Observation> = (0..5)
                .map(|_| Observation {
                    x: vec![rng.random_range(0.5..1.5), rng.random_range(0.5..1.5)],
                    p: rng.random_range(0.0..1.0),
                    y: if rng.random_bool(0.5) { 1.0 } else { 0.0 },
                })
                .collect();
            let beta = [
                rng.random_range(0.5..1.0),
                rng.random_range(0.5..1.0),
                rng.random_range(0.1..0.5),
            ];
            let ev = log_likelihood(&spec, &data, &beta).map_err(|e| e.to_string())?;
            for i in 0..3 {
                let (mut up, mut dn) = (beta, beta);
                up[i] += h;
                dn[i] -= h;
                let fd = (log_likelihood(&spec, &data, &up).unwrap().value
                    - log_likelihood(&spec, &data, &dn).unwrap().value)
                    / (2.0 * h);
                let tol = 10.0 * h * h * ev.value.abs().max(1.0);
                ensure((fd - ev.gradient[i]).abs() <= tol, || {
                    format!(
                        "{link:?} likelihood gradient {i}: {} vs {fd}",
                        ev.gradient[i]
                    )
                })?;
            }
        }
    }

    let kinds = [
        DistributionKind::Uniform,
        DistributionKind::Normal,
        DistributionKind::Laplace,
        DistributionKind::StudentT3,
        DistributionKind::PointMass,
    ];
    for case in 0..200 {
        let kind = kinds[case % kinds.len()];
        let b = rng.random_range(0.5..5.0);
        let mu = rng.random_range(-0.5 * b..0.5 * b);
        let sigma = rng.random_range(0.02..0.25) * b;
        let dist = UtilityDistribution::new(kind, mu, sigma, b).map_err(|e| e.to_string())?;
        let grid = discretize(&dist, b, rng.random_range(0.005..0.5)).map_err(|e| e.to_string())?;
        let total: f64 = grid.weights.iter().sum();
        ensure((total - 1.0).abs() <= 1e-9, || {
            format!("{kind:?}: weights sum to {total}")
        })?;
    }

    let env = Environment::linear_preset(2, 5).map_err(|e| e.to_string())?;
    let bench = env.benchmark(0.3).map_err(|e| e.to_string())?;
    let params = make_params(2000, 2, 0.3, ParamMode::Computational, (0.0, 1.0))
        .map_err(|e| e.to_string())?;
    let csv = |seed| {
        let trace =
            run_bandit(&env, &bench, &params, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        trace_table(&trace).to_csv()
    };
    ensure(csv(11) == csv(11), || "fixed-seed traces differ".into())?;
    Ok(format!(
        "{policies} policies fair; link and likelihood derivatives; weights; deterministic traces"
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("closed-form cost of fairness", closed_form_cost),
        ("dynamic program vs closed form", dp_matches_closed_form),
        ("dynamic program vs enumeration", dp_exactness),
        ("linear policy structure", linear_structure),
        ("cost-of-fairness curve shape", rho_curve_shape),
        ("estimator consistency rate", mle_consistency),
        ("bandit fairness", bandit_fairness),
        ("regret scaling", regret_scaling),
        ("property suites", property_suites),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = format!("criterion {}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || id == *f) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("{id} PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{id} FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
