//! Acceptance criteria 1–10. Each criterion prints one `PASS` or `FAIL` line;
//! the test fails if any criterion fails. Criteria run one after another so
//! that their wall-clock budgets are measured without contention.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use multilane::config::{
    parse_document, ExperimentSpec, FastFluxVariant, HydroRegime, LaneFluxKind, ModelParams,
    Penalization, SwitchingSpec,
};
use multilane::dsmc::{homogeneous_relaxation, Execution};
use multilane::equilibria::{histogram, l1_histogram_distance, lane_equilibrium, SpeedEquilibrium};
use multilane::experiments::{compare, execute, homogeneous_asymptotes, homogeneous_trajectory};
use multilane::grid::Grid;
use multilane::hydro::{
    fast_switching_closure, flux_collision_dominated, fv_advance, FluxModel, FvScheme, HydroState,
};
use multilane::moments::{asymptotic_mean_speeds, equilibrium_density_split, AsymptoticMethod};

type BoxError = Box<dyn std::error::Error + Send + Sync>;
type Outcome = Result<(bool, String), BoxError>;
type Criterion = (&'static str, fn() -> Outcome);

fn params(json: &str) -> ModelParams {
    serde_json::from_str(json).expect("valid model parameters")
}

/// `μ = 2`, linear recommended speed on both lanes, penalization `kappa`.
fn model(p: f64, kappa: Penalization, beta: [f64; 2], alpha: f64) -> ModelParams {
    let mut m = params(r#"{ "gamma": 0.001, "mu": 2 }"#);
    m.control.p = p;
    m.control.kappa = [kappa; 2];
    m.switching.beta = beta;
    m.switching.alpha = alpha;
    m
}

fn homogeneous_spec(final_time: f64, rho0: [f64; 2]) -> ExperimentSpec {
    let mut e = ExperimentSpec {
        final_time,
        ..Default::default()
    };
    e.homogeneous.rho0 = rho0;
    e
}

/// Density-only configurations of the homogeneous density figures.
fn density_cases() -> Vec<([f64; 2], f64, [f64; 2])> {
    let mut cases = Vec::new();
    for beta in [[0.1, 0.2], [0.2, 0.2]] {
        for alpha in [1.0, 2.0] {
            for rho0 in [[0.2, 0.8], [0.8, 0.2]] {
                cases.push((beta, alpha, rho0));
            }
        }
    }
    cases
}

fn criterion_1() -> Outcome {
    let mut worst = 0.0_f64;
    let mut slowest = 0.0_f64;
    for (beta, alpha, rho0) in density_cases() {
        let p = model(0.05, Penalization(0.01), beta, alpha);
        let started = Instant::now();
        let res = homogeneous_trajectory(&p, &homogeneous_spec(200.0, rho0))?;
        slowest = slowest.max(started.elapsed().as_secs_f64());
        let last = res.states.last().expect("final state");
        assert!((last.t - 200.0).abs() < 1e-9);
        for s in &res.states {
            worst = worst.max((s.rho[0] + s.rho[1] - 1.0).abs());
        }
        worst = worst.max(res.mass_drift);
    }
    Ok((
        worst <= 1e-10 && slowest < 1.0,
        format!("max |rho1+rho2-1| = {worst:.2e}, slowest run {slowest:.3} s"),
    ))
}

fn criterion_2() -> Outcome {
    let rho1_at = |beta: [f64; 2], alpha: f64| -> Result<[f64; 2], multilane::Error> {
        let p = model(0.05, Penalization(0.01), beta, alpha);
        let res = homogeneous_trajectory(&p, &homogeneous_spec(200.0, [0.2, 0.8]))?;
        Ok(res.states.last().expect("final state").rho)
    };
    let oracle = 2f64.sqrt() / (1.0 + 2f64.sqrt());
    let asym = (rho1_at([0.1, 0.2], 1.0)?[0] - oracle).abs();
    let mut sym = 0.0_f64;
    for alpha in [1.0, 2.0] {
        let rho = rho1_at([0.2, 0.2], alpha)?;
        sym = sym.max((rho[0] - 0.5).abs()).max((rho[1] - 0.5).abs());
    }
    Ok((
        asym <= 1e-6 && sym <= 1e-8,
        format!("|rho1 - sqrt2/(1+sqrt2)| = {asym:.2e}, symmetric |rho - 1/2| = {sym:.2e}"),
    ))
}

fn criterion_3() -> Outcome {
    let mut failures = Vec::new();
    let mut worst = 0.0_f64;
    for kappa in [
        Penalization::UNCONTROLLED,
        Penalization(0.1),
        Penalization(0.01),
    ] {
        for beta in [[0.0, 0.0], [0.1, 0.2]] {
            for alpha in [1.0, 2.0] {
                let p = model(0.05, kappa, beta, alpha);
                let res = homogeneous_trajectory(&p, &homogeneous_spec(100.0, [0.8, 0.2]))?;
                let m = res.states.last().expect("final state").m;
                let target = homogeneous_asymptotes(&p, [0.8, 0.2])?;
                let err = (0..2).map(|l| (m[l] - target[l]).abs()).fold(0.0, f64::max);
                worst = worst.max(err);
                if err > 1e-6 {
                    failures.push(format!(
                        "kappa={} beta={beta:?} alpha={alpha}: {err:.2e}",
                        kappa.0
                    ));
                }
            }
        }
    }
    let mut rng = StdRng::seed_from_u64(3);
    let mut agree = 0.0_f64;
    for _ in 0..100 {
        let beta = [rng.random_range(0.01..0.5), rng.random_range(0.01..0.5)];
        let alpha = rng.random_range(0.5..4.0);
        let kappa = if rng.random_bool(0.2) {
            Penalization::UNCONTROLLED
        } else {
            Penalization(10f64.powf(rng.random_range(-2.0..1.0)))
        };
        let mut p = model(rng.random_range(0.0..1.0), kappa, beta, alpha);
        p.mu = rng.random_range(1.0..3.0);
        let total = rng.random_range(0.05..1.95);
        let (r1, r2) = equilibrium_density_split(total, &p.switching)?;
        let closed = asymptotic_mean_speeds(r1, r2, &p, AsymptoticMethod::ClosedForm)?;
        let solved = asymptotic_mean_speeds(r1, r2, &p, AsymptoticMethod::LinearSolve)?;
        agree = agree
            .max((closed[0] - solved[0]).abs())
            .max((closed[1] - solved[1]).abs());
    }
    let passed = failures.is_empty() && agree <= 1e-12;
    let mut detail = format!("max |m(100)-m_inf| = {worst:.2e}, closed form vs solve {agree:.2e}");
    if !failures.is_empty() {
        detail.push_str(&format!("; over 1e-6: {}", failures.join(", ")));
    }
    Ok((passed, detail))
}

fn criterion_4() -> Outcome {
    let grid: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    let mut worst = 0.0_f64;
    for beta in [[0.0, 0.0], [0.1, 0.2]] {
        let p = model(1.0, Penalization(1e-4), beta, 2.0);
        assert_eq!(p.pstar(0), 1e4);
        for &r1 in &grid {
            for &r2 in &grid {
                let m = asymptotic_mean_speeds(r1, r2, &p, AsymptoticMethod::ClosedForm)?;
                worst = worst
                    .max((m[0] - (1.0 - r1)).abs())
                    .max((m[1] - (1.0 - r2)).abs());
            }
        }
    }
    Ok((
        worst <= 1e-3,
        format!("max |m_inf - vbar| = {worst:.2e} at p* = 1e4"),
    ))
}

fn criterion_5() -> Outcome {
    let mut p = model(1.0, Penalization(1.0), [0.0, 0.0], 1.0);
    p.noise.lambda = [1.0, 1.0];
    let (rho, n, steps) = (0.5, 100_000, 100_000);
    let started = Instant::now();
    // Quasi-invariant collisions run on the time scale eps * gamma, so
    // dt/eps = gamma becomes one collision time per step.
    let run = homogeneous_relaxation(&p, 0, rho, n, steps, 1.0, 5)?;
    let elapsed = started.elapsed().as_secs_f64();
    let SpeedEquilibrium::Beta(eq) = lane_equilibrium(rho, &p, 0)? else {
        return Ok((false, "equilibrium is not a Beta law".into()));
    };
    let mean = run.speeds.iter().sum::<f64>() / n as f64;
    let var = lane_equilibrium(rho, &p, 0)?.variance();
    let bound = 3.0 * (var / n as f64).sqrt();
    let l1 = l1_histogram_distance(&histogram(&run.speeds, 128), &eq);
    Ok((
        (mean - eq.m_inf).abs() <= bound && l1 <= 0.05 && elapsed <= 120.0,
        format!(
            "mean {mean:.6} vs m_inf {:.6} (bound {bound:.2e}), histogram L1 {l1:.4}, {elapsed:.1} s",
            eq.m_inf
        ),
    ))
}

fn criterion_6() -> Outcome {
    let doc = parse_document(
        r#"{ "model": { "gamma": 0.01, "mu": 2,
               "control": { "p": 0.05, "kappa": [0.01, 0.01], "recommended_speed": ["linear", "linear"] },
               "switching": { "beta": [0.02, 0.02], "alpha": 2, "regime_rates": [2, 2] } },
             "experiment": { "kind": "compare", "final_time": 0.2, "seed": 1,
               "epsilons": [0.01, 0.005, 0.001], "initial_condition": "test1",
               "discretization": { "nx": 21, "particles": 400000, "order": 5 } } }"#,
    )?;
    let started = Instant::now();
    let res = compare(&doc.model, &doc.experiment, Execution::Sequential)?;
    let elapsed = started.elapsed().as_secs_f64();
    let last = res.rows.last().expect("three rows").l1;
    let table: Vec<String> = res
        .rows
        .iter()
        .map(|r| format!("eps {}: ({:.4}, {:.4})", r.epsilon, r.l1[0], r.l1[1]))
        .collect();
    Ok((
        res.strictly_decreasing() && last[0] <= 0.1 && last[1] <= 0.1 && elapsed <= 600.0,
        format!("L1 (lane1, lane2) {}; {elapsed:.0} s", table.join(", ")),
    ))
}

/// Root in `[max(0, ρ̄−1), min(1, ρ̄)]` of the `α = 1` stationarity condition
/// `β₁(1−ρ₂)ρ₁ = β₂(1−ρ₁)ρ₂`, written as a quadratic in `ρ₁`.
fn quadratic_split(beta: [f64; 2], total: f64) -> f64 {
    let r = beta[0] / beta[1];
    let (a, b, c) = (r - 1.0, r * (1.0 - total) + 1.0 + total, -total);
    if a == 0.0 {
        return -c / b;
    }
    let disc = (b * b - 4.0 * a * c).sqrt();
    let roots = if b >= 0.0 {
        [(-b - disc) / (2.0 * a), 2.0 * c / (-b - disc)]
    } else {
        [(-b + disc) / (2.0 * a), 2.0 * c / (-b + disc)]
    };
    let (lo, hi) = ((total - 1.0).max(0.0), total.min(1.0));
    roots
        .into_iter()
        .filter(|x| x.is_finite())
        .min_by(|x, y| {
            let out = |v: f64| (lo - v).max(v - hi).max(0.0);
            out(*x).total_cmp(&out(*y))
        })
        .expect("a finite root")
}

fn criterion_7() -> Outcome {
    let mut equal = 0.0_f64;
    for alpha in [0.5, 1.0, 2.0, 4.0] {
        let p = model(0.05, Penalization(0.01), [0.3, 0.3], alpha);
        for k in 1..=200 {
            let total = k as f64 / 100.0;
            let (_, r2) = equilibrium_density_split(total, &p.switching)?;
            let closure = fast_switching_closure(total, &p, FastFluxVariant::Weighted)?;
            equal = equal
                .max((r2 - total / 2.0).abs())
                .max((closure.rho[1] - total / 2.0).abs());
        }
    }
    let mut rng = StdRng::seed_from_u64(7);
    let mut quad = 0.0_f64;
    for _ in 0..50 {
        let beta = [rng.random_range(0.01..1.0), rng.random_range(0.01..1.0)];
        let total = rng.random_range(0.0..2.0);
        let sw = SwitchingSpec {
            beta,
            alpha: 1.0,
            ..Default::default()
        };
        let (r1, _) = equilibrium_density_split(total, &sw)?;
        quad = quad.max((r1 - quadratic_split(beta, total)).abs());
    }
    Ok((
        equal <= 1e-10 && quad <= 1e-10,
        format!("equal rates |rho2 - rho/2| = {equal:.2e}, alpha = 1 vs quadratic root {quad:.2e}"),
    ))
}

fn lwr(regime: HydroRegime, rates: [f64; 2]) -> Result<FluxModel, BoxError> {
    let mut p = model(0.05, Penalization::UNCONTROLLED, [0.0, 0.0], 2.0);
    p.switching.regime_rates = rates;
    Ok(FluxModel::build(
        regime,
        &p,
        LaneFluxKind::Aligned,
        FastFluxVariant::Weighted,
        3,
    )?)
}

/// Exact rarefaction of `ρ(1−ρ)` from `ρ_L = 0.8`, `ρ_R = 0.2`.
fn rarefaction(x: f64, t: f64) -> f64 {
    (0.5 * (1.0 - x / t)).clamp(0.2, 0.8)
}

fn criterion_8() -> Outcome {
    let collision = lwr(HydroRegime::Collision, [0.0; 2])?;
    let grid = Grid::new([-1.0, 1.0], 400);
    let mut riemann = 0.0_f64;
    for order in [1, 2, 5] {
        let mut s = HydroState::from_fn(grid, 2, |_, x| if x < 0.0 { 0.8 } else { 0.2 });
        fv_advance(&mut s, &collision, &FvScheme::new(order, 0.4), 0.5)?;
        let exact = HydroState::from_fn(grid, 1, |_, x| rarefaction(x, 0.5));
        let err: f64 = (0..grid.nx)
            .map(|i| (s.u[0][i] - exact.u[0][i]).abs())
            .sum::<f64>()
            * grid.dx();
        riemann = riemann.max(err);
    }

    let bump = |_: usize, x: f64| 0.3 + 0.2 * (-4.0 * x * x).exp();
    let solve = |nx: usize| -> Result<Vec<f64>, BoxError> {
        let mut s = HydroState::from_fn(Grid::new([-2.0, 2.0], nx), 2, bump);
        fv_advance(&mut s, &collision, &FvScheme::new(2, 0.4), 0.3)?;
        Ok(s.u[0].clone())
    };
    let sizes = [200, 400, 800, 1600];
    let sols: Vec<Vec<f64>> = sizes.iter().map(|&n| solve(n)).collect::<Result<_, _>>()?;
    let errors: Vec<f64> = sols
        .windows(2)
        .zip(sizes)
        .map(|(w, n)| {
            (0..n)
                .map(|i| (w[0][i] - 0.5 * (w[1][2 * i] + w[1][2 * i + 1])).abs())
                .sum::<f64>()
                * 4.0
                / n as f64
        })
        .collect();
    let rate = (errors[1] / errors[2]).log2();

    let slow = lwr(HydroRegime::Slow, [2.0, 2.0])?;
    let grid = Grid::new([-6.0, 6.0], 1200);
    let mut drift = 0.0_f64;
    let mut steps = 0;
    for order in [1, 2, 5] {
        let mut s = HydroState::from_fn(grid, 2, |k, x| match k {
            0 if (-1.0..0.0).contains(&x) => 0.8,
            1 if (0.0..1.0).contains(&x) => 0.5,
            _ => 0.0,
        });
        let m0 = s.total_mass();
        let scheme = FvScheme {
            order,
            cfl: 0.4,
            fixed_dt: Some(0.004),
        };
        let diag = fv_advance(&mut s, &slow, &scheme, 4.0)?;
        steps = steps.max(diag.steps);
        drift = drift.max((s.total_mass() - m0).abs() / (diag.steps as f64 / 1000.0));
    }
    Ok((
        riemann <= 2e-2 && rate >= 1.8 && drift <= 1e-12,
        format!(
            "rarefaction L1 {riemann:.2e} (worst of orders 1/2/5), order-2 self-convergence {rate:.2}, \
             mass drift {drift:.1e} per 1e3 steps ({steps} steps)"
        ),
    ))
}

fn criterion_9() -> Outcome {
    let uncontrolled = model(1.0, Penalization::UNCONTROLLED, [0.0, 0.0], 2.0);
    let mut checked = 0;
    let mut violation = 0.0_f64;
    for pstar in [1.0, 5.0, 100.0] {
        let controlled = model(1.0, Penalization(1.0 / pstar), [0.0, 0.0], 2.0);
        for k in 0..=1000 {
            let rho = k as f64 / 1000.0;
            let free = flux_collision_dominated(rho, 0, &uncontrolled);
            let m_free = if rho > 0.0 { free / rho } else { 1.0 };
            if 1.0 - rho >= m_free {
                checked += 1;
                violation = violation.max(free - flux_collision_dominated(rho, 0, &controlled));
            }
        }
    }
    Ok((
        violation <= 1e-14 && checked > 0,
        format!(
            "{checked} grid points under the mediant condition, worst shortfall {violation:.1e}"
        ),
    ))
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .expect("output directory")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            let name = p
                .file_name()
                .expect("file name")
                .to_string_lossy()
                .into_owned();
            (name, fs::read(&p).expect("readable csv"))
        })
        .collect()
}

fn criterion_10() -> Outcome {
    let doc = parse_document(
        r#"{ "model": { "gamma": 0.05, "mu": 2,
               "control": { "p": 0.05, "kappa": [0.01, 0.01], "recommended_speed": ["linear", "linear"] },
               "noise": { "lambda": [0.5, 0.5] },
               "switching": { "beta": [0.02, 0.02], "alpha": 2 } },
             "experiment": { "kind": "dsmc", "final_time": 0.1, "epsilon": 0.01, "seed": 11,
               "snapshots": [0.05, 0.1], "phase_histogram": true,
               "discretization": { "particles": 20000, "nv": 32 } } }"#,
    )?;
    let root = tempfile::tempdir()?;
    let run = |name: &str, exec: Execution| -> Result<BTreeMap<String, Vec<u8>>, BoxError> {
        let dir = root.path().join(name);
        fs::create_dir_all(&dir)?;
        let report = execute(&doc, &dir, exec)?;
        assert!(report.passed());
        Ok(csv_files(&dir))
    };
    let first = run("sequential_a", Execution::Sequential)?;
    let second = run("sequential_b", Execution::Sequential)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build()?;
    let parallel = pool.install(|| run("parallel", Execution::Parallel))?;
    Ok((
        first.len() >= 4 && first == second && first == parallel,
        format!(
            "{} CSV files; repeat identical: {}, 4-thread pool identical: {}",
            first.len(),
            first == second,
            first == parallel
        ),
    ))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        ("mass conservation (moments)", criterion_1),
        ("density fixed point", criterion_2),
        ("mean-speed asymptotics", criterion_3),
        ("control alignment", criterion_4),
        ("Beta equilibrium (particles)", criterion_5),
        ("kinetic to hydrodynamic convergence", criterion_6),
        ("fast-switching closure", criterion_7),
        ("finite-volume verification", criterion_8),
        ("flux ordering", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut failed = Vec::new();
    for (k, (title, check)) in criteria.iter().enumerate() {
        let (passed, detail) = match std::panic::catch_unwind(check) {
            Ok(Ok(outcome)) => outcome,
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".into()),
        };
        let status = if passed { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {status}: {title}: {detail}", k + 1);
        if !passed {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
