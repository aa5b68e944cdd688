//! Acceptance run. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use chemotaxis_fkpp::experiments::{
    calibrate, epsilon_sweep, fit_c6, spatial_order, temporal_order, verify_bounds,
    verify_diffineq, OrderStatus, Profile, RefinementConfig, SweepConfig, DEFAULT_DIFFINEQ_TOL,
    DEFAULT_SLACK,
};
use chemotaxis_fkpp::grid::{chemotaxis_divergence, face_gradient, laplacian_neumann};
use chemotaxis_fkpp::solver::{
    every_step, simulate, simulate_fkpp, simulate_with_reference, stability_dt, Stepper,
};
use chemotaxis_fkpp::{Field, FluxMode, Grid, ModelParams, State, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn desk() -> SweepConfig {
    SweepConfig::desk_default()
}

fn desk_fields(cfg: &SweepConfig) -> (Field, Field) {
    let grid = cfg.grid.build().unwrap();
    (cfg.u0.sample(&grid).unwrap(), cfg.v0.sample(&grid).unwrap())
}

/// Paired run at `epsilon` with the reference attached, as the audits need.
fn paired(cfg: &SweepConfig, u0: &Field, v0: &Field, epsilon: f64) -> Trajectory {
    let ref_params = cfg.params(0.0);
    let reference = simulate_fkpp(u0, &ref_params, &every_step(&ref_params)).unwrap();
    simulate_with_reference(u0, v0, &cfg.params(epsilon), &[], &reference, &cfg.ks).unwrap()
}

fn linear_rate() -> Outcome {
    let cfg = desk();
    let start = Instant::now();
    let coarse = epsilon_sweep(&cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut fine_cfg = cfg.clone();
    fine_cfg.grid.cells = vec![512];
    let fine = epsilon_sweep(&fine_cfg).map_err(|e| e.to_string())?;
    let slope = coarse.fit.unwrap().slope;
    let fine_slope = fine.fit.unwrap().slope;
    let ratios = coarse.ratios();
    let ok = (0.85..=1.15).contains(&slope)
        && ratios.iter().all(|r| (0.4..=0.6).contains(r))
        && (fine_slope - slope).abs() < 0.05
        && elapsed < 120.0;
    check(
        ok,
        format!(
            "slope {slope:.4} (512 cells: {fine_slope:.4}), ratios {:?}, 256-cell sweep {elapsed:.1} s",
            ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>()
        ),
    )
}

fn zero_epsilon_equivalence() -> Outcome {
    let cfg = desk();
    let (u0, v0) = desk_fields(&cfg);
    let run = paired(&cfg, &u0, &v0, 0.0);
    let worst = run.deviation.iter().map(|d| d.sup).fold(0.0, f64::max);
    // independent comparison of the final states
    let p = cfg.params(0.0);
    let a = simulate(&u0, &v0, &p, &[p.horizon]).unwrap();
    let b = simulate_fkpp(&u0, &p, &[p.horizon]).unwrap();
    let end = a
        .final_snapshot()
        .u
        .values()
        .iter()
        .zip(b.final_snapshot().u.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    check(
        worst <= 1e-12 && end <= 1e-12 && run.deviation.len() == p.steps() + 1,
        format!(
            "sup difference {worst:e} over {} steps, final {end:e}",
            p.steps()
        ),
    )
}

fn logistic_oracle() -> Outcome {
    let exact = std::f64::consts::E / (1.0 + std::f64::consts::E);
    let grid = Arc::new(Grid::new_1d(1.0, 32).unwrap());
    let u0 = Field::constant(grid.clone(), 0.5);
    let mut worst_ratio: f64 = 0.0;
    let mut orders = Vec::new();
    for eps in [0.0, 0.01, 0.02, 0.04] {
        for dt in [4e-3, 2e-3, 1e-3] {
            let p = ModelParams::new(eps, 1.0, dt, 1.0);
            let traj = simulate(&u0, &u0, &p, &[1.0]).unwrap();
            let err = traj
                .final_snapshot()
                .u
                .values()
                .iter()
                .map(|x| (x - exact).abs())
                .fold(0.0, f64::max);
            worst_ratio = worst_ratio.max(err / dt);
        }
        let cfg = RefinementConfig {
            epsilon: eps,
            ..RefinementConfig::logistic_default()
        };
        let est = temporal_order(&cfg).map_err(|e| e.to_string())?;
        if est.status != OrderStatus::Measured {
            return Err(format!("temporal order at epsilon {eps}: {:?}", est.status));
        }
        orders.push(est.order);
    }
    check(
        worst_ratio <= 5.0 && orders.iter().all(|o| (0.8..=1.2).contains(o)),
        format!("max |u(1) - e/(1+e)| / dt = {worst_ratio:.4}, temporal orders {orders:.4?}"),
    )
}

fn steady_state() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for grid in [
        Arc::new(Grid::new_1d(1.0, 64).unwrap()),
        Arc::new(Grid::new_2d([1.0, 2.0], [16, 24]).unwrap()),
    ] {
        let n = grid.dim() as f64;
        for mu in [0.5, 1.0, 4.0] {
            for frac in [0.0, 0.45, 0.9] {
                let eps = frac * 4.0 * mu / n;
                for mode in [FluxMode::Central, FluxMode::Upwind] {
                    let p = ModelParams::new(eps, mu, 1e-2, 1.0).with_flux_mode(mode);
                    let stepper = Stepper::new(grid.clone(), p).unwrap();
                    let one = Field::constant(grid.clone(), 1.0);
                    let mut state = State::new(one.clone(), one).unwrap();
                    for _ in 0..5 {
                        state = stepper.step(&state).unwrap();
                        for x in state.u.values().iter().chain(state.v.values()) {
                            worst = worst.max((x - 1.0).abs());
                        }
                    }
                    cases += 1;
                }
            }
        }
    }
    check(
        worst <= 1e-12,
        format!("max drift {worst:e} over {cases} (grid, mu, epsilon, flux) cases"),
    )
}

fn random_field(grid: &Arc<Grid>, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Field {
    let values = (0..grid.len()).map(|_| rng.gen_range(lo..hi)).collect();
    Field::new(grid.clone(), values).unwrap()
}

fn conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let grid = if i % 2 == 0 {
            Arc::new(Grid::new_1d(rng.gen_range(0.5..3.0), rng.gen_range(4..200)).unwrap())
        } else {
            let cells = [rng.gen_range(4..40), rng.gen_range(4..40)];
            Arc::new(
                Grid::new_2d([rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0)], cells).unwrap(),
            )
        };
        let u = random_field(&grid, &mut rng, 0.0, 5.0);
        let v = random_field(&grid, &mut rng, -2.0, 2.0);
        let vol = grid.cell_volume();
        let rel = |f: &Field| {
            let sum: f64 = f.values().iter().sum::<f64>() * vol;
            let scale: f64 = f.values().iter().map(|x| x.abs()).sum::<f64>() * vol;
            sum.abs() / scale.max(f64::MIN_POSITIVE)
        };
        worst = worst.max(rel(&laplacian_neumann(&u)));
        for mode in [FluxMode::Central, FluxMode::Upwind] {
            worst = worst.max(rel(&chemotaxis_divergence(&u, &v, mode).unwrap()));
        }
    }
    check(
        worst <= 1e-12,
        format!("worst relative cell-weighted sum {worst:e} on 50 fields"),
    )
}

fn spatial_accuracy() -> Outcome {
    let est = spatial_order(&RefinementConfig::heat_default()).map_err(|e| e.to_string())?;
    check(
        est.status == OrderStatus::Measured && (1.8..=2.2).contains(&est.order),
        format!(
            "spatial order {:.4}, pairwise {:.4?}",
            est.order, est.pairwise
        ),
    )
}

fn bound_suite() -> Outcome {
    let cfg = desk();
    let (u0, v0) = desk_fields(&cfg);
    let cal = paired(&cfg, &u0, &v0, 0.02);
    let constants = calibrate(&cal).map_err(|e| e.to_string())?;
    let grid = cfg.grid.build().unwrap();
    let gu = Profile::Gaussian {
        base: 0.5,
        amplitude: 0.4,
        center: vec![0.3],
        width: 0.1,
    }
    .sample(&grid)
    .unwrap();
    let gv = Field::constant(grid, 0.5);
    let val = paired(&cfg, &gu, &gv, 0.02);
    let report = verify_bounds(&val, &constants, DEFAULT_SLACK).map_err(|e| e.to_string())?;
    let failed: Vec<_> = report
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.clone())
        .collect();

    // the two late-time bounds, checked directly against the diagnostics
    let bounds = chemotaxis_fkpp::bounds::lower_bound_u;
    let mut late_ok = true;
    for d in val.diagnostics.iter().filter(|d| d.time >= 3.0) {
        let lb = bounds(d.time, 0.02, cfg.mu, constants.c16, constants.c19).unwrap();
        late_ok &= lb <= d.min_u * (1.0 + 4.0 * f64::EPSILON);
        late_ok &= d.sup_lap_v <= DEFAULT_SLACK * constants.c16;
    }
    check(
        failed.is_empty() && late_ok && report.checks.len() == 10,
        format!(
            "{} of {} checks pass at slack {DEFAULT_SLACK}{}",
            report.checks.len() - failed.len(),
            report.checks.len(),
            if failed.is_empty() {
                String::new()
            } else {
                format!("; failed {failed:?}")
            }
        ),
    )
}

fn diffineq_audit() -> Outcome {
    let cfg = desk();
    let (u0, v0) = desk_fields(&cfg);
    let run = paired(&cfg, &u0, &v0, 0.02);
    let mut constants = calibrate(&run).map_err(|e| e.to_string())?;
    let mut half_cfg = cfg.clone();
    half_cfg.dt /= 2.0;
    let half = paired(&half_cfg, &u0, &v0, 0.02);
    let mut detail = Vec::new();
    let mut ok = true;
    for k in [1, 2] {
        constants
            .c6k
            .insert(k, fit_c6(&run, k, cfg.mu).map_err(|e| e.to_string())?);
        let a = verify_diffineq(&run, k, cfg.mu, DEFAULT_DIFFINEQ_TOL, &constants)
            .map_err(|e| e.to_string())?;
        let b = verify_diffineq(&half, k, cfg.mu, DEFAULT_DIFFINEQ_TOL, &constants)
            .map_err(|e| e.to_string())?;
        ok &= a.failures() == 0 && b.failures() <= a.failures() && !a.intervals.is_empty();
        detail.push(format!(
            "k={k}: {}/{} pass at dt, {} failures at dt/2",
            a.intervals.len() - a.failures(),
            a.intervals.len(),
            b.failures()
        ));
    }
    check(ok, detail.join("; "))
}

fn positivity() -> Outcome {
    let grid = Arc::new(Grid::new_1d(1.0, 128).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = f64::INFINITY;
    let mut steps = 0;
    for seed in 0..20 {
        let smooth = |base: f64, amplitude: f64, seed: u64| Profile::RandomSmooth {
            base,
            amplitude,
            modes: 6,
            seed,
        };
        let base = rng.gen_range(0.2..1.5);
        let u0 = smooth(base, base * rng.gen_range(0.5..1.0), seed)
            .sample(&grid)
            .unwrap();
        let base = rng.gen_range(0.2..1.5);
        let v0 = smooth(base, base * rng.gen_range(0.5..1.0), seed + 100)
            .sample(&grid)
            .unwrap();
        let mu = rng.gen_range(0.5..2.0);
        let eps = rng.gen_range(0.05..3.5) * mu;
        let mut p = ModelParams::new(eps, mu, 1.0, 5.0).with_flux_mode(FluxMode::Upwind);
        p.dt = stability_dt(&p, &grid, u0.max(), face_gradient(&v0).max_abs()).min(0.05);
        // land exactly on the horizon
        p.dt = p.horizon / (p.horizon / p.dt).ceil();
        let traj = simulate(&u0, &v0, &p, &[]).map_err(|e| format!("seed {seed}: {e}"))?;
        steps += traj.diagnostics.len();
        for d in &traj.diagnostics {
            worst = worst.min(d.min_u).min(d.min_v);
        }
    }
    check(
        worst >= 0.0,
        format!("min over u and v {worst:e} across 20 ICs ({steps} steps)"),
    )
}

fn sweep_cli(out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_chemotaxis-fkpp"))
        .arg("sweep")
        .arg("--out")
        .arg(out)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    sweep_cli(&a);
    sweep_cli(&b);
    let mut same = true;
    for name in ["sweep.csv", "manifest.toml"] {
        same &= std::fs::read(a.join(name)).unwrap() == std::fs::read(b.join(name)).unwrap();
    }
    check(
        same,
        "sweep.csv and manifest.toml byte-identical across two runs".into(),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("linear rate in epsilon", linear_rate),
        ("epsilon = 0 matches Fisher-KPP", zero_epsilon_equivalence),
        ("logistic oracle and temporal order", logistic_oracle),
        ("steady state (1, 1) invariant", steady_state),
        ("discrete conservation", conservation),
        ("spatial order", spatial_accuracy),
        ("bound suite", bound_suite),
        ("differential-inequality audit", diffineq_audit),
        ("positivity under upwinding", positivity),
        ("CLI reproducibility", reproducibility),
    ];
    // panics are reported on the FAIL line instead
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {}: {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria pass",
        criteria.len() - failures,
        criteria.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
