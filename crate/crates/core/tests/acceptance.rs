//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use cbf_lp::cli::{run_command, RunManifest};
use cbf_lp::geometry::Environment;
use cbf_lp::lp::{solve_lp, LpStatus};
use cbf_lp::sim::{monte_carlo, run_patrol, ErrorMode, ErrorModel, Normalization, PatrolConfig};
use cbf_lp::synthesis::{
    assemble_fixed_scale_lp, assemble_robust_lp, measurement_operator, s_coeff_unit, s_coeff_vec, sweep_cv,
    synthesize_cell, Gains, GainsDocument, SweepStatus, SynthesisConfig,
};
use cbf_lp::verify::{box_max, duality_gap_check, worst_case_residuals};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LO: f64 = 1.0 / 1.5;
const HI: f64 = 1.5;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gains_from_doc(path: &Path) -> BTreeMap<usize, Gains> {
    GainsDocument::from_json(&std::fs::read_to_string(path).unwrap())
        .unwrap()
        .gains_map()
        .unwrap()
}

fn cli(args: &[&str]) -> i32 {
    run_command(args.iter().map(|s| s.to_string()))
}

fn oracle_certification(env: &Environment, dir: &Path) -> Outcome {
    let out = dir.join("gains.json").display().to_string();
    let env_arg = common::fixture_path().display().to_string();
    let code = cli(&[
        "synth",
        "--env",
        &env_arg,
        "--cv",
        "0.5",
        "--ch",
        "1",
        "--smin",
        &LO.to_string(),
        "--smax",
        "1.5",
        "-o",
        &out,
    ]);
    if code != 0 {
        return Err(format!("synth exited with {code}"));
    }
    let gains = gains_from_doc(Path::new(&out));
    let cfg = SynthesisConfig::new(env.num_landmarks());
    let mut worst = f64::INFINITY;
    let mut slowest = Duration::ZERO;
    for (i, cell) in env.cells().iter().enumerate() {
        let t = Instant::now();
        synthesize_cell(cell, env, &cfg).map_err(|e| format!("cell {i}: {e}"))?;
        let report = worst_case_residuals(cell, env, &gains[&i], &cfg).map_err(|e| e.to_string())?;
        slowest = slowest.max(t.elapsed());
        worst = worst.min(report.min_residual);
    }
    ensure(
        worst >= -1e-6 && slowest < Duration::from_secs(5),
        format!(
            "min residual {worst:.3e} over {} cells, slowest cell {slowest:?}",
            env.cells().len()
        ),
    )
}

fn nominal_equivalence() -> Outcome {
    let env = common::square_env();
    let cell = env.cell(0);
    let nominal = SynthesisConfig::uniform(2, 1.0, 1.0);
    let robust = solve_lp(&assemble_robust_lp(cell, &env, &nominal).unwrap().lp).unwrap();
    let (fixed, _) = assemble_fixed_scale_lp(cell, &env, &nominal, &[1.0, 1.0]).unwrap();
    let fixed = solve_lp(&fixed).unwrap();
    if robust.status != LpStatus::Optimal || fixed.status != LpStatus::Optimal {
        return Err(format!("statuses {:?} / {:?}", robust.status, fixed.status));
    }
    let diff = (robust.objective - fixed.objective).abs();

    let cfg = SynthesisConfig::new(2);
    let rp = assemble_robust_lp(cell, &env, &cfg).unwrap();
    let sol = solve_lp(&rp.lp).unwrap();
    let gap = duality_gap_check(&rp, &sol, cell, &env, &cfg).map_err(|e| e.to_string())?;
    let g = synthesize_cell(cell, &env, &cfg).map_err(|e| e.to_string())?.gains;
    let brute = worst_case_residuals(cell, &env, &g, &cfg).unwrap().min_residual;
    ensure(
        diff <= 1e-6 && gap.pass && brute >= -1e-6,
        format!(
            "|robust - fixed| = {diff:.2e}, gap check {} (min gap {:.2e}), brute-force margin {brute:.2e}",
            if gap.pass { "passed" } else { "failed" },
            gap.min_gap
        ),
    )
}

fn patrol_safety(env: &Environment, gains: &BTreeMap<usize, Gains>) -> Outcome {
    let n = env.num_landmarks();
    let mut details = Vec::new();
    let mut ok = true;
    for start in [[3.0, 5.0], [15.0, 5.0]] {
        for s in [1.0, HI, LO] {
            let model = ErrorModel::new(ErrorMode::Constant { s: vec![s; n] }, n, LO, HI);
            let x0 = DVector::from_row_slice(&start);
            match run_patrol(env, gains, &model, &x0, &PatrolConfig::default()) {
                Ok(t) => {
                    let every = t.cells_exited.iter().all(|c| *c > 0);
                    let pass = t.laps_completed >= 2 && t.min_barrier() >= -1e-4 && every;
                    ok &= pass;
                    details.push(format!(
                        "x0={start:?} s={s:.3}: {} laps, min h {:+.1e}",
                        t.laps_completed,
                        t.min_barrier()
                    ));
                }
                Err(e) => {
                    ok = false;
                    details.push(format!("x0={start:?} s={s:.3}: {e}"));
                }
            }
        }
    }
    ensure(ok, details.join("; "))
}

fn random_patrols(env: &Environment, gains: &BTreeMap<usize, Gains>) -> Outcome {
    let n = env.num_landmarks();
    let x0 = DVector::from_vec(vec![3.0, 5.0]);
    let cfg = PatrolConfig::default();
    let reference = run_patrol(env, gains, &ErrorModel::exact(n), &x0, &cfg).map_err(|e| e.to_string())?;
    let subset: Vec<ErrorModel> = (0..100)
        .map(|seed| ErrorModel::new(ErrorMode::PerStepSubset { count: 2, seed }, n, LO, HI))
        .collect();
    let all: Vec<ErrorModel> = (0..100)
        .map(|seed| ErrorModel::new(ErrorMode::PerStepAll { seed }, n, LO, HI))
        .collect();
    let (sub, _) = monte_carlo(env, gains, &subset, &x0, &cfg, &reference);
    let (every, _) = monte_carlo(env, gains, &all, &x0, &cfg, &reference);
    ensure(
        sub.aborted == 0 && every.aborted == 0 && every.mean_deviation >= sub.mean_deviation,
        format!(
            "aborts {}/{}, mean deviation all {:.4} vs subset(2) {:.4}",
            every.aborted, sub.aborted, every.mean_deviation, sub.mean_deviation
        ),
    )
}

fn sweep_trend(env: &Environment) -> Outcome {
    let grid = [0.1, 0.2, 0.5, 1.0, 2.0];
    let cfg = SynthesisConfig::new(env.num_landmarks());
    let t = Instant::now();
    let mut ok = true;
    let mut details = Vec::new();
    for (i, cell) in env.cells().iter().enumerate() {
        let rows = sweep_cv(cell, env, &cfg, &grid, 1e-3);
        let alphas: Vec<Option<f64>> = rows.iter().map(|r| r.alpha_star).collect();
        let complete = rows
            .iter()
            .all(|r| matches!(r.status, SweepStatus::Ok | SweepStatus::Capped));
        let monotone = alphas.windows(2).all(|w| matches!(w, [Some(a), Some(b)] if b <= a));
        ok &= complete && monotone;
        let shown: Vec<String> = alphas
            .iter()
            .map(|a| a.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()))
            .collect();
        details.push(format!("cell {i} [{}]", shown.join(", ")));
    }
    let elapsed = t.elapsed();
    ensure(
        ok && elapsed < Duration::from_secs(120),
        format!("{} in {elapsed:.2?}", details.join(" ")),
    )
}

fn linearization_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let n = rng.random_range(1..=3);
        let count = rng.random_range(1..=6);
        let a: Vec<f64> = (0..n * count).map(|_| rng.random_range(-2.0..2.0)).collect();
        let l = DMatrix::from_fn(n, count, |_, _| rng.random_range(-30.0..30.0));
        let x = DVector::from_fn(n, |_, _| rng.random_range(-30.0..30.0));
        let s: Vec<f64> = (0..count).map(|_| rng.random_range(LO..HI)).collect();
        let (istack, lvec) = measurement_operator(&l);
        let mut d = DMatrix::zeros(n * count, n * count);
        for j in 0..count {
            for t in 0..n {
                d[(j * n + t, j * n + t)] = s[j];
            }
        }
        let row = DMatrix::from_row_slice(1, n * count, &a);
        let explicit_vec = (&row * &d * &lvec)[(0, 0)];
        let explicit_unit = &row * &d * &istack;
        let cv = s_coeff_vec(&a, lvec.as_slice(), n, count).unwrap();
        let via_vec: f64 = s.iter().zip(&cv).map(|(p, q)| p * q).sum();
        worst = worst.max((explicit_vec - via_vec).abs());
        for col in 0..n {
            let cu = s_coeff_unit(&a, col, n, count).unwrap();
            let via_unit: f64 = s.iter().zip(&cu).map(|(p, q)| p * q).sum();
            worst = worst.max((explicit_unit[(0, col)] - via_unit).abs());
        }
        let direct = (&row * &d * (&lvec - &istack * &x))[(0, 0)];
        let rebuilt = via_vec
            - (0..n)
                .map(|t| {
                    let cu = s_coeff_unit(&a, t, n, count).unwrap();
                    x[t] * s.iter().zip(&cu).map(|(p, q)| p * q).sum::<f64>()
                })
                .sum::<f64>();
        worst = worst.max((direct - rebuilt).abs());
    }
    ensure(worst <= 1e-10, format!("100 trials, max error {worst:.2e}"))
}

fn box_maximum() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut trials = 0;
    // Dyadic data keeps every sum exact, so equality is meaningful.
    let dyadic = |rng: &mut ChaCha8Rng, lo: i32, hi: i32| f64::from(rng.random_range(lo..=hi)) / 8.0;
    for count in 1..=10usize {
        for _ in 0..20 {
            let m: Vec<f64> = (0..count).map(|_| dyadic(&mut rng, -80, 80)).collect();
            let lo: Vec<f64> = (0..count).map(|_| dyadic(&mut rng, 1, 8)).collect();
            let hi: Vec<f64> = lo.iter().map(|l| l + dyadic(&mut rng, 0, 16)).collect();
            let mut best = f64::NEG_INFINITY;
            for mask in 0u32..(1 << count) {
                let v: f64 = (0..count)
                    .map(|j| if mask >> j & 1 == 1 { hi[j] } else { lo[j] } * m[j])
                    .sum();
                best = best.max(v);
            }
            if box_max(&m, &lo, &hi) != best {
                return Err(format!(
                    "N = {count}: formula {} vs enumeration {best}",
                    box_max(&m, &lo, &hi)
                ));
            }
            trials += 1;
        }
    }
    Ok(format!("{trials} boxes with N = 1..10 match enumeration exactly"))
}

fn lyapunov_decrease(env: &Environment, gains: &BTreeMap<usize, Gains>) -> Outcome {
    let cfg = PatrolConfig {
        normalize: Normalization::Off,
        ..PatrolConfig::default()
    };
    let t = run_patrol(
        env,
        gains,
        &ErrorModel::exact(env.num_landmarks()),
        &DVector::from_vec(vec![3.0, 5.0]),
        &cfg,
    )
    .map_err(|e| e.to_string())?;
    let worst = t
        .rows
        .windows(2)
        .filter(|w| w[0].cell == w[1].cell)
        .map(|w| w[1].v - w[0].v)
        .fold(f64::NEG_INFINITY, f64::max);
    ensure(
        worst <= 1e-6,
        format!("{} steps, largest in-cell increase {worst:.2e}", t.rows.len()),
    )
}

fn determinism(dir: &Path) -> Outcome {
    let env_arg = common::fixture_path().display().to_string();
    let d = |name: &str| dir.join(name).display().to_string();
    let gains = d("det_gains.json");
    let runs: Vec<Vec<String>> = vec![
        vec![
            "synth".into(),
            "--env".into(),
            env_arg.clone(),
            "-o".into(),
            gains.clone(),
        ],
        vec![
            "sweep".into(),
            "--env".into(),
            env_arg.clone(),
            "--cell".into(),
            "3".into(),
            "-o".into(),
            d("det_sweep.csv"),
        ],
        vec![
            "simulate".into(),
            "--env".into(),
            env_arg.clone(),
            "--gains".into(),
            gains.clone(),
            "--errors".into(),
            "per-step-all".into(),
            "--seed".into(),
            "3".into(),
            "-o".into(),
            d("det_trace.csv"),
        ],
    ];
    let mut checked = Vec::new();
    for args in &runs {
        let out = Path::new(args.last().unwrap()).to_path_buf();
        if run_command(args.clone()) != 0 {
            return Err(format!("{} failed", args[0]));
        }
        let first = std::fs::read(&out).unwrap();
        let manifest = RunManifest::path_for(&out);
        let m_first = std::fs::read(&manifest).unwrap();
        std::fs::remove_file(&out).unwrap();
        if run_command(["replay".to_string(), manifest.display().to_string()]) != 0 {
            return Err(format!("replay of {} failed", args[0]));
        }
        if std::fs::read(&out).unwrap() != first || std::fs::read(&manifest).unwrap() != m_first {
            return Err(format!("{} output differs on replay", out.display()));
        }
        checked.push(format!(
            "{} ({} bytes)",
            out.file_name().unwrap().to_string_lossy(),
            first.len()
        ));
    }
    Ok(format!("byte-identical on replay: {}", checked.join(", ")))
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let env = common::fixture();
    let gains = common::fixture_gains(&env);
    let criteria: Vec<Criterion> = vec![
        (
            "oracle certification",
            Box::new(|| oracle_certification(&env, dir.path())),
        ),
        ("nominal equivalence and duality gap", Box::new(nominal_equivalence)),
        (
            "patrol safety under constant scale",
            Box::new(|| patrol_safety(&env, &gains)),
        ),
        ("random-error patrols", Box::new(|| random_patrols(&env, &gains))),
        ("decay-rate sweep trend", Box::new(|| sweep_trend(&env))),
        ("linearization identities", Box::new(linearization_identities)),
        ("box-maximum oracle", Box::new(box_maximum)),
        ("Lyapunov decrease", Box::new(|| lyapunov_decrease(&env, &gains))),
        ("determinism", Box::new(|| determinism(dir.path()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome =
            std::panic::catch_unwind(std::panic::AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {} {name}: {detail} [{:.2?}]", i + 1, t.elapsed());
    }
    println!(
        "{} of {} acceptance criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
