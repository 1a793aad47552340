//! End-to-end acceptance run: one PASS/FAIL line per criterion.

use std::path::Path;
use std::time::{Duration, Instant};

use collapse_core::gamblers::win_probability_exact;
use collapse_lab_cli::output::Summary;
use collapse_lab_cli::{execute, prepare, Overrides, RunReport};
use num_bigint::BigInt;
use num_rational::BigRational;

type Outcome = Result<String, String>;

fn run(dir: &Path, tag: &str, toml: &str, trajectories: Option<u64>, workers: Option<usize>) -> Result<(RunReport, Duration), String> {
    let overrides = Overrides {
        trajectories,
        out: Some(dir.join(tag)),
        ..Default::default()
    };
    let prepared = prepare(toml, &overrides).map_err(|v| format!("{v:?}"))?;
    let start = Instant::now();
    let report = execute(prepared, workers).map_err(|e| e.to_string())?;
    Ok((report, start.elapsed()))
}

fn invariant(s: &Summary, name: &str) -> Outcome {
    match s.invariants.iter().find(|i| i.name == name) {
        Some(i) if i.passed => Ok(format!("{name}={:.4e}", i.measured)),
        Some(i) => Err(format!("{name}={:.4e} ({})", i.measured, i.tolerance)),
        None => Err(format!("{name} missing")),
    }
}

fn all(parts: Vec<Outcome>) -> Outcome {
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for p in parts {
        match p {
            Ok(m) => ok.push(m),
            Err(m) => bad.push(m),
        }
    }
    if bad.is_empty() {
        Ok(ok.join(", "))
    } else {
        Err(bad.join(", "))
    }
}

fn within_time(d: Duration, limit: Duration) -> Outcome {
    if d < limit {
        Ok(format!("{:.1}s", d.as_secs_f64()))
    } else {
        Err(format!("took {:.1}s, target {}s", d.as_secs_f64(), limit.as_secs()))
    }
}

fn criterion_1(dir: &Path) -> Outcome {
    let (r, t) = run(dir, "c1", "experiment = \"born-frequencies\"\nmaster_seed = 11\n[model]\nx0 = [0.3, 0.7]\n", Some(10_000), None)?;
    all(vec![invariant(&r.summary, "born-frequency-0"), within_time(t, Duration::from_secs(60))])
}

fn criterion_2(dir: &Path) -> Outcome {
    let (r, _) = run(dir, "c2", "experiment = \"fp-oracle\"\nmaster_seed = 12\n[model]\nx0 = 0.3\ncells = 400\nt_final = 2.0\n", Some(10_000), None)?;
    all(vec![invariant(&r.summary, "pde-cross-moment"), invariant(&r.summary, "sde-cross-moment")])
}

fn criterion_3(dir: &Path) -> Outcome {
    let cases = [
        ("c3-random-phase", "experiment = \"random-phase\"\nmaster_seed = 13\n[model]\nx0 = [0.5, 0.5]\n"),
        ("c3-born", "experiment = \"born-frequencies\"\nmaster_seed = 13\n[model]\nx0 = [0.2, 0.3, 0.5]\n"),
        ("c3-gamblers", "experiment = \"gamblers-ruin\"\nmaster_seed = 13\n"),
        ("c3-csl", "experiment = \"csl-commuting\"\nmaster_seed = 13\n"),
    ];
    let mut parts = Vec::new();
    for (tag, toml) in cases {
        let (r, _) = run(dir, tag, toml, Some(10_000), None)?;
        parts.push(invariant(&r.summary, "martingale").map(|m| format!("{}: {m}", r.summary.experiment)));
    }
    all(parts)
}

fn criterion_4(dir: &Path) -> Outcome {
    let mut parts = Vec::new();
    for steps in [10u64, 100, 1_000, 10_000] {
        let delta = BigRational::new(BigInt::from(1), BigInt::from(steps));
        let exact = [1, steps / 3, steps / 2, steps - 1].iter().all(|&k| {
            let x = BigRational::new(BigInt::from(k), BigInt::from(steps));
            win_probability_exact(&x, &delta).map(|q| q == x).unwrap_or(false)
        });
        parts.push(if exact { Ok(format!("Q=x at 1/delta={steps}")) } else { Err(format!("Q!=x at 1/delta={steps}")) });
    }
    let (r, _) = run(dir, "c4", "experiment = \"gamblers-ruin\"\nmaster_seed = 14\n[model]\nfractions = [0.3, 0.7]\ndelta = 0.01\n", Some(10_000), None)?;
    parts.push(invariant(&r.summary, "win-frequency-0"));
    parts.push(invariant(&r.summary, "exact-win-probability"));
    all(parts)
}

fn criterion_5(dir: &Path) -> Outcome {
    let toml = "experiment = \"csl-commuting\"\nmaster_seed = 15\n[model]\neigenvalues = [0.0, 1.0]\nx0 = [0.3, 0.7]\nlambda = 1.0\nt_final = 4.0\ndt = 0.02\n";
    let (r, t) = run(dir, "c5", toml, Some(100_000), None)?;
    // λ t Δa² = 2 at t = 2, where the ratio column must read e^{-1}
    let moments = std::fs::read_to_string(r.output_dir.join("moments.csv")).map_err(|e| e.to_string())?;
    let row = moments
        .lines()
        .skip(1)
        .find(|l| l.split(',').next().and_then(|v| v.parse::<f64>().ok()).is_some_and(|v| (v - 2.0).abs() < 1e-9))
        .ok_or("no row at t = 2")?;
    let cols: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
    let (ratio, se, theory, zmax) = (cols[7], cols[8], cols[9], cols[10]);
    let z = (ratio - (-1f64).exp()).abs() / se;
    all(vec![
        if (theory - (-1f64).exp()).abs() < 1e-15 && z < 5.0 {
            Ok(format!("ratio={ratio:.5} z={z:.2}"))
        } else {
            Err(format!("ratio={ratio:.5} z={z:.2}"))
        },
        if zmax < 5.0 { Ok(format!("elementwise z={zmax:.2}")) } else { Err(format!("elementwise z={zmax:.2}")) },
        invariant(&r.summary, "density-matrix"),
        within_time(t, Duration::from_secs(300)),
    ])
}

fn criterion_6(dir: &Path) -> Outcome {
    let (r, _) = run(dir, "c6", "experiment = \"csl-lattice\"\nmaster_seed = 16\n[model]\nsites = 64\n", Some(10_000), None)?;
    invariant(&r.summary, "density-matrix")
}

fn criterion_7(dir: &Path) -> Outcome {
    let (r, _) = run(dir, "c7", "experiment = \"csl-unitary-check\"\n[model]\norders = [8, 16, 24, 32, 40, 48, 56, 64]\n", None, None)?;
    all(vec![invariant(&r.summary, "deviation-at-max-order"), invariant(&r.summary, "monotone-convergence")])
}

fn criterion_8(dir: &Path) -> Outcome {
    let (r, _) = run(dir, "c8", "experiment = \"sl-hits\"\nmaster_seed = 18\n", Some(10_000), None)?;
    all(
        ["hit-selection", "entangled-collapse-time", "energy-gain-positive", "energy-gain-oracle"]
            .iter()
            .map(|n| invariant(&r.summary, n))
            .collect(),
    )
}

fn criterion_9(dir: &Path) -> Outcome {
    let (r, _) = run(dir, "c9", "experiment = \"hidden-variables\"\nmaster_seed = 19\n[model]\nn_angles = 10\n", Some(20_000), None)?;
    all(["orthogonal-axis", "mc-vs-quadrature", "complementarity"].iter().map(|n| invariant(&r.summary, n)).collect())
}

fn criterion_10(dir: &Path) -> Outcome {
    let cases = [
        ("born-frequencies", 2_000),
        ("random-phase", 1_000),
        ("fp-oracle", 1_000),
        ("gamblers-ruin", 2_000),
        ("sl-hits", 500),
        ("csl-commuting", 5_000),
        ("csl-lattice", 300),
        ("csl-unitary-check", 0),
        ("hidden-variables", 2_000),
    ];
    let mut parts = Vec::new();
    for (name, n) in cases {
        let toml = format!("experiment = \"{name}\"\nmaster_seed = 1010\n");
        let (a, _) = run(dir, &format!("c10-{name}-1"), &toml, Some(n), Some(1))?;
        let (b, _) = run(dir, &format!("c10-{name}-3"), &toml, Some(n), Some(3))?;
        let same = ["moments.csv", "outcomes.csv"].iter().all(|f| {
            let x = std::fs::read(a.output_dir.join(f)).unwrap();
            let y = std::fs::read(b.output_dir.join(f)).unwrap();
            x == y
        });
        parts.push(if same { Ok(name.to_string()) } else { Err(format!("{name} differs")) });
    }
    all(parts)
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let criteria: [(&str, fn(&Path) -> Outcome); 10] = [
        ("born-rule frequencies", criterion_1),
        ("cross-moment decay, SDE and PDE", criterion_2),
        ("martingale across ensembles", criterion_3),
        ("gambler's ruin exactness", criterion_4),
        ("CSL density-matrix decay", criterion_5),
        ("CSL lattice vs deterministic oracle", criterion_6),
        ("unitary-representation identity", criterion_7),
        ("SL hit statistics", criterion_8),
        ("hidden-variable model", criterion_9),
        ("reproducibility across worker counts", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        match f(tmp.path()) {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
