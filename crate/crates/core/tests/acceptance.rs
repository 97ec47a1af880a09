//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use phantom_core::diagnostics::{full_grid, BlockSplit, EnumerationOracle};
use phantom_core::experiment::{
    directional_result, directional_verdicts, sectorial_csv, sectorial_rows, sectorial_verdicts,
    with_workers, ExperimentConfig, SectorialRow,
};
use phantom_core::lattice::MonotoneCurve;
use phantom_core::phantom::{
    construct_g_psi, estimate_level_sequence, exact_level_sequence, extremal_index_exact,
    phantom_distance_report, self_consistency_violations, ExactMaxLaw, MarginalCandidate,
};
use phantom_core::rng::substream;
use phantom_core::sampling::{FieldModel, Marginal};
use phantom_core::{diagnostics, Result};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn uniform_iid() -> FieldModel {
    FieldModel::Iid {
        marginal: Marginal::Uniform,
    }
}

/// Closed-form i.i.d. law against the marginal with m = n^2.
fn exactness_oracle() -> Result<Outcome> {
    let model = uniform_iid();
    let grid: Vec<f64> = (0..=20_000)
        .map(|i| -0.5 + 2.0 * i as f64 / 20_000.0)
        .collect();
    let mut worst: f64 = 0.0;
    for n in [5usize, 20, 100] {
        let law = ExactMaxLaw::new(&model, vec![n, n])?;
        let g = MarginalCandidate(Marginal::Uniform);
        let d = phantom_distance_report(&law, &g, (n * n) as f64, &grid)?.distance;
        worst = worst.max(d);
    }
    outcome(
        worst <= 1e-12,
        format!("max distance {worst:.3e} (tol 1e-12)"),
    )
}

fn sectorial(rows: &[SectorialRow]) -> Result<Outcome> {
    let v = sectorial_verdicts(rows);
    let pass = v["distance_nonincreasing_within_2se"] && v["last_distance_le_first"];
    let detail = rows
        .iter()
        .map(|r| format!("n={} d={:.4}±{:.4}", r.n, r.distance, r.distance_se))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(pass, detail)
}

fn berman(rows: &[SectorialRow]) -> Result<Outcome> {
    let pass = rows.iter().all(|r| r.gap <= r.bound + 3.0 * r.gap_se);
    let detail = rows
        .iter()
        .map(|r| {
            format!(
                "n={} gap={:.4} bound={:.4} se={:.4}",
                r.n, r.gap, r.bound, r.gap_se
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    outcome(pass, detail)
}

fn directional() -> Result<Outcome> {
    let config = ExperimentConfig::default();
    let res = directional_result(&config)?;
    let v = directional_verdicts(&res, &config.directional);
    let gaps = res
        .rows
        .iter()
        .map(|r| format!("{:.5}", r.gap))
        .collect::<Vec<_>>()
        .join(" ");
    let detail = format!(
        "gaps [{gaps}], monotone={}, final<=0.02={}, |H-H0|={:.5} > 5*final={}",
        v["approach_monotone"],
        v["final_gap_within_tol"],
        res.separation,
        v["limit_separated_from_gumbel"]
    );
    outcome(v.values().all(|&b| b), detail)
}

fn extremal() -> Result<Outcome> {
    let model = FieldModel::MovingMax {
        window: vec![2, 2],
        innovation: Marginal::Uniform,
    };
    let est = extremal_index_exact(&model, &[200, 200], (-1f64).exp())?;
    outcome(
        (est.theta - 0.25).abs() <= 0.02,
        format!("theta(200) = {:.6}, target 0.25 ± 0.02", est.theta),
    )
}

fn lemma_suite() -> Result<Outcome> {
    let mut rng = substream(2024, 6);
    let instances = 60;
    let mut violations = 0;
    let mut nontrivial = 0;
    for _ in 0..instances {
        let window = vec![rng.random_range(1..=2), rng.random_range(1..=2)];
        let low: f64 = rng.random();
        let high = low + rng.random_range(0.1..1.0);
        let p_low = rng.random_range(0.05..0.95);
        let level = rng.random_range(low - 0.2..high + 0.2);
        let limit = vec![rng.random_range(2..=3), rng.random_range(2..=3)];
        let model = FieldModel::MovingMax {
            window,
            innovation: Marginal::TwoAtom { low, high, p_low },
        };
        let oracle = EnumerationOracle::new(&model, level)?;
        let beta = |k: usize| -> Result<f64> {
            let splits: Vec<BlockSplit> = full_grid(&limit, k)?;
            let values = diagnostics::evaluate_splits(&oracle, &splits)?;
            Ok(values.iter().map(|v| v.signed.abs()).fold(0.0, f64::max))
        };
        let b2 = beta(2)?;
        if b2 > 1e-12 {
            nontrivial += 1;
        }
        for k in [2usize, 3] {
            if beta(k)? > (k * k) as f64 * b2 + 1e-12 {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0,
        format!("{instances} instances ({nontrivial} with beta > 0), {violations} violations"),
    )
}

fn g_psi() -> Result<Outcome> {
    let gamma = (-1f64).exp();
    // self-consistency on estimated sequences
    let mut bad = 0;
    let gauss = FieldModel::GaussianSeparable(ExperimentConfig::default().covariance.build()?);
    let moving = FieldModel::MovingMax {
        window: vec![2, 2],
        innovation: Marginal::StandardNormal,
    };
    let diag = MonotoneCurve::diagonal(2);
    for (model, reps) in [(&gauss, 200), (&moving, 200), (&uniform_iid(), 50)] {
        let seq = estimate_level_sequence(model, &diag, gamma, 12, reps, 7)?;
        let g = construct_g_psi(&seq)?;
        bad += self_consistency_violations(&g, &seq).len();
    }
    // exact levels for the i.i.d. uniform field along the diagonal; the
    // horizon runs past n = 100 so that v_101 bounds the step at v_100
    let model = uniform_iid();
    let seq = exact_level_sequence(&model, &diag, gamma, 1000)?;
    let g = construct_g_psi(&seq)?;
    bad += self_consistency_violations(&g, &seq).len();
    let law = ExactMaxLaw::new(&model, vec![100, 100])?;
    let grid: Vec<f64> = (0..=20_000)
        .map(|i| 0.998 + 0.002 * i as f64 / 20_000.0)
        .collect();
    let d = phantom_distance_report(&law, &g, 1e4, &grid)?.distance;
    outcome(
        bad == 0 && d <= 0.02,
        format!("self-consistency violations {bad}; distance at n=100 = {d:.5} (tol 0.02)"),
    )
}

fn determinism(first: &str) -> Result<Outcome> {
    let config = ExperimentConfig::default();
    let again = with_workers(None, || sectorial_rows(&config))??;
    let single = with_workers(Some(1), || sectorial_rows(&config))??;
    let same_seed = sectorial_csv(&again) == first;
    let one_worker = sectorial_csv(&single) == first;
    outcome(
        same_seed && one_worker,
        format!("same seed identical: {same_seed}; 1 vs max workers identical: {one_worker}"),
    )
}

fn report(id: &str, started: Instant, res: Result<Outcome>, failures: &mut usize) {
    let secs = started.elapsed().as_secs_f64();
    match res {
        Ok(o) => {
            if !o.pass {
                *failures += 1;
            }
            println!(
                "criterion {id}: {} [{secs:.1}s] {}",
                if o.pass { "PASS" } else { "FAIL" },
                o.detail
            );
        }
        Err(e) => {
            *failures += 1;
            println!("criterion {id}: FAIL [{secs:.1}s] error: {e}");
        }
    }
}

fn main() -> ExitCode {
    let mut failures = 0;

    let t = Instant::now();
    report("1 (exactness oracle)", t, exactness_oracle(), &mut failures);

    let t = Instant::now();
    let config = ExperimentConfig::default();
    let rows = with_workers(None, || sectorial_rows(&config)).and_then(|r| r);
    match &rows {
        Ok(rows) => {
            report("2 (sectorial distance)", t, sectorial(rows), &mut failures);
            report("3 (Berman domination)", t, berman(rows), &mut failures);
        }
        Err(e) => {
            for id in ["2 (sectorial distance)", "3 (Berman domination)"] {
                report(id, t, Err(e.clone()), &mut failures);
            }
        }
    }

    let t = Instant::now();
    report("4 (directional failure)", t, directional(), &mut failures);

    let t = Instant::now();
    report("5 (extremal index)", t, extremal(), &mut failures);

    let t = Instant::now();
    report(
        "6 (beta growth inequality)",
        t,
        lemma_suite(),
        &mut failures,
    );

    let t = Instant::now();
    report("7 (G_psi self-consistency)", t, g_psi(), &mut failures);

    let t = Instant::now();
    let det = match &rows {
        Ok(rows) => determinism(&sectorial_csv(rows)),
        Err(e) => Err(e.clone()),
    };
    report("8 (determinism)", t, det, &mut failures);

    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criterion check(s) failed");
        ExitCode::FAILURE
    }
}
