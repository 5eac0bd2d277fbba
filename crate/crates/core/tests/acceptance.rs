//! Acceptance criteria 1-8. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::time::Instant;

use dimercool::config::SweepConfig;
use dimercool::pipeline::NmaxSetting;
use dimercool::reduced::{self, DEFAULT_N_MAX_CAP};
use dimercool::sweep::{self, Series, SweepRow};
use dimercool::{selftest, validation, Model, RateConvention, SystemParams};

/// Depth of the cooling minimum at the caption parameters, frozen from the
/// first converged run (60 points on [0.005, 0.3], automatic truncation).
const GOLDEN_MIN_RATIO: f64 = 0.052_853_7;
const GOLDEN_TOL: f64 = 1e-4;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn caption_x(x: f64) -> SystemParams {
    SystemParams::caption(28.0 * x)
}

fn thermal_baseline() -> Outcome {
    let t0 = Instant::now();
    let mut worst_n: f64 = 0.0;
    let mut worst_g2: f64 = 0.0;
    let mut min_nmax = usize::MAX;
    for x in [0.005, 0.138, 0.3] {
        let m = Model::new(caption_x(x).with_g(0.0)).unwrap();
        let sol = match reduced::solve_auto(&m, DEFAULT_N_MAX_CAP) {
            Ok(s) => s,
            Err(e) => return outcome(false, format!("solve failed at x = {x}: {e}")),
        };
        min_nmax = min_nmax.min(sol.n_max());
        worst_n = worst_n.max((sol.observables.mean_n / 20.0 - 1.0).abs());
        worst_g2 = worst_g2.max(sol.observables.g2.map_or(f64::INFINITY, |g| (g - 2.0).abs()));
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst_n <= 1e-6 && worst_g2 <= 1e-3 && min_nmax >= 300 && secs < 10.0,
        format!("|<n>/nbar - 1| = {worst_n:.2e}, |g2 - 2| = {worst_g2:.2e}, n_max >= {min_nmax}, {secs:.1} s"),
    )
}

fn oracle_equivalence() -> Outcome {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    let points = [(0.005, 2.0), (0.02, 2.0), (0.05, 2.0), (0.138, 0.0)];
    for (x, g) in points {
        let p = caption_x(x).with_nbar(0.1).with_g(g);
        match validation::validate_point(p, x, 10) {
            Ok(v) => {
                let d = v.reduced_vs_dressed.map_or(f64::INFINITY, |d| d.max);
                worst = worst.max(d);
                lines.push(format!("x={x} g={g}: {d:.1e}"));
            }
            Err(e) => return outcome(false, format!("x = {x}: {e}")),
        }
    }
    // with the printed feeding rate the projection is not closed
    let printed = validation::validate_point(caption_x(0.05).with_nbar(0.1).with_rate_convention(RateConvention::Printed), 0.05, 10)
        .ok()
        .and_then(|v| v.reduced_vs_dressed)
        .map_or("solve failed".to_owned(), |d| format!("{:.1e}", d.max));
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-6 && secs < 60.0,
        format!("max rel dev {worst:.1e} ({}); printed-rate table at x=0.05: {printed}; {secs:.1} s", lines.join(", ")),
    )
}

fn regime_validation() -> Outcome {
    let t0 = Instant::now();
    let x = 0.138;
    let deltas: Vec<f64> = (-6..=6).map(|k| 0.5 * k as f64).collect();
    let mut devs = Vec::new();
    let mut g_eff = 0.0;
    for &d in &deltas {
        let mut p = caption_x(x).with_nbar(0.1);
        p.delta_override = Some(d);
        match validation::validate_point(p, d, 10) {
            Ok(v) => {
                g_eff = v.g_eff.abs();
                devs.push(v.bare_vs_dressed);
            }
            Err(e) => return outcome(false, format!("delta = {d}: {e}")),
        }
    }
    let centre = devs[6];
    let outward = |idx: &[usize]| idx.windows(2).all(|w| devs[w[1]].max >= devs[w[0]].max);
    let right: Vec<usize> = (0..deltas.len()).filter(|&k| deltas[k] > g_eff).collect();
    let mut left: Vec<usize> = (0..deltas.len()).filter(|&k| deltas[k] < -g_eff).collect();
    left.reverse();
    let monotone = outward(&right) && outward(&left);
    let best = devs.iter().map(|d| d.max).fold(f64::INFINITY, f64::min);
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        centre.max <= 0.1 && monotone && secs < 120.0,
        format!(
            "at delta=0: <n> {:.3}, g2 {:.3}, populations {:.3}; smallest over scan {best:.3}; monotone beyond |g_eff|={g_eff:.3}: {monotone}; {secs:.1} s",
            centre.mean_n, centre.g2, centre.populations
        ),
    )
}

struct Curves {
    x: Vec<f64>,
    coupled: Vec<SweepRow>,
    uncoupled: Vec<SweepRow>,
    secs: f64,
}

fn caption_sweep() -> Curves {
    let cfg = SweepConfig {
        base: SystemParams::caption(0.0),
        with_and_without_g: true,
        n_max: NmaxSetting::Auto { cap: DEFAULT_N_MAX_CAP },
        ..SweepConfig::default()
    };
    let t0 = Instant::now();
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let rows = sweep::run_sweep(&cfg, jobs).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let (coupled, uncoupled): (Vec<_>, Vec<_>) = rows.into_iter().partition(|r| r.series == Series::Coupled);
    Curves { x: cfg.values(), coupled, uncoupled, secs }
}

fn all_ok(c: &Curves) -> Option<String> {
    c.coupled.iter().chain(&c.uncoupled).find(|r| !r.is_ok()).map(|r| format!("row at {} failed: {}", r.sweep_value, r.status))
}

fn cooling_curve(c: &Curves) -> Outcome {
    if let Some(e) = all_ok(c) {
        return outcome(false, e);
    }
    let r: Vec<f64> = c.coupled.iter().map(|row| row.mean_n_over_nbar).collect();
    let (imin, &rmin) = r.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let interior = imin > 0 && imin < r.len() - 1;
    // approach to 1 as the drive vanishes
    let small: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&x| {
            let m = Model::new(caption_x(x)).unwrap();
            reduced::solve_auto(&m, DEFAULT_N_MAX_CAP).map_or(f64::NAN, |s| s.observables.mean_n / 20.0)
        })
        .collect();
    let tends = small.windows(2).all(|w| (w[1] - 1.0).abs() < (w[0] - 1.0).abs()) && (small[2] - 1.0).abs() < 1e-2;
    let golden = (rmin - GOLDEN_MIN_RATIO).abs() <= GOLDEN_TOL * GOLDEN_MIN_RATIO;
    outcome(
        interior && rmin < 0.5 && tends && golden && c.secs < 300.0,
        format!(
            "min <n>/nbar = {rmin:.7} at x = {:.4} (interior: {interior}, golden {GOLDEN_MIN_RATIO}: {golden}); <n>/nbar at x = 1e-2, 1e-3, 1e-4: {:.4}, {:.5}, {:.6}; sweep {:.1} s",
            c.x[imin], small[0], small[1], small[2], c.secs
        ),
    )
}

/// First and last sweep value among `idx`.
fn span(c: &Curves, idx: &[usize]) -> String {
    match (idx.first(), idx.last()) {
        (Some(&a), Some(&b)) => format!("[{:.3}, {:.3}]", c.x[a], c.x[b]),
        _ => "none".into(),
    }
}

fn cooling_region(c: &Curves) -> Vec<usize> {
    (0..c.x.len()).filter(|&k| c.coupled[k].mean_n_over_nbar < 1.0).collect()
}

fn super_poissonian(c: &Curves) -> Outcome {
    if let Some(e) = all_ok(c) {
        return outcome(false, e);
    }
    let region = cooling_region(c);
    let holds: Vec<usize> = region.iter().copied().filter(|&k| c.coupled[k].g2 > 2.0).collect();
    let fails: Vec<usize> = region.iter().copied().filter(|&k| c.coupled[k].g2 <= 2.0).collect();
    let g2_min = region.iter().map(|&k| c.coupled[k].g2).fold(f64::INFINITY, f64::min);
    outcome(
        fails.is_empty(),
        format!(
            "{} of {} cooling points have g2 > 2 (holds on {}, fails on {}); min g2 in cooling region {g2_min:.4}",
            holds.len(),
            region.len(),
            span(c, &holds),
            span(c, &fails)
        ),
    )
}

fn symmetric_population(c: &Curves) -> Outcome {
    if let Some(e) = all_ok(c) {
        return outcome(false, e);
    }
    let region = cooling_region(c);
    let holds: Vec<usize> = region.iter().copied().filter(|&k| c.coupled[k].pi_s > c.uncoupled[k].pi_s).collect();
    let fails: Vec<usize> = region.iter().copied().filter(|&k| c.coupled[k].pi_s <= c.uncoupled[k].pi_s).collect();
    let worst = fails
        .iter()
        .map(|&k| (c.uncoupled[k].pi_s - c.coupled[k].pi_s, k))
        .max_by(|a, b| a.0.total_cmp(&b.0));
    let worst = worst.map_or(String::new(), |(d, k)| {
        format!("; largest shortfall {d:.4} at x = {:.3} ({:.4} vs {:.4})", c.x[k], c.coupled[k].pi_s, c.uncoupled[k].pi_s)
    });
    outcome(
        fails.is_empty(),
        format!("{} of {} cooling points have Pi_s(g) > Pi_s(0) (holds on {}, fails on {}){worst}", holds.len(), region.len(), span(c, &holds), span(c, &fails)),
    )
}

fn concurrence_curves(c: &Curves) -> Outcome {
    if let Some(e) = all_ok(c) {
        return outcome(false, e);
    }
    let peak = |rows: &[SweepRow]| {
        rows.iter().enumerate().map(|(k, r)| (r.concurrence, k)).max_by(|a, b| a.0.total_cmp(&b.0)).unwrap()
    };
    let (cg, kg) = peak(&c.coupled);
    let (c0, k0) = peak(&c.uncoupled);
    outcome(
        cg > 0.0 && c0 > 0.0 && cg < c0,
        format!("max C(g=2) = {cg:.4} at x = {:.3}; max C(g=0) = {c0:.4} at x = {:.3}", c.x[kg], c.x[k0]),
    )
}

fn invariant_suite() -> Outcome {
    let t0 = Instant::now();
    let report = selftest::run();
    let secs = t0.elapsed().as_secs_f64();
    let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed).map(|c| format!("{}: {}", c.name, c.detail)).collect();
    outcome(
        failed.is_empty() && secs < 120.0,
        if failed.is_empty() { format!("{} checks passed in {secs:.1} s", report.checks.len()) } else { failed.join("; ") },
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "thermal baseline", thermal_baseline()),
        (2, "reduced vs dressed Liouvillian", oracle_equivalence()),
        (3, "bare vs dressed Liouvillian", regime_validation()),
    ];
    let curves = caption_sweep();
    results.push((4, "cooling curve", cooling_curve(&curves)));
    results.push((5, "super-Poissonian statistics", super_poissonian(&curves)));
    results.push((6, "symmetric-state population", symmetric_population(&curves)));
    results.push((7, "concurrence", concurrence_curves(&curves)));
    results.push((8, "invariant suite", invariant_suite()));

    println!();
    for (n, name, o) in &results {
        println!("criterion {n} ({name}): {}  {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed = results.iter().filter(|r| !r.2.passed).count();
    println!("\nacceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
