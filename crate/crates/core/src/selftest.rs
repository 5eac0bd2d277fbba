//! Built-in invariant checks, runnable from the command line.

use std::time::Instant;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::entanglement::{self, Mat4};
use crate::error::Result;
use crate::model::{Model, SystemParams};
use crate::reduced::{self, ReducedState};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Concurrence by an independent route: cyclic Jacobi on real-symmetric
/// embeddings, with `rho = L L^dagger` and the spectrum of `L^dagger rho~ L`.
pub mod reference {
    use super::*;

    /// Eigenvalues of a real symmetric matrix, descending.
    pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        jacobi(&mut a).0
    }

    fn jacobi(a: &mut [Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = a.len();
        let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        for _sweep in 0..100 {
            let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
            let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
            if off <= 1e-32 * diag.max(1e-300) {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q] == 0.0 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                    for row in v.iter_mut() {
                        let (vp, vq) = (row[p], row[q]);
                        row[p] = c * vp - s * vq;
                        row[q] = s * vp + c * vq;
                    }
                }
            }
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&x, &y| a[y][y].total_cmp(&a[x][x]));
        let vals = idx.iter().map(|&k| a[k][k]).collect();
        let vecs = idx.iter().map(|&k| (0..n).map(|i| v[i][k]).collect()).collect();
        (vals, vecs)
    }

    /// `[[Re H, -Im H], [Im H, Re H]]`.
    fn embed(h: &[Vec<C64>]) -> Vec<Vec<f64>> {
        let n = h.len();
        let mut e = vec![vec![0.0; 2 * n]; 2 * n];
        for i in 0..n {
            for j in 0..n {
                e[i][j] = h[i][j].re;
                e[i + n][j + n] = h[i][j].re;
                e[i][j + n] = -h[i][j].im;
                e[i + n][j] = h[i][j].im;
            }
        }
        e
    }

    fn spin_flipped(rho: &Mat4) -> Mat4 {
        // (sy x sy) rho* (sy x sy) on {|22>, |21>, |12>, |11>}
        let sign = [1.0, -1.0, -1.0, 1.0];
        let mut out = *rho;
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] = rho[3 - i][3 - j].conj() * (sign[i] * sign[j]);
            }
        }
        out
    }

    pub fn concurrence(rho: &Mat4) -> f64 {
        let h: Vec<Vec<C64>> = rho.iter().map(|r| r.to_vec()).collect();
        let (vals, vecs) = jacobi(&mut embed(&h));
        // rho = (1/2) sum_k lambda_k u_k u_k^dagger with u = x + i y over all 8 vectors
        let l: Vec<Vec<C64>> = (0..4)
            .map(|i| (0..8).map(|k| C64::new(vecs[k][i], vecs[k][i + 4]) * (vals[k].max(0.0) / 2.0).sqrt()).collect())
            .collect();
        let tilde = spin_flipped(rho);
        let m: Vec<Vec<C64>> = (0..8)
            .map(|a| {
                (0..8)
                    .map(|b| {
                        let mut acc = C64::new(0.0, 0.0);
                        for i in 0..4 {
                            for j in 0..4 {
                                acc += l[i][a].conj() * tilde[i][j] * l[j][b];
                            }
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        let ev = jacobi_eigenvalues(embed(&m));
        let s: Vec<f64> = (0..4).map(|k| ev[2 * k].max(0.0).sqrt()).collect();
        (s[0] - s[1] - s[2] - s[3]).max(0.0)
    }
}

/// `p |Phi+><Phi+| + (1 - p) I / 4`.
pub fn werner(p: f64) -> Mat4 {
    let zero = C64::new(0.0, 0.0);
    let mut m = [[zero; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = C64::new((1.0 - p) / 4.0, 0.0);
    }
    for i in [0, 3] {
        for j in [0, 3] {
            m[i][j] += C64::new(p / 2.0, 0.0);
        }
    }
    m
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    let t0 = Instant::now();
    let (passed, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    Check { name, passed, detail, seconds: t0.elapsed().as_secs_f64() }
}

const RATIOS: [f64; 8] = [0.0, 0.005, 0.05, 0.085, 0.138, 0.3, 1.0, 5.0];

fn basis_check() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for x in RATIOS {
        let p = SystemParams::caption(28.0 * x);
        let m = Model::new(p)?;
        let scale = m.basis.splitting().max(1.0);
        worst = worst.max(m.basis.orthonormality_defect()).max(m.basis.eigen_residual(&p) / scale);
    }
    Ok((worst <= 1e-12, format!("max defect {worst:.2e}")))
}

fn alias_check() -> Result<(bool, String)> {
    let mut bad = Vec::new();
    for x in RATIOS {
        if !Model::new(SystemParams::caption(28.0 * x))?.rates.aliases_hold() {
            bad.push(x);
        }
    }
    Ok((bad.is_empty(), if bad.is_empty() { "all aliases bitwise equal".into() } else { format!("broken at {bad:?}") }))
}

fn trace_check() -> Result<(bool, String)> {
    let rel_tol = 1e-8;
    let m = Model::new(SystemParams::caption(1.4).with_nbar(0.5))?;
    let n_max = 40;
    let gen = reduced::build_generator(&m, reduced::FockTruncation::fixed(n_max)?, usize::MAX)?;
    let x0 = ReducedState::thermal_ground(&m, n_max);
    let times = [1.0, 10.0, 50.0];
    let states = reduced::evolve_trajectory(&gen, &x0, &times, rel_tol)?;
    let worst = states.iter().map(|s| (s.trace().re - 1.0).abs()).fold(0.0, f64::max);
    Ok((worst <= 10.0 * rel_tol, format!("max |Tr - 1| = {worst:.2e} (bound {:.0e})", 10.0 * rel_tol)))
}

fn steady_checks() -> Result<[(bool, String); 3]> {
    let m = Model::new(SystemParams::caption(28.0 * 0.085))?;
    let sol = reduced::solve_auto(&m, reduced::DEFAULT_N_MAX_CAP)?;
    let reality = sol.state.reality_defect();
    let change = sol.truncation_change.unwrap_or(f64::INFINITY);
    let g0 = Model::new(SystemParams::caption(28.0 * 0.085).with_g(0.0))?;
    let thermal = reduced::solve_auto(&g0, reduced::DEFAULT_N_MAX_CAP)?;
    let dev = (thermal.observables.mean_n / 20.0 - 1.0).abs();
    Ok([
        (reality <= 1e-8, format!("reality defect {reality:.2e} at n_max = {}", sol.n_max())),
        (change < reduced::CONVERGENCE_TOLERANCE, format!("relative change {change:.2e} under n_max -> 1.25 n_max")),
        (dev < 1e-6, format!("g = 0 gives <n>/nbar - 1 = {dev:.2e}")),
    ])
}

fn concurrence_check() -> Result<(bool, String)> {
    let zero = C64::new(0.0, 0.0);
    let bell = werner(1.0);
    let mut product = [[zero; 4]; 4];
    let psi = [0.6, 0.8, 0.0, 0.0];
    for i in 0..4 {
        for j in 0..4 {
            product[i][j] = C64::new(psi[i] * psi[j], 0.0);
        }
    }
    let bell_c = entanglement::concurrence(&bell)?.value;
    let prod_c = entanglement::concurrence(&product)?.value;
    let mut worst: f64 = (bell_c - 1.0).abs().max(prod_c);
    for k in 0..=20 {
        let p = k as f64 / 20.0;
        let rho = werner(p);
        let c = entanglement::concurrence(&rho)?.value;
        let exact = ((3.0 * p - 1.0) / 2.0).max(0.0);
        worst = worst.max((c - exact).abs()).max((c - reference::concurrence(&rho)).abs());
    }
    Ok((worst <= 1e-10, format!("max error {worst:.2e} over Bell, product and 21 Werner states")))
}

pub fn run() -> SelftestReport {
    let mut checks = vec![
        timed("dressed_basis", basis_check),
        timed("rate_aliases", alias_check),
        timed("trace_preservation", trace_check),
    ];
    let t0 = Instant::now();
    match steady_checks() {
        Ok(results) => {
            let secs = t0.elapsed().as_secs_f64();
            for (name, (passed, detail)) in ["steady_state_reality", "truncation_convergence", "uncoupled_thermal"].into_iter().zip(results) {
                checks.push(Check { name, passed, detail, seconds: secs });
            }
        }
        Err(e) => {
            for name in ["steady_state_reality", "truncation_convergence", "uncoupled_thermal"] {
                checks.push(Check { name, passed: false, detail: format!("error: {e}"), seconds: 0.0 });
            }
        }
    }
    checks.push(timed("concurrence", concurrence_check));
    SelftestReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_on_known_spectrum() {
        let a = vec![vec![2.0, 1.0, 0.0], vec![1.0, 2.0, 0.0], vec![0.0, 0.0, 5.0]];
        let ev = reference::jacobi_eigenvalues(a);
        for (x, y) in ev.iter().zip([5.0, 3.0, 1.0]) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn selftest_passes() {
        let report = run();
        for c in &report.checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
