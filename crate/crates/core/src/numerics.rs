//! Sparse complex matrices, direct factorizations, constrained null-space
//! solves and a stiff integrator for linear autonomous systems.
//!
//! All arithmetic is complex double precision. Factorizations are delegated to
//! `faer`; everything runs single threaded so that results are bitwise
//! reproducible.

use std::collections::HashMap;
use std::sync::Once;
use std::time::{Duration, Instant};

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, MatMut};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Problems below this dimension are factorized densely.
pub const DENSE_LIMIT: usize = 2000;

/// Reciprocal condition estimates below this signal a kernel of dimension > 1.
const RCOND_FLOOR: f64 = 1e-14;

fn sequential() {
    static INIT: Once = Once::new();
    INIT.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Square or rectangular sparse matrix in compressed-row form.
///
/// Duplicate entries are summed in a canonical order during assembly, so the
/// compressed form does not depend on the order triplets were pushed.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
}

/// Accumulates `(row, col, value)` triplets before compression.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, C64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletBuilder { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        TripletBuilder { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    /// Adds `value` at `(row, col)`; exact zeros are skipped.
    ///
    /// *Panics* if the index is out of range.
    pub fn push(&mut self, row: usize, col: usize, value: C64) {
        assert!(row < self.nrows && col < self.ncols, "triplet ({row}, {col}) out of range");
        if value != C64::new(0.0, 0.0) {
            self.entries.push((row, col, value));
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn build(self) -> SparseMatrix {
        SparseMatrix::from_triplets(self.nrows, self.ncols, self.entries)
    }
}

impl SparseMatrix {
    pub fn from_triplets(nrows: usize, ncols: usize, mut entries: Vec<(usize, usize, C64)>) -> Self {
        for &(r, c, _) in &entries {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of range");
        }
        entries.sort_by(|x, y| {
            (x.0, x.1, x.2.re.to_bits(), x.2.im.to_bits()).cmp(&(y.0, y.1, y.2.re.to_bits(), y.2.im.to_bits()))
        });
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<C64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        let mut rows_of = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                rows_of.push(r);
                last = Some((r, c));
            }
        }
        // drop entries that cancelled exactly
        let mut keep_cols = Vec::with_capacity(col_idx.len());
        let mut keep_vals = Vec::with_capacity(values.len());
        for ((r, c), v) in rows_of.into_iter().zip(col_idx).zip(values) {
            if v != C64::new(0.0, 0.0) {
                row_ptr[r + 1] += 1;
                keep_cols.push(c);
                keep_vals.push(v);
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseMatrix { nrows, ncols, row_ptr, col_idx: keep_cols, values: keep_vals }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix::from_triplets(n, n, (0..n).map(|i| (i, i, C64::new(1.0, 0.0))).collect())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn max_row_nnz(&self) -> usize {
        (0..self.nrows).map(|r| self.row_ptr[r + 1] - self.row_ptr[r]).max().unwrap_or(0)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows).map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// `y^T A` for a row vector `y`.
    pub fn vec_mul(&self, y: &[C64]) -> Vec<C64> {
        assert_eq!(y.len(), self.nrows);
        let mut out = vec![C64::new(0.0, 0.0); self.ncols];
        for (r, &yr) in y.iter().enumerate() {
            if yr != C64::new(0.0, 0.0) {
                for (c, v) in self.row(r) {
                    out[c] += yr * v;
                }
            }
        }
        out
    }

    /// Copy of `self` with row `r` replaced by the given entries.
    pub fn with_row_replaced(&self, r: usize, entries: &[(usize, C64)]) -> SparseMatrix {
        let mut t: Vec<_> = self.triplets().filter(|&(row, _, _)| row != r).collect();
        t.extend(entries.iter().map(|&(c, v)| (r, c, v)));
        SparseMatrix::from_triplets(self.nrows, self.ncols, t)
    }

    /// `alpha I + beta A`.
    pub fn shifted(&self, alpha: C64, beta: C64) -> SparseMatrix {
        assert_eq!(self.nrows, self.ncols);
        let mut t: Vec<_> = self.triplets().map(|(r, c, v)| (r, c, beta * v)).collect();
        t.extend((0..self.nrows).map(|i| (i, i, alpha)));
        SparseMatrix::from_triplets(self.nrows, self.ncols, t)
    }

    pub fn to_dense(&self) -> Mat<C64> {
        let mut m = Mat::<C64>::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, C64>> {
        let t: Vec<_> = self.triplets().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| Error::Numerical(format!("sparse assembly failed: {e:?}")))
    }
}

/// LU factorization of a square matrix, dense or sparse depending on size.
pub enum Factorization {
    Dense(PartialPivLu<C64>),
    Sparse(faer::sparse::linalg::solvers::Lu<usize, C64>),
}

impl Factorization {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        sequential();
        assert_eq!(a.nrows(), a.ncols(), "factorization needs a square matrix");
        if !a.is_finite() {
            return Err(Error::Numerical("matrix has non-finite entries".into()));
        }
        if a.nrows() < DENSE_LIMIT {
            Ok(Factorization::Dense(a.to_dense().partial_piv_lu()))
        } else {
            // faer only fails here on structural or exact numerical singularity
            let lu = a.to_faer()?.sp_lu().map_err(|_| Error::DegenerateKernel { estimate: 2, rcond: 0.0 })?;
            Ok(Factorization::Sparse(lu))
        }
    }

    pub fn method(&self) -> SolveMethod {
        match self {
            Factorization::Dense(_) => SolveMethod::DenseLu,
            Factorization::Sparse(_) => SolveMethod::SparseLu,
        }
    }

    pub fn solve_in_place(&self, rhs: &mut [C64]) {
        let n = rhs.len();
        let view: MatMut<'_, C64> = MatMut::from_column_major_slice_mut(rhs, n, 1);
        match self {
            Factorization::Dense(lu) => lu.solve_in_place(view),
            Factorization::Sparse(lu) => lu.solve_in_place(view),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveMethod {
    DenseLu,
    SparseLu,
}

/// Diagnostics attached to every null-space solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    /// `||A x||_inf` over the unreplaced rows.
    pub residual: f64,
    /// `|(A x)_r|` for the replaced row `r`; small when that equation really
    /// was redundant.
    pub replaced_row_residual: f64,
    /// `|c . x - rhs|` for the constraint row.
    pub constraint_residual: f64,
    /// 1 when the replaced system is well conditioned.
    pub kernel_dim_estimate: usize,
    /// Crude reciprocal condition number of the replaced matrix (pivot health).
    pub rcond: f64,
    pub method: SolveMethod,
    #[serde(serialize_with = "serialize_secs")]
    pub wall_time: Duration,
}

fn serialize_secs<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

/// Linear side condition `sum_k coeffs[k] x[k] = rhs`, written into row `row`.
#[derive(Debug, Clone)]
pub struct Constraint {
    /// Index of the (redundant) equation that the constraint replaces.
    pub replace_row: usize,
    pub coeffs: Vec<(usize, C64)>,
    pub rhs: C64,
}

fn inf_norm(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Deterministic, well spread probe vector for the condition estimate.
fn probe_vector(n: usize) -> Vec<C64> {
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let u = (state >> 11) as f64 / (1u64 << 53) as f64;
            let v = ((state.rotate_left(29)) >> 11) as f64 / (1u64 << 53) as f64;
            C64::new(2.0 * u - 1.0, 2.0 * v - 1.0)
        })
        .collect()
}

/// Solves `A x = 0` on every row except `constraint.replace_row`, which is
/// replaced by the constraint.
///
/// For a singular `A` with a one-dimensional kernel whose left null vector has
/// a nonzero weight on the replaced row, the result is the kernel vector
/// scaled to satisfy the constraint.
pub fn solve_constrained_nullspace(a: &SparseMatrix, constraint: &Constraint) -> Result<(Vec<C64>, SolveReport)> {
    let start = Instant::now();
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    assert!(constraint.replace_row < n);
    let replaced = a.with_row_replaced(constraint.replace_row, &constraint.coeffs);
    let lu = Factorization::new(&replaced)?;

    let mut x = vec![C64::new(0.0, 0.0); n];
    x[constraint.replace_row] = constraint.rhs;
    lu.solve_in_place(&mut x);

    let mut probe = probe_vector(n);
    let probe_norm = inf_norm(&probe);
    lu.solve_in_place(&mut probe);
    let y_norm = inf_norm(&probe);
    let rcond = probe_norm / (replaced.norm_inf() * y_norm);
    let finite = x.iter().all(|v| v.re.is_finite() && v.im.is_finite());
    if !finite || !rcond.is_finite() || rcond < RCOND_FLOOR {
        return Err(Error::DegenerateKernel { estimate: 2, rcond: if rcond.is_finite() { rcond } else { 0.0 } });
    }

    let ax = a.mul_vec(&x);
    let residual = ax
        .iter()
        .enumerate()
        .filter(|&(r, _)| r != constraint.replace_row)
        .map(|(_, v)| v.norm())
        .fold(0.0, f64::max);
    let cx: C64 = constraint.coeffs.iter().map(|&(c, v)| v * x[c]).sum();
    let report = SolveReport {
        residual,
        replaced_row_residual: ax[constraint.replace_row].norm(),
        constraint_residual: (cx - constraint.rhs).norm(),
        kernel_dim_estimate: 1,
        rcond,
        method: lu.method(),
        wall_time: start.elapsed(),
    };
    Ok((x, report))
}

/// Counters from a stiff integration run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IntegrationStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub factorizations: usize,
}

// L-stable, stiffly accurate three-stage SDIRK of order 3 (Alexander).
const SDIRK_GAMMA: f64 = 0.435_866_521_508_459;

fn sdirk_tableau() -> [[f64; 3]; 3] {
    let g = SDIRK_GAMMA;
    let tau = (1.0 + g) / 2.0;
    let b1 = -(6.0 * g * g - 16.0 * g + 1.0) / 4.0;
    let b2 = (6.0 * g * g - 20.0 * g + 5.0) / 4.0;
    [[g, 0.0, 0.0], [tau - g, g, 0.0], [b1, b2, g]]
}

/// Integrates `x' = A x` with step-doubling error control.
///
/// Step sizes are restricted to powers of two (plus the final partial step) so
/// that the factorizations of `I - h gamma A` can be cached.
pub struct StiffLinearIntegrator<'a> {
    a: &'a SparseMatrix,
    rel_tol: f64,
    cache: HashMap<u64, Factorization>,
    pub stats: IntegrationStats,
}

impl<'a> StiffLinearIntegrator<'a> {
    pub fn new(a: &'a SparseMatrix, rel_tol: f64) -> Self {
        assert!(rel_tol > 0.0 && rel_tol < 1.0, "rel_tol must lie in (0, 1)");
        StiffLinearIntegrator { a, rel_tol, cache: HashMap::new(), stats: IntegrationStats::default() }
    }

    fn factor(&mut self, h: f64) -> Result<&Factorization> {
        let key = h.to_bits();
        if !self.cache.contains_key(&key) {
            if self.cache.len() > 24 {
                self.cache.clear();
            }
            let m = self.a.shifted(C64::new(1.0, 0.0), C64::new(-h * SDIRK_GAMMA, 0.0));
            self.cache.insert(key, Factorization::new(&m)?);
            self.stats.factorizations += 1;
        }
        Ok(&self.cache[&key])
    }

    fn step(&mut self, x: &[C64], h: f64) -> Result<Vec<C64>> {
        let tab = sdirk_tableau();
        let a = self.a;
        let mut slopes: Vec<Vec<C64>> = Vec::with_capacity(3);
        let mut stage = Vec::new();
        for i in 0..3 {
            let mut rhs = x.to_vec();
            for (j, k) in slopes.iter().enumerate() {
                let c = C64::new(h * tab[i][j], 0.0);
                for (r, kv) in rhs.iter_mut().zip(k) {
                    *r += c * kv;
                }
            }
            self.factor(h)?.solve_in_place(&mut rhs);
            stage = rhs;
            if i < 2 {
                slopes.push(a.mul_vec(&stage));
            }
        }
        Ok(stage)
    }

    /// Advances `x` from time 0 to `t_final`.
    pub fn integrate(&mut self, x0: &[C64], t_final: f64) -> Result<Vec<C64>> {
        let mut out = self.integrate_to(x0, &[t_final])?;
        Ok(out.pop().unwrap())
    }

    /// Returns the state at each of the increasing `times`.
    pub fn integrate_to(&mut self, x0: &[C64], times: &[f64]) -> Result<Vec<Vec<C64>>> {
        assert_eq!(x0.len(), self.a.nrows());
        assert!(times.windows(2).all(|w| w[0] <= w[1]) && times.first().is_none_or(|&t| t >= 0.0));
        let t_end = times.last().copied().unwrap_or(0.0);
        let scale = self.a.norm_inf().max(f64::MIN_POSITIVE);
        let h_guess = (0.1 * self.rel_tol.cbrt() / scale).min(t_end.max(f64::MIN_POSITIVE));
        let mut h = 2f64.powi(h_guess.log2().floor() as i32);
        let h_min = 1e-14 * t_end.max(1.0);

        let mut x = x0.to_vec();
        let mut t = 0.0;
        let mut outputs = Vec::with_capacity(times.len());
        for &target in times {
            while target - t > 1e-15 * target.max(1.0) {
                let remaining = target - t;
                let h_try = h.min(remaining);
                let full = self.step(&x, h_try)?;
                let half = self.step(&x, h_try / 2.0)?;
                let half = self.step(&half, h_try / 2.0)?;
                let size = inf_norm(&x).max(inf_norm(&half)).max(f64::MIN_POSITIVE);
                let diff: f64 = half.iter().zip(&full).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                let err = diff / 7.0 / size;
                if err <= self.rel_tol {
                    x = half;
                    t += h_try;
                    self.stats.accepted_steps += 1;
                    if h_try == h && err < self.rel_tol / 20.0 {
                        h *= 2.0;
                    }
                } else {
                    self.stats.rejected_steps += 1;
                    h = 2f64.powi((h_try / 2.0).log2().floor() as i32);
                    if h < h_min {
                        return Err(Error::Integrator { t, step: h, suggested_tol: self.rel_tol * 10.0 });
                    }
                }
            }
            outputs.push(x.clone());
        }
        Ok(outputs)
    }
}

/// Integrates `x' = A x` from `x0` over `[0, t_final]` with local relative
/// error at most `rel_tol` per step.
pub fn integrate_stiff_linear(a: &SparseMatrix, x0: &[C64], t_final: f64, rel_tol: f64) -> Result<Vec<C64>> {
    StiffLinearIntegrator::new(a, rel_tol).integrate(x0, t_final)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn assembly_sums_duplicates_and_sorts() {
        let m = SparseMatrix::from_triplets(2, 3, vec![(1, 2, c(1.0)), (0, 1, c(2.0)), (1, 2, c(0.5)), (0, 0, c(-1.0))]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(1, 2), c(1.5));
        assert_eq!(m.get(0, 2), c(0.0));
        let cols: Vec<_> = m.row(0).map(|(c, _)| c).collect();
        assert_eq!(cols, [0, 1]);
    }

    #[test]
    fn cancelled_entries_are_dropped() {
        let m = SparseMatrix::from_triplets(1, 1, vec![(0, 0, c(1.0)), (0, 0, c(-1.0))]);
        assert_eq!(m.nnz(), 0);
    }

    #[test]
    #[should_panic]
    fn out_of_range_triplet_panics() {
        TripletBuilder::new(2, 2).push(2, 0, c(1.0));
    }

    #[test]
    fn diagonal_kernel_picks_first_coordinate() {
        let a = SparseMatrix::from_triplets(3, 3, vec![(1, 1, c(-1.0)), (2, 2, c(-2.0))]);
        let cons = Constraint { replace_row: 0, coeffs: vec![(0, c(1.0))], rhs: c(1.0) };
        let (x, rep) = solve_constrained_nullspace(&a, &cons).unwrap();
        assert_eq!(x, vec![c(1.0), c(0.0), c(0.0)]);
        assert_eq!(rep.kernel_dim_estimate, 1);
        assert!(rep.residual == 0.0);
    }

    #[test]
    fn two_dimensional_kernel_is_reported() {
        let a = SparseMatrix::from_triplets(3, 3, vec![(2, 2, c(-1.0))]);
        let cons = Constraint { replace_row: 0, coeffs: vec![(0, c(1.0)), (1, c(1.0))], rhs: c(1.0) };
        assert!(matches!(solve_constrained_nullspace(&a, &cons), Err(Error::DegenerateKernel { .. })));
    }

    #[test]
    fn scalar_decay_matches_exponential() {
        let a = SparseMatrix::from_triplets(1, 1, vec![(0, 0, c(-1.0))]);
        for tol in [1e-6, 1e-9] {
            let x = integrate_stiff_linear(&a, &[c(1.0)], 1.0, tol).unwrap();
            assert!((x[0].re - (-1f64).exp()).abs() < 10.0 * tol, "{tol}: {}", x[0].re);
        }
    }

    #[test]
    fn oscillator_phase_is_tracked() {
        let a = SparseMatrix::from_triplets(1, 1, vec![(0, 0, C64::new(-0.1, 3.0))]);
        let tol = 1e-9;
        let x = integrate_stiff_linear(&a, &[c(1.0)], 2.0, tol).unwrap();
        let exact = (C64::new(-0.1, 3.0) * 2.0).exp();
        assert!((x[0] - exact).norm() < 100.0 * tol);
    }

    #[test]
    fn nilpotent_system_matches_polynomial() {
        // x' = A x with A strictly lower triangular: x(t) = (I + tA + t^2 A^2/2) x0
        let a = SparseMatrix::from_triplets(3, 3, vec![(1, 0, c(2.0)), (2, 1, c(-1.5)), (2, 0, c(0.5))]);
        let t: f64 = 3.0;
        let x0 = [c(1.0), c(-0.5), c(0.25)];
        let expected = [
            1.0,
            -0.5 + t * 2.0,
            0.25 + t * (0.5 * 1.0 - 1.5 * -0.5) + t * t / 2.0 * (-1.5 * 2.0),
        ];
        let tol = 1e-9;
        let x = integrate_stiff_linear(&a, &x0, t, tol).unwrap();
        for (xi, ei) in x.iter().zip(expected) {
            assert!((xi.re - ei).abs() < 10.0 * tol * ei.abs().max(1.0), "{} vs {ei}", xi.re);
        }
    }

    #[test]
    fn fixed_point_is_preserved() {
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 0, c(-1.0)), (1, 0, c(1.0))]);
        let x = integrate_stiff_linear(&a, &[c(0.0), c(1.0)], 50.0, 1e-8).unwrap();
        assert!((x[1] - c(1.0)).norm() < 1e-14 && x[0].norm() < 1e-14);
    }

    #[test]
    fn outputs_at_requested_times() {
        let a = SparseMatrix::from_triplets(1, 1, vec![(0, 0, c(-0.5))]);
        let mut integ = StiffLinearIntegrator::new(&a, 1e-9);
        let xs = integ.integrate_to(&[c(1.0)], &[0.0, 1.0, 4.0]).unwrap();
        assert_eq!(xs[0][0], c(1.0));
        assert!((xs[1][0].re - (-0.5f64).exp()).abs() < 1e-8);
        assert!((xs[2][0].re - (-2f64).exp()).abs() < 1e-8);
    }
}
