//! Full density-matrix Liouvillians on the truncated qubit-pair ⊗ Fock space.
//!
//! Two references are provided. The dressed one is the secular master
//! equation written in the dressed basis, which the reduced equations are a
//! Fock-diagonal projection of. The bare one is the original master equation
//! before any dressed-state or secular approximation.
//!
//! Hilbert index: `q * (n_max + 1) + n`, `q` a two-qubit basis index. The
//! density matrix is vectorised column-major, `vec(rho)[i + d j] = rho_ij`.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{BasisTag, Error, Result};
use crate::model::{qubit_hamiltonian, DressedBasis, Model};
use crate::numerics::{self, Constraint, SolveReport, SparseMatrix, TripletBuilder};
use crate::reduced::{QubitMarginals, ReducedState, FAMILIES};

/// Hard limit on the Hilbert dimension: the superoperator has `d^2` rows.
pub const MAX_HILBERT_DIM: usize = 400;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Sparse operator on the truncated space.
#[derive(Debug, Clone, PartialEq)]
pub struct Op {
    dim: usize,
    entries: BTreeMap<(usize, usize), C64>,
}

impl Op {
    pub fn zero(dim: usize) -> Self {
        Op { dim, entries: BTreeMap::new() }
    }

    pub fn identity(dim: usize) -> Self {
        let mut o = Op::zero(dim);
        for k in 0..dim {
            o.add_entry(k, k, ONE);
        }
        o
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn add_entry(&mut self, r: usize, c: usize, v: C64) {
        if v != ZERO {
            *self.entries.entry((r, c)).or_insert(ZERO) += v;
        }
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.entries.get(&(r, c)).copied().unwrap_or(ZERO)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        self.entries.iter().map(|(&(r, c), &v)| (r, c, v))
    }

    pub fn mul(&self, other: &Op) -> Op {
        assert_eq!(self.dim, other.dim);
        let mut by_row: Vec<Vec<(usize, C64)>> = vec![Vec::new(); other.dim];
        for (k, j, v) in other.iter() {
            by_row[k].push((j, v));
        }
        let mut out = Op::zero(self.dim);
        for (i, k, a) in self.iter() {
            for &(j, b) in &by_row[k] {
                out.add_entry(i, j, a * b);
            }
        }
        out
    }

    pub fn scale(&self, c: C64) -> Op {
        let mut out = Op::zero(self.dim);
        for (r, col, v) in self.iter() {
            out.add_entry(r, col, c * v);
        }
        out
    }

    pub fn plus(&self, other: &Op) -> Op {
        let mut out = self.clone();
        for (r, c, v) in other.iter() {
            out.add_entry(r, c, v);
        }
        out
    }

    pub fn adjoint(&self) -> Op {
        let mut out = Op::zero(self.dim);
        for (r, c, v) in self.iter() {
            out.add_entry(c, r, v.conj());
        }
        out
    }
}

/// Operator builders for the qubit-pair ⊗ boson space.
#[derive(Debug, Clone, Copy)]
pub struct Space {
    pub n_max: usize,
}

impl Space {
    pub fn levels(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        4 * self.levels()
    }

    pub fn index(&self, q: usize, n: usize) -> usize {
        q * self.levels() + n
    }

    /// `|a><b| ⊗ 1` for 0-based qubit indices.
    pub fn projector(&self, a: usize, b: usize) -> Op {
        let mut o = Op::zero(self.dim());
        for n in 0..self.levels() {
            o.add_entry(self.index(a, n), self.index(b, n), ONE);
        }
        o
    }

    /// `q ⊗ 1` for a 4x4 qubit matrix.
    pub fn qubit(&self, q: &[[C64; 4]; 4]) -> Op {
        let mut o = Op::zero(self.dim());
        for a in 0..4 {
            for b in 0..4 {
                if q[a][b] != ZERO {
                    for n in 0..self.levels() {
                        o.add_entry(self.index(a, n), self.index(b, n), q[a][b]);
                    }
                }
            }
        }
        o
    }

    /// `1 ⊗ b`.
    pub fn annihilation(&self) -> Op {
        let mut o = Op::zero(self.dim());
        for q in 0..4 {
            for n in 1..self.levels() {
                o.add_entry(self.index(q, n - 1), self.index(q, n), re((n as f64).sqrt()));
            }
        }
        o
    }

    pub fn number(&self) -> Op {
        let mut o = Op::zero(self.dim());
        for q in 0..4 {
            for n in 1..self.levels() {
                o.add_entry(self.index(q, n), self.index(q, n), re(n as f64));
            }
        }
        o
    }
}

/// Accumulates superoperator terms acting on `vec(rho)`.
pub struct SuperBuilder {
    d: usize,
    trip: TripletBuilder,
}

impl SuperBuilder {
    pub fn new(d: usize) -> Self {
        SuperBuilder { d, trip: TripletBuilder::with_capacity(d * d, d * d, 16 * d * d) }
    }

    /// `c X rho Y`.
    pub fn sandwich(&mut self, c: C64, x: &Op, y: &Op) {
        let d = self.d;
        let ys: Vec<(usize, usize, C64)> = y.iter().collect();
        for (i, k, xv) in x.iter() {
            for &(l, j, yv) in &ys {
                self.trip.push(i + d * j, k + d * l, c * xv * yv);
            }
        }
    }

    pub fn left(&mut self, c: C64, x: &Op) {
        self.sandwich(c, x, &Op::identity(self.d));
    }

    pub fn right(&mut self, c: C64, y: &Op) {
        self.sandwich(c, &Op::identity(self.d), y);
    }

    /// `-i [H, rho]`.
    pub fn hamiltonian(&mut self, h: &Op) {
        self.left(-I, h);
        self.right(I, h);
    }

    /// `c [X, Y rho] + H.c.`
    pub fn commutator_pair(&mut self, c: C64, x: &Op, y: &Op) {
        self.left(c, &x.mul(y));
        self.sandwich(-c, y, x);
        let (xd, yd) = (x.adjoint(), y.adjoint());
        self.right(c.conj(), &yd.mul(&xd));
        self.sandwich(-c.conj(), &xd, &yd);
    }

    /// Thermal damping of the mode at rate `kappa` with occupation `nbar`.
    pub fn thermal_mode(&mut self, space: &Space, kappa: f64, nbar: f64) {
        let b = space.annihilation();
        let bd = b.adjoint();
        self.commutator_pair(re(-kappa / 2.0 * (1.0 + nbar)), &bd, &b);
        self.commutator_pair(re(-kappa / 2.0 * nbar), &b, &bd);
    }

    pub fn build(self) -> SparseMatrix {
        self.trip.build()
    }
}

/// Liouvillian with the metadata needed to interpret its vector space.
#[derive(Debug, Clone)]
pub struct Superoperator {
    pub matrix: SparseMatrix,
    pub space: Space,
    pub basis: BasisTag,
}

fn check_dim(space: &Space) -> Result<()> {
    if space.dim() > MAX_HILBERT_DIM {
        return Err(Error::DimensionCap { dim: space.dim(), cap: MAX_HILBERT_DIM });
    }
    Ok(())
}

/// Secular master equation in the dressed basis.
pub fn build_dressed_liouvillian(model: &Model, n_max: usize) -> Result<Superoperator> {
    let space = Space { n_max };
    check_dim(&space)?;
    let p = &model.params;
    let db = &model.basis;
    let (a, b, c, d) = (db.a_bar, db.b_bar, db.c_bar, db.d_bar);
    let s = a * d + b * c;
    let r = |i: usize, j: usize| space.projector(i - 1, j - 1);
    let bop = space.annihilation();
    let bd = bop.adjoint();

    let h0 = r(4, 4)
        .scale(re(db.lambda4))
        .plus(&space.number().scale(re(-db.delta)))
        .plus(&r(3, 1).mul(&bop).plus(&bd.mul(&r(1, 3))).scale(re(-db.g_eff)));

    let mut sb = SuperBuilder::new(space.dim());
    sb.hamiltonian(&h0);

    let sym = -(p.gamma / 2.0) * (1.0 + p.chi_r);
    let diag = r(4, 4).scale(re(c * d)).plus(&r(3, 3).scale(re(a * b)));
    let off = r(4, 1).plus(&r(1, 4).scale(re(-1.0)));
    let op_a = diag.plus(&off.scale(re(c / (2.0 * 2f64.sqrt()))));
    let op_b = diag.scale(re(4.0)).plus(&off.scale(re(-2f64.sqrt() * c)));
    sb.commutator_pair(re(2.0 * sym), &op_a, &op_b);
    sb.commutator_pair(re(2.0 * s * s * sym), &r(3, 4), &r(4, 3));
    sb.commutator_pair(re(2.0 * s * s * sym), &r(4, 3), &r(3, 4));
    sb.commutator_pair(re(a * a * sym), &r(1, 3), &r(3, 1));
    sb.commutator_pair(re(a * a * sym), &r(3, 1), &r(1, 3));
    let cross = -2f64.sqrt() * a * s * sym;
    sb.commutator_pair(re(cross), &r(4, 3), &r(3, 1));
    sb.commutator_pair(re(cross), &r(1, 3), &r(3, 4));
    sb.commutator_pair(re(-cross), &r(3, 4), &r(1, 3));
    sb.commutator_pair(re(-cross), &r(3, 1), &r(4, 3));

    let anti = -(p.gamma / 2.0) * (1.0 - p.chi_r);
    sb.commutator_pair(re(b * b * anti), &r(3, 2), &r(2, 3));
    sb.commutator_pair(re(b * b * anti), &r(2, 3), &r(3, 2));
    sb.commutator_pair(re(d * d * anti), &r(2, 4), &r(4, 2));
    sb.commutator_pair(re(d * d * anti), &r(4, 2), &r(2, 4));
    sb.commutator_pair(re(0.5 * anti), &r(1, 2), &r(2, 1));
    sb.commutator_pair(re(0.5 * anti), &r(2, 1), &r(1, 2));
    let cross = -d / 2f64.sqrt() * anti;
    sb.commutator_pair(re(cross), &r(4, 2), &r(2, 1));
    sb.commutator_pair(re(cross), &r(1, 2), &r(2, 4));
    sb.commutator_pair(re(-cross), &r(2, 4), &r(1, 2));
    sb.commutator_pair(re(-cross), &r(2, 1), &r(4, 2));

    sb.thermal_mode(&space, p.kappa, p.nbar);
    Ok(Superoperator { matrix: sb.build(), space, basis: BasisTag::Dressed })
}

/// Bare two-qubit raising operators on `{|22>, |21>, |12>, |11>}`.
fn raising(qubit: usize) -> [[C64; 4]; 4] {
    let mut m = [[ZERO; 4]; 4];
    if qubit == 1 {
        m[0][2] = ONE;
        m[1][3] = ONE;
    } else {
        m[0][1] = ONE;
        m[2][3] = ONE;
    }
    m
}

/// Original master equation in the bare basis, frame rotating at the drive.
pub fn build_bare_liouvillian(model: &Model, n_max: usize) -> Result<Superoperator> {
    let space = Space { n_max };
    check_dim(&space)?;
    let p = &model.params;
    let hq = qubit_hamiltonian(p);
    let mut hq_c = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            hq_c[i][j] = re(hq[i][j]);
        }
    }
    let mut sz = [[ZERO; 4]; 4];
    sz[0][0] = ONE;
    sz[3][3] = -ONE;
    let bop = space.annihilation();
    let x = bop.plus(&bop.adjoint());
    // an overridden dressed detuning is realised through the mode frequency
    let omega = match p.delta_override {
        Some(delta) => model.basis.lambda3 - delta,
        None => p.omega,
    };
    let h = space
        .number()
        .scale(re(omega))
        .plus(&space.qubit(&sz).mul(&x).scale(re(p.g)))
        .plus(&space.qubit(&hq_c));

    let mut sb = SuperBuilder::new(space.dim());
    sb.hamiltonian(&h);
    let sp = [space.qubit(&raising(1)), space.qubit(&raising(2))];
    for j in 0..2 {
        for l in 0..2 {
            let rate = if j == l { p.gamma / 2.0 } else { p.gamma * p.chi_r / 2.0 };
            sb.commutator_pair(re(-rate), &sp[j], &sp[l].adjoint());
        }
    }
    sb.thermal_mode(&space, p.kappa, p.nbar);
    Ok(Superoperator { matrix: sb.build(), space, basis: BasisTag::Bare })
}

/// Dense density matrix on the truncated space.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub space: Space,
    pub basis: BasisTag,
    /// Row-major `d x d`.
    pub data: Vec<C64>,
}

impl DensityMatrix {
    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim() + j]
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|k| self.get(k, k)).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let d = self.dim();
        let m = faer::Mat::<C64>::from_fn(d, d, |i, j| self.get(i, j));
        let ev = m
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .map_err(|e| Error::Numerical(format!("eigenvalues: {e:?}")))?;
        Ok(ev.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// Same state expressed in the dressed basis.
    pub fn to_dressed(&self, basis: &DressedBasis) -> DensityMatrix {
        match self.basis {
            BasisTag::Dressed => self.clone(),
            BasisTag::Bare => {
                let t = basis.transform;
                let levels = self.space.levels();
                let d = self.dim();
                let mut out = vec![ZERO; d * d];
                // <Psi_a, m| rho |Psi_b, n> = sum_kl T_ak T_bl rho_(k m),(l n)
                for a in 0..4 {
                    for b in 0..4 {
                        for m in 0..levels {
                            for n in 0..levels {
                                let mut acc = ZERO;
                                for k in 0..4 {
                                    for l in 0..4 {
                                        let w = t[a][k] * t[b][l];
                                        if w != 0.0 {
                                            acc += self.get(self.space.index(k, m), self.space.index(l, n)) * w;
                                        }
                                    }
                                }
                                out[self.space.index(a, m) * d + self.space.index(b, n)] = acc;
                            }
                        }
                    }
                }
                DensityMatrix { space: self.space, basis: BasisTag::Dressed, data: out }
            }
        }
    }

    /// Fock-diagonal reduced variables, computed from a dressed-basis state.
    pub fn project_to_reduced(&self) -> Result<ReducedState> {
        if self.basis != BasisTag::Dressed {
            return Err(Error::BasisMismatch { expected: BasisTag::Dressed, found: self.basis });
        }
        let n_max = self.space.n_max;
        let sp = self.space;
        let el = |a: usize, m: usize, b: usize, n: usize| self.get(sp.index(a - 1, m), sp.index(b - 1, n));
        let mut out = ReducedState::zeros(n_max);
        for n in 0..=n_max {
            let sq = (n as f64).sqrt();
            let sq1 = (n as f64 + 1.0).sqrt();
            let pops: Vec<C64> = (1..=4).map(|a| el(a, n, a, n)).collect();
            // b+ X at (n, n) reads X at (n-1, n); X b reads X at (n, n-1)
            let lower = |a: usize, b: usize| if n == 0 { ZERO } else { el(a, n - 1, b, n) * sq };
            let lower_t = |a: usize, b: usize| if n == 0 { ZERO } else { el(a, n, b, n - 1) * sq };
            let upper = |a: usize, b: usize| if n == n_max { ZERO } else { el(a, n, b, n + 1) * sq1 };
            let upper_t = |a: usize, b: usize| if n == n_max { ZERO } else { el(a, n + 1, b, n) * sq1 };
            let v = [
                pops.iter().sum(),
                pops[0],
                pops[1],
                pops[2],
                lower(3, 1) - lower_t(1, 3),
                lower(3, 1) + lower_t(1, 3),
                upper(3, 1) - upper_t(1, 3),
                upper(3, 1) + upper_t(1, 3),
                lower(3, 4) - lower_t(4, 3),
                lower(3, 4) + lower_t(4, 3),
                el(1, n, 4, n) - el(4, n, 1, n),
                el(1, n, 4, n) + el(4, n, 1, n),
                upper(3, 4) - upper_t(4, 3),
                upper(3, 4) + upper_t(4, 3),
            ];
            for (f, val) in v.into_iter().enumerate().take(FAMILIES) {
                *out.get_mut(f, n) = val;
            }
        }
        Ok(out)
    }

    /// Two-qubit block after tracing out the mode, row-major 4x4.
    pub fn qubit_block(&self) -> [[C64; 4]; 4] {
        let mut q = [[ZERO; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                q[a][b] = (0..self.space.levels()).map(|n| self.get(self.space.index(a, n), self.space.index(b, n))).sum();
            }
        }
        q
    }
}

/// Steady state with `Tr rho = 1` written into the `rho_00` equation.
pub fn steady_state_dm(op: &Superoperator) -> Result<(DensityMatrix, SolveReport)> {
    let d = op.space.dim();
    let constraint = Constraint {
        replace_row: 0,
        coeffs: (0..d).map(|k| (k + d * k, ONE)).collect(),
        rhs: ONE,
    };
    let (x, report) = numerics::solve_constrained_nullspace(&op.matrix, &constraint)?;
    let bound = 1e-10 * op.matrix.norm_inf() * x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !(report.residual <= bound) {
        return Err(Error::NonConvergence { residual: report.residual, bound });
    }
    let mut data = vec![ZERO; d * d];
    for i in 0..d {
        for j in 0..d {
            data[i * d + j] = (x[i + d * j] + x[j + d * i].conj()) / 2.0;
        }
    }
    let tr: C64 = (0..d).map(|k| data[k * d + k]).sum();
    data.iter_mut().for_each(|v| *v /= tr.re);
    Ok((DensityMatrix { space: op.space, basis: op.basis, data }, report))
}

/// Largest `|sum_k L[(k,k), c]|` over columns: zero for a trace-preserving map.
pub fn trace_functional_defect(op: &Superoperator) -> f64 {
    let d = op.space.dim();
    let mut u = vec![ZERO; d * d];
    for k in 0..d {
        u[k + d * k] = ONE;
    }
    op.matrix.vec_mul(&u).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Frame-invariant observables of a full steady state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleObservables {
    pub mean_n: f64,
    pub g2: Option<f64>,
    pub marginals: QubitMarginals,
    pub min_eigenvalue: f64,
    pub hermiticity_defect: f64,
}

pub fn observables(rho: &DensityMatrix, basis: &DressedBasis) -> Result<OracleObservables> {
    let dressed = rho.to_dressed(basis);
    let sp = rho.space;
    let mut mean = 0.0;
    let mut second = 0.0;
    for q in 0..4 {
        for n in 0..sp.levels() {
            let p = rho.get(sp.index(q, n), sp.index(q, n)).re;
            mean += n as f64 * p;
            second += (n as f64) * (n as f64 - 1.0) * p;
        }
    }
    let q = dressed.qubit_block();
    let marginals = QubitMarginals {
        rho11: q[0][0].re,
        rho22: q[1][1].re,
        rho33: q[2][2].re,
        rho44: q[3][3].re,
        coh_plus: q[0][3] + q[3][0],
        coh_minus: q[0][3] - q[3][0],
    };
    Ok(OracleObservables {
        mean_n: mean,
        g2: if mean < 1e-12 { None } else { Some(second / (mean * mean)) },
        marginals,
        min_eigenvalue: rho.min_eigenvalue()?,
        hermiticity_defect: rho.hermiticity_defect(),
    })
}

/// Relative deviation `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_deviation(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SystemParams;

    fn model(rabi: f64, g: f64, nbar: f64) -> Model {
        Model::new(SystemParams { g, nbar, ..SystemParams::caption(rabi) }).unwrap()
    }

    #[test]
    fn op_algebra() {
        let sp = Space { n_max: 4 };
        let b = sp.annihilation();
        let comm = b.mul(&b.adjoint()).plus(&b.adjoint().mul(&b).scale(re(-1.0)));
        // [b, b+] = 1 except at the truncation edge
        for q in 0..4 {
            for n in 0..4 {
                assert!((comm.get(sp.index(q, n), sp.index(q, n)) - ONE).norm() < 1e-14);
            }
            assert!((comm.get(sp.index(q, 4), sp.index(q, 4)) - re(-4.0)).norm() < 1e-14);
        }
        let diff = b.adjoint().mul(&b).plus(&sp.number().scale(re(-1.0)));
        assert!(diff.iter().all(|(_, _, v)| v.norm() < 1e-14));
    }

    #[test]
    fn generators_preserve_trace() {
        let m = model(3.0, 2.0, 0.4);
        for op in [build_dressed_liouvillian(&m, 5).unwrap(), build_bare_liouvillian(&m, 5).unwrap()] {
            assert!(trace_functional_defect(&op) < 1e-12, "{:?}", op.basis);
        }
    }

    #[test]
    fn uncoupled_mode_thermal_in_both_references() {
        let m = model(3.0, 0.0, 0.2);
        let n_max = 14;
        for op in [build_dressed_liouvillian(&m, n_max).unwrap(), build_bare_liouvillian(&m, n_max).unwrap()] {
            let (rho, _) = steady_state_dm(&op).unwrap();
            let obs = observables(&rho, &m.basis).unwrap();
            let r: f64 = 0.2 / 1.2;
            let rn = r.powi(n_max as i32 + 1);
            let exact = r / (1.0 - r) - (n_max as f64 + 1.0) * rn / (1.0 - rn);
            assert!((obs.mean_n - exact).abs() < 1e-10, "{:?}: {} vs {exact}", op.basis, obs.mean_n);
            assert!(obs.min_eigenvalue > -1e-12);
        }
    }

    #[test]
    fn undriven_references_relax_to_ground() {
        let m = model(0.0, 0.0, 0.0);
        for op in [build_dressed_liouvillian(&m, 2).unwrap(), build_bare_liouvillian(&m, 2).unwrap()] {
            let (rho, _) = steady_state_dm(&op).unwrap();
            let obs = observables(&rho, &m.basis).unwrap();
            // |11> = -(Psi1 + Psi4) / sqrt(2)
            let mg = obs.marginals;
            assert!((mg.rho11 - 0.5).abs() < 1e-10 && (mg.rho44 - 0.5).abs() < 1e-10, "{:?} {:?}", op.basis, mg);
            assert!(obs.mean_n.abs() < 1e-12);
        }
    }

    #[test]
    fn bare_to_dressed_preserves_trace_and_spectrum_edge() {
        let m = model(2.5, 2.0, 0.1);
        let op = build_bare_liouvillian(&m, 4).unwrap();
        let (rho, _) = steady_state_dm(&op).unwrap();
        let dressed = rho.to_dressed(&m.basis);
        assert!((dressed.trace() - ONE).norm() < 1e-12);
        assert!((dressed.min_eigenvalue().unwrap() - rho.min_eigenvalue().unwrap()).abs() < 1e-12);
        assert!(matches!(rho.project_to_reduced(), Err(Error::BasisMismatch { .. })));
    }
}
