//! Reduced equations of motion for the Fock-projected dressed-state variables.
//!
//! The fourteen families `P(i)_n = <n| rho(i) |n>` are built from the dressed
//! matrix elements `rho_ab = <Psi_a| rho |Psi_b>` (operators on the boson
//! space):
//!
//! | i  | operator                      | i  | operator                      |
//! |----|-------------------------------|----|-------------------------------|
//! | 0  | rho11 + rho22 + rho33 + rho44 | 7  | rho31 b+ + b rho13            |
//! | 1  | rho11                         | 8  | b+ rho34 - rho43 b            |
//! | 2  | rho22                         | 9  | b+ rho34 + rho43 b            |
//! | 3  | rho33                         | 10 | rho14 - rho41                 |
//! | 4  | b+ rho31 - rho13 b            | 11 | rho14 + rho41                 |
//! | 5  | b+ rho31 + rho13 b            | 12 | rho34 b+ - b rho43            |
//! | 6  | rho31 b+ - b rho13            | 13 | rho34 b+ + b rho43            |
//!
//! The state vector is laid out family-major: index `i * (n_max + 1) + n`.
//!
//! Truncation: any coupling to `n_max + 1` is dropped. For the
//! population-like families (0-3, 10, 11) this includes the upward thermal
//! loss at `n_max`, so the `kappa` chain stays a closed birth-death process.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::{self, Constraint, SolveReport, SparseMatrix, StiffLinearIntegrator, TripletBuilder};

pub const FAMILIES: usize = 14;

/// Default upper bound for automatic `n_max` selection.
pub const DEFAULT_N_MAX_CAP: usize = 4000;

/// Thermal-tail weight accepted by automatic truncation.
pub const TAIL_TOLERANCE: f64 = 1e-10;

/// Relative change allowed when `n_max` is raised by 25%.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-6;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TruncationPolicy {
    Fixed,
    Auto { cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FockTruncation {
    pub n_max: usize,
    pub policy: TruncationPolicy,
}

impl FockTruncation {
    pub fn fixed(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::InvalidParameter { name: "n_max", reason: "must be >= 1".into() });
        }
        Ok(FockTruncation { n_max, policy: TruncationPolicy::Fixed })
    }

    /// Starting point of automatic selection: `ceil(8 (nbar + 1))`, raised
    /// until the thermal tail beyond `n_max` weighs less than 1e-10.
    pub fn auto(nbar: f64, cap: usize) -> Self {
        let start = (8.0 * (nbar + 1.0)).ceil() as usize;
        let n_max = start.max(min_n_max_for_tail(nbar, TAIL_TOLERANCE)).max(1).min(cap.max(1));
        FockTruncation { n_max, policy: TruncationPolicy::Auto { cap } }
    }

    pub fn levels(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        FAMILIES * self.levels()
    }
}

/// Weight of a thermal distribution beyond `n_max`: `(nbar / (1 + nbar))^(n_max + 1)`.
pub fn thermal_tail(nbar: f64, n_max: usize) -> f64 {
    if nbar == 0.0 {
        return 0.0;
    }
    (nbar / (1.0 + nbar)).powf(n_max as f64 + 1.0)
}

/// Smallest `n_max` whose thermal tail is below `tol`.
pub fn min_n_max_for_tail(nbar: f64, tol: f64) -> usize {
    if nbar == 0.0 {
        return 1;
    }
    let ratio = nbar / (1.0 + nbar);
    let n = (tol.ln() / ratio.ln()).ceil() as usize;
    n.saturating_sub(1).max(1)
}

/// Normalized thermal occupation probabilities on `0..=n_max`.
pub fn thermal_distribution(nbar: f64, n_max: usize) -> Vec<f64> {
    if nbar == 0.0 {
        let mut p = vec![0.0; n_max + 1];
        p[0] = 1.0;
        return p;
    }
    let ratio = nbar / (1.0 + nbar);
    let mut p: Vec<f64> = (0..=n_max).map(|n| ratio.powi(n as i32)).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

/// Sparse generator `L` of `d/dt P = L P`.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    pub matrix: SparseMatrix,
    pub trunc: FockTruncation,
}

impl GeneratorMatrix {
    pub fn index(&self, family: usize, n: usize) -> usize {
        family * self.trunc.levels() + n
    }

    pub fn dim(&self) -> usize {
        self.trunc.dim()
    }
}

/// Assembles the reduced generator for one parameter point.
pub fn build_generator(model: &Model, trunc: FockTruncation, max_dim: usize) -> Result<GeneratorMatrix> {
    let dim = trunc.dim();
    if dim > max_dim {
        return Err(Error::DimensionCap { dim, cap: max_dim });
    }
    let p = &model.params;
    let r = &model.rates;
    let basis = &model.basis;
    let big_n = trunc.n_max;
    let levels = trunc.levels();
    let k_up = p.kappa * p.nbar; // thermal excitation
    let k_dn = p.kappa * (1.0 + p.nbar); // emission into the bath
    let g = basis.g_eff;
    let delta = basis.delta;
    let l4 = basis.lambda4;
    let i = C64::new(0.0, 1.0);
    let re = |x: f64| C64::new(x, 0.0);

    let mut t = TripletBuilder::with_capacity(dim, dim, dim * 12);
    let mut put = |fi: usize, n: usize, fj: usize, m: isize, v: C64| {
        // couplings beyond the truncation (or below vacuum) are dropped
        if m < 0 || m as usize > big_n {
            return;
        }
        t.push(fi * levels + n, fj * levels + m as usize, v);
    };

    for n in 0..=big_n {
        let nf = n as f64;
        let ni = n as isize;
        let top = n == big_n;

        // birth-death chain shared by the population-like families
        let chain = |put: &mut dyn FnMut(usize, usize, usize, isize, C64), f: usize| {
            let up_loss = if top { 0.0 } else { k_up * (nf + 1.0) };
            put(f, n, f, ni, re(-up_loss - k_dn * nf));
            put(f, n, f, ni - 1, re(k_up * nf));
            put(f, n, f, ni + 1, re(k_dn * (nf + 1.0)));
        };
        for f in [0, 1, 2, 3, 10, 11] {
            chain(&mut put, f);
        }

        // 0: total population
        put(0, n, 4, ni, i * g);
        put(0, n, 6, ni, -i * g);

        // 1: rho11
        put(1, n, 4, ni, i * g);
        put(1, n, 0, ni, re(r.gamma1_0));
        put(1, n, 1, ni, re(-r.gamma1_1));
        put(1, n, 2, ni, re(-r.gamma1_2));
        put(1, n, 3, ni, re(-r.gamma1_3));
        put(1, n, 11, ni, re(r.gamma1_11));

        // 2: rho22
        put(2, n, 0, ni, re(r.gamma2_0));
        put(2, n, 1, ni, re(r.gamma2_1));
        put(2, n, 2, ni, re(-r.gamma2_2));
        put(2, n, 3, ni, re(r.gamma2_3));
        put(2, n, 11, ni, re(-r.gamma2_11));

        // 3: rho33
        put(3, n, 6, ni, -i * g);
        put(3, n, 0, ni, re(r.gamma3_0));
        put(3, n, 1, ni, re(r.gamma3_1));
        put(3, n, 2, ni, re(-r.gamma3_2));
        put(3, n, 3, ni, re(-r.gamma3_3));
        put(3, n, 11, ni, re(-r.gamma3_11));

        // 4: b+ rho31 - rho13 b
        put(4, n, 5, ni, -i * delta);
        put(4, n, 1, ni, 2.0 * i * g * nf);
        put(4, n, 3, ni - 1, -2.0 * i * g * nf);
        put(4, n, 6, ni, re(-k_dn));
        put(4, n, 4, ni, re(-k_dn * (2.0 * nf - 1.0) / 2.0 - k_up * (2.0 * nf + 1.0) / 2.0 - r.gamma4_4));
        put(4, n, 4, ni + 1, re(k_dn * (nf + 1.0)));
        put(4, n, 4, ni - 1, re(k_up * nf));
        put(4, n, 8, ni, re(r.gamma4_8));

        // 5: b+ rho31 + rho13 b
        put(5, n, 4, ni, -i * delta);
        put(5, n, 7, ni, re(-k_dn));
        put(5, n, 5, ni, re(-k_dn * (2.0 * nf - 1.0) / 2.0 - k_up * (2.0 * nf + 1.0) / 2.0 - r.gamma5_5));
        put(5, n, 5, ni + 1, re(k_dn * (nf + 1.0)));
        put(5, n, 5, ni - 1, re(k_up * nf));
        put(5, n, 9, ni, re(r.gamma5_9));

        // 6: rho31 b+ - b rho13
        put(6, n, 7, ni, -i * delta);
        put(6, n, 1, ni + 1, 2.0 * i * g * (nf + 1.0));
        put(6, n, 3, ni, -2.0 * i * g * (nf + 1.0));
        put(6, n, 6, ni, re(-k_dn * (2.0 * nf + 1.0) / 2.0 - k_up * (2.0 * nf + 3.0) / 2.0 - r.gamma6_6));
        put(6, n, 6, ni + 1, re(k_dn * (nf + 1.0)));
        put(6, n, 6, ni - 1, re(k_up * nf));
        put(6, n, 4, ni, re(k_up));
        put(6, n, 12, ni, re(r.gamma6_12));

        // 7: rho31 b+ + b rho13
        put(7, n, 6, ni, -i * delta);
        put(7, n, 7, ni, re(-k_dn * (2.0 * nf + 1.0) / 2.0 - k_up * (2.0 * nf + 3.0) / 2.0 - r.gamma7_7));
        put(7, n, 7, ni + 1, re(k_dn * (nf + 1.0)));
        put(7, n, 7, ni - 1, re(k_up * nf));
        put(7, n, 5, ni, re(k_up));
        put(7, n, 13, ni, re(r.gamma7_13));

        // 8: b+ rho34 - rho43 b
        put(8, n, 9, ni, i * (l4 - delta));
        put(8, n, 11, ni, i * g * nf);
        put(8, n, 8, ni, re(-k_up * (2.0 * nf + 1.0) / 2.0 - k_dn * (2.0 * nf - 1.0) / 2.0 - r.gamma8_8));
        put(8, n, 8, ni - 1, re(k_up * nf));
        put(8, n, 12, ni, re(-k_dn));
        put(8, n, 8, ni + 1, re(k_dn * (nf + 1.0)));
        put(8, n, 4, ni, re(r.gamma8_4));

        // 9: b+ rho34 + rho43 b
        put(9, n, 8, ni, i * (l4 - delta));
        put(9, n, 10, ni, i * g * nf);
        put(9, n, 9, ni, re(-k_up * (2.0 * nf + 1.0) / 2.0 - k_dn * (2.0 * nf - 1.0) / 2.0 - r.gamma9_9));
        put(9, n, 9, ni - 1, re(k_up * nf));
        put(9, n, 13, ni, re(-k_dn));
        put(9, n, 9, ni + 1, re(k_dn * (nf + 1.0)));
        put(9, n, 5, ni, re(r.gamma9_5));

        // 10: rho14 - rho41
        put(10, n, 11, ni, i * l4);
        put(10, n, 9, ni, i * g);
        put(10, n, 10, ni, re(-r.gamma10_10));

        // 11: rho14 + rho41
        put(11, n, 10, ni, i * l4);
        put(11, n, 8, ni, i * g);
        put(11, n, 0, ni, re(r.gamma11_0));
        put(11, n, 1, ni, re(-r.gamma11_1));
        put(11, n, 2, ni, re(-r.gamma11_2));
        put(11, n, 3, ni, re(-r.gamma11_3));
        put(11, n, 11, ni, re(-r.gamma11_11));

        // 12: rho34 b+ - b rho43
        put(12, n, 13, ni, i * (l4 - delta));
        put(12, n, 11, ni + 1, i * g * (nf + 1.0));
        put(12, n, 6, ni, re(r.gamma12_6));
        put(12, n, 12, ni, re(-k_dn * (2.0 * nf + 1.0) / 2.0 - k_up * (2.0 * nf + 3.0) / 2.0 - r.gamma12_12));
        put(12, n, 12, ni + 1, re(k_dn * (nf + 1.0)));
        put(12, n, 12, ni - 1, re(k_up * nf));
        put(12, n, 8, ni, re(k_up));

        // 13: rho34 b+ + b rho43
        put(13, n, 12, ni, i * (l4 - delta));
        put(13, n, 10, ni + 1, i * g * (nf + 1.0));
        put(13, n, 7, ni, re(r.gamma13_7));
        put(13, n, 13, ni, re(-k_dn * (2.0 * nf + 1.0) / 2.0 - k_up * (2.0 * nf + 3.0) / 2.0 - r.gamma13_13));
        put(13, n, 13, ni + 1, re(k_dn * (nf + 1.0)));
        put(13, n, 13, ni - 1, re(k_up * nf));
        put(13, n, 9, ni, re(k_up));
    }

    let matrix = t.build();
    Ok(GeneratorMatrix { matrix, trunc })
}

/// Values of all fourteen families on `0..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState {
    pub n_max: usize,
    pub values: Vec<C64>,
}

/// Traced dressed-state populations and the two `rho14 / rho41` combinations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QubitMarginals {
    pub rho11: f64,
    pub rho22: f64,
    pub rho33: f64,
    pub rho44: f64,
    /// `Tr(rho14 + rho41)`, real for a Hermitian state.
    pub coh_plus: C64,
    /// `Tr(rho14 - rho41)`, imaginary for a Hermitian state.
    pub coh_minus: C64,
}

impl QubitMarginals {
    pub fn populations(&self) -> [f64; 4] {
        [self.rho11, self.rho22, self.rho33, self.rho44]
    }

    /// `rho14` in the `<Psi_a| rho |Psi_b>` convention.
    pub fn rho14(&self) -> C64 {
        (self.coh_plus + self.coh_minus) / 2.0
    }

    pub fn rho41(&self) -> C64 {
        (self.coh_plus - self.coh_minus) / 2.0
    }
}

impl ReducedState {
    pub fn zeros(n_max: usize) -> Self {
        ReducedState { n_max, values: vec![ZERO; FAMILIES * (n_max + 1)] }
    }

    pub fn from_values(n_max: usize, values: Vec<C64>) -> Self {
        assert_eq!(values.len(), FAMILIES * (n_max + 1));
        ReducedState { n_max, values }
    }

    /// Boson distribution `phonons` (length `n_max + 1`) in product with a
    /// single dressed level `1..=4`, all coherences zero.
    pub fn product(phonons: &[f64], dressed_level: usize) -> Self {
        assert!((1..=4).contains(&dressed_level));
        let n_max = phonons.len() - 1;
        let mut s = ReducedState::zeros(n_max);
        for (n, &w) in phonons.iter().enumerate() {
            *s.get_mut(0, n) = C64::new(w, 0.0);
            if dressed_level < 4 {
                *s.get_mut(dressed_level, n) = C64::new(w, 0.0);
            }
        }
        s
    }

    /// Thermal boson times the lowest-energy dressed level.
    pub fn thermal_ground(model: &Model, n_max: usize) -> Self {
        ReducedState::product(&thermal_distribution(model.params.nbar, n_max), lowest_dressed_level(model))
    }

    /// Boson vacuum times the lowest-energy dressed level.
    pub fn vacuum_ground(model: &Model, n_max: usize) -> Self {
        ReducedState::product(&thermal_distribution(0.0, n_max), lowest_dressed_level(model))
    }

    fn levels(&self) -> usize {
        self.n_max + 1
    }

    pub fn get(&self, family: usize, n: usize) -> C64 {
        self.values[family * self.levels() + n]
    }

    pub fn get_mut(&mut self, family: usize, n: usize) -> &mut C64 {
        let l = self.levels();
        &mut self.values[family * l + n]
    }

    pub fn family(&self, family: usize) -> &[C64] {
        let l = self.levels();
        &self.values[family * l..(family + 1) * l]
    }

    pub fn trace(&self) -> C64 {
        self.family(0).iter().sum()
    }

    pub fn phonon_distribution(&self) -> Vec<f64> {
        self.family(0).iter().map(|v| v.re).collect()
    }

    /// Largest violation of the real/imaginary pattern implied by Hermiticity.
    pub fn reality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for f in 0..FAMILIES {
            let imaginary = matches!(f, 4 | 6 | 8 | 10 | 12);
            let real = matches!(f, 0 | 1 | 2 | 3 | 5 | 7 | 9 | 11 | 13);
            for v in self.family(f) {
                if real {
                    worst = worst.max(v.im.abs());
                } else if imaginary {
                    worst = worst.max(v.re.abs());
                }
            }
        }
        worst
    }

    /// Most negative entry among the population families 0-3.
    pub fn min_population(&self) -> f64 {
        (0..4).flat_map(|f| self.family(f).iter().map(|v| v.re)).fold(f64::INFINITY, f64::min)
    }
}

/// Dressed level (1-based) with the lowest eigenvalue.
pub fn lowest_dressed_level(model: &Model) -> usize {
    let e = model.basis.eigenvalues();
    (0..4).min_by(|&a, &b| e[a].total_cmp(&e[b])).unwrap() + 1
}

/// `<b+ b> = sum_n n Re P0_n`.
pub fn mean_phonon(x: &ReducedState) -> f64 {
    x.family(0).iter().enumerate().map(|(n, v)| n as f64 * v.re).sum()
}

/// `g2(0) = sum_n n (n - 1) P0_n / <b+ b>^2`.
pub fn g2(x: &ReducedState) -> Result<f64> {
    let mean = mean_phonon(x);
    if mean < 1e-12 {
        return Err(Error::UndefinedStatistics(mean));
    }
    let second: f64 = x.family(0).iter().enumerate().map(|(n, v)| (n as f64) * (n as f64 - 1.0) * v.re).sum();
    Ok(second / (mean * mean))
}

pub fn qubit_marginals(x: &ReducedState) -> Result<QubitMarginals> {
    let total = |f: usize| -> C64 { x.family(f).iter().sum() };
    let trace = total(0).re;
    let rho11 = total(1).re / trace;
    let rho22 = total(2).re / trace;
    let rho33 = total(3).re / trace;
    let rho44 = 1.0 - rho11 - rho22 - rho33;
    for (which, value) in [("rho11", rho11), ("rho22", rho22), ("rho33", rho33), ("rho44", rho44)] {
        if value < -1e-8 {
            return Err(Error::NegativePopulation { which, value });
        }
    }
    Ok(QubitMarginals { rho11, rho22, rho33, rho44, coh_plus: total(11) / trace, coh_minus: total(10) / trace })
}

/// Steady state with `sum_n P0_n = 1` written into the `(0, 0)` equation.
pub fn steady_state(gen: &GeneratorMatrix) -> Result<(ReducedState, SolveReport)> {
    let levels = gen.trunc.levels();
    let constraint = Constraint {
        replace_row: gen.index(0, 0),
        coeffs: (0..levels).map(|n| (gen.index(0, n), C64::new(1.0, 0.0))).collect(),
        rhs: C64::new(1.0, 0.0),
    };
    let (x, report) = numerics::solve_constrained_nullspace(&gen.matrix, &constraint)?;
    let x_norm = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let bound = 1e-10 * gen.matrix.norm_inf() * x_norm;
    if !(report.residual <= bound) {
        return Err(Error::NonConvergence { residual: report.residual, bound });
    }
    Ok((ReducedState::from_values(gen.trunc.n_max, x), report))
}

/// Time evolution of `x0` under `gen` up to `t_final`.
pub fn evolve(gen: &GeneratorMatrix, x0: &ReducedState, t_final: f64, rel_tol: f64) -> Result<ReducedState> {
    assert_eq!(x0.n_max, gen.trunc.n_max);
    let x = numerics::integrate_stiff_linear(&gen.matrix, &x0.values, t_final, rel_tol)?;
    Ok(ReducedState::from_values(x0.n_max, x))
}

/// States at each of the increasing `times`.
pub fn evolve_trajectory(gen: &GeneratorMatrix, x0: &ReducedState, times: &[f64], rel_tol: f64) -> Result<Vec<ReducedState>> {
    let mut integ = StiffLinearIntegrator::new(&gen.matrix, rel_tol);
    Ok(integ
        .integrate_to(&x0.values, times)?
        .into_iter()
        .map(|v| ReducedState::from_values(x0.n_max, v))
        .collect())
}

/// Observables that the truncation-convergence check compares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyObservables {
    pub mean_n: f64,
    pub g2: Option<f64>,
    pub marginals: QubitMarginals,
}

impl SteadyObservables {
    pub fn of(x: &ReducedState) -> Result<Self> {
        Ok(SteadyObservables {
            mean_n: mean_phonon(x),
            g2: g2(x).ok(),
            marginals: qubit_marginals(x)?,
        })
    }

    /// Largest relative difference (with a 1e-12 absolute floor).
    pub fn max_relative_change(&self, other: &SteadyObservables) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / (a.abs().max(b.abs()).max(1e-12));
        let mut worst = rel(self.mean_n, other.mean_n);
        if let (Some(a), Some(b)) = (self.g2, other.g2) {
            worst = worst.max(rel(a, b));
        }
        let (pa, pb) = (self.marginals.populations(), other.marginals.populations());
        for k in 0..4 {
            worst = worst.max((pa[k] - pb[k]).abs() / pa[k].abs().max(pb[k].abs()).max(1e-6));
        }
        worst
    }
}

/// Steady state with its truncation bookkeeping.
#[derive(Debug, Clone)]
pub struct SteadySolution {
    pub state: ReducedState,
    pub report: SolveReport,
    pub observables: SteadyObservables,
    /// Relative change of the observables under `n_max -> ceil(1.25 n_max)`,
    /// when the check was run.
    pub truncation_change: Option<f64>,
}

impl SteadySolution {
    pub fn n_max(&self) -> usize {
        self.state.n_max
    }
}

/// Solves at a fixed truncation.
pub fn solve_fixed(model: &Model, n_max: usize) -> Result<SteadySolution> {
    let trunc = FockTruncation::fixed(n_max)?;
    let gen = build_generator(model, trunc, usize::MAX)?;
    let (state, report) = steady_state(&gen)?;
    let observables = SteadyObservables::of(&state)?;
    Ok(SteadySolution { state, report, observables, truncation_change: None })
}

/// Automatic truncation: start from [`FockTruncation::auto`] and double
/// `n_max` until a 25% increase changes no observable by more than 1e-6.
pub fn solve_auto(model: &Model, cap: usize) -> Result<SteadySolution> {
    let mut n_max = FockTruncation::auto(model.params.nbar, cap).n_max;
    loop {
        let mut base = solve_fixed(model, n_max)?;
        let bigger = (n_max as f64 * 1.25).ceil() as usize;
        let check = solve_fixed(model, bigger)?;
        let change = base.observables.max_relative_change(&check.observables);
        base.truncation_change = Some(change);
        if change < CONVERGENCE_TOLERANCE {
            return Ok(base);
        }
        if n_max * 2 > cap {
            return Err(Error::DimensionCap { dim: FAMILIES * (2 * n_max + 1), cap: FAMILIES * (cap + 1) });
        }
        n_max *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SystemParams;

    fn small_model(rabi: f64, g: f64, nbar: f64) -> Model {
        Model::new(SystemParams { g, nbar, ..SystemParams::caption(rabi) }).unwrap()
    }

    #[test]
    fn vacuum_population_row_matches_printed_coefficients() {
        let m = small_model(3.0, 2.0, 1.5);
        let gen = build_generator(&m, FockTruncation::fixed(6).unwrap(), usize::MAX).unwrap();
        let (k, nb) = (m.params.kappa, m.params.nbar);
        let n = 3;
        let row = gen.index(0, n);
        let l = &gen.matrix;
        let nf = n as f64;
        assert!((l.get(row, row).re - (-k * (1.0 + nb) * nf - k * nb * (nf + 1.0))).abs() < 1e-15);
        assert!((l.get(row, gen.index(0, n - 1)).re - k * nb * nf).abs() < 1e-15);
        assert!((l.get(row, gen.index(0, n + 1)).re - k * (1.0 + nb) * (nf + 1.0)).abs() < 1e-15);
        assert_eq!(l.get(row, gen.index(4, n)), C64::new(0.0, m.basis.g_eff));
        assert_eq!(l.get(row, gen.index(6, n)), C64::new(0.0, -m.basis.g_eff));
        assert!(l.max_row_nnz() <= 20);
    }

    #[test]
    fn ladder_columns_telescope() {
        let m = small_model(3.0, 2.0, 1.5);
        let gen = build_generator(&m, FockTruncation::fixed(9).unwrap(), usize::MAX).unwrap();
        for n in 0..=9 {
            let col = gen.index(0, n);
            let sum: C64 = (0..=9).map(|k| gen.matrix.get(gen.index(0, k), col)).sum();
            assert!(sum.norm() < 1e-15, "column {n}: {sum}");
        }
    }

    #[test]
    fn uncoupled_mode_is_thermal() {
        let m = small_model(3.0, 0.0, 2.0);
        let sol = solve_fixed(&m, 80).unwrap();
        let thermal = thermal_distribution(2.0, 80);
        for (p, q) in sol.state.phonon_distribution().iter().zip(&thermal) {
            assert!((p - q).abs() < 1e-12);
        }
        let ratio: f64 = 2.0 / 3.0;
        let tail_mean = 2.0 - 81.0 * ratio.powi(81) / (1.0 - ratio.powi(81));
        assert!((mean_phonon(&sol.state) - tail_mean).abs() < 1e-10);
    }

    #[test]
    fn fock_state_statistics() {
        let mut s = ReducedState::zeros(5);
        *s.get_mut(0, 3) = C64::new(1.0, 0.0);
        assert_eq!(mean_phonon(&s), 3.0);
        let mut s = ReducedState::zeros(5);
        *s.get_mut(0, 2) = C64::new(1.0, 0.0);
        assert_eq!(g2(&s).unwrap(), 0.5);
        let mut s = ReducedState::zeros(5);
        *s.get_mut(0, 0) = C64::new(1.0, 0.0);
        assert!(matches!(g2(&s), Err(Error::UndefinedStatistics(_))));
    }

    #[test]
    fn thermal_statistics_with_tail() {
        let n_max = 200;
        let p = thermal_distribution(20.0, n_max);
        let s = ReducedState::product(&p, 1);
        // geometric tail: mean of a geometric law truncated at n_max
        let r: f64 = 20.0 / 21.0;
        let rn = r.powi(n_max as i32 + 1);
        let mean = r / (1.0 - r) - (n_max as f64 + 1.0) * rn / (1.0 - rn);
        assert!((mean_phonon(&s) - mean).abs() < 1e-9 * mean);
        assert!(mean_phonon(&s) < 20.0);
        let big = ReducedState::product(&thermal_distribution(20.0, 1200), 1);
        assert!((mean_phonon(&big) - 20.0).abs() < 1e-9);
        assert!((g2(&big).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn undriven_qubits_relax_to_ground() {
        let m = small_model(0.0, 0.0, 0.5);
        let sol = solve_fixed(&m, 12).unwrap();
        let mg = sol.observables.marginals;
        assert!((mg.rho11 - 0.5).abs() < 1e-10 && (mg.rho44 - 0.5).abs() < 1e-10);
        assert!(mg.rho22.abs() < 1e-10 && mg.rho33.abs() < 1e-10);
        assert!((mg.coh_plus.re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn steady_state_reality_and_residual() {
        let m = small_model(3.873, 2.0, 0.5);
        let sol = solve_fixed(&m, 14).unwrap();
        assert!(sol.state.reality_defect() < 1e-8, "{}", sol.state.reality_defect());
        assert!((sol.state.trace().re - 1.0).abs() < 1e-12);
        let mg = sol.observables.marginals;
        assert!((mg.populations().iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn auto_truncation_converges() {
        let m = small_model(3.873, 2.0, 2.0);
        let sol = solve_auto(&m, 2000).unwrap();
        assert!(sol.truncation_change.unwrap() < CONVERGENCE_TOLERANCE);
        assert!(thermal_tail(2.0, sol.n_max()) < TAIL_TOLERANCE);
    }

    #[test]
    fn dimension_cap_is_enforced() {
        let m = small_model(1.0, 2.0, 0.1);
        let trunc = FockTruncation::fixed(100).unwrap();
        assert!(matches!(build_generator(&m, trunc, 1000), Err(Error::DimensionCap { .. })));
    }

    #[test]
    fn evolution_conserves_trace_and_reaches_steady_state() {
        let m = small_model(3.873, 2.0, 0.3);
        let trunc = FockTruncation::fixed(40).unwrap();
        let gen = build_generator(&m, trunc, usize::MAX).unwrap();
        let (ss, _) = steady_state(&gen).unwrap();
        let tol = 1e-8;
        let x0 = ReducedState::thermal_ground(&m, 40);
        let traj = evolve_trajectory(&gen, &x0, &[5.0, 50.0], tol).unwrap();
        for s in &traj {
            assert!((s.trace().re - 1.0).abs() < 10.0 * tol, "trace {}", s.trace());
        }
        let fixed = evolve(&gen, &ss, 100.0, tol).unwrap();
        let diff = fixed.values.iter().zip(&ss.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-9, "{diff}");
    }

    #[test]
    fn uncoupled_mode_thermalizes_from_vacuum() {
        let m = small_model(2.0, 0.0, 0.4);
        let n_max = min_n_max_for_tail(0.4, 1e-13);
        let gen = build_generator(&m, FockTruncation::fixed(n_max).unwrap(), usize::MAX).unwrap();
        let x0 = ReducedState::vacuum_ground(&m, n_max);
        let k = m.params.kappa;
        let times = [100.0, 700.0, 2000.0];
        let traj = evolve_trajectory(&gen, &x0, &times, 1e-9).unwrap();
        for (t, s) in times.iter().zip(&traj) {
            let exact = 0.4 * (1.0 - (-k * t).exp());
            assert!((mean_phonon(s) - exact).abs() < 1e-7, "t={t}: {} vs {exact}", mean_phonon(s));
        }
    }
}
