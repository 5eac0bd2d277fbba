//! Physical parameters, the dressed two-qubit basis and the decay-rate table.
//!
//! Everything is expressed in units of the single-qubit decay rate `gamma`.
//! The model lives in the frame rotating at the laser frequency, which is
//! resonant with the bare qubit transition, so no laser or qubit frequency
//! appears explicitly.
//!
//! Bare two-qubit states are ordered `{|22>, |21>, |12>, |11>}` where the
//! first label belongs to qubit 1 and `|2>` is the excited level.

use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};

/// Physical inputs of the driven qubit pair and the boson mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Single-qubit decay rate; the frequency unit.
    pub gamma: f64,
    /// Collective radiative coupling, in `[0, 1]`.
    pub chi_r: f64,
    /// Dipole-dipole frequency shift.
    pub omega_dd: f64,
    /// Rabi frequency of the drive on each qubit.
    pub rabi: f64,
    /// Longitudinal qubit-boson coupling.
    pub g: f64,
    /// Boson mode frequency.
    pub omega: f64,
    /// Boson damping rate.
    pub kappa: f64,
    /// Mean thermal occupation of the boson bath.
    pub nbar: f64,
    /// Dressed-frame detuning; `None` means `lambda3 - omega`.
    pub delta_override: Option<f64>,
    #[serde(default)]
    pub rate_convention: RateConvention,
}

/// Which value of the `rho11 -> rho14 + rho41` feeding rate `gamma11_1` to use.
///
/// `Printed` is the closed-form table entry. `Consistent` is twice that,
/// the value obtained by projecting the dressed master equation; with it the
/// reduced equations are an exact Fock-diagonal projection of that equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateConvention {
    #[default]
    Consistent,
    Printed,
}

impl SystemParams {
    /// Parameter set of the cooling figures: `g = 2`, `omega_dd = 28`,
    /// `omega = 30`, `chi_r = 0.98`, `nbar = 20`, `kappa = 1e-3`.
    pub fn caption(rabi: f64) -> Self {
        SystemParams {
            gamma: 1.0,
            chi_r: 0.98,
            omega_dd: 28.0,
            rabi,
            g: 2.0,
            omega: 30.0,
            kappa: 1e-3,
            nbar: 20.0,
            delta_override: None,
            rate_convention: RateConvention::Consistent,
        }
    }

    pub fn with_g(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    pub fn with_nbar(mut self, nbar: f64) -> Self {
        self.nbar = nbar;
        self
    }

    pub fn with_rabi(mut self, rabi: f64) -> Self {
        self.rabi = rabi;
        self
    }

    pub fn with_rate_convention(mut self, rc: RateConvention) -> Self {
        self.rate_convention = rc;
        self
    }

    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, name: &'static str, reason: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter { name, reason: reason.to_owned() })
            }
        }
        let fields = [
            ("gamma", self.gamma),
            ("chi_r", self.chi_r),
            ("omega_dd", self.omega_dd),
            ("rabi", self.rabi),
            ("g", self.g),
            ("omega", self.omega),
            ("kappa", self.kappa),
            ("nbar", self.nbar),
        ];
        for (name, v) in fields {
            check(v.is_finite(), name, "must be finite")?;
        }
        if let Some(d) = self.delta_override {
            check(d.is_finite(), "delta_override", "must be finite")?;
        }
        check(self.gamma > 0.0, "gamma", "must be > 0")?;
        check((0.0..=1.0).contains(&self.chi_r), "chi_r", "must lie in [0, 1]")?;
        check(self.omega_dd > 0.0, "omega_dd", "must be > 0")?;
        check(self.rabi >= 0.0, "rabi", "must be >= 0")?;
        check(self.omega > 0.0, "omega", "must be > 0")?;
        check(self.kappa > 0.0, "kappa", "must be > 0")?;
        check(self.nbar >= 0.0, "nbar", "must be >= 0")?;
        Ok(())
    }
}

/// Real 4x4 matrix of the coherent qubit part (dipole-dipole exchange plus
/// drive) in the bare basis.
pub fn qubit_hamiltonian(params: &SystemParams) -> [[f64; 4]; 4] {
    let (w, d) = (params.rabi, params.omega_dd);
    [
        [0.0, w, w, 0.0],
        [w, 0.0, d, w],
        [w, d, 0.0, w],
        [0.0, w, w, 0.0],
    ]
}

/// Eigen-decomposition of the driven, dipole-coupled qubit pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DressedBasis {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub a_bar: f64,
    pub b_bar: f64,
    pub c_bar: f64,
    pub d_bar: f64,
    /// Row `j` holds `|Psi_{j+1}>` in bare coordinates.
    pub transform: [[f64; 4]; 4],
    /// Effective coupling `sqrt(2) g c_bar`.
    pub g_eff: f64,
    /// Dressed-frame boson detuning.
    pub delta: f64,
}

impl DressedBasis {
    pub fn new(params: &SystemParams) -> Result<Self> {
        params.validate()?;
        let (od, w) = (params.omega_dd, params.rabi);
        let root = (od * od + 16.0 * w * w).sqrt();
        let lambda3 = (od + root) / 2.0;
        let lambda4 = (od - root) / 2.0;

        // With t = 4 W / (od + root) the printed coefficient formulas reduce to
        // a = d = 1 / sqrt(2 (1 + t^2)), b = -c = t / sqrt(2 (1 + t^2)). This
        // form stays finite at W = 0 where the printed ratios are 0/0.
        let t = 4.0 * w / (od + root);
        let norm = (2.0 * (1.0 + t * t)).sqrt();
        let a_bar = 1.0 / norm;
        let b_bar = t / norm;
        let c_bar = -t / norm;
        let d_bar = 1.0 / norm;

        let h = 1.0 / SQRT_2;
        let transform = [
            [h, 0.0, 0.0, -h],
            [0.0, h, -h, 0.0],
            [-c_bar, d_bar, d_bar, -c_bar],
            [-a_bar, b_bar, b_bar, -a_bar],
        ];
        let delta = params.delta_override.unwrap_or(lambda3 - params.omega);
        Ok(DressedBasis {
            lambda1: 0.0,
            lambda2: -od,
            lambda3,
            lambda4,
            a_bar,
            b_bar,
            c_bar,
            d_bar,
            transform,
            g_eff: SQRT_2 * params.g * c_bar,
            delta,
        })
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        [self.lambda1, self.lambda2, self.lambda3, self.lambda4]
    }

    /// `sqrt(omega_dd^2 + 16 rabi^2)`, the splitting `lambda3 - lambda4`.
    pub fn splitting(&self) -> f64 {
        self.lambda3 - self.lambda4
    }

    /// Largest deviation of `transform * transform^T` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = (0..4).map(|k| self.transform[i][k] * self.transform[j][k]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// Largest `|H psi_j - lambda_j psi_j|` over the four dressed states.
    pub fn eigen_residual(&self, params: &SystemParams) -> f64 {
        let h = qubit_hamiltonian(params);
        let lambdas = self.eigenvalues();
        let mut worst: f64 = 0.0;
        for (psi, lambda) in self.transform.iter().zip(lambdas) {
            for row in 0..4 {
                let hpsi: f64 = (0..4).map(|k| h[row][k] * psi[k]).sum();
                worst = worst.max((hpsi - lambda * psi[row]).abs());
            }
        }
        worst
    }
}

/// Dressed-state decay coefficients entering the reduced equations of motion.
///
/// Field `gamma{i}_{j}` multiplies family `j` in the equation for family `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub gamma1_0: f64,
    pub gamma1_1: f64,
    pub gamma1_2: f64,
    pub gamma1_3: f64,
    pub gamma1_11: f64,
    pub gamma2_0: f64,
    pub gamma2_1: f64,
    pub gamma2_2: f64,
    pub gamma2_3: f64,
    pub gamma2_11: f64,
    pub gamma3_0: f64,
    pub gamma3_1: f64,
    pub gamma3_2: f64,
    pub gamma3_3: f64,
    pub gamma3_11: f64,
    pub gamma4_4: f64,
    pub gamma4_8: f64,
    pub gamma5_5: f64,
    pub gamma5_9: f64,
    pub gamma6_6: f64,
    pub gamma6_12: f64,
    pub gamma7_7: f64,
    pub gamma7_13: f64,
    pub gamma8_4: f64,
    pub gamma8_8: f64,
    pub gamma9_5: f64,
    pub gamma9_9: f64,
    pub gamma10_10: f64,
    pub gamma11_0: f64,
    pub gamma11_1: f64,
    pub gamma11_2: f64,
    pub gamma11_3: f64,
    pub gamma11_11: f64,
    pub gamma12_6: f64,
    pub gamma12_12: f64,
    pub gamma13_7: f64,
    pub gamma13_13: f64,
}

impl RateTable {
    pub fn new(basis: &DressedBasis, params: &SystemParams) -> Result<Self> {
        params.validate()?;
        let g = params.gamma;
        let p = 1.0 + params.chi_r;
        let m = 1.0 - params.chi_r;
        let (a, b, c, d) = (basis.a_bar, basis.b_bar, basis.c_bar, basis.d_bar);
        let s = a * d + b * c;
        let s2 = s * s;
        let r2 = SQRT_2;
        // recurring pieces
        let as_r = a * s / r2;
        let d_m = d / (2.0 * r2) * m;
        let dc2 = r2 * d * c * c;

        let gamma4_4 =
            g * ((4.0 * (a * b).powi(2) + s2 + a * a + c * c / 2.0) * p + (0.5 + b * b) * m / 2.0);
        let gamma4_8 = g * ((r2 * c * (2.0 * a * b + c * d) + as_r) * p + d_m);
        let gamma8_4 = g * ((r2 * c * (c * d - 2.0 * a * b) + as_r) * p + d_m);
        let gamma8_8 = g
            * ((4.0 * (a * b - c * d).powi(2) + 2.0 * s2 + a * a / 2.0 + c * c / 2.0) * p
                + (d * d + b * b) * m / 2.0);

        let gamma5_5 = gamma4_4;
        let gamma5_9 = gamma4_8;
        let gamma6_6 = gamma5_5;
        let gamma6_12 = gamma5_9;
        let gamma9_5 = gamma8_4;
        let gamma9_9 = gamma8_8;

        Ok(RateTable {
            gamma1_0: g * c * c * p,
            gamma1_1: g * ((a * a + 2.0 * c * c) * p + m / 2.0),
            gamma1_2: g * (c * c * p - m / 2.0),
            gamma1_3: g * p * (c * c - a * a),
            gamma1_11: g * (p * (as_r + dc2) + d_m),
            gamma2_0: g * d * d * m,
            gamma2_1: g * m * (0.5 - d * d),
            gamma2_2: g * m * (0.5 + b * b + 2.0 * d * d),
            gamma2_3: g * m * (b * b - d * d),
            gamma2_11: g * d * m / r2,
            gamma3_0: 2.0 * g * s2 * p,
            gamma3_1: g * (a * a - 2.0 * s2) * p,
            gamma3_2: g * (2.0 * s2 * p - b * b * m),
            gamma3_3: 2.0 * g * ((2.0 * s2 + a * a / 2.0) * p + b * b * m / 2.0),
            gamma3_11: r2 * a * g * s * p,
            gamma4_4,
            gamma4_8,
            gamma5_5,
            gamma5_9,
            gamma6_6,
            gamma6_12,
            gamma7_7: gamma6_6,
            gamma7_13: gamma6_12,
            gamma8_4,
            gamma8_8,
            gamma9_5,
            gamma9_9,
            gamma10_10: g
                * ((4.0 * (c * d).powi(2) + s2 + a * a / 2.0) * p + (0.5 + d * d) * m / 2.0),
            gamma11_0: 2.0 * g * ((3.0 * dc2 + as_r) * p + d_m),
            gamma11_1: 2.0 * dc2 * g * p,
            gamma11_2: 2.0 * g * ((3.0 * dc2 + as_r) * p - d_m),
            gamma11_3: 2.0 * g * ((3.0 * dc2 - as_r) * p + d_m),
            gamma11_11: g
                * ((4.0 * (c * d).powi(2) + s2 + a * a / 2.0 + 2.0 * c * c) * p
                    + (0.5 + d * d) * m / 2.0),
            gamma12_6: gamma8_4,
            gamma12_12: gamma8_8,
            gamma13_7: gamma8_4,
            gamma13_13: gamma8_8,
        })
    }

    /// The diagonal loss rates `gamma{i}_{i}`, i = 1..13.
    pub fn diagonal(&self) -> [f64; 13] {
        [
            self.gamma1_1,
            self.gamma2_2,
            self.gamma3_3,
            self.gamma4_4,
            self.gamma5_5,
            self.gamma6_6,
            self.gamma7_7,
            self.gamma8_8,
            self.gamma9_9,
            self.gamma10_10,
            self.gamma11_11,
            self.gamma12_12,
            self.gamma13_13,
        ]
    }

    /// Whether every aliased coefficient is a bitwise copy of its source.
    pub fn aliases_hold(&self) -> bool {
        let same = |x: f64, y: f64| x.to_bits() == y.to_bits();
        same(self.gamma5_5, self.gamma4_4)
            && same(self.gamma5_9, self.gamma4_8)
            && same(self.gamma6_6, self.gamma5_5)
            && same(self.gamma6_12, self.gamma5_9)
            && same(self.gamma7_7, self.gamma6_6)
            && same(self.gamma7_13, self.gamma6_12)
            && same(self.gamma9_5, self.gamma8_4)
            && same(self.gamma9_9, self.gamma8_8)
            && same(self.gamma12_6, self.gamma8_4)
            && same(self.gamma13_7, self.gamma8_4)
            && same(self.gamma12_12, self.gamma8_8)
            && same(self.gamma13_13, self.gamma8_8)
    }
}

/// Dressed basis and rate table together, built once per parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub params: SystemParams,
    pub basis: DressedBasis,
    pub rates: RateTable,
}

impl Model {
    pub fn new(params: SystemParams) -> Result<Self> {
        let basis = DressedBasis::new(&params)?;
        let mut rates = RateTable::new(&basis, &params)?;
        if params.rate_convention == RateConvention::Consistent {
            rates.gamma11_1 *= 2.0;
        }
        Ok(Model { params, basis, rates })
    }
}
