//! Three-way comparison at small occupation: reduced equations, dressed
//! Liouvillian and bare Liouvillian.

use serde::Serialize;

use crate::config::SweepConfig;
use crate::error::{Error, Result};
use crate::model::{Model, SystemParams};
use crate::oracle::{self, OracleObservables};
use crate::pipeline::NmaxSetting;
use crate::reduced::{self, SteadyObservables};

/// Occupation and truncation limits for the full-density-matrix references.
pub const MAX_NBAR: f64 = 0.5;
pub const MAX_N_MAX: usize = 12;

/// Bare-vs-dressed deviation above which the point is flagged as outside
/// the secular regime.
pub const REGIME_THRESHOLD: f64 = 0.1;

/// Frame-invariant observables of one solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observables {
    pub mean_n: f64,
    pub g2: Option<f64>,
    pub populations: [f64; 4],
}

impl From<&SteadyObservables> for Observables {
    fn from(o: &SteadyObservables) -> Self {
        Observables { mean_n: o.mean_n, g2: o.g2, populations: o.marginals.populations() }
    }
}

impl From<&OracleObservables> for Observables {
    fn from(o: &OracleObservables) -> Self {
        Observables { mean_n: o.mean_n, g2: o.g2, populations: o.marginals.populations() }
    }
}

/// Relative deviations between two solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Deviation {
    pub mean_n: f64,
    pub g2: f64,
    pub populations: f64,
    pub max: f64,
}

impl Deviation {
    pub fn between(a: &Observables, b: &Observables) -> Self {
        let mean_n = oracle::relative_deviation(a.mean_n, b.mean_n, 1e-12);
        let g2 = match (a.g2, b.g2) {
            (Some(x), Some(y)) => oracle::relative_deviation(x, y, 1e-12),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        };
        let populations = (0..4)
            .map(|k| oracle::relative_deviation(a.populations[k], b.populations[k], 1e-12))
            .fold(0.0, f64::max);
        Deviation { mean_n, g2, populations, max: mean_n.max(g2).max(populations) }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationPoint {
    pub sweep_value: f64,
    pub params: SystemParams,
    pub delta: f64,
    pub g_eff: f64,
    pub n_max: usize,
    pub reduced: Option<Observables>,
    pub dressed: Observables,
    pub bare: Observables,
    /// Reduced vs dressed; `None` when the reduced solve failed.
    pub reduced_vs_dressed: Option<Deviation>,
    pub bare_vs_dressed: Deviation,
    /// `max |P_red - P_proj| / max |P_proj|` over all fourteen families.
    pub family_deviation: Option<f64>,
    /// Smallest eigenvalue of the dressed-reference steady state.
    pub dressed_min_eigenvalue: f64,
    /// Occupation of the last retained Fock level in the dressed reference.
    pub edge_occupation: f64,
    pub regime_breakdown: bool,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub threshold: f64,
    pub points: Vec<ValidationPoint>,
    pub max_reduced_vs_dressed: f64,
    pub max_bare_vs_dressed: f64,
    pub passed: bool,
}

impl ValidationReport {
    /// `0` when every reduced-vs-dressed deviation is within threshold, else `3`.
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            3
        }
    }
}

/// Truncation used for validation runs.
pub fn validation_n_max(cfg: &SweepConfig) -> usize {
    match cfg.n_max {
        NmaxSetting::Fixed(n) => n,
        NmaxSetting::Auto { .. } => cfg.oracle_n_max,
    }
}

pub fn check_limits(cfg: &SweepConfig) -> Result<()> {
    let n = validation_n_max(cfg);
    if n > MAX_N_MAX {
        return Err(Error::DimensionCap { dim: 4 * (n + 1), cap: 4 * (MAX_N_MAX + 1) });
    }
    for v in cfg.values() {
        let nbar = cfg.params_at(v).nbar;
        if nbar > MAX_NBAR {
            return Err(Error::InvalidParameter {
                name: "nbar",
                reason: format!("validation needs nbar <= {MAX_NBAR} (got {nbar}); lower nbar or sweep the reduced solver alone"),
            });
        }
    }
    Ok(())
}

pub fn validate_point(params: SystemParams, sweep_value: f64, n_max: usize) -> Result<ValidationPoint> {
    let model = Model::new(params)?;
    let dressed_op = oracle::build_dressed_liouvillian(&model, n_max)?;
    let (rho_d, _) = oracle::steady_state_dm(&dressed_op)?;
    let od = oracle::observables(&rho_d, &model.basis)?;
    let (rho_b, _) = oracle::steady_state_dm(&oracle::build_bare_liouvillian(&model, n_max)?)?;
    let ob = oracle::observables(&rho_b, &model.basis)?;
    let dressed = Observables::from(&od);
    let bare = Observables::from(&ob);
    let projected = rho_d.project_to_reduced()?;
    let edge = projected.get(0, n_max).re;

    let mut status = String::from("ok");
    let (reduced, reduced_vs_dressed, family_deviation) = match reduced::solve_fixed(&model, n_max) {
        Ok(sol) => {
            let r = Observables::from(&sol.observables);
            let scale = projected.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let diff = sol.state.values.iter().zip(&projected.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            (Some(r), Some(Deviation::between(&r, &dressed)), Some(diff / scale))
        }
        Err(e) => {
            status = format!("reduced solve failed: {e}");
            (None, None, None)
        }
    };
    let bare_vs_dressed = Deviation::between(&bare, &dressed);
    Ok(ValidationPoint {
        sweep_value,
        params,
        delta: model.basis.delta,
        g_eff: model.basis.g_eff,
        n_max,
        reduced,
        dressed,
        bare,
        reduced_vs_dressed,
        bare_vs_dressed,
        family_deviation,
        dressed_min_eigenvalue: od.min_eigenvalue,
        edge_occupation: edge,
        regime_breakdown: bare_vs_dressed.max > REGIME_THRESHOLD,
        status,
    })
}

pub fn run_validation(cfg: &SweepConfig) -> Result<ValidationReport> {
    cfg.validate()?;
    check_limits(cfg)?;
    let n_max = validation_n_max(cfg);
    let points = cfg
        .values()
        .into_iter()
        .map(|v| validate_point(cfg.params_at(v), v, n_max))
        .collect::<Result<Vec<_>>>()?;
    let max_reduced_vs_dressed = points
        .iter()
        .map(|p| p.reduced_vs_dressed.map_or(f64::INFINITY, |d| d.max))
        .fold(0.0, f64::max);
    let max_bare_vs_dressed = points.iter().map(|p| p.bare_vs_dressed.max).fold(0.0, f64::max);
    Ok(ValidationReport {
        threshold: cfg.validation_threshold,
        passed: max_reduced_vs_dressed <= cfg.validation_threshold,
        points,
        max_reduced_vs_dressed,
        max_bare_vs_dressed,
    })
}
