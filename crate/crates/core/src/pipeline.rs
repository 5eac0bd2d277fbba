//! One parameter point end to end: reduced steady state, bare-basis
//! reconstruction, concurrence and `Pi_s`.

use serde::Serialize;

use crate::entanglement::{self, BareDensityMatrix, Concurrence};
use crate::error::Result;
use crate::model::{Model, SystemParams};
use crate::reduced::{self, GeneratorMatrix, ReducedState, SteadySolution};

/// How `n_max` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NmaxSetting {
    Fixed(usize),
    Auto { cap: usize },
}

impl Default for NmaxSetting {
    fn default() -> Self {
        NmaxSetting::Auto { cap: reduced::DEFAULT_N_MAX_CAP }
    }
}

impl std::str::FromStr for NmaxSetting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(NmaxSetting::default());
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(NmaxSetting::Fixed(n)),
            _ => Err(format!("expected a positive integer or `auto`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub model: Model,
    pub solution: SteadySolution,
    pub bare: BareDensityMatrix,
    pub concurrence: Concurrence,
    pub pi_s: f64,
}

pub fn solve_reduced(model: &Model, n_max: NmaxSetting) -> Result<SteadySolution> {
    match n_max {
        NmaxSetting::Fixed(n) => reduced::solve_fixed(model, n),
        NmaxSetting::Auto { cap } => reduced::solve_auto(model, cap),
    }
}

pub fn evaluate_point(params: SystemParams, n_max: NmaxSetting) -> Result<PointResult> {
    let model = Model::new(params)?;
    let solution = solve_reduced(&model, n_max)?;
    let bare = entanglement::reconstruct_bare_dm(&solution.observables.marginals, &model.basis, &model.params)?;
    let concurrence = entanglement::concurrence(&bare.data)?;
    let pi_s = entanglement::symmetric_population(&bare.data);
    Ok(PointResult { model, solution, bare, concurrence, pi_s })
}

/// Observables along a relaxation trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransientSample {
    pub t: f64,
    pub mean_n: f64,
    pub concurrence: f64,
    pub pi_s: f64,
    pub trace: f64,
}

/// Relaxation from the boson thermal state times the lowest dressed level.
pub fn transient(model: &Model, n_max: usize, times: &[f64], rel_tol: f64) -> Result<Vec<TransientSample>> {
    let gen: GeneratorMatrix = reduced::build_generator(model, reduced::FockTruncation::fixed(n_max)?, usize::MAX)?;
    let x0 = ReducedState::thermal_ground(model, n_max);
    let states = reduced::evolve_trajectory(&gen, &x0, times, rel_tol)?;
    times
        .iter()
        .zip(states)
        .map(|(&t, s)| {
            let mg = reduced::qubit_marginals(&s)?;
            let bare = entanglement::reconstruct_bare_dm(&mg, &model.basis, &model.params)?;
            Ok(TransientSample {
                t,
                mean_n: reduced::mean_phonon(&s),
                concurrence: entanglement::concurrence(&bare.data)?.value,
                pi_s: entanglement::symmetric_population(&bare.data),
                trace: s.trace().re,
            })
        })
        .collect()
}
