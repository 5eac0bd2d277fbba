//! Parameter sweeps and their tabular output.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{SweepConfig, SweepVariable};
use crate::error::{Error, Result};
use crate::model::{Model, SystemParams};
use crate::oracle;
use crate::pipeline::{self, PointResult};

pub const CSV_HEADER: &str = "sweep_value,mean_n,mean_n_over_nbar,g2,concurrence,pi_s,rho11,rho22,rho33,rho44,coh_plus,coh_minus_imag,n_max,residual,status";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Series {
    /// Parameters as configured.
    Coupled,
    /// Same point with `g = 0`.
    Uncoupled,
}

/// Dressed-Liouvillian reference values at a sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleCheck {
    pub mean_n: f64,
    pub g2: Option<f64>,
    pub populations: [f64; 4],
    pub max_relative_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub series: Series,
    pub sweep_value: f64,
    pub mean_n: f64,
    pub mean_n_over_nbar: f64,
    pub g2: f64,
    pub concurrence: f64,
    pub pi_s: f64,
    pub rho11: f64,
    pub rho22: f64,
    pub rho33: f64,
    pub rho44: f64,
    pub coh_plus: f64,
    pub coh_minus_imag: f64,
    pub n_max: usize,
    pub residual: f64,
    pub wall_time: f64,
    /// `ok`, a `;`-separated list of warnings, or `error: ...`.
    pub status: String,
    pub oracle: Option<OracleCheck>,
}

impl SweepRow {
    fn failed(series: Series, sweep_value: f64, e: &Error, wall_time: f64) -> Self {
        SweepRow {
            series,
            sweep_value,
            mean_n: f64::NAN,
            mean_n_over_nbar: f64::NAN,
            g2: f64::NAN,
            concurrence: f64::NAN,
            pi_s: f64::NAN,
            rho11: f64::NAN,
            rho22: f64::NAN,
            rho33: f64::NAN,
            rho44: f64::NAN,
            coh_plus: f64::NAN,
            coh_minus_imag: f64::NAN,
            n_max: 0,
            residual: f64::NAN,
            wall_time,
            status: format!("error: {e}"),
            oracle: None,
        }
    }

    fn from_point(series: Series, sweep_value: f64, r: &PointResult, wall_time: f64) -> Self {
        let o = &r.solution.observables;
        let mg = &o.marginals;
        let mut warnings = Vec::new();
        if o.g2.is_none() {
            warnings.push("g2_undefined".to_owned());
        }
        if r.bare.clamped {
            warnings.push(format!("psd_clamped({:.1e})", r.bare.psd_defect));
        }
        let nbar = r.model.params.nbar;
        SweepRow {
            series,
            sweep_value,
            mean_n: o.mean_n,
            mean_n_over_nbar: if nbar > 0.0 { o.mean_n / nbar } else { f64::NAN },
            g2: o.g2.unwrap_or(f64::NAN),
            concurrence: r.concurrence.value,
            pi_s: r.pi_s,
            rho11: mg.rho11,
            rho22: mg.rho22,
            rho33: mg.rho33,
            rho44: mg.rho44,
            coh_plus: mg.coh_plus.re,
            coh_minus_imag: mg.coh_minus.im,
            n_max: r.solution.n_max(),
            residual: r.solution.report.residual,
            wall_time,
            status: if warnings.is_empty() { "ok".into() } else { warnings.join(";") },
            oracle: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        !self.status.starts_with("error")
    }

    pub fn csv_line(&self) -> String {
        let f = |v: f64| format!("{v:.16e}");
        let mut status = self.status.replace(',', ";");
        if self.series == Series::Uncoupled {
            status.push_str(";g0");
        }
        [
            f(self.sweep_value),
            f(self.mean_n),
            f(self.mean_n_over_nbar),
            f(self.g2),
            f(self.concurrence),
            f(self.pi_s),
            f(self.rho11),
            f(self.rho22),
            f(self.rho33),
            f(self.rho44),
            f(self.coh_plus),
            f(self.coh_minus_imag),
            self.n_max.to_string(),
            f(self.residual),
            status,
        ]
        .join(",")
    }
}

fn oracle_check(params: SystemParams, row: &SweepRow, n_max: usize) -> Result<OracleCheck> {
    let model = Model::new(params)?;
    let op = oracle::build_dressed_liouvillian(&model, n_max)?;
    let (rho, _) = oracle::steady_state_dm(&op)?;
    let obs = oracle::observables(&rho, &model.basis)?;
    let pops = obs.marginals.populations();
    let mut dev = oracle::relative_deviation(row.mean_n, obs.mean_n, 1e-12);
    for (a, b) in [row.rho11, row.rho22, row.rho33, row.rho44].iter().zip(pops) {
        dev = dev.max(oracle::relative_deviation(*a, b, 1e-12));
    }
    if let Some(g2) = obs.g2 {
        dev = dev.max(oracle::relative_deviation(row.g2, g2, 1e-12));
    }
    Ok(OracleCheck { mean_n: obs.mean_n, g2: obs.g2, populations: pops, max_relative_deviation: dev })
}

/// One row of a sweep; failures end up in the row status.
pub fn run_one(cfg: &SweepConfig, series: Series, value: f64) -> SweepRow {
    let mut params = cfg.params_at(value);
    if series == Series::Uncoupled {
        params.g = 0.0;
    }
    let t0 = Instant::now();
    let mut row = match pipeline::evaluate_point(params, cfg.n_max) {
        Ok(r) => SweepRow::from_point(series, value, &r, t0.elapsed().as_secs_f64()),
        Err(e) => SweepRow::failed(series, value, &e, t0.elapsed().as_secs_f64()),
    };
    if cfg.run_oracle && row.is_ok() {
        match oracle_check(params, &row, cfg.oracle_n_max) {
            Ok(check) => row.oracle = Some(check),
            Err(e) => {
                row.status = if row.status == "ok" { String::new() } else { row.status + ";" };
                row.status += &format!("oracle_failed({e})");
            }
        }
    }
    row
}

/// Runs every point of `cfg` on `jobs` worker threads. Rows come back in
/// sweep order, coupled before uncoupled when paired.
pub fn run_sweep(cfg: &SweepConfig, jobs: usize) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut tasks = Vec::new();
    for v in cfg.values() {
        tasks.push((Series::Coupled, v));
        if cfg.with_and_without_g {
            tasks.push((Series::Uncoupled, v));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    Ok(pool.install(|| tasks.par_iter().map(|&(s, v)| run_one(cfg, s, v)).collect()))
}

pub fn write_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_line())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct JsonDoc<'a> {
    sweep_variable: SweepVariable,
    params: &'a SystemParams,
    config: &'a SweepConfig,
    rows: &'a [SweepRow],
}

pub fn write_json<W: Write>(w: W, cfg: &SweepConfig, rows: &[SweepRow]) -> std::io::Result<()> {
    let doc = JsonDoc { sweep_variable: cfg.sweep_variable, params: &cfg.base, config: cfg, rows };
    serde_json::to_writer_pretty(w, &doc).map_err(std::io::Error::other)
}
