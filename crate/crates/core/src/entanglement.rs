//! Two-qubit state in the bare basis, Wootters concurrence and the
//! symmetric Dicke-state population.

use num_complex::Complex64 as C64;
use serde::Serialize;
use std::f64::consts::SQRT_2;

use crate::error::{BasisTag, Error, Result};
use crate::model::{DressedBasis, SystemParams};
use crate::reduced::QubitMarginals;

pub type Mat4 = [[C64; 4]; 4];

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Negative eigenvalues down to this size are clamped without comment.
pub const PSD_SILENT: f64 = 1e-8;
/// Beyond this the reconstruction is rejected.
pub const PSD_REJECT: f64 = 1e-4;

/// Reconstructed two-qubit density matrix on `{|22>, |21>, |12>, |11>}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BareDensityMatrix {
    pub data: Mat4,
    /// Magnitude of the most negative eigenvalue before clamping.
    pub psd_defect: f64,
    /// True when the defect exceeded [`PSD_SILENT`] and was repaired.
    pub clamped: bool,
}

impl BareDensityMatrix {
    pub const BASIS: BasisTag = BasisTag::Bare;

    pub fn trace(&self) -> C64 {
        (0..4).map(|k| self.data[k][k]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Concurrence {
    pub value: f64,
    /// Square roots of the eigenvalues of `Q`, descending.
    pub s: [f64; 4],
}

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn adjoint(m: &Mat4) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = m[j][i].conj();
        }
    }
    out
}

pub fn transpose(m: &Mat4) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = m[j][i];
        }
    }
    out
}

pub fn matmul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn to_faer(m: &Mat4) -> faer::Mat<C64> {
    faer::Mat::from_fn(4, 4, |i, j| m[i][j])
}

/// Bare-basis matrix from traced dressed-state populations and the
/// `rho14 / rho41` coherences, using the closed-form expressions.
///
/// Only the elements that survive the secular approximation enter; the
/// result is exchange-symmetric and Hermitian by construction.
pub fn reconstruct_bare_dm(marginals: &QubitMarginals, basis: &DressedBasis, params: &SystemParams) -> Result<BareDensityMatrix> {
    let [p1, p2, p3, p4] = marginals.populations().map(re);
    let (r14, r41) = (marginals.rho14(), marginals.rho41());
    let (a, c) = (basis.a_bar, basis.c_bar);
    let root = (params.omega_dd * params.omega_dd + 16.0 * params.rabi * params.rabi).sqrt();
    let ratio = params.omega_dd / root;
    let w = params.rabi / root;
    let one = re(1.0);

    let t11 = (one + p1 - p2) / 4.0 - (p3 - p4) * (ratio / 4.0) - (r41 + r14) * (a / SQRT_2);
    let t12 = (p3 - p4) * w - r41 * (c / SQRT_2);
    let t14 = p4 * ((1.0 + ratio) / 4.0) - (r41 - r14) * (a / SQRT_2) + p3 * ((1.0 - ratio) / 4.0) - p1 / 2.0;
    let t22 = (one + p2 - p1) / 4.0 + (p3 - p4) * (ratio / 4.0);
    let t23 = p4 * ((1.0 - ratio) / 4.0) - p2 / 2.0 + p3 * ((1.0 + ratio) / 4.0);
    let t24 = (p3 - p4) * w + r14 * (c / SQRT_2);
    let t44 = (one + p1 - p2) / 4.0 - (p3 - p4) * (ratio / 4.0) + (r41 + r14) * (a / SQRT_2);

    let data = [
        [t11, t12, t12, t14],
        [t12.conj(), t22, t23, t24],
        [t12.conj(), t23, t22, t24],
        [t14.conj(), t24.conj(), t24.conj(), t44],
    ];
    enforce_psd(data)
}

/// `T^T rho_d T`: the bare-basis matrix of a dressed-basis 4x4 block with
/// `rho_d[a][b] = <Psi_a| rho |Psi_b>`.
pub fn dressed_to_bare(block: &Mat4, basis: &DressedBasis) -> Mat4 {
    let t = basis.transform;
    let mut out = [[ZERO; 4]; 4];
    for k in 0..4 {
        for l in 0..4 {
            let mut acc = ZERO;
            for a in 0..4 {
                for b in 0..4 {
                    acc += block[a][b] * (t[a][k] * t[b][l]);
                }
            }
            out[k][l] = acc;
        }
    }
    out
}

/// Measures and repairs small negative eigenvalues.
pub fn enforce_psd(data: Mat4) -> Result<BareDensityMatrix> {
    let eig = to_faer(&data)
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition: {e:?}")))?;
    let vals: Vec<f64> = (0..4).map(|k| eig.S().column_vector()[k].re).collect();
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let defect = (-min).max(0.0);
    if defect > PSD_REJECT {
        return Err(Error::Reconstruction(defect));
    }
    if defect == 0.0 {
        return Ok(BareDensityMatrix { data, psd_defect: 0.0, clamped: false });
    }
    let u = eig.U();
    let kept: Vec<f64> = vals.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = kept.iter().sum();
    let mut out = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| u[(i, k)] * u[(j, k)].conj() * (kept[k] / total)).sum();
        }
    }
    Ok(BareDensityMatrix { data: out, psd_defect: defect, clamped: defect > PSD_SILENT })
}

/// `sigma_y ⊗ sigma_y` on the bare basis.
fn spin_flip() -> Mat4 {
    let mut m = [[ZERO; 4]; 4];
    m[0][3] = re(-1.0);
    m[1][2] = re(1.0);
    m[2][1] = re(1.0);
    m[3][0] = re(-1.0);
    m
}

/// `Q = rho (sy ⊗ sy) rho* (sy ⊗ sy)`.
pub fn q_matrix(rho: &Mat4) -> Mat4 {
    let f = spin_flip();
    let mut conj = *rho;
    conj.iter_mut().flatten().for_each(|v| *v = v.conj());
    matmul(&matmul(rho, &f), &matmul(&conj, &f))
}

/// Wootters concurrence `max(0, s1 - s2 - s3 - s4)`.
pub fn concurrence(rho: &Mat4) -> Result<Concurrence> {
    let ev = to_faer(&q_matrix(rho))
        .eigenvalues()
        .map_err(|e| Error::Numerical(format!("eigenvalues of Q: {e:?}")))?;
    let mut s = [0.0; 4];
    for (k, v) in ev.iter().enumerate() {
        if v.re < -1e-10 {
            return Err(Error::Numerical(format!("Q has eigenvalue {v}; input is not a density matrix")));
        }
        s[k] = v.re.max(0.0).sqrt();
    }
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(Concurrence { value: (s[0] - s[1] - s[2] - s[3]).max(0.0), s })
}

/// Population of `(|21> + |12>) / sqrt(2)`.
pub fn symmetric_population(rho: &Mat4) -> f64 {
    0.5 * (rho[1][1] + rho[2][2] + rho[1][2] + rho[2][1]).re
}
