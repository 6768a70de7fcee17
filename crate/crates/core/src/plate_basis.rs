//! Clamped beam eigenpairs on the zero-mean subspace and spectral fractional norms.

use nalgebra::{DMatrix, DVector};

use crate::discretization::{to_dense, DiscreteOperators};
use crate::error::{invalid, FsiError, Result};
use crate::linalg::{fix_sign, sorted_symmetric_eigen};

#[derive(Debug, Clone, PartialEq)]
pub struct PlateMode {
    pub kappa: f64,
    pub g: DVector<f64>,
    /// ‖P B4 g − κ g‖_Mb relative to the largest eigenvalue of B4.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlateBasis {
    pub modes: Vec<PlateMode>,
    /// Mb-orthogonal projector removing the mean.
    pub projector: DMatrix<f64>,
}

impl PlateBasis {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn kappas(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.modes.iter().map(|m| m.kappa))
    }

    /// Mode vectors as columns.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.projector.nrows();
        let mut out = DMatrix::zeros(n, self.len());
        for (k, m) in self.modes.iter().enumerate() {
            out.set_column(k, &m.g);
        }
        out
    }

    pub fn reconstruct(&self, beta: &DVector<f64>) -> DVector<f64> {
        let mut u = DVector::zeros(self.projector.nrows());
        for (m, b) in self.modes.iter().zip(beta.iter()) {
            u.axpy(*b, &m.g, 1.0);
        }
        u
    }
}

/// Orthonormal (Euclidean) basis of vectors with zero sum, Helmert style.
fn zero_sum_basis(n: usize) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(n, n - 1);
    for k in 1..n {
        let s = 1.0 / ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            z[(i, k - 1)] = s;
        }
        z[(k, k - 1)] = -(k as f64) * s;
    }
    z
}

pub fn solve_plate_eigen(ops: &DiscreteOperators, n: usize) -> Result<PlateBasis> {
    let nb = ops.grid.n_beam();
    let available = nb - 1;
    if n == 0 || n > available {
        return Err(FsiError::TooManyModes {
            kind: "plate",
            requested: n,
            available,
        });
    }
    // Mb = hx I, so Euclidean orthogonality to 1 is the zero-mean constraint.
    let hx = ops.grid.hx;
    let b4 = to_dense(&ops.b4);
    let z = zero_sum_basis(nb);
    let reduced = z.transpose() * &b4 * &z;
    let reduced = 0.5 * (&reduced + reduced.transpose());
    let (vals, vecs) = sorted_symmetric_eigen(reduced, "plate")?;

    let projector = {
        let mut p = DMatrix::identity(nb, nb);
        for r in 0..nb {
            for c in 0..nb {
                p[(r, c)] -= ops.mean[c];
            }
        }
        p
    };
    let scale = vals[vals.len() - 1].abs().max(1.0);
    let mut modes = Vec::with_capacity(n);
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let mut g = &z * vecs.column(k) / hx.sqrt();
        fix_sign(&mut g);
        let kappa = vals[k];
        let r = &projector * (&b4 * &g) - kappa * &g;
        let residual = ops.beam_norm(&r) / scale;
        worst = worst.max(residual);
        modes.push(PlateMode { kappa, g, residual });
    }
    if !(worst <= 1e-10) || modes[0].kappa <= 0.0 {
        return Err(FsiError::EigenNonConvergence {
            kind: "plate",
            residual: worst,
        });
    }
    Ok(PlateBasis { modes, projector })
}

/// Spectral norm (Σ κ_j^{s/2} β_j²)^{1/2} for s in [0, 2].
pub fn fractional_norm(basis: &PlateBasis, beta: &DVector<f64>, s: f64) -> Result<f64> {
    if !(0.0..=2.0).contains(&s) {
        return Err(invalid("s", format!("order {s} outside [0, 2]")));
    }
    if beta.len() != basis.len() {
        return Err(FsiError::SizeMismatch {
            what: "plate coefficients",
            expected: basis.len(),
            got: beta.len(),
        });
    }
    Ok(basis
        .modes
        .iter()
        .zip(beta.iter())
        .map(|(m, b)| m.kappa.powf(0.5 * s) * b * b)
        .sum::<f64>()
        .sqrt())
}

/// Mb coefficients of `u` against the plate modes.
pub fn project_plate(
    ops: &DiscreteOperators,
    basis: &PlateBasis,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    if u.len() != ops.grid.n_beam() {
        return Err(FsiError::SizeMismatch {
            what: "beam field",
            expected: ops.grid.n_beam(),
            got: u.len(),
        });
    }
    Ok(DVector::from_iterator(
        basis.len(),
        basis.modes.iter().map(|m| ops.beam_inner(u, &m.g)),
    ))
}
