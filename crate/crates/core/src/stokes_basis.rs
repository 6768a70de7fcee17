//! Dirichlet Stokes eigenpairs and the harmonic lifting of lid data.
//!
//! Divergence-free fields vanishing on the whole boundary are exactly the
//! discrete curls of streamfunctions supported on interior nodes, so the
//! constrained eigenproblem is solved in that basis as a symmetric-definite
//! generalized problem.

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;

use crate::discretization::{spmv, to_dense, DiscreteOperators};
use crate::error::{FsiError, Result};
use crate::linalg::{csr_dense, csr_scale_rows, csr_select_columns, fix_sign, sorted_symmetric_eigen};

#[derive(Debug, Clone, PartialEq)]
pub struct StokesMode {
    pub lambda: f64,
    pub e: DVector<f64>,
    pub p: DVector<f64>,
    /// Mv-weighted residual of `-Lv e + Gp p - lambda e` on interior faces.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StokesBasis {
    pub modes: Vec<StokesMode>,
}

impl StokesBasis {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn lambdas(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.modes.iter().map(|m| m.lambda))
    }

    /// Mode vectors as columns.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.modes.first().map_or(0, |m| m.e.len());
        let mut out = DMatrix::zeros(n, self.len());
        for (k, m) in self.modes.iter().enumerate() {
            out.set_column(k, &m.e);
        }
        out
    }

    pub fn reconstruct(&self, alpha: &DVector<f64>) -> DVector<f64> {
        let n = self.modes.first().map_or(0, |m| m.e.len());
        let mut v = DVector::zeros(n);
        for (m, a) in self.modes.iter().zip(alpha.iter()) {
            v.axpy(*a, &m.e, 1.0);
        }
        v
    }
}

/// Dimension of the discrete divergence-free space with homogeneous walls.
pub fn divergence_free_dimension(ops: &DiscreteOperators) -> usize {
    let g = &ops.grid;
    (g.nx - 1) * (g.nz - 1)
}

/// Curl of interior-node streamfunctions, one column per node.
fn interior_curl(ops: &DiscreteOperators) -> CsrMatrix<f64> {
    let g = &ops.grid;
    let cols: Vec<usize> = g
        .interior_nodes()
        .iter()
        .map(|&(i, j)| g.node_index(i, j))
        .collect();
    csr_select_columns(&ops.curl, &cols)
}

pub fn solve_stokes_eigen(ops: &DiscreteOperators, m: usize) -> Result<StokesBasis> {
    let available = divergence_free_dimension(ops);
    if m == 0 || m > available {
        return Err(FsiError::TooManyModes {
            kind: "stokes",
            requested: m,
            available,
        });
    }
    let g = &ops.grid;
    let z = interior_curl(ops);
    let zt = z.transpose();
    let a = to_dense(&(&zt * &(&ops.stiffness * &z)));
    let b = to_dense(&(&zt * &csr_scale_rows(&z, &ops.mv)));

    let chol = Cholesky::new(b).ok_or_else(|| {
        FsiError::SingularSaddlePoint("streamfunction Gram matrix is singular".into())
    })?;
    let l = chol.l();
    // C = L^{-1} A L^{-T}
    let la = l
        .solve_lower_triangular(&a)
        .expect("Cholesky factor is nonsingular");
    let c = l
        .solve_lower_triangular(&la.transpose())
        .expect("Cholesky factor is nonsingular");
    let c = 0.5 * (&c + c.transpose());
    let (vals, vecs) = sorted_symmetric_eigen(c, "stokes")?;

    let lt = l.transpose();
    let area = g.cell_area();
    let pressure = PressureSolver::new(ops)?;
    let mut modes = Vec::with_capacity(m);
    let mut worst: f64 = 0.0;
    for k in 0..m {
        let x = vecs.column(k).into_owned();
        let y = lt
            .solve_upper_triangular(&x)
            .expect("Cholesky factor is nonsingular");
        let mut e = spmv(&z, &y);
        let norm = ops.velocity_norm(&e);
        e /= norm;
        fix_sign(&mut e);
        let lambda = vals[k];

        // interior momentum residual carries the pressure gradient
        let mut r = spmv(&ops.stiffness, &e) / area - lambda * &e;
        mask_boundary(ops, &mut r);
        let p = pressure.recover(&r);
        let gp = spmv(&ops.grad, &p);
        let mut res = gp - spmv(&ops.lv, &e) - lambda * &e;
        mask_boundary(ops, &mut res);
        let residual = ops.velocity_norm(&res);
        worst = worst.max(residual / lambda.max(1.0));
        modes.push(StokesMode {
            lambda,
            e,
            p,
            residual,
        });
    }
    if !(worst <= 1e-8) {
        return Err(FsiError::EigenNonConvergence {
            kind: "stokes",
            residual: worst,
        });
    }
    Ok(StokesBasis { modes })
}

fn mask_boundary(ops: &DiscreteOperators, v: &mut DVector<f64>) {
    for idx in ops.grid.wall_velocity() {
        v[idx] = 0.0;
    }
    for idx in ops.grid.lid_indices() {
        v[idx] = 0.0;
    }
}

/// Zero-mean pressure solving `D^T p = r` in least squares on interior faces.
struct PressureSolver {
    div: CsrMatrix<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
}

impl PressureSolver {
    fn new(ops: &DiscreteOperators) -> Result<Self> {
        let g = &ops.grid;
        let interior = g.interior_velocity();
        let d_int = csr_select_columns(&ops.div, &interior);
        let mut s = to_dense(&(&d_int * &d_int.transpose()));
        s.add_scalar_mut(1.0);
        let chol = Cholesky::new(s)
            .ok_or_else(|| FsiError::SingularSaddlePoint("pressure Schur complement".into()))?;
        Ok(Self {
            div: ops.div.clone(),
            chol,
        })
    }

    fn recover(&self, r: &DVector<f64>) -> DVector<f64> {
        // r lives on interior faces only; D restricted to them equals D applied to r.
        let rhs = spmv(&self.div, r);
        let mut p = self.chol.solve(&rhs);
        let mean = p.mean();
        p.add_scalar_mut(-mean);
        p
    }
}

/// Discrete harmonic extension of lid data into a divergence-free field.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftingOperator {
    /// Beam DOFs to velocity DOFs; includes the zero-mean projection.
    pub nmat: DMatrix<f64>,
}

impl LiftingOperator {
    /// Apply to beam data; data with a nonzero mean is projected first and a warning is logged.
    /// The flag reports whether that projection was needed.
    pub fn apply(&self, ops: &DiscreteOperators, b: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
        if b.len() != self.nmat.ncols() {
            return Err(FsiError::SizeMismatch {
                what: "lifting input",
                expected: self.nmat.ncols(),
                got: b.len(),
            });
        }
        let mean = ops.beam_mean(b);
        let flagged = mean.abs() > 1e-12 * b.amax().max(1.0);
        if flagged {
            warn!("lifting data has mean {mean:.3e}; projected to zero mean");
        }
        Ok((&self.nmat * b, flagged))
    }

    /// Sup of ‖N b‖ / ‖b‖ over the given samples.
    pub fn boundedness_ratio(&self, ops: &DiscreteOperators, samples: &[DVector<f64>]) -> f64 {
        samples
            .iter()
            .filter(|b| ops.beam_norm(b) > 0.0)
            .map(|b| ops.velocity_norm(&(&self.nmat * b)) / ops.beam_norm(b))
            .fold(0.0, f64::max)
    }
}

pub fn build_lifting(ops: &DiscreteOperators) -> Result<LiftingOperator> {
    let g = &ops.grid;
    let nx = g.nx;
    let z = interior_curl(ops);
    let zt = z.transpose();
    let kz = &ops.stiffness * &z;
    let a = to_dense(&(&zt * &kz));
    let chol = Cholesky::new(a)
        .ok_or_else(|| FsiError::SingularSaddlePoint("interior Stokes block".into()))?;

    // Lifts of unit streamfunction values on interior lid nodes.
    let lid_nodes: Vec<usize> = (1..nx).map(|i| g.node_index(i, g.nz)).collect();
    let vb = to_dense(&csr_select_columns(&ops.curl, &lid_nodes));
    let kvb = csr_dense(&ops.stiffness, &vb);
    let rhs = csr_dense(&zt, &kvb);
    let c = -chol.solve(&rhs);
    let phi = vb + csr_dense(&z, &c);

    // lid streamfunction from zero-mean data: psi_i = -hx * sum_{l<i} b_l
    let mut cum = DMatrix::zeros(nx - 1, nx);
    for i in 1..nx {
        for l in 0..i {
            cum[(i - 1, l)] = -g.hx;
        }
    }
    let mut proj = DMatrix::identity(nx, nx);
    for r in 0..nx {
        for col in 0..nx {
            proj[(r, col)] -= ops.mean[col];
        }
    }
    let nmat = phi * (cum * proj);
    if nmat.iter().any(|v| !v.is_finite()) {
        return Err(FsiError::SingularSaddlePoint("non-finite lifting".into()));
    }
    Ok(LiftingOperator { nmat })
}

/// Mv coefficients of `v` against the basis.
pub fn project_onto_basis(
    ops: &DiscreteOperators,
    basis: &StokesBasis,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    if v.len() != ops.grid.n_velocity() {
        return Err(FsiError::SizeMismatch {
            what: "velocity field",
            expected: ops.grid.n_velocity(),
            got: v.len(),
        });
    }
    Ok(DVector::from_iterator(
        basis.len(),
        basis.modes.iter().map(|m| ops.velocity_inner(v, &m.e)),
    ))
}
