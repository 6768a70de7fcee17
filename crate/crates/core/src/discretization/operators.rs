use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use super::grid::CavityGrid;
use crate::error::{FsiError, Result};

/// Sparse discrete operators on a [`CavityGrid`].
///
/// Conventions (all weights come from `mv`, `mb`):
/// * `stiffness` is the symmetric Dirichlet form: `a(v, w) = vᵀ K w ≈ (∇v, ∇w)`.
///   No-slip walls and the tangential no-slip condition on the lid enter through
///   ghost-value wall terms.
/// * `lv = -K / (hx hz)`; on interior faces this is the usual five-point vector Laplacian.
/// * `div` maps faces to cells; `grad = -(hx hz) Mv⁻¹ Dᵀ` so `(Dv, p) = -(v, Gp p)_Mv`.
/// * `b4` is the clamped beam operator with `(B4 u, u)_Mb = Σ w (u'')²`.
/// * `b2` is `-∂xx` on the beam with `(B2 u, u)_Mb = ‖u_x‖²` (clamped ends).
#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    pub grid: CavityGrid,
    pub div: CsrMatrix<f64>,
    pub grad: CsrMatrix<f64>,
    pub stiffness: CsrMatrix<f64>,
    pub lv: CsrMatrix<f64>,
    /// Discrete curl from streamfunction nodes to velocity faces; `div * curl = 0` exactly.
    pub curl: CsrMatrix<f64>,
    pub b4: CsrMatrix<f64>,
    pub b2: CsrMatrix<f64>,
    /// Lid trace: vertical velocity on the lid faces, one row per beam node.
    pub trace: CsrMatrix<f64>,
    /// Mean functional on beam DOFs (midpoint weights, `m · 1 = 1`).
    pub mean: DVector<f64>,
    /// Diagonal of the velocity mass matrix (trapezoidal face weights).
    pub mv: DVector<f64>,
    /// Diagonal of the beam mass matrix.
    pub mb: DVector<f64>,
}

struct Triplets {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    fn push(&mut self, r: usize, c: usize, v: f64) {
        self.entries.push((r, c, v));
    }

    /// Graph-Laplacian edge `c (e_a - e_b)(e_a - e_b)ᵀ`.
    fn edge(&mut self, a: usize, b: usize, c: f64) {
        self.push(a, a, c);
        self.push(b, b, c);
        self.push(a, b, -c);
        self.push(b, a, -c);
    }

    fn build(self) -> CsrMatrix<f64> {
        let mut coo = CooMatrix::new(self.rows, self.cols);
        for (r, c, v) in self.entries {
            coo.push(r, c, v);
        }
        CsrMatrix::from(&coo)
    }
}

/// Sparse matrix-vector product.
pub fn spmv(a: &CsrMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    assert_eq!(a.ncols(), x.len(), "spmv dimension mismatch");
    let mut y = DVector::zeros(a.nrows());
    for (r, row) in a.row_iter().enumerate() {
        let mut acc = 0.0;
        for (&c, &v) in row.col_indices().iter().zip(row.values()) {
            acc += v * x[c];
        }
        y[r] = acc;
    }
    y
}

/// Transposed sparse matrix-vector product `aᵀ x`.
pub fn spmv_t(a: &CsrMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    assert_eq!(a.nrows(), x.len(), "spmv_t dimension mismatch");
    let mut y = DVector::zeros(a.ncols());
    for (r, row) in a.row_iter().enumerate() {
        let xr = x[r];
        for (&c, &v) in row.col_indices().iter().zip(row.values()) {
            y[c] += v * xr;
        }
    }
    y
}

pub fn to_dense(a: &CsrMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from(a)
}

fn scale(a: &CsrMatrix<f64>, s: f64) -> CsrMatrix<f64> {
    let mut out = a.clone();
    out.values_mut().iter_mut().for_each(|v| *v *= s);
    out
}

fn assemble_stiffness(g: &CavityGrid) -> CsrMatrix<f64> {
    let (nx, nz, hx, hz) = (g.nx, g.nz, g.hx, g.hz);
    let mut t = Triplets::new(g.n_velocity(), g.n_velocity());
    let half = |boundary: bool| if boundary { 0.5 } else { 1.0 };

    // horizontal velocity
    for j in 0..nz {
        for i in 0..nx {
            t.edge(g.u_index(i, j), g.u_index(i + 1, j), hz / hx);
        }
    }
    for i in 0..=nx {
        let tx = half(i == 0 || i == nx);
        for j in 0..nz - 1 {
            t.edge(g.u_index(i, j), g.u_index(i, j + 1), tx * hx / hz);
        }
        // bottom wall and lid: ghost u = -u across the boundary
        t.push(g.u_index(i, 0), g.u_index(i, 0), 2.0 * tx * hx / hz);
        t.push(g.u_index(i, nz - 1), g.u_index(i, nz - 1), 2.0 * tx * hx / hz);
    }

    // vertical velocity
    for i in 0..nx {
        for j in 0..nz {
            t.edge(g.w_index(i, j), g.w_index(i, j + 1), hx / hz);
        }
    }
    for j in 0..=nz {
        let tz = half(j == 0 || j == nz);
        for i in 0..nx - 1 {
            t.edge(g.w_index(i, j), g.w_index(i + 1, j), tz * hz / hx);
        }
        t.push(g.w_index(0, j), g.w_index(0, j), 2.0 * tz * hz / hx);
        t.push(g.w_index(nx - 1, j), g.w_index(nx - 1, j), 2.0 * tz * hz / hx);
    }
    t.build()
}

fn assemble_div(g: &CavityGrid) -> CsrMatrix<f64> {
    let mut t = Triplets::new(g.n_pressure(), g.n_velocity());
    for j in 0..g.nz {
        for i in 0..g.nx {
            let p = g.p_index(i, j);
            t.push(p, g.u_index(i + 1, j), 1.0 / g.hx);
            t.push(p, g.u_index(i, j), -1.0 / g.hx);
            t.push(p, g.w_index(i, j + 1), 1.0 / g.hz);
            t.push(p, g.w_index(i, j), -1.0 / g.hz);
        }
    }
    t.build()
}

fn assemble_curl(g: &CavityGrid) -> CsrMatrix<f64> {
    // u = ∂ψ/∂z, w = -∂ψ/∂x
    let mut t = Triplets::new(g.n_velocity(), g.n_nodes());
    for j in 0..g.nz {
        for i in 0..=g.nx {
            let r = g.u_index(i, j);
            t.push(r, g.node_index(i, j + 1), 1.0 / g.hz);
            t.push(r, g.node_index(i, j), -1.0 / g.hz);
        }
    }
    for j in 0..=g.nz {
        for i in 0..g.nx {
            let r = g.w_index(i, j);
            t.push(r, g.node_index(i + 1, j), -1.0 / g.hx);
            t.push(r, g.node_index(i, j), 1.0 / g.hx);
        }
    }
    t.build()
}

/// Second-derivative samples of a clamped beam, with trapezoidal weights.
///
/// Rows: `u''(0)`, `u''` at each node, `u''(1)`. Ghost value at `x = -h/2` and the
/// end samples come from the cubic `a x² + b x³` through the two nearest nodes,
/// which builds in `u = u' = 0` at both ends.
fn beam_second_derivative(n: usize, h: f64) -> (Vec<Vec<(usize, f64)>>, Vec<f64>) {
    let h2 = h * h;
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n + 2);
    rows.push(vec![(0, 12.0 / h2), (1, -4.0 / (9.0 * h2))]);
    for i in 0..n {
        let row = if i == 0 {
            vec![(1, 8.0 / (9.0 * h2))]
        } else if i == n - 1 {
            vec![(n - 2, 8.0 / (9.0 * h2))]
        } else {
            vec![(i - 1, 1.0 / h2), (i, -2.0 / h2), (i + 1, 1.0 / h2)]
        };
        rows.push(row);
    }
    rows.push(vec![(n - 1, 12.0 / h2), (n - 2, -4.0 / (9.0 * h2))]);

    let mut w = vec![h; n + 2];
    w[0] = 0.25 * h;
    w[n + 1] = 0.25 * h;
    w[1] = 0.75 * h;
    w[n] = 0.75 * h;
    (rows, w)
}

fn assemble_b4(g: &CavityGrid) -> CsrMatrix<f64> {
    let (n, h) = (g.n_beam(), g.hx);
    let (rows, w) = beam_second_derivative(n, h);
    let mut t = Triplets::new(n, n);
    for (row, wr) in rows.iter().zip(&w) {
        for &(a, va) in row {
            for &(b, vb) in row {
                t.push(a, b, wr * va * vb / h);
            }
        }
    }
    t.build()
}

fn assemble_b2(g: &CavityGrid) -> CsrMatrix<f64> {
    let (n, h) = (g.n_beam(), g.hx);
    let mut t = Triplets::new(n, n);
    for k in 1..n {
        t.edge(k - 1, k, 1.0 / (h * h));
    }
    // half-cell slope to the clamped end value u = 0
    t.push(0, 0, 2.0 / (h * h));
    t.push(n - 1, n - 1, 2.0 / (h * h));
    t.build()
}

/// Assemble every operator for `grid`. Deterministic: equal grids give identical matrices.
pub fn assemble_operators(grid: &CavityGrid) -> DiscreteOperators {
    let g = grid;
    let area = g.cell_area();
    let mv = DVector::from_iterator(g.n_velocity(), (0..g.n_velocity()).map(|k| g.face_weight(k)));
    let mb = DVector::from_element(g.n_beam(), g.hx);
    let mean = DVector::from_element(g.n_beam(), g.hx);

    let div = assemble_div(g);
    let mut grad = div.transpose();
    for (r, mut row) in grad.row_iter_mut().enumerate() {
        let s = -area / mv[r];
        row.values_mut().iter_mut().for_each(|v| *v *= s);
    }
    let stiffness = assemble_stiffness(g);
    let lv = scale(&stiffness, -1.0 / area);

    let mut tr = Triplets::new(g.n_beam(), g.n_velocity());
    for k in 0..g.n_beam() {
        tr.push(k, g.lid_index(k), 1.0);
    }

    DiscreteOperators {
        grid: g.clone(),
        div,
        grad,
        stiffness,
        lv,
        curl: assemble_curl(g),
        b4: assemble_b4(g),
        b2: assemble_b2(g),
        trace: tr.build(),
        mean,
        mv,
        mb,
    }
}

impl DiscreteOperators {
    /// Lid vertical-velocity samples of a fluid field (exact index extraction).
    pub fn apply_trace(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.grid.n_velocity() {
            return Err(FsiError::SizeMismatch {
                what: "velocity field",
                expected: self.grid.n_velocity(),
                got: v.len(),
            });
        }
        Ok(DVector::from_iterator(
            self.grid.n_beam(),
            (0..self.grid.n_beam()).map(|k| v[self.grid.lid_index(k)]),
        ))
    }

    pub fn velocity_inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.iter().zip(b.iter()).zip(self.mv.iter()).map(|((x, y), w)| x * y * w).sum()
    }

    pub fn velocity_norm(&self, a: &DVector<f64>) -> f64 {
        self.velocity_inner(a, a).sqrt()
    }

    pub fn beam_inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.iter().zip(b.iter()).zip(self.mb.iter()).map(|((x, y), w)| x * y * w).sum()
    }

    pub fn beam_norm(&self, a: &DVector<f64>) -> f64 {
        self.beam_inner(a, a).sqrt()
    }

    /// Dirichlet form `(∇a, ∇b)`.
    pub fn dirichlet(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        spmv(&self.stiffness, b).dot(a)
    }

    pub fn beam_mean(&self, u: &DVector<f64>) -> f64 {
        self.mean.dot(u)
    }

    /// Remove the mean of beam data.
    pub fn project_zero_mean(&self, u: &DVector<f64>) -> DVector<f64> {
        let m = self.beam_mean(u);
        u.map(|x| x - m)
    }

    /// Cell-weighted pressure inner product.
    pub fn pressure_inner(&self, p: &DVector<f64>, q: &DVector<f64>) -> f64 {
        self.grid.cell_area() * p.dot(q)
    }

    /// Named matrices in a fixed order, as written to the operator cache.
    pub fn named_matrices(&self) -> Vec<(&'static str, CsrMatrix<f64>)> {
        let diag = |d: &DVector<f64>| {
            let mut coo = CooMatrix::new(d.len(), d.len());
            for (i, &v) in d.iter().enumerate() {
                coo.push(i, i, v);
            }
            CsrMatrix::from(&coo)
        };
        let row = |d: &DVector<f64>| {
            let mut coo = CooMatrix::new(1, d.len());
            for (i, &v) in d.iter().enumerate() {
                coo.push(0, i, v);
            }
            CsrMatrix::from(&coo)
        };
        vec![
            ("D", self.div.clone()),
            ("Gp", self.grad.clone()),
            ("K", self.stiffness.clone()),
            ("Lv", self.lv.clone()),
            ("curl", self.curl.clone()),
            ("B4", self.b4.clone()),
            ("B2", self.b2.clone()),
            ("T", self.trace.clone()),
            ("m", row(&self.mean)),
            ("Mv", diag(&self.mv)),
            ("Mb", diag(&self.mb)),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::grid::FaceKind;
    use nalgebra::SymmetricEigen;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ops(nx: usize, nz: usize) -> DiscreteOperators {
        assemble_operators(&CavityGrid::new(nx, nz).unwrap())
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn constant_horizontal_field_is_divergence_free_inside() {
        let o = ops(8, 6);
        let g = &o.grid;
        let v = DVector::from_fn(g.n_velocity(), |k, _| match g.face(k) {
            crate::discretization::Face::U { i, .. } if i > 0 && i < g.nx => 1.0,
            _ => 0.0,
        });
        let d = spmv(&o.div, &v);
        for j in 0..g.nz {
            for i in 1..g.nx - 1 {
                assert_eq!(d[g.p_index(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn div_grad_duality() {
        let o = ops(9, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let v = random_vec(&mut rng, o.grid.n_velocity());
            let p = random_vec(&mut rng, o.grid.n_pressure());
            let lhs = o.pressure_inner(&spmv(&o.div, &v), &p);
            let rhs = o.velocity_inner(&v, &spmv(&o.grad, &p));
            let scale = o.velocity_norm(&v) * o.pressure_inner(&p, &p).sqrt();
            assert!((lhs + rhs).abs() <= 1e-12 * scale, "{lhs} {rhs}");
        }
    }

    #[test]
    fn div_grad_is_five_point_neumann_laplacian() {
        let o = ops(6, 5);
        let g = &o.grid;
        // Gp restricted to interior faces (boundary normal gradients dropped)
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_vec(&mut rng, g.n_pressure());
        let mut gq = spmv(&o.grad, &q);
        for k in 0..g.n_velocity() {
            if g.face_kind(k) != FaceKind::Interior {
                gq[k] = 0.0;
            }
        }
        let lap = spmv(&o.div, &gq);
        for j in 0..g.nz {
            for i in 0..g.nx {
                let c = q[g.p_index(i, j)];
                let mut s = 0.0;
                if i > 0 {
                    s += (q[g.p_index(i - 1, j)] - c) / (g.hx * g.hx);
                }
                if i + 1 < g.nx {
                    s += (q[g.p_index(i + 1, j)] - c) / (g.hx * g.hx);
                }
                if j > 0 {
                    s += (q[g.p_index(i, j - 1)] - c) / (g.hz * g.hz);
                }
                if j + 1 < g.nz {
                    s += (q[g.p_index(i, j + 1)] - c) / (g.hz * g.hz);
                }
                assert!((lap[g.p_index(i, j)] - s).abs() < 1e-9 * s.abs().max(1.0));
            }
        }
    }

    #[test]
    fn curl_is_exactly_solenoidal() {
        let o = ops(7, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let psi = random_vec(&mut rng, o.grid.n_nodes());
        let d = spmv(&o.div, &spmv(&o.curl, &psi));
        assert!(d.amax() < 1e-10 * psi.amax() * 81.0);
    }

    #[test]
    fn stiffness_symmetric_and_interior_definite() {
        let o = ops(6, 6);
        let k = to_dense(&o.stiffness);
        assert!((&k - k.transpose()).amax() == 0.0);
        let lv = to_dense(&o.lv);
        assert!((&lv - lv.transpose()).amax() == 0.0);
        let interior = o.grid.interior_velocity();
        let kin = k.select_rows(&interior).select_columns(&interior);
        let ev = SymmetricEigen::new(kin).eigenvalues;
        assert!(ev.min() > 0.0);
        let all = SymmetricEigen::new(k).eigenvalues;
        assert!(all.min() > 0.0);
    }

    #[test]
    fn interior_rows_match_five_point_stencil() {
        let o = ops(6, 6);
        let g = &o.grid;
        let lv = to_dense(&o.lv);
        let r = g.u_index(3, 2);
        assert!((lv[(r, r)] + 2.0 / (g.hx * g.hx) + 2.0 / (g.hz * g.hz)).abs() < 1e-9);
        assert!((lv[(r, g.u_index(2, 2))] - 1.0 / (g.hx * g.hx)).abs() < 1e-9);
        // next to the bottom wall the ghost value doubles the wall coupling
        let r = g.u_index(3, 0);
        assert!((lv[(r, r)] + 2.0 / (g.hx * g.hx) + 3.0 / (g.hz * g.hz)).abs() < 1e-9);
    }

    #[test]
    fn b4_interior_rows_exact_on_quartic() {
        for n in [16usize, 32] {
            let o = ops(n, 4);
            let x = o.grid.beam_nodes();
            let u = DVector::from_iterator(n, x.iter().map(|x| x * x * (1.0 - x) * (1.0 - x)));
            let b4u = spmv(&o.b4, &u);
            for i in 2..n - 2 {
                assert!((b4u[i] - 24.0).abs() < 1e-6, "n={n} i={i} {}", b4u[i]);
            }
        }
    }

    fn weak_b4_error(n: usize) -> f64 {
        // (B4 u, w)_Mb against the exact ∫ u'' w'' for clamped polynomials
        let o = ops(n, 4);
        let x = o.grid.beam_nodes();
        let u = DVector::from_iterator(n, x.iter().map(|x| x * x * (1.0 - x) * (1.0 - x)));
        let w = DVector::from_iterator(n, x.iter().map(|x| x * x * x * (1.0 - x) * (1.0 - x)));
        // exact value computed symbolically: ∫₀¹ (x²(1-x)²)'' (x³(1-x)²)'' dx = 2/5
        (o.beam_inner(&spmv(&o.b4, &u), &w) - 2.0 / 5.0).abs()
    }

    #[test]
    fn b4_weak_form_converges() {
        let e1 = weak_b4_error(16);
        let e2 = weak_b4_error(32);
        let e3 = weak_b4_error(64);
        assert!(e2 < e1 && e3 < e2, "{e1} {e2} {e3}");
        assert!(e3 < 1e-2);
    }

    #[test]
    fn b4_spd_and_smallest_eigenvalue_grows_with_refinement() {
        let mut last = 0.0;
        for n in [8usize, 16, 32] {
            let o = ops(n, 4);
            let b = to_dense(&o.b4);
            assert!((&b - b.transpose()).amax() < 1e-9 * b.amax());
            let lo = SymmetricEigen::new(b).eigenvalues.min();
            assert!(lo > last, "n={n} λmin={lo}");
            last = lo;
        }
        // continuum clamped value (4.7300...)⁴ ≈ 500.56 is approached from below
        assert!(last < 500.6);
    }

    #[test]
    fn b2_matches_slope_energy() {
        let o = ops(40, 4);
        let x = o.grid.beam_nodes();
        let u = DVector::from_iterator(40, x.iter().map(|x| (std::f64::consts::PI * x).sin()));
        // ‖u_x‖² = π²/2 for sin(πx)
        let e = o.beam_inner(&spmv(&o.b2, &u), &u);
        assert!((e - std::f64::consts::PI.powi(2) / 2.0).abs() < 1e-2);
    }

    #[test]
    fn mean_of_one_is_one_and_trace_extracts() {
        let o = ops(8, 5);
        let ones = DVector::from_element(8, 1.0);
        assert!((o.beam_mean(&ones) - 1.0).abs() < 1e-15);
        let v = DVector::zeros(o.grid.n_velocity());
        assert_eq!(o.apply_trace(&v).unwrap(), DVector::zeros(8));
        let mut v = DVector::from_element(o.grid.n_velocity(), 3.0);
        for k in o.grid.lid_indices() {
            v[k] = 0.0;
        }
        assert_eq!(o.apply_trace(&v).unwrap().amax(), 0.0);
        assert!(o.apply_trace(&DVector::zeros(3)).is_err());
        let t = spmv(&o.trace, &DVector::from_fn(o.grid.n_velocity(), |k, _| k as f64));
        assert_eq!(t, o.apply_trace(&DVector::from_fn(o.grid.n_velocity(), |k, _| k as f64)).unwrap());
    }

    #[test]
    fn assembly_is_reproducible_and_finite() {
        let a = ops(10, 8);
        let b = ops(10, 8);
        for ((na, ma), (_, mb)) in a.named_matrices().iter().zip(b.named_matrices().iter()) {
            assert_eq!(ma.values(), mb.values(), "{na}");
            assert_eq!(ma.col_indices(), mb.col_indices(), "{na}");
            assert!(ma.values().iter().all(|v| v.is_finite()), "{na}");
        }
    }
}
