use crate::error::{FsiError, Result};

/// Where a velocity degree of freedom sits relative to the cavity boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    Interior,
    /// Solid wall (sides and bottom), homogeneous no-slip.
    Wall,
    /// Vertical-velocity face on the elastic lid.
    Lid,
}

/// A velocity face, identified by component and staggered indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    /// Horizontal velocity on the vertical face at `x = i hx`, cell row `j`.
    U { i: usize, j: usize },
    /// Vertical velocity on the horizontal face at `z = -1 + j hz`, cell column `i`.
    W { i: usize, j: usize },
}

/// Uniform MAC grid on the unit cavity `(0,1) x (-1,0)` with the beam on the lid `z = 0`.
///
/// Velocity vectors hold every face, boundary faces included: first the
/// `(nx+1) * nz` horizontal faces, then the `nx * (nz+1)` vertical faces.
/// Beam node `k` sits at `x = (k + 1/2) hx` and coincides with lid face `W{k, nz}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CavityGrid {
    pub nx: usize,
    pub nz: usize,
    pub hx: f64,
    pub hz: f64,
}

impl CavityGrid {
    pub fn new(nx: usize, nz: usize) -> Result<Self> {
        if nx < 4 || nz < 4 {
            return Err(FsiError::GridTooCoarse { nx, nz });
        }
        Ok(Self {
            nx,
            nz,
            hx: 1.0 / nx as f64,
            hz: 1.0 / nz as f64,
        })
    }

    pub fn n_u(&self) -> usize {
        (self.nx + 1) * self.nz
    }

    pub fn n_w(&self) -> usize {
        self.nx * (self.nz + 1)
    }

    pub fn n_velocity(&self) -> usize {
        self.n_u() + self.n_w()
    }

    pub fn n_pressure(&self) -> usize {
        self.nx * self.nz
    }

    pub fn n_beam(&self) -> usize {
        self.nx
    }

    /// Streamfunction nodes, i.e. cell corners.
    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.nz + 1)
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hz
    }

    #[inline]
    pub fn u_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j < self.nz);
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn w_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j <= self.nz);
        self.n_u() + j * self.nx + i
    }

    #[inline]
    pub fn p_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.nz);
        j * self.nx + i
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j <= self.nz);
        j * (self.nx + 1) + i
    }

    /// Velocity index of the lid face above beam node `k`.
    #[inline]
    pub fn lid_index(&self, k: usize) -> usize {
        self.w_index(k, self.nz)
    }

    pub fn face(&self, idx: usize) -> Face {
        let nu = self.n_u();
        if idx < nu {
            Face::U {
                i: idx % (self.nx + 1),
                j: idx / (self.nx + 1),
            }
        } else {
            let r = idx - nu;
            Face::W {
                i: r % self.nx,
                j: r / self.nx,
            }
        }
    }

    pub fn face_kind(&self, idx: usize) -> FaceKind {
        match self.face(idx) {
            Face::U { i, .. } if i == 0 || i == self.nx => FaceKind::Wall,
            Face::W { j: 0, .. } => FaceKind::Wall,
            Face::W { j, .. } if j == self.nz => FaceKind::Lid,
            _ => FaceKind::Interior,
        }
    }

    pub fn interior_velocity(&self) -> Vec<usize> {
        (0..self.n_velocity())
            .filter(|&k| self.face_kind(k) == FaceKind::Interior)
            .collect()
    }

    /// Faces on the solid wall `S` (everything on the boundary except the lid).
    pub fn wall_velocity(&self) -> Vec<usize> {
        (0..self.n_velocity())
            .filter(|&k| self.face_kind(k) == FaceKind::Wall)
            .collect()
    }

    pub fn lid_indices(&self) -> Vec<usize> {
        (0..self.nx).map(|k| self.lid_index(k)).collect()
    }

    /// Physical position of a velocity face midpoint.
    pub fn face_position(&self, idx: usize) -> (f64, f64) {
        match self.face(idx) {
            Face::U { i, j } => (i as f64 * self.hx, -1.0 + (j as f64 + 0.5) * self.hz),
            Face::W { i, j } => ((i as f64 + 0.5) * self.hx, -1.0 + j as f64 * self.hz),
        }
    }

    pub fn node_position(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.hx, -1.0 + j as f64 * self.hz)
    }

    pub fn beam_x(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.hx
    }

    pub fn beam_nodes(&self) -> Vec<f64> {
        (0..self.nx).map(|k| self.beam_x(k)).collect()
    }

    /// Quadrature weight of a velocity face: half a cell on boundary faces.
    pub fn face_weight(&self, idx: usize) -> f64 {
        match self.face_kind(idx) {
            FaceKind::Interior => self.cell_area(),
            FaceKind::Wall | FaceKind::Lid => 0.5 * self.cell_area(),
        }
    }

    /// Interior streamfunction nodes (their curls vanish on the whole boundary).
    pub fn interior_nodes(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity((self.nx - 1) * (self.nz - 1));
        for j in 1..self.nz {
            for i in 1..self.nx {
                out.push((i, j));
            }
        }
        out
    }
}
