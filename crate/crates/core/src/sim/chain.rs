//! Point-mass kinematic chains in the sagittal plane.
//!
//! Every body point is written as a base point plus a sum of rods
//! `len * (sin q, cos q)`, where `q` is an absolute angle from the vertical
//! (positive rotating the rod tip forward). That gives positions, Jacobians
//! and the velocity-product acceleration terms in closed form, from which the
//! mass matrix and the equations of motion follow.

use nalgebra::{Cholesky, SMatrix, SVector, Vector2};

use crate::error::{Result, WalkerError};

/// Width of every generalized coordinate vector.
pub const NDOF: usize = 7;

pub type Coords = SVector<f64, NDOF>;
pub type MassMatrix = SMatrix<f64, NDOF, NDOF>;
pub type PointJacobian = SMatrix<f64, 2, NDOF>;

/// Mass matrices with a condition estimate above this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[inline]
pub fn dir(a: f64) -> Vector2<f64> {
    let (s, c) = a.sin_cos();
    Vector2::new(s, c)
}

#[inline]
pub fn dir_prime(a: f64) -> Vector2<f64> {
    let (s, c) = a.sin_cos();
    Vector2::new(c, -s)
}

/// Position, Jacobian and `J̇ q̇` of one point of the chain.
#[derive(Debug, Clone, Copy)]
pub struct PointKin {
    pub pos: Vector2<f64>,
    pub jac: PointJacobian,
    pub bias: Vector2<f64>,
}

impl PointKin {
    pub fn fixed(pos: Vector2<f64>) -> Self {
        Self { pos, jac: PointJacobian::zeros(), bias: Vector2::zeros() }
    }

    /// A base point driven along a prescribed trajectory.
    pub fn prescribed(pos: Vector2<f64>, accel: Vector2<f64>) -> Self {
        Self { pos, jac: PointJacobian::zeros(), bias: accel }
    }

    /// A free base point whose coordinates are `q[ix]`, `q[iy]`.
    pub fn free(ix: usize, iy: usize, q: &Coords) -> Self {
        let mut jac = PointJacobian::zeros();
        jac[(0, ix)] = 1.0;
        jac[(1, iy)] = 1.0;
        Self { pos: Vector2::new(q[ix], q[iy]), jac, bias: Vector2::zeros() }
    }

    /// Appends a rod of constant length along the angle `q[idx]`.
    #[inline]
    pub fn rod(&self, len: f64, idx: usize, q: &Coords, qd: &Coords) -> Self {
        let a = q[idx];
        let w = qd[idx];
        let (s, c) = a.sin_cos();
        let mut out = *self;
        out.pos += Vector2::new(len * s, len * c);
        out.jac[(0, idx)] += len * c;
        out.jac[(1, idx)] -= len * s;
        out.bias -= Vector2::new(len * w * w * s, len * w * w * c);
        out
    }

    /// Appends a rod whose length is `offset + q[len_idx]`.
    #[inline]
    pub fn telescopic_rod(
        &self,
        offset: f64,
        len_idx: usize,
        idx: usize,
        q: &Coords,
        qd: &Coords,
    ) -> Self {
        let len = offset + q[len_idx];
        let len_rate = qd[len_idx];
        let a = q[idx];
        let w = qd[idx];
        let u = dir(a);
        let up = dir_prime(a);
        let mut out = *self;
        out.pos += len * u;
        out.jac[(0, idx)] += len * up.x;
        out.jac[(1, idx)] += len * up.y;
        out.jac[(0, len_idx)] += u.x;
        out.jac[(1, len_idx)] += u.y;
        out.bias += 2.0 * len_rate * w * up - len * w * w * u;
        out
    }

    #[inline]
    pub fn velocity(&self, qd: &Coords) -> Vector2<f64> {
        self.jac * qd
    }

    #[inline]
    pub fn acceleration(&self, qdd: &Coords) -> Vector2<f64> {
        self.jac * qdd + self.bias
    }
}

/// Which coordinates are frozen, and which of those copy another coordinate.
///
/// A locked coordinate has no inertia of its own: its row of the mass matrix
/// is replaced by identity and its acceleration is either zero or, when it
/// mirrors a source coordinate, equal to the source's.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub locked: [bool; NDOF],
    pub mirror: [Option<usize>; NDOF],
}

impl Layout {
    pub const fn all_free() -> Self {
        Self { locked: [false; NDOF], mirror: [None; NDOF] }
    }

    pub fn lock(mut self, idx: usize) -> Self {
        self.locked[idx] = true;
        self.mirror[idx] = None;
        self
    }

    pub fn mirror(mut self, idx: usize, source: usize) -> Self {
        self.locked[idx] = true;
        self.mirror[idx] = Some(source);
        self
    }

    /// Overwrites mirrored entries of `v` with their sources.
    pub fn apply_mirrors(&self, v: &mut Coords) {
        for i in 0..NDOF {
            if let Some(src) = self.mirror[i] {
                v[i] = v[src];
            } else if self.locked[i] {
                v[i] = 0.0;
            }
        }
    }
}

/// Factored mass matrix of a chain configuration.
pub struct MassSystem {
    pub matrix: MassMatrix,
    chol: Cholesky<f64, nalgebra::Const<NDOF>>,
    layout: Layout,
}

impl MassSystem {
    pub fn new(points: &[(f64, PointKin)], layout: Layout) -> Result<Self> {
        let mut m = MassMatrix::zeros();
        for (mass, p) in points {
            m += *mass * p.jac.transpose() * p.jac;
        }
        for i in 0..NDOF {
            if layout.locked[i] {
                for j in 0..NDOF {
                    m[(i, j)] = 0.0;
                    m[(j, i)] = 0.0;
                }
                m[(i, i)] = 1.0;
            }
        }
        let chol = Cholesky::new(m).ok_or(WalkerError::MassMatrixSingular(f64::INFINITY))?;
        let l = chol.l_dirty();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..NDOF {
            if layout.locked[i] {
                continue;
            }
            let d = l[(i, i)] * l[(i, i)];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if hi > 0.0 && hi / lo > MAX_CONDITION {
            return Err(WalkerError::MassMatrixSingular(hi / lo));
        }
        Ok(Self { matrix: m, chol, layout })
    }

    /// Solves `M x = rhs` on the free coordinates; locked entries follow
    /// their mirrors.
    pub fn solve(&self, rhs: &Coords) -> Coords {
        let mut r = *rhs;
        for i in 0..NDOF {
            if self.layout.locked[i] {
                r[i] = 0.0;
            }
        }
        let mut x = self.chol.solve(&r);
        self.layout.apply_mirrors(&mut x);
        x
    }
}

/// Generalized gravity and velocity-product forces, `Σ m Jᵀ (g − J̇q̇)`.
pub fn passive_forces(points: &[(f64, PointKin)], gravity: f64) -> Coords {
    let g = Vector2::new(0.0, -gravity);
    let mut f = Coords::zeros();
    for (mass, p) in points {
        f += *mass * p.jac.transpose() * (g - p.bias);
    }
    f
}

pub fn kinetic_energy(points: &[(f64, PointKin)], qd: &Coords) -> f64 {
    points.iter().map(|(m, p)| 0.5 * m * p.velocity(qd).norm_squared()).sum()
}
