//! Transport demo: 1D periodic slab with Strang splitting between exact-shift
//! streaming in x and the homogeneous collision step applied per cell.
//!
//! The velocity nodes sit at half-integer multiples of the grid spacing, so a
//! step dt = 4q dx/h makes every half-step displacement v_x dt/2 an integer
//! number of spatial cells. Streaming is then a pure permutation: no
//! interpolation, no numerical diffusion, and the mass test probes only the
//! collision propagator.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::grid::VelocityGrid;
use crate::kernel::KernelContext;
use crate::linalg;
use crate::math;
use crate::operator::SymmetricOperator;

/// Smallest commensurate step: all half-step shifts are odd cell counts.
pub fn commensurate_dt(grid: &VelocityGrid, nx: usize, q: usize) -> f64 {
    let dx = 1.0 / nx as f64;
    4.0 * q as f64 * dx / grid.h
}

pub struct SlabTransport {
    pub nx: usize,
    pub nv: usize,
    pub dx: f64,
    pub dt: f64,
    cell_volume: f64,
    /// Cells moved per half step, one entry per velocity node.
    half_shifts: Vec<isize>,
    /// Density-coordinate collision propagator exp(dt L), row-major nv x nv;
    /// `None` runs streaming only.
    propagator: Option<Vec<f64>>,
}

impl SlabTransport {
    /// `collisions = false` gives the pure streaming semigroup for the
    /// exactness check. The collision propagator is the dense exponential of
    /// the conservative assembled operator, built once and reused each step.
    pub fn new(
        ctx: &KernelContext,
        grid: &VelocityGrid,
        nx: usize,
        dt: f64,
        collisions: bool,
    ) -> Result<Self> {
        if nx < 2 {
            return Err(CoreError::InvalidParameter(format!(
                "need at least 2 spatial cells, got {nx}"
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CoreError::InvalidParameter(format!("step must be positive, got {dt}")));
        }
        let dx = 1.0 / nx as f64;
        let mut half_shifts = Vec::with_capacity(grid.len());
        for &v in grid.nodes() {
            let cells = v.0[0] * (0.5 * dt) / dx;
            let rounded = libm::round(cells);
            if (cells - rounded).abs() > 1e-9 * cells.abs().max(1.0) {
                return Err(CoreError::IncommensurateStep { dt });
            }
            half_shifts.push(rounded as isize);
        }
        let propagator = if collisions {
            let op = SymmetricOperator::assemble_full(ctx, grid)?;
            Some(density_propagator(&op, dt)?)
        } else {
            None
        };
        Ok(SlabTransport {
            nx,
            nv: grid.len(),
            dx,
            dt,
            cell_volume: grid.weight(),
            half_shifts,
            propagator,
        })
    }

    /// State layout: cell-major, `state[c * nv + j]`.
    pub fn state_len(&self) -> usize {
        self.nx * self.nv
    }

    pub fn replicate(&self, cell_density: &[f64]) -> Result<Vec<f64>> {
        if cell_density.len() != self.nv {
            return Err(CoreError::GridMismatch { expected: self.nv, got: cell_density.len() });
        }
        let mut state = Vec::with_capacity(self.state_len());
        for _ in 0..self.nx {
            state.extend_from_slice(cell_density);
        }
        Ok(state)
    }

    pub fn total_mass(&self, state: &[f64]) -> Result<f64> {
        if state.len() != self.state_len() {
            return Err(CoreError::GridMismatch { expected: self.state_len(), got: state.len() });
        }
        let per_cell: Vec<f64> =
            (0..self.nx).map(|c| math::pairwise_sum(&state[c * self.nv..(c + 1) * self.nv])).collect();
        Ok(math::pairwise_sum(&per_cell) * self.dx * self.cell_volume)
    }

    /// One Strang step: half shift, collide, half shift.
    pub fn step(&self, state: &mut [f64]) -> Result<()> {
        if state.len() != self.state_len() {
            return Err(CoreError::GridMismatch { expected: self.state_len(), got: state.len() });
        }
        self.shift_half(state);
        if let Some(p) = &self.propagator {
            let mut scratch = vec![0.0; self.nv];
            for c in 0..self.nx {
                let cell = &mut state[c * self.nv..(c + 1) * self.nv];
                for i in 0..self.nv {
                    scratch[i] =
                        p[i * self.nv..(i + 1) * self.nv].iter().zip(cell.iter()).map(|(a, b)| a * b).sum();
                }
                cell.copy_from_slice(&scratch);
            }
        }
        self.shift_half(state);
        Ok(())
    }

    /// Advance `steps` steps, reporting total mass after each one.
    pub fn run(&self, state: &mut [f64], steps: usize) -> Result<Vec<f64>> {
        let mut masses = Vec::with_capacity(steps);
        for _ in 0..steps {
            self.step(state)?;
            masses.push(self.total_mass(state)?);
        }
        Ok(masses)
    }

    /// f(x, v) <- f(x - (dt/2) v_x, v): a cyclic permutation per velocity.
    fn shift_half(&self, state: &mut [f64]) {
        let nx = self.nx as isize;
        let mut column = vec![0.0; self.nx];
        for (j, &s) in self.half_shifts.iter().enumerate() {
            if s == 0 {
                continue;
            }
            for c in 0..self.nx {
                column[c] = state[c * self.nv + j];
            }
            for c in 0..nx {
                let src = (c - s).rem_euclid(nx) as usize;
                state[c as usize * self.nv + j] = column[src];
            }
        }
    }
}

/// Dense exp(dt T) conjugated into density coordinates:
/// P_f[i][j] = exp(dt T)[i][j] * e_i / e_j (weights are uniform on the cube).
fn density_propagator(op: &SymmetricOperator, dt: f64) -> Result<Vec<f64>> {
    let n = op.len();
    let eig = linalg::eigh(n, &op.dense())?;
    let e = op.equilibrium();
    let mut p = vec![0.0; n * n];
    // P = U diag(exp(lambda dt)) U^T, accumulated rank-one by rank-one
    for k in 0..n {
        let decay = libm::exp(eig.values[k] * dt);
        let vk = eig.vector(k);
        for i in 0..n {
            let row = &mut p[i * n..(i + 1) * n];
            let c = decay * vk[i];
            for (pj, vj) in row.iter_mut().zip(vk) {
                *pj += c * vj;
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] *= e[i] / e[j];
        }
    }
    Ok(p)
}
