//! Dense assembly of the collision operator on velocity grids, the
//! conservation rescaling, and quadratic-form diagnostics.
//!
//! Assembly works in symmetrized coordinates x_i = sqrt(w_i) f_i / sqrt(M_i),
//! where the gain matrix is symmetric and the whole operator is
//! T = Gain - diag(sigma). Quadrature makes row sums of the raw gain miss the
//! balance Gain e = sigma e at the discretization error; a symmetric diagonal
//! rescaling D Gain D (Sinkhorn iteration) restores it to rounding so that
//! the discrete operator conserves mass exactly and e spans its null space.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::checksum;
use crate::error::{CoreError, Result};
use crate::gas::equilibrium_distribution;
use crate::grid::{thermal_width, RadialGrid, VelocityGrid};
use crate::kernel::KernelContext;

/// Hard cap on dense assembly; beyond this the quadratic storage stops being
/// practical and callers should stay matrix-free.
pub const DENSE_NODE_BUDGET: usize = 2744;

pub const SINKHORN_TOL: f64 = 1e-15;
pub const SINKHORN_MAX_ITERATIONS: usize = 600;

#[derive(Debug, Clone)]
pub struct AssemblyMeta {
    pub nodes: usize,
    pub sinkhorn_iterations: usize,
    pub sinkhorn_residual: f64,
    /// |Gain e - sigma e|_2 / |e|_2 before rescaling; a pure discretization
    /// error that must shrink under refinement.
    pub raw_equilibrium_residual: f64,
    pub rescale_min: f64,
    pub rescale_max: f64,
    pub checksum: u64,
}

/// Collision operator restricted to a grid, in symmetrized coordinates.
pub struct SymmetricOperator {
    n: usize,
    gain: Vec<f64>,
    sigma: Vec<f64>,
    /// e_i = sqrt(w_i M(v_i)); null direction of the rescaled operator.
    equilibrium: Vec<f64>,
    sqrt_weight: Vec<f64>,
    pub meta: AssemblyMeta,
}

impl SymmetricOperator {
    /// Radial (isotropic sector) assembly from the reduced kernel.
    pub fn assemble_radial(ctx: &KernelContext, grid: &RadialGrid) -> Result<Self> {
        let n = grid.len();
        let meq = equilibrium_distribution(&ctx.params, &ctx.consts);
        let radial_meq: Vec<f64> = grid
            .r()
            .iter()
            .map(|&r| meq.eval(ctx.params.u1 + crate::math::Vec3::new(r, 0.0, 0.0)))
            .collect();
        let sqrt_weight: Vec<f64> = grid.w().iter().map(|&w| libm::sqrt(w)).collect();
        let sigma: Vec<f64> = grid.r().iter().map(|&r| ctx.sigma_radial(r)).collect();
        let mut gain = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let kappa = ctx.reduced_kernel(grid.r()[i], grid.r()[j])?;
                let g = sqrt_weight[i] * kappa * sqrt_weight[j];
                gain[i * n + j] = g;
                gain[j * n + i] = g;
            }
        }
        let equilibrium: Vec<f64> = sqrt_weight
            .iter()
            .zip(&radial_meq)
            .map(|(sw, m)| sw * libm::sqrt(*m))
            .collect();
        Self::finish(n, gain, sigma, equilibrium, sqrt_weight)
    }

    /// Full three-dimensional assembly on a cubic velocity grid. The kernel's
    /// integrable diagonal singularity enters through the exact integral of
    /// 1/|v - v'| over the grid cell.
    pub fn assemble_full(ctx: &KernelContext, grid: &VelocityGrid) -> Result<Self> {
        let n = grid.len();
        if n > DENSE_NODE_BUDGET {
            return Err(CoreError::AssemblyOverflow { nodes: n, budget: DENSE_NODE_BUDGET });
        }
        let meq = equilibrium_distribution(&ctx.params, &ctx.consts);
        let w = grid.weight();
        let sw = libm::sqrt(w);
        let sqrt_weight = vec![sw; n];
        let nodes = grid.nodes();
        let sigma: Vec<f64> = nodes.iter().map(|&v| ctx.sigma(v)).collect();
        let mut gain = vec![0.0; n * n];
        for i in 0..n {
            gain[i * n + i] = ctx.diagonal_cell_integral(nodes[i], grid.h);
            for j in (i + 1)..n {
                let g = w * ctx.symmetrized_kernel(nodes[i], nodes[j])?;
                gain[i * n + j] = g;
                gain[j * n + i] = g;
            }
        }
        let equilibrium: Vec<f64> = nodes.iter().map(|&v| sw * libm::sqrt(meq.eval(v))).collect();
        Self::finish(n, gain, sigma, equilibrium, sqrt_weight)
    }

    /// Rebuild a radial operator from a cached, already rescaled gain matrix.
    /// The frame vectors (sigma, equilibrium, weights) are recomputed from the
    /// context bit-for-bit; the checksum recorded at assembly time must match
    /// the reconstruction, which catches both payload corruption and a cache
    /// that was produced under different parameters.
    pub fn from_cached_radial_gain(
        ctx: &KernelContext,
        grid: &RadialGrid,
        gain: Vec<f64>,
        meta: AssemblyMeta,
    ) -> Result<Self> {
        let n = grid.len();
        if gain.len() != n * n || meta.nodes != n {
            return Err(CoreError::GridMismatch { expected: n * n, got: gain.len() });
        }
        let meq = equilibrium_distribution(&ctx.params, &ctx.consts);
        let sqrt_weight: Vec<f64> = grid.w().iter().map(|&w| libm::sqrt(w)).collect();
        let sigma: Vec<f64> = grid.r().iter().map(|&r| ctx.sigma_radial(r)).collect();
        let equilibrium: Vec<f64> = sqrt_weight
            .iter()
            .zip(grid.r())
            .map(|(sw, &r)| {
                sw * libm::sqrt(meq.eval(ctx.params.u1 + crate::math::Vec3::new(r, 0.0, 0.0)))
            })
            .collect();
        let mut checksum = checksum::fnv1a64_f64(checksum::FNV_OFFSET, &gain);
        checksum = checksum::fnv1a64_f64(checksum, &sigma);
        checksum = checksum::fnv1a64_f64(checksum, &equilibrium);
        if checksum != meta.checksum {
            return Err(CoreError::InvalidParameter(format!(
                "cached operator checksum {checksum:016x} does not match recorded {:016x}",
                meta.checksum
            )));
        }
        Ok(SymmetricOperator { n, gain, sigma, equilibrium, sqrt_weight, meta })
    }

    fn finish(
        n: usize,
        mut gain: Vec<f64>,
        sigma: Vec<f64>,
        equilibrium: Vec<f64>,
        sqrt_weight: Vec<f64>,
    ) -> Result<Self> {
        let raw = equilibrium_defect(n, &gain, &sigma, &equilibrium);
        let (iterations, residual, rescale_min, rescale_max) =
            sinkhorn_rescale(n, &mut gain, &sigma, &equilibrium)?;
        let mut checksum = checksum::fnv1a64_f64(checksum::FNV_OFFSET, &gain);
        checksum = checksum::fnv1a64_f64(checksum, &sigma);
        checksum = checksum::fnv1a64_f64(checksum, &equilibrium);
        Ok(SymmetricOperator {
            n,
            gain,
            sigma,
            equilibrium,
            sqrt_weight,
            meta: AssemblyMeta {
                nodes: n,
                sinkhorn_iterations: iterations,
                sinkhorn_residual: residual,
                raw_equilibrium_residual: raw,
                rescale_min,
                rescale_max,
                checksum,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Square-root-weighted equilibrium, the exact discrete null direction.
    pub fn equilibrium(&self) -> &[f64] {
        &self.equilibrium
    }

    pub fn sqrt_weight(&self) -> &[f64] {
        &self.sqrt_weight
    }

    pub fn gain_matrix(&self) -> &[f64] {
        &self.gain
    }

    /// out = Gain x - sigma x.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.apply_gain(x, out)?;
        for i in 0..self.n {
            out[i] -= self.sigma[i] * x[i];
        }
        Ok(())
    }

    pub fn apply_gain(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.n || out.len() != self.n {
            return Err(CoreError::GridMismatch { expected: self.n, got: x.len().min(out.len()) });
        }
        for i in 0..self.n {
            let row = &self.gain[i * self.n..(i + 1) * self.n];
            out[i] = row.iter().zip(x).map(|(g, xj)| g * xj).sum();
        }
        Ok(())
    }

    /// Dense T = Gain - diag(sigma), row-major.
    pub fn dense(&self) -> Vec<f64> {
        let mut t = self.gain.clone();
        for i in 0..self.n {
            t[i * self.n + i] -= self.sigma[i];
        }
        t
    }

    /// |Gain e - sigma e|_2 / |e|_2 after rescaling; rounding-level by
    /// construction.
    pub fn conservation_residual(&self) -> f64 {
        equilibrium_defect(self.n, &self.gain, &self.sigma, &self.equilibrium)
    }

    /// Largest upper disc edge over columns of the operator written in mass
    /// coordinates, where each off-diagonal entry is positive and column sums
    /// match sigma. Exact conservation makes every disc close at zero, so
    /// this reports pure rounding and certifies the spectrum is nonpositive.
    pub fn gershgorin_upper(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for j in 0..self.n {
            let mut edge = -self.sigma[j];
            for i in 0..self.n {
                edge += self.equilibrium[i] * self.gain[i * self.n + j] / self.equilibrium[j];
            }
            worst = worst.max(edge);
        }
        worst
    }

    /// Quadratic form x^T T x evaluated through the operator.
    pub fn dirichlet_quadratic(&self, x: &[f64]) -> Result<f64> {
        let mut tx = vec![0.0; self.n];
        self.apply(x, &mut tx)?;
        Ok(x.iter().zip(&tx).map(|(a, b)| a * b).sum())
    }

    /// The same form as a negative sum of squared differences,
    /// -1/2 sum_ij S_ij (phi_i - phi_j)^2 with phi = x/e and
    /// S_ij = Gain_ij e_i e_j. Agrees with `dirichlet_quadratic` because the
    /// rescaled gain balances sigma against e; manifestly nonpositive.
    pub fn dirichlet_difference(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return Err(CoreError::GridMismatch { expected: self.n, got: x.len() });
        }
        let phi: Vec<f64> = x.iter().zip(&self.equilibrium).map(|(xi, ei)| xi / ei).collect();
        let mut total = 0.0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let d = phi[i] - phi[j];
                total += self.gain[i * self.n + j] * self.equilibrium[i] * self.equilibrium[j] * d * d;
            }
        }
        Ok(-total)
    }
}

fn equilibrium_defect(n: usize, gain: &[f64], sigma: &[f64], e: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let ge: f64 = gain[i * n..(i + 1) * n].iter().zip(e).map(|(g, ej)| g * ej).sum();
        let d = ge - sigma[i] * e[i];
        num += d * d;
        den += e[i] * e[i];
    }
    libm::sqrt(num / den)
}

/// Neumaier-compensated dot product; the rescaling iteration measures ratios
/// at rounding level, which a naive sum of thousands of terms would mask.
fn dot_compensated(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for (x, y) in a.iter().zip(b) {
        let term = x * y;
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Symmetric diagonal rescaling driving Gain e toward sigma e. Returns
/// (iterations, final residual, min rescale, max rescale) and rewrites the
/// gain in place, keeping it bitwise symmetric.
fn sinkhorn_rescale(
    n: usize,
    gain: &mut [f64],
    sigma: &[f64],
    e: &[f64],
) -> Result<(usize, f64, f64, f64)> {
    let b: Vec<f64> = sigma.iter().zip(e).map(|(s, ei)| s * ei * ei).collect();
    if b.iter().any(|&bi| !(bi > 0.0) || !bi.is_finite()) {
        return Err(CoreError::InvalidParameter(format!(
            "rescaling target must be positive and finite, min entry {:e}",
            b.iter().cloned().fold(f64::INFINITY, f64::min)
        )));
    }
    let mut y = e.to_vec();
    let mut gy = vec![0.0; n];
    let mut iterations = 0;
    let mut residual;
    loop {
        for i in 0..n {
            gy[i] = dot_compensated(&gain[i * n..(i + 1) * n], &y);
        }
        residual = y
            .iter()
            .zip(&gy)
            .zip(&b)
            .map(|((yi, gyi), bi)| (yi * gyi / bi - 1.0).abs())
            .fold(0.0f64, f64::max);
        if residual < SINKHORN_TOL {
            break;
        }
        if iterations >= SINKHORN_MAX_ITERATIONS {
            return Err(CoreError::NonConvergence { iterations, residual });
        }
        iterations += 1;
        for i in 0..n {
            y[i] *= libm::sqrt(b[i] / (y[i] * gy[i]));
        }
    }
    let d: Vec<f64> = y.iter().zip(e).map(|(yi, ei)| yi / ei).collect();
    for i in 0..n {
        for j in i..n {
            let g = d[i] * gain[i * n + j] * d[j];
            gain[i * n + j] = g;
            gain[j * n + i] = g;
        }
    }
    let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
    let dmax = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((iterations, residual, dmin, dmax))
}

#[derive(Debug, Clone)]
pub struct GainResidual {
    pub max_rel: f64,
    pub checked: usize,
}

/// Matrix-free check that the discrete gain reproduces sigma M on the
/// equilibrium, measured as the worst relative error over interior nodes
/// (|v - u1| within three thermal widths, where M is not yet negligible).
pub fn matrix_free_gain_residual(ctx: &KernelContext, grid: &VelocityGrid) -> Result<GainResidual> {
    let meq = equilibrium_distribution(&ctx.params, &ctx.consts);
    let f: Vec<f64> = grid.nodes().iter().map(|&v| meq.eval(v)).collect();
    let gain = ctx.gain_apply(grid, &f)?;
    let tw = thermal_width(&ctx.params, &ctx.consts);
    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    for (i, &v) in grid.nodes().iter().enumerate() {
        if (v - ctx.params.u1).norm() > 3.0 * tw {
            continue;
        }
        let expect = ctx.sigma(v) * f[i];
        max_rel = max_rel.max((gain[i] - expect).abs() / expect);
        checked += 1;
    }
    if checked == 0 {
        return Err(CoreError::InsufficientSamples { have: 0, need: 1 });
    }
    Ok(GainResidual { max_rel, checked })
}
