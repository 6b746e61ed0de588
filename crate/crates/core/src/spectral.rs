//! Spectrum of the assembled collision operator: spectral gap, essential
//! threshold, negativity and coercivity certificates, and the isotropy
//! classification used on full 3D grids.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::grid::VelocityGrid;
use crate::kernel::KernelContext;
use crate::linalg;
use crate::operator::SymmetricOperator;
use crate::rng::Sampler;

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sector {
    RadialIsotropic,
    Full3d,
}

impl Sector {
    pub fn as_str(self) -> &'static str {
        match self {
            Sector::RadialIsotropic => "radial-isotropic",
            Sector::Full3d => "full-3d",
        }
    }
}

pub struct SpectrumResult {
    pub sector: Sector,
    /// Top-k eigenvalues, descending; lambda_0 ~ 0 leads.
    pub eigenvalues: Vec<f64>,
    /// Verified |T x - lambda x|_2 for each reported pair.
    pub residuals: Vec<f64>,
    /// Every computed eigenvalue (all n on the dense path), descending.
    pub all_eigenvalues: Vec<f64>,
    /// gap = lambda_0 - lambda_1; equals |lambda_1| up to the lambda_0 defect.
    pub gap: f64,
    /// Essential-spectrum threshold sigma(u1).
    pub nu0: f64,
    pub eigvec0: Vec<f64>,
    pub norm_t: f64,
}

/// Full dense decomposition; reports the top `k` pairs after verifying their
/// residuals against `tol * |T|`. The reference path for radial operators.
pub fn eigendecompose_dense(
    op: &SymmetricOperator,
    ctx: &KernelContext,
    k: usize,
    tol: f64,
) -> Result<SpectrumResult> {
    if k < 2 || k > op.len() {
        return Err(CoreError::InvalidParameter(alloc::format!(
            "eigenpair count must lie in [2, {}], got {k}",
            op.len()
        )));
    }
    let n = op.len();
    let eig = linalg::eigh(n, &op.dense())?;
    let norm_t = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut eigenvalues = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    let mut tx = vec![0.0; n];
    for j in 0..k {
        let idx = n - 1 - j;
        let lambda = eig.values[idx];
        let x = eig.vector(idx);
        op.apply(x, &mut tx)?;
        let r = libm::sqrt(
            tx.iter()
                .zip(x)
                .map(|(txi, xi)| (txi - lambda * xi) * (txi - lambda * xi))
                .sum::<f64>(),
        );
        if r > tol * norm_t {
            return Err(CoreError::NonConvergence { iterations: j, residual: r });
        }
        eigenvalues.push(lambda);
        residuals.push(r);
    }
    let mut all_eigenvalues = eig.values.clone();
    all_eigenvalues.reverse();
    let mut eigvec0 = eig.vector(n - 1).to_vec();
    orient(&mut eigvec0, op.equilibrium());
    Ok(SpectrumResult {
        sector: Sector::RadialIsotropic,
        gap: eigenvalues[0] - eigenvalues[1],
        nu0: ctx.nu0(),
        eigvec0,
        norm_t,
        eigenvalues,
        residuals,
        all_eigenvalues,
    })
}

/// Iterative decomposition through the operator product only; used for 3D
/// grids where a dense factorization is not warranted. Deterministic for a
/// fixed seed.
pub fn eigendecompose_lanczos(
    op: &SymmetricOperator,
    ctx: &KernelContext,
    k: usize,
    tol: f64,
    seed: u64,
) -> Result<SpectrumResult> {
    let n = op.len();
    let apply = |x: &[f64], out: &mut [f64]| {
        op.apply(x, out).expect("dimension fixed by construction");
    };
    // |T| from the other end of the spectrum: largest eigenvalue of -T
    let bottom = linalg::lanczos_largest(
        n,
        |x, out| {
            apply(x, out);
            for v in out.iter_mut() {
                *v = -*v;
            }
        },
        2,
        n.min(420),
        1e-8,
        seed ^ 0x9e3779b97f4a7c15,
    )?;
    let norm_t = bottom.values[0].abs();
    let top = linalg::lanczos_largest(n, apply, k, n.min(420), tol, seed)?;
    let mut eigenvalues = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    let mut tx = vec![0.0; n];
    for j in 0..k {
        let lambda = top.values[j];
        let x = top.vector(j);
        op.apply(x, &mut tx)?;
        let r = libm::sqrt(
            tx.iter()
                .zip(x)
                .map(|(txi, xi)| (txi - lambda * xi) * (txi - lambda * xi))
                .sum::<f64>(),
        );
        if r > tol * norm_t {
            return Err(CoreError::NonConvergence { iterations: top.iterations, residual: r });
        }
        eigenvalues.push(lambda);
        residuals.push(r);
    }
    let mut eigvec0 = top.vector(0).to_vec();
    orient(&mut eigvec0, op.equilibrium());
    Ok(SpectrumResult {
        sector: Sector::Full3d,
        gap: eigenvalues[0] - eigenvalues[1],
        nu0: ctx.nu0(),
        eigvec0,
        norm_t,
        all_eigenvalues: eigenvalues.clone(),
        eigenvalues,
        residuals,
    })
}

/// Fix the sign so the leading eigenvector points along the equilibrium.
fn orient(x: &mut [f64], reference: &[f64]) {
    let overlap: f64 = x.iter().zip(reference).map(|(a, b)| a * b).sum();
    if overlap < 0.0 {
        for v in x.iter_mut() {
            *v = -*v;
        }
    }
}

/// Cosine of the leading eigenvector against the discrete equilibrium
/// direction; 1 up to discretization error.
pub fn equilibrium_cosine(spec: &SpectrumResult, op: &SymmetricOperator) -> f64 {
    let e = op.equilibrium();
    let num: f64 = spec.eigvec0.iter().zip(e).map(|(a, b)| a * b).sum();
    let den = libm::sqrt(
        spec.eigvec0.iter().map(|v| v * v).sum::<f64>() * e.iter().map(|v| v * v).sum::<f64>(),
    );
    (num / den).abs()
}

pub struct SpectrumReport {
    pub nu0: f64,
    pub lambda1: f64,
    pub gap: f64,
    /// Computed eigenvalues in (-nu0, 0]: physical discrete spectrum,
    /// including the tail accumulating at the threshold from above.
    pub discrete: Vec<f64>,
    /// Computed eigenvalues <= -nu0: the finite-grid image of the essential
    /// range; individually meaningless truncation artifacts.
    pub cluster: Vec<f64>,
    /// Eigenvalues above -0.98 nu0, safely clear of the threshold.
    pub well_separated: Vec<f64>,
    /// Distance from the last well-separated eigenvalue to the next one.
    pub separation_margin: f64,
    pub coercivity_max_rayleigh: f64,
    pub coercivity_ok: bool,
    pub coercivity_samples: usize,
}

/// Threshold classification plus the random-subspace coercivity check:
/// for `samples` random vectors orthogonal to the leading eigenvector the
/// Rayleigh quotient must stay below lambda_1 + 1e-8 |T|.
pub fn spectrum_report(
    spec: &SpectrumResult,
    op: &SymmetricOperator,
    samples: usize,
    seed: u64,
) -> Result<SpectrumReport> {
    if spec.eigenvalues.len() < 2 {
        return Err(CoreError::InsufficientSamples { have: spec.eigenvalues.len(), need: 2 });
    }
    let nu0 = spec.nu0;
    let mut discrete = Vec::new();
    let mut cluster = Vec::new();
    for &lambda in &spec.all_eigenvalues {
        if lambda > -nu0 {
            discrete.push(lambda);
        } else {
            cluster.push(lambda);
        }
    }
    let well: Vec<f64> =
        spec.all_eigenvalues.iter().cloned().filter(|&l| l > -0.98 * nu0).collect();
    let separation_margin = match (well.last(), spec.all_eigenvalues.get(well.len())) {
        (Some(&last), Some(&next)) => last - next,
        _ => f64::INFINITY,
    };
    let lambda1 = spec.eigenvalues[1];
    let bound = lambda1 + 1e-8 * spec.norm_t;
    let n = op.len();
    let mut rng = Sampler::stream(seed, 1);
    let v0 = &spec.eigvec0;
    let v0_norm_sq: f64 = v0.iter().map(|v| v * v).sum();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let mut x: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let c: f64 = x.iter().zip(v0).map(|(a, b)| a * b).sum::<f64>() / v0_norm_sq;
        for (xi, v0i) in x.iter_mut().zip(v0) {
            *xi -= c * v0i;
        }
        let quad = op.dirichlet_quadratic(&x)?;
        let norm_sq: f64 = x.iter().map(|v| v * v).sum();
        worst = worst.max(quad / norm_sq);
    }
    Ok(SpectrumReport {
        nu0,
        lambda1,
        gap: spec.gap,
        discrete,
        cluster,
        well_separated: well,
        separation_margin,
        coercivity_max_rayleigh: worst,
        coercivity_ok: worst <= bound,
        coercivity_samples: samples,
    })
}

/// Shell-coherence score of a 3D eigenvector: cosine squared against its own
/// radial shell averages. Isotropic modes score near 1, angular modes near 0.
pub fn isotropy_score(grid: &VelocityGrid, x: &[f64]) -> Result<f64> {
    if x.len() != grid.len() {
        return Err(CoreError::GridMismatch { expected: grid.len(), got: x.len() });
    }
    let bins = 30usize;
    let rmax = grid.l * libm::sqrt(3.0);
    let mut sums = vec![0.0f64; bins];
    let mut counts = vec![0usize; bins];
    let mut bin_of = vec![0usize; x.len()];
    for (i, &v) in grid.nodes().iter().enumerate() {
        let r = (v - grid.u1).norm();
        let b = ((r / rmax) * bins as f64) as usize;
        let b = b.min(bins - 1);
        bin_of[i] = b;
        sums[b] += x[i];
        counts[b] += 1;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let mut dot = 0.0;
    let mut iso_sq = 0.0;
    let mut x_sq = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        let iso = means[bin_of[i]];
        dot += iso * xi;
        iso_sq += iso * iso;
        x_sq += xi * xi;
    }
    if iso_sq == 0.0 || x_sq == 0.0 {
        return Ok(0.0);
    }
    Ok(dot * dot / (iso_sq * x_sq))
}

pub fn is_isotropic(score: f64) -> bool {
    score > 0.5
}
