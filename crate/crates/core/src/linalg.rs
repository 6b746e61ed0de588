//! Symmetric eigensolvers: Householder tridiagonalization with implicit-shift
//! QL for dense matrices, and Lanczos with full reorthogonalization for
//! matrix-free products. No external linear algebra dependency; the spectra
//! here are small enough that textbook O(n^3) routines are comfortable.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::rng::Sampler;

/// Full eigendecomposition of a symmetric matrix.
pub struct Eigen {
    pub n: usize,
    /// Ascending.
    pub values: Vec<f64>,
    /// Row k holds the unit eigenvector belonging to `values[k]`.
    vectors: Vec<f64>,
}

impl Eigen {
    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.n..(k + 1) * self.n]
    }
}

/// Dense symmetric eigendecomposition (matrix is copied, row-major).
pub fn eigh(n: usize, matrix: &[f64]) -> Result<Eigen> {
    if matrix.len() != n * n {
        return Err(CoreError::GridMismatch { expected: n * n, got: matrix.len() });
    }
    let scale = matrix.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((matrix[i * n + j] - matrix[j * n + i]).abs());
        }
    }
    if asym > 1e-10 * scale.max(1e-300) {
        return Err(CoreError::InvalidParameter(format!(
            "matrix is not symmetric, max off-pair deviation {asym:e}"
        )));
    }
    let mut z = matrix.to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut z, &mut d, &mut e);
    ql_implicit(n, &mut d, &mut e, &mut z)?;
    // sort ascending and lay eigenvectors out contiguously
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let mut values = Vec::with_capacity(n);
    let mut vectors = vec![0.0; n * n];
    for (k, &src) in order.iter().enumerate() {
        values.push(d[src]);
        for j in 0..n {
            vectors[k * n + j] = z[j * n + src];
        }
    }
    Ok(Eigen { n, values, vectors })
}

/// Householder reduction to tridiagonal form with accumulated transform.
/// On exit `z` holds the orthogonal matrix Q, `d` the diagonal and `e` the
/// subdiagonal (e[0] unused).
fn tridiagonalize(n: usize, z: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = (0..=l).map(|k| z[i * n + k].abs()).sum();
            if scale == 0.0 {
                e[i] = z[i * n + l];
            } else {
                for k in 0..=l {
                    z[i * n + k] /= scale;
                    h += z[i * n + k] * z[i * n + k];
                }
                let f = z[i * n + l];
                let g = if f >= 0.0 { -libm::sqrt(h) } else { libm::sqrt(h) };
                e[i] = scale * g;
                h -= f * g;
                z[i * n + l] = f - g;
                let mut fsum = 0.0;
                for j in 0..=l {
                    z[j * n + i] = z[i * n + j] / h;
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += z[j * n + k] * z[i * n + k];
                    }
                    for k in (j + 1)..=l {
                        g += z[k * n + j] * z[i * n + k];
                    }
                    e[j] = g / h;
                    fsum += e[j] * z[i * n + j];
                }
                let hh = fsum / (h + h);
                for j in 0..=l {
                    let f = z[i * n + j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        z[j * n + k] -= f * e[k] + g * z[i * n + k];
                    }
                }
            }
        } else {
            e[i] = z[i * n + l];
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        if d[i] != 0.0 {
            for j in 0..i {
                let mut g = 0.0;
                for k in 0..i {
                    g += z[i * n + k] * z[k * n + j];
                }
                for k in 0..i {
                    z[k * n + j] -= g * z[k * n + i];
                }
            }
        }
        d[i] = z[i * n + i];
        z[i * n + i] = 1.0;
        for j in 0..i {
            z[j * n + i] = 0.0;
            z[i * n + j] = 0.0;
        }
    }
}

/// Implicit-shift QL on a tridiagonal (d, e), rotating the columns of `z`.
fn ql_implicit(n: usize, d: &mut [f64], e: &mut [f64], z: &mut [f64]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0usize;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(CoreError::NonConvergence { iterations: iter, residual: e[l].abs() });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = libm::hypot(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + if g >= 0.0 { r } else { -r });
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = libm::hypot(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = z[k * n + i + 1];
                    z[k * n + i + 1] = s * z[k * n + i] + c * f;
                    z[k * n + i] = c * z[k * n + i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Largest eigenpairs from a Lanczos run with full reorthogonalization.
pub struct TopEigen {
    pub n: usize,
    /// Descending; the k algebraically largest Ritz values.
    pub values: Vec<f64>,
    vectors: Vec<f64>,
    pub iterations: usize,
    /// Residual norm estimates |beta_m s_m| per returned pair.
    pub residual_estimates: Vec<f64>,
}

impl TopEigen {
    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.n..(k + 1) * self.n]
    }
}

/// Lanczos iteration for the k algebraically largest eigenpairs of a
/// symmetric operator given only as a product. Full reorthogonalization
/// keeps the basis orthonormal; an invariant subspace triggers a seeded
/// random restart vector, so the run is deterministic for a fixed seed.
pub fn lanczos_largest<F>(
    n: usize,
    mut apply: F,
    k: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<TopEigen>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if k < 2 {
        return Err(CoreError::InvalidParameter(format!("need at least 2 eigenpairs, got {k}")));
    }
    if k > n {
        return Err(CoreError::InvalidParameter(format!(
            "requested {k} eigenpairs of an operator of dimension {n}"
        )));
    }
    let m_cap = max_iter.min(n);
    if m_cap < k {
        return Err(CoreError::InvalidParameter(format!(
            "iteration cap {m_cap} cannot resolve {k} eigenpairs"
        )));
    }
    let mut rng = Sampler::stream(seed, 0);
    let mut basis: Vec<f64> = Vec::with_capacity(m_cap * n);
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new(); // beta[j] couples q_j and q_{j+1}
    let mut q = random_unit(&mut rng, n);
    let mut work = vec![0.0; n];
    let mut norm_est = 0.0f64;

    loop {
        let j = alpha.len();
        basis.extend_from_slice(&q);
        apply(&q, &mut work);
        let a: f64 = dot(&q, &work);
        alpha.push(a);
        norm_est = norm_est.max(a.abs());
        // r = A q_j - alpha_j q_j - beta_{j-1} q_{j-1}, then full reorth twice
        for i in 0..n {
            work[i] -= a * q[i];
        }
        if j > 0 && beta[j - 1] != 0.0 {
            let prev = &basis[(j - 1) * n..j * n];
            for i in 0..n {
                work[i] -= beta[j - 1] * prev[i];
            }
        }
        for _ in 0..2 {
            for row in 0..=j {
                let qi = &basis[row * n..(row + 1) * n];
                let c: f64 = dot(qi, &work);
                for i in 0..n {
                    work[i] -= c * qi[i];
                }
            }
        }
        let b = libm::sqrt(dot(&work, &work));
        let done = alpha.len() >= m_cap;
        if !done && b > 1e-13 * norm_est.max(1e-300) {
            beta.push(b);
            for i in 0..n {
                q[i] = work[i] / b;
            }
        } else if !done {
            // invariant subspace found: deflate by restarting on a fresh
            // random direction orthogonal to everything computed so far
            beta.push(0.0);
            q = random_unit(&mut rng, n);
            for _ in 0..2 {
                for row in 0..=j {
                    let qi = &basis[row * n..(row + 1) * n];
                    let c: f64 = dot(qi, &q);
                    for i in 0..n {
                        q[i] -= c * qi[i];
                    }
                }
            }
            let nq = libm::sqrt(dot(&q, &q));
            if nq < 1e-8 {
                // the whole space is exhausted
                break;
            }
            for v in q.iter_mut() {
                *v /= nq;
            }
        }
        let m = alpha.len();
        if m >= k && (m % 8 == 0 || done) {
            if let Some(result) = try_extract(n, &basis, &alpha, &beta, k, tol, norm_est)? {
                return Ok(result);
            }
            if done {
                let last = try_extract(n, &basis, &alpha, &beta, k, f64::INFINITY, norm_est)?
                    .expect("extraction with infinite tolerance always yields a result");
                return Err(CoreError::NonConvergence {
                    iterations: m,
                    residual: last.residual_estimates.iter().cloned().fold(0.0, f64::max),
                });
            }
        }
        if done {
            break;
        }
    }
    Err(CoreError::NonConvergence { iterations: alpha.len(), residual: f64::NAN })
}

/// Ritz extraction from the current tridiagonal; `None` when the top-k
/// residual estimates have not reached the tolerance yet.
fn try_extract(
    n: usize,
    basis: &[f64],
    alpha: &[f64],
    beta: &[f64],
    k: usize,
    tol: f64,
    norm_est: f64,
) -> Result<Option<TopEigen>> {
    let m = alpha.len();
    let mut d = alpha.to_vec();
    let mut e = vec![0.0; m];
    for i in 1..m {
        e[i] = beta[i - 1];
    }
    let mut z = vec![0.0; m * m];
    for i in 0..m {
        z[i * m + i] = 1.0;
    }
    ql_implicit(m, &mut d, &mut e, &mut z)?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).unwrap());
    let top = &order[..k];
    let tail_beta = if m <= beta.len() { beta[m - 1] } else { 0.0 };
    let mut residuals = Vec::with_capacity(k);
    for &idx in top {
        residuals.push((tail_beta * z[(m - 1) * m + idx]).abs());
    }
    let worst = residuals.iter().cloned().fold(0.0f64, f64::max);
    if worst > tol * norm_est.max(1e-300) {
        return Ok(None);
    }
    let mut values = Vec::with_capacity(k);
    let mut vectors = vec![0.0; k * n];
    for (out, &idx) in top.iter().enumerate() {
        values.push(d[idx]);
        let dst = &mut vectors[out * n..(out + 1) * n];
        for row in 0..m {
            let s = z[row * m + idx];
            let qi = &basis[row * n..(row + 1) * n];
            for i in 0..n {
                dst[i] += s * qi[i];
            }
        }
        // normalize; restarts keep the basis orthonormal so this is ~1
        let nv = libm::sqrt(dot(dst, dst));
        for v in dst.iter_mut() {
            *v /= nv;
        }
    }
    Ok(Some(TopEigen { n, values, vectors, iterations: m, residual_estimates: residuals }))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_unit(rng: &mut Sampler, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
    let norm = libm::sqrt(dot(&v, &v));
    for x in v.iter_mut() {
        *x /= norm;
    }
    v
}
