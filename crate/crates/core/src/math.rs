//! Scalar and small-vector math: `erf` to 1e-14, Gauss-Legendre rules,
//! deterministic pairwise summation, and the singular-cell geometry constant.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3([x, y, z])
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        libm::sqrt(self.norm_sq())
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3([
            self.0[1] * o.0[2] - self.0[2] * o.0[1],
            self.0[2] * o.0[0] - self.0[0] * o.0[2],
            self.0[0] * o.0[1] - self.0[1] * o.0[0],
        ])
    }

    /// Right-handed orthonormal frame (axis, e1, e2); `axis` need not be unit.
    /// Falls back to the z axis when `axis` is numerically zero.
    pub fn frame(self) -> (Vec3, Vec3, Vec3) {
        let n = self.norm();
        let a = if n > 1e-300 { self * (1.0 / n) } else { Vec3::new(0.0, 0.0, 1.0) };
        let t = if libm::fabs(a.0[0]) < 0.9 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 1.0, 0.0) };
        let mut e1 = a.cross(t);
        e1 = e1 * (1.0 / e1.norm());
        let e2 = a.cross(e1);
        (a, e1, e2)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        self * -1.0
    }
}

/// Error function via the positive-term confluent series
/// erf(x) = (2/sqrt(pi)) x e^{-x^2} sum_k (2x^2)^k / (2k+1)!!.
/// No term cancellation, so the relative error stays below 1e-15 on all of R;
/// |x| >= 6 saturates (1 - erf(6) < 3e-17).
pub fn erf(x: f64) -> f64 {
    let ax = libm::fabs(x);
    if ax >= 6.0 {
        return if x > 0.0 { 1.0 } else { -1.0 };
    }
    let x2 = x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0u32;
    loop {
        k += 1;
        term *= 2.0 * x2 / (2.0 * k as f64 + 1.0);
        sum += term;
        if term < 1e-18 * sum || k > 200 {
            break;
        }
    }
    2.0 / libm::sqrt(PI) * x * libm::exp(-x2) * sum
}

/// Gauss-Legendre nodes and weights on [-1, 1], Newton-refined to ~1e-15.
/// Nodes are mirrored exactly about 0 so symmetric integrands sum symmetrically.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = alloc::vec![0.0; n];
    let mut w = alloc::vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let legendre = |xi: f64| {
            let (mut p0, mut p1) = (1.0, xi);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * xi * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (xi * p1 - p0) / (xi * xi - 1.0);
            (p1, dp)
        };
        let mut xi = libm::cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        for _ in 0..100 {
            let (p, dp) = legendre(xi);
            let dx = p / dp;
            xi -= dx;
            if libm::fabs(dx) < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(xi);
        let wi = 2.0 / ((1.0 - xi * xi) * dp * dp);
        x[i] = if 2 * i + 1 == n { 0.0 } else { -libm::fabs(xi) };
        w[i] = wi;
        x[n - 1 - i] = -x[i];
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Integrate `f` over [a, b] with an `n`-point Gauss-Legendre rule.
pub fn gl_integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    if b <= a {
        return 0.0;
    }
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = 0.0;
    for (&x, &w) in nodes.iter().zip(weights) {
        acc += w * f(c + h * x);
    }
    acc * h
}

/// Deterministic pairwise summation; association order depends only on length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        s
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// The integral of 1/|z| over a unit cube centered at the origin:
/// c1 = 6 ln((1+sqrt 3)/sqrt 2) - pi/2, so a cell of side h contributes c1*h^2.
pub fn cube_inverse_distance_integral() -> f64 {
    6.0 * libm::log((1.0 + libm::sqrt(3.0)) / libm::sqrt(2.0)) - PI / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // reference values computed with 50-digit arithmetic
    const ERF_TABLE: &[(f64, f64)] = &[
        (1e-8, 1.12837916709551254e-8),
        (0.01, 0.0112834155558496169),
        (0.1, 0.112462916018284892),
        (0.5, 0.520499877813046538),
        (0.7071067811865476, 0.682689492137085897),
        (1.0, 0.842700792949714869),
        (1.5, 0.966105146475310727),
        (2.0, 0.995322265018952734),
        (2.5, 0.999593047982555041),
        (3.0, 0.999977909503001415),
        (4.0, 0.9999999845827421),
        (5.0, 0.99999999999846254),
        (5.8, 0.999999999999999764),
    ];

    #[test]
    fn erf_matches_reference_table() {
        for &(x, want) in ERF_TABLE {
            let got = erf(x);
            assert!(
                (got - want).abs() <= 1e-14 * want.abs().max(1e-30),
                "erf({x}) = {got:e}, want {want:e}"
            );
            assert_abs_diff_eq!(erf(-x), -want, epsilon = 1e-15);
        }
        assert_eq!(erf(0.0), 0.0);
        assert_eq!(erf(7.0), 1.0);
        assert_eq!(erf(-9.0), -1.0);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [2usize, 5, 16, 48, 96] {
            let (x, w) = gauss_legendre(n);
            assert_eq!(x.len(), n);
            // weights sum to the interval length
            assert_abs_diff_eq!(pairwise_sum(&w), 2.0, epsilon = 1e-13);
            // symmetric nodes
            for i in 0..n {
                assert_abs_diff_eq!(x[i], -x[n - 1 - i], epsilon = 0.0);
            }
            // exact on degree 2n-1: integral of x^(2n-2) over [-1,1]
            let p = 2 * n - 2;
            let exact = 2.0 / (p as f64 + 1.0);
            let got: f64 = x
                .iter()
                .zip(&w)
                .map(|(&xi, &wi)| wi * libm::pow(xi, p as f64))
                .sum();
            assert_abs_diff_eq!(got, exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn gl_integrate_gaussian() {
        let (x, w) = gauss_legendre(64);
        let v = gl_integrate(|t| libm::exp(-t * t / 2.0), 0.0, 8.0, &x, &w);
        assert_abs_diff_eq!(v, libm::sqrt(core::f64::consts::PI / 2.0), epsilon = 1e-13);
    }

    #[test]
    fn cube_constant_matches_quadrature() {
        // pyramid reduction: c1 = (3/2) * int_{[-1/2,1/2]^2} (x^2+y^2+1/4)^{-1/2}
        let (x, w) = gauss_legendre(96);
        let mut acc = 0.0;
        for (&xi, &wi) in x.iter().zip(&w) {
            for (&yj, &wj) in x.iter().zip(&w) {
                let xv = 0.5 * xi;
                let yv = 0.5 * yj;
                acc += wi * wj * 0.25 / libm::sqrt(xv * xv + yv * yv + 0.25);
            }
        }
        let c1 = 1.5 * acc;
        assert_abs_diff_eq!(c1, cube_inverse_distance_integral(), epsilon = 1e-10);
        assert_abs_diff_eq!(cube_inverse_distance_integral(), 2.3800773639795535, epsilon = 1e-15);
    }

    #[test]
    fn pairwise_sum_matches_exact() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64) * 0.001).collect();
        assert_abs_diff_eq!(pairwise_sum(&xs), 499.5, epsilon = 1e-9);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn vec3_ops() {
        let a = Vec3::new(1.0, 2.0, 3.0);
        let b = Vec3::new(-1.0, 0.5, 2.0);
        assert_eq!((a + b).0, [0.0, 2.5, 5.0]);
        assert_eq!((a - b).0, [2.0, 1.5, 1.0]);
        assert_eq!(a.dot(b), 6.0);
        assert_eq!((a * 2.0).0, [2.0, 4.0, 6.0]);
        assert_abs_diff_eq!(Vec3::new(3.0, 4.0, 0.0).norm(), 5.0, epsilon = 0.0);
    }
}
