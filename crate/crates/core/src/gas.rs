//! Physical parameters, derived collision constants, and Maxwellian densities.

use crate::error::{CoreError, Result};
use crate::math::Vec3;
use alloc::format;
use core::f64::consts::PI;

/// Test-particle mass `m`, background mass `m1`, restitution `eps` in (0,1],
/// background temperature `theta1` (energy units) and bulk velocity `u1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasParameters {
    pub m: f64,
    pub m1: f64,
    pub eps: f64,
    pub theta1: f64,
    pub u1: Vec3,
}

impl GasParameters {
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(CoreError::InvalidParameter(format!("m must be positive, got {}", self.m)));
        }
        if !(self.m1 > 0.0 && self.m1.is_finite()) {
            return Err(CoreError::InvalidParameter(format!("m1 must be positive, got {}", self.m1)));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(CoreError::InvalidParameter(format!("eps must lie in (0,1], got {}", self.eps)));
        }
        if !(self.theta1 > 0.0 && self.theta1.is_finite()) {
            return Err(CoreError::InvalidParameter(format!(
                "theta1 must be positive, got {}",
                self.theta1
            )));
        }
        if !self.u1.0.iter().all(|c| c.is_finite()) {
            return Err(CoreError::InvalidParameter("u1 must be finite".into()));
        }
        Ok(())
    }
}

/// Constants derived from the collision rule. `mu_negative_flag` marks the
/// regime m < eps*m1 where mu drops below zero (the kernel stays well defined
/// because 1+mu = (1-alpha(1-beta))/(alpha(1-beta)) + ... > 0 always).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub gammabar: f64,
    pub mu: f64,
    pub theta_sharp: f64,
    pub prefactor: f64,
    pub mu_negative_flag: bool,
}

pub fn derive_constants(p: &GasParameters) -> Result<DerivedConstants> {
    p.validate()?;
    let alpha = p.m1 / (p.m + p.m1);
    let beta = (1.0 - p.eps) / 2.0;
    // 1 - 2*beta = eps, so gamma = alpha*(1-beta)/eps
    let gamma = alpha * (1.0 - beta) / (1.0 - 2.0 * beta);
    let gammabar = (1.0 - alpha) * (1.0 - beta) / (1.0 - 2.0 * beta);
    // cancellation-free arrangements: 1 - alpha(1-beta) = (m + m1*beta)/(m+m1)
    // keeps mu and theta# accurate at extreme mass ratios
    let mu = (p.m - p.m1 * p.eps) / (p.m1 * (1.0 - beta));
    let theta_sharp = p.theta1 * p.m * (1.0 - beta) / (p.m + p.m1 * beta);
    let prefactor = 1.0 / (2.0 * p.eps * p.eps * gamma * gamma);
    let c = DerivedConstants {
        alpha,
        beta,
        gamma,
        gammabar,
        mu,
        theta_sharp,
        prefactor,
        mu_negative_flag: p.m < p.eps * p.m1,
    };
    // exponent identity m/(2*theta#) = m1*(1+mu)/(2*theta1); pure arithmetic,
    // so any violation beyond roundoff means corrupted inputs
    let lhs = p.m / (2.0 * theta_sharp);
    let rhs = p.m1 * (1.0 + mu) / (2.0 * p.theta1);
    if libm::fabs(lhs - rhs) > 1e-12 * libm::fabs(lhs) {
        return Err(CoreError::InvalidParameter(format!(
            "derived-constant identity violated: {lhs} vs {rhs}"
        )));
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maxwellian {
    pub mass: f64,
    pub theta: f64,
    pub u: Vec3,
}

impl Maxwellian {
    pub fn eval(&self, v: Vec3) -> f64 {
        let d = v - self.u;
        let a = self.mass / (2.0 * PI * self.theta);
        a * libm::sqrt(a) * libm::exp(-self.mass * d.norm_sq() / (2.0 * self.theta))
    }

    pub fn peak(&self) -> f64 {
        let a = self.mass / (2.0 * PI * self.theta);
        a * libm::sqrt(a)
    }

    /// ln of `eval`, usable where the density itself underflows.
    pub fn log_eval(&self, v: Vec3) -> f64 {
        let d = v - self.u;
        let a = self.mass / (2.0 * PI * self.theta);
        1.5 * libm::log(a) - self.mass * d.norm_sq() / (2.0 * self.theta)
    }
}

/// The unit-mass equilibrium of the collision operator: a Maxwellian at the
/// test-particle mass, temperature theta#, centered on the background drift.
pub fn equilibrium_distribution(p: &GasParameters, c: &DerivedConstants) -> Maxwellian {
    Maxwellian { mass: p.m, theta: c.theta_sharp, u: p.u1 }
}

pub fn background_distribution(p: &GasParameters) -> Maxwellian {
    Maxwellian { mass: p.m1, theta: p.theta1, u: p.u1 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn params(m: f64, m1: f64, eps: f64, theta1: f64) -> GasParameters {
        GasParameters { m, m1, eps, theta1, u1: Vec3::ZERO }
    }

    #[test]
    fn elastic_equal_mass_limit() {
        let c = derive_constants(&params(1.0, 1.0, 1.0, 1.0)).unwrap();
        assert_eq!(c.alpha, 0.5);
        assert_eq!(c.beta, 0.0);
        assert_eq!(c.gamma, 0.5);
        assert_eq!(c.mu, 0.0);
        assert_eq!(c.theta_sharp, 1.0);
        assert_eq!(c.prefactor, 2.0);
        assert!(!c.mu_negative_flag);
    }

    #[test]
    fn half_restitution_equal_mass() {
        let c = derive_constants(&params(1.0, 1.0, 0.5, 1.0)).unwrap();
        assert_abs_diff_eq!(c.beta, 0.25, epsilon = 0.0);
        assert_abs_diff_eq!(c.gamma, 0.75, epsilon = 1e-16);
        // 1+mu = 5/3 via the exponent identity, hence theta# = 0.6
        assert_relative_eq!(c.mu, 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(c.theta_sharp, 0.6, epsilon = 1e-15);
        assert_relative_eq!(c.prefactor, 1.0 / 0.28125, epsilon = 1e-15);
    }

    #[test]
    fn heavy_background_flips_mu_sign() {
        let c = derive_constants(&params(1.0, 4.0, 0.9, 1.0)).unwrap();
        assert_abs_diff_eq!(c.alpha, 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(c.alpha * (1.0 - c.beta), 0.76, epsilon = 1e-15);
        assert_relative_eq!(c.mu, (1.0 - 1.52) / 0.76, epsilon = 1e-12);
        assert!(c.mu < 0.0);
        assert!(c.mu_negative_flag);
        assert!(1.0 + c.mu > 0.0);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(derive_constants(&params(0.0, 1.0, 0.5, 1.0)).is_err());
        assert!(derive_constants(&params(1.0, -1.0, 0.5, 1.0)).is_err());
        assert!(derive_constants(&params(1.0, 1.0, 0.0, 1.0)).is_err());
        assert!(derive_constants(&params(1.0, 1.0, 1.2, 1.0)).is_err());
        assert!(derive_constants(&params(1.0, 1.0, 0.5, 0.0)).is_err());
        let e = derive_constants(&params(1.0, 1.0, 1.2, 1.0)).unwrap_err();
        assert!(alloc::format!("{e}").contains("eps must lie in (0,1]"));
    }

    #[test]
    fn maxwellian_values() {
        let mx = Maxwellian { mass: 1.0, theta: 1.0, u: Vec3::ZERO };
        let tau = 2.0 * core::f64::consts::PI;
        assert_relative_eq!(mx.eval(Vec3::ZERO), libm::pow(tau, -1.5), epsilon = 1e-16);
        assert_relative_eq!(
            mx.eval(Vec3::new(1.0, 0.0, 0.0)),
            libm::pow(tau, -1.5) * libm::exp(-0.5),
            epsilon = 1e-16
        );
        assert_eq!(mx.eval(Vec3::ZERO), mx.peak());
    }

    #[test]
    fn theta_sharp_ordering_and_monotonicity() {
        // theta# < theta1*(1+eps)/2 with equality only at eps=1, and
        // theta# increases with eps at fixed masses
        let mut last = 0.0;
        for i in 1..=10 {
            let eps = i as f64 / 10.0;
            let c = derive_constants(&params(1.0, 1.0, eps, 1.0)).unwrap();
            assert!(c.theta_sharp <= 1.0 * (1.0 + eps) / 2.0 + 1e-15);
            assert!(c.theta_sharp > last);
            last = c.theta_sharp;
        }
        assert_abs_diff_eq!(last, 1.0, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn exponent_identity_holds(
            m in 1e-3..1e3f64,
            m1 in 1e-3..1e3f64,
            eps in 1e-6..1.0f64,
            theta1 in 1e-3..1e3f64,
        ) {
            let p = params(m, m1, eps, theta1);
            let c = derive_constants(&p).unwrap();
            let lhs = p.m / (2.0 * c.theta_sharp);
            let rhs = p.m1 * (1.0 + c.mu) / (2.0 * p.theta1);
            prop_assert!((lhs - rhs).abs() <= 1e-14 * lhs.abs());
            prop_assert!(c.mu > -1.0);
            prop_assert!(2.0 + c.mu > 0.0);
            prop_assert!(c.theta_sharp > 0.0);
        }
    }
}
