//! Velocity-space grids: a truncated cell-centered cube for the full 3-D
//! operator and a midpoint radial grid for the isotropic sector.

use crate::error::{CoreError, Result};
use crate::gas::{DerivedConstants, GasParameters};
use crate::math::Vec3;
use alloc::format;
use alloc::vec::Vec;

/// Thermal width used to size boxes: the larger of the background and
/// equilibrium velocity scales.
pub fn thermal_width(p: &GasParameters, c: &DerivedConstants) -> f64 {
    libm::sqrt((p.theta1 / p.m1).max(c.theta_sharp / p.m))
}

/// N^3 cell centers of [u1-L, u1+L]^3, uniform weight h^3 per node.
#[derive(Debug, Clone)]
pub struct VelocityGrid {
    pub n: usize,
    pub l: f64,
    pub h: f64,
    pub u1: Vec3,
    nodes: Vec<Vec3>,
}

impl VelocityGrid {
    /// `l_tw` is the half-width in thermal-width multiples.
    pub fn build(l_tw: f64, n: usize, p: &GasParameters, c: &DerivedConstants) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(CoreError::InvalidParameter(format!(
                "grid size must be even and at least 8, got {n}"
            )));
        }
        if !(l_tw > 0.0 && l_tw.is_finite()) {
            return Err(CoreError::InvalidParameter(format!("grid half-width must be positive, got {l_tw}")));
        }
        let l = l_tw * thermal_width(p, c);
        let h = 2.0 * l / n as f64;
        let mut nodes = Vec::with_capacity(n * n * n);
        let axis: Vec<f64> = (0..n).map(|k| -l + (k as f64 + 0.5) * h).collect();
        for &x in &axis {
            for &y in &axis {
                for &z in &axis {
                    nodes.push(p.u1 + Vec3::new(x, y, z));
                }
            }
        }
        Ok(VelocityGrid { n, l, h, u1: p.u1, nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> Vec3 {
        self.nodes[i]
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    /// Uniform quadrature weight (cell volume).
    pub fn weight(&self) -> f64 {
        self.h * self.h * self.h
    }

    /// Offset coordinate along one axis for index k (cell center, no drift).
    pub fn axis_offset(&self, k: usize) -> f64 {
        -self.l + (k as f64 + 0.5) * self.h
    }

    pub fn index_of(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.n + iy) * self.n + iz
    }

    /// Quadrature of a density sampled on the nodes.
    pub fn integrate(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.len() {
            return Err(CoreError::GridMismatch { expected: self.len(), got: f.len() });
        }
        Ok(crate::math::pairwise_sum(f) * self.weight())
    }
}

/// Midpoint nodes on (0, L] with weights for the measure r^2 dr. Physical
/// integrals of isotropic densities carry an explicit 4*pi factor.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    pub nr: usize,
    pub l: f64,
    pub dr: f64,
    r: Vec<f64>,
    w: Vec<f64>,
}

impl RadialGrid {
    pub fn build(l_tw: f64, nr: usize, p: &GasParameters, c: &DerivedConstants) -> Result<Self> {
        if nr < 8 {
            return Err(CoreError::InvalidParameter(format!("radial grid needs at least 8 nodes, got {nr}")));
        }
        if !(l_tw > 0.0 && l_tw.is_finite()) {
            return Err(CoreError::InvalidParameter(format!("grid half-width must be positive, got {l_tw}")));
        }
        let l = l_tw * thermal_width(p, c);
        let dr = l / nr as f64;
        let r: Vec<f64> = (0..nr).map(|k| (k as f64 + 0.5) * dr).collect();
        let w: Vec<f64> = r.iter().map(|&rk| rk * rk * dr).collect();
        Ok(RadialGrid { nr, l, dr, r, w })
    }

    pub fn len(&self) -> usize {
        self.nr
    }

    pub fn is_empty(&self) -> bool {
        self.nr == 0
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    /// 4*pi * sum w_k f_k: the velocity-space integral of an isotropic density.
    pub fn integrate(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.nr {
            return Err(CoreError::GridMismatch { expected: self.nr, got: f.len() });
        }
        let terms: Vec<f64> = self.w.iter().zip(f).map(|(&w, &fi)| w * fi).collect();
        Ok(4.0 * core::f64::consts::PI * crate::math::pairwise_sum(&terms))
    }
}
