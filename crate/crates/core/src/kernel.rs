//! Closed-form scattering kernel of the gain operator, its symmetrized form,
//! the collision frequency, and the integral bound scans built on them.
//!
//! Everything here is a pointwise or one-dimensional quadrature evaluation;
//! grid-coupled assembly lives in `operator`.

use crate::error::{CoreError, Result};
use crate::gas::{equilibrium_distribution, DerivedConstants, GasParameters, Maxwellian};
use crate::grid::VelocityGrid;
use crate::math::{self, Vec3};
use alloc::format;
use alloc::vec::Vec;

/// exp(x) underflows to zero near x = -745.13; kernel values are floored there
/// so that ratios of two tail evaluations stay finite.
const EXP_FLOOR: f64 = -745.0;

/// Units-of-measure constants fixed by calibration against the direct
/// collision integral. `uncalibrated` starts both at one; `calibrate` in
/// `oracle` resolves them.
#[derive(Debug, Clone)]
pub struct KernelContext {
    pub params: GasParameters,
    pub consts: DerivedConstants,
    /// Overall kernel normalization.
    pub norm_c: f64,
    /// Normalization of the collision frequency relative to `norm_c`.
    pub c_sigma: f64,
}

impl KernelContext {
    pub fn uncalibrated(params: GasParameters) -> Result<Self> {
        let consts = crate::gas::derive_constants(&params)?;
        Ok(KernelContext { params, consts, norm_c: 1.0, c_sigma: 1.0 })
    }

    pub fn with_normalization(params: GasParameters, norm_c: f64, c_sigma: f64) -> Result<Self> {
        if !(norm_c > 0.0 && norm_c.is_finite() && c_sigma > 0.0 && c_sigma.is_finite()) {
            return Err(CoreError::InvalidParameter(format!(
                "normalization constants must be positive and finite, got {norm_c}, {c_sigma}"
            )));
        }
        let consts = crate::gas::derive_constants(&params)?;
        Ok(KernelContext { params, consts, norm_c, c_sigma })
    }

    pub fn equilibrium(&self) -> Maxwellian {
        equilibrium_distribution(&self.params, &self.consts)
    }

    /// m1 / (8 theta1), the scale of every exponent below.
    fn a8(&self) -> f64 {
        self.params.m1 / (8.0 * self.params.theta1)
    }

    fn gauss_norm(&self) -> f64 {
        libm::sqrt(self.params.m1 / (2.0 * core::f64::consts::PI * self.params.theta1))
    }

    /// norm_c * prefactor: the constant in front of the raw kernel.
    pub fn amplitude(&self) -> f64 {
        self.norm_c * self.consts.prefactor
    }

    /// Raw kernel before normalization and Jacobian prefactor.
    pub fn raw_kernel(&self, v: Vec3, v2: Vec3) -> Result<f64> {
        let (rho, dd) = rho_d(v, v2, self.params.u1)?;
        let opm = 1.0 + self.consts.mu;
        let t = opm * rho + dd / rho;
        let arg = (-self.a8() * t * t).max(EXP_FLOOR);
        Ok(self.gauss_norm() / rho * libm::exp(arg))
    }

    /// Kernel of the gain operator: amplitude * raw kernel.
    pub fn effective_kernel(&self, v: Vec3, v2: Vec3) -> Result<f64> {
        Ok(self.amplitude() * self.raw_kernel(v, v2)?)
    }

    /// ln of `effective_kernel`, unfloored, for tail-safe ratios.
    pub fn log_effective_kernel(&self, v: Vec3, v2: Vec3) -> Result<f64> {
        let (rho, dd) = rho_d(v, v2, self.params.u1)?;
        let opm = 1.0 + self.consts.mu;
        let t = opm * rho + dd / rho;
        Ok(libm::log(self.amplitude() * self.gauss_norm()) - libm::log(rho) - self.a8() * t * t)
    }

    /// Conjugation of the effective kernel by the square-root equilibrium.
    /// Closed form; symmetric in its arguments.
    pub fn symmetrized_kernel(&self, v: Vec3, v2: Vec3) -> Result<f64> {
        let (rho, dd) = rho_d(v, v2, self.params.u1)?;
        let opm = 1.0 + self.consts.mu;
        let q = dd / rho;
        let arg = (-self.a8() * (opm * opm * rho * rho + q * q)).max(EXP_FLOOR);
        Ok(self.amplitude() * self.gauss_norm() / rho * libm::exp(arg))
    }

    /// Same object computed from the definition M^{-1/2}(v) K(v,v2) M^{1/2}(v2);
    /// kept as an independent route for cross-checks.
    pub fn symmetrized_kernel_by_definition(&self, v: Vec3, v2: Vec3) -> Result<f64> {
        let meq = self.equilibrium();
        let half_log_ratio = 0.5 * (meq.log_eval(v2) - meq.log_eval(v));
        let log_k = self.log_effective_kernel(v, v2)?;
        Ok(libm::exp((log_k + half_log_ratio).max(EXP_FLOOR)))
    }

    /// |K(v,v2) M(v2) - K(v2,v) M(v)| / K(v,v2) M(v2), switching to log-space
    /// evaluation when the products leave the normal floating range.
    pub fn detailed_balance_residual(&self, v: Vec3, v2: Vec3) -> Result<f64> {
        let meq = self.equilibrium();
        let forward = self.effective_kernel(v, v2)? * meq.eval(v2);
        let backward = self.effective_kernel(v2, v)? * meq.eval(v);
        if forward > 1e-280 && forward.is_finite() && backward.is_finite() {
            return Ok((forward - backward).abs() / forward);
        }
        let lf = self.log_effective_kernel(v, v2)? + meq.log_eval(v2);
        let lb = self.log_effective_kernel(v2, v)? + meq.log_eval(v);
        Ok(libm::expm1(lb - lf).abs())
    }

    /// Collision frequency sigma(v); depends on v only through |v - u1|.
    pub fn sigma(&self, v: Vec3) -> f64 {
        self.sigma_radial((v - self.params.u1).norm())
    }

    /// sigma as a function of the radius r = |v - u1|.
    pub fn sigma_radial(&self, r: f64) -> f64 {
        let m1 = self.params.m1;
        let th = self.params.theta1;
        let scale = libm::sqrt(th / m1);
        let braces = if r < 1e-8 * scale {
            // limit r -> 0 of the expression below
            8.0 * th / m1
        } else {
            let gauss = 4.0 * th / m1 * libm::exp(-m1 * r * r / (2.0 * th));
            // int_0^{2r} exp(-m1 t^2 / (8 theta1)) dt in closed form
            let tail = libm::sqrt(2.0 * core::f64::consts::PI * th / m1)
                * math::erf(r * libm::sqrt(m1 / (2.0 * th)));
            gauss + (2.0 * r + 2.0 * th / (m1 * r)) * tail
        };
        self.norm_c * self.c_sigma * self.gauss_norm() * braces
    }

    /// sigma at the background drift velocity: the spectral accumulation point.
    pub fn nu0(&self) -> f64 {
        self.sigma_radial(0.0)
    }

    /// Reduced gain kernel on radii: the polar-angle integral of the
    /// symmetrized kernel over a shell, so that for isotropic densities
    /// int G(v,v') f(|v'-u1|) dv' = int kappa(r,r') f(r') r'^2 dr'.
    pub fn reduced_kernel(&self, r: f64, r2: f64) -> Result<f64> {
        if !(r > 0.0 && r2 > 0.0) {
            return Err(CoreError::NegativeInput { value: r.min(r2) });
        }
        let a8 = self.a8();
        let opm = 1.0 + self.consts.mu;
        let dd = r * r - r2 * r2;
        let lo = (r - r2).abs();
        let hi = r + r2;
        // 1/s from the kernel cancels against the shell Jacobian, leaving
        // int_lo^hi exp(-a8 [(1+mu)^2 s^2 + (D/s)^2]) ds
        let f = |s: f64| {
            let q = dd / s;
            libm::exp((-a8 * (opm * opm * s * s + q * q)).max(EXP_FLOOR))
        };
        let (nodes, weights) = math::gauss_legendre(48);
        // the integrand peaks where the exponent is smallest, at s* = sqrt(|D|/(1+mu))
        let sstar = libm::sqrt(dd.abs() / opm);
        let integral = if sstar > lo && sstar < hi {
            math::gl_integrate(&f, lo, sstar, &nodes, &weights)
                + math::gl_integrate(&f, sstar, hi, &nodes, &weights)
        } else {
            math::gl_integrate(&f, lo, hi, &nodes, &weights)
        };
        Ok(2.0 * core::f64::consts::PI / (r * r2) * self.amplitude() * self.gauss_norm() * integral)
    }

    /// Cell-average of the effective kernel over the singular diagonal cell of
    /// an h-spaced cubic grid, already integrated (do not multiply by h^3).
    /// The 1/rho factor integrates to c1 * h^2 over a cube; the remaining
    /// angular profile averages to S(r) = int_0^1 exp(-b c^2) dc with
    /// b = m1 r^2 / (2 theta1).
    pub fn diagonal_cell_integral(&self, v: Vec3, h: f64) -> f64 {
        let r = (v - self.params.u1).norm();
        let b = self.params.m1 * r * r / (2.0 * self.params.theta1);
        let s = if b < 1e-4 {
            1.0 - b / 3.0 + b * b / 10.0
        } else {
            let sb = libm::sqrt(b);
            libm::sqrt(core::f64::consts::PI) * math::erf(sb) / (2.0 * sb)
        };
        self.amplitude() * self.gauss_norm() * s * math::cube_inverse_distance_integral() * h * h
    }

    /// Gain operator applied to a grid density by direct quadrature, with the
    /// diagonal cell handled by `diagonal_cell_integral`.
    pub fn gain_apply(&self, grid: &VelocityGrid, f: &[f64]) -> Result<Vec<f64>> {
        let mut out = alloc::vec![0.0; grid.len()];
        self.gain_apply_rows(grid, f, 0..grid.len(), &mut out)?;
        Ok(out)
    }

    /// Row-range worker behind `gain_apply`; `out` must span the full grid.
    pub fn gain_apply_rows(
        &self,
        grid: &VelocityGrid,
        f: &[f64],
        rows: core::ops::Range<usize>,
        out: &mut [f64],
    ) -> Result<()> {
        if f.len() != grid.len() || out.len() != grid.len() {
            return Err(CoreError::GridMismatch { expected: grid.len(), got: f.len().min(out.len()) });
        }
        if f.iter().any(|x| !x.is_finite()) {
            return Err(CoreError::InvalidParameter("density must be finite on the grid".into()));
        }
        let w = grid.weight();
        let amp = self.amplitude() * self.gauss_norm();
        let a8 = self.a8();
        let opm = 1.0 + self.consts.mu;
        let u1 = self.params.u1;
        let nodes = grid.nodes();
        for i in rows {
            let vi = nodes[i];
            let di = vi - u1;
            let ri2 = di.norm_sq();
            let mut acc = 0.0;
            for (j, (&vj, &fj)) in nodes.iter().zip(f).enumerate() {
                if j == i {
                    continue;
                }
                let dv = vi - vj;
                let rho2 = dv.norm_sq();
                let rho = libm::sqrt(rho2);
                let dd = ri2 - (vj - u1).norm_sq();
                let t = opm * rho + dd / rho;
                let arg = (-a8 * t * t).max(EXP_FLOOR);
                acc += libm::exp(arg) / rho * fj;
            }
            out[i] = amp * acc * w + self.diagonal_cell_integral(vi, grid.h) * f[i];
        }
        Ok(())
    }

    /// Loss term on a grid density: sigma(v) f(v) per node.
    pub fn loss_apply(&self, grid: &VelocityGrid, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != grid.len() {
            return Err(CoreError::GridMismatch { expected: grid.len(), got: f.len() });
        }
        Ok(grid.nodes().iter().zip(f).map(|(&v, &fv)| self.sigma(v) * fv).collect())
    }

    /// Scan of I_{p,q}(r) = int G(v_r, v')^p (1 + |v'-u1|)^{-q} dv' together
    /// with the product I * (1+r)^{q+1}, the quantity that must stay bounded.
    /// Radii are given in thermal widths. Integrability requires p in (0,3).
    pub fn carleman_scan(&self, p: f64, q: f64, radii_tw: &[f64]) -> Result<Vec<CarlemanRow>> {
        if !(p > 0.0 && p < 3.0) {
            return Err(CoreError::InvalidParameter(format!(
                "kernel power must lie in (0,3), got {p}"
            )));
        }
        if q < 0.0 {
            return Err(CoreError::InvalidParameter(format!("decay exponent must be nonnegative, got {q}")));
        }
        if radii_tw.is_empty() {
            return Err(CoreError::InsufficientSamples { have: 0, need: 1 });
        }
        let tw = crate::grid::thermal_width(&self.params, &self.consts);
        radii_tw
            .iter()
            .map(|&rt| {
                if !(rt > 0.0) {
                    return Err(CoreError::NegativeInput { value: rt });
                }
                let r = rt * tw;
                let integral = self.kernel_power_moment(r, p, q);
                Ok(CarlemanRow { r, integral, product: integral * libm::pow(1.0 + r, q + 1.0) })
            })
            .collect()
    }

    /// (2 pi / r) c^p int r' (1+r')^{-q} [int s^{1-p} e^{-p a8 ((1+mu)^2 s^2 + D^2/s^2)} ds] dr'
    /// with panels split at the diagonal r' = r and the inner exponent minimum.
    fn kernel_power_moment(&self, r: f64, p: f64, q: f64) -> f64 {
        let a8 = self.a8();
        let opm = 1.0 + self.consts.mu;
        let c = self.amplitude() * self.gauss_norm();
        let s1 = libm::sqrt(self.params.theta1 / self.params.m1);
        let (nodes, weights) = math::gauss_legendre(64);
        let inner = |rp: f64| {
            let dd = r * r - rp * rp;
            let f = |s: f64| {
                let u = dd / s;
                libm::pow(s, 1.0 - p) * libm::exp((-p * a8 * (opm * opm * s * s + u * u)).max(EXP_FLOOR))
            };
            let lo = (r - rp).abs().max(1e-14);
            let hi = r + rp;
            let sstar = libm::sqrt(dd.abs() / opm);
            if sstar > lo && sstar < hi {
                math::gl_integrate(&f, lo, sstar, &nodes, &weights)
                    + math::gl_integrate(&f, sstar, hi, &nodes, &weights)
            } else {
                math::gl_integrate(&f, lo, hi, &nodes, &weights)
            }
        };
        let outer = |rp: f64| rp * libm::pow(1.0 + rp, -q) * inner(rp);
        let hi = r + 14.0 * s1;
        let delta = (0.5 * s1).min(0.2 * s1 + 0.05 * r);
        let mut cuts = alloc::vec![1e-12, (r - delta).max(1e-12), r, r + delta, hi];
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        let total: f64 = cuts
            .windows(2)
            .map(|pair| math::gl_integrate(&outer, pair[0], pair[1], &nodes, &weights))
            .sum();
        2.0 * core::f64::consts::PI / r * libm::pow(c, p) * total
    }

    /// Supremum over source radii r in (0, rho] of the gain mass scattered
    /// beyond radius rho: sup_r int_{|v'-u1| > rho} K(v', v_r) dv'.
    pub fn tail_mass_sup(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(CoreError::InvalidParameter(format!("tail radius must be positive, got {rho}")));
        }
        let s1 = libm::sqrt(self.params.theta1 / self.params.m1);
        let samples = 25;
        let r0 = 0.02 * s1;
        let mut sup: f64 = 0.0;
        for k in 0..samples {
            let r = r0 + (rho - r0) * k as f64 / (samples - 1) as f64;
            sup = sup.max(self.tail_mass_at(r, rho)?);
        }
        Ok(sup)
    }

    /// int_{|v'-u1| > rho} K(v', v_r) dv' for one source radius r.
    pub fn tail_mass_at(&self, r: f64, rho: f64) -> Result<f64> {
        if !(r > 0.0 && rho > 0.0) {
            return Err(CoreError::NegativeInput { value: r.min(rho) });
        }
        let a8 = self.a8();
        let opm = 1.0 + self.consts.mu;
        let c = self.amplitude() * self.gauss_norm();
        let s1 = libm::sqrt(self.params.theta1 / self.params.m1);
        let (nodes, weights) = math::gauss_legendre(64);
        let inner = |rp: f64| {
            // gain kernel into v' carries the exponent ((1+mu) s + (r'^2 - r^2)/s)^2
            let dp = rp * rp - r * r;
            let f = |s: f64| {
                let t = opm * s + dp / s;
                libm::exp((-a8 * t * t).max(EXP_FLOOR))
            };
            let lo = (r - rp).abs();
            let hi = r + rp;
            let sstar = libm::sqrt(dp.abs() / opm);
            if sstar > lo && sstar < hi {
                math::gl_integrate(&f, lo, sstar, &nodes, &weights)
                    + math::gl_integrate(&f, sstar, hi, &nodes, &weights)
            } else {
                math::gl_integrate(&f, lo, hi, &nodes, &weights)
            }
        };
        let outer = |rp: f64| rp * inner(rp);
        let rmax = rho + 12.0 * s1 + 2.0 * r;
        let mut cuts = if rho < r {
            alloc::vec![rho, r, r + 2.0 * s1, rmax]
        } else {
            alloc::vec![rho, rho + 2.0 * s1, rho + 6.0 * s1, rmax]
        };
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        let total: f64 = cuts
            .windows(2)
            .map(|pair| math::gl_integrate(&outer, pair[0], pair[1], &nodes, &weights))
            .sum();
        Ok(2.0 * core::f64::consts::PI * c / r * total)
    }

    /// Closed form of sup_v int G(v,v')^p dv'; the supremum sits at v = u1
    /// where the shell reduction collapses: exponent b = p a8 ((1+mu)^2 + 1).
    pub fn symmetrized_power_mass_at_center(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 3.0) {
            return Err(CoreError::InvalidParameter(format!("moment order must lie in (0,3), got {p}")));
        }
        let opm = 1.0 + self.consts.mu;
        let b = p * self.a8() * (opm * opm + 1.0);
        let c = self.amplitude() * self.gauss_norm();
        Ok(4.0 * core::f64::consts::PI * libm::pow(c, p) * 0.5 * libm::tgamma((3.0 - p) / 2.0)
            * libm::pow(b, -(3.0 - p) / 2.0))
    }

    /// Analytic upper bound for the same quantity obtained by dropping the
    /// nonnegative D^2/rho^2 part of the exponent.
    pub fn symmetrized_power_mass_bound(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 3.0) {
            return Err(CoreError::InvalidParameter(format!("moment order must lie in (0,3), got {p}")));
        }
        let opm = 1.0 + self.consts.mu;
        let b = p * self.a8() * opm * opm;
        let c = self.amplitude() * self.gauss_norm();
        Ok(4.0 * core::f64::consts::PI * libm::pow(c, p) * 0.5 * libm::tgamma((3.0 - p) / 2.0)
            * libm::pow(b, -(3.0 - p) / 2.0))
    }
}

/// One row of a Carleman-type scan.
#[derive(Debug, Clone, Copy)]
pub struct CarlemanRow {
    pub r: f64,
    pub integral: f64,
    /// integral * (1 + r)^{q+1}, the quantity that must stay bounded.
    pub product: f64,
}

/// Distance rho = |v - v2| and shifted-energy difference D = |v-u1|^2 - |v2-u1|^2.
fn rho_d(v: Vec3, v2: Vec3, u1: Vec3) -> Result<(f64, f64)> {
    let rho2 = (v - v2).norm_sq();
    if rho2 == 0.0 {
        return Err(CoreError::SingularInput);
    }
    let dd = (v - u1).norm_sq() - (v2 - u1).norm_sq();
    Ok((libm::sqrt(rho2), dd))
}
