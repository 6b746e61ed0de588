//! Seeded, reproducible sampling. ChaCha8 streams keyed by (seed, stream id)
//! so chunked estimators give bit-identical results at any thread count.

use crate::math::Vec3;
use core::f64::consts::PI;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Sampler {
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler { rng: ChaCha8Rng::seed_from_u64(seed), spare_normal: None }
    }

    /// Independent stream for chunk `id`; disjoint from every other id under
    /// the same seed (distinct ChaCha stream counters).
    pub fn stream(seed: u64, id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id);
        Sampler { rng, spare_normal: None }
    }

    /// Uniform in the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    /// Standard normal via Box-Muller; the spare variate is cached.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let (s, c) = libm::sincos(2.0 * PI * u2);
        self.spare_normal = Some(r * s);
        r * c
    }

    /// Gaussian 3-vector with mean `u` and scalar variance `var` per axis.
    pub fn gaussian3(&mut self, u: Vec3, var: f64) -> Vec3 {
        let s = libm::sqrt(var);
        u + Vec3::new(self.standard_normal(), self.standard_normal(), self.standard_normal()) * s
    }

    /// Uniform direction on the unit sphere.
    pub fn unit_sphere(&mut self) -> Vec3 {
        let z = 2.0 * self.uniform() - 1.0;
        let phi = 2.0 * PI * self.uniform();
        let r = libm::sqrt((1.0 - z * z).max(0.0));
        let (s, c) = libm::sincos(phi);
        Vec3::new(r * c, r * s, z)
    }

    /// Uniform direction on the hemisphere { n : n.axis >= 0 }.
    pub fn unit_hemisphere(&mut self, axis: Vec3) -> Vec3 {
        let n = self.unit_sphere();
        if n.dot(axis) < 0.0 {
            -n
        } else {
            n
        }
    }
}
