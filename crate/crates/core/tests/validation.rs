//! Cross-module consistency checks that go deeper than the per-module unit
//! tests: structural reductions, full-grid vs radial agreement, conservation
//! certificates, and calibration across the parameter domain.

use ilbk_core::gas::{derive_constants, GasParameters};
use ilbk_core::grid::{RadialGrid, VelocityGrid};
use ilbk_core::math::Vec3;
use ilbk_core::operator::SymmetricOperator;
use ilbk_core::oracle::{calibrate, calibrated_context};
use ilbk_core::rng::Sampler;
use ilbk_core::spectral::{eigendecompose_dense, is_isotropic, isotropy_score};

fn defaults() -> GasParameters {
    GasParameters { m: 1.0, m1: 1.0, eps: 0.5, theta1: 1.0, u1: Vec3::ZERO }
}

/// Elastic equal-mass collisions leave the effective mass shift exactly zero,
/// so the whole pipeline must coincide bit for bit with a context whose shift
/// is hard-set to zero.
#[test]
fn elastic_equal_mass_reduces_bitwise() {
    let p = GasParameters { eps: 1.0, ..defaults() };
    let c = derive_constants(&p).unwrap();
    assert_eq!(c.mu, 0.0);
    assert_eq!(c.beta, 0.0);
    assert_eq!(c.theta_sharp, p.theta1);

    let ctx = calibrated_context(&p).unwrap();
    let mut ctx0 = ctx.clone();
    ctx0.consts.mu = 0.0;

    let grid = RadialGrid::build(6.0, 96, &p, &c).unwrap();
    let op = SymmetricOperator::assemble_radial(&ctx, &grid).unwrap();
    let op0 = SymmetricOperator::assemble_radial(&ctx0, &grid).unwrap();
    assert_eq!(op.gain_matrix(), op0.gain_matrix());
    assert_eq!(op.sigma(), op0.sigma());

    let spec = eigendecompose_dense(&op, &ctx, 4, 1e-10).unwrap();
    let spec0 = eigendecompose_dense(&op0, &ctx0, 4, 1e-10).unwrap();
    assert_eq!(spec.eigenvalues[1], spec0.eigenvalues[1]);
}

/// The full velocity grid spectrum at N=12: null mode isotropic, then an
/// anisotropic triple (one mode per axis), then the first isotropic excited
/// mode, which must track the radial-sector gap.
#[test]
fn full_grid_isotropic_gap_tracks_radial() {
    let p = defaults();
    let ctx = calibrated_context(&p).unwrap();
    let c = ctx.consts;

    let grid = VelocityGrid::build(6.0, 12, &p, &c).unwrap();
    let op = SymmetricOperator::assemble_full(&ctx, &grid).unwrap();
    let eig = ilbk_core::linalg::eigh(op.len(), &op.dense()).unwrap();
    let top = |k: usize| eig.values[op.len() - 1 - k];
    let top_vec = |k: usize| eig.vector(op.len() - 1 - k);
    let norm_t = eig.values[0].abs().max(top(0).abs());

    assert!(top(0).abs() <= 1e-10 * norm_t);
    assert!(is_isotropic(isotropy_score(&grid, top_vec(0)).unwrap()));

    // axis-aligned cubic grid: the dipole modes form an exact triple
    let spread = (top(1) - top(3)).abs() / top(2).abs();
    assert!(spread <= 1e-8, "dipole triple split {spread:.2e}");
    for k in 1..4 {
        let score = isotropy_score(&grid, top_vec(k)).unwrap();
        assert!(!is_isotropic(score), "mode {k} unexpectedly isotropic, score {score:.2}");
    }

    let iso1 = top(4);
    let score = isotropy_score(&grid, top_vec(4)).unwrap();
    assert!(is_isotropic(score), "first excited isotropic mode, score {score:.2}");
    approx::assert_relative_eq!(iso1, -3.768550, max_relative = 1e-4);

    let radial = RadialGrid::build(6.0, 256, &p, &c).unwrap();
    let rop = SymmetricOperator::assemble_radial(&ctx, &radial).unwrap();
    let rspec = eigendecompose_dense(&rop, &ctx, 2, 1e-10).unwrap();
    let dev = (iso1 / rspec.eigenvalues[1] - 1.0).abs();
    assert!(dev <= 0.05, "isotropic gap off radial gap by {dev:.3}");
}

/// Mass-coordinate Gershgorin discs and the equilibrium defect both certify
/// conservation after rescaling, on the radial and the full grid alike.
#[test]
fn conservation_certificates_close_at_zero() {
    let p = defaults();
    let ctx = calibrated_context(&p).unwrap();
    let c = ctx.consts;

    let radial = RadialGrid::build(6.0, 128, &p, &c).unwrap();
    let rop = SymmetricOperator::assemble_radial(&ctx, &radial).unwrap();
    let full = VelocityGrid::build(6.0, 10, &p, &c).unwrap();
    let fop = SymmetricOperator::assemble_full(&ctx, &full).unwrap();

    for op in [&rop, &fop] {
        let sigma_max = op.sigma().iter().cloned().fold(0.0, f64::max);
        assert!(op.conservation_residual() <= 1e-13);
        assert!(op.gershgorin_upper() <= 1e-12 * sigma_max);
    }
    // interior corrections stay near one; cube corners truncate the gain
    // integral where the equilibrium weight is negligible, so the full grid
    // is allowed a larger compensating factor there
    assert!(rop.meta.rescale_min > 0.9 && rop.meta.rescale_max < 1.1);
    assert!(fop.meta.rescale_min > 0.5 && fop.meta.rescale_max < 2.5);
}

/// The closed-form kernel and collision frequency must match their defining
/// integrals across the admissible parameter domain, not only at defaults;
/// calibration records the measured ratios.
#[test]
fn calibration_holds_across_parameters() {
    let mut rng = Sampler::stream(0x5eed_ca11, 0);
    for _ in 0..5 {
        let p = GasParameters {
            m: 0.4 + 2.0 * rng.uniform(),
            m1: 0.4 + 2.0 * rng.uniform(),
            eps: 0.15 + 0.85 * rng.uniform(),
            theta1: 0.5 + 1.5 * rng.uniform(),
            u1: rng.gaussian3(Vec3::ZERO, 0.5),
        };
        let rec = calibrate(&p).unwrap();
        assert!(rec.kernel_rel_dev <= 1e-6, "kernel ratio dev {:.2e}", rec.kernel_rel_dev);
        assert!(rec.sigma_rel_dev <= 1e-6, "sigma ratio dev {:.2e}", rec.sigma_rel_dev);
    }
}

/// The spectral gap must not move between adjacent radial resolutions.
#[test]
fn gap_is_stable_under_small_refinement() {
    let p = defaults();
    let ctx = calibrated_context(&p).unwrap();
    let c = ctx.consts;
    let mut gaps = Vec::new();
    for nr in [224usize, 256] {
        let grid = RadialGrid::build(6.0, nr, &p, &c).unwrap();
        let op = SymmetricOperator::assemble_radial(&ctx, &grid).unwrap();
        gaps.push(eigendecompose_dense(&op, &ctx, 2, 1e-10).unwrap().eigenvalues[1]);
    }
    let drift = (gaps[0] / gaps[1] - 1.0).abs();
    assert!(drift <= 0.02, "gap drift {drift:.2e} between adjacent resolutions");
}

/// Light test particles (m < eps * m1) flip the sign of the effective mass
/// shift; the kernel stays integrable and the scans stay finite.
#[test]
fn scans_remain_bounded_for_negative_effective_mass() {
    let p = GasParameters { m: 0.4, ..defaults() };
    let c = derive_constants(&p).unwrap();
    assert!(c.mu_negative_flag);
    assert!(c.mu < 0.0);

    let ctx = calibrated_context(&p).unwrap();
    let radii = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 15.0];
    for (pp, qq) in [(2.0, 0.0), (1.0, 2.0)] {
        let rows = ctx.carleman_scan(pp, qq, &radii).unwrap();
        assert!(rows.iter().all(|r| r.product.is_finite() && r.product > 0.0));
    }
    let tail = ctx.tail_mass_sup(1.0).unwrap();
    assert!(tail.is_finite() && tail > 0.0);
}
