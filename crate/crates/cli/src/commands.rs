use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context as _, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use ilbk_core::evolution::{self, Method};
use ilbk_core::gas::{derive_constants, equilibrium_distribution, Maxwellian};
use ilbk_core::grid::{thermal_width, RadialGrid, VelocityGrid};
use ilbk_core::kernel::KernelContext;
use ilbk_core::math::Vec3;
use ilbk_core::operator::{AssemblyMeta, SymmetricOperator};
use ilbk_core::oracle::{
    self, direct_collision, gain_kernel_quadrature, inverse_collision, pair_kinetic_energy,
    pair_momentum, qplus_mc, sigma_mc, sigma_quadrature,
};
use ilbk_core::rng::Sampler;
use ilbk_core::spectral::{eigendecompose_dense, spectrum_report};
use ilbk_core::transport::{commensurate_dt, SlabTransport};

use crate::artifact::{self, num, Csv};
use crate::cache;
use crate::config::{MethodKind, RunConfig};

pub struct Env<'a> {
    pub cfg: &'a RunConfig,
    pub out: &'a Path,
    pub threads: usize,
    pub hash: String,
}

pub struct Outcome {
    pub pass: bool,
    pub first_failure: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckRow {
    pub check: String,
    pub value: f64,
    pub target: String,
    pub pass: bool,
}

/// Check accumulator; every command funnels its verdicts through here so the
/// console lines, the JSON artifact, and the exit status cannot disagree.
#[derive(Default)]
struct Checks(Vec<CheckRow>);

impl Checks {
    fn push(&mut self, check: &str, value: f64, target: &str, pass: bool) {
        let tag = if pass { " ok " } else { "FAIL" };
        println!("  [{tag}] {check}: {value:.6e}  (target {target})");
        self.0.push(CheckRow { check: check.into(), value, target: target.into(), pass });
    }

    fn rows(&self) -> &[CheckRow] {
        &self.0
    }

    fn outcome(self) -> Outcome {
        let first_failure = self
            .0
            .iter()
            .find(|r| !r.pass)
            .map(|r| format!("{}: {:.6e} violates {}", r.check, r.value, r.target));
        Outcome { pass: first_failure.is_none(), first_failure }
    }
}

/// Deterministic fork-join map: results land by index, so the output is
/// identical for any thread count.
fn parallel_map<T: Send, F: Fn(usize) -> T + Sync>(count: usize, threads: usize, f: F) -> Vec<T> {
    let mut slots: Vec<Option<T>> = (0..count).map(|_| None).collect();
    if count == 0 {
        return Vec::new();
    }
    let chunk = count.div_ceil(threads.clamp(1, count));
    std::thread::scope(|s| {
        for (t, slab) in slots.chunks_mut(chunk).enumerate() {
            let f = &f;
            s.spawn(move || {
                for (i, slot) in slab.iter_mut().enumerate() {
                    *slot = Some(f(t * chunk + i));
                }
            });
        }
    });
    slots.into_iter().map(|o| o.expect("parallel_map filled every slot")).collect()
}

#[derive(Serialize, Deserialize)]
struct OracleBlock {
    samples: u64,
    mean: f64,
    se: f64,
    closed_form: f64,
    rel_dev: f64,
}

#[derive(Serialize, Deserialize)]
struct CalibrationArtifact {
    config_hash: String,
    m: f64,
    m1: f64,
    eps: f64,
    theta1: f64,
    u1: [f64; 3],
    norm_c: f64,
    c_sigma: f64,
    measured_norm_c: f64,
    measured_c_sigma: f64,
    kernel_rel_dev: f64,
    sigma_rel_dev: f64,
    gain_oracle: OracleBlock,
    sigma_oracle: OracleBlock,
    checks: Vec<CheckRow>,
}

/// Load the calibration artifact for this configuration and build the
/// normalized kernel context from it. Commands that evaluate the kernel or
/// sigma must go through here.
fn require_calibration(env: &Env) -> Result<KernelContext> {
    let path = env.out.join("calibration.json");
    if !path.exists() {
        bail!(
            "calibration artifact not found in {}; run `ilbk calibrate` first",
            env.out.display()
        );
    }
    let art: CalibrationArtifact = artifact::read_json(&path)?;
    if art.config_hash != env.hash {
        bail!(
            "calibration.json was produced under config hash {}, current hash is {}; re-run `ilbk calibrate`",
            art.config_hash,
            env.hash
        );
    }
    let p = env.cfg.params();
    // hash equality already pins the parameters; this guards edited artifacts
    if art.m != p.m
        || art.m1 != p.m1
        || art.eps != p.eps
        || art.theta1 != p.theta1
        || art.u1 != [p.u1.0[0], p.u1.0[1], p.u1.0[2]]
    {
        bail!("calibration.json parameters disagree with the configuration; re-run `ilbk calibrate`");
    }
    Ok(KernelContext::with_normalization(p, art.norm_c, art.c_sigma)?)
}

pub fn cmd_validate(env: &Env) -> Result<Outcome> {
    let p = env.cfg.params();
    let c = derive_constants(&p)?;
    let ctx = KernelContext::uncalibrated(p)?;
    let tw = thermal_width(&p, &c);
    let mut rng = Sampler::stream(env.cfg.seed, 101);
    let var = (1.5 * tw) * (1.5 * tw);

    let mut db = 0.0f64;
    let mut sym = 0.0f64;
    let mut restitution = 0.0f64;
    let mut momentum = 0.0f64;
    let mut energy_gain = f64::NEG_INFINITY;
    let mut round_trip = 0.0f64;
    for _ in 0..2000 {
        let v = rng.gaussian3(p.u1, var);
        let w = rng.gaussian3(p.u1, var);
        let n = rng.unit_sphere();

        db = db.max(ctx.detailed_balance_residual(v, w)?);
        let kf = ctx.symmetrized_kernel(v, w)?;
        let kb = ctx.symmetrized_kernel(w, v)?;
        sym = sym.max((kf - kb).abs() / kf.abs().max(kb.abs()).max(f64::MIN_POSITIVE));

        let post = direct_collision(&p, &c, v, w, n)?;
        let qn_out = (post.v - post.w).dot(n);
        let qn_in = (v - w).dot(n);
        restitution = restitution.max((qn_out + p.eps * qn_in).abs() / qn_in.abs().max(1.0));
        let scale = p.m * v.norm() + p.m1 * w.norm() + 1.0;
        momentum = momentum
            .max((pair_momentum(&p, &post) - (v * p.m + w * p.m1)).norm() / scale);
        let ke_in = pair_kinetic_energy(&p, &ilbk_core::oracle::CollisionPair { v, w });
        let ke_out = pair_kinetic_energy(&p, &post);
        energy_gain = energy_gain.max((ke_out - ke_in) / ke_in.max(1.0));

        let pre = inverse_collision(&c, v, w, n)?;
        let back = direct_collision(&p, &c, pre.v, pre.w, n)?;
        let rt = ((back.v - v).norm() + (back.w - w).norm()) / (v.norm() + w.norm() + 1.0);
        round_trip = round_trip.max(rt);
    }
    let theta_id =
        (p.m / (2.0 * c.theta_sharp) - p.m1 * (1.0 + c.mu) / (2.0 * p.theta1)).abs()
            / (p.m / (2.0 * c.theta_sharp));

    let mut checks = Checks::default();
    checks.push("detailed_balance_residual", db, "<= 1e-12", db <= 1e-12);
    checks.push("kernel_symmetry_rel_dev", sym, "<= 1e-12", sym <= 1e-12);
    checks.push("restitution_defect", restitution, "<= 1e-13", restitution <= 1e-13);
    checks.push("momentum_defect", momentum, "<= 1e-13", momentum <= 1e-13);
    let energy_target = if p.eps < 1.0 { "<= 1e-14 (dissipative)" } else { "<= 1e-12 (elastic)" };
    let energy_tol = if p.eps < 1.0 { 1e-14 } else { 1e-12 };
    checks.push("energy_gain_per_collision", energy_gain, energy_target, energy_gain <= energy_tol);
    checks.push("inverse_direct_round_trip", round_trip, "<= 1e-12", round_trip <= 1e-12);
    checks.push("temperature_identity_rel_dev", theta_id, "<= 1e-14", theta_id <= 1e-14);

    artifact::write_json(
        &env.out.join("validate.json"),
        &json!({
            "config_hash": env.hash,
            "pairs_sampled": 2000,
            "checks": checks.rows(),
        }),
    )?;
    Ok(checks.outcome())
}

pub fn cmd_calibrate(env: &Env) -> Result<Outcome> {
    let p = env.cfg.params();
    let rec = oracle::calibrate(&p)?;
    let ctx = rec.context(p)?;
    let c = ctx.consts;
    let tw = thermal_width(&p, &c);

    // independent Monte Carlo cross-checks of both calibrated routes,
    // recorded with their sample counts and standard errors
    let samples: u64 = 200_000;
    let probe = Maxwellian {
        mass: p.m,
        theta: 1.1 * c.theta_sharp,
        u: p.u1 + Vec3::new(0.4, -0.2, 0.3) * tw,
    };
    let v_gain = p.u1 + Vec3::new(0.9, 0.2, -0.5) * tw;
    let gain_mc = qplus_mc(&p, &c, |u| probe.eval(u), v_gain, samples, env.cfg.seed ^ 0xca11)?;
    let gain_closed = gain_kernel_quadrature(&ctx, |u| probe.eval(u), v_gain);
    let gain_dev = (gain_mc.mean - gain_closed).abs() / gain_closed;
    let gain_tol = (3.0 * gain_mc.se / gain_closed).max(0.01);

    let v_sigma = p.u1 + Vec3::new(-0.6, 1.1, 0.4) * tw;
    let sig_mc = sigma_mc(&p, v_sigma, samples, env.cfg.seed ^ 0x51f_a)?;
    let sig_closed = ctx.sigma(v_sigma);
    let sig_dev = (sig_mc.mean - sig_closed).abs() / sig_closed;
    let sig_tol = (3.0 * sig_mc.se / sig_closed).max(0.01);

    let mut checks = Checks::default();
    checks.push("kernel_normalization_rel_dev", rec.kernel_rel_dev, "<= 1e-6", rec.kernel_rel_dev <= 1e-6);
    checks.push("sigma_normalization_rel_dev", rec.sigma_rel_dev, "<= 1e-6", rec.sigma_rel_dev <= 1e-6);
    checks.push("gain_mc_cross_check", gain_dev, "<= max(1%, 3 se)", gain_dev <= gain_tol);
    checks.push("sigma_mc_cross_check", sig_dev, "<= max(1%, 3 se)", sig_dev <= sig_tol);

    let art = CalibrationArtifact {
        config_hash: env.hash.clone(),
        m: p.m,
        m1: p.m1,
        eps: p.eps,
        theta1: p.theta1,
        u1: [p.u1.0[0], p.u1.0[1], p.u1.0[2]],
        norm_c: rec.norm_c,
        c_sigma: rec.c_sigma,
        measured_norm_c: rec.measured_norm_c,
        measured_c_sigma: rec.measured_c_sigma,
        kernel_rel_dev: rec.kernel_rel_dev,
        sigma_rel_dev: rec.sigma_rel_dev,
        gain_oracle: OracleBlock {
            samples,
            mean: gain_mc.mean,
            se: gain_mc.se,
            closed_form: gain_closed,
            rel_dev: gain_dev,
        },
        sigma_oracle: OracleBlock {
            samples,
            mean: sig_mc.mean,
            se: sig_mc.se,
            closed_form: sig_closed,
            rel_dev: sig_dev,
        },
        checks: checks.rows().to_vec(),
    };
    artifact::write_json(&env.out.join("calibration.json"), &art)?;
    println!(
        "  resolved norm_C = {}, C_sigma = {} (measured {} and {})",
        num(rec.norm_c),
        num(rec.c_sigma),
        num(rec.measured_norm_c),
        num(rec.measured_c_sigma)
    );
    Ok(checks.outcome())
}

pub fn cmd_sigma(env: &Env) -> Result<Outcome> {
    let ctx = require_calibration(env)?;
    let p = ctx.params;
    let c = ctx.consts;
    let tw = thermal_width(&p, &c);
    let pi = core::f64::consts::PI;
    // mean background speed; sigma(r) is sandwiched between
    // pi max(r, e0) and pi (r + e0) because E|v - W| is convex and radial
    let e0 = 2.0 * (2.0 * p.theta1 / (pi * p.m1)).sqrt();

    let mut csv = Csv::new(&env.hash, &["r", "r_tw", "sigma", "lower_bound", "upper_bound"]);
    let mut lower_margin = f64::INFINITY;
    let mut upper_margin = f64::NEG_INFINITY;
    for k in 0..=200 {
        let r_tw = 0.1 * k as f64;
        let r = r_tw * tw;
        let sigma = ctx.sigma_radial(r);
        let lo = pi * r.max(e0);
        let hi = pi * (r + e0);
        lower_margin = lower_margin.min(sigma / lo);
        upper_margin = upper_margin.max(sigma / hi);
        csv.row(&[num(r), num(r_tw), num(sigma), num(lo), num(hi)]);
    }
    csv.save(&env.out.join("sigma.csv"))?;

    // spot checks of the closed form against the defining integral, off-axis
    let spots: Vec<(Vec3, f64)> = {
        let mut rng = Sampler::stream(env.cfg.seed, 31);
        [0.3f64, 0.9, 1.7, 3.2, 6.1]
            .iter()
            .map(|&r_tw| (p.u1 + rng.unit_sphere() * (r_tw * tw), r_tw))
            .collect()
    };
    let devs = parallel_map(spots.len(), env.threads, |i| {
        let (v, _) = spots[i];
        let defining = sigma_quadrature(&p, v);
        (ctx.sigma(v) - defining).abs() / defining
    });
    let spot_dev = devs.iter().fold(0.0f64, |m, &d| m.max(d));

    let nu0 = ctx.nu0();
    let threshold_dev = (nu0 - ctx.sigma(p.u1)).abs();

    let mut checks = Checks::default();
    checks.push("sandwich_lower_ratio", lower_margin, ">= 1 - 1e-9", lower_margin >= 1.0 - 1e-9);
    checks.push("sandwich_upper_ratio", upper_margin, "<= 1 + 1e-9", upper_margin <= 1.0 + 1e-9);
    checks.push("defining_integral_spot_dev", spot_dev, "<= 1e-10", spot_dev <= 1e-10);
    checks.push("threshold_is_sigma_at_drift", threshold_dev, "== 0", threshold_dev == 0.0);

    artifact::write_json(
        &env.out.join("sigma.json"),
        &json!({
            "config_hash": env.hash,
            "nu0": nu0,
            "mean_background_speed": e0,
            "points": 201,
            "r_max_tw": 20.0,
            "checks": checks.rows(),
        }),
    )?;
    Ok(checks.outcome())
}

pub fn cmd_kernel(env: &Env) -> Result<Outcome> {
    let ctx = require_calibration(env)?;
    let radii = [0.01, 0.1, 0.5, 1.0, 2.0, 3.0, 5.0, 8.0, 11.0, 15.0];

    let mut csv = Csv::new(&env.hash, &["p", "q", "r_tw", "integral", "product"]);
    let mut products = [0.0f64; 2];
    for (slot, &(pw, qw)) in [(2.0, 0.0), (1.0, 2.0)].iter().enumerate() {
        let rows = parallel_map(radii.len(), env.threads, |i| {
            ctx.carleman_scan(pw, qw, &radii[i..=i])
        });
        for rows in rows {
            for row in rows? {
                products[slot] = products[slot].max(row.product);
                csv.row(&[num(pw), num(qw), num(row.r), num(row.integral), num(row.product)]);
            }
        }
    }
    csv.save(&env.out.join("carleman.csv"))?;

    let rhos = [0.5, 1.0, 2.0, 5.0, 10.0];
    let tails = parallel_map(rhos.len(), env.threads, |i| ctx.tail_mass_sup(rhos[i]));
    let tails: Vec<f64> = tails.into_iter().collect::<ilbk_core::Result<_>>()?;
    let mut tail_csv = Csv::new(&env.hash, &["rho_tw", "sup_tail_mass"]);
    for (&rho, &t) in rhos.iter().zip(&tails) {
        tail_csv.row(&[num(rho), num(t)]);
    }
    tail_csv.save(&env.out.join("tail.csv"))?;

    let tail_max = tails.iter().fold(0.0f64, |m, &t| m.max(t));
    let finite = products.iter().chain(&tails).all(|x| x.is_finite());
    let min_drop = tails
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::INFINITY, f64::min);

    let mut checks = Checks::default();
    checks.push("moment_weighted_supremum_p2_q0", products[0], "<= 10", products[0] <= 10.0);
    checks.push("moment_weighted_supremum_p1_q2", products[1], "<= 25", products[1] <= 25.0);
    checks.push("tail_mass_supremum", tail_max, "<= 5", tail_max <= 5.0);
    checks.push("tail_mass_min_drop", min_drop, "> 0 (decreasing in rho)", min_drop > 0.0);
    checks.push("all_scans_finite", if finite { 1.0 } else { 0.0 }, "== 1", finite);

    artifact::write_json(
        &env.out.join("kernel.json"),
        &json!({
            "config_hash": env.hash,
            "radii_tw": radii,
            "tail_radii_tw": rhos,
            "tail_mass": tails,
            "checks": checks.rows(),
        }),
    )?;
    Ok(checks.outcome())
}

/// Reuse the on-disk operator cache when one matches the configuration
/// bit for bit; otherwise assemble and write it. Returns the operator and
/// whether the cache was reused.
fn radial_operator(env: &Env, ctx: &KernelContext) -> Result<(SymmetricOperator, RadialGrid, PathBuf, bool)> {
    let p = ctx.params;
    let c = ctx.consts;
    let nr = env.cfg.grid.nr;
    let grid = RadialGrid::build(env.cfg.grid.l, nr, &p, &c)?;
    let cache_path = env.out.join(format!("op_radial_{nr}.ilbk"));
    let meta_path = cache_path.with_extension("meta.json");
    let header = cache::CacheHeader {
        sector: cache::SECTOR_RADIAL,
        n: nr as u64,
        l: env.cfg.grid.l,
        m: p.m,
        m1: p.m1,
        eps: p.eps,
        theta1: p.theta1,
        u1: [p.u1.0[0], p.u1.0[1], p.u1.0[2]],
        norm_c: ctx.norm_c,
        c_sigma: ctx.c_sigma,
    };

    if cache_path.exists() {
        let (got, gain) = cache::read_matrix(&cache_path)?;
        if got != header {
            bail!(
                "operator cache {} was built under different parameters; delete it or match the configuration",
                cache_path.display()
            );
        }
        let side: cache::CacheMeta = artifact::read_json(&meta_path)?;
        if side.norm_c != got.norm_c || side.c_sigma != got.c_sigma {
            bail!("sidecar {} disagrees with the cache header", meta_path.display());
        }
        if side.config_hash != env.hash {
            bail!(
                "operator cache {} carries config hash {}, current hash is {}",
                cache_path.display(),
                side.config_hash,
                env.hash
            );
        }
        let checksum = u64::from_str_radix(&side.payload_checksum, 16)
            .with_context(|| format!("bad payload checksum in {}", meta_path.display()))?;
        let meta = AssemblyMeta {
            nodes: side.n,
            sinkhorn_iterations: side.sinkhorn_iterations,
            sinkhorn_residual: side.sinkhorn_residual,
            raw_equilibrium_residual: side.raw_equilibrium_residual,
            rescale_min: side.rescale_min,
            rescale_max: side.rescale_max,
            checksum,
        };
        let op = SymmetricOperator::from_cached_radial_gain(ctx, &grid, gain, meta)?;
        println!("  reusing operator cache {}", cache_path.display());
        return Ok((op, grid, cache_path, true));
    }

    let op = SymmetricOperator::assemble_radial(ctx, &grid)?;
    cache::write(&cache_path, &header, op.gain_matrix())?;
    artifact::write_json(
        &meta_path,
        &cache::CacheMeta {
            config_hash: env.hash.clone(),
            sector: "radial-isotropic".into(),
            n: nr,
            norm_c: ctx.norm_c,
            c_sigma: ctx.c_sigma,
            payload_checksum: format!("{:016x}", op.meta.checksum),
            sinkhorn_iterations: op.meta.sinkhorn_iterations,
            sinkhorn_residual: op.meta.sinkhorn_residual,
            raw_equilibrium_residual: op.meta.raw_equilibrium_residual,
            rescale_min: op.meta.rescale_min,
            rescale_max: op.meta.rescale_max,
        },
    )?;
    println!("  wrote operator cache {}", cache_path.display());
    Ok((op, grid, cache_path, false))
}

pub fn cmd_spectrum(env: &Env) -> Result<Outcome> {
    let ctx = require_calibration(env)?;
    let (op, _grid, cache_path, reused) = radial_operator(env, &ctx)?;

    let k = 8.min(op.len());
    let spec = eigendecompose_dense(&op, &ctx, k, 1e-10)?;
    let report = spectrum_report(&spec, &op, 50, env.cfg.seed ^ 0x5bec)?;

    let mut csv = Csv::new(&env.hash, &["index", "eigenvalue", "residual", "sector"]);
    for (i, &lambda) in spec.all_eigenvalues.iter().enumerate() {
        let residual =
            if i < spec.residuals.len() { num(spec.residuals[i]) } else { String::new() };
        csv.row(&[i.to_string(), num(lambda), residual, spec.sector.as_str().to_string()]);
    }
    csv.save(&env.out.join("spectrum.csv"))?;

    let lambda0 = spec.all_eigenvalues[0];
    let lambda1 = report.lambda1;
    let defect = lambda0.abs() / spec.norm_t;
    let coercivity_slack = report.coercivity_max_rayleigh - lambda1;

    let mut checks = Checks::default();
    checks.push("null_eigenvalue_defect", defect, "<= 1e-10 of |T|", defect <= 1e-10);
    checks.push("spectrum_nonpositive", lambda0, "<= 1e-10 |T|", lambda0 <= 1e-10 * spec.norm_t);
    checks.push("spectral_gap", spec.gap, "> 0", spec.gap > 0.0);
    let threshold_dev = (report.nu0 - ctx.sigma(ctx.params.u1)).abs();
    checks.push("threshold_is_sigma_at_drift", threshold_dev, "== 0", threshold_dev == 0.0);
    checks.push(
        "well_separated_modes",
        report.well_separated.len() as f64,
        ">= 2",
        report.well_separated.len() >= 2,
    );
    checks.push(
        "separation_margin",
        report.separation_margin,
        "> 0",
        report.separation_margin > 0.0,
    );
    checks.push(
        "coercivity_max_rayleigh",
        coercivity_slack,
        "<= 1e-8 |T| above lambda_1",
        report.coercivity_ok,
    );

    artifact::write_json(
        &env.out.join("spectrum.json"),
        &json!({
            "config_hash": env.hash,
            "sector": spec.sector.as_str(),
            "nr": env.cfg.grid.nr,
            "l_tw": env.cfg.grid.l,
            "nu0": report.nu0,
            "lambda0": lambda0,
            "lambda1": lambda1,
            "gap": report.gap,
            "top_eigenvalues": spec.eigenvalues,
            "residuals": spec.residuals,
            "well_separated": report.well_separated,
            "separation_margin": report.separation_margin,
            "coercivity_max_rayleigh": report.coercivity_max_rayleigh,
            "coercivity_samples": report.coercivity_samples,
            "assembly": {
                "sinkhorn_iterations": op.meta.sinkhorn_iterations,
                "sinkhorn_residual": op.meta.sinkhorn_residual,
                "raw_equilibrium_residual": op.meta.raw_equilibrium_residual,
                "rescale_min": op.meta.rescale_min,
                "rescale_max": op.meta.rescale_max,
            },
            "cache": { "path": cache_path.display().to_string(), "reused": reused },
            "checks": checks.rows(),
        }),
    )?;
    println!(
        "  nu0 = {}, lambda_1 = {}, gap = {}",
        num(report.nu0),
        num(lambda1),
        num(report.gap)
    );
    Ok(checks.outcome())
}

pub fn cmd_evolve(env: &Env) -> Result<Outcome> {
    let ctx = require_calibration(env)?;
    let (op, grid, _, _) = radial_operator(env, &ctx)?;
    let p = ctx.params;
    let scfg = &env.cfg.solver;

    let f0 = evolution::initial_data(scfg.initial.to_core(), &grid, &p)?;
    let f0_max = f0.iter().fold(0.0f64, |m, &x| m.max(x));
    let (method, dt, default_drift_tol) = match scfg.method {
        MethodKind::Spectral => (Method::SpectralExponential, 0.0, 1e-12),
        MethodKind::Rk4 => {
            let sigma_max = op.sigma().iter().fold(0.0f64, |m, &s| m.max(s));
            let dt = if scfg.dt > 0.0 { scfg.dt } else { 0.45 / sigma_max };
            (Method::Rk4, dt, 1e-9)
        }
    };
    let override_or = |value: f64, default: f64| if value > 0.0 { value } else { default };
    let drift_tol = override_or(env.cfg.tolerances.mass_drift, default_drift_tol);
    let trace =
        evolution::evolve_homogeneous(&op, &grid, &f0, scfg.t_end, dt, scfg.samples, method)?;

    let mut csv =
        Csv::new(&env.hash, &["t", "mass", "dist_H", "H_quadratic", "H_xlogx", "I"]);
    for i in 0..trace.times.len() {
        csv.row(&[
            num(trace.times[i]),
            num(trace.mass[i]),
            num(trace.dist_h[i]),
            num(trace.h_quadratic[i]),
            num(trace.h_xlogx[i]),
            num(trace.information[i]),
        ]);
    }
    csv.save(&env.out.join("trace.csv"))?;

    let header = cache::CacheHeader {
        sector: cache::SECTOR_RADIAL,
        n: grid.len() as u64,
        l: env.cfg.grid.l,
        m: p.m,
        m1: p.m1,
        eps: p.eps,
        theta1: p.theta1,
        u1: [p.u1.0[0], p.u1.0[1], p.u1.0[2]],
        norm_c: ctx.norm_c,
        c_sigma: ctx.c_sigma,
    };
    let dump_path = env.out.join("final_state.ilbk");
    cache::write(&dump_path, &header, &trace.final_state)?;
    let (_, reread) = cache::read_vector(&dump_path)?;
    let dump_ok = reread == trace.final_state;

    let mass0 = trace.mass[0];
    let drift = trace
        .mass
        .iter()
        .fold(0.0f64, |m, &x| m.max((x - mass0).abs()))
        / mass0.abs().max(1.0);
    let worst_rise = |series: &[f64]| {
        let scale = series.iter().fold(0.0f64, |m, &x| m.max(x.abs())).max(f64::MIN_POSITIVE);
        series.windows(2).map(|w| (w[1] - w[0]) / scale).fold(f64::NEG_INFINITY, f64::max)
    };
    let mono_tol = override_or(
        env.cfg.tolerances.monotonicity,
        if matches!(scfg.method, MethodKind::Spectral) { 1e-12 } else { 1e-9 },
    );
    let rises = [
        worst_rise(&trace.dist_h),
        worst_rise(&trace.h_quadratic),
        worst_rise(&trace.h_xlogx),
        worst_rise(&trace.information),
    ];
    let fitted = trace.fitted_rate.or_else(|| {
        evolution::decay_window(&trace, 1e-11, 1e-4)
            .and_then(|(a, b)| (b > a).then(|| evolution::fit_decay_rate(&trace, a, b).ok())?)
    });

    let mut checks = Checks::default();
    checks.push("mass_drift", drift, &format!("<= {drift_tol:e}"), drift <= drift_tol);
    checks.push("dist_H_monotone_defect", rises[0], &format!("<= {mono_tol:e}"), rises[0] <= mono_tol);
    checks.push("H_quadratic_monotone_defect", rises[1], &format!("<= {mono_tol:e}"), rises[1] <= mono_tol);
    checks.push("H_xlogx_monotone_defect", rises[2], &format!("<= {mono_tol:e}"), rises[2] <= mono_tol);
    checks.push("information_monotone_defect", rises[3], &format!("<= {mono_tol:e}"), rises[3] <= mono_tol);
    let pos = trace.min_density / f0_max.max(f64::MIN_POSITIVE);
    checks.push("relative_min_density", pos, ">= -1e-12", pos >= -1e-12);
    checks.push(
        "final_state_dump_round_trip",
        if dump_ok { 0.0 } else { 1.0 },
        "== 0 (bit-exact)",
        dump_ok,
    );

    artifact::write_json(
        &env.out.join("evolve.json"),
        &json!({
            "config_hash": env.hash,
            "method": match scfg.method { MethodKind::Spectral => "spectral", MethodKind::Rk4 => "rk4" },
            "initial": scfg.initial,
            "t_end": scfg.t_end,
            "dt": dt,
            "samples": scfg.samples,
            "fitted_rate": fitted,
            "mass_drift": drift,
            "min_density": trace.min_density,
            "clamped_samples": trace.clamped_samples,
            "checks": checks.rows(),
        }),
    )?;
    match fitted {
        Some(rate) => println!("  fitted equilibration rate {}", num(rate)),
        None => println!("  no clean exponential window; rate not fitted"),
    }
    Ok(checks.outcome())
}

pub fn cmd_transport(env: &Env) -> Result<Outcome> {
    let ctx = require_calibration(env)?;
    let p = ctx.params;
    let c = ctx.consts;
    let tcfg = &env.cfg.transport;
    let grid = VelocityGrid::build(env.cfg.grid.l, tcfg.n, &p, &c)?;
    let dt = commensurate_dt(&grid, tcfg.nx, tcfg.q);

    let demo = SlabTransport::new(&ctx, &grid, tcfg.nx, dt, true)?;
    let meq = equilibrium_distribution(&p, &c);
    let node_eq: Vec<f64> = grid.nodes().iter().map(|&v| meq.eval(v)).collect();
    let mut state = Vec::with_capacity(demo.state_len());
    for cell in 0..tcfg.nx {
        let bump = 1.0 + 0.4 * (2.0 * core::f64::consts::PI * cell as f64 / tcfg.nx as f64).sin();
        state.extend(node_eq.iter().map(|&f| bump * f));
    }
    let mass0 = demo.total_mass(&state)?;
    let masses = demo.run(&mut state, tcfg.steps)?;

    let mut csv = Csv::new(&env.hash, &["step", "mass"]);
    csv.row(&["0".into(), num(mass0)]);
    for (k, &m) in masses.iter().enumerate() {
        csv.row(&[(k + 1).to_string(), num(m)]);
    }
    csv.save(&env.out.join("transport.csv"))?;
    let drift = masses.iter().fold(0.0f64, |mx, &m| mx.max((m - mass0).abs()))
        / mass0.abs().max(1.0);

    // streaming alone must permute cells exactly: velocity node j advects by
    // round(v_x dt / dx) cells per step, with no arithmetic on the values
    let stream = SlabTransport::new(&ctx, &grid, tcfg.nx, dt, false)?;
    let nv = grid.len();
    let init: Vec<f64> =
        (0..stream.state_len()).map(|i| 0.1 + ((i * 2654435761) % 1000) as f64 * 1e-3).collect();
    let mut moved = init.clone();
    let stream_steps = tcfg.steps.min(64);
    stream.run(&mut moved, stream_steps)?;
    let dx = 1.0 / tcfg.nx as f64;
    let mut mismatches = 0usize;
    for (j, &v) in grid.nodes().iter().enumerate() {
        let per_half = (v.0[0] * (0.5 * dt) / dx).round() as isize;
        let total = 2 * per_half * stream_steps as isize;
        for cell in 0..tcfg.nx {
            let src = (cell as isize - total).rem_euclid(tcfg.nx as isize) as usize;
            if moved[cell * nv + j] != init[src * nv + j] {
                mismatches += 1;
            }
        }
    }

    let mut checks = Checks::default();
    checks.push("mass_drift", drift, "<= 1e-10", drift <= 1e-10);
    checks.push(
        "streaming_shift_mismatches",
        mismatches as f64,
        "== 0 (bit-exact)",
        mismatches == 0,
    );

    artifact::write_json(
        &env.out.join("transport.json"),
        &json!({
            "config_hash": env.hash,
            "nx": tcfg.nx,
            "velocity_nodes": nv,
            "substeps_per_cell": tcfg.q,
            "dt": dt,
            "steps": tcfg.steps,
            "streaming_steps_checked": stream_steps,
            "initial_mass": mass0,
            "final_mass": masses.last().copied().unwrap_or(mass0),
            "checks": checks.rows(),
        }),
    )?;
    Ok(checks.outcome())
}

const REPORT_SOURCES: [&str; 7] = [
    "validate.json",
    "calibration.json",
    "sigma.json",
    "kernel.json",
    "spectrum.json",
    "evolve.json",
    "transport.json",
];

pub fn cmd_report(env: &Env) -> Result<Outcome> {
    let mut artifacts: Vec<(&str, Value)> = Vec::new();
    for name in REPORT_SOURCES {
        let path = env.out.join(name);
        if path.exists() {
            artifacts.push((name, artifact::read_json(&path)?));
        }
    }
    if artifacts.is_empty() {
        bail!("no artifacts found in {}; run some commands first", env.out.display());
    }

    let hash_of = |name: &str, v: &Value| -> Result<String> {
        v.get("config_hash")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .with_context(|| format!("artifact {name} carries no config_hash"))
    };
    let reference = hash_of(artifacts[0].0, &artifacts[0].1)?;
    for (name, v) in &artifacts {
        let h = hash_of(name, v)?;
        if h != reference {
            bail!(
                "artifact {} carries config hash {}, but {} carries {}; refusing to mix runs",
                name,
                h,
                artifacts[0].0,
                reference
            );
        }
    }

    let mut csv = Csv::new(&reference, &["source", "check", "value", "target", "pass"]);
    let mut rows: Vec<(String, CheckRow)> = Vec::new();
    for (name, v) in &artifacts {
        let source = name.trim_end_matches(".json");
        let checks = v
            .get("checks")
            .and_then(Value::as_array)
            .with_context(|| format!("artifact {name} carries no checks"))?;
        for check in checks {
            let row: CheckRow = serde_json::from_value(check.clone())
                .with_context(|| format!("malformed check row in {name}"))?;
            rows.push((source.to_string(), row));
        }
    }

    let fitted = artifacts
        .iter()
        .find(|(n, _)| *n == "evolve.json")
        .and_then(|(_, v)| v.get("fitted_rate").and_then(Value::as_f64));
    let lambda1 = artifacts
        .iter()
        .find(|(n, _)| *n == "spectrum.json")
        .and_then(|(_, v)| v.get("lambda1").and_then(Value::as_f64));
    if let (Some(rate), Some(l1)) = (fitted, lambda1) {
        let rel = (rate / l1.abs() - 1.0).abs();
        rows.push((
            "report".into(),
            CheckRow {
                check: "fitted_rate_vs_spectral_gap".into(),
                value: rel,
                target: "<= 0.1".into(),
                pass: rel <= 0.1,
            },
        ));
    }

    let mut checks = Checks::default();
    let mut pass_count = 0usize;
    for (source, row) in &rows {
        if row.pass {
            pass_count += 1;
        }
        csv.row(&[
            source.clone(),
            row.check.clone(),
            num(row.value),
            row.target.clone(),
            row.pass.to_string(),
        ]);
        checks.push(&format!("{}/{}", source, row.check), row.value, &row.target, row.pass);
    }
    csv.save(&env.out.join("report.csv"))?;

    artifact::write_json(
        &env.out.join("report.json"),
        &json!({
            "config_hash": reference,
            "sources": artifacts.iter().map(|(n, _)| *n).collect::<Vec<_>>(),
            "checks_total": rows.len(),
            "checks_passed": pass_count,
            "rows": rows.iter().map(|(s, r)| json!({
                "source": s, "check": r.check, "value": r.value,
                "target": r.target, "pass": r.pass,
            })).collect::<Vec<_>>(),
        }),
    )?;
    println!(
        "  {} artifacts, {} checks, {} passed",
        artifacts.len(),
        rows.len(),
        pass_count
    );
    Ok(checks.outcome())
}

pub fn timed<F: FnOnce() -> Result<Outcome>>(name: &str, f: F) -> Result<Outcome> {
    println!("{name}:");
    let start = Instant::now();
    let outcome = f()?;
    println!("  done in {:.2} s", start.elapsed().as_secs_f64());
    Ok(outcome)
}
