//! Self-check suites with measured tolerances.
//!
//! Each check compares a fast production path against an independent
//! reference (quadrature projection, brute-force compositing or ray casting,
//! finite differences) and reports the measured deviation next to the
//! tolerance it must beat. The helpers here are also the oracles used by the
//! heavier acceptance tests, at larger sizes.

use std::f64::consts::PI;

use nalgebra::{Matrix3, UnitQuaternion, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{
    eval_objective, finite_difference_check, forward_image, prepare_condition,
    prepare_pose_from_parts, FitConfig, FitData, FitParams, FrozenTerms, LossWeights,
};
use crate::harmonics::{
    coeff_count, flat_index, sh_eval_basis, texel_param_count, transport_from_zh, zh_expand,
    zonal_rotation_scale, Direction, ShVector, TexelRepr, ZhLobes, MAX_ORDER,
};
use crate::img::Image;
use crate::irradiance::bvh::Bvh;
use crate::irradiance::{normalized_irradiance, sampled_irradiance};
use crate::lights::{LightRig, PointLight};
use crate::pipeline::RenderSettings;
use crate::scene::WorldSplat;
use crate::shading::{diffuse_dot, DiffuseBasis};
use crate::splat::{
    composite, composite_bruteforce, sort_splats, Camera, CompositeOptions, Splat2D,
    MAHALANOBIS_CUTOFF,
};

/// One reference comparison: what was measured and what it had to beat.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckResult {
    pub suite: String,
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

pub fn available_suites() -> &'static [&'static str] {
    &["harmonics", "splat", "irradiance", "fit"]
}

/// Runs one named suite, or every suite for `"all"`. The seed feeds every
/// randomized fixture, so reports are reproducible.
pub fn run_suites(selection: &str, seed: u64) -> Result<ValidationReport> {
    let mut checks = Vec::new();
    let known = available_suites();
    let run_all = selection == "all";
    if !run_all && !known.contains(&selection) {
        return Err(Error::malformed(format!(
            "unknown suite {selection:?}; available: {known:?} or \"all\""
        )));
    }
    if run_all || selection == "harmonics" {
        harmonics_suite(seed, &mut checks)?;
    }
    if run_all || selection == "splat" {
        splat_suite(seed, &mut checks)?;
    }
    if run_all || selection == "irradiance" {
        irradiance_suite(seed, &mut checks)?;
    }
    if run_all || selection == "fit" {
        fit_suite(seed, &mut checks)?;
    }
    let passed = checks.iter().all(|c| c.pass);
    Ok(ValidationReport { passed, checks })
}

fn push_check(
    checks: &mut Vec<CheckResult>,
    suite: &str,
    name: &str,
    measured: f64,
    tolerance: f64,
    detail: impl Into<String>,
) {
    checks.push(CheckResult {
        suite: suite.to_string(),
        name: name.to_string(),
        pass: measured.is_finite() && measured <= tolerance,
        measured,
        tolerance,
        detail: detail.into(),
    });
}

// ---------------------------------------------------------------------------
// Quadrature oracles
// ---------------------------------------------------------------------------

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence. Exact for polynomials of degree <= 2n - 1.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n > 0);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = if n == 1 {
                1.0
            } else {
                n as f64 * (x * p1 - p0) / (x * x - 1.0)
            };
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out
}

/// Product quadrature on the unit sphere: Gauss-Legendre in the polar cosine
/// times a uniform azimuthal rule. Weights sum to 4 pi; the rule integrates
/// band-limited harmonic products exactly once `n_theta` exceeds the band
/// and `n_phi` exceeds the maximum azimuthal frequency.
pub fn sphere_quadrature(n_theta: usize, n_phi: usize) -> Vec<(Vector3<f64>, f64)> {
    let gl = gauss_legendre(n_theta);
    let wphi = 2.0 * PI / n_phi as f64;
    let mut out = Vec::with_capacity(n_theta * n_phi);
    for &(c, w) in &gl {
        let s = (1.0 - c * c).max(0.0).sqrt();
        for j in 0..n_phi {
            let phi = wphi * (j as f64 + 0.5);
            out.push((Vector3::new(s * phi.cos(), s * phi.sin(), c), w * wphi));
        }
    }
    out
}

/// Evaluates a zonal expansion (coefficients per band, axis +z) at a
/// direction.
pub fn eval_zonal(zonal: &[f64], dir: &Vector3<f64>) -> f64 {
    let order = zonal.len() - 1;
    let basis = sh_eval_basis(Direction::normalize(*dir).unwrap(), order).unwrap();
    zonal
        .iter()
        .enumerate()
        .map(|(l, z)| z * basis.channel(0)[flat_index(l, 0)])
        .sum()
}

/// Reference rotation of a zonal function: projects `f(R^T w)` onto the
/// harmonic basis with the supplied spherical quadrature.
pub fn rotate_zonal_reference(
    zonal: &[f64],
    rot: &Matrix3<f64>,
    quad: &[(Vector3<f64>, f64)],
) -> ShVector {
    let order = zonal.len() - 1;
    let n = coeff_count(order);
    let mut coeffs = vec![0.0f64; n];
    for (dir, w) in quad {
        let back = rot.transpose() * dir;
        let f = eval_zonal(zonal, &back);
        let basis = sh_eval_basis(Direction::normalize(*dir).unwrap(), order).unwrap();
        for (c, b) in coeffs.iter_mut().zip(basis.channel(0)) {
            *c += w * f * b;
        }
    }
    ShVector::from_coeffs(order, 1, coeffs).unwrap()
}

/// Uniformly random rotation from a random unit quaternion.
pub fn random_rotation<R: Rng>(rng: &mut R) -> Matrix3<f64> {
    loop {
        let q = Vector4::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = q.norm();
        if n > 1e-3 && n <= 1.0 {
            let q = nalgebra::Quaternion::from_vector(q / n);
            return UnitQuaternion::new_unchecked(q).to_rotation_matrix().into_inner();
        }
    }
}

/// Random per-band zonal coefficients in [-1, 1].
pub fn random_zonal<R: Rng>(rng: &mut R, order: usize) -> Vec<f64> {
    (0..=order).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Compares convention-scaled zonal placement against quadrature rotation
/// for one (zonal set, rotation) pair; returns the max |coefficient| error.
pub fn zonal_rotation_error(
    zonal: &[f64],
    rot: &Matrix3<f64>,
    quad: &[(Vector3<f64>, f64)],
) -> f64 {
    let scaled: Vec<f64> = zonal
        .iter()
        .enumerate()
        .map(|(l, z)| z * zonal_rotation_scale(l))
        .collect();
    let axis = Direction::normalize(rot.column(2).into_owned()).unwrap();
    let fast = zh_expand(&scaled, axis).unwrap();
    let reference = rotate_zonal_reference(zonal, rot, quad);
    fast.max_abs_diff(&reference)
}

// ---------------------------------------------------------------------------
// Random compositing scenes
// ---------------------------------------------------------------------------

/// A random sorted splat list plus per-splat channel values, spread over a
/// `width x height` viewport.
pub fn random_splat_scene<R: Rng>(
    rng: &mut R,
    width: usize,
    height: usize,
    count: usize,
    channels: usize,
) -> (Vec<Splat2D>, Vec<f64>) {
    let mut splats = Vec::with_capacity(count);
    for i in 0..count {
        let sx: f64 = rng.gen_range(0.7..6.0);
        let sy: f64 = rng.gen_range(0.7..6.0);
        let theta: f64 = rng.gen_range(0.0..PI);
        let (ct, st) = (theta.cos(), theta.sin());
        // Covariance R diag(sx^2, sy^2) R^T, then inverted analytically.
        let a = ct * ct * sx * sx + st * st * sy * sy;
        let b = ct * st * (sx * sx - sy * sy);
        let c = st * st * sx * sx + ct * ct * sy * sy;
        let det = a * c - b * b;
        let lambda_max = 0.5 * (a + c) + (0.25 * (a - c) * (a - c) + b * b).sqrt();
        splats.push(Splat2D {
            mean: [
                rng.gen_range(-4.0..width as f64 + 4.0),
                rng.gen_range(-4.0..height as f64 + 4.0),
            ],
            cov_inv: [c / det, -b / det, a / det],
            depth: rng.gen_range(0.2..6.0),
            opacity: rng.gen_range(0.05..0.95),
            radius: MAHALANOBIS_CUTOFF * lambda_max.sqrt(),
            index: i as u32,
        });
    }
    sort_splats(&mut splats);
    let values = (0..count * channels).map(|_| rng.gen_range(0.0..1.0)).collect();
    (splats, values)
}

// ---------------------------------------------------------------------------
// Occlusion fixture
// ---------------------------------------------------------------------------

/// A square blocker above the origin with lights on both poles: the origin
/// sees exactly half the stage energy, a laterally displaced probe sees all
/// of it.
pub struct OcclusionFixture {
    pub bvh: Bvh,
    pub rig: LightRig,
    pub half_occluded: Vector3<f64>,
    pub unoccluded: Vector3<f64>,
}

pub fn occlusion_fixture() -> OcclusionFixture {
    let verts = vec![
        Vector3::new(-1.0, -1.0, 0.5),
        Vector3::new(1.0, -1.0, 0.5),
        Vector3::new(1.0, 1.0, 0.5),
        Vector3::new(-1.0, 1.0, 0.5),
    ];
    let tris = vec![[0u32, 1, 2], [0, 2, 3]];
    let bvh = Bvh::build(&verts, &tris);
    let rig = LightRig {
        dome_radius: 2.0,
        lights: vec![
            PointLight { position: Vector3::new(0.0, 0.0, 2.0), intensity: [1.0; 3] },
            PointLight { position: Vector3::new(0.0, 0.0, -2.0), intensity: [1.0; 3] },
        ],
        active: vec![true, true],
    };
    OcclusionFixture {
        bvh,
        rig,
        half_occluded: Vector3::zeros(),
        unoccluded: Vector3::new(5.0, 0.0, 0.0),
    }
}

// ---------------------------------------------------------------------------
// Fit gradient fixture
// ---------------------------------------------------------------------------

/// A four-splat scene with two lighting conditions whose targets come from a
/// perturbed copy of the parameters, so residuals and gradients are nonzero.
pub struct GradientFixture {
    pub data: FitData,
    pub params: FitParams,
    pub truth: FitParams,
    pub cfg: FitConfig,
}

fn decorate(params: &mut FitParams, phase: f64) {
    let stride = params.stride();
    let bl = params.basis_len();
    for i in 0..params.count {
        let base = i * stride;
        for c in 0..3 {
            params.data[base + c] = 0.35 + 0.25 * ((i * 3 + c) as f64 * 0.7 + phase).sin().abs();
        }
        for j in 0..bl {
            params.data[base + 3 + j] +=
                0.15 * ((i * bl + j) as f64 * 0.13 + 1.7 * phase).sin();
        }
        params.data[base + 3 + bl] = 0.12 + 0.05 * ((i as f64 + phase).cos().abs());
        params.data[base + 4 + bl] = 0.1 + 0.02 * ((i as f64 * 1.3 + phase).sin());
        for c in 0..3 {
            params.data[base + 5 + bl + c] =
                0.04 * ((i * 3 + c) as f64 * 0.41 + 0.5 * phase).sin();
        }
    }
}

pub fn gradient_fixture(basis: DiffuseBasis, seed: u64) -> Result<GradientFixture> {
    let cam = Camera::look_at(
        32,
        32,
        0.8,
        Vector3::new(0.0, 0.0, 2.5),
        Vector3::zeros(),
        Vector3::y(),
    )?;
    let positions = [
        Vector3::new(-0.3, -0.25, 0.0),
        Vector3::new(0.3, -0.2, 0.05),
        Vector3::new(-0.25, 0.3, -0.05),
        Vector3::new(0.28, 0.27, 0.1),
    ];
    let opacities = [0.85, 0.7, 0.9, 0.75];
    let worlds: Vec<WorldSplat> = positions
        .iter()
        .map(|p| WorldSplat { mean: *p, rot: Matrix3::identity() })
        .collect();
    let scales = vec![Vector3::new(0.22, 0.2, 0.01); 4];
    let frames = vec![Matrix3::identity(); 4];
    let mut settings = RenderSettings::default();
    settings.shading.shadow = false;
    settings.shading.diffuse_basis = basis;
    let pose = prepare_pose_from_parts(&cam, &worlds, &scales, &opacities, &frames, &settings)?;

    let mut truth = FitParams::init_default(4, basis);
    decorate(&mut truth, 0.0);
    let mut params = FitParams::init_default(4, basis);
    decorate(&mut params, 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conditions = Vec::new();
    let poses = vec![pose];
    for (k, count) in [6usize, 9, 5, 7].into_iter().enumerate() {
        let rig = LightRig::dome(count, 2.75, [2.0 + 0.5 * k as f64; 3]);
        let shadow: Option<Vec<f64>> = if k % 2 == 1 {
            Some((0..4).map(|_| rng.gen_range(0.35..1.0)).collect())
        } else {
            None
        };
        let npx = cam.width * cam.height;
        let placeholder = Image::new(cam.width, cam.height, 3);
        let probe = prepare_condition(
            &poses[0],
            0,
            &rig,
            None,
            shadow.as_deref(),
            placeholder,
            vec![true; npx],
        )?;
        let target = forward_image(&poses[0], &probe, &truth)?;
        conditions.push(prepare_condition(
            &poses[0],
            0,
            &rig,
            None,
            shadow.as_deref(),
            target,
            vec![true; npx],
        )?);
    }
    let data = FitData { poses, conditions, frozen: FrozenTerms::default() };
    let mut cfg = FitConfig::default();
    cfg.basis = basis;
    cfg.settings = settings;
    Ok(GradientFixture { data, params, truth, cfg })
}

/// Flat parameter indices covering every class on every primitive of the
/// four-splat fixture.
pub fn gradient_probe_indices(params: &FitParams) -> Vec<usize> {
    let stride = params.stride();
    let bl = params.basis_len();
    let mut probes = Vec::new();
    for i in 0..params.count {
        let base = i * stride;
        probes.push(base + (i % 3)); // albedo channel
        probes.push(base + 3 + (i * 7) % bl); // basis coefficient
        probes.push(base + 3 + (i * 13 + 5) % bl);
        probes.push(base + 3 + bl); // specular visibility
        probes.push(base + 4 + bl); // roughness
        probes.push(base + 5 + bl + (i % 3)); // normal offset
    }
    probes
}

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

fn harmonics_suite(seed: u64, checks: &mut Vec<CheckResult>) -> Result<()> {
    let suite = "harmonics";
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0001);

    // Orthonormality: the Gram matrix of the full order-8 basis under exact
    // quadrature must be the identity.
    let quad = sphere_quadrature(24, 40);
    let n = coeff_count(MAX_ORDER);
    let mut gram = vec![0.0f64; n * n];
    for (dir, w) in &quad {
        let basis = sh_eval_basis(Direction::normalize(*dir).unwrap(), MAX_ORDER)?;
        let b = basis.channel(0);
        for i in 0..n {
            for j in 0..=i {
                gram[i * n + j] += w * b[i] * b[j];
            }
        }
    }
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in 0..=i {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((gram[i * n + j] - target).abs());
        }
    }
    push_check(
        checks,
        suite,
        "basis_orthonormality",
        dev,
        1e-12,
        format!("max |Gram - I| over {} basis pairs, 960-node quadrature", n * (n + 1) / 2),
    );

    // Zonal placement against quadrature rotation.
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for order in [1usize, 3, 5, 8] {
        for _ in 0..3 {
            let zonal = random_zonal(&mut rng, order);
            let rot = random_rotation(&mut rng);
            worst = worst.max(zonal_rotation_error(&zonal, &rot, &quad));
            cases += 1;
        }
    }
    push_check(
        checks,
        suite,
        "zonal_rotation_vs_quadrature",
        worst,
        1e-10,
        format!("max coefficient error over {cases} (zonal set, rotation) pairs"),
    );

    // Band-limited dot products: the coefficient dot must equal the sphere
    // integral of the product of the two expansions.
    let mut worst_rel: f64 = 0.0;
    for _ in 0..5 {
        let mut light = ShVector::zeros(MAX_ORDER, 3)?;
        for v in light.coeffs_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut zh = ZhLobes::zeros();
        let mut flat = zh.to_flat();
        for v in flat.iter_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        zh = ZhLobes::from_flat(&flat)?;
        let frame = random_rotation(&mut rng);
        let transport = transport_from_zh(&zh, &frame)?;
        let dots = diffuse_dot(&transport, &light)?;
        for ch in 0..3 {
            let mut integral = 0.0;
            for (dir, w) in &quad {
                let d = Direction::normalize(*dir).unwrap();
                integral += w * transport.eval(d)[ch] * light.eval(d)[ch];
            }
            let rel = (dots[ch] - integral).abs() / integral.abs().max(1e-9);
            worst_rel = worst_rel.max(rel);
        }
    }
    push_check(
        checks,
        suite,
        "diffuse_dot_vs_integral",
        worst_rel,
        1e-9,
        "relative error of coefficient dots vs quadrature of the band-limited product",
    );

    // Texel parameter budgets for the two diffuse representations.
    let dense = texel_param_count(TexelRepr::Sh);
    let zonal = texel_param_count(TexelRepr::Zh);
    let dev = (dense as f64 - 113.0).abs() + (zonal as f64 - 51.0).abs();
    push_check(
        checks,
        suite,
        "texel_parameter_budget",
        dev,
        0.0,
        format!("dense {dense} (expected 113), three-lobe zonal {zonal} (expected 51)"),
    );
    Ok(())
}

fn splat_suite(seed: u64, checks: &mut Vec<CheckResult>) -> Result<()> {
    let suite = "splat";
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0002);
    let (w, h, channels) = (96usize, 96usize, 3usize);
    let mut worst: f64 = 0.0;
    let scenes = 6;
    for _ in 0..scenes {
        let count = rng.gen_range(8..=48);
        let (splats, values) = random_splat_scene(&mut rng, w, h, count, channels);
        let opts = CompositeOptions::default();
        let tiled = composite(w, h, &splats, &values, channels, &opts)?;
        let reference = composite_bruteforce(w, h, &splats, &values, channels)?;
        for (a, b) in tiled.accum.iter().zip(&reference.accum) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in tiled.alpha.iter().zip(&reference.alpha) {
            worst = worst.max((a - b).abs());
        }
    }
    push_check(
        checks,
        suite,
        "tiled_compositing_vs_bruteforce",
        worst,
        1e-6,
        format!("max per-channel deviation over {scenes} random {w}x{h} scenes"),
    );
    Ok(())
}

fn irradiance_suite(seed: u64, checks: &mut Vec<CheckResult>) -> Result<()> {
    let suite = "irradiance";
    let fx = occlusion_fixture();

    // BVH against exhaustive ray casts.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0003);
    let mut mismatches = 0usize;
    let rays = 4000;
    for _ in 0..rays {
        let o = Vector3::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-1.0..2.0),
        );
        let d = random_rotation(&mut rng).column(0).into_owned();
        let t_max = rng.gen_range(0.1..5.0);
        if fx.bvh.any_hit(&o, &d, 1e-12, t_max)
            != fx.bvh.any_hit_bruteforce(&o, &d, 1e-12, t_max)
        {
            mismatches += 1;
        }
    }
    push_check(
        checks,
        suite,
        "bvh_vs_bruteforce",
        mismatches as f64,
        0.0,
        format!("occlusion disagreements over {rays} random rays"),
    );

    // Unoccluded probes receive exactly 1.
    let v = normalized_irradiance(&fx.unoccluded, &fx.rig, &fx.bvh)?;
    push_check(
        checks,
        suite,
        "unoccluded_is_exactly_one",
        (v - 1.0).abs(),
        0.0,
        "normalized irradiance at a probe that sees every light",
    );

    // A symmetric half-occlusion normalizes to exactly one half.
    let v = normalized_irradiance(&fx.half_occluded, &fx.rig, &fx.bvh)?;
    push_check(
        checks,
        suite,
        "half_occlusion_is_exactly_half",
        (v - 0.5).abs(),
        1e-12,
        "probe under a blocker hiding one of two equal lights",
    );

    // One-sample estimates are unbiased: their mean over many seeds matches
    // the enumerated value within three standard errors.
    let n_seeds = 2000u64;
    let mut total = 0.0;
    for k in 0..n_seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k));
        total += sampled_irradiance(&fx.half_occluded, &fx.rig, &fx.bvh, 1, &mut rng)?;
    }
    let mean = total / n_seeds as f64;
    let exact = 0.5;
    let se = (exact * (1.0 - exact) / n_seeds as f64).sqrt();
    push_check(
        checks,
        suite,
        "one_sample_estimator_is_unbiased",
        (mean - exact).abs(),
        3.0 * se,
        format!("|mean - exact| over {n_seeds} single-sample seeds vs 3 standard errors"),
    );
    Ok(())
}

fn fit_suite(seed: u64, checks: &mut Vec<CheckResult>) -> Result<()> {
    let suite = "fit";
    for (basis, tag) in [
        (DiffuseBasis::Zh, "three_lobe_zonal"),
        (DiffuseBasis::ShUnrotated, "dense_unrotated"),
    ] {
        let fx = gradient_fixture(basis, seed ^ 0x5eed_0004)?;
        let probes = gradient_probe_indices(&fx.params);
        let reports = finite_difference_check(
            &fx.data,
            &fx.params,
            &fx.cfg,
            &[0, 1],
            100,
            &probes,
            1e-5,
        )?;
        let worst = reports.iter().map(|r| r.rel).fold(0.0, f64::max);
        push_check(
            checks,
            suite,
            &format!("gradients_vs_finite_differences_{tag}"),
            worst,
            1e-3,
            format!("max relative error over {} probed parameters", probes.len()),
        );
    }

    // At the ground truth, the reconstruction objective sits at an exact
    // fixed point: zero loss, bitwise-zero gradient.
    let fx = gradient_fixture(DiffuseBasis::Zh, seed ^ 0x5eed_0005)?;
    let mut cfg = fx.cfg.clone();
    cfg.weights = LossWeights::reconstruction_only();
    let (breakdown, _, grads) = eval_objective(&fx.data, &fx.truth, &cfg, &[0, 1], 0)?;
    let gmax = grads.iter().fold(0.0f64, |a, g| a.max(g.abs()));
    push_check(
        checks,
        suite,
        "ground_truth_is_a_fixed_point",
        breakdown.rec.abs().max(gmax),
        0.0,
        "reconstruction loss and max |gradient| at the generating parameters",
    );
    Ok(())
}
