//! Command-line driver: scene generation, rendering, relighting sweeps,
//! irradiance baking, appearance fitting, and self-validation.
//!
//! Exit codes: 0 success, 2 a validation suite reported failures, 3 malformed
//! input (including bad command lines). `PRT_THREADS` caps worker threads.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use splatlight::fit::{
    build_training_data, evaluate_conditions, fit_appearance, metric_psnr, FitParams,
};
use splatlight::img::Image;
use splatlight::irradiance::IrradianceMap;
use splatlight::lights::{EnvironmentMap, LightRig};
use splatlight::pipeline::{
    light_expansion, pose_geometry, render_condition, render_prepared, shadow_map, zh_transports,
    Condition, RenderSettings, RAY_OFFSET_FRACTION,
};
use splatlight::scene::rig::{ArmSpec, HeadSpec, RigSpec};
use splatlight::scene::{generate_ground_truth, Scene};
use splatlight::scene_io::{
    load_scene, read_json, save_scene, write_json, write_trace_csv, CameraSpec, FitJobSpec,
    PoseSpec,
};
use splatlight::shading::{DiffuseBasis, NormalSource, ShadingConfig};
use splatlight::validate::run_suites;
use splatlight::Error;

const EXIT_OK: i32 = 0;
const EXIT_VALIDATION: i32 = 2;
const EXIT_MALFORMED: i32 = 3;

#[derive(Parser)]
#[command(
    name = "splatlight",
    version,
    about = "Relightable articulated Gaussian scenes: render, relight, bake irradiance, fit, validate"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a toy rig with ground-truth appearance, a light dome, and
    /// default camera/pose files.
    GenScene(GenSceneArgs),
    /// Render one pose under a light rig and/or environment map.
    Render(RenderArgs),
    /// Render a sweep of lighting conditions at a fixed pose.
    Relight(RelightArgs),
    /// Bake the per-texel normalized-irradiance map for a pose.
    Irradiance(IrradianceArgs),
    /// Fit appearance parameters to rendered targets.
    Fit(FitArgs),
    /// Run self-check suites and emit a JSON report.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RigKind {
    Arm,
    Head,
}

#[derive(Args)]
struct GenSceneArgs {
    /// Which toy rig family to build.
    #[arg(long, value_enum, default_value = "arm")]
    rig: RigKind,
    /// Ground-truth appearance seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Texels per UV-square side (overrides the rig default).
    #[arg(long)]
    grid: Option<usize>,
    /// Number of dome lights.
    #[arg(long, default_value_t = 1024)]
    light_count: usize,
    /// Dome radius in scene units.
    #[arg(long, default_value_t = 2.75)]
    dome_radius: f64,
    /// Per-channel intensity of every dome light.
    #[arg(long, default_value_t = 2.5)]
    intensity: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Pipeline toggles shared by the rendering commands.
#[derive(Args, Default)]
struct FlagArgs {
    /// Repeatable key=value toggles: diffuse_basis={zh,sh},
    /// deferred={on,off}, shadow={on,off}, normal={gaussian,mesh}.
    #[arg(long = "flag", value_name = "KEY=VALUE")]
    flags: Vec<String>,
}

impl FlagArgs {
    /// Applies the toggles; returns the set of keys that were given.
    fn apply(&self, cfg: &mut ShadingConfig) -> Result<BTreeSet<String>, Error> {
        let mut seen = BTreeSet::new();
        for raw in &self.flags {
            let (key, value) = raw.split_once('=').ok_or_else(|| {
                Error::malformed(format!("flag {raw:?} is not of the form key=value"))
            })?;
            match (key, value) {
                ("diffuse_basis", "zh") => cfg.diffuse_basis = DiffuseBasis::Zh,
                ("diffuse_basis", "sh") => cfg.diffuse_basis = DiffuseBasis::ShUnrotated,
                ("deferred", "on") => cfg.deferred = true,
                ("deferred", "off") => cfg.deferred = false,
                ("shadow", "on") => cfg.shadow = true,
                ("shadow", "off") => cfg.shadow = false,
                ("normal", "gaussian") => cfg.normal_source = NormalSource::Gaussian,
                ("normal", "mesh") => cfg.normal_source = NormalSource::Mesh,
                _ => {
                    return Err(Error::malformed(format!(
                        "unknown flag {key}={value}; valid: diffuse_basis={{zh,sh}} \
                         deferred={{on,off}} shadow={{on,off}} normal={{gaussian,mesh}}"
                    )))
                }
            }
            seen.insert(key.to_string());
        }
        Ok(seen)
    }
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    camera: PathBuf,
    /// Pose file; the rest pose when omitted.
    #[arg(long)]
    pose: Option<PathBuf>,
    /// Point-light rig JSON.
    #[arg(long)]
    lights: Option<PathBuf>,
    /// Environment map (.pfm linear or .png sRGB).
    #[arg(long)]
    env: Option<PathBuf>,
    /// Shadow rays per texel; 0 enumerates the lights exactly.
    #[arg(long, default_value_t = 64)]
    spp: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: FlagArgs,
}

#[derive(Args)]
struct RelightArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    camera: PathBuf,
    #[arg(long)]
    pose: Option<PathBuf>,
    /// Point-light rig JSON (required for light-subset sweeps).
    #[arg(long)]
    lights: Option<PathBuf>,
    /// Sweep description JSON: {"light_subsets": [[..], ..]} or
    /// {"env_maps": ["a.pfm", ..]}.
    #[arg(long)]
    sweep: PathBuf,
    /// Directory of reference frame_NNN.pfm images to score against.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    spp: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: FlagArgs,
}

#[derive(Args)]
struct IrradianceArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    pose: Option<PathBuf>,
    #[arg(long)]
    lights: PathBuf,
    /// Shadow rays per texel; 0 enumerates the lights exactly.
    #[arg(long, default_value_t = 64)]
    spp: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Ground-truth scene whose renders become the fitting targets.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    camera: PathBuf,
    #[arg(long)]
    lights: PathBuf,
    #[arg(long)]
    env: Option<PathBuf>,
    /// Fit job JSON (steps, rates, weights, train/holdout conditions).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 64)]
    spp: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: FlagArgs,
}

#[derive(Args)]
struct ValidateArgs {
    /// Suite to run: harmonics, splat, irradiance, fit, or all.
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    if let Ok(raw) = std::env::var("PRT_THREADS") {
        match raw.trim().parse::<usize>() {
            Ok(n) if n >= 1 => {
                // Ignore the error when a pool already exists (tests).
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: PRT_THREADS must be a positive integer, got {raw:?}");
                std::process::exit(EXIT_MALFORMED);
            }
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_MALFORMED,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_MALFORMED
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.cmd {
        Cmd::GenScene(a) => cmd_gen_scene(a),
        Cmd::Render(a) => cmd_render(a),
        Cmd::Relight(a) => cmd_relight(a),
        Cmd::Irradiance(a) => cmd_irradiance(a),
        Cmd::Fit(a) => cmd_fit(a),
        Cmd::Validate(a) => cmd_validate(a),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn load_pose(path: &Option<PathBuf>, scene: &Scene) -> Result<Vec<f64>, Error> {
    match path {
        Some(p) => {
            let spec: PoseSpec = read_json(p)?;
            Ok(spec.angles)
        }
        None => Ok(vec![0.0; scene.rig.angle_count()]),
    }
}

fn load_rig(path: &Path) -> Result<LightRig, Error> {
    let rig: LightRig = read_json(path)?;
    rig.validate()?;
    Ok(rig)
}

fn default_camera(kind: RigKind) -> CameraSpec {
    match kind {
        RigKind::Arm => CameraSpec {
            width: 256,
            height: 256,
            fov_y_deg: 45.0,
            eye: [0.25, -1.05, 0.6],
            target: [0.0, 0.0, 0.12],
            up: [0.0, 0.0, 1.0],
        },
        RigKind::Head => CameraSpec {
            width: 256,
            height: 256,
            fov_y_deg: 50.0,
            eye: [0.1, -0.9, 0.45],
            target: [0.0, 0.0, 0.3],
            up: [0.0, 0.0, 1.0],
        },
    }
}

fn cmd_gen_scene(a: GenSceneArgs) -> Result<i32, Error> {
    ensure_dir(&a.out)?;
    let spec = match a.rig {
        RigKind::Arm => {
            let mut s = ArmSpec::default();
            if let Some(g) = a.grid {
                s.grid = g;
            }
            RigSpec::Arm(s)
        }
        RigKind::Head => {
            let mut s = HeadSpec::default();
            if let Some(g) = a.grid {
                s.grid = g;
            }
            RigSpec::Head(s)
        }
    };
    let scene = generate_ground_truth(&spec, a.seed)?;
    let scene_path = a.out.join("scene.json");
    save_scene(&scene, &scene_path)?;

    let rig = LightRig::dome(a.light_count, a.dome_radius, [a.intensity; 3]);
    write_json(&a.out.join("lights.json"), &rig)?;
    write_json(&a.out.join("camera.json"), &default_camera(a.rig))?;
    write_json(
        &a.out.join("pose.json"),
        &PoseSpec { angles: vec![0.0; scene.rig.angle_count()] },
    )?;

    println!(
        "wrote {} ({} primitives, {} dome lights)",
        scene_path.display(),
        scene.primitives.len(),
        a.light_count
    );
    Ok(EXIT_OK)
}

/// Resolved lighting for a render-style command.
struct Lighting {
    rig: LightRig,
    env: Option<EnvironmentMap>,
}

fn resolve_lighting(
    lights: &Option<PathBuf>,
    env: &Option<PathBuf>,
    shading: &mut ShadingConfig,
    explicit: &BTreeSet<String>,
) -> Result<Lighting, Error> {
    match (lights, env) {
        (Some(l), None) => Ok(Lighting { rig: load_rig(l)?, env: None }),
        (Some(l), Some(e)) => Ok(Lighting {
            rig: load_rig(l)?,
            env: Some(EnvironmentMap::load(e)?),
        }),
        (None, Some(e)) => {
            // No point lights: irradiance has no normalizer, so the shadow
            // pass cannot run. Turn it off unless explicitly requested.
            if shading.shadow {
                if explicit.contains("shadow") {
                    return Err(Error::malformed(
                        "shadow=on needs a point-light rig; environment-only lighting \
                         has no irradiance normalizer",
                    ));
                }
                shading.shadow = false;
            }
            Ok(Lighting {
                rig: LightRig { dome_radius: 1.0, lights: Vec::new(), active: Vec::new() },
                env: Some(EnvironmentMap::load(e)?),
            })
        }
        (None, None) => Err(Error::malformed("provide --lights and/or --env")),
    }
}

fn settings_for(spp: usize, seed: u64) -> RenderSettings {
    let mut s = RenderSettings::default();
    s.irradiance.spp = spp;
    s.irradiance.seed = seed;
    s
}

#[derive(Serialize)]
struct RenderMeta<'a> {
    scene: &'a Path,
    camera: &'a Path,
    pose_angles: &'a [f64],
    spp: usize,
    seed: u64,
    deferred: bool,
    shadow: bool,
    diffuse_basis: DiffuseBasis,
    normal_source: NormalSource,
}

fn cmd_render(a: RenderArgs) -> Result<i32, Error> {
    ensure_dir(&a.out)?;
    let scene = load_scene(&a.scene)?;
    let cam = read_json::<CameraSpec>(&a.camera)?.build()?;
    let angles = load_pose(&a.pose, &scene)?;
    let mut settings = settings_for(a.spp, a.seed);
    let explicit = a.flags.apply(&mut settings.shading)?;
    let lighting = resolve_lighting(&a.lights, &a.env, &mut settings.shading, &explicit)?;

    let cond = Condition { angles: angles.clone(), lights: lighting.rig, env: lighting.env };
    let out = render_condition(&scene, &cam, &cond, &settings)?;

    out.image.write_pfm(&a.out.join("render.pfm"))?;
    out.image.write_png(&a.out.join("render.png"))?;
    if let Some(gb) = &out.gbuffer {
        for (name, img) in gb.to_images() {
            img.write_pfm(&a.out.join(format!("gbuffer_{name}.pfm")))?;
            if name == "diffuse" {
                img.write_png(&a.out.join("gbuffer_diffuse.png"))?;
            }
        }
    }
    if let Some(map) = &out.shadow_map {
        irradiance_image(map).write_pfm(&a.out.join("shadow_uv.pfm"))?;
    }
    write_json(
        &a.out.join("meta.json"),
        &RenderMeta {
            scene: &a.scene,
            camera: &a.camera,
            pose_angles: &angles,
            spp: a.spp,
            seed: a.seed,
            deferred: settings.shading.deferred,
            shadow: settings.shading.shadow,
            diffuse_basis: settings.shading.diffuse_basis,
            normal_source: settings.shading.normal_source,
        },
    )?;
    println!("wrote {}", a.out.join("render.pfm").display());
    Ok(EXIT_OK)
}

/// Sweep description: exactly one of the two lists.
#[derive(Deserialize)]
struct SweepSpec {
    #[serde(default)]
    light_subsets: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    env_maps: Option<Vec<PathBuf>>,
}

fn cmd_relight(a: RelightArgs) -> Result<i32, Error> {
    ensure_dir(&a.out)?;
    let scene = load_scene(&a.scene)?;
    let cam = read_json::<CameraSpec>(&a.camera)?.build()?;
    let angles = load_pose(&a.pose, &scene)?;
    let sweep: SweepSpec = read_json(&a.sweep)?;
    let mut settings = settings_for(a.spp, a.seed);
    let explicit = a.flags.apply(&mut settings.shading)?;

    // Shared pose caches: the pose is fixed across the sweep.
    let geom = pose_geometry(&scene, &angles)?;
    let transports = zh_transports(&scene, &geom)?;

    let frames: Vec<Condition> = match (&sweep.light_subsets, &sweep.env_maps) {
        (Some(subsets), None) => {
            let rig = match &a.lights {
                Some(p) => load_rig(p)?,
                None => return Err(Error::malformed("light-subset sweeps need --lights")),
            };
            subsets
                .iter()
                .map(|subset| {
                    for &i in subset {
                        if i >= rig.len() {
                            return Err(Error::malformed(format!(
                                "sweep light index {i} out of range for a rig of {}",
                                rig.len()
                            )));
                        }
                    }
                    Ok(Condition {
                        angles: angles.clone(),
                        lights: rig.with_active_subset(subset),
                        env: None,
                    })
                })
                .collect::<Result<_, Error>>()?
        }
        (None, Some(paths)) => {
            if settings.shading.shadow {
                if explicit.contains("shadow") {
                    return Err(Error::malformed(
                        "shadow=on needs a point-light rig; environment sweeps have none",
                    ));
                }
                settings.shading.shadow = false;
            }
            let empty = LightRig { dome_radius: 1.0, lights: Vec::new(), active: Vec::new() };
            paths
                .iter()
                .map(|p| {
                    Ok(Condition {
                        angles: angles.clone(),
                        lights: empty.clone(),
                        env: Some(EnvironmentMap::load(p)?),
                    })
                })
                .collect::<Result<_, Error>>()?
        }
        _ => {
            return Err(Error::malformed(
                "sweep must set exactly one of light_subsets or env_maps",
            ))
        }
    };

    let mut psnr_rows: Vec<(usize, f64)> = Vec::new();
    for (i, cond) in frames.iter().enumerate() {
        // A frame with no active lights has no irradiance normalizer; its
        // foreground is black regardless, so skip the shadow pass.
        let mut frame_settings = settings.clone();
        if cond.lights.active_count() == 0 {
            frame_settings.shading.shadow = false;
        }
        let light_sh = light_expansion(&cond.lights, cond.env.as_ref())?;
        let out =
            render_prepared(&scene, &cam, cond, &frame_settings, &geom, &light_sh, &transports)?;
        let stem = format!("frame_{i:03}");
        out.image.write_pfm(&a.out.join(format!("{stem}.pfm")))?;
        out.image.write_png(&a.out.join(format!("{stem}.png")))?;
        if let Some(reference) = &a.reference {
            // Score at file precision: both sides re-read from PFM so the CSV
            // describes the artifacts on disk, not transient in-memory state.
            let produced = Image::read_pfm(&a.out.join(format!("{stem}.pfm")))?;
            let target = Image::read_pfm(&reference.join(format!("{stem}.pfm")))?;
            psnr_rows.push((i, metric_psnr(&produced, &target, None)?));
        }
    }
    if !psnr_rows.is_empty() {
        let mut csv = String::from("frame,psnr\n");
        for (i, v) in &psnr_rows {
            csv.push_str(&format!("{i},{v:?}\n"));
        }
        fs::write(a.out.join("psnr.csv"), csv)?;
    }
    println!("wrote {} frames to {}", frames.len(), a.out.display());
    Ok(EXIT_OK)
}

/// Lays the per-texel map out as one column of part charts (grid wide,
/// part_count * grid tall).
fn irradiance_image(map: &IrradianceMap) -> Image {
    let g = map.grid;
    let mut img = Image::new(g, map.part_count * g, 1);
    for (i, v) in map.values.iter().enumerate() {
        img.data_mut()[i] = *v;
    }
    img
}

fn cmd_irradiance(a: IrradianceArgs) -> Result<i32, Error> {
    ensure_dir(&a.out)?;
    let scene = load_scene(&a.scene)?;
    let angles = load_pose(&a.pose, &scene)?;
    let rig = load_rig(&a.lights)?;
    let geom = pose_geometry(&scene, &angles)?;
    let opts = splatlight::irradiance::IrradianceOptions {
        spp: a.spp,
        seed: a.seed,
        ray_offset: RAY_OFFSET_FRACTION * geom.bounding_radius.max(1e-9),
        ..Default::default()
    };
    let map = shadow_map(&scene, &geom, &rig, &opts)?;
    let img = irradiance_image(&map);
    img.write_pfm(&a.out.join("irradiance.pfm"))?;
    img.write_png(&a.out.join("irradiance.png"))?;
    write_json(
        &a.out.join("irradiance.json"),
        &serde_json::json!({
            "grid": map.grid,
            "part_count": map.part_count,
            "spp": map.spp,
            "seed": map.seed,
            "occupied": map.occupied.iter().filter(|o| **o).count(),
        }),
    )?;
    println!("wrote {}", a.out.join("irradiance.pfm").display());
    Ok(EXIT_OK)
}

fn cmd_fit(a: FitArgs) -> Result<i32, Error> {
    ensure_dir(&a.out)?;
    let scene = load_scene(&a.scene)?;
    let cam = read_json::<CameraSpec>(&a.camera)?.build()?;
    let rig = load_rig(&a.lights)?;
    let env = a.env.as_ref().map(|p| EnvironmentMap::load(p)).transpose()?;
    let job: FitJobSpec = read_json(&a.config)?;
    if job.train.is_empty() {
        return Err(Error::malformed("fit config lists no training conditions"));
    }

    let mut settings = settings_for(a.spp, a.seed);
    a.flags.apply(&mut settings.shading)?;
    if !settings.shading.deferred {
        return Err(Error::malformed("fitting requires the deferred pipeline (deferred=on)"));
    }
    let cfg = job.to_config(settings);

    let train: Vec<Condition> = job
        .train
        .iter()
        .map(|c| c.to_condition(&rig, env.as_ref()))
        .collect::<Result<_, Error>>()?;
    let data = build_training_data(&scene, &cam, &train, cfg.basis, &cfg)?;
    let init = FitParams::init_default(scene.primitives.len(), cfg.basis);
    let outcome = fit_appearance(&data, init, &cfg)?;
    write_trace_csv(&a.out.join("trace.csv"), &outcome.trace)?;

    let mut holdout_scores = Vec::new();
    if !job.holdout.is_empty() {
        let holdout: Vec<Condition> = job
            .holdout
            .iter()
            .map(|c| c.to_condition(&rig, env.as_ref()))
            .collect::<Result<_, Error>>()?;
        let hdata = build_training_data(&scene, &cam, &holdout, cfg.basis, &cfg)?;
        for ev in evaluate_conditions(&hdata.poses, &hdata.conditions, &outcome.params)? {
            holdout_scores.push(serde_json::json!({ "psnr": ev.psnr, "ssim": ev.ssim }));
        }
    }

    // The three-lobe zonal representation round-trips into a scene file; the
    // dense ablation has no scene slot and keeps its parameters in memory.
    let checkpoint = if cfg.basis == DiffuseBasis::Zh {
        let mut fitted = scene.clone();
        outcome.params.apply_to_scene(&mut fitted)?;
        splatlight::scene_io::quantize_scene(&mut fitted);
        let path = a.out.join("fitted_scene.json");
        save_scene(&fitted, &path)?;
        Some(path)
    } else {
        None
    };

    write_json(
        &a.out.join("fit_summary.json"),
        &serde_json::json!({
            "steps": cfg.steps,
            "basis": cfg.basis,
            "final_total": outcome.final_total,
            "final_breakdown": outcome.final_breakdown,
            "holdout": holdout_scores,
            "checkpoint": checkpoint.as_ref().map(|p| p.display().to_string()),
        }),
    )?;
    println!(
        "fit of {} steps finished; objective {:.6e}",
        cfg.steps, outcome.final_total
    );
    Ok(EXIT_OK)
}

fn cmd_validate(a: ValidateArgs) -> Result<i32, Error> {
    let report = run_suites(&a.suite, a.seed)?;
    let text = serde_json::to_string_pretty(&report)?;
    match &a.out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)?;
                }
            }
            fs::write(path, format!("{text}\n"))?;
        }
        None => println!("{text}"),
    }
    for c in &report.checks {
        let status = if c.pass { "pass" } else { "FAIL" };
        eprintln!(
            "[{status}] {}::{} measured {:.3e} tolerance {:.3e}",
            c.suite, c.name, c.measured, c.tolerance
        );
    }
    if report.passed {
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_VALIDATION)
    }
}
