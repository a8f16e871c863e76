//! Temporary diagnostic for the round-trip fit; deleted before finalizing.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use splatlight::fit::{
    build_training_data, evaluate_conditions, eval_objective, fit_appearance, FitConfig, FitParams,
};
use splatlight::lights::LightRig;
use splatlight::pipeline::Condition;
use splatlight::scene::generate_ground_truth;
use splatlight::scene::rig::{ArmSpec, RigSpec};
use splatlight::shading::DiffuseBasis;
use splatlight::splat::Camera;

#[test]
fn diagnose_round_trip() {
    let spec = RigSpec::Arm(ArmSpec { grid: 24, ..ArmSpec::default() });
    let scene = generate_ground_truth(&spec, 0).unwrap();
    let cam = Camera::look_at(
        96,
        96,
        45f64.to_radians(),
        Vector3::new(0.25, -1.05, 0.6),
        Vector3::new(0.0, 0.0, 0.12),
        Vector3::z(),
    )
    .unwrap();
    let dome = LightRig::dome(1024, 2.75, [0.05; 3]);
    let poses: [[f64; 2]; 8] = [
        [0.0, 0.0],
        [0.5, 0.3],
        [-0.4, 0.8],
        [0.8, 1.1],
        [-0.9, 0.2],
        [1.1, 0.6],
        [0.3, 1.25],
        [-1.1, 1.0],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0007);
    let mut train = Vec::new();
    for angles in &poses {
        for _ in 0..2 {
            train.push(Condition {
                angles: angles.to_vec(),
                lights: dome.random_subset(&mut rng, 10, 20),
                env: None,
            });
        }
    }
    let holdout: Vec<Condition> = (0..4)
        .map(|_| Condition {
            angles: poses[3].to_vec(),
            lights: dome.random_subset(&mut rng, 10, 20),
            env: None,
        })
        .collect();

    let mut cfg = FitConfig::default();
    cfg.steps = 2000;
    cfg.lr = 5e-3;
    cfg.trace_every = 200;
    cfg.settings.shading.shadow = false;
    cfg.basis = DiffuseBasis::Zh;

    let data = build_training_data(&scene, &cam, &train, DiffuseBasis::Zh, &cfg).unwrap();

    // Target statistics per condition.
    for (i, cond) in data.conditions.iter().enumerate().take(4) {
        let d = cond.target.data();
        let fg: Vec<f64> = d
            .iter()
            .enumerate()
            .filter(|(j, _)| cond.mask[j / 3])
            .map(|(_, v)| *v)
            .collect();
        let mx = fg.iter().cloned().fold(0.0f64, f64::max);
        let mean = fg.iter().sum::<f64>() / fg.len() as f64;
        let over1 = fg.iter().filter(|v| **v > 1.0).count() as f64 / fg.len() as f64;
        println!(
            "cond {i}: fg mean {mean:.3} max {mx:.3} frac>1 {over1:.3} maskpx {}",
            cond.mask.iter().filter(|m| **m).count()
        );
    }

    // GT parameters through the evaluator: the ceiling of what a fit can do.
    let gt = FitParams::from_scene(&scene).unwrap();
    let hdata = build_training_data(&scene, &cam, &holdout, DiffuseBasis::Zh, &cfg).unwrap();
    let evals = evaluate_conditions(&hdata.poses, &hdata.conditions, &gt).unwrap();
    for (i, e) in evals.iter().enumerate() {
        println!("GT holdout {i}: psnr {:.2} ssim {:.4}", e.psnr, e.ssim);
    }
    let full: Vec<usize> = (0..data.conditions.len()).collect();
    let (bd, total, _) = eval_objective(&data, &gt, &cfg, &full, 100_000).unwrap();
    println!("GT objective: total {total:.6} rec {:.6}", bd.rec);

    // The actual fit, with the trace printed.
    let init = FitParams::init_default(scene.primitives.len(), DiffuseBasis::Zh);
    let (bd0, t0, _) = eval_objective(&data, &init, &cfg, &full, 0).unwrap();
    println!("init objective: total {t0:.6} rec {:.6}", bd0.rec);
    let outcome = fit_appearance(&data, init, &cfg).unwrap();
    for row in &outcome.trace {
        println!(
            "step {:5}: total {:.6} rec {:.6} normal {:.6} orient {:.6} neg {:.6}",
            row.step, row.total, row.breakdown.rec, row.breakdown.normal,
            row.breakdown.normal_orient, row.breakdown.neg_color
        );
    }
    let evals = evaluate_conditions(&hdata.poses, &hdata.conditions, &outcome.params).unwrap();
    for (i, e) in evals.iter().enumerate() {
        println!("fit holdout {i}: psnr {:.2} ssim {:.4}", e.psnr, e.ssim);
    }

    // Train-set quality at the same pose (conditions 12..16 share pose 3).
    let tevals = evaluate_conditions(&data.poses, &data.conditions, &outcome.params).unwrap();
    for (i, e) in tevals.iter().enumerate() {
        println!("fit train {i} (pose {}): psnr {:.2}", data.conditions[i].pose, e.psnr);
    }

    // Residual anatomy on holdout 0: percentiles, and whether the worst
    // pixels are specular.
    use splatlight::fit::forward_image;
    let cond = &hdata.conditions[0];
    let img = forward_image(&hdata.poses[cond.pose], cond, &outcome.params).unwrap();
    let mut gt_nospec = gt.clone();
    {
        let stride = gt_nospec.stride();
        let bl = gt_nospec.basis_len();
        for i in 0..gt_nospec.count {
            gt_nospec.data[i * stride + 3 + bl] = 0.0;
        }
    }
    let diffuse_only = forward_image(&hdata.poses[cond.pose], cond, &gt_nospec).unwrap();
    let t = cond.target.data();
    let f = img.data();
    let ds = diffuse_only.data();
    let mut rows: Vec<(f64, f64, f64)> = Vec::new(); // (residual, target, spec magnitude)
    for p in 0..cond.mask.len() {
        if !cond.mask[p] {
            continue;
        }
        for c in 0..3 {
            let j = 3 * p + c;
            rows.push(((f[j] - t[j]).abs(), t[j], (t[j] - ds[j]).abs()));
        }
    }
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let pct = |q: f64| rows[((rows.len() - 1) as f64 * q) as usize];
    for q in [0.5, 0.9, 0.99, 0.999, 1.0] {
        let (r, tv, sm) = pct(q);
        println!("residual p{:.1}: {:.4} (target {:.3}, GT spec part {:.3})", 100.0 * q, r, tv, sm);
    }
    let top: Vec<&(f64, f64, f64)> = rows.iter().rev().take(200).collect();
    let spec_frac =
        top.iter().filter(|(_, _, sm)| *sm > 0.05).count() as f64 / top.len() as f64;
    let mse: f64 = rows.iter().map(|(r, _, _)| r * r).sum::<f64>() / rows.len() as f64;
    println!("worst-200 residual samples with GT specular >0.05: {spec_frac:.2}; masked MSE {mse:.5}");
}
