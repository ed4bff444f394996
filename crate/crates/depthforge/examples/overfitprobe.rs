// scratch: the overfit smoke experiment at candidate widths
use depthforge::camrig::{build_rig, ProjectionKind};
use depthforge::depthcodec::{fuse, half_bin_width, quantize, DepthMap, DEPTH_FAR, DEPTH_NEAR};
use depthforge::metrics::chamfer;
use depthforge::model::ModelConfig;
use depthforge::rasterizer::{icosphere, normalize_mesh, DepthRenderer, TriangleMesh};
use depthforge::trainer::{full_loss, reconstruct, run_training, Dataset, TrainConfig, TrainObject};

fn cube_mesh() -> TriangleMesh {
    let mut vertices = Vec::new();
    for &sx in &[-1.0f64, 1.0] {
        for &sy in &[-1.0f64, 1.0] {
            for &sz in &[-1.0f64, 1.0] {
                vertices.push([sx * 0.3, sy * 0.3, sz * 0.3]);
            }
        }
    }
    let triangles = vec![
        [0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5], [0, 4, 5], [0, 5, 1],
        [2, 3, 7], [2, 7, 6], [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3],
    ];
    TriangleMesh { vertices, triangles }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let base: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(12);
    let iters: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let cfg = ModelConfig {
        resolution: 32,
        bits: 6,
        latent_dim: 64,
        base_channels: base,
        n_classes: 1,
        n_views: 20,
        eps_smooth: 0.2,
    };
    let rig = build_rig(32, ProjectionKind::Perspective).unwrap();
    let meshes = vec![normalize_mesh(&icosphere(2)).unwrap().mesh, normalize_mesh(&cube_mesh()).unwrap().mesh];
    let mut objects = Vec::new();
    let mut gt_clouds = Vec::new();
    for (i, mesh) in meshes.iter().enumerate() {
        let r = DepthRenderer::new(mesh.clone());
        let maps: Vec<DepthMap> = rig.views.iter()
            .map(|v| quantize(&r.render(v), 6, DEPTH_NEAR, DEPTH_FAR, v.view_id, ProjectionKind::Perspective).unwrap().map)
            .collect();
        let pairs: Vec<_> = maps.iter().zip(rig.views.iter()).collect();
        gt_clouds.push(fuse(&pairs, false).unwrap());
        objects.push(TrainObject { object_id: format!("m{i}"), class_id: 0, maps });
    }
    let dataset = Dataset::from_objects(objects, 1, ProjectionKind::Perspective).unwrap();
    let tc = TrainConfig { batch_size: 2, v_in: 2, v_out: 2, iterations: iters, seed: 7, checkpoint_every: 1_000_000, ..TrainConfig::default() };

    let t0 = std::time::Instant::now();
    let out = run_training(&dataset, &cfg, &tc, None, None, |i, l| {
        if i % 200 == 0 { eprintln!("  iter {i}: step loss {l:.4} ({:.0}s)", t0.elapsed().as_secs_f64()); }
    }).unwrap();

    // Initial loss with the same seed's fresh params.
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(tc.seed);
    let fresh = depthforge::model::init_params(&cfg, &mut rng).unwrap();
    let initial = full_loss(&dataset, &fresh, &cfg).unwrap();
    let final_l = full_loss(&dataset, &out.params, &cfg).unwrap();
    println!("base={base} iters={iters}: initial {initial:.4} -> final {final_l:.4} ({:.2}% of initial)", 100.0 * final_l / initial);

    // Per-view code accuracy with all-view codes.
    for (i, obj) in dataset.objects.iter().enumerate() {
        let (pred_maps, pred_cloud) = reconstruct(&obj.maps, 0, &out.params, &cfg, &rig).unwrap();
        let mut worst = 1.0f64;
        for (pm, gm) in pred_maps.iter().zip(&obj.maps) {
            let same = pm.codes.iter().zip(&gm.codes).filter(|(a, b)| a == b).count();
            worst = worst.min(same as f64 / gm.codes.len() as f64);
        }
        // Single-view reconstruction CD.
        let (_, sv_cloud) = reconstruct(&obj.maps[..1], 0, &out.params, &cfg, &rig).unwrap();
        let cd = chamfer(&sv_cloud, &gt_clouds[i]).unwrap();
        let bound = half_bin_width(6, 2.0, 3.0);
        println!("  obj{i}: worst per-view accuracy {:.3}%; all-view cloud {} pts; 1-view CD {cd:.6} (10x bound = {:.6}) fused-ok={}",
            worst * 100.0, pred_cloud.len(), 10.0 * bound, cd < 10.0 * bound);
    }
    println!("total {:.1} min", t0.elapsed().as_secs_f64() / 60.0);
}
