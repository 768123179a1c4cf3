use meshgmm::geometry::Vec3;
use meshgmm::harness::{run_frame_pair_d2d, FramePairConfig, Intrinsics, SyntheticScene};
use meshgmm::registration::{rotation_error, RigidTransform};

fn intrinsics() -> Intrinsics {
    Intrinsics { fx: 50.0, fy: 50.0, cx: 31.5, cy: 23.5 }
}

fn pair(shift: Vec3, noise: f64, seed: u64) -> (meshgmm::harness::DepthImage, meshgmm::harness::DepthImage) {
    let scene = SyntheticScene::room_corner();
    let a = scene.render(&RigidTransform::identity(), &intrinsics(), 64, 48);
    let b = scene.render(&RigidTransform::new(Default::default(), shift), &intrinsics(), 64, 48);
    (a.with_noise(noise, 2 * seed).unwrap(), b.with_noise(noise, 2 * seed + 1).unwrap())
}

#[test]
fn one_centimetre_shift_is_recovered_in_most_seeds() {
    let shift = Vec3::new(0.6, -0.4, 0.69) / Vec3::new(0.6, -0.4, 0.69).norm() * 0.01;
    let mut within = 0;
    let mut errors = Vec::new();
    for seed in 0..10 {
        let (a, b) = pair(shift, 0.0005, seed);
        let config = FramePairConfig { k: 30, seed, ..Default::default() };
        let r = run_frame_pair_d2d(&a, &b, &intrinsics(), &config).unwrap();
        // Camera b sits at `shift`, so frame-a coordinates map to frame b by `-shift`.
        let rel = (r.transform.translation() + shift).norm() / shift.norm();
        errors.push(rel);
        if rel <= 0.2 {
            within += 1;
        }
    }
    assert!(within >= 6, "relative translation errors {errors:?}");
}

#[test]
fn identical_frames_give_identity() {
    let (a, _) = pair(Vec3::zeros(), 0.0, 0);
    let config = FramePairConfig { k: 30, ..Default::default() };
    let r = run_frame_pair_d2d(&a, &a, &intrinsics(), &config).unwrap();
    assert!(rotation_error(&r.transform, &RigidTransform::identity()) < 1e-2);
    assert!(r.transform.translation().norm() < 1e-3);
}

#[test]
fn uncertainty_and_point_variants_both_converge() {
    let shift = Vec3::new(0.01, 0.0, 0.0);
    let (a, b) = pair(shift, 0.0, 3);
    let with = run_frame_pair_d2d(&a, &b, &intrinsics(), &FramePairConfig { k: 30, ..Default::default() }).unwrap();
    let without = run_frame_pair_d2d(
        &a,
        &b,
        &intrinsics(),
        &FramePairConfig { k: 30, uncertainty: false, ..Default::default() },
    )
    .unwrap();
    assert!(with.converged && without.converged);
    eprintln!("iterations with rectangles {}, with points {}", with.iterations, without.iterations);
}
