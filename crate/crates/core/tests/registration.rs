mod common;

use common::registration_trial;
use moire_core::align::{
    align_photo, binarize, clean_corners, detect_corners, estimate_homography, refine_corners, synthesize_frame, warp,
    AlignConfig, CleanParams, FrameSpec, Homography, Point, Threshold,
};
use moire_core::{seed, Image};
use rand_distr::{Distribution, Normal};
use proptest::prelude::*;

#[test]
fn clean_tilted_captures_register() {
    for seed in 0..8 {
        let trial = registration_trial(seed, 15f64.to_radians(), 0.0).unwrap();
        let r = trial.registered.unwrap_or_else(|| panic!("trial {seed} lost corners"));
        assert!(r.reprojection_error < 0.5, "trial {seed}: {}", r.reprojection_error);
        assert!(r.interior_psnr > 30.0, "trial {seed}: {}", r.interior_psnr);
        assert!(r.verified);
    }
}

#[test]
fn unmoved_frame_aligns_to_itself() {
    let reference = Image::from_fn(3, 64, 64, |c, y, x| 0.3 + 0.004 * (x + y) as f64 + 0.05 * c as f64);
    let (frame, truth) = synthesize_frame(&reference, &FrameSpec::for_reference(64, 64)).unwrap();
    let pair = align_photo(&frame, &reference, &AlignConfig::default()).unwrap();
    assert!(pair.homography.relative_distance(&Homography::identity()) < 1e-6);
    assert!(pair.verdict.psnr > 60.0);
    for (found, expected) in pair.frame_corners.points().iter().zip(truth.points()) {
        assert!(found.dist(*expected) < 0.5, "{found} vs {expected}");
    }
}

#[test]
fn rotated_frame_corners_are_found() {
    let reference = Image::filled(3, 64, 64, 0.5);
    let spec = FrameSpec::for_reference(64, 64);
    let (frame, truth) = synthesize_frame(&reference, &spec).unwrap();
    let center = Point::new(spec.canvas_width as f64 / 2.0, spec.canvas_height as f64 / 2.0);
    let h = Homography::translation(20.0, 20.0)
        .compose(&Homography::camera_rotation(0.0, 0.0, 10f64.to_radians(), 400.0, center))
        .unwrap();
    let photo = warp(&frame.map(|v| 1.0 - v), &h, spec.canvas_width + 40, spec.canvas_height + 40)
        .unwrap()
        .map(|v| 1.0 - v);
    let b = binarize(&photo, Threshold::Otsu);
    let found = clean_corners(&refine_corners(&photo, &detect_corners(&b).unwrap()), &b, &CleanParams::default()).unwrap();
    for (f, t) in found.points().iter().zip(truth.points()) {
        let expected = h.apply(*t);
        assert!(f.dist(expected) < 1.5, "{f} vs {expected}");
    }
}

#[test]
fn noisy_correspondences_reproject_within_half_a_pixel() {
    let (_, truth) = synthesize_frame(&Image::filled(3, 64, 64, 0.5), &FrameSpec::for_reference(64, 64)).unwrap();
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut total = 0.0;
    for trial in 0..100 {
        let mut rng = seed::rng(3, "noisy-dlt", trial);
        let h = Homography::camera_rotation(0.2, -0.1, 0.05, 372.0, Point::new(62.0, 62.0));
        let src = truth.points();
        let dst: Vec<Point> = src
            .iter()
            .map(|&p| {
                let q = h.apply(p);
                Point::new(q.x + noise.sample(&mut rng), q.y + noise.sample(&mut rng))
            })
            .collect();
        let est = estimate_homography(src, &dst).unwrap();
        // Error against the noise-free positions the correspondences came from.
        total += src.iter().map(|&s| est.apply(s).dist(h.apply(s))).sum::<f64>() / src.len() as f64;
    }
    let mean = total / 100.0;
    assert!(mean < 0.5, "{mean}");
}

#[test]
fn blank_photo_fails_detection() {
    let reference = Image::filled(3, 64, 64, 0.5);
    let blank = Image::filled(3, 150, 150, 1.0);
    assert!(align_photo(&blank, &reference, &AlignConfig::default()).is_err());
}

#[test]
fn fixed_threshold_binarizes_by_mean() {
    let img = Image::from_fn(3, 2, 2, |c, y, x| if (x + y + c) % 2 == 0 { 0.2 } else { 0.7 });
    let b = binarize(&img, Threshold::Fixed(0.5));
    assert_eq!(b.black_count(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn homography_recovered_from_exact_correspondences(
        tx in -0.3f64..0.3, ty in -0.3f64..0.3, roll in -0.5f64..0.5, dx in -20.0f64..20.0, dy in -20.0f64..20.0,
    ) {
        let truth = Homography::translation(dx, dy)
            .compose(&Homography::camera_rotation(tx, ty, roll, 400.0, Point::new(60.0, 60.0)))
            .unwrap();
        let src: Vec<Point> = (0..20)
            .map(|i| {
                let a = i as f64 * 0.9;
                Point::new(60.0 + 45.0 * a.cos() + (i % 3) as f64, 60.0 + 40.0 * a.sin() - (i % 4) as f64)
            })
            .collect();
        let dst: Vec<Point> = src.iter().map(|&p| truth.apply(p)).collect();
        let est = estimate_homography(&src, &dst).unwrap();
        prop_assert!(est.relative_distance(&truth) < 1e-6);
        let back = est.inverse().unwrap();
        for (s, d) in src.iter().zip(&dst) {
            prop_assert!(back.apply(*d).dist(*s) < 1e-6);
        }
    }

    #[test]
    fn estimate_is_invariant_to_uniform_scaling(s in 0.2f64..5.0, tx in -0.2f64..0.2) {
        let truth = Homography::camera_rotation(tx, 0.1, 0.2, 300.0, Point::new(50.0, 50.0));
        let src: Vec<Point> = (0..12).map(|i| Point::new((i % 4) as f64 * 30.0 + (i / 4) as f64, (i / 4) as f64 * 25.0)).collect();
        let dst: Vec<Point> = src.iter().map(|&p| truth.apply(p)).collect();
        let a = estimate_homography(&src, &dst).unwrap();
        let scale = |v: &[Point]| v.iter().map(|p| Point::new(s * p.x, s * p.y)).collect::<Vec<_>>();
        let b = estimate_homography(&scale(&src), &scale(&dst)).unwrap();
        // Scaling both sides conjugates H by diag(s, s, 1).
        let m = Homography::scaling(1.0 / s).compose(&b).unwrap().compose(&Homography::scaling(s)).unwrap();
        prop_assert!(m.relative_distance(&a) < 1e-9);
    }

    #[test]
    fn warp_by_integer_translation_shifts(dx in 0usize..5, dy in 0usize..5) {
        let img = Image::from_fn(1, 10, 12, |_, y, x| (3 * x + 7 * y) as f64 / 100.0);
        let out = warp(&img, &Homography::translation(dx as f64, dy as f64), 12, 10).unwrap();
        for y in dy..10 {
            for x in dx..12 {
                prop_assert_eq!(out.get(0, y, x), img.get(0, y - dy, x - dx));
            }
        }
    }
}
