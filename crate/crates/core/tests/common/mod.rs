//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use moire_core::align::{
    binarize, clean_corners, detect_corners, estimate_homography, refine_corners, synthesize_frame, verify_pair, warp,
    AlignConfig, CornerSet, FrameSpec, Homography, Point,
};
use moire_core::metrics::psnr;
use moire_core::net::Network;
use moire_core::synth::procedural_reference;
use moire_core::tensor::Tensor4;
use moire_core::{seed, Image, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub const REF_SIZE: usize = 64;
/// Extra photo canvas on each axis so a tilted frame stays in view.
pub const PHOTO_MARGIN: usize = 40;

/// Outcome of one synthetic capture-and-register trial.
#[derive(Debug)]
pub struct Trial {
    /// `None` when detection or cleaning did not produce 20 corners.
    pub registered: Option<Registered>,
}

#[derive(Debug)]
pub struct Registered {
    /// Mean distance between true frame corners and their round trip
    /// through the true and estimated maps.
    pub reprojection_error: f64,
    pub interior_psnr: f64,
    pub verified: bool,
}

fn corners(image: &Image, cfg: &AlignConfig) -> Result<CornerSet> {
    let b = binarize(image, cfg.threshold);
    clean_corners(&refine_corners(image, &detect_corners(&b)?), &b, &cfg.clean)
}

/// A random perspective capture of a framed procedural reference: up to
/// `max_tilt` radians about both in-plane axes, small roll and scale, then
/// corner detection on the photo with Gaussian noise of `sigma` px added.
pub fn registration_trial(seed_value: u64, max_tilt: f64, sigma: f64) -> Result<Trial> {
    let mut rng = seed::rng(seed_value, "registration", 0);
    let reference = procedural_reference(REF_SIZE, REF_SIZE, &mut rng);
    let spec = FrameSpec::for_reference(REF_SIZE, REF_SIZE);
    let (frame, truth) = synthesize_frame(&reference, &spec)?;
    let (pw, ph) = (spec.canvas_width + PHOTO_MARGIN, spec.canvas_height + PHOTO_MARGIN);

    let center = Point::new(spec.canvas_width as f64 / 2.0, spec.canvas_height as f64 / 2.0);
    let focal = 3.0 * spec.canvas_width.max(spec.canvas_height) as f64;
    let view = Homography::camera_rotation(
        rng.random_range(-max_tilt..=max_tilt),
        rng.random_range(-max_tilt..=max_tilt),
        rng.random_range(-0.1..=0.1),
        focal,
        center,
    );
    let shift = PHOTO_MARGIN as f64 / 2.0;
    let place = Homography::translation(shift + rng.random_range(-3.0..3.0), shift + rng.random_range(-3.0..3.0));
    let truth_map = place.compose(&view)?;
    let photo = warp(&frame.map(|v| 1.0 - v), &truth_map, pw, ph)?.map(|v| 1.0 - v);

    let cfg = AlignConfig::default();
    let frame_corners = corners(&frame, &cfg)?;
    let Ok(photo_corners) = corners(&photo, &cfg) else {
        return Ok(Trial { registered: None });
    };
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
    let noisy: Vec<Point> = photo_corners
        .points()
        .iter()
        .map(|p| {
            if sigma > 0.0 {
                Point::new(p.x + noise.sample(&mut rng), p.y + noise.sample(&mut rng))
            } else {
                *p
            }
        })
        .collect();
    let estimate = estimate_homography(&noisy, frame_corners.points())?;

    let reprojection_error = truth
        .points()
        .iter()
        .map(|&c| estimate.apply(truth_map.apply(c)).dist(c))
        .sum::<f64>()
        / truth.points().len() as f64;
    let registered = warp(&photo, &estimate, spec.canvas_width, spec.canvas_height)?;
    let (x0, y0) = spec.reference_origin(REF_SIZE, REF_SIZE);
    let aligned = registered.crop(x0, y0, REF_SIZE, REF_SIZE)?;
    Ok(Trial {
        registered: Some(Registered {
            reprojection_error,
            interior_psnr: psnr(&aligned, &reference)?,
            verified: verify_pair(&aligned, &reference, cfg.eta)?.accepted,
        }),
    })
}

/// Sign pattern of every ReLU layer. While it is fixed the network is
/// affine in any single parameter.
fn pattern(net: &Network<f64>, x: &Tensor4<f64>) -> Vec<bool> {
    let (_, trace) = net.forward_with_trace(x).unwrap();
    net.specs()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.relu)
        .flat_map(|(i, _)| trace.layer_output(i).unwrap().data().iter().map(|&v| v > 0.0).collect::<Vec<_>>())
        .collect()
}

/// Checks every parameter gradient of `net` for the loss
/// `sum(fused * weights)` against central differences taken within the
/// current activation pattern; returns the worst relative error.
pub fn max_gradient_error(net: &Network<f64>, x: &Tensor4<f64>, weights: &Tensor4<f64>) -> f64 {
    let loss = |n: &Network<f64>| -> f64 {
        let out = n.forward(x).unwrap();
        out.fused.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
    };
    let (_, trace) = net.forward_with_trace(x).unwrap();
    let analytic = net.backward(&trace, weights).unwrap().flat();
    let base = pattern(net, x);
    let mut worst: f64 = 0.0;
    let mut index = 0;
    for layer in 0..net.params().len() {
        let sizes = [net.params()[layer].weight.data().len(), net.params()[layer].bias.len()];
        for (block, &size) in sizes.iter().enumerate() {
            for k in 0..size {
                let perturbed = |delta: f64| {
                    let mut n = net.clone();
                    let p = &mut n.params_mut()[layer];
                    if block == 0 {
                        p.weight.data_mut()[k] += delta;
                    } else {
                        p.bias[k] += delta;
                    }
                    n
                };
                // Largest decade step on each side that keeps the pattern;
                // the central difference is then taken about the midpoint
                // of that affine piece.
                let reach = |sign: f64| {
                    let mut eps = 1e-2;
                    while eps > 1e-12 && pattern(&perturbed(sign * eps), x) != base {
                        eps /= 10.0;
                    }
                    eps
                };
                let (below, above) = (reach(-1.0), reach(1.0));
                let r = (below + above) / 2.0;
                let fd = (loss(&perturbed(above)) - loss(&perturbed(-below))) / (2.0 * r);
                let g = analytic[index];
                let err = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(err);
                index += 1;
            }
        }
    }
    assert_eq!(index, analytic.len());
    worst
}
