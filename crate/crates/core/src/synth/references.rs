use rand::Rng;

use crate::image::Image;

fn smoothstep(edge: f64, width: f64, v: f64) -> f64 {
    let t = ((v - edge) / width + 0.5).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

enum Shape {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
    Rect { cx: f64, cy: f64, hw: f64, hh: f64, angle: f64 },
}

impl Shape {
    /// Coverage in [0, 1] with a soft edge about `soft` pixels wide.
    fn coverage(&self, x: f64, y: f64, soft: f64) -> f64 {
        match *self {
            Shape::Ellipse { cx, cy, rx, ry } => {
                let d = ((x - cx) / rx).hypot((y - cy) / ry);
                1.0 - smoothstep(1.0, soft / rx.min(ry), d)
            }
            Shape::Rect { cx, cy, hw, hh, angle } => {
                let (s, c) = angle.sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
                (1.0 - smoothstep(hw, soft, u.abs())) * (1.0 - smoothstep(hh, soft, v.abs()))
            }
        }
    }
}

/// A random smooth scene: a two-colour gradient with a low-frequency ripple
/// and a handful of soft-edged ellipses and rectangles.
pub fn procedural_reference<R: Rng + ?Sized>(width: usize, height: usize, rng: &mut R) -> Image {
    let colour = |rng: &mut R| [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)];
    let (a, b) = (colour(rng), colour(rng));
    let dir = rng.random_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (dir.cos(), dir.sin());
    let span = (width as f64).hypot(height as f64).max(1.0);
    let ripple_f = rng.random_range(0.02..0.08) * std::f64::consts::TAU;
    let ripple_a = rng.random_range(0.0..0.08);
    let ripple_dir = rng.random_range(0.0..std::f64::consts::TAU);

    let size = width.min(height) as f64;
    let shapes: Vec<(Shape, [f64; 3])> = (0..rng.random_range(3..8))
        .map(|_| {
            let cx = rng.random_range(0.0..width as f64);
            let cy = rng.random_range(0.0..height as f64);
            let shape = if rng.random_bool(0.5) {
                Shape::Ellipse { cx, cy, rx: rng.random_range(0.08..0.3) * size, ry: rng.random_range(0.08..0.3) * size }
            } else {
                Shape::Rect {
                    cx,
                    cy,
                    hw: rng.random_range(0.06..0.25) * size,
                    hh: rng.random_range(0.06..0.25) * size,
                    angle: rng.random_range(0.0..std::f64::consts::PI),
                }
            };
            (shape, colour(rng))
        })
        .collect();
    let soft = rng.random_range(1.5..3.0);

    Image::from_fn(3, height, width, |c, y, x| {
        let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
        let t = (((xf - width as f64 / 2.0) * dx + (yf - height as f64 / 2.0) * dy) / span + 0.5).clamp(0.0, 1.0);
        let mut v = a[c] * (1.0 - t) + b[c] * t;
        v += ripple_a * (ripple_f * (xf * ripple_dir.cos() + yf * ripple_dir.sin())).sin();
        for (shape, col) in &shapes {
            let k = shape.coverage(xf, yf, soft);
            v = v * (1.0 - k) + col[c] * k;
        }
        v.clamp(0.02, 0.98)
    })
}
