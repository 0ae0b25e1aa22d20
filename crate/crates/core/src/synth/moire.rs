use rand::Rng;

use crate::align::{Homography, Point};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::psnr;

/// Parameter draws tried per image before giving up.
pub const MAX_ATTEMPTS: usize = 10;
/// Sensor samples per pixel side when integrating the screen radiance.
const SUPERSAMPLE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SensorPattern {
    /// RGGB colour filter array, demosaiced bilinearly.
    Bayer,
    /// Every sensor pixel records all three channels.
    Plain,
}

/// One simulated capture.
///
/// Screen coordinates are in units of the display pixel pitch (each
/// reference pixel is one display pixel made of vertical R, G and B
/// stripes); `view` maps screen points to sensor pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MoireParams {
    pub screen_pixel_pitch: f64,
    /// Sensor samples per display pixel along each axis.
    pub camera_sample_rate: f64,
    pub view: Homography,
    pub sensor: SensorPattern,
    /// Mix between the reference (0) and the full simulated capture (1).
    pub strength: f64,
    /// Exposure multiplier applied to the capture.
    pub gain: f64,
}

impl MoireParams {
    /// No-op parameters: identity view, full resolution, zero strength.
    pub fn identity() -> Self {
        MoireParams {
            screen_pixel_pitch: 1.0,
            camera_sample_rate: 1.0,
            view: Homography::identity(),
            sensor: SensorPattern::Plain,
            strength: 0.0,
            gain: 1.0,
        }
    }

    /// Random parameters for a `width x height` reference.
    pub fn sample<R: Rng + ?Sized>(width: usize, height: usize, rng: &mut R) -> Self {
        let pitch = 1.0;
        let rate = rng.random_range(0.75..1.35);
        let deg = std::f64::consts::PI / 180.0;
        let (w, h) = (width as f64 * pitch, height as f64 * pitch);
        let center = Point::new(w / 2.0, h / 2.0);
        let tilt = Homography::camera_rotation(
            rng.random_range(-4.0..4.0) * deg,
            rng.random_range(-4.0..4.0) * deg,
            rng.random_range(-8.0..8.0) * deg,
            3.0 * w.max(h),
            center,
        );
        let view = Homography::scaling(rate).compose(&tilt).expect("scaled view is invertible");
        MoireParams {
            screen_pixel_pitch: pitch,
            camera_sample_rate: rate,
            view,
            sensor: if rng.random_bool(0.75) { SensorPattern::Bayer } else { SensorPattern::Plain },
            strength: rng.random_range(0.35..1.0),
            gain: rng.random_range(0.9..1.1),
        }
    }
}

/// Radiance of the striped display at screen point `q`, channel `c`.
fn screen_radiance(reference: &Image, pitch: f64, q: Point, c: usize) -> f64 {
    let (u, v) = (q.x / pitch, q.y / pitch);
    let px = (u.floor() as isize).clamp(0, reference.width() as isize - 1) as usize;
    let py = (v.floor() as isize).clamp(0, reference.height() as isize - 1) as usize;
    let stripe = (((u - u.floor()) * 3.0) as usize).min(2);
    if stripe == c {
        3.0 * reference.get(c, py, px)
    } else {
        0.0
    }
}

fn bayer_channel(x: usize, y: usize) -> usize {
    match (y % 2, x % 2) {
        (0, 0) => 0,
        (1, 1) => 2,
        _ => 1,
    }
}

/// Bilinear demosaic by normalised convolution over each channel's samples.
fn demosaic(mosaic: &[f64], width: usize, height: usize) -> Image {
    const RB: [[f64; 3]; 3] = [[0.25, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 0.25]];
    const G: [[f64; 3]; 3] = [[0.0, 0.25, 0.0], [0.25, 1.0, 0.25], [0.0, 0.25, 0.0]];
    Image::from_fn(3, height, width, |c, y, x| {
        let k = if c == 1 { &G } else { &RB };
        let (mut num, mut den) = (0.0, 0.0);
        for (j, row) in k.iter().enumerate() {
            for (i, &w) in row.iter().enumerate() {
                let (sx, sy) = (x as isize + i as isize - 1, y as isize + j as isize - 1);
                if w == 0.0 || sx < 0 || sy < 0 || sx >= width as isize || sy >= height as isize {
                    continue;
                }
                let (sx, sy) = (sx as usize, sy as usize);
                if bayer_channel(sx, sy) == c {
                    num += w * mosaic[sy * width + sx];
                    den += w;
                }
            }
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    })
}

/// Photographs `reference` off the virtual screen and maps the result back
/// onto the reference grid. The output is pixel-aligned with `reference`
/// and lies in [0, 1].
pub fn simulate_capture(reference: &Image, params: &MoireParams) -> Result<Image> {
    let reference = reference.to_rgb();
    if !(0.0..=1.0).contains(&params.strength) || !(params.gain > 0.0) || !(params.screen_pixel_pitch > 0.0) {
        return Err(Error::config("moire strength must be in [0, 1]; gain and pitch must be positive"));
    }
    if params.strength == 0.0 {
        return Ok(reference.clamped());
    }
    let (w, h) = (reference.width(), reference.height());
    let pitch = params.screen_pixel_pitch;
    let view = params.view;
    let inv = view.inverse()?;

    // Sensor extent: bounding box of the mapped screen, shifted to start at 0.
    let corners = [(0.0, 0.0), (w as f64, 0.0), (0.0, h as f64), (w as f64, h as f64)]
        .map(|(x, y)| view.apply(Point::new(x * pitch, y * pitch)));
    let min_x = corners.iter().map(|p| p.x).fold(f64::INFINITY, f64::min).floor();
    let min_y = corners.iter().map(|p| p.y).fold(f64::INFINITY, f64::min).floor();
    let max_x = corners.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max).ceil();
    let max_y = corners.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max).ceil();
    let (sw, sh) = ((max_x - min_x) as usize + 1, (max_y - min_y) as usize + 1);
    if sw * sh > 64 * w.max(16) * h.max(16) {
        return Err(Error::config("moire view homography magnifies too strongly"));
    }

    // Box-integrate the screen over each sensor pixel.
    let mut sensor = Image::new(3, sh, sw);
    let step = 1.0 / SUPERSAMPLE as f64;
    for sy in 0..sh {
        for sx in 0..sw {
            let mut acc = [0.0; 3];
            for j in 0..SUPERSAMPLE {
                for i in 0..SUPERSAMPLE {
                    let p = Point::new(min_x + sx as f64 + (i as f64 + 0.5) * step, min_y + sy as f64 + (j as f64 + 0.5) * step);
                    let q = inv.apply(p);
                    for (c, a) in acc.iter_mut().enumerate() {
                        *a += screen_radiance(&reference, pitch, q, c);
                    }
                }
            }
            let n = (SUPERSAMPLE * SUPERSAMPLE) as f64;
            for (c, a) in acc.iter().enumerate() {
                sensor.set(c, sy, sx, a / n);
            }
        }
    }
    let sensor = match params.sensor {
        SensorPattern::Plain => sensor,
        SensorPattern::Bayer => {
            let mosaic: Vec<f64> =
                (0..sh * sw).map(|i| sensor.get(bayer_channel(i % sw, i / sw), i / sw, i % sw)).collect();
            demosaic(&mosaic, sw, sh)
        }
    };

    // Back onto the reference grid: sample the sensor at each pixel centre.
    let mut out = reference.clone();
    for y in 0..h {
        for x in 0..w {
            let p = view.apply(Point::new((x as f64 + 0.5) * pitch, (y as f64 + 0.5) * pitch));
            let fx = (p.x - min_x - 0.5).clamp(0.0, (sw - 1) as f64);
            let fy = (p.y - min_y - 0.5).clamp(0.0, (sh - 1) as f64);
            let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(sw - 1), (y0 + 1).min(sh - 1));
            let (ax, ay) = (fx - x0 as f64, fy - y0 as f64);
            for c in 0..3 {
                let top = sensor.get(c, y0, x0) * (1.0 - ax) + sensor.get(c, y0, x1) * ax;
                let bot = sensor.get(c, y1, x0) * (1.0 - ax) + sensor.get(c, y1, x1) * ax;
                let captured = params.gain * (top * (1.0 - ay) + bot * ay);
                let r = reference.get(c, y, x);
                out.set(c, y, x, (r + params.strength * (captured - r)).clamp(0.0, 1.0));
            }
        }
    }
    Ok(out)
}

/// Draws parameters until the pair's PSNR reaches `eta`, trying at most
/// [`MAX_ATTEMPTS`] times. Returns the contaminated image, the parameters
/// used and the pair PSNR.
pub fn simulate_until_valid<R: Rng + ?Sized>(
    reference: &Image,
    eta: f64,
    rng: &mut R,
) -> Result<(Image, MoireParams, f64)> {
    let reference = reference.to_rgb();
    let mut best = f64::NEG_INFINITY;
    for _ in 0..MAX_ATTEMPTS {
        let params = MoireParams::sample(reference.width(), reference.height(), rng);
        let out = simulate_capture(&reference, &params)?;
        let p = psnr(&out, &reference)?;
        if p >= eta {
            return Ok((out, params, p));
        }
        best = best.max(p);
    }
    Err(Error::Synthesis(format!("no parameter draw reached {eta} dB in {MAX_ATTEMPTS} attempts (best {best:.2} dB)")))
}
