use super::{Homography, Point};
use crate::error::Result;
use crate::image::Image;

/// Tolerance for samples that land a hair outside the source grid.
const EDGE_EPS: f64 = 1e-9;

/// Resamples `image` onto a `width x height` canvas so that output pixel
/// `q` takes the bilinear sample at `H^-1 q`. Samples outside the source
/// are 0.
pub fn warp(image: &Image, h: &Homography, width: usize, height: usize) -> Result<Image> {
    let inv = h.inverse()?;
    let (sw, sh) = (image.width(), image.height());
    let mut out = Image::new(image.channels(), height, width);
    for y in 0..height {
        for x in 0..width {
            let s = inv.apply(Point::new(x as f64, y as f64));
            if !(s.x >= -EDGE_EPS && s.y >= -EDGE_EPS && s.x <= (sw - 1) as f64 + EDGE_EPS && s.y <= (sh - 1) as f64 + EDGE_EPS)
            {
                continue;
            }
            let sx = s.x.clamp(0.0, (sw - 1) as f64);
            let sy = s.y.clamp(0.0, (sh - 1) as f64);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let (x1, y1) = ((x0 + 1).min(sw - 1), (y0 + 1).min(sh - 1));
            for c in 0..image.channels() {
                let top = image.get(c, y0, x0) * (1.0 - fx) + image.get(c, y0, x1) * fx;
                let bot = image.get(c, y1, x0) * (1.0 - fx) + image.get(c, y1, x1) * fx;
                // Zero weights leave exact grid samples untouched.
                out.set(c, y, x, top * (1.0 - fy) + bot * fy);
            }
        }
    }
    Ok(out)
}
