use super::{CornerSet, Point};
use crate::error::{Error, Result};
use crate::image::Image;

/// Geometry of the black frame drawn around a reference image.
///
/// The border surrounds the reference; a block of `block_width` x
/// `block_depth` pixels sticks out from the middle of every border edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameSpec {
    pub border_width: usize,
    /// Extent of a block along the edge it sits on.
    pub block_width: usize,
    /// How far a block reaches outward.
    pub block_depth: usize,
    pub canvas_width: usize,
    pub canvas_height: usize,
}

impl Default for FrameSpec {
    fn default() -> Self {
        FrameSpec { border_width: 8, block_width: 24, block_depth: 14, canvas_width: 128, canvas_height: 128 }
    }
}

impl FrameSpec {
    /// Default border and blocks on a canvas that fits a `width x height`
    /// reference with an 8-pixel white margin.
    pub fn for_reference(width: usize, height: usize) -> Self {
        let d = FrameSpec::default();
        let pad = 2 * (d.border_width + d.block_depth + 8);
        FrameSpec { canvas_width: width + pad, canvas_height: height + pad, ..d }
    }

    /// Top-left pixel of the reference inside the canvas.
    pub fn reference_origin(&self, width: usize, height: usize) -> (usize, usize) {
        let outer_w = width + 2 * self.border_width;
        let outer_h = height + 2 * self.border_width;
        (
            (self.canvas_width - outer_w) / 2 + self.border_width,
            (self.canvas_height - outer_h) / 2 + self.border_width,
        )
    }

    fn check(&self, width: usize, height: usize) -> Result<()> {
        if self.border_width == 0 || self.block_width == 0 || self.block_depth == 0 {
            return Err(Error::config("frame border and block sizes must be positive"));
        }
        let outer_w = width + 2 * self.border_width;
        let outer_h = height + 2 * self.border_width;
        if self.block_width >= outer_w.min(outer_h) {
            return Err(Error::config(format!(
                "block width {} does not fit on a {outer_w}x{outer_h} border",
                self.block_width
            )));
        }
        let need_w = outer_w + 2 * self.block_depth + 2;
        let need_h = outer_h + 2 * self.block_depth + 2;
        if need_w > self.canvas_width || need_h > self.canvas_height {
            return Err(Error::Size(format!(
                "{width}x{height} reference needs a canvas of at least {need_w}x{need_h}, got {}x{}",
                self.canvas_width, self.canvas_height
            )));
        }
        Ok(())
    }
}

/// Draws `reference` centred in a black border with four extruded blocks on
/// a white canvas, and returns the 20 outer-boundary corners in canonical
/// order. Corners sit on pixel edges, half a pixel from pixel centres.
pub fn synthesize_frame(reference: &Image, spec: &FrameSpec) -> Result<(Image, CornerSet)> {
    let (w, h) = (reference.width(), reference.height());
    spec.check(w, h)?;
    let (rx, ry) = spec.reference_origin(w, h);
    let b = spec.border_width;
    // Outer rectangle, in pixel indices (inclusive start, exclusive end).
    let (x0, y0) = (rx - b, ry - b);
    let (x1, y1) = (rx + w + b, ry + h + b);
    let bw = spec.block_width;
    let d = spec.block_depth;
    let bx0 = x0 + (x1 - x0 - bw) / 2;
    let by0 = y0 + (y1 - y0 - bw) / 2;
    let (bx1, by1) = (bx0 + bw, by0 + bw);

    let black = |x: usize, y: usize| {
        let in_rect = (x0..x1).contains(&x) && (y0..y1).contains(&y);
        let vertical = (bx0..bx1).contains(&x) && ((y0 - d..y0).contains(&y) || (y1..y1 + d).contains(&y));
        let horizontal = (by0..by1).contains(&y) && ((x0 - d..x0).contains(&x) || (x1..x1 + d).contains(&x));
        in_rect || vertical || horizontal
    };
    let c = reference.channels();
    let mut frame = Image::from_fn(c, spec.canvas_height, spec.canvas_width, |_, y, x| {
        if black(x, y) {
            0.0
        } else {
            1.0
        }
    });
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                frame.set(ch, ry + y, rx + x, reference.get(ch, y, x));
            }
        }
    }

    // Pixel-edge coordinates.
    let e = |i: usize| i as f64 - 0.5;
    let (l, r, t, bo) = (e(x0), e(x1), e(y0), e(y1));
    let (bl, br, bt, bb) = (e(bx0), e(bx1), e(by0), e(by1));
    let dd = d as f64;
    let p = Point::new;
    // Counter-clockwise on screen from the top-left corner: down the left
    // edge, along the bottom, up the right edge, back along the top.
    let corners = vec![
        p(l, t),
        p(l, bt),
        p(l - dd, bt),
        p(l - dd, bb),
        p(l, bb),
        p(l, bo),
        p(bl, bo),
        p(bl, bo + dd),
        p(br, bo + dd),
        p(br, bo),
        p(r, bo),
        p(r, bb),
        p(r + dd, bb),
        p(r + dd, bt),
        p(r, bt),
        p(r, t),
        p(br, t),
        p(br, t - dd),
        p(bl, t - dd),
        p(bl, t),
    ];
    Ok((frame, CornerSet::new(corners)?))
}

/// Pixel rectangle `(x, y, width, height)` occupied by the reference.
pub(crate) fn reference_window(spec: &FrameSpec, width: usize, height: usize) -> (usize, usize, usize, usize) {
    let (x, y) = spec.reference_origin(width, height);
    (x, y, width, height)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_corners_of_a_small_frame() {
        let reference = Image::filled(3, 64, 64, 0.5);
        let spec = FrameSpec { border_width: 8, block_width: 16, block_depth: 8, canvas_width: 128, canvas_height: 128 };
        let (frame, corners) = synthesize_frame(&reference, &spec).unwrap();
        assert_eq!(corners.points().len(), 20);
        // Outer rectangle spans pixels 24..104.
        assert_eq!(corners.points()[0], Point::new(23.5, 23.5));
        assert_eq!(corners.points()[1], Point::new(23.5, 55.5));
        assert_eq!(corners.points()[2], Point::new(15.5, 55.5));
        assert_eq!(corners.points()[10], Point::new(103.5, 103.5));
        assert_eq!(frame.get(0, 24, 24), 0.0);
        assert_eq!(frame.get(0, 23, 24), 1.0);
        assert_eq!(frame.get(0, 60, 16), 0.0);
        assert_eq!(frame.get(0, 32, 32), 0.5);
        // Every corner has exactly one black quadrant or three.
        for c in corners.points() {
            let q = [(-0.5, -0.5), (0.5, -0.5), (-0.5, 0.5), (0.5, 0.5)]
                .iter()
                .filter(|(dx, dy)| frame.get(0, (c.y + dy) as usize, (c.x + dx) as usize) == 0.0)
                .count();
            assert!(q == 1 || q == 3, "corner {c} has {q} black quadrants");
        }
    }

    #[test]
    fn degenerate_and_oversized_specs_fail() {
        let reference = Image::filled(3, 64, 64, 0.5);
        let zero = FrameSpec { block_width: 0, ..FrameSpec::default() };
        assert!(matches!(synthesize_frame(&reference, &zero), Err(Error::Config(_))));
        let big = Image::filled(3, 120, 120, 0.5);
        assert!(matches!(synthesize_frame(&big, &FrameSpec::default()), Err(Error::Size(_))));
        assert!(synthesize_frame(&big, &FrameSpec::for_reference(120, 120)).is_ok());
    }
}
