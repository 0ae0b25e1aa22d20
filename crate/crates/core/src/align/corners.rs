use std::cmp::Ordering;
use std::collections::VecDeque;

use super::{BinaryImage, Point};
use crate::error::{Error, Result};
use crate::image::Image;

/// Corners on the outer boundary of a frame: four per block plus the four
/// rectangle corners.
pub const CORNER_COUNT: usize = 20;

const HARRIS_K: f64 = 0.04;
const HARRIS_SIGMA: f64 = 1.5;
/// Candidates must reach this fraction of the strongest response.
const RESPONSE_FLOOR: f64 = 0.01;
/// Half-width of the search band around the traced boundary.
const BAND_RADIUS: isize = 2;
const NMS_RADIUS: isize = 2;
/// Half-width of the window used to refine corner positions.
const REFINE_RADIUS: f64 = 4.5;
/// Blur applied to the mask before measuring gradients for refinement.
const REFINE_SIGMA: f64 = 1.0;

/// Clockwise on screen (y grows downward): E, SE, S, SW, W, NW, N, NE.
const DIRS: [(isize, isize); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub point: Point,
    pub response: f64,
}

/// The 20 frame corners in canonical order: counter-clockwise on screen,
/// starting at the top-left corner of the frame rectangle.
#[derive(Clone, Debug, PartialEq)]
pub struct CornerSet {
    points: Vec<Point>,
}

impl CornerSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() != CORNER_COUNT {
            return Err(Error::Cleaning { survivors: points });
        }
        Ok(CornerSet { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    /// Smallest distance between two corners.
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                best = best.min(a.dist(*b));
            }
        }
        best
    }
}

/// Ratio acceptance windows and de-duplication distance for
/// [`clean_corners`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CleanParams {
    /// Side of the square window the black:white ratio is measured in.
    pub neighborhood: usize,
    /// Accepted ratios around 1/3 (convex corners of the black region).
    pub convex_ratio: (f64, f64),
    /// Accepted ratios around 3 (concave corners).
    pub concave_ratio: (f64, f64),
    pub min_dist: f64,
}

impl Default for CleanParams {
    fn default() -> Self {
        CleanParams { neighborhood: 11, convex_ratio: (0.25, 0.45), concave_ratio: (2.2, 4.0), min_dist: 10.0 }
    }
}

impl CleanParams {
    pub fn accepts(&self, ratio: f64) -> bool {
        let within = |(lo, hi): (f64, f64)| ratio >= lo && ratio <= hi;
        within(self.convex_ratio) || within(self.concave_ratio)
    }
}

/// Mask of the largest 8-connected black component.
fn largest_component(binary: &BinaryImage) -> Option<Vec<bool>> {
    let (w, h) = (binary.width(), binary.height());
    let mut label = vec![0u32; w * h];
    let mut best = (0usize, 0u32);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !binary.mask()[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for (dx, dy) in DIRS {
                let (nx, ny) = (x + dx, y + dy);
                if binary.is_black_at(nx, ny) {
                    let j = ny as usize * w + nx as usize;
                    if label[j] == 0 {
                        label[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
        if size > best.0 {
            best = (size, next);
        }
    }
    (best.0 > 0).then(|| label.iter().map(|&l| l == best.1).collect())
}

/// Traces the outer boundary of the largest black component (Moore
/// neighbour tracing), returning boundary pixels in order.
pub fn outer_boundary(binary: &BinaryImage) -> Result<Vec<(usize, usize)>> {
    let comp = largest_component(binary).ok_or_else(|| Error::Detection("image has no black region".into()))?;
    let (w, h) = (binary.width() as isize, binary.height() as isize);
    let inside = |x: isize, y: isize| x >= 0 && y >= 0 && x < w && y < h && comp[(y * w + x) as usize];
    let s = comp.iter().position(|&b| b).expect("component is non-empty");
    let start = ((s as isize) % w, (s as isize) / w);
    let mut path = vec![start];
    let (mut c, mut back) = (start, (start.0 - 1, start.1));
    let mut first_step = None;
    let limit = 4 * (w * h) as usize + 8;
    while path.len() <= limit {
        let db = DIRS.iter().position(|&(dx, dy)| (c.0 + dx, c.1 + dy) == back).expect("backtrack is a neighbour");
        let mut found = None;
        for k in 1..=8 {
            let d = (db + k) % 8;
            let n = (c.0 + DIRS[d].0, c.1 + DIRS[d].1);
            if inside(n.0, n.1) {
                let prev = DIRS[(d + 7) % 8];
                found = Some((n, (c.0 + prev.0, c.1 + prev.1)));
                break;
            }
        }
        let Some((n, nb)) = found else { break };
        match first_step {
            None => first_step = Some(n),
            Some(f) if c == start && n == f => {
                path.pop();
                break;
            }
            _ => {}
        }
        path.push(n);
        c = n;
        back = nb;
    }
    Ok(path.into_iter().map(|(x, y)| (x as usize, y as usize)).collect())
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable blur with clamped borders.
fn blur(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] =
                kernel.iter().enumerate().map(|(i, k)| k * src[y * w + clamp(x as isize + i as isize - r, w)]).sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] =
                kernel.iter().enumerate().map(|(i, k)| k * tmp[clamp(y as isize + i as isize - r, h) * w + x]).sum();
        }
    }
    out
}

/// Harris response of the binary image (black = 1).
fn harris_response(binary: &BinaryImage) -> Vec<f64> {
    let (w, h) = (binary.width(), binary.height());
    let f = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1);
        let y = y.clamp(0, h as isize - 1);
        if binary.is_black(x as usize, y as usize) {
            1.0
        } else {
            0.0
        }
    };
    let (mut xx, mut yy, mut xy) = (vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = 0.5 * (f(x + 1, y) - f(x - 1, y));
            let gy = 0.5 * (f(x, y + 1) - f(x, y - 1));
            let i = y as usize * w + x as usize;
            xx[i] = gx * gx;
            yy[i] = gy * gy;
            xy[i] = gx * gy;
        }
    }
    let k = gaussian_kernel(HARRIS_SIGMA);
    let (xx, yy, xy) = (blur(&xx, w, h, &k), blur(&yy, w, h, &k), blur(&xy, w, h, &k));
    (0..w * h)
        .map(|i| {
            let tr = xx[i] + yy[i];
            xx[i] * yy[i] - xy[i] * xy[i] - HARRIS_K * tr * tr
        })
        .collect()
}

/// Offset of a parabola's vertex through three samples, within ±0.5.
fn parabolic_offset(l: f64, c: f64, r: f64) -> f64 {
    let denom = l - 2.0 * c + r;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
}

/// Harris corner candidates near the outer boundary of the largest black
/// component, strongest first.
pub fn detect_corners(binary: &BinaryImage) -> Result<Vec<Candidate>> {
    let (w, h) = (binary.width(), binary.height());
    let boundary = outer_boundary(binary)?;
    let mut band = vec![false; w * h];
    for &(x, y) in &boundary {
        for dy in -BAND_RADIUS..=BAND_RADIUS {
            for dx in -BAND_RADIUS..=BAND_RADIUS {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                    band[ny as usize * w + nx as usize] = true;
                }
            }
        }
    }
    let resp = harris_response(binary);
    let mask: Vec<f64> = binary.mask().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let smooth_grad = Gradients::new(&blur(&mask, w, h, &gaussian_kernel(REFINE_SIGMA)), w, h);
    let peak = (0..w * h).filter(|&i| band[i]).map(|i| resp[i]).fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return Err(Error::Detection("no corner response along the frame boundary".into()));
    }
    let floor = RESPONSE_FLOOR * peak;
    let at = |x: isize, y: isize| resp[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize];
    let mut out = Vec::new();
    for i in (0..w * h).filter(|&i| band[i] && resp[i] > floor) {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        let r = resp[i];
        let mut is_max = true;
        'nms: for dy in -NMS_RADIUS..=NMS_RADIUS {
            for dx in -NMS_RADIUS..=NMS_RADIUS {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let q = at(nx, ny);
                // Plateaus keep their first pixel in raster order.
                let earlier = (dy, dx) < (0, 0);
                if q > r || (earlier && q == r) {
                    is_max = false;
                    break 'nms;
                }
            }
        }
        if is_max {
            let ox = parabolic_offset(at(x - 1, y), r, at(x + 1, y));
            let oy = parabolic_offset(at(x, y - 1), r, at(x, y + 1));
            let rough = Point::new(x as f64 + ox, y as f64 + oy);
            out.push(Candidate { point: smooth_grad.refine(rough), response: r });
        }
    }
    out.sort_by(strongest_first);
    Ok(out)
}

/// Central-difference gradients with clamped borders.
struct Gradients {
    width: usize,
    height: usize,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl Gradients {
    fn new(values: &[f64], width: usize, height: usize) -> Self {
        let at = |x: isize, y: isize| {
            values[y.clamp(0, height as isize - 1) as usize * width + x.clamp(0, width as isize - 1) as usize]
        };
        let mut gx = vec![0.0; width * height];
        let mut gy = vec![0.0; width * height];
        for y in 0..height as isize {
            for x in 0..width as isize {
                let i = y as usize * width + x as usize;
                gx[i] = 0.5 * (at(x + 1, y) - at(x - 1, y));
                gy[i] = 0.5 * (at(x, y + 1) - at(x, y - 1));
            }
        }
        Gradients { width, height, gx, gy }
    }

    fn get(&self, x: isize, y: isize) -> (f64, f64) {
        if x < 0 || y < 0 || x >= self.width as isize || y >= self.height as isize {
            return (0.0, 0.0);
        }
        let i = y as usize * self.width + x as usize;
        (self.gx[i], self.gy[i])
    }

    /// Moves `p` to the point that best agrees with the edges around it: the
    /// least-squares solution of `g . (q - x) = 0` over the gradients `g` at
    /// pixels `x` in a small window. Harris maxima sit inside the corner
    /// wedge; this pulls them back onto the vertex.
    fn refine(&self, p: Point) -> Point {
        let mut q = p;
        for _ in 0..10 {
            // Window symmetric about q so half-pixel vertices are not pulled.
            let span = |c: f64| (c - REFINE_RADIUS).ceil() as isize..=(c + REFINE_RADIUS).floor() as isize;
            let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for y in span(q.y) {
                for x in span(q.x) {
                    let (gx, gy) = self.get(x, y);
                    let (xx, xy, yy) = (gx * gx, gx * gy, gy * gy);
                    a11 += xx;
                    a12 += xy;
                    a22 += yy;
                    b1 += xx * x as f64 + xy * y as f64;
                    b2 += xy * x as f64 + yy * y as f64;
                }
            }
            let det = a11 * a22 - a12 * a12;
            if !(det > 1e-6 * (a11 + a22).powi(2)) {
                return q;
            }
            let next = Point::new((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det);
            if next.dist(p) > REFINE_RADIUS {
                return p;
            }
            let moved = next.dist(q);
            q = next;
            if moved < 1e-3 {
                break;
            }
        }
        q
    }
}

/// Re-estimates candidate positions from the gradients of `image`'s
/// luminance, which keep the sub-pixel edge information that binarisation
/// throws away.
pub fn refine_corners(image: &Image, candidates: &[Candidate]) -> Vec<Candidate> {
    let gray = image.to_gray();
    let g = Gradients::new(gray.data(), image.width(), image.height());
    candidates.iter().map(|c| Candidate { point: g.refine(c.point), response: c.response }).collect()
}

fn strongest_first(a: &Candidate, b: &Candidate) -> Ordering {
    b.response
        .total_cmp(&a.response)
        .then(a.point.y.total_cmp(&b.point.y))
        .then(a.point.x.total_cmp(&b.point.x))
}

/// Black:white ratio in an `n x n` window centred on `p`, sampling the mask
/// bilinearly so a window centred exactly on a right-angle corner sees one
/// or three quarters black. Outside the image counts as white.
pub fn window_ratio(binary: &BinaryImage, p: Point, n: usize) -> f64 {
    let half = (n / 2) as isize;
    let v = |x: isize, y: isize| if binary.is_black_at(x, y) { 1.0 } else { 0.0 };
    let mut black = 0.0;
    for j in -half..=half {
        for i in -half..=half {
            let (sx, sy) = (p.x + i as f64, p.y + j as f64);
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            black += (1.0 - fy) * ((1.0 - fx) * v(x0, y0) + fx * v(x0 + 1, y0))
                + fy * ((1.0 - fx) * v(x0, y0 + 1) + fx * v(x0 + 1, y0 + 1));
        }
    }
    let white = (n * n) as f64 - black;
    if white <= 0.0 {
        f64::INFINITY
    } else {
        black / white
    }
}

/// Keeps candidates whose window ratio is near 3 or 1/3, removes
/// near-duplicates (strongest wins) and orders the 20 survivors.
pub fn clean_corners(candidates: &[Candidate], binary: &BinaryImage, params: &CleanParams) -> Result<CornerSet> {
    let mut passing: Vec<Candidate> = candidates
        .iter()
        .copied()
        .filter(|c| params.accepts(window_ratio(binary, c.point, params.neighborhood)))
        .collect();
    passing.sort_by(strongest_first);
    let mut kept: Vec<Point> = Vec::new();
    for c in passing {
        if kept.iter().all(|k| k.dist(c.point) >= params.min_dist) {
            kept.push(c.point);
        }
    }
    if kept.len() != CORNER_COUNT {
        return Err(Error::Cleaning { survivors: kept });
    }
    canonical_order(&kept, binary, params.neighborhood)
}

/// Orders 20 corners along the traced outer boundary, counter-clockwise on
/// screen, starting from the top-left corner of the frame rectangle.
///
/// The rectangle corners are the convex corners whose two neighbours on the
/// boundary are both concave (the bases of the adjacent blocks).
pub fn canonical_order(points: &[Point], binary: &BinaryImage, neighborhood: usize) -> Result<CornerSet> {
    if points.len() != CORNER_COUNT {
        return Err(Error::Cleaning { survivors: points.to_vec() });
    }
    let boundary = outer_boundary(binary)?;
    let position = |p: &Point| {
        boundary
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| ((x as f64 - p.x).powi(2) + (y as f64 - p.y).powi(2), i))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map_or(0, |(_, i)| i)
    };
    let mut cycle: Vec<(usize, Point)> = points.iter().map(|p| (position(p), *p)).collect();
    cycle.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.y.total_cmp(&b.1.y)).then(a.1.x.total_cmp(&b.1.x)));
    let mut cycle: Vec<Point> = cycle.into_iter().map(|(_, p)| p).collect();

    let n = cycle.len();
    let area: f64 = (0..n)
        .map(|i| {
            let (a, b) = (cycle[i], cycle[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum();
    // Counter-clockwise on screen has negative signed area when y points down.
    if area > 0.0 {
        cycle.reverse();
    }

    let convex: Vec<bool> = cycle.iter().map(|p| window_ratio(binary, *p, neighborhood) < 1.0).collect();
    let rect: Vec<usize> = (0..n).filter(|&i| convex[i] && !convex[(i + n - 1) % n] && !convex[(i + 1) % n]).collect();
    if rect.len() != 4 {
        return Err(Error::Degenerate(format!(
            "expected 4 rectangle corners between block bases, found {}",
            rect.len()
        )));
    }
    let cx = cycle.iter().map(|p| p.x).sum::<f64>() / n as f64;
    let cy = cycle.iter().map(|p| p.y).sum::<f64>() / n as f64;
    let target = 0.75 * std::f64::consts::PI;
    let off = |i: &usize| {
        let a = (-(cycle[*i].y - cy)).atan2(cycle[*i].x - cx);
        let d = (a - target).rem_euclid(2.0 * std::f64::consts::PI);
        d.min(2.0 * std::f64::consts::PI - d)
    };
    let first = *rect.iter().min_by(|a, b| off(a).total_cmp(&off(b))).expect("four rectangle corners");
    cycle.rotate_left(first);
    CornerSet::new(cycle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{binarize, synthesize_frame, FrameSpec, Threshold};

    fn frame() -> (BinaryImage, CornerSet) {
        let reference = Image::from_fn(3, 64, 64, |c, y, x| 0.3 + 0.4 * ((x + y + c) as f64 / 130.0));
        let (img, corners) = synthesize_frame(&reference, &FrameSpec::default()).unwrap();
        (binarize(&img, Threshold::Fixed(0.5)), corners)
    }

    #[test]
    fn right_angle_and_edge_ratios() {
        let quad = BinaryImage::from_fn(40, 40, |x, y| x >= 20 && y >= 20);
        assert!((window_ratio(&quad, Point::new(19.5, 19.5), 11) - 1.0 / 3.0).abs() < 1e-12);
        let notch = BinaryImage::from_fn(40, 40, |x, y| !(x < 20 && y < 20));
        assert!((window_ratio(&notch, Point::new(19.5, 19.5), 11) - 3.0).abs() < 1e-12);
        let half = BinaryImage::from_fn(40, 40, |x, _| x >= 20);
        assert!((window_ratio(&half, Point::new(19.5, 20.0), 11) - 1.0).abs() < 1e-12);
        let p = CleanParams::default();
        assert!(p.accepts(3.0) && p.accepts(1.0 / 3.0) && !p.accepts(1.0));
    }

    #[test]
    fn boundary_trace_is_closed_and_on_black() {
        let (b, _) = frame();
        let path = outer_boundary(&b).unwrap();
        assert!(path.len() > 300);
        for w in path.windows(2) {
            let d = (w[0].0 as isize - w[1].0 as isize).abs().max((w[0].1 as isize - w[1].1 as isize).abs());
            assert_eq!(d, 1);
        }
        assert!(path.iter().all(|&(x, y)| b.is_black(x, y)));
    }

    #[test]
    fn clean_frame_yields_true_corners() {
        let (b, truth) = frame();
        let cands = detect_corners(&b).unwrap();
        let set = clean_corners(&cands, &b, &CleanParams::default()).unwrap();
        for (got, want) in set.points().iter().zip(truth.points()) {
            assert!(got.dist(*want) < 1.0, "{got} vs {want}");
        }
    }

    #[test]
    fn white_image_fails_detection() {
        let b = BinaryImage::from_fn(20, 20, |_, _| false);
        assert!(matches!(detect_corners(&b), Err(Error::Detection(_))));
    }

    #[test]
    fn order_ignores_candidate_permutation_and_false_edges() {
        let (b, truth) = frame();
        let mut cands = detect_corners(&b).unwrap();
        // Points in the middle of straight edges are rejected by the ratio test.
        cands.push(Candidate { point: Point::new(35.0, 23.5), response: 1e9 });
        cands.push(Candidate { point: Point::new(23.5, 35.0), response: 1e9 });
        let a = clean_corners(&cands, &b, &CleanParams::default()).unwrap();
        cands.reverse();
        cands.rotate_left(7);
        let c = clean_corners(&cands, &b, &CleanParams::default()).unwrap();
        assert_eq!(a, c);
        assert!(a.points()[0].dist(truth.points()[0]) < 1.0);
    }

    #[test]
    fn too_few_survivors_is_a_cleaning_error() {
        let (b, _) = frame();
        let cands = detect_corners(&b).unwrap();
        match clean_corners(&cands[..5], &b, &CleanParams::default()) {
            Err(Error::Cleaning { survivors }) => assert!(survivors.len() < 20),
            other => panic!("unexpected {other:?}"),
        }
    }
}
