use nalgebra::{DMatrix, Matrix3, Vector3};

use super::Point;
use crate::error::{Error, Result};

/// Smallest |det| accepted after normalising `h33` to 1.
const MIN_DET: f64 = 1e-9;

/// Projective 3x3 transform with `h33 = 1`, mapping `p` to `H p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Homography { m: Matrix3::identity() }
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let h33 = m[(2, 2)];
        if !h33.is_finite() || h33.abs() < 1e-12 {
            return Err(Error::Degenerate(format!("h33 = {h33} cannot be normalised")));
        }
        let m = m / h33;
        let det = m.determinant();
        if !(det.abs() > MIN_DET) || m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!("homography determinant {det}")));
        }
        Ok(Homography { m })
    }

    /// Row-major entries.
    pub fn from_array(a: [f64; 9]) -> Result<Self> {
        Homography::from_matrix(Matrix3::from_row_slice(&a))
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography { m: Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0) }
    }

    pub fn scaling(s: f64) -> Self {
        Homography { m: Matrix3::new(s, 0.0, 0.0, 0.0, s, 0.0, 0.0, 0.0, 1.0) }
    }

    /// View of a plane from a camera rotated by `tilt_x`, `tilt_y` (out of
    /// plane) and `roll` (in plane) radians, with focal length `focal`
    /// pixels. The result is re-translated so `center` stays fixed.
    pub fn camera_rotation(tilt_x: f64, tilt_y: f64, roll: f64, focal: f64, center: Point) -> Self {
        let rx = nalgebra::Rotation3::from_axis_angle(&Vector3::x_axis(), tilt_x);
        let ry = nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), tilt_y);
        let rz = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), roll);
        let r = (rz * ry * rx).into_inner();
        let k = Matrix3::new(focal, 0.0, center.x, 0.0, focal, center.y, 0.0, 0.0, 1.0);
        let k_inv = Matrix3::new(1.0 / focal, 0.0, -center.x / focal, 0.0, 1.0 / focal, -center.y / focal, 0.0, 0.0, 1.0);
        let h = Homography::from_matrix(k * r * k_inv).expect("rotation homography is invertible");
        let moved = h.apply(center);
        Homography::translation(center.x - moved.x, center.y - moved.y)
            .compose(&h)
            .expect("translated rotation is invertible")
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn to_array(&self) -> [f64; 9] {
        let mut a = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                a[3 * r + c] = self.m[(r, c)];
            }
        }
        a
    }

    pub fn apply(&self, p: Point) -> Point {
        let m = &self.m;
        let w = m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)];
        Point::new(
            (m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)]) / w,
            (m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)]) / w,
        )
    }

    /// Inverse via the adjugate, so integer translations invert exactly.
    pub fn inverse(&self) -> Result<Self> {
        let m = &self.m;
        let det = m.determinant();
        if !(det.abs() > MIN_DET) {
            return Err(Error::Degenerate(format!("singular homography (det {det})")));
        }
        let c = |r0: usize, c0: usize, r1: usize, c1: usize| m[(r0, c0)] * m[(r1, c1)] - m[(r0, c1)] * m[(r1, c0)];
        let adj = Matrix3::new(
            c(1, 1, 2, 2),
            -c(0, 1, 2, 2),
            c(0, 1, 1, 2),
            -c(1, 0, 2, 2),
            c(0, 0, 2, 2),
            -c(0, 0, 1, 2),
            c(1, 0, 2, 1),
            -c(0, 0, 2, 1),
            c(0, 0, 1, 1),
        );
        Homography::from_matrix(adj)
    }

    /// `self` after `first`: `p -> self(first(p))`.
    pub fn compose(&self, first: &Homography) -> Result<Self> {
        Homography::from_matrix(self.m * first.m)
    }

    /// Frobenius distance between the normalised matrices, relative to
    /// `other`.
    pub fn relative_distance(&self, other: &Homography) -> f64 {
        (self.m - other.m).norm() / other.m.norm()
    }
}

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
fn normalizer(points: &[Point]) -> Result<Matrix3<f64>> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mean = points.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    if !(mean > 1e-12) {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn transform(t: &Matrix3<f64>, p: Point) -> (f64, f64) {
    (t[(0, 0)] * p.x + t[(0, 2)], t[(1, 1)] * p.y + t[(1, 2)])
}

/// Least-squares homography mapping `src[i]` to `dst[i]`: normalised DLT,
/// taking the right singular vector of the smallest singular value.
pub fn estimate_homography(src: &[Point], dst: &[Point]) -> Result<Homography> {
    if src.len() != dst.len() {
        return Err(Error::shape(format!("{} source points but {} destination points", src.len(), dst.len())));
    }
    if src.len() < 4 {
        return Err(Error::Degenerate(format!("{} correspondences, need at least 4", src.len())));
    }
    let ts = normalizer(src)?;
    let td = normalizer(dst)?;
    let mut a = DMatrix::<f64>::zeros(2 * src.len(), 9);
    for (i, (s, d)) in src.iter().zip(dst).enumerate() {
        let (x, y) = transform(&ts, *s);
        let (u, v) = transform(&td, *d);
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    if sv.len() < 9 || sv[order[1]] <= 1e-10 * sv[order[sv.len() - 1]] {
        return Err(Error::Degenerate("correspondences do not determine a unique homography".into()));
    }
    let h = v_t.row(order[0]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td.try_inverse().expect("similarity is invertible");
    Homography::from_matrix(td_inv * hn * ts)
}
