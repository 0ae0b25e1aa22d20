//! Registration of photographed screen captures against their reference
//! images: frame rendering, binarisation, corner detection and cleaning,
//! homography estimation, warping, intensity correction and verification.

mod binarize;
mod corners;
mod frame;
mod homography;
mod ingest;
mod intensity;
mod verify;
mod warp;

pub use binarize::{binarize, otsu_threshold, BinaryImage, Threshold};
pub use corners::{
    canonical_order, clean_corners, detect_corners, outer_boundary, refine_corners, window_ratio, Candidate, CleanParams,
    CornerSet, CORNER_COUNT,
};
pub use frame::{synthesize_frame, FrameSpec};
pub use homography::{estimate_homography, Homography};
pub use ingest::{align_photo, ingest, AlignConfig, AlignedPair, IngestRecord, IngestSummary};
pub use intensity::{correct_intensity, IntensityCorrection};
pub use verify::{verify_pair, Verdict, ETA};
pub use warp::warp;

/// A point in pixel coordinates; pixel centres sit at integer positions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl std::fmt::Display for Point {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({:.2}, {:.2})", self.x, self.y)
    }
}
