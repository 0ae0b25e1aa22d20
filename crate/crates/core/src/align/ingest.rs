use std::io::Write;
use std::path::{Path, PathBuf};

use super::frame::reference_window;
use super::{
    binarize, clean_corners, detect_corners, refine_corners, estimate_homography, synthesize_frame, verify_pair, warp, CleanParams,
    CornerSet, FrameSpec, Homography, Threshold, Verdict, ETA,
};
use crate::dataset::{assign_splits, write_manifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::par::{self, ExecMode};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignConfig {
    /// Frame geometry; sized to each reference when `None`.
    pub frame: Option<FrameSpec>,
    pub threshold: Threshold,
    pub clean: CleanParams,
    pub eta: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig { frame: None, threshold: Threshold::Otsu, clean: CleanParams::default(), eta: ETA }
    }
}

#[derive(Clone, Debug)]
pub struct AlignedPair {
    /// Photo registered to the reference, cropped to the reference size.
    pub aligned: Image,
    /// Maps photo coordinates to frame canvas coordinates.
    pub homography: Homography,
    pub photo_corners: CornerSet,
    pub frame_corners: CornerSet,
    /// Mean distance between mapped photo corners and frame corners.
    pub reprojection_error: f64,
    pub verdict: Verdict,
}

fn find_corners(image: &Image, cfg: &AlignConfig) -> Result<CornerSet> {
    let b = binarize(image, cfg.threshold);
    clean_corners(&refine_corners(image, &detect_corners(&b)?), &b, &cfg.clean)
}

/// Registers a photograph of the framed `reference` onto the reference.
///
/// Corners are detected on the rendered frame as well as on the photo, so
/// systematic detector offsets affect both sides alike.
pub fn align_photo(photo: &Image, reference: &Image, cfg: &AlignConfig) -> Result<AlignedPair> {
    let (w, h) = (reference.width(), reference.height());
    let spec = cfg.frame.unwrap_or_else(|| FrameSpec::for_reference(w, h));
    let (frame, _) = synthesize_frame(reference, &spec)?;
    let frame_corners = find_corners(&frame, cfg)?;
    let photo_corners = find_corners(photo, cfg)?;
    let homography = estimate_homography(photo_corners.points(), frame_corners.points())?;
    let reprojection_error = photo_corners
        .points()
        .iter()
        .zip(frame_corners.points())
        .map(|(p, f)| homography.apply(*p).dist(*f))
        .sum::<f64>()
        / photo_corners.points().len() as f64;
    let warped = warp(&photo.with_channels(reference.channels()), &homography, spec.canvas_width, spec.canvas_height)?;
    let (x, y, cw, ch) = reference_window(&spec, w, h);
    let aligned = warped.crop(x, y, cw, ch)?;
    let verdict = verify_pair(&aligned, reference, cfg.eta)?;
    Ok(AlignedPair { aligned, homography, photo_corners, frame_corners, reprojection_error, verdict })
}

/// One row of the alignment report.
#[derive(Clone, Debug, PartialEq)]
pub struct IngestRecord {
    pub id: String,
    pub corner_count: usize,
    pub reprojection_error: Option<f64>,
    pub psnr: Option<f64>,
    pub accepted: bool,
    /// Why the pair failed before verification.
    pub failure: Option<String>,
}

#[derive(Clone, Debug)]
pub struct IngestSummary {
    pub records: Vec<IngestRecord>,
    pub manifest: PathBuf,
    pub report: PathBuf,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

/// Aligns every `photo<TAB>reference` pair listed in `manifest`, writing the
/// accepted pairs and a pair manifest (`pairs.tsv`) plus a report
/// (`align_report.tsv`) to `out_dir`.
pub fn ingest(manifest: &Path, out_dir: &Path, cfg: &AlignConfig, seed: u64, mode: ExecMode) -> Result<IngestSummary> {
    let entries = crate::dataset::read_manifest(manifest)?;
    std::fs::create_dir_all(out_dir)?;
    let results = par::map_slice(mode, &entries, |e| -> Result<(IngestRecord, Option<ManifestEntry>)> {
        let mut record = IngestRecord {
            id: e.id.clone(),
            corner_count: 0,
            reprojection_error: None,
            psnr: None,
            accepted: false,
            failure: None,
        };
        let loaded = Image::load(&e.input).and_then(|p| Ok((p, Image::load(&e.reference)?)));
        let (photo, reference) = match loaded {
            Ok(v) => v,
            Err(err) => {
                record.failure = Some(err.to_string());
                return Ok((record, None));
            }
        };
        match align_photo(&photo, &reference, cfg) {
            Ok(pair) => {
                record.corner_count = pair.photo_corners.points().len();
                record.reprojection_error = Some(pair.reprojection_error);
                record.psnr = Some(pair.verdict.psnr);
                record.accepted = pair.verdict.accepted;
                if !record.accepted {
                    return Ok((record, None));
                }
                let input = PathBuf::from(format!("{}_input.png", e.id));
                let refer = PathBuf::from(format!("{}_reference.png", e.id));
                pair.aligned.save(out_dir.join(&input))?;
                reference.save(out_dir.join(&refer))?;
                let entry =
                    ManifestEntry { id: e.id.clone(), split: e.split, input, reference: refer, psnr: Some(pair.verdict.psnr) };
                Ok((record, Some(entry)))
            }
            Err(err @ (Error::Detection(_) | Error::Cleaning { .. } | Error::Degenerate(_) | Error::Size(_))) => {
                if let Error::Cleaning { survivors } = &err {
                    record.corner_count = survivors.len();
                }
                record.failure = Some(err.to_string());
                Ok((record, None))
            }
            Err(other) => Err(other),
        }
    });
    let mut records = Vec::with_capacity(results.len());
    let mut accepted = Vec::new();
    for r in results {
        let (record, entry) = r?;
        records.push(record);
        accepted.extend(entry);
    }
    let splits = assign_splits(accepted.len(), seed);
    for (entry, split) in accepted.iter_mut().zip(splits) {
        entry.split = split;
    }
    let manifest_path = out_dir.join("pairs.tsv");
    write_manifest(&manifest_path, &accepted)?;
    let report_path = out_dir.join("align_report.tsv");
    let mut out = std::io::BufWriter::new(std::fs::File::create(&report_path)?);
    writeln!(out, "id\tcorners\treprojection_error\tpsnr\tstatus")?;
    for r in &records {
        let status = match (&r.failure, r.accepted) {
            (Some(f), _) => format!("failed: {f}"),
            (None, true) => "accept".into(),
            (None, false) => "reject".into(),
        };
        writeln!(out, "{}\t{}\t{}\t{}\t{status}", r.id, r.corner_count, fmt_opt(r.reprojection_error), fmt_opt(r.psnr))?;
    }
    out.flush()?;
    Ok(IngestSummary { records, manifest: manifest_path, report: report_path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::Point;

    fn reference() -> Image {
        Image::from_fn(3, 64, 64, |c, y, x| 0.35 + 0.3 * ((x as f64 * 0.1 + c as f64).sin() * (y as f64 * 0.08).cos()))
    }

    #[test]
    fn aligns_a_tilted_capture() {
        let reference = reference();
        let spec = FrameSpec::for_reference(64, 64);
        let (frame, _) = synthesize_frame(&reference, &spec).unwrap();
        let c = Point::new(spec.canvas_width as f64 / 2.0, spec.canvas_height as f64 / 2.0);
        let h = Homography::camera_rotation(0.15, -0.1, 0.05, 300.0, c);
        // Warp the negative so uncovered pixels come out white.
        let photo = warp(&frame.map(|v| 1.0 - v), &h, spec.canvas_width + 40, spec.canvas_height + 40)
            .unwrap()
            .map(|v| 1.0 - v);
        let pair = align_photo(&photo, &reference, &AlignConfig::default()).unwrap();
        assert!(pair.reprojection_error < 0.5, "{}", pair.reprojection_error);
        assert!(pair.verdict.accepted);
        assert!(pair.verdict.psnr > 30.0, "{}", pair.verdict.psnr);
    }

    #[test]
    fn batch_writes_report_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let reference = reference();
        let spec = FrameSpec::for_reference(64, 64);
        let (frame, _) = synthesize_frame(&reference, &spec).unwrap();
        frame.save(dir.path().join("photo.png")).unwrap();
        reference.save(dir.path().join("ref.png")).unwrap();
        Image::filled(3, 64, 64, 1.0).save(dir.path().join("blank.png")).unwrap();
        std::fs::write(dir.path().join("in.tsv"), "photo.png\tref.png\nblank.png\tref.png\n").unwrap();
        let out = dir.path().join("out");
        let s = ingest(&dir.path().join("in.tsv"), &out, &AlignConfig::default(), 1, ExecMode::Sequential).unwrap();
        assert_eq!(s.records.len(), 2);
        assert!(s.records[0].accepted);
        assert!(s.records[1].failure.is_some());
        let report = std::fs::read_to_string(&s.report).unwrap();
        assert_eq!(report.lines().count(), 3);
        assert!(report.lines().nth(1).unwrap().ends_with("accept"));
        let pairs = crate::dataset::read_manifest(&s.manifest).unwrap();
        assert_eq!(pairs.len(), 1);
        assert!(pairs[0].input.exists());
    }
}
