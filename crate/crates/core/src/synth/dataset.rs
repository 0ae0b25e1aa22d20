use std::path::{Path, PathBuf};

use rand::Rng;

use super::moire::simulate_until_valid;
use super::references::procedural_reference;
use crate::align::ETA;
use crate::dataset::{assign_splits, read_manifest, write_manifest, DatasetPair, ManifestEntry};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::par::{self, ExecMode};
use crate::seed;

/// Fresh references drawn for one pair before giving up on it.
const REFERENCE_RETRIES: u64 = 5;

#[derive(Clone, Debug, PartialEq)]
pub enum ReferenceSource {
    /// Random crops of the images in these files.
    Images(Vec<Image>),
    /// Procedurally generated scenes.
    Procedural,
}

/// Loads every PNG/PNM image in `dir`, sorted by file name.
pub fn load_references(dir: &Path) -> Result<Vec<Image>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm" | "pgm" | "pnm"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Synthesis(format!("no reference images in {}", dir.display())));
    }
    paths.iter().map(|p| Ok(Image::load(p)?.to_rgb())).collect()
}

fn draw_reference<R: Rng + ?Sized>(source: &ReferenceSource, size: usize, rng: &mut R) -> Result<Image> {
    match source {
        ReferenceSource::Procedural => Ok(procedural_reference(size, size, rng)),
        ReferenceSource::Images(images) => {
            let usable: Vec<&Image> = images.iter().filter(|i| i.width() >= size && i.height() >= size).collect();
            if usable.is_empty() {
                return Err(Error::Size(format!("no reference image is at least {size}x{size}")));
            }
            let img = usable[rng.random_range(0..usable.len())];
            let x = rng.random_range(0..=img.width() - size);
            let y = rng.random_range(0..=img.height() - size);
            img.crop(x, y, size, size)
        }
    }
}

/// Generates `n_pairs` square pairs of side `size` in memory, deterministic
/// in `seed` regardless of `mode`. Splits are 90/5/5.
pub fn generate_pairs(
    source: &ReferenceSource,
    n_pairs: usize,
    size: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<Vec<DatasetPair>> {
    if size < 8 {
        return Err(Error::config("pair size must be at least 8"));
    }
    let splits = assign_splits(n_pairs, seed);
    let pairs = par::map_indexed(mode, n_pairs, |i| -> Result<DatasetPair> {
        let mut last = None;
        for attempt in 0..REFERENCE_RETRIES {
            let mut rng = seed::rng(seed, "pair", (i as u64) * REFERENCE_RETRIES + attempt);
            let reference = draw_reference(source, size, &mut rng)?;
            match simulate_until_valid(&reference, ETA, &mut rng) {
                Ok((input, _, psnr)) => {
                    return Ok(DatasetPair {
                        id: format!("pair{i:05}"),
                        split: splits[i],
                        input,
                        reference,
                        psnr: Some(psnr),
                        alignment: None,
                    })
                }
                Err(e @ Error::Synthesis(_)) => {
                    log::warn!("pair {i}: {e}; drawing a new reference");
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    });
    pairs.into_iter().collect()
}

/// Writes generated pairs under `out_dir/pairs/` and a pair manifest at
/// `out_dir/pairs.tsv`; returns the manifest entries with resolved paths.
pub fn make_dataset(
    source: &ReferenceSource,
    out_dir: &Path,
    n_pairs: usize,
    size: usize,
    seed: u64,
    mode: ExecMode,
) -> Result<Vec<ManifestEntry>> {
    let pairs = generate_pairs(source, n_pairs, size, seed, mode)?;
    std::fs::create_dir_all(out_dir.join("pairs"))?;
    let written = par::map_slice(mode, &pairs, |p| -> Result<ManifestEntry> {
        let input = PathBuf::from("pairs").join(format!("{}_input.png", p.id));
        let reference = PathBuf::from("pairs").join(format!("{}_reference.png", p.id));
        p.input.save(out_dir.join(&input))?;
        p.reference.save(out_dir.join(&reference))?;
        Ok(ManifestEntry { id: p.id.clone(), split: p.split, input, reference, psnr: p.psnr })
    });
    let entries = written.into_iter().collect::<Result<Vec<_>>>()?;
    let manifest = out_dir.join("pairs.tsv");
    write_manifest(&manifest, &entries)?;
    read_manifest(&manifest)
}
