//! Contaminated/reference pairs and the tab-separated pair manifest shared by
//! the synthetic generator, the alignment pipeline and the trainer.
//!
//! ```text
//! # moire pair manifest v1
//! id	split	input	reference	psnr
//! pair00000	train	pairs/pair00000_input.png	pairs/pair00000_reference.png	18.2310
//! ```
//!
//! Paths are relative to the manifest's directory. A bare two-column file
//! (`input<TAB>reference`) is also accepted; every row is then a test pair.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::seed;

pub const MANIFEST_MAGIC: &str = "# moire pair manifest v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::format("manifest", format!("unknown split `{s}`"))),
        }
    }
}

/// Registration details recorded for pairs produced by the alignment
/// pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentInfo {
    pub corner_count: usize,
    pub reprojection_error: f64,
    /// Row-major photo-to-frame homography.
    pub homography: [f64; 9],
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetPair {
    pub id: String,
    pub split: Split,
    pub input: Image,
    pub reference: Image,
    pub psnr: Option<f64>,
    pub alignment: Option<AlignmentInfo>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub input: PathBuf,
    pub reference: PathBuf,
    pub psnr: Option<f64>,
}

/// Sizes of the train/val/test split for `n` pairs (90/5/5).
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = (n as f64 * 0.9).round() as usize;
    let val = ((n as f64 * 0.05).round() as usize).min(n - train);
    (train, val, n - train - val)
}

/// Assigns splits to `n` items through a seeded permutation.
pub fn assign_splits(n: usize, seed: u64) -> Vec<Split> {
    let (train, val, _) = split_sizes(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed, "split", 0));
    let mut splits = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    splits
}

/// Number of pairs in the train, val and test splits.
pub fn split_counts(pairs: &[DatasetPair]) -> [usize; 3] {
    let mut n = [0; 3];
    for p in pairs {
        n[match p.split {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }] += 1;
    }
    n
}

fn fmt_path(p: &Path) -> String {
    p.to_string_lossy().replace('\\', "/")
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{MANIFEST_MAGIC}")?;
    writeln!(out, "id\tsplit\tinput\treference\tpsnr")?;
    for e in entries {
        let psnr = e.psnr.map(|p| format!("{p:.4}")).unwrap_or_else(|| "-".into());
        writeln!(out, "{}\t{}\t{}\t{}\t{psnr}", e.id, e.split, fmt_path(&e.input), fmt_path(&e.reference))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a pair manifest. Relative paths are resolved against the manifest
/// directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base)
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let resolve = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let mut entries = Vec::new();
    let mut columns: Option<Vec<String>> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if columns.is_none() && fields.contains(&"input") && fields.contains(&"reference") {
            columns = Some(fields.iter().map(|s| s.to_string()).collect());
            continue;
        }
        let bad = |d: &str| Error::format("manifest", format!("line {}: {d}", lineno + 1));
        let entry = match &columns {
            Some(cols) => {
                let get = |name: &str| cols.iter().position(|c| c == name).and_then(|i| fields.get(i).copied());
                let input = get("input").ok_or_else(|| bad("missing input column"))?;
                let reference = get("reference").ok_or_else(|| bad("missing reference column"))?;
                ManifestEntry {
                    id: get("id").map(str::to_string).unwrap_or_else(|| format!("pair{:05}", entries.len())),
                    split: get("split").map(str::parse).transpose()?.unwrap_or(Split::Test),
                    input: resolve(input),
                    reference: resolve(reference),
                    psnr: get("psnr").and_then(|p| p.parse().ok()),
                }
            }
            None => {
                if fields.len() < 2 {
                    return Err(bad("expected `input<TAB>reference`"));
                }
                ManifestEntry {
                    id: format!("pair{:05}", entries.len()),
                    split: Split::Test,
                    input: resolve(fields[0]),
                    reference: resolve(fields[1]),
                    psnr: None,
                }
            }
        };
        entries.push(entry);
    }
    Ok(entries)
}

impl DatasetPair {
    /// Loads both images, converting to `channels` (1 or 3).
    pub fn load(entry: &ManifestEntry, channels: usize) -> Result<DatasetPair> {
        let input = Image::load(&entry.input)?.with_channels(channels);
        let reference = Image::load(&entry.reference)?.with_channels(channels);
        reference.same_dims(&input, &format!("pair {}", entry.id))?;
        Ok(DatasetPair {
            id: entry.id.clone(),
            split: entry.split,
            input,
            reference,
            psnr: entry.psnr,
            alignment: None,
        })
    }
}
