use rand::Rng;

use crate::dataset::DatasetPair;
use crate::error::Result;
use crate::image::Image;

/// Crops the same uniformly placed `p x p` window from both images of a
/// pair. Pairs smaller than `p` are skipped with a warning.
pub fn sample_patches<R: Rng + ?Sized>(
    pair: &DatasetPair,
    p: usize,
    rng: &mut R,
) -> Result<Option<(Image, Image)>> {
    pair.reference.same_dims(&pair.input, &format!("pair {}", pair.id))?;
    let (h, w) = (pair.input.height(), pair.input.width());
    if h < p || w < p {
        log::warn!("skipping pair {}: {w}x{h} is smaller than the {p}x{p} patch", pair.id);
        return Ok(None);
    }
    let x0 = rng.random_range(0..=w - p);
    let y0 = rng.random_range(0..=h - p);
    Ok(Some((pair.input.crop(x0, y0, p, p)?, pair.reference.crop(x0, y0, p, p)?)))
}

/// Deterministic centred crop, used for validation.
pub fn center_patch(pair: &DatasetPair, p: usize) -> Result<Option<(Image, Image)>> {
    let (h, w) = (pair.input.height(), pair.input.width());
    if h < p || w < p {
        log::warn!("skipping pair {}: {w}x{h} is smaller than the {p}x{p} patch", pair.id);
        return Ok(None);
    }
    let (x0, y0) = ((w - p) / 2, (h - p) / 2);
    Ok(Some((pair.input.crop(x0, y0, p, p)?, pair.reference.crop(x0, y0, p, p)?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Split;
    use crate::metrics::psnr;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair(h: usize, w: usize) -> DatasetPair {
        DatasetPair {
            id: "p".into(),
            split: Split::Train,
            input: Image::from_fn(3, h, w, |c, y, x| ((c * 7 + y * 3 + x * 5) % 17) as f64 / 17.0),
            reference: Image::from_fn(3, h, w, |c, y, x| ((c + y * 11 + x * 2) % 13) as f64 / 13.0),
            psnr: None,
            alignment: None,
        }
    }

    #[test]
    fn exact_size_crop_is_whole_image() {
        let pr = pair(16, 16);
        let (a, b) = sample_patches(&pr, 16, &mut ChaCha8Rng::seed_from_u64(0)).unwrap().unwrap();
        assert_eq!(a, pr.input);
        assert_eq!(b, pr.reference);
    }

    #[test]
    fn fixed_seed_reproduces_crops() {
        let pr = pair(40, 50);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..5).map(|_| sample_patches(&pr, 16, &mut rng).unwrap().unwrap().0).collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
    }

    #[test]
    fn too_small_is_skipped() {
        assert!(sample_patches(&pair(8, 30), 16, &mut ChaCha8Rng::seed_from_u64(0)).unwrap().is_none());
    }

    #[test]
    fn crop_keeps_pixel_correspondence() {
        let pr = pair(40, 50);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let mut probe = rng.clone();
            let (a, b) = sample_patches(&pr, 16, &mut rng).unwrap().unwrap();
            // Same draws as sample_patches makes.
            let x0 = probe.random_range(0..=50 - 16);
            let y0 = probe.random_range(0..=40 - 16);
            let mut sq = 0.0;
            for c in 0..3 {
                for y in 0..16 {
                    for x in 0..16 {
                        let d = pr.input.get(c, y0 + y, x0 + x) - pr.reference.get(c, y0 + y, x0 + x);
                        sq += d * d;
                    }
                }
            }
            let direct = 10.0 * (1.0 / (sq / (3.0 * 256.0))).log10();
            assert!((psnr(&a, &b).unwrap() - direct).abs() < 1e-9);
        }
    }
}
