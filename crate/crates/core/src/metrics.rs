//! Full-reference image quality measures for images in `[0, 1]`.

use crate::error::{Error, Result};
use crate::image::Image;

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Mean squared error over all pixels and channels.
pub fn mean_error(a: &Image, b: &Image) -> Result<f64> {
    a.same_dims(b, "mean error")?;
    let n = a.data().len() as f64;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        PSNR_CAP
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

/// PSNR with a peak value of 1, computed over all channels jointly.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(psnr_from_mse(mean_error(a, b)?))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable "valid" filtering: output is `(h - 10) x (w - 10)`.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&src[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let k = gaussian_kernel();
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let prod = |f: fn(f64, f64) -> f64| -> Vec<f64> { a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect() };
    let mu_a = filter_valid(a, h, w, &k);
    let mu_b = filter_valid(b, h, w, &k);
    let aa = filter_valid(&prod(|x, _| x * x), h, w, &k);
    let bb = filter_valid(&prod(|_, y| y * y), h, w, &k);
    let ab = filter_valid(&prod(|x, y| x * y), h, w, &k);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total / mu_a.len() as f64
}

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), computed per channel
/// and averaged.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.same_dims(b, "ssim")?;
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::Size(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.width(),
            a.height()
        )));
    }
    let c = a.channels();
    Ok((0..c).map(|ch| ssim_plane(a.plane(ch), b.plane(ch), a.height(), a.width())).sum::<f64>() / c as f64)
}

/// Quality of one image against its reference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityReport {
    pub psnr: f64,
    pub ssim: f64,
    pub mse: f64,
}

impl QualityReport {
    pub fn measure(image: &Image, reference: &Image) -> Result<Self> {
        let mse = mean_error(image, reference)?;
        Ok(QualityReport { psnr: psnr_from_mse(mse), ssim: ssim(image, reference)?, mse })
    }
}

/// Corpus means of restored outputs and of the baseline inputs they started
/// from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorpusSummary {
    pub count: usize,
    pub psnr_mean: f64,
    pub baseline_psnr_mean: f64,
    pub mse_mean: f64,
    pub ssim_mean: f64,
}

impl CorpusSummary {
    /// `pairs` holds `(restored, baseline)` reports per image.
    pub fn from_reports(pairs: &[(QualityReport, QualityReport)]) -> Self {
        let n = pairs.len().max(1) as f64;
        let mean = |f: &dyn Fn(&(QualityReport, QualityReport)) -> f64| pairs.iter().map(f).sum::<f64>() / n;
        CorpusSummary {
            count: pairs.len(),
            psnr_mean: mean(&|p| p.0.psnr),
            baseline_psnr_mean: mean(&|p| p.1.psnr),
            mse_mean: mean(&|p| p.0.mse),
            ssim_mean: mean(&|p| p.0.ssim),
        }
    }

    pub fn psnr_gain(&self) -> f64 {
        self.psnr_mean - self.baseline_psnr_mean
    }

    /// Summary rows named after the usual result-table rows.
    pub fn table_rows(&self) -> String {
        format!(
            "PSNR Mean (dB)\t{:.4}\nPSNR Gain (dB)\t{:.4}\nAve Error\t{:.6}\nSSIM\t{:.4}\n",
            self.psnr_mean,
            self.psnr_gain(),
            self.mse_mean,
            self.ssim_mean
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, c: usize, h: usize, w: usize) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(c, h, w, |_, _, _| rng.random_range(0.0..1.0))
    }

    #[test]
    fn identical_images_hit_the_cap() {
        let a = random_image(1, 3, 12, 12);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        assert_eq!(mean_error(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_closed_form() {
        let a = Image::filled(3, 8, 8, 0.5);
        let b = Image::filled(3, 8, 8, 0.4);
        let mse = mean_error(&a, &b).unwrap();
        assert!((mse - 0.01).abs() < 1e-15);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(mean_error(&Image::filled(1, 4, 4, 0.0), &Image::filled(1, 4, 4, 1.0)).unwrap(), 1.0);
    }

    #[test]
    fn psnr_matches_direct_recomputation() {
        let a = random_image(2, 3, 9, 13);
        let b = random_image(3, 3, 9, 13);
        let mut sq = 0.0;
        for i in 0..a.data().len() {
            sq += (a.data()[i] - b.data()[i]).powi(2);
        }
        let direct = 10.0 * (1.0 / (sq / a.data().len() as f64)).log10();
        assert!((psnr(&a, &b).unwrap() - direct).abs() < 1e-9);
        let mse = mean_error(&a, &b).unwrap();
        assert!((mse - 10f64.powf(-psnr(&a, &b).unwrap() / 10.0)).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(psnr(&Image::new(3, 4, 4), &Image::new(1, 4, 4)).is_err());
        assert!(ssim(&Image::new(1, 10, 20), &Image::new(1, 10, 20)).is_err());
    }

    #[test]
    fn ssim_identity_and_inverse() {
        // Mid-contrast fixture: smooth ramps in [0.25, 0.75].
        let x = Image::from_fn(3, 32, 32, |c, y, x| 0.25 + 0.5 * ((x + 2 * y + 5 * c) % 32) as f64 / 31.0);
        assert_eq!(ssim(&x, &x).unwrap(), 1.0);
        let inv = x.map(|v| 1.0 - v);
        assert!(ssim(&x, &inv).unwrap() < 0.2);
    }

    proptest! {
        #[test]
        fn ssim_is_symmetric_and_bounded(seed_a in 0u64..1000, seed_b in 0u64..1000) {
            let a = random_image(seed_a, 1, 16, 16);
            let b = random_image(seed_b + 5000, 1, 16, 16);
            let ab = ssim(&a, &b).unwrap();
            let ba = ssim(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ab > -1.0 && ab <= 1.0);
            prop_assert!(ab < 1.0 - 1e-9);
        }

        #[test]
        fn psnr_symmetric_and_shift_invariant(seed in 0u64..1000, shift in -0.2f64..0.2) {
            let a = random_image(seed, 3, 6, 6).map(|v| 0.25 + 0.5 * v);
            let b = random_image(seed + 1, 3, 6, 6).map(|v| 0.25 + 0.5 * v);
            let p = psnr(&a, &b).unwrap();
            prop_assert!((p - psnr(&b, &a).unwrap()).abs() < 1e-12);
            let p2 = psnr(&a.map(|v| v + shift), &b.map(|v| v + shift)).unwrap();
            prop_assert!((p - p2).abs() < 1e-9);
        }

        #[test]
        fn psnr_decreases_with_mse(m1 in 1e-6f64..1.0, m2 in 1e-6f64..1.0) {
            prop_assume!(m1 < m2);
            prop_assert!(psnr_from_mse(m1) > psnr_from_mse(m2));
        }
    }
}
