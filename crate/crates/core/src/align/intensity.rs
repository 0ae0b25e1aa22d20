use crate::error::Result;
use crate::image::Image;

#[derive(Clone, Debug, PartialEq)]
pub struct IntensityCorrection {
    pub image: Image,
    /// Per-channel shift that was added before clamping.
    pub shift: Vec<f64>,
    /// Per-channel `mean(reference) - mean(corrected)` after clamping.
    pub residual: Vec<f64>,
}

/// Shifts each channel of `source` so its mean matches `reference`, then
/// clamps to [0, 1].
pub fn correct_intensity(source: &Image, reference: &Image) -> Result<IntensityCorrection> {
    reference.same_dims(source, "intensity correction")?;
    let (ms, mr) = (source.channel_means(), reference.channel_means());
    let shift: Vec<f64> = mr.iter().zip(&ms).map(|(r, s)| r - s).collect();
    let mut image = source.clone();
    for (c, d) in shift.iter().enumerate() {
        for v in image.plane_mut(c) {
            *v = (*v + d).clamp(0.0, 1.0);
        }
    }
    let residual = mr.iter().zip(image.channel_means()).map(|(r, m)| r - m).collect();
    Ok(IntensityCorrection { image, shift, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_means_unchanged() {
        let a = Image::from_fn(3, 4, 4, |c, y, x| ((c + y + x) % 3) as f64 * 0.25 + 0.2);
        let r = correct_intensity(&a, &a).unwrap();
        assert_eq!(r.image, a);
        assert!(r.shift.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn closed_form_shift() {
        let src = Image::filled(3, 5, 5, 0.4);
        let reference = Image::filled(3, 5, 5, 0.5);
        let r = correct_intensity(&src, &reference).unwrap();
        for s in &r.shift {
            assert!((s - 0.1).abs() < 1e-12);
        }
        assert!(r.image.data().iter().all(|v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn unsaturated_means_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let src = Image::from_fn(3, 16, 16, |_, _, _| rng.random_range(0.3..0.6));
        let reference = Image::from_fn(3, 16, 16, |_, _, _| rng.random_range(0.35..0.65));
        let r = correct_intensity(&src, &reference).unwrap();
        for (a, b) in r.image.channel_means().iter().zip(reference.channel_means()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(r.residual.iter().all(|d| d.abs() < 1e-6));
    }
}
