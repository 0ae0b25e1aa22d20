use crate::error::Result;
use crate::image::Image;
use crate::metrics::psnr;

/// Minimum PSNR (dB) for a registered pair to be accepted.
pub const ETA: f64 = 12.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Verdict {
    pub accepted: bool,
    pub psnr: f64,
}

pub fn verify_pair(aligned: &Image, reference: &Image, eta: f64) -> Result<Verdict> {
    let psnr = psnr(aligned, reference)?;
    Ok(Verdict { accepted: psnr >= eta, psnr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::PSNR_CAP;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_is_accepted_at_cap() {
        let a = Image::filled(3, 8, 8, 0.3);
        assert_eq!(verify_pair(&a, &a, ETA).unwrap(), Verdict { accepted: true, psnr: PSNR_CAP });
    }

    #[test]
    fn unrelated_noise_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let reference = Image::from_fn(3, 32, 32, |c, y, x| ((c + x + y) % 7) as f64 / 6.0);
        let noise = Image::from_fn(3, 32, 32, |_, _, _| rng.random_range(0.0..1.0));
        let v = verify_pair(&noise, &reference, ETA).unwrap();
        assert!(!v.accepted && v.psnr < 12.0);
    }
}
