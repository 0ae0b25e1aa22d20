use crate::image::Image;

/// Black/white mask; `true` marks black.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    black: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, black: Vec<bool>) -> Self {
        assert_eq!(black.len(), width * height, "mask length");
        BinaryImage { width, height, black }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut black = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                black.push(f(x, y));
            }
        }
        BinaryImage { width, height, black }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_black(&self, x: usize, y: usize) -> bool {
        self.black[y * self.width + x]
    }

    /// Like `is_black`, with everything outside the image white.
    pub fn is_black_at(&self, x: isize, y: isize) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.is_black(x as usize, y as usize)
    }

    pub fn mask(&self) -> &[bool] {
        &self.black
    }

    pub fn black_count(&self) -> usize {
        self.black.iter().filter(|&&b| b).count()
    }

    /// 0 for black, 1 for white.
    pub fn to_image(&self) -> Image {
        Image::from_fn(1, self.height, self.width, |_, y, x| if self.is_black(x, y) { 0.0 } else { 1.0 })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Threshold {
    #[default]
    Otsu,
    Fixed(f64),
}

/// Otsu's threshold over a 256-bin histogram of values in [0, 1]. Returns
/// the upper edge of the last bin assigned to the dark class.
pub fn otsu_threshold(values: &[f64]) -> f64 {
    const BINS: usize = 256;
    let mut hist = [0usize; BINS];
    for &v in values {
        hist[((v.clamp(0.0, 1.0) * (BINS - 1) as f64).round()) as usize] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &n)| i as f64 * n as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (i, &n) in hist.iter().enumerate().take(BINS - 1) {
        w0 += n as f64;
        sum0 += i as f64 * n as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best.0 {
            best = (between, i);
        }
    }
    if best.0 == f64::NEG_INFINITY {
        // Single-valued image: split at mid-gray.
        return 0.5;
    }
    (best.1 as f64 + 0.5) / (BINS - 1) as f64
}

/// Luminance is the mean of the channels; pixels at or below the threshold
/// become black.
pub fn binarize(image: &Image, threshold: Threshold) -> BinaryImage {
    let gray = image.to_gray();
    let t = match threshold {
        Threshold::Fixed(t) => t,
        Threshold::Otsu => otsu_threshold(gray.data()),
    };
    BinaryImage {
        width: image.width(),
        height: image.height(),
        black: gray.data().iter().map(|&v| v <= t).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_stays_white() {
        let img = Image::filled(3, 8, 8, 1.0);
        assert_eq!(binarize(&img, Threshold::Fixed(0.5)).black_count(), 0);
        assert_eq!(binarize(&img, Threshold::Otsu).black_count(), 0);
    }

    #[test]
    fn fixed_threshold_recovers_mask() {
        let img = Image::from_fn(3, 10, 12, |_, y, x| if (x + 2 * y) % 5 < 2 { 0.0 } else { 1.0 });
        let b = binarize(&img, Threshold::Fixed(0.5));
        for y in 0..10 {
            for x in 0..12 {
                assert_eq!(b.is_black(x, y), (x + 2 * y) % 5 < 2);
            }
        }
    }

    #[test]
    fn otsu_splits_two_modes() {
        let mut v = vec![0.1; 500];
        v.extend(vec![0.8; 300]);
        let t = otsu_threshold(&v);
        assert!(t > 0.1 && t < 0.8, "threshold {t}");
    }

    #[test]
    fn gray_is_channel_mean() {
        let img = Image::from_fn(3, 1, 1, |c, _, _| [0.2, 0.5, 0.6][c]);
        assert!(binarize(&img, Threshold::Fixed(0.44)).is_black(0, 0));
        assert!(!binarize(&img, Threshold::Fixed(0.42)).is_black(0, 0));
    }
}
