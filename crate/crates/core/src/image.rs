//! Planar floating point images in `[0, 1]` and their 8-bit file forms.

use std::path::Path;

use ::image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use ::image::{ColorType, DynamicImage, ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor4};

/// A `channels x height x width` image stored plane by plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// On-disk encodings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileFormat {
    Png,
    PnmBinary,
    PnmAscii,
}

impl FileFormat {
    /// Picks a format from the file extension. `.ppm`/`.pgm` are written in
    /// binary form.
    pub fn from_path(path: &Path) -> Result<FileFormat> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "png" => Ok(FileFormat::Png),
            "ppm" | "pgm" | "pnm" => Ok(FileFormat::PnmBinary),
            _ => Err(Error::format("image path", format!("unsupported extension in {}", path.display()))),
        }
    }
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Image { channels, height, width, data: vec![value; channels * height * width] }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape(format!(
                "image buffer of {} values does not match {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Image { channels, height, width, data })
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Image { channels, height, width, data }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let len = self.height * self.width;
        &self.data[c * len..(c + 1) * len]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let len = self.height * self.width;
        &mut self.data[c * len..(c + 1) * len]
    }

    pub fn same_dims(&self, other: &Image, what: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::shape(format!(
                "{what}: image dims {:?} differ from {:?}",
                other.dims(),
                self.dims()
            )));
        }
        Ok(())
    }

    pub fn clamped(&self) -> Image {
        Image { data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(), ..self.clone() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image { data: self.data.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    /// Single-channel luminance as the mean of the channels.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let inv = 1.0 / self.channels as f64;
        Image::from_fn(1, self.height, self.width, |_, y, x| {
            (0..self.channels).map(|c| self.get(c, y, x)).sum::<f64>() * inv
        })
    }

    /// Three-channel version; grayscale planes are replicated.
    pub fn to_rgb(&self) -> Image {
        match self.channels {
            3 => self.clone(),
            _ => Image::from_fn(3, self.height, self.width, |_, y, x| self.get(0, y, x)),
        }
    }

    pub fn with_channels(&self, channels: usize) -> Image {
        match channels {
            1 => self.to_gray(),
            _ => self.to_rgb(),
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Image> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::shape(format!(
                "crop {width}x{height} at ({x0}, {y0}) exceeds {}x{} image",
                self.width, self.height
            )));
        }
        Ok(Image::from_fn(self.channels, height, width, |c, y, x| self.get(c, y0 + y, x0 + x)))
    }

    pub fn channel_means(&self) -> Vec<f64> {
        let n = (self.height * self.width) as f64;
        (0..self.channels).map(|c| self.plane(c).iter().sum::<f64>() / n).collect()
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor4<T> {
        let shape = Shape::new(1, self.channels, self.height, self.width);
        Tensor4::from_vec(shape, self.data.iter().map(|&v| T::lit(v)).collect())
            .expect("image and tensor sizes agree")
    }

    pub fn from_tensor<T: Scalar>(t: &Tensor4<T>, n: usize) -> Image {
        let s = t.shape();
        Image {
            channels: s.c,
            height: s.h,
            width: s.w,
            data: t.sample(n).iter().map(|v| v.as_f64()).collect(),
        }
    }

    /// Stacks equally sized images into one batch tensor.
    pub fn batch<T: Scalar>(images: &[&Image]) -> Result<Tensor4<T>> {
        let parts: Vec<Tensor4<T>> = images.iter().map(|i| i.to_tensor()).collect();
        Tensor4::stack(&parts)
    }

    /// 8-bit quantization after clamping.
    pub fn to_u8_interleaved(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    out.push((self.get(c, y, x).clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
        out
    }

    pub fn from_u8_interleaved(channels: usize, height: usize, width: usize, bytes: &[u8]) -> Result<Image> {
        if bytes.len() != channels * height * width {
            return Err(Error::shape("byte buffer does not match image dims"));
        }
        Ok(Image::from_fn(channels, height, width, |c, y, x| {
            bytes[(y * width + x) * channels + c] as f64 / 255.0
        }))
    }

    /// Loads PNG or PNM. Color sources become 3 channels, gray sources 1.
    pub fn load(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let dynamic = ::image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
        Ok(Self::from_dynamic(&dynamic))
    }

    fn from_dynamic(dynamic: &DynamicImage) -> Image {
        let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
        if dynamic.color().has_color() {
            let buf = dynamic.to_rgb8();
            Image::from_u8_interleaved(3, h, w, buf.as_raw()).expect("rgb8 buffer size")
        } else {
            let buf = dynamic.to_luma8();
            Image::from_u8_interleaved(1, h, w, buf.as_raw()).expect("luma8 buffer size")
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.save_as(path, FileFormat::from_path(path)?)
    }

    pub fn save_as(&self, path: impl AsRef<Path>, format: FileFormat) -> Result<()> {
        let path = path.as_ref();
        let color = match self.channels {
            1 => ExtendedColorType::L8,
            3 => ExtendedColorType::Rgb8,
            c => return Err(Error::shape(format!("cannot encode a {c}-channel image"))),
        };
        let bytes = self.to_u8_interleaved();
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let wrap = |source| Error::Image { path: path.to_path_buf(), source };
        let (w, h) = (self.width as u32, self.height as u32);
        match format {
            FileFormat::Png => ::image::codecs::png::PngEncoder::new(file)
                .write_image(&bytes, w, h, color)
                .map_err(wrap),
            FileFormat::PnmBinary | FileFormat::PnmAscii => {
                let encoding = if format == FileFormat::PnmAscii {
                    SampleEncoding::Ascii
                } else {
                    SampleEncoding::Binary
                };
                let subtype = if self.channels == 1 {
                    PnmSubtype::Graymap(encoding)
                } else {
                    PnmSubtype::Pixmap(encoding)
                };
                let color = if self.channels == 1 { ColorType::L8 } else { ColorType::Rgb8 };
                PnmEncoder::new(file)
                    .with_subtype(subtype)
                    .write_image(&bytes, w, h, color.into())
                    .map_err(wrap)
            }
        }
    }
}
