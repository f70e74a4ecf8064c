//! The image carrier, PNG I/O and patch extraction.

use std::path::Path;

use image::{ColorType, DynamicImage, ImageFormat, ImageReader};

use crate::error::{Error, Result};

/// An H x W x C image of real intensities, row-major and channel-interleaved.
///
/// Intensities are nominally in `[0, 1]`, but intermediate values (network
/// outputs, sampler states) may leave that range; only [`save_image`] clamps.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("degenerate size {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!("{channels} channels (need 1 or 3)")));
        }
        if data.len() != width * height * channels {
            return Err(Error::LengthMismatch { expected: width * height * channels, actual: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!("non-finite value at index {i}")));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::filled(width, height, channels, 0.0)
    }

    /// Builds an image from `f(x, y, c)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(width, height, channels)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    pub fn same_shape(&self, other: &Image) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch { expected: self.shape(), actual: other.shape() });
        }
        Ok(())
    }

    /// Applies `f` elementwise. Panics if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        Self::new(self.width, self.height, self.channels, data).expect("map produced a non-finite value")
    }

    /// Combines two same-shaped images elementwise.
    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        self.same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Self::new(self.width, self.height, self.channels, data)
    }

    pub fn clamped(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Copies the `size_w` x `size_h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, size_w: usize, size_h: usize) -> Result<Image> {
        if x0 + size_w > self.width || y0 + size_h > self.height {
            return Err(Error::InvalidImage(format!(
                "crop {size_w}x{size_h}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(size_w * size_h * c);
        for y in y0..y0 + size_h {
            let start = self.index(x0, y, 0);
            data.extend_from_slice(&self.data[start..start + size_w * c]);
        }
        Self::new(size_w, size_h, c, data)
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Image) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    /// Root-mean-square of elementwise differences.
    pub fn rms_diff(&self, other: &Image) -> Result<f64> {
        self.same_shape(other)?;
        let ss: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok((ss / self.data.len() as f64).sqrt())
    }
}

/// 8-bit code for an intensity: clamp to `[0, 1]`, then round `v * 255` half away from zero.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Loads an 8- or 16-bit grayscale or RGB PNG, normalized to `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let reader = ImageReader::open(path)
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })?
        .with_guessed_format()
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    if reader.format() != Some(ImageFormat::Png) {
        return Err(Error::UnsupportedFormat { path: path.to_path_buf(), reason: "not a PNG file".into() });
    }
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(u) => {
            Error::UnsupportedFormat { path: path.to_path_buf(), reason: u.to_string() }
        }
        other => Error::CorruptImage { path: path.to_path_buf(), reason: other.to_string() },
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let unsupported = |what: &str| Error::UnsupportedFormat { path: path.to_path_buf(), reason: what.to_string() };
    let (channels, data): (usize, Vec<f64>) = match decoded {
        DynamicImage::ImageLuma8(buf) => (1, buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        DynamicImage::ImageRgb8(buf) => (3, buf.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        DynamicImage::ImageLuma16(buf) => (1, buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
        DynamicImage::ImageRgb16(buf) => (3, buf.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
        DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgba8(_)
        | DynamicImage::ImageRgba16(_) => return Err(unsupported("alpha channel")),
        other => return Err(unsupported(&format!("color type {:?}", other.color()))),
    };
    Image::new(w, h, channels, data)
}

/// Writes an 8-bit PNG, clamping and quantizing with [`quantize`].
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let codes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    let color = if img.channels() == 1 { ColorType::L8 } else { ColorType::Rgb8 };
    image::save_buffer_with_format(path, &codes, img.width() as u32, img.height() as u32, color, ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(source) => Error::Io { path: path.to_path_buf(), source },
            other => Error::Io { path: path.to_path_buf(), source: std::io::Error::other(other.to_string()) },
        })
}

/// Square patches at offsets `(i * stride, j * stride)` lying fully inside the image, row-major.
pub fn extract_patches(img: &Image, size: usize, stride: usize) -> Result<Vec<Image>> {
    if stride == 0 {
        return Err(Error::InvalidConfig("patch stride must be at least 1".into()));
    }
    if size == 0 || size > img.width().min(img.height()) {
        return Err(Error::PatchTooLarge { size, width: img.width(), height: img.height() });
    }
    let rows = (img.height() - size) / stride + 1;
    let cols = (img.width() - size) / stride + 1;
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(img.crop(j * stride, i * stride, size, size)?);
        }
    }
    Ok(out)
}
