//! Planar RGB images with values in `[0, 1]`, and their PNG encoding.

use std::io::Cursor;
use std::path::Path;

use uwstyle_tensor::{Float, Tensor};

use crate::error::{Error, Result};

/// Smallest accepted side length.
pub const MIN_SIDE: usize = 8;

/// `H×W×3` RGB image, stored channel-planar, every value finite and in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    /// `data` is channel-planar: all red values, then green, then blue.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height < MIN_SIDE || width < MIN_SIDE {
            return Err(Error::InvalidArgument(format!(
                "image must be at least {MIN_SIDE}x{MIN_SIDE}, got {height}x{width}"
            )));
        }
        if data.len() != 3 * height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} RGB image needs {} values, got {}",
                3 * height * width,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "pixel value {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Build from `f(channel, y, x)`; values are clamped into `[0, 1]`.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(3 * height * width);
        for c in 0..3 {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x).clamp(0.0, 1.0));
                }
            }
        }
        Self::new(height, width, data)
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::from_fn(height, width, |c, _, _| rgb[c])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn mean_rgb(&self) -> [f64; 3] {
        let n = (self.height * self.width) as f64;
        [0, 1, 2].map(|c| self.channel(c).iter().sum::<f64>() / n)
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::InvalidArgument(format!(
                "crop {height}x{width}+{top}+{left} outside {}x{}",
                self.height, self.width
            )));
        }
        Image::from_fn(height, width, |c, y, x| self.get(c, top + y, left + x))
    }

    pub fn flip_horizontal(&self) -> Image {
        let w = self.width;
        Image::from_fn(self.height, w, |c, y, x| self.get(c, y, w - 1 - x))
            .expect("flip preserves validity")
    }

    /// `1×3×H×W` tensor.
    pub fn to_tensor<T: Float>(&self) -> Tensor<T> {
        Tensor::new(
            &[1, 3, self.height, self.width],
            self.data.iter().map(|&v| T::from_f64(v)).collect(),
        )
        .expect("image tensor shape")
    }

    /// Item `index` of an `N×3×H×W` tensor. Values are clamped into `[0, 1]`.
    pub fn from_tensor<T: Float>(t: &Tensor<T>, index: usize) -> Result<Image> {
        if t.shape().len() != 4 || t.shape()[1] != 3 || index >= t.shape()[0] {
            return Err(Error::Shape(format!(
                "expected N×3×H×W tensor with item {index}, got {:?}",
                t.shape()
            )));
        }
        let (_, _, h, w) = t.dims4();
        let plane = 3 * h * w;
        let src = &t.data()[index * plane..(index + 1) * plane];
        if src.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("decoded image".into()));
        }
        Image::new(h, w, src.iter().map(|v| v.to_f64().clamp(0.0, 1.0)).collect())
    }

    /// Quantize to interleaved 8-bit RGB.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let n = self.height * self.width;
        let mut out = Vec::with_capacity(3 * n);
        for i in 0..n {
            for c in 0..3 {
                out.push((self.data[c * n + i] * 255.0).round() as u8);
            }
        }
        out
    }

    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Image> {
        if bytes.len() != 3 * height * width {
            return Err(Error::Shape("rgb8 buffer length".into()));
        }
        Image::from_fn(height, width, |c, y, x| {
            bytes[(y * width + x) * 3 + c] as f64 / 255.0
        })
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.to_rgb8())
            .ok_or_else(|| Error::Codec("rgb buffer size".into()))?;
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| Error::Codec(e.to_string()))?;
        Ok(out.into_inner())
    }

    /// Decode any PNG or JPEG byte stream into RGB.
    pub fn decode(bytes: &[u8]) -> Result<Image> {
        let img = image::load_from_memory(bytes).map_err(|e| Error::Codec(e.to_string()))?;
        let rgb = img.to_rgb8();
        Image::from_rgb8(rgb.height() as usize, rgb.width() as usize, rgb.as_raw())
    }

    /// `(height, width)` from the header alone.
    pub fn probe_size(bytes: &[u8]) -> Result<(usize, usize)> {
        let (w, h) = image::ImageReader::new(Cursor::new(bytes))
            .with_guessed_format()
            .map_err(|e| Error::Codec(e.to_string()))?
            .into_dimensions()
            .map_err(|e| Error::Codec(e.to_string()))?;
        Ok((h as usize, w as usize))
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Image> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Image::decode(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

/// Per-pixel scene depth, non-negative.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// Depth units per 16-bit PNG level.
pub const DEPTH_PNG_SCALE: f64 = 1e-4;

impl DepthMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} depth map needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidArgument(format!("depth value {bad} is not a finite non-negative number")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, depth: f64) -> Result<Self> {
        Self::new(height, width, vec![depth; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// 16-bit grayscale PNG with [`DEPTH_PNG_SCALE`] units per level.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let levels: Vec<u16> = self
            .data
            .iter()
            .map(|&d| (d / DEPTH_PNG_SCALE).round().min(u16::MAX as f64) as u16)
            .collect();
        let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
            image::ImageBuffer::from_raw(self.width as u32, self.height as u32, levels)
                .ok_or_else(|| Error::Codec("depth buffer size".into()))?;
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::Codec(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<DepthMap> {
        let img = image::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let gray = img.to_luma16();
        DepthMap::new(
            gray.height() as usize,
            gray.width() as usize,
            gray.as_raw().iter().map(|&v| v as f64 * DEPTH_PNG_SCALE).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_and_tiny_images() {
        assert!(Image::new(8, 8, vec![1.5; 192]).is_err());
        assert!(Image::new(7, 8, vec![0.5; 168]).is_err());
        assert!(Image::new(8, 8, vec![f64::NAN; 192]).is_err());
        assert!(Image::new(8, 8, vec![0.5; 192]).is_ok());
    }

    #[test]
    fn png_round_trip_is_quantized_identity() {
        let img = Image::from_fn(9, 11, |c, y, x| ((c * 31 + y * 7 + x * 3) % 256) as f64 / 255.0)
            .unwrap();
        let back = Image::decode(&img.encode_png().unwrap()).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn tensor_round_trip() {
        let img = Image::from_fn(8, 10, |c, y, x| (c + y + x) as f64 / 20.0).unwrap();
        let t = img.to_tensor::<f64>();
        assert_eq!(t.shape(), &[1, 3, 8, 10]);
        assert_eq!(Image::from_tensor(&t, 0).unwrap(), img);
    }

    #[test]
    fn depth_png_round_trip_within_quantum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let depth = DepthMap::new(8, 8, (0..64).map(|i| i as f64 * 0.04).collect()).unwrap();
        depth.save_png(&path).unwrap();
        let back = DepthMap::load(&path).unwrap();
        for (a, b) in depth.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= DEPTH_PNG_SCALE);
        }
    }
}
