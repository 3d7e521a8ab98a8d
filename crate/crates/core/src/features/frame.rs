use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorMode {
    Color,
    Grayscale,
}

impl ColorMode {
    pub fn channels(self) -> usize {
        match self {
            ColorMode::Color => 3,
            ColorMode::Grayscale => 1,
        }
    }
}

/// An image with intensities in `[0, 1]`, stored row-major with interleaved
/// channels. Also used for extracted patches.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    mode: ColorMode,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize, mode: ColorMode, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidFrame(format!("empty frame {width}x{height}")));
        }
        let expected = width * height * mode.channels();
        if data.len() != expected {
            return Err(Error::InvalidFrame(format!(
                "expected {expected} samples, got {}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            mode,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, mode: ColorMode, value: f32) -> Result<Self> {
        Self::new(width, height, mode, vec![value; width * height * mode.channels()])
    }

    /// Builds a frame by evaluating `f(x, y)` for every pixel; `f` returns
    /// one value per channel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mode: ColorMode,
        f: impl Fn(usize, usize) -> [f32; 3],
    ) -> Result<Self> {
        let ch = mode.channels();
        let mut data = Vec::with_capacity(width * height * ch);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                data.extend_from_slice(&v[..ch]);
            }
        }
        Self::new(width, height, mode, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn mode(&self) -> ColorMode {
        self.mode
    }
    pub fn channels(&self) -> usize {
        self.mode.channels()
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels() + c]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let ch = self.channels();
        let i = (y * self.width + x) * ch;
        &self.data[i..i + ch]
    }

    /// Luma per pixel (identity for grayscale frames).
    pub fn to_gray(&self) -> Vec<f64> {
        match self.mode {
            ColorMode::Grayscale => self.data.iter().map(|&v| v as f64).collect(),
            ColorMode::Color => self
                .data
                .chunks_exact(3)
                .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
                .collect(),
        }
    }

    pub fn mean_intensity(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Rounds every sample to the 8-bit grid used by the image files, so
    /// in-memory frames match frames read back from disk.
    pub fn quantized(mut self) -> Self {
        for v in &mut self.data {
            *v = (v.clamp(0.0, 1.0) * 255.0).round() as u8 as f32 / 255.0;
        }
        self
    }

    pub fn to_image(&self) -> DynamicImage {
        let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let bytes: Vec<u8> = self.data.iter().map(|&v| q(v)).collect();
        let (w, h) = (self.width as u32, self.height as u32);
        match self.mode {
            ColorMode::Grayscale => DynamicImage::ImageLuma8(
                GrayImage::from_raw(w, h, bytes).expect("buffer sized by construction"),
            ),
            ColorMode::Color => DynamicImage::ImageRgb8(
                RgbImage::from_raw(w, h, bytes).expect("buffer sized by construction"),
            ),
        }
    }

    pub fn from_image(img: &DynamicImage) -> Result<Self> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img {
            DynamicImage::ImageLuma8(g) => Self::new(
                w,
                h,
                ColorMode::Grayscale,
                g.as_raw().iter().map(|&b| b as f32 / 255.0).collect(),
            ),
            other => {
                let rgb = other.to_rgb8();
                Self::new(
                    w,
                    h,
                    ColorMode::Color,
                    rgb.as_raw().iter().map(|&b| b as f32 / 255.0).collect(),
                )
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_image().save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_image(&img)
    }
}
