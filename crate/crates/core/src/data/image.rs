use std::path::Path;

use candle_core::{DType, Device, Tensor};

use crate::error::{Error, Result};

/// Map an 8-bit channel value onto [-1, 1].
#[inline]
pub fn normalize(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

/// Inverse of [`normalize`], rounding to the nearest 8-bit value.
#[inline]
pub fn denormalize(v: f32) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Channel-last RGB image with values in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * Self::CHANNELS {
            return Err(Error::Shape(format!(
                "image buffer of {} values for {height}x{width}x3",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let data = (0..height * width).flat_map(|_| rgb).collect();
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[(row * self.width + col) * 3 + ch]
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [f32; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Bilinear sample at a continuous point. Pixel `(row, col)` covers
    /// `[col, col + 1) x [row, row + 1)`, so its center is `(col + 0.5, row + 0.5)`.
    /// Sample positions are clamped to the pixel-center lattice.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> [f32; 3] {
        let fx = (x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = fx - x0 as f64;
        let ty = fy - y0 as f64;
        let mut out = [0f32; 3];
        for (c, o) in out.iter_mut().enumerate() {
            let v00 = self.get(y0, x0, c) as f64;
            let v01 = self.get(y0, x1, c) as f64;
            let v10 = self.get(y1, x0, c) as f64;
            let v11 = self.get(y1, x1, c) as f64;
            let top = v00 * (1.0 - tx) + v01 * tx;
            let bot = v10 * (1.0 - tx) + v11 * tx;
            *o = (top * (1.0 - ty) + bot * ty) as f32;
        }
        out
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let data = img.as_raw().iter().map(|&v| normalize(v)).collect();
        Self {
            height: h as usize,
            width: w as usize,
            data,
        }
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let raw = self.data.iter().map(|&v| denormalize(v)).collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
    }

    /// Values as 8-bit intensities, kept as floats.
    pub fn to_u8_values(&self) -> Vec<f64> {
        self.data.iter().map(|&v| denormalize(v) as f64).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb8().save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Resample to `size x size` with a triangle filter on the 8-bit representation.
    pub fn resized(&self, height: usize, width: usize) -> Self {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let rgb = self.to_rgb8();
        let out = image::imageops::resize(
            &rgb,
            width as u32,
            height as u32,
            image::imageops::FilterType::Triangle,
        );
        Self::from_rgb8(&out)
    }

    /// `(1, 3, H, W)` tensor.
    pub fn to_tensor(&self, device: &Device, dtype: DType) -> Result<Tensor> {
        let t = Tensor::from_slice(&self.data, (self.height, self.width, 3), device)?
            .permute((2, 0, 1))?
            .unsqueeze(0)?
            .to_dtype(dtype)?
            .contiguous()?;
        Ok(t)
    }

    /// Stack images into a `(B, 3, H, W)` tensor.
    pub fn batch_tensor(images: &[&Image], device: &Device, dtype: DType) -> Result<Tensor> {
        let parts = images
            .iter()
            .map(|im| im.to_tensor(device, dtype))
            .collect::<Result<Vec<_>>>()?;
        Ok(Tensor::cat(&parts, 0)?)
    }

    /// Read image `index` out of a `(B, 3, H, W)` tensor.
    pub fn from_tensor(t: &Tensor, index: usize) -> Result<Self> {
        let (_, c, h, w) = t.dims4()?;
        if c != 3 {
            return Err(Error::Shape(format!("expected 3 channels, got {c}")));
        }
        let data = t
            .get(index)?
            .permute((1, 2, 0))?
            .to_dtype(DType::F32)?
            .flatten_all()?
            .to_vec1::<f32>()?;
        Self::new(h, w, data)
    }

    /// Lay out rows of equally sized images in a grid.
    pub fn contact_sheet(rows: &[Vec<&Image>]) -> Option<Self> {
        let first = rows.first()?.first()?;
        let (h, w) = (first.height, first.width);
        let ncols = rows.iter().map(Vec::len).max()?;
        let mut sheet = Image::filled(h * rows.len(), w * ncols, [1.0; 3]);
        for (r, row) in rows.iter().enumerate() {
            for (c, im) in row.iter().enumerate() {
                for y in 0..h.min(im.height) {
                    for x in 0..w.min(im.width) {
                        sheet.set_pixel(r * h + y, c * w + x, im.pixel(y, x));
                    }
                }
            }
        }
        Some(sheet)
    }
}
