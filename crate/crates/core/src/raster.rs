//! Raster and mask primitives shared by every analysis stage.

use crate::error::{Error, Result};

/// An 8-bit raster with 1 (gray) or 3 (RGB) interleaved channels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
    /// Micrometers per pixel, when known.
    pixel_pitch: Option<PitchBits>,
}

// f64 is not Eq; keep the pitch as raw bits so images stay comparable byte-for-byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PitchBits(u64);

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Input(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Input(format!(
                "images must have 1 or 3 channels, got {channels}"
            )));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::Input(format!(
                "pixel buffer holds {} samples, expected {}x{}x{} = {}",
                pixels.len(),
                width,
                height,
                channels,
                width * height * channels
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
            pixel_pitch: None,
        })
    }

    /// A constant image.
    pub fn filled(width: usize, height: usize, value: &[u8]) -> Result<Self> {
        let channels = value.len();
        let pixels = value
            .iter()
            .copied()
            .cycle()
            .take(width * height * channels)
            .collect();
        Self::new(width, height, channels, pixels)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    pixels.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, pixels)
    }

    pub fn with_pixel_pitch(mut self, pitch_um: Option<f64>) -> Result<Self> {
        match pitch_um {
            Some(p) if !(p > 0.0 && p.is_finite()) => Err(Error::Input(format!(
                "pixel pitch must be positive, got {p}"
            ))),
            Some(p) => {
                self.pixel_pitch = Some(PitchBits(p.to_bits()));
                Ok(self)
            }
            None => {
                self.pixel_pitch = None;
                Ok(self)
            }
        }
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

    pub fn pixel_pitch(&self) -> Option<f64> {
        self.pixel_pitch.map(|b| f64::from_bits(b.0))
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn sample(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.pixels[i..i + self.channels]
    }

    #[inline]
    pub fn set_sample(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.pixels[(y * self.width + x) * self.channels + c] = v;
    }

    /// RGB triple for pixel (x, y); gray images replicate their single channel.
    #[inline]
    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let p = self.pixel(x, y);
        if self.channels == 3 {
            [p[0], p[1], p[2]]
        } else {
            [p[0]; 3]
        }
    }

    pub fn same_shape(&self, other: &RasterImage) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn ensure_same_shape(&self, other: &RasterImage, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Input(format!(
                "{what}: dimension mismatch {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    /// Luma-like gray conversion as floats (channel mean for RGB).
    pub fn to_gray_f64(&self) -> Vec<f64> {
        if self.channels == 1 {
            self.pixels.iter().map(|&v| v as f64).collect()
        } else {
            self.pixels
                .chunks_exact(3)
                .map(|p| (p[0] as f64 + p[1] as f64 + p[2] as f64) / 3.0)
                .collect()
        }
    }

    pub fn channel_means(&self) -> Vec<f64> {
        let n = (self.width * self.height) as f64;
        let mut sums = vec![0u64; self.channels];
        for px in self.pixels.chunks_exact(self.channels) {
            for (s, &v) in sums.iter_mut().zip(px) {
                *s += v as u64;
            }
        }
        sums.into_iter().map(|s| s as f64 / n).collect()
    }

    /// Per-channel median over all pixels.
    pub fn channel_medians(&self) -> Vec<u8> {
        let n = self.width * self.height;
        (0..self.channels)
            .map(|c| {
                let mut hist = [0usize; 256];
                for px in self.pixels.chunks_exact(self.channels) {
                    hist[px[c] as usize] += 1;
                }
                median_from_histogram(&hist, n)
            })
            .collect()
    }

    /// Expand a gray image to RGB (identity for RGB input).
    pub fn to_rgb(&self) -> RasterImage {
        if self.channels == 3 {
            return self.clone();
        }
        let pixels = self.pixels.iter().flat_map(|&v| [v, v, v]).collect();
        RasterImage {
            width: self.width,
            height: self.height,
            channels: 3,
            pixels,
            pixel_pitch: self.pixel_pitch,
        }
    }
}

pub(crate) fn median_from_histogram(hist: &[usize; 256], n: usize) -> u8 {
    // lower median
    let target = n.div_ceil(2);
    let mut acc = 0;
    for (v, &count) in hist.iter().enumerate() {
        acc += count;
        if acc >= target {
            return v as u8;
        }
    }
    255
}

/// One boolean per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Input(format!(
                "mask holds {} bits, expected {}",
                bits.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn matches(&self, image: &RasterImage) -> bool {
        self.width == image.width() && self.height == image.height()
    }

    /// Fill enclosed background cavities: every false pixel not 4-connected to
    /// the image border becomes true.
    pub fn fill_holes(&self) -> BinaryMask {
        let (w, h) = (self.width, self.height);
        let mut outside = vec![false; w * h];
        let mut stack = Vec::new();
        let seed = |x: usize, y: usize, outside: &mut Vec<bool>, stack: &mut Vec<usize>| {
            let i = y * w + x;
            if !self.bits[i] && !outside[i] {
                outside[i] = true;
                stack.push(i);
            }
        };
        for x in 0..w {
            seed(x, 0, &mut outside, &mut stack);
            seed(x, h - 1, &mut outside, &mut stack);
        }
        for y in 0..h {
            seed(0, y, &mut outside, &mut stack);
            seed(w - 1, y, &mut outside, &mut stack);
        }
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if !self.bits[j] && !outside[j] {
                    outside[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        BinaryMask {
            width: w,
            height: h,
            bits: outside.into_iter().map(|o| !o).collect(),
        }
    }
}
