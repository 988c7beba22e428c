//! Image containers, grayscale quantization and the corruption suite.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::filter;

/// RGB image with channels normalized to `[0, 1]`, row-major, interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("image dimensions must be positive"));
        }
        if data.len() != width * height * 3 {
            return Err(Error::param(format!(
                "expected {} channel values, got {}",
                width * height * 3,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::param(format!("channel value {v} outside [0, 1]")));
        }
        Ok(RgbImage {
            width,
            height,
            data,
        })
    }

    /// Build from a per-pixel closure; values are clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).iter().map(|v| v.clamp(0.0, 1.0)));
            }
        }
        RgbImage {
            width,
            height,
            data,
        }
    }

    pub fn constant(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        Self::from_fn(width, height, |_, _| rgb)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixel_at(y * self.width + x)
    }

    #[inline]
    pub fn pixel_at(&self, idx: usize) -> [f64; 3] {
        let o = idx * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    fn map_pixels(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> RgbImage {
        let mut data = Vec::with_capacity(self.data.len());
        for p in self.pixels() {
            data.extend(f(p).iter().map(|v| v.clamp(0.0, 1.0)));
        }
        RgbImage {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Quantize to 8 bits per channel (round to nearest).
    pub fn to_rgb8(&self) -> image::RgbImage {
        let raw = self
            .data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_rgb8()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| image_error(path, e))
    }
}

impl From<&image::RgbImage> for RgbImage {
    fn from(img: &image::RgbImage) -> Self {
        RgbImage {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect(),
        }
    }
}

pub(crate) fn image_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(format!("{}: {other}", path.display())),
    }
}

/// Decode a PNG or binary PPM file. 8-bit channels are divided by 255,
/// 16-bit channels by 65535.
pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(image::ImageFormat::Png) | Some(image::ImageFormat::Pnm) => {}
        Some(other) => {
            return Err(Error::format(format!(
                "{}: unsupported image format {other:?}",
                path.display()
            )))
        }
        None => {
            return Err(Error::format(format!(
                "{}: unrecognized image format",
                path.display()
            )))
        }
    }
    let decoded = reader.decode().map_err(|e| image_error(path, e))?;
    let img = match decoded {
        image::DynamicImage::ImageRgb16(_)
        | image::DynamicImage::ImageRgba16(_)
        | image::DynamicImage::ImageLuma16(_)
        | image::DynamicImage::ImageLumaA16(_) => {
            let rgb = decoded.to_rgb16();
            RgbImage {
                width: rgb.width() as usize,
                height: rgb.height() as usize,
                data: rgb
                    .as_raw()
                    .iter()
                    .map(|&v| f64::from(v) / 65535.0)
                    .collect(),
            }
        }
        other => RgbImage::from(&other.to_rgb8()),
    };
    if img.width == 0 || img.height == 0 {
        return Err(Error::format(format!("{}: empty image", path.display())));
    }
    Ok(img)
}

/// Integer-binned grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    levels: usize,
    data: Vec<u16>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, levels: usize, data: Vec<u16>) -> Result<Self> {
        check_levels(levels)?;
        if data.len() != width * height {
            return Err(Error::param("gray data length does not match dimensions"));
        }
        if data.iter().any(|&b| usize::from(b) >= levels) {
            return Err(Error::param("gray bin out of range"));
        }
        Ok(GrayImage {
            width,
            height,
            levels,
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn levels(&self) -> usize {
        self.levels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[u16] {
        &self.data
    }
}

fn check_levels(levels: usize) -> Result<()> {
    if !(2..=65536).contains(&levels) {
        return Err(Error::param(format!(
            "gray levels must be in [2, 65536], got {levels}"
        )));
    }
    Ok(())
}

/// BT.601 luma. Evaluated as an integer-weighted sum so that gray inputs map
/// back to themselves exactly.
#[inline]
pub fn luma(p: [f64; 3]) -> f64 {
    (299.0 * p[0] + 587.0 * p[1] + 114.0 * p[2]) / 1000.0
}

pub fn to_gray_quantized(img: &RgbImage, levels: usize) -> Result<GrayImage> {
    check_levels(levels)?;
    let top = levels - 1;
    let data = img
        .pixels()
        .map(|p| {
            let bin = (luma(p) * levels as f64).floor().max(0.0) as usize;
            bin.min(top) as u16
        })
        .collect();
    Ok(GrayImage {
        width: img.width,
        height: img.height,
        levels,
        data,
    })
}

/// Appearance perturbations used for robustness experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Corruption {
    /// Random colour jitter. `brightness`, `contrast` and `saturation` give
    /// the half-width of a multiplicative factor range around 1; `hue` is the
    /// half-width of the hue rotation as a fraction of a full turn.
    Jitter {
        brightness: f64,
        contrast: f64,
        saturation: f64,
        hue: f64,
        seed: u64,
    },
    Brightness(f64),
    Blur {
        kernel: usize,
        sigma: f64,
    },
    Grayscale,
}

impl Corruption {
    /// Colour jitter with the magnitudes used in the robustness ablation.
    pub fn standard_jitter(seed: u64) -> Self {
        Corruption::Jitter {
            brightness: 0.2,
            contrast: 0.3,
            saturation: 0.3,
            hue: 0.1,
            seed,
        }
    }

    pub fn overexposure() -> Self {
        Corruption::Brightness(1.8)
    }

    pub fn underexposure() -> Self {
        Corruption::Brightness(0.4)
    }

    pub fn texture_destruction() -> Self {
        Corruption::Blur {
            kernel: 9,
            sigma: 5.0,
        }
    }
}

pub fn corrupt(img: &RgbImage, mode: &Corruption) -> Result<RgbImage> {
    match *mode {
        Corruption::Brightness(f) => {
            if !(f > 0.0) || !f.is_finite() {
                return Err(Error::param(format!(
                    "brightness factor must be positive, got {f}"
                )));
            }
            Ok(adjust_brightness(img, f))
        }
        Corruption::Grayscale => Ok(img.map_pixels(|p| {
            let l = luma(p);
            [l, l, l]
        })),
        Corruption::Blur { kernel, sigma } => {
            let k = filter::gaussian_kernel_1d(kernel, sigma)?;
            let data = filter::convolve_separable(&img.data, img.width, img.height, 3, &k);
            Ok(RgbImage {
                width: img.width,
                height: img.height,
                data: data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            })
        }
        Corruption::Jitter {
            brightness,
            contrast,
            saturation,
            hue,
            seed,
        } => {
            for (name, x) in [
                ("brightness", brightness),
                ("contrast", contrast),
                ("saturation", saturation),
            ] {
                if !(0.0..1.0).contains(&x) {
                    return Err(Error::param(format!(
                        "jitter {name} must be in [0, 1), got {x}"
                    )));
                }
            }
            if !(0.0..=0.5).contains(&hue) {
                return Err(Error::param(format!(
                    "jitter hue must be in [0, 0.5], got {hue}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fb = factor(&mut rng, brightness);
            let fc = factor(&mut rng, contrast);
            let fs = factor(&mut rng, saturation);
            // fraction of a full turn; the angle is 2*pi times this
            let turn = if hue > 0.0 {
                rng.gen_range(-hue..=hue)
            } else {
                0.0
            };

            let out = adjust_brightness(img, fb);
            let out = adjust_contrast(&out, fc);
            let out = adjust_saturation(&out, fs);
            Ok(rotate_hue(&out, turn))
        }
    }
}

fn factor(rng: &mut ChaCha8Rng, half_width: f64) -> f64 {
    if half_width > 0.0 {
        rng.gen_range(1.0 - half_width..=1.0 + half_width)
    } else {
        1.0
    }
}

fn adjust_brightness(img: &RgbImage, f: f64) -> RgbImage {
    img.map_pixels(|p| [p[0] * f, p[1] * f, p[2] * f])
}

fn adjust_contrast(img: &RgbImage, f: f64) -> RgbImage {
    let mean = img.pixels().map(luma).sum::<f64>() / img.pixel_count() as f64;
    img.map_pixels(|p| p.map(|c| mean + f * (c - mean)))
}

fn adjust_saturation(img: &RgbImage, f: f64) -> RgbImage {
    img.map_pixels(|p| {
        let l = luma(p);
        p.map(|c| l + f * (c - l))
    })
}

fn rotate_hue(img: &RgbImage, turn: f64) -> RgbImage {
    if turn == 0.0 {
        return img.clone();
    }
    img.map_pixels(|p| {
        let (h, s, v) = rgb_to_hsv(p);
        hsv_to_rgb((h + turn).rem_euclid(1.0), s, v)
    })
}

/// Hue in `[0, 1)`, saturation and value in `[0, 1]`.
fn rgb_to_hsv([r, g, b]: [f64; 3]) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta == 0.0 {
        return (0.0, s, max);
    }
    let h = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    (h / 6.0, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as i64 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}
