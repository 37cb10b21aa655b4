//! In-memory float image type, the two geometry pipelines (aspect-preserving
//! zero-pad and center-crop), per-channel normalization, color jitter, and
//! 8-bit PGM/PPM I/O.
//!
//! Resampling is bilinear with half-pixel-center alignment. Scaled dimensions
//! are rounded half-to-even so independent implementations agree at the
//! shape level.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("pnm parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ImageError>;

/// Dense row-major float image, HWC layout, 1 or 3 channels. Raw images
/// hold values in [0, 1]; normalized tensors may leave that range.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ImageF {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(ImageError::InvalidArgument("empty image".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(ImageError::InvalidArgument(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(ImageError::InvalidArgument(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(ImageError::InvalidArgument("non-finite pixel value".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(height, width, channels, vec![0.0; height * width * channels])
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }
}

/// Geometry pipeline selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResizeMode {
    ZeroPad,
    CenterCrop,
}

/// Maximum jitter deltas; factors are drawn from [1-d, 1+d] and the hue
/// shift from [-hue, +hue] turns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterConfig {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

impl JitterConfig {
    pub const OFF: JitterConfig = JitterConfig {
        brightness: 0.0,
        contrast: 0.0,
        saturation: 0.0,
        hue: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, d) in [
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("saturation", self.saturation),
        ] {
            if !(0.0..1.0).contains(&d) {
                return Err(ImageError::InvalidArgument(format!(
                    "{name} delta {d} outside [0, 1): sampled factors must stay positive"
                )));
            }
        }
        if !(0.0..=0.5).contains(&self.hue) {
            return Err(ImageError::InvalidArgument(format!(
                "hue delta {} outside [0, 0.5] turns",
                self.hue
            )));
        }
        Ok(())
    }

    pub fn is_off(&self) -> bool {
        self.brightness == 0.0 && self.contrast == 0.0 && self.saturation == 0.0 && self.hue == 0.0
    }
}

/// Full preprocessing recipe: jitter, geometry, then normalization (so pad
/// pixels end up at -mean/std).
#[derive(Debug, Clone)]
pub struct PreprocessConfig {
    pub target_size: usize,
    pub mode: ResizeMode,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub jitter: JitterConfig,
    pub seed: u64,
}

impl PreprocessConfig {
    pub fn plain(target_size: usize, channels: usize) -> Self {
        Self {
            target_size,
            mode: ResizeMode::ZeroPad,
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
            jitter: JitterConfig::OFF,
            seed: 0,
        }
    }
}

/// Per-image jitter seed for batch processing: base seed xor image index.
pub fn derive_seed(seed: u64, image_index: u64) -> u64 {
    seed ^ image_index
}

fn round_half_even(x: f64) -> usize {
    x.round_ties_even() as usize
}

/// Bilinear resample to an explicit output size, half-pixel-center aligned,
/// border-clamped.
pub fn resize_bilinear(img: &ImageF, out_h: usize, out_w: usize) -> Result<ImageF> {
    if out_h == 0 || out_w == 0 {
        return Err(ImageError::InvalidArgument("empty resize target".into()));
    }
    let mut out = ImageF::zeros(out_h, out_w, img.channels)?;
    let sy = img.height as f64 / out_h as f64;
    let sx = img.width as f64 / out_w as f64;
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (img.height - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let wy = fy - y0 as f64;
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (img.width - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let wx = fx - x0 as f64;
            for c in 0..img.channels {
                let v = (1.0 - wy) * ((1.0 - wx) * img.get(y0, x0, c) + wx * img.get(y0, x1, c))
                    + wy * ((1.0 - wx) * img.get(y1, x0, c) + wx * img.get(y1, x1, c));
                out.set(oy, ox, c, v);
            }
        }
    }
    Ok(out)
}

/// Content geometry of the zero-pad pipeline: scaled size and top-left pad
/// offset, derivable from shapes alone.
pub fn padded_content_box(h: usize, w: usize, target: usize) -> (usize, usize, usize, usize) {
    let (ch, cw) = if h >= w {
        (target, round_half_even(w as f64 * target as f64 / h as f64).max(1))
    } else {
        (round_half_even(h as f64 * target as f64 / w as f64).max(1), target)
    };
    let y0 = (target - ch) / 2;
    let x0 = (target - cw) / 2;
    (y0, x0, ch, cw)
}

/// Aspect-preserving rescale so the long side hits `target`, then symmetric
/// zero padding of the short side (extra pixel to bottom/right). No source
/// content is discarded.
pub fn zero_pad_resize(img: &ImageF, target: usize) -> Result<ImageF> {
    if target == 0 {
        return Err(ImageError::InvalidArgument("target must be >= 1".into()));
    }
    let (y0, x0, ch, cw) = padded_content_box(img.height, img.width, target);
    let content = resize_bilinear(img, ch, cw)?;
    let mut out = ImageF::zeros(target, target, img.channels)?;
    for y in 0..ch {
        for x in 0..cw {
            for c in 0..img.channels {
                out.set(y0 + y, x0 + x, c, content.get(y, x, c));
            }
        }
    }
    Ok(out)
}

/// Crop geometry of the center-crop pipeline: scaled size and the top-left
/// corner of the crop window (floor bias toward top-left).
pub fn crop_geometry(h: usize, w: usize, target: usize) -> (usize, usize, usize, usize) {
    let (sh, sw) = if h <= w {
        (target, round_half_even(w as f64 * target as f64 / h as f64).max(target))
    } else {
        (round_half_even(h as f64 * target as f64 / w as f64).max(target), target)
    };
    let y0 = (sh - target) / 2;
    let x0 = (sw - target) / 2;
    (sh, sw, y0, x0)
}

/// Rescale so the short side hits `target`, then crop the centered
/// target-square window.
pub fn center_crop_resize(img: &ImageF, target: usize) -> Result<ImageF> {
    if target == 0 {
        return Err(ImageError::InvalidArgument("target must be >= 1".into()));
    }
    let (sh, sw, y0, x0) = crop_geometry(img.height, img.width, target);
    let scaled = resize_bilinear(img, sh, sw)?;
    let mut out = ImageF::zeros(target, target, img.channels)?;
    for y in 0..target {
        for x in 0..target {
            for c in 0..img.channels {
                out.set(y, x, c, scaled.get(y0 + y, x0 + x, c));
            }
        }
    }
    Ok(out)
}

/// Per-channel standardization (v - mean) / std.
pub fn normalize(img: &ImageF, mean: &[f64], std: &[f64]) -> Result<ImageF> {
    if mean.len() != img.channels || std.len() != img.channels {
        return Err(ImageError::InvalidArgument(format!(
            "mean/std length {}/{} does not match {} channels",
            mean.len(),
            std.len(),
            img.channels
        )));
    }
    if std.iter().any(|s| *s <= 0.0) {
        return Err(ImageError::InvalidArgument(
            "std components must be positive".into(),
        ));
    }
    let mut out = img.clone();
    for px in out.data.chunks_mut(img.channels) {
        for (c, v) in px.iter_mut().enumerate() {
            *v = (*v - mean[c]) / std[c];
        }
    }
    Ok(out)
}

/// Inverse of `normalize`.
pub fn denormalize(img: &ImageF, mean: &[f64], std: &[f64]) -> Result<ImageF> {
    if mean.len() != img.channels || std.len() != img.channels {
        return Err(ImageError::InvalidArgument(
            "mean/std length mismatch".into(),
        ));
    }
    let mut out = img.clone();
    for px in out.data.chunks_mut(img.channels) {
        for (c, v) in px.iter_mut().enumerate() {
            *v = *v * std[c] + mean[c];
        }
    }
    Ok(out)
}

fn luminance(px: &[f64]) -> f64 {
    if px.len() == 1 {
        px[0]
    } else {
        0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
    }
}

/// Multiplies all channels by `factor`. Factor 1 is the exact identity.
pub fn apply_brightness(img: &ImageF, factor: f64) -> ImageF {
    if factor == 1.0 {
        return img.clone();
    }
    let mut out = img.clone();
    for v in out.data.iter_mut() {
        *v *= factor;
    }
    out
}

/// Blends toward the image's mean luminance: out = m + factor (v - m).
pub fn apply_contrast(img: &ImageF, factor: f64) -> ImageF {
    if factor == 1.0 {
        return img.clone();
    }
    let n = (img.height * img.width) as f64;
    let m: f64 = img.data.chunks(img.channels).map(luminance).sum::<f64>() / n;
    let mut out = img.clone();
    for v in out.data.iter_mut() {
        *v = m + factor * (*v - m);
    }
    out
}

/// Blends each pixel toward its own luminance. No-op on single-channel
/// images.
pub fn apply_saturation(img: &ImageF, factor: f64) -> ImageF {
    if factor == 1.0 || img.channels == 1 {
        return img.clone();
    }
    let mut out = img.clone();
    for px in out.data.chunks_mut(img.channels) {
        let g = luminance(px);
        for v in px.iter_mut() {
            *v = g + factor * (*v - g);
        }
    }
    out
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let v = max;
    let s = if max > 0.0 { d / max } else { 0.0 };
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        (((g - b) / d).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    (h, s, v)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor() as i64 % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Rotates hue by `shift` turns with wraparound. No-op on single-channel
/// images or when the shift is 0.
pub fn apply_hue(img: &ImageF, shift: f64) -> ImageF {
    if shift == 0.0 || img.channels == 1 {
        return img.clone();
    }
    let mut out = img.clone();
    for px in out.data.chunks_mut(3) {
        let (h, s, v) = rgb_to_hsv(px[0], px[1], px[2]);
        let (r, g, b) = hsv_to_rgb(h + shift, s, v);
        px[0] = r;
        px[1] = g;
        px[2] = b;
    }
    out
}

/// Seeded photometric augmentation in the fixed order brightness, contrast,
/// saturation, hue; the final result is clamped to [0, 1]. Deterministic
/// for a given (image, config, seed).
pub fn color_jitter(img: &ImageF, cfg: &JitterConfig, seed: u64) -> Result<ImageF> {
    cfg.validate()?;
    if cfg.is_off() {
        return Ok(img.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // always draw all four so the stream layout is independent of deltas
    let fb = 1.0 - cfg.brightness + 2.0 * cfg.brightness * rng.gen::<f64>();
    let fc = 1.0 - cfg.contrast + 2.0 * cfg.contrast * rng.gen::<f64>();
    let fs = 1.0 - cfg.saturation + 2.0 * cfg.saturation * rng.gen::<f64>();
    let fh = -cfg.hue + 2.0 * cfg.hue * rng.gen::<f64>();
    let mut out = apply_brightness(img, if cfg.brightness == 0.0 { 1.0 } else { fb });
    out = apply_contrast(&out, if cfg.contrast == 0.0 { 1.0 } else { fc });
    out = apply_saturation(&out, if cfg.saturation == 0.0 { 1.0 } else { fs });
    out = apply_hue(&out, if cfg.hue == 0.0 { 0.0 } else { fh });
    for v in out.data.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Full pipeline: jitter (training only), geometry per `cfg.mode`, then
/// normalization.
pub fn preprocess(img: &ImageF, cfg: &PreprocessConfig, train: bool) -> Result<ImageF> {
    let jittered = if train && !cfg.jitter.is_off() {
        color_jitter(img, &cfg.jitter, cfg.seed)?
    } else {
        img.clone()
    };
    let resized = match cfg.mode {
        ResizeMode::ZeroPad => zero_pad_resize(&jittered, cfg.target_size)?,
        ResizeMode::CenterCrop => center_crop_resize(&jittered, cfg.target_size)?,
    };
    normalize(&resized, &cfg.mean, &cfg.std)
}

// --- 8-bit PGM (P5) / PPM (P6) ---

/// Writes grayscale images as binary PGM and 3-channel images as binary PPM,
/// quantizing to 8 bits.
pub fn write_pnm(img: &ImageF, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    write!(f, "{magic}\n{} {}\n255\n", img.width, img.height)?;
    let bytes: Vec<u8> = img
        .data
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    f.write_all(&bytes)?;
    Ok(())
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    // skip whitespace and #-comments
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(ImageError::Parse("unexpected end of header".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

/// Reads binary PGM (P5) or PPM (P6) into floats in [0, 1].
pub fn read_pnm(path: &Path) -> Result<ImageF> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let magic = next_token(&bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(ImageError::Parse(format!("unsupported magic `{other}`"))),
    };
    let width: usize = next_token(&bytes, &mut pos)?
        .parse()
        .map_err(|e| ImageError::Parse(format!("bad width: {e}")))?;
    let height: usize = next_token(&bytes, &mut pos)?
        .parse()
        .map_err(|e| ImageError::Parse(format!("bad height: {e}")))?;
    let maxval: usize = next_token(&bytes, &mut pos)?
        .parse()
        .map_err(|e| ImageError::Parse(format!("bad maxval: {e}")))?;
    if maxval != 255 {
        return Err(ImageError::Parse(format!(
            "only maxval 255 supported, got {maxval}"
        )));
    }
    pos += 1; // single whitespace after maxval
    let n = width * height * channels;
    if bytes.len() < pos + n {
        return Err(ImageError::Parse(format!(
            "payload truncated: need {n} bytes, have {}",
            bytes.len() - pos
        )));
    }
    let data: Vec<f64> = bytes[pos..pos + n].iter().map(|b| *b as f64 / 255.0).collect();
    ImageF::new(height, width, channels, data)
}
