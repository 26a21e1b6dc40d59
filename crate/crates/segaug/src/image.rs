//! RGB raster images with lossless PNG and binary PPM (P6) file I/O.
//!
//! Images are immutable-by-convention values: every pipeline operation takes
//! an image and returns a new one, so they are safe to share across threads.
//! PPM exists so tests can author fixtures by hand; both formats round-trip
//! pixels exactly.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// An 8-bit RGB color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Color {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Color {
    pub const BLACK: Color = Color { r: 0, g: 0, b: 0 };
    pub const WHITE: Color = Color { r: 255, g: 255, b: 255 };

    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }
}

/// Row-major W×H grid of RGB pixels. `width` and `height` are at least 1 and
/// the pixel vector length is exactly `width * height`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<Color>,
}

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image stream: {0}")]
    Corrupt(String),
    #[error("invalid dimensions {width}x{height} for {pixels} pixels")]
    InvalidDimensions {
        width: u32,
        height: u32,
        pixels: usize,
    },
}

impl RasterImage {
    /// Builds an image from row-major pixels; dimensions must be non-zero and
    /// match the pixel count exactly.
    pub fn new(width: u32, height: u32, pixels: Vec<Color>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || pixels.len() != (width as usize) * (height as usize) {
            return Err(ImageError::InvalidDimensions {
                width,
                height,
                pixels: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// A uniform image of the given color.
    pub fn filled(width: u32, height: u32, color: Color) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be non-zero");
        Self {
            width,
            height,
            pixels: vec![color; (width as usize) * (height as usize)],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[Color] {
        &self.pixels
    }

    #[inline]
    fn index(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (y as usize) * (self.width as usize) + (x as usize)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Color {
        self.pixels[self.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, color: Color) {
        let i = self.index(x, y);
        self.pixels[i] = color;
    }

    /// Flat `r,g,b,r,g,b,...` byte view used by the codecs.
    fn to_rgb_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend_from_slice(&[p.r, p.g, p.b]);
        }
        out
    }
}

/// Decodes a PNG or binary PPM (P6) file. The format is sniffed from the
/// file's magic bytes, not its extension. PNG alpha is composited over
/// opaque white.
pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage, ImageError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.starts_with(&[0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a]) {
        decode_png(&bytes)
    } else if bytes.starts_with(b"P6") {
        decode_ppm(&bytes)
    } else {
        Err(ImageError::UnsupportedFormat(format!(
            "{}: not a PNG or binary PPM (P6) stream",
            path.display()
        )))
    }
}

/// Writes `image` losslessly; the format is chosen by extension (`.png` or
/// `.ppm`). Loading the written file reproduces every pixel exactly.
pub fn save_image(image: &RasterImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("png") => save_png(image, path),
        Some("ppm") => save_ppm(image, path),
        _ => Err(ImageError::UnsupportedFormat(format!(
            "{}: output extension must be .png or .ppm",
            path.display()
        ))),
    }
}

fn decode_png(bytes: &[u8]) -> Result<RasterImage, ImageError> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    // Expand palette/low-bit-depth images and strip 16-bit channels so the
    // frame arrives as 8-bit gray/graya/rgb/rgba.
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder
        .read_info()
        .map_err(|e| ImageError::Corrupt(format!("png: {e}")))?;
    let buffer_size = reader
        .output_buffer_size()
        .ok_or_else(|| ImageError::Corrupt("png: output size overflows".into()))?;
    let mut buf = vec![0u8; buffer_size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| ImageError::Corrupt(format!("png: {e}")))?;
    let data = &buf[..info.buffer_size()];
    let (width, height) = (info.width, info.height);
    let n = (width as usize) * (height as usize);
    let mut pixels = Vec::with_capacity(n);
    match info.color_type {
        png::ColorType::Rgb => {
            for c in data.chunks_exact(3) {
                pixels.push(Color::new(c[0], c[1], c[2]));
            }
        }
        png::ColorType::Rgba => {
            for c in data.chunks_exact(4) {
                pixels.push(Color::new(
                    over_white(c[0], c[3]),
                    over_white(c[1], c[3]),
                    over_white(c[2], c[3]),
                ));
            }
        }
        png::ColorType::Grayscale => {
            for &v in data {
                pixels.push(Color::new(v, v, v));
            }
        }
        png::ColorType::GrayscaleAlpha => {
            for c in data.chunks_exact(2) {
                let v = over_white(c[0], c[1]);
                pixels.push(Color::new(v, v, v));
            }
        }
        other => {
            return Err(ImageError::UnsupportedFormat(format!(
                "png color type {other:?}"
            )))
        }
    }
    if pixels.len() != n {
        return Err(ImageError::Corrupt(format!(
            "png: {} pixels decoded for {width}x{height}",
            pixels.len()
        )));
    }
    RasterImage::new(width, height, pixels)
}

/// Composites one channel of a straight-alpha color over opaque white,
/// rounding to nearest.
fn over_white(channel: u8, alpha: u8) -> u8 {
    let c = u32::from(channel);
    let a = u32::from(alpha);
    ((c * a + 255 * (255 - a) + 127) / 255) as u8
}

fn save_png(image: &RasterImage, path: &Path) -> Result<(), ImageError> {
    let io_err = |source| ImageError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), image.width, image.height);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| ImageError::Corrupt(format!("png encode: {e}")))?;
    writer
        .write_image_data(&image.to_rgb_bytes())
        .map_err(|e| ImageError::Corrupt(format!("png encode: {e}")))?;
    writer
        .finish()
        .map_err(|e| ImageError::Corrupt(format!("png encode: {e}")))?;
    Ok(())
}

fn save_ppm(image: &RasterImage, path: &Path) -> Result<(), ImageError> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.to_rgb_bytes());
    fs::write(path, out).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn decode_ppm(bytes: &[u8]) -> Result<RasterImage, ImageError> {
    let mut pos = 2; // past the "P6" magic
    let width = ppm_uint(bytes, &mut pos)?;
    let height = ppm_uint(bytes, &mut pos)?;
    let maxval = ppm_uint(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(ImageError::UnsupportedFormat(format!(
            "ppm maxval {maxval} (only 255 is supported)"
        )));
    }
    if width == 0 || height == 0 {
        return Err(ImageError::Corrupt(format!(
            "ppm: zero dimension {width}x{height}"
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(ImageError::Corrupt("ppm: missing raster separator".into())),
    }
    let n = (width as usize) * (height as usize);
    let raster = bytes
        .get(pos..pos + n * 3)
        .ok_or_else(|| ImageError::Corrupt("ppm: truncated raster data".into()))?;
    let pixels = raster
        .chunks_exact(3)
        .map(|c| Color::new(c[0], c[1], c[2]))
        .collect();
    RasterImage::new(width, height, pixels)
}

/// Reads one ASCII unsigned integer, skipping whitespace and `#` comments.
fn ppm_uint(bytes: &[u8], pos: &mut usize) -> Result<u32, ImageError> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(b) if b.is_ascii_digit() => break,
            Some(_) => return Err(ImageError::Corrupt("ppm: malformed header token".into())),
            None => return Err(ImageError::Corrupt("ppm: truncated header".into())),
        }
    }
    let mut value: u64 = 0;
    while let Some(&b) = bytes.get(*pos) {
        if !b.is_ascii_digit() {
            break;
        }
        value = value * 10 + u64::from(b - b'0');
        if value > u64::from(u32::MAX) {
            return Err(ImageError::Corrupt("ppm: header value overflow".into()));
        }
        *pos += 1;
    }
    Ok(value as u32)
}
