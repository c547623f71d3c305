//! Dense 2-vector fields, grayscale frames, and their on-disk containers.
//!
//! Optical flow and linear blur kernel maps share one container: the
//! Middlebury `.flo` layout. A file is the magic tag `PIEH`, width and height
//! as little-endian `i32`, then `width * height` interleaved `(u, v)` pairs of
//! little-endian `f32`, row-major. Frames are binary PGM (`P5`, maxval 255).
//!
//! Fields are held in memory as `f64` so that synthetic ground truth keeps
//! full precision; writing narrows each component to `f32`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Magic tag of the `.flo` container. Read as a little-endian `f32` it is 202021.25.
pub const FLO_MAGIC: [u8; 4] = *b"PIEH";
const FLO_HEADER_LEN: usize = 12;

/// Default bound on either dimension accepted by the readers.
pub const DEFAULT_MAX_DIM: usize = 16384;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("format error: {0}")]
    Format(String),
    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("non-finite component at pixel ({x}, {y})")]
    NonFinite { x: usize, y: usize },
    #[error("invalid field: {0}")]
    Invalid(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A displacement in pixels. Serialized as `[x, y]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotates counter-clockwise by `angle` radians.
    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Vec2::new(x, y)
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl From<(f64, f64)> for Vec2 {
    fn from((x, y): (f64, f64)) -> Self {
        Vec2::new(x, y)
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Dense per-pixel 2-vector field (optical flow or linear blur kernels), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Vec2Field {
    width: usize,
    height: usize,
    data: Vec<Vec2>,
}

impl Vec2Field {
    pub fn new(width: usize, height: usize, data: Vec<Vec2>) -> Result<Self, FieldError> {
        if width == 0 || height == 0 {
            return Err(FieldError::Invalid(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(FieldError::Invalid(format!(
                "{width}x{height} field needs {} vectors, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite {
                x: i % width,
                y: i / width,
            });
        }
        Ok(Vec2Field {
            width,
            height,
            data,
        })
    }

    /// A field holding the same vector at every pixel.
    pub fn uniform(width: usize, height: usize, value: Vec2) -> Result<Self, FieldError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[Vec2] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> Vec2 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[Vec2] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Applies `f` to every vector. Non-finite results are rejected.
    pub fn map(&self, f: impl Fn(Vec2) -> Vec2) -> Result<Vec2Field, FieldError> {
        Vec2Field::new(
            self.width,
            self.height,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Element-wise sum of two fields of equal size.
    pub fn add(&self, other: &Vec2Field) -> Result<Vec2Field, FieldError> {
        if self.dims() != other.dims() {
            return Err(FieldError::Invalid(format!(
                "cannot add {}x{} and {}x{} fields",
                self.width, self.height, other.width, other.height
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Vec2Field::new(self.width, self.height, data)
    }
}

/// Grayscale image with intensities in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, FieldError> {
        if width == 0 || height == 0 {
            return Err(FieldError::Invalid(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(FieldError::Invalid(format!(
                "{width}x{height} frame needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(FieldError::Invalid(format!(
                "pixel ({}, {}) = {} outside [0, 1]",
                i % width,
                i / width,
                pixels[i]
            )));
        }
        Ok(Frame {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Bilinear sample at a continuous position; coordinates are clamped to the image.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Limits applied to header dimensions before anything is allocated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReadLimits {
    pub max_width: usize,
    pub max_height: usize,
}

impl Default for ReadLimits {
    fn default() -> Self {
        ReadLimits {
            max_width: DEFAULT_MAX_DIM,
            max_height: DEFAULT_MAX_DIM,
        }
    }
}

impl ReadLimits {
    fn check(&self, width: usize, height: usize) -> Result<(), FieldError> {
        if width > self.max_width || height > self.max_height {
            return Err(FieldError::Format(format!(
                "dimensions {width}x{height} exceed limit {}x{}",
                self.max_width, self.max_height
            )));
        }
        Ok(())
    }
}

pub fn read_vector_field(bytes: &[u8]) -> Result<Vec2Field, FieldError> {
    read_vector_field_with_limits(bytes, ReadLimits::default())
}

pub fn read_vector_field_with_limits(
    bytes: &[u8],
    limits: ReadLimits,
) -> Result<Vec2Field, FieldError> {
    if bytes.len() < FLO_HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != FLO_MAGIC {
            return Err(bad_magic(&bytes[..4]));
        }
        return Err(FieldError::Truncated {
            expected: FLO_HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if bytes[..4] != FLO_MAGIC {
        return Err(bad_magic(&bytes[..4]));
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width <= 0 || height <= 0 {
        return Err(FieldError::Format(format!(
            "non-positive dimensions {width}x{height}"
        )));
    }
    let (width, height) = (width as usize, height as usize);
    limits.check(width, height)?;

    let expected = FLO_HEADER_LEN + width * height * 8;
    if bytes.len() < expected {
        return Err(FieldError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FieldError::Format(format!(
            "{} trailing bytes after {expected}-byte payload",
            bytes.len() - expected
        )));
    }

    let mut data = Vec::with_capacity(width * height);
    for (i, chunk) in bytes[FLO_HEADER_LEN..].chunks_exact(8).enumerate() {
        let u = f32::from_le_bytes(chunk[..4].try_into().unwrap());
        let v = f32::from_le_bytes(chunk[4..].try_into().unwrap());
        if !u.is_finite() || !v.is_finite() {
            return Err(FieldError::NonFinite {
                x: i % width,
                y: i / width,
            });
        }
        data.push(Vec2::new(u as f64, v as f64));
    }
    Vec2Field::new(width, height, data)
}

fn bad_magic(tag: &[u8]) -> FieldError {
    FieldError::Format(format!("bad magic {tag:?}, expected \"PIEH\""))
}

/// Serializes a field in the `.flo` layout. Components are narrowed to `f32`;
/// a component whose magnitude overflows `f32` is rejected.
pub fn write_vector_field(field: &Vec2Field) -> Result<Vec<u8>, FieldError> {
    let (width, height) = field.dims();
    if width > i32::MAX as usize || height > i32::MAX as usize {
        return Err(FieldError::Invalid(format!(
            "dimensions {width}x{height} do not fit the header"
        )));
    }
    let mut out = Vec::with_capacity(FLO_HEADER_LEN + width * height * 8);
    out.extend_from_slice(&FLO_MAGIC);
    out.extend_from_slice(&(width as i32).to_le_bytes());
    out.extend_from_slice(&(height as i32).to_le_bytes());
    for (i, v) in field.data().iter().enumerate() {
        let (u, w) = (v.x as f32, v.y as f32);
        if !u.is_finite() || !w.is_finite() {
            return Err(FieldError::NonFinite {
                x: i % width,
                y: i / width,
            });
        }
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&w.to_le_bytes());
    }
    Ok(out)
}

pub fn load_vector_field(path: &Path) -> Result<Vec2Field, FieldError> {
    let bytes = std::fs::read(path).map_err(|source| io_err(path, source))?;
    read_vector_field(&bytes)
}

pub fn save_vector_field(path: &Path, field: &Vec2Field) -> Result<(), FieldError> {
    let bytes = write_vector_field(field)?;
    std::fs::write(path, bytes).map_err(|source| io_err(path, source))
}

fn io_err(path: &Path, source: std::io::Error) -> FieldError {
    FieldError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_frame(bytes: &[u8]) -> Result<Frame, FieldError> {
    read_frame_with_limits(bytes, ReadLimits::default())
}

pub fn read_frame_with_limits(bytes: &[u8], limits: ReadLimits) -> Result<Frame, FieldError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(FieldError::Format(
            "not a binary PGM (expected magic \"P5\")".into(),
        ));
    }
    let mut pos = 2;
    let mut header = [0usize; 3];
    for slot in header.iter_mut() {
        *slot = pgm_header_number(bytes, &mut pos)?;
    }
    let [width, height, maxval] = header;
    if maxval != 255 {
        return Err(FieldError::Format(format!(
            "unsupported maxval {maxval}, expected 255"
        )));
    }
    if width == 0 || height == 0 {
        return Err(FieldError::Format(format!(
            "non-positive dimensions {width}x{height}"
        )));
    }
    limits.check(width, height)?;
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(FieldError::Truncated {
                expected: pos + 1 + width * height,
                actual: bytes.len(),
            })
        }
    }
    let expected = pos + width * height;
    if bytes.len() < expected {
        return Err(FieldError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    let pixels = bytes[pos..expected]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    Frame::new(width, height, pixels)
}

fn pgm_header_number(bytes: &[u8], pos: &mut usize) -> Result<usize, FieldError> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' || b == b'\r' {
                        break;
                    }
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => {
                return Err(FieldError::Truncated {
                    expected: *pos + 1,
                    actual: bytes.len(),
                })
            }
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(FieldError::Format(format!(
            "expected a header number at byte {start}"
        )));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .unwrap()
        .parse()
        .map_err(|_| FieldError::Format(format!("header number at byte {start} out of range")))
}

/// Quantizes an intensity to 8 bits, rounding half up.
pub fn quantize_intensity(p: f64) -> u8 {
    (p * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn write_frame(frame: &Frame) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", frame.width(), frame.height());
    let mut out = Vec::with_capacity(header.len() + frame.pixels().len());
    out.extend_from_slice(header.as_bytes());
    out.extend(frame.pixels().iter().map(|&p| quantize_intensity(p)));
    out
}

pub fn load_frame(path: &Path) -> Result<Frame, FieldError> {
    let bytes = std::fs::read(path).map_err(|source| io_err(path, source))?;
    read_frame(&bytes)
}

pub fn save_frame(path: &Path, frame: &Frame) -> Result<(), FieldError> {
    std::fs::write(path, write_frame(frame)).map_err(|source| io_err(path, source))
}
