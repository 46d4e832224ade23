//! Grayscale rasters, 1-D sampled signals, and PGM/PNG file I/O.
//!
//! Intensities are stored as real values; quantization to 8 bits only
//! happens when an image is written. Pixels are row-major with the origin at
//! the top-left corner: `x` is the column index and `y` the row index.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A 2-D grayscale pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    pixels: Vec<T>,
}

impl<T: Scalar> Raster<T> {
    pub fn new(width: usize, height: usize, pixels: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::InvalidDimensions {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    /// Builds a raster by evaluating `f(x, y)` at every pixel.
    ///
    /// # Panics
    /// If either dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
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
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    #[inline]
    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<T> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.pixels[y * self.width + x]
    }

    /// Pixel lookup with coordinates clamped to the image border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.pixels[cy * self.width + cx]
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn mean(&self) -> T {
        self.pixels.iter().copied().sum::<T>() / T::from_usize_lossy(self.pixels.len())
    }

    /// Population variance of the pixel intensities.
    pub fn variance(&self) -> T {
        let m = self.mean();
        self.pixels.iter().map(|&v| (v - m) * (v - m)).sum::<T>()
            / T::from_usize_lossy(self.pixels.len())
    }

    pub fn min_max(&self) -> (T, T) {
        self.pixels
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            pixels: self
                .pixels
                .iter()
                .map(|&v| U::from(v).unwrap_or_else(U::nan))
                .collect(),
        }
    }

    /// Image rotated 90 degrees counterclockwise as displayed (top-left origin).
    pub fn rotate90_ccw(&self) -> Self {
        let (w, h) = (self.width, self.height);
        Self::from_fn(h, w, |x, y| self.get(w - 1 - y, x))
    }

    /// Pixels quantized the way [`save_image`] writes them.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| quantize(v)).collect()
    }
}

/// Clamp to [0, 255] and round half away from zero.
#[inline]
pub fn quantize<T: Scalar>(v: T) -> u8 {
    let v = v.as_f64();
    if v.is_nan() {
        return 0;
    }
    v.clamp(0.0, 255.0).round() as u8
}

/// A uniformly sampled 1-D signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal1D<T> {
    samples: Vec<T>,
    step: T,
}

impl<T: Scalar> Signal1D<T> {
    pub fn new(samples: Vec<T>, step: T) -> Result<Self> {
        if !(step > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "sampling step must be positive, got {step}"
            )));
        }
        Ok(Self { samples, step })
    }

    /// Unit-step signal.
    pub fn unit(samples: Vec<T>) -> Self {
        Self {
            samples,
            step: T::one(),
        }
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn step(&self) -> T {
        self.step
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }
}

/// Three equally sized color planes.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbRaster<T> {
    pub red: Raster<T>,
    pub green: Raster<T>,
    pub blue: Raster<T>,
}

/// Rec. 601 luma.
pub fn to_grayscale<T: Scalar>(rgb: &RgbRaster<T>) -> Result<Raster<T>> {
    let (r, g, b) = (&rgb.red, &rgb.green, &rgb.blue);
    if (r.width, r.height) != (g.width, g.height) || (r.width, r.height) != (b.width, b.height) {
        return Err(Error::ChannelMismatch);
    }
    let (wr, wg, wb) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
    let pixels = r
        .pixels
        .iter()
        .zip(&g.pixels)
        .zip(&b.pixels)
        .map(|((&r, &g), &b)| wr * r + wg * g + wb * b)
        .collect();
    Raster::new(r.width, r.height, pixels)
}

/// Encodes a raster as binary PGM (P5, maxval 255).
pub fn encode_pgm<T: Scalar>(raster: &Raster<T>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", raster.width, raster.height).into_bytes();
    out.extend(raster.to_bytes());
    out
}

/// Decodes a binary PGM (P5) with maxval at most 255.
///
/// Header tokens may be separated by any whitespace and interleaved with
/// `#` comments. Samples are taken verbatim.
pub fn decode_pgm<T: Scalar>(data: &[u8]) -> Result<Raster<T>> {
    if data.len() < 2 || &data[..2] != b"P5" {
        return Err(Error::MalformedHeader("missing P5 magic".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (i, name) in ["width", "height", "maxval"].iter().enumerate() {
        fields[i] = header_number(data, &mut pos)
            .ok_or_else(|| Error::MalformedHeader(format!("bad or missing {name}")))?;
    }
    let [width, height, maxval] = fields;
    // exactly one whitespace byte separates the header from the raster
    if pos >= data.len() || !data[pos].is_ascii_whitespace() {
        return Err(Error::MalformedHeader("missing separator after maxval".into()));
    }
    pos += 1;
    if maxval == 0 {
        return Err(Error::MalformedHeader("maxval is zero".into()));
    }
    if maxval > 255 {
        return Err(Error::UnsupportedBitDepth(format!("maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader("zero dimension".into()));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::MalformedHeader("dimensions overflow".into()))?;
    let body = &data[pos..];
    if body.len() < n {
        return Err(Error::MalformedHeader(format!(
            "expected {n} pixel bytes, found {}",
            body.len()
        )));
    }
    let pixels = body[..n].iter().map(|&b| T::from_u8(b).unwrap()).collect();
    Raster::new(width, height, pixels)
}

fn header_number(data: &[u8], pos: &mut usize) -> Option<usize> {
    loop {
        match data.get(*pos)? {
            b'#' => {
                while *data.get(*pos)? != b'\n' {
                    *pos += 1;
                }
            }
            c if c.is_ascii_whitespace() => *pos += 1,
            _ => break,
        }
    }
    let start = *pos;
    while data.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    std::str::from_utf8(&data[start..*pos]).ok()?.parse().ok()
}

fn decode_png<T: Scalar>(data: &[u8]) -> Result<Raster<T>> {
    let decoder = png::Decoder::new(std::io::Cursor::new(data));
    let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
    let info = reader.info();
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedBitDepth(format!("{:?}", info.bit_depth)));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let color = info.color_type;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Png(e.to_string()))?;
    let bytes = &buf[..frame.buffer_size()];
    let px = |b: u8| T::from_u8(b).unwrap();
    match color {
        png::ColorType::Grayscale => Raster::new(width, height, bytes.iter().map(|&b| px(b)).collect()),
        png::ColorType::GrayscaleAlpha => {
            Raster::new(width, height, bytes.chunks_exact(2).map(|c| px(c[0])).collect())
        }
        png::ColorType::Rgb | png::ColorType::Rgba => {
            let stride = if color == png::ColorType::Rgb { 3 } else { 4 };
            let plane = |k: usize| {
                Raster::new(
                    width,
                    height,
                    bytes.chunks_exact(stride).map(|c| px(c[k])).collect(),
                )
            };
            to_grayscale(&RgbRaster {
                red: plane(0)?,
                green: plane(1)?,
                blue: plane(2)?,
            })
        }
        png::ColorType::Indexed => Err(Error::UnsupportedFormat),
    }
}

/// Loads an 8-bit grayscale PGM (P5) or PNG. RGB PNGs are converted to luma.
pub fn load_image<T: Scalar>(path: impl AsRef<Path>) -> Result<Raster<T>> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|source| Error::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    if data.starts_with(b"P5") {
        decode_pgm(&data)
    } else if data.starts_with(b"\x89PNG\r\n\x1a\n") {
        decode_png(&data)
    } else if data.starts_with(b"P") {
        Err(Error::MalformedHeader("only binary P5 PGM is supported".into()))
    } else {
        Err(Error::UnsupportedFormat)
    }
}

/// Writes a binary PGM, clamping to [0, 255] and rounding.
pub fn save_image<T: Scalar>(raster: &Raster<T>, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_pgm(raster))
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let err = |source| Error::Unwritable {
        path: path.to_path_buf(),
        source,
    };
    let file_name = path
        .file_name()
        .ok_or_else(|| err(std::io::Error::other("path has no file name")))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp).map_err(err)?;
    f.write_all(bytes).map_err(err)?;
    f.sync_all().map_err(err)?;
    drop(f);
    fs::rename(&tmp, path).map_err(err)
}
