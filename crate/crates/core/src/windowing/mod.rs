//! Window-level conversion of 16-bit radiographs to 8-bit grayscale.
//!
//! The transform maps stored pixel values inside `[wc - ww/2, wc + ww/2]`
//! linearly onto `[0, 255]` and saturates outside. Values land on integers
//! by rounding half-up; inverted-monochrome images (lower stored value means
//! brighter display) are flipped after mapping so output always displays
//! dark-is-low.
//!
//! Input arrives either as a restricted DICOM file (uncompressed
//! explicit-VR little-endian, single-frame, 16-bit monochrome) or as a raw
//! little-endian 16-bit pixel dump with a text sidecar, which keeps fixtures
//! trivial to craft.

mod dicom;

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WindowingError {
    #[error("invalid window: width must be positive, got {ww}")]
    InvalidWindow { ww: f64 },
    #[error("no window parameters present")]
    MissingWindow,
    #[error("pixel buffer length {len} does not match {width}x{height}")]
    BadDimensions { width: u32, height: u32, len: usize },
    #[error("unsupported DICOM: element {element}: {reason}")]
    UnsupportedDicom { element: String, reason: String },
    #[error("malformed DICOM at byte {offset}: {msg}")]
    MalformedDicom { offset: usize, msg: String },
    #[error("sidecar metadata: {0}")]
    Sidecar(String),
    #[error("image encode error: {0}")]
    Encode(#[from] image::ImageError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A validated window: center and width in stored-pixel units, width > 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowParams {
    wc: f64,
    ww: f64,
}

impl WindowParams {
    pub fn new(wc: f64, ww: f64) -> Result<Self, WindowingError> {
        if !wc.is_finite() || !ww.is_finite() || ww <= 0.0 {
            return Err(WindowingError::InvalidWindow { ww });
        }
        Ok(Self { wc, ww })
    }

    pub fn wc(&self) -> f64 {
        self.wc
    }

    pub fn ww(&self) -> f64 {
        self.ww
    }
}

/// A decoded 16-bit image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    width: u32,
    height: u32,
    pixels: Vec<u16>,
    monochrome_inverted: bool,
}

impl RawImage {
    pub fn new(
        width: u32,
        height: u32,
        pixels: Vec<u16>,
        monochrome_inverted: bool,
    ) -> Result<Self, WindowingError> {
        if width == 0 || height == 0 || pixels.len() != (width as usize) * (height as usize) {
            return Err(WindowingError::BadDimensions {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
            monochrome_inverted,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn monochrome_inverted(&self) -> bool {
        self.monochrome_inverted
    }
}

/// An 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, WindowingError> {
        if width == 0 || height == 0 || pixels.len() != (width as usize) * (height as usize) {
            return Err(WindowingError::BadDimensions {
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

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
}

/// Map one stored pixel value through the window.
///
/// Below the window -> 0, above -> 255, inside -> linear, rounded half-up.
/// The window's positivity invariant makes the result total.
pub fn map_pixel(pv: u16, wp: &WindowParams) -> u8 {
    let pv = f64::from(pv);
    let lo = wp.wc - wp.ww / 2.0;
    let hi = wp.wc + wp.ww / 2.0;
    if pv < lo {
        0
    } else if pv > hi {
        255
    } else {
        let scaled = 255.0 * (pv - lo) / wp.ww;
        (scaled + 0.5).floor().clamp(0.0, 255.0) as u8
    }
}

/// Window an entire image; inverted-monochrome sources are flipped after
/// mapping.
pub fn apply_window(img: &RawImage, wp: &WindowParams) -> GrayImage {
    let pixels: Vec<u8> = img
        .pixels
        .iter()
        .map(|pv| {
            let v = map_pixel(*pv, wp);
            if img.monochrome_inverted {
                255 - v
            } else {
                v
            }
        })
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        pixels,
    }
}

/// The first window wins when a file carries several.
pub fn select_window(params: &[WindowParams]) -> Result<WindowParams, WindowingError> {
    params.first().copied().ok_or(WindowingError::MissingWindow)
}

/// A decoded study image with its window list and view metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct DicomImage {
    pub image: RawImage,
    /// All window parameter pairs, in file order.
    pub windows: Vec<WindowParams>,
    /// View position as stored (e.g. "PA", "LL"), if present.
    pub view_position: Option<String>,
}

/// Read a restricted DICOM file: uncompressed explicit-VR little-endian,
/// single-frame, 16-bit monochrome.
pub fn read_dicom_subset(path: impl AsRef<Path>) -> Result<DicomImage, WindowingError> {
    let bytes = std::fs::read(path)?;
    dicom::parse(&bytes)
}

/// Parse a restricted DICOM file already in memory.
pub fn parse_dicom_subset(bytes: &[u8]) -> Result<DicomImage, WindowingError> {
    dicom::parse(bytes)
}

/// Read the fixture fallback: raw little-endian 16-bit pixels plus a UTF-8
/// sidecar of `key=value` lines (width, height, wc, ww; optional inverted,
/// view).
pub fn read_raw_with_sidecar(
    pixels_path: impl AsRef<Path>,
    sidecar_path: impl AsRef<Path>,
) -> Result<DicomImage, WindowingError> {
    let sidecar = std::fs::read_to_string(sidecar_path)?;
    let mut width: Option<u32> = None;
    let mut height: Option<u32> = None;
    let mut wc: Option<f64> = None;
    let mut ww: Option<f64> = None;
    let mut inverted = false;
    let mut view: Option<String> = None;
    for (lineno, raw_line) in sidecar.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            WindowingError::Sidecar(format!("line {}: expected key=value", lineno + 1))
        })?;
        let bad = |what: &str| {
            WindowingError::Sidecar(format!("line {}: bad {what}: {value:?}", lineno + 1))
        };
        match key.trim() {
            "width" => width = Some(value.trim().parse().map_err(|_| bad("width"))?),
            "height" => height = Some(value.trim().parse().map_err(|_| bad("height"))?),
            "wc" => wc = Some(value.trim().parse().map_err(|_| bad("wc"))?),
            "ww" => ww = Some(value.trim().parse().map_err(|_| bad("ww"))?),
            "inverted" => inverted = value.trim().parse().map_err(|_| bad("inverted"))?,
            "view" => view = Some(value.trim().to_string()),
            other => {
                return Err(WindowingError::Sidecar(format!(
                    "line {}: unknown key {other:?}",
                    lineno + 1
                )))
            }
        }
    }
    let require = |name: &str, v: Option<f64>| {
        v.ok_or_else(|| WindowingError::Sidecar(format!("missing key {name:?}")))
    };
    let width = width.ok_or_else(|| WindowingError::Sidecar("missing key \"width\"".into()))?;
    let height = height.ok_or_else(|| WindowingError::Sidecar("missing key \"height\"".into()))?;
    let wc = require("wc", wc)?;
    let ww = require("ww", ww)?;

    let bytes = std::fs::read(pixels_path)?;
    if bytes.len() % 2 != 0 {
        return Err(WindowingError::Sidecar(format!(
            "pixel file has odd byte length {}",
            bytes.len()
        )));
    }
    let pixels: Vec<u16> = bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    Ok(DicomImage {
        image: RawImage::new(width, height, pixels, inverted)?,
        windows: vec![WindowParams::new(wc, ww)?],
        view_position: view,
    })
}

/// Write an 8-bit grayscale PNG. Re-reading reproduces the pixels bit-exactly.
pub fn write_png_gray8(img: &GrayImage, path: impl AsRef<Path>) -> Result<(), WindowingError> {
    let buf: image::ImageBuffer<image::Luma<u8>, Vec<u8>> =
        image::ImageBuffer::from_raw(img.width, img.height, img.pixels.clone())
            .expect("dimension invariant");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Read back an 8-bit grayscale PNG written by [`write_png_gray8`].
pub fn read_png_gray8(path: impl AsRef<Path>) -> Result<GrayImage, WindowingError> {
    let img = image::open(path)?.into_luma8();
    GrayImage::new(img.width(), img.height(), img.into_raw())
}

/// Render a tiny ASCII summary (dimensions plus corner values), used by the
/// CLI for quick sanity output.
pub fn describe_gray(img: &GrayImage) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{}x{} gray8, first={} last={}",
        img.width,
        img.height,
        img.pixels.first().copied().unwrap_or(0),
        img.pixels.last().copied().unwrap_or(0)
    );
    s
}
