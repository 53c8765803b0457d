//! 8-bit PPM/PGM and PNG codecs.
//!
//! Binary netpbm (`P6` RGB, `P5` greyscale, maxval 255) is always available;
//! PNG support covers 8-bit greyscale and RGB. Samples map to intensities as
//! `byte / 255` and back with round-half-up, so decoding then encoding is the
//! identity on bytes.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imagecore::ImageTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    /// `P6` for RGB, `P5` for greyscale.
    Ppm,
    Png,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("ppm" | "pgm" | "pnm") => Ok(ImageFormat::Ppm),
            Some("png") => Ok(ImageFormat::Png),
            _ => Err(Error::arg(format!(
                "unsupported image extension: {}",
                path.display()
            ))),
        }
    }

    /// File extension for an image with `channels` channels.
    pub fn extension(self, channels: usize) -> &'static str {
        match (self, channels) {
            (ImageFormat::Ppm, 1) => "pgm",
            (ImageFormat::Ppm, _) => "ppm",
            (ImageFormat::Png, _) => "png",
        }
    }
}

pub fn decode_image(bytes: &[u8], format: ImageFormat) -> Result<ImageTensor> {
    match format {
        ImageFormat::Ppm => decode_pnm(bytes),
        ImageFormat::Png => decode_png(bytes),
    }
}

pub fn encode_image(img: &ImageTensor, format: ImageFormat) -> Vec<u8> {
    match format {
        ImageFormat::Ppm => encode_pnm(img),
        ImageFormat::Png => encode_png(img),
    }
}

pub fn read_image(path: &Path) -> Result<ImageTensor> {
    let format = ImageFormat::from_path(path)?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes, format).map_err(|e| match e {
        Error::Decode { offset, reason } => Error::Decode {
            offset,
            reason: format!("{}: {reason}", path.display()),
        },
        other => other,
    })
}

pub fn write_image(path: &Path, img: &ImageTensor) -> Result<()> {
    let format = ImageFormat::from_path(path)?;
    std::fs::write(path, encode_image(img, format)).map_err(|e| Error::io(path, e))
}

fn decode_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Decode {
        offset,
        reason: reason.into(),
    }
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(decode_err(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| decode_err(start, format!("{what} out of range")))
    }
}

fn decode_pnm(bytes: &[u8]) -> Result<ImageTensor> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(decode_err(0, "missing netpbm magic"));
    }
    let channels = match bytes[1] {
        b'5' => 1,
        b'6' => 3,
        _ => return Err(decode_err(1, "only binary P5/P6 netpbm is supported")),
    };
    let mut header = HeaderReader { bytes, pos: 2 };
    let width = header.number("width")?;
    let height = header.number("height")?;
    header.skip_space_and_comments();
    let maxval_at = header.pos;
    let maxval = header.number("maxval")?;
    if maxval != 255 {
        return Err(decode_err(
            maxval_at,
            format!("unsupported bit depth: maxval {maxval}, expected 255"),
        ));
    }
    if width == 0 || height == 0 {
        return Err(decode_err(2, "zero image dimension"));
    }
    match bytes.get(header.pos) {
        Some(b) if b.is_ascii_whitespace() => header.pos += 1,
        _ => return Err(decode_err(header.pos, "expected whitespace after maxval")),
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| decode_err(2, "image dimensions overflow"))?;
    let payload = &bytes[header.pos..];
    if payload.len() < need {
        return Err(decode_err(
            bytes.len(),
            format!("truncated payload: {} of {need} bytes", payload.len()),
        ));
    }
    ImageTensor::from_bytes(height, width, channels, &payload[..need])
}

fn encode_pnm(img: &ImageTensor) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_bytes());
    out
}

fn decode_png(bytes: &[u8]) -> Result<ImageTensor> {
    let mut cursor = Cursor::new(bytes);
    let decoder = png::Decoder::new(&mut cursor);
    let mut reader = match decoder.read_info() {
        Ok(r) => r,
        Err(e) => return Err(decode_err(cursor.position() as usize, e.to_string())),
    };
    let info = reader.info();
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(decode_err(0, format!("unsupported PNG color type {other:?}")));
        }
    };
    if info.bit_depth != png::BitDepth::Eight {
        return Err(decode_err(
            0,
            format!("unsupported bit depth {:?}", info.bit_depth),
        ));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| decode_err(0, "PNG too large"))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf);
    let frame = match frame {
        Ok(f) => f,
        Err(e) => {
            drop(reader);
            return Err(decode_err(cursor.position() as usize, e.to_string()));
        }
    };
    let (w, h) = (frame.width as usize, frame.height as usize);
    let mut packed = Vec::with_capacity(w * h * channels);
    for row in buf.chunks(frame.line_size).take(h) {
        packed.extend_from_slice(&row[..w * channels]);
    }
    ImageTensor::from_bytes(h, w, channels, &packed)
}

fn encode_png(img: &ImageTensor) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        encoder.set_color(if img.channels() == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().expect("writing to a Vec cannot fail");
        writer
            .write_image_data(&img.to_bytes())
            .expect("writing to a Vec cannot fail");
    }
    out
}
