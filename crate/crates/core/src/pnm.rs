//! Binary PGM (P5) and PPM (P6) reading and writing, maxval 255 only.

use crate::error::{Error, Result};
use crate::image::ImagePlane;

/// Parses a binary PGM or PPM file. Header comments are skipped.
pub fn load_image(bytes: &[u8]) -> Result<ImagePlane> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::MalformedHeader("expected P5 or P6 magic")),
    };
    let mut cursor = HeaderCursor { bytes, pos: 2 };
    let width = cursor.number()?;
    let height = cursor.number()?;
    let maxval = cursor.number()?;
    // exactly one whitespace byte separates maxval from the raster
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => return Err(Error::MalformedHeader("missing whitespace after maxval")),
    }
    if maxval != 255 {
        return Err(Error::MaxvalUnsupported(maxval));
    }
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader("zero image dimension"));
    }
    let expected = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(channels))
        .ok_or(Error::MalformedHeader("image dimensions overflow"))?;
    let payload = &bytes[cursor.pos..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    ImagePlane::new(
        height as usize,
        width as usize,
        channels,
        payload[..expected].to_vec(),
    )
}

/// Serializes as P5 (gray) or P6 (RGB) with a minimal header.
pub fn save_image(img: &ImagePlane) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let header = format!("{magic}\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(img.samples());
    out
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self) -> Result<u32> {
        let start = self.pos;
        self.skip_separators();
        if self.pos == start {
            return Err(Error::MalformedHeader("missing separator"));
        }
        let digits_start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if self.pos == digits_start {
            return Err(Error::MalformedHeader("expected a decimal number"));
        }
        std::str::from_utf8(&self.bytes[digits_start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(Error::MalformedHeader("number out of range"))
    }
}
