//! Portable Float Map reader/writer, the HDR carrier.
//!
//! Header: `PF` (3-channel) or `Pf` (1-channel), then `width height`, then a
//! scale line whose sign encodes endianness (negative = little-endian), then
//! 32-bit float rows bottom-to-top. Writes are little-endian with scale -1.

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use std::io::Write;
use std::path::Path;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    /// One whitespace-delimited ASCII token plus its byte offset.
    fn token(&mut self) -> Result<(&'a str, u64)> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format_at("unexpected end of header", start as u64));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::format_at("non-ASCII header token", start as u64))?;
        Ok((text, start as u64))
    }

    /// Consume the single whitespace byte that terminates the scale line.
    fn skip_one_whitespace(&mut self) -> Result<()> {
        if self.pos >= self.bytes.len() || !self.bytes[self.pos].is_ascii_whitespace() {
            return Err(Error::format_at(
                "expected whitespace after scale",
                self.pos as u64,
            ));
        }
        self.pos += 1;
        Ok(())
    }
}

/// Decode a PFM byte buffer.
pub fn decode_pfm(bytes: &[u8]) -> Result<ImageBuffer> {
    let mut cur = Cursor::new(bytes);
    let (magic, magic_pos) = cur.token()?;
    let channels = match magic {
        "PF" => 3,
        "Pf" => 1,
        other => {
            return Err(Error::format_at(
                format!("bad magic {other:?}, expected \"PF\" or \"Pf\""),
                magic_pos,
            ))
        }
    };
    let (tok, tok_pos) = cur.token()?;
    let width: usize = tok
        .parse()
        .map_err(|_| Error::format_at("bad width", tok_pos))?;
    let (tok, tok_pos) = cur.token()?;
    let height: usize = tok
        .parse()
        .map_err(|_| Error::format_at("bad height", tok_pos))?;
    if width == 0 || height == 0 {
        return Err(Error::format_at("zero image dimension", tok_pos));
    }
    let (tok, tok_pos) = cur.token()?;
    let scale: f64 = tok
        .parse()
        .map_err(|_| Error::format_at("bad scale", tok_pos))?;
    if scale == 0.0 {
        return Err(Error::format_at("scale must be nonzero", tok_pos));
    }
    let little_endian = scale < 0.0;
    cur.skip_one_whitespace()?;

    let payload = &bytes[cur.pos..];
    let expected = width * height * channels * 4;
    if payload.len() < expected {
        return Err(Error::format_at(
            format!(
                "truncated payload: need {expected} bytes, have {}",
                payload.len()
            ),
            cur.pos as u64,
        ));
    }

    // Rows are stored bottom-to-top.
    let mut data = vec![0.0f64; width * height * channels];
    for file_row in 0..height {
        let image_row = height - 1 - file_row;
        for x in 0..width {
            for c in 0..channels {
                let i = cur.pos + ((file_row * width + x) * channels + c) * 4;
                let raw: [u8; 4] = bytes[i..i + 4].try_into().unwrap();
                let v = if little_endian {
                    f32::from_le_bytes(raw)
                } else {
                    f32::from_be_bytes(raw)
                };
                if v.is_nan() {
                    return Err(Error::format_at("NaN in payload", i as u64));
                }
                data[(image_row * width + x) * channels + c] = v as f64;
            }
        }
    }
    ImageBuffer::new(width, height, channels, data)
        .map_err(|e| Error::format(format!("invalid image payload: {e}")))
}

/// Encode to PFM bytes (little-endian, scale -1).
pub fn encode_pfm(image: &ImageBuffer) -> Result<Vec<u8>> {
    let magic = match image.channels() {
        3 => "PF",
        1 => "Pf",
        c => return Err(Error::input(format!("PFM supports 1 or 3 channels, not {c}"))),
    };
    let mut out = Vec::with_capacity(
        32 + image.width() * image.height() * image.channels() * 4,
    );
    write!(out, "{magic}\n{} {}\n-1.0\n", image.width(), image.height())?;
    let (w, h, ch) = (image.width(), image.height(), image.channels());
    for file_row in 0..h {
        let image_row = h - 1 - file_row;
        for x in 0..w {
            for c in 0..ch {
                let v = image.at(x, image_row, c) as f32;
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let bytes = std::fs::read(path.as_ref())?;
    decode_pfm(&bytes).map_err(|e| e.with_path(path.as_ref()))
}

pub fn write_pfm(image: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_pfm(image)?;
    std::fs::write(path.as_ref(), bytes)?;
    Ok(())
}
