//! Binary (P5) and ASCII (P2) PGM images.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::GrayImage;

const MAX_MAXVAL: u32 = 65535;

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { offset: self.pos, message: message.into() }
    }

    /// Skips whitespace and `#` comments running to end of line.
    fn skip_space(&mut self) {
        while let Some(&b) = self.data.get(self.pos) {
            if b == b'#' {
                while self.data.get(self.pos).is_some_and(|&c| c != b'\n' && c != b'\r') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space();
        let start = self.pos;
        while self.data.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(match self.data.get(self.pos) {
                None => self.err(format!("unexpected end of file reading {what}")),
                Some(&b) => self.err(format!("expected {what}, found byte 0x{b:02x}")),
            });
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::Parse { offset: start, message: format!("{what} out of range") })
    }
}

/// Decodes a PGM byte stream; samples are normalized by `maxval`.
pub fn decode_pgm(data: &[u8]) -> Result<GrayImage> {
    let mut c = Cursor { data, pos: 0 };
    let binary = match data.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(c.err("not a P5/P2 PGM file")),
    };
    c.pos = 2;
    let width = c.number("width")? as usize;
    let height = c.number("height")? as usize;
    c.skip_space();
    let maxval_at = c.pos;
    let maxval = c.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Parse { offset: maxval_at, message: format!("empty image {width}x{height}") });
    }
    if maxval == 0 || maxval > MAX_MAXVAL {
        return Err(Error::Parse { offset: maxval_at, message: format!("maxval {maxval} outside 1..=65535") });
    }
    let count = width.checked_mul(height).ok_or_else(|| c.err("image too large"))?;
    let scale = maxval as f64;
    let mut pixels = Vec::with_capacity(count);
    if binary {
        if !c.data.get(c.pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(c.err("expected a single whitespace byte after maxval"));
        }
        c.pos += 1;
        let bytes_per = if maxval > 255 { 2 } else { 1 };
        let payload = &data[c.pos..];
        if payload.len() < count * bytes_per {
            return Err(Error::Parse {
                offset: data.len(),
                message: format!("truncated payload: {} of {} bytes", payload.len(), count * bytes_per),
            });
        }
        for k in 0..count {
            let v = if bytes_per == 2 {
                u16::from_be_bytes([payload[2 * k], payload[2 * k + 1]]) as u32
            } else {
                payload[k] as u32
            };
            if v > maxval {
                return Err(Error::Parse {
                    offset: c.pos + k * bytes_per,
                    message: format!("sample {v} > maxval {maxval}"),
                });
            }
            pixels.push(v as f64 / scale);
        }
    } else {
        for _ in 0..count {
            c.skip_space();
            let at = c.pos;
            let v = c.number("sample")?;
            if v > maxval {
                return Err(Error::Parse { offset: at, message: format!("sample {v} > maxval {maxval}") });
            }
            pixels.push(v as f64 / scale);
        }
    }
    GrayImage::new(height, width, pixels)
}

/// P5, maxval 255, rounding half up after clamping to [0, 1].
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.pixels().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8));
    out
}

pub fn load_pgm(path: &Path) -> Result<GrayImage> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&data).map_err(|e| match e {
        Error::Parse { offset, message } => Error::Parse { offset, message: format!("{}: {message}", path.display()) },
        other => other,
    })
}

pub fn save_pgm(img: &GrayImage, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}
