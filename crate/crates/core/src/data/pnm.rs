//! Portable pixel formats: P2/P5 (gray) and P3/P6 (color), 8 or 16 bit.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pnm {
    pub width: usize,
    pub height: usize,
    /// 1 for PGM, 3 for PPM.
    pub channels: usize,
    pub maxval: u16,
    /// Interleaved samples in row-major order.
    pub data: Vec<u16>,
}

impl Pnm {
    pub fn gray(width: usize, height: usize, maxval: u16, data: Vec<u16>) -> Self {
        Pnm {
            width,
            height,
            channels: 1,
            maxval,
            data,
        }
    }
}

fn perr(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Option<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).ok()?.parse().ok()
    }
}

pub fn parse_pnm(bytes: &[u8], path: &Path) -> Result<Pnm> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(perr(path, "missing P-format magic number"));
    }
    let (channels, binary) = match bytes[1] {
        b'2' => (1, false),
        b'3' => (3, false),
        b'5' => (1, true),
        b'6' => (3, true),
        c => return Err(perr(path, format!("unsupported format P{}", c as char))),
    };
    let mut h = Header { bytes, pos: 2 };
    let width = h.number().ok_or_else(|| perr(path, "bad width"))?;
    let height = h.number().ok_or_else(|| perr(path, "bad height"))?;
    let maxval = h.number().ok_or_else(|| perr(path, "bad maxval"))?;
    if width == 0 || height == 0 {
        return Err(perr(path, format!("zero dimension {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(perr(path, format!("maxval {maxval} outside 1..=65535")));
    }
    let n = width * height * channels;
    let data: Vec<u16> = if binary {
        // exactly one whitespace byte separates the header from the raster
        if h.pos >= bytes.len() || !bytes[h.pos].is_ascii_whitespace() {
            return Err(perr(path, "missing whitespace after header"));
        }
        let raster = &bytes[h.pos + 1..];
        let width_bytes = if maxval > 255 { 2 } else { 1 };
        if raster.len() < n * width_bytes {
            return Err(perr(path, format!("raster has {} bytes, need {}", raster.len(), n * width_bytes)));
        }
        if width_bytes == 1 {
            raster[..n].iter().map(|&b| b as u16).collect()
        } else {
            raster[..2 * n].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        }
    } else {
        (0..n)
            .map(|i| h.number().ok_or_else(|| perr(path, format!("bad sample {i}"))))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .map(|v| v.min(65535) as u16)
            .collect()
    };
    if let Some(v) = data.iter().find(|&&v| v as usize > maxval) {
        return Err(perr(path, format!("sample {v} exceeds maxval {maxval}")));
    }
    Ok(Pnm {
        width,
        height,
        channels,
        maxval: maxval as u16,
        data,
    })
}

pub fn read_pnm(path: &Path) -> Result<Pnm> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pnm(&bytes, path)
}

/// Binary encoding (P5/P6); 16-bit samples are big-endian.
pub fn encode_pnm(img: &Pnm) -> Vec<u8> {
    let magic = if img.channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    if img.maxval > 255 {
        for v in &img.data {
            out.extend_from_slice(&v.to_be_bytes());
        }
    } else {
        out.extend(img.data.iter().map(|&v| v as u8));
    }
    out
}

pub fn write_pnm(img: &Pnm, path: &Path) -> Result<()> {
    fs::write(path, encode_pnm(img)).map_err(|e| Error::io(path, e))
}
