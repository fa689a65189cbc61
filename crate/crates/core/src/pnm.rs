//! Netpbm I/O: 8-bit PGM (P2/P5) for rasters, PBM (P1/P4) for masks.
//!
//! Files are row-major; rasters are column-major, so every reader and
//! writer transposes on the fly.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{DbiError, Result};
use crate::grid::{Mask, Raster};

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: Option<usize>,
    data_start: usize,
}

fn format_err(msg: impl Into<String>) -> DbiError {
    DbiError::Format(msg.into())
}

struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn next_uint(&mut self) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format_err("expected an unsigned integer"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err("integer out of range"))
    }

    /// Plain PBM allows bits without separating whitespace.
    fn next_bit(&mut self) -> Result<bool> {
        self.skip_space_and_comments();
        match self.bytes.get(self.pos) {
            Some(b'0') => {
                self.pos += 1;
                Ok(false)
            }
            Some(b'1') => {
                self.pos += 1;
                Ok(true)
            }
            _ => Err(format_err("expected a PBM bit")),
        }
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(format_err("missing netpbm magic number"));
    }
    let magic = [bytes[0], bytes[1]];
    let mut t = Tokens { bytes, pos: 2 };
    let width = t.next_uint()?;
    let height = t.next_uint()?;
    if width == 0 || height == 0 {
        return Err(format_err("zero image dimension"));
    }
    let maxval = match magic[1] {
        b'2' | b'5' => Some(t.next_uint()?),
        b'1' | b'4' => None,
        _ => return Err(format_err(format!("unsupported netpbm type P{}", magic[1] as char))),
    };
    // binary formats: exactly one whitespace byte separates header and data
    let data_start = match magic[1] {
        b'4' | b'5' => {
            if t.pos >= bytes.len() || !bytes[t.pos].is_ascii_whitespace() {
                return Err(format_err("missing whitespace after header"));
            }
            t.pos + 1
        }
        _ => t.pos,
    };
    Ok(Header { magic, width, height, maxval, data_start })
}

pub fn parse_pgm(bytes: &[u8]) -> Result<Raster> {
    let h = parse_header(bytes)?;
    let maxval = match h.maxval {
        Some(255) => 255,
        Some(m) => return Err(format_err(format!("unsupported maxval {m}, expected 255"))),
        None => return Err(format_err("not a PGM file")),
    };
    let n = h.width * h.height;
    let mut row_major = Vec::with_capacity(n);
    match h.magic[1] {
        b'5' => {
            let data = bytes
                .get(h.data_start..h.data_start + n)
                .ok_or_else(|| format_err("truncated P5 pixel data"))?;
            row_major.extend(data.iter().map(|&b| b as f64));
        }
        _ => {
            let mut t = Tokens { bytes, pos: h.data_start };
            for _ in 0..n {
                let v = t.next_uint()?;
                if v > maxval {
                    return Err(format_err(format!("pixel value {v} exceeds maxval")));
                }
                row_major.push(v as f64);
            }
        }
    }
    Ok(Raster::from_fn(h.width, h.height, |x, y| row_major[y * h.width + x]))
}

pub fn load_pnm(path: impl AsRef<Path>) -> Result<Raster> {
    parse_pgm(&fs::read(path)?)
}

#[inline]
fn to_byte(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Encodes as binary (P5) or plain (P2) PGM, rounding and clamping to 0..=255.
pub fn encode_pgm(r: &Raster, binary: bool) -> Vec<u8> {
    let (w, h) = r.dims();
    let mut out = Vec::with_capacity(w * h + 32);
    if binary {
        out.extend_from_slice(format!("P5\n{w} {h}\n255\n").as_bytes());
        for y in 0..h {
            for x in 0..w {
                out.push(to_byte(r.get(x, y)));
            }
        }
    } else {
        out.extend_from_slice(format!("P2\n{w} {h}\n255\n").as_bytes());
        for y in 0..h {
            let line: Vec<String> = (0..w).map(|x| to_byte(r.get(x, y)).to_string()).collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    }
    out
}

pub fn save_pnm(path: impl AsRef<Path>, r: &Raster) -> Result<()> {
    write_file(path, &encode_pgm(r, true))
}

pub fn parse_pbm(bytes: &[u8]) -> Result<Mask> {
    let h = parse_header(bytes)?;
    let n = h.width * h.height;
    let mut row_major = Vec::with_capacity(n);
    match h.magic[1] {
        b'4' => {
            let stride = h.width.div_ceil(8);
            let data = bytes
                .get(h.data_start..h.data_start + stride * h.height)
                .ok_or_else(|| format_err("truncated P4 pixel data"))?;
            for y in 0..h.height {
                for x in 0..h.width {
                    let byte = data[y * stride + x / 8];
                    row_major.push(byte & (0x80 >> (x % 8)) != 0);
                }
            }
        }
        b'1' => {
            let mut t = Tokens { bytes, pos: h.data_start };
            for _ in 0..n {
                row_major.push(t.next_bit()?);
            }
        }
        _ => return Err(format_err("not a PBM file")),
    }
    Ok(Mask::from_fn(h.width, h.height, |x, y| row_major[y * h.width + x]))
}

pub fn load_pbm(path: impl AsRef<Path>) -> Result<Mask> {
    parse_pbm(&fs::read(path)?)
}

/// Encodes a mask as binary PBM (P4); set pixels are written as 1.
pub fn encode_pbm(m: &Mask) -> Vec<u8> {
    let (w, h) = m.dims();
    let stride = w.div_ceil(8);
    let mut out = format!("P4\n{w} {h}\n").into_bytes();
    for y in 0..h {
        let mut row = vec![0u8; stride];
        for x in 0..w {
            if m.get(x, y) {
                row[x / 8] |= 0x80 >> (x % 8);
            }
        }
        out.extend_from_slice(&row);
    }
    out
}

pub fn save_pbm(path: impl AsRef<Path>, m: &Mask) -> Result<()> {
    write_file(path, &encode_pbm(m))
}

/// Writes a density map as a scaled PGM plus a text sidecar
/// (`<path>.dmap`) holding the exact values in storage order.
pub fn save_density(path: impl AsRef<Path>, d: &Raster) -> Result<()> {
    let path = path.as_ref();
    save_pnm(path, &d.map(|v| v * 255.0))?;
    let mut text = format!("{} {}\n", d.width(), d.height());
    for v in d.data() {
        text.push_str(&format!("{v:e}\n"));
    }
    let mut side = path.as_os_str().to_owned();
    side.push(".dmap");
    write_file(Path::new(&side), text.as_bytes())
}

pub fn load_density_sidecar(path: impl AsRef<Path>) -> Result<Raster> {
    let text = fs::read_to_string(path)?;
    let mut it = text.split_ascii_whitespace();
    let mut next = |what: &str| it.next().ok_or_else(|| format_err(format!("density sidecar: missing {what}")));
    let w: usize = next("width")?.parse().map_err(|_| format_err("density sidecar: bad width"))?;
    let h: usize = next("height")?.parse().map_err(|_| format_err("density sidecar: bad height"))?;
    let mut data = Vec::with_capacity(w * h);
    for _ in 0..w * h {
        data.push(next("value")?.parse().map_err(|_| format_err("density sidecar: bad value"))?);
    }
    Raster::new(w, h, data)
}

fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}
