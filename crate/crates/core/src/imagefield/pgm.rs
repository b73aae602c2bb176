//! Binary (`P5`) and ASCII (`P2`) grey-scale PGM.

use std::io::Write;

use crate::error::{Error, Result};

/// Decoded image: `pixels[r * width + c]`, row 0 at the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::ImageParse {
            offset: self.pos,
            message: message.into(),
        }
    }

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

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::ImageParse {
                offset: start,
                message: format!("{what} out of range"),
            })
    }
}

pub fn parse(bytes: &[u8]) -> Result<Pgm> {
    let mut cur = Cursor { bytes, pos: 0 };
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(cur.err("missing PGM magic number"));
    }
    let binary = match bytes[1] {
        b'2' => false,
        b'5' => true,
        b'3' | b'6' => return Err(cur.err("colour PPM images are not supported")),
        _ => return Err(cur.err("not a grey-scale PGM (expected P2 or P5)")),
    };
    cur.pos = 2;
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_pos = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(cur.err("image has zero size"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::ImageParse {
            offset: maxval_pos,
            message: format!("maxval {maxval} is not an 8-bit grey level range"),
        });
    }
    let n = width * height;
    let mut pixels = Vec::with_capacity(n);
    if binary {
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(cur.err("expected a single whitespace before raster data"));
        }
        cur.pos += 1;
        if bytes.len() < cur.pos + n {
            cur.pos = bytes.len();
            return Err(cur.err(format!("raster truncated: expected {n} bytes")));
        }
        for &b in &bytes[cur.pos..cur.pos + n] {
            if b as usize > maxval {
                return Err(cur.err(format!("sample {b} exceeds maxval")));
            }
            pixels.push(b as u16);
            cur.pos += 1;
        }
    } else {
        for _ in 0..n {
            let v = cur.number("pixel value")?;
            if v > maxval {
                return Err(cur.err(format!("sample {v} exceeds maxval")));
            }
            pixels.push(v as u16);
        }
    }
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        pixels,
    })
}

/// Writes `values` (row 0 at the top, each clamped to `[0, 1]`) as 8-bit P5.
pub fn write<W: Write>(mut w: W, width: usize, height: usize, values: &[f64]) -> std::io::Result<()> {
    assert_eq!(values.len(), width * height);
    write!(w, "P5\n{width} {height}\n255\n")?;
    let bytes: Vec<u8> = values
        .iter()
        .map(|&v| {
            let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
            (v * 255.0).round() as u8
        })
        .collect();
    w.write_all(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_and_binary_agree() {
        let a = parse(b"P2\n# comment\n2 2\n255\n0 255\n255 0\n").unwrap();
        let b = parse(b"P5\n2 2\n255\n\x00\xff\xff\x00").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pixels, vec![0, 255, 255, 0]);
    }

    #[test]
    fn errors_carry_offsets() {
        match parse(b"P6\n1 1\n255\n\x00\x00\x00") {
            Err(Error::ImageParse { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("{other:?}"),
        }
        match parse(b"P2\n2 2\n255\n0 1 x") {
            Err(Error::ImageParse { offset, .. }) => assert_eq!(offset, 15),
            other => panic!("{other:?}"),
        }
        assert!(parse(b"P5\n2 2\n255\n\x00").is_err());
        assert!(parse(b"P2\n1 1\n1000\n5").is_err());
    }

    #[test]
    fn write_then_parse() {
        let mut buf = Vec::new();
        write(&mut buf, 3, 1, &[0.0, 0.5, 2.0]).unwrap();
        let p = parse(&buf).unwrap();
        assert_eq!(p.pixels, vec![0, 128, 255]);
    }
}
