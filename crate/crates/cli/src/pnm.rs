//! Binary 8-bit PGM (`P5`) and PPM (`P6`).

use std::io::Write;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PnmError {
    #[error("malformed header: {0}")]
    Header(String),
    #[error("expected {expected} pixel bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Gray,
    Rgb,
}

impl Kind {
    pub fn channels(self) -> usize {
        match self {
            Kind::Gray => 1,
            Kind::Rgb => 3,
        }
    }
}

/// Decoded image; samples are rescaled to `0..=255` and interleaved by
/// channel in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub kind: Kind,
    pub width: usize,
    pub height: usize,
    pub samples: Vec<f64>,
}

impl Image {
    /// Sample at row `i`, column `j`, channel `c`.
    pub fn at(&self, i: usize, j: usize, c: usize) -> f64 {
        self.samples[(i * self.width + j) * self.kind.channels() + c]
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.buf.len() {
            let b = self.buf[self.pos];
            if b == b'#' {
                while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, PnmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.buf[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PnmError::Header(format!("missing {what}")))
    }
}

pub fn decode(buf: &[u8]) -> Result<Image, PnmError> {
    let kind = match buf.get(..2) {
        Some(b"P5") => Kind::Gray,
        Some(b"P6") => Kind::Rgb,
        _ => return Err(PnmError::Header("expected P5 or P6 magic".into())),
    };
    let mut cur = Cursor { buf, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PnmError::Header(format!("empty {width}x{height} image")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(PnmError::Header(format!("maxval {maxval} is not 8-bit")));
    }
    match buf.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(PnmError::Header("no separator before pixel data".into())),
    }
    let expected = width * height * kind.channels();
    let data = &buf[cur.pos..];
    if data.len() < expected {
        return Err(PnmError::Truncated {
            expected,
            found: data.len(),
        });
    }
    let scale = 255.0 / maxval as f64;
    let samples = data[..expected]
        .iter()
        .map(|&b| if maxval == 255 { b as f64 } else { b as f64 * scale })
        .collect();
    Ok(Image {
        kind,
        width,
        height,
        samples,
    })
}

fn quantise(x: f64) -> u8 {
    x.round().clamp(0.0, 255.0) as u8
}

/// Encodes with `maxval` 255, rounding and clamping every sample.
pub fn encode<W: Write>(mut w: W, img: &Image) -> std::io::Result<()> {
    let magic = match img.kind {
        Kind::Gray => "P5",
        Kind::Rgb => "P6",
    };
    write!(w, "{magic}\n{} {}\n255\n", img.width, img.height)?;
    let bytes: Vec<u8> = img.samples.iter().map(|&x| quantise(x)).collect();
    w.write_all(&bytes)?;
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_with_comments() {
        let mut buf = b"P5\n# made by hand\n2 1\n# depth\n255\n".to_vec();
        buf.extend([7u8, 200]);
        let img = decode(&buf).unwrap();
        assert_eq!((img.width, img.height, img.kind), (2, 1, Kind::Gray));
        assert_eq!(img.samples, vec![7.0, 200.0]);
    }

    #[test]
    fn low_maxval_is_rescaled() {
        let mut buf = b"P5 1 1 15 ".to_vec();
        buf.push(15);
        assert_eq!(decode(&buf).unwrap().samples, vec![255.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(decode(b"P3 1 1 255 "), Err(PnmError::Header(_))));
        assert!(matches!(decode(b"P5 1 1 65535 \0\0"), Err(PnmError::Header(_))));
        assert!(matches!(decode(b"P6 2 2 255 \0\0\0"), Err(PnmError::Truncated { expected: 12, found: 3 })));
        assert!(matches!(decode(b"P5 x 1 255 "), Err(PnmError::Header(_))));
    }

    #[test]
    fn round_trip_and_clamping() {
        let img = Image {
            kind: Kind::Rgb,
            width: 1,
            height: 2,
            samples: vec![0.0, 12.4, 255.0, -3.0, 300.0, 127.5],
        };
        let mut buf = Vec::new();
        encode(&mut buf, &img).unwrap();
        let back = decode(&buf).unwrap();
        assert_eq!(back.samples, vec![0.0, 12.0, 255.0, 0.0, 255.0, 128.0]);
        assert_eq!(back.at(1, 0, 2), 128.0);
    }
}
