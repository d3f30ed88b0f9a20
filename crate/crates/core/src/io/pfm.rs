//! Portable float map (PFM) encoding.
//!
//! Header: magic (`Pf` grayscale, `PF` RGB), `width height`, and a scale whose
//! sign selects the byte order (negative = little-endian). Rows are stored
//! bottom-to-top. Writers always emit `-1.0` and little-endian samples.
//!
//! Context maps with a channel count other than 1 or 3 are stored as a
//! comment line `# asn-planes C` followed by `C` complete `Pf` images, one
//! per channel.

use crate::error::{PfmError, Result};

/// Decoded image with rows top-to-bottom and interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl PfmImage {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self, PfmError> {
        if channels != 1 && channels != 3 {
            return Err(PfmError::Channels(channels));
        }
        if data.len() != width * height * channels {
            return Err(PfmError::Truncated {
                expected: width * height * channels * 4,
                found: data.len() * 4,
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }
}

const PLANES_TAG: &str = "# asn-planes";

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn token(&mut self, field: &'static str) -> Result<&'a str, PfmError> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PfmError::MissingField(field));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| PfmError::MissingField(field))
    }

    fn line(&mut self) -> &'a [u8] {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
            self.pos += 1;
        }
        let out = &self.bytes[start..self.pos];
        if self.pos < self.bytes.len() {
            self.pos += 1;
        }
        out
    }
}

fn parse_dim(tok: &str, field: &'static str) -> Result<usize, PfmError> {
    match tok.parse::<i64>() {
        Ok(v) if v > 0 => Ok(v as usize),
        _ => Err(PfmError::BadDimension {
            field,
            value: tok.to_string(),
        }),
    }
}

fn read_one(cur: &mut Cursor<'_>) -> Result<PfmImage, PfmError> {
    let magic = cur
        .token("magic")
        .map_err(|_| PfmError::BadMagic(String::new()))?;
    let channels = match magic {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(PfmError::BadMagic(other.to_string())),
    };
    let width = parse_dim(cur.token("width")?, "width")?;
    let height = parse_dim(cur.token("height")?, "height")?;
    let scale_tok = cur.token("scale")?;
    let scale: f64 = scale_tok
        .parse()
        .map_err(|_| PfmError::BadScale(scale_tok.to_string()))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(PfmError::BadScale(scale_tok.to_string()));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if cur.pos < cur.bytes.len() {
        cur.pos += 1;
    }
    let little = scale < 0.0;
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or(PfmError::BadDimension {
            field: "width",
            value: width.to_string(),
        })?;
    let expected = count * 4;
    let available = cur.bytes.len() - cur.pos;
    if available < expected {
        return Err(PfmError::Truncated {
            expected,
            found: available,
        });
    }
    let payload = &cur.bytes[cur.pos..cur.pos + expected];
    cur.pos += expected;

    let row_len = width * channels;
    let mut data = vec![0f32; count];
    for (stored_row, chunk) in payload.chunks_exact(row_len * 4).enumerate() {
        let row = height - 1 - stored_row;
        for (j, b) in chunk.chunks_exact(4).enumerate() {
            let b = [b[0], b[1], b[2], b[3]];
            data[row * row_len + j] = if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
        }
    }
    Ok(PfmImage {
        width,
        height,
        channels,
        data,
    })
}

/// Parses a PFM file in either byte order.
pub fn read_pfm(bytes: &[u8]) -> Result<PfmImage, PfmError> {
    read_one(&mut Cursor { bytes, pos: 0 })
}

/// Serializes an image as little-endian PFM.
pub fn write_pfm(img: &PfmImage) -> Result<Vec<u8>, PfmError> {
    if img.channels != 1 && img.channels != 3 {
        return Err(PfmError::Channels(img.channels));
    }
    if let Some(i) = img.data.iter().position(|v| !v.is_finite()) {
        return Err(PfmError::NonFiniteSample(i));
    }
    let magic = if img.channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{magic}\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    let row_len = img.width * img.channels;
    out.reserve(img.data.len() * 4);
    for row in (0..img.height).rev() {
        for v in &img.data[row * row_len..(row + 1) * row_len] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Planar multi-channel image: one `Pf` plane per channel.
pub fn write_planes(width: usize, height: usize, planes: &[Vec<f32>]) -> Result<Vec<u8>, PfmError> {
    let mut out = format!("{PLANES_TAG} {}\n", planes.len()).into_bytes();
    for p in planes {
        out.extend(write_pfm(&PfmImage::new(width, height, 1, p.clone())?)?);
    }
    Ok(out)
}

/// Reads either a plain PFM (returned as its interleaved channels) or a
/// planar file, as `(width, height, channels, interleaved samples)`.
pub fn read_channels(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f32>), PfmError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if !bytes.starts_with(b"#") {
        let img = read_one(&mut cur)?;
        return Ok((img.width, img.height, img.channels, img.data));
    }
    let line = std::str::from_utf8(cur.line()).map_err(|_| PfmError::BadMagic("#".into()))?;
    let count = line
        .strip_prefix(PLANES_TAG)
        .and_then(|rest| rest.trim().parse::<usize>().ok())
        .filter(|&c| c > 0)
        .ok_or_else(|| PfmError::BadMagic(line.to_string()))?;
    let mut planes = Vec::with_capacity(count);
    for _ in 0..count {
        let img = read_one(&mut cur)?;
        if img.channels != 1 {
            return Err(PfmError::Channels(img.channels));
        }
        planes.push(img);
    }
    let (w, h) = (planes[0].width, planes[0].height);
    if planes.iter().any(|p| p.width != w || p.height != h) {
        return Err(PfmError::BadDimension {
            field: "plane",
            value: "size differs between planes".into(),
        });
    }
    let mut data = vec![0f32; w * h * count];
    for (c, p) in planes.iter().enumerate() {
        for (i, v) in p.data.iter().enumerate() {
            data[i * count + c] = *v;
        }
    }
    Ok((w, h, count, data))
}
