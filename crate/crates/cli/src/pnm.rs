//! Binary PGM (`P5`) and PPM (`P6`) with maxval 255.
//!
//! Samples map to `[0, 1]` as `v/255` on load. On save, values are clamped to
//! `[0, 1]` and quantized with round-half-up, `⌊255·v + ½⌋`, so that
//! load∘save is the identity on 8-bit data.

use std::fs;
use std::io;
use std::path::Path;

use aniso_core::{GridSpec, ImageField};

#[derive(Debug, thiserror::Error)]
pub enum PnmError {
    #[error("no such file: {0}")]
    Missing(String),
    #[error("malformed header: {0}")]
    Malformed(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("cannot store {0} channels; only 1 (P5) and 3 (P6) are supported")]
    Channels(usize),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn load_image(path: &Path) -> Result<ImageField, PnmError> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => PnmError::Missing(path.display().to_string()),
        _ => PnmError::Io(e),
    })?;
    decode(&bytes)
}

pub fn save_image(field: &ImageField, path: &Path) -> Result<(), PnmError> {
    fs::write(path, encode(field)?)?;
    Ok(())
}

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    payload_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, PnmError> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(PnmError::Malformed("expected magic P5 or P6".into())),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (slot, name) in fields.iter_mut().zip(["width", "height", "maxval"]) {
        // whitespace and `#` comments may separate header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(PnmError::Malformed(format!("missing {name}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *slot = text
            .parse()
            .map_err(|_| PnmError::Malformed(format!("{name} out of range: {text}")))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(PnmError::Malformed("expected whitespace after maxval".into()));
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(PnmError::Malformed(format!("maxval must be 255, got {maxval}")));
    }
    if width < 2 || height < 2 {
        return Err(PnmError::Malformed(format!("image must be at least 2x2, got {width}x{height}")));
    }
    Ok(Header {
        channels,
        width,
        height,
        payload_start: pos + 1,
    })
}

pub fn decode(bytes: &[u8]) -> Result<ImageField, PnmError> {
    let h = parse_header(bytes)?;
    let expected = h
        .width
        .checked_mul(h.height)
        .and_then(|n| n.checked_mul(h.channels))
        .ok_or_else(|| PnmError::Malformed("image dimensions overflow".into()))?;
    let payload = &bytes[h.payload_start.min(bytes.len())..];
    if payload.len() < expected {
        return Err(PnmError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let grid = GridSpec::new(&[h.height, h.width], h.channels)
        .map_err(|e| PnmError::Malformed(e.to_string()))?;
    let values = payload[..expected].iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(ImageField::from_vec(&grid, values).expect("payload length matches grid"))
}

pub fn quantize(v: f64) -> u8 {
    (255.0 * v.clamp(0.0, 1.0) + 0.5).floor() as u8
}

pub fn encode(field: &ImageField) -> Result<Vec<u8>, PnmError> {
    let magic = match field.channels() {
        1 => "P5",
        3 => "P6",
        k => return Err(PnmError::Channels(k)),
    };
    let dims = field.dims();
    if dims.len() != 2 {
        return Err(PnmError::Malformed(format!("expected a 2D field, got {} axes", dims.len())));
    }
    if let Some(i) = field.values().iter().position(|v| !v.is_finite()) {
        return Err(PnmError::NonFinite(i));
    }
    let mut out = format!("{magic}\n{} {}\n255\n", dims[1], dims[0]).into_bytes();
    out.extend(field.values().iter().map(|&v| quantize(v)));
    Ok(out)
}
