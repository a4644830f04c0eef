//! Binary PPM (P6) and PGM (P5) images with maxval 255.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Mask;
use crate::numerics::Tensor;

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes a `3×H×W` image with values in [0, 1].
pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    image.expect_ndim("encode_ppm", 3)?;
    if image.dim(0) != 3 {
        return Err(Error::invalid(format!("encode_ppm: expected 3 channels, got {:?}", image.shape())));
    }
    let (h, w) = (image.dim(1), image.dim(2));
    let plane = h * w;
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * plane);
    let d = image.data();
    for i in 0..plane {
        out.extend([quantize(d[i]), quantize(d[plane + i]), quantize(d[2 * plane + i])]);
    }
    Ok(out)
}

pub fn encode_pgm(mask: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.labels().iter().map(|&l| if l == 1 { 255u8 } else { 0 }));
    out
}

pub fn write_image_ppm(image: &Tensor, path: &Path) -> Result<()> {
    fs::write(path, encode_ppm(image)?).map_err(|e| Error::io(path, e))
}

pub fn write_mask_pgm(mask: &Mask, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(mask)).map_err(|e| Error::io(path, e))
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    offset: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let fail = |msg: &str| Error::Format {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    if bytes.len() < 2 {
        return Err(fail("file too short"));
    }
    let magic = [bytes[0], bytes[1]];
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and `#` comments may separate header fields
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(fail("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(fail("bad header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fail("bad header number"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(fail("missing whitespace after maxval"));
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(fail("zero image dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(fail("maxval must be in 1..=255"));
    }
    Ok(Header {
        magic,
        width,
        height,
        maxval,
        offset: pos + 1,
    })
}

pub fn decode_ppm(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let h = parse_header(bytes, path)?;
    if &h.magic != b"P6" {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "bad magic, expected P6".into(),
        });
    }
    let plane = h.width * h.height;
    let body = &bytes[h.offset..];
    if body.len() < 3 * plane {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("expected {} pixel bytes, found {}", 3 * plane, body.len()),
        });
    }
    let scale = h.maxval as f64;
    let mut data = vec![0.0; 3 * plane];
    for (i, px) in body[..3 * plane].chunks_exact(3).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            data[c * plane + i] = v as f64 / scale;
        }
    }
    Tensor::from_vec(&[3, h.height, h.width], data)
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<Mask> {
    let h = parse_header(bytes, path)?;
    if &h.magic != b"P5" {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "bad magic, expected P5".into(),
        });
    }
    let n = h.width * h.height;
    let body = &bytes[h.offset..];
    if body.len() < n {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("expected {n} pixel bytes, found {}", body.len()),
        });
    }
    let labels = body[..n].iter().map(|&v| (2 * v as usize > h.maxval) as u8).collect();
    Mask::from_labels(h.height, h.width, labels)
}

pub fn read_image_ppm(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes, path)
}

pub fn read_mask_pgm(path: &Path) -> Result<Mask> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, path)
}
