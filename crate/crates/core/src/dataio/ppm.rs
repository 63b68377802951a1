//! Binary PPM (P6, maxval 255) codec. Pixels are channel-planar `[3, H, W]`
//! floats in `[0, 1]`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Decodes a P6 byte stream. `path` only labels errors.
pub fn decode_ppm(bytes: &[u8], path: &Path) -> Result<Tensor<f32>> {
    let fail = |msg: String| Error::format(path, msg);
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // Whitespace and `#` comments separate header fields.
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(fail("truncated header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        if fields.len() == 1 && fields[0] != "P6" {
            return Err(fail(format!("bad magic `{}`, expected P6", fields[0])));
        }
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let num = |s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| fail(format!("bad {what} `{s}`")))
    };
    let (w, h, maxval) = (num(&fields[1], "width")?, num(&fields[2], "height")?, num(&fields[3], "maxval")?);
    if maxval != 255 {
        return Err(fail(format!("maxval {maxval} unsupported, expected 255")));
    }
    if w == 0 || h == 0 {
        return Err(fail(format!("empty image {w}x{h}")));
    }
    let need = 3 * w * h;
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() < need {
        return Err(fail(format!("truncated payload: {} of {need} bytes", raster.len())));
    }
    let plane = w * h;
    let img = Tensor::from_fn(&[3, h, w], |i| {
        let (c, p) = (i / plane, i % plane);
        raster[3 * p + c] as f32 / 255.0
    });
    Ok(img)
}

/// Quantizes `[3, H, W]` values to bytes and encodes them as P6.
pub fn encode_ppm(img: &Tensor<f32>) -> Result<Vec<u8>> {
    let (h, w) = match *img.shape() {
        [3, h, w] => (h, w),
        _ => return Err(Error::shape(format!("PPM needs [3, H, W], got {:?}", img.shape()))),
    };
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let plane = w * h;
    let data = img.data();
    out.reserve(3 * plane);
    for p in 0..plane {
        for c in 0..3 {
            out.push(quantize(data[c * plane + p]));
        }
    }
    Ok(out)
}

pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes, path)
}

pub fn write_image(path: impl AsRef<Path>, img: &Tensor<f32>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(img)?).map_err(|e| Error::io(path, e))
}
