//! Binary portable pixmap (P6, maxval 255) reader and writer, plus a P5
//! graymap writer for filter visualisations.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Largest accepted width or height.
pub const MAX_DIMENSION: usize = 1 << 14;

struct Header {
    width: usize,
    height: usize,
    data_start: usize,
}

fn decode_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Decode {
        offset,
        reason: reason.into(),
    }
}

fn skip_ws_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

fn read_uint(bytes: &[u8], pos: usize, what: &str) -> Result<(usize, usize)> {
    let pos = skip_ws_and_comments(bytes, pos);
    let start = pos;
    let mut end = pos;
    let mut value: usize = 0;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        value = value
            .checked_mul(10)
            .and_then(|v| v.checked_add((bytes[end] - b'0') as usize))
            .ok_or_else(|| decode_err(start, format!("{what} too large")))?;
        end += 1;
    }
    if end == start {
        return Err(decode_err(start, format!("expected {what}")));
    }
    Ok((value, end))
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(decode_err(0, "missing magic number"));
    }
    match &bytes[..2] {
        b"P6" => {}
        b"P5" => return Err(decode_err(0, "P5 graymaps are not supported, expected P6")),
        other => {
            return Err(decode_err(
                0,
                format!("bad magic number {:?}", String::from_utf8_lossy(other)),
            ))
        }
    }
    let (width, pos) = read_uint(bytes, 2, "width")?;
    let (height, pos) = read_uint(bytes, pos, "height")?;
    let (maxval, pos) = read_uint(bytes, pos, "maxval")?;
    for (v, what) in [(width, "width"), (height, "height")] {
        if v == 0 || v > MAX_DIMENSION {
            return Err(decode_err(2, format!("{what} {v} outside 1..={MAX_DIMENSION}")));
        }
    }
    if maxval != 255 {
        return Err(decode_err(pos, format!("maxval {maxval} unsupported, expected 255")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => {}
        _ => return Err(decode_err(pos, "expected a single whitespace byte after maxval")),
    }
    Ok(Header {
        width,
        height,
        data_start: pos + 1,
    })
}

/// Decodes a P6 image into a `[3,H,W]` tensor of values in `0..=255`.
/// Bytes after the pixel payload are ignored.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor<f32>> {
    let h = parse_header(bytes)?;
    let plane = h.width * h.height;
    let need = plane * 3;
    let available = bytes.len() - h.data_start;
    if available < need {
        return Err(decode_err(
            bytes.len(),
            format!("truncated payload: {available} of {need} bytes"),
        ));
    }
    let px = &bytes[h.data_start..h.data_start + need];
    let mut data = vec![0f32; need];
    for (i, rgb) in px.chunks_exact(3).enumerate() {
        data[i] = rgb[0] as f32;
        data[plane + i] = rgb[1] as f32;
        data[2 * plane + i] = rgb[2] as f32;
    }
    Tensor::from_vec(&[3, h.height, h.width], data)
}

fn to_byte(v: f32) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Encodes a `[3,H,W]` tensor as P6; values are rounded and clamped to `0..=255`.
pub fn encode_ppm(img: &Tensor<f32>) -> Result<Vec<u8>> {
    let (height, width) = match *img.shape() {
        [3, h, w] => (h, w),
        _ => {
            return Err(Error::dim(
                "encode_ppm",
                format!("expected [3,H,W], got {:?}", img.shape()),
            ))
        }
    };
    let plane = height * width;
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.reserve(plane * 3);
    let d = img.data();
    for i in 0..plane {
        out.extend_from_slice(&[to_byte(d[i]), to_byte(d[plane + i]), to_byte(d[2 * plane + i])]);
    }
    Ok(out)
}

/// Encodes `height * width` gray bytes as binary P5.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(Error::dim(
            "encode_pgm",
            format!("{} pixels for a {width}x{height} image", pixels.len()),
        ));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_red_pixel() {
        let t = decode_ppm(b"P6\n1 1\n255\n\xff\x00\x00").unwrap();
        assert_eq!(t.shape(), &[3, 1, 1]);
        assert_eq!(t.data(), &[255.0, 0.0, 0.0]);
    }

    #[test]
    fn checkerboard_round_trip() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        for on in [true, false, false, true] {
            let v = if on { 255 } else { 0 };
            bytes.extend_from_slice(&[v, v, v]);
        }
        let t = decode_ppm(&bytes).unwrap();
        assert_eq!(encode_ppm(&t).unwrap(), bytes);
    }

    #[test]
    fn header_comments_and_whitespace() {
        let t = decode_ppm(b"P6 # made by hand\n 2\t1 # size\n255\n\x01\x02\x03\x04\x05\x06").unwrap();
        assert_eq!(t.data(), &[1., 4., 2., 5., 3., 6.]);
    }

    #[test]
    fn rejections_carry_offsets() {
        let cases: [(&[u8], usize); 5] = [
            (b"P5\n1 1\n255\n\x00", 0),
            (b"P6\n1 1\n65535\n\x00\x00", 12),
            (b"P6\n2 2\n255\n\x00\x00\x00", 14),
            (b"P6\nx", 3),
            (b"P6\n0 1\n255\n", 2),
        ];
        for (bytes, offset) in cases {
            match decode_ppm(bytes) {
                Err(Error::Decode { offset: o, .. }) => assert_eq!(o, offset, "{:?}", String::from_utf8_lossy(bytes)),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn pgm_header() {
        assert_eq!(encode_pgm(2, 1, &[0, 255]).unwrap(), b"P5\n2 1\n255\n\x00\xff");
        assert!(encode_pgm(2, 2, &[0]).is_err());
    }

    proptest! {
        #[test]
        fn decode_encode_identity(w in 1usize..6, h in 1usize..6, seed in any::<u64>()) {
            let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
            let mut s = seed;
            for _ in 0..w * h * 3 {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                bytes.push((s >> 56) as u8);
            }
            let t = decode_ppm(&bytes).unwrap();
            prop_assert_eq!(encode_ppm(&t).unwrap(), bytes);
        }

        #[test]
        fn never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_ppm(&bytes);
        }
    }
}
