//! PNG/JPEG images (8-bit RGB) and PGM saliency maps (16-bit grayscale).

use std::io::Cursor;
use std::path::Path;

use super::ImageError;
use crate::types::{ImageBuffer, SaliencyMap};

fn to_buffer(decoded: image::ImageResult<image::DynamicImage>) -> Result<ImageBuffer, ImageError> {
    let img = decoded.map_err(|e| ImageError::Decode(e.to_string()))?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = img.into_raw().into_iter().map(|v| f32::from(v) / 255.0).collect();
    ImageBuffer::new(w, h, pixels).map_err(|e| ImageError::Decode(e.to_string()))
}

pub fn decode_png(bytes: &[u8]) -> Result<ImageBuffer, ImageError> {
    to_buffer(image::load_from_memory_with_format(bytes, image::ImageFormat::Png))
}

pub fn encode_png(image: &ImageBuffer) -> Vec<u8> {
    let raw: Vec<u8> = image.pixels().iter().map(|v| (v * 255.0).round() as u8).collect();
    let buf = image::RgbImage::from_raw(image.width() as u32, image.height() as u32, raw)
        .expect("buffer length matches dimensions");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .expect("in-memory PNG encoding cannot fail");
    out.into_inner()
}

pub fn load_png(path: impl AsRef<Path>) -> Result<ImageBuffer, ImageError> {
    decode_png(&std::fs::read(path)?)
}

/// PNG or JPEG, chosen by content.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer, ImageError> {
    to_buffer(image::load_from_memory(&std::fs::read(path)?))
}

pub fn save_png(image: &ImageBuffer, path: impl AsRef<Path>) -> Result<(), ImageError> {
    std::fs::write(path, encode_png(image))?;
    Ok(())
}

/// Binary PGM (`P5`, maxval 65535, big-endian samples) of a map whose values
/// lie in `[0, 1]`; each sample is `round(v * 65535)`.
pub fn encode_pgm16(map: &SaliencyMap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", map.width(), map.height()).into_bytes();
    out.reserve(map.values().len() * 2);
    for v in map.values() {
        let s = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

/// Reads a binary PGM (8- or 16-bit) into a map with values `sample / maxval`.
pub fn decode_pgm(bytes: &[u8]) -> Result<SaliencyMap, ImageError> {
    let bad = |msg: &str| ImageError::Decode(format!("PGM: {msg}"));
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
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
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("only binary P5 is supported"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("malformed header number"));
    let (w, h, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval out of range"));
    }
    // Exactly one whitespace byte separates the header from the samples.
    pos += 1;
    let sample_bytes = if maxval > 255 { 2 } else { 1 };
    let data = bytes.get(pos..).unwrap_or_default();
    if data.len() < w * h * sample_bytes {
        return Err(bad("truncated sample data"));
    }
    let values = (0..w * h)
        .map(|i| {
            let s = if sample_bytes == 2 {
                u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as usize
            } else {
                data[i] as usize
            };
            s.min(maxval) as f64 / maxval as f64
        })
        .collect();
    SaliencyMap::new(w, h, values).map_err(|e| ImageError::Decode(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_quantizes_to_8_bit() {
        let img = ImageBuffer::from_fn(3, 2, |r, c| [r as f32 / 2.0, c as f32 / 3.0, 1.0]).unwrap();
        let back = decode_png(&encode_png(&img)).unwrap();
        assert_eq!((back.width(), back.height()), (3, 2));
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert_eq!(*b, (a * 255.0).round() / 255.0);
        }
        // Already-quantized images round-trip exactly.
        assert_eq!(decode_png(&encode_png(&back)).unwrap(), back);
    }

    #[test]
    fn corrupt_png_is_rejected() {
        assert!(matches!(decode_png(b"not a png"), Err(ImageError::Decode(_))));
    }

    #[test]
    fn pgm16_round_trip() {
        let map = SaliencyMap::new(3, 2, vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.0 / 3.0]).unwrap();
        let bytes = encode_pgm16(&map);
        assert!(bytes.starts_with(b"P5\n3 2\n65535\n"));
        let back = decode_pgm(&bytes).unwrap();
        for (a, b) in map.values().iter().zip(back.values()) {
            assert_eq!(*b, (a * 65535.0).round() / 65535.0);
        }
    }

    #[test]
    fn pgm8_with_comment() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255]);
        let map = decode_pgm(&bytes).unwrap();
        assert_eq!(map.values(), &[0.0, 1.0]);
    }

    #[test]
    fn truncated_pgm() {
        let mut bytes = encode_pgm16(&SaliencyMap::new(2, 2, vec![0.5; 4]).unwrap());
        bytes.truncate(bytes.len() - 1);
        assert!(decode_pgm(&bytes).is_err());
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
    }
}
