//! Lossless PNG encoding of images and planes.
//!
//! Planes are 8-bit grayscale. Value mappings:
//!
//! | plane  | encode                     | decode                                   |
//! |--------|----------------------------|------------------------------------------|
//! | mask   | true → 255, false → 0      | byte ≥ 128 → true                        |
//! | trimap | 0 → 0, 0.5 → 128, 1 → 255  | nearest of {0, 128, 255}, ties round up  |
//! | alpha  | round-half-up(v · 255)     | byte / 255                               |

use std::io::Cursor;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage, RgbaImage};

use crate::error::{Error, Result};
use crate::raster::{AlphaMatte, BinaryMask, Label, RasterImage, Trimap};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaneKind {
    Mask,
    Trimap,
    Alpha,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecodedPlane<T> {
    Mask(BinaryMask),
    Trimap(Trimap),
    Alpha(AlphaMatte<T>),
}

fn load(bytes: &[u8]) -> Result<DynamicImage> {
    image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| match e {
        image::ImageError::Unsupported(u) => Error::UnsupportedFormat(u.to_string()),
        other => Error::Codec(other.to_string()),
    })
}

fn load_gray(bytes: &[u8]) -> Result<GrayImage> {
    match load(bytes)? {
        DynamicImage::ImageLuma8(g) => Ok(g),
        other => Err(Error::UnsupportedFormat(format!(
            "planes must be 8-bit grayscale, got {:?}",
            other.color()
        ))),
    }
}

fn write_png(img: DynamicImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    out.into_inner()
}

fn dims_u32(w: usize, h: usize) -> (u32, u32) {
    (
        u32::try_from(w).expect("width fits u32"),
        u32::try_from(h).expect("height fits u32"),
    )
}

pub fn decode_plane<T: Scalar>(bytes: &[u8], kind: PlaneKind) -> Result<DecodedPlane<T>> {
    Ok(match kind {
        PlaneKind::Mask => DecodedPlane::Mask(decode_mask(bytes)?),
        PlaneKind::Trimap => DecodedPlane::Trimap(decode_trimap(bytes)?),
        PlaneKind::Alpha => DecodedPlane::Alpha(decode_alpha(bytes)?),
    })
}

pub fn encode_plane<T: Scalar>(plane: &DecodedPlane<T>) -> Vec<u8> {
    match plane {
        DecodedPlane::Mask(m) => encode_mask(m),
        DecodedPlane::Trimap(t) => encode_trimap(t),
        DecodedPlane::Alpha(a) => encode_alpha(a),
    }
}

pub fn decode_mask(bytes: &[u8]) -> Result<BinaryMask> {
    let g = load_gray(bytes)?;
    let (w, h) = (g.width() as usize, g.height() as usize);
    BinaryMask::new(w, h, g.into_raw().into_iter().map(|b| b >= 128).collect())
}

pub fn trimap_label_of_byte(b: u8) -> Label {
    match b {
        0..=63 => Label::Background,
        64..=191 => Label::Unknown,
        _ => Label::Foreground,
    }
}

pub fn trimap_byte(l: Label) -> u8 {
    match l {
        Label::Background => 0,
        Label::Unknown => 128,
        Label::Foreground => 255,
    }
}

pub fn decode_trimap(bytes: &[u8]) -> Result<Trimap> {
    let g = load_gray(bytes)?;
    let (w, h) = (g.width() as usize, g.height() as usize);
    Trimap::new(w, h, g.into_raw().into_iter().map(trimap_label_of_byte).collect())
}

pub fn decode_alpha<T: Scalar>(bytes: &[u8]) -> Result<AlphaMatte<T>> {
    let g = load_gray(bytes)?;
    let (w, h) = (g.width() as usize, g.height() as usize);
    let scale = T::of(255.0);
    AlphaMatte::new(
        w,
        h,
        g.into_raw().into_iter().map(|b| T::of(b as f64) / scale).collect(),
    )
}

/// Round-half-up quantization of a unit value to a byte.
pub fn quantize<T: Scalar>(v: T) -> u8 {
    let scaled = v.clamp_unit().as_f64() * 255.0;
    (scaled + 0.5).floor().min(255.0) as u8
}

pub fn encode_mask(m: &BinaryMask) -> Vec<u8> {
    let (w, h) = dims_u32(m.width(), m.height());
    let raw = m.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_png(DynamicImage::ImageLuma8(
        GrayImage::from_raw(w, h, raw).expect("buffer size"),
    ))
}

pub fn encode_trimap(t: &Trimap) -> Vec<u8> {
    let (w, h) = dims_u32(t.width(), t.height());
    let raw = t.labels().iter().map(|&l| trimap_byte(l)).collect();
    write_png(DynamicImage::ImageLuma8(
        GrayImage::from_raw(w, h, raw).expect("buffer size"),
    ))
}

pub fn encode_alpha<T: Scalar>(a: &AlphaMatte<T>) -> Vec<u8> {
    let (w, h) = dims_u32(a.width(), a.height());
    let raw = a.values().iter().map(|&v| quantize(v)).collect();
    write_png(DynamicImage::ImageLuma8(
        GrayImage::from_raw(w, h, raw).expect("buffer size"),
    ))
}

/// Decodes an 8-bit PNG (gray, gray+alpha, RGB or RGBA) into an RGB raster.
/// Any source alpha channel is discarded.
pub fn decode_image<T: Scalar>(bytes: &[u8]) -> Result<RasterImage<T>> {
    let rgb = match load(bytes)? {
        img @ (DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgb8(_)
        | DynamicImage::ImageRgba8(_)) => img.to_rgb8(),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "images must be 8 bits per channel, got {:?}",
                other.color()
            )))
        }
    };
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let scale = T::of(255.0);
    let pixels = rgb
        .pixels()
        .map(|p| [0, 1, 2].map(|c| T::of(p.0[c] as f64) / scale))
        .collect();
    RasterImage::new(w, h, pixels)
}

pub fn encode_image<T: Scalar>(img: &RasterImage<T>) -> Vec<u8> {
    let (w, h) = dims_u32(img.width(), img.height());
    let raw = img.pixels().iter().flat_map(|p| p.map(quantize)).collect();
    write_png(DynamicImage::ImageRgb8(
        RgbImage::from_raw(w, h, raw).expect("buffer size"),
    ))
}

/// RGBA cutout: image colors with the matte as the alpha channel.
pub fn encode_cutout<T: Scalar>(img: &RasterImage<T>, alpha: &AlphaMatte<T>) -> Result<Vec<u8>> {
    crate::raster::ensure_same_dims(img.dims(), alpha.dims(), "cutout")?;
    let (w, h) = dims_u32(img.width(), img.height());
    let raw = img
        .pixels()
        .iter()
        .zip(alpha.values())
        .flat_map(|(p, &a)| {
            let [r, g, b] = p.map(quantize);
            [r, g, b, quantize(a)]
        })
        .collect();
    Ok(write_png(DynamicImage::ImageRgba8(
        RgbaImage::from_raw(w, h, raw).expect("buffer size"),
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{ImageBuffer, Luma};

    fn gray_png(w: u32, h: u32, raw: Vec<u8>) -> Vec<u8> {
        write_png(DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, raw).unwrap()))
    }

    #[test]
    fn trimap_bytes_map_to_labels() {
        let t = decode_trimap(&gray_png(3, 1, vec![0, 128, 255])).unwrap();
        assert_eq!(t.labels(), &[Label::Background, Label::Unknown, Label::Foreground]);
    }

    #[test]
    fn trimap_nearest_value_rule() {
        assert_eq!(trimap_label_of_byte(100), Label::Unknown);
        assert_eq!(trimap_label_of_byte(63), Label::Background);
        // 64 is equidistant from 0 and 128: ties round up.
        assert_eq!(trimap_label_of_byte(64), Label::Unknown);
        assert_eq!(trimap_label_of_byte(191), Label::Unknown);
        assert_eq!(trimap_label_of_byte(192), Label::Foreground);
        for b in 0..=255u8 {
            let l = trimap_label_of_byte(b);
            let d = |t: u8| (b as i32 - t as i32).abs();
            let best = [0u8, 128, 255].into_iter().map(d).min().unwrap();
            assert_eq!(d(trimap_byte(l)), best, "byte {b}");
        }
    }

    #[test]
    fn alpha_quantization() {
        assert_eq!(quantize(0.5f64), 128);
        assert_eq!(quantize(1.0f64), 255);
        assert_eq!(quantize(0.0f32), 0);
        let a = decode_alpha::<f64>(&gray_png(1, 1, vec![255])).unwrap();
        assert_eq!(a.values(), &[1.0]);
        let half = AlphaMatte::filled(1, 1, 0.5f64).unwrap();
        let back = decode_alpha::<f64>(&encode_alpha(&half)).unwrap();
        assert_eq!(back.values(), &[128.0 / 255.0]);
    }

    #[test]
    fn trimap_encodes_to_fixed_bytes() {
        let t = Trimap::new(3, 1, vec![Label::Background, Label::Unknown, Label::Foreground]).unwrap();
        let g = load_gray(&encode_trimap(&t)).unwrap();
        assert_eq!(g.into_raw(), vec![0, 128, 255]);
    }

    #[test]
    fn mask_threshold() {
        let m = decode_mask(&gray_png(4, 1, vec![0, 127, 128, 255])).unwrap();
        assert_eq!(m.bits(), &[false, false, true, true]);
    }

    #[test]
    fn rejects_garbage_and_wide_planes() {
        assert!(matches!(decode_mask(b"not a png"), Err(Error::Codec(_))));
        let wide: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(2, 1, vec![0, 65535]).unwrap();
        let bytes = write_png(DynamicImage::ImageLuma16(wide));
        assert!(matches!(decode_trimap(&bytes), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(decode_image::<f64>(&bytes), Err(Error::UnsupportedFormat(_))));
        let rgb = encode_image(&RasterImage::<f64>::filled(2, 2, [0.2, 0.4, 0.6]).unwrap());
        assert!(matches!(decode_alpha::<f64>(&rgb), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn image_roundtrip_and_cutout() {
        let img = RasterImage::<f64>::from_fn(5, 4, |x, y| [x as f64 / 4.0, y as f64 / 3.0, 1.0]).unwrap();
        let back = decode_image::<f64>(&encode_image(&img)).unwrap();
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() <= 1.0 / 510.0);
            }
        }
        let alpha = AlphaMatte::filled(5, 4, 0.5).unwrap();
        let cut = image::load_from_memory(&encode_cutout(&img, &alpha).unwrap()).unwrap();
        assert_eq!(cut.color(), image::ColorType::Rgba8);
        assert!(cut.to_rgba8().pixels().all(|p| p.0[3] == 128));
    }
}
