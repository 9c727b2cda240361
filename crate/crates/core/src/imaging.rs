//! 8-bit raster images: decoding, encoding, luma conversion and bilinear resampling.
//!
//! Every module above this one works on [`RawImage`]: a row-major buffer of
//! 8-bit samples with either one (gray) or three (RGB) interleaved channels.
//! Decoding goes through the `image` crate; sixteen-bit sources are rescaled
//! to eight bits and alpha channels are dropped.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Format(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Format(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::Format(format!(
                "buffer holds {} samples, expected {}",
                data.len(),
                width * height * channels
            )));
        }
        Ok(RawImage {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn from_fn_gray(width: usize, height: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: u8) {
        self.data[(y * self.width + x) * self.channels + c] = value;
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| f64::from(v)).sum::<f64>() / self.data.len() as f64
    }

    /// Bilinear sample of channel `c` at real-valued pixel coordinates where
    /// integer coordinates are pixel centers. Out-of-frame coordinates are
    /// clamped, which replicates the border.
    pub fn sample_bilinear(&self, x: f64, y: f64, c: usize) -> f64 {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let p00 = f64::from(self.get(x0, y0, c));
        let p10 = f64::from(self.get(x1, y0, c));
        let p01 = f64::from(self.get(x0, y1, c));
        let p11 = f64::from(self.get(x1, y1, c));
        let top = p00 + (p10 - p00) * fx;
        let bottom = p01 + (p11 - p01) * fx;
        top + (bottom - top) * fy
    }

    fn to_dynamic(&self) -> DynamicImage {
        let (w, h) = (self.width as u32, self.height as u32);
        match self.channels {
            1 => {
                DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, self.data.clone()).expect("validated buffer"))
            }
            _ => DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, self.data.clone()).expect("validated buffer")),
        }
    }

    fn from_dynamic(img: DynamicImage) -> Result<Self> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let has_color = img.color().has_color();
        if has_color {
            Self::new(w, h, 3, img.to_rgb8().into_raw())
        } else {
            Self::new(w, h, 1, img.to_luma8().into_raw())
        }
    }
}

fn check_format(format: Option<ImageFormat>) -> Result<ImageFormat> {
    match format {
        Some(f @ (ImageFormat::Png | ImageFormat::Pnm)) => Ok(f),
        Some(other) => Err(Error::Format(format!("unsupported image format {other:?}"))),
        None => Err(Error::Format("unrecognized image format".into())),
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<RawImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Decodes PNG or binary PNM bytes, sniffing the format from the content.
pub fn decode_image(bytes: &[u8]) -> Result<RawImage> {
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::Format(e.to_string()))?;
    let format = check_format(reader.format())?;
    let img = image::load_from_memory_with_format(bytes, format).map_err(|e| Error::Format(e.to_string()))?;
    RawImage::from_dynamic(img)
}

/// Writes PNG for `.png` paths and binary PGM/PPM for `.pgm`/`.ppm`/`.pnm`.
pub fn save_image(img: &RawImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = check_format(ImageFormat::from_path(path).ok())?;
    let bytes = encode(img, format)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_png(img: &RawImage) -> Vec<u8> {
    encode(img, ImageFormat::Png).expect("PNG encoding of a validated buffer")
}

fn encode(img: &RawImage, format: ImageFormat) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.to_dynamic()
        .write_to(&mut out, format)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok(out.into_inner())
}

/// Rec. 601 luma of one RGB triple, rounded half away from zero.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b))
        .round()
        .min(255.0) as u8
}

pub fn to_grayscale(img: &RawImage) -> RawImage {
    if img.channels == 1 {
        return img.clone();
    }
    let data = img.data.chunks_exact(3).map(|p| luma(p[0], p[1], p[2])).collect();
    RawImage {
        width: img.width,
        height: img.height,
        channels: 1,
        data,
    }
}

/// Bilinear resampling with center-aligned sample grids: output pixel `x`
/// reads source coordinate `(x + 0.5) * in_w / out_w - 0.5`.
pub fn resize_bilinear(img: &RawImage, width: usize, height: usize) -> Result<RawImage> {
    if width == 0 || height == 0 {
        return Err(Error::Config(format!(
            "resize target must be positive, got {width}x{height}"
        )));
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    let mut data = Vec::with_capacity(width * height * img.channels);
    for y in 0..height {
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..width {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            for c in 0..img.channels {
                let v = img.sample_bilinear(src_x, src_y, c);
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RawImage::new(width, height, img.channels, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_pgm_decodes() {
        let bytes = b"P5\n2 2\n255\n\0\0\0\0";
        let img = decode_image(bytes).unwrap();
        assert_eq!(img, RawImage::new(2, 2, 1, vec![0; 4]).unwrap());
    }

    #[test]
    fn red_ppm_pixel() {
        // P6 header, 1x1, maxval 255, then raw RGB
        let mut bytes = b"P6\n1 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!(img.channels(), 3);
        assert_eq!(&img.data()[0..3], &[255, 0, 0]);
    }

    #[test]
    fn sixteen_bit_pgm_is_rescaled() {
        let mut bytes = b"P5\n2 1\n65535\n".to_vec();
        bytes.extend_from_slice(&[0xff, 0xff, 0x00, 0x00]);
        let img = decode_image(&bytes).unwrap();
        assert_eq!(img.data(), &[255, 0]);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_image("/definitely/not/here.png").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn garbage_is_format_error() {
        let err = decode_image(b"not an image at all").unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let gray = RawImage::from_fn_gray(7, 5, |x, y| (x * 31 + y * 7) as u8).unwrap();
        let rgb = RawImage::new(3, 2, 3, (0..18).map(|v| v * 13).collect()).unwrap();
        for (img, name) in [(&gray, "g.png"), (&gray, "g.pgm"), (&rgb, "c.png"), (&rgb, "c.ppm")] {
            let p = dir.path().join(name);
            save_image(img, &p).unwrap();
            assert_eq!(&load_image(&p).unwrap(), img, "{name}");
        }
    }

    #[test]
    fn luma_examples() {
        assert_eq!(luma(255, 255, 255), 255);
        assert_eq!(luma(0, 0, 0), 0);
        assert_eq!(luma(255, 0, 0), 76);
    }

    #[test]
    fn gray_input_passes_through() {
        let img = RawImage::from_fn_gray(3, 3, |x, _| x as u8).unwrap();
        assert_eq!(to_grayscale(&img), img);
    }

    #[test]
    fn resize_examples() {
        let img = RawImage::new(2, 1, 1, vec![0, 255]).unwrap();
        assert_eq!(resize_bilinear(&img, 3, 1).unwrap().data(), &[0, 128, 255]);

        let flat = RawImage::filled(5, 4, 3, 128).unwrap();
        let out = resize_bilinear(&flat, 13, 2).unwrap();
        assert!(out.data().iter().all(|&v| v == 128));

        assert_eq!(resize_bilinear(&flat, 5, 4).unwrap(), flat);
        assert!(resize_bilinear(&flat, 0, 4).is_err());
    }

    #[test]
    fn invalid_buffers_rejected() {
        assert!(RawImage::new(0, 1, 1, vec![]).is_err());
        assert!(RawImage::new(2, 2, 1, vec![0; 3]).is_err());
        assert!(RawImage::new(1, 1, 2, vec![0; 2]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(10_000))]
            #[test]
            fn grayscale_within_one_of_exact(r: u8, g: u8, b: u8) {
                let exact = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
                prop_assert!((f64::from(luma(r, g, b)) - exact).abs() <= 1.0);
            }
        }

        proptest! {
            #[test]
            fn resize_stays_in_input_range(
                (w, h, data) in (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
                    (Just(w), Just(h), proptest::collection::vec(any::<u8>(), w * h))
                }),
                tw in 1usize..20, th in 1usize..20,
            ) {
                let lo = *data.iter().min().unwrap();
                let hi = *data.iter().max().unwrap();
                let img = RawImage::new(w, h, 1, data).unwrap();
                let out = resize_bilinear(&img, tw, th).unwrap();
                prop_assert!(out.data().iter().all(|&v| v >= lo && v <= hi));
            }
        }
    }
}
