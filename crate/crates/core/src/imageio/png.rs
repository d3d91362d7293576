use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use super::maps::{
    decode_normal_map, encode_normal_map, AlphaMask, BitDepth, IntRaster, NormalMap, RgbImage,
};
use crate::error::{Error, Result};
use crate::real::Real;

fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_raster_png(path: impl AsRef<Path>) -> Result<IntRaster> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let (channels, depth, data): (usize, BitDepth, Vec<u16>) = match img {
        DynamicImage::ImageRgb8(b) => (3, BitDepth::Eight, b.into_raw().into_iter().map(u16::from).collect()),
        DynamicImage::ImageRgb16(b) => (3, BitDepth::Sixteen, b.into_raw()),
        DynamicImage::ImageLuma8(b) => (1, BitDepth::Eight, b.into_raw().into_iter().map(u16::from).collect()),
        DynamicImage::ImageLuma16(b) => (1, BitDepth::Sixteen, b.into_raw()),
        DynamicImage::ImageLumaA8(b) => (2, BitDepth::Eight, b.into_raw().into_iter().map(u16::from).collect()),
        DynamicImage::ImageLumaA16(b) => (2, BitDepth::Sixteen, b.into_raw()),
        DynamicImage::ImageRgba8(b) => (4, BitDepth::Eight, b.into_raw().into_iter().map(u16::from).collect()),
        DynamicImage::ImageRgba16(b) => (4, BitDepth::Sixteen, b.into_raw()),
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported pixel layout {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    Ok(IntRaster {
        width,
        height,
        channels,
        depth,
        data,
    })
}

pub fn write_raster_png(r: &IntRaster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (r.width as u32, r.height as u32);
    let res = match (r.channels, r.depth) {
        (3, BitDepth::Eight) => {
            let raw: Vec<u8> = r.data.iter().map(|&v| v as u8).collect();
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).map(|b| b.save(path))
        }
        (3, BitDepth::Sixteen) => {
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, r.data.clone()).map(|b| b.save(path))
        }
        (1, BitDepth::Eight) => {
            let raw: Vec<u8> = r.data.iter().map(|&v| v as u8).collect();
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw).map(|b| b.save(path))
        }
        (1, BitDepth::Sixteen) => {
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, r.data.clone()).map(|b| b.save(path))
        }
        (c, _) => return Err(Error::Format(format!("cannot write {c}-channel raster"))),
    };
    match res {
        Some(r) => r.map_err(|e| image_err(path, e)),
        None => Err(Error::Format("raster buffer size mismatch".into())),
    }
}

pub fn read_normal_png<T: Real>(path: impl AsRef<Path>) -> Result<NormalMap<T>> {
    let path = path.as_ref();
    decode_normal_map(&read_raster_png(path)?).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        e => e,
    })
}

pub fn write_normal_png<T: Real>(
    n: &NormalMap<T>,
    depth: BitDepth,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_raster_png(&encode_normal_map(n, depth), path)
}

pub fn read_rgb_png<T: Real>(path: impl AsRef<Path>) -> Result<RgbImage<T>> {
    let r = read_raster_png(path.as_ref())?;
    RgbImage::from_raster(&r)
}

pub fn write_rgb_png<T: Real>(img: &RgbImage<T>, path: impl AsRef<Path>) -> Result<()> {
    write_raster_png(&img.to_raster(BitDepth::Eight), path)
}

/// Single-channel 8-bit mask, `round(255 * a)`.
pub fn write_mask_png<T: Real>(m: &AlphaMask<T>, path: impl AsRef<Path>) -> Result<()> {
    let data = m
        .data
        .iter()
        .map(|a| (a.clamp01().as_f64() * 255.0).round() as u16)
        .collect();
    write_raster_png(
        &IntRaster {
            width: m.width,
            height: m.height,
            channels: 1,
            depth: BitDepth::Eight,
            data,
        },
        path,
    )
}

pub fn write_gray16_png(width: usize, height: usize, data: &[u16], path: impl AsRef<Path>) -> Result<()> {
    write_raster_png(
        &IntRaster {
            width,
            height,
            channels: 1,
            depth: BitDepth::Sixteen,
            data: data.to_vec(),
        },
        path,
    )
}
