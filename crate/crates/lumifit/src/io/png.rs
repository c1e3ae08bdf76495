//! 8-bit PNG import/export for LDR maps and tonemapped previews.
//! Values map to [0, 1] by /255 on read; writes quantize with round(255 x)
//! after clipping.

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use image::{ColorType, DynamicImage, ImageReader};
use std::path::Path;

pub fn read_png(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)?;
    let decoded = reader
        .decode()
        .map_err(|e| Error::format(format!("png decode failed: {e}")).with_path(path))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    match decoded {
        DynamicImage::ImageLuma8(img) => {
            let data = img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
            ImageBuffer::new(w, h, 1, data)
        }
        DynamicImage::ImageRgb8(img) => {
            let data = img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
            ImageBuffer::new(w, h, 3, data)
        }
        other => Err(Error::format(format!(
            "unsupported PNG color type {:?}; expected 8-bit gray or RGB",
            other.color()
        ))
        .with_path(path)),
    }
}

pub fn write_png(image: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let quantized: Vec<u8> = image
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let color = match image.channels() {
        1 => ColorType::L8,
        3 => ColorType::Rgb8,
        c => return Err(Error::input(format!("PNG export supports 1 or 3 channels, not {c}"))),
    };
    image::save_buffer(
        path.as_ref(),
        &quantized,
        image.width() as u32,
        image.height() as u32,
        color,
    )
    .map_err(|e| Error::format(format!("png encode failed: {e}")).with_path(path.as_ref()))
}
