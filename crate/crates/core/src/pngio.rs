//! 8-bit PNG image I/O. Intensities map to floats as `v / 255`; writing
//! rounds `v * 255` to the nearest integer after clamping to [0, 1].

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::types::Image;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

pub fn read_png(path: impl AsRef<Path>) -> Result<Image> {
    let file = File::open(path.as_ref()).map_err(|e| {
        Error::format(format!("cannot open image {}: {e}", path.as_ref().display()))
    })?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(format!("bad png: {e}")))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(format!("bad png frame: {e}")))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format("only 8-bit png images are supported"));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        other => {
            return Err(Error::format(format!("unsupported png color type {other:?}")));
        }
    };
    let mut t = Tensor::zeros(&[h, w, 3]);
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * channels;
            let (r, g, b) = match channels {
                3 | 4 => (buf[base], buf[base + 1], buf[base + 2]),
                _ => (buf[base], buf[base], buf[base]),
            };
            t.set3(y, x, 0, r as f64 / 255.0);
            t.set3(y, x, 1, g as f64 / 255.0);
            t.set3(y, x, 2, b as f64 / 255.0);
        }
    }
    Image::new(t)
}

pub fn write_png(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    let (h, w, _) = image.tensor().dims3();
    let file = File::create(path.as_ref()).map_err(|e| {
        Error::format(format!(
            "cannot create image {}: {e}",
            path.as_ref().display()
        ))
    })?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::format(format!("png header: {e}")))?;
    let mut data = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = image.tensor().at3(y, x, c).clamp(0.0, 1.0);
                data.push((v * 255.0).round() as u8);
            }
        }
    }
    writer
        .write_image_data(&data)
        .map_err(|e| Error::format(format!("png payload: {e}")))?;
    Ok(())
}

/// Quantizes an arbitrary tensor image to the 8-bit grid (what a PNG
/// write-read roundtrip produces), clamping to the displayable range.
pub fn quantize_to_u8_grid(t: &Tensor) -> Tensor {
    t.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
}
