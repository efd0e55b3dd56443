//! Dense `H × W × C` float images plus PNG and raw `GSIM` codecs.

use std::io::Cursor;

use crate::error::{Error, Result};

/// Row-major, channel-interleaved float image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Image { height, width, channels, data: vec![0.0; height * width * channels] }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{} values for a {height}×{width}×{channels} image",
                data.len()
            )));
        }
        Ok(Image { height, width, channels, data })
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let at = (y * self.width + x) * self.channels;
        &self.data[at..at + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [f64] {
        let at = (y * self.width + x) * self.channels;
        &mut self.data[at..at + self.channels]
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Encodes an RGB image as 8-bit PNG (values clamped to [0, 1]).
    pub fn to_png(&self) -> Result<Vec<u8>> {
        if self.channels != 3 {
            return Err(Error::Shape(format!("PNG output needs 3 channels, got {}", self.channels)));
        }
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().map_err(|e| Error::Codec(e.to_string()))?;
            w.write_image_data(&bytes).map_err(|e| Error::Codec(e.to_string()))?;
        }
        Ok(out)
    }

    /// Decodes a PNG into an RGB image in [0, 1]. Gray and alpha inputs are
    /// expanded or dropped; 16-bit inputs are reduced to 8 bits.
    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let mut dec = png::Decoder::new(Cursor::new(bytes));
        dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = dec.read_info().map_err(|e| Error::Codec(e.to_string()))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| Error::Codec("PNG too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader.next_frame(&mut buf).map_err(|e| Error::Codec(e.to_string()))?;
        let (w, h) = (info.width as usize, info.height as usize);
        let src_c = match info.color_type {
            png::ColorType::Grayscale => 1,
            png::ColorType::GrayscaleAlpha => 2,
            png::ColorType::Rgb => 3,
            png::ColorType::Rgba => 4,
            png::ColorType::Indexed => return Err(Error::Codec("unexpanded indexed PNG".into())),
        };
        let mut data = Vec::with_capacity(w * h * 3);
        for px in buf[..info.buffer_size()].chunks_exact(src_c) {
            let rgb = if src_c < 3 { [px[0]; 3] } else { [px[0], px[1], px[2]] };
            data.extend(rgb.iter().map(|&v| v as f64 / 255.0));
        }
        Image::from_vec(h, w, 3, data)
    }

    /// Raw float image: magic `GSIM`, H u32, W u32, C u16, f32 LE row-major.
    pub fn to_gsim(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(14 + self.data.len() * 4);
        out.extend_from_slice(b"GSIM");
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.channels as u16).to_le_bytes());
        for &v in &self.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_gsim(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 14 || &bytes[..4] != b"GSIM" {
            return Err(Error::Format("not a GSIM image".into()));
        }
        let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let c = u16::from_le_bytes(bytes[12..14].try_into().unwrap()) as usize;
        let body = &bytes[14..];
        if body.len() != h * w * c * 4 {
            return Err(Error::Format("GSIM payload length mismatch".into()));
        }
        let data = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        Image::from_vec(h, w, c, data)
    }
}
