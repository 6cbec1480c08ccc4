//! Linear-RGB image buffers and binary PPM (P6) interchange.

use std::fs;
use std::path::Path;

use crate::math::Vec3;
use crate::{Error, Result};

/// Row-major RGB image, top row first, linear values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        ImageBuffer {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, color: Vec3) -> Self {
        let mut img = ImageBuffer::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(color.as_slice());
        }
        img
    }

    /// Wraps interleaved RGB values; they must be finite and within `[0, 1]`.
    pub fn from_rgb(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::param(format!(
                "{} values for a {width}x{height} RGB image",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::param(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(ImageBuffer {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> Vec3 {
        let i = 3 * (y * self.width + x);
        Vec3::new(self.data[i], self.data[i + 1], self.data[i + 2])
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, c: Vec3) {
        let i = 3 * (y * self.width + x);
        for k in 0..3 {
            self.data[i + k] = c[k].clamp(0.0, 1.0);
        }
    }

    /// Luminance-free brightness: the channel sum of a pixel.
    pub fn intensity(&self, x: usize, y: usize) -> f64 {
        self.pixel(x, y).sum()
    }

    pub(crate) fn same_size(&self, other: &ImageBuffer) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(self.width, self.height, other.width, other.height));
        }
        Ok(())
    }

    /// Encodes as binary PPM with `round(clamp(v, 0, 1) * 255)`, halves rounded up.
    pub fn to_ppm(&self) -> Vec<u8> {
        let header = format!("P6\n{} {}\n255\n", self.width, self.height);
        let mut out = Vec::with_capacity(header.len() + self.data.len());
        out.extend_from_slice(header.as_bytes());
        out.extend(self.data.iter().map(|v| to_byte(*v)));
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut token = |bytes: &[u8]| -> Result<String> {
            while pos < bytes.len() {
                match bytes[pos] {
                    b'#' => {
                        while pos < bytes.len() && bytes[pos] != b'\n' {
                            pos += 1;
                        }
                    }
                    c if c.is_ascii_whitespace() => pos += 1,
                    _ => break,
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::MalformedImage("truncated header".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        if token(bytes)? != "P6" {
            return Err(Error::MalformedImage("expected P6 magic".into()));
        }
        let mut number = |name: &str| -> Result<usize> {
            let t = token(bytes)?;
            t.parse()
                .map_err(|_| Error::MalformedImage(format!("bad {name} {t:?}")))
        };
        let width = number("width")?;
        let height = number("height")?;
        let maxval = number("maxval")?;
        if maxval != 255 {
            return Err(Error::MalformedImage(format!("maxval {maxval}, only 255 is supported")));
        }
        // Exactly one whitespace byte separates the header from the raster.
        let body = pos + 1;
        let need = width * height * 3;
        if bytes.len() < body || bytes.len() - body != need {
            return Err(Error::MalformedImage(format!(
                "expected {need} raster bytes, found {}",
                bytes.len().saturating_sub(body)
            )));
        }
        let data = bytes[body..].iter().map(|b| *b as f64 / 255.0).collect();
        Ok(ImageBuffer {
            width,
            height,
            data,
        })
    }

    pub fn save_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }

    pub fn load_ppm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        ImageBuffer::from_ppm(&bytes)
    }
}

pub fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    img.save_ppm(path)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    ImageBuffer::load_ppm(path)
}
