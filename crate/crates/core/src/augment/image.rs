use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit raster, row-major with interleaved channels.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Contract(format!(
                "image extents must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Contract(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::Contract(format!(
                "{height}x{width}x{channels} image needs {} bytes, got {}",
                height * width * channels,
                pixels.len()
            )));
        }
        Ok(Image {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[u8] {
        let i = (row * self.width + col) * self.channels;
        &self.pixels[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [u8] {
        let i = (row * self.width + col) * self.channels;
        &mut self.pixels[i..i + self.channels]
    }

    /// Binary PPM (`P6`) for colour images, PGM (`P5`) for grayscale.
    pub fn to_pnm(&self) -> Vec<u8> {
        let magic = if self.channels == 3 { "P6" } else { "P5" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pnm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Format("truncated PPM header".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        let channels = match fields[0].as_str() {
            "P6" => 3,
            "P5" => 1,
            other => return Err(Error::Format(format!("unsupported image magic {other:?}"))),
        };
        let parse = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad PPM {what} {s:?}")))
        };
        let width = parse(&fields[1], "width")?;
        let height = parse(&fields[2], "height")?;
        if parse(&fields[3], "maxval")? != 255 {
            return Err(Error::Format("only 8-bit PPM (maxval 255) is supported".into()));
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let need = width * height * channels;
        let raster = bytes.get(pos..).unwrap_or_default();
        if raster.len() < need || width == 0 || height == 0 {
            return Err(Error::Format(format!(
                "PPM raster truncated: need {need} bytes, found {}",
                raster.len()
            )));
        }
        Image::new(height, width, channels, raster[..need].to_vec())
    }

    pub fn read_pnm(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pnm(&bytes)
    }

    pub fn write_pnm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_pnm()).map_err(|e| Error::io(path, e))
    }

    /// Tiles equally sized images into a grid, row-major.
    pub fn tile(panels: &[Image], columns: usize) -> Result<Image> {
        let first = panels
            .first()
            .ok_or_else(|| Error::Contract("cannot tile zero images".into()))?;
        let (h, w, c) = (first.height, first.width, first.channels);
        if panels.iter().any(|p| (p.height, p.width, p.channels) != (h, w, c)) {
            return Err(Error::Contract("tiled images must share dimensions".into()));
        }
        let columns = columns.max(1);
        let rows = panels.len().div_ceil(columns);
        let mut out = Image::filled(rows * h, columns * w, c, 0)?;
        for (k, panel) in panels.iter().enumerate() {
            let (pr, pc) = (k / columns, k % columns);
            for r in 0..h {
                let dst = ((pr * h + r) * out.width + pc * w) * c;
                let src = r * w * c;
                out.pixels[dst..dst + w * c].copy_from_slice(&panel.pixels[src..src + w * c]);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pnm_round_trip() {
        let img = Image::new(2, 3, 3, (0..18).collect()).unwrap();
        assert_eq!(Image::from_pnm(&img.to_pnm()).unwrap(), img);
        let gray = Image::new(2, 2, 1, vec![1, 2, 3, 4]).unwrap();
        assert_eq!(Image::from_pnm(&gray.to_pnm()).unwrap(), gray);
    }

    #[test]
    fn pnm_header_comments() {
        let mut bytes = b"P6\n# made by hand\n1 1\n255\n".to_vec();
        bytes.extend([9, 8, 7]);
        assert_eq!(Image::from_pnm(&bytes).unwrap().pixels(), &[9, 8, 7]);
    }

    #[test]
    fn corrupt_pnm_is_format_error() {
        assert!(matches!(Image::from_pnm(b"P3\n1 1\n255\n"), Err(Error::Format(_))));
        assert!(matches!(Image::from_pnm(b"P6\n4 4\n255\n\x01\x02"), Err(Error::Format(_))));
        assert!(matches!(Image::from_pnm(b"P6\n4"), Err(Error::Format(_))));
        assert!(matches!(Image::from_pnm(b"hello world"), Err(Error::Format(_))));
    }

    #[test]
    fn tiling_places_panels() {
        let a = Image::filled(1, 1, 1, 10).unwrap();
        let b = Image::filled(1, 1, 1, 20).unwrap();
        let t = Image::tile(&[a.clone(), b, a], 2).unwrap();
        assert_eq!((t.height(), t.width()), (2, 2));
        assert_eq!(t.pixels(), &[10, 20, 10, 0]);
    }
}
