//! 8-bit raster types and PNG I/O.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Two-dimensional 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub pixels: Array2<u8>,
}

impl GrayImage {
    pub fn new(pixels: Array2<u8>) -> Result<Self> {
        let (r, c) = pixels.dim();
        if r < 2 || c < 2 {
            return Err(Error::InvalidInput(format!(
                "image must be at least 2x2, got {r}x{c}"
            )));
        }
        Ok(Self { pixels })
    }

    pub fn rows(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn cols(&self) -> usize {
        self.pixels.ncols()
    }

    /// Conversion to a float field in [0, 255].
    pub fn to_f64(&self) -> Array2<f64> {
        self.pixels.mapv(|v| v as f64)
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
            .to_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let pixels = Array2::from_shape_fn((h, w), |(r, c)| img.get_pixel(c as u32, r as u32)[0]);
        Self::new(pixels)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let (r, c) = self.pixels.dim();
        let mut img = image::GrayImage::new(c as u32, r as u32);
        for ((row, col), &v) in self.pixels.indexed_iter() {
            img.put_pixel(col as u32, row as u32, image::Luma([v]));
        }
        img.save(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

/// RGB raster stored as three planes so channel-local operations stay cheap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub red: Array2<u8>,
    pub green: Array2<u8>,
    pub blue: Array2<u8>,
}

/// Which plane (or reduction) to read from an RGB image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelSelect {
    Red,
    Green,
    Blue,
    /// Per-pixel mean of the three channels, rounded.
    Gray,
}

impl RgbImage {
    pub fn new(red: Array2<u8>, green: Array2<u8>, blue: Array2<u8>) -> Result<Self> {
        if red.dim() != green.dim() || red.dim() != blue.dim() {
            return Err(Error::Dimension("RGB planes must share dimensions".into()));
        }
        let (r, c) = red.dim();
        if r < 2 || c < 2 {
            return Err(Error::InvalidInput(format!(
                "image must be at least 2x2, got {r}x{c}"
            )));
        }
        Ok(Self { red, green, blue })
    }

    pub fn rows(&self) -> usize {
        self.red.nrows()
    }

    pub fn cols(&self) -> usize {
        self.red.ncols()
    }

    pub fn channel(&self, sel: ChannelSelect) -> GrayImage {
        let plane = match sel {
            ChannelSelect::Red => self.red.clone(),
            ChannelSelect::Green => self.green.clone(),
            ChannelSelect::Blue => self.blue.clone(),
            ChannelSelect::Gray => {
                let mut out = Array2::zeros(self.red.dim());
                ndarray::Zip::from(&mut out)
                    .and(&self.red)
                    .and(&self.green)
                    .and(&self.blue)
                    .for_each(|o, &r, &g, &b| {
                        *o = ((r as u16 + g as u16 + b as u16 + 1) / 3).min(255) as u8;
                    });
                out
            }
        };
        GrayImage { pixels: plane }
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut red = Array2::zeros((h, w));
        let mut green = Array2::zeros((h, w));
        let mut blue = Array2::zeros((h, w));
        for r in 0..h {
            for c in 0..w {
                let p = img.get_pixel(c as u32, r as u32);
                red[[r, c]] = p[0];
                green[[r, c]] = p[1];
                blue[[r, c]] = p[2];
            }
        }
        Self::new(red, green, blue)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let (rows, cols) = self.red.dim();
        let mut img = image::RgbImage::new(cols as u32, rows as u32);
        for r in 0..rows {
            for c in 0..cols {
                img.put_pixel(
                    c as u32,
                    r as u32,
                    image::Rgb([self.red[[r, c]], self.green[[r, c]], self.blue[[r, c]]]),
                );
            }
        }
        img.save(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

/// Affine map of a float field onto [0, 255] with rounding.
///
/// A constant field maps to 0.
pub fn quantize_to_u8(field: &Array2<f64>) -> Array2<u8> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in field.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        return Array2::zeros(field.dim());
    }
    field.mapv(|v| (255.0 * (v - lo) / (hi - lo)).round().clamp(0.0, 255.0) as u8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let img = GrayImage::new(array![[0u8, 128], [255, 7]]).unwrap();
        img.write_png(&path).unwrap();
        assert_eq!(GrayImage::read_png(&path).unwrap(), img);

        let rgb = RgbImage::new(
            array![[1u8, 2], [3, 4]],
            array![[5u8, 6], [7, 8]],
            array![[9u8, 10], [11, 12]],
        )
        .unwrap();
        let path = dir.path().join("rgb.png");
        rgb.write_png(&path).unwrap();
        assert_eq!(RgbImage::read_png(&path).unwrap(), rgb);
    }

    #[test]
    fn tiny_images_rejected() {
        assert!(GrayImage::new(Array2::zeros((1, 5))).is_err());
    }

    #[test]
    fn quantize_constant_field() {
        let f = Array2::from_elem((4, 4), 3.5);
        assert!(quantize_to_u8(&f).iter().all(|&v| v == 0));
    }

    #[test]
    fn channel_selection() {
        let rgb = RgbImage::new(
            array![[10u8, 20], [30, 40]],
            array![[50u8, 60], [70, 80]],
            array![[90u8, 100], [110, 120]],
        )
        .unwrap();
        assert_eq!(rgb.channel(ChannelSelect::Red).pixels, array![[10u8, 20], [30, 40]]);
        assert_eq!(rgb.channel(ChannelSelect::Gray).pixels[[0, 0]], 50);
    }
}
