//! Pixel containers shared by every stage.
//!
//! `Image` is the 8-bit RGB storage form. All arithmetic happens on a
//! `Raster` (f32 samples in `[0, 255]`, no scaling), and results are brought
//! back with [`to_u8`], which rounds half-to-even and saturates.

use std::path::Path;

use thiserror::Error;

/// Number of interleaved channels in an [`Image`] / [`Raster`].
pub const CHANNELS: usize = 3;

/// Label value excluded from scoring.
pub const IGNORE_INDEX: u8 = 255;

#[derive(Debug, Error)]
pub enum PixelError {
    #[error("buffer length {got} does not match {height}x{width}x{channels} = {expected}")]
    BadLength {
        height: usize,
        width: usize,
        channels: usize,
        expected: usize,
        got: usize,
    },
    #[error("non-finite sample {value} at row {row}, col {col}, channel {channel}")]
    NonFinite {
        row: usize,
        col: usize,
        channel: usize,
        value: f32,
    },
    #[error("unsupported PNG layout in {path}: {color}")]
    UnsupportedColor { path: String, color: String },
    #[error("png error for {path}: {source}")]
    Png {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

/// H×W×3 row-major 8-bit image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self, PixelError> {
        check_len(height, width, CHANNELS, data.len())?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width * CHANNELS],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = (row * self.width + col) * CHANNELS;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    /// Reads an 8-bit PNG. Gray and alpha layouts are expanded to RGB;
    /// 16-bit and float layouts are rejected.
    pub fn read_png(path: &Path) -> Result<Self, PixelError> {
        let decoded = image::open(path).map_err(|source| PixelError::Png {
            path: path.display().to_string(),
            source,
        })?;
        use image::ColorType;
        match decoded.color() {
            ColorType::Rgb8 | ColorType::Rgba8 | ColorType::L8 | ColorType::La8 => {}
            other => {
                return Err(PixelError::UnsupportedColor {
                    path: path.display().to_string(),
                    color: format!("{other:?}"),
                })
            }
        }
        let rgb = decoded.to_rgb8();
        let (w, h) = rgb.dimensions();
        Image::new(h as usize, w as usize, rgb.into_raw())
    }

    pub fn write_png(&self, path: &Path) -> Result<(), PixelError> {
        image::save_buffer_with_format(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|source| PixelError::Png {
            path: path.display().to_string(),
            source,
        })
    }
}

/// f32 working copy of an [`Image`], same layout, values nominally in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Raster {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self, PixelError> {
        check_len(height, width, CHANNELS, data.len())?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width * CHANNELS],
        }
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * CHANNELS + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[self.index(row, col, channel)]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.sum() / self.data.len() as f64
    }

    pub fn map_in_place(&mut self, f: impl Fn(f32) -> f32) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }
}

/// Exact widening of every sample.
pub fn to_f32(img: &Image) -> Raster {
    Raster {
        height: img.height,
        width: img.width,
        data: img.data.iter().map(|&v| f32::from(v)).collect(),
    }
}

/// Quantizes a raster: round half-to-even, then clamp to `[0, 255]`.
pub fn to_u8(raster: &Raster) -> Result<Image, PixelError> {
    let mut data = Vec::with_capacity(raster.data.len());
    for (i, &v) in raster.data.iter().enumerate() {
        if !v.is_finite() {
            let pixel = i / CHANNELS;
            return Err(PixelError::NonFinite {
                row: pixel / raster.width.max(1),
                col: pixel % raster.width.max(1),
                channel: i % CHANNELS,
                value: v,
            });
        }
        data.push(quantize(v));
    }
    Ok(Image {
        height: raster.height,
        width: raster.width,
        data,
    })
}

#[inline]
fn quantize(v: f32) -> u8 {
    v.round_ties_even().clamp(0.0, 255.0) as u8
}

/// Row-major class indices; [`IGNORE_INDEX`] marks unscored pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self, PixelError> {
        check_len(height, width, 1, data.len())?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn read_png(path: &Path) -> Result<Self, PixelError> {
        let decoded = image::open(path).map_err(|source| PixelError::Png {
            path: path.display().to_string(),
            source,
        })?;
        if decoded.color() != image::ColorType::L8 {
            return Err(PixelError::UnsupportedColor {
                path: path.display().to_string(),
                color: format!("{:?} (labels must be 8-bit grayscale)", decoded.color()),
            });
        }
        let gray = decoded.to_luma8();
        let (w, h) = gray.dimensions();
        LabelMap::new(h as usize, w as usize, gray.into_raw())
    }

    pub fn write_png(&self, path: &Path) -> Result<(), PixelError> {
        image::save_buffer_with_format(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
            image::ImageFormat::Png,
        )
        .map_err(|source| PixelError::Png {
            path: path.display().to_string(),
            source,
        })
    }
}

fn check_len(height: usize, width: usize, channels: usize, got: usize) -> Result<(), PixelError> {
    let expected = height * width * channels;
    if expected != got {
        return Err(PixelError::BadLength {
            height,
            width,
            channels,
            expected,
            got,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raster_of(v: f32) -> Raster {
        Raster::filled(1, 1, v)
    }

    #[test]
    fn widening_is_exact() {
        let img = Image::new(1, 3, vec![0, 0, 0, 128, 128, 128, 255, 255, 255]).unwrap();
        let r = to_f32(&img);
        assert_eq!(r.data, vec![0.0, 0.0, 0.0, 128.0, 128.0, 128.0, 255.0, 255.0, 255.0]);
    }

    #[test]
    fn rounding_rules() {
        assert_eq!(to_u8(&raster_of(64.25)).unwrap().data()[0], 64);
        assert_eq!(to_u8(&raster_of(64.5)).unwrap().data()[0], 64);
        assert_eq!(to_u8(&raster_of(65.5)).unwrap().data()[0], 66);
        assert_eq!(to_u8(&raster_of(300.0)).unwrap().data()[0], 255);
        assert_eq!(to_u8(&raster_of(-4.0)).unwrap().data()[0], 0);
    }

    #[test]
    fn non_finite_reports_coordinate() {
        let mut r = Raster::filled(2, 3, 1.0);
        let i = r.index(1, 2, 1);
        r.data[i] = f32::NAN;
        match to_u8(&r) {
            Err(PixelError::NonFinite {
                row, col, channel, ..
            }) => assert_eq!((row, col, channel), (1, 2, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_length_rejected() {
        assert!(Image::new(2, 2, vec![0; 11]).is_err());
        assert!(LabelMap::new(2, 2, vec![0; 3]).is_err());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::new(2, 2, (0..12).map(|v| v * 20).collect()).unwrap();
        let p = dir.path().join("a.png");
        img.write_png(&p).unwrap();
        assert_eq!(Image::read_png(&p).unwrap(), img);

        let labels = LabelMap::new(1, 3, vec![0, 9, IGNORE_INDEX]).unwrap();
        let q = dir.path().join("l.png");
        labels.write_png(&q).unwrap();
        assert_eq!(LabelMap::read_png(&q).unwrap(), labels);
        assert!(LabelMap::read_png(&p).is_err());
    }

    proptest! {
        #[test]
        fn u8_round_trip((h, w, data) in (1usize..6, 1usize..6)
            .prop_flat_map(|(h, w)| (Just(h), Just(w), proptest::collection::vec(any::<u8>(), h * w * 3))))
        {
            let img = Image::new(h, w, data).unwrap();
            prop_assert_eq!(to_u8(&to_f32(&img)).unwrap(), img);
        }
    }
}
