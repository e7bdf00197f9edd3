//! Per-pixel class probabilities and multi-frame fusion.
//!
//! File layout (`.pmap`): magic `PMAP`, then `K`, `H`, `W` as little-endian
//! u32, then `K*H*W` little-endian f32 in class-major order.

use std::io::{Read, Write};

use thiserror::Error;

use crate::pixels::LabelMap;

pub const PMAP_MAGIC: &[u8; 4] = b"PMAP";

/// Per-pixel sum tolerance for a valid probability map.
pub const SIMPLEX_TOL: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum FuseError {
    #[error("no frames to fuse")]
    Empty,
    #[error("frame {index} has shape {got:?}, expected {expected:?}")]
    Shape {
        index: usize,
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("buffer has {got} values, expected {expected}")]
    BadLength { expected: usize, got: usize },
    #[error("class count {0} does not fit a u8 label map")]
    TooManyClasses(usize),
    #[error("bad PMAP magic")]
    Magic,
    #[error("PMAP payload truncated: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `K x H x W` class-major probability field.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl ProbMap {
    pub fn new(classes: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self, FuseError> {
        let expected = classes * height * width;
        if data.len() != expected {
            return Err(FuseError::BadLength {
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            classes,
            height,
            width,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.classes, self.height, self.width)
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn get(&self, class: usize, pixel: usize) -> f32 {
        self.data[class * self.plane() + pixel]
    }

    /// Largest `|sum_k p_k - 1|` over pixels, and whether any entry is negative.
    pub fn simplex_deviation(&self) -> (f64, bool) {
        let plane = self.plane();
        let mut worst = 0.0f64;
        let mut negative = false;
        for px in 0..plane {
            let mut s = 0.0f64;
            for k in 0..self.classes {
                let v = self.get(k, px);
                negative |= v < 0.0;
                s += f64::from(v);
            }
            worst = worst.max((s - 1.0).abs());
        }
        (worst, negative)
    }

    pub fn is_simplex(&self) -> bool {
        let (dev, negative) = self.simplex_deviation();
        !negative && dev <= SIMPLEX_TOL
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), FuseError> {
        let mut buf = Vec::with_capacity(16 + self.data.len() * 4);
        buf.extend_from_slice(PMAP_MAGIC);
        for d in [self.classes, self.height, self.width] {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, FuseError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FuseError> {
        if bytes.len() < 16 {
            return Err(FuseError::Truncated {
                expected: 16,
                got: bytes.len(),
            });
        }
        if &bytes[..4] != PMAP_MAGIC {
            return Err(FuseError::Magic);
        }
        let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
        let (k, h, w) = (dim(0), dim(1), dim(2));
        let n = k * h * w;
        let expected = 16 + n * 4;
        if bytes.len() != expected {
            return Err(FuseError::Truncated {
                expected,
                got: bytes.len(),
            });
        }
        let data = bytes[16..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        ProbMap::new(k, h, w, data)
    }
}

/// Elementwise mean over frames, accumulated in f64.
pub fn fuse_scene(frames: &[ProbMap]) -> Result<ProbMap, FuseError> {
    let first = frames.first().ok_or(FuseError::Empty)?;
    for (index, f) in frames.iter().enumerate() {
        if f.shape() != first.shape() || f.data.len() != first.data.len() {
            return Err(FuseError::Shape {
                index,
                expected: first.shape(),
                got: f.shape(),
            });
        }
    }
    let mut acc = vec![0.0f64; first.data.len()];
    for f in frames {
        for (a, &v) in acc.iter_mut().zip(&f.data) {
            *a += f64::from(v);
        }
    }
    let n = frames.len() as f64;
    Ok(ProbMap {
        classes: first.classes,
        height: first.height,
        width: first.width,
        data: acc.into_iter().map(|v| (v / n) as f32).collect(),
    })
}

/// Per-pixel argmax; ties go to the lowest class index.
pub fn argmax_labels(p: &ProbMap) -> Result<LabelMap, FuseError> {
    if p.classes > usize::from(crate::pixels::IGNORE_INDEX) {
        return Err(FuseError::TooManyClasses(p.classes));
    }
    let plane = p.plane();
    let data = (0..plane)
        .map(|px| {
            let mut best = 0usize;
            let mut best_v = p.get(0, px);
            for k in 1..p.classes {
                let v = p.get(k, px);
                if v > best_v {
                    best = k;
                    best_v = v;
                }
            }
            best as u8
        })
        .collect();
    Ok(LabelMap {
        height: p.height,
        width: p.width,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_class(pixels: &[(f32, f32)]) -> ProbMap {
        let mut data: Vec<f32> = pixels.iter().map(|p| p.0).collect();
        data.extend(pixels.iter().map(|p| p.1));
        ProbMap::new(2, 1, pixels.len(), data).unwrap()
    }

    #[test]
    fn mean_of_one_and_of_identical() {
        let a = two_class(&[(0.3, 0.7), (0.9, 0.1)]);
        assert_eq!(fuse_scene(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(fuse_scene(&[a.clone(), a.clone(), a.clone()]).unwrap(), a);
    }

    #[test]
    fn two_frame_example() {
        let fused = fuse_scene(&[two_class(&[(0.6, 0.4)]), two_class(&[(0.2, 0.8)])]).unwrap();
        assert!((fused.data[0] - 0.4).abs() < 1e-7);
        assert!((fused.data[1] - 0.6).abs() < 1e-7);
        assert_eq!(argmax_labels(&fused).unwrap().data, vec![1]);
    }

    #[test]
    fn soft_vote_differs_from_majority() {
        // Two frames lean mildly to class 0, one frame is confident in class 1.
        // Majority of per-frame argmaxes says 0; the averaged probabilities say 1.
        let frames = [
            two_class(&[(0.55, 0.45)]),
            two_class(&[(0.55, 0.45)]),
            two_class(&[(0.05, 0.95)]),
        ];
        let votes: Vec<u8> = frames.iter().map(|f| argmax_labels(f).unwrap().data[0]).collect();
        assert_eq!(votes, vec![0, 0, 1]);
        assert_eq!(argmax_labels(&fuse_scene(&frames).unwrap()).unwrap().data, vec![1]);
    }

    #[test]
    fn tie_breaks_low() {
        let p = ProbMap::new(4, 1, 1, vec![0.25; 4]).unwrap();
        assert_eq!(argmax_labels(&p).unwrap().data, vec![0]);
        let onehot = ProbMap::new(3, 1, 1, vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(argmax_labels(&onehot).unwrap().data, vec![2]);
    }

    #[test]
    fn errors() {
        assert!(matches!(fuse_scene(&[]), Err(FuseError::Empty)));
        let a = two_class(&[(0.5, 0.5)]);
        let b = two_class(&[(0.5, 0.5), (0.5, 0.5)]);
        assert!(matches!(fuse_scene(&[a, b]), Err(FuseError::Shape { index: 1, .. })));
        assert!(ProbMap::new(2, 2, 2, vec![0.0; 7]).is_err());
    }

    #[test]
    fn pmap_bytes() {
        let p = two_class(&[(0.25, 0.75)]);
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"PMAP");
        assert_eq!(&buf[4..16], &[2, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&buf[16..20], &0.25f32.to_le_bytes());
        assert_eq!(buf.len(), 24);
        assert_eq!(ProbMap::read_from(&buf[..]).unwrap(), p);
        assert!(matches!(ProbMap::from_bytes(&buf[..20]), Err(FuseError::Truncated { .. })));
        buf[0] = b'X';
        assert!(matches!(ProbMap::from_bytes(&buf), Err(FuseError::Magic)));
    }
}
