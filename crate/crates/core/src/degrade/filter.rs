//! Convolution helpers on [`Raster`]s. Borders use reflect-101 indexing
//! (`dcb|abcd|cba`), the same convention as OpenCV's default.

use crate::pixels::{Raster, CHANNELS};

/// Maps any integer coordinate into `[0, n)` by mirror reflection without
/// repeating the edge sample.
#[inline]
pub fn reflect_101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// L1-normalized Gaussian taps for `sigma`, radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(0.0) as isize;
    let denom = 2.0 * f64::from(sigma) * f64::from(sigma);
    let raw: Vec<f64> = (-radius..=radius)
        .map(|x| (-((x * x) as f64) / denom).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| (w / total) as f32).collect()
}

/// Separable 2-D convolution with a symmetric odd-length kernel.
pub fn convolve_separable(src: &Raster, kernel: &[f32]) -> Raster {
    let (h, w) = (src.height, src.width);
    if h == 0 || w == 0 {
        return src.clone();
    }
    let radius = (kernel.len() / 2) as isize;

    let mut tmp = Raster::filled(h, w, 0.0);
    for row in 0..h {
        for col in 0..w {
            let mut acc = [0f32; CHANNELS];
            for (k, &wt) in kernel.iter().enumerate() {
                let c = reflect_101(col as isize + k as isize - radius, w);
                let base = src.index(row, c, 0);
                for (ch, a) in acc.iter_mut().enumerate() {
                    *a += wt * src.data[base + ch];
                }
            }
            let base = tmp.index(row, col, 0);
            tmp.data[base..base + CHANNELS].copy_from_slice(&acc);
        }
    }

    let mut out = Raster::filled(h, w, 0.0);
    for row in 0..h {
        for col in 0..w {
            let mut acc = [0f32; CHANNELS];
            for (k, &wt) in kernel.iter().enumerate() {
                let r = reflect_101(row as isize + k as isize - radius, h);
                let base = tmp.index(r, col, 0);
                for (ch, a) in acc.iter_mut().enumerate() {
                    *a += wt * tmp.data[base + ch];
                }
            }
            let base = out.index(row, col, 0);
            out.data[base..base + CHANNELS].copy_from_slice(&acc);
        }
    }
    out
}

pub fn gaussian_blur(src: &Raster, sigma: f32) -> Raster {
    convolve_separable(src, &gaussian_kernel(sigma))
}

/// Directional box blur: mean of `round(length)` bilinear taps spaced one
/// pixel apart on a segment through each pixel at `angle` (radians from the
/// +x axis, y pointing down).
pub fn motion_blur(src: &Raster, length: f32, angle: f32) -> Raster {
    let (h, w) = (src.height, src.width);
    let taps = length.round().max(1.0) as usize;
    if taps == 1 || h == 0 || w == 0 {
        return src.clone();
    }
    let (dy, dx) = angle.sin_cos();
    let half = (taps - 1) as f32 / 2.0;
    let offsets: Vec<(f32, f32)> = (0..taps)
        .map(|k| {
            let t = k as f32 - half;
            (t * dy, t * dx)
        })
        .collect();
    let norm = 1.0 / taps as f32;

    let mut out = Raster::filled(h, w, 0.0);
    for row in 0..h {
        for col in 0..w {
            let mut acc = [0f32; CHANNELS];
            for &(oy, ox) in &offsets {
                let y = row as f32 + oy;
                let x = col as f32 + ox;
                let y0 = y.floor();
                let x0 = x.floor();
                let fy = y - y0;
                let fx = x - x0;
                let r0 = reflect_101(y0 as isize, h);
                let r1 = reflect_101(y0 as isize + 1, h);
                let c0 = reflect_101(x0 as isize, w);
                let c1 = reflect_101(x0 as isize + 1, w);
                let w00 = (1.0 - fy) * (1.0 - fx);
                let w01 = (1.0 - fy) * fx;
                let w10 = fy * (1.0 - fx);
                let w11 = fy * fx;
                for (ch, a) in acc.iter_mut().enumerate() {
                    *a += w00 * src.get(r0, c0, ch)
                        + w01 * src.get(r0, c1, ch)
                        + w10 * src.get(r1, c0, ch)
                        + w11 * src.get(r1, c1, ch);
                }
            }
            let base = out.index(row, col, 0);
            for (ch, a) in acc.iter().enumerate() {
                out.data[base + ch] = a * norm;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-3..7).map(|i| reflect_101(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(reflect_101(-5, 1), 0);
        // Radius larger than the signal keeps bouncing.
        assert_eq!(reflect_101(9, 3), 1);
    }

    #[test]
    fn kernel_normalized_and_sized() {
        for sigma in [0.5f32, 1.0, 2.2, 3.5] {
            let k = gaussian_kernel(sigma);
            assert_eq!(k.len(), 2 * (3.0 * sigma).ceil() as usize + 1);
            let s: f32 = k.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn blur_keeps_constant() {
        let r = Raster::filled(5, 7, 128.0);
        let out = gaussian_blur(&r, 3.5);
        assert!(out.data.iter().all(|v| (v - 128.0).abs() < 1e-3));
        let m = motion_blur(&r, 11.0, 0.7);
        assert!(m.data.iter().all(|v| (v - 128.0).abs() < 1e-3));
    }

    #[test]
    fn horizontal_motion_is_box() {
        let mut r = Raster::filled(1, 9, 0.0);
        let i = r.index(0, 4, 0);
        r.data[i] = 90.0;
        let out = motion_blur(&r, 3.0, 0.0);
        for col in 3..=5 {
            assert!((out.get(0, col, 0) - 30.0).abs() < 1e-4);
        }
        assert_eq!(out.get(0, 2, 0), 0.0);
    }
}
