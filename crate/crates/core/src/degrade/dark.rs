use std::collections::BTreeMap;

use rand_distr::{Distribution, Normal};

use super::config::{DarkRanges, Severity, Strength};
use super::uniform;
use crate::pixels::Raster;
use crate::rng::Rng;

/// `((I/255)^gamma) * 255 * brightness + N(0, noise_sigma^2)`, noise drawn
/// independently per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DarkParams {
    pub gamma: f32,
    pub brightness: f32,
    pub noise_sigma: f32,
}

impl DarkParams {
    pub fn sample(rng: &mut Rng, severity: Severity, ranges: &DarkRanges) -> Self {
        Self {
            gamma: uniform(rng, ranges.gamma.band(severity, Strength::Rising)) as f32,
            brightness: uniform(rng, ranges.brightness.band(severity, Strength::Falling)) as f32,
            noise_sigma: uniform(rng, ranges.noise_sigma.band(severity, Strength::Rising)) as f32,
        }
    }

    pub fn render(&self, src: &Raster, rng: &mut Rng) -> Raster {
        let mut out = src.clone();
        let (gamma, b) = (self.gamma, self.brightness);
        out.map_in_place(|v| (v / 255.0).powf(gamma) * 255.0 * b);
        if self.noise_sigma > 0.0 {
            let noise = Normal::new(0.0f32, self.noise_sigma).expect("finite sigma");
            for v in &mut out.data {
                *v += noise.sample(rng);
            }
        }
        out
    }

    pub(super) fn record(&self, map: &mut BTreeMap<String, f64>) {
        map.insert("gamma".into(), self.gamma.into());
        map.insert("brightness".into(), self.brightness.into());
        map.insert("noise_sigma".into(), self.noise_sigma.into());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pixels::{to_f32, to_u8, Image};

    fn run(pixel: u8, gamma: f32, brightness: f32) -> u8 {
        let p = DarkParams {
            gamma,
            brightness,
            noise_sigma: 0.0,
        };
        let img = Image::filled(1, 1, pixel);
        let out = to_u8(&p.render(&to_f32(&img), &mut Rng::new(0, 0))).unwrap();
        out.data()[0]
    }

    #[test]
    fn gamma_two_on_128() {
        // (128/255)^2 * 255 = 64.2509..., rounds to 64.
        let exact = (128.0f64 / 255.0).powi(2) * 255.0;
        assert!((exact - 64.25).abs() < 0.01);
        assert_eq!(run(128, 2.0, 1.0), 64);
    }

    #[test]
    fn endpoints_fixed() {
        for gamma in [1.15, 1.7, 2.6] {
            assert_eq!(run(255, gamma, 1.0), 255);
            assert_eq!(run(0, gamma, 1.0), 0);
        }
    }

    #[test]
    fn noiseless_never_brightens() {
        let src = Raster::new(1, 4, (0..12).map(|v| v as f32 * 21.0).collect()).unwrap();
        let p = DarkParams {
            gamma: 1.3,
            brightness: 0.8,
            noise_sigma: 0.0,
        };
        let out = p.render(&src, &mut Rng::new(1, 1));
        for (a, b) in out.data.iter().zip(&src.data) {
            assert!(a <= b);
        }
    }

    #[test]
    fn noise_is_seeded() {
        let src = Raster::filled(4, 4, 100.0);
        let p = DarkParams {
            gamma: 1.5,
            brightness: 0.7,
            noise_sigma: 6.0,
        };
        let a = p.render(&src, &mut Rng::new(5, 2));
        let b = p.render(&src, &mut Rng::new(5, 2));
        assert_eq!(a, b);
        assert!(a.data.iter().any(|&v| v != a.data[0]));
    }
}
