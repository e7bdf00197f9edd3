use std::collections::BTreeMap;

use rand::Rng as _;

use super::config::{HazeRanges, Severity, Strength};
use super::filter::gaussian_blur;
use super::uniform;
use crate::pixels::Raster;
use crate::rng::Rng;

/// Contrast reduction around the image mean, airlight blend, optional blur:
/// `(c (I - mu) + mu) t + A (1 - t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HazeParams {
    pub contrast: f32,
    pub transmission: f32,
    pub airlight: f32,
    pub blur_sigma: Option<f32>,
}

impl HazeParams {
    pub fn sample(rng: &mut Rng, severity: Severity, ranges: &HazeRanges) -> Self {
        let contrast = uniform(rng, ranges.contrast.band(severity, Strength::Falling)) as f32;
        let transmission =
            uniform(rng, ranges.transmission.band(severity, Strength::Falling)) as f32;
        let airlight = uniform(rng, ranges.airlight.band(severity, Strength::Rising)) as f32;
        let blur_sigma = if rng.random_bool(ranges.blur_prob) {
            Some(uniform(rng, ranges.blur_sigma.band(severity, Strength::Rising)) as f32)
        } else {
            None
        };
        Self {
            contrast,
            transmission,
            airlight,
            blur_sigma,
        }
    }

    pub fn render(&self, src: &Raster) -> Raster {
        let mut out = src.clone();
        let mu = src.mean() as f32;
        let (c, t, a) = (self.contrast, self.transmission, self.airlight);
        out.map_in_place(|v| (c * (v - mu) + mu) * t + a * (1.0 - t));
        match self.blur_sigma {
            Some(sigma) => gaussian_blur(&out, sigma),
            None => out,
        }
    }

    pub(super) fn record(&self, map: &mut BTreeMap<String, f64>) {
        map.insert("contrast".into(), self.contrast.into());
        map.insert("transmission".into(), self.transmission.into());
        map.insert("airlight".into(), self.airlight.into());
        map.insert("blur".into(), f64::from(u8::from(self.blur_sigma.is_some())));
        if let Some(s) = self.blur_sigma {
            map.insert("blur_sigma".into(), s.into());
        }
    }
}
