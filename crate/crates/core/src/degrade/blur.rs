use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng as _;

use super::config::{BlurRanges, Severity, Strength};
use super::filter::{gaussian_blur, motion_blur};
use super::uniform;
use crate::pixels::Raster;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Motion {
    pub length: f32,
    pub angle: f32,
}

/// Gaussian blur, optionally followed by a directional box blur.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurParams {
    pub sigma: f32,
    pub motion: Option<Motion>,
}

impl BlurParams {
    pub fn sample(rng: &mut Rng, severity: Severity, ranges: &BlurRanges) -> Self {
        let sigma = uniform(rng, ranges.sigma.band(severity, Strength::Rising)) as f32;
        let motion = if rng.random_bool(ranges.motion_prob) {
            let length =
                uniform(rng, ranges.motion_length.band(severity, Strength::Rising)) as f32;
            let angle = (rng.random::<f64>() * PI) as f32;
            Some(Motion { length, angle })
        } else {
            None
        };
        Self { sigma, motion }
    }

    pub fn render(&self, src: &Raster) -> Raster {
        let out = gaussian_blur(src, self.sigma);
        match &self.motion {
            Some(m) => motion_blur(&out, m.length, m.angle),
            None => out,
        }
    }

    pub(super) fn record(&self, map: &mut BTreeMap<String, f64>) {
        map.insert("sigma".into(), self.sigma.into());
        map.insert("motion".into(), f64::from(u8::from(self.motion.is_some())));
        if let Some(m) = &self.motion {
            map.insert("motion_length".into(), m.length.into());
            map.insert("motion_angle".into(), m.angle.into());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pixels::{to_f32, to_u8, Image};

    fn impulse(size: usize) -> Raster {
        let mut r = Raster::filled(size, size, 0.0);
        let c = size / 2;
        for ch in 0..3 {
            let i = r.index(c, c, ch);
            r.data[i] = 255.0;
        }
        r
    }

    #[test]
    fn constant_image_unchanged() {
        let img = Image::filled(9, 11, 128);
        let p = BlurParams {
            sigma: 2.0,
            motion: Some(Motion {
                length: 9.0,
                angle: 1.1,
            }),
        };
        assert_eq!(to_u8(&p.render(&to_f32(&img))).unwrap(), img);
    }

    #[test]
    fn mass_conserved_at_max_sigma() {
        let src = impulse(41);
        for motion in [
            None,
            Some(Motion {
                length: 7.0,
                angle: 0.4,
            }),
        ] {
            let p = BlurParams { sigma: 3.5, motion };
            let out = p.render(&src);
            let rel = (out.sum() - src.sum()).abs() / src.sum();
            assert!(rel < 0.01, "relative mass drift {rel}");
        }
    }

    #[test]
    fn impulse_center_matches_closed_form() {
        // Independent closed form: 1-D weights exp(-x^2 / (2 sigma^2)) over
        // x in [-2, 2] (radius ceil(1.5) = 2), normalized; 2-D centre = w0^2.
        let sigma = 0.5f64;
        let total: f64 = (-2i32..=2)
            .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
            .sum();
        let w0 = 1.0 / total;
        let expected = (w0 * w0 * 255.0).round() as u8;
        assert_eq!(expected, 158);

        let p = BlurParams {
            sigma: 0.5,
            motion: None,
        };
        let out = to_u8(&p.render(&impulse(9))).unwrap();
        assert_eq!(out.pixel(4, 4), [expected; 3]);
    }

    #[test]
    fn sampled_sigma_in_band() {
        let ranges = crate::degrade::DegradeConfig::default().blur;
        let mut rng = Rng::new(3, 0);
        for _ in 0..200 {
            let p = BlurParams::sample(&mut rng, Severity::Heavy, &ranges);
            assert!((2.5..=3.5).contains(&(p.sigma as f64 + 1e-6)));
            if let Some(m) = p.motion {
                assert!(m.length >= 18.3 && m.length <= 25.0);
                assert!((0.0..std::f32::consts::PI + 1e-6).contains(&m.angle));
            }
        }
    }
}
