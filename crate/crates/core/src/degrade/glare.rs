//! Glare: Gaussian radial blobs and an optional elongated streak, each
//! screen-blended onto the image (`255 - (255 - I)(255 - g) / 255`).

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng as _;

use super::config::{GlareRanges, Severity, Strength};
use super::uniform;
use crate::pixels::{Raster, CHANNELS};
use crate::rng::Rng;

/// Streak peak relative to the first blob's peak.
const STREAK_PEAK: f32 = 0.6;
/// Streak half-extents relative to the first blob's radius.
const STREAK_LONG: f32 = 3.0;
const STREAK_SHORT: f32 = 0.08;

#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    /// Centre as fractions of width / height.
    pub cx: f32,
    pub cy: f32,
    pub peak: f32,
    /// Radius as a fraction of `min(H, W)`.
    pub radius: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlareStreak {
    pub cx: f32,
    pub cy: f32,
    pub angle: f32,
    pub peak: f32,
    /// Gaussian scales as fractions of `min(H, W)`.
    pub long: f32,
    pub short: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlareParams {
    pub blobs: Vec<Blob>,
    pub streak: Option<GlareStreak>,
}

impl GlareParams {
    /// One blob for light, two for medium, three for heavy.
    pub fn sample(rng: &mut Rng, severity: Severity, ranges: &GlareRanges) -> Self {
        let blobs: Vec<Blob> = (0..=severity.index())
            .map(|_| Blob {
                cx: rng.random::<f32>(),
                cy: rng.random::<f32>(),
                peak: uniform(rng, ranges.peak.band(severity, Strength::Rising)) as f32,
                radius: uniform(rng, ranges.radius.band(severity, Strength::Rising)) as f32,
            })
            .collect();
        let streak = if rng.random_bool(ranges.streak_prob) {
            let anchor = &blobs[0];
            Some(GlareStreak {
                cx: anchor.cx,
                cy: anchor.cy,
                angle: (rng.random::<f64>() * PI) as f32,
                peak: STREAK_PEAK * anchor.peak,
                long: STREAK_LONG * anchor.radius,
                short: STREAK_SHORT * anchor.radius,
            })
        } else {
            None
        };
        Self { blobs, streak }
    }

    pub fn render(&self, src: &Raster) -> Raster {
        let (h, w) = (src.height, src.width);
        let scale = h.min(w) as f32;
        let mut out = src.clone();
        for row in 0..h {
            for col in 0..w {
                let (y, x) = (row as f32, col as f32);
                // Screen blends compose multiplicatively in (255 - g).
                let mut keep = 1.0f32;
                for b in &self.blobs {
                    let r = ((x - b.cx * w as f32).powi(2) + (y - b.cy * h as f32).powi(2)).sqrt();
                    let g = b.peak * (-(r / (b.radius * scale)).powi(2)).exp();
                    keep *= (255.0 - g) / 255.0;
                }
                if let Some(s) = &self.streak {
                    let (sin, cos) = s.angle.sin_cos();
                    let (px, py) = (x - s.cx * w as f32, y - s.cy * h as f32);
                    let u = px * cos + py * sin;
                    let v = -px * sin + py * cos;
                    let g = s.peak
                        * (-(u / (s.long * scale)).powi(2) - (v / (s.short * scale)).powi(2))
                            .exp();
                    keep *= (255.0 - g) / 255.0;
                }
                if keep < 1.0 {
                    let base = out.index(row, col, 0);
                    for v in &mut out.data[base..base + CHANNELS] {
                        *v = 255.0 - (255.0 - *v) * keep;
                    }
                }
            }
        }
        out
    }

    pub(super) fn record(&self, map: &mut BTreeMap<String, f64>) {
        map.insert("blobs".into(), self.blobs.len() as f64);
        for (i, b) in self.blobs.iter().enumerate() {
            map.insert(format!("blob{i}.cx"), b.cx.into());
            map.insert(format!("blob{i}.cy"), b.cy.into());
            map.insert(format!("blob{i}.peak"), b.peak.into());
            map.insert(format!("blob{i}.radius"), b.radius.into());
        }
        map.insert("streak".into(), f64::from(u8::from(self.streak.is_some())));
        if let Some(s) = &self.streak {
            map.insert("streak_angle".into(), s.angle.into());
            map.insert("streak_peak".into(), s.peak.into());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pixels::{to_f32, to_u8, Image};

    fn blob(peak: f32) -> GlareParams {
        GlareParams {
            blobs: vec![Blob {
                cx: 0.5,
                cy: 0.5,
                peak,
                radius: 0.3,
            }],
            streak: None,
        }
    }

    #[test]
    fn zero_peak_is_identity() {
        let data: Vec<u8> = (0..16 * 16 * 3).map(|v| (v % 256) as u8).collect();
        let img = Image::new(16, 16, data).unwrap();
        assert_eq!(to_u8(&blob(0.0).render(&to_f32(&img))).unwrap(), img);
    }

    #[test]
    fn centre_saturates() {
        let img = Image::filled(10, 10, 0);
        let out = to_u8(&blob(255.0).render(&to_f32(&img))).unwrap();
        assert_eq!(out.pixel(5, 5), [255; 3]);
    }

    #[test]
    fn screen_never_darkens() {
        let data: Vec<f32> = (0..24 * 20 * 3).map(|v| (v * 13 % 256) as f32).collect();
        let src = Raster::new(24, 20, data).unwrap();
        let mut p = GlareParams::sample(
            &mut Rng::new(4, 4),
            Severity::Heavy,
            &crate::degrade::DegradeConfig::default().glare,
        );
        p.streak = Some(GlareStreak {
            cx: 0.3,
            cy: 0.6,
            angle: 0.5,
            peak: 200.0,
            long: 0.9,
            short: 0.03,
        });
        let out = p.render(&src);
        for (o, i) in out.data.iter().zip(&src.data) {
            assert!(o >= i);
        }
    }

    #[test]
    fn blob_count_follows_severity() {
        let ranges = crate::degrade::DegradeConfig::default().glare;
        let mut rng = Rng::new(0, 0);
        for (s, n) in [(Severity::Light, 1), (Severity::Medium, 2), (Severity::Heavy, 3)] {
            assert_eq!(GlareParams::sample(&mut rng, s, &ranges).blobs.len(), n);
        }
    }
}
