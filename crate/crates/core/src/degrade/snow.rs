//! Particle snow: anti-aliased near-white discs in three size classes,
//! optional parallel streaks, then a thin white haze veil.
//!
//! Particles are composited with a lighten blend
//! (`I + alpha * max(w - I, 0)`) and the veil uses airlight 255, so no
//! sample is ever darkened before quantization.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng as _;

use super::config::{Range, Severity, SnowRanges, Strength};
use super::uniform;
use crate::pixels::{Raster, CHANNELS};
use crate::rng::Rng;

/// (probability, radius range in px) for small / medium / large flakes.
const SIZE_CLASSES: [(f64, Range); 3] = [
    (0.6, Range::new(0.6, 1.2)),
    (0.3, Range::new(1.2, 2.2)),
    (0.1, Range::new(2.2, 3.5)),
];
const FLAKE_BRIGHTNESS: Range = Range::new(230.0, 255.0);
const FLAKE_OPACITY: Range = Range::new(0.5, 1.0);
const STREAK_OPACITY: Range = Range::new(0.3, 0.6);
/// Streaks fall roughly downward: 60..120 degrees from +x.
const STREAK_ANGLE: Range = Range::new(PI / 3.0, 2.0 * PI / 3.0);
/// One streak per this many flakes.
const FLAKES_PER_STREAK: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Streaks {
    pub angle: f32,
    pub length: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnowParams {
    /// Flakes per megapixel.
    pub density: f64,
    /// Veil transmission; 1 disables the veil.
    pub transmission: f32,
    pub streaks: Option<Streaks>,
}

#[derive(Debug, Clone, PartialEq)]
struct Flake {
    x: f32,
    y: f32,
    radius: f32,
    brightness: f32,
    opacity: f32,
}

impl SnowParams {
    pub fn sample(rng: &mut Rng, severity: Severity, ranges: &SnowRanges) -> Self {
        let density = ranges.density[severity.index()];
        let transmission =
            uniform(rng, ranges.transmission.band(severity, Strength::Falling)) as f32;
        let streaks = if rng.random_bool(ranges.streak_prob) {
            Some(Streaks {
                angle: uniform(rng, STREAK_ANGLE) as f32,
                length: uniform(rng, ranges.streak_length.band(severity, Strength::Rising))
                    as f32,
            })
        } else {
            None
        };
        Self {
            density,
            transmission,
            streaks,
        }
    }

    pub fn particle_count(&self, height: usize, width: usize) -> usize {
        (self.density * (height * width) as f64 / 1e6).round() as usize
    }

    pub fn render(&self, src: &Raster, rng: &mut Rng) -> Raster {
        let (h, w) = (src.height, src.width);
        let mut out = src.clone();
        let n = self.particle_count(h, w);

        for _ in 0..n {
            let flake = sample_flake(rng, h, w);
            draw_disc(&mut out, &flake);
        }

        if let Some(streaks) = &self.streaks {
            let count = n.div_ceil(FLAKES_PER_STREAK);
            let (dy, dx) = streaks.angle.sin_cos();
            let half = streaks.length / 2.0;
            for _ in 0..count {
                let cx = rng.random::<f32>() * w as f32;
                let cy = rng.random::<f32>() * h as f32;
                let brightness = uniform(rng, FLAKE_BRIGHTNESS) as f32;
                let opacity = uniform(rng, STREAK_OPACITY) as f32;
                let a = (cx - half * dx, cy - half * dy);
                let b = (cx + half * dx, cy + half * dy);
                draw_segment(&mut out, a, b, brightness, opacity);
            }
        }

        let t = self.transmission;
        if t < 1.0 {
            // Same as `v t + 255 (1 - t)`, arranged so rounding cannot darken.
            out.map_in_place(|v| v + (255.0 - v) * (1.0 - t));
        }
        out
    }

    pub(super) fn record(&self, map: &mut BTreeMap<String, f64>) {
        map.insert("density".into(), self.density);
        map.insert("transmission".into(), self.transmission.into());
        map.insert("streaks".into(), f64::from(u8::from(self.streaks.is_some())));
        if let Some(s) = &self.streaks {
            map.insert("streak_angle".into(), s.angle.into());
            map.insert("streak_length".into(), s.length.into());
        }
    }
}

fn sample_flake(rng: &mut Rng, h: usize, w: usize) -> Flake {
    let pick: f64 = rng.random();
    let mut acc = 0.0;
    let mut radii = SIZE_CLASSES[SIZE_CLASSES.len() - 1].1;
    for (p, r) in SIZE_CLASSES {
        acc += p;
        if pick < acc {
            radii = r;
            break;
        }
    }
    Flake {
        x: rng.random::<f32>() * w as f32,
        y: rng.random::<f32>() * h as f32,
        radius: uniform(rng, radii) as f32,
        brightness: uniform(rng, FLAKE_BRIGHTNESS) as f32,
        opacity: uniform(rng, FLAKE_OPACITY) as f32,
    }
}

#[inline]
fn lighten(out: &mut Raster, row: usize, col: usize, value: f32, alpha: f32) {
    let base = out.index(row, col, 0);
    for v in &mut out.data[base..base + CHANNELS] {
        *v += alpha * (value - *v).max(0.0);
    }
}

/// Pixel centres sit at integer coordinates; coverage ramps linearly over
/// one pixel across the rim.
fn draw_disc(out: &mut Raster, f: &Flake) {
    let (h, w) = (out.height as isize, out.width as isize);
    let reach = f.radius + 1.0;
    let r0 = ((f.y - reach).floor() as isize).max(0);
    let r1 = ((f.y + reach).ceil() as isize).min(h - 1);
    let c0 = ((f.x - reach).floor() as isize).max(0);
    let c1 = ((f.x + reach).ceil() as isize).min(w - 1);
    for row in r0..=r1 {
        for col in c0..=c1 {
            let d = ((row as f32 - f.y).powi(2) + (col as f32 - f.x).powi(2)).sqrt();
            let coverage = (f.radius + 0.5 - d).clamp(0.0, 1.0);
            if coverage > 0.0 {
                lighten(out, row as usize, col as usize, f.brightness, f.opacity * coverage);
            }
        }
    }
}

fn draw_segment(out: &mut Raster, a: (f32, f32), b: (f32, f32), value: f32, opacity: f32) {
    let (h, w) = (out.height as isize, out.width as isize);
    let r0 = ((a.1.min(b.1) - 1.0).floor() as isize).max(0);
    let r1 = ((a.1.max(b.1) + 1.0).ceil() as isize).min(h - 1);
    let c0 = ((a.0.min(b.0) - 1.0).floor() as isize).max(0);
    let c1 = ((a.0.max(b.0) + 1.0).ceil() as isize).min(w - 1);
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = (vx * vx + vy * vy).max(f32::MIN_POSITIVE);
    for row in r0..=r1 {
        for col in c0..=c1 {
            let (px, py) = (col as f32 - a.0, row as f32 - a.1);
            let t = ((px * vx + py * vy) / len2).clamp(0.0, 1.0);
            let d = ((px - t * vx).powi(2) + (py - t * vy).powi(2)).sqrt();
            let coverage = (1.0 - d).clamp(0.0, 1.0);
            if coverage > 0.0 {
                lighten(out, row as usize, col as usize, value, opacity * coverage);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pixels::{to_f32, to_u8, Image};

    fn luminance(img: &Image) -> f64 {
        img.data().iter().map(|&v| v as f64).sum::<f64>() / img.data().len() as f64
    }

    #[test]
    fn black_image_gets_brighter() {
        let img = Image::filled(64, 64, 0);
        let p = SnowParams {
            density: 1200.0,
            transmission: 0.9,
            streaks: Some(Streaks {
                angle: 1.4,
                length: 12.0,
            }),
        };
        let out = to_u8(&p.render(&to_f32(&img), &mut Rng::new(1, 2))).unwrap();
        assert!(luminance(&out) > luminance(&img));
    }

    #[test]
    fn empty_composite_is_identity() {
        let data: Vec<u8> = (0..300).map(|v| (v % 251) as u8).collect();
        let img = Image::new(10, 10, data).unwrap();
        let p = SnowParams {
            density: 0.0,
            transmission: 1.0,
            streaks: Some(Streaks {
                angle: 1.0,
                length: 10.0,
            }),
        };
        let out = to_u8(&p.render(&to_f32(&img), &mut Rng::new(0, 0))).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn placement_is_seeded() {
        let src = Raster::filled(200, 300, 40.0);
        let p = SnowParams {
            density: 500.0,
            transmission: 0.9,
            streaks: None,
        };
        assert_eq!(p.particle_count(200, 300), 30);
        let a = p.render(&src, &mut Rng::new(9, 4));
        let b = p.render(&src, &mut Rng::new(9, 4));
        let c = p.render(&src, &mut Rng::new(9, 5));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn never_darkens() {
        let data: Vec<f32> = (0..32 * 32 * 3).map(|v| (v * 37 % 256) as f32).collect();
        let src = Raster::new(32, 32, data).unwrap();
        let p = SnowParams {
            density: 20_000.0,
            transmission: 0.86,
            streaks: Some(Streaks {
                angle: 1.7,
                length: 20.0,
            }),
        };
        let out = p.render(&src, &mut Rng::new(2, 2));
        for (o, i) in out.data.iter().zip(&src.data) {
            assert!(o >= i);
        }
    }
}
