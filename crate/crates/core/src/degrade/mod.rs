//! Synthetic weather degradation.
//!
//! A draw first decides whether to degrade at all (`apply_prob`), then picks
//! a [`Category`] by weight and a [`Severity`] by weight, then samples the
//! category's parameters from the severity's third of each range. Spatial
//! randomness (noise fields, flake positions) is drawn from the same stream
//! while rendering.

pub mod blur;
pub mod config;
pub mod dark;
pub mod filter;
pub mod glare;
pub mod haze;
pub mod snow;

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use blur::{BlurParams, Motion};
pub use config::{Category, ConfigError, DegradeConfig, Range, Severity, Strength};
pub use dark::DarkParams;
pub use glare::{Blob, GlareParams, GlareStreak};
pub use haze::HazeParams;
pub use snow::{SnowParams, Streaks};

use crate::pixels::{to_f32, to_u8, Image, Raster};
use crate::rng::{stage, Rng};

/// Audit trail of one degradation draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradeRecord {
    pub applied: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub category: Option<Category>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub severity: Option<Severity>,
    pub params: BTreeMap<String, f64>,
}

impl DegradeRecord {
    pub fn skipped() -> Self {
        Self {
            applied: false,
            category: None,
            severity: None,
            params: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DegradeParams {
    Blur(BlurParams),
    Dark(DarkParams),
    Snow(SnowParams),
    Haze(HazeParams),
    Glare(GlareParams),
}

impl DegradeParams {
    pub fn sample(category: Category, severity: Severity, rng: &mut Rng, cfg: &DegradeConfig) -> Self {
        match category {
            Category::Blur => Self::Blur(BlurParams::sample(rng, severity, &cfg.blur)),
            Category::Dark => Self::Dark(DarkParams::sample(rng, severity, &cfg.dark)),
            Category::Snow => Self::Snow(SnowParams::sample(rng, severity, &cfg.snow)),
            Category::Haze => Self::Haze(HazeParams::sample(rng, severity, &cfg.haze)),
            Category::Glare => Self::Glare(GlareParams::sample(rng, severity, &cfg.glare)),
        }
    }

    pub fn category(&self) -> Category {
        match self {
            Self::Blur(_) => Category::Blur,
            Self::Dark(_) => Category::Dark,
            Self::Snow(_) => Category::Snow,
            Self::Haze(_) => Category::Haze,
            Self::Glare(_) => Category::Glare,
        }
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        let mut map = BTreeMap::new();
        match self {
            Self::Blur(p) => p.record(&mut map),
            Self::Dark(p) => p.record(&mut map),
            Self::Snow(p) => p.record(&mut map),
            Self::Haze(p) => p.record(&mut map),
            Self::Glare(p) => p.record(&mut map),
        }
        map
    }

    pub fn render(&self, src: &Raster, rng: &mut Rng) -> Raster {
        match self {
            Self::Blur(p) => p.render(src),
            Self::Dark(p) => p.render(src, rng),
            Self::Snow(p) => p.render(src, rng),
            Self::Haze(p) => p.render(src),
            Self::Glare(p) => p.render(src),
        }
    }
}

/// A plan with its typed parameters, ready to render.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub severity: Severity,
    pub params: DegradeParams,
}

impl Plan {
    pub fn record(&self) -> DegradeRecord {
        DegradeRecord {
            applied: true,
            category: Some(self.params.category()),
            severity: Some(self.severity),
            params: self.params.to_map(),
        }
    }
}

/// Draws whether to degrade and, if so, the full parameter set.
///
/// `cfg` must have passed [`DegradeConfig::validate`].
pub fn draw_plan(rng: &mut Rng, cfg: &DegradeConfig) -> Option<Plan> {
    if !rng.random_bool(cfg.apply_prob) {
        return None;
    }
    let category = Category::ALL[weighted(rng, &cfg.category_weights)];
    let severity = Severity::ALL[weighted(rng, &cfg.severity_weights)];
    let params = DegradeParams::sample(category, severity, rng, cfg);
    Some(Plan { severity, params })
}

pub fn sample_plan(rng: &mut Rng, cfg: &DegradeConfig) -> DegradeRecord {
    draw_plan(rng, cfg)
        .map(|p| p.record())
        .unwrap_or_else(DegradeRecord::skipped)
}

/// Degrades a clean frame using an explicit stream.
pub fn degrade_with_rng(img: &Image, rng: &mut Rng, cfg: &DegradeConfig) -> (Image, DegradeRecord) {
    match draw_plan(rng, cfg) {
        None => (img.clone(), DegradeRecord::skipped()),
        Some(plan) => {
            let out = plan.params.render(&to_f32(img), rng);
            (quantize(&out), plan.record())
        }
    }
}

/// Degrades a clean frame; a pure function of `(img, seed, cfg)`.
pub fn degrade(img: &Image, seed: u64, cfg: &DegradeConfig) -> (Image, DegradeRecord) {
    degrade_with_rng(img, &mut Rng::for_stage(seed, stage::DEGRADE), cfg)
}

fn render_category(img: &Image, rng: &mut Rng, category: Category, severity: Severity, cfg: &DegradeConfig) -> Image {
    let params = DegradeParams::sample(category, severity, rng, cfg);
    quantize(&params.render(&to_f32(img), rng))
}

pub fn apply_blur(img: &Image, rng: &mut Rng, severity: Severity, cfg: &DegradeConfig) -> Image {
    render_category(img, rng, Category::Blur, severity, cfg)
}

pub fn apply_dark(img: &Image, rng: &mut Rng, severity: Severity, cfg: &DegradeConfig) -> Image {
    render_category(img, rng, Category::Dark, severity, cfg)
}

pub fn apply_snow(img: &Image, rng: &mut Rng, severity: Severity, cfg: &DegradeConfig) -> Image {
    render_category(img, rng, Category::Snow, severity, cfg)
}

pub fn apply_haze(img: &Image, rng: &mut Rng, severity: Severity, cfg: &DegradeConfig) -> Image {
    render_category(img, rng, Category::Haze, severity, cfg)
}

pub fn apply_glare(img: &Image, rng: &mut Rng, severity: Severity, cfg: &DegradeConfig) -> Image {
    render_category(img, rng, Category::Glare, severity, cfg)
}

/// Uniform draw from a closed range; degenerate ranges return `lo`.
pub(crate) fn uniform(rng: &mut Rng, range: Range) -> f64 {
    range.lo + (range.hi - range.lo) * rng.random::<f64>()
}

fn weighted(rng: &mut Rng, weights: &[f64]) -> usize {
    WeightedIndex::new(weights)
        .expect("weights validated")
        .sample(rng)
}

fn quantize(raster: &Raster) -> Image {
    // Every renderer produces finite samples from finite inputs.
    to_u8(raster).expect("renderers emit finite samples")
}

/// Counts of applied draws per category over `n` plans from one stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryStats {
    pub draws: u64,
    pub applied: u64,
    pub counts: BTreeMap<Category, u64>,
}

impl CategoryStats {
    pub fn applied_fraction(&self) -> f64 {
        self.applied as f64 / self.draws as f64
    }

    /// Frequency conditioned on `applied`.
    pub fn frequency(&self, c: Category) -> f64 {
        if self.applied == 0 {
            return 0.0;
        }
        *self.counts.get(&c).unwrap_or(&0) as f64 / self.applied as f64
    }
}

pub fn category_stats(rng: &mut Rng, cfg: &DegradeConfig, n: u64) -> CategoryStats {
    let mut counts: BTreeMap<Category, u64> = Category::ALL.iter().map(|&c| (c, 0)).collect();
    let mut applied = 0;
    for _ in 0..n {
        if let Some(c) = sample_plan(rng, cfg).category {
            applied += 1;
            *counts.entry(c).or_default() += 1;
        }
    }
    CategoryStats {
        draws: n,
        applied,
        counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_image() -> Image {
        let data: Vec<u8> = (0..32 * 24 * 3).map(|v| (v * 31 % 256) as u8).collect();
        Image::new(32, 24, data).unwrap()
    }

    #[test]
    fn zero_prob_never_applies() {
        let cfg = DegradeConfig {
            apply_prob: 0.0,
            ..Default::default()
        };
        let mut rng = Rng::new(1, 1);
        for _ in 0..1000 {
            let r = sample_plan(&mut rng, &cfg);
            assert!(!r.applied);
            assert!(r.category.is_none() && r.severity.is_none() && r.params.is_empty());
        }
    }

    #[test]
    fn point_mass_category() {
        let mut cfg = DegradeConfig {
            apply_prob: 1.0,
            ..Default::default()
        };
        cfg.force_category(Category::Blur);
        let mut rng = Rng::new(1, 1);
        for _ in 0..1000 {
            assert_eq!(sample_plan(&mut rng, &cfg).category, Some(Category::Blur));
        }
    }

    #[test]
    fn params_stay_inside_configured_ranges() {
        let cfg = DegradeConfig {
            apply_prob: 1.0,
            ..Default::default()
        };
        let mut rng = Rng::new(11, 0);
        for _ in 0..2000 {
            let r = sample_plan(&mut rng, &cfg);
            let p = &r.params;
            match r.category.unwrap() {
                Category::Blur => assert!(cfg.blur.sigma.contains(p["sigma"])),
                Category::Dark => {
                    assert!(cfg.dark.gamma.contains(p["gamma"]));
                    assert!(cfg.dark.brightness.contains(p["brightness"]));
                    assert!(cfg.dark.noise_sigma.contains(p["noise_sigma"]));
                }
                Category::Haze => {
                    assert!(cfg.haze.contrast.contains(p["contrast"]));
                    assert!(cfg.haze.transmission.contains(p["transmission"]));
                    assert!(cfg.haze.airlight.contains(p["airlight"]));
                }
                Category::Snow => assert!(p["transmission"] >= 0.85),
                Category::Glare => {
                    let n = p["blobs"] as usize;
                    assert!((1..=3).contains(&n));
                    for i in 0..n {
                        assert!(cfg.glare.peak.contains(p[&format!("blob{i}.peak")]));
                    }
                }
            }
        }
    }

    #[test]
    fn skipped_draw_passes_through() {
        let img = sample_image();
        let cfg = DegradeConfig {
            apply_prob: 0.0,
            ..Default::default()
        };
        let (out, rec) = degrade(&img, 5, &cfg);
        assert_eq!(out, img);
        assert!(!rec.applied);
    }

    #[test]
    fn degrade_is_deterministic_and_shape_preserving() {
        let img = sample_image();
        let cfg = DegradeConfig {
            apply_prob: 1.0,
            ..Default::default()
        };
        for seed in 0..25 {
            let (a, ra) = degrade(&img, seed, &cfg);
            let (b, rb) = degrade(&img, seed, &cfg);
            assert_eq!(a, b);
            assert_eq!(ra, rb);
            assert_eq!((a.height(), a.width()), (img.height(), img.width()));
        }
    }

    #[test]
    fn every_category_renders_with_each_severity() {
        let img = sample_image();
        let cfg = DegradeConfig::default();
        for s in Severity::ALL {
            let mut rng = Rng::new(3, s.index() as u64);
            for f in [apply_blur, apply_dark, apply_snow, apply_haze, apply_glare] {
                let out = f(&img, &mut rng, s, &cfg);
                assert_eq!(out.data().len(), img.data().len());
            }
        }
    }

    #[test]
    fn record_serializes_without_absent_fields() {
        let json = serde_json::to_string(&DegradeRecord::skipped()).unwrap();
        assert_eq!(json, r#"{"applied":false,"params":{}}"#);
    }
}
