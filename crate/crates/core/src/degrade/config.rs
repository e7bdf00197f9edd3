use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Blur,
    Dark,
    Snow,
    Haze,
    Glare,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Blur,
        Category::Dark,
        Category::Snow,
        Category::Haze,
        Category::Glare,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Blur => "blur",
            Category::Dark => "dark",
            Category::Snow => "snow",
            Category::Haze => "haze",
            Category::Glare => "glare",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category `{s}` (expected blur|dark|snow|haze|glare)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Light,
    Medium,
    Heavy,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Severity::Light, Severity::Medium, Severity::Heavy];

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Light => "light",
            Severity::Medium => "medium",
            Severity::Heavy => "heavy",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Severity::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown severity `{s}` (expected light|medium|heavy)"))
    }
}

/// Closed parameter interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

/// Which end of a range is the strong one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strength {
    /// Larger values degrade more (blur sigma, gamma, noise).
    Rising,
    /// Smaller values degrade more (brightness, contrast, transmission).
    Falling,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    /// Third of the range selected by `severity`; heavy is always the strong end.
    pub fn band(&self, severity: Severity, strength: Strength) -> Range {
        let step = (self.hi - self.lo) / 3.0;
        let k = match strength {
            Strength::Rising => severity.index(),
            Strength::Falling => 2 - severity.index(),
        } as f64;
        let lo = self.lo + step * k;
        // Pin the outer edge exactly so the union of bands is the whole range.
        let hi = if k == 2.0 { self.hi } else { lo + step };
        Range { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    fn parse(key: &str, value: &str) -> Result<Self, ConfigError> {
        let bad = |reason: &str| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: reason.to_string(),
        };
        let (a, b) = value.split_once(',').ok_or_else(|| bad("expected `lo,hi`"))?;
        let lo: f64 = a.trim().parse().map_err(|_| bad("lo is not a number"))?;
        let hi: f64 = b.trim().parse().map_err(|_| bad("hi is not a number"))?;
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(bad("need finite lo <= hi"));
        }
        Ok(Range { lo, hi })
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlurRanges {
    pub sigma: Range,
    pub motion_prob: f64,
    pub motion_length: Range,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DarkRanges {
    pub gamma: Range,
    pub brightness: Range,
    pub noise_sigma: Range,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HazeRanges {
    pub contrast: Range,
    pub transmission: Range,
    pub airlight: Range,
    pub blur_prob: f64,
    pub blur_sigma: Range,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnowRanges {
    /// Particles per megapixel for light / medium / heavy.
    pub density: [f64; 3],
    pub transmission: Range,
    pub streak_prob: f64,
    pub streak_length: Range,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlareRanges {
    pub peak: Range,
    /// Blob radius as a fraction of `min(H, W)`.
    pub radius: Range,
    pub streak_prob: f64,
}

/// Everything that shapes the degradation draw, with the overridable defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradeConfig {
    pub apply_prob: f64,
    /// Indexed by [`Category::index`].
    pub category_weights: [f64; 5],
    /// Indexed by [`Severity::index`].
    pub severity_weights: [f64; 3],
    pub blur: BlurRanges,
    pub dark: DarkRanges,
    pub haze: HazeRanges,
    pub snow: SnowRanges,
    pub glare: GlareRanges,
}

impl Default for DegradeConfig {
    fn default() -> Self {
        Self {
            apply_prob: 0.5,
            category_weights: [0.29, 0.26, 0.16, 0.16, 0.13],
            severity_weights: [1.0 / 3.0; 3],
            blur: BlurRanges {
                sigma: Range::new(0.5, 3.5),
                motion_prob: 0.5,
                motion_length: Range::new(5.0, 25.0),
            },
            dark: DarkRanges {
                gamma: Range::new(1.15, 2.6),
                brightness: Range::new(0.5, 0.95),
                noise_sigma: Range::new(2.0, 10.0),
            },
            haze: HazeRanges {
                contrast: Range::new(0.6, 0.95),
                transmission: Range::new(0.55, 0.9),
                airlight: Range::new(220.0, 255.0),
                blur_prob: 0.3,
                blur_sigma: Range::new(0.5, 1.2),
            },
            snow: SnowRanges {
                density: [150.0, 500.0, 1200.0],
                transmission: Range::new(0.85, 0.97),
                streak_prob: 0.5,
                streak_length: Range::new(5.0, 25.0),
            },
            glare: GlareRanges {
                peak: Range::new(120.0, 255.0),
                radius: Range::new(0.1, 0.45),
                streak_prob: 0.5,
            },
        }
    }
}

impl DegradeConfig {
    pub fn weight(&self, category: Category) -> f64 {
        self.category_weights[category.index()]
    }

    /// Point mass on one category.
    pub fn force_category(&mut self, category: Category) {
        self.category_weights = [0.0; 5];
        self.category_weights[category.index()] = 1.0;
    }

    /// Point mass on one severity.
    pub fn force_severity(&mut self, severity: Severity) {
        self.severity_weights = [0.0; 3];
        self.severity_weights[severity.index()] = 1.0;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{name} = {p} is outside [0, 1]")))
            }
        };
        prob("apply_prob", self.apply_prob)?;
        prob("blur.motion_prob", self.blur.motion_prob)?;
        prob("haze.blur_prob", self.haze.blur_prob)?;
        prob("snow.streak_prob", self.snow.streak_prob)?;
        prob("glare.streak_prob", self.glare.streak_prob)?;

        if self.category_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(ConfigError::Invalid("category weights must be >= 0".into()));
        }
        let total: f64 = self.category_weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ConfigError::Invalid(format!(
                "category weights sum to {total}, expected 1"
            )));
        }
        if self.severity_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || self.severity_weights.iter().sum::<f64>() <= 0.0
        {
            return Err(ConfigError::Invalid(
                "severity weights must be >= 0 with a positive sum".into(),
            ));
        }
        if self.snow.density.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(ConfigError::Invalid("snow densities must be >= 0".into()));
        }
        for (name, r) in self.ranges() {
            if !(r.lo.is_finite() && r.hi.is_finite() && r.lo <= r.hi) {
                return Err(ConfigError::Invalid(format!("range {name} = {r} is not ordered")));
            }
        }
        let unit = |name: &str, r: Range| {
            if r.lo >= 0.0 && r.hi <= 1.0 {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{name} = {r} must lie in [0, 1]")))
            }
        };
        unit("haze.transmission", self.haze.transmission)?;
        unit("snow.transmission", self.snow.transmission)?;
        if self.blur.sigma.lo <= 0.0 || self.haze.blur_sigma.lo <= 0.0 {
            return Err(ConfigError::Invalid("blur sigmas must be positive".into()));
        }
        Ok(())
    }

    fn ranges(&self) -> Vec<(&'static str, Range)> {
        vec![
            ("blur.sigma", self.blur.sigma),
            ("blur.motion_length", self.blur.motion_length),
            ("dark.gamma", self.dark.gamma),
            ("dark.brightness", self.dark.brightness),
            ("dark.noise_sigma", self.dark.noise_sigma),
            ("haze.contrast", self.haze.contrast),
            ("haze.transmission", self.haze.transmission),
            ("haze.airlight", self.haze.airlight),
            ("haze.blur_sigma", self.haze.blur_sigma),
            ("snow.transmission", self.snow.transmission),
            ("snow.streak_length", self.snow.streak_length),
            ("glare.peak", self.glare.peak),
            ("glare.radius", self.glare.radius),
        ]
    }

    /// Applies one `key=value` override. Keys are relative to the
    /// `degrade.` section, e.g. `apply_prob`, `weights.snow`, `blur.sigma`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let num = || -> Result<f64, ConfigError> {
            value.trim().parse::<f64>().map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                value: value.to_string(),
                reason: "not a number".into(),
            })
        };
        let range = || Range::parse(key, value);
        if let Some(name) = key.strip_prefix("weights.") {
            let c: Category = name
                .parse()
                .map_err(|_| ConfigError::UnknownKey(key.to_string()))?;
            self.category_weights[c.index()] = num()?;
            return Ok(());
        }
        if let Some(name) = key.strip_prefix("severity.") {
            let s: Severity = name
                .parse()
                .map_err(|_| ConfigError::UnknownKey(key.to_string()))?;
            self.severity_weights[s.index()] = num()?;
            return Ok(());
        }
        if let Some(name) = key.strip_prefix("snow.density.") {
            let s: Severity = name
                .parse()
                .map_err(|_| ConfigError::UnknownKey(key.to_string()))?;
            self.snow.density[s.index()] = num()?;
            return Ok(());
        }
        match key {
            "apply_prob" => self.apply_prob = num()?,
            "blur.sigma" => self.blur.sigma = range()?,
            "blur.motion_prob" => self.blur.motion_prob = num()?,
            "blur.motion_length" => self.blur.motion_length = range()?,
            "dark.gamma" => self.dark.gamma = range()?,
            "dark.brightness" => self.dark.brightness = range()?,
            "dark.noise_sigma" => self.dark.noise_sigma = range()?,
            "haze.contrast" => self.haze.contrast = range()?,
            "haze.transmission" => self.haze.transmission = range()?,
            "haze.airlight" => self.haze.airlight = range()?,
            "haze.blur_prob" => self.haze.blur_prob = num()?,
            "haze.blur_sigma" => self.haze.blur_sigma = range()?,
            "snow.transmission" => self.snow.transmission = range()?,
            "snow.streak_prob" => self.snow.streak_prob = num()?,
            "snow.streak_length" => self.snow.streak_length = range()?,
            "glare.peak" => self.glare.peak = range()?,
            "glare.radius" => self.glare.radius = range()?,
            "glare.streak_prob" => self.glare.streak_prob = num()?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Canonical `key=value` listing, stable across runs.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = vec![("apply_prob".to_string(), self.apply_prob.to_string())];
        for c in Category::ALL {
            out.push((format!("weights.{c}"), self.weight(c).to_string()));
        }
        for s in Severity::ALL {
            out.push((format!("severity.{s}"), self.severity_weights[s.index()].to_string()));
        }
        for s in Severity::ALL {
            out.push((format!("snow.density.{s}"), self.snow.density[s.index()].to_string()));
        }
        out.push(("blur.motion_prob".into(), self.blur.motion_prob.to_string()));
        out.push(("haze.blur_prob".into(), self.haze.blur_prob.to_string()));
        out.push(("snow.streak_prob".into(), self.snow.streak_prob.to_string()));
        out.push(("glare.streak_prob".into(), self.glare.streak_prob.to_string()));
        for (name, r) in self.ranges() {
            out.push((name.to_string(), r.to_string()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_validates() {
        DegradeConfig::default().validate().unwrap();
        let w: f64 = DegradeConfig::default().category_weights.iter().sum();
        assert!((w - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bands_partition_range() {
        let r = Range::new(0.5, 3.5);
        let light = r.band(Severity::Light, Strength::Rising);
        let heavy = r.band(Severity::Heavy, Strength::Rising);
        assert_eq!((light.lo, light.hi), (0.5, 1.5));
        assert_eq!(heavy.hi, 3.5);
        assert!((heavy.lo - 2.5).abs() < 1e-12);
        // Falling: heavy is the low end.
        let b = Range::new(0.5, 0.95).band(Severity::Heavy, Strength::Falling);
        assert_eq!(b.lo, 0.5);
        assert!((b.hi - 0.65).abs() < 1e-12);
    }

    #[test]
    fn set_and_reject() {
        let mut cfg = DegradeConfig::default();
        cfg.set("apply_prob", "0.25").unwrap();
        cfg.set("blur.sigma", "1,2").unwrap();
        cfg.set("snow.density.heavy", "900").unwrap();
        assert_eq!(cfg.apply_prob, 0.25);
        assert_eq!(cfg.blur.sigma, Range::new(1.0, 2.0));
        assert_eq!(cfg.snow.density[2], 900.0);
        assert!(matches!(cfg.set("blur.nope", "1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(cfg.set("weights.fog", "1"), Err(ConfigError::UnknownKey(_))));
        assert!(cfg.set("blur.sigma", "3,1").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = DegradeConfig::default();
        cfg.apply_prob = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = DegradeConfig::default();
        cfg.category_weights[0] = 0.5;
        assert!(cfg.validate().is_err());
        let mut cfg = DegradeConfig::default();
        cfg.force_category(Category::Haze);
        cfg.validate().unwrap();
    }

    #[test]
    fn entries_round_trip_through_set() {
        let mut a = DegradeConfig::default();
        a.set("glare.peak", "100,200").unwrap();
        let mut b = DegradeConfig::default();
        for (k, v) in a.entries() {
            b.set(&k, &v).unwrap();
        }
        assert_eq!(a, b);
    }
}
