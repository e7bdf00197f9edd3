//! Scene-balanced training plans.
//!
//! Each plan entry draws a scene uniformly (with replacement), then a
//! variant with probability 1/2 each, then a frame uniformly among that
//! scene's frames of that variant. A scene's expected share is therefore
//! `1 / num_scenes` no matter how many frames it has.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use indexmap::IndexMap;
use rand::Rng as _;
use serde::Serialize;
use thiserror::Error;

use crate::rng::{stage, Rng};

#[derive(Debug, Error, PartialEq)]
pub enum ManifestError {
    #[error("line {line}: expected 4 or 5 tab-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: unknown variant `{value}` (expected clean|degraded)")]
    Variant { line: usize, value: String },
    #[error("line {line}: empty {field}")]
    Empty { line: usize, field: &'static str },
    #[error("line {line}: duplicate frame `{frame}` in scene `{scene}`")]
    DuplicateFrame {
        line: usize,
        scene: String,
        frame: String,
    },
    #[error("manifest has no scenes")]
    NoScenes,
    #[error("scene `{scene}` has no {variant} frames")]
    MissingVariant { scene: String, variant: Variant },
    #[error("malformed plan line {line}: {reason}")]
    Plan { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Clean,
    Degraded,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Clean => "clean",
            Variant::Degraded => "degraded",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "clean" => Ok(Variant::Clean),
            "degraded" => Ok(Variant::Degraded),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_id: String,
    pub variant: Variant,
    pub image: PathBuf,
    pub label: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    pub frames: Vec<Frame>,
}

impl Scene {
    pub fn frames_of(&self, variant: Variant) -> impl Iterator<Item = &Frame> {
        self.frames.iter().filter(move |f| f.variant == variant)
    }

    /// First label path in manifest order.
    pub fn label(&self) -> Option<&PathBuf> {
        self.frames.iter().find_map(|f| f.label.as_ref())
    }
}

/// Scenes in first-appearance order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SceneManifest {
    pub scenes: Vec<Scene>,
}

impl SceneManifest {
    /// Parses `scene_id<TAB>frame_id<TAB>variant<TAB>image[<TAB>label]` lines.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let mut scenes: IndexMap<String, Scene> = IndexMap::new();
        let mut seen: HashSet<(String, String)> = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let row = raw.trim_end_matches('\r');
            if row.trim().is_empty() || row.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = row.split('\t').collect();
            if !(4..=5).contains(&fields.len()) {
                return Err(ManifestError::FieldCount {
                    line,
                    found: fields.len(),
                });
            }
            for (idx, name) in [(0, "scene_id"), (1, "frame_id"), (3, "image path")] {
                if fields[idx].is_empty() {
                    return Err(ManifestError::Empty { line, field: name });
                }
            }
            let variant = fields[2].parse().map_err(|_| ManifestError::Variant {
                line,
                value: fields[2].to_string(),
            })?;
            let (scene_id, frame_id) = (fields[0].to_string(), fields[1].to_string());
            if !seen.insert((scene_id.clone(), frame_id.clone())) {
                return Err(ManifestError::DuplicateFrame {
                    line,
                    scene: scene_id,
                    frame: frame_id,
                });
            }
            let label = fields
                .get(4)
                .filter(|s| !s.is_empty())
                .map(PathBuf::from);
            scenes
                .entry(scene_id.clone())
                .or_insert_with(|| Scene {
                    scene_id,
                    frames: Vec::new(),
                })
                .frames
                .push(Frame {
                    frame_id,
                    variant,
                    image: PathBuf::from(fields[3]),
                    label,
                });
        }
        Ok(Self {
            scenes: scenes.into_values().collect(),
        })
    }

    pub fn scene(&self, id: &str) -> Option<&Scene> {
        self.scenes.iter().find(|s| s.scene_id == id)
    }

    /// Sampling needs at least one scene and both variants in every scene.
    pub fn validate_for_sampling(&self) -> Result<(), ManifestError> {
        if self.scenes.is_empty() {
            return Err(ManifestError::NoScenes);
        }
        for scene in &self.scenes {
            for variant in [Variant::Clean, Variant::Degraded] {
                if scene.frames_of(variant).next().is_none() {
                    return Err(ManifestError::MissingVariant {
                        scene: scene.scene_id.clone(),
                        variant,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanEntry {
    pub iteration: u64,
    pub scene_id: String,
    pub frame_id: String,
    pub variant: Variant,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SamplePlan {
    pub entries: Vec<PlanEntry>,
}

impl SamplePlan {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `iteration<TAB>scene_id<TAB>frame_id<TAB>variant` per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::with_capacity(self.entries.len() * 32);
        for e in &self.entries {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", e.iteration, e.scene_id, e.frame_id, e.variant);
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, ManifestError> {
        let mut entries = Vec::new();
        for (i, row) in text.lines().enumerate() {
            if row.trim().is_empty() {
                continue;
            }
            let bad = |reason: &str| ManifestError::Plan {
                line: i + 1,
                reason: reason.to_string(),
            };
            let f: Vec<&str> = row.split('\t').collect();
            if f.len() != 4 {
                return Err(bad("expected 4 fields"));
            }
            entries.push(PlanEntry {
                iteration: f[0].parse().map_err(|_| bad("iteration is not an integer"))?,
                scene_id: f[1].to_string(),
                frame_id: f[2].to_string(),
                variant: f[3].parse().map_err(|_| bad("unknown variant"))?,
            });
        }
        Ok(Self { entries })
    }
}

/// Builds `iterations` entries, deterministic in `(manifest, iterations, seed)`.
pub fn build_plan(manifest: &SceneManifest, iterations: u64, seed: u64) -> Result<SamplePlan, ManifestError> {
    manifest.validate_for_sampling()?;
    let pools: Vec<[Vec<&Frame>; 2]> = manifest
        .scenes
        .iter()
        .map(|s| {
            [
                s.frames_of(Variant::Clean).collect(),
                s.frames_of(Variant::Degraded).collect(),
            ]
        })
        .collect();

    let mut rng = Rng::for_stage(seed, stage::PLAN);
    let entries = (0..iterations)
        .map(|iteration| {
            let s = rng.random_range(0..manifest.scenes.len());
            let variant = if rng.random_bool(0.5) {
                Variant::Clean
            } else {
                Variant::Degraded
            };
            let pool = &pools[s][variant as usize];
            let frame = pool[rng.random_range(0..pool.len())];
            PlanEntry {
                iteration,
                scene_id: manifest.scenes[s].scene_id.clone(),
                frame_id: frame.frame_id.clone(),
                variant,
            }
        })
        .collect();
    Ok(SamplePlan { entries })
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct PlanStats {
    pub total: u64,
    pub per_scene: BTreeMap<String, u64>,
    pub per_variant: BTreeMap<Variant, u64>,
    pub per_scene_variant: BTreeMap<String, BTreeMap<Variant, u64>>,
}

pub fn plan_stats(plan: &SamplePlan) -> PlanStats {
    let mut stats = PlanStats::default();
    for e in &plan.entries {
        stats.total += 1;
        *stats.per_scene.entry(e.scene_id.clone()).or_default() += 1;
        *stats.per_variant.entry(e.variant).or_default() += 1;
        *stats
            .per_scene_variant
            .entry(e.scene_id.clone())
            .or_default()
            .entry(e.variant)
            .or_default() += 1;
    }
    stats
}
