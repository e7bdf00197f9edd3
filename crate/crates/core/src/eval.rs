//! Scene-level evaluation: fuse each scene's frames, decode, score.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::fuse::{argmax_labels, fuse_scene, FuseError, ProbMap};
use crate::metrics::{metrics, ConfusionMatrix, Metrics, MetricsError};
use crate::pixels::{LabelMap, PixelError};
use crate::sampler::{Scene, SceneManifest};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingInput {
    pub scene_id: String,
    pub what: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingInputs(pub Vec<MissingInput>);

impl fmt::Display for MissingInputs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut by_scene: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for m in &self.0 {
            by_scene.entry(&m.scene_id).or_default().push(&m.what);
        }
        for (i, (scene, items)) in by_scene.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "scene `{scene}`: {}", items.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("missing inputs: {0}")]
    Missing(MissingInputs),
    #[error("manifest has no scenes")]
    NoScenes,
    #[error("scene `{scene}`: {source}")]
    Fuse {
        scene: String,
        #[source]
        source: FuseError,
    },
    #[error("scene `{scene}`: {source}")]
    Score {
        scene: String,
        #[source]
        source: MetricsError,
    },
    #[error("scene `{scene}` has {got} classes, other scenes have {expected}")]
    Classes {
        scene: String,
        expected: usize,
        got: usize,
    },
    #[error("no scored pixels in any scene")]
    NothingScored,
    #[error("reading {path}: {message}")]
    Read { path: PathBuf, message: String },
}

/// Where per-frame probabilities and per-scene labels come from.
pub trait SceneSource {
    fn probmap(&self, scene_id: &str, frame_id: &str) -> Result<Option<ProbMap>, EvalError>;
    fn label(&self, scene: &Scene) -> Result<Option<LabelMap>, EvalError>;
}

/// In-memory source, keyed by `(scene_id, frame_id)` and `scene_id`.
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    pub probmaps: BTreeMap<(String, String), ProbMap>,
    pub labels: BTreeMap<String, LabelMap>,
}

impl SceneSource for MemorySource {
    fn probmap(&self, scene_id: &str, frame_id: &str) -> Result<Option<ProbMap>, EvalError> {
        Ok(self
            .probmaps
            .get(&(scene_id.to_string(), frame_id.to_string()))
            .cloned())
    }

    fn label(&self, scene: &Scene) -> Result<Option<LabelMap>, EvalError> {
        Ok(self.labels.get(&scene.scene_id).cloned())
    }
}

/// Reads `<pred_dir>/<scene_id>/<frame_id>.pmap` and the first label path
/// listed for each scene (relative paths resolve against `label_root`).
#[derive(Debug, Clone)]
pub struct DirSource {
    pub pred_dir: PathBuf,
    pub label_root: PathBuf,
}

impl DirSource {
    pub fn probmap_path(&self, scene_id: &str, frame_id: &str) -> PathBuf {
        self.pred_dir.join(scene_id).join(format!("{frame_id}.pmap"))
    }
}

impl SceneSource for DirSource {
    fn probmap(&self, scene_id: &str, frame_id: &str) -> Result<Option<ProbMap>, EvalError> {
        let path = self.probmap_path(scene_id, frame_id);
        if !path.is_file() {
            return Ok(None);
        }
        let file = std::fs::File::open(&path).map_err(|e| EvalError::Read {
            path: path.clone(),
            message: e.to_string(),
        })?;
        ProbMap::read_from(std::io::BufReader::new(file))
            .map(Some)
            .map_err(|e| EvalError::Read {
                path,
                message: e.to_string(),
            })
    }

    fn label(&self, scene: &Scene) -> Result<Option<LabelMap>, EvalError> {
        let Some(rel) = scene.label() else {
            return Ok(None);
        };
        let path = resolve(&self.label_root, rel);
        if !path.is_file() {
            return Ok(None);
        }
        LabelMap::read_png(&path)
            .map(Some)
            .map_err(|e: PixelError| EvalError::Read {
                path,
                message: e.to_string(),
            })
    }
}

fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneReport {
    pub scene_id: String,
    pub frames: usize,
    pub confusion: ConfusionMatrix,
    /// `None` when every label pixel in the scene is ignored.
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub classes: usize,
    pub scenes: usize,
    pub frames: usize,
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
    pub per_scene: Vec<SceneReport>,
}

/// Fuses every manifest frame of each scene, takes the argmax, and scores
/// it against the scene's label. All missing inputs are reported together.
pub fn evaluate_scenes(manifest: &SceneManifest, source: &impl SceneSource) -> Result<EvalReport, EvalError> {
    if manifest.scenes.is_empty() {
        return Err(EvalError::NoScenes);
    }
    let mut missing = Vec::new();
    let mut loaded = Vec::with_capacity(manifest.scenes.len());
    for scene in &manifest.scenes {
        let mut frames = Vec::with_capacity(scene.frames.len());
        for f in &scene.frames {
            match source.probmap(&scene.scene_id, &f.frame_id)? {
                Some(p) => frames.push(p),
                None => missing.push(MissingInput {
                    scene_id: scene.scene_id.clone(),
                    what: format!("probability map for frame `{}`", f.frame_id),
                }),
            }
        }
        let label = source.label(scene)?;
        if label.is_none() {
            missing.push(MissingInput {
                scene_id: scene.scene_id.clone(),
                what: "label map".into(),
            });
        }
        loaded.push((scene, frames, label));
    }
    if !missing.is_empty() {
        return Err(EvalError::Missing(MissingInputs(missing)));
    }

    let mut classes = None;
    let mut global: Option<ConfusionMatrix> = None;
    let mut per_scene = Vec::with_capacity(loaded.len());
    let mut frame_total = 0;
    for (scene, frames, label) in loaded {
        let sid = &scene.scene_id;
        let label = label.expect("checked above");
        let fused = fuse_scene(&frames).map_err(|source| EvalError::Fuse {
            scene: sid.clone(),
            source,
        })?;
        let k = *classes.get_or_insert(fused.classes);
        if fused.classes != k {
            return Err(EvalError::Classes {
                scene: sid.clone(),
                expected: k,
                got: fused.classes,
            });
        }
        let pred = argmax_labels(&fused).map_err(|source| EvalError::Fuse {
            scene: sid.clone(),
            source,
        })?;
        let mut cm = ConfusionMatrix::new(k);
        cm.accumulate(&pred, &label).map_err(|source| EvalError::Score {
            scene: sid.clone(),
            source,
        })?;
        global.get_or_insert_with(|| ConfusionMatrix::new(k)).merge(&cm).expect("same K");
        frame_total += frames.len();
        per_scene.push(SceneReport {
            scene_id: sid.clone(),
            frames: frames.len(),
            metrics: metrics(&cm).ok(),
            confusion: cm,
        });
    }

    let confusion = global.expect("at least one scene");
    let metrics = metrics(&confusion).map_err(|_| EvalError::NothingScored)?;
    Ok(EvalReport {
        classes: confusion.classes,
        scenes: per_scene.len(),
        frames: frame_total,
        metrics,
        confusion,
        per_scene,
    })
}
