//! Confusion-matrix segmentation metrics.

use std::ops::{Add, AddAssign};

use serde::Serialize;
use thiserror::Error;

use crate::pixels::{LabelMap, IGNORE_INDEX};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("prediction is {pred:?} but ground truth is {gt:?}")]
    Shape {
        pred: (usize, usize),
        gt: (usize, usize),
    },
    #[error("{which} label {value} at pixel {pixel} is outside [0, {classes})")]
    OutOfRange {
        which: &'static str,
        value: u8,
        pixel: usize,
        classes: usize,
    },
    #[error("confusion matrices have {0} and {1} classes")]
    ClassMismatch(usize, usize),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
}

/// `K x K` counts; rows are ground truth, columns are prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Self {
        let classes = rows.len();
        assert!(rows.iter().all(|r| r.len() == classes), "matrix must be square");
        Self {
            classes,
            counts: rows.concat(),
        }
    }

    #[inline]
    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    /// Adds every non-ignore pixel of `gt` at `[gt, pred]`. On error the
    /// matrix is left unchanged.
    pub fn accumulate(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<(), MetricsError> {
        if (pred.height, pred.width) != (gt.height, gt.width) || pred.data.len() != gt.data.len() {
            return Err(MetricsError::Shape {
                pred: (pred.height, pred.width),
                gt: (gt.height, gt.width),
            });
        }
        let k = self.classes;
        let range = |which, value: u8, pixel| MetricsError::OutOfRange {
            which,
            value,
            pixel,
            classes: k,
        };
        for (pixel, (&p, &g)) in pred.data.iter().zip(&gt.data).enumerate() {
            if g == IGNORE_INDEX {
                continue;
            }
            if usize::from(g) >= k {
                return Err(range("ground-truth", g, pixel));
            }
            if usize::from(p) >= k {
                return Err(range("predicted", p, pixel));
            }
        }
        for (&p, &g) in pred.data.iter().zip(&gt.data) {
            if g != IGNORE_INDEX {
                self.counts[usize::from(g) * k + usize::from(p)] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<(), MetricsError> {
        if self.classes != other.classes {
            return Err(MetricsError::ClassMismatch(self.classes, other.classes));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

impl AddAssign<&ConfusionMatrix> for ConfusionMatrix {
    fn add_assign(&mut self, rhs: &ConfusionMatrix) {
        self.merge(rhs).expect("class counts must match");
    }
}

impl Add for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(mut self, rhs: ConfusionMatrix) -> ConfusionMatrix {
        self += &rhs;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    /// `TP / (TP + FP + FN)`; `None` when the denominator is zero.
    pub iou: Vec<Option<f64>>,
    /// Per-class recall; `None` when the class never occurs in ground truth.
    pub acc: Vec<Option<f64>>,
    pub miou: f64,
    pub macc: f64,
    pub aacc: f64,
}

/// Mean over the defined entries.
pub fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let k = cm.classes;
    let mut iou = Vec::with_capacity(k);
    let mut acc = Vec::with_capacity(k);
    for c in 0..k {
        let tp = cm.get(c, c);
        let gt_total: u64 = (0..k).map(|p| cm.get(c, p)).sum();
        let pred_total: u64 = (0..k).map(|g| cm.get(g, c)).sum();
        let union = gt_total + pred_total - tp;
        iou.push((union > 0).then(|| tp as f64 / union as f64));
        acc.push((gt_total > 0).then(|| tp as f64 / gt_total as f64));
    }
    // A non-empty matrix always has some class with a defined IoU and recall.
    Ok(Metrics {
        miou: mean_defined(&iou).unwrap_or(0.0),
        macc: mean_defined(&acc).unwrap_or(0.0),
        aacc: cm.trace() as f64 / total as f64,
        iou,
        acc,
    })
}
