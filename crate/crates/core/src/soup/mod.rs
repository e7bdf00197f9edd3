//! Uniform model soup over same-architecture checkpoints.
//!
//! Archives are averaged only when every archive has the same tensor names,
//! and each name has the same shape and dtype everywhere. Anything else is
//! refused with a report naming each divergent entry.

pub mod archive;

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

pub use archive::{ArchiveError, Dtype, Tensor, TensorArchive, TensorData};

#[derive(Debug, Clone, PartialEq)]
pub enum Mismatch {
    /// Present in some archives, absent from `archives` (indices).
    Missing { name: String, archives: Vec<usize> },
    /// Per-archive shapes, `None` where the tensor is absent.
    Shape { name: String, shapes: Vec<Option<Vec<u32>>> },
    Dtype { name: String, dtypes: Vec<Option<Dtype>> },
}

impl Mismatch {
    pub fn name(&self) -> &str {
        match self {
            Mismatch::Missing { name, .. } | Mismatch::Shape { name, .. } | Mismatch::Dtype { name, .. } => name,
        }
    }
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mismatch::Missing { name, archives } => {
                write!(f, "`{name}`: missing from archive(s) {archives:?}")
            }
            Mismatch::Shape { name, shapes } => {
                write!(f, "`{name}`: shapes differ:")?;
                for (i, s) in shapes.iter().enumerate() {
                    if let Some(s) = s {
                        write!(f, " #{i}={s:?}")?;
                    }
                }
                Ok(())
            }
            Mismatch::Dtype { name, dtypes } => {
                write!(f, "`{name}`: dtypes differ:")?;
                for (i, d) in dtypes.iter().enumerate() {
                    if let Some(d) = d {
                        write!(f, " #{i}={d}")?;
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompatReport {
    pub archives: usize,
    pub mismatches: Vec<Mismatch>,
}

impl CompatReport {
    pub fn is_ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

impl fmt::Display for CompatReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok: {} archives are compatible", self.archives);
        }
        write!(f, "{} incompatible entries", self.mismatches.len())?;
        for m in &self.mismatches {
            write!(f, "\n  {m}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SoupError {
    #[error("no archives to average")]
    Empty,
    #[error("archives are incompatible: {0}")]
    Incompatible(CompatReport),
}

/// Compares names, shapes and dtypes across all archives. Names are listed
/// in first-appearance order.
pub fn compat_check(archives: &[TensorArchive]) -> CompatReport {
    let mut names: Vec<&String> = Vec::new();
    for a in archives {
        for n in a.names() {
            if !names.contains(&n) {
                names.push(n);
            }
        }
    }
    let mut mismatches = Vec::new();
    for name in names {
        let present: Vec<Option<&Tensor>> = archives.iter().map(|a| a.get(name)).collect();
        let absent: Vec<usize> = present
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.is_none().then_some(i))
            .collect();
        if !absent.is_empty() {
            mismatches.push(Mismatch::Missing {
                name: name.clone(),
                archives: absent,
            });
        }
        let shapes: Vec<Option<Vec<u32>>> = present.iter().map(|t| t.map(|t| t.shape.clone())).collect();
        let first_shape = shapes.iter().flatten().next();
        if shapes.iter().flatten().any(|s| Some(s) != first_shape) {
            mismatches.push(Mismatch::Shape {
                name: name.clone(),
                shapes,
            });
        }
        let dtypes: Vec<Option<Dtype>> = present.iter().map(|t| t.map(Tensor::dtype)).collect();
        let first_dtype = dtypes.iter().flatten().next();
        if dtypes.iter().flatten().any(|d| Some(d) != first_dtype) {
            mismatches.push(Mismatch::Dtype {
                name: name.clone(),
                dtypes,
            });
        }
    }
    CompatReport {
        archives: archives.len(),
        mismatches,
    }
}

/// Elementwise mean of every tensor, summed in f64 and stored back in each
/// tensor's own dtype. Output order follows the first archive.
pub fn soup(archives: &[TensorArchive]) -> Result<TensorArchive, SoupError> {
    let first = archives.first().ok_or(SoupError::Empty)?;
    let report = compat_check(archives);
    if !report.is_ok() {
        return Err(SoupError::Incompatible(report));
    }
    let k = archives.len() as f64;
    let names: Vec<&String> = first.names().collect();
    let averaged: Vec<Tensor> = names
        .par_iter()
        .map(|name| {
            let reference = first.get(name).expect("name from first archive");
            let mut acc = vec![0.0f64; reference.data.len()];
            for a in archives {
                let t = a.get(name).expect("compatibility checked");
                match &t.data {
                    TensorData::F32(v) => acc.iter_mut().zip(v).for_each(|(s, &x)| *s += f64::from(x)),
                    TensorData::F64(v) => acc.iter_mut().zip(v).for_each(|(s, &x)| *s += x),
                }
            }
            let data = match reference.dtype() {
                Dtype::F32 => TensorData::F32(acc.iter().map(|s| (s / k) as f32).collect()),
                Dtype::F64 => TensorData::F64(acc.iter().map(|s| s / k).collect()),
            };
            Tensor {
                shape: reference.shape.clone(),
                data,
            }
        })
        .collect();
    let mut out = TensorArchive::new();
    for (name, t) in names.into_iter().zip(averaged) {
        out.insert(name.clone(), t).expect("shapes preserved");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn archive(entries: &[(&str, Vec<u32>, Vec<f64>)]) -> TensorArchive {
        let mut a = TensorArchive::new();
        for (name, shape, data) in entries {
            a.insert(*name, Tensor::f64(shape.clone(), data.clone())).unwrap();
        }
        a
    }

    #[test]
    fn copies_are_compatible() {
        let a = archive(&[("w", vec![2], vec![1.0, 2.0])]);
        let r = compat_check(&[a.clone(), a.clone()]);
        assert!(r.is_ok());
        assert!(r.to_string().starts_with("ok"));
    }

    #[test]
    fn extra_tensor_named() {
        let a = archive(&[("w", vec![1], vec![1.0])]);
        let b = archive(&[("w", vec![1], vec![1.0]), ("head.bias", vec![1], vec![0.0])]);
        let r = compat_check(&[a, b]);
        assert_eq!(
            r.mismatches,
            vec![Mismatch::Missing {
                name: "head.bias".into(),
                archives: vec![0]
            }]
        );
    }

    #[test]
    fn shape_and_dtype_named() {
        let a = archive(&[("w", vec![2], vec![1.0, 2.0]), ("b", vec![1], vec![0.0])]);
        let mut b = archive(&[("w", vec![1, 2], vec![1.0, 2.0])]);
        b.insert("b", Tensor::f32(vec![1], vec![0.0])).unwrap();
        let r = compat_check(&[a.clone(), b.clone()]);
        let names: Vec<&str> = r.mismatches.iter().map(Mismatch::name).collect();
        assert_eq!(names, vec!["w", "b"]);
        assert!(matches!(r.mismatches[0], Mismatch::Shape { .. }));
        assert!(matches!(r.mismatches[1], Mismatch::Dtype { .. }));
        assert!(matches!(soup(&[a, b]), Err(SoupError::Incompatible(_))));
    }

    #[test]
    fn scalar_mean() {
        let parts: Vec<TensorArchive> = [1.0, 2.0, 6.0]
            .iter()
            .map(|&v| archive(&[("s", vec![], vec![v])]))
            .collect();
        let out = soup(&parts).unwrap();
        assert_eq!(out.get("s").unwrap().data, TensorData::F64(vec![3.0]));
    }

    #[test]
    fn mixed_dtype_tensors_keep_their_dtype() {
        let mut a = TensorArchive::new();
        a.insert("h", Tensor::f32(vec![2], vec![1.0, 3.0])).unwrap();
        a.insert("d", Tensor::f64(vec![1], vec![0.1])).unwrap();
        let mut b = TensorArchive::new();
        b.insert("h", Tensor::f32(vec![2], vec![2.0, 4.0])).unwrap();
        b.insert("d", Tensor::f64(vec![1], vec![0.3])).unwrap();
        let out = soup(&[a, b]).unwrap();
        assert_eq!(out.get("h").unwrap().data, TensorData::F32(vec![1.5, 3.5]));
        assert_eq!(out.get("d").unwrap().dtype(), Dtype::F64);
        assert_eq!(out.names().collect::<Vec<_>>(), vec!["h", "d"]);
    }

    #[test]
    fn empty_input() {
        assert!(matches!(soup(&[]), Err(SoupError::Empty)));
    }
}
