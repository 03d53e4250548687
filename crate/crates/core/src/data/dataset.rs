use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Row-major feature matrix with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    features: Vec<f64>,
    labels: Option<Vec<usize>>,
    n_classes: usize,
}

impl Dataset {
    pub fn new(dim: usize, features: Vec<f64>, labels: Option<Vec<usize>>, n_classes: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("zero feature dimension".into()));
        }
        if features.len() % dim != 0 {
            return Err(Error::Dimension(format!(
                "{} feature values do not split into rows of {dim}",
                features.len()
            )));
        }
        if let Some(bad) = features.iter().find(|v| !v.is_finite()) {
            return Err(Error::NumericInput(format!("feature value {bad}")));
        }
        let n = features.len() / dim;
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::Dimension(format!("{} labels for {n} rows", labels.len())));
            }
            if let Some(l) = labels.iter().find(|l| **l >= n_classes) {
                return Err(Error::Contract(format!("label {l} >= {n_classes} classes")));
            }
        }
        Ok(Self {
            dim,
            features,
            labels,
            n_classes,
        })
    }

    pub fn labeled(dim: usize, rows: &[Vec<f64>], labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        Self::new(dim, rows.concat(), Some(labels), n_classes)
    }

    pub fn empty(dim: usize, n_classes: usize, labeled: bool) -> Self {
        Self {
            dim,
            features: Vec::new(),
            labels: labeled.then(Vec::new),
            n_classes,
        }
    }

    pub fn len(&self) -> usize {
        self.features.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.dim)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    /// Labels, or a contract error for an unlabeled pool.
    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Contract("dataset has no labels".into()))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in self.labels().unwrap_or(&[]) {
            counts[l] += 1;
        }
        counts
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Self {
            dim: self.dim,
            features,
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            n_classes: self.n_classes,
        }
    }

    pub fn without_labels(&self) -> Self {
        Self {
            labels: None,
            ..self.clone()
        }
    }

    pub fn push(&mut self, row: &[f64], label: Option<usize>) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::Dimension(format!("row of {} for dim {}", row.len(), self.dim)));
        }
        match (&mut self.labels, label) {
            (Some(labels), Some(l)) if l < self.n_classes => labels.push(l),
            (None, None) => {}
            _ => return Err(Error::Contract("label presence does not match dataset".into())),
        }
        self.features.extend_from_slice(row);
        Ok(())
    }

    /// CSV with header `f0,..,f{D-1},label`; unlabeled rows carry `-1`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (0..self.dim).map(|i| format!("f{i}")).collect();
        writeln!(w, "{},label", header.join(","))?;
        for (i, row) in self.rows().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let label = self.labels.as_ref().map_or(-1, |l| l[i] as i64);
            writeln!(w, "{},{label}", cells.join(","))?;
        }
        Ok(())
    }

    /// Reads the CSV layout of [`Dataset::write_csv`], returning the labeled
    /// and the unlabeled rows separately. `n_classes` defaults to one more
    /// than the largest label.
    pub fn read_csv<R: BufRead>(r: R, n_classes: Option<usize>) -> Result<(Dataset, Dataset)> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: "empty CSV".into(),
            })??;
        let cols: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
        let dim = cols.len().saturating_sub(1);
        let expected: Vec<String> = (0..dim).map(|i| format!("f{i}")).chain(["label".to_string()]).collect();
        if dim == 0 || cols != expected {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header f0,..,f{{D-1}},label; got {header:?}"),
            });
        }
        let (mut lab_x, mut lab_y, mut unl_x) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != dim + 1 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("{} fields, expected {}", cells.len(), dim + 1),
                });
            }
            let mut row = Vec::with_capacity(dim);
            for c in &cells[..dim] {
                row.push(c.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: line_no,
                    message: format!("feature {c:?}: {e}"),
                })?);
            }
            let label: i64 = cells[dim].trim().parse().map_err(|e| Error::Parse {
                line: line_no,
                message: format!("label {:?}: {e}", cells[dim]),
            })?;
            match label {
                -1 => unl_x.extend(row),
                l if l >= 0 => {
                    lab_x.extend(row);
                    lab_y.push(l as usize);
                }
                l => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("negative label {l}"),
                    })
                }
            }
        }
        let n_classes = n_classes.unwrap_or_else(|| lab_y.iter().max().map_or(0, |m| m + 1));
        Ok((
            Dataset::new(dim, lab_x, Some(lab_y), n_classes)?,
            Dataset::new(dim, unl_x, None, n_classes)?,
        ))
    }
}
