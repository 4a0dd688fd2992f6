//! Datasets, state sampling, the direction-masked compensation model and
//! its training loops.

mod model;
mod sampling;
mod train;

use std::path::Path;

pub use model::{
    load_model, masked_loss, masked_loss_grad, pkd_objective, save_model, CompensationModel,
    NetGrads, PreparedSet, MODEL_FORMAT_VERSION,
};
pub use sampling::{
    collect_dataset, random_sample_states, systematic_sample_grid, State, DQ_MAX, DQ_MIN,
    GRID_CAP,
};
pub use train::{
    early_stop_check, lambda_schedule, train_lfs, train_pkd, train_pkd_on, train_with_norm,
    EarlyStop, LogRow, TrainHyper, TrainOutcome,
};

use crate::error::{Error, Result};

/// One observation: encoded position `x1`, increment `x2 = Δq`, torque `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    System,
    Teacher,
    Joint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub provenance: Provenance,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(provenance: Provenance) -> Self {
        Dataset {
            provenance,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x1.len())
    }

    pub fn output_dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.y.len())
    }

    /// `self ∪ other`, tagged as joint data.
    pub fn union(&self, other: &Dataset) -> Dataset {
        let mut samples = self.samples.clone();
        samples.extend(other.samples.iter().cloned());
        Dataset {
            provenance: Provenance::Joint,
            samples,
        }
    }

    fn check_homogeneous(&self) -> Result<()> {
        let (a, b, c) = match self.samples.first() {
            Some(s) => (s.x1.len(), s.x2.len(), s.y.len()),
            None => return Ok(()),
        };
        for s in &self.samples {
            if s.x1.len() != a || s.x2.len() != b || s.y.len() != c {
                return Err(Error::DimensionMismatch {
                    what: "dataset rows",
                    expected: a + b + c,
                    got: s.x1.len() + s.x2.len() + s.y.len(),
                });
            }
        }
        Ok(())
    }

    /// CSV with header `x1_0.., x2_0.., y_0..` and shortest round-trip
    /// decimal values.
    pub fn to_csv_string(&self) -> Result<String> {
        self.check_homogeneous()?;
        let (a, b, c) = (
            self.input_dim(),
            self.samples.first().map_or(0, |s| s.x2.len()),
            self.output_dim(),
        );
        let mut out = String::new();
        let header: Vec<String> = (0..a)
            .map(|i| format!("x1_{i}"))
            .chain((0..b).map(|i| format!("x2_{i}")))
            .chain((0..c).map(|i| format!("y_{i}")))
            .collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for s in &self.samples {
            let row: Vec<String> = s
                .x1
                .iter()
                .chain(&s.x2)
                .chain(&s.y)
                .map(|v| format!("{v:?}"))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_csv_str(text: &str, provenance: Provenance) -> Result<Self> {
        let bad = |message: String| Error::Parse {
            path: "<dataset>".into(),
            message,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("missing header".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        let count = |prefix: &str| cols.iter().filter(|c| c.starts_with(prefix)).count();
        let (a, b, c) = (count("x1_"), count("x2_"), count("y_"));
        let expected: Vec<String> = (0..a)
            .map(|i| format!("x1_{i}"))
            .chain((0..b).map(|i| format!("x2_{i}")))
            .chain((0..c).map(|i| format!("y_{i}")))
            .collect();
        if cols != expected {
            return Err(bad(format!("unexpected header `{header}`")));
        }
        let mut samples = Vec::new();
        for (k, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let vals = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("row {}: {e}", k + 1)))?;
            if vals.len() != a + b + c {
                return Err(bad(format!(
                    "row {} has {} fields, expected {}",
                    k + 1,
                    vals.len(),
                    a + b + c
                )));
            }
            samples.push(Sample {
                x1: vals[..a].to_vec(),
                x2: vals[a..a + b].to_vec(),
                y: vals[a + b..].to_vec(),
            });
        }
        Ok(Dataset {
            provenance,
            samples,
        })
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path, provenance: Provenance) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text, provenance).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }
}
