//! Joint-space input encoding and zero-score normalization.

use crate::error::{check_len, Error, Result};
use crate::learning::Dataset;
use crate::robot::JointKind;

/// Width of the trigonometric encoding: one slot per prismatic joint, two
/// per revolute joint.
pub fn encoded_width(kinds: &[JointKind]) -> usize {
    kinds
        .iter()
        .map(|k| match k {
            JointKind::Revolute => 2,
            JointKind::Prismatic => 1,
        })
        .sum()
}

/// Maps revolute `q_i` to `(sin q_i, cos q_i)` and passes prismatic
/// displacements through, joint by joint.
pub fn trig_encode(q: &[f64], kinds: &[JointKind]) -> Result<Vec<f64>> {
    check_len("joint positions", kinds.len(), q.len())?;
    let mut out = Vec::with_capacity(encoded_width(kinds));
    for (&qi, kind) in q.iter().zip(kinds) {
        match kind {
            JointKind::Revolute => {
                let (s, c) = qi.sin_cos();
                out.push(s);
                out.push(c);
            }
            JointKind::Prismatic => out.push(qi),
        }
    }
    Ok(out)
}

/// Recovers joint positions from an encoding (revolute angles in `(-π, π]`).
pub fn trig_decode(z: &[f64], kinds: &[JointKind]) -> Result<Vec<f64>> {
    check_len("encoded positions", encoded_width(kinds), z.len())?;
    let mut out = Vec::with_capacity(kinds.len());
    let mut k = 0;
    for kind in kinds {
        match kind {
            JointKind::Revolute => {
                out.push(z[k].atan2(z[k + 1]));
                k += 2;
            }
            JointKind::Prismatic => {
                out.push(z[k]);
                k += 1;
            }
        }
    }
    Ok(out)
}

/// `(a - mu) ⊘ sigma`.
pub fn normalize(a: &[f64], mu: &[f64], sigma: &[f64]) -> Result<Vec<f64>> {
    check_len("normalization mean", a.len(), mu.len())?;
    check_len("normalization std", a.len(), sigma.len())?;
    if let Some((i, s)) = sigma.iter().enumerate().find(|(_, s)| !(**s > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "sigma[{i}] = {s} must be positive"
        )));
    }
    Ok(a.iter()
        .zip(mu)
        .zip(sigma)
        .map(|((a, m), s)| (a - m) / s)
        .collect())
}

/// `na ⊙ sigma + mu`, the inverse of [`normalize`].
pub fn denormalize(na: &[f64], mu: &[f64], sigma: &[f64]) -> Result<Vec<f64>> {
    check_len("normalization mean", na.len(), mu.len())?;
    check_len("normalization std", na.len(), sigma.len())?;
    Ok(na
        .iter()
        .zip(mu)
        .zip(sigma)
        .map(|((a, m), s)| a * s + m)
        .collect())
}

/// Zero-score parameters for the encoded input and the torque output.
#[derive(Debug, Clone, PartialEq)]
pub struct NormParams {
    pub mu_in: Vec<f64>,
    pub sigma_in: Vec<f64>,
    pub mu_out: Vec<f64>,
    pub sigma_out: Vec<f64>,
}

impl NormParams {
    pub fn identity(in_dim: usize, out_dim: usize) -> Self {
        NormParams {
            mu_in: vec![0.0; in_dim],
            sigma_in: vec![1.0; in_dim],
            mu_out: vec![0.0; out_dim],
            sigma_out: vec![1.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.mu_in.len()
    }

    pub fn out_dim(&self) -> usize {
        self.mu_out.len()
    }

    pub fn normalize_input(&self, z: &[f64]) -> Result<Vec<f64>> {
        normalize(z, &self.mu_in, &self.sigma_in)
    }

    pub fn normalize_output(&self, tau: &[f64]) -> Result<Vec<f64>> {
        normalize(tau, &self.mu_out, &self.sigma_out)
    }

    pub fn denormalize_output(&self, ntau: &[f64]) -> Result<Vec<f64>> {
        denormalize(ntau, &self.mu_out, &self.sigma_out)
    }
}

fn column_stats<'a>(
    rows: impl Iterator<Item = &'a [f64]> + Clone,
    dim: usize,
    label: &str,
) -> (Vec<f64>, Vec<f64>) {
    let mut count = 0usize;
    let mut mean = vec![0.0; dim];
    for row in rows.clone() {
        count += 1;
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= count as f64;
    }
    let mut var = vec![0.0; dim];
    for row in rows {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    let std = var
        .into_iter()
        .enumerate()
        .map(|(j, s)| {
            let sd = (s / count as f64).sqrt();
            if sd > 0.0 {
                sd
            } else {
                log::warn!("{label} column {j} is constant; using unit scale");
                1.0
            }
        })
        .collect();
    (mean, std)
}

/// Per-column mean and population standard deviation of `x1` and `y`.
///
/// Constant columns get a unit scale so normalization stays total.
pub fn fit_norm_params(d: &Dataset) -> Result<NormParams> {
    if d.len() < 2 {
        return Err(Error::EmptyDataset(
            "normalization needs at least two samples",
        ));
    }
    let (in_dim, out_dim) = (d.input_dim(), d.output_dim());
    let (mu_in, sigma_in) = column_stats(d.samples.iter().map(|s| s.x1.as_slice()), in_dim, "input");
    let (mu_out, sigma_out) =
        column_stats(d.samples.iter().map(|s| s.y.as_slice()), out_dim, "output");
    Ok(NormParams {
        mu_in,
        sigma_in,
        mu_out,
        sigma_out,
    })
}

/// Normalizes `x1` and `y`; `x2` is copied unchanged.
pub fn normalize_dataset(d: &Dataset, p: &NormParams) -> Result<Dataset> {
    let mut out = d.clone();
    for s in &mut out.samples {
        s.x1 = p.normalize_input(&s.x1)?;
        s.y = p.normalize_output(&s.y)?;
    }
    Ok(out)
}
