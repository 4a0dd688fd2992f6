use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::features::{encoded_width, trig_encode, NormParams};
use crate::net::{backward_batch, forward, forward_batch, l2_penalty, Layer, MlpParams};
use crate::plant::step;
use crate::robot::JointKind;

use super::Dataset;

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "gravcomp-model";

/// Direction-split compensation model: one network per motion direction,
/// both mapping the normalized encoded position to normalized torques.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensationModel {
    pub robot_name: String,
    pub kinds: Vec<JointKind>,
    pub w_plus: MlpParams,
    pub w_minus: MlpParams,
    pub norm: NormParams,
}

impl CompensationModel {
    pub fn new(
        robot_name: impl Into<String>,
        kinds: Vec<JointKind>,
        w_plus: MlpParams,
        w_minus: MlpParams,
        norm: NormParams,
    ) -> Result<Self> {
        let m = CompensationModel {
            robot_name: robot_name.into(),
            kinds,
            w_plus,
            w_minus,
            norm,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let dims = self.w_plus.layer_dims();
        if dims != self.w_minus.layer_dims() {
            return Err(Error::InvalidParameter(format!(
                "direction networks differ in shape: {dims:?} vs {:?}",
                self.w_minus.layer_dims()
            )));
        }
        check_len("network input", encoded_width(&self.kinds), dims[0])?;
        check_len("network output", self.kinds.len(), *dims.last().expect("dims"))?;
        check_len("input normalization", dims[0], self.norm.in_dim())?;
        check_len("output normalization", self.kinds.len(), self.norm.out_dim())?;
        for (name, v) in [
            ("sigma_in", &self.norm.sigma_in),
            ("sigma_out", &self.norm.sigma_out),
        ] {
            if v.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.kinds.len()
    }

    /// Normalized outputs of both direction networks at `q`.
    pub fn normalized_branches(&self, q: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let nz = self.norm.normalize_input(&trig_encode(q, &self.kinds)?)?;
        Ok((forward(&self.w_plus, &nz)?, forward(&self.w_minus, &nz)?))
    }

    /// `τ̂_c = denorm(G(ⁿz; W⁺) ⊙ u(Δq) + G(ⁿz; W⁻) ⊙ (1 - u(Δq)))`.
    pub fn predict(&self, q: &[f64], dq: &[f64]) -> Result<Vec<f64>> {
        check_len("joint increments", self.dof(), dq.len())?;
        let (plus, minus) = self.normalized_branches(q)?;
        let mixed: Vec<f64> = plus
            .iter()
            .zip(&minus)
            .zip(dq)
            .map(|((a, b), d)| {
                let u = step(*d);
                a * u + b * (1.0 - u)
            })
            .collect();
        self.norm.denormalize_output(&mixed)
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        self.w_plus.layer_dims()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: &mut dyn Iterator<Item = &f64>| {
            v.map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
        };
        let _ = writeln!(s, "{MAGIC} {MODEL_FORMAT_VERSION}");
        let _ = writeln!(s, "robot {}", self.robot_name);
        let kinds: Vec<String> = self.kinds.iter().map(|k| k.code().to_string()).collect();
        let _ = writeln!(s, "kinds {}", kinds.join(" "));
        let dims: Vec<String> = self.layer_dims().iter().map(|d| d.to_string()).collect();
        let _ = writeln!(s, "dims {}", dims.join(" "));
        for (name, v) in [
            ("mu_in", &self.norm.mu_in),
            ("sigma_in", &self.norm.sigma_in),
            ("mu_out", &self.norm.mu_out),
            ("sigma_out", &self.norm.sigma_out),
        ] {
            let _ = writeln!(s, "{name} {}", join(&mut v.iter()));
        }
        for (tag, net) in [("plus", &self.w_plus), ("minus", &self.w_minus)] {
            let _ = writeln!(s, "net {tag}");
            for (l, layer) in net.layers.iter().enumerate() {
                let (rows, cols) = layer.weights.shape();
                let _ = writeln!(s, "weights {l} {rows} {cols}");
                for r in 0..rows {
                    let _ = writeln!(s, "{}", join(&mut layer.weights.row(r).iter()));
                }
                let _ = writeln!(s, "bias {l} {}", join(&mut layer.bias.iter()));
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut p = Parser {
            lines: text.lines(),
            line_no: 0,
        };
        let first = p.next_line()?;
        let mut head = first.split_whitespace();
        if head.next() != Some(MAGIC) {
            return Err(Error::CorruptModel("missing model header".into()));
        }
        let version = head.next().unwrap_or("");
        if version != MODEL_FORMAT_VERSION.to_string() {
            return Err(Error::VersionMismatch {
                found: version.to_string(),
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let robot_name = p.keyed("robot")?.to_string();
        let kinds = p
            .keyed("kinds")?
            .split_whitespace()
            .map(|c| JointKind::from_code(c).ok_or_else(|| p.corrupt(&format!("joint kind `{c}`"))))
            .collect::<Result<Vec<_>>>()?;
        let dims = p
            .keyed("dims")?
            .split_whitespace()
            .map(|d| d.parse::<usize>().map_err(|_| p.corrupt("layer dims")))
            .collect::<Result<Vec<_>>>()?;
        let mu_in = p.floats("mu_in")?;
        let sigma_in = p.floats("sigma_in")?;
        let mu_out = p.floats("mu_out")?;
        let sigma_out = p.floats("sigma_out")?;
        let w_plus = p.net("plus", &dims)?;
        let w_minus = p.net("minus", &dims)?;
        if p.next_line()? != "end" {
            return Err(p.corrupt("trailer"));
        }
        CompensationModel::new(
            robot_name,
            kinds,
            w_plus,
            w_minus,
            NormParams {
                mu_in,
                sigma_in,
                mu_out,
                sigma_out,
            },
        )
        .map_err(|e| Error::CorruptModel(e.to_string()))
    }
}

struct Parser<'a> {
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Parser<'a> {
    fn corrupt(&self, what: &str) -> Error {
        Error::CorruptModel(format!("bad {what} near line {}", self.line_no))
    }

    fn next_line(&mut self) -> Result<&'a str> {
        self.line_no += 1;
        self.lines
            .next()
            .ok_or_else(|| Error::CorruptModel(format!("unexpected end of file at line {}", self.line_no)))
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest),
            None if line == key => Ok(""),
            _ => Err(self.corrupt(key)),
        }
    }

    fn parse_floats(&self, text: &str, what: &str) -> Result<Vec<f64>> {
        text.split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| self.corrupt(what)))
            .collect()
    }

    fn floats(&mut self, key: &str) -> Result<Vec<f64>> {
        let rest = self.keyed(key)?;
        self.parse_floats(rest, key)
    }

    fn net(&mut self, tag: &str, dims: &[usize]) -> Result<MlpParams> {
        if self.keyed("net")? != tag {
            return Err(self.corrupt("network tag"));
        }
        if dims.len() < 2 {
            return Err(self.corrupt("layer dims"));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (l, w) in dims.windows(2).enumerate() {
            let (rows, cols) = (w[1], w[0]);
            let header = self.keyed("weights")?;
            if header != format!("{l} {rows} {cols}") {
                return Err(self.corrupt("weights header"));
            }
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let line = self.next_line()?;
                let row = self.parse_floats(line, "weight row")?;
                if row.len() != cols {
                    return Err(self.corrupt("weight row length"));
                }
                values.extend(row);
            }
            let bias_line = self.keyed("bias")?;
            let bias = match bias_line.split_once(' ') {
                Some((idx, rest)) if idx == l.to_string() => self.parse_floats(rest, "bias")?,
                _ => return Err(self.corrupt("bias header")),
            };
            if bias.len() != rows {
                return Err(self.corrupt("bias length"));
            }
            layers.push(Layer {
                weights: DMatrix::from_row_slice(rows, cols, &values),
                bias: DVector::from_vec(bias),
            });
        }
        Ok(MlpParams { layers })
    }
}

pub fn save_model(m: &CompensationModel, path: &Path) -> Result<()> {
    std::fs::write(path, m.to_text()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<CompensationModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CompensationModel::from_text(&text)
}

/// A normalized dataset laid out column-wise for batched evaluation.
#[derive(Debug, Clone)]
pub struct PreparedSet {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    /// `u(Δq)` per joint and sample.
    pub mask: DMatrix<f64>,
}

impl PreparedSet {
    /// Expects `d` to be normalized already.
    pub fn from_dataset(d: &Dataset) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::EmptyDataset("cannot prepare an empty dataset"));
        }
        let (a, c) = (d.input_dim(), d.output_dim());
        for s in &d.samples {
            check_len("sample input", a, s.x1.len())?;
            check_len("sample increment", c, s.x2.len())?;
            check_len("sample output", c, s.y.len())?;
        }
        let n = d.len();
        Ok(PreparedSet {
            x: DMatrix::from_fn(a, n, |r, k| d.samples[k].x1[r]),
            y: DMatrix::from_fn(c, n, |r, k| d.samples[k].y[r]),
            mask: DMatrix::from_fn(c, n, |r, k| step(d.samples[k].x2[r])),
        })
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    pub fn gather(&self, idx: &[usize]) -> PreparedSet {
        PreparedSet {
            x: self.x.select_columns(idx),
            y: self.y.select_columns(idx),
            mask: self.mask.select_columns(idx),
        }
    }
}

/// Gradients for both direction networks.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads {
    pub plus: MlpParams,
    pub minus: MlpParams,
}

impl NetGrads {
    fn zeros(w_plus: &MlpParams, w_minus: &MlpParams) -> Self {
        NetGrads {
            plus: w_plus.zeros_like(),
            minus: w_minus.zeros_like(),
        }
    }

    fn add_scaled(&mut self, other: &NetGrads, scale: f64) {
        self.plus.add_scaled(&other.plus, scale);
        self.minus.add_scaled(&other.minus, scale);
    }
}

/// Mean squared masked error over samples and joints, with its gradient.
pub fn masked_loss_grad(
    w_plus: &MlpParams,
    w_minus: &MlpParams,
    batch: &PreparedSet,
) -> Result<(f64, NetGrads)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset("loss over an empty batch"));
    }
    check_len("batch input", w_plus.input_dim(), batch.x.nrows())?;
    check_len("batch output", w_plus.output_dim(), batch.y.nrows())?;
    let fp = forward_batch(w_plus, &batch.x);
    let fm = forward_batch(w_minus, &batch.x);
    let count = batch.y.len() as f64;
    let mut g_plus = DMatrix::zeros(batch.y.nrows(), batch.y.ncols());
    let mut g_minus = g_plus.clone();
    let mut loss = 0.0;
    for k in 0..batch.y.len() {
        let u = batch.mask[k];
        let pred = fp.output[k] * u + fm.output[k] * (1.0 - u);
        let r = pred - batch.y[k];
        loss += r * r;
        let g = 2.0 * r / count;
        g_plus[k] = g * u;
        g_minus[k] = g * (1.0 - u);
    }
    Ok((
        loss / count,
        NetGrads {
            plus: backward_batch(w_plus, &fp, &g_plus),
            minus: backward_batch(w_minus, &fm, &g_minus),
        },
    ))
}

/// Masked loss of a model over a normalized dataset.
pub fn masked_loss(m: &CompensationModel, batch: &Dataset) -> Result<f64> {
    let set = PreparedSet::from_dataset(batch)?;
    Ok(masked_loss_grad(&m.w_plus, &m.w_minus, &set)?.0)
}

/// `(1 - λ) ℒˢ + λ ℒᵖ + ℛ` with `ℛ = c (‖W⁺‖² + ‖W⁻‖²)` over weights.
///
/// Terms with zero weight are not evaluated, so the system or teacher
/// batch may be absent when its weight is zero.
pub fn pkd_objective(
    w_plus: &MlpParams,
    w_minus: &MlpParams,
    system: Option<&PreparedSet>,
    teacher: Option<&PreparedSet>,
    lambda: f64,
    l2_coeff: f64,
) -> Result<(f64, NetGrads)> {
    let mut value = 0.0;
    let mut grads = NetGrads::zeros(w_plus, w_minus);
    for (weight, batch, name) in [
        (1.0 - lambda, system, "system"),
        (lambda, teacher, "teacher"),
    ] {
        if weight == 0.0 {
            continue;
        }
        let batch = batch.ok_or_else(|| {
            Error::InvalidParameter(format!("{name} batch required when its weight is {weight}"))
        })?;
        let (loss, g) = masked_loss_grad(w_plus, w_minus, batch)?;
        value += weight * loss;
        grads.add_scaled(&g, weight);
    }
    let (rp, gp) = l2_penalty(w_plus, l2_coeff);
    let (rm, gm) = l2_penalty(w_minus, l2_coeff);
    value += rp + rm;
    grads.plus.add_scaled(&gp, 1.0);
    grads.minus.add_scaled(&gm, 1.0);
    Ok((value, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::{Provenance, Sample};
    use crate::net::init_mlp;
    use crate::seed;

    const R: JointKind = JointKind::Revolute;

    fn model(seed_value: u64) -> CompensationModel {
        let mut rng = seed::rng(seed_value);
        let dims = [4, 8, 2];
        let mut norm = NormParams::identity(4, 2);
        norm.mu_out = vec![1.5, -0.5];
        norm.sigma_out = vec![2.0, 0.25];
        norm.mu_in = vec![0.1, 0.2, -0.1, 0.3];
        norm.sigma_in = vec![0.7, 0.8, 0.9, 1.1];
        CompensationModel::new(
            "two",
            vec![R, R],
            init_mlp(&dims, &mut rng).unwrap(),
            init_mlp(&dims, &mut rng).unwrap(),
            norm,
        )
        .unwrap()
    }

    #[test]
    fn branch_selection() {
        let m = model(1);
        let q = [0.3, -0.8];
        let (plus, minus) = m.normalized_branches(&q).unwrap();
        let all_plus = m.predict(&q, &[0.01, 0.02]).unwrap();
        assert_eq!(all_plus, m.norm.denormalize_output(&plus).unwrap());
        let all_minus = m.predict(&q, &[-0.01, -0.02]).unwrap();
        assert_eq!(all_minus, m.norm.denormalize_output(&minus).unwrap());
        let mixed = m.predict(&q, &[0.01, -0.02]).unwrap();
        assert_eq!(mixed[0], plus[0] * m.norm.sigma_out[0] + m.norm.mu_out[0]);
        assert_eq!(mixed[1], minus[1] * m.norm.sigma_out[1] + m.norm.mu_out[1]);
        assert!(m.predict(&q, &[0.01]).is_err());
    }

    fn batch(rows: &[([f64; 4], [f64; 2], [f64; 2])]) -> Dataset {
        Dataset {
            provenance: Provenance::System,
            samples: rows
                .iter()
                .map(|(x1, x2, y)| Sample {
                    x1: x1.to_vec(),
                    x2: x2.to_vec(),
                    y: y.to_vec(),
                })
                .collect(),
        }
    }

    #[test]
    fn loss_hand_case() {
        // Single linear layer nets with constant outputs: W⁺ → (1, 2), W⁻ → (-1, 0).
        let mut plus = MlpParams::zeros(&[4, 2]).unwrap();
        plus.layers[0].bias = DVector::from_vec(vec![1.0, 2.0]);
        let mut minus = MlpParams::zeros(&[4, 2]).unwrap();
        minus.layers[0].bias = DVector::from_vec(vec![-1.0, 0.0]);
        let m = CompensationModel::new("two", vec![R, R], plus, minus, NormParams::identity(4, 2))
            .unwrap();
        // Sample 1 (+, -): prediction (1, 0) vs target (0, 0) → errors 1, 0.
        // Sample 2 (-, +): prediction (-1, 2) vs target (1, 1) → errors 4, 1.
        let d = batch(&[
            ([0.0; 4], [0.1, -0.1], [0.0, 0.0]),
            ([0.0; 4], [-0.1, 0.1], [1.0, 1.0]),
        ]);
        assert!((masked_loss(&m, &d).unwrap() - 6.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let m = model(2);
        let kinds = [R, R];
        let q = [0.4, 1.0];
        let x1 = m.norm.normalize_input(&trig_encode(&q, &kinds).unwrap()).unwrap();
        let (plus, minus) = m.normalized_branches(&q).unwrap();
        let d = Dataset {
            provenance: Provenance::System,
            samples: vec![
                Sample { x1: x1.clone(), x2: vec![0.1, 0.1], y: plus },
                Sample { x1, x2: vec![-0.1, -0.1], y: minus },
            ],
        };
        assert_eq!(masked_loss(&m, &d).unwrap(), 0.0);
        assert!(masked_loss(&m, &Dataset::new(Provenance::System)).is_err());
    }

    #[test]
    fn positive_batch_does_not_touch_minus_network() {
        let m = model(3);
        let d = batch(&[
            ([0.1, 0.2, 0.3, 0.4], [0.1, 0.2], [1.0, -1.0]),
            ([-0.5, 0.2, 1.3, 0.0], [0.3, 0.01], [0.5, 2.0]),
        ]);
        let set = PreparedSet::from_dataset(&d).unwrap();
        let (_, g) = masked_loss_grad(&m.w_plus, &m.w_minus, &set).unwrap();
        assert!(g.minus.iter().all(|v| *v == 0.0));
        assert!(g.plus.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn model_text_round_trip_is_bit_exact() {
        let m = model(4);
        let text = m.to_text();
        let back = CompensationModel::from_text(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn wrong_version_and_truncation_are_rejected() {
        let text = model(5).to_text();
        let bumped = text.replacen("gravcomp-model 1", "gravcomp-model 2", 1);
        assert!(matches!(
            CompensationModel::from_text(&bumped),
            Err(Error::VersionMismatch { .. })
        ));
        for cut in [10, text.len() / 2, text.len() - 5] {
            assert!(matches!(
                CompensationModel::from_text(&text[..cut]),
                Err(Error::CorruptModel(_))
            ));
        }
        assert!(matches!(
            CompensationModel::from_text("hello"),
            Err(Error::CorruptModel(_))
        ));
    }
}
