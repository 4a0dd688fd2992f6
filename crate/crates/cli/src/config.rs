//! Experiment configuration file and its resolution into runtime objects.

use std::path::{Path, PathBuf};

use gravcomp::controller::GccParams;
use gravcomp::evaluation::{CurveSetup, Method};
use gravcomp::learning::TrainHyper;
use gravcomp::plant::{DisturbanceParams, DriftDynParams, NoiseParams, Plant};
use gravcomp::robot::RobotModel;
use gravcomp::seed::{self, stream};
use gravcomp::teacher::{make_biased_teacher, TeacherModel, HIGH_BIAS, LOW_BIAS};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// Top-level experiment file. Every section is optional and falls back to
/// the fixture defaults; `format_version` and `seed` are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub seed: Option<u64>,
    /// Relative paths resolve against the config file's directory.
    pub output_dir: Option<PathBuf>,
    /// Robot description file; the built-in fixture when absent.
    pub robot: Option<PathBuf>,
    pub disturbance: Option<DisturbanceParams>,
    #[serde(default)]
    pub noise: NoiseSection,
    pub drift: Option<DriftDynParams>,
    #[serde(default)]
    pub teacher: TeacherSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub train: TrainHyper,
    pub gcc: Option<GccParams>,
    #[serde(default)]
    pub evaluate: EvaluateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub sigma_q: f64,
    /// Explicit per-joint torque noise; overrides `relative_tau`.
    pub sigma_tau: Option<Vec<f64>>,
    /// Torque noise as a fraction of each joint's torque spread.
    pub relative_tau: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            sigma_q: 0.002,
            sigma_tau: None,
            relative_tau: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasLevel {
    Low,
    High,
}

impl BiasLevel {
    pub fn name(self) -> &'static str {
        match self {
            BiasLevel::Low => "low",
            BiasLevel::High => "high",
        }
    }

    fn tag(self) -> u64 {
        match self {
            BiasLevel::Low => 0,
            BiasLevel::High => 1,
        }
    }

    pub fn all() -> [BiasLevel; 2] {
        [BiasLevel::Low, BiasLevel::High]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherSection {
    pub low_bias: f64,
    pub high_bias: f64,
    /// Teacher used for distillation and the teacher baselines.
    pub level: BiasLevel,
}

impl Default for TeacherSection {
    fn default() -> Self {
        TeacherSection {
            low_bias: LOW_BIAS,
            high_bias: HIGH_BIAS,
            level: BiasLevel::Low,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Random,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub mode: SamplingMode,
    /// Training states in random mode.
    pub train_count: usize,
    /// Positions per joint in grid mode.
    pub grid_points: usize,
    /// Increment magnitude of grid states, rad.
    pub grid_dq: f64,
    pub val_count: usize,
    pub test_count: usize,
}

impl Default for SamplingSection {
    fn default() -> Self {
        SamplingSection {
            mode: SamplingMode::Random,
            train_count: 1000,
            grid_points: 4,
            grid_dq: 0.01,
            val_count: 2000,
            test_count: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub drift_points: usize,
    pub curve_ts: Vec<usize>,
    pub curve_seeds: usize,
    pub curve_methods: Vec<Method>,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            drift_points: 100,
            curve_ts: vec![10, 50, 200, 1000, 5000],
            curve_seeds: 5,
            curve_methods: vec![Method::Lfs, Method::Pkd],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.format_version != CONFIG_FORMAT_VERSION {
            return Err(CliError::Config(format!(
                "unsupported format_version {} (expected {CONFIG_FORMAT_VERSION})",
                cfg.format_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// A configuration with every default filled in and every object built.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub plant: Plant,
    pub teacher: TeacherSection,
    pub sampling: SamplingSection,
    /// Training hyperparameters; the seed is derived from the master seed.
    pub hyper: TrainHyper,
    pub gcc: GccParams,
    pub evaluate: EvaluateSection,
}

impl Experiment {
    /// `base` is the directory relative paths in `cfg` refer to.
    pub fn resolve(cfg: &ExperimentConfig, base: &Path, ov: &Overrides) -> CliResult<Self> {
        let seed = ov
            .seed
            .or(cfg.seed)
            .ok_or_else(|| CliError::Config("no seed given (set `seed` or pass --seed)".into()))?;
        let out_dir = match (&ov.out, &cfg.output_dir) {
            (Some(out), _) => out.clone(),
            (None, Some(dir)) => base.join(dir),
            (None, None) => {
                return Err(CliError::Config(
                    "no output directory given (set `output_dir` or pass --out)".into(),
                ))
            }
        };
        let robot = match &cfg.robot {
            Some(rel) => {
                let path = base.join(rel);
                if !path.is_file() {
                    return Err(CliError::Config(format!(
                        "robot file {} does not exist",
                        path.display()
                    )));
                }
                RobotModel::load(&path).map_err(|e| CliError::Config(e.to_string()))?
            }
            None => RobotModel::mtm_like(),
        };
        let n = robot.dof();
        let disturbance = cfg
            .disturbance
            .clone()
            .unwrap_or_else(|| DisturbanceParams::default_for(n));
        let noise = match &cfg.noise.sigma_tau {
            Some(s) => NoiseParams {
                sigma_q: cfg.noise.sigma_q,
                sigma_tau: s.clone(),
            },
            None => NoiseParams::calibrated(
                &robot,
                &disturbance,
                cfg.noise.sigma_q,
                cfg.noise.relative_tau,
            )
            .map_err(config_err)?,
        };
        let drift = cfg.drift.clone().unwrap_or_else(|| DriftDynParams::default_for(n));
        let plant = Plant::new(robot, disturbance, noise, drift).map_err(config_err)?;
        let gcc = cfg.gcc.clone().unwrap_or_else(|| GccParams::default_for(n));
        gcc.validate(n).map_err(config_err)?;
        let mut hyper = cfg.train.clone();
        hyper.seed = seed::derive(seed, &[stream::TRAINING]);
        hyper.validate().map_err(config_err)?;
        for s in [cfg.teacher.low_bias, cfg.teacher.high_bias] {
            if !(s >= 0.0) {
                return Err(CliError::Config(format!("teacher bias must be >= 0, got {s}")));
            }
        }
        let sm = &cfg.sampling;
        if sm.train_count == 0 || sm.val_count == 0 || sm.test_count == 0 {
            return Err(CliError::Config("sample counts must be >= 1".into()));
        }
        let ev = &cfg.evaluate;
        if ev.drift_points == 0 || ev.curve_seeds == 0 || ev.curve_ts.contains(&0) {
            return Err(CliError::Config(
                "drift_points, curve_seeds and curve_ts entries must be >= 1".into(),
            ));
        }
        Ok(Experiment {
            seed,
            out_dir,
            plant,
            teacher: cfg.teacher.clone(),
            sampling: cfg.sampling.clone(),
            hyper,
            gcc,
            evaluate: cfg.evaluate.clone(),
        })
    }

    /// Loads `path` and resolves it against its own directory.
    pub fn from_file(path: &Path, ov: &Overrides) -> CliResult<Self> {
        let cfg = ExperimentConfig::load(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::resolve(&cfg, base, ov)
    }

    pub fn bias(&self, level: BiasLevel) -> f64 {
        match level {
            BiasLevel::Low => self.teacher.low_bias,
            BiasLevel::High => self.teacher.high_bias,
        }
    }

    /// The biased analytic teacher at `level`, derived from the master seed.
    pub fn build_teacher(&self, level: BiasLevel) -> CliResult<TeacherModel> {
        let mut rng = seed::rng_for(self.seed, &[stream::TEACHER_BIAS, level.tag()]);
        let mut t = make_biased_teacher(&self.plant, self.bias(level), &mut rng)?;
        t.bias_level = level.name().to_string();
        Ok(t)
    }

    pub fn curve_setup(&self) -> CurveSetup {
        CurveSetup {
            master_seed: self.seed,
            val_count: self.sampling.val_count,
            test_count: self.sampling.test_count,
        }
    }
}

fn config_err(e: gravcomp::Error) -> CliError {
    CliError::Config(e.to_string())
}
