//! Run configuration: a single JSON document mirroring the scenario plus
//! output and execution settings. Flags override file values, file values
//! override the built-in defaults.

use crate::criteria::{QuadOrigin, TruthSpec};
use crate::estimators::OptimizerConfig;
use crate::experiment::Scenario;
use crate::kernel::{MaternSpec, ParamBox};
use crate::GpError;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthConfig {
    pub sigma2: f64,
    pub ell: f64,
    pub nu: f64,
    pub delta: f64,
}

impl Default for TruthConfig {
    fn default() -> Self {
        TruthConfig {
            sigma2: 1.0,
            ell: 3.0,
            nu: 10.0,
            delta: 0.0625,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub nu: f64,
    pub delta: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            nu: 10.0,
            delta: 0.01,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxConfig {
    pub sigma2: [f64; 2],
    pub ell: [f64; 2],
}

impl Default for BoxConfig {
    fn default() -> Self {
        BoxConfig {
            sigma2: [0.01, 100.0],
            ell: [0.2, 10.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    pub m: usize,
    pub origin: QuadOrigin,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            m: 2000,
            origin: QuadOrigin::IidUniform,
        }
    }
}

/// The whole run configuration. Defaults encode the reference study:
/// smooth truth with underestimated model nugget at n = 100.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub truth: TruthConfig,
    pub model: ModelConfig,
    #[serde(rename = "box")]
    pub pbox: BoxConfig,
    pub n: usize,
    pub dim: usize,
    pub n_reps: u64,
    pub master_seed: u64,
    pub quadrature: QuadratureConfig,
    pub optimizer: OptimizerConfig,
    pub out_dir: PathBuf,
    /// 0 means all available cores.
    pub workers: usize,
    /// "csv" always; add "json" for a full report dump.
    pub formats: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            truth: TruthConfig::default(),
            model: ModelConfig::default(),
            pbox: BoxConfig::default(),
            n: 100,
            dim: 1,
            n_reps: 200,
            master_seed: 42,
            quadrature: QuadratureConfig::default(),
            optimizer: OptimizerConfig::default(),
            out_dir: PathBuf::from("out"),
            workers: 0,
            formats: vec!["csv".into()],
        }
    }
}

/// Command-line overrides; precedence flags > file > defaults.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub n: Option<usize>,
    pub n_reps: Option<u64>,
    pub model_delta: Option<f64>,
    pub quad_m: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, GpError> {
        let text = std::fs::read_to_string(path).map_err(|e| GpError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            GpError::Usage(format!("{}: invalid config: {e}", path.display()))
        })
    }

    pub fn emit_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), GpError> {
        std::fs::write(path, self.emit_json()).map_err(|e| GpError::io(path, e))
    }

    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(v) = ov.seed {
            self.master_seed = v;
        }
        if let Some(v) = &ov.out {
            self.out_dir = v.clone();
        }
        if let Some(v) = ov.workers {
            self.workers = v;
        }
        if let Some(v) = ov.n {
            self.n = v;
        }
        if let Some(v) = ov.n_reps {
            self.n_reps = v;
        }
        if let Some(v) = ov.model_delta {
            self.model.delta = v;
        }
        if let Some(v) = ov.quad_m {
            self.quadrature.m = v;
        }
    }

    pub fn truth_spec(&self) -> Result<TruthSpec, GpError> {
        TruthSpec::new(MaternSpec {
            sigma2: self.truth.sigma2,
            ell: self.truth.ell,
            nu: self.truth.nu,
            delta: self.truth.delta,
        })
    }

    pub fn param_box(&self) -> Result<ParamBox, GpError> {
        ParamBox::new(
            (self.pbox.sigma2[0], self.pbox.sigma2[1]),
            (self.pbox.ell[0], self.pbox.ell[1]),
        )
    }

    pub fn scenario(&self) -> Result<Scenario, GpError> {
        let scenario = Scenario {
            truth: self.truth_spec()?,
            model_nu: self.model.nu,
            model_delta: self.model.delta,
            pbox: self.param_box()?,
            n: self.n,
            dim: self.dim,
            n_reps: self.n_reps,
            quad_m: self.quadrature.m,
            quad_origin: self.quadrature.origin,
            master_seed: self.master_seed,
            optimizer: self.optimizer,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}
