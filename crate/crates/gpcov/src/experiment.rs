//! The Monte Carlo experiment engine: per-replication data generation,
//! estimation and criterion evaluation, a parallel replication loop, and
//! aggregation into table statistics and histogram bins.

use crate::criteria::{
    kl_divergence, Predictor, QuadOrigin, QuadratureSet, TruthPosterior, TruthSpec,
};
use crate::estimators::{fit_both, Dataset, Method, ModelFamily, OptimizerConfig};
use crate::kernel::{MaternSpec, ParamBox};
use crate::linalg::{build_cov, cholesky};
use crate::sampling::{standard_normals, SeedPlan, StreamTag};
use crate::{GpError, C_INF};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const HIST_BINS: usize = 30;

/// Everything one replication needs: the data-generating truth, the fixed
/// parts of the model family, the box, the sizes and the master seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub truth: TruthSpec,
    pub model_nu: f64,
    pub model_delta: f64,
    pub pbox: ParamBox,
    pub n: usize,
    pub dim: usize,
    pub n_reps: u64,
    pub quad_m: usize,
    pub quad_origin: QuadOrigin,
    pub master_seed: u64,
    pub optimizer: OptimizerConfig,
}

impl Scenario {
    /// The study defaults: smooth truth (sigma2 = 1, ell = 3, nu = 10) with
    /// noise variance 0.25^2, known smoothness, fixed model nugget 0.1^2
    /// (an underestimated noise variance), estimation box
    /// [0.1^2, 10^2] x [0.2, 10], n = 100 points on [0, 100].
    pub fn default_misspecified() -> Self {
        Scenario {
            truth: TruthSpec {
                matern: MaternSpec {
                    sigma2: 1.0,
                    ell: 3.0,
                    nu: 10.0,
                    delta: 0.0625,
                },
            },
            model_nu: 10.0,
            model_delta: 0.01,
            pbox: ParamBox::default(),
            n: 100,
            dim: 1,
            n_reps: 200,
            quad_m: 2000,
            quad_origin: QuadOrigin::IidUniform,
            master_seed: 42,
            optimizer: OptimizerConfig::default(),
        }
    }

    /// Same defaults with the nugget correctly specified.
    pub fn default_well_specified() -> Self {
        Scenario {
            model_delta: 0.0625,
            ..Scenario::default_misspecified()
        }
    }

    pub fn family(&self) -> ModelFamily {
        ModelFamily {
            nu: self.model_nu,
            delta: self.model_delta,
        }
    }

    /// "well-specified" when the model family contains the truth.
    pub fn specification(&self) -> &'static str {
        if self.model_nu == self.truth.matern.nu && self.model_delta == self.truth.matern.delta {
            "well-specified"
        } else {
            "misspecified"
        }
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)] // negation rejects NaN
    pub fn validate(&self) -> Result<(), GpError> {
        self.truth.matern.validate()?;
        if self.n < 2 {
            return Err(GpError::InvalidParam(
                "scenario requires n >= 2 (the CV estimator needs two points)".into(),
            ));
        }
        if self.dim < 1 {
            return Err(GpError::InvalidParam("scenario requires dim >= 1".into()));
        }
        if self.n_reps < 1 {
            return Err(GpError::InvalidParam("scenario requires n_reps >= 1".into()));
        }
        if self.quad_m < 1 {
            return Err(GpError::InvalidParam("scenario requires quad_m >= 1".into()));
        }
        if !(self.model_nu > 0.0) {
            return Err(GpError::InvalidParam("model_nu must be > 0".into()));
        }
        if self.model_delta < C_INF {
            return Err(GpError::InvalidParam(format!(
                "model_delta = {} is below the family floor C_inf = {C_INF}",
                self.model_delta
            )));
        }
        Ok(())
    }
}

/// Per-replication estimates and criterion values.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub rep_index: u64,
    pub sigma2_ml: f64,
    pub ell_ml: f64,
    pub sigma2_cv: f64,
    pub ell_cv: f64,
    pub ml_value: f64,
    pub cv_value: f64,
    pub d_ml: f64,
    pub d_cv: f64,
    pub e_ml: f64,
    pub e_cv: f64,
    pub elapsed_ms: f64,
}

impl ReplicationRecord {
    /// Equality of everything except the wall-clock timing.
    pub fn same_results(&self, other: &ReplicationRecord) -> bool {
        self.rep_index == other.rep_index
            && self.sigma2_ml.to_bits() == other.sigma2_ml.to_bits()
            && self.ell_ml.to_bits() == other.ell_ml.to_bits()
            && self.sigma2_cv.to_bits() == other.sigma2_cv.to_bits()
            && self.ell_cv.to_bits() == other.ell_cv.to_bits()
            && self.ml_value.to_bits() == other.ml_value.to_bits()
            && self.cv_value.to_bits() == other.cv_value.to_bits()
            && self.d_ml.to_bits() == other.d_ml.to_bits()
            && self.d_cv.to_bits() == other.d_cv.to_bits()
            && self.e_ml.to_bits() == other.e_ml.to_bits()
            && self.e_cv.to_bits() == other.e_cv.to_bits()
    }
}

/// Draws a design and simulates the observation vector `y ~ N(0, R_0)` for
/// one replication, from the replication's own randomness streams.
pub fn simulate_dataset(
    truth: &TruthSpec,
    n: usize,
    dim: usize,
    plan: &SeedPlan,
) -> Result<Dataset, GpError> {
    let design = crate::sampling::draw_design(n, dim, plan.sub_seed(StreamTag::Design))?;
    let r0 = build_cov(&truth.matern, &design);
    let l0 = cholesky(&r0)?;
    let mut rng = plan.rng(StreamTag::Field);
    let z = standard_normals(&mut rng, n);
    let y = l0.sample_joint(&z)?;
    Dataset::new(design, y)
}

/// One full replication: draw the design, simulate the observations, fit
/// ML and CV, evaluate both quality criteria at both estimates. ML and CV
/// see the same design, the same y and the same quadrature nodes.
pub fn run_replication(
    scenario: &Scenario,
    rep_index: u64,
) -> Result<ReplicationRecord, GpError> {
    scenario.validate()?;
    let started = std::time::Instant::now();
    let wrap = |source: GpError| GpError::ReplicationFailure {
        rep_index,
        source: Box::new(source),
    };

    let plan = SeedPlan::new(scenario.master_seed, rep_index);
    let data = simulate_dataset(&scenario.truth, scenario.n, scenario.dim, &plan).map_err(wrap)?;
    let quad = match scenario.quad_origin {
        QuadOrigin::IidUniform => {
            let mut qrng = plan.rng(StreamTag::Quadrature);
            QuadratureSet::iid_uniform(&mut qrng, scenario.quad_m, &data.design)
        }
        QuadOrigin::RegularGrid => QuadratureSet::regular_grid(scenario.quad_m, &data.design),
    };

    let family = scenario.family();
    let (fit_ml, fit_cv) =
        fit_both(&family, &data, &scenario.pbox, &scenario.optimizer).map_err(wrap)?;

    let spec_ml = family.spec(fit_ml.sigma2, fit_ml.ell);
    let spec_cv = family.spec(fit_cv.sigma2, fit_cv.ell);
    let d_ml = kl_divergence(&spec_ml, &scenario.truth, &data.design).map_err(wrap)?;
    let d_cv = kl_divergence(&spec_cv, &scenario.truth, &data.design).map_err(wrap)?;

    let posterior = TruthPosterior::new(&scenario.truth, &data, &quad).map_err(wrap)?;
    let e_ml = posterior.ispe(
        &Predictor::new(&spec_ml, &data)
            .map_err(wrap)?
            .predict_nodes(&quad),
    );
    let e_cv = posterior.ispe(
        &Predictor::new(&spec_cv, &data)
            .map_err(wrap)?
            .predict_nodes(&quad),
    );

    Ok(ReplicationRecord {
        rep_index,
        sigma2_ml: fit_ml.sigma2,
        ell_ml: fit_ml.ell,
        sigma2_cv: fit_cv.sigma2,
        ell_cv: fit_cv.ell,
        ml_value: fit_ml.criterion_value,
        cv_value: fit_cv.criterion_value,
        d_ml,
        d_cv,
        e_ml,
        e_cv,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// Per-estimator table statistics.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EstimatorAggregates {
    pub mean_ell: f64,
    pub sd_ell: f64,
    pub mean_e: f64,
    pub mean_d: f64,
    /// Set when the standard deviation is reported as 0 from a single record.
    pub degenerate_sd: bool,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Aggregates {
    pub ml: EstimatorAggregates,
    pub cv: EstimatorAggregates,
    pub n_records: usize,
}

/// Which per-replication quantity a histogram bins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Ell,
    D,
    E,
}

impl Quantity {
    pub const ALL: [Quantity; 3] = [Quantity::Ell, Quantity::D, Quantity::E];

    pub fn name(&self) -> &'static str {
        match self {
            Quantity::Ell => "ell",
            Quantity::D => "d",
            Quantity::E => "e",
        }
    }

    fn of(&self, rec: &ReplicationRecord, method: Method) -> f64 {
        match (self, method) {
            (Quantity::Ell, Method::Ml) => rec.ell_ml,
            (Quantity::Ell, Method::Cv) => rec.ell_cv,
            (Quantity::D, Method::Ml) => rec.d_ml,
            (Quantity::D, Method::Cv) => rec.d_cv,
            (Quantity::E, Method::Ml) => rec.e_ml,
            (Quantity::E, Method::Cv) => rec.e_cv,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HistBin {
    pub left: f64,
    pub right: f64,
    pub count: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Histogram {
    pub quantity: Quantity,
    pub method: Method,
    pub bins: Vec<HistBin>,
}

/// Full experiment output: the scenario echo, per-replication records,
/// failure log and the aggregated statistics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: Scenario,
    pub records: Vec<ReplicationRecord>,
    pub failures: Vec<(u64, String)>,
    pub aggregates: Aggregates,
    pub histograms: Vec<Histogram>,
}

impl ExperimentReport {
    pub fn same_results(&self, other: &ExperimentReport) -> bool {
        self.scenario == other.scenario
            && self.records.len() == other.records.len()
            && self
                .records
                .iter()
                .zip(&other.records)
                .all(|(a, b)| a.same_results(b))
            && self.failures == other.failures
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut acc, mut count) = (0.0, 0usize);
    for v in values {
        acc += v;
        count += 1;
    }
    acc / count as f64
}

fn estimator_aggregates(records: &[ReplicationRecord], method: Method) -> EstimatorAggregates {
    let ell = |r: &ReplicationRecord| Quantity::Ell.of(r, method);
    let mean_ell = mean(records.iter().map(ell));
    let (sd_ell, degenerate_sd) = if records.len() < 2 {
        (0.0, true)
    } else {
        let ss: f64 = records
            .iter()
            .map(|r| (ell(r) - mean_ell) * (ell(r) - mean_ell))
            .sum();
        ((ss / (records.len() as f64 - 1.0)).sqrt(), false)
    };
    EstimatorAggregates {
        mean_ell,
        sd_ell,
        mean_e: mean(records.iter().map(|r| Quantity::E.of(r, method))),
        mean_d: mean(records.iter().map(|r| Quantity::D.of(r, method))),
        degenerate_sd,
    }
}

fn build_histograms(records: &[ReplicationRecord]) -> Vec<Histogram> {
    let mut out = Vec::with_capacity(6);
    for quantity in Quantity::ALL {
        // shared edges per quantity across the two estimators
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in records {
            for m in [Method::Ml, Method::Cv] {
                let v = quantity.of(r, m);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let width = if hi > lo { (hi - lo) / HIST_BINS as f64 } else { 1.0 };
        for method in [Method::Ml, Method::Cv] {
            let mut bins: Vec<HistBin> = (0..HIST_BINS)
                .map(|k| HistBin {
                    left: lo + width * k as f64,
                    right: lo + width * (k + 1) as f64,
                    count: 0,
                })
                .collect();
            for r in records {
                let v = quantity.of(r, method);
                let k = (((v - lo) / width) as usize).min(HIST_BINS - 1);
                bins[k].count += 1;
            }
            out.push(Histogram {
                quantity,
                method,
                bins,
            });
        }
    }
    out
}

/// Aggregation of sorted records: means and sample standard deviations
/// (n - 1 denominator) plus fixed-width histogram bins.
pub fn aggregate(records: &[ReplicationRecord]) -> Result<(Aggregates, Vec<Histogram>), GpError> {
    if records.is_empty() {
        return Err(GpError::InvalidParam(
            "aggregate requires at least one successful record".into(),
        ));
    }
    let aggregates = Aggregates {
        ml: estimator_aggregates(records, Method::Ml),
        cv: estimator_aggregates(records, Method::Cv),
        n_records: records.len(),
    };
    Ok((aggregates, build_histograms(records)))
}

/// Runs every replication (in parallel), collects failures, and aggregates
/// in replication order so the report is independent of execution order.
pub fn run_experiment(scenario: &Scenario) -> Result<ExperimentReport, GpError> {
    scenario.validate()?;
    let results: Vec<Result<ReplicationRecord, GpError>> = (0..scenario.n_reps)
        .into_par_iter()
        .map(|rep| run_replication(scenario, rep))
        .collect();

    let mut records = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    let mut last_error = None;
    for (rep, outcome) in results.into_iter().enumerate() {
        match outcome {
            Ok(rec) => records.push(rec),
            Err(e) => {
                failures.push((rep as u64, e.to_string()));
                last_error = Some(e);
            }
        }
    }
    if records.is_empty() {
        return Err(last_error.expect("n_reps >= 1"));
    }
    records.sort_by_key(|r| r.rep_index);

    let (aggregates, histograms) = aggregate(&records)?;
    Ok(ExperimentReport {
        scenario: scenario.clone(),
        records,
        failures,
        aggregates,
        histograms,
    })
}

/// Mean-square LOO error and conditional-mean prediction error of one fixed
/// parameter point on fresh data, for the desk check that the two have the
/// same mean up to the noise variance.
pub fn fixed_theta_cv_and_ispe(
    scenario: &Scenario,
    theta: (f64, f64),
    rep_index: u64,
) -> Result<(f64, f64), GpError> {
    let plan = SeedPlan::new(scenario.master_seed, rep_index);
    let data = simulate_dataset(&scenario.truth, scenario.n, scenario.dim, &plan)?;
    let mut qrng = plan.rng(StreamTag::Quadrature);
    let quad = QuadratureSet::iid_uniform(&mut qrng, scenario.quad_m, &data.design);
    let spec = scenario.family().spec(theta.0, theta.1);
    let cv = crate::estimators::cv_criterion(&spec, &data)?;
    let posterior = TruthPosterior::new(&scenario.truth, &data, &quad)?;
    let e = posterior.ispe(&Predictor::new(&spec, &data)?.predict_nodes(&quad));
    Ok((cv, e))
}
