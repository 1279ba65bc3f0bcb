//! ML and CV objective functions and the box-constrained minimizer producing
//! the two covariance-parameter estimates.
//!
//! The ML criterion is `(1/n) log det R + (1/n) y' R^{-1} y`. The CV
//! criterion is the leave-one-out mean square error, computed through the
//! virtual LOO identity `yhat_i = y_i - (R^{-1} y)_i / (R^{-1})_{ii}` so one
//! factorization serves all n deletions.

use crate::kernel::{MaternSpec, ParamBox};
use crate::linalg::{cholesky, CorrMatrix};
use crate::sampling::Design;
use crate::GpError;
use serde::{Deserialize, Serialize};

/// A design together with its observation vector.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub design: Design,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(design: Design, y: Vec<f64>) -> Result<Self, GpError> {
        if y.len() != design.n() {
            return Err(GpError::DimensionMismatch(format!(
                "dataset: design has {} points, y has length {}",
                design.n(),
                y.len()
            )));
        }
        Ok(Dataset { design, y })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
}

/// The fixed part of the model family: smoothness and nugget. Only
/// `theta = (sigma2, ell)` is estimated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFamily {
    pub nu: f64,
    pub delta: f64,
}

impl ModelFamily {
    pub fn spec(&self, sigma2: f64, ell: f64) -> MaternSpec {
        MaternSpec {
            sigma2,
            ell,
            nu: self.nu,
            delta: self.delta,
        }
    }
}

/// Which estimation criterion to minimize.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ml,
    Cv,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Ml => write!(f, "ml"),
            Method::Cv => write!(f, "cv"),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = GpError;
    fn from_str(s: &str) -> Result<Self, GpError> {
        match s.to_ascii_lowercase().as_str() {
            "ml" => Ok(Method::Ml),
            "cv" => Ok(Method::Cv),
            other => Err(GpError::Usage(format!(
                "unknown method '{other}', expected 'ml' or 'cv'"
            ))),
        }
    }
}

/// `(1/n) log det R + (1/n) y' R^{-1} y`.
pub fn ml_criterion(spec: &MaternSpec, data: &Dataset) -> Result<f64, GpError> {
    spec.validate()?;
    let corr = CorrMatrix::build(spec.nu, spec.ell, &data.design);
    ml_given_corr(&corr, spec.sigma2, spec.delta, &data.y)
}

pub(crate) fn ml_given_corr(
    corr: &CorrMatrix,
    sigma2: f64,
    delta: f64,
    y: &[f64],
) -> Result<f64, GpError> {
    let r = corr.assemble(sigma2, delta);
    let l = cholesky(&r)?;
    let alpha = l.solve(y)?;
    let n = y.len() as f64;
    Ok(l.logdet() / n + crate::linalg::dot(y, &alpha) / n)
}

/// The n leave-one-out residual ratios `(R^{-1} y)_i / (R^{-1})_{ii}`, the
/// shared core of the LOO predictions and the CV criterion.
///
/// When `delta > 0` the quantities are computed from the rescaled matrix
/// `M = (sigma2/delta) C + I = R/delta`, in which the nugget cancels
/// algebraically. This makes the invariance of the LOO predictions under
/// `(sigma2, delta) -> (c sigma2, c delta)` hold to machine precision rather
/// than accumulating through two differently scaled factorizations.
fn loo_ratios(corr: &CorrMatrix, sigma2: f64, delta: f64, y: &[f64]) -> Result<Vec<f64>, GpError> {
    let m = if delta > 0.0 {
        corr.assemble(sigma2 / delta, 1.0)
    } else {
        corr.assemble(sigma2, 0.0)
    };
    let l = cholesky(&m)?;
    let alpha = l.solve(y)?;
    let inv = l.inverse();
    Ok((0..y.len()).map(|i| alpha[i] / inv.get(i, i)).collect())
}

/// LOO predictions via the virtual identity
/// `yhat_i = y_i - (R^{-1} y)_i / (R^{-1})_{ii}`.
pub fn loo_predictions(spec: &MaternSpec, data: &Dataset) -> Result<Vec<f64>, GpError> {
    spec.validate()?;
    if data.n() < 2 {
        return Err(GpError::InvalidParam(
            "loo_predictions requires n >= 2".into(),
        ));
    }
    let corr = CorrMatrix::build(spec.nu, spec.ell, &data.design);
    let ratios = loo_ratios(&corr, spec.sigma2, spec.delta, &data.y)?;
    Ok(data.y.iter().zip(&ratios).map(|(y, r)| y - r).collect())
}

/// `(1/n) y' R^{-1} diag(R^{-1})^{-2} R^{-1} y`, equal to the LOO mean
/// square error `(1/n) sum_i (y_i - yhat_i)^2`.
pub fn cv_criterion(spec: &MaternSpec, data: &Dataset) -> Result<f64, GpError> {
    spec.validate()?;
    if data.n() < 2 {
        return Err(GpError::InvalidParam("cv_criterion requires n >= 2".into()));
    }
    let corr = CorrMatrix::build(spec.nu, spec.ell, &data.design);
    cv_given_corr(&corr, spec.sigma2, spec.delta, &data.y)
}

pub(crate) fn cv_given_corr(
    corr: &CorrMatrix,
    sigma2: f64,
    delta: f64,
    y: &[f64],
) -> Result<f64, GpError> {
    let ratios = loo_ratios(corr, sigma2, delta, y)?;
    let n = y.len() as f64;
    Ok(ratios.iter().map(|r| r * r).sum::<f64>() / n)
}

/// Optimizer settings: multistart coarse grid (geometric in `sigma2`,
/// uniform in `ell`) followed by Nelder-Mead descent with projection onto
/// the box, run from the best `descent_starts` grid points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub grid_sigma2: usize,
    pub grid_ell: usize,
    /// Convergence when the simplex diameter falls below `rel_tol` times the
    /// box width (per coordinate, `sigma2` measured in log scale).
    pub rel_tol: f64,
    /// Evaluation budget of each simplex descent.
    pub max_evals: usize,
    pub descent_starts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            grid_sigma2: 12,
            grid_ell: 12,
            rel_tol: 1e-4,
            max_evals: 400,
            descent_starts: 3,
        }
    }
}

/// Outcome of one criterion minimization.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FitResult {
    pub sigma2: f64,
    pub ell: f64,
    pub criterion_value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(|k| lo * (ratio * k as f64).exp()).collect()
}

fn uniform_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (count - 1) as f64;
    (0..count).map(|k| lo + step * k as f64).collect()
}

/// Search coordinates: `u = ln(sigma2)` (the box spans four orders of
/// magnitude), `v = ell`.
struct SearchSpace {
    u_lo: f64,
    u_hi: f64,
    v_lo: f64,
    v_hi: f64,
}

impl SearchSpace {
    fn new(pbox: &ParamBox) -> Self {
        SearchSpace {
            u_lo: pbox.sigma2_range.0.ln(),
            u_hi: pbox.sigma2_range.1.ln(),
            v_lo: pbox.ell_range.0,
            v_hi: pbox.ell_range.1,
        }
    }

    fn widths(&self) -> (f64, f64) {
        ((self.u_hi - self.u_lo).max(1e-300), (self.v_hi - self.v_lo).max(1e-300))
    }

    fn project(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0].clamp(self.u_lo, self.u_hi), p[1].clamp(self.v_lo, self.v_hi)]
    }

    /// Back to `(sigma2, ell)`, snapping clamped coordinates onto the exact
    /// box bounds so boundary minima report the bound itself.
    fn unmap(&self, p: [f64; 2], pbox: &ParamBox) -> (f64, f64) {
        let sigma2 = if p[0] <= self.u_lo {
            pbox.sigma2_range.0
        } else if p[0] >= self.u_hi {
            pbox.sigma2_range.1
        } else {
            p[0].exp()
        };
        pbox.project(sigma2, p[1])
    }
}

struct Evaluator<'a, F> {
    f: &'a F,
    evaluations: usize,
    last_error: Option<String>,
}

impl<'a, F: Fn(f64, f64) -> Result<f64, GpError>> Evaluator<'a, F> {
    /// Objective in search coordinates; failures count as +infinity so the
    /// simplex retreats from broken regions.
    fn eval(&mut self, p: [f64; 2]) -> f64 {
        self.evaluations += 1;
        match (self.f)(p[0].exp(), p[1]) {
            Ok(v) if v.is_finite() => v,
            Ok(v) => {
                self.last_error = Some(format!("objective returned {v}"));
                f64::INFINITY
            }
            Err(e) => {
                self.last_error = Some(e.to_string());
                f64::INFINITY
            }
        }
    }
}

/// Minimizes `objective(sigma2, ell)` over the box: coarse-grid multistart
/// followed by projected Nelder-Mead from the best grid points. Ties keep
/// the first point in deterministic grid order.
pub fn minimize<F>(
    objective: F,
    pbox: &ParamBox,
    cfg: &OptimizerConfig,
) -> Result<FitResult, GpError>
where
    F: Fn(f64, f64) -> Result<f64, GpError>,
{
    let space = SearchSpace::new(pbox);
    let mut ev = Evaluator {
        f: &objective,
        evaluations: 0,
        last_error: None,
    };

    // coarse grid, ell-major so correlation caches upstream stay warm
    let s2_grid = geometric_grid(pbox.sigma2_range.0, pbox.sigma2_range.1, cfg.grid_sigma2);
    let ell_grid = uniform_grid(pbox.ell_range.0, pbox.ell_range.1, cfg.grid_ell);
    let mut grid: Vec<(f64, [f64; 2])> = Vec::with_capacity(s2_grid.len() * ell_grid.len());
    for &ell in &ell_grid {
        for &s2 in &s2_grid {
            let p = space.project([s2.ln(), ell]);
            grid.push((ev.eval(p), p));
        }
    }
    if grid.iter().all(|(v, _)| !v.is_finite()) {
        return Err(GpError::ObjectiveFailure(
            ev.last_error.unwrap_or_else(|| "no finite value on grid".into()),
        ));
    }

    let mut starts: Vec<(f64, [f64; 2])> = grid.clone();
    starts.sort_by(|a, b| a.0.total_cmp(&b.0));
    starts.truncate(cfg.descent_starts.max(1));

    let mut best = starts[0];
    let mut converged = false;
    for &(_, start) in &starts {
        let (pt, val, conv) = nelder_mead(&mut ev, &space, start, cfg);
        if val < best.0 {
            best = (val, pt);
            converged = conv;
        } else if pt == best.1 && conv {
            converged = true;
        }
    }

    let (sigma2, ell) = space.unmap(best.1, pbox);
    Ok(FitResult {
        sigma2,
        ell,
        criterion_value: best.0,
        evaluations: ev.evaluations,
        converged,
    })
}

fn nelder_mead<F>(
    ev: &mut Evaluator<'_, F>,
    space: &SearchSpace,
    start: [f64; 2],
    cfg: &OptimizerConfig,
) -> ([f64; 2], f64, bool)
where
    F: Fn(f64, f64) -> Result<f64, GpError>,
{
    const ALPHA: f64 = 1.0; // reflection
    const GAMMA: f64 = 2.0; // expansion
    const RHO: f64 = 0.5; // contraction
    const SIGMA: f64 = 0.5; // shrink

    let (wu, wv) = space.widths();
    let offset = 0.05;
    let step = |x: f64, lo: f64, hi: f64, w: f64| {
        if x + offset * w <= hi {
            x + offset * w
        } else {
            (x - offset * w).max(lo)
        }
    };
    let mut pts = [
        start,
        space.project([step(start[0], space.u_lo, space.u_hi, wu), start[1]]),
        space.project([start[0], step(start[1], space.v_lo, space.v_hi, wv)]),
    ];
    let mut fv = [ev.eval(pts[0]), ev.eval(pts[1]), ev.eval(pts[2])];
    let mut used = 3usize;
    let mut converged = false;

    while used < cfg.max_evals {
        // order best..worst
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        pts = [pts[idx[0]], pts[idx[1]], pts[idx[2]]];
        fv = [fv[idx[0]], fv[idx[1]], fv[idx[2]]];

        let diam = pts[1..]
            .iter()
            .map(|p| {
                ((p[0] - pts[0][0]) / wu)
                    .abs()
                    .max(((p[1] - pts[0][1]) / wv).abs())
            })
            .fold(0.0f64, f64::max);
        if diam < cfg.rel_tol {
            converged = true;
            break;
        }

        let centroid = [
            0.5 * (pts[0][0] + pts[1][0]),
            0.5 * (pts[0][1] + pts[1][1]),
        ];
        let dir = [centroid[0] - pts[2][0], centroid[1] - pts[2][1]];
        let refl = space.project([centroid[0] + ALPHA * dir[0], centroid[1] + ALPHA * dir[1]]);
        let f_refl = ev.eval(refl);
        used += 1;

        if f_refl < fv[0] {
            let exp_pt = space.project([
                centroid[0] + GAMMA * ALPHA * dir[0],
                centroid[1] + GAMMA * ALPHA * dir[1],
            ]);
            let f_exp = ev.eval(exp_pt);
            used += 1;
            if f_exp < f_refl {
                pts[2] = exp_pt;
                fv[2] = f_exp;
            } else {
                pts[2] = refl;
                fv[2] = f_refl;
            }
        } else if f_refl < fv[1] {
            pts[2] = refl;
            fv[2] = f_refl;
        } else {
            let (cand, f_cand) = if f_refl < fv[2] {
                let c = space.project([
                    centroid[0] + RHO * ALPHA * dir[0],
                    centroid[1] + RHO * ALPHA * dir[1],
                ]);
                let f = ev.eval(c);
                (c, f)
            } else {
                let c = space.project([centroid[0] - RHO * dir[0], centroid[1] - RHO * dir[1]]);
                let f = ev.eval(c);
                (c, f)
            };
            used += 1;
            if f_cand < fv[2].min(f_refl) {
                pts[2] = cand;
                fv[2] = f_cand;
            } else {
                for i in 1..3 {
                    pts[i] = space.project([
                        pts[0][0] + SIGMA * (pts[i][0] - pts[0][0]),
                        pts[0][1] + SIGMA * (pts[i][1] - pts[0][1]),
                    ]);
                    fv[i] = ev.eval(pts[i]);
                }
                used += 2;
            }
        }
    }

    let mut best = 0;
    for i in 1..3 {
        if fv[i] < fv[best] {
            best = i;
        }
    }
    (pts[best], fv[best], converged)
}

/// Fits one criterion for a model family.
pub fn fit(
    method: Method,
    family: &ModelFamily,
    data: &Dataset,
    pbox: &ParamBox,
    cfg: &OptimizerConfig,
) -> Result<FitResult, GpError> {
    match method {
        Method::Ml => minimize(
            |s2, ell| ml_criterion(&family.spec(s2, ell), data),
            pbox,
            cfg,
        ),
        Method::Cv => {
            if data.n() < 2 {
                return Err(GpError::Usage("cv estimation requires n >= 2".into()));
            }
            minimize(
                |s2, ell| cv_criterion(&family.spec(s2, ell), data),
                pbox,
                cfg,
            )
        }
    }
}

/// Fits ML and CV on the same dataset, sharing the correlation matrices of
/// the coarse grid between the two criteria. Produces bit-identical results
/// to two separate [`minimize`] calls; only the grid bookkeeping is shared.
pub fn fit_both(
    family: &ModelFamily,
    data: &Dataset,
    pbox: &ParamBox,
    cfg: &OptimizerConfig,
) -> Result<(FitResult, FitResult), GpError> {
    let space = SearchSpace::new(pbox);
    let s2_grid = geometric_grid(pbox.sigma2_range.0, pbox.sigma2_range.1, cfg.grid_sigma2);
    let ell_grid = uniform_grid(pbox.ell_range.0, pbox.ell_range.1, cfg.grid_ell);

    let mut grid_ml: Vec<(f64, [f64; 2])> = Vec::new();
    let mut grid_cv: Vec<(f64, [f64; 2])> = Vec::new();
    let mut grid_evals = 0usize;
    let mut last_err: Option<String> = None;
    for &ell in &ell_grid {
        let corr = CorrMatrix::build(family.nu, ell, &data.design);
        for &s2 in &s2_grid {
            let p = space.project([s2.ln(), ell]);
            grid_evals += 1;
            let ml = ml_given_corr(&corr, p[0].exp(), family.delta, &data.y);
            let cv = cv_given_corr(&corr, p[0].exp(), family.delta, &data.y);
            if let Err(e) = &ml {
                last_err = Some(e.to_string());
            }
            grid_ml.push((ml.unwrap_or(f64::INFINITY), p));
            grid_cv.push((cv.unwrap_or(f64::INFINITY), p));
        }
    }

    let finish = |grid: Vec<(f64, [f64; 2])>,
                      objective: &dyn Fn(f64, f64) -> Result<f64, GpError>|
     -> Result<FitResult, GpError> {
        if grid.iter().all(|(v, _)| !v.is_finite()) {
            return Err(GpError::ObjectiveFailure(
                last_err.clone().unwrap_or_else(|| "no finite value on grid".into()),
            ));
        }
        let mut ev = Evaluator {
            f: &objective,
            evaluations: grid_evals,
            last_error: None,
        };
        let mut starts = grid;
        starts.sort_by(|a, b| a.0.total_cmp(&b.0));
        starts.truncate(cfg.descent_starts.max(1));
        let mut best = starts[0];
        let mut converged = false;
        for &(_, start) in &starts {
            let (pt, val, conv) = nelder_mead(&mut ev, &space, start, cfg);
            if val < best.0 {
                best = (val, pt);
                converged = conv;
            } else if pt == best.1 && conv {
                converged = true;
            }
        }
        let (sigma2, ell) = space.unmap(best.1, pbox);
        Ok(FitResult {
            sigma2,
            ell,
            criterion_value: best.0,
            evaluations: ev.evaluations,
            converged,
        })
    };

    let ml = finish(grid_ml, &|s2, ell| {
        ml_criterion(&family.spec(s2, ell), data)
    })?;
    let cv = finish(grid_cv, &|s2, ell| {
        cv_criterion(&family.spec(s2, ell), data)
    })?;
    Ok((ml, cv))
}
