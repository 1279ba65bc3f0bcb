//! Quality criteria for estimated covariance parameters: the normalized
//! Kullback-Leibler divergence of the model law of `y` from the true law,
//! and the integrated square prediction error of the plugged-in kriging
//! predictor, together with the predictor itself and conditional simulation
//! of the true field.

use crate::estimators::{Dataset, ModelFamily};
use crate::kernel::{matern_corr, max_norm_dist, MaternSpec, ParamBox};
use crate::linalg::{build_cov, cholesky, cholesky_sym, dot, CorrMatrix, SymMatrix};
use crate::sampling::{draw_uniform_nodes, Design};
use crate::GpError;
use rand_core::RngCore;
use serde::{Deserialize, Serialize};

/// The data-generating covariance and nugget. Unlike model-family members,
/// the truth may be noise-free (`delta = 0`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub matern: MaternSpec,
}

impl TruthSpec {
    pub fn new(matern: MaternSpec) -> Result<Self, GpError> {
        matern.validate()?;
        Ok(TruthSpec { matern })
    }
}

/// Where quadrature nodes come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadOrigin {
    IidUniform,
    RegularGrid,
}

/// Nodes at which the prediction-error integral is averaged.
#[derive(Clone, Debug)]
pub struct QuadratureSet {
    dim: usize,
    nodes: Vec<f64>, // flat, node k at [k*dim .. (k+1)*dim]
    pub origin: QuadOrigin,
}

impl QuadratureSet {
    /// `m` iid uniform nodes on the design's domain. The integration
    /// variable plays the same role as one more uniform observation point.
    pub fn iid_uniform<R: RngCore>(rng: &mut R, m: usize, design: &Design) -> Self {
        QuadratureSet {
            dim: design.dim(),
            nodes: draw_uniform_nodes(rng, m, design),
            origin: QuadOrigin::IidUniform,
        }
    }

    /// Wraps caller-supplied nodes.
    pub fn from_points(dim: usize, nodes: Vec<f64>, origin: QuadOrigin) -> Result<Self, GpError> {
        if dim == 0 || nodes.is_empty() || !nodes.len().is_multiple_of(dim) {
            return Err(GpError::DimensionMismatch(format!(
                "quadrature: {} coordinates do not form d = {dim} nodes",
                nodes.len()
            )));
        }
        Ok(QuadratureSet { dim, nodes, origin })
    }

    /// Midpoint grid on the domain: `ceil(m^{1/d})` points per axis.
    pub fn regular_grid(m: usize, design: &Design) -> Self {
        let dim = design.dim();
        let side = design.side();
        let per_axis = (m as f64).powf(1.0 / dim as f64).ceil().max(1.0) as usize;
        let step = side / per_axis as f64;
        let mut nodes = Vec::new();
        let mut idx = vec![0usize; dim];
        loop {
            for &i in idx.iter() {
                nodes.push((i as f64 + 0.5) * step);
            }
            let mut k = 0;
            loop {
                idx[k] += 1;
                if idx[k] < per_axis {
                    break;
                }
                idx[k] = 0;
                k += 1;
                if k == dim {
                    return QuadratureSet {
                        dim,
                        nodes,
                        origin: QuadOrigin::RegularGrid,
                    };
                }
            }
        }
    }

    pub fn m(&self) -> usize {
        self.nodes.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.chunks_exact(self.dim)
    }

    /// Max-norm distances from every node to every design point, row-major
    /// `m x n`. Cached by the grid sweeps so the kernel is the only per-`ell`
    /// work.
    pub fn distances_to(&self, design: &Design) -> Vec<f64> {
        let n = design.n();
        let mut out = Vec::with_capacity(self.m() * n);
        for t in self.nodes() {
            for p in design.points() {
                out.push(max_norm_dist(t, p));
            }
        }
        out
    }
}

/// Kriging predictor `yhat(t) = r(t)' R^{-1} y` for one covariance spec on
/// one dataset. `r(t)` carries no nugget: prediction points are almost
/// surely distinct from design points.
#[derive(Clone, Debug)]
pub struct Predictor<'a> {
    spec: MaternSpec,
    data: &'a Dataset,
    weights: Vec<f64>, // R^{-1} y
}

impl<'a> Predictor<'a> {
    pub fn new(spec: &MaternSpec, data: &'a Dataset) -> Result<Self, GpError> {
        spec.validate()?;
        let r = build_cov(spec, &data.design);
        let l = cholesky(&r)?;
        let weights = l.solve(&data.y)?;
        Ok(Predictor {
            spec: *spec,
            data,
            weights,
        })
    }

    pub fn predict(&self, t: &[f64]) -> f64 {
        self.data
            .design
            .points()
            .zip(&self.weights)
            .map(|(p, w)| crate::kernel::matern_cov_dist(&self.spec, max_norm_dist(t, p)) * w)
            .sum()
    }

    pub fn predict_nodes(&self, quad: &QuadratureSet) -> Vec<f64> {
        quad.nodes().map(|t| self.predict(t)).collect()
    }
}

/// One-shot form of the predictor.
pub fn predictor(spec: &MaternSpec, data: &Dataset, t: &[f64]) -> Result<f64, GpError> {
    Ok(Predictor::new(spec, data)?.predict(t))
}

/// Normalized Kullback-Leibler divergence of `N(0, R_model)` from
/// `N(0, R_truth)` on the design:
/// `(1/n) [log det R_model - log det R_truth + Tr(R_truth R_model^{-1})] - 1`.
pub fn kl_divergence(
    model: &MaternSpec,
    truth: &TruthSpec,
    design: &Design,
) -> Result<f64, GpError> {
    model.validate()?;
    let r0 = build_cov(&truth.matern, design);
    let logdet0 = cholesky(&r0)?.logdet();
    let corr = CorrMatrix::build(model.nu, model.ell, design);
    kl_given_parts(&corr, model.sigma2, model.delta, r0.matrix(), logdet0)
}

fn kl_given_parts(
    model_corr: &CorrMatrix,
    sigma2: f64,
    delta: f64,
    r0: &SymMatrix,
    logdet0: f64,
) -> Result<f64, GpError> {
    let r = model_corr.assemble(sigma2, delta);
    let l = cholesky(&r)?;
    let inv = l.inverse();
    // Tr(R0 R^{-1}) as the entrywise product; no product matrix is formed
    let trace = r0.entrywise_dot(&inv);
    let n = r0.n() as f64;
    Ok((l.logdet() - logdet0 + trace) / n - 1.0)
}

/// Conditional mean and variance of the true field at the quadrature nodes
/// given the observations: `m0(t) = r0(t)' R0^{-1} y` and
/// `v0(t) = K0(0) - r0(t)' R0^{-1} r0(t)`.
///
/// Computed once per (truth, dataset, quadrature) and shared by every model
/// spec evaluated against them, which keeps ML/CV comparisons paired.
#[derive(Clone, Debug)]
pub struct TruthPosterior {
    pub m0: Vec<f64>,
    pub v0: Vec<f64>,
}

impl TruthPosterior {
    pub fn new(
        truth: &TruthSpec,
        data: &Dataset,
        quad: &QuadratureSet,
    ) -> Result<Self, GpError> {
        if quad.dim() != data.design.dim() {
            return Err(GpError::DimensionMismatch(format!(
                "quadrature dim {} vs design dim {}",
                quad.dim(),
                data.design.dim()
            )));
        }
        let r0 = build_cov(&truth.matern, &data.design);
        let l0 = cholesky(&r0)?;
        let alpha0 = l0.solve(&data.y)?;
        let spec0 = truth.matern;
        let n = data.n();
        let mut m0 = Vec::with_capacity(quad.m());
        let mut v0 = Vec::with_capacity(quad.m());
        let mut r0t = vec![0.0f64; n];
        for t in quad.nodes() {
            for (j, p) in data.design.points().enumerate() {
                r0t[j] = crate::kernel::matern_cov_dist(&spec0, max_norm_dist(t, p));
            }
            m0.push(dot(&r0t, &alpha0));
            let w = l0.solve(&r0t)?;
            v0.push(spec0.sigma2 - dot(&r0t, &w));
        }
        Ok(TruthPosterior { m0, v0 })
    }

    pub fn mean_v0(&self) -> f64 {
        self.v0.iter().sum::<f64>() / self.v0.len() as f64
    }

    /// `(1/m) sum_k [(yhat_k - m0_k)^2 + v0_k]`.
    pub fn ispe(&self, yhat: &[f64]) -> f64 {
        assert_eq!(yhat.len(), self.m0.len());
        let m = yhat.len() as f64;
        yhat.iter()
            .zip(self.m0.iter().zip(&self.v0))
            .map(|(p, (m0, v0))| (p - m0) * (p - m0) + v0)
            .sum::<f64>()
            / m
    }
}

/// Integrated square prediction error of the model predictor, evaluated as
/// its conditional mean given the data: the squared gap to the true
/// conditional mean plus the true conditional variance, averaged over the
/// quadrature nodes.
pub fn ispe_given_data(
    model: &MaternSpec,
    truth: &TruthSpec,
    data: &Dataset,
    quad: &QuadratureSet,
) -> Result<f64, GpError> {
    let posterior = TruthPosterior::new(truth, data, quad)?;
    let pred = Predictor::new(model, data)?;
    Ok(posterior.ispe(&pred.predict_nodes(quad)))
}

/// Draws the true field at the quadrature nodes from its conditional law
/// given the observations: conditional mean plus the Cholesky factor of the
/// conditional covariance applied to `z`.
pub fn conditional_simulate(
    truth: &TruthSpec,
    data: &Dataset,
    quad: &QuadratureSet,
    z: &[f64],
) -> Result<Vec<f64>, GpError> {
    let m = quad.m();
    if z.len() != m {
        return Err(GpError::DimensionMismatch(format!(
            "conditional_simulate: {m} nodes, z has length {}",
            z.len()
        )));
    }
    let spec0 = truth.matern;
    let n = data.n();
    let r0 = build_cov(&spec0, &data.design);
    let l0 = cholesky(&r0)?;
    let alpha0 = l0.solve(&data.y)?;

    // cross-covariance rows and their R0-solves
    let mut cross = vec![0.0f64; m * n];
    for (k, t) in quad.nodes().enumerate() {
        for (j, p) in data.design.points().enumerate() {
            cross[k * n + j] = crate::kernel::matern_cov_dist(&spec0, max_norm_dist(t, p));
        }
    }
    let mut solved = vec![0.0f64; m * n];
    for k in 0..m {
        let w = l0.solve(&cross[k * n..(k + 1) * n])?;
        solved[k * n..(k + 1) * n].copy_from_slice(&w);
    }

    let mut m0 = vec![0.0f64; m];
    for k in 0..m {
        m0[k] = dot(&cross[k * n..(k + 1) * n], &alpha0);
    }

    // conditional covariance of the field at the nodes
    let mut cond = SymMatrix::zeros(m);
    for j in 0..m {
        for k in 0..=j {
            let prior = crate::kernel::matern_cov_dist(
                &spec0,
                max_norm_dist(quad.node(j), quad.node(k)),
            );
            let reduction = dot(&cross[j * n..(j + 1) * n], &solved[k * n..(k + 1) * n]);
            cond.set_sym(j, k, prior - reduction);
        }
    }
    let lc = cholesky_sym(&cond)?;
    let fluct = lc.sample_joint(z)?;
    Ok(m0.iter().zip(&fluct).map(|(a, b)| a + b).collect())
}

/// Minimum of the KL divergence over a `g_sigma2 x g_ell` grid on the box,
/// for the desk check that the ML estimate tracks the KL-optimal parameter.
pub fn kl_grid_min(
    truth: &TruthSpec,
    design: &Design,
    family: &ModelFamily,
    pbox: &ParamBox,
    g_sigma2: usize,
    g_ell: usize,
) -> Result<f64, GpError> {
    let r0 = build_cov(&truth.matern, design);
    let logdet0 = cholesky(&r0)?.logdet();
    let mut best = f64::INFINITY;
    for ell in grid_uniform(pbox.ell_range, g_ell) {
        let corr = CorrMatrix::build(family.nu, ell, design);
        for s2 in grid_geometric(pbox.sigma2_range, g_sigma2) {
            let d = kl_given_parts(&corr, s2, family.delta, r0.matrix(), logdet0)?;
            if d < best {
                best = d;
            }
        }
    }
    Ok(best)
}

/// Minimum of the conditional-mean ISPE over the same kind of grid, reusing
/// the truth posterior and the node/design distance matrix across the sweep.
pub fn ispe_grid_min(
    truth: &TruthSpec,
    data: &Dataset,
    quad: &QuadratureSet,
    family: &ModelFamily,
    pbox: &ParamBox,
    g_sigma2: usize,
    g_ell: usize,
) -> Result<f64, GpError> {
    let posterior = TruthPosterior::new(truth, data, quad)?;
    let dists = quad.distances_to(&data.design);
    let n = data.n();
    let m = quad.m();
    let mut best = f64::INFINITY;
    let mut corr_cross = vec![0.0f64; m * n];
    let mut yhat = vec![0.0f64; m];
    for ell in grid_uniform(pbox.ell_range, g_ell) {
        let corr = CorrMatrix::build(family.nu, ell, &data.design);
        for (c, d) in corr_cross.iter_mut().zip(&dists) {
            *c = matern_corr(family.nu, ell, *d);
        }
        for s2 in grid_geometric(pbox.sigma2_range, g_sigma2) {
            let r = corr.assemble(s2, family.delta);
            let l = cholesky(&r)?;
            let beta = l.solve(&data.y)?;
            for k in 0..m {
                yhat[k] = s2 * dot(&corr_cross[k * n..(k + 1) * n], &beta);
            }
            let e = posterior.ispe(&yhat);
            if e < best {
                best = e;
            }
        }
    }
    Ok(best)
}

pub(crate) fn grid_geometric(range: (f64, f64), count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![range.0];
    }
    let step = (range.1 / range.0).ln() / (count - 1) as f64;
    (0..count)
        .map(|k| range.0 * (step * k as f64).exp())
        .collect()
}

pub(crate) fn grid_uniform(range: (f64, f64), count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![range.0];
    }
    let step = (range.1 - range.0) / (count - 1) as f64;
    (0..count).map(|k| range.0 + step * k as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{draw_design, standard_normals, SeedPlan, StreamTag};

    fn simulate(truth: &TruthSpec, n: usize, seed: u64) -> Dataset {
        let plan = SeedPlan::new(seed, 0);
        let design = draw_design(n, 1, plan.sub_seed(StreamTag::Design)).unwrap();
        let r = build_cov(&truth.matern, &design);
        let l = cholesky(&r).unwrap();
        let mut rng = plan.rng(StreamTag::Field);
        let z = standard_normals(&mut rng, n);
        let y = l.sample_joint(&z).unwrap();
        Dataset::new(design, y).unwrap()
    }

    #[test]
    fn predictor_prior_mean_far_from_data() {
        let spec = MaternSpec::new(1.0, 1.0, 0.5, 0.1).unwrap();
        let design = Design::from_points(1, vec![0.0, 1.0, 2.0]).unwrap();
        let data = Dataset::new(design, vec![1.0, -1.0, 2.0]).unwrap();
        let v = predictor(&spec, &data, &[1e5]).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn predictor_interpolates_noiseless_data() {
        // delta = 0 in truth and model, rough kernel for conditioning
        let spec = MaternSpec::new(2.0, 2.0, 0.5, 0.0).unwrap();
        let truth = TruthSpec::new(spec).unwrap();
        let data = simulate(&truth, 5, 3);
        let pred = Predictor::new(&spec, &data).unwrap();
        for i in 0..5 {
            let got = pred.predict(data.design.point(i));
            assert!(
                (got - data.y[i]).abs() < 1e-6 * data.y[i].abs().max(1.0),
                "i = {i}: {got} vs {}",
                data.y[i]
            );
        }
    }

    #[test]
    fn predictor_matches_dense_inverse_oracle() {
        let truth = TruthSpec::new(MaternSpec::new(1.0, 2.0, 1.5, 0.2).unwrap()).unwrap();
        let data = simulate(&truth, 4, 5);
        let model = MaternSpec::new(0.8, 1.4, 1.5, 0.05).unwrap();
        let t = [1.1];
        let got = predictor(&model, &data, &t).unwrap();

        // dense oracle: R^{-1} via Gauss-Jordan, then r' R^{-1} y
        let r = build_cov(&model, &data.design);
        let n = 4;
        let mut a: Vec<f64> = (0..n * n).map(|k| r.get(k / n, k % n)).collect();
        let mut inv: Vec<f64> = (0..n * n)
            .map(|k| if k / n == k % n { 1.0 } else { 0.0 })
            .collect();
        for col in 0..n {
            let piv = a[col * n + col];
            for j in 0..n {
                a[col * n + j] /= piv;
                inv[col * n + j] /= piv;
            }
            for i in 0..n {
                if i != col {
                    let f = a[i * n + col];
                    for j in 0..n {
                        a[i * n + j] -= f * a[col * n + j];
                        inv[i * n + j] -= f * inv[col * n + j];
                    }
                }
            }
        }
        let rt: Vec<f64> = (0..n)
            .map(|j| {
                crate::kernel::matern_cov_dist(&model, max_norm_dist(&t, data.design.point(j)))
            })
            .collect();
        let mut want = 0.0;
        for i in 0..n {
            for j in 0..n {
                want += rt[i] * inv[i * n + j] * data.y[j];
            }
        }
        assert!((got - want).abs() < 1e-10 * want.abs().max(1.0), "{got} vs {want}");
    }

    #[test]
    fn kl_zero_at_truth_and_scalar_case() {
        let spec = MaternSpec::new(1.0, 3.0, 10.0, 0.0625).unwrap();
        let truth = TruthSpec::new(spec).unwrap();
        let plan = SeedPlan::new(7, 0);
        let design = draw_design(40, 1, plan.sub_seed(StreamTag::Design)).unwrap();
        let d = kl_divergence(&spec, &truth, &design).unwrap();
        assert!(d.abs() < 1e-9, "D at truth = {d}");

        // 1x1: D = log(v_model/v_0) + v_0/v_model - 1
        let one = Design::from_points(1, vec![0.5]).unwrap();
        let model = MaternSpec::new(2.0, 3.0, 10.0, 0.5).unwrap();
        let got = kl_divergence(&model, &truth, &one).unwrap();
        let (vm, v0): (f64, f64) = (2.5, 1.0625);
        let want = (vm / v0).ln() + v0 / vm - 1.0;
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn kl_nonnegative_on_grid() {
        let truth = TruthSpec::new(MaternSpec::new(1.0, 3.0, 10.0, 0.0625).unwrap()).unwrap();
        let plan = SeedPlan::new(9, 0);
        let design = draw_design(25, 1, plan.sub_seed(StreamTag::Design)).unwrap();
        let pbox = ParamBox::default();
        for ell in grid_uniform(pbox.ell_range, 6) {
            for s2 in grid_geometric(pbox.sigma2_range, 6) {
                let model = MaternSpec::new(s2, ell, 10.0, 0.01).unwrap();
                let d = kl_divergence(&model, &truth, &design).unwrap();
                assert!(d >= -1e-10, "D({s2}, {ell}) = {d}");
            }
        }
    }

    #[test]
    fn kl_misspecified_nugget_is_order_one() {
        let truth = TruthSpec::new(MaternSpec::new(1.0, 3.0, 10.0, 0.0625).unwrap()).unwrap();
        let model = MaternSpec::new(1.0, 3.0, 10.0, 0.01).unwrap();
        let plan = SeedPlan::new(11, 0);
        let design = draw_design(100, 1, plan.sub_seed(StreamTag::Design)).unwrap();
        let d = kl_divergence(&model, &truth, &design).unwrap();
        assert!(d > 0.1 && d < 10.0, "D = {d}");
    }

    #[test]
    fn ispe_at_truth_equals_mean_conditional_variance() {
        let spec = MaternSpec::new(1.0, 3.0, 10.0, 0.0625).unwrap();
        let truth = TruthSpec::new(spec).unwrap();
        let data = simulate(&truth, 30, 13);
        let mut rng = SeedPlan::new(13, 0).rng(StreamTag::Quadrature);
        let quad = QuadratureSet::iid_uniform(&mut rng, 150, &data.design);
        let posterior = TruthPosterior::new(&truth, &data, &quad).unwrap();
        let e = ispe_given_data(&spec, &truth, &data, &quad).unwrap();
        assert!(e >= 0.0);
        assert!(
            (e - posterior.mean_v0()).abs() < 1e-10 * e.max(1.0),
            "{e} vs {}",
            posterior.mean_v0()
        );
        // any other parameter does at least as badly
        for ell in [0.5, 1.5, 6.0] {
            let other = MaternSpec::new(1.0, ell, 10.0, 0.0625).unwrap();
            let eo = ispe_given_data(&other, &truth, &data, &quad).unwrap();
            assert!(eo >= posterior.mean_v0() - 1e-12);
        }
    }

    #[test]
    fn ispe_scales_with_signal_units() {
        let truth = TruthSpec::new(MaternSpec::new(1.0, 3.0, 2.5, 0.04).unwrap()).unwrap();
        let data = simulate(&truth, 20, 17);
        let mut rng = SeedPlan::new(17, 0).rng(StreamTag::Quadrature);
        let quad = QuadratureSet::iid_uniform(&mut rng, 100, &data.design);
        let model = MaternSpec::new(0.7, 2.0, 2.5, 0.02).unwrap();
        let base = ispe_given_data(&model, &truth, &data, &quad).unwrap();

        let c = 3.7;
        let truth_c = TruthSpec::new(
            MaternSpec::new(c * 1.0, 3.0, 2.5, c * 0.04).unwrap(),
        )
        .unwrap();
        let data_c = Dataset::new(
            data.design.clone(),
            data.y.iter().map(|v| v * c.sqrt()).collect(),
        )
        .unwrap();
        let model_c = MaternSpec::new(c * 0.7, 2.0, 2.5, c * 0.02).unwrap();
        let scaled = ispe_given_data(&model_c, &truth_c, &data_c, &quad).unwrap();
        assert!(
            (scaled - c * base).abs() < 1e-10 * (c * base).abs().max(1.0),
            "{scaled} vs {}",
            c * base
        );
    }

    #[test]
    fn conditional_simulate_zero_noise_returns_conditional_mean() {
        let truth = TruthSpec::new(MaternSpec::new(1.0, 2.0, 1.5, 0.09).unwrap()).unwrap();
        let data = simulate(&truth, 15, 19);
        let mut rng = SeedPlan::new(19, 0).rng(StreamTag::Quadrature);
        let quad = QuadratureSet::iid_uniform(&mut rng, 20, &data.design);
        let posterior = TruthPosterior::new(&truth, &data, &quad).unwrap();
        let out = conditional_simulate(&truth, &data, &quad, &[0.0; 20]).unwrap();
        for (a, b) in out.iter().zip(&posterior.m0) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn conditional_simulate_moments_match_posterior() {
        let truth = TruthSpec::new(MaternSpec::new(1.0, 2.0, 1.5, 0.09).unwrap()).unwrap();
        let data = simulate(&truth, 15, 23);
        let mut rng = SeedPlan::new(23, 0).rng(StreamTag::Quadrature);
        let quad = QuadratureSet::iid_uniform(&mut rng, 8, &data.design);
        let posterior = TruthPosterior::new(&truth, &data, &quad).unwrap();

        let draws = 5000;
        let mut mean = [0.0f64; 8];
        let mut sq = [0.0f64; 8];
        let mut zrng = SeedPlan::new(23, 1).rng(StreamTag::Noise);
        for _ in 0..draws {
            let z = standard_normals(&mut zrng, 8);
            let out = conditional_simulate(&truth, &data, &quad, &z).unwrap();
            for (k, v) in out.iter().enumerate() {
                mean[k] += v;
                sq[k] += v * v;
            }
        }
        for k in 0..8 {
            let mu = mean[k] / draws as f64;
            let var = sq[k] / draws as f64 - mu * mu;
            let se_mean = (posterior.v0[k] / draws as f64).sqrt();
            assert!(
                (mu - posterior.m0[k]).abs() < 4.0 * se_mean + 1e-12,
                "node {k}: mean {mu} vs {}",
                posterior.m0[k]
            );
            // SE of a variance estimate is roughly v0 sqrt(2/draws)
            let se_var = posterior.v0[k] * (2.0 / draws as f64).sqrt();
            assert!(
                (var - posterior.v0[k]).abs() < 4.0 * se_var + 1e-12,
                "node {k}: var {var} vs {}",
                posterior.v0[k]
            );
        }
    }

    #[test]
    fn ispe_agrees_with_conditional_simulation_oracle() {
        let truth = TruthSpec::new(MaternSpec::new(1.0, 3.0, 1.5, 0.0625).unwrap()).unwrap();
        let data = simulate(&truth, 25, 29);
        let mut rng = SeedPlan::new(29, 0).rng(StreamTag::Quadrature);
        let quad = QuadratureSet::iid_uniform(&mut rng, 60, &data.design);
        let model = MaternSpec::new(0.8, 1.8, 1.5, 0.01).unwrap();
        let e = ispe_given_data(&model, &truth, &data, &quad).unwrap();

        let pred = Predictor::new(&model, &data).unwrap();
        let yhat = pred.predict_nodes(&quad);
        let draws = 500;
        let mut zrng = SeedPlan::new(29, 1).rng(StreamTag::Noise);
        let mut per_draw = Vec::with_capacity(draws);
        for _ in 0..draws {
            let z = standard_normals(&mut zrng, quad.m());
            let field = conditional_simulate(&truth, &data, &quad, &z).unwrap();
            let s: f64 = yhat
                .iter()
                .zip(&field)
                .map(|(p, f)| (p - f) * (p - f))
                .sum::<f64>()
                / quad.m() as f64;
            per_draw.push(s);
        }
        let mean = per_draw.iter().sum::<f64>() / draws as f64;
        let var = per_draw
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (draws as f64 - 1.0);
        let se = (var / draws as f64).sqrt();
        assert!(
            (mean - e).abs() < 3.0 * se,
            "oracle {mean} vs ispe {e}, se {se}"
        );
    }

    #[test]
    fn degenerate_truth_reports_not_positive_definite() {
        // noise-free truth on a design with an exact duplicate point
        let truth = TruthSpec::new(MaternSpec::new(1.0, 2.0, 1.5, 0.0).unwrap()).unwrap();
        let design = Design::from_points_unchecked(1, vec![0.5, 0.5, 2.0]);
        let model = MaternSpec::new(1.0, 2.0, 1.5, 0.01).unwrap();
        match kl_divergence(&model, &truth, &design) {
            Err(GpError::NotPositiveDefinite { .. }) => {}
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }

        // noise-free truth with a quadrature node on a design point makes the
        // conditional covariance of the node field singular
        let design = Design::from_points(1, vec![0.5, 2.0, 3.5]).unwrap();
        let data = Dataset::new(design, vec![0.1, -0.4, 0.2]).unwrap();
        let quad =
            QuadratureSet::from_points(1, vec![0.5, 0.5], QuadOrigin::IidUniform).unwrap();
        match conditional_simulate(&truth, &data, &quad, &[0.3, -0.7]) {
            Err(GpError::NotPositiveDefinite { .. }) => {}
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn quadrature_nodes_stay_in_domain() {
        let design = draw_design(50, 1, 77).unwrap();
        let mut rng = SeedPlan::new(77, 0).rng(StreamTag::Quadrature);
        let q = QuadratureSet::iid_uniform(&mut rng, 30, &design);
        assert_eq!(q.m(), 30);
        assert!(q.nodes().all(|t| t[0] >= 0.0 && t[0] <= design.side()));

        let g = QuadratureSet::regular_grid(30, &design);
        assert_eq!(g.m(), 30);
        assert_eq!(g.origin, QuadOrigin::RegularGrid);
        assert!(g.nodes().all(|t| t[0] >= 0.0 && t[0] <= design.side()));
    }
}
