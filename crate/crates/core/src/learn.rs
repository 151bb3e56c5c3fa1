//! Supervised learners and the functors into them: expectation of a
//! statistical model, then gradient descent on the squared error
//! `er(u, v) = (u − v)²`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

use crate::arrows::DFArrow;
use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::sample_space::{sample_omega, SampleStream};
use crate::stats::pairwise_sum;

type EvalFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
type JacobiansFn = Arc<dyn Fn(&[f64], &[f64]) -> (DMatrix<f64>, DMatrix<f64>) + Send + Sync>;
type LearnerFn = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync>;
type ImplementFn = Arc<dyn Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    AnalyticAffine,
    FiniteDifference,
}

/// Central-difference step for a coordinate of magnitude `|v|`.
pub fn fd_step(v: f64) -> f64 {
    1e-5 * v.abs().max(1.0)
}

/// A deterministic map `ℝ^p × ℝ^a → ℝ^b`.
#[derive(Clone)]
pub struct ParametricMap {
    param_dim: usize,
    in_dim: usize,
    out_dim: usize,
    eval: EvalFn,
    jacobians: Option<JacobiansFn>,
}

impl ParametricMap {
    /// A map differentiated by central finite differences.
    pub fn new(
        param_dim: usize,
        in_dim: usize,
        out_dim: usize,
        eval: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            param_dim,
            in_dim,
            out_dim,
            eval: Arc::new(eval),
            jacobians: None,
        }
    }

    /// Declares `(∂/∂x_p, ∂/∂x_a)` as `b × p` and `b × a` matrices.
    pub fn with_jacobians(
        mut self,
        jacobians: impl Fn(&[f64], &[f64]) -> (DMatrix<f64>, DMatrix<f64>) + Send + Sync + 'static,
    ) -> Self {
        self.jacobians = Some(Arc::new(jacobians));
        self
    }

    /// Switches to finite differences, dropping any declared Jacobians.
    pub fn finite_difference(mut self) -> Self {
        self.jacobians = None;
        self
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(0, dim, dim, |_, x| x.to_vec())
            .with_jacobians(move |_, _| (DMatrix::zeros(dim, 0), DMatrix::identity(dim, dim)))
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn gradient_mode(&self) -> GradientMode {
        if self.jacobians.is_some() {
            GradientMode::AnalyticAffine
        } else {
            GradientMode::FiniteDifference
        }
    }

    fn check_args(&self, params: &[f64], x: &[f64]) -> Result<()> {
        check_dim("map parameters", self.param_dim, params.len())?;
        check_dim("map input", self.in_dim, x.len())
    }

    pub fn eval(&self, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check_args(params, x)?;
        let y = (self.eval)(params, x);
        check_dim("map output", self.out_dim, y.len())?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parametric map".into()));
        }
        Ok(y)
    }

    /// `(J_p, J_a)` by the map's gradient mode.
    pub fn jacobians(&self, params: &[f64], x: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check_args(params, x)?;
        let (jp, ja) = match &self.jacobians {
            Some(j) => j(params, x),
            None => self.finite_difference_jacobians(params, x)?,
        };
        check_dim("parameter Jacobian rows", self.out_dim, jp.nrows())?;
        check_dim("parameter Jacobian columns", self.param_dim, jp.ncols())?;
        check_dim("input Jacobian rows", self.out_dim, ja.nrows())?;
        check_dim("input Jacobian columns", self.in_dim, ja.ncols())?;
        if jp.iter().chain(ja.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        Ok((jp, ja))
    }

    /// Central differences with step `1e-5·max(1, |v|)` per coordinate.
    pub fn finite_difference_jacobians(&self, params: &[f64], x: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check_args(params, x)?;
        let column = |v: &[f64], i: usize, f: &dyn Fn(&[f64]) -> Vec<f64>| {
            let h = fd_step(v[i]);
            let mut up = v.to_vec();
            let mut dn = v.to_vec();
            up[i] += h;
            dn[i] -= h;
            let (fu, fd) = (f(&up), f(&dn));
            DVector::from_fn(self.out_dim, |j, _| (fu[j] - fd[j]) / (2.0 * h))
        };
        let mut jp = DMatrix::zeros(self.out_dim, self.param_dim);
        for i in 0..self.param_dim {
            jp.set_column(i, &column(params, i, &|p| (self.eval)(p, x)));
        }
        let mut ja = DMatrix::zeros(self.out_dim, self.in_dim);
        for i in 0..self.in_dim {
            ja.set_column(i, &column(x, i, &|a| (self.eval)(params, a)));
        }
        Ok((jp, ja))
    }
}

impl fmt::Debug for ParametricMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricMap")
            .field("param_dim", &self.param_dim)
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .field("gradient_mode", &self.gradient_mode())
            .finish()
    }
}

/// `g ∘ f` with parameters `(q, p)`; analytic when both parts are.
pub fn compose_maps(f: &ParametricMap, g: &ParametricMap) -> Result<ParametricMap> {
    check_dim("map composition", f.out_dim, g.in_dim)?;
    let split = g.param_dim;
    let (fe, ge) = (f.eval.clone(), g.eval.clone());
    let composed = ParametricMap::new(g.param_dim + f.param_dim, f.in_dim, g.out_dim, move |p, x| {
        let (q, p) = p.split_at(split);
        ge(q, &fe(p, x))
    });
    Ok(match (&f.jacobians, &g.jacobians) {
        (Some(jf), Some(jg)) => {
            let (jf, jg, fe) = (jf.clone(), jg.clone(), f.eval.clone());
            let (b, pf, pg) = (g.out_dim, f.param_dim, g.param_dim);
            composed.with_jacobians(move |p, x| {
                let (q, p) = p.split_at(split);
                let mid = fe(p, x);
                let (jpf, jaf) = jf(p, x);
                let (jqg, jag) = jg(q, &mid);
                let mut jp = DMatrix::zeros(b, pg + pf);
                jp.view_mut((0, 0), (b, pg)).copy_from(&jqg);
                jp.view_mut((0, pg), (b, pf)).copy_from(&(&jag * jpf));
                (jp, jag * jaf)
            })
        }
        _ => composed,
    })
}

/// Expectation: `(x_p, x_a) ↦ E_{μ^n}[f(_, x_p, x_a)]`.
///
/// Arrows with a Gaussian structure tag map to their analytic mean with
/// analytic Jacobians. Other arrows average over `mc_samples` draws of `ω`
/// fixed once from `stream`, so the result is a deterministic map
/// differentiated by finite differences.
pub fn exp_functor(f: &DFArrow, mc_samples: usize, stream: &SampleStream) -> Result<ParametricMap> {
    let (p, a, b) = (f.param_dim(), f.in_dim(), f.out_dim());
    if let Some(s) = f.gaussian() {
        let s1 = s.clone();
        let map = ParametricMap::new(p, a, b, move |params, x| {
            s1.law_at(params, x)
                .map(|law| law.mean.as_slice().to_vec())
                .unwrap_or_else(|_| vec![f64::NAN; b])
        });
        if !s.has_param_jacobian() {
            return Ok(map);
        }
        let s2 = s.clone();
        return Ok(map.with_jacobians(move |params, x| {
            let ja = s2.kernel(params).map(|k| k.matrix).unwrap_or_else(|_| DMatrix::from_element(b, a, f64::NAN));
            let jp = s2
                .param_jacobian(params, x)
                .unwrap_or_else(|| DMatrix::from_element(b, p, f64::NAN));
            (jp, ja)
        }));
    }
    if mc_samples == 0 {
        return Err(Error::InvalidArgument("Monte Carlo expectation needs samples".into()));
    }
    let omegas: Vec<Vec<f64>> = (0..mc_samples)
        .map(|i| {
            sample_omega(f.space(), f.blocks(), &stream.substream(i as u64, mc_samples as u64)).into_flat()
        })
        .collect();
    let g = f.clone();
    Ok(ParametricMap::new(p, a, b, move |params, x| {
        let draws: Vec<Vec<f64>> = omegas.iter().map(|w| g.call(w, params, x)).collect();
        (0..b)
            .map(|j| {
                let col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
                pairwise_sum(&col) / col.len() as f64
            })
            .collect()
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub epsilon: f64,
    pub iterations: usize,
}

impl LearnConfig {
    pub fn new(epsilon: f64, iterations: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {epsilon}"
            )));
        }
        Ok(Self { epsilon, iterations })
    }
}

/// A supervised learner `(P, I, U, r)` with its current parameters.
#[derive(Clone)]
pub struct Learner {
    param_dim: usize,
    in_dim: usize,
    out_dim: usize,
    params: Vec<f64>,
    implement: ImplementFn,
    update: LearnerFn,
    request: LearnerFn,
}

impl Learner {
    pub fn new(
        param_dim: usize,
        in_dim: usize,
        out_dim: usize,
        implement: impl Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
        update: impl Fn(&[f64], &[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
        request: impl Fn(&[f64], &[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        Self {
            param_dim,
            in_dim,
            out_dim,
            params: vec![0.0; param_dim],
            implement: Arc::new(implement),
            update: Arc::new(update),
            request: Arc::new(request),
        }
    }

    /// The unit of composition: no parameters, `I = id`, `r(a, b) = b`.
    pub fn identity(dim: usize) -> Self {
        Self::new(
            0,
            dim,
            dim,
            |_, a| Ok(a.to_vec()),
            |p, _, _| Ok(p.to_vec()),
            |_, _, b| Ok(b.to_vec()),
        )
    }

    pub fn with_params(mut self, params: Vec<f64>) -> Result<Self> {
        check_dim("learner parameters", self.param_dim, params.len())?;
        self.params = params;
        Ok(self)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    fn check_args(&self, p: &[f64], a: &[f64], b: Option<&[f64]>) -> Result<()> {
        check_dim("learner parameters", self.param_dim, p.len())?;
        check_dim("learner input", self.in_dim, a.len())?;
        if let Some(b) = b {
            check_dim("learner target", self.out_dim, b.len())?;
        }
        Ok(())
    }

    pub fn implement(&self, p: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        self.check_args(p, a, None)?;
        finite("implement", (self.implement)(p, a)?)
    }

    pub fn update(&self, p: &[f64], a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        self.check_args(p, a, Some(b))?;
        finite("update", (self.update)(p, a, b)?)
    }

    pub fn request(&self, p: &[f64], a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        self.check_args(p, a, Some(b))?;
        finite("request", (self.request)(p, a, b)?)
    }
}

impl fmt::Debug for Learner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Learner")
            .field("param_dim", &self.param_dim)
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .field("params", &self.params)
            .finish()
    }
}

fn finite(what: &str, v: Vec<f64>) -> Result<Vec<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("learner {what}")))
    }
}

/// `E(p, a, b) = Σⱼ er(m(p, a)ⱼ, bⱼ)`.
pub fn total_error(prediction: &[f64], target: &[f64]) -> f64 {
    prediction
        .iter()
        .zip(target)
        .map(|(u, v)| (u - v) * (u - v))
        .sum()
}

/// Gradient descent on `E(p, a, b) = Σⱼ (m(p, a)ⱼ − bⱼ)²`:
///
/// * `U(p, a, b) = p − ε ∇_p E`
/// * `r(p, a, b) = a − ½ ∇_a E`
///
/// The request inverts `∂er/∂u = 2(u − v)` coordinate-wise, which is what
/// makes learners of composites equal composites of learners. Parameters
/// start at zero; see [`Learner::with_params`].
pub fn backprop_functor(m: &ParametricMap, cfg: &LearnConfig) -> Learner {
    let eps = cfg.epsilon;
    let (mi, mu, mr) = (m.clone(), m.clone(), m.clone());
    Learner::new(
        m.param_dim,
        m.in_dim,
        m.out_dim,
        move |p, a| mi.eval(p, a),
        move |p, a, b| {
            let residual = residual(&mu, p, a, b)?;
            let (jp, _) = mu.jacobians(p, a)?;
            let grad = jp.transpose() * residual * 2.0;
            Ok(p.iter().zip(grad.iter()).map(|(pi, g)| pi - eps * g).collect())
        },
        move |p, a, b| {
            let residual = residual(&mr, p, a, b)?;
            let (_, ja) = mr.jacobians(p, a)?;
            let grad = ja.transpose() * residual * 2.0;
            Ok(a.iter().zip(grad.iter()).map(|(ai, g)| ai - 0.5 * g).collect())
        },
    )
}

fn residual(m: &ParametricMap, p: &[f64], a: &[f64], b: &[f64]) -> Result<DVector<f64>> {
    check_dim("learner target", m.out_dim, b.len())?;
    let y = m.eval(p, a)?;
    Ok(DVector::from_fn(y.len(), |j, _| y[j] - b[j]))
}

/// `l2 ∘ l1` in Learn, parameters `(p₂, p₁)`:
///
/// * `I = I₂(p₂, I₁(p₁, a))`
/// * `U = (U₂(p₂, b, c), U₁(p₁, a, r₂(p₂, b, c)))` with `b = I₁(p₁, a)`
/// * `r = r₁(p₁, a, r₂(p₂, b, c))`
pub fn compose_learners(l1: &Learner, l2: &Learner) -> Result<Learner> {
    check_dim("learner composition", l1.out_dim, l2.in_dim)?;
    let split = l2.param_dim;
    let (i1, i2) = (l1.clone(), l2.clone());
    let (u1, u2) = (l1.clone(), l2.clone());
    let (r1, r2) = (l1.clone(), l2.clone());
    let mut params = l2.params.clone();
    params.extend_from_slice(&l1.params);
    let mut composed = Learner::new(
        l2.param_dim + l1.param_dim,
        l1.in_dim,
        l2.out_dim,
        move |p, a| {
            let (q, p) = p.split_at(split);
            i2.implement(q, &i1.implement(p, a)?)
        },
        move |p, a, c| {
            let (q, p) = p.split_at(split);
            let b = u1.implement(p, a)?;
            let mut out = u2.update(q, &b, c)?;
            out.extend(u1.update(p, a, &u2.request(q, &b, c)?)?);
            Ok(out)
        },
        move |p, a, c| {
            let (q, p) = p.split_at(split);
            let b = r1.implement(p, a)?;
            r1.request(p, a, &r2.request(q, &b, c)?)
        },
    );
    composed.params = params;
    Ok(composed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub params: Vec<f64>,
    /// Mean of `E` over the dataset: entry 0 before training, entry `k`
    /// after pass `k`.
    pub trace: Vec<f64>,
}

impl TrainResult {
    pub fn final_loss(&self) -> f64 {
        *self.trace.last().expect("trace always holds the initial loss")
    }
}

/// Mean of `E` over the dataset at parameters `p`.
pub fn mean_error(l: &Learner, p: &[f64], data: &Dataset) -> Result<f64> {
    let terms = data
        .rows()
        .map(|(a, b)| Ok(total_error(&l.implement(p, a)?, b)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&terms) / data.len() as f64)
}

/// Applies `U` row by row, in dataset order, for `cfg.iterations` passes,
/// starting from the learner's parameters.
pub fn train(l: &Learner, data: &Dataset, cfg: &LearnConfig) -> Result<TrainResult> {
    check_dim("dataset input", l.in_dim, data.in_dim())?;
    check_dim("dataset output", l.out_dim, data.out_dim())?;
    let mut p = l.params.clone();
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    trace.push(mean_error(l, &p, data)?);
    for pass in 1..=cfg.iterations {
        for (row, (a, b)) in data.rows().enumerate() {
            p = match l.update(&p, a, b) {
                Ok(next) => next,
                Err(Error::NonFinite(_)) => return Err(Error::Diverged { pass, row }),
                Err(e) => return Err(e),
            };
        }
        let loss = mean_error(l, &p, data).map_err(|e| match e {
            Error::NonFinite(_) => Error::Diverged { pass, row: data.len() },
            e => e,
        })?;
        if !loss.is_finite() {
            return Err(Error::Diverged { pass, row: data.len() });
        }
        trace.push(loss);
    }
    Ok(TrainResult { params: p, trace })
}

/// Root mean squared residual of `m` on the data: the closed-form estimate of
/// the noise scale, pooled over output coordinates.
pub fn residual_sd(m: &ParametricMap, params: &[f64], data: &Dataset) -> Result<f64> {
    let terms = data
        .rows()
        .map(|(a, b)| Ok(total_error(&m.eval(params, a)?, b)))
        .collect::<Result<Vec<f64>>>()?;
    Ok((pairwise_sum(&terms) / (data.len() * m.out_dim) as f64).sqrt())
}
