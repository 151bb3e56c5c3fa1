//! Conditional likelihoods `L(x_p, x_a, x_b)`: densities of a model's output
//! with respect to Lebesgue measure, composed by integrating out the
//! intermediate variable.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::arrows::DFArrow;
use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::gaussian::{GaussianArrow, GaussianLaw, GaussianStructure};
use crate::linalg::{normal_log_density, PD_TOLERANCE};
use crate::quadrature::{grid, trapezoid, trapezoid_2d};
use crate::stats::pairwise_sum;

/// Trapezoid nodes for scalar integrals.
pub const QUADRATURE_NODES: usize = 2049;
/// Trapezoid nodes per axis for planar integrals.
pub const QUADRATURE_NODES_2D: usize = 257;
/// Supports extend this many standard deviations either side of the mean.
pub const SUPPORT_WIDTH: f64 = 8.0;

type DensityFn = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync>;
type TableEntry = (Vec<f64>, Vec<f64>, Arc<Vec<(f64, f64)>>);
type MomentsFn = Arc<dyn Fn(&[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync>;

/// A density known only pointwise. `moments(x_p, x_a)` returns the
/// per-coordinate mean and standard deviation; the support is taken to be
/// the box `mean ± 8·sd`.
#[derive(Clone)]
pub struct GridDensity {
    density: DensityFn,
    moments: MomentsFn,
}

#[derive(Clone)]
pub enum LikelihoodBackend {
    Gaussian(GaussianStructure),
    Grid(GridDensity),
}

#[derive(Clone)]
pub struct LikelihoodFn {
    param_dim: usize,
    in_dim: usize,
    out_dim: usize,
    backend: LikelihoodBackend,
}

/// How [`compose_with`] integrates out the intermediate variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    /// Closed form when both sides are Gaussian, quadrature otherwise.
    Auto,
    Quadrature,
}

impl LikelihoodFn {
    pub fn gaussian(structure: GaussianStructure) -> Self {
        Self {
            param_dim: structure.param_dim(),
            in_dim: structure.in_dim(),
            out_dim: structure.out_dim(),
            backend: LikelihoodBackend::Gaussian(structure),
        }
    }

    pub fn grid(
        param_dim: usize,
        in_dim: usize,
        out_dim: usize,
        density: impl Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync + 'static,
        moments: impl Fn(&[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync + 'static,
    ) -> Self {
        Self {
            param_dim,
            in_dim,
            out_dim,
            backend: LikelihoodBackend::Grid(GridDensity {
                density: Arc::new(density),
                moments: Arc::new(moments),
            }),
        }
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

    pub fn backend(&self) -> &LikelihoodBackend {
        &self.backend
    }

    pub fn is_closed_form(&self) -> bool {
        matches!(self.backend, LikelihoodBackend::Gaussian(_))
    }

    fn check_args(&self, params: &[f64], x: &[f64], y: &[f64]) -> Result<()> {
        check_dim("likelihood parameters", self.param_dim, params.len())?;
        check_dim("likelihood input", self.in_dim, x.len())?;
        check_dim("likelihood output", self.out_dim, y.len())
    }

    /// `log L(x_p, x_a, x_b)`; Gaussian densities are evaluated in log space.
    pub fn log_density(&self, params: &[f64], x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_args(params, x, y)?;
        match &self.backend {
            LikelihoodBackend::Gaussian(s) => {
                let law = s.law_at(params, x)?;
                normal_log_density(&law.mean, &law.cov, &DVector::from_column_slice(y))
            }
            LikelihoodBackend::Grid(g) => {
                let d = (g.density)(params, x, y);
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::NonFinite("likelihood density".into()));
                }
                Ok(d.ln())
            }
        }
    }

    pub fn density(&self, params: &[f64], x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_args(params, x, y)?;
        match &self.backend {
            LikelihoodBackend::Gaussian(_) => Ok(self.log_density(params, x, y)?.exp()),
            LikelihoodBackend::Grid(g) => {
                let d = (g.density)(params, x, y);
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::NonFinite("likelihood density".into()));
                }
                Ok(d)
            }
        }
    }

    /// Per-coordinate mean and standard deviation of the output law.
    pub fn moments(&self, params: &[f64], x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim("likelihood parameters", self.param_dim, params.len())?;
        check_dim("likelihood input", self.in_dim, x.len())?;
        match &self.backend {
            LikelihoodBackend::Gaussian(s) => {
                let law = s.law_at(params, x)?;
                let sd = (0..law.dim()).map(|i| law.std_dev(i)).collect();
                Ok((law.mean.as_slice().to_vec(), sd))
            }
            LikelihoodBackend::Grid(g) => Ok((g.moments)(params, x)),
        }
    }

    /// The box `mean ± 8·sd` on which the density is integrated.
    pub fn support(&self, params: &[f64], x: &[f64]) -> Result<Vec<(f64, f64)>> {
        let (mean, sd) = self.moments(params, x)?;
        mean.iter()
            .zip(&sd)
            .map(|(m, s)| {
                if *s > 0.0 && s.is_finite() {
                    Ok((m - SUPPORT_WIDTH * s, m + SUPPORT_WIDTH * s))
                } else {
                    Err(Error::DegenerateCovariance { min_eigenvalue: s * s })
                }
            })
            .collect()
    }
}

impl fmt::Debug for LikelihoodFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let backend = match &self.backend {
            LikelihoodBackend::Gaussian(_) => "gaussian",
            LikelihoodBackend::Grid(_) => "grid",
        };
        f.debug_struct("LikelihoodFn")
            .field("param_dim", &self.param_dim)
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .field("backend", &backend)
            .finish()
    }
}

/// The closed-form Gaussian likelihood of an affine-Gaussian arrow. Densities
/// exist only where `Σ(x_p)` is positive definite; evaluation elsewhere
/// fails with [`Error::DegenerateCovariance`].
pub fn likelihood_of(g: &GaussianArrow) -> LikelihoodFn {
    LikelihoodFn::gaussian(g.structure())
}

/// The likelihood of a DF arrow that carries a Gaussian structure tag.
pub fn likelihood_of_arrow(f: &DFArrow) -> Result<LikelihoodFn> {
    f.gaussian().cloned().map(LikelihoodFn::gaussian).ok_or_else(|| {
        Error::UnsupportedComposition("arrow has no closed-form likelihood".into())
    })
}

/// `L2 ∘ L1` with parameters `(x_q, x_p)`, via the route chosen automatically.
pub fn likelihood_compose(l1: &LikelihoodFn, l2: &LikelihoodFn) -> Result<LikelihoodFn> {
    compose_with(l1, l2, Route::Auto)
}

/// `(x_q, x_p, x_a, x_c) ↦ ∫ L2(x_q, x_b, x_c) L1(x_p, x_a, x_b) dx_b`.
///
/// The quadrature route needs a scalar intermediate and integrates over
/// `μ₁ ± 8σ₁` with 2049 trapezoid nodes, so `L2` must vary slowly on the
/// scale `σ₁/128`.
pub fn compose_with(l1: &LikelihoodFn, l2: &LikelihoodFn, route: Route) -> Result<LikelihoodFn> {
    check_dim("likelihood composition", l1.out_dim, l2.in_dim)?;
    if let (Route::Auto, LikelihoodBackend::Gaussian(s1), LikelihoodBackend::Gaussian(s2)) =
        (route, &l1.backend, &l2.backend)
    {
        return Ok(LikelihoodFn::gaussian(s1.then(s2)?));
    }
    if l1.out_dim != 1 {
        return Err(Error::UnsupportedComposition(format!(
            "numeric composition needs a scalar intermediate, found dimension {}",
            l1.out_dim
        )));
    }
    let split = l2.param_dim;
    let (a, b) = (l1.clone(), l2.clone());
    // (node, L1 density) pairs over the support of the intermediate; the last
    // table is kept since callers sweep x_c at fixed (x_p, x_a)
    let cache: Mutex<Option<TableEntry>> = Mutex::new(None);
    let table = Arc::new(move |p: &[f64], x: &[f64]| -> Result<Arc<Vec<(f64, f64)>>> {
        if let Some((cp, cx, t)) = cache.lock().expect("table cache poisoned").as_ref() {
            if cp.as_slice() == p && cx.as_slice() == x {
                return Ok(t.clone());
            }
        }
        let (lo, hi) = a.support(p, x)?[0];
        let t: Vec<(f64, f64)> = grid(lo, hi, QUADRATURE_NODES)
            .into_iter()
            .map(|m| Ok((m, a.density(p, x, &[m])?)))
            .collect::<Result<_>>()?;
        let t = Arc::new(t);
        *cache.lock().expect("table cache poisoned") = Some((p.to_vec(), x.to_vec(), t.clone()));
        Ok(t)
    });
    let (density_table, moments_table) = (table.clone(), table);
    let (b1, b2) = (b.clone(), b);
    let density = move |p: &[f64], x: &[f64], y: &[f64]| -> f64 {
        let (q, p) = p.split_at(split);
        let Ok(table) = density_table(p, x) else {
            return f64::NAN;
        };
        integrate_table(&table, |m| b1.density(q, &[m], y))
    };
    let moments = move |p: &[f64], x: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let (q, p) = p.split_at(split);
        let Ok(table) = moments_table(p, x) else {
            return (vec![f64::NAN; b2.out_dim], vec![f64::NAN; b2.out_dim]);
        };
        let mut means = Vec::with_capacity(b2.out_dim);
        let mut sds = Vec::with_capacity(b2.out_dim);
        for j in 0..b2.out_dim {
            let first = integrate_table(&table, |m| b2.moments(q, &[m]).map(|(mu, _)| mu[j]));
            let second = integrate_table(&table, |m| {
                b2.moments(q, &[m]).map(|(mu, sd)| sd[j] * sd[j] + mu[j] * mu[j])
            });
            means.push(first);
            sds.push((second - first * first).max(0.0).sqrt());
        }
        (means, sds)
    };
    Ok(LikelihoodFn::grid(
        l2.param_dim + l1.param_dim,
        l1.in_dim,
        l2.out_dim,
        density,
        moments,
    ))
}

/// Trapezoid sum of `f(node)·weight` over an equally spaced node table.
fn integrate_table(table: &[(f64, f64)], f: impl Fn(f64) -> Result<f64>) -> f64 {
    let h = table[1].0 - table[0].0;
    let last = table.len() - 1;
    let terms: Result<Vec<f64>> = table
        .iter()
        .enumerate()
        .map(|(i, &(m, w))| {
            let v = f(m)? * w;
            Ok(if i == 0 || i == last { 0.5 * v } else { v })
        })
        .collect();
    match terms {
        Ok(t) => h * pairwise_sum(&t),
        Err(_) => f64::NAN,
    }
}

/// `∫ L(x_p, x_a, y) dy` over the support box, for outputs of dimension 1 or 2.
pub fn normalization(l: &LikelihoodFn, params: &[f64], x: &[f64]) -> Result<f64> {
    let support = l.support(params, x)?;
    let failure = std::cell::RefCell::new(None);
    let eval = |y: &[f64]| match l.density(params, x, y) {
        Ok(d) => d,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let value = match support.as_slice() {
        [(lo, hi)] => trapezoid(|y| eval(&[y]), *lo, *hi, QUADRATURE_NODES),
        [r0, r1] => trapezoid_2d(|u, v| eval(&[u, v]), *r0, *r1, QUADRATURE_NODES_2D),
        _ => {
            return Err(Error::UnsupportedComposition(format!(
                "normalization is implemented for outputs of dimension 1 or 2, found {}",
                support.len()
            )))
        }
    };
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// A dataset log-likelihood. `value` is `−∞` when some row has zero density;
/// `zero_density_row` then names the first such row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetLogLikelihood {
    pub value: f64,
    pub zero_density_row: Option<usize>,
}

/// `L_{S_n}(x_p) = Σᵢ log L(x_p, x_{a_i}, x_{b_i})`, summed pairwise.
pub fn log_likelihood_dataset(l: &LikelihoodFn, params: &[f64], data: &Dataset) -> Result<DatasetLogLikelihood> {
    let mut terms = Vec::with_capacity(data.len());
    for (i, (x, y)) in data.rows().enumerate() {
        let v = l.log_density(params, x, y)?;
        if v == f64::NEG_INFINITY {
            return Ok(DatasetLogLikelihood {
                value: f64::NEG_INFINITY,
                zero_density_row: Some(i),
            });
        }
        terms.push(v);
    }
    Ok(DatasetLogLikelihood {
        value: pairwise_sum(&terms),
        zero_density_row: None,
    })
}

/// `log` of the univariate normal density `N(mean, var)` at `y`.
fn univariate_log_density(mean: f64, var: f64, y: f64) -> f64 {
    let r = y - mean;
    -0.5 * (2.0 * PI * var).ln() - r * r / (2.0 * var)
}

/// `M_{S_n}(x_p) = Σᵢ Σⱼ log l_{ij}(x_p)` using the marginal law of each
/// output coordinate. A zero marginal variance yields `−∞`, reporting the
/// first row.
pub fn marginal_log_likelihood(g: &GaussianArrow, params: &[f64], data: &Dataset) -> Result<DatasetLogLikelihood> {
    check_dim("dataset input", g.in_dim(), data.in_dim())?;
    check_dim("dataset output", g.out_dim(), data.out_dim())?;
    let kernel = g.kernel(params)?;
    if (0..g.out_dim()).any(|j| kernel.cov[(j, j)] <= 0.0) {
        return Ok(DatasetLogLikelihood {
            value: f64::NEG_INFINITY,
            zero_density_row: Some(0),
        });
    }
    let mut terms = Vec::with_capacity(data.len() * g.out_dim());
    for (x, y) in data.rows() {
        let law = kernel.law_at(x)?;
        for (j, yj) in y.iter().enumerate() {
            terms.push(univariate_log_density(law.mean[j], law.cov[(j, j)], *yj));
        }
    }
    Ok(DatasetLogLikelihood {
        value: pairwise_sum(&terms),
        zero_density_row: None,
    })
}

/// The marginal error function `er(u, v) = (u − v)²`.
pub fn squared_error(u: f64, v: f64) -> f64 {
    (u - v) * (u - v)
}

/// `log p_j(y) = α − β·er(E[f_j], y)` for one output coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalDecomposition {
    /// `−log(2πs²)/2`.
    pub alpha: f64,
    /// `1/(2s²)`.
    pub beta: f64,
    /// The analytic marginal mean `E[f_j]`.
    pub mean: f64,
}

impl MarginalDecomposition {
    pub fn log_density(&self, y: f64) -> f64 {
        self.alpha - self.beta * squared_error(self.mean, y)
    }
}

pub fn marginal_decomposition(
    g: &GaussianArrow,
    params: &[f64],
    x: &[f64],
    j: usize,
) -> Result<MarginalDecomposition> {
    decompose_law(&g.kernel(params)?.law_at(x)?, j)
}

/// The decomposition for coordinate `j` of an already computed law.
pub fn decompose_law(law: &GaussianLaw, j: usize) -> Result<MarginalDecomposition> {
    if j >= law.dim() {
        return Err(Error::InvalidArgument(format!(
            "coordinate {j} out of range for output dimension {}",
            law.dim()
        )));
    }
    let var = law.cov[(j, j)];
    if var <= PD_TOLERANCE {
        return Err(Error::DegenerateCovariance { min_eigenvalue: var });
    }
    Ok(MarginalDecomposition {
        alpha: -(2.0 * PI * var).ln() / 2.0,
        beta: 1.0 / (2.0 * var),
        mean: law.mean[j],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{as_df_arrow, GaussianArrow};
    use crate::arrows::df_compose;
    use crate::sample_space::SampleSpace;
    use nalgebra::DMatrix;

    fn space() -> SampleSpace {
        SampleSpace::default()
    }

    fn linreg() -> GaussianArrow {
        GaussianArrow::linear_regression(space())
    }

    fn scalar(var: f64) -> GaussianArrow {
        GaussianArrow::affine(
            space(),
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, var),
        )
        .unwrap()
    }

    #[test]
    fn regression_likelihood_closed_form() {
        let l = likelihood_of(&linreg());
        let mode = l.density(&[1.0, 0.0, 1.0], &[0.0], &[0.0]).unwrap();
        assert!((mode - 0.398_942_280_401_432_7).abs() < 1e-15);
        let (a, b, s, x, y): (f64, f64, f64, f64, f64) = (2.0, -1.0, 0.7, 1.3, 2.2);
        let expect = (-(y - (a * x + b)).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt());
        let got = l.density(&[a, b, s], &[x], &[y]).unwrap();
        assert!((got - expect).abs() < 1e-15);
        let z = trapezoid(|y| l.density(&[1.0, 0.0, 1.0], &[0.0], &[y]).unwrap(), -8.0, 8.0, 2049);
        assert!((z - 1.0).abs() < 1e-3);
    }

    #[test]
    fn degenerate_covariance_has_no_likelihood() {
        let l = likelihood_of(&linreg());
        assert!(matches!(
            l.density(&[1.0, 0.0, 0.0], &[0.0], &[0.0]),
            Err(Error::DegenerateCovariance { .. })
        ));
    }

    #[test]
    fn scalar_convolution_closed_and_quadrature() {
        let (l1, l2) = (likelihood_of(&scalar(1.0)), likelihood_of(&scalar(4.0)));
        let closed = likelihood_compose(&l1, &l2).unwrap();
        let quad = compose_with(&l1, &l2, Route::Quadrature).unwrap();
        assert!(closed.is_closed_form() && !quad.is_closed_form());
        let var = match closed.backend() {
            LikelihoodBackend::Gaussian(s) => s.law_at(&[], &[0.0]).unwrap().cov[(0, 0)],
            LikelihoodBackend::Grid(_) => unreachable!(),
        };
        assert!((var - 5.0).abs() < 1e-15);
        for y in grid(-10.0, 10.0, 41) {
            let c = closed.density(&[], &[0.5], &[y]).unwrap();
            let q = quad.density(&[], &[0.5], &[y]).unwrap();
            assert!((c - q).abs() / c < 1e-3, "{y}: {c} vs {q}");
        }
        let (mean, sd) = quad.moments(&[], &[0.5]).unwrap();
        assert!((mean[0] - 0.5).abs() < 1e-9);
        assert!((sd[0] - 5f64.sqrt()).abs() < 1e-9);
        assert!((normalization(&quad, &[], &[0.5]).unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn near_delta_composition_is_approximate_identity() {
        let l = likelihood_of(&linreg());
        let delta = likelihood_of(&scalar(1e-6));
        // the grid follows the inner density, so the narrow kernel goes first
        let c = compose_with(&delta, &l, Route::Quadrature).unwrap();
        let p = [1.5, 0.5, 1.0];
        for y in grid(-3.0, 5.0, 41) {
            let base = l.density(&p, &[0.2], &[y]).unwrap();
            let v = c.density(&p, &[0.2], &[y]).unwrap();
            assert!((v - base).abs() / base < 1e-3);
        }
    }

    #[test]
    fn semifunctor_law() {
        let g = linreg();
        let composite = df_compose(&as_df_arrow(&g).unwrap(), &as_df_arrow(&g).unwrap()).unwrap();
        let direct = likelihood_of_arrow(&composite).unwrap();
        let (l1, l2) = (likelihood_of(&g), likelihood_of(&g));
        let closed = likelihood_compose(&l1, &l2).unwrap();
        let quad = compose_with(&l1, &l2, Route::Quadrature).unwrap();
        let params = [0.7, -1.0, 0.4, 1.3, 0.2, 0.9];
        let (mean, sd) = direct.moments(&params, &[1.0]).unwrap();
        for y in grid(mean[0] - 4.0 * sd[0], mean[0] + 4.0 * sd[0], 41) {
            let d = direct.density(&params, &[1.0], &[y]).unwrap();
            assert!((closed.density(&params, &[1.0], &[y]).unwrap() - d).abs() <= 1e-9 * d.max(1e-300));
            assert!((quad.density(&params, &[1.0], &[y]).unwrap() - d).abs() / d < 1e-3);
        }
    }

    #[test]
    fn quadrature_associativity() {
        let (a, b, c) = (likelihood_of(&linreg()), likelihood_of(&linreg()), likelihood_of(&linreg()));
        let left = compose_with(&compose_with(&a, &b, Route::Quadrature).unwrap(), &c, Route::Quadrature).unwrap();
        let right = compose_with(&a, &compose_with(&b, &c, Route::Quadrature).unwrap(), Route::Quadrature).unwrap();
        let params = [0.9, 0.1, 0.5, -1.2, 0.3, 0.8, 0.5, 2.0, 0.6];
        for y in [-2.0, 0.0, 2.0] {
            let l = left.density(&params, &[0.4], &[y]).unwrap();
            let r = right.density(&params, &[0.4], &[y]).unwrap();
            assert!((l - r).abs() / l < 1e-3);
        }
    }

    #[test]
    fn vector_intermediate_needs_gaussians() {
        let g = GaussianArrow::dense(space(), 1, 2, 0.5);
        let l = likelihood_of(&g);
        let h = likelihood_of(&GaussianArrow::dense(space(), 2, 1, 0.5));
        assert!(matches!(
            compose_with(&l, &h, Route::Quadrature),
            Err(Error::UnsupportedComposition(_))
        ));
        assert!(likelihood_compose(&l, &h).is_ok());
    }

    #[test]
    fn two_dimensional_normalization() {
        let g = GaussianArrow::affine(
            space(),
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]),
        )
        .unwrap();
        let z = normalization(&likelihood_of(&g), &[], &[1.0, -1.0]).unwrap();
        assert!((z - 1.0).abs() < 1e-3);
    }

    fn rows(xs: &[f64], ys: &[f64]) -> Dataset {
        Dataset::new(
            xs.iter().map(|x| vec![*x]).collect(),
            ys.iter().map(|y| vec![*y]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn dataset_log_likelihood() {
        let l = likelihood_of(&linreg());
        let one = rows(&[0.0], &[0.0]);
        let v = log_likelihood_dataset(&l, &[1.0, 0.0, 1.0], &one).unwrap().value;
        assert!((v + 0.918_938_533_204_672_7).abs() < 1e-15);

        let d = rows(&[0.0, 1.0, -2.0], &[0.3, 1.1, -1.7]);
        let p = [0.9, 0.2, 0.6];
        let once = log_likelihood_dataset(&l, &p, &d).unwrap().value;
        let twice = log_likelihood_dataset(&l, &p, &d.concat(&d).unwrap()).unwrap().value;
        assert!((twice - 2.0 * once).abs() < 1e-12);
        let manual: f64 = d
            .rows()
            .map(|(x, y)| univariate_log_density(p[0] * x[0] + p[1], p[2] * p[2], y[0]))
            .sum();
        assert!((once - manual).abs() < 1e-12);
    }

    #[test]
    fn zero_density_sentinel() {
        let l = LikelihoodFn::grid(
            0,
            1,
            1,
            |_, _, y| if y[0].abs() <= 1.0 { 0.5 } else { 0.0 },
            |_, _| (vec![0.0], vec![1.0 / 3f64.sqrt()]),
        );
        let d = rows(&[0.0, 0.0], &[0.5, 3.0]);
        let r = log_likelihood_dataset(&l, &[], &d).unwrap();
        assert_eq!(r.value, f64::NEG_INFINITY);
        assert_eq!(r.zero_density_row, Some(1));
    }

    #[test]
    fn marginal_likelihood_cases() {
        let g = linreg();
        let d = rows(&[0.0, 1.0, 2.5], &[0.1, 2.0, 4.0]);
        let p = [1.2, 0.3, 0.8];
        let m = marginal_log_likelihood(&g, &p, &d).unwrap().value;
        let l = log_likelihood_dataset(&likelihood_of(&g), &p, &d).unwrap().value;
        assert_eq!(m, l);

        let two = |off: f64| {
            GaussianArrow::affine(
                space(),
                DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
                DVector::from_vec(vec![0.0, 0.5]),
                DMatrix::from_row_slice(2, 2, &[1.0, off, off, 1.0]),
            )
            .unwrap()
        };
        let d2 = Dataset::new(vec![vec![0.3], vec![-1.0]], vec![vec![0.1, 0.4], vec![-0.9, 1.2]]).unwrap();
        let diag = two(0.0);
        let m = marginal_log_likelihood(&diag, &[], &d2).unwrap().value;
        let l = log_likelihood_dataset(&likelihood_of(&diag), &[], &d2).unwrap().value;
        assert!((m - l).abs() < 1e-9);

        let corr = two(0.9);
        let m = marginal_log_likelihood(&corr, &[], &d2).unwrap().value;
        let l = log_likelihood_dataset(&likelihood_of(&corr), &[], &d2).unwrap().value;
        assert!((m - l).abs() > 0.01 * d2.len() as f64);

        let flat = GaussianArrow::dense(space(), 1, 1, 0.0);
        let r = marginal_log_likelihood(&flat, &[1.0, 0.0], &d).unwrap();
        assert_eq!(r.value, f64::NEG_INFINITY);
    }

    #[test]
    fn decomposition_cases() {
        let g = linreg();
        let d = marginal_decomposition(&g, &[1.0, 0.0, 1.0], &[0.0], 0).unwrap();
        assert_eq!(d.alpha, -(2.0 * PI).ln() / 2.0);
        assert_eq!(d.beta, 0.5);
        let p = [0.4, -0.3, 1.7];
        let d = marginal_decomposition(&g, &p, &[2.0], 0).unwrap();
        let l = likelihood_of(&g);
        for y in -3..=3 {
            let y = y as f64;
            let direct = l.log_density(&p, &[2.0], &[y]).unwrap();
            assert!((d.log_density(y) - direct).abs() < 1e-12);
        }
        assert!(d.beta > 0.0);
        assert!(marginal_decomposition(&g, &[1.0, 0.0, 0.0], &[0.0], 0).is_err());
    }

    #[test]
    fn sample_mean_maximizes_log_likelihood() {
        let ys = [1.3, 0.2, 2.8, 1.9, 0.7, 1.1];
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let d = rows(&[0.0; 6], &ys);
        let l = likelihood_of(&linreg());
        let at = |b: f64| log_likelihood_dataset(&l, &[0.0, b, 1.0], &d).unwrap().value;
        let best = at(mean);
        for b in grid(mean - 2.0, mean + 2.0, 81) {
            assert!(at(b) <= best + 1e-12);
        }
    }
}
