//! Affine maps with additive Gaussian noise: `f(ω, x_p, x_a) = T(x_p, x_a) + G(ω)`
//! with `T` affine in `x_a` for each fixed `x_p`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

use crate::arrows::DFArrow;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{block_diag, check_psd, psd_factor};
use crate::sample_space::{sample_omega, SampleSpace, SampleStream};
use crate::stats::{ks_vs_fitted_normal, variance};

/// A Gauss triple: the kernel `x ↦ N(Mx + s, C)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineGaussian {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl AffineGaussian {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_dim("affine offset", matrix.nrows(), offset.len())?;
        check_dim("covariance size", matrix.nrows(), cov.nrows())?;
        check_psd(&cov)?;
        Ok(Self {
            matrix,
            offset,
            cov,
        })
    }

    pub fn deterministic(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        let b = matrix.nrows();
        Self::new(matrix, offset, DMatrix::zeros(b, b))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            offset: DVector::zeros(dim),
            cov: DMatrix::zeros(dim, dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `outer ∘ self`: `(M₂M₁, M₂s₁ + s₂, M₂C₁M₂ᵀ + C₂)`.
    pub fn then(&self, outer: &AffineGaussian) -> Result<AffineGaussian> {
        check_dim("Gaussian composition", self.out_dim(), outer.in_dim())?;
        let m2 = &outer.matrix;
        let cov = m2 * &self.cov * m2.transpose() + &outer.cov;
        // restore exact symmetry lost to rounding
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(AffineGaussian {
            matrix: m2 * &self.matrix,
            offset: m2 * &self.offset + &outer.offset,
            cov,
        })
    }

    pub fn tensor(&self, other: &AffineGaussian) -> AffineGaussian {
        let mut offset = self.offset.as_slice().to_vec();
        offset.extend_from_slice(other.offset.as_slice());
        AffineGaussian {
            matrix: block_diag(&self.matrix, &other.matrix),
            offset: DVector::from_vec(offset),
            cov: block_diag(&self.cov, &other.cov),
        }
    }

    pub fn law_at(&self, x: &[f64]) -> Result<GaussianLaw> {
        check_dim("Gaussian kernel input", self.in_dim(), x.len())?;
        Ok(GaussianLaw {
            mean: &self.matrix * DVector::from_column_slice(x) + &self.offset,
            cov: self.cov.clone(),
        })
    }
}

/// A multivariate normal law.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianLaw {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianLaw {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std_dev(&self, i: usize) -> f64 {
        self.cov[(i, i)].max(0.0).sqrt()
    }
}

type LawFn = Arc<dyn Fn(&[f64]) -> AffineGaussian + Send + Sync>;
type JacobianFn = Arc<dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync>;

/// The law-level description of an affine-Gaussian model: for each parameter
/// vector, a Gauss triple, plus optionally the Jacobian of the mean with
/// respect to the parameters.
#[derive(Clone)]
pub struct GaussianStructure {
    param_dim: usize,
    in_dim: usize,
    out_dim: usize,
    law: LawFn,
    param_jacobian: Option<JacobianFn>,
}

impl GaussianStructure {
    pub fn new(
        param_dim: usize,
        in_dim: usize,
        out_dim: usize,
        law: impl Fn(&[f64]) -> AffineGaussian + Send + Sync + 'static,
    ) -> Self {
        Self {
            param_dim,
            in_dim,
            out_dim,
            law: Arc::new(law),
            param_jacobian: None,
        }
    }

    /// Attaches `∂mean/∂x_p` as a `b × p` matrix at `(x_p, x_a)`.
    pub fn with_param_jacobian(
        mut self,
        jacobian: impl Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.param_jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn identity(dim: usize) -> Self {
        Self::fixed(AffineGaussian::identity(dim))
    }

    pub fn constant_map(in_dim: usize, value: Vec<f64>) -> Self {
        let b = value.len();
        Self::fixed(AffineGaussian {
            matrix: DMatrix::zeros(b, in_dim),
            offset: DVector::from_vec(value),
            cov: DMatrix::zeros(b, b),
        })
    }

    /// A parameter-free structure.
    pub fn fixed(kernel: AffineGaussian) -> Self {
        let (a, b) = (kernel.in_dim(), kernel.out_dim());
        Self::new(0, a, b, move |_| kernel.clone()).with_param_jacobian(move |_, _| DMatrix::zeros(b, 0))
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

    pub fn kernel(&self, params: &[f64]) -> Result<AffineGaussian> {
        check_dim("structure parameters", self.param_dim, params.len())?;
        let k = (self.law)(params);
        check_dim("structure input", self.in_dim, k.in_dim())?;
        check_dim("structure output", self.out_dim, k.out_dim())?;
        Ok(k)
    }

    pub fn law_at(&self, params: &[f64], x: &[f64]) -> Result<GaussianLaw> {
        self.kernel(params)?.law_at(x)
    }

    pub fn has_param_jacobian(&self) -> bool {
        self.param_jacobian.is_some()
    }

    pub fn param_jacobian(&self, params: &[f64], x: &[f64]) -> Option<DMatrix<f64>> {
        self.param_jacobian.as_ref().map(|j| j(params, x))
    }

    /// `outer ∘ self` at the level of laws; parameters are `(outer, inner)`.
    pub fn then(&self, outer: &GaussianStructure) -> Result<GaussianStructure> {
        check_dim("structure composition", self.out_dim, outer.in_dim)?;
        let split = outer.param_dim;
        let (inner_law, outer_law) = (self.law.clone(), outer.law.clone());
        let law = move |p: &[f64]| {
            let (q, p) = p.split_at(split);
            inner_law(p)
                .then(&outer_law(q))
                .expect("structure dimensions checked at composition")
        };
        let param_jacobian = match (&self.param_jacobian, &outer.param_jacobian) {
            (Some(j1), Some(j2)) => {
                let (j1, j2) = (j1.clone(), j2.clone());
                let (l1, l2) = (self.law.clone(), outer.law.clone());
                let (p1, p2, b) = (self.param_dim, outer.param_dim, outer.out_dim);
                let f: JacobianFn = Arc::new(move |p: &[f64], x: &[f64]| {
                    let (q, p) = p.split_at(split);
                    let inner = l1(p);
                    let mid = &inner.matrix * DVector::from_column_slice(x) + &inner.offset;
                    let outer_k = l2(q);
                    let mut out = DMatrix::zeros(b, p2 + p1);
                    out.view_mut((0, 0), (b, p2)).copy_from(&j2(q, mid.as_slice()));
                    out.view_mut((0, p2), (b, p1))
                        .copy_from(&(&outer_k.matrix * j1(p, x)));
                    out
                });
                Some(f)
            }
            _ => None,
        };
        Ok(GaussianStructure {
            param_dim: outer.param_dim + self.param_dim,
            in_dim: self.in_dim,
            out_dim: outer.out_dim,
            law: Arc::new(law),
            param_jacobian,
        })
    }

    /// Independent product; parameters are `(self, other)`.
    pub fn tensor(&self, other: &GaussianStructure) -> GaussianStructure {
        let split = self.param_dim;
        let (l1, l2) = (self.law.clone(), other.law.clone());
        let param_jacobian = match (&self.param_jacobian, &other.param_jacobian) {
            (Some(j1), Some(j2)) => {
                let (j1, j2) = (j1.clone(), j2.clone());
                let (xs, b1, b2, p1, p2) = (
                    self.in_dim,
                    self.out_dim,
                    other.out_dim,
                    self.param_dim,
                    other.param_dim,
                );
                let f: JacobianFn = Arc::new(move |p: &[f64], x: &[f64]| {
                    let (pa, pb) = p.split_at(split);
                    let (xa, xb) = x.split_at(xs);
                    block_diag(&j1(pa, xa), &j2(pb, xb))
                        .resize(b1 + b2, p1 + p2, 0.0)
                });
                Some(f)
            }
            _ => None,
        };
        GaussianStructure {
            param_dim: self.param_dim + other.param_dim,
            in_dim: self.in_dim + other.in_dim,
            out_dim: self.out_dim + other.out_dim,
            law: Arc::new(move |p| {
                let (pa, pb) = p.split_at(split);
                l1(pa).tensor(&l2(pb))
            }),
            param_jacobian,
        }
    }

    /// Fixes the parameters, leaving a parameter-free structure.
    pub fn fix(&self, params: &[f64]) -> GaussianStructure {
        let kernel = (self.law)(params);
        GaussianStructure::fixed(kernel)
    }
}

impl fmt::Debug for GaussianStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GaussianStructure")
            .field("param_dim", &self.param_dim)
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .field("param_jacobian", &self.param_jacobian.is_some())
            .finish()
    }
}

type AffineFn = Arc<dyn Fn(&[f64]) -> (DMatrix<f64>, DVector<f64>) + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
type MeanFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// How the noise covariance depends on the parameters.
#[derive(Clone)]
pub enum NoiseModel {
    /// `Σ(x_p)`; sampled through a PSD factor.
    Covariance(MatrixFn),
    /// A factor `L(x_p)` with `Σ = L Lᵀ`, applied as given.
    Scale(MatrixFn),
}

impl NoiseModel {
    fn cov(&self, params: &[f64]) -> DMatrix<f64> {
        match self {
            NoiseModel::Covariance(c) => c(params),
            NoiseModel::Scale(l) => {
                let l = l(params);
                &l * l.transpose()
            }
        }
    }

    fn factor(&self, params: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            NoiseModel::Covariance(c) => psd_factor(&c(params)),
            NoiseModel::Scale(l) => Ok(l(params)),
        }
    }
}

/// JSON description of a serializable [`GaussianArrow`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GaussianArrowSpec {
    Identity {
        dim: usize,
    },
    /// Constant `x ↦ Mx + c` plus `N(0, cov)`; no parameters.
    Affine {
        matrix: Vec<Vec<f64>>,
        offset: Vec<f64>,
        #[serde(default)]
        cov: Option<Vec<Vec<f64>>>,
    },
    /// `ax + b + s·z` with parameters `[a, b, s]`.
    LinearRegression,
    /// `Wx + c + noise_sd·z` with parameters `W` (row-major) then `c`.
    Dense {
        in_dim: usize,
        out_dim: usize,
        #[serde(default)]
        noise_sd: f64,
    },
}

fn matrix_from_rows(rows: &[Vec<f64>], cols: usize) -> Result<DMatrix<f64>> {
    for r in rows {
        check_dim("matrix row length", cols, r.len())?;
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// An affine-Gaussian statistical model `Ω^n × ℝ^p × ℝ^a → ℝ^b`.
#[derive(Clone)]
pub struct GaussianArrow {
    space: SampleSpace,
    param_dim: usize,
    in_dim: usize,
    out_dim: usize,
    mean_map: AffineFn,
    raw_mean: Option<MeanFn>,
    noise_mean: DVector<f64>,
    noise: Option<NoiseModel>,
    param_jacobian: Option<JacobianFn>,
    spec: Option<GaussianArrowSpec>,
}

impl GaussianArrow {
    /// General constructor: `mean_map` returns `(A(x_p), c(x_p))`.
    pub fn new(
        space: SampleSpace,
        param_dim: usize,
        in_dim: usize,
        out_dim: usize,
        mean_map: impl Fn(&[f64]) -> (DMatrix<f64>, DVector<f64>) + Send + Sync + 'static,
        noise: Option<NoiseModel>,
    ) -> Self {
        Self {
            space,
            param_dim,
            in_dim,
            out_dim,
            mean_map: Arc::new(mean_map),
            raw_mean: None,
            noise_mean: DVector::zeros(out_dim),
            noise,
            param_jacobian: None,
            spec: None,
        }
    }

    /// Builds the arrow from a mean map `T(x_p, x_a)` that is assumed affine
    /// in `x_a`; `A` and `c` are read off at the origin and unit vectors.
    /// Use [`GaussianArrow::check_invariants`] to verify the assumption.
    pub fn from_mean_fn(
        space: SampleSpace,
        param_dim: usize,
        in_dim: usize,
        out_dim: usize,
        mean: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        cov: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        let mean: MeanFn = Arc::new(mean);
        let raw = mean.clone();
        let extract = move |p: &[f64]| {
            let zero = vec![0.0; in_dim];
            let c = DVector::from_vec(mean(p, &zero));
            let mut a = DMatrix::zeros(out_dim, in_dim);
            for j in 0..in_dim {
                let mut e = zero.clone();
                e[j] = 1.0;
                let col = DVector::from_vec(mean(p, &e)) - &c;
                a.set_column(j, &col);
            }
            (a, c)
        };
        let mut g = Self::new(
            space,
            param_dim,
            in_dim,
            out_dim,
            extract,
            Some(NoiseModel::Covariance(Arc::new(cov))),
        );
        g.raw_mean = Some(raw);
        g
    }

    pub fn linear_regression(space: SampleSpace) -> Self {
        let mut g = Self::new(
            space,
            3,
            1,
            1,
            |p| {
                (
                    DMatrix::from_element(1, 1, p[0]),
                    DVector::from_element(1, p[1]),
                )
            },
            Some(NoiseModel::Scale(Arc::new(|p| DMatrix::from_element(1, 1, p[2])))),
        );
        g.param_jacobian = Some(Arc::new(|_, x| DMatrix::from_row_slice(1, 3, &[x[0], 1.0, 0.0])));
        g.spec = Some(GaussianArrowSpec::LinearRegression);
        g
    }

    pub fn dense(space: SampleSpace, in_dim: usize, out_dim: usize, noise_sd: f64) -> Self {
        let split = in_dim * out_dim;
        let noise = (noise_sd != 0.0).then(|| {
            NoiseModel::Scale(Arc::new(move |_: &[f64]| {
                DMatrix::identity(out_dim, out_dim) * noise_sd
            }))
        });
        let mut g = Self::new(
            space,
            split + out_dim,
            in_dim,
            out_dim,
            move |p| {
                (
                    DMatrix::from_row_slice(out_dim, in_dim, &p[..split]),
                    DVector::from_column_slice(&p[split..]),
                )
            },
            noise,
        );
        g.param_jacobian = Some(Arc::new(move |_, x| {
            let mut j = DMatrix::zeros(out_dim, split + out_dim);
            for i in 0..out_dim {
                for (k, xk) in x.iter().enumerate() {
                    j[(i, i * in_dim + k)] = *xk;
                }
                j[(i, split + i)] = 1.0;
            }
            j
        }));
        g.spec = Some(GaussianArrowSpec::Dense {
            in_dim,
            out_dim,
            noise_sd,
        });
        g
    }

    /// A parameter-free arrow `x ↦ Mx + c + N(0, cov)`.
    pub fn affine(
        space: SampleSpace,
        matrix: DMatrix<f64>,
        offset: DVector<f64>,
        cov: DMatrix<f64>,
    ) -> Result<Self> {
        check_dim("affine offset", matrix.nrows(), offset.len())?;
        check_dim("covariance size", matrix.nrows(), cov.nrows())?;
        check_psd(&cov)?;
        let (a, b) = (matrix.ncols(), matrix.nrows());
        let spec = GaussianArrowSpec::Affine {
            matrix: matrix_rows(&matrix),
            offset: offset.as_slice().to_vec(),
            cov: (!cov.iter().all(|v| *v == 0.0)).then(|| matrix_rows(&cov)),
        };
        let noise = (!cov.iter().all(|v| *v == 0.0)).then(|| {
            let c = cov.clone();
            NoiseModel::Covariance(Arc::new(move |_: &[f64]| c.clone()))
        });
        let mut g = Self::new(space, 0, a, b, move |_| (matrix.clone(), offset.clone()), noise);
        g.param_jacobian = Some(Arc::new(move |_, _| DMatrix::zeros(b, 0)));
        g.spec = Some(spec);
        Ok(g)
    }

    pub fn identity(space: SampleSpace, dim: usize) -> Self {
        let mut g = Self::affine(
            space,
            DMatrix::identity(dim, dim),
            DVector::zeros(dim),
            DMatrix::zeros(dim, dim),
        )
        .expect("identity is well formed");
        g.spec = Some(GaussianArrowSpec::Identity { dim });
        g
    }

    pub fn from_spec(space: SampleSpace, spec: &GaussianArrowSpec) -> Result<Self> {
        match spec {
            GaussianArrowSpec::Identity { dim } => Ok(Self::identity(space, *dim)),
            GaussianArrowSpec::Affine {
                matrix,
                offset,
                cov,
            } => {
                let cols = matrix.first().map_or(0, Vec::len);
                let m = matrix_from_rows(matrix, cols)?;
                let b = m.nrows();
                let c = match cov {
                    Some(rows) => matrix_from_rows(rows, b)?,
                    None => DMatrix::zeros(b, b),
                };
                Self::affine(space, m, DVector::from_column_slice(offset), c)
            }
            GaussianArrowSpec::LinearRegression => Ok(Self::linear_regression(space)),
            GaussianArrowSpec::Dense {
                in_dim,
                out_dim,
                noise_sd,
            } => {
                if !noise_sd.is_finite() {
                    return Err(Error::InvalidArgument("noise_sd must be finite".into()));
                }
                Ok(Self::dense(space, *in_dim, *out_dim, *noise_sd))
            }
        }
    }

    /// The JSON description, when the arrow came from a named builder.
    pub fn spec(&self) -> Result<&GaussianArrowSpec> {
        self.spec.as_ref().ok_or(Error::NotSerializable("callable Gaussian arrow"))
    }

    /// Adds a constant mean `m` to the noise term.
    pub fn with_noise_mean(mut self, mean: DVector<f64>) -> Result<Self> {
        check_dim("noise mean", self.out_dim, mean.len())?;
        self.noise_mean = mean;
        self.spec = None;
        Ok(self)
    }

    pub fn with_param_jacobian(
        mut self,
        jacobian: impl Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.param_jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn space(&self) -> &SampleSpace {
        &self.space
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

    pub fn noise_blocks(&self) -> usize {
        if self.noise.is_some() {
            self.space.blocks_for(self.out_dim)
        } else {
            0
        }
    }

    /// `(A(x_p), c(x_p))` for the mean map `T(x_p, x) = A x + c`.
    pub fn affine_parts(&self, params: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>)> {
        check_dim("Gaussian arrow parameters", self.param_dim, params.len())?;
        let (a, c) = (self.mean_map)(params);
        check_dim("mean matrix rows", self.out_dim, a.nrows())?;
        check_dim("mean matrix columns", self.in_dim, a.ncols())?;
        check_dim("mean offset", self.out_dim, c.len())?;
        Ok((a, c))
    }

    pub fn mean_at(&self, params: &[f64], x: &[f64]) -> Result<DVector<f64>> {
        check_dim("Gaussian arrow input", self.in_dim, x.len())?;
        let (a, c) = self.affine_parts(params)?;
        Ok(a * DVector::from_column_slice(x) + c)
    }

    pub fn noise_cov(&self, params: &[f64]) -> Result<DMatrix<f64>> {
        check_dim("Gaussian arrow parameters", self.param_dim, params.len())?;
        Ok(match &self.noise {
            Some(n) => n.cov(params),
            None => DMatrix::zeros(self.out_dim, self.out_dim),
        })
    }

    pub fn noise_mean(&self) -> &DVector<f64> {
        &self.noise_mean
    }

    /// The Gauss triple at fixed parameters.
    pub fn kernel(&self, params: &[f64]) -> Result<AffineGaussian> {
        let (a, c) = self.affine_parts(params)?;
        let cov = self.noise_cov(params)?;
        AffineGaussian::new(a, c + &self.noise_mean, cov)
    }

    /// Verifies affinity of the mean map in `x_a` on random probes and that
    /// `Σ(x_p)` is symmetric PSD, at the given parameters.
    pub fn check_invariants(&self, params: &[f64], stream: &SampleStream, probes: usize) -> Result<()> {
        let (a, c) = self.affine_parts(params)?;
        check_psd(&self.noise_cov(params)?)?;
        let mut s = *stream;
        let t = |x: &DVector<f64>| match &self.raw_mean {
            Some(m) => DVector::from_vec(m(params, x.as_slice())),
            None => &a * x + &c,
        };
        let t0 = t(&DVector::zeros(self.in_dim));
        for _ in 0..probes {
            let mut draw = || DVector::from_fn(self.in_dim, |_, _| 20.0 * s.next_open01() - 10.0);
            let (x, y) = (draw(), draw());
            let alpha = 4.0 * s.next_open01() - 2.0;
            let beta = 4.0 * s.next_open01() - 2.0;
            let lhs = t(&(&x * alpha + &y * beta));
            let rhs = t(&x) * alpha + t(&y) * beta - &t0 * (alpha + beta - 1.0);
            let scale = lhs.amax().max(rhs.amax()).max(1.0);
            let residual = (lhs - rhs).amax() / scale;
            if residual > 1e-9 {
                return Err(Error::NotAffine { residual });
            }
        }
        Ok(())
    }

    /// The law-level structure tag carried by [`as_df_arrow`].
    pub fn structure(&self) -> GaussianStructure {
        let g = self.clone();
        let s = GaussianStructure::new(self.param_dim, self.in_dim, self.out_dim, move |p| {
            let (a, c) = (g.mean_map)(p);
            let cov = g.noise.as_ref().map_or_else(
                || DMatrix::zeros(g.out_dim, g.out_dim),
                |n| n.cov(p),
            );
            AffineGaussian {
                matrix: a,
                offset: c + &g.noise_mean,
                cov,
            }
        });
        match &self.param_jacobian {
            Some(j) => {
                let j = j.clone();
                s.with_param_jacobian(move |p, x| j(p, x))
            }
            None => s,
        }
    }
}

impl fmt::Debug for GaussianArrow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GaussianArrow")
            .field("space", &self.space)
            .field("param_dim", &self.param_dim)
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .field("noise_blocks", &self.noise_blocks())
            .field("spec", &self.spec)
            .finish()
    }
}

/// The sampler `T(x_p, x_a) + m + L(x_p)·z`, where `z` is read coordinate-wise
/// from the `ω` blocks. The result carries the Gaussian structure tag.
pub fn as_df_arrow(g: &GaussianArrow) -> Result<DFArrow> {
    if g.param_dim == 0 {
        if let Some(n) = &g.noise {
            n.factor(&[])?;
        }
    }
    let h = g.clone();
    let b = g.out_dim;
    let df = DFArrow::new(
        g.space,
        g.noise_blocks(),
        g.param_dim,
        g.in_dim,
        g.out_dim,
        move |w, p, x| {
            let (a, c) = (h.mean_map)(p);
            let mut y = a * DVector::from_column_slice(x) + c + &h.noise_mean;
            if let Some(noise) = &h.noise {
                match noise.factor(p) {
                    Ok(l) => {
                        let z = DVector::from_fn(b, |i, _| h.space.to_standard_normal(w[i]));
                        y += l * z;
                    }
                    Err(_) => y.fill(f64::NAN),
                }
            }
            y.as_slice().to_vec()
        },
    );
    df.with_gaussian(g.structure())
}

/// The exact law `N(T(x_p, x_a) + m, Σ(x_p))` of the arrow at fixed inputs.
pub fn pushforward_law(g: &GaussianArrow, params: &[f64], x: &[f64]) -> Result<GaussianLaw> {
    g.kernel(params)?.law_at(x)
}

/// The exact law of `g2 ∘ g1` at fixed parameters.
pub fn compose_laws(
    g1: &GaussianArrow,
    g2: &GaussianArrow,
    params1: &[f64],
    params2: &[f64],
    x: &[f64],
) -> Result<GaussianLaw> {
    check_dim("Gaussian composition", g1.out_dim, g2.in_dim)?;
    g1.kernel(params1)?.then(&g2.kernel(params2)?)?.law_at(x)
}

/// Law of a structure-tagged DF arrow at fixed parameters and input.
pub fn df_law(f: &DFArrow, params: &[f64], x: &[f64]) -> Result<GaussianLaw> {
    let s = f.gaussian().ok_or_else(|| {
        Error::UnsupportedComposition("arrow carries no Gaussian structure".into())
    })?;
    s.law_at(params, x)
}

/// One row of the non-closure demonstration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonclosureProbe {
    pub outer_param: f64,
    pub empirical_variance: f64,
    pub analytic_variance: f64,
    pub ks_vs_fitted_normal: f64,
}

/// Shows that `‖x_q‖₁ · x_b + G'` composed after `x_a + x_p + G` is normal at
/// every fixed parameter, yet its noise variance moves with `x_q`, so no
/// parameter-independent noise term exists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonclosureReport {
    pub inner_noise_variance: f64,
    pub outer_noise_variance: f64,
    pub probes: Vec<NonclosureProbe>,
    /// Ratio of the scaled-noise variance terms at `x_q = 2` and `x_q = 1`.
    pub scaled_term_ratio: f64,
    pub parameter_independent_noise: bool,
}

pub fn nonclosure_example(samples: usize, stream: &SampleStream) -> Result<NonclosureReport> {
    let space = SampleSpace::default();
    let (var_g, var_g2) = (1.0, 0.25);
    let inner = GaussianArrow::from_mean_fn(
        space,
        1,
        1,
        1,
        |p, x| vec![x[0] + p[0]],
        move |_| DMatrix::from_element(1, 1, var_g),
    );
    let outer = GaussianArrow::from_mean_fn(
        space,
        1,
        1,
        1,
        |q, x| vec![q[0].abs() * x[0]],
        move |_| DMatrix::from_element(1, 1, var_g2),
    );
    let composite = crate::arrows::df_compose(&as_df_arrow(&inner)?, &as_df_arrow(&outer)?)?;
    let (x_p, x_a) = (0.5, 1.0);
    let streams = stream.split(3);
    let mut probes = Vec::new();
    for (q, sub) in [1.0, 2.0, 0.0].into_iter().zip(streams) {
        let params = [q, x_p];
        let ys: Vec<f64> = (0..samples)
            .map(|i| {
                let w = sample_omega(&space, composite.blocks(), &sub.substream(i as u64, samples as u64));
                composite.eval(&w, &params, &[x_a]).map(|y| y[0])
            })
            .collect::<Result<_>>()?;
        let law = df_law(&composite, &params, &[x_a])?;
        probes.push(NonclosureProbe {
            outer_param: q,
            empirical_variance: variance(&ys),
            analytic_variance: law.cov[(0, 0)],
            ks_vs_fitted_normal: ks_vs_fitted_normal(&ys),
        });
    }
    let scaled = |p: &NonclosureProbe| p.empirical_variance - var_g2;
    let scaled_term_ratio = scaled(&probes[1]) / scaled(&probes[0]);
    let parameter_independent_noise = probes
        .windows(2)
        .all(|w| (w[0].analytic_variance - w[1].analytic_variance).abs() < 1e-12);
    Ok(NonclosureReport {
        inner_noise_variance: var_g,
        outer_noise_variance: var_g2,
        probes,
        scaled_term_ratio,
        parameter_independent_noise,
    })
}
