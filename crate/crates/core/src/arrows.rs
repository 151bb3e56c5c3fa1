//! The three arrow regimes over a sample space `Ω`:
//!
//! * [`CoKlArrow`] `Ω × ℝ^a → ℝ^b`: composition reuses one shared `ω`.
//! * [`ParaArrow`] `Ω^n × ℝ^a → ℝ^b`: composition allocates disjoint,
//!   independent blocks of `Ω`.
//! * [`DFArrow`] `Ω^n × ℝ^p × ℝ^a → ℝ^b`: parameterized statistical models.
//!
//! Evaluators are opaque pure closures with declared dimensions. Composite
//! arrows keep their `Ω` blocks and parameters as flat lists, outer arrow
//! first, so associativity holds on the nose.

use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::gaussian::GaussianStructure;
use crate::sample_space::{OmegaVector, SampleSpace};

pub(crate) type PointFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub(crate) type ModelFn = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

fn check_finite(context: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context.to_string()))
    }
}

fn same_space(a: &SampleSpace, b: &SampleSpace) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::SampleSpaceMismatch)
    }
}

/// A deterministic map `ℝ^a → ℝ^b`, optionally carrying an affine form
/// `x ↦ Mx + c`.
#[derive(Clone)]
pub struct DetMap {
    in_dim: usize,
    out_dim: usize,
    f: MapFn,
    affine: Option<(DMatrix<f64>, DVector<f64>)>,
}

impl DetMap {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            in_dim,
            out_dim,
            f: Arc::new(f),
            affine: None,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::affine(DMatrix::identity(dim, dim), DVector::zeros(dim))
            .expect("identity dimensions agree")
    }

    pub fn affine(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        check_dim("affine offset", matrix.nrows(), offset.len())?;
        let (m, c) = (matrix.clone(), offset.clone());
        let f = move |x: &[f64]| (&m * DVector::from_column_slice(x) + &c).as_slice().to_vec();
        Ok(Self {
            in_dim: matrix.ncols(),
            out_dim: matrix.nrows(),
            f: Arc::new(f),
            affine: Some((matrix, offset)),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn affine_form(&self) -> Option<&(DMatrix<f64>, DVector<f64>)> {
        self.affine.as_ref()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("deterministic map input", self.in_dim, x.len())?;
        let y = (self.f)(x);
        check_dim("deterministic map output", self.out_dim, y.len())?;
        check_finite("deterministic map", &y)?;
        Ok(y)
    }

    pub(crate) fn call(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }

    /// `outer ∘ self`.
    pub fn then(&self, outer: &DetMap) -> Result<DetMap> {
        check_dim("deterministic composition", self.out_dim, outer.in_dim)?;
        let (f, g) = (self.f.clone(), outer.f.clone());
        let affine = match (&self.affine, &outer.affine) {
            (Some((m1, c1)), Some((m2, c2))) => Some((m2 * m1, m2 * c1 + c2)),
            _ => None,
        };
        Ok(DetMap {
            in_dim: self.in_dim,
            out_dim: outer.out_dim,
            f: Arc::new(move |x| g(&f(x))),
            affine,
        })
    }
}

impl fmt::Debug for DetMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DetMap")
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .field("affine", &self.affine.is_some())
            .finish()
    }
}

/// A co-Kleisli arrow `Ω × ℝ^a → ℝ^b`.
#[derive(Clone)]
pub struct CoKlArrow {
    space: SampleSpace,
    in_dim: usize,
    out_dim: usize,
    eval: PointFn,
}

impl CoKlArrow {
    pub fn new(
        space: SampleSpace,
        in_dim: usize,
        out_dim: usize,
        eval: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            space,
            in_dim,
            out_dim,
            eval: Arc::new(eval),
        }
    }

    /// `del_Ω ⊗ id`: ignores `ω`.
    pub fn identity(space: SampleSpace, dim: usize) -> Self {
        Self::new(space, dim, dim, |_, x| x.to_vec())
    }

    pub fn space(&self) -> &SampleSpace {
        &self.space
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn eval(&self, omega: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        check_dim("co-Kleisli omega block", self.space.dim(), omega.len())?;
        check_dim("co-Kleisli input", self.in_dim, x.len())?;
        let y = (self.eval)(omega, x);
        check_dim("co-Kleisli output", self.out_dim, y.len())?;
        check_finite("co-Kleisli arrow", &y)?;
        Ok(y)
    }

    pub(crate) fn call(&self, omega: &[f64], x: &[f64]) -> Vec<f64> {
        (self.eval)(omega, x)
    }
}

impl fmt::Debug for CoKlArrow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoKlArrow")
            .field("space", &self.space)
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .finish()
    }
}

/// `g ∘ f` in the co-Kleisli category: `(ω, x) ↦ g(ω, f(ω, x))`.
pub fn cokl_compose(f: &CoKlArrow, g: &CoKlArrow) -> Result<CoKlArrow> {
    same_space(&f.space, &g.space)?;
    check_dim("co-Kleisli composition", f.out_dim, g.in_dim)?;
    let (fe, ge) = (f.eval.clone(), g.eval.clone());
    Ok(CoKlArrow {
        space: f.space,
        in_dim: f.in_dim,
        out_dim: g.out_dim,
        eval: Arc::new(move |w, x| ge(w, &fe(w, x))),
    })
}

/// The realization functor at a fixed `ω`.
pub fn realize(f: &CoKlArrow, omega: &[f64]) -> Result<DetMap> {
    check_dim("realization omega block", f.space.dim(), omega.len())?;
    let w = omega.to_vec();
    let e = f.eval.clone();
    Ok(DetMap::new(f.in_dim, f.out_dim, move |x| e(&w, x)))
}

/// A Para arrow `Ω^n × ℝ^a → ℝ^b`.
#[derive(Clone)]
pub struct ParaArrow {
    space: SampleSpace,
    blocks: usize,
    in_dim: usize,
    out_dim: usize,
    eval: PointFn,
    gaussian: Option<GaussianStructure>,
}

impl ParaArrow {
    /// `eval` receives the `n` blocks of `ω` as one flat slice of length `n·k`.
    pub fn new(
        space: SampleSpace,
        blocks: usize,
        in_dim: usize,
        out_dim: usize,
        eval: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            space,
            blocks,
            in_dim,
            out_dim,
            eval: Arc::new(eval),
            gaussian: None,
        }
    }

    pub fn identity(space: SampleSpace, dim: usize) -> Self {
        Self::new(space, 0, dim, dim, |_, x| x.to_vec())
            .with_gaussian(GaussianStructure::identity(dim))
            .expect("identity structure dimensions agree")
    }

    /// The constant arrow `ℝ^a → ℝ^b` at `value`, with no noise.
    pub fn constant(space: SampleSpace, in_dim: usize, value: Vec<f64>) -> Self {
        let out_dim = value.len();
        let v = value.clone();
        Self::new(space, 0, in_dim, out_dim, move |_, _| v.clone())
            .with_gaussian(GaussianStructure::constant_map(in_dim, value))
            .expect("constant structure dimensions agree")
    }

    /// Declares that, in law, this arrow is affine in its input plus Gaussian
    /// noise with the given (parameter-free) structure.
    pub fn with_gaussian(mut self, structure: GaussianStructure) -> Result<Self> {
        check_dim("structure parameters", 0, structure.param_dim())?;
        check_dim("structure input", self.in_dim, structure.in_dim())?;
        check_dim("structure output", self.out_dim, structure.out_dim())?;
        self.gaussian = Some(structure);
        Ok(self)
    }

    /// Drops the Gaussian structure tag.
    pub fn generic(mut self) -> Self {
        self.gaussian = None;
        self
    }

    pub fn space(&self) -> &SampleSpace {
        &self.space
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn gaussian(&self) -> Option<&GaussianStructure> {
        self.gaussian.as_ref()
    }

    pub fn eval(&self, omega: &OmegaVector, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("omega block size", self.space.dim(), omega.block_dim())?;
        if omega.n_blocks() != self.blocks {
            return Err(Error::BlockCount {
                expected: self.blocks,
                found: omega.n_blocks(),
            });
        }
        check_dim("Para input", self.in_dim, x.len())?;
        let y = (self.eval)(omega.as_flat(), x);
        check_dim("Para output", self.out_dim, y.len())?;
        check_finite("Para arrow", &y)?;
        Ok(y)
    }

    pub(crate) fn call(&self, omega: &[f64], x: &[f64]) -> Vec<f64> {
        (self.eval)(omega, x)
    }
}

impl fmt::Debug for ParaArrow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParaArrow")
            .field("space", &self.space)
            .field("blocks", &self.blocks)
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .field("gaussian", &self.gaussian.is_some())
            .finish()
    }
}

/// `g ∘ f` in Para: `((ω_g, ω_f), x) ↦ g(ω_g, f(ω_f, x))`, `g`'s blocks first.
pub fn para_compose(f: &ParaArrow, g: &ParaArrow) -> Result<ParaArrow> {
    same_space(&f.space, &g.space)?;
    check_dim("Para composition", f.out_dim, g.in_dim)?;
    let split = g.blocks * g.space.dim();
    let (fe, ge) = (f.eval.clone(), g.eval.clone());
    let gaussian = match (&f.gaussian, &g.gaussian) {
        (Some(sf), Some(sg)) => Some(sf.then(sg)?),
        _ => None,
    };
    Ok(ParaArrow {
        space: f.space,
        blocks: g.blocks + f.blocks,
        in_dim: f.in_dim,
        out_dim: g.out_dim,
        eval: Arc::new(move |w, x| {
            let (wg, wf) = w.split_at(split);
            ge(wg, &fe(wf, x))
        }),
        gaussian,
    })
}

/// `f ⊗ g`: `((ω_f, ω_g), (x, y)) ↦ (f(ω_f, x), g(ω_g, y))`, `f`'s blocks first.
pub fn tensor(f: &ParaArrow, g: &ParaArrow) -> Result<ParaArrow> {
    same_space(&f.space, &g.space)?;
    let wsplit = f.blocks * f.space.dim();
    let xsplit = f.in_dim;
    let (fe, ge) = (f.eval.clone(), g.eval.clone());
    let gaussian = match (&f.gaussian, &g.gaussian) {
        (Some(sf), Some(sg)) => Some(sf.tensor(sg)),
        _ => None,
    };
    Ok(ParaArrow {
        space: f.space,
        blocks: f.blocks + g.blocks,
        in_dim: f.in_dim + g.in_dim,
        out_dim: f.out_dim + g.out_dim,
        eval: Arc::new(move |w, x| {
            let (wf, wg) = w.split_at(wsplit);
            let (xf, xg) = x.split_at(xsplit);
            let mut y = fe(wf, xf);
            y.extend(ge(wg, xg));
            y
        }),
        gaussian,
    })
}

/// The Copy functor: feeds `n` copies of one `ω` to every block.
pub fn copy_functor(f: &ParaArrow) -> CoKlArrow {
    let n = f.blocks;
    let e = f.eval.clone();
    CoKlArrow {
        space: f.space,
        in_dim: f.in_dim,
        out_dim: f.out_dim,
        eval: Arc::new(move |w, x| {
            let copies = OmegaVector::repeated(w, n);
            e(copies.as_flat(), x)
        }),
    }
}

/// A parameterized statistical model `Ω^n × ℝ^p × ℝ^a → ℝ^b`.
#[derive(Clone)]
pub struct DFArrow {
    space: SampleSpace,
    blocks: usize,
    param_dim: usize,
    in_dim: usize,
    out_dim: usize,
    eval: ModelFn,
    gaussian: Option<GaussianStructure>,
}

impl DFArrow {
    pub fn new(
        space: SampleSpace,
        blocks: usize,
        param_dim: usize,
        in_dim: usize,
        out_dim: usize,
        eval: impl Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            space,
            blocks,
            param_dim,
            in_dim,
            out_dim,
            eval: Arc::new(eval),
            gaussian: None,
        }
    }

    /// `id: Ω^0 × ℝ^0 × ℝ^a → ℝ^a`.
    pub fn identity(space: SampleSpace, dim: usize) -> Self {
        let mut id = Self::new(space, 0, 0, dim, dim, |_, _, x| x.to_vec());
        id.gaussian = Some(GaussianStructure::identity(dim));
        id
    }

    /// Tags the arrow as affine-plus-Gaussian-noise at every fixed parameter.
    pub fn with_gaussian(mut self, structure: GaussianStructure) -> Result<Self> {
        check_dim("structure parameters", self.param_dim, structure.param_dim())?;
        check_dim("structure input", self.in_dim, structure.in_dim())?;
        check_dim("structure output", self.out_dim, structure.out_dim())?;
        self.gaussian = Some(structure);
        Ok(self)
    }

    pub fn generic(mut self) -> Self {
        self.gaussian = None;
        self
    }

    pub fn space(&self) -> &SampleSpace {
        &self.space
    }

    pub fn blocks(&self) -> usize {
        self.blocks
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

    pub fn gaussian(&self) -> Option<&GaussianStructure> {
        self.gaussian.as_ref()
    }

    pub fn eval(&self, omega: &OmegaVector, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        check_dim("omega block size", self.space.dim(), omega.block_dim())?;
        if omega.n_blocks() != self.blocks {
            return Err(Error::BlockCount {
                expected: self.blocks,
                found: omega.n_blocks(),
            });
        }
        check_dim("DF parameters", self.param_dim, params.len())?;
        check_dim("DF input", self.in_dim, x.len())?;
        let y = (self.eval)(omega.as_flat(), params, x);
        check_dim("DF output", self.out_dim, y.len())?;
        check_finite("DF arrow", &y)?;
        Ok(y)
    }

    pub(crate) fn call(&self, omega: &[f64], params: &[f64], x: &[f64]) -> Vec<f64> {
        (self.eval)(omega, params, x)
    }
}

impl fmt::Debug for DFArrow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DFArrow")
            .field("space", &self.space)
            .field("blocks", &self.blocks)
            .field("param_dim", &self.param_dim)
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .field("gaussian", &self.gaussian.is_some())
            .finish()
    }
}

/// `f2 ∘ f1` in DF:
/// `((ω2, ω1), (p2, p1), x) ↦ f2(ω2, p2, f1(ω1, p1, x))`.
pub fn df_compose(f1: &DFArrow, f2: &DFArrow) -> Result<DFArrow> {
    same_space(&f1.space, &f2.space)?;
    check_dim("DF composition", f1.out_dim, f2.in_dim)?;
    let wsplit = f2.blocks * f2.space.dim();
    let psplit = f2.param_dim;
    let (e1, e2) = (f1.eval.clone(), f2.eval.clone());
    let gaussian = match (&f1.gaussian, &f2.gaussian) {
        (Some(s1), Some(s2)) => Some(s1.then(s2)?),
        _ => None,
    };
    Ok(DFArrow {
        space: f1.space,
        blocks: f2.blocks + f1.blocks,
        param_dim: f2.param_dim + f1.param_dim,
        in_dim: f1.in_dim,
        out_dim: f2.out_dim,
        eval: Arc::new(move |w, p, x| {
            let (w2, w1) = w.split_at(wsplit);
            let (p2, p1) = p.split_at(psplit);
            e2(w2, p2, &e1(w1, p1, x))
        }),
        gaussian,
    })
}

/// Embeds a Para arrow as a DF arrow with no parameters.
pub fn promote(f: &ParaArrow) -> DFArrow {
    let e = f.eval.clone();
    DFArrow {
        space: f.space,
        blocks: f.blocks,
        param_dim: 0,
        in_dim: f.in_dim,
        out_dim: f.out_dim,
        eval: Arc::new(move |w, _, x| e(w, x)),
        gaussian: f.gaussian.clone(),
    }
}

/// Curries the parameter slot: the Para arrow `l(_, x_p, _)`.
pub fn fix_params(f: &DFArrow, params: &[f64]) -> Result<ParaArrow> {
    check_dim("fixed parameters", f.param_dim, params.len())?;
    let p = params.to_vec();
    let e = f.eval.clone();
    Ok(ParaArrow {
        space: f.space,
        blocks: f.blocks,
        in_dim: f.in_dim,
        out_dim: f.out_dim,
        eval: Arc::new(move |w, x| e(w, &p, x)),
        gaussian: f.gaussian.as_ref().map(|s| s.fix(params)),
    })
}
