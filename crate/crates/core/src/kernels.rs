//! Markov kernels `ℝ^a → Prob(ℝ^b)`, their composition and tensor, the
//! pushforward functor from Para arrows, and equality-of-measure diagnostics.

use nalgebra::DVector;
use std::fmt;
use std::sync::Arc;

use crate::arrows::{cokl_compose, para_compose, CoKlArrow, DetMap, ParaArrow};
use crate::error::{check_dim, Error, Result};
use crate::gaussian::AffineGaussian;
use crate::linalg::psd_factor;
use crate::sample_space::{sample_omega, std_normal_quantile, SampleSpace, SampleStream};
use crate::stats::DistributionDistanceReport;

type SamplerFn = Arc<dyn Fn(&[f64], SampleStream) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum KernelBackend {
    /// Draws are a pure function of the input and the stream.
    Empirical(SamplerFn),
    Gaussian {
        kernel: AffineGaussian,
        factor: nalgebra::DMatrix<f64>,
    },
}

#[derive(Clone)]
pub struct MarkovKernel {
    in_dim: usize,
    out_dim: usize,
    backend: KernelBackend,
}

impl MarkovKernel {
    pub fn empirical(
        in_dim: usize,
        out_dim: usize,
        sampler: impl Fn(&[f64], SampleStream) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            in_dim,
            out_dim,
            backend: KernelBackend::Empirical(Arc::new(sampler)),
        }
    }

    pub fn gaussian(kernel: AffineGaussian) -> Result<Self> {
        let factor = psd_factor(&kernel.cov)?;
        Ok(Self {
            in_dim: kernel.in_dim(),
            out_dim: kernel.out_dim(),
            backend: KernelBackend::Gaussian { kernel, factor },
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::gaussian(AffineGaussian::identity(dim)).expect("identity covariance is PSD")
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn backend(&self) -> &KernelBackend {
        &self.backend
    }

    pub fn gaussian_kernel(&self) -> Option<&AffineGaussian> {
        match &self.backend {
            KernelBackend::Gaussian { kernel, .. } => Some(kernel),
            KernelBackend::Empirical(_) => None,
        }
    }

    fn draw(&self, x: &[f64], stream: SampleStream) -> Vec<f64> {
        match &self.backend {
            KernelBackend::Empirical(f) => f(x, stream),
            KernelBackend::Gaussian { kernel, factor } => {
                let mut y = &kernel.matrix * DVector::from_column_slice(x) + &kernel.offset;
                if factor.iter().any(|v| *v != 0.0) {
                    let mut s = stream;
                    let z = DVector::from_fn(self.out_dim, |_, _| std_normal_quantile(s.next_open01()));
                    y += factor * z;
                }
                y.as_slice().to_vec()
            }
        }
    }

    pub fn sample(&self, x: &[f64], stream: &SampleStream) -> Result<Vec<f64>> {
        check_dim("kernel input", self.in_dim, x.len())?;
        let y = self.draw(x, *stream);
        check_dim("kernel output", self.out_dim, y.len())?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Markov kernel".into()));
        }
        Ok(y)
    }

    /// `count` independent draws at `x`; draw `i` reads the `i`-th of `count`
    /// substreams.
    pub fn sample_many(&self, x: &[f64], count: usize, stream: &SampleStream) -> Result<Vec<Vec<f64>>> {
        (0..count)
            .map(|i| self.sample(x, &stream.substream(i as u64, count as u64)))
            .collect()
    }
}

impl fmt::Debug for MarkovKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let backend = match &self.backend {
            KernelBackend::Empirical(_) => "empirical",
            KernelBackend::Gaussian { .. } => "gaussian",
        };
        f.debug_struct("MarkovKernel")
            .field("in_dim", &self.in_dim)
            .field("out_dim", &self.out_dim)
            .field("backend", &backend)
            .finish()
    }
}

/// The Dirac kernel `x ↦ δ_{f(x)}`; Gaussian with zero covariance when `f`
/// is affine.
pub fn dirac(f: &DetMap) -> MarkovKernel {
    if let Some((m, c)) = f.affine_form() {
        let k = AffineGaussian::deterministic(m.clone(), c.clone()).expect("affine form is consistent");
        return MarkovKernel::gaussian(k).expect("zero covariance is PSD");
    }
    let g = f.clone();
    MarkovKernel::empirical(f.in_dim(), f.out_dim(), move |x, _| g.call(x))
}

/// `g ∘ f`: Chapman–Kolmogorov composition. Gaussian pairs compose in closed
/// form; otherwise the stream is split between the two stages.
pub fn kernel_compose(f: &MarkovKernel, g: &MarkovKernel) -> Result<MarkovKernel> {
    check_dim("kernel composition", f.out_dim, g.in_dim)?;
    if let (Some(kf), Some(kg)) = (f.gaussian_kernel(), g.gaussian_kernel()) {
        return MarkovKernel::gaussian(kf.then(kg)?);
    }
    let (f, g) = (f.clone(), g.clone());
    Ok(MarkovKernel::empirical(f.in_dim, g.out_dim, move |x, s| {
        let mid = f.draw(x, s.substream(0, 2));
        g.draw(&mid, s.substream(1, 2))
    }))
}

/// The independent product `f ⊗ g`.
pub fn tensor_kernel(f: &MarkovKernel, g: &MarkovKernel) -> Result<MarkovKernel> {
    if let (Some(kf), Some(kg)) = (f.gaussian_kernel(), g.gaussian_kernel()) {
        return MarkovKernel::gaussian(kf.tensor(kg));
    }
    let split = f.in_dim;
    let (f, g) = (f.clone(), g.clone());
    Ok(MarkovKernel::empirical(
        f.in_dim + g.in_dim,
        f.out_dim + g.out_dim,
        move |x, s| {
            let (xf, xg) = x.split_at(split);
            let mut y = f.draw(xf, s.substream(0, 2));
            y.extend(g.draw(xg, s.substream(1, 2)));
            y
        },
    ))
}

/// `Push_μ f`: `x ↦ f(_, x)_* μ^n`. Arrows with a Gaussian structure tag map
/// to the analytic Gaussian backend.
pub fn push_forward(f: &ParaArrow) -> Result<MarkovKernel> {
    match f.gaussian() {
        Some(s) => MarkovKernel::gaussian(s.kernel(&[])?),
        None => Ok(push_forward_empirical(f)),
    }
}

/// `Push_μ f` by sampling `ω ∼ μ^n`, ignoring any structure tag.
pub fn push_forward_empirical(f: &ParaArrow) -> MarkovKernel {
    let g = f.clone();
    let space = *f.space();
    MarkovKernel::empirical(f.in_dim(), f.out_dim(), move |x, s| {
        let w = sample_omega(&space, g.blocks(), &s);
        g.call(w.as_flat(), x)
    })
}

/// `x ↦ f(_, x)_* μ` for a co-Kleisli arrow.
pub fn push_forward_cokl(f: &CoKlArrow) -> MarkovKernel {
    let g = f.clone();
    let space = *f.space();
    MarkovKernel::empirical(f.in_dim(), f.out_dim(), move |x, s| {
        let w = sample_omega(&space, 1, &s);
        g.call(w.as_flat(), x)
    })
}

fn check_samples(samples: usize) -> Result<()> {
    if samples == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    Ok(())
}

/// Samples `Push(g ∘ f)` (left) against `Push(g) ∘ Push(f)` (right) at `x`.
pub fn check_push_functoriality(
    f: &ParaArrow,
    g: &ParaArrow,
    x: &[f64],
    samples: usize,
    stream: &SampleStream,
) -> Result<DistributionDistanceReport> {
    check_samples(samples)?;
    let lhs = push_forward_empirical(&para_compose(f, g)?);
    let rhs = kernel_compose(&push_forward(f)?, &push_forward(g)?)?;
    let left = lhs.sample_many(x, samples, &stream.substream(0, 2))?;
    let right = rhs.sample_many(x, samples, &stream.substream(1, 2))?;
    Ok(DistributionDistanceReport::compare(&left, &right))
}

/// Samples the shared-`ω` self-composition (left) against the Markov
/// recomposition `Push f ∘ Push f` (right). These differ whenever `f`
/// depends on `ω`.
pub fn check_cokl_nonfunctoriality(
    f: &CoKlArrow,
    x: &[f64],
    samples: usize,
    stream: &SampleStream,
) -> Result<DistributionDistanceReport> {
    check_samples(samples)?;
    let shared = push_forward_cokl(&cokl_compose(f, f)?);
    let push = push_forward_cokl(f);
    let markov = kernel_compose(&push, &push)?;
    let left = shared.sample_many(x, samples, &stream.substream(0, 2))?;
    let right = markov.sample_many(x, samples, &stream.substream(1, 2))?;
    Ok(DistributionDistanceReport::compare(&left, &right))
}

/// Compares the joint law `(f, f2)(ω)` with shared `ω` (left) against the
/// product law `(f(ω₁), f2(ω₂))` (right). They agree iff `f` and `f2` are
/// independent random variables.
pub fn independence_witness(
    f: &DetMap,
    f2: &DetMap,
    space: &SampleSpace,
    samples: usize,
    stream: &SampleStream,
) -> Result<DistributionDistanceReport> {
    check_samples(samples)?;
    check_dim("random variable domain", space.dim(), f.in_dim())?;
    check_dim("random variable domain", space.dim(), f2.in_dim())?;
    check_dim("random variable codomain", 1, f.out_dim())?;
    check_dim("random variable codomain", 1, f2.out_dim())?;
    let (joint_stream, product_stream) = (stream.substream(0, 2), stream.substream(1, 2));
    let mut joint = Vec::with_capacity(samples);
    let mut product = Vec::with_capacity(samples);
    for i in 0..samples {
        let s = joint_stream.substream(i as u64, samples as u64);
        let w = sample_omega(space, 1, &s);
        joint.push(vec![f.apply(w.as_flat())?[0], f2.apply(w.as_flat())?[0]]);
        let s = product_stream.substream(i as u64, samples as u64);
        let w = sample_omega(space, 2, &s);
        product.push(vec![f.apply(w.block(0))?[0], f2.apply(w.block(1))?[0]]);
    }
    Ok(DistributionDistanceReport::compare(&joint, &product))
}
