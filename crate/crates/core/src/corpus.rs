//! Fixed collections of arrows shared by the property suites and the CLI.
//!
//! [`para_pairs`] mixes Gaussian-tagged arrows, whose pushforwards are
//! composed in closed form, with inverse-CDF constructions that are only
//! sampled. [`gaussian_chains`] draws its fixed parameters from a stream so a
//! seed pins the whole corpus.

use nalgebra::{DMatrix, DVector};

use crate::arrow_spec::{ArrowSpec, Elementwise};
use crate::arrows::{df_compose, fix_params, para_compose, tensor, DFArrow, ParaArrow};
use crate::error::{Error, Result};
use crate::gaussian::{as_df_arrow, AffineGaussian, GaussianArrow, GaussianLaw};
use crate::sample_space::{sample_omega, std_normal_quantile, SampleSpace, SampleStream};

/// A composable pair `f: ℝ^a → ℝ^b`, `g: ℝ^b → ℝ^c` and an input point.
#[derive(Clone, Debug)]
pub struct ParaPair {
    pub name: &'static str,
    pub f: ParaArrow,
    pub g: ParaArrow,
    pub x: Vec<f64>,
}

fn pair(name: &'static str, f: ParaArrow, g: ParaArrow, x: &[f64]) -> ParaPair {
    ParaPair { name, f, g, x: x.to_vec() }
}

/// `f(ω, x) = 5 − x + 10·Φ⁻¹(ω)` on the unit interval.
pub fn demo_arrow() -> ParaArrow {
    ArrowSpec::Compose {
        layers: vec![
            ArrowSpec::Affine { matrix: vec![vec![-1.0]], offset: vec![5.0] },
            ArrowSpec::NormalNoise { scale: vec![10.0] },
        ],
    }
    .to_para(SampleSpace::default())
    .expect("demo arrow is well formed")
}

fn fixed(g: &GaussianArrow, params: &[f64]) -> Result<ParaArrow> {
    fix_params(&as_df_arrow(g)?, params)
}

fn scalar(space: SampleSpace, blocks: usize, f: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> ParaArrow {
    ParaArrow::new(space, blocks, 1, 1, move |w, x| vec![f(w, x[0])])
}

/// `−ln(1 − u)`: a standard exponential draw from a uniform one.
fn exponential(u: f64) -> f64 {
    -(-u).ln_1p()
}

fn logistic(u: f64) -> f64 {
    (u / (1.0 - u)).ln()
}

pub fn para_pairs() -> Result<Vec<ParaPair>> {
    let u1 = SampleSpace::default();
    let demo = demo_arrow();
    let lin = GaussianArrow::linear_regression(u1);
    let spec = |s: ArrowSpec, space| s.to_para(space);
    let noise = |scale: Vec<f64>| ArrowSpec::NormalNoise { scale };

    let exp_shift = scalar(u1, 1, |w, x| x + exponential(w[0]));
    let exp_scale = scalar(u1, 1, |w, x| x * exponential(w[0]));

    let tensor_f = tensor(&spec(noise(vec![1.0]), u1)?, &exp_shift)?;
    let tensor_g = spec(
        ArrowSpec::Compose {
            layers: vec![
                ArrowSpec::Affine { matrix: vec![vec![1.0, 1.0], vec![1.0, -1.0]], offset: vec![0.0, 0.0] },
                noise(vec![0.5, 2.0]),
            ],
        },
        u1,
    )?;

    let u2 = SampleSpace::uniform(2)?;
    let box_muller = ParaArrow::new(u2, 1, 1, 1, |w, x| {
        let r = (-2.0 * w[0].ln()).sqrt();
        vec![x[0] + r * (2.0 * std::f64::consts::PI * w[1]).cos()]
    });
    let plane = ParaArrow::new(u2, 1, 1, 1, |w, x| vec![x[0] * w[0] - w[1]]);

    let normal_base = SampleSpace::std_normal(1)?;

    Ok(vec![
        pair("demo", demo.clone(), demo.clone(), &[42.0]),
        pair("demo_sampled", demo.clone().generic(), demo.generic(), &[42.0]),
        pair("linreg", fixed(&lin, &[2.0, 1.0, 0.5])?, fixed(&lin, &[-0.5, 3.0, 1.0])?, &[1.3]),
        pair(
            "dense_2x2",
            fixed(&GaussianArrow::dense(u1, 2, 2, 0.7), &[1.0, 0.5, -0.3, 2.0, 0.1, -1.0])?,
            fixed(&GaussianArrow::dense(u1, 2, 2, 0.3), &[0.2, -1.0, 1.5, 0.4, 0.0, 2.0])?,
            &[0.5, -1.0],
        ),
        pair(
            "lognormal",
            spec(noise(vec![0.5]), u1)?,
            spec(ArrowSpec::Elementwise { dim: 1, function: Elementwise::Exp }, u1)?,
            &[0.2],
        ),
        pair("exponential", exp_shift.clone(), exp_scale, &[1.0]),
        pair(
            "logistic",
            scalar(u1, 1, |w, x| x + logistic(w[0])),
            scalar(u1, 1, |w, x| x.tanh() + 0.5 * std_normal_quantile(w[0])),
            &[0.2],
        ),
        pair("tensor", tensor_f, tensor_g, &[0.0, 1.0]),
        pair(
            "multi_block",
            scalar(u1, 3, |w, x| x + w[0] + w[1] + w[2]),
            scalar(u1, 2, |w, x| x * w[0] + w[1]),
            &[-0.5],
        ),
        pair("box_muller", box_muller, plane, &[0.7]),
        pair(
            "deterministic",
            spec(ArrowSpec::Affine { matrix: vec![vec![1.0], vec![-2.0]], offset: vec![0.5, 0.0] }, u1)?,
            spec(ArrowSpec::Elementwise { dim: 2, function: Elementwise::Square }, u1)?,
            &[1.5],
        ),
        pair(
            "normal_base",
            spec(noise(vec![2.0]), normal_base)?,
            spec(
                ArrowSpec::Compose {
                    layers: vec![
                        ArrowSpec::Affine { matrix: vec![vec![0.5]], offset: vec![1.0] },
                        noise(vec![1.0]),
                    ],
                },
                normal_base,
            )?,
            &[3.0],
        ),
        pair(
            "mixed",
            spec(
                ArrowSpec::GaussianAffine {
                    matrix: vec![vec![1.0], vec![0.5]],
                    offset: vec![0.0, -1.0],
                    cov: vec![vec![1.0, 0.4], vec![0.4, 0.5]],
                },
                u1,
            )?,
            spec(ArrowSpec::Elementwise { dim: 2, function: Elementwise::Abs }, u1)?,
            &[0.3],
        ),
    ])
}

/// A chain of Gaussian layers at fixed parameters and a fixed input.
#[derive(Clone, Debug)]
pub struct GaussianChain {
    pub name: &'static str,
    pub layers: Vec<(GaussianArrow, Vec<f64>)>,
    pub x: Vec<f64>,
}

impl GaussianChain {
    /// The composite statistical model, parameters last layer first.
    pub fn df(&self) -> Result<DFArrow> {
        let mut it = self.layers.iter().map(|(g, _)| as_df_arrow(g));
        let first = it
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty chain".into()))??;
        it.try_fold(first, |acc, g| df_compose(&acc, &g?))
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().rev().flat_map(|(_, p)| p.iter().copied()).collect()
    }

    /// The composite kernel from closed-form composition of layer kernels.
    pub fn kernel(&self) -> Result<AffineGaussian> {
        let mut it = self.layers.iter();
        let (g, p) = it
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty chain".into()))?;
        it.try_fold(g.kernel(p)?, |acc, (g, p)| acc.then(&g.kernel(p)?))
    }

    pub fn law(&self) -> Result<GaussianLaw> {
        self.kernel()?.law_at(&self.x)
    }

    /// Draws from the composite at the chain's parameters and input.
    pub fn sample(&self, samples: usize, stream: &SampleStream) -> Result<Vec<Vec<f64>>> {
        let df = self.df()?;
        let params = self.params();
        (0..samples)
            .map(|i| {
                let w = sample_omega(df.space(), df.blocks(), &stream.substream(i as u64, samples as u64));
                df.eval(&w, &params, &self.x)
            })
            .collect()
    }

    /// The chain as a single Para arrow, with parameters fixed.
    pub fn para(&self) -> Result<ParaArrow> {
        let mut it = self.layers.iter().map(|(g, p)| fixed(g, p));
        let first = it
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty chain".into()))??;
        it.try_fold(first, |acc, f| para_compose(&acc, &f?))
    }
}

struct Draw(SampleStream);

impl Draw {
    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.0.next_open01()
    }

    fn weights(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.uniform(-1.5, 1.5)).collect()
    }

    fn linreg(&mut self) -> Vec<f64> {
        vec![self.uniform(-1.5, 1.5), self.uniform(-2.0, 2.0), self.uniform(0.3, 1.5)]
    }

    fn dense(&mut self, in_dim: usize, out_dim: usize) -> Vec<f64> {
        self.weights(in_dim * out_dim + out_dim)
    }
}

/// Twelve Gaussian chains whose parameters and inputs are drawn from
/// `stream`.
pub fn gaussian_chains(stream: &SampleStream) -> Result<Vec<GaussianChain>> {
    let s = SampleSpace::default();
    let mut d = Draw(*stream);
    let lin = GaussianArrow::linear_regression(s);
    let dense = |a, b, sd| GaussianArrow::dense(s, a, b, sd);
    let linregs = |d: &mut Draw, n: usize| (0..n).map(|_| (lin.clone(), d.linreg())).collect::<Vec<_>>();

    let mut chains = Vec::new();
    let mut push = |name, layers, x| chains.push(GaussianChain { name, layers, x });

    let x = vec![d.uniform(-1.0, 1.0)];
    push("linreg_2", linregs(&mut d, 2), x);
    let x = vec![d.uniform(-1.0, 1.0)];
    push("linreg_3", linregs(&mut d, 3), x);
    let x = vec![d.uniform(-1.0, 1.0)];
    push("linreg_5", linregs(&mut d, 5), x);

    let x = vec![d.uniform(-1.0, 1.0)];
    let layers = vec![(lin.clone(), d.linreg()), (dense(1, 2, 0.5), d.dense(1, 2))];
    push("dense_after_linreg", layers, x);

    let affine = GaussianArrow::affine(
        s,
        DMatrix::from_row_slice(2, 1, &[1.0, -0.5]),
        DVector::from_vec(vec![0.0, 1.0]),
        DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2]),
    )?;
    let x = vec![d.uniform(-1.0, 1.0)];
    let layers = vec![(lin.clone(), d.linreg()), (affine, vec![])];
    push("affine_after_linreg", layers, x);

    let x = vec![d.uniform(-1.0, 1.0)];
    let layers = vec![
        (lin.clone(), d.linreg()),
        (dense(1, 2, 0.4), d.dense(1, 2)),
        (dense(2, 1, 0.2), d.dense(2, 1)),
    ];
    push("widen_narrow", layers, x);

    let x = vec![d.uniform(-1.0, 1.0)];
    let layers = vec![(lin.clone(), d.linreg()), (GaussianArrow::identity(s, 1), vec![])];
    push("identity_after_linreg", layers, x);

    let x = vec![d.uniform(-1.0, 1.0), d.uniform(-1.0, 1.0)];
    let layers = vec![(dense(2, 1, 0.5), d.dense(2, 1)), (lin.clone(), d.linreg())];
    push("linreg_after_dense", layers, x);

    let x = vec![d.uniform(-1.0, 1.0), d.uniform(-1.0, 1.0)];
    let layers = vec![(dense(2, 2, 0.3), d.dense(2, 2)), (dense(2, 2, 0.6), d.dense(2, 2))];
    push("dense_2x2_chain", layers, x);

    let x = vec![d.uniform(-1.0, 1.0)];
    let layers = vec![(dense(1, 1, 0.0), d.dense(1, 1)), (lin.clone(), d.linreg())];
    push("linreg_after_noiseless", layers, x);

    let varying = GaussianArrow::from_mean_fn(
        s,
        2,
        1,
        1,
        |p, x| vec![p[0] * x[0] + p[1]],
        |p| DMatrix::from_element(1, 1, 0.2 + p[1] * p[1]),
    );
    let x = vec![d.uniform(-1.0, 1.0)];
    let layers = vec![(varying, d.weights(2)), (lin.clone(), d.linreg())];
    push("parameter_dependent_noise", layers, x);

    let inner = GaussianArrow::from_mean_fn(s, 1, 1, 1, |p, x| vec![x[0] + p[0]], |_| DMatrix::from_element(1, 1, 1.0));
    let outer = GaussianArrow::from_mean_fn(
        s,
        1,
        1,
        1,
        |q, x| vec![q[0].abs() * x[0]],
        |_| DMatrix::from_element(1, 1, 0.25),
    );
    let x = vec![d.uniform(-1.0, 1.0)];
    let layers = vec![(inner, d.weights(1)), (outer, d.weights(1))];
    push("scaled_by_parameter", layers, x);

    Ok(chains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::df_law;

    #[test]
    fn pairs_compose() {
        let pairs = para_pairs().unwrap();
        assert!(pairs.len() >= 10);
        for p in &pairs {
            let h = para_compose(&p.f, &p.g).unwrap();
            let w = sample_omega(p.f.space(), h.blocks(), &SampleStream::new(3));
            assert_eq!(h.eval(&w, &p.x).unwrap().len(), p.g.out_dim(), "{}", p.name);
        }
    }

    #[test]
    fn chains_are_seeded() {
        let a = gaussian_chains(&SampleStream::new(5)).unwrap();
        let b = gaussian_chains(&SampleStream::new(5)).unwrap();
        let c = gaussian_chains(&SampleStream::new(6)).unwrap();
        assert!(a.len() >= 10);
        for ((x, y), z) in a.iter().zip(&b).zip(&c) {
            assert_eq!(x.params(), y.params());
            assert_eq!(x.x, y.x);
            if !x.params().is_empty() {
                assert_ne!(x.params(), z.params(), "{}", x.name);
            }
        }
    }

    #[test]
    fn composite_law_matches_layerwise_kernels() {
        for chain in gaussian_chains(&SampleStream::new(11)).unwrap() {
            let direct = df_law(&chain.df().unwrap(), &chain.params(), &chain.x).unwrap();
            let layered = chain.law().unwrap();
            assert!((direct.mean - layered.mean).amax() < 1e-12, "{}", chain.name);
            assert!((direct.cov - layered.cov).amax() < 1e-12, "{}", chain.name);
        }
    }

    #[test]
    fn demo_arrow_matches_formula() {
        let f = demo_arrow();
        let w = crate::sample_space::OmegaVector::from_blocks(1, &[vec![0.25]]).unwrap();
        let y = f.eval(&w, &[42.0]).unwrap()[0];
        assert!((y - (5.0 - 42.0 + 10.0 * std_normal_quantile(0.25))).abs() < 1e-12);
    }
}
