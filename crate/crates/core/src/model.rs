//! Model description files: a JSON list of Gaussian layers, applied in order.
//!
//! ```json
//! [
//!   {"kind": "dense", "in_dim": 1, "out_dim": 2, "noise_sd": 0.0},
//!   {"kind": "dense", "in_dim": 2, "out_dim": 1, "init": [1.0, 1.0, 0.0]}
//! ]
//! ```
//!
//! Parameters of the whole chain are listed last layer first, matching
//! [`df_compose`] and [`compose_learners`](crate::learn::compose_learners).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arrows::{df_compose, DFArrow};
use crate::error::{check_dim, Error, Result};
use crate::gaussian::{as_df_arrow, GaussianArrow, GaussianArrowSpec};
use crate::learn::{backprop_functor, exp_functor, LearnConfig, Learner, ParametricMap};
use crate::likelihood::{likelihood_of_arrow, LikelihoodFn};
use crate::sample_space::{SampleSpace, SampleStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub arrow: GaussianArrowSpec,
    /// Starting parameters; defaults to [`default_init`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<f64>>,
}

/// Linear regression starts at `a = b = 0, s = 1`; dense layers at zero.
pub fn default_init(arrow: &GaussianArrow) -> Vec<f64> {
    match arrow.spec() {
        Ok(GaussianArrowSpec::LinearRegression) => vec![0.0, 0.0, 1.0],
        _ => vec![0.0; arrow.param_dim()],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn linear_regression() -> Self {
        ModelSpec {
            layers: vec![LayerSpec {
                arrow: GaussianArrowSpec::LinearRegression,
                init: None,
            }],
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        if spec.layers.is_empty() {
            return Err(Error::InvalidArgument("model needs at least one layer".into()));
        }
        Ok(spec)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Builds the layers and checks each starting parameter vector.
    pub fn build(&self, space: SampleSpace) -> Result<Model> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let arrow = GaussianArrow::from_spec(space, &l.arrow)?;
            let init = match &l.init {
                Some(p) => {
                    check_dim("layer init", arrow.param_dim(), p.len())?;
                    if p.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite("layer init".into()));
                    }
                    p.clone()
                }
                None => default_init(&arrow),
            };
            layers.push((arrow, init));
        }
        if layers.is_empty() {
            return Err(Error::InvalidArgument("model needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            check_dim("layer chaining", w[0].0.out_dim(), w[1].0.in_dim())?;
        }
        Ok(Model { layers })
    }
}

/// A built chain of Gaussian layers with starting parameters.
#[derive(Clone, Debug)]
pub struct Model {
    layers: Vec<(GaussianArrow, Vec<f64>)>,
}

impl Model {
    pub fn layers(&self) -> impl Iterator<Item = &GaussianArrow> {
        self.layers.iter().map(|(g, _)| g)
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].0.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].0.out_dim()
    }

    pub fn param_dim(&self) -> usize {
        self.layers.iter().map(|(g, _)| g.param_dim()).sum()
    }

    /// Starting parameters, last layer first.
    pub fn initial_params(&self) -> Vec<f64> {
        self.layers.iter().rev().flat_map(|(_, p)| p.iter().copied()).collect()
    }

    /// `(layer index, offset, length)` of each layer's block in the chain's
    /// parameter vector.
    pub fn param_layout(&self) -> Vec<(usize, usize, usize)> {
        let mut offset = 0;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, (g, _)) in self.layers.iter().enumerate().rev() {
            out.push((i, offset, g.param_dim()));
            offset += g.param_dim();
        }
        out.reverse();
        out
    }

    pub fn chain(&self) -> Result<DFArrow> {
        let mut arrows = self.layers.iter().map(|(g, _)| as_df_arrow(g));
        let first = arrows.next().expect("model has at least one layer")?;
        arrows.try_fold(first, |acc, g| df_compose(&acc, &g?))
    }

    /// The expectation of the chain. Every layer is affine-Gaussian, so no
    /// Monte Carlo draws are taken.
    pub fn mean_map(&self) -> Result<ParametricMap> {
        exp_functor(&self.chain()?, 0, &SampleStream::new(0))
    }

    pub fn learner(&self, cfg: &LearnConfig) -> Result<Learner> {
        backprop_functor(&self.mean_map()?, cfg).with_params(self.initial_params())
    }

    pub fn likelihood(&self) -> Result<LikelihoodFn> {
        likelihood_of_arrow(&self.chain()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_layers_with_defaults() {
        let spec = ModelSpec::from_json(
            r#"[{"kind": "dense", "in_dim": 1, "out_dim": 2, "noise_sd": 0.5},
                {"kind": "dense", "in_dim": 2, "out_dim": 1, "init": [1.0, 2.0, 3.0]}]"#,
        )
        .unwrap();
        let m = spec.build(SampleSpace::default()).unwrap();
        assert_eq!(m.param_dim(), 7);
        assert_eq!(m.initial_params(), vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.param_layout(), vec![(0, 3, 4), (1, 0, 3)]);
        assert_eq!(ModelSpec::from_json(&spec.to_json().unwrap()).unwrap(), spec);
    }

    #[test]
    fn chaining_mismatch_is_reported() {
        let spec = ModelSpec::from_json(
            r#"[{"kind": "dense", "in_dim": 1, "out_dim": 2}, {"kind": "linear_regression"}]"#,
        )
        .unwrap();
        assert!(matches!(
            spec.build(SampleSpace::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(ModelSpec::from_json("[]").is_err());
    }

    #[test]
    fn bad_init_length_is_rejected() {
        let spec = ModelSpec::from_json(r#"[{"kind": "linear_regression", "init": [1.0]}]"#).unwrap();
        assert!(spec.build(SampleSpace::default()).is_err());
    }

    #[test]
    fn regression_model_evaluates() {
        let m = ModelSpec::linear_regression().build(SampleSpace::default()).unwrap();
        assert_eq!(m.initial_params(), vec![0.0, 0.0, 1.0]);
        let mean = m.mean_map().unwrap();
        assert_eq!(mean.eval(&[2.0, 1.0, 0.5], &[3.0]).unwrap(), vec![7.0]);
        let l = m.likelihood().unwrap();
        let d = l.density(&[2.0, 1.0, 0.5], &[3.0], &[7.0]).unwrap();
        assert!((d - 1.0 / (0.5 * (2.0 * std::f64::consts::PI).sqrt())).abs() < 1e-12);
        let learner = m.learner(&LearnConfig::new(0.1, 1).unwrap()).unwrap();
        assert_eq!(learner.params(), &[0.0, 0.0, 1.0]);
    }
}
