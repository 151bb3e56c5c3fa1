//! JSON descriptions of Para arrows built from a small vocabulary.
//!
//! ```json
//! {"op": "compose", "layers": [
//!   {"op": "affine", "matrix": [[-1.0]], "offset": [5.0]},
//!   {"op": "normal_noise", "scale": [10.0]}
//! ]}
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::arrows::{fix_params, para_compose, tensor, DetMap, ParaArrow};
use crate::error::{check_dim, Error, Result};
use crate::gaussian::{as_df_arrow, AffineGaussian, GaussianArrow, GaussianStructure};
use crate::sample_space::SampleSpace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Elementwise {
    Exp,
    Tanh,
    Square,
    Abs,
}

impl Elementwise {
    fn apply(self, v: f64) -> f64 {
        match self {
            Elementwise::Exp => v.exp(),
            Elementwise::Tanh => v.tanh(),
            Elementwise::Square => v * v,
            Elementwise::Abs => v.abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrowSpec {
    /// `x ↦ Mx + c`.
    Affine { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
    /// `x ↦ x + scale ⊙ z` with `z` standard normal, read from `ω` through
    /// the inverse normal CDF.
    NormalNoise { scale: Vec<f64> },
    /// `x ↦ (x[i] for i in indices)`.
    Projection { in_dim: usize, indices: Vec<usize> },
    Constant { in_dim: usize, value: Vec<f64> },
    /// A fixed nonlinearity applied to every coordinate.
    Elementwise { dim: usize, function: Elementwise },
    /// `x ↦ Mx + c + N(0, cov)`.
    GaussianAffine {
        matrix: Vec<Vec<f64>>,
        offset: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    /// Sequential composition; the first layer is applied first.
    Compose { layers: Vec<ArrowSpec> },
    /// Parallel composition on concatenated inputs.
    Tensor { parts: Vec<ArrowSpec> },
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    for r in rows {
        check_dim("matrix row length", cols, r.len())?;
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

impl ArrowSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_para(&self, space: SampleSpace) -> Result<ParaArrow> {
        match self {
            ArrowSpec::Affine { matrix: m, offset } => {
                let (m, c) = (matrix(m)?, DVector::from_column_slice(offset));
                let kernel = AffineGaussian::deterministic(m.clone(), c.clone())?;
                let map = DetMap::affine(m, c)?;
                let (a, b) = (map.in_dim(), map.out_dim());
                ParaArrow::new(space, 0, a, b, move |_, x| map.apply(x).unwrap_or_else(|_| vec![f64::NAN; b]))
                    .with_gaussian(GaussianStructure::fixed(kernel))
            }
            ArrowSpec::NormalNoise { scale } => {
                let d = scale.len();
                let s = scale.clone();
                let arrow = ParaArrow::new(space, space.blocks_for(d), d, d, move |w, x| {
                    x.iter()
                        .zip(&s)
                        .enumerate()
                        .map(|(i, (xi, si))| xi + si * space.to_standard_normal(w[i]))
                        .collect()
                });
                let cov = DMatrix::from_diagonal(&DVector::from_iterator(d, scale.iter().map(|s| s * s)));
                let kernel = AffineGaussian::new(DMatrix::identity(d, d), DVector::zeros(d), cov)?;
                arrow.with_gaussian(GaussianStructure::fixed(kernel))
            }
            ArrowSpec::Projection { in_dim, indices } => {
                if let Some(bad) = indices.iter().find(|i| **i >= *in_dim) {
                    return Err(Error::InvalidArgument(format!(
                        "projection index {bad} out of range for input dimension {in_dim}"
                    )));
                }
                let mut m = DMatrix::zeros(indices.len(), *in_dim);
                for (row, col) in indices.iter().enumerate() {
                    m[(row, *col)] = 1.0;
                }
                ArrowSpec::Affine {
                    matrix: crate::gaussian::matrix_rows(&m),
                    offset: vec![0.0; indices.len()],
                }
                .to_para(space)
            }
            ArrowSpec::Constant { in_dim, value } => Ok(ParaArrow::constant(space, *in_dim, value.clone())),
            ArrowSpec::Elementwise { dim, function } => {
                let f = *function;
                Ok(ParaArrow::new(space, 0, *dim, *dim, move |_, x| {
                    x.iter().map(|v| f.apply(*v)).collect()
                }))
            }
            ArrowSpec::GaussianAffine {
                matrix: m,
                offset,
                cov,
            } => {
                let g = GaussianArrow::affine(space, matrix(m)?, DVector::from_column_slice(offset), matrix(cov)?)?;
                fix_params(&as_df_arrow(&g)?, &[])
            }
            ArrowSpec::Compose { layers } => {
                let (first, rest) = layers
                    .split_first()
                    .ok_or_else(|| Error::InvalidArgument("compose needs at least one layer".into()))?;
                rest.iter()
                    .try_fold(first.to_para(space)?, |acc, l| para_compose(&acc, &l.to_para(space)?))
            }
            ArrowSpec::Tensor { parts } => {
                let (first, rest) = parts
                    .split_first()
                    .ok_or_else(|| Error::InvalidArgument("tensor needs at least one part".into()))?;
                rest.iter()
                    .try_fold(first.to_para(space)?, |acc, p| tensor(&acc, &p.to_para(space)?))
            }
        }
    }
}
