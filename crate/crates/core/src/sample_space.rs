//! The base probability space `Ω = ℝ^k`, its finite powers `Ω^n`, and the
//! counter-based sampling streams used to draw from `μ^n`.
//!
//! A [`SampleStream`] is a `(seed, counter, stride)` triple. The value emitted
//! at a position is a pure function of the seed and the counter, so any draw
//! can be replayed. Splitting a stream into `m` substreams partitions its
//! counter sequence into `m` interleaved arithmetic progressions; substreams
//! therefore never share a counter and are independent by construction.

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const SEED_SALT: u64 = 0x6A09_E667_F3BC_C909;

/// The base measure `μ` on `Ω = ℝ^k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseMeasure {
    /// Uniform on the open unit cube `(0,1)^k`.
    Uniform01,
    /// `k` independent standard normals.
    StdNormal,
}

/// A probability space `(ℝ^k, B(ℝ^k), μ)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleSpace {
    k: usize,
    base: BaseMeasure,
}

impl SampleSpace {
    pub fn new(k: usize, base: BaseMeasure) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument(
                "sample space dimension must be at least 1".into(),
            ));
        }
        Ok(Self { k, base })
    }

    /// Uniform measure on `(0,1)^k`.
    pub fn uniform(k: usize) -> Result<Self> {
        Self::new(k, BaseMeasure::Uniform01)
    }

    pub fn std_normal(k: usize) -> Result<Self> {
        Self::new(k, BaseMeasure::StdNormal)
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn base(&self) -> BaseMeasure {
        self.base
    }

    /// Draws one coordinate of `Ω` from the stream.
    pub fn draw_coordinate(&self, stream: &mut SampleStream) -> f64 {
        let u = stream.next_open01();
        match self.base {
            BaseMeasure::Uniform01 => u,
            BaseMeasure::StdNormal => std_normal_quantile(u),
        }
    }

    /// Maps one coordinate of `Ω` to a standard normal variate: the inverse
    /// normal CDF for the uniform base, the identity for the normal base.
    pub fn to_standard_normal(&self, coordinate: f64) -> f64 {
        match self.base {
            BaseMeasure::Uniform01 => std_normal_quantile(coordinate),
            BaseMeasure::StdNormal => coordinate,
        }
    }

    /// Number of `Ω` blocks needed to supply `count` independent coordinates.
    pub fn blocks_for(&self, count: usize) -> usize {
        count.div_ceil(self.k)
    }
}

impl Default for SampleSpace {
    fn default() -> Self {
        Self {
            k: 1,
            base: BaseMeasure::Uniform01,
        }
    }
}

/// Inverse CDF of the standard normal distribution on `(0,1)`.
pub fn std_normal_quantile(u: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * u)
}

/// CDF of the standard normal distribution.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// A point of `Ω^n`: `n` blocks of `k` coordinates, stored flat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaVector {
    k: usize,
    data: Vec<f64>,
}

impl OmegaVector {
    /// The unique point of `Ω^0`.
    pub fn empty(k: usize) -> Self {
        Self {
            k,
            data: Vec::new(),
        }
    }

    pub fn from_blocks(k: usize, blocks: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(k * blocks.len());
        for block in blocks {
            if block.len() != k {
                return Err(Error::DimensionMismatch {
                    context: "omega block",
                    expected: k,
                    found: block.len(),
                });
            }
            data.extend_from_slice(block);
        }
        Ok(Self { k, data })
    }

    pub fn from_flat(k: usize, data: Vec<f64>) -> Result<Self> {
        if k == 0 || !data.len().is_multiple_of(k) {
            return Err(Error::InvalidArgument(format!(
                "flat omega data of length {} is not a whole number of blocks of size {k}",
                data.len()
            )));
        }
        Ok(Self { k, data })
    }

    /// `n` copies of the same block; the image of `cp_Ω(n)`.
    pub fn repeated(block: &[f64], n: usize) -> Self {
        let mut data = Vec::with_capacity(block.len() * n);
        for _ in 0..n {
            data.extend_from_slice(block);
        }
        Self {
            k: block.len(),
            data,
        }
    }

    pub fn block_dim(&self) -> usize {
        self.k
    }

    pub fn n_blocks(&self) -> usize {
        self.data.len().checked_div(self.k).unwrap_or(0)
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn blocks(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.k.max(1))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }
}

/// Concatenates two points of `Ω^n` and `Ω^m` into a point of `Ω^{n+m}`,
/// `left`'s blocks first.
pub fn concat_omega(left: &OmegaVector, right: &OmegaVector) -> Result<OmegaVector> {
    if left.k != right.k {
        return Err(Error::DimensionMismatch {
            context: "concat_omega block size",
            expected: left.k,
            found: right.k,
        });
    }
    let mut data = Vec::with_capacity(left.data.len() + right.data.len());
    data.extend_from_slice(&left.data);
    data.extend_from_slice(&right.data);
    Ok(OmegaVector { k: left.k, data })
}

/// A replayable, splittable source of uniform bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleStream {
    seed: u64,
    counter: u64,
    stride: u64,
}

impl SampleStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            counter: 0,
            stride: 1,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// The bits emitted at `(seed, counter)`.
    pub fn value_at(seed: u64, counter: u64) -> u64 {
        let x = counter
            .wrapping_mul(GOLDEN_GAMMA)
            .wrapping_add(mix64(seed ^ SEED_SALT));
        mix64(mix64(x) ^ seed.rotate_left(29))
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = Self::value_at(self.seed, self.counter);
        self.counter = self.counter.wrapping_add(self.stride);
        v
    }

    /// A uniform draw strictly inside `(0,1)`.
    pub fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// The `index`-th of `parts` counter-interleaved substreams.
    pub fn substream(&self, index: u64, parts: u64) -> SampleStream {
        assert!(parts > 0, "cannot split a stream into zero parts");
        assert!(index < parts, "substream index {index} out of range {parts}");
        SampleStream {
            seed: self.seed,
            counter: self.counter.wrapping_add(index.wrapping_mul(self.stride)),
            stride: self.stride.wrapping_mul(parts),
        }
    }

    pub fn split(&self, parts: usize) -> Vec<SampleStream> {
        (0..parts as u64)
            .map(|i| self.substream(i, parts as u64))
            .collect()
    }
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws a point of `Ω^n` from `μ^n`. Block `i` is read from the `i`-th of
/// `n` substreams of `stream`.
pub fn sample_omega(space: &SampleSpace, n: usize, stream: &SampleStream) -> OmegaVector {
    let k = space.dim();
    let mut data = Vec::with_capacity(n * k);
    for i in 0..n {
        let mut sub = stream.substream(i as u64, n as u64);
        for _ in 0..k {
            data.push(space.draw_coordinate(&mut sub));
        }
    }
    OmegaVector { k, data }
}
