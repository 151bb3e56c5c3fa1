//! Supervised datasets `{(x_a, x_b)}` with CSV input and output.
//!
//! The CSV header is `x0,…,x{a-1},y0,…,y{b-1}`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sample_space::{std_normal_quantile, SampleStream};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    in_dim: usize,
    out_dim: usize,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, outputs: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("a dataset needs at least one row".into()));
        }
        if inputs.len() != outputs.len() {
            return Err(Error::InvalidArgument(format!(
                "{} inputs but {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        let (a, b) = (inputs[0].len(), outputs[0].len());
        for (i, (x, y)) in inputs.iter().zip(&outputs).enumerate() {
            if x.len() != a || y.len() != b {
                return Err(Error::InvalidArgument(format!("row {i} has inconsistent dimensions")));
            }
            if x.iter().chain(y).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("dataset row {i}")));
            }
        }
        Ok(Self {
            in_dim: a,
            out_dim: b,
            inputs,
            outputs,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i]
    }

    pub fn output(&self, i: usize) -> &[f64] {
        &self.outputs[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.inputs
            .iter()
            .zip(&self.outputs)
            .map(|(x, y)| (x.as_slice(), y.as_slice()))
    }

    /// Concatenates `other`'s rows after this dataset's.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        let mut inputs = self.inputs.clone();
        inputs.extend(other.inputs.iter().cloned());
        let mut outputs = self.outputs.clone();
        outputs.extend(other.outputs.iter().cloned());
        Dataset::new(inputs, outputs)
    }

    pub fn header(in_dim: usize, out_dim: usize) -> Vec<String> {
        (0..in_dim)
            .map(|i| format!("x{i}"))
            .chain((0..out_dim).map(|j| format!("y{j}")))
            .collect()
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        let a = header.iter().take_while(|h| h.starts_with('x')).count();
        let b = header.len() - a;
        let expected = Self::header(a, b);
        if header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::InvalidArgument(format!(
                "dataset header must be {}",
                expected.join(",")
            )));
        }
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let values: Vec<f64> = record
                .iter()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| Error::InvalidArgument(format!("row {i}: {e}")))
                })
                .collect::<Result<_>>()?;
            inputs.push(values[..a].to_vec());
            outputs.push(values[a..].to_vec());
        }
        Self::new(inputs, outputs)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::header(self.in_dim, self.out_dim))?;
        for (x, y) in self.rows() {
            w.write_record(x.iter().chain(y).map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `n` rows of `y = slope·x + intercept + noise_sd·z` with `x, z` independent
/// standard normals; row `i` reads two uniforms from `stream.substream(i, n)`.
pub fn synthetic_linear(n: usize, slope: f64, intercept: f64, noise_sd: f64, stream: &SampleStream) -> Result<Dataset> {
    let mut inputs = Vec::with_capacity(n);
    let mut outputs = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = stream.substream(i as u64, n as u64);
        let x = std_normal_quantile(s.next_open01());
        let z = std_normal_quantile(s.next_open01());
        inputs.push(vec![x]);
        outputs.push(vec![slope * x + intercept + noise_sd * z]);
    }
    Dataset::new(inputs, outputs)
}
