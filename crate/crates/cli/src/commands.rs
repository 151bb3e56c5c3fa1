use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use stochcat::arrow_spec::ArrowSpec;
use stochcat::arrows::{cokl_compose, copy_functor, para_compose, DetMap, ParaArrow};
use stochcat::corpus::{demo_arrow, para_pairs};
use stochcat::dataset::{synthetic_linear, Dataset};
use stochcat::gaussian::GaussianArrowSpec;
use stochcat::kernels::{check_cokl_nonfunctoriality, check_push_functoriality, independence_witness};
use stochcat::learn::{self, residual_sd, LearnConfig};
use stochcat::likelihood::{compose_with, likelihood_of, normalization, Route};
use stochcat::model::{LayerSpec, Model, ModelSpec};
use stochcat::sample_space::{sample_omega, OmegaVector, SampleSpace, SampleStream};
use stochcat::stats::{ks_vs_fitted_normal, mean, std_dev, DistributionDistanceReport};

use crate::output::{prepare_dir, write_csv, write_json};
use crate::RunConfig;

const MIN_SAMPLES: usize = 1000;
const BUNDLED_DATA: &str = include_str!("../data/linreg.csv");
/// Relative bound for likelihood normalization and quadrature composition.
const LIKELIHOOD_TOLERANCE: f64 = 1e-3;
/// The shared-noise witness must separate the laws by at least this much.
const DIVERGENCE_KS: f64 = 0.4;

fn check_samples(cfg: &RunConfig) -> Result<()> {
    if cfg.samples < MIN_SAMPLES {
        bail!("--samples must be at least {MIN_SAMPLES}, got {}", cfg.samples);
    }
    Ok(())
}

#[derive(Serialize)]
struct SetSummary {
    name: &'static str,
    file: String,
    mean: f64,
    sd: f64,
    ks_vs_fitted_normal: f64,
}

#[derive(Serialize)]
struct DemoSummary {
    seed: u64,
    samples: usize,
    x: f64,
    sets: Vec<SetSummary>,
}

pub fn compose_demo(cfg: &RunConfig) -> Result<bool> {
    check_samples(cfg)?;
    prepare_dir(&cfg.out_dir)?;
    let n = cfg.samples;
    let x = [42.0];
    let f = demo_arrow();
    let para = para_compose(&f, &f)?;
    let shared = copy_functor(&f);
    let copy = cokl_compose(&shared, &shared)?;
    let root = SampleStream::new(cfg.seed);
    let draw = |blocks: usize, set: u64, eval: &dyn Fn(&OmegaVector) -> stochcat::Result<Vec<f64>>| {
        let s = root.substream(set, 3);
        (0..n)
            .map(|i| {
                let w = sample_omega(f.space(), blocks, &s.substream(i as u64, n as u64));
                eval(&w).map(|y| y[0])
            })
            .collect::<stochcat::Result<Vec<f64>>>()
    };
    let alone = draw(f.blocks(), 0, &|w| f.eval(w, &x))?;
    let independent = draw(para.blocks(), 1, &|w| para.eval(w, &x))?;
    let collapsed = draw(1, 2, &|w| copy.eval(w.as_flat(), &x))?;
    let mut sets = Vec::new();
    for (name, file, values) in [
        ("f", "f_alone.csv", &alone),
        ("para_self_composite", "para_composite.csv", &independent),
        ("copy_self_composite", "copy_composite.csv", &collapsed),
    ] {
        write_csv(&cfg.out_dir, file, &["value"], values.iter().map(|v| vec![*v]))?;
        sets.push(SetSummary {
            name,
            file: file.to_string(),
            mean: mean(values),
            sd: std_dev(values),
            ks_vs_fitted_normal: ks_vs_fitted_normal(values),
        });
    }
    let summary = DemoSummary { seed: cfg.seed, samples: n, x: x[0], sets };
    let path = write_json(&cfg.out_dir, "compose_summary.json", &summary)?;
    for s in &summary.sets {
        println!("{:<22} mean {:>10.4}  sd {:>10.4}", s.name, s.mean, s.sd);
    }
    println!("wrote {}", path.display());
    Ok(true)
}

/// One entry of a `--pairs` file.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairSpec {
    name: String,
    f: ArrowSpec,
    g: ArrowSpec,
    x: Vec<f64>,
}

#[derive(Serialize)]
struct PushResult {
    name: String,
    ks: Vec<f64>,
    max_ks: f64,
    max_moment_z: f64,
    passed: bool,
}

#[derive(Serialize)]
struct LawReport<T> {
    required: bool,
    passed: bool,
    #[serde(flatten)]
    detail: T,
}

#[derive(Serialize)]
struct PushDetail {
    ks_threshold: f64,
    pairs: Vec<PushResult>,
}

#[derive(Serialize)]
struct CopyDetail {
    probes: usize,
    max_abs_deviation: f64,
}

#[derive(Serialize)]
struct WitnessDetail {
    expected_divergence: bool,
    ks_bound: f64,
    ks: Vec<f64>,
}

#[derive(Serialize)]
struct IndependenceDetail {
    ks: Vec<f64>,
    max_moment_z: f64,
    correlation_gap: f64,
}

#[derive(Serialize)]
struct FunctorReport {
    seed: u64,
    samples: usize,
    passed: bool,
    push_functoriality: LawReport<PushDetail>,
    copy_functor: LawReport<CopyDetail>,
    cokl_nonfunctoriality: LawReport<WitnessDetail>,
    projection_independence: LawReport<IndependenceDetail>,
    shared_coordinate_dependence: LawReport<IndependenceDetail>,
}

/// `(name, f, g, x)`.
type NamedPair = (String, ParaArrow, ParaArrow, Vec<f64>);

fn load_pairs(path: Option<&Path>) -> Result<Vec<NamedPair>> {
    match path {
        None => Ok(para_pairs()?
            .into_iter()
            .map(|p| (p.name.to_string(), p.f, p.g, p.x))
            .collect()),
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let specs: Vec<PairSpec> = serde_json::from_str(&text).context("parsing arrow pairs")?;
            let space = SampleSpace::default();
            specs
                .into_iter()
                .map(|s| Ok((s.name, s.f.to_para(space)?, s.g.to_para(space)?, s.x)))
                .collect()
        }
    }
}

pub fn functor_check(cfg: &RunConfig, pairs: Option<&Path>) -> Result<bool> {
    check_samples(cfg)?;
    prepare_dir(&cfg.out_dir)?;
    let root = SampleStream::new(cfg.seed);
    let pairs = load_pairs(pairs)?;
    let n = cfg.samples;

    let push_stream = root.substream(0, 5);
    let mut results = Vec::with_capacity(pairs.len());
    for (i, (name, f, g, x)) in pairs.iter().enumerate() {
        let report = check_push_functoriality(f, g, x, n, &push_stream.substream(i as u64, pairs.len() as u64))
            .with_context(|| format!("pair {name}"))?;
        let max_ks = report.max_ks();
        results.push(PushResult {
            name: name.clone(),
            ks: report.ks.clone(),
            max_ks,
            max_moment_z: report.max_moment_z(),
            passed: max_ks < cfg.ks_threshold,
        });
    }
    let push = LawReport {
        required: true,
        passed: results.iter().all(|r| r.passed),
        detail: PushDetail { ks_threshold: cfg.ks_threshold, pairs: results },
    };

    let probes: u64 = 100;
    let copy_stream = root.substream(1, 5);
    let mut max_dev = 0.0f64;
    for (i, (_, f, g, x)) in pairs.iter().enumerate() {
        let whole = copy_functor(&para_compose(f, g)?);
        let parts = cokl_compose(&copy_functor(f), &copy_functor(g))?;
        let s = copy_stream.substream(i as u64, pairs.len() as u64);
        for k in 0..probes {
            let w = sample_omega(f.space(), 1, &s.substream(k, probes));
            let (a, b) = (whole.eval(w.as_flat(), x)?, parts.eval(w.as_flat(), x)?);
            for (u, v) in a.iter().zip(&b) {
                max_dev = max_dev.max((u - v).abs());
            }
        }
    }
    let copy = LawReport {
        required: true,
        passed: max_dev == 0.0,
        detail: CopyDetail { probes: probes as usize * pairs.len(), max_abs_deviation: max_dev },
    };

    let witness = check_cokl_nonfunctoriality(&copy_functor(&demo_arrow()), &[42.0], n, &root.substream(2, 5))?;
    let cokl = LawReport {
        required: true,
        passed: witness.max_ks() > DIVERGENCE_KS,
        detail: WitnessDetail { expected_divergence: true, ks_bound: DIVERGENCE_KS, ks: witness.ks.clone() },
    };

    let plane = SampleSpace::uniform(2)?;
    let coord = |i: usize| DetMap::new(2, 1, move |w| vec![w[i]]);
    let independent = independence_witness(&coord(0), &coord(1), &plane, n, &root.substream(3, 5))?;
    let line = SampleSpace::default();
    let same = DetMap::new(1, 1, |w| vec![w[0]]);
    let dependent = independence_witness(&same, &same, &line, n, &root.substream(4, 5))?;
    let detail = |r: &DistributionDistanceReport| IndependenceDetail {
        ks: r.ks.clone(),
        max_moment_z: r.max_moment_z(),
        correlation_gap: r.correlation_gap(0, 1),
    };
    let projection = LawReport {
        required: true,
        passed: independent.max_ks() < cfg.ks_threshold && independent.correlation_gap(0, 1) < 0.02,
        detail: detail(&independent),
    };
    let shared = LawReport {
        required: false,
        passed: dependent.correlation_gap(0, 1) > 0.5,
        detail: detail(&dependent),
    };

    let passed = push.passed && copy.passed && cokl.passed && projection.passed;
    let report = FunctorReport {
        seed: cfg.seed,
        samples: n,
        passed,
        push_functoriality: push,
        copy_functor: copy,
        cokl_nonfunctoriality: cokl,
        projection_independence: projection,
        shared_coordinate_dependence: shared,
    };
    let path = write_json(&cfg.out_dir, "functor_report.json", &report)?;
    let mark = |b: bool| if b { "pass" } else { "FAIL" };
    println!("push functoriality       {}", mark(report.push_functoriality.passed));
    println!("copy functor             {}", mark(report.copy_functor.passed));
    println!("cokl non-functoriality   {} (expected divergence)", mark(report.cokl_nonfunctoriality.passed));
    println!("projection independence  {}", mark(report.projection_independence.passed));
    println!("wrote {}", path.display());
    Ok(passed)
}

fn load_model(cfg: &RunConfig, default: ModelSpec) -> Result<(ModelSpec, Model)> {
    let spec = match &cfg.model {
        Some(p) => ModelSpec::from_path(p).with_context(|| format!("reading model {}", p.display()))?,
        None => default,
    };
    let model = spec.build(SampleSpace::default())?;
    Ok((spec, model))
}

#[derive(Serialize)]
struct LayerParams {
    layer: usize,
    kind: GaussianArrowSpec,
    params: Vec<f64>,
}

#[derive(Serialize)]
struct TrainSummary {
    seed: u64,
    epsilon: f64,
    iterations: usize,
    rows: usize,
    /// All parameters, last layer first.
    params: Vec<f64>,
    layers: Vec<LayerParams>,
    initial_loss: f64,
    final_loss: f64,
    noise_sd_estimate: f64,
}

pub fn train(cfg: &RunConfig) -> Result<bool> {
    prepare_dir(&cfg.out_dir)?;
    let (spec, model) = load_model(cfg, ModelSpec::linear_regression())?;
    let data = match &cfg.data {
        Some(p) => Dataset::from_path(p).with_context(|| format!("reading data {}", p.display()))?,
        None => Dataset::from_reader(BUNDLED_DATA.as_bytes())?,
    };
    let lc = LearnConfig::new(cfg.epsilon, cfg.iterations)?;
    let learner = model.learner(&lc)?;
    let result = learn::train(&learner, &data, &lc)?;
    let noise_sd_estimate = residual_sd(&model.mean_map()?, &result.params, &data)?;
    let layers = model
        .param_layout()
        .into_iter()
        .map(|(layer, offset, len)| LayerParams {
            layer,
            kind: spec.layers[layer].arrow.clone(),
            params: result.params[offset..offset + len].to_vec(),
        })
        .collect();
    let summary = TrainSummary {
        seed: cfg.seed,
        epsilon: cfg.epsilon,
        iterations: cfg.iterations,
        rows: data.len(),
        params: result.params.clone(),
        layers,
        initial_loss: result.trace[0],
        final_loss: result.final_loss(),
        noise_sd_estimate,
    };
    write_csv(
        &cfg.out_dir,
        "train_trace.csv",
        &["pass", "loss"],
        result.trace.iter().enumerate().map(|(i, l)| vec![i as f64, *l]),
    )?;
    let path = write_json(&cfg.out_dir, "train_params.json", &summary)?;
    println!("params {:?}", summary.params);
    println!("final loss {:.6}  noise sd estimate {:.4}", summary.final_loss, summary.noise_sd_estimate);
    println!("wrote {}", path.display());
    Ok(true)
}

#[derive(Serialize)]
struct ModeCheck {
    y: Vec<f64>,
    density: f64,
    closed_form: f64,
    abs_error: f64,
}

#[derive(Serialize)]
struct SemifunctorCheck {
    composition: &'static str,
    grid_points: usize,
    max_relative_deviation: f64,
    passed: bool,
}

#[derive(Serialize)]
struct LikelihoodSummary {
    params: Vec<f64>,
    x: Vec<f64>,
    mode: ModeCheck,
    normalization: Option<f64>,
    semifunctor: Option<SemifunctorCheck>,
    passed: bool,
}

const GRID_POINTS: usize = 41;

fn default_likelihood_model() -> ModelSpec {
    ModelSpec {
        layers: vec![LayerSpec {
            arrow: GaussianArrowSpec::LinearRegression,
            init: Some(vec![2.0, 1.0, 0.5]),
        }],
    }
}

/// `mean ± 4·sd` in `GRID_POINTS` steps.
fn grid_around(mean: f64, sd: f64) -> Vec<f64> {
    let step = 8.0 * sd / (GRID_POINTS - 1) as f64;
    (0..GRID_POINTS).map(|i| mean - 4.0 * sd + step * i as f64).collect()
}

pub fn likelihood(cfg: &RunConfig) -> Result<bool> {
    prepare_dir(&cfg.out_dir)?;
    let (_, model) = load_model(cfg, default_likelihood_model())?;
    let params = model.initial_params();
    let x = vec![1.0; model.in_dim()];
    let l = model.likelihood()?;
    let law = stochcat::gaussian::df_law(&model.chain()?, &params, &x)?;

    let y_mode = law.mean.as_slice().to_vec();
    let density = l.density(&params, &x, &y_mode)?;
    let det = law.cov.determinant();
    let closed_form = 1.0 / ((2.0 * std::f64::consts::PI).powi(law.dim() as i32) * det).sqrt();
    let mode = ModeCheck { y: y_mode.clone(), density, closed_form, abs_error: (density - closed_form).abs() };

    let mut rows = Vec::with_capacity(GRID_POINTS);
    for y0 in grid_around(law.mean[0], law.std_dev(0)) {
        let mut y = y_mode.clone();
        y[0] = y0;
        rows.push(vec![y0, l.density(&params, &x, &y)?, l.log_density(&params, &x, &y)?]);
    }
    write_csv(&cfg.out_dir, "likelihood.csv", &["y0", "density", "log_density"], rows)?;

    let normalization = match model.out_dim() {
        1 | 2 => Some(normalization(&l, &params, &x)?),
        _ => None,
    };
    let semifunctor = semifunctor_table(cfg, &model, &params, &x)?;

    let passed = mode.abs_error <= 1e-9 * closed_form.max(1.0)
        && normalization.is_none_or(|z| (z - 1.0).abs() < LIKELIHOOD_TOLERANCE)
        && semifunctor.as_ref().is_none_or(|s| s.passed);
    let summary = LikelihoodSummary { params, x, mode, normalization, semifunctor, passed };
    let path = write_json(&cfg.out_dir, "likelihood_summary.json", &summary)?;
    println!("density at mode {:.9} (closed form {:.9})", summary.mode.density, summary.mode.closed_form);
    if let Some(z) = summary.normalization {
        println!("normalization {z:.6}");
    }
    match &summary.semifunctor {
        Some(s) => println!("semifunctor max relative deviation {:.3e}", s.max_relative_deviation),
        None => println!("semifunctor check skipped: needs scalar layers"),
    }
    println!("wrote {}", path.display());
    Ok(passed)
}

/// Composes the layer likelihoods by quadrature and compares with the closed
/// form of the whole chain. A single scalar layer is composed with itself.
fn semifunctor_table(cfg: &RunConfig, model: &Model, params: &[f64], x: &[f64]) -> Result<Option<SemifunctorCheck>> {
    let layers: Vec<_> = model.layers().collect();
    if layers.iter().any(|g| g.in_dim() != 1 || g.out_dim() != 1) {
        return Ok(None);
    }
    let (composition, liks, layer_params, closed) = if layers.len() == 1 {
        let l = likelihood_of(layers[0]);
        let closed = compose_with(&l, &l, Route::Auto)?;
        let mut p = params.to_vec();
        p.extend_from_slice(params);
        ("self", vec![l.clone(), l], p, closed)
    } else {
        let liks: Vec<_> = layers.iter().map(|g| likelihood_of(g)).collect();
        ("layers", liks, params.to_vec(), model.likelihood()?)
    };
    let mut it = liks.iter();
    let first = it.next().expect("at least one layer").clone();
    let quad = it.try_fold(first, |acc, l| compose_with(&acc, l, Route::Quadrature))?;
    let (mean, sd) = closed.moments(&layer_params, x)?;
    let mut rows = Vec::with_capacity(GRID_POINTS);
    let mut worst = 0.0f64;
    for y in grid_around(mean[0], sd[0]) {
        let exact = closed.density(&layer_params, x, &[y])?;
        let approx = quad.density(&layer_params, x, &[y])?;
        let rel = (approx - exact).abs() / exact;
        worst = worst.max(rel);
        rows.push(vec![y, exact, approx, rel]);
    }
    write_csv(
        &cfg.out_dir,
        "semifunctor.csv",
        &["y", "closed_form", "quadrature", "relative_deviation"],
        rows,
    )?;
    Ok(Some(SemifunctorCheck {
        composition,
        grid_points: GRID_POINTS,
        max_relative_deviation: worst,
        passed: worst < LIKELIHOOD_TOLERANCE,
    }))
}

pub fn synth_data(cfg: &RunConfig, rows: usize) -> Result<bool> {
    if rows == 0 {
        bail!("--rows must be positive");
    }
    prepare_dir(&cfg.out_dir)?;
    let data = synthetic_linear(rows, 2.0, 1.0, 0.5, &SampleStream::new(cfg.seed))?;
    let path = cfg.out_dir.join("linreg.csv");
    let file = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    data.write_csv(file)?;
    println!("wrote {} rows to {}", rows, path.display());
    Ok(true)
}
