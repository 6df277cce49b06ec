//! Experiment harness: performance sweeps, ablations and loss landscapes.
//!
//! Every experiment is a pure function of its [`ExperimentConfig`]. Training
//! sets, test sets and Monte Carlo batches draw from disjoint seeded streams
//! (see [`crate::rng`]), and all aggregation is in a fixed order, so reruns
//! produce identical numbers regardless of the worker count.

mod config;
mod output;

pub use config::{ExperimentConfig, ExperimentKind, GridSpec, NormalizedSurfaceSpec};
pub use output::{
    emit, format_f64, parse_surface_csv, parse_table, write_outputs, Emit, ExperimentOutput, Format, Grid2,
    LossSurface, Metadata, OutputPaths, ProfilePoint, ResultRow, ResultTable, TrainingRecord,
};

use crate::attention::{CaParams, CaVariant, ModelParams, PromptStats};
use crate::datagen::{sample_task_and_prompt, Prompt};
use crate::error::{Error, Result};
use crate::losses::{pop_loss_two_param, profiled_alpha, reduced_loss, Target};
use crate::optim::{default_lsa_init, train, ModelInit, ModelKind, TrainData};
use crate::parallel::{map_indexed, map_slice, mean_std};
use crate::quadrature::ZMoments;
use crate::rng::{child_seed, stream, Purpose};

/// A model family in the sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    SingleLsa,
    Ca(CaVariant),
    SampleMean,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::SingleLsa => "single_lsa",
            Variant::Ca(v) => v.name(),
            Variant::SampleMean => "sample_mean",
        }
    }

    /// Models trained for each experiment.
    pub fn for_experiment(kind: ExperimentKind) -> Vec<Variant> {
        use CaVariant::*;
        match kind {
            ExperimentKind::Fig2 => vec![Variant::SingleLsa, Variant::Ca(LcaOneParam), Variant::Ca(LcaTwoParam)],
            ExperimentKind::Fig3 => vec![Variant::Ca(LcaOneParam), Variant::Ca(LcaTwoParam)],
            ExperimentKind::AblationNoSkip => vec![
                Variant::Ca(LcaOneParam),
                Variant::Ca(LcaTwoParam),
                Variant::Ca(LcaNoSkip),
                Variant::Ca(DeepLsaNoSkip),
                Variant::SampleMean,
            ],
            ExperimentKind::AblationDeepLsa => vec![
                Variant::SingleLsa,
                Variant::Ca(LcaOneParam),
                Variant::Ca(LcaTwoParam),
                Variant::Ca(DeepLsaWithSkip),
                Variant::SampleMean,
            ],
            ExperimentKind::Landscape => vec![],
        }
    }
}

/// Run whichever experiment `cfg` names.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    Ok(match cfg.experiment {
        ExperimentKind::Fig2 => ExperimentOutput::Table(run_fig2(cfg)?),
        ExperimentKind::Fig3 => ExperimentOutput::Table(run_fig3(cfg)?),
        ExperimentKind::AblationNoSkip | ExperimentKind::AblationDeepLsa => {
            ExperimentOutput::Table(run_ablations(cfg)?)
        }
        ExperimentKind::Landscape => ExperimentOutput::Surface(run_landscape(cfg)?),
    })
}

fn expect_kind(cfg: &ExperimentConfig, allowed: &[ExperimentKind]) -> Result<()> {
    if !allowed.contains(&cfg.experiment) {
        return Err(Error::InvalidConfig(format!(
            "config is for {}, not {}",
            cfg.experiment.name(),
            allowed.iter().map(|k| k.name()).collect::<Vec<_>>().join("/")
        )));
    }
    cfg.validate()
}

/// `N` training prompts at `L_tr` for training repeat `repeat`.
pub fn training_prompts(cfg: &ExperimentConfig, repeat: usize) -> Vec<Prompt> {
    let seed = child_seed(cfg.seed, repeat as u64);
    map_indexed(cfg.n_train, |i| {
        sample_task_and_prompt(&cfg.data, cfg.l_tr, &mut stream(seed, Purpose::Training, i as u64))
    })
}

/// Test prompts at context length `l_te`, shared by all models and repeats.
pub fn test_prompts(cfg: &ExperimentConfig, l_te: usize) -> Vec<Prompt> {
    let seed = child_seed(cfg.seed ^ 0x7465_7374, l_te as u64);
    map_indexed(cfg.n_test_prompts, |j| {
        sample_task_and_prompt(&cfg.data, l_te, &mut stream(seed, Purpose::Testing, j as u64))
    })
}

/// Reduced test prompt: sufficient statistics plus both targets.
struct TestPoint {
    stats: PromptStats,
    target: f64,
}

fn test_points(cfg: &ExperimentConfig, l_te: usize) -> Result<Vec<TestPoint>> {
    let prompts = test_prompts(cfg, l_te);
    map_slice(&prompts, |p| {
        Ok(TestPoint {
            stats: PromptStats::new(p.inputs())?,
            target: cfg.target_metric.value(p),
        })
    })
    .into_iter()
    .collect()
}

fn squared_errors(model: &ModelParams, points: &[TestPoint]) -> Result<Vec<f64>> {
    map_slice(points, |tp| {
        let e = tp.target - tp.stats.predict(model)?;
        Ok(e * e)
    })
    .into_iter()
    .collect()
}

/// Initial point of the empirical training runs.
///
/// Two-parameter models start on the population valley floor at
/// `β₀ = −1/Z̄`, inside the window `(−2/Z̄, 0)`.
fn initial_point(variant: Variant, depth: usize, zm: &ZMoments, d: usize) -> Result<ModelInit> {
    Ok(match variant {
        Variant::SingleLsa => ModelInit::Lsa(default_lsa_init(d)),
        Variant::Ca(CaVariant::LcaOneParam) => ModelInit::Ca(vec![0.0]),
        Variant::Ca(CaVariant::LcaNoSkip | CaVariant::DeepLsaNoSkip) => ModelInit::Ca(vec![1.0 / zm.z_upper()]),
        Variant::Ca(CaVariant::LcaTwoParam | CaVariant::DeepLsaWithSkip) => {
            let beta0 = -1.0 / zm.z_upper();
            ModelInit::Ca(vec![profiled_alpha(beta0, depth, zm)?, beta0])
        }
        Variant::SampleMean => ModelInit::Ca(vec![]),
    })
}

/// Train one variant; divergence is reported in the record, not as an error.
fn fit(
    cfg: &ExperimentConfig,
    variant: Variant,
    depth: usize,
    repeat: usize,
    prompts: &[Prompt],
    zm: &ZMoments,
) -> Result<(Option<ModelParams>, TrainingRecord)> {
    let mut record = TrainingRecord {
        variant: variant.name().to_string(),
        depth,
        repeat,
        steps: 0,
        converged: true,
        final_loss: None,
        params: vec![],
        error: None,
    };
    let kind = match variant {
        Variant::SampleMean => return Ok((Some(ModelParams::SampleMean), record)),
        Variant::SingleLsa => ModelKind::SingleLsa,
        Variant::Ca(v) => ModelKind::Ca(CaParams::new(v, 0.0, 0.0, depth)?),
    };
    let init = initial_point(variant, depth, zm, cfg.data.dim())?;
    let data = TrainData::Empirical {
        prompts,
        target: cfg.train_target,
    };
    match train(&kind, &init, &cfg.optim, data) {
        Ok(tr) => {
            record.steps = tr.trajectory.steps;
            record.converged = tr.trajectory.converged;
            record.final_loss = Some(tr.trajectory.final_loss);
            if let ModelParams::Ca(_) = tr.model {
                record.params = tr.trajectory.final_params.clone();
            }
            Ok((Some(tr.model), record))
        }
        Err(Error::Diverged { step, reason, .. }) => {
            log::warn!("{} diverged at step {step}: {reason}", variant.name());
            record.steps = step;
            record.converged = false;
            record.error = Some(format!("diverged at step {step}: {reason}"));
            Ok((None, record))
        }
        Err(e) => Err(e),
    }
}

fn row(cfg: &ExperimentConfig, variant: Variant, sweep: usize, stats: Option<(f64, f64, usize)>) -> ResultRow {
    let (mean, std, n, flag) = match stats {
        Some((m, s, n)) => (m, s, n, String::new()),
        None => (f64::NAN, f64::NAN, 0, "diverged".to_string()),
    };
    ResultRow {
        experiment: cfg.experiment.name().to_string(),
        variant: variant.name().to_string(),
        sweep: sweep as u64,
        mean,
        std,
        n,
        seed: cfg.seed,
        flag,
    }
}

fn moments(cfg: &ExperimentConfig, depth: usize) -> Result<ZMoments> {
    ZMoments::new(&cfg.data.m_dist, cfg.quadrature.for_depth(depth))
}

/// Train each variant once and sweep the test context length. Error bars are
/// the standard deviation of the squared error over test prompts.
pub fn run_fig2(cfg: &ExperimentConfig) -> Result<ResultTable> {
    expect_kind(cfg, &[ExperimentKind::Fig2])?;
    let zm = moments(cfg, cfg.depth)?;
    let prompts = training_prompts(cfg, 0);
    let variants = Variant::for_experiment(cfg.experiment);
    let fitted: Result<Vec<_>> = map_slice(&variants, |&v| fit(cfg, v, cfg.depth, 0, &prompts, &zm))
        .into_iter()
        .collect();
    let fitted = fitted?;
    drop(prompts);
    let mut rows = Vec::new();
    for &l_te in &cfg.l_te_grid {
        let points = test_points(cfg, l_te)?;
        for (&v, (model, _)) in variants.iter().zip(&fitted) {
            let stats = match model {
                Some(m) => {
                    let errs = squared_errors(m, &points)?;
                    let (mean, std) = mean_std(&errs);
                    Some((mean, std, errs.len()))
                }
                None => None,
            };
            rows.push(row(cfg, v, l_te, stats));
        }
    }
    let records = fitted.into_iter().map(|(_, r)| r).collect();
    Ok(ResultTable::new(rows, Some(Metadata::new(cfg, records))))
}

/// Train at each depth in `T_grid` and evaluate at `fig3_L_te`.
pub fn run_fig3(cfg: &ExperimentConfig) -> Result<ResultTable> {
    expect_kind(cfg, &[ExperimentKind::Fig3])?;
    let prompts = training_prompts(cfg, 0);
    let points = test_points(cfg, cfg.fig3_l_te)?;
    let variants = Variant::for_experiment(cfg.experiment);
    let jobs: Vec<(Variant, usize)> = variants
        .iter()
        .flat_map(|&v| cfg.t_grid.iter().map(move |&t| (v, t)))
        .collect();
    let results: Result<Vec<_>> = map_slice(&jobs, |&(v, t)| {
        let zm = moments(cfg, t)?;
        let (model, record) = fit(cfg, v, t, 0, &prompts, &zm)?;
        let stats = match &model {
            Some(m) => {
                let errs = squared_errors(m, &points)?;
                let (mean, std) = mean_std(&errs);
                Some((mean, std, errs.len()))
            }
            None => None,
        };
        Ok((row(cfg, v, t, stats), record))
    })
    .into_iter()
    .collect();
    let (rows, records) = results?.into_iter().unzip();
    Ok(ResultTable::new(rows, Some(Metadata::new(cfg, records))))
}

/// The context-length sweep with ablated variants, repeated over
/// `n_repeats` training sets. Each row is the mean and standard deviation,
/// over repeats, of the per-repeat mean test error.
pub fn run_ablations(cfg: &ExperimentConfig) -> Result<ResultTable> {
    expect_kind(cfg, &[ExperimentKind::AblationNoSkip, ExperimentKind::AblationDeepLsa])?;
    let zm = moments(cfg, cfg.depth)?;
    let variants = Variant::for_experiment(cfg.experiment);
    // Repeats run sequentially so only one training set is alive at a time;
    // the variants of a repeat train in parallel.
    let mut fitted: Vec<Vec<(Option<ModelParams>, TrainingRecord)>> = Vec::with_capacity(cfg.n_repeats);
    for r in 0..cfg.n_repeats {
        let prompts = training_prompts(cfg, r);
        let per: Result<Vec<_>> = map_slice(&variants, |&v| fit(cfg, v, cfg.depth, r, &prompts, &zm))
            .into_iter()
            .collect();
        fitted.push(per?);
    }
    let mut rows = Vec::new();
    for &l_te in &cfg.l_te_grid {
        let points = test_points(cfg, l_te)?;
        for (k, &v) in variants.iter().enumerate() {
            let mut per_repeat = Vec::with_capacity(cfg.n_repeats);
            for rep in &fitted {
                if let Some(m) = &rep[k].0 {
                    per_repeat.push(crate::parallel::mean(&squared_errors(m, &points)?));
                }
            }
            let stats = (!per_repeat.is_empty()).then(|| {
                let (m, s) = mean_std(&per_repeat);
                (m, s, per_repeat.len())
            });
            rows.push(row(cfg, v, l_te, stats));
        }
    }
    let records = fitted.into_iter().flatten().map(|(_, r)| r).collect();
    Ok(ResultTable::new(rows, Some(Metadata::new(cfg, records))))
}

/// Population loss of the two-parameter model on the configured grid at
/// depth `T`, the profiled valley, and optionally the empirical loss of the
/// pre-normalized model on a fixed prompt batch.
pub fn run_landscape(cfg: &ExperimentConfig) -> Result<LossSurface> {
    expect_kind(cfg, &[ExperimentKind::Landscape])?;
    let t = cfg.depth;
    let zm = moments(cfg, t)?;
    let alphas = cfg.grid.alphas();
    let betas = cfg.grid.betas();
    let rows = map_slice(&betas, |&b| alphas.iter().map(|&a| pop_loss_two_param(a, b, t, &zm)).collect::<Vec<_>>());
    let population = Grid2 {
        alphas: alphas.clone(),
        betas: betas.clone(),
        values: rows.into_iter().flatten().collect(),
    };
    let profile: Result<Vec<ProfilePoint>> = map_slice(&betas, |&beta| {
        Ok(ProfilePoint {
            beta,
            alpha: profiled_alpha(beta, t, &zm)?,
            loss: reduced_loss(beta, t, &zm),
        })
    })
    .into_iter()
    .collect();
    let normalized = match &cfg.grid.normalized {
        Some(spec) => Some(normalized_surface(cfg, spec)?),
        None => None,
    };
    Ok(LossSurface {
        depth: t,
        quadrature_nodes: zm.node_count(),
        seed: cfg.seed,
        population,
        profile: profile?,
        normalized,
        metadata: Some(Metadata::new(cfg, vec![])),
    })
}

fn normalized_surface(cfg: &ExperimentConfig, spec: &NormalizedSurfaceSpec) -> Result<Grid2> {
    let batch: Vec<Prompt> = map_indexed(spec.batch_size, |i| {
        sample_task_and_prompt(&cfg.data, spec.context_len, &mut stream(cfg.seed, Purpose::Landscape, i as u64))
    });
    let alphas = GridSpec::axis(cfg.grid.alpha_range, spec.resolution);
    let betas = GridSpec::axis(cfg.grid.beta_range, spec.resolution);
    let cells: Vec<(f64, f64)> = betas.iter().flat_map(|&b| alphas.iter().map(move |&a| (a, b))).collect();
    let values: Result<Vec<f64>> = map_slice(&cells, |&(a, b)| {
        let mut p = CaParams::two_param(a, b, cfg.depth)?;
        p.normalize = true;
        let model = ModelParams::Ca(p);
        let errs: Result<Vec<f64>> = batch
            .iter()
            .map(|pr| {
                let e = cfg.target_metric.value(pr) - crate::attention::predict(pr, &model)?;
                Ok(e * e)
            })
            .collect();
        Ok(crate::parallel::mean(&errs?))
    })
    .into_iter()
    .collect();
    Ok(Grid2 {
        alphas,
        betas,
        values: values?,
    })
}

/// Direct one-shot estimator `α yᵀXᵀx_q / L`, which a depth-one LCA reduces to.
pub fn one_shot_estimate(prompt: &Prompt, alpha: f64) -> f64 {
    let l = prompt.context_len() as f64;
    alpha * (&prompt.x * &prompt.y).dot(&prompt.x_q) / l
}

/// Mean squared error of a fitted model against `target` on `prompts`.
pub fn evaluate(model: &ModelParams, prompts: &[Prompt], target: Target) -> Result<(f64, f64)> {
    Ok(mean_std(&crate::losses::squared_errors(model, prompts, target)?))
}
