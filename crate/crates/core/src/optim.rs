//! Gradient descent with backtracking, model training, and 1-d minimization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::attention::{CaParams, CaVariant, LsaParams, ModelParams, PromptStats};
use crate::datagen::Prompt;
use crate::error::{Error, Result};
use crate::losses::{
    log_reduced_loss_with_grad, pop_loss_one_param, pop_loss_one_param_grad, pop_loss_two_param,
    pop_loss_two_param_grad, profiled_alpha, reduced_loss, Target,
};
use crate::parallel::{map_slice, mean};
use crate::quadrature::ZMoments;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    #[default]
    Analytic,
    FiniteDifference,
}

/// How the two-parameter population loss is descended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoParamScheme {
    /// Descend `G_T(β)` with `α = α*(β)` held on the valley floor.
    #[default]
    Profiled,
    /// Descend `(α, β)` jointly.
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub step_size: f64,
    pub max_steps: usize,
    pub grad_tolerance: f64,
    pub gradient_mode: GradientMode,
    pub fd_epsilon: f64,
    /// Descend `log ℓ` instead of `ℓ`. Same stationary points, but usable
    /// when `ℓ` is far below machine epsilon. `None` picks log scale for
    /// population losses and linear scale for empirical ones.
    pub log_loss: Option<bool>,
    pub two_param_scheme: TwoParamScheme,
    /// Keep every k-th step in the trajectory (first and last always kept).
    pub record_every: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            step_size: 1e-2,
            max_steps: 100_000,
            grad_tolerance: 1e-9,
            gradient_mode: GradientMode::Analytic,
            fd_epsilon: 1e-6,
            log_loss: None,
            two_param_scheme: TwoParamScheme::Profiled,
            record_every: 1,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.step_size) || !pos(self.grad_tolerance) || !pos(self.fd_epsilon) {
            return Err(Error::InvalidConfig(
                "step_size, grad_tolerance and fd_epsilon must be positive".into(),
            ));
        }
        if self.max_steps == 0 || self.record_every == 0 {
            return Err(Error::InvalidConfig("max_steps and record_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub params: Vec<f64>,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub converged: bool,
    /// Stopped because no step of any size decreased the objective; the
    /// iterate is stationary to working precision.
    pub stalled: bool,
    pub steps: usize,
    pub final_params: Vec<f64>,
    pub final_loss: f64,
    pub final_grad_norm: f64,
    /// Componentwise range of the parameters over every step, recorded or not.
    pub param_min: Vec<f64>,
    pub param_max: Vec<f64>,
    /// Largest secant estimate of the gradient's Lipschitz constant.
    pub lipschitz_estimate: f64,
}

/// A differentiable scalar objective over `R^n`.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, theta: &[f64]) -> f64;
    fn analytic_gradient(&self, _theta: &[f64]) -> Option<Vec<f64>> {
        None
    }
    /// Loss reported in the trajectory for an objective value.
    fn reported_loss(&self, _theta: &[f64], value: f64) -> f64 {
        value
    }
    /// Model parameters reported in the trajectory.
    fn reported_params(&self, theta: &[f64]) -> Vec<f64> {
        theta.to_vec()
    }
}

/// Central differences with step `eps`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, theta: &[f64], eps: f64) -> Vec<f64> {
    let mut buf = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            buf[i] = theta[i] + eps;
            let hi = f(&buf);
            buf[i] = theta[i] - eps;
            let lo = f(&buf);
            buf[i] = theta[i];
            (hi - lo) / (2.0 * eps)
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn gradient_of<O: Objective + ?Sized>(obj: &O, theta: &[f64], cfg: &OptimConfig) -> Vec<f64> {
    match cfg.gradient_mode {
        GradientMode::Analytic => obj
            .analytic_gradient(theta)
            .unwrap_or_else(|| central_difference(|t| obj.value(t), theta, cfg.fd_epsilon)),
        GradientMode::FiniteDifference => central_difference(|t| obj.value(t), theta, cfg.fd_epsilon),
    }
}

/// Gradient descent with backtracking and step growth.
///
/// A trial step is accepted only if the objective strictly decreases; on
/// rejection the step is halved. Accepted steps grow the step by 1.5×. When
/// no step decreases the objective the run stops as stalled, which counts as
/// converged: the iterate is stationary to working precision.
pub fn gradient_descent<O: Objective + ?Sized>(obj: &O, init: &[f64], cfg: &OptimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if init.len() != obj.dim() {
        return Err(Error::DimensionMismatch(format!(
            "init has {} entries, objective expects {}",
            init.len(),
            obj.dim()
        )));
    }
    let mut theta = init.to_vec();
    let mut f = obj.value(&theta);
    let mut g = gradient_of(obj, &theta, cfg);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged {
            step: 0,
            reason: "non-finite loss or gradient at the initial point".into(),
            last_params: obj.reported_params(&theta),
        });
    }
    let report = |theta: &[f64], f: f64, g: &[f64], step: usize| TrajectoryPoint {
        step,
        params: obj.reported_params(theta),
        loss: obj.reported_loss(theta, f),
        grad_norm: norm(g),
    };
    let first = report(&theta, f, &g, 0);
    let mut param_min = first.params.clone();
    let mut param_max = first.params.clone();
    let mut points = vec![first];
    let mut eta = cfg.step_size;
    let mut lipschitz: f64 = 0.0;
    let mut warned = false;
    let mut converged = false;
    let mut stalled = false;
    let mut step = 0;
    let mut trial = theta.clone();

    while step < cfg.max_steps {
        if norm(&g) < cfg.grad_tolerance {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..80 {
            for i in 0..theta.len() {
                trial[i] = theta[i] - eta * g[i];
            }
            let ft = obj.value(&trial);
            if ft.is_finite() && ft < f {
                accepted = true;
                let gt = gradient_of(obj, &trial, cfg);
                if gt.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Diverged {
                        step: step + 1,
                        reason: "non-finite gradient".into(),
                        last_params: obj.reported_params(&theta),
                    });
                }
                let dtheta: Vec<f64> = trial.iter().zip(&theta).map(|(a, b)| a - b).collect();
                let dg: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
                let dn = norm(&dtheta);
                if dn > 0.0 {
                    lipschitz = lipschitz.max(norm(&dg) / dn);
                    if !warned && cfg.step_size * lipschitz >= 2.0 {
                        warned = true;
                        log::warn!(
                            "step_size {} times gradient Lipschitz estimate {:.3e} is at least 2; relying on backtracking",
                            cfg.step_size,
                            lipschitz
                        );
                    }
                }
                std::mem::swap(&mut theta, &mut trial);
                f = ft;
                g = gt;
                eta *= 1.5;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            stalled = true;
            break;
        }
        step += 1;
        let params = obj.reported_params(&theta);
        for (i, &v) in params.iter().enumerate() {
            param_min[i] = param_min[i].min(v);
            param_max[i] = param_max[i].max(v);
        }
        if step % cfg.record_every == 0 {
            points.push(report(&theta, f, &g, step));
        }
    }
    if norm(&g) < cfg.grad_tolerance || stalled {
        converged = true;
    }
    let last = report(&theta, f, &g, step);
    if points.last().map(|p| p.step) != Some(step) {
        points.push(last.clone());
    }
    Ok(Trajectory {
        points,
        converged,
        stalled,
        steps: step,
        final_params: last.params,
        final_loss: last.loss,
        final_grad_norm: last.grad_norm,
        param_min,
        param_max,
        lipschitz_estimate: lipschitz,
    })
}

/// Parameters `[α]` or `[α, β]` of a population loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PopModel {
    OneParam,
    TwoParam,
}

/// Gradient of the population loss at `params` (`[α]` or `[α, β]`).
pub fn grad_pop_loss(params: &[f64], t: usize, zm: &ZMoments, mode: GradientMode, fd_epsilon: f64) -> Result<Vec<f64>> {
    match (params.len(), mode) {
        (1, GradientMode::Analytic) => Ok(vec![pop_loss_one_param_grad(params[0], t, zm)]),
        (2, GradientMode::Analytic) => Ok(pop_loss_two_param_grad(params[0], params[1], t, zm).to_vec()),
        (1, GradientMode::FiniteDifference) => {
            Ok(central_difference(|p| pop_loss_one_param(p[0], t, zm), params, fd_epsilon))
        }
        (2, GradientMode::FiniteDifference) => {
            Ok(central_difference(|p| pop_loss_two_param(p[0], p[1], t, zm), params, fd_epsilon))
        }
        (n, _) => Err(Error::DimensionMismatch(format!("population loss has 1 or 2 parameters, got {n}"))),
    }
}

struct PopObjective<'a> {
    model: PopModel,
    t: usize,
    zm: &'a ZMoments,
    log: bool,
}

impl PopObjective<'_> {
    fn raw(&self, theta: &[f64]) -> f64 {
        match self.model {
            PopModel::OneParam => pop_loss_one_param(theta[0], self.t, self.zm),
            PopModel::TwoParam => pop_loss_two_param(theta[0], theta[1], self.t, self.zm),
        }
    }
}

impl Objective for PopObjective<'_> {
    fn dim(&self) -> usize {
        match self.model {
            PopModel::OneParam => 1,
            PopModel::TwoParam => 2,
        }
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let v = self.raw(theta);
        if self.log {
            v.ln()
        } else {
            v
        }
    }

    fn analytic_gradient(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let mut g = grad_pop_loss(theta, self.t, self.zm, GradientMode::Analytic, 0.0).ok()?;
        if self.log {
            let v = self.raw(theta);
            g.iter_mut().for_each(|x| *x /= v);
        }
        Some(g)
    }

    fn reported_loss(&self, _theta: &[f64], value: f64) -> f64 {
        if self.log {
            value.exp()
        } else {
            value
        }
    }
}

/// `G_T(β)` with `α = α*(β)`; reports `(α*(β), β)` and `F_T(β)`.
struct ProfiledObjective<'a> {
    t: usize,
    zm: &'a ZMoments,
}

impl Objective for ProfiledObjective<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, theta: &[f64]) -> f64 {
        if theta[0] == 0.0 {
            return f64::NAN;
        }
        log_reduced_loss_with_grad(theta[0], self.t, self.zm).0
    }

    fn analytic_gradient(&self, theta: &[f64]) -> Option<Vec<f64>> {
        (theta[0] != 0.0).then(|| vec![log_reduced_loss_with_grad(theta[0], self.t, self.zm).1])
    }

    fn reported_loss(&self, theta: &[f64], _value: f64) -> f64 {
        reduced_loss(theta[0], self.t, self.zm)
    }

    fn reported_params(&self, theta: &[f64]) -> Vec<f64> {
        vec![profiled_alpha(theta[0], self.t, self.zm).unwrap_or(f64::NAN), theta[0]]
    }
}

/// Empirical query loss of a CA model; `prompts` are pre-reduced to
/// [`PromptStats`] so one evaluation is `O(N d T)`.
struct EmpiricalCaObjective<'a> {
    template: CaParams,
    stats: &'a [PromptStats],
    targets: &'a [f64],
}

impl Objective for EmpiricalCaObjective<'_> {
    fn dim(&self) -> usize {
        self.template.variant.n_params()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let p = self.template.with_free_params(theta);
        let sq = map_slice(&(0..self.stats.len()).collect::<Vec<_>>(), |&i| {
            let e = self.targets[i] - self.stats[i].predict_ca(&p);
            e * e
        });
        mean(&sq)
    }
}

/// Empirical query loss of a single LSA layer, with the exact gradient.
///
/// `θ = [p; vec(K)]` where `p` is the last row of `W_PV` and `K` the first
/// `d` columns of `W_KQ`; the prediction `pᵀ G K x_q` depends on nothing else.
struct EmpiricalLsaObjective<'a> {
    d: usize,
    stats: &'a [PromptStats],
    targets: &'a [f64],
}

impl EmpiricalLsaObjective<'_> {
    fn split(&self, theta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.d + 1;
        (
            DVector::from_column_slice(&theta[..n]),
            DMatrix::from_column_slice(n, self.d, &theta[n..]),
        )
    }
}

pub(crate) fn lsa_from_theta(d: usize, theta: &[f64]) -> LsaParams {
    let n = d + 1;
    let mut lsa = LsaParams::zeros(d);
    for j in 0..n {
        lsa.w_pv[(d, j)] = theta[j];
    }
    let k = DMatrix::from_column_slice(n, d, &theta[n..]);
    lsa.w_kq.view_mut((0, 0), (n, d)).copy_from(&k);
    lsa
}

pub(crate) fn lsa_to_theta(lsa: &LsaParams) -> Vec<f64> {
    let mut theta: Vec<f64> = lsa.readout_row().iter().copied().collect();
    theta.extend(lsa.query_block().iter().copied());
    theta
}

impl Objective for EmpiricalLsaObjective<'_> {
    fn dim(&self) -> usize {
        (self.d + 1) * (self.d + 1)
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let (p, k) = self.split(theta);
        let sq = map_slice(&(0..self.stats.len()).collect::<Vec<_>>(), |&i| {
            let e = self.targets[i] - self.stats[i].predict_lsa_parts(&p, &k);
            e * e
        });
        mean(&sq)
    }

    fn analytic_gradient(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let (p, k) = self.split(theta);
        let n = self.stats.len() as f64;
        let parts = map_slice(&(0..self.stats.len()).collect::<Vec<_>>(), |&i| {
            let s = &self.stats[i];
            let kx = &k * &s.x_q;
            let gkx = &s.gram * &kx;
            let r = self.targets[i] - p.dot(&gkx);
            let gp = &s.gram * &p;
            // ∂/∂p = −2r G K x_q, ∂/∂K = −2r (G p) x_qᵀ
            let mut out: Vec<f64> = gkx.iter().map(|v| -2.0 * r * v).collect();
            out.extend((&gp * s.x_q.transpose()).iter().map(|v| -2.0 * r * v));
            out
        });
        // Fixed-order reduction over prompts for each coordinate.
        let dim = theta.len();
        let mut grad = vec![0.0; dim];
        let mut column = vec![0.0; parts.len()];
        for (j, gj) in grad.iter_mut().enumerate() {
            for (c, part) in column.iter_mut().zip(&parts) {
                *c = part[j];
            }
            *gj = crate::parallel::pairwise_sum(&column) / n;
        }
        Some(grad)
    }
}

/// Which model to train.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    SingleLsa,
    Ca(CaParams),
}

/// Training data: the closed-form population loss or a batch of prompts.
#[derive(Debug, Clone, Copy)]
pub enum TrainData<'a> {
    Population(&'a ZMoments),
    Empirical { prompts: &'a [Prompt], target: Target },
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: ModelParams,
    pub trajectory: Trajectory,
    /// `true` when a two-parameter population run did not start from
    /// `β₀ ∈ (−2/Z̄, 0)`, `α₀ = α*(β₀)`.
    pub outside_hypotheses: bool,
}

/// Does `(α₀, β₀)` satisfy the two-parameter initialization window?
pub fn in_theorem_window(alpha0: f64, beta0: f64, t: usize, zm: &ZMoments) -> bool {
    if !(beta0 > -2.0 / zm.z_upper() && beta0 < 0.0) {
        return false;
    }
    match profiled_alpha(beta0, t, zm) {
        Ok(a) => (alpha0 - a).abs() <= 1e-8 * (1.0 + a.abs()),
        Err(_) => false,
    }
}

/// Initial point: CA scalars via `template` (`α` and `β`), LSA via `lsa`.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelInit {
    Ca(Vec<f64>),
    Lsa(LsaParams),
}

/// Standard LSA initialization: `v = 1`, everything else 0.
pub fn default_lsa_init(d: usize) -> LsaParams {
    let mut p = LsaParams::zeros(d);
    p.w_pv[(d, d)] = 1.0;
    p
}

/// Train a model by gradient descent.
pub fn train(kind: &ModelKind, init: &ModelInit, cfg: &OptimConfig, data: TrainData<'_>) -> Result<Trained> {
    cfg.validate()?;
    match (kind, data) {
        (ModelKind::Ca(template), TrainData::Population(zm)) => train_population(template, init, cfg, zm),
        (ModelKind::Ca(template), TrainData::Empirical { prompts, target }) => {
            let ModelInit::Ca(theta0) = init else {
                return Err(Error::InvalidConfig("CA model needs a scalar initialization".into()));
            };
            if !template.has_linear_structure() {
                return Err(Error::InvalidConfig("empirical training needs the linear, unnormalized kernel".into()));
            }
            let (stats, targets) = reduce_prompts(prompts, target)?;
            let obj = EmpiricalCaObjective {
                template: template.clone(),
                stats: &stats,
                targets: &targets,
            };
            let mut cfg = cfg.clone();
            if cfg.log_loss == Some(true) {
                log::warn!("log-scale descent is only used for population losses; ignoring");
            }
            cfg.gradient_mode = GradientMode::FiniteDifference;
            let traj = gradient_descent(&obj, theta0, &cfg)?;
            let model = ModelParams::Ca(template.with_free_params(&traj.final_params));
            Ok(Trained {
                model,
                trajectory: traj,
                outside_hypotheses: false,
            })
        }
        (ModelKind::SingleLsa, TrainData::Empirical { prompts, target }) => {
            let ModelInit::Lsa(lsa0) = init else {
                return Err(Error::InvalidConfig("LSA model needs a matrix initialization".into()));
            };
            let (stats, targets) = reduce_prompts(prompts, target)?;
            let d = lsa0.dim();
            if stats[0].x_q.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "LSA init has d={d}, prompts have d={}",
                    stats[0].x_q.len()
                )));
            }
            let obj = EmpiricalLsaObjective {
                d,
                stats: &stats,
                targets: &targets,
            };
            let traj = gradient_descent(&obj, &lsa_to_theta(lsa0), cfg)?;
            Ok(Trained {
                model: ModelParams::SingleLsa(lsa_from_theta(d, &traj.final_params)),
                trajectory: traj,
                outside_hypotheses: false,
            })
        }
        (ModelKind::SingleLsa, TrainData::Population(_)) => Err(Error::InvalidConfig(
            "single LSA has no closed-form population loss here; train it on prompts".into(),
        )),
    }
}

fn reduce_prompts(prompts: &[Prompt], target: Target) -> Result<(Vec<PromptStats>, Vec<f64>)> {
    if prompts.is_empty() {
        return Err(Error::Empty("training prompts"));
    }
    let stats: Result<Vec<PromptStats>> = map_slice(prompts, |p| PromptStats::new(p.inputs())).into_iter().collect();
    let targets = prompts.iter().map(|p| target.value(p)).collect();
    Ok((stats?, targets))
}

fn train_population(template: &CaParams, init: &ModelInit, cfg: &OptimConfig, zm: &ZMoments) -> Result<Trained> {
    let ModelInit::Ca(theta0) = init else {
        return Err(Error::InvalidConfig("CA model needs a scalar initialization".into()));
    };
    let t = template.depth;
    let log = cfg.log_loss.unwrap_or(true);
    let (model, outside) = match template.variant {
        CaVariant::LcaOneParam => (PopModel::OneParam, false),
        CaVariant::LcaTwoParam => {
            if theta0.len() != 2 {
                return Err(Error::DimensionMismatch("two-parameter init needs [alpha, beta]".into()));
            }
            (PopModel::TwoParam, !in_theorem_window(theta0[0], theta0[1], t, zm))
        }
        v => {
            return Err(Error::InvalidConfig(format!(
                "no closed-form population loss for {}",
                v.name()
            )))
        }
    };
    if outside {
        log::warn!("two-parameter initialization is outside the theorem hypotheses");
    }
    let traj = match (model, cfg.two_param_scheme) {
        (PopModel::TwoParam, TwoParamScheme::Profiled) => {
            let obj = ProfiledObjective { t, zm };
            gradient_descent(&obj, &theta0[1..], cfg)?
        }
        _ => {
            let obj = PopObjective { model, t, zm, log };
            gradient_descent(&obj, theta0, cfg)?
        }
    };
    let model = ModelParams::Ca(template.with_free_params(&traj.final_params));
    Ok(Trained {
        model,
        trajectory: traj,
        outside_hypotheses: outside,
    })
}

/// Golden-section search to bracket width `1e-10`.
///
/// The bracket is sampled afterwards; if the samples are not unimodal, or the
/// minimum sits on the bracket edge, the bracket is widened once and the
/// search repeated.
pub fn minimize_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<(f64, f64)> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidInput(format!("bad bracket [{lo}, {hi}]")));
    }
    let attempt = |a: f64, b: f64| -> std::result::Result<(f64, f64), String> {
        const SAMPLES: usize = 65;
        let xs: Vec<f64> = (0..SAMPLES).map(|i| a + (b - a) * i as f64 / (SAMPLES - 1) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        if ys.iter().any(|y| y.is_nan()) {
            return Err("objective is NaN on the bracket".into());
        }
        let imin = (0..SAMPLES).min_by(|&i, &j| ys[i].total_cmp(&ys[j])).expect("nonempty");
        let slack = |y: f64| 1e-12 * y.abs();
        let down = (0..imin).all(|i| ys[i + 1] <= ys[i] + slack(ys[i]));
        let up = (imin..SAMPLES - 1).all(|i| ys[i + 1] >= ys[i] - slack(ys[i]));
        if !(down && up) {
            return Err(format!("samples on [{a}, {b}] are not unimodal"));
        }
        if imin == 0 || imin == SAMPLES - 1 {
            return Err(format!("minimum on the edge of [{a}, {b}]"));
        }
        Ok(golden_section(&f, xs[imin - 1], xs[imin + 1]))
    };
    match attempt(lo, hi) {
        Ok(r) => Ok(r),
        Err(first) => {
            let w = hi - lo;
            attempt(lo - 0.5 * w, hi + 0.5 * w)
                .map_err(|second| Error::NotUnimodal(format!("{first}; after widening: {second}")))
        }
    }
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-10 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    [(c, fc), (d, fd), (x, fx)]
        .into_iter()
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .expect("nonempty")
}
