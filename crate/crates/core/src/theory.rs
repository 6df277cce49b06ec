//! Executable forms of the structural results: why a single LSA layer cannot
//! match the Bayes predictor, and where the deep-model minimizers go.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::attention::{lsa_forward, raw_embedding, LsaParams};
use crate::datagen::{sample_prompt, sample_task, DataConfig, TaskParams};
use crate::error::{Error, Result};
use crate::losses::{alpha_star_limit, pop_loss_one_param, pop_loss_one_param_grad};
use crate::optim::minimize_1d;
use crate::parallel::{map_indexed, mean_se};
use crate::quadrature::ZMoments;
use crate::rng::{stream, Purpose};

/// Block view of the LSA weights that reach the prediction:
/// `W_KQ = [[A, b′], [bᵀ, c]]` and last row of `W_PV = [uᵀ, v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LsaBlocks {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub b_prime: DVector<f64>,
    pub c: f64,
    pub u: DVector<f64>,
    pub v: f64,
}

impl LsaBlocks {
    pub fn zeros(d: usize) -> Self {
        LsaBlocks {
            a: DMatrix::zeros(d, d),
            b: DVector::zeros(d),
            b_prime: DVector::zeros(d),
            c: 0.0,
            u: DVector::zeros(d),
            v: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn from_params(p: &LsaParams) -> Self {
        let d = p.dim();
        LsaBlocks {
            a: p.w_kq.view((0, 0), (d, d)).into_owned(),
            b: p.w_kq.row(d).columns(0, d).transpose(),
            b_prime: p.w_kq.view((0, d), (d, 1)).column(0).into_owned(),
            c: p.w_kq[(d, d)],
            u: p.w_pv.row(d).columns(0, d).transpose(),
            v: p.w_pv[(d, d)],
        }
    }

    /// Reassemble; rows of `W_PV` other than the last are zero.
    pub fn to_params(&self) -> LsaParams {
        let d = self.dim();
        let mut p = LsaParams::zeros(d);
        p.w_kq.view_mut((0, 0), (d, d)).copy_from(&self.a);
        p.w_kq.view_mut((d, 0), (1, d)).copy_from(&self.b.transpose());
        p.w_kq.view_mut((0, d), (d, 1)).copy_from(&self.b_prime);
        p.w_kq[(d, d)] = self.c;
        p.w_pv.view_mut((d, 0), (1, d)).copy_from(&self.u.transpose());
        p.w_pv[(d, d)] = self.v;
        p
    }

    /// Independent `N(0, scale²)` entries.
    pub fn random(d: usize, scale: f64, rng: &mut crate::rng::Rng) -> Self {
        let mut g = || scale * Distribution::<f64>::sample(&StandardNormal, &mut *rng);
        LsaBlocks {
            a: DMatrix::from_fn(d, d, |_, _| g()),
            b: DVector::from_fn(d, |_, _| g()),
            b_prime: DVector::from_fn(d, |_, _| g()),
            c: g(),
            u: DVector::from_fn(d, |_, _| g()),
            v: g(),
        }
    }
}

/// Large-context limit of the LSA regression vector for one task:
/// `ŵᵀ = uᵀΛA + ((uᵀm) bᵀ + v mᵀA) ζ + v bᵀ ζ²`.
pub fn lsa_limiting_weights(blocks: &LsaBlocks, task: &TaskParams) -> DVector<f64> {
    let m = &task.m;
    let zeta = task.zeta;
    let lambda = task.population_covariance();
    let row = blocks.u.transpose() * lambda * &blocks.a
        + (blocks.b.transpose() * blocks.u.dot(m) + m.transpose() * &blocks.a * blocks.v) * zeta
        + blocks.b.transpose() * (blocks.v * zeta * zeta);
    row.transpose()
}

pub const MISMATCH_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchReport {
    /// `‖ŵ − w‖` per task, in sampling order.
    pub norms: Vec<f64>,
    /// Quantiles at `QUANTILE_LEVELS`.
    pub quantiles: Vec<f64>,
    pub threshold: f64,
    pub fraction_below: f64,
    /// Scope of the scan: the laws actually sampled.
    pub note: String,
}

pub const QUANTILE_LEVELS: [f64; 7] = [0.0, 0.01, 0.25, 0.5, 0.75, 0.99, 1.0];

impl MismatchReport {
    pub fn min(&self) -> f64 {
        self.quantiles[0]
    }

    /// Single-layer LSA fails on this law when no task is matched.
    pub fn lsa_fails(&self) -> bool {
        self.fraction_below == 0.0
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sample `n_tasks` tasks and measure how far the LSA limit is from Bayes.
pub fn theorem1_scan(blocks: &LsaBlocks, data: &DataConfig, n_tasks: usize, seed: u64) -> Result<MismatchReport> {
    data.validate()?;
    if n_tasks == 0 {
        return Err(Error::Empty("theorem1_scan needs at least one task"));
    }
    if blocks.dim() != data.dim() {
        return Err(Error::DimensionMismatch(format!(
            "blocks have d={}, data has d={}",
            blocks.dim(),
            data.dim()
        )));
    }
    let norms = map_indexed(n_tasks, |i| {
        let task = sample_task(data, &mut stream(seed, Purpose::Scan, i as u64));
        (lsa_limiting_weights(blocks, &task) - &task.w).norm()
    });
    let mut sorted = norms.clone();
    sorted.sort_by(f64::total_cmp);
    let quantiles = QUANTILE_LEVELS.iter().map(|&q| quantile(&sorted, q)).collect();
    let below = norms.iter().filter(|&&n| n < MISMATCH_THRESHOLD).count();
    Ok(MismatchReport {
        norms,
        quantiles,
        threshold: MISMATCH_THRESHOLD,
        fraction_below: below as f64 / n_tasks as f64,
        note: format!(
            "scan restricted to norm law {:?} and zeta law {:?}",
            data.m_dist.norm_law, data.zeta_dist
        ),
    })
}

/// Blocks that match the Bayes predictor exactly when `Z ≡ z0`:
/// `A = I/z0`, `v = 1`, all else zero, so `ŵ = ζ m / z0`.
pub fn degenerate_counterexample(d: usize, z0: f64) -> LsaBlocks {
    let mut blocks = LsaBlocks::zeros(d);
    blocks.a = DMatrix::identity(d, d) / z0;
    blocks.v = 1.0;
    blocks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaStarRow {
    pub t: usize,
    pub alpha_star: f64,
    pub gap: f64,
}

/// Minimizer of the one-parameter loss: golden section on `[0, 1]`, then
/// bisection on the sign of `ℓ′` to remove the flat-bottom error.
pub fn alpha_star_t(t: usize, zm: &ZMoments) -> Result<f64> {
    let (x, _) = minimize_1d(|a| pop_loss_one_param(a, t, zm), 0.0, 1.0)?;
    let grad = |a: f64| pop_loss_one_param_grad(a, t, zm);
    let mut delta = 1e-8;
    let (mut lo, mut hi) = (x - delta, x + delta);
    while !(grad(lo) <= 0.0 && grad(hi) >= 0.0) {
        delta *= 4.0;
        if delta > 1e-2 {
            return Ok(x);
        }
        lo = x - delta;
        hi = x + delta;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if grad(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `(T, α*_T, |α*_T − α*|)` for each depth.
pub fn alpha_star_sequence(t_list: &[usize], zm: &ZMoments) -> Result<Vec<AlphaStarRow>> {
    if t_list.is_empty() {
        return Err(Error::Empty("depth list"));
    }
    let limit = alpha_star_limit(zm);
    t_list
        .iter()
        .map(|&t| {
            let a = alpha_star_t(t, zm)?;
            Ok(AlphaStarRow {
                t,
                alpha_star: a,
                gap: (a - limit).abs(),
            })
        })
        .collect()
}

/// One long-context LSA prediction with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LargeContextCheck {
    pub prediction: f64,
    pub limit: f64,
    /// Standard error of the context average behind the prediction.
    pub std_error: f64,
}

impl LargeContextCheck {
    pub fn z_score(&self) -> f64 {
        (self.prediction - self.limit) / self.std_error
    }
}

/// Simulate one prompt of length `l` and compare the LSA output with `⟨ŵ, x_q⟩`.
///
/// The output is `(1/L) Σ_i (pᵀe_i)(e_iᵀ K x_q)` plus an `O(1/L)` query term,
/// so the per-token products give the standard error.
pub fn simulate_large_context(blocks: &LsaBlocks, task: &TaskParams, l: usize, seed: u64) -> Result<LargeContextCheck> {
    let prompt = sample_prompt(task, l, &mut stream(seed, Purpose::MonteCarlo, 0));
    let params = blocks.to_params();
    let e = raw_embedding(prompt.inputs())?;
    let prediction = lsa_forward(&e, &params)?;
    let p = params.readout_row();
    let kx = params.query_block() * &prompt.x_q;
    let contrib: Vec<f64> = (0..l).map(|i| p.dot(&e.column(i)) * e.column(i).dot(&kx)).collect();
    let (_, se) = mean_se(&contrib);
    let limit = lsa_limiting_weights(blocks, task).dot(&prompt.x_q);
    Ok(LargeContextCheck {
        prediction,
        limit,
        std_error: se,
    })
}

/// Monte Carlo estimate of the two-parameter population loss, with its
/// standard error.
///
/// Each task runs the layer recurrence on the population covariance,
/// `v_t = v_{t−1} + α g + β Λ v_{t−1}` with `g = E[x y] = ζ m`, and scores
/// `(v_T − w)ᵀ Λ (v_T − w)`, the excess query error of the `L → ∞` model.
/// This shares no code with the quadrature path. Pass `β = −α` for the
/// one-parameter model.
pub fn monte_carlo_pop_loss(
    alpha: f64,
    beta: f64,
    t: usize,
    data: &DataConfig,
    n_tasks: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    data.validate()?;
    if n_tasks < 2 {
        return Err(Error::Empty("Monte Carlo needs at least two tasks"));
    }
    let errs = map_indexed(n_tasks, |i| {
        let task = sample_task(data, &mut stream(seed, Purpose::MonteCarlo, i as u64));
        // Λ v = v + m (mᵀv); Λ is never formed.
        let m = &task.m;
        let mut v = DVector::zeros(task.dim());
        for _ in 0..t {
            let lv = &v + m * m.dot(&v);
            v += m * (alpha * task.zeta) + lv * beta;
        }
        let r = v - &task.w;
        let mr = m.dot(&r);
        r.norm_squared() + mr * mr
    });
    Ok(mean_se(&errs))
}
