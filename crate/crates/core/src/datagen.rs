//! Latent-factor prompt generation.
//!
//! A task is a pair `(m, ζ)`. Each token carries a latent `u ~ N(0, 1)` that
//! drives both covariate modalities and the response:
//!
//! ```text
//! x_i = u_i m + noise_i,   noise_i ~ N(0, I_d),   y_i = ζ u_i
//! ```
//!
//! so that, conditional on the task, `x ~ N(0, Λ)` with `Λ = I + m mᵀ` and the
//! Bayes-optimal predictor is `⟨w, x⟩` with `w = ζ m / (1 + ‖m‖²)`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Law of the modality norm `‖m‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormLaw {
    /// `‖m‖ ~ Unif(lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    /// `‖m‖ = radius` almost surely. Violates the non-degeneracy assumption;
    /// only useful for tests and counterexamples.
    PointMass { radius: f64 },
}

/// Law of the direction `m / ‖m‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DirectionLaw {
    UniformSphere,
    /// A fixed direction; normalized on use.
    Fixed { direction: Vec<f64> },
}

/// Law of the response coefficient `ζ`. All variants have mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZetaLaw {
    #[default]
    StandardNormal,
    /// ±1 with equal probability.
    Rademacher,
    /// Uniform on `[-√3, √3]`.
    UniformSymmetric,
}

impl ZetaLaw {
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ZetaLaw::StandardNormal => StandardNormal.sample(rng),
            ZetaLaw::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            ZetaLaw::UniformSymmetric => {
                let s = 3f64.sqrt();
                rng.random_range(-s..s)
            }
        }
    }
}

/// Distribution of the stacked modality vector `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MDistribution {
    pub norm_law: NormLaw,
    #[serde(default = "default_direction")]
    pub direction_law: DirectionLaw,
}

fn default_direction() -> DirectionLaw {
    DirectionLaw::UniformSphere
}

impl Default for MDistribution {
    /// `‖m‖ ~ Unif(0, 2)` with a uniformly random direction.
    fn default() -> Self {
        MDistribution {
            norm_law: NormLaw::Uniform { lo: 0.0, hi: 2.0 },
            direction_law: DirectionLaw::UniformSphere,
        }
    }
}

impl MDistribution {
    /// Uniform norm law on `[lo, hi]`; requires `0 ≤ lo < hi < ∞`.
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let dist = MDistribution {
            norm_law: NormLaw::Uniform { lo, hi },
            direction_law: DirectionLaw::UniformSphere,
        };
        dist.validate()?;
        Ok(dist)
    }

    /// Degenerate norm law. Skips the non-degeneracy check on purpose.
    pub fn point_mass(radius: f64) -> Self {
        MDistribution {
            norm_law: NormLaw::PointMass { radius },
            direction_law: DirectionLaw::UniformSphere,
        }
    }

    pub fn with_direction(mut self, direction: Vec<f64>) -> Self {
        self.direction_law = DirectionLaw::Fixed { direction };
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.norm_law {
            NormLaw::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi) {
                    return Err(Error::InvalidConfig(format!(
                        "norm law needs 0 <= lo < hi < inf, got [{lo}, {hi}]"
                    )));
                }
            }
            NormLaw::PointMass { radius } => {
                if !(radius.is_finite() && radius >= 0.0) {
                    return Err(Error::InvalidConfig(format!("bad point-mass radius {radius}")));
                }
            }
        }
        if let DirectionLaw::Fixed { direction } = &self.direction_law {
            let n = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(n.is_finite() && n > 0.0) {
                return Err(Error::InvalidConfig("fixed direction must be a nonzero finite vector".into()));
            }
        }
        Ok(())
    }

    /// `true` unless the norm law has a single atom.
    pub fn is_non_degenerate(&self) -> bool {
        matches!(self.norm_law, NormLaw::Uniform { .. })
    }

    /// Support `[a, b]` of `‖m‖`.
    pub fn norm_support(&self) -> (f64, f64) {
        match self.norm_law {
            NormLaw::Uniform { lo, hi } => (lo, hi),
            NormLaw::PointMass { radius } => (radius, radius),
        }
    }

    /// Essential infimum of `‖m‖²`.
    pub fn m_lower(&self) -> f64 {
        let (a, _) = self.norm_support();
        a * a
    }

    /// Essential supremum of `‖m‖²`.
    pub fn m_upper(&self) -> f64 {
        let (_, b) = self.norm_support();
        b * b
    }

    pub fn sample_norm<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.norm_law {
            NormLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            NormLaw::PointMass { radius } => radius,
        }
    }

    /// Draw `m ∈ R^dim`.
    pub fn sample<R: rand::Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> DVector<f64> {
        let radius = self.sample_norm(rng);
        let dir = match &self.direction_law {
            DirectionLaw::UniformSphere => loop {
                let v = DVector::from_fn(dim, |_, _| -> f64 { StandardNormal.sample(&mut *rng) });
                let n = v.norm();
                if n > 0.0 {
                    break v / n;
                }
            },
            DirectionLaw::Fixed { direction } => {
                let v = DVector::from_fn(dim, |i, _| direction.get(i).copied().unwrap_or(0.0));
                let n = v.norm();
                v / n
            }
        };
        dir * radius
    }
}

/// Dimensions and laws for the data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub d1: usize,
    pub d2: usize,
    #[serde(default)]
    pub m_dist: MDistribution,
    #[serde(default)]
    pub zeta_dist: ZetaLaw,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            d1: 5,
            d2: 5,
            m_dist: MDistribution::default(),
            zeta_dist: ZetaLaw::StandardNormal,
        }
    }
}

impl DataConfig {
    pub fn new(d1: usize, d2: usize, m_dist: MDistribution) -> Result<Self> {
        let cfg = DataConfig {
            d1,
            d2,
            m_dist,
            zeta_dist: ZetaLaw::StandardNormal,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Total covariate dimension `d = d1 + d2`.
    pub fn dim(&self) -> usize {
        self.d1 + self.d2
    }

    pub fn validate(&self) -> Result<()> {
        if self.d1 == 0 || self.d2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "both modality dimensions must be positive (d1={}, d2={})",
                self.d1, self.d2
            )));
        }
        self.m_dist.validate()?;
        if let DirectionLaw::Fixed { direction } = &self.m_dist.direction_law {
            if direction.len() != self.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "fixed direction has length {}, expected {}",
                    direction.len(),
                    self.dim()
                )));
            }
        }
        Ok(())
    }
}

/// Per-prompt latent quantities and the Bayes coefficient derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskParams {
    /// Stacked modality vector `[v; r]`.
    pub m: DVector<f64>,
    pub zeta: f64,
    /// Spike eigenvalue `Z = 1 + ‖m‖²`.
    pub z: f64,
    /// Bayes coefficient `ζ m / Z`.
    pub w: DVector<f64>,
}

impl TaskParams {
    pub fn new(m: DVector<f64>, zeta: f64) -> Self {
        let z = 1.0 + m.norm_squared();
        let w = &m * (zeta / z);
        TaskParams { m, zeta, z, w }
    }

    /// Split `m` back into its modality blocks `(v, r)`.
    pub fn modalities(&self, d1: usize) -> (DVector<f64>, DVector<f64>) {
        let d = self.m.len();
        (self.m.rows(0, d1).into_owned(), self.m.rows(d1, d - d1).into_owned())
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// Conditional variance `ζ² / Z` of the regression residual.
    pub fn noise_variance(&self) -> f64 {
        self.zeta * self.zeta / self.z
    }

    /// `Λ = I + m mᵀ`.
    pub fn population_covariance(&self) -> DMatrix<f64> {
        population_covariance(self)
    }

    /// `Λ⁻¹ = I − m mᵀ / Z` (Sherman–Morrison).
    pub fn precision(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::identity(d, d) - (&self.m * self.m.transpose()) / self.z
    }
}

/// One prompt: `L` context pairs plus a query pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    /// `d × L` context covariates, one token per column.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub x_q: DVector<f64>,
    pub y_q: f64,
    pub task: TaskParams,
    /// Latent `u` for the `L` context tokens followed by the query.
    /// Kept for white-box tests; never read by any model.
    pub latent: DVector<f64>,
}

/// The part of a prompt a model is allowed to see.
#[derive(Debug, Clone, Copy)]
pub struct PromptInputs<'a> {
    pub x: &'a DMatrix<f64>,
    pub y: &'a DVector<f64>,
    pub x_q: &'a DVector<f64>,
}

impl Prompt {
    pub fn context_len(&self) -> usize {
        self.x.ncols()
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn inputs(&self) -> PromptInputs<'_> {
        PromptInputs {
            x: &self.x,
            y: &self.y,
            x_q: &self.x_q,
        }
    }

    /// `⟨w, x_q⟩`.
    pub fn bayes_target(&self) -> f64 {
        bayes_predict(&self.task, &self.x_q)
    }
}

pub fn sample_task<R: rand::Rng + ?Sized>(cfg: &DataConfig, rng: &mut R) -> TaskParams {
    let m = cfg.m_dist.sample(cfg.dim(), rng);
    let zeta = cfg.zeta_dist.sample(rng);
    TaskParams::new(m, zeta)
}

/// Draw `L` context tokens and a query for a fixed task.
///
/// Draw order per token is `u` first, then the `d` noise coordinates, so a
/// given rng state always produces the same prompt.
pub fn sample_prompt<R: rand::Rng + ?Sized>(task: &TaskParams, context_len: usize, rng: &mut R) -> Prompt {
    let d = task.dim();
    let mut x = DMatrix::zeros(d, context_len);
    let mut y = DVector::zeros(context_len);
    let mut latent = DVector::zeros(context_len + 1);
    let token = |rng: &mut R| {
        let u: f64 = StandardNormal.sample(rng);
        let col = DVector::from_fn(d, |i, _| u * task.m[i] + Distribution::<f64>::sample(&StandardNormal, rng));
        (u, col)
    };
    for i in 0..context_len {
        let (u, col) = token(rng);
        x.set_column(i, &col);
        y[i] = task.zeta * u;
        latent[i] = u;
    }
    let (u_q, x_q) = token(rng);
    latent[context_len] = u_q;
    Prompt {
        x,
        y,
        x_q,
        y_q: task.zeta * u_q,
        task: task.clone(),
        latent,
    }
}

/// Sample a fresh task and a prompt of length `context_len` from it.
pub fn sample_task_and_prompt<R: rand::Rng + ?Sized>(cfg: &DataConfig, context_len: usize, rng: &mut R) -> Prompt {
    let task = sample_task(cfg, rng);
    sample_prompt(&task, context_len, rng)
}

/// Bayes-optimal prediction `⟨w, x_q⟩`.
pub fn bayes_predict(task: &TaskParams, x_q: &DVector<f64>) -> f64 {
    task.w.dot(x_q)
}

pub fn population_covariance(task: &TaskParams) -> DMatrix<f64> {
    let d = task.dim();
    DMatrix::identity(d, d) + &task.m * task.m.transpose()
}

/// `(1/L) X Xᵀ`.
pub fn sample_covariance(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() == 0 {
        return Err(Error::Empty("sample covariance of a prompt with no context tokens"));
    }
    Ok(x * x.transpose() / x.ncols() as f64)
}
