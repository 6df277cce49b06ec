//! Experiment configuration and its JSON schema.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::DataConfig;
use crate::error::{Error, Result};
use crate::losses::Target;
use crate::optim::OptimConfig;
use crate::quadrature::QuadratureSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Fig2,
    Fig3,
    AblationNoSkip,
    AblationDeepLsa,
    Landscape,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Fig2,
        ExperimentKind::Fig3,
        ExperimentKind::AblationNoSkip,
        ExperimentKind::AblationDeepLsa,
        ExperimentKind::Landscape,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Fig2 => "fig2",
            ExperimentKind::Fig3 => "fig3",
            ExperimentKind::AblationNoSkip => "ablation_no_skip",
            ExperimentKind::AblationDeepLsa => "ablation_deep_lsa",
            ExperimentKind::Landscape => "landscape",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown experiment {s:?}")))
    }
}

/// Optional pre-normalized surface, evaluated on a fixed prompt batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizedSurfaceSpec {
    pub resolution: usize,
    pub batch_size: usize,
    pub context_len: usize,
}

impl Default for NormalizedSurfaceSpec {
    fn default() -> Self {
        NormalizedSurfaceSpec {
            resolution: 50,
            batch_size: 64,
            context_len: 100,
        }
    }
}

/// Parameter grid for the landscape experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub alpha_range: [f64; 2],
    pub beta_range: [f64; 2],
    /// Points per axis, endpoints included.
    pub resolution: usize,
    pub normalized: Option<NormalizedSurfaceSpec>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            alpha_range: [0.0, 1.0],
            beta_range: [-1.0, 0.0],
            resolution: 200,
            normalized: None,
        }
    }
}

impl GridSpec {
    /// Evenly spaced points on `range`, endpoints included.
    pub fn axis(range: [f64; 2], resolution: usize) -> Vec<f64> {
        let [lo, hi] = range;
        let n = (resolution - 1) as f64;
        (0..resolution).map(|i| lo + (hi - lo) * i as f64 / n).collect()
    }

    pub fn alphas(&self) -> Vec<f64> {
        Self::axis(self.alpha_range, self.resolution)
    }

    pub fn betas(&self) -> Vec<f64> {
        Self::axis(self.beta_range, self.resolution)
    }
}

fn default_optim() -> OptimConfig {
    OptimConfig {
        max_steps: 20_000,
        grad_tolerance: 1e-8,
        ..OptimConfig::default()
    }
}

/// Everything an experiment depends on besides the code itself.
///
/// Field names follow the figure captions (`L_tr`, `N`, `T`, ...). Unknown
/// fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub data: DataConfig,
    /// Training context length.
    #[serde(rename = "L_tr")]
    pub l_tr: usize,
    /// Number of training prompts.
    #[serde(rename = "N")]
    pub n_train: usize,
    /// Depth of the CA models.
    #[serde(rename = "T")]
    pub depth: usize,
    #[serde(rename = "L_te_grid")]
    pub l_te_grid: Vec<usize>,
    #[serde(rename = "T_grid")]
    pub t_grid: Vec<usize>,
    /// Test context length of the depth sweep.
    #[serde(rename = "fig3_L_te")]
    pub fig3_l_te: usize,
    pub n_test_prompts: usize,
    pub n_repeats: usize,
    pub seed: u64,
    /// What test predictions are scored against.
    pub target_metric: Target,
    /// What training minimizes the squared error to.
    pub train_target: Target,
    pub grid: GridSpec,
    pub optim: OptimConfig,
    pub quadrature: QuadratureSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::Fig2,
            data: DataConfig::default(),
            l_tr: 100,
            n_train: 2000,
            depth: 10,
            l_te_grid: (1..=10).map(|k| 1usize << k).collect(),
            t_grid: (1..=20).collect(),
            fig3_l_te: 64,
            n_test_prompts: 1000,
            n_repeats: 10,
            seed: 0,
            target_metric: Target::Bayes,
            train_target: Target::Label,
            grid: GridSpec::default(),
            optim: default_optim(),
            quadrature: QuadratureSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn for_experiment(experiment: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment,
            ..Self::default()
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(s).map_err(|e| Error::InvalidConfig(format!("config JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        self.data.validate()?;
        self.optim.validate()?;
        QuadratureSpec::new(self.quadrature.node_count)?;
        if self.l_tr == 0 || self.n_train == 0 || self.depth == 0 || self.fig3_l_te == 0 {
            return bad("L_tr, N, T and fig3_L_te must be positive");
        }
        if self.n_test_prompts == 0 || self.n_repeats == 0 {
            return bad("n_test_prompts and n_repeats must be positive");
        }
        if self.l_te_grid.is_empty() || self.l_te_grid.contains(&0) {
            return bad("L_te_grid must be nonempty with positive entries");
        }
        if self.t_grid.is_empty() || self.t_grid.contains(&0) {
            return bad("T_grid must be nonempty with positive entries");
        }
        let g = &self.grid;
        for [lo, hi] in [g.alpha_range, g.beta_range] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad("grid ranges must be finite with lo < hi");
            }
        }
        if g.resolution < 2 {
            return bad("grid resolution must be at least 2");
        }
        if let Some(n) = &g.normalized {
            if n.resolution < 2 || n.batch_size == 0 || n.context_len == 0 {
                return bad("normalized surface needs resolution >= 2 and a nonempty batch");
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the compact JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_captions() {
        let c = ExperimentConfig::default();
        assert_eq!((c.l_tr, c.n_train, c.depth), (100, 2000, 10));
        assert_eq!(c.l_te_grid.first(), Some(&2));
        assert_eq!(c.l_te_grid.last(), Some(&1024));
        assert_eq!(c.t_grid.len(), 20);
        c.validate().unwrap();
    }

    #[test]
    fn json_round_trip_and_hash() {
        let c = ExperimentConfig::for_experiment(ExperimentKind::Fig3);
        let s = serde_json::to_string(&c).unwrap();
        let back = ExperimentConfig::from_json_str(&s).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        let mut other = c.clone();
        other.seed = 1;
        assert_ne!(other.hash(), c.hash());
    }

    #[test]
    fn partial_json_uses_defaults() {
        let c = ExperimentConfig::from_json_str(r#"{"experiment": "landscape", "seed": 7, "N": 50}"#).unwrap();
        assert_eq!(c.experiment, ExperimentKind::Landscape);
        assert_eq!(c.n_train, 50);
        assert_eq!(c.l_tr, 100);
    }

    #[test]
    fn rejects_bad_configs() {
        for s in [
            r#"{"experiment": "fig9"}"#,
            r#"{"N": 0}"#,
            r#"{"L_te_grid": []}"#,
            r#"{"grid": {"resolution": 1}}"#,
            r#"{"unknown_field": 1}"#,
        ] {
            assert!(matches!(ExperimentConfig::from_json_str(s), Err(Error::InvalidConfig(_))), "{s}");
        }
    }

    #[test]
    fn axis_includes_endpoints() {
        let a = GridSpec::axis([0.0, 1.0], 5);
        assert_eq!(a, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
