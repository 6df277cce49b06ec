//! Expectations over the spike eigenvalue `Z = 1 + ‖m‖²`.
//!
//! Every population loss is an expectation of a polynomial in `Z`. We
//! integrate over the norm `r = ‖m‖` with a fixed Gauss–Legendre rule, so a
//! rule with `n` nodes is exact for polynomials in `Z` of degree `< n`.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::datagen::{MDistribution, NormLaw};
use crate::error::{Error, Result};

pub const DEFAULT_NODES: usize = 256;
pub const MIN_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub node_count: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            node_count: DEFAULT_NODES,
        }
    }
}

impl QuadratureSpec {
    pub fn new(node_count: usize) -> Result<Self> {
        if node_count < MIN_NODES {
            return Err(Error::InvalidConfig(format!(
                "quadrature needs at least {MIN_NODES} nodes, got {node_count}"
            )));
        }
        Ok(QuadratureSpec { node_count })
    }

    /// Enough nodes to integrate the depth-`t` losses and their gradients
    /// exactly (degree `4t + 2` in `r`), never fewer than `self.node_count`.
    pub fn for_depth(self, t: usize) -> Self {
        QuadratureSpec {
            node_count: self.node_count.max(2 * t + 16),
        }
    }
}

/// Quadrature nodes for `Z` with probability weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ZMoments {
    z: Vec<f64>,
    prob: Vec<f64>,
    z_lower: f64,
    z_upper: f64,
    /// Sum of the raw Legendre weights mapped to `[a, b]`.
    raw_weight_sum: f64,
}

impl ZMoments {
    pub fn new(dist: &MDistribution, spec: QuadratureSpec) -> Result<Self> {
        dist.validate()?;
        if spec.node_count < MIN_NODES {
            return Err(Error::InvalidConfig(format!(
                "quadrature needs at least {MIN_NODES} nodes, got {}",
                spec.node_count
            )));
        }
        match dist.norm_law {
            NormLaw::Uniform { lo, hi } => {
                let n = NonZeroUsize::new(spec.node_count).expect("checked above");
                let rule = GaussLegendre::new(n);
                let half = 0.5 * (hi - lo);
                let mid = 0.5 * (hi + lo);
                let mut z = Vec::with_capacity(spec.node_count);
                let mut prob = Vec::with_capacity(spec.node_count);
                let mut raw = 0.0;
                for &(x, w) in rule.iter() {
                    let r = mid + half * x;
                    z.push(1.0 + r * r);
                    raw += half * w;
                    // density of Unif(lo, hi) is 1 / (2 half)
                    prob.push(0.5 * w);
                }
                Ok(ZMoments {
                    z,
                    prob,
                    z_lower: 1.0 + lo * lo,
                    z_upper: 1.0 + hi * hi,
                    raw_weight_sum: raw,
                })
            }
            NormLaw::PointMass { radius } => Ok(Self::point_mass(1.0 + radius * radius)),
        }
    }

    /// Default law and node count.
    pub fn default_law() -> Self {
        Self::new(&MDistribution::default(), QuadratureSpec::default()).expect("default law is valid")
    }

    /// `Z ≡ z0`. Degenerate; for tests and counterexamples only.
    pub fn point_mass(z0: f64) -> Self {
        ZMoments {
            z: vec![z0],
            prob: vec![1.0],
            z_lower: z0,
            z_upper: z0,
            raw_weight_sum: 0.0,
        }
    }

    pub fn z_lower(&self) -> f64 {
        self.z_lower
    }

    pub fn z_upper(&self) -> f64 {
        self.z_upper
    }

    pub fn is_degenerate(&self) -> bool {
        self.z_lower >= self.z_upper
    }

    pub fn node_count(&self) -> usize {
        self.z.len()
    }

    /// Legendre weights mapped onto the norm interval; sums to its length.
    pub fn raw_weight_sum(&self) -> f64 {
        self.raw_weight_sum
    }

    /// `(Z_i, P_i)` node/probability pairs.
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.z.iter().copied().zip(self.prob.iter().copied())
    }

    /// `E[g(Z)]`.
    pub fn expect(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.nodes().map(|(z, p)| p * g(z)).sum()
    }

    /// `E[W g(Z)]` with `W = (Z − 1)/Z`.
    pub fn expect_w(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.expect(|z| (z - 1.0) / z * g(z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_too_few_nodes() {
        assert!(QuadratureSpec::new(8).is_err());
        assert!(ZMoments::new(&MDistribution::default(), QuadratureSpec { node_count: 4 }).is_err());
    }

    #[test]
    fn probabilities_sum_to_one() {
        let zm = ZMoments::default_law();
        assert!((zm.expect(|_| 1.0) - 1.0).abs() < 1e-10);
        assert!((zm.raw_weight_sum() - 2.0).abs() < 1e-12);
        assert_eq!(zm.z_lower(), 1.0);
        assert_eq!(zm.z_upper(), 5.0);
    }

    #[test]
    fn uniform_moments() {
        // r ~ U(0,2): E[Z] = 1 + 4/3, E[Z²] = 1 + 8/3 + 16/5.
        let zm = ZMoments::default_law();
        assert!((zm.expect(|z| z) - 7.0 / 3.0).abs() < 1e-12);
        assert!((zm.expect(|z| z * z) - (1.0 + 8.0 / 3.0 + 16.0 / 5.0)).abs() < 1e-12);
        // E[1/Z] = atan(2)/2.
        assert!((zm.expect(|z| 1.0 / z) - 2f64.atan() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn depth_bump() {
        assert_eq!(QuadratureSpec::default().for_depth(10).node_count, 256);
        assert_eq!(QuadratureSpec::default().for_depth(200).node_count, 416);
    }
}
