//! Empirical and population losses of the LCA models.
//!
//! Population losses take the `L → ∞` limit of the query loss and drop the
//! Bayes floor `E[1/Z]`. With `W = (Z − 1)/Z`, `u_T = (1 + βZ)^T` and
//! `S(Z, β) = Z Σ_{k<T} (1 + βZ)ᵏ`:
//!
//! ```text
//! one parameter:  ℓ(α)    = E[W (1 − αZ)^{2T}]
//! two parameters: ℓ(α, β) = E[W (αS − 1)²] = α²A(β) − 2αB(β) + E[W]
//! profiled:       F_T(β)  = min_α ℓ(α, β) = E[W] − B²/A
//! ```
//!
//! Every loss is evaluated in the form that stays accurate when it is tiny:
//! `ℓ` as a weighted mean of squares and `F_T` through its variance form.

use serde::{Deserialize, Serialize};

use crate::attention::{predict, ModelParams};
use crate::datagen::Prompt;
use crate::error::{Error, Result};
use crate::parallel::{map_slice, mean};
use crate::quadrature::ZMoments;

/// Exponents above this use `exp(n log|x|)` instead of repeated squaring.
const POW_SWITCH: usize = 1000;

/// `xⁿ` with sign tracking.
pub fn signed_pow(x: f64, n: usize) -> f64 {
    if n <= POW_SWITCH {
        return x.powi(n as i32);
    }
    if x == 0.0 {
        return 0.0;
    }
    let mag = (n as f64 * x.abs().ln()).exp();
    if x < 0.0 && n % 2 == 1 {
        -mag
    } else {
        mag
    }
}

/// `(S(Z, β), ∂S/∂β)`.
///
/// Uses the finite sum for moderate depth (no cancellation near `β = 0`) and
/// `(u_T − 1)/β` beyond it. At `β = 0` exactly the analytic limit `S = TZ`,
/// `∂S/∂β = Z² T(T − 1)/2` is returned.
pub fn s_series(z: f64, beta: f64, t: usize) -> (f64, f64) {
    let tf = t as f64;
    if beta == 0.0 {
        return (tf * z, z * z * tf * (tf - 1.0) / 2.0);
    }
    if t <= POW_SWITCH || (beta * z).abs() * tf < 1e-6 {
        let u = 1.0 + beta * z;
        let (mut s, mut ds, mut pw, mut prev) = (0.0, 0.0, 1.0, 0.0);
        for k in 0..t {
            s += pw;
            ds += k as f64 * prev;
            prev = pw;
            pw *= u;
        }
        return (z * s, z * z * ds);
    }
    let u = 1.0 + beta * z;
    let ut = signed_pow(u, t);
    let ut1 = signed_pow(u, t - 1);
    let s = (ut - 1.0) / beta;
    let ds = (tf * z * ut1 * beta - (ut - 1.0)) / (beta * beta);
    (s, ds)
}

/// `ℓ(α) = E[W (1 − αZ)^{2T}]`.
pub fn pop_loss_one_param(alpha: f64, t: usize, zm: &ZMoments) -> f64 {
    zm.expect_w(|z| signed_pow(1.0 - alpha * z, 2 * t))
}

/// `ℓ′(α) = −2T E[W Z (1 − αZ)^{2T−1}]`.
pub fn pop_loss_one_param_grad(alpha: f64, t: usize, zm: &ZMoments) -> f64 {
    -2.0 * t as f64 * zm.expect_w(|z| z * signed_pow(1.0 - alpha * z, 2 * t - 1))
}

/// `ℓ(α, β) = E[W (αS − 1)²]`. At `β = −α` this is the one-parameter loss.
pub fn pop_loss_two_param(alpha: f64, beta: f64, t: usize, zm: &ZMoments) -> f64 {
    if beta == -alpha {
        return pop_loss_one_param(alpha, t, zm);
    }
    zm.expect_w(|z| {
        let r = alpha * s_series(z, beta, t).0 - 1.0;
        r * r
    })
}

/// `(∂ℓ/∂α, ∂ℓ/∂β)`.
pub fn pop_loss_two_param_grad(alpha: f64, beta: f64, t: usize, zm: &ZMoments) -> [f64; 2] {
    let (mut ga, mut gb) = (0.0, 0.0);
    for (z, p) in zm.nodes() {
        let w = (z - 1.0) / z;
        let (s, ds) = s_series(z, beta, t);
        let r = alpha * s - 1.0;
        ga += p * w * 2.0 * r * s;
        gb += p * w * 2.0 * r * alpha * ds;
    }
    [ga, gb]
}

/// `A(β) = E[W S²]`, `B(β) = E[W S]` and their `β`-derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadCoefficients {
    pub a: f64,
    pub b: f64,
    pub da: f64,
    pub db: f64,
    pub ew: f64,
}

pub fn ab_coefficients(beta: f64, t: usize, zm: &ZMoments) -> QuadCoefficients {
    let mut c = QuadCoefficients {
        a: 0.0,
        b: 0.0,
        da: 0.0,
        db: 0.0,
        ew: 0.0,
    };
    for (z, p) in zm.nodes() {
        let pw = p * (z - 1.0) / z;
        let (s, ds) = s_series(z, beta, t);
        c.a += pw * s * s;
        c.b += pw * s;
        c.da += pw * 2.0 * s * ds;
        c.db += pw * ds;
        c.ew += pw;
    }
    c
}

/// `α*(β) = B(β)/A(β)`.
pub fn profiled_alpha(beta: f64, t: usize, zm: &ZMoments) -> Result<f64> {
    let c = ab_coefficients(beta, t, zm);
    if !(c.a >= 1e-14) {
        return Err(Error::Degenerate(format!("A({beta}) = {:e} is below 1e-14", c.a)));
    }
    Ok(c.b / c.a)
}

/// `F_T(β) = E[W] − B²/A`, the literal profiled form.
pub fn reduced_loss_profiled(beta: f64, t: usize, zm: &ZMoments) -> f64 {
    let c = ab_coefficients(beta, t, zm);
    c.ew - c.b * c.b / c.a
}

/// Moments of `u_T` under `dμ = (W/E[W]) dP`.
struct MuMoments {
    ew: f64,
    var: f64,
    den: f64,
    dvar: f64,
    dden: f64,
}

fn mu_moments(beta: f64, t: usize, zm: &ZMoments) -> MuMoments {
    let tf = t as f64;
    let nodes: Vec<(f64, f64, f64)> = zm
        .nodes()
        .map(|(z, p)| {
            let u = 1.0 + beta * z;
            (p * (z - 1.0) / z, signed_pow(u, t), tf * z * signed_pow(u, t - 1))
        })
        .collect();
    let ew: f64 = nodes.iter().map(|n| n.0).sum();
    let mean_u = nodes.iter().map(|n| n.0 * n.1).sum::<f64>() / ew;
    let mean_du = nodes.iter().map(|n| n.0 * n.2).sum::<f64>() / ew;
    let (mut var, mut den, mut dvar, mut dden) = (0.0, 0.0, 0.0, 0.0);
    for &(w, u, du) in &nodes {
        var += w * (u - mean_u) * (u - mean_u);
        den += w * (1.0 - u) * (1.0 - u);
        dvar += w * 2.0 * (u - mean_u) * (du - mean_du);
        dden -= w * 2.0 * (1.0 - u) * du;
    }
    MuMoments {
        ew,
        var: var / ew,
        den: den / ew,
        dvar: dvar / ew,
        dden: dden / ew,
    }
}

/// `ℓ(α*(0), 0)` evaluated directly.
fn reduced_loss_at_zero(t: usize, zm: &ZMoments) -> f64 {
    let tf = t as f64;
    let num = zm.expect_w(|z| z);
    let den = zm.expect_w(|z| z * z);
    let a = num / (tf * den);
    zm.expect_w(|z| {
        let r = a * tf * z - 1.0;
        r * r
    })
}

/// `F_T(β) = E[W] Var_μ(u_T) / E_μ[(1 − u_T)²]`.
pub fn reduced_loss(beta: f64, t: usize, zm: &ZMoments) -> f64 {
    if beta == 0.0 {
        return reduced_loss_at_zero(t, zm);
    }
    let m = mu_moments(beta, t, zm);
    m.ew * m.var / m.den
}

/// `G_T(β) = (1/2T) log(F_T(β)/E[W])`.
pub fn log_reduced_loss(beta: f64, t: usize, zm: &ZMoments) -> f64 {
    if beta == 0.0 {
        return (reduced_loss_at_zero(t, zm) / expected_w(zm)).ln() / (2.0 * t as f64);
    }
    let m = mu_moments(beta, t, zm);
    (m.var.ln() - m.den.ln()) / (2.0 * t as f64)
}

/// `(G_T(β), G_T′(β))`. Requires `β ≠ 0`.
pub fn log_reduced_loss_with_grad(beta: f64, t: usize, zm: &ZMoments) -> (f64, f64) {
    let m = mu_moments(beta, t, zm);
    let scale = 1.0 / (2.0 * t as f64);
    let g = (m.var.ln() - m.den.ln()) * scale;
    let dg = (m.dvar / m.var - m.dden / m.den) * scale;
    (g, dg)
}

/// `F_T′(β)` by the envelope theorem, `α*² A′ − 2α* B′`.
pub fn reduced_loss_grad(beta: f64, t: usize, zm: &ZMoments) -> f64 {
    let c = ab_coefficients(beta, t, zm);
    let a = c.b / c.a;
    a * a * c.da - 2.0 * a * c.db
}

/// `φ(α) = max(|1 − αZ̲|, |1 − αZ̄|)`.
pub fn phi(alpha: f64, zm: &ZMoments) -> f64 {
    (1.0 - alpha * zm.z_lower()).abs().max((1.0 - alpha * zm.z_upper()).abs())
}

/// `max(|1 + βZ̲|, |1 + βZ̄|)`, the pointwise limit of `exp G_T(β)`.
pub fn phi_beta(beta: f64, zm: &ZMoments) -> f64 {
    phi(-beta, zm)
}

/// `α* = 2/(Z̲ + Z̄)`.
pub fn alpha_star_limit(zm: &ZMoments) -> f64 {
    2.0 / (zm.z_lower() + zm.z_upper())
}

/// Irreducible error `E[1/Z]`.
pub fn bayes_floor(zm: &ZMoments) -> f64 {
    zm.expect(|z| 1.0 / z)
}

/// `E[W]`, the loss of the zero predictor.
pub fn expected_w(zm: &ZMoments) -> f64 {
    zm.expect_w(|_| 1.0)
}

/// What a prediction is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// The observed query label `y_q`.
    Label,
    /// The Bayes prediction `⟨w, x_q⟩`.
    #[default]
    Bayes,
}

impl Target {
    pub fn value(self, prompt: &Prompt) -> f64 {
        match self {
            Target::Label => prompt.y_q,
            Target::Bayes => prompt.bayes_target(),
        }
    }
}

/// Per-prompt squared errors, in prompt order.
pub fn squared_errors(model: &ModelParams, prompts: &[Prompt], target: Target) -> Result<Vec<f64>> {
    if prompts.is_empty() {
        return Err(Error::Empty("prompt list"));
    }
    map_slice(prompts, |p| {
        let e = target.value(p) - predict(p, model)?;
        Ok(e * e)
    })
    .into_iter()
    .collect()
}

/// Mean squared error over prompts.
pub fn empirical_loss(model: &ModelParams, prompts: &[Prompt], target: Target) -> Result<f64> {
    Ok(mean(&squared_errors(model, prompts, target)?))
}
