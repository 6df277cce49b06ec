//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three operations: the log-loss landscape of the two-parameter model, the
//! depth-`T` minimizer curve `α*_T`, and the test error of a fixed LCA model
//! as the context grows. The `compute_*` functions are plain Rust so they can
//! be tested natively; the exported wrappers only convert errors.

use mmicl::attention::{CaParams, ModelParams, PromptStats};
use mmicl::datagen::{sample_task_and_prompt, DataConfig, MDistribution};
use mmicl::losses::{alpha_star_limit, pop_loss_two_param};
use mmicl::quadrature::{QuadratureSpec, ZMoments};
use mmicl::rng::{stream, Purpose};
use mmicl::theory::alpha_star_t;
use mmicl::{Error, Result};
use wasm_bindgen::prelude::*;

/// Context lengths of the error curve: 2, 4, ..., 1024.
pub const CONTEXT_LENGTHS: [usize; 10] = [2, 4, 8, 16, 32, 64, 128, 256, 512, 1024];

fn moments(m_hi: f64, depth: usize) -> Result<ZMoments> {
    ZMoments::new(&MDistribution::uniform(0.0, m_hi)?, QuadratureSpec::default().for_depth(depth))
}

/// `log10 ℓ(α, β)` on `[0, 1] × [−1, 0]`, row-major with `β` as the row.
/// `‖m‖ ~ Unif(0, m_hi)`.
pub fn compute_landscape(depth: usize, resolution: usize, m_hi: f64) -> Result<Vec<f64>> {
    if depth == 0 || !(2..=400).contains(&resolution) {
        return Err(Error::InvalidInput("need depth >= 1 and 2 <= resolution <= 400".into()));
    }
    let zm = moments(m_hi, depth)?;
    let step = 1.0 / (resolution - 1) as f64;
    let mut out = Vec::with_capacity(resolution * resolution);
    for j in 0..resolution {
        let beta = -1.0 + j as f64 * step;
        for i in 0..resolution {
            out.push(pop_loss_two_param(i as f64 * step, beta, depth, &zm).log10());
        }
    }
    Ok(out)
}

/// `[α*_1, ..., α*_{t_max}, α*]`: the finite-depth minimizers followed by
/// their limit.
pub fn compute_alpha_star_curve(t_max: usize, m_hi: f64) -> Result<Vec<f64>> {
    if !(1..=500).contains(&t_max) {
        return Err(Error::InvalidInput("t_max must be in 1..=500".into()));
    }
    let mut out = Vec::with_capacity(t_max + 1);
    for t in 1..=t_max {
        out.push(alpha_star_t(t, &moments(m_hi, t)?)?);
    }
    out.push(alpha_star_limit(&moments(m_hi, 1)?));
    Ok(out)
}

/// Mean squared distance to the Bayes prediction of the two-parameter LCA
/// model `(α, β)` at each of [`CONTEXT_LENGTHS`], over `n_prompts` prompts
/// with `d1 = d2 = 5`.
pub fn compute_icl_error_curve(depth: usize, alpha: f64, beta: f64, n_prompts: usize, seed: u64) -> Result<Vec<f64>> {
    if n_prompts == 0 || n_prompts > 5000 {
        return Err(Error::InvalidInput("n_prompts must be in 1..=5000".into()));
    }
    let model = ModelParams::Ca(CaParams::two_param(alpha, beta, depth)?);
    let data = DataConfig::default();
    CONTEXT_LENGTHS
        .iter()
        .map(|&l| {
            let mut total = 0.0;
            for i in 0..n_prompts {
                let prompt = sample_task_and_prompt(&data, l, &mut stream(seed ^ l as u64, Purpose::Testing, i as u64));
                let e = prompt.bayes_target() - PromptStats::new(prompt.inputs())?.predict(&model)?;
                total += e * e;
            }
            Ok(total / n_prompts as f64)
        })
        .collect()
}

fn js<T>(r: Result<T>) -> std::result::Result<T, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn landscape(depth: usize, resolution: usize, m_hi: f64) -> std::result::Result<Vec<f64>, JsError> {
    js(compute_landscape(depth, resolution, m_hi))
}

#[wasm_bindgen]
pub fn alpha_star_curve(t_max: usize, m_hi: f64) -> std::result::Result<Vec<f64>, JsError> {
    js(compute_alpha_star_curve(t_max, m_hi))
}

#[wasm_bindgen]
pub fn icl_error_curve(
    depth: usize,
    alpha: f64,
    beta: f64,
    n_prompts: usize,
    seed: u32,
) -> std::result::Result<Vec<f64>, JsError> {
    js(compute_icl_error_curve(depth, alpha, beta, n_prompts, seed as u64))
}

#[wasm_bindgen]
pub fn context_lengths() -> Vec<f64> {
    CONTEXT_LENGTHS.iter().map(|&l| l as f64).collect()
}
