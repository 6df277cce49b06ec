//! Fast invariant suite behind `mmicl check`.
//!
//! Each check compares two independent computations of the same quantity on
//! a handful of seeded random inputs and finishes in well under a second.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::attention::{
    ca_features, lca_embed, lca_embed_closed_form, lsa_forward, predict_inputs, CaParams, CaVariant, Embedding,
    FrozenReadout, ModelParams, PromptStats,
};
use crate::datagen::{sample_task, sample_task_and_prompt, DataConfig, MDistribution};
use crate::error::Result;
use crate::linalg::rel_frobenius;
use crate::losses::{
    pop_loss_one_param, pop_loss_one_param_grad, pop_loss_two_param, pop_loss_two_param_grad, profiled_alpha,
    reduced_loss, reduced_loss_profiled,
};
use crate::optim::central_difference;
use crate::quadrature::ZMoments;
use crate::rng::{seeded, stream, Purpose};
use crate::theory::{alpha_star_t, degenerate_counterexample, monte_carlo_pop_loss, theorem1_scan, LsaBlocks};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Check = fn() -> Result<(bool, String)>;

const CHECKS: [(&str, Check); 11] = [
    ("precision_inverts_covariance", precision_inverts_covariance),
    ("recurrence_matches_closed_form", recurrence_matches_closed_form),
    ("frozen_readout_identity", frozen_readout_identity),
    ("spectral_matches_recurrence", spectral_matches_recurrence),
    ("loss_matches_monte_carlo", loss_matches_monte_carlo),
    ("gradients_match_finite_differences", gradients_match_finite_differences),
    ("two_param_slice_is_one_param", two_param_slice_is_one_param),
    ("profiled_loss_identity", profiled_loss_identity),
    ("alpha_star_approaches_limit", alpha_star_approaches_limit),
    ("single_lsa_misses_bayes", single_lsa_misses_bayes),
    ("sampling_is_deterministic", sampling_is_deterministic),
];

pub fn names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

/// Run every check. Errors count as failures.
pub fn run_all() -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|&(name, f)| {
            let start = Instant::now();
            let (passed, detail) = match f() {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            CheckResult {
                name,
                passed,
                detail,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

fn gaussian(rows: usize, cols: usize, rng: &mut crate::rng::Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn worst(label: &str, values: impl IntoIterator<Item = f64>, tol: f64) -> (bool, String) {
    let w = values.into_iter().fold(0.0_f64, |a, v| if v.is_nan() { f64::INFINITY } else { a.max(v) });
    (w <= tol, format!("worst {label} {w:.3e} (tolerance {tol:.0e})"))
}

fn precision_inverts_covariance() -> Result<(bool, String)> {
    let data = DataConfig::default();
    let errs = (0..20).map(|i| {
        let task = sample_task(&data, &mut stream(11, Purpose::Misc, i));
        let prod = task.precision() * task.population_covariance();
        (prod - DMatrix::identity(task.dim(), task.dim())).amax()
    });
    Ok(worst("|Λ⁻¹Λ − I|", errs, 1e-12))
}

fn recurrence_matches_closed_form() -> Result<(bool, String)> {
    let mut rng = seeded(12);
    let mut errs = Vec::new();
    for _ in 0..20 {
        let (d, l) = (rng.random_range(2..6), rng.random_range(3..30));
        let x = gaussian(d, l, &mut rng);
        let y = DVector::from_fn(l, |_, _| StandardNormal.sample(&mut rng));
        let x_q = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let p = CaParams::two_param(rng.random_range(0.0..0.5), rng.random_range(-0.5..0.0), rng.random_range(1..13))?;
        let inputs = crate::datagen::PromptInputs { x: &x, y: &y, x_q: &x_q };
        let rec = lca_embed(inputs, &p)?;
        let closed = lca_embed_closed_form(crate::datagen::PromptInputs { x: &x, y: &y, x_q: &x_q }, &p)?;
        errs.push(rel_frobenius(&rec.f, &closed.embedding.f));
    }
    Ok(worst("relative difference", errs, 1e-10))
}

fn frozen_readout_identity() -> Result<(bool, String)> {
    let mut rng = seeded(13);
    let mut errs = Vec::new();
    for _ in 0..20 {
        let (d, l) = (rng.random_range(1..6), rng.random_range(1..40));
        let f = gaussian(d, l, &mut rng);
        let y = DVector::from_fn(l, |_, _| StandardNormal.sample(&mut rng));
        let x_q = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let e = Embedding::assemble(f.clone(), &y, &x_q)?;
        let out = lsa_forward(&e.e, &FrozenReadout::params(d))?;
        let direct = FrozenReadout::apply(&f, &y, &x_q);
        errs.push((out - direct).abs() / direct.abs().max(1.0));
    }
    Ok(worst("relative difference", errs, 1e-13))
}

fn spectral_matches_recurrence() -> Result<(bool, String)> {
    let data = DataConfig::new(3, 3, MDistribution::default())?;
    let mut errs = Vec::new();
    for (i, variant) in CaVariant::ALL.into_iter().enumerate() {
        let prompt = sample_task_and_prompt(&data, 50, &mut stream(14, Purpose::Misc, i as u64));
        let p = CaParams::new(variant, 0.2, -0.15, 6)?;
        let f = ca_features(&prompt.x, &p)?;
        let rec = FrozenReadout::apply(&f, &prompt.y, &prompt.x_q);
        let spec = PromptStats::new(prompt.inputs())?.predict_ca(&p);
        let via = predict_inputs(prompt.inputs(), &ModelParams::Ca(p))?;
        errs.push((rec - spec).abs().max((rec - via).abs()) / rec.abs().max(1.0));
    }
    Ok(worst("relative difference", errs, 1e-10))
}

fn loss_matches_monte_carlo() -> Result<(bool, String)> {
    let data = DataConfig::default();
    let zm = ZMoments::default_law();
    let mut worst_z: f64 = 0.0;
    for (k, (a, b, t)) in [(0.3, -0.3, 2), (0.2, -0.25, 5), (0.35, -0.1, 3)].into_iter().enumerate() {
        let (mc, se) = monte_carlo_pop_loss(a, b, t, &data, 20_000, 15 + k as u64)?;
        worst_z = worst_z.max((mc - pop_loss_two_param(a, b, t, &zm)).abs() / se);
    }
    Ok((worst_z < 4.0, format!("largest |z| {worst_z:.2} (limit 4)")))
}

fn gradients_match_finite_differences() -> Result<(bool, String)> {
    let zm = ZMoments::default_law();
    let mut rng = seeded(16);
    let mut errs = Vec::new();
    for _ in 0..5 {
        let t = rng.random_range(1..11);
        let (a, b) = (rng.random_range(0.05..0.5), rng.random_range(-0.4..-0.05));
        let fd1 = central_difference(|th| pop_loss_one_param(th[0], t, &zm), &[a], 1e-6)[0];
        let g1 = pop_loss_one_param_grad(a, t, &zm);
        errs.push((fd1 - g1).abs() / g1.abs().max(1e-8));
        let fd2 = central_difference(|th| pop_loss_two_param(th[0], th[1], t, &zm), &[a, b], 1e-6);
        let g2 = pop_loss_two_param_grad(a, b, t, &zm);
        for i in 0..2 {
            errs.push((fd2[i] - g2[i]).abs() / g2[i].abs().max(1e-8));
        }
    }
    Ok(worst("relative gradient error", errs, 1e-5))
}

fn two_param_slice_is_one_param() -> Result<(bool, String)> {
    let zm = ZMoments::default_law();
    let errs = (0..=20).map(|i| {
        let a = i as f64 / 20.0;
        // Off the exact anti-diagonal so the general formula is exercised.
        let b = -a * (1.0 + 1e-15);
        let one = pop_loss_one_param(a, 10, &zm);
        (pop_loss_two_param(a, b, 10, &zm) - one).abs() / one.abs().max(1.0)
    });
    Ok(worst("difference relative to max(1, ℓ)", errs, 1e-12))
}

fn profiled_loss_identity() -> Result<(bool, String)> {
    let zm = ZMoments::default_law();
    let mut errs = Vec::new();
    for i in 1..10 {
        let beta = -0.04 * i as f64;
        let t = 10;
        let a = profiled_alpha(beta, t, &zm)?;
        errs.push((reduced_loss(beta, t, &zm) - reduced_loss_profiled(beta, t, &zm)).abs());
        errs.push((pop_loss_two_param(a, beta, t, &zm) - reduced_loss(beta, t, &zm)).abs());
    }
    Ok(worst("absolute difference", errs, 1e-10))
}

fn alpha_star_approaches_limit() -> Result<(bool, String)> {
    let zm = ZMoments::default_law();
    let a = alpha_star_t(200, &zm)?;
    let gap = (a - 1.0 / 3.0).abs();
    Ok((gap < 1e-2, format!("α*_200 = {a:.6}, gap {gap:.3e} (limit 1e-2)")))
}

fn single_lsa_misses_bayes() -> Result<(bool, String)> {
    let data = DataConfig::default();
    let blocks = LsaBlocks::random(data.dim(), 0.5, &mut seeded(17));
    let report = theorem1_scan(&blocks, &data, 2000, 17)?;
    // The detector itself must fire on the degenerate law it is built for.
    let point = DataConfig::new(5, 5, MDistribution::point_mass(1.0))?;
    let control = theorem1_scan(&degenerate_counterexample(10, 2.0), &point, 200, 17)?;
    Ok((
        report.lsa_fails() && control.fraction_below == 1.0,
        format!(
            "min ‖ŵ − w‖ = {:.3e}; degenerate control matches on {:.0}% of tasks",
            report.min(),
            100.0 * control.fraction_below
        ),
    ))
}

fn sampling_is_deterministic() -> Result<(bool, String)> {
    let data = DataConfig::default();
    let draw = || sample_task_and_prompt(&data, 30, &mut stream(18, Purpose::Training, 4));
    let same = draw() == draw();
    Ok((same, format!("identical prompts from identical streams: {same}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let results = run_all();
        assert_eq!(results.len(), names().len());
        for r in &results {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
