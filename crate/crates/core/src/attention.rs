//! Forward passes: single-layer LSA, the tied-weight CA stack, and baselines.
//!
//! All models read only `(X, y, x_q)` through [`PromptInputs`]; the latent
//! factors stored on a [`Prompt`] are never touched here.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datagen::{Prompt, PromptInputs};
use crate::error::{Error, Result};
use crate::linalg::geometric_sum;

/// Depth above which [`predict`] switches from the layer recurrence to the
/// closed form.
pub const CLOSED_FORM_DEPTH: usize = 32;

/// Weights of one linear self-attention layer on a `(d+1) × (L+1)` embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct LsaParams {
    pub w_pv: DMatrix<f64>,
    pub w_kq: DMatrix<f64>,
}

impl LsaParams {
    pub fn zeros(d: usize) -> Self {
        LsaParams {
            w_pv: DMatrix::zeros(d + 1, d + 1),
            w_kq: DMatrix::zeros(d + 1, d + 1),
        }
    }

    /// Covariate dimension `d` (the embedding has `d + 1` rows).
    pub fn dim(&self) -> usize {
        self.w_pv.nrows().saturating_sub(1)
    }

    fn check(&self, rows: usize) -> Result<()> {
        let shape_ok = |m: &DMatrix<f64>| m.nrows() == rows && m.ncols() == rows;
        if !shape_ok(&self.w_pv) || !shape_ok(&self.w_kq) {
            return Err(Error::DimensionMismatch(format!(
                "LSA weights are {}x{} and {}x{}, embedding has {rows} rows",
                self.w_pv.nrows(),
                self.w_pv.ncols(),
                self.w_kq.nrows(),
                self.w_kq.ncols()
            )));
        }
        Ok(())
    }

    /// Last row of `W_PV`: the only part that reaches the prediction.
    pub fn readout_row(&self) -> DVector<f64> {
        self.w_pv.row(self.w_pv.nrows() - 1).transpose()
    }

    /// First `d` columns of `W_KQ`: the only part that sees the query.
    pub fn query_block(&self) -> DMatrix<f64> {
        let d = self.dim();
        self.w_kq.columns(0, d).into_owned()
    }
}

/// The fixed readout applied on top of a CA embedding.
///
/// `W_PV` has a single 1 in the bottom-right corner and `W_KQ = diag(I_d, 0)`,
/// which makes the output exactly `yᵀ Fᵀ x_q / L`.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrozenReadout;

impl FrozenReadout {
    pub fn params(d: usize) -> LsaParams {
        let mut p = LsaParams::zeros(d);
        p.w_pv[(d, d)] = 1.0;
        for i in 0..d {
            p.w_kq[(i, i)] = 1.0;
        }
        p
    }

    /// `yᵀ Fᵀ x_q / L` without building the embedding.
    pub fn apply(f: &DMatrix<f64>, y: &DVector<f64>, x_q: &DVector<f64>) -> f64 {
        (f * y).dot(x_q) / f.ncols() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaVariant {
    /// `W^S = αI`, `W^V = −αI`, `W^K = W^Q = I`.
    LcaOneParam,
    /// `W^S = αI`, `W^V = βI`, `W^K = W^Q = I`.
    LcaTwoParam,
    /// No raw-data skip; `V = αX`.
    LcaNoSkip,
    /// Self-attention on `F` with `V = αF` and no raw-data skip.
    DeepLsaNoSkip,
    /// Self-attention on `F` with `V = βF` plus the skip `αX`.
    DeepLsaWithSkip,
}

impl CaVariant {
    pub const ALL: [CaVariant; 5] = [
        CaVariant::LcaOneParam,
        CaVariant::LcaTwoParam,
        CaVariant::LcaNoSkip,
        CaVariant::DeepLsaNoSkip,
        CaVariant::DeepLsaWithSkip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CaVariant::LcaOneParam => "lca_one_param",
            CaVariant::LcaTwoParam => "lca_two_param",
            CaVariant::LcaNoSkip => "lca_no_skip",
            CaVariant::DeepLsaNoSkip => "deep_lsa_no_skip",
            CaVariant::DeepLsaWithSkip => "deep_lsa_with_skip",
        }
    }

    /// Number of free scalars.
    pub fn n_params(self) -> usize {
        match self {
            CaVariant::LcaTwoParam | CaVariant::DeepLsaWithSkip => 2,
            _ => 1,
        }
    }

    fn is_cross(self) -> bool {
        matches!(self, CaVariant::LcaOneParam | CaVariant::LcaTwoParam | CaVariant::LcaNoSkip)
    }
}

/// Attention score map. Theory uses the identity; softmax is exploratory only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionKernel {
    #[default]
    Linear,
    /// Column-wise softmax of `Kᵀ Q / L` over the context tokens.
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaParams {
    pub variant: CaVariant,
    pub alpha: f64,
    /// Ignored by the one-parameter variants.
    #[serde(default)]
    pub beta: f64,
    pub depth: usize,
    /// Pre-normalize each layer's query input (per-token standardization).
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub kernel: AttentionKernel,
}

impl CaParams {
    pub fn new(variant: CaVariant, alpha: f64, beta: f64, depth: usize) -> Result<Self> {
        let p = CaParams {
            variant,
            alpha,
            beta,
            depth,
            normalize: false,
            kernel: AttentionKernel::Linear,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn one_param(alpha: f64, depth: usize) -> Result<Self> {
        Self::new(CaVariant::LcaOneParam, alpha, -alpha, depth)
    }

    pub fn two_param(alpha: f64, beta: f64, depth: usize) -> Result<Self> {
        Self::new(CaVariant::LcaTwoParam, alpha, beta, depth)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::InvalidConfig("CA depth must be at least 1".into()));
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::NonFinite("CA parameters"));
        }
        Ok(())
    }

    /// `(skip, value)` coefficients: `F_t = F_{t-1} + skip·X + value·attn(F_{t-1})`.
    pub fn effective_weights(&self) -> (f64, f64) {
        match self.variant {
            CaVariant::LcaOneParam => (self.alpha, -self.alpha),
            CaVariant::LcaTwoParam | CaVariant::DeepLsaWithSkip => (self.alpha, self.beta),
            CaVariant::LcaNoSkip | CaVariant::DeepLsaNoSkip => (0.0, self.alpha),
        }
    }

    /// Learnable scalars in a fixed order (`[α]` or `[α, β]`).
    pub fn free_params(&self) -> Vec<f64> {
        match self.variant.n_params() {
            1 => vec![self.alpha],
            _ => vec![self.alpha, self.beta],
        }
    }

    /// Inverse of [`CaParams::free_params`].
    pub fn with_free_params(&self, theta: &[f64]) -> Self {
        let mut p = self.clone();
        p.alpha = theta[0];
        if self.variant.n_params() == 2 {
            p.beta = theta[1];
        } else if self.variant == CaVariant::LcaOneParam {
            p.beta = -theta[0];
        }
        p
    }

    /// Linear kernel without normalization: the closed and spectral forms apply.
    pub fn has_linear_structure(&self) -> bool {
        self.kernel == AttentionKernel::Linear && !self.normalize
    }
}

/// Final CA output `F` and the assembled `E_F = [[F, x_q], [yᵀ, 0]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub f: DMatrix<f64>,
    pub e: DMatrix<f64>,
}

impl Embedding {
    pub fn assemble(f: DMatrix<f64>, y: &DVector<f64>, x_q: &DVector<f64>) -> Result<Self> {
        let (d, l) = f.shape();
        if y.len() != l || x_q.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "F is {d}x{l}, y has {} entries, x_q has {}",
                y.len(),
                x_q.len()
            )));
        }
        let mut e = DMatrix::zeros(d + 1, l + 1);
        e.view_mut((0, 0), (d, l)).copy_from(&f);
        e.view_mut((0, l), (d, 1)).copy_from(x_q);
        e.view_mut((d, 0), (1, l)).copy_from(&y.transpose());
        Ok(Embedding { f, e })
    }

    pub fn readout(&self, y: &DVector<f64>, x_q: &DVector<f64>) -> f64 {
        FrozenReadout::apply(&self.f, y, x_q)
    }
}

fn check_inputs(inputs: &PromptInputs<'_>) -> Result<(usize, usize)> {
    let (d, l) = inputs.x.shape();
    if l == 0 {
        return Err(Error::Empty("prompt has no context tokens"));
    }
    if inputs.y.len() != l || inputs.x_q.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "X is {d}x{l}, y has {} entries, x_q has {}",
            inputs.y.len(),
            inputs.x_q.len()
        )));
    }
    if inputs.x.iter().chain(inputs.y.iter()).chain(inputs.x_q.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("prompt"));
    }
    Ok((d, l))
}

/// `(E + W_PV E (Eᵀ W_KQ E)/L)` at the bottom-right entry.
///
/// Only the last row of `W_PV E` and the last column of `Eᵀ W_KQ E` are
/// formed, so this is `O(d L)`.
pub fn lsa_forward(e: &DMatrix<f64>, p: &LsaParams) -> Result<f64> {
    let (rows, cols) = e.shape();
    if rows < 2 || cols < 2 {
        return Err(Error::DimensionMismatch(format!("embedding is {rows}x{cols}")));
    }
    p.check(rows)?;
    let (d, l) = (rows - 1, cols - 1);
    if e[(d, l)] != 0.0 {
        return Err(Error::InvalidInput("embedding bottom-right entry must be 0".into()));
    }
    let row = p.w_pv.row(d) * e;
    let col = e.transpose() * (&p.w_kq * e.column(l));
    Ok(e[(d, l)] + row.dot(&col.transpose()) / l as f64)
}

/// Per-token standardization with a LayerNorm-style epsilon.
fn standardize_columns(f: &DMatrix<f64>) -> DMatrix<f64> {
    const EPS: f64 = 1e-5;
    let d = f.nrows() as f64;
    let mut out = f.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / d;
        col.add_scalar_mut(-mean);
        let var = col.norm_squared() / d;
        col /= (var + EPS).sqrt();
    }
    out
}

fn softmax_columns(mut s: DMatrix<f64>) -> DMatrix<f64> {
    for mut col in s.column_iter_mut() {
        let max = col.max();
        col.apply(|v| *v = (*v - max).exp());
        let total = col.sum();
        col /= total;
    }
    s
}

/// Run the CA recurrence `F_t = F_{t-1} + S_{t-1} + A_{t-1}` from `F_0 = 0`.
///
/// Cross-attention variants attend from `F_{t-1}` to `X`; deep-LSA variants
/// attend from `F_{t-1}` to itself.
pub fn ca_features(x: &DMatrix<f64>, p: &CaParams) -> Result<DMatrix<f64>> {
    p.validate()?;
    let (d, l) = x.shape();
    if l == 0 {
        return Err(Error::Empty("prompt has no context tokens"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariates"));
    }
    let (skip, value) = p.effective_weights();
    let inv_l = 1.0 / l as f64;
    // X Xᵀ / L is reused by every linear cross-attention layer.
    let cov = (p.variant.is_cross() && p.kernel == AttentionKernel::Linear).then(|| x * x.transpose() * inv_l);
    let mut f = DMatrix::zeros(d, l);
    for _ in 0..p.depth {
        let q = if p.normalize { standardize_columns(&f) } else { f.clone() };
        let attn = match (p.kernel, p.variant.is_cross()) {
            (AttentionKernel::Linear, true) => cov.as_ref().expect("built above") * &q,
            (AttentionKernel::Linear, false) => (&q * q.transpose() * inv_l) * &q,
            (AttentionKernel::Softmax, true) => x * softmax_columns(x.transpose() * &q * inv_l),
            (AttentionKernel::Softmax, false) => &q * softmax_columns(q.transpose() * &q * inv_l),
        };
        f += x * skip + attn * value;
    }
    Ok(f)
}

/// CA embedding by the layer recurrence.
pub fn lca_embed(inputs: PromptInputs<'_>, p: &CaParams) -> Result<Embedding> {
    check_inputs(&inputs)?;
    let f = ca_features(inputs.x, p)?;
    Embedding::assemble(f, inputs.y, inputs.x_q)
}

/// Closed form of the LCA stack, `F = α Σ_{k<T} Mᵏ X` with `M = I + βΛ̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct LcaClosedForm {
    pub embedding: Embedding,
    /// `X Fᵀ / L`.
    pub cross_moment: DMatrix<f64>,
}

/// `(X Fᵀ)/L = (α/β)(Mᵀ − I)` in closed form; requires `β ≠ 0`.
pub fn lca_cross_moment(sample_cov: &DMatrix<f64>, alpha: f64, beta: f64, depth: usize) -> Result<DMatrix<f64>> {
    if beta == 0.0 {
        return Err(Error::InvalidInput("cross-moment closed form needs beta != 0".into()));
    }
    let d = sample_cov.nrows();
    let m = DMatrix::identity(d, d) + sample_cov * beta;
    let (_, m_t) = geometric_sum(&m, depth);
    Ok((m_t - DMatrix::identity(d, d)) * (alpha / beta))
}

/// LCA embedding via the matrix geometric series. Only for the linear,
/// unnormalized cross-attention variants.
pub fn lca_embed_closed_form(inputs: PromptInputs<'_>, p: &CaParams) -> Result<LcaClosedForm> {
    let (d, l) = check_inputs(&inputs)?;
    p.validate()?;
    if !p.variant.is_cross() || !p.has_linear_structure() {
        return Err(Error::InvalidInput(format!(
            "no closed form for {} with kernel {:?}, normalize {}",
            p.variant.name(),
            p.kernel,
            p.normalize
        )));
    }
    let x = inputs.x;
    let (skip, value) = p.effective_weights();
    let cov = x * x.transpose() / l as f64;
    let m = DMatrix::identity(d, d) + &cov * value;
    let (s, m_t) = geometric_sum(&m, p.depth);
    let f = (&s * x) * skip;
    let cross_moment = if value != 0.0 {
        (m_t - DMatrix::identity(d, d)) * (skip / value)
    } else {
        &cov * &s * skip
    };
    Ok(LcaClosedForm {
        embedding: Embedding::assemble(f, inputs.y, inputs.x_q)?,
        cross_moment,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    SingleLsa(LsaParams),
    Ca(CaParams),
    SampleMean,
}

impl ModelParams {
    pub fn name(&self) -> &'static str {
        match self {
            ModelParams::SingleLsa(_) => "single_lsa",
            ModelParams::Ca(p) => p.variant.name(),
            ModelParams::SampleMean => "sample_mean",
        }
    }
}

/// Assemble `E_X = [[X, x_q], [yᵀ, 0]]`.
pub fn raw_embedding(inputs: PromptInputs<'_>) -> Result<DMatrix<f64>> {
    check_inputs(&inputs)?;
    Ok(Embedding::assemble(inputs.x.clone(), inputs.y, inputs.x_q)?.e)
}

pub fn predict(prompt: &Prompt, model: &ModelParams) -> Result<f64> {
    predict_inputs(prompt.inputs(), model)
}

/// Prediction for any architecture.
///
/// CA models use the recurrence up to depth [`CLOSED_FORM_DEPTH`] and the
/// spectral closed form beyond it (linear, unnormalized variants only).
pub fn predict_inputs(inputs: PromptInputs<'_>, model: &ModelParams) -> Result<f64> {
    let (d, _) = check_inputs(&inputs)?;
    match model {
        ModelParams::SampleMean => Ok(inputs.y.mean()),
        ModelParams::SingleLsa(p) => {
            if p.dim() != d {
                return Err(Error::DimensionMismatch(format!("LSA built for d={}, prompt has d={d}", p.dim())));
            }
            lsa_forward(&raw_embedding(inputs)?, p)
        }
        ModelParams::Ca(p) => {
            if p.depth > CLOSED_FORM_DEPTH && p.has_linear_structure() {
                p.validate()?;
                Ok(PromptStats::new(inputs)?.predict_ca(p))
            } else {
                let f = ca_features(inputs.x, p)?;
                Ok(FrozenReadout::apply(&f, inputs.y, inputs.x_q))
            }
        }
    }
}

/// Sufficient statistics of one prompt for fast repeated prediction.
///
/// With `Λ̂ = U diag(λ) Uᵀ`, `g = X y / L`, every linear unnormalized CA
/// variant produces `F = U diag(q_T(λ)) Uᵀ X` with a scalar recurrence `q_t`,
/// so the prediction is `Σ_j c_j q_T(λ_j)` with `c_j = (Uᵀg)_j (Uᵀx_q)_j`.
/// The single-LSA prediction is `pᵀ (E Eᵀ / L) K x_q` with `p` the last row
/// of `W_PV` and `K` the first `d` columns of `W_KQ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptStats {
    pub eigenvalues: DVector<f64>,
    pub coef: DVector<f64>,
    /// `E_X E_Xᵀ / L`, including the query column.
    pub gram: DMatrix<f64>,
    pub x_q: DVector<f64>,
    pub y_mean: f64,
}

impl PromptStats {
    pub fn new(inputs: PromptInputs<'_>) -> Result<Self> {
        let (d, l) = check_inputs(&inputs)?;
        let inv_l = 1.0 / l as f64;
        let cov = inputs.x * inputs.x.transpose() * inv_l;
        let eig = cov.symmetric_eigen();
        let g = inputs.x * inputs.y * inv_l;
        let ug = eig.eigenvectors.transpose() * &g;
        let uq = eig.eigenvectors.transpose() * inputs.x_q;
        let coef = ug.component_mul(&uq);
        let e = Embedding::assemble(inputs.x.clone(), inputs.y, inputs.x_q)?.e;
        let gram = &e * e.transpose() * inv_l;
        debug_assert_eq!(gram.nrows(), d + 1);
        Ok(PromptStats {
            eigenvalues: eig.eigenvalues,
            coef,
            gram,
            x_q: inputs.x_q.clone(),
            y_mean: inputs.y.mean(),
        })
    }

    /// Scalar multiplier `q_T(λ)` of the CA stack on one eigendirection.
    pub fn ca_multiplier(p: &CaParams, lambda: f64) -> f64 {
        let (skip, value) = p.effective_weights();
        let mut q = 0.0;
        if p.variant.is_cross() {
            for _ in 0..p.depth {
                q += skip + value * lambda * q;
            }
        } else {
            for _ in 0..p.depth {
                q += skip + value * lambda * q * q * q;
            }
        }
        q
    }

    /// CA prediction; only valid for the linear kernel without normalization.
    pub fn predict_ca(&self, p: &CaParams) -> f64 {
        self.eigenvalues
            .iter()
            .zip(self.coef.iter())
            .map(|(&lam, &c)| c * Self::ca_multiplier(p, lam))
            .sum()
    }

    pub fn predict_lsa(&self, p: &LsaParams) -> f64 {
        self.predict_lsa_parts(&p.readout_row(), &p.query_block())
    }

    /// `pᵀ G K x_q` from the readout row `p` and query block `K`.
    pub fn predict_lsa_parts(&self, readout: &DVector<f64>, query_block: &DMatrix<f64>) -> f64 {
        let kx = query_block * &self.x_q;
        readout.dot(&(&self.gram * kx))
    }

    pub fn predict(&self, model: &ModelParams) -> Result<f64> {
        match model {
            ModelParams::SampleMean => Ok(self.y_mean),
            ModelParams::SingleLsa(p) => Ok(self.predict_lsa(p)),
            ModelParams::Ca(p) if p.has_linear_structure() => Ok(self.predict_ca(p)),
            ModelParams::Ca(p) => Err(Error::InvalidInput(format!(
                "{} with kernel {:?}, normalize {} has no spectral form",
                p.variant.name(),
                p.kernel,
                p.normalize
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{sample_task_and_prompt, DataConfig, MDistribution, TaskParams};
    use crate::linalg::rel_frobenius;
    use crate::rng::seeded;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, rng: &mut crate::rng::Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    fn small_prompt(seed: u64) -> Prompt {
        sample_task_and_prompt(&DataConfig::new(2, 2, MDistribution::default()).unwrap(), 8, &mut seeded(seed))
    }

    #[test]
    fn zero_projection_predicts_zero() {
        let p = small_prompt(1);
        let model = ModelParams::SingleLsa(LsaParams::zeros(4));
        assert_eq!(predict(&p, &model).unwrap(), 0.0);
    }

    #[test]
    fn lsa_matches_dense_triple_product_single_token() {
        let mut rng = seeded(2);
        let d = 3;
        let mut e = gaussian(d + 1, 2, &mut rng);
        e[(d, 1)] = 0.0;
        let id = DMatrix::identity(d + 1, d + 1);
        let p = LsaParams {
            w_pv: id.clone(),
            w_kq: id,
        };
        let full = &e + &e * (e.transpose() * &e) / 1.0;
        assert!((lsa_forward(&e, &p).unwrap() - full[(d, 1)]).abs() < 1e-12);
    }

    #[test]
    fn lsa_rejects_bad_shapes() {
        let e = DMatrix::zeros(4, 5);
        assert!(matches!(lsa_forward(&e, &LsaParams::zeros(4)), Err(Error::DimensionMismatch(_))));
        let mut e = DMatrix::zeros(4, 5);
        e[(3, 4)] = 1.0;
        assert!(lsa_forward(&e, &LsaParams::zeros(3)).is_err());
    }

    #[test]
    fn frozen_readout_on_raw_embedding() {
        let p = small_prompt(3);
        let e = raw_embedding(p.inputs()).unwrap();
        let got = lsa_forward(&e, &FrozenReadout::params(4)).unwrap();
        let want = (p.y.transpose() * p.x.transpose() * &p.x_q)[(0, 0)] / 8.0;
        assert!((got - want).abs() <= 1e-14 * (1.0 + want.abs()));
    }

    #[test]
    fn depth_one_is_scaled_data() {
        let p = small_prompt(4);
        for (a, b) in [(0.7, -0.2), (-1.3, 2.0)] {
            let f = ca_features(&p.x, &CaParams::two_param(a, b, 1).unwrap()).unwrap();
            assert!((f - &p.x * a).amax() < 1e-15);
        }
    }

    #[test]
    fn zero_alpha_gives_zero_features() {
        let p = small_prompt(5);
        for t in [1, 3, 12] {
            let f = ca_features(&p.x, &CaParams::two_param(0.0, -0.4, t).unwrap()).unwrap();
            assert!(f.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn recurrence_matches_closed_form_example() {
        let mut rng = seeded(6);
        let x = gaussian(4, 8, &mut rng);
        let y = DVector::from_fn(8, |_, _| StandardNormal.sample(&mut rng));
        let x_q = DVector::from_fn(4, |_, _| StandardNormal.sample(&mut rng));
        let inputs = PromptInputs { x: &x, y: &y, x_q: &x_q };
        for t in [2, 6] {
            let p = CaParams::two_param(0.3, -0.3, t).unwrap();
            let rec = lca_embed(inputs, &p).unwrap();
            let cf = lca_embed_closed_form(inputs, &p).unwrap();
            assert!(rel_frobenius(&rec.f, &cf.embedding.f) < 1e-12);
            let xft = &x * rec.f.transpose() / 8.0;
            assert!(rel_frobenius(&cf.cross_moment, &xft) < 1e-10);
        }
    }

    #[test]
    fn whitened_cross_moment_is_scalar() {
        let cov = DMatrix::identity(3, 3);
        let (a, t) = (0.4, 7);
        let cm = lca_cross_moment(&cov, a, -a, t).unwrap();
        let want = 1.0 - (1.0 - a).powi(t as i32);
        assert!((cm - DMatrix::identity(3, 3) * want).amax() < 1e-14);
        assert!(lca_cross_moment(&cov, a, 0.0, t).is_err());
    }

    #[test]
    fn one_param_equals_two_param_on_antidiagonal() {
        let p = small_prompt(7);
        for a in [0.1, 0.33, 0.9] {
            let one = ModelParams::Ca(CaParams::one_param(a, 9).unwrap());
            let two = ModelParams::Ca(CaParams::two_param(a, -a, 9).unwrap());
            assert_eq!(predict(&p, &one).unwrap(), predict(&p, &two).unwrap());
        }
        let w = CaParams::one_param(0.25, 3).unwrap().effective_weights();
        assert_eq!(w, (0.25, -0.25));
    }

    #[test]
    fn sample_mean_example() {
        let x = DMatrix::zeros(2, 3);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x_q = DVector::zeros(2);
        let got = predict_inputs(PromptInputs { x: &x, y: &y, x_q: &x_q }, &ModelParams::SampleMean).unwrap();
        assert_eq!(got, 2.0);
    }

    #[test]
    fn no_skip_variants_stay_at_zero() {
        let p = small_prompt(8);
        for v in [CaVariant::LcaNoSkip, CaVariant::DeepLsaNoSkip] {
            let f = ca_features(&p.x, &CaParams::new(v, 0.5, 0.0, 10).unwrap()).unwrap();
            assert!(f.iter().all(|&z| z == 0.0));
        }
    }

    #[test]
    fn spectral_path_matches_recurrence() {
        let cfg = DataConfig::default();
        let mut rng = seeded(9);
        for i in 0..20 {
            let p = sample_task_and_prompt(&cfg, 30, &mut rng);
            let stats = PromptStats::new(p.inputs()).unwrap();
            let variant = CaVariant::ALL[i % 5];
            let ca = CaParams::new(variant, 0.2, -0.15, 1 + i % 7).unwrap();
            let rec = FrozenReadout::apply(&ca_features(&p.x, &ca).unwrap(), &p.y, &p.x_q);
            let fast = stats.predict_ca(&ca);
            assert!((rec - fast).abs() <= 1e-10 * (1.0 + rec.abs()), "{variant:?}: {rec} vs {fast}");

            let mut lsa = LsaParams::zeros(10);
            lsa.w_pv = gaussian(11, 11, &mut rng);
            lsa.w_kq = gaussian(11, 11, &mut rng);
            let slow = predict(&p, &ModelParams::SingleLsa(lsa.clone())).unwrap();
            assert!((slow - stats.predict_lsa(&lsa)).abs() <= 1e-10 * (1.0 + slow.abs()));
        }
    }

    #[test]
    fn deep_predictions_switch_to_closed_form_consistently() {
        let p = small_prompt(10);
        let ca = CaParams::two_param(0.2, -0.2, CLOSED_FORM_DEPTH + 8).unwrap();
        let fast = predict(&p, &ModelParams::Ca(ca.clone())).unwrap();
        let rec = FrozenReadout::apply(&ca_features(&p.x, &ca).unwrap(), &p.y, &p.x_q);
        assert!((fast - rec).abs() <= 1e-10 * (1.0 + rec.abs()));
    }

    #[test]
    fn normalized_and_softmax_variants_are_finite() {
        let p = small_prompt(11);
        let mut ca = CaParams::two_param(0.3, -0.3, 5).unwrap();
        ca.normalize = true;
        assert!(predict(&p, &ModelParams::Ca(ca.clone())).unwrap().is_finite());
        ca.normalize = false;
        ca.kernel = AttentionKernel::Softmax;
        assert!(predict(&p, &ModelParams::Ca(ca)).unwrap().is_finite());
    }

    #[test]
    fn latent_field_is_never_read() {
        let mut p = small_prompt(12);
        let models = [
            ModelParams::SingleLsa(FrozenReadout::params(4)),
            ModelParams::Ca(CaParams::two_param(0.3, -0.2, 4).unwrap()),
            ModelParams::SampleMean,
        ];
        let before: Vec<f64> = models.iter().map(|m| predict(&p, m).unwrap()).collect();
        p.latent.fill(0.0);
        p.task = TaskParams::new(DVector::zeros(4), 0.0);
        let after: Vec<f64> = models.iter().map(|m| predict(&p, m).unwrap()).collect();
        assert_eq!(
            before.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            after.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn rejects_non_finite_covariates() {
        let mut p = small_prompt(13);
        p.x[(0, 0)] = f64::NAN;
        let ca = ModelParams::Ca(CaParams::one_param(0.3, 2).unwrap());
        assert!(matches!(predict(&p, &ca), Err(Error::NonFinite(_))));
    }
}
