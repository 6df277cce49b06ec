use mmicl::attention::{lca_cross_moment, predict, CaParams, CaVariant, LsaParams, ModelParams};
use mmicl::datagen::{sample_task_and_prompt, DataConfig, Prompt};
use mmicl::losses::{alpha_star_limit, phi};
use mmicl::quadrature::ZMoments;
use mmicl::rng::{seeded, stream, Purpose};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

fn permuted(p: &Prompt, seed: u64) -> Prompt {
    let mut order: Vec<usize> = (0..p.context_len()).collect();
    order.shuffle(&mut seeded(seed));
    let mut q = p.clone();
    for (dst, &src) in order.iter().enumerate() {
        q.x.set_column(dst, &p.x.column(src));
        q.y[dst] = p.y[src];
    }
    q
}

fn all_models(d: usize, seed: u64) -> Vec<ModelParams> {
    let mut rng = seeded(seed);
    let lsa = LsaParams {
        w_pv: DMatrix::from_fn(d + 1, d + 1, |_, _| 0.3 * Distribution::<f64>::sample(&StandardNormal, &mut rng)),
        w_kq: DMatrix::from_fn(d + 1, d + 1, |_, _| 0.3 * Distribution::<f64>::sample(&StandardNormal, &mut rng)),
    };
    let mut models = vec![ModelParams::SingleLsa(lsa), ModelParams::SampleMean];
    for v in CaVariant::ALL {
        models.push(ModelParams::Ca(CaParams::new(v, 0.25, -0.2, 5).unwrap()));
    }
    models
}

#[test]
fn predictions_ignore_context_order() {
    let data = DataConfig::default();
    let models = all_models(data.dim(), 31);
    for i in 0..10 {
        let p = sample_task_and_prompt(&data, 40, &mut stream(31, Purpose::Misc, i));
        let q = permuted(&p, i);
        for m in &models {
            let (a, b) = (predict(&p, m).unwrap(), predict(&q, m).unwrap());
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{}: {a} vs {b}", m.name());
        }
    }
}

#[test]
fn deep_lca_recovers_bayes_at_long_context() {
    let data = DataConfig::default();
    let a = alpha_star_limit(&ZMoments::default_law());
    let model = ModelParams::Ca(CaParams::two_param(a, -a, 10).unwrap());
    let close = (0..200)
        .filter(|&i| {
            let p = sample_task_and_prompt(&data, 10_000, &mut stream(32, Purpose::Misc, i));
            let bayes = p.bayes_target();
            (predict(&p, &model).unwrap() - bayes).abs() < 0.05 * (1.0 + bayes.abs())
        })
        .count();
    assert!(close >= 190, "{close} of 200");
}

#[test]
fn population_cross_moment_approaches_identity() {
    let data = DataConfig::default();
    let zm = ZMoments::default_law();
    let a = alpha_star_limit(&zm);
    for i in 0..10 {
        let task = mmicl::datagen::sample_task(&data, &mut stream(33, Purpose::Misc, i));
        let lambda = task.population_covariance();
        let d = lambda.nrows();
        let diff = lca_cross_moment(&lambda, a, -a, 50).unwrap() - DMatrix::identity(d, d);
        let gap = diff.singular_values().max();
        let bound = phi(a, &zm).powi(50);
        // Unit eigenvalues sit exactly on the bound; allow roundoff.
        assert!(gap <= bound + 1e-13, "{gap} > {bound}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn one_param_is_two_param_on_the_antidiagonal(
        seed in any::<u64>(), alpha in -0.6f64..0.6, depth in 1usize..15, l in 1usize..30,
    ) {
        let data = DataConfig::default();
        let p = sample_task_and_prompt(&data, l, &mut seeded(seed));
        let one = predict(&p, &ModelParams::Ca(CaParams::one_param(alpha, depth).unwrap())).unwrap();
        let two = predict(&p, &ModelParams::Ca(CaParams::two_param(alpha, -alpha, depth).unwrap())).unwrap();
        prop_assert_eq!(one, two);
    }

    #[test]
    fn sample_mean_is_the_label_average(seed in any::<u64>(), l in 1usize..60) {
        let data = DataConfig::default();
        let p = sample_task_and_prompt(&data, l, &mut seeded(seed));
        let want = p.y.sum() / l as f64;
        let got = predict(&p, &ModelParams::SampleMean).unwrap();
        prop_assert!((got - want).abs() <= 1e-14 * want.abs().max(1.0));
    }

    #[test]
    fn latent_field_never_changes_a_prediction(seed in any::<u64>(), l in 1usize..30) {
        let data = DataConfig::default();
        let p = sample_task_and_prompt(&data, l, &mut seeded(seed));
        let mut blind = p.clone();
        blind.latent = DVector::zeros(l + 1);
        for m in all_models(data.dim(), seed) {
            prop_assert_eq!(predict(&p, &m).unwrap().to_bits(), predict(&blind, &m).unwrap().to_bits());
        }
    }
}
