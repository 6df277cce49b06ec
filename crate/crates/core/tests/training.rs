use mmicl::attention::{CaParams, ModelParams};
use mmicl::datagen::MDistribution;
use mmicl::experiments::{training_prompts, ExperimentConfig, ExperimentKind};
use mmicl::losses::{profiled_alpha, Target};
use mmicl::optim::{train, ModelInit, ModelKind, OptimConfig, TrainData, Trained, TwoParamScheme};
use mmicl::quadrature::{QuadratureSpec, ZMoments};

fn moments(t: usize) -> ZMoments {
    ZMoments::new(&MDistribution::default(), QuadratureSpec::default().for_depth(t)).unwrap()
}

fn one_param(t: usize, cfg: &OptimConfig) -> Trained {
    let zm = moments(t);
    let p = CaParams::one_param(0.0, t).unwrap();
    train(&ModelKind::Ca(p), &ModelInit::Ca(vec![0.0]), cfg, TrainData::Population(&zm)).unwrap()
}

fn two_param(t: usize, cfg: &OptimConfig) -> Trained {
    let zm = moments(t);
    let beta0 = -1.0 / zm.z_upper();
    let alpha0 = profiled_alpha(beta0, t, &zm).unwrap();
    let p = CaParams::two_param(alpha0, beta0, t).unwrap();
    train(&ModelKind::Ca(p), &ModelInit::Ca(vec![alpha0, beta0]), cfg, TrainData::Population(&zm)).unwrap()
}

fn final_alpha(tr: &Trained) -> f64 {
    tr.trajectory.final_params[0]
}

#[test]
fn recorded_losses_never_increase() {
    let joint = OptimConfig {
        two_param_scheme: TwoParamScheme::Joint,
        ..OptimConfig::default()
    };
    for tr in [
        one_param(10, &OptimConfig::default()),
        two_param(10, &OptimConfig::default()),
        two_param(10, &joint),
    ] {
        let losses: Vec<f64> = tr.trajectory.points.iter().map(|p| p.loss).collect();
        assert!(losses.windows(2).all(|w| w[1] <= w[0]), "{losses:?}");
    }
}

#[test]
fn halving_the_step_does_not_move_the_minimizer() {
    let base = OptimConfig::default();
    let half = OptimConfig {
        step_size: base.step_size / 2.0,
        ..base.clone()
    };
    for t in [5, 10, 20] {
        let (a, b) = (final_alpha(&one_param(t, &base)), final_alpha(&one_param(t, &half)));
        assert!((a - b).abs() < 1e-6, "T = {t}: {a} vs {b}");
    }
}

#[test]
fn trained_one_param_step_approaches_one_third() {
    let cfg = OptimConfig::default();
    let gaps: Vec<f64> = [5, 10, 20, 50, 100]
        .into_iter()
        .map(|t| {
            let tr = one_param(t, &cfg);
            assert!(tr.trajectory.converged);
            (final_alpha(&tr) - 1.0 / 3.0).abs()
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(gaps[4] < 0.02, "{gaps:?}");
}

#[test]
fn two_param_training_stays_in_the_window_and_ties_beta_to_alpha() {
    for scheme in [TwoParamScheme::Profiled, TwoParamScheme::Joint] {
        let cfg = OptimConfig {
            two_param_scheme: scheme,
            ..OptimConfig::default()
        };
        let mut sums = Vec::new();
        for t in [10, 30, 100] {
            let tr = two_param(t, &cfg);
            assert!(!tr.outside_hypotheses);
            let lo = -2.0 / moments(t).z_upper();
            let traj = &tr.trajectory;
            assert!(traj.param_min[1] > lo && traj.param_max[1] < 0.0, "{scheme:?} T = {t}");
            sums.push((traj.final_params[0] + traj.final_params[1]).abs());
        }
        assert!(sums.windows(2).all(|w| w[1] <= w[0]), "{scheme:?}: {sums:?}");
        assert!(sums[2] < 0.02, "{scheme:?}: {sums:?}");
    }
}

/// At `L_tr = 100` the empirical minimizer sits near 0.09, far below the
/// population value near 0.32: larger steps amplify the sampling error of
/// the context covariance. Kept as a record of the gap.
#[test]
#[ignore = "the finite-context minimizer differs from the population one; see the notes"]
fn empirical_training_matches_population_training() {
    let cfg = ExperimentConfig::for_experiment(ExperimentKind::Fig2);
    let prompts = training_prompts(&cfg, 0);
    let p = CaParams::one_param(0.0, cfg.depth).unwrap();
    let emp = train(
        &ModelKind::Ca(p),
        &ModelInit::Ca(vec![0.0]),
        &cfg.optim,
        TrainData::Empirical {
            prompts: &prompts,
            target: Target::Label,
        },
    )
    .unwrap();
    let ModelParams::Ca(fit) = emp.model else { unreachable!() };
    let pop = final_alpha(&one_param(cfg.depth, &OptimConfig::default()));
    assert!((fit.alpha - pop).abs() < 0.05, "empirical {} vs population {pop}", fit.alpha);
}
