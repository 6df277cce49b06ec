use mmicl::attention::{predict, CaParams, ModelParams};
use mmicl::experiments::{
    evaluate, one_shot_estimate, parse_table, run, run_fig2, test_prompts, write_outputs, ExperimentConfig,
    ExperimentKind, ExperimentOutput, Format,
};
use mmicl::losses::{bayes_floor, Target};
use mmicl::quadrature::ZMoments;

fn small(kind: ExperimentKind) -> ExperimentConfig {
    let mut c = ExperimentConfig::for_experiment(kind);
    c.n_train = 200;
    c.l_tr = 40;
    c.depth = 4;
    c.l_te_grid = vec![8, 64, 256];
    c.t_grid = vec![1, 3];
    c.n_test_prompts = 300;
    c.n_repeats = 2;
    c.optim.max_steps = 400;
    c.grid.resolution = 21;
    c
}

#[test]
fn depth_one_lca_is_the_one_shot_estimator() {
    let cfg = small(ExperimentKind::Fig3);
    let prompts = test_prompts(&cfg, 64);
    let model = ModelParams::Ca(CaParams::one_param(0.37, 1).unwrap());
    let mut direct = 0.0;
    let mut via_model = 0.0;
    for p in &prompts {
        let a = predict(p, &model).unwrap();
        let b = one_shot_estimate(p, 0.37);
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        direct += (p.bayes_target() - b).powi(2);
        via_model += (p.bayes_target() - a).powi(2);
    }
    let n = prompts.len() as f64;
    let (err, _) = evaluate(&model, &prompts, Target::Bayes).unwrap();
    assert!((err - direct / n).abs() <= 1e-12 * err.max(1.0));
    assert!((err - via_model / n).abs() <= 1e-12 * err.max(1.0));
}

#[test]
fn bayes_error_never_exceeds_label_error_plus_floor() {
    let bayes_cfg = small(ExperimentKind::Fig2);
    let mut label_cfg = bayes_cfg.clone();
    label_cfg.target_metric = Target::Label;
    let (b, l) = (run_fig2(&bayes_cfg).unwrap(), run_fig2(&label_cfg).unwrap());
    let floor = bayes_floor(&ZMoments::default_law());
    assert_eq!(b.rows.len(), l.rows.len());
    for (rb, rl) in b.rows.iter().zip(&l.rows) {
        assert_eq!((&rb.variant, rb.sweep), (&rl.variant, rl.sweep));
        let se = rb.std / (rb.n as f64).sqrt() + rl.std / (rl.n as f64).sqrt();
        assert!(rb.mean <= rl.mean + floor + 3.0 * se, "{} at {}", rb.variant, rb.sweep);
    }
}

#[test]
fn sample_mean_label_error_is_the_label_variance() {
    let mut cfg = small(ExperimentKind::AblationNoSkip);
    cfg.n_test_prompts = 4000;
    let prompts = test_prompts(&cfg, 1024);
    let sq = mmicl::losses::squared_errors(&ModelParams::SampleMean, &prompts, Target::Label).unwrap();
    let (mean, se) = mmicl::parallel::mean_se(&sq);
    // y_q − ȳ = ζ(u_q − ū), so E = E[ζ²](1 + 1/L).
    let want = 1.0 + 1.0 / 1024.0;
    assert!((mean - want).abs() < 3.0 * se, "{mean} vs {want} (se {se})");
}

#[test]
fn outputs_round_trip_and_echo_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(ExperimentKind::Fig3);
    let out = run(&cfg).unwrap();
    let ExperimentOutput::Table(table) = &out else { panic!("fig3 emits a table") };
    for format in [Format::Csv, Format::Json] {
        let paths = write_outputs(&out, &dir.path().join(format.extension()), format, 1.0).unwrap();
        let back = parse_table(&paths.data, format).unwrap();
        assert_eq!(back.rows, table.rows);
        let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&paths.metadata).unwrap()).unwrap();
        assert_eq!(meta["config_hash"].as_str().unwrap(), cfg.hash());
        assert!(meta.get("wall_seconds").is_none());
    }
}

#[test]
fn reruns_emit_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ExperimentKind::ALL {
        let cfg = small(kind);
        let mut files = Vec::new();
        for k in 0..2 {
            let paths = write_outputs(&run(&cfg).unwrap(), &dir.path().join(format!("{}{k}", kind.name())), Format::Csv, 0.0)
                .unwrap();
            files.push((std::fs::read(paths.data).unwrap(), std::fs::read(paths.metadata).unwrap()));
        }
        assert_eq!(files[0], files[1], "{}", kind.name());
    }
}
