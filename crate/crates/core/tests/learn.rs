use gapseg::learn::{fit_weights, FitStatus, WeightGrid};
use gapseg::metrics::{variation_of_information, Background};
use gapseg::pipeline::{run_pipeline, PipelineConfig};
use gapseg::synth::{generate_scene, SceneSpec};
use gapseg::Scene;

/// Mean VoI the default grid reached on this scene when the baseline was recorded.
const RECORDED_VOI: f64 = 0.501776;

#[test]
fn default_grid_on_the_four_cell_scene() {
    let scene: Scene = generate_scene(&SceneSpec::default()).unwrap();
    let mut cfg = PipelineConfig::from_toml(include_str!("../../../configs/synthetic.toml")).unwrap();
    cfg.solve.log_period = 0;
    cfg.solve.time_limit = Some(20.0);
    let r = fit_weights(&[(&scene.map, &scene.truth)], &WeightGrid::default(), 200, &cfg, Background::Segment).unwrap();
    println!("fitted {:?} voi {:.6} after {} evaluations, {:?}", r.weights.to_array(), r.voi, r.evaluations, r.status);
    assert_eq!(r.status, FitStatus::Converged);
    let min = r.history.iter().map(|h| h.1).fold(f64::INFINITY, f64::min);
    assert_eq!(r.voi, min);

    cfg.weights = r.weights;
    let out = run_pipeline(&scene.map, &cfg).unwrap();
    let voi = variation_of_information(&out.labels, &scene.truth, Background::Segment).unwrap();
    assert_eq!(voi, r.voi, "refit with the returned weights reproduces the loss");
    assert!(r.voi <= RECORDED_VOI + 1e-6, "regression: {} vs recorded {RECORDED_VOI}", r.voi);
}
