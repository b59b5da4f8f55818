//! The synthetic task rewards learning the metric: a frozen model that is
//! handed the hidden projection beats a frozen model on the intrinsic graph.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use egcn_core::autodiff::ParamStore;
use egcn_core::dataset::{synthesize_hidden_metric_dataset, HiddenMetricTeacher};
use egcn_core::nn::{LayerSpec, Model};
use egcn_core::training::{frozen_config, train_from, TrainConfig};

#[test]
fn hidden_projection_beats_intrinsic_graph() {
    let data = synthesize_hidden_metric_dataset(600, (6, 14), 4, 11).unwrap();
    let (tr, va) = data.graphs.split_at(500);
    let cfg = frozen_config(&TrainConfig {
        architecture: vec![LayerSpec::sgc(16), LayerSpec::Gather],
        batch_size: 32,
        lr: 0.02,
        max_epochs: 30,
        ..TrainConfig::default()
    });
    let model = cfg.build_model(4, 1).unwrap();
    let init = model.init_params(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut oracle = init.clone();
    let w_d = model.metric_param_names().remove(0);
    oracle
        .set_value(&w_d, HiddenMetricTeacher::draw(4, 11).w_star)
        .unwrap();

    let final_rmse = |params: ParamStore, model: Model| {
        let mut noop = |_: usize, _: &Model, _: &ParamStore| Ok(());
        let r = train_from(model, params, tr, va, &cfg, &mut noop).unwrap();
        *r.curve("validation", "rmse").last().unwrap()
    };
    let intrinsic = final_rmse(init, model.clone());
    let hidden = final_rmse(oracle, model);
    assert!(hidden < intrinsic, "hidden {hidden} vs intrinsic {intrinsic}");
}
