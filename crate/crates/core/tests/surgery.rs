use blockprune_core::data::{build_edges, generate_dataset, GeneratorSpec};
use blockprune_core::model::{init_checkpoint, manifest, predict, LossWeights, ModelConfig};
use blockprune_core::surgery::{ablate_block, param_count, reduce_blocks, Strategy};
use blockprune_core::training::{prepare_all, train, Objective, TrainBudget, TrainOptions};

fn config() -> ModelConfig {
    ModelConfig {
        blocks: 5,
        mlp_layers: 2,
        node_dim: 8,
        edge_dim: 6,
        n_rbf: 6,
        seed: 3,
        ..ModelConfig::default()
    }
}

#[test]
fn removing_an_identity_last_block_keeps_energy_and_final_mlp() {
    let mut ckpt = init_checkpoint(&config()).unwrap();
    let d = 8;
    let last = 4;
    for name in [
        format!("interaction.{last}.node_out.weight"),
        format!("interaction.{last}.node_out.bias"),
    ] {
        ckpt.get_mut(&name).unwrap().data_mut().fill(0.0);
    }
    let w = ckpt.get_mut("final_mlp.0.weight").unwrap();
    let cols = w.cols();
    w.data_mut()[last * d * cols..].fill(0.0);

    let pruned = ablate_block(&ckpt, last, Strategy::Sliced).unwrap();
    assert_eq!(pruned.config().blocks, 4);
    let weights = LossWeights::default();
    for s in generate_dataset(&GeneratorSpec::upstream(4, 9))
        .unwrap()
        .samples
    {
        let e = build_edges(&s.positions, 5.0).unwrap();
        let (full, _) = predict(&ckpt, &s, &e, weights).unwrap();
        let (cut, _) = predict(&pruned, &s, &e, weights).unwrap();
        assert!((full.energy - cut.energy).abs() < 1e-12);
        for (a, b) in full.mlp_layer_outputs.iter().zip(&cut.mlp_layer_outputs) {
            assert!(a.max_abs_diff(b) < 1e-12);
        }
        // The force head reads the deepest block's edge messages, which change.
        assert!(full.forces.max_abs_diff(&cut.forces) > 0.0);
    }
}

#[test]
fn random_strategy_is_reproducible_per_seed() {
    let ckpt = init_checkpoint(&config()).unwrap();
    let a = reduce_blocks(&ckpt, 3, Strategy::Random { seed: 7 }).unwrap();
    let b = reduce_blocks(&ckpt, 3, Strategy::Random { seed: 7 }).unwrap();
    let c = reduce_blocks(&ckpt, 3, Strategy::Random { seed: 8 }).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.get("final_mlp.0.weight"), c.get("final_mlp.0.weight"));
    assert_eq!(a.get("final_mlp.1.weight"), ckpt.get("final_mlp.1.weight"));
}

#[test]
fn reduced_manifest_and_counts_agree() {
    let ckpt = init_checkpoint(&config()).unwrap();
    for b in 2..5 {
        let r = reduce_blocks(&ckpt, b, Strategy::Sliced).unwrap();
        let from_manifest: usize = manifest(r.config()).iter().map(|p| p.numel()).sum();
        assert_eq!(r.param_count(), from_manifest);
        assert_eq!(param_count(r.config()).total, from_manifest);
    }
}

#[test]
fn reduced_checkpoint_trains() {
    let ckpt = init_checkpoint(&config()).unwrap();
    let reduced = reduce_blocks(&ckpt, 2, Strategy::Sliced).unwrap();
    let samples = generate_dataset(&GeneratorSpec::upstream(16, 4))
        .unwrap()
        .samples;
    let graphs = prepare_all(reduced.config(), &samples).unwrap();
    let budget = TrainBudget::steps(40, 4, 1e-3, 1);
    let out = train(
        reduced,
        &graphs,
        Objective::Supervised(LossWeights::default()),
        &budget,
        TrainOptions::default(),
    )
    .unwrap();
    assert_eq!(out.steps, 40);
    let first: f64 = out.log[..5].iter().map(|r| r.loss_total).sum();
    let last: f64 = out.log[35..].iter().map(|r| r.loss_total).sum();
    assert!(last < first, "{first} -> {last}");
}
