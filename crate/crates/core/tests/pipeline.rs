//! End-to-end pipeline checks: shipped preset files, parse -> normalize ->
//! shapes -> cost -> energy.

use greenprint_core::arch::normalize_graph;
use greenprint_core::cost::{model_cost, CountingMode};
use greenprint_core::dsl::{parse_model, serialize_model};
use greenprint_core::energy::{energy_training, EnergyParams};
use greenprint_core::shape::infer_shapes;
use greenprint_core::zoo::{self, Category};

#[test]
fn shipped_preset_file_is_byte_identical_to_canonical_serialization() {
    let entry = zoo::get_model("pirnateco").unwrap();
    let canonical = serialize_model(entry.graph.as_ref().unwrap());
    let shipped = include_str!("../examples/pirnateco.nnm");
    assert_eq!(shipped, canonical);
}

#[test]
fn shipped_preset_file_parses_back_to_the_zoo_graph() {
    let entry = zoo::get_model("pirnateco").unwrap();
    let parsed = parse_model(include_str!("../examples/pirnateco.nnm")).unwrap();
    assert_eq!(&parsed, entry.graph.as_ref().unwrap());
}

#[test]
fn full_pipeline_from_text_to_carbon() {
    let text = "model \"stem\"\n\
                input 16 924 2\n\
                conv2d filters=32 kernel=1x7 stride=1x3 activation=relu\n\
                batchnorm\n\
                maxpool kernel=1x4\n\
                globalavgpool\n\
                flatten\n\
                dense units=3";
    let graph = parse_model(text).unwrap();
    let sg = infer_shapes(&normalize_graph(&graph)).unwrap();
    let cost = model_cost(&sg, CountingMode::PaperFidelity);
    // conv 4,544,416 + pool 312,512 + dense 2*32*3
    assert_eq!(cost.total_flops, 4_857_120);
    // conv 480 + batchnorm 64 + dense 99
    assert_eq!(cost.total_params, 643);

    let cfg = zoo::default_training_config(Category::Mean);
    let report = energy_training(cost.total_flops, &cfg, &EnergyParams::default());
    assert!(report.e_training_j > 0.0);
    assert_eq!(report.e_training_j, 3.0 * report.e_forward_j);
}

#[test]
fn normalized_preset_round_trips_through_the_dsl() {
    let entry = zoo::get_model("pirnateco").unwrap();
    let normalized = normalize_graph(entry.graph.as_ref().unwrap());
    let text = serialize_model(&normalized);
    let parsed = parse_model(&text).unwrap();
    assert_eq!(parsed, normalized);
}
