//! Random model generation for fuzzing and self-validation.

use rand::Rng;

use crate::arch::{Activation, KernelGeometry, LayerSpec, ModelGraph, PoolKind, TensorShape};
use crate::shape::conv_output_dim;

/// What kind of graph to generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphStyle {
    /// Any valid graph over the full layer vocabulary, including macros and
    /// skip references. Shapes are not necessarily consistent.
    Full,
    /// A small shape-consistent graph of conv/pool/dense layers with every
    /// dimension at most 8, suitable for the counting executor.
    DeskExecutable,
}

/// Generates a random graph that passes validation.
pub fn random_graph<R: Rng>(rng: &mut R, style: GraphStyle) -> ModelGraph {
    match style {
        GraphStyle::Full => random_full_graph(rng),
        GraphStyle::DeskExecutable => random_desk_graph(rng),
    }
}

fn random_activation<R: Rng>(rng: &mut R) -> Activation {
    match rng.gen_range(0..4) {
        0 => Activation::None,
        1 => Activation::Relu,
        2 => Activation::LeakyRelu { alpha: Activation::DEFAULT_ALPHA },
        _ => Activation::LeakyRelu { alpha: rng.gen::<f64>() },
    }
}

fn random_name<R: Rng>(rng: &mut R) -> String {
    const CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyzABC0123456789_- #.";
    let len = rng.gen_range(0..10);
    (0..len).map(|_| CHARS[rng.gen_range(0..CHARS.len())] as char).collect()
}

fn random_full_graph<R: Rng>(rng: &mut R) -> ModelGraph {
    let mut layers = vec![LayerSpec::Input {
        shape: TensorShape::new(
            rng.gen_range(1..=999),
            rng.gen_range(1..=999),
            rng.gen_range(1..=64),
        ),
    }];
    let mut labels: Vec<String> = Vec::new();
    let extra = rng.gen_range(0..=8);
    for _ in 0..extra {
        let layer = match rng.gen_range(0..11) {
            0 => LayerSpec::Conv2D {
                filters: rng.gen_range(1..=64),
                geom: KernelGeometry::new(
                    rng.gen_range(1..=7),
                    rng.gen_range(1..=7),
                    rng.gen_range(1..=4),
                    rng.gen_range(1..=4),
                )
                .with_padding(rng.gen_range(0..=3), rng.gen_range(0..=3)),
                activation: random_activation(rng),
                bias: rng.gen(),
            },
            1 => {
                let k = (rng.gen_range(1..=4), rng.gen_range(1..=4));
                let s = if rng.gen() { k } else { (rng.gen_range(1..=4), rng.gen_range(1..=4)) };
                LayerSpec::Pool {
                    kind: if rng.gen() { PoolKind::Max } else { PoolKind::Avg },
                    geom: KernelGeometry::new(k.0, k.1, s.0, s.1),
                }
            }
            2 => LayerSpec::Dense {
                units: rng.gen_range(1..=2000),
                activation: random_activation(rng),
                bias: rng.gen(),
            },
            3 => LayerSpec::BatchNorm,
            4 => LayerSpec::Flatten,
            5 => LayerSpec::GlobalAvgPool,
            6 => {
                let label = format!("l{}_{}", labels.len(), rng.gen_range(0..100));
                labels.push(label.clone());
                LayerSpec::Label { label }
            }
            7 if !labels.is_empty() => {
                let label = labels[rng.gen_range(0..labels.len())].clone();
                LayerSpec::AddFrom { label }
            }
            8 if !labels.is_empty() => {
                let label = labels[rng.gen_range(0..labels.len())].clone();
                LayerSpec::Route { label }
            }
            9 => LayerSpec::ActivationOnly { activation: random_activation(rng) },
            _ => LayerSpec::ResBlock { filters: rng.gen_range(1..=128), downsample: rng.gen() },
        };
        layers.push(layer);
    }
    ModelGraph::new(random_name(rng), layers).expect("generated graph is valid")
}

/// Largest dimension allowed in desk-scale graphs.
pub const DESK_DIM: usize = 8;

fn random_desk_graph<R: Rng>(rng: &mut R) -> ModelGraph {
    let mut shape = TensorShape::new(
        rng.gen_range(1..=6),
        rng.gen_range(1..=6),
        rng.gen_range(1..=3),
    );
    let mut layers = vec![LayerSpec::Input { shape }];
    let wanted = rng.gen_range(1..=4);
    let mut flat = shape.is_flat();

    while layers.len() <= wanted {
        let choice = rng.gen_range(0..4);
        match choice {
            0 | 1 => {
                // conv (0) or pool (1) over the current spatial extent
                let pad = if choice == 0 && rng.gen_bool(0.3) { 1 } else { 0 };
                let max_kr = (shape.rows + 2 * pad).min(3);
                let max_kc = (shape.cols + 2 * pad).min(3);
                let geom = KernelGeometry::new(
                    rng.gen_range(1..=max_kr),
                    rng.gen_range(1..=max_kc),
                    rng.gen_range(1..=2),
                    rng.gen_range(1..=2),
                )
                .with_padding(pad, pad);
                let rows = conv_output_dim(shape.rows, geom.k_rows, geom.p_rows, geom.s_rows);
                let cols = conv_output_dim(shape.cols, geom.k_cols, geom.p_cols, geom.s_cols);
                let (Ok(rows), Ok(cols)) = (rows, cols) else { continue };
                if rows > DESK_DIM || cols > DESK_DIM {
                    continue;
                }
                if choice == 0 {
                    let filters = rng.gen_range(1..=4);
                    layers.push(LayerSpec::Conv2D {
                        filters,
                        geom,
                        activation: if rng.gen() { Activation::Relu } else { Activation::None },
                        bias: rng.gen(),
                    });
                    shape = TensorShape::new(rows, cols, filters);
                } else {
                    layers.push(LayerSpec::Pool {
                        kind: if rng.gen() { PoolKind::Max } else { PoolKind::Avg },
                        geom,
                    });
                    shape = TensorShape::new(rows, cols, shape.channels);
                }
                flat = shape.is_flat();
            }
            2 if flat => {
                let units = rng.gen_range(1..=DESK_DIM);
                layers.push(LayerSpec::Dense {
                    units,
                    activation: if rng.gen() { Activation::Relu } else { Activation::None },
                    bias: rng.gen(),
                });
                shape = TensorShape::flat(units);
            }
            3 if !flat && shape.elements() <= DESK_DIM as u64 => {
                layers.push(LayerSpec::Flatten);
                shape = TensorShape::flat(shape.elements() as usize);
                flat = true;
            }
            _ => continue,
        }
    }
    ModelGraph::new("desk", layers).expect("generated graph is valid")
}
