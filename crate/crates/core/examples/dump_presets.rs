//! Prints the canonical model description of every preset that ships with a
//! full graph. Used to regenerate the `.nnm` files in this directory.

use greenprint_core::dsl::serialize_model;
use greenprint_core::zoo;

fn main() {
    for (name, has_graph) in zoo::list_models() {
        if !has_graph {
            continue;
        }
        let entry = zoo::get_model(&name).expect("listed model exists");
        println!("{}", serialize_model(entry.graph.as_ref().unwrap()));
    }
}
