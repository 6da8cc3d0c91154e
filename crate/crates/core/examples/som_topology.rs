//! Lays a learned dictionary out on a self-organizing map and checks that
//! grid neighbours hold similar atoms.
//!
//! cargo run --release --example som_topology [-- SIDE]

use hsd::cli::training_patches;
use hsd::dataset::synth_sequence;
use hsd::preprocessing::DetectorConfig;
use hsd::sparse_layer::{learn_dictionary, SparseLearnConfig};
use hsd::topology::{assign_atoms, assignment_cost, topographic_distances, train_som, SomConfig};

fn main() -> hsd::Result<()> {
    let side = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10usize);
    let frames = synth_sequence(60, 2);
    let patches = training_patches(&frames, &DetectorConfig::default(), 600, 0)?;
    let samples: Vec<Vec<f64>> = patches.iter().map(|p| p.normalized()).collect();
    let learned = learn_dictionary(&samples, side * side, &SparseLearnConfig { epochs: 3, ..Default::default() })?;
    let dict = &learned.dictionary;

    let atoms: Vec<&[f64]> = (0..dict.atom_count()).map(|i| dict.atom(i)).collect();
    let grid = train_som(&atoms, side, side, &SomConfig { iterations: 5000, ..Default::default() })?;
    let grid = assign_atoms(&grid, dict)?;
    let (adjacent, random) = topographic_distances(&grid, dict, 2000, 1);
    println!("{side}x{side} map, {} atoms", dict.atom_count());
    println!("assignment cost {:.3}", assignment_cost(&grid, dict));
    println!("mean atom distance: grid neighbours {adjacent:.3}, random pairs {random:.3}");

    // atom index per cell, top-left corner
    let occupancy = grid.occupancy();
    for r in 0..side.min(6) {
        let row: Vec<String> = (0..side.min(6))
            .map(|c| occupancy[r * side + c].map_or("  .".into(), |a| format!("{a:3}")))
            .collect();
        println!("  {}", row.join(" "));
    }
    Ok(())
}
