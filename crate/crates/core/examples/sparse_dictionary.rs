//! Learns an S1 dictionary on whitened landmark patches with matching pursuit
//! and Hebbian updates, with and without homeostasis, and compares atom usage
//! entropy and reconstruction.
//!
//! cargo run --release --example sparse_dictionary [-- ATOMS EPOCHS]

use hsd::cli::training_patches;
use hsd::dataset::synth_sequence;
use hsd::preprocessing::DetectorConfig;
use hsd::sparse_layer::{encode_mp, learn_dictionary, reconstruction_rate, usage_entropy, SparseLearnConfig};

fn main() -> hsd::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let atoms = args.first().copied().unwrap_or(100);
    let epochs = args.get(1).copied().unwrap_or(4);

    let frames = synth_sequence(80, 5);
    let patches = training_patches(&frames, &DetectorConfig::default(), 800, 0)?;
    let samples: Vec<Vec<f64>> = patches.iter().map(|p| p.normalized()).collect();
    println!("{} patches of dimension {}", samples.len(), samples[0].len());

    for homeostasis in [false, true] {
        let cfg = SparseLearnConfig { epochs, homeostasis, ..Default::default() };
        let learned = learn_dictionary(&samples, atoms, &cfg)?;
        let codes = samples
            .iter()
            .map(|s| encode_mp(&learned.dictionary, &learned.homeostasis, s, cfg.n0, homeostasis))
            .collect::<hsd::Result<Vec<_>>>()?;
        let rate = reconstruction_rate(&learned.dictionary, &codes, &samples)?;
        let costs = &learned.log.epoch_mean_cost;
        println!(
            "homeostasis {:5}: usage entropy {:.2} bits (max {:.2}), reconstruction {:.3}, cost {:.3} -> {:.3}",
            homeostasis,
            usage_entropy(&learned.log.first_selection_counts),
            (atoms as f64).log2(),
            rate,
            costs[0],
            costs[costs.len() - 1]
        );
    }
    Ok(())
}
