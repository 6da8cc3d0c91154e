//! Synthetic corridor, HSD-15 encoder, vigilance place memory: prints AUC
//! against the shuffled baseline for each place spacing.
//!
//! cargo run --release --example place_recognition [-- SEED FRAMES]

use std::time::Instant;

use hsd::cli::training_patches;
use hsd::dataset::{synth_pair, SynthConfig, SynthWorld};
use hsd::evaluation::{evaluate_observations, frame_observations, EvalConfig};
use hsd::hierarchy::{train_network, NetworkShape, TrainConfig};

fn main() -> hsd::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let seed = args.first().copied().unwrap_or(1);
    let frames = args.get(1).copied().unwrap_or(200) as usize;

    let cfg = EvalConfig::default();
    let t = Instant::now();
    let pretrain = SynthWorld::new(SynthConfig::default(), 150.0, 1000 + seed).pass(150);
    let patches = training_patches(&pretrain, &cfg.detector, 600, seed)?;
    let mut tc = TrainConfig::new(NetworkShape::balanced(15));
    tc.s1.epochs = 5;
    tc.s2.epochs = 5;
    tc.som.iterations = 2000;
    let (net, report) = train_network(&patches, &tc)?;
    println!(
        "trained {} on {} patches in {:.1}s (S1 reconstruction {:.3})",
        net.tag(),
        patches.len(),
        t.elapsed().as_secs_f64(),
        report.s1_reconstruction_rate
    );

    let t = Instant::now();
    let (learn, test) = synth_pair(frames, seed);
    let learn_obs = frame_observations(&learn, &net, &cfg.detector, &cfg.vpr)?;
    let test_obs = frame_observations(&test, &net, &cfg.detector, &cfg.vpr)?;
    println!("encoded {} frames in {:.1}s", 2 * frames, t.elapsed().as_secs_f64());

    for spacing in [2.0, 3.0, 5.0] {
        let cfg = EvalConfig { spacing_m: spacing, ..cfg };
        let run = evaluate_observations(&net.tag(), &learn, &learn_obs, &test, &test_obs, &cfg)?;
        let r = &run.report;
        println!(
            "spacing {spacing} m: AUC {:.3}, shuffled {:.3}, {} cells, {} landmarks",
            r.auc, r.shuffled_auc, r.cells_created, r.landmarks_stored
        );
    }
    Ok(())
}
