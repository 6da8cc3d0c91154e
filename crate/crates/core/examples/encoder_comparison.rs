//! Runs the place recognition protocol once per encoder on the same
//! synthetic route: HSD networks of increasing size against the log-polar
//! baseline. Prints AUC, descriptor length and query rate.
//!
//! cargo run --release --example encoder_comparison [-- SEED FRAMES]

use hsd::cli::training_patches;
use hsd::dataset::{synth_pair, SynthConfig, SynthWorld};
use hsd::evaluation::{compare_encoders, matching_macs, EvalConfig, LandmarkEncoder, LogPolarEncoder};
use hsd::hierarchy::{train_network, NetworkShape, TrainConfig};
use hsd::HsdNetwork;

fn main() -> hsd::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let seed = args.first().copied().unwrap_or(2);
    let frames = args.get(1).copied().unwrap_or(120) as usize;
    let cfg = EvalConfig { timing_repeats: 1, ..Default::default() };

    let pretrain = SynthWorld::new(SynthConfig::default(), 150.0, 500 + seed).pass(150);
    let patches = training_patches(&pretrain, &cfg.detector, 600, seed)?;
    let networks: Vec<HsdNetwork> = [12, 15, 18]
        .into_iter()
        .map(|side| {
            let mut tc = TrainConfig::new(NetworkShape::balanced(side));
            tc.s1.epochs = 4;
            tc.s2.epochs = 4;
            tc.som.iterations = 2000;
            train_network(&patches, &tc).map(|(n, _)| n)
        })
        .collect::<hsd::Result<_>>()?;
    let logpolar = LogPolarEncoder::default();

    let mut encoders: Vec<&dyn LandmarkEncoder> = networks.iter().map(|n| n as &dyn LandmarkEncoder).collect();
    encoders.push(&logpolar);
    let (learn, test) = synth_pair(frames, seed);
    let reports = compare_encoders(&learn, &test, &encoders, &cfg)?;

    println!("{:<8} {:>6} {:>6} {:>9} {:>8} {:>8}", "encoder", "len", "MACs", "AUC", "shuffled", "Hz");
    for (e, r) in encoders.iter().zip(&reports) {
        println!(
            "{:<8} {:>6} {:>6} {:>9.3} {:>8.3} {:>8.0}",
            r.config_tag,
            e.descriptor_len(),
            matching_macs(e.descriptor_len()),
            r.auc,
            r.shuffled_auc,
            r.query_frequency_hz
        );
    }
    Ok(())
}
