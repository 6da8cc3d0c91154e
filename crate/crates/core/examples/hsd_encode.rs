//! Trains a small two-stage network, encodes the landmarks of one frame and
//! matches them against the same place seen on the second pass.
//!
//! cargo run --release --example hsd_encode [-- SIDE]

use hsd::cli::training_patches;
use hsd::dataset::{synth_pair, SynthConfig, SynthWorld};
use hsd::format::{network_from_bytes, network_to_bytes};
use hsd::hierarchy::{train_network, NetworkShape, TrainConfig};
use hsd::linalg::cosine;
use hsd::preprocessing::DetectorConfig;

fn main() -> hsd::Result<()> {
    let side = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(12usize);
    let detector = DetectorConfig::default();

    let pretrain = SynthWorld::new(SynthConfig::default(), 100.0, 42).pass(100);
    let patches = training_patches(&pretrain, &detector, 500, 0)?;
    let mut cfg = TrainConfig::new(NetworkShape::balanced(side));
    cfg.s1.epochs = 4;
    cfg.s2.epochs = 4;
    cfg.som.iterations = 2000;
    let (net, report) = train_network(&patches, &cfg)?;
    let bytes = network_to_bytes(&net);
    println!(
        "{}: S1 {}x{} atoms of dim {}, S2 input dim {}, descriptor {} values, model {} bytes",
        net.tag(),
        side,
        side,
        net.input_dim(),
        net.s2().input_dim(),
        net.descriptor_len(),
        bytes.len()
    );
    println!(
        "reconstruction rate S1 {:.3}, S2 {:.3}",
        report.s1_reconstruction_rate, report.s2_reconstruction_rate
    );
    let net = network_from_bytes(&bytes)?;

    let (learn, test) = synth_pair(20, 3);
    let a = detector.landmarks(&learn[10].image)?;
    let b = detector.landmarks(&test[10].image)?;
    let encode = |l: &[(hsd::PointOfInterest, hsd::Patch)]| {
        l.iter().map(|(_, p)| net.encode_landmark(p)).collect::<hsd::Result<Vec<_>>>()
    };
    let (da, db) = (encode(&a)?, encode(&b)?);

    let s1 = net.s1_activity(&a[0].1)?;
    let active = s1.values().iter().filter(|v| **v != 0.0).count();
    println!("first landmark: {active} active S1 cells out of {}", s1.values().len());

    println!("landmark  best match  cosine  pixel offset");
    for (i, (pa, d)) in a.iter().zip(&da).enumerate().take(8) {
        let Some((j, c)) = db
            .iter()
            .enumerate()
            .map(|(j, e)| (j, cosine(&d.values, &e.values)))
            .max_by(|x, y| x.1.total_cmp(&y.1))
        else {
            break;
        };
        let pb = &b[j].0;
        let off = ((pa.0.x as f64 - pb.x as f64).hypot(pa.0.y as f64 - pb.y as f64)).round();
        println!("{i:8}  {j:10}  {c:6.3}  {off:6}");
    }
    Ok(())
}
