//! Saliency, point-of-interest detection and whitened patch extraction on one
//! synthetic frame. Writes the frame, its saliency map and the first patch as
//! PNGs under the system temp directory.
//!
//! cargo run --release --example whiten_and_detect [-- SEED]

use hsd::dataset::synth_sequence;
use hsd::preprocessing::{saliency_map, DetectorConfig, GrayImage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let frame = synth_sequence(1, seed).remove(0);
    let cfg = DetectorConfig::default();

    let sal = saliency_map(&frame.image, cfg.dog_sigma_small, cfg.dog_sigma_large)?;
    let landmarks = cfg.landmarks(&frame.image)?;
    println!(
        "{}x{} frame, {} landmarks (max {}, NMS radius {} px)",
        frame.image.width(),
        frame.image.height(),
        landmarks.len(),
        cfg.max_pois,
        cfg.nms_radius
    );
    for (poi, patch) in landmarks.iter().take(5) {
        let mean = patch.data().iter().sum::<f64>() / patch.dim() as f64;
        let energy = patch.data().iter().map(|v| v * v).sum::<f64>();
        println!(
            "  ({:3}, {:3}) saliency {:.3}  patch mean {mean:+.1e}  energy {energy:.3}",
            poi.x, poi.y, poi.saliency
        );
    }

    let dir = std::env::temp_dir().join("hsd_whiten_and_detect");
    std::fs::create_dir_all(&dir)?;
    frame.image.save_png(&dir.join("frame.png"))?;
    sal.save_png(&dir.join("saliency.png"))?;
    if let Some((_, patch)) = landmarks.first() {
        // rescale the zero-mean patch to [0, 1] for display
        let peak = patch.data().iter().fold(0f64, |m, v| m.max(v.abs())).max(1e-12);
        let side = patch.side();
        let img = GrayImage::from_fn(side, side, |x, y| 0.5 + 0.5 * patch.data()[y * side + x] / peak);
        img.save_png(&dir.join("patch0.png"))?;
    }
    println!("wrote PNGs to {}", dir.display());
    Ok(())
}
