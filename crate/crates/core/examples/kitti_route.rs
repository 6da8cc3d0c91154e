//! Full protocol on a KITTI odometry route. Needs the grayscale sequences and
//! ground-truth poses under `HSD_DATA_DIR` (`sequences/05/image_0`,
//! `poses/05.txt`, ...).
//!
//! HSD_DATA_DIR=/data/kitti cargo run --release --example kitti_route [-- K5-1]

use hsd::cli::{load_route, training_patches, RouteArgs};
use hsd::dataset::RouteSpec;
use hsd::evaluation::{evaluate, EvalConfig};
use hsd::hierarchy::{train_network, NetworkShape, TrainConfig};

fn main() -> hsd::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "K5-1".into());
    let spec = RouteSpec::by_name(&name)?;
    let Some(data_dir) = std::env::var_os("HSD_DATA_DIR").map(std::path::PathBuf::from) else {
        println!("HSD_DATA_DIR is not set; point it at a KITTI odometry root to run {name}");
        return Ok(());
    };
    let route = load_route(&RouteArgs { route: name.clone(), data_dir: Some(data_dir) }, 0)?;
    println!(
        "{name}: sequence {}, {} learn frames, {} test frames, {} pre-training frames",
        spec.sequence,
        route.learn.len(),
        route.test.len(),
        route.pretrain.len()
    );

    let cfg = EvalConfig::default();
    let patches = training_patches(&route.pretrain, &cfg.detector, 3000, 0)?;
    let (net, _) = train_network(&patches, &TrainConfig::new(NetworkShape::balanced(15)))?;
    for spacing in [2.0, 3.0, 5.0] {
        let run = evaluate(&route.learn, &route.test, &net, &EvalConfig { spacing_m: spacing, ..cfg })?;
        let r = &run.report;
        println!(
            "spacing {spacing} m: AUC {:.3} (shuffled {:.3}), {} cells, {:.0} Hz",
            r.auc, r.shuffled_auc, r.cells_created, r.query_frequency_hz
        );
    }
    Ok(())
}
