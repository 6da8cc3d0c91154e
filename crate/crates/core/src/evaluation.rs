//! Learning / recording / test protocol, precision-recall scoring, query
//! timing and the log-polar baseline encoder.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{sample_places, Frame, Pose};
use crate::error::{Error, Result};
use crate::hierarchy::{Descriptor, HsdNetwork};
use crate::linalg::normalize;
use crate::preprocessing::{DetectorConfig, Patch};
use crate::vpr::{azimuth_activity, FrameMeta, Observation, PlaceMemory, VigilanceOutcome, VprConfig};

/// Turns a landmark patch into a fixed-length descriptor.
pub trait LandmarkEncoder: Sync {
    fn tag(&self) -> String;
    fn descriptor_len(&self) -> usize;
    fn encode(&self, patch: &Patch) -> Result<Descriptor>;
}

impl LandmarkEncoder for HsdNetwork {
    fn tag(&self) -> String {
        HsdNetwork::tag(self)
    }

    fn descriptor_len(&self) -> usize {
        HsdNetwork::descriptor_len(self)
    }

    fn encode(&self, patch: &Patch) -> Result<Descriptor> {
        self.encode_landmark(patch)
    }
}

/// Log-polar resampling of the whole patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogPolarEncoder {
    pub rings: usize,
    pub wedges: usize,
}

impl Default for LogPolarEncoder {
    fn default() -> Self {
        Self { rings: 54, wedges: 54 }
    }
}

pub const LOGPOLAR_TAG: &str = "LPMP";

impl LandmarkEncoder for LogPolarEncoder {
    fn tag(&self) -> String {
        LOGPOLAR_TAG.into()
    }

    fn descriptor_len(&self) -> usize {
        self.rings * self.wedges
    }

    fn encode(&self, patch: &Patch) -> Result<Descriptor> {
        logpolar_encode(patch, self.rings, self.wedges)
    }
}

fn patch_bilinear(patch: &Patch, x: f64, y: f64) -> f64 {
    let s = patch.side();
    let d = patch.data();
    let x = x.clamp(0.0, (s - 1) as f64);
    let y = y.clamp(0.0, (s - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(s - 1), (y0 + 1).min(s - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = d[y0 * s + x0] * (1.0 - fx) + d[y0 * s + x1] * fx;
    let bottom = d[y1 * s + x0] * (1.0 - fx) + d[y1 * s + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Samples the patch on `rings` log-spaced radii from 1 px to half the side
/// and `wedges` equal angles around the patch centre, ring-major, then
/// L2-normalizes.
pub fn logpolar_encode(patch: &Patch, rings: usize, wedges: usize) -> Result<Descriptor> {
    if rings < 2 || wedges == 0 {
        return Err(Error::arg("log-polar grid needs at least 2 rings and 1 wedge"));
    }
    if patch.side() < 4 {
        return Err(Error::arg("patch side must be at least 4"));
    }
    let c = (patch.side() as f64 - 1.0) / 2.0;
    let r_max = patch.side() as f64 / 2.0;
    let mut values = Vec::with_capacity(rings * wedges);
    for k in 0..rings {
        let r = r_max.powf(k as f64 / (rings - 1) as f64);
        for j in 0..wedges {
            let t = std::f64::consts::TAU * j as f64 / wedges as f64;
            values.push(patch_bilinear(patch, c + r * t.cos(), c + r * t.sin()));
        }
    }
    normalize(&mut values);
    Ok(Descriptor {
        values,
        config_tag: LOGPOLAR_TAG.into(),
    })
}

/// Multiply-accumulates of one cosine between unit descriptors.
pub fn matching_macs(descriptor_len: usize) -> usize {
    descriptor_len
}

/// Protocol settings shared by every encoder in a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub detector: DetectorConfig,
    pub vpr: VprConfig,
    /// Distance between places presented during learning.
    pub spacing_m: f64,
    pub tolerance_m: f64,
    pub baseline_seed: u64,
    pub timing_repeats: usize,
}

/// Mean plus one standard deviation of the reference GPS error.
pub const DEFAULT_TOLERANCE_M: f64 = 0.79 + 0.98;

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            detector: DetectorConfig::default(),
            vpr: VprConfig::default(),
            spacing_m: 2.0,
            tolerance_m: DEFAULT_TOLERANCE_M,
            baseline_seed: 0,
            timing_repeats: 3,
        }
    }
}

/// Detects landmarks in one frame and pairs each descriptor with its azimuth.
pub fn observe_frame(frame: &Frame, encoder: &dyn LandmarkEncoder, detector: &DetectorConfig, vpr: &VprConfig) -> Result<Vec<Observation>> {
    let w = frame.image.width() as f64;
    detector
        .landmarks(&frame.image)?
        .into_iter()
        .map(|(poi, patch)| {
            Ok(Observation {
                descriptor: encoder.encode(&patch)?,
                azimuth: azimuth_activity(frame.pose.heading, poi.x as f64, w, vpr.hfov_deg, vpr.azimuth_sigma_bins, vpr.azimuth_bins)?,
            })
        })
        .collect()
}

/// Observations of every frame, computed in parallel, in frame order.
pub fn frame_observations(frames: &[Frame], encoder: &dyn LandmarkEncoder, detector: &DetectorConfig, vpr: &VprConfig) -> Result<Vec<Vec<Observation>>> {
    frames
        .par_iter()
        .map(|f| observe_frame(f, encoder, detector, vpr))
        .collect()
}

/// Presents the `presented` frames in order with learning enabled. Cell
/// creation indices refer to positions in `observations`.
pub fn run_learning_phase(observations: &[Vec<Observation>], poses: &[Pose], presented: &[usize], vpr: &VprConfig) -> Result<PlaceMemory> {
    crate::error::check_dim(observations.len(), poses.len())?;
    let mut memory = PlaceMemory::new(*vpr);
    for &i in presented {
        let obs = observations
            .get(i)
            .ok_or_else(|| Error::OutOfBounds(format!("presented frame {i} of {}", observations.len())))?;
        let meta = FrameMeta {
            frame_index: i,
            x: poses[i].x,
            y: poses[i].y,
        };
        if let VigilanceOutcome::Recruited { index } = memory.learn_frame(obs, meta)? {
            log::debug!("frame {i}: recruited cell {index}");
        }
    }
    Ok(memory)
}

/// Frames of the learning trajectory won by one place cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceField {
    pub cell_index: usize,
    pub creation_frame: usize,
    pub extent: Vec<usize>,
}

/// Replays the learning frames without learning and charts which cell wins
/// each one. A cell's creation frame always belongs to its own field.
pub fn run_recording_phase(memory: &PlaceMemory, observations: &[Vec<Observation>]) -> Result<Vec<PlaceField>> {
    if memory.cells.is_empty() {
        return Err(Error::EmptyMemory);
    }
    let mut winners: Vec<usize> = observations
        .iter()
        .map(|obs| memory.localize(obs).map(|(cell, _)| cell))
        .collect::<Result<_>>()?;
    for (cell, c) in memory.cells.iter().enumerate() {
        if let Some(w) = winners.get_mut(c.creation_index) {
            *w = cell;
        }
    }
    let mut fields: Vec<PlaceField> = memory
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| PlaceField {
            cell_index: i,
            creation_frame: c.creation_index,
            extent: Vec::new(),
        })
        .collect();
    for (frame, &cell) in winners.iter().enumerate() {
        fields[cell].extent.push(frame);
    }
    Ok(fields)
}

/// Learning-trajectory positions covered by each place field.
struct FieldMap {
    positions: Vec<Vec<(f64, f64)>>,
}

impl FieldMap {
    fn new(fields: &[PlaceField], learn_poses: &[Pose]) -> Self {
        let n = fields.iter().map(|f| f.cell_index + 1).max().unwrap_or(0);
        let mut positions = vec![Vec::new(); n];
        for f in fields {
            positions[f.cell_index] = f.extent.iter().map(|&i| (learn_poses[i].x, learn_poses[i].y)).collect();
        }
        Self { positions }
    }

    fn covers(&self, cell: usize, pose: &Pose, tol: f64) -> bool {
        self.positions
            .get(cell)
            .is_some_and(|ps| ps.iter().any(|&(x, y)| (x - pose.x).hypot(y - pose.y) <= tol))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub cell: usize,
    pub activity: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    /// `None` where the frame produced no landmark deposit.
    pub predictions: Vec<Option<Prediction>>,
    /// Test frames within tolerance of some learning-trajectory position.
    pub localizable: usize,
}

/// Localizes every test frame and scores it against the recorded fields.
pub fn run_test_phase(
    memory: &PlaceMemory,
    fields: &[PlaceField],
    learn_poses: &[Pose],
    test_observations: &[Vec<Observation>],
    test_poses: &[Pose],
    tolerance_m: f64,
) -> Result<TestOutcome> {
    crate::error::check_dim(test_observations.len(), test_poses.len())?;
    let map = FieldMap::new(fields, learn_poses);
    let localizable = test_poses
        .iter()
        .filter(|p| learn_poses.iter().any(|l| l.distance(p) <= tolerance_m))
        .count();
    let predictions = test_observations
        .iter()
        .zip(test_poses)
        .map(|(obs, pose)| {
            let (cell, activity) = memory.localize(obs)?;
            Ok((activity > 0.0).then(|| Prediction {
                cell,
                activity,
                correct: map.covers(cell, pose, tolerance_m),
            }))
        })
        .collect::<Result<_>>()?;
    Ok(TestOutcome { predictions, localizable })
}

/// Same outcome with the predicted cells permuted across test frames.
pub fn shuffled_outcome(
    outcome: &TestOutcome,
    fields: &[PlaceField],
    learn_poses: &[Pose],
    test_poses: &[Pose],
    tolerance_m: f64,
    seed: u64,
) -> TestOutcome {
    let map = FieldMap::new(fields, learn_poses);
    let mut cells: Vec<usize> = outcome.predictions.iter().flatten().map(|p| p.cell).collect();
    cells.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut cells = cells.into_iter();
    let predictions = outcome
        .predictions
        .iter()
        .zip(test_poses)
        .map(|(p, pose)| {
            p.map(|p| {
                let cell = cells.next().expect("one shuffled cell per prediction");
                Prediction {
                    cell,
                    activity: p.activity,
                    correct: map.covers(cell, pose, tolerance_m),
                }
            })
        })
        .collect();
    TestOutcome {
        predictions,
        localizable: outcome.localizable,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// One point per distinct observed activity, thresholds descending: frames
/// with activity ≥ threshold are accepted.
pub fn pr_curve(outcome: &TestOutcome) -> Vec<PrPoint> {
    let mut preds: Vec<Prediction> = outcome.predictions.iter().flatten().copied().collect();
    preds.sort_by(|a, b| b.activity.total_cmp(&a.activity));
    let mut curve = Vec::new();
    let (mut accepted, mut tp) = (0usize, 0usize);
    let mut i = 0;
    while i < preds.len() {
        let t = preds[i].activity;
        while i < preds.len() && preds[i].activity == t {
            accepted += 1;
            tp += preds[i].correct as usize;
            i += 1;
        }
        curve.push(PrPoint {
            threshold: t,
            precision: tp as f64 / accepted as f64,
            recall: if outcome.localizable == 0 { 0.0 } else { (tp as f64 / outcome.localizable as f64).min(1.0) },
        });
    }
    curve
}

/// Trapezoidal area under precision over recall. The curve is extended to
/// recall 0 at the precision of its lowest-recall point.
pub fn auc(curve: &[PrPoint]) -> f64 {
    let mut pts: Vec<(f64, f64)> = curve.iter().map(|p| (p.recall, p.precision)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let Some(&(r0, p0)) = pts.first() else {
        return 0.0;
    };
    let mut area = r0 * p0;
    for w in pts.windows(2) {
        area += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0;
    }
    area.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub n_cells: usize,
    pub hz: f64,
    pub median_query_s: f64,
}

/// Median over `repeats` of the full per-frame query path (detect, encode,
/// localize) on one thread, as queries per second.
pub fn benchmark_query(
    memory: &PlaceMemory,
    frames: &[Frame],
    encoder: &dyn LandmarkEncoder,
    detector: &DetectorConfig,
    repeats: usize,
) -> Result<TimingRow> {
    if frames.is_empty() || repeats == 0 {
        return Err(Error::arg("benchmark needs frames and at least one repeat"));
    }
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        for f in frames {
            let obs = observe_frame(f, encoder, detector, &memory.config)?;
            std::hint::black_box(memory.localize(&obs)?);
        }
        times.push(start.elapsed().as_secs_f64() / frames.len() as f64);
    }
    times.sort_by(f64::total_cmp);
    let median = times[times.len() / 2];
    Ok(TimingRow {
        n_cells: memory.cells.len(),
        hz: 1.0 / median,
        median_query_s: median,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_tag: String,
    pub spacing_m: f64,
    pub tolerance_m: f64,
    pub auc: f64,
    pub shuffled_auc: f64,
    pub pr_curve: Vec<PrPoint>,
    pub query_frequency_hz: f64,
    pub cells_created: usize,
    pub landmarks_stored: usize,
    pub learn_frames: usize,
    pub presented_frames: usize,
    pub test_frames: usize,
    pub localizable_frames: usize,
    pub memory_hash: String,
}

/// Everything one protocol run produces.
#[derive(Debug, Clone)]
pub struct EvalRun {
    pub report: EvalReport,
    pub memory: PlaceMemory,
    pub fields: Vec<PlaceField>,
    pub timing: Vec<TimingRow>,
    /// Dataset frame index of each learning frame, for `fields.csv`.
    pub learn_frame_ids: Vec<usize>,
}

/// Full protocol on precomputed observations; no timing.
pub fn evaluate_observations(
    tag: &str,
    learn_frames: &[Frame],
    learn_obs: &[Vec<Observation>],
    test_frames: &[Frame],
    test_obs: &[Vec<Observation>],
    cfg: &EvalConfig,
) -> Result<EvalRun> {
    let learn_poses: Vec<Pose> = learn_frames.iter().map(|f| f.pose).collect();
    let test_poses: Vec<Pose> = test_frames.iter().map(|f| f.pose).collect();
    let presented = sample_places(&learn_poses, cfg.spacing_m)?;
    let memory = run_learning_phase(learn_obs, &learn_poses, &presented, &cfg.vpr)?;
    let fields = run_recording_phase(&memory, learn_obs)?;
    let outcome = run_test_phase(&memory, &fields, &learn_poses, test_obs, &test_poses, cfg.tolerance_m)?;
    let shuffled = shuffled_outcome(&outcome, &fields, &learn_poses, &test_poses, cfg.tolerance_m, cfg.baseline_seed);
    let curve = pr_curve(&outcome);
    let report = EvalReport {
        config_tag: tag.to_string(),
        spacing_m: cfg.spacing_m,
        tolerance_m: cfg.tolerance_m,
        auc: auc(&curve),
        shuffled_auc: auc(&pr_curve(&shuffled)),
        pr_curve: curve,
        query_frequency_hz: 0.0,
        cells_created: memory.cells.len(),
        landmarks_stored: memory.landmarks.len(),
        learn_frames: learn_frames.len(),
        presented_frames: presented.len(),
        test_frames: test_frames.len(),
        localizable_frames: outcome.localizable,
        memory_hash: memory.content_hash(),
    };
    Ok(EvalRun {
        report,
        memory,
        fields,
        timing: Vec::new(),
        learn_frame_ids: learn_poses.iter().map(|p| p.frame_index).collect(),
    })
}

/// Full protocol: encode, learn, record, test, then time the query path on
/// the test frames.
pub fn evaluate(learn_frames: &[Frame], test_frames: &[Frame], encoder: &dyn LandmarkEncoder, cfg: &EvalConfig) -> Result<EvalRun> {
    cfg.detector.validate()?;
    if learn_frames.is_empty() || test_frames.is_empty() {
        return Err(Error::arg("evaluation needs learning and test frames"));
    }
    let learn_obs = frame_observations(learn_frames, encoder, &cfg.detector, &cfg.vpr)?;
    let test_obs = frame_observations(test_frames, encoder, &cfg.detector, &cfg.vpr)?;
    let mut run = evaluate_observations(&encoder.tag(), learn_frames, &learn_obs, test_frames, &test_obs, cfg)?;
    if cfg.timing_repeats > 0 {
        let row = benchmark_query(&run.memory, test_frames, encoder, &cfg.detector, cfg.timing_repeats)?;
        run.report.query_frequency_hz = row.hz;
        run.timing.push(row);
    }
    Ok(run)
}

/// Runs the identical protocol once per encoder.
pub fn compare_encoders(
    learn_frames: &[Frame],
    test_frames: &[Frame],
    encoders: &[&dyn LandmarkEncoder],
    cfg: &EvalConfig,
) -> Result<Vec<EvalReport>> {
    encoders
        .iter()
        .map(|e| evaluate(learn_frames, test_frames, *e, cfg).map(|r| r.report))
        .collect()
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `pr_curve.csv`, `report.json`, `timing.csv` and `fields.csv`.
pub fn write_outputs(run: &EvalRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut pr = String::from("threshold,precision,recall\n");
    for p in &run.report.pr_curve {
        writeln!(pr, "{},{},{}", p.threshold, p.precision, p.recall).unwrap();
    }
    write_file(&dir.join("pr_curve.csv"), pr)?;
    write_file(&dir.join("report.json"), serde_json::to_string_pretty(&run.report)?)?;
    let mut timing = String::from("n_cells,hz\n");
    for t in &run.timing {
        writeln!(timing, "{},{}", t.n_cells, t.hz).unwrap();
    }
    write_file(&dir.join("timing.csv"), timing)?;
    let mut fields = String::from("cell,frame\n");
    for f in &run.fields {
        for &i in &f.extent {
            writeln!(fields, "{},{}", f.cell_index, run.learn_frame_ids[i]).unwrap();
        }
    }
    write_file(&dir.join("fields.csv"), fields)
}

/// Mean and population standard deviation of AUC per config tag.
pub fn aggregate_auc(reports: &[EvalReport]) -> BTreeMap<String, (f64, f64)> {
    let mut by_tag: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in reports {
        by_tag.entry(r.config_tag.clone()).or_default().push(r.auc);
    }
    by_tag
        .into_iter()
        .map(|(k, v)| (k, (crate::linalg::mean(&v), crate::linalg::std_dev(&v))))
        .collect()
}
