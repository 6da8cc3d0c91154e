//! Place memory: landmark identity ("what") merged with landmark azimuth
//! ("where") on a Max-Pi layer, place cells recruited by a vigilance loop.
//!
//! Each observation multiplies its recognition score by its azimuth activity
//! and deposits the product on the row of the matched landmark; deposits
//! from the landmarks of one frame are merged by element-wise max. Place
//! cells store unit-normalized copies of these patterns and respond with the
//! cosine between their stored pattern and the current one.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hierarchy::Descriptor;
use crate::linalg::{dot, norm};

/// Circular activity over `A` azimuth bins, peak 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AzimuthActivity {
    pub bins: Vec<f64>,
}

/// Absolute azimuth of a point of interest: vehicle heading plus the PoI's
/// angular offset from the image centre, spread by a circular Gaussian.
pub fn azimuth_activity(
    heading_deg: f64,
    poi_x: f64,
    img_width: f64,
    hfov_deg: f64,
    sigma_bins: f64,
    a_bins: usize,
) -> Result<AzimuthActivity> {
    if a_bins < 8 {
        return Err(Error::arg("need at least 8 azimuth bins"));
    }
    if !(hfov_deg > 0.0) || !(img_width > 0.0) {
        return Err(Error::arg("field of view and image width must be positive"));
    }
    if !(sigma_bins > 0.0) {
        return Err(Error::arg("azimuth spread must be positive"));
    }
    let theta = heading_deg + hfov_deg * (poi_x / img_width - 0.5);
    let a = a_bins as i64;
    let centre = ((theta / 360.0 * a_bins as f64).round() as i64).rem_euclid(a);
    let bins = (0..a)
        .map(|b| {
            let d = (b - centre).rem_euclid(a);
            let d = d.min(a - d) as f64;
            (-0.5 * (d / sigma_bins).powi(2)).exp()
        })
        .collect();
    Ok(AzimuthActivity { bins })
}

/// Append-only store of landmark signatures (unit-norm descriptors).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LandmarkMemory {
    pub signatures: Vec<Descriptor>,
}

impl LandmarkMemory {
    pub fn len(&self) -> usize {
        self.signatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signatures.is_empty()
    }

    /// Best stored signature by cosine; ties go to the lowest index.
    pub fn best_match(&self, d: &Descriptor) -> Option<(usize, f64)> {
        let nd = norm(&d.values);
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in self.signatures.iter().enumerate() {
            let ns = norm(&s.values);
            let sim = if nd == 0.0 || ns == 0.0 {
                0.0
            } else {
                dot(&s.values, &d.values) / (nd * ns)
            };
            if best.map_or(true, |b| sim > b.1) {
                best = Some((i, sim));
            }
        }
        best
    }
}

/// Landmark rows × azimuth columns, entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxPiPattern {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MaxPiPattern {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn is_blank(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    fn deposit(&mut self, row: usize, scale: f64, az: &AzimuthActivity) {
        let r = &mut self.data[row * self.cols..(row + 1) * self.cols];
        for (v, a) in r.iter_mut().zip(&az.bins) {
            *v = v.max(scale * a);
        }
    }
}

/// One landmark seen in a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub descriptor: Descriptor,
    pub azimuth: AzimuthActivity,
}

/// Builds the Max-Pi pattern of one frame.
///
/// Each observation is matched against the memory. With `learn` set, a
/// match below `floor` appends the descriptor as a new signature and
/// deposits with score 1. With `learn` unset the memory is frozen and the
/// observation deposits on its best match with the raw similarity.
/// Blank descriptors carry no identity and are skipped. The returned
/// pattern has one row per stored signature.
pub fn build_pattern(
    mem: &mut LandmarkMemory,
    observations: &[Observation],
    floor: f64,
    learn: bool,
) -> Result<MaxPiPattern> {
    if !learn {
        return frozen_pattern(mem, observations);
    }
    let cols = check_observations(mem, observations)?;
    let mut deposits = Vec::with_capacity(observations.len());
    for obs in observations.iter().filter(|o| !o.descriptor.is_blank()) {
        match mem.best_match(&obs.descriptor) {
            Some((row, sim)) if sim >= floor => deposits.push((row, sim, &obs.azimuth)),
            _ => {
                mem.signatures.push(obs.descriptor.clone());
                deposits.push((mem.signatures.len() - 1, 1.0, &obs.azimuth));
            }
        }
    }
    let mut pattern = MaxPiPattern::zeros(mem.len(), cols);
    for (row, s, az) in deposits {
        pattern.deposit(row, s, az);
    }
    Ok(pattern)
}

fn frozen_pattern(mem: &LandmarkMemory, observations: &[Observation]) -> Result<MaxPiPattern> {
    let cols = check_observations(mem, observations)?;
    let mut pattern = MaxPiPattern::zeros(mem.len(), cols);
    for obs in observations.iter().filter(|o| !o.descriptor.is_blank()) {
        if let Some((row, sim)) = mem.best_match(&obs.descriptor) {
            pattern.deposit(row, sim.max(0.0), &obs.azimuth);
        }
    }
    Ok(pattern)
}

fn check_observations(mem: &LandmarkMemory, observations: &[Observation]) -> Result<usize> {
    let first = observations.first().ok_or_else(|| Error::arg("no observations to merge"))?;
    let cols = first.azimuth.bins.len();
    if observations.iter().any(|o| o.azimuth.bins.len() != cols) {
        return Err(Error::arg("observations use different azimuth resolutions"));
    }
    if let Some(sig) = mem.signatures.first() {
        for o in observations.iter().filter(|o| !o.descriptor.is_blank()) {
            crate::error::check_dim(sig.values.len(), o.descriptor.values.len())?;
        }
    }
    Ok(cols)
}

/// Ground-truth position at which a place cell was recruited.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub frame_index: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceCell {
    /// Unit-normalized flattened pattern, `pattern_rows × azimuth bins`.
    pub weights: Vec<f64>,
    pub pattern_rows: usize,
    pub creation_index: usize,
    pub location: (f64, f64),
}

/// Cosine of the pattern against every cell; stored patterns recorded while
/// the landmark memory was smaller are zero-padded. Only the pattern rows
/// holding a deposit contribute, so the cost scales with the landmarks seen
/// in the frame rather than with the memory size.
pub fn place_cell_activities(cells: &[PlaceCell], pattern: &MaxPiPattern) -> Vec<f64> {
    let n = norm(&pattern.data);
    if n == 0.0 {
        return vec![0.0; cells.len()];
    }
    let cols = pattern.cols;
    let active: Vec<usize> = (0..pattern.rows)
        .filter(|&r| pattern.data[r * cols..(r + 1) * cols].iter().any(|&v| v != 0.0))
        .collect();
    cells
        .iter()
        .map(|c| {
            let s: f64 = active
                .iter()
                .filter(|&&r| r < c.pattern_rows)
                .map(|&r| dot(&c.weights[r * cols..(r + 1) * cols], &pattern.data[r * cols..(r + 1) * cols]))
                .sum();
            (s / n).clamp(0.0, 1.0)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VigilanceConfig {
    /// Recognition threshold ρ.
    pub threshold: f64,
    /// Minimum cosine for a landmark to count as already known.
    pub what_match_floor: f64,
}

impl Default for VigilanceConfig {
    fn default() -> Self {
        Self {
            threshold: 0.9,
            what_match_floor: 0.85,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VigilanceOutcome {
    Recognized { index: usize, activity: f64 },
    Recruited { index: usize },
    /// Blank pattern: nothing to recognize or learn.
    Blank,
}

/// Recognizes the pattern when the best cell reaches the threshold, otherwise
/// recruits a new cell storing it.
pub fn vigilance_step(
    cells: &mut Vec<PlaceCell>,
    pattern: &MaxPiPattern,
    cfg: &VigilanceConfig,
    meta: FrameMeta,
) -> (VigilanceOutcome, Vec<f64>) {
    let activities = place_cell_activities(cells, pattern);
    if let Some((index, activity)) = argmax(&activities) {
        if activity >= cfg.threshold {
            return (VigilanceOutcome::Recognized { index, activity }, activities);
        }
    }
    let n = norm(&pattern.data);
    if n == 0.0 {
        return (VigilanceOutcome::Blank, activities);
    }
    cells.push(PlaceCell {
        weights: pattern.data.iter().map(|v| v / n).collect(),
        pattern_rows: pattern.rows,
        creation_index: meta.frame_index,
        location: (meta.x, meta.y),
    });
    (VigilanceOutcome::Recruited { index: cells.len() - 1 }, activities)
}

/// First maximum.
fn argmax(v: &[f64]) -> Option<(usize, f64)> {
    v.iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &a)| match best {
            Some((_, b)) if b >= a => best,
            _ => Some((i, a)),
        })
}

/// Best-responding cell without any learning.
pub fn localize(cells: &[PlaceCell], pattern: &MaxPiPattern) -> Result<(usize, f64)> {
    argmax(&place_cell_activities(cells, pattern)).ok_or(Error::EmptyMemory)
}

/// Azimuth and recognition settings of the place memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VprConfig {
    pub vigilance: VigilanceConfig,
    pub azimuth_bins: usize,
    pub azimuth_sigma_bins: f64,
    pub hfov_deg: f64,
}

impl Default for VprConfig {
    fn default() -> Self {
        Self {
            vigilance: VigilanceConfig::default(),
            azimuth_bins: 180,
            azimuth_sigma_bins: 2.0,
            hfov_deg: 81.0,
        }
    }
}

/// Landmark signatures, place cells and the settings they were learned with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceMemory {
    pub config: VprConfig,
    pub landmarks: LandmarkMemory,
    pub cells: Vec<PlaceCell>,
}

impl PlaceMemory {
    pub fn new(config: VprConfig) -> Self {
        Self {
            config,
            landmarks: LandmarkMemory::default(),
            cells: Vec::new(),
        }
    }

    /// Pattern of a frame with recruitment of new signatures enabled.
    pub fn learn_pattern(&mut self, observations: &[Observation]) -> Result<MaxPiPattern> {
        let floor = self.config.vigilance.what_match_floor;
        build_pattern(&mut self.landmarks, observations, floor, true)
    }

    /// Pattern of a frame against the frozen signature memory.
    pub fn query_pattern(&self, observations: &[Observation]) -> Result<MaxPiPattern> {
        if observations.is_empty() {
            return Ok(MaxPiPattern::zeros(self.landmarks.len(), self.config.azimuth_bins));
        }
        frozen_pattern(&self.landmarks, observations)
    }

    /// Learning step: pattern with signature recruitment, then vigilance.
    pub fn learn_frame(&mut self, observations: &[Observation], meta: FrameMeta) -> Result<VigilanceOutcome> {
        if observations.is_empty() {
            return Ok(VigilanceOutcome::Blank);
        }
        let pattern = self.learn_pattern(observations)?;
        Ok(vigilance_step(&mut self.cells, &pattern, &self.config.vigilance, meta).0)
    }

    pub fn localize(&self, observations: &[Observation]) -> Result<(usize, f64)> {
        localize(&self.cells, &self.query_pattern(observations)?)
    }

    /// SHA-256 over a canonical little-endian encoding of the whole memory.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        let c = &self.config;
        for v in [c.vigilance.threshold, c.vigilance.what_match_floor, c.azimuth_sigma_bins, c.hfov_deg] {
            h.update(v.to_le_bytes());
        }
        h.update((c.azimuth_bins as u64).to_le_bytes());
        h.update((self.landmarks.len() as u64).to_le_bytes());
        for s in &self.landmarks.signatures {
            h.update((s.values.len() as u64).to_le_bytes());
            for v in &s.values {
                h.update(v.to_le_bytes());
            }
            h.update(s.config_tag.as_bytes());
        }
        h.update((self.cells.len() as u64).to_le_bytes());
        for cell in &self.cells {
            h.update((cell.pattern_rows as u64).to_le_bytes());
            h.update((cell.creation_index as u64).to_le_bytes());
            h.update(cell.location.0.to_le_bytes());
            h.update(cell.location.1.to_le_bytes());
            for v in &cell.weights {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}
