//! Command-line front end: `train`, `eval`, `sweep`, `synth`, `dataset`,
//! `inspect`.
//!
//! Every flag can also come from a `key = value` file given with
//! `--config-file`; flags on the command line win. Each run writes its fully
//! resolved settings to `config.txt` in the output directory, and
//! `--config-file <out>/config.txt` replays it.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::{
    load_frames, load_sequence, parse_range, range_len, sample_places, synth_pair, Frame, RouteSpec, SynthConfig,
    SynthWorld, KITTI_SIZE,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    aggregate_auc, benchmark_query, evaluate_observations, frame_observations, write_outputs, EvalConfig, EvalReport,
    LandmarkEncoder, LogPolarEncoder, LOGPOLAR_TAG,
};
use crate::format::{load_network, save_network};
use crate::hierarchy::{train_network, HsdNetwork, NetworkShape, TrainConfig, TrainingReport};
use crate::preprocessing::{DetectorConfig, GrayImage, Patch};
use crate::sparse_layer::{encode_mp, reconstruction_rate};
use crate::vpr::{VigilanceConfig, VprConfig};

/// Tags accepted by `--config` besides the open `HSD-<n>/<m>` family.
pub const KNOWN_TAGS: &[&str] = &["HSD-12", "HSD-15", "HSD-18", "HSD-21", "HSD-24", "HSD-30", "HSD-15/30", "LPMP"];

#[derive(Debug, Parser)]
#[command(name = "hsd", version, about = "Hierarchical sparse dictionaries and landmark place recognition")]
pub struct Cli {
    /// key = value file merged under the command-line flags.
    #[arg(long, global = true)]
    pub config_file: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn an HSD network on the route's pre-training frames.
    Train(TrainArgs),
    /// Learning, recording and test phases for one encoder.
    Eval(EvalArgs),
    /// `eval` over several configs and spacings, one CSV row per pair.
    Sweep(SweepArgs),
    /// Render a synthetic corridor and its revisit pass as PNG + poses.csv.
    Synth(SynthArgs),
    /// Check a KITTI-style image directory and pose file.
    Dataset(DatasetArgs),
    /// Tile the atoms of a trained layer by grid position into a PNG.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct DetectorArgs {
    #[arg(long, default_value_t = 32)]
    pub patch_side: usize,
    #[arg(long, default_value_t = 20)]
    pub max_pois: usize,
    #[arg(long, default_value_t = 16.0)]
    pub nms_radius: f64,
    /// Small and large DoG sigmas, `s,l`.
    #[arg(long, default_value = "1,3")]
    pub dog_sigmas: String,
}

impl DetectorArgs {
    pub fn config(&self) -> Result<DetectorConfig> {
        let s = parse_list::<f64>(&self.dog_sigmas, "dog-sigmas")?;
        if s.len() != 2 {
            return Err(Error::arg("--dog-sigmas takes two values, small,large"));
        }
        let cfg = DetectorConfig {
            patch_side: self.patch_side,
            max_pois: self.max_pois,
            nms_radius: self.nms_radius,
            dog_sigma_small: s[0],
            dog_sigma_large: s[1],
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct RouteArgs {
    /// KITTI route name (K0-1, K5-1, K5-2) or `synth:SEED:FRAMES`.
    #[arg(long, default_value = "synth:0:200")]
    pub route: String,
    /// KITTI odometry root holding `sequences/` and `poses/`.
    #[arg(long, env = "HSD_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct NetworkArgs {
    /// Atom count per side, overriding the config tag.
    #[arg(long)]
    pub atoms: Option<usize>,
    /// Grid side, overriding the config tag.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub pool: usize,
    #[arg(long, default_value_t = 10)]
    pub n0_s1: usize,
    #[arg(long, default_value_t = 5)]
    pub n0_s2: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5000)]
    pub som_iterations: usize,
    /// Training patches drawn from the pre-training frames.
    #[arg(long, default_value_t = 1000)]
    pub max_train_patches: usize,
}

impl NetworkArgs {
    fn shape(&self, tag: &str) -> Result<NetworkShape> {
        let mut shape = parse_hsd_tag(tag)?;
        if let Some(a) = self.atoms {
            shape.atoms_side = a;
        }
        if let Some(g) = self.grid {
            shape.grid_side = g;
        } else if self.atoms.is_some() && !tag.contains('/') {
            shape.grid_side = shape.atoms_side;
        }
        shape.pool = self.pool;
        shape.validate()?;
        Ok(shape)
    }

    fn train_config(&self, shape: NetworkShape, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::new(shape);
        cfg.s1.n0 = self.n0_s1;
        cfg.s2.n0 = self.n0_s2;
        cfg.s1.epochs = self.epochs;
        cfg.s2.epochs = self.epochs;
        cfg.s1.seed = seed;
        cfg.s2.seed = seed.wrapping_add(1);
        cfg.som.iterations = self.som_iterations;
        cfg.som.seed = seed;
        cfg
    }
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct VprArgs {
    /// Recognition threshold of the vigilance loop.
    #[arg(long, default_value_t = 0.9)]
    pub vigilance: f64,
    /// Minimum cosine for a landmark to count as already known.
    #[arg(long, default_value_t = 0.85)]
    pub what_floor: f64,
    #[arg(long, default_value_t = 180)]
    pub azimuth_bins: usize,
    #[arg(long, default_value_t = 2.0)]
    pub azimuth_sigma: f64,
    /// Horizontal field of view of the camera, degrees.
    #[arg(long, default_value_t = 81.0)]
    pub hfov: f64,
    #[arg(long, default_value_t = crate::evaluation::DEFAULT_TOLERANCE_M)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 3)]
    pub timing_repeats: usize,
}

impl VprArgs {
    fn config(&self) -> Result<VprConfig> {
        if !(self.vigilance > 0.0 && self.vigilance < 1.0) {
            return Err(Error::arg("--vigilance must lie in (0, 1)"));
        }
        Ok(VprConfig {
            vigilance: VigilanceConfig {
                threshold: self.vigilance,
                what_match_floor: self.what_floor,
            },
            azimuth_bins: self.azimuth_bins,
            azimuth_sigma_bins: self.azimuth_sigma,
            hfov_deg: self.hfov,
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub route: RouteArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub detector: DetectorArgs,
    /// HSD config tag, e.g. HSD-15 or HSD-15/30.
    #[arg(long, default_value = "HSD-15")]
    pub config: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub network: NetworkArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub route: RouteArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub detector: DetectorArgs,
    /// Encoder: an HSD config tag or LPMP for the log-polar baseline.
    #[arg(long, default_value = "HSD-15")]
    pub config: String,
    /// Trained model; trained on the pre-training frames when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub vpr: VprArgs,
    /// Place spacings in metres, comma separated.
    #[arg(long, default_value = "2,3,5")]
    pub spacing: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub route: RouteArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub detector: DetectorArgs,
    /// Config tags, comma separated.
    #[arg(long, default_value = "HSD-12,HSD-15,HSD-18,HSD-24,HSD-30,HSD-15/30,LPMP")]
    pub configs: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub network: NetworkArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub vpr: VprArgs,
    #[arg(long, default_value = "2,3,5")]
    pub spacing: String,
    /// Seeds averaged per row (network training and, for synthetic routes,
    /// the world offset).
    #[arg(long, default_value = "0")]
    pub seeds: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct DatasetArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub poses: PathBuf,
    /// Inclusive frame range `A:B`.
    #[arg(long)]
    pub range: String,
    #[arg(long, default_value = "2,3,5")]
    pub spacing: String,
    #[arg(long, default_value_t = KITTI_SIZE.0)]
    pub width: usize,
    #[arg(long, default_value_t = KITTI_SIZE.1)]
    pub height: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// `s1` or `s2`.
    #[arg(long, default_value = "s1")]
    pub layer: String,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|v| !v.trim().is_empty())
        .map(|v| v.trim().parse::<T>().map_err(|_| Error::arg(format!("bad value {v:?} in --{what}"))))
        .collect()
}

fn unknown_tag(tag: &str) -> Error {
    Error::arg(format!(
        "unknown config tag '{tag}'; valid tags: {}, or HSD-<atoms>/<grid>",
        KNOWN_TAGS.join(", ")
    ))
}

fn parse_hsd_tag(tag: &str) -> Result<NetworkShape> {
    tag.parse::<NetworkShape>().map_err(|_| unknown_tag(tag))
}

/// Encoder named by a config tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderSpec {
    Hsd(NetworkShape),
    LogPolar,
}

pub fn parse_encoder_tag(tag: &str) -> Result<EncoderSpec> {
    if tag.trim() == LOGPOLAR_TAG {
        return Ok(EncoderSpec::LogPolar);
    }
    parse_hsd_tag(tag).map(EncoderSpec::Hsd)
}

/// Learn, test and pre-training frames of a route.
pub struct RouteData {
    pub learn: Vec<Frame>,
    pub test: Vec<Frame>,
    pub pretrain: Vec<Frame>,
}

/// Frames rendered for pre-training on synthetic routes, from a world that
/// shares nothing with the evaluated one.
const SYNTH_PRETRAIN_FRAMES: usize = 150;

pub fn parse_synth_route(route: &str) -> Option<Result<(u64, usize)>> {
    let rest = route.strip_prefix("synth:")?;
    let parsed = rest.split_once(':').and_then(|(s, n)| Some((s.parse().ok()?, n.parse().ok()?)));
    Some(parsed.ok_or_else(|| Error::arg(format!("synthetic route {route:?} is not synth:SEED:FRAMES"))))
}

pub fn load_route(args: &RouteArgs, seed_offset: u64) -> Result<RouteData> {
    if let Some(parsed) = parse_synth_route(&args.route) {
        let (seed, frames) = parsed?;
        let seed = seed.wrapping_add(seed_offset);
        let (learn, test) = synth_pair(frames, seed);
        let cfg = SynthConfig::default();
        let pretrain = SynthWorld::new(cfg, SYNTH_PRETRAIN_FRAMES as f64 * cfg.m_per_frame, seed ^ 0x9e37_79b9_7f4a_7c15)
            .pass(SYNTH_PRETRAIN_FRAMES);
        return Ok(RouteData { learn, test, pretrain });
    }
    let spec = RouteSpec::by_name(&args.route)?;
    let root = args
        .data_dir
        .as_ref()
        .ok_or_else(|| Error::arg("KITTI routes need --data-dir or HSD_DATA_DIR"))?;
    let (images, poses) = spec.paths(root);
    Ok(RouteData {
        learn: load_sequence(&images, &poses, spec.learn_range, KITTI_SIZE)?,
        test: load_sequence(&images, &poses, spec.test_range, KITTI_SIZE)?,
        pretrain: load_frames(&images, &poses, &spec.pretrain_indices(), KITTI_SIZE)?,
    })
}

/// Landmark patches of the frames, subsampled to at most `max` with a seeded
/// shuffle.
pub fn training_patches(frames: &[Frame], detector: &DetectorConfig, max: usize, seed: u64) -> Result<Vec<Patch>> {
    let mut patches = Vec::new();
    for f in frames {
        patches.extend(detector.landmarks(&f.image)?.into_iter().map(|(_, p)| p));
    }
    if patches.len() > max {
        patches.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        patches.truncate(max);
    }
    Ok(patches)
}

fn train_from_frames(
    frames: &[Frame],
    detector: &DetectorConfig,
    network: &NetworkArgs,
    shape: NetworkShape,
    seed: u64,
) -> Result<(HsdNetwork, TrainingReport)> {
    let patches = training_patches(frames, detector, network.max_train_patches, seed)?;
    log::info!("training {} on {} patches", shape.tag(), patches.len());
    train_network(&patches, &network.train_config(shape, seed))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// `key = value` lines for every resolved setting of a subcommand.
pub fn resolved_config<T: Serialize>(subcommand: &str, args: &T) -> Result<String> {
    let value = serde_json::to_value(args)?;
    let mut out = format!("# hsd {subcommand}\n");
    if let serde_json::Value::Object(map) = value {
        for (k, v) in map {
            let v = match v {
                serde_json::Value::Null => continue,
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            };
            writeln!(out, "{k} = {v}").unwrap();
        }
    }
    Ok(out)
}

/// Reads a `key = value` file into `--key value` pairs.
pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("{}:{}: expected key = value", path.display(), i + 1)))?;
        pairs.push((k.trim().trim_start_matches("--").to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Appends config-file settings for flags not given on the command line.
pub fn merge_config_file(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let strs: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let file = strs.iter().enumerate().find_map(|(i, a)| {
        a.strip_prefix("--config-file=")
            .map(str::to_string)
            .or_else(|| (a == "--config-file").then(|| strs.get(i + 1).cloned()).flatten())
    });
    let Some(file) = file else {
        return Ok(argv);
    };
    let given = |k: &str| {
        let flag = format!("--{k}");
        strs.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
    };
    let mut out = argv;
    for (k, v) in read_config_file(Path::new(&file))? {
        if k != "config-file" && !given(&k) {
            out.push(format!("--{k}").into());
            out.push(v.into());
        }
    }
    Ok(out)
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainingReport> {
    let detector = args.detector.config()?;
    let shape = args.network.shape(&args.config)?;
    let data = load_route(&args.route, 0)?;
    create_dir(&args.out)?;
    write_file(&args.out.join("config.txt"), resolved_config("train", args)?)?;
    let (net, report) = train_from_frames(&data.pretrain, &detector, &args.network, shape, args.seed)?;
    save_network(&net, &args.out.join("model.hsd"))?;
    write_file(&args.out.join("training_report.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

enum Encoder {
    Hsd(Box<HsdNetwork>),
    LogPolar(LogPolarEncoder),
}

impl Encoder {
    fn as_dyn(&self) -> &dyn LandmarkEncoder {
        match self {
            Encoder::Hsd(n) => n.as_ref(),
            Encoder::LogPolar(l) => l,
        }
    }
}

fn build_encoder(
    tag: &str,
    model: Option<&Path>,
    pretrain: &[Frame],
    detector: &DetectorConfig,
    network: &NetworkArgs,
    seed: u64,
    out: &Path,
) -> Result<Encoder> {
    match parse_encoder_tag(tag)? {
        EncoderSpec::LogPolar => Ok(Encoder::LogPolar(LogPolarEncoder::default())),
        EncoderSpec::Hsd(_) => {
            let shape = network.shape(tag)?;
            let net = match model {
                Some(path) => {
                    let net = load_network(path)?;
                    if net.shape != shape {
                        return Err(Error::arg(format!("model {} is {}, not {}", path.display(), net.shape, shape)));
                    }
                    net
                }
                None => {
                    let (net, report) = train_from_frames(pretrain, detector, network, shape, seed)?;
                    save_network(&net, &out.join("model.hsd"))?;
                    write_file(&out.join("training_report.json"), serde_json::to_string_pretty(&report)?)?;
                    net
                }
            };
            Ok(Encoder::Hsd(Box::new(net)))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub config_tag: String,
    pub route: String,
    pub seed: u64,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub query_frequency_hz: f64,
    pub runs: Vec<EvalReport>,
}

/// Runs every spacing on shared observations; times the query path once,
/// against the memory of the first spacing.
fn eval_spacings(
    encoder: &dyn LandmarkEncoder,
    data: &RouteData,
    detector: &DetectorConfig,
    vpr: &VprArgs,
    spacings: &[f64],
    seed: u64,
    out: Option<&Path>,
) -> Result<Vec<EvalReport>> {
    let vpr_cfg = vpr.config()?;
    let learn_obs = frame_observations(&data.learn, encoder, detector, &vpr_cfg)?;
    let test_obs = frame_observations(&data.test, encoder, detector, &vpr_cfg)?;
    let mut reports = Vec::new();
    for &spacing in spacings {
        let cfg = EvalConfig {
            detector: *detector,
            vpr: vpr_cfg,
            spacing_m: spacing,
            tolerance_m: vpr.tolerance,
            baseline_seed: seed,
            timing_repeats: vpr.timing_repeats,
        };
        let mut run = evaluate_observations(&encoder.tag(), &data.learn, &learn_obs, &data.test, &test_obs, &cfg)?;
        if vpr.timing_repeats > 0 {
            let row = benchmark_query(&run.memory, &data.test, encoder, detector, vpr.timing_repeats)?;
            run.report.query_frequency_hz = row.hz;
            run.timing.push(row);
        }
        log::info!(
            "{} spacing {spacing} m: AUC {:.3} (shuffled {:.3}), {} cells",
            run.report.config_tag,
            run.report.auc,
            run.report.shuffled_auc,
            run.report.cells_created
        );
        if let Some(out) = out {
            write_outputs(&run, &out.join(format!("spacing_{spacing}m")))?;
        }
        reports.push(run.report);
    }
    Ok(reports)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalSummary> {
    let detector = args.detector.config()?;
    let spacings = parse_list::<f64>(&args.spacing, "spacing")?;
    if spacings.is_empty() {
        return Err(Error::arg("--spacing needs at least one value"));
    }
    parse_encoder_tag(&args.config)?;
    args.vpr.config()?;
    create_dir(&args.out)?;
    write_file(&args.out.join("config.txt"), resolved_config("eval", args)?)?;
    let data = load_route(&args.route, 0)?;
    let encoder = build_encoder(&args.config, args.model.as_deref(), &data.pretrain, &detector, &args.network, args.seed, &args.out)?;
    let runs = eval_spacings(encoder.as_dyn(), &data, &detector, &args.vpr, &spacings, args.seed, Some(&args.out))?;
    let (auc_mean, auc_std) = aggregate_auc(&runs).into_values().next().unwrap_or((0.0, 0.0));
    let summary = EvalSummary {
        config_tag: encoder.as_dyn().tag(),
        route: args.route.route.clone(),
        seed: args.seed,
        auc_mean,
        auc_std,
        query_frequency_hz: crate::linalg::mean(&runs.iter().map(|r| r.query_frequency_hz).collect::<Vec<_>>()),
        runs,
    };
    write_file(&args.out.join("report.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub config: String,
    pub spacing_m: f64,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub shuffled_auc_mean: f64,
    pub hz_mean: f64,
    pub cells_mean: f64,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<SweepRow>> {
    let detector = args.detector.config()?;
    let configs: Vec<String> = args.configs.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    for c in &configs {
        parse_encoder_tag(c)?;
    }
    let spacings = parse_list::<f64>(&args.spacing, "spacing")?;
    let seeds = parse_list::<u64>(&args.seeds, "seeds")?;
    if configs.is_empty() || spacings.is_empty() || seeds.is_empty() {
        return Err(Error::arg("sweep needs at least one config, spacing and seed"));
    }
    args.vpr.config()?;
    create_dir(&args.out)?;
    write_file(&args.out.join("config.txt"), resolved_config("sweep", args)?)?;

    let mut grid: Vec<Vec<Vec<EvalReport>>> = vec![vec![Vec::new(); spacings.len()]; configs.len()];
    for &seed in &seeds {
        let data = load_route(&args.route, seed)?;
        for (ci, tag) in configs.iter().enumerate() {
            let dir = args.out.join(tag.replace('/', "_")).join(format!("seed_{seed}"));
            create_dir(&dir)?;
            let encoder = build_encoder(tag, None, &data.pretrain, &detector, &args.network, seed, &dir)?;
            let reports = eval_spacings(encoder.as_dyn(), &data, &detector, &args.vpr, &spacings, seed, Some(&dir))?;
            for (si, r) in reports.into_iter().enumerate() {
                grid[ci][si].push(r);
            }
        }
    }
    let mut rows = Vec::new();
    let mut csv = String::from("config,spacing_m,auc_mean,auc_std,shuffled_auc_mean,hz_mean,cells_mean\n");
    for (ci, tag) in configs.iter().enumerate() {
        for (si, &spacing) in spacings.iter().enumerate() {
            let rs = &grid[ci][si];
            let col = |f: fn(&EvalReport) -> f64| rs.iter().map(f).collect::<Vec<f64>>();
            let auc = col(|r| r.auc);
            let row = SweepRow {
                config: tag.clone(),
                spacing_m: spacing,
                auc_mean: crate::linalg::mean(&auc),
                auc_std: crate::linalg::std_dev(&auc),
                shuffled_auc_mean: crate::linalg::mean(&col(|r| r.shuffled_auc)),
                hz_mean: crate::linalg::mean(&col(|r| r.query_frequency_hz)),
                cells_mean: crate::linalg::mean(&col(|r| r.cells_created as f64)),
            };
            writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                row.config, row.spacing_m, row.auc_mean, row.auc_std, row.shuffled_auc_mean, row.hz_mean, row.cells_mean
            )
            .unwrap();
            rows.push(row);
        }
    }
    write_file(&args.out.join("sweep.csv"), csv)?;
    Ok(rows)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let (learn, test) = synth_pair(args.frames, args.seed);
    crate::dataset::write_sequence(&learn, &args.out.join("learn"))?;
    crate::dataset::write_sequence(&test, &args.out.join("test"))?;
    write_file(&args.out.join("config.txt"), resolved_config("synth", args)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub frames: usize,
    pub skipped: usize,
    pub length_m: f64,
    /// `(spacing, places)` pairs.
    pub places: Vec<(f64, usize)>,
}

pub fn cmd_dataset(args: &DatasetArgs) -> Result<DatasetSummary> {
    let range = parse_range(&args.range)?;
    let spacings = parse_list::<f64>(&args.spacing, "spacing")?;
    let frames = load_sequence(&args.images, &args.poses, range, (args.width, args.height))?;
    let poses: Vec<_> = frames.iter().map(|f| f.pose).collect();
    let length_m = poses.windows(2).map(|w| w[0].distance(&w[1])).sum();
    let places = spacings
        .iter()
        .map(|&s| Ok((s, sample_places(&poses, s)?.len())))
        .collect::<Result<_>>()?;
    Ok(DatasetSummary {
        frames: frames.len(),
        skipped: range_len(range)? - frames.len(),
        length_m,
        places,
    })
}

/// Atoms tiled by grid position, one pixel of spacing, empty cells grey.
pub fn atom_gallery(net: &HsdNetwork, layer: &str) -> Result<GrayImage> {
    let layer = match layer {
        "s1" => net.s1(),
        "s2" => net.s2(),
        other => return Err(Error::arg(format!("unknown layer {other:?}; expected s1 or s2"))),
    };
    let dim = layer.input_dim();
    let side = (dim as f64).sqrt().round() as usize;
    if side * side != dim {
        return Err(Error::arg(format!("atoms of dimension {dim} are not square")));
    }
    let grid = layer.grid();
    let tile = side + 1;
    let (w, h) = (grid.cols() * tile + 1, grid.rows() * tile + 1);
    let mut img = vec![0.5; w * h];
    for (atom, &(r, c)) in grid.assignment().iter().enumerate() {
        let a = layer.dictionary().atom(atom);
        let lim = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        for y in 0..side {
            for x in 0..side {
                img[(r * tile + 1 + y) * w + c * tile + 1 + x] = 0.5 + 0.5 * a[y * side + x] / lim;
            }
        }
    }
    GrayImage::new(w, h, img)
}

pub fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    let net = load_network(&args.model)?;
    atom_gallery(&net, &args.layer)?.save_png(&args.out)
}

/// S1 reconstruction rate of a network on patches, through the same
/// normalization and sparsity budget as encoding.
pub fn s1_reconstruction_rate(net: &HsdNetwork, patches: &[Patch]) -> Result<f64> {
    let inputs: Vec<Vec<f64>> = patches.iter().map(Patch::normalized).collect();
    let s1 = net.s1();
    let codes = inputs
        .iter()
        .map(|x| encode_mp(s1.dictionary(), s1.homeostasis(), x, net.n0_s1, net.use_homeostasis))
        .collect::<Result<Vec<_>>>()?;
    reconstruction_rate(s1.dictionary(), &codes, &inputs)
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = cli.jobs.unwrap_or(0);
    if rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().is_err() {
        log::debug!("global thread pool already initialized");
    }
    match &cli.command {
        Command::Train(a) => {
            let r = cmd_train(a)?;
            println!(
                "{}: S1 reconstruction {:.3}, S2 reconstruction {:.3}",
                r.config_tag, r.s1_reconstruction_rate, r.s2_reconstruction_rate
            );
        }
        Command::Eval(a) => {
            let s = cmd_eval(a)?;
            for r in &s.runs {
                println!(
                    "{} spacing {} m: AUC {:.3}, shuffled {:.3}, {} cells, {:.1} Hz",
                    r.config_tag, r.spacing_m, r.auc, r.shuffled_auc, r.cells_created, r.query_frequency_hz
                );
            }
            println!("AUC {:.3} ± {:.3}", s.auc_mean, s.auc_std);
        }
        Command::Sweep(a) => {
            for r in cmd_sweep(a)? {
                println!("{} {} m: AUC {:.3} ± {:.3}", r.config, r.spacing_m, r.auc_mean, r.auc_std);
            }
        }
        Command::Synth(a) => {
            cmd_synth(a)?;
            println!("wrote {} frames per pass to {}", a.frames, a.out.display());
        }
        Command::Dataset(a) => {
            let s = cmd_dataset(a)?;
            println!("{} frames ({} skipped), {:.1} m", s.frames, s.skipped, s.length_m);
            for (spacing, n) in s.places {
                println!("  {spacing} m spacing: {n} places");
            }
        }
        Command::Inspect(a) => {
            cmd_inspect(a)?;
            println!("wrote {}", a.out.display());
        }
    }
    Ok(())
}
