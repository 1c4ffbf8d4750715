//! The `cinecam` command line.
//!
//! Dense data is DCMB, configs and reports are JSON, curves are CSV. A
//! dataset directory holds `pose/<id>.dcmb`, `camera/<id>.dcmb` and
//! `music/<id>.dcmb`. Every command writes `<output>.stamp.json` with the
//! tool version, a SHA-256 of the effective parameters, the seed and the
//! SHA-256 of every input file.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid
//! configuration.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::dataset::{
    align_streams, bezier_interpolate, compute_normalization, split_dataset, Assignment, KeyframeDocument,
    MusicFeatureSequence, NormalizationStats, PoseScaling, PoseSequence, SequenceInfo, SplitManifest,
};
use crate::dcmb::DenseSequence;
use crate::diffusion::{GuidanceOrder, GuidanceWeights, Resample, SamplerConfig};
use crate::error::{Error, Result};
use crate::generate::{GenerationOptions, Generator};
use crate::geometry::camera::{CENTRIC_CHANNELS, MMD_CHANNELS};
use crate::geometry::{camera_masks, centric_to_mmd, mmd_frames, CameraPoseCentric};
use crate::matrix::Matrix;
use crate::metrics::{evaluate, shot_feature_stats, write_sequence_csv, EvalOptions, EvalSequence, LcdMode};
use crate::model::{extract_windows, write_loss_csv, Checkpoint, Denoiser, DenoiserConfig, SequenceData, TrainConfig, Trainer};
use crate::objectives::{total_loss, LossContext, LossWeights};
use crate::postprocess::{
    detect_keyframes, savitzky_golay, stitch_windows, KeyframeIndexSet, WindowSet, DEFAULT_PENALTY, DEFAULT_SG_ORDER,
    DEFAULT_SG_WINDOW, WINDOW_STRIDE,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "CINECAM_THREADS";
const WINDOWS_MANIFEST: &str = "windows.json";

#[derive(Debug, Parser)]
#[command(name = "cinecam", version, about = "Dance camera synthesis pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CameraFormat {
    /// 8 channels: rp xyz, rotation xyz, distance, fov.
    Mmd,
    /// 13 channels: eye xyz, x0, y0, z0, fov.
    Centric,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Densify Bezier keyframe tracks, optionally aligning pose and music.
    Interp {
        /// Keyframe JSON: one track or a list of tracks (one output channel each).
        #[arg(long)]
        keyframes: PathBuf,
        /// Output length; defaults to the last keyframe + 1.
        #[arg(long)]
        frames: Option<usize>,
        /// Pose DCMB to align with (requires --music, --pose-out, --music-out).
        #[arg(long, requires_all = ["music", "pose_out", "music_out"])]
        pose: Option<PathBuf>,
        /// Music feature DCMB to align with.
        #[arg(long, requires = "pose")]
        music: Option<PathBuf>,
        #[arg(long)]
        pose_out: Option<PathBuf>,
        #[arg(long)]
        music_out: Option<PathBuf>,
        /// Dense camera output (DCMB).
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert camera sequences between MMD and camera-centric channels.
    Convert {
        #[arg(long, value_enum)]
        from: CameraFormat,
        #[arg(long, value_enum)]
        to: CameraFormat,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Target distance for centric to MMD (the eye-to-target distance is not
        /// recoverable from the centric form).
        #[arg(long, default_value_t = 0.0)]
        distance: f64,
    },
    /// Cut sequences at keyframes and assign train/test/validation.
    Split {
        /// JSON list of {sequence_id, genre, n_frames, keyframes}.
        #[arg(long)]
        sequences: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the denoiser and write a checkpoint.
    Train {
        /// Dataset directory with pose/, camera/ and music/.
        #[arg(long)]
        data_dir: PathBuf,
        /// Split manifest; only train segments are used. Without it every
        /// sequence in the dataset is used whole.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Pipeline config JSON; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_ckpt: PathBuf,
        /// Loss curve CSV; defaults to `<out-ckpt>.loss.csv`.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
        /// Continue from a checkpoint (its config and statistics win).
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override the configured number of steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Generate a full-length camera for a dance and its music.
    Sample {
        #[arg(long)]
        pose: PathBuf,
        #[arg(long)]
        music: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// Dance (strong) guidance weight.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        w1: f64,
        /// Music (weak) guidance weight.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        w2: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "dance-first")]
        order: OrderArg,
        #[arg(long, value_enum, default_value = "diffuse-back")]
        resample: ResampleArg,
        #[arg(long, default_value_t = WINDOW_STRIDE)]
        stride: usize,
        /// Use the null dance token.
        #[arg(long)]
        no_pose: bool,
        /// Use the null music token.
        #[arg(long)]
        no_music: bool,
        /// Also write the unstitched windows and windows.json here.
        #[arg(long)]
        windows_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-fade a directory of sampled windows into one sequence.
    Stitch {
        /// Directory written by `sample --windows-out`.
        #[arg(long)]
        windows: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect keyframes by TV denoising of each channel's differences.
    Keyframes {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PENALTY)]
        penalty: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Savitzky-Golay smoothing between keyframes.
    Smooth {
        #[arg(long = "in")]
        input: PathBuf,
        /// Keyframe JSON from `keyframes`; without it only the endpoints are kept.
        #[arg(long)]
        keyframes: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SG_WINDOW)]
        window: usize,
        #[arg(long, default_value_t = DEFAULT_SG_ORDER)]
        order: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-frame joint visibility masks (DCMB, one 0/1 channel per joint).
    Masks {
        #[arg(long)]
        pose: PathBuf,
        /// MMD camera (8 channels).
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-frame shot features and their velocities (CSV).
    Shotfeat {
        #[arg(long)]
        pose: PathBuf,
        #[arg(long)]
        camera: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Composite training loss between a ground-truth and a predicted camera.
    Loss {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        pose: PathBuf,
        /// Loss weights JSON {lambda_vel, lambda_acc, lambda_ba}.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Normalization statistics JSON; physical units without it.
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Report JSON; printed to standard output without it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate generated cameras against ground truth.
    Eval {
        /// Generated MMD cameras, `<id>.dcmb`.
        #[arg(long)]
        gen_dir: PathBuf,
        /// Ground-truth MMD cameras, `<id>.dcmb`.
        #[arg(long)]
        gt_dir: PathBuf,
        /// Poses, `<id>.dcmb`.
        #[arg(long)]
        pose_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-sequence CSV; defaults to the report path with a .csv extension.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "joint")]
        lcd: LcdMode,
    },
    /// Write a dense sequence as CSV for external plotting.
    ExportPlot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OrderArg {
    DanceFirst,
    MusicFirst,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ResampleArg {
    DiffuseBack,
    Posterior,
}

/// Everything `train` consumes, validated before any work starts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub denoiser: DenoiserConfig,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.denoiser.validate()?;
        self.train.validate()?;
        self.sampler.weights.validate()
    }
}

#[derive(Debug, Serialize)]
struct InputHash {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Stamp<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_sha256: String,
    seed: Option<u64>,
    inputs: Vec<InputHash>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn stamp_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".stamp.json");
    out.with_file_name(name)
}

fn write_stamp(out: &Path, command: &str, params: &Value, seed: Option<u64>, inputs: &[&Path]) -> Result<()> {
    let mut hashes = Vec::new();
    for p in inputs {
        let files: Vec<PathBuf> = if p.is_dir() {
            let mut v: Vec<PathBuf> = fs::read_dir(p)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|f| f.is_file()).collect();
            v.sort();
            v
        } else {
            vec![p.to_path_buf()]
        };
        for f in files {
            hashes.push(InputHash {
                path: f.display().to_string(),
                sha256: sha256_hex(&fs::read(&f)?),
            });
        }
    }
    let stamp = Stamp {
        tool: "cinecam",
        version: VERSION,
        command,
        config_sha256: sha256_hex(&serde_json::to_vec(params)?),
        seed,
        inputs: hashes,
    };
    let mut text = serde_json::to_string_pretty(&stamp)?;
    text.push('\n');
    fs::write(stamp_path(out), text)?;
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_dense(path: &Path, m: Matrix<f64>) -> Result<()> {
    ensure_parent(path)?;
    DenseSequence::new(m).write(path)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Config files: unreadable or malformed content is a configuration error.
fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    read_json(path).map_err(|e| Error::Config(e.to_string()))
}

fn read_camera(path: &Path, channels: usize) -> Result<Matrix<f64>> {
    let d = DenseSequence::read(path)?;
    d.expect_channels(&[channels], &path.display().to_string())?;
    Ok(d.frames)
}

fn read_pose(path: &Path) -> Result<PoseSequence> {
    PoseSequence::from_dense(&DenseSequence::read(path)?)
}

fn read_music(path: &Path) -> Result<Matrix<f64>> {
    Ok(DenseSequence::read(path)?.frames)
}

/// Sorted `<id>` stems of the `*.dcmb` files in a directory.
pub fn sequence_ids(dir: &Path) -> Result<Vec<String>> {
    let mut ids = BTreeSet::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::InvalidInput(format!("{}: {e}", dir.display())))?;
    for e in entries {
        let p = e?.path();
        if p.extension().is_some_and(|x| x == "dcmb") {
            if let Some(s) = p.file_stem().and_then(|s| s.to_str()) {
                ids.insert(s.to_string());
            }
        }
    }
    Ok(ids.into_iter().collect())
}

/// One sequence of a dataset directory.
pub fn load_sequence(data_dir: &Path, id: &str) -> Result<SequenceData> {
    let file = |kind: &str| data_dir.join(kind).join(format!("{id}.dcmb"));
    Ok(SequenceData {
        pose: read_pose(&file("pose"))?,
        camera: read_camera(&file("camera"), MMD_CHANNELS)?,
        music: read_music(&file("music"))?,
    })
}

/// Write one sequence into a dataset directory.
pub fn save_sequence(data_dir: &Path, id: &str, seq: &SequenceData) -> Result<()> {
    for (kind, m) in [("pose", seq.pose.frames()), ("camera", &seq.camera), ("music", &seq.music)] {
        write_dense(&data_dir.join(kind).join(format!("{id}.dcmb")), m.clone())?;
    }
    Ok(())
}

fn slice_sequence(s: &SequenceData, start: usize, end: usize) -> Result<SequenceData> {
    let n = s.pose.n_frames().min(s.camera.rows()).min(s.music.rows());
    if end > n || start >= end {
        return Err(Error::InvalidInput(format!("segment [{start}, {end}) outside a {n}-frame sequence")));
    }
    Ok(SequenceData {
        pose: s.pose.slice(start, end),
        camera: s.camera.slice_rows(start, end),
        music: s.music.slice_rows(start, end),
    })
}

fn training_sequences(data_dir: &Path, manifest: Option<&Path>) -> Result<Vec<SequenceData>> {
    match manifest {
        Some(m) => {
            let manifest: SplitManifest = read_config(m)?;
            let mut out = Vec::new();
            for seg in manifest.segments().filter(|s| s.assignment == Assignment::Train) {
                let s = load_sequence(data_dir, &seg.sequence_id)?;
                out.push(slice_sequence(&s, seg.start_frame as usize, seg.end_frame as usize)?);
            }
            Ok(out)
        }
        None => sequence_ids(&data_dir.join("camera"))?
            .iter()
            .map(|id| load_sequence(data_dir, id))
            .collect(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WindowEntry {
    start: usize,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct WindowsManifest {
    stride: usize,
    n_frames: usize,
    windows: Vec<WindowEntry>,
}

fn cmd_interp(
    keyframes: &Path,
    frames: Option<usize>,
    align: Option<(&Path, &Path, &Path, &Path)>,
    out: &Path,
) -> Result<Value> {
    let tracks = read_json::<KeyframeDocument>(keyframes)?.into_tracks();
    if tracks.is_empty() {
        return Err(Error::InvalidInput("keyframe document has no tracks".into()));
    }
    for t in &tracks {
        t.validate()?;
    }
    let params = json!({ "frames": frames, "tracks": tracks.len(), "align": align.is_some() });
    if let Some((pose, music, pose_out, music_out)) = align {
        let music = MusicFeatureSequence::new(read_music(music)?)?;
        let a = align_streams(&read_pose(pose)?, &tracks, &music)?;
        info!("aligned streams to {} frames", a.n_frames());
        write_dense(out, a.camera)?;
        write_dense(pose_out, a.pose.frames().clone())?;
        write_dense(music_out, a.music.frames().clone())?;
        return Ok(params);
    }
    let n = frames.unwrap_or_else(|| tracks.iter().map(|t| t.last_frame() as usize + 1).max().unwrap_or(1));
    let mut m = Matrix::zeros(n, tracks.len());
    for (j, t) in tracks.iter().enumerate() {
        m.set_column(j, &bezier_interpolate(t, n)?);
    }
    write_dense(out, m)?;
    Ok(params)
}

fn cmd_convert(from: CameraFormat, to: CameraFormat, input: &Path, out: &Path, distance: f64) -> Result<Value> {
    let params = json!({ "from": format!("{from:?}"), "to": format!("{to:?}"), "distance": distance });
    let channels = |f| if f == CameraFormat::Mmd { MMD_CHANNELS } else { CENTRIC_CHANNELS };
    let m = read_camera(input, channels(from))?;
    let converted = match (from, to) {
        (a, b) if a == b => m,
        (CameraFormat::Mmd, CameraFormat::Centric) => {
            let cams = mmd_frames(&m)?;
            Matrix::from_rows(&cams.iter().map(|c| c.to_centric().to_channels().to_vec()).collect::<Vec<_>>())?
        }
        _ => {
            let mut rows = Vec::with_capacity(m.rows());
            let mut gimbal = 0;
            for i in 0..m.rows() {
                let (c, g) = centric_to_mmd(&CameraPoseCentric::from_channels(m.row(i))?, distance)?;
                gimbal += g as usize;
                rows.push(c.to_channels().to_vec());
            }
            if gimbal > 0 {
                warn!("{gimbal} frame(s) are at gimbal lock; their Euler angles are not unique");
            }
            Matrix::from_rows(&rows)?
        }
    };
    write_dense(out, converted)?;
    Ok(params)
}

fn cmd_split(sequences: &Path, seed: u64, out: &Path) -> Result<Value> {
    let seqs: Vec<SequenceInfo> = read_json(sequences)?;
    let manifest = split_dataset(&seqs, seed)?;
    for a in [Assignment::Train, Assignment::Test, Assignment::Validation] {
        info!("{a:?}: {} segment(s)", manifest.count(a));
    }
    write_json(out, &manifest)?;
    Ok(json!({ "seed": seed }))
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    data_dir: &Path,
    manifest: Option<&Path>,
    config: Option<&Path>,
    out_ckpt: &Path,
    loss_csv: Option<&Path>,
    resume: Option<&Path>,
    steps: Option<usize>,
) -> Result<Value> {
    let seqs = training_sequences(data_dir, manifest)?;
    if seqs.is_empty() {
        return Err(Error::InvalidInput("no training sequences".into()));
    }
    let mut trainer: Trainer<f32> = match resume {
        Some(r) => Checkpoint::read(r)?.into_trainer()?,
        None => {
            let cfg: PipelineConfig = config.map(read_config).transpose()?.unwrap_or_default();
            cfg.validate()?;
            let cams: Vec<Matrix<f64>> = seqs.iter().map(|s| s.camera.clone()).collect();
            let stats = compute_normalization(&cams)?;
            let scaling = PoseScaling::fit(&seqs.iter().map(|s| s.pose.frames()).collect::<Vec<_>>());
            Trainer::new(Denoiser::new(cfg.denoiser)?, cfg.train, stats, scaling)?
        }
    };
    if let Some(s) = steps {
        trainer.config.steps = s;
    }
    let dcfg = trainer.model.config.clone();
    for (i, s) in seqs.iter().enumerate() {
        if s.music.cols() != dcfg.music_feature_dim {
            return Err(Error::Config(format!(
                "sequence {i} has {} music features, the denoiser expects {}",
                s.music.cols(),
                dcfg.music_feature_dim
            )));
        }
    }
    let windows: Vec<_> = extract_windows(&seqs, dcfg.window_frames, trainer.config.window_stride, &trainer.stats, &trainer.pose_scaling)?
        .iter()
        .map(|w| w.cast::<f32>())
        .collect();
    info!("training on {} window(s) of {} frames", windows.len(), dcfg.window_frames);
    ensure_parent(out_ckpt)?;
    let every = trainer.config.checkpoint_every;
    let curve = trainer.train(&windows, |t, _| {
        if every > 0 && t.step % every == 0 {
            Checkpoint::from_trainer(t).write(out_ckpt)?;
        }
        Ok(())
    })?;
    Checkpoint::from_trainer(&trainer).write(out_ckpt)?;
    let csv = loss_csv.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut n = out_ckpt.as_os_str().to_os_string();
        n.push(".loss.csv");
        PathBuf::from(n)
    });
    let mut f = fs::File::create(&csv)?;
    write_loss_csv(&curve, &mut f)?;
    Ok(json!({ "denoiser": dcfg, "train": trainer.config, "manifest": manifest.is_some(), "resume": resume.is_some() }))
}

fn cmd_sample(
    pose: &Path,
    music: &Path,
    ckpt: &Path,
    opts: &GenerationOptions,
    windows_out: Option<&Path>,
    out: &Path,
) -> Result<Value> {
    opts.sampler.weights.validate()?;
    let generator = Generator::from_checkpoint(&Checkpoint::read(ckpt)?)?;
    let pose = read_pose(pose)?;
    let music = read_music(music)?;
    if music.cols() != generator.model.config.music_feature_dim {
        return Err(Error::Config(format!(
            "music has {} features, the checkpoint expects {}",
            music.cols(),
            generator.model.config.music_feature_dim
        )));
    }
    let ws = generator.sample_windows(&pose, &music, opts)?;
    if let Some(dir) = windows_out {
        fs::create_dir_all(dir)?;
        let mut entries = Vec::new();
        for (k, (start, w)) in ws.windows.iter().enumerate() {
            let file = format!("w{k:05}.dcmb");
            DenseSequence::new(w.clone()).write(dir.join(&file))?;
            entries.push(WindowEntry { start: *start, file });
        }
        let manifest = WindowsManifest { stride: ws.stride, n_frames: pose.n_frames(), windows: entries };
        write_json(&dir.join(WINDOWS_MANIFEST), &manifest)?;
    }
    let full = stitch_windows(&ws)?.slice_rows(0, pose.n_frames());
    write_dense(out, full)?;
    Ok(serde_json::to_value(opts)?)
}

fn cmd_stitch(dir: &Path, out: &Path) -> Result<Value> {
    let manifest: WindowsManifest = read_json(&dir.join(WINDOWS_MANIFEST))?;
    let windows = manifest
        .windows
        .iter()
        .map(|e| Ok((e.start, DenseSequence::read(dir.join(&e.file))?.frames)))
        .collect::<Result<Vec<_>>>()?;
    let ws = WindowSet { stride: manifest.stride, windows };
    let full = stitch_windows(&ws)?;
    if manifest.n_frames > full.rows() {
        return Err(Error::InvalidInput(format!("windows cover {} frames, manifest asks for {}", full.rows(), manifest.n_frames)));
    }
    write_dense(out, full.slice_rows(0, manifest.n_frames))?;
    Ok(json!({ "stride": manifest.stride, "n_frames": manifest.n_frames }))
}

fn cmd_keyframes(input: &Path, penalty: f64, out: &Path) -> Result<Value> {
    if !(penalty > 0.0 && penalty.is_finite()) {
        return Err(Error::Config(format!("penalty must be positive, got {penalty}")));
    }
    let seq = DenseSequence::read(input)?.frames;
    let keys = detect_keyframes(&seq, penalty)?;
    info!("{} keyframe(s) over {} frames", keys.keyframes.len(), keys.n_frames);
    write_json(out, &keys)?;
    Ok(json!({ "penalty": penalty }))
}

fn cmd_smooth(input: &Path, keyframes: Option<&Path>, window: usize, order: usize, out: &Path) -> Result<Value> {
    if window % 2 == 0 || window < 3 || order >= window {
        return Err(Error::Config(format!("invalid Savitzky-Golay window {window} / order {order}")));
    }
    let seq = DenseSequence::read(input)?.frames;
    let keys = match keyframes {
        Some(k) => read_json::<KeyframeIndexSet>(k)?,
        None => KeyframeIndexSet::new(seq.rows(), vec![0, seq.rows().saturating_sub(1)])?,
    };
    write_dense(out, savitzky_golay(&seq, window, order, &keys)?)?;
    Ok(json!({ "window": window, "order": order }))
}

fn cmd_masks(pose: &Path, camera: &Path, out: &Path) -> Result<Value> {
    let m = camera_masks(&read_pose(pose)?, &read_camera(camera, MMD_CHANNELS)?)?;
    let dense = Matrix::from_fn(m.n_frames(), m.n_joints(), |i, j| m.get(i, j) as u8 as f64);
    info!("visible fraction {:.4}", m.visible_fraction());
    write_dense(out, dense)?;
    Ok(json!({}))
}

fn cmd_shotfeat(pose: &Path, camera: &Path, out: &Path) -> Result<Value> {
    let stats = shot_feature_stats(&read_pose(pose)?, &read_camera(camera, MMD_CHANNELS)?)?;
    ensure_parent(out)?;
    let mut f = std::io::BufWriter::new(fs::File::create(out)?);
    writeln!(f, "frame,s3_over_s1,s3_over_s2,d_s3_over_s1,d_s3_over_s2")?;
    for (i, s) in stats.iter().enumerate() {
        writeln!(f, "{i},{},{},{},{}", s[0], s[1], s[2], s[3])?;
    }
    f.flush()?;
    Ok(json!({}))
}

fn cmd_loss(gt: &Path, pred: &Path, pose: &Path, weights: Option<&Path>, stats: Option<&Path>, out: Option<&Path>) -> Result<Value> {
    let w: LossWeights = weights.map(read_config).transpose()?.unwrap_or_default();
    w.validate()?;
    let stats: NormalizationStats = match stats {
        Some(s) => read_config(s)?,
        None => NormalizationStats::identity(MMD_CHANNELS),
    };
    let pose = read_pose(pose)?;
    let gt = read_camera(gt, MMD_CHANNELS)?;
    let pred = read_camera(pred, MMD_CHANNELS)?;
    let mask = camera_masks(&pose, &gt)?;
    let ctx = LossContext { pose: pose.frames(), mask: &mask, stats: &stats };
    let report = total_loss(&stats.apply(&gt)?, &stats.apply(&pred)?, ctx, &w)?;
    let params = json!({ "weights": w, "stats": stats });
    match out {
        Some(o) => write_json(o, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(params)
}

fn cmd_eval(gen_dir: &Path, gt_dir: &Path, pose_dir: &Path, out: &Path, csv: Option<&Path>, lcd: LcdMode) -> Result<Value> {
    let ids = sequence_ids(gen_dir)?;
    if ids.is_empty() {
        return Err(Error::InvalidInput(format!("no .dcmb files in {}", gen_dir.display())));
    }
    let mut data = Vec::with_capacity(ids.len());
    for id in &ids {
        let f = format!("{id}.dcmb");
        data.push((
            read_camera(&gen_dir.join(&f), MMD_CHANNELS)?,
            read_camera(&gt_dir.join(&f), MMD_CHANNELS)?,
            read_pose(&pose_dir.join(&f))?,
        ));
    }
    let seqs: Vec<EvalSequence> = ids
        .iter()
        .zip(&data)
        .map(|(id, (g, t, p))| EvalSequence { id, generated: g, ground_truth: t, pose: p })
        .collect();
    let opts = EvalOptions { lcd, ..Default::default() };
    let e = evaluate(&seqs, &opts)?;
    write_json(out, &e.report)?;
    let csv = csv.map(Path::to_path_buf).unwrap_or_else(|| out.with_extension("csv"));
    ensure_parent(&csv)?;
    write_sequence_csv(&e.sequences, fs::File::create(&csv)?)?;
    Ok(serde_json::to_value(opts)?)
}

fn channel_names(n: usize) -> Vec<String> {
    let named: &[&str] = match n {
        MMD_CHANNELS => &["rp_x", "rp_y", "rp_z", "rot_x", "rot_y", "rot_z", "distance", "fov"],
        CENTRIC_CHANNELS => &[
            "eye_x", "eye_y", "eye_z", "x0_x", "x0_y", "x0_z", "y0_x", "y0_y", "y0_z", "z0_x", "z0_y", "z0_z", "fov",
        ],
        _ => &[],
    };
    if named.is_empty() {
        (0..n).map(|j| format!("c{j}")).collect()
    } else {
        named.iter().map(|s| s.to_string()).collect()
    }
}

fn cmd_export_plot(input: &Path, out: &Path) -> Result<Value> {
    let d = DenseSequence::read(input)?;
    ensure_parent(out)?;
    let mut f = std::io::BufWriter::new(fs::File::create(out)?);
    writeln!(f, "frame,time,{}", channel_names(d.n_channels()).join(","))?;
    for i in 0..d.n_frames() {
        let row: Vec<String> = d.frames.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(f, "{i},{},{}", i as f64 / d.fps as f64, row.join(","))?;
    }
    f.flush()?;
    Ok(json!({}))
}

/// Run one parsed command, writing its outputs and stamp.
pub fn run(cli: Cli) -> Result<()> {
    use Command::*;
    let (name, out, params, seed, inputs): (&str, PathBuf, Value, Option<u64>, Vec<PathBuf>) = match &cli.command {
        Interp { keyframes, frames, pose, music, pose_out, music_out, out } => {
            let align = match (pose, music, pose_out, music_out) {
                (Some(p), Some(m), Some(po), Some(mo)) => Some((p.as_path(), m.as_path(), po.as_path(), mo.as_path())),
                _ => None,
            };
            let mut inputs = vec![keyframes.clone()];
            inputs.extend(pose.iter().chain(music).cloned());
            ("interp", out.clone(), cmd_interp(keyframes, *frames, align, out)?, None, inputs)
        }
        Convert { from, to, input, out, distance } => {
            ("convert", out.clone(), cmd_convert(*from, *to, input, out, *distance)?, None, vec![input.clone()])
        }
        Split { sequences, seed, out } => ("split", out.clone(), cmd_split(sequences, *seed, out)?, Some(*seed), vec![sequences.clone()]),
        Train { data_dir, manifest, config, out_ckpt, loss_csv, resume, steps } => {
            let params = cmd_train(data_dir, manifest.as_deref(), config.as_deref(), out_ckpt, loss_csv.as_deref(), resume.as_deref(), *steps)?;
            let seed = params["train"]["seed"].as_u64();
            let mut inputs: Vec<PathBuf> = ["pose", "camera", "music"].iter().map(|k| data_dir.join(k)).collect();
            inputs.extend(manifest.iter().chain(config).chain(resume).cloned());
            ("train", out_ckpt.clone(), params, seed, inputs)
        }
        Sample { pose, music, ckpt, w1, w2, seed, order, resample, stride, no_pose, no_music, windows_out, out } => {
            let opts = GenerationOptions {
                sampler: SamplerConfig {
                    weights: GuidanceWeights::new(*w1, *w2)?,
                    order: match order {
                        OrderArg::DanceFirst => GuidanceOrder::DanceFirst,
                        OrderArg::MusicFirst => GuidanceOrder::MusicFirst,
                    },
                    resample: match resample {
                        ResampleArg::DiffuseBack => Resample::DiffuseBack,
                        ResampleArg::Posterior => Resample::Posterior,
                    },
                },
                stride: *stride,
                seed: *seed,
                use_pose: !no_pose,
                use_music: !no_music,
            };
            let params = cmd_sample(pose, music, ckpt, &opts, windows_out.as_deref(), out)?;
            ("sample", out.clone(), params, Some(*seed), vec![pose.clone(), music.clone(), ckpt.clone()])
        }
        Stitch { windows, out } => ("stitch", out.clone(), cmd_stitch(windows, out)?, None, vec![windows.clone()]),
        Keyframes { input, penalty, out } => ("keyframes", out.clone(), cmd_keyframes(input, *penalty, out)?, None, vec![input.clone()]),
        Smooth { input, keyframes, window, order, out } => {
            let params = cmd_smooth(input, keyframes.as_deref(), *window, *order, out)?;
            let mut inputs = vec![input.clone()];
            inputs.extend(keyframes.iter().cloned());
            ("smooth", out.clone(), params, None, inputs)
        }
        Masks { pose, camera, out } => ("masks", out.clone(), cmd_masks(pose, camera, out)?, None, vec![pose.clone(), camera.clone()]),
        Shotfeat { pose, camera, out } => {
            ("shotfeat", out.clone(), cmd_shotfeat(pose, camera, out)?, None, vec![pose.clone(), camera.clone()])
        }
        Loss { gt, pred, pose, weights, stats, out } => {
            let params = cmd_loss(gt, pred, pose, weights.as_deref(), stats.as_deref(), out.as_deref())?;
            let Some(out) = out else { return Ok(()) };
            let mut inputs = vec![gt.clone(), pred.clone(), pose.clone()];
            inputs.extend(weights.iter().chain(stats).cloned());
            ("loss", out.clone(), params, None, inputs)
        }
        Eval { gen_dir, gt_dir, pose_dir, out, csv, lcd } => {
            let params = cmd_eval(gen_dir, gt_dir, pose_dir, out, csv.as_deref(), *lcd)?;
            ("eval", out.clone(), params, None, vec![gen_dir.clone(), gt_dir.clone(), pose_dir.clone()])
        }
        ExportPlot { input, out } => ("export-plot", out.clone(), cmd_export_plot(input, out)?, None, vec![input.clone()]),
    };
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    write_stamp(&out, name, &params, seed, &refs)
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 3,
        _ => 1,
    }
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV}={v} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Parse `args`, run, and return the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = init_threads().and_then(|_| run(cli));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
