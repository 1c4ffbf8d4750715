//! Evaluation metrics: kinetic and shot features, Frechet distance,
//! diversity, dancer missing rate and limbs capture difference.

use std::io::Write;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{PoseSequence, FPS, LIMB_GROUPS};
use crate::error::{invalid, shape, Result};
use crate::geometry::{clamped_centric_frames, sequence_masks, shot_features, Frustum, JointMask};
use crate::matrix::Matrix;

pub const SCHEMA_VERSION: u32 = 1;
pub const KINETIC_CLIP_FRAMES: usize = 75;
pub const CAMERA_CHANNELS: usize = 8;
pub const KINETIC_DIM: usize = 2 * CAMERA_CHANNELS;
pub const SHOT_DIM: usize = 4;

/// Per-channel mean squared velocity (first 8 entries) and mean squared
/// acceleration (last 8) of each non-overlapping clip, in units per second
/// and per second squared. A trailing partial clip is dropped.
pub fn kinetic_features(camera: &Matrix<f64>, clip_frames: usize, fps: f64) -> Result<Vec<Vec<f64>>> {
    if clip_frames < 3 {
        return invalid(format!("clip length must be at least 3 frames, got {clip_frames}"));
    }
    if camera.rows() < clip_frames {
        return invalid(format!("{} frames is shorter than one {clip_frames}-frame clip", camera.rows()));
    }
    let channels = camera.cols();
    let clips = camera.rows() / clip_frames;
    Ok((0..clips)
        .map(|c| {
            let start = c * clip_frames;
            let mut f = vec![0.0; 2 * channels];
            for j in 0..channels {
                let x = |i: usize| camera.get(start + i, j);
                let vel: f64 = (0..clip_frames - 1).map(|i| ((x(i + 1) - x(i)) * fps).powi(2)).sum();
                let acc: f64 = (0..clip_frames - 2)
                    .map(|i| ((x(i + 2) - 2.0 * x(i + 1) + x(i)) * fps * fps).powi(2))
                    .sum();
                f[j] = vel / (clip_frames - 1) as f64;
                f[channels + j] = acc / (clip_frames - 2) as f64;
            }
            f
        })
        .collect())
}

/// Per-frame `(S3/S1, S3/S2)` and their forward differences; the last
/// frame's differences are zero.
pub fn shot_feature_stats(pose: &PoseSequence, camera: &Matrix<f64>) -> Result<Vec<[f64; SHOT_DIM]>> {
    if camera.rows() != pose.n_frames() {
        return shape(format!("{} camera frames for {} pose frames", camera.rows(), pose.n_frames()));
    }
    let (cams, _) = clamped_centric_frames(camera)?;
    let shots: Vec<_> = cams
        .iter()
        .enumerate()
        .map(|(i, cam)| shot_features(&pose.frame_joints(i), cam, Frustum::default()))
        .collect();
    Ok((0..shots.len())
        .map(|i| {
            let (a, b) = (shots[i].s3_over_s1, shots[i].s3_over_s2);
            let (da, db) = match shots.get(i + 1) {
                Some(n) => (n.s3_over_s1 - a, n.s3_over_s2 - b),
                None => (0.0, 0.0),
            };
            [a, b, da, db]
        })
        .collect())
}

fn mean_and_covariance(set: &[Vec<f64>], d: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = set.len();
    let mut mu = DVector::zeros(d);
    for v in set {
        mu += DVector::from_column_slice(v);
    }
    mu /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for v in set {
        let c = DVector::from_column_slice(v) - &mu;
        cov += &c * c.transpose();
    }
    cov /= (n - 1) as f64;
    // ridge only for near-singular covariances
    let eps = 1e-6 * cov.trace() / d as f64;
    if cov.clone().symmetric_eigenvalues().min() < eps {
        for i in 0..d {
            cov[(i, i)] += eps;
        }
    }
    (mu, cov)
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = m.clone().symmetric_eigen();
    let s = DMatrix::from_diagonal(&e.eigenvalues.map(|l| l.max(0.0).sqrt()));
    &e.eigenvectors * s * e.eigenvectors.transpose()
}

/// Frechet distance between Gaussians fitted (unbiased covariance) to two
/// feature sets.
pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return invalid(format!("Frechet distance needs at least 2 vectors per set, got {} and {}", a.len(), b.len()));
    }
    let d = a[0].len();
    if d == 0 || a.iter().chain(b).any(|v| v.len() != d) {
        return shape("feature sets have mismatched or zero dimension");
    }
    let (mu_a, cov_a) = mean_and_covariance(a, d);
    let (mu_b, cov_b) = mean_and_covariance(b, d);
    let root_a = sym_sqrt(&cov_a);
    let mut inner = &root_a * &cov_b * &root_a;
    inner = (&inner + inner.transpose()) * 0.5;
    let tr_sqrt: f64 = inner.symmetric_eigenvalues().iter().map(|l| l.max(0.0).sqrt()).sum();
    let fid = (&mu_a - &mu_b).norm_squared() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
    if fid < -1e-6 {
        warn!("Frechet distance {fid:e} is below the numerical floor");
    }
    Ok(fid.max(0.0))
}

/// Mean Euclidean distance over all unordered pairs.
pub fn diversity_dist(features: &[Vec<f64>]) -> Result<f64> {
    let n = features.len();
    if n < 2 {
        return invalid(format!("diversity needs at least 2 vectors, got {n}"));
    }
    let d = features[0].len();
    if features.iter().any(|v| v.len() != d) {
        return shape("feature vectors have mismatched dimension");
    }
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| features[i].iter().zip(&features[j]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(total / (n * (n - 1) / 2) as f64)
}

/// Fraction of frames with no visible joint.
pub fn dancer_missing_rate(masks: &JointMask) -> Result<f64> {
    if masks.n_frames() == 0 {
        return invalid("dancer missing rate of an empty mask");
    }
    let missing = (0..masks.n_frames()).filter(|&i| masks.frame(i).iter().all(|&b| b == 0)).count();
    Ok(missing as f64 / masks.n_frames() as f64)
}

/// How joint masks are compared by [`limbs_capture_difference`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LcdMode {
    /// Normalized per-joint Hamming distance.
    #[default]
    Joint,
    /// A limb group counts as captured when any of its joints is visible.
    Limb,
}

fn same_mask_shape(a: &JointMask, b: &JointMask) -> Result<()> {
    if a.n_frames() != b.n_frames() || a.n_joints() != b.n_joints() {
        return shape(format!(
            "masks are {}x{} and {}x{}",
            a.n_frames(),
            a.n_joints(),
            b.n_frames(),
            b.n_joints()
        ));
    }
    if a.n_frames() == 0 {
        return invalid("limbs capture difference of empty masks");
    }
    Ok(())
}

/// Mean of `|Jm_gt - Jm_gen|` over frames and joints.
pub fn limbs_capture_difference(gt: &JointMask, gen: &JointMask) -> Result<f64> {
    same_mask_shape(gt, gen)?;
    let diff = gt.bits().iter().zip(gen.bits()).filter(|(a, b)| a != b).count();
    Ok(diff as f64 / gt.bits().len() as f64)
}

/// Limb-group variant: mean disagreement of per-group "any joint visible"
/// flags over frames and the four groups of [`LIMB_GROUPS`].
pub fn limb_group_capture_difference(gt: &JointMask, gen: &JointMask) -> Result<f64> {
    same_mask_shape(gt, gen)?;
    if gt.n_joints() != crate::dataset::N_JOINTS {
        return shape(format!("limb groups need {} joints, got {}", crate::dataset::N_JOINTS, gt.n_joints()));
    }
    let mut diff = 0usize;
    for i in 0..gt.n_frames() {
        for (_, r) in LIMB_GROUPS {
            let a = gt.frame(i)[r.clone()].iter().any(|&b| b != 0);
            let b = gen.frame(i)[r].iter().any(|&b| b != 0);
            diff += (a != b) as usize;
        }
    }
    Ok(diff as f64 / (gt.n_frames() * LIMB_GROUPS.len()) as f64)
}

fn capture_difference(gt: &JointMask, gen: &JointMask, mode: LcdMode) -> Result<f64> {
    match mode {
        LcdMode::Joint => limbs_capture_difference(gt, gen),
        LcdMode::Limb => limb_group_capture_difference(gt, gen),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub clip_frames: usize,
    pub fps: f64,
    pub lcd: LcdMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            clip_frames: KINETIC_CLIP_FRAMES,
            fps: FPS as f64,
            lcd: LcdMode::Joint,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub fid_k: f64,
    pub fid_s: f64,
    pub dist_k: f64,
    pub dist_s: f64,
    pub dmr: f64,
    pub lcd: f64,
    pub lcd_mode: LcdMode,
    pub n_sequences: usize,
    pub n_frames: usize,
    pub n_clips: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetrics {
    pub id: String,
    pub n_frames: usize,
    pub dmr: f64,
    pub lcd: f64,
    pub mean_s3_over_s1: f64,
    pub mean_s3_over_s2: f64,
}

/// One evaluated sequence: generated camera, ground-truth camera, pose.
pub struct EvalSequence<'a> {
    pub id: &'a str,
    pub generated: &'a Matrix<f64>,
    pub ground_truth: &'a Matrix<f64>,
    pub pose: &'a PoseSequence,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricReport,
    pub sequences: Vec<SequenceMetrics>,
}

struct Features {
    metrics: SequenceMetrics,
    kin_gen: Vec<Vec<f64>>,
    kin_gt: Vec<Vec<f64>>,
    shot_gen: Vec<Vec<f64>>,
    shot_gt: Vec<Vec<f64>>,
    missing: usize,
    lcd_sum: f64,
}

fn sequence_features(s: &EvalSequence, opts: &EvalOptions) -> Result<Features> {
    let n = s.pose.n_frames();
    for (what, m) in [("generated", s.generated), ("ground-truth", s.ground_truth)] {
        if m.shape() != (n, CAMERA_CHANNELS) {
            return shape(format!("{}: {what} camera is {:?}, expected ({n}, {CAMERA_CHANNELS})", s.id, m.shape()));
        }
    }
    let clipped = |m: &Matrix<f64>| -> Result<Vec<Vec<f64>>> {
        if m.rows() < opts.clip_frames {
            warn!("{}: shorter than one kinetic clip; no kinetic features", s.id);
            return Ok(Vec::new());
        }
        kinetic_features(m, opts.clip_frames, opts.fps)
    };
    let (gen_cams, _) = clamped_centric_frames(s.generated)?;
    let (gt_cams, _) = clamped_centric_frames(s.ground_truth)?;
    let gen_mask = sequence_masks(s.pose, &gen_cams, Frustum::default())?;
    let gt_mask = sequence_masks(s.pose, &gt_cams, Frustum::default())?;
    let dmr = dancer_missing_rate(&gen_mask)?;
    let lcd = capture_difference(&gt_mask, &gen_mask, opts.lcd)?;
    let shot_gen = shot_feature_stats(s.pose, s.generated)?;
    let shot_gt = shot_feature_stats(s.pose, s.ground_truth)?;
    let mean = |k: usize| shot_gen.iter().map(|f| f[k]).sum::<f64>() / n as f64;
    Ok(Features {
        metrics: SequenceMetrics {
            id: s.id.to_string(),
            n_frames: n,
            dmr,
            lcd,
            mean_s3_over_s1: mean(0),
            mean_s3_over_s2: mean(1),
        },
        kin_gen: clipped(s.generated)?,
        kin_gt: clipped(s.ground_truth)?,
        shot_gen: shot_gen.iter().map(|f| f.to_vec()).collect(),
        shot_gt: shot_gt.iter().map(|f| f.to_vec()).collect(),
        missing: (dmr * n as f64).round() as usize,
        lcd_sum: lcd * n as f64,
    })
}

/// Full metric report. Kinetic features are pooled over the 2.5 s clips of
/// all sequences, shot features over all frames; DMR and LCD are averaged
/// over all frames.
pub fn evaluate(sequences: &[EvalSequence], opts: &EvalOptions) -> Result<Evaluation> {
    if sequences.is_empty() {
        return invalid("nothing to evaluate");
    }
    if opts.fps <= 0.0 || !opts.fps.is_finite() {
        return invalid(format!("fps must be positive, got {}", opts.fps));
    }
    let feats: Vec<Features> = sequences
        .par_iter()
        .map(|s| sequence_features(s, opts))
        .collect::<Result<_>>()?;
    let pool = |f: fn(&Features) -> &Vec<Vec<f64>>| -> Vec<Vec<f64>> { feats.iter().flat_map(|x| f(x).iter().cloned()).collect() };
    let (kin_gen, kin_gt) = (pool(|f| &f.kin_gen), pool(|f| &f.kin_gt));
    let (shot_gen, shot_gt) = (pool(|f| &f.shot_gen), pool(|f| &f.shot_gt));
    let n_frames: usize = feats.iter().map(|f| f.metrics.n_frames).sum();
    let report = MetricReport {
        schema_version: SCHEMA_VERSION,
        fid_k: frechet_distance(&kin_gen, &kin_gt)?,
        fid_s: frechet_distance(&shot_gen, &shot_gt)?,
        dist_k: diversity_dist(&kin_gen)?,
        dist_s: diversity_dist(&shot_gen)?,
        dmr: feats.iter().map(|f| f.missing).sum::<usize>() as f64 / n_frames as f64,
        lcd: feats.iter().map(|f| f.lcd_sum).sum::<f64>() / n_frames as f64,
        lcd_mode: opts.lcd,
        n_sequences: sequences.len(),
        n_frames,
        n_clips: kin_gen.len(),
    };
    Ok(Evaluation {
        report,
        sequences: feats.into_iter().map(|f| f.metrics).collect(),
    })
}

/// Per-sequence CSV with header `id,n_frames,dmr,lcd,mean_s3_over_s1,mean_s3_over_s2`.
pub fn write_sequence_csv(rows: &[SequenceMetrics], mut w: impl Write) -> Result<()> {
    writeln!(w, "id,n_frames,dmr,lcd,mean_s3_over_s1,mean_s3_over_s2")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.id, r.n_frames, r.dmr, r.lcd, r.mean_s3_over_s1, r.mean_s3_over_s2
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fixture_sequence;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_set(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect()
    }

    /// Rescale a 1-D sample to exactly the given mean and unbiased std.
    fn impose(x: &[f64], mu: f64, sigma: f64) -> Vec<Vec<f64>> {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let s = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        x.iter().map(|v| vec![mu + sigma * (v - m) / s]).collect()
    }

    #[test]
    fn kinetic_constant_and_linear() {
        let c = Matrix::filled(150, 8, 0.7);
        let f = kinetic_features(&c, 75, 30.0).unwrap();
        assert_eq!(f.len(), 2);
        assert!(f.iter().flatten().all(|&v| v == 0.0));

        let a = 0.02;
        let lin = Matrix::from_fn(160, 8, |i, j| if j == 3 { a * i as f64 } else { 1.0 });
        let f = kinetic_features(&lin, 75, 30.0).unwrap();
        assert_eq!(f.len(), 2);
        for clip in &f {
            assert!((clip[3] - (a * 30.0).powi(2)).abs() < 1e-12);
            assert!(clip[8 + 3].abs() < 1e-9);
            assert_eq!(clip[0], 0.0);
        }
        assert!(kinetic_features(&Matrix::zeros(74, 8), 75, 30.0).is_err());
    }

    #[test]
    fn kinetic_matches_brute_force() {
        let n = 230;
        let cam = Matrix::from_fn(n, 8, |i, j| (0.1 * (j + 1) as f64 * i as f64).sin() * (j as f64 + 0.5));
        let f = kinetic_features(&cam, 75, 30.0).unwrap();
        assert_eq!(f.len(), 3);
        for (c, feat) in f.iter().enumerate() {
            for j in 0..8 {
                let x: Vec<f64> = (c * 75..(c + 1) * 75).map(|i| cam.get(i, j)).collect();
                let mut v = 0.0;
                for k in 1..75 {
                    let d = (x[k] - x[k - 1]) * 30.0;
                    v += d * d;
                }
                let mut acc = 0.0;
                for k in 2..75 {
                    let d = (x[k] - 2.0 * x[k - 1] + x[k - 2]) * 900.0;
                    acc += d * d;
                }
                assert!((feat[j] - v / 74.0).abs() < 1e-9);
                assert!((feat[8 + j] - acc / 73.0).abs() < 1e-9 * acc.max(1.0));
            }
        }
    }

    #[test]
    fn kinetic_time_reversal() {
        let cam = Matrix::from_fn(75, 8, |i, j| 0.3 * j as f64 - 0.01 * i as f64);
        let rev = Matrix::from_fn(75, 8, |i, j| cam.get(74 - i, j));
        let (a, b) = (kinetic_features(&cam, 75, 30.0).unwrap(), kinetic_features(&rev, 75, 30.0).unwrap());
        for (x, y) in a[0].iter().zip(&b[0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn frechet_self_and_symmetry() {
        let a = random_set(200, 5, 1);
        let b = random_set(150, 5, 2);
        assert!(frechet_distance(&a, &a).unwrap() < 1e-6);
        let (ab, ba) = (frechet_distance(&a, &b).unwrap(), frechet_distance(&b, &a).unwrap());
        assert!((ab - ba).abs() < 1e-9, "{ab} {ba}");
        assert!(ab > 0.0);
        assert!(frechet_distance(&a[..1], &b).is_err());
        assert!(frechet_distance(&a, &random_set(10, 4, 3)).is_err());
    }

    #[test]
    fn frechet_one_dimensional_closed_form() {
        let x: Vec<f64> = random_set(500, 1, 4).into_iter().map(|v| v[0]).collect();
        let y: Vec<f64> = random_set(300, 1, 5).into_iter().map(|v| v[0]).collect();
        let d = frechet_distance(&impose(&x, 0.0, 1.0), &impose(&y, 1.0, 1.0)).unwrap();
        assert!((d - 1.0).abs() < 1e-6, "{d}");
        let d = frechet_distance(&impose(&x, 0.5, 2.0), &impose(&y, -1.0, 0.5)).unwrap();
        assert!((d - (1.5f64.powi(2) + 1.5f64.powi(2))).abs() < 1e-6, "{d}");
    }

    #[test]
    fn frechet_diagonal_closed_form() {
        // a 2-D design with exactly diagonal sample covariance
        let design = |mu: [f64; 2], s: [f64; 2]| -> Vec<Vec<f64>> {
            [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]
                .iter()
                .map(|p| vec![mu[0] + s[0] * p[0], mu[1] + s[1] * p[1]])
                .collect()
        };
        let (ma, sa, mb, sb) = ([0.0, 1.0], [1.0, 2.0], [0.5, -1.0], [1.5, 1.0]);
        let a = design(ma, sa);
        let b = design(mb, sb);
        // unbiased variance of the design is 2 s^2 / 3
        let std = |s: f64| (2.0 * s * s / 3.0).sqrt();
        let expected: f64 = (0..2).map(|k| (ma[k] - mb[k]).powi(2) + (std(sa[k]) - std(sb[k])).powi(2)).sum();
        let d = frechet_distance(&a, &b).unwrap();
        assert!((d - expected).abs() < 1e-6, "{d} vs {expected}");
    }

    #[test]
    fn frechet_rotation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_set(100, 6, 6);
        let b: Vec<Vec<f64>> = random_set(120, 6, 7).into_iter().map(|v| v.iter().map(|x| 0.5 * x + 0.3).collect()).collect();
        let base = frechet_distance(&a, &b).unwrap();
        for _ in 0..5 {
            let g = DMatrix::<f64>::from_fn(6, 6, |_, _| rng.sample(StandardNormal));
            let q = g.qr().q();
            let rot = |s: &[Vec<f64>]| -> Vec<Vec<f64>> {
                s.iter().map(|v| (&q * DVector::from_column_slice(v)).as_slice().to_vec()).collect()
            };
            let r = frechet_distance(&rot(&a), &rot(&b)).unwrap();
            assert!((r - base).abs() < 1e-6, "{r} vs {base}");
        }
    }

    #[test]
    fn diversity_examples() {
        assert_eq!(diversity_dist(&vec![vec![1.0, 2.0]; 5]).unwrap(), 0.0);
        assert_eq!(diversity_dist(&[vec![0.0, 0.0], vec![0.0, 2.0]]).unwrap(), 2.0);
        assert!(diversity_dist(&[vec![1.0]]).is_err());
        let s = random_set(20, 3, 9);
        let mut total = 0.0;
        let mut pairs = 0;
        for i in 0..20 {
            for j in 0..20 {
                if i < j {
                    let d: f64 = (0..3).map(|k| (s[i][k] - s[j][k]).powi(2)).sum();
                    total += d.sqrt();
                    pairs += 1;
                }
            }
        }
        let dist = diversity_dist(&s).unwrap();
        assert!((dist - total / pairs as f64).abs() < 1e-9);
        let scaled: Vec<Vec<f64>> = s.iter().map(|v| v.iter().map(|x| 3.0 * x).collect()).collect();
        assert!((diversity_dist(&scaled).unwrap() - 3.0 * dist).abs() < 1e-9);
    }

    fn random_mask(frames: usize, seed: u64) -> JointMask {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        JointMask::new(frames, 60, (0..frames * 60).map(|_| rng.random_bool(0.5) as u8).collect()).unwrap()
    }

    fn relabel(m: &JointMask, perm: &[usize]) -> JointMask {
        let mut out = JointMask::filled(m.n_frames(), m.n_joints(), false);
        for i in 0..m.n_frames() {
            for j in 0..m.n_joints() {
                out.set(i, perm[j], m.get(i, j));
            }
        }
        out
    }

    #[test]
    fn missing_rate_examples() {
        assert_eq!(dancer_missing_rate(&JointMask::filled(4, 60, true)).unwrap(), 0.0);
        let mut m = JointMask::filled(4, 60, true);
        for j in 0..60 {
            m.set(2, j, false);
        }
        assert_eq!(dancer_missing_rate(&m).unwrap(), 0.25);
        let perm: Vec<usize> = (0..60).rev().collect();
        assert_eq!(dancer_missing_rate(&relabel(&m, &perm)).unwrap(), 0.25);
        assert!(dancer_missing_rate(&JointMask::filled(0, 60, true)).is_err());
    }

    #[test]
    fn capture_difference_examples() {
        let a = random_mask(30, 1);
        let b = random_mask(30, 2);
        assert_eq!(limbs_capture_difference(&a, &a).unwrap(), 0.0);
        let flipped = JointMask::new(30, 60, a.bits().iter().map(|&x| 1 - x).collect()).unwrap();
        assert_eq!(limbs_capture_difference(&a, &flipped).unwrap(), 1.0);
        let mut xor = 0;
        for i in 0..30 {
            for j in 0..60 {
                xor += (a.get(i, j) ^ b.get(i, j)) as usize;
            }
        }
        let lcd = limbs_capture_difference(&a, &b).unwrap();
        assert_eq!(lcd, xor as f64 / 1800.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut perm: Vec<usize> = (0..60).collect();
        for i in (1..60).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        assert_eq!(limbs_capture_difference(&relabel(&a, &perm), &relabel(&b, &perm)).unwrap(), lcd);
        assert!(limbs_capture_difference(&a, &random_mask(29, 2)).is_err());
    }

    #[test]
    fn limb_group_variant() {
        let gt = JointMask::filled(2, 60, true);
        let mut gen = JointMask::filled(2, 60, false);
        // frame 0: one head joint visible, frame 1: arms only
        gen.set(0, 3, true);
        for j in 20..40 {
            gen.set(1, j, true);
        }
        // disagreements: 3 groups in frame 0, 3 in frame 1
        assert_eq!(limb_group_capture_difference(&gt, &gen).unwrap(), 6.0 / 8.0);
        assert_eq!(limb_group_capture_difference(&gt, &gt).unwrap(), 0.0);
    }

    #[test]
    fn shot_stats_velocities() {
        let fx = fixture_sequence("s", 40, 3);
        let s = shot_feature_stats(&fx.pose, &fx.camera).unwrap();
        assert_eq!(s.len(), 40);
        for i in 0..39 {
            assert!((0.0..=1.0).contains(&s[i][0]));
            assert_eq!(s[i][2], s[i + 1][0] - s[i][0]);
            assert_eq!(s[i][3], s[i + 1][1] - s[i][1]);
        }
        assert_eq!((s[39][2], s[39][3]), (0.0, 0.0));
    }

    fn small_set() -> Vec<crate::fixtures::FixtureSequence> {
        (0..3).map(|i| fixture_sequence(format!("q{i}"), 160, 50 + i as u64)).collect()
    }

    #[test]
    fn self_evaluation_is_zero() {
        let fx = small_set();
        let seqs: Vec<EvalSequence> = fx
            .iter()
            .map(|f| EvalSequence { id: &f.id, generated: &f.camera, ground_truth: &f.camera, pose: &f.pose })
            .collect();
        let e = evaluate(&seqs, &EvalOptions::default()).unwrap();
        assert!(e.report.fid_k < 1e-6 && e.report.fid_s < 1e-6);
        assert_eq!(e.report.lcd, 0.0);
        let mut missing = 0.0;
        for f in &fx {
            missing += dancer_missing_rate(&crate::geometry::camera_masks(&f.pose, &f.camera).unwrap()).unwrap() * 160.0;
        }
        assert!((e.report.dmr - missing / 480.0).abs() < 1e-12);
        assert_eq!(e.report.n_clips, 6);
        assert_eq!(e.sequences.len(), 3);
    }

    #[test]
    fn camera_pointed_away() {
        let fx = small_set();
        let away: Vec<Matrix<f64>> = fx
            .iter()
            .map(|f| {
                // same eye, reversed view direction
                let mut c = f.camera.clone();
                for i in 0..c.rows() {
                    let cam = crate::geometry::CameraPoseMMD::from_channels(f.camera.row(i)).unwrap();
                    let mut x = cam.to_centric();
                    x.z0 = x.z0.map(|v| -v);
                    x.x0 = x.x0.map(|v| -v);
                    let (back, _) = crate::geometry::centric_to_mmd(&x, cam.distance).unwrap();
                    c.row_mut(i).copy_from_slice(&back.to_channels());
                }
                c
            })
            .collect();
        let seqs: Vec<EvalSequence> = fx
            .iter()
            .zip(&away)
            .map(|(f, a)| EvalSequence { id: &f.id, generated: a, ground_truth: &f.camera, pose: &f.pose })
            .collect();
        let e = evaluate(&seqs, &EvalOptions::default()).unwrap();
        assert_eq!(e.report.dmr, 1.0);
        let visible: f64 =
            fx.iter().map(|f| crate::geometry::camera_masks(&f.pose, &f.camera).unwrap().visible_fraction()).sum::<f64>() / 3.0;
        assert!((e.report.lcd - visible).abs() < 1e-12);

        let mut csv = Vec::new();
        write_sequence_csv(&e.sequences, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("id,n_frames,dmr,lcd"));
    }
}
