//! Full-length assembly of generated windows, keyframe detection and
//! keyframe-preserving smoothing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::matrix::Matrix;

pub const WINDOW_STRIDE: usize = 75;
pub const DEFAULT_PENALTY: f64 = 0.1;
pub const DEFAULT_SG_WINDOW: usize = 9;
pub const DEFAULT_SG_ORDER: usize = 2;
/// Smallest jump, in normalized difference units, that counts as a breakpoint.
pub const BREAK_TOL: f64 = 1e-6;

/// Equal-length windows whose starts are `0, stride, 2 * stride, ...`.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSet {
    pub stride: usize,
    pub windows: Vec<(usize, Matrix<f64>)>,
}

impl WindowSet {
    pub fn validate(&self) -> Result<()> {
        let Some((_, first)) = self.windows.first() else {
            return invalid("window set is empty");
        };
        let (len, channels) = first.shape();
        if len == 0 {
            return invalid("windows are empty");
        }
        if self.windows.len() > 1 {
            if self.stride == 0 || self.stride > len {
                return invalid(format!("stride {} leaves gaps between {len}-frame windows", self.stride));
            }
            if 2 * self.stride < len {
                return invalid(format!("stride {} overlaps more than two {len}-frame windows", self.stride));
            }
        }
        for (k, (start, w)) in self.windows.iter().enumerate() {
            if *start != k * self.stride {
                return invalid(format!("window {k} starts at {start}, expected {}", k * self.stride));
            }
            if w.shape() != (len, channels) {
                return shape(format!("window {k} is {:?}, expected ({len}, {channels})", w.shape()));
            }
        }
        Ok(())
    }

    pub fn n_frames(&self) -> usize {
        self.windows.last().map_or(0, |(s, w)| s + w.rows())
    }
}

/// Linear cross-fade weight of the later window at overlap position `i`.
pub fn blend_weight(i: usize, overlap: usize) -> f64 {
    (i + 1) as f64 / (overlap + 1) as f64
}

/// Per-frame weights of every window, `(n_windows, n_frames)`.
pub fn stitch_weights(n_windows: usize, window: usize, stride: usize) -> Matrix<f64> {
    let n = (n_windows - 1) * stride + window;
    let overlap = window - stride.min(window);
    let mut w = Matrix::zeros(n_windows, n);
    for k in 0..n_windows {
        let start = k * stride;
        for i in 0..window {
            let f = start + i;
            let mut v = 1.0;
            if k > 0 && i < overlap {
                v = blend_weight(i, overlap);
            }
            if k + 1 < n_windows && i >= stride {
                v = 1.0 - blend_weight(i - stride, overlap);
            }
            w.set(k, f, v);
        }
    }
    w
}

/// Cross-fade overlapping windows: in an overlap of length `L` the output
/// is `(1 - a) * earlier + a * later` with `a = (i + 1) / (L + 1)`.
pub fn stitch_windows(ws: &WindowSet) -> Result<Matrix<f64>> {
    ws.validate()?;
    let (len, channels) = ws.windows[0].1.shape();
    let weights = stitch_weights(ws.windows.len(), len, ws.stride);
    let mut out = Matrix::zeros(ws.n_frames(), channels);
    for (k, (start, w)) in ws.windows.iter().enumerate() {
        for i in 0..len {
            let a = weights.get(k, start + i);
            for (o, &v) in out.row_mut(start + i).iter_mut().zip(w.row(i)) {
                *o += a * v;
            }
        }
    }
    Ok(out)
}

/// Exact 1-D total-variation denoising,
/// `argmin_x 0.5 * |y - x|^2 + lambda * sum |x[i+1] - x[i]|`,
/// by Condat's direct algorithm.
pub fn tv_denoise(y: &[f64], lambda: f64) -> Vec<f64> {
    let n = y.len();
    let mut x = vec![0.0; n];
    if n == 0 {
        return x;
    }
    let (mut k, mut k0, mut kplus, mut kminus) = (0usize, 0usize, 0usize, 0usize);
    let (mut umin, mut umax) = (lambda, -lambda);
    let (mut vmin, mut vmax) = (y[0] - lambda, y[0] + lambda);
    loop {
        while k == n - 1 {
            if umin < 0.0 {
                while k0 <= kminus {
                    x[k0] = vmin;
                    k0 += 1;
                }
                k = k0;
                kminus = k0;
                vmin = y[k0];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                while k0 <= kplus {
                    x[k0] = vmax;
                    k0 += 1;
                }
                k = k0;
                kplus = k0;
                vmax = y[k0];
                umax = -lambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                while k0 <= k {
                    x[k0] = vmin;
                    k0 += 1;
                }
                return x;
            }
        }
        umin += y[k + 1] - vmin;
        if umin < -lambda {
            while k0 <= kminus {
                x[k0] = vmin;
                k0 += 1;
            }
            k = k0;
            kplus = k0;
            kminus = k0;
            vmin = y[k0];
            vmax = vmin + 2.0 * lambda;
            umin = lambda;
            umax = -lambda;
            continue;
        }
        umax += y[k + 1] - vmax;
        if umax > lambda {
            while k0 <= kplus {
                x[k0] = vmax;
                k0 += 1;
            }
            k = k0;
            kplus = k0;
            kminus = k0;
            vmax = y[k0];
            vmin = vmax - 2.0 * lambda;
            umin = lambda;
            umax = -lambda;
            continue;
        }
        k += 1;
        if umin >= lambda {
            kminus = k;
            vmin += (umin - lambda) / (kminus - k0 + 1) as f64;
            umin = lambda;
        }
        if umax <= -lambda {
            kplus = k;
            vmax += (umax + lambda) / (kplus - k0 + 1) as f64;
            umax = -lambda;
        }
    }
}

/// Sorted, unique keyframe indices of an `n_frames` sequence, including
/// `0` and `n_frames - 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyframeIndexSet {
    pub n_frames: usize,
    pub keyframes: Vec<usize>,
}

impl KeyframeIndexSet {
    pub fn new(n_frames: usize, mut keyframes: Vec<usize>) -> Result<Self> {
        keyframes.sort_unstable();
        keyframes.dedup();
        let s = Self { n_frames, keyframes };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.keyframes;
        if self.n_frames < 2 {
            return invalid(format!("keyframes need at least 2 frames, got {}", self.n_frames));
        }
        if k.windows(2).any(|p| p[0] >= p[1]) {
            return invalid("keyframes must be sorted and unique");
        }
        if k.first() != Some(&0) || k.last() != Some(&(self.n_frames - 1)) {
            return invalid(format!("keyframes must include 0 and {}", self.n_frames - 1));
        }
        Ok(())
    }
}

/// Keyframes from per-channel TV denoising of the frame-to-frame
/// difference signal. Each channel's differences are scaled by their
/// largest magnitude before denoising with `penalty`; a jump above
/// [`BREAK_TOL`] between denoised differences `j - 1` and `j` marks frame `j`.
pub fn detect_keyframes(seq: &Matrix<f64>, penalty: f64) -> Result<KeyframeIndexSet> {
    if !(penalty > 0.0 && penalty.is_finite()) {
        return invalid(format!("penalty must be positive, got {penalty}"));
    }
    let n = seq.rows();
    if n < 2 {
        return invalid(format!("keyframe detection needs at least 2 frames, got {n}"));
    }
    let mut keys = vec![0, n - 1];
    for j in 0..seq.cols() {
        let c = seq.column(j);
        let d: Vec<f64> = c.windows(2).map(|p| p[1] - p[0]).collect();
        let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            continue;
        }
        let dn: Vec<f64> = d.iter().map(|v| v / scale).collect();
        let x = tv_denoise(&dn, penalty);
        keys.extend((1..x.len()).filter(|&i| (x[i] - x[i - 1]).abs() > BREAK_TOL));
    }
    KeyframeIndexSet::new(n, keys)
}

fn validate_sg(window: usize, order: usize) -> Result<()> {
    if window % 2 == 0 || window < 3 {
        return Err(Error::Config(format!("Savitzky-Golay window must be odd and at least 3, got {window}")));
    }
    if order >= window {
        return Err(Error::Config(format!("Savitzky-Golay order {order} must be below the window {window}")));
    }
    Ok(())
}

/// Weights that evaluate, at sample `pos` of a `window`-point stencil, the
/// least-squares polynomial of degree `order` fitted to the stencil.
pub fn savgol_coefficients(window: usize, order: usize, pos: usize) -> Result<Vec<f64>> {
    if order >= window || pos >= window {
        return invalid(format!("bad stencil: window {window}, order {order}, position {pos}"));
    }
    let a = DMatrix::from_fn(window, order + 1, |i, p| (i as f64 - pos as f64).powi(p as i32));
    let ata = a.transpose() * &a;
    let e0 = DVector::from_fn(order + 1, |i, _| (i == 0) as u8 as f64);
    let z = ata
        .cholesky()
        .ok_or_else(|| Error::Numerical("singular Savitzky-Golay normal equations".into()))?
        .solve(&e0);
    Ok((a * z).as_slice().to_vec())
}

/// Savitzky-Golay smoothing applied independently within each span between
/// consecutive keyframes. Keyframe values are kept; near span edges the
/// stencil is shifted inside the span (asymmetric fit); spans shorter than
/// the window are copied.
pub fn savitzky_golay(seq: &Matrix<f64>, window: usize, order: usize, keys: &KeyframeIndexSet) -> Result<Matrix<f64>> {
    validate_sg(window, order)?;
    keys.validate()?;
    if keys.n_frames != seq.rows() {
        return shape(format!("keyframes are for {} frames, sequence has {}", keys.n_frames, seq.rows()));
    }
    let kernels: Vec<Vec<f64>> = (0..window).map(|p| savgol_coefficients(window, order, p)).collect::<Result<_>>()?;
    let half = window / 2;
    let mut out = seq.clone();
    for span in keys.keyframes.windows(2) {
        let (a, b) = (span[0], span[1]);
        if b - a + 1 < window {
            continue;
        }
        for f in a + 1..b {
            let start = f.saturating_sub(half).clamp(a, b + 1 - window);
            let k = &kernels[f - start];
            for j in 0..seq.cols() {
                let v = (0..window).map(|i| k[i] * seq.get(start + i, j)).sum();
                out.set(f, j, v);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn set(stride: usize, ws: Vec<Matrix<f64>>) -> WindowSet {
        WindowSet { stride, windows: ws.into_iter().enumerate().map(|(k, w)| (k * stride, w)).collect() }
    }

    #[test]
    fn weights_partition_unity() {
        for (n, w, s) in [(1, 150, 75), (4, 150, 75), (3, 10, 7), (5, 9, 5), (2, 6, 6)] {
            let wt = stitch_weights(n, w, s);
            for f in 0..wt.cols() {
                let total: f64 = (0..n).map(|k| wt.get(k, f)).sum();
                assert_eq!(total, 1.0, "n {n} w {w} s {s} frame {f}");
            }
        }
    }

    #[test]
    fn zero_one_overlap_of_three() {
        let ws = set(3, vec![Matrix::zeros(6, 2), Matrix::filled(6, 2, 1.0)]);
        let out = stitch_windows(&ws).unwrap();
        assert_eq!(out.rows(), 9);
        let col = out.column(0);
        assert_eq!(&col[..3], &[0.0; 3]);
        assert_eq!(&col[3..6], &[0.25, 0.5, 0.75]);
        assert_eq!(&col[6..], &[1.0; 3]);
    }

    #[test]
    fn identical_overlaps_and_single_window() {
        let full = Matrix::from_fn(300, 8, |i, j| (i as f64 * 0.05 + j as f64).sin());
        let ws = set(75, (0..3).map(|k| full.slice_rows(75 * k, 75 * k + 150)).collect());
        let out = stitch_windows(&ws).unwrap();
        assert!(out.max_abs_diff(&full) < 1e-15);
        let one = set(75, vec![full.slice_rows(0, 150)]);
        assert_eq!(stitch_windows(&one).unwrap(), full.slice_rows(0, 150));
    }

    #[test]
    fn stitch_rejects_gaps_and_misalignment() {
        let w = || Matrix::zeros(10, 2);
        assert!(stitch_windows(&set(11, vec![w(), w()])).is_err());
        assert!(stitch_windows(&set(4, vec![w(), w()])).is_err());
        let mut bad = set(5, vec![w(), w(), w()]);
        bad.windows[2].0 = 11;
        assert!(stitch_windows(&bad).is_err());
        let mut odd = set(5, vec![w(), w()]);
        odd.windows[1].1 = Matrix::zeros(9, 2);
        assert!(stitch_windows(&odd).is_err());
        assert!(stitch_windows(&WindowSet { stride: 5, windows: vec![] }).is_err());
    }

    fn tv_objective(y: &[f64], x: &[f64], lambda: f64) -> f64 {
        0.5 * y.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            + lambda * x.windows(2).map(|p| (p[1] - p[0]).abs()).sum::<f64>()
    }

    /// Projected gradient on the box-constrained dual.
    fn tv_dual_oracle(y: &[f64], lambda: f64) -> Vec<f64> {
        let n = y.len();
        let mut z = vec![0.0; n - 1];
        let primal = |z: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let left = if i > 0 { z[i - 1] } else { 0.0 };
                    let right = if i < n - 1 { z[i] } else { 0.0 };
                    y[i] - left + right
                })
                .collect()
        };
        for _ in 0..200_000 {
            let x = primal(&z);
            for i in 0..n - 1 {
                z[i] = (z[i] + 0.25 * (x[i + 1] - x[i])).clamp(-lambda, lambda);
            }
        }
        primal(&z)
    }

    #[test]
    fn tv_matches_dual_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for case in 0..6 {
            let n = 5 + 3 * case;
            let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let lambda = [0.05, 0.3, 1.0][case % 3];
            let x = tv_denoise(&y, lambda);
            let o = tv_dual_oracle(&y, lambda);
            for (a, b) in x.iter().zip(&o) {
                assert!((a - b).abs() < 1e-6, "case {case}: {a} vs {b}");
            }
            assert!(tv_objective(&y, &x, lambda) <= tv_objective(&y, &o, lambda) + 1e-9);
        }
        assert_eq!(tv_denoise(&[3.0], 1.0), vec![3.0]);
        let flat = tv_denoise(&[1.0, 2.0, 3.0], 10.0);
        assert!(flat.iter().all(|&v| (v - 2.0).abs() < 1e-12));
    }

    fn sse(x: &[f64], cuts: &[usize]) -> f64 {
        let mut bounds = vec![0];
        bounds.extend_from_slice(cuts);
        bounds.push(x.len());
        bounds
            .windows(2)
            .map(|b| {
                let seg = &x[b[0]..b[1]];
                let m = seg.iter().sum::<f64>() / seg.len() as f64;
                seg.iter().map(|v| (v - m).powi(2)).sum::<f64>()
            })
            .sum()
    }

    fn best_single_cut(x: &[f64]) -> usize {
        (1..x.len()).min_by(|&a, &b| sse(x, &[a]).total_cmp(&sse(x, &[b]))).unwrap()
    }

    fn best_two_cuts(x: &[f64]) -> (usize, usize) {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 1..x.len() {
            for b in a + 1..x.len() {
                let e = sse(x, &[a, b]);
                if e < best.0 {
                    best = (e, a, b);
                }
            }
        }
        (best.1, best.2)
    }

    fn step_channel(n: usize, steps: &[(usize, f64)], noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let level: f64 = steps.iter().filter(|(k, _)| i >= *k).map(|(_, h)| h).sum();
                level + noise * rng.sample::<f64, _>(StandardNormal)
            })
            .collect()
    }

    fn from_channel(c: &[f64]) -> Matrix<f64> {
        Matrix::from_fn(c.len(), 8, |i, j| if j == 2 { c[i] } else { 0.0 })
    }

    #[test]
    fn constant_sequence_has_only_endpoints() {
        let k = detect_keyframes(&Matrix::filled(50, 8, 2.0), 0.1).unwrap();
        assert_eq!(k.keyframes, vec![0, 49]);
        assert!(detect_keyframes(&Matrix::zeros(50, 8), 0.0).is_err());
        assert!(detect_keyframes(&Matrix::zeros(1, 8), 0.1).is_err());
    }

    #[test]
    fn planted_single_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k in [7, 20, 41] {
            let c = step_channel(60, &[(k, 1.0)], 0.0, &mut rng);
            let oracle = best_single_cut(&c);
            assert_eq!(oracle, k);
            let keys = detect_keyframes(&from_channel(&c), 0.1).unwrap().keyframes;
            assert!(keys.contains(&oracle), "{keys:?}");
            assert!(keys.iter().all(|&f| f == 0 || f == 59 || f + 1 == k || f == k), "{keys:?}");
        }
    }

    #[test]
    fn planted_two_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = step_channel(80, &[(25, 1.0), (55, -0.7)], 0.0, &mut rng);
        let (a, b) = best_two_cuts(&c);
        assert_eq!((a, b), (25, 55));
        let keys = detect_keyframes(&from_channel(&c), 0.1).unwrap().keyframes;
        assert!(keys.contains(&a) && keys.contains(&b), "{keys:?}");
        let near = |f: usize| [0, 79, a - 1, a, b - 1, b].contains(&f);
        assert!(keys.iter().all(|&f| near(f)), "{keys:?}");
    }

    #[test]
    fn linear_keyframed_camera_gives_authored_keys() {
        let n = 241;
        let fx = crate::fixtures::fixture_sequence("k", n, 12);
        let tracks = crate::fixtures::camera_keyframes(&fx.camera, 40);
        let mut m = Matrix::zeros(n, 8);
        for (j, t) in tracks.iter().enumerate() {
            m.set_column(j, &crate::dataset::bezier_interpolate(t, n).unwrap());
        }
        let keys = detect_keyframes(&m, DEFAULT_PENALTY).unwrap().keyframes;
        assert_eq!(keys, vec![0, 40, 80, 120, 160, 200, 240]);
    }

    #[test]
    fn keyframes_monotone_in_penalty() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = Matrix::from_fn(120, 8, |i, j| (0.07 * (j + 1) as f64 * i as f64).sin() + 0.05 * rng.sample::<f64, _>(StandardNormal));
        let mut prev = usize::MAX;
        for p in [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0] {
            let n = detect_keyframes(&m, p).unwrap().keyframes.len();
            assert!(n <= prev, "penalty {p}: {n} > {prev}");
            prev = n;
        }
        assert_eq!(detect_keyframes(&m, 1e3).unwrap().keyframes, vec![0, 119]);
    }

    #[test]
    fn window_five_kernel() {
        // oracle: fit c0 + c1 t + c2 t^2 to t = -2..2 and read c0
        let t = [-2.0f64, -1.0, 0.0, 1.0, 2.0];
        let s = |p: i32| t.iter().map(|v| v.powi(p)).sum::<f64>();
        let ata = DMatrix::from_row_slice(3, 3, &[s(0), s(1), s(2), s(1), s(2), s(3), s(2), s(3), s(4)]);
        let inv = ata.try_inverse().unwrap();
        let oracle: Vec<f64> = t.iter().map(|v| inv[(0, 0)] + inv[(0, 1)] * v + inv[(0, 2)] * v * v).collect();
        let k = savgol_coefficients(5, 2, 2).unwrap();
        let expected = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|v| v / 35.0);
        for i in 0..5 {
            assert!((k[i] - expected[i]).abs() < 1e-14);
            assert!((oracle[i] - expected[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn polynomials_are_reproduced() {
        let n = 40;
        let m = Matrix::from_fn(n, 8, |i, j| {
            let t = i as f64 / 7.0;
            0.3 * j as f64 + (j as f64 - 3.0) * t + 0.2 * (j % 3) as f64 * t * t
        });
        for (w, o) in [(5, 2), (9, 2), (7, 3)] {
            let keys = KeyframeIndexSet::new(n, vec![0, 17, n - 1]).unwrap();
            let s = savitzky_golay(&m, w, o, &keys).unwrap();
            assert!(s.max_abs_diff(&m) < 1e-9, "window {w}");
        }
        let c = Matrix::filled(30, 8, 4.5);
        let keys = KeyframeIndexSet::new(30, vec![0, 29]).unwrap();
        assert!(savitzky_golay(&c, 9, 2, &keys).unwrap().max_abs_diff(&c) < 1e-12);
    }

    /// Direct per-frame least-squares fit over the same stencil.
    #[test]
    fn matches_direct_least_squares_and_keeps_keyframes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        let m = Matrix::from_fn(n, 8, |_, _| rng.sample::<f64, _>(StandardNormal));
        let keys = KeyframeIndexSet::new(n, vec![0, 5, 20, 21, 49]).unwrap();
        let s = savitzky_golay(&m, 9, 2, &keys).unwrap();
        for &k in &keys.keyframes {
            assert_eq!(s.row(k), m.row(k));
        }
        // span 0..=5 is shorter than the window
        for f in 0..=5 {
            assert_eq!(s.row(f), m.row(f));
        }
        for span in [(21usize, 49usize), (5, 20)] {
            for f in span.0 + 1..span.1 {
                let start = f.saturating_sub(4).clamp(span.0, span.1 - 8);
                for j in 0..8 {
                    let ts: Vec<f64> = (0..9).map(|i| (start + i) as f64 - f as f64).collect();
                    let ys: Vec<f64> = (0..9).map(|i| m.get(start + i, j)).collect();
                    let a = DMatrix::from_fn(9, 3, |i, p| ts[i].powi(p as i32));
                    let c = a.clone().svd(true, true).solve(&DVector::from_vec(ys), 1e-12).unwrap();
                    assert!((s.get(f, j) - c[0]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn invalid_smoothing_config() {
        let m = Matrix::zeros(20, 8);
        let keys = KeyframeIndexSet::new(20, vec![0, 19]).unwrap();
        assert!(savitzky_golay(&m, 8, 2, &keys).is_err());
        assert!(savitzky_golay(&m, 5, 5, &keys).is_err());
        assert!(savitzky_golay(&m, 1, 0, &keys).is_err());
        assert!(savitzky_golay(&Matrix::zeros(21, 8), 5, 2, &keys).is_err());
        assert!(KeyframeIndexSet::new(20, vec![1, 19]).is_err());
        assert!(KeyframeIndexSet { n_frames: 20, keyframes: vec![0, 7, 7, 19] }.validate().is_err());
    }
}
