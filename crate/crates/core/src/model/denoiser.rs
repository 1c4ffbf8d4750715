//! Conditional transformer denoiser predicting the clean camera window.
//!
//! `h = x_t W_in + pe + silu(temb(t) W_t)`; each block adds temporal
//! self-attention, a per-frame projection of the condition features and a
//! feed-forward layer, all pre-normalized and residual; a zero-initialized
//! linear head maps back to the 8 camera channels. Pose and music enter
//! per frame through their own projections, or as learned null tokens when
//! absent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::layers::{
    columns, positional_encoding, put_columns, silu, silu_backward, sinusoid, softmax_backward, softmax_rows,
    LayerNorm, LayerNormCache, Linear,
};
use crate::dataset::POSE_CHANNELS;
use crate::diffusion::DenoiseModel;
use crate::error::{shape, Error, Result};
use crate::geometry::camera::MMD_CHANNELS;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Probabilities of dropping conditions per training example; the rest
/// keeps both.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionDropout {
    pub pose_only: f64,
    pub music_only: f64,
    pub both: f64,
}

impl Default for ConditionDropout {
    fn default() -> Self {
        Self {
            pose_only: 0.1,
            music_only: 0.1,
            both: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiserConfig {
    pub hidden_dim: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    pub window_frames: usize,
    pub music_feature_dim: usize,
    pub ff_mult: usize,
    pub dropout: ConditionDropout,
    pub seed: u64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            n_blocks: 2,
            n_heads: 4,
            window_frames: 150,
            music_feature_dim: 32,
            ff_mult: 4,
            dropout: ConditionDropout::default(),
            seed: 0,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hidden_dim == 0 || self.n_heads == 0 || self.hidden_dim % self.n_heads != 0 {
            return bad(format!("hidden_dim {} must be a positive multiple of n_heads {}", self.hidden_dim, self.n_heads));
        }
        if self.hidden_dim % 2 != 0 {
            return bad(format!("hidden_dim {} must be even", self.hidden_dim));
        }
        if self.window_frames < 3 {
            return bad(format!("window_frames {} must be at least 3", self.window_frames));
        }
        if self.music_feature_dim == 0 || self.ff_mult == 0 {
            return bad("music_feature_dim and ff_mult must be positive".into());
        }
        let d = self.dropout;
        let probs = [d.pose_only, d.music_only, d.both];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || probs.iter().sum::<f64>() > 1.0 {
            return bad(format!("invalid dropout probabilities {d:?}"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block<T> {
    pub ln1: LayerNorm<T>,
    pub query: Linear<T>,
    pub key: Linear<T>,
    pub value: Linear<T>,
    pub proj: Linear<T>,
    pub cond: Linear<T>,
    pub ln2: LayerNorm<T>,
    pub ff1: Linear<T>,
    pub ff2: Linear<T>,
}

/// All trainable tensors. Gradients use the same layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    pub input: Linear<T>,
    pub time: Linear<T>,
    pub pose: Linear<T>,
    pub music: Linear<T>,
    pub null_pose: Matrix<T>,
    pub null_music: Matrix<T>,
    pub blocks: Vec<Block<T>>,
    pub output: Linear<T>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros(cfg: &DenoiserConfig) -> Self {
        let h = cfg.hidden_dim;
        let ff = cfg.ff_mult * h;
        Self {
            input: Linear::zeros(MMD_CHANNELS, h),
            time: Linear::zeros(h, h),
            pose: Linear::zeros(POSE_CHANNELS, h),
            music: Linear::zeros(cfg.music_feature_dim, h),
            null_pose: Matrix::zeros(1, h),
            null_music: Matrix::zeros(1, h),
            blocks: (0..cfg.n_blocks)
                .map(|_| Block {
                    ln1: LayerNorm::zeros(h),
                    query: Linear::zeros(h, h),
                    key: Linear::zeros(h, h),
                    value: Linear::zeros(h, h),
                    proj: Linear::zeros(h, h),
                    cond: Linear::zeros(h, h),
                    ln2: LayerNorm::zeros(h),
                    ff1: Linear::zeros(h, ff),
                    ff2: Linear::zeros(ff, h),
                })
                .collect(),
            output: Linear::zeros(h, MMD_CHANNELS),
        }
    }

    /// Random initialization; the output head is zero unless `random_head`.
    pub fn init(cfg: &DenoiserConfig, rng: &mut impl Rng, random_head: bool) -> Self {
        let h = cfg.hidden_dim;
        let ff = cfg.ff_mult * h;
        let token = |rng: &mut dyn rand::RngCore| {
            Matrix::from_fn(1, h, |_, _| T::c(rng.sample::<f64, _>(StandardNormal)))
        };
        let input = Linear::random(MMD_CHANNELS, h, 1.0, rng);
        let time = Linear::random(h, h, 1.0, rng);
        let pose = Linear::random(POSE_CHANNELS, h, 1.0, rng);
        let music = Linear::random(cfg.music_feature_dim, h, 1.0, rng);
        let null_pose = token(rng);
        let null_music = token(rng);
        let blocks = (0..cfg.n_blocks)
            .map(|_| Block {
                ln1: LayerNorm::new(h),
                query: Linear::random(h, h, 1.0, rng),
                key: Linear::random(h, h, 1.0, rng),
                value: Linear::random(h, h, 1.0, rng),
                proj: Linear::random(h, h, 1.0, rng),
                cond: Linear::random(h, h, 1.0, rng),
                ln2: LayerNorm::new(h),
                ff1: Linear::random(h, ff, 1.0, rng),
                ff2: Linear::random(ff, h, 1.0, rng),
            })
            .collect();
        let output = if random_head {
            Linear::random(h, MMD_CHANNELS, 1.0, rng)
        } else {
            Linear::zeros(h, MMD_CHANNELS)
        };
        Self {
            input,
            time,
            pose,
            music,
            null_pose,
            null_music,
            blocks,
            output,
        }
    }

    /// Named tensors in a fixed order (checkpoint layout).
    pub fn tensors(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out = Vec::new();
        self.input.tensors("input", &mut out);
        self.time.tensors("time", &mut out);
        self.pose.tensors("pose", &mut out);
        self.music.tensors("music", &mut out);
        out.push(("null_pose".into(), &self.null_pose));
        out.push(("null_music".into(), &self.null_music));
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("blocks.{i}");
            b.ln1.tensors(&format!("{p}.ln1"), &mut out);
            b.query.tensors(&format!("{p}.query"), &mut out);
            b.key.tensors(&format!("{p}.key"), &mut out);
            b.value.tensors(&format!("{p}.value"), &mut out);
            b.proj.tensors(&format!("{p}.proj"), &mut out);
            b.cond.tensors(&format!("{p}.cond"), &mut out);
            b.ln2.tensors(&format!("{p}.ln2"), &mut out);
            b.ff1.tensors(&format!("{p}.ff1"), &mut out);
            b.ff2.tensors(&format!("{p}.ff2"), &mut out);
        }
        self.output.tensors("output", &mut out);
        out
    }

    /// Mutable tensors in the same order as [`Params::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out = Vec::new();
        self.input.tensors_mut(&mut out);
        self.time.tensors_mut(&mut out);
        self.pose.tensors_mut(&mut out);
        self.music.tensors_mut(&mut out);
        out.push(&mut self.null_pose);
        out.push(&mut self.null_music);
        for b in &mut self.blocks {
            b.ln1.tensors_mut(&mut out);
            b.query.tensors_mut(&mut out);
            b.key.tensors_mut(&mut out);
            b.value.tensors_mut(&mut out);
            b.proj.tensors_mut(&mut out);
            b.cond.tensors_mut(&mut out);
            b.ln2.tensors_mut(&mut out);
            b.ff1.tensors_mut(&mut out);
            b.ff2.tensors_mut(&mut out);
        }
        self.output.tensors_mut(&mut out);
        out
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.as_slice().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        let cfg_like = |m: &Matrix<T>| m.cast::<U>();
        let lin = |l: &Linear<T>| Linear { w: cfg_like(&l.w), b: cfg_like(&l.b) };
        let ln = |l: &LayerNorm<T>| LayerNorm { gain: cfg_like(&l.gain), bias: cfg_like(&l.bias) };
        Params {
            input: lin(&self.input),
            time: lin(&self.time),
            pose: lin(&self.pose),
            music: lin(&self.music),
            null_pose: cfg_like(&self.null_pose),
            null_music: cfg_like(&self.null_music),
            blocks: self
                .blocks
                .iter()
                .map(|b| Block {
                    ln1: ln(&b.ln1),
                    query: lin(&b.query),
                    key: lin(&b.key),
                    value: lin(&b.value),
                    proj: lin(&b.proj),
                    cond: lin(&b.cond),
                    ln2: ln(&b.ln2),
                    ff1: lin(&b.ff1),
                    ff2: lin(&b.ff2),
                })
                .collect(),
            output: lin(&self.output),
        }
    }

    /// Sum of squares over all tensors.
    pub fn squared_norm(&self) -> T {
        self.tensors().iter().map(|(_, m)| m.dot(m)).sum()
    }

    pub fn scale(&mut self, s: T) {
        for m in self.tensors_mut() {
            m.scale(s);
        }
    }

    pub fn add_scaled(&mut self, s: T, other: &Params<T>) {
        for (m, (_, o)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            m.axpy(s, o);
        }
    }
}

struct BlockCache<T> {
    ln1: LayerNormCache<T>,
    a1: Matrix<T>,
    q: Matrix<T>,
    k: Matrix<T>,
    v: Matrix<T>,
    probs: Vec<Matrix<T>>,
    attn: Matrix<T>,
    ln2: LayerNormCache<T>,
    a2: Matrix<T>,
    z: Matrix<T>,
    s: Matrix<T>,
}

/// Activations kept for the backward pass.
pub struct ForwardCache<T> {
    x_t: Matrix<T>,
    t_raw: Matrix<T>,
    t_pre: Matrix<T>,
    pose: Option<Matrix<T>>,
    music: Option<Matrix<T>>,
    cond: Matrix<T>,
    blocks: Vec<BlockCache<T>>,
    h_out: Matrix<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Denoiser<T> {
    pub config: DenoiserConfig,
    pub params: Params<T>,
}

impl<T: Scalar> Denoiser<T> {
    /// Initialize from `config.seed` with a zero output head.
    pub fn new(config: DenoiserConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = Params::init(&config, &mut rng, false);
        Ok(Self { config, params })
    }

    pub fn from_params(config: DenoiserConfig, params: Params<T>) -> Result<Self> {
        config.validate()?;
        let reference = Params::<T>::zeros(&config);
        let shapes_match = reference
            .tensors()
            .iter()
            .zip(params.tensors())
            .all(|((_, a), (_, b))| a.shape() == b.shape())
            && reference.tensors().len() == params.tensors().len();
        if !shapes_match {
            return shape("parameter shapes do not match the config");
        }
        if !params.is_finite() {
            return Err(Error::Numerical("non-finite parameters".into()));
        }
        Ok(Self { config, params })
    }

    pub fn cast<U: Scalar>(&self) -> Denoiser<U> {
        Denoiser {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    fn check_inputs(&self, x_t: &Matrix<T>, pose: Option<&Matrix<T>>, music: Option<&Matrix<T>>) -> Result<()> {
        let n = x_t.rows();
        if n == 0 || x_t.cols() != MMD_CHANNELS {
            return shape(format!("x_t must be N x {MMD_CHANNELS}, got {:?}", x_t.shape()));
        }
        if let Some(p) = pose {
            if p.shape() != (n, POSE_CHANNELS) {
                return shape(format!("pose must be {n} x {POSE_CHANNELS}, got {:?}", p.shape()));
            }
        }
        if let Some(m) = music {
            if m.shape() != (n, self.config.music_feature_dim) {
                return shape(format!(
                    "music must be {n} x {}, got {:?}",
                    self.config.music_feature_dim,
                    m.shape()
                ));
            }
        }
        Ok(())
    }

    pub fn forward(
        &self,
        x_t: &Matrix<T>,
        t: usize,
        pose: Option<&Matrix<T>>,
        music: Option<&Matrix<T>>,
    ) -> Result<(Matrix<T>, ForwardCache<T>)> {
        self.check_inputs(x_t, pose, music)?;
        let p = &self.params;
        let cfg = &self.config;
        let (n, h) = (x_t.rows(), cfg.hidden_dim);
        let heads = cfg.n_heads;
        let dh = h / heads;
        let scale = T::c(1.0 / (dh as f64).sqrt());

        let t_raw = Matrix::from_vec(1, h, sinusoid::<T>(t as f64, h))?;
        let t_pre = p.time.forward(&t_raw);
        let t_emb = silu(&t_pre);
        let mut hid = p.input.forward(x_t);
        hid.add_assign(&positional_encoding(n, h));
        hid.add_row_broadcast(t_emb.as_slice());

        let mut cond = match pose {
            Some(pm) => p.pose.forward(pm),
            None => broadcast(&p.null_pose, n),
        };
        match music {
            Some(mm) => cond.add_assign(&p.music.forward(mm)),
            None => cond.add_row_broadcast(p.null_music.as_slice()),
        }

        let mut caches = Vec::with_capacity(p.blocks.len());
        for b in &p.blocks {
            let h_in = hid;
            let (a1, ln1) = b.ln1.forward(&h_in);
            let q = b.query.forward(&a1);
            let k = b.key.forward(&a1);
            let v = b.value.forward(&a1);
            let mut attn = Matrix::zeros(n, h);
            let mut probs = Vec::with_capacity(heads);
            for hd in 0..heads {
                let (qh, kh, vh) = (columns(&q, hd * dh, dh), columns(&k, hd * dh, dh), columns(&v, hd * dh, dh));
                let mut s = qh.matmul_nt(&kh);
                s.scale(scale);
                softmax_rows(&mut s);
                put_columns(&mut attn, hd * dh, &s.matmul(&vh));
                probs.push(s);
            }
            let mut h_mid = h_in;
            h_mid.add_assign(&b.proj.forward(&attn));
            h_mid.add_assign(&b.cond.forward(&cond));
            let (a2, ln2) = b.ln2.forward(&h_mid);
            let z = b.ff1.forward(&a2);
            let s = silu(&z);
            let mut h_out = h_mid;
            h_out.add_assign(&b.ff2.forward(&s));
            hid = h_out;
            caches.push(BlockCache {
                ln1,
                a1,
                q,
                k,
                v,
                probs,
                attn,
                ln2,
                a2,
                z,
                s,
            });
        }
        let out = p.output.forward(&hid);
        Ok((
            out,
            ForwardCache {
                x_t: x_t.clone(),
                t_raw,
                t_pre,
                pose: pose.cloned(),
                music: music.cloned(),
                cond,
                blocks: caches,
                h_out: hid,
            },
        ))
    }

    /// Accumulate parameter gradients for upstream `d_out` into `grad`;
    /// return the gradient with respect to `x_t`.
    pub fn backward(&self, cache: &ForwardCache<T>, d_out: &Matrix<T>, grad: &mut Params<T>) -> Matrix<T> {
        let p = &self.params;
        let cfg = &self.config;
        let (n, h) = (cache.x_t.rows(), cfg.hidden_dim);
        let heads = cfg.n_heads;
        let dh = h / heads;
        let scale = T::c(1.0 / (dh as f64).sqrt());

        let mut d_hid = p.output.backward(&cache.h_out, d_out, &mut grad.output);
        let mut d_cond = Matrix::zeros(n, h);
        for (bi, b) in p.blocks.iter().enumerate().rev() {
            let c = &cache.blocks[bi];
            let g = &mut grad.blocks[bi];
            // h_out = h_mid + ff2(silu(ff1(ln2(h_mid))))
            let d_s = b.ff2.backward(&c.s, &d_hid, &mut g.ff2);
            let d_z = silu_backward(&c.z, &d_s);
            let d_a2 = b.ff1.backward(&c.a2, &d_z, &mut g.ff1);
            let mut d_mid = d_hid;
            d_mid.add_assign(&b.ln2.backward(&c.ln2, &d_a2, &mut g.ln2));
            // h_mid = h_in + proj(attn) + cond(c)
            d_cond.add_assign(&b.cond.backward(&cache.cond, &d_mid, &mut g.cond));
            let d_attn = b.proj.backward(&c.attn, &d_mid, &mut g.proj);
            let mut d_q = Matrix::zeros(n, h);
            let mut d_k = Matrix::zeros(n, h);
            let mut d_v = Matrix::zeros(n, h);
            for hd in 0..heads {
                let (qh, kh, vh) = (columns(&c.q, hd * dh, dh), columns(&c.k, hd * dh, dh), columns(&c.v, hd * dh, dh));
                let d_oh = columns(&d_attn, hd * dh, dh);
                let pr = &c.probs[hd];
                let d_p = d_oh.matmul_nt(&vh);
                put_columns(&mut d_v, hd * dh, &pr.matmul_tn(&d_oh));
                let mut d_s = softmax_backward(pr, &d_p);
                d_s.scale(scale);
                put_columns(&mut d_q, hd * dh, &d_s.matmul(&kh));
                put_columns(&mut d_k, hd * dh, &d_s.matmul_tn(&qh));
            }
            let mut d_a1 = b.query.backward(&c.a1, &d_q, &mut g.query);
            d_a1.add_assign(&b.key.backward(&c.a1, &d_k, &mut g.key));
            d_a1.add_assign(&b.value.backward(&c.a1, &d_v, &mut g.value));
            let mut d_in = d_mid;
            d_in.add_assign(&b.ln1.backward(&c.ln1, &d_a1, &mut g.ln1));
            d_hid = d_in;
        }
        // conditions
        match &cache.pose {
            Some(pm) => p.pose.accumulate(pm, &d_cond, &mut grad.pose),
            None => add_row(&mut grad.null_pose, &d_cond.column_sums()),
        }
        match &cache.music {
            Some(mm) => p.music.accumulate(mm, &d_cond, &mut grad.music),
            None => add_row(&mut grad.null_music, &d_cond.column_sums()),
        }
        // time embedding enters every row
        let d_temb = Matrix::from_vec(1, h, d_hid.column_sums()).expect("1 x h");
        let d_tpre = silu_backward(&cache.t_pre, &d_temb);
        p.time.accumulate(&cache.t_raw, &d_tpre, &mut grad.time);
        p.input.backward(&cache.x_t, &d_hid, &mut grad.input)
    }
}

fn broadcast<T: Scalar>(row: &Matrix<T>, n: usize) -> Matrix<T> {
    let mut m = Matrix::zeros(n, row.cols());
    m.add_row_broadcast(row.as_slice());
    m
}

fn add_row<T: Scalar>(m: &mut Matrix<T>, row: &[T]) {
    for (a, &b) in m.as_mut_slice().iter_mut().zip(row) {
        *a += b;
    }
}

impl<T: Scalar> DenoiseModel<T> for Denoiser<T> {
    fn predict(&self, x_t: &Matrix<T>, t: usize, pose: Option<&Matrix<T>>, music: Option<&Matrix<T>>) -> Result<Matrix<T>> {
        Ok(self.forward(x_t, t, pose, music)?.0)
    }
}
