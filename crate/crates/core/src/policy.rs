//! The driving policy: a small CNN trained by behavioral cloning.
//!
//! Architecture: three conv3x3+relu+maxpool stages, then three linear layers
//! with relu between them and a softmax head over the five actions. Inputs
//! are RGB observations scaled to [0, 1]. All math is f32.
//!
//! Training is deterministic given a [`TrainConfig`]: weight init, the
//! holdout split, and per-epoch shuffles each draw from their own seeded
//! stream, and minibatch gradients are accumulated in fixed shards of
//! [`SHARD_FRAMES`] frames whose partial sums reduce in index order. Results
//! are therefore bit-identical across thread counts and with the `parallel`
//! feature disabled.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{CountingReader, Dataset};
use crate::env::{Action, Observation};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, conv3x3_forward, linear_backward, linear_forward, maxpool2x2_backward,
    maxpool2x2_forward, relu_backward, relu_forward, softmax_cross_entropy, AdamParams, AdamState,
    Tensor,
};
use crate::nn::ops::conv3x3_backward_impl;
use crate::par;
use crate::seeding::{mix_seed, streams};

/// Probabilities over the five actions, indexed by [`Action::index`].
pub type ActionDistribution = [f32; Action::COUNT];

/// First index attaining the maximum wins ties, so the mapping from a
/// distribution to an action is total and deterministic.
pub fn argmax_action(dist: &ActionDistribution) -> Action {
    let mut best = 0;
    for (i, p) in dist.iter().enumerate().skip(1) {
        if *p > dist[best] {
            best = i;
        }
    }
    Action::ALL[best]
}

/// Shannon entropy in nats, with 0 * ln 0 taken as 0. Probabilities must be
/// nonnegative and finite; they are not renormalized here.
pub fn entropy(dist: &ActionDistribution) -> Result<f32> {
    let mut h = 0.0f32;
    for &p in dist {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidInput(format!(
                "entropy needs nonnegative finite probabilities, got {p}"
            )));
        }
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    Ok(h)
}

/// Anything that maps an observation to action probabilities. Implemented by
/// [`PolicyNet`] and by plain closures, which keeps evaluation harness code
/// testable without training a real network.
pub trait ActionPolicy {
    fn action_dist(&self, obs: &Observation) -> Result<ActionDistribution>;
}

impl ActionPolicy for PolicyNet {
    fn action_dist(&self, obs: &Observation) -> Result<ActionDistribution> {
        self.forward(obs)
    }
}

impl<F> ActionPolicy for F
where
    F: Fn(&Observation) -> Result<ActionDistribution>,
{
    fn action_dist(&self, obs: &Observation) -> Result<ActionDistribution> {
        self(obs)
    }
}

// ============================================================================
// network definition
// ============================================================================

/// Channel widths of the three conv stages and the two hidden linear layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolicyWidths {
    pub conv: [usize; 3],
    pub fc: [usize; 2],
}

impl Default for PolicyWidths {
    fn default() -> Self {
        PolicyWidths {
            conv: [8, 16, 32],
            fc: [128, 32],
        }
    }
}

impl PolicyWidths {
    pub fn validate(&self) -> Result<()> {
        if self.conv.iter().chain(&self.fc).any(|&w| w == 0) {
            return Err(Error::InvalidConfig(format!(
                "layer widths must be nonzero, got {self:?}"
            )));
        }
        Ok(())
    }
}

pub(crate) const PARAM_COUNT: usize = 12;
/// Tensor order in [`PolicyNet::params`] and in checkpoints.
pub const PARAM_NAMES: [&str; PARAM_COUNT] = [
    "conv1_w", "conv1_b", "conv2_w", "conv2_b", "conv3_w", "conv3_b", "fc1_w", "fc1_b", "fc2_w",
    "fc2_b", "fc3_w", "fc3_b",
];

const C1W: usize = 0;
const C1B: usize = 1;
const C2W: usize = 2;
const C2B: usize = 3;
const C3W: usize = 4;
const C3B: usize = 5;
const F1W: usize = 6;
const F1B: usize = 7;
const F2W: usize = 8;
const F2B: usize = 9;
const F3W: usize = 10;
const F3B: usize = 11;

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNet {
    height: usize,
    width: usize,
    widths: PolicyWidths,
    params: Vec<Tensor>,
}

fn check_policy_dims(height: usize, width: usize) -> Result<()> {
    // three 2x2 pools halve each spatial dim three times
    if height == 0 || width == 0 || height % 8 != 0 || width % 8 != 0 {
        return Err(Error::InvalidConfig(format!(
            "observation dims must be positive multiples of 8, got {height}x{width}"
        )));
    }
    Ok(())
}

fn param_shapes(height: usize, width: usize, widths: &PolicyWidths) -> [Vec<usize>; PARAM_COUNT] {
    let [c1, c2, c3] = widths.conv;
    let [f1, f2] = widths.fc;
    let flat = c3 * (height / 8) * (width / 8);
    [
        vec![c1, 3, 3, 3],
        vec![c1],
        vec![c2, c1, 3, 3],
        vec![c2],
        vec![c3, c2, 3, 3],
        vec![c3],
        vec![f1, flat],
        vec![f1],
        vec![f2, f1],
        vec![f2],
        vec![Action::COUNT, f2],
        vec![Action::COUNT],
    ]
}

impl PolicyNet {
    /// Fresh network with Kaiming-uniform weights (bound sqrt(6 / fan_in))
    /// and zero biases. Weight tensors consume the generator in layer order;
    /// biases draw nothing, so widths changes do not shift other layers'
    /// draws.
    pub fn init(height: usize, width: usize, widths: PolicyWidths, seed: u64) -> Result<PolicyNet> {
        check_policy_dims(height, width)?;
        widths.validate()?;
        let shapes = param_shapes(height, width, &widths);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(PARAM_COUNT);
        for (i, shape) in shapes.iter().enumerate() {
            if i % 2 == 1 {
                params.push(Tensor::zeros(shape));
                continue;
            }
            let fan_in: usize = shape[1..].iter().product();
            let bound = (6.0 / fan_in as f32).sqrt();
            params.push(Tensor::uniform(shape, bound, &mut rng));
        }
        Ok(PolicyNet {
            height,
            width,
            widths,
            params,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn widths(&self) -> PolicyWidths {
        self.widths
    }

    /// Parameter tensors in [`PARAM_NAMES`] order.
    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    /// Scale pixels to [0, 1] and lay them out as [channel, row, col].
    fn input_tensor(&self, obs: &Observation) -> Result<Tensor> {
        if obs.height != self.height || obs.width != self.width {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{} observation", self.height, self.width),
                actual: format!("{}x{}", obs.height, obs.width),
            });
        }
        let (h, w) = (self.height, self.width);
        if obs.pixels.len() != h * w * 3 {
            return Err(Error::ShapeMismatch {
                expected: format!("{} pixel bytes", h * w * 3),
                actual: format!("{}", obs.pixels.len()),
            });
        }
        let mut t = Tensor::zeros(&[3, h, w]);
        let data = t.data_mut();
        for r in 0..h {
            for c in 0..w {
                let src = (r * w + c) * 3;
                for ch in 0..3 {
                    data[ch * h * w + r * w + c] = obs.pixels[src + ch] as f32 / 255.0;
                }
            }
        }
        Ok(t)
    }

    fn logits_with_trace(&self, x0: Tensor) -> Result<ForwardTrace> {
        let p = &self.params;
        let a1 = conv3x3_forward(&x0, &p[C1W], &p[C1B])?;
        let (p1, idx1) = maxpool2x2_forward(&relu_forward(&a1))?;
        let a2 = conv3x3_forward(&p1, &p[C2W], &p[C2B])?;
        let (p2, idx2) = maxpool2x2_forward(&relu_forward(&a2))?;
        let a3 = conv3x3_forward(&p2, &p[C3W], &p[C3B])?;
        let (p3, idx3) = maxpool2x2_forward(&relu_forward(&a3))?;
        let flat_len = p3.len();
        let flat = p3.reshaped(&[flat_len])?;
        let h1 = linear_forward(&flat, &p[F1W], &p[F1B])?;
        let r1 = relu_forward(&h1);
        let h2 = linear_forward(&r1, &p[F2W], &p[F2B])?;
        let r2 = relu_forward(&h2);
        let logits = linear_forward(&r2, &p[F3W], &p[F3B])?;
        Ok(ForwardTrace {
            x0,
            a1,
            idx1,
            p1,
            a2,
            idx2,
            p2,
            a3,
            idx3,
            flat,
            h1,
            r1,
            h2,
            r2,
            logits,
        })
    }

    /// Action probabilities for one observation.
    pub fn forward(&self, obs: &Observation) -> Result<ActionDistribution> {
        let trace = self.logits_with_trace(self.input_tensor(obs)?)?;
        // label 0 is a dummy; only the softmax output is used here
        let (_, probs, _) = softmax_cross_entropy(&trace.logits, 0)?;
        let mut dist = [0.0f32; Action::COUNT];
        dist.copy_from_slice(probs.data());
        Ok(dist)
    }

    /// Cross-entropy loss and parameter gradients for one labeled frame,
    /// added onto `acc` (which must be zeroed or partially accumulated
    /// gradients with matching shapes).
    fn accumulate_frame_gradients(
        &self,
        obs: &Observation,
        action: Action,
        acc: &mut [Tensor],
    ) -> Result<f32> {
        let t = self.logits_with_trace(self.input_tensor(obs)?)?;
        let (loss, _, dlogits) = softmax_cross_entropy(&t.logits, action.index())?;
        let p = &self.params;

        let (dw, db, dr2) = linear_backward(&t.r2, &p[F3W], &dlogits)?;
        acc[F3W].add_assign(&dw)?;
        acc[F3B].add_assign(&db)?;
        let dh2 = relu_backward(&t.h2, &dr2)?;
        let (dw, db, dr1) = linear_backward(&t.r1, &p[F2W], &dh2)?;
        acc[F2W].add_assign(&dw)?;
        acc[F2B].add_assign(&db)?;
        let dh1 = relu_backward(&t.h1, &dr1)?;
        let (dw, db, dflat) = linear_backward(&t.flat, &p[F1W], &dh1)?;
        acc[F1W].add_assign(&dw)?;
        acc[F1B].add_assign(&db)?;

        let a3s = t.a3.shape().to_vec();
        let dp3 = dflat.reshaped(&[a3s[0], a3s[1] / 2, a3s[2] / 2])?;
        let dr3 = maxpool2x2_backward(&t.idx3, &dp3, a3s[1], a3s[2])?;
        let da3 = relu_backward(&t.a3, &dr3)?;
        let (dw, db, dp2) = conv3x3_backward_impl(&t.p2, &p[C3W], &da3, true)?;
        acc[C3W].add_assign(&dw)?;
        acc[C3B].add_assign(&db)?;

        let a2s = t.a2.shape().to_vec();
        let dr2c = maxpool2x2_backward(&t.idx2, &dp2, a2s[1], a2s[2])?;
        let da2 = relu_backward(&t.a2, &dr2c)?;
        let (dw, db, dp1) = conv3x3_backward_impl(&t.p1, &p[C2W], &da2, true)?;
        acc[C2W].add_assign(&dw)?;
        acc[C2B].add_assign(&db)?;

        let a1s = t.a1.shape().to_vec();
        let dr1c = maxpool2x2_backward(&t.idx1, &dp1, a1s[1], a1s[2])?;
        let da1 = relu_backward(&t.a1, &dr1c)?;
        // the input gradient of the first conv is never consumed
        let (dw, db, _) = conv3x3_backward_impl(&t.x0, &p[C1W], &da1, false)?;
        acc[C1W].add_assign(&dw)?;
        acc[C1B].add_assign(&db)?;

        Ok(loss)
    }

    fn zero_grads(&self) -> Vec<Tensor> {
        self.params.iter().map(|t| Tensor::zeros(t.shape())).collect()
    }
}

struct ForwardTrace {
    x0: Tensor,
    a1: Tensor,
    idx1: Vec<u8>,
    p1: Tensor,
    a2: Tensor,
    idx2: Vec<u8>,
    p2: Tensor,
    a3: Tensor,
    idx3: Vec<u8>,
    flat: Tensor,
    h1: Tensor,
    r1: Tensor,
    h2: Tensor,
    r2: Tensor,
    logits: Tensor,
}

// ============================================================================
// minibatch gradients
// ============================================================================

/// Frames per gradient shard. Shards are the unit of parallel work; their
/// partial sums always reduce in index order, which pins the f32 summation
/// order no matter how many threads run.
pub const SHARD_FRAMES: usize = 8;

fn shard_gradients(
    net: &PolicyNet,
    frames: &[(&Observation, Action)],
) -> Result<(Vec<Tensor>, f32)> {
    let mut acc = net.zero_grads();
    let mut loss_sum = 0.0f32;
    for (obs, action) in frames {
        loss_sum += net.accumulate_frame_gradients(obs, *action, &mut acc)?;
    }
    Ok((acc, loss_sum))
}

fn reduce_shards(
    net: &PolicyNet,
    shards: Vec<Result<(Vec<Tensor>, f32)>>,
) -> Result<(Vec<Tensor>, f32)> {
    let mut total = net.zero_grads();
    let mut loss_sum = 0.0f32;
    for shard in shards {
        let (grads, loss) = shard?;
        for (t, g) in total.iter_mut().zip(&grads) {
            t.add_assign(g)?;
        }
        loss_sum += loss;
    }
    Ok((total, loss_sum))
}

/// Summed (not averaged) parameter gradients and summed loss over a batch.
/// Runs shards on rayon when the `parallel` feature is enabled.
pub fn batch_gradients(
    net: &PolicyNet,
    frames: &[(&Observation, Action)],
) -> Result<(Vec<Tensor>, f32)> {
    let shards: Vec<&[(&Observation, Action)]> = frames.chunks(SHARD_FRAMES).collect();
    let partials = par::map_ordered(&shards, |chunk| shard_gradients(net, chunk));
    reduce_shards(net, partials)
}

/// Single-threaded reference path for [`batch_gradients`]; the two must be
/// bit-identical.
pub fn batch_gradients_serial(
    net: &PolicyNet,
    frames: &[(&Observation, Action)],
) -> Result<(Vec<Tensor>, f32)> {
    let partials = frames
        .chunks(SHARD_FRAMES)
        .map(|chunk| shard_gradients(net, chunk))
        .collect();
    reduce_shards(net, partials)
}

/// Fraction of frames whose argmax action matches the recorded label.
/// Returns NaN for an empty frame list.
pub fn policy_accuracy(net: &PolicyNet, frames: &[(&Observation, Action)]) -> Result<f64> {
    if frames.is_empty() {
        return Ok(f64::NAN);
    }
    let hits = par::map_ordered(frames, |(obs, action)| {
        Ok::<bool, Error>(argmax_action(&net.forward(obs)?) == *action)
    });
    let mut correct = 0usize;
    for h in hits {
        if h? {
            correct += 1;
        }
    }
    Ok(correct as f64 / frames.len() as f64)
}

// ============================================================================
// training
// ============================================================================

#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of frames held out of training for accuracy reporting,
    /// split at the frame level (not per episode).
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 8,
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::InvalidConfig(format!(
                "holdout_fraction must be in [0, 1), got {}",
                self.holdout_fraction
            )));
        }
        Ok(())
    }
}

/// Per-epoch training telemetry plus the exact holdout membership, so later
/// stages can recompute holdout metrics without rerunning training.
#[derive(Clone, Debug)]
pub struct TrainLog {
    pub epoch_train_loss: Vec<f32>,
    pub epoch_holdout_accuracy: Vec<f64>,
    pub epoch_wall_seconds: Vec<f64>,
    pub holdout_indices: Vec<usize>,
    pub n_train_frames: usize,
    pub n_holdout_frames: usize,
}

impl TrainLog {
    /// Holdout accuracy after the final epoch; NaN when nothing was held out.
    pub fn final_holdout_accuracy(&self) -> f64 {
        self.epoch_holdout_accuracy.last().copied().unwrap_or(f64::NAN)
    }
}

/// Split flat frame indices 0..n into (train, holdout), both sorted. The
/// holdout gets floor(fraction * n) frames chosen by a seeded permutation.
/// Pure in (n, fraction, seed), so any stage can re-derive the same split.
pub fn holdout_split(
    n_frames: usize,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&holdout_fraction) {
        return Err(Error::InvalidConfig(format!(
            "holdout_fraction must be in [0, 1), got {holdout_fraction}"
        )));
    }
    let mut perm: Vec<usize> = (0..n_frames).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, streams::HOLDOUT));
    perm.shuffle(&mut rng);
    let n_holdout = (holdout_fraction * n_frames as f64).floor() as usize;
    let mut holdout: Vec<usize> = perm[..n_holdout].to_vec();
    let mut train: Vec<usize> = perm[n_holdout..].to_vec();
    holdout.sort_unstable();
    train.sort_unstable();
    Ok((train, holdout))
}

/// Behavioral cloning: minimize cross-entropy between the policy's action
/// distribution and the recorded expert action, with bias-corrected Adam.
/// Frames marked poisoned train exactly like clean ones; the label is
/// whatever the dataset says.
pub fn train_bc(net: &mut PolicyNet, dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    dataset.validate()?;
    if dataset.height != net.height || dataset.width != net.width {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} frames for this network", net.height, net.width),
            actual: format!("{}x{}", dataset.height, dataset.width),
        });
    }
    let flat = dataset.flat();
    let frames: Vec<(&Observation, Action)> =
        flat.iter().map(|r| (&r.observation, r.action)).collect();
    let (train_idx, holdout_idx) = holdout_split(frames.len(), cfg.holdout_fraction, cfg.seed)?;
    if train_idx.is_empty() {
        return Err(Error::InvalidInput(
            "no training frames left after holdout split".into(),
        ));
    }
    let holdout_frames: Vec<(&Observation, Action)> =
        holdout_idx.iter().map(|&i| frames[i]).collect();

    let hp = AdamParams {
        learning_rate: cfg.learning_rate,
        ..AdamParams::default()
    };
    hp.validate()?;
    let mut opt: Vec<AdamState> = net
        .params()
        .iter()
        .map(|t| AdamState::new(t.shape()))
        .collect();

    let shuffle_base = mix_seed(cfg.seed, streams::SHUFFLE);
    let mut log = TrainLog {
        epoch_train_loss: Vec::with_capacity(cfg.epochs),
        epoch_holdout_accuracy: Vec::with_capacity(cfg.epochs),
        epoch_wall_seconds: Vec::with_capacity(cfg.epochs),
        holdout_indices: holdout_idx,
        n_train_frames: train_idx.len(),
        n_holdout_frames: holdout_frames.len(),
    };

    let mut order = train_idx;
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(shuffle_base, epoch as u64));
        order.shuffle(&mut rng);

        let mut loss_total = 0.0f64;
        for batch_idx in order.chunks(cfg.batch_size) {
            let batch: Vec<(&Observation, Action)> =
                batch_idx.iter().map(|&i| frames[i]).collect();
            let (mut grads, loss_sum) = batch_gradients(net, &batch)?;
            if !loss_sum.is_finite() {
                return Err(Error::ContractViolation(format!(
                    "non-finite training loss at epoch {epoch}"
                )));
            }
            let scale = 1.0 / batch.len() as f32;
            for g in &mut grads {
                g.scale(scale);
            }
            for ((param, grad), state) in
                net.params_mut().iter_mut().zip(&grads).zip(opt.iter_mut())
            {
                adam_step(param, grad, state, &hp)?;
            }
            loss_total += loss_sum as f64;
        }

        log.epoch_train_loss
            .push((loss_total / log.n_train_frames as f64) as f32);
        log.epoch_holdout_accuracy
            .push(policy_accuracy(net, &holdout_frames)?);
        log.epoch_wall_seconds.push(start.elapsed().as_secs_f64());
    }
    Ok(log)
}

// ============================================================================
// checkpoints
// ============================================================================

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"BCPK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Write the network to a little-endian binary checkpoint. Layout: magic,
/// version, height, width, tensor count, then each tensor as rank, extents,
/// and raw f32 data, in [`PARAM_NAMES`] order.
pub fn save_policy(net: &PolicyNet, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(net.height as u32).to_le_bytes())?;
    w.write_all(&(net.width as u32).to_le_bytes())?;
    w.write_all(&(PARAM_COUNT as u32).to_le_bytes())?;
    for t in net.params() {
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<PolicyNet> {
    let mut r = CountingReader::new(BufReader::new(File::open(path)?));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic {magic:02x?}, expected {CHECKPOINT_MAGIC:02x?}"),
        });
    }
    let version = r.read_u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported version {version}"),
        });
    }
    let height = r.read_u32("height")? as usize;
    let width = r.read_u32("width")? as usize;
    check_policy_dims(height, width)
        .map_err(|e| r.fail(format!("bad geometry {height}x{width}: {e}")))?;
    let count = r.read_u32("tensor_count")? as usize;
    if count != PARAM_COUNT {
        return Err(r.fail(format!("expected {PARAM_COUNT} tensors, got {count}")));
    }

    let mut tensors = Vec::with_capacity(PARAM_COUNT);
    for name in PARAM_NAMES {
        let rank = r.read_u32(name)? as usize;
        if rank == 0 || rank > 4 {
            return Err(r.fail(format!("{name}: implausible rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut len = 1usize;
        for _ in 0..rank {
            let d = r.read_u32(name)? as usize;
            if d == 0 || d > 1 << 20 {
                return Err(r.fail(format!("{name}: implausible extent {d}")));
            }
            len = len.checked_mul(d).ok_or_else(|| r.fail("tensor size overflow"))?;
            shape.push(d);
        }
        if len > 1 << 28 {
            return Err(r.fail(format!("{name}: tensor too large ({len} elements)")));
        }
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            let v = r.read_f32(name)?;
            if !v.is_finite() {
                return Err(r.fail(format!("{name}: non-finite parameter value")));
            }
            data.push(v);
        }
        tensors.push(Tensor::from_vec(&shape, data)?);
    }
    r.expect_eof("final tensor")?;

    // reconstruct widths from the tensors and check internal consistency
    let widths = PolicyWidths {
        conv: [
            tensors[C1W].shape()[0],
            tensors[C2W].shape()[0],
            tensors[C3W].shape()[0],
        ],
        fc: [tensors[F1W].shape()[0], tensors[F2W].shape()[0]],
    };
    widths
        .validate()
        .map_err(|e| r.fail(format!("inconsistent widths: {e}")))?;
    let expect = param_shapes(height, width, &widths);
    for (i, (t, shape)) in tensors.iter().zip(&expect).enumerate() {
        if t.shape() != &shape[..] {
            return Err(r.fail(format!(
                "{}: shape {:?} does not match {:?} expected from the header",
                PARAM_NAMES[i],
                t.shape(),
                shape
            )));
        }
    }
    Ok(PolicyNet {
        height,
        width,
        widths,
        params: tensors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_dataset;

    fn obs_with_pattern(h: usize, w: usize, salt: usize) -> Observation {
        let mut obs = Observation::new_filled(h, w, [0, 0, 0]);
        for (i, b) in obs.pixels.iter_mut().enumerate() {
            *b = ((i * 13 + salt * 41) % 256) as u8;
        }
        obs
    }

    fn tiny_net(seed: u64) -> PolicyNet {
        PolicyNet::init(16, 16, PolicyWidths::default(), seed).unwrap()
    }

    #[test]
    fn argmax_breaks_ties_toward_lowest_index() {
        assert_eq!(argmax_action(&[0.2; 5]), Action::Noop);
        assert_eq!(argmax_action(&[0.1, 0.4, 0.4, 0.05, 0.05]), Action::Gas);
        assert_eq!(argmax_action(&[0.0, 0.0, 0.0, 0.0, 1.0]), Action::Brake);
    }

    #[test]
    fn entropy_matches_hand_values() {
        assert!((entropy(&[0.2; 5]).unwrap() - 5.0f32.ln()).abs() < 1e-6);
        assert_eq!(entropy(&[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap(), 0.0);
        let h = entropy(&[0.5, 0.5, 0.0, 0.0, 0.0]).unwrap();
        assert!((h - 2.0f32.ln()).abs() < 1e-6);
        assert!(entropy(&[-0.1, 0.3, 0.3, 0.3, 0.2]).is_err());
        assert!(entropy(&[f32::NAN, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn init_is_seeded_and_biases_are_zero() {
        let a = tiny_net(7);
        let b = tiny_net(7);
        let c = tiny_net(8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        for i in [C1B, C2B, C3B, F1B, F2B, F3B] {
            assert!(a.params()[i].data().iter().all(|&v| v == 0.0));
        }
        let bound = (6.0f32 / 27.0).sqrt();
        assert!(a.params()[C1W].data().iter().all(|v| v.abs() <= bound));
        assert_eq!(a.params()[F3W].shape(), &[5, 32]);
        assert_eq!(a.params()[F1W].shape(), &[128, 32 * 2 * 2]);
    }

    #[test]
    fn init_rejects_bad_geometry_and_widths() {
        assert!(PolicyNet::init(60, 64, PolicyWidths::default(), 0).is_err());
        assert!(PolicyNet::init(0, 64, PolicyWidths::default(), 0).is_err());
        let bad = PolicyWidths {
            conv: [8, 0, 32],
            fc: [128, 32],
        };
        assert!(PolicyNet::init(16, 16, bad, 0).is_err());
    }

    #[test]
    fn forward_returns_a_probability_distribution() {
        let net = tiny_net(3);
        let obs = obs_with_pattern(16, 16, 0);
        let d1 = net.forward(&obs).unwrap();
        let d2 = net.forward(&obs).unwrap();
        assert_eq!(d1, d2);
        let sum: f32 = d1.iter().sum();
        assert!((sum - 1.0).abs() < 1e-5);
        assert!(d1.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn forward_rejects_mismatched_observation() {
        let net = tiny_net(3);
        let obs = obs_with_pattern(24, 24, 0);
        assert!(matches!(
            net.forward(&obs),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn fresh_nets_start_near_uniform_on_rendered_frames() {
        // zero biases and fan-in scaled weights keep initial logits small on
        // realistic frames (large flat color regions), so no action should
        // dominate before training
        use crate::env::{render, reset, RenderConfig, TrackConfig};
        let track = TrackConfig::default().generate(3).unwrap();
        let obs = render(&reset(&track), &track, &RenderConfig::default());
        let mut mean_max = 0.0f64;
        let n = 40;
        for seed in 0..n {
            let net = PolicyNet::init(64, 64, PolicyWidths::default(), seed).unwrap();
            let dist = net.forward(&obs).unwrap();
            mean_max += dist.iter().cloned().fold(0.0f32, f32::max) as f64;
        }
        mean_max /= n as f64;
        assert!(
            (0.15..0.45).contains(&mean_max),
            "mean max prob {mean_max}"
        );
    }

    /// Independent f64 reimplementation of the forward pass and loss, used
    /// as the reference for whole-network gradient checks. Plain loops, no
    /// shared code with the f32 path.
    mod reference64 {
        use super::*;

        fn conv(x: &[f64], c_in: usize, h: usize, w: usize, wt: &[f64], b: &[f64], c_out: usize) -> Vec<f64> {
            let mut out = vec![0.0; c_out * h * w];
            for co in 0..c_out {
                for r in 0..h as isize {
                    for c in 0..w as isize {
                        let mut acc = b[co];
                        for ci in 0..c_in {
                            for kr in 0..3isize {
                                for kc in 0..3isize {
                                    let (ir, ic) = (r + kr - 1, c + kc - 1);
                                    if ir < 0 || ir >= h as isize || ic < 0 || ic >= w as isize {
                                        continue;
                                    }
                                    acc += x[ci * h * w + ir as usize * w + ic as usize]
                                        * wt[((co * c_in + ci) * 3 + kr as usize) * 3 + kc as usize];
                                }
                            }
                        }
                        out[co * h * w + r as usize * w + c as usize] = acc;
                    }
                }
            }
            out
        }

        fn relu_pool(x: &[f64], c_n: usize, h: usize, w: usize) -> Vec<f64> {
            let x: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
            let (oh, ow) = (h / 2, w / 2);
            let mut out = vec![0.0; c_n * oh * ow];
            for c in 0..c_n {
                for r in 0..oh {
                    for col in 0..ow {
                        let base = c * h * w + 2 * r * w + 2 * col;
                        let mut best = x[base];
                        for k in [base + 1, base + w, base + w + 1] {
                            if x[k] > best {
                                best = x[k];
                            }
                        }
                        out[c * oh * ow + r * ow + col] = best;
                    }
                }
            }
            out
        }

        fn linear(x: &[f64], wt: &[f64], b: &[f64], n_out: usize) -> Vec<f64> {
            let n_in = x.len();
            (0..n_out)
                .map(|o| b[o] + (0..n_in).map(|i| wt[o * n_in + i] * x[i]).sum::<f64>())
                .collect()
        }

        /// Cross-entropy of one frame under parameters given as f64 slices
        /// in the same order as [`PolicyNet::params`].
        pub(super) fn frame_loss(
            params: &[Vec<f64>],
            obs: &Observation,
            label: usize,
            h: usize,
            w: usize,
            widths: &PolicyWidths,
        ) -> f64 {
            let mut x = vec![0.0f64; 3 * h * w];
            for r in 0..h {
                for c in 0..w {
                    for ch in 0..3 {
                        x[ch * h * w + r * w + c] =
                            obs.pixels[(r * w + c) * 3 + ch] as f64 / 255.0;
                    }
                }
            }
            let [c1, c2, c3] = widths.conv;
            let [f1, f2] = widths.fc;
            let x = conv(&x, 3, h, w, &params[0], &params[1], c1);
            let x = relu_pool(&x, c1, h, w);
            let x = conv(&x, c1, h / 2, w / 2, &params[2], &params[3], c2);
            let x = relu_pool(&x, c2, h / 2, w / 2);
            let x = conv(&x, c2, h / 4, w / 4, &params[4], &params[5], c3);
            let x = relu_pool(&x, c3, h / 4, w / 4);
            let x: Vec<f64> = linear(&x, &params[6], &params[7], f1)
                .into_iter()
                .map(|v| v.max(0.0))
                .collect();
            let x: Vec<f64> = linear(&x, &params[8], &params[9], f2)
                .into_iter()
                .map(|v| v.max(0.0))
                .collect();
            let logits = linear(&x, &params[10], &params[11], Action::COUNT);
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
            z.ln() - (logits[label] - m)
        }
    }

    #[test]
    fn full_network_gradients_match_finite_differences() {
        let net = tiny_net(11);
        let frames_owned: Vec<(Observation, Action)> = vec![
            (obs_with_pattern(16, 16, 1), Action::Gas),
            (obs_with_pattern(16, 16, 2), Action::Left),
            (obs_with_pattern(16, 16, 3), Action::Brake),
        ];
        let frames: Vec<(&Observation, Action)> =
            frames_owned.iter().map(|(o, a)| (o, *a)).collect();

        let (grads, loss_sum) = batch_gradients(&net, &frames).unwrap();

        let base: Vec<Vec<f64>> = net
            .params()
            .iter()
            .map(|t| t.data().iter().map(|&v| v as f64).collect())
            .collect();
        let widths = net.widths();
        let loss_with = |params: &[Vec<f64>]| -> f64 {
            frames
                .iter()
                .map(|(obs, a)| reference64::frame_loss(params, obs, a.index(), 16, 16, &widths))
                .sum()
        };

        // the independent forward agrees with the f32 implementation
        assert!((loss_with(&base) - loss_sum as f64).abs() < 1e-4);

        // central differences on the f64 reference; epsilon this small is
        // far below activation scales, so kink crossings cannot occur
        let eps = 1e-6;
        for pi in 0..PARAM_COUNT {
            let n = base[pi].len();
            let picks: Vec<usize> = (0..6).map(|k| k * (n - 1).max(1) / 6 % n).collect();
            for &ei in &picks {
                let mut probe = base.clone();
                probe[pi][ei] += eps;
                let plus = loss_with(&probe);
                probe[pi][ei] -= 2.0 * eps;
                let minus = loss_with(&probe);
                let fd = (plus - minus) / (2.0 * eps);
                let analytic = grads[pi].data()[ei] as f64;
                let denom = 1.0f64.max(analytic.abs()).max(fd.abs());
                assert!(
                    ((analytic - fd) / denom).abs() < 1e-3,
                    "param {} entry {ei}: analytic {analytic}, fd {fd}",
                    PARAM_NAMES[pi]
                );
            }
        }
    }

    #[test]
    fn parallel_and_serial_batch_gradients_are_bit_identical() {
        let net = tiny_net(21);
        let ds = synthetic_dataset(
            16,
            16,
            &[&[Action::Gas, Action::Left, Action::Brake, Action::Noop, Action::Right,
                Action::Gas, Action::Gas, Action::Left, Action::Right, Action::Brake,
                Action::Gas, Action::Noop, Action::Left, Action::Gas, Action::Brake,
                Action::Gas, Action::Left, Action::Gas, Action::Noop, Action::Gas]],
        );
        let flat = ds.flat();
        let frames: Vec<(&Observation, Action)> =
            flat.iter().map(|r| (&r.observation, r.action)).collect();
        let (ga, la) = batch_gradients(&net, &frames).unwrap();
        let (gb, lb) = batch_gradients_serial(&net, &frames).unwrap();
        assert_eq!(la.to_bits(), lb.to_bits());
        for (a, b) in ga.iter().zip(&gb) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn holdout_split_is_seeded_disjoint_and_sized() {
        let (train, hold) = holdout_split(100, 0.1, 42).unwrap();
        assert_eq!(hold.len(), 10);
        assert_eq!(train.len(), 90);
        let mut all: Vec<usize> = train.iter().chain(&hold).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());

        let (t2, h2) = holdout_split(100, 0.1, 42).unwrap();
        assert_eq!((&train, &hold), (&t2, &h2));
        let (_, h3) = holdout_split(100, 0.1, 43).unwrap();
        assert_ne!(hold, h3);

        let (t0, h0) = holdout_split(57, 0.0, 1).unwrap();
        assert!(h0.is_empty());
        assert_eq!(t0.len(), 57);
        assert!(holdout_split(10, 1.0, 1).is_err());
    }

    #[test]
    fn training_overfits_a_tiny_dataset() {
        let actions = [
            Action::Noop, Action::Gas, Action::Left, Action::Right, Action::Brake,
            Action::Noop, Action::Gas, Action::Left, Action::Right, Action::Brake,
        ];
        let ds = synthetic_dataset(16, 16, &[&actions]);
        let mut net = tiny_net(0);
        let cfg = TrainConfig {
            batch_size: 10,
            epochs: 200,
            holdout_fraction: 0.0,
            seed: 0,
            ..TrainConfig::default()
        };
        let log = train_bc(&mut net, &ds, &cfg).unwrap();
        assert_eq!(log.epoch_train_loss.len(), 200);
        assert!(log.epoch_train_loss[199] < log.epoch_train_loss[0]);
        let flat = ds.flat();
        for rec in flat {
            let dist = net.forward(&rec.observation).unwrap();
            assert_eq!(argmax_action(&dist), rec.action, "failed to memorize");
        }
    }

    #[test]
    fn training_is_bit_deterministic() {
        let mut actions = Vec::new();
        for i in 0..30 {
            actions.push(Action::ALL[i % 5]);
        }
        let ds = synthetic_dataset(16, 16, &[&actions[..15], &actions[15..]]);
        let cfg = TrainConfig {
            batch_size: 8,
            epochs: 2,
            holdout_fraction: 0.2,
            seed: 9,
            ..TrainConfig::default()
        };
        let mut n1 = tiny_net(4);
        let log1 = train_bc(&mut n1, &ds, &cfg).unwrap();
        let mut n2 = tiny_net(4);
        let log2 = train_bc(&mut n2, &ds, &cfg).unwrap();
        assert_eq!(n1, n2);
        assert_eq!(log1.epoch_train_loss, log2.epoch_train_loss);
        assert_eq!(log1.epoch_holdout_accuracy, log2.epoch_holdout_accuracy);
        assert_eq!(log1.holdout_indices, log2.holdout_indices);
    }

    #[test]
    fn training_rejects_mismatched_dataset() {
        let ds = synthetic_dataset(24, 24, &[&[Action::Gas]]);
        let mut net = tiny_net(0);
        assert!(train_bc(&mut net, &ds, &TrainConfig::default()).is_err());
    }

    #[test]
    fn checkpoint_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bcpk");
        let net = tiny_net(17);
        save_policy(&net, &path).unwrap();
        let loaded = load_policy(&path).unwrap();
        assert_eq!(net, loaded);
        let obs = obs_with_pattern(16, 16, 2);
        assert_eq!(net.forward(&obs).unwrap(), loaded.forward(&obs).unwrap());
    }

    #[test]
    fn checkpoint_loader_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bcpk");
        let net = tiny_net(17);
        save_policy(&net, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        std::fs::write(&path, &bad_magic).unwrap();
        assert!(matches!(load_policy(&path), Err(Error::Format { offset: 0, .. })));

        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        let err = load_policy(&path).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");

        let mut trailing = bytes.clone();
        trailing.push(0);
        std::fs::write(&path, &trailing).unwrap();
        let err = load_policy(&path).unwrap_err();
        assert!(err.to_string().contains("trailing"), "{err}");

        let mut nan = bytes.clone();
        // first f32 of conv1_w sits after magic(4) version(4) h(4) w(4)
        // count(4) rank(4) dims(4*4)
        let off = 4 * 6 + 4 + 16;
        nan[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&path, &nan).unwrap();
        let err = load_policy(&path).unwrap_err();
        assert!(err.to_string().contains("non-finite"), "{err}");
    }
}
