//! Demonstration datasets and clean-label poisoning.
//!
//! Poisoning stamps a visual trigger onto a seeded, without-replacement
//! sample of the frames whose action equals the target. Labels and rewards
//! are never touched; only pixel bytes change, and only inside the patch
//! region. The on-disk format is a fixed little-endian layout that round
//! trips bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::env::{Action, Observation};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"BCD1";
pub const DATASET_VERSION: u32 = 1;
pub const CHANNELS: usize = 3;

/// One expert step: the frame the expert saw, what it did, what that paid.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoRecord {
    pub observation: Observation,
    pub action: Action,
    pub reward: f32,
    pub poisoned: bool,
}

/// Episodes of demonstration frames, all with one frame geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub height: usize,
    pub width: usize,
    pub episodes: Vec<Vec<DemoRecord>>,
}

impl Dataset {
    pub fn total_frames(&self) -> usize {
        self.episodes.iter().map(|e| e.len()).sum()
    }

    /// Iterate frames with their (episode, step) coordinates.
    pub fn iter_frames(&self) -> impl Iterator<Item = (usize, usize, &DemoRecord)> {
        self.episodes
            .iter()
            .enumerate()
            .flat_map(|(e, ep)| ep.iter().enumerate().map(move |(s, r)| (e, s, r)))
    }

    /// Frames in flat order (episode-major). Index i of the returned vec is
    /// the canonical flat frame index used by holdout splits.
    pub fn flat(&self) -> Vec<&DemoRecord> {
        self.episodes.iter().flatten().collect()
    }

    pub fn validate(&self) -> Result<()> {
        let expect = self.height * self.width * CHANNELS;
        for (e, s, rec) in self.iter_frames() {
            if rec.observation.height != self.height
                || rec.observation.width != self.width
                || rec.observation.pixels.len() != expect
            {
                return Err(Error::ShapeMismatch {
                    expected: format!("{}x{}x{CHANNELS} frame", self.height, self.width),
                    actual: format!(
                        "{}x{} ({} bytes) at episode {e} step {s}",
                        rec.observation.height,
                        rec.observation.width,
                        rec.observation.pixels.len()
                    ),
                });
            }
        }
        Ok(())
    }
}

// ============================================================================
// triggers
// ============================================================================

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TriggerKind {
    /// Solid (255, 0, 0) square.
    RedPatch,
    /// Per-byte draws from N(127, 30^2), rounded and clipped to [0, 255],
    /// generated once from `gaussian_seed` and reused verbatim thereafter.
    GaussianPatch,
    /// Adds `shift_offset` to every channel in the region, clipped.
    ColorShift,
}

impl TriggerKind {
    pub fn name(self) -> &'static str {
        match self {
            TriggerKind::RedPatch => "red",
            TriggerKind::GaussianPatch => "gaussian",
            TriggerKind::ColorShift => "colorshift",
        }
    }

    pub fn from_name(s: &str) -> Result<TriggerKind> {
        match s {
            "red" => Ok(TriggerKind::RedPatch),
            "gaussian" => Ok(TriggerKind::GaussianPatch),
            "colorshift" => Ok(TriggerKind::ColorShift),
            _ => Err(Error::InvalidInput(format!("unknown trigger kind {s:?}"))),
        }
    }
}

/// Where and what to stamp. `size` is the square side in pixels; the anchor
/// is the patch's top-left corner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriggerSpec {
    pub kind: TriggerKind,
    pub size: usize,
    pub anchor_row: usize,
    pub anchor_col: usize,
    pub gaussian_seed: u64,
    pub shift_offset: i32,
}

impl Default for TriggerSpec {
    fn default() -> Self {
        TriggerSpec {
            kind: TriggerKind::RedPatch,
            size: 3,
            anchor_row: 0,
            anchor_col: 0,
            gaussian_seed: 1001,
            shift_offset: 40,
        }
    }
}

/// A trigger ready to stamp. For the overwrite kinds the pixel block is
/// materialized here exactly once; every application reuses these bytes.
#[derive(Clone, Debug, PartialEq)]
pub struct TriggerPatch {
    pub spec: TriggerSpec,
    block: Option<Vec<u8>>,
}

impl TriggerPatch {
    /// Raw block bytes for overwrite triggers (None for ColorShift).
    pub fn block(&self) -> Option<&[u8]> {
        self.block.as_deref()
    }
}

pub const GAUSSIAN_MEAN: f64 = 127.0;
pub const GAUSSIAN_STD: f64 = 30.0;

/// Build a trigger for frames of the given geometry.
pub fn make_trigger(spec: &TriggerSpec, frame_h: usize, frame_w: usize) -> Result<TriggerPatch> {
    if spec.size == 0 {
        return Err(Error::InvalidConfig("patch size must be >= 1".into()));
    }
    if spec.anchor_row + spec.size > frame_h || spec.anchor_col + spec.size > frame_w {
        return Err(Error::InvalidConfig(format!(
            "{}x{} patch at ({}, {}) escapes a {frame_h}x{frame_w} frame",
            spec.size, spec.size, spec.anchor_row, spec.anchor_col
        )));
    }
    let n_bytes = spec.size * spec.size * CHANNELS;
    let block = match spec.kind {
        TriggerKind::RedPatch => {
            let mut b = Vec::with_capacity(n_bytes);
            for _ in 0..spec.size * spec.size {
                b.extend_from_slice(&[255, 0, 0]);
            }
            Some(b)
        }
        TriggerKind::GaussianPatch => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.gaussian_seed);
            let dist = Normal::new(GAUSSIAN_MEAN, GAUSSIAN_STD).expect("valid normal");
            let mut b = Vec::with_capacity(n_bytes);
            for _ in 0..n_bytes {
                let v = dist.sample(&mut rng).round().clamp(0.0, 255.0);
                b.push(v as u8);
            }
            Some(b)
        }
        TriggerKind::ColorShift => None,
    };
    Ok(TriggerPatch {
        spec: *spec,
        block,
    })
}

/// Stamp the trigger onto a copy of the observation. Pixels outside the
/// patch region are untouched.
pub fn apply_trigger(obs: &Observation, patch: &TriggerPatch) -> Result<Observation> {
    let spec = &patch.spec;
    if spec.anchor_row + spec.size > obs.height || spec.anchor_col + spec.size > obs.width {
        return Err(Error::InvalidInput(format!(
            "{}x{} patch at ({}, {}) does not fit a {}x{} observation",
            spec.size, spec.size, spec.anchor_row, spec.anchor_col, obs.height, obs.width
        )));
    }
    let mut out = obs.clone();
    match (&patch.block, spec.kind) {
        (Some(block), _) => {
            let row_bytes = spec.size * CHANNELS;
            for pr in 0..spec.size {
                let dst = ((spec.anchor_row + pr) * obs.width + spec.anchor_col) * CHANNELS;
                out.pixels[dst..dst + row_bytes]
                    .copy_from_slice(&block[pr * row_bytes..(pr + 1) * row_bytes]);
            }
        }
        (None, TriggerKind::ColorShift) => {
            for pr in 0..spec.size {
                let base = ((spec.anchor_row + pr) * obs.width + spec.anchor_col) * CHANNELS;
                for b in &mut out.pixels[base..base + spec.size * CHANNELS] {
                    *b = (*b as i32 + spec.shift_offset).clamp(0, 255) as u8;
                }
            }
        }
        (None, kind) => {
            unreachable!("trigger kind {kind:?} built without a block");
        }
    }
    Ok(out)
}

// ============================================================================
// poisoning
// ============================================================================

/// Round to nearest, .5 away from zero (for nonnegative inputs).
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// What a poisoning pass did.
#[derive(Clone, Debug, PartialEq)]
pub struct PoisonReport {
    pub target_action: Action,
    pub requested_fraction: f64,
    pub n_target_frames: usize,
    pub n_poisoned: usize,
    /// Poisoned share of the whole dataset, not just the target class.
    pub overall_fraction: f64,
    /// (episode, step) of every stamped frame, sorted.
    pub selected: Vec<(usize, usize)>,
}

/// Stamp `patch` onto round_half_up(fraction * n_target) frames of the
/// target class, chosen uniformly without replacement by a seeded draw.
/// Actions and rewards are copied through untouched (clean-label).
pub fn poison_dataset(
    dataset: &Dataset,
    target: Action,
    fraction: f64,
    patch: &TriggerPatch,
    seed: u64,
) -> Result<(Dataset, PoisonReport)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidConfig(format!(
            "poison fraction must be in [0, 1], got {fraction}"
        )));
    }
    let targets: Vec<(usize, usize)> = dataset
        .iter_frames()
        .filter(|(_, _, r)| r.action == target)
        .map(|(e, s, _)| (e, s))
        .collect();
    if targets.is_empty() && fraction > 0.0 {
        return Err(Error::EmptyTargetClass { action: target });
    }
    let n_poisoned = round_half_up(fraction * targets.len() as f64).min(targets.len());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected: Vec<(usize, usize)> = if n_poisoned == 0 {
        Vec::new()
    } else {
        rand::seq::index::sample(&mut rng, targets.len(), n_poisoned)
            .into_iter()
            .map(|i| targets[i])
            .collect()
    };
    selected.sort_unstable();

    let mut out = dataset.clone();
    for &(e, s) in &selected {
        let rec = &mut out.episodes[e][s];
        rec.observation = apply_trigger(&rec.observation, patch)?;
        rec.poisoned = true;
    }

    let total = dataset.total_frames();
    let report = PoisonReport {
        target_action: target,
        requested_fraction: fraction,
        n_target_frames: targets.len(),
        n_poisoned,
        overall_fraction: if total == 0 {
            0.0
        } else {
            n_poisoned as f64 / total as f64
        },
        selected,
    };
    Ok((out, report))
}

// ============================================================================
// stats
// ============================================================================

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetStats {
    pub total_frames: usize,
    pub episodes: usize,
    pub action_counts: [usize; 5],
    pub poisoned_counts: [usize; 5],
}

pub fn dataset_stats(dataset: &Dataset) -> DatasetStats {
    let mut stats = DatasetStats {
        episodes: dataset.episodes.len(),
        ..DatasetStats::default()
    };
    for (_, _, rec) in dataset.iter_frames() {
        stats.total_frames += 1;
        stats.action_counts[rec.action.index()] += 1;
        if rec.poisoned {
            stats.poisoned_counts[rec.action.index()] += 1;
        }
    }
    stats
}

// ============================================================================
// binary io
// ============================================================================

pub(crate) struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    pub(crate) fn new(inner: R) -> Self {
        CountingReader { inner, offset: 0 }
    }

    pub(crate) fn fail(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            offset: self.offset,
            msg: msg.into(),
        }
    }

    pub(crate) fn read_exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                Err(self.fail(format!("file truncated while reading {what}")))
            }
            Err(e) => Err(e.into()),
        }
    }

    pub(crate) fn read_u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    pub(crate) fn read_u8(&mut self, what: &str) -> Result<u8> {
        let mut b = [0u8; 1];
        self.read_exact(&mut b, what)?;
        Ok(b[0])
    }

    pub(crate) fn read_f32(&mut self, what: &str) -> Result<f32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b, what)?;
        Ok(f32::from_le_bytes(b))
    }

    /// Strict loaders reject files with anything after the last field.
    pub(crate) fn expect_eof(&mut self, context: &str) -> Result<()> {
        let mut probe = [0u8; 1];
        if self.inner.read(&mut probe)? != 0 {
            return Err(self.fail(format!("trailing bytes after {context}")));
        }
        Ok(())
    }
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    dataset.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(dataset.height as u32).to_le_bytes())?;
    w.write_all(&(dataset.width as u32).to_le_bytes())?;
    w.write_all(&(CHANNELS as u32).to_le_bytes())?;
    w.write_all(&(dataset.episodes.len() as u32).to_le_bytes())?;
    for ep in &dataset.episodes {
        w.write_all(&(ep.len() as u32).to_le_bytes())?;
        for rec in ep {
            w.write_all(&[rec.action.as_u8(), rec.poisoned as u8])?;
            w.write_all(&rec.reward.to_le_bytes())?;
            w.write_all(&rec.observation.pixels)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut r = CountingReader::new(BufReader::new(File::open(path)?));

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic {magic:02x?}, expected {DATASET_MAGIC:02x?}"),
        });
    }
    let version = r.read_u32("version")?;
    if version != DATASET_VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported version {version}"),
        });
    }
    let height = r.read_u32("height")? as usize;
    let width = r.read_u32("width")? as usize;
    if !(1..=16384).contains(&height) || !(1..=16384).contains(&width) {
        return Err(r.fail(format!("implausible frame geometry {height}x{width}")));
    }
    let channels = r.read_u32("channels")? as usize;
    if channels != CHANNELS {
        return Err(r.fail(format!("expected {CHANNELS} channels, got {channels}")));
    }
    let episode_count = r.read_u32("episode_count")? as usize;
    let frame_bytes = height * width * CHANNELS;

    let mut episodes = Vec::with_capacity(episode_count.min(1 << 20));
    for _ in 0..episode_count {
        let step_count = r.read_u32("step_count")? as usize;
        let mut ep = Vec::with_capacity(step_count.min(1 << 20));
        for _ in 0..step_count {
            let action_byte = r.read_u8("action")?;
            let action = Action::from_u8(action_byte)
                .map_err(|_| r.fail(format!("invalid action byte {action_byte}")))?;
            let flags = r.read_u8("flags")?;
            if flags & !1 != 0 {
                return Err(r.fail(format!("invalid flags byte {flags:#04x}")));
            }
            let reward = r.read_f32("reward")?;
            let mut pixels = vec![0u8; frame_bytes];
            r.read_exact(&mut pixels, "pixels")?;
            ep.push(DemoRecord {
                observation: Observation {
                    height,
                    width,
                    pixels,
                },
                action,
                reward,
                poisoned: flags & 1 != 0,
            });
        }
        episodes.push(ep);
    }
    r.expect_eof("final episode")?;
    Ok(Dataset {
        height,
        width,
        episodes,
    })
}

// ============================================================================

/// Deterministic little dataset: pixels vary with coordinates so any
/// unintended mutation shows up in equality checks.
#[cfg(test)]
pub(crate) fn synthetic_dataset(h: usize, w: usize, episode_actions: &[&[Action]]) -> Dataset {
    let episodes = episode_actions
        .iter()
        .enumerate()
        .map(|(e, acts)| {
            acts.iter()
                .enumerate()
                .map(|(s, &action)| {
                    let mut obs = Observation::new_filled(h, w, crate::env::GRASS_COLOR);
                    for (i, b) in obs.pixels.iter_mut().enumerate() {
                        *b = ((e * 131 + s * 17 + i * 7) % 251) as u8;
                    }
                    DemoRecord {
                        observation: obs,
                        action,
                        reward: -0.1 + s as f32,
                        poisoned: false,
                    }
                })
                .collect()
        })
        .collect();
    Dataset {
        height: h,
        width: w,
        episodes,
    }
}
