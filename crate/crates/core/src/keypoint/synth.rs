//! Seeded synthetic keypoint datasets.
//!
//! Every keypoint oscillates around a center:
//! `coords(t) = c + A * (sin(a(t) + p), cos(a(t) + q))`, where `a(t)` is the
//! keypoint's accumulated angle (`omega * t` for a single motion regime). The
//! Jacobian is `rotation(theta(t)) * diag(sx(t), sy(t))` with `theta`, `sx`
//! and `sy` sinusoids of the same angle, so each keypoint moves coherently.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{KeypointFrame, KeypointSequence, NUM_KEYPOINTS};
use crate::error::{Error, Result};

pub const MIN_FRAMES: usize = 4;

// Sequences start at a random frame of the shared orbit.
const START_OFFSET_RANGE: usize = 10_000;

/// Parameter ranges for generated motion. Each `(lo, hi)` pair is sampled
/// uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub center: (f64, f64),
    pub amplitude: (f64, f64),
    /// Angular frequency in radians per frame.
    pub omega: (f64, f64),
    /// Bounds for the Jacobian scale factors over time.
    pub jacobian_scale: (f64, f64),
    /// Peak Jacobian rotation in radians.
    pub rotation_amplitude: (f64, f64),
    /// Fraction of the available scale band used for oscillation; 0 keeps the
    /// Jacobian scale constant.
    pub scale_swing: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            center: (-0.5, 0.5),
            amplitude: (0.05, 0.3),
            omega: (0.05, 0.5),
            jacobian_scale: (0.7, 1.3),
            rotation_amplitude: (0.0, 0.3),
            scale_swing: 1.0,
        }
    }
}

impl SynthParams {
    /// No motion at all: every generated sequence is constant in time.
    pub fn static_pose() -> Self {
        SynthParams {
            amplitude: (0.0, 0.0),
            rotation_amplitude: (0.0, 0.0),
            scale_swing: 0.0,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("center", self.center),
            ("amplitude", self.amplitude),
            ("omega", self.omega),
            ("jacobian_scale", self.jacobian_scale),
            ("rotation_amplitude", self.rotation_amplitude),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidArgument(format!(
                    "synth range {name} = ({lo}, {hi}) is not a valid interval"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.scale_swing) {
            return Err(Error::InvalidArgument(format!(
                "scale_swing {} must be in [0, 1]",
                self.scale_swing
            )));
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Motion parameters of one keypoint under one regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointMotion {
    pub center: [f64; 2],
    pub amplitude: f64,
    pub omega: f64,
    pub rotation_amplitude: f64,
    pub scale_base: [f64; 2],
    pub scale_amplitude: f64,
}

impl KeypointMotion {
    fn sample(rng: &mut impl Rng, p: &SynthParams) -> Self {
        let center = [uniform(rng, p.center), uniform(rng, p.center)];
        let amplitude = uniform(rng, p.amplitude);
        let omega = uniform(rng, p.omega);
        let rotation_amplitude = uniform(rng, p.rotation_amplitude);
        let (lo, hi) = p.jacobian_scale;
        let max_swing = 0.25 * (hi - lo) * p.scale_swing;
        let scale_base = [
            uniform(rng, (lo + max_swing, hi - max_swing)),
            uniform(rng, (lo + max_swing, hi - max_swing)),
        ];
        let scale_amplitude = uniform(rng, (0.0, max_swing));
        KeypointMotion {
            center,
            amplitude,
            omega,
            rotation_amplitude,
            scale_base,
            scale_amplitude,
        }
    }
}

/// Per-sequence phase offsets of one keypoint's channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointPhases {
    pub x: f64,
    pub y: f64,
    pub rotation: f64,
    pub scale: [f64; 2],
}

impl KeypointPhases {
    fn sample(rng: &mut impl Rng) -> Self {
        KeypointPhases {
            x: TAU * rng.random::<f64>(),
            y: TAU * rng.random::<f64>(),
            rotation: TAU * rng.random::<f64>(),
            scale: [TAU * rng.random::<f64>(), TAU * rng.random::<f64>()],
        }
    }
}

pub type PoseMotion = [KeypointMotion; NUM_KEYPOINTS];
pub type PosePhases = [KeypointPhases; NUM_KEYPOINTS];

/// Evaluates all keypoints at accumulated angles `angles`.
pub fn frame_at(
    motion: &PoseMotion,
    phases: &PosePhases,
    angles: &[f64; NUM_KEYPOINTS],
) -> KeypointFrame {
    let mut frame = KeypointFrame::default();
    for i in 0..NUM_KEYPOINTS {
        let (m, ph, a) = (&motion[i], &phases[i], angles[i]);
        frame.coords[i] = [
            m.center[0] + m.amplitude * (a + ph.x).sin(),
            m.center[1] + m.amplitude * (a + ph.y).cos(),
        ];
        let theta = m.rotation_amplitude * (a + ph.rotation).sin();
        let sx = m.scale_base[0] + m.scale_amplitude * (a + ph.scale[0]).sin();
        let sy = m.scale_base[1] + m.scale_amplitude * (a + ph.scale[1]).sin();
        let (s, c) = theta.sin_cos();
        frame.jacobians[i] = [[c * sx, -s * sy], [s * sx, c * sy]];
    }
    frame
}

/// Frame `t` of a single-regime periodic motion.
pub fn periodic_frame(motion: &PoseMotion, phases: &PosePhases, t: usize) -> KeypointFrame {
    let angles = std::array::from_fn(|i| motion[i].omega * t as f64);
    frame_at(motion, phases, &angles)
}

fn check_common(num_frames: usize, fps: f64) -> Result<()> {
    if num_frames < MIN_FRAMES {
        return Err(Error::InvalidArgument(format!(
            "synthetic sequences need at least {MIN_FRAMES} frames, got {num_frames}"
        )));
    }
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
    }
    Ok(())
}

/// Periodic sequences of one motion: motion parameters and phases are drawn
/// once per dataset and each sequence starts at its own point of the orbit.
pub fn synth_periodic(
    seed: u64,
    num_sequences: usize,
    num_frames: usize,
    fps: f64,
    params: &SynthParams,
) -> Result<Vec<KeypointSequence>> {
    check_common(num_frames, fps)?;
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let motion: PoseMotion = std::array::from_fn(|_| KeypointMotion::sample(&mut rng, params));
    let phases: PosePhases = std::array::from_fn(|_| KeypointPhases::sample(&mut rng));
    (0..num_sequences)
        .map(|n| {
            let offset = rng.random_range(0..START_OFFSET_RANGE);
            let frames = (0..num_frames)
                .map(|t| periodic_frame(&motion, &phases, offset + t))
                .collect();
            KeypointSequence::new(frames, fps, format!("periodic-{seed}-{n:04}"))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingParams {
    pub num_regimes: usize,
    /// Probability of leaving the current regime at each frame transition.
    pub switch_prob: f64,
    /// Std of i.i.d. Gaussian noise added to every flattened entry.
    pub noise_std: f64,
    pub motion: SynthParams,
}

impl Default for SwitchingParams {
    fn default() -> Self {
        SwitchingParams {
            num_regimes: 3,
            switch_prob: 0.05,
            noise_std: 0.0,
            motion: SynthParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingDataset {
    pub sequences: Vec<KeypointSequence>,
    /// Active regime per frame, per sequence.
    pub regime_paths: Vec<Vec<usize>>,
    /// Motion parameters of each regime, shared by all sequences.
    pub regimes: Vec<PoseMotion>,
    /// Phase offsets shared by all sequences.
    pub phases: PosePhases,
    /// Frame of the first regime's orbit each sequence starts at.
    pub offsets: Vec<usize>,
}

impl SwitchingDataset {
    pub fn switch_count(&self, sequence: usize) -> usize {
        self.regime_paths[sequence]
            .windows(2)
            .filter(|w| w[0] != w[1])
            .count()
    }
}

/// Sequences driven by a hidden Markov chain over `num_regimes` motion
/// parameter sets. The accumulated angle of each keypoint is continuous
/// across switches; centers and amplitudes jump. With `switch_prob = 0` every
/// sequence is a periodic orbit of its initial regime.
pub fn synth_switching(
    seed: u64,
    num_sequences: usize,
    num_frames: usize,
    fps: f64,
    params: &SwitchingParams,
) -> Result<SwitchingDataset> {
    check_common(num_frames, fps)?;
    params.motion.validate()?;
    if params.num_regimes < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 regimes, got {}",
            params.num_regimes
        )));
    }
    if !(params.switch_prob >= 0.0 && params.switch_prob < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "switch probability {} must lie in [0, 1)",
            params.switch_prob
        )));
    }
    if !(params.noise_std.is_finite() && params.noise_std >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise std {} must be non-negative",
            params.noise_std
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let regimes: Vec<PoseMotion> = (0..params.num_regimes)
        .map(|_| std::array::from_fn(|_| KeypointMotion::sample(&mut rng, &params.motion)))
        .collect();
    let phases: PosePhases = std::array::from_fn(|_| KeypointPhases::sample(&mut rng));

    let mut sequences = Vec::with_capacity(num_sequences);
    let mut regime_paths = Vec::with_capacity(num_sequences);
    let mut offsets = Vec::with_capacity(num_sequences);
    for n in 0..num_sequences {
        let offset = rng.random_range(0..START_OFFSET_RANGE);
        let mut regime = rng.random_range(0..params.num_regimes);
        let mut segment_start = 0usize;
        let mut segment_angle: [f64; NUM_KEYPOINTS] =
            std::array::from_fn(|i| regimes[regime][i].omega * offset as f64);
        let mut path = Vec::with_capacity(num_frames);
        let mut frames = Vec::with_capacity(num_frames);

        for t in 0..num_frames {
            if t > 0 && rng.random::<f64>() < params.switch_prob {
                let elapsed = (t - segment_start) as f64;
                for (i, angle) in segment_angle.iter_mut().enumerate() {
                    *angle += regimes[regime][i].omega * elapsed;
                }
                segment_start = t;
                let hop = rng.random_range(1..params.num_regimes);
                regime = (regime + hop) % params.num_regimes;
            }
            let motion = &regimes[regime];
            let elapsed = (t - segment_start) as f64;
            let angles = std::array::from_fn(|i| segment_angle[i] + motion[i].omega * elapsed);
            let mut frame = frame_at(motion, &phases, &angles);
            if params.noise_std > 0.0 {
                let mut v = frame.flatten();
                for x in v.iter_mut() {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *x += params.noise_std * e;
                }
                frame = KeypointFrame::unflatten(&v);
            }
            path.push(regime);
            frames.push(frame);
        }
        sequences.push(KeypointSequence::new(
            frames,
            fps,
            format!("switching-{seed}-{n:04}"),
        )?);
        regime_paths.push(path);
        offsets.push(offset);
    }
    Ok(SwitchingDataset {
        sequences,
        regime_paths,
        regimes,
        phases,
        offsets,
    })
}
