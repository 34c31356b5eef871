//! Deterministic synthetic test sources standing in for speech
//! utterances: harmonic tone complexes with drifting F0, amplitude-
//! modulated filtered noise, and frequency sweeps. Every generator is a
//! pure function of `(kind, duration, seed)` and normalizes to RMS 0.1.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{SignalBuffer, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};

/// Families of synthetic sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// Sum of harmonics over a slowly drifting fundamental.
    Harmonic,
    /// Lowpassed Gaussian noise under a slow amplitude envelope.
    AmNoise,
    /// Repeating frequency sweep.
    Chirp,
}

impl SourceKind {
    pub const ALL: [SourceKind; 3] = [SourceKind::Harmonic, SourceKind::AmNoise, SourceKind::Chirp];

    pub fn name(&self) -> &'static str {
        match self {
            SourceKind::Harmonic => "harmonic",
            SourceKind::AmNoise => "am_noise",
            SourceKind::Chirp => "chirp",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "harmonic" => Ok(SourceKind::Harmonic),
            "am_noise" => Ok(SourceKind::AmNoise),
            "chirp" => Ok(SourceKind::Chirp),
            other => Err(Error::InvalidArgument(format!("unknown source kind '{other}'"))),
        }
    }
}

const TARGET_RMS: f64 = 0.1;

/// Renders `duration_s` seconds at the working sample rate,
/// deterministically for a fixed `(kind, duration_s, seed)` triple.
pub fn synth_source(kind: SourceKind, duration_s: f64, seed: u64) -> Result<SignalBuffer> {
    if !(duration_s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    let rate = DEFAULT_SAMPLE_RATE;
    let n = ((duration_s * rate as f64).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut samples = match kind {
        SourceKind::Harmonic => harmonic(n, rate, &mut rng),
        SourceKind::AmNoise => am_noise(n, &mut rng),
        SourceKind::Chirp => chirp(n, rate, &mut rng),
    };

    let rms = (samples.iter().map(|s| s * s).sum::<f64>() / n as f64).sqrt();
    if rms <= 0.0 {
        return Err(Error::Numeric("synthesized source has zero energy".into()));
    }
    let gain = TARGET_RMS / rms;
    for s in samples.iter_mut() {
        *s *= gain;
    }
    SignalBuffer::new(samples, rate)
}

fn harmonic(n: usize, rate: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let f0 = rng.gen_range(90.0..240.0);
    let drift_rate = rng.gen_range(0.5..3.0);
    let drift_phase = rng.gen_range(0.0..2.0 * PI);
    let drift_depth = rng.gen_range(0.01..0.04);
    let num_harmonics = 8;
    let phases: Vec<f64> = (0..num_harmonics).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();

    let dt = 1.0 / rate as f64;
    let mut theta = 0.0; // integral of the instantaneous fundamental
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        let inst_f0 = f0 * (1.0 + drift_depth * (2.0 * PI * drift_rate * t + drift_phase).sin());
        theta += 2.0 * PI * inst_f0 * dt;
        let mut s = 0.0;
        for (k, phase) in phases.iter().enumerate() {
            let h = (k + 1) as f64;
            s += (theta * h + phase).sin() / h;
        }
        out.push(s);
    }
    out
}

fn am_noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let alpha = rng.gen_range(0.6..0.95);
    let mod_rate = rng.gen_range(1.5..6.0);
    let mod_phase = rng.gen_range(0.0..2.0 * PI);
    let dt = 1.0 / DEFAULT_SAMPLE_RATE as f64;

    let mut state = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let white: f64 = StandardNormal.sample(rng);
        state = alpha * state + (1.0 - alpha) * white;
        let env = 0.55 + 0.45 * (2.0 * PI * mod_rate * i as f64 * dt + mod_phase).sin();
        out.push(state * env);
    }
    out
}

fn chirp(n: usize, rate: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let f_lo = rng.gen_range(200.0..800.0);
    let f_hi = rng.gen_range(1000.0..3000.0);
    let sweep_s = rng.gen_range(0.25..0.8);
    let phase0 = rng.gen_range(0.0..2.0 * PI);

    let dt = 1.0 / rate as f64;
    let mut theta = phase0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        // triangle sweep between f_lo and f_hi
        let frac = (t / sweep_s).fract();
        let tri = if frac < 0.5 { 2.0 * frac } else { 2.0 * (1.0 - frac) };
        let inst_f = f_lo + (f_hi - f_lo) * tri;
        theta += 2.0 * PI * inst_f * dt;
        out.push(theta.sin());
    }
    out
}
