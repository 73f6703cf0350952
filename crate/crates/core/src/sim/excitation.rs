//! Open-loop actuation sequences for identification and model verification.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::ActuationAngles;
use crate::error::{HsaError, Result};

/// Generalized binary-noise style excitation: a piecewise-constant signal
/// that switches with probability dt / settling_time at each step and, on a
/// switch, resamples each component uniformly on [0, phi_max]. The settling
/// time is the mean holding time of the switching process.
pub fn gbn_sequence(
    settling_time: f64,
    phi_max: f64,
    duration: f64,
    dt: f64,
    seed: u64,
) -> Result<Vec<ActuationAngles>> {
    if !(settling_time > 0.0 && duration > 0.0 && dt > 0.0) {
        return Err(HsaError::InvalidArgument(
            "settling_time, duration, and dt must be > 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (duration / dt).round() as usize;
    let p_switch = (dt / settling_time).min(1.0);
    let mut level = ActuationAngles::new(rng.gen_range(0.0..=phi_max), rng.gen_range(0.0..=phi_max));
    let mut seq = Vec::with_capacity(n);
    for _ in 0..n {
        if rng.gen::<f64>() < p_switch {
            level = ActuationAngles::new(rng.gen_range(0.0..=phi_max), rng.gen_range(0.0..=phi_max));
        }
        seq.push(level);
    }
    Ok(seq)
}

/// Deterministic piecewise-constant signal stepping through `levels`, holding
/// each for `hold_time` seconds at step `dt`.
pub fn step_staircase_sequence(
    levels: &[ActuationAngles],
    hold_time: f64,
    dt: f64,
) -> Result<Vec<ActuationAngles>> {
    if levels.is_empty() {
        return Err(HsaError::InvalidArgument("levels must be non-empty".into()));
    }
    if !(hold_time > 0.0 && dt > 0.0) {
        return Err(HsaError::InvalidArgument("hold_time and dt must be > 0".into()));
    }
    let per_level = (hold_time / dt).round() as usize;
    let mut seq = Vec::with_capacity(per_level * levels.len());
    for level in levels {
        for _ in 0..per_level {
            seq.push(*level);
        }
    }
    Ok(seq)
}
