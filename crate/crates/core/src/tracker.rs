//! Audio-only position tracking by normalized cosine similarity between
//! observed and estimated observation-mic frames.

use serde::Serialize;

use crate::error::Result;
use crate::filterdesign::FilterDictionary;
use crate::irdata::PositionId;
use crate::runtime::FrameEngine;
use crate::signal::dot;

/// Default silence threshold for a length-`n` frame.
pub fn default_silence_threshold(frame_len: usize) -> f64 {
    1e-9 * (frame_len as f64).sqrt()
}

/// Cosine of the angle between two frames; 0 when either norm is below `eps`.
pub fn ncs(p: &[f64], z: &[f64], eps: f64) -> f64 {
    assert_eq!(p.len(), z.len());
    let np = dot(p, p).sqrt();
    let nz = dot(z, z).sqrt();
    if np < eps || nz < eps {
        return 0.0;
    }
    (dot(p, z) / (np * nz)).clamp(-1.0, 1.0)
}

/// `c^(s) = sum_m ncs(p_m, z^(s)_m)` for every dictionary position.
pub fn total_similarity(observed: &[Vec<f64>], estimates: &[Vec<Vec<f64>>], eps: f64) -> Vec<f64> {
    estimates
        .iter()
        .map(|per_mic| {
            assert_eq!(per_mic.len(), observed.len());
            observed
                .iter()
                .zip(per_mic)
                .map(|(p, z)| ncs(p, z, eps))
                .sum()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrackerDecision {
    pub tau: usize,
    pub similarity: Vec<f64>,
    pub selected: PositionId,
    /// Set when every similarity was zero and the previous choice was kept.
    pub held_previous: bool,
}

/// Argmax of `similarity`, ties going to `previous` and then to the lowest
/// index. An all-zero vector (silence) holds `previous`.
pub fn select_position(tau: usize, similarity: Vec<f64>, previous: Option<PositionId>) -> TrackerDecision {
    assert!(!similarity.is_empty(), "similarity vector is empty");
    if similarity.iter().all(|&c| c == 0.0) {
        return TrackerDecision {
            tau,
            selected: previous.unwrap_or(PositionId(0)),
            similarity,
            held_previous: true,
        };
    }
    let max = similarity.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let selected = match previous {
        Some(p) if similarity.get(p.0) == Some(&max) => p,
        _ => PositionId(similarity.iter().position(|&c| c == max).unwrap()),
    };
    TrackerDecision {
        tau,
        similarity,
        selected,
        held_previous: false,
    }
}

/// Activates `dict[decision.selected]` for the next frame. A held decision
/// leaves the active filters untouched.
pub fn update_filters(
    decision: &TrackerDecision,
    dict: &FilterDictionary,
    engine: &mut FrameEngine,
) -> Result<()> {
    let entry = dict.get(decision.selected)?;
    if decision.held_previous {
        return Ok(());
    }
    if engine.active_filters() != entry {
        engine.set_filters(entry.clone())?;
    }
    Ok(())
}

/// Per-frame tracking state: the last selection and the silence threshold.
#[derive(Clone, Debug)]
pub struct Tracker {
    eps: f64,
    previous: Option<PositionId>,
}

impl Tracker {
    pub fn new(eps: f64) -> Self {
        Tracker { eps, previous: None }
    }

    pub fn previous(&self) -> Option<PositionId> {
        self.previous
    }

    pub fn decide(&mut self, tau: usize, observed: &[Vec<f64>], estimates: &[Vec<Vec<f64>>]) -> TrackerDecision {
        let c = total_similarity(observed, estimates, self.eps);
        let d = select_position(tau, c, self.previous);
        if !d.held_previous {
            self.previous = Some(d.selected);
        }
        d
    }
}
