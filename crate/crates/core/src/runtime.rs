//! Frame-based deployment with overlap-add.
//!
//! Every convolution stage keeps its own tail buffer. When the active
//! filter or the true listener position changes between frames, tails
//! produced under the old filter/position are still added to the next
//! frame.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filterdesign::{ControlFilterSet, DesignParams, ObservationIrs};
use crate::irdata::{IrSet, MicGroup, PositionId};
use crate::signal::convolve_add;

/// The `tau`-th non-overlapping frame of `signal`, zero-padded past the end.
pub fn frame_input(signal: &[f64], tau: usize, frame_len: usize) -> Vec<f64> {
    let mut frame = vec![0.0; frame_len];
    let start = tau.saturating_mul(frame_len);
    if start < signal.len() {
        let end = signal.len().min(start + frame_len);
        frame[..end - start].copy_from_slice(&signal[start..end]);
    }
    frame
}

/// Number of frames needed to cover `len` samples.
pub fn frame_count(len: usize, frame_len: usize) -> usize {
    len.div_ceil(frame_len)
}

/// Adds `tail` to the head of `full`, returns the first `n` samples and
/// stores the remainder as the new tail.
fn overlap_add(mut full: Vec<f64>, tail: &mut [f64], n: usize) -> Vec<f64> {
    for (f, t) in full.iter_mut().zip(tail.iter()) {
        *f += *t;
    }
    tail.copy_from_slice(&full[n..n + tail.len()]);
    full.truncate(n);
    full
}

/// `sum_l h_l * y_l` through one mic's IRs, overlap-added into `tail`.
fn mix_through<'a>(
    irs: impl Iterator<Item = &'a [f64]>,
    y: &[Vec<f64>],
    tail: &mut [f64],
    n: usize,
) -> Vec<f64> {
    let mut full = vec![0.0; n + tail.len()];
    for (h, y_l) in irs.zip(y) {
        convolve_add(h, y_l, &mut full);
    }
    overlap_add(full, tail, n)
}

/// True pressures at every physical microphone for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MicFrames {
    pub bright: Vec<Vec<f64>>,
    pub dark: Vec<Vec<f64>>,
    pub observation: Vec<Vec<f64>>,
}

impl MicFrames {
    pub fn group(&self, group: MicGroup) -> &[Vec<f64>] {
        match group {
            MicGroup::Bright => &self.bright,
            MicGroup::Dark => &self.dark,
            MicGroup::Observation => &self.observation,
        }
    }
}

/// Everything the engine produced for frame `tau`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameOutputs {
    pub tau: usize,
    /// `L x N` loudspeaker signals.
    pub loudspeakers: Vec<Vec<f64>>,
    pub mics: MicFrames,
    /// `S x M_O x N` estimated observation frames; empty when estimation
    /// was not requested.
    pub estimates: Vec<Vec<Vec<f64>>>,
    /// `M_B x N` desired bright-zone signals.
    pub desired: Vec<Vec<f64>>,
}

/// Overlap-add state for the whole chain: loudspeaker filters, true
/// propagation, per-dictionary-position observation estimates and the
/// desired-signal reference.
#[derive(Clone, Debug)]
pub struct FrameEngine {
    frame_len: usize,
    tau: usize,
    true_irs: Arc<IrSet>,
    observation: Option<ObservationIrs>,
    active: ControlFilterSet,
    l_ref: usize,
    delay: usize,
    filter_tails: Vec<Vec<f64>>,
    bright_tails: Vec<Vec<f64>>,
    dark_tails: Vec<Vec<f64>>,
    observation_tails: Vec<Vec<f64>>,
    /// `[position][mic]` tails of the estimated observation signals.
    estimate_tails: Vec<Vec<Vec<f64>>>,
    desired_tails: Vec<Vec<f64>>,
    /// Last `delay` input samples.
    delay_line: Vec<f64>,
}

impl FrameEngine {
    pub fn new(
        frame_len: usize,
        true_irs: Arc<IrSet>,
        observation: Option<ObservationIrs>,
        initial: ControlFilterSet,
        params: &DesignParams,
    ) -> Result<Self> {
        let k = true_irs.ir_length();
        let j = initial.filter_len();
        let l = true_irs.num_loudspeakers();
        if frame_len == 0 {
            return Err(Error::invalid("frame length N must be at least 1"));
        }
        if k > frame_len + 1 {
            return Err(Error::invalid(format!(
                "IR length K = {k} exceeds N + 1 = {}",
                frame_len + 1
            )));
        }
        if j > frame_len + 1 {
            return Err(Error::invalid(format!(
                "filter length J = {j} exceeds N + 1 = {}",
                frame_len + 1
            )));
        }
        if initial.num_loudspeakers() != l {
            return Err(Error::invalid("filter set and IR set disagree on L"));
        }
        if params.l_ref >= l || params.delay > frame_len {
            return Err(Error::invalid("reference loudspeaker or delay out of range"));
        }
        if let Some(obs) = &observation {
            if obs.ir_length() != k
                || obs.num_loudspeakers() != l
                || obs.num_mics() != true_irs.mic_count(MicGroup::Observation)
            {
                return Err(Error::invalid("dictionary IRs disagree with the true IR set"));
            }
        }
        let tails = |count: usize, len: usize| vec![vec![0.0; len]; count];
        let estimate_tails = match &observation {
            Some(obs) => vec![tails(obs.num_mics(), k - 1); obs.num_positions()],
            None => Vec::new(),
        };
        Ok(FrameEngine {
            frame_len,
            tau: 0,
            filter_tails: tails(l, j - 1),
            bright_tails: tails(true_irs.mic_count(MicGroup::Bright), k - 1),
            dark_tails: tails(true_irs.mic_count(MicGroup::Dark), k - 1),
            observation_tails: tails(true_irs.mic_count(MicGroup::Observation), k - 1),
            desired_tails: tails(true_irs.mic_count(MicGroup::Bright), k - 1),
            estimate_tails,
            delay_line: vec![0.0; params.delay],
            l_ref: params.l_ref,
            delay: params.delay,
            true_irs,
            observation,
            active: initial,
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    /// Index of the next frame to be processed.
    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn active_filters(&self) -> &ControlFilterSet {
        &self.active
    }

    pub fn observation(&self) -> Option<&ObservationIrs> {
        self.observation.as_ref()
    }

    /// Replaces the active filters from the next `apply_filters` call on;
    /// the existing filter tails are kept.
    pub fn set_filters(&mut self, filters: ControlFilterSet) -> Result<()> {
        if filters.num_loudspeakers() != self.active.num_loudspeakers()
            || filters.filter_len() != self.active.filter_len()
        {
            return Err(Error::invalid("replacement filters change (L, J)"));
        }
        self.active = filters;
        Ok(())
    }

    /// `y_l[tau]` for every loudspeaker.
    pub fn apply_filters(&mut self, x: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(x.len(), self.frame_len);
        let n = self.frame_len;
        let active = &self.active;
        self.filter_tails
            .iter_mut()
            .enumerate()
            .map(|(l, tail)| {
                let mut full = vec![0.0; n + tail.len()];
                convolve_add(active.filter(l), x, &mut full);
                overlap_add(full, tail, n)
            })
            .collect()
    }

    /// Pressures at the physical mics of `true_position`.
    pub fn propagate_true(&mut self, y: &[Vec<f64>], true_position: PositionId) -> Result<MicFrames> {
        self.true_irs.check_position(true_position)?;
        let n = self.frame_len;
        let set = &self.true_irs;
        let l_count = set.num_loudspeakers();
        let run = |group: MicGroup, tails: &mut Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            tails
                .iter_mut()
                .enumerate()
                .map(|(m, tail)| {
                    let irs = (0..l_count).map(|l| set.ir(true_position, group, m, l));
                    mix_through(irs, y, tail, n)
                })
                .collect()
        };
        Ok(MicFrames {
            bright: run(MicGroup::Bright, &mut self.bright_tails),
            dark: run(MicGroup::Dark, &mut self.dark_tails),
            observation: run(MicGroup::Observation, &mut self.observation_tails),
        })
    }

    /// `z^(s)_{m_o}[tau]` for every dictionary position, each with its own tails.
    pub fn estimate_observations(&mut self, y: &[Vec<f64>]) -> Result<Vec<Vec<Vec<f64>>>> {
        let obs = self
            .observation
            .as_ref()
            .ok_or_else(|| Error::invalid("engine was built without dictionary IRs"))?;
        let n = self.frame_len;
        let l_count = obs.num_loudspeakers();
        Ok(self
            .estimate_tails
            .par_iter_mut()
            .enumerate()
            .map(|(s, mics)| {
                mics.iter_mut()
                    .enumerate()
                    .map(|(m, tail)| {
                        let irs = (0..l_count).map(|l| obs.ir(PositionId(s), m, l));
                        mix_through(irs, y, tail, n)
                    })
                    .collect()
            })
            .collect())
    }

    /// What the reference loudspeaker alone would produce at the bright
    /// mics of `true_position`, delayed by the modeling delay.
    pub fn desired_frames(&mut self, x: &[f64], true_position: PositionId) -> Result<Vec<Vec<f64>>> {
        assert_eq!(x.len(), self.frame_len);
        self.true_irs.check_position(true_position)?;
        let n = self.frame_len;
        let mut delayed = Vec::with_capacity(n);
        delayed.extend_from_slice(&self.delay_line);
        delayed.extend_from_slice(&x[..n - self.delay]);
        self.delay_line.copy_from_slice(&x[n - self.delay..]);
        let set = &self.true_irs;
        let l_ref = self.l_ref;
        Ok(self
            .desired_tails
            .iter_mut()
            .enumerate()
            .map(|(m, tail)| {
                let h = set.ir(true_position, MicGroup::Bright, m, l_ref);
                mix_through(std::iter::once(h), std::slice::from_ref(&delayed), tail, n)
            })
            .collect())
    }

    /// Runs one full frame and advances `tau`.
    pub fn process_frame(
        &mut self,
        x: &[f64],
        true_position: PositionId,
        estimate: bool,
    ) -> Result<FrameOutputs> {
        let tau = self.tau;
        let loudspeakers = self.apply_filters(x);
        let mics = self.propagate_true(&loudspeakers, true_position)?;
        let estimates = if estimate {
            self.estimate_observations(&loudspeakers)?
        } else {
            Vec::new()
        };
        let desired = self.desired_frames(x, true_position)?;
        self.tau += 1;
        Ok(FrameOutputs {
            tau,
            loudspeakers,
            mics,
            estimates,
            desired,
        })
    }

    pub fn estimate_tail(&self, pos: PositionId, mic: usize) -> &[f64] {
        &self.estimate_tails[pos.0][mic]
    }

    pub fn estimate_tail_mut(&mut self, pos: PositionId, mic: usize) -> &mut [f64] {
        &mut self.estimate_tails[pos.0][mic]
    }

    pub fn filter_tail(&self, l: usize) -> &[f64] {
        &self.filter_tails[l]
    }
}
