//! Experiment orchestration: the four filter schemes, the full-grid
//! trajectory experiment (Case I), the subset-dictionary Monte-Carlo
//! experiment (Case II) and the CSV/JSON report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filterdesign::{build_dictionaries, ControlFilterSet, DesignBank, DesignParams, Method};
use crate::irdata::{IrSet, PositionId};
use crate::metrics::{MetricsRecorder, MetricsSeries};
use crate::runtime::{frame_input, FrameEngine};
use crate::signal::{exp_sweep, read_f64_le, white_noise, write_f64_le};
use crate::tracker::{default_silence_threshold, update_filters, Tracker, TrackerDecision};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Proposed,
    Mix,
    StartPos,
    Optimal,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Proposed, Scheme::Mix, Scheme::StartPos, Scheme::Optimal];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Mix => "mix",
            Scheme::StartPos => "start_pos",
            Scheme::Optimal => "optimal",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown scheme {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    #[serde(rename = "i")]
    FullGrid,
    #[serde(rename = "ii")]
    Subset,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub position: PositionId,
    pub frames: usize,
}

/// Piecewise-constant listener trajectory; positions index the true IR set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub segments: Vec<Segment>,
}

impl TrajectorySpec {
    /// `positions` held for equal shares of `total_frames`; the last
    /// segment absorbs any remainder.
    pub fn equal_intervals(positions: &[PositionId], total_frames: usize) -> Result<Self> {
        if positions.is_empty() || total_frames < positions.len() {
            return Err(Error::invalid("trajectory needs at least one frame per segment"));
        }
        let base = total_frames / positions.len();
        let mut segments: Vec<Segment> = positions
            .iter()
            .map(|&position| Segment { position, frames: base })
            .collect();
        segments.last_mut().unwrap().frames += total_frames - base * positions.len();
        Ok(TrajectorySpec { segments })
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn validate(&self, num_positions: usize) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::invalid("trajectory has no segments"));
        }
        for s in &self.segments {
            if s.frames == 0 {
                return Err(Error::invalid("trajectory segment durations must be >= 1"));
            }
            if s.position.0 >= num_positions {
                return Err(Error::invalid(format!(
                    "trajectory position {} not in the true IR set",
                    s.position.0
                )));
            }
        }
        Ok(())
    }

    pub fn total_frames(&self) -> usize {
        self.segments.iter().map(|s| s.frames).sum()
    }

    /// Per-frame true position.
    pub fn expand(&self) -> Vec<PositionId> {
        self.segments
            .iter()
            .flat_map(|s| std::iter::repeat_n(s.position, s.frames))
            .collect()
    }

    /// `(first frame, position)` of each segment.
    pub fn segment_starts(&self) -> Vec<(usize, PositionId)> {
        let mut t = 0;
        self.segments
            .iter()
            .map(|s| {
                let start = t;
                t += s.frames;
                (start, s.position)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InputSource {
    Noise,
    Sweep,
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: Method,
    pub params: DesignParams,
    /// Frame length N in samples.
    pub frame_len: usize,
    /// Frames per run (T).
    pub total_frames: usize,
    pub input: InputSource,
    pub input_seed: u64,
    /// Dictionary positions as ids of the true set; `None` uses the full grid.
    pub dictionary_positions: Option<Vec<PositionId>>,
    pub mc_iterations: usize,
    pub mc_seed: u64,
    /// Segments per Monte-Carlo trajectory (start + changes).
    pub mc_segments: usize,
    /// NCS silence threshold; `None` means `1e-9 * sqrt(N)`.
    pub silence_threshold: Option<f64>,
}

impl ExperimentConfig {
    /// Desk-scale defaults: N = 256, T = 40 frames, 50 Monte-Carlo iterations.
    pub fn desk(method: Method) -> Self {
        ExperimentConfig {
            method,
            params: DesignParams::desk(),
            frame_len: 256,
            total_frames: 40,
            input: InputSource::Noise,
            input_seed: 1,
            dictionary_positions: None,
            mc_iterations: 50,
            mc_seed: 2024,
            mc_segments: 4,
            silence_threshold: None,
        }
    }

    /// N = 9600 (200 ms at 48 kHz), J = 1000.
    pub fn full_scale(method: Method) -> Self {
        ExperimentConfig {
            params: DesignParams::full_scale(),
            frame_len: 9600,
            total_frames: 60,
            ..ExperimentConfig::desk(method)
        }
    }

    pub fn silence_threshold(&self) -> f64 {
        self.silence_threshold
            .unwrap_or_else(|| default_silence_threshold(self.frame_len))
    }

    pub fn validate(&self, true_irs: &IrSet) -> Result<()> {
        self.params.validate(true_irs.num_loudspeakers())?;
        if true_irs.ir_length() > self.frame_len + 1 {
            return Err(Error::invalid(format!(
                "IR length K = {} exceeds N + 1 = {}",
                true_irs.ir_length(),
                self.frame_len + 1
            )));
        }
        if self.total_frames == 0 {
            return Err(Error::invalid("total_frames must be positive"));
        }
        Ok(())
    }
}

/// Case-I trajectory on the 3 x 3 desk grid: start next to the front edge,
/// then centre, far corner and the left column.
pub fn desk_case_i_trajectory(total_frames: usize) -> Result<TrajectorySpec> {
    TrajectorySpec::equal_intervals(
        &[PositionId(1), PositionId(4), PositionId(8), PositionId(3)],
        total_frames,
    )
}

/// Corners and centre of the 3 x 3 desk grid.
pub fn desk_subset() -> Vec<PositionId> {
    [0, 2, 4, 6, 8].map(PositionId).to_vec()
}

/// The input signal of a run, `total_frames * frame_len` samples long.
pub fn make_input(config: &ExperimentConfig, sample_rate_hz: u32) -> Result<Vec<f64>> {
    let len = config.total_frames * config.frame_len;
    let fs = sample_rate_hz as f64;
    Ok(match &config.input {
        InputSource::Noise => white_noise(len, config.input_seed),
        InputSource::Sweep => exp_sweep(len, fs, 50.0, 0.45 * fs),
        InputSource::File { path } => {
            let mut x = read_f64_le(path)?;
            if let Some(i) = x.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("input sample {i} is not finite")));
            }
            x.resize(len, 0.0);
            x
        }
    })
}

/// FNV-1a over the input samples and per-frame positions; used to assert
/// that all schemes of a run saw the same data.
pub fn input_digest(input: &[f64], positions: &[PositionId]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    for x in input {
        eat(&x.to_le_bytes());
    }
    for p in positions {
        eat(&(p.0 as u64).to_le_bytes());
    }
    h
}

/// Designs shared by every run of one experiment.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub true_irs: Arc<IrSet>,
    /// Per-position optimal filters over the whole true grid.
    pub full: DesignBank,
    /// Dictionary, mix filter and observation IRs over the dictionary positions.
    pub dict: DesignBank,
    /// True-set id of each dictionary entry.
    pub dict_ids: Vec<PositionId>,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig, true_irs: Arc<IrSet>) -> Result<Self> {
        config.validate(&true_irs)?;
        let full = build_dictionaries(&true_irs, config.method, &config.params)?;
        let (dict, dict_ids) = match &config.dictionary_positions {
            None => (full.clone(), true_irs.positions().collect()),
            Some(ids) => {
                let sub = Arc::new(true_irs.subset_positions(ids)?);
                (build_dictionaries(&sub, config.method, &config.params)?, ids.clone())
            }
        };
        Ok(Experiment {
            config,
            true_irs,
            full,
            dict,
            dict_ids,
        })
    }

    /// Dictionary index of a true-set position, if it is in the dictionary.
    pub fn dictionary_index(&self, pos: PositionId) -> Option<PositionId> {
        self.dict_ids.iter().position(|&p| p == pos).map(PositionId)
    }

    fn optimal_filter(&self, pos: PositionId) -> Result<&ControlFilterSet> {
        self.full.dictionary.get(pos)
    }
}

/// Which filter set was active in a frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ActiveFilter {
    Mix,
    /// Optimal filter of a true-set position.
    Position(PositionId),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LockEvent {
    pub iteration: usize,
    pub change_frame: usize,
    /// True-set id of the new position.
    pub position: PositionId,
    /// Frames from the change until the tracker first selected the new
    /// position; `None` if it never did within the segment.
    pub latency: Option<usize>,
}

/// Full-length signals of one scheme run, kept for frame dumps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecordedSignals {
    pub loudspeakers: Vec<Vec<f64>>,
    pub bright: Vec<Vec<f64>>,
    pub dark: Vec<Vec<f64>>,
    pub observation: Vec<Vec<f64>>,
    pub desired: Vec<Vec<f64>>,
}

fn append_frames(dst: &mut Vec<Vec<f64>>, frames: &[Vec<f64>]) {
    if dst.is_empty() {
        dst.resize(frames.len(), Vec::new());
    }
    for (d, f) in dst.iter_mut().zip(frames) {
        d.extend_from_slice(f);
    }
}

#[derive(Clone, Debug)]
pub struct SchemeRun {
    pub scheme: Scheme,
    pub metrics: MetricsSeries,
    /// Tracker decisions (proposed scheme only), one per frame.
    pub trace: Vec<TrackerDecision>,
    pub active: Vec<ActiveFilter>,
    pub locks: Vec<LockEvent>,
    pub digest: u64,
    pub signals: Option<RecordedSignals>,
}

/// Runs one scheme over a trajectory with a given input signal.
pub fn run_scheme(
    exp: &Experiment,
    scheme: Scheme,
    trajectory: &TrajectorySpec,
    input: &[f64],
    keep_signals: bool,
) -> Result<SchemeRun> {
    trajectory.validate(exp.true_irs.num_positions())?;
    let n = exp.config.frame_len;
    let positions = trajectory.expand();
    let start = positions[0];
    let initial = match scheme {
        Scheme::Proposed | Scheme::Mix => exp.dict.mix.clone(),
        Scheme::StartPos | Scheme::Optimal => exp.optimal_filter(start)?.clone(),
    };
    let observation = (scheme == Scheme::Proposed).then(|| exp.dict.observation.clone());
    let mut engine = FrameEngine::new(n, Arc::clone(&exp.true_irs), observation, initial, &exp.config.params)?;
    let mut tracker = Tracker::new(exp.config.silence_threshold());
    let mut recorder = MetricsRecorder::default();
    let mut trace = Vec::new();
    let mut active = Vec::with_capacity(positions.len());
    let mut current = match scheme {
        Scheme::Proposed | Scheme::Mix => ActiveFilter::Mix,
        _ => ActiveFilter::Position(start),
    };
    let mut signals = keep_signals.then(RecordedSignals::default);

    for (tau, &pos) in positions.iter().enumerate() {
        if scheme == Scheme::Optimal && current != ActiveFilter::Position(pos) {
            engine.set_filters(exp.optimal_filter(pos)?.clone())?;
            current = ActiveFilter::Position(pos);
        }
        active.push(current);
        let x = frame_input(input, tau, n);
        let out = engine.process_frame(&x, pos, scheme == Scheme::Proposed)?;
        recorder.push_frame(&out.mics.bright, &out.mics.dark, &out.desired);
        if let Some(sig) = signals.as_mut() {
            append_frames(&mut sig.loudspeakers, &out.loudspeakers);
            append_frames(&mut sig.bright, &out.mics.bright);
            append_frames(&mut sig.dark, &out.mics.dark);
            append_frames(&mut sig.observation, &out.mics.observation);
            append_frames(&mut sig.desired, &out.desired);
        }
        if scheme == Scheme::Proposed {
            let decision = tracker.decide(tau, &out.mics.observation, &out.estimates);
            update_filters(&decision, &exp.dict.dictionary, &mut engine)?;
            if !decision.held_previous {
                current = ActiveFilter::Position(exp.dict_ids[decision.selected.0]);
            }
            trace.push(decision);
        }
    }

    let locks = if scheme == Scheme::Proposed {
        lock_events(exp, trajectory, &trace, 0)
    } else {
        Vec::new()
    };
    Ok(SchemeRun {
        scheme,
        metrics: recorder.finish(exp.true_irs.sample_rate_hz() as f64),
        trace,
        active,
        locks,
        digest: input_digest(input, &positions),
        signals,
    })
}

/// Lock latency of every segment whose position is in the dictionary.
fn lock_events(
    exp: &Experiment,
    trajectory: &TrajectorySpec,
    trace: &[TrackerDecision],
    iteration: usize,
) -> Vec<LockEvent> {
    let total = trajectory.total_frames();
    let starts = trajectory.segment_starts();
    starts
        .iter()
        .enumerate()
        .filter_map(|(i, &(start, pos))| {
            let target = exp.dictionary_index(pos)?;
            let end = starts.get(i + 1).map_or(total, |s| s.0);
            let latency = (start..end)
                .find(|&t| trace[t].selected == target && !trace[t].held_previous)
                .map(|t| t - start);
            Some(LockEvent {
                iteration,
                change_frame: start,
                position: pos,
                latency,
            })
        })
        .collect()
}

/// One scheme's outcome within a `RunResult`. For Monte-Carlo runs the
/// metrics are elementwise means (in dB) over iterations.
#[derive(Clone, Debug)]
pub struct SchemeResult {
    pub scheme: Scheme,
    pub metrics: MetricsSeries,
    /// `(iteration, decision)` for the proposed scheme.
    pub trace: Vec<(usize, TrackerDecision)>,
    pub locks: Vec<LockEvent>,
    pub signals: Option<RecordedSignals>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub case: Case,
    pub config: ExperimentConfig,
    pub trajectories: Vec<TrajectorySpec>,
    pub schemes: Vec<SchemeResult>,
    /// Per-iteration input digest shared by all schemes.
    pub digests: Vec<u64>,
}

impl RunResult {
    pub fn scheme(&self, scheme: Scheme) -> Option<&SchemeResult> {
        self.schemes.iter().find(|s| s.scheme == scheme)
    }
}

fn run_all_schemes(
    exp: &Experiment,
    schemes: &[Scheme],
    trajectory: &TrajectorySpec,
    input: &[f64],
    keep_signals: bool,
) -> Result<(Vec<SchemeRun>, u64)> {
    let runs = schemes
        .par_iter()
        .map(|&s| run_scheme(exp, s, trajectory, input, keep_signals))
        .collect::<Result<Vec<_>>>()?;
    let digest = runs.first().map_or(0, |r| r.digest);
    if runs.iter().any(|r| r.digest != digest) {
        return Err(Error::Numerical("schemes consumed different inputs".into()));
    }
    Ok((runs, digest))
}

/// Full-grid dictionary, fixed trajectory, every requested scheme on the
/// same input.
pub fn run_case_i(
    exp: &Experiment,
    trajectory: &TrajectorySpec,
    schemes: &[Scheme],
    keep_signals: bool,
) -> Result<RunResult> {
    let input = make_input(&exp.config, exp.true_irs.sample_rate_hz())?;
    let (runs, digest) = run_all_schemes(exp, schemes, trajectory, &input, keep_signals)?;
    Ok(RunResult {
        case: Case::FullGrid,
        config: exp.config.clone(),
        trajectories: vec![trajectory.clone()],
        schemes: runs
            .into_iter()
            .map(|r| SchemeResult {
                scheme: r.scheme,
                metrics: r.metrics,
                trace: r.trace.into_iter().map(|d| (0, d)).collect(),
                locks: r.locks,
                signals: r.signals,
            })
            .collect(),
        digests: vec![digest],
    })
}

/// Random trajectory for Monte-Carlo iteration `iteration`: distinct
/// positions drawn uniformly from the whole grid.
pub fn sample_trajectory(config: &ExperimentConfig, num_positions: usize, iteration: usize) -> Result<TrajectorySpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.mc_seed);
    rng.set_stream(iteration as u64);
    let segments = config.mc_segments.max(1);
    let mut ids: Vec<PositionId> = (0..num_positions).map(PositionId).collect();
    let picked: Vec<PositionId> = if segments <= num_positions {
        ids.partial_shuffle(&mut rng, segments).0.to_vec()
    } else {
        // Fewer positions than segments: only consecutive entries must differ.
        let mut out: Vec<PositionId> = Vec::with_capacity(segments);
        while out.len() < segments {
            ids.shuffle(&mut rng);
            for &p in &ids {
                if out.len() < segments && out.last() != Some(&p) {
                    out.push(p);
                }
            }
        }
        out
    };
    TrajectorySpec::equal_intervals(&picked, config.total_frames)
}

fn mean_series(series: &[&MetricsSeries]) -> MetricsSeries {
    let n = series.len() as f64;
    let avg = |pick: fn(&MetricsSeries) -> &Vec<f64>| -> Vec<f64> {
        let len = pick(series[0]).len();
        (0..len)
            .map(|i| series.iter().map(|s| pick(s)[i]).sum::<f64>() / n)
            .collect()
    };
    MetricsSeries {
        td_ac: avg(|s| &s.td_ac),
        td_nsdp: avg(|s| &s.td_nsdp),
        freqs_hz: series[0].freqs_hz.clone(),
        fd_ac: avg(|s| &s.fd_ac),
        fd_nsdp: avg(|s| &s.fd_nsdp),
    }
}

/// Subset dictionary, Monte-Carlo over random trajectories on the full grid.
/// Iterations run in parallel; aggregation is ordered by iteration.
pub fn run_case_ii(exp: &Experiment, schemes: &[Scheme]) -> Result<RunResult> {
    let iterations = exp.config.mc_iterations;
    if iterations == 0 {
        return Err(Error::invalid("Monte-Carlo iteration count must be positive"));
    }
    let input = make_input(&exp.config, exp.true_irs.sample_rate_hz())?;
    let s = exp.true_irs.num_positions();
    let per_iter = (0..iterations)
        .into_par_iter()
        .map(|i| {
            let traj = sample_trajectory(&exp.config, s, i)?;
            let (runs, digest) = run_all_schemes(exp, schemes, &traj, &input, false)?;
            Ok((traj, runs, digest))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut trajectories = Vec::with_capacity(iterations);
    let mut digests = Vec::with_capacity(iterations);
    let mut by_scheme: Vec<Vec<SchemeRun>> = vec![Vec::new(); schemes.len()];
    for (traj, runs, digest) in per_iter {
        trajectories.push(traj);
        digests.push(digest);
        for (slot, run) in by_scheme.iter_mut().zip(runs) {
            slot.push(run);
        }
    }
    let schemes = by_scheme
        .into_iter()
        .zip(schemes)
        .map(|(runs, &scheme)| {
            let metrics = mean_series(&runs.iter().map(|r| &r.metrics).collect::<Vec<_>>());
            let mut trace = Vec::new();
            let mut locks = Vec::new();
            for (i, r) in runs.into_iter().enumerate() {
                if scheme == Scheme::Proposed {
                    locks.extend(lock_events(exp, &trajectories[i], &r.trace, i));
                }
                trace.extend(r.trace.into_iter().map(|d| (i, d)));
            }
            SchemeResult {
                scheme,
                metrics,
                trace,
                locks,
                signals: None,
            }
        })
        .collect();
    Ok(RunResult {
        case: Case::Subset,
        config: exp.config.clone(),
        trajectories,
        schemes,
        digests,
    })
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 0 {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    }
}

#[derive(Debug, Serialize)]
struct Stat {
    mean: f64,
    median: f64,
}

impl Stat {
    fn of(v: &[f64]) -> Self {
        Stat {
            mean: mean(v),
            median: median(v),
        }
    }
}

#[derive(Debug, Serialize)]
struct SchemeSummary<'a> {
    scheme: Scheme,
    td_ac_db: Stat,
    td_nsdp_db: Stat,
    fd_ac_db: Stat,
    fd_nsdp_db: Stat,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    lock_latencies: &'a [LockEvent],
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    case: Case,
    method: Method,
    seeds: Seeds,
    config: &'a ExperimentConfig,
    input_digests: Vec<String>,
    trajectories: &'a [TrajectorySpec],
    schemes: Vec<SchemeSummary<'a>>,
}

#[derive(Debug, Serialize)]
struct Seeds {
    input_seed: u64,
    mc_seed: u64,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    runs: Vec<RunSummary<'a>>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `td_metrics.csv`, `fd_metrics.csv`, `summary.json` and, when any
/// run tracked positions, `tracker_trace.csv`.
pub fn emit_report(results: &[RunResult], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut td = String::from("tau,td_ac_db,td_nsdp_db,scheme,method\n");
    let mut fd = String::from("freq_hz,fd_ac_db,fd_nsdp_db,scheme,method\n");
    for r in results {
        let method = r.config.method.name();
        for s in &r.schemes {
            let m = &s.metrics;
            for (tau, (ac, sdp)) in m.td_ac.iter().zip(&m.td_nsdp).enumerate() {
                let _ = writeln!(td, "{tau},{ac},{sdp},{},{method}", s.scheme.name());
            }
            for ((f, ac), sdp) in m.freqs_hz.iter().zip(&m.fd_ac).zip(&m.fd_nsdp) {
                let _ = writeln!(fd, "{f},{ac},{sdp},{},{method}", s.scheme.name());
            }
        }
    }
    write_text(&dir.join("td_metrics.csv"), &td)?;
    write_text(&dir.join("fd_metrics.csv"), &fd)?;

    let traced: Vec<(&RunResult, &SchemeResult)> = results
        .iter()
        .flat_map(|r| r.schemes.iter().map(move |s| (r, s)))
        .filter(|(_, s)| !s.trace.is_empty())
        .collect();
    if let Some((_, s0)) = traced.first() {
        let with_iteration = traced.iter().any(|(r, _)| r.case == Case::Subset);
        let multi_method = traced.len() > 1;
        let positions = s0.trace[0].1.similarity.len();
        let mut csv = String::new();
        if with_iteration {
            csv.push_str("iteration,");
        }
        csv.push_str("tau,selected,held_previous");
        for i in 0..positions {
            let _ = write!(csv, ",c_{i}");
        }
        if multi_method {
            csv.push_str(",method");
        }
        csv.push('\n');
        for (r, s) in &traced {
            for (iteration, d) in &s.trace {
                if with_iteration {
                    let _ = write!(csv, "{iteration},");
                }
                let _ = write!(csv, "{},{},{}", d.tau, d.selected.0, d.held_previous);
                for c in &d.similarity {
                    let _ = write!(csv, ",{c}");
                }
                if multi_method {
                    let _ = write!(csv, ",{}", r.config.method.name());
                }
                csv.push('\n');
            }
        }
        write_text(&dir.join("tracker_trace.csv"), &csv)?;
    }

    let summary = Summary {
        runs: results
            .iter()
            .map(|r| RunSummary {
                case: r.case,
                method: r.config.method,
                seeds: Seeds {
                    input_seed: r.config.input_seed,
                    mc_seed: r.config.mc_seed,
                },
                config: &r.config,
                input_digests: r.digests.iter().map(|d| format!("{d:016x}")).collect(),
                trajectories: &r.trajectories,
                schemes: r
                    .schemes
                    .iter()
                    .map(|s| SchemeSummary {
                        scheme: s.scheme,
                        td_ac_db: Stat::of(&s.metrics.td_ac),
                        td_nsdp_db: Stat::of(&s.metrics.td_nsdp),
                        fd_ac_db: Stat::of(&s.metrics.fd_ac),
                        fd_nsdp_db: Stat::of(&s.metrics.fd_nsdp),
                        lock_latencies: &s.locks,
                    })
                    .collect(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&summary).expect("serializable");
    write_text(&dir.join("summary.json"), &(json + "\n"))
}

/// Raw `f64` dumps of every recorded signal, one file per channel.
pub fn dump_signals(results: &[RunResult], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for r in results {
        for s in &r.schemes {
            let Some(sig) = &s.signals else { continue };
            let prefix = format!("{}_{}", s.scheme.name(), r.config.method.name());
            let groups: [(&str, &Vec<Vec<f64>>); 5] = [
                ("loudspeaker", &sig.loudspeakers),
                ("bright", &sig.bright),
                ("dark", &sig.dark),
                ("observation", &sig.observation),
                ("desired", &sig.desired),
            ];
            for (name, chans) in groups {
                for (i, c) in chans.iter().enumerate() {
                    write_f64_le(&dir.join(format!("{prefix}_{name}_{i}.f64")), c)?;
                }
            }
        }
    }
    Ok(())
}
