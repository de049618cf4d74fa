//! End-to-end checks on the desk scene. Each check compares a fast path
//! against an independent reference from [`crate::oracle`] or asserts a
//! behavioural property of the full tracking experiment. Used by the
//! acceptance tests and by `szc verify`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::filterdesign::{
    cross_vector, design_acc, design_pm, desired_pressure, mean_covariance, regularized_contrast,
    zone_covariance, ControlFilterSet, DesignParams, FilterTag, Method, ObservationIrs,
    PositionDesignData,
};
use crate::harness::{
    desk_case_i_trajectory, desk_subset, emit_report, mean, run_case_i, run_case_ii, run_scheme,
    Experiment, ExperimentConfig, Scheme,
};
use crate::irdata::{IrSet, MicGroup, PositionId};
use crate::metrics::{fft_size, parseval_energy, spectra, summed_power, td_ac, td_nsdp, DB_CLAMP};
use crate::oracle;
use crate::roomsim::desk_scene;
use crate::runtime::{frame_input, FrameEngine};
use crate::signal::{energy, white_noise};
use crate::tracker::{ncs, total_similarity};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{status}] {:>2} {}: {}", self.id, self.name, self.detail)
    }
}

pub fn desk_irset() -> Result<Arc<IrSet>> {
    Ok(Arc::new(desk_scene().build()?))
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Frame-engine outputs concatenated over `frames` frames versus whole-signal
/// convolutions, for fixed filters and position; plus one switching run
/// replayed by superposition.
pub fn check_overlap_add(trials: usize, seed: u64) -> Result<Check> {
    const TOL: f64 = 1e-10;
    let set = desk_irset()?;
    let params = DesignParams::desk();
    let n = 256;
    let frames = 10;
    let j = params.filter_len;
    let l_count = set.num_loudspeakers();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;

    for _ in 0..trials {
        let q = random_vec(&mut rng, l_count * j);
        let filters = ControlFilterSet::new(q, l_count, Method::Pm, FilterTag::Mix, params)?;
        let pos = PositionId(rng.random_range(0..set.num_positions()));
        let x = random_vec(&mut rng, n * frames);
        let obs = ObservationIrs::new(Arc::clone(&set));
        let mut engine = FrameEngine::new(n, Arc::clone(&set), Some(obs), filters.clone(), &params)?;

        let mut y = vec![Vec::new(); l_count];
        let mut mics: Vec<Vec<Vec<f64>>> = vec![Vec::new(); 3];
        let mut est = vec![vec![Vec::new(); set.mic_count(MicGroup::Observation)]; set.num_positions()];
        let mut desired = vec![Vec::new(); set.mic_count(MicGroup::Bright)];
        for tau in 0..frames {
            let out = engine.process_frame(&frame_input(&x, tau, n), pos, true)?;
            for (acc, f) in y.iter_mut().zip(&out.loudspeakers) {
                acc.extend_from_slice(f);
            }
            for (g, group) in MicGroup::ALL.iter().enumerate() {
                let frames = out.mics.group(*group);
                mics[g].resize(frames.len(), Vec::new());
                for (acc, f) in mics[g].iter_mut().zip(frames) {
                    acc.extend_from_slice(f);
                }
            }
            for (acc_s, f_s) in est.iter_mut().zip(&out.estimates) {
                for (acc, f) in acc_s.iter_mut().zip(f_s) {
                    acc.extend_from_slice(f);
                }
            }
            for (acc, f) in desired.iter_mut().zip(&out.desired) {
                acc.extend_from_slice(f);
            }
        }

        let y_ref: Vec<Vec<f64>> = (0..l_count)
            .map(|l| oracle::direct_convolution(filters.filter(l), &x)[..x.len()].to_vec())
            .collect();
        for (a, b) in y.iter().zip(&y_ref) {
            worst = worst.max(max_abs_diff(a, b));
        }
        for (g, group) in MicGroup::ALL.iter().enumerate() {
            for (m, got) in mics[g].iter().enumerate() {
                let irs: Vec<&[f64]> = (0..l_count).map(|l| set.ir(pos, *group, m, l)).collect();
                worst = worst.max(max_abs_diff(got, &oracle::mix_signals(&irs, &y_ref)));
            }
        }
        for (s, per_mic) in est.iter().enumerate() {
            for (m, got) in per_mic.iter().enumerate() {
                let irs: Vec<&[f64]> = (0..l_count)
                    .map(|l| set.ir(PositionId(s), MicGroup::Observation, m, l))
                    .collect();
                worst = worst.max(max_abs_diff(got, &oracle::mix_signals(&irs, &y_ref)));
            }
        }
        let mut delayed = vec![0.0; params.delay];
        delayed.extend_from_slice(&x[..x.len() - params.delay]);
        for (m, got) in desired.iter().enumerate() {
            let h = set.ir(pos, MicGroup::Bright, m, params.l_ref);
            worst = worst.max(max_abs_diff(got, &oracle::direct_convolution(h, &delayed)[..x.len()]));
        }
    }

    // Switching filters and positions every frame.
    let bank: Vec<ControlFilterSet> = (0..3)
        .map(|_| ControlFilterSet::new(random_vec(&mut rng, l_count * j), l_count, Method::Pm, FilterTag::Mix, params))
        .collect::<Result<_>>()?;
    let x = random_vec(&mut rng, n * frames);
    let picks: Vec<(usize, PositionId)> = (0..frames)
        .map(|_| (rng.random_range(0..3), PositionId(rng.random_range(0..set.num_positions()))))
        .collect();
    let mut engine = FrameEngine::new(n, Arc::clone(&set), None, bank[picks[0].0].clone(), &params)?;
    let mut y = vec![Vec::new(); l_count];
    let mut dark = vec![Vec::new(); set.mic_count(MicGroup::Dark)];
    for (tau, &(f, pos)) in picks.iter().enumerate() {
        engine.set_filters(bank[f].clone())?;
        let out = engine.process_frame(&frame_input(&x, tau, n), pos, false)?;
        for (acc, fr) in y.iter_mut().zip(&out.loudspeakers) {
            acc.extend_from_slice(fr);
        }
        for (acc, fr) in dark.iter_mut().zip(&out.mics.dark) {
            acc.extend_from_slice(fr);
        }
    }
    let mut switch_worst: f64 = 0.0;
    let y_ref: Vec<Vec<f64>> = (0..l_count)
        .map(|l| {
            let per_frame: Vec<&[f64]> = picks.iter().map(|&(f, _)| bank[f].filter(l)).collect();
            oracle::switched_convolution(&x, &per_frame, n)
        })
        .collect();
    for (a, b) in y.iter().zip(&y_ref) {
        switch_worst = switch_worst.max(max_abs_diff(a, b));
    }
    for (m, got) in dark.iter().enumerate() {
        let mut reference = vec![0.0; x.len()];
        for (l, y) in y_ref.iter().enumerate().take(l_count) {
            let per_frame: Vec<&[f64]> = picks.iter().map(|&(_, p)| set.ir(p, MicGroup::Dark, m, l)).collect();
            for (r, v) in reference.iter_mut().zip(oracle::switched_convolution(y, &per_frame, n)) {
                *r += v;
            }
        }
        switch_worst = switch_worst.max(max_abs_diff(got, &reference));
    }

    Ok(Check {
        id: 1,
        name: "overlap-add oracle",
        passed: worst <= TOL && switch_worst <= TOL,
        detail: format!(
            "{trials} fixed trials max |err| = {worst:.2e}, switching replay max |err| = {switch_worst:.2e} (tol {TOL:.0e})"
        ),
    })
}

fn system_matrix(data: &PositionDesignData, zeta: f64, lambda: f64) -> DMatrix<f64> {
    let n = data.cross.len();
    &data.r_bright.matrix * (1.0 - zeta) + &data.r_dark.matrix * zeta + DMatrix::identity(n, n) * lambda
}

fn random_direction(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    let v = DVector::from_vec(random_vec(rng, len));
    let norm = v.norm();
    v / norm
}

/// Normal-equation residual and perturbation optimality of the PM solution
/// at every desk position; the objective is evaluated by explicit convolution.
pub fn check_pm_optimality(perturbations: usize, seed: u64) -> Result<Check> {
    let set = desk_irset()?;
    let p = DesignParams::desk();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_residual: f64 = 0.0;
    let mut violations = 0;
    let mut min_gain = f64::INFINITY;
    for pos in set.positions() {
        let data = PositionDesignData::compute(&set, pos, &p)?;
        let q = design_pm(&data.r_bright, &data.r_dark, &data.cross, p.zeta, p.lambda)?;
        let rhs = &data.cross * (1.0 - p.zeta);
        let res = (system_matrix(&data, p.zeta, p.lambda) * &q - &rhs).norm() / rhs.norm();
        worst_residual = worst_residual.max(res);

        let d = desired_pressure(&set, pos, p.l_ref, p.delay, p.filter_len)?;
        let base = oracle::pm_objective(&set, pos, &d.signals, q.as_slice(), p.filter_len, p.zeta, p.lambda);
        for _ in 0..perturbations {
            let delta = random_direction(&mut rng, q.len()) * (1e-3 * q.norm());
            let moved = &q + delta;
            let obj = oracle::pm_objective(&set, pos, &d.signals, moved.as_slice(), p.filter_len, p.zeta, p.lambda);
            min_gain = min_gain.min(obj - base);
            if obj < base {
                violations += 1;
            }
        }
    }
    Ok(Check {
        id: 2,
        name: "PM optimality",
        passed: worst_residual <= 1e-8 && violations == 0,
        detail: format!(
            "max relative residual {worst_residual:.2e} (tol 1e-8); {violations} of {} perturbations lowered the objective (min increase {min_gain:.3e})",
            perturbations * set.num_positions()
        ),
    })
}

/// Generalized eigen-residual of the ACC solution and its contrast against
/// random unit vectors and the PM solution, at every desk position.
pub fn check_acc_maximality(samples: usize, seed: u64) -> Result<Check> {
    let set = desk_irset()?;
    let p = DesignParams::desk();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_residual: f64 = 0.0;
    let mut beaten = 0;
    let mut pm_beats = 0;
    let mut min_margin_db = f64::INFINITY;
    for pos in set.positions() {
        let data = PositionDesignData::compute(&set, pos, &p)?;
        let acc = design_acc(&data.r_bright, &data.r_dark, p.lambda, data.desired_energy)?;
        let n = acc.q.len();
        let reg_dark = &data.r_dark.matrix + DMatrix::identity(n, n) * p.lambda;
        let rbq = &data.r_bright.matrix * &acc.q;
        let res = (&rbq - (&reg_dark * &acc.q) * acc.eigenvalue).norm() / rbq.norm();
        worst_residual = worst_residual.max(res);

        let best = regularized_contrast(&data.r_bright, &data.r_dark, p.lambda, &acc.q);
        for _ in 0..samples {
            let v = random_direction(&mut rng, n);
            let c = regularized_contrast(&data.r_bright, &data.r_dark, p.lambda, &v);
            min_margin_db = min_margin_db.min(10.0 * (best / c).log10());
            if c > best {
                beaten += 1;
            }
        }
        let q_pm = design_pm(&data.r_bright, &data.r_dark, &data.cross, p.zeta, p.lambda)?;
        if regularized_contrast(&data.r_bright, &data.r_dark, p.lambda, &q_pm) > best {
            pm_beats += 1;
        }
    }
    Ok(Check {
        id: 3,
        name: "ACC maximality",
        passed: worst_residual <= 1e-8 && beaten == 0 && pm_beats == 0,
        detail: format!(
            "max eigen-residual {worst_residual:.2e} (tol 1e-8); random vectors beating ACC: {beaten}/{}; PM beating ACC: {pm_beats}/{}; min margin {min_margin_db:.1} dB",
            samples * set.num_positions(),
            set.num_positions()
        ),
    })
}

/// With the full dictionary and fixed true position, the true position's
/// similarity equals `M_O` every frame and is the strict maximum from the
/// second frame on.
pub fn check_identifiability(frames: usize, seed: u64) -> Result<Check> {
    let set = desk_irset()?;
    let p = DesignParams::desk();
    let n = 256;
    let m_o = set.mic_count(MicGroup::Observation) as f64;
    let eps = crate::tracker::default_silence_threshold(n);
    let mut worst: f64 = 0.0;
    let mut not_strict = 0;
    let mut min_gap = f64::INFINITY;
    for pos in set.positions() {
        let filters = crate::filterdesign::design_position(&set, pos, Method::Pm, &p)?;
        let obs = ObservationIrs::new(Arc::clone(&set));
        let mut engine = FrameEngine::new(n, Arc::clone(&set), Some(obs), filters, &p)?;
        let x = white_noise(n * frames, seed + pos.0 as u64);
        for tau in 0..frames {
            let out = engine.process_frame(&frame_input(&x, tau, n), pos, true)?;
            let c = total_similarity(&out.mics.observation, &out.estimates, eps);
            worst = worst.max((c[pos.0] - m_o).abs());
            if tau >= 1 {
                let runner_up = c
                    .iter()
                    .enumerate()
                    .filter(|(s, _)| *s != pos.0)
                    .map(|(_, v)| *v)
                    .fold(f64::NEG_INFINITY, f64::max);
                min_gap = min_gap.min(c[pos.0] - runner_up);
                if runner_up >= c[pos.0] {
                    not_strict += 1;
                }
            }
        }
    }
    Ok(Check {
        id: 4,
        name: "noiseless identifiability",
        passed: worst <= 1e-12 && not_strict == 0,
        detail: format!(
            "max |c_true - M_O| = {worst:.2e} (tol 1e-12); non-strict frames {not_strict}; min gap to runner-up {min_gap:.3e}"
        ),
    })
}

/// Case-I lock latency over `runs` input seeds and both design methods.
pub fn check_tracking_lock(runs: u64) -> Result<Check> {
    let set = desk_irset()?;
    let mut worst = 0;
    let mut missed = 0;
    let mut events = 0;
    for method in [Method::Acc, Method::Pm] {
        let exp = Experiment::prepare(ExperimentConfig::desk(method), Arc::clone(&set))?;
        let traj = desk_case_i_trajectory(exp.config.total_frames)?;
        for seed in 0..runs {
            let x = white_noise(exp.config.total_frames * exp.config.frame_len, 100 + seed);
            let run = run_scheme(&exp, Scheme::Proposed, &traj, &x, false)?;
            for lock in &run.locks {
                events += 1;
                match lock.latency {
                    Some(l) => worst = worst.max(l),
                    None => missed += 1,
                }
            }
        }
    }
    Ok(Check {
        id: 5,
        name: "tracking lock",
        passed: missed == 0 && worst <= 3,
        detail: format!(
            "{events} segment starts over {runs} seeds x 2 methods: worst latency {worst} frames (limit 3), never locked {missed}"
        ),
    })
}

/// Means of Case-I TD AC after the first change, and exact agreement of the
/// proposed and optimal schemes on frames where both ran the same filters
/// for the last three frames.
pub fn check_case_i_ordering() -> Result<Check> {
    let set = desk_irset()?;
    let mut passed = true;
    let mut detail = Vec::new();
    for method in [Method::Acc, Method::Pm] {
        let exp = Experiment::prepare(ExperimentConfig::desk(method), Arc::clone(&set))?;
        let traj = desk_case_i_trajectory(exp.config.total_frames)?;
        let input = crate::harness::make_input(&exp.config, set.sample_rate_hz())?;
        let runs: Vec<_> = Scheme::ALL
            .iter()
            .map(|&s| run_scheme(&exp, s, &traj, &input, false))
            .collect::<Result<_>>()?;
        let get = |s: Scheme| runs.iter().find(|r| r.scheme == s).unwrap();
        let first_change = traj.segment_starts()[1].0;
        let after = |s: Scheme| mean(&get(s).metrics.td_ac[first_change..]);
        let (opt, prop, mix, start) = (
            after(Scheme::Optimal),
            after(Scheme::Proposed),
            after(Scheme::Mix),
            after(Scheme::StartPos),
        );
        let ordered = opt >= prop && prop >= mix && mix >= start;

        let (pr, op) = (get(Scheme::Proposed), get(Scheme::Optimal));
        let same = |t: usize| pr.active[t] == op.active[t];
        let locked: Vec<usize> = (first_change.max(2)..traj.total_frames())
            .filter(|&t| same(t) && same(t - 1) && same(t - 2))
            .collect();
        let mismatched = locked
            .iter()
            .filter(|&&t| pr.metrics.td_ac[t] != op.metrics.td_ac[t])
            .count();
        let locked_gap = if locked.is_empty() {
            f64::INFINITY
        } else {
            let m = |r: &crate::harness::SchemeRun| mean(&locked.iter().map(|&t| r.metrics.td_ac[t]).collect::<Vec<_>>());
            (m(op) - m(pr)).abs()
        };
        let ok = ordered && mismatched == 0 && locked_gap <= 0.2;
        passed &= ok;
        detail.push(format!(
            "{}: optimal {opt:.2} / proposed {prop:.2} / mix {mix:.2} / start_pos {start:.2} dB, {} locked frames, {mismatched} differ, locked gap {locked_gap:.3} dB",
            method.name(),
            locked.len()
        ));
    }
    Ok(Check {
        id: 6,
        name: "Case I scheme ordering",
        passed,
        detail: detail.join("; "),
    })
}

/// Mean FD AC of one design method over a Monte-Carlo with the 5-position
/// subset dictionary: proposed > start_pos and proposed >= mix.
pub fn check_case_ii_ordering_for(method: Method, iterations: usize) -> Result<Check> {
    let set = desk_irset()?;
    let config = ExperimentConfig {
        dictionary_positions: Some(desk_subset()),
        mc_iterations: iterations,
        ..ExperimentConfig::desk(method)
    };
    let exp = Experiment::prepare(config, set)?;
    let result = run_case_ii(&exp, &Scheme::ALL)?;
    let fd = |s: Scheme| mean(&result.scheme(s).unwrap().metrics.fd_ac);
    let (prop, mix, start, opt) = (
        fd(Scheme::Proposed),
        fd(Scheme::Mix),
        fd(Scheme::StartPos),
        fd(Scheme::Optimal),
    );
    Ok(Check {
        id: 7,
        name: "Case II scheme ordering",
        passed: prop > start && prop >= mix,
        detail: format!(
            "{}, {iterations} iterations: mean FD AC proposed {prop:.2} / mix {mix:.2} / start_pos {start:.2} / optimal {opt:.2} dB",
            method.name()
        ),
    })
}

/// Both design methods; passes only if each does.
pub fn check_case_ii_ordering(iterations: usize) -> Result<Check> {
    let parts = [
        check_case_ii_ordering_for(Method::Acc, iterations)?,
        check_case_ii_ordering_for(Method::Pm, iterations)?,
    ];
    Ok(Check {
        id: 7,
        name: "Case II scheme ordering",
        passed: parts.iter().all(|c| c.passed),
        detail: parts
            .iter()
            .map(|c| format!("{}{}", c.detail, if c.passed { "" } else { " (not met)" }))
            .collect::<Vec<_>>()
            .join("; "),
    })
}

/// The mix covariance against an entry-by-entry mean of the per-position
/// covariances.
pub fn check_mix_identity() -> Result<Check> {
    let set = desk_irset()?;
    let j = DesignParams::desk().filter_len;
    let mut worst: f64 = 0.0;
    for group in [MicGroup::Bright, MicGroup::Dark] {
        let covs: Vec<_> = set
            .positions()
            .map(|p| zone_covariance(&set, p, group, j))
            .collect::<Result<_>>()?;
        let mixed = mean_covariance(&covs.iter().collect::<Vec<_>>())?;
        let n = mixed.matrix.nrows();
        let reference = DMatrix::from_fn(n, n, |r, c| {
            covs.iter().map(|cv| cv.matrix[(r, c)]).sum::<f64>() / covs.len() as f64
        });
        worst = worst.max((&mixed.matrix - &reference).norm() / reference.norm());
    }
    Ok(Check {
        id: 8,
        name: "mix covariance identity",
        passed: worst <= 1e-14,
        detail: format!("relative Frobenius error {worst:.2e} (tol 1e-14)"),
    })
}

/// NCS bounds and scale invariance, TD/FD Parseval consistency on a desk
/// run, exact clamps, and common-gain invariance of all metrics.
pub fn check_metric_invariants(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();

    let mut ncs_worst: f64 = 0.0;
    for _ in 0..200 {
        let a = random_vec(&mut rng, 64);
        let b = random_vec(&mut rng, 64);
        let c = ncs(&a, &b, 1e-12);
        if !(-1.0..=1.0).contains(&c) {
            failures.push("ncs out of [-1, 1]".to_string());
        }
        let alpha = rng.random_range(0.01..100.0);
        let scaled: Vec<f64> = a.iter().map(|v| v * alpha).collect();
        ncs_worst = ncs_worst.max((ncs(&scaled, &b, 1e-12) - c).abs());
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        if (ncs(&a, &a, 1e-12) - 1.0).abs() > 1e-14 || (ncs(&a, &neg, 1e-12) + 1.0).abs() > 1e-14 {
            failures.push("ncs self/negation".to_string());
        }
    }
    if ncs_worst > 1e-14 {
        failures.push(format!("ncs scale invariance {ncs_worst:.2e}"));
    }

    // Parseval on the signals of a real run.
    let set = desk_irset()?;
    let exp = Experiment::prepare(ExperimentConfig::desk(Method::Pm), Arc::clone(&set))?;
    let traj = desk_case_i_trajectory(exp.config.total_frames)?;
    let input = crate::harness::make_input(&exp.config, set.sample_rate_hz())?;
    let run = run_scheme(&exp, Scheme::Mix, &traj, &input, true)?;
    let sig = run.signals.expect("signals recorded");
    let nfft = fft_size(sig.bright[0].len());
    let (mb, md) = (sig.bright.len() as f64, sig.dark.len() as f64);
    let td_ratio = md * sig.bright.iter().map(|s| energy(s)).sum::<f64>()
        / (mb * sig.dark.iter().map(|s| energy(s)).sum::<f64>());
    let fd_ratio = md * parseval_energy(&summed_power(&spectra(&sig.bright, nfft)), nfft)
        / (mb * parseval_energy(&summed_power(&spectra(&sig.dark, nfft)), nfft));
    let parseval_err = (fd_ratio / td_ratio - 1.0).abs();
    if parseval_err > 1e-6 {
        failures.push(format!("Parseval {parseval_err:.2e}"));
    }

    // Clamps.
    let frame = vec![random_vec(&mut rng, 32), random_vec(&mut rng, 32)];
    let silent = vec![vec![0.0; 32]; 2];
    if td_ac(&frame, &silent) != DB_CLAMP || td_nsdp(&frame, &frame) != -DB_CLAMP {
        failures.push("TD clamps".to_string());
    }
    let fd_exact = crate::metrics::fd_nsdp(&frame, &frame, 32);
    let fd_silent = crate::metrics::fd_ac(&frame, &silent, 32);
    if fd_exact.iter().any(|&v| v != -DB_CLAMP) || fd_silent.iter().any(|&v| v != DB_CLAMP) {
        failures.push("FD clamps".to_string());
    }

    // Common positive gain.
    let g = 3.7;
    let scale = |s: &[Vec<f64>]| -> Vec<Vec<f64>> { s.iter().map(|c| c.iter().map(|v| v * g).collect()).collect() };
    let (b, d, des) = (&sig.bright, &sig.dark, &sig.desired);
    let (bs, ds, dess) = (scale(b), scale(d), scale(des));
    let mut gain_worst: f64 = 0.0;
    gain_worst = gain_worst.max((td_ac(b, d) - td_ac(&bs, &ds)).abs());
    gain_worst = gain_worst.max((td_nsdp(b, des) - td_nsdp(&bs, &dess)).abs());
    for (x, y) in crate::metrics::fd_ac(b, d, nfft).iter().zip(crate::metrics::fd_ac(&bs, &ds, nfft)) {
        gain_worst = gain_worst.max((x - y).abs());
    }
    for (x, y) in crate::metrics::fd_nsdp(b, des, nfft).iter().zip(crate::metrics::fd_nsdp(&bs, &dess, nfft)) {
        gain_worst = gain_worst.max((x - y).abs());
    }
    if gain_worst > 1e-12 {
        failures.push(format!("gain invariance {gain_worst:.2e} dB"));
    }

    Ok(Check {
        id: 9,
        name: "metric invariants",
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!(
                "ncs scale err {ncs_worst:.1e}; Parseval rel err {parseval_err:.1e} (tol 1e-6); clamps exact; gain err {gain_worst:.1e} dB"
            )
        } else {
            failures.join(", ")
        },
    })
}

fn read_dir_bytes(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| crate::Error::io(dir, e))? {
        let entry = entry.map_err(|e| crate::Error::io(dir, e))?;
        let path = entry.path();
        let bytes = fs::read(&path).map_err(|e| crate::Error::io(&path, e))?;
        files.push((entry.file_name().to_string_lossy().into_owned(), bytes));
    }
    files.sort();
    Ok(files)
}

/// Two Case-I and two Case-II runs with identical seeds emit identical bytes.
pub fn check_determinism(mc_iterations: usize, scratch: &Path) -> Result<Check> {
    let set = desk_irset()?;
    let mut outputs = Vec::new();
    for attempt in 0..2 {
        let mut results = Vec::new();
        let exp = Experiment::prepare(ExperimentConfig::desk(Method::Acc), Arc::clone(&set))?;
        let traj = desk_case_i_trajectory(exp.config.total_frames)?;
        results.push(run_case_i(&exp, &traj, &Scheme::ALL, false)?);
        let config = ExperimentConfig {
            dictionary_positions: Some(desk_subset()),
            mc_iterations,
            ..ExperimentConfig::desk(Method::Pm)
        };
        let exp = Experiment::prepare(config, Arc::clone(&set))?;
        results.push(run_case_ii(&exp, &Scheme::ALL)?);
        let dir = scratch.join(format!("run{attempt}"));
        emit_report(&results, &dir)?;
        outputs.push(read_dir_bytes(&dir)?);
    }
    let identical = outputs[0] == outputs[1];
    Ok(Check {
        id: 10,
        name: "determinism",
        passed: identical && !outputs[0].is_empty(),
        detail: format!(
            "{} report files, byte-identical across two runs: {identical}",
            outputs[0].len()
        ),
    })
}

/// Dense-materialization cross-checks of the covariance and cross vector.
pub fn check_dense_design() -> Result<Check> {
    let set = desk_irset()?;
    let p = DesignParams::desk();
    let mut worst_cov: f64 = 0.0;
    let mut worst_cross: f64 = 0.0;
    for pos in set.positions() {
        for group in [MicGroup::Bright, MicGroup::Dark] {
            let fast = zone_covariance(&set, pos, group, p.filter_len)?;
            let dense = oracle::dense_covariance(&set, pos, group, p.filter_len);
            worst_cov = worst_cov.max((&fast.matrix - &dense).norm() / dense.norm());
        }
        let d = desired_pressure(&set, pos, p.l_ref, p.delay, p.filter_len)?;
        let fast = cross_vector(&set, pos, &d, p.filter_len)?;
        let dense = oracle::dense_cross(&set, pos, &d.signals, p.filter_len);
        worst_cross = worst_cross.max((&fast - &dense).norm() / dense.norm());
    }
    Ok(Check {
        id: 0,
        name: "dense design oracle",
        passed: worst_cov <= 1e-10 && worst_cross <= 1e-12,
        detail: format!("covariance rel err {worst_cov:.2e} (tol 1e-10), cross vector rel err {worst_cross:.2e} (tol 1e-12)"),
    })
}

/// Every check, in criterion order, with the desk-scale settings.
pub fn run_all(scratch: &Path) -> Result<Vec<Check>> {
    Ok(vec![
        check_dense_design()?,
        check_overlap_add(10, 11)?,
        check_pm_optimality(100, 12)?,
        check_acc_maximality(1000, 13)?,
        check_identifiability(6, 14)?,
        check_tracking_lock(10)?,
        check_case_i_ordering()?,
        check_case_ii_ordering(50)?,
        check_mix_identity()?,
        check_metric_invariants(15)?,
        check_determinism(5, scratch)?,
    ])
}
