//! Scheme-level degeneracies and report plumbing on the desk scene.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use szc_core::harness::{
    desk_case_i_trajectory, desk_subset, make_input, run_case_i, run_case_ii, run_scheme, sample_trajectory,
    ActiveFilter, Experiment, ExperimentConfig, InputSource, Scheme, TrajectorySpec,
};
use szc_core::signal::write_f64_le;
use szc_core::{emit_report, IrSet, Method, PositionId};

fn desk() -> Arc<IrSet> {
    static SET: OnceLock<Arc<IrSet>> = OnceLock::new();
    Arc::clone(SET.get_or_init(|| Arc::new(szc_core::roomsim::desk_scene().build().unwrap())))
}

fn experiment(config: ExperimentConfig) -> Experiment {
    Experiment::prepare(config, desk()).unwrap()
}

#[test]
fn single_position_optimal_is_start_pos() {
    for method in [Method::Acc, Method::Pm] {
        let exp = experiment(ExperimentConfig::desk(method));
        let traj = TrajectorySpec::equal_intervals(&[PositionId(5)], 12).unwrap();
        let input = make_input(&exp.config, 8000).unwrap();
        let opt = run_scheme(&exp, Scheme::Optimal, &traj, &input, true).unwrap();
        let start = run_scheme(&exp, Scheme::StartPos, &traj, &input, true).unwrap();
        assert_eq!(opt.metrics, start.metrics);
        assert_eq!(opt.signals, start.signals);
        assert_eq!(opt.digest, start.digest);
    }
}

#[test]
fn one_entry_dictionary_always_selects_it() {
    let config = ExperimentConfig {
        dictionary_positions: Some(vec![PositionId(7)]),
        ..ExperimentConfig::desk(Method::Pm)
    };
    let exp = experiment(config);
    let traj = desk_case_i_trajectory(40).unwrap();
    let input = make_input(&exp.config, 8000).unwrap();
    let run = run_scheme(&exp, Scheme::Proposed, &traj, &input, false).unwrap();
    assert!(run.trace.iter().all(|d| d.selected == PositionId(0) && !d.held_previous));
    assert_eq!(run.active[0], ActiveFilter::Mix);
    assert!(run.active[1..].iter().all(|&a| a == ActiveFilter::Position(PositionId(7))));
    // Position 7 never occurs on the trajectory, so there is nothing to lock onto.
    assert!(run.locks.is_empty());
}

#[test]
fn single_iteration_case_ii_on_the_full_grid_is_case_i() {
    let config = ExperimentConfig {
        dictionary_positions: Some((0..9).map(PositionId).collect()),
        mc_iterations: 1,
        ..ExperimentConfig::desk(Method::Acc)
    };
    let exp = experiment(config.clone());
    let ii = run_case_ii(&exp, &Scheme::ALL).unwrap();
    let traj = sample_trajectory(&config, 9, 0).unwrap();
    assert_eq!(ii.trajectories, vec![traj.clone()]);
    let i = run_case_i(&exp, &traj, &Scheme::ALL, false).unwrap();
    for s in Scheme::ALL {
        assert_eq!(ii.scheme(s).unwrap().metrics, i.scheme(s).unwrap().metrics, "{s:?}");
    }
    assert_eq!(ii.digests, i.digests);
}

#[test]
fn start_pos_degrades_after_the_first_change() {
    for method in [Method::Acc, Method::Pm] {
        let exp = experiment(ExperimentConfig::desk(method));
        let traj = desk_case_i_trajectory(40).unwrap();
        let r = run_case_i(&exp, &traj, &[Scheme::StartPos], false).unwrap();
        let td = &r.scheme(Scheme::StartPos).unwrap().metrics.td_ac;
        let before = td[..10].iter().sum::<f64>() / 10.0;
        let after = td[10..].iter().sum::<f64>() / 30.0;
        assert!(after < before, "{method:?}: {before} -> {after}");
    }
}

#[test]
fn proposed_locks_in_case_ii_only_on_dictionary_positions() {
    let config = ExperimentConfig {
        dictionary_positions: Some(desk_subset()),
        mc_iterations: 6,
        ..ExperimentConfig::desk(Method::Pm)
    };
    let exp = experiment(config);
    let r = run_case_ii(&exp, &[Scheme::Proposed]).unwrap();
    let locks = &r.scheme(Scheme::Proposed).unwrap().locks;
    assert!(!locks.is_empty());
    for lock in locks {
        assert!(desk_subset().contains(&lock.position));
        assert!(lock.latency.is_some_and(|l| l <= 3), "{lock:?}");
        let traj = &r.trajectories[lock.iteration];
        assert!(traj.segment_starts().contains(&(lock.change_frame, lock.position)));
    }
}

#[test]
fn silent_input_holds_the_mix_filter() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("silence.f64");
    write_f64_le(&path, &vec![0.0; 256 * 8]).unwrap();
    let config = ExperimentConfig {
        input: InputSource::File { path },
        total_frames: 8,
        ..ExperimentConfig::desk(Method::Acc)
    };
    let exp = experiment(config);
    let traj = TrajectorySpec::equal_intervals(&[PositionId(2), PositionId(6)], 8).unwrap();
    let input = make_input(&exp.config, 8000).unwrap();
    let run = run_scheme(&exp, Scheme::Proposed, &traj, &input, false).unwrap();
    assert!(run.trace.iter().all(|d| d.held_previous && d.selected == PositionId(0)));
    assert!(run.active.iter().all(|&a| a == ActiveFilter::Mix));
    assert!(run.locks.iter().all(|l| l.latency.is_none()));
}

fn read_csv(path: &std::path::Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn report_summary_matches_csv_recomputation() {
    let exp_acc = experiment(ExperimentConfig { total_frames: 12, ..ExperimentConfig::desk(Method::Acc) });
    let exp_pm = experiment(ExperimentConfig { total_frames: 12, ..ExperimentConfig::desk(Method::Pm) });
    let traj = TrajectorySpec::equal_intervals(&[PositionId(0), PositionId(4), PositionId(8)], 12).unwrap();
    let results = vec![
        run_case_i(&exp_acc, &traj, &Scheme::ALL, false).unwrap(),
        run_case_i(&exp_pm, &traj, &Scheme::ALL, false).unwrap(),
    ];
    let dir = tempfile::tempdir().unwrap();
    emit_report(&results, dir.path()).unwrap();

    let (header, rows) = read_csv(&dir.path().join("td_metrics.csv"));
    assert_eq!(header, ["tau", "td_ac_db", "td_nsdp_db", "scheme", "method"]);
    assert_eq!(rows.len(), 2 * 4 * 12);
    let mut sums: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for row in &rows {
        let e = sums.entry((row[4].clone(), row[3].clone())).or_default();
        e.0 += row[1].parse::<f64>().unwrap();
        e.1 += 1;
    }

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let runs = summary["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    for run in runs {
        let method = run["method"].as_str().unwrap();
        assert_eq!(run["seeds"]["input_seed"], 1);
        for s in run["schemes"].as_array().unwrap() {
            let scheme = s["scheme"].as_str().unwrap();
            let (sum, n) = sums[&(method.to_string(), scheme.to_string())];
            let reported = s["td_ac_db"]["mean"].as_f64().unwrap();
            assert!((reported - sum / n as f64).abs() <= 1e-9 * reported.abs().max(1.0), "{method} {scheme}");
        }
    }

    let (fd_header, fd_rows) = read_csv(&dir.path().join("fd_metrics.csv"));
    assert_eq!(fd_header, ["freq_hz", "fd_ac_db", "fd_nsdp_db", "scheme", "method"]);
    let nfft = (12 * 256usize).next_power_of_two();
    assert_eq!(fd_rows.len(), 2 * 4 * nfft / 2);

    let (trace_header, trace_rows) = read_csv(&dir.path().join("tracker_trace.csv"));
    assert_eq!(&trace_header[..3], ["tau", "selected", "held_previous"]);
    assert_eq!(trace_header.last().unwrap(), "method");
    assert_eq!(trace_rows.len(), 2 * 12);
}

#[test]
fn report_without_tracking_has_no_trace_file() {
    let exp = experiment(ExperimentConfig { total_frames: 8, ..ExperimentConfig::desk(Method::Pm) });
    let traj = TrajectorySpec::equal_intervals(&[PositionId(1), PositionId(3)], 8).unwrap();
    let r = run_case_i(&exp, &traj, &[Scheme::Mix, Scheme::Optimal], false).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&[r], dir.path()).unwrap();
    assert!(!dir.path().join("tracker_trace.csv").exists());
    assert!(dir.path().join("td_metrics.csv").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary["runs"][0]["schemes"][0].get("lock_latencies").is_none());
}

#[test]
fn case_ii_trace_carries_the_iteration() {
    let config = ExperimentConfig {
        dictionary_positions: Some(desk_subset()),
        mc_iterations: 3,
        total_frames: 8,
        ..ExperimentConfig::desk(Method::Acc)
    };
    let exp = experiment(config);
    let r = run_case_ii(&exp, &[Scheme::Proposed, Scheme::StartPos]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&[r], dir.path()).unwrap();
    let (header, rows) = read_csv(&dir.path().join("tracker_trace.csv"));
    assert_eq!(header[0], "iteration");
    assert_eq!(header.len(), 4 + 5);
    assert_eq!(rows.len(), 3 * 8);
    assert_eq!(rows.last().unwrap()[0], "2");
}
