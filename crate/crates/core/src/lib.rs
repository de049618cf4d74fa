//! Dictionary-based sound zone control with audio-only listener tracking.
//!
//! Control filters (acoustic contrast control or pressure matching) are
//! designed for every position of a listener grid. At run time the input is
//! processed in non-overlapping frames; the signals at a few observation
//! microphones are compared, by normalized cosine similarity, against
//! per-position predictions computed from stored impulse responses, and the
//! best-matching position's filters are used for the next frame.
//!
//! Modules, bottom-up:
//! - [`irdata`]: IR tensors, the position grid and on-disk persistence.
//! - [`roomsim`]: image-source simulation of scene IRs.
//! - [`filterdesign`]: covariances, ACC/PM/mix designs, filter dictionaries.
//! - [`runtime`]: the overlap-add frame engine.
//! - [`tracker`]: similarity scoring and filter selection.
//! - [`metrics`]: acoustic contrast and signal distortion.
//! - [`harness`]: schemes, experiments and reports.

pub mod error;
pub mod filterdesign;
pub mod harness;
pub mod irdata;
pub mod metrics;
pub mod oracle;
pub mod roomsim;
pub mod runtime;
pub mod signal;
pub mod tracker;
pub mod verify;

pub use error::{Error, Result};
pub use filterdesign::{
    build_dictionaries, design_acc, design_mix, design_pm, design_position, ControlFilterSet,
    DesignBank, DesignParams, FilterDictionary, Method,
};
pub use harness::{
    emit_report, run_case_i, run_case_ii, run_scheme, Experiment, ExperimentConfig, RunResult,
    Scheme, TrajectorySpec,
};
pub use irdata::{load_irset, save_irset, IrSet, Manifest, MicGroup, PositionId};
pub use metrics::MetricsSeries;
pub use roomsim::{build_scene_irset, RoomSpec, SceneFile, SceneGeometry};
pub use runtime::{FrameEngine, FrameOutputs};
pub use tracker::TrackerDecision;
