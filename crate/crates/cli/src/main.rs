use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use szc_core::harness::{
    desk_case_i_trajectory, desk_subset, dump_signals, emit_report, run_case_i, run_case_ii, Experiment,
    ExperimentConfig, InputSource, RunResult, Scheme, TrajectorySpec,
};
use szc_core::irdata::{load_irset, save_dictionary, save_irset, IrSet, PositionId};
use szc_core::roomsim::{desk_scene, full_scale_scene, SceneFile};
use szc_core::{build_dictionaries, verify, DesignParams, Error, Method, Result};

#[derive(Parser)]
#[command(name = "szc", version, about = "Sound zone control with audio-only listener tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the impulse responses of a scene and store them as an IR set.
    GenScene(GenSceneArgs),
    /// Design per-position and mix filters for an IR set.
    Design(DesignArgs),
    /// Run the Case I (fixed trajectory) or Case II (Monte-Carlo) experiment.
    Run(RunArgs),
    /// Run the built-in oracle and acceptance checks on the desk scene.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Full,
}

#[derive(Args)]
struct GenSceneArgs {
    /// Scene description (room + geometry) in JSON.
    #[arg(long, conflicts_with = "preset")]
    scene: Option<PathBuf>,
    /// Built-in scene to use instead of a file.
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    /// Also write the scene description used.
    #[arg(long)]
    write_scene: Option<PathBuf>,
    /// Output IR-set directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DesignFlags {
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Reference loudspeaker of the desired pressure.
    #[arg(long)]
    lref: Option<usize>,
    /// Modelling delay of the desired pressure, in samples.
    #[arg(long)]
    delta: Option<usize>,
    /// Filter length J.
    #[arg(long)]
    filter_len: Option<usize>,
}

impl DesignFlags {
    fn apply(&self, mut p: DesignParams) -> DesignParams {
        if let Some(v) = self.zeta {
            p.zeta = v;
        }
        if let Some(v) = self.lambda {
            p.lambda = v;
        }
        if let Some(v) = self.lref {
            p.l_ref = v;
        }
        if let Some(v) = self.delta {
            p.delay = v;
        }
        if let Some(v) = self.filter_len {
            p.filter_len = v;
        }
        p
    }
}

#[derive(Args)]
struct DesignArgs {
    /// IR-set directory; the desk scene is simulated when omitted.
    #[arg(long)]
    irset: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[command(flatten)]
    flags: DesignFlags,
    /// Comma-separated position ids to design for (default: all).
    #[arg(long, value_delimiter = ',')]
    subset: Option<Vec<usize>>,
    /// Output dictionary directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum MethodArg {
    Acc,
    Pm,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Acc => Method::Acc,
            MethodArg::Pm => Method::Pm,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum MethodChoice {
    Acc,
    Pm,
    Both,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum CaseArg {
    I,
    Ii,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value = "i")]
    case: CaseArg,
    /// IR-set directory; the desk scene is simulated when omitted.
    #[arg(long)]
    irset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    method: MethodChoice,
    /// `all` or a comma-separated list of proposed, mix, start_pos, optimal.
    #[arg(long, default_value = "all")]
    scheme: String,
    /// Case-I trajectory: `preset` or a JSON file of segments.
    #[arg(long, default_value = "preset")]
    traj: String,
    /// `noise`, `sweep`, or a file of little-endian f64 samples.
    #[arg(long, default_value = "noise")]
    input: String,
    /// Seed of the noise input.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Monte-Carlo iterations (Case II).
    #[arg(long, default_value_t = 50)]
    mc: usize,
    /// Master seed of the Monte-Carlo trajectories.
    #[arg(long, default_value_t = 2024)]
    mc_seed: u64,
    /// Dictionary positions for Case II (default: corners and centre of the 3 x 3 grid).
    #[arg(long, value_delimiter = ',')]
    subset: Option<Vec<usize>>,
    /// Number of frames T.
    #[arg(long)]
    frames: Option<usize>,
    /// Frame length N in samples.
    #[arg(long)]
    frame_len: Option<usize>,
    #[command(flatten)]
    flags: DesignFlags,
    /// Also write every recorded signal as raw f64 files (Case I only).
    #[arg(long)]
    dump_frames: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Scratch directory for the determinism check (default: a temp dir).
    #[arg(long)]
    scratch: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenScene(a) => gen_scene(a),
        Command::Design(a) => design(a),
        Command::Run(a) => run(a),
        Command::Verify(a) => verify_all(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn gen_scene(a: GenSceneArgs) -> Result<ExitCode> {
    let scene = match (&a.scene, a.preset) {
        (Some(path), _) => SceneFile::load(path)?,
        (None, Preset::Desk) => desk_scene(),
        (None, Preset::Full) => full_scale_scene(),
    };
    if let Some(path) = &a.write_scene {
        scene.save(path)?;
    }
    let set = scene.build()?;
    save_irset(&set, &a.out)?;
    println!(
        "wrote {} positions x {} loudspeakers (K = {}) to {}",
        set.num_positions(),
        set.num_loudspeakers(),
        set.ir_length(),
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn irset_or_desk(dir: Option<&Path>) -> Result<IrSet> {
    match dir {
        Some(d) => load_irset(d),
        None => desk_scene().build(),
    }
}

fn ids(v: &[usize]) -> Vec<PositionId> {
    v.iter().copied().map(PositionId).collect()
}

fn design(a: DesignArgs) -> Result<ExitCode> {
    let mut set = irset_or_desk(a.irset.as_deref())?;
    if let Some(keep) = &a.subset {
        set = set.subset_positions(&ids(keep))?;
    }
    let params = a.flags.apply(DesignParams::desk());
    let bank = build_dictionaries(&Arc::new(set), a.method.into(), &params)?;
    save_dictionary(&bank.dictionary, Some(&bank.mix), &a.out)?;
    println!(
        "wrote {} {} filter sets (L = {}, J = {}) to {}",
        bank.dictionary.len(),
        Method::from(a.method).name(),
        bank.dictionary.num_loudspeakers(),
        params.filter_len,
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn parse_schemes(text: &str) -> Result<Vec<Scheme>> {
    if text == "all" {
        return Ok(Scheme::ALL.to_vec());
    }
    let mut out: Vec<Scheme> = Vec::new();
    for part in text.split(',') {
        let s: Scheme = part.trim().parse()?;
        if !out.contains(&s) {
            out.push(s);
        }
    }
    Ok(out)
}

fn parse_input(text: &str) -> InputSource {
    match text {
        "noise" => InputSource::Noise,
        "sweep" => InputSource::Sweep,
        path => InputSource::File { path: path.into() },
    }
}

fn run(a: RunArgs) -> Result<ExitCode> {
    let set = Arc::new(irset_or_desk(a.irset.as_deref())?);
    let schemes = parse_schemes(&a.scheme)?;
    let methods = match a.method {
        MethodChoice::Acc => vec![Method::Acc],
        MethodChoice::Pm => vec![Method::Pm],
        MethodChoice::Both => vec![Method::Acc, Method::Pm],
    };
    if a.dump_frames && a.case == CaseArg::Ii {
        return Err(Error::Validation("--dump-frames is only available for Case I".into()));
    }

    let mut results: Vec<RunResult> = Vec::new();
    for method in methods {
        let mut config = ExperimentConfig::desk(method);
        config.params = a.flags.apply(config.params);
        config.input = parse_input(&a.input);
        config.input_seed = a.seed;
        config.mc_iterations = a.mc;
        config.mc_seed = a.mc_seed;
        if let Some(t) = a.frames {
            config.total_frames = t;
        }
        if let Some(n) = a.frame_len {
            config.frame_len = n;
        }
        let result = match a.case {
            CaseArg::I => {
                let traj = if a.traj == "preset" {
                    desk_case_i_trajectory(config.total_frames)?
                } else {
                    let t = TrajectorySpec::load(Path::new(&a.traj))?;
                    config.total_frames = t.total_frames();
                    t
                };
                let exp = Experiment::prepare(config, Arc::clone(&set))?;
                run_case_i(&exp, &traj, &schemes, a.dump_frames)?
            }
            CaseArg::Ii => {
                config.dictionary_positions = Some(match &a.subset {
                    Some(v) => ids(v),
                    None => desk_subset(),
                });
                let exp = Experiment::prepare(config, Arc::clone(&set))?;
                run_case_ii(&exp, &schemes)?
            }
        };
        for s in &result.schemes {
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            println!(
                "{:>3} {:<9} mean TD AC {:7.2} dB  mean FD AC {:7.2} dB  mean TD nSDP {:7.2} dB",
                method.name(),
                s.scheme.name(),
                mean(&s.metrics.td_ac),
                mean(&s.metrics.fd_ac),
                mean(&s.metrics.td_nsdp)
            );
        }
        results.push(result);
    }
    emit_report(&results, &a.out)?;
    if a.dump_frames {
        dump_signals(&results, &a.out.join("signals"))?;
    }
    println!("report written to {}", a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn verify_all(a: VerifyArgs) -> Result<ExitCode> {
    let temp;
    let scratch = match &a.scratch {
        Some(p) => p.as_path(),
        None => {
            temp = std::env::temp_dir().join(format!("szc-verify-{}", std::process::id()));
            temp.as_path()
        }
    };
    let checks = verify::run_all(scratch)?;
    if a.scratch.is_none() {
        let _ = std::fs::remove_dir_all(scratch);
    }
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
