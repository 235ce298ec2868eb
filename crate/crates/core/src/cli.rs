//! Command-line interface: dataset generation, training, evaluation,
//! experiment reports and symmetry checks.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::eval::{rollout_eval, run_experiment, ExperimentPlan};
use crate::geometry::{RigidTransform, UnitQuat, Vec3};
use crate::learn::{metrics_csv, train, Checkpoint, TrainConfig, TrainMode};
use crate::robot::{discover_joint_symmetry, load_robot, symmetry_certificate, DiscoveryConfig, RobotModel};
use crate::sim::dataset::{generate_demos, Dataset};
use crate::sim::{SideFilter, SimConfig, Simulator, TaskId, TaskSpec};
use crate::symmetry::{ActionMode, Modality};

#[derive(Debug, Parser)]
#[command(name = "equibim", version, about = "Bilateral-symmetry tools for bimanual imitation learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Record scripted-expert demonstrations into a dataset directory.
    Gen(GenArgs),
    /// Train a policy on a dataset and write a checkpoint plus metrics CSV.
    Train(TrainArgs),
    /// Closed-loop success rate of a checkpoint.
    Eval(EvalArgs),
    /// Run an experiment plan and write the report.
    Report(ReportArgs),
    /// Discover the joint mirror map of a URDF and certify it.
    CheckSymmetry(CheckArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, default_value = "pick_place")]
    task: TaskId,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value = "both")]
    side: SideFilter,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "image")]
    modality: Modality,
    #[arg(long, default_value = "joint")]
    action_mode: ActionMode,
    #[arg(long, default_value_t = SimConfig::default().image_size)]
    image_size: usize,
    #[arg(long, default_value_t = SimConfig::default().n_points)]
    n_points: usize,
    #[arg(long, default_value_t = SimConfig::default().history)]
    history: usize,
    #[arg(long, default_value_t = SimConfig::default().horizon)]
    horizon: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "equibim")]
    mode: TrainMode,
    /// Defaults to 1 in `equibim` mode and 0 otherwise.
    #[arg(long)]
    lambda_sym: Option<f64>,
    #[arg(long, default_value_t = TrainConfig::new(TrainMode::Baseline).epochs)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint path; the metrics CSV goes next to it with a `.csv` extension.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = TrainConfig::new(TrainMode::Baseline).lr)]
    lr: f64,
    #[arg(long, default_value_t = TrainConfig::new(TrainMode::Baseline).batch_size)]
    batch_size: usize,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "256,256")]
    hidden: Vec<usize>,
    #[arg(long)]
    cosine_decay: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value = "pick_place")]
    task: TaskId,
    #[arg(long, default_value_t = 50)]
    episodes: usize,
    #[arg(long, default_value = "both")]
    side: SideFilter,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// JSON experiment plan; omitted fields take their defaults.
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long)]
    urdf: PathBuf,
    /// World-to-plane transform as `x,y,z,roll,pitch,yaw`; the mirror plane is
    /// `y = 0` in the transformed coordinates.
    #[arg(long, default_value = "0,0,0,0,0,0")]
    plane: String,
    /// Defaults to the leaf link on the `+y` side of the plane.
    #[arg(long)]
    left_tip: Option<String>,
    /// Defaults to the leaf link on the `-y` side of the plane.
    #[arg(long)]
    right_tip: Option<String>,
    #[arg(long, default_value_t = 256)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Report(a) => report(a),
        Command::CheckSymmetry(a) => check_symmetry(a),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}\n\nFor more information, try '--help'.");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn usage(m: impl Into<String>) -> Failure {
    Failure::Usage(m.into())
}

fn gen(a: GenArgs) -> Outcome {
    if a.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let cfg = SimConfig {
        modality: a.modality,
        action_mode: a.action_mode,
        image_size: a.image_size,
        n_points: a.n_points,
        history: a.history,
        horizon: a.horizon,
        ..SimConfig::default()
    };
    let sim = Simulator::tabletop(cfg).map_err(|e| usage(e.to_string()))?;
    let ds = generate_demos(&sim, &TaskSpec::new(a.task, a.side), a.count, a.seed, &a.out)?;
    println!(
        "wrote {} episodes ({} samples) to {}",
        ds.episodes.len(),
        ds.n_samples(),
        a.out.display()
    );
    Ok(())
}

fn metrics_path(out: &Path) -> PathBuf {
    out.with_extension("csv")
}

fn train_cmd(a: TrainArgs) -> Outcome {
    let cfg = TrainConfig {
        lr: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        lambda_sym: a.lambda_sym.unwrap_or(a.mode.default_lambda()),
        seed: a.seed,
        hidden: a.hidden,
        cosine_decay: a.cosine_decay,
        ..TrainConfig::new(a.mode)
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let ds = Dataset::load(&a.data)?;
    let sim = Simulator::tabletop(ds.layout().sim_config())?;
    let out = train(&ds, &sim.symmetry, &cfg)?;
    Checkpoint::new(out.policy, &cfg, out.diverged).save(&a.out)?;
    let metrics = metrics_path(&a.out);
    std::fs::write(&metrics, metrics_csv(&out.metrics))?;
    if let Some(epoch) = out.diverged {
        eprintln!("warning: training diverged at epoch {epoch}; kept the last finite parameters");
    }
    if let Some(m) = out.metrics.last() {
        println!(
            "epochs {} bc_loss {:.6} sym_loss {:.6} grad_norm {:.6}",
            out.metrics.len(),
            m.bc_loss,
            m.sym_loss,
            m.grad_norm
        );
    }
    println!("checkpoint {}", a.out.display());
    println!("metrics {}", metrics.display());
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Outcome {
    if a.episodes == 0 {
        return Err(usage("--episodes must be at least 1"));
    }
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let sim = Simulator::tabletop(ckpt.policy.layout.sim_config())?;
    let task = TaskSpec::new(a.task, SideFilter::Both);
    let rate = rollout_eval(&sim, &ckpt.policy, &task, a.episodes, a.seed, a.side)?;
    println!(
        "task {} side {} episodes {} success_rate {rate}",
        a.task.as_str(),
        a.side.as_str(),
        a.episodes
    );
    Ok(())
}

fn report(a: ReportArgs) -> Outcome {
    let text = std::fs::read_to_string(&a.plan)?;
    let plan: ExperimentPlan = serde_json::from_str(&text).map_err(|e| usage(format!("invalid plan: {e}")))?;
    plan.validate().map_err(|e| usage(e.to_string()))?;
    let report = run_experiment(&plan, Some(&a.out))?;
    println!("config,mode,eval_side,n_seeds,success_mean,success_std,equiv_mean");
    for s in &report.summary {
        println!(
            "{},{},{},{},{:.4},{:.4},{:.6}",
            s.config,
            s.mode.as_str(),
            s.eval_side.as_str(),
            s.n_seeds,
            s.success_mean,
            s.success_std,
            s.equiv_mean
        );
    }
    for f in &report.failures {
        eprintln!("failed: {f}");
    }
    println!("report written to {}", a.out.display());
    Ok(())
}

fn parse_plane(s: &str) -> std::result::Result<RigidTransform, Failure> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage(format!("--plane expects six numbers `x,y,z,roll,pitch,yaw`, got `{s}`")))?;
    if v.len() != 6 || v.iter().any(|x| !x.is_finite()) {
        return Err(usage(format!("--plane expects six numbers `x,y,z,roll,pitch,yaw`, got `{s}`")));
    }
    Ok(RigidTransform::new(UnitQuat::from_rpy(v[3], v[4], v[5]), Vec3::new(v[0], v[1], v[2])))
}

/// The two leaf links, ordered `+y` first in the plane frame.
fn default_tips(model: &RobotModel, plane: &RigidTransform) -> crate::error::Result<(String, String)> {
    let leaves: Vec<&str> = model
        .links
        .iter()
        .map(|l| l.name.as_str())
        .filter(|n| !model.joints.iter().any(|j| j.parent == *n))
        .collect();
    if leaves.len() != 2 {
        return Err(Error::Structure(format!(
            "expected two leaf links, found {}; pass --left-tip and --right-tip",
            leaves.len()
        )));
    }
    let zero = crate::robot::JointVector::zeros(model.n_actuated());
    let y = |link: &str| -> crate::error::Result<f64> {
        let p = crate::robot::forward_kinematics(model, &zero, link)?.position;
        Ok(plane.apply(p).y)
    };
    let (a, b) = (leaves[0].to_string(), leaves[1].to_string());
    if y(&a)? >= y(&b)? {
        Ok((a, b))
    } else {
        Ok((b, a))
    }
}

fn check_symmetry(a: CheckArgs) -> Outcome {
    let plane = parse_plane(&a.plane)?;
    if a.samples < 16 {
        return Err(usage("--samples must be at least 16"));
    }
    let model = load_robot(&a.urdf)?;
    let (left, right) = match (a.left_tip, a.right_tip) {
        (Some(l), Some(r)) => (l, r),
        (None, None) => default_tips(&model, &plane)?,
        _ => return Err(usage("pass both --left-tip and --right-tip, or neither")),
    };
    let cfg = DiscoveryConfig {
        samples: a.samples,
        seed: a.seed,
        ..DiscoveryConfig::default()
    };
    let map = discover_joint_symmetry(&model, &left, &right, &plane, &cfg)?;
    let cert = symmetry_certificate(&model, &map, &left, &right, &plane, a.samples, a.seed.wrapping_add(1))?;
    let names: Vec<&str> = model.actuated_joints().map(|j| j.name.as_str()).collect();
    println!("robot {} tips {left} {right}", model.name);
    println!("joint,partner,sign");
    for (i, name) in names.iter().enumerate() {
        println!("{name},{},{:+}", names[map.partner[i]], map.signs[i]);
    }
    println!(
        "certificate samples {} max_position_error {:.3e} max_orientation_error {:.3e} residual {:.3e}",
        cert.samples,
        cert.max_position_error,
        cert.max_orientation_error,
        cert.max_error()
    );
    Ok(())
}
