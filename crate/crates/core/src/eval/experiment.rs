//! Experiment grids: demos, training and evaluation per cell, then a CSV
//! report, a per-group summary and bar charts.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::{train, TrainConfig, TrainMode};
use crate::sim::dataset::collect_demos;
use crate::sim::{SideFilter, SimConfig, Simulator, TaskId, TaskSpec};
use crate::symmetry::{ActionMode, Modality};

use super::svg::bar_chart;
use super::{equivariance_error, heldout_observations, rollout_eval};

/// One observation/action configuration, serialized as `modality_mode`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CellConfig {
    pub modality: Modality,
    pub action_mode: ActionMode,
}

impl CellConfig {
    pub const ALL: [CellConfig; 4] = [
        CellConfig {
            modality: Modality::Image,
            action_mode: ActionMode::Joint,
        },
        CellConfig {
            modality: Modality::Image,
            action_mode: ActionMode::Ee,
        },
        CellConfig {
            modality: Modality::PointCloud,
            action_mode: ActionMode::Joint,
        },
        CellConfig {
            modality: Modality::PointCloud,
            action_mode: ActionMode::Ee,
        },
    ];

    pub fn name(&self) -> String {
        format!("{}_{}", self.modality.as_str(), self.action_mode.as_str())
    }
}

impl std::str::FromStr for CellConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown configuration `{s}`")))
    }
}

impl TryFrom<String> for CellConfig {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CellConfig> for String {
    fn from(c: CellConfig) -> String {
        c.name()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub task: TaskId,
    pub configs: Vec<CellConfig>,
    pub modes: Vec<TrainMode>,
    pub seeds: Vec<u64>,
    pub n_demos: usize,
    pub n_eval: usize,
    pub train_side: SideFilter,
    /// Empty means `both` plus the split mirroring `train_side`.
    pub eval_sides: Vec<SideFilter>,
    /// Symmetry weight in `equibim` mode; other modes use their defaults.
    pub lambda_sym: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub cosine_decay: bool,
    pub hidden: Vec<usize>,
    pub image_size: usize,
    pub n_points: usize,
    pub history: usize,
    pub horizon: usize,
    /// Held-out observations for the equivariance error.
    pub n_heldout: usize,
    /// Fill `wall_clock_s`; timings make the CSV non-reproducible.
    pub record_wall_clock: bool,
    /// Worker threads; `EQUIBIM_WORKERS` takes precedence.
    pub workers: Option<usize>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        let sim = SimConfig::default();
        let train = TrainConfig::new(TrainMode::Equibim);
        Self {
            task: TaskId::PickPlace,
            configs: CellConfig::ALL.to_vec(),
            modes: TrainMode::ALL.to_vec(),
            seeds: (0..5).collect(),
            n_demos: 50,
            n_eval: 50,
            train_side: SideFilter::Both,
            eval_sides: Vec::new(),
            lambda_sym: train.lambda_sym,
            epochs: train.epochs,
            batch_size: train.batch_size,
            lr: train.lr,
            cosine_decay: train.cosine_decay,
            hidden: train.hidden,
            image_size: sim.image_size,
            n_points: sim.n_points,
            history: sim.history,
            horizon: sim.horizon,
            n_heldout: 100,
            record_wall_clock: false,
            workers: None,
        }
    }
}

/// Demo seeds come from stream `2·seed`, evaluation seeds from `2·seed + 1`.
pub fn demo_stream(seed: u64) -> u64 {
    seed.wrapping_mul(2)
}

pub fn eval_stream(seed: u64) -> u64 {
    seed.wrapping_mul(2).wrapping_add(1)
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.configs.is_empty() || self.modes.is_empty() || self.seeds.is_empty() {
            return bad("plan needs at least one config, mode and seed");
        }
        if self.n_demos == 0 || self.n_eval == 0 || self.n_heldout == 0 {
            return bad("demo, evaluation and held-out counts must be positive");
        }
        if self.image_size == 0 || self.n_points == 0 || self.history == 0 || self.horizon == 0 {
            return bad("observation and chunk sizes must be positive");
        }
        if self.workers == Some(0) {
            return bad("worker count must be positive");
        }
        for mode in &self.modes {
            self.train_config(*mode, 0).validate()?;
        }
        Ok(())
    }

    pub fn eval_sides(&self) -> Vec<SideFilter> {
        if !self.eval_sides.is_empty() {
            return self.eval_sides.clone();
        }
        let mirrored = match self.train_side {
            SideFilter::Both => SideFilter::Right,
            s => s.mirrored(),
        };
        vec![SideFilter::Both, mirrored]
    }

    pub fn sim_config(&self, cell: CellConfig) -> SimConfig {
        SimConfig {
            modality: cell.modality,
            action_mode: cell.action_mode,
            image_size: self.image_size,
            n_points: self.n_points,
            history: self.history,
            horizon: self.horizon,
            ..SimConfig::default()
        }
    }

    pub fn train_config(&self, mode: TrainMode, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            cosine_decay: self.cosine_decay,
            batch_size: self.batch_size,
            epochs: self.epochs,
            lambda_sym: if mode == TrainMode::Equibim {
                self.lambda_sym
            } else {
                mode.default_lambda()
            },
            seed,
            hidden: self.hidden.clone(),
            ..TrainConfig::new(mode)
        }
    }

    fn worker_count(&self) -> Result<Option<usize>> {
        match std::env::var("EQUIBIM_WORKERS") {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(Some(n)),
                _ => Err(Error::Config(format!("EQUIBIM_WORKERS must be a positive integer, got `{v}`"))),
            },
            Err(_) => Ok(self.workers),
        }
    }
}

/// One report line: a trained policy evaluated on one side split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub config: String,
    pub mode: TrainMode,
    pub lambda_sym: f64,
    pub seed: u64,
    pub train_side: SideFilter,
    pub eval_side: SideFilter,
    pub n_episodes: usize,
    pub success_rate: Option<f64>,
    pub equiv_error: Option<f64>,
    pub wall_clock_s: Option<f64>,
}

pub const REPORT_HEADER: &str =
    "config,mode,lambda_sym,seed,train_side,eval_side,n_episodes,success_rate,equiv_error,wall_clock_s";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl CellRow {
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.config,
            self.mode.as_str(),
            self.lambda_sym,
            self.seed,
            self.train_side.as_str(),
            self.eval_side.as_str(),
            self.n_episodes,
            opt(self.success_rate),
            opt(self.equiv_error),
            opt(self.wall_clock_s)
        )
    }
}

pub fn report_csv(rows: &[CellRow]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    out
}

/// Parses a report written by [`run_experiment`].
pub fn parse_report_csv(text: &str) -> Result<Vec<CellRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_HEADER) {
        return Err(Error::Format("report header mismatch".into()));
    }
    let num = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| Error::Format(format!("bad number `{s}`")))
        }
    };
    let int = |s: &str| s.parse().map_err(|_| Error::Format(format!("bad integer `{s}`")));
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 10 {
                return Err(Error::Format(format!("report row has {} fields", f.len())));
            }
            Ok(CellRow {
                config: f[0].to_string(),
                mode: f[1].parse()?,
                lambda_sym: num(f[2])?.unwrap_or(0.0),
                seed: int(f[3])?,
                train_side: f[4].parse()?,
                eval_side: f[5].parse()?,
                n_episodes: int(f[6])? as usize,
                success_rate: num(f[7])?,
                equiv_error: num(f[8])?,
                wall_clock_s: num(f[9])?,
            })
        })
        .collect()
}

/// Mean and sample standard deviation over seeds of one
/// `(config, mode, eval_side)` group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub config: String,
    pub mode: TrainMode,
    pub eval_side: SideFilter,
    pub n_seeds: usize,
    pub success_mean: f64,
    pub success_std: f64,
    pub equiv_mean: f64,
    pub equiv_std: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Groups rows in first-appearance order, skipping failed cells.
pub fn aggregate(rows: &[CellRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, TrainMode, SideFilter)> = Vec::new();
    for r in rows {
        let k = (r.config.clone(), r.mode, r.eval_side);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(config, mode, eval_side)| {
            let group: Vec<&CellRow> = rows
                .iter()
                .filter(|r| r.config == config && r.mode == mode && r.eval_side == eval_side)
                .filter(|r| r.success_rate.is_some())
                .collect();
            let succ: Vec<f64> = group.iter().filter_map(|r| r.success_rate).collect();
            let eq: Vec<f64> = group.iter().filter_map(|r| r.equiv_error).collect();
            let (success_mean, success_std) = mean_std(&succ);
            let (equiv_mean, equiv_std) = mean_std(&eq);
            SummaryRow {
                config,
                mode,
                eval_side,
                n_seeds: group.len(),
                success_mean,
                success_std,
                equiv_mean,
                equiv_std,
            }
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out =
        String::from("config,mode,eval_side,n_seeds,success_mean,success_std,equiv_mean,equiv_std\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.config,
            r.mode.as_str(),
            r.eval_side.as_str(),
            r.n_seeds,
            r.success_mean,
            r.success_std,
            r.equiv_mean,
            r.equiv_std
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub plan: ExperimentPlan,
    pub rows: Vec<CellRow>,
    pub summary: Vec<SummaryRow>,
    /// `cell: message` for every cell that failed or diverged.
    pub failures: Vec<String>,
    pub wall_clock_s: f64,
}

impl EvalReport {
    pub fn csv(&self) -> String {
        report_csv(&self.rows)
    }

    /// Mean success of `(config, mode)` on `side`, if that group exists.
    pub fn success_mean(&self, config: &str, mode: TrainMode, side: SideFilter) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.config == config && r.mode == mode && r.eval_side == side)
            .map(|r| r.success_mean)
    }

    /// Per-seed rows of one group, in seed order of the plan.
    pub fn group(&self, config: &str, mode: TrainMode, side: SideFilter) -> Vec<&CellRow> {
        self.rows
            .iter()
            .filter(|r| r.config == config && r.mode == mode && r.eval_side == side)
            .collect()
    }

    fn charts(&self) -> Vec<(String, String)> {
        let configs: Vec<String> = self.plan.configs.iter().map(CellConfig::name).collect();
        let modes: Vec<String> = self.plan.modes.iter().map(|m| m.as_str().to_string()).collect();
        let lookup = |config: &str, mode: TrainMode, side: SideFilter, f: fn(&SummaryRow) -> f64| {
            self.summary
                .iter()
                .find(|r| r.config == config && r.mode == mode && r.eval_side == side)
                .map(f)
                .unwrap_or(f64::NAN)
        };
        let mut out = Vec::new();
        let sides = self.plan.eval_sides();
        for side in &sides {
            let values: Vec<Vec<f64>> = self
                .plan
                .modes
                .iter()
                .map(|m| configs.iter().map(|c| lookup(c, *m, *side, |r| r.success_mean)).collect())
                .collect();
            let title = format!("{} success, eval side {}", self.plan.task.as_str(), side.as_str());
            out.push((
                format!("success_{}.svg", side.as_str()),
                bar_chart(&title, "success rate", &configs, &modes, &values, Some(1.0)),
            ));
        }
        let values: Vec<Vec<f64>> = self
            .plan
            .modes
            .iter()
            .map(|m| configs.iter().map(|c| lookup(c, *m, sides[0], |r| r.equiv_mean)).collect())
            .collect();
        out.push((
            "equivariance.svg".to_string(),
            bar_chart("held-out equivariance error", "mean chunk distance", &configs, &modes, &values, None),
        ));
        out
    }

    /// Writes `report.csv`, `summary.csv`, `plan.json` and the charts.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.csv"), self.csv())?;
        std::fs::write(dir.join("summary.csv"), summary_csv(&self.summary))?;
        std::fs::write(dir.join("plan.json"), serde_json::to_string_pretty(&self.plan)? + "\n")?;
        for (name, svg) in self.charts() {
            std::fs::write(dir.join(name), svg)?;
        }
        Ok(())
    }
}

struct UnitResult {
    rows: Vec<CellRow>,
    failures: Vec<String>,
}

/// Demos, training and evaluation for one `(config, seed)` pair, every mode.
fn run_unit(plan: &ExperimentPlan, cell: CellConfig, seed: u64) -> UnitResult {
    let sides = plan.eval_sides();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let failed_rows = |mode: TrainMode, rows: &mut Vec<CellRow>| {
        for side in &sides {
            rows.push(CellRow {
                config: cell.name(),
                mode,
                lambda_sym: plan.train_config(mode, seed).lambda_sym,
                seed,
                train_side: plan.train_side,
                eval_side: *side,
                n_episodes: plan.n_eval,
                success_rate: None,
                equiv_error: None,
                wall_clock_s: None,
            });
        }
    };
    let setup = (|| {
        let sim = Simulator::tabletop(plan.sim_config(cell))?;
        let ds = collect_demos(&sim, &TaskSpec::new(plan.task, plan.train_side), plan.n_demos, demo_stream(seed))?;
        let heldout = heldout_observations(
            &sim,
            &TaskSpec::new(plan.task, SideFilter::Both),
            plan.n_heldout,
            3,
            eval_stream(seed),
        )?;
        Ok::<_, Error>((sim, ds, heldout))
    })();
    let (sim, ds, heldout) = match setup {
        Ok(v) => v,
        Err(e) => {
            failures.push(format!("{} seed {seed}: {e}", cell.name()));
            for mode in &plan.modes {
                failed_rows(*mode, &mut rows);
            }
            return UnitResult { rows, failures };
        }
    };
    for &mode in &plan.modes {
        let start = Instant::now();
        let cfg = plan.train_config(mode, seed);
        let result = (|| {
            let out = train(&ds, &sim.symmetry, &cfg)?;
            if let Some(epoch) = out.diverged {
                failures.push(format!(
                    "{} {} seed {seed}: diverged at epoch {epoch}",
                    cell.name(),
                    mode.as_str()
                ));
            }
            let equiv = equivariance_error(&out.policy, &heldout, &sim.symmetry)?;
            let task = TaskSpec::new(plan.task, SideFilter::Both);
            let rates = sides
                .iter()
                .map(|side| rollout_eval(&sim, &out.policy, &task, plan.n_eval, eval_stream(seed), *side))
                .collect::<Result<Vec<f64>>>()?;
            Ok::<_, Error>((equiv, rates))
        })();
        match result {
            Ok((equiv, rates)) => {
                let elapsed = start.elapsed().as_secs_f64();
                for (side, rate) in sides.iter().zip(rates) {
                    rows.push(CellRow {
                        config: cell.name(),
                        mode,
                        lambda_sym: cfg.lambda_sym,
                        seed,
                        train_side: plan.train_side,
                        eval_side: *side,
                        n_episodes: plan.n_eval,
                        success_rate: Some(rate),
                        equiv_error: Some(equiv),
                        wall_clock_s: plan.record_wall_clock.then_some(elapsed),
                    });
                }
            }
            Err(e) => {
                failures.push(format!("{} {} seed {seed}: {e}", cell.name(), mode.as_str()));
                failed_rows(mode, &mut rows);
            }
        }
    }
    UnitResult { rows, failures }
}

/// Runs every cell of `plan`, in parallel across `(config, seed)` pairs,
/// and writes the artifacts to `out` when given. Cell failures are recorded
/// in the report rather than aborting the run.
pub fn run_experiment(plan: &ExperimentPlan, out: Option<&Path>) -> Result<EvalReport> {
    plan.validate()?;
    let start = Instant::now();
    let units: Vec<(CellConfig, u64)> = plan
        .configs
        .iter()
        .flat_map(|c| plan.seeds.iter().map(move |s| (*c, *s)))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = plan.worker_count()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    let results: Vec<UnitResult> =
        pool.install(|| units.par_iter().map(|(c, s)| run_unit(plan, *c, *s)).collect());
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        rows.extend(r.rows);
        failures.extend(r.failures);
    }
    let summary = aggregate(&rows);
    let report = EvalReport {
        plan: plan.clone(),
        rows,
        summary,
        failures,
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    if let Some(dir) = out {
        report.write(dir)?;
    }
    Ok(report)
}
