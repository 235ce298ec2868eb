//! Closed-loop rollouts, equivariance metrics, experiment grids and reports.

mod experiment;
mod svg;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::learn::Policy;
use crate::sim::dataset::{record_episode, Layout};
use crate::sim::{Controller, SideFilter, Simulator, TaskSpec, WorldState};
use crate::symmetry::{chunk_distance, Bimanual, Observation, SymmetryOp};

pub use experiment::{
    aggregate, parse_report_csv, run_experiment, CellConfig, CellRow, EvalReport, ExperimentPlan,
    SummaryRow, REPORT_HEADER,
};
pub use svg::bar_chart;

/// Executes the first step of each predicted chunk.
#[derive(Debug, Clone, Copy)]
pub struct PolicyController<'a> {
    pub policy: &'a Policy,
}

impl Controller for PolicyController<'_> {
    fn act(&mut self, _sim: &Simulator, _state: &WorldState, obs: &Observation) -> Result<Bimanual> {
        let chunk = self.policy.act(obs)?;
        Ok(chunk.steps.into_iter().next().expect("horizon is positive"))
    }
}

/// `count` episode seeds drawn from `seed`.
pub fn episode_seeds(count: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.next_u64()).collect()
}

/// Success flag of each episode started from `starts`. Episodes run in
/// parallel; each gets a fresh controller from `make`.
pub fn episode_outcomes<C, F>(
    sim: &Simulator,
    task: &TaskSpec,
    starts: &[WorldState],
    make: F,
) -> Result<Vec<bool>>
where
    C: Controller,
    F: Fn() -> C + Sync,
{
    starts
        .par_iter()
        .map(|s| {
            let mut c = make();
            Ok(sim.rollout(task, s.clone(), &mut c)?.success)
        })
        .collect()
}

/// Fraction of `n_episodes` successful episodes, with initial states drawn
/// from `seed` under `task.side`.
pub fn success_rate<C, F>(sim: &Simulator, task: &TaskSpec, n_episodes: usize, seed: u64, make: F) -> Result<f64>
where
    C: Controller,
    F: Fn() -> C + Sync,
{
    if n_episodes == 0 {
        return Err(Error::Config("at least one episode is required".into()));
    }
    let starts: Vec<WorldState> = episode_seeds(n_episodes, seed)
        .into_iter()
        .map(|s| sim.reset(task, s))
        .collect();
    let wins = episode_outcomes(sim, task, &starts, make)?.into_iter().filter(|w| *w).count();
    Ok(wins as f64 / n_episodes as f64)
}

fn check_layout(sim: &Simulator, policy: &Policy) -> Result<()> {
    if Layout::new(&sim.cfg, sim.dof()) != policy.layout {
        return Err(Error::ModeMismatch(
            "policy layout differs from the simulator configuration".into(),
        ));
    }
    Ok(())
}

/// Receding-horizon success rate of `policy` on `task` restricted to `side`.
pub fn rollout_eval(
    sim: &Simulator,
    policy: &Policy,
    task: &TaskSpec,
    n_episodes: usize,
    seed: u64,
    side: SideFilter,
) -> Result<f64> {
    check_layout(sim, policy)?;
    let task = TaskSpec { side, ..*task };
    success_rate(sim, &task, n_episodes, seed, || PolicyController { policy })
}

/// Mean over `observations` of `chunk_distance(π(S(O)), S(π(O)))`.
pub fn equivariance_error(policy: &Policy, observations: &[Observation], op: &SymmetryOp) -> Result<f64> {
    if observations.is_empty() {
        return Err(Error::Config("observation set is empty".into()));
    }
    let op = op.with_modes(policy.layout.modality, policy.layout.action_mode);
    let mut total = 0.0;
    for o in observations {
        let direct = policy.act(&op.transform_observation(o)?)?;
        let mirrored = op.transform_action_chunk(&policy.act(o)?)?;
        total += chunk_distance(&direct, &mirrored)?;
    }
    Ok(total / observations.len() as f64)
}

/// Observations along expert episodes from seeds drawn from `seed`, every
/// `stride`-th step, until `count` are collected.
pub fn heldout_observations(
    sim: &Simulator,
    task: &TaskSpec,
    count: usize,
    stride: usize,
    seed: u64,
) -> Result<Vec<Observation>> {
    let layout = Layout::new(&sim.cfg, sim.dof());
    let stride = stride.max(1);
    let mut out = Vec::with_capacity(count);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while out.len() < count {
        let ep = record_episode(sim, task, rng.next_u64())?;
        if ep.is_empty() {
            continue;
        }
        for t in (0..ep.len()).step_by(stride) {
            if out.len() == count {
                break;
            }
            out.push(ep.observation(&layout, t)?);
        }
    }
    Ok(out)
}
