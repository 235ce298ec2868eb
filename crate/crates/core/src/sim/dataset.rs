//! Demonstration datasets: a `manifest.json` plus one `ep_<i>.bin` per
//! episode.
//!
//! Episode file layout, all integers and floats little-endian:
//!
//! ```text
//! "EQB1"
//! u32 T            steps
//! u32 obs_len      values per frame (visual, then proprio)
//! u32 act_len      values per action chunk
//! f32[T·obs_len]   one frame per step
//! f32[T·act_len]   expert chunk per step
//! u8               success flag
//! ```
//!
//! A step's observation history is rebuilt from consecutive frames, with the
//! first frame repeated before the episode start.

use std::fs;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::symmetry::{
    arm_dim, ActionChunk, ActionMode, ArmBlock, Bimanual, Frame, ImageGrid, Modality, Observation, PointCloud,
};

use super::{Arm, SideFilter, SimConfig, Simulator, TaskId, TaskSpec, WorldState};

pub const MAGIC: &[u8; 4] = b"EQB1";
pub const FORMAT_VERSION: u32 = 1;

/// Shapes shared by every frame and chunk of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub modality: Modality,
    pub action_mode: ActionMode,
    /// `[width, height, channels]`; meaningful for images only.
    pub image: [usize; 3],
    /// Meaningful for point clouds only.
    pub n_points: usize,
    pub arm_dof: usize,
    pub history: usize,
    pub horizon: usize,
}

impl Layout {
    pub fn new(cfg: &SimConfig, arm_dof: usize) -> Self {
        Self {
            modality: cfg.modality,
            action_mode: cfg.action_mode,
            image: [cfg.image_size, cfg.image_size, 1],
            n_points: cfg.n_points,
            arm_dof,
            history: cfg.history,
            horizon: cfg.horizon,
        }
    }

    /// Default simulator settings producing this layout.
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            modality: self.modality,
            action_mode: self.action_mode,
            image_size: self.image[0],
            n_points: self.n_points,
            history: self.history,
            horizon: self.horizon,
            ..SimConfig::default()
        }
    }

    pub fn visual_len(&self) -> usize {
        match self.modality {
            Modality::Image => self.image[0] * self.image[1] * self.image[2],
            Modality::PointCloud => 3 * self.n_points,
        }
    }

    pub fn step_len(&self) -> usize {
        2 * arm_dim(self.action_mode, self.arm_dof)
    }

    pub fn proprio_len(&self) -> usize {
        self.step_len()
    }

    pub fn obs_len(&self) -> usize {
        self.visual_len() + self.proprio_len()
    }

    pub fn act_len(&self) -> usize {
        self.horizon * self.step_len()
    }

    pub fn encode_frame(&self, f: &Frame) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.obs_len());
        match (self.modality, &f.image, &f.cloud) {
            (Modality::Image, Some(img), None) => {
                if [img.width, img.height, img.channels] != self.image {
                    return Err(Error::ShapeMismatch("image size differs from layout".into()));
                }
                out.extend_from_slice(&img.data);
            }
            (Modality::PointCloud, None, Some(pc)) => {
                if pc.points.len() != self.n_points {
                    return Err(Error::ShapeMismatch("point count differs from layout".into()));
                }
                out.extend(pc.points.iter().flat_map(|p| p.to_array()));
            }
            _ => return Err(Error::ModeMismatch("frame modality differs from layout".into())),
        }
        if f.proprio.mode()? != self.action_mode || f.proprio.dim() != self.proprio_len() {
            return Err(Error::ModeMismatch("proprio differs from layout".into()));
        }
        f.proprio.encode_into(&mut out);
        Ok(out)
    }

    pub fn decode_frame(&self, v: &[f64]) -> Result<Frame> {
        if v.len() != self.obs_len() {
            return Err(Error::ShapeMismatch(format!(
                "frame needs {} values, got {}",
                self.obs_len(),
                v.len()
            )));
        }
        let (visual, proprio) = v.split_at(self.visual_len());
        let (image, cloud) = match self.modality {
            Modality::Image => {
                let [w, h, c] = self.image;
                (Some(ImageGrid::new(w, h, c, visual.to_vec())?), None)
            }
            Modality::PointCloud => (
                None,
                Some(PointCloud::new(
                    visual.chunks(3).map(|p| Vec3::new(p[0], p[1], p[2])).collect(),
                )),
            ),
        };
        Ok(Frame {
            image,
            cloud,
            proprio: Bimanual::decode(self.action_mode, self.arm_dof, proprio)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub task: TaskId,
    pub side: SideFilter,
    pub modality: Modality,
    pub action_mode: ActionMode,
    pub m: usize,
    pub n: usize,
    pub layout: Layout,
    pub obs_len: usize,
    pub act_len: usize,
    pub count: usize,
    pub generator_seed: u64,
    pub episode_seeds: Vec<u64>,
}

/// One recorded episode, stored exactly as written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub obs_len: usize,
    pub act_len: usize,
    /// `T · obs_len` frame values.
    pub observations: Vec<f32>,
    /// `T · act_len` chunk values.
    pub actions: Vec<f32>,
    pub success: bool,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        if self.obs_len == 0 {
            0
        } else {
            self.observations.len() / self.obs_len
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame_values(&self, t: usize) -> Vec<f64> {
        self.observations[t * self.obs_len..(t + 1) * self.obs_len]
            .iter()
            .map(|&v| f64::from(v))
            .collect()
    }

    pub fn action_values(&self, t: usize) -> Vec<f64> {
        self.actions[t * self.act_len..(t + 1) * self.act_len]
            .iter()
            .map(|&v| f64::from(v))
            .collect()
    }

    /// History of `layout.history` frames ending at step `t`.
    pub fn observation(&self, layout: &Layout, t: usize) -> Result<Observation> {
        let frames = (0..layout.history)
            .map(|k| {
                let idx = (t + k + 1).saturating_sub(layout.history);
                layout.decode_frame(&self.frame_values(idx))
            })
            .collect::<Result<_>>()?;
        Ok(Observation { frames })
    }

    pub fn action_chunk(&self, layout: &Layout, t: usize) -> Result<ActionChunk> {
        ActionChunk::decode(layout.action_mode, layout.arm_dof, layout.horizon, &self.action_values(t))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(17 + 4 * (self.observations.len() + self.actions.len()));
        out.extend_from_slice(MAGIC);
        for v in [self.len(), self.obs_len, self.act_len] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in self.observations.iter().chain(&self.actions) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(u8::from(self.success));
        out
    }

    pub fn from_bytes(bytes: &[u8], seed: u64) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing episode magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let (t, obs_len, act_len) = (word(0), word(1), word(2));
        let n_obs = t * obs_len;
        let n_act = t * act_len;
        let expected = 16 + 4 * (n_obs + n_act) + 1;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "episode file has {} bytes, header implies {expected}",
                bytes.len()
            )));
        }
        let floats = |start: usize, count: usize| -> Vec<f32> {
            bytes[start..start + 4 * count]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect()
        };
        let success = match bytes[expected - 1] {
            0 => false,
            1 => true,
            b => return Err(Error::Format(format!("invalid success flag {b}"))),
        };
        Ok(Self {
            seed,
            obs_len,
            act_len,
            observations: floats(16, n_obs),
            actions: floats(16 + 4 * n_obs, n_act),
            success,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub episodes: Vec<EpisodeRecord>,
}

impl Dataset {
    pub fn layout(&self) -> Layout {
        self.manifest.layout
    }

    /// Total `(episode, step)` samples.
    pub fn n_samples(&self) -> usize {
        self.episodes.iter().map(EpisodeRecord::len).sum()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (i, ep) in self.episodes.iter().enumerate() {
            fs::write(dir.join(format!("ep_{i}.bin")), ep.to_bytes())?;
        }
        let mut json = serde_json::to_string_pretty(&self.manifest)?;
        json.push('\n');
        fs::write(dir.join("manifest.json"), json)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported dataset format version {}",
                manifest.format_version
            )));
        }
        if manifest.episode_seeds.len() != manifest.count {
            return Err(Error::Format("manifest seed list does not match count".into()));
        }
        let episodes = (0..manifest.count)
            .map(|i| {
                let ep = EpisodeRecord::from_bytes(
                    &fs::read(dir.join(format!("ep_{i}.bin")))?,
                    manifest.episode_seeds[i],
                )?;
                if ep.obs_len != manifest.obs_len || ep.act_len != manifest.act_len {
                    return Err(Error::Format(format!("episode {i} shape differs from manifest")));
                }
                Ok(ep)
            })
            .collect::<Result<_>>()?;
        Ok(Self { manifest, episodes })
    }
}

fn to_f32(v: &[f64]) -> impl Iterator<Item = f32> + '_ {
    v.iter().map(|&x| x as f32)
}

/// Half-width of the uniform joint noise added to executed expert commands
/// while recording, rad. Labels stay the clean expert chunks.
pub const DEMO_NOISE: f64 = 0.05;

fn perturb(sim: &Simulator, state: &WorldState, arm: Arm, block: &ArmBlock, rng: &mut ChaCha8Rng) -> Result<ArmBlock> {
    let q = sim
        .joint_target(state, arm, block)?
        .into_iter()
        .map(|v| v + rng.gen_range(-DEMO_NOISE..=DEMO_NOISE))
        .collect();
    Ok(ArmBlock::Joint {
        q,
        gripper: block.gripper(),
    })
}

/// Runs the scripted expert from `reset(task, seed)` and records every step.
/// Executed commands carry [`DEMO_NOISE`] so the demonstrations cover
/// recoveries from small deviations.
pub fn record_episode(sim: &Simulator, task: &TaskSpec, seed: u64) -> Result<EpisodeRecord> {
    let layout = Layout::new(&sim.cfg, sim.dof());
    let mut state = sim.reset(task, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut observations = Vec::new();
    let mut actions = Vec::new();
    while state.step < task.cap && !sim.success(&state, task) {
        observations.extend(to_f32(&layout.encode_frame(&sim.frame(&state))?));
        let chunk = sim.scripted_expert(&state, task)?;
        actions.extend(to_f32(&chunk.encode()));
        let cmd = Bimanual {
            left: perturb(sim, &state, Arm::Left, &chunk.steps[0].left, &mut rng)?,
            right: perturb(sim, &state, Arm::Right, &chunk.steps[0].right, &mut rng)?,
        };
        state = sim.step(&state, &cmd)?;
    }
    Ok(EpisodeRecord {
        seed,
        obs_len: layout.obs_len(),
        act_len: layout.act_len(),
        observations,
        actions,
        success: sim.success(&state, task),
    })
}

/// Records expert episodes until `count` succeed, trying at most `5·count`
/// episode seeds drawn from `seed`.
pub fn collect_demos(sim: &Simulator, task: &TaskSpec, count: usize, seed: u64) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::Config("demo count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..5 * count).map(|_| rng.next_u64()).collect();
    let mut kept = Vec::with_capacity(count);
    let mut tried = 0;
    while kept.len() < count && tried < seeds.len() {
        let batch = &seeds[tried..(tried + count - kept.len()).min(seeds.len())];
        tried += batch.len();
        let records: Vec<Result<EpisodeRecord>> =
            batch.par_iter().map(|&s| record_episode(sim, task, s)).collect();
        for r in records {
            let r = r?;
            if r.success && kept.len() < count {
                kept.push(r);
            }
        }
    }
    if kept.len() < count {
        return Err(Error::SuccessCollapse {
            kept: kept.len(),
            attempts: tried,
        });
    }
    let layout = Layout::new(&sim.cfg, sim.dof());
    Ok(Dataset {
        manifest: Manifest {
            format_version: FORMAT_VERSION,
            task: task.id,
            side: task.side,
            modality: layout.modality,
            action_mode: layout.action_mode,
            m: layout.history,
            n: layout.horizon,
            layout,
            obs_len: layout.obs_len(),
            act_len: layout.act_len(),
            count,
            generator_seed: seed,
            episode_seeds: kept.iter().map(|e| e.seed).collect(),
        },
        episodes: kept,
    })
}

/// [`collect_demos`], then writes the dataset to `dir`.
pub fn generate_demos(
    sim: &Simulator,
    task: &TaskSpec,
    count: usize,
    seed: u64,
    dir: &Path,
) -> Result<Dataset> {
    let ds = collect_demos(sim, task, count, seed)?;
    ds.save(dir)?;
    Ok(ds)
}
