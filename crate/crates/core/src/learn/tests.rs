use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::sim::dataset::{collect_demos, Layout};
use crate::sim::{SideFilter, SimConfig, Simulator, TaskId, TaskSpec, WorldState};
use crate::symmetry::{
    chunk_distance, ActionChunk, ActionMode, ArmBlock, Bimanual, Frame, ImageGrid, Modality,
    Observation, SymmetryOp,
};

fn small_sim(modality: Modality, mode: ActionMode) -> Simulator {
    Simulator::tabletop(SimConfig {
        modality,
        action_mode: mode,
        image_size: 8,
        n_points: 16,
        history: 2,
        horizon: 3,
        ..SimConfig::default()
    })
    .unwrap()
}

fn layout(sim: &Simulator) -> Layout {
    Layout::new(&sim.cfg, sim.dof())
}

fn observation(sim: &Simulator, states: &[WorldState]) -> Observation {
    Observation {
        frames: states.iter().map(|s| sim.frame(s)).collect(),
    }
}

/// Observations from mid-episode expert states.
fn observations(sim: &Simulator, count: usize, seed: u64) -> Vec<Observation> {
    let task = TaskSpec::new(TaskId::PickPlace, SideFilter::Both);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut s = sim.reset(&task, rng.gen());
            for _ in 0..rng.gen_range(0..30) {
                s = sim.step(&s, &sim.expert_command(&s, &task)).unwrap();
            }
            let next = sim.step(&s, &sim.expert_command(&s, &task)).unwrap();
            observation(sim, &[s, next])
        })
        .collect()
}

fn random_batch(policy: &Policy, ctx: &SymContext, sim: &Simulator, rows: usize, seed: u64) -> Batch {
    let obs = observations(sim, rows, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    let mut x = Array2::zeros((rows, policy.input_dim()));
    for (i, o) in obs.iter().enumerate() {
        let f = featurize(&policy.layout, o).unwrap();
        x.row_mut(i).assign(&ndarray::ArrayView1::from(&f));
    }
    let y = Array2::from_shape_fn((rows, policy.output_dim()), |_| rng.gen_range(-1.0..1.0));
    Batch::new(ctx, x, y, true).unwrap()
}

fn all_configs() -> Vec<(Modality, ActionMode)> {
    let mut out = Vec::new();
    for m in [Modality::Image, Modality::PointCloud] {
        for a in [ActionMode::Joint, ActionMode::Ee] {
            out.push((m, a));
        }
    }
    out
}

#[test]
fn featurize_length_follows_layout() {
    let l = Layout {
        modality: Modality::Image,
        action_mode: ActionMode::Joint,
        image: [64, 64, 1],
        n_points: 0,
        arm_dof: 4,
        history: 2,
        horizon: 8,
    };
    assert_eq!(Policy::input_len(&l), 8212);
    let proprio = Bimanual {
        left: ArmBlock::Joint {
            q: vec![0.0; 4],
            gripper: 0.0,
        },
        right: ArmBlock::Joint {
            q: vec![0.0; 4],
            gripper: 0.0,
        },
    };
    let frame = Frame {
        image: Some(ImageGrid::zeros(64, 64, 1)),
        cloud: None,
        proprio,
    };
    let o = Observation {
        frames: vec![frame.clone(), frame],
    };
    let f = featurize(&l, &o).unwrap();
    assert_eq!(f.len(), 8212);
    assert!(f.iter().all(|v| *v == 0.0));
}

#[test]
fn featurize_rejects_wrong_modality_and_history() {
    let sim = small_sim(Modality::Image, ActionMode::Joint);
    let o = observations(&sim, 1, 0).remove(0);
    let pc = layout(&small_sim(Modality::PointCloud, ActionMode::Joint));
    assert!(featurize(&pc, &o).is_err());
    let short = Observation {
        frames: o.frames[..1].to_vec(),
    };
    assert!(featurize(&layout(&sim), &short).is_err());
}

#[test]
fn mirrored_features_follow_fixed_pattern() {
    let sim = small_sim(Modality::Image, ActionMode::Joint);
    let l = layout(&sim);
    let [w, h, _] = l.image;
    let block = sim.symmetry.block_affine();
    let d = block.dim;
    // Destination index and sign of each feature under S.
    let mut pattern = Vec::new();
    for k in 0..l.history {
        let base = k * l.obs_len();
        for r in 0..h {
            for c in 0..w {
                pattern.push((base + r * w + (w - 1 - c), 1.0));
            }
        }
        for src in 0..d {
            let dst = (0..d).find(|&r| block.matrix[r * d + src] != 0.0).unwrap();
            pattern.push((base + l.visual_len() + dst, block.matrix[dst * d + src]));
        }
    }
    for o in observations(&sim, 10, 3) {
        let f = featurize(&l, &o).unwrap();
        let fs = featurize(&l, &sim.symmetry.transform_observation(&o).unwrap()).unwrap();
        let mut expect = vec![0.0; f.len()];
        for (i, &(dst, sign)) in pattern.iter().enumerate() {
            expect[dst] = sign * f[i];
        }
        assert_eq!(fs, expect);
    }
}

#[test]
fn zero_policy_outputs_zero_chunk() {
    let sim = small_sim(Modality::Image, ActionMode::Joint);
    let p = Policy::zeros(layout(&sim), &[16]);
    let o = observations(&sim, 1, 1).remove(0);
    let chunk = p.act(&o).unwrap();
    assert_eq!(chunk.horizon(), 3);
    assert!(chunk.encode().iter().all(|v| *v == 0.0));
    assert!(p.forward(&[0.0; 3]).unwrap_err().to_string().contains("features"));
}

#[test]
fn forward_is_deterministic_and_sized() {
    for (m, a) in all_configs() {
        let sim = small_sim(m, a);
        let p = Policy::new(layout(&sim), &[16, 8], 7);
        let o = observations(&sim, 1, 2).remove(0);
        let c1 = p.act(&o).unwrap();
        assert_eq!(c1, p.act(&o).unwrap());
        assert_eq!(c1.encode().len(), 3 * layout(&sim).step_len());
        assert_eq!(p.output_dim(), 3 * layout(&sim).step_len());
    }
}

#[test]
fn ee_outputs_are_unit_quaternions() {
    let sim = small_sim(Modality::Image, ActionMode::Ee);
    let p = Policy::new(layout(&sim), &[16], 3);
    let f = featurize(&p.layout, &observations(&sim, 1, 4)[0]).unwrap();
    let x = Array2::from_shape_vec((1, f.len()), f).unwrap();
    let y = p.forward_batch(&x).unwrap();
    for c in chunk_quaternion_columns(&p.layout) {
        let n: f64 = (0..4).map(|k| y[[0, c + k]].powi(2)).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }
}

fn joint_chunk(values: Vec<f64>) -> ActionChunk {
    ActionChunk::decode(ActionMode::Joint, 3, values.len() / 8, &values).unwrap()
}

#[test]
fn bc_loss_examples() {
    let a = joint_chunk((0..16).map(f64::from).collect());
    assert_eq!(bc_loss(&a, &a).unwrap(), 0.0);
    let mut off: Vec<f64> = a.encode();
    off[5] += 0.2;
    let e = bc_loss(&a, &joint_chunk(off)).unwrap();
    assert!((e - 0.04 / 16.0).abs() < 1e-15);
    let short = joint_chunk(vec![0.0; 8]);
    assert!(bc_loss(&a, &short).is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..50 {
        let x = joint_chunk((0..16).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let y = joint_chunk((0..16).map(|_| rng.gen_range(-1.0..1.0)).collect());
        assert!(bc_loss(&x, &y).unwrap() >= 0.0);
    }
}

/// `chunk_distance(π(S(O)), S(π(O)))` from the symmetry primitives alone.
fn sym_oracle(p: &Policy, o: &Observation, op: &SymmetryOp) -> f64 {
    let op = op.with_modes(p.layout.modality, p.layout.action_mode);
    let direct = p.act(&op.transform_observation(o).unwrap()).unwrap();
    let mirrored = op.transform_action_chunk(&p.act(o).unwrap()).unwrap();
    chunk_distance(&direct, &mirrored).unwrap()
}

#[test]
fn sym_loss_matches_straight_line_oracle() {
    for (m, a) in all_configs() {
        let sim = small_sim(m, a);
        let p = Policy::new(layout(&sim), &[16, 16], 11);
        for o in observations(&sim, 5, 9) {
            let got = sym_loss(&p, &o, &sim.symmetry).unwrap();
            let want = sym_oracle(&p, &o, &sim.symmetry);
            assert!(got > 0.0);
            assert!((got - want).abs() < 1e-12 * (1.0 + want), "{m:?} {a:?}: {got} vs {want}");
            let swapped = sym_loss(&p, &sim.symmetry.transform_observation(&o).unwrap(), &sim.symmetry).unwrap();
            assert!((got - swapped).abs() < 1e-9);
        }
    }
}

#[test]
fn equivariant_policy_has_zero_sym_loss() {
    let sim = small_sim(Modality::Image, ActionMode::Joint);
    let mut p = Policy::zeros(layout(&sim), &[8]);
    let ctx = SymContext::new(&sim.symmetry, &p.layout).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c: Vec<f64> = (0..p.output_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let sc = ctx.mirror_chunk(&c).unwrap();
    let fixed: Vec<f64> = c.iter().zip(&sc).map(|(a, b)| a + b).collect();
    p.biases[1] = Array2::from_shape_vec((1, fixed.len()), fixed).unwrap();
    for o in observations(&sim, 3, 6) {
        assert!(sym_loss(&p, &o, &sim.symmetry).unwrap() < 1e-12);
    }
}

#[test]
fn linear_policy_gradient_is_exact() {
    let sim = small_sim(Modality::Image, ActionMode::Joint);
    let p = Policy::new(layout(&sim), &[], 1);
    let ctx = SymContext::new(&sim.symmetry, &p.layout).unwrap();
    let mut batch = random_batch(&p, &ctx, &sim, 4, 2);
    // Labels near the fit keep the loss, and so the rounding in the
    // differences, small relative to the gradients.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    batch.y = p.forward_batch(&batch.x).unwrap().mapv(|v| v + rng.gen_range(-0.01..0.01));
    let err = grad_check(&p, &ctx, &batch, 0.0, 200, 3);
    assert!(err < 1e-8, "{err}");
}

#[test]
fn mlp_gradients_match_finite_differences() {
    for (m, a) in all_configs() {
        let sim = small_sim(m, a);
        let p = Policy::new(layout(&sim), &[8, 6], 4);
        assert!(p.n_params() <= 2000);
        let ctx = SymContext::new(&sim.symmetry, &p.layout).unwrap();
        let batch = random_batch(&p, &ctx, &sim, 4, 8);
        for lambda in [0.0, 1.0] {
            let err = grad_check(&p, &ctx, &batch, lambda, 200, 5);
            assert!(err < 1e-4, "{m:?} {a:?} λ={lambda}: {err}");
        }
    }
}

fn tiny_dataset(sim: &Simulator, count: usize) -> crate::sim::dataset::Dataset {
    collect_demos(sim, &TaskSpec::new(TaskId::ReachTouch, SideFilter::Both), count, 1).unwrap()
}

fn quick_config(mode: TrainMode) -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 16,
        hidden: vec![16],
        seed: 9,
        ..TrainConfig::new(mode)
    }
}

#[test]
fn zero_lambda_reproduces_baseline_bit_for_bit() {
    let sim = small_sim(Modality::Image, ActionMode::Joint);
    let ds = tiny_dataset(&sim, 2);
    let base = train(&ds, &sim.symmetry, &quick_config(TrainMode::Baseline)).unwrap();
    let cfg = TrainConfig {
        lambda_sym: 0.0,
        ..quick_config(TrainMode::Equibim)
    };
    let eq = train(&ds, &sim.symmetry, &cfg).unwrap();
    assert_eq!(base.policy, eq.policy);
    assert_eq!(base.metrics, eq.metrics);
    let payload = |c: &Checkpoint| {
        let b = c.to_bytes();
        let len = u32::from_le_bytes(b[4..8].try_into().unwrap()) as usize;
        b[8 + len..].to_vec()
    };
    assert_eq!(
        payload(&Checkpoint::new(base.policy, &quick_config(TrainMode::Baseline), None)),
        payload(&Checkpoint::new(eq.policy, &cfg, None))
    );
}

#[test]
fn training_is_deterministic_and_logs_metrics() {
    let sim = small_sim(Modality::PointCloud, ActionMode::Ee);
    let ds = tiny_dataset(&sim, 2);
    for mode in TrainMode::ALL {
        let cfg = TrainConfig {
            lambda_sym: if mode == TrainMode::Baseline { 0.0 } else { 0.5 },
            ..quick_config(mode)
        };
        let a = train(&ds, &sim.symmetry, &cfg).unwrap();
        let b = train(&ds, &sim.symmetry, &cfg).unwrap();
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.metrics.len(), 3);
        assert!(a.diverged.is_none());
        assert!(a.metrics.iter().all(|m| m.sym_loss > 0.0 && m.bc_loss > 0.0 && m.grad_norm > 0.0));
        let csv = metrics_csv(&a.metrics);
        assert!(csv.starts_with("epoch,bc_loss,sym_loss,grad_norm\n0,"));
        assert_eq!(csv.lines().count(), 4);
    }
}

#[test]
fn memorizes_a_single_sample() {
    let sim = small_sim(Modality::Image, ActionMode::Joint);
    let ds = tiny_dataset(&sim, 1);
    let (x, y) = dataset_rows(&ds).unwrap();
    let x = x.slice(ndarray::s![0..1, ..]).to_owned();
    let y = y.slice(ndarray::s![0..1, ..]).to_owned();
    let cfg = TrainConfig {
        epochs: 1500,
        hidden: vec![32],
        ..TrainConfig::new(TrainMode::Baseline)
    };
    let out = train_rows(ds.layout(), &x, &y, &sim.symmetry, &cfg).unwrap();
    let last = out.metrics.last().unwrap().bc_loss;
    assert!(last < 1e-4, "final bc loss {last}");
}

#[test]
fn regularizer_reduces_training_sym_loss() {
    let sim = small_sim(Modality::Image, ActionMode::Joint);
    let ds = tiny_dataset(&sim, 3);
    let run = |mode| {
        let cfg = TrainConfig {
            epochs: 30,
            ..quick_config(mode)
        };
        train(&ds, &sim.symmetry, &cfg).unwrap().metrics.last().unwrap().sym_loss
    };
    assert!(run(TrainMode::Equibim) < run(TrainMode::Baseline));
}

#[test]
fn divergence_returns_last_finite_policy() {
    let sim = small_sim(Modality::Image, ActionMode::Joint);
    let ds = tiny_dataset(&sim, 1);
    let cfg = TrainConfig {
        lr: 1e300,
        epochs: 5,
        ..quick_config(TrainMode::Baseline)
    };
    let out = train(&ds, &sim.symmetry, &cfg).unwrap();
    assert!(out.diverged.is_some());
    assert!(out.policy.is_finite());
    assert_eq!(out.metrics.len(), out.diverged.unwrap());
}

#[test]
fn config_validation() {
    let mut cfg = TrainConfig::new(TrainMode::Baseline);
    assert_eq!(cfg.lambda_sym, 0.0);
    cfg.lambda_sym = 0.5;
    assert!(matches!(cfg.validate(), Err(crate::Error::Config(_))));
    let mut cfg = TrainConfig::new(TrainMode::Equibim);
    assert_eq!(cfg.lambda_sym, 1.0);
    cfg.lambda_sym = -1.0;
    assert!(cfg.validate().is_err());
    assert!(TrainConfig { epochs: 0, ..TrainConfig::new(TrainMode::Augment) }.validate().is_err());
    assert_eq!("augment".parse::<TrainMode>().unwrap(), TrainMode::Augment);
    assert!("other".parse::<TrainMode>().is_err());
    let a = TrainConfig::new(TrainMode::Equibim);
    let b = TrainConfig { seed: 1, ..a.clone() };
    assert_eq!(a.hash(), a.clone().hash());
    assert_ne!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
}

#[test]
fn empty_dataset_is_rejected() {
    let sim = small_sim(Modality::Image, ActionMode::Joint);
    let mut ds = tiny_dataset(&sim, 1);
    ds.episodes.clear();
    assert!(matches!(
        train(&ds, &sim.symmetry, &quick_config(TrainMode::Baseline)),
        Err(crate::Error::EmptyDataset)
    ));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    for (m, a) in all_configs() {
        let sim = small_sim(m, a);
        let p = Policy::new(layout(&sim), &[16, 8], 21);
        let cfg = TrainConfig::new(TrainMode::Equibim);
        let ck = Checkpoint::new(p.clone(), &cfg, None);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.ckpt");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.header.config_hash, cfg.hash());
        let o = observations(&sim, 1, 0).remove(0);
        let (x, y) = (p.act(&o).unwrap().encode(), back.policy.act(&o).unwrap().encode());
        assert!(x.iter().zip(&y).all(|(u, v)| u.to_bits() == v.to_bits()));
        assert_eq!(ck.to_bytes(), back.to_bytes());

        let mut bytes = ck.to_bytes();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(crate::Error::Format(_))));
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}

#[test]
fn checkpoint_payload_is_little_endian_f64() {
    let sim = small_sim(Modality::Image, ActionMode::Joint);
    let p = Policy::new(layout(&sim), &[4], 2);
    let bytes = Checkpoint::new(p.clone(), &TrainConfig::new(TrainMode::Baseline), None).to_bytes();
    assert_eq!(&bytes[..4], CHECKPOINT_MAGIC);
    let len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let first = f64::from_le_bytes(bytes[8 + len..16 + len].try_into().unwrap());
    assert_eq!(first, p.weights[0][[0, 0]]);
    assert_eq!(bytes.len(), 8 + len + 8 * p.n_params());
}
