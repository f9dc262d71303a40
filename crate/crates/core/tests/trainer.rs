use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use utdv_core::gaussian::{TriBlock, WeightDistribution};
use utdv_core::kspace::generate_phantom;
use utdv_core::prox::prox_kl_block;
use utdv_core::tdv::{init_params, TdvConfig, TdvParams};
use utdv_core::train::{Checkpoint, DeterministicTrainer, StochasticTrainer, TrainConfig};
use utdv_core::ComplexField;

fn tiny_net() -> TdvConfig {
    TdvConfig {
        coils: 1,
        feature_channels: 4,
        macroblocks: 1,
        residual_blocks_per_macro: 2,
        scales: 2,
        kernel_size: 3,
    }
}

fn tiny_config(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 2,
        total_iterations: 100,
        lr_halving_interval: 40,
        moment_reset_interval: 40,
        curriculum_start_s: 1,
        curriculum_increment_interval: 30,
        final_s: 3,
        patch_width: 16,
        patch_height: 16,
        acceleration: 2,
        seed,
        ..TrainConfig::desk()
    }
}

fn images(n: usize, size: usize, seed: u64) -> Vec<ComplexField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| generate_phantom(size, size, 1, &mut rng).unwrap()).collect()
}

fn params(seed: u64) -> TdvParams {
    init_params(&tiny_net(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn beta_zero_reduction_reproduces_deterministic_training_bitwise() {
    let cfg = TrainConfig { beta: 0.0, ..tiny_config(7) };
    let data = images(4, 16, 1);
    let mut det = DeterministicTrainer::new(data.clone(), params(2), cfg.clone()).unwrap();
    let mut sto = StochasticTrainer::new(data, params(2), cfg).unwrap().exact_reduction();
    for it in 0..100 {
        let a = det.step().unwrap();
        let b = sto.step().unwrap();
        assert_eq!(a.loss.to_bits(), b.loss.to_bits(), "iteration {it}");
        let same = det
            .params()
            .flat()
            .iter()
            .zip(sto.distribution().mu().flat())
            .all(|(x, y)| x.to_bits() == y.to_bits());
        assert!(same, "iteration {it}");
    }
}

#[test]
fn zero_learning_rate_keeps_parameters_bitwise() {
    let cfg = TrainConfig {
        lr: 0.0,
        total_iterations: 5,
        ..tiny_config(3)
    };
    let start = params(4);
    let data = images(3, 16, 5);
    let mut det = DeterministicTrainer::new(data.clone(), start.clone(), cfg.clone()).unwrap();
    det.run(|_, _| Ok(())).unwrap();
    assert_eq!(det.params().flat(), start.flat());
    let mut sto = StochasticTrainer::new(data, start.clone(), cfg).unwrap();
    let blocks0 = sto.distribution().blocks().to_vec();
    sto.run(|_, _| Ok(())).unwrap();
    assert_eq!(sto.distribution().mu().flat(), start.flat());
    assert_eq!(sto.distribution().blocks(), &blocks0[..]);
}

#[test]
fn resume_from_checkpoint_is_bit_identical() {
    let cfg = TrainConfig {
        total_iterations: 8,
        curriculum_increment_interval: 3,
        moment_reset_interval: 5,
        ..tiny_config(11)
    };
    let data = images(3, 16, 6);

    let mut straight = DeterministicTrainer::new(data.clone(), params(8), cfg.clone()).unwrap();
    straight.run(|_, _| Ok(())).unwrap();
    let mut first = DeterministicTrainer::new(data.clone(), params(8), cfg.clone()).unwrap();
    for _ in 0..4 {
        first.step().unwrap();
    }
    let bytes = first.checkpoint().encode().unwrap();
    let mut resumed = DeterministicTrainer::resume(data.clone(), Checkpoint::decode(&bytes).unwrap()).unwrap();
    resumed.run(|_, _| Ok(())).unwrap();
    assert_eq!(resumed.params().flat(), straight.params().flat());
    assert_eq!(resumed.adam(), straight.adam());

    let mut straight = StochasticTrainer::new(data.clone(), params(8), cfg.clone()).unwrap();
    straight.run(|_, _| Ok(())).unwrap();
    let mut first = StochasticTrainer::new(data.clone(), params(8), cfg).unwrap();
    for _ in 0..4 {
        first.step().unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.tdvc");
    first.checkpoint().write(&path).unwrap();
    let mut resumed = StochasticTrainer::resume(data, Checkpoint::read(&path).unwrap()).unwrap();
    resumed.run(|_, _| Ok(())).unwrap();
    assert_eq!(resumed.distribution().mu().flat(), straight.distribution().mu().flat());
    assert_eq!(resumed.distribution().blocks(), straight.distribution().blocks());
    assert_eq!(resumed.adam_blocks(), straight.adam_blocks());
}

#[test]
fn warm_start_keeps_parameters_and_resets_moments() {
    let cfg = TrainConfig {
        total_iterations: 6,
        ..tiny_config(12)
    };
    let data = images(3, 16, 9);
    let mut t = DeterministicTrainer::new(data.clone(), params(10), cfg.clone()).unwrap();
    for _ in 0..3 {
        t.step().unwrap();
    }
    let ck = t.checkpoint();
    let warm = DeterministicTrainer::retrain_warm_start(data.clone(), ck.clone(), 4, cfg.clone()).unwrap();
    assert_eq!(warm.params().flat(), t.params().flat());
    assert!(warm.adam().is_reset());
    assert_eq!(warm.config().acceleration, 4);
    assert_eq!(warm.iteration(), 3);

    let other_coils = {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        vec![generate_phantom(16, 16, 2, &mut rng).unwrap()]
    };
    assert!(DeterministicTrainer::retrain_warm_start(other_coils, ck, 4, cfg).is_err());
}

#[test]
fn large_beta_pulls_blocks_to_prior_scale() {
    // Penalty alone: the stationary diagonal of α l² − 2 log l is 1/√α.
    let (alpha, beta, lr) = (10.0, 1.0, 1e-3);
    let mut blocks = vec![TriBlock::scaled_identity(9, 1e-3f64.sqrt()), TriBlock::scaled_identity(9, 0.9)];
    blocks[1].set(4, 2, 0.5);
    for _ in 0..500 {
        for b in blocks.iter_mut() {
            *b = prox_kl_block(b, lr, alpha, beta);
        }
    }
    let target = 1.0 / alpha.sqrt();
    for b in &blocks {
        for a in 0..9 {
            assert!((b.diag(a) - target).abs() < 0.1 * target, "{} vs {target}", b.diag(a));
        }
        assert!(b.get(4, 2).abs() < 0.1 * target);
    }
}

#[test]
fn smoke_training_reduces_running_loss() {
    for seed in 0..3 {
        let cfg = TrainConfig {
            total_iterations: 200,
            patch_width: 32,
            patch_height: 32,
            acceleration: 2,
            curriculum_increment_interval: 250,
            seed,
            ..TrainConfig::desk()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let data: Vec<_> = (0..8).map(|_| generate_phantom(32, 32, 1, &mut rng).unwrap()).collect();
        let p = init_params(&TdvConfig::desk(1), &mut rng).unwrap();
        let mut t = DeterministicTrainer::new(data, p, cfg).unwrap();
        let log = t.run(|_, _| Ok(())).unwrap();
        let tail = log[log.len() - 20..].iter().map(|r| r.loss).sum::<f64>() / 20.0;
        assert!(tail <= 0.8 * log[0].loss, "seed {seed}: {} -> {tail}", log[0].loss);
    }
}

#[test]
fn stochastic_training_keeps_blocks_valid() {
    let cfg = TrainConfig {
        total_iterations: 20,
        beta: 1e-3,
        ..tiny_config(13)
    };
    let mut t = StochasticTrainer::new(images(3, 16, 14), params(15), cfg).unwrap();
    let log = t.run(|_, _| Ok(())).unwrap();
    assert!(log.iter().all(|r| r.entropy.is_some_and(f64::is_finite)));
    let dist: &WeightDistribution = t.distribution();
    assert!(dist.validate().is_ok());
    assert!(dist.blocks().iter().all(|b| (0..b.dim()).all(|a| b.diag(a) > 0.0)));
}
