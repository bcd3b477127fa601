use hifinet::config::TrainConfig;
use hifinet::eval::auc_score;
use hifinet::freqdecomp::{tgt, TgtBlock, TgtParams};
use hifinet::hierarchy::{coarsen_adjacency, coarsen_adjacency_oracle, Ffn};
use hifinet::roadnet::{generate_synthetic, GeneratorConfig, SyntheticBundle};
use hifinet::tensor::{grad_check, normal, Coverage, Matrix, Tape};
use hifinet::training::{entropy_loss, Objective, Trainer};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy() -> (SyntheticBundle, TrainConfig) {
    let b = generate_synthetic(&GeneratorConfig::preset("toy12").unwrap(), 3).unwrap();
    let cfg =
        TrainConfig { d: 4, d_id: 1, d_ln: 1, d_sl: 1, d_ll: 1, n_l: Some(4), n_r: Some(2), ..TrainConfig::default() };
    (b, cfg)
}

#[test]
fn total_loss_gradient_matches_finite_differences() {
    let (b, cfg) = toy();
    let obj = Objective::new(&b.network, &b.trajectories, &cfg, 0).unwrap();
    let params = obj.model().init_params(0);
    let report = grad_check(&params, 1e-6, Coverage::All, |t, bound| Ok(obj.build(t, bound)?.total)).unwrap();
    assert_eq!(report.coords_checked, params.numel());
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn gradient_check_survives_training() {
    let (b, cfg) = toy();
    let mut trainer = Trainer::new(&b.network, &b.trajectories, &cfg, 1).unwrap();
    trainer.run(30).unwrap();
    let obj = trainer.objective();
    let report = grad_check(trainer.params(), 1e-6, Coverage::All, |t, bound| Ok(obj.build(t, bound)?.total)).unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

fn row_sums_are_one(m: &Matrix, what: &str) {
    for (r, s) in m.row_sums().into_iter().enumerate() {
        assert!((s - 1.0).abs() < 1e-9, "{what} row {r} sums to {s}");
    }
}

#[test]
fn forward_structural_invariants() {
    for seed in 0..4 {
        let b = generate_synthetic(&GeneratorConfig::preset("grid10").unwrap(), seed).unwrap();
        let cfg = TrainConfig { n_l: Some(10), n_r: Some(4), ..TrainConfig::default() };
        let mut trainer = Trainer::new(&b.network, &b.trajectories, &cfg, seed).unwrap();
        trainer.run(5).unwrap();
        let m = trainer.model();
        let s = m.evaluate(trainer.params()).unwrap();
        row_sums_are_one(&s.a_sl, "A_SL");
        row_sums_are_one(&s.a_lr, "A_LR");
        assert_eq!(s.att.len(), 2 * cfg.n_blocks);
        for att in &s.att {
            row_sums_are_one(att, "ATT");
        }
        let oracle = coarsen_adjacency_oracle(&s.a_sl, m.adjacency());
        assert!(s.a_l.max_abs_diff(&oracle).unwrap() < 1e-9);
        let oracle_r = coarsen_adjacency_oracle(&s.a_lr, &s.a_l);
        assert!(s.a_r.max_abs_diff(&oracle_r).unwrap() < 1e-9);
    }
}

fn perm_matrix(perm: &[usize]) -> Matrix {
    // (P·X)[i] = X[perm[i]]
    Matrix::from_fn(perm.len(), perm.len(), |i, j| (perm[i] == j) as u8 as f64)
}

fn random_block(tape: &mut Tape, rng: &mut ChaCha8Rng, d: usize) -> TgtBlock {
    let mut w = |r: usize, c: usize, std: f64| tape.leaf(normal(r, c, std, rng));
    TgtBlock {
        wq: w(d, d, 0.5),
        wk: w(d, d, 0.5),
        wv: w(d, d, 0.5),
        ffn: Ffn { w1: w(d, 2 * d, 0.5), b1: w(1, 2 * d, 0.1), w2: w(2 * d, d, 0.5), b2: w(1, d, 0.1) },
        ln1_gain: w(1, d, 0.1),
        ln1_bias: w(1, d, 0.1),
        ln2_gain: w(1, d, 0.1),
        ln2_bias: w(1, d, 0.1),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn coarsening_matches_double_sum(n in 2usize..9, m in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = normal(n, n, 1.0, &mut rng);
        let s = normal(n, m, 1.0, &mut rng);
        let fast = coarsen_adjacency(&s, &a).unwrap();
        prop_assert!(fast.max_abs_diff(&coarsen_adjacency_oracle(&s, &a)).unwrap() < 1e-9);
    }

    /// Relabelling nodes permutes the transformer output the same way.
    #[test]
    fn transformer_is_permutation_equivariant(n in 2usize..8, seed in any::<u64>()) {
        let d = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = normal(n, d, 1.0, &mut rng);
        let a = Matrix::from_fn(n, n, |i, j| if i != j && rand::Rng::random_bool(&mut rng, 0.4) { 1.0 } else { 0.0 });
        let a_hat = Matrix::from_fn(n, n, |i, j| a.get(i, j) + (i == j) as u8 as f64);
        let sums = a_hat.row_sums();
        let a_hat = Matrix::from_fn(n, n, |i, j| a_hat.get(i, j) / sums[i]);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(&mut perm[..], &mut rng);
        let p = perm_matrix(&perm);

        let mut tape = Tape::new();
        let blocks = vec![random_block(&mut tape, &mut rng, d), random_block(&mut tape, &mut rng, d)];
        let alpha_logit = tape.leaf(Matrix::scalar(0.3));
        let params = TgtParams { blocks, alpha_logit };

        let hv = tape.constant(h.clone());
        let av = tape.constant(a_hat.clone());
        let out = tgt(&mut tape, hv, av, &params).unwrap();
        let out = tape.value(out).clone();

        let hp = tape.constant(p.matmul(&h).unwrap());
        let ap = tape.constant(p.matmul(&a_hat).unwrap().matmul_t(&p).unwrap());
        let out_p = tgt(&mut tape, hp, ap, &params).unwrap();
        let expected = p.matmul(&out).unwrap();
        prop_assert!(tape.value(out_p).max_abs_diff(&expected).unwrap() < 1e-10);
    }

    /// Sharpening assignments from uniform toward one-hot never raises the
    /// entropy term.
    #[test]
    fn entropy_decreases_toward_one_hot(n in 1usize..6, k in 2usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hot: Vec<usize> = (0..n).map(|_| rand::Rng::random_range(&mut rng, 0..k)).collect();
        let at = |t: f64, rows: usize, cols: usize, hot: &[usize]| {
            Matrix::from_fn(rows, cols, |i, j| (1.0 - t) / cols as f64 + if hot[i] == j { t } else { 0.0 })
        };
        let mut prev = f64::INFINITY;
        for step in 0..=10 {
            let t = step as f64 / 10.0;
            let mut tape = Tape::new();
            let a = tape.constant(at(t, n, k, &hot));
            let b = tape.constant(at(t, n, k, &hot));
            let e = entropy_loss(&mut tape, a, b);
            let e = tape.value(e).item();
            if step == 0 {
                prop_assert!((e - (k as f64).ln()).abs() < 1e-12);
            }
            if step == 10 {
                prop_assert!(e.abs() < 1e-12);
            }
            prop_assert!(e <= prev + 1e-12);
            prev = e;
        }
    }

    /// AUC depends only on the ordering of scores.
    #[test]
    fn auc_invariant_under_monotone_transform(
        scores in prop::collection::vec(-5.0f64..5.0, 4..40),
        flips in prop::collection::vec(any::<bool>(), 40),
    ) {
        let labels: Vec<bool> = flips[..scores.len()].to_vec();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let base = auc_score(&scores, &labels).unwrap();
        let mapped: Vec<f64> = scores.iter().map(|s| (0.7 * s).exp() + s.powi(3)).collect();
        prop_assert!((auc_score(&mapped, &labels).unwrap() - base).abs() < 1e-12);
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((auc_score(&negated, &labels).unwrap() - (1.0 - base)).abs() < 1e-12);
    }
}

#[test]
fn training_traces_are_reproducible() {
    let (b, cfg) = toy();
    let run = |seed| Trainer::new(&b.network, &b.trajectories, &cfg, seed).unwrap().run(15).unwrap();
    let (x, y) = (run(4), run(4));
    assert_eq!(x, y);
    let bits = |t: &hifinet::training::LossTrace| t.records.iter().map(|r| r.total.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&x), bits(&y));
    assert_ne!(bits(&x), bits(&run(5)));
}

#[test]
fn checkpointed_trainer_resumes_same_loss() {
    let (b, cfg) = toy();
    let mut t = Trainer::new(&b.network, &b.trajectories, &cfg, 2).unwrap();
    t.run(10).unwrap();
    let resumed = Trainer::with_params(&b.network, &b.trajectories, &cfg, 2, t.params().clone()).unwrap();
    let a = t.objective().evaluate(t.params()).unwrap();
    let b2 = resumed.objective().evaluate(resumed.params()).unwrap();
    assert_eq!(a.total.to_bits(), b2.total.to_bits());
}
