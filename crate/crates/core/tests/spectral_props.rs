use hifinet::roadnet::{generate_synthetic, GeneratorConfig};
use hifinet::spectral::{
    dirichlet_energy, edge_frequency_report, eigendecompose, energy_report, frequency_split, gft, hard_assignment,
    igft, laplacian, random_equipartitioned_graph, run_verify_suite, verify_laplacian_identity, EdgeClass,
    VerifyConfig,
};
use hifinet::tensor::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_signal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn eigenbasis_is_orthonormal_and_reconstructs(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, _) = random_equipartitioned_graph(&mut rng, 2, 40).unwrap();
        let l = laplacian(&a).unwrap();
        let b = eigendecompose(&l).unwrap();
        prop_assert!(b.orthonormality_error() < 1e-8);
        prop_assert!(b.reconstruction_error(&l).unwrap() < 1e-7);
        prop_assert!(b.eigenvalues[0] >= -1e-9);
        prop_assert!(b.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        // connected ⇒ one-dimensional kernel
        prop_assert_eq!(b.eigenvalues.iter().filter(|l| l.abs() < 1e-8).count(), 1);
    }

    #[test]
    fn fourier_transform_properties(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, _) = random_equipartitioned_graph(&mut rng, 4, 32).unwrap();
        let l = laplacian(&a).unwrap();
        let b = eigendecompose(&l).unwrap();
        let x = random_signal(&mut rng, b.n());
        let c = gft(&b, &x).unwrap();
        let back = igft(&b, &c).unwrap();
        prop_assert!(back.iter().zip(&x).all(|(p, q)| (p - q).abs() < 1e-9));
        let norm_x: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm_c: f64 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm_x - norm_c).abs() < 1e-9);
        let spectral: f64 = c.iter().zip(&b.eigenvalues).map(|(ci, li)| li * ci * ci).sum();
        let direct = dirichlet_energy(&l, &x).unwrap();
        prop_assert!((spectral - direct).abs() < 1e-9 * direct.abs().max(1.0));

        let k = b.n() / 2;
        let (lo, hi) = frequency_split(&b, &x, k).unwrap();
        let inner: f64 = lo.iter().zip(&hi).map(|(p, q)| p * q).sum();
        prop_assert!(inner.abs() < 1e-9);
        prop_assert!(lo.iter().zip(&hi).zip(&x).all(|((p, q), v)| (p + q - v).abs() < 1e-12));
    }

    #[test]
    fn hard_assignment_is_projection(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, p) = random_equipartitioned_graph(&mut rng, 4, 64).unwrap();
        let a = hard_assignment(&p).unwrap();
        prop_assert!(a.matmul_t(&a).unwrap().max_abs_diff(&Matrix::identity(a.rows())).unwrap() < 1e-12);
        let proj = a.t_matmul(&a).unwrap();
        prop_assert!(proj.matmul(&proj).unwrap().max_abs_diff(&proj).unwrap() < 1e-12);
        prop_assert!(proj.max_abs_diff(&proj.transpose()).unwrap() < 1e-12);
        let eig = eigendecompose(&proj).unwrap();
        prop_assert!(eig.eigenvalues.iter().all(|&l| (-1e-9..=1.0 + 1e-9).contains(&l)));
    }
}

#[test]
fn laplacian_identity_holds_on_fifty_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let (a, p) = random_equipartitioned_graph(&mut rng, 4, 64).unwrap();
        let r = verify_laplacian_identity(&a, &p, 1e-9).unwrap();
        assert!(r.pass, "deviation {}", r.max_deviation);
    }
}

#[test]
fn energy_report_asserted_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..20 {
        let (a, p) = random_equipartitioned_graph(&mut rng, 8, 32).unwrap();
        let r = energy_report(&a, &p, 50, i).unwrap();
        assert!(r.asserted_properties_hold());
        assert_eq!(r.trials, 50);
        // every counterexample is recorded with its ratio
        assert!(r.counterexamples.iter().all(|c| c.ratio > 1.0));
    }
}

#[test]
fn smooth_signal_can_gain_energy() {
    // a ramp across two clusters of a longer path
    let n = 8;
    let a = Matrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { 1.0 } else { 0.0 });
    let p = hifinet::spectral::Partition::contiguous(n, 2).unwrap();
    let z: Vec<f64> = (0..n).map(|i| (n - i) as f64).collect();
    let e = hifinet::spectral::Coarsening::new(&a, &p).unwrap().probe(&z).unwrap();
    assert!(e.e_y > e.e_x, "{} vs {}", e.e_y, e.e_x);
}

#[test]
fn verify_suite_passes_and_serialises() {
    let cfg = VerifyConfig { trials: 20, instances: 20, ..VerifyConfig::default() };
    let r = run_verify_suite(&cfg).unwrap();
    assert!(r.passed);
    assert!(r.documented_counterexample.reproduced);
    assert!((r.documented_counterexample.ratio - 1.5).abs() < 1e-9);
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["piecewise_constant_exact"], true);
    assert!(json["energy"]["ratios"]["median"].is_number());
    assert!(json["energy"]["counterexamples"].is_array());
    assert_eq!(run_verify_suite(&cfg).unwrap(), r);
}

#[test]
fn edge_report_covers_every_street() {
    let b = generate_synthetic(&GeneratorConfig::grid(8, 8, 4), 2).unwrap();
    let flow = b.network.flow().unwrap();
    let r = edge_frequency_report(&b.network, &flow, None).unwrap();
    assert_eq!(r.low_band, 7);
    assert_eq!(r.edges.len(), 2 * 8 * 7);
    assert_eq!(r.high_edges + r.low_edges, r.edges.len());
    assert!(r.edges.iter().any(|e| e.class == EdgeClass::High));
    assert!(edge_frequency_report(&b.network, &flow[1..], None).is_err());
}
