use nalgebra::DMatrix;
use proptest::prelude::*;
use rbno::experiment::{ExperimentConfig, GATE_TOLERANCE};
use rbno::metrics::{read_csv, subspace_poincare_check, write_csv, MetricRow};
use rbno::polymap::{verify_constants, HermiteMap};
use rbno::reduction::build_basis;
use rbno::rng::NormalStream;
use rbno::surrogate::{Activation, LatentData, LatentNetwork, Normalization, TrainingSchedule};
use rbno::{generate_dataset, BasisKind, Mesh1D, PdeProblem, ProblemKind, SpectralCovariance};

fn setup(kind: ProblemKind, n_el: usize) -> (PdeProblem, SpectralCovariance) {
    let mesh = Mesh1D::uniform(n_el).unwrap();
    let cov = SpectralCovariance::new(mesh.clone(), kind.default_covariance()).unwrap();
    (PdeProblem::new(kind, mesh).unwrap(), cov)
}

fn problem_kind() -> impl Strategy<Value = ProblemKind> {
    prop_oneof![Just(ProblemKind::SemilinearElliptic), Just(ProblemKind::SteadyBurgers)]
}

fn activation() -> impl Strategy<Value = Activation> {
    prop_oneof![Just(Activation::Softplus), Just(Activation::Silu), Just(Activation::Gelu)]
}

fn random_latent(ri: usize, ro: usize, n: usize, seed: u64) -> LatentData {
    let mut rng = NormalStream::new(seed, 0);
    let s = DMatrix::from_fn(ri, n, |_, _| rng.next_normal());
    let q = DMatrix::from_fn(ro, n, |_, _| rng.next_normal());
    let g = DMatrix::from_fn(ro, ri * n, |_, _| rng.next_normal());
    Normalization::default().apply(LatentData::new(s, q, g).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn whitening_inverts_coloring(seed in 0u64..10_000) {
        let (_, cov) = setup(ProblemKind::SemilinearElliptic, 64);
        let x = cov.sample(&mut NormalStream::new(seed, 0));
        let back = cov.unwhiten(&cov.whiten(&x));
        prop_assert!((&back - &x).amax() <= 1e-12 * x.amax());
    }

    #[test]
    fn pde_jacobians_pass_the_finite_difference_gate(kind in problem_kind(), seed in 0u64..10_000) {
        let (problem, cov) = setup(kind, 64);
        let x = cov.sample(&mut NormalStream::new(seed, 0));
        let dir = cov.sample(&mut NormalStream::new(seed, 1));
        prop_assert!(problem.jacobian_check(&x, &dir).unwrap() < GATE_TOLERANCE);
    }

    #[test]
    fn network_gradients_pass_the_finite_difference_gate(
        act in activation(),
        ri in 1usize..5,
        ro in 1usize..5,
        depth in 2usize..6,
        seed in 0u64..10_000,
    ) {
        let data = random_latent(ri, ro, 7, seed);
        let net = LatentNetwork::glorot(ri, ro, 2 * ri.max(ro), depth, act, seed).unwrap();
        prop_assert!(net.gradient_check(&data, 3, seed).unwrap() < GATE_TOLERANCE);
    }

    #[test]
    fn samples_depend_only_on_seed_and_index(seed in 0u64..1000, n in 2usize..8) {
        let (problem, cov) = setup(ProblemKind::SteadyBurgers, 32);
        let big = generate_dataset(&problem, &cov, n + 3, seed).unwrap();
        let small = generate_dataset(&problem, &cov, n, seed).unwrap();
        let cut = big.truncated(n);
        prop_assert_eq!(&cut.inputs, &small.inputs);
        prop_assert_eq!(&cut.outputs, &small.outputs);
    }

    #[test]
    fn bases_project_idempotently_with_decreasing_trailing_sums(
        kind in prop_oneof![Just(BasisKind::OutputPca), Just(BasisKind::InputDis), Just(BasisKind::OutputDis)],
        seed in 0u64..1000,
    ) {
        let (problem, cov) = setup(ProblemKind::SemilinearElliptic, 32);
        let set = generate_dataset(&problem, &cov, 20, seed).unwrap();
        let basis = build_basis(kind, &set, &cov, 6).unwrap();
        let sums: Vec<f64> = (0..=6).map(|r| basis.trailing_sum(r).unwrap()).collect();
        prop_assert!(sums.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(basis.eigs().iter().all(|&e| e >= 0.0));
        let v = &set.outputs[0];
        let p = basis.project(v).unwrap();
        let pp = basis.project(&p).unwrap();
        prop_assert!((&pp - &p).amax() <= 1e-10 * (1.0 + p.amax()));
    }

    #[test]
    fn hermite_constants_respect_the_degree(degree in 1u32..5, seed in 0u64..10_000) {
        let map = HermiteMap::random(3, 2, degree, 4, &mut NormalStream::new(seed, 0)).unwrap();
        let c = verify_constants(&map, 10_000, seed).unwrap();
        prop_assert!(c.k_d <= degree as f64 + 1e-9);
        prop_assert!(c.k_h <= (degree - 1) as f64 + 1e-9);
        for row in subspace_poincare_check(&map, &[0, 1, 2, 3]).unwrap() {
            prop_assert!(row.holds());
        }
    }

    #[test]
    fn learning_rate_never_increases(epochs in 20usize..4000, lr in 1e-5f64..1e-1) {
        let mut s = TrainingSchedule::paper(lr, 0);
        s.epochs = epochs;
        s.lr_halvings = (0..5).map(|i| epochs * 3 / 4 + i * (epochs / 20)).collect();
        s.lr_halvings.dedup();
        let rates: Vec<f64> = (0..epochs).map(|e| s.learning_rate(e)).collect();
        prop_assert!(rates.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(rates[0], lr);
    }

    #[test]
    fn metric_rows_round_trip_through_csv(values in prop::collection::vec(-1e6f64..1e6, 0..20)) {
        let rows: Vec<MetricRow> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| MetricRow {
                metric: "l2_error".into(),
                problem: "semilinear".into(),
                basis_in: "input_dis".into(),
                basis_out: String::new(),
                rank: i,
                n_train: 10 * i,
                seed: i as u64,
                value: v,
                denominator: 1.0,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_csv(&path, &rows).unwrap();
        prop_assert_eq!(read_csv(&path).unwrap(), rows);
    }

    #[test]
    fn config_digest_survives_json_round_trip(seed in 0u64..100, epochs in 50usize..700) {
        let mut c = ExperimentConfig::desk(ProblemKind::SteadyBurgers);
        c.seeds = vec![seed + 1, seed + 2];
        c.schedule.epochs = epochs;
        c.schedule.lr_halvings = vec![epochs / 2];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        c.save(&path).unwrap();
        let back = ExperimentConfig::load(&path).unwrap();
        prop_assert_eq!(back.digest().unwrap(), c.digest().unwrap());
    }
}
