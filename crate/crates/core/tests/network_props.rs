use gridstrength::corpus::{random_corpus, random_network, RandomNetworkConfig};
use gridstrength::{build_susceptance, compute_modes, kron_reduce, reduce_spec, NetworkSpec};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn network(seed: u64) -> NetworkSpec {
    let cfg = RandomNetworkConfig {
        max_farms: 5,
        max_interior: 5,
        ..Default::default()
    };
    random_network(&mut ChaCha8Rng::seed_from_u64(seed), &cfg)
}

/// Brute-force assembly straight from the edge list.
fn brute_force_b(spec: &NetworkSpec) -> DMatrix<f64> {
    let mut order = spec.farm_ids();
    order.extend(spec.interior_ids());
    let dim = order.len();
    DMatrix::from_fn(dim, dim, |i, j| {
        let mut total = 0.0;
        for br in spec.branches() {
            let touches = |id: &str| br.from == id || br.to == id;
            if i == j && touches(&order[i]) {
                total += br.b_pu;
            } else if i != j && touches(&order[i]) && touches(&order[j]) {
                total -= br.b_pu;
            }
        }
        total
    })
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Columns of B_r from zero-injection interior solves with unit farm voltages.
fn eliminate_by_solves(b: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let m = b.nrows() - n;
    let b4 = b.view((n, n), (m, m)).clone_owned();
    let lu = b4.lu();
    DMatrix::from_fn(n, n, |row, col| {
        let rhs = -b.view((n, col), (m, 1)).clone_owned();
        let v_int = lu.solve(&rhs).unwrap();
        b[(row, col)] + (b.view((row, n), (1, m)) * v_int)[(0, 0)]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn susceptance_matches_brute_force_and_is_pd(seed in any::<u64>()) {
        let spec = network(seed);
        let mats = build_susceptance(&spec).unwrap();
        let oracle = brute_force_b(&spec);
        prop_assert!((&mats.b_full - &oracle).amax() < 1e-12);
        prop_assert!((&mats.b_full - mats.b_full.transpose()).amax() < 1e-12);
        prop_assert!(min_eig(&mats.b_full) > 0.0);
    }

    #[test]
    fn kron_matches_interior_elimination(seed in any::<u64>()) {
        let spec = network(seed);
        let mats = build_susceptance(&spec).unwrap();
        let red = kron_reduce(&mats).unwrap();
        let n = mats.n_farms;
        if mats.n_interior() == 0 {
            prop_assert_eq!(red.b_r(), &mats.b_full);
        } else {
            let oracle = eliminate_by_solves(&mats.b_full, n);
            let rel = (red.b_r() - &oracle).amax() / oracle.amax();
            prop_assert!(rel < 1e-10, "relative error {}", rel);
            // Farm block of the full inverse is the inverse of B_r.
            let inv = mats.b_full.clone().try_inverse().unwrap();
            let block = inv.view((0, 0), (n, n)).clone_owned();
            let prod = red.b_r() * block;
            prop_assert!((prod - DMatrix::identity(n, n)).amax() < 1e-9);
        }
        prop_assert!((red.b_r() - red.b_r().transpose()).amax() < 1e-12);
        prop_assert!(min_eig(red.b_r()) > 0.0);
    }

    #[test]
    fn reinforcement_never_lowers_gscr(seed in any::<u64>(), pick in any::<prop::sample::Index>(), factor in 1.0f64..4.0) {
        let spec = network(seed);
        let before = compute_modes(&reduce_spec(&spec).unwrap()).unwrap().gscr();
        let mut branches = spec.branches().to_vec();
        let k = pick.index(branches.len());
        branches[k].b_pu *= factor;
        let stronger = NetworkSpec::new(spec.s_global_mva(), spec.nodes().to_vec(), branches).unwrap();
        let after = compute_modes(&reduce_spec(&stronger).unwrap()).unwrap().gscr();
        prop_assert!(after >= before - 1e-12 * before, "{} -> {}", before, after);
    }
}

#[test]
fn random_networks_with_three_interior_nodes() {
    let mut seen = 0;
    for spec in random_corpus(99, 200).into_iter().filter(|s| s.n_interior() == 3) {
        let mats = build_susceptance(&spec).unwrap();
        let red = kron_reduce(&mats).unwrap();
        let oracle = eliminate_by_solves(&mats.b_full, mats.n_farms);
        assert!((red.b_r() - &oracle).amax() <= 1e-10 * oracle.amax());
        seen += 1;
    }
    assert!(seen >= 5);
}
