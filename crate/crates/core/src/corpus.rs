//! Seeded random networks and the bundled example networks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::network::{parse_network, reduce_spec, Branch, NetworkSpec, Node};
use crate::strength::gscr;

pub const FIG3_TOML: &str = include_str!("../../../data/networks/fig3.toml");
pub const SMIB_TOML: &str = include_str!("../../../data/networks/smib.toml");
pub const CALIBRATED_DEVICE_TOML: &str = include_str!("../../../data/devices/calibrated_gfl.toml");

pub fn fig3_network() -> NetworkSpec {
    parse_network(FIG3_TOML).expect("bundled network is valid")
}

pub fn smib_network() -> NetworkSpec {
    parse_network(SMIB_TOML).expect("bundled network is valid")
}

#[derive(Clone, Copy, Debug)]
pub struct RandomNetworkConfig {
    pub max_farms: usize,
    pub max_interior: usize,
    pub max_infinite: usize,
    /// Probability of each non-tree edge between non-infinite nodes.
    pub extra_edge_probability: f64,
    pub s_global_mva: f64,
}

impl Default for RandomNetworkConfig {
    fn default() -> Self {
        Self {
            max_farms: 6,
            max_interior: 4,
            max_infinite: 2,
            extra_edge_probability: 0.3,
            s_global_mva: 100.0,
        }
    }
}

/// A connected network with random topology, susceptances in `[0.5, 5]` and
/// farm capacities in `[20, 200]` MVA.
pub fn random_network(rng: &mut impl Rng, cfg: &RandomNetworkConfig) -> NetworkSpec {
    let n = rng.gen_range(1..=cfg.max_farms);
    let m = rng.gen_range(0..=cfg.max_interior);
    let k = rng.gen_range(1..=cfg.max_infinite);

    let mut nodes: Vec<Node> = (0..n)
        .map(|i| Node::wind_farm(format!("WF{}", i + 1), rng.gen_range(20.0..=200.0)))
        .collect();
    nodes.extend((0..m).map(|i| Node::interior(format!("B{}", i + 1))));
    nodes.extend((0..k).map(|i| Node::infinite_bus(format!("G{}", i + 1))));

    let b = |rng: &mut ChaCha8Rng| rng.gen_range(0.5..=5.0);
    let mut local = ChaCha8Rng::seed_from_u64(rng.gen());

    // Random spanning tree over all nodes, grown from the infinite buses.
    let mut attached: Vec<usize> = (n + m..n + m + k).collect();
    let mut pending: Vec<usize> = (0..n + m).collect();
    pending.shuffle(&mut local);
    let mut branches = Vec::new();
    for node in pending {
        let parent = *attached.choose(&mut local).expect("at least one infinite bus");
        branches.push(Branch::new(
            nodes[node].id.clone(),
            nodes[parent].id.clone(),
            b(&mut local),
        ));
        attached.push(node);
    }
    for i in 0..n + m {
        for j in (i + 1)..n + m {
            if local.gen_bool(cfg.extra_edge_probability) {
                branches.push(Branch::new(nodes[i].id.clone(), nodes[j].id.clone(), b(&mut local)));
            }
        }
    }
    NetworkSpec::new(cfg.s_global_mva, nodes, branches).expect("generated network is valid")
}

/// Scales every susceptance so that the network's gSCR equals `target`.
pub fn with_target_gscr(spec: &NetworkSpec, target: f64) -> Result<NetworkSpec> {
    let g = gscr(&reduce_spec(spec)?)?;
    spec.scaled_susceptances(target / g)
}

/// `count` random networks from one seed.
pub fn random_corpus(seed: u64, count: usize) -> Vec<NetworkSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = RandomNetworkConfig::default();
    (0..count).map(|_| random_network(&mut rng, &cfg)).collect()
}

/// Random networks rescaled to gSCR values spread over `[lo, hi]`.
pub fn random_corpus_with_gscr(seed: u64, count: usize, lo: f64, hi: f64) -> Vec<NetworkSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    random_corpus(seed, count)
        .iter()
        .map(|spec| {
            let target = rng.gen_range(lo..=hi);
            with_target_gscr(spec, target).expect("rescaling keeps the network valid")
        })
        .collect()
}
