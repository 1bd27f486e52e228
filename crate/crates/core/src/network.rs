//! Network descriptions, susceptance assembly, Kron reduction and GFM
//! branch augmentation.
//!
//! The network is purely susceptive. Every infinite bus is tied to a single
//! ground reference, so the susceptance matrix over wind-farm and interior
//! nodes is a grounded Laplacian: off-diagonals are `-b_ij` and each diagonal
//! carries the sum of all incident branch susceptances, including links to
//! infinite buses.
//!
//! Node ordering is fixed: wind farms first in file order, then interior
//! nodes in file order. Every matrix and vector produced here follows it.

use std::collections::{BTreeMap, HashMap, VecDeque};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interior blocks with a condition estimate above this are rejected.
pub const MAX_INTERIOR_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    WindFarm,
    Interior,
    InfiniteBus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_mva: Option<f64>,
}

impl Node {
    pub fn wind_farm(id: impl Into<String>, capacity_mva: f64) -> Self {
        Self {
            id: id.into(),
            kind: NodeKind::WindFarm,
            capacity_mva: Some(capacity_mva),
        }
    }

    pub fn interior(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind: NodeKind::Interior,
            capacity_mva: None,
        }
    }

    pub fn infinite_bus(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind: NodeKind::InfiniteBus,
            capacity_mva: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub from: String,
    pub to: String,
    pub b_pu: f64,
}

impl Branch {
    pub fn new(from: impl Into<String>, to: impl Into<String>, b_pu: f64) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            b_pu,
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct NetworkDocument {
    s_global_mva: f64,
    nodes: Vec<Node>,
    #[serde(default)]
    branches: Vec<Branch>,
}

/// A validated network description.
///
/// Parallel branches between the same pair of nodes are merged by summing
/// their susceptances; the merged list keeps the position of the first
/// occurrence.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    s_global_mva: f64,
    nodes: Vec<Node>,
    branches: Vec<Branch>,
}

impl NetworkSpec {
    pub fn new(s_global_mva: f64, nodes: Vec<Node>, branches: Vec<Branch>) -> Result<Self> {
        if !(s_global_mva.is_finite() && s_global_mva > 0.0) {
            return Err(Error::InvalidBase(s_global_mva));
        }

        let mut kinds: HashMap<&str, NodeKind> = HashMap::with_capacity(nodes.len());
        for node in &nodes {
            if kinds.insert(node.id.as_str(), node.kind).is_some() {
                return Err(Error::DuplicateNode(node.id.clone()));
            }
            match (node.kind, node.capacity_mva) {
                (NodeKind::WindFarm, None) => return Err(Error::MissingCapacity(node.id.clone())),
                (NodeKind::WindFarm, Some(c)) if !(c.is_finite() && c > 0.0) => {
                    return Err(Error::NonPositiveCapacity {
                        node: node.id.clone(),
                        value: c,
                    })
                }
                (NodeKind::Interior | NodeKind::InfiniteBus, Some(_)) => {
                    return Err(Error::UnexpectedCapacity(node.id.clone()))
                }
                _ => {}
            }
        }
        if !nodes.iter().any(|n| n.kind == NodeKind::WindFarm) {
            return Err(Error::NoWindFarm);
        }
        if !nodes.iter().any(|n| n.kind == NodeKind::InfiniteBus) {
            return Err(Error::NoInfiniteBus);
        }

        let mut merged: Vec<Branch> = Vec::with_capacity(branches.len());
        let mut seen: HashMap<(String, String), usize> = HashMap::new();
        for (index, br) in branches.into_iter().enumerate() {
            for id in [&br.from, &br.to] {
                if !kinds.contains_key(id.as_str()) {
                    return Err(Error::UnknownNode {
                        index,
                        from: br.from.clone(),
                        to: br.to.clone(),
                        id: id.clone(),
                    });
                }
            }
            if br.from == br.to {
                return Err(Error::SelfBranch {
                    index,
                    node: br.from.clone(),
                });
            }
            if !(br.b_pu.is_finite() && br.b_pu > 0.0) {
                return Err(Error::NonPositiveSusceptance {
                    index,
                    from: br.from.clone(),
                    to: br.to.clone(),
                    value: br.b_pu,
                });
            }
            let key = if br.from < br.to {
                (br.from.clone(), br.to.clone())
            } else {
                (br.to.clone(), br.from.clone())
            };
            match seen.get(&key) {
                Some(&at) => merged[at].b_pu += br.b_pu,
                None => {
                    seen.insert(key, merged.len());
                    merged.push(br);
                }
            }
        }

        let spec = Self {
            s_global_mva,
            nodes,
            branches: merged,
        };
        spec.check_connectivity()?;
        Ok(spec)
    }

    /// Breadth-first search from all infinite buses at once.
    fn check_connectivity(&self) -> Result<()> {
        let index: HashMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect();
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for br in &self.branches {
            let (a, b) = (index[br.from.as_str()], index[br.to.as_str()]);
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut reached = vec![false; self.nodes.len()];
        let mut queue = VecDeque::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.kind == NodeKind::InfiniteBus {
                reached[i] = true;
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !reached[j] {
                    reached[j] = true;
                    queue.push_back(j);
                }
            }
        }
        match self.nodes.iter().zip(&reached).find(|(_, &r)| !r) {
            Some((node, _)) => Err(Error::Disconnected(node.id.clone())),
            None => Ok(()),
        }
    }

    pub fn s_global_mva(&self) -> f64 {
        self.s_global_mva
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    fn ids_of(&self, kind: NodeKind) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(move |n| n.kind == kind)
    }

    pub fn farm_ids(&self) -> Vec<String> {
        self.ids_of(NodeKind::WindFarm).map(|n| n.id.clone()).collect()
    }

    pub fn interior_ids(&self) -> Vec<String> {
        self.ids_of(NodeKind::Interior).map(|n| n.id.clone()).collect()
    }

    pub fn farm_capacities_mva(&self) -> Vec<f64> {
        self.ids_of(NodeKind::WindFarm)
            .map(|n| n.capacity_mva.expect("validated wind farm capacity"))
            .collect()
    }

    pub fn n_farms(&self) -> usize {
        self.ids_of(NodeKind::WindFarm).count()
    }

    pub fn n_interior(&self) -> usize {
        self.ids_of(NodeKind::Interior).count()
    }

    pub fn n_infinite(&self) -> usize {
        self.ids_of(NodeKind::InfiniteBus).count()
    }

    /// Same network with every branch susceptance multiplied by `factor`.
    pub fn scaled_susceptances(&self, factor: f64) -> Result<Self> {
        let branches = self
            .branches
            .iter()
            .map(|b| Branch::new(b.from.clone(), b.to.clone(), b.b_pu * factor))
            .collect();
        Self::new(self.s_global_mva, self.nodes.clone(), branches)
    }

    /// Same network with every capacity and the global base multiplied by `factor`.
    pub fn scaled_capacities(&self, factor: f64) -> Result<Self> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| Node {
                capacity_mva: n.capacity_mva.map(|c| c * factor),
                ..n.clone()
            })
            .collect();
        Self::new(self.s_global_mva * factor, nodes, self.branches.clone())
    }

    pub fn to_toml_string(&self) -> String {
        let doc = NetworkDocument {
            s_global_mva: self.s_global_mva,
            nodes: self.nodes.clone(),
            branches: self.branches.clone(),
        };
        toml::to_string(&doc).expect("network document serializes")
    }
}

/// Parse and validate a TOML network document.
pub fn parse_network(text: &str) -> Result<NetworkSpec> {
    let doc: NetworkDocument =
        toml::from_str(text).map_err(|e| Error::MalformedDocument(e.message().to_string()))?;
    NetworkSpec::new(doc.s_global_mva, doc.nodes, doc.branches)
}

/// Full susceptance matrix over wind-farm and interior nodes.
#[derive(Clone, Debug)]
pub struct SusceptanceMatrices {
    pub b_full: DMatrix<f64>,
    /// Farm ids followed by interior ids.
    pub node_ids: Vec<String>,
    /// Total susceptance from each node to the infinite buses.
    pub ground: DVector<f64>,
    pub n_farms: usize,
    /// Farm capacities over the global base.
    pub s_b: DVector<f64>,
}

impl SusceptanceMatrices {
    pub fn n_interior(&self) -> usize {
        self.node_ids.len() - self.n_farms
    }
}

pub fn build_susceptance(spec: &NetworkSpec) -> Result<SusceptanceMatrices> {
    // Re-run validation; a NetworkSpec may have been built by hand.
    let spec = NetworkSpec::new(spec.s_global_mva, spec.nodes.clone(), spec.branches.clone())?;

    let farms = spec.farm_ids();
    let interior = spec.interior_ids();
    let node_ids: Vec<String> = farms.iter().chain(&interior).cloned().collect();
    let position: BTreeMap<&str, usize> = node_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let dim = node_ids.len();
    let mut b_full = DMatrix::<f64>::zeros(dim, dim);
    let mut ground = DVector::<f64>::zeros(dim);
    for br in spec.branches() {
        let a = position.get(br.from.as_str()).copied();
        let b = position.get(br.to.as_str()).copied();
        match (a, b) {
            (Some(i), Some(j)) => {
                b_full[(i, i)] += br.b_pu;
                b_full[(j, j)] += br.b_pu;
                b_full[(i, j)] -= br.b_pu;
                b_full[(j, i)] -= br.b_pu;
            }
            (Some(i), None) | (None, Some(i)) => {
                b_full[(i, i)] += br.b_pu;
                ground[i] += br.b_pu;
            }
            // infinite bus to infinite bus: both ends at the ground reference
            (None, None) => {}
        }
    }

    let s_b = DVector::from_iterator(
        farms.len(),
        spec.farm_capacities_mva()
            .into_iter()
            .map(|c| c / spec.s_global_mva()),
    );

    Ok(SusceptanceMatrices {
        b_full,
        node_ids,
        ground,
        n_farms: farms.len(),
        s_b,
    })
}

/// Kron-reduced susceptance matrix with the farm capacity matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct KronReducedNetwork {
    b_r: DMatrix<f64>,
    s_b: DVector<f64>,
    farm_ids: Vec<String>,
}

impl KronReducedNetwork {
    /// `s_b` is the diagonal of the capacity matrix.
    pub fn new(b_r: DMatrix<f64>, s_b: DVector<f64>, farm_ids: Vec<String>) -> Result<Self> {
        let n = s_b.len();
        if n == 0 || b_r.nrows() != n || b_r.ncols() != n || farm_ids.len() != n {
            return Err(Error::InvalidArgument(format!(
                "inconsistent dimensions: b_r {}x{}, s_b {}, {} farm ids",
                b_r.nrows(),
                b_r.ncols(),
                n,
                farm_ids.len()
            )));
        }
        if let Some(s) = s_b.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "capacity ratio must be positive, got {s}"
            )));
        }
        if b_r.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("b_r has non-finite entries".into()));
        }
        Ok(Self { b_r, s_b, farm_ids })
    }

    pub fn b_r(&self) -> &DMatrix<f64> {
        &self.b_r
    }

    pub fn s_b(&self) -> &DVector<f64> {
        &self.s_b
    }

    pub fn farm_ids(&self) -> &[String] {
        &self.farm_ids
    }

    pub fn n_farms(&self) -> usize {
        self.s_b.len()
    }
}

/// Eliminates interior nodes: `B_r = B1 - B2 * B4^-1 * B3`.
pub fn kron_reduce(mats: &SusceptanceMatrices) -> Result<KronReducedNetwork> {
    let n = mats.n_farms;
    let m = mats.n_interior();
    let farm_ids = mats.node_ids[..n].to_vec();
    if m == 0 {
        return KronReducedNetwork::new(mats.b_full.clone(), mats.s_b.clone(), farm_ids);
    }

    let b = &mats.b_full;
    let b1 = b.view((0, 0), (n, n));
    let b2 = b.view((0, n), (n, m));
    let b3 = b.view((n, 0), (m, n));
    let b4 = b.view((n, n), (m, m)).clone_owned();

    let singular = |condition: f64| Error::SingularInterior {
        nodes: mats.node_ids[n..].to_vec(),
        condition,
    };
    let spectrum = SymmetricEigen::new(b4.clone()).eigenvalues;
    let lo = spectrum.min();
    let hi = spectrum.max();
    if lo <= 0.0 {
        return Err(singular(f64::INFINITY));
    }
    let condition = hi / lo;
    if condition > MAX_INTERIOR_CONDITION {
        return Err(singular(condition));
    }

    let chol = b4.cholesky().ok_or_else(|| singular(condition))?;
    let x = chol.solve(&b3.clone_owned());
    let reduced = b1 - b2 * x;
    let b_r = (&reduced + reduced.transpose()) * 0.5;
    KronReducedNetwork::new(b_r, mats.s_b.clone(), farm_ids)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityRatio {
    Uniform(f64),
    PerFarm(Vec<f64>),
}

/// GFM converters attached at every wind farm.
///
/// `gamma` is GFM capacity over farm capacity. `z_local` is the reactance
/// between the GFM internal voltage and the farm node, on the GFM converter's
/// own capacity base.
#[derive(Clone, Debug, PartialEq)]
pub struct GfmAttachment {
    gamma: CapacityRatio,
    z_local: f64,
}

impl GfmAttachment {
    pub fn new(gamma: CapacityRatio, z_local: f64) -> Result<Self> {
        if !(z_local.is_finite() && z_local > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "z_local must be positive, got {z_local}"
            )));
        }
        let bad = match &gamma {
            CapacityRatio::Uniform(g) => !(g.is_finite() && *g >= 0.0),
            CapacityRatio::PerFarm(gs) => gs.iter().any(|g| !(g.is_finite() && *g >= 0.0)),
        };
        if bad {
            return Err(Error::InvalidArgument(
                "capacity ratio gamma must be finite and non-negative".into(),
            ));
        }
        Ok(Self { gamma, z_local })
    }

    pub fn uniform(gamma: f64, z_local: f64) -> Result<Self> {
        Self::new(CapacityRatio::Uniform(gamma), z_local)
    }

    pub fn per_farm(gammas: Vec<f64>, z_local: f64) -> Result<Self> {
        Self::new(CapacityRatio::PerFarm(gammas), z_local)
    }

    /// No GFM capacity.
    pub fn none() -> Self {
        Self {
            gamma: CapacityRatio::Uniform(0.0),
            z_local: 1.0,
        }
    }

    pub fn gamma(&self) -> &CapacityRatio {
        &self.gamma
    }

    pub fn z_local(&self) -> f64 {
        self.z_local
    }

    pub fn y_local(&self) -> f64 {
        1.0 / self.z_local
    }

    /// The uniform ratio, if this attachment has one.
    pub fn uniform_gamma(&self) -> Option<f64> {
        match self.gamma {
            CapacityRatio::Uniform(g) => Some(g),
            CapacityRatio::PerFarm(_) => None,
        }
    }
}

/// Each GFM converter acts as a link to an infinite bus with susceptance
/// `S_Bii * gamma_i * y_local` on the global base; `s_b` is unchanged.
pub fn attach_gfm(reduced: &KronReducedNetwork, att: &GfmAttachment) -> Result<KronReducedNetwork> {
    let n = reduced.n_farms();
    let gammas: Vec<f64> = match &att.gamma {
        CapacityRatio::Uniform(g) => vec![*g; n],
        CapacityRatio::PerFarm(gs) if gs.len() == n => gs.clone(),
        CapacityRatio::PerFarm(gs) => {
            return Err(Error::GammaLength {
                expected: n,
                got: gs.len(),
            })
        }
    };
    let y = att.y_local();
    let mut b_r = reduced.b_r.clone();
    for (i, g) in gammas.iter().enumerate() {
        if *g != 0.0 {
            b_r[(i, i)] += reduced.s_b[i] * g * y;
        }
    }
    KronReducedNetwork::new(b_r, reduced.s_b.clone(), reduced.farm_ids.clone())
}

/// Parse, assemble and reduce in one go.
pub fn reduce_spec(spec: &NetworkSpec) -> Result<KronReducedNetwork> {
    kron_reduce(&build_susceptance(spec)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smib(b: f64) -> NetworkSpec {
        NetworkSpec::new(
            1.0,
            vec![Node::wind_farm("WF", 1.0), Node::infinite_bus("G")],
            vec![Branch::new("WF", "G", b)],
        )
        .unwrap()
    }

    #[test]
    fn parses_minimal_smib() {
        let text = r#"
            s_global_mva = 1.0
            nodes = [
              { id = "WF", kind = "wind_farm", capacity_mva = 1.0 },
              { id = "G", kind = "infinite_bus" },
            ]
            branches = [{ from = "WF", to = "G", b_pu = 2.0 }]
        "#;
        let spec = parse_network(text).unwrap();
        assert_eq!(spec.n_farms(), 1);
        assert_eq!(spec.n_interior(), 0);
        assert_eq!(spec.n_infinite(), 1);
    }

    #[test]
    fn rejects_network_without_infinite_bus() {
        let text = r#"
            s_global_mva = 100.0
            nodes = [
              { id = "A", kind = "wind_farm", capacity_mva = 10.0 },
              { id = "B", kind = "wind_farm", capacity_mva = 10.0 },
            ]
            branches = [{ from = "A", to = "B", b_pu = 2.0 }]
        "#;
        let err = parse_network(text).unwrap_err();
        assert!(matches!(err, Error::NoInfiniteBus));
        assert_eq!(err.to_string(), "no infinite bus in network");
    }

    #[test]
    fn rejects_resistance_fields() {
        let text = r#"
            s_global_mva = 1.0
            nodes = [
              { id = "WF", kind = "wind_farm", capacity_mva = 1.0 },
              { id = "G", kind = "infinite_bus" },
            ]
            branches = [{ from = "WF", to = "G", b_pu = 2.0, r_pu = 0.01 }]
        "#;
        let err = parse_network(text).unwrap_err();
        assert!(err.to_string().contains("r_pu"), "{err}");
    }

    #[test]
    fn validation_errors_name_the_culprit() {
        let nodes = || vec![Node::wind_farm("WF", 1.0), Node::infinite_bus("G")];
        let err = NetworkSpec::new(1.0, nodes(), vec![Branch::new("WF", "X", 1.0)]).unwrap_err();
        assert!(err.to_string().contains("`X`"));
        let err = NetworkSpec::new(1.0, nodes(), vec![Branch::new("WF", "G", -1.0)]).unwrap_err();
        assert!(matches!(err, Error::NonPositiveSusceptance { index: 0, .. }));
        let err = NetworkSpec::new(1.0, nodes(), vec![Branch::new("WF", "WF", 1.0)]).unwrap_err();
        assert!(matches!(err, Error::SelfBranch { .. }));
        let err = NetworkSpec::new(
            1.0,
            vec![Node::wind_farm("WF", 0.0), Node::infinite_bus("G")],
            vec![Branch::new("WF", "G", 1.0)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonPositiveCapacity { .. }));
        let err = NetworkSpec::new(
            1.0,
            vec![
                Node::wind_farm("WF", 1.0),
                Node::interior("I"),
                Node::infinite_bus("G"),
            ],
            vec![Branch::new("WF", "G", 1.0)],
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "node `I` has no path to any infinite bus");
    }

    #[test]
    fn parallel_branches_are_summed() {
        let spec = NetworkSpec::new(
            1.0,
            vec![Node::wind_farm("WF", 1.0), Node::infinite_bus("G")],
            vec![Branch::new("WF", "G", 1.25), Branch::new("G", "WF", 0.75)],
        )
        .unwrap();
        assert_eq!(spec.branches().len(), 1);
        assert_eq!(spec.branches()[0].b_pu, 2.0);
    }

    #[test]
    fn smib_susceptance_is_the_grid_link() {
        let mats = build_susceptance(&smib(2.0)).unwrap();
        assert_eq!(mats.b_full, DMatrix::from_row_slice(1, 1, &[2.0]));
    }

    #[test]
    fn two_farm_susceptance() {
        let spec = NetworkSpec::new(
            1.0,
            vec![
                Node::wind_farm("F1", 1.0),
                Node::wind_farm("F2", 1.0),
                Node::infinite_bus("G"),
            ],
            vec![Branch::new("F1", "F2", 1.0), Branch::new("F1", "G", 3.0)],
        )
        .unwrap();
        let mats = build_susceptance(&spec).unwrap();
        assert_eq!(
            mats.b_full,
            DMatrix::from_row_slice(2, 2, &[4.0, -1.0, -1.0, 1.0])
        );
        assert_eq!(mats.ground.as_slice(), &[3.0, 0.0]);
    }

    #[test]
    fn interior_node_ordering_follows_kind_then_file_order() {
        let spec = NetworkSpec::new(
            1.0,
            vec![
                Node::interior("I1"),
                Node::wind_farm("F1", 1.0),
                Node::infinite_bus("G"),
                Node::wind_farm("F2", 1.0),
            ],
            vec![
                Branch::new("F1", "I1", 1.0),
                Branch::new("F2", "I1", 1.0),
                Branch::new("I1", "G", 1.0),
            ],
        )
        .unwrap();
        let mats = build_susceptance(&spec).unwrap();
        assert_eq!(mats.node_ids, vec!["F1", "F2", "I1"]);
    }

    #[test]
    fn kron_without_interior_is_identity() {
        let mats = build_susceptance(&smib(2.0)).unwrap();
        let red = kron_reduce(&mats).unwrap();
        assert_eq!(red.b_r(), &mats.b_full);
    }

    #[test]
    fn kron_series_chain() {
        let spec = NetworkSpec::new(
            1.0,
            vec![
                Node::wind_farm("WF", 1.0),
                Node::interior("I"),
                Node::infinite_bus("G"),
            ],
            vec![Branch::new("WF", "I", 2.0), Branch::new("I", "G", 2.0)],
        )
        .unwrap();
        let red = reduce_spec(&spec).unwrap();
        assert!((red.b_r()[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ill_conditioned_interior_is_rejected() {
        let spec = NetworkSpec::new(
            1.0,
            vec![
                Node::wind_farm("WF", 1.0),
                Node::interior("I1"),
                Node::interior("I2"),
                Node::infinite_bus("G"),
            ],
            vec![
                Branch::new("WF", "I1", 1.0),
                Branch::new("I1", "G", 1.0),
                Branch::new("I1", "I2", 1e-13),
            ],
        )
        .unwrap();
        let err = reduce_spec(&spec).unwrap_err();
        match err {
            Error::SingularInterior { nodes, condition } => {
                assert_eq!(nodes, vec!["I1", "I2"]);
                assert!(condition > MAX_INTERIOR_CONDITION);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn attach_zero_gamma_is_identity() {
        let red = reduce_spec(&smib(1.2)).unwrap();
        let att = GfmAttachment::uniform(0.0, 0.16).unwrap();
        assert_eq!(attach_gfm(&red, &att).unwrap(), red);
    }

    #[test]
    fn attach_example_sizing() {
        let red = reduce_spec(&smib(1.2)).unwrap();
        let att = GfmAttachment::uniform(0.128, 0.16).unwrap();
        let aug = attach_gfm(&red, &att).unwrap();
        assert!((aug.b_r()[(0, 0)] - 2.0).abs() < 1e-12);
        assert_eq!(aug.s_b(), red.s_b());
    }

    #[test]
    fn attach_rejects_length_mismatch() {
        let red = reduce_spec(&smib(1.2)).unwrap();
        let att = GfmAttachment::per_farm(vec![0.1, 0.2], 0.16).unwrap();
        assert!(matches!(
            attach_gfm(&red, &att),
            Err(Error::GammaLength { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn attachment_validates_inputs() {
        assert!(GfmAttachment::uniform(-0.1, 0.16).is_err());
        assert!(GfmAttachment::uniform(0.1, 0.0).is_err());
        let att = GfmAttachment::uniform(0.1, 0.16).unwrap();
        assert!((att.y_local() * att.z_local() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn toml_round_trip_preserves_spec() {
        let spec = smib(2.0);
        assert_eq!(parse_network(&spec.to_toml_string()).unwrap(), spec);
    }
}
