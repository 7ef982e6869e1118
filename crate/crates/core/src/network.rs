//! Undirected graphs, r-stage neighbourhood sets with uniform weights, and
//! structural diagnostics (edge counts, Jaccard similarity).

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected simple graph on nodes `0..n_nodes`, edges stored as pairs
/// with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    n_nodes: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Network {
    pub fn new(n_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::InvalidInput("network needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidInput(format!("self-loop on node {a}")));
            }
            if a >= n_nodes || b >= n_nodes {
                return Err(Error::InvalidInput(format!(
                    "edge ({a},{b}) out of range for {n_nodes} nodes"
                )));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Self { n_nodes: n_nodes, edges: set })
    }

    /// Graph with no edges.
    pub fn empty(n_nodes: usize) -> Result<Self> {
        Self::new(n_nodes, std::iter::empty())
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n_nodes).filter(|&j| self.has_edge(i, j)).collect()
    }
}

/// Complete graph on `n` nodes.
pub fn fully_connected(n: usize) -> Result<Network> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            edges.push((i, j));
        }
    }
    Network::new(n, edges)
}

/// Number of edges.
pub fn edge_count(net: &Network) -> usize {
    net.edges.len()
}

/// Jaccard similarity of two edge sets on the same node count. Two empty
/// edge sets count as identical, J = 1.
pub fn jaccard(a: &Network, b: &Network) -> Result<f64> {
    if a.n_nodes != b.n_nodes {
        return Err(Error::NodeMismatch(format!(
            "networks have {} and {} nodes",
            a.n_nodes, b.n_nodes
        )));
    }
    let inter = a.edges.intersection(&b.edges).count();
    let union = a.edges.union(&b.edges).count();
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Per-node distance classes: `stage(i, r)` lists the nodes at shortest-path
/// distance exactly `r` from `i`, each carrying the uniform weight
/// `1 / |stage|`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborStages {
    r_max: usize,
    // stages[i][r - 1] = sorted nodes at distance r from i
    stages: Vec<Vec<Vec<usize>>>,
}

impl NeighborStages {
    pub fn r_max(&self) -> usize {
        self.r_max
    }

    /// Nodes at distance exactly `r` (1-based) from `node`.
    pub fn stage(&self, node: usize, r: usize) -> &[usize] {
        &self.stages[node][r - 1]
    }

    /// Uniform weight shared by every member of the stage; 0 for an empty
    /// stage (no weights are attached).
    pub fn weight(&self, node: usize, r: usize) -> f64 {
        let len = self.stages[node][r - 1].len();
        if len == 0 {
            0.0
        } else {
            1.0 / len as f64
        }
    }
}

/// Breadth-first distance classes up to `r_max` for every node. Disconnected
/// parts simply leave stages empty.
pub fn neighbor_stages(net: &Network, r_max: usize) -> Result<NeighborStages> {
    if r_max == 0 {
        return Err(Error::InvalidInput("r_max must be >= 1".into()));
    }
    let n = net.n_nodes;
    let adj: Vec<Vec<usize>> = (0..n).map(|i| net.neighbors(i)).collect();
    let mut stages = Vec::with_capacity(n);
    for start in 0..n {
        let mut dist = vec![usize::MAX; n];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            if dist[u] >= r_max {
                continue;
            }
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        let mut node_stages = vec![Vec::new(); r_max];
        for (v, &d) in dist.iter().enumerate() {
            if d >= 1 && d <= r_max {
                node_stages[d - 1].push(v);
            }
        }
        stages.push(node_stages);
    }
    Ok(NeighborStages { r_max, stages })
}

/// Serialised network with node labels, `{"nodes":[...],"edges":[[i,j],...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    pub nodes: Vec<String>,
    pub edges: Vec<(usize, usize)>,
}

impl NetworkFile {
    pub fn from_network(net: &Network, labels: &[String]) -> Result<Self> {
        if labels.len() != net.n_nodes {
            return Err(Error::NodeMismatch(format!(
                "{} labels for {} nodes",
                labels.len(),
                net.n_nodes
            )));
        }
        Ok(Self {
            nodes: labels.to_vec(),
            edges: net.edges().collect(),
        })
    }

    pub fn to_network(&self) -> Result<Network> {
        Network::new(self.nodes.len(), self.edges.iter().copied())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(file)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn net(n: usize, edges: &[(usize, usize)]) -> Network {
        Network::new(n, edges.iter().copied()).unwrap()
    }

    /// Floyd-Warshall all-pairs distances, independent of the BFS path.
    fn floyd_warshall(net: &Network) -> Vec<Vec<usize>> {
        let n = net.n_nodes();
        const INF: usize = usize::MAX / 4;
        let mut d = vec![vec![INF; n]; n];
        for i in 0..n {
            d[i][i] = 0;
        }
        for (i, j) in net.edges() {
            d[i][j] = 1;
            d[j][i] = 1;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        d
    }

    fn stages_match_distances(net: &Network, r_max: usize) {
        let stages = neighbor_stages(net, r_max).unwrap();
        let dist = floyd_warshall(net);
        for i in 0..net.n_nodes() {
            for r in 1..=r_max {
                let expected: Vec<usize> = (0..net.n_nodes())
                    .filter(|&j| dist[i][j] == r)
                    .collect();
                assert_eq!(stages.stage(i, r), expected.as_slice(), "node {i} stage {r}");
                if !expected.is_empty() {
                    let total: f64 = expected.iter().map(|_| stages.weight(i, r)).sum();
                    assert!((total - 1.0).abs() < 1e-12);
                } else {
                    assert_eq!(stages.weight(i, r), 0.0);
                }
            }
        }
    }

    #[test]
    fn fully_connected_examples() {
        let k3 = fully_connected(3).unwrap();
        let expected: Vec<(usize, usize)> = vec![(0, 1), (0, 2), (1, 2)];
        assert_eq!(k3.edges().collect::<Vec<_>>(), expected);
        assert_eq!(edge_count(&fully_connected(1).unwrap()), 0);
        assert_eq!(edge_count(&fully_connected(10).unwrap()), 45);
        assert!(fully_connected(0).is_err());
    }

    #[test]
    fn edge_count_examples() {
        assert_eq!(edge_count(&Network::empty(4).unwrap()), 0);
        assert_eq!(edge_count(&net(4, &[(0, 1), (1, 2), (2, 3)])), 3);
    }

    #[test]
    fn path_graph_stages() {
        let path = net(4, &[(0, 1), (1, 2), (2, 3)]);
        let stages = neighbor_stages(&path, 3).unwrap();
        assert_eq!(stages.stage(0, 1), &[1]);
        assert_eq!(stages.stage(0, 2), &[2]);
        assert_eq!(stages.stage(0, 3), &[3]);
    }

    #[test]
    fn complete_graph_has_single_stage() {
        let k5 = fully_connected(5).unwrap();
        let stages = neighbor_stages(&k5, 2).unwrap();
        for i in 0..5 {
            assert_eq!(stages.stage(i, 1).len(), 4);
            assert_eq!(stages.weight(i, 1), 0.25);
            assert!(stages.stage(i, 2).is_empty());
        }
    }

    #[test]
    fn disconnected_graph_has_empty_stages() {
        let g = net(5, &[(0, 1)]);
        let stages = neighbor_stages(&g, 2).unwrap();
        assert_eq!(stages.stage(0, 1), &[1]);
        assert!(stages.stage(0, 2).is_empty());
        assert!(stages.stage(4, 1).is_empty());
    }

    #[test]
    fn jaccard_examples() {
        let a = net(3, &[(0, 1), (0, 2)]);
        let b = net(3, &[(0, 1), (1, 2)]);
        assert_eq!(jaccard(&a, &a).unwrap(), 1.0);
        assert_eq!(jaccard(&a, &b).unwrap(), 1.0 / 3.0);
        let disjoint = net(3, &[(1, 2)]);
        assert_eq!(jaccard(&net(3, &[(0, 1)]), &disjoint).unwrap(), 0.0);
        assert_eq!(
            jaccard(&Network::empty(3).unwrap(), &Network::empty(3).unwrap()).unwrap(),
            1.0
        );
        assert!(jaccard(&a, &Network::empty(4).unwrap()).is_err());
    }

    #[test]
    fn network_rejects_self_loops_and_out_of_range() {
        assert!(Network::new(3, [(1, 1)]).is_err());
        assert!(Network::new(3, [(0, 3)]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let g = net(3, &[(0, 2), (0, 1)]);
        let labels = vec!["aex".to_string(), "dax".to_string(), "spx".to_string()];
        let file = NetworkFile::from_network(&g, &labels).unwrap();
        let dir = std::env::temp_dir().join("gnarharx_network_json_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("net.json");
        file.write_json(&path).unwrap();
        let back = NetworkFile::read_json(&path).unwrap();
        assert_eq!(back.nodes, labels);
        assert_eq!(back.to_network().unwrap(), g);
    }

    proptest! {
        #[test]
        fn stages_equal_distance_classes(
            n in 2usize..12,
            edge_bits in proptest::collection::vec(any::<bool>(), 66),
            r_max in 1usize..5,
        ) {
            let mut edges = Vec::new();
            let mut k = 0;
            for i in 0..n {
                for j in i + 1..n {
                    if edge_bits[k % edge_bits.len()] {
                        edges.push((i, j));
                    }
                    k += 1;
                }
            }
            let g = net(n, &edges);
            stages_match_distances(&g, r_max);
        }

        #[test]
        fn jaccard_properties(
            n in 2usize..8,
            bits_a in proptest::collection::vec(any::<bool>(), 28),
            bits_b in proptest::collection::vec(any::<bool>(), 28),
        ) {
            let build = |bits: &[bool]| {
                let mut edges = Vec::new();
                let mut k = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        if bits[k] {
                            edges.push((i, j));
                        }
                        k += 1;
                    }
                }
                net(n, &edges)
            };
            let a = build(&bits_a);
            let b = build(&bits_b);
            let jab = jaccard(&a, &b).unwrap();
            let jba = jaccard(&b, &a).unwrap();
            prop_assert_eq!(jab, jba);
            prop_assert!((0.0..=1.0).contains(&jab));
            prop_assert_eq!(jab == 1.0, a == b);
        }
    }
}
