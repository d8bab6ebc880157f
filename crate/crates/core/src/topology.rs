//! Vertices, disk-graph construction and all-pairs hop distances.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Unit,
    Source,
    Sink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: String,
    pub role: Role,
    pub x: f64,
    pub y: f64,
}

impl Vertex {
    pub fn new(id: impl Into<String>, role: Role, x: f64, y: f64) -> Self {
        Self {
            id: id.into(),
            role,
            x,
            y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("topology is disconnected: {} unreachable vertex pair(s), first {:?}", pairs.len(), pairs.first())]
    Disconnected { pairs: Vec<(usize, usize)> },
    #[error("edge ({0}, {1}) references a vertex outside 0..{2}")]
    EdgeOutOfRange(usize, usize, usize),
}

/// Dense symmetric adjacency matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    n: usize,
    bits: Vec<bool>,
}

impl Adjacency {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            bits: vec![false; n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn connected(&self, a: usize, b: usize) -> bool {
        self.bits[a * self.n + b]
    }

    /// Adds the undirected edge `a - b`. Self-loops are ignored.
    pub fn add_edge(&mut self, a: usize, b: usize) {
        if a != b {
            self.bits[a * self.n + b] = true;
            self.bits[b * self.n + a] = true;
        }
    }

    pub fn neighbors(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        self.bits[a * self.n..(a + 1) * self.n]
            .iter()
            .enumerate()
            .filter_map(|(b, &e)| e.then_some(b))
    }

    pub fn edge_count(&self) -> usize {
        self.bits.iter().filter(|&&e| e).count() / 2
    }

    pub fn is_symmetric_irreflexive(&self) -> bool {
        self.bits.len() == self.n * self.n
            && (0..self.n)
                .all(|a| !self.connected(a, a) && (a + 1..self.n).all(|b| self.connected(a, b) == self.connected(b, a)))
    }
}

/// Hop distances; `None` marks an unreachable pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopMatrix {
    n: usize,
    dist: Vec<Option<u32>>,
}

impl HopMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, a: usize, b: usize) -> Option<u32> {
        self.dist[a * self.n + b]
    }

    /// Unordered pairs `(a, b)`, `a < b`, with no path between them.
    pub fn unreachable_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for a in 0..self.n {
            for b in a + 1..self.n {
                if self.get(a, b).is_none() {
                    pairs.push((a, b));
                }
            }
        }
        pairs
    }
}

/// Connects every pair of points whose Euclidean distance is at most `range`.
/// Distances are compared squared so the boundary case needs no square root.
pub fn build_disk_graph(positions: &[(f64, f64)], range: f64) -> Adjacency {
    let n = positions.len();
    let mut adj = Adjacency::new(n);
    let r2 = range * range;
    for a in 0..n {
        for b in a + 1..n {
            let dx = positions[a].0 - positions[b].0;
            let dy = positions[a].1 - positions[b].1;
            if dx * dx + dy * dy <= r2 {
                adj.add_edge(a, b);
            }
        }
    }
    adj
}

/// Breadth-first search from every vertex.
pub fn all_pairs_hop_distance(adj: &Adjacency) -> HopMatrix {
    let n = adj.len();
    let mut dist = vec![None; n * n];
    let mut queue = VecDeque::with_capacity(n);
    for start in 0..n {
        let row = &mut dist[start * n..(start + 1) * n];
        row[start] = Some(0);
        queue.clear();
        queue.push_back(start);
        while let Some(a) = queue.pop_front() {
            let next = row[a].map(|d| d + 1);
            for b in adj.neighbors(a) {
                if row[b].is_none() {
                    row[b] = next;
                    queue.push_back(b);
                }
            }
        }
    }
    HopMatrix { n, dist }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    vertices: Vec<Vertex>,
    /// Communication range when the graph was built from geometry.
    range: Option<f64>,
    adjacency: Adjacency,
    hops: HopMatrix,
}

impl Topology {
    pub fn from_geometry(vertices: Vec<Vertex>, range: f64) -> Self {
        let positions: Vec<(f64, f64)> = vertices.iter().map(|v| (v.x, v.y)).collect();
        let adjacency = build_disk_graph(&positions, range);
        let hops = all_pairs_hop_distance(&adjacency);
        Self {
            vertices,
            range: Some(range),
            adjacency,
            hops,
        }
    }

    /// Uses the given undirected edges instead of the disk model.
    pub fn from_edges(vertices: Vec<Vertex>, edges: &[(usize, usize)]) -> Result<Self, TopologyError> {
        let n = vertices.len();
        let mut adjacency = Adjacency::new(n);
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(TopologyError::EdgeOutOfRange(a, b, n));
            }
            adjacency.add_edge(a, b);
        }
        let hops = all_pairs_hop_distance(&adjacency);
        Ok(Self {
            vertices,
            range: None,
            adjacency,
            hops,
        })
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> &Vertex {
        &self.vertices[v]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v.id == id)
    }

    pub fn range(&self) -> Option<f64> {
        self.range
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn hop_matrix(&self) -> &HopMatrix {
        &self.hops
    }

    pub fn hops(&self, a: usize, b: usize) -> Option<u32> {
        self.hops.get(a, b)
    }

    fn with_role(&self, role: Role) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.vertices[v].role == role).collect()
    }

    /// Unit vertices in ascending index order.
    pub fn units(&self) -> Vec<usize> {
        self.with_role(Role::Unit)
    }

    pub fn sources(&self) -> Vec<usize> {
        self.with_role(Role::Source)
    }

    /// The first sink vertex.
    pub fn sink(&self) -> Option<usize> {
        self.vertices.iter().position(|v| v.role == Role::Sink)
    }

    pub fn assert_connected(&self) -> Result<(), TopologyError> {
        assert_connected(self)
    }
}

pub fn assert_connected(topology: &Topology) -> Result<(), TopologyError> {
    let pairs = topology.hops.unreachable_pairs();
    if pairs.is_empty() {
        Ok(())
    } else {
        Err(TopologyError::Disconnected { pairs })
    }
}
