//! Graph geodesics: Dijkstra over the vertex-edge graph with Euclidean edge
//! lengths. This over-estimates true surface geodesics by a bounded factor
//! on well-shaped meshes; unreachable vertices get `+∞`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    vertex: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then vertex index
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Compressed adjacency of the vertex-edge graph.
#[derive(Debug, Clone)]
pub struct EdgeGraph {
    offsets: Vec<usize>,
    neighbors: Vec<(usize, f64)>,
}

impl EdgeGraph {
    pub fn new(mesh: &Mesh) -> Self {
        let n = mesh.vertex_count();
        let edges = mesh.edges();
        let mut degree = vec![0usize; n];
        for &(a, b) in &edges {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![(0usize, 0.0f64); offsets[n]];
        for &(a, b) in &edges {
            let w = (mesh.vertex(a) - mesh.vertex(b)).norm();
            neighbors[fill[a]] = (b, w);
            fill[a] += 1;
            neighbors[fill[b]] = (a, w);
            fill[b] += 1;
        }
        Self { offsets, neighbors }
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        self.run(source, |_, _| false)
    }

    /// Distances from `source`, stopping once every vertex in `targets` is
    /// settled. Unsettled entries are left at `+∞` or a tentative value, so
    /// only the requested targets should be read.
    pub fn distances_to(&self, source: usize, targets: &[usize]) -> Vec<f64> {
        let mut pending: Vec<bool> = vec![false; self.vertex_count()];
        let mut remaining = 0usize;
        for &t in targets {
            if !pending[t] {
                pending[t] = true;
                remaining += 1;
            }
        }
        self.run(source, move |v, _| {
            if pending[v] {
                pending[v] = false;
                remaining -= 1;
            }
            remaining == 0
        })
    }

    fn run(&self, source: usize, mut settled: impl FnMut(usize, f64) -> bool) -> Vec<f64> {
        let n = self.vertex_count();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Entry { dist: 0.0, vertex: source });
        while let Some(Entry { dist: d, vertex: u }) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            if settled(u, d) {
                break;
            }
            for &(v, w) in self.neighbors(u) {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Entry { dist: nd, vertex: v });
                }
            }
        }
        dist
    }
}

pub fn geodesic_distances(mesh: &Mesh, source: usize) -> Vec<f64> {
    EdgeGraph::new(mesh).distances_from(source)
}
