//! The shape network: shapes joined by stored dense correspondences, with
//! composition along shortest paths and label propagation.

mod manifest;

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

pub use manifest::{default_edge_path, DatasetRecord, EdgeRecord, Manifest, PairQuota, ShapeKind, ShapeRecord, Split};

use crate::bvh::Bvh;
use crate::correspondence::{
    evaluate_surface_point, load_correspondence, load_labels, DenseCorrespondence, SurfacePoint, VertexLabels,
};
use crate::error::{Error, Result};
use crate::mesh::{load_mesh, Mesh, MeshMeta, Point};

/// Immutable after construction; correspondences between non-adjacent
/// shapes are memoized on first request.
#[derive(Debug, Default)]
pub struct ShapeNetwork {
    meshes: Vec<Arc<Mesh>>,
    index: HashMap<String, usize>,
    /// Neighbours sorted by shape id, with the edge slot.
    adjacency: Vec<Vec<(usize, usize)>>,
    /// `(low, high, low -> high, high -> low)` by node index.
    edges: Vec<Edge>,
    annotations: Vec<Option<VertexLabels>>,
    memo: Mutex<HashMap<(usize, usize), Arc<(DenseCorrespondence, Vec<String>)>>>,
}

type Edge = (usize, usize, DenseCorrespondence, DenseCorrespondence);

impl ShapeNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_shape(&mut self, mesh: Mesh) -> Result<usize> {
        if self.index.contains_key(mesh.id()) {
            return Err(Error::Network(format!("shape `{}` added twice", mesh.id())));
        }
        let i = self.meshes.len();
        self.index.insert(mesh.id().to_string(), i);
        self.meshes.push(Arc::new(mesh));
        self.adjacency.push(Vec::new());
        self.annotations.push(None);
        Ok(i)
    }

    /// Adds an undirected edge carrying both stored directions.
    pub fn add_edge(&mut self, ab: DenseCorrespondence, ba: DenseCorrespondence) -> Result<()> {
        let a = self.require(&ab.source_id)?;
        let b = self.require(&ab.target_id)?;
        if ba.source_id != ab.target_id || ba.target_id != ab.source_id {
            return Err(Error::Network(format!(
                "edge {} -- {}: reverse correspondence is {} -> {}",
                ab.source_id, ab.target_id, ba.source_id, ba.target_id
            )));
        }
        if a == b || self.adjacency[a].iter().any(|&(n, _)| n == b) {
            return Err(Error::Network(format!("edge {} -- {} repeated or a loop", ab.source_id, ab.target_id)));
        }
        let name = |e: Error| Error::Network(format!("edge {} -- {}: {e}", ab.source_id, ab.target_id));
        ab.validate(&self.meshes[a], &self.meshes[b]).map_err(name)?;
        ba.validate(&self.meshes[b], &self.meshes[a]).map_err(name)?;
        let slot = self.edges.len();
        let (lo, hi, fwd, bwd) = if a < b { (a, b, ab, ba) } else { (b, a, ba, ab) };
        self.edges.push((lo, hi, fwd, bwd));
        for (u, v) in [(a, b), (b, a)] {
            self.adjacency[u].push((v, slot));
            let ids: Vec<(String, (usize, usize))> = self.adjacency[u]
                .iter()
                .map(|&(n, s)| (self.meshes[n].id().to_string(), (n, s)))
                .collect();
            let mut ids = ids;
            ids.sort_by(|x, y| x.0.cmp(&y.0));
            self.adjacency[u] = ids.into_iter().map(|(_, e)| e).collect();
        }
        self.memo.lock().expect("memo lock").clear();
        Ok(())
    }

    pub fn set_annotation(&mut self, labels: VertexLabels) -> Result<()> {
        let i = self.require(&labels.shape_id)?;
        labels.check_len(&self.meshes[i])?;
        self.annotations[i] = Some(labels);
        Ok(())
    }

    fn require(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::Network(format!("unknown shape `{id}`")))
    }

    pub fn len(&self) -> usize {
        self.meshes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meshes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn mesh(&self, id: &str) -> Result<&Arc<Mesh>> {
        Ok(&self.meshes[self.require(id)?])
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.meshes.iter().map(|m| m.id())
    }

    pub fn has_annotations(&self) -> bool {
        self.annotations.iter().any(Option::is_some)
    }

    pub fn annotation(&self, id: &str) -> Result<Option<&VertexLabels>> {
        Ok(self.annotations[self.require(id)?].as_ref())
    }

    /// Stored correspondence for an edge, in the requested direction.
    pub fn edge(&self, a: &str, b: &str) -> Option<&DenseCorrespondence> {
        let (ia, ib) = (*self.index.get(a)?, *self.index.get(b)?);
        let &(_, slot) = self.adjacency[ia].iter().find(|(n, _)| *n == ib)?;
        let (lo, _, fwd, bwd) = &self.edges[slot];
        Some(if *lo == ia { fwd } else { bwd })
    }

    /// Connected components as sorted id lists, ordered by first id.
    pub fn components(&self) -> Vec<Vec<String>> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            let mut ids = Vec::new();
            while let Some(u) = queue.pop_front() {
                ids.push(self.meshes[u].id().to_string());
                for &(v, _) in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            ids.sort();
            out.push(ids);
        }
        out.sort();
        out
    }

    fn hops_to(&self, b: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.len()];
        dist[b] = 0;
        let mut queue = VecDeque::from([b]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Minimum-hop path; among equally short paths the lexicographically
    /// smallest sequence of ids.
    pub fn shortest_path(&self, a: &str, b: &str) -> Result<Vec<String>> {
        let (ia, ib) = (self.require(a)?, self.require(b)?);
        let dist = self.hops_to(ib);
        if dist[ia] == usize::MAX {
            return Err(Error::NoPath {
                from: a.to_string(),
                to: b.to_string(),
            });
        }
        let mut path = vec![ia];
        let mut u = ia;
        while u != ib {
            // neighbours are sorted by id, so the first step closer wins
            u = self.adjacency[u]
                .iter()
                .map(|&(v, _)| v)
                .find(|&v| dist[v] + 1 == dist[u])
                .expect("BFS layering");
            path.push(u);
        }
        Ok(path.into_iter().map(|i| self.meshes[i].id().to_string()).collect())
    }

    /// Correspondence from `a` to `b` composed along the shortest path.
    pub fn correspondence_between(&self, a: &str, b: &str) -> Result<DenseCorrespondence> {
        Ok(self.correspondence_with_path(a, b)?.0.clone())
    }

    /// As [`correspondence_between`](Self::correspondence_between), also
    /// returning the path it was composed along.
    pub fn correspondence_with_path(&self, a: &str, b: &str) -> Result<Arc<(DenseCorrespondence, Vec<String>)>> {
        let key = (self.require(a)?, self.require(b)?);
        if let Some(hit) = self.memo.lock().expect("memo lock").get(&key) {
            return Ok(hit.clone());
        }
        let path = self.shortest_path(a, b)?;
        let corr = if path.len() == 1 {
            DenseCorrespondence::identity(&self.meshes[key.0])
        } else {
            let mut acc = self.edge(&path[0], &path[1]).expect("path edge").clone();
            for w in path[1..].windows(2) {
                let next = self.edge(&w[0], &w[1]).expect("path edge");
                acc = compose(&acc, next, self.mesh(&w[0])?, self.mesh(&w[1])?)?;
            }
            acc
        };
        let value = Arc::new((corr, path));
        let mut memo = self.memo.lock().expect("memo lock");
        Ok(memo.entry(key).or_insert(value).clone())
    }

    /// Labels for `target` pulled from the nearest annotated shape (fewest
    /// hops; ties by id) through dominant-weight vertices.
    pub fn propagate_annotation(&self, target: &str) -> Result<VertexLabels> {
        let it = self.require(target)?;
        if let Some(l) = &self.annotations[it] {
            return Ok(l.clone());
        }
        let dist = self.hops_to(it);
        let source = (0..self.len())
            .filter(|&i| self.annotations[i].is_some() && dist[i] != usize::MAX)
            .min_by(|&x, &y| dist[x].cmp(&dist[y]).then_with(|| self.meshes[x].id().cmp(self.meshes[y].id())))
            .ok_or_else(|| Error::Network(format!("no annotated shape reachable from `{target}`")))?;
        let src_mesh = &self.meshes[source];
        let src_labels = self.annotations[source].as_ref().expect("annotated");
        let corr = self.correspondence_between(target, src_mesh.id())?;
        let labels = corr
            .map
            .iter()
            .map(|e| match e {
                Some(sp) => src_labels.labels[sp.dominant_vertex(src_mesh)],
                None => VertexLabels::UNKNOWN,
            })
            .collect();
        Ok(VertexLabels::new(target, labels))
    }
}

/// Loads every mesh, edge correspondence and annotation named by the
/// manifest from `data_dir`. Meshes keep their file geometry; dataset
/// scale factors are applied by the caller.
pub fn build_network(manifest: &Manifest, data_dir: &Path) -> Result<ShapeNetwork> {
    let meshes: Vec<Mesh> = manifest
        .shapes()
        .par_iter()
        .map(|s| {
            let mut m = load_mesh(data_dir.join(&s.mesh))?;
            m.set_id(&s.id);
            m.meta = MeshMeta {
                dataset: s.dataset.clone(),
                category: s.category.clone(),
                template: s.template,
            };
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let mut net = ShapeNetwork::new();
    for m in meshes {
        net.add_shape(m)?;
    }
    let loaded: Vec<(DenseCorrespondence, DenseCorrespondence)> = manifest
        .edges()
        .par_iter()
        .map(|e| {
            let named = |err: Error| Error::Network(format!("edge {} -- {}: {err}", e.a, e.b));
            let ab = load_correspondence(data_dir.join(&e.forward)).map_err(named)?;
            let ba = load_correspondence(data_dir.join(&e.backward)).map_err(named)?;
            for (c, s, t, file) in [(&ab, &e.a, &e.b, &e.forward), (&ba, &e.b, &e.a, &e.backward)] {
                if &c.source_id != s || &c.target_id != t {
                    return Err(Error::Network(format!(
                        "edge {} -- {}: {} holds {} -> {}",
                        e.a,
                        e.b,
                        file.display(),
                        c.source_id,
                        c.target_id
                    )));
                }
            }
            Ok((ab, ba))
        })
        .collect::<Result<_>>()?;
    for (ab, ba) in loaded {
        net.add_edge(ab, ba)?;
    }
    for (id, path) in manifest.annotations() {
        net.set_annotation(load_labels(id, data_dir.join(path))?)?;
    }
    Ok(net)
}

/// Ground truth between a template morphed onto `mesh_b` and `mesh_b`:
/// nearest surface point, or unmatched where `missing` is set.
pub fn project_template_pair(morphed_a: &Mesh, mesh_b: &Mesh, missing: Option<&[bool]>) -> Result<DenseCorrespondence> {
    if let Some(mask) = missing {
        if mask.len() != morphed_a.vertex_count() {
            return Err(Error::InvalidArgument(format!(
                "missing mask has {} entries for {} vertices",
                mask.len(),
                morphed_a.vertex_count()
            )));
        }
    }
    let bvh = Bvh::new(mesh_b);
    let map = morphed_a
        .vertices()
        .par_iter()
        .enumerate()
        .map(|(v, p)| match missing {
            Some(mask) if mask[v] => None,
            _ => Some(bvh.project(p).0),
        })
        .collect();
    Ok(DenseCorrespondence::new(morphed_a.id(), mesh_b.id(), map))
}

/// `a -> c` through `b`: the three corners of each `b` face hit by `c_ab`
/// are carried to `c`, blended barycentrically and projected back onto
/// `c`. An unmatched corner makes the result unmatched; exact corner hits
/// reuse the `c_bc` entry verbatim.
pub fn compose(c_ab: &DenseCorrespondence, c_bc: &DenseCorrespondence, mesh_b: &Mesh, mesh_c: &Mesh) -> Result<DenseCorrespondence> {
    if c_ab.target_id != c_bc.source_id || c_ab.target_id != mesh_b.id() || c_bc.target_id != mesh_c.id() {
        return Err(Error::Correspondence {
            source_id: c_ab.source_id.clone(),
            target_id: c_bc.target_id.clone(),
            message: format!(
                "cannot compose {} -> {} with {} -> {} over meshes {} and {}",
                c_ab.source_id,
                c_ab.target_id,
                c_bc.source_id,
                c_bc.target_id,
                mesh_b.id(),
                mesh_c.id()
            ),
        });
    }
    if c_bc.len() != mesh_b.vertex_count() {
        return Err(Error::Correspondence {
            source_id: c_bc.source_id.clone(),
            target_id: c_bc.target_id.clone(),
            message: format!("{} entries for {} vertices", c_bc.len(), mesh_b.vertex_count()),
        });
    }
    let bvh = std::sync::OnceLock::new();
    let map = c_ab
        .map
        .par_iter()
        .map(|entry| -> Result<Option<SurfacePoint>> {
            let Some(sp) = entry else { return Ok(None) };
            let face = mesh_b
                .faces()
                .get(sp.face)
                .ok_or_else(|| Error::InvalidArgument(format!("face {} out of range", sp.face)))?;
            let mut corners = [None; 3];
            for k in 0..3 {
                corners[k] = c_bc.map[face[k]];
            }
            let Some(mapped) = corners.iter().copied().collect::<Option<Vec<SurfacePoint>>>() else {
                return Ok(None);
            };
            if let Some(k) = sp.weights.iter().position(|&w| w == 1.0) {
                return Ok(Some(mapped[k]));
            }
            let mut p = Point::origin();
            for (k, m) in mapped.iter().enumerate() {
                p += evaluate_surface_point(mesh_c, m)?.coords * sp.weights[k];
            }
            Ok(Some(bvh.get_or_init(|| Bvh::new(mesh_c)).project(&p).0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DenseCorrespondence::new(c_ab.source_id.clone(), c_bc.target_id.clone(), map))
}
