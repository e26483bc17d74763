//! A small on-disk dataset built from synthetic blobs, with exact
//! correspondences, for tests and demos.
//!
//! Two human-kind datasets `A` and `B` with two categories each share one
//! base blob. Members of a category are smooth deformations of its
//! template (same connectivity); templates of different categories are
//! vertex permutations of each other, so every network edge is an exact
//! vertex map. The first template carries left/right labels by the sign of
//! its x coordinate.

use std::fs;
use std::path::{Path, PathBuf};

use crate::correspondence::{save_correspondence, save_labels, CorrEncoding, DenseCorrespondence, VertexLabels};
use crate::corrnet::default_edge_path;
use crate::error::{Error, Result};
use crate::mesh::{save_mesh, Mesh, MeshFormat};
use crate::synth::{blob, deform, permute_vertices};

#[derive(Debug, Clone, Copy)]
pub struct ToySpec {
    /// Icosphere subdivision level of the base blob (level 3: 642 vertices).
    pub level: usize,
    pub per_category: usize,
    /// Train pairs drawn from datasets A and B.
    pub train_pairs: (usize, usize),
    /// Test pairs drawn from datasets A and B.
    pub test_pairs: (usize, usize),
}

impl Default for ToySpec {
    /// Ten instances: train A 4, B 2 (repeated twice), test 1 + 1.
    fn default() -> Self {
        Self {
            level: 3,
            per_category: 3,
            train_pairs: (4, 2),
            test_pairs: (1, 1),
        }
    }
}

const CATEGORIES: [(&str, &str, &str); 4] = [("A", "a0", "train"), ("A", "a1", "test"), ("B", "b0", "train"), ("B", "b1", "test")];

fn save_corr(dir: &Path, a: &Mesh, b: &Mesh, to: &[usize]) -> Result<()> {
    let map: Vec<Option<usize>> = to.iter().map(|&t| Some(t)).collect();
    let c = DenseCorrespondence::from_vertex_map(a.id(), b, &map)?;
    save_correspondence(&c, dir.join(default_edge_path(a.id(), b.id())), CorrEncoding::Text)
}

/// Both directions of an exact vertex map `a -> b`.
fn save_edge(dir: &Path, a: &Mesh, b: &Mesh, a_to_b: &[usize]) -> Result<()> {
    let mut inverse = vec![0; a_to_b.len()];
    for (i, &j) in a_to_b.iter().enumerate() {
        inverse[j] = i;
    }
    save_corr(dir, a, b, a_to_b)?;
    save_corr(dir, b, a, &inverse)
}

/// Writes meshes, correspondences, labels and `manifest.txt` into `dir`;
/// returns the manifest path.
pub fn write_toy_dataset(dir: &Path, spec: ToySpec) -> Result<PathBuf> {
    if spec.per_category < 2 {
        return Err(Error::InvalidArgument("toy categories need at least two shapes".into()));
    }
    let mkdir = |p: &Path| fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mkdir(&dir.join("corr"))?;
    mkdir(&dir.join("labels"))?;
    let base = blob(spec.level, 11);
    let mut templates: Vec<(Mesh, Vec<usize>)> = Vec::new();
    for (ci, (ds, cat, _)) in CATEGORIES.iter().enumerate() {
        let (mut tpl, base_to_tpl) = if ci == 0 {
            (base.clone(), (0..base.vertex_count()).collect())
        } else {
            permute_vertices(&deform(&base, 100 + ci as u64, 0.15), 200 + ci as u64)
        };
        tpl.set_id(format!("{ds}.{cat}.000"));
        mkdir(&dir.join(ds).join(cat))?;
        for k in 0..spec.per_category {
            let mut m = if k == 0 { tpl.clone() } else { deform(&tpl, 1000 * ci as u64 + k as u64, 0.08) };
            m.set_id(format!("{ds}.{cat}.{k:03}"));
            save_mesh(&m, dir.join(ds).join(cat).join(format!("{k:03}.ply")), MeshFormat::PlyBinary)?;
            if k > 0 {
                let ident: Vec<usize> = (0..m.vertex_count()).collect();
                save_edge(dir, &tpl, &m, &ident)?;
            }
        }
        templates.push((tpl, base_to_tpl));
    }
    // Template links a0 -- a1, a0 -- b0, b0 -- b1 through the base ordering.
    let mut edges = String::new();
    for (i, j) in [(0, 1), (0, 2), (2, 3)] {
        let (ti, bi) = &templates[i];
        let (tj, bj) = &templates[j];
        let mut inv_i = vec![0; bi.len()];
        for (b, &v) in bi.iter().enumerate() {
            inv_i[v] = b;
        }
        let i_to_j: Vec<usize> = (0..ti.vertex_count()).map(|v| bj[inv_i[v]]).collect();
        save_edge(dir, ti, tj, &i_to_j)?;
        edges.push_str(&format!("edge {} {}\n", ti.id(), tj.id()));
    }
    let first = &templates[0].0;
    let labels = first
        .vertices()
        .iter()
        .map(|p| if p.x < 0.0 { VertexLabels::LEFT } else { VertexLabels::RIGHT })
        .collect();
    save_labels(&VertexLabels::new(first.id(), labels), dir.join("labels/a0.txt"))?;

    let mut text = String::from("seed 5\ndataset A scale=1 kind=human\ndataset B scale=2 kind=human\n");
    for (ds, cat, _) in CATEGORIES {
        text.push_str(&format!("category {ds} {cat} count={}\n", spec.per_category));
    }
    text.push_str(&edges);
    text.push_str(&format!("annotation {} labels/a0.txt\n", first.id()));
    for (ds, cat, split) in CATEGORIES {
        text.push_str(&format!("split {split} {ds} {cat}\n"));
    }
    for (split, (a, b)) in [("train", spec.train_pairs), ("test", spec.test_pairs)] {
        for (ds, n) in [("A", a), ("B", b)] {
            if n > 0 {
                text.push_str(&format!("pairs {split} {ds} {n}\n"));
            }
        }
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
