//! Line-oriented dataset manifest.
//!
//! Blank lines and `#` comments are ignored. Each record is a keyword,
//! positional fields and `key=value` attributes:
//!
//! ```text
//! seed <u64>
//! dataset <name> scale=<f64> [kind=<kind>]
//! category <dataset> <name> count=<n> [kind=<kind>] [template=<i>] [ext=<ext>]
//! shape <id> dataset=<d> category=<c> mesh=<path> [kind=<kind>] [template]
//! edge <a> <b> [forward=<path>] [backward=<path>]
//! annotation <shape> <path>
//! split <train|val|test> <dataset> <category>[,<category>...]
//! pairs <train|val|test> <dataset> <count>
//! ```
//!
//! `kind` is `human`, `four-legged` or `centaur`. A `category` record
//! expands to shapes `<dataset>.<category>.<NNN>` with meshes at
//! `<dataset>/<category>/<NNN>.<ext>` (default `ply`); shape `template`
//! (default 0) is the category template. Every other shape of a category
//! gets an implicit edge to its template. Edge correspondence files
//! default to `corr/<a>__<b>.corr` and `corr/<b>__<a>.corr`. All paths are
//! relative to the data directory.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ShapeKind {
    Human,
    FourLegged,
    Centaur,
}

impl FromStr for ShapeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "human" => Ok(ShapeKind::Human),
            "four-legged" => Ok(ShapeKind::FourLegged),
            "centaur" => Ok(ShapeKind::Centaur),
            _ => Err(format!("unknown kind `{s}` (human, four-legged, centaur)")),
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ShapeKind::Human => "human",
            ShapeKind::FourLegged => "four-legged",
            ShapeKind::Centaur => "centaur",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split `{s}` (train, val, test)")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub name: String,
    pub scale: f64,
    pub kind: Option<ShapeKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeRecord {
    pub id: String,
    pub dataset: String,
    pub category: String,
    pub kind: ShapeKind,
    pub template: bool,
    pub mesh: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRecord {
    pub a: String,
    pub b: String,
    /// Correspondence file `a -> b`.
    pub forward: PathBuf,
    /// Correspondence file `b -> a`.
    pub backward: PathBuf,
    pub implicit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairQuota {
    pub split: Split,
    pub dataset: String,
    pub count: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub seed: u64,
    datasets: Vec<DatasetRecord>,
    shapes: Vec<ShapeRecord>,
    index: HashMap<String, usize>,
    edges: Vec<EdgeRecord>,
    annotations: Vec<(String, PathBuf)>,
    splits: BTreeMap<(String, String), Split>,
    quotas: Vec<PairQuota>,
}

pub fn default_edge_path(a: &str, b: &str) -> PathBuf {
    PathBuf::from("corr").join(format!("{a}__{b}.corr"))
}

struct Line<'a> {
    path: &'a Path,
    number: usize,
    positional: Vec<&'a str>,
    attrs: BTreeMap<&'a str, &'a str>,
    flags: BTreeSet<&'a str>,
}

impl<'a> Line<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::format(self.path, format!("line {}", self.number), msg)
    }

    fn arity(&self, n: usize) -> Result<()> {
        if self.positional.len() != n {
            return Err(self.err(format!(
                "`{}` takes {} positional fields, found {}",
                self.positional[0],
                n - 1,
                self.positional.len() - 1
            )));
        }
        Ok(())
    }

    fn take(&mut self, key: &str) -> Option<&'a str> {
        self.attrs.remove(key)
    }

    fn require(&mut self, key: &str) -> Result<&'a str> {
        self.take(key)
            .ok_or_else(|| self.err(format!("missing attribute `{key}=`")))
    }

    fn parse<T: FromStr>(&self, key: &str, v: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        v.parse()
            .map_err(|e: T::Err| self.err(format!("bad value for `{key}`: {e}")))
    }

    fn flag(&mut self, name: &str) -> bool {
        self.flags.remove(name)
    }

    fn finish(self) -> Result<()> {
        if let Some(k) = self.attrs.keys().next() {
            return Err(self.err(format!("unknown attribute `{k}`")));
        }
        if let Some(k) = self.flags.iter().next() {
            return Err(self.err(format!("unknown flag `{k}`")));
        }
        Ok(())
    }
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses and cross-checks a manifest; `path` only labels errors.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut m = Manifest::default();
        let mut categories: Vec<(Line, String, String)> = Vec::new();
        let mut explicit_edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut line = Line {
                path,
                number: i + 1,
                positional: Vec::new(),
                attrs: BTreeMap::new(),
                flags: BTreeSet::new(),
            };
            for tok in content.split_whitespace() {
                match tok.split_once('=') {
                    Some((k, v)) => {
                        if line.attrs.insert(k, v).is_some() {
                            return Err(line.err(format!("repeated attribute `{k}`")));
                        }
                    }
                    None if line.positional.is_empty() || line.positional[0] != "shape" || line.positional.len() < 2 => {
                        line.positional.push(tok)
                    }
                    None => {
                        line.flags.insert(tok);
                    }
                }
            }
            match line.positional[0] {
                "seed" => {
                    line.arity(2)?;
                    m.seed = line.parse("seed", line.positional[1])?;
                    line.finish()?;
                }
                "dataset" => {
                    line.arity(2)?;
                    let name = line.positional[1].to_string();
                    let scale_s = line.require("scale")?;
                    let scale: f64 = line.parse("scale", scale_s)?;
                    if !(scale > 0.0 && scale.is_finite()) {
                        return Err(line.err("scale must be positive"));
                    }
                    let kind = match line.take("kind") {
                        Some(k) => Some(line.parse("kind", k)?),
                        None => None,
                    };
                    if m.datasets.iter().any(|d| d.name == name) {
                        return Err(line.err(format!("dataset `{name}` declared twice")));
                    }
                    line.finish()?;
                    m.datasets.push(DatasetRecord { name, scale, kind });
                }
                "category" => {
                    line.arity(3)?;
                    let (d, c) = (line.positional[1].to_string(), line.positional[2].to_string());
                    categories.push((line, d, c));
                }
                "shape" => {
                    if line.positional.len() != 2 {
                        return Err(line.err("`shape` takes one positional field"));
                    }
                    let id = line.positional[1].to_string();
                    let dataset = line.require("dataset")?.to_string();
                    let category = line.require("category")?.to_string();
                    let mesh = PathBuf::from(line.require("mesh")?);
                    let kind = match line.take("kind") {
                        Some(k) => Some(line.parse::<ShapeKind>("kind", k)?),
                        None => None,
                    };
                    let template = line.flag("template");
                    let ds = m
                        .datasets
                        .iter()
                        .find(|x| x.name == dataset)
                        .ok_or_else(|| line.err(format!("unknown dataset `{dataset}`")))?;
                    let kind = kind
                        .or(ds.kind)
                        .ok_or_else(|| line.err("no kind given for shape or dataset"))?;
                    line.finish()?;
                    m.push_shape(
                        ShapeRecord {
                            id,
                            dataset,
                            category,
                            kind,
                            template,
                            mesh,
                        },
                        path,
                        i + 1,
                    )?;
                }
                "edge" => {
                    line.arity(3)?;
                    let (a, b) = (line.positional[1].to_string(), line.positional[2].to_string());
                    let forward = line.take("forward").map(PathBuf::from).unwrap_or_else(|| default_edge_path(&a, &b));
                    let backward = line.take("backward").map(PathBuf::from).unwrap_or_else(|| default_edge_path(&b, &a));
                    if a == b {
                        return Err(line.err("self edge"));
                    }
                    let n = line.number;
                    line.finish()?;
                    explicit_edges.push((
                        n,
                        EdgeRecord {
                            a,
                            b,
                            forward,
                            backward,
                            implicit: false,
                        },
                    ));
                }
                "annotation" => {
                    line.arity(3)?;
                    let rec = (line.positional[1].to_string(), PathBuf::from(line.positional[2]));
                    line.finish()?;
                    m.annotations.push(rec);
                }
                "split" => {
                    line.arity(4)?;
                    let split: Split = line.parse("split", line.positional[1])?;
                    let dataset = line.positional[2].to_string();
                    for cat in line.positional[3].split(',').filter(|s| !s.is_empty()) {
                        if let Some(prev) = m.splits.insert((dataset.clone(), cat.to_string()), split) {
                            return Err(line.err(format!("category {dataset}/{cat} already in split {prev}")));
                        }
                    }
                    line.finish()?;
                }
                "pairs" => {
                    line.arity(4)?;
                    let split: Split = line.parse("split", line.positional[1])?;
                    let dataset = line.positional[2].to_string();
                    let count: usize = line.parse("count", line.positional[3])?;
                    if m.quotas.iter().any(|q| q.split == split && q.dataset == dataset) {
                        return Err(line.err(format!("duplicate pairs record for {split}/{dataset}")));
                    }
                    line.finish()?;
                    m.quotas.push(PairQuota { split, dataset, count });
                }
                other => return Err(line.err(format!("unknown record `{other}`"))),
            }
        }

        for (mut line, dataset, category) in categories {
            let count_s = line.require("count")?;
            let count: usize = line.parse("count", count_s)?;
            let template: usize = match line.take("template") {
                Some(t) => line.parse("template", t)?,
                None => 0,
            };
            let ext = line.take("ext").unwrap_or("ply").to_string();
            let kind = match line.take("kind") {
                Some(k) => Some(line.parse::<ShapeKind>("kind", k)?),
                None => None,
            };
            let ds = m
                .datasets
                .iter()
                .find(|x| x.name == dataset)
                .ok_or_else(|| line.err(format!("unknown dataset `{dataset}`")))?;
            let kind = kind
                .or(ds.kind)
                .ok_or_else(|| line.err("no kind given for category or dataset"))?;
            if count == 0 || template >= count {
                return Err(line.err(format!("template {template} outside a category of {count}")));
            }
            let n = line.number;
            line.finish()?;
            for k in 0..count {
                let stem = format!("{k:03}");
                m.push_shape(
                    ShapeRecord {
                        id: format!("{dataset}.{category}.{stem}"),
                        dataset: dataset.clone(),
                        category: category.clone(),
                        kind,
                        template: k == template,
                        mesh: PathBuf::from(&dataset).join(&category).join(format!("{stem}.{ext}")),
                    },
                    path,
                    n,
                )?;
            }
        }

        m.add_implicit_edges(path)?;
        let mut seen: BTreeSet<(String, String)> =
            m.edges.iter().map(|e| ordered(&e.a, &e.b)).collect();
        for (n, e) in explicit_edges {
            for id in [&e.a, &e.b] {
                if !m.index.contains_key(id) {
                    return Err(Error::format(path, format!("line {n}"), format!("edge names unknown shape `{id}`")));
                }
            }
            if !seen.insert(ordered(&e.a, &e.b)) {
                return Err(Error::format(path, format!("line {n}"), format!("duplicate edge {} -- {}", e.a, e.b)));
            }
            m.edges.push(e);
        }
        for (id, _) in &m.annotations {
            if !m.index.contains_key(id) {
                return Err(Error::format(path, "annotations", format!("unknown shape `{id}`")));
            }
        }
        for (d, c) in m.splits.keys() {
            if !m.shapes.iter().any(|s| &s.dataset == d && &s.category == c) {
                return Err(Error::format(path, "splits", format!("split names unknown category {d}/{c}")));
            }
        }
        for q in &m.quotas {
            if !m.splits.iter().any(|((d, _), s)| d == &q.dataset && *s == q.split) {
                return Err(Error::format(
                    path,
                    "pairs",
                    format!("{}/{} has a pair quota but no categories in that split", q.split, q.dataset),
                ));
            }
        }
        Ok(m)
    }

    fn push_shape(&mut self, rec: ShapeRecord, path: &Path, line: usize) -> Result<()> {
        if self.index.contains_key(&rec.id) {
            return Err(Error::format(path, format!("line {line}"), format!("shape `{}` declared twice", rec.id)));
        }
        self.index.insert(rec.id.clone(), self.shapes.len());
        self.shapes.push(rec);
        Ok(())
    }

    fn add_implicit_edges(&mut self, path: &Path) -> Result<()> {
        let mut templates: BTreeMap<(&str, &str), &str> = BTreeMap::new();
        for s in &self.shapes {
            if s.template {
                if let Some(prev) = templates.insert((&s.dataset, &s.category), &s.id) {
                    return Err(Error::format(
                        path,
                        "shapes",
                        format!("category {}/{} has two templates: {prev}, {}", s.dataset, s.category, s.id),
                    ));
                }
            }
        }
        let mut edges = Vec::new();
        for s in &self.shapes {
            if s.template {
                continue;
            }
            if let Some(t) = templates.get(&(s.dataset.as_str(), s.category.as_str())) {
                edges.push(EdgeRecord {
                    a: t.to_string(),
                    b: s.id.clone(),
                    forward: default_edge_path(t, &s.id),
                    backward: default_edge_path(&s.id, t),
                    implicit: true,
                });
            }
        }
        self.edges = edges;
        Ok(())
    }

    pub fn datasets(&self) -> &[DatasetRecord] {
        &self.datasets
    }

    pub fn dataset(&self, name: &str) -> Option<&DatasetRecord> {
        self.datasets.iter().find(|d| d.name == name)
    }

    pub fn shapes(&self) -> &[ShapeRecord] {
        &self.shapes
    }

    pub fn shape(&self, id: &str) -> Option<&ShapeRecord> {
        self.index.get(id).map(|&i| &self.shapes[i])
    }

    pub fn shape_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    pub fn annotations(&self) -> &[(String, PathBuf)] {
        &self.annotations
    }

    pub fn split_of(&self, dataset: &str, category: &str) -> Option<Split> {
        self.splits.get(&(dataset.to_string(), category.to_string())).copied()
    }

    pub fn split_categories(&self, split: Split) -> Vec<(String, String)> {
        self.splits
            .iter()
            .filter(|(_, s)| **s == split)
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn quotas(&self) -> &[PairQuota] {
        &self.quotas
    }

    /// Connected components of the shape graph over shape indices, each
    /// sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.shapes.len();
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            let (a, b) = (self.index[&e.a], self.index[&e.b]);
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut comp = vec![usize::MAX; n];
        let mut out = Vec::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut stack = vec![s];
            let mut members = Vec::new();
            comp[s] = id;
            while let Some(u) = stack.pop() {
                members.push(u);
                for &v in &adj[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        stack.push(v);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Template ids grouped by connected component; a connected network has
    /// exactly one group.
    pub fn template_components(&self) -> Vec<Vec<String>> {
        self.components()
            .into_iter()
            .map(|c| {
                c.into_iter()
                    .filter(|&i| self.shapes[i].template)
                    .map(|i| self.shapes[i].id.clone())
                    .collect::<Vec<_>>()
            })
            .filter(|c| !c.is_empty())
            .collect()
    }
}

fn ordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}
