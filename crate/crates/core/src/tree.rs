//! Rooted trees and their finite-depth truncations.
//!
//! A [`TreeSpec`] describes an infinite rooted tree without leaves. A
//! [`TruncatedTree`] holds every vertex within distance `depth + 1` of the
//! root together with all arcs between them, indexed breadth-first.
//!
//! Arc layout: the non-root vertex `v` (breadth-first index, `v >= 1`) owns
//! the forward arc `2(v - 1)` from its parent to `v` and the backward arc
//! `2(v - 1) + 1` from `v` back to its parent. Reversal is therefore `a ^ 1`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of vertices a truncation may hold.
pub const DEFAULT_VERTEX_CAP: usize = 10_000_000;

/// Child-index path from the root; the empty path is the root.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexPath(pub Vec<u32>);

impl VertexPath {
    pub fn root() -> Self {
        VertexPath(Vec::new())
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, k: u32) -> Self {
        let mut p = self.0.clone();
        p.push(k);
        VertexPath(p)
    }

    pub fn parent(&self) -> Option<Self> {
        if self.0.is_empty() {
            None
        } else {
            Some(VertexPath(self.0[..self.0.len() - 1].to_vec()))
        }
    }
}

impl fmt::Display for VertexPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{k}")?;
        }
        Ok(())
    }
}

impl FromStr for VertexPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "root" {
            return Ok(VertexPath::root());
        }
        s.split('.')
            .map(|t| {
                t.parse::<u32>()
                    .map_err(|_| Error::Lookup(format!("malformed vertex path {s:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(VertexPath)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawSpec {
    Regular {
        degree: u32,
    },
    SphericallySymmetric {
        degrees_by_depth: Vec<u32>,
    },
    Explicit {
        children_counts: BTreeMap<String, u32>,
        default_degree: u32,
    },
}

#[derive(Clone, Debug, PartialEq)]
enum Shape {
    /// Degree of a vertex at depth `d` is `degrees[d % len]`.
    Spherical { degrees: Vec<u32>, regular: bool },
    Explicit {
        children: HashMap<VertexPath, u32>,
        /// Every listed path together with all of its ancestors.
        prefixes: HashSet<VertexPath>,
        default_degree: u32,
        raw: BTreeMap<String, u32>,
    },
}

/// Description of an infinite rooted tree with no leaves.
///
/// Vertex degrees are those of the infinite tree; truncations keep them even
/// at boundary vertices whose children were cut off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct TreeSpec {
    shape: Shape,
}

impl TryFrom<RawSpec> for TreeSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        match raw {
            RawSpec::Regular { degree } => TreeSpec::regular(degree),
            RawSpec::SphericallySymmetric { degrees_by_depth } => {
                TreeSpec::spherically_symmetric(degrees_by_depth)
            }
            RawSpec::Explicit {
                children_counts,
                default_degree,
            } => TreeSpec::explicit(children_counts, default_degree),
        }
    }
}

impl From<TreeSpec> for RawSpec {
    fn from(spec: TreeSpec) -> Self {
        match spec.shape {
            Shape::Spherical { degrees, regular } if regular => RawSpec::Regular {
                degree: degrees[0],
            },
            Shape::Spherical { degrees, .. } => RawSpec::SphericallySymmetric {
                degrees_by_depth: degrees,
            },
            Shape::Explicit {
                raw,
                default_degree,
                ..
            } => RawSpec::Explicit {
                children_counts: raw,
                default_degree,
            },
        }
    }
}

impl TreeSpec {
    pub fn regular(degree: u32) -> Result<Self> {
        if degree < 2 {
            return Err(Error::Spec(format!("degree {degree} < 2")));
        }
        Ok(TreeSpec {
            shape: Shape::Spherical {
                degrees: vec![degree],
                regular: true,
            },
        })
    }

    pub fn spherically_symmetric(degrees_by_depth: Vec<u32>) -> Result<Self> {
        if degrees_by_depth.is_empty() {
            return Err(Error::Spec("degrees_by_depth is empty".into()));
        }
        if let Some(d) = degrees_by_depth.iter().find(|&&d| d < 2) {
            return Err(Error::Spec(format!("degree {d} < 2 in degrees_by_depth")));
        }
        Ok(TreeSpec {
            shape: Shape::Spherical {
                degrees: degrees_by_depth,
                regular: false,
            },
        })
    }

    pub fn explicit(children_counts: BTreeMap<String, u32>, default_degree: u32) -> Result<Self> {
        if default_degree < 2 {
            return Err(Error::Spec(format!(
                "default_degree {default_degree} < 2"
            )));
        }
        let mut children = HashMap::new();
        let mut prefixes = HashSet::new();
        for (key, &count) in &children_counts {
            let path: VertexPath = key
                .parse()
                .map_err(|_| Error::Spec(format!("malformed vertex path {key:?}")))?;
            let min = if path.is_root() { 2 } else { 1 };
            if count < min {
                return Err(Error::Spec(format!(
                    "vertex {key:?} has {count} children, which leaves a vertex of degree < 2"
                )));
            }
            let mut p = path.clone();
            loop {
                prefixes.insert(p.clone());
                match p.parent() {
                    Some(q) => p = q,
                    None => break,
                }
            }
            children.insert(path, count);
        }
        let spec = TreeSpec {
            shape: Shape::Explicit {
                children,
                prefixes,
                default_degree,
                raw: children_counts,
            },
        };
        // every listed path must name a vertex that exists
        if let Shape::Explicit { children, .. } = &spec.shape {
            for path in children.keys() {
                let mut cur = VertexPath::root();
                for &k in &path.0 {
                    let m = spec.children_at(&cur);
                    if k >= m {
                        return Err(Error::Spec(format!(
                            "path {path} does not exist: vertex {cur} has {m} children"
                        )));
                    }
                    cur = cur.child(k);
                }
            }
        }
        Ok(spec)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tree spec serializes")
    }

    pub fn is_spherically_symmetric(&self) -> bool {
        matches!(self.shape, Shape::Spherical { .. })
    }

    /// Degrees by depth, when the tree is spherically symmetric.
    pub fn depth_degrees(&self) -> Option<&[u32]> {
        match &self.shape {
            Shape::Spherical { degrees, .. } => Some(degrees),
            Shape::Explicit { .. } => None,
        }
    }

    /// Degree in the infinite tree of the vertex at `path`.
    pub fn degree_at(&self, path: &VertexPath) -> u32 {
        match &self.shape {
            Shape::Spherical { degrees, .. } => degrees[path.depth() % degrees.len()],
            Shape::Explicit {
                children,
                default_degree,
                ..
            } => match children.get(path) {
                Some(&c) if path.is_root() => c,
                Some(&c) => c + 1,
                None => *default_degree,
            },
        }
    }

    /// Number of children `m(u)`: the degree at the root, degree minus one elsewhere.
    pub fn children_at(&self, path: &VertexPath) -> u32 {
        let d = self.degree_at(path);
        if path.is_root() {
            d
        } else {
            d - 1
        }
    }

    /// Number of vertices at each depth `0..=max_depth`, without building the tree.
    pub fn level_sizes(&self, max_depth: usize) -> Result<Vec<u128>> {
        let overflow = || Error::Range("level size overflows u128".into());
        match &self.shape {
            Shape::Spherical { degrees, .. } => {
                let mut sizes = Vec::with_capacity(max_depth + 1);
                sizes.push(1u128);
                for d in 0..max_depth {
                    let m = if d == 0 {
                        degrees[0]
                    } else {
                        degrees[d % degrees.len()] - 1
                    };
                    let next = sizes[d].checked_mul(m as u128).ok_or_else(overflow)?;
                    sizes.push(next);
                }
                Ok(sizes)
            }
            Shape::Explicit {
                prefixes,
                default_degree,
                ..
            } => {
                // listed vertices are tracked one by one, the rest in bulk
                let m_def = (*default_degree - 1) as u128;
                let mut special = vec![VertexPath::root()];
                let mut bulk: u128 = 0;
                let mut sizes = vec![1u128];
                for _ in 0..max_depth {
                    let mut next_special = Vec::new();
                    let mut next_bulk = bulk.checked_mul(m_def).ok_or_else(overflow)?;
                    for p in &special {
                        for k in 0..self.children_at(p) {
                            let c = p.child(k);
                            if prefixes.contains(&c) {
                                next_special.push(c);
                            } else {
                                next_bulk += 1;
                            }
                        }
                    }
                    special = next_special;
                    bulk = next_bulk;
                    sizes.push(bulk.checked_add(special.len() as u128).ok_or_else(overflow)?);
                }
                Ok(sizes)
            }
        }
    }

    /// Sum over all arcs strictly below `path` of the squared flow weight
    /// relative to the arc entering `path`, i.e. `Q(w) = Σ_c (1 + Q(c)) / m(w)²`.
    ///
    /// This is the tail mass multiplier used for flows cut at a truncation
    /// boundary. Returns `f64::INFINITY` if the subtree admits no
    /// square-summable flow (a tail of degree-2 vertices).
    pub fn subtree_mass(&self, path: &VertexPath) -> f64 {
        match &self.shape {
            Shape::Spherical { degrees, .. } => {
                let d = path.depth().max(1);
                let p = degrees.len();
                let (mut alpha, mut beta) = (0.0f64, 1.0f64);
                for i in 0..p {
                    let m = (degrees[(d + i) % p] - 1) as f64;
                    alpha += beta / m;
                    beta /= m;
                }
                if beta >= 1.0 {
                    f64::INFINITY
                } else {
                    alpha / (1.0 - beta)
                }
            }
            Shape::Explicit {
                prefixes,
                default_degree,
                ..
            } => {
                let m_def = (*default_degree - 1) as f64;
                let q_default = if m_def >= 2.0 {
                    1.0 / (m_def - 1.0)
                } else {
                    f64::INFINITY
                };
                self.explicit_mass(path, prefixes, q_default)
            }
        }
    }

    fn explicit_mass(&self, path: &VertexPath, prefixes: &HashSet<VertexPath>, q_default: f64) -> f64 {
        if !prefixes.contains(path) && !path.is_root() {
            return q_default;
        }
        let m = self.children_at(path) as f64;
        let mut total = 0.0;
        for k in 0..self.children_at(path) {
            let c = path.child(k);
            let q = if prefixes.contains(&c) {
                self.explicit_mass(&c, prefixes, q_default)
            } else {
                q_default
            };
            total += (1.0 + q) / (m * m);
        }
        total
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    pub depth: u32,
    /// Breadth-first index of the parent; `None` at the root.
    pub parent: Option<usize>,
    /// Position among the parent's children.
    pub child_index: u32,
    /// Degree in the infinite tree.
    pub degree: u32,
    /// `m(u)` in the infinite tree.
    pub children: u32,
    /// Index of the first child present in the truncation.
    pub first_child: usize,
    /// Number of children present in the truncation (0 on the boundary layer).
    pub present_children: u32,
}

/// All vertices within `depth + 1` of the root and the arcs between them.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedTree {
    spec: TreeSpec,
    depth: usize,
    vertices: Vec<Vertex>,
    /// `level_offsets[i]` is the index of the first vertex at depth `i`;
    /// the array has `depth + 3` entries so `level_offsets[i + 1] = |V_i|`.
    level_offsets: Vec<usize>,
}

/// Build the truncation of `spec` holding every vertex within `depth + 1` of
/// the root, using the default vertex cap.
pub fn build_tree(spec: &TreeSpec, depth: usize) -> Result<TruncatedTree> {
    build_tree_with_cap(spec, depth, DEFAULT_VERTEX_CAP)
}

pub fn build_tree_with_cap(spec: &TreeSpec, depth: usize, cap: usize) -> Result<TruncatedTree> {
    let sizes = spec.level_sizes(depth + 1)?;
    let total: u128 = sizes.iter().sum();
    if total > cap as u128 {
        return Err(Error::Size {
            what: "tree vertices",
            needed: total,
            cap,
        });
    }
    let total = total as usize;
    let explicit = matches!(spec.shape, Shape::Explicit { .. });
    let mut vertices = Vec::with_capacity(total);
    // paths are only needed to look up degrees of explicit trees
    let mut paths: Vec<VertexPath> = Vec::new();
    let mut level_offsets = vec![0usize];

    let root = VertexPath::root();
    vertices.push(Vertex {
        depth: 0,
        parent: None,
        child_index: 0,
        degree: spec.degree_at(&root),
        children: spec.children_at(&root),
        first_child: 0,
        present_children: 0,
    });
    if explicit {
        paths.push(root);
    }

    let mut level_start = 0usize;
    for d in 0..=depth {
        let level_end = vertices.len();
        level_offsets.push(level_end);
        for v in level_start..level_end {
            let first = vertices.len();
            let m = vertices[v].children;
            for k in 0..m {
                let (degree, children) = match &spec.shape {
                    Shape::Spherical { degrees, .. } => {
                        let g = degrees[(d + 1) % degrees.len()];
                        (g, g - 1)
                    }
                    Shape::Explicit { .. } => {
                        let p = paths[v].child(k);
                        let dc = (spec.degree_at(&p), spec.children_at(&p));
                        paths.push(p);
                        dc
                    }
                };
                vertices.push(Vertex {
                    depth: (d + 1) as u32,
                    parent: Some(v),
                    child_index: k,
                    degree,
                    children,
                    first_child: 0,
                    present_children: 0,
                });
            }
            vertices[v].first_child = first;
            vertices[v].present_children = m;
        }
        level_start = level_end;
    }
    level_offsets.push(vertices.len());
    // boundary vertices keep first_child = len to make ranges empty
    let n = vertices.len();
    for v in &mut vertices[level_start..] {
        v.first_child = n;
    }
    debug_assert_eq!(n, total);
    Ok(TruncatedTree {
        spec: spec.clone(),
        depth,
        vertices,
        level_offsets,
    })
}

impl TruncatedTree {
    pub fn spec(&self) -> &TreeSpec {
        &self.spec
    }

    /// Truncation depth `n`; vertices reach depth `n + 1`.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_arcs(&self) -> usize {
        2 * (self.vertices.len() - 1)
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> &Vertex {
        &self.vertices[v]
    }

    /// `|V_i|`: number of vertices within distance `i` of the root, `i <= n + 1`.
    pub fn ball_size(&self, i: usize) -> usize {
        self.level_offsets[(i + 1).min(self.level_offsets.len() - 1)]
    }

    /// Vertex index range of depth `i`.
    pub fn level(&self, i: usize) -> std::ops::Range<usize> {
        self.level_offsets[i]..self.level_offsets[i + 1]
    }

    /// Number of arcs with both endpoints in `V_i`.
    pub fn ball_arcs(&self, i: usize) -> usize {
        2 * (self.ball_size(i) - 1)
    }

    #[inline]
    pub fn reverse(&self, a: usize) -> usize {
        a ^ 1
    }

    /// Vertex owning arc `a`: the deeper endpoint.
    #[inline]
    pub fn arc_child(&self, a: usize) -> usize {
        a / 2 + 1
    }

    #[inline]
    pub fn is_forward(&self, a: usize) -> bool {
        a & 1 == 0
    }

    #[inline]
    pub fn forward_arc(&self, v: usize) -> usize {
        debug_assert!(v > 0);
        2 * (v - 1)
    }

    #[inline]
    pub fn origin(&self, a: usize) -> usize {
        let c = self.arc_child(a);
        if self.is_forward(a) {
            self.vertices[c].parent.expect("non-root")
        } else {
            c
        }
    }

    #[inline]
    pub fn terminus(&self, a: usize) -> usize {
        let c = self.arc_child(a);
        if self.is_forward(a) {
            c
        } else {
            self.vertices[c].parent.expect("non-root")
        }
    }

    /// Indices of the children of `v` present in the truncation.
    pub fn children(&self, v: usize) -> std::ops::Range<usize> {
        let x = &self.vertices[v];
        x.first_child..x.first_child + x.present_children as usize
    }

    /// Arcs leaving `v` inside the truncation: towards the parent first, then
    /// to each child in order.
    pub fn out_arcs(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        let up = if v > 0 {
            Some(self.forward_arc(v) + 1)
        } else {
            None
        };
        up.into_iter()
            .chain(self.children(v).map(move |c| self.forward_arc(c)))
    }

    pub fn path_of(&self, mut v: usize) -> VertexPath {
        let mut rev = Vec::with_capacity(self.vertices[v].depth as usize);
        while let Some(p) = self.vertices[v].parent {
            rev.push(self.vertices[v].child_index);
            v = p;
        }
        rev.reverse();
        VertexPath(rev)
    }

    pub fn find(&self, path: &VertexPath) -> Result<usize> {
        let mut v = 0usize;
        for &k in &path.0 {
            let x = &self.vertices[v];
            if k >= x.present_children {
                return Err(Error::Lookup(format!("{path} (not in depth-{} truncation)", self.depth)));
            }
            v = x.first_child + k as usize;
        }
        Ok(v)
    }

    /// `m(u)` for the vertex at `path`.
    pub fn branching_number(&self, path: &VertexPath) -> Result<u32> {
        Ok(self.vertices[self.find(path)?].children)
    }

    /// `(B_i, ∂B_i) = (|V_i|, |V_{i+1}| - |V_i|)` for `0 <= i <= n`.
    pub fn depth_counts(&self) -> Vec<(usize, usize)> {
        (0..=self.depth)
            .map(|i| (self.ball_size(i), self.ball_size(i + 1) - self.ball_size(i)))
            .collect()
    }

    /// Minimum infinite-tree degree over vertices at distance `>= r` that are
    /// present in the truncation.
    pub fn k_of_r(&self, r: usize) -> Result<u32> {
        if r > self.depth {
            return Err(Error::Range(format!(
                "radius {r} exceeds truncation depth {}",
                self.depth
            )));
        }
        Ok(self.vertices[self.level_offsets[r]..]
            .iter()
            .map(|v| v.degree)
            .min()
            .expect("truncation is non-empty"))
    }

    /// Smallest degree present in the truncation.
    pub fn min_degree(&self) -> u32 {
        self.vertices.iter().map(|v| v.degree).min().unwrap_or(0)
    }

    /// Tail mass multiplier of the infinite subtree hanging below `v`.
    pub fn subtree_mass(&self, v: usize) -> f64 {
        if self.spec.is_spherically_symmetric() {
            // depends only on depth; skip the path reconstruction
            let d = self.vertices[v].depth as usize;
            self.spec.subtree_mass(&VertexPath(vec![0; d]))
        } else {
            self.spec.subtree_mass(&self.path_of(v))
        }
    }
}
