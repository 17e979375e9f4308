//! Weighted graphs with a marked vertex set and the walk they induce.
//!
//! Arc `2i` runs along edge `i` as listed, arc `2i + 1` against it, so
//! reversal is `a ^ 1` as on trees.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cnorm, hermitian_eigen, ComplexMatrix, HermEigen};
use crate::operators::{LinearOperator, OperatorTag};
use crate::tree::TruncatedTree;

/// Tolerance on `Σ_{o(a)=v} |α(a)|² = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawAlpha {
    Named(String),
    PerArc(Vec<[f64; 2]>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawGraph {
    vertices: usize,
    edges: Vec<[usize; 2]>,
    #[serde(default)]
    marked: Vec<usize>,
    alpha: RawAlpha,
}

#[derive(Clone, Debug)]
pub struct MarkedGraph {
    origin: Vec<usize>,
    out: Vec<Vec<usize>>,
    alpha: Vec<C64>,
    marked: Vec<bool>,
}

impl MarkedGraph {
    /// Graph with isotropic weights `α(a) = 1/√deg(o(a))`.
    pub fn isotropic(vertices: usize, edges: &[[usize; 2]], marked: &[usize]) -> Result<Self> {
        let out = Self::adjacency(vertices, edges)?;
        let mut alpha = vec![C64::default(); 2 * edges.len()];
        for arcs in &out {
            for &a in arcs {
                alpha[a] = C64::new(1.0 / (arcs.len() as f64).sqrt(), 0.0);
            }
        }
        Self::with_alpha(vertices, edges, marked, alpha)
    }

    pub fn with_alpha(
        vertices: usize,
        edges: &[[usize; 2]],
        marked: &[usize],
        alpha: Vec<C64>,
    ) -> Result<Self> {
        let out = Self::adjacency(vertices, edges)?;
        if alpha.len() != 2 * edges.len() {
            return Err(Error::dim("arc weights", 2 * edges.len(), alpha.len()));
        }
        let mut mask = vec![false; vertices];
        for &v in marked {
            if v >= vertices {
                return Err(Error::Spec(format!("marked vertex {v} out of range")));
            }
            mask[v] = true;
        }
        for (v, arcs) in out.iter().enumerate() {
            let s: f64 = arcs.iter().map(|&a| alpha[a].norm_sqr()).sum();
            if (s - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::Spec(format!(
                    "weights out of vertex {v} have squared norm {s}, expected 1"
                )));
            }
        }
        let origin = edges.iter().flat_map(|&[u, v]| [u, v]).collect();
        Ok(MarkedGraph {
            origin,
            out,
            alpha,
            marked: mask,
        })
    }

    fn adjacency(vertices: usize, edges: &[[usize; 2]]) -> Result<Vec<Vec<usize>>> {
        let mut out = vec![Vec::new(); vertices];
        for (i, &[u, v]) in edges.iter().enumerate() {
            if u >= vertices || v >= vertices {
                return Err(Error::Spec(format!("edge {i} has an endpoint out of range")));
            }
            if u == v {
                return Err(Error::Spec(format!("edge {i} is a self-loop")));
            }
            out[u].push(2 * i);
            out[v].push(2 * i + 1);
        }
        // connectivity
        let mut seen = vec![false; vertices];
        let mut stack = vec![0usize];
        if vertices > 0 {
            seen[0] = true;
        }
        while let Some(v) = stack.pop() {
            for &a in &out[v] {
                let w = if a % 2 == 0 { edges[a / 2][1] } else { edges[a / 2][0] };
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Spec("graph is not connected".into()));
        }
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawGraph = serde_json::from_str(text)?;
        match raw.alpha {
            RawAlpha::Named(name) if name == "isotropic" => {
                Self::isotropic(raw.vertices, &raw.edges, &raw.marked)
            }
            RawAlpha::Named(name) => Err(Error::Spec(format!("unknown weight scheme {name:?}"))),
            RawAlpha::PerArc(w) => Self::with_alpha(
                raw.vertices,
                &raw.edges,
                &raw.marked,
                w.into_iter().map(|[re, im]| C64::new(re, im)).collect(),
            ),
        }
    }

    /// The truncation as a marked graph with `M = V_n^c`.
    ///
    /// Interior weights are `1/√deg` with the infinite-tree degree. Arcs out
    /// of the outer layer carry weight 1; they leave a marked vertex and never
    /// enter any operator.
    pub fn from_tree(tree: &TruncatedTree, cutoff: usize) -> Result<Self> {
        if cutoff > tree.depth() {
            return Err(Error::Range(format!(
                "cutoff {cutoff} exceeds truncation depth {}",
                tree.depth()
            )));
        }
        let nv = tree.num_vertices();
        let edges: Vec<[usize; 2]> = (1..nv)
            .map(|v| [tree.vertex(v).parent.expect("non-root"), v])
            .collect();
        let alpha = (0..tree.num_arcs())
            .map(|a| {
                let o = tree.vertex(tree.origin(a));
                let d = if o.present_children == o.children { o.degree } else { 1 };
                C64::new(1.0 / (d as f64).sqrt(), 0.0)
            })
            .collect();
        let marked: Vec<usize> = (tree.ball_size(cutoff)..nv).collect();
        Self::with_alpha(nv, &edges, &marked, alpha)
    }

    pub fn num_vertices(&self) -> usize {
        self.out.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.origin.len()
    }

    pub fn origin(&self, a: usize) -> usize {
        self.origin[a]
    }

    pub fn terminus(&self, a: usize) -> usize {
        self.origin[a ^ 1]
    }

    pub fn alpha(&self, a: usize) -> C64 {
        self.alpha[a]
    }

    pub fn is_marked(&self, v: usize) -> bool {
        self.marked[v]
    }

    /// Unmarked vertices in increasing order.
    pub fn unmarked(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&v| !self.marked[v]).collect()
    }

    fn check_arcs(&self, psi: &[C64]) -> Result<()> {
        if psi.len() != self.num_arcs() {
            return Err(Error::dim("arc state", self.num_arcs(), psi.len()));
        }
        Ok(())
    }

    fn check_vertices(&self, f: &[C64]) -> Result<()> {
        if f.len() != self.num_vertices() {
            return Err(Error::dim("vertex function", self.num_vertices(), f.len()));
        }
        Ok(())
    }

    /// `(d_{T,M}ψ)(v) = Σ_{t(e)=v} α(ē)ψ(e)` off `M`.
    pub fn apply_dt(&self, psi: &[C64]) -> Result<Vec<C64>> {
        self.check_arcs(psi)?;
        Ok((0..self.num_vertices())
            .map(|v| {
                if self.marked[v] {
                    return C64::default();
                }
                self.out[v].iter().map(|&f| self.alpha[f] * psi[f ^ 1]).sum()
            })
            .collect())
    }

    /// `(d_{O,M}ψ)(v) = Σ_{o(e)=v} α(e)ψ(e)` off `M`.
    pub fn apply_do(&self, psi: &[C64]) -> Result<Vec<C64>> {
        self.check_arcs(psi)?;
        Ok((0..self.num_vertices())
            .map(|v| {
                if self.marked[v] {
                    return C64::default();
                }
                self.out[v].iter().map(|&e| self.alpha[e] * psi[e]).sum()
            })
            .collect())
    }

    pub fn apply_dt_adjoint(&self, f: &[C64]) -> Result<Vec<C64>> {
        self.check_vertices(f)?;
        Ok((0..self.num_arcs())
            .map(|e| {
                let t = self.terminus(e);
                if self.marked[t] {
                    C64::default()
                } else {
                    self.alpha[e ^ 1].conj() * f[t]
                }
            })
            .collect())
    }

    pub fn apply_do_adjoint(&self, f: &[C64]) -> Result<Vec<C64>> {
        self.check_vertices(f)?;
        Ok((0..self.num_arcs())
            .map(|e| {
                let o = self.origin(e);
                if self.marked[o] {
                    C64::default()
                } else {
                    self.alpha[e].conj() * f[o]
                }
            })
            .collect())
    }

    pub fn apply_shift(&self, psi: &[C64]) -> Result<Vec<C64>> {
        self.check_arcs(psi)?;
        Ok((0..psi.len()).map(|a| psi[a ^ 1]).collect())
    }

    /// `U_M = S(2 d_{T,M}^* d_{T,M} − 1)`.
    pub fn apply_walk(&self, psi: &[C64]) -> Result<Vec<C64>> {
        let f = self.apply_dt(psi)?;
        let back = self.apply_dt_adjoint(&f)?;
        Ok((0..psi.len())
            .map(|a| 2.0 * back[a ^ 1] - psi[a ^ 1])
            .collect())
    }

    /// `T_M = d_{T,M} d_{O,M}^*` on all vertices; zero rows and columns on `M`.
    pub fn apply_transition(&self, f: &[C64]) -> Result<Vec<C64>> {
        self.apply_dt(&self.apply_do_adjoint(f)?)
    }

    /// Matrix of `T_M` on the unmarked block, indexed as [`MarkedGraph::unmarked`].
    pub fn transition_block(&self) -> ComplexMatrix {
        let keep = self.unmarked();
        let mut pos = vec![usize::MAX; self.num_vertices()];
        for (i, &v) in keep.iter().enumerate() {
            pos[v] = i;
        }
        let mut m = ComplexMatrix::zeros(keep.len(), keep.len());
        for e in 0..self.num_arcs() {
            let (u, v) = (self.terminus(e), self.origin(e));
            if self.marked[u] || self.marked[v] {
                continue;
            }
            let (i, j) = (pos[u], pos[v]);
            m.set(i, j, m.get(i, j) + self.alpha[e ^ 1] * self.alpha[e].conj());
        }
        m
    }

    /// Eigenpairs of `T_M` on the unmarked block, with vectors extended by
    /// zero to all vertices.
    pub fn transition_eigen(&self) -> Result<(Vec<f64>, Vec<Vec<C64>>)> {
        let keep = self.unmarked();
        let HermEigen { values, vectors } = hermitian_eigen(&self.transition_block())?;
        let full = vectors
            .into_iter()
            .map(|v| {
                let mut f = vec![C64::default(); self.num_vertices()];
                for (i, &u) in keep.iter().enumerate() {
                    f[u] = v[i];
                }
                f
            })
            .collect();
        Ok((values, full))
    }

    /// `d_{±,M}^* f` for an eigenvector `f` of `T_M` with eigenvalue `ν`,
    /// returned with its walk eigenvalue `e^{±i arccos ν}`.
    pub fn lift(&self, nu: f64, f: &[C64], plus: bool) -> Result<(C64, Vec<C64>)> {
        if nu.abs() >= 1.0 - 1e-8 {
            return Err(Error::Precondition(format!(
                "eigenvalue {nu} too close to ±1 to lift"
            )));
        }
        let theta = nu.acos();
        let mu = C64::from_polar(1.0, if plus { theta } else { -theta });
        let a = self.apply_dt_adjoint(f)?;
        let b = self.apply_do_adjoint(f)?;
        let s = 1.0 / (2.0 * (1.0 - nu * nu)).sqrt();
        Ok((mu, a.iter().zip(&b).map(|(x, y)| (x - mu * y) * s).collect()))
    }

    /// Largest `|λ|` over the spectrum of `T_M`.
    pub fn transition_spectral_radius(&self) -> Result<f64> {
        let (values, _) = self.transition_eigen()?;
        Ok(values.iter().fold(0.0, |m, v| m.max(v.abs())))
    }

    /// `‖U_M v − μ v‖ / ‖v‖`.
    pub fn walk_residual(&self, mu: C64, v: &[C64]) -> Result<f64> {
        let uv = self.apply_walk(v)?;
        let r: Vec<C64> = uv.iter().zip(v).map(|(a, b)| a - mu * b).collect();
        Ok(cnorm(&r) / cnorm(v))
    }
}

/// One of the marked-graph operators.
#[derive(Clone, Copy, Debug)]
pub struct MarkedOperator<'a> {
    pub graph: &'a MarkedGraph,
    pub tag: OperatorTag,
}

impl<'a> MarkedOperator<'a> {
    pub fn new(graph: &'a MarkedGraph, tag: OperatorTag) -> Result<Self> {
        use OperatorTag::*;
        match tag {
            Shift | MarkedBoundaryT | MarkedBoundaryO | MarkedWalk | MarkedTransition => {
                Ok(MarkedOperator { graph, tag })
            }
            other => Err(Error::Precondition(format!("{other} is a tree operator"))),
        }
    }
}

impl LinearOperator for MarkedOperator<'_> {
    fn tag(&self) -> OperatorTag {
        self.tag
    }

    fn input_dim(&self) -> usize {
        match self.tag {
            OperatorTag::MarkedTransition => self.graph.num_vertices(),
            _ => self.graph.num_arcs(),
        }
    }

    fn output_dim(&self) -> usize {
        match self.tag {
            OperatorTag::Shift | OperatorTag::MarkedWalk => self.graph.num_arcs(),
            _ => self.graph.num_vertices(),
        }
    }

    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        let g = self.graph;
        match self.tag {
            OperatorTag::Shift => g.apply_shift(x),
            OperatorTag::MarkedBoundaryT => g.apply_dt(x),
            OperatorTag::MarkedBoundaryO => g.apply_do(x),
            OperatorTag::MarkedWalk => g.apply_walk(x),
            OperatorTag::MarkedTransition => g.apply_transition(x),
            _ => unreachable!("rejected in new"),
        }
    }
}

/// Cycle `C_n` with edges `(i, i+1 mod n)`.
pub fn cycle_edges(n: usize) -> Vec<[usize; 2]> {
    (0..n).map(|i| [i, (i + 1) % n]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cdot;
    use crate::operators::{apply_walk, materialize, ArcState, TreeOperator, VertexFunction};
    use crate::tree::{build_tree, TreeSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tree_truncation_reproduces_cutoff_walk() {
        let tree = build_tree(&TreeSpec::regular(3).unwrap(), 3).unwrap();
        for n in 0..=3 {
            let g = MarkedGraph::from_tree(&tree, n).unwrap();
            let um = materialize(&MarkedOperator::new(&g, OperatorTag::MarkedWalk).unwrap(), 5000).unwrap();
            let un = materialize(&TreeOperator::new(&tree, OperatorTag::CutoffWalk, Some(n)).unwrap(), 5000)
                .unwrap();
            assert!(um.max_abs_diff(&un) < 1e-14, "n = {n}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = MarkedGraph::from_tree(&tree, 2).unwrap();
        let psi = ArcState::random(tree.num_arcs(), &mut rng);
        let a = g.apply_walk(&psi).unwrap();
        let b = apply_walk(&tree, &psi, Some(2)).unwrap();
        assert!(ArcState(a).sub(&b).max_abs() < 1e-14);
    }

    #[test]
    fn all_marked_is_minus_shift() {
        let g = MarkedGraph::isotropic(5, &cycle_edges(5), &[0, 1, 2, 3, 4]).unwrap();
        let u = materialize(&MarkedOperator::new(&g, OperatorTag::MarkedWalk).unwrap(), 100).unwrap();
        let s = materialize(&MarkedOperator::new(&g, OperatorTag::Shift).unwrap(), 100).unwrap();
        for i in 0..u.rows() {
            for j in 0..u.cols() {
                assert_eq!(u.get(i, j), -s.get(i, j));
            }
        }
    }

    #[test]
    fn cycles_with_one_mark_have_subunit_transition() {
        for n in [4usize, 6] {
            let g = MarkedGraph::isotropic(n, &cycle_edges(n), &[0]).unwrap();
            let r = g.transition_spectral_radius().unwrap();
            // path on n-1 vertices with weights 1/2: cos(π/n)
            assert!((r - (std::f64::consts::PI / n as f64).cos()).abs() < 1e-12);
            assert!(r < 1.0);
        }
    }

    #[test]
    fn identities_with_complex_weights() {
        let edges = vec![[0, 1], [1, 2], [2, 0], [2, 3]];
        let mut alpha = vec![C64::default(); 8];
        let ph = |t: f64| C64::from_polar(1.0, t);
        // vertex 0 out: arcs 0, 5; vertex 1: 1, 2; vertex 2: 3, 4, 6; vertex 3: 7
        alpha[0] = ph(0.3) * 0.6;
        alpha[5] = ph(-1.1) * 0.8;
        alpha[1] = ph(2.0) * (0.5f64).sqrt();
        alpha[2] = ph(0.7) * (0.5f64).sqrt();
        alpha[3] = ph(0.1) * (0.2f64).sqrt();
        alpha[4] = ph(-0.4) * (0.3f64).sqrt();
        alpha[6] = ph(1.9) * (0.5f64).sqrt();
        alpha[7] = ph(-2.5);
        let g = MarkedGraph::with_alpha(4, &edges, &[3], alpha).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = ArcState::random(8, &mut rng);
        let mut f = VertexFunction::random(4, &mut rng);
        f[3] = C64::default();
        // d_{O,M} = d_{T,M} S
        let a = g.apply_do(&psi).unwrap();
        let b = g.apply_dt(&g.apply_shift(&psi).unwrap()).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).norm() < 1e-14));
        // d d^* is the projection off M
        let back = g.apply_dt(&g.apply_dt_adjoint(&f).unwrap()).unwrap();
        assert!(back.iter().zip(f.iter()).all(|(x, y)| (x - y).norm() < 1e-14));
        let back = g.apply_do(&g.apply_do_adjoint(&f).unwrap()).unwrap();
        assert!(back.iter().zip(f.iter()).all(|(x, y)| (x - y).norm() < 1e-14));
        // unitarity and self-adjoint transition
        let u = materialize(&MarkedOperator::new(&g, OperatorTag::MarkedWalk).unwrap(), 100).unwrap();
        assert!(u.unitarity_defect() < 1e-13);
        let t = g.transition_block();
        assert!(t.max_abs_diff(&t.adjoint()) < 1e-15);
        // lifts are unit eigenvectors
        let (values, vectors) = g.transition_eigen().unwrap();
        for (nu, f) in values.iter().zip(&vectors) {
            for plus in [true, false] {
                let (mu, v) = g.lift(*nu, f, plus).unwrap();
                assert!((cnorm(&v) - 1.0).abs() < 1e-12);
                assert!(g.walk_residual(mu, &v).unwrap() < 1e-10);
            }
        }
        // distinct lifts are orthogonal
        let (mu0, v0) = g.lift(values[0], &vectors[0], true).unwrap();
        let (mu1, v1) = g.lift(values[0], &vectors[0], false).unwrap();
        assert!((mu0 - mu1).norm() > 1e-3);
        assert!(cdot(&v0, &v1).norm() < 1e-12);
    }

    #[test]
    fn json_ingest() {
        let g = MarkedGraph::from_json(
            r#"{"vertices":4,"edges":[[0,1],[1,2],[2,3],[3,0]],"marked":[2],"alpha":"isotropic"}"#,
        )
        .unwrap();
        assert_eq!(g.num_arcs(), 8);
        assert!(g.is_marked(2));
        let s = 0.5f64.sqrt();
        let g2 = MarkedGraph::from_json(&format!(
            r#"{{"vertices":2,"edges":[[0,1]],"alpha":[[1,0],[0,{}]]}}"#,
            1.0
        ))
        .unwrap();
        assert_eq!(g2.alpha(1), C64::new(0.0, 1.0));
        let bad = format!(r#"{{"vertices":2,"edges":[[0,1]],"alpha":[[{s},0],[1,0]]}}"#);
        assert!(matches!(MarkedGraph::from_json(&bad), Err(Error::Spec(_))));
        assert!(MarkedGraph::from_json(r#"{"vertices":3,"edges":[[0,1]],"alpha":"isotropic"}"#).is_err());
        assert!(MarkedGraph::from_json(r#"{"vertices":2,"edges":[[0,1]],"alpha":"uniform"}"#).is_err());
    }
}
