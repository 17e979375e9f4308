//! Flow eigenfunctions of the birth eigenspace and decompositions onto them.
//!
//! `φ^(ε)_{u,j}` puts `ω_j^k / m(u)` on the arc from `u` to its `k`-th child
//! and `ε · value(parent arc) / m(o(e))` on each further arc away from `u`.
//! Reverse arcs carry `−ε` times the forward value, so `φ^(+)` is odd under
//! reversal and `φ^(−)` is even. Both are killed by `d_T` and `d_O`, and
//! `U φ^(ε) = ε φ^(ε)`.
//!
//! A flow is stored on its forward arcs only, up to a reach depth. Each arc
//! entering the outermost layer carries the tail multiplier `Q` of the
//! infinite subtree below it, which makes tail-inclusive inner products exact.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{conjugate_gradient, Cholesky, ComplexMatrix};
use crate::operators::{
    apply_boundary, apply_boundary_adjoint, apply_transition, apply_walk, ArcState, Boundary,
    VertexFunction,
};
use crate::tree::{TruncatedTree, VertexPath};

/// Refuse Gram solves whose condition estimate exceeds this.
pub const GRAM_CONDITION_CAP: f64 = 1e10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn eps(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub const BOTH: [Sign; 2] = [Sign::Plus, Sign::Minus];
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

impl FromStr for Sign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+" | "plus" => Ok(Sign::Plus),
            "-" | "minus" => Ok(Sign::Minus),
            other => Err(Error::Precondition(format!("sign must be + or -, got {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowIndex {
    pub sign: Sign,
    pub u: VertexPath,
    pub j: u32,
}

impl FlowIndex {
    pub fn new(u: VertexPath, j: u32, sign: Sign) -> Result<Self> {
        if j == 0 {
            return Err(Error::Precondition(
                "j = 0 gives the constant flow, which is not divergence free".into(),
            ));
        }
        Ok(FlowIndex { sign, u, j })
    }
}

impl fmt::Display for FlowIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let u = if self.u.is_root() {
            "root".to_string()
        } else {
            self.u.to_string()
        };
        write!(f, "({u},{},{})", self.j, self.sign)
    }
}

/// One forward arc of a flow's support.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowEntry {
    pub arc: usize,
    pub value: C64,
    /// Tail multiplier below the terminus; zero unless the arc enters the reach boundary.
    pub tail: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowFunction {
    pub index: FlowIndex,
    pub vertex: usize,
    /// Support is cut to arcs whose terminus has depth at most `reach + 1`.
    pub reach: usize,
    entries: Vec<FlowEntry>,
    /// Exact mass of the discarded tail; infinite when not square summable.
    pub tail_norm_sq: f64,
}

fn root_of_unity(j: u32, k: u32, m: u32) -> C64 {
    C64::from_polar(1.0, 2.0 * PI * (j as f64) * (k as f64) / m as f64)
}

/// Build `φ^(±)_{u,j}` on the whole truncation.
pub fn build_flow(tree: &TruncatedTree, idx: &FlowIndex) -> Result<FlowFunction> {
    build_flow_to(tree, idx, tree.depth())
}

/// Build `φ^(±)_{u,j}` cut to arcs whose terminus lies in `V_{reach+1}`.
pub fn build_flow_to(tree: &TruncatedTree, idx: &FlowIndex, reach: usize) -> Result<FlowFunction> {
    let v = tree.find(&idx.u)?;
    build_flow_at(tree, v, idx.j, idx.sign, reach)
}

pub(crate) fn build_flow_at(
    tree: &TruncatedTree,
    u: usize,
    j: u32,
    sign: Sign,
    reach: usize,
) -> Result<FlowFunction> {
    if reach > tree.depth() {
        return Err(Error::Range(format!(
            "flow reach {reach} exceeds truncation depth {}",
            tree.depth()
        )));
    }
    let x = tree.vertex(u);
    if x.depth as usize > reach {
        return Err(Error::Range(format!(
            "flow vertex at depth {} lies outside V_{reach}",
            x.depth
        )));
    }
    let m = x.children;
    if m < 2 {
        return Err(Error::Precondition(format!(
            "vertex {} has {m} child; flows need at least 2",
            tree.path_of(u)
        )));
    }
    if j == 0 || j >= m {
        return Err(Error::Range(format!("j = {j} outside 1..={}", m - 1)));
    }
    let index = FlowIndex::new(tree.path_of(u), j, sign)?;
    let eps = sign.eps();
    let mut entries = Vec::new();
    let mut tail_norm_sq = 0.0;
    let mut frontier: Vec<(usize, C64)> = tree
        .children(u)
        .enumerate()
        .map(|(k, c)| (c, root_of_unity(j, k as u32, m) / m as f64))
        .collect();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for (c, value) in frontier {
            let cx = tree.vertex(c);
            let tail = if cx.depth as usize == reach + 1 {
                let q = tree.subtree_mass(c);
                tail_norm_sq += 2.0 * value.norm_sqr() * q;
                q
            } else {
                let mc = cx.children as f64;
                for g in tree.children(c) {
                    next.push((g, value * (eps / mc)));
                }
                0.0
            };
            entries.push(FlowEntry {
                arc: tree.forward_arc(c),
                value,
                tail,
            });
        }
        frontier = next;
    }
    entries.sort_by_key(|e| e.arc);
    Ok(FlowFunction {
        index,
        vertex: u,
        reach,
        entries,
        tail_norm_sq,
    })
}

impl FlowFunction {
    pub fn sign(&self) -> Sign {
        self.index.sign
    }

    pub fn entries(&self) -> &[FlowEntry] {
        &self.entries
    }

    /// Value on any arc, zero off the support.
    pub fn value(&self, arc: usize) -> C64 {
        let fwd = arc & !1;
        match self.entries.binary_search_by_key(&fwd, |e| e.arc) {
            Ok(i) if arc == fwd => self.entries[i].value,
            Ok(i) => -self.sign().eps() * self.entries[i].value,
            Err(_) => C64::default(),
        }
    }

    pub fn to_state(&self, num_arcs: usize) -> ArcState {
        let mut s = ArcState::zeros(num_arcs);
        let r = -self.sign().eps();
        for e in &self.entries {
            s[e.arc] = e.value;
            s[e.arc + 1] = e.value * r;
        }
        s
    }

    pub fn truncated_norm_sq(&self) -> f64 {
        2.0 * self.entries.iter().map(|e| e.value.norm_sqr()).sum::<f64>()
    }

    /// Squared norm of the infinite flow.
    pub fn norm_sq(&self) -> f64 {
        self.truncated_norm_sq() + self.tail_norm_sq
    }

    pub fn is_square_summable(&self) -> bool {
        self.tail_norm_sq.is_finite()
    }

    /// `⟨self, other⟩`, with or without the analytic tails.
    ///
    /// Both flows must share a reach so their boundaries coincide.
    pub fn inner(&self, other: &FlowFunction, tails: bool) -> C64 {
        debug_assert_eq!(self.reach, other.reach);
        let (mut i, mut k) = (0, 0);
        let mut s = C64::default();
        while i < self.entries.len() && k < other.entries.len() {
            let (a, b) = (&self.entries[i], &other.entries[k]);
            match a.arc.cmp(&b.arc) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => k += 1,
                std::cmp::Ordering::Equal => {
                    let w = if tails { 1.0 + a.tail } else { 1.0 };
                    s += a.value.conj() * b.value * w;
                    i += 1;
                    k += 1;
                }
            }
        }
        s * (1.0 + self.sign().eps() * other.sign().eps())
    }

    /// `⟨φ, ψ⟩` over the truncation.
    pub fn overlap(&self, psi: &[C64]) -> C64 {
        let r = -self.sign().eps();
        self.entries
            .iter()
            .map(|e| e.value.conj() * (psi[e.arc] + psi[e.arc + 1] * r))
            .sum()
    }

    /// Mass of each shell of arcs (both orientations) at distance `s` below `u`, truncated part.
    pub fn shell_masses(&self, tree: &TruncatedTree) -> Vec<f64> {
        let d0 = tree.vertex(self.vertex).depth as usize;
        let mut shells = vec![0.0; self.reach - d0 + 1];
        for e in &self.entries {
            let s = tree.vertex(tree.terminus(e.arc)).depth as usize - d0 - 1;
            shells[s] += 2.0 * e.value.norm_sqr();
        }
        shells
    }
}

/// All flow indices with `u ∈ V_n`, `m(u) ≥ 2`, plus signs before minus signs,
/// vertices breadth-first, `j` ascending.
pub fn flow_indices(tree: &TruncatedTree, n: usize) -> Result<Vec<FlowIndex>> {
    Ok(flow_vertices(tree, n)?
        .into_iter()
        .flat_map(|(sign, v, j)| FlowIndex::new(tree.path_of(v), j, sign))
        .collect())
}

fn flow_vertices(tree: &TruncatedTree, n: usize) -> Result<Vec<(Sign, usize, u32)>> {
    if n > tree.depth() {
        return Err(Error::Range(format!(
            "depth {n} exceeds truncation depth {}",
            tree.depth()
        )));
    }
    let mut out = Vec::new();
    for sign in Sign::BOTH {
        for v in 0..tree.ball_size(n) {
            for j in 1..tree.vertex(v).children.max(1) {
                out.push((sign, v, j));
            }
        }
    }
    Ok(out)
}

/// All flows with `u ∈ V_n`, cut at reach `n`.
pub fn build_all_flows(tree: &TruncatedTree, n: usize) -> Result<Vec<FlowFunction>> {
    flow_vertices(tree, n)?
        .into_iter()
        .map(|(sign, v, j)| build_flow_at(tree, v, j, sign, n))
        .collect()
}

/// Flows with `u ∈ V_n` whose infinite extension is square summable.
pub fn summable_flows(tree: &TruncatedTree, n: usize) -> Result<Vec<FlowFunction>> {
    Ok(build_all_flows(tree, n)?
        .into_iter()
        .filter(FlowFunction::is_square_summable)
        .collect())
}

/// Residuals of `U^(n) φ = ±φ` for a flow cut at reach `n`.
#[derive(Clone, Copy, Debug)]
pub struct FlowResidual {
    /// Over arcs with both endpoints in `V_n`.
    pub interior: f64,
    /// Over every arc of the truncation.
    pub full: f64,
}

pub fn verify_flow_eigen(tree: &TruncatedTree, flow: &FlowFunction) -> Result<FlowResidual> {
    let phi = flow.to_state(tree.num_arcs());
    let out = apply_walk(tree, &phi, Some(flow.reach))?;
    let eps = flow.sign().eps();
    let inner_arcs = tree.ball_arcs(flow.reach);
    let (mut interior, mut full) = (0.0, 0.0);
    for a in 0..phi.len() {
        let r = (out[a] - phi[a] * eps).norm_sqr();
        full += r;
        if a < inner_arcs {
            interior += r;
        }
    }
    Ok(FlowResidual {
        interior: interior.sqrt(),
        full: full.sqrt(),
    })
}

fn nested(tree: &TruncatedTree, a: usize, b: usize) -> bool {
    let (mut hi, lo) = if tree.vertex(a).depth >= tree.vertex(b).depth {
        (a, b)
    } else {
        (b, a)
    };
    while tree.vertex(hi).depth > tree.vertex(lo).depth {
        hi = tree.vertex(hi).parent.expect("deeper than ancestor");
    }
    hi == lo
}

/// Gram matrix `G_ab = ⟨φ_a, φ_b⟩`, tail-inclusive when `tails` is set.
pub fn gram(tree: &TruncatedTree, flows: &[FlowFunction], tails: bool) -> Result<ComplexMatrix> {
    if tails {
        if let Some(f) = flows.iter().find(|f| !f.is_square_summable()) {
            return Err(Error::Precondition(format!(
                "flow {} is not square summable",
                f.index
            )));
        }
    }
    if let Some(f) = flows.iter().find(|f| f.reach != flows[0].reach) {
        return Err(Error::Precondition(format!(
            "flow {} has reach {} but {} has reach {}",
            f.index, f.reach, flows[0].index, flows[0].reach
        )));
    }
    let n = flows.len();
    let mut g = ComplexMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            if !nested(tree, flows[a].vertex, flows[b].vertex) {
                continue;
            }
            let z = flows[a].inner(&flows[b], tails);
            g.set(a, b, z);
            g.set(b, a, z.conj());
        }
    }
    Ok(g)
}

/// Coefficients of the orthogonal projection onto the span of `flows`.
pub fn project_onto_flows(
    tree: &TruncatedTree,
    flows: &[FlowFunction],
    psi: &[C64],
    tails: bool,
) -> Result<Vec<C64>> {
    if flows.is_empty() {
        return Ok(Vec::new());
    }
    let g = gram(tree, flows, tails)?;
    let chol = Cholesky::new(&g)?;
    let cond = chol.condition_estimate();
    if cond > GRAM_CONDITION_CAP {
        return Err(Error::Numerical(format!(
            "flow Gram matrix condition estimate {cond:e} exceeds {GRAM_CONDITION_CAP:e}"
        )));
    }
    let b: Vec<C64> = flows.iter().map(|f| f.overlap(psi)).collect();
    Ok(chol.solve(&b))
}

/// Result of splitting a state into its birth part and the rest.
#[derive(Clone, Debug)]
pub struct BirthDecomposition {
    pub cutoff: usize,
    /// One entry per flow with `u ∈ V_n`, in [`flow_indices`] order.
    pub coefficients: Vec<(FlowIndex, C64)>,
    /// `Σ C φ` with flows cut at reach `n`.
    pub birth: ArcState,
    /// `ψ − birth`; orthogonal to every returned flow.
    pub remainder: ArcState,
}

impl BirthDecomposition {
    pub fn coefficient(&self, idx: &FlowIndex) -> Option<C64> {
        self.coefficients
            .iter()
            .find(|(i, _)| i == idx)
            .map(|(_, c)| *c)
    }
}

fn require_in_ball(tree: &TruncatedTree, psi: &[C64], n: usize) -> Result<()> {
    if psi.len() != tree.num_arcs() {
        return Err(Error::dim("arc state", tree.num_arcs(), psi.len()));
    }
    if n > tree.depth() {
        return Err(Error::Range(format!(
            "depth {n} exceeds truncation depth {}",
            tree.depth()
        )));
    }
    if psi[tree.ball_arcs(n + 1)..].iter().any(|z| *z != C64::default()) {
        return Err(Error::Precondition(format!(
            "state has amplitude on arcs outside A_{}",
            n + 1
        )));
    }
    Ok(())
}

/// Project forward values `x` (one per non-root vertex of `V_{n+1}`) onto the
/// kernel of `x ↦ Σ_children x_c + s·x_w` for every `w ∈ V_n`.
///
/// The normal matrix is tree-structured, so it is eliminated leaves-first
/// without fill.
fn kirchhoff_project(tree: &TruncatedTree, n: usize, s: f64, x: &mut [C64]) {
    let nb = tree.ball_size(n);
    let xv = |x: &[C64], v: usize| if v == 0 { C64::default() } else { x[v - 1] };
    let mut rhs: Vec<C64> = (0..nb)
        .map(|w| tree.children(w).map(|c| x[c - 1]).sum::<C64>() + xv(x, w) * s)
        .collect();
    let mut diag: Vec<f64> = (0..nb)
        .map(|w| tree.vertex(w).children as f64 + if w == 0 { 0.0 } else { 1.0 })
        .collect();
    for w in (1..nb).rev() {
        let p = tree.vertex(w).parent.expect("non-root");
        let (dw, rw) = (diag[w], rhs[w]);
        diag[p] -= s * s / dw;
        rhs[p] -= rw * (s / dw);
    }
    let mut y = vec![C64::default(); nb];
    y[0] = rhs[0] / diag[0];
    for w in 1..nb {
        let p = tree.vertex(w).parent.expect("non-root");
        y[w] = (rhs[w] - y[p] * s) / diag[w];
    }
    // x -= K^* y
    for w in 0..nb {
        for c in tree.children(w) {
            x[c - 1] -= y[w];
        }
        if w > 0 {
            x[w - 1] -= y[w] * s;
        }
    }
}

/// Split `ψ` (supported on `A_{n+1}`) into flows with `u ∈ V_n` and a remainder.
///
/// Each parity is first projected onto the divergence-free subspace, then
/// flow coefficients are peeled off breadth-first: at `u`, the residual on
/// the child arcs after subtracting every flow already extracted above `u`
/// is expanded in the discrete Fourier basis `ω_j^k`.
pub fn decompose_birth(tree: &TruncatedTree, psi: &[C64], n: usize) -> Result<BirthDecomposition> {
    require_in_ball(tree, psi, n)?;
    let nv = tree.ball_size(n + 1);
    let mut coefficients = Vec::new();
    let mut birth = ArcState::zeros(tree.num_arcs());
    for sign in Sign::BOTH {
        let eps = sign.eps();
        // forward value of the parity component (ψ − εSψ)/2
        let mut x: Vec<C64> = (1..nv)
            .map(|v| {
                let a = tree.forward_arc(v);
                (psi[a] - psi[a + 1] * eps) * 0.5
            })
            .collect();
        kirchhoff_project(tree, n, -eps, &mut x);
        let mut acc = vec![C64::default(); nv - 1];
        for u in 0..tree.ball_size(n) {
            let ux = tree.vertex(u);
            let m = ux.children;
            let parent_acc = if u == 0 { C64::default() } else { acc[u - 1] };
            let mut cs = Vec::with_capacity(m.saturating_sub(1) as usize);
            for j in 1..m {
                let c: C64 = tree
                    .children(u)
                    .enumerate()
                    .map(|(k, ch)| {
                        let r = x[ch - 1] - parent_acc * (eps / m as f64);
                        r * root_of_unity(j, k as u32, m).conj()
                    })
                    .sum();
                coefficients.push((FlowIndex::new(tree.path_of(u), j, sign)?, c));
                cs.push(c);
            }
            for (k, ch) in tree.children(u).enumerate() {
                let mut a = parent_acc * (eps / m as f64);
                for (jm1, c) in cs.iter().enumerate() {
                    a += c * root_of_unity(jm1 as u32 + 1, k as u32, m) / m as f64;
                }
                acc[ch - 1] = a;
            }
        }
        for v in 1..nv {
            let a = tree.forward_arc(v);
            birth[a] += acc[v - 1];
            birth[a + 1] -= acc[v - 1] * eps;
        }
    }
    let remainder = ArcState(psi.to_vec()).sub(&birth);
    Ok(BirthDecomposition {
        cutoff: n,
        coefficients,
        birth,
        remainder,
    })
}

/// Orthogonal projection onto `ℒ_n = d_T^{(n)*}(𝒱) + d_O^{(n)*}(𝒱)`.
///
/// Minimizes `‖ψ − d_T^{(n)*}a − d_O^{(n)*}b‖` through the normal equations
/// `a + T_n b = d_T^{(n)}ψ`, `T_n a + b = d_O^{(n)}ψ`, eliminated to
/// `(1 − T_n²) b = d_O^{(n)}ψ − T_n d_T^{(n)}ψ` and solved by conjugate gradients.
pub fn project_inherited(tree: &TruncatedTree, psi: &[C64], n: usize) -> Result<ArcState> {
    if psi.len() != tree.num_arcs() {
        return Err(Error::dim("arc state", tree.num_arcs(), psi.len()));
    }
    let p = apply_boundary(tree, Boundary::Terminus, psi, Some(n))?;
    let q = apply_boundary(tree, Boundary::Origin, psi, Some(n))?;
    let tp = apply_transition(tree, &p, n)?;
    let rhs = q.sub(&tp);
    let op = |b: &[C64]| -> Vec<C64> {
        let tb = apply_transition(tree, b, n).expect("checked dimensions");
        let ttb = apply_transition(tree, &tb, n).expect("checked dimensions");
        b.iter().zip(ttb.iter()).map(|(x, y)| x - y).collect()
    };
    let b = VertexFunction(conjugate_gradient(op, &rhs, 1e-15, 10 * tree.num_vertices() + 100)?);
    let a = p.sub(&apply_transition(tree, &b, n)?);
    let la = apply_boundary_adjoint(tree, Boundary::Terminus, &a, Some(n))?;
    let lb = apply_boundary_adjoint(tree, Boundary::Origin, &b, Some(n))?;
    Ok(la.add(&lb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_eigen;
    use crate::tree::{build_tree, TreeSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn k3(depth: usize) -> TruncatedTree {
        build_tree(&TreeSpec::regular(3).unwrap(), depth).unwrap()
    }

    fn idx(u: &str, j: u32, sign: Sign) -> FlowIndex {
        FlowIndex::new(u.parse().unwrap(), j, sign).unwrap()
    }

    #[test]
    fn root_flow_values() {
        let t = k3(3);
        let f = build_flow(&t, &idx("", 1, Sign::Plus)).unwrap();
        let w = C64::from_polar(1.0, 2.0 * PI / 3.0);
        for (k, c) in t.children(0).enumerate() {
            let a = t.forward_arc(c);
            assert!((f.value(a) - w.powu(k as u32) / 3.0).norm() < 1e-15);
            assert!((f.value(a + 1) + w.powu(k as u32) / 3.0).norm() < 1e-15);
            for g in t.children(c) {
                let b = t.forward_arc(g);
                assert!((f.value(b) - w.powu(k as u32) / 6.0).norm() < 1e-15);
            }
        }
        let g = build_flow(&t, &idx("", 1, Sign::Minus)).unwrap();
        for c in t.children(0) {
            for h in t.children(c) {
                let b = t.forward_arc(h);
                assert!((g.value(b) + g.value(t.forward_arc(c)) / 2.0).norm() < 1e-15);
                assert_eq!(g.value(b + 1), g.value(b));
            }
        }
    }

    #[test]
    fn regular_norms_match_closed_form() {
        for kappa in [3u32, 4, 5] {
            let t = build_tree(&TreeSpec::regular(kappa).unwrap(), 3).unwrap();
            let k = kappa as f64;
            for (u, m) in [("", k), ("0", k - 1.0), ("1.0", k - 1.0)] {
                for sign in Sign::BOTH {
                    let f = build_flow(&t, &idx(u, 1, sign)).unwrap();
                    let want = 2.0 * (k - 1.0) / (m * (k - 2.0));
                    assert!((f.norm_sq() - want).abs() < 1e-12 * want);
                    // direct geometric summation of the shells
                    let d = u.split('.').filter(|s| !s.is_empty()).count();
                    let direct: f64 = (0..200).map(|s| 2.0 / m * (k - 1.0).powi(-s)).sum();
                    assert!((f.norm_sq() - direct).abs() < 1e-12, "{u} depth {d}");
                }
            }
        }
    }

    #[test]
    fn flows_are_eigenvectors_in_both_kernels() {
        let t = k3(3);
        for f in build_all_flows(&t, 3).unwrap() {
            let r = verify_flow_eigen(&t, &f).unwrap();
            assert!(r.full < 1e-13, "{}", f.index);
            let phi = f.to_state(t.num_arcs());
            for dir in [Boundary::Terminus, Boundary::Origin] {
                assert!(apply_boundary(&t, dir, &phi, Some(3)).unwrap().max_abs() < 1e-14);
            }
        }
    }

    #[test]
    fn count_matches_dimension_formula() {
        for spec in [
            TreeSpec::regular(3).unwrap(),
            TreeSpec::spherically_symmetric(vec![4, 3]).unwrap(),
            TreeSpec::spherically_symmetric(vec![3, 5, 4]).unwrap(),
        ] {
            let t = build_tree(&spec, 3).unwrap();
            for n in 0..=3 {
                let want = t.ball_size(n + 1) - 1 - t.ball_size(n);
                let got = flow_indices(&t, n).unwrap();
                assert_eq!(got.len(), 2 * want);
            }
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let t = k3(2);
        assert!(matches!(
            FlowIndex::new(VertexPath::root(), 0, Sign::Plus),
            Err(Error::Precondition(_))
        ));
        assert!(build_flow(&t, &idx("", 3, Sign::Plus)).is_err());
        assert!(build_flow(&t, &idx("0", 2, Sign::Plus)).is_err());
        let line = build_tree(&TreeSpec::regular(2).unwrap(), 4).unwrap();
        assert!(summable_flows(&line, 4).unwrap().is_empty());
        assert!(build_flow(&line, &idx("0", 1, Sign::Plus)).is_err());
    }

    #[test]
    fn gram_is_diagonal_on_regular_tree() {
        let t = k3(3);
        let flows = summable_flows(&t, 2).unwrap();
        let g = gram(&t, &flows, true).unwrap();
        for a in 0..flows.len() {
            for b in 0..flows.len() {
                let z = g.get(a, b);
                if a == b {
                    let m = t.vertex(flows[a].vertex).children as f64;
                    assert!((z.re - 4.0 / m).abs() < 1e-12);
                } else {
                    assert!(z.norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn gram_positive_definite_on_explicit_tree() {
        let mut counts = std::collections::BTreeMap::new();
        counts.insert("".to_string(), 3);
        counts.insert("0".to_string(), 3);
        counts.insert("1".to_string(), 4);
        counts.insert("0.1".to_string(), 5);
        let spec = TreeSpec::explicit(counts, 3).unwrap();
        let t = build_tree(&spec, 3).unwrap();
        let flows = summable_flows(&t, 3).unwrap();
        let g = gram(&t, &flows, true).unwrap();
        let eig = hermitian_eigen(&g).unwrap();
        assert!(eig.values[0] > 1e-3);
        let off = (0..flows.len())
            .flat_map(|a| (0..flows.len()).map(move |b| (a, b)))
            .filter(|(a, b)| a != b)
            .map(|(a, b)| g.get(a, b).norm())
            .fold(0.0, f64::max);
        assert!(off > 1e-6, "non-uniform subtrees should couple flows");
    }

    #[test]
    fn decompose_single_flow() {
        let t = k3(3);
        let f = build_flow(&t, &idx("", 1, Sign::Plus)).unwrap();
        let d = decompose_birth(&t, &f.to_state(t.num_arcs()), 3).unwrap();
        for (i, c) in &d.coefficients {
            let want = if *i == f.index { 1.0 } else { 0.0 };
            assert!((c - C64::new(want, 0.0)).norm() < 1e-12, "{i}");
        }
        assert!(d.remainder.max_abs() < 1e-12);
    }

    #[test]
    fn decompose_matches_truncated_gram_oracle() {
        let t = k3(3);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let psi = ArcState::random(t.num_arcs(), &mut rng);
        let d = decompose_birth(&t, &psi, 3).unwrap();
        let flows = build_all_flows(&t, 3).unwrap();
        let oracle = project_onto_flows(&t, &flows, &psi, false).unwrap();
        assert_eq!(oracle.len(), d.coefficients.len());
        for ((i, c), o) in d.coefficients.iter().zip(&oracle) {
            assert!((c - o).norm() < 1e-10, "{i}: {c} vs {o}");
        }
        for f in &flows {
            assert!(f.overlap(&d.remainder).norm() < 1e-10);
        }
    }

    #[test]
    fn inherited_and_birth_are_complementary() {
        let t = k3(3);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for n in [1usize, 3] {
            let mut psi = ArcState::random(t.num_arcs(), &mut rng);
            for a in t.ball_arcs(n + 1)..t.num_arcs() {
                psi[a] = C64::default();
            }
            let inh = project_inherited(&t, &psi, n).unwrap();
            let d = decompose_birth(&t, &psi, n).unwrap();
            assert!(inh.add(&d.birth).sub(&psi).max_abs() < 1e-10);
            assert!(d.birth.inner(&inh).norm() < 1e-10);
        }
    }

    #[test]
    fn boundary_ranges_have_no_birth_part() {
        let t = k3(3);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let f = VertexFunction::random(t.num_vertices(), &mut rng);
        for dir in [Boundary::Terminus, Boundary::Origin] {
            let psi = apply_boundary_adjoint(&t, dir, &f, Some(3)).unwrap();
            let d = decompose_birth(&t, &psi, 3).unwrap();
            assert!(d.coefficients.iter().all(|(_, c)| c.norm() < 1e-12));
            let back = project_inherited(&t, &psi, 3).unwrap();
            assert!(back.sub(&psi).max_abs() < 1e-12);
        }
        let phi = build_flow(&t, &idx("0", 1, Sign::Minus)).unwrap().to_state(t.num_arcs());
        assert!(project_inherited(&t, &phi, 3).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn states_outside_ball_are_rejected() {
        let t = k3(3);
        let psi = ArcState::basis(t.num_arcs(), t.num_arcs() - 1);
        assert!(matches!(decompose_birth(&t, &psi, 2), Err(Error::Precondition(_))));
        assert!(matches!(decompose_birth(&t, &psi, 4), Err(Error::Range(_))));
    }
}
