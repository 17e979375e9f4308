//! Walk on a spherically symmetric tree lumped by root branch and depth.
//!
//! States whose amplitude on an arc depends only on the root branch, the
//! arc's level and its direction form an invariant subspace of `U^(n)`.
//! Within a branch every arc at level `i` (joining depths `i` and `i+1`)
//! carries forward amplitude `f_i` and backward amplitude `b_i`, so a step
//! costs `O(deg(o) · n)` regardless of how many vertices the ball holds.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use super::{required_cutoff, root_amplitudes, InitialState};
use crate::error::{Error, Result};
use crate::flows::{FlowIndex, Sign};
use crate::tree::{TreeSpec, TruncatedTree, VertexPath};

/// Per-vertex values of a branch-lumped distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialDistribution {
    pub root: f64,
    /// `levels[k][d-1]` is the value at every depth-`d` vertex of branch `k`.
    pub levels: Vec<Vec<f64>>,
}

impl RadialDistribution {
    fn zeros(branches: usize, depth: usize) -> Self {
        RadialDistribution {
            root: 0.0,
            levels: vec![vec![0.0; depth]; branches],
        }
    }

    pub fn max_depth(&self) -> usize {
        self.levels.first().map_or(0, Vec::len)
    }

    pub fn value(&self, depth: usize, branch: usize) -> f64 {
        if depth == 0 {
            self.root
        } else {
            self.levels[branch].get(depth - 1).copied().unwrap_or(0.0)
        }
    }

    fn accumulate(&mut self, other: &RadialDistribution) {
        self.root += other.root;
        for (a, b) in self.levels.iter_mut().zip(&other.levels) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, s: f64) {
        self.root *= s;
        self.levels.iter_mut().flatten().for_each(|x| *x *= s);
    }

    /// Total over all vertices, weighting each depth by its vertex count.
    pub fn total(&self, spec: &TreeSpec) -> f64 {
        let m = children_by_depth(spec, self.max_depth());
        let mut sum = self.root;
        for row in &self.levels {
            let mut count = 1.0;
            for (d, x) in row.iter().enumerate() {
                if d > 0 {
                    count *= m[d];
                }
                sum += count * x;
            }
        }
        sum
    }

    /// Spread over the vertices of a truncation of the same tree.
    pub fn expand(&self, tree: &TruncatedTree) -> Vec<f64> {
        let mut out = vec![0.0; tree.num_vertices()];
        out[0] = self.root;
        let mut branch = vec![0usize; tree.num_vertices()];
        for v in 1..tree.num_vertices() {
            let vx = tree.vertex(v);
            let p = vx.parent.expect("non-root vertex has a parent");
            branch[v] = if p == 0 { vx.child_index as usize } else { branch[p] };
            out[v] = self.value(vx.depth as usize, branch[v]);
        }
        out
    }
}

fn children_by_depth(spec: &TreeSpec, depth: usize) -> Vec<f64> {
    (0..=depth + 1)
        .map(|d| spec.children_at(&VertexPath(vec![0; d])) as f64)
        .collect()
}

fn check_symmetric(spec: &TreeSpec) -> Result<()> {
    if spec.is_spherically_symmetric() {
        Ok(())
    } else {
        Err(Error::Precondition(
            "radial engine needs a spherically symmetric tree".into(),
        ))
    }
}

/// Finding distribution of a lumped state on levels `0..f.len()`.
/// Amplitudes past the last level are taken as zero.
fn lumped_measure(m: &[f64], f: &[Vec<C64>], b: &[Vec<C64>], depth: usize) -> RadialDistribution {
    let mut out = RadialDistribution::zeros(f.len(), depth);
    for (k, (fk, bk)) in f.iter().zip(b).enumerate() {
        out.root += bk[0].norm_sqr();
        for (i, slot) in out.levels[k].iter_mut().enumerate() {
            let fwd = fk.get(i).map_or(0.0, |z| z.norm_sqr());
            let back = bk.get(i + 1).map_or(0.0, |z| z.norm_sqr());
            *slot = fwd + m[i + 1] * back;
        }
    }
    out
}

/// Branch-lumped state of `U^(n)` on a spherically symmetric tree.
#[derive(Clone, Debug)]
pub struct RadialWalk {
    spec: TreeSpec,
    cutoff: usize,
    deg: Vec<f64>,
    m: Vec<f64>,
    mult: Vec<f64>,
    f: Vec<Vec<C64>>,
    b: Vec<Vec<C64>>,
    steps: usize,
}

impl RadialWalk {
    /// State with the given amplitudes on the arcs out of the root.
    pub fn from_root_amplitudes(spec: &TreeSpec, cutoff: usize, amps: &[C64]) -> Result<Self> {
        check_symmetric(spec)?;
        let m = children_by_depth(spec, cutoff);
        let m0 = m[0] as usize;
        if amps.len() != m0 {
            return Err(Error::dim("root amplitudes", m0, amps.len()));
        }
        let deg: Vec<f64> = (0..=cutoff + 1)
            .map(|d| spec.degree_at(&VertexPath(vec![0; d])) as f64)
            .collect();
        let mut mult = vec![1.0; cutoff + 1];
        for i in 1..=cutoff {
            mult[i] = mult[i - 1] * m[i];
        }
        let mut f = vec![vec![C64::default(); cutoff + 1]; m0];
        for (k, z) in amps.iter().enumerate() {
            f[k][0] = *z;
        }
        let b = vec![vec![C64::default(); cutoff + 1]; m0];
        Ok(RadialWalk {
            spec: spec.clone(),
            cutoff,
            deg,
            m,
            mult,
            f,
            b,
            steps: 0,
        })
    }

    pub fn new(spec: &TreeSpec, cutoff: usize, kind: &InitialState, normalize: bool) -> Result<Self> {
        let d0 = spec.degree_at(&VertexPath::root());
        Self::from_root_amplitudes(spec, cutoff, &root_amplitudes(kind, d0, normalize)?)
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Whether every step so far agreed with the walk on the infinite tree.
    pub fn is_exact(&self) -> bool {
        self.cutoff >= required_cutoff(1, self.steps)
    }

    pub fn norm_sqr(&self) -> f64 {
        let mut s = 0.0;
        for (fk, bk) in self.f.iter().zip(&self.b) {
            for i in 0..=self.cutoff {
                s += self.mult[i] * (fk[i].norm_sqr() + bk[i].norm_sqr());
            }
        }
        s
    }

    /// Amplitudes `(f_i, b_i)` of branch `k`.
    pub fn branch(&self, k: usize) -> (&[C64], &[C64]) {
        (&self.f[k], &self.b[k])
    }

    pub fn step(&mut self) {
        let n = self.cutoff;
        let mut nf = vec![vec![C64::default(); n + 1]; self.f.len()];
        let mut nb = nf.clone();
        let total: C64 = self.b.iter().map(|bk| bk[0]).sum();
        let r = 2.0 / self.deg[0];
        for (k, bk) in self.b.iter().enumerate() {
            nf[k][0] = total * r - bk[0];
        }
        for k in 0..self.f.len() {
            let (f, b) = (&self.f[k], &self.b[k]);
            for i in 0..n {
                let s = f[i] + b[i + 1] * self.m[i + 1];
                let g = s * (2.0 / self.deg[i + 1]);
                nb[k][i] = g - f[i];
                nf[k][i + 1] = g - b[i + 1];
            }
            nb[k][n] = -f[n];
        }
        self.f = nf;
        self.b = nb;
        self.steps += 1;
    }

    /// Distribution over depths `0..=cutoff+1`.
    pub fn measure(&self) -> RadialDistribution {
        lumped_measure(&self.m, &self.f, &self.b, self.cutoff + 1)
    }

    pub fn spec(&self) -> &TreeSpec {
        &self.spec
    }
}

/// `(1/T) Σ_{t<T} μ(U^t ψ0)` for a root-supported state, with the cutoff
/// padded so every step is exact.
pub fn radial_cesaro(spec: &TreeSpec, kind: &InitialState, steps: usize) -> Result<RadialDistribution> {
    radial_cesaro_at(spec, kind, steps, required_cutoff(1, steps))
}

/// As [`radial_cesaro`] with an explicit cutoff, which must keep every step exact.
pub fn radial_cesaro_at(spec: &TreeSpec, kind: &InitialState, steps: usize, cutoff: usize) -> Result<RadialDistribution> {
    if steps == 0 {
        return Err(Error::Precondition("Cesàro average needs at least one step".into()));
    }
    let need = required_cutoff(1, steps);
    if cutoff < need {
        return Err(Error::Precondition(format!(
            "exact evolution for {steps} steps needs cutoff at least {need}, got {cutoff}"
        )));
    }
    let mut walk = RadialWalk::new(spec, cutoff, kind, true)?;
    let mut acc = RadialDistribution::zeros(walk.f.len(), walk.cutoff + 1);
    for t in 0..steps {
        if t > 0 {
            walk.step();
        }
        acc.accumulate(&walk.measure());
    }
    acc.scale(1.0 / steps as f64);
    Ok(acc)
}

/// Eigenprojection limit of a root-supported state on a spherically
/// symmetric tree.
#[derive(Clone, Debug)]
pub struct RadialLimit {
    pub per_eigen: RadialDistribution,
    pub combined: RadialDistribution,
    pub mass_plus: f64,
    pub mass_minus: f64,
    pub coefficients: Vec<(FlowIndex, C64)>,
}

impl RadialLimit {
    pub fn total_mass(&self) -> f64 {
        self.mass_plus + self.mass_minus
    }
}

/// Only the root flows `φ^(±)_{o,j}` overlap a root-supported state, and
/// they are mutually orthogonal, so each coefficient is `⟨φ, ψ0⟩ / ‖φ‖²`.
/// Distributions are reported for depths `0..=depth`.
pub fn radial_limit(spec: &TreeSpec, amps: &[C64], depth: usize) -> Result<RadialLimit> {
    check_symmetric(spec)?;
    let m = children_by_depth(spec, depth);
    let m0 = m[0] as usize;
    if amps.len() != m0 {
        return Err(Error::dim("root amplitudes", m0, amps.len()));
    }
    let q1 = spec.subtree_mass(&VertexPath(vec![0]));
    let phi_norm_sq = 2.0 * (1.0 + q1) / m0 as f64;
    let zero = vec![vec![C64::default(); depth + 1]; m0];
    let mut parts = [(zero.clone(), zero.clone()), (zero.clone(), zero)];
    let mut mass = [0.0; 2];
    let mut coefficients = Vec::new();
    if q1.is_finite() && m0 >= 2 {
        for (slot, sign) in Sign::BOTH.into_iter().enumerate() {
            let eps = sign.eps();
            let mut ratio = vec![1.0; depth + 1];
            for i in 1..=depth {
                ratio[i] = ratio[i - 1] * eps / m[i];
            }
            for j in 1..m0 as u32 {
                let w = |k: usize| C64::from_polar(1.0, 2.0 * PI * (j as usize * k) as f64 / m0 as f64);
                // Referencing branch 0 keeps the overlap exactly zero for
                // branch-uniform amplitudes.
                let overlap: C64 = (1..m0)
                    .map(|k| w(k).conj() * (amps[k] - amps[0]))
                    .sum::<C64>()
                    / m0 as f64;
                if overlap == C64::default() {
                    continue;
                }
                let c = overlap / phi_norm_sq;
                mass[slot] += c.norm_sqr() * phi_norm_sq;
                coefficients.push((FlowIndex::new(VertexPath::root(), j, sign)?, c));
                let (f, b) = &mut parts[slot];
                for k in 0..m0 {
                    let top = c * w(k) / m0 as f64;
                    for i in 0..=depth {
                        f[k][i] += top * ratio[i];
                        b[k][i] -= top * ratio[i] * eps;
                    }
                }
            }
        }
    }
    let [(fp, bp), (fm, bm)] = &parts;
    let mut per_eigen = lumped_measure(&m, fp, bp, depth);
    per_eigen.accumulate(&lumped_measure(&m, fm, bm, depth));
    let add = |x: &[Vec<C64>], y: &[Vec<C64>]| -> Vec<Vec<C64>> {
        x.iter()
            .zip(y)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect())
            .collect()
    };
    let combined = lumped_measure(&m, &add(fp, fm), &add(bp, bm), depth);
    Ok(RadialLimit {
        per_eigen,
        combined,
        mass_plus: mass[0],
        mass_minus: mass[1],
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{cesaro_average, evolve, limit_distribution, make_initial, EvolveConfig};
    use crate::tree::build_tree;

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn matches_full_engine() {
        for spec in [
            TreeSpec::regular(3).unwrap(),
            TreeSpec::spherically_symmetric(vec![4, 3]).unwrap(),
        ] {
            let depth = 7;
            let tree = build_tree(&spec, depth).unwrap();
            for kind in [InitialState::A, InitialState::B] {
                let psi = make_initial(&tree, &kind, true).unwrap();
                let full = evolve(&tree, &psi, &EvolveConfig { steps: 12, cutoff: None, exact: false }).unwrap();
                let mut walk = RadialWalk::new(&spec, depth, &kind, true).unwrap();
                for t in 0..=12 {
                    if t > 0 {
                        walk.step();
                    }
                    assert!(max_diff(&walk.measure().expand(&tree), &full.distributions[t]) < 1e-14);
                    assert!((walk.norm_sqr() - 1.0).abs() < 1e-12);
                }
                assert!(!walk.is_exact());
            }
        }
    }

    #[test]
    fn cesaro_matches_full_engine() {
        let spec = TreeSpec::regular(3).unwrap();
        let tree = build_tree(&spec, 11).unwrap();
        let psi = make_initial(&tree, &InitialState::B, true).unwrap();
        let full = cesaro_average(&tree, &psi, 10, None).unwrap();
        let lumped = radial_cesaro(&spec, &InitialState::B, 10).unwrap();
        assert!(max_diff(&lumped.expand(&tree), &full) < 1e-14);
    }

    #[test]
    fn limit_matches_flow_projection() {
        for spec in [
            TreeSpec::regular(3).unwrap(),
            TreeSpec::spherically_symmetric(vec![3, 4]).unwrap(),
        ] {
            let tree = build_tree(&spec, 5).unwrap();
            let psi = make_initial(&tree, &InitialState::B, true).unwrap();
            let full = limit_distribution(&tree, &psi).unwrap();
            let amps = root_amplitudes(&InitialState::B, 3, true).unwrap();
            let lumped = radial_limit(&spec, &amps, 5).unwrap();
            let inner = tree.ball_size(5);
            assert!(max_diff(&lumped.per_eigen.expand(&tree)[..inner], &full.per_eigen[..inner]) < 1e-13);
            assert!(max_diff(&lumped.combined.expand(&tree)[..inner], &full.combined[..inner]) < 1e-13);
            assert!((lumped.total_mass() - full.total_mass()).abs() < 1e-13);
        }
    }

    #[test]
    fn uniform_state_has_no_limit() {
        let spec = TreeSpec::regular(4).unwrap();
        let amps = root_amplitudes(&InitialState::A, 4, true).unwrap();
        let l = radial_limit(&spec, &amps, 10).unwrap();
        assert!(l.coefficients.is_empty());
        assert_eq!(l.total_mass(), 0.0);
        assert_eq!(l.per_eigen.total(&spec), 0.0);
    }

    #[test]
    fn path_graph_has_no_summable_flows() {
        let spec = TreeSpec::regular(2).unwrap();
        let amps = root_amplitudes(&InitialState::B, 2, true).unwrap();
        assert_eq!(radial_limit(&spec, &amps, 6).unwrap().total_mass(), 0.0);
    }

    #[test]
    fn rejects_asymmetric_trees() {
        let mut counts = std::collections::BTreeMap::new();
        counts.insert("0".to_string(), 4);
        let spec = TreeSpec::explicit(counts, 3).unwrap();
        assert!(matches!(
            RadialWalk::new(&spec, 3, &InitialState::A, true),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn cesaro_error_shrinks() {
        let spec = TreeSpec::regular(3).unwrap();
        let amps = root_amplitudes(&InitialState::B, 3, true).unwrap();
        let limit = radial_limit(&spec, &amps, 80).unwrap().per_eigen;
        let mut last = f64::INFINITY;
        for t in [16, 32, 64] {
            let avg = radial_cesaro(&spec, &InitialState::B, t).unwrap();
            let err = (0..=avg.max_depth())
                .flat_map(|d| (0..3).map(move |k| (d, k)))
                .map(|(d, k)| (avg.value(d, k) - limit.value(d, k)).abs())
                .fold(0.0, f64::max);
            assert!(err < last, "T={t}: {err} vs {last}");
            last = err;
        }
    }
}
