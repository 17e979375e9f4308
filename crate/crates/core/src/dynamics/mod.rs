//! Time evolution, finding probabilities, Cesàro averages and the limit
//! distribution given by projecting onto the `±1` eigenspaces.

pub mod radial;

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flows::{build_all_flows, project_onto_flows, FlowFunction, FlowIndex, Sign};
use crate::operators::{apply_walk, ArcState};
use crate::tree::TruncatedTree;

/// Tolerance on norm drift during evolution.
pub const NORM_TOL: f64 = 1e-10;

/// `μ(ψ)(u) = Σ_{t(e)=u} |ψ(e)|²` over every vertex of the truncation.
pub fn measure(tree: &TruncatedTree, psi: &[C64]) -> Vec<f64> {
    let mut mu = vec![0.0; tree.num_vertices()];
    for (a, z) in psi.iter().enumerate() {
        mu[tree.terminus(a)] += z.norm_sqr();
    }
    mu
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    /// Amplitude 1 on every arc out of the root.
    A,
    /// Amplitude `e^{2πik/deg(o)}` on the `k`-th arc out of the root.
    B,
    Custom(ArcState),
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialState::A => f.write_str("A"),
            InitialState::B => f.write_str("B"),
            InitialState::Custom(_) => f.write_str("custom"),
        }
    }
}

/// Root-arc amplitudes of the two standard initial states.
pub fn root_amplitudes(kind: &InitialState, degree: u32, normalize: bool) -> Result<Vec<C64>> {
    let s = if normalize { 1.0 / (degree as f64).sqrt() } else { 1.0 };
    match kind {
        InitialState::A => Ok(vec![C64::new(s, 0.0); degree as usize]),
        InitialState::B => Ok((0..degree)
            .map(|k| C64::from_polar(s, 2.0 * PI * k as f64 / degree as f64))
            .collect()),
        InitialState::Custom(_) => Err(Error::Precondition(
            "custom states are not given by root amplitudes".into(),
        )),
    }
}

pub fn make_initial(tree: &TruncatedTree, kind: &InitialState, normalize: bool) -> Result<ArcState> {
    match kind {
        InitialState::Custom(psi) => {
            if psi.len() != tree.num_arcs() {
                return Err(Error::dim("custom initial state", tree.num_arcs(), psi.len()));
            }
            let n = psi.norm();
            if normalize {
                if n == 0.0 {
                    return Err(Error::Precondition("custom initial state is zero".into()));
                }
                Ok(psi.scaled(C64::new(1.0 / n, 0.0)))
            } else {
                Ok(psi.clone())
            }
        }
        _ => {
            let amps = root_amplitudes(kind, tree.vertex(0).degree, normalize)?;
            let mut psi = ArcState::zeros(tree.num_arcs());
            for (c, z) in tree.children(0).zip(amps) {
                psi[tree.forward_arc(c)] = z;
            }
            Ok(psi)
        }
    }
}

/// Largest terminus depth over the support of `ψ`; `None` for the zero state.
pub fn support_depth(tree: &TruncatedTree, psi: &[C64]) -> Option<usize> {
    psi.iter()
        .enumerate()
        .filter(|(_, z)| **z != C64::default())
        .map(|(a, _)| tree.vertex(tree.terminus(a)).depth as usize)
        .max()
}

/// Cutoff required before `steps` applications of `U^(n)` are accepted as the
/// infinite walk.
pub fn required_cutoff(support_depth: usize, steps: usize) -> usize {
    support_depth + steps
}

/// Truncation depth chosen automatically for exact runs.
pub fn padded_depth(support_depth: usize, steps: usize) -> usize {
    support_depth + steps + 1
}

/// Bytes needed for one arc state and one vertex distribution at `depth`.
pub fn memory_estimate(vertices: u128) -> u128 {
    let arcs = 2 * vertices.saturating_sub(1);
    arcs * 16 * 3 + vertices * 8 * 2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Semantics {
    /// Agrees with the walk on the infinite tree.
    Exact,
    /// Amplitude reflects at the cutoff.
    Reflecting,
}

#[derive(Clone, Copy, Debug)]
pub struct EvolveConfig {
    pub steps: usize,
    /// Defaults to the truncation depth.
    pub cutoff: Option<usize>,
    pub exact: bool,
}

fn check_run(tree: &TruncatedTree, psi0: &[C64], cfg: &EvolveConfig) -> Result<(usize, Semantics)> {
    if psi0.len() != tree.num_arcs() {
        return Err(Error::dim("initial state", tree.num_arcs(), psi0.len()));
    }
    let n = cfg.cutoff.unwrap_or(tree.depth());
    if n > tree.depth() {
        return Err(Error::Range(format!(
            "cutoff {n} exceeds truncation depth {}",
            tree.depth()
        )));
    }
    let need = required_cutoff(support_depth(tree, psi0).unwrap_or(0), cfg.steps);
    let semantics = if n >= need {
        Semantics::Exact
    } else {
        Semantics::Reflecting
    };
    if cfg.exact && semantics != Semantics::Exact {
        return Err(Error::Precondition(format!(
            "exact evolution for {} steps needs cutoff and depth at least {need}, got {n}",
            cfg.steps
        )));
    }
    Ok((n, semantics))
}

/// Run `steps` walk steps, calling `visit(t, ψ_t)` for `t = 0..=steps`.
pub fn evolve_each<F>(
    tree: &TruncatedTree,
    psi0: &[C64],
    cfg: &EvolveConfig,
    mut visit: F,
) -> Result<(ArcState, Semantics)>
where
    F: FnMut(usize, &ArcState),
{
    let (n, semantics) = check_run(tree, psi0, cfg)?;
    let mut psi = ArcState(psi0.to_vec());
    let norm0 = psi.norm();
    visit(0, &psi);
    for t in 1..=cfg.steps {
        psi = apply_walk(tree, &psi, Some(n))?;
        let drift = (psi.norm() - norm0).abs();
        if drift > NORM_TOL {
            return Err(Error::Numerical(format!("norm drifted by {drift:e} at step {t}")));
        }
        visit(t, &psi);
    }
    Ok((psi, semantics))
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub semantics: Semantics,
    /// `μ(U^t ψ0)` for `t = 0..=steps`.
    pub distributions: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    pub final_state: ArcState,
}

pub fn evolve(tree: &TruncatedTree, psi0: &[C64], cfg: &EvolveConfig) -> Result<Trajectory> {
    let mut distributions = Vec::with_capacity(cfg.steps + 1);
    let mut norms = Vec::with_capacity(cfg.steps + 1);
    let (final_state, semantics) = evolve_each(tree, psi0, cfg, |_, psi| {
        distributions.push(measure(tree, psi));
        norms.push(psi.norm());
    })?;
    Ok(Trajectory {
        semantics,
        distributions,
        norms,
        final_state,
    })
}

/// `(1/T) Σ_{t<T} μ(U^t ψ0)` under exact semantics.
pub fn cesaro_average(tree: &TruncatedTree, psi0: &[C64], steps: usize, cutoff: Option<usize>) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::Precondition("Cesàro average needs at least one step".into()));
    }
    let cfg = EvolveConfig {
        steps: steps - 1,
        cutoff,
        exact: true,
    };
    let mut acc = vec![0.0; tree.num_vertices()];
    evolve_each(tree, psi0, &cfg, |_, psi| {
        for (a, z) in psi.iter().enumerate() {
            acc[tree.terminus(a)] += z.norm_sqr();
        }
    })?;
    acc.iter_mut().for_each(|x| *x /= steps as f64);
    Ok(acc)
}

/// Time-averaged distribution predicted by the `±1` eigenprojections.
#[derive(Clone, Debug)]
pub struct LimitDistribution {
    /// `Σ_{t(e)=u} |Π_+ψ0(e)|² + |Π_−ψ0(e)|²`.
    pub per_eigen: Vec<f64>,
    /// `Σ_{t(e)=u} |(Π_+ + Π_−)ψ0(e)|²`.
    pub combined: Vec<f64>,
    /// `‖Π_+ψ0‖²` and `‖Π_−ψ0‖²` including the infinite tails.
    pub mass_plus: f64,
    pub mass_minus: f64,
    pub coefficients: Vec<(FlowIndex, C64)>,
    pub flows_used: usize,
}

impl LimitDistribution {
    pub fn total_mass(&self) -> f64 {
        self.mass_plus + self.mass_minus
    }
}

/// Relative size below which a flow overlap is treated as zero.
pub const OVERLAP_TOL: f64 = 1e-13;

/// Note carried in outputs: the Cesàro limit equals the eigenprojection
/// form when the rest of the spectrum is continuous.
pub const LIMIT_HYPOTHESIS: &str = "assumes purely continuous spectrum of T; holds for regular trees";

/// Project `ψ0` onto the span of all square-summable flows with `u` in the
/// truncation, using tail-inclusive Gram matrices.
///
/// On spherically symmetric trees the Gram matrix is diagonal and only flows
/// overlapping `ψ0` contribute; otherwise each sign is solved as a block.
pub fn limit_distribution(tree: &TruncatedTree, psi0: &[C64]) -> Result<LimitDistribution> {
    if psi0.len() != tree.num_arcs() {
        return Err(Error::dim("initial state", tree.num_arcs(), psi0.len()));
    }
    let flows = build_all_flows(tree, tree.depth())?;
    let psi_norm_sq: f64 = psi0.iter().map(|z| z.norm_sqr()).sum();
    let mut proj = [ArcState::zeros(tree.num_arcs()), ArcState::zeros(tree.num_arcs())];
    let mut mass = [0.0f64; 2];
    let mut coefficients = Vec::new();
    let mut used = 0;
    for (slot, sign) in Sign::BOTH.into_iter().enumerate() {
        let group: Vec<&FlowFunction> = flows
            .iter()
            .filter(|f| f.sign() == sign && f.is_square_summable())
            .collect();
        let coeffs: Vec<(usize, C64)> = if tree.spec().is_spherically_symmetric() {
            group
                .iter()
                .enumerate()
                .filter_map(|(i, f)| {
                    let b = f.overlap(psi0);
                    let scale = (f.truncated_norm_sq() * psi_norm_sq).sqrt();
                    (b.norm() > OVERLAP_TOL * scale).then(|| (i, b / f.norm_sq()))
                })
                .collect()
        } else {
            let owned: Vec<FlowFunction> = group.iter().map(|f| (*f).clone()).collect();
            project_onto_flows(tree, &owned, psi0, true)?
                .into_iter()
                .enumerate()
                .collect()
        };
        used += coeffs.len();
        for &(i, c) in &coeffs {
            let f = group[i];
            for e in f.entries() {
                proj[slot][e.arc] += c * e.value;
                proj[slot][e.arc + 1] -= c * e.value * sign.eps();
            }
            coefficients.push((f.index.clone(), c));
        }
        for &(i, ci) in &coeffs {
            for &(k, ck) in &coeffs {
                mass[slot] += (ci.conj() * group[i].inner(group[k], true) * ck).re;
            }
        }
    }
    let plus = measure(tree, &proj[0]);
    let minus = measure(tree, &proj[1]);
    let per_eigen = plus.iter().zip(&minus).map(|(a, b)| a + b).collect();
    let combined = measure(tree, &proj[0].add(&proj[1]));
    Ok(LimitDistribution {
        per_eigen,
        combined,
        mass_plus: mass[0],
        mass_minus: mass[1],
        coefficients,
        flows_used: used,
    })
}

/// Per-vertex limit for the normalized `B` state on the `κ`-regular tree,
/// derived from the two root flows.
pub fn derived_localization_b(kappa: u32, depth: usize) -> f64 {
    let k = kappa as f64;
    let c = (k - 2.0).powi(2) / 2.0;
    if depth == 0 {
        c / (k - 1.0).powi(2)
    } else {
        c * (k - 1.0).powi(-(2 * depth as i32 + 1))
    }
}

/// Competing closed form `(κ−2)²/2 · (κ−1)^{−(3d + 1 − δ_{d,0})}`, kept for comparison only.
pub fn printed_localization_b(kappa: u32, depth: usize) -> f64 {
    let k = kappa as f64;
    let delta = if depth == 0 { 1 } else { 0 };
    (k - 2.0).powi(2) / 2.0 * (k - 1.0).powi(-(3 * depth as i32 + 1 - delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{build_flow, decompose_birth};
    use crate::operators::{apply_boundary, Boundary};
    use crate::tree::{build_tree, TreeSpec, VertexPath};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn k3(depth: usize) -> TruncatedTree {
        build_tree(&TreeSpec::regular(3).unwrap(), depth).unwrap()
    }

    #[test]
    fn initial_states() {
        let t = k3(2);
        let a = make_initial(&t, &InitialState::A, true).unwrap();
        let b = make_initial(&t, &InitialState::B, true).unwrap();
        let w = C64::from_polar(1.0, 2.0 * PI / 3.0);
        for (k, c) in t.children(0).enumerate() {
            let e = t.forward_arc(c);
            assert!((a[e] - C64::new(1.0 / 3f64.sqrt(), 0.0)).norm() < 1e-15);
            assert!((b[e] - w.powu(k as u32) / 3f64.sqrt()).norm() < 1e-15);
        }
        assert!((a.norm() - 1.0).abs() < 1e-15);
        assert_eq!(support_depth(&t, &a), Some(1));
        for j in 1..3 {
            for sign in Sign::BOTH {
                let f = build_flow(&t, &FlowIndex::new(VertexPath::root(), j, sign).unwrap()).unwrap();
                assert!(f.overlap(&a).norm() < 1e-15);
            }
        }
        let bad = InitialState::Custom(ArcState::zeros(3));
        assert!(matches!(make_initial(&t, &bad, true), Err(Error::Dimension { .. })));
    }

    #[test]
    fn one_step_from_root_arc() {
        let t = k3(3);
        let e = t.forward_arc(1);
        let tr = evolve(&t, &ArcState::basis(t.num_arcs(), e), &EvolveConfig { steps: 1, cutoff: None, exact: true })
            .unwrap();
        let mu = &tr.distributions[1];
        assert!((mu[0] - 1.0 / 9.0).abs() < 1e-15);
        for c in t.children(1) {
            assert!((mu[c] - 4.0 / 9.0).abs() < 1e-15);
        }
        assert_eq!(tr.distributions[0], measure(&t, &ArcState::basis(t.num_arcs(), e)));
    }

    #[test]
    fn exactness_is_enforced() {
        let t = k3(4);
        let psi = make_initial(&t, &InitialState::B, true).unwrap();
        let cfg = EvolveConfig { steps: 6, cutoff: None, exact: true };
        match evolve(&t, &psi, &cfg) {
            Err(Error::Precondition(msg)) => assert!(msg.contains("at least 7")),
            other => panic!("unexpected {other:?}"),
        }
        let tr = evolve(&t, &psi, &EvolveConfig { exact: false, ..cfg }).unwrap();
        assert_eq!(tr.semantics, Semantics::Reflecting);
        assert!(tr.norms.iter().all(|n| (n - 1.0).abs() < 1e-12));
    }

    #[test]
    fn exact_runs_agree_across_depths() {
        let shallow = k3(5);
        let deep = k3(7);
        let a = make_initial(&shallow, &InitialState::B, true).unwrap();
        let b = make_initial(&deep, &InitialState::B, true).unwrap();
        let cfg = EvolveConfig { steps: 4, cutoff: None, exact: true };
        let ta = evolve(&shallow, &a, &cfg).unwrap();
        let tb = evolve(&deep, &b, &cfg).unwrap();
        for (x, y) in ta.distributions.iter().zip(&tb.distributions) {
            for v in 0..shallow.num_vertices() {
                assert!((x[v] - y[v]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn support_grows_one_layer_per_step() {
        let t = k3(6);
        let psi = make_initial(&t, &InitialState::A, true).unwrap();
        let tr = evolve(&t, &psi, &EvolveConfig { steps: 5, cutoff: None, exact: true }).unwrap();
        for (step, mu) in tr.distributions.iter().enumerate() {
            for (v, x) in t.vertices().iter().zip(mu) {
                if v.depth as usize > step + 1 {
                    assert_eq!(*x, 0.0);
                }
            }
        }
    }

    #[test]
    fn flow_eigenstates_are_stationary() {
        let t = k3(4);
        let f = build_flow(&t, &FlowIndex::new("1".parse().unwrap(), 1, Sign::Minus).unwrap()).unwrap();
        let phi = f.to_state(t.num_arcs()).normalized();
        let tr = evolve(&t, &phi, &EvolveConfig { steps: 7, cutoff: None, exact: false }).unwrap();
        for mu in &tr.distributions {
            assert!(mu.iter().zip(&tr.distributions[0]).all(|(a, b)| (a - b).abs() < 1e-15));
        }
    }

    #[test]
    fn limit_for_standard_states() {
        let t = k3(6);
        let a = make_initial(&t, &InitialState::A, true).unwrap();
        let la = limit_distribution(&t, &a).unwrap();
        assert!(la.per_eigen.iter().all(|x| *x < 1e-30));
        assert!(la.total_mass() < 1e-30);
        let b = make_initial(&t, &InitialState::B, true).unwrap();
        let lb = limit_distribution(&t, &b).unwrap();
        assert!((lb.total_mass() - 0.5).abs() < 1e-12);
        let c = 3f64.sqrt() / 4.0;
        for (idx, z) in &lb.coefficients {
            assert!(idx.u.is_root() && idx.j == 1, "{idx}");
            assert!((z - C64::new(c, 0.0)).norm() < 1e-12);
        }
        for v in 0..t.ball_size(6) {
            let d = t.vertex(v).depth as usize;
            assert!((lb.per_eigen[v] - derived_localization_b(3, d)).abs() < 1e-14, "vertex {v}");
        }
    }

    #[test]
    fn limit_on_non_symmetric_tree_uses_gram_solve() {
        let mut counts = std::collections::BTreeMap::new();
        counts.insert("".to_string(), 3);
        counts.insert("0".to_string(), 4);
        counts.insert("0.0".to_string(), 3);
        let spec = TreeSpec::explicit(counts, 3).unwrap();
        let t = build_tree(&spec, 3).unwrap();
        let b = make_initial(&t, &InitialState::B, true).unwrap();
        let l = limit_distribution(&t, &b).unwrap();
        assert!(l.total_mass() > 0.0 && l.total_mass() < 1.0);
        assert!(l.coefficients.iter().any(|(i, c)| !i.u.is_root() && c.norm() > 1e-8));
    }

    #[test]
    fn overlap_criterion() {
        let t = k3(3);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut r = ArcState::random(t.num_arcs(), &mut rng);
        let inner = t.ball_arcs(3);
        for a in inner..t.num_arcs() {
            r[a] = C64::default();
        }
        for (psi, localizes) in [
            (make_initial(&t, &InitialState::A, true).unwrap(), false),
            (make_initial(&t, &InitialState::B, true).unwrap(), true),
            (r, true),
        ] {
            let d = decompose_birth(&t, &psi, 3).unwrap();
            let any = d.coefficients.iter().any(|(_, c)| c.norm() > 1e-12);
            let l = limit_distribution(&t, &psi).unwrap();
            assert_eq!(any, localizes);
            assert_eq!(l.total_mass() > 1e-12, localizes);
        }
    }

    #[test]
    fn cutoff_difference_identity() {
        let t = k3(6);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let mut psi = ArcState::random(t.num_arcs(), &mut rng);
        for a in t.ball_arcs(3)..t.num_arcs() {
            psi[a] = C64::default();
        }
        let full = apply_walk(&t, &psi, None).unwrap();
        let dt = apply_boundary(&t, Boundary::Terminus, &psi, None).unwrap();
        for n in 0..6 {
            let cut = apply_walk(&t, &psi, Some(n)).unwrap();
            let diff = full.sub(&cut).norm();
            let outside: f64 = (t.ball_size(n)..t.num_vertices()).map(|v| dt[v].norm_sqr()).sum();
            assert!((diff - 2.0 * outside.sqrt()).abs() < 1e-12);
            if n >= 3 {
                assert!(diff < 1e-15);
            }
        }
    }

    #[test]
    fn closed_forms() {
        assert!((derived_localization_b(3, 0) - 0.125).abs() < 1e-16);
        assert!((derived_localization_b(3, 2) - 1.0 / 64.0).abs() < 1e-16);
        assert!((printed_localization_b(3, 0) - 0.5).abs() < 1e-16);
        assert!((printed_localization_b(3, 1) - 1.0 / 32.0).abs() < 1e-16);
    }
}
