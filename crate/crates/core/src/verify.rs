//! Invariant suite run by `grover-tree verify`.

use std::fmt;

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{limit_distribution, make_initial, InitialState};
use crate::error::Result;
use crate::flows::{build_all_flows, build_flow_to, decompose_birth, gram, project_inherited, verify_flow_eigen};
use crate::marked::{cycle_edges, MarkedGraph};
use crate::operators::{
    apply_boundary, apply_boundary_adjoint, apply_shift, apply_transition, apply_walk, materialize, ArcState,
    Boundary, OperatorTag, TreeOperator, VertexFunction,
};
use crate::spectral::{birth_density, eig_transition, full_spectrum_with, marked_spectrum, SpectrumOptions};
use crate::tree::{build_tree, TreeSpec, TruncatedTree};

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub observed: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub note: String,
}

impl Check {
    fn bound(name: &'static str, observed: f64, tolerance: f64) -> Self {
        Check {
            name,
            observed,
            tolerance,
            passed: observed <= tolerance,
            note: String::new(),
        }
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub depth: usize,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            write!(
                f,
                "{}  {:<width$}  {:>10.3e} <= {:.0e}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.observed,
                c.tolerance
            )?;
            if !c.note.is_empty() {
                write!(f, "  ({})", c.note)?;
            }
            writeln!(f)?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

fn diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn restrict(tree: &TruncatedTree, f: &[C64], n: usize) -> VertexFunction {
    let mut g = VertexFunction::zeros(tree.num_vertices());
    g[..tree.ball_size(n)].copy_from_slice(&f[..tree.ball_size(n)]);
    g
}

struct Suite<'a> {
    spec: &'a TreeSpec,
    tree: TruncatedTree,
    n: usize,
    rng: ChaCha8Rng,
    trials: usize,
}

impl Suite<'_> {
    fn arcs(&mut self) -> ArcState {
        ArcState::random(self.tree.num_arcs(), &mut self.rng)
    }

    fn ball_state(&mut self, n: usize) -> ArcState {
        let mut psi = self.arcs();
        for a in self.tree.ball_arcs(n)..self.tree.num_arcs() {
            psi[a] = C64::default();
        }
        psi
    }

    fn coisometry(&mut self) -> Result<Check> {
        let (t, n) = (&self.tree, self.n);
        let mut worst = 0.0f64;
        for _ in 0..self.trials {
            let f = VertexFunction::random(t.num_vertices(), &mut self.rng);
            let want = restrict(&self.tree, &f, n);
            for dir in [Boundary::Terminus, Boundary::Origin] {
                let up = apply_boundary_adjoint(t, dir, &f, Some(n))?;
                worst = worst.max(diff(&apply_boundary(t, dir, &up, Some(n))?, &want));
            }
        }
        Ok(Check::bound("boundary maps are coisometries", worst, 1e-12))
    }

    fn shift_relation(&mut self) -> Result<Check> {
        let mut worst = 0.0f64;
        for _ in 0..self.trials {
            let psi = self.arcs();
            let a = apply_boundary(&self.tree, Boundary::Origin, &psi, None)?;
            let b = apply_boundary(&self.tree, Boundary::Terminus, &apply_shift(&self.tree, &psi)?, None)?;
            worst = worst.max(diff(&a, &b));
        }
        Ok(Check::bound("origin boundary is terminus boundary after shift", worst, 1e-12))
    }

    fn transition_factorizations(&mut self) -> Result<Check> {
        let (t, n) = (&self.tree, self.n);
        let mut worst = 0.0f64;
        for _ in 0..self.trials {
            let f = VertexFunction::random(t.num_vertices(), &mut self.rng);
            let tf = apply_transition(t, &f, n)?;
            let a = apply_boundary(t, Boundary::Origin, &apply_boundary_adjoint(t, Boundary::Terminus, &f, Some(n))?, Some(n))?;
            let b = apply_boundary(t, Boundary::Terminus, &apply_boundary_adjoint(t, Boundary::Origin, &f, Some(n))?, Some(n))?;
            worst = worst.max(diff(&tf, &a)).max(diff(&tf, &b));
        }
        Ok(Check::bound("cut-off transition factorizes through boundaries", worst, 1e-12))
    }

    fn inherited_invariance(&mut self) -> Result<(Check, Check)> {
        let (t, n) = (&self.tree, self.n);
        let (mut derived, mut printed) = (0.0f64, 0.0f64);
        for _ in 0..self.trials {
            let f = restrict(t, &VertexFunction::random(t.num_vertices(), &mut self.rng), n);
            let g = restrict(t, &VertexFunction::random(t.num_vertices(), &mut self.rng), n);
            let tg = apply_transition(t, &g, n)?;
            let psi = apply_boundary_adjoint(t, Boundary::Terminus, &f, Some(n))?
                .add(&apply_boundary_adjoint(t, Boundary::Origin, &g, Some(n))?);
            let u = apply_walk(t, &psi, Some(n))?;
            let minus_dtg = apply_boundary_adjoint(t, Boundary::Terminus, &g, Some(n))?.scaled(C64::new(-1.0, 0.0));
            for (sign, slot) in [(2.0, &mut derived), (-2.0, &mut printed)] {
                let mut h = f.clone();
                h.add_scaled(C64::new(sign, 0.0), &tg);
                let want = minus_dtg.add(&apply_boundary_adjoint(t, Boundary::Origin, &h, Some(n))?);
                *slot = slot.max(diff(&u, &want));
            }
        }
        Ok((
            Check::bound("walk maps the inherited subspace into itself", derived, 1e-12),
            Check {
                name: "printed invariance formula (reported only)",
                observed: printed,
                tolerance: f64::INFINITY,
                passed: true,
                note: "uses f - 2Tg; the walk gives f + 2Tg".into(),
            },
        ))
    }

    fn unitarity(&mut self) -> Result<Check> {
        let n = self.n.min(3);
        let tree = build_tree(self.spec, n)?;
        let op = TreeOperator::new(&tree, OperatorTag::CutoffWalk, Some(n))?;
        let m = materialize(&op, 5000)?;
        Ok(Check::bound("cut-off walk is unitary", m.unitarity_defect(), 1e-12))
    }

    fn ball_invariance(&mut self) -> Result<Check> {
        let n = self.n.saturating_sub(1);
        let inner = self.tree.ball_arcs(n + 1);
        let mut worst = 0.0f64;
        for _ in 0..self.trials {
            let psi = self.arcs();
            let mut cut = psi.clone();
            for a in inner..cut.len() {
                cut[a] = C64::default();
            }
            let a = apply_walk(&self.tree, &cut, Some(n))?;
            let mut b = apply_walk(&self.tree, &psi, Some(n))?;
            for a in inner..b.len() {
                b[a] = C64::default();
            }
            worst = worst.max(diff(&a, &b));
        }
        Ok(Check::bound("cut-off walk commutes with the ball projection", worst, 1e-15))
    }

    fn strong_convergence(&mut self) -> Result<Check> {
        let d = self.n.saturating_sub(1).max(1).min(self.n);
        let psi = self.ball_state(d);
        let full = apply_walk(&self.tree, &psi, None)?;
        let dt = apply_boundary(&self.tree, Boundary::Terminus, &psi, None)?;
        let mut worst = 0.0f64;
        for n in 0..=self.n {
            let gap = full.sub(&apply_walk(&self.tree, &psi, Some(n))?).norm();
            let outside: f64 = (self.tree.ball_size(n)..self.tree.num_vertices()).map(|v| dt[v].norm_sqr()).sum();
            worst = worst.max((gap - 2.0 * outside.sqrt()).abs());
            if n >= d {
                worst = worst.max(gap);
            }
        }
        Ok(Check::bound("cut-off walk converges to the walk", worst, 1e-12))
    }

    fn transition_range(&mut self) -> Result<Check> {
        let pairs = eig_transition(&self.tree, self.n)?;
        let top = pairs.iter().map(|(l, _)| l.abs()).fold(0.0, f64::max);
        let edge = 2.0 * ((self.tree.min_degree().max(2) - 1) as f64).sqrt() / self.tree.min_degree().max(2) as f64;
        let mut c = Check::bound("truncated transition spectrum inside (-1, 1)", top, 1.0 - 1e-12);
        if self.spec.depth_degrees().is_some_and(|d| d.len() == 1) {
            c = c.note(format!("band edge {edge:.6}"));
            c.passed &= top <= edge + 1e-9;
        }
        Ok(c)
    }

    fn flow_eigen(&mut self) -> Result<(Check, Check)> {
        let n = self.n;
        let mut worst = 0.0f64;
        let mut kernel = 0.0f64;
        for flow in build_all_flows(&self.tree, n)? {
            if flow.index.u.depth() + 1 > n {
                continue;
            }
            let r = verify_flow_eigen(&self.tree, &flow)?;
            worst = worst.max(r.full / flow.truncated_norm_sq().sqrt());
            let phi = flow.to_state(self.tree.num_arcs());
            for dir in [Boundary::Terminus, Boundary::Origin] {
                kernel = kernel.max(apply_boundary(&self.tree, dir, &phi, Some(n))?.max_abs());
            }
        }
        Ok((
            Check::bound("flows are eigenvectors for +1 and -1", worst, 1e-10),
            Check::bound("flows lie in both boundary kernels", kernel, 1e-12),
        ))
    }

    fn flow_norms(&mut self) -> Result<Check> {
        let reach = self.n.saturating_sub(1);
        let mut worst = 0.0f64;
        for flow in build_all_flows(&self.tree, reach)? {
            if !flow.is_square_summable() {
                continue;
            }
            let deeper = build_flow_to(&self.tree, &flow.index, self.n)?;
            worst = worst.max((flow.norm_sq() - deeper.norm_sq()).abs() / deeper.norm_sq());
        }
        Ok(Check::bound("tail-inclusive flow norms do not depend on the cutoff", worst, 1e-10))
    }

    fn flow_gram(&mut self) -> Result<Check> {
        let flows: Vec<_> = build_all_flows(&self.tree, self.n)?
            .into_iter()
            .filter(|f| f.is_square_summable())
            .collect();
        let g = gram(&self.tree, &flows, true)?;
        let (mut asym, mut off) = (0.0f64, 0.0f64);
        for i in 0..g.rows() {
            for j in 0..g.cols() {
                asym = asym.max((g.get(i, j) - g.get(j, i).conj()).norm());
                if i != j {
                    off = off.max(g.get(i, j).norm());
                }
            }
        }
        if self.spec.is_spherically_symmetric() {
            Ok(Check::bound("flow Gram matrix is diagonal", off.max(asym), 1e-10))
        } else {
            Ok(Check::bound("flow Gram matrix is hermitian", asym, 1e-12))
        }
    }

    fn spectrum(&mut self) -> Result<Check> {
        let n = self.n.min(3);
        let report = full_spectrum_with(self.spec, n, SpectrumOptions { dense_check: Some(true), ..Default::default() })?;
        let dense = report.checks.dense_match.unwrap_or(f64::INFINITY);
        let worst = report.checks.max_residual.max(dense);
        Ok(Check::bound("spectrum splits into lifts and flows", worst, 1e-8).note(format!(
            "n={n}: {} inherited, {} + {} birth",
            report.counts.inherited, report.counts.birth_plus, report.counts.birth_minus
        )))
    }

    fn completeness(&mut self) -> Result<Check> {
        let n = self.n.saturating_sub(1);
        let mut worst = 0.0f64;
        for _ in 0..self.trials.min(10) {
            let psi = self.ball_state(n + 1);
            let d = decompose_birth(&self.tree, &psi, n)?;
            let inh = project_inherited(&self.tree, &psi, n)?;
            worst = worst.max(diff(&d.birth.add(&inh), &psi));
            let again = decompose_birth(&self.tree, &d.birth, n)?;
            worst = worst.max(diff(&again.birth, &d.birth));
        }
        Ok(Check::bound("inherited and birth parts reconstruct the state", worst, 1e-10))
    }

    fn density(&mut self) -> Result<Check> {
        let series = birth_density(self.spec, self.n)?;
        let mut worst = 0.0f64;
        for r in &series.records {
            let tree = build_tree(self.spec, r.n)?;
            let count = crate::flows::flow_indices(&tree, r.n)?.len() as u128 / 2;
            worst = worst.max(count.abs_diff(r.birth_per_sign) as f64);
        }
        Ok(Check::bound("birth counts match enumerated flows", worst, 0.0))
    }

    fn localization(&mut self) -> Result<Check> {
        let n = self.n;
        let mut worst = 0.0f64;
        for kind in [InitialState::A, InitialState::B] {
            let psi = make_initial(&self.tree, &kind, true)?;
            let d = decompose_birth(&self.tree, &psi, n)?;
            let overlaps = d.coefficients.iter().any(|(_, c)| c.norm() > 1e-12);
            let mass = limit_distribution(&self.tree, &psi)?.total_mass();
            if overlaps != (mass > 1e-12) {
                worst = 1.0;
            }
        }
        Ok(Check::bound("localization occurs exactly with birth overlap", worst, 0.0))
    }

    fn marked(&mut self) -> Result<Check> {
        let g = MarkedGraph::isotropic(6, &cycle_edges(6), &[0])?;
        let s = marked_spectrum(&g)?;
        let worst = s
            .lifts
            .iter()
            .map(|l| l.residual.max(l.norm_defect))
            .fold(0.0, f64::max);
        let mut c = Check::bound("marked cycle lifts are walk eigenvectors", worst, 1e-8)
            .note(format!("spectral radius {:.6}", s.spectral_radius));
        c.passed &= s.spectral_radius < 1.0;
        Ok(c)
    }
}

fn guarded(name: &'static str, r: Result<Check>) -> Check {
    r.unwrap_or_else(|e| Check {
        name,
        observed: f64::NAN,
        tolerance: 0.0,
        passed: false,
        note: e.to_string(),
    })
}

/// Runs every invariant on a truncation of depth `n + 1` (at least 2) with
/// random vectors drawn from `seed`.
pub fn run_suite(spec: &TreeSpec, n: usize, seed: u64) -> Result<VerifyReport> {
    let n = n.max(1);
    let mut s = Suite {
        spec,
        tree: build_tree(spec, n + 1)?,
        n,
        rng: ChaCha8Rng::seed_from_u64(seed),
        trials: 20,
    };
    let mut checks = vec![
        guarded("boundary maps are coisometries", s.coisometry()),
        guarded("origin boundary is terminus boundary after shift", s.shift_relation()),
        guarded("cut-off transition factorizes through boundaries", s.transition_factorizations()),
    ];
    match s.inherited_invariance() {
        Ok((a, b)) => checks.extend([a, b]),
        Err(e) => checks.push(guarded("walk maps the inherited subspace into itself", Err(e))),
    }
    checks.push(guarded("cut-off walk is unitary", s.unitarity()));
    checks.push(guarded("cut-off walk commutes with the ball projection", s.ball_invariance()));
    checks.push(guarded("cut-off walk converges to the walk", s.strong_convergence()));
    checks.push(guarded("truncated transition spectrum inside (-1, 1)", s.transition_range()));
    match s.flow_eigen() {
        Ok((a, b)) => checks.extend([a, b]),
        Err(e) => checks.push(guarded("flows are eigenvectors for +1 and -1", Err(e))),
    }
    checks.push(guarded("tail-inclusive flow norms do not depend on the cutoff", s.flow_norms()));
    checks.push(guarded("flow Gram matrix", s.flow_gram()));
    checks.push(guarded("spectrum splits into lifts and flows", s.spectrum()));
    checks.push(guarded("inherited and birth parts reconstruct the state", s.completeness()));
    checks.push(guarded("birth counts match enumerated flows", s.density()));
    checks.push(guarded("localization occurs exactly with birth overlap", s.localization()));
    checks.push(guarded("marked cycle lifts are walk eigenvectors", s.marked()));
    Ok(VerifyReport {
        schema_version: crate::spectral::SCHEMA_VERSION,
        depth: n,
        seed,
        checks,
    })
}
