//! Spectrum of the cut-off walk: eigenpairs of `T_n`, their lifts to the
//! inherited part, flow eigenvectors for `±1`, and birth-space densities.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flows::{build_all_flows, Sign};
use crate::linalg::{
    cdot, dense_eigenvalues, hermitian_eigen, jacobi_eigen, match_multisets, Cholesky,
    ComplexMatrix,
};
use crate::marked::MarkedGraph;
use crate::operators::{
    apply_boundary_adjoint, apply_transition, apply_walk, materialize, transition_matrix,
    ArcState, Boundary, OperatorTag, TreeOperator, VertexFunction, DEFAULT_DENSE_CAP,
};
use crate::tree::{build_tree, TreeSpec, TruncatedTree};

pub const SCHEMA_VERSION: u32 = 1;

/// Eigenvalues of `T_n` this close to `±1` are reported as a range violation.
pub const RANGE_MARGIN: f64 = 1e-12;
/// Lifts need `1 − λ²` bounded away from zero.
pub const LIFT_MARGIN: f64 = 1e-8;

/// `J(z) = (z + 1/z)/2`.
pub fn joukowski(z: C64) -> C64 {
    (z + z.inv()) * 0.5
}

/// `e^{±i arccos λ}`, the two preimages of `λ` on the unit circle.
pub fn inverse_joukowski(lambda: f64) -> Result<[C64; 2]> {
    if !(-1.0..=1.0).contains(&lambda) {
        return Err(Error::Range(format!("inverse Joukowski needs |λ| ≤ 1, got {lambda}")));
    }
    let theta = lambda.acos();
    Ok([C64::from_polar(1.0, theta), C64::from_polar(1.0, -theta)])
}

/// Orthonormal eigenpairs of `T_n`, eigenvalues ascending.
///
/// Vectors are indexed over all vertices of the truncation and vanish outside `V_n`.
pub fn eig_transition(tree: &TruncatedTree, n: usize) -> Result<Vec<(f64, VertexFunction)>> {
    eig_transition_with_cap(tree, n, DEFAULT_DENSE_CAP)
}

pub fn eig_transition_with_cap(
    tree: &TruncatedTree,
    n: usize,
    cap: usize,
) -> Result<Vec<(f64, VertexFunction)>> {
    let dim = tree.ball_size(n.min(tree.depth()));
    if dim > cap {
        return Err(Error::Size {
            what: "T_n dimension",
            needed: dim as u128,
            cap,
        });
    }
    let m = transition_matrix(tree, n)?;
    let eig = jacobi_eigen(&m)?;
    let mut out = Vec::with_capacity(dim);
    for (k, &lambda) in eig.values.iter().enumerate() {
        if lambda.abs() >= 1.0 - RANGE_MARGIN {
            return Err(Error::Consistency(format!(
                "T_{n} has eigenvalue {lambda}, outside (-1, 1)"
            )));
        }
        let mut f = VertexFunction::zeros(tree.num_vertices());
        for (i, x) in eig.vector(k).into_iter().enumerate() {
            f[i] = C64::new(x, 0.0);
        }
        let r = apply_transition(tree, &f, n)?.sub(&f.scaled(C64::new(lambda, 0.0))).norm();
        if r > 1e-10 {
            return Err(Error::Numerical(format!(
                "T_{n} eigenpair {k} has residual {r:e}"
            )));
        }
        out.push((lambda, f));
    }
    Ok(out)
}

/// `(d_T^{(n)*} f − e^{±iθ} d_O^{(n)*} f) / √(2(1 − λ²))` with `θ = arccos λ`.
pub fn lift_eigenpair(
    tree: &TruncatedTree,
    n: usize,
    lambda: f64,
    f: &[C64],
    sign: Sign,
) -> Result<(C64, ArcState)> {
    if lambda.abs() >= 1.0 - LIFT_MARGIN {
        return Err(Error::Precondition(format!(
            "cannot lift λ = {lambda}: 1 − λ² is too small"
        )));
    }
    let [plus, minus] = inverse_joukowski(lambda)?;
    let mu = if sign == Sign::Plus { plus } else { minus };
    let a = apply_boundary_adjoint(tree, Boundary::Terminus, f, Some(n))?;
    let b = apply_boundary_adjoint(tree, Boundary::Origin, f, Some(n))?;
    let s = 1.0 / (2.0 * (1.0 - lambda * lambda)).sqrt();
    let mut v = a;
    v.add_scaled(-mu, &b);
    Ok((mu, v.scaled(C64::new(s, 0.0))))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenKind {
    InheritedPlus,
    InheritedMinus,
    BirthPlus,
    BirthMinus,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenEntry {
    pub re: f64,
    pub im: f64,
    pub kind: EigenKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow: Option<String>,
    pub residual: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub inherited: usize,
    pub inherited_plus: usize,
    pub inherited_minus: usize,
    pub birth_plus: usize,
    pub birth_minus: usize,
    pub total: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumChecks {
    pub max_residual: f64,
    pub max_unit_circle_defect: f64,
    /// Largest `|⟨inherited, birth⟩|` over unit vectors.
    pub max_cross_overlap: f64,
    /// Largest deviation of the inherited vectors from orthonormality.
    pub inherited_orthonormality: f64,
    /// Cholesky condition estimate of the Gram matrix of all eigenvectors.
    pub completeness_condition: f64,
    /// Worst eigenvalue mismatch against a dense Schur decomposition, when run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dense_match: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub schema_version: u32,
    pub tree: TreeSpec,
    pub n: usize,
    /// `dim A_{n+1}`.
    pub dim: usize,
    pub eigen: Vec<EigenEntry>,
    pub counts: KindCounts,
    pub checks: SpectrumChecks,
    /// Eigenvectors restricted to `A_{n+1}`, aligned with `eigen`.
    #[serde(skip)]
    pub vectors: Vec<ArcState>,
}

impl SpectrumReport {
    pub fn eigenvalues(&self) -> Vec<C64> {
        self.eigen.iter().map(|e| C64::new(e.re, e.im)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SpectrumOptions {
    pub tol: f64,
    /// Cross-check against dense diagonalization; `None` runs it when `dim ≤ 600`.
    pub dense_check: Option<bool>,
    pub cap: usize,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            tol: 1e-8,
            dense_check: None,
            cap: DEFAULT_DENSE_CAP,
        }
    }
}

/// Complete eigendecomposition of `U^(n)` on `A_{n+1}`.
pub fn full_spectrum(spec: &TreeSpec, n: usize) -> Result<SpectrumReport> {
    full_spectrum_with(spec, n, SpectrumOptions::default())
}

pub fn full_spectrum_with(spec: &TreeSpec, n: usize, opts: SpectrumOptions) -> Result<SpectrumReport> {
    let tree = build_tree(spec, n)?;
    let dim = tree.num_arcs();
    if dim > opts.cap {
        return Err(Error::Size {
            what: "dim A_{n+1}",
            needed: dim as u128,
            cap: opts.cap,
        });
    }
    let mut eigen = Vec::with_capacity(dim);
    let mut vectors = Vec::with_capacity(dim);
    let mut counts = KindCounts::default();
    let residual = |mu: C64, v: &ArcState| -> Result<f64> {
        let uv = apply_walk(&tree, v, Some(n))?;
        Ok(uv.sub(&v.scaled(mu)).norm() / v.norm())
    };

    for (lambda, f) in eig_transition_with_cap(&tree, n, opts.cap)? {
        for (sign, kind) in [(Sign::Plus, EigenKind::InheritedPlus), (Sign::Minus, EigenKind::InheritedMinus)] {
            let (mu, v) = lift_eigenpair(&tree, n, lambda, &f, sign)?;
            eigen.push(EigenEntry {
                re: mu.re,
                im: mu.im,
                kind,
                lambda: Some(lambda),
                flow: None,
                residual: residual(mu, &v)?,
            });
            vectors.push(v);
            if sign == Sign::Plus {
                counts.inherited_plus += 1;
            } else {
                counts.inherited_minus += 1;
            }
        }
    }
    counts.inherited = counts.inherited_plus + counts.inherited_minus;

    for flow in build_all_flows(&tree, n)? {
        let (mu, kind) = match flow.sign() {
            Sign::Plus => (C64::new(1.0, 0.0), EigenKind::BirthPlus),
            Sign::Minus => (C64::new(-1.0, 0.0), EigenKind::BirthMinus),
        };
        let v = flow.to_state(dim);
        eigen.push(EigenEntry {
            re: mu.re,
            im: mu.im,
            kind,
            lambda: None,
            flow: Some(flow.index.to_string()),
            residual: residual(mu, &v)?,
        });
        vectors.push(v);
        match kind {
            EigenKind::BirthPlus => counts.birth_plus += 1,
            _ => counts.birth_minus += 1,
        }
    }
    counts.total = eigen.len();

    let checks = spectrum_checks(&tree, n, &eigen, &vectors, opts)?;
    let report = SpectrumReport {
        schema_version: SCHEMA_VERSION,
        tree: spec.clone(),
        n,
        dim,
        eigen,
        counts,
        checks,
        vectors,
    };
    if report.counts.total != dim {
        return Err(Error::Consistency(format!(
            "found {} eigenpairs for dim A_{{n+1}} = {dim}",
            report.counts.total
        )));
    }
    if report.checks.max_residual > opts.tol {
        return Err(Error::Consistency(format!(
            "eigenpair residual {:e} exceeds {:e}",
            report.checks.max_residual, opts.tol
        )));
    }
    if let Some(d) = report.checks.dense_match {
        if d > opts.tol {
            return Err(Error::Consistency(format!(
                "eigenvalues differ from dense diagonalization by {d:e}"
            )));
        }
    }
    Ok(report)
}

fn spectrum_checks(
    tree: &TruncatedTree,
    n: usize,
    eigen: &[EigenEntry],
    vectors: &[ArcState],
    opts: SpectrumOptions,
) -> Result<SpectrumChecks> {
    let dim = vectors.len();
    let max_residual = eigen.iter().map(|e| e.residual).fold(0.0, f64::max);
    let max_unit_circle_defect = eigen
        .iter()
        .map(|e| (C64::new(e.re, e.im).norm() - 1.0).abs())
        .fold(0.0, f64::max);
    let inherited: Vec<usize> = (0..dim)
        .filter(|&i| matches!(eigen[i].kind, EigenKind::InheritedPlus | EigenKind::InheritedMinus))
        .collect();
    let birth: Vec<usize> = (0..dim).filter(|i| !inherited.contains(i)).collect();
    let unit: Vec<ArcState> = vectors.iter().map(|v| v.normalized()).collect();
    let mut max_cross_overlap = 0.0f64;
    for &i in &inherited {
        for &j in &birth {
            max_cross_overlap = max_cross_overlap.max(unit[i].inner(&unit[j]).norm());
        }
    }
    let mut inherited_orthonormality = 0.0f64;
    for (a, &i) in inherited.iter().enumerate() {
        for &j in &inherited[a..] {
            let want = if i == j { 1.0 } else { 0.0 };
            let z = vectors[i].inner(&vectors[j]);
            inherited_orthonormality = inherited_orthonormality.max((z - want).norm());
        }
    }
    let mut g = ComplexMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let z = cdot(&unit[i], &unit[j]);
            g.set(i, j, z);
            g.set(j, i, z.conj());
        }
    }
    let completeness_condition = Cholesky::new(&g)
        .map_err(|_| Error::Consistency("eigenvectors do not span A_{n+1}".into()))?
        .condition_estimate();
    let run_dense = opts.dense_check.unwrap_or(dim <= 600);
    let dense_match = if run_dense {
        let u = materialize(&TreeOperator::new(tree, OperatorTag::CutoffWalk, Some(n))?, opts.cap)?;
        let dense = dense_eigenvalues(&u)?;
        let ours: Vec<C64> = eigen.iter().map(|e| C64::new(e.re, e.im)).collect();
        Some(match_multisets(&ours, &dense).ok_or_else(|| {
            Error::Consistency("dense and lifted spectra differ in size".into())
        })?)
    } else {
        None
    };
    Ok(SpectrumChecks {
        max_residual,
        max_unit_circle_defect,
        max_cross_overlap,
        inherited_orthonormality,
        completeness_condition,
        dense_match,
    })
}

/// Smallest eigenvalue of the Gram matrix of the stacked ranges of
/// `d_T^{(n)*}` and `d_O^{(n)*}`, built from materialized columns.
///
/// It is positive exactly when the two ranges meet only in zero.
pub fn range_intersection_gap(tree: &TruncatedTree, n: usize) -> Result<f64> {
    let nb = tree.ball_size(n);
    let mut cols: Vec<ArcState> = Vec::with_capacity(2 * nb);
    for dir in [Boundary::Terminus, Boundary::Origin] {
        for v in 0..nb {
            cols.push(apply_boundary_adjoint(
                tree,
                dir,
                &VertexFunction::basis(tree.num_vertices(), v),
                Some(n),
            )?);
        }
    }
    let k = cols.len();
    let mut g = ComplexMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            g.set(i, j, cols[i].inner(&cols[j]));
        }
    }
    Ok(hermitian_eigen(&g)?.values[0])
}

/// One lifted eigenpair of a marked walk.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarkedLift {
    pub lambda: f64,
    pub re: f64,
    pub im: f64,
    pub norm_defect: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarkedSpectrum {
    pub transition_eigenvalues: Vec<f64>,
    pub spectral_radius: f64,
    pub lifts: Vec<MarkedLift>,
}

/// Eigenpairs of `T_M` and their lifts `d_{±,M}^* f` on a marked graph.
pub fn marked_spectrum(g: &MarkedGraph) -> Result<MarkedSpectrum> {
    let (values, vectors) = g.transition_eigen()?;
    let spectral_radius = values.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    if spectral_radius >= 1.0 - RANGE_MARGIN {
        return Err(Error::Consistency(format!(
            "T_M has spectral radius {spectral_radius}, not below 1"
        )));
    }
    let mut lifts = Vec::with_capacity(2 * values.len());
    for (nu, f) in values.iter().zip(&vectors) {
        let fnorm = crate::linalg::cnorm(f);
        for plus in [true, false] {
            let (mu, v) = g.lift(*nu, f, plus)?;
            lifts.push(MarkedLift {
                lambda: *nu,
                re: mu.re,
                im: mu.im,
                norm_defect: (crate::linalg::cnorm(&v) - fnorm).abs(),
                residual: g.walk_residual(mu, &v)?,
            });
        }
    }
    Ok(MarkedSpectrum {
        transition_eigenvalues: values,
        spectral_radius,
        lifts,
    })
}

/// One depth of the birth-density series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityRecord {
    pub n: usize,
    /// `B_n = |V_n|`.
    pub b_n: u128,
    /// `∂B_n = |V_{n+1}| − |V_n|`.
    pub db_n: u128,
    /// `∂B_n / B_n`.
    pub ratio: f64,
    /// Flows per sign, `|V_{n+1}| − 1 − |V_n|`.
    pub birth_per_sign: u128,
    /// `dim A_{n+1} = 2(|V_{n+1}| − 1)`.
    pub dim_total: u128,
    /// `ρ_n` as a reduced fraction.
    pub rho_num: u128,
    pub rho_den: u128,
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityLimit {
    /// Ratios settled to `h`; limit `h / (2(1 + h))`.
    Converged { h: f64, rho: f64 },
    /// Ratios kept oscillating; extremes over the tail window.
    Window {
        h_minus: f64,
        h_plus: f64,
        rho_lower: f64,
        rho_upper: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensitySeries {
    pub schema_version: u32,
    pub records: Vec<DensityRecord>,
    pub limit: DensityLimit,
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn rho_of_h(h: f64) -> f64 {
    h / (2.0 * (1.0 + h))
}

/// `ρ_n` for `0 ≤ n ≤ n_max` from exact vertex counts.
pub fn birth_density(spec: &TreeSpec, n_max: usize) -> Result<DensitySeries> {
    let levels = spec.level_sizes(n_max + 1)?;
    let mut ball = Vec::with_capacity(levels.len());
    let mut acc = 0u128;
    for l in &levels {
        acc = acc
            .checked_add(*l)
            .ok_or_else(|| Error::Range("ball size overflows u128".into()))?;
        ball.push(acc);
    }
    let records: Vec<DensityRecord> = (0..=n_max)
        .map(|n| {
            let (b, b1) = (ball[n], ball[n + 1]);
            let birth = b1 - 1 - b;
            let dim = 2 * (b1 - 1);
            let g = gcd(birth, dim).max(1);
            DensityRecord {
                n,
                b_n: b,
                db_n: b1 - b,
                ratio: (b1 - b) as f64 / b as f64,
                birth_per_sign: birth,
                dim_total: dim,
                rho_num: birth / g,
                rho_den: dim / g,
                rho: birth as f64 / dim as f64,
            }
        })
        .collect();
    let limit = density_limit(&records);
    Ok(DensitySeries {
        schema_version: SCHEMA_VERSION,
        records,
        limit,
    })
}

fn aitken(r: &[f64]) -> f64 {
    let (d1, d2) = (r[1] - r[0], r[2] - r[1]);
    if d2 == d1 {
        r[2]
    } else {
        r[2] - d2 * d2 / (d2 - d1)
    }
}

/// Ratios are accepted as convergent when they move monotonically and the
/// Aitken-extrapolated estimates from the last three windows agree to 10⁻³.
fn density_limit(records: &[DensityRecord]) -> DensityLimit {
    let ratios: Vec<f64> = records.iter().map(|r| r.ratio).collect();
    if ratios.len() >= 5 {
        let tail = &ratios[ratios.len() - 5..];
        let diffs: Vec<f64> = tail.windows(2).map(|w| w[1] - w[0]).collect();
        let monotone = diffs.iter().all(|d| *d >= 0.0) || diffs.iter().all(|d| *d <= 0.0);
        let est: Vec<f64> = tail.windows(3).map(aitken).collect();
        let h = est[2];
        let spread = est.iter().map(|e| (e - h).abs()).fold(0.0, f64::max);
        if monotone && h.is_finite() && spread < 1e-3 * h.abs().max(1e-300) {
            return DensityLimit::Converged { h, rho: rho_of_h(h) };
        }
    }
    let window = &ratios[ratios.len() / 2..];
    let h_minus = window.iter().cloned().fold(f64::INFINITY, f64::min);
    let h_plus = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    DensityLimit::Window {
        h_minus,
        h_plus,
        rho_lower: rho_of_h(h_minus),
        rho_upper: rho_of_h(h_plus),
    }
}

impl DensitySeries {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,B_n,dB_n,ratio,rho,rho_num,rho_den\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{:.12},{:.12},{},{}\n",
                r.n, r.b_n, r.db_n, r.ratio, r.rho, r.rho_num, r.rho_den
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k3() -> TreeSpec {
        TreeSpec::regular(3).unwrap()
    }

    #[test]
    fn joukowski_pairs() {
        assert!(joukowski(C64::new(0.0, 1.0)).norm() < 1e-16);
        let [a, b] = inverse_joukowski(1.0).unwrap();
        assert_eq!(a, C64::new(1.0, 0.0));
        assert_eq!(b, C64::new(1.0, 0.0));
        let [a, b] = inverse_joukowski(0.5).unwrap();
        assert!((a - C64::new(0.5, 0.75f64.sqrt())).norm() < 1e-15);
        assert!((b - a.conj()).norm() < 1e-15);
        for l in [-0.99, -0.3, 0.0, 0.42, 0.9] {
            for z in inverse_joukowski(l).unwrap() {
                assert!((joukowski(z).re - l).abs() < 1e-14);
                assert!(joukowski(z).im.abs() < 1e-14);
            }
        }
        assert!(inverse_joukowski(1.5).is_err());
    }

    #[test]
    fn star_transition_spectrum() {
        let t = build_tree(&k3(), 1).unwrap();
        let eig = eig_transition(&t, 1).unwrap();
        let vals: Vec<f64> = eig.iter().map(|e| e.0).collect();
        let s = 1.0 / 3f64.sqrt();
        for (v, w) in vals.iter().zip([-s, 0.0, 0.0, s]) {
            assert!((v - w).abs() < 1e-13);
        }
    }

    #[test]
    fn transition_spectrum_symmetric_and_in_band() {
        let t = build_tree(&k3(), 4).unwrap();
        let vals: Vec<f64> = eig_transition(&t, 4).unwrap().into_iter().map(|e| e.0).collect();
        let band = 2.0 * 2f64.sqrt() / 3.0;
        assert!(vals.iter().all(|v| v.abs() <= band + 1e-12));
        for (a, b) in vals.iter().zip(vals.iter().rev()) {
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn lift_examples() {
        let t = build_tree(&k3(), 1).unwrap();
        let eig = eig_transition(&t, 1).unwrap();
        let (l, f) = &eig[3];
        let (mu, v) = lift_eigenpair(&t, 1, *l, f, Sign::Plus).unwrap();
        assert!((mu - C64::new(1.0 / 3f64.sqrt(), (2.0f64 / 3.0).sqrt())).norm() < 1e-13);
        assert!((v.norm() - 1.0).abs() < 1e-13);
        let (l0, f0) = &eig[1];
        let (mu0, v0) = lift_eigenpair(&t, 1, *l0, f0, Sign::Minus).unwrap();
        assert!((mu0 - C64::new(0.0, -1.0)).norm() < 1e-12);
        let a = apply_boundary_adjoint(&t, Boundary::Terminus, f0, Some(1)).unwrap();
        let b = apply_boundary_adjoint(&t, Boundary::Origin, f0, Some(1)).unwrap();
        let mut want = a;
        want.add_scaled(C64::new(0.0, 1.0), &b);
        let want = want.scaled(C64::new(0.5f64.sqrt(), 0.0));
        assert!(v0.sub(&want).max_abs() < 1e-12);
        assert!(lift_eigenpair(&t, 1, 1.0, f0, Sign::Plus).is_err());
    }

    #[test]
    fn spectrum_counts() {
        for (n, inh, birth) in [(1usize, 8usize, 5usize), (2, 20, 11)] {
            let r = full_spectrum(&k3(), n).unwrap();
            assert_eq!(r.counts.inherited, inh);
            assert_eq!(r.counts.birth_plus, birth);
            assert_eq!(r.counts.birth_minus, birth);
            assert_eq!(r.counts.total, r.dim);
            assert!(r.checks.dense_match.unwrap() < 1e-8);
            assert!(r.checks.max_cross_overlap < 1e-8);
            assert!(r.checks.inherited_orthonormality < 1e-10);
            assert!(r.checks.max_unit_circle_defect < 1e-10);
        }
    }

    #[test]
    fn spectrum_report_json() {
        let r = full_spectrum(&TreeSpec::spherically_symmetric(vec![4, 3]).unwrap(), 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["counts"]["total"], r.dim);
        assert_eq!(v["eigen"][0]["kind"], "inherited_plus");
        assert!(v["eigen"][0]["lambda"].is_f64());
    }

    #[test]
    fn ranges_meet_only_in_zero() {
        let t = build_tree(&k3(), 2).unwrap();
        let gap = range_intersection_gap(&t, 2).unwrap();
        let top = eig_transition(&t, 2).unwrap().last().unwrap().0;
        assert!((gap - (1.0 - top)).abs() < 1e-10);
    }

    #[test]
    fn density_values() {
        let s = birth_density(&k3(), 8).unwrap();
        assert_eq!((s.records[2].rho_num, s.records[2].rho_den), (11, 42));
        assert_eq!((s.records[6].rho_num, s.records[6].rho_den), (191, 762));
        assert!((s.records[8].rho - 0.25).abs() < 3e-3);
        match s.limit {
            DensityLimit::Converged { h, rho } => {
                assert!((h - 1.0).abs() < 1e-3);
                assert!((rho - 0.25).abs() < 1e-4);
            }
            other => panic!("expected convergence, got {other:?}"),
        }
        let alt = birth_density(&TreeSpec::spherically_symmetric(vec![4, 3]).unwrap(), 12).unwrap();
        assert!(matches!(alt.limit, DensityLimit::Window { .. }));
        assert!(alt.to_csv().starts_with("n,B_n,dB_n,ratio,rho,rho_num,rho_den\n0,1,4,"));
    }
}
