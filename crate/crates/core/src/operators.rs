//! Boundary operators, shift, Grover coin and walk on a truncated tree.
//!
//! Every operator is applied matrix-free from arc-local stencils. Degrees in
//! coefficients are the infinite-tree degrees stored on the vertices, so the
//! cut-off walk only differs from the true walk by the projection onto the
//! ball `V_n`, never by modified weights.

use std::fmt;
use std::ops::{Deref, DerefMut};

use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{cdot, cnorm, ComplexMatrix, RealMatrix};
use crate::tree::TruncatedTree;

/// Default cap on the dimension of a materialized operator.
pub const DEFAULT_DENSE_CAP: usize = 5000;
const PAR_THRESHOLD: usize = 1 << 15;

macro_rules! complex_vector {
    ($name:ident) => {
        #[derive(Clone, Debug, PartialEq, Default)]
        pub struct $name(pub Vec<C64>);

        impl $name {
            pub fn zeros(n: usize) -> Self {
                $name(vec![C64::default(); n])
            }

            pub fn basis(n: usize, i: usize) -> Self {
                let mut v = Self::zeros(n);
                v.0[i] = C64::new(1.0, 0.0);
                v
            }

            pub fn norm(&self) -> f64 {
                cnorm(&self.0)
            }

            pub fn norm_sqr(&self) -> f64 {
                self.0.iter().map(|z| z.norm_sqr()).sum()
            }

            /// `⟨self, other⟩`, antilinear in `self`.
            pub fn inner(&self, other: &Self) -> C64 {
                cdot(&self.0, &other.0)
            }

            pub fn scaled(&self, s: C64) -> Self {
                $name(self.0.iter().map(|z| z * s).collect())
            }

            pub fn add_scaled(&mut self, s: C64, other: &Self) {
                for (x, y) in self.0.iter_mut().zip(&other.0) {
                    *x += s * y;
                }
            }

            pub fn sub(&self, other: &Self) -> Self {
                $name(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
            }

            pub fn add(&self, other: &Self) -> Self {
                $name(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
            }

            pub fn normalized(&self) -> Self {
                let n = self.norm();
                self.scaled(C64::new(1.0 / n, 0.0))
            }

            pub fn max_abs(&self) -> f64 {
                self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
            }

            /// Components uniform in the unit square.
            pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
                $name(
                    (0..n)
                        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                        .collect(),
                )
            }
        }

        impl Deref for $name {
            type Target = [C64];
            fn deref(&self) -> &[C64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [C64] {
                &mut self.0
            }
        }
    };
}

complex_vector!(ArcState);
complex_vector!(VertexFunction);

/// Which endpoint a boundary operator collects at.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Terminus,
    Origin,
}

fn check_arcs(tree: &TruncatedTree, psi: &[C64]) -> Result<()> {
    if psi.len() != tree.num_arcs() {
        return Err(Error::dim("arc state", tree.num_arcs(), psi.len()));
    }
    Ok(())
}

fn check_vertices(tree: &TruncatedTree, f: &[C64]) -> Result<()> {
    if f.len() != tree.num_vertices() {
        return Err(Error::dim("vertex function", tree.num_vertices(), f.len()));
    }
    Ok(())
}

fn check_cutoff(tree: &TruncatedTree, cutoff: Option<usize>) -> Result<usize> {
    match cutoff {
        Some(n) if n > tree.depth() => Err(Error::Range(format!(
            "cutoff {n} exceeds truncation depth {}",
            tree.depth()
        ))),
        Some(n) => Ok(n),
        None => Ok(tree.depth() + 1),
    }
}

#[inline]
fn inside(tree: &TruncatedTree, v: usize, limit: usize) -> bool {
    (tree.vertex(v).depth as usize) <= limit
}

/// `d_T ψ` or `d_O ψ`, optionally followed by the projection onto `V_n`.
///
/// Without a cutoff the sums run over the arcs present in the truncation, so
/// values at the outermost layer only see the arc towards the parent.
pub fn apply_boundary(
    tree: &TruncatedTree,
    dir: Boundary,
    psi: &[C64],
    cutoff: Option<usize>,
) -> Result<VertexFunction> {
    check_arcs(tree, psi)?;
    let limit = check_cutoff(tree, cutoff)?;
    let mut out = VertexFunction::zeros(tree.num_vertices());
    for (v, x) in tree.vertices().iter().enumerate() {
        if x.depth as usize > limit {
            continue;
        }
        let s: C64 = tree
            .out_arcs(v)
            .map(|f| match dir {
                Boundary::Origin => psi[f],
                Boundary::Terminus => psi[tree.reverse(f)],
            })
            .sum();
        out[v] = s / (x.degree as f64).sqrt();
    }
    Ok(out)
}

/// `d_T^* f` or `d_O^* f`; with a cutoff, `f` is first restricted to `V_n`.
pub fn apply_boundary_adjoint(
    tree: &TruncatedTree,
    dir: Boundary,
    f: &[C64],
    cutoff: Option<usize>,
) -> Result<ArcState> {
    check_vertices(tree, f)?;
    let limit = check_cutoff(tree, cutoff)?;
    let mut out = ArcState::zeros(tree.num_arcs());
    for a in 0..tree.num_arcs() {
        let v = match dir {
            Boundary::Terminus => tree.terminus(a),
            Boundary::Origin => tree.origin(a),
        };
        if inside(tree, v, limit) {
            out[a] = f[v] / (tree.vertex(v).degree as f64).sqrt();
        }
    }
    Ok(out)
}

/// `(Sψ)(e) = ψ(ē)`.
pub fn apply_shift(tree: &TruncatedTree, psi: &[C64]) -> Result<ArcState> {
    check_arcs(tree, psi)?;
    Ok(ArcState((0..psi.len()).map(|a| psi[a ^ 1]).collect()))
}

/// Per-vertex Grover sums `2/deg(w) Σ_{t(e)=w} ψ(e)` for `w` in `V_limit`, zero outside.
fn grover_sums(tree: &TruncatedTree, psi: &[C64], limit: usize) -> Vec<C64> {
    let sum_at = |v: usize| {
        let x = tree.vertex(v);
        if x.depth as usize > limit {
            return C64::default();
        }
        let s: C64 = tree.out_arcs(v).map(|f| psi[f ^ 1]).sum();
        s * (2.0 / x.degree as f64)
    };
    if tree.num_vertices() >= PAR_THRESHOLD {
        (0..tree.num_vertices()).into_par_iter().map(sum_at).collect()
    } else {
        (0..tree.num_vertices()).map(sum_at).collect()
    }
}

/// Cut-off Grover walk `U^(n) = S(2 d_T^{(n)*} d_T^{(n)} − 1)`.
///
/// `cutoff = None` uses `n` equal to the truncation depth. Arcs entering a
/// vertex outside `V_n` are reflected: `δ_e ↦ −δ_ē`.
pub fn apply_walk(tree: &TruncatedTree, psi: &[C64], cutoff: Option<usize>) -> Result<ArcState> {
    check_arcs(tree, psi)?;
    let n = check_cutoff(tree, Some(cutoff.unwrap_or(tree.depth())))?;
    let sums = grover_sums(tree, psi, n);
    let out_at = |f: usize| sums[tree.origin(f)] - psi[f ^ 1];
    let out = if psi.len() >= PAR_THRESHOLD {
        (0..psi.len()).into_par_iter().map(out_at).collect()
    } else {
        (0..psi.len()).map(out_at).collect()
    };
    Ok(ArcState(out))
}

/// Cut-off coin `2 d_T^{(n)*} d_T^{(n)} − 1`.
pub fn apply_coin(tree: &TruncatedTree, psi: &[C64], cutoff: Option<usize>) -> Result<ArcState> {
    check_arcs(tree, psi)?;
    let n = check_cutoff(tree, Some(cutoff.unwrap_or(tree.depth())))?;
    let sums = grover_sums(tree, psi, n);
    Ok(ArcState(
        (0..psi.len()).map(|e| sums[tree.terminus(e)] - psi[e]).collect(),
    ))
}

/// `T_n f`: isotropic transition operator restricted to `V_n` on both sides.
pub fn apply_transition(tree: &TruncatedTree, f: &[C64], cutoff: usize) -> Result<VertexFunction> {
    check_vertices(tree, f)?;
    let n = check_cutoff(tree, Some(cutoff))?;
    let mut out = VertexFunction::zeros(tree.num_vertices());
    let inv_sqrt: Vec<f64> = tree
        .vertices()
        .iter()
        .map(|x| 1.0 / (x.degree as f64).sqrt())
        .collect();
    for v in 1..tree.ball_size(n) {
        let p = tree.vertex(v).parent.expect("non-root");
        let w = inv_sqrt[v] * inv_sqrt[p];
        out[p] += f[v] * w;
        out[v] += f[p] * w;
    }
    Ok(out)
}

/// Dense real symmetric matrix of `T_n` on the `|V_n|` vertices of the ball.
pub fn transition_matrix(tree: &TruncatedTree, cutoff: usize) -> Result<RealMatrix> {
    let n = check_cutoff(tree, Some(cutoff))?;
    let dim = tree.ball_size(n);
    let mut m = RealMatrix::zeros(dim, dim);
    for v in 1..dim {
        let p = tree.vertex(v).parent.expect("non-root");
        let w = 1.0 / ((tree.vertex(v).degree * tree.vertex(p).degree) as f64).sqrt();
        m.set(v, p, w);
        m.set(p, v, w);
    }
    Ok(m)
}

/// Names of the operators this crate can apply and materialize.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorTag {
    Shift,
    BoundaryT,
    BoundaryO,
    BoundaryTAdjoint,
    BoundaryOAdjoint,
    Walk,
    CutoffWalk,
    Coin,
    Transition,
    MarkedBoundaryT,
    MarkedBoundaryO,
    MarkedWalk,
    MarkedTransition,
}

impl fmt::Display for OperatorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OperatorTag::Shift => "S",
            OperatorTag::BoundaryT => "dT",
            OperatorTag::BoundaryO => "dO",
            OperatorTag::BoundaryTAdjoint => "dT_adj",
            OperatorTag::BoundaryOAdjoint => "dO_adj",
            OperatorTag::Walk => "U",
            OperatorTag::CutoffWalk => "U_n",
            OperatorTag::Coin => "C",
            OperatorTag::Transition => "T_n",
            OperatorTag::MarkedBoundaryT => "dTM",
            OperatorTag::MarkedBoundaryO => "dOM",
            OperatorTag::MarkedWalk => "U_M",
            OperatorTag::MarkedTransition => "T_M",
        };
        f.write_str(s)
    }
}

/// A linear map between coordinate spaces that can be applied and materialized.
pub trait LinearOperator {
    fn tag(&self) -> OperatorTag;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn apply(&self, x: &[C64]) -> Result<Vec<C64>>;
}

/// Column `j` of the result is the operator applied to the `j`-th basis vector.
pub fn materialize(op: &dyn LinearOperator, cap: usize) -> Result<ComplexMatrix> {
    let (rows, cols) = (op.output_dim(), op.input_dim());
    if rows.max(cols) > cap {
        return Err(Error::Size {
            what: "dense operator dimension",
            needed: rows.max(cols) as u128,
            cap,
        });
    }
    let mut m = ComplexMatrix::zeros(rows, cols);
    let mut e = vec![C64::default(); cols];
    for j in 0..cols {
        e[j] = C64::new(1.0, 0.0);
        let col = op.apply(&e)?;
        m.set_column(j, &col);
        e[j] = C64::default();
    }
    Ok(m)
}

/// Operators on a truncated tree. `cutoff = None` means the walk's own
/// default (the truncation depth) and uncut boundary maps.
#[derive(Clone, Copy, Debug)]
pub struct TreeOperator<'a> {
    pub tree: &'a TruncatedTree,
    pub tag: OperatorTag,
    pub cutoff: Option<usize>,
}

impl<'a> TreeOperator<'a> {
    pub fn new(tree: &'a TruncatedTree, tag: OperatorTag, cutoff: Option<usize>) -> Result<Self> {
        use OperatorTag::*;
        match tag {
            Shift | BoundaryT | BoundaryO | BoundaryTAdjoint | BoundaryOAdjoint | Walk
            | CutoffWalk | Coin | Transition => {}
            other => {
                return Err(Error::Precondition(format!(
                    "{other} is a marked-graph operator"
                )))
            }
        }
        if tag == Transition && cutoff.is_none() {
            return Err(Error::Precondition("T_n needs a cutoff".into()));
        }
        check_cutoff(tree, cutoff)?;
        Ok(TreeOperator { tree, tag, cutoff })
    }
}

impl LinearOperator for TreeOperator<'_> {
    fn tag(&self) -> OperatorTag {
        self.tag
    }

    fn input_dim(&self) -> usize {
        use OperatorTag::*;
        match self.tag {
            BoundaryTAdjoint | BoundaryOAdjoint | Transition => self.tree.num_vertices(),
            _ => self.tree.num_arcs(),
        }
    }

    fn output_dim(&self) -> usize {
        use OperatorTag::*;
        match self.tag {
            BoundaryT | BoundaryO | Transition => self.tree.num_vertices(),
            _ => self.tree.num_arcs(),
        }
    }

    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        use OperatorTag::*;
        let t = self.tree;
        Ok(match self.tag {
            Shift => apply_shift(t, x)?.0,
            BoundaryT => apply_boundary(t, Boundary::Terminus, x, self.cutoff)?.0,
            BoundaryO => apply_boundary(t, Boundary::Origin, x, self.cutoff)?.0,
            BoundaryTAdjoint => apply_boundary_adjoint(t, Boundary::Terminus, x, self.cutoff)?.0,
            BoundaryOAdjoint => apply_boundary_adjoint(t, Boundary::Origin, x, self.cutoff)?.0,
            Walk | CutoffWalk => apply_walk(t, x, self.cutoff)?.0,
            Coin => apply_coin(t, x, self.cutoff)?.0,
            Transition => apply_transition(t, x, self.cutoff.expect("checked in new"))?.0,
            _ => unreachable!("rejected in new"),
        })
    }
}
