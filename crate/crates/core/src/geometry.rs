//! Subspaces, projection pairs and the PE decomposition.
//!
//! Subspaces of `ℝ^q` are stored by orthonormal bases. A projection pair
//! `(U, D)` is an insertion map `U` (full column rank) together with a natural
//! projection `D` (full row rank) such that `D·U = I`; for complementary
//! subspaces `W ⊕ V = ℝ^q` the blocks of `[U_W U_V]^{-1}` give
//! `D_V·U_W = I`, `D_W·U_V = I`, `D_V·U_V = 0`, `D_W·U_W = 0`, and
//! `U_W·D_V` is the oblique projector onto `W` along `V`.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::signal::SampledSignal;

/// Default relative rank tolerance for exact algebra.
pub const RANK_TOL: f64 = 1e-10;

/// Largest condition number accepted for `[U_W U_V]`.
pub const MAX_CONDITION: f64 = 1e8;

/// A linear subspace of `ℝ^q` with an orthonormal basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SubspaceRepr", into = "SubspaceRepr")]
pub struct Subspace {
    ambient_dim: usize,
    basis: DMatrix<f64>,
}

/// JSON form: `{ambient_dim, basis}` with the basis as a list of rows.
#[derive(Serialize, Deserialize)]
struct SubspaceRepr {
    ambient_dim: usize,
    basis: Vec<Vec<f64>>,
}

impl From<Subspace> for SubspaceRepr {
    fn from(s: Subspace) -> Self {
        let basis = s
            .basis
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        SubspaceRepr {
            ambient_dim: s.ambient_dim,
            basis,
        }
    }
}

impl TryFrom<SubspaceRepr> for Subspace {
    type Error = Error;

    fn try_from(r: SubspaceRepr) -> Result<Self> {
        let q = r.ambient_dim;
        if r.basis.len() != q && !(r.basis.is_empty() || r.basis.iter().all(Vec::is_empty)) {
            return input(format!("basis has {} rows, expected {q}", r.basis.len()));
        }
        let cols = r.basis.first().map_or(0, Vec::len);
        if r.basis.iter().any(|row| row.len() != cols) {
            return input("basis rows differ in length");
        }
        if cols == 0 {
            return Ok(Subspace::zero(q));
        }
        let m = DMatrix::from_fn(q, cols, |i, j| r.basis[i][j]);
        // stored bases are orthonormal already; keep them bit for bit
        if let Ok(s) = Subspace::from_orthonormal(m.clone()) {
            return Ok(s);
        }
        let s = span_columns(&m, RANK_TOL);
        if s.dim() != cols {
            return input(format!("basis columns are dependent (rank {} < {cols})", s.dim()));
        }
        Ok(s)
    }
}

impl Subspace {
    pub fn zero(ambient_dim: usize) -> Self {
        Self {
            ambient_dim,
            basis: DMatrix::zeros(ambient_dim, 0),
        }
    }

    pub fn full(ambient_dim: usize) -> Self {
        Self {
            ambient_dim,
            basis: DMatrix::identity(ambient_dim, ambient_dim),
        }
    }

    /// Wraps a basis already known to be orthonormal (checked to `1e-10`).
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        let r = basis.ncols();
        let err = (basis.transpose() * &basis - DMatrix::identity(r, r)).abs().max();
        if r > 0 && err > 1e-10 {
            return input(format!("basis is not orthonormal (error {err:.2e})"));
        }
        Ok(Self {
            ambient_dim: basis.nrows(),
            basis,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Orthogonal projector `B·Bᵀ`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// Orthogonal projection of `v` onto the subspace.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * v)
    }

    /// A uniformly distributed unit vector in the subspace, or `None` for `{0}`.
    pub fn random_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<DVector<f64>> {
        let r = self.dim();
        if r == 0 {
            return None;
        }
        loop {
            let c = DVector::<f64>::from_fn(r, |_, _| rng.sample(StandardNormal));
            let n = c.norm();
            if n > 1e-12 {
                return Some(&self.basis * (c / n));
            }
        }
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Orthonormal basis of the column space of `m`, dropping singular values below
/// `rank_tol·σ_max`.
pub fn span_columns(m: &DMatrix<f64>, rank_tol: f64) -> Subspace {
    let scale = spectral_norm(m);
    span_columns_scaled(m, rank_tol * scale)
}

fn span_columns_scaled(m: &DMatrix<f64>, threshold: f64) -> Subspace {
    let q = m.nrows();
    if m.ncols() == 0 || q == 0 {
        return Subspace::zero(q);
    }
    let svd = SVD::new(m.clone(), true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut keep: Vec<(f64, usize)> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|&(_, &s)| s > threshold && s > 0.0)
        .map(|(i, &s)| (s, i))
        .collect();
    keep.sort_by(|a, b| b.0.total_cmp(&a.0));
    let cols: Vec<_> = keep.iter().map(|&(_, i)| u.column(i).into_owned()).collect();
    if cols.is_empty() {
        return Subspace::zero(q);
    }
    Subspace {
        ambient_dim: q,
        basis: DMatrix::from_columns(&cols),
    }
}

/// Span of a list of vectors in `ℝ^q`; the empty list spans `{0}`.
pub fn span(ambient_dim: usize, vectors: &[DVector<f64>], rank_tol: f64) -> Result<Subspace> {
    if let Some(v) = vectors.iter().find(|v| v.len() != ambient_dim) {
        return input(format!("vector of length {} in ℝ^{ambient_dim}", v.len()));
    }
    if vectors.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
        return input("vectors must be finite");
    }
    if vectors.is_empty() {
        return Ok(Subspace::zero(ambient_dim));
    }
    Ok(span_columns(&DMatrix::from_columns(vectors), rank_tol))
}

/// Orthogonal complement.
pub fn complement(s: &Subspace) -> Subspace {
    let q = s.ambient_dim;
    match s.dim() {
        0 => return Subspace::full(q),
        r if r == q => return Subspace::zero(q),
        _ => {}
    }
    // eigenvectors of the projector with eigenvalue ~0
    let eig = SymmetricEigen::new(s.projector());
    let mut cols: Vec<(f64, DVector<f64>)> = eig
        .eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .filter(|(&l, _)| l < 0.5)
        .map(|(&l, v)| (l, v.into_owned()))
        .collect();
    cols.sort_by(|a, b| a.0.total_cmp(&b.0));
    let vecs: Vec<_> = cols.into_iter().map(|(_, v)| v).collect();
    Subspace {
        ambient_dim: q,
        basis: DMatrix::from_columns(&vecs),
    }
}

fn check_ambient(a: &Subspace, b: &Subspace) -> Result<()> {
    if a.ambient_dim != b.ambient_dim {
        return input(format!(
            "ambient dimensions differ: {} vs {}",
            a.ambient_dim, b.ambient_dim
        ));
    }
    Ok(())
}

/// `S1 + S2`.
pub fn subspace_sum(a: &Subspace, b: &Subspace) -> Result<Subspace> {
    check_ambient(a, b)?;
    let q = a.ambient_dim;
    if a.dim() + b.dim() == 0 {
        return Ok(Subspace::zero(q));
    }
    let mut m = DMatrix::zeros(q, a.dim() + b.dim());
    m.columns_mut(0, a.dim()).copy_from(&a.basis);
    m.columns_mut(a.dim(), b.dim()).copy_from(&b.basis);
    // orthonormal inputs: scale 1 is the natural reference
    Ok(span_columns_scaled(&m, RANK_TOL))
}

/// `S1 ∩ S2 = (S1^⊥ + S2^⊥)^⊥`.
pub fn subspace_intersect(a: &Subspace, b: &Subspace) -> Result<Subspace> {
    check_ambient(a, b)?;
    Ok(complement(&subspace_sum(&complement(a), &complement(b))?))
}

/// Principal angles between two subspaces, ascending, `min(dim)` of them.
pub fn principal_angles(a: &Subspace, b: &Subspace) -> Result<Vec<f64>> {
    check_ambient(a, b)?;
    if a.dim() == 0 || b.dim() == 0 {
        return Ok(Vec::new());
    }
    let c = a.basis.transpose() * &b.basis;
    let mut angles: Vec<f64> = c
        .singular_values()
        .iter()
        .map(|s| s.clamp(-1.0, 1.0).acos())
        .collect();
    angles.sort_by(f64::total_cmp);
    angles.truncate(a.dim().min(b.dim()));
    Ok(angles)
}

/// Largest principal angle, `π/2` when the dimensions differ.
///
/// Computed as `asin ‖(I − P_a) B‖₂` so that tiny angles keep full precision.
pub fn largest_principal_angle(a: &Subspace, b: &Subspace) -> Result<f64> {
    check_ambient(a, b)?;
    if a.dim() != b.dim() {
        return Ok(std::f64::consts::FRAC_PI_2);
    }
    if a.dim() == 0 {
        return Ok(0.0);
    }
    let resid = &b.basis - &a.basis * (a.basis.transpose() * &b.basis);
    Ok(spectral_norm(&resid).clamp(0.0, 1.0).asin())
}

/// Image of `W` under `L`.
pub fn map_subspace(l: &DMatrix<f64>, w: &Subspace) -> Result<Subspace> {
    if l.ncols() != w.ambient_dim {
        return input(format!(
            "map has {} columns, subspace lives in ℝ^{}",
            l.ncols(),
            w.ambient_dim
        ));
    }
    if w.dim() == 0 {
        return Ok(Subspace::zero(l.nrows()));
    }
    // relative to ‖L‖ so that directions annihilated up to rounding are dropped
    Ok(span_columns_scaled(&(l * &w.basis), RANK_TOL * spectral_norm(l)))
}

/// Insertion map `U` with a natural projection `D` such that `D·U = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionPair {
    pub insertion: DMatrix<f64>,
    pub projection: DMatrix<f64>,
}

impl ProjectionPair {
    /// `max |D·U − I|`.
    pub fn identity_error(&self) -> f64 {
        let r = self.insertion.ncols();
        if r == 0 {
            return 0.0;
        }
        (&self.projection * &self.insertion - DMatrix::identity(r, r)).abs().max()
    }
}

/// Projection pairs for complementary `W ⊕ V = ℝ^q`.
///
/// Returns `(U_W, D_V)` and `(U_V, D_W)`, where `[D_V; D_W] = [U_W U_V]^{-1}`.
pub fn projection_pair(w: &Subspace, v: &Subspace) -> Result<(ProjectionPair, ProjectionPair)> {
    check_ambient(w, v)?;
    let q = w.ambient_dim;
    let (rw, rv) = (w.dim(), v.dim());
    if rw + rv != q {
        return Err(Error::Geometry {
            message: format!("dimensions {rw} + {rv} do not add up to {q}"),
            condition: f64::INFINITY,
        });
    }
    let mut m = DMatrix::zeros(q, q);
    m.columns_mut(0, rw).copy_from(&w.basis);
    m.columns_mut(rw, rv).copy_from(&v.basis);
    let condition = if q == 0 {
        1.0
    } else {
        let sv = m.singular_values();
        let (hi, lo) = (sv.max(), sv.min());
        if lo > 0.0 { hi / lo } else { f64::INFINITY }
    };
    if condition > MAX_CONDITION {
        return Err(Error::Geometry {
            message: "subspaces are not complementary".into(),
            condition,
        });
    }
    let inv = m.clone().try_inverse().ok_or_else(|| Error::Geometry {
        message: "insertion matrix is singular".into(),
        condition,
    })?;
    let d_v = inv.rows(0, rw).into_owned();
    let d_w = inv.rows(rw, rv).into_owned();
    Ok((
        ProjectionPair {
            insertion: w.basis.clone(),
            projection: d_v,
        },
        ProjectionPair {
            insertion: v.basis.clone(),
            projection: d_w,
        },
    ))
}

/// Oblique projector `P = U·D` onto `image(U)` along `kernel(D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObliqueProjector {
    pub matrix: DMatrix<f64>,
    pub onto: Subspace,
    pub along: Subspace,
}

impl ObliqueProjector {
    /// `I − P`, projecting onto the kernel along the image.
    pub fn complementary(&self) -> ObliqueProjector {
        let q = self.matrix.nrows();
        ObliqueProjector {
            matrix: DMatrix::identity(q, q) - &self.matrix,
            onto: self.along.clone(),
            along: self.onto.clone(),
        }
    }

    /// `max |P² − P|`.
    pub fn idempotence_error(&self) -> f64 {
        if self.matrix.is_empty() {
            return 0.0;
        }
        (&self.matrix * &self.matrix - &self.matrix).abs().max()
    }
}

pub fn oblique_projector(pair: &ProjectionPair) -> ObliqueProjector {
    let q = pair.insertion.nrows();
    let onto = span_columns(&pair.insertion, RANK_TOL);
    let row_space = span_columns(&pair.projection.transpose(), RANK_TOL);
    let along = if pair.projection.nrows() == 0 {
        Subspace::full(q)
    } else {
        complement(&row_space)
    };
    ObliqueProjector {
        matrix: &pair.insertion * &pair.projection,
        onto,
        along,
    }
}

/// `w = U_W·w_pe + U_V·w_perp` for a chosen pair of complementary subspaces.
#[derive(Debug, Clone)]
pub struct PEDecomposition {
    pub pe_subspace: Subspace,
    pub complement_subspace: Subspace,
    pub u_w: DMatrix<f64>,
    pub u_v: DMatrix<f64>,
    /// `D_V·w`, dimension `dim W`.
    pub w_pe: SampledSignal,
    /// `D_W·w`, dimension `q − dim W`.
    pub w_perp: SampledSignal,
}

impl PEDecomposition {
    pub fn reconstruct(&self) -> Result<SampledSignal> {
        let values = &self.u_w * self.w_pe.values() + &self.u_v * self.w_perp.values();
        SampledSignal::new(*self.w_pe.grid(), values, self.w_pe.continuity())
    }

    /// `max_j ‖ŵ_j − w_j‖ / max_j ‖w_j‖` (absolute when `w ≡ 0`).
    pub fn reconstruction_residual(&self, w: &SampledSignal) -> Result<f64> {
        let rec = self.reconstruct()?;
        if rec.dim() != w.dim() || rec.len() != w.len() {
            return input("signal does not match the decomposition");
        }
        let diff = rec.values() - w.values();
        let err = diff.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
        let scale = w.values().column_iter().map(|c| c.norm()).fold(0.0, f64::max);
        Ok(if scale > 0.0 { err / scale } else { err })
    }
}

/// Splits `w` along `W ⊕ V` via the projection pairs of the two subspaces.
pub fn pe_decompose(w: &SampledSignal, pe: &Subspace, comp: &Subspace) -> Result<PEDecomposition> {
    if pe.ambient_dim != w.dim() {
        return input(format!(
            "subspace lives in ℝ^{} but signal has dimension {}",
            pe.ambient_dim,
            w.dim()
        ));
    }
    let (pair_w, pair_v) = projection_pair(pe, comp)?;
    let w_pe = SampledSignal::new(*w.grid(), &pair_w.projection * w.values(), w.continuity())?;
    let w_perp = SampledSignal::new(*w.grid(), &pair_v.projection * w.values(), w.continuity())?;
    Ok(PEDecomposition {
        pe_subspace: pe.clone(),
        complement_subspace: comp.clone(),
        u_w: pair_w.insertion,
        u_v: pair_v.insertion,
        w_pe,
        w_perp,
    })
}
