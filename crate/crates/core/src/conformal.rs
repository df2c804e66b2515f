//! Conformal deformations, lattice diffeomorphisms, necessary-condition
//! checks and certification of curvature-equivalence candidates.
//!
//! A positive factor `w` deforms the structure: the new curvature is the
//! curvature map `T(w)`, node volumes scale by `w^{a+1}`, and edge
//! conductances carry the geometric mean of `w^2` at the endpoints. With
//! that choice the deformed energy satisfies the exact discrete covariance
//! `Q̂(v) = Q(w ⊙ v)`, so the sign of the first eigenvalue is invariant
//! under deformation as a matter of discrete algebra, not approximation.
//!
//! The diffeomorphism family consists of right translations by group
//! elements; they are exact node permutations of the quotient. All of them
//! preserve integrals and inner products; the subfamily that also commutes
//! with the stencil (and hence with the sub-Laplacian) is the central one,
//! see [`Diffeo::commutes_with_stencil`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Field, PositiveField};
use crate::lattice::{heisenberg_inv, Lattice};
use crate::linalg::SolveOptions;
use crate::operators::{Constants, CurvatureStructure, Structure};
use crate::scalar::Scalar;
use crate::spectral::{self, CurvatureClass, SpectralError, SpectralResult};

#[derive(Debug, Error, Clone)]
pub enum ConformalError<T: Scalar> {
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("certification failed with residual {residual}")]
    CertificationFailed { residual: T },
    #[error("constructed data failed verification: {what} (worst {worst})")]
    VerificationFailed { what: String, worst: T },
    #[error(transparent)]
    Spectral(#[from] SpectralError<T>),
}

// ---------------------------------------------------------------------------
// Structure-compatible diffeomorphisms
// ---------------------------------------------------------------------------

/// Exact node permutation of the quotient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diffeo {
    /// Right multiplication by the group element `g` (integer coordinates).
    RightTranslation { g: [i64; 3] },
}

impl Diffeo {
    pub fn right_translation(g: [i64; 3]) -> Self {
        Diffeo::RightTranslation { g }
    }

    pub fn identity() -> Self {
        Diffeo::RightTranslation { g: [0, 0, 0] }
    }

    pub fn inverse(&self) -> Self {
        match self {
            Diffeo::RightTranslation { g } => Diffeo::RightTranslation {
                g: heisenberg_inv(*g),
            },
        }
    }

    /// Node permutation `id -> index(Φ(node))`.
    pub fn permutation(&self, lattice: &Arc<Lattice>) -> Vec<u32> {
        match self {
            Diffeo::RightTranslation { g } => (0..lattice.node_count())
                .map(|id| lattice.index_of(lattice.translate(lattice.point_of(id), *g)) as u32)
                .collect(),
        }
    }

    /// Whether the permutation commutes with the Cayley stencil (and hence
    /// with the sub-Laplacian). Conjugating a horizontal generator by `g`
    /// picks up the central correction `z^{±g_x}, z^{∓g_y}`, so exact
    /// commutation requires both horizontal components to vanish modulo
    /// `N^2`.
    pub fn commutes_with_stencil(&self, lattice: &Arc<Lattice>) -> bool {
        match self {
            Diffeo::RightTranslation { g } => {
                let n2 = (lattice.resolution() as i64).pow(2);
                g[0].rem_euclid(n2) == 0 && g[1].rem_euclid(n2) == 0
            }
        }
    }
}

/// Composition with the node permutation: `(u ∘ Φ)(p) = u(Φ(p))`.
pub fn pullback<T: Scalar>(u: &Field<T>, phi: &Diffeo) -> Field<T> {
    let perm = phi.permutation(u.lattice());
    let values = perm.iter().map(|&id| u.values()[id as usize]).collect();
    Field::from_values(u.lattice(), values)
}

// ---------------------------------------------------------------------------
// Deformed structures
// ---------------------------------------------------------------------------

/// Curvature of the structure deformed by the positive factor `w`; this is
/// the curvature map evaluated at `w`.
pub fn curvature_of_conformal<T: Scalar>(s: &Structure<T>, w: &PositiveField<T>) -> Field<T> {
    s.curvature_map(w)
}

/// The conformally deformed structure: deformed curvature, volumes and edge
/// conductances, with the deformed sub-Laplacian defined through the
/// weighted quadratic form (hence exactly self-adjoint in the deformed
/// inner product).
#[derive(Debug, Clone)]
pub struct DeformedStructure<T> {
    base: Structure<T>,
    factor: PositiveField<T>,
    rho_hat: Field<T>,
    /// Node volumes `w^{a+1} / N^4`.
    volumes: Field<T>,
    /// Conductance `w(p) w(q)` per forward edge, `X` block then `Y` block.
    conductances: Vec<T>,
}

impl<T: Scalar> DeformedStructure<T> {
    pub fn new(s: &Structure<T>, w: &PositiveField<T>) -> Self {
        let lattice = s.lattice();
        let a = s.constants().exponent();
        let rho_hat = s.curvature_map(w);
        let volumes = w
            .field()
            .map(|v| v.powf(a + T::one()))
            .scaled(lattice.node_volume());
        let count = lattice.node_count();
        let wv = w.values();
        let mut conductances = vec![T::zero(); 2 * count];
        for id in 0..count {
            let nbrs = lattice.neighbor_ids(id);
            conductances[id] = wv[id] * wv[nbrs[0] as usize];
            conductances[count + id] = wv[id] * wv[nbrs[2] as usize];
        }
        Self {
            base: s.clone(),
            factor: w.clone(),
            rho_hat,
            volumes,
            conductances,
        }
    }

    pub fn base(&self) -> &Structure<T> {
        &self.base
    }

    pub fn factor(&self) -> &PositiveField<T> {
        &self.factor
    }

    pub fn deformed_curvature(&self) -> &Field<T> {
        &self.rho_hat
    }

    /// Total deformed volume `∫ w^{a+1}`.
    pub fn total_volume(&self) -> T {
        self.volumes.values().iter().copied().sum()
    }

    /// First eigenvalue of the deformed structure.
    pub fn lambda1(&self, opts: &SolveOptions<T>) -> Result<SpectralResult<T>, SpectralError<T>> {
        spectral::lambda1(self, opts)
    }
}

impl<T: Scalar> CurvatureStructure<T> for DeformedStructure<T> {
    fn lattice(&self) -> &Arc<Lattice> {
        self.base.lattice()
    }

    fn constants(&self) -> Constants<T> {
        self.base.constants()
    }

    fn curvature(&self) -> &Field<T> {
        &self.rho_hat
    }

    fn measure(&self) -> Field<T> {
        self.volumes.clone()
    }

    fn apply_operator(&self, u: &Field<T>) -> Field<T> {
        let lattice = self.base.lattice();
        let count = lattice.node_count();
        let n2 = {
            let n = T::of_usize(lattice.resolution() as usize);
            n * n
        };
        let b = self.base.constants().laplacian_factor();
        let a = self.base.constants().exponent();
        let wv = self.factor.values();
        let vals = u.values();
        let out = (0..count)
            .map(|id| {
                let nbrs = lattice.neighbor_ids(id);
                let mut flux = T::zero();
                for &nb in &nbrs {
                    let nb = nb as usize;
                    flux += wv[id] * wv[nb] * (vals[id] - vals[nb]);
                }
                // -Δ̂u scaled by the inverse node volume w^{a+1}.
                let neg_lap = n2 * flux / wv[id].powf(a + T::one());
                b * neg_lap + self.rho_hat.values()[id] * vals[id]
            })
            .collect();
        Field::from_values(lattice, out)
    }

    fn energy(&self, u: &Field<T>) -> T {
        let lattice = self.base.lattice();
        let count = lattice.node_count();
        let n2 = {
            let n = T::of_usize(lattice.resolution() as usize);
            n * n
        };
        let b = self.base.constants().laplacian_factor();
        let vals = u.values();
        let mut edge_sum = T::zero();
        for id in 0..count {
            let nbrs = lattice.neighbor_ids(id);
            let dx = vals[nbrs[0] as usize] - vals[id];
            let dy = vals[nbrs[2] as usize] - vals[id];
            edge_sum += self.conductances[id] * dx * dx + self.conductances[count + id] * dy * dy;
        }
        let mut potential = T::zero();
        for ((&r, &v), &m) in self
            .rho_hat
            .values()
            .iter()
            .zip(vals)
            .zip(self.volumes.values())
        {
            potential += r * v * v * m;
        }
        b * n2 * edge_sum * lattice.node_volume() + potential
    }
}

// ---------------------------------------------------------------------------
// Necessary conditions in the vanishing-curvature class
// ---------------------------------------------------------------------------

/// The exact discrete obstructions a solution pair must satisfy when the
/// background curvature vanishes.
#[derive(Debug, Clone)]
pub struct NecessaryReport<T> {
    /// `<ρ̂ u^a, 1>`; vanishes by the divergence theorem.
    pub pairing_with_unit: T,
    pub rho_hat_min: T,
    pub rho_hat_max: T,
    pub changes_sign: bool,
    /// `∫ ρ̂`; strictly negative for nonzero ρ̂.
    pub rho_hat_integral: T,
    /// `||L u - ρ̂ u^a||_inf` of the supplied pair.
    pub solution_residual: T,
}

/// Checks the necessary conditions for prescribing `ρ̂` on a background with
/// `ρ ≡ 0`, given a claimed solution `u`.
pub fn necessary_conditions<T: Scalar>(
    s: &Structure<T>,
    rho_hat: &Field<T>,
    u: &PositiveField<T>,
    solution_tol: T,
) -> Result<NecessaryReport<T>, ConformalError<T>> {
    if s.rho().norm_inf() > T::of_f64(1e-14) {
        return Err(ConformalError::PreconditionViolated(
            "background curvature must vanish identically".to_owned(),
        ));
    }
    let a = s.constants().exponent();
    let nonlinear = rho_hat.zip_map(u.field(), |rh, v| rh * v.powf(a));
    let residual = s.conformal_laplacian(u.field()).sub(&nonlinear).norm_inf();
    if residual > solution_tol {
        return Err(ConformalError::PreconditionViolated(format!(
            "supplied pair does not solve the equation (residual {residual})"
        )));
    }
    let ones = Field::ones(s.lattice());
    Ok(NecessaryReport {
        pairing_with_unit: nonlinear.inner(&ones),
        rho_hat_min: rho_hat.min_value(),
        rho_hat_max: rho_hat.max_value(),
        changes_sign: rho_hat.min_value() < T::zero() && rho_hat.max_value() > T::zero(),
        rho_hat_integral: rho_hat.integrate(),
        solution_residual: residual,
    })
}

/// In the positive class, the eigenpair itself realizes a positive
/// curvature: returns `ρ̂ = λ1 ψ^{1-a}` together with the eigen-data and
/// verifies `L ψ = ρ̂ ψ^a` within ten times the eigen-residual.
pub fn positive_example<T: Scalar>(
    s: &Structure<T>,
    opts: &SolveOptions<T>,
) -> Result<(PositiveField<T>, SpectralResult<T>), ConformalError<T>> {
    let spectral = spectral::lambda1(s, opts)?;
    let zero_tol = spectral::default_zero_tol(s);
    if spectral.lambda1 <= zero_tol {
        return Err(ConformalError::PreconditionViolated(format!(
            "positive-class construction needs lambda1 > 0, got {}",
            spectral.lambda1
        )));
    }
    let a = s.constants().exponent();
    let rho_hat = spectral
        .psi
        .powf(T::one() - a)
        .scaled_positive(spectral.lambda1)
        .map_err(|_| ConformalError::VerificationFailed {
            what: "positivity of λ1 ψ^{1-a}".to_owned(),
            worst: T::zero(),
        })?;
    let nonlinear = rho_hat
        .field()
        .zip_map(spectral.psi.field(), |rh, p| rh * p.powf(a));
    let worst = s
        .conformal_laplacian(spectral.psi.field())
        .sub(&nonlinear)
        .norm_inf();
    let allowance = T::of_f64(10.0) * spectral.residual + T::of_f64(1e-13);
    if worst > allowance {
        return Err(ConformalError::VerificationFailed {
            what: "identity L ψ = ρ̂ ψ^a".to_owned(),
            worst,
        });
    }
    Ok((rho_hat, spectral))
}

// ---------------------------------------------------------------------------
// Curvature-equivalence certificates and classification
// ---------------------------------------------------------------------------

/// Constructive witness that `ρ̂` is realized through the diffeomorphism
/// `Φ` and conformal factor `u`: the residual of
/// `L u = (ρ̂ ∘ Φ) u^a` is below the certification tolerance.
///
/// Serializes to
/// `{"phi": {"kind": "right_translation", "g": [i, j, k]}, "u": [...],
///   "rho_hat": [...], "residual": r}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CeCertificate<T> {
    pub phi: Diffeo,
    pub u: Vec<T>,
    pub rho_hat: Vec<T>,
    pub residual: T,
}

/// Checks a candidate `(Φ, u)` for the target curvature `ρ̂` and issues a
/// certificate when the equation residual meets the tolerance.
pub fn certify_ce<T: Scalar>(
    s: &Structure<T>,
    rho_hat: &Field<T>,
    phi: &Diffeo,
    u: &PositiveField<T>,
    tol: T,
) -> Result<CeCertificate<T>, ConformalError<T>> {
    let a = s.constants().exponent();
    let pulled = pullback(rho_hat, phi);
    let rhs = pulled.zip_map(u.field(), |rh, v| rh * v.powf(a));
    let residual = s.conformal_laplacian(u.field()).sub(&rhs).norm_inf();
    if residual > tol {
        return Err(ConformalError::CertificationFailed { residual });
    }
    Ok(CeCertificate {
        phi: *phi,
        u: u.values().to_vec(),
        rho_hat: rho_hat.values().to_vec(),
        residual,
    })
}

/// Verdict of the sign-test classifier. Membership is predicted from the
/// trichotomy class alone; a constructive certificate is a separate,
/// stronger statement issued by [`certify_ce`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CeMembership {
    PredictedMember,
    NonMember,
    Unknown,
}

#[derive(Debug, Clone)]
pub struct CeClassification<T> {
    pub membership: CeMembership,
    pub class: CurvatureClass,
    pub lambda1: T,
}

/// Sign-test classification of a target curvature against the structure's
/// trichotomy class:
///
/// - negative class: member iff `ρ̂ < 0` somewhere;
/// - zero class: member iff `ρ̂` changes sign or vanishes identically;
///   one-signed targets touching zero are reported as [`CeMembership::Unknown`];
/// - positive class: member iff `ρ̂ > 0` somewhere.
pub fn classify_ce<T: Scalar>(
    s: &Structure<T>,
    rho_hat: &Field<T>,
    zero_tol: T,
    opts: &SolveOptions<T>,
) -> Result<CeClassification<T>, ConformalError<T>> {
    let spectral = spectral::lambda1(s, opts)?;
    let class = CurvatureClass::of(spectral.lambda1, zero_tol);
    let min = rho_hat.min_value();
    let max = rho_hat.max_value();
    let membership = match class {
        CurvatureClass::Negative => {
            if min < T::zero() {
                CeMembership::PredictedMember
            } else {
                CeMembership::NonMember
            }
        }
        CurvatureClass::Positive => {
            if max > T::zero() {
                CeMembership::PredictedMember
            } else {
                CeMembership::NonMember
            }
        }
        CurvatureClass::Zero => {
            let identically_zero = min == T::zero() && max == T::zero();
            if identically_zero || (min < T::zero() && max > T::zero()) {
                CeMembership::PredictedMember
            } else if min > T::zero() || max < T::zero() {
                CeMembership::NonMember
            } else {
                // One-signed but touching zero: open in the zero class.
                CeMembership::Unknown
            }
        }
    };
    Ok(CeClassification {
        membership,
        class,
        lambda1: spectral.lambda1,
    })
}
