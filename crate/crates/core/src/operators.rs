//! Discrete differential operators on the quotient lattice.
//!
//! The sub-Laplacian is the 4-point Cayley stencil scaled by `N^2`; the
//! horizontal gradient collects forward differences along the `X` and `Y`
//! generator edges. Both are built from the same edge set, so summation by
//! parts is an exact identity rather than an approximation: the quadratic
//! form computed over edges equals `<Lu, u>` to roundoff, `<Δu, 1> = 0`, and
//! `<Δu, v> = <u, Δv>`.

use std::sync::Arc;

use crate::field::{EdgeField, Field, PositiveField};
use crate::lattice::Lattice;
use crate::linalg::LinearOperator;
use crate::scalar::Scalar;

/// Dimensional constants of the conformal transformation law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants<T> {
    cr_dimension: u32,
    /// Exponent `a = 1 + 2/n` of the prescribed-curvature nonlinearity.
    exponent: T,
    /// Coefficient `b_n = 2 + 2/n` of the sub-Laplacian.
    laplacian_factor: T,
}

impl<T: Scalar> Constants<T> {
    pub fn for_cr_dimension(n: u32) -> Self {
        assert!(n >= 1, "CR dimension must be positive");
        let two_over_n = T::of_f64(2.0) / T::of_usize(n as usize);
        Self {
            cr_dimension: n,
            exponent: T::one() + two_over_n,
            laplacian_factor: T::of_f64(2.0) + two_over_n,
        }
    }

    #[inline]
    pub fn cr_dimension(&self) -> u32 {
        self.cr_dimension
    }

    /// `a = 1 + 2/n` (equals 3 for the three-dimensional model).
    #[inline]
    pub fn exponent(&self) -> T {
        self.exponent
    }

    /// `b_n = 2 + 2/n` (equals 4 for the three-dimensional model).
    #[inline]
    pub fn laplacian_factor(&self) -> T {
        self.laplacian_factor
    }
}

/// Background geometry: the lattice together with the curvature field and
/// the dimensional constants. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Structure<T> {
    lattice: Arc<Lattice>,
    rho: Field<T>,
    constants: Constants<T>,
}

impl<T: Scalar> Structure<T> {
    /// Builds the structure for the three-dimensional model (`n = 1`).
    ///
    /// # Panics
    /// Panics if `rho` is not finite everywhere or lives on another lattice.
    pub fn new(lattice: &Arc<Lattice>, rho: Field<T>) -> Self {
        assert!(rho.all_finite(), "curvature field must be finite");
        assert!(
            rho.lattice().spec() == lattice.spec(),
            "curvature field lives on a different lattice"
        );
        Self {
            lattice: Arc::clone(lattice),
            rho,
            constants: Constants::for_cr_dimension(1),
        }
    }

    #[inline]
    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    #[inline]
    pub fn rho(&self) -> &Field<T> {
        &self.rho
    }

    #[inline]
    pub fn constants(&self) -> Constants<T> {
        self.constants
    }

    /// The conformal sub-Laplacian `u -> -b_n Δu + ρ u`, the linear operator
    /// whose first eigenvalue governs the solvable curvature regimes.
    pub fn conformal_laplacian(&self, u: &Field<T>) -> Field<T> {
        let mut out = sub_laplacian(u);
        let b = self.constants.laplacian_factor;
        for ((o, &r), &v) in out
            .values_mut()
            .iter_mut()
            .zip(self.rho.values())
            .zip(u.values())
        {
            *o = -b * *o + r * v;
        }
        out
    }

    /// The curvature map `u -> u^{-a} (-b_n Δu + ρ u)`: the Webster scalar
    /// curvature of the structure deformed by the positive factor `u`.
    pub fn curvature_map(&self, u: &PositiveField<T>) -> Field<T> {
        let a = self.constants.exponent;
        let lu = self.conformal_laplacian(u.field());
        lu.zip_map(u.field(), |l, v| v.powf(-a) * l)
    }

    /// Multiplier of the zeroth-order term in the stability operator:
    /// `a Δu0/u0 + (1-a)/b_n ρ`.
    pub fn stability_potential(&self, u0: &PositiveField<T>) -> Field<T> {
        let a = self.constants.exponent;
        let b = self.constants.laplacian_factor;
        let lap = sub_laplacian(u0.field());
        let ratio = lap.zip_map(u0.field(), |d, v| d / v);
        let factor = (T::one() - a) / b;
        ratio.zip_map(&self.rho, move |r, rho| a * r + factor * rho)
    }

    /// The self-adjoint core of the curvature-map linearization:
    /// `v -> -Δv + (a Δu0/u0 + (1-a)/b_n ρ) v`.
    pub fn stability_operator(&self, u0: &PositiveField<T>, v: &Field<T>) -> Field<T> {
        let potential = self.stability_potential(u0);
        let mut out = sub_laplacian(v);
        for ((o, &q), &w) in out
            .values_mut()
            .iter_mut()
            .zip(potential.values())
            .zip(v.values())
        {
            *o = -*o + q * w;
        }
        out
    }

    /// Derivative of the curvature map at `u0` applied to `v`; equals
    /// `b_n u0^{-a}` times the stability operator by construction.
    pub fn curvature_jacobian(&self, u0: &PositiveField<T>, v: &Field<T>) -> Field<T> {
        let a = self.constants.exponent;
        let b = self.constants.laplacian_factor;
        let av = self.stability_operator(u0, v);
        av.zip_map(u0.field(), |w, u| b * u.powf(-a) * w)
    }

    /// Energy of the conformal sub-Laplacian, summed over edges so that
    /// `quadratic_form(u) = <Lu, u>` is exact:
    /// `b_n Σ_e (du_e)^2 / N^4 + Σ_p ρ u^2 / N^4`.
    pub fn quadratic_form(&self, u: &Field<T>) -> T {
        crate::field::assert_same_lattice(u, &self.rho);
        let lat = &self.lattice;
        let vals = u.values();
        let n2 = {
            let n = T::of_usize(lat.resolution() as usize);
            n * n
        };
        let mut edge_sum = T::zero();
        for id in 0..lat.node_count() {
            let nbrs = lat.neighbor_ids(id);
            let up = vals[id];
            let dx = vals[nbrs[0] as usize] - up;
            let dy = vals[nbrs[2] as usize] - up;
            edge_sum += dx * dx + dy * dy;
        }
        let mut potential_sum = T::zero();
        for (&r, &v) in self.rho.values().iter().zip(vals) {
            potential_sum += r * v * v;
        }
        let volume = lat.node_volume::<T>();
        self.constants.laplacian_factor * n2 * edge_sum * volume + potential_sum * volume
    }
}

/// Common surface of the base structure and its conformal deformations:
/// a volume measure, a curvature field and the associated self-adjoint
/// operator with its exact edge-based quadratic form. The spectral module
/// is generic over this trait.
pub trait CurvatureStructure<T: Scalar> {
    fn lattice(&self) -> &Arc<Lattice>;
    fn constants(&self) -> Constants<T>;
    /// Curvature field of this structure (background or deformed).
    fn curvature(&self) -> &Field<T>;
    /// Node volume weights of the discrete volume form.
    fn measure(&self) -> Field<T>;
    /// The conformal sub-Laplacian of this structure, self-adjoint with
    /// respect to the measure-weighted inner product.
    fn apply_operator(&self, u: &Field<T>) -> Field<T>;
    /// Energy `<Lu, u>` computed over edges (exact summation by parts).
    fn energy(&self, u: &Field<T>) -> T;

    /// Measure-weighted inner product.
    fn inner_m(&self, u: &Field<T>, v: &Field<T>) -> T {
        let m = self.measure();
        u.values()
            .iter()
            .zip(v.values())
            .zip(m.values())
            .map(|((&a, &b), &w)| a * b * w)
            .sum()
    }

    /// Measure-weighted integral.
    fn integrate_m(&self, u: &Field<T>) -> T {
        let m = self.measure();
        u.values()
            .iter()
            .zip(m.values())
            .map(|(&a, &w)| a * w)
            .sum()
    }
}

impl<T: Scalar> CurvatureStructure<T> for Structure<T> {
    fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    fn constants(&self) -> Constants<T> {
        self.constants
    }

    fn curvature(&self) -> &Field<T> {
        &self.rho
    }

    fn measure(&self) -> Field<T> {
        Field::constant(&self.lattice, self.lattice.node_volume())
    }

    fn apply_operator(&self, u: &Field<T>) -> Field<T> {
        self.conformal_laplacian(u)
    }

    fn energy(&self, u: &Field<T>) -> T {
        self.quadratic_form(u)
    }
}

/// Forward differences along the `X` and `Y` generator edges, scaled by
/// `1/h = N`.
pub fn horizontal_gradient<T: Scalar>(u: &Field<T>) -> EdgeField<T> {
    let lat = u.lattice();
    let count = lat.node_count();
    let inv_h = T::of_usize(lat.resolution() as usize);
    let vals = u.values();
    let mut edges = vec![T::zero(); 2 * count];
    for id in 0..count {
        let nbrs = lat.neighbor_ids(id);
        edges[id] = (vals[nbrs[0] as usize] - vals[id]) * inv_h;
        edges[count + id] = (vals[nbrs[2] as usize] - vals[id]) * inv_h;
    }
    EdgeField::new(lat, edges)
}

/// Discrete sub-Laplacian: `Δu(p) = N^2 Σ_{q ~ p} (u(q) - u(p))` over the
/// 4-point Cayley stencil.
pub fn sub_laplacian<T: Scalar>(u: &Field<T>) -> Field<T> {
    let lat = Arc::clone(u.lattice());
    let n2 = {
        let n = T::of_usize(lat.resolution() as usize);
        n * n
    };
    let vals = u.values();
    let four = T::of_f64(4.0);
    let out = (0..lat.node_count())
        .map(|id| {
            let nbrs = lat.neighbor_ids(id);
            let sum = vals[nbrs[0] as usize]
                + vals[nbrs[1] as usize]
                + vals[nbrs[2] as usize]
                + vals[nbrs[3] as usize];
            n2 * (sum - four * vals[id])
        })
        .collect();
    Field::from_values(&lat, out)
}

/// Matrix-free operator `v -> -c Δv + q ⊙ v` with constant diffusion `c` and
/// a node potential `q`; covers the conformal sub-Laplacian, the stability
/// operator and the shifted Helmholtz solves of the monotone iteration.
#[derive(Debug, Clone)]
pub struct SchrodingerOperator<T> {
    diffusion: T,
    potential: Field<T>,
}

impl<T: Scalar> SchrodingerOperator<T> {
    pub fn new(diffusion: T, potential: Field<T>) -> Self {
        Self {
            diffusion,
            potential,
        }
    }

    /// `-b_n Δ + ρ` for the given structure.
    pub fn conformal_laplacian(s: &Structure<T>) -> Self {
        Self::new(s.constants.laplacian_factor, s.rho.clone())
    }

    /// The stability operator at the positive base point `u0`.
    pub fn stability(s: &Structure<T>, u0: &PositiveField<T>) -> Self {
        Self::new(T::one(), s.stability_potential(u0))
    }

    /// `-Δ + λ` with a constant shift.
    pub fn helmholtz(lattice: &Arc<Lattice>, lambda: T) -> Self {
        Self::new(T::one(), Field::constant(lattice, lambda))
    }

    pub fn potential(&self) -> &Field<T> {
        &self.potential
    }
}

impl<T: Scalar> LinearOperator<T> for SchrodingerOperator<T> {
    fn lattice(&self) -> &Arc<Lattice> {
        self.potential.lattice()
    }

    fn apply(&self, u: &Field<T>) -> Field<T> {
        let mut out = sub_laplacian(u);
        let c = self.diffusion;
        for ((o, &q), &v) in out
            .values_mut()
            .iter_mut()
            .zip(self.potential.values())
            .zip(u.values())
        {
            *o = -c * *o + q * v;
        }
        out
    }
}
