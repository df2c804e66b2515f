//! Matrix-free symmetric linear solvers and eigen-oracles.
//!
//! Everything here works through the [`LinearOperator`] trait: conjugate
//! gradients for positive definite systems, MINRES for symmetric indefinite
//! or singular-consistent systems, a Fredholm-aware wrapper for operators
//! with a known kernel, shifted inverse power iteration for the smallest
//! eigenpair, and a dense cyclic-Jacobi eigensolver that serves as an
//! independent oracle at small lattice sizes.
//!
//! Residual contracts are stated in the plain Euclidean norm of the
//! coefficient vectors; inner products used for orthogonality and Rayleigh
//! quotients are the volume-weighted ones from [`Field`].

use std::sync::Arc;

use thiserror::Error;

use crate::field::Field;
use crate::lattice::Lattice;
use crate::scalar::Scalar;

/// Abstract symmetric operator on lattice fields.
pub trait LinearOperator<T: Scalar> {
    fn lattice(&self) -> &Arc<Lattice>;
    fn apply(&self, u: &Field<T>) -> Field<T>;
}

impl<T: Scalar, Op: LinearOperator<T> + ?Sized> LinearOperator<T> for &Op {
    fn lattice(&self) -> &Arc<Lattice> {
        (**self).lattice()
    }

    fn apply(&self, u: &Field<T>) -> Field<T> {
        (**self).apply(u)
    }
}

/// Operator defined by a closure; handy for tests and adapters.
pub struct FnOperator<T, F> {
    lattice: Arc<Lattice>,
    f: F,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar, F: Fn(&Field<T>) -> Field<T>> FnOperator<T, F> {
    pub fn new(lattice: &Arc<Lattice>, f: F) -> Self {
        Self {
            lattice: Arc::clone(lattice),
            f,
            _marker: std::marker::PhantomData,
        }
    }
}

impl<T: Scalar, F: Fn(&Field<T>) -> Field<T>> LinearOperator<T> for FnOperator<T, F> {
    fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    fn apply(&self, u: &Field<T>) -> Field<T> {
        (self.f)(u)
    }
}

/// `op - shift * I`.
pub struct ShiftedOperator<'a, T, Op> {
    op: &'a Op,
    shift: T,
}

impl<'a, T: Scalar, Op: LinearOperator<T>> ShiftedOperator<'a, T, Op> {
    pub fn new(op: &'a Op, shift: T) -> Self {
        Self { op, shift }
    }
}

impl<'a, T: Scalar, Op: LinearOperator<T>> LinearOperator<T> for ShiftedOperator<'a, T, Op> {
    fn lattice(&self) -> &Arc<Lattice> {
        self.op.lattice()
    }

    fn apply(&self, u: &Field<T>) -> Field<T> {
        let mut out = self.op.apply(u);
        out.axpy(-self.shift, u);
        out
    }
}

/// Tolerances and iteration budget shared by the iterative solvers.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions<T> {
    /// Relative residual target, `||op u - rhs|| <= rel_tol * ||rhs||`.
    pub rel_tol: T,
    /// Iteration cap; `None` means ten times the node count.
    pub max_iter: Option<usize>,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::of_f64(1e-10),
            max_iter: None,
        }
    }
}

impl<T: Scalar> SolveOptions<T> {
    pub fn with_rel_tol(rel_tol: T) -> Self {
        Self {
            rel_tol,
            max_iter: None,
        }
    }

    pub fn budget(&self, dim: usize) -> usize {
        self.max_iter.unwrap_or(10 * dim)
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum SolveError<T: Scalar> {
    #[error("no convergence after {iterations} iterations (residual {residual})")]
    NoConvergence { iterations: usize, residual: T },
    #[error("right-hand side is not orthogonal to the kernel (overlap {overlap})")]
    NotOrthogonal { overlap: T },
    #[error("dense oracle capped at dimension {max}, got {dim}")]
    DimensionTooLarge { dim: usize, max: usize },
}

/// Conjugate gradients for symmetric positive definite operators.
///
/// Returns `u` with `||op(u) - rhs||_2 <= rel_tol * ||rhs||_2`; the true
/// residual is always re-verified before returning.
pub fn cg_solve<T: Scalar>(
    op: &impl LinearOperator<T>,
    rhs: &Field<T>,
    opts: &SolveOptions<T>,
) -> Result<Field<T>, SolveError<T>> {
    let rhs_norm = rhs.norm_l2();
    let mut x = Field::zeros(op.lattice());
    if rhs_norm == T::zero() {
        return Ok(x);
    }
    let threshold = opts.rel_tol * rhs_norm;
    let max_iter = opts.budget(rhs.len());

    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);

    for iteration in 0..max_iter {
        if rr.sqrt() <= threshold {
            let true_res = residual(op, &x, rhs);
            let true_norm = true_res.norm_l2();
            if true_norm <= threshold {
                return Ok(x);
            }
            // Recursive residual drifted; restart from the true residual.
            r = true_res;
            p = r.clone();
            rr = dot(&r, &r);
            if rr.sqrt() <= threshold {
                return Ok(x);
            }
        }
        let ap = op.apply(&p);
        let p_ap = dot(&p, &ap);
        let curvature_positive = p_ap > T::zero();
        if !curvature_positive {
            // Lost positive definiteness (or hit roundoff floor).
            let res = residual(op, &x, rhs).norm_l2();
            if res <= threshold {
                return Ok(x);
            }
            return Err(SolveError::NoConvergence {
                iterations: iteration,
                residual: res,
            });
        }
        let alpha = rr / p_ap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        let mut p_next = r.clone();
        p_next.axpy(beta, &p);
        p = p_next;
        rr = rr_new;
    }

    let res = residual(op, &x, rhs).norm_l2();
    if res <= threshold {
        return Ok(x);
    }
    Err(SolveError::NoConvergence {
        iterations: max_iter,
        residual: res,
    })
}

/// MINRES for symmetric (possibly indefinite or singular-consistent)
/// systems; same residual contract as [`cg_solve`].
pub fn minres_solve<T: Scalar>(
    op: &impl LinearOperator<T>,
    rhs: &Field<T>,
    opts: &SolveOptions<T>,
) -> Result<Field<T>, SolveError<T>> {
    let rhs_norm = rhs.norm_l2();
    let mut x = Field::zeros(op.lattice());
    if rhs_norm == T::zero() {
        return Ok(x);
    }
    let threshold = opts.rel_tol * rhs_norm;
    let max_iter = opts.budget(rhs.len());

    let beta1 = rhs_norm;
    let mut v_prev = Field::zeros(op.lattice());
    let mut v = rhs.scaled(T::one() / beta1);
    let mut w_old = Field::zeros(op.lattice());
    let mut w = Field::zeros(op.lattice());
    let (mut c_old, mut c, mut s_old, mut s) = (T::one(), T::one(), T::zero(), T::zero());
    let mut eta = beta1;
    let mut beta = T::zero();

    for _iteration in 0..max_iter {
        // Lanczos step.
        let av = op.apply(&v);
        let alpha = dot(&v, &av);
        let mut p = av;
        p.axpy(-alpha, &v);
        p.axpy(-beta, &v_prev);
        let beta_new = p.norm_l2();

        // Apply the two previous Givens rotations to the new column, then
        // compute the new one.
        let rho0 = c * alpha - c_old * s * beta;
        let rho1 = (rho0 * rho0 + beta_new * beta_new).sqrt();
        let rho2 = s * alpha + c_old * c * beta;
        let rho3 = s_old * beta;
        if rho1 == T::zero() {
            break;
        }
        let c_new = rho0 / rho1;
        let s_new = beta_new / rho1;

        let mut w_new = v.clone();
        w_new.axpy(-rho3, &w_old);
        w_new.axpy(-rho2, &w);
        let w_new = w_new.scaled(T::one() / rho1);
        x.axpy(c_new * eta, &w_new);
        eta = -s_new * eta;

        w_old = w;
        w = w_new;
        c_old = c;
        c = c_new;
        s_old = s;
        s = s_new;

        if beta_new == T::zero() {
            // Krylov space exhausted; x is the least-squares solution there.
            break;
        }
        v_prev = v;
        v = p.scaled(T::one() / beta_new);
        beta = beta_new;

        if eta.abs() <= threshold {
            let true_norm = residual(op, &x, rhs).norm_l2();
            if true_norm <= threshold {
                return Ok(x);
            }
        }
    }

    let res = residual(op, &x, rhs).norm_l2();
    if res <= threshold {
        return Ok(x);
    }
    Err(SolveError::NoConvergence {
        iterations: max_iter,
        residual: res,
    })
}

/// Solves `op u = rhs` for a symmetric positive semidefinite operator whose
/// kernel is spanned by `kernel`; implements the Fredholm alternative.
///
/// If `rhs` has a kernel component larger than `rel_tol * ||rhs||` the
/// obstruction is reported; otherwise the unique solution orthogonal to the
/// kernel is returned.
pub fn solve_with_kernel<T: Scalar>(
    op: &impl LinearOperator<T>,
    kernel: &[Field<T>],
    rhs: &Field<T>,
    opts: &SolveOptions<T>,
) -> Result<Field<T>, SolveError<T>> {
    let basis = orthonormalize(kernel);
    let rhs_norm = rhs.norm_l2_weighted();
    for w in &basis {
        let overlap = rhs.inner(w);
        if overlap.abs() > opts.rel_tol * rhs_norm.max(T::one()) {
            return Err(SolveError::NotOrthogonal { overlap });
        }
    }
    let mut projected = rhs.clone();
    for w in &basis {
        let coeff = projected.inner(w);
        projected.axpy(-coeff, w);
    }
    let mut solution = minres_solve(op, &projected, opts)?;
    for w in &basis {
        let coeff = solution.inner(w);
        solution.axpy(-coeff, w);
    }
    Ok(solution)
}

/// Gram-Schmidt in the volume-weighted inner product; drops near-null input.
fn orthonormalize<T: Scalar>(fields: &[Field<T>]) -> Vec<Field<T>> {
    let mut basis: Vec<Field<T>> = Vec::with_capacity(fields.len());
    for f in fields {
        let mut v = f.clone();
        for b in &basis {
            let coeff = v.inner(b);
            v.axpy(-coeff, b);
        }
        let norm = v.norm_l2_weighted();
        if norm > T::of_f64(1e-14) {
            basis.push(v.scaled(T::one() / norm));
        }
    }
    basis
}

fn residual<T: Scalar>(op: &impl LinearOperator<T>, x: &Field<T>, rhs: &Field<T>) -> Field<T> {
    let mut r = rhs.clone();
    let ax = op.apply(x);
    r.axpy(-T::one(), &ax);
    r
}

#[inline]
fn dot<T: Scalar>(a: &Field<T>, b: &Field<T>) -> T {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| x * y)
        .sum()
}

// ---------------------------------------------------------------------------
// Dense oracle
// ---------------------------------------------------------------------------

/// Largest dimension the dense oracle accepts (`N = 4` gives 256 nodes).
pub const DENSE_ORACLE_CAP: usize = 256;

/// Row-major dense symmetric matrix, used only as a small-size oracle.
#[derive(Debug, Clone)]
pub struct DenseMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = T::one();
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.dim + col] = value;
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|row| {
                self.data[row * self.dim..(row + 1) * self.dim]
                    .iter()
                    .zip(x)
                    .map(|(&a, &v)| a * v)
                    .sum()
            })
            .collect()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Maximum absolute asymmetry `max |A_ij - A_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Materializes a matrix-free operator column by column. Capped at
/// [`DENSE_ORACLE_CAP`] because it exists purely for verification.
pub fn dense_assemble<T: Scalar>(
    op: &impl LinearOperator<T>,
    lattice: &Arc<Lattice>,
) -> Result<DenseMatrix<T>, SolveError<T>> {
    let dim = lattice.node_count();
    if dim > DENSE_ORACLE_CAP {
        return Err(SolveError::DimensionTooLarge {
            dim,
            max: DENSE_ORACLE_CAP,
        });
    }
    let mut m = DenseMatrix::zeros(dim);
    for col in 0..dim {
        let mut basis = Field::zeros(lattice);
        basis.values_mut()[col] = T::one();
        let image = op.apply(&basis);
        for (row, &v) in image.values().iter().enumerate() {
            m.set(row, col, v);
        }
    }
    Ok(m)
}

/// Full symmetric eigendecomposition, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct DenseEigen<T> {
    pub values: Vec<T>,
    /// Eigenvectors as columns, in the same order as `values`.
    pub vectors: DenseMatrix<T>,
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Deterministic and dependency-free; accurate to roughly
/// `1e-14 * ||A||` per eigenpair, far below the `1e-10 * ||A||`
/// contract it is used to enforce.
pub fn dense_sym_eig<T: Scalar>(matrix: &DenseMatrix<T>) -> DenseEigen<T> {
    let n = matrix.dim;
    let mut a = matrix.clone();
    let mut v = DenseMatrix::identity(n);
    let scale = a.max_abs().max(T::of_f64(1e-300));
    let stop = T::of_f64(1e-15) * scale;

    for _sweep in 0..60 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a.get(p, q).abs());
            }
        }
        if off <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= stop * T::of_f64(1e-2) {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (T::of_f64(2.0) * apq);
                let t = {
                    let denom = theta.abs() + (theta * theta + T::one()).sqrt();
                    let t = T::one() / denom;
                    if theta < T::zero() {
                        -t
                    } else {
                        t
                    }
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                let tau = s / (T::one() + c);

                a.set(p, p, app - t * apq);
                a.set(q, q, aqq + t * apq);
                a.set(p, q, T::zero());
                a.set(q, p, T::zero());
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a.get(r, p);
                    let arq = a.get(r, q);
                    let new_rp = arp - s * (arq + tau * arp);
                    let new_rq = arq + s * (arp - tau * arq);
                    a.set(r, p, new_rp);
                    a.set(p, r, new_rp);
                    a.set(r, q, new_rq);
                    a.set(q, r, new_rq);
                }
                for r in 0..n {
                    let vrp = v.get(r, p);
                    let vrq = v.get(r, q);
                    v.set(r, p, vrp - s * (vrq + tau * vrp));
                    v.set(r, q, vrq + s * (vrp - tau * vrq));
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a.get(i, i)
            .partial_cmp(&a.get(j, j))
            .expect("eigenvalues are finite")
    });
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = DenseMatrix::zeros(n);
    for (out_col, &src_col) in order.iter().enumerate() {
        for row in 0..n {
            vectors.set(row, out_col, v.get(row, src_col));
        }
    }
    DenseEigen { values, vectors }
}

// ---------------------------------------------------------------------------
// Inverse power iteration
// ---------------------------------------------------------------------------

/// Smallest eigenpair found by shifted inverse power iteration.
#[derive(Debug, Clone)]
pub struct EigenPair<T> {
    pub value: T,
    pub field: Field<T>,
    /// Euclidean norm of `op ψ - λ ψ`.
    pub residual: T,
    pub iterations: usize,
}

/// Shifted inverse power iteration for the smallest eigenvalue of a
/// symmetric operator.
///
/// The caller must supply `shift` strictly below the smallest eigenvalue so
/// that `op - shift` is positive definite (a Rayleigh-quotient lower bound
/// such as `min potential - 1` works). The eigenfield is normalized to unit
/// volume-weighted norm and sign-fixed to positive mean.
///
/// Convergence: the iteration targets `||op ψ - λ ψ|| <= rel_tol * max(1, |λ|)`
/// and keeps refining while the residual improves; once the inner-solver
/// floor is reached it accepts the normwise-backward-error criterion
/// `residual <= rel_tol * ||op||` instead. The Rayleigh quotient squares the
/// residual, so either way the eigenvalue is far more accurate than the
/// eigenfield.
pub fn inverse_power_iteration<T: Scalar>(
    op: &impl LinearOperator<T>,
    shift: T,
    opts: &SolveOptions<T>,
) -> Result<EigenPair<T>, SolveError<T>> {
    let lattice = op.lattice();
    let shifted = ShiftedOperator::new(op, shift);
    let inner_opts = SolveOptions {
        rel_tol: (opts.rel_tol * T::of_f64(1e-2)).max(T::of_f64(1e-14)),
        max_iter: opts.max_iter,
    };
    let norm_scale = operator_norm_estimate(op).max(T::one());

    let mut psi = Field::ones(lattice);
    let norm = psi.norm_l2_weighted();
    psi = psi.scaled(T::one() / norm);

    let max_outer = opts.budget(lattice.node_count()).min(1000);
    let mut previous_residual = T::infinity();
    for iteration in 1..=max_outer {
        let z = cg_solve(&shifted, &psi, &inner_opts)?;
        let z_norm = z.norm_l2_weighted();
        if z_norm == T::zero() {
            return Err(SolveError::NoConvergence {
                iterations: iteration,
                residual: T::infinity(),
            });
        }
        let mut next = z.scaled(T::one() / z_norm);
        if next.integrate() < T::zero() {
            next = next.scaled(-T::one());
        }
        let image = op.apply(&next);
        let value = image.inner(&next);
        let mut r = image;
        r.axpy(-value, &next);
        let residual = r.norm_l2();
        psi = next;

        let strict = residual <= opts.rel_tol * value.abs().max(T::one());
        let stalled = residual > previous_residual * T::of_f64(0.9);
        let normwise = residual <= opts.rel_tol * norm_scale;
        if strict || (stalled && normwise) {
            return Ok(EigenPair {
                value,
                field: psi,
                residual,
                iterations: iteration,
            });
        }
        previous_residual = residual;
    }
    Err(SolveError::NoConvergence {
        iterations: max_outer,
        residual: previous_residual,
    })
}

/// Cheap spectral-norm estimate by a few power iterations on a seeded
/// vector; used only to scale convergence thresholds.
fn operator_norm_estimate<T: Scalar>(op: &impl LinearOperator<T>) -> T {
    let mut v = Field::seeded_uniform(op.lattice(), 0x9e3779b9, -T::one(), T::one());
    let mut estimate = T::zero();
    for _ in 0..6 {
        let norm = v.norm_l2();
        if norm == T::zero() {
            return T::one();
        }
        v = v.scaled(T::one() / norm);
        let av = op.apply(&v);
        estimate = av.norm_l2();
        v = av;
    }
    estimate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::Formula;
    use crate::operators::SchrodingerOperator;

    fn lattice(n: u32) -> Arc<Lattice> {
        Lattice::new(n).unwrap()
    }

    fn identity(lat: &Arc<Lattice>) -> FnOperator<f64, impl Fn(&Field<f64>) -> Field<f64>> {
        FnOperator::new(lat, |u: &Field<f64>| u.clone())
    }

    #[test]
    fn cg_on_identity_returns_rhs() {
        let lat = lattice(2);
        let rhs = Field::seeded_uniform(&lat, 3, -1.0, 1.0);
        let x = cg_solve(&identity(&lat), &rhs, &SolveOptions::default()).unwrap();
        assert!(x.sub(&rhs).norm_inf() < 1e-12);
    }

    #[test]
    fn cg_helmholtz_constant_rhs() {
        let lat = lattice(4);
        let op = SchrodingerOperator::helmholtz(&lat, 1.0);
        let rhs = Field::ones(&lat);
        let x = cg_solve(&op, &rhs, &SolveOptions::default()).unwrap();
        assert!(x.sub(&Field::ones(&lat)).norm_inf() < 1e-10);
    }

    #[test]
    fn cg_matches_dense_oracle() {
        let lat = lattice(4);
        let op = SchrodingerOperator::helmholtz(&lat, 1.0);
        let rhs = Formula::parse("sin(2*pi*x)").unwrap().sample::<f64>(&lat);
        let x = cg_solve(&op, &rhs, &SolveOptions::with_rel_tol(1e-12)).unwrap();

        let dense = dense_assemble(&op, &lat).unwrap();
        assert!(dense.asymmetry() < 1e-12 * dense.max_abs());
        // Solve the dense system through the eigendecomposition.
        let eig = dense_sym_eig(&dense);
        let mut oracle = vec![0.0; dense.dim()];
        for k in 0..dense.dim() {
            let mut coeff = 0.0;
            for (i, &b) in rhs.values().iter().enumerate() {
                coeff += eig.vectors.get(i, k) * b;
            }
            coeff /= eig.values[k];
            for (i, out) in oracle.iter_mut().enumerate() {
                *out += coeff * eig.vectors.get(i, k);
            }
        }
        let max_diff = x
            .values()
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff < 1e-8, "max difference from oracle {max_diff}");
    }

    #[test]
    fn cg_reports_no_convergence() {
        let lat = lattice(4);
        let op = SchrodingerOperator::helmholtz(&lat, 1e-6);
        let rhs = Field::seeded_uniform(&lat, 9, -1.0, 1.0);
        let opts = SolveOptions {
            rel_tol: 1e-14,
            max_iter: Some(2),
        };
        match cg_solve(&op, &rhs, &opts) {
            Err(SolveError::NoConvergence { residual, .. }) => assert!(residual > 0.0),
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn minres_on_identity_returns_rhs() {
        let lat = lattice(2);
        let rhs = Field::seeded_uniform(&lat, 5, -1.0, 1.0);
        let x = minres_solve(&identity(&lat), &rhs, &SolveOptions::default()).unwrap();
        assert!(x.sub(&rhs).norm_inf() < 1e-10);
    }

    #[test]
    fn minres_solves_singular_consistent_system() {
        // -Δ with zero-mean right-hand side.
        let lat = lattice(4);
        let op = SchrodingerOperator::<f64>::helmholtz(&lat, 0.0);
        let rhs = Formula::parse("sin(2*pi*x)").unwrap().sample::<f64>(&lat);
        assert!(rhs.integrate().abs() < 1e-14);
        let opts = SolveOptions::with_rel_tol(1e-10);
        let x = minres_solve(&op, &rhs, &opts).unwrap();
        let res = op.apply(&x).sub(&rhs).norm_l2();
        assert!(res <= 1e-10 * rhs.norm_l2());
    }

    #[test]
    fn minres_matches_dense_oracle_on_indefinite_shift() {
        let lat = lattice(4);
        let op = SchrodingerOperator::helmholtz(&lat, -5.0);
        let rhs = Field::<f64>::seeded_uniform(&lat, 17, -1.0, 1.0);
        let x = minres_solve(&op, &rhs, &SolveOptions::with_rel_tol(1e-12)).unwrap();

        let dense = dense_assemble(&op, &lat).unwrap();
        let eig = dense_sym_eig(&dense);
        assert!(
            eig.values.iter().all(|&v| v.abs() > 1e-8),
            "shift not singular"
        );
        let mut oracle = vec![0.0; dense.dim()];
        for k in 0..dense.dim() {
            let mut coeff = 0.0;
            for (i, &b) in rhs.values().iter().enumerate() {
                coeff += eig.vectors.get(i, k) * b;
            }
            coeff /= eig.values[k];
            for (i, out) in oracle.iter_mut().enumerate() {
                *out += coeff * eig.vectors.get(i, k);
            }
        }
        let max_diff = x
            .values()
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff < 1e-8, "max difference from oracle {max_diff}");
    }

    #[test]
    fn fredholm_alternative() {
        let lat = lattice(4);
        let op = SchrodingerOperator::helmholtz(&lat, 0.0);
        let kernel = vec![Field::ones(&lat)];
        let opts = SolveOptions::default();

        // Compatible right-hand side: solvable, solution orthogonal to 1.
        let rhs = Formula::parse("sin(2*pi*x)").unwrap().sample::<f64>(&lat);
        let x = solve_with_kernel(&op, &kernel, &rhs, &opts).unwrap();
        assert!(x.integrate().abs() < 1e-12);
        assert!(op.apply(&x).sub(&rhs).norm_l2() <= 1e-9 * rhs.norm_l2());

        // Obstructed right-hand side.
        let rhs = Field::ones(&lat);
        match solve_with_kernel(&op, &kernel, &rhs, &opts) {
            Err(SolveError::NotOrthogonal { overlap }) => {
                assert!((overlap - 1.0).abs() < 1e-12)
            }
            other => panic!("expected NotOrthogonal, got {other:?}"),
        }

        // Any projected right-hand side is solvable.
        for seed in 0..3 {
            let mut rhs = Field::seeded_uniform(&lat, 900 + seed, -1.0, 1.0);
            let mean = rhs.integrate();
            rhs = rhs.map(|v| v - mean);
            assert!(solve_with_kernel(&op, &kernel, &rhs, &opts).is_ok());
        }
    }

    #[test]
    fn dense_eig_identity_and_laplacian() {
        let lat = lattice(2);
        let id_matrix = dense_assemble(&identity(&lat), &lat).unwrap();
        let eig = dense_sym_eig(&id_matrix);
        assert!(eig.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));

        let op = SchrodingerOperator::<f64>::helmholtz(&lat, 0.0);
        let dense = dense_assemble(&op, &lat).unwrap();
        let eig = dense_sym_eig(&dense);
        assert!(eig.values[0].abs() < 1e-10, "kernel eigenvalue");
        assert!(
            eig.values.iter().all(|&v| v > -1e-10),
            "nonnegative spectrum"
        );
        // Constant eigenvector for the kernel.
        let first: Vec<f64> = (0..dense.dim()).map(|i| eig.vectors.get(i, 0)).collect();
        let mean = first.iter().sum::<f64>() / first.len() as f64;
        assert!(first.iter().all(|&v| (v - mean).abs() < 1e-8));
    }

    #[test]
    fn dense_eig_residuals_meet_contract() {
        let lat = lattice(2);
        let rho = Formula::parse("-1 + 0.3*sin(2*pi*x)")
            .unwrap()
            .sample::<f64>(&lat);
        let op = SchrodingerOperator::new(4.0, rho);
        let dense = dense_assemble(&op, &lat).unwrap();
        let eig = dense_sym_eig(&dense);
        let scale = dense.max_abs();
        for k in 0..dense.dim() {
            let q: Vec<f64> = (0..dense.dim()).map(|i| eig.vectors.get(i, k)).collect();
            let aq = dense.matvec(&q);
            let max_res = aq
                .iter()
                .zip(&q)
                .map(|(av, qv)| (av - eig.values[k] * qv).abs())
                .fold(0.0f64, f64::max);
            assert!(max_res <= 1e-10 * scale, "pair {k}: residual {max_res}");
        }
        for k in 1..dense.dim() {
            assert!(eig.values[k] >= eig.values[k - 1]);
        }
    }

    #[test]
    fn dense_oracle_cap_enforced() {
        let lat = lattice(8);
        let op = SchrodingerOperator::helmholtz(&lat, 0.0);
        assert!(matches!(
            dense_assemble(&op, &lat),
            Err(SolveError::DimensionTooLarge { .. })
        ));
    }

    #[test]
    fn inverse_power_on_flat_potential() {
        let lat = lattice(4);
        let op = SchrodingerOperator::<f64>::new(4.0, Field::zeros(&lat));
        let pair = inverse_power_iteration(&op, -1.0, &SolveOptions::default()).unwrap();
        assert!(pair.value.abs() < 1e-10);
        assert!((pair.field.inner(&pair.field) - 1.0).abs() < 1e-10);
        // Constant eigenfield.
        assert!(pair.field.max_value() - pair.field.min_value() < 1e-8);
        assert!(pair.field.min_value() > 0.0);
    }

    #[test]
    fn inverse_power_constant_potential_shifts_eigenvalue() {
        let lat = lattice(4);
        let op = SchrodingerOperator::<f64>::new(4.0, Field::constant(&lat, -2.5));
        let pair = inverse_power_iteration(&op, -3.5, &SolveOptions::default()).unwrap();
        assert!((pair.value + 2.5).abs() < 1e-9);
    }

    #[test]
    fn inverse_power_matches_dense_oracle() {
        let lat = lattice(4);
        let rho = Formula::parse("sin(2*pi*x)").unwrap().sample::<f64>(&lat);
        let shift = rho.min_value() - 1.0;
        let op = SchrodingerOperator::new(4.0, rho);
        let pair = inverse_power_iteration(&op, shift, &SolveOptions::default()).unwrap();

        let dense = dense_assemble(&op, &lat).unwrap();
        let eig = dense_sym_eig(&dense);
        assert!(
            (pair.value - eig.values[0]).abs() < 1e-8,
            "iterative {} vs dense {}",
            pair.value,
            eig.values[0]
        );
        // Perron eigenfield is strictly positive.
        assert!(pair.field.min_value() > 0.0);
    }

    #[test]
    fn maximum_principle_for_positive_potential() {
        // (-Δ + f) with f > 0 maps nonnegative data to nonnegative solutions.
        let lat = lattice(3);
        for seed in 0..5 {
            let f = Field::seeded_uniform(&lat, 40 + seed, 0.5, 2.0);
            let op = SchrodingerOperator::new(1.0, f);
            let rhs = Field::seeded_uniform(&lat, 70 + seed, 0.0, 1.0);
            let x = cg_solve(&op, &rhs, &SolveOptions::with_rel_tol(1e-12)).unwrap();
            assert!(
                x.min_value() >= -1e-11,
                "maximum principle violated: min {}",
                x.min_value()
            );
        }
    }
}
