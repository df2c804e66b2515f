//! First eigenvalue, Yamabe-type quotient minimization, and the sign
//! trichotomy classifier.
//!
//! Everything is generic over [`CurvatureStructure`], so the same code
//! computes the spectrum of the background structure and of its conformal
//! deformations: the measure-weighted eigenproblem is symmetrized by the
//! diagonal similarity `B = M^{1/2} L M^{-1/2}` and handed to the shifted
//! inverse power iteration.

use thiserror::Error;

use crate::field::{Field, PositiveField};
use crate::linalg::{inverse_power_iteration, FnOperator, SolveError, SolveOptions};
use crate::operators::{CurvatureStructure, SchrodingerOperator, Structure};
use crate::scalar::Scalar;

/// Smallest eigenpair of the conformal sub-Laplacian.
#[derive(Debug, Clone)]
pub struct SpectralResult<T> {
    pub lambda1: T,
    /// Strictly positive eigenfield, unit norm in the structure's measure.
    pub psi: PositiveField<T>,
    /// Euclidean norm of the eigen-residual `L ψ - λ1 ψ`.
    pub residual: T,
    pub iterations: usize,
}

/// Outcome of the quotient minimization.
#[derive(Debug, Clone)]
pub struct YamabeResult<T> {
    /// Best quotient value found; an upper bound for the discrete infimum.
    pub value: T,
    /// Minimizer, normalized to unit conformal volume.
    pub minimizer: PositiveField<T>,
    pub iterations: usize,
}

/// Sign class of the structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurvatureClass {
    Negative,
    Zero,
    Positive,
}

impl CurvatureClass {
    pub fn of<T: Scalar>(value: T, zero_tol: T) -> Self {
        if value.abs() <= zero_tol {
            CurvatureClass::Zero
        } else if value < T::zero() {
            CurvatureClass::Negative
        } else {
            CurvatureClass::Positive
        }
    }
}

impl std::fmt::Display for CurvatureClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CurvatureClass::Negative => write!(f, "negative"),
            CurvatureClass::Zero => write!(f, "zero"),
            CurvatureClass::Positive => write!(f, "positive"),
        }
    }
}

/// Classification together with the numbers that justify it.
#[derive(Debug, Clone)]
pub struct TrichotomyReport<T> {
    pub class: CurvatureClass,
    pub spectral: SpectralResult<T>,
    pub yamabe: YamabeResult<T>,
    pub signs_agree: bool,
    pub zero_tol: T,
}

#[derive(Debug, Error, Clone)]
pub enum SpectralError<T: Scalar> {
    #[error(transparent)]
    Solve(#[from] SolveError<T>),
    #[error("computed eigenfield is not strictly positive (min {min})")]
    EigenfieldNotPositive { min: T },
    #[error("quotient minimization exhausted {iterations} iterations")]
    QuotientNoConvergence { iterations: usize },
    #[error("sign disagreement between lambda1 = {lambda1} and quotient {yamabe}; this signals a bug, not a geometry outcome")]
    Inconsistent { lambda1: T, yamabe: T },
}

/// Default width of the zero band, `1e-6 * b_n * N^2`, scaled to the
/// operator magnitude.
pub fn default_zero_tol<T: Scalar, S: CurvatureStructure<T>>(s: &S) -> T {
    let n = T::of_usize(s.lattice().resolution() as usize);
    T::of_f64(1e-6) * s.constants().laplacian_factor() * n * n
}

/// Smallest eigenvalue of the structure's conformal sub-Laplacian with its
/// positive eigenfield.
///
/// The shift `min curvature - 1` is a strict Rayleigh-quotient lower bound,
/// so the shifted operator is positive definite.
pub fn lambda1<T: Scalar, S: CurvatureStructure<T>>(
    s: &S,
    opts: &SolveOptions<T>,
) -> Result<SpectralResult<T>, SpectralError<T>> {
    let lattice = s.lattice();
    let measure = s.measure();
    let half_weight: Vec<T> = measure.values().iter().map(|&m| m.sqrt()).collect();
    let half_weight = Field::from_values(lattice, half_weight);

    // Similarity transform keeps the operator symmetric in the plain inner
    // product regardless of the measure.
    let sym = {
        let hw = half_weight.clone();
        FnOperator::new(lattice, move |phi: &Field<T>| {
            let v = phi.zip_map(&hw, |p, d| p / d);
            let lv = s.apply_operator(&v);
            lv.zip_map(&hw, |l, d| l * d)
        })
    };

    let shift = s.curvature().min_value() - T::one();
    let pair = inverse_power_iteration(&sym, shift, opts)?;

    let mut psi = pair.field.zip_map(&half_weight, |p, d| p / d);
    let norm = s.inner_m(&psi, &psi).sqrt();
    psi = psi.scaled(T::one() / norm);
    if s.integrate_m(&psi) < T::zero() {
        psi = psi.scaled(-T::one());
    }

    let image = s.apply_operator(&psi);
    let lambda = s.inner_m(&image, &psi);
    let mut r = image;
    r.axpy(-lambda, &psi);
    let residual = r.norm_l2();

    let min = psi.min_value();
    let psi = psi
        .into_positive()
        .map_err(|_| SpectralError::EigenfieldNotPositive { min })?;
    Ok(SpectralResult {
        lambda1: lambda,
        psi,
        residual,
        iterations: pair.iterations,
    })
}

/// Smallest eigenvalue of the stability operator at the positive base point
/// `u`; its positivity is the openness evidence for converged solutions.
pub fn mu1_of_stability<T: Scalar>(
    s: &Structure<T>,
    u: &PositiveField<T>,
    opts: &SolveOptions<T>,
) -> Result<T, SpectralError<T>> {
    let op = SchrodingerOperator::stability(s, u);
    let shift = op.potential().min_value() - T::one();
    let pair = inverse_power_iteration(&op, shift, opts)?;
    Ok(pair.value)
}

/// Yamabe-type quotient `energy(u) / (∫ u^{a+1})^{n/(n+1)}`; scale-invariant
/// by construction.
pub fn yamabe_quotient<T: Scalar, S: CurvatureStructure<T>>(s: &S, u: &PositiveField<T>) -> T {
    let c = s.constants();
    let numerator = s.energy(u.field());
    let volume = s.integrate_m(&conformal_volume_density(u, c.exponent()));
    let n = T::of_usize(c.cr_dimension() as usize);
    numerator / volume.powf(n / (n + T::one()))
}

fn conformal_volume_density<T: Scalar>(u: &PositiveField<T>, exponent: T) -> Field<T> {
    u.field().map(|v| v.powf(exponent + T::one()))
}

/// Projected gradient descent on the quotient over positive fields.
///
/// Each step walks against the energy gradient `2 L u`, clips to stay
/// positive, renormalizes the conformal volume to one, and backtracks from
/// step 1.0 by halving until the quotient decreases. Terminates when the
/// decrease over a ten-step window falls below `rel_tol`.
pub fn minimize_yamabe<T: Scalar, S: CurvatureStructure<T>>(
    s: &S,
    opts: &SolveOptions<T>,
) -> Result<YamabeResult<T>, SpectralError<T>> {
    let c = s.constants();
    let exponent = c.exponent();
    let positivity_floor = T::of_f64(1e-8);
    let max_iter = opts.budget(s.lattice().node_count()).min(5_000);

    let normalize = |u: Field<T>| -> Field<T> {
        let volume = s.integrate_m(&u.map(|v| v.powf(exponent + T::one())));
        u.scaled(T::one() / volume.powf(T::one() / (exponent + T::one())))
    };

    let quotient_of = |u: &Field<T>| -> T {
        let volume = s.integrate_m(&u.map(|v| v.powf(exponent + T::one())));
        let n = T::of_usize(c.cr_dimension() as usize);
        s.energy(u) / volume.powf(n / (n + T::one()))
    };

    let mut u = normalize(Field::ones(s.lattice()));
    let mut value = quotient_of(&u);
    let mut window: Vec<T> = vec![value];
    let mut iterations = 0usize;
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;
        let gradient = s.apply_operator(&u).scaled(T::of_f64(2.0));
        let mut step = T::one();
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = u.clone();
            trial.axpy(-step, &gradient);
            let trial = normalize(trial.map(|v| v.max(positivity_floor)));
            let trial_value = quotient_of(&trial);
            if trial_value < value {
                u = trial;
                value = trial_value;
                accepted = true;
                break;
            }
            step *= T::of_f64(0.5);
        }
        window.push(value);
        if !accepted {
            // No descent direction left at any step size: stationary.
            converged = true;
            break;
        }
        if window.len() > 10 {
            let past = window[window.len() - 11];
            if past - value < opts.rel_tol * value.abs().max(T::one()) {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(SpectralError::QuotientNoConvergence { iterations });
    }

    let min = u.min_value();
    let minimizer = u
        .into_positive()
        .map_err(|_| SpectralError::EigenfieldNotPositive { min })?;
    Ok(YamabeResult {
        value,
        minimizer,
        iterations,
    })
}

/// Classifies the structure by the sign of the first eigenvalue, with the
/// quotient minimization as an independent cross-check. A disagreement
/// between the two signs beyond the zero band is reported as an error.
pub fn trichotomy<T: Scalar, S: CurvatureStructure<T>>(
    s: &S,
    zero_tol: T,
    opts: &SolveOptions<T>,
) -> Result<TrichotomyReport<T>, SpectralError<T>> {
    let spectral = lambda1(s, opts)?;
    let yamabe = minimize_yamabe(s, opts)?;
    let class = CurvatureClass::of(spectral.lambda1, zero_tol);
    let yamabe_class = CurvatureClass::of(yamabe.value, zero_tol);
    if class != yamabe_class {
        return Err(SpectralError::Inconsistent {
            lambda1: spectral.lambda1,
            yamabe: yamabe.value,
        });
    }
    Ok(TrichotomyReport {
        class,
        spectral,
        yamabe,
        signs_agree: true,
        zero_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::Formula;
    use crate::lattice::Lattice;
    use crate::linalg::{dense_assemble, dense_sym_eig};
    use std::sync::Arc;

    fn structure(n: u32, rho: &str) -> Structure<f64> {
        let lat = Lattice::new(n).unwrap();
        let rho = Formula::parse(rho).unwrap().sample(&lat);
        Structure::new(&lat, rho)
    }

    fn opts() -> SolveOptions<f64> {
        SolveOptions::default()
    }

    #[test]
    fn flat_structure_has_zero_eigenvalue() {
        let s = structure(4, "0");
        let r = lambda1(&s, &opts()).unwrap();
        assert!(r.lambda1.abs() < 1e-10);
        assert!(r.psi.max_value() - r.psi.min_value() < 1e-8, "constant psi");
        assert!((r.psi.inner(r.psi.field()) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn constant_curvature_shifts_lambda1() {
        for c in [-1.0, 2.5] {
            let lat = Lattice::new(4).unwrap();
            let s = Structure::new(&lat, crate::field::Field::constant(&lat, c));
            let r = lambda1(&s, &opts()).unwrap();
            assert!(
                (r.lambda1 - c).abs() < 1e-9,
                "rho={c}: lambda1={}",
                r.lambda1
            );
        }
    }

    #[test]
    fn lambda1_matches_dense_oracle() {
        let s = structure(4, "-1 + 0.3*sin(2*pi*x)");
        let r = lambda1(&s, &opts()).unwrap();
        assert!(r.lambda1 > -1.3 && r.lambda1 < -0.7);

        let op = SchrodingerOperator::conformal_laplacian(&s);
        let dense = dense_assemble(&op, s.lattice()).unwrap();
        let eig = dense_sym_eig(&dense);
        assert!((r.lambda1 - eig.values[0]).abs() < 1e-8);
        assert!(r.psi.min_value() > 0.0);
    }

    #[test]
    fn lambda1_obeys_rayleigh_bounds() {
        let s = structure(4, "-1 + 0.3*sin(2*pi*x)");
        let r = lambda1(&s, &opts()).unwrap();
        let rho = s.rho();
        assert!(r.lambda1 >= rho.min_value() - 1e-10);
        assert!(r.lambda1 <= rho.integrate() + 1e-10, "test field u = 1");
        // The eigenfield realizes its eigenvalue as a Rayleigh quotient.
        let q = s.quadratic_form(r.psi.field());
        assert!((q - r.lambda1).abs() < 1e-8);
    }

    #[test]
    fn stability_eigenvalue_reference_cases() {
        let s = structure(4, "0");
        let one = PositiveField::constant(s.lattice(), 1.0).unwrap();
        let mu = mu1_of_stability(&s, &one, &opts()).unwrap();
        assert!(mu.abs() < 1e-9);

        // rho = -b_n/(a-1) = -2 turns the stability operator into -Δ + 1.
        let s = structure(4, "-2");
        let mu = mu1_of_stability(&s, &one, &opts()).unwrap();
        assert!((mu - 1.0).abs() < 1e-9);
    }

    #[test]
    fn quotient_reference_values_and_scale_invariance() {
        let s = structure(4, "0");
        let one = PositiveField::constant(s.lattice(), 1.0).unwrap();
        assert_eq!(yamabe_quotient(&s, &one), 0.0);

        let s = structure(4, "-1.5");
        assert!((yamabe_quotient(&s, &one) + 1.5).abs() < 1e-12);

        let s = structure(4, "-1 + 0.3*sin(2*pi*x)");
        let u = Formula::parse("1 + 0.2*cos(2*pi*y)")
            .unwrap()
            .sample::<f64>(s.lattice())
            .into_positive()
            .unwrap();
        let q = yamabe_quotient(&s, &u);
        let scaled = u.scaled_positive(3.0).unwrap();
        let q_scaled = yamabe_quotient(&s, &scaled);
        assert!((q - q_scaled).abs() <= 1e-12 * q.abs());
    }

    #[test]
    fn quotient_minimization_flat_and_constant() {
        let s = structure(4, "0");
        let y = minimize_yamabe(&s, &opts()).unwrap();
        assert!(y.value.abs() < 1e-12);

        let s = structure(4, "-1");
        let y = minimize_yamabe(&s, &opts()).unwrap();
        assert!((y.value + 1.0).abs() < 1e-9);
        let spread = y.minimizer.max_value() - y.minimizer.min_value();
        assert!(spread < 1e-6, "minimizer nearly constant, spread {spread}");
    }

    #[test]
    fn quotient_minimizer_has_unit_conformal_volume() {
        let s = structure(4, "-1 + 0.3*sin(2*pi*x)");
        let y = minimize_yamabe(&s, &opts()).unwrap();
        let a = s.constants().exponent();
        let volume = s.integrate_m(&y.minimizer.map(|v| v.powf(a + 1.0)));
        assert!((volume - 1.0).abs() < 1e-12, "conformal volume {volume}");
    }

    #[test]
    fn quotient_sign_tracks_lambda1() {
        let s = structure(4, "-1 + 0.3*sin(2*pi*x)");
        let y = minimize_yamabe(&s, &opts()).unwrap();
        let r = lambda1(&s, &opts()).unwrap();
        assert!(y.value < 0.0);
        assert_eq!(
            CurvatureClass::of(y.value, default_zero_tol(&s)),
            CurvatureClass::of(r.lambda1, default_zero_tol(&s))
        );
        // Descent can only improve on the constant test function.
        assert!(
            y.value
                <= yamabe_quotient(&s, &PositiveField::constant(s.lattice(), 1.0).unwrap()) + 1e-12
        );
    }

    #[test]
    fn trichotomy_reference_classes() {
        let cases = [
            ("0", CurvatureClass::Zero),
            ("-1", CurvatureClass::Negative),
            ("1", CurvatureClass::Positive),
            ("-1 + 0.3*sin(2*pi*x)", CurvatureClass::Negative),
            ("1 + 0.3*sin(2*pi*y)", CurvatureClass::Positive),
        ];
        for (rho, expected) in cases {
            let s = structure(4, rho);
            let report = trichotomy(&s, default_zero_tol(&s), &opts()).unwrap();
            assert_eq!(report.class, expected, "rho = {rho}");
            assert!(report.signs_agree);
        }
    }

    #[test]
    fn lambda1_generic_over_f32_builds() {
        let lat = Lattice::new(2).unwrap();
        let rho = crate::field::Field::<f32>::constant(&lat, -1.0);
        let s = Structure::new(&lat, rho);
        let o = SolveOptions {
            rel_tol: 1e-5f32,
            max_iter: None,
        };
        let r = lambda1(&s, &o).unwrap();
        assert!((r.lambda1 + 1.0).abs() < 1e-3);
        let _ = Arc::clone(s.lattice());
    }
}
