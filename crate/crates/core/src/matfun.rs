//! Primary matrix functions on small dense real matrices.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`. The matrices that show
//! up in the equilibrium problem are products of symmetric positive definite
//! factors, so they are not symmetric but have a real positive spectrum; the
//! routines below exploit that without assuming symmetry.

use nalgebra::{Complex, DMatrix, DVector, Schur};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative tolerance on imaginary parts, scaled by the Frobenius norm.
pub const TOL_IMAG_REL: f64 = 1e-9;
/// Absolute lower bound an eigenvalue must clear to count as positive.
pub const TOL_POS: f64 = 1e-12;

const SCHUR_MAX_ITER: usize = 10_000;
const SERIES_REL_TOL: f64 = 1e-16;
const SERIES_MAX_TERMS: usize = 200;

/// Eigenvalues of a real square matrix together with the positivity verdict.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex<f64>>,
    pub all_real_positive: bool,
    pub tol_imag: f64,
    pub tol_pos: f64,
}

impl Spectrum {
    pub fn max_abs_imag(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    pub fn min_real(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::INFINITY, f64::min)
    }

    /// Real parts sorted ascending.
    pub fn sorted_real(&self) -> Vec<f64> {
        let mut re: Vec<f64> = self.eigenvalues.iter().map(|z| z.re).collect();
        re.sort_by(|a, b| a.total_cmp(b));
        re
    }
}

/// `G(t)` and its time derivative at `tau = T - t` time units before maturity.
#[derive(Debug, Clone)]
pub struct GPair {
    pub g: Matrix,
    pub g_dot: Matrix,
    pub tau: f64,
}

pub(crate) fn check_square(a: &Matrix, context: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::dim(format!("{context} (square)"), a.nrows(), a.ncols()));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Spectrum(format!("{context}: non-finite entry")));
    }
    Ok(())
}

/// Eigenvalues with multiplicity, via a real Schur decomposition.
pub fn spectrum(a: &Matrix) -> Result<Spectrum> {
    check_square(a, "spectrum")?;
    let n = a.nrows();
    let tol_imag = TOL_IMAG_REL * a.norm();
    if n == 0 {
        return Ok(Spectrum {
            eigenvalues: Vec::new(),
            all_real_positive: true,
            tol_imag,
            tol_pos: TOL_POS,
        });
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Convergence("real Schur decomposition".into()))?;
    let eigenvalues: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    let all_real_positive = eigenvalues
        .iter()
        .all(|z| z.im.abs() <= tol_imag && z.re >= TOL_POS);
    Ok(Spectrum {
        eigenvalues,
        all_real_positive,
        tol_imag,
        tol_pos: TOL_POS,
    })
}

/// Principal square root of a matrix with real positive spectrum.
///
/// Diagonalizable inputs with well separated eigenvalues go through an
/// explicit eigendecomposition; anything else (repeated eigenvalues, an
/// ill-conditioned eigenbasis) falls back to the scaled Denman-Beavers
/// iteration. The returned root is always checked against
/// `||S^2 - A||_F <= 1e-10 ||A||_F`.
pub fn principal_sqrt(a: &Matrix) -> Result<Matrix> {
    check_square(a, "principal_sqrt")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(a.clone());
    }
    let spec = spectrum(a)?;
    if !spec.all_real_positive {
        return Err(Error::Spectrum(format!(
            "principal square root needs a real positive spectrum (min real part {:e}, max |imag| {:e})",
            spec.min_real(),
            spec.max_abs_imag()
        )));
    }
    let a_norm = a.norm();
    if let Some(s) = sqrt_by_eigendecomposition(a, &spec.sorted_real()) {
        if residual_ok(&s, a, 1e-12 * a_norm) {
            return Ok(s);
        }
    }
    let s = sqrt_denman_beavers(a)?;
    if residual_ok(&s, a, 1e-10 * a_norm.max(f64::MIN_POSITIVE)) {
        Ok(s)
    } else {
        Err(Error::Convergence(format!(
            "square root residual {:e} above 1e-10 relative",
            (&s * &s - a).norm() / a_norm
        )))
    }
}

fn residual_ok(s: &Matrix, a: &Matrix, tol: f64) -> bool {
    (s * s - a).norm() <= tol
}

fn sqrt_by_eigendecomposition(a: &Matrix, eig: &[f64]) -> Option<Matrix> {
    let n = a.nrows();
    let scale = eig.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let min_gap = eig
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    if n > 1 && min_gap < 1e-6 * scale {
        return None;
    }
    let mut v = Matrix::zeros(n, n);
    for (j, &lambda) in eig.iter().enumerate() {
        let shifted = a - Matrix::identity(n, n) * lambda;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t?;
        let (k, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))?;
        let vec = v_t.row(k).transpose();
        v.set_column(j, &vec);
    }
    let sv = v.clone().svd(false, false).singular_values;
    let (smin, smax) = sv
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if smin <= 0.0 || smax / smin > 1e10 {
        return None;
    }
    let v_inv = v.clone().try_inverse()?;
    let root = Matrix::from_diagonal(&Vector::from_iterator(n, eig.iter().map(|x| x.sqrt())));
    Some(&v * root * v_inv)
}

fn sqrt_denman_beavers(a: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = Matrix::identity(n, n);
    let mut scaling = true;
    for _ in 0..100 {
        let y_inv = y
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Convergence("Denman-Beavers: singular iterate".into()))?;
        let z_inv = z
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Convergence("Denman-Beavers: singular iterate".into()))?;
        let mu = if scaling {
            let det = (y.determinant() * z.determinant()).abs();
            if det.is_finite() && det > 0.0 {
                det.powf(-1.0 / (2.0 * n as f64))
            } else {
                1.0
            }
        } else {
            1.0
        };
        let y_next = (&y * mu + &z_inv / mu) * 0.5;
        let z_next = (&z * mu + &y_inv / mu) * 0.5;
        let change = (&y_next - &y).norm() / y_next.norm();
        y = y_next;
        z = z_next;
        if change < 1e-2 {
            scaling = false;
        }
        if change <= 1e-15 {
            return Ok(y);
        }
    }
    // Quadratic convergence stalls at rounding level; accept if the residual holds.
    Ok(y)
}

/// Matrix exponential (Padé scaling and squaring, provided by nalgebra).
pub fn expm(a: &Matrix) -> Matrix {
    if a.nrows() == 0 {
        return a.clone();
    }
    a.exp()
}

/// `(G, Ġ)` of the hyperbolic pair `G = cosh(sqrt(Δ) τ)`, `Ġ = -sqrt(Δ) sinh(sqrt(Δ) τ)`.
///
/// Evaluated from the even power series in `X = Δ τ²`, so no square root of
/// `Δ` is needed. For large `||X||` the argument is scaled by `4^-s` and the
/// double-angle identities `C(4X) = 2C(X)² - I`, `S(4X) = S(X)C(X)` are
/// applied `s` times, where `C(X) = Σ Xⁿ/(2n)!` and `S(X) = Σ Xⁿ/(2n+1)!`.
pub fn g_pair(delta_mat: &Matrix, tau: f64) -> Result<GPair> {
    check_square(delta_mat, "g_pair")?;
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::Grid(format!("g_pair: tau must be finite and >= 0, got {tau}")));
    }
    let n = delta_mat.nrows();
    let x = delta_mat * (tau * tau);
    let mut halvings = 0u32;
    let mut norm = x.norm();
    while norm > 1.0 {
        norm /= 4.0;
        halvings += 1;
    }
    let x_scaled = &x / 4f64.powi(halvings as i32);
    let (mut c, mut s) = cosh_sinhc_series(&x_scaled)?;
    let eye = Matrix::identity(n, n);
    for _ in 0..halvings {
        s = &s * &c;
        c = (&c * &c) * 2.0 - &eye;
    }
    let g_dot = -(delta_mat * &s) * tau;
    Ok(GPair { g: c, g_dot, tau })
}

fn cosh_sinhc_series(x: &Matrix) -> Result<(Matrix, Matrix)> {
    let n = x.nrows();
    let mut c = Matrix::identity(n, n);
    let mut s = Matrix::identity(n, n);
    let mut term_c = Matrix::identity(n, n);
    let mut term_s = Matrix::identity(n, n);
    for k in 1..SERIES_MAX_TERMS {
        let kf = k as f64;
        term_c = (&term_c * x) / ((2.0 * kf - 1.0) * (2.0 * kf));
        term_s = (&term_s * x) / ((2.0 * kf) * (2.0 * kf + 1.0));
        c += &term_c;
        s += &term_s;
        if term_c.norm() <= SERIES_REL_TOL * c.norm() && term_s.norm() <= SERIES_REL_TOL * s.norm() {
            return Ok((c, s));
        }
    }
    Err(Error::Convergence(format!(
        "cosh/sinh series did not meet its term-decay criterion within {SERIES_MAX_TERMS} terms"
    )))
}

/// Solves the Sylvester equation `A X + X B = C` through its Kronecker form.
///
/// Sizes here stay in the low hundreds of unknowns, so a dense LU is fine.
pub fn solve_sylvester(a: &Matrix, b: &Matrix, c: &Matrix) -> Result<Matrix> {
    let (m, n) = (a.nrows(), b.nrows());
    if c.nrows() != m || c.ncols() != n {
        return Err(Error::dim("sylvester right-hand side", m * n, c.nrows() * c.ncols()));
    }
    if m == 0 || n == 0 {
        return Ok(Matrix::zeros(m, n));
    }
    let mn = m * n;
    let mut k = Matrix::zeros(mn, mn);
    // column-major vec: vec(AX) = (I ⊗ A) vec X, vec(XB) = (Bᵀ ⊗ I) vec X
    for j in 0..n {
        for i in 0..m {
            let row = j * m + i;
            for p in 0..m {
                k[(row, j * m + p)] += a[(i, p)];
            }
            for q in 0..n {
                k[(row, q * m + i)] += b[(q, j)];
            }
        }
    }
    let rhs = Vector::from_column_slice(c.as_slice());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularMatrix("Sylvester operator".into()))?;
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularMatrix("Sylvester operator".into()));
    }
    Ok(Matrix::from_column_slice(m, n, sol.as_slice()))
}

/// Solves `A x = b`, rejecting numerically singular systems.
pub(crate) fn solve(a: &Matrix, b: &Matrix, context: &str) -> Result<Matrix> {
    let x = a
        .clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::SingularMatrix(context.to_string()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix(context.to_string()));
    }
    Ok(x)
}

pub(crate) fn inverse(a: &Matrix, context: &str) -> Result<Matrix> {
    let n = a.nrows();
    solve(a, &Matrix::identity(n, n), context)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let eye = Matrix::identity(3, 3);
        assert_relative_eq!(principal_sqrt(&eye).unwrap(), eye, epsilon = 1e-14);
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![4.0, 9.0]));
        let s = principal_sqrt(&d).unwrap();
        assert_relative_eq!(s, Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 3.0])), epsilon = 1e-13);
    }

    #[test]
    fn sqrt_matches_diagonalization_oracle() {
        let a = m(2, 2, &[5.0, 4.0, 1.0, 2.0]);
        // eigenvectors (4,1) for 6 and (1,-1) for 1
        let p = m(2, 2, &[4.0, 1.0, 1.0, -1.0]);
        let p_inv = p.clone().try_inverse().unwrap();
        let oracle = &p * Matrix::from_diagonal(&Vector::from_vec(vec![6f64.sqrt(), 1.0])) * p_inv;
        let s = principal_sqrt(&a).unwrap();
        assert_relative_eq!(s, oracle, epsilon = 1e-12);
        assert_relative_eq!(s[(0, 0)], 2.1596, epsilon = 1e-4);
        assert_relative_eq!(s[(0, 1)], 1.1596, epsilon = 1e-4);
        assert_relative_eq!(s[(1, 0)], 0.2899, epsilon = 1e-4);
        assert_relative_eq!(s[(1, 1)], 1.2899, epsilon = 1e-4);
        assert_relative_eq!(&s * &s, a, epsilon = 1e-12);
    }

    #[test]
    fn sqrt_of_defective_matrix_uses_iteration() {
        // Jordan block: not diagonalizable, principal root is [[2, 1/4], [0, 2]]
        let a = m(2, 2, &[4.0, 1.0, 0.0, 4.0]);
        let s = principal_sqrt(&a).unwrap();
        assert_relative_eq!(s, m(2, 2, &[2.0, 0.25, 0.0, 2.0]), epsilon = 1e-12);
    }

    #[test]
    fn sqrt_rejects_bad_spectrum() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, 2.0]));
        assert!(matches!(principal_sqrt(&a), Err(Error::Spectrum(_))));
        let rot = m(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(matches!(principal_sqrt(&rot), Err(Error::Spectrum(_))));
    }

    #[test]
    fn spectrum_examples() {
        let s = spectrum(&Matrix::identity(2, 2)).unwrap();
        assert!(s.all_real_positive);
        assert_eq!(s.sorted_real(), vec![1.0, 1.0]);

        let b = m(2, 2, &[5.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 7.0 / 3.0]);
        let s = spectrum(&b).unwrap();
        assert!(s.all_real_positive);
        let r = s.sorted_real();
        // roots of λ² − 4λ + 11/3
        let disc = (16.0f64 - 4.0 * 11.0 / 3.0).sqrt();
        assert_relative_eq!(r[0], (4.0 - disc) / 2.0, epsilon = 1e-12);
        assert_relative_eq!(r[1], (4.0 + disc) / 2.0, epsilon = 1e-12);
        assert_relative_eq!(r[1], 2.0 + 1.0 / 3f64.sqrt(), epsilon = 1e-12);

        let neg = Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, 2.0]));
        assert!(!spectrum(&neg).unwrap().all_real_positive);
    }

    #[test]
    fn g_pair_boundary_and_scalar_values() {
        let delta = m(2, 2, &[2.0, 0.3, 0.1, 1.0]);
        let p = g_pair(&delta, 0.0).unwrap();
        assert_eq!(p.g, Matrix::identity(2, 2));
        assert_eq!(p.g_dot, Matrix::zeros(2, 2));

        let p = g_pair(&m(1, 1, &[1.0]), 1.0).unwrap();
        assert_relative_eq!(p.g[(0, 0)], 1f64.cosh(), epsilon = 1e-14);
        assert_relative_eq!(p.g_dot[(0, 0)], -1f64.sinh(), epsilon = 1e-14);
        assert_relative_eq!(p.g[(0, 0)], 1.5430806, epsilon = 1e-7);

        let p = g_pair(&m(1, 1, &[0.7525]), 1.0).unwrap();
        let r = 0.7525f64.sqrt();
        assert_relative_eq!(p.g[(0, 0)], r.cosh(), epsilon = 1e-13);
        assert_relative_eq!(p.g_dot[(0, 0)], -r * r.sinh(), epsilon = 1e-13);
        // independent scalar oracle: cosh(0.8674676) = 1.4004438, -r sinh(r) = -0.8504912
        assert_relative_eq!(p.g[(0, 0)], 1.4004438, epsilon = 1e-7);
        assert_relative_eq!(p.g_dot[(0, 0)], -0.8504912, epsilon = 1e-7);
    }

    #[test]
    fn g_pair_large_argument_uses_double_angle() {
        let p = g_pair(&m(1, 1, &[0.7525]), 50.0).unwrap();
        let x = 0.7525f64.sqrt() * 50.0;
        assert_relative_eq!(p.g[(0, 0)], x.cosh(), max_relative = 1e-12);
        assert_relative_eq!(p.g_dot[(0, 0)], -0.7525f64.sqrt() * x.sinh(), max_relative = 1e-12);
    }

    #[test]
    fn g_pair_agrees_with_cosh_of_root() {
        let delta = m(2, 2, &[1.2, 0.4, 0.3, 0.9]);
        let tau = 1.7;
        let root = principal_sqrt(&delta).unwrap();
        let e_plus = expm(&(&root * tau));
        let e_minus = expm(&(&root * -tau));
        let cosh = (&e_plus + &e_minus) * 0.5;
        let sinh = (&e_plus - &e_minus) * 0.5;
        let p = g_pair(&delta, tau).unwrap();
        assert_relative_eq!(p.g, cosh, epsilon = 1e-12);
        assert_relative_eq!(p.g_dot, -(&root * sinh), epsilon = 1e-12);
    }

    #[test]
    fn g_pair_second_derivative_matches_ode() {
        let delta = m(2, 2, &[1.2, 0.4, 0.3, 0.9]);
        let tau = 0.8;
        let errs: Vec<f64> = [1e-2, 5e-3]
            .iter()
            .map(|&h| {
                let gp = g_pair(&delta, tau + h).unwrap().g;
                let g0 = g_pair(&delta, tau).unwrap().g;
                let gm = g_pair(&delta, tau - h).unwrap().g;
                let second = (gp - &g0 * 2.0 + gm) / (h * h);
                (second - &delta * &g0).norm()
            })
            .collect();
        assert!(errs[0] < 1e-4);
        let ratio = errs[0] / errs[1];
        assert!((3.0..5.0).contains(&ratio), "O(h²) ratio {ratio}");
    }

    #[test]
    fn sylvester_solution_satisfies_equation() {
        let a = m(2, 2, &[2.0, 0.5, 0.1, 1.5]);
        let b = m(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -0.2, 0.0, 0.3]);
        let c = m(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = solve_sylvester(&a, &b, &c).unwrap();
        assert_relative_eq!(&a * &x + &x * &b, c, epsilon = 1e-12);
    }

    #[test]
    fn factorization_of_b() {
        let b = m(2, 2, &[5.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 7.0 / 3.0]);
        let delta = 0.3;
        let eye = Matrix::identity(2, 2);
        let dm = &b + &eye * (delta * delta / 4.0);
        let root = principal_sqrt(&dm).unwrap();
        let prod = (&root - &eye * (delta / 2.0)) * (&root + &eye * (delta / 2.0));
        assert_relative_eq!(prod, b, epsilon = 1e-12);
    }

    fn similar_to_positive_diagonal(seed: u64, n: usize) -> Matrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let diag = Vector::from_fn(n, |_, _| rng.random_range(0.05..5.0));
        let p = Matrix::identity(n, n) + Matrix::from_fn(n, n, |_, _| rng.random_range(-0.3..0.3));
        &p * Matrix::from_diagonal(&diag) * p.try_inverse().unwrap()
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn root_squares_back_and_commutes(seed in proptest::prelude::any::<u64>(), n in 1usize..=6) {
            let a = similar_to_positive_diagonal(seed, n);
            let r = principal_sqrt(&a).unwrap();
            proptest::prop_assert!((&r * &r - &a).norm() <= 1e-10 * a.norm());
            proptest::prop_assert!((&r * &a - &a * &r).norm() <= 1e-9 * a.norm());
            proptest::prop_assert!(spectrum(&r).unwrap().all_real_positive);
        }

        #[test]
        fn expm_of_sum_of_commuting_parts(seed in proptest::prelude::any::<u64>(), n in 1usize..=5, s in 0.0f64..2.0) {
            let a = similar_to_positive_diagonal(seed, n) * -0.5;
            let lhs = expm(&(&a * (1.0 + s)));
            let rhs = expm(&a) * expm(&(&a * s));
            proptest::prop_assert!((&lhs - &rhs).norm() <= 1e-10 * rhs.norm().max(1.0));
        }

        #[test]
        fn g_pair_matches_cosh_root(seed in proptest::prelude::any::<u64>(), n in 1usize..=4, tau in 0.0f64..20.0) {
            let a = similar_to_positive_diagonal(seed, n);
            let gp = g_pair(&a, tau).unwrap();
            // G(τ) = cosh(√Δ τ), Ġ = −√Δ sinh(√Δ τ)
            let r = principal_sqrt(&a).unwrap() * tau;
            let (ep, em) = (expm(&r), expm(&-&r));
            let cosh = (&ep + &em) / 2.0;
            proptest::prop_assert!((&gp.g - &cosh).norm() <= 1e-9 * cosh.norm());
        }
    }
}
