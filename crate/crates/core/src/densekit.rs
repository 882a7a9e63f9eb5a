//! Dense real/complex matrix helpers: LU solves with a pivot floor, spectral
//! norms, symmetric-part eigenvalue bounds and the matrix exponential.

use nalgebra::{ComplexField, DMatrix, Dyn, SymmetricEigen, LU};
use num_complex::Complex64;
use thiserror::Error;

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

/// Scalar types the helpers work over (`f64` and `Complex64`).
pub trait Scalar: ComplexField<RealField = f64> + Copy {}
impl<T: ComplexField<RealField = f64> + Copy> Scalar for T {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is singular to working precision (pivot {pivot}, |u| = {magnitude:e})")]
    Singular { pivot: usize, magnitude: f64 },
    #[error("matrix exponential out of range (1-norm {norm:e})")]
    Range { norm: f64 },
}

const PIVOT_FLOOR: f64 = 1e-13;

pub fn norm_1<T: Scalar>(a: &DMatrix<T>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|x| x.modulus()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn norm_inf<T: Scalar>(a: &DMatrix<T>) -> f64 {
    (0..a.nrows())
        .map(|i| a.row(i).iter().map(|x| x.modulus()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest singular value, via the Hermitian eigenproblem on A*A.
pub fn spectral_norm<T: Scalar>(a: &DMatrix<T>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let g = if a.nrows() >= a.ncols() { a.adjoint() * a } else { a * a.adjoint() };
    let ev = SymmetricEigen::new(g).eigenvalues;
    ev.iter().cloned().fold(0.0, f64::max).max(0.0).sqrt()
}

/// Orthonormal basis (columns) of the right null space of a real matrix:
/// right singular vectors with σ ≤ rel_tol·σ_max.
pub fn null_space(a: &Mat, rel_tol: f64) -> Mat {
    let n = a.ncols();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    // pad to at least square so every right singular vector is returned
    let padded = if a.nrows() < n { a.clone().resize_vertically(n, 0.0) } else { a.clone() };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<_> = (0..n).filter(|&k| svd.singular_values[k] <= rel_tol * top).map(|k| v_t.row(k).transpose()).collect();
    if cols.is_empty() {
        Mat::zeros(n, 0)
    } else {
        Mat::from_columns(&cols)
    }
}

/// Extremal singular values `(min, max)` of a square matrix.
pub fn singular_bounds<T: Scalar>(a: &DMatrix<T>) -> (f64, f64) {
    let ev = SymmetricEigen::new(a.adjoint() * a).eigenvalues;
    let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
    let hi = ev.iter().cloned().fold(0.0, f64::max);
    (lo.sqrt(), hi.sqrt())
}

/// Condition number in the spectral norm; infinite for singular input.
pub fn condition_number<T: Scalar>(a: &DMatrix<T>) -> f64 {
    let (lo, hi) = singular_bounds(a);
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Extremal eigenvalues of the Hermitian part (A + A*)/2.
pub fn sym_part_bounds<T: Scalar>(a: &DMatrix<T>) -> Result<(f64, f64), LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::Dimension(format!("{}x{} is not square", a.nrows(), a.ncols())));
    }
    if a.is_empty() {
        return Ok((0.0, 0.0));
    }
    let h = hermitian_part(a);
    let ev = SymmetricEigen::new(h).eigenvalues;
    let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

pub fn hermitian_part<T: Scalar>(a: &DMatrix<T>) -> DMatrix<T> {
    (a + a.adjoint()).unscale(2.0)
}

/// Applies `f` to the eigenvalues of a real symmetric matrix.
pub fn sym_apply(s: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let eig = SymmetricEigen::new(hermitian_part(s));
    let d = Mat::from_diagonal(&eig.eigenvalues.map(f));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// LU factorization with the pivot floor applied once at construction.
#[derive(Clone, Debug)]
pub struct DenseLu<T: Scalar> {
    lu: LU<T, Dyn, Dyn>,
    n: usize,
}

impl<T: Scalar> DenseLu<T> {
    pub fn new(a: &DMatrix<T>) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::Dimension(format!("{}x{} is not square", a.nrows(), a.ncols())));
        }
        let n = a.nrows();
        let floor = PIVOT_FLOOR * norm_inf(a).max(f64::MIN_POSITIVE);
        let lu = a.clone().lu();
        let u = lu.u();
        for i in 0..n {
            let m = u[(i, i)].modulus();
            if !(m > floor) {
                return Err(LinalgError::Singular { pivot: i, magnitude: m });
            }
        }
        Ok(Self { lu, n })
    }

    pub fn solve(&self, b: &DMatrix<T>) -> Result<DMatrix<T>, LinalgError> {
        if b.nrows() != self.n {
            return Err(LinalgError::Dimension(format!(
                "right-hand side has {} rows, expected {}",
                b.nrows(),
                self.n
            )));
        }
        let mut x = b.clone();
        if !self.lu.solve_mut(&mut x) {
            return Err(LinalgError::Singular { pivot: 0, magnitude: 0.0 });
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<DMatrix<T>, LinalgError> {
        self.solve(&DMatrix::identity(self.n, self.n))
    }
}

/// Solves AX = B.
pub fn solve_dense<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>, LinalgError> {
    DenseLu::new(a)?.solve(b)
}

pub fn inverse<T: Scalar>(a: &DMatrix<T>) -> Result<DMatrix<T>, LinalgError> {
    DenseLu::new(a)?.inverse()
}

// Higham (2005) Padé degrees and switching thresholds for the 1-norm.
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// e^A by scaling and squaring with a diagonal Padé approximant.
pub fn mat_exp<T: Scalar>(a: &DMatrix<T>) -> Result<DMatrix<T>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::Dimension(format!("{}x{} is not square", a.nrows(), a.ncols())));
    }
    let n = a.nrows();
    let norm = norm_1(a);
    if !norm.is_finite() {
        return Err(LinalgError::Range { norm });
    }
    let id = DMatrix::<T>::identity(n, n);
    for &(m, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            return pade_low(a, coeffs, &id);
        }
    }
    let s = if norm > THETA_13 { (norm / THETA_13).log2().ceil() as i32 } else { 0 };
    if s > 1000 {
        return Err(LinalgError::Range { norm });
    }
    let scaled = a.unscale(2f64.powi(s));
    let mut r = pade_13(&scaled, &id)?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|x| !x.modulus().is_finite()) {
        return Err(LinalgError::Range { norm });
    }
    Ok(r)
}

fn pade_low<T: Scalar>(a: &DMatrix<T>, b: &[f64], id: &DMatrix<T>) -> Result<DMatrix<T>, LinalgError> {
    let a2 = a * a;
    let mut pow = id.clone();
    let mut u = id.scale(b[1]);
    let mut v = id.scale(b[0]);
    for k in 1..b.len() / 2 {
        pow = &pow * &a2;
        u += pow.scale(b[2 * k + 1]);
        v += pow.scale(b[2 * k]);
    }
    let u = a * u;
    solve_dense(&(&v - &u), &(&v + &u))
}

fn pade_13<T: Scalar>(a: &DMatrix<T>, id: &DMatrix<T>) -> Result<DMatrix<T>, LinalgError> {
    let b = &B13;
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (a6.scale(b[13]) + a4.scale(b[11]) + a2.scale(b[9]));
    let u = a * (inner_u + a6.scale(b[7]) + a4.scale(b[5]) + a2.scale(b[3]) + id.scale(b[1]));
    let inner_v = &a6 * (a6.scale(b[12]) + a4.scale(b[10]) + a2.scale(b[8]));
    let v = inner_v + a6.scale(b[6]) + a4.scale(b[4]) + a2.scale(b[2]) + id.scale(b[0]);
    solve_dense(&(&v - &u), &(&v + &u))
}

pub fn to_complex(a: &Mat) -> CMat {
    a.map(|x| Complex64::new(x, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exp_of_zero_is_identity() {
        let e = mat_exp(&Mat::zeros(2, 2)).unwrap();
        assert_eq!(e, Mat::identity(2, 2));
    }

    #[test]
    fn exp_of_diagonal() {
        let e = mat_exp(&Mat::from_diagonal(&nalgebra::dvector![0.3, -7.5])).unwrap();
        assert_relative_eq!(e[(0, 0)], 0.3f64.exp(), max_relative = 1e-14);
        assert_relative_eq!(e[(1, 1)], (-7.5f64).exp(), max_relative = 1e-13);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn exp_of_swap() {
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let e = mat_exp(&a).unwrap();
        let (c, s) = (1f64.cosh(), 1f64.sinh());
        assert_relative_eq!(e, Mat::from_row_slice(2, 2, &[c, s, s, c]), max_relative = 1e-14);
    }

    #[test]
    fn exp_large_norm_relative_error() {
        // diag(50, -50) rotated: exact value known through the similarity
        let v = Mat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let vi = inverse(&v).unwrap();
        let a = &v * Mat::from_diagonal(&nalgebra::dvector![30.0, -20.0]) * &vi;
        let exact = &v * Mat::from_diagonal(&nalgebra::dvector![30f64.exp(), (-20f64).exp()]) * &vi;
        let e = mat_exp(&a).unwrap();
        assert!((&e - &exact).norm() / exact.norm() < 1e-12);
    }

    #[test]
    fn exp_complex_rotation() {
        let i = Complex64::new(0.0, 1.0);
        let a = CMat::from_row_slice(1, 1, &[i * 2.0]);
        let e = mat_exp(&a).unwrap();
        assert!((e[(0, 0)] - Complex64::new(2f64.cos(), 2f64.sin())).norm() < 1e-15);
    }

    #[test]
    fn exp_rejects_non_square_and_overflow() {
        assert!(matches!(mat_exp(&Mat::zeros(2, 3)), Err(LinalgError::Dimension(_))));
        let big = Mat::from_diagonal(&nalgebra::dvector![1e6, 0.0]);
        assert!(matches!(mat_exp(&big), Err(LinalgError::Range { .. })));
    }

    #[test]
    fn solve_diagonal_and_identity() {
        let a = Mat::from_diagonal(&nalgebra::dvector![2.0, 4.0]);
        let x = solve_dense(&a, &Mat::from_column_slice(2, 1, &[2.0, 4.0])).unwrap();
        assert_relative_eq!(x, Mat::from_column_slice(2, 1, &[1.0, 1.0]));
        let b = Mat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(solve_dense(&Mat::identity(2, 2), &b).unwrap(), b);
    }

    #[test]
    fn singular_names_pivot() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        match solve_dense(&a, &Mat::identity(2, 2)) {
            Err(LinalgError::Singular { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn sym_bounds_examples() {
        assert_eq!(sym_part_bounds(&Mat::identity(3, 3)).unwrap(), (1.0, 1.0));
        let skew = Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let (lo, hi) = sym_part_bounds(&skew).unwrap();
        assert!(lo.abs() < 1e-15 && hi.abs() < 1e-15);
        let (c, s) = (1.0 / 1f64.tanh(), 1.0 / 1f64.sinh());
        let g = Mat::from_row_slice(2, 2, &[c, s, s, c]);
        let (lo, hi) = sym_part_bounds(&g).unwrap();
        assert_relative_eq!(lo, c - s, epsilon = 1e-12);
        assert_relative_eq!(hi, c + s, epsilon = 1e-12);
        assert_relative_eq!(lo, 0.46211715726000974, epsilon = 1e-10);
    }

    #[test]
    fn spectral_norm_of_rank_one() {
        let a = Mat::from_row_slice(2, 2, &[3.0, 4.0, 0.0, 0.0]);
        assert_relative_eq!(spectral_norm(&a), 5.0, epsilon = 1e-14);
    }
}
