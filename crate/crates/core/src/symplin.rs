//! Symplectic matrix calculus: membership checks, block decompositions,
//! derived submatrices, lifts, star/conjugation constructions and the two
//! factorizations (shift-invertible and free-generator) used to realize
//! metaplectic operators numerically.
//!
//! Conventions: a symplectic matrix of half-dimension `d` is `2d x 2d` and
//! satisfies `S^T J S = J` with `J = [[0, I], [-I, 0]]`. A block-symplectic
//! matrix of parameter `d` is `4d x 4d` (symplectic of half-dimension `2d`)
//! with sixteen named `d x d` blocks `A_ij`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::num::{fabs, fmax, Scalar};

/// Dense real matrix, row-major access through nalgebra.
pub type Mat<T> = DMatrix<T>;

/// Default construction tolerance for symplectic membership (max-norm of
/// `S^T J S - J`). Tuned so that double-precision products of up to ten
/// generator factors pass comfortably; widened automatically for `f32`.
pub fn default_tolerance<T: Scalar>() -> T {
    fmax(T::fro(1e-9), T::epsilon() * T::fro(1e4))
}

/// Relative threshold on singular values below which a submatrix is treated
/// as numerically singular (shift-invertibility test, factor pivoting).
pub fn rcond_threshold<T: Scalar>() -> T {
    fmax(T::fro(1e-8), T::epsilon() * T::fro(1e5))
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SymplinError {
    #[error("matrix is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("symplectic relation {relation} violated (residual {residual:.3e} > tolerance {tolerance:.3e})")]
    NotSymplectic {
        relation: String,
        residual: f64,
        tolerance: f64,
    },
    #[error("determinant {det:.17} deviates from 1 beyond tolerance")]
    BadDeterminant { det: f64 },
    #[error("invalid generator factor: {0}")]
    InvalidFactor(String),
    #[error("matrix E_A is numerically singular: not shift-invertible")]
    NotShiftInvertible,
    #[error("matrix A is not covariant: {0}")]
    NotCovariant(String),
    #[error("free factorization failed: {0}")]
    FactorizationFailed(String),
}

// ---------------------------------------------------------------------------
// Module constants J, L, P, Q (built at half-dimension `d`, size 2d x 2d).
// ---------------------------------------------------------------------------

/// Standard skew form `J = [[0, I], [-I, 0]]` of size `2d x 2d`.
pub fn j_mat<T: Scalar>(d: usize) -> Mat<T> {
    let mut m = Mat::zeros(2 * d, 2 * d);
    for i in 0..d {
        m[(i, d + i)] = T::one();
        m[(d + i, i)] = -T::one();
    }
    m
}

/// Swap matrix `L = [[0, I], [I, 0]]` of size `2d x 2d`.
pub fn l_mat<T: Scalar>(d: usize) -> Mat<T> {
    let mut m = Mat::zeros(2 * d, 2 * d);
    for i in 0..d {
        m[(i, d + i)] = T::one();
        m[(d + i, i)] = T::one();
    }
    m
}

/// Projection `P = [[0, I], [0, 0]]` of size `2d x 2d`.
pub fn p_mat<T: Scalar>(d: usize) -> Mat<T> {
    let mut m = Mat::zeros(2 * d, 2 * d);
    for i in 0..d {
        m[(i, d + i)] = T::one();
    }
    m
}

/// Signature matrix `Q = diag(I, -I) = -L J` of size `2d x 2d`.
pub fn q_mat<T: Scalar>(d: usize) -> Mat<T> {
    let mut m = Mat::zeros(2 * d, 2 * d);
    for i in 0..d {
        m[(i, i)] = T::one();
        m[(d + i, d + i)] = -T::one();
    }
    m
}

// ---------------------------------------------------------------------------
// Small matrix helpers.
// ---------------------------------------------------------------------------

pub(crate) fn max_abs<T: Scalar>(m: &Mat<T>) -> T {
    m.iter().fold(T::zero(), |acc, &v| fmax(acc, fabs(v)))
}

pub(crate) fn max_abs_diff<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> T {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |acc, (&x, &y)| fmax(acc, fabs(x - y)))
}

fn all_finite<T: Scalar>(m: &Mat<T>) -> bool {
    m.iter().all(|v| num_traits::Float::is_finite(*v))
}

/// Extracts the `d x d` block at block position `(i, j)` (0-based).
fn sub<T: Scalar>(m: &Mat<T>, i: usize, j: usize, d: usize) -> Mat<T> {
    m.view((i * d, j * d), (d, d)).into_owned()
}

/// Assembles a square matrix from a row-major grid of equally sized blocks.
fn assemble<T: Scalar>(blocks: &[Vec<Mat<T>>]) -> Mat<T> {
    let k = blocks.len();
    let d = blocks[0][0].nrows();
    let mut m = Mat::zeros(k * d, k * d);
    for (bi, row) in blocks.iter().enumerate() {
        for (bj, blk) in row.iter().enumerate() {
            m.view_mut((bi * d, bj * d), (d, d)).copy_from(blk);
        }
    }
    m
}

fn rcond<T: Scalar>(m: &Mat<T>) -> T {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().fold(T::zero(), |a, &s| fmax(a, s));
    let smin = sv.iter().fold(smax, |a, &s| crate::num::fmin(a, s));
    if smax == T::zero() {
        T::zero()
    } else {
        smin / smax
    }
}

fn invert<T: Scalar>(m: &Mat<T>) -> Result<Mat<T>, SymplinError> {
    m.clone()
        .try_inverse()
        .ok_or(SymplinError::NotShiftInvertible)
}

fn symmetry_residual<T: Scalar>(m: &Mat<T>) -> T {
    max_abs_diff(m, &m.transpose())
}

// ---------------------------------------------------------------------------
// Symplectic membership.
// ---------------------------------------------------------------------------

/// Max-norm of `S^T J S - J`. Errors on shape mismatch; the caller compares
/// the residual against its tolerance.
pub fn check_symplectic<T: Scalar>(s: &Mat<T>, d: usize) -> Result<T, SymplinError> {
    if s.nrows() != 2 * d || s.ncols() != 2 * d {
        return Err(SymplinError::ShapeMismatch {
            rows: s.nrows(),
            cols: s.ncols(),
            expected_rows: 2 * d,
            expected_cols: 2 * d,
        });
    }
    if !all_finite(s) {
        return Err(SymplinError::NonFinite);
    }
    let j = j_mat::<T>(d);
    let res = s.transpose() * &j * s - &j;
    Ok(max_abs(&res))
}

/// A validated real symplectic matrix of half-dimension `d` (size `2d x 2d`).
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticMatrix<T: Scalar> {
    dim_d: usize,
    data: Mat<T>,
    residual: T,
}

impl<T: Scalar> SymplecticMatrix<T> {
    pub fn new(data: Mat<T>, d: usize, tol: T) -> Result<Self, SymplinError> {
        let residual = check_symplectic(&data, d)?;
        if residual > tol {
            return Err(SymplinError::NotSymplectic {
                relation: "S^T J S = J".into(),
                residual: residual.as_f64(),
                tolerance: tol.as_f64(),
            });
        }
        let det = data.clone().lu().determinant();
        if fabs(det - T::one()) > fmax(tol, T::fro(1e3) * T::epsilon() * max_abs(&data)) {
            return Err(SymplinError::BadDeterminant { det: det.as_f64() });
        }
        Ok(Self {
            dim_d: d,
            data,
            residual,
        })
    }

    pub fn with_default_tol(data: Mat<T>, d: usize) -> Result<Self, SymplinError> {
        Self::new(data, d, default_tolerance())
    }

    pub fn dim_d(&self) -> usize {
        self.dim_d
    }

    pub fn matrix(&self) -> &Mat<T> {
        &self.data
    }

    pub fn residual(&self) -> T {
        self.residual
    }

    /// The four `d x d` blocks `(A, B, C, D)` of `[[A, B], [C, D]]`.
    pub fn blocks(&self) -> (Mat<T>, Mat<T>, Mat<T>, Mat<T>) {
        let d = self.dim_d;
        (
            sub(&self.data, 0, 0, d),
            sub(&self.data, 0, 1, d),
            sub(&self.data, 1, 0, d),
            sub(&self.data, 1, 1, d),
        )
    }

    /// Exact block-formula inverse `[[D^T, -B^T], [-C^T, A^T]]`.
    pub fn inverse(&self) -> SymplecticMatrix<T> {
        let (a, b, c, dd) = self.blocks();
        let m = assemble(&[
            vec![dd.transpose(), -b.transpose()],
            vec![-c.transpose(), a.transpose()],
        ]);
        SymplecticMatrix {
            dim_d: self.dim_d,
            data: m,
            residual: self.residual,
        }
    }
}

/// Conjugated matrix `bar S = [[A, -B], [-C, D]]` (Prop. on complex
/// conjugation intertwining); an involution that preserves symplecticity.
pub fn bar<T: Scalar>(s: &SymplecticMatrix<T>) -> SymplecticMatrix<T> {
    let (a, b, c, d) = s.blocks();
    let m = assemble(&[vec![a, -b], vec![-c, d]]);
    SymplecticMatrix {
        dim_d: s.dim_d,
        data: m,
        residual: s.residual,
    }
}

// ---------------------------------------------------------------------------
// Generator factors.
// ---------------------------------------------------------------------------

/// Elementary generators of `Sp(d, R)`: the standard Fourier form `J`, the
/// dilation `D_E = [[E^-1, 0], [0, E^T]]` and the chirp pair
/// `V_C = [[I, 0], [C, I]]`, `V_C^T = [[I, C], [0, I]]`.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorFactor<T: Scalar> {
    FourierJ { d: usize },
    Dilation { e: Mat<T> },
    ChirpLower { c: Mat<T> },
    ChirpUpper { c: Mat<T> },
}

impl<T: Scalar> GeneratorFactor<T> {
    pub fn dim_d(&self) -> usize {
        match self {
            GeneratorFactor::FourierJ { d } => *d,
            GeneratorFactor::Dilation { e } => e.nrows(),
            GeneratorFactor::ChirpLower { c } | GeneratorFactor::ChirpUpper { c } => c.nrows(),
        }
    }

    pub fn validate(&self, tol: T) -> Result<(), SymplinError> {
        match self {
            GeneratorFactor::FourierJ { .. } => Ok(()),
            GeneratorFactor::Dilation { e } => {
                if e.nrows() != e.ncols() || !all_finite(e) {
                    return Err(SymplinError::InvalidFactor("dilation E must be square and finite".into()));
                }
                if rcond(e) <= rcond_threshold() {
                    return Err(SymplinError::InvalidFactor("dilation E is numerically singular".into()));
                }
                Ok(())
            }
            GeneratorFactor::ChirpLower { c } | GeneratorFactor::ChirpUpper { c } => {
                if c.nrows() != c.ncols() || !all_finite(c) {
                    return Err(SymplinError::InvalidFactor("chirp C must be square and finite".into()));
                }
                let asym = symmetry_residual(c);
                if asym > fmax(tol, T::fro(1e2) * T::epsilon() * (T::one() + max_abs(c))) {
                    return Err(SymplinError::InvalidFactor(format!(
                        "chirp C must be symmetric (asymmetry {:.3e})",
                        asym.as_f64()
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Builds the `2d x 2d` symplectic matrix of an elementary generator.
pub fn make_generator<T: Scalar>(f: &GeneratorFactor<T>) -> Result<SymplecticMatrix<T>, SymplinError> {
    f.validate(default_tolerance())?;
    let d = f.dim_d();
    let m = match f {
        GeneratorFactor::FourierJ { .. } => j_mat(d),
        GeneratorFactor::Dilation { e } => {
            let e_inv = invert(e).map_err(|_| {
                SymplinError::InvalidFactor("dilation E is numerically singular".into())
            })?;
            assemble(&[vec![e_inv, Mat::zeros(d, d)], vec![Mat::zeros(d, d), e.transpose()]])
        }
        GeneratorFactor::ChirpLower { c } => {
            let sym = (c + c.transpose()) * T::fro(0.5);
            assemble(&[vec![Mat::identity(d, d), Mat::zeros(d, d)], vec![sym, Mat::identity(d, d)]])
        }
        GeneratorFactor::ChirpUpper { c } => {
            let sym = (c + c.transpose()) * T::fro(0.5);
            assemble(&[vec![Mat::identity(d, d), sym], vec![Mat::zeros(d, d), Mat::identity(d, d)]])
        }
    };
    SymplecticMatrix::new(m, d, fmax(default_tolerance(), T::fro(32.0) * T::epsilon()))
}

// ---------------------------------------------------------------------------
// Block-symplectic matrices (4d x 4d).
// ---------------------------------------------------------------------------

const RELATION_NAMES: [&str; 10] = [
    "R1a", "R1b", "R1c", "R2a", "R2b", "R2c", "R3a", "R3b", "R3c", "R3d",
];

/// A validated `4d x 4d` symplectic matrix with named `d x d` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSymplectic<T: Scalar> {
    dim_d: usize,
    inner: SymplecticMatrix<T>,
}

impl<T: Scalar> BlockSymplectic<T> {
    pub fn new(data: Mat<T>, d: usize, tol: T) -> Result<Self, SymplinError> {
        if data.nrows() != 4 * d || data.ncols() != 4 * d {
            return Err(SymplinError::ShapeMismatch {
                rows: data.nrows(),
                cols: data.ncols(),
                expected_rows: 4 * d,
                expected_cols: 4 * d,
            });
        }
        let inner = SymplecticMatrix::new(data, 2 * d, tol)?;
        let me = Self { dim_d: d, inner };
        // Relations (R1a)-(R3d) are implied by S^T J S = J; recheck them
        // individually so violations are reported by name.
        let scale = T::one() + max_abs(me.matrix()) * max_abs(me.matrix());
        for (name, res) in me.relation_residuals() {
            if res > tol * scale {
                return Err(SymplinError::NotSymplectic {
                    relation: name.to_string(),
                    residual: res.as_f64(),
                    tolerance: (tol * scale).as_f64(),
                });
            }
        }
        Ok(me)
    }

    pub fn with_default_tol(data: Mat<T>, d: usize) -> Result<Self, SymplinError> {
        Self::new(data, d, default_tolerance())
    }

    pub fn dim_d(&self) -> usize {
        self.dim_d
    }

    pub fn matrix(&self) -> &Mat<T> {
        self.inner.matrix()
    }

    pub fn residual(&self) -> T {
        self.inner.residual()
    }

    /// The underlying symplectic matrix of half-dimension `2d`.
    pub fn as_symplectic(&self) -> &SymplecticMatrix<T> {
        &self.inner
    }

    /// Block `A_ij` with one-based indices `i, j` in `1..=4`.
    pub fn block(&self, i: usize, j: usize) -> Mat<T> {
        assert!((1..=4).contains(&i) && (1..=4).contains(&j), "block indices are 1..=4");
        sub(self.matrix(), i - 1, j - 1, self.dim_d)
    }

    /// Residuals of the ten block relations (R1a)-(R3d).
    pub fn relation_residuals(&self) -> Vec<(&'static str, T)> {
        let a = |i: usize, j: usize| self.block(i, j);
        let d = self.dim_d;
        let id = Mat::<T>::identity(d, d);
        let pairs: [Mat<T>; 10] = [
            a(1, 1).transpose() * a(3, 1) + a(2, 1).transpose() * a(4, 1)
                - (a(3, 1).transpose() * a(1, 1) + a(4, 1).transpose() * a(2, 1)),
            a(1, 1).transpose() * a(3, 2) + a(2, 1).transpose() * a(4, 2)
                - (a(3, 1).transpose() * a(1, 2) + a(4, 1).transpose() * a(2, 2)),
            a(1, 2).transpose() * a(3, 2) + a(2, 2).transpose() * a(4, 2)
                - (a(3, 2).transpose() * a(1, 2) + a(4, 2).transpose() * a(2, 2)),
            a(1, 3).transpose() * a(3, 3) + a(2, 3).transpose() * a(4, 3)
                - (a(3, 3).transpose() * a(1, 3) + a(4, 3).transpose() * a(2, 3)),
            a(1, 3).transpose() * a(3, 4) + a(2, 3).transpose() * a(4, 4)
                - (a(3, 3).transpose() * a(1, 4) + a(4, 3).transpose() * a(2, 4)),
            a(1, 4).transpose() * a(3, 4) + a(2, 4).transpose() * a(4, 4)
                - (a(3, 4).transpose() * a(1, 4) + a(4, 4).transpose() * a(2, 4)),
            a(1, 1).transpose() * a(3, 3) + a(2, 1).transpose() * a(4, 3)
                - (a(3, 1).transpose() * a(1, 3) + a(4, 1).transpose() * a(2, 3))
                - &id,
            a(1, 1).transpose() * a(3, 4) + a(2, 1).transpose() * a(4, 4)
                - (a(3, 1).transpose() * a(1, 4) + a(4, 1).transpose() * a(2, 4)),
            a(1, 2).transpose() * a(3, 3) + a(2, 2).transpose() * a(4, 3)
                - (a(3, 2).transpose() * a(1, 3) + a(4, 2).transpose() * a(2, 3)),
            a(1, 2).transpose() * a(3, 4) + a(2, 2).transpose() * a(4, 4)
                - (a(3, 2).transpose() * a(1, 4) + a(4, 2).transpose() * a(2, 4))
                - &id,
        ];
        RELATION_NAMES
            .iter()
            .zip(pairs.iter())
            .map(|(name, m)| (*name, max_abs(m)))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Derived submatrices.
// ---------------------------------------------------------------------------

/// The `2d x 2d` submatrices and flags derived from a block-symplectic `A`:
/// `E, F, script-E, script-F`, the symmetric `M = E^T F - P`, the Cohen block
/// `B`, and (when `E` is invertible) the symplectic `G = L E^-1 script-E` and
/// the deformation projection `delta = J bar(G) = -E^-1 script-E Q`.
#[derive(Debug, Clone)]
pub struct DerivedPack<T: Scalar> {
    pub e: Mat<T>,
    pub f: Mat<T>,
    pub escript: Mat<T>,
    pub fscript: Mat<T>,
    pub m: Mat<T>,
    pub b: Mat<T>,
    pub g: Option<SymplecticMatrix<T>>,
    pub delta: Option<Mat<T>>,
    pub shift_invertible: bool,
    pub covariant: bool,
    pub det_e: T,
}

impl<T: Scalar> DerivedPack<T> {
    /// `E` upper-triangular as a block matrix (its lower-left `d x d` block,
    /// i.e. `A_21`, vanishes). Required by the mixed-norm characterization
    /// when `p != q`.
    pub fn e_upper_triangular(&self) -> bool {
        let d = self.e.nrows() / 2;
        max_abs(&sub(&self.e, 1, 0, d)) <= T::fro(1e-10)
    }

    /// `E` lower-triangular as a block matrix (its upper-right block, `A_13`,
    /// vanishes). Required by the amalgam-norm characterization.
    pub fn e_lower_triangular(&self) -> bool {
        let d = self.e.nrows() / 2;
        max_abs(&sub(&self.e, 0, 1, d)) <= T::fro(1e-10)
    }
}

/// Structural covariance test: entrywise comparison against the covariant
/// block pattern, plus symmetry of `A_13` and `A_21`.
fn covariance_test<T: Scalar>(a: &BlockSymplectic<T>) -> bool {
    let d = a.dim_d();
    let tol = T::fro(1e-10);
    let id = Mat::<T>::identity(d, d);
    let zero = Mat::<T>::zeros(d, d);
    let a11 = a.block(1, 1);
    let a13 = a.block(1, 3);
    let a21 = a.block(2, 1);
    let checks = [
        max_abs_diff(&a.block(1, 2), &(&id - &a11)),
        max_abs_diff(&a.block(1, 4), &a13),
        max_abs_diff(&a.block(2, 2), &(-&a21)),
        max_abs_diff(&a.block(2, 3), &(&id - a11.transpose())),
        max_abs_diff(&a.block(2, 4), &(-a11.transpose())),
        max_abs_diff(&a.block(3, 1), &zero),
        max_abs_diff(&a.block(3, 2), &zero),
        max_abs_diff(&a.block(3, 3), &id),
        max_abs_diff(&a.block(3, 4), &id),
        max_abs_diff(&a.block(4, 1), &(-&id)),
        max_abs_diff(&a.block(4, 2), &id),
        max_abs_diff(&a.block(4, 3), &zero),
        max_abs_diff(&a.block(4, 4), &zero),
        symmetry_residual(&a13),
        symmetry_residual(&a21),
    ];
    checks.iter().all(|r| *r <= tol)
}

/// Computes the full derived pack of a block-symplectic matrix.
pub fn derived_pack<T: Scalar>(a: &BlockSymplectic<T>) -> DerivedPack<T> {
    let d = a.dim_d();
    let e = assemble(&[
        vec![a.block(1, 1), a.block(1, 3)],
        vec![a.block(2, 1), a.block(2, 3)],
    ]);
    let f = assemble(&[
        vec![a.block(3, 1), a.block(3, 3)],
        vec![a.block(4, 1), a.block(4, 3)],
    ]);
    let escript = assemble(&[
        vec![a.block(1, 2), a.block(1, 4)],
        vec![a.block(2, 2), a.block(2, 4)],
    ]);
    let fscript = assemble(&[
        vec![a.block(3, 2), a.block(3, 4)],
        vec![a.block(4, 2), a.block(4, 4)],
    ]);
    let m_raw = e.transpose() * &f - p_mat::<T>(d);
    // Symmetric by (R1a)/(R2a)/(R3a); symmetrize to keep chirps exactly valid.
    let m = (&m_raw + m_raw.transpose()) * T::fro(0.5);
    let half = T::fro(0.5);
    let id = Mat::<T>::identity(d, d);
    let b = assemble(&[
        vec![a.block(1, 3), &id * half - a.block(1, 1)],
        vec![&id * half - a.block(1, 1).transpose(), -a.block(2, 1)],
    ]);
    let det_e = e.clone().lu().determinant();
    let shift_invertible = rcond(&e) > rcond_threshold();
    let covariant = covariance_test(a);
    let (g, delta) = if shift_invertible {
        let e_inv = invert(&e).expect("rcond-checked E");
        let g_mat = l_mat::<T>(d) * &e_inv * &escript;
        let g = SymplecticMatrix::new(
            g_mat,
            d,
            fmax(default_tolerance(), T::fro(1e-6)),
        )
        .ok();
        let delta = -(&e_inv * &escript * q_mat::<T>(d));
        (g, Some(delta))
    } else {
        (None, None)
    };
    DerivedPack {
        e,
        f,
        escript,
        fscript,
        m,
        b,
        g,
        delta,
        shift_invertible,
        covariant,
        det_e,
    }
}

// ---------------------------------------------------------------------------
// Lift, star.
// ---------------------------------------------------------------------------

/// Lifts `S in Sp(d, R)` to the `4d x 4d` matrix acting as identity on the
/// first factor and as `S` on the second (the tensor-lift block layout).
pub fn lift<T: Scalar>(s: &SymplecticMatrix<T>) -> BlockSymplectic<T> {
    let d = s.dim_d();
    let (a, b, c, dd) = s.blocks();
    let id = Mat::<T>::identity(d, d);
    let z = Mat::<T>::zeros(d, d);
    let m = assemble(&[
        vec![id.clone(), z.clone(), z.clone(), z.clone()],
        vec![z.clone(), a, z.clone(), b],
        vec![z.clone(), z.clone(), id, z.clone()],
        vec![z.clone(), c, z, dd],
    ]);
    BlockSymplectic::new(m, d, fmax(default_tolerance(), s.residual() * T::fro(4.0)))
        .expect("lift of a symplectic matrix is symplectic")
}

/// The star matrix `A* = bar(A) D_L`: swaps the first and second column
/// blocks of each half and flips the sign of the off-diagonal quadrants.
pub fn star<T: Scalar>(a: &BlockSymplectic<T>) -> BlockSymplectic<T> {
    let d = a.dim_d();
    let bar4 = bar(a.as_symplectic());
    let l2 = l_mat::<T>(d);
    let z = Mat::<T>::zeros(2 * d, 2 * d);
    let dl = assemble(&[vec![l2.clone(), z.clone()], vec![z, l2]]);
    let m = bar4.matrix() * dl;
    BlockSymplectic::new(m, d, fmax(default_tolerance(), a.residual() * T::fro(4.0)))
        .expect("star of a block-symplectic matrix is symplectic")
}

// ---------------------------------------------------------------------------
// Factorizations.
// ---------------------------------------------------------------------------

/// One term of a factorization: either an elementary generator or a general
/// symplectic matrix (used for the lifted factor).
#[derive(Debug, Clone)]
pub enum FactorTerm<T: Scalar> {
    Gen(GeneratorFactor<T>),
    Full(SymplecticMatrix<T>),
}

impl<T: Scalar> FactorTerm<T> {
    pub fn matrix(&self) -> Result<Mat<T>, SymplinError> {
        match self {
            FactorTerm::Gen(g) => Ok(make_generator(g)?.matrix().clone()),
            FactorTerm::Full(s) => Ok(s.matrix().clone()),
        }
    }
}

/// Ordered factorization; `factors[0]` is the leftmost matrix of the product.
#[derive(Debug, Clone)]
pub struct Factorization<T: Scalar> {
    pub factors: Vec<FactorTerm<T>>,
    pub product_residual: T,
}

impl<T: Scalar> Factorization<T> {
    pub fn product(&self) -> Result<Mat<T>, SymplinError> {
        let mut acc: Option<Mat<T>> = None;
        for f in &self.factors {
            let m = f.matrix()?;
            acc = Some(match acc {
                None => m,
                Some(p) => p * m,
            });
        }
        acc.ok_or_else(|| SymplinError::FactorizationFailed("empty factorization".into()))
    }
}

/// Shift-invertible factorization `A = D_{E^-1} V_M V_L^T Lift(G)`.
pub fn factorize_shift_invertible<T: Scalar>(
    a: &BlockSymplectic<T>,
) -> Result<Factorization<T>, SymplinError> {
    let d = a.dim_d();
    let pack = derived_pack(a);
    if !pack.shift_invertible {
        return Err(SymplinError::NotShiftInvertible);
    }
    let g = pack.g.clone().ok_or(SymplinError::NotShiftInvertible)?;
    let e_inv = invert(&pack.e)?;
    let factors = vec![
        FactorTerm::Gen(GeneratorFactor::Dilation { e: e_inv }),
        FactorTerm::Gen(GeneratorFactor::ChirpLower { c: pack.m.clone() }),
        FactorTerm::Gen(GeneratorFactor::ChirpUpper { c: l_mat::<T>(d) }),
        FactorTerm::Full(lift(&g).as_symplectic().clone()),
    ];
    let fz = Factorization {
        factors,
        product_residual: T::zero(),
    };
    let prod = fz.product()?;
    let residual = max_abs_diff(&prod, a.matrix());
    Ok(Factorization {
        product_residual: residual,
        ..fz
    })
}

/// Free factorization of a symplectic matrix with invertible `B` block:
/// `S = V_{D B^-1} D_{B^-1} J V_{B^-1 A}`. Near-zero chirps and near-identity
/// dilations are dropped.
fn free_b_invertible<T: Scalar>(
    s: &SymplecticMatrix<T>,
) -> Result<Vec<GeneratorFactor<T>>, SymplinError> {
    let d = s.dim_d();
    let (a, b, _c, dd) = s.blocks();
    let b_inv = invert(&b)?;
    let scale = T::one() + max_abs(s.matrix());
    let drop_tol = T::fro(100.0) * T::epsilon() * scale;
    let mut out = Vec::new();
    let c1 = &dd * &b_inv;
    if max_abs(&c1) > drop_tol {
        out.push(GeneratorFactor::ChirpLower {
            c: (&c1 + c1.transpose()) * T::fro(0.5),
        });
    }
    if max_abs_diff(&b_inv, &Mat::identity(d, d)) > drop_tol {
        out.push(GeneratorFactor::Dilation { e: b_inv.clone() });
    }
    out.push(GeneratorFactor::FourierJ { d });
    let c2 = &b_inv * &a;
    if max_abs(&c2) > drop_tol {
        out.push(GeneratorFactor::ChirpLower {
            c: (&c2 + c2.transpose()) * T::fro(0.5),
        });
    }
    Ok(out)
}

/// Decomposes `S in Sp(d, R)` into at most ten elementary generator factors
/// whose ordered product reconstructs `S`.
///
/// Strategy: block-triangular matrices split as `V_{C A^-1} D_{A^-1}`; a
/// well-conditioned `B` block gives the four-factor free form; otherwise a
/// symmetric chirp `W` with `A + B W` invertible regularizes the matrix and
/// `S = [free factors of S V_W J] D_{-I} J V_{-W}`.
pub fn free_factorize<T: Scalar>(
    s: &SymplecticMatrix<T>,
) -> Result<Vec<GeneratorFactor<T>>, SymplinError> {
    let d = s.dim_d();
    let (a, b, c, _dd) = s.blocks();
    let scale = T::one() + max_abs(s.matrix());
    let zero_tol = T::fro(100.0) * T::epsilon() * scale;
    let thresh = rcond_threshold::<T>();

    if max_abs(&b) <= zero_tol && rcond(&a) > thresh {
        // S = V_{C A^-1} D_{A^-1}
        let a_inv = invert(&a)?;
        let x = &c * &a_inv;
        let mut out = Vec::new();
        if max_abs(&x) > zero_tol {
            out.push(GeneratorFactor::ChirpLower {
                c: (&x + x.transpose()) * T::fro(0.5),
            });
        }
        if max_abs_diff(&a_inv, &Mat::identity(d, d)) > zero_tol {
            out.push(GeneratorFactor::Dilation { e: a_inv });
        }
        return Ok(out);
    }

    if rcond(&b) > thresh {
        return free_b_invertible(s);
    }

    // Regularize: find symmetric W with A + B W well conditioned.
    let mut candidates: Vec<Mat<T>> = [0.0, 1.0, -1.0, 2.0, -2.0, 0.5, -0.5]
        .iter()
        .map(|w| Mat::<T>::identity(d, d) * T::fro(*w))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5157_4a00);
    for _ in 0..16 {
        let mut w = Mat::<T>::zeros(d, d);
        for i in 0..d {
            for j in 0..=i {
                let v = T::fro(rng.gen_range(-2.0..2.0));
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        candidates.push(w);
    }
    let mut best: Option<(T, Mat<T>)> = None;
    for w in candidates {
        let cand = &a + &b * &w;
        let rc = rcond(&cand);
        if best.as_ref().map(|(r, _)| rc > *r).unwrap_or(true) {
            best = Some((rc, w));
        }
        if let Some((r, _)) = &best {
            if *r > T::fro(0.05) {
                break;
            }
        }
    }
    let (rc, w) = best.expect("candidate list is nonempty");
    if rc <= thresh {
        return Err(SymplinError::FactorizationFailed(format!(
            "no regularizing chirp found (best rcond(A + B W) = {:.3e})",
            rc.as_f64()
        )));
    }
    let vw = make_generator(&GeneratorFactor::ChirpLower { c: w.clone() })?;
    let j = j_mat::<T>(d);
    let s1m = s.matrix() * vw.matrix() * &j;
    let s1 = SymplecticMatrix::new(
        s1m,
        d,
        fmax(default_tolerance(), T::fro(64.0) * T::epsilon() * scale * scale),
    )?;
    let mut out = free_b_invertible(&s1)?;
    // S = S1 (J^-1) V_{-W} and J^-1 = D_{-I} J.
    out.push(GeneratorFactor::Dilation {
        e: -Mat::<T>::identity(d, d),
    });
    out.push(GeneratorFactor::FourierJ { d });
    out.push(GeneratorFactor::ChirpLower { c: -w });
    Ok(out)
}

/// Product of a generator factor list (left-to-right order).
pub fn factor_product<T: Scalar>(
    factors: &[GeneratorFactor<T>],
    d: usize,
) -> Result<Mat<T>, SymplinError> {
    let mut acc = Mat::<T>::identity(2 * d, 2 * d);
    for f in factors {
        acc = acc * make_generator(f)?.matrix();
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Presets.
// ---------------------------------------------------------------------------

/// Named block-symplectic presets.
#[derive(Debug, Clone, PartialEq)]
pub enum Preset<T: Scalar> {
    Ast,
    Atau(T),
    Ahbar(T),
    Aft2,
    Covariant { a11: Mat<T>, a13: Mat<T>, a21: Mat<T> },
}

/// The STFT matrix `A_ST` (so that `V_g f = hat(A_ST)(f (x) bar g)`).
pub fn a_st<T: Scalar>(d: usize) -> BlockSymplectic<T> {
    let id = Mat::<T>::identity(d, d);
    let z = Mat::<T>::zeros(d, d);
    let m = assemble(&[
        vec![id.clone(), -&id, z.clone(), z.clone()],
        vec![z.clone(), z.clone(), id.clone(), id.clone()],
        vec![z.clone(), z.clone(), z.clone(), -&id],
        vec![-&id, z.clone(), z.clone(), z],
    ]);
    BlockSymplectic::with_default_tol(m, d).expect("A_ST is symplectic")
}

/// The tau-Wigner matrix `A_tau`; `tau = 0` gives the Rihaczek matrix and
/// `tau = 1` its conjugate.
pub fn a_tau<T: Scalar>(tau: T, d: usize) -> BlockSymplectic<T> {
    let id = Mat::<T>::identity(d, d);
    let z = Mat::<T>::zeros(d, d);
    let t = tau;
    let omt = T::one() - tau;
    let m = assemble(&[
        vec![&id * omt, &id * t, z.clone(), z.clone()],
        vec![z.clone(), z.clone(), &id * t, &id * (-omt)],
        vec![z.clone(), z.clone(), id.clone(), id.clone()],
        vec![-&id, id, z.clone(), z],
    ]);
    BlockSymplectic::with_default_tol(m, d).expect("A_tau is symplectic")
}

/// The de Gosson `hbar`-representation matrix `A_hbar` (`hbar > 0`).
pub fn a_hbar<T: Scalar>(hbar: T, d: usize) -> Result<BlockSymplectic<T>, SymplinError> {
    if hbar <= T::zero() {
        return Err(SymplinError::InvalidFactor("hbar must be positive".into()));
    }
    let id = Mat::<T>::identity(d, d);
    let z = Mat::<T>::zeros(d, d);
    let tph = T::fro(2.0) * T::PI() * hbar;
    let half = T::fro(0.5);
    let inv4 = T::one() / (T::fro(2.0) * tph);
    let m = assemble(&[
        vec![id.clone(), -&id, z.clone(), z.clone()],
        vec![z.clone(), z.clone(), &id * tph, &id * tph],
        vec![z.clone(), z.clone(), &id * half, &id * (-half)],
        vec![&id * (-inv4), &id * (-inv4), z.clone(), z],
    ]);
    BlockSymplectic::with_default_tol(m, d)
}

/// The partial-Fourier matrix `A_FT2` (Fourier transform in the second
/// variables); coincides with `Lift(J)`.
pub fn a_ft2<T: Scalar>(d: usize) -> BlockSymplectic<T> {
    let id = Mat::<T>::identity(d, d);
    let z = Mat::<T>::zeros(d, d);
    let m = assemble(&[
        vec![id.clone(), z.clone(), z.clone(), z.clone()],
        vec![z.clone(), z.clone(), z.clone(), id.clone()],
        vec![z.clone(), z.clone(), id.clone(), z.clone()],
        vec![z.clone(), -&id, z.clone(), z],
    ]);
    BlockSymplectic::with_default_tol(m, d).expect("A_FT2 is symplectic")
}

/// The block-symplectic matrix of the windowed transform `V_g(hat S f)`:
/// its `E` submatrix equals `S` and its atoms are
/// `pi(S^{-1} z) hat(S^{-1}) g`.
pub fn a_from_symplectic<T: Scalar>(s: &SymplecticMatrix<T>) -> BlockSymplectic<T> {
    let d = s.dim_d();
    let (a, b, c, dd) = s.blocks();
    let id = Mat::<T>::identity(d, d);
    let z = Mat::<T>::zeros(d, d);
    let m = assemble(&[
        vec![a.clone(), -&id, b.clone(), z.clone()],
        vec![c, z.clone(), dd, id.clone()],
        vec![z.clone(), z.clone(), z.clone(), -&id],
        vec![-a, z.clone(), -b, z],
    ]);
    BlockSymplectic::new(m, d, fmax(default_tolerance(), s.residual() * T::fro(8.0)))
        .expect("windowed-transform lift of a symplectic matrix is symplectic")
}

/// Covariant preset with the Cohen-class block pattern; requires symmetric
/// `A_13` and `A_21`.
pub fn covariant<T: Scalar>(
    a11: &Mat<T>,
    a13: &Mat<T>,
    a21: &Mat<T>,
    d: usize,
) -> Result<BlockSymplectic<T>, SymplinError> {
    let tol = default_tolerance::<T>();
    for (name, m) in [("A13", a13), ("A21", a21)] {
        if symmetry_residual(m) > tol {
            return Err(SymplinError::InvalidFactor(format!(
                "covariant preset requires symmetric {name}"
            )));
        }
    }
    let id = Mat::<T>::identity(d, d);
    let z = Mat::<T>::zeros(d, d);
    let m = assemble(&[
        vec![a11.clone(), &id - a11, a13.clone(), a13.clone()],
        vec![a21.clone(), -a21, &id - a11.transpose(), -a11.transpose()],
        vec![z.clone(), z.clone(), id.clone(), id.clone()],
        vec![-&id, id, z.clone(), z],
    ]);
    BlockSymplectic::with_default_tol(m, d)
}

/// Builds a preset by value.
pub fn preset<T: Scalar>(p: &Preset<T>, d: usize) -> Result<BlockSymplectic<T>, SymplinError> {
    match p {
        Preset::Ast => Ok(a_st(d)),
        Preset::Atau(t) => Ok(a_tau(*t, d)),
        Preset::Ahbar(h) => a_hbar(*h, d),
        Preset::Aft2 => Ok(a_ft2(d)),
        Preset::Covariant { a11, a13, a21 } => covariant(a11, a13, a21, d),
    }
}

// ---------------------------------------------------------------------------
// Seeded random generation (tests and the verify suites).
// ---------------------------------------------------------------------------

/// Draws `count` random elementary generator factors with entries in
/// `[-2, 2]`, symmetrizing chirps and regularizing dilations.
pub fn random_generator_factors<T: Scalar>(
    d: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<GeneratorFactor<T>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        match rng.gen_range(0..3) {
            0 => out.push(GeneratorFactor::FourierJ { d }),
            1 => {
                // Regularize: retry until comfortably invertible.
                loop {
                    let e = Mat::<T>::from_fn(d, d, |_, _| T::fro(rng.gen_range(-2.0..2.0)));
                    if rcond(&e) > T::fro(0.2) {
                        out.push(GeneratorFactor::Dilation { e });
                        break;
                    }
                }
            }
            _ => {
                let mut c = Mat::<T>::zeros(d, d);
                for i in 0..d {
                    for j in 0..=i {
                        let v = T::fro(rng.gen_range(-2.0..2.0));
                        c[(i, j)] = v;
                        c[(j, i)] = v;
                    }
                }
                if rng.gen_bool(0.5) {
                    out.push(GeneratorFactor::ChirpLower { c });
                } else {
                    out.push(GeneratorFactor::ChirpUpper { c });
                }
            }
        }
    }
    out
}

/// Random symplectic matrix: product of 3..=6 random generator factors.
pub fn random_symplectic<T: Scalar>(d: usize, rng: &mut ChaCha8Rng) -> SymplecticMatrix<T> {
    let count = rng.gen_range(3..=6);
    let factors = random_generator_factors::<T>(d, count, rng);
    let m = factor_product(&factors, d).expect("random factors are valid");
    SymplecticMatrix::new(m, d, fmax(default_tolerance(), T::fro(1e-7)))
        .expect("generator products are symplectic")
}

/// Random symplectic matrix with bounded entries (redraw until the max-norm
/// is at most `bound`). Operator-level tests use this: a matrix that
/// transports the Gaussian corpus far outside the phase-space box cannot be
/// represented faithfully on the finite grid.
pub fn random_symplectic_bounded<T: Scalar>(
    d: usize,
    bound: T,
    rng: &mut ChaCha8Rng,
) -> SymplecticMatrix<T> {
    loop {
        let s = random_symplectic::<T>(d, rng);
        if max_abs(s.matrix()) <= bound {
            return s;
        }
    }
}

/// Random block-symplectic matrix of parameter `d` (a `4d x 4d` generator
/// product); with `require_shift_invertible`, redraws until `E_A` is
/// well conditioned.
pub fn random_block_symplectic<T: Scalar>(
    d: usize,
    require_shift_invertible: bool,
    rng: &mut ChaCha8Rng,
) -> BlockSymplectic<T> {
    loop {
        let s = random_symplectic::<T>(2 * d, rng);
        let a = BlockSymplectic::new(
            s.matrix().clone(),
            d,
            fmax(default_tolerance(), T::fro(1e-7)),
        )
        .expect("underlying matrix is symplectic");
        if !require_shift_invertible {
            return a;
        }
        let pack = derived_pack(&a);
        if pack.shift_invertible && rcond(&pack.e) > T::fro(1e-3) {
            return a;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    type M = Mat<f64>;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(2024)
    }

    #[test]
    fn j_is_symplectic_with_zero_residual() {
        let j = j_mat::<f64>(1);
        assert_eq!(check_symplectic(&j, 1).unwrap(), 0.0);
        let j2 = j_mat::<f64>(3);
        assert_eq!(check_symplectic(&j2, 3).unwrap(), 0.0);
    }

    #[test]
    fn a_st_is_symplectic() {
        let a = a_st::<f64>(1);
        assert!(a.residual() < 1e-12);
        for (_, r) in a.relation_residuals() {
            assert!(r < 1e-12);
        }
    }

    #[test]
    fn perturbed_j_fails() {
        // Perturbing the (1,1) entry of J keeps it exactly symplectic: the
        // first-order terms of (J + eps E)^T J (J + eps E) cancel and the
        // second-order term vanishes because J has zero diagonal. The
        // detectable perturbation sits on an off-diagonal entry.
        let mut j = j_mat::<f64>(1);
        j[(0, 0)] += 1e-3;
        assert_eq!(check_symplectic(&j, 1).unwrap(), 0.0);

        let mut j = j_mat::<f64>(1);
        j[(0, 1)] += 1e-3;
        // Oracle: direct multiply of the perturbed matrix.
        let jj = j_mat::<f64>(1);
        let res = j.transpose() * &jj * &j - &jj;
        let direct = max_abs(&res);
        let reported = check_symplectic(&j, 1).unwrap();
        assert_abs_diff_eq!(reported, direct, epsilon = 1e-15);
        assert!(reported >= 1e-3 * (1.0 - 1e-9));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let m = M::identity(3, 3);
        assert!(matches!(
            check_symplectic(&m, 1),
            Err(SymplinError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn generators_match_definitions() {
        // Dilation(I) and ChirpLower(0) are identities.
        let id = make_generator(&GeneratorFactor::Dilation { e: M::identity(1, 1) }).unwrap();
        assert_eq!(max_abs_diff(id.matrix(), &M::identity(2, 2)), 0.0);
        let id2 = make_generator(&GeneratorFactor::ChirpLower { c: M::zeros(1, 1) }).unwrap();
        assert_eq!(max_abs_diff(id2.matrix(), &M::identity(2, 2)), 0.0);
        // D_{2I} = diag(1/2, 2) in dimension one.
        let dil = make_generator(&GeneratorFactor::Dilation {
            e: M::identity(1, 1) * 2.0,
        })
        .unwrap();
        let expected = M::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]);
        assert!(max_abs_diff(dil.matrix(), &expected) < 1e-15);
    }

    #[test]
    fn invalid_factors_are_rejected() {
        let bad_chirp = GeneratorFactor::ChirpLower {
            c: M::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        };
        assert!(make_generator(&bad_chirp).is_err());
        let singular = GeneratorFactor::Dilation { e: M::zeros(2, 2) };
        assert!(make_generator(&singular).is_err());
    }

    #[test]
    fn derived_pack_of_a_st() {
        let a = a_st::<f64>(1);
        let pack = derived_pack(&a);
        assert!(pack.shift_invertible);
        assert!(!pack.covariant);
        assert_eq!(max_abs_diff(&pack.e, &M::identity(2, 2)), 0.0);
        // Oracle: M = E^T F - P by explicit multiply gives -L.
        let explicit = pack.e.transpose() * &pack.f - p_mat::<f64>(1);
        assert!(max_abs_diff(&pack.m, &explicit) < 1e-15);
        assert!(max_abs_diff(&pack.m, &(-l_mat::<f64>(1))) < 1e-15);
        assert_abs_diff_eq!(pack.det_e, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn derived_pack_of_a_hbar() {
        let hbar = 0.5 / std::f64::consts::PI; // 2*pi*hbar = 1
        let a = a_hbar::<f64>(hbar, 1).unwrap();
        let pack = derived_pack(&a);
        let tph = 2.0 * std::f64::consts::PI * hbar;
        let expected = M::from_row_slice(2, 2, &[1.0, 0.0, 0.0, tph]);
        assert!(max_abs_diff(&pack.e, &expected) < 1e-14);
    }

    #[test]
    fn a_tau_det_e_matches_closed_form() {
        for tau in [0.25, 0.5, 0.75] {
            let a = a_tau::<f64>(tau, 1);
            let pack = derived_pack(&a);
            let lhs = pack.det_e.abs().powf(-0.5);
            let rhs = (tau * (1.0 - tau)).powf(-0.5);
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn a_tau_zero_is_not_shift_invertible() {
        let a = a_tau::<f64>(0.0, 1);
        let pack = derived_pack(&a);
        assert!(!pack.shift_invertible);
        assert!(pack.g.is_none() && pack.delta.is_none());
    }

    #[test]
    fn covariance_pattern() {
        // a_tau family is covariant for every tau; a_st is not.
        for tau in [0.0, 0.25, 0.5, 1.0] {
            assert!(derived_pack(&a_tau::<f64>(tau, 1)).covariant, "tau = {tau}");
        }
        assert!(!derived_pack(&a_st::<f64>(1)).covariant);
        // covariant(A11 = I/2, 0, 0) equals a_tau(1/2) entrywise.
        let half = M::identity(1, 1) * 0.5;
        let z = M::zeros(1, 1);
        let c = covariant(&half, &z, &z, 1).unwrap();
        assert!(max_abs_diff(c.matrix(), a_tau::<f64>(0.5, 1).matrix()) < 1e-15);
    }

    #[test]
    fn covariant_rejects_asymmetric_blocks() {
        let a11 = M::identity(2, 2) * 0.5;
        let bad = M::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let z = M::zeros(2, 2);
        assert!(covariant(&a11, &bad, &z, 2).is_err());
    }

    #[test]
    fn lift_places_blocks() {
        let s = SymplecticMatrix::with_default_tol(j_mat::<f64>(1), 1).unwrap();
        let l = lift(&s);
        // A2 = D2 = 0, B2 = 1, C2 = -1 in the lift layout; equals A_FT2.
        assert_eq!(l.block(2, 2)[(0, 0)], 0.0);
        assert_eq!(l.block(4, 4)[(0, 0)], 0.0);
        assert_eq!(l.block(2, 4)[(0, 0)], 1.0);
        assert_eq!(l.block(4, 2)[(0, 0)], -1.0);
        assert_eq!(max_abs_diff(l.matrix(), a_ft2::<f64>(1).matrix()), 0.0);
        // Lift(I) = I.
        let i = SymplecticMatrix::with_default_tol(M::identity(2, 2), 1).unwrap();
        assert_eq!(max_abs_diff(lift(&i).matrix(), &M::identity(4, 4)), 0.0);
    }

    #[test]
    fn lift_of_random_products_is_symplectic() {
        let mut r = rng();
        for _ in 0..20 {
            let s = random_symplectic::<f64>(1, &mut r);
            let l = lift(&s);
            assert!(check_symplectic(l.matrix(), 2).unwrap() < 1e-10);
        }
    }

    #[test]
    fn bar_involution_and_signs() {
        let i = SymplecticMatrix::with_default_tol(M::identity(2, 2), 1).unwrap();
        assert_eq!(max_abs_diff(bar(&i).matrix(), &M::identity(2, 2)), 0.0);
        let j = SymplecticMatrix::with_default_tol(j_mat::<f64>(1), 1).unwrap();
        assert_eq!(max_abs_diff(bar(&j).matrix(), &(-j_mat::<f64>(1))), 0.0);
        let mut r = rng();
        for _ in 0..10 {
            let s = random_symplectic::<f64>(2, &mut r);
            assert!(max_abs_diff(bar(&bar(&s)).matrix(), s.matrix()) < 1e-15);
        }
    }

    #[test]
    fn star_matches_explicit_product_and_is_involutive() {
        let mut r = rng();
        for _ in 0..10 {
            let a = random_block_symplectic::<f64>(1, false, &mut r);
            // Oracle: bar(A) * D_L computed explicitly, twice.
            let dl = {
                let l2 = l_mat::<f64>(1);
                let z = M::zeros(2, 2);
                assemble(&[vec![l2.clone(), z.clone()], vec![z, l2]])
            };
            let once = bar(a.as_symplectic()).matrix() * &dl;
            assert!(max_abs_diff(star(&a).matrix(), &once) < 1e-12);
            let back = star(&star(&a));
            assert!(max_abs_diff(back.matrix(), a.matrix()) < 1e-12);
            assert!(check_symplectic(star(&a).matrix(), 2).unwrap() < 1e-10);
        }
    }

    #[test]
    fn star_of_covariant_flips_b() {
        let a = a_tau::<f64>(0.5, 1);
        let st = star(&a);
        let pa = derived_pack(&a);
        let ps = derived_pack(&st);
        assert!(ps.covariant);
        assert!(max_abs_diff(&ps.b, &(-&pa.b)) < 1e-12);
        // Also exercise a covariant preset with nonzero blocks.
        let a11 = M::identity(1, 1) * 0.3;
        let a13 = M::identity(1, 1) * 0.2;
        let a21 = M::identity(1, 1) * (-0.4);
        let c = covariant(&a11, &a13, &a21, 1).unwrap();
        let pc = derived_pack(&c);
        let pcs = derived_pack(&star(&c));
        assert!(pcs.covariant);
        assert!(max_abs_diff(&pcs.b, &(-&pc.b)) < 1e-12);
    }

    #[test]
    fn factorization_reconstructs_presets() {
        for a in [a_st::<f64>(1), a_tau::<f64>(0.5, 1), a_tau::<f64>(0.25, 1)] {
            let f = factorize_shift_invertible(&a).unwrap();
            assert!(f.product_residual < 1e-10, "residual {}", f.product_residual);
            assert_eq!(f.factors.len(), 4);
        }
    }

    #[test]
    fn factorization_identity_like_case() {
        // A = V_L^T Lift(G) has E = I and M = 0, so the dilation and lower
        // chirp factors come out as identities.
        let mut r = rng();
        let g = random_symplectic::<f64>(1, &mut r);
        let vlt = make_generator(&GeneratorFactor::ChirpUpper { c: l_mat::<f64>(1) }).unwrap();
        let m = vlt.matrix() * lift(&g).matrix();
        let a = BlockSymplectic::new(m, 1, 1e-7).unwrap();
        let pack = derived_pack(&a);
        assert!(max_abs_diff(&pack.e, &M::identity(2, 2)) < 1e-12);
        assert!(max_abs(&pack.m) < 1e-12);
        assert!(max_abs_diff(pack.g.as_ref().unwrap().matrix(), g.matrix()) < 1e-10);
        let f = factorize_shift_invertible(&a).unwrap();
        assert!(f.product_residual < 1e-10);
        match (&f.factors[0], &f.factors[1]) {
            (FactorTerm::Gen(GeneratorFactor::Dilation { e }), FactorTerm::Gen(GeneratorFactor::ChirpLower { c })) => {
                assert!(max_abs_diff(e, &M::identity(2, 2)) < 1e-10);
                assert!(max_abs(c) < 1e-10);
            }
            _ => panic!("unexpected factor kinds"),
        }
    }

    #[test]
    fn factorization_requires_shift_invertibility() {
        let a = a_tau::<f64>(0.0, 1);
        assert!(matches!(
            factorize_shift_invertible(&a),
            Err(SymplinError::NotShiftInvertible)
        ));
    }

    #[test]
    fn free_factorize_elementary_cases() {
        let e = M::from_row_slice(1, 1, &[1.7]);
        let dil = make_generator(&GeneratorFactor::Dilation { e: e.clone() }).unwrap();
        let fs = free_factorize(&dil).unwrap();
        assert_eq!(fs.len(), 1);
        match &fs[0] {
            GeneratorFactor::Dilation { e: got } => assert!(max_abs_diff(got, &e) < 1e-12),
            other => panic!("expected a single dilation, got {other:?}"),
        }

        let j = SymplecticMatrix::with_default_tol(j_mat::<f64>(1), 1).unwrap();
        let fs = free_factorize(&j).unwrap();
        assert_eq!(fs.len(), 1);
        assert!(matches!(fs[0], GeneratorFactor::FourierJ { .. }));

        let i = SymplecticMatrix::with_default_tol(M::identity(4, 4), 2).unwrap();
        assert!(free_factorize(&i).unwrap().is_empty());
    }

    #[test]
    fn free_factorize_reconstructs_random_products() {
        let mut r = rng();
        for d in [1usize, 2] {
            for _ in 0..25 {
                let s = random_symplectic::<f64>(d, &mut r);
                let fs = free_factorize(&s).unwrap();
                assert!(fs.len() <= 10);
                let prod = factor_product(&fs, d).unwrap();
                let res = max_abs_diff(&prod, s.matrix());
                let scale = 1.0 + max_abs(s.matrix());
                assert!(res / scale < 1e-10, "relative residual {}", res / scale);
            }
        }
    }

    #[test]
    fn free_factorize_handles_singular_b() {
        // V_C has B = 0; A_tau(1/2)'s underlying 4x4 has singular nonzero B.
        let vc = make_generator(&GeneratorFactor::ChirpLower {
            c: M::from_row_slice(1, 1, &[1.5]),
        })
        .unwrap();
        let fs = free_factorize(&vc).unwrap();
        assert_eq!(fs.len(), 1);
        let tau = a_tau::<f64>(0.5, 1);
        let fs = free_factorize(tau.as_symplectic()).unwrap();
        let prod = factor_product(&fs, 2).unwrap();
        assert!(max_abs_diff(&prod, tau.matrix()) < 1e-11);
    }

    #[test]
    fn inverse_formula() {
        let mut r = rng();
        for _ in 0..10 {
            let s = random_symplectic::<f64>(2, &mut r);
            let inv = s.inverse();
            let prod = s.matrix() * inv.matrix();
            assert!(max_abs_diff(&prod, &M::identity(4, 4)) < 1e-10);
        }
    }

    #[test]
    fn lemma_identities_on_random_shift_invertible() {
        let mut r = rng();
        for _ in 0..15 {
            let a = random_block_symplectic::<f64>(1, true, &mut r);
            let pack = derived_pack(&a);
            let e_inv = pack.e.clone().try_inverse().unwrap();
            // (i) script-F = E^-T F^T script-E
            let rhs = e_inv.transpose() * pack.f.transpose() * &pack.escript;
            let scale = 1.0 + max_abs(&pack.fscript);
            assert!(max_abs_diff(&pack.fscript, &rhs) / scale < 1e-8);
            // (ii) G symplectic
            let g = pack.g.as_ref().unwrap();
            assert!(check_symplectic(g.matrix(), 1).unwrap() < 1e-8);
            // (iii) det(script-E) = (-1)^d det(E)
            let det_esc = pack.escript.clone().lu().determinant();
            assert_abs_diff_eq!(det_esc, -pack.det_e, epsilon = 1e-8 * pack.det_e.abs().max(1.0));
            // delta = J bar(G) = -E^-1 script-E Q
            let jbg = j_mat::<f64>(1) * bar(g).matrix();
            assert!(max_abs_diff(&jbg, pack.delta.as_ref().unwrap()) < 1e-8 * scale);
        }
    }

    #[test]
    fn block_error_names_relation() {
        // Corrupt A_ST so the symplectic form fails; the constructor names
        // the violated identity.
        let mut m = a_st::<f64>(1).matrix().clone();
        m[(0, 2)] += 0.5;
        let err = BlockSymplectic::new(m, 1, 1e-9).unwrap_err();
        match err {
            SymplinError::NotSymplectic { relation, .. } => {
                assert!(!relation.is_empty());
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn triangular_flags() {
        let pack = derived_pack(&a_hbar::<f64>(0.5, 1).unwrap());
        assert!(pack.e_upper_triangular());
        assert!(pack.e_lower_triangular());
    }

    #[test]
    fn generic_scalar_f32_smoke() {
        let a = a_st::<f32>(1);
        let pack = derived_pack(&a);
        assert!(pack.shift_invertible);
        let f = factorize_shift_invertible(&a).unwrap();
        assert!(f.product_residual < 1e-4);
    }
}
