//! Metaplectic Gabor frames on the finite model: lattice handling,
//! analysis/synthesis/frame operators, frame bounds by dense Hermitian
//! eigensolve, canonical dual windows and the equivalent classical Gabor
//! systems of the shift-invertible theory.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::metop::{deformation, deformation_inv};
use crate::mwd::{atom_inv, atom_with_window, MwdError};
use crate::num::{fabs, fmax, Scalar, C};
use crate::sigrid::{grid_eq, inner, Grid, PhasePoint, Signal, SigridError};
use crate::symplin::{a_st, derived_pack, BlockSymplectic, DerivedPack, Mat, SymplinError};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum FramesError {
    #[error(transparent)]
    Symplin(#[from] SymplinError),
    #[error(transparent)]
    Sigrid(#[from] SigridError),
    #[error("{0}")]
    Mwd(String),
    #[error("lattice incompatible with the grid at point (x = {x:.17}, xi = {xi:.17}): {reason}")]
    LatticeIncompatible { x: f64, xi: f64, reason: String },
    #[error("lattice point count {got} does not match box volume / |det gen| = {expected}")]
    CountMismatch { got: usize, expected: usize },
    #[error("generator matrix must be 2d x 2d invertible")]
    BadGenerator,
    #[error("matrix is not shift-invertible")]
    NotShiftInvertible,
    #[error("window is numerically zero")]
    ZeroWindow,
    #[error("the system is not a frame (lower bound {0:.3e})")]
    NotAFrame(f64),
    #[error("frame operator would be {0} x {0}; the dense-solve guard caps at 4096")]
    TooLarge(usize),
}

impl From<MwdError> for FramesError {
    fn from(e: MwdError) -> Self {
        match e {
            MwdError::Symplin(s) => FramesError::Symplin(s),
            MwdError::Sigrid(s) => FramesError::Sigrid(s),
            MwdError::NotShiftInvertible => FramesError::NotShiftInvertible,
            other => FramesError::Mwd(other.to_string()),
        }
    }
}

// ---------------------------------------------------------------------------
// Lattice
// ---------------------------------------------------------------------------

/// A full-rank lattice `Lambda = gen . Z^{2d}` intersected with the
/// fundamental phase-space box, every point verified on the grid lattice
/// (d = 1: `gen` is 2 x 2).
#[derive(Debug, Clone)]
pub struct LatticeSpec<T: Scalar> {
    gen: Mat<T>,
    points: Vec<PhasePoint<T>>,
    grid: Grid<T>,
    redundancy: T,
}

impl<T: Scalar> LatticeSpec<T> {
    /// Enumerates `gen . Z^2` inside the box `[-T/2, T/2) x [-F/2, F/2)`
    /// and validates the point count against `n / |det gen|`.
    pub fn new(gen: Mat<T>, grid: &Grid<T>) -> Result<Self, FramesError> {
        if grid.dim_d() != 1 || gen.nrows() != 2 || gen.ncols() != 2 {
            return Err(FramesError::BadGenerator);
        }
        let det = gen.clone().lu().determinant();
        if fabs(det) <= T::fro(1e-12) {
            return Err(FramesError::BadGenerator);
        }
        let half_t = grid.extent() * T::fro(0.5);
        let half_f = grid.dual().extent() * T::fro(0.5);
        let inv = gen.clone().try_inverse().ok_or(FramesError::BadGenerator)?;
        // Conservative integer search radius from the inverse image of the
        // box corners.
        let corners = [
            (half_t, half_f),
            (half_t, -half_f),
            (-half_t, half_f),
            (-half_t, -half_f),
        ];
        let mut radius = T::zero();
        for (cx, cf) in corners {
            let i = inv[(0, 0)] * cx + inv[(0, 1)] * cf;
            let j = inv[(1, 0)] * cx + inv[(1, 1)] * cf;
            radius = fmax(radius, fmax(fabs(i), fabs(j)));
        }
        let r = radius.as_f64().ceil() as i64 + 1;
        let mut points = Vec::new();
        for i in -r..=r {
            for j in -r..=r {
                let x = gen[(0, 0)] * T::fro(i as f64) + gen[(0, 1)] * T::fro(j as f64);
                let xi = gen[(1, 0)] * T::fro(i as f64) + gen[(1, 1)] * T::fro(j as f64);
                if x >= -half_t && x < half_t && xi >= -half_f && xi < half_f {
                    points.push(PhasePoint::new(vec![x], vec![xi]));
                }
            }
        }
        // Every point must land on (grid x dual grid).
        for p in &points {
            validate_on_grid(p, grid)?;
        }
        let expected = T::fro(grid.n() as f64) / fabs(det);
        let expected_count = num_traits::Float::round(expected).as_f64() as usize;
        if fabs(expected - T::fro(expected_count as f64)) > T::fro(1e-6)
            || points.len() != expected_count
        {
            return Err(FramesError::CountMismatch {
                got: points.len(),
                expected: expected_count,
            });
        }
        points.sort_by(|a, b| {
            (a.x[0], a.xi[0])
                .partial_cmp(&(b.x[0], b.xi[0]))
                .expect("finite lattice points")
        });
        let redundancy = T::fro(points.len() as f64) / T::fro(grid.n() as f64);
        Ok(Self {
            gen,
            points,
            grid: *grid,
            redundancy,
        })
    }

    /// Separable lattice with steps `a` grid cells in time and `b` dual
    /// cells in frequency.
    pub fn separable(a: usize, b: usize, grid: &Grid<T>) -> Result<Self, FramesError> {
        if a == 0 || b == 0 {
            return Err(FramesError::BadGenerator);
        }
        let gen = Mat::<T>::from_row_slice(
            2,
            2,
            &[
                T::fro(a as f64) * grid.spacing(),
                T::zero(),
                T::zero(),
                T::fro(b as f64) * grid.dual_spacing(),
            ],
        );
        Self::new(gen, grid)
    }

    pub fn gen(&self) -> &Mat<T> {
        &self.gen
    }

    pub fn points(&self) -> &[PhasePoint<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn redundancy(&self) -> T {
        self.redundancy
    }

    /// Applies a linear map to every lattice point (multiset semantics:
    /// duplicates after torus reduction are kept), validating that each
    /// image lands on the grid. The images are reduced into the
    /// fundamental box.
    pub fn map(&self, m: &Mat<T>) -> Result<LatticeSpec<T>, FramesError> {
        let half_t = self.grid.extent() * T::fro(0.5);
        let half_f = self.grid.dual().extent() * T::fro(0.5);
        let reduce = |v: T, half: T| {
            let span = half + half;
            let r = v - num_traits::Float::floor((v + half) / span) * span;
            r
        };
        let mut points = Vec::with_capacity(self.points.len());
        for p in &self.points {
            let x = m[(0, 0)] * p.x[0] + m[(0, 1)] * p.xi[0];
            let xi = m[(1, 0)] * p.x[0] + m[(1, 1)] * p.xi[0];
            let q = PhasePoint::new(vec![reduce(x, half_t)], vec![reduce(xi, half_f)]);
            validate_on_grid(&q, &self.grid)?;
            points.push(q);
        }
        let gen = m * &self.gen;
        let redundancy = self.redundancy;
        Ok(LatticeSpec {
            gen,
            points,
            grid: self.grid,
            redundancy,
        })
    }
}

fn validate_on_grid<T: Scalar>(p: &PhasePoint<T>, grid: &Grid<T>) -> Result<(), FramesError> {
    grid.time_step(0, p.x[0]).map_err(|e| FramesError::LatticeIncompatible {
        x: p.x[0].as_f64(),
        xi: p.xi[0].as_f64(),
        reason: e.to_string(),
    })?;
    grid.freq_step(0, p.xi[0]).map_err(|e| FramesError::LatticeIncompatible {
        x: p.x[0].as_f64(),
        xi: p.xi[0].as_f64(),
        reason: e.to_string(),
    })?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Systems
// ---------------------------------------------------------------------------

/// A metaplectic Gabor system `(A, g, Lambda)` with shift-invertible `A`;
/// the classical Gabor case is `A = A_ST` (atoms are plain TF shifts).
#[derive(Debug, Clone)]
pub struct MetaplecticGaborSystem<T: Scalar> {
    matrix: BlockSymplectic<T>,
    window: Signal<T>,
    lattice: LatticeSpec<T>,
    pack: DerivedPack<T>,
    deformed: Signal<T>,
    /// Bound conversion factor surfaced for the hbar presets
    /// (`(2 pi hbar)^{-d}`), `None` otherwise.
    pub hbar_factor: Option<T>,
}

/// Frame diagnosis: extremal eigenvalues of the frame operator, condition
/// number and the full (real) spectrum.
#[derive(Debug, Clone)]
pub struct FrameReport<T: Scalar> {
    pub lower_a: T,
    pub upper_b: T,
    pub condition: T,
    pub is_frame: bool,
    pub spectrum: Vec<T>,
    pub hbar_factor: Option<T>,
}

impl<T: Scalar> MetaplecticGaborSystem<T> {
    pub fn new(
        matrix: BlockSymplectic<T>,
        window: Signal<T>,
        lattice: LatticeSpec<T>,
    ) -> Result<Self, FramesError> {
        if window.norm() <= T::fro(1e-14) {
            return Err(FramesError::ZeroWindow);
        }
        if !grid_eq(window.grid(), &lattice.grid) {
            return Err(FramesError::Sigrid(SigridError::GridMismatch));
        }
        let pack = derived_pack(&matrix);
        if !pack.shift_invertible {
            return Err(FramesError::NotShiftInvertible);
        }
        // Atom materialization: E^{-1} lambda must be on-grid for every
        // lattice point; report the first offender.
        let e_inv = pack
            .e
            .clone()
            .try_inverse()
            .ok_or(FramesError::NotShiftInvertible)?;
        for p in lattice.points() {
            let y = PhasePoint::new(
                vec![e_inv[(0, 0)] * p.x[0] + e_inv[(0, 1)] * p.xi[0]],
                vec![e_inv[(1, 0)] * p.x[0] + e_inv[(1, 1)] * p.xi[0]],
            );
            validate_on_grid(&y, window.grid()).map_err(|_| FramesError::LatticeIncompatible {
                x: p.x[0].as_f64(),
                xi: p.xi[0].as_f64(),
                reason: "E^{-1} lambda leaves the grid lattice".into(),
            })?;
        }
        let deformed = deformation(&matrix, &window).map_err(metop_err)?;
        Ok(Self {
            matrix,
            window,
            lattice,
            pack,
            deformed,
            hbar_factor: None,
        })
    }

    /// Classical Gabor system `G(g, Lambda)` as the `A_ST` special case.
    pub fn gabor(window: Signal<T>, lattice: LatticeSpec<T>) -> Result<Self, FramesError> {
        Self::new(a_st(1), window, lattice)
    }

    pub fn matrix(&self) -> &BlockSymplectic<T> {
        &self.matrix
    }

    pub fn window(&self) -> &Signal<T> {
        &self.window
    }

    pub fn lattice(&self) -> &LatticeSpec<T> {
        &self.lattice
    }

    pub fn pack(&self) -> &DerivedPack<T> {
        &self.pack
    }

    /// Deformed window `delta_A g` (equals `g` itself for `A_ST`).
    pub fn deformed_window(&self) -> &Signal<T> {
        &self.deformed
    }

    /// The atom `pi_A(lambda) g` at one lattice point.
    pub fn atom_at(&self, p: &PhasePoint<T>) -> Result<Signal<T>, FramesError> {
        let e_inv = self
            .pack
            .e
            .clone()
            .try_inverse()
            .ok_or(FramesError::NotShiftInvertible)?;
        let y = PhasePoint::new(
            vec![e_inv[(0, 0)] * p.x[0] + e_inv[(0, 1)] * p.xi[0]],
            vec![e_inv[(1, 0)] * p.x[0] + e_inv[(1, 1)] * p.xi[0]],
        );
        Ok(atom_with_window(&self.pack, &y, &self.deformed)?)
    }

    /// All atoms, in lattice order.
    pub fn atoms(&self) -> Result<Vec<Signal<T>>, FramesError> {
        self.lattice
            .points()
            .par_iter()
            .map(|p| self.atom_at(p))
            .collect()
    }

    /// Analysis (coefficient) operator: `C_A f = (<f, pi_A(lambda) g>)`.
    pub fn analysis(&self, f: &Signal<T>) -> Result<Vec<C<T>>, FramesError> {
        let atoms = self.atoms()?;
        atoms
            .par_iter()
            .map(|a| inner(f, a).map_err(FramesError::Sigrid))
            .collect()
    }

    /// Synthesis (reconstruction) operator: `D_A c = sum c_lambda
    /// pi_A(lambda) g`.
    pub fn synthesis(&self, coeffs: &[C<T>]) -> Result<Signal<T>, FramesError> {
        if coeffs.len() != self.lattice.len() {
            return Err(FramesError::CountMismatch {
                got: coeffs.len(),
                expected: self.lattice.len(),
            });
        }
        let atoms = self.atoms()?;
        let mut acc = Signal::zero(*self.window.grid());
        for (c, a) in coeffs.iter().zip(&atoms) {
            acc = acc.add(&a.scaled(*c))?;
        }
        Ok(acc)
    }

    /// Dense frame operator `S_A = D_A C_A` as an `n x n` Hermitian matrix
    /// in the grid inner product.
    pub fn frame_op(&self) -> Result<DMatrix<C<T>>, FramesError> {
        let n = self.window.grid().len();
        if n > 4096 {
            return Err(FramesError::TooLarge(n));
        }
        let atoms = self.atoms()?;
        let mut gmat = DMatrix::<C<T>>::zeros(n, self.lattice.len());
        for (col, a) in atoms.iter().enumerate() {
            for (row, v) in a.values().iter().enumerate() {
                gmat[(row, col)] = *v;
            }
        }
        let measure = self.window.grid().measure();
        let s = &gmat * gmat.adjoint() * C::new(measure, T::zero());
        Ok(s)
    }

    /// Frame bounds via a dense Hermitian eigensolve of the frame operator.
    pub fn frame_bounds(&self) -> Result<FrameReport<T>, FramesError> {
        let s = self.frame_op()?;
        let eig = nalgebra::SymmetricEigen::new(s);
        let mut spectrum: Vec<T> = eig.eigenvalues.iter().copied().collect();
        spectrum.sort_by(|a, b| a.partial_cmp(b).expect("real spectrum"));
        let lower_a = fmax(spectrum[0], T::zero());
        let upper_b = spectrum[spectrum.len() - 1];
        let is_frame = lower_a > T::fro(1e-8) * fmax(upper_b, T::fro(1e-30));
        let condition = if lower_a > T::zero() {
            upper_b / lower_a
        } else {
            T::infinity()
        };
        Ok(FrameReport {
            lower_a,
            upper_b,
            condition,
            is_frame,
            spectrum,
            hbar_factor: self.hbar_factor,
        })
    }

    /// Canonical dual window `gamma_A = delta_A^{-1} S_A^{-1} delta_A g`.
    pub fn canonical_dual(&self) -> Result<Signal<T>, FramesError> {
        let report = self.frame_bounds()?;
        if !report.is_frame {
            return Err(FramesError::NotAFrame(report.lower_a.as_f64()));
        }
        let s = self.frame_op()?;
        let u = DVector::from_column_slice(self.deformed.values());
        let v = s
            .lu()
            .solve(&u)
            .ok_or(FramesError::NotAFrame(report.lower_a.as_f64()))?;
        let vs = Signal::new(*self.window.grid(), v.iter().copied().collect())?;
        deformation_inv(&self.matrix, &vs).map_err(metop_err)
    }

    /// The two equivalent classical Gabor systems of the shift-invertible
    /// theory: `G(delta_A g, E^{-1} Lambda)` and `G(g, -Q script-E^{-1}
    /// Lambda)`, with bound scale `|det E|`: the classical bounds are
    /// `|det E|` times the metaplectic ones.
    pub fn equivalent_systems(
        &self,
    ) -> Result<(MetaplecticGaborSystem<T>, MetaplecticGaborSystem<T>, T), FramesError> {
        let d = self.matrix.dim_d();
        let e_inv = self
            .pack
            .e
            .clone()
            .try_inverse()
            .ok_or(FramesError::NotShiftInvertible)?;
        let lat1 = self.lattice.map(&e_inv)?;
        let sys1 = MetaplecticGaborSystem::gabor(self.deformed.clone(), lat1)?;
        let esc_inv = self
            .pack
            .escript
            .clone()
            .try_inverse()
            .ok_or(FramesError::NotShiftInvertible)?;
        let mq = -(crate::symplin::q_mat::<T>(d) * &esc_inv);
        let lat2 = self.lattice.map(&mq)?;
        let sys2 = MetaplecticGaborSystem::gabor(self.window.clone(), lat2)?;
        Ok((sys1, sys2, fabs(self.pack.det_e)))
    }
}

fn metop_err(e: crate::metop::MetopError) -> FramesError {
    match e {
        crate::metop::MetopError::Symplin(s) => FramesError::Symplin(s),
        crate::metop::MetopError::Sigrid(s) => FramesError::Sigrid(s),
        crate::metop::MetopError::NotShiftInvertible => FramesError::NotShiftInvertible,
        other => FramesError::Mwd(other.to_string()),
    }
}

/// hbar-Gabor system: the `A_hbar` preset with the de Gosson bound
/// conversion factor `(2 pi hbar)^{-d}` surfaced in reports.
pub fn hbar_system<T: Scalar>(
    hbar: T,
    window: Signal<T>,
    lattice: LatticeSpec<T>,
) -> Result<MetaplecticGaborSystem<T>, FramesError> {
    let a = crate::symplin::a_hbar(hbar, 1)?;
    let mut sys = MetaplecticGaborSystem::new(a, window, lattice)?;
    let tph = T::fro(2.0) * T::PI() * hbar;
    sys.hbar_factor = Some(T::one() / tph);
    Ok(sys)
}
