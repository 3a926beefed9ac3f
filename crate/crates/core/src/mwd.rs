//! Metaplectic Wigner distributions on the phase-space grid: the reference
//! tensor path, the fast shift-invertible STFT path, closed forms (STFT,
//! tau-Wigner, Rihaczek, hbar-representation), metaplectic atoms with
//! inverse/adjoint, the inversion formula, covariance shifts and the
//! Cohen-class kernel.
//!
//! Every cross-path comparison first aligns one global unimodular constant
//! (operators are realized up to a sign/phase) and then measures the
//! max-norm deviation.

use rayon::prelude::*;
use thiserror::Error;

use crate::metop::{apply_2d, deformation, deformation_inv, tensor, MetopError};
use crate::num::{align_phase, cis, fabs, fmax, Scalar, C};
use crate::sigrid::{
    cdft, gaussian, grid_eq, hermite, icdft, inner, tf_shift, Grid, PhasePoint, Signal,
    SigridError,
};
use crate::symplin::{
    derived_pack, l_mat, q_mat, star, BlockSymplectic, DerivedPack, Mat, SymplinError,
};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum MwdError {
    #[error(transparent)]
    Symplin(#[from] SymplinError),
    #[error(transparent)]
    Sigrid(#[from] SigridError),
    #[error("operator application failed: {0}")]
    Metop(String),
    #[error("matrix is not shift-invertible; use the reference tensor path")]
    NotShiftInvertible,
    #[error("matrix is not covariant")]
    NotCovariant,
    #[error("tau = {0} is not grid-compatible (no small rational p/q matches)")]
    IncompatibleTau(f64),
    #[error("hbar = {0} is not grid-compatible (2 pi hbar must be 1/m for small integer m)")]
    IncompatibleHbar(f64),
    #[error("windows are numerically orthogonal: <gamma, g> = {0:.3e}")]
    NearOrthogonalWindows(f64),
    #[error("the tensor path requires a self-dual grid (n = T^2)")]
    NotSelfDual,
    #[error("fields are incompatible (grid or warp mismatch)")]
    FieldMismatch,
}

fn lift_metop(e: MetopError) -> MwdError {
    match e {
        MetopError::Symplin(s) => MwdError::Symplin(s),
        MetopError::Sigrid(s) => MwdError::Sigrid(s),
        MetopError::NotShiftInvertible => MwdError::NotShiftInvertible,
        other => MwdError::Metop(other.to_string()),
    }
}

// ---------------------------------------------------------------------------
// WignerField
// ---------------------------------------------------------------------------

/// Complex samples of `W_A(f, g)` over the phase-space grid. Row index `k`
/// runs over the time axis, column index `j` over the frequency axis. When
/// `warp` is present the field's node set is `warp * (x_k, xi_j)` (the fast
/// path stores warped nodes instead of interpolating back).
#[derive(Debug, Clone)]
pub struct WignerField<T: Scalar> {
    grid_x: Grid<T>,
    grid_xi: Grid<T>,
    values: Vec<C<T>>,
    warp: Option<Mat<T>>,
    pub matrix_label: String,
    pub window_labels: (String, String),
}

impl<T: Scalar> WignerField<T> {
    pub fn new(
        grid_x: Grid<T>,
        values: Vec<C<T>>,
        warp: Option<Mat<T>>,
    ) -> Result<Self, MwdError> {
        let n = grid_x.n();
        if values.len() != n * n || grid_x.dim_d() != 1 {
            return Err(MwdError::FieldMismatch);
        }
        Ok(Self {
            grid_xi: grid_x.dual(),
            grid_x,
            values,
            warp,
            matrix_label: String::new(),
            window_labels: (String::new(), String::new()),
        })
    }

    pub fn n(&self) -> usize {
        self.grid_x.n()
    }

    pub fn grid_x(&self) -> &Grid<T> {
        &self.grid_x
    }

    pub fn grid_xi(&self) -> &Grid<T> {
        &self.grid_xi
    }

    pub fn values(&self) -> &[C<T>] {
        &self.values
    }

    pub fn warp(&self) -> Option<&Mat<T>> {
        self.warp.as_ref()
    }

    pub fn value(&self, k: usize, j: usize) -> C<T> {
        self.values[k * self.n() + j]
    }

    /// Phase-space node of entry `(k, j)`, warped when applicable.
    pub fn node(&self, k: usize, j: usize) -> PhasePoint<T> {
        let base = [self.grid_x.x(k), self.grid_xi.x(j)];
        match &self.warp {
            None => PhasePoint::new(vec![base[0]], vec![base[1]]),
            Some(e) => PhasePoint::new(
                vec![e[(0, 0)] * base[0] + e[(0, 1)] * base[1]],
                vec![e[(1, 0)] * base[0] + e[(1, 1)] * base[1]],
            ),
        }
    }

    /// Phase-space cell measure (|det warp| times the plain cell).
    pub fn cell(&self) -> T {
        let base = self.grid_x.spacing() * self.grid_xi.spacing();
        match &self.warp {
            None => base,
            Some(e) => fabs(e.clone().lu().determinant()) * base,
        }
    }

    pub fn norm(&self) -> T {
        let s = self
            .values
            .iter()
            .map(|v| v.norm_sqr())
            .fold(T::zero(), |a, b| a + b);
        num_traits::Float::sqrt(s * self.cell())
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |a, v| fmax(a, v.norm()))
    }

    pub fn scaled(&self, c: C<T>) -> WignerField<T> {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v *= c;
        }
        out
    }

    /// Reinterprets the field as a two-dimensional signal on the self-dual
    /// grid (plain fields only).
    pub fn as_signal(&self) -> Result<Signal<T>, MwdError> {
        if self.warp.is_some() || !self.grid_x.is_self_dual() {
            return Err(MwdError::FieldMismatch);
        }
        let g2 = Grid::new(2, self.grid_x.n(), self.grid_x.extent()).map_err(MwdError::Sigrid)?;
        Ok(Signal::new(g2, self.values.clone()).map_err(MwdError::Sigrid)?)
    }

    fn from_signal2(sig: &Signal<T>, warp: Option<Mat<T>>) -> Result<Self, MwdError> {
        let g = sig.grid();
        if g.dim_d() != 2 {
            return Err(MwdError::FieldMismatch);
        }
        let g1 = Grid::new(1, g.n(), g.extent()).map_err(MwdError::Sigrid)?;
        WignerField::new(g1, sig.values().to_vec(), warp)
    }
}

/// Phase-space inner product of two fields on identical node sets.
pub fn field_inner<T: Scalar>(a: &WignerField<T>, b: &WignerField<T>) -> Result<C<T>, MwdError> {
    if a.n() != b.n() || !grid_eq(&a.grid_x, &b.grid_x) {
        return Err(MwdError::FieldMismatch);
    }
    match (&a.warp, &b.warp) {
        (None, None) => {}
        (Some(wa), Some(wb)) => {
            if crate::symplin::max_abs_diff(wa, wb) > T::fro(1e-10) {
                return Err(MwdError::FieldMismatch);
            }
        }
        _ => return Err(MwdError::FieldMismatch),
    }
    let mut acc = C::new(T::zero(), T::zero());
    for (x, y) in a.values.iter().zip(&b.values) {
        acc += x * y.conj();
    }
    Ok(acc * a.cell())
}

/// Max deviation between two fields on identical node layouts after one
/// global phase alignment.
pub fn field_aligned_max_diff<T: Scalar>(a: &WignerField<T>, b: &WignerField<T>) -> T {
    crate::num::aligned_max_diff(&a.values, &b.values)
}

/// Index pairs `(flat_a, flat_b)` at which the node sets of `a` (possibly
/// warped) and `b` (plain) coincide.
pub fn common_nodes<T: Scalar>(a: &WignerField<T>, b: &WignerField<T>) -> Vec<(usize, usize)> {
    assert!(b.warp.is_none(), "comparison target must be a plain field");
    let n = a.n();
    let dx = b.grid_x.spacing();
    let dxi = b.grid_xi.spacing();
    let half = T::fro(n as f64 / 2.0);
    let tol = T::fro(1e-9);
    let mut out = Vec::new();
    for k in 0..n {
        for j in 0..n {
            let z = a.node(k, j);
            let px = z.x[0] / dx + half;
            let pj = z.xi[0] / dxi + half;
            let rx = num_traits::Float::round(px);
            let rj = num_traits::Float::round(pj);
            if fabs(px - rx) > tol * fmax(T::one(), fabs(px))
                || fabs(pj - rj) > tol * fmax(T::one(), fabs(pj))
            {
                continue;
            }
            let (ki, ji) = (rx.as_f64() as i64, rj.as_f64() as i64);
            if ki < 0 || ki >= n as i64 || ji < 0 || ji >= n as i64 {
                continue;
            }
            out.push((k * n + j, ki as usize * n + ji as usize));
        }
    }
    out
}

/// Max deviation over common nodes after one global phase alignment.
pub fn aligned_max_diff_on_common<T: Scalar>(
    a: &WignerField<T>,
    b: &WignerField<T>,
) -> Result<T, MwdError> {
    let pairs = common_nodes(a, b);
    if pairs.is_empty() {
        return Err(MwdError::FieldMismatch);
    }
    let av: Vec<C<T>> = pairs.iter().map(|&(i, _)| a.values[i]).collect();
    let bv: Vec<C<T>> = pairs.iter().map(|&(_, i)| b.values[i]).collect();
    Ok(crate::num::aligned_max_diff(&av, &bv))
}

// ---------------------------------------------------------------------------
// Reference and STFT paths
// ---------------------------------------------------------------------------

/// Reference path `W_A(f, g) = hat A (f (x) bar g)` through the tensor and
/// the 2d-dimensional operator; defined up to a global unimodular constant.
pub fn wigner_ref<T: Scalar>(
    a: &BlockSymplectic<T>,
    f: &Signal<T>,
    g: &Signal<T>,
) -> Result<WignerField<T>, MwdError> {
    if !f.grid().is_self_dual() {
        return Err(MwdError::NotSelfDual);
    }
    let t = tensor(f, g).map_err(lift_metop)?;
    let w = apply_2d(a, &t).map_err(lift_metop)?;
    WignerField::from_signal2(&w, None)
}

/// Short-time Fourier transform `V_g f(x_k, xi_j) = <f, pi(x_k, xi_j) g>`,
/// evaluated row-by-row with FFT acceleration over the frequency axis.
pub fn stft<T: Scalar>(f: &Signal<T>, g: &Signal<T>) -> Result<WignerField<T>, MwdError> {
    if !grid_eq(f.grid(), g.grid()) {
        return Err(MwdError::Sigrid(SigridError::GridMismatch));
    }
    let grid = *f.grid();
    let n = grid.n();
    let rows: Vec<Vec<C<T>>> = (0..n)
        .into_par_iter()
        .map(|k| {
            // h(t) = f(t) conj(g(t - x_k)) with circular translation.
            let shift = k as i64 - n as i64 / 2;
            let mut h = Vec::with_capacity(n);
            for m in 0..n {
                let src = (m as i64 - shift).rem_euclid(n as i64) as usize;
                h.push(f.values()[m] * g.values()[src].conj());
            }
            let hs = Signal::new(grid, h).expect("finite row");
            cdft(&hs).into_values()
        })
        .collect();
    let mut values = Vec::with_capacity(n * n);
    for row in rows {
        values.extend(row);
    }
    WignerField::new(grid, values, None)
}

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

fn rational_approx<T: Scalar>(x: T, max_q: usize) -> Option<(i64, i64)> {
    for q in 1..=max_q {
        let p = num_traits::Float::round(x * T::fro(q as f64));
        if fabs(x * T::fro(q as f64) - p) < T::fro(1e-12) * T::fro(q as f64) {
            return Some((p.as_f64() as i64, q as i64));
        }
    }
    None
}

/// tau-Wigner distribution by direct quadrature of the defining integral on
/// a q-refined grid (tau = p/q); endpoints dispatch to the Rihaczek forms.
pub fn tau_wigner<T: Scalar>(
    tau: T,
    f: &Signal<T>,
    g: &Signal<T>,
) -> Result<WignerField<T>, MwdError> {
    if tau < T::zero() || tau > T::one() {
        return Err(MwdError::IncompatibleTau(tau.as_f64()));
    }
    if fabs(tau) < T::fro(1e-14) {
        return rihaczek(f, g);
    }
    if fabs(tau - T::one()) < T::fro(1e-14) {
        return conj_rihaczek(f, g);
    }
    if !grid_eq(f.grid(), g.grid()) {
        return Err(MwdError::Sigrid(SigridError::GridMismatch));
    }
    let (p, q) = rational_approx(tau, 64).ok_or(MwdError::IncompatibleTau(tau.as_f64()))?;
    let grid = *f.grid();
    let n = grid.n() as i64;
    let qn = q * n;
    let ff = upsample_trig(f, q as usize);
    let gf = upsample_trig(g, q as usize);
    let rows: Vec<Vec<C<T>>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut h = Vec::with_capacity(n as usize);
            for m in 0..n {
                // fine indices of x_k + tau t_m and x_k - (1 - tau) t_m
                let base = q * (k - n / 2);
                let fi = (base + p * (m - n / 2) + qn / 2).rem_euclid(qn) as usize;
                let gi = (base - (q - p) * (m - n / 2) + qn / 2).rem_euclid(qn) as usize;
                h.push(ff[fi] * gf[gi].conj());
            }
            let hs = Signal::new(grid, h).expect("finite row");
            cdft(&hs).into_values()
        })
        .collect();
    let mut values = Vec::with_capacity((n * n) as usize);
    for row in rows {
        values.extend(row);
    }
    WignerField::new(grid, values, None)
}

/// Band-limited upsampling of a 1-d signal to the q-refined grid.
fn upsample_trig<T: Scalar>(f: &Signal<T>, q: usize) -> Vec<C<T>> {
    let grid = *f.grid();
    let n = grid.n();
    let spectrum = cdft(f);
    let inv_t = grid.dual_spacing();
    let fine_spacing = grid.spacing() / T::fro(q as f64);
    let qn = q * n;
    (0..qn)
        .into_par_iter()
        .map(|m| {
            let s = (T::fro(m as f64) - T::fro(qn as f64 / 2.0)) * fine_spacing;
            let mut acc = C::new(T::zero(), T::zero());
            for j in 0..n {
                acc += spectrum.values()[j] * cis(T::fro(2.0) * T::PI() * grid.xi(j) * s);
            }
            acc * inv_t
        })
        .collect()
}

/// Rihaczek distribution `W_0(f, g)(x, xi) = f(x) conj(g_hat(xi))
/// e^{-2 pi i xi x}` (pointwise closed form).
pub fn rihaczek<T: Scalar>(f: &Signal<T>, g: &Signal<T>) -> Result<WignerField<T>, MwdError> {
    if !grid_eq(f.grid(), g.grid()) {
        return Err(MwdError::Sigrid(SigridError::GridMismatch));
    }
    let grid = *f.grid();
    let n = grid.n();
    let ghat = cdft(g);
    let dual = grid.dual();
    let mut values = Vec::with_capacity(n * n);
    for k in 0..n {
        for j in 0..n {
            let phase = cis(-T::fro(2.0) * T::PI() * dual.x(j) * grid.x(k));
            values.push(f.values()[k] * ghat.values()[j].conj() * phase);
        }
    }
    WignerField::new(grid, values, None)
}

/// Conjugate Rihaczek `W_1(f, g)(x, xi) = f_hat(xi) conj(g(x))
/// e^{2 pi i xi x}`.
pub fn conj_rihaczek<T: Scalar>(f: &Signal<T>, g: &Signal<T>) -> Result<WignerField<T>, MwdError> {
    if !grid_eq(f.grid(), g.grid()) {
        return Err(MwdError::Sigrid(SigridError::GridMismatch));
    }
    let grid = *f.grid();
    let n = grid.n();
    let fhat = cdft(f);
    let dual = grid.dual();
    let mut values = Vec::with_capacity(n * n);
    for k in 0..n {
        for j in 0..n {
            let phase = cis(T::fro(2.0) * T::PI() * dual.x(j) * grid.x(k));
            values.push(fhat.values()[j] * g.values()[k].conj() * phase);
        }
    }
    WignerField::new(grid, values, None)
}

/// de Gosson representation `V^hbar_g f(x, xi) = (2 pi hbar)^{-d/2}
/// e^{2 pi i x xi / (4 pi hbar)} V_g f(x, xi / (2 pi hbar))`, on the plain
/// grid; `2 pi hbar` must equal `1/m` for a small integer `m` so the scaled
/// frequency lands on the dual lattice.
pub fn hbar_rep<T: Scalar>(
    hbar: T,
    f: &Signal<T>,
    g: &Signal<T>,
) -> Result<WignerField<T>, MwdError> {
    if hbar <= T::zero() {
        return Err(MwdError::IncompatibleHbar(hbar.as_f64()));
    }
    let tph = T::fro(2.0) * T::PI() * hbar;
    let m_real = T::one() / tph;
    let m = num_traits::Float::round(m_real);
    if fabs(m_real - m) > T::fro(1e-9) || m < T::one() || m > T::fro(64.0) {
        return Err(MwdError::IncompatibleHbar(hbar.as_f64()));
    }
    let m = m.as_f64() as i64;
    let v = stft(f, g)?;
    let grid = v.grid_x;
    let n = grid.n() as i64;
    let amp = T::one() / num_traits::Float::sqrt(tph);
    let mut values = Vec::with_capacity((n * n) as usize);
    for k in 0..n {
        for j in 0..n {
            let x = grid.x(k as usize);
            let xi = v.grid_xi.x(j as usize);
            // xi / (2 pi hbar) = m xi aliases onto the dual lattice.
            let jj = (m * (j - n / 2) + n / 2).rem_euclid(n) as usize;
            let phase = cis(T::fro(2.0) * T::PI() * x * xi / (T::fro(2.0) * tph));
            values.push(v.value(k as usize, jj) * phase * amp);
        }
    }
    WignerField::new(grid, values, None)
}

// ---------------------------------------------------------------------------
// Fast shift-invertible path
// ---------------------------------------------------------------------------

/// Quadratic chirp value `Phi_M(y) = e^{pi i y . M y}` at a phase point.
fn chirp_at<T: Scalar>(m: &Mat<T>, y: &PhasePoint<T>) -> C<T> {
    let v = y.as_vec();
    let mut quad = T::zero();
    for i in 0..v.len() {
        for j in 0..v.len() {
            quad += v[i] * m[(i, j)] * v[j];
        }
    }
    cis(T::PI() * quad)
}

/// Fast path for shift-invertible matrices:
/// `W_A(f, g)(E y) = |det E|^{-1/2} Phi_{M+L}(y) V_{delta_A g} f(y)` on the
/// warped node set `E * (phase grid)`.
pub fn wigner_fast<T: Scalar>(
    a: &BlockSymplectic<T>,
    f: &Signal<T>,
    g: &Signal<T>,
) -> Result<WignerField<T>, MwdError> {
    let pack = derived_pack(a);
    if !pack.shift_invertible {
        return Err(MwdError::NotShiftInvertible);
    }
    let dg = deformation(a, g).map_err(lift_metop)?;
    let v = stft(f, &dg)?;
    let n = v.n();
    let amp = T::one() / num_traits::Float::sqrt(fabs(pack.det_e));
    let ml = &pack.m + l_mat::<T>(a.dim_d());
    let mut values = Vec::with_capacity(n * n);
    for k in 0..n {
        for j in 0..n {
            let y = PhasePoint::new(vec![v.grid_x.x(k)], vec![v.grid_xi.x(j)]);
            values.push(v.value(k, j) * chirp_at(&ml, &y) * amp);
        }
    }
    WignerField::new(v.grid_x, values, Some(pack.e.clone()))
}

// ---------------------------------------------------------------------------
// Atoms
// ---------------------------------------------------------------------------

fn solve_warp<T: Scalar>(e: &Mat<T>, z: &PhasePoint<T>) -> Result<PhasePoint<T>, MwdError> {
    let zv = nalgebra::DVector::from_vec(z.as_vec());
    let y = e
        .clone()
        .lu()
        .solve(&zv)
        .ok_or(MwdError::NotShiftInvertible)?;
    Ok(PhasePoint::from_slice(y.as_slice()))
}

fn pack_of<T: Scalar>(a: &BlockSymplectic<T>) -> Result<DerivedPack<T>, MwdError> {
    let pack = derived_pack(a);
    if !pack.shift_invertible {
        return Err(MwdError::NotShiftInvertible);
    }
    Ok(pack)
}

/// Metaplectic atom `pi_A(z) g = |det E|^{-1/2} Phi_{-M-L}(E^{-1} z)
/// pi(E^{-1} z) delta_A g`; requires `E^{-1} z` on the phase lattice.
pub fn atom<T: Scalar>(
    a: &BlockSymplectic<T>,
    z: &PhasePoint<T>,
    g: &Signal<T>,
) -> Result<Signal<T>, MwdError> {
    let pack = pack_of(a)?;
    let y = solve_warp(&pack.e, z)?;
    let dg = deformation(a, g).map_err(lift_metop)?;
    atom_with_window(&pack, &y, &dg)
}

/// Atom evaluation with a precomputed deformed window (the hot loop of
/// analysis/synthesis): `y = E^{-1} z` already solved.
pub(crate) fn atom_with_window<T: Scalar>(
    pack: &DerivedPack<T>,
    y: &PhasePoint<T>,
    deformed: &Signal<T>,
) -> Result<Signal<T>, MwdError> {
    let d = y.dim_d();
    let amp = T::one() / num_traits::Float::sqrt(fabs(pack.det_e));
    let ml = &pack.m + l_mat::<T>(d);
    let scalar = chirp_at(&(-&ml), y) * amp;
    let shifted = tf_shift(y, deformed)?;
    Ok(shifted.scaled(scalar))
}

/// Inverse atom `pi_A(z)^{-1} = |det E|^{1/2} Phi_{M+L/2}(E^{-1} z)
/// Phi_{L/2}(script-E^{-1} z) pi(Q script-E^{-1} z) delta_A^{-1}`.
pub fn atom_inv<T: Scalar>(
    a: &BlockSymplectic<T>,
    z: &PhasePoint<T>,
    f: &Signal<T>,
) -> Result<Signal<T>, MwdError> {
    let pack = pack_of(a)?;
    let d = a.dim_d();
    let y = solve_warp(&pack.e, z)?;
    let w = solve_warp(&pack.escript, z)?;
    let qw_vec = q_mat::<T>(d) * nalgebra::DVector::from_vec(w.as_vec());
    let qw = PhasePoint::from_slice(qw_vec.as_slice());
    let amp = num_traits::Float::sqrt(fabs(pack.det_e));
    let half_l = l_mat::<T>(d) * T::fro(0.5);
    let m_half = &pack.m + &half_l;
    let scalar = chirp_at(&m_half, &y) * chirp_at(&half_l, &w) * amp;
    let df = deformation_inv(a, f).map_err(lift_metop)?;
    let shifted = tf_shift(&qw, &df)?;
    Ok(shifted.scaled(scalar))
}

/// Adjoint atom `pi_A(z)^* = |det E|^{-1} pi_A(z)^{-1}`.
pub fn atom_adj<T: Scalar>(
    a: &BlockSymplectic<T>,
    z: &PhasePoint<T>,
    f: &Signal<T>,
) -> Result<Signal<T>, MwdError> {
    let pack = pack_of(a)?;
    let inv = atom_inv(a, z, f)?;
    let s = T::one() / fabs(pack.det_e);
    Ok(inv.scaled(C::new(s, T::zero())))
}

// ---------------------------------------------------------------------------
// Inversion formula
// ---------------------------------------------------------------------------

/// Reconstruction `f = <gamma, g>^{-1} sum_z W(z) pi_A(z) gamma cell`,
/// summed over the field's own node set.
pub fn inversion<T: Scalar>(
    a: &BlockSymplectic<T>,
    w: &WignerField<T>,
    g: &Signal<T>,
    gamma: &Signal<T>,
) -> Result<Signal<T>, MwdError> {
    let pack = pack_of(a)?;
    let ip = inner(gamma, g)?;
    if ip.norm() <= T::fro(1e-6) {
        return Err(MwdError::NearOrthogonalWindows(ip.norm().as_f64()));
    }
    let dgamma = deformation(a, gamma).map_err(lift_metop)?;
    let n = w.n();
    let cell = w.cell();
    let mut acc = Signal::zero(*gamma.grid());
    for k in 0..n {
        for j in 0..n {
            let val = w.value(k, j);
            if val.norm() == T::zero() {
                continue;
            }
            let z = w.node(k, j);
            let y = solve_warp(&pack.e, &z)?;
            let at = atom_with_window(&pack, &y, &dgamma)?;
            acc = acc.add(&at.scaled(val * cell))?;
        }
    }
    Ok(acc.scaled(C::new(T::one(), T::zero()) / ip))
}

// ---------------------------------------------------------------------------
// Covariance, Cohen class, star
// ---------------------------------------------------------------------------

/// Checks the covariance shift law
/// `W_A(pi(w) f, g) = Phi_{-M}(w) pi(E w, F w) W_A(f, g)` on the reference
/// path; returns the max deviation after global phase alignment.
pub fn covariance_shift_check<T: Scalar>(
    a: &BlockSymplectic<T>,
    f: &Signal<T>,
    g: &Signal<T>,
    w: &PhasePoint<T>,
) -> Result<T, MwdError> {
    let pack = derived_pack(a);
    let shifted = tf_shift(w, f)?;
    let lhs = wigner_ref(a, &shifted, g)?;
    let base = wigner_ref(a, f, g)?;
    let wv = nalgebra::DVector::from_vec(w.as_vec());
    let ew = &pack.e * &wv;
    let fw = &pack.f * &wv;
    let shift2 = PhasePoint::new(vec![ew[0], ew[1]], vec![fw[0], fw[1]]);
    let base_sig = base.as_signal()?;
    let moved = tf_shift(&shift2, &base_sig)?;
    let phase = chirp_at(&(-&pack.m), w);
    let rhs_vals: Vec<C<T>> = moved.values().iter().map(|&v| v * phase).collect();
    Ok(crate::num::aligned_max_diff(lhs.values(), &rhs_vals))
}

/// Cohen kernel `Sigma_A = F^{-1} Phi_{-B_A}` sampled on the phase grid
/// (covariant matrices only).
pub fn cohen_kernel<T: Scalar>(
    a: &BlockSymplectic<T>,
    grid: &Grid<T>,
) -> Result<WignerField<T>, MwdError> {
    let pack = derived_pack(a);
    if !pack.covariant {
        return Err(MwdError::NotCovariant);
    }
    if !grid.is_self_dual() {
        return Err(MwdError::NotSelfDual);
    }
    let g2 = Grid::new(2, grid.n(), grid.extent()).map_err(MwdError::Sigrid)?;
    let phi = crate::sigrid::chirp_signal(&(-&pack.b), &g2).map_err(MwdError::Sigrid)?;
    let sigma = icdft(&phi);
    WignerField::from_signal2(&sigma, None)
}

/// Deviation of the Cohen-class identity
/// `W_A(f, g) = Sigma_A * W_{1/2}(f, g)` (FFT convolution on the phase
/// grid, global phase aligned).
pub fn cohen_check<T: Scalar>(
    a: &BlockSymplectic<T>,
    f: &Signal<T>,
    g: &Signal<T>,
) -> Result<T, MwdError> {
    let pack = derived_pack(a);
    if !pack.covariant {
        return Err(MwdError::NotCovariant);
    }
    let wa = wigner_ref(a, f, g)?;
    let whalf = tau_wigner(T::fro(0.5), f, g)?;
    // conv = icdft2( Phi_{-B} . cdft2(W_half) ): the kernel's spectrum is
    // the chirp itself, so the kernel round-trip is skipped.
    let g2 = Grid::new(2, f.grid().n(), f.grid().extent()).map_err(MwdError::Sigrid)?;
    let phi = crate::sigrid::chirp_signal(&(-&pack.b), &g2).map_err(MwdError::Sigrid)?;
    let spec = cdft(&whalf.as_signal()?);
    let conv = icdft(&spec.mul(&phi)?);
    Ok(crate::num::aligned_max_diff(wa.values(), conv.values()))
}

/// Deviation of the star identity `W_A(g, f) = conj(W_{A*}(f, g))` after
/// global phase alignment (both sides on the reference path).
pub fn star_check<T: Scalar>(
    a: &BlockSymplectic<T>,
    f: &Signal<T>,
    g: &Signal<T>,
) -> Result<T, MwdError> {
    let lhs = wigner_ref(a, g, f)?;
    let ast = star(a);
    let rhs = wigner_ref(&ast, f, g)?;
    let rhs_conj: Vec<C<T>> = rhs.values().iter().map(|v| v.conj()).collect();
    if lhs.max_abs() == T::zero() && rhs.max_abs() == T::zero() {
        return Ok(T::zero());
    }
    Ok(crate::num::aligned_max_diff(lhs.values(), &rhs_conj))
}

/// Hermite corpus `h_0..h_{k_max}` used by the Moyal and norm-equivalence
/// checks.
pub fn hermite_corpus<T: Scalar>(grid: &Grid<T>, k_max: usize) -> Vec<Signal<T>> {
    (0..=k_max).map(|k| hermite(grid, k)).collect()
}

/// Convenience Gaussian window, unit norm.
pub fn unit_gaussian<T: Scalar>(grid: &Grid<T>) -> Signal<T> {
    gaussian(grid, T::one()).normalized()
}
