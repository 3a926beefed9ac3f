//! Centered uniform grids and discrete signals: inner products, chirps,
//! time-frequency shifts, reflection, the centered discrete Fourier
//! transform and band-limited resampling.
//!
//! A grid with `n` samples per axis (even) and extent `T` has nodes
//! `x_k = (k - n/2) * T/n` and dual nodes `xi_j = (j - n/2) / T`. All
//! translations and dilations wrap periodically: the grid is the finite
//! model of `R^d`.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::num::{cis, fabs, fmax, Scalar, C};
use crate::symplin::Mat;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SigridError {
    #[error("grid parameter invalid: {0}")]
    BadGrid(String),
    #[error("signals live on different grids")]
    GridMismatch,
    #[error("value count {got} does not match grid size {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("non-finite sample values")]
    NonFinite,
    #[error("off-lattice {what} component {value:.17} on axis {axis} (unit {unit:.17})")]
    OffLattice {
        what: &'static str,
        axis: usize,
        value: f64,
        unit: f64,
    },
    #[error("chirp matrix must be d x d symmetric")]
    AsymmetricChirp,
    #[error("resampling matrix is singular or badly conditioned")]
    SingularResample,
    #[error("resampling with a dense matrix is only implemented for d <= 2")]
    UnsupportedDimension,
}

/// Interpolation rule for [`resample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResampleMethod {
    Nearest,
    Linear,
    /// Zero-padded spectral (trigonometric) interpolation; the default.
    #[default]
    Sinc,
}

/// Treatment of arguments `E t` that leave the fundamental box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Extension {
    /// Wrap periodically (the finite-torus model).
    #[default]
    Periodic,
    /// Read zero outside the box (the decaying-signal model; keeps
    /// compressive dilations norm-preserving up to the tail mass).
    Zero,
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Centered uniform grid, identical along each of the `d` axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T: Scalar> {
    dim_d: usize,
    n: usize,
    extent: T,
}

impl<T: Scalar> Grid<T> {
    pub fn new(dim_d: usize, n: usize, extent: T) -> Result<Self, SigridError> {
        if dim_d == 0 {
            return Err(SigridError::BadGrid("dimension must be positive".into()));
        }
        if n == 0 || n % 2 != 0 {
            return Err(SigridError::BadGrid(format!("n = {n} must be even and positive")));
        }
        if !(extent > T::zero()) || !num_traits::Float::is_finite(extent) {
            return Err(SigridError::BadGrid("extent must be positive and finite".into()));
        }
        Ok(Self { dim_d, n, extent })
    }

    pub fn dim_d(&self) -> usize {
        self.dim_d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn extent(&self) -> T {
        self.extent
    }

    /// Sample spacing `T / n`.
    pub fn spacing(&self) -> T {
        self.extent / T::fro(self.n as f64)
    }

    /// Dual-lattice spacing `1 / T`.
    pub fn dual_spacing(&self) -> T {
        T::one() / self.extent
    }

    /// The dual grid (same `n`, extent `n / T`).
    pub fn dual(&self) -> Grid<T> {
        Grid {
            dim_d: self.dim_d,
            n: self.n,
            extent: T::fro(self.n as f64) / self.extent,
        }
    }

    /// Whether the dual grid coincides with this grid (`n = T^2`), in which
    /// case the centered DFT is an endomorphism of signals on this grid.
    pub fn is_self_dual(&self) -> bool {
        grid_eq(self, &self.dual())
    }

    /// Time node along one axis.
    pub fn x(&self, k: usize) -> T {
        (T::fro(k as f64) - T::fro(self.n as f64 / 2.0)) * self.spacing()
    }

    /// Frequency node along one axis.
    pub fn xi(&self, j: usize) -> T {
        (T::fro(j as f64) - T::fro(self.n as f64 / 2.0)) * self.dual_spacing()
    }

    /// Total sample count `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim_d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature cell measure per axis raised to the dimension.
    pub fn measure(&self) -> T {
        num_traits::Float::powi(self.spacing(), self.dim_d as i32)
    }

    fn lattice_tol(&self) -> T {
        fmax(T::fro(1e-9), T::epsilon() * T::fro(1e4))
    }

    /// Integer step count of a time coordinate, or an off-lattice error.
    pub fn time_step(&self, axis: usize, x: T) -> Result<i64, SigridError> {
        let steps = x / self.spacing();
        let rounded = num_traits::Float::round(steps);
        if fabs(steps - rounded) > self.lattice_tol() * fmax(T::one(), fabs(steps)) {
            return Err(SigridError::OffLattice {
                what: "time",
                axis,
                value: x.as_f64(),
                unit: self.spacing().as_f64(),
            });
        }
        Ok(rounded.as_f64() as i64)
    }

    /// Integer step count of a frequency coordinate on the dual lattice.
    pub fn freq_step(&self, axis: usize, xi: T) -> Result<i64, SigridError> {
        let steps = xi / self.dual_spacing();
        let rounded = num_traits::Float::round(steps);
        if fabs(steps - rounded) > self.lattice_tol() * fmax(T::one(), fabs(steps)) {
            return Err(SigridError::OffLattice {
                what: "frequency",
                axis,
                value: xi.as_f64(),
                unit: self.dual_spacing().as_f64(),
            });
        }
        Ok(rounded.as_f64() as i64)
    }
}

pub fn grid_eq<T: Scalar>(a: &Grid<T>, b: &Grid<T>) -> bool {
    a.dim_d == b.dim_d
        && a.n == b.n
        && fabs(a.extent - b.extent) <= fmax(T::fro(1e-9), T::epsilon() * T::fro(100.0)) * a.extent
}

/// A point `z = (x, xi)` of phase space over `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint<T: Scalar> {
    pub x: Vec<T>,
    pub xi: Vec<T>,
}

impl<T: Scalar> PhasePoint<T> {
    pub fn new(x: Vec<T>, xi: Vec<T>) -> Self {
        assert_eq!(x.len(), xi.len(), "time and frequency parts must agree in dimension");
        Self { x, xi }
    }

    pub fn dim_d(&self) -> usize {
        self.x.len()
    }

    pub fn zero(d: usize) -> Self {
        Self {
            x: vec![T::zero(); d],
            xi: vec![T::zero(); d],
        }
    }

    pub fn neg(&self) -> Self {
        Self {
            x: self.x.iter().map(|&v| -v).collect(),
            xi: self.xi.iter().map(|&v| -v).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            x: self.x.iter().zip(&other.x).map(|(&a, &b)| a + b).collect(),
            xi: self.xi.iter().zip(&other.xi).map(|(&a, &b)| a + b).collect(),
        }
    }

    /// Concatenated coordinates `(x, xi)` as a vector of length `2d`.
    pub fn as_vec(&self) -> Vec<T> {
        self.x.iter().chain(self.xi.iter()).copied().collect()
    }

    pub fn from_slice(v: &[T]) -> Self {
        let d = v.len() / 2;
        Self {
            x: v[..d].to_vec(),
            xi: v[d..].to_vec(),
        }
    }
}

// ---------------------------------------------------------------------------
// Signal
// ---------------------------------------------------------------------------

/// Complex samples on a grid, row-major over axes (axis 0 slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct Signal<T: Scalar> {
    grid: Grid<T>,
    values: Vec<C<T>>,
}

impl<T: Scalar> Signal<T> {
    pub fn new(grid: Grid<T>, values: Vec<C<T>>) -> Result<Self, SigridError> {
        if values.len() != grid.len() {
            return Err(SigridError::LengthMismatch {
                got: values.len(),
                expected: grid.len(),
            });
        }
        if !values
            .iter()
            .all(|v| num_traits::Float::is_finite(v.re) && num_traits::Float::is_finite(v.im))
        {
            return Err(SigridError::NonFinite);
        }
        Ok(Self { grid, values })
    }

    pub fn zero(grid: Grid<T>) -> Self {
        Self {
            values: vec![C::new(T::zero(), T::zero()); grid.len()],
            grid,
        }
    }

    pub fn from_fn_1d(grid: Grid<T>, f: impl Fn(T) -> C<T>) -> Self {
        assert_eq!(grid.dim_d(), 1);
        let values = (0..grid.n()).map(|k| f(grid.x(k))).collect();
        Self { grid, values }
    }

    pub(crate) fn from_raw(grid: Grid<T>, values: Vec<C<T>>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[C<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C<T>] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C<T>> {
        self.values
    }

    pub fn map(&self, f: impl Fn(C<T>) -> C<T>) -> Signal<T> {
        Signal {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, c: C<T>) -> Signal<T> {
        self.map(|v| v * c)
    }

    pub fn add(&self, other: &Signal<T>) -> Result<Signal<T>, SigridError> {
        if !grid_eq(&self.grid, &other.grid) {
            return Err(SigridError::GridMismatch);
        }
        Ok(Signal {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Signal<T>) -> Result<Signal<T>, SigridError> {
        self.add(&other.scaled(C::new(-T::one(), T::zero())))
    }

    /// Pointwise product (same grid).
    pub fn mul(&self, other: &Signal<T>) -> Result<Signal<T>, SigridError> {
        if !grid_eq(&self.grid, &other.grid) {
            return Err(SigridError::GridMismatch);
        }
        Ok(Signal {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a * b)
                .collect(),
        })
    }

    /// L2 norm with the grid quadrature measure.
    pub fn norm(&self) -> T {
        let s: T = self
            .values
            .iter()
            .map(|v| v.norm_sqr())
            .fold(T::zero(), |a, b| a + b);
        num_traits::Float::sqrt(s * self.grid.measure())
    }

    pub fn normalized(&self) -> Signal<T> {
        let n = self.norm();
        if n == T::zero() {
            return self.clone();
        }
        self.scaled(C::new(T::one() / n, T::zero()))
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |a, v| fmax(a, v.norm()))
    }

    pub fn max_abs_diff(&self, other: &Signal<T>) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |a, (x, y)| fmax(a, (x - y).norm()))
    }
}

/// `inner(f, g) = Delta^d sum f conj(g)`, conjugate-linear in `g`.
pub fn inner<T: Scalar>(f: &Signal<T>, g: &Signal<T>) -> Result<C<T>, SigridError> {
    if !grid_eq(f.grid(), g.grid()) {
        return Err(SigridError::GridMismatch);
    }
    let mut acc = C::new(T::zero(), T::zero());
    for (a, b) in f.values.iter().zip(&g.values) {
        acc += a * b.conj();
    }
    Ok(acc * f.grid.measure())
}

/// Chirp samples `Phi_C(t) = e^{pi i t . C t}` for symmetric `C`.
pub fn chirp_signal<T: Scalar>(c: &Mat<T>, grid: &Grid<T>) -> Result<Signal<T>, SigridError> {
    let d = grid.dim_d();
    if c.nrows() != d || c.ncols() != d {
        return Err(SigridError::AsymmetricChirp);
    }
    let asym = crate::symplin::max_abs_diff(c, &c.transpose());
    if asym
        > fmax(
            T::fro(1e-9),
            T::epsilon() * T::fro(1e3) * (T::one() + crate::symplin::max_abs(c)),
        )
    {
        return Err(SigridError::AsymmetricChirp);
    }
    let mut values = Vec::with_capacity(grid.len());
    let mut idx = vec![0usize; d];
    for _ in 0..grid.len() {
        let t: Vec<T> = idx.iter().map(|&k| grid.x(k)).collect();
        let mut quad = T::zero();
        for i in 0..d {
            for j in 0..d {
                quad += t[i] * c[(i, j)] * t[j];
            }
        }
        values.push(cis(T::PI() * quad));
        bump(&mut idx, grid.n());
    }
    Ok(Signal { grid: *grid, values })
}

fn bump(idx: &mut [usize], n: usize) {
    for a in (0..idx.len()).rev() {
        idx[a] += 1;
        if idx[a] < n {
            return;
        }
        idx[a] = 0;
    }
}

/// Time-frequency shift `pi(z) f(t) = e^{2 pi i xi . t} f(t - x)` with both
/// components required on their lattices (exact circular translation).
pub fn tf_shift<T: Scalar>(z: &PhasePoint<T>, f: &Signal<T>) -> Result<Signal<T>, SigridError> {
    let grid = *f.grid();
    let d = grid.dim_d();
    if z.dim_d() != d {
        return Err(SigridError::GridMismatch);
    }
    let n = grid.n() as i64;
    let mut shifts = Vec::with_capacity(d);
    for a in 0..d {
        shifts.push(grid.time_step(a, z.x[a])?.rem_euclid(n) as usize);
        grid.freq_step(a, z.xi[a])?;
    }
    // Per-axis modulation e^{2 pi i xi_a x(k)}; the product over axes is the
    // full modulation at the node.
    let mods: Vec<Vec<C<T>>> = (0..d)
        .map(|a| {
            (0..grid.n())
                .map(|k| cis(T::fro(2.0) * T::PI() * z.xi[a] * grid.x(k)))
                .collect()
        })
        .collect();
    let mut values = vec![C::new(T::zero(), T::zero()); grid.len()];
    let mut idx = vec![0usize; d];
    let nn = grid.n();
    for value in values.iter_mut() {
        let mut src = 0usize;
        let mut phase = C::new(T::one(), T::zero());
        for a in 0..d {
            let k = idx[a];
            let ks = (k + nn - shifts[a]) % nn;
            src = src * nn + ks;
            phase *= mods[a][k];
        }
        *value = phase * f.values[src];
        bump(&mut idx, nn);
    }
    Ok(Signal { grid, values })
}

/// Reflection `I f(t) = f(-t)` (index reversal about the center, extreme
/// node fixed by periodicity).
pub fn reflect<T: Scalar>(f: &Signal<T>) -> Signal<T> {
    let grid = *f.grid();
    let d = grid.dim_d();
    let n = grid.n();
    let mut values = vec![C::new(T::zero(), T::zero()); grid.len()];
    let mut idx = vec![0usize; d];
    for value in values.iter_mut() {
        let mut src = 0usize;
        for a in 0..d {
            let k = idx[a];
            let kr = if k == 0 { 0 } else { n - k };
            src = src * n + kr;
        }
        *value = f.values[src];
        bump(&mut idx, n);
    }
    Signal { grid, values }
}

// ---------------------------------------------------------------------------
// Centered DFT
// ---------------------------------------------------------------------------

fn transform_axis<T: Scalar>(
    values: &mut [C<T>],
    n: usize,
    d: usize,
    axis: usize,
    fft: &Arc<dyn Fft<T>>,
    scale: T,
) {
    // Strided iteration over all lines along `axis`. Centering twiddles:
    // F_j = scale * s0 * (-1)^j * FFT[(-1)^k f_k]_j with s0 = (-1)^{n/2};
    // the inverse transform mirrors this with the unnormalized inverse FFT.
    let len = values.len();
    let stride = n.pow((d - 1 - axis) as u32);
    let block = stride * n;
    let half = n / 2;
    let s0 = if half % 2 == 0 { T::one() } else { -T::one() };
    let mut line = vec![C::new(T::zero(), T::zero()); n];
    let mut base = 0usize;
    while base < len {
        for off in 0..stride {
            for (k, l) in line.iter_mut().enumerate() {
                let v = values[base + off + k * stride];
                *l = if k % 2 == 0 { v } else { -v };
            }
            fft.process(&mut line);
            for (j, l) in line.iter().enumerate() {
                let sign = if j % 2 == 0 { T::one() } else { -T::one() };
                values[base + off + j * stride] = l * (scale * s0 * sign);
            }
        }
        base += block;
    }
}

/// Centered discrete Fourier transform: `F(xi_j) = Delta^d sum_k f(x_k)
/// e^{-2 pi i xi_j . x_k}`, returned on the dual grid.
pub fn cdft<T: Scalar>(f: &Signal<T>) -> Signal<T> {
    let grid = *f.grid();
    let n = grid.n();
    let d = grid.dim_d();
    let mut planner = FftPlanner::<T>::new();
    let fft = planner.plan_fft_forward(n);
    let mut values = f.values.clone();
    for axis in 0..d {
        transform_axis(&mut values, n, d, axis, &fft, grid.spacing());
    }
    Signal {
        grid: grid.dual(),
        values,
    }
}

/// Inverse centered DFT; `icdft(cdft(f)) = f` up to machine precision.
pub fn icdft<T: Scalar>(f: &Signal<T>) -> Signal<T> {
    let grid = *f.grid();
    let n = grid.n();
    let d = grid.dim_d();
    let mut planner = FftPlanner::<T>::new();
    let fft = planner.plan_fft_inverse(n);
    let mut values = f.values.clone();
    // The target grid's quadrature weight is this grid's dual spacing.
    for axis in 0..d {
        transform_axis(&mut values, n, d, axis, &fft, grid.dual_spacing());
    }
    Signal {
        grid: grid.dual(),
        values,
    }
}

/// Centered DFT along one axis only (partial Fourier transform). The grid
/// handle is unchanged, which is meaningful on self-dual grids.
pub fn cdft_axis<T: Scalar>(f: &Signal<T>, axis: usize) -> Signal<T> {
    let grid = *f.grid();
    let n = grid.n();
    let d = grid.dim_d();
    let mut planner = FftPlanner::<T>::new();
    let fft = planner.plan_fft_forward(n);
    let mut values = f.values.clone();
    transform_axis(&mut values, n, d, axis, &fft, grid.spacing());
    Signal { grid, values }
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

/// Spectral evaluation of the trigonometric interpolant of one line at
/// arbitrary targets: `f~(s) = (1/T) sum_j F_j e^{2 pi i xi_j s}`.
fn trig_eval_line<T: Scalar>(spectrum: &[C<T>], grid: &Grid<T>, targets: &[T]) -> Vec<C<T>> {
    let n = grid.n();
    let inv_t = grid.dual_spacing();
    targets
        .iter()
        .map(|&s| {
            let mut acc = C::new(T::zero(), T::zero());
            for j in 0..n {
                acc += spectrum[j] * cis(T::fro(2.0) * T::PI() * grid.xi(j) * s);
            }
            acc * inv_t
        })
        .collect()
}

fn wrap_pos<T: Scalar>(pos: T, n: usize) -> T {
    let nn = T::fro(n as f64);
    let r = pos - num_traits::Float::floor(pos / nn) * nn;
    if r >= nn {
        r - nn
    } else {
        r
    }
}

/// Samples of `t -> f(E t)` on the grid of `f`, with periodic extension.
pub fn resample<T: Scalar>(
    f: &Signal<T>,
    e: &Mat<T>,
    method: ResampleMethod,
) -> Result<Signal<T>, SigridError> {
    resample_with(f, e, method, Extension::Periodic)
}

/// [`resample`] with an explicit out-of-box extension rule.
pub fn resample_with<T: Scalar>(
    f: &Signal<T>,
    e: &Mat<T>,
    method: ResampleMethod,
    ext: Extension,
) -> Result<Signal<T>, SigridError> {
    let grid = *f.grid();
    let d = grid.dim_d();
    if e.nrows() != d || e.ncols() != d {
        return Err(SigridError::SingularResample);
    }
    let det = e.clone().lu().determinant();
    if fabs(det) <= fmax(T::fro(1e-12), T::epsilon() * T::fro(100.0)) {
        return Err(SigridError::SingularResample);
    }
    // Identity fast path.
    let mut is_id = true;
    'outer: for i in 0..d {
        for j in 0..d {
            let want = if i == j { T::one() } else { T::zero() };
            if fabs(e[(i, j)] - want) > T::epsilon() * T::fro(16.0) {
                is_id = false;
                break 'outer;
            }
        }
    }
    if is_id {
        return Ok(f.clone());
    }
    let out = match method {
        ResampleMethod::Nearest | ResampleMethod::Linear => resample_pointwise(f, e, method),
        ResampleMethod::Sinc => match d {
            1 => {
                let spectrum = cdft(f);
                let dual = *spectrum.grid();
                let targets: Vec<T> = (0..grid.n()).map(|k| e[(0, 0)] * grid.x(k)).collect();
                let values = trig_eval_line(spectrum.values(), &dual, &targets);
                Signal::new(grid, values)
            }
            2 => resample_sinc_2d(f, e),
            _ => Err(SigridError::UnsupportedDimension),
        },
    }?;
    match ext {
        Extension::Periodic => Ok(out),
        Extension::Zero => Ok(mask_out_of_box(&out, e)),
    }
}

/// Zeroes every node whose warped argument `(E t)_i` leaves the box on some
/// axis, converting the periodized resample into the zero-extension one.
fn mask_out_of_box<T: Scalar>(f: &Signal<T>, e: &Mat<T>) -> Signal<T> {
    let grid = *f.grid();
    let d = grid.dim_d();
    let n = grid.n();
    let half_t = grid.extent() * T::fro(0.5);
    let guard = half_t * T::epsilon() * T::fro(8.0);
    let mut values = f.values().to_vec();
    let mut idx = vec![0usize; d];
    for value in values.iter_mut() {
        let t: Vec<T> = idx.iter().map(|&k| grid.x(k)).collect();
        for i in 0..d {
            let mut s = T::zero();
            for j in 0..d {
                s += e[(i, j)] * t[j];
            }
            if s < -half_t - guard || s >= half_t - guard {
                *value = C::new(T::zero(), T::zero());
                break;
            }
        }
        bump(&mut idx, n);
    }
    Signal { grid, values }
}

fn resample_pointwise<T: Scalar>(
    f: &Signal<T>,
    e: &Mat<T>,
    method: ResampleMethod,
) -> Result<Signal<T>, SigridError> {
    let grid = *f.grid();
    let d = grid.dim_d();
    let n = grid.n();
    let half = T::fro(n as f64 / 2.0);
    let mut values = vec![C::new(T::zero(), T::zero()); grid.len()];
    let mut idx = vec![0usize; d];
    for value in values.iter_mut() {
        let t: Vec<T> = idx.iter().map(|&k| grid.x(k)).collect();
        // Fractional index position of E t along each axis.
        let pos: Vec<T> = (0..d)
            .map(|i| {
                let mut s = T::zero();
                for j in 0..d {
                    s += e[(i, j)] * t[j];
                }
                wrap_pos(s / grid.spacing() + half, n)
            })
            .collect();
        *value = match method {
            ResampleMethod::Nearest => {
                let mut src = 0usize;
                for &p in &pos {
                    let k = (num_traits::Float::round(p).as_f64() as usize) % n;
                    src = src * n + k;
                }
                f.values()[src]
            }
            _ => {
                // Multilinear with wrap.
                let mut acc = C::new(T::zero(), T::zero());
                let corners = 1usize << d;
                for corner in 0..corners {
                    let mut w = T::one();
                    let mut src = 0usize;
                    for (a, &p) in pos.iter().enumerate() {
                        let k0f = num_traits::Float::floor(p);
                        let frac = p - k0f;
                        let k0 = (k0f.as_f64() as usize) % n;
                        let pick_hi = (corner >> a) & 1 == 1;
                        let k = if pick_hi { (k0 + 1) % n } else { k0 };
                        w *= if pick_hi { frac } else { T::one() - frac };
                        src = src * n + k;
                    }
                    acc += f.values()[src] * C::new(w, T::zero());
                }
                acc
            }
        };
        bump(&mut idx, n);
    }
    Signal::new(grid, values)
}

/// Complex matrix product `out = w * line` where `w` is `n x n` row-major.
fn apply_eval_matrix<T: Scalar>(w: &[C<T>], line: &[C<T>], out: &mut [C<T>]) {
    let n = line.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * n..(r + 1) * n];
        let mut acc = C::new(T::zero(), T::zero());
        for (a, b) in row.iter().zip(line.iter()) {
            acc += *a * *b;
        }
        *o = acc;
    }
}

/// Spectral shift of one line by `s`: multiply the centered spectrum by
/// `e^{2 pi i xi_j s}` (exact for the periodic band-limited interpolant).
fn line_shift_spectrum<T: Scalar>(spec: &mut [C<T>], grid: &Grid<T>, s: T) {
    for (j, v) in spec.iter_mut().enumerate() {
        *v *= cis(T::fro(2.0) * T::PI() * grid.xi(j) * s);
    }
}

/// `f(E t)` for a dense 2x2 matrix via an LDU split into two shears and an
/// axis scaling, each exact on the band-limited periodic interpolant.
fn resample_sinc_2d<T: Scalar>(f: &Signal<T>, e: &Mat<T>) -> Result<Signal<T>, SigridError> {
    let grid = *f.grid();
    let n = grid.n();
    // Pivot: ensure the (0,0) entry dominates its row; otherwise swap input
    // axes (transpose) and fold the swap into E.
    if fabs(e[(0, 0)]) < fabs(e[(0, 1)]) {
        let swapped = Mat::<T>::from_row_slice(2, 2, &[e[(0, 1)], e[(0, 0)], e[(1, 1)], e[(1, 0)]]);
        let h = resample_sinc_2d(&transpose2(f), &swapped)?;
        return Ok(transpose2(&h));
    }
    let a = e[(0, 0)];
    let b = e[(0, 1)];
    let c = e[(1, 0)];
    let dd = e[(1, 1)];
    if fabs(a) <= fmax(T::fro(1e-12), T::epsilon() * T::fro(100.0)) {
        return Err(SigridError::SingularResample);
    }
    let ell = c / a; // lower shear
    let p = a; // axis-0 scale
    let q = dd - c * b / a; // axis-1 scale
    let u = b / a; // upper shear
    if fabs(q) <= fmax(T::fro(1e-12), T::epsilon() * T::fro(100.0)) {
        return Err(SigridError::SingularResample);
    }

    let mut planner = FftPlanner::<T>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut vals = f.values().to_vec();

    // g1(x, y) = f(x, ell x + y): shift rows along axis 1.
    shear_axis1(&mut vals, &grid, ell, &fwd, &inv);
    // g2(x, y) = g1(p x, q y): scale both axes.
    scale_axis(&mut vals, &grid, 1, q, &fwd);
    scale_axis(&mut vals, &grid, 0, p, &fwd);
    // g3(x, y) = g2(x + u y, y): shift columns along axis 0.
    shear_axis0(&mut vals, &grid, u, &fwd, &inv);

    Signal::new(grid, vals)
}

fn transpose2<T: Scalar>(f: &Signal<T>) -> Signal<T> {
    let grid = *f.grid();
    let n = grid.n();
    let mut vals = vec![C::new(T::zero(), T::zero()); grid.len()];
    for i in 0..n {
        for j in 0..n {
            vals[j * n + i] = f.values()[i * n + j];
        }
    }
    Signal { grid, values: vals }
}

fn shear_axis1<T: Scalar>(
    vals: &mut [C<T>],
    grid: &Grid<T>,
    ell: T,
    fwd: &Arc<dyn Fft<T>>,
    inv: &Arc<dyn Fft<T>>,
) {
    if ell == T::zero() {
        return;
    }
    let n = grid.n();
    let dual = grid.dual();
    for i in 0..n {
        let s = ell * grid.x(i);
        let row = &mut vals[i * n..(i + 1) * n];
        cdft_line(row, grid, fwd);
        line_shift_spectrum(row, &dual, s);
        icdft_line(row, &dual, inv);
    }
}

fn shear_axis0<T: Scalar>(
    vals: &mut [C<T>],
    grid: &Grid<T>,
    u: T,
    fwd: &Arc<dyn Fft<T>>,
    inv: &Arc<dyn Fft<T>>,
) {
    if u == T::zero() {
        return;
    }
    let n = grid.n();
    let dual = grid.dual();
    let mut col = vec![C::new(T::zero(), T::zero()); n];
    for j in 0..n {
        let s = u * grid.x(j);
        for i in 0..n {
            col[i] = vals[i * n + j];
        }
        cdft_line(&mut col, grid, fwd);
        line_shift_spectrum(&mut col, &dual, s);
        icdft_line(&mut col, &dual, inv);
        for i in 0..n {
            vals[i * n + j] = col[i];
        }
    }
}

/// Scales one axis: every line along `axis` is replaced by its band-limited
/// interpolant evaluated at `alpha * x_k` (periodized).
fn scale_axis<T: Scalar>(
    vals: &mut [C<T>],
    grid: &Grid<T>,
    axis: usize,
    alpha: T,
    fwd: &Arc<dyn Fft<T>>,
) {
    if alpha == T::one() {
        return;
    }
    let n = grid.n();
    let dual = grid.dual();
    // Evaluation matrix W[k][j] = (1/T) e^{2 pi i xi_j alpha x_k}.
    let inv_t = grid.dual_spacing();
    let mut w = vec![C::new(T::zero(), T::zero()); n * n];
    for k in 0..n {
        let s = alpha * grid.x(k);
        for j in 0..n {
            w[k * n + j] = cis(T::fro(2.0) * T::PI() * dual.x(j) * s) * inv_t;
        }
    }
    let mut line = vec![C::new(T::zero(), T::zero()); n];
    let mut out = vec![C::new(T::zero(), T::zero()); n];
    match axis {
        1 => {
            for i in 0..n {
                let row = &mut vals[i * n..(i + 1) * n];
                line.copy_from_slice(row);
                cdft_line(&mut line, grid, fwd);
                apply_eval_matrix(&w, &line, &mut out);
                row.copy_from_slice(&out);
            }
        }
        0 => {
            for j in 0..n {
                for i in 0..n {
                    line[i] = vals[i * n + j];
                }
                cdft_line(&mut line, grid, fwd);
                apply_eval_matrix(&w, &line, &mut out);
                for i in 0..n {
                    vals[i * n + j] = out[i];
                }
            }
        }
        _ => unreachable!("2-d only"),
    }
}

fn cdft_line<T: Scalar>(line: &mut [C<T>], grid: &Grid<T>, fwd: &Arc<dyn Fft<T>>) {
    let n = line.len();
    let half = n / 2;
    let s0 = if half % 2 == 0 { T::one() } else { -T::one() };
    for (k, v) in line.iter_mut().enumerate() {
        if k % 2 == 1 {
            *v = -*v;
        }
    }
    fwd.process(line);
    let delta = grid.spacing();
    for (j, v) in line.iter_mut().enumerate() {
        let sign = if j % 2 == 0 { T::one() } else { -T::one() };
        *v *= delta * s0 * sign;
    }
}

fn icdft_line<T: Scalar>(line: &mut [C<T>], dual: &Grid<T>, inv: &Arc<dyn Fft<T>>) {
    let n = line.len();
    let half = n / 2;
    let s0 = if half % 2 == 0 { T::one() } else { -T::one() };
    for (j, v) in line.iter_mut().enumerate() {
        if j % 2 == 1 {
            *v = -*v;
        }
    }
    inv.process(line);
    let weight = dual.spacing(); // the dual grid's cell, i.e. 1/T of the primal
    for (k, v) in line.iter_mut().enumerate() {
        let sign = if k % 2 == 0 { T::one() } else { -T::one() };
        *v *= weight * s0 * sign;
    }
}

// ---------------------------------------------------------------------------
// Preset signals
// ---------------------------------------------------------------------------

/// Gaussian `e^{-pi (t/sigma)^2}` (not normalized).
pub fn gaussian<T: Scalar>(grid: &Grid<T>, sigma: T) -> Signal<T> {
    let d = grid.dim_d();
    let n = grid.n();
    let mut values = Vec::with_capacity(grid.len());
    let mut idx = vec![0usize; d];
    for _ in 0..grid.len() {
        let mut q = T::zero();
        for &k in idx.iter() {
            let t = grid.x(k) / sigma;
            q += t * t;
        }
        values.push(C::new(num_traits::Float::exp(-T::PI() * q), T::zero()));
        bump(&mut idx, n);
    }
    Signal { grid: *grid, values }
}

/// Hermite function of order `k` (d = 1), unit-normalized on the grid.
/// Built as `H_k(sqrt(2 pi) t) e^{-pi t^2}` via the three-term recurrence;
/// an eigenvector of the centered DFT with eigenvalue `(-i)^k`.
pub fn hermite<T: Scalar>(grid: &Grid<T>, k: usize) -> Signal<T> {
    assert_eq!(grid.dim_d(), 1, "hermite preset is one-dimensional");
    let n = grid.n();
    let sqrt_2pi = num_traits::Float::sqrt(T::fro(2.0) * T::PI());
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let t = grid.x(i);
        let u = sqrt_2pi * t;
        let mut hm1 = T::zero();
        let mut h = T::one();
        for m in 0..k {
            let next = T::fro(2.0) * u * h - T::fro(2.0 * m as f64) * hm1;
            hm1 = h;
            h = next;
        }
        values.push(C::new(
            h * num_traits::Float::exp(-T::PI() * t * t),
            T::zero(),
        ));
    }
    Signal { grid: *grid, values }.normalized()
}

/// Chirped Gaussian `e^{pi i c t^2} e^{-pi t^2}` (d = 1, not normalized).
pub fn chirped_gaussian<T: Scalar>(grid: &Grid<T>, c: T) -> Signal<T> {
    assert_eq!(grid.dim_d(), 1);
    Signal::from_fn_1d(*grid, |t| {
        cis(T::PI() * c * t * t) * num_traits::Float::exp(-T::PI() * t * t)
    })
}

/// Indicator of the interval `[a, b)` (d = 1).
pub fn characteristic<T: Scalar>(grid: &Grid<T>, a: T, b: T) -> Signal<T> {
    assert_eq!(grid.dim_d(), 1);
    Signal::from_fn_1d(*grid, |t| {
        if t >= a && t < b {
            C::new(T::one(), T::zero())
        } else {
            C::new(T::zero(), T::zero())
        }
    })
}
