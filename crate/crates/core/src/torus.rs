//! Discrete 2-torus `[0, 2π)²`, Fourier coefficient fields and diagonal
//! Fourier multipliers.
//!
//! Fields are expanded as `u(x) = Σ_k û(k) e^{i⟨k,x⟩}` with integer modes
//! `k ∈ {-n/2, …, n/2-1}²`; the basis is orthonormal for the normalized
//! measure `dx / (2π)²`, so a constant function `c` has `û(0) = c` and
//! `(u, v) = Σ_k û(k) conj(v̂(k))`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft::{fft2, Direction};
use crate::scalar::Scalar;

/// Integer Fourier mode `(k₁, k₂)`.
pub type Mode = [i64; 2];

/// Square collocation grid with `n` points per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(n));
        }
        Ok(Self { n })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of modes (and of collocation points).
    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// `n / 2`; the Nyquist mode is `-n/2`.
    #[inline]
    pub fn half(&self) -> i64 {
        (self.n / 2) as i64
    }

    /// Largest component frequency of a band-limited field: `|k_i| < n/4`.
    #[inline]
    pub fn band_limit(&self) -> i64 {
        (self.n / 4) as i64 - 1
    }

    #[inline]
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    #[inline]
    pub fn mode_of(&self, idx: usize) -> Mode {
        [self.wavenumber(idx / self.n), self.wavenumber(idx % self.n)]
    }

    #[inline]
    fn axis_index(&self, k: i64) -> Option<usize> {
        let h = self.half();
        if k < -h || k >= h {
            None
        } else if k >= 0 {
            Some(k as usize)
        } else {
            Some((k + self.n as i64) as usize)
        }
    }

    /// Storage index of mode `k`, if representable.
    #[inline]
    pub fn index_of(&self, k: Mode) -> Option<usize> {
        Some(self.axis_index(k[0])? * self.n + self.axis_index(k[1])?)
    }

    /// Storage index of the Hermitian partner of the mode stored at `idx`
    /// (`-k` taken modulo `n`).
    #[inline]
    pub fn partner_index(&self, idx: usize) -> usize {
        let n = self.n;
        let (i1, i2) = (idx / n, idx % n);
        ((n - i1) % n) * n + (n - i2) % n
    }

    #[inline]
    pub fn is_nyquist(&self, k: Mode) -> bool {
        k[0] == -self.half() || k[1] == -self.half()
    }

    /// Collocation point `x_m = 2π m / n`.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let h = 2.0 * std::f64::consts::PI / self.n as f64;
        [(idx / self.n) as f64 * h, (idx % self.n) as f64 * h]
    }

    pub fn modes(&self) -> impl Iterator<Item = (usize, Mode)> + '_ {
        (0..self.len()).map(move |i| (i, self.mode_of(i)))
    }
}

/// Real field on the torus stored by its Fourier coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField<T> {
    grid: Grid,
    coeffs: Vec<Complex<T>>,
}

#[inline]
pub(crate) fn czero<T: Scalar>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub(crate) fn norm_sqr<T: Scalar>(z: Complex<T>) -> T {
    z.re * z.re + z.im * z.im
}

impl<T: Scalar> SpectralField<T> {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, coeffs: vec![czero(); grid.len()] }
    }

    pub fn from_coeffs(grid: Grid, coeffs: Vec<Complex<T>>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::SizeMismatch { expected: grid.len(), got: coeffs.len() });
        }
        Ok(Self { grid, coeffs })
    }

    /// Constant function with value `c`.
    pub fn constant(grid: Grid, c: T) -> Self {
        let mut f = Self::zeros(grid);
        f.coeffs[0] = Complex::new(c, T::zero());
        f
    }

    /// Real field with `coeff(k) = z` and `coeff(-k) = conj(z)`.
    pub fn real_mode(grid: Grid, k: Mode, z: Complex<T>) -> Result<Self> {
        let mut f = Self::zeros(grid);
        f.add_real_mode(k, z)?;
        Ok(f)
    }

    /// Adds `z e_k + conj(z) e_{-k}` (or `Re z` for `k = 0`).
    pub fn add_real_mode(&mut self, k: Mode, z: Complex<T>) -> Result<()> {
        let out = || Error::FrequencyOutOfRange(format!("mode ({}, {}) on n={}", k[0], k[1], self.grid.n));
        if self.grid.is_nyquist(k) {
            return Err(out());
        }
        let i = self.grid.index_of(k).ok_or_else(out)?;
        if k == [0, 0] {
            self.coeffs[i].re += z.re;
        } else {
            let j = self.grid.index_of([-k[0], -k[1]]).ok_or_else(out)?;
            self.coeffs[i] += z;
            self.coeffs[j] += z.conj();
        }
        Ok(())
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    #[inline]
    pub fn coeffs_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex<T>> {
        self.coeffs
    }

    /// Coefficient against `e_k`; zero for modes outside the grid.
    pub fn coeff(&self, k: Mode) -> Complex<T> {
        self.grid.index_of(k).map_or(czero(), |i| self.coeffs[i])
    }

    pub fn mean(&self) -> T {
        self.coeffs[0].re
    }

    pub fn is_zero_mean(&self, tol: T) -> bool {
        self.coeffs[0].norm() <= tol
    }

    pub(crate) fn require_zero_mean(&self) -> Result<()> {
        if self.is_zero_mean(T::lit(1e-12)) {
            Ok(())
        } else {
            Err(Error::NonZeroMean(self.coeffs[0].norm().as_f64()))
        }
    }

    pub(crate) fn require_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch { left: self.grid.n, right: other.grid.n })
        }
    }

    /// Largest `|k_i|` over nonzero coefficients (0 for the zero field).
    pub fn max_frequency(&self) -> i64 {
        let mut kmax = 0;
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.re != T::zero() || c.im != T::zero() {
                let k = self.grid.mode_of(i);
                kmax = kmax.max(k[0].abs()).max(k[1].abs());
            }
        }
        kmax
    }

    /// Largest `|k|` (Euclidean) over nonzero coefficients.
    pub fn max_radius(&self) -> f64 {
        let mut r2 = 0i64;
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.re != T::zero() || c.im != T::zero() {
                let k = self.grid.mode_of(i);
                r2 = r2.max(k[0] * k[0] + k[1] * k[1]);
            }
        }
        (r2 as f64).sqrt()
    }

    pub fn is_band_limited(&self) -> bool {
        self.max_frequency() <= self.grid.band_limit()
    }

    pub fn nonzeros(&self) -> Vec<(Mode, Complex<T>)> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.re != T::zero() || c.im != T::zero())
            .map(|(i, c)| (self.grid.mode_of(i), *c))
            .collect()
    }

    pub fn nnz(&self) -> usize {
        self.coeffs.iter().filter(|c| c.re != T::zero() || c.im != T::zero()).count()
    }

    /// `max_k |coeff(-k) - conj(coeff(k))|`.
    pub fn hermitian_defect(&self) -> T {
        let mut d = T::zero();
        for i in 0..self.coeffs.len() {
            let j = self.grid.partner_index(i);
            d = d.max((self.coeffs[j] - self.coeffs[i].conj()).norm());
        }
        d
    }

    /// `L²` norm for the normalized measure, `(Σ_k |û(k)|²)^{1/2}`.
    pub fn l2_norm(&self) -> T {
        self.coeffs.iter().fold(T::zero(), |acc, c| acc + norm_sqr(*c)).sqrt()
    }

    /// Normalized `L²` inner product `Σ_k û(k) conj(v̂(k))` (real part).
    pub fn inner(&self, other: &Self) -> T {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .fold(T::zero(), |acc, (a, b)| acc + a.re * b.re + a.im * b.im)
    }

    /// `max_k |û(k) - v̂(k)|`.
    pub fn max_coeff_diff(&self, other: &Self) -> T {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .fold(T::zero(), |acc, (a, b)| acc.max((*a - *b).norm()))
    }

    pub fn max_abs_coeff(&self) -> T {
        self.coeffs.iter().fold(T::zero(), |acc, c| acc.max(c.norm()))
    }

    pub fn scale(&self, s: T) -> Self {
        Self { grid: self.grid, coeffs: self.coeffs.iter().map(|c| *c * s).collect() }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: T, other: &Self) {
        debug_assert_eq!(self.grid, other.grid);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += *b * s;
        }
    }

    /// Adds the constant function `c`.
    pub fn add_constant(&mut self, c: T) {
        self.coeffs[0].re += c;
    }

    /// Point evaluation by direct Fourier summation over nonzero modes.
    pub fn evaluate_at(&self, x: [f64; 2]) -> f64 {
        let mut s = 0.0;
        for (k, c) in self.nonzeros() {
            let phase = k[0] as f64 * x[0] + k[1] as f64 * x[1];
            s += c.re.as_f64() * phase.cos() - c.im.as_f64() * phase.sin();
        }
        s
    }

    /// Point evaluation from a precomputed nonzero list.
    pub(crate) fn evaluate_modes(modes: &[(Mode, Complex<f64>)], x: [f64; 2]) -> f64 {
        modes.iter().fold(0.0, |s, (k, c)| {
            let phase = k[0] as f64 * x[0] + k[1] as f64 * x[1];
            s + c.re * phase.cos() - c.im * phase.sin()
        })
    }

    /// Grid values (`fft_inverse`).
    pub fn to_values(&self) -> Vec<T> {
        fft_inverse(self)
    }
}

impl<T: Scalar> Add for &SpectralField<T> {
    type Output = SpectralField<T>;
    fn add(self, rhs: Self) -> SpectralField<T> {
        assert_eq!(self.grid, rhs.grid, "grid mismatch");
        SpectralField {
            grid: self.grid,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| *a + *b).collect(),
        }
    }
}

impl<T: Scalar> Sub for &SpectralField<T> {
    type Output = SpectralField<T>;
    fn sub(self, rhs: Self) -> SpectralField<T> {
        assert_eq!(self.grid, rhs.grid, "grid mismatch");
        SpectralField {
            grid: self.grid,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| *a - *b).collect(),
        }
    }
}

impl<T: Scalar> Neg for &SpectralField<T> {
    type Output = SpectralField<T>;
    fn neg(self) -> SpectralField<T> {
        SpectralField { grid: self.grid, coeffs: self.coeffs.iter().map(|c| -*c).collect() }
    }
}

impl<T: Scalar> Mul<T> for &SpectralField<T> {
    type Output = SpectralField<T>;
    fn mul(self, s: T) -> SpectralField<T> {
        self.scale(s)
    }
}

impl<T: Scalar> AddAssign<&SpectralField<T>> for SpectralField<T> {
    fn add_assign(&mut self, rhs: &SpectralField<T>) {
        assert_eq!(self.grid, rhs.grid, "grid mismatch");
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += *b;
        }
    }
}

impl<T: Scalar> SubAssign<&SpectralField<T>> for SpectralField<T> {
    fn sub_assign(&mut self, rhs: &SpectralField<T>) {
        assert_eq!(self.grid, rhs.grid, "grid mismatch");
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a -= *b;
        }
    }
}

/// Grid values `u(x_m)`, `m ∈ {0..n-1}²` row-major, to Fourier coefficients.
pub fn fft_forward<T: Scalar>(grid: Grid, values: &[T]) -> Result<SpectralField<T>> {
    if values.len() != grid.len() {
        return Err(Error::SizeMismatch { expected: grid.len(), got: values.len() });
    }
    let mut buf: Vec<Complex<T>> = values.iter().map(|&v| Complex::new(v, T::zero())).collect();
    fft2(&mut buf, grid.n, Direction::Forward);
    let s = T::one() / T::lit(grid.len() as f64);
    for c in &mut buf {
        *c = *c * s;
    }
    SpectralField::from_coeffs(grid, buf)
}

/// Fourier coefficients to grid values.
pub fn fft_inverse<T: Scalar>(u: &SpectralField<T>) -> Vec<T> {
    let mut buf = u.coeffs.clone();
    fft2(&mut buf, u.grid.n, Direction::Inverse);
    buf.into_iter().map(|c| c.re).collect()
}

/// `coeff_out(k) = m(k) coeff_in(k)`.
///
/// Fails with [`Error::SymmetryViolation`] when the output would no longer be
/// the spectrum of a real field.
pub fn apply_multiplier<T: Scalar, F>(u: &SpectralField<T>, m: F) -> Result<SpectralField<T>>
where
    F: Fn(Mode) -> Complex<T>,
{
    let grid = u.grid;
    let coeffs: Vec<Complex<T>> = grid.modes().map(|(i, k)| m(k) * u.coeffs[i]).collect();
    let tol = T::lit(1e-12) * coeffs.iter().fold(T::one(), |a, c| a.max(c.norm()));
    for i in 0..coeffs.len() {
        let j = grid.partner_index(i);
        if (coeffs[j] - coeffs[i].conj()).norm() > tol {
            let k = grid.mode_of(i);
            return Err(Error::SymmetryViolation(k[0], k[1]));
        }
    }
    SpectralField::from_coeffs(grid, coeffs)
}

/// Real, even multiplier; cannot break symmetry so no check is done.
pub(crate) fn apply_real_multiplier<T: Scalar, F>(u: &SpectralField<T>, m: F) -> SpectralField<T>
where
    F: Fn(Mode) -> T,
{
    let grid = u.grid;
    SpectralField {
        grid,
        coeffs: grid.modes().map(|(i, k)| u.coeffs[i] * m(k)).collect(),
    }
}

#[inline]
pub(crate) fn mode_norm_sqr(k: Mode) -> i64 {
    k[0] * k[0] + k[1] * k[1]
}

/// `K = (-Δ)^{-1}` on zero-mean fields: `coeff(k) / |k|²`, `coeff(0) = 0`.
pub fn inverse_laplacian<T: Scalar>(u: &SpectralField<T>) -> Result<SpectralField<T>> {
    u.require_zero_mean()?;
    Ok(apply_real_multiplier(u, |k| {
        let r2 = mode_norm_sqr(k);
        if r2 == 0 {
            T::zero()
        } else {
            T::one() / T::lit(r2 as f64)
        }
    }))
}

/// `Δu`, multiplier `-|k|²`.
pub fn laplacian<T: Scalar>(u: &SpectralField<T>) -> SpectralField<T> {
    apply_real_multiplier(u, |k| -T::lit(mode_norm_sqr(k) as f64))
}

/// Heat semigroup `P_t = e^{tΔ}`.
pub fn heat_semigroup<T: Scalar>(u: &SpectralField<T>, t: T) -> Result<SpectralField<T>> {
    if t < T::zero() {
        return Err(Error::NegativeTime(t.as_f64()));
    }
    Ok(apply_real_multiplier(u, |k| (-t * T::lit(mode_norm_sqr(k) as f64)).exp()))
}

/// `(∂₁u, ∂₂u)` via `i k_j`; the unpaired Nyquist line is set to zero.
pub fn gradient<T: Scalar>(u: &SpectralField<T>) -> [SpectralField<T>; 2] {
    let grid = u.grid;
    let d = |axis: usize| {
        let coeffs = grid
            .modes()
            .map(|(i, k)| {
                if grid.is_nyquist(k) {
                    czero()
                } else {
                    u.coeffs[i] * Complex::new(T::zero(), T::lit(k[axis] as f64))
                }
            })
            .collect();
        SpectralField { grid, coeffs }
    };
    [d(0), d(1)]
}

pub fn project_zero_mean<T: Scalar>(u: &SpectralField<T>) -> SpectralField<T> {
    let mut out = u.clone();
    out.coeffs[0] = czero();
    out
}
