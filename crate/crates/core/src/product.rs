//! Dealiased pointwise products and oversampled physical-space evaluation.
//!
//! Every product is the projection of the exact product onto the grid's
//! non-Nyquist modes `|k_i| < n/2`. Dense operands are multiplied on a
//! zero-padded grid (at most `2n`, smaller when the operands' bandwidth
//! allows it without aliasing); operands with few nonzero modes are convolved
//! directly in coefficient space. Both routes compute the same projection.

use num_complex::Complex;

use crate::error::Result;
use crate::fft::{fft2, Direction};
use crate::scalar::Scalar;
use crate::torus::{czero, Grid, Mode, SpectralField};

/// Operands with at most this many nonzero modes are evaluated directly.
const SPARSE_EVAL_LIMIT: usize = 16;

#[derive(Clone, Copy, Debug)]
struct Footprint {
    nnz: usize,
    kmax: i64,
}

fn footprint<T: Scalar>(u: &SpectralField<T>) -> Footprint {
    let grid = u.grid();
    let mut nnz = 0;
    let mut kmax = 0;
    for (i, c) in u.coeffs().iter().enumerate() {
        if c.re != T::zero() || c.im != T::zero() {
            nnz += 1;
            let k = grid.mode_of(i);
            kmax = kmax.max(k[0].abs()).max(k[1].abs());
        }
    }
    Footprint { nnz, kmax }
}

#[inline]
fn wrap(k: i64, m: usize) -> usize {
    k.rem_euclid(m as i64) as usize
}

/// Smallest power of two strictly greater than `x` (and at least 8).
fn pow2_above(x: i64) -> usize {
    let mut m = 8usize;
    while (m as i64) <= x {
        m *= 2;
    }
    m
}

/// Copies the coefficients of `u` (and `i * v`) with `|k_i| <= r` into an
/// `m x m` buffer.
fn embed<T: Scalar>(u: &SpectralField<T>, v: Option<&SpectralField<T>>, m: usize, r: i64) -> Vec<Complex<T>> {
    let grid = u.grid();
    let n = grid.n();
    let (lo, hi) = ((-r).max(-grid.half()), r.min(grid.half() - 1));
    let mut buf = vec![czero(); m * m];
    let wavenumbers = || lo..=hi;
    for k1 in wavenumbers() {
        let row = wrap(k1, n) * n;
        let dst = wrap(k1, m) * m;
        for k2 in wavenumbers() {
            let i = row + wrap(k2, n);
            let mut z = u.coeffs()[i];
            if let Some(v) = v {
                let w = v.coeffs()[i];
                z += Complex::new(-w.im, w.re);
            }
            buf[dst + wrap(k2, m)] += z;
        }
    }
    buf
}

/// Forward transform of real `m x m` samples, keeping modes `|k_i| <= r`.
fn extract<T: Scalar>(grid: Grid, mut buf: Vec<Complex<T>>, m: usize, r: i64) -> SpectralField<T> {
    fft2(&mut buf, m, Direction::Forward);
    let s = T::one() / T::lit((m * m) as f64);
    let mut out = SpectralField::zeros(grid);
    let r = r.min(grid.half() - 1).min(m as i64 / 2 - 1);
    let coeffs = out.coeffs_mut();
    for k1 in -r..=r {
        for k2 in -r..=r {
            let i = grid.index_of([k1, k2]).expect("mode in range");
            coeffs[i] = buf[wrap(k1, m) * m + wrap(k2, m)] * s;
        }
    }
    out
}

/// `out += P(a * b)` for a short list `a` of modes.
fn convolve_into<T: Scalar>(out: &mut [Complex<T>], a: &[(Mode, Complex<T>)], b: &SpectralField<T>) {
    let grid = b.grid();
    let n = grid.n();
    let h = grid.half();
    let target = |k: i64| -> Option<usize> {
        if k <= -h || k >= h {
            None
        } else {
            Some(wrap(k, n))
        }
    };
    let bc = b.coeffs();
    for &(ka, ca) in a {
        let cols: Vec<Option<usize>> = (0..n).map(|i2| target(grid.wavenumber(i2) + ka[1])).collect();
        for i1 in 0..n {
            let Some(r) = target(grid.wavenumber(i1) + ka[0]) else { continue };
            let row_in = &bc[i1 * n..(i1 + 1) * n];
            let row_out = &mut out[r * n..(r + 1) * n];
            for (i2, z) in row_in.iter().enumerate() {
                if z.re == T::zero() && z.im == T::zero() {
                    continue;
                }
                if let Some(c) = cols[i2] {
                    row_out[c] += ca * *z;
                }
            }
        }
    }
}

/// Nonzero modes of a field kept as a list; blocks of large grids are far
/// cheaper this way than as full coefficient arrays.
#[derive(Clone, Debug, Default)]
pub(crate) struct ModeList<T> {
    pub(crate) modes: Vec<(Mode, Complex<T>)>,
    /// Largest `|k_i|` over the list.
    pub(crate) kmax: i64,
}

impl<T: Scalar> ModeList<T> {
    pub(crate) fn new(modes: Vec<(Mode, Complex<T>)>) -> Self {
        let kmax = modes.iter().map(|(k, _)| k[0].abs().max(k[1].abs())).max().unwrap_or(0);
        ModeList { modes, kmax }
    }

    pub(crate) fn len(&self) -> usize {
        self.modes.len()
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub(crate) fn to_field(&self, grid: Grid) -> SpectralField<T> {
        let mut out = SpectralField::zeros(grid);
        let n = grid.n();
        let c = out.coeffs_mut();
        for &(k, z) in &self.modes {
            c[wrap(k[0], n) * n + wrap(k[1], n)] = z;
        }
        out
    }

    fn embed(&self, other: Option<&Self>, m: usize) -> Vec<Complex<T>> {
        let mut buf = vec![czero(); m * m];
        for &(k, z) in &self.modes {
            buf[wrap(k[0], m) * m + wrap(k[1], m)] += z;
        }
        for &(k, z) in other.map(|o| o.modes.as_slice()).unwrap_or(&[]) {
            buf[wrap(k[0], m) * m + wrap(k[1], m)] += Complex::new(-z.im, z.re);
        }
        buf
    }
}

/// Values of a mode list on an `m x m` grid.
pub(crate) fn list_values<T: Scalar>(list: &ModeList<T>, m: usize) -> Vec<T> {
    if list.len() <= SPARSE_EVAL_LIMIT {
        return evaluate_sparse(&list.modes, m);
    }
    let mut buf = list.embed(None, m);
    fft2(&mut buf, m, Direction::Inverse);
    buf.into_iter().map(|z| z.re).collect()
}

/// `P(Σ_p a_p b_p)` for mode lists; same routes as [`sum_of_products`].
pub(crate) fn sum_of_list_products<T: Scalar>(grid: Grid, pairs: &[(ModeList<T>, ModeList<T>)]) -> SpectralField<T> {
    let n = grid.n();
    let out_r = grid.half() - 1;
    let mut out = vec![czero::<T>(); grid.len()];
    let mut dense: Vec<(&ModeList<T>, &ModeList<T>, usize, i64)> = Vec::new();
    for (a, b) in pairs {
        if a.is_empty() || b.is_empty() {
            continue;
        }
        let band = a.kmax + b.kmax;
        let mm = pow2_above(band + band.min(out_r)).min(2 * n);
        let fft_cost = (mm * mm) as f64 * (mm as f64).log2() * 4.0;
        if (a.len() as f64) * (b.len() as f64) <= fft_cost {
            let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
            for &(ka, ca) in &small.modes {
                for &(kb, cb) in &large.modes {
                    let k = [ka[0] + kb[0], ka[1] + kb[1]];
                    if k[0].abs() <= out_r && k[1].abs() <= out_r {
                        out[wrap(k[0], n) * n + wrap(k[1], n)] += ca * cb;
                    }
                }
            }
        } else {
            dense.push((a, b, mm, band));
        }
    }
    let mut out = SpectralField::from_coeffs(grid, out).expect("grid-sized buffer");
    dense.sort_by_key(|d| d.2);
    let mut start = 0;
    while start < dense.len() {
        let m = dense[start].2;
        let end = start + dense[start..].iter().take_while(|d| d.2 == m).count();
        let mut acc = vec![czero::<T>(); m * m];
        let mut r = 0;
        for &(a, b, _, band) in &dense[start..end] {
            r = r.max(band);
            let mut buf = a.embed(Some(b), m);
            fft2(&mut buf, m, Direction::Inverse);
            for (s, z) in acc.iter_mut().zip(&buf) {
                s.re += z.re * z.im;
            }
        }
        out += &extract(grid, acc, m, r.min(out_r));
        start = end;
    }
    out
}

/// `P(u v)`: pointwise product projected onto the grid.
pub fn dealiased_product<T: Scalar>(u: &SpectralField<T>, v: &SpectralField<T>) -> Result<SpectralField<T>> {
    sum_of_products(&[(u, v)])
}

/// `P(Σ_p u_p v_p)` with a single transform back to coefficient space.
pub fn sum_of_products<T: Scalar>(pairs: &[(&SpectralField<T>, &SpectralField<T>)]) -> Result<SpectralField<T>> {
    let grid = pairs.first().expect("at least one product").0.grid();
    for (a, b) in pairs {
        a.require_same_grid(b)?;
        if a.grid() != grid {
            return Err(crate::error::Error::GridMismatch { left: grid.n(), right: a.grid().n() });
        }
    }
    let out_r = grid.half() - 1;
    let mut direct = vec![czero(); grid.len()];
    // (a, b, padded size, product band, operand band)
    let mut dense: Vec<(&SpectralField<T>, &SpectralField<T>, usize, i64, i64)> = Vec::new();
    for &(a, b) in pairs {
        let (fa, fb) = (footprint(a), footprint(b));
        if fa.nnz == 0 || fb.nnz == 0 {
            continue;
        }
        let band = fa.kmax + fb.kmax;
        let mm = pow2_above(band + band.min(out_r)).min(2 * grid.n());
        let (small, large, fs, fl) = if fa.nnz <= fb.nnz { (a, b, fa, fb) } else { (b, a, fb, fa) };
        let fft_cost = (mm * mm) as f64 * (mm as f64).log2() * 4.0;
        if (fs.nnz as f64) * (fl.nnz as f64) <= fft_cost {
            convolve_into(&mut direct, &small.nonzeros(), large);
        } else {
            dense.push((a, b, mm, band, fa.kmax.max(fb.kmax)));
        }
    }
    let mut out = SpectralField::from_coeffs(grid, direct)?;
    // Pairs sharing a padded size share one forward transform.
    dense.sort_by_key(|d| d.2);
    let mut start = 0;
    while start < dense.len() {
        let m = dense[start].2;
        let end = start + dense[start..].iter().take_while(|d| d.2 == m).count();
        let mut acc = vec![czero::<T>(); m * m];
        let mut r = 0;
        for &(a, b, _, band, kab) in &dense[start..end] {
            r = r.max(band);
            let mut buf = embed(a, Some(b), m, kab);
            fft2(&mut buf, m, Direction::Inverse);
            for (s, z) in acc.iter_mut().zip(&buf) {
                s.re += z.re * z.im;
            }
        }
        out += &extract(grid, acc, m, r.min(out_r));
        start = end;
    }
    Ok(out)
}

/// `P(F(u, v))` for a pointwise map evaluated on the `2n` oversampled grid.
///
/// Exact only when `F` is a polynomial of degree <= 2; otherwise this is the
/// Galerkin truncation of `F(u, v)`.
pub fn map_oversampled<T: Scalar, F>(u: &SpectralField<T>, v: &SpectralField<T>, f: F) -> Result<SpectralField<T>>
where
    F: Fn(T, T) -> T,
{
    u.require_same_grid(v)?;
    let grid = u.grid();
    let m = 2 * grid.n();
    let mut buf = embed(u, Some(v), m, grid.half());
    fft2(&mut buf, m, Direction::Inverse);
    for z in &mut buf {
        *z = Complex::new(f(z.re, z.im), T::zero());
    }
    Ok(extract(grid, buf, m, grid.half() - 1))
}

/// Values of `u` on an `m x m` grid (`m` a power of two, large enough to
/// hold every nonzero mode of `u`).
pub fn values_on<T: Scalar>(u: &SpectralField<T>, m: usize) -> Vec<T> {
    let fp = footprint(u);
    assert!(fp.kmax < (m / 2) as i64 || (fp.kmax == (m / 2) as i64 && m >= u.grid().n()));
    if fp.nnz == 0 {
        return vec![T::zero(); m * m];
    }
    if fp.nnz <= SPARSE_EVAL_LIMIT {
        return evaluate_sparse(&u.nonzeros(), m);
    }
    let mut buf = embed(u, None, m, fp.kmax);
    fft2(&mut buf, m, Direction::Inverse);
    buf.into_iter().map(|z| z.re).collect()
}

fn evaluate_sparse<T: Scalar>(modes: &[(Mode, Complex<T>)], m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * m];
    let step = std::f64::consts::TAU / m as f64;
    for &(k, c) in modes {
        let rows: Vec<Complex<T>> = (0..m)
            .map(|i| {
                let ph = (k[0] as f64 * i as f64 * step).rem_euclid(std::f64::consts::TAU);
                Complex::new(T::lit(ph.cos()), T::lit(ph.sin())) * c
            })
            .collect();
        let cols: Vec<Complex<T>> = (0..m)
            .map(|i| {
                let ph = (k[1] as f64 * i as f64 * step).rem_euclid(std::f64::consts::TAU);
                Complex::new(T::lit(ph.cos()), T::lit(ph.sin()))
            })
            .collect();
        for (i, r) in rows.iter().enumerate() {
            for (o, cz) in out[i * m..(i + 1) * m].iter_mut().zip(&cols) {
                *o += r.re * cz.re - r.im * cz.im;
            }
        }
    }
    out
}

/// Values of `u` on a grid oversampled 2x relative to the smallest grid that
/// resolves its spectrum (capped at `2n`).
pub fn oversampled_values<T: Scalar>(u: &SpectralField<T>) -> Vec<T> {
    let kmax = footprint(u).kmax;
    let m = (2 * pow2_above(2 * kmax)).min(2 * u.grid().n());
    values_on(u, m)
}
