//! Spatial white noise on the torus, mollification and lattice
//! renormalization constants.
//!
//! Noise coefficients are drawn from a counter-based generator: each mode pair
//! `{k, −k}` owns a ChaCha stream keyed by `(seed, stream)`, so samples do not
//! depend on traversal order or thread count, and a band-limited sample agrees
//! with the full sample on every mode it keeps.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::torus::{apply_real_multiplier, Grid, Mode, SpectralField};

/// Radial mollifier `ψ` with `ψ(0) = 1` and `|ψ| ≤ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mollifier {
    /// `e^{−|x|²}`.
    Gaussian,
    /// `1_{|x| ≤ 1}`.
    Sharp,
    /// `max(0, 1 − |x|)`.
    Fejer,
}

impl Mollifier {
    pub const ALL: [Mollifier; 3] = [Mollifier::Gaussian, Mollifier::Sharp, Mollifier::Fejer];

    /// `ψ` at radius `r = |x|`.
    pub fn evaluate(self, r: f64) -> f64 {
        match self {
            Mollifier::Gaussian => (-r * r).exp(),
            Mollifier::Sharp => {
                if r <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Mollifier::Fejer => (1.0 - r).max(0.0),
        }
    }

    /// Radius of the support, if compact.
    pub fn support_radius(self) -> Option<f64> {
        match self {
            Mollifier::Gaussian => None,
            Mollifier::Sharp | Mollifier::Fejer => Some(1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mollifier::Gaussian => "gaussian",
            Mollifier::Sharp => "sharp",
            Mollifier::Fejer => "fejer",
        }
    }
}

impl fmt::Display for Mollifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mollifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Mollifier::Gaussian),
            "sharp" => Ok(Mollifier::Sharp),
            "fejer" => Ok(Mollifier::Fejer),
            other => Err(Error::Parse(format!("unknown mollifier '{other}'"))),
        }
    }
}

/// A white-noise sample together with the key that reproduces it.
#[derive(Clone, Debug)]
pub struct WhiteNoiseSample<T> {
    pub field: SpectralField<T>,
    pub seed: u64,
    pub stream: u64,
    /// Largest component frequency carried by the sample.
    pub band: i64,
}

impl<T: Scalar> WhiteNoiseSample<T> {
    /// `Σ 1/|k|²` over every mode the sample can carry; the constant that
    /// renormalizes its resonant self-product.
    pub fn renorm_constant(&self) -> f64 {
        box_sum(self.band, |r2| 1.0 / r2 as f64)
    }
}

fn zigzag(k: i64) -> u64 {
    ((k << 1) ^ (k >> 63)) as u64
}

fn mode_stream(k: Mode) -> u64 {
    (zigzag(k[0]) << 32) | zigzag(k[1])
}

fn keyed_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16..24].copy_from_slice(b"gpam-wn1");
    ChaCha8Rng::from_seed(key)
}

/// Canonical representative of `{k, −k}`: `k₁ > 0`, or `k₁ = 0` and `k₂ > 0`.
fn is_canonical(k: Mode) -> bool {
    k[0] > 0 || (k[0] == 0 && k[1] > 0)
}

/// Fills every canonical mode with `|k_i| ≤ band` with `scale(k) · (a + ib)/√2`.
fn gaussian_field<T: Scalar>(grid: Grid, band: i64, seed: u64, stream: u64, scale: impl Fn(Mode) -> f64 + Sync) -> SpectralField<T> {
    let base = keyed_rng(seed, stream);
    let rows: Vec<Vec<(Mode, Complex<f64>)>> = (0..=band)
        .into_par_iter()
        .map(|k1| {
            let mut row = Vec::with_capacity((2 * band + 1) as usize);
            for k2 in -band..=band {
                let k = [k1, k2];
                if !is_canonical(k) {
                    continue;
                }
                let s = scale(k);
                if s == 0.0 {
                    continue;
                }
                let mut rng = base.clone();
                rng.set_stream(mode_stream(k));
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                row.push((k, Complex::new(a, b) * (s * std::f64::consts::FRAC_1_SQRT_2)));
            }
            row
        })
        .collect();
    let mut f = SpectralField::zeros(grid);
    for (k, z) in rows.into_iter().flatten() {
        f.add_real_mode(k, Complex::new(T::lit(z.re), T::lit(z.im))).expect("mode below Nyquist");
    }
    f
}

/// Zero-mean white noise on every non-Nyquist mode of the grid.
pub fn sample_white_noise<T: Scalar>(grid: Grid, seed: u64, stream: u64) -> WhiteNoiseSample<T> {
    sample_white_noise_band(grid, grid.half() - 1, seed, stream).expect("full band is valid")
}

/// White noise restricted to the box `|k_i| ≤ band`.
pub fn sample_white_noise_band<T: Scalar>(grid: Grid, band: i64, seed: u64, stream: u64) -> Result<WhiteNoiseSample<T>> {
    if band < 1 || band >= grid.half() {
        return Err(Error::Bandwidth(format!("noise band {band} outside 1..{}", grid.half())));
    }
    let field = gaussian_field(grid, band, seed, stream, |_| 1.0);
    Ok(WhiteNoiseSample { field, seed, stream, band })
}

/// Random zero-mean field on `|k_i| ≤ kmax` with coefficient scale
/// `(1 + |k|²)^{−decay/2}`; a generic smooth ensemble member.
pub fn random_band_limited<T: Scalar>(grid: Grid, kmax: i64, decay: f64, seed: u64, stream: u64) -> Result<SpectralField<T>> {
    if kmax < 1 || kmax >= grid.half() {
        return Err(Error::Bandwidth(format!("band {kmax} outside 1..{}", grid.half())));
    }
    Ok(gaussian_field(grid, kmax, seed, stream ^ 0x5eed_0000_0000_0000, |k| {
        (1.0 + (k[0] * k[0] + k[1] * k[1]) as f64).powf(-0.5 * decay)
    }))
}

/// `ξ^ε`: coefficients multiplied by `ψ(ε|k|)`.
pub fn mollify<T: Scalar>(xi: &SpectralField<T>, psi: Mollifier, eps: f64) -> Result<SpectralField<T>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    Ok(apply_real_multiplier(xi, |k| {
        let r = ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
        T::lit(psi.evaluate(eps * r))
    }))
}

/// Neumaier-compensated `Σ f(|k|²)` over `0 < |k|_∞ ≤ kcut`.
fn box_sum(kcut: i64, f: impl Fn(i64) -> f64) -> f64 {
    let mut acc = Compensated::default();
    for k1 in -kcut..=kcut {
        for k2 in -kcut..=kcut {
            let r2 = k1 * k1 + k2 * k2;
            if r2 > 0 {
                acc.add(f(r2));
            }
        }
    }
    acc.value()
}

/// Neumaier summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// A truncated lattice sum with a bound on the omitted tail.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticeSum {
    pub value: f64,
    /// Upper bound on the terms with `|k|_∞ > k_cut` (zero for compact `ψ`).
    pub tail_bound: f64,
}

/// Which reading of the mixed constant to use: `Σ ψ(εk)/|k|²` or
/// `Σ |ψ(εk)|/|k|²`. The two agree for nonnegative `ψ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MixedForm {
    #[default]
    Signed,
    Absolute,
}

fn check_cutoff(psi: Mollifier, eps: f64, k_cut: i64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    if let Some(r) = psi.support_radius() {
        let radius = r / eps;
        if (k_cut as f64) < radius.floor() {
            return Err(Error::CutoffTooSmall { k_cut, radius });
        }
    }
    if k_cut < 1 {
        return Err(Error::InvalidParameter(format!("k_cut must be positive, got {k_cut}")));
    }
    Ok(())
}

/// `Σ_{|k|_∞ ≥ K+1} e^{−a|k|²}/|k|² ≤ (8/M) e^{−aM²} (1 + 1/(2aM))`, `M = K+1`.
fn gaussian_tail(a: f64, k_cut: i64) -> f64 {
    let m = (k_cut + 1) as f64;
    8.0 / m * (-a * m * m).exp() * (1.0 + 1.0 / (2.0 * a * m))
}

/// `c_ε = Σ_{k≠0} |ψ(εk)|² / |k|²` over the box `|k|_∞ ≤ k_cut`.
pub fn renorm_constant(psi: Mollifier, eps: f64, k_cut: i64) -> Result<LatticeSum> {
    check_cutoff(psi, eps, k_cut)?;
    let value = box_sum(k_cut, |r2| psi.evaluate(eps * (r2 as f64).sqrt()).powi(2) / r2 as f64);
    let tail_bound = match psi {
        Mollifier::Gaussian => gaussian_tail(2.0 * eps * eps, k_cut),
        _ => 0.0,
    };
    Ok(LatticeSum { value, tail_bound })
}

/// `b_ε = Σ_{k≠0} ψ(εk) / |k|²` (or with `|ψ|`) over the box `|k|_∞ ≤ k_cut`.
pub fn mixed_constant(psi: Mollifier, eps: f64, k_cut: i64, form: MixedForm) -> Result<LatticeSum> {
    check_cutoff(psi, eps, k_cut)?;
    let value = box_sum(k_cut, |r2| {
        let w = psi.evaluate(eps * (r2 as f64).sqrt());
        let w = if form == MixedForm::Absolute { w.abs() } else { w };
        w / r2 as f64
    });
    let tail_bound = match psi {
        Mollifier::Gaussian => gaussian_tail(eps * eps, k_cut),
        _ => 0.0,
    };
    Ok(LatticeSum { value, tail_bound })
}

/// `ξ^n`: sharp truncation of the sample at radius `ν 2^n`, and
/// `c_n = Σ 1/|k|²` over the retained modes `0 < |k| ≤ ν 2^n`.
///
/// A radius beyond the sample's band keeps every mode (`ξ^n = ξ`).
pub fn truncate_noise<T: Scalar>(xi: &WhiteNoiseSample<T>, n: u32, nu: f64) -> Result<(SpectralField<T>, f64)> {
    if !(nu > 0.0) {
        return Err(Error::InvalidParameter(format!("nu must be positive, got {nu}")));
    }
    let radius = nu * (n as f64).exp2();
    let r2max = radius * radius;
    let field = apply_real_multiplier(&xi.field, |k| {
        if ((k[0] * k[0] + k[1] * k[1]) as f64) <= r2max {
            T::one()
        } else {
            T::zero()
        }
    });
    let c_n = box_sum(xi.band, |r2| if (r2 as f64) <= r2max { 1.0 / r2 as f64 } else { 0.0 });
    Ok((field, c_n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new(n).unwrap()
    }

    #[test]
    fn sample_is_zero_mean_hermitian_and_nyquist_free() {
        let g = grid(32);
        let xi = sample_white_noise::<f64>(g, 7, 0);
        assert_eq!(xi.field.coeff([0, 0]), Complex::new(0.0, 0.0));
        assert_eq!(xi.field.hermitian_defect(), 0.0);
        for k in -16..16 {
            assert_eq!(xi.field.coeff([-16, k]).norm(), 0.0);
            assert_eq!(xi.field.coeff([k, -16]).norm(), 0.0);
        }
        assert_eq!(xi.field.nnz(), 31 * 31 - 1);
    }

    #[test]
    fn sampling_is_deterministic_and_stream_separated() {
        let g = grid(32);
        let a = sample_white_noise::<f64>(g, 11, 3);
        let b = sample_white_noise::<f64>(g, 11, 3);
        let c = sample_white_noise::<f64>(g, 11, 4);
        assert_eq!(a.field.coeffs(), b.field.coeffs());
        assert!(a.field.max_coeff_diff(&c.field) > 0.1);
    }

    #[test]
    fn band_sample_agrees_with_full_sample_across_grids() {
        let full = sample_white_noise::<f64>(grid(64), 5, 1);
        let band = sample_white_noise_band::<f64>(grid(32), 7, 5, 1).unwrap();
        for k1 in -7..=7 {
            for k2 in -7..=7 {
                assert_eq!(full.field.coeff([k1, k2]), band.field.coeff([k1, k2]));
            }
        }
        assert_eq!(band.field.max_frequency(), 7);
    }

    #[test]
    fn unit_variance_per_mode() {
        let g = grid(8);
        let m = 4096;
        for k in [[1, 0], [3, 2]] {
            let mean: f64 = (0..m)
                .map(|s| sample_white_noise::<f64>(g, 2024, s).field.coeff(k).norm_sqr())
                .sum::<f64>()
                / m as f64;
            assert!((mean - 1.0).abs() <= 3.0 / (m as f64).sqrt(), "{k:?}: {mean}");
        }
    }

    #[test]
    fn footnote_covariance_within_three_standard_errors() {
        // E[(ξ,φ)(ξ,ψ)] = (φ,ψ) − (φ,1)(ψ,1) with (·,·) for dx/(2π)².
        let g = grid(8);
        let mut phi = SpectralField::constant(g, 0.7);
        phi.add_real_mode([1, 0], Complex::new(1.0, 0.5)).unwrap();
        phi.add_real_mode([2, -1], Complex::new(-0.3, 0.0)).unwrap();
        let mut psi = SpectralField::constant(g, -0.4);
        psi.add_real_mode([1, 0], Complex::new(0.5, 0.0)).unwrap();
        psi.add_real_mode([2, -1], Complex::new(0.2, 0.9)).unwrap();
        let target = phi.inner(&psi) - phi.mean() * psi.mean();
        let m = 4000;
        let xs: Vec<f64> = (0..m)
            .map(|s| {
                let xi = sample_white_noise::<f64>(g, 99, s).field;
                xi.inner(&phi) * xi.inner(&psi)
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / m as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        let se = (var / m as f64).sqrt();
        assert!((mean - target).abs() <= 3.0 * se, "{mean} vs {target} (se {se})");
    }

    #[test]
    fn mollifier_values() {
        for psi in Mollifier::ALL {
            assert_eq!(psi.evaluate(0.0), 1.0);
            assert!((0..100).all(|i| psi.evaluate(i as f64 * 0.05).abs() <= 1.0));
            assert_eq!(psi.name().parse::<Mollifier>().unwrap(), psi);
        }
        assert!("box".parse::<Mollifier>().is_err());
    }

    #[test]
    fn mollify_examples() {
        let g = grid(16);
        let xi = sample_white_noise::<f64>(g, 1, 0).field;
        let s = mollify(&xi, Mollifier::Sharp, 0.5).unwrap();
        for (i, k) in g.modes() {
            let r2 = k[0] * k[0] + k[1] * k[1];
            let expect = if r2 <= 4 { xi.coeffs()[i] } else { Complex::new(0.0, 0.0) };
            assert_eq!(s.coeffs()[i], expect);
        }
        let e = mollify(&xi, Mollifier::Gaussian, 1.0).unwrap();
        assert!((e.coeff([1, 0]) - xi.coeff([1, 0]) * (-1f64).exp()).norm() < 1e-15);
        assert!(mollify(&xi, Mollifier::Gaussian, 0.0).is_err());
        let tiny = mollify(&xi, Mollifier::Fejer, 1e-9).unwrap();
        assert!(tiny.max_coeff_diff(&xi) < 1e-7);
    }

    #[test]
    fn sharp_constant_at_one_half_is_seven() {
        assert_eq!(renorm_constant(Mollifier::Sharp, 0.5, 2).unwrap().value, 7.0);
        assert_eq!(renorm_constant(Mollifier::Sharp, 0.5, 40).unwrap().value, 7.0);
        assert!(matches!(renorm_constant(Mollifier::Sharp, 0.5, 1), Err(Error::CutoffTooSmall { .. })));
    }

    #[test]
    fn sharp_constant_grows_like_two_pi_log() {
        let eps: Vec<f64> = (3..=8).map(|m| (-(m as f64)).exp2()).collect();
        let cs: Vec<f64> = eps
            .iter()
            .map(|&e| renorm_constant(Mollifier::Sharp, e, (1.0 / e) as i64).unwrap().value)
            .collect();
        assert!(cs.windows(2).all(|w| w[1] >= w[0]));
        let xs: Vec<f64> = eps.iter().map(|e| (1.0 / e).ln()).collect();
        let slope = crate::stats::linear_fit(&xs, &cs).slope;
        let tau = std::f64::consts::TAU;
        assert!((slope - tau).abs() <= 0.05 * tau, "{slope}");
    }

    #[test]
    fn mixed_constant_comparisons() {
        for eps in [0.5, 0.25, 0.125] {
            let k = (1.0 / eps) as i64;
            let c = renorm_constant(Mollifier::Sharp, eps, k).unwrap().value;
            assert_eq!(mixed_constant(Mollifier::Sharp, eps, k, MixedForm::Signed).unwrap().value, c);
            let cg = renorm_constant(Mollifier::Gaussian, eps, 64).unwrap().value;
            let bg = mixed_constant(Mollifier::Gaussian, eps, 64, MixedForm::Signed).unwrap().value;
            assert!(bg >= cg);
            let ba = mixed_constant(Mollifier::Gaussian, eps, 64, MixedForm::Absolute).unwrap().value;
            assert_eq!(ba, bg);
        }
    }

    #[test]
    fn mixed_constant_is_order_independent() {
        let eps = 0.25f64;
        let b = mixed_constant(Mollifier::Gaussian, eps, 64, MixedForm::Signed).unwrap().value;
        // Shell-by-shell from the outside in, a different association order.
        let mut shells = Vec::new();
        for m in (1..=64i64).rev() {
            let mut s = Compensated::default();
            for k1 in -m..=m {
                for k2 in -m..=m {
                    if k1.abs().max(k2.abs()) == m {
                        let r2 = (k1 * k1 + k2 * k2) as f64;
                        s.add((-eps * eps * r2).exp() / r2);
                    }
                }
            }
            shells.push(s.value());
        }
        let mut total = Compensated::default();
        shells.iter().for_each(|x| total.add(*x));
        assert!((total.value() - b).abs() <= 1e-12);
    }

    #[test]
    fn gaussian_tail_bound_dominates_the_tail() {
        let eps = 0.25;
        let short = renorm_constant(Mollifier::Gaussian, eps, 6).unwrap();
        let long = renorm_constant(Mollifier::Gaussian, eps, 60).unwrap();
        let tail = long.value - short.value;
        assert!(tail > 0.0 && tail <= short.tail_bound, "{tail} vs {}", short.tail_bound);
        let b_short = mixed_constant(Mollifier::Gaussian, eps, 6, MixedForm::Signed).unwrap();
        let b_long = mixed_constant(Mollifier::Gaussian, eps, 60, MixedForm::Signed).unwrap();
        assert!(b_long.value - b_short.value <= b_short.tail_bound);
    }

    #[test]
    fn truncation_examples() {
        let g = grid(32);
        let xi = sample_white_noise::<f64>(g, 3, 0);
        let (t, c) = truncate_noise(&xi, 1, 1.0).unwrap();
        assert_eq!(c, 7.0);
        assert!(t.max_radius() <= 2.0);
        let (same, _) = truncate_noise(&xi, 6, 1.0).unwrap();
        assert_eq!(same.coeffs(), xi.field.coeffs());
        let cn: Vec<f64> = (2..=7).map(|n| truncate_noise(&sample_white_noise::<f64>(grid(512), 0, 0), n, 1.0).unwrap().1).collect();
        let ratios: Vec<f64> = cn.iter().zip(2..=7).map(|(c, n)| c / n as f64).collect();
        assert!(ratios.iter().all(|r| *r < 2.0 * std::f64::consts::TAU), "{ratios:?}");
    }

    #[test]
    fn random_band_limited_is_zero_mean_and_band_limited() {
        let g = grid(32);
        let f = random_band_limited::<f64>(g, 5, 1.0, 1, 2).unwrap();
        assert_eq!(f.max_frequency(), 5);
        assert_eq!(f.mean(), 0.0);
        assert!(random_band_limited::<f64>(g, 16, 1.0, 1, 2).is_err());
    }
}
