//! Enhanced pairs `Ξ = (Ξ¹, Ξ²)`, the lift `ℳ(θ, c) = (θ, θ ∘ Kθ − c)`,
//! translations `T_h` and the oscillatory fields `X^{n,c}`.

use std::fs;
use std::path::Path;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::io::{load_field, save_field};
use crate::littlewood_paley::{holder_norm, sup_norm, DyadicPartition};
use crate::noise::{truncate_noise, WhiteNoiseSample};
use crate::paraproduct::{resonant, resonant_sum};
use crate::scalar::Scalar;
use crate::torus::{inverse_laplacian, Grid, SpectralField};

/// A candidate noise together with its renormalized resonant lift.
///
/// Constants in the second component live in its mean coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct EnhancedPair<T> {
    pub first: SpectralField<T>,
    pub second: SpectralField<T>,
}

impl<T: Scalar> EnhancedPair<T> {
    pub fn new(first: SpectralField<T>, second: SpectralField<T>) -> Result<Self> {
        first.require_same_grid(&second)?;
        first.require_zero_mean()?;
        Ok(EnhancedPair { first, second })
    }

    pub fn zeros(grid: Grid) -> Self {
        EnhancedPair { first: SpectralField::zeros(grid), second: SpectralField::zeros(grid) }
    }

    pub fn grid(&self) -> Grid {
        self.first.grid()
    }

    /// `Ξ + (0, −a)`.
    pub fn shift(&self, a: T) -> Self {
        let mut out = self.clone();
        out.second.add_constant(-a);
        out
    }
}

fn require_band<T: Scalar>(u: &SpectralField<T>, what: &str) -> Result<()> {
    if u.is_band_limited() {
        Ok(())
    } else {
        Err(Error::Bandwidth(format!(
            "{what} has frequency {} beyond the band limit {}",
            u.max_frequency(),
            u.grid().band_limit()
        )))
    }
}

/// `ℳ(θ, c) = (θ, θ ∘ Kθ − c)`.
pub fn enhance<T: Scalar>(theta: &SpectralField<T>, c: T, part: &DyadicPartition) -> Result<EnhancedPair<T>> {
    theta.require_zero_mean()?;
    require_band(theta, "theta")?;
    let k = inverse_laplacian(theta)?;
    let mut second = resonant(theta, &k, part)?;
    second.add_constant(-c);
    EnhancedPair::new(theta.clone(), second)
}

/// `‖a¹ − b¹‖_{C^{α−2}} + ‖a² − b²‖_{C^{2α−2}}`.
pub fn h_alpha_dist<T: Scalar>(a: &EnhancedPair<T>, b: &EnhancedPair<T>, alpha: f64, part: &DyadicPartition) -> Result<T> {
    if !(alpha > 2.0 / 3.0 && alpha < 1.0) {
        log::warn!("alpha = {alpha} is outside (2/3, 1)");
    }
    a.first.require_same_grid(&b.first)?;
    let d1 = holder_norm(&(&a.first - &b.first), alpha - 2.0, part)?;
    let d2 = holder_norm(&(&a.second - &b.second), 2.0 * alpha - 2.0, part)?;
    Ok(d1 + d2)
}

/// Component norms of `Ξ` in `C^{α−2} × C^{2α−2}`.
pub fn h_alpha_norms<T: Scalar>(a: &EnhancedPair<T>, alpha: f64, part: &DyadicPartition) -> Result<(T, T)> {
    Ok((holder_norm(&a.first, alpha - 2.0, part)?, holder_norm(&a.second, 2.0 * alpha - 2.0, part)?))
}

/// `T_h Ξ = (Ξ¹ + h, Ξ² + h ∘ Kh + h ∘ KΞ¹ + Ξ¹ ∘ Kh)`.
pub fn translate<T: Scalar>(xi: &EnhancedPair<T>, h: &SpectralField<T>, part: &DyadicPartition) -> Result<EnhancedPair<T>> {
    h.require_zero_mean()?;
    xi.first.require_same_grid(h)?;
    require_band(h, "h")?;
    require_band(&xi.first, "first component")?;
    let kh = inverse_laplacian(h)?;
    let kx = inverse_laplacian(&xi.first)?;
    let corr = resonant_sum(&[(h, &kh), (h, &kx), (&xi.first, &kh)], part)?;
    Ok(EnhancedPair { first: &xi.first + h, second: &xi.second + &corr })
}

/// `X^{n,c}(x) = c^{1/2} 2^{n+1} cos(2^n ⟨z, x⟩)` with `z = (1, 1)`.
pub fn oscillatory<T: Scalar>(n: u32, c: T, grid: Grid) -> Result<SpectralField<T>> {
    if c < T::zero() {
        return Err(Error::InvalidParameter(format!("oscillatory amplitude c = {c} is negative")));
    }
    let p = 1i64.checked_shl(n).filter(|p| *p <= grid.band_limit()).ok_or_else(|| {
        Error::FrequencyOutOfRange(format!("2^{n} exceeds the band limit {} of n={}", grid.band_limit(), grid.n()))
    })?;
    let amp = c.sqrt() * T::lit(p as f64);
    if amp == T::zero() {
        return Ok(SpectralField::zeros(grid));
    }
    SpectralField::real_mode(grid, [p, p], Complex::new(amp, T::zero()))
}

/// Smallest power of two `ν` such that truncating at `ν 2^n` separates the
/// remainder `ξ − ξ^n` from every block of `X^{n,·}` by at least two levels.
pub fn select_nu(n: u32, part: &DyadicPartition) -> f64 {
    let radii = part.radii();
    let rx = 2f64.sqrt() * (n as f64).exp2();
    // Highest block carrying X: largest j with 2^j r_inner < |2^n z|.
    let mut jx = -1;
    while ((jx + 1) as f64).exp2() * radii.rho_inner < rx {
        jx += 1;
    }
    // Every block up to jx + 1 must lie inside the retained ball.
    let need = ((jx + 1) as f64).exp2() * radii.rho_outer / (n as f64).exp2();
    let mut nu = 1.0;
    while nu < need {
        nu *= 2.0;
    }
    nu
}

/// Shift `h = −ξ^n + X^{n, c_n − a}` that moves `Ξ` towards `(0, −a)`.
#[derive(Clone, Debug)]
pub struct ZeroTranslation<T> {
    pub h: SpectralField<T>,
    pub nu: f64,
    pub c_n: f64,
    /// Sup norm of `(ξ − ξ^n) ∘ K X^{n, c_n − a}`; vanishes by construction.
    pub annihilation: f64,
}

pub fn zero_translation_field<T: Scalar>(
    xi: &WhiteNoiseSample<T>,
    n: u32,
    a: f64,
    part: &DyadicPartition,
) -> Result<ZeroTranslation<T>> {
    let grid = xi.field.grid();
    let nu = select_nu(n, part);
    let (xi_n, c_n) = truncate_noise(xi, n, nu)?;
    if c_n < a {
        return Err(Error::ConstantTooSmall { c_n, a });
    }
    let x = oscillatory(n, T::lit(c_n - a), grid)?;
    let rest = &xi.field - &xi_n;
    let kx = inverse_laplacian(&x)?;
    let residual = sup_norm(&resonant(&rest, &kx, part)?).as_f64();
    if residual > 1e-12 {
        return Err(Error::Annihilation(residual));
    }
    Ok(ZeroTranslation { h: &x - &xi_n, nu, c_n, annihilation: residual })
}

const PAIR_HEADER: &str = "GPAM-ENH v1";

/// Writes `first.field`, `second.field` and a `manifest` line to `dir`.
pub fn save_pair<T: Scalar>(dir: impl AsRef<Path>, pair: &EnhancedPair<T>, alpha: f64) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    save_field(dir.join("first.field"), &pair.first)?;
    save_field(dir.join("second.field"), &pair.second)?;
    fs::write(dir.join("manifest"), format!("{PAIR_HEADER} alpha={alpha:?}\n"))?;
    Ok(())
}

pub fn load_pair<T: Scalar>(dir: impl AsRef<Path>) -> Result<(EnhancedPair<T>, f64)> {
    let dir = dir.as_ref();
    let manifest = fs::read_to_string(dir.join("manifest"))?;
    let alpha = manifest
        .trim()
        .strip_prefix(PAIR_HEADER)
        .and_then(|r| r.trim().strip_prefix("alpha="))
        .and_then(|a| a.parse::<f64>().ok())
        .ok_or_else(|| Error::Parse(format!("bad pair manifest '{}'", manifest.trim())))?;
    let pair = EnhancedPair::new(load_field(dir.join("first.field"))?, load_field(dir.join("second.field"))?)?;
    Ok((pair, alpha))
}
