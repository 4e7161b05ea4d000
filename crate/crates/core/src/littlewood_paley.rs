//! Dyadic partition of unity, Littlewood–Paley blocks and Besov-type norms.
//!
//! The bump is `χ(ξ) = η(3|ξ|/4)` with the smooth transition
//! `η(r) = g(2−r) / (g(2−r) + g(r−1))`, `g(t) = e^{−1/t}` for `t > 0`, and the
//! annulus function is `ρ(ξ) = χ(ξ/2) − χ(ξ)`. Block `Δ_{−1}` multiplies by
//! `χ`, block `Δ_j` (`j ≥ 0`) by `ρ(2^{−j}·)`.
//!
//! All `L^p` norms use the normalized measure `dx / (2π)²`, so `‖1‖_{L^p} = 1`.

use std::fmt;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::product::{list_values, values_on, ModeList};
use crate::scalar::Scalar;
use crate::torus::{Grid, SpectralField};

fn g(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Smooth transition, `1` on `[0, 1]` and `0` on `[2, ∞)`.
pub fn eta(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        let a = g(2.0 - r);
        a / (a + g(r - 1.0))
    }
}

/// The ball multiplier `χ` as a function of `|ξ|`.
pub fn chi(r: f64) -> f64 {
    eta(0.75 * r)
}

/// The annulus multiplier `ρ` as a function of `|ξ|`.
pub fn rho(r: f64) -> f64 {
    chi(0.5 * r) - chi(r)
}

/// Multiplier of block `j` (`j = −1` is the ball) at radius `r`.
pub fn block_weight(j: i32, r: f64) -> f64 {
    if j < 0 {
        chi(r)
    } else {
        let s = (-j as f64).exp2();
        chi(0.5 * s * r) - chi(s * r)
    }
}

/// Support radii located by a fine scan refined by bisection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupportRadii {
    /// Smallest radius where `χ` vanishes.
    pub chi_outer: f64,
    /// Inner radius of the support of `ρ`.
    pub rho_inner: f64,
    /// Outer radius of the support of `ρ`.
    pub rho_outer: f64,
}

impl SupportRadii {
    fn scan() -> Self {
        let step = 1e-3;
        let upper = 8.0;
        let mut chi_outer = None;
        let mut rho_inner = None;
        let mut rho_outer = None;
        let mut r = 0.0;
        while r < upper {
            let (a, b) = (r, r + step);
            if chi_outer.is_none() && chi(a) > 0.0 && chi(b) == 0.0 {
                chi_outer = Some(bisect(a, b, |x| chi(x) > 0.0));
            }
            if rho_inner.is_none() && rho(a) == 0.0 && rho(b) > 0.0 {
                rho_inner = Some(bisect(a, b, |x| rho(x) == 0.0));
            }
            if rho_outer.is_none() && rho(a) > 0.0 && rho(b) == 0.0 {
                rho_outer = Some(bisect(a, b, |x| rho(x) > 0.0));
            }
            r = b;
        }
        SupportRadii {
            chi_outer: chi_outer.expect("χ has compact support"),
            rho_inner: rho_inner.expect("ρ vanishes near zero"),
            rho_outer: rho_outer.expect("ρ has compact support"),
        }
    }
}

/// Boundary of `{x : left(x)}` inside `[a, b]`, assuming `left(a)` and `!left(b)`.
fn bisect(mut a: f64, mut b: f64, left: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        if left(m) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Sampled partition for one grid.
///
/// Weights depend on `|k|²` only, so they are tabulated per squared radius.
/// Every mode lies in at most two consecutive blocks; the table stores the
/// lower block index and both weights.
#[derive(Clone)]
pub struct DyadicPartition {
    grid: Grid,
    j_max: i32,
    radii: SupportRadii,
    lo: Vec<i8>,
    w_lo: Vec<f64>,
    w_hi: Vec<f64>,
    max_overlap: usize,
}

impl fmt::Debug for DyadicPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DyadicPartition")
            .field("grid", &self.grid)
            .field("j_max", &self.j_max)
            .field("radii", &self.radii)
            .field("max_overlap", &self.max_overlap)
            .finish()
    }
}

impl DyadicPartition {
    pub fn new(grid: Grid) -> Self {
        let j_max = grid.n().trailing_zeros() as i32 - 1;
        let radii = SupportRadii::scan();
        let h = grid.half();
        let r2_max = (2 * h * h) as usize;
        let mut lo = vec![0i8; r2_max + 1];
        let mut w_lo = vec![0.0; r2_max + 1];
        let mut w_hi = vec![0.0; r2_max + 1];
        let mut max_overlap = 0;
        for r2 in 0..=r2_max {
            let r = (r2 as f64).sqrt();
            let guess = if r > 0.0 { (3.0 * r / 16.0).log2().floor() as i32 } else { -1 };
            let mut hits = Vec::with_capacity(2);
            for j in (guess - 1).max(-1)..=(guess + 2).min(j_max) {
                let w = block_weight(j, r);
                if w != 0.0 {
                    hits.push((j, w));
                }
            }
            max_overlap = max_overlap.max(hits.len());
            assert!(!hits.is_empty() && hits.len() <= 2, "partition overlap at |k|² = {r2}");
            lo[r2] = hits[0].0 as i8;
            w_lo[r2] = hits[0].1;
            if let Some(&(j, w)) = hits.get(1) {
                assert_eq!(j, hits[0].0 + 1);
                w_hi[r2] = w;
            }
        }
        DyadicPartition { grid, j_max, radii, lo, w_lo, w_hi, max_overlap }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Largest block index; blocks beyond it vanish on the grid.
    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    pub fn radii(&self) -> SupportRadii {
        self.radii
    }

    /// Largest number of blocks sharing one grid mode.
    pub fn max_overlap(&self) -> usize {
        self.max_overlap
    }

    /// Sampled multiplier of block `j` at a mode with squared radius `r2`.
    pub fn weight_r2(&self, j: i32, r2: i64) -> f64 {
        let r2 = r2 as usize;
        let lo = self.lo[r2] as i32;
        if j == lo {
            self.w_lo[r2]
        } else if j == lo + 1 {
            self.w_hi[r2]
        } else {
            0.0
        }
    }

    /// Sampled multiplier of block `j` at mode `k`.
    pub fn weight(&self, j: i32, k: [i64; 2]) -> f64 {
        self.weight_r2(j, k[0] * k[0] + k[1] * k[1])
    }

    /// Radius beyond which block `j` vanishes.
    pub fn outer_radius(&self, j: i32) -> f64 {
        if j < 0 {
            self.radii.chi_outer
        } else {
            (j as f64).exp2() * self.radii.rho_outer
        }
    }

    /// Radius below which block `j` vanishes (zero for the ball).
    pub fn inner_radius(&self, j: i32) -> f64 {
        if j < 0 {
            0.0
        } else {
            (j as f64).exp2() * self.radii.rho_inner
        }
    }

    fn check_block(&self, j: i32) -> Result<()> {
        if j < -1 || j > self.j_max {
            return Err(Error::BlockOutOfRange { j, j_max: self.j_max });
        }
        Ok(())
    }

    /// SHA-256 of the grid size and the sampled weight table.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.grid.n() as u64).to_le_bytes());
        for ((l, a), b) in self.lo.iter().zip(&self.w_lo).zip(&self.w_hi) {
            h.update([*l as u8]);
            h.update(a.to_le_bytes());
            h.update(b.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Audit rows `(j, |k|, weight)` for every distinct grid radius with a
    /// nonzero weight.
    pub fn dump_rows(&self) -> Vec<(i32, f64, f64)> {
        let h = self.grid.half() - 1;
        let mut present = vec![false; self.lo.len()];
        for k1 in 0..=h {
            for k2 in 0..=k1 {
                present[(k1 * k1 + k2 * k2) as usize] = true;
            }
        }
        let mut rows = Vec::new();
        for (r2, _) in present.iter().enumerate().filter(|(_, p)| **p) {
            let r = (r2 as f64).sqrt();
            let lo = self.lo[r2] as i32;
            rows.push((lo, r, self.w_lo[r2]));
            if self.w_hi[r2] != 0.0 {
                rows.push((lo + 1, r, self.w_hi[r2]));
            }
        }
        rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        rows
    }
}

/// `Δ_j u`.
pub fn lp_block<T: Scalar>(u: &SpectralField<T>, j: i32, part: &DyadicPartition) -> Result<SpectralField<T>> {
    Ok(block_list(u, j, j, part)?.to_field(u.grid()))
}

/// Nonzero modes of `Δ_lo u + … + Δ_hi u`; indices are clamped to
/// `[−1, j_max]`.
pub(crate) fn block_list<T: Scalar>(u: &SpectralField<T>, lo: i32, hi: i32, part: &DyadicPartition) -> Result<ModeList<T>> {
    let (lo, hi) = (lo.max(-1), hi.min(part.j_max()));
    part.check_block(lo)?;
    part.check_block(hi)?;
    if u.grid() != part.grid() {
        return Err(Error::GridMismatch { left: u.grid().n(), right: part.grid().n() });
    }
    let grid = u.grid();
    let n = grid.n();
    let reach = (part.outer_radius(hi).ceil() as i64).min(grid.half());
    let inner2 = part.inner_radius(lo).powi(2);
    let src = u.coeffs();
    let mut modes = Vec::new();
    for k1 in -reach..reach {
        let row = k1.rem_euclid(n as i64) as usize * n;
        for k2 in -reach..reach {
            let z = src[row + k2.rem_euclid(n as i64) as usize];
            if z.re == T::zero() && z.im == T::zero() {
                continue;
            }
            let r2 = k1 * k1 + k2 * k2;
            if (r2 as f64) < inner2 {
                continue;
            }
            let w: f64 = (lo..=hi).map(|j| part.weight_r2(j, r2)).sum();
            if w != 0.0 {
                modes.push(([k1, k2], z * T::lit(w)));
            }
        }
    }
    Ok(ModeList::new(modes))
}

fn list_lp_norm<T: Scalar>(list: &ModeList<T>, n: usize, p: Exponent) -> T {
    if p == Exponent::Finite(2.0) {
        return list.modes.iter().fold(T::zero(), |s, (_, z)| s + z.norm_sqr()).sqrt();
    }
    lp_of_values(list_values(list, sample_size(list.kmax, n)).into_iter(), p)
}

/// Largest block index that can be nonzero for `u`.
fn last_block<T: Scalar>(u: &SpectralField<T>, part: &DyadicPartition) -> i32 {
    let r = u.max_radius();
    let mut j = part.j_max();
    while j >= 0 && part.inner_radius(j) >= r {
        j -= 1;
    }
    j
}

/// All blocks `Δ_{−1} u, …, Δ_{j_max} u`.
pub fn blocks<T: Scalar>(u: &SpectralField<T>, part: &DyadicPartition) -> Result<Vec<SpectralField<T>>> {
    (-1..=part.j_max()).map(|j| lp_block(u, j, part)).collect()
}

/// Integrability exponent in `[1, ∞]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_infinite() && p > 0.0 {
            Ok(Exponent::Infinity)
        } else if p.is_finite() && p >= 1.0 {
            Ok(Exponent::Finite(p))
        } else {
            Err(Error::InvalidExponents(format!("integrability exponent {p} is not in [1, ∞]")))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Exponent::Finite(p) => p,
            Exponent::Infinity => f64::INFINITY,
        }
    }
}

/// Regularity `alpha` with integrability exponents `p`, `q`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BesovIndex {
    pub alpha: f64,
    pub p: Exponent,
    pub q: Exponent,
}

impl BesovIndex {
    pub fn new(alpha: f64, p: f64, q: f64) -> Result<Self> {
        Ok(BesovIndex { alpha, p: Exponent::new(p)?, q: Exponent::new(q)? })
    }

    pub fn holder(alpha: f64) -> Self {
        BesovIndex { alpha, p: Exponent::Infinity, q: Exponent::Infinity }
    }

    pub fn sobolev(alpha: f64) -> Self {
        BesovIndex { alpha, p: Exponent::Finite(2.0), q: Exponent::Finite(2.0) }
    }
}

/// Sampling size for a field whose modes satisfy `|k_i| <= kmax`: twice the
/// smallest power of two that resolves it, capped at twice the grid.
fn sample_size(kmax: i64, n: usize) -> usize {
    let mut b = 2usize;
    while (b as i64) <= 2 * kmax {
        b *= 2;
    }
    (2 * b).min(2 * n)
}

fn lp_of_values<T: Scalar>(vals: impl Iterator<Item = T>, p: Exponent) -> T {
    match p {
        Exponent::Infinity => vals.fold(T::zero(), |m, v| m.max(v.abs())),
        Exponent::Finite(p) => {
            let pt = T::lit(p);
            let (s, count) = vals.fold((T::zero(), 0usize), |(s, c), v| (s + v.abs().powf(pt), c + 1));
            (s / T::lit(count as f64)).powf(T::one() / pt)
        }
    }
}

/// `‖u‖_{L^p}` for the normalized measure; `p = ∞` is a maximum over a
/// 2x-oversampled grid.
pub fn lp_norm<T: Scalar>(u: &SpectralField<T>, p: Exponent) -> T {
    if p == Exponent::Finite(2.0) {
        return u.l2_norm();
    }
    let m = sample_size(u.max_frequency(), u.grid().n());
    lp_of_values(values_on(u, m).into_iter(), p)
}

/// Supremum of `|u|` over the oversampled grid.
pub fn sup_norm<T: Scalar>(u: &SpectralField<T>) -> T {
    lp_norm(u, Exponent::Infinity)
}

/// `L^p` norms of the blocks `Δ_{−1} u, …, Δ_{j_max} u`.
pub fn block_lp_norms<T: Scalar>(u: &SpectralField<T>, p: Exponent, part: &DyadicPartition) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); (part.j_max() + 2) as usize];
    if u.nnz() == 0 {
        return Ok(out);
    }
    for j in -1..=last_block(u, part) {
        let b = block_list(u, j, j, part)?;
        if !b.is_empty() {
            out[(j + 1) as usize] = list_lp_norm(&b, u.grid().n(), p);
        }
    }
    Ok(out)
}

/// `‖u‖_{B^α_{p,q}}`, with the block sum truncated at `j_max`.
pub fn besov_norm<T: Scalar>(u: &SpectralField<T>, idx: BesovIndex, part: &DyadicPartition) -> Result<T> {
    let norms = block_lp_norms(u, idx.p, part)?;
    let weighted = norms.iter().enumerate().map(|(i, n)| T::lit((idx.alpha * (i as f64 - 1.0)).exp2()) * *n);
    Ok(match idx.q {
        Exponent::Infinity => weighted.fold(T::zero(), |m, v| m.max(v)),
        Exponent::Finite(q) => {
            let qt = T::lit(q);
            weighted.fold(T::zero(), |s, v| s + v.powf(qt)).powf(T::one() / qt)
        }
    })
}

/// `‖u‖_{C^α} = max_j 2^{jα} sup |Δ_j u|`.
pub fn holder_norm<T: Scalar>(u: &SpectralField<T>, alpha: f64, part: &DyadicPartition) -> Result<T> {
    besov_norm(u, BesovIndex::holder(alpha), part)
}

/// `‖u‖_{H^α} = (Σ_j 2^{2jα} ‖Δ_j u‖²_{L²})^{1/2}`.
pub fn sobolev_norm<T: Scalar>(u: &SpectralField<T>, alpha: f64, part: &DyadicPartition) -> Result<T> {
    besov_norm(u, BesovIndex::sobolev(alpha), part)
}

/// Ratio `‖u‖_{B^{α−2(1/p₁−1/p₂)}_{p₂,p₂}} / ‖u‖_{B^α_{p₁,p₁}}`.
pub fn besov_embedding_check<T: Scalar>(
    u: &SpectralField<T>,
    alpha: f64,
    p1: f64,
    p2: f64,
    part: &DyadicPartition,
) -> Result<T> {
    if p1 > p2 {
        return Err(Error::InvalidExponents(format!("embedding needs p1 <= p2, got {p1} > {p2}")));
    }
    let lower = BesovIndex::new(alpha, p1, p1)?;
    let shift = 2.0 * (1.0 / p1 - 1.0 / p2);
    let upper = BesovIndex::new(alpha - shift, p2, p2)?;
    let den = besov_norm(u, lower, part)?;
    if den == T::zero() {
        return Err(Error::ZeroDenominator);
    }
    Ok(besov_norm(u, upper, part)? / den)
}
