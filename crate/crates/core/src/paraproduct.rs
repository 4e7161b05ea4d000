//! Bony paraproducts `f ≺ g`, `f ≻ g` and the resonant product `f ∘ g`.
//!
//! With `S_{j−1} f = Σ_{i ≤ j−2} Δ_i f`:
//! `f ≺ g = Σ_{j ≥ 1} S_{j−1} f · Δ_j g` and
//! `f ∘ g = Σ_j Δ_j f · (Δ_{j−1} g + Δ_j g + Δ_{j+1} g)`,
//! so that `f ≺ g + f ∘ g + f ≻ g = f g`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::littlewood_paley::{block_list, holder_norm, lp_block, sup_norm, DyadicPartition};
use crate::noise::random_band_limited;
use crate::product::{sum_of_list_products, sum_of_products};
use crate::scalar::Scalar;
use crate::torus::SpectralField;

/// Highest block index that can be nonzero for a field of radius `r`.
fn top_block(r: f64, part: &DyadicPartition) -> i32 {
    let mut j = part.j_max();
    while j >= 0 && part.inner_radius(j) >= r {
        j -= 1;
    }
    j
}

fn all_blocks<T: Scalar>(u: &SpectralField<T>, top: i32, part: &DyadicPartition) -> Result<Vec<SpectralField<T>>> {
    (-1..=top).map(|j| lp_block(u, j, part)).collect()
}

/// `f ≺ g`.
pub fn para_lt<T: Scalar>(f: &SpectralField<T>, g: &SpectralField<T>, part: &DyadicPartition) -> Result<SpectralField<T>> {
    f.require_same_grid(g)?;
    let grid = f.grid();
    let top_g = top_block(g.max_radius(), part);
    let top_f = top_block(f.max_radius(), part);
    if top_g < 1 || f.nnz() == 0 {
        return Ok(SpectralField::zeros(grid));
    }
    let fb = all_blocks(f, top_f.min(top_g - 2), part)?;
    let mut partial = Vec::new();
    let mut s = SpectralField::zeros(grid);
    let mut gb = Vec::new();
    for j in 1..=top_g {
        // S_{j-1} f = Δ_{-1} f + … + Δ_{j-2} f
        if let Some(b) = fb.get(j as usize - 1) {
            s += b;
        }
        partial.push(s.clone());
        gb.push(lp_block(g, j, part)?);
    }
    let pairs: Vec<_> = partial.iter().zip(&gb).collect();
    sum_of_products(&pairs)
}

/// `f ≻ g = g ≺ f`.
pub fn para_gt<T: Scalar>(f: &SpectralField<T>, g: &SpectralField<T>, part: &DyadicPartition) -> Result<SpectralField<T>> {
    para_lt(g, f, part)
}

/// `f ∘ g`.
pub fn resonant<T: Scalar>(f: &SpectralField<T>, g: &SpectralField<T>, part: &DyadicPartition) -> Result<SpectralField<T>> {
    resonant_sum(&[(f, g)], part)
}

/// `Σ_p f_p ∘ g_p`, accumulated with one transform back to coefficients.
pub fn resonant_sum<T: Scalar>(pairs: &[(&SpectralField<T>, &SpectralField<T>)], part: &DyadicPartition) -> Result<SpectralField<T>> {
    let grid = part.grid();
    let mut lists = Vec::new();
    for &(f, g) in pairs {
        f.require_same_grid(g)?;
        if f.grid() != grid {
            return Err(Error::GridMismatch { left: f.grid().n(), right: grid.n() });
        }
        if f.nnz() == 0 || g.nnz() == 0 {
            continue;
        }
        let top_f = top_block(f.max_radius(), part);
        let top_g = top_block(g.max_radius(), part);
        for j in -1..=top_f.min(top_g + 1) {
            let near = block_list(g, j - 1, j + 1, part)?;
            if !near.is_empty() {
                lists.push((block_list(f, j, j, part)?, near));
            }
        }
    }
    Ok(sum_of_list_products(grid, &lists))
}

/// Inequality family probed by [`bony_estimate_check`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BonyKind {
    /// `‖f ≺ g‖_β ≲ ‖f‖_∞ ‖g‖_β`.
    ParaBounded,
    /// `‖f ≺ g‖_{α+β} ≲ ‖f‖_α ‖g‖_β` for `α < 0`.
    ParaNegative,
    /// `‖f ∘ g‖_{α+β} ≲ ‖f‖_α ‖g‖_β` for `α + β > 0`.
    ResonantPositive,
}

impl fmt::Display for BonyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BonyKind::ParaBounded => "para_bounded",
            BonyKind::ParaNegative => "para_negative",
            BonyKind::ResonantPositive => "resonant_positive",
        })
    }
}

impl FromStr for BonyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "para_bounded" => Ok(BonyKind::ParaBounded),
            "para_negative" => Ok(BonyKind::ParaNegative),
            "resonant_positive" => Ok(BonyKind::ResonantPositive),
            other => Err(Error::Parse(format!("unknown estimate kind '{other}'"))),
        }
    }
}

/// Random ensemble of pairs `(f, g)`: `f` and `g` are band-limited with
/// coefficient decay chosen so their Hölder norms are of order one.
#[derive(Clone, Copy, Debug)]
pub struct BonyEnsemble {
    pub kmax: i64,
    pub samples: u64,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    pub decay_f: f64,
    pub decay_g: f64,
}

/// Ensemble of ratios `LHS / RHS`.
#[derive(Clone, Debug)]
pub struct RatioReport {
    pub ratios: Vec<f64>,
    pub max: f64,
}

impl RatioReport {
    fn new(ratios: Vec<f64>) -> Self {
        let max = ratios.iter().copied().fold(0.0, f64::max);
        RatioReport { ratios, max }
    }
}

/// Empirical ratio `LHS / RHS` of one of the Bony estimates over an ensemble.
pub fn bony_estimate_check(kind: BonyKind, ens: &BonyEnsemble, part: &DyadicPartition) -> Result<RatioReport> {
    let (a, b) = (ens.alpha, ens.beta);
    match kind {
        BonyKind::ParaNegative if a >= 0.0 => {
            return Err(Error::InvalidExponents(format!("para_negative needs alpha < 0, got {a}")))
        }
        BonyKind::ResonantPositive if a + b <= 0.0 => {
            return Err(Error::InvalidExponents(format!("resonant_positive needs alpha + beta > 0, got {}", a + b)))
        }
        _ => {}
    }
    let grid = part.grid();
    let mut ratios = Vec::with_capacity(ens.samples as usize);
    for s in 0..ens.samples {
        let f: SpectralField<f64> = random_band_limited(grid, ens.kmax, ens.decay_f, ens.seed, 2 * s)?;
        let g: SpectralField<f64> = random_band_limited(grid, ens.kmax, ens.decay_g, ens.seed, 2 * s + 1)?;
        ratios.push(bony_ratio(kind, &f, &g, a, b, part)?);
    }
    Ok(RatioReport::new(ratios))
}

/// `LHS / RHS` for one pair; zero when `LHS = 0`.
pub fn bony_ratio(kind: BonyKind, f: &SpectralField<f64>, g: &SpectralField<f64>, a: f64, b: f64, part: &DyadicPartition) -> Result<f64> {
    let (lhs, rhs) = match kind {
        BonyKind::ParaBounded => (holder_norm(&para_lt(f, g, part)?, b, part)?, sup_norm(f) * holder_norm(g, b, part)?),
        BonyKind::ParaNegative => (
            holder_norm(&para_lt(f, g, part)?, a + b, part)?,
            holder_norm(f, a, part)? * holder_norm(g, b, part)?,
        ),
        BonyKind::ResonantPositive => (
            holder_norm(&resonant(f, g, part)?, a + b, part)?,
            holder_norm(f, a, part)? * holder_norm(g, b, part)?,
        ),
    };
    if lhs == 0.0 {
        return Ok(0.0);
    }
    if rhs == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(lhs / rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::product::dealiased_product;
    use crate::torus::{inverse_laplacian, Grid};
    use num_complex::Complex;
    use proptest::prelude::*;

    fn setup(n: usize) -> (Grid, DyadicPartition) {
        let g = Grid::new(n).unwrap();
        (g, DyadicPartition::new(g))
    }

    fn rand_field(g: Grid, kmax: i64, seed: u64) -> SpectralField<f64> {
        let mut f = random_band_limited(g, kmax, 0.5, seed, 0).unwrap();
        f.add_constant(0.3);
        f
    }

    #[test]
    fn constant_right_factor_gives_zero() {
        let (g, part) = setup(32);
        let f = rand_field(g, 7, 1);
        let c = SpectralField::constant(g, 2.0);
        assert_eq!(para_lt(&f, &c, &part).unwrap().nnz(), 0);
    }

    #[test]
    fn one_para_g_is_high_blocks_of_g() {
        let (g, part) = setup(64);
        let one = SpectralField::constant(g, 1.0);
        let h = rand_field(g, 15, 2);
        let lhs = para_lt(&one, &h, &part).unwrap();
        let mut rhs = SpectralField::zeros(g);
        for j in 1..=part.j_max() {
            rhs += &lp_block(&h, j, &part).unwrap();
        }
        assert!(lhs.max_coeff_diff(&rhs) < 1e-14);
    }

    #[test]
    fn bony_reconstruction() {
        let (g, part) = setup(64);
        for s in 0..5 {
            let f = rand_field(g, 15, 10 + s);
            let h = rand_field(g, 15, 20 + s);
            let mut sum = para_lt(&f, &h, &part).unwrap();
            sum += &resonant(&f, &h, &part).unwrap();
            sum += &para_gt(&f, &h, &part).unwrap();
            let p = dealiased_product(&f, &h).unwrap();
            assert!(sup_norm(&(&sum - &p)) < 1e-10);
        }
    }

    #[test]
    fn resonant_is_symmetric_and_para_gt_swaps() {
        let (g, part) = setup(32);
        let f = rand_field(g, 7, 3);
        let h = rand_field(g, 7, 4);
        let a = resonant(&f, &h, &part).unwrap();
        let b = resonant(&h, &f, &part).unwrap();
        assert!(a.max_coeff_diff(&b) < 1e-14);
        assert_eq!(para_gt(&f, &h, &part).unwrap().coeffs(), para_lt(&h, &f, &part).unwrap().coeffs());
    }

    #[test]
    fn separated_frequencies_have_no_resonance() {
        let (g, part) = setup(128);
        // |k| = 1 lives in blocks −1, 0; |k| = 40 in blocks 3, 4.
        let f = SpectralField::real_mode(g, [1, 0], Complex::new(1.0, 0.0)).unwrap();
        let h = SpectralField::real_mode(g, [40, 0], Complex::new(1.0, 0.0)).unwrap();
        assert_eq!(resonant(&f, &h, &part).unwrap().nnz(), 0);
    }

    #[test]
    fn oscillatory_resonance_is_half_the_double_frequency() {
        // Y = 2^n e^{i 2^n ⟨z,x⟩} with z = (1, 1): Y ∘ KY = ½ e^{i 2^{n+1} ⟨z,x⟩}.
        // Complex fields are assembled from their real and imaginary parts.
        let (g, part) = setup(256);
        for n in 2..=5u32 {
            let p = 1i64 << n;
            let amp = p as f64;
            let re = SpectralField::real_mode(g, [p, p], Complex::new(0.5 * amp, 0.0)).unwrap();
            let im = SpectralField::real_mode(g, [p, p], Complex::new(0.0, -0.5 * amp)).unwrap();
            let (kre, kim) = (inverse_laplacian(&re).unwrap(), inverse_laplacian(&im).unwrap());
            // (a + ib) ∘ (c + id) = (a∘c − b∘d) + i (a∘d + b∘c)
            let real_part = &resonant(&re, &kre, &part).unwrap() - &resonant(&im, &kim, &part).unwrap();
            let imag_part = &resonant(&re, &kim, &part).unwrap() + &resonant(&im, &kre, &part).unwrap();
            let q = 2 * p;
            let expect_re = SpectralField::real_mode(g, [q, q], Complex::new(0.25, 0.0)).unwrap();
            let expect_im = SpectralField::real_mode(g, [q, q], Complex::new(0.0, -0.25)).unwrap();
            assert!(real_part.max_coeff_diff(&expect_re) < 1e-14, "n = {n}");
            assert!(imag_part.max_coeff_diff(&expect_im) < 1e-14, "n = {n}");
        }
    }

    #[test]
    fn estimate_checks_are_finite_and_validated() {
        let (_, part) = setup(32);
        let ens = BonyEnsemble { kmax: 7, samples: 8, seed: 1, alpha: 0.8, beta: -0.5, decay_f: 2.0, decay_g: 0.5 };
        let r = bony_estimate_check(BonyKind::ParaBounded, &ens, &part).unwrap();
        assert!(r.max.is_finite() && r.max > 0.0);
        let r = bony_estimate_check(BonyKind::ResonantPositive, &ens, &part).unwrap();
        assert!(r.max.is_finite() && r.max > 0.0);
        assert!(bony_estimate_check(BonyKind::ParaNegative, &ens, &part).is_err());
        let bad = BonyEnsemble { beta: -0.9, ..ens };
        assert!(bony_estimate_check(BonyKind::ResonantPositive, &bad, &part).is_err());
        let zero = SpectralField::zeros(part.grid());
        let g = rand_field(part.grid(), 7, 0);
        assert_eq!(bony_ratio(BonyKind::ParaBounded, &zero, &g, 0.8, -0.5, &part).unwrap(), 0.0);
        assert_eq!("para_negative".parse::<BonyKind>().unwrap(), BonyKind::ParaNegative);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn operators_are_bilinear(s1 in 0u64..5000, s2 in 0u64..5000, s3 in 0u64..5000, a in -2.0f64..2.0) {
            let (g, part) = setup(32);
            let (f, h, w) = (rand_field(g, 7, s1), rand_field(g, 7, s2), rand_field(g, 7, s3));
            let mut comb = f.scale(a);
            comb += &w;
            for op in [para_lt::<f64>, resonant::<f64>, para_gt::<f64>] {
                let lhs = op(&comb, &h, &part).unwrap();
                let mut rhs = op(&f, &h, &part).unwrap().scale(a);
                rhs += &op(&w, &h, &part).unwrap();
                prop_assert!(lhs.max_coeff_diff(&rhs) < 1e-12);
                let lhs2 = op(&h, &comb, &part).unwrap();
                let mut rhs2 = op(&h, &f, &part).unwrap().scale(a);
                rhs2 += &op(&h, &w, &part).unwrap();
                prop_assert!(lhs2.max_coeff_diff(&rhs2) < 1e-12);
            }
        }

        #[test]
        fn reconstruction_holds(s1 in 0u64..5000, s2 in 0u64..5000) {
            let (g, part) = setup(32);
            let (f, h) = (rand_field(g, 7, s1), rand_field(g, 7, s2));
            let mut sum = para_lt(&f, &h, &part).unwrap();
            sum += &resonant(&f, &h, &part).unwrap();
            sum += &para_gt(&f, &h, &part).unwrap();
            prop_assert!(sum.max_coeff_diff(&dealiased_product(&f, &h).unwrap()) < 1e-12);
        }
    }
}
