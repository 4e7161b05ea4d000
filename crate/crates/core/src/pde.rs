//! Classical solutions of `∂_t v = Δv + f(v) h − c f′(v) f(v)` on the torus.
//!
//! Time stepping uses exponential integrators built on the mild form
//! `v(t) = P_t u₀ + ∫₀^t P_{t−s} N(v_s) ds`; the heat part is exact per mode.
//! `Picard` iterates the discretized mild map `Γ` (exponential trapezoid) to
//! a fixed point, halving the window whenever the observed contraction factor
//! is not below `1/2`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::enhancement::EnhancedPair;
use crate::error::{Error, Result};
use crate::io::{field_hash, load_field, parse_key_values, save_field};
use crate::littlewood_paley::DyadicPartition;
use crate::noise::{mollify, random_band_limited, renorm_constant, Mollifier, WhiteNoiseSample};
use crate::paraproduct::resonant;
use crate::product::{dealiased_product, map_oversampled, values_on};
use crate::scalar::Scalar;
use crate::torus::{czero, fft_forward, inverse_laplacian, mode_norm_sqr, Grid, SpectralField};

/// Reaction function `f` with closed-form `f′` and `f″`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Nonlinearity {
    /// `f(u) = u`.
    Identity,
    /// `f(u) = 1`.
    ConstantOne,
    /// `f(u) = sin u`.
    Sine,
    /// `f(u) = exp(−1/(1 − u²))` on `|u| < 1`, zero elsewhere.
    Bump,
}

impl Nonlinearity {
    pub const ALL: [Nonlinearity; 4] = [Nonlinearity::Identity, Nonlinearity::ConstantOne, Nonlinearity::Sine, Nonlinearity::Bump];

    pub fn f<T: Scalar>(self, u: T) -> T {
        match self {
            Nonlinearity::Identity => u,
            Nonlinearity::ConstantOne => T::one(),
            Nonlinearity::Sine => u.sin(),
            Nonlinearity::Bump => {
                let s = T::one() - u * u;
                if s > T::zero() {
                    (-s.recip()).exp()
                } else {
                    T::zero()
                }
            }
        }
    }

    pub fn df<T: Scalar>(self, u: T) -> T {
        match self {
            Nonlinearity::Identity => T::one(),
            Nonlinearity::ConstantOne => T::zero(),
            Nonlinearity::Sine => u.cos(),
            Nonlinearity::Bump => {
                let s = T::one() - u * u;
                if s > T::zero() {
                    self.f(u) * (-T::lit(2.0) * u / (s * s))
                } else {
                    T::zero()
                }
            }
        }
    }

    pub fn d2f<T: Scalar>(self, u: T) -> T {
        match self {
            Nonlinearity::Identity | Nonlinearity::ConstantOne => T::zero(),
            Nonlinearity::Sine => -u.sin(),
            Nonlinearity::Bump => {
                let s = T::one() - u * u;
                if s > T::zero() {
                    let u2 = u * u;
                    let s2 = s * s;
                    self.f(u) * (T::lit(4.0) * u2 / (s2 * s2) - T::lit(2.0) / s2 - T::lit(8.0) * u2 / (s2 * s))
                } else {
                    T::zero()
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Nonlinearity::Identity => "identity",
            Nonlinearity::ConstantOne => "constant_one",
            Nonlinearity::Sine => "sine",
            Nonlinearity::Bump => "bump",
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Nonlinearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Nonlinearity::ALL
            .into_iter()
            .find(|f| f.name() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown nonlinearity '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Etd1,
    Etd2rk,
    Picard,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Etd1 => "etd1",
            Scheme::Etd2rk => "etd2rk",
            Scheme::Picard => "picard",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "etd1" => Ok(Scheme::Etd1),
            "etd2rk" => Ok(Scheme::Etd2rk),
            "picard" => Ok(Scheme::Picard),
            other => Err(Error::Parse(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveConfig {
    pub t_end: f64,
    /// Requested step; shortened if needed so that it divides `t_end`.
    pub dt: f64,
    pub scheme: Scheme,
    /// Tolerance on `sup_m ‖v_m^{(k+1)} − v_m^{(k)}‖_{L²}`, relative to
    /// `max(1, sup_m ‖v_m‖_{L²})`.
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Store every `snap_every`-th step.
    pub snap_every: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { t_end: 1.0, dt: 1e-3, scheme: Scheme::Etd2rk, picard_tol: 1e-10, picard_max_iter: 200, snap_every: 1 }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return bad(format!("T must be finite and >= 0, got {}", self.t_end));
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.picard_tol > 0.0) {
            return bad(format!("picard_tol must be > 0, got {}", self.picard_tol));
        }
        if self.picard_max_iter == 0 || self.snap_every == 0 {
            return bad("picard_max_iter and snap_every must be positive".into());
        }
        Ok(())
    }

    /// Number of steps and the uniform step actually used.
    pub fn steps(&self) -> (usize, f64) {
        if self.t_end == 0.0 {
            return (0, self.dt);
        }
        let n = ((self.t_end / self.dt) - 1e-9).ceil().max(1.0) as usize;
        (n, self.t_end / n as f64)
    }
}

/// Provenance of a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMeta {
    pub c: f64,
    pub f: Nonlinearity,
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    pub h_hash: String,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<f64>,
    pub states: Vec<SpectralField<T>>,
    /// First time at which the state stopped being finite, if any.
    pub exploded_at: Option<f64>,
    pub meta: RunMeta,
}

impl<T: Scalar> Trajectory<T> {
    pub fn last(&self) -> &SpectralField<T> {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// Per-mode exponential weights for one step `dt` of `∂_t v = (Δ − s) v + N`.
struct Weights<T> {
    e: Vec<T>,
    a0: Vec<T>,
    a1: Vec<T>,
    /// `a0 − a1`.
    b: Vec<T>,
}

impl<T: Scalar> Weights<T> {
    fn new(grid: Grid, dt: f64, shift: f64) -> Self {
        let r2max = 2 * (grid.half() * grid.half()) as usize;
        let mut table = vec![(0.0, 0.0, 0.0); r2max + 1];
        for (r2, w) in table.iter_mut().enumerate() {
            let l = (r2 as f64 + shift) * dt;
            let e = (-l).exp();
            let (a0, a1) = if l.abs() < 1e-3 {
                let a0 = 1.0 - l / 2.0 + l * l / 6.0 - l * l * l / 24.0 + l.powi(4) / 120.0;
                let a1 = 0.5 - l / 3.0 + l * l / 8.0 - l.powi(3) / 30.0 + l.powi(4) / 144.0;
                (a0, a1)
            } else {
                let one_minus_e = -(-l).exp_m1();
                (one_minus_e / l, (one_minus_e - l * e) / (l * l))
            };
            *w = (e, dt * a0, dt * a1);
        }
        let len = grid.len();
        let mut out = Weights { e: Vec::with_capacity(len), a0: Vec::with_capacity(len), a1: Vec::with_capacity(len), b: Vec::with_capacity(len) };
        for (_, k) in grid.modes() {
            let (e, a0, a1) = table[mode_norm_sqr(k) as usize];
            out.e.push(T::lit(e));
            out.a0.push(T::lit(a0));
            out.a1.push(T::lit(a1));
            out.b.push(T::lit(a0 - a1));
        }
        out
    }
}

/// `Σ_p w_p ⊙ u_p` mode-wise.
fn combine<T: Scalar>(grid: Grid, terms: &[(&[T], &SpectralField<T>)]) -> SpectralField<T> {
    let out: Vec<Complex<T>> = (0..grid.len())
        .map(|i| terms.iter().fold(czero::<T>(), |acc, (w, u)| acc + u.coeffs()[i] * w[i]))
        .collect();
    SpectralField::from_coeffs(grid, out).expect("grid-sized buffer")
}

/// `N(v) = P(f(v) h) − c P(f′(v) f(v))`.
struct Rhs<'a, T> {
    h: &'a SpectralField<T>,
    c: T,
    f: Nonlinearity,
}

impl<T: Scalar> Rhs<'_, T> {
    fn eval(&self, v: &SpectralField<T>) -> Result<SpectralField<T>> {
        match self.f {
            Nonlinearity::Identity => {
                let mut n = dealiased_product(v, self.h)?;
                if self.c != T::zero() {
                    n.axpy(-self.c, v);
                }
                Ok(n)
            }
            Nonlinearity::ConstantOne => Ok(self.h.clone()),
            f => {
                let c = self.c;
                map_oversampled(v, self.h, move |a, b| {
                    let fa = f.f(a);
                    fa * b - c * f.df(a) * fa
                })
            }
        }
    }
}

fn is_finite<T: Scalar>(u: &SpectralField<T>) -> bool {
    u.coeffs().iter().all(|c| c.re.is_finite() && c.im.is_finite())
}

fn check_inputs<T: Scalar>(u0: &SpectralField<T>, h: &SpectralField<T>) -> Result<()> {
    u0.require_same_grid(h)?;
    h.require_zero_mean()?;
    for (u, what) in [(u0, "u0"), (h, "h")] {
        if !u.is_band_limited() {
            return Err(Error::Bandwidth(format!(
                "{what} has frequency {} beyond the band limit {}",
                u.max_frequency(),
                u.grid().band_limit()
            )));
        }
    }
    Ok(())
}

/// `𝒮_c(u₀, h)`: the classical solution on `[0, T]`.
pub fn solve_classical<T: Scalar>(
    u0: &SpectralField<T>,
    h: &SpectralField<T>,
    c: T,
    f: Nonlinearity,
    cfg: &SolveConfig,
) -> Result<Trajectory<T>> {
    cfg.validate()?;
    check_inputs(u0, h)?;
    let grid = u0.grid();
    let (steps, dt) = cfg.steps();
    // For f = identity the `−c v` term is linear and is propagated exactly.
    let absorb = f == Nonlinearity::Identity && cfg.scheme != Scheme::Picard;
    let w = Weights::<T>::new(grid, dt, if absorb { c.as_f64() } else { 0.0 });
    let rhs = Rhs { h, c: if absorb { T::zero() } else { c }, f };
    let meta = RunMeta {
        c: c.as_f64(),
        f,
        scheme: cfg.scheme,
        dt,
        t_end: cfg.t_end,
        h_hash: field_hash(h),
        seed: None,
    };
    let mut traj = Trajectory { times: vec![0.0], states: vec![u0.clone()], exploded_at: None, meta };
    if cfg.scheme == Scheme::Picard {
        picard_march(u0, &rhs, &w, steps, dt, cfg, &mut traj)?;
        return Ok(traj);
    }
    let mut v = u0.clone();
    for m in 1..=steps {
        let nv = rhs.eval(&v)?;
        v = match cfg.scheme {
            Scheme::Etd1 => combine(grid, &[(&w.e, &v), (&w.a0, &nv)]),
            _ => {
                let a = combine(grid, &[(&w.e, &v), (&w.a0, &nv)]);
                let na = rhs.eval(&a)?;
                combine(grid, &[(&w.e, &v), (&w.a1, &nv), (&w.b, &na)])
            }
        };
        let t = m as f64 * dt;
        if !is_finite(&v) {
            log::warn!("solution became non-finite at t = {t}");
            traj.exploded_at = Some(t);
            break;
        }
        if m % cfg.snap_every == 0 || m == steps {
            traj.times.push(t);
            traj.states.push(v.clone());
        }
    }
    Ok(traj)
}

/// One application of the discretized mild map to `states` (uniform step
/// `dt`, `states[0]` the initial time):
/// `Γ₀ = u₀`, `Γ_{m+1} = E Γ_m + A₁ N_m + (A₀ − A₁) N_{m+1}`.
fn gamma_states<T: Scalar>(
    u0: &SpectralField<T>,
    states: &[SpectralField<T>],
    rhs: &Rhs<'_, T>,
    w: &Weights<T>,
) -> Result<Vec<SpectralField<T>>> {
    let grid = u0.grid();
    let ns: Vec<SpectralField<T>> = states.iter().map(|v| rhs.eval(v)).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(states.len());
    out.push(u0.clone());
    for m in 0..states.len() - 1 {
        let next = combine(grid, &[(&w.e, &out[m]), (&w.a1, &ns[m]), (&w.b, &ns[m + 1])]);
        out.push(next);
    }
    Ok(out)
}

fn sup_l2_diff<T: Scalar>(a: &[SpectralField<T>], b: &[SpectralField<T>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).l2_norm().as_f64()).fold(0.0, f64::max)
}

fn picard_window<T: Scalar>(
    v0: &SpectralField<T>,
    len: usize,
    t0: f64,
    rhs: &Rhs<'_, T>,
    w: &Weights<T>,
    cfg: &SolveConfig,
) -> Result<Vec<SpectralField<T>>> {
    let mut cur = vec![v0.clone(); len + 1];
    let mut prev_diff = f64::INFINITY;
    for it in 0..cfg.picard_max_iter {
        let next = gamma_states(v0, &cur, rhs, w)?;
        let diff = sup_l2_diff(&next, &cur);
        if !diff.is_finite() {
            return Err(Error::NonContraction { time: t0, factor: f64::INFINITY });
        }
        let scale = cur.iter().map(|v| v.l2_norm().as_f64()).fold(1.0, f64::max);
        cur = next;
        if diff <= cfg.picard_tol * scale {
            return Ok(cur);
        }
        let factor = diff / prev_diff;
        if it >= 2 && factor >= 0.5 {
            return Err(Error::NonContraction { time: t0, factor });
        }
        prev_diff = diff;
    }
    Err(Error::NonContraction { time: t0, factor: 1.0 })
}

fn picard_march<T: Scalar>(
    u0: &SpectralField<T>,
    rhs: &Rhs<'_, T>,
    w: &Weights<T>,
    steps: usize,
    dt: f64,
    cfg: &SolveConfig,
    traj: &mut Trajectory<T>,
) -> Result<()> {
    let mut window = steps.max(1);
    let mut m = 0;
    let mut v = u0.clone();
    while m < steps {
        let len = window.min(steps - m);
        match picard_window(&v, len, m as f64 * dt, rhs, w, cfg) {
            Ok(states) => {
                for (i, s) in states.into_iter().enumerate().skip(1) {
                    let step = m + i;
                    if step % cfg.snap_every == 0 || step == steps {
                        traj.times.push(step as f64 * dt);
                        traj.states.push(s.clone());
                    }
                    v = s;
                }
                m += len;
            }
            Err(Error::NonContraction { .. }) if len > 1 => {
                window = len / 2;
                log::debug!("halving Picard window to {window} steps at t = {}", m as f64 * dt);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn uniform_step<T>(traj: &Trajectory<T>) -> Result<f64> {
    if traj.times.len() < 2 {
        return Err(Error::InvalidParameter("trajectory needs at least two times".into()));
    }
    let dt = traj.times[1] - traj.times[0];
    let ok = traj.times.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.max(1.0));
    if !ok || traj.times[0] != 0.0 {
        return Err(Error::InvalidParameter("trajectory times must be uniform from 0".into()));
    }
    Ok(dt)
}

/// `Γ_T(v)` for a trajectory stored at every step.
pub fn gamma_map<T: Scalar>(
    v: &Trajectory<T>,
    u0: &SpectralField<T>,
    h: &SpectralField<T>,
    c: T,
    f: Nonlinearity,
) -> Result<Trajectory<T>> {
    check_inputs(u0, h)?;
    let dt = uniform_step(v)?;
    let w = Weights::new(u0.grid(), dt, 0.0);
    let states = gamma_states(u0, &v.states, &Rhs { h, c, f }, &w)?;
    Ok(Trajectory { times: v.times.clone(), states, exploded_at: None, meta: RunMeta { h_hash: field_hash(h), c: c.as_f64(), f, ..v.meta.clone() } })
}

/// `sup_m ‖Γ(v)_m − v_m‖_{L²}`.
pub fn fixed_point_residual<T: Scalar>(
    v: &Trajectory<T>,
    u0: &SpectralField<T>,
    h: &SpectralField<T>,
    c: T,
    f: Nonlinearity,
) -> Result<f64> {
    let g = gamma_map(v, u0, h, c, f)?;
    Ok(sup_l2_diff(&g.states, &v.states))
}

/// Random trajectory around `u0`: `u0 + (1 + t) φ` with a random smooth `φ`.
fn random_trajectory(u0: &SpectralField<f64>, steps: usize, dt: f64, seed: u64, stream: u64) -> Result<Vec<SpectralField<f64>>> {
    let grid = u0.grid();
    let kmax = grid.band_limit().min(4);
    let phi: SpectralField<f64> = random_band_limited(grid, kmax, 1.0, seed, stream)?;
    let phi = phi.scale(0.5 / phi.l2_norm().max(1e-300));
    Ok((0..=steps)
        .map(|m| {
            let mut s = u0.clone();
            s.axpy(1.0 + m as f64 * dt, &phi);
            s
        })
        .collect())
}

/// Largest observed `‖Γu − Γv‖ / ‖u − v‖` (sup-in-time `L²`) over random
/// trajectory pairs on `[0, t_end]`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_lipschitz(
    t_end: f64,
    dt: f64,
    u0: &SpectralField<f64>,
    h: &SpectralField<f64>,
    c: f64,
    f: Nonlinearity,
    pairs: u64,
    seed: u64,
) -> Result<f64> {
    check_inputs(u0, h)?;
    let cfg = SolveConfig { t_end, dt, ..SolveConfig::default() };
    cfg.validate()?;
    let (steps, dt) = cfg.steps();
    let w = Weights::new(u0.grid(), dt, 0.0);
    let rhs = Rhs { h, c, f };
    let mut worst: f64 = 0.0;
    for p in 0..pairs {
        let a = random_trajectory(u0, steps, dt, seed, 2 * p)?;
        let b = random_trajectory(u0, steps, dt, seed, 2 * p + 1)?;
        let ga = gamma_states(u0, &a, &rhs, &w)?;
        let gb = gamma_states(u0, &b, &rhs, &w)?;
        worst = worst.max(sup_l2_diff(&ga, &gb) / sup_l2_diff(&a, &b));
    }
    Ok(worst)
}

/// Bisects for the largest horizon `T* ≤ t_hi` (a multiple of `dt`) on which
/// the empirical Lipschitz constant of `Γ_T` stays below one.
#[allow(clippy::too_many_arguments)]
pub fn contraction_horizon(
    t_hi: f64,
    dt: f64,
    u0: &SpectralField<f64>,
    h: &SpectralField<f64>,
    c: f64,
    f: Nonlinearity,
    pairs: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    let factor = |steps: usize| empirical_lipschitz(steps as f64 * dt, dt, u0, h, c, f, pairs, seed);
    let hi_steps = ((t_hi / dt).round() as usize).max(1);
    let top = factor(hi_steps)?;
    if top < 1.0 {
        return Ok((hi_steps as f64 * dt, top));
    }
    let first = factor(1)?;
    if first >= 1.0 {
        return Err(Error::NonContraction { time: 0.0, factor: first });
    }
    let (mut lo, mut hi, mut lo_factor) = (1usize, hi_steps, first);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let fm = factor(mid)?;
        if fm < 1.0 {
            lo = mid;
            lo_factor = fm;
        } else {
            hi = mid;
        }
    }
    Ok((lo as f64 * dt, lo_factor))
}

/// Solves with the constant read off a smooth lift `(θ, θ ∘ Kθ − c)`.
pub fn solve_lift<T: Scalar>(
    u0: &SpectralField<T>,
    pair: &EnhancedPair<T>,
    f: Nonlinearity,
    cfg: &SolveConfig,
    part: &DyadicPartition,
) -> Result<Trajectory<T>> {
    let theta = &pair.first;
    let lift = resonant(theta, &inverse_laplacian(theta)?, part)?;
    let diff = &lift - &pair.second;
    let c = diff.mean();
    let mut rest = diff.clone();
    rest.add_constant(-c);
    let scale = pair.second.max_abs_coeff().max(T::one());
    if rest.max_abs_coeff() > T::lit(1e-12) * scale {
        return Err(Error::InvalidParameter("second component is not the lift of the first".into()));
    }
    solve_classical(u0, theta, c, f, cfg)
}

/// `u^ε`: solves with `h = ξ^ε` and `c = c_ε`.
pub fn solve_renormalized_mollified<T: Scalar>(
    u0: &SpectralField<T>,
    xi: &WhiteNoiseSample<T>,
    psi: Mollifier,
    eps: f64,
    f: Nonlinearity,
    cfg: &SolveConfig,
) -> Result<Trajectory<T>> {
    let grid = u0.grid();
    if let Some(r) = psi.support_radius() {
        if r / eps > (grid.n() / 4) as f64 {
            return Err(Error::Bandwidth(format!("1/eps = {} exceeds n/4 = {}", r / eps, grid.n() / 4)));
        }
    }
    let h = mollify(&xi.field, psi, eps)?;
    let h = crate::torus::apply_real_multiplier(&h, |k| {
        if k[0].abs() <= grid.band_limit() && k[1].abs() <= grid.band_limit() {
            T::one()
        } else {
            T::zero()
        }
    });
    let c = renorm_constant(psi, eps, xi.band.min(grid.band_limit()))?.value;
    let mut traj = solve_classical(u0, &h, T::lit(c), f, cfg)?;
    traj.meta.seed = Some(xi.seed);
    Ok(traj)
}

/// Monte Carlo estimate of `E[exp(∫₀^t h(x + √2 B_s) ds)]` and its standard
/// error, with `steps` left-point quadrature nodes per path.
pub fn feynman_kac_mc(h: &SpectralField<f64>, t: f64, x: [f64; 2], paths: u64, steps: usize, seed: u64) -> (f64, f64) {
    let modes = h.nonzeros();
    let dt = t / steps as f64;
    let sd = (2.0 * dt).sqrt();
    let tau = std::f64::consts::TAU;
    let values: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut key = [0u8; 32];
            key[..8].copy_from_slice(&seed.to_le_bytes());
            key[8..16].copy_from_slice(b"gpam-fk1");
            let mut rng = ChaCha8Rng::from_seed(key);
            rng.set_stream(p);
            let mut pos = x;
            let mut integral = 0.0;
            for _ in 0..steps {
                integral += SpectralField::<f64>::evaluate_modes(&modes, pos) * dt;
                for q in &mut pos {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *q = (*q + sd * z).rem_euclid(tau);
                }
            }
            integral.exp()
        })
        .collect();
    crate::stats::mean_se(&values)
}

/// Values of `v` on the `2n` grid.
fn fine_values<T: Scalar>(v: &SpectralField<T>) -> Vec<T> {
    values_on(v, 2 * v.grid().n())
}

/// Smallest grid value of `v` on the `2n` grid.
pub fn min_value<T: Scalar>(v: &SpectralField<T>) -> f64 {
    fine_values(v).into_iter().fold(f64::INFINITY, |m, x| m.min(x.as_f64()))
}

/// `log v` sampled on the `2n` grid, as a field on that grid.
fn log_field<T: Scalar>(v: &SpectralField<T>) -> Result<SpectralField<f64>> {
    let m = 2 * v.grid().n();
    let vals: Vec<f64> = fine_values(v).into_iter().map(|x| x.as_f64()).collect();
    if let Some(bad) = vals.iter().find(|x| **x <= 0.0) {
        return Err(Error::InvalidParameter(format!("log of non-positive value {bad}")));
    }
    fft_forward(Grid::new(m)?, &vals.iter().map(|x| x.ln()).collect::<Vec<_>>())
}

/// Mean of `log v` over the torus.
pub fn mean_log<T: Scalar>(v: &SpectralField<T>) -> Result<f64> {
    Ok(log_field(v)?.mean())
}

/// Mean of `|∇ log v|²` over the torus.
pub fn mean_grad_log_sq<T: Scalar>(v: &SpectralField<T>) -> Result<f64> {
    let w = log_field(v)?;
    let g = w.grid();
    Ok(g.modes()
        .filter(|(_, k)| !g.is_nyquist(*k))
        .map(|(i, k)| mode_norm_sqr(k) as f64 * w.coeffs()[i].norm_sqr())
        .sum())
}

/// Both sides of `mean log v(T) = ∫₀^T mean |∇ log v|² dt` for a positive
/// solution of `∂_t v = Δv + v h` with `v₀ ≡ 1`, from a trajectory stored at
/// every step (composite Simpson in time).
pub fn log_mass_identity<T: Scalar>(traj: &Trajectory<T>) -> Result<(f64, f64)> {
    let dt = uniform_step(traj)?;
    let g: Vec<f64> = traj.states.iter().map(mean_grad_log_sq).collect::<Result<_>>()?;
    let lhs = mean_log(traj.last())? - mean_log(&traj.states[0])?;
    Ok((lhs, simpson(&g, dt)))
}

/// Composite Simpson rule; the last interval uses the trapezoid rule when the
/// number of intervals is odd.
pub fn simpson(y: &[f64], dx: f64) -> f64 {
    let n = y.len().saturating_sub(1);
    if n == 0 {
        return 0.0;
    }
    let even = n - n % 2;
    let mut s = 0.0;
    for i in (0..even).step_by(2) {
        s += dx / 3.0 * (y[i] + 4.0 * y[i + 1] + y[i + 2]);
    }
    if n % 2 == 1 {
        s += 0.5 * dx * (y[n - 1] + y[n]);
    }
    s
}

const TRAJ_HEADER: &str = "GPAM-TRAJ v1";

/// Writes `manifest` plus `state_<i>.field` for every stored time.
pub fn save_trajectory<T: Scalar>(dir: impl AsRef<Path>, traj: &Trajectory<T>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let m = &traj.meta;
    let times: Vec<String> = traj.times.iter().map(|t| format!("{t:?}")).collect();
    let mut text = format!("format = {TRAJ_HEADER}\n");
    text += &format!("n = {}\n", traj.states[0].grid().n());
    text += &format!("c = {:?}\nf = {}\nscheme = {}\ndt = {:?}\nT = {:?}\nh_hash = {}\n", m.c, m.f, m.scheme, m.dt, m.t_end, m.h_hash);
    text += &format!("seed = {}\n", m.seed.map_or("none".to_string(), |s| s.to_string()));
    text += &format!("exploded_at = {}\n", traj.exploded_at.map_or("none".to_string(), |t| format!("{t:?}")));
    text += &format!("times = {}\n", times.join(","));
    fs::write(dir.join("manifest"), text)?;
    for (i, s) in traj.states.iter().enumerate() {
        save_field(dir.join(format!("state_{i:05}.field")), s)?;
    }
    Ok(())
}

pub fn load_trajectory<T: Scalar>(dir: impl AsRef<Path>) -> Result<Trajectory<T>> {
    let dir = dir.as_ref();
    let kv = parse_key_values(&fs::read_to_string(dir.join("manifest"))?)?;
    let get = |k: &str| {
        kv.iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Parse(format!("trajectory manifest lacks '{k}'")))
    };
    if get("format")? != TRAJ_HEADER {
        return Err(Error::Parse("not a trajectory manifest".into()));
    }
    let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| Error::Parse(format!("bad value for '{k}'"))) };
    let opt = |k: &str| -> Result<Option<String>> {
        let v = get(k)?;
        Ok(if v == "none" { None } else { Some(v.to_string()) })
    };
    let times: Vec<f64> = get("times")?
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| Error::Parse(format!("bad time '{t}'"))))
        .collect::<Result<_>>()?;
    let states = (0..times.len())
        .map(|i| load_field(dir.join(format!("state_{i:05}.field"))))
        .collect::<Result<Vec<_>>>()?;
    let meta = RunMeta {
        c: num("c")?,
        f: get("f")?.parse()?,
        scheme: get("scheme")?.parse()?,
        dt: num("dt")?,
        t_end: num("T")?,
        h_hash: get("h_hash")?.to_string(),
        seed: opt("seed")?.map(|s| s.parse().map_err(|_| Error::Parse("bad seed".into()))).transpose()?,
    };
    let exploded_at = opt("exploded_at")?.map(|s| s.parse().map_err(|_| Error::Parse("bad explosion time".into()))).transpose()?;
    Ok(Trajectory { times, states, exploded_at, meta })
}

/// `a cos x₁`.
pub fn cosine_potential<T: Scalar>(grid: Grid, amplitude: T) -> SpectralField<T> {
    SpectralField::real_mode(grid, [1, 0], Complex::new(amplitude / T::lit(2.0), T::zero())).expect("mode (1, 0) is on every grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::sample_white_noise;
    use proptest::prelude::*;

    fn grid(n: usize) -> Grid {
        Grid::new(n).unwrap()
    }

    fn cfg(t_end: f64, dt: f64, scheme: Scheme) -> SolveConfig {
        SolveConfig { t_end, dt, scheme, ..SolveConfig::default() }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let d = 1e-5;
        for f in Nonlinearity::ALL {
            for i in 0..=36 {
                let u = -0.9 + 0.05 * i as f64;
                let fd1 = (f.f(u + d) - f.f(u - d)) / (2.0 * d);
                let fd2 = (f.df(u + d) - f.df(u - d)) / (2.0 * d);
                assert!((fd1 - f.df(u)).abs() <= 1e-6 * (1.0 + f.df::<f64>(u).abs()), "{f} f' at {u}");
                assert!((fd2 - f.d2f(u)).abs() <= 1e-6 * (1.0 + f.d2f::<f64>(u).abs()), "{f} f'' at {u}");
            }
        }
    }

    #[test]
    fn derivative_error_is_second_order() {
        // Halving δ divides the central-difference error by about four.
        for f in [Nonlinearity::Sine, Nonlinearity::Bump] {
            let u = 0.3;
            let err = |d: f64| ((f.f(u + d) - f.f(u - d)) / (2.0 * d) - f.df(u)).abs();
            let err2 = |d: f64| ((f.df(u + d) - f.df(u - d)) / (2.0 * d) - f.d2f(u)).abs();
            assert!((err(1e-2) / err(5e-3) - 4.0).abs() < 0.2, "{f}");
            assert!((err2(1e-2) / err2(5e-3) - 4.0).abs() < 0.2, "{f}");
        }
    }

    #[test]
    fn constant_forcing_matches_duhamel() {
        let g = grid(16);
        let h = cosine_potential(g, 2.0);
        let u0 = SpectralField::zeros(g);
        let traj = solve_classical(&u0, &h, 0.7, Nonlinearity::ConstantOne, &cfg(1.0, 1e-3, Scheme::Etd2rk)).unwrap();
        let expect = cosine_potential(g, 2.0 * (1.0 - (-1f64).exp()));
        assert!(traj.last().max_coeff_diff(&expect) <= 1e-8);
        assert_eq!(*traj.times.last().unwrap(), 1.0);
    }

    #[test]
    fn exponential_decay_and_growth() {
        let g = grid(16);
        let u0 = SpectralField::constant(g, 1.0);
        let h = SpectralField::zeros(g);
        for c in [1.3f64, -0.8] {
            let traj = solve_classical(&u0, &h, c, Nonlinearity::Identity, &cfg(1.0, 1e-3, Scheme::Etd2rk)).unwrap();
            assert!((traj.last().mean() - (-c).exp()).abs() <= 1e-8, "c = {c}");
        }
    }

    #[test]
    fn etd2rk_is_second_order() {
        let g = grid(16);
        let u0 = SpectralField::constant(g, 1.0);
        let h = cosine_potential(g, 2.0);
        let reference = solve_classical(&u0, &h, 0.5, Nonlinearity::Identity, &cfg(1.0, 0.1 / 64.0, Scheme::Etd2rk)).unwrap();
        let errs: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&dt| {
                let t = solve_classical(&u0, &h, 0.5, Nonlinearity::Identity, &cfg(1.0, dt, Scheme::Etd2rk)).unwrap();
                (t.last() - reference.last()).l2_norm()
            })
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.8, "{errs:?}");
        }
    }

    #[test]
    fn grid_refinement_agrees() {
        let (a, b) = (grid(32), grid(64));
        let ha = cosine_potential(a, 2.0);
        let hb = cosine_potential(b, 2.0);
        let c = cfg(0.5, 1e-3, Scheme::Etd2rk);
        let va = solve_classical(&SpectralField::constant(a, 1.0), &ha, 0.0, Nonlinearity::Identity, &c).unwrap();
        let vb = solve_classical(&SpectralField::constant(b, 1.0), &hb, 0.0, Nonlinearity::Identity, &c).unwrap();
        for (i, k) in a.modes() {
            assert!((va.last().coeffs()[i] - vb.last().coeff(k)).norm() <= 1e-8);
        }
    }

    #[test]
    fn etd1_converges_at_first_order() {
        let g = grid(16);
        let u0 = SpectralField::constant(g, 1.0);
        let h = cosine_potential(g, 2.0);
        let reference = solve_classical::<f64>(&u0, &h, 0.5, Nonlinearity::Sine, &cfg(1.0, 1e-4, Scheme::Etd2rk)).unwrap();
        let err = |dt: f64| {
            let t = solve_classical(&u0, &h, 0.5, Nonlinearity::Sine, &cfg(1.0, dt, Scheme::Etd1)).unwrap();
            (t.last() - reference.last()).l2_norm()
        };
        let r = (err(0.01) / err(0.005)).log2();
        assert!((r - 1.0).abs() < 0.1, "{r}");
    }

    #[test]
    fn picard_fixed_point_has_small_residual() {
        let g = grid(16);
        let u0 = SpectralField::constant(g, 1.0);
        let h = cosine_potential(g, 2.0);
        let config = SolveConfig { picard_tol: 1e-11, ..cfg(0.5, 1e-2, Scheme::Picard) };
        let v = solve_classical(&u0, &h, 0.3, Nonlinearity::Sine, &config).unwrap();
        let r = fixed_point_residual(&v, &u0, &h, 0.3, Nonlinearity::Sine).unwrap();
        assert!(r <= 10.0 * config.picard_tol, "{r}");
        let e = solve_classical(&u0, &h, 0.3, Nonlinearity::Sine, &cfg(0.5, 1e-2, Scheme::Etd2rk)).unwrap();
        assert!((v.last() - e.last()).l2_norm() < 1e-3);
    }

    #[test]
    fn picard_halves_window_on_long_horizons() {
        let g = grid(16);
        let u0 = SpectralField::constant(g, 1.0);
        let h = cosine_potential(g, 12.0);
        let config = SolveConfig { picard_tol: 1e-10, ..cfg(2.0, 1e-2, Scheme::Picard) };
        let v = solve_classical(&u0, &h, 0.0, Nonlinearity::Identity, &config).unwrap();
        // The full window cannot contract, so the march must have split it.
        assert!(empirical_lipschitz(2.0, 1e-2, &u0, &h, 0.0, Nonlinearity::Identity, 1, 0).unwrap() > 1.0);
        let fine = solve_classical(&u0, &h, 0.0, Nonlinearity::Identity, &cfg(2.0, 1e-3, Scheme::Etd2rk)).unwrap();
        let rel = |dt: f64| {
            let c = SolveConfig { picard_tol: 1e-10, ..cfg(2.0, dt, Scheme::Picard) };
            let v = solve_classical(&u0, &h, 0.0, Nonlinearity::Identity, &c).unwrap();
            (v.last() - fine.last()).l2_norm() / fine.last().l2_norm()
        };
        let (r1, r2) = (rel(1e-2), rel(5e-3));
        assert!(r1 < 0.1 && (r1 / r2).log2() > 1.8, "{r1} {r2}");
        assert_eq!(v.states.len(), 201);
    }

    #[test]
    fn gamma_of_zero_is_zero() {
        let g = grid(16);
        let z = SpectralField::<f64>::zeros(g);
        let traj = solve_classical(&z, &z, 3.0, Nonlinearity::Identity, &cfg(0.1, 1e-2, Scheme::Etd2rk)).unwrap();
        let out = gamma_map(&traj, &z, &z, 3.0, Nonlinearity::Identity).unwrap();
        assert!(out.states.iter().all(|s| s.nnz() == 0));
    }

    #[test]
    fn contraction_window_is_found() {
        let g = grid(16);
        let u0 = SpectralField::constant(g, 1.0);
        let h = cosine_potential(g, 4.0);
        let (t_star, factor) = contraction_horizon(4.0, 1e-2, &u0, &h, 1.0, Nonlinearity::Identity, 4, 1).unwrap();
        assert!(t_star > 0.0 && t_star < 4.0 && factor < 1.0, "{t_star} {factor}");
        let beyond = empirical_lipschitz(t_star + 1e-2, 1e-2, &u0, &h, 1.0, Nonlinearity::Identity, 4, 1).unwrap();
        assert!(beyond >= 1.0);
    }

    #[test]
    fn feynman_kac_trivial_cases() {
        let g = grid(16);
        let (e, se) = feynman_kac_mc(&SpectralField::zeros(g), 0.5, [0.1, 0.2], 100, 10, 1);
        assert_eq!((e, se), (1.0, 0.0));
        let (e, se) = feynman_kac_mc(&SpectralField::constant(g, 0.8), 0.5, [0.1, 0.2], 100, 10, 1);
        assert!((e - 0.4f64.exp()).abs() < 1e-14 && se < 1e-14);
    }

    #[test]
    fn feynman_kac_matches_pde() {
        let g = grid(32);
        let h = cosine_potential(g, 2.0);
        let v = solve_classical(&SpectralField::constant(g, 1.0), &h, 0.0, Nonlinearity::Identity, &cfg(0.25, 1e-3, Scheme::Etd2rk)).unwrap();
        let pde = v.last().evaluate_at([0.0, 0.0]);
        let (est, se) = feynman_kac_mc(&h, 0.25, [0.0, 0.0], 20_000, 250, 3);
        assert!((est - pde).abs() <= 3.0 * se, "{est} ± {se} vs {pde}");
    }

    #[test]
    fn positivity_and_mass_identity() {
        let g = grid(32);
        let h: SpectralField<f64> = random_band_limited(g, 3, 2.0, 5, 0).unwrap();
        let v = solve_classical(&SpectralField::constant(g, 1.0), &h, 0.0, Nonlinearity::Identity, &cfg(0.5, 5e-4, Scheme::Etd2rk)).unwrap();
        assert!(v.states.iter().all(|s| min_value(s) > 0.0));
        let (lhs, rhs) = log_mass_identity(&v).unwrap();
        assert!(lhs >= -1e-6);
        assert!((lhs - rhs).abs() <= 1e-6, "{lhs} vs {rhs}");
    }

    #[test]
    fn lift_solver_and_renormalized_solver() {
        let g = grid(32);
        let part = DyadicPartition::new(g);
        let theta: SpectralField<f64> = random_band_limited(g, 3, 1.0, 2, 0).unwrap();
        let u0 = SpectralField::constant(g, 1.0);
        let c = cfg(0.2, 1e-2, Scheme::Etd2rk);
        let lift = crate::enhancement::enhance(&theta, 0.5, &part).unwrap().shift(0.25);
        let a = solve_lift(&u0, &lift, Nonlinearity::Identity, &c, &part).unwrap();
        let b = solve_classical(&u0, &theta, 0.75, Nonlinearity::Identity, &c).unwrap();
        assert!(a.last().max_coeff_diff(b.last()) <= 1e-12);
        let mut broken = lift.clone();
        broken.second.add_real_mode([1, 0], Complex::new(1.0, 0.0)).unwrap();
        assert!(solve_lift(&u0, &broken, Nonlinearity::Identity, &c, &part).is_err());

        let xi = sample_white_noise::<f64>(g, 9, 0);
        let r1 = solve_renormalized_mollified(&u0, &xi, Mollifier::Sharp, 1.0, Nonlinearity::Identity, &c).unwrap();
        let h4 = mollify(&xi.field, Mollifier::Sharp, 1.0).unwrap();
        assert_eq!(h4.nnz(), 4);
        let r2 = solve_classical(&u0, &h4, 4.0, Nonlinearity::Identity, &c).unwrap();
        assert_eq!(r1.last(), r2.last());
        let again = solve_renormalized_mollified(&u0, &xi, Mollifier::Sharp, 1.0, Nonlinearity::Identity, &c).unwrap();
        assert_eq!(again, r1);
        assert!(solve_renormalized_mollified(&u0, &xi, Mollifier::Sharp, 0.1, Nonlinearity::Identity, &c).is_err());
    }

    #[test]
    fn renormalization_pulls_the_mean_down() {
        let g = grid(32);
        let xi = sample_white_noise::<f64>(g, 4, 0);
        let u0 = SpectralField::constant(g, 1.0);
        let c = cfg(0.2, 1e-3, Scheme::Etd2rk);
        let ren = solve_renormalized_mollified(&u0, &xi, Mollifier::Sharp, 0.25, Nonlinearity::Identity, &c).unwrap();
        let h = mollify(&xi.field, Mollifier::Sharp, 0.25).unwrap();
        let raw = solve_classical(&u0, &h, 0.0, Nonlinearity::Identity, &c).unwrap();
        assert!(raw.last().mean() > 1.0);
        assert!(ren.last().mean() < raw.last().mean());
    }

    #[test]
    fn explosion_is_reported() {
        let g = grid(16);
        let u0 = SpectralField::constant(g, 1.0);
        let h = SpectralField::zeros(g);
        let t = solve_classical(&u0, &h, -1e6, Nonlinearity::Identity, &cfg(1.0, 1e-2, Scheme::Etd1)).unwrap();
        let at = t.exploded_at.expect("overflow");
        assert!(at < 1.0 && *t.times.last().unwrap() < at);
    }

    #[test]
    fn bad_inputs() {
        let g = grid(16);
        let u0 = SpectralField::constant(g, 1.0);
        assert!(solve_classical(&u0, &u0, 0.0, Nonlinearity::Identity, &SolveConfig::default()).is_err());
        let z = SpectralField::zeros(g);
        assert!(solve_classical(&u0, &z, 0.0, Nonlinearity::Identity, &cfg(-1.0, 0.1, Scheme::Etd1)).is_err());
        assert!(solve_classical(&u0, &z, 0.0, Nonlinearity::Identity, &cfg(1.0, 0.0, Scheme::Etd1)).is_err());
        assert!("rk4".parse::<Scheme>().is_err());
        assert_eq!("bump".parse::<Nonlinearity>().unwrap(), Nonlinearity::Bump);
    }

    #[test]
    fn trajectory_files_roundtrip() {
        let g = grid(16);
        let u0 = SpectralField::constant(g, 1.0);
        let h = cosine_potential(g, 2.0);
        let t = solve_classical(&u0, &h, 0.1, Nonlinearity::Sine, &SolveConfig { snap_every: 5, ..cfg(0.1, 1e-2, Scheme::Etd2rk) }).unwrap();
        assert_eq!(t.times.len(), 3);
        let dir = tempfile::tempdir().unwrap();
        save_trajectory(dir.path(), &t).unwrap();
        assert_eq!(load_trajectory::<f64>(dir.path()).unwrap(), t);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn positive_for_any_potential(seed in 0u64..1000) {
            let g = grid(32);
            let h: SpectralField<f64> = random_band_limited(g, 3, 2.0, seed, 1).unwrap();
            let h = h.scale(3.0);
            let v = solve_classical(&SpectralField::constant(g, 1.0), &h, 0.0, Nonlinearity::Identity, &cfg(0.3, 1e-2, Scheme::Etd2rk)).unwrap();
            prop_assert!(v.states.iter().all(|s| min_value(s) > 0.0));
        }

        #[test]
        fn solves_are_deterministic(seed in 0u64..1000) {
            let g = grid(16);
            let h: SpectralField<f64> = random_band_limited(g, 3, 1.0, seed, 1).unwrap();
            let u0 = SpectralField::constant(g, 0.5);
            let c = cfg(0.1, 1e-2, Scheme::Etd2rk);
            let a = solve_classical(&u0, &h, 0.2, Nonlinearity::Bump, &c).unwrap();
            let b = solve_classical(&u0, &h, 0.2, Nonlinearity::Bump, &c).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
