//! Experiments on solutions of the renormalized equation.

use crate::enhancement::{enhance, h_alpha_dist, oscillatory};
use crate::error::{Error, Result};
use crate::littlewood_paley::{holder_norm, DyadicPartition};
use crate::noise::random_band_limited;
use crate::pde::{log_mass_identity, mean_log, min_value, solve_classical, solve_lift, Nonlinearity, Scheme, SolveConfig, Trajectory};
use crate::torus::{Grid, SpectralField};

use super::config::{join_f64, range_string, Config};
use super::lifts::a_label;
use super::report::{bound_check, log2_fit, trend_check, Check, Report, Row, Trend, Verdict};
use super::{par_samples, ExperimentKind};

fn grid_of(n: usize) -> Result<Grid> {
    Grid::new(n).map_err(|e| Error::Config(e.to_string()))
}

fn meta(grid: Grid, part: &DyadicPartition) -> Vec<(String, String)> {
    vec![("grid".into(), grid.n().to_string()), ("partition_hash".into(), part.hash())]
}

/// Time stepping keys shared by the solution experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeParams {
    pub t_end: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub snap_every: usize,
}

const TIME_KEYS: [&str; 4] = ["t_end", "dt", "scheme", "snap_every"];

impl TimeParams {
    fn from_config(cfg: &Config, d: TimeParams) -> Result<Self> {
        let p = TimeParams {
            t_end: cfg.f64("t_end", d.t_end)?,
            dt: cfg.f64("dt", d.dt)?,
            scheme: cfg.parsed("scheme", d.scheme)?,
            snap_every: cfg.usize("snap_every", d.snap_every)?,
        };
        p.solve_config().validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(p)
    }

    fn write(&self, cfg: Config) -> Config {
        cfg.with("t_end", format!("{:?}", self.t_end))
            .with("dt", format!("{:?}", self.dt))
            .with("scheme", self.scheme)
            .with("snap_every", self.snap_every)
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig { t_end: self.t_end, dt: self.dt, scheme: self.scheme, snap_every: self.snap_every, ..SolveConfig::default() }
    }
}

/// Smooth low-frequency potential `θ`, scaled to a given `L²` norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaParams {
    pub kmax: i64,
    pub decay: f64,
    pub norm: f64,
}

const THETA_KEYS: [&str; 3] = ["theta_kmax", "theta_decay", "theta_norm"];

impl Default for ThetaParams {
    fn default() -> Self {
        ThetaParams { kmax: 2, decay: 1.0, norm: 1.0 }
    }
}

impl ThetaParams {
    fn from_config(cfg: &Config) -> Result<Self> {
        let d = Self::default();
        Ok(ThetaParams {
            kmax: cfg.u64("theta_kmax", d.kmax as u64)? as i64,
            decay: cfg.f64("theta_decay", d.decay)?,
            norm: cfg.f64("theta_norm", d.norm)?,
        })
    }

    fn write(&self, cfg: Config) -> Config {
        cfg.with("theta_kmax", self.kmax)
            .with("theta_decay", format!("{:?}", self.decay))
            .with("theta_norm", format!("{:?}", self.norm))
    }

    fn sample(&self, grid: Grid, seed: u64, stream: u64) -> Result<SpectralField<f64>> {
        let t = random_band_limited::<f64>(grid, self.kmax, self.decay, seed, stream)?;
        let l2 = t.l2_norm();
        Ok(if l2 > 0.0 { &t * (self.norm / l2) } else { t })
    }
}

fn keys(own: &[&'static str]) -> Vec<&'static str> {
    own.iter().chain(TIME_KEYS.iter()).chain(THETA_KEYS.iter()).copied().collect()
}

fn sup_holder_distance(a: &Trajectory<f64>, b: &Trajectory<f64>, alpha: f64, part: &DyadicPartition) -> Result<f64> {
    let mut worst = 0.0f64;
    for (x, y) in a.states.iter().zip(&b.states) {
        worst = worst.max(holder_norm(&(x - y), alpha, part)?);
    }
    Ok(worst)
}

fn require_constants(a: f64, c: f64) -> Result<()> {
    if !(c > a.max(0.0)) {
        return Err(Error::Config(format!("need c > max(0, a), got c = {c}, a = {a}")));
    }
    Ok(())
}

/// Inputs of one oscillatory approximation run towards target constant `a`.
struct Approx<'a> {
    u0: &'a SpectralField<f64>,
    theta: &'a SpectralField<f64>,
    a: f64,
    c: f64,
    f: Nonlinearity,
    cfg: SolveConfig,
    alpha: f64,
    part: &'a DyadicPartition,
}

impl Approx<'_> {
    /// `(n, sup_t ‖v_n − v*‖_{C^α}, dist(ℳ(θ + X^{n,c−a}, c), ℳ(θ, a)))`.
    fn distances(&self, ns: &[u32]) -> Result<Vec<(u32, f64, f64)>> {
        let grid = self.theta.grid();
        let target = solve_classical(self.u0, self.theta, self.a, self.f, &self.cfg)?;
        let target_lift = enhance(self.theta, self.a, self.part)?;
        let mut out = Vec::with_capacity(ns.len());
        for &n in ns {
            let h = self.theta + &oscillatory(n, self.c - self.a, grid)?;
            let v = solve_classical(self.u0, &h, self.c, self.f, &self.cfg)?;
            if v.exploded_at.is_some() || target.exploded_at.is_some() {
                return Err(Error::Explosion(v.exploded_at.or(target.exploded_at).unwrap_or(0.0)));
            }
            let sol = sup_holder_distance(&v, &target, self.alpha, self.part)?;
            let enh = h_alpha_dist(&enhance(&h, self.c, self.part)?, &target_lift, self.alpha, self.part)?;
            out.push((n, sol, enh));
        }
        Ok(out)
    }
}

// ------------------------------------------------------ support approximation

#[derive(Clone, Debug, PartialEq)]
pub struct SupportApproxParams {
    pub alpha: f64,
    pub grid: usize,
    pub a: f64,
    pub c: f64,
    pub n: Vec<u32>,
    pub f: Nonlinearity,
    /// Constant initial condition.
    pub u0: f64,
    pub time: TimeParams,
    pub theta: ThetaParams,
    pub samples: u64,
    pub seed: u64,
}

impl Default for SupportApproxParams {
    fn default() -> Self {
        SupportApproxParams {
            alpha: 0.75,
            grid: 1024,
            a: 1.0,
            c: 2.0,
            n: (3..=6).collect(),
            f: Nonlinearity::Identity,
            u0: 1.0,
            time: TimeParams { t_end: 0.5, dt: 5e-3, scheme: Scheme::Etd2rk, snap_every: 10 },
            theta: ThetaParams::default(),
            samples: 1,
            seed: 0,
        }
    }
}

impl SupportApproxParams {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.check_known(&keys(&["alpha", "grid", "a", "c", "n", "f", "u0", "samples", "seed"]))?;
        let d = Self::default();
        let p = SupportApproxParams {
            alpha: cfg.f64("alpha", d.alpha)?,
            grid: cfg.usize("grid", d.grid)?,
            a: cfg.f64("a", d.a)?,
            c: cfg.f64("c", d.c)?,
            n: cfg.range("n", (3, 6))?,
            f: cfg.parsed("f", d.f)?,
            u0: cfg.f64("u0", d.u0)?,
            time: TimeParams::from_config(cfg, d.time)?,
            theta: ThetaParams::from_config(cfg)?,
            samples: cfg.u64("samples", d.samples)?,
            seed: cfg.u64("seed", d.seed)?,
        };
        require_constants(p.a, p.c)?;
        Ok(p)
    }

    pub fn to_config(&self) -> Config {
        let cfg = Config::new()
            .with("alpha", format!("{:?}", self.alpha))
            .with("grid", self.grid)
            .with("a", format!("{:?}", self.a))
            .with("c", format!("{:?}", self.c))
            .with("n", range_string(&self.n))
            .with("f", self.f)
            .with("u0", format!("{:?}", self.u0))
            .with("samples", self.samples)
            .with("seed", self.seed);
        self.theta.write(self.time.write(cfg))
    }
}

/// Solutions driven by `θ + X^{n,c−a}` with constant `c` against the
/// solution driven by `θ` with constant `a`.
pub(crate) fn exp_support_approx(p: &SupportApproxParams) -> Result<Report> {
    let grid = grid_of(p.grid)?;
    let part = DyadicPartition::new(grid);
    let u0 = SpectralField::constant(grid, p.u0);
    let rows = par_samples(p.samples, |s| {
        let theta = p.theta.sample(grid, p.seed, s)?;
        let run = Approx { u0: &u0, theta: &theta, a: p.a, c: p.c, f: p.f, cfg: p.time.solve_config(), alpha: p.alpha, part: &part };
        let mut rows = Vec::new();
        for (n, sol, enh) in run.distances(&p.n)? {
            rows.push(Row::new("solution_distance", s, n as f64, sol));
            rows.push(Row::new("enhanced_distance", s, n as f64, enh));
        }
        Ok(rows)
    })?;
    Report::build(ExperimentKind::SupportApprox, p.to_config(), meta(grid, &part), rows)
}

pub(crate) fn judge_support_approx(_p: &SupportApproxParams, rows: &[Row]) -> Verdict {
    let mut v = Verdict::default();
    v.push(trend_check(rows, "solution_distance", Trend::Decreasing));
    v.push(trend_check(rows, "enhanced_distance", Trend::Decreasing));
    v
}

// --------------------------------------------------- renormalization group

#[derive(Clone, Debug, PartialEq)]
pub struct RenormGroupParams {
    pub alpha: f64,
    pub grid: usize,
    pub a: Vec<f64>,
    pub c: f64,
    pub n: Vec<u32>,
    pub f: Nonlinearity,
    pub u0: f64,
    pub time: TimeParams,
    pub theta: ThetaParams,
    pub seed: u64,
    /// Bound on the differences that must vanish up to round-off.
    pub exact_tol: f64,
    /// Half-width of each slope interval in standard errors.
    pub slope_se: f64,
}

impl Default for RenormGroupParams {
    fn default() -> Self {
        RenormGroupParams {
            alpha: 0.75,
            grid: 512,
            a: vec![0.0, 1.0],
            c: 2.0,
            n: (3..=6).collect(),
            f: Nonlinearity::Identity,
            u0: 1.0,
            time: TimeParams { t_end: 0.5, dt: 5e-3, scheme: Scheme::Etd2rk, snap_every: 10 },
            theta: ThetaParams::default(),
            seed: 0,
            exact_tol: 1e-12,
            slope_se: 2.0,
        }
    }
}

impl RenormGroupParams {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.check_known(&keys(&["alpha", "grid", "a", "c", "n", "f", "u0", "seed", "exact_tol", "slope_se"]))?;
        let d = Self::default();
        let p = RenormGroupParams {
            alpha: cfg.f64("alpha", d.alpha)?,
            grid: cfg.usize("grid", d.grid)?,
            a: cfg.list_f64("a", &d.a)?,
            c: cfg.f64("c", d.c)?,
            n: cfg.range("n", (3, 6))?,
            f: cfg.parsed("f", d.f)?,
            u0: cfg.f64("u0", d.u0)?,
            time: TimeParams::from_config(cfg, d.time)?,
            theta: ThetaParams::from_config(cfg)?,
            seed: cfg.u64("seed", d.seed)?,
            exact_tol: cfg.f64("exact_tol", d.exact_tol)?,
            slope_se: cfg.f64("slope_se", d.slope_se)?,
        };
        for &a in &p.a {
            require_constants(a, p.c)?;
        }
        Ok(p)
    }

    pub fn to_config(&self) -> Config {
        let cfg = Config::new()
            .with("alpha", format!("{:?}", self.alpha))
            .with("grid", self.grid)
            .with("a", join_f64(&self.a))
            .with("c", format!("{:?}", self.c))
            .with("n", range_string(&self.n))
            .with("f", self.f)
            .with("u0", format!("{:?}", self.u0))
            .with("seed", self.seed)
            .with("exact_tol", format!("{:?}", self.exact_tol))
            .with("slope_se", format!("{:?}", self.slope_se));
        self.theta.write(self.time.write(cfg))
    }
}

/// Solving with `c + a` against solving with the shifted lift, the shift
/// identity of the lift itself, and approximation rates towards each `a`.
pub(crate) fn exp_renorm_group(p: &RenormGroupParams) -> Result<Report> {
    let grid = grid_of(p.grid)?;
    let part = DyadicPartition::new(grid);
    let u0 = SpectralField::constant(grid, p.u0);
    let theta = p.theta.sample(grid, p.seed, 0)?;
    let cfg = p.time.solve_config();
    let base = enhance(&theta, p.c, &part)?;
    let rows = par_samples(p.a.len() as u64, |i| {
        let a = p.a[i as usize];
        let mut rows = Vec::new();
        let shifted = base.shift(a);
        let direct = enhance(&theta, p.c + a, &part)?;
        let lift_diff = direct.first.max_coeff_diff(&shifted.first).max(direct.second.max_coeff_diff(&shifted.second));
        rows.push(Row::new("lift_shift", 0, a, lift_diff));
        let v1 = solve_classical(&u0, &theta, p.c + a, p.f, &cfg)?;
        let v2 = solve_lift(&u0, &shifted, p.f, &cfg, &part)?;
        let solve_diff = v1.states.iter().zip(&v2.states).map(|(x, y)| x.max_coeff_diff(y)).fold(0.0, f64::max);
        rows.push(Row::new("solver_shift", 0, a, solve_diff));
        let run = Approx { u0: &u0, theta: &theta, a, c: p.c, f: p.f, cfg, alpha: p.alpha, part: &part };
        for (n, sol, _) in run.distances(&p.n)? {
            rows.push(Row::new(format!("distance_{}", a_label(a)), 0, n as f64, sol));
        }
        Ok(rows)
    })?;
    Report::build(ExperimentKind::RenormGroup, p.to_config(), meta(grid, &part), rows)
}

pub(crate) fn judge_renorm_group(p: &RenormGroupParams, rows: &[Row]) -> Verdict {
    let mut v = Verdict::default();
    v.push(bound_check(rows, "lift_shift_exact", "lift_shift", Some(p.exact_tol), None));
    v.push(bound_check(rows, "solver_shift_exact", "solver_shift", Some(p.exact_tol), None));
    let mut intervals = Vec::new();
    for &a in &p.a {
        let q = format!("distance_{}", a_label(a));
        v.push(trend_check(rows, &q, Trend::Decreasing));
        if let Some(fit) = log2_fit(rows, &q) {
            intervals.push((a, fit.slope, fit.slope_se));
        }
    }
    if p.a.len() >= 2 {
        let ok = intervals.len() == p.a.len()
            && intervals.iter().all(|(_, s1, e1)| {
                intervals.iter().all(|(_, s2, e2)| (s1 - s2).abs() <= p.slope_se * (e1 + e2))
            });
        let detail = intervals
            .iter()
            .map(|(a, s, e)| format!("a={a}: {s:.4} +- {:.4}", p.slope_se * e))
            .collect::<Vec<_>>()
            .join("; ");
        v.push(Check::new("slopes_overlap", ok, detail));
    }
    v
}

// ---------------------------------------------------------- log positivity

#[derive(Clone, Debug, PartialEq)]
pub struct LogPositivityParams {
    pub grid: usize,
    pub kmax: i64,
    pub decay: f64,
    pub amplitude: f64,
    pub samples: u64,
    pub seed: u64,
    pub time: TimeParams,
    /// Negative constant whose `c T` the mean of `log v` would have to reach.
    pub c_target: f64,
    pub tol: f64,
}

impl Default for LogPositivityParams {
    fn default() -> Self {
        LogPositivityParams {
            grid: 32,
            kmax: 3,
            decay: 2.0,
            amplitude: 1.0,
            samples: 20,
            seed: 0,
            time: TimeParams { t_end: 0.5, dt: 5e-4, scheme: Scheme::Etd2rk, snap_every: 1 },
            c_target: -1.0,
            tol: 1e-6,
        }
    }
}

impl LogPositivityParams {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let own = ["grid", "kmax", "decay", "amplitude", "samples", "seed", "c_target", "tol"];
        cfg.check_known(&own.iter().chain(TIME_KEYS.iter()).copied().collect::<Vec<_>>())?;
        let d = Self::default();
        let p = LogPositivityParams {
            grid: cfg.usize("grid", d.grid)?,
            kmax: cfg.u64("kmax", d.kmax as u64)? as i64,
            decay: cfg.f64("decay", d.decay)?,
            amplitude: cfg.f64("amplitude", d.amplitude)?,
            samples: cfg.u64("samples", d.samples)?,
            seed: cfg.u64("seed", d.seed)?,
            time: TimeParams::from_config(cfg, d.time)?,
            c_target: cfg.f64("c_target", d.c_target)?,
            tol: cfg.f64("tol", d.tol)?,
        };
        if p.time.snap_every != 1 {
            return Err(Error::Config("the log-mass identity needs snap_every = 1".into()));
        }
        if !(p.c_target < 0.0) {
            return Err(Error::Config(format!("c_target = {} must be negative", p.c_target)));
        }
        Ok(p)
    }

    pub fn to_config(&self) -> Config {
        let cfg = Config::new()
            .with("grid", self.grid)
            .with("kmax", self.kmax)
            .with("decay", format!("{:?}", self.decay))
            .with("amplitude", format!("{:?}", self.amplitude))
            .with("samples", self.samples)
            .with("seed", self.seed)
            .with("c_target", format!("{:?}", self.c_target))
            .with("tol", format!("{:?}", self.tol));
        self.time.write(cfg)
    }
}

/// `∂_t v = Δv + v h`, `v₀ = 1`: positivity, the log-mass identity and the
/// distance of the mean of `log v(T)` to a negative target `c T`.
pub(crate) fn exp_log_positivity(p: &LogPositivityParams) -> Result<Report> {
    let grid = grid_of(p.grid)?;
    let part = DyadicPartition::new(grid);
    let u0 = SpectralField::constant(grid, 1.0);
    let cfg = p.time.solve_config();
    let rows = par_samples(p.samples, |s| {
        let h = &random_band_limited::<f64>(grid, p.kmax, p.decay, p.seed, s)? * p.amplitude;
        let traj = solve_classical(&u0, &h, 0.0, Nonlinearity::Identity, &cfg)?;
        if let Some(t) = traj.exploded_at {
            return Err(Error::Explosion(t));
        }
        let (lhs, rhs) = log_mass_identity(&traj)?;
        let ml = mean_log(traj.last())?;
        let vmin = traj.states.iter().map(min_value).fold(f64::INFINITY, f64::min);
        Ok(vec![
            Row::new("mean_log", s, p.time.t_end, ml),
            Row::new("dirichlet_integral", s, p.time.t_end, rhs),
            Row::new("gap", s, p.time.t_end, (lhs - rhs).abs()),
            Row::new("min_value", s, p.time.t_end, vmin),
            Row::new("target_distance", s, p.time.t_end, ml - p.c_target * p.time.t_end),
        ])
    })?;
    Report::build(ExperimentKind::LogPositivity, p.to_config(), meta(grid, &part), rows)
}

pub(crate) fn judge_log_positivity(p: &LogPositivityParams, rows: &[Row]) -> Verdict {
    let mut v = Verdict::default();
    let floor = -p.c_target * p.time.t_end - p.tol;
    v.push(bound_check(rows, "mean_log_nonnegative", "mean_log", None, Some(-p.tol)));
    v.push(bound_check(rows, "identity", "gap", Some(p.tol), None));
    v.push(bound_check(rows, "positive", "min_value", None, Some(0.0)));
    v.push(bound_check(rows, "target_unreachable", "target_distance", None, Some(floor)));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{run, verify};

    fn small_solver(cfg: Config) -> Config {
        cfg.with("grid", 128).with("n", "1..4").with("t_end", 0.1).with("dt", 0.01).with("snap_every", 5)
    }

    #[test]
    fn support_approx_small_run() {
        let r = run(ExperimentKind::SupportApprox, &small_solver(Config::new())).unwrap();
        assert_eq!(r.rows.len(), 8);
        assert!(r.rows.iter().all(|r| r.value.is_finite() && r.value > 0.0));
        assert!(r.verdict.check("enhanced_distance_decreasing").unwrap().pass, "{}", r.verdict);
    }

    #[test]
    fn support_approx_requires_c_above_a() {
        for (a, c) in [(1.0, 1.0), (-1.0, 0.0), (2.0, 1.5)] {
            let cfg = Config::new().with("a", a).with("c", c);
            assert!(matches!(SupportApproxParams::from_config(&cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn renorm_group_shift_is_exact() {
        let r = run(ExperimentKind::RenormGroup, &small_solver(Config::new())).unwrap();
        let v = &r.verdict;
        assert!(v.check("lift_shift_exact").unwrap().pass, "{v}");
        assert!(v.check("solver_shift_exact").unwrap().pass, "{v}");
        let zero = r.rows.iter().find(|r| r.quantity == "solver_shift" && r.x == 0.0).unwrap();
        assert!(zero.value <= 1e-12);
    }

    #[test]
    fn log_positivity_passes_and_roundtrips() {
        let cfg = Config::new().with("samples", 3).with("t_end", 0.1);
        let r = run(ExperimentKind::LogPositivity, &cfg).unwrap();
        assert!(r.verdict.passed(), "{}", r.verdict);
        let dir = tempfile::tempdir().unwrap();
        r.write(dir.path()).unwrap();
        let out = verify(dir.path()).unwrap();
        assert!(out.matches_stored && out.ok());
        // Re-running from the manifest reproduces the CSV byte for byte.
        let manifest = Config::parse(&std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap()).unwrap();
        let again = run(ExperimentKind::LogPositivity, &manifest).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        again.write(dir2.path()).unwrap();
        let read = |d: &std::path::Path| std::fs::read(d.join("report.csv")).unwrap();
        assert_eq!(read(dir.path()), read(dir2.path()));
    }

    #[test]
    fn log_positivity_zero_potential_is_trivial() {
        let cfg = Config::new().with("samples", 2).with("t_end", 0.05).with("amplitude", 0);
        let r = run(ExperimentKind::LogPositivity, &cfg).unwrap();
        for q in ["mean_log", "dirichlet_integral", "gap"] {
            assert!(r.rows.iter().filter(|r| r.quantity == q).all(|r| r.value.abs() < 1e-15), "{q}");
        }
    }

    #[test]
    fn tampered_report_fails_verification() {
        let cfg = Config::new().with("samples", 2).with("t_end", 0.05);
        let r = run(ExperimentKind::LogPositivity, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        r.write(dir.path()).unwrap();
        let path = dir.path().join("report.csv");
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let i = lines.iter().position(|l| l.starts_with("min_value")).unwrap();
        let mut parts: Vec<&str> = lines[i].split(',').collect();
        parts[3] = "-1.0";
        lines[i] = parts.join(",");
        std::fs::write(&path, lines.join("\n") + "\n").unwrap();
        let out = verify(dir.path()).unwrap();
        assert!(!out.matches_stored);
        assert!(!out.verdict.passed());
    }
}
