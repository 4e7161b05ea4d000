use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use gpam::enhancement::{enhance, h_alpha_norms, save_pair};
use gpam::experiments::{self, Config, ExperimentKind};
use gpam::io::{field_hash, load_field, save_field};
use gpam::littlewood_paley::DyadicPartition;
use gpam::noise::{mollify, sample_white_noise_band, Mollifier};
use gpam::pde::{save_trajectory, solve_classical, Nonlinearity, Scheme, SolveConfig};
use gpam::{Error, Grid, SpectralField};

#[derive(Debug, Parser)]
#[command(name = "gpam", version, about = "Pseudo-spectral laboratory for the generalized parabolic Anderson model")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample band-limited white noise, optionally mollified.
    Noise(NoiseArgs),
    /// Dump the dyadic partition of a grid.
    Partition(PartitionArgs),
    /// Build the lift (θ, θ∘Kθ − c) of a field or of a fresh noise sample.
    Enhance(EnhanceArgs),
    /// Solve the renormalized equation with a smooth potential.
    Solve(SolveArgs),
    /// Run an experiment; extra `--key value` pairs override the config.
    Experiment(ExperimentArgs),
    /// Recompute the verdict of a stored experiment run.
    Verify(VerifyArgs),
    /// Print the version.
    Version,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[arg(long)]
    pub grid: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    /// Largest component frequency (default: the grid's band limit).
    #[arg(long)]
    pub band: Option<i64>,
    #[arg(long, requires = "eps")]
    pub psi: Option<Mollifier>,
    #[arg(long, requires = "psi")]
    pub eps: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[arg(long)]
    pub grid: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    /// Field file for θ; without it a white-noise sample is drawn.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, required_unless_present = "input")]
    pub grid: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Renormalization constant (default: 0 for a file, the sample's own
    /// constant for noise).
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long, default_value_t = 0.75)]
    pub alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Field file of the potential h.
    #[arg(long)]
    pub h: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub c: f64,
    #[arg(long, default_value = "identity")]
    pub f: Nonlinearity,
    #[arg(long, default_value = "etd2rk")]
    pub scheme: Scheme,
    #[arg(long, default_value_t = 1.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Constant initial condition.
    #[arg(long, default_value_t = 1.0)]
    pub u0: f64,
    #[arg(long, default_value_t = 1)]
    pub snap_every: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    pub name: String,
    /// Flat key = value file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides as `--key value` or `--key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub dir: PathBuf,
}

#[derive(Debug)]
pub enum Failure {
    /// A verdict failed; the report is already printed.
    Verdict,
    /// Bad flags or configuration.
    Usage(String),
    /// The computation itself failed.
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse(_) | Error::InvalidParameter(_) | Error::InvalidGrid(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

pub fn run(cli: Cli) -> Outcome {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Failure::Usage("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Noise(a) => noise(a),
        Command::Partition(a) => partition(a),
        Command::Enhance(a) => enhance_cmd(a),
        Command::Solve(a) => solve(a),
        Command::Experiment(a) => experiment(a),
        Command::Verify(a) => verify(a),
        Command::Version => {
            println!("gpam {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

/// Writes `manifest.txt` with the command, version and `entries`.
fn write_manifest(dir: &Path, command: &str, entries: &[(&str, String)]) -> Outcome {
    let mut text = format!("command = {command}\nversion = {}\n", env!("CARGO_PKG_VERSION"));
    for (k, v) in entries {
        text += &format!("{k} = {v}\n");
    }
    fs::create_dir_all(dir)?;
    fs::write(dir.join("manifest.txt"), text)?;
    Ok(())
}

fn grid(n: usize) -> std::result::Result<Grid, Failure> {
    Grid::new(n).map_err(Failure::from)
}

fn noise(a: NoiseArgs) -> Outcome {
    let g = grid(a.grid)?;
    let band = a.band.unwrap_or(g.band_limit());
    let xi = sample_white_noise_band::<f64>(g, band, a.seed, a.stream)?;
    let field = match (a.psi, a.eps) {
        (Some(psi), Some(eps)) => mollify(&xi.field, psi, eps)?,
        _ => xi.field,
    };
    fs::create_dir_all(&a.out)?;
    save_field(a.out.join("noise.field"), &field)?;
    let mut entries = vec![
        ("grid", g.n().to_string()),
        ("seed", a.seed.to_string()),
        ("stream", a.stream.to_string()),
        ("band", band.to_string()),
    ];
    if let (Some(psi), Some(eps)) = (a.psi, a.eps) {
        entries.push(("psi", psi.to_string()));
        entries.push(("eps", format!("{eps:?}")));
    }
    entries.push(("field_hash", field_hash(&field)));
    write_manifest(&a.out, "noise", &entries)?;
    println!("wrote {}", a.out.join("noise.field").display());
    Ok(())
}

fn partition(a: PartitionArgs) -> Outcome {
    let g = grid(a.grid)?;
    let part = DyadicPartition::new(g);
    fs::create_dir_all(&a.out)?;
    let mut text = String::from("j,radius,weight\n");
    for (j, r, w) in part.dump_rows() {
        text += &format!("{j},{r:?},{w:?}\n");
    }
    fs::write(a.out.join("partition.csv"), text)?;
    let radii = part.radii();
    write_manifest(
        &a.out,
        "partition",
        &[
            ("grid", g.n().to_string()),
            ("j_max", part.j_max().to_string()),
            ("chi_outer", format!("{:?}", radii.chi_outer)),
            ("rho_inner", format!("{:?}", radii.rho_inner)),
            ("rho_outer", format!("{:?}", radii.rho_outer)),
            ("partition_hash", part.hash()),
        ],
    )?;
    println!("partition_hash = {}", part.hash());
    Ok(())
}

fn enhance_cmd(a: EnhanceArgs) -> Outcome {
    let (theta, c, source): (SpectralField<f64>, f64, String) = match &a.input {
        Some(path) => {
            let t = load_field(path)?;
            (t, a.c.unwrap_or(0.0), path.display().to_string())
        }
        None => {
            let g = grid(a.grid.expect("clap enforces --grid without --input"))?;
            let xi = sample_white_noise_band::<f64>(g, g.band_limit(), a.seed, 0)?;
            let c = a.c.unwrap_or_else(|| xi.renorm_constant());
            (xi.field, c, format!("white noise, seed {}", a.seed))
        }
    };
    let part = DyadicPartition::new(theta.grid());
    let pair = enhance(&theta, c, &part)?;
    save_pair(&a.out, &pair, a.alpha)?;
    let (n1, n2) = h_alpha_norms(&pair, a.alpha, &part)?;
    write_manifest(
        &a.out,
        "enhance",
        &[
            ("source", source),
            ("grid", theta.grid().n().to_string()),
            ("c", format!("{c:?}")),
            ("alpha", format!("{:?}", a.alpha)),
            ("theta_hash", field_hash(&theta)),
            ("partition_hash", part.hash()),
        ],
    )?;
    println!("first norm = {n1:.6e}\nsecond norm = {n2:.6e}");
    Ok(())
}

fn solve(a: SolveArgs) -> Outcome {
    let h: SpectralField<f64> = load_field(&a.h)?;
    let u0 = SpectralField::constant(h.grid(), a.u0);
    let cfg = SolveConfig { t_end: a.t_end, dt: a.dt, scheme: a.scheme, snap_every: a.snap_every, ..SolveConfig::default() };
    let traj = solve_classical(&u0, &h, a.c, a.f, &cfg)?;
    save_trajectory(&a.out, &traj)?;
    write_manifest(
        &a.out,
        "solve",
        &[
            ("h", a.h.display().to_string()),
            ("h_hash", field_hash(&h)),
            ("c", format!("{:?}", a.c)),
            ("f", a.f.to_string()),
            ("scheme", a.scheme.to_string()),
            ("t_end", format!("{:?}", a.t_end)),
            ("dt", format!("{:?}", a.dt)),
            ("u0", format!("{:?}", a.u0)),
            ("snap_every", a.snap_every.to_string()),
        ],
    )?;
    match traj.exploded_at {
        Some(t) => {
            eprintln!("solution blew up at t = {t}");
            Err(Failure::Verdict)
        }
        None => {
            println!("stored {} states in {}", traj.states.len(), a.out.display());
            Ok(())
        }
    }
}

/// Turns `--key value` / `--key=value` tokens into config entries;
/// dashes in keys become underscores.
fn parse_overrides(tokens: &[String]) -> std::result::Result<Vec<(String, String)>, Failure> {
    let mut out = Vec::new();
    let mut it = tokens.iter();
    while let Some(tok) = it.next() {
        let key = tok
            .strip_prefix("--")
            .filter(|k| !k.is_empty())
            .ok_or_else(|| Failure::Usage(format!("unexpected argument '{tok}', overrides look like --key value")))?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| Failure::Usage(format!("--{key} needs a value")))?;
                (key.to_string(), v.clone())
            }
        };
        out.push((key.replace('-', "_"), value));
    }
    Ok(out)
}

fn experiment(a: ExperimentArgs) -> Outcome {
    let kind: ExperimentKind = a.name.parse().map_err(|_| {
        let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
        Failure::Usage(format!("unknown experiment '{}'; choose one of {}", a.name, names.join(", ")))
    })?;
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            Config::parse(&text)?
        }
        None => Config::new(),
    };
    if let Some(name) = cfg.get("experiment") {
        if name != kind.name() {
            return Err(Failure::Usage(format!("config is for '{name}', not '{kind}'")));
        }
    }
    for (k, v) in parse_overrides(&a.overrides)? {
        cfg.set(k, v);
    }
    let report = experiments::run(kind, &cfg)?;
    report.write(&a.out)?;
    print!("{}", report.verdict);
    if report.verdict.passed() {
        Ok(())
    } else {
        Err(Failure::Verdict)
    }
}

fn verify(a: VerifyArgs) -> Outcome {
    let out = experiments::verify(&a.dir)?;
    print!("{}", out.verdict);
    if !out.matches_stored {
        eprintln!("recomputed verdict differs from {}", a.dir.join("verdict.txt").display());
    }
    if out.ok() {
        Ok(())
    } else {
        Err(Failure::Verdict)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_both_forms() {
        let toks: Vec<String> = ["--alpha", "0.7", "--n=3..5", "--t-end", "-1"].iter().map(|s| s.to_string()).collect();
        let o = parse_overrides(&toks).unwrap();
        assert_eq!(o, vec![("alpha".into(), "0.7".into()), ("n".into(), "3..5".into()), ("t_end".into(), "-1".into())]);
        assert!(matches!(parse_overrides(&["alpha".to_string()]), Err(Failure::Usage(_))));
        assert!(matches!(parse_overrides(&["--alpha".to_string()]), Err(Failure::Usage(_))));
    }
}
