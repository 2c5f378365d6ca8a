//! Batch front end: `table`, `verify`, `ode` and `edge`.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_edge, cmd_ode, cmd_table, cmd_verify, run_command, CmdOutcome, EXIT_CONFIG};
pub use config::{Command, Digits, GridSpec, RunConfig, Values};

use crate::error::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "phl", version, about = "Orthogonal polynomials and Painleve identities at configurable precision")]
struct Cli {
    #[command(subcommand)]
    cmd: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Tabulate h_n, p_n, alpha_n, beta_n, R_n, r_n, H_n, sigma_n.
    Table(Flags),
    /// Residuals of the identity catalogue and ladder families.
    Verify(Flags),
    /// Riccati trajectory against the quadrature route.
    Ode(Flags),
    /// Edge-scaled profile and the Painleve XXXIV trajectory.
    Edge(Flags),
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// JSON config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long = "A")]
    big_a: Option<f64>,
    #[arg(long = "B")]
    big_b: Option<f64>,
    /// Comma-separated t values.
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<f64>>,
    /// start:stop:count[:log]
    #[arg(long)]
    t_grid: Option<GridSpec>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    /// `auto` or a digit count.
    #[arg(long)]
    digits: Option<Digits>,
    /// Identity ids or ladder families, comma-separated.
    #[arg(long, value_delimiter = ',')]
    ids: Option<Vec<String>>,
    #[arg(long)]
    out_dir: Option<String>,
    #[arg(long)]
    cache_dir: Option<String>,
    #[arg(long)]
    emit_plots: bool,
    #[arg(long)]
    full_precision: bool,
    /// id=tolerance; repeatable.
    #[arg(long)]
    tol_override: Vec<String>,
    /// Ladder evaluation points.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    zs: Option<Vec<f64>>,
    /// k:rel scales moment mu_k by 1 + rel.
    #[arg(long)]
    perturb_moment: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    s_grid: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true)]
    s_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    s_max: Option<f64>,
}

fn parse_pair(s: &str, sep: char, what: &str) -> Result<(String, String)> {
    let (a, b) = s.split_once(sep).ok_or_else(|| Error::Config(format!("{what} expects `a{sep}b`, got `{s}`")))?;
    Ok((a.trim().to_string(), b.trim().to_string()))
}

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Config(format!("bad {what} `{s}`")))
}

fn load_config(path: &PathBuf, command: Command) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut v: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let obj = v.as_object_mut().ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
    obj.insert("command".into(), serde_json::to_value(command)?);
    serde_json::from_value(v).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn resolve(command: Command, f: Flags) -> Result<RunConfig> {
    let mut c = match &f.config {
        Some(p) => load_config(p, command)?,
        None => RunConfig::new(command),
    };
    macro_rules! set {
        ($($field:ident => $target:ident),* $(,)?) => {
            $(if let Some(v) = f.$field { c.$target = v; })*
        };
    }
    set!(alpha => alpha, gamma => gamma, big_a => big_a, big_b => big_b, digits => digits, out_dir => out_dir);
    macro_rules! set_opt {
        ($($field:ident),* $(,)?) => {
            $(if f.$field.is_some() { c.$field = f.$field; })*
        };
    }
    let n_max_only = f.n_max.is_some() && f.n_list.is_none();
    set_opt!(n_max, n_list, ids, cache_dir, zs, n, t0, t1, points, tol, s_grid, s_min, s_max);
    if let Some(t) = f.t {
        c.t = Some(Values::Many(t));
        c.t_grid = None;
    }
    if let Some(g) = f.t_grid {
        c.t_grid = Some(g);
    }
    if n_max_only {
        c.n_list = None;
    }
    c.emit_plots |= f.emit_plots;
    c.full_precision |= f.full_precision;
    for o in &f.tol_override {
        let (id, v) = parse_pair(o, '=', "--tol-override")?;
        c.tol_override.insert(id, num(&v, "tolerance")?);
    }
    if let Some(pm) = &f.perturb_moment {
        let (k, rel) = parse_pair(pm, ':', "--perturb-moment")?;
        c.perturb_moment = Some((num(&k, "moment index")?, num(&rel, "relative perturbation")?));
    }
    c.validate()?;
    Ok(c)
}

/// Parses a complete configuration from command-line arguments (including the
/// program name) without running anything.
pub fn parse_args<I, T>(args: I) -> std::result::Result<RunConfig, String>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| e.to_string())?;
    let (cmd, flags) = split(cli.cmd);
    resolve(cmd, flags).map_err(|e| e.to_string())
}

fn split(s: Sub) -> (Command, Flags) {
    match s {
        Sub::Table(f) => (Command::Table, f),
        Sub::Verify(f) => (Command::Verify, f),
        Sub::Ode(f) => (Command::Ode, f),
        Sub::Edge(f) => (Command::Edge, f),
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::UnknownIdentity(_) | Error::UnsupportedConfig(_) | Error::InvalidArgument(_) => EXIT_CONFIG,
        Error::PrecisionFailure { .. } => commands::EXIT_PRECISION,
        Error::SingularityEncountered { .. } => commands::EXIT_SINGULAR,
        _ => commands::EXIT_FAIL,
    }
}

/// Runs the front end and returns the process exit code. Written files are
/// listed on stdout, diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let (cmd, flags) = split(cli.cmd);
    let cfg = match resolve(cmd, flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("phl: {e}");
            return EXIT_CONFIG;
        }
    };
    match run_command(&cfg) {
        Ok(out) => {
            for f in &out.files {
                println!("{}", f.display());
            }
            out.exit_code
        }
        Err(e) => {
            eprintln!("phl: {e}");
            exit_code_for(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_json() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"alpha":2.0,"t":[0.5],"n_max":3,"digits":80}"#).unwrap();
        let c = parse_args(["phl", "verify", "--config", p.to_str().unwrap(), "--alpha", "1.5", "--tol-override", "s12=1e-9", "--zs=-1"])
            .unwrap();
        assert_eq!(c.command, Command::Verify);
        assert_eq!(c.alpha, 1.5);
        assert_eq!(c.digits, Digits::Fixed(80));
        assert_eq!(c.t_values(), vec![0.5]);
        assert_eq!(c.tol_override["s12"], 1e-9);
        assert_eq!(c.zs, Some(vec![-1.0]));
    }

    #[test]
    fn bad_flags_are_config_errors() {
        assert!(parse_args(["phl", "table", "--t-grid", "3:1:4"]).is_err());
        assert!(parse_args(["phl", "verify", "--ids", "s12,bogus"]).is_err());
        assert!(parse_args(["phl", "verify", "--perturb-moment", "3"]).is_err());
        assert_eq!(run(["phl", "table", "--digits", "many"]), EXIT_CONFIG);
        assert_eq!(run(["phl", "--help"]), 0);
    }
}
