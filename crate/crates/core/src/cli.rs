//! The `cmac` command-line front end.
//!
//! Every subcommand is a thin binding over the library: arguments are
//! parsed into library types, one library call does the work, and the
//! result is serialized. Powers are given in dB relative to σ² unless the
//! flag name says otherwise (`--ppk`, `--ipk`, `--pav`, `--iav` are linear)
//! or `--linear` is passed.
//!
//! A `--config FILE` manifest of `key = value` lines supplies the same keys
//! as the long flags (`ppk-db = -10:20:2`, `linear = true`); flags given on
//! the command line override it.
//!
//! Exit codes: 0 success, 2 invalid input, 3 I/O failure, 4 dual search
//! did not converge. Failures print a JSON object
//! `{"error": {"kind", "message", ...}}` on stdout.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::avg_solver::{solve_dual, AvgConstraints, DualOptions};
use crate::channel::{db_to_linear, linear_to_db, ChannelSource, ChannelState, FadingModel};
use crate::error::{Error, Result};
use crate::montecarlo::{
    compare_policies, estimate_dtdma_probability, estimate_ergodic_rate, probability_csv, Policy,
    ProbabilityRow, SimConfig, Sweep, SweepPoint, DEFAULT_ROUNDS, SCHEMA_VERSION,
};
use crate::oracle::{grid_search, GridSpec};
use crate::peak_solver::{solve, Algorithm, PeakConstraints};
use crate::rate::NoisePower;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NON_CONVERGENCE: i32 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "cmac",
    version,
    about = "Power allocation for the fading cognitive MAC without SIC"
)]
pub struct Cli {
    /// Key-value manifest with defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the peak-constrained problem for one channel state.
    #[command(args_override_self = true)]
    Solve(SolveArgs),
    /// Ergodic sum rates of selected policies over a power sweep.
    #[command(args_override_self = true)]
    Simulate(SimulateArgs),
    /// Probability that the sufficient D-TDMA condition holds, per K.
    #[command(args_override_self = true)]
    ProbDtdma(ProbArgs),
    /// Dual D-TDMA policy under average power and interference budgets.
    #[command(args_override_self = true)]
    AvgSolve(AvgArgs),
    /// Optimal, D-TDMA, SIC-OP and hybrid side by side with paired gaps.
    #[command(args_override_self = true)]
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// extreme | dtdma | sorted | sic-op | hybrid | oracle
    #[arg(long, default_value = "extreme")]
    pub algo: String,
    /// Secondary-link gains, comma separated.
    #[arg(long)]
    pub h: String,
    /// Gains to the primary receiver, comma separated.
    #[arg(long)]
    pub g: String,
    /// Peak transmit powers (linear); one value applies to every user.
    #[arg(long)]
    pub ppk: Option<String>,
    /// Peak transmit powers in dB.
    #[arg(long = "ppk-db", allow_hyphen_values = true)]
    pub ppk_db: Option<String>,
    /// Peak interference budget (linear).
    #[arg(long)]
    pub ipk: Option<f64>,
    /// Peak interference budget in dB.
    #[arg(long = "ipk-db", allow_hyphen_values = true)]
    pub ipk_db: Option<f64>,
    /// Receiver noise power (linear).
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    /// Grid points per axis for `oracle`.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// Number of secondary users.
    #[arg(long)]
    pub k: Option<usize>,
    /// Mean of the exponential secondary-link gains.
    #[arg(long = "mean-h", default_value_t = 1.0)]
    pub mean_h: f64,
    /// Mean of the exponential gains to the primary receiver.
    #[arg(long = "mean-g", default_value_t = 1.0)]
    pub mean_g: f64,
    /// Seed of the channel streams.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Receiver noise power (linear).
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    /// Replace fading by this fixed state (needs `--fixed-g`).
    #[arg(long = "fixed-h")]
    pub fixed_h: Option<String>,
    #[arg(long = "fixed-g")]
    pub fixed_g: Option<String>,
}

#[derive(Args, Debug)]
pub struct PeakSweepArgs {
    /// Peak transmit power sweep: `start:stop:step`, a comma list, or one value.
    #[arg(long = "ppk-db", allow_hyphen_values = true)]
    pub ppk_db: Option<String>,
    /// Peak interference budget.
    #[arg(long = "ipk-db", allow_hyphen_values = true, default_value_t = 0.0)]
    pub ipk_db: f64,
    /// Read power values as linear instead of dB.
    #[arg(long)]
    pub linear: bool,
}

#[derive(Args, Debug)]
pub struct OutputArgs {
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Defaults to json for `.json` paths, csv otherwise.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub sweep: PeakSweepArgs,
    /// Average power budget; switches to average constraints.
    #[arg(long = "pav-db", allow_hyphen_values = true)]
    pub pav_db: Option<f64>,
    /// Average interference budget (dB), used with `--pav-db`.
    #[arg(long = "iav-db", allow_hyphen_values = true, default_value_t = 0.0)]
    pub iav_db: f64,
    /// Fading blocks per sweep point.
    #[arg(long, default_value_t = DEFAULT_ROUNDS)]
    pub rounds: usize,
    /// Comma-separated policy tags.
    #[arg(long)]
    pub algos: Option<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub sweep: PeakSweepArgs,
    /// Fading blocks per sweep point.
    #[arg(long, default_value_t = DEFAULT_ROUNDS)]
    pub rounds: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct ProbArgs {
    /// Users: `start:stop[:step]` or a comma list.
    #[arg(long, default_value = "1:20")]
    pub k: String,
    #[command(flatten)]
    pub sweep: PeakSweepArgs,
    /// Mean of the exponential secondary-link gains.
    #[arg(long = "mean-h", default_value_t = 1.0)]
    pub mean_h: f64,
    /// Mean of the exponential gains to the primary receiver.
    #[arg(long = "mean-g", default_value_t = 1.0)]
    pub mean_g: f64,
    /// Seed of the channel streams.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Receiver noise power (linear).
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    /// Fading blocks per sweep point.
    #[arg(long, default_value_t = DEFAULT_ROUNDS)]
    pub rounds: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct AvgArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Average power budgets (linear); one value applies to every user.
    #[arg(long)]
    pub pav: Option<String>,
    /// Average power budgets in dB.
    #[arg(long = "pav-db", allow_hyphen_values = true)]
    pub pav_db: Option<String>,
    /// Average interference budget (linear).
    #[arg(long)]
    pub iav: Option<f64>,
    /// Average interference budget in dB.
    #[arg(long = "iav-db", allow_hyphen_values = true)]
    pub iav_db: Option<f64>,
    /// Sampled channel states used by the dual search.
    #[arg(long, default_value_t = DEFAULT_ROUNDS)]
    pub rounds: usize,
    /// Relative tolerance on every average constraint.
    #[arg(long, default_value_t = crate::avg_solver::DEFAULT_TOL)]
    pub tol: f64,
    /// Iteration cap; exceeding it exits with code 4.
    #[arg(long = "max-iter", default_value_t = crate::avg_solver::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Upper bound on any single transmit power.
    #[arg(long = "power-cap")]
    pub power_cap: Option<f64>,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

// --- config manifests -----------------------------------------------------------

/// Parsed `key = value` manifest. Keys are long flag names without the
/// leading dashes; `_` is accepted for `-`. Later duplicates win.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    entries: Vec<(String, String)>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidInput(format!("config line {}: expected `key = value`", n + 1))
            })?;
            cfg.insert(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn insert(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.replace('_', "-");
        let key_ok = !key.is_empty()
            && !key.starts_with('-')
            && key
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-');
        if !key_ok || key == "config" {
            return Err(Error::InvalidInput(format!("invalid config key `{key}`")));
        }
        if value.is_empty() || value.trim() != value || value.contains(['\n', '\r']) {
            return Err(Error::InvalidInput(format!(
                "invalid value for config key `{key}`"
            )));
        }
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value.to_string(),
            None => self.entries.push((key, value.to_string())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Equivalent command-line flags; `true`/`false` values toggle switches.
    pub fn to_args(&self) -> Vec<String> {
        let mut args = Vec::new();
        for (k, v) in &self.entries {
            match v.as_str() {
                "true" => args.push(format!("--{k}")),
                "false" => {}
                _ => {
                    args.push(format!("--{k}"));
                    args.push(v.clone());
                }
            }
        }
        args
    }
}

impl std::fmt::Display for RunConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Splices `--config FILE` contents in front of the explicit flags so
/// that the latter override.
fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    let head: Vec<OsString> = it.by_ref().take(2).collect();
    while let Some(arg) = it.next() {
        match arg.to_str() {
            Some("--config") => {
                let path = it
                    .next()
                    .ok_or_else(|| Error::InvalidInput("--config needs a file path".into()))?;
                config = Some(PathBuf::from(path));
            }
            Some(s) if s.starts_with("--config=") => config = Some(PathBuf::from(&s[9..])),
            _ => rest.push(arg),
        }
    }
    let mut out = head;
    if let Some(path) = config {
        out.extend(
            RunConfig::read(&path)?
                .to_args()
                .into_iter()
                .map(OsString::from),
        );
    }
    out.extend(rest);
    Ok(out)
}

// --- argument helpers -----------------------------------------------------------

/// Comma-separated list of numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim().parse::<f64>().map_err(|_| {
                Error::InvalidInput(format!("malformed number `{}` in `{s}`", t.trim()))
            })
        })
        .collect()
}

/// `start:stop:step` (inclusive), a comma list, or a single value.
pub fn parse_sweep(s: &str) -> Result<Vec<f64>> {
    if !s.contains(':') {
        return parse_list(s);
    }
    let parts = s
        .split(':')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(|_| Error::InvalidInput(format!("malformed sweep `{s}`")))?;
    let (start, stop, step) = match parts[..] {
        [a, b] => (a, b, 1.0),
        [a, b, c] => (a, b, c),
        _ => return Err(Error::InvalidInput(format!("malformed sweep `{s}`"))),
    };
    if !(step > 0.0 && step.is_finite() && start.is_finite() && stop >= start) {
        return Err(Error::InvalidInput(format!(
            "sweep `{s}` needs start ≤ stop and step > 0"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    if n > 100_000 {
        return Err(Error::InvalidInput(format!(
            "sweep `{s}` has too many points"
        )));
    }
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

/// `start:stop[:step]` or a comma list of user counts, each at least 1.
pub fn parse_k_range(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidInput(format!("malformed user range `{s}`"));
    let ks: Vec<usize> = if s.contains(':') {
        let parts = s
            .split(':')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad())?;
        let (a, b, step) = match parts[..] {
            [a, b] => (a, b, 1),
            [a, b, c] => (a, b, c),
            _ => return Err(bad()),
        };
        if step == 0 || b < a {
            return Err(bad());
        }
        (a..=b).step_by(step).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?
    };
    if ks.is_empty() || ks.contains(&0) {
        return Err(bad());
    }
    Ok(ks)
}

fn broadcast(values: Vec<f64>, k: usize, what: &str) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; k]),
        n if n == k => Ok(values),
        n => Err(Error::InvalidInput(format!(
            "{what}: expected 1 or {k} values, got {n}"
        ))),
    }
}

fn linear_or_db(linear: Option<&str>, db: Option<&str>, k: usize, what: &str) -> Result<Vec<f64>> {
    match (linear, db) {
        (Some(v), None) => broadcast(parse_list(v)?, k, what),
        (None, Some(v)) => Ok(broadcast(parse_list(v)?, k, what)?
            .into_iter()
            .map(db_to_linear)
            .collect()),
        (Some(_), Some(_)) => Err(Error::InvalidInput(format!(
            "give `--{what}` or `--{what}-db`, not both"
        ))),
        (None, None) => Err(Error::InvalidInput(format!(
            "missing `--{what}` or `--{what}-db`"
        ))),
    }
}

fn scalar_linear_or_db(linear: Option<f64>, db: Option<f64>, what: &str) -> Result<f64> {
    match (linear, db) {
        (Some(v), None) => Ok(v),
        (None, Some(v)) => Ok(db_to_linear(v)),
        (Some(_), Some(_)) => Err(Error::InvalidInput(format!(
            "give `--{what}` or `--{what}-db`, not both"
        ))),
        (None, None) => Err(Error::InvalidInput(format!(
            "missing `--{what}` or `--{what}-db`"
        ))),
    }
}

impl ModelArgs {
    fn source(&self) -> Result<ChannelSource> {
        match (&self.fixed_h, &self.fixed_g) {
            (Some(h), Some(g)) => {
                let state = ChannelState::new(parse_list(h)?, parse_list(g)?)?;
                if let Some(k) = self.k.filter(|&k| k != state.k()) {
                    return Err(Error::LengthMismatch {
                        expected: k,
                        actual: state.k(),
                    });
                }
                Ok(ChannelSource::Fixed(state))
            }
            (None, None) => {
                let k = self
                    .k
                    .ok_or_else(|| Error::InvalidInput("missing `--k`".into()))?;
                Ok(ChannelSource::Fading(FadingModel::new(
                    k,
                    self.mean_h,
                    self.mean_g,
                    self.seed,
                )?))
            }
            _ => Err(Error::InvalidInput(
                "`--fixed-h` and `--fixed-g` go together".into(),
            )),
        }
    }

    fn noise(&self) -> Result<NoisePower> {
        NoisePower::new(self.sigma2)
    }
}

impl PeakSweepArgs {
    /// (label in dB, linear value) per sweep point, plus the linear IPC.
    fn points(&self) -> Result<(Vec<(f64, f64)>, f64)> {
        let spec = self
            .ppk_db
            .as_deref()
            .ok_or_else(|| Error::InvalidInput("missing `--ppk-db`".into()))?;
        let values = parse_sweep(spec)?;
        let pts = values
            .into_iter()
            .map(|v| {
                if self.linear {
                    (linear_to_db(v), v)
                } else {
                    (v, db_to_linear(v))
                }
            })
            .collect();
        let ipk = if self.linear {
            self.ipk_db
        } else {
            db_to_linear(self.ipk_db)
        };
        Ok((pts, ipk))
    }

    fn sweep(&self, k: usize) -> Result<Sweep> {
        let (pts, ipk) = self.points()?;
        let points = pts
            .into_iter()
            .map(|(db, p)| {
                Ok(SweepPoint {
                    sweep_db: db,
                    constraints: PeakConstraints::uniform(k, p, ipk)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Sweep::Peak(points))
    }
}

impl OutputArgs {
    fn format(&self) -> Format {
        self.format.unwrap_or_else(|| match &self.out {
            Some(p) if p.extension().is_some_and(|e| e == "json") => Format::Json,
            _ => Format::Csv,
        })
    }
}

fn now_secs() -> Option<u64> {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .ok()
        .map(|d| d.as_secs())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Writes `body` to `path`, or to stdout when no path is given. With a
/// path, `summary` goes to stdout instead.
fn emit(out: &mut dyn Write, path: Option<&Path>, body: &str, summary: &str) -> Result<()> {
    match path {
        Some(p) => {
            std::fs::write(p, body)?;
            out.write_all(summary.as_bytes())?;
        }
        None => out.write_all(body.as_bytes())?,
    }
    Ok(())
}

// --- subcommands ------------------------------------------------------------------

fn run_solve(args: &SolveArgs, out: &mut dyn Write) -> Result<()> {
    let algorithm: Algorithm = args.algo.parse()?;
    let state = ChannelState::new(parse_list(&args.h)?, parse_list(&args.g)?)?;
    let k = state.k();
    let p_pk = linear_or_db(args.ppk.as_deref(), args.ppk_db.as_deref(), k, "ppk")?;
    let i_pk = scalar_linear_or_db(args.ipk, args.ipk_db, "ipk")?;
    let cons = PeakConstraints::new(p_pk, i_pk)?;
    let noise = NoisePower::new(args.sigma2)?;
    let report = match (algorithm, args.grid) {
        (Algorithm::Oracle, Some(n)) => grid_search(&state, &cons, noise, GridSpec::new(n)?)?,
        _ => solve(algorithm, &state, &cons, noise)?,
    };
    let body = to_json(&report);
    emit(
        out,
        args.out.as_deref(),
        &body,
        &format!("rate {} nats\n", report.rate),
    )
}

fn run_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let source = args.model.source()?;
    let k = source.k();
    let (sweep, default_algos) = match args.pav_db {
        Some(pav) => {
            let to_lin = |v: f64| {
                if args.sweep.linear {
                    v
                } else {
                    db_to_linear(v)
                }
            };
            let label = if args.sweep.linear {
                linear_to_db(pav)
            } else {
                pav
            };
            let constraints = AvgConstraints::uniform(k, to_lin(pav), to_lin(args.iav_db))?;
            (
                Sweep::Average {
                    sweep_db: label,
                    constraints,
                },
                "avg,avg-constant,avg-round-robin",
            )
        }
        None => (args.sweep.sweep(k)?, "optimal,dtdma,sic-op"),
    };
    let algorithms = args
        .algos
        .as_deref()
        .unwrap_or(default_algos)
        .split(',')
        .map(|t| t.trim().parse::<Policy>())
        .collect::<Result<Vec<_>>>()?;
    let config = SimConfig {
        source,
        noise: args.model.noise()?,
        sweep,
        rounds: args.rounds,
        algorithms,
    };
    let mut report = estimate_ergodic_rate(&config)?;
    let body = match args.output.format() {
        Format::Csv => report.to_csv(),
        Format::Json => {
            report.metadata.generated_at = now_secs();
            to_json(&report)
        }
    };
    let mut summary = format!(
        "{:>9}  {:<16} {:>12} {:>12} {:>10}\n",
        "sweep_db", "algorithm", "nats", "bits", "stderr"
    );
    for p in &report.points {
        for r in &p.results {
            summary.push_str(&format!(
                "{:>9.3}  {:<16} {:>12.6} {:>12.6} {:>10.2e}\n",
                p.sweep_db, r.algorithm, r.mean_rate_nats, r.mean_rate_bits, r.stderr
            ));
        }
    }
    emit(out, args.output.out.as_deref(), &body, &summary)
}

fn run_compare(args: &CompareArgs, out: &mut dyn Write) -> Result<()> {
    let source = args.model.source()?;
    let sweep = args.sweep.sweep(source.k())?;
    let config = SimConfig {
        source,
        noise: args.model.noise()?,
        sweep,
        rounds: args.rounds,
        algorithms: Vec::new(),
    };
    let mut report = compare_policies(&config)?;
    let body = match args.output.format() {
        Format::Csv => report.to_csv(),
        Format::Json => {
            report.metadata.generated_at = now_secs();
            to_json(&report)
        }
    };
    let mut summary = format!(
        "{:>9}  {:>10} {:>10} {:>10} {:>10} {:>10}\n",
        "sweep_db", "optimal", "dtdma", "sic-op", "hybrid", "sic-bound"
    );
    for r in &report.rows {
        summary.push_str(&format!(
            "{:>9.3}  {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>10.5}\n",
            r.sweep_db,
            r.optimal.mean,
            r.dtdma.mean,
            r.sic_op.mean,
            r.hybrid.mean,
            r.sic_bound.mean
        ));
    }
    emit(out, args.output.out.as_deref(), &body, &summary)
}

fn run_prob_dtdma(args: &ProbArgs, out: &mut dyn Write) -> Result<()> {
    let ks = parse_k_range(&args.k)?;
    let (pts, ipk) = args.sweep.points()?;
    let noise = NoisePower::new(args.sigma2)?;
    let base = FadingModel::new(1, args.mean_h, args.mean_g, args.seed)?;
    let mut rows = Vec::new();
    for &(db, ppk) in &pts {
        for &k in &ks {
            let source = ChannelSource::Fading(base.with_k(k)?);
            let cons = PeakConstraints::uniform(k, ppk, ipk)?;
            let estimate = estimate_dtdma_probability(&source, &cons, noise, args.rounds)?;
            rows.push(ProbabilityRow {
                k,
                ppk_db: db,
                estimate,
            });
        }
    }
    let body = match args.output.format() {
        Format::Csv => probability_csv(&rows, Some(args.seed)),
        Format::Json => to_json(&json!({
            "schema_version": SCHEMA_VERSION,
            "seed": args.seed,
            "generated_at": now_secs(),
            "rows": rows,
        })),
    };
    let mut summary = format!(
        "{:>4} {:>9} {:>11} {:>10}\n",
        "k", "ppk_db", "probability", "stderr"
    );
    for r in &rows {
        summary.push_str(&format!(
            "{:>4} {:>9.3} {:>11.4} {:>10.2e}\n",
            r.k, r.ppk_db, r.estimate.probability, r.estimate.stderr
        ));
    }
    emit(out, args.output.out.as_deref(), &body, &summary)
}

fn run_avg_solve(args: &AvgArgs, out: &mut dyn Write) -> Result<()> {
    let source = args.model.source()?;
    let k = source.k();
    let p_av = linear_or_db(args.pav.as_deref(), args.pav_db.as_deref(), k, "pav")?;
    let i_av = scalar_linear_or_db(args.iav, args.iav_db, "iav")?;
    let cons = AvgConstraints::new(p_av, i_av)?;
    let opts = DualOptions {
        sample_count: args.rounds,
        tol: args.tol,
        max_iter: args.max_iter,
        power_cap: args.power_cap,
    };
    let solution = solve_dual(&source, &cons, args.model.noise()?, opts)?;
    let body = to_json(&solution);
    emit(
        out,
        args.out.as_deref(),
        &body,
        &format!(
            "ergodic rate {} nats after {} iterations\n",
            solution.report.ergodic_rate, solution.report.iterations
        ),
    )
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Solve(a) => run_solve(a, out),
        Command::Simulate(a) => run_simulate(a, out),
        Command::ProbDtdma(a) => run_prob_dtdma(a, out),
        Command::AvgSolve(a) => run_avg_solve(a, out),
        Command::Compare(a) => run_compare(a, out),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::NonConvergence(_) => EXIT_NON_CONVERGENCE,
        _ => EXIT_INPUT,
    }
}

/// Structured form of an error; non-convergence carries the best iterate.
pub fn error_json(e: &Error) -> serde_json::Value {
    let mut v = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
    if let Error::NonConvergence(sol) = e {
        v["error"]["report"] = serde_json::to_value(&sol.report).expect("report serializes");
    }
    v
}

fn fail(e: &Error, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let _ = writeln!(
        out,
        "{}",
        serde_json::to_string_pretty(&error_json(e)).expect("error serializes")
    );
    let _ = writeln!(err, "cmac: {e}");
    exit_code(e)
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv = match expand_config(args.into_iter().map(Into::into).collect()) {
        Ok(a) => a,
        Err(e) => return fail(&e, out, err),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_INPUT
                }
            };
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => fail(&e, out, err),
    }
}
