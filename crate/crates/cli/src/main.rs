//! crquery: command-line front end for the library. Reads small JSON inputs,
//! runs one operation per process, and emits JSON with 12 significant digits
//! (plus an epoch timestamp unless `--reproducible`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crquery_core::error::ErrorClass;
use crquery_core::fractional::{certify_exact, dual_of, solve_lp};
use crquery_core::partition::{divergence_exponent, gaussian_exponent, CovarianceMatrix, SetPartition};
use crquery_core::pmf::{full_set, JointPmf, Measure, TerminalSet};
use crquery_core::renyi::{cardinality_lower_bound, high_mass_set};
use crquery_core::secrecy::{s_in, s_var, strong_converse_gap, KeyTranscriptPmf};
use crquery_core::sim::{simulate, Protocol};
use crquery_core::verify::run_suite;

#[derive(Parser)]
#[command(
    name = "crquery",
    version,
    about = "Query exponents, binned-protocol simulation, and secrecy indices \
             for small discrete sources"
)]
struct Cli {
    /// Also write the JSON result to this file.
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Suppress the timestamp field so identical runs emit identical bytes.
    #[arg(long, global = true)]
    reproducible: bool,
    /// Cap worker threads (falls back to CRQUERY_THREADS, then all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal query exponent of a discrete source for a target set of terminals.
    Capacity(CapacityArgs),
    /// Gaussian exponent of a covariance matrix, minimized over partitions.
    Gaussian(GaussianArgs),
    /// Seeded binning simulation with exact posterior query ranks.
    Simulate(SimulateArgs),
    /// High-mass set construction or cardinality floor for a measure.
    Bounds(BoundsArgs),
    /// Secrecy indices of a key/transcript joint pmf.
    Secrecy(SecrecyArgs),
    /// Run a named invariant suite and report per-property results.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct CapacityArgs {
    /// Joint pmf JSON: {"alphabet_sizes": [...], "probs": [...]} row-major.
    #[arg(long, value_name = "FILE")]
    pmf: PathBuf,
    /// Target terminals as a 1-based comma list, e.g. 1,2,3 (default: all).
    #[arg(long)]
    set: Option<String>,
    /// Re-certify the optimum in exact rational arithmetic.
    #[arg(long)]
    exact: bool,
    /// lp solves the weight program; partition enumerates set partitions
    /// (full terminal set only).
    #[arg(long, value_enum, default_value_t = Method::Lp)]
    method: Method,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Method {
    Lp,
    Partition,
}

#[derive(Args)]
struct GaussianArgs {
    /// Covariance JSON: {"matrix": [[...], ...]}.
    #[arg(long, value_name = "FILE")]
    cov: PathBuf,
    /// Evaluate one partition instead of minimizing, blocks as 1-based
    /// comma lists joined by '|', e.g. 1|2,3.
    #[arg(long)]
    partition: Option<String>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ProtocolName {
    /// One-shot binning from terminal 1 to terminal 2.
    Sw2,
    /// Every terminal bins; everyone reconstructs the full tuple.
    Omni,
    /// No communication.
    None,
}

#[derive(Args)]
struct SimulateArgs {
    /// Joint pmf JSON file.
    #[arg(long, value_name = "FILE")]
    pmf: PathBuf,
    #[arg(long, value_enum)]
    protocol: ProtocolName,
    /// Blocklength.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    trials: usize,
    /// Rate margin added to each communicating terminal.
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    /// Quantile of the per-trial exponents to report.
    #[arg(long, default_value_t = 0.5)]
    quantile: f64,
    /// Sampling and binning seed; required so runs are reproducible.
    #[arg(long)]
    seed: u64,
    /// Count failed recoveries into the exponent quantile.
    #[arg(long)]
    include_failures: bool,
    /// Write a per-trial CSV (success, rank, exponent) to this file.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    /// Measure JSON: {"weights": {"id": mass, ...}}; need not be normalized.
    #[arg(long, value_name = "FILE")]
    measure: PathBuf,
    #[arg(long)]
    delta: f64,
    /// Orders below 1 build the high-mass set; above 1 the cardinality floor.
    #[arg(long)]
    alpha: f64,
    /// Slack parameter of the cardinality floor (alpha > 1 only).
    #[arg(long)]
    delta_prime: Option<f64>,
}

#[derive(Args)]
struct SecrecyArgs {
    /// Joint pmf JSON over (key, transcript).
    #[arg(long, value_name = "FILE")]
    joint: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// One of: lemma2, lemma3, theorem1-equiv, theorem3, secrecy, all.
    #[arg(long)]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum CliError {
    Core(crquery_core::Error),
    Input(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Core(e) => match e.class() {
                ErrorClass::Validation => 2,
                ErrorClass::Resource => 3,
                ErrorClass::Contract => 4,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Input(s) => write!(f, "{s}"),
        }
    }
}

impl From<crquery_core::Error> for CliError {
    fn from(e: crquery_core::Error) -> Self {
        CliError::Core(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    init_threads(cli)?;
    let (obj, code) = match &cli.command {
        Command::Capacity(a) => (cmd_capacity(a)?, 0),
        Command::Gaussian(a) => (cmd_gaussian(a)?, 0),
        Command::Simulate(a) => (cmd_simulate(a)?, 0),
        Command::Bounds(a) => (cmd_bounds(a)?, 0),
        Command::Secrecy(a) => (cmd_secrecy(a)?, 0),
        Command::Verify(a) => {
            let (obj, passed) = cmd_verify(a)?;
            (obj, if passed { 0 } else { 4 })
        }
    };
    emit(cli, obj)?;
    Ok(code)
}

fn init_threads(cli: &Cli) -> Result<(), CliError> {
    let requested = match cli.threads {
        Some(n) => Some(n),
        None => match std::env::var("CRQUERY_THREADS") {
            Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
                CliError::Input(format!("CRQUERY_THREADS must be a positive integer, got {v:?}"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = requested {
        if n == 0 {
            return Err(CliError::Input("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct PmfFile {
    alphabet_sizes: Vec<usize>,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
struct CovFile {
    matrix: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct MeasureFile {
    weights: BTreeMap<String, f64>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("cannot parse {}: {e}", path.display())))
}

fn load_pmf(path: &Path) -> Result<JointPmf, CliError> {
    let f: PmfFile = read_json(path)?;
    Ok(JointPmf::new(f.alphabet_sizes, f.probs)?)
}

/// 1-based comma list to a terminal mask.
fn parse_set(s: &str, m: usize) -> Result<TerminalSet, CliError> {
    let mut mask: TerminalSet = 0;
    for part in s.split(',') {
        let i: usize = part
            .trim()
            .parse()
            .map_err(|_| CliError::Input(format!("bad terminal index {part:?} in {s:?}")))?;
        if i < 1 || i > m {
            return Err(CliError::Input(format!("terminal {i} outside 1..={m}")));
        }
        mask |= 1 << (i - 1);
    }
    Ok(mask)
}

fn parse_partition(s: &str, m: usize) -> Result<SetPartition, CliError> {
    let blocks = s
        .split('|')
        .map(|b| parse_set(b, m))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SetPartition::new(m, blocks)?)
}

/// Mask back to the 1-based list used on the CLI.
fn members_1based(mask: TerminalSet) -> Vec<usize> {
    crquery_core::pmf::set_members(mask)
        .into_iter()
        .map(|i| i + 1)
        .collect()
}

/// Round to 12 significant digits; non-finite values become null.
fn sig(x: f64) -> Value {
    if x.is_finite() {
        json!(format!("{x:.11e}").parse::<f64>().expect("float roundtrip"))
    } else {
        Value::Null
    }
}

fn sig_str(x: f64) -> String {
    if x.is_finite() {
        format!("{}", format!("{x:.11e}").parse::<f64>().expect("float roundtrip"))
    } else {
        x.to_string()
    }
}

fn emit(cli: &Cli, mut obj: Map<String, Value>) -> Result<(), CliError> {
    if !cli.reproducible {
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        obj.insert("timestamp".into(), json!(ts));
    }
    let text = serde_json::to_string_pretty(&Value::Object(obj)).expect("json output") + "\n";
    print!("{text}");
    if let Some(path) = &cli.out {
        fs::write(path, &text)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn weight_entries(masks: &[TerminalSet], weights: &[f64]) -> Vec<Value> {
    masks
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 1e-12)
        .map(|(&b, &w)| json!({ "subset": members_1based(b), "weight": sig(w) }))
        .collect()
}

fn cmd_capacity(a: &CapacityArgs) -> Result<Map<String, Value>, CliError> {
    let p = load_pmf(&a.pmf)?;
    let m = p.m();
    let set = match &a.set {
        Some(s) => parse_set(s, m)?,
        None => full_set(m),
    };
    let mut obj = Map::new();
    match a.method {
        Method::Partition => {
            if set != full_set(m) {
                return Err(CliError::Input(
                    "the partition method evaluates the full terminal set; drop --set or use --method lp"
                        .into(),
                ));
            }
            if a.exact {
                return Err(CliError::Input("--exact applies to the lp method".into()));
            }
            let (value, pi) = divergence_exponent(&p)?;
            obj.insert("e_star".into(), sig(value));
            obj.insert("method".into(), json!("partition"));
            obj.insert(
                "partition".into(),
                json!(pi.blocks().iter().map(|&b| members_1based(b)).collect::<Vec<_>>()),
            );
        }
        Method::Lp => {
            let (lambda, lp_value) = solve_lp(&p, set)?;
            let h_full = p.entropy(full_set(m))?;
            let e_star = (h_full - lp_value).clamp(0.0, p.log2_alphabet());
            let dual = dual_of(&lambda)?;
            obj.insert("e_star".into(), sig(e_star));
            obj.insert("method".into(), json!("lp"));
            obj.insert("lambda_sum".into(), sig(lambda.lambda_sum()));
            obj.insert(
                "lambda".into(),
                json!(weight_entries(lambda.family().members(), lambda.weights())),
            );
            obj.insert(
                "dual".into(),
                json!(weight_entries(dual.complements(), dual.weights())),
            );
            if a.exact {
                let exact = certify_exact(&p, set, lp_value)?;
                obj.insert("certified_gap".into(), sig((exact - lp_value).abs()));
            }
        }
    }
    Ok(obj)
}

fn cmd_gaussian(a: &GaussianArgs) -> Result<Map<String, Value>, CliError> {
    let f: CovFile = read_json(&a.cov)?;
    let sigma = CovarianceMatrix::new(f.matrix)?;
    let pi = a
        .partition
        .as_deref()
        .map(|s| parse_partition(s, sigma.dim()))
        .transpose()?;
    let c = gaussian_exponent(&sigma, pi.as_ref())?;
    let mut obj = Map::new();
    obj.insert("c".into(), sig(c));
    if let Some(pi) = &pi {
        obj.insert(
            "partition".into(),
            json!(pi.blocks().iter().map(|&b| members_1based(b)).collect::<Vec<_>>()),
        );
    }
    Ok(obj)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Map<String, Value>, CliError> {
    let p = load_pmf(&a.pmf)?;
    let proto = match a.protocol {
        ProtocolName::Sw2 => Protocol::slepian_wolf_2(&p, a.eta, a.seed)?,
        ProtocolName::Omni => Protocol::omniscience(&p, a.eta, a.seed)?,
        ProtocolName::None => Protocol::silent(p.m(), a.seed)?,
    };
    let report = simulate(
        &p,
        &proto,
        a.n,
        a.trials,
        a.quantile,
        a.seed,
        a.include_failures,
    )?;
    if let Some(path) = &a.trace {
        let mut text = String::from("success,rank,exponent\n");
        for t in &report.trials {
            text.push_str(&format!("{},{},{}\n", t.success, t.rank, sig_str(t.exponent)));
        }
        fs::write(path, text)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    }
    let mut obj = Map::new();
    obj.insert("success_rate".into(), sig(report.success_rate));
    obj.insert("exponent_quantile".into(), sig(report.exponent_quantile));
    obj.insert(
        "rate_used".into(),
        json!(report.rates_used.iter().map(|&r| sig(r)).collect::<Vec<_>>()),
    );
    obj.insert("bins".into(), json!(report.bins));
    Ok(obj)
}

fn cmd_bounds(a: &BoundsArgs) -> Result<Map<String, Value>, CliError> {
    let f: MeasureFile = read_json(&a.measure)?;
    let mu = Measure::new(f.weights)?;
    let mut obj = Map::new();
    if a.alpha < 1.0 {
        if a.delta_prime.is_some() {
            return Err(CliError::Input(
                "--delta-prime applies only to alpha > 1".into(),
            ));
        }
        let h = high_mass_set(&mu, a.delta, a.alpha)?;
        obj.insert("set_size".into(), json!(h.elements.len()));
        obj.insert("mass".into(), sig(h.mass));
        obj.insert("bound".into(), sig(h.cardinality_bound));
    } else {
        let dp = a.delta_prime.ok_or_else(|| {
            CliError::Input("--delta-prime is required for alpha > 1".into())
        })?;
        let bound = cardinality_lower_bound(&mu, a.delta, dp, a.alpha)?;
        obj.insert("bound".into(), sig(bound));
    }
    Ok(obj)
}

fn cmd_secrecy(a: &SecrecyArgs) -> Result<Map<String, Value>, CliError> {
    let kt = KeyTranscriptPmf::new(load_pmf(&a.joint)?)?;
    let si = s_in(&kt)?;
    let sv = s_var(&kt);
    let (lhs, rhs) = strong_converse_gap(&kt);
    let mut obj = Map::new();
    obj.insert("s_in".into(), sig(si));
    obj.insert("s_var".into(), sig(sv));
    obj.insert("sc_lhs".into(), sig(lhs));
    obj.insert("sc_rhs".into(), sig(rhs));
    Ok(obj)
}

fn cmd_verify(a: &VerifyArgs) -> Result<(Map<String, Value>, bool), CliError> {
    let report = run_suite(&a.suite, a.seed)?;
    let passed = report.passed;
    let value = serde_json::to_value(&report).expect("report serializes");
    let obj = value.as_object().expect("report is an object").clone();
    Ok((obj, passed))
}
