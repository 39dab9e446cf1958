//! Command-line front end.
//!
//! Exit codes: 0 success, 1 replay mismatch, 2 configuration or input error,
//! 3 calibration error, 4 evaluation mode not applicable to the space.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matcher::{calibrate, calibration_to_json, load_calibration, MatcherPolicy, PolicyKind};
use crate::population::{
    generate_population, load_population, EvalMode, NoiseFamily, Population, PopulationConfig, EXACT_LIMIT,
};
use crate::scenarios;
use crate::secmetrics::{self, evaluate, is_delta_secure, wap_exact, wolf_search_mc, EvalReport, SearchParams};
use crate::template::DistanceFn;

#[derive(Parser, Debug)]
#[command(name = "wolfbench", version, about = "Wolf-attack analysis for biometric verification matchers")]
pub struct Cli {
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a random population file.
    Gen(GenArgs),
    /// Write one of the built-in populations.
    Scenario(ScenarioArgs),
    /// Build a calibration table for an adaptive policy.
    Calibrate(CalibrateArgs),
    /// Compute FRR, FAR, AR, WAP and per-user rates.
    Eval(EvalArgs),
    /// Find the strongest point-mass attacker.
    Wolf(WolfArgs),
    /// Evaluate a policy family over a parameter grid (CSV).
    Sweep(SweepArgs),
    /// Re-run the configuration embedded in a report and compare.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    /// Template length in bits (ignored for gauss noise).
    #[arg(long, default_value_t = 8)]
    len: usize,
    /// iid:P, iid:A..B, explicit:K, mixed:A..B:K or gauss:M1..M2:S1..S2[:EXTRA].
    #[arg(long)]
    noise: String,
    /// Masked templates compared by fractional Hamming distance.
    #[arg(long)]
    masked: bool,
    /// Probability that a reference bit is available (masked only).
    #[arg(long, default_value_t = 1.0)]
    mask_density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScenarioName {
    /// Two users on 2-bit templates.
    Tiny,
    /// Eleven separated users on masked 10-bit templates.
    Codeword,
    /// Thirty-two block-constant users on masked 10-bit templates.
    Block,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    name: ScenarioName,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Exact,
    Mc,
}

#[derive(Args, Debug, Clone)]
struct ModeArgs {
    #[arg(long, value_enum, default_value = "exact")]
    mode: ModeArg,
    /// Trials per rate in Monte Carlo mode.
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Samples per probe for on-demand Monte Carlo calibration.
    #[arg(long, default_value_t = 2_000)]
    calibration_samples: u64,
}

impl ModeArgs {
    fn mode(&self) -> EvalMode {
        match self.mode {
            ModeArg::Exact => EvalMode::Exact,
            ModeArg::Mc => EvalMode::MonteCarlo {
                samples: self.samples,
                seed: self.seed,
            },
        }
    }

    fn calibration_mode(&self) -> EvalMode {
        match self.mode {
            ModeArg::Exact => EvalMode::Exact,
            ModeArg::Mc => EvalMode::MonteCarlo {
                samples: self.calibration_samples,
                seed: self.seed,
            },
        }
    }
}

#[derive(Args, Debug, Clone)]
struct SearchArgs {
    /// Trials per probe estimate during wolf search.
    #[arg(long, default_value_t = 10_000)]
    budget: u64,
    #[arg(long, default_value_t = secmetrics::DEFAULT_RESTARTS)]
    restarts: u32,
}

impl SearchArgs {
    fn params(&self) -> SearchParams {
        SearchParams {
            budget: self.budget,
            restarts: self.restarts,
        }
    }
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[arg(long)]
    pop: PathBuf,
    #[arg(long)]
    policy: PolicyKind,
    #[command(flatten)]
    mode: ModeArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PolicyArgs {
    #[arg(long)]
    pop: PathBuf,
    /// fixed:T, general:DELTA, gaussian:ALPHA or daugman:ALPHA'.
    #[arg(long)]
    policy: Option<PolicyKind>,
    /// Calibration file from `calibrate`; otherwise adaptive policies are
    /// calibrated within the run.
    #[arg(long)]
    calibration: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    mode: ModeArgs,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-user rates as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct WolfArgs {
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    mode: ModeArgs,
    #[command(flatten)]
    search: SearchArgs,
    /// Also report whether WAP < DELTA.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    pop: PathBuf,
    /// Policy family: fixed, general, gaussian or daugman.
    #[arg(long)]
    family: String,
    /// Comma-separated values, or START:STOP:STEP.
    #[arg(long, allow_hyphen_values = true)]
    grid: String,
    #[command(flatten)]
    mode: ModeArgs,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    report: PathBuf,
    /// Write the regenerated report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

/// Resolved configuration embedded in every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub population: FileRef,
    pub policy: String,
    pub calibration: Option<FileRef>,
    pub calibration_samples: u64,
    pub mode: EvalMode,
    pub search: SearchParams,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Scenario(a) => cmd_scenario(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Wolf(a) => cmd_wolf(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Replay(a) => cmd_replay(a),
    })
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io(Path::new("<stdout>"), e))
        }
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn file_ref(path: &Path) -> Result<FileRef> {
    Ok(FileRef {
        path: path.to_string_lossy().into_owned(),
        sha256: sha256_file(path)?,
    })
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("invalid {what} {s:?}")))
}

/// `A..B` or a single value `A` (as `A..A`).
fn parse_range(s: &str, what: &str) -> Result<(f64, f64)> {
    match s.split_once("..") {
        Some((a, b)) => Ok((parse_f64(a, what)?, parse_f64(b, what)?)),
        None => {
            let v = parse_f64(s, what)?;
            Ok((v, v))
        }
    }
}

fn parse_count(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("invalid {what} {s:?}")))
}

fn parse_noise(spec: &str) -> Result<NoiseFamily> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || {
        Error::InvalidConfig(format!(
            "noise {spec:?}: expected iid:P, iid:A..B, explicit:K, mixed:A..B:K or gauss:M1..M2:S1..S2[:EXTRA]"
        ))
    };
    match parts.as_slice() {
        ["iid", p] => {
            let (p_min, p_max) = parse_range(p, "flip probability")?;
            Ok(NoiseFamily::Iid { p_min, p_max })
        }
        ["explicit", k] => Ok(NoiseFamily::Explicit {
            support: parse_count(k, "support size")?,
        }),
        ["mixed", p, k] => {
            let (p_min, p_max) = parse_range(p, "flip probability")?;
            Ok(NoiseFamily::Mixed {
                p_min,
                p_max,
                support: parse_count(k, "support size")?,
            })
        }
        ["gauss", m, s, rest @ ..] if rest.len() <= 1 => {
            let (m_min, m_max) = parse_range(m, "mean")?;
            let (sigma_min, sigma_max) = parse_range(s, "sigma")?;
            let extra_probes = match rest {
                [e] => parse_count(e, "extra probe count")?,
                _ => 0,
            };
            Ok(NoiseFamily::Gaussian {
                m_min,
                m_max,
                sigma_min,
                sigma_max,
                extra_probes,
            })
        }
        _ => Err(bad()),
    }
}

fn cmd_gen(a: GenArgs) -> Result<i32> {
    let noise = parse_noise(&a.noise)?;
    let config = PopulationConfig {
        n: a.n,
        len: a.len,
        masked: a.masked,
        mask_density: a.mask_density,
        distance: if a.masked {
            DistanceFn::FractionalHamming
        } else {
            DistanceFn::Hamming
        },
        noise,
    };
    let pop = generate_population(&config, a.seed)?;
    emit(&pop.to_json(), a.out.as_deref())?;
    eprintln!(
        "generated population: n={} L={} noise={} masked={} seed={}",
        pop.n(),
        if pop.is_score() { 0 } else { a.len },
        a.noise,
        a.masked,
        a.seed
    );
    Ok(0)
}

fn cmd_scenario(a: ScenarioArgs) -> Result<i32> {
    let pop = match a.name {
        ScenarioName::Tiny => scenarios::tiny_world(),
        ScenarioName::Codeword => scenarios::codeword_world(),
        ScenarioName::Block => scenarios::block_world(),
    };
    emit(&pop.to_json(), a.out.as_deref())?;
    Ok(0)
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<i32> {
    let pop = load_population(&a.pop)?;
    let calibrated = calibrate(&MatcherPolicy::new(a.policy)?, &pop, &a.mode.calibration_mode())?;
    let table = match a.mode.mode {
        ModeArg::Exact => calibrated,
        ModeArg::Mc => {
            let shape = pop.shape();
            if shape.count() > EXACT_LIMIT {
                return Err(Error::SpaceTooLarge {
                    templates: shape.count(),
                    limit: EXACT_LIMIT,
                });
            }
            calibrated.materialize(&pop, (0..shape.count() as u64).map(|i| shape.at_index(i)))?
        }
    };
    emit(&calibration_to_json(&table, &pop)?, a.out.as_deref())?;
    Ok(0)
}

struct Loaded {
    pop: Population,
    policy: MatcherPolicy,
    config: RunConfig,
}

fn load_inputs(command: &str, p: &PolicyArgs, mode: &ModeArgs, search: &SearchArgs) -> Result<Loaded> {
    let pop = load_population(&p.pop)?;
    let population = file_ref(&p.pop)?;
    let (policy, calibration) = match &p.calibration {
        Some(path) => {
            let policy = load_calibration(path, &pop)?;
            if let Some(kind) = p.policy {
                if kind != policy.kind() {
                    return Err(Error::InvalidConfig(format!(
                        "--policy {kind} disagrees with calibration file policy {}",
                        policy.kind()
                    )));
                }
            }
            (policy, Some(file_ref(path)?))
        }
        None => {
            let kind = p
                .policy
                .ok_or_else(|| Error::InvalidConfig("--policy or --calibration is required".into()))?;
            let base = MatcherPolicy::new(kind)?;
            let policy = if kind.is_adaptive() {
                calibrate(&base, &pop, &mode.calibration_mode())?
            } else {
                base
            };
            (policy, None)
        }
    };
    policy.check_compatible(&pop)?;
    let config = RunConfig {
        command: command.into(),
        population,
        policy: policy.kind().to_string(),
        calibration,
        calibration_samples: mode.calibration_samples,
        mode: mode.mode(),
        search: search.params(),
    };
    Ok(Loaded { pop, policy, config })
}

fn run_eval(loaded: &Loaded) -> Result<EvalReport> {
    let mut report = evaluate(&loaded.pop, &loaded.policy, &loaded.config.mode, loaded.config.search)?;
    report.config = serde_json::to_value(&loaded.config)?;
    Ok(report)
}

fn cmd_eval(a: EvalArgs) -> Result<i32> {
    let loaded = load_inputs("eval", &a.policy, &a.mode, &a.search)?;
    let report = run_eval(&loaded)?;
    emit(&report.to_json()?, a.out.as_deref())?;
    if let Some(path) = &a.csv {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["id", "frr_u", "far_u", "ar_u"])?;
        let cell = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for user in loaded.pop.users() {
            let r = &report.per_user[&user.id];
            w.write_record([user.id.clone(), cell(r.frr_u), cell(r.far_u), r.ar_u.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    Ok(0)
}

fn cmd_wolf(a: WolfArgs) -> Result<i32> {
    let loaded = load_inputs("wolf", &a.policy, &a.mode, &a.search)?;
    let (pop, policy, config) = (&loaded.pop, &loaded.policy, &loaded.config);
    let certificate = match config.mode {
        EvalMode::Exact => wap_exact(pop, policy)?.1,
        EvalMode::MonteCarlo { seed, .. } => {
            wolf_search_mc(pop, policy, config.search.budget, config.search.restarts, seed)?
        }
    };
    let mut out = serde_json::json!({
        "tool": secmetrics::report::TOOL_NAME,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "certificate": certificate.to_json(),
    });
    if let Some(delta) = a.delta {
        let mode = match config.mode {
            EvalMode::Exact => EvalMode::Exact,
            EvalMode::MonteCarlo { seed, .. } => EvalMode::MonteCarlo {
                samples: config.search.budget,
                seed,
            },
        };
        let verdict = is_delta_secure(pop, policy, delta, &mode)?;
        out["delta_security"] = serde_json::json!({
            "delta": delta,
            "secure": verdict.secure,
            "evidence": verdict.evidence,
        });
    }
    let mut text = serde_json::to_string_pretty(&out)?;
    text.push('\n');
    emit(&text, a.out.as_deref())?;
    Ok(0)
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(Error::InvalidConfig("empty parameter grid".into()));
    }
    let parts: Vec<&str> = spec.split(':').collect();
    let mut values = if let [start, stop, step] = parts.as_slice() {
        let (start, stop, step) = (parse_f64(start, "grid start")?, parse_f64(stop, "grid stop")?, parse_f64(step, "grid step")?);
        if !(step > 0.0) || stop < start {
            return Err(Error::InvalidConfig(format!("grid {spec:?} needs step > 0 and stop >= start")));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| start + i as f64 * step).collect()
    } else {
        spec.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| parse_f64(s, "grid value"))
            .collect::<Result<Vec<_>>>()?
    };
    if values.is_empty() {
        return Err(Error::InvalidConfig("empty parameter grid".into()));
    }
    values.sort_by(f64::total_cmp);
    values.dedup();
    Ok(values)
}

fn cmd_sweep(a: SweepArgs) -> Result<i32> {
    let grid = parse_grid(&a.grid)?;
    let pop = load_population(&a.pop)?;
    let mode = a.mode.mode();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["parameter", "frr", "far", "ar", "wap", "stderr_wap"])?;
    let cell = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for value in grid {
        let kind = PolicyKind::with_parameter(&a.family, value)?;
        let base = MatcherPolicy::new(kind)?;
        let policy = if kind.is_adaptive() {
            calibrate(&base, &pop, &a.mode.calibration_mode())?
        } else {
            base
        };
        let r = evaluate(&pop, &policy, &mode, a.search.params())?;
        w.write_record([
            value.to_string(),
            cell(r.frr),
            cell(r.far),
            r.ar.to_string(),
            r.wap.value.to_string(),
            cell(r.wap.stderr),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidConfig(format!("csv: {e}")))?;
    emit(&String::from_utf8_lossy(&bytes), a.out.as_deref())?;
    Ok(0)
}

fn cmd_replay(a: ReplayArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&a.report).map_err(|e| Error::io(&a.report, e))?;
    let original = EvalReport::from_json(&text)?;
    let config: RunConfig = serde_json::from_value(original.config.clone())?;
    let population_path = PathBuf::from(&config.population.path);
    if sha256_file(&population_path)? != config.population.sha256 {
        return Err(Error::InvalidConfig(format!(
            "population file {} changed since the report was written",
            config.population.path
        )));
    }
    let pop = load_population(&population_path)?;
    let kind: PolicyKind = config.policy.parse()?;
    let policy = match &config.calibration {
        Some(c) => {
            let path = PathBuf::from(&c.path);
            if sha256_file(&path)? != c.sha256 {
                return Err(Error::InvalidConfig(format!(
                    "calibration file {} changed since the report was written",
                    c.path
                )));
            }
            load_calibration(&path, &pop)?
        }
        None if kind.is_adaptive() => {
            let calibration_mode = match config.mode {
                EvalMode::Exact => EvalMode::Exact,
                EvalMode::MonteCarlo { seed, .. } => EvalMode::MonteCarlo {
                    samples: config.calibration_samples,
                    seed,
                },
            };
            calibrate(&MatcherPolicy::new(kind)?, &pop, &calibration_mode)?
        }
        None => MatcherPolicy::new(kind)?,
    };
    let loaded = Loaded { pop, policy, config };
    let report = run_eval(&loaded)?;
    let regenerated = report.to_json()?;
    if let Some(out) = &a.out {
        emit(&regenerated, Some(out))?;
    }
    if regenerated == text {
        eprintln!("replay: identical");
        Ok(0)
    } else {
        eprintln!("replay: report differs from {}", a.report.display());
        Ok(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_specs() {
        assert_eq!(parse_noise("iid:0.1").unwrap(), NoiseFamily::Iid { p_min: 0.1, p_max: 0.1 });
        assert_eq!(
            parse_noise("iid:0.05..0.2").unwrap(),
            NoiseFamily::Iid { p_min: 0.05, p_max: 0.2 }
        );
        assert_eq!(parse_noise("explicit:3").unwrap(), NoiseFamily::Explicit { support: 3 });
        assert!(matches!(parse_noise("gauss:0.4..0.5:0.05..0.1:3").unwrap(), NoiseFamily::Gaussian { extra_probes: 3, .. }));
        for bad in ["iid", "poisson:1", "explicit:x", "gauss:1"] {
            assert!(parse_noise(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("3,1,2,0").unwrap(), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(parse_grid("-3:-1:1").unwrap(), vec![-3.0, -2.0, -1.0]);
        assert!(parse_grid("").is_err());
        assert!(parse_grid(",").is_err());
        assert!(parse_grid("1:0:1").is_err());
    }
}
