//! The `vsgd` command-line front end.
//!
//! Subcommands:
//!
//! - `run`: train one configuration and write its trace as CSV.
//! - `sweep`: the cross-product of comma-separated `--optimizer`, `--lr`,
//!   `--weight-decay` and `--seed` values, run in parallel, one CSV per entry
//!   plus `summary.csv`.
//! - `verify`: the property suites of [`crate::verify`] as a pass/fail table.
//! - `bench`: learning-rate grid on logistic regression and per-step timing.
//!
//! Settings may also come from a flat `key=value` file (`--config`), whose
//! keys are the long flag names without dashes; flags override the file.
//! The output directory is `--out`, falling back to `$VSGD_OUT_DIR`.
//!
//! Exit codes: 0 success, 1 verification or run failure, 2 usage, I/O or
//! configuration error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::baselines::{AdamConfig, SgdmConfig};
use crate::bench::{self, OptimizerSpec, ProblemSpec, RunConfig, RunResult, Scheduler, StepTrace};
use crate::constant::ConstantVsgdConfig;
use crate::error::{Error, Result};
use crate::optim::StateSummary;
use crate::second_order::SecondOrderConfig;
use crate::verify::{self, Fault, Suite};
use crate::vsgd::HyperParams;

pub const OUT_DIR_ENV: &str = "VSGD_OUT_DIR";

pub const CSV_HEADER: [&str; 7] = ["t", "loss", "grad_norm", "theta_norm", "mean_b_g", "mean_b_ghat", "mean_sigma2"];

#[derive(Debug, Parser)]
#[command(name = "vsgd", version, about = "Variational SGD optimizers: experiments, sweeps and property checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one configuration and write its trace as CSV.
    Run(RunArgs),
    /// Run every combination of the listed values in parallel.
    Sweep(RunArgs),
    /// Run property suites and print a pass/fail table.
    Verify(VerifyArgs),
    /// Learning-rate grid on logistic regression and per-step timing.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerName {
    Vsgd,
    ConstantVsgd,
    SoVsgd,
    Sgd,
    Sgdm,
    Adam,
    Amsgrad,
    Nsgd,
}

impl OptimizerName {
    fn default_lr(self) -> f64 {
        match self {
            OptimizerName::Adam | OptimizerName::Amsgrad => 0.001,
            _ => 0.01,
        }
    }
}

/// Flags shared by `run` and `sweep`. List-valued flags take
/// comma-separated values; `run` accepts exactly one of each.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Flat key=value file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub optimizer: Vec<OptimizerName>,
    /// Problem selector, e.g. `quad`, `quad:dim=10,noise=1`, `logreg:n=2000,d=50`.
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub lr: Vec<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub kg: Option<f64>,
    #[arg(long)]
    pub kh: Option<f64>,
    #[arg(long)]
    pub kappa1: Option<f64>,
    #[arg(long)]
    pub kappa2: Option<f64>,
    /// SVI exponent of constant VSGD.
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub weight_decay: Vec<f64>,
    /// SGD momentum coefficient (sgdm only, default 0.9).
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub mu_guard_eps: Option<f64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub seed: Vec<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub record_stride: Option<u64>,
    /// `none` or `step:K` (halve the learning rate every K steps).
    #[arg(long)]
    pub scheduler: Option<String>,
    /// Loss level used for the steps-to-threshold metric.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Suites to run: oracle, adam, nsgd, sgdm, decomposition, positivity or all.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub suite: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, hide = true)]
    pub inject_fault: Option<Fault>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchSuite {
    Compare,
    Overhead,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub suite: BenchSuite,
    /// Training steps per logistic-regression run.
    #[arg(long, default_value_t = 5000)]
    pub steps: u64,
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    /// Parameter count of the timing quadratic.
    #[arg(long, default_value_t = 1_000_000)]
    pub dim: usize,
    #[arg(long, default_value_t = 1000)]
    pub timing_steps: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses argv (including the program name).
pub fn parse_args<I, T>(argv: I) -> std::result::Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(argv)
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value for {key}: '{v}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|x| parse_value(key, x)).collect()
}

fn fill<T>(slot: &mut Option<T>, key: &str, v: &str) -> Result<()>
where
    T: std::str::FromStr,
{
    if slot.is_none() {
        *slot = Some(parse_value(key, v)?);
    }
    Ok(())
}

fn fill_list<T: std::str::FromStr>(slot: &mut Vec<T>, key: &str, v: &str) -> Result<()> {
    if slot.is_empty() {
        *slot = parse_list(key, v)?;
    }
    Ok(())
}

/// Which optimizers each tuning flag applies to.
fn applies(flag: &str, name: OptimizerName) -> bool {
    use OptimizerName::*;
    match flag {
        "gamma" | "kg" => matches!(name, Vsgd | ConstantVsgd | SoVsgd),
        "kappa1" | "kappa2" => matches!(name, Vsgd | SoVsgd),
        "kh" | "mu-guard-eps" => name == SoVsgd,
        "kappa" => name == ConstantVsgd,
        "momentum" => name == Sgdm,
        "beta1" | "beta2" | "eps" => matches!(name, Adam | Amsgrad),
        "weight-decay" => name != Nsgd,
        _ => true,
    }
}

pub struct Resolved {
    pub configs: Vec<RunConfig>,
    pub out: Option<PathBuf>,
    pub threshold: f64,
}

impl RunArgs {
    /// Applies one `key=value` setting unless the flag was already given.
    pub fn apply_setting(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "optimizer" => {
                if self.optimizer.is_empty() {
                    self.optimizer = v
                        .split(',')
                        .map(|s| OptimizerName::from_str(s.trim(), false).map_err(|e| Error::Config(format!("optimizer: {e}"))))
                        .collect::<Result<_>>()?;
                }
            }
            "problem" => fill(&mut self.problem, key, v)?,
            "lr" => fill_list(&mut self.lr, key, v)?,
            "gamma" => fill(&mut self.gamma, key, v)?,
            "kg" => fill(&mut self.kg, key, v)?,
            "kh" => fill(&mut self.kh, key, v)?,
            "kappa1" => fill(&mut self.kappa1, key, v)?,
            "kappa2" => fill(&mut self.kappa2, key, v)?,
            "kappa" => fill(&mut self.kappa, key, v)?,
            "weight-decay" | "weight_decay" => fill_list(&mut self.weight_decay, key, v)?,
            "momentum" => fill(&mut self.momentum, key, v)?,
            "beta1" => fill(&mut self.beta1, key, v)?,
            "beta2" => fill(&mut self.beta2, key, v)?,
            "eps" => fill(&mut self.eps, key, v)?,
            "mu-guard-eps" | "mu_guard_eps" => fill(&mut self.mu_guard_eps, key, v)?,
            "steps" => fill(&mut self.steps, key, v)?,
            "seed" => fill_list(&mut self.seed, key, v)?,
            "out" => fill(&mut self.out, key, v)?,
            "record-stride" | "record_stride" => fill(&mut self.record_stride, key, v)?,
            "scheduler" => fill(&mut self.scheduler, key, v)?,
            "threshold" => fill(&mut self.threshold, key, v)?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Reads `key=value` lines; blank lines and `#` comments are skipped.
    pub fn merge_config_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected key=value, got '{line}'", n + 1)))?;
            self.apply_setting(k.trim(), v.trim())?;
        }
        Ok(())
    }

    fn merge_config_file(&mut self) -> Result<()> {
        if let Some(path) = self.config.clone() {
            let text = fs::read_to_string(&path)
                .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
            self.merge_config_text(&text)?;
        }
        Ok(())
    }

    fn check_applicable(&self) -> Result<()> {
        let set: [(&str, bool); 11] = [
            ("gamma", self.gamma.is_some()),
            ("kg", self.kg.is_some()),
            ("kh", self.kh.is_some()),
            ("kappa1", self.kappa1.is_some()),
            ("kappa2", self.kappa2.is_some()),
            ("kappa", self.kappa.is_some()),
            ("momentum", self.momentum.is_some()),
            ("beta1", self.beta1.is_some()),
            ("beta2", self.beta2.is_some()),
            ("eps", self.eps.is_some()),
            ("mu-guard-eps", self.mu_guard_eps.is_some()),
        ];
        for (flag, given) in set {
            if given && !self.optimizer.iter().any(|&o| applies(flag, o)) {
                return Err(Error::Config(format!("--{flag} does not apply to the selected optimizer(s)")));
            }
        }
        Ok(())
    }

    fn spec(&self, name: OptimizerName, lr: f64, wd: f64) -> OptimizerSpec {
        let hp = HyperParams::default();
        let gamma = self.gamma.unwrap_or(hp.gamma);
        let k_g = self.kg.unwrap_or(hp.k_g);
        let kappa1 = self.kappa1.unwrap_or(hp.kappa1);
        let kappa2 = self.kappa2.unwrap_or(hp.kappa2);
        let adam = AdamConfig {
            eta: lr,
            beta1: self.beta1.unwrap_or(0.9),
            beta2: self.beta2.unwrap_or(0.999),
            eps: self.eps.unwrap_or(1e-8),
            weight_decay: wd,
        };
        match name {
            OptimizerName::Vsgd => OptimizerSpec::Vsgd(HyperParams { eta: lr, gamma, k_g, kappa1, kappa2, weight_decay: wd, ..hp }),
            OptimizerName::ConstantVsgd => OptimizerSpec::ConstantVsgd(ConstantVsgdConfig {
                eta: lr,
                gamma,
                k_g,
                kappa: self.kappa.unwrap_or(ConstantVsgdConfig::default().kappa),
                weight_decay: wd,
            }),
            OptimizerName::SoVsgd => {
                let d = SecondOrderConfig::default();
                OptimizerSpec::SecondOrderVsgd(SecondOrderConfig {
                    eta: lr,
                    gamma,
                    k_g,
                    k_h: self.kh.unwrap_or(d.k_h),
                    kappa1,
                    kappa2,
                    mu_guard_eps: self.mu_guard_eps.unwrap_or(d.mu_guard_eps),
                    weight_decay: wd,
                })
            }
            OptimizerName::Sgd => OptimizerSpec::Sgd(SgdmConfig { eta: lr, lambda: 0.0, weight_decay: wd }),
            OptimizerName::Sgdm => OptimizerSpec::Sgd(SgdmConfig { eta: lr, lambda: self.momentum.unwrap_or(0.9), weight_decay: wd }),
            OptimizerName::Adam => OptimizerSpec::Adam(adam),
            OptimizerName::Amsgrad => OptimizerSpec::AmsGrad(adam),
            OptimizerName::Nsgd => OptimizerSpec::NormalizedSgd { eta: lr },
        }
    }

    /// Merges the config file, applies defaults, validates every
    /// hyperparameter and expands list flags into run configurations
    /// (optimizer × lr × weight decay × seed).
    pub fn resolve(&self, env_out: Option<PathBuf>) -> Result<Resolved> {
        let mut args = self.clone();
        args.merge_config_file()?;
        if args.optimizer.is_empty() {
            return Err(Error::Config("missing --optimizer".into()));
        }
        args.check_applicable()?;
        if args.weight_decay.iter().any(|&wd| wd != 0.0) && args.optimizer.iter().all(|&o| !applies("weight-decay", o)) {
            return Err(Error::Config("--weight-decay does not apply to nsgd".into()));
        }
        let problem: ProblemSpec = args.problem.as_deref().unwrap_or("quad").parse()?;
        let scheduler: Scheduler = args.scheduler.as_deref().unwrap_or("none").parse()?;
        let steps = args.steps.unwrap_or(1000);
        let record_stride = args.record_stride.unwrap_or(1);
        let seeds = if args.seed.is_empty() { vec![0] } else { args.seed.clone() };
        let wds = if args.weight_decay.is_empty() { vec![0.0] } else { args.weight_decay.clone() };
        let mut configs = Vec::new();
        for &name in &args.optimizer {
            let lrs = if args.lr.is_empty() { vec![name.default_lr()] } else { args.lr.clone() };
            for &lr in &lrs {
                for &wd in &wds {
                    if name == OptimizerName::Nsgd && wd != 0.0 {
                        continue;
                    }
                    let spec = args.spec(name, lr, wd);
                    spec.build(1)?;
                    for &seed in &seeds {
                        let cfg = RunConfig { optimizer: spec, problem: problem.clone(), steps, seed, scheduler, record_stride };
                        cfg.validate()?;
                        configs.push(cfg);
                    }
                }
            }
        }
        Ok(Resolved {
            configs,
            out: args.out.clone().or(env_out),
            threshold: args.threshold.unwrap_or(1e-6),
        })
    }
}

/// Shortest decimal that parses back to the same `f64`: positional for
/// magnitudes in `[1e-5, 1e16)`, exponent form otherwise.
pub fn format_f64(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-5..1e16).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn opt_field(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

/// Writes one row per trace entry under [`CSV_HEADER`]. Floats use the
/// shortest decimal that parses back to the same `f64`; quantities an
/// optimizer does not carry are left empty.
pub fn write_csv(traces: &[StepTrace], path: &Path) -> Result<()> {
    if traces.is_empty() {
        return Err(Error::Precondition("refusing to write an empty trace".into()));
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(io::Error::from)?;
    w.write_record(CSV_HEADER).map_err(io::Error::from)?;
    for r in traces {
        w.write_record([
            r.t.to_string(),
            format_f64(r.loss),
            format_f64(r.grad_norm),
            format_f64(r.theta_norm),
            opt_field(r.summary.mean_b_g),
            opt_field(r.summary.mean_b_ghat),
            opt_field(r.summary.mean_sigma2),
        ])
        .map_err(io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a file written by [`write_csv`]. Summary fields absent from the
/// format (`min_positive`, `shape`) come back as `None`.
pub fn read_csv(path: &Path) -> Result<Vec<StepTrace>> {
    let mut r = csv::ReaderBuilder::new().from_path(path).map_err(io::Error::from)?;
    let header = r.headers().map_err(io::Error::from)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Config(format!("unexpected CSV header in {}", path.display())));
    }
    let opt = |s: &str| -> Result<Option<f64>> { if s.is_empty() { Ok(None) } else { parse_value("csv field", s).map(Some) } };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(io::Error::from)?;
        out.push(StepTrace {
            t: parse_value("t", &rec[0])?,
            loss: parse_value("loss", &rec[1])?,
            grad_norm: parse_value("grad_norm", &rec[2])?,
            theta_norm: parse_value("theta_norm", &rec[3])?,
            summary: StateSummary {
                mean_b_g: opt(&rec[4])?,
                mean_b_ghat: opt(&rec[5])?,
                mean_sigma2: opt(&rec[6])?,
                ..StateSummary::default()
            },
        });
    }
    Ok(out)
}

/// `<optimizer>_<problem>_lr<lr>_wd<wd>_seed<seed>.csv`
pub fn trace_file_name(cfg: &RunConfig) -> String {
    format!(
        "{}_{}_lr{}_wd{}_seed{}.csv",
        cfg.optimizer.name(),
        cfg.problem.kind(),
        cfg.optimizer.learning_rate(),
        cfg.optimizer.weight_decay(),
        cfg.seed
    )
}

fn output_dir(out: Option<PathBuf>) -> Result<PathBuf> {
    let dir = out.ok_or_else(|| Error::Config(format!("no output directory: pass --out or set {OUT_DIR_ENV}")))?;
    fs::create_dir_all(&dir).map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", dir.display()))))?;
    Ok(dir)
}

fn env_out_dir() -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

const SUMMARY_HEADER: [&str; 11] = [
    "optimizer",
    "problem",
    "lr",
    "weight_decay",
    "seed",
    "final_loss",
    "best_loss",
    "steps_to_threshold",
    "wallclock_per_step",
    "diverged",
    "file",
];

fn summary_row(cfg: &RunConfig, r: &RunResult, threshold: f64) -> Vec<String> {
    let m = bench::summarize(r, threshold);
    vec![
        cfg.optimizer.name().to_string(),
        cfg.problem.to_string(),
        cfg.optimizer.learning_rate().to_string(),
        cfg.optimizer.weight_decay().to_string(),
        cfg.seed.to_string(),
        format_f64(m.final_loss),
        format_f64(m.best_loss),
        m.steps_to_threshold.map(|t| t.to_string()).unwrap_or_default(),
        format_f64(m.wallclock_per_step),
        r.diverged.to_string(),
        trace_file_name(cfg),
    ]
}

fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(io::Error::from)?;
    w.write_record(header).map_err(io::Error::from)?;
    for row in rows {
        w.write_record(row).map_err(io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let resolved = args.resolve(env_out_dir())?;
    if resolved.configs.len() != 1 {
        return Err(Error::Config(format!(
            "run takes one value per flag ({} combinations given); use sweep for lists",
            resolved.configs.len()
        )));
    }
    let cfg = &resolved.configs[0];
    let dir = output_dir(resolved.out)?;
    let result = bench::run(cfg)?;
    let path = dir.join(trace_file_name(cfg));
    write_csv(&result.traces, &path)?;
    let m = bench::summarize(&result, resolved.threshold);
    writeln!(
        out,
        "{} on {}: final loss {:e}, best {:e}, {} steps, {:.3e} s/step -> {}",
        cfg.optimizer.name(),
        cfg.problem,
        m.final_loss,
        m.best_loss,
        result.steps_completed,
        m.wallclock_per_step,
        path.display()
    )?;
    if result.diverged {
        writeln!(out, "run diverged at step {}", result.steps_completed)?;
        return Ok(1);
    }
    Ok(0)
}

fn cmd_sweep(args: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let resolved = args.resolve(env_out_dir())?;
    let dir = output_dir(resolved.out)?;
    let results = bench::run_many(&resolved.configs);
    let mut rows = Vec::new();
    let mut failed = 0;
    for (cfg, result) in resolved.configs.iter().zip(results) {
        match result {
            Ok(r) => {
                write_csv(&r.traces, &dir.join(trace_file_name(cfg)))?;
                rows.push(summary_row(cfg, &r, resolved.threshold));
            }
            Err(e) => {
                writeln!(out, "{}: {e}", trace_file_name(cfg))?;
                failed += 1;
            }
        }
    }
    let summary = dir.join("summary.csv");
    write_table(&summary, &SUMMARY_HEADER, &rows)?;
    writeln!(out, "{} runs, {failed} failed -> {}", resolved.configs.len(), summary.display())?;
    Ok(if failed == 0 { 0 } else { 1 })
}

fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    let mut suites = Vec::new();
    for s in &args.suite {
        if s == "all" {
            suites.extend(Suite::ALL);
        } else {
            suites.push(s.parse()?);
        }
    }
    suites.dedup();
    let results = verify::run_suites(&suites, args.seed, args.inject_fault)?;
    write!(out, "{}", verify::format_table(&results))?;
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.property).collect();
    if failed.is_empty() {
        writeln!(out, "all {} checks passed", results.len())?;
        Ok(0)
    } else {
        writeln!(out, "FAILED: {}", failed.join("; "))?;
        Ok(1)
    }
}

fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<i32> {
    let dir = match args.out.clone().or_else(env_out_dir) {
        Some(d) => Some(output_dir(Some(d))?),
        None => None,
    };
    if matches!(args.suite, BenchSuite::Compare | BenchSuite::All) {
        let optimizers = [
            OptimizerSpec::Vsgd(HyperParams::default()),
            OptimizerSpec::ConstantVsgd(ConstantVsgdConfig::default()),
            OptimizerSpec::Adam(AdamConfig::default()),
            OptimizerSpec::AmsGrad(AdamConfig::default()),
            OptimizerSpec::Sgd(SgdmConfig { eta: 0.01, lambda: 0.9, weight_decay: 0.0 }),
        ];
        let lrs = [0.001, 0.005, 0.01, 0.02];
        let seeds: Vec<u64> = (0..args.seeds).collect();
        let cells = bench::lr_grid(&optimizers, &lrs, &seeds, args.steps, |seed| ProblemSpec::LogReg { n: 2000, d: 50, seed, batch: 32 })?;
        writeln!(out, "logreg n=2000 d=50, {} steps, {} seeds", args.steps, seeds.len())?;
        writeln!(out, "{:<14} {:>8} {:>14}", "optimizer", "lr", "mean final")?;
        for c in &cells {
            writeln!(out, "{:<14} {:>8} {:>14.6}", c.optimizer, c.lr, c.mean_final_loss)?;
        }
        for b in bench::best_per_optimizer(&cells) {
            writeln!(out, "best {:<14} lr={:<6} loss={:.6}", b.optimizer, b.lr, b.mean_final_loss)?;
        }
        if let Some(dir) = &dir {
            let rows: Vec<Vec<String>> = cells
                .iter()
                .map(|c| vec![c.optimizer.to_string(), c.lr.to_string(), c.mean_final_loss.to_string(), c.any_diverged.to_string()])
                .collect();
            write_table(&dir.join("bench_compare.csv"), &["optimizer", "lr", "mean_final_loss", "diverged"], &rows)?;
        }
    }
    if matches!(args.suite, BenchSuite::Overhead | BenchSuite::All) {
        let optimizers = [OptimizerSpec::Vsgd(HyperParams::default()), OptimizerSpec::Adam(AdamConfig::default())];
        let times = bench::time_per_step(&optimizers, args.dim, args.timing_steps, 2)?;
        writeln!(out, "quadratic dim={} over {} steps", args.dim, args.timing_steps)?;
        for (o, t) in optimizers.iter().zip(&times) {
            writeln!(out, "{:<6} {:.4e} s/step", o.name(), t)?;
        }
        writeln!(out, "vsgd/adam per-step ratio {:.3}", times[0] / times[1])?;
        if let Some(dir) = &dir {
            let rows: Vec<Vec<String>> = optimizers.iter().zip(&times).map(|(o, t)| vec![o.name().to_string(), t.to_string()]).collect();
            write_table(&dir.join("bench_overhead.csv"), &["optimizer", "seconds_per_step"], &rows)?;
        }
    }
    Ok(0)
}

/// Exit code for an error that escaped a subcommand.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numeric(_) | Error::NonConvergence { .. } => 1,
        Error::Config(_) | Error::Precondition(_) | Error::DimensionMismatch { .. } | Error::Io(_) => 2,
    }
}

/// Runs a parsed command, printing results to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Verify(a) => cmd_verify(a, out),
        Command::Bench(a) => cmd_bench(a, out),
    }
}

/// Full entry point: parse, execute, report, and return the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match parse_args(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(argv: &[&str]) -> RunArgs {
        let cli = parse_args(std::iter::once("vsgd").chain(argv.iter().copied())).unwrap();
        match cli.command {
            Command::Run(a) | Command::Sweep(a) => a,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn run_defaults_match_hyperparameter_table() {
        let a = run_args(&["run", "--optimizer", "vsgd", "--problem", "quad", "--steps", "100", "--seed", "1", "--out", "d/"]);
        let r = a.resolve(None).unwrap();
        assert_eq!(r.configs.len(), 1);
        let cfg = &r.configs[0];
        assert_eq!(cfg.steps, 100);
        assert_eq!(cfg.seed, 1);
        assert_eq!(r.out, Some(PathBuf::from("d/")));
        match cfg.optimizer {
            OptimizerSpec::Vsgd(hp) => {
                assert_eq!((hp.gamma, hp.k_g, hp.kappa1, hp.kappa2), (1e-8, 30.0, 0.9, 0.81));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn usage_errors() {
        assert!(parse_args(["vsgd"]).is_err());
        let e = parse_args(["vsgd", "run", "--bogus", "1"]).unwrap_err();
        assert_ne!(e.exit_code(), 0);
        let e = run_args(&["run", "--optimizer", "vsgd", "--kappa1", "1.5"]).resolve(None);
        assert!(matches!(e, Err(Error::Config(_))));
        assert!(matches!(run_args(&["run"]).resolve(None), Err(Error::Config(_))));
        let e = run_args(&["run", "--optimizer", "adam", "--kh", "3"]).resolve(None);
        assert!(matches!(e, Err(Error::Config(m)) if m.contains("--kh")));
        assert!(matches!(run_args(&["run", "--optimizer", "vsgd", "--problem", "cifar"]).resolve(None), Err(Error::Config(_))));
    }

    #[test]
    fn sweep_expands_cross_product() {
        let a = run_args(&["sweep", "--optimizer", "vsgd,adam", "--lr", "0.001,0.005,0.01,0.02", "--weight-decay", "0,0.01", "--seed", "1,2"]);
        let r = a.resolve(None).unwrap();
        assert_eq!(r.configs.len(), 2 * 4 * 2 * 2);
        let names: std::collections::HashSet<String> = r.configs.iter().map(trace_file_name).collect();
        assert_eq!(names.len(), r.configs.len());
    }

    #[test]
    fn config_file_is_overridden_by_flags() {
        let mut a = run_args(&["run", "--lr", "0.5"]);
        a.merge_config_text("# comment\noptimizer=sgdm\nlr=0.1\nmomentum=0.5\nsteps=7\n\nscheduler=step:3\n").unwrap();
        let r = a.resolve(None).unwrap();
        let cfg = &r.configs[0];
        assert_eq!(cfg.steps, 7);
        assert_eq!(cfg.scheduler, Scheduler::StepDecay { every: 3 });
        assert_eq!(cfg.optimizer, OptimizerSpec::Sgd(SgdmConfig { eta: 0.5, lambda: 0.5, weight_decay: 0.0 }));
        assert!(a.clone().merge_config_text("nonsense").is_err());
        assert!(a.clone().merge_config_text("colour=blue").is_err());
    }

    #[test]
    fn env_fallback_for_output() {
        let a = run_args(&["run", "--optimizer", "nsgd"]);
        assert_eq!(a.resolve(Some("x".into())).unwrap().out, Some(PathBuf::from("x")));
        let a = run_args(&["run", "--optimizer", "nsgd", "--out", "y"]);
        assert_eq!(a.resolve(Some("x".into())).unwrap().out, Some(PathBuf::from("y")));
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.0, -0.0, 1.0, 5.0, 0.1, 1e-8, 9.999999999999999e-9, 3e-7, 1e300, -2.5e-310, 123456.789, f64::MAX, f64::MIN_POSITIVE] {
            let s = format_f64(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(format_f64(1e-8), "1e-8");
        assert_eq!(format_f64(0.25), "0.25");
        assert_eq!(format_f64(f64::INFINITY), "inf");
    }

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Io(io::Error::other("x"))), 2);
        assert_eq!(exit_code(&Error::Numeric("x".into())), 1);
    }
}
