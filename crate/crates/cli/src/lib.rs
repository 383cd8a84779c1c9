//! `bnavail` command-line front end.
//!
//! Exit status is 0 on success, 1 for invalid input and 2 when a computation
//! exceeds its resource limit.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use bnavail::inference::{Method, DEFAULT_FACTOR_LIMIT, DEFAULT_SAMPLES};
use bnavail::oracle::{enumerate_availability, mc_availability};
use bnavail::scenarios::{
    large_infrastructure, small_infrastructure, sweep, with_instances, write_sweep_csv, ServiceKind,
};
use bnavail::{
    availability, compile, load_model, to_json, CompileOptions, GateMode, MarginalResult,
};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "bnavail",
    version,
    about = "Service availability via compiled Bayesian networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model document and list every violation.
    Validate { model: PathBuf },
    /// Compile a model and write the network dump.
    Compile {
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = Gates::Auto)]
        gates: Gates,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Availability of the compiled service node.
    Infer {
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = InferMethod::Exact)]
        method: InferMethod,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sampling workers; output is reproducible only with one.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, value_enum, default_value_t = Gates::Auto)]
        gates: Gates,
        /// Largest factor, in entries, exact inference may build.
        #[arg(long, default_value_t = DEFAULT_FACTOR_LIMIT)]
        factor_limit: f64,
    },
    /// Availability computed directly from the model, without a network.
    Oracle {
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = OracleMethod::Enumerate)]
        method: OracleMethod,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Availability over a range of instance counts, as CSV.
    Sweep {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        min_n: usize,
        #[arg(long)]
        max_n: usize,
        #[arg(long, default_value_t = 1)]
        step: usize,
        #[arg(long, value_enum, default_value_t = Infra::Small)]
        infra: Infra,
        #[arg(long, value_enum, default_value_t = InferMethod::Exact)]
        method: InferMethod,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Gates::Scalable)]
        gates: Gates,
        #[arg(long, default_value_t = DEFAULT_FACTOR_LIMIT)]
        factor_limit: f64,
        /// Leave the timing columns empty so repeated runs are identical.
        #[arg(long)]
        no_timing: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit a model document for a generated scenario.
    Generate {
        #[arg(long, value_enum, default_value_t = Infra::Small)]
        infra: Infra,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Instances placed round-robin on the hosts.
        #[arg(long, default_value_t = 3)]
        instances: usize,
        #[arg(long, value_enum, default_value_t = Kind::Redundant)]
        kind: Kind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Gates {
    Dense,
    Scalable,
    Auto,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InferMethod {
    Exact,
    Forward,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleMethod {
    Enumerate,
    Mc,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Redundant,
    Replicated,
}

#[derive(Clone, Copy, ValueEnum)]
enum Infra {
    Small,
    Large,
}

impl Gates {
    fn options(self) -> CompileOptions {
        CompileOptions::with_mode(match self {
            Gates::Dense => GateMode::Dense,
            Gates::Scalable => GateMode::Scalable,
            Gates::Auto => GateMode::Auto,
        })
    }
}

impl Kind {
    fn service(self) -> ServiceKind {
        match self {
            Kind::Redundant => ServiceKind::Redundant,
            Kind::Replicated => ServiceKind::Replicated,
        }
    }
}

fn method(m: InferMethod, samples: usize, seed: u64, workers: usize, factor_limit: f64) -> Method {
    match m {
        InferMethod::Exact => Method::Exact { factor_limit },
        InferMethod::Forward => Method::Forward {
            samples,
            seed,
            workers,
        },
    }
}

fn scenario(infra: Infra, seed: u64) -> bnavail::SystemModel {
    match infra {
        Infra::Small => small_infrastructure(seed),
        Infra::Large => large_infrastructure(seed),
    }
}

/// Hand `write` the file at `path`, or `stdout` when there is none.
fn with_output(
    path: Option<&Path>,
    stdout: &mut dyn Write,
    write: impl FnOnce(&mut dyn Write) -> anyhow::Result<()>,
) -> anyhow::Result<()> {
    match path {
        Some(p) => {
            let f = File::create(p).with_context(|| format!("cannot create `{}`", p.display()))?;
            let mut w = BufWriter::new(f);
            write(&mut w)?;
            w.flush()?;
        }
        None => {
            write(stdout)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn print_result(out: &mut dyn Write, r: &MarginalResult) -> io::Result<()> {
    writeln!(out, "method: {}", r.method)?;
    writeln!(out, "availability: {:.15}", r.availability)?;
    if let Some(n) = r.samples {
        writeln!(out, "samples: {n}")?;
        writeln!(out, "std_err: {:.6e}", r.std_err)?;
        writeln!(out, "ci95: [{:.15}, {:.15}]", r.ci95.0, r.ci95.1)?;
    }
    Ok(())
}

/// Parse `args` (program name first) and execute the command, writing
/// regular output to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    match cli.command {
        Command::Validate { model } => {
            let m = load_model(&model)?;
            let report = m.validate();
            for v in &report.violations {
                writeln!(stdout, "{v}")?;
            }
            if !report.is_valid() {
                bail!(
                    "{} violation(s) in `{}`",
                    report.violations.len(),
                    model.display()
                );
            }
            writeln!(stdout, "valid")?;
        }
        Command::Compile { model, gates, out } => {
            let c = compile(&load_model(&model)?, &gates.options())?;
            with_output(out.as_deref(), stdout, |mut w| {
                Ok(c.net.write_dump(&mut w)?)
            })?;
        }
        Command::Infer {
            model,
            method: m,
            samples,
            seed,
            workers,
            gates,
            factor_limit,
        } => {
            let c = compile(&load_model(&model)?, &gates.options())?;
            let r = availability(&c.net, method(m, samples, seed, workers, factor_limit))?;
            print_result(stdout, &r)?;
        }
        Command::Oracle {
            model,
            method,
            samples,
            seed,
        } => {
            let m = load_model(&model)?;
            let r = match method {
                OracleMethod::Enumerate => MarginalResult {
                    method: "enumerate",
                    ..MarginalResult::exact(enumerate_availability(&m)?)
                },
                OracleMethod::Mc => mc_availability(&m, samples, seed)?,
            };
            print_result(stdout, &r)?;
        }
        Command::Sweep {
            kind,
            min_n,
            max_n,
            step,
            infra,
            method: m,
            samples,
            seed,
            gates,
            factor_limit,
            no_timing,
            out,
        } => {
            if step == 0 || min_n > max_n {
                bail!("empty sweep range {min_n}..={max_n} step {step}");
            }
            let ns: Vec<usize> = (min_n..=max_n).step_by(step).collect();
            let base = scenario(infra, seed);
            let records = sweep(
                &base,
                &ns,
                kind.service(),
                method(m, samples, seed, 1, factor_limit),
                &gates.options(),
                seed,
            );
            with_output(out.as_deref(), stdout, |w| {
                Ok(write_sweep_csv(&records, w, !no_timing)?)
            })?;
        }
        Command::Generate {
            infra,
            seed,
            instances,
            kind,
            out,
        } => {
            let m = with_instances(
                &scenario(infra, seed),
                instances,
                kind.service().is_replicated(),
            );
            let json = to_json(&m)?;
            with_output(
                out.as_deref(),
                stdout,
                |w| Ok(w.write_all(json.as_bytes())?),
            )?;
        }
    }
    Ok(())
}

/// Process exit status for a failed [`run`].
pub fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(c) = e.downcast_ref::<clap::Error>() {
        return match c.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
            _ => 1,
        };
    }
    e.downcast_ref::<bnavail::Error>()
        .map_or(1, |e| e.exit_code() as u8)
}
