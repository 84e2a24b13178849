use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use delayed_consensus::gain::{design_gain, design_gain_delay_tolerant, stability_report, DesignOptions};
use delayed_consensus::harness::{
    build_instance, design_for, run_montecarlo, run_single, verify, write_mse_csv, DelayKind, DelaySpec,
    ExperimentConfig,
};
use delayed_consensus::io::{
    read_json, to_json, DelayDoc, DesignDoc, GainDoc, InstanceDoc, NetworkDoc, ReportDoc, SystemDoc,
};
use delayed_consensus::{Error, Result};

/// Distributed state estimation over sensor networks with delayed links.
#[derive(Parser)]
#[command(name = "dcest", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a system, network and delay profiles from a config.
    Generate(ConfigArgs),
    /// Synthesize a block-diagonal gain and report its delay tolerance.
    Design(DesignArgs),
    /// Closed-loop radius, τ*, bounds and rates for a list of delays.
    Analyze(AnalyzeArgs),
    /// One simulated run; per-step MSE as CSV.
    Simulate(RunArgs),
    /// Full Monte-Carlo experiment; averaged MSE as CSV.
    Montecarlo(RunArgs),
    /// Run the randomized property suites.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Plain,
    DelayTolerant,
}

#[derive(Args)]
struct InstanceSource {
    /// Experiment config; the instance is generated from it.
    #[arg(long, conflicts_with = "instance")]
    config: Option<PathBuf>,
    /// Instance file written by `generate`.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DesignArgs {
    #[command(flatten)]
    source: InstanceSource,
    /// Design mode when reading an instance file.
    #[arg(long, value_enum, default_value = "plain")]
    mode: ModeArg,
    /// Delay bound the delay-tolerant design must certify.
    #[arg(long, default_value_t = 0)]
    tau1: usize,
    /// Delays at which bounds and rates are reported.
    #[arg(long, value_delimiter = ',')]
    tau: Option<Vec<usize>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    source: InstanceSource,
    /// Gain file written by `design`; designed afresh when omitted.
    #[arg(long)]
    gain: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', required = true)]
    tau: Vec<usize>,
    /// Scan cap for τ*.
    #[arg(long, default_value_t = 64)]
    tau_max: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the configured delay specs by homogeneous ones.
    #[arg(long, value_delimiter = ',')]
    tau: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 50)]
    seeds: u64,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    let mut w = output(path)?;
    writeln!(w, "{text}")?;
    w.flush()?;
    Ok(())
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn instance_doc(cfg: &ExperimentConfig) -> Result<InstanceDoc> {
    let inst = build_instance(cfg)?;
    Ok(InstanceDoc {
        system: SystemDoc::from_system(&inst.sys),
        network: NetworkDoc::from_network(&inst.net),
        delays: inst
            .delays
            .iter()
            .map(|(label, p)| DelayDoc::from_profile(p, Some(label.clone())))
            .collect(),
    })
}

fn generate(args: ConfigArgs) -> Result<()> {
    let cfg = load_config(&args.config, args.seed)?;
    write_text(args.out.as_deref(), &to_json(&instance_doc(&cfg)?)?)
}

fn design(args: DesignArgs) -> Result<()> {
    let mut opts = DesignOptions::default();
    if let Some(t) = args.tau {
        opts.report_taus = t;
    }
    let d = match (&args.source.config, &args.source.instance) {
        (Some(path), _) => {
            let cfg = load_config(path, args.source.seed)?;
            let inst = build_instance(&cfg)?;
            design_for(&cfg, &inst)?
        }
        (None, Some(path)) => {
            let doc: InstanceDoc = read_json(path)?;
            let (sys, net) = (doc.system.to_system()?, doc.network.to_network()?);
            opts.seed = args.source.seed.unwrap_or(0);
            match args.mode {
                ModeArg::Plain => design_gain(&net, &sys, &opts)?,
                ModeArg::DelayTolerant => design_gain_delay_tolerant(&net, &sys, args.tau1, &opts)?,
            }
        }
        (None, None) => return Err(Error::Config("pass --config or --instance".into())),
    };
    let doc = DesignDoc {
        gain: GainDoc::from_gain(&d.gain),
        report: ReportDoc::from_report(&d.report),
    };
    write_text(args.out.as_deref(), &to_json(&doc)?)
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let (sys, net, gain) = match (&args.source.config, &args.source.instance) {
        (Some(path), _) => {
            let cfg = load_config(path, args.source.seed)?;
            let inst = build_instance(&cfg)?;
            let gain = match &args.gain {
                Some(g) => read_json::<GainDoc>(g)?.to_gain()?,
                None => design_for(&cfg, &inst)?.gain,
            };
            (inst.sys, inst.net, gain)
        }
        (None, Some(path)) => {
            let doc: InstanceDoc = read_json(path)?;
            let (sys, net) = (doc.system.to_system()?, doc.network.to_network()?);
            let gain = match &args.gain {
                Some(g) => read_json::<GainDoc>(g)?.to_gain()?,
                None => {
                    let opts = DesignOptions {
                        seed: args.source.seed.unwrap_or(0),
                        ..DesignOptions::default()
                    };
                    design_gain(&net, &sys, &opts)?.gain
                }
            };
            (sys, net, gain)
        }
        (None, None) => return Err(Error::Config("pass --config or --instance".into())),
    };
    let report = stability_report(net.p(), sys.a(), &gain, &sys.dbar_c(), &args.tau, args.tau_max)?;
    write_text(args.out.as_deref(), &to_json(&ReportDoc::from_report(&report))?)
}

fn run_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = load_config(&args.config, args.seed)?;
    if let Some(t) = &args.tau {
        cfg.delays = t
            .iter()
            .map(|&tau_bar| DelaySpec {
                mode: DelayKind::Homogeneous,
                tau_bar,
            })
            .collect();
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(args: RunArgs) -> Result<()> {
    let cfg = run_config(&args)?;
    let exp = run_single(&cfg)?;
    let w = output(args.out.as_deref())?;
    write_mse_csv(&exp.curves, w)
}

fn montecarlo(args: RunArgs) -> Result<()> {
    let cfg = run_config(&args)?;
    let exp = run_montecarlo(&cfg, args.workers)?;
    let w = output(args.out.as_deref())?;
    write_mse_csv(&exp.curves, w)
}

fn verify_suites(args: VerifyArgs) -> Result<bool> {
    let outcomes = verify::run_all(args.seeds)?;
    let mut all = true;
    for o in &outcomes {
        let status = if o.passed() { "PASS" } else { "FAIL" };
        println!(
            "{status} {} cases={} failures={} worst={:.3e}",
            o.name, o.cases, o.failures, o.worst
        );
        all &= o.passed();
    }
    Ok(all)
}

fn report_error(kind: &str, message: &str) {
    let line = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            report_error("usage", e.to_string().lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Design(a) => design(a),
        Command::Analyze(a) => analyze(a),
        Command::Simulate(a) => simulate(a),
        Command::Montecarlo(a) => montecarlo(a),
        Command::Verify(a) => match verify_suites(a) {
            Ok(true) => Ok(()),
            Ok(false) => {
                report_error("verification_failed", "one or more property suites failed");
                return ExitCode::FAILURE;
            }
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}
