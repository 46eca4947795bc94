use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vertmem::experiment::{
    cmd_advise, cmd_classify, cmd_gen, cmd_run, cmd_sweep, gen_file, ExpError, ExperimentConfig, Outputs, PolicyChoice,
    WorkloadSpec,
};
use vertmem::workloads::{ArchetypeKind, Reuse};

/// Page-coloring partition simulator.
#[derive(Parser)]
#[command(name = "vertmem", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Policy name or "auto"; overrides the config.
    #[arg(long)]
    policy: Option<PolicyChoice>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate archetype traces.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kind: Option<ArchetypeKind>,
        #[arg(long)]
        pages: Option<u64>,
        #[arg(long)]
        accesses: Option<u64>,
        /// none, loop, zipf or zipf:S
        #[arg(long)]
        reuse: Option<Reuse>,
        #[arg(long)]
        stride: Option<u64>,
        /// App name written into the trace.
        #[arg(long)]
        name: Option<String>,
        /// Output trace file.
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Replay the workload mix under one policy.
    Run(Common),
    /// Classify every workload app.
    Classify {
        #[command(flatten)]
        common: Common,
        /// Also run the two-quota offline oracle.
        #[arg(long)]
        offline: bool,
    },
    /// Choose a policy and quota plan.
    Advise(Common),
    /// Run every policy and compare with the decision tree.
    Sweep(Common),
}

fn load(c: &Common) -> Result<ExperimentConfig, ExpError> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(p) = c.policy {
        cfg.policy = p;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = Some(o.clone());
    }
    Ok(cfg)
}

fn emit(cfg: &ExperimentConfig, out: Outputs) -> Result<(), ExpError> {
    match &cfg.out_dir {
        Some(dir) => {
            for p in out.write(dir)? {
                eprintln!("wrote {}", p.display());
            }
        }
        None => {
            let mut stdout = io::stdout().lock();
            for (_, bytes) in &out.files {
                match stdout.write_all(bytes) {
                    Err(e) if e.kind() == io::ErrorKind::BrokenPipe => break,
                    r => r.map_err(|e| ExpError::Runtime(format!("stdout: {e}")))?,
                }
            }
        }
    }
    Ok(())
}

fn real_main(cli: Cli) -> Result<(), ExpError> {
    match cli.cmd {
        Cmd::Gen {
            common,
            kind,
            pages,
            accesses,
            reuse,
            stride,
            name,
            output,
        } => {
            if common.config.is_some() && kind.is_none() {
                let cfg = load(&common)?;
                return emit(&cfg, cmd_gen(&cfg)?);
            }
            let Some(kind) = kind else {
                return Err(ExpError::Usage("gen needs --kind or --config".into()));
            };
            let Some(output) = output else {
                return Err(ExpError::Usage("gen --kind needs -o FILE".into()));
            };
            let w = WorkloadSpec {
                name,
                kind: Some(kind),
                pages,
                accesses,
                reuse,
                stride,
                seed: Some(common.seed.unwrap_or(0)),
                trace: None,
            };
            let params = w.params(0, 0).expect("kind is set");
            gen_file(&params, &w.app_name(0), &output)
        }
        Cmd::Run(c) => {
            let cfg = load(&c)?;
            emit(&cfg, cmd_run(&cfg)?)
        }
        Cmd::Classify { common, offline } => {
            let cfg = load(&common)?;
            emit(&cfg, cmd_classify(&cfg, offline)?)
        }
        Cmd::Advise(c) => {
            let cfg = load(&c)?;
            emit(&cfg, cmd_advise(&cfg)?)
        }
        Cmd::Sweep(c) => {
            let cfg = load(&c)?;
            emit(&cfg, cmd_sweep(&cfg)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vertmem: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
