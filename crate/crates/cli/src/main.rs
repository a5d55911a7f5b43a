use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use cascade_risk::risk::Convention;
use cascade_risk::Topology;
use cascade_risk_cli::commands::{
    covariance_table, epsilon_sweep_table, graph_table, risk_profile_table, simulate,
    weight_sweep_table,
};
use cascade_risk_cli::validate::{self, ValidateOptions};
use cascade_risk_cli::{CliError, ExperimentConfig, Overrides};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "cascade-risk",
    version,
    about = "Cascading-failure risk in delayed consensus networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: GlobalOpts,
}

#[derive(Args)]
struct GlobalOpts {
    /// JSON config file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write output here instead of stdout
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    n: Option<usize>,
    /// complete | path | cycle:<p>
    #[arg(long, global = true)]
    topology: Option<Topology>,
    #[arg(long, global = true)]
    weight: Option<f64>,
    #[arg(long, global = true)]
    weight_min: Option<f64>,
    #[arg(long, global = true)]
    weight_max: Option<f64>,
    #[arg(long, global = true)]
    weight_steps: Option<usize>,
    #[arg(long, global = true)]
    tau: Option<f64>,
    #[arg(long, global = true)]
    b0: Option<f64>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Comma-separated radii for epsilon-sweep
    #[arg(long, global = true, value_delimiter = ',')]
    epsilon_list: Option<Vec<f64>>,
    #[arg(long, global = true)]
    c: Option<f64>,
    /// 1-based index of the failed agent
    #[arg(long, global = true)]
    failed_agent: Option<usize>,
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// std_scale | var_scale
    #[arg(long, global = true)]
    convention: Option<Convention>,
    #[arg(long, global = true)]
    sim_dt: Option<f64>,
    #[arg(long, global = true)]
    sim_horizon: Option<f64>,
    #[arg(long, global = true)]
    sim_burn_in: Option<f64>,
    #[arg(long, global = true)]
    sim_replicas: Option<usize>,
    #[arg(long, global = true)]
    sim_seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Risk of every agent given the configured failure (agent,risk)
    RiskProfile,
    /// Risk per agent over the weight grid (weight,agent,risk,stable)
    WeightSweep,
    /// Risk per agent over epsilon_list (epsilon,agent,risk)
    EpsilonSweep,
    /// Cross-check closed forms against simulation and quadrature
    Validate {
        /// Multiply the closed-form covariance by this factor before checking
        #[arg(long, default_value_t = 1.0)]
        perturb: f64,
        /// Skip the Monte-Carlo covariance check
        #[arg(long)]
        no_simulation: bool,
    },
    /// Steady-state covariance in long format (i,j,sigma_ij)
    Covariance,
    /// Edge list of the configured graph (i,j,weight)
    Graph,
    /// One simulated trajectory (t,y_1,...,y_n) after burn-in
    Simulate {
        #[arg(long, default_value_t = 100)]
        stride: usize,
    },
    /// Print the effective configuration as JSON
    ShowConfig,
}

impl GlobalOpts {
    fn overrides(&self) -> Overrides {
        Overrides {
            n: self.n,
            topology: self.topology,
            weight: self.weight,
            weight_min: self.weight_min,
            weight_max: self.weight_max,
            weight_steps: self.weight_steps,
            tau: self.tau,
            b0: self.b0,
            epsilon: self.epsilon,
            epsilon_list: self.epsilon_list.clone(),
            c: self.c,
            failed_agent: self.failed_agent,
            delta: self.delta,
            convention: self.convention,
            sim_dt: self.sim_dt,
            sim_horizon: self.sim_horizon,
            sim_burn_in: self.sim_burn_in,
            sim_replicas: self.sim_replicas,
            sim_seed: self.sim_seed,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.opts.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(cli.opts.overrides());
    tracing::debug!(hash = %cfg.hash(), "effective config");

    let mut validation_failed = false;
    let text = match cli.command {
        Command::RiskProfile => risk_profile_table(&cfg)?.render("risk-profile", &cfg),
        Command::WeightSweep => weight_sweep_table(&cfg)?.render("weight-sweep", &cfg),
        Command::EpsilonSweep => epsilon_sweep_table(&cfg)?.render("epsilon-sweep", &cfg),
        Command::Covariance => covariance_table(&cfg)?.render("covariance", &cfg),
        Command::Graph => graph_table(&cfg)?.render("graph", &cfg),
        Command::Simulate { stride } => {
            let tr = simulate(&cfg, stride)?;
            format!(
                "# cascade-risk simulate config_sha256={} delta={} convention={}\n{}",
                cfg.hash(),
                cfg.delta,
                cfg.convention,
                tr.to_csv()
            )
        }
        Command::Validate {
            perturb,
            no_simulation,
        } => {
            let report = validate::run(
                &cfg,
                ValidateOptions {
                    perturbation: perturb,
                    simulation: !no_simulation,
                },
            )?;
            validation_failed = !report.passed;
            serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
        }
        Command::ShowConfig => {
            cfg.validate()?;
            cfg.to_json() + "\n"
        }
    };
    match &cli.opts.output {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    if validation_failed {
        return Err(CliError::Validation(
            "one or more checks failed; see report".into(),
        ));
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
