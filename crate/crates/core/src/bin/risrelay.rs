use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use risrelay::analytic::{dest_outage_given_set, outage_probability, relay_decode_failure};
use risrelay::asymptotic::asymptotic_outage;
use risrelay::channel::SystemConfig;
use risrelay::harness::{
    compare_report, parse_config, parse_methods, run_sweep, write_csv, RunConfig, SweepSpec,
    DEFAULT_SEED, DEFAULT_TRIALS, MC_TOLERANCE, ORACLE_TOLERANCE,
};
use risrelay::montecarlo::{simulate, wilson_interval, SimSpec};
use risrelay::oracle::{quad_dest_outage, quad_relay_outage, QuadratureSettings};
use risrelay::{Error, Result};

/// Outage analysis of RIS-assisted decode-and-forward relay networks.
#[derive(Parser)]
#[command(name = "risrelay", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form outage probability at one SNR.
    Analytic(Common),
    /// High-SNR outage with diversity order, coding gain and dominant hop.
    Asymptotic(Common),
    /// Monte Carlo outage estimate at one SNR.
    Simulate(Common),
    /// Evaluate methods over the SNR grid and write CSV.
    Sweep(Common),
    /// Cross-check closed forms against quadrature and simulation.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV output path (sweep); standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Monte Carlo trials; overrides the configuration file.
    #[arg(long)]
    trials: Option<u64>,
    /// Master seed; overrides the configuration file.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated methods: analytic, asymptotic, montecarlo, oracle.
    #[arg(long, default_value = "analytic")]
    methods: String,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::Config(format!("cannot read {}: {e}", path.display()))
                })?;
                parse_config(&text)
            }
            None => Ok(RunConfig {
                system: SystemConfig::default(),
                snr_grid_db: None,
                trials: None,
                seed: None,
            }),
        }
    }

    fn trials(&self, rc: &RunConfig) -> u64 {
        self.trials.or(rc.trials).unwrap_or(DEFAULT_TRIALS)
    }

    fn seed(&self, rc: &RunConfig) -> u64 {
        self.seed.or(rc.seed).unwrap_or(DEFAULT_SEED)
    }

    fn workers(&self) -> usize {
        self.workers.unwrap_or_else(|| {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        })
    }
}

fn grid(rc: &RunConfig) -> Vec<f64> {
    rc.snr_grid_db
        .clone()
        .unwrap_or_else(|| vec![rc.system.snr_db])
}

fn cmd_analytic(c: &Common) -> Result<bool> {
    let rc = c.load()?;
    let est = outage_probability(&rc.system)?;
    println!("snr_db = {}", rc.system.snr_db);
    println!("pout = {:.16e}", est.probability);
    for w in &est.warnings {
        println!("warning = {}", w.tag());
    }
    Ok(true)
}

fn cmd_asymptotic(c: &Common) -> Result<bool> {
    let rc = c.load()?;
    let r = asymptotic_outage(&rc.system)?;
    println!("snr_db = {}", rc.system.snr_db);
    println!("pout = {:.16e}", r.probability);
    println!("diversity_order = {}", r.diversity_order);
    println!("coding_gain = {:.16e}", r.coding_gain);
    println!("dominant_hop = {}", r.dominant_hop);
    Ok(true)
}

fn cmd_simulate(c: &Common) -> Result<bool> {
    let rc = c.load()?;
    let r = simulate(&SimSpec {
        config: rc.system.clone(),
        trials: c.trials(&rc),
        seed: c.seed(&rc),
        workers: c.workers(),
    })?;
    println!("snr_db = {}", rc.system.snr_db);
    println!("pout = {:.16e}", r.estimate);
    println!("ci99 = [{:.16e}, {:.16e}]", r.ci_low, r.ci_high);
    println!("outages = {}", r.outage_count);
    println!("trials = {}", r.trials);
    if r.low_event_count {
        println!("warning = low_event_count");
    }
    Ok(true)
}

fn cmd_sweep(c: &Common) -> Result<bool> {
    let rc = c.load()?;
    let spec = SweepSpec {
        base: rc.system.clone(),
        snr_grid_db: grid(&rc),
        methods: parse_methods(&c.methods)?,
        mc_trials: c.trials(&rc),
        seed: c.seed(&rc),
        workers: c.workers(),
    };
    let rows = run_sweep(&spec)?;
    match &c.out {
        Some(path) => write_csv(&rows, BufWriter::new(File::create(path)?))?,
        None => write_csv(&rows, io::stdout().lock())?,
    }
    if spec.methods.len() >= 2 {
        let report = compare_report(&rows, &spec.base)?;
        eprint!("{report}");
    }
    Ok(true)
}

fn line(ok: bool, name: &str, detail: String) -> bool {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn cmd_validate(c: &Common) -> Result<bool> {
    let rc = c.load()?;
    let snrs = rc.snr_grid_db.clone().unwrap_or_else(|| vec![0.0, 10.0, 20.0]);
    let settings = QuadratureSettings::default();
    let trials = c.trials(&rc);
    let seed = c.seed(&rc);
    let exact_case = rc.system.n1 == 1 && rc.system.n2 == 1;
    let mut all = true;
    for (i, &snr) in snrs.iter().enumerate() {
        let cfg = rc.system.with_snr_db(snr);
        let mut worst: f64 = 0.0;
        let a = relay_decode_failure(&cfg)?.value;
        let o = quad_relay_outage(&cfg, &settings)?;
        worst = worst.max((a / o - 1.0).abs());
        for l in 0..=cfg.k_relays {
            let a = dest_outage_given_set(&cfg, l)?.value;
            let o = quad_dest_outage(&cfg, l, &settings)?;
            worst = worst.max((a / o - 1.0).abs());
        }
        all &= line(
            worst <= ORACLE_TOLERANCE,
            &format!("oracle {snr} dB"),
            format!("worst relative difference {worst:.3e}"),
        );

        let p = outage_probability(&cfg)?.probability;
        let r = simulate(&SimSpec {
            config: cfg.clone(),
            trials,
            seed: seed.wrapping_add(i as u64),
            workers: c.workers(),
        })?;
        if exact_case {
            let (lo, hi) = wilson_interval(r.outage_count, r.trials, 3.0);
            all &= line(
                lo <= p && p <= hi,
                &format!("montecarlo {snr} dB"),
                format!("analytic {p:.6e} vs 3-sigma interval [{lo:.6e}, {hi:.6e}]"),
            );
        } else if p >= 1e-4 {
            let d = (r.estimate / p - 1.0).abs();
            all &= line(
                d <= MC_TOLERANCE,
                &format!("montecarlo {snr} dB"),
                format!("analytic {p:.6e} vs simulated {:.6e}, relative {d:.3e}", r.estimate),
            );
        } else {
            println!("SKIP montecarlo {snr} dB: analytic {p:.3e} below 1e-4");
        }
    }
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Analytic(c) => cmd_analytic(c),
        Command::Asymptotic(c) => cmd_asymptotic(c),
        Command::Simulate(c) => cmd_simulate(c),
        Command::Sweep(c) => cmd_sweep(c),
        Command::Validate(c) => cmd_validate(c),
    };
    let _ = io::stdout().flush();
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
