//! `hetgraph` command line.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error,
//! 3 data error, 4 training failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hetgraph::experiment::{
    self, build_graph_stage, collect_reports, compare, evaluate_column, load_graph_inputs, prepare_all, train_column,
    write_table, Column, ExperimentConfig, ModelKind, StageLog, Table, Variant,
};
use hetgraph::graph::{CorrelationGroup, GraphParams};
use hetgraph::ingest::ingest_tracts;
use hetgraph::synth::{gen_city, gen_counts, write_fixture, Process};
use hetgraph::{Error, ErrorKind, Result};

#[derive(Parser)]
#[command(name = "hetgraph", version, about = "Multi-modal spatio-temporal graph experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config file plus flags that override its keys.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// Experiment TOML file.
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// ha | rf | stgcn | stzinb
    #[arg(long)]
    model: Option<String>,
    /// 3d | 3d2d | 3d2d1d
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Epoch budget for both neural models.
    #[arg(long)]
    max_epochs: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = &self.model {
            cfg.model = Some(m.parse::<ModelKind>()?);
            cfg.columns = None;
        }
        if let Some(v) = &self.variant {
            cfg.variant = Some(v.parse::<Variant>()?);
            cfg.columns = None;
        }
        if let Some(s) = self.sigma {
            cfg.graph.sigma = s;
        }
        if let Some(e) = self.epsilon {
            cfg.graph.epsilon = e;
        }
        if let Some(n) = self.max_epochs {
            cfg.stgcn.train.max_epochs = n;
            cfg.stzinb.train.max_epochs = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build distance and homophily adjacencies.
    BuildGraph {
        #[arg(long, short)]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "config")]
        tracts: Option<PathBuf>,
        #[arg(long, required_unless_present = "config")]
        features: Option<PathBuf>,
        #[arg(long)]
        feature_categories: Option<PathBuf>,
        #[arg(long, required_unless_present = "config")]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Comma-separated subset of demography,land,poi.
        #[arg(long, value_delimiter = ',')]
        groups: Option<Vec<String>>,
        #[arg(long)]
        row_normalize: bool,
    },
    /// Assemble the observation cube, weather and split.
    Prepare(ConfigArgs),
    /// Train the selected model columns.
    Train(ConfigArgs),
    /// Score trained columns on the test split.
    Evaluate(ConfigArgs),
    /// All stages end to end.
    Run(ConfigArgs),
    /// Per-tract MAPE difference between two evaluated columns (B minus A).
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Tract GeoJSON for the choropleth export.
        #[arg(long)]
        tracts: Option<PathBuf>,
    },
    /// Comparison table over one or more run directories.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic city and counts in the ingestion formats.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 25)]
        tracts: usize,
        #[arg(long, default_value_t = 3000)]
        steps: usize,
        /// constant | zinb | weather-coupled | smooth-diffusion | clustered
        #[arg(long, default_value = "weather-coupled")]
        process: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_process(s: &str) -> Result<Process> {
    match s {
        "constant" => Ok(Process::Constant { lambda: 1.0 }),
        "zinb" => Ok(Process::Zinb {
            n: 2.0,
            p: 0.5,
            pi: 0.6,
        }),
        "weather-coupled" => Ok(Process::weather_coupled()),
        "smooth-diffusion" => Ok(Process::smooth_diffusion()),
        "clustered" => Ok(Process::clustered()),
        other => Err(Error::Config(format!("unknown process {other:?}"))),
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::BuildGraph {
            config,
            tracts,
            features,
            feature_categories,
            output_dir,
            sigma,
            epsilon,
            groups,
            row_normalize,
        } => {
            let mut cfg = match &config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::default(),
            };
            if let Some(t) = tracts {
                cfg.data.tracts = t;
            }
            if let Some(f) = features {
                cfg.data.features = f;
            }
            if feature_categories.is_some() {
                cfg.data.feature_categories = feature_categories;
            }
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            let defaults = GraphParams::default();
            cfg.graph.sigma = sigma.unwrap_or(cfg.graph.sigma);
            cfg.graph.epsilon = epsilon.unwrap_or(cfg.graph.epsilon);
            if let Some(g) = groups {
                cfg.graph.groups = g.iter().map(|s| s.parse::<CorrelationGroup>()).collect::<Result<_>>()?;
            } else if cfg.graph.groups.is_empty() {
                cfg.graph.groups = defaults.groups;
            }
            cfg.graph.row_normalize |= row_normalize;
            let inputs = load_graph_inputs(&cfg)?;
            let graph = build_graph_stage(&cfg, &inputs)?;
            println!(
                "wrote adjacencies for {} tracts to {}",
                graph.tract_ids.len(),
                cfg.output_dir.join("graph").display()
            );
            Ok(())
        }
        Command::Prepare(args) => {
            let cfg = args.load()?;
            let mut log = StageLog::new(&cfg)?;
            let prep = prepare_all(&cfg, &mut log)?;
            println!(
                "prepared {} steps x {} tracts (zero rate {:.4})",
                prep.cube.n_steps(),
                prep.cube.n_tracts(),
                prep.cube.zero_rate()
            );
            Ok(())
        }
        Command::Train(args) => {
            let cfg = args.load()?;
            let mut log = StageLog::new(&cfg)?;
            let prep = prepare_all(&cfg, &mut log)?;
            let cols = cfg.selected_columns()?;
            let records = log.stage("train", || {
                cols.iter().map(|c| train_column(&cfg, &prep, c)).collect::<Result<Vec<_>>>()
            })?;
            for r in &records {
                println!("{}: {:?} after {} epochs", r.column, r.status, r.epochs);
            }
            Ok(())
        }
        Command::Evaluate(args) => {
            let cfg = args.load()?;
            let mut log = StageLog::new(&cfg)?;
            let prep = prepare_all(&cfg, &mut log)?;
            let cols = cfg.selected_columns()?;
            let reports = log.stage("evaluate", || {
                cols.iter()
                    .map(|c| Ok((*c, evaluate_column(&cfg, &prep, c)?)))
                    .collect::<Result<Vec<_>>>()
            })?;
            let all = collect_reports(&cfg.output_dir)?;
            log.stage("report", || write_table(&cfg.output_dir, &Table::from_reports(cfg.dataset_name(), &all)))?;
            print_table(&reports);
            Ok(())
        }
        Command::Run(args) => {
            let cfg = args.load()?;
            let outcome = experiment::run(&cfg)?;
            print_table(&outcome.reports);
            Ok(())
        }
        Command::Compare { a, b, out, tracts } => {
            let summary = compare(&a, &b)?;
            let geometry = match tracts {
                Some(p) => Some(ingest_tracts(&p)?),
                None => guess_tracts(&a).map(|p| ingest_tracts(&p)).transpose()?,
            };
            summary.write(&out, geometry.as_deref())?;
            println!(
                "{} tracts, {:.1}% improved, {} low-activity; wrote {}",
                summary.n_tracts,
                summary.improved_percent,
                summary.n_low_activity,
                out.display()
            );
            Ok(())
        }
        Command::Report { runs, out } => {
            let mut table = Table::default();
            for dir in &runs {
                let reports = collect_reports(dir)?;
                let dataset = reports[0].1.dataset.clone();
                if table.columns.is_empty() {
                    table = Table::from_reports(&dataset, &reports);
                } else {
                    table.add_dataset(&dataset, &reports);
                }
            }
            let out = out.unwrap_or_else(|| runs[0].clone());
            write_table(&out, &table)?;
            print!("{}", table.to_markdown());
            Ok(())
        }
        Command::Synth {
            out,
            tracts,
            steps,
            process,
            seed,
        } => {
            let city = gen_city(tracts, seed)?;
            let data = gen_counts(&city, steps, &parse_process(&process)?)?;
            let paths = write_fixture(&out, &city, &data)?;
            println!("{}", serde_json::to_string_pretty(&paths)?);
            Ok(())
        }
    }
}

/// A column directory sits inside a run whose prepare stage copied the
/// tract geometry to `data/tracts.geojson`.
fn guess_tracts(column_dir: &Path) -> Option<PathBuf> {
    let p = column_dir.parent()?.join("data").join("tracts.geojson");
    p.exists().then_some(p)
}

fn print_table(reports: &[(Column, hetgraph::metrics::MetricsReport)]) {
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    println!("{:<15} {:>10} {:>10} {:>10} {:>8}", "column", "MAE", "MAE-dt", "MPIW", "PICP");
    for (c, r) in reports {
        println!(
            "{:<15} {:>10} {:>10} {:>10} {:>8}",
            c.to_string(),
            cell(r.mae_tract),
            cell(r.mae_downtown),
            cell(r.mpiw),
            cell(r.picp)
        );
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Training => 4,
        ErrorKind::Other => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
