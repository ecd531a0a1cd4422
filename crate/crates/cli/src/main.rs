//! `enrich`: boundary tables, performance sweeps and data ingestion from the
//! command line, plus the HTTP service.
//!
//! Parameter flags mirror the parameter file keys with `-` in place of `_`
//! (`k_star` is `--k-star`). A parameter file given with `--params` is read
//! first and flags override it.
//!
//! Exit codes: 0 success, 2 invalid input, 3 time limit reached, 1 anything
//! else.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use enrichment_core::config::parse_parameter_document;
use enrichment_core::export::{self, html_report};
use enrichment_core::ingest::{estimate_population, parse_dataset, PopulationEstimate};
use enrichment_core::{
    estimate_performance, load_parameters, save_parameters, DesignTables, Error, ParameterDocument,
    Parameters,
};
use enrichment_service::ServiceConfig;

#[derive(Debug, Parser)]
#[command(name = "enrich", version, about = "Plan two-subpopulation adaptive enrichment trials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Calibrate and print the boundary tables of AD, SC and SS.
    Design {
        #[command(flatten)]
        params: ParamArgs,
        /// Directory to write ad.csv, sc.csv, ss.csv and parameters.csv into.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Simulate power, expected sample size and duration over the effect grid.
    Simulate {
        #[command(flatten)]
        params: ParamArgs,
        /// Directory to write the boundary tables and performance.csv into.
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Also write a self-contained HTML report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Estimate population parameters from participant-level data.
    Ingest {
        /// CSV with a header row and columns subpopulation, treatment, outcome.
        dataset: PathBuf,
        /// Parameter file to update with the estimates (rewritten in place
        /// unless --output is given).
        #[arg(long)]
        merge: Option<PathBuf>,
        /// Where to write the merged parameter file.
        #[arg(long, short, requires = "merge")]
        output: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[command(flatten)]
        config: ServiceConfig,
    },
}

#[derive(Debug, Args)]
struct ParamArgs {
    /// Parameter file (`parameter,value` rows).
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    pi1: Option<f64>,
    #[arg(long)]
    p1c: Option<f64>,
    #[arg(long)]
    p1t: Option<f64>,
    #[arg(long)]
    p2c: Option<f64>,
    #[arg(long)]
    stages: Option<usize>,
    #[arg(long)]
    k_star: Option<usize>,
    #[arg(long)]
    n1_per_stage: Option<f64>,
    #[arg(long)]
    n2_per_stage: Option<f64>,
    #[arg(long)]
    n_sc_per_stage: Option<f64>,
    #[arg(long)]
    n_ss_per_stage: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    a_c: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    f_ad1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    f_ad2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    f_sc: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    f_ss: Option<f64>,
    #[arg(long)]
    enrollment_rate: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    effect_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    effect_max: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    calibration_paths: Option<usize>,
    #[arg(long)]
    calibration_seed: Option<u64>,
    /// Seconds; 0 for no limit.
    #[arg(long)]
    time_limit_secs: Option<f64>,
}

impl ParamArgs {
    fn document(&self) -> ParameterDocument {
        ParameterDocument {
            format_version: None,
            pi1: self.pi1,
            p1c: self.p1c,
            p1t: self.p1t,
            p2c: self.p2c,
            stages: self.stages,
            k_star: self.k_star,
            n1_per_stage: self.n1_per_stage,
            n2_per_stage: self.n2_per_stage,
            n_sc_per_stage: self.n_sc_per_stage,
            n_ss_per_stage: self.n_ss_per_stage,
            alpha: self.alpha,
            a_c: self.a_c,
            delta: self.delta,
            f_ad1: self.f_ad1,
            f_ad2: self.f_ad2,
            f_sc: self.f_sc,
            f_ss: self.f_ss,
            enrollment_rate: self.enrollment_rate,
            effect_min: self.effect_min,
            effect_max: self.effect_max,
            grid_points: self.grid_points,
            iterations: self.iterations,
            seed: self.seed,
            calibration_paths: self.calibration_paths,
            calibration_seed: self.calibration_seed,
            time_limit_secs: self.time_limit_secs,
            fresh_seed: None,
        }
    }

    fn resolve(&self) -> Result<Parameters, Failure> {
        let mut params = Parameters::default();
        if let Some(path) = &self.params {
            let (doc, warnings) = parse_parameter_document(&read(path)?)?;
            for w in warnings {
                eprintln!("warning: {}: {w}", path.display());
            }
            params.apply(&doc);
        }
        params.apply(&self.document());
        params.validate()?;
        Ok(params)
    }
}

enum Failure {
    Core(Error),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write_tables(dir: &Path, params: &Parameters, tables: &DesignTables) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    write(&dir.join("ad.csv"), &export::adaptive_table_csv(&tables.adaptive))?;
    write(&dir.join("sc.csv"), &export::standard_table_csv(&tables.combined))?;
    write(&dir.join("ss.csv"), &export::standard_table_csv(&tables.subpop1))?;
    write(&dir.join("parameters.csv"), &save_parameters(params))
}

fn print_tables(tables: &DesignTables) {
    let c = &tables.adaptive.constants;
    println!(
        "# AD: H0C constant {}, H01 constant {}",
        export::fmt6(c.combined.constant),
        export::fmt6(c.subpop1.constant)
    );
    print!("{}", export::adaptive_table_csv(&tables.adaptive));
    println!("\n# SC: constant {}", export::fmt6(tables.combined.constant.constant));
    print!("{}", export::standard_table_csv(&tables.combined));
    println!("\n# SS: constant {}", export::fmt6(tables.subpop1.constant.constant));
    print!("{}", export::standard_table_csv(&tables.subpop1));
}

fn calibrate(params: &Parameters) -> Result<DesignTables, Failure> {
    let deadline = enrichment_core::Deadline::new(params.mc.time_limit_secs, None);
    Ok(DesignTables::calibrate_within(
        &params.design,
        &params.population,
        &params.mc.calibration(),
        &deadline,
    )?)
}

fn print_estimate(est: &PopulationEstimate) {
    let p = &est.population;
    println!("participants,{}", est.participants);
    println!("pi1,{}", export::fmt6(p.pi1));
    println!("p1c,{}", export::fmt6(p.p1c));
    println!("p1t,{}", export::fmt6(p.p1t));
    println!("p2c,{}", export::fmt6(p.p2c));
    println!("p2t,{}", export::fmt6(est.p2t));
    for w in &est.warnings {
        eprintln!("warning: {w}");
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Design { params, output } => {
            let params = params.resolve()?;
            let tables = calibrate(&params)?;
            print_tables(&tables);
            if let Some(dir) = output {
                write_tables(&dir, &params, &tables)?;
            }
        }
        Command::Simulate { params, output, report } => {
            let params = params.resolve()?;
            let tables = calibrate(&params)?;
            let grid = estimate_performance(&params.design, &params.population, &tables, &params.grid, &params.mc)?;
            let csv = export::performance_table_csv(&grid);
            print!("{csv}");
            eprintln!("simulated in {:.2} s", grid.wall_time_secs);
            if let Some(dir) = output {
                write_tables(&dir, &params, &tables)?;
                write(&dir.join("performance.csv"), &csv)?;
            }
            if let Some(path) = report {
                write(&path, &html_report(&params, &tables, Some(&grid)))?;
            }
        }
        Command::Ingest { dataset, merge, output } => {
            let raw = fs::read(&dataset).map_err(|e| Failure::Io(format!("{}: {e}", dataset.display())))?;
            let est = estimate_population(&parse_dataset(&raw)?)?;
            print_estimate(&est);
            if let Some(file) = merge {
                let (mut params, warnings) = load_parameters(&read(&file)?)?;
                for w in warnings {
                    eprintln!("warning: {}: {w}", file.display());
                }
                params.population = est.population;
                let grid = params.grid.clamped_for(est.population.p2c);
                if grid != params.grid {
                    eprintln!(
                        "warning: effect grid narrowed to [{}, {}] to keep p2t inside [0, 1]",
                        export::fmt6(grid.min),
                        export::fmt6(grid.max)
                    );
                    params.grid = grid;
                }
                params.validate()?;
                write(output.as_deref().unwrap_or(&file), &save_parameters(&params))?;
            }
        }
        Command::Serve { config } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
                )
                .init();
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Io(e.to_string()))?;
            runtime
                .block_on(enrichment_service::serve(config))
                .map_err(|e| Failure::Io(e.to_string()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::TimeLimit => ExitCode::from(3),
                e if e.is_validation() => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
