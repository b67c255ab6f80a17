use std::error::Error;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fsemt::experiment::{emit_report, run_from_config, write_report, ReportFormat, RunConfig};
use fsemt::multitask::{FitnessMode, Formulation, TransferMode};
use fsemt::search::NormDirection;
use fsemt::LabelColumn;

#[derive(Debug, Parser)]
#[command(name = "fsemt", version, about = "Multi-objective evolutionary multitasking feature selection")]
struct Cli {
    /// CSV file with one sample per row.
    #[arg(long)]
    data: PathBuf,
    /// Label column: "last", a 0-based index or a header name.
    #[arg(long, default_value = "last")]
    label_col: LabelColumn,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    /// Number of tasks including the original one.
    #[arg(long, default_value_t = 5)]
    tasks: usize,
    #[arg(long, default_value_t = 0.6)]
    theta: f64,
    #[arg(long, default_value_t = 0.6)]
    rtp: f64,
    /// Generations without archive change that trigger knowledge transfer.
    #[arg(long, default_value_t = 5)]
    stagnation: usize,
    #[arg(long, default_value_t = 5)]
    knn_k: usize,
    #[arg(long, default_value_t = 5)]
    inner_folds: usize,
    #[arg(long, default_value_t = 10)]
    outer_folds: usize,
    #[arg(long, default_value_t = 0.2)]
    lambda: f64,
    /// Report destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// json or csv-summary.
    #[arg(long, default_value = "json")]
    format: ReportFormat,
    #[arg(long)]
    disable_removal: bool,
    /// Comma-separated auxiliary formulations (filtering, clustering) or "none".
    #[arg(long, default_value = "filtering,clustering")]
    formulations: String,
    /// specific, sbx-style or off.
    #[arg(long, default_value = "specific")]
    transfer: TransferMode,
    /// task-specific, fit1 or fit2.
    #[arg(long, default_value = "task-specific")]
    fitness: FitnessMode,
    /// inverted or literal.
    #[arg(long, default_value = "inverted", value_parser = parse_norm)]
    norm_dir: NormDirection,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

fn parse_norm(s: &str) -> Result<NormDirection, String> {
    match s {
        "inverted" => Ok(NormDirection::Inverted),
        "literal" => Ok(NormDirection::Literal),
        other => Err(format!("unknown value {other:?}; expected inverted or literal")),
    }
}

fn parse_formulations(s: &str) -> Result<Vec<Formulation>, String> {
    if s.trim() == "none" || s.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for part in s.split(',') {
        let f: Formulation = part.trim().parse()?;
        if !out.contains(&f) {
            out.push(f);
        }
    }
    Ok(out)
}

impl Cli {
    fn config(&self) -> Result<RunConfig, String> {
        Ok(RunConfig {
            data: Some(self.data.clone()),
            label_col: self.label_col.clone(),
            seed: self.seed,
            max_iter: self.iters,
            n_tasks: self.tasks,
            theta: self.theta,
            rtp: self.rtp,
            stagnation: self.stagnation,
            knn_k: self.knn_k,
            inner_folds: self.inner_folds,
            outer_folds: self.outer_folds,
            lambda: self.lambda,
            removal: !self.disable_removal,
            formulations: parse_formulations(&self.formulations).map_err(|e| format!("--formulations: {e}"))?,
            transfer: self.transfer,
            fitness: self.fitness,
            norm_dir: self.norm_dir,
            workers: self.workers,
            out: self.out.clone(),
            ..RunConfig::default()
        })
    }
}

fn one_line(err: &dyn Error) -> String {
    let mut msg = err.to_string();
    let mut source = err.source();
    while let Some(s) = source {
        let text = s.to_string();
        if !msg.contains(&text) {
            msg.push_str(": ");
            msg.push_str(&text);
        }
        source = s.source();
    }
    msg.replace('\n', " ")
}

fn run(cli: Cli) -> Result<(), String> {
    let config = cli.config()?;
    if let Some(dir) = cli.out.as_ref().and_then(|p| p.parent()).filter(|d| !d.as_os_str().is_empty()) {
        if !dir.is_dir() {
            return Err(format!(
                "cannot write {}: directory {} does not exist",
                cli.out.as_ref().unwrap().display(),
                dir.display()
            ));
        }
    }
    let report = run_from_config(&config).map_err(|e| one_line(&e))?;
    match &cli.out {
        Some(path) => emit_report(&report, path, cli.format).map_err(|e| one_line(&e)),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_report(&report, &mut lock, cli.format).map_err(|e| one_line(&e))?;
            lock.flush().map_err(|e| e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", first.trim());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
