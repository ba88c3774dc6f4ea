use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use covclose::app::{run_manifest, AppError, RunOptions};
use covclose::engine::RunConfig;
use covclose::hdl::{extract_top_ports, load_sources};
use covclose::report::{
    round2, summarize_reports, LlmBackendKind, Report, Retention, RunManifest, SimBackendKind,
};
use covclose::tbgen::{generate_template, splice_body, TemplateOptions};

const EXIT_FATAL: u8 = 3;
const EXIT_ERROR: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "covclose",
    version,
    about = "LLM-driven line-coverage closure for Verilog designs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run coverage closure on one design.
    Run(Box<RunArgs>),
    /// Summarize several report.json files (e.g. one per design).
    Summarize {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Print ports, hierarchy and difficulty of a design.
    Inspect {
        #[arg(long)]
        top: Option<String>,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Print the testbench template for a design, with an optional testcase body.
    Template {
        #[arg(long)]
        top: Option<String>,
        /// File whose text is spliced in as the testcase body.
        #[arg(long)]
        body: Option<PathBuf>,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Run manifest (TOML). Flags below override its values.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Design source file; repeat for several.
    #[arg(long = "design", value_name = "FILE")]
    design_files: Vec<PathBuf>,
    #[arg(long)]
    top: Option<String>,
    /// Natural-language specification of the design.
    #[arg(long = "spec", value_name = "FILE")]
    spec_path: Option<PathBuf>,
    #[arg(long, short = 'o')]
    output_dir: Option<PathBuf>,
    /// Replace a previous run in the output directory.
    #[arg(long)]
    overwrite: bool,
    /// Simulator backend.
    #[arg(long, value_enum)]
    backend: Option<SimBackendKind>,
    /// Scenario file for the mock simulator.
    #[arg(long, value_name = "FILE")]
    mock_scenario: Option<PathBuf>,
    /// LLM backend.
    #[arg(long, value_enum)]
    llm_backend: Option<LlmBackendKind>,
    /// Transcript file for the replay LLM backend.
    #[arg(long, value_name = "FILE")]
    transcript: Option<PathBuf>,
    /// Save every LLM exchange of this run as a replayable transcript.
    #[arg(long, value_name = "FILE")]
    record_transcript: Option<PathBuf>,
    /// Directory of prompt template overrides (<name>.txt).
    #[arg(long, value_name = "DIR")]
    prompts_dir: Option<PathBuf>,
    /// Keep only the results tree, or also every simulator workspace.
    #[arg(long, value_enum)]
    retention: Option<Retention>,
    /// Run configuration file (TOML); individual flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    conversations: Option<usize>,
    /// Seeds for the initial constrained-random testcase.
    #[arg(long)]
    seeds: Option<usize>,
    /// Candidates per generation when batching.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Context-pruning token budget.
    #[arg(long)]
    token_budget: Option<usize>,
    #[arg(long)]
    rng_seed: Option<u64>,
    /// First simulation seed; drawn from --rng-seed when unset.
    #[arg(long)]
    base_seed: Option<u64>,
    /// Re-asks after undecodable completions.
    #[arg(long)]
    decode_retries: Option<usize>,
    /// Re-asks after simulator failures.
    #[arg(long)]
    fix_attempts: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    top_p: Option<f64>,
    /// Wall-clock limit per simulation, seconds.
    #[arg(long)]
    sim_timeout: Option<u64>,
    /// Run conversations one after another.
    #[arg(long)]
    serial: bool,
    #[arg(long)]
    clock_period: Option<u64>,
    /// Simulated-time cap of the testbench watchdog.
    #[arg(long)]
    watchdog: Option<u64>,
    #[arg(long)]
    reset_cycles: Option<u64>,

    #[arg(long)]
    no_testplan: bool,
    #[arg(long)]
    enhanced_testplan: bool,
    #[arg(long)]
    no_batched: bool,
    #[arg(long)]
    no_pruning: bool,
}

fn usage(msg: impl std::fmt::Display) -> AppError {
    AppError::Report(covclose::report::ReportError::Manifest(msg.to_string()))
}

fn load_config(path: &PathBuf) -> Result<RunConfig, AppError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn build_manifest(a: &RunArgs) -> Result<RunManifest, AppError> {
    let mut m = match &a.manifest {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            RunManifest::from_toml_str(&text, p.parent().unwrap_or(std::path::Path::new(".")))?
        }
        None => {
            let missing = |what: &str| usage(format!("{what} is required without --manifest"));
            RunManifest {
                design_files: Vec::new(),
                top: a.top.clone().ok_or_else(|| missing("--top"))?,
                spec_path: a.spec_path.clone().ok_or_else(|| missing("--spec"))?,
                backend: SimBackendKind::External,
                llm_backend: LlmBackendKind::Remote,
                config: RunConfig::default(),
                output_dir: a
                    .output_dir
                    .clone()
                    .ok_or_else(|| missing("--output-dir"))?,
                mock_scenario: None,
                transcript: None,
                prompts_dir: None,
                retention: Retention::Results,
            }
        }
    };
    if !a.design_files.is_empty() {
        m.design_files = a.design_files.clone();
    }
    macro_rules! set {
        ($($src:ident => $dst:expr),* $(,)?) => {
            $(if let Some(v) = a.$src.clone() { $dst = v; })*
        };
    }
    if let Some(p) = &a.config {
        m.config = load_config(p)?;
    }
    set!(top => m.top, spec_path => m.spec_path, output_dir => m.output_dir, backend => m.backend,
         llm_backend => m.llm_backend, retention => m.retention);
    if a.mock_scenario.is_some() {
        m.mock_scenario = a.mock_scenario.clone();
    }
    if a.transcript.is_some() {
        m.transcript = a.transcript.clone();
    }
    if a.prompts_dir.is_some() {
        m.prompts_dir = a.prompts_dir.clone();
    }
    let c = &mut m.config;
    set!(max_iterations => c.max_iterations, conversations => c.num_conversations, seeds => c.num_random_seeds,
         batch_size => c.batch_size, token_budget => c.token_budget, rng_seed => c.rng_seed,
         decode_retries => c.decode_retries, fix_attempts => c.fix_attempts, temperature => c.temperature,
         top_p => c.top_p, sim_timeout => c.sim_timeout_s, clock_period => c.template.clock_period_units,
         watchdog => c.template.watchdog_units, reset_cycles => c.template.reset_cycles);
    if a.base_seed.is_some() {
        c.base_seed = a.base_seed;
    }
    if a.serial {
        c.parallel = false;
    }
    if a.no_testplan {
        c.features.testplan = false;
        c.features.enhanced_testplan = false;
    }
    if a.enhanced_testplan {
        if a.no_testplan {
            return Err(usage(
                "--enhanced-testplan cannot be combined with --no-testplan",
            ));
        }
        c.features.testplan = true;
        c.features.enhanced_testplan = true;
    }
    if a.no_batched {
        c.features.batched = false;
    }
    if a.no_pruning {
        c.features.pruning = false;
    }
    if m.design_files.is_empty() {
        return Err(usage("at least one --design file is required"));
    }
    Ok(m)
}

fn run(a: &RunArgs) -> Result<ExitCode, AppError> {
    let m = build_manifest(a)?;
    let opts = RunOptions {
        overwrite: a.overwrite,
        record_transcript: a.record_transcript.clone(),
    };
    let out = run_manifest(&m, &opts)?;
    let r = &out.report;
    println!(
        "{} [{}] {} conversation(s), {} completed, {} fatal",
        r.design.top,
        r.feature_label,
        r.aggregate.conversations,
        r.aggregate.completed,
        r.aggregate.fatal
    );
    for c in &r.conversations {
        println!(
            "  {}: {:.2}% after {} iteration(s), {}",
            c.id,
            c.final_percent,
            c.iterations.len(),
            c.stop_reason
        );
        if let Some(e) = &c.fatal_error {
            println!("    error: {e}");
        }
    }
    if let Some(p) = r.aggregate.mean_final_percent {
        println!("mean final coverage {p:.2}%");
    }
    println!("results in {}", out.output_dir.display());
    Ok(if out.fatal_conversations() > 0 {
        ExitCode::from(EXIT_FATAL)
    } else {
        ExitCode::SUCCESS
    })
}

fn summarize(paths: &[PathBuf], json: bool) -> Result<ExitCode, AppError> {
    let reports = paths
        .iter()
        .map(|p| Report::load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let s = summarize_reports(&reports)?;
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&s).expect("summary serializes")
        );
        return Ok(ExitCode::SUCCESS);
    }
    let fmt = |v: Option<f64>| v.map_or("-".to_owned(), |x| format!("{x:.2}"));
    println!(
        "{:<24} {:<8} {:<10} {:>8} {:>8} {:>8}",
        "design", "level", "features", "mean %", "cross %", "pass@1"
    );
    for d in &s.designs {
        println!(
            "{:<24} {:<8} {:<10} {:>8} {:>8} {:>8}",
            d.top,
            format!("{:?}", d.difficulty),
            d.feature_label,
            fmt(d.mean_final_percent),
            fmt(d.cross_merged_percent),
            fmt(d.pass_at_k.get("pass@1").copied()),
        );
    }
    if let Some(g) = &s.geometric_mean {
        println!("geometric mean {:.2}%", round2(g.value));
        if let Some(n) = &g.note {
            println!("  note: {n}");
        }
    }
    for (k, v) in &s.pass_at_k.pooled {
        println!(
            "{k}: pooled {v:.3}, averaged {}",
            fmt(s.pass_at_k.averaged.get(k).copied())
        );
    }
    println!(
        "tokens {}, runtime {:.1} s",
        s.cost.total_tokens, s.cost.total_runtime_s
    );
    Ok(ExitCode::SUCCESS)
}

fn inspect(files: &[PathBuf], top: Option<&str>) -> Result<ExitCode, AppError> {
    let mut model = load_sources(files)?;
    if let Some(t) = top {
        model = model.with_top(t)?;
    }
    println!("top {}", model.top);
    println!(
        "lines {}, depth {}, difficulty {:?}",
        model.total_lines,
        model.hierarchy_depth,
        model.difficulty()
    );
    for p in extract_top_ports(&model)? {
        println!("  {:<6} {:<10} {}", p.direction.to_string(), p.range_text(), p.name);
    }
    for (name, m) in &model.modules {
        println!(
            "module {name}: {}:{}-{}",
            m.source_span.file.display(),
            m.source_span.start_line,
            m.source_span.end_line
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn template(
    files: &[PathBuf],
    top: Option<&str>,
    body: Option<&PathBuf>,
) -> Result<ExitCode, AppError> {
    let mut model = load_sources(files)?;
    if let Some(t) = top {
        model = model.with_top(t)?;
    }
    let ports = extract_top_ports(&model)?;
    let t = generate_template(&ports, &model.top, TemplateOptions::default()).map_err(usage)?;
    let body = match body {
        Some(p) => {
            std::fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => String::new(),
    };
    print!("{}", splice_body(&t, &body).map_err(usage)?);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run(a) => run(a),
        Command::Summarize { reports, json } => summarize(reports, *json),
        Command::Inspect { top, files } => inspect(files, top.as_deref()),
        Command::Template { top, body, files } => template(files, top.as_deref(), body.as_ref()),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("covclose: {e}");
            match e {
                AppError::Report(covclose::report::ReportError::Manifest(_)) => {
                    ExitCode::from(EXIT_USAGE)
                }
                _ => ExitCode::from(EXIT_ERROR),
            }
        }
    }
}
