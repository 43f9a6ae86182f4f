//! `rknock`: command-line front end for robust knockoff selection.

use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use robust_knockoffs::evaluation::WfdrCutoff;
use robust_knockoffs::filter::StatisticKind;
use robust_knockoffs::io::{self, CsvSchema};
use robust_knockoffs::knockoffs::KnockoffMethod;
use robust_knockoffs::pipeline::{self, Input, RunConfig};
use robust_knockoffs::robust::{Baseline, ScoreMode, WeightKind};
use robust_knockoffs::sim::{SimCovariance, SimDesign, SimModel};
use robust_knockoffs::Error;

#[derive(Parser)]
#[command(name = "rknock", version, about = "Knockoff variable selection with FDR control")]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, required by every stochastic command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Input file (CSV or an upstream JSON envelope); `-` or absent reads stdin.
    #[arg(long, short, global = true)]
    input: Option<PathBuf>,
    /// Output file; absent writes stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build knockoffs and score them with the diagnostics.
    Knockoff(KnockoffArgs),
    /// One knockoff filter pass at a single FDR level.
    Select(SelectArgs),
    /// Selection probabilities from repeated subsampling.
    RobustSelect(RobustArgs),
    /// Weighted selection scores over an FDR grid.
    Wfdr(WfdrArgs),
    /// Per-group PCA of the input columns.
    GroupPca(PcaArgs),
    /// Draw a synthetic linear design with known active set.
    Simulate(SimArgs),
    /// Forecast windows, error metrics and model confidence sets.
    Evaluate(EvalArgs),
    /// Summarize an upstream JSON result.
    Report(ReportArgs),
    /// Run the configured end-to-end study.
    Pipeline,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Equi,
    Asdp,
    Group,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatArg {
    Lcd,
    Lsm,
    GroupLsm,
}

#[derive(Args, Default)]
struct DataArgs {
    /// Response column name in CSV input.
    #[arg(long)]
    response: Option<String>,
    /// ISO-8601 date column in CSV input.
    #[arg(long)]
    date_column: Option<String>,
    /// CSV with columns variable,group_id.
    #[arg(long)]
    group_map: Option<PathBuf>,
}

#[derive(Args, Default)]
struct KnockArgs {
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long, value_enum)]
    statistic: Option<StatArg>,
    /// Add one to the false-discovery count (knockoff+).
    #[arg(long)]
    plus: bool,
    #[arg(long)]
    cv_folds: Option<usize>,
}

#[derive(Args)]
struct KnockoffArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    knock: KnockArgs,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    knock: KnockArgs,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct RobustArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    knock: KnockArgs,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Number of subsampling repetitions.
    #[arg(long = "reps", short = 'B')]
    b: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightArg {
    Unweighted,
    Linear,
    Exp,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Probability,
    Rank,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Method1,
    Single,
}

#[derive(Args)]
struct WfdrArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    knock: KnockArgs,
    /// Comma-separated, strictly increasing FDR levels.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    weights: Option<WeightArg>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    baseline: Option<BaselineArg>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long = "reps", short = 'B')]
    b: Option<usize>,
    /// Reuse subsamples and knockoffs across the grid.
    #[arg(long)]
    shared: bool,
    /// Keep the m highest scores.
    #[arg(long, conflicts_with = "threshold")]
    top_m: Option<usize>,
    /// Keep scores at or above this value.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct PcaArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    var_threshold: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CovArg {
    Identity,
    Equicorr,
    Ar1,
    Block,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, value_enum)]
    covariance: Option<CovArg>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long)]
    active: Option<usize>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Also write the simulated data as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    mcs_alpha: Option<f64>,
    #[arg(long)]
    mcs_b: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
}

/// Failure carrying its exit code: 2 for validation, 3 for computation.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_validation() { 2 } else { 3 };
        Failure { code, message: format!("{}: {e}", e.module()) }
    }
}

fn validation(msg: impl Into<String>) -> Failure {
    Failure { code: 2, message: msg.into() }
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| validation(format!("config {}: {e}", p.display())))?;
            Ok(RunConfig::from_json(&text)?)
        }
        None => Ok(RunConfig::default()),
    }
}

fn apply_data(cfg: &mut RunConfig, a: &DataArgs) {
    if let Some(r) = &a.response {
        cfg.response = r.clone();
    }
    if a.date_column.is_some() {
        cfg.date_column = a.date_column.clone();
    }
    if a.group_map.is_some() {
        cfg.group_map = a.group_map.clone();
    }
}

fn apply_knock(cfg: &mut RunConfig, a: &KnockArgs) -> Result<(), Failure> {
    let k = &mut cfg.knockoff;
    if let Some(bs) = a.block_size {
        if let KnockoffMethod::Asdp { block_size } = &mut k.method {
            *block_size = bs;
        }
    }
    match a.method {
        Some(MethodArg::Equi) => k.method = KnockoffMethod::Equi,
        Some(MethodArg::Asdp) => k.method = KnockoffMethod::Asdp { block_size: a.block_size.unwrap_or(10) },
        // groups are attached once the data columns are known
        Some(MethodArg::Group) if !matches!(k.method, KnockoffMethod::GroupEqui { .. }) => {
            if cfg.group_map.is_none() {
                return Err(validation("--method group needs --group-map"));
            }
            k.method = KnockoffMethod::GroupEqui { groups: robust_knockoffs::GroupSpec::singletons(1) };
        }
        Some(MethodArg::Group) => {}
        None => {}
    }
    if let Some(s) = a.statistic {
        k.statistic = match s {
            StatArg::Lcd => StatisticKind::Lcd,
            StatArg::Lsm => StatisticKind::Lsm,
            StatArg::GroupLsm => StatisticKind::GroupLsm,
        };
    }
    if a.plus {
        k.plus_variant = true;
    }
    if let Some(f) = a.cv_folds {
        k.cv_folds = f;
    }
    Ok(())
}

fn read_source(path: Option<&PathBuf>) -> Result<String, Failure> {
    let mut text = String::new();
    match path {
        Some(p) if p.as_os_str() != "-" => {
            text = std::fs::read_to_string(p).map_err(|e| validation(format!("input {}: {e}", p.display())))?;
        }
        _ => {
            std::io::stdin().read_to_string(&mut text).map_err(|e| validation(format!("stdin: {e}")))?;
        }
    }
    if text.trim().is_empty() {
        return Err(validation("input is empty"));
    }
    Ok(text)
}

fn read_input(cli: &Cli, cfg: &RunConfig) -> Result<Input, Failure> {
    let path = cli.input.as_ref().or(cfg.data.as_ref());
    let text = read_source(path)?;
    let schema = CsvSchema { response: Some(cfg.response.clone()), date: cfg.date_column.clone(), features: None };
    let mut input = Input::parse(&text, &schema);
    if let Err(Error::MissingColumn(_)) = &input {
        // unsupervised commands accept CSV without a response column
        input = Input::parse(&text, &CsvSchema { response: None, ..schema });
    }
    Ok(input?)
}

/// Attach the group map to group knockoffs now that column names are known.
fn resolve_groups(cfg: &mut RunConfig, input: &Input) -> Result<Option<robust_knockoffs::GroupSpec>, Failure> {
    let groups = match &cfg.group_map {
        Some(p) => Some(io::load_group_map(p, input.x.names())?),
        None => None,
    };
    if let KnockoffMethod::GroupEqui { groups: g } = &mut cfg.knockoff.method {
        match &groups {
            Some(spec) => *g = spec.clone(),
            None if g.len() != input.x.ncols() => return Err(validation("group knockoffs need a group map")),
            None => {}
        }
    }
    Ok(groups)
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure { code: 3, message: format!("{}: {e}", p.display()) }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure { code: 3, message: format!("stdout: {e}") })
        }
    }
}

fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = load_config(cli.config.as_ref())?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure { code: 3, message: format!("thread pool: {e}") })?;
    }

    let out = match &cli.command {
        Command::Simulate(a) => {
            let seed = cfg.seed.unwrap_or(0);
            let mut d = cfg.simulate.clone().unwrap_or_else(|| SimDesign::benchmark(seed));
            d.n = a.n.unwrap_or(d.n);
            d.p = a.p.unwrap_or(d.p);
            d.active_count = a.active.unwrap_or(d.active_count);
            d.amplitude = a.amplitude.unwrap_or(d.amplitude);
            d.noise_sd = a.noise_sd.unwrap_or(d.noise_sd);
            d.model = SimModel::Linear;
            let rho = a.rho.unwrap_or(0.3);
            if let Some(c) = a.covariance {
                d.covariance = match c {
                    CovArg::Identity => SimCovariance::Identity,
                    CovArg::Equicorr => SimCovariance::Equicorr { rho },
                    CovArg::Ar1 => SimCovariance::Ar1 { rho },
                    CovArg::Block => SimCovariance::BlockDiag { block_size: a.block_size.unwrap_or(5), rho },
                };
            } else if let Some(r) = a.rho {
                match &mut d.covariance {
                    SimCovariance::Equicorr { rho }
                    | SimCovariance::Ar1 { rho }
                    | SimCovariance::BlockDiag { rho, .. } => *rho = r,
                    SimCovariance::Identity => {}
                }
            }
            cfg.simulate = Some(d);
            cfg.validate()?;
            let env = pipeline::cmd_simulate(&cfg)?;
            if let Some(path) = &a.csv {
                let input = Input::parse(&env.to_string(), &CsvSchema::default())?;
                let file = std::fs::File::create(path).map_err(|e| validation(format!("{}: {e}", path.display())))?;
                io::write_dataset(file, &input.x, input.y.as_deref().map(|y| ("y", y)), None)?;
            }
            json_text(&env)
        }
        Command::Knockoff(a) => {
            apply_data(&mut cfg, &a.data);
            apply_knock(&mut cfg, &a.knock)?;
            cfg.validate()?;
            cfg.require_seed()?;
            let input = read_input(&cli, &cfg)?;
            resolve_groups(&mut cfg, &input)?;
            json_text(&pipeline::cmd_knockoff(&input, &cfg)?)
        }
        Command::Select(a) => {
            apply_data(&mut cfg, &a.data);
            apply_knock(&mut cfg, &a.knock)?;
            cfg.alpha = a.alpha.unwrap_or(cfg.alpha);
            cfg.validate()?;
            cfg.require_seed()?;
            let input = read_input(&cli, &cfg)?;
            resolve_groups(&mut cfg, &input)?;
            json_text(&pipeline::cmd_select(&input, &cfg)?)
        }
        Command::RobustSelect(a) => {
            apply_data(&mut cfg, &a.data);
            apply_knock(&mut cfg, &a.knock)?;
            cfg.alpha = a.alpha.unwrap_or(cfg.alpha);
            cfg.theta = a.theta.unwrap_or(cfg.theta);
            cfg.b = a.b.unwrap_or(cfg.b);
            cfg.validate()?;
            cfg.require_seed()?;
            let input = read_input(&cli, &cfg)?;
            resolve_groups(&mut cfg, &input)?;
            json_text(&pipeline::cmd_robust_select(&input, &cfg)?)
        }
        Command::Wfdr(a) => {
            apply_data(&mut cfg, &a.data);
            apply_knock(&mut cfg, &a.knock)?;
            if let Some(g) = &a.grid {
                cfg.fdr_grid = g.clone();
            }
            if let Some(w) = a.weights {
                cfg.weights = match w {
                    WeightArg::Unweighted => WeightKind::Unweighted,
                    WeightArg::Linear => WeightKind::LinearDecay,
                    WeightArg::Exp => WeightKind::ExpDecay,
                };
            }
            if let Some(m) = a.mode {
                cfg.mode = match m {
                    ModeArg::Probability => ScoreMode::Probability,
                    ModeArg::Rank => ScoreMode::Rank,
                };
            }
            if let Some(b) = a.baseline {
                cfg.baseline = match b {
                    BaselineArg::Method1 => Baseline::Method1,
                    BaselineArg::Single => Baseline::SinglePass,
                };
            }
            cfg.theta = a.theta.unwrap_or(cfg.theta);
            cfg.b = a.b.unwrap_or(cfg.b);
            if a.shared {
                cfg.shared_subsamples = true;
            }
            if let Some(m) = a.top_m {
                cfg.cutoff = Some(WfdrCutoff::TopM { m });
            }
            if let Some(value) = a.threshold {
                cfg.cutoff = Some(WfdrCutoff::Threshold { value });
            }
            cfg.validate()?;
            cfg.require_seed()?;
            let input = read_input(&cli, &cfg)?;
            resolve_groups(&mut cfg, &input)?;
            json_text(&pipeline::cmd_wfdr(&input, &cfg)?)
        }
        Command::GroupPca(a) => {
            apply_data(&mut cfg, &a.data);
            cfg.pca.cap = a.cap.unwrap_or(cfg.pca.cap);
            cfg.pca.var_threshold = a.var_threshold.unwrap_or(cfg.pca.var_threshold);
            cfg.validate()?;
            if cfg.group_map.is_none() {
                return Err(validation("group-pca needs --group-map"));
            }
            let input = read_input(&cli, &cfg)?;
            let groups = resolve_groups(&mut cfg, &input)?.expect("group map checked above");
            json_text(&pipeline::cmd_group_pca(&input, &groups, &cfg)?)
        }
        Command::Evaluate(a) => {
            apply_data(&mut cfg, &a.data);
            cfg.evaluation.mcs_alpha = a.mcs_alpha.unwrap_or(cfg.evaluation.mcs_alpha);
            cfg.evaluation.mcs_b = a.mcs_b.unwrap_or(cfg.evaluation.mcs_b);
            cfg.validate()?;
            cfg.require_seed()?;
            let input = read_input(&cli, &cfg)?;
            let groups = resolve_groups(&mut cfg, &input)?;
            json_text(&pipeline::cmd_evaluate(&input, groups.as_ref(), &cfg)?)
        }
        Command::Report(a) => {
            let text = read_source(cli.input.as_ref())?;
            let upstream: Value =
                serde_json::from_str(&text).map_err(|e| validation(format!("report input is not JSON: {e}")))?;
            let rep = pipeline::cmd_report(&upstream, &cfg)?;
            match a.format {
                FormatArg::Json => json_text(&rep),
                FormatArg::Csv => pipeline::report_csv(&rep)?,
            }
        }
        Command::Pipeline => {
            if let Some(p) = &cli.input {
                cfg.data = Some(p.clone());
            }
            json_text(&pipeline::run_pipeline(&cfg)?)
        }
    };
    emit(cli.output.as_ref(), &out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
