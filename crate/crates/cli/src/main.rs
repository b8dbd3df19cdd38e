//! `fsmc`: run partition-function and PMCMC experiments and write result CSVs.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use factor_smc::annealing::LadderKind;
use factor_smc::decomposition::Decomposition;
use factor_smc::experiments::{
    build_sampler, run_experiment, Experiment, ExperimentConfig, GmrfAcfExperiment, LdaExperiment, LdaMethod,
    Reference, ResultTable, Sampler, UnbiasedExperiment, XyExperiment, ZMethod,
};
use factor_smc::format::parse_ordering;
use factor_smc::models::{read_documents, AdaptedVonMisesProposal, GMRFModel, LDAModel, XYModel};
use factor_smc::par::Exec;
use factor_smc::pmcmc::{partial_blocking_gibbs, Scan};
use factor_smc::smc::trace::{write_summary, write_trace};
use factor_smc::smc::{run_smc, SmcConfig};

#[derive(Parser)]
#[command(name = "fsmc", version, about = "SMC, annealing and PGAS experiments on factor graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// log Z of a periodic XY model by SMC, AIS or ASIR.
    Xy(XyArgs),
    /// A single Gibbs/PGAS chain on a GMRF; writes the tracked values.
    Gmrf(GmrfArgs),
    /// ACF comparison of the GMRF samplers.
    Acf(AcfArgs),
    /// Held-out likelihood of LDA documents.
    Lda(LdaArgs),
    /// Unbiasedness check on a random binary lattice model.
    Unbiased(UnbiasedArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Write the result CSV here instead of stdout (or the config's `output`).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Schedule replicates one at a time.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replicates per setting.
    #[arg(long, default_value_t = 20)]
    runs: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Smc,
    Ais,
    Asir,
}

impl From<MethodArg> for ZMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Smc => ZMethod::Smc,
            MethodArg::Ais => ZMethod::Ais,
            MethodArg::Asir => ZMethod::Asir,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    Gibbs,
    Pgas,
    PgasPb,
    Tree,
}

impl From<SamplerArg> for Sampler {
    fn from(s: SamplerArg) -> Self {
        match s {
            SamplerArg::Gibbs => Sampler::Gibbs,
            SamplerArg::Pgas => Sampler::Pgas,
            SamplerArg::PgasPb => Sampler::PgasPb,
            SamplerArg::Tree => Sampler::Tree,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LdaMethodArg {
    Smc,
    Lrs,
}

#[derive(Args, Clone)]
struct Annealing {
    /// Annealing steps J (the ladder has J + 1 temperatures).
    #[arg(long, default_value_t = 100)]
    temps: usize,
    /// `linear` or `geometric[:ratio]`.
    #[arg(long, default_value = "linear")]
    ladder: String,
    /// Sweeps per intermediate temperature.
    #[arg(long, default_value_t = 1)]
    sweeps: usize,
}

impl Annealing {
    fn ladder(&self) -> Result<LadderKind> {
        match self.ladder.split_once(':') {
            None if self.ladder == "linear" => Ok(LadderKind::Linear),
            None if self.ladder == "geometric" => Ok(LadderKind::Geometric { ratio: 1.05 }),
            Some(("geometric", r)) => Ok(LadderKind::Geometric {
                ratio: r.parse().with_context(|| format!("ladder ratio {r:?}"))?,
            }),
            _ => bail!("unknown ladder {:?}", self.ladder),
        }
    }
}

#[derive(Args)]
struct XyArgs {
    /// Lattice size as RxC.
    #[arg(long, default_value = "8x8", value_parser = parse_size)]
    size: (usize, usize),
    #[arg(long, default_value_t = 1.1)]
    beta: f64,
    /// Open boundary instead of the torus.
    #[arg(long)]
    open: bool,
    /// Orderings for SMC: lr, diag, spiral, snake, rndn[:seed], explicit:<file>.
    #[arg(long, value_delimiter = ',', default_value = "lr")]
    ordering: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "smc")]
    method: Vec<MethodArg>,
    /// SMC particle counts; annealing runs are matched to them.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    particles: Vec<usize>,
    #[command(flatten)]
    annealing: Annealing,
    /// Known log Z to compute MSE against.
    #[arg(long, conflicts_with = "reference_particles")]
    reference: Option<f64>,
    /// Particles for a pooled SMC reference (10 runs per ordering).
    #[arg(long)]
    reference_particles: Option<usize>,
    /// Also do one SMC run and write its binary trace here, plus a step
    /// summary next to it (`<trace>.csv`).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct GmrfModelArgs {
    #[arg(long, default_value = "10x10", value_parser = parse_size)]
    size: (usize, usize),
    #[arg(long, default_value_t = 1.0)]
    sigma_obs: f64,
    #[arg(long, default_value_t = 0.1)]
    sigma_pair: f64,
    /// Observations, one per variable in row-major order; simulated when absent.
    #[arg(long)]
    y: Option<PathBuf>,
    /// Seed for simulating observations.
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
    /// Variables to record (row-major ids).
    #[arg(long, value_delimiter = ',')]
    track: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    particles: usize,
    #[arg(long, default_value_t = 10_000)]
    iters: usize,
    /// Fraction of the chain discarded as burn-in.
    #[arg(long, default_value_t = 0.1)]
    burnin: f64,
    /// Visit blocks in random order.
    #[arg(long)]
    random_scan: bool,
}

impl GmrfModelArgs {
    fn model(&self) -> Result<GMRFModel> {
        let (rows, cols) = self.size;
        Ok(match &self.y {
            Some(path) => {
                let y = parse_order_values(path)?;
                GMRFModel::new(rows, cols, self.sigma_obs, self.sigma_pair, y)?
            }
            None => GMRFModel::simulate(rows, cols, self.sigma_obs, self.sigma_pair, self.model_seed)?,
        })
    }

    fn scan(&self) -> Scan {
        if self.random_scan {
            Scan::Random
        } else {
            Scan::Systematic
        }
    }
}

#[derive(Args)]
struct GmrfArgs {
    #[command(flatten)]
    model: GmrfModelArgs,
    #[arg(long, default_value = "pgas-pb")]
    sampler: SamplerArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Chain CSV destination; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AcfArgs {
    #[command(flatten)]
    model: GmrfModelArgs,
    #[arg(long, value_delimiter = ',', default_value = "gibbs,pgas,pgas-pb,tree")]
    sampler: Vec<SamplerArg>,
    #[arg(long, default_value_t = 50)]
    max_lag: usize,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct LdaArgs {
    #[arg(long, default_value_t = 4)]
    topics: usize,
    #[arg(long, default_value_t = 10)]
    vocab: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Topic-word matrix, one row per topic; synthetic when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Documents, one per line as comma-separated word ids; sampled from the
    /// model when absent.
    #[arg(long)]
    docs: Option<PathBuf>,
    /// Number of synthetic documents.
    #[arg(long, default_value_t = 10)]
    num_docs: usize,
    #[arg(long, default_value_t = 8)]
    doc_len: usize,
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "100")]
    particles: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "smc,lrs")]
    method: Vec<LdaMethodArg>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct UnbiasedArgs {
    #[arg(long, default_value = "4x4", value_parser = parse_size)]
    size: (usize, usize),
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
    #[arg(long, default_value_t = 100)]
    particles: usize,
    #[arg(long, default_value = "lr")]
    ordering: String,
    #[arg(long, value_delimiter = ',', default_value = "smc,ais,asir")]
    method: Vec<MethodArg>,
    #[command(flatten)]
    annealing: Annealing,
    #[command(flatten)]
    run: RunArgs,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected RxC, got {s:?}"))?;
    let r = r.trim().parse().map_err(|e| format!("rows: {e}"))?;
    let c = c.trim().parse().map_err(|e| format!("cols: {e}"))?;
    if r == 0 || c == 0 {
        return Err("lattice dimensions must be positive".into());
    }
    Ok((r, c))
}

fn parse_order_values(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().with_context(|| format!("value {t:?}")))
        .collect()
}

fn exec(common: &Common) -> Exec {
    if common.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

fn config(run: &RunArgs, experiment: Experiment) -> ExperimentConfig {
    ExperimentConfig {
        seed: run.seed,
        replicates: run.runs,
        output: run.common.out.clone(),
        exec: exec(&run.common),
        experiment,
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Run, write the table, and report failed checks.
fn run_config(cfg: &ExperimentConfig) -> Result<bool> {
    let table: ResultTable = run_experiment(cfg)?;
    let mut out = open_output(cfg.output.as_deref())?;
    table.write_csv(&mut out)?;
    out.flush()?;
    let failures = table.failures();
    for f in &failures {
        eprintln!(
            "check failed: {} {} {} n={} replicate={:?}",
            f.experiment, f.method, f.ordering, f.n, f.replicate
        );
    }
    Ok(failures.is_empty())
}

fn xy(a: XyArgs) -> Result<bool> {
    let (rows, cols) = a.size;
    let reference = match (a.reference, a.reference_particles) {
        (Some(log_z), _) => Some(Reference::Value { log_z }),
        (None, Some(particles)) => Some(Reference::Smc { particles, runs: 10 }),
        (None, None) => None,
    };
    let x = XyExperiment {
        rows,
        cols,
        beta: a.beta,
        periodic: !a.open,
        orderings: a.ordering.clone(),
        particles: a.particles.clone(),
        methods: a.method.iter().map(|&m| m.into()).collect(),
        temps: a.annealing.temps,
        sweeps: a.annealing.sweeps,
        ladder: a.annealing.ladder()?,
        reference,
    };
    if let Some(path) = &a.trace {
        write_xy_trace(&x, a.run.seed, path)?;
    }
    run_config(&config(&a.run, Experiment::Xy(x)))
}

fn write_xy_trace(x: &XyExperiment, seed: u64, path: &Path) -> Result<()> {
    let model = XYModel {
        rows: x.rows,
        cols: x.cols,
        periodic: x.periodic,
        beta: x.beta,
        coupling: 1.0,
    };
    let g = Arc::new(model.graph()?);
    let ordering = x.orderings.first().ok_or_else(|| anyhow!("no ordering given"))?;
    let d = Decomposition::build(g, &parse_ordering(ordering, seed)?)?;
    let n = *x.particles.first().ok_or_else(|| anyhow!("no particle count given"))?;
    let out = run_smc(&d, &AdaptedVonMisesProposal, &SmcConfig::new(n, seed))?;
    write_trace(&out.system, BufWriter::new(File::create(path)?))?;
    let mut summary = path.as_os_str().to_owned();
    summary.push(".csv");
    write_summary(&out, BufWriter::new(File::create(PathBuf::from(summary))?))?;
    eprintln!("log Z estimate {} ({} particles, ordering {ordering})", out.z.final_log_z(), n);
    Ok(())
}

fn gmrf(a: GmrfArgs) -> Result<bool> {
    let m = &a.model;
    if !(0.0..1.0).contains(&m.burnin) {
        bail!("burn-in must lie in [0, 1)");
    }
    let model = m.model()?;
    let post = model.exact_posterior()?;
    let g = Arc::new(model.graph()?);
    let n = model.rows * model.cols;
    let track = if m.track.is_empty() {
        (0..n).collect()
    } else {
        m.track.clone()
    };
    if let Some(&v) = track.iter().find(|&&v| v >= n) {
        bail!("tracked variable {v} outside the lattice");
    }
    let (part, kernels) = build_sampler(a.sampler.into(), &g, m.particles)?;
    let chain = partial_blocking_gibbs(&g, &part, &kernels, &model.y, m.iters, a.seed, m.scan(), Some(&track))?;
    let kept = chain.burn_in(m.burnin);
    let mut out = open_output(a.out.as_deref())?;
    write!(out, "iteration")?;
    for v in &track {
        write!(out, ",x{v}")?;
    }
    writeln!(out)?;
    let skipped = chain.iterations() - kept.iterations();
    for t in 0..kept.iterations() {
        write!(out, "{}", skipped + t)?;
        for x in kept.row(t) {
            write!(out, ",{x}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    for (j, &v) in track.iter().enumerate().take(8) {
        let s = kept.series(j);
        let mean = s.iter().sum::<f64>() / s.len().max(1) as f64;
        eprintln!("x{v}: chain mean {mean:.5}, exact {:.5}", post.mean[v]);
    }
    Ok(true)
}

fn acf(a: AcfArgs) -> Result<bool> {
    let m = &a.model;
    let y = m.y.as_deref().map(parse_order_values).transpose()?;
    let (rows, cols) = m.size;
    let x = GmrfAcfExperiment {
        rows,
        cols,
        sigma_obs: m.sigma_obs,
        sigma_pair: m.sigma_pair,
        y,
        model_seed: m.model_seed,
        samplers: a.sampler.iter().map(|&s| s.into()).collect(),
        particles: m.particles,
        iterations: m.iters,
        burnin: m.burnin,
        track: m.track.clone(),
        max_lag: a.max_lag,
        scan: m.scan(),
        ..GmrfAcfExperiment::default()
    };
    run_config(&config(&a.run, Experiment::GmrfAcf(x)))
}

fn lda(a: LdaArgs) -> Result<bool> {
    let model = match &a.model {
        Some(p) => Some(LDAModel::from_csv(File::open(p).with_context(|| format!("opening {}", p.display()))?, a.alpha)?),
        None => None,
    };
    let documents = match &a.docs {
        Some(p) => Some(read_documents(File::open(p).with_context(|| format!("opening {}", p.display()))?)?),
        None => None,
    };
    let x = LdaExperiment {
        topics: a.topics,
        vocab: a.vocab,
        alpha: a.alpha,
        model_seed: a.model_seed,
        docs: a.num_docs,
        doc_len: a.doc_len,
        model,
        documents,
        particles: a.particles.clone(),
        methods: a
            .method
            .iter()
            .map(|m| match m {
                LdaMethodArg::Smc => LdaMethod::Smc,
                LdaMethodArg::Lrs => LdaMethod::Lrs,
            })
            .collect(),
        ..LdaExperiment::default()
    };
    run_config(&config(&a.run, Experiment::Lda(x)))
}

fn unbiased(a: UnbiasedArgs) -> Result<bool> {
    let (rows, cols) = a.size;
    let x = UnbiasedExperiment {
        rows,
        cols,
        model_seed: a.model_seed,
        particles: a.particles,
        ordering: a.ordering.clone(),
        methods: a.method.iter().map(|&m| m.into()).collect(),
        temps: a.annealing.temps,
        sweeps: a.annealing.sweeps,
        ladder: a.annealing.ladder()?,
        ..UnbiasedExperiment::default()
    };
    run_config(&config(&a.run, Experiment::Unbiased(x)))
}

fn run_file(path: &Path, common: Common) -> Result<bool> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if common.out.is_some() {
        cfg.output = common.out.clone();
    }
    if common.sequential {
        cfg.exec = Exec::Sequential;
    }
    run_config(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, common } => run_file(&config, common),
        Command::Xy(a) => xy(a),
        Command::Gmrf(a) => gmrf(a),
        Command::Acf(a) => acf(a),
        Command::Lda(a) => lda(a),
        Command::Unbiased(a) => unbiased(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
