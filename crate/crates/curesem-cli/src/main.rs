//! Command-line driver: fit the cure-rate model to data, discriminate among
//! the nested lifetime sub-models, generate synthetic datasets, and run
//! Monte Carlo studies from JSON design files.
//!
//! Every output file starts with comment lines recording the seed, a hash of
//! the effective configuration, and the software version, so any run can be
//! reproduced exactly. Exit codes: 0 success, 2 configuration or ingestion
//! error, 3 convergence failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use curesem::data::{censoring_cure_guesses, initial_values, read_dataset};
use curesem::em::EmConfig;
use curesem::inference::{compare_models, fit_model_reported, Engine, FitResult};
use curesem::model::{pop_survival, Dataset, Theta};
use curesem::sem::{fit_sem, LifetimeScheme, Selection, SemConfig};
use curesem::simgen::{
    generate_dataset, run_mc_study, run_outlier_study, run_robust_initials, solve_design,
    McSummary, SimDesign,
};

#[derive(Parser)]
#[command(
    name = "curesem",
    version,
    about = "Mixture cure-rate survival model with exponentiated-Weibull lifetimes"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit the model to a `time,delta,group` CSV by EM, stochastic EM, or both
    Fit(FitArgs),
    /// Run a Monte Carlo study described by a JSON design file
    Simulate(SimulateArgs),
    /// Fit every nested lifetime sub-model and compare by LRT and AIC
    Discriminate(DiscriminateArgs),
    /// Generate a synthetic dataset from a JSON design file
    GenData(GenDataArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineArg {
    Em,
    Sem,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    /// Keep the post-burn-in iterate with the highest observed log-likelihood
    Maxloglik,
    /// Average the post-burn-in iterates coordinate-wise
    Average,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    /// Single inverse-CDF draw of the conditional residual lifetime
    A,
    /// Cure-status draw followed by a truncated lifetime draw
    B,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyArg {
    /// Bias / RMSE / coverage study of both engines
    Main,
    /// Far-starting-value divergence comparison
    Initials,
    /// Contaminated-data study of both engines
    Outliers,
}

/// Engine knobs shared by the fitting subcommands.
#[derive(Args)]
struct EngineOpts {
    /// Random seed (drives the stochastic EM chain)
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Stochastic EM chain length; also caps EM iterations
    #[arg(long, default_value_t = 1500)]
    iters: usize,
    /// Stochastic EM iterations discarded before estimate selection
    #[arg(long, default_value_t = 500)]
    burn_in: usize,
    /// Stochastic EM estimate-selection rule
    #[arg(long, value_enum, default_value_t = SelectionArg::Maxloglik)]
    selection: SelectionArg,
    /// Residual-lifetime imputation scheme
    #[arg(long, value_enum, default_value_t = SchemeArg::A)]
    scheme: SchemeArg,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset CSV with columns time, delta, group
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = EngineArg::Both)]
    engine: EngineArg,
    /// Fixed shape used by the initial-value transform
    #[arg(long, default_value_t = 2.0)]
    alpha0: f64,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[command(flatten)]
    opts: EngineOpts,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON study design
    config: PathBuf,
    #[arg(long, value_enum, default_value_t = StudyArg::Main)]
    study: StudyArg,
    /// Override the design's seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Stochastic EM chain length within each replicate
    #[arg(long, default_value_t = 1500)]
    iters: usize,
    #[arg(long, default_value_t = 500)]
    burn_in: usize,
    #[arg(long, value_enum, default_value_t = SelectionArg::Maxloglik)]
    selection: SelectionArg,
    #[arg(long, value_enum, default_value_t = SchemeArg::A)]
    scheme: SchemeArg,
}

#[derive(Args)]
struct DiscriminateArgs {
    /// Dataset CSV with columns time, delta, group
    data: PathBuf,
    /// Engine used for every model fit (em or sem)
    #[arg(long, value_enum, default_value_t = EngineArg::Em)]
    engine: EngineArg,
    #[arg(long, default_value_t = 2.0)]
    alpha0: f64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[command(flatten)]
    opts: EngineOpts,
}

#[derive(Args)]
struct GenDataArgs {
    /// JSON study design
    config: PathBuf,
    /// Override the design's seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

enum CliError {
    /// Configuration, argument, or ingestion problem (exit 2).
    Config(String),
    /// An engine failed to converge or a fit aborted (exit 3).
    Convergence(String),
}

impl CliError {
    fn code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Convergence(_) => ExitCode::from(3),
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Convergence(m) => m,
        }
    }
}

fn config_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Fit(args) => cmd_fit(&args),
        Cmd::Simulate(args) => cmd_simulate(&args),
        Cmd::Discriminate(args) => cmd_discriminate(&args),
        Cmd::GenData(args) => cmd_gen_data(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

// ---------- reproducibility headers ----------

/// FNV-1a hash of the effective configuration, embedded in every output.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn header(seed: u64, config_hash: u64, extra: &[(&str, String)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# seed: {seed}");
    let _ = writeln!(s, "# config: {config_hash:016x}");
    let _ = writeln!(s, "# version: {}", env!("CARGO_PKG_VERSION"));
    for (k, v) in extra {
        let _ = writeln!(s, "# {k}: {v}");
    }
    s
}

fn write_output(dir: &Path, name: &str, header: &str, body: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    let mut bytes = header.as_bytes().to_vec();
    bytes.extend_from_slice(body);
    fs::write(&path, bytes)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(path)
}

// ---------- engine construction ----------

fn sem_config(opts: &EngineOpts) -> Result<SemConfig, CliError> {
    if opts.iters == 0 || opts.burn_in >= opts.iters {
        return Err(CliError::Config(format!(
            "--burn-in ({}) must be smaller than --iters ({})",
            opts.burn_in, opts.iters
        )));
    }
    Ok(SemConfig {
        total_iters: opts.iters,
        burn_in: opts.burn_in,
        selection: match opts.selection {
            SelectionArg::Maxloglik => Selection::MaxLoglik,
            SelectionArg::Average => Selection::PostBurninAverage,
        },
        scheme: match opts.scheme {
            SchemeArg::A => LifetimeScheme::InverseCdf,
            SchemeArg::B => LifetimeScheme::BernoulliThenTruncated,
        },
        seed: opts.seed,
        ..SemConfig::default()
    })
}

fn em_config(opts: &EngineOpts) -> Result<EmConfig, CliError> {
    if opts.iters == 0 {
        return Err(CliError::Config("--iters must be positive".into()));
    }
    Ok(EmConfig { max_iters: opts.iters, ..EmConfig::default() })
}

// ---------- shared ingestion ----------

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    let report = read_dataset(path).map_err(config_err)?;
    if report.dropped_missing > 0 {
        println!(
            "dropped {} row(s) with missing group; analysis uses {} records",
            report.dropped_missing,
            report.dataset.n()
        );
    }
    Ok(report.dataset)
}

/// Censoring-based cure anchors, nudged into the open ordered region the
/// initial-value heuristic requires. Degenerate censoring patterns — a group
/// with no censored records (e.g. a dataset with zero censoring overall), or
/// equal/inverted per-group fractions — would otherwise leave the logistic
/// anchors unsolvable, and both engines must still accept such data.
fn cure_anchors(data: &Dataset) -> Result<(f64, f64), CliError> {
    let (raw_low, raw_high) = censoring_cure_guesses(data).map_err(config_err)?;
    let eps = 0.5 / (data.n() as f64 + 1.0);
    let c_low = raw_low.clamp(eps, 1.0 - eps);
    let c_high = raw_high.clamp(eps, 1.0 - eps);
    if c_high < c_low {
        return Ok((c_low, c_high));
    }
    // Spread the anchors around their midpoint, keeping the
    // decreasing-in-group orientation the heuristic assumes; the engines are
    // free to move away from this nearly flat start.
    let mid = (0.5 * (c_low + c_high)).clamp(2.0 * eps, 1.0 - 2.0 * eps);
    Ok((mid + eps, mid - eps))
}

fn starting_point(data: &Dataset, alpha0: f64) -> Result<Theta, CliError> {
    let guesses = cure_anchors(data)?;
    let init = initial_values(data, alpha0, guesses).map_err(config_err)?;
    Ok(init.theta0)
}

// ---------- fit ----------

fn cure_row_name(x: &[f64]) -> String {
    let joined: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
    format!("pi0_{}", joined.join("_"))
}

fn fit_csv(fit: &FitResult) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let record = |w: &mut csv::Writer<Vec<u8>>,
                  name: String,
                  est: f64,
                  se: f64,
                  ci90: (f64, f64),
                  ci95: (f64, f64)|
     -> Result<(), CliError> {
        w.write_record(&[
            name,
            est.to_string(),
            se.to_string(),
            ci90.0.to_string(),
            ci90.1.to_string(),
            ci95.0.to_string(),
            ci95.1.to_string(),
        ])
        .map_err(config_err)
    };
    w.write_record(["name", "estimate", "se", "ci90_low", "ci90_high", "ci95_low", "ci95_high"])
        .map_err(config_err)?;
    for p in &fit.params {
        record(
            &mut w,
            p.name.clone(),
            p.estimate,
            p.se,
            (p.ci_90.lower, p.ci_90.upper),
            (p.ci_95.lower, p.ci_95.upper),
        )?;
    }
    for cr in &fit.cure_rates_by_group {
        record(
            &mut w,
            cure_row_name(&cr.x),
            cr.estimate,
            cr.se,
            (cr.ci_90.lower, cr.ci_90.upper),
            (cr.ci_95.lower, cr.ci_95.upper),
        )?;
    }
    w.into_inner().map_err(config_err)
}

/// Population survival evaluated at every observed time, one row per record,
/// sorted by group then time (plot-ready).
fn survival_csv(theta: &Theta, data: &Dataset) -> Result<Vec<u8>, CliError> {
    let mut rows: Vec<(f64, f64)> = (0..data.n()).map(|i| (data.x_row(i)[0], data.t(i))).collect();
    rows.sort_by(|a, b| a.partial_cmp(b).expect("finite data"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time", "group", "survival"]).map_err(config_err)?;
    for (g, t) in rows {
        let s = pop_survival(theta, t, &[g]).map_err(config_err)?;
        w.write_record(&[t.to_string(), g.to_string(), s.to_string()])
            .map_err(config_err)?;
    }
    w.into_inner().map_err(config_err)
}

fn fit_header(seed: u64, hash: u64, engine: &str, fit: &FitResult) -> String {
    header(
        seed,
        hash,
        &[
            ("engine", engine.to_string()),
            ("loglik", fit.loglik.to_string()),
            ("aic", fit.aic.to_string()),
            ("converged", fit.converged.to_string()),
        ],
    )
}

fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    // Only the engines that will run get their knobs validated, so e.g.
    // `--engine em --iters 1` is not rejected over the unused burn-in.
    let em_cfg = match args.engine {
        EngineArg::Sem => None,
        _ => Some(em_config(&args.opts)?),
    };
    let sem_cfg = match args.engine {
        EngineArg::Em => None,
        _ => Some(sem_config(&args.opts)?),
    };
    let data = load_dataset(&args.data)?;
    let start = starting_point(&data, args.alpha0)?;
    let hash = fnv1a(
        format!(
            "fit data={} engine={:?} alpha0={} seed={} iters={} burn_in={} selection={:?} scheme={:?}",
            args.data.display(),
            args.engine as u8,
            args.alpha0,
            args.opts.seed,
            args.opts.iters,
            args.opts.burn_in,
            args.opts.selection as u8,
            args.opts.scheme as u8,
        )
        .as_bytes(),
    );
    // One engine failing hard must not silence the other under `both`: the
    // failure is recorded and reported once every requested engine has run.
    let mut failures = Vec::new();

    if let Some(em_cfg) = em_cfg {
        match fit_model_reported(&data, &start, &Engine::Em(em_cfg)) {
            Ok(fit) => {
                let head = fit_header(args.opts.seed, hash, "em", &fit);
                write_output(&args.out, "fit_em.csv", &head, &fit_csv(&fit)?)?;
                write_output(
                    &args.out,
                    "survival_em.csv",
                    &head,
                    &survival_csv(&fit.theta, &data)?,
                )?;
                if !fit.converged {
                    failures.push(format!("EM diverged ({:?})", fit.divergence));
                }
            }
            Err(e) => failures.push(format!("EM fit failed: {e}")),
        }
    }
    if let Some(sem_cfg) = sem_cfg {
        // One plain run yields the chain for the trace file; the inference
        // run below repeats it deterministically under the same seed.
        let chain = fit_sem(&data, &start, &sem_cfg)
            .map(|f| f.chain)
            .map_err(|e| format!("stochastic EM fit failed: {e}"));
        match (chain, fit_model_reported(&data, &start, &Engine::Sem(sem_cfg))) {
            (Ok(chain), Ok(fit)) => {
                let head = fit_header(args.opts.seed, hash, "sem", &fit);
                let mut trace = Vec::new();
                chain.write_csv(&mut trace).map_err(config_err)?;
                write_output(&args.out, "fit_sem.csv", &head, &fit_csv(&fit)?)?;
                write_output(&args.out, "trace_sem.csv", &head, &trace)?;
                write_output(
                    &args.out,
                    "survival_sem.csv",
                    &head,
                    &survival_csv(&fit.theta, &data)?,
                )?;
                if !fit.converged {
                    failures.push(format!("stochastic EM diverged ({:?})", fit.divergence));
                }
            }
            (Err(e), _) => failures.push(e),
            (_, Err(e)) => failures.push(format!("stochastic EM fit failed: {e}")),
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Convergence(failures.join("; ")))
    }
}

// ---------- discriminate ----------

fn cmd_discriminate(args: &DiscriminateArgs) -> Result<(), CliError> {
    let data = load_dataset(&args.data)?;
    let start = starting_point(&data, args.alpha0)?;
    let engine = match args.engine {
        EngineArg::Em => Engine::Em(em_config(&args.opts)?),
        EngineArg::Sem => Engine::Sem(sem_config(&args.opts)?),
        EngineArg::Both => {
            return Err(CliError::Config(
                "discriminate needs a single engine (em or sem)".into(),
            ))
        }
    };
    let hash = fnv1a(
        format!(
            "discriminate data={} engine={:?} alpha0={} seed={}",
            args.data.display(),
            args.engine as u8,
            args.alpha0,
            args.opts.seed
        )
        .as_bytes(),
    );
    let comparison = compare_models(&data, &start, &engine)
        .map_err(|e| CliError::Convergence(format!("model comparison failed: {e}")))?;
    let mut body = Vec::new();
    comparison.write_csv(&mut body).map_err(config_err)?;
    let head = header(args.opts.seed, hash, &[]);
    write_output(&args.out, "discrimination.csv", &head, &body)?;
    match comparison.best_by_aic() {
        Some(best) => println!("best model by AIC: {}", best.fit.sub_model.label()),
        None => println!("no model converged"),
    }
    Ok(())
}

// ---------- simulate ----------

fn load_design(path: &Path, seed_override: Option<u64>) -> Result<SimDesign, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut design: SimDesign = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("invalid design {}: {e}", path.display())))?;
    if let Some(seed) = seed_override {
        design.seed = seed;
    }
    Ok(design)
}

fn summary_body(summary: &McSummary) -> Result<Vec<u8>, CliError> {
    let mut body = Vec::new();
    summary.write_csv(&mut body).map_err(config_err)?;
    Ok(body)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let design = load_design(&args.config, args.seed)?;
    let opts = EngineOpts {
        seed: design.seed,
        iters: args.iters,
        burn_in: args.burn_in,
        selection: args.selection,
        scheme: args.scheme,
    };
    let sem = Engine::Sem(sem_config(&opts)?);
    let em = Engine::Em(EmConfig::default());
    let hash = fnv1a(
        format!(
            "simulate design={design:?} study={:?} iters={} burn_in={} selection={:?} scheme={:?}",
            args.study as u8, args.iters, args.burn_in, args.selection as u8, args.scheme as u8
        )
        .as_bytes(),
    );
    let study_header = |s: &McSummary, engine: &str| {
        header(
            design.seed,
            hash,
            &[
                ("engine", engine.to_string()),
                ("replicates", s.replicates.to_string()),
                ("converged", s.converged.to_string()),
                ("divergence_pct", s.divergence_pct().to_string()),
            ],
        )
    };
    match args.study {
        StudyArg::Main => {
            let s = run_mc_study(&design, &sem).map_err(config_err)?;
            write_output(&args.out, "mc_sem.csv", &study_header(&s, "sem"), &summary_body(&s)?)?;
            let s = run_mc_study(&design, &em).map_err(config_err)?;
            write_output(&args.out, "mc_em.csv", &study_header(&s, "em"), &summary_body(&s)?)?;
        }
        StudyArg::Initials => {
            let r = run_robust_initials(&design, &sem, &em).map_err(config_err)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "replicates",
                "sem_divergent",
                "em_divergent",
                "sem_divergence_pct",
                "em_divergence_pct",
            ])
            .map_err(config_err)?;
            w.write_record(&[
                r.replicates.to_string(),
                r.sem_divergent.to_string(),
                r.em_divergent.to_string(),
                r.sem_divergence_pct().to_string(),
                r.em_divergence_pct().to_string(),
            ])
            .map_err(config_err)?;
            let body = w.into_inner().map_err(config_err)?;
            write_output(&args.out, "robust.csv", &header(design.seed, hash, &[]), &body)?;
        }
        StudyArg::Outliers => {
            let (sem_summary, em_summary) =
                run_outlier_study(&design, &sem, &em).map_err(config_err)?;
            write_output(
                &args.out,
                "outlier_sem.csv",
                &study_header(&sem_summary, "sem"),
                &summary_body(&sem_summary)?,
            )?;
            write_output(
                &args.out,
                "outlier_em.csv",
                &study_header(&em_summary, "em"),
                &summary_body(&em_summary)?,
            )?;
        }
    }
    Ok(())
}

// ---------- gen-data ----------

fn cmd_gen_data(args: &GenDataArgs) -> Result<(), CliError> {
    let design = load_design(&args.config, args.seed)?;
    let solved = solve_design(&design).map_err(config_err)?;
    let mut rng = ChaCha12Rng::seed_from_u64(design.seed);
    let data = generate_dataset(&solved, &mut rng);
    let hash = fnv1a(format!("gen-data design={design:?}").as_bytes());

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["time", "delta", "group"]).map_err(config_err)?;
    for i in 0..data.n() {
        w.write_record(&[
            data.t(i).to_string(),
            u8::from(data.delta(i)).to_string(),
            data.x_row(i)[0].to_string(),
        ])
        .map_err(config_err)?;
    }
    let body = w.into_inner().map_err(config_err)?;
    write_output(&args.out, "dataset.csv", &header(design.seed, hash, &[]), &body)?;

    // Sidecar: the generating truth, solved coefficients and censoring rates.
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "value"]).map_err(config_err)?;
    let p = &solved.population;
    let mut rows: Vec<(String, f64)> = vec![
        ("beta0".into(), p.beta[0]),
        ("beta1".into(), p.beta[1]),
        ("alpha".into(), p.theta.ew.alpha()),
        ("k".into(), p.theta.ew.k()),
        ("lambda".into(), p.theta.ew.lambda()),
    ];
    for j in 0..4 {
        rows.push((format!("gamma{}", j + 1), p.gammas[j]));
    }
    for j in 0..4 {
        rows.push((format!("pi0{}", j + 1), p.cure_rates[j]));
    }
    for (name, value) in rows {
        w.write_record(&[name, value.to_string()]).map_err(config_err)?;
    }
    let body = w.into_inner().map_err(config_err)?;
    write_output(&args.out, "truth.csv", &header(design.seed, hash, &[]), &body)?;
    Ok(())
}
