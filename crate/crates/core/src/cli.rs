//! The `cpac` command line.
//!
//! Exit codes: 0 success (or passing certificate), 1 failing certificate,
//! 2 usage or validation error, 3 numerical or generation failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bounds;
use crate::data::{
    margin_of, read_dataset_file, write_dataset_file, Dataset, RepresentationMatrix,
};
use crate::error::{Error, Result};
use crate::eval::{bound_inputs_for, certify, recover_w, BoundCertificate, DEFAULT_RANK_TOL};
use crate::solver::{
    default_step0, solve, ConstraintKind, ConstraintSet, Lifted, SolveReport, SolverConfig,
};
use crate::synth::{generate_split, GenConfig, Generated};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CERT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// One flat JSON file describing a run. Optional fields fall back to
/// defaults, and the resolved values are written next to the run outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub d: usize,
    pub d_prime: usize,
    pub n: usize,
    #[serde(default)]
    pub k: Option<usize>,
    pub kappa: f64,
    #[serde(default)]
    pub gamma0: Option<f64>,
    pub constraint: ConstraintKind,
    /// Seeds the planted target.
    pub seed: u64,
    #[serde(default)]
    pub max_rejections: Option<usize>,
    #[serde(default)]
    pub train_seed: Option<u64>,
    #[serde(default)]
    pub test_seed: Option<u64>,
    #[serde(default)]
    pub n_test: Option<usize>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Solver radius (`tau` or `r`); `None` uses the squared effective radius.
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub step0: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub stall_window: Option<usize>,
    #[serde(default)]
    pub rank_tol: Option<f64>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }

    /// Fills every defaulted field except `radius` and `step0`, which depend
    /// on the generated data.
    pub fn resolved(&self) -> Result<Self> {
        let mut r = self.clone();
        let solver = SolverConfig::default();
        r.k = Some(self.k.unwrap_or(1));
        r.gamma0 = Some(self.gamma0.unwrap_or(0.2 * self.kappa * self.kappa));
        r.max_rejections = Some(self.max_rejections.unwrap_or(1000 * self.n.max(1)));
        r.train_seed = Some(self.train_seed.unwrap_or(self.seed));
        r.test_seed = Some(self.test_seed.unwrap_or(self.seed.wrapping_add(1)));
        let epsilon = self.epsilon.unwrap_or(0.05);
        r.epsilon = Some(epsilon);
        r.delta = Some(self.delta.unwrap_or(0.05));
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::invalid("epsilon: must lie in (0, 1)"));
        }
        r.n_test = Some(
            self.n_test
                .unwrap_or_else(|| 1000usize.max((10.0 / epsilon).ceil() as usize)),
        );
        r.max_iters = Some(self.max_iters.unwrap_or(solver.max_iters));
        r.tol = Some(self.tol.unwrap_or(solver.tol));
        r.stall_window = Some(self.stall_window.unwrap_or(solver.stall_window));
        r.rank_tol = Some(self.rank_tol.unwrap_or(DEFAULT_RANK_TOL));
        r.gen_config().validate()?;
        let delta = r.delta.unwrap();
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid("delta: must lie in (0, 1)"));
        }
        if r.train_seed == r.test_seed {
            return Err(Error::invalid("test_seed: must differ from train_seed"));
        }
        Ok(r)
    }

    pub fn gen_config(&self) -> GenConfig {
        GenConfig {
            d: self.d,
            d_prime: self.d_prime,
            n: self.n,
            k: self.k.unwrap_or(1),
            kappa: self.kappa,
            gamma0: self.gamma0,
            constraint: self.constraint,
            seed: self.seed,
            max_rejections: self.max_rejections,
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        let d = SolverConfig::default();
        SolverConfig {
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            step0: self.step0,
            tol: self.tol.unwrap_or(d.tol),
            stall_window: self.stall_window.unwrap_or(d.stall_window),
            ..d
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "cpac",
    version,
    about = "Contrastive metric learning with certified generalization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a planted dataset from a run config.
    Gen(GenArgs),
    /// Solve the relaxed hinge ERM on a dataset.
    Solve(SolveArgs),
    /// Recover Ŵ, measure test error and compare with the risk bound.
    Eval(EvalArgs),
    /// Evaluate one closed-form bound.
    Bound(BoundArgs),
    /// gen → solve → recover → eval in one go.
    Pipeline(PipelineArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Split {
    Train,
    Test,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    split: Split,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    constraint: ConstraintKind,
    /// `auto` (squared effective radius from the dataset metadata) or a number.
    #[arg(long, default_value = "auto")]
    radius: String,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    step0: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    stall_window: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Solve report holding `g_hat` and the constraint.
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Example norm bound; read from the training metadata when omitted.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    rank_tol: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BoundArgs {
    #[command(subcommand)]
    formula: Formula,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case", tag = "formula", content = "inputs")]
enum Formula {
    /// ⌈((5 + 5r²κ²)/ε)² ln(8d/δ)⌉
    SampleComplexity {
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        kappa: f64,
    },
    /// r² α √(ln d / n)
    RademacherTrace {
        #[arg(long)]
        r: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
    },
    /// r² α √(4 ln(2d) / n)
    RademacherL1 {
        #[arg(long)]
        r: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
    },
    /// 2·rad + 5c √(2 ln(8/δ) / n)
    Generalization {
        #[arg(long)]
        rad: f64,
        #[arg(long)]
        c: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        delta: f64,
    },
    /// 2√2 r²κ² √(k ln d / n) + 5c √(2 ln(8/δ) / n)
    MultiNegative {
        #[arg(long)]
        r: f64,
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        c: f64,
        #[arg(long)]
        delta: f64,
    },
    /// 1 + radius·κ² (radius is τ or r, already squared)
    LossBound {
        #[arg(long, value_parser = parse_kind)]
        constraint: ConstraintKind,
        #[arg(long)]
        radius: f64,
        #[arg(long)]
        kappa: f64,
    },
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "run")]
    out_dir: PathBuf,
    /// Print the resolved config and exit without writing anything.
    #[arg(long)]
    dry_run: bool,
}

fn parse_kind(s: &str) -> std::result::Result<ConstraintKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Solve output: the report plus what is needed to evaluate it later.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveFile {
    pub constraint: ConstraintSet,
    pub step0: f64,
    #[serde(flatten)]
    pub report: SolveReport,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Writes one line to stdout; a closed pipe is not an error.
fn emit(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

fn meta_f64(ds: &Dataset, key: &str) -> Result<f64> {
    ds.meta
        .get(key)
        .and_then(serde_json::Value::as_f64)
        .ok_or_else(|| Error::invalid(format!("dataset metadata lacks numeric '{key}'")))
}

fn generate(cfg: &RunConfig, split: Split) -> Result<Generated> {
    let r = cfg.resolved()?;
    let gen = r.gen_config();
    match split {
        Split::Train => generate_split(&gen, r.train_seed.unwrap(), r.n),
        Split::Test => generate_split(&gen, r.test_seed.unwrap(), r.n_test.unwrap()),
    }
}

fn min_margin(g: &Generated) -> Result<f64> {
    g.dataset.samples.iter().try_fold(
        f64::INFINITY,
        |acc, s| Ok(acc.min(margin_of(&g.target, s)?)),
    )
}

fn cmd_gen(args: &GenArgs) -> Result<i32> {
    let cfg = RunConfig::from_file(&args.config)?;
    let out = generate(&cfg, args.split)?;
    write_dataset_file(&out.dataset, &args.out)?;
    let margin = min_margin(&out)?;
    eprintln!(
        "wrote {} samples to {}; min planted margin {margin:.6} ({}); acceptance rate {:.4}; effective radius {:.6}",
        out.dataset.len(),
        args.out.display(),
        if margin >= 1.0 { "ok" } else { "BELOW 1" },
        out.acceptance_rate,
        out.effective_radius
    );
    Ok(EXIT_OK)
}

/// Radius from `auto` or a literal.
fn resolve_radius(spec: &str, ds: &Dataset) -> Result<f64> {
    if spec == "auto" {
        Ok(meta_f64(ds, "effective_radius")?.powi(2))
    } else {
        spec.parse().map_err(|_| {
            Error::invalid(format!("radius: expected 'auto' or a number, got '{spec}'"))
        })
    }
}

fn run_solver(ds: &Dataset, constraint: &ConstraintSet, cfg: &SolverConfig) -> Result<SolveFile> {
    if ds.is_empty() {
        return Err(Error::invalid("cannot solve on an empty dataset"));
    }
    let mut cfg = *cfg;
    if ds.k == 1 {
        let us = ds.lift()?;
        let step0 = cfg
            .step0
            .unwrap_or_else(|| default_step0(Lifted::Single(&us), constraint));
        cfg.step0 = Some(step0);
        let report = solve(Lifted::Single(&us), constraint, &cfg)?;
        Ok(SolveFile {
            constraint: *constraint,
            step0,
            report,
        })
    } else {
        let lists = ds.lift_multi()?;
        let step0 = cfg
            .step0
            .unwrap_or_else(|| default_step0(Lifted::Multi(&lists), constraint));
        cfg.step0 = Some(step0);
        let report = solve(Lifted::Multi(&lists), constraint, &cfg)?;
        Ok(SolveFile {
            constraint: *constraint,
            step0,
            report,
        })
    }
}

fn cmd_solve(args: &SolveArgs) -> Result<i32> {
    let ds = read_dataset_file(&args.data)?;
    let constraint = ConstraintSet::new(args.constraint, resolve_radius(&args.radius, &ds)?)?;
    let d = SolverConfig::default();
    let cfg = SolverConfig {
        max_iters: args.max_iters.unwrap_or(d.max_iters),
        step0: args.step0,
        tol: args.tol.unwrap_or(d.tol),
        stall_window: args.stall_window.unwrap_or(d.stall_window),
        ..d
    };
    let out = run_solver(&ds, &constraint, &cfg)?;
    write_json(&args.out, &out)?;
    eprintln!(
        "best objective {:e} after {} iterations (feasibility residual {:e})",
        out.report.best_objective, out.report.iterations_run, out.report.feasibility_residual
    );
    Ok(EXIT_OK)
}

struct Evaluation {
    certificate: BoundCertificate,
    w_hat: RepresentationMatrix,
    csv: String,
}

fn evaluate(
    solved: &SolveFile,
    train: &Dataset,
    test: &Dataset,
    kappa: f64,
    delta: f64,
    epsilon: f64,
    rank_tol: f64,
) -> Result<Evaluation> {
    let inputs = bound_inputs_for(train, &solved.constraint, kappa, delta, epsilon)?;
    let certificate = certify(
        &solved.report.g_hat,
        train,
        test,
        &inputs,
        &solved.constraint,
        rank_tol,
    )?;
    let w_hat = recover_w(&solved.report.g_hat, rank_tol)?;
    let seed = train
        .meta
        .get("seed")
        .and_then(serde_json::Value::as_u64)
        .unwrap_or(0);
    let csv = format!(
        "{}\n{}\n",
        BoundCertificate::CSV_HEADER,
        certificate.csv_row(solved.constraint.kind(), seed)
    );
    Ok(Evaluation {
        certificate,
        w_hat,
        csv,
    })
}

fn cmd_eval(args: &EvalArgs) -> Result<i32> {
    let solved: SolveFile = read_json(&args.report)?;
    let train = read_dataset_file(&args.train)?;
    let test = read_dataset_file(&args.test)?;
    let kappa = match args.kappa {
        Some(k) => k,
        None => meta_f64(&train, "kappa")?,
    };
    let ev = evaluate(
        &solved,
        &train,
        &test,
        kappa,
        args.delta,
        args.epsilon,
        args.rank_tol,
    )?;
    write_json(&args.out, &ev.certificate)?;
    if let Some(path) = &args.csv {
        fs::write(path, &ev.csv)?;
    }
    report_certificate(&ev.certificate);
    Ok(if ev.certificate.pass {
        EXIT_OK
    } else {
        EXIT_CERT_FAIL
    })
}

fn report_certificate(c: &BoundCertificate) {
    eprintln!(
        "test error {:.6} vs bound {:.6} (rademacher {:.6}, c {:.4}): {}",
        c.empirical_test_error,
        c.generalization_bound,
        c.rademacher_bound,
        c.c,
        if c.pass { "PASS" } else { "FAIL" }
    );
}

fn cmd_bound(args: &BoundArgs) -> Result<i32> {
    let value = match args.formula {
        Formula::SampleComplexity {
            eps,
            delta,
            d,
            r,
            kappa,
        } => {
            json!(bounds::sample_complexity(eps, delta, d, r, kappa)?)
        }
        Formula::RademacherTrace { r, alpha, n, d } => {
            json!(bounds::rademacher_trace(r, alpha, n, d)?)
        }
        Formula::RademacherL1 { r, alpha, n, d } => json!(bounds::rademacher_l1(r, alpha, n, d)?),
        Formula::Generalization { rad, c, n, delta } => {
            json!(bounds::generalization_bound(rad, c, n, delta)?)
        }
        Formula::MultiNegative {
            r,
            kappa,
            k,
            n,
            d,
            c,
            delta,
        } => {
            json!(bounds::multi_negative_bound(r, kappa, k, n, d, c, delta)?)
        }
        Formula::LossBound {
            constraint,
            radius,
            kappa,
        } => {
            json!(bounds::loss_bound_c(
                &ConstraintSet::new(constraint, radius)?,
                kappa
            )?)
        }
    };
    let mut record = serde_json::to_value(&args.formula)?;
    record["value"] = value;
    emit(&serde_json::to_string(&record)?);
    Ok(EXIT_OK)
}

fn cmd_pipeline(args: &PipelineArgs) -> Result<i32> {
    let cfg = RunConfig::from_file(&args.config)?.resolved()?;
    if args.dry_run {
        emit(&serde_json::to_string_pretty(&cfg)?);
        return Ok(EXIT_OK);
    }
    let dir = &args.out_dir;
    fs::create_dir_all(dir)?;
    write_json(&dir.join("config.json"), &cfg)?;

    let train = generate(&cfg, Split::Train)?;
    let test = generate(&cfg, Split::Test)?;
    write_dataset_file(&train.dataset, dir.join("train.jsonl"))?;
    write_dataset_file(&test.dataset, dir.join("test.jsonl"))?;
    eprintln!(
        "generated {} train / {} test samples; min planted margin {:.6}",
        train.dataset.len(),
        test.dataset.len(),
        min_margin(&train)?
    );

    let radius = match cfg.radius {
        Some(r) => r,
        None => train.effective_radius.powi(2),
    };
    let constraint = ConstraintSet::new(cfg.constraint, radius)?;
    let solved = run_solver(&train.dataset, &constraint, &cfg.solver_config())?;
    write_json(&dir.join("report.json"), &solved)?;
    eprintln!(
        "best objective {:e} after {} iterations",
        solved.report.best_objective, solved.report.iterations_run
    );

    let ev = evaluate(
        &solved,
        &train.dataset,
        &test.dataset,
        cfg.kappa,
        cfg.delta.unwrap(),
        cfg.epsilon.unwrap(),
        cfg.rank_tol.unwrap(),
    )?;
    write_json(&dir.join("w_hat.json"), &ev.w_hat)?;
    write_json(&dir.join("certificate.json"), &ev.certificate)?;
    fs::write(dir.join("certificate.csv"), &ev.csv)?;
    report_certificate(&ev.certificate);
    Ok(if ev.certificate.pass {
        EXIT_OK
    } else {
        EXIT_CERT_FAIL
    })
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NumericalFailure { .. } | Error::Generation { .. } => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name) and runs the subcommand,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Pipeline(a) => cmd_pipeline(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_code(&e)
    })
}
