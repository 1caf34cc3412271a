//! `reachpac`: sample a system, fit an enclosing ellipsoid, certify it,
//! and reproduce the certification-method comparison studies.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use reachpac_cli::config::ExperimentConfig;
use reachpac_cli::experiments::{
    self, derive_seed, run_fig2, run_fig3, ComparisonMode, ExperimentError,
};
use reachpac_cli::io;
use reachpac_core::certify::{self, CertifyError, PacCertificate};
use reachpac_core::dynamics::draw_samples;
use reachpac_core::ellipsoid::{fit_mvee, SetError};
use reachpac_core::equivalence::{
    check_tail_inversion_identity, check_threshold_equality, describe_report,
    joint_parameterization, EquivalenceError, JointParams, DEFAULT_SAMPLE_CAP,
};
use reachpac_core::special::Probability;

/// Data-driven reachable-set estimates with PAC certificates.
#[derive(Parser)]
#[command(name = "reachpac", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw terminal-state samples and write them as CSV.
    Sample {
        /// Experiment configuration (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the configured master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of samples (default: the configured training count).
        #[arg(long)]
        n: Option<usize>,
        /// Seed-stream purpose tag (0 = fitting stream).
        #[arg(long, default_value_t = 0)]
        stream: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the minimum-volume enclosing ellipsoid of a sample CSV.
    Fit {
        #[arg(long)]
        samples: PathBuf,
        /// Relative optimality tolerance of the fit.
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        /// Output JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Certify a fitted set against fresh samples.
    Certify {
        #[arg(long)]
        ellipsoid: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long)]
        beta: f64,
        /// Error rate for split-conformal / accuracy for scenario-discard.
        #[arg(long)]
        alpha: Option<f64>,
        /// Also write the certificate JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// For split-conformal and scenario-discard: write the updated
        /// set JSON here.
        #[arg(long)]
        out_set: Option<PathBuf>,
    },
    /// Verify the equivalence results relating the certifiers.
    Bridge {
        #[arg(long, default_value_t = 1e-9)]
        beta: f64,
        /// Cap on the joint sample count search.
        #[arg(long, default_value_t = DEFAULT_SAMPLE_CAP)]
        s_cap: u64,
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Holdout vs empirical-conformal accuracy distribution study.
    Fig2 {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Split-conformal vs scenario-discarding set-update study.
    Fig3 {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Holdout,
    EmpiricalConformal,
    SplitConformal,
    ScenarioDiscard,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Large,
    Small,
}

/// Exit codes: 0 success, 2 usage, 3 data degeneracy, 4 statistical
/// precondition failure, 1 anything else.
#[derive(Debug)]
struct AppError {
    code: u8,
    message: String,
}

impl AppError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn of(code: u8, err: impl std::fmt::Display) -> Self {
        Self {
            code,
            message: err.to_string(),
        }
    }
}

impl From<ExperimentError> for AppError {
    fn from(e: ExperimentError) -> Self {
        let code = match &e {
            ExperimentError::Set(SetError::DegenerateData)
            | ExperimentError::Set(SetError::TooFewSamples { .. }) => 3,
            ExperimentError::Certify(CertifyError::InsufficientCalibration { .. })
            | ExperimentError::Certify(CertifyError::SizingInfeasible { .. }) => 4,
            ExperimentError::Config(_) => 2,
            _ => 1,
        };
        AppError::of(code, e)
    }
}

impl From<CertifyError> for AppError {
    fn from(e: CertifyError) -> Self {
        let code = match &e {
            CertifyError::InsufficientCalibration { .. }
            | CertifyError::SizingInfeasible { .. } => 4,
            CertifyError::Set(SetError::DegenerateData) => 3,
            CertifyError::EmptyBatch => 2,
            _ => 1,
        };
        AppError::of(code, e)
    }
}

impl From<SetError> for AppError {
    fn from(e: SetError) -> Self {
        let code = match &e {
            SetError::DegenerateData | SetError::TooFewSamples { .. } => 3,
            _ => 1,
        };
        AppError::of(code, e)
    }
}

impl From<io::IoError> for AppError {
    fn from(e: io::IoError) -> Self {
        AppError::of(1, e)
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::of(1, e)
    }
}

/// Writes a stdout line, exiting quietly when the reader closed the pipe.
fn print_line(args: std::fmt::Arguments) {
    use std::io::Write;
    let mut out = std::io::stdout();
    if out
        .write_fmt(args)
        .and_then(|()| out.write_all(b"\n"))
        .is_err()
    {
        std::process::exit(0);
    }
}

macro_rules! outln {
    ($($t:tt)*) => { print_line(format_args!($($t)*)) };
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}

fn load_config(path: &Option<PathBuf>, seed: Option<u64>) -> Result<ExperimentConfig, AppError> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p).map_err(|e| AppError::usage(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.sampling.seed = s;
    }
    Ok(cfg)
}

fn prob(value: f64, what: &str) -> Result<Probability, AppError> {
    Probability::new(value)
        .map_err(|_| AppError::usage(format!("{what} must lie in [0,1], got {value}")))
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Sample {
            config,
            seed,
            n,
            stream,
            out,
        } => {
            let cfg = load_config(&config, seed)?;
            let n = n.unwrap_or(cfg.experiment.n_train);
            if n == 0 {
                return Err(AppError::usage("--n must be at least 1"));
            }
            let sys = cfg
                .system_spec()
                .map_err(|e| AppError::usage(e.to_string()))?;
            let samp = cfg.sampling_spec(derive_seed(cfg.sampling.seed, stream));
            let batch = draw_samples(&sys, &samp, n).map_err(|e| AppError::of(1, e))?;
            let mut buf = Vec::new();
            io::write_samples_csv(&mut buf, &batch)?;
            fs::write(&out, buf)?;
            eprintln!("wrote {} samples to {}", batch.len(), out.display());
            Ok(())
        }
        Command::Fit { samples, tol, out } => {
            let file = fs::File::open(&samples)?;
            let batch = io::read_samples_csv(std::io::BufReader::new(file))?;
            let set = fit_mvee(&batch, tol)?;
            fs::write(&out, io::ellipsoid_to_json(&set)?)?;
            eprintln!(
                "fitted {}-dimensional set over {} samples (volume {:.6})",
                set.dim(),
                batch.len(),
                set.volume()
            );
            Ok(())
        }
        Command::Certify {
            ellipsoid,
            samples,
            method,
            beta,
            alpha,
            out,
            out_set,
        } => {
            let set = io::ellipsoid_from_json(&fs::read_to_string(&ellipsoid)?)?;
            let file = fs::File::open(&samples)?;
            let batch = io::read_samples_csv(std::io::BufReader::new(file))?;
            let beta = prob(beta, "--beta")?;
            let need_alpha = || {
                alpha
                    .ok_or_else(|| AppError::usage("--alpha is required for this method"))
                    .and_then(|a| prob(a, "--alpha"))
            };
            let (cert, updated): (PacCertificate, Option<_>) = match method {
                MethodArg::Holdout => (certify::holdout_certify(&set, &batch, beta)?, None),
                MethodArg::EmpiricalConformal => (
                    certify::empirical_conformal_certify(&set, &batch, beta)?,
                    None,
                ),
                MethodArg::SplitConformal => {
                    let (updated, cert) =
                        certify::split_conformal_certify(&set, &batch, need_alpha()?, beta)?;
                    (cert, Some(updated))
                }
                MethodArg::ScenarioDiscard => {
                    let (updated, cert) =
                        certify::scenario_discard_certify(&set, &batch, need_alpha()?, beta)?;
                    (cert, Some(updated))
                }
            };
            let json = io::certificate_to_json(&cert)?;
            outln!("{json}");
            if let Some(path) = out {
                fs::write(path, &json)?;
            }
            if let (Some(path), Some(updated)) = (out_set, updated) {
                fs::write(path, io::ellipsoid_to_json(&updated)?)?;
            }
            Ok(())
        }
        Command::Bridge { beta, s_cap, json } => run_bridge(beta, s_cap, json),
        Command::Fig2 {
            config,
            seed,
            out_dir,
        } => {
            let cfg = load_config(&config, seed)?;
            cfg.validate().map_err(|e| AppError::usage(e.to_string()))?;
            let study = run_fig2(&cfg)?;
            experiments::write_fig2_outputs(&study, &out_dir)?;
            for (h, c) in study.paired() {
                outln!(
                    "run {:>3}: k = {:>3}, eps(holdout) = {}, eps(conformal) = {}",
                    h.run_id,
                    h.violations,
                    io::fmt_g17(h.epsilon),
                    io::fmt_g17(c.epsilon)
                );
            }
            eprintln!("wrote {}", out_dir.join("fig2.csv").display());
            Ok(())
        }
        Command::Fig3 {
            mode,
            config,
            seed,
            out_dir,
        } => {
            let cfg = load_config(&config, seed)?;
            cfg.validate().map_err(|e| AppError::usage(e.to_string()))?;
            let mode = match mode {
                ModeArg::Large => ComparisonMode::Large,
                ModeArg::Small => ComparisonMode::Small,
            };
            let study = run_fig3(&cfg, mode)?;
            experiments::write_fig3_outputs(&study, &out_dir)?;
            for row in &study.rows {
                outln!(
                    "{:<18} removed {:>5} of {:>5}, volume {} -> {}",
                    row.method,
                    row.removed_count,
                    row.calib_size,
                    io::fmt_g17(row.volume_before),
                    io::fmt_g17(row.volume_after)
                );
            }
            eprintln!(
                "wrote {} and {}",
                out_dir
                    .join(format!("fig3_{}.csv", study.mode.name()))
                    .display(),
                out_dir
                    .join(format!("fig3_{}.svg", study.mode.name()))
                    .display()
            );
            Ok(())
        }
    }
}

fn run_bridge(beta: f64, s_cap: u64, json: bool) -> Result<(), AppError> {
    let beta_p = prob(beta, "--beta")?;

    // tail-inversion identity across a (k, M) grid
    let mut identity_reports = Vec::new();
    for &k in &[0u64, 1, 5, 50] {
        for &m in &[10u64, 100, 1500, 72347] {
            if k >= m {
                continue;
            }
            let r = check_tail_inversion_identity(k, m, beta_p).map_err(|e| AppError::of(1, e))?;
            identity_reports.push((k, m, r));
        }
    }

    // joint parameterization; tight confidences exhaust the cap and
    // carry the deepest iterate instead of a fixed point
    let (joint, joint_exhausted): (JointParams, bool) = match joint_parameterization(beta_p, s_cap)
    {
        Ok(p) => (p, false),
        Err(EquivalenceError::NoFixedPoint { last, .. }) => (last, true),
        Err(e) => return Err(AppError::of(4, e)),
    };

    // synthetic matched-index batch: thresholds must agree bitwise
    let synthetic = synthetic_threshold_check()?;

    if json {
        #[derive(serde::Serialize)]
        struct BridgeDoc {
            identity: Vec<io::ReportDoc>,
            joint: io::JointParamsDoc,
            joint_fixed_point: bool,
            threshold_check: io::ReportDoc,
        }
        let doc = BridgeDoc {
            identity: identity_reports
                .iter()
                .map(|(_, _, r)| io::ReportDoc::from(r))
                .collect(),
            joint: io::JointParamsDoc::from(&joint),
            joint_fixed_point: !joint_exhausted,
            threshold_check: io::ReportDoc::from(&synthetic),
        };
        outln!("{}", io::to_json_g17(&doc)?);
    } else {
        outln!("tail-inversion identity (beta = {beta}):");
        let mut all_pass = true;
        for (k, m, r) in &identity_reports {
            all_pass &= r.pass;
            outln!("  k={k:<5} M={m:<6} {}", describe_report(r));
        }
        outln!(
            "joint parameterization: S = {}, eps = {}, k_discard = {}, residuals = [{}, {}]{}",
            joint.samples,
            io::fmt_g17(joint.epsilon),
            joint.k_discard,
            io::fmt_g17(joint.residuals[0]),
            io::fmt_g17(joint.residuals[1]),
            if joint_exhausted {
                " (no exact fixed point below the cap; deepest iterate shown)"
            } else {
                ""
            }
        );
        outln!("threshold equality (synthetic matched index):");
        outln!("  {}", describe_report(&synthetic));
        if !all_pass || !synthetic.pass {
            return Err(AppError::of(4, "an equivalence check failed"));
        }
    }
    Ok(())
}

/// Matched-index threshold comparison on a deterministic synthetic batch.
fn synthetic_threshold_check() -> Result<reachpac_core::equivalence::EquivalenceReport, AppError> {
    use reachpac_core::dynamics::{
        DisturbanceModel, Frozen, InitialDistribution, SamplingSpec, SystemSpec,
    };
    use reachpac_core::ellipsoid::Ellipsoid;

    let s = 999u64;
    let k = 49u64;
    let eps = (k as f64 + 1.5) / (s as f64 + 1.0);
    let params = JointParams {
        samples: s,
        epsilon: eps,
        beta: 1e-9,
        k_discard: k,
        residuals: [0.0, 0.0],
    };
    let sys = SystemSpec::new(Frozen { dim: 2 }, 0.0, 1.0, 1.0).map_err(|e| AppError::of(1, e))?;
    let samp = SamplingSpec {
        initial: InitialDistribution::Ball {
            center: vec![0.0, 0.0],
            radius: 2.0,
        },
        disturbance: DisturbanceModel::None,
        seed: 7,
    };
    let batch = draw_samples(&sys, &samp, s as usize).map_err(|e| AppError::of(1, e))?;
    let set = Ellipsoid::new(2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0])?;
    check_threshold_equality(&set, &batch, &params).map_err(|e| AppError::of(4, e))
}
