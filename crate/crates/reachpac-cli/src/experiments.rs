//! Seeded study runners: the epsilon-distribution comparison (`fig2`)
//! and the set-update comparison (`fig3`).
//!
//! Fitting and certification always draw from disjoint seed streams, so
//! every certificate rests on samples independent of the fitted set.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use reachpac_core::certify::{
    conformal_quantile, count_violations, empirical_conformal_certify, holdout_certify,
    max_discard_k, scenario_discard, CertifyError, ScoreVector,
};
use reachpac_core::dynamics::{draw_samples, DynamicsError, SampleBatch};
use reachpac_core::ellipsoid::{fit_mvee, Ellipsoid, SetError};
use reachpac_core::special::Probability;

use crate::config::{ConfigError, ExperimentConfig};
use crate::io::{fmt_g17, IoError};
use crate::svg::{render_overlay, Outline};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("io: {0}")]
    File(#[from] std::io::Error),
}

/// Purpose tags for sub-seed derivation.
pub const STREAM_FIT: u64 = 0;
pub const STREAM_CERTIFY_BASE: u64 = 1;

/// Derives a child seed for a purpose tag; SplitMix64 finalizer keeps the
/// streams statistically unrelated for distinct tags.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draw a batch from the purpose-tagged stream of the config's seed.
pub fn draw_tagged(
    config: &ExperimentConfig,
    tag: u64,
    n: usize,
) -> Result<SampleBatch, ExperimentError> {
    let sys = config.system_spec()?;
    let samp = config.sampling_spec(derive_seed(config.sampling.seed, tag));
    Ok(draw_samples(&sys, &samp, n)?)
}

/// Fit the initial set estimate on the training stream.
pub fn fit_initial_set(
    config: &ExperimentConfig,
    n_train: usize,
) -> Result<Ellipsoid, ExperimentError> {
    let train = draw_tagged(config, STREAM_FIT, n_train)?;
    Ok(fit_mvee(&train, 1e-7)?)
}

#[derive(Debug, Clone)]
pub struct AgreementRow {
    pub run_id: usize,
    pub method: &'static str,
    pub violations: u64,
    pub epsilon: f64,
}

#[derive(Debug)]
pub struct AgreementStudy {
    pub rows: Vec<AgreementRow>,
}

impl AgreementStudy {
    pub fn csv(&self) -> String {
        let mut out = String::from("run_id,method,k,epsilon\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.run_id,
                r.method,
                r.violations,
                fmt_g17(r.epsilon)
            );
        }
        out
    }

    /// (holdout, empirical-conformal) per run.
    pub fn paired(&self) -> Vec<(&AgreementRow, &AgreementRow)> {
        self.rows.chunks_exact(2).map(|c| (&c[0], &c[1])).collect()
    }
}

/// Holdout vs empirical-conformal accuracy over repeated fresh batches,
/// both methods applied to the same batch within a run.
pub fn run_fig2(config: &ExperimentConfig) -> Result<AgreementStudy, ExperimentError> {
    let ex = &config.experiment;
    let beta = Probability::new(ex.beta).expect("validated");
    let shared_set = if ex.refit_per_run {
        None
    } else {
        Some(fit_initial_set(config, ex.n_train)?)
    };

    let mut rows = Vec::with_capacity(2 * ex.repetitions);
    for run in 0..ex.repetitions {
        let set = match &shared_set {
            Some(e) => e.clone(),
            None => {
                // refitting draws from a stream keyed by the run as well
                let train = draw_tagged(config, derive_seed(0xF17, run as u64 + 1), ex.n_train)?;
                fit_mvee(&train, 1e-7)?
            }
        };
        let batch = draw_tagged(config, STREAM_CERTIFY_BASE + run as u64, ex.n_certify)?;
        let h = holdout_certify(&set, &batch, beta)?;
        let c = empirical_conformal_certify(&set, &batch, beta)?;
        rows.push(AgreementRow {
            run_id: run,
            method: "holdout",
            violations: h.violations,
            epsilon: h.epsilon.get(),
        });
        rows.push(AgreementRow {
            run_id: run,
            method: "empirical-conformal",
            violations: c.violations,
            epsilon: c.epsilon.get(),
        });
    }
    Ok(AgreementStudy { rows })
}

/// Which published configuration the set-update comparison mirrors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComparisonMode {
    /// K = N = 72,347 fresh samples.
    Large,
    /// K = N = 1,047 fresh samples.
    Small,
}

impl ComparisonMode {
    pub fn calib_size(&self) -> usize {
        match self {
            Self::Large => 72_347,
            Self::Small => 1_047,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Large => "large",
            Self::Small => "small",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub method: &'static str,
    pub calib_size: usize,
    pub removed_count: u64,
    pub threshold: f64,
    pub volume_before: f64,
    pub volume_after: f64,
}

#[derive(Debug)]
pub struct ComparisonStudy {
    pub mode: ComparisonMode,
    pub rows: [ComparisonRow; 2],
    pub svg: String,
}

impl ComparisonStudy {
    pub fn csv(&self) -> String {
        let mut out = String::from("method,K,removed_count,threshold,volume_before,volume_after\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.method,
                r.calib_size,
                r.removed_count,
                fmt_g17(r.threshold),
                fmt_g17(r.volume_before),
                fmt_g17(r.volume_after)
            );
        }
        out
    }
}

/// Split-conformal vs scenario-discarding set updates on one shared
/// fresh batch; K and the discard count follow the chosen mode.
pub fn run_fig3(
    config: &ExperimentConfig,
    mode: ComparisonMode,
) -> Result<ComparisonStudy, ExperimentError> {
    let ex = &config.experiment;
    let alpha = Probability::new(ex.alpha).expect("validated");
    let beta = Probability::new(ex.beta).expect("validated");
    let set = fit_initial_set(config, ex.n_train_comparison)?;
    let k_calib = mode.calib_size();
    let batch = draw_tagged(config, STREAM_CERTIFY_BASE, k_calib)?;

    let volume_before = set.volume();
    let scores = ScoreVector::compute(&set, &batch)?;

    // conformal side
    let q_cp = conformal_quantile(&scores, alpha)?;
    let cp_set = set.with_level(q_cp)?;
    let removed_cp = scores.as_slice().iter().filter(|&&s| s > q_cp).count() as u64;

    // scenario side
    let bound = max_discard_k(k_calib as u64, alpha, beta, 1);
    let (so_set, q_so) = scenario_discard(&set, &batch, bound.k)?;

    let rows = [
        ComparisonRow {
            method: "split-conformal",
            calib_size: k_calib,
            removed_count: removed_cp,
            threshold: q_cp,
            volume_before,
            volume_after: cp_set.volume(),
        },
        ComparisonRow {
            method: "scenario-discard",
            calib_size: k_calib,
            removed_count: bound.k,
            threshold: q_so,
            volume_before,
            volume_after: so_set.volume(),
        },
    ];

    let svg = render_overlay(
        &[
            Outline {
                set: &set,
                label: "initial (conformal)",
                color: "#002676",
                dashed: false,
                opacity: 1.0,
            },
            Outline {
                set: &cp_set,
                label: "split-conformal update",
                color: "#002676",
                dashed: false,
                opacity: 0.35,
            },
            Outline {
                set: &set,
                label: "initial (scenario)",
                color: "#ff0080",
                dashed: true,
                opacity: 1.0,
            },
            Outline {
                set: &so_set,
                label: "scenario-discard update",
                color: "#ff0080",
                dashed: true,
                opacity: 0.35,
            },
        ],
        &format!("set updates, K = N = {k_calib}"),
    );

    Ok(ComparisonStudy { mode, rows, svg })
}

/// Convenience used by tests and the acceptance suite: count violations
/// of a set on a tagged fresh batch.
pub fn fresh_violations(
    config: &ExperimentConfig,
    set: &Ellipsoid,
    tag: u64,
    n: usize,
) -> Result<u64, ExperimentError> {
    let batch = draw_tagged(config, tag, n)?;
    Ok(count_violations(set, &batch)?)
}

/// Write study outputs under a directory.
pub fn write_fig2_outputs(study: &AgreementStudy, out_dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("fig2.csv"), study.csv())?;
    Ok(())
}

pub fn write_fig3_outputs(study: &ComparisonStudy, out_dir: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(out_dir)?;
    let base = format!("fig3_{}", study.mode.name());
    fs::write(out_dir.join(format!("{base}.csv")), study.csv())?;
    fs::write(out_dir.join(format!("{base}.svg")), &study.svg)?;
    Ok(())
}
