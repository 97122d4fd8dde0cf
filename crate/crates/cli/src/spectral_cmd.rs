use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Args;
use mbadmm::cases::{self, Case};
use mbadmm::problem::matrix_to_json;
use mbadmm::spectral::{self, ExtensionForm, IterationMatrixBundle};
use mbadmm::trace::format_float;
use serde_json::json;

use crate::util::{self, usage};

#[derive(Args)]
pub struct SpectralArgs {
    /// Problem file with scalar free blocks, `b = 0`, and `(σ/2)x²` objectives.
    #[arg(required_unless_present = "case", conflicts_with = "case")]
    pub file: Option<PathBuf>,
    /// Embedded example instead of a file.
    #[arg(long, value_parser = util::case_name)]
    pub case: Option<Case>,
    /// Penalty value; repeat for several. Cases carry their own defaults.
    #[arg(long, allow_negative_numbers = true, value_parser = util::positive_f64)]
    pub beta: Vec<f64>,
    /// For the block extension, use the multiplier update the scheme actually
    /// performs instead of the lagged one.
    #[arg(long)]
    pub exact_extension: bool,
    /// Write L, R and S of every row as JSON matrices.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

struct Row {
    source: String,
    beta: Option<f64>,
    bundle: IterationMatrixBundle,
}

fn homogeneous_rows(source: &str, a: &mbadmm::Matrix, betas: &[f64]) -> anyhow::Result<Vec<Row>> {
    let bundle = spectral::build_homogeneous(a)?;
    if betas.is_empty() {
        return Ok(vec![Row {
            source: source.into(),
            beta: None,
            bundle,
        }]);
    }
    // the null-objective map does not depend on β
    Ok(betas
        .iter()
        .map(|&b| Row {
            source: source.into(),
            beta: Some(b),
            bundle: bundle.clone(),
        })
        .collect())
}

fn quadratic_rows(source: &str, a: &mbadmm::Matrix, sigma: &[f64], betas: &[f64]) -> anyhow::Result<Vec<Row>> {
    betas
        .iter()
        .map(|&b| {
            Ok(Row {
                source: source.into(),
                beta: Some(b),
                bundle: spectral::build_quadratic_diag(a, sigma, b)?,
            })
        })
        .collect()
}

fn build_rows(args: &SpectralArgs) -> anyhow::Result<Vec<Row>> {
    let core = cases::core_matrix();
    match (args.case, &args.file) {
        (Some(Case::EqFour), _) => homogeneous_rows(Case::EqFour.name(), &core, &args.beta),
        (Some(Case::FourOneStrong), _) => {
            let betas = if args.beta.is_empty() { cases::FOUR_ONE_STRONG_BETAS.to_vec() } else { args.beta.clone() };
            let form = if args.exact_extension { ExtensionForm::Exact } else { ExtensionForm::Lagged };
            betas
                .iter()
                .map(|&b| {
                    Ok(Row {
                        source: Case::FourOneStrong.name().into(),
                        beta: Some(b),
                        bundle: spectral::build_block_extension_with(&core, &[cases::FOUR_ONE_STRONG_SIGMA], b, form)?,
                    })
                })
                .collect()
        }
        (Some(Case::ThreeStrongBeta), _) => {
            let betas: Vec<f64> = if args.beta.is_empty() {
                cases::THREE_STRONG_SWEEP.iter().map(|(b, _)| *b).collect()
            } else {
                args.beta.clone()
            };
            quadratic_rows(Case::ThreeStrongBeta.name(), &core, &[0.0, cases::THREE_STRONG_SIGMA], &betas)
        }
        (None, Some(path)) => {
            let p = util::load(path)?;
            let (a, sigma) = spectral::scalar_profile(&p)?;
            if sigma.iter().all(|s| *s == 0.0) {
                homogeneous_rows("homogeneous", &a, &args.beta)
            } else if args.beta.is_empty() {
                Err(usage("the problem has quadratic blocks; pass at least one --beta"))
            } else {
                quadratic_rows("quadratic", &a, &sigma, &args.beta)
            }
        }
        (None, None) => Err(usage("pass a problem file or --case")),
    }
}

/// CSV `source,beta,rho,prediction`; `beta` is empty for β-independent maps.
pub fn run(args: &SpectralArgs) -> anyhow::Result<ExitCode> {
    let rows = build_rows(args)?;
    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    w.write_record(["source", "beta", "rho", "prediction"])?;
    for r in &rows {
        let beta = r.beta.map(|b| b.to_string()).unwrap_or_default();
        w.write_record([r.source.as_str(), &beta, &format_float(r.bundle.rho), r.bundle.predict().as_str()])?;
    }
    w.flush()?;

    if let Some(path) = &args.dump {
        let doc: Vec<_> = rows
            .iter()
            .map(|r| {
                json!({
                    "source": r.source,
                    "beta": r.beta,
                    "rho": r.bundle.rho,
                    "L": matrix_to_json(&r.bundle.l),
                    "R": matrix_to_json(&r.bundle.r),
                    "S": matrix_to_json(&r.bundle.s),
                })
            })
            .collect();
        let mut out = util::create(path)?;
        serde_json::to_writer(&mut out, &doc)?;
        writeln!(out)?;
        out.flush().with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}
