//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for I/O or data errors, 2 for usage errors.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bundle::{
    load_bundle, load_concept_bank, write_bundle, write_concept_bank, Bundle, ConceptBank,
    EmbeddingMatrix, Role,
};
use crate::error::Error;
use crate::metrics::{
    calibrate_threshold, evaluate, format_percent, id_accuracy, EvalReport, Threshold,
    DEFAULT_TARGET_TPR,
};
use crate::report::{read_report, write_report};
use crate::scoring::{
    candidate_label_scores, cosine_similarities, energy_scores, ensemble_concept_banks,
    entropy_scores, filter_candidate_labels, fit_mahalanobis, mahalanobis_scores,
    max_cosine_scores, mcm_scores, predict_classes, scaled_diff_scores, softmax_confidence_scores,
    variance_scores, MahalanobisModel, ScoreMethod, ScoreVector, SimilarityMatrix, Temperature,
};
use crate::simulator::{make_synthetic_task, SyntheticTaskConfig, DEFAULT_KAPPA};
use crate::theory::{temperature_sweep, verify_theorem, SweepEntry, TheoremReport};

pub const THREADS_ENV: &str = "OODKIT_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "oodkit",
    version,
    about = "Zero-shot OOD detection over precomputed embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score one bundle with one method.
    Score(ScoreArgs),
    /// FPR at the target TPR, AUROC and ID accuracy for one method.
    Eval(EvalArgs),
    /// Calibrate a detection threshold on ID scores.
    Calibrate(CalibrateArgs),
    /// Estimate the temperature bound and compare softmax vs. raw FPR.
    Bound(BoundArgs),
    /// MCM FPR/AUROC across temperatures, plus the max-cosine baseline.
    Sweep(SweepArgs),
    /// Write a synthetic task as bundle directories.
    Simulate(SimulateArgs),
    /// Average per-template concept banks into one bank.
    Ensemble(EnsembleArgs),
    /// Fit the class-conditional Gaussian baseline.
    #[command(name = "maha-fit")]
    MahaFit(MahaFitArgs),
}

#[derive(Debug, Clone, Args)]
pub struct MethodArgs {
    #[arg(long, value_enum, default_value = "mcm")]
    pub method: ScoreMethod,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Concept bank directory (required by every method except mahalanobis).
    #[arg(long)]
    pub concepts: Option<PathBuf>,
    /// Fitted model JSON from `maha-fit` (mahalanobis only).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Candidate-label concept bank (candidate_label only).
    #[arg(long)]
    pub candidates: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long, conflicts_with = "ood", required_unless_present = "ood")]
    pub id: Option<PathBuf>,
    #[arg(long)]
    pub ood: Option<PathBuf>,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Output file; `.json` writes a report, anything else CSV. Stdout
    /// (CSV) when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub id: PathBuf,
    #[arg(long)]
    pub ood: PathBuf,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, default_value_t = DEFAULT_TARGET_TPR)]
    pub tpr: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub id: PathBuf,
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long, default_value_t = DEFAULT_TARGET_TPR)]
    pub tpr: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub id: PathBuf,
    #[arg(long)]
    pub ood: PathBuf,
    #[arg(long)]
    pub concepts: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = DEFAULT_TARGET_TPR)]
    pub tpr: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub id: PathBuf,
    #[arg(long)]
    pub ood: PathBuf,
    #[arg(long)]
    pub concepts: PathBuf,
    /// Comma-separated temperatures.
    #[arg(long, value_delimiter = ',', required = true)]
    pub taus: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_TARGET_TPR)]
    pub tpr: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub seed: u64,
    /// Output directory; receives concepts/, id_test/, ood_test/ and task.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub classes: usize,
    #[arg(long, default_value_t = 512)]
    pub dim: usize,
    #[arg(long, default_value_t = 20)]
    pub n_id_per_class: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_ood: usize,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    pub kappa: f64,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// One concept bank directory per prompt template (repeat or comma-separate).
    #[arg(long, value_delimiter = ',', required = true)]
    pub templates: Vec<PathBuf>,
    /// Output concept bank directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Keep the raw mean instead of rescaling to unit length.
    #[arg(long)]
    pub no_renormalize: bool,
}

#[derive(Debug, Args)]
pub struct MahaFitArgs {
    /// Labeled training bundle (unnormalized features).
    #[arg(long)]
    pub id: PathBuf,
    /// Ridge added to the covariance diagonal; default 1e-6 * trace / d.
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Number of classes; defaults to the bundle manifest's num_classes.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn temperature(tau: f64) -> CliResult<Temperature> {
    Temperature::new(tau).map_err(|e| usage(e.to_string()))
}

fn check_tpr(tpr: f64) -> CliResult<()> {
    if tpr > 0.0 && tpr <= 1.0 {
        Ok(())
    } else {
        Err(usage(format!("--tpr must lie in (0, 1], got {tpr}")))
    }
}

/// Everything a scoring method may need beyond the input features.
struct ScoringContext {
    method: ScoreMethod,
    tau: Temperature,
    concepts: Option<ConceptBank>,
    model: Option<MahalanobisModel>,
    expanded: Option<ConceptBank>,
}

impl ScoringContext {
    fn load(args: &MethodArgs) -> CliResult<Self> {
        let tau = temperature(args.tau)?;
        let concepts = args
            .concepts
            .as_deref()
            .map(load_concept_bank)
            .transpose()?;
        let mut ctx = Self {
            method: args.method,
            tau,
            concepts,
            model: None,
            expanded: None,
        };
        match args.method {
            ScoreMethod::Mahalanobis => {
                let path = args
                    .model
                    .as_deref()
                    .ok_or_else(|| usage("--method mahalanobis requires --model"))?;
                ctx.model = Some(read_report::<MahalanobisModel>(path)?.payload);
            }
            ScoreMethod::Msp | ScoreMethod::Energy => {}
            ScoreMethod::CandidateLabel => {
                let id_bank = ctx.require_concepts()?;
                let path = args
                    .candidates
                    .as_deref()
                    .ok_or_else(|| usage("--method candidate_label requires --candidates"))?;
                ctx.expanded = Some(expand_with_candidates(id_bank, &load_concept_bank(path)?)?);
            }
            _ => {
                ctx.require_concepts()?;
            }
        }
        Ok(ctx)
    }

    fn require_concepts(&self) -> CliResult<&ConceptBank> {
        self.concepts
            .as_ref()
            .ok_or_else(|| usage(format!("--method {} requires --concepts", self.method)))
    }

    fn similarities(&self, features: &EmbeddingMatrix) -> CliResult<SimilarityMatrix> {
        Ok(cosine_similarities(features, self.require_concepts()?)?)
    }

    fn score(&self, features: &EmbeddingMatrix) -> CliResult<ScoreVector> {
        let tau = self.tau;
        let scores = match self.method {
            ScoreMethod::Mcm => mcm_scores(&self.similarities(features)?, tau)?,
            ScoreMethod::MaxCosine => max_cosine_scores(&self.similarities(features)?)?,
            ScoreMethod::Entropy => entropy_scores(&self.similarities(features)?, tau)?,
            ScoreMethod::Variance => variance_scores(&self.similarities(features)?)?,
            ScoreMethod::ScaledDiff => scaled_diff_scores(&self.similarities(features)?)?,
            ScoreMethod::Msp | ScoreMethod::Energy => {
                // Logits are the cosine similarities when a concept bank is
                // given, otherwise the bundle's rows themselves.
                let logits = match &self.concepts {
                    Some(bank) => {
                        let sims = cosine_similarities(features, bank)?;
                        EmbeddingMatrix::from_f64(sims.rows(), sims.cols(), sims.values().to_vec())?
                    }
                    None => features.clone(),
                };
                if self.method == ScoreMethod::Msp {
                    softmax_confidence_scores(&logits, tau)?
                } else {
                    energy_scores(&logits, tau)?
                }
            }
            ScoreMethod::Mahalanobis => {
                mahalanobis_scores(features, self.model.as_ref().expect("model loaded"))?
            }
            ScoreMethod::CandidateLabel => {
                let expanded = self.expanded.as_ref().expect("expanded bank built");
                let k_id = self.require_concepts()?.num_classes();
                candidate_label_scores(&cosine_similarities(features, expanded)?, k_id, tau)?
            }
        };
        Ok(scores)
    }

    fn accuracy(&self, bundle: &Bundle) -> CliResult<Option<f64>> {
        let (Some(labels), Some(bank)) = (&bundle.labels, &self.concepts) else {
            return Ok(None);
        };
        labels.check_range(bank.num_classes())?;
        let sims = cosine_similarities(&bundle.matrix, bank)?;
        Ok(Some(id_accuracy(&predict_classes(&sims), labels)?))
    }
}

/// ID concepts followed by the candidate concepts that survive string
/// filtering against the ID class names.
fn expand_with_candidates(
    id_bank: &ConceptBank,
    candidates: &ConceptBank,
) -> CliResult<ConceptBank> {
    if candidates.dim() != id_bank.dim() {
        return Err(Error::DimensionMismatch(format!(
            "candidates have d={} but concepts have d={}",
            candidates.dim(),
            id_bank.dim()
        ))
        .into());
    }
    let kept = filter_candidate_labels(candidates.class_names(), id_bank.class_names());
    let mut data = id_bank.matrix().data().to_vec();
    let mut names = id_bank.class_names().to_vec();
    for name in kept {
        let row = candidates
            .class_names()
            .iter()
            .position(|c| *c == name)
            .expect("filtered names come from the candidate bank");
        data.extend_from_slice(candidates.matrix().row(row));
        names.push(name);
    }
    let matrix = EmbeddingMatrix::from_f64(names.len(), id_bank.dim(), data)?;
    Ok(ConceptBank::new(matrix, names, Vec::new())?)
}

fn write_json_out<T: Serialize>(out: Option<&Path>, command: &str, payload: T) -> CliResult<()> {
    if let Some(path) = out {
        write_report(path, command, payload)?;
    }
    Ok(())
}

fn load_sims(bundle: &Path, bank: &ConceptBank) -> CliResult<SimilarityMatrix> {
    Ok(cosine_similarities(&load_bundle(bundle)?.matrix, bank)?)
}

fn cmd_score(args: ScoreArgs) -> CliResult<()> {
    let ctx = ScoringContext::load(&args.method)?;
    let input = args
        .id
        .as_deref()
        .or(args.ood.as_deref())
        .expect("clap enforces one input");
    let bundle = load_bundle(input)?;
    let scores = ctx.score(&bundle.matrix)?;
    match args.out.as_deref() {
        Some(path) if path.extension().is_some_and(|e| e == "json") => {
            write_report(path, "score", &scores)?;
        }
        Some(path) => fs::write(path, scores.to_csv()).map_err(|e| Error::io(path, e))?,
        None => print!("{}", scores.to_csv()),
    }
    if args.out.is_some() {
        let mean = scores.values.iter().sum::<f64>() / scores.len() as f64;
        println!("{}: {} scores, mean {mean:.6}", scores.method, scores.len());
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    check_tpr(args.tpr)?;
    let ctx = ScoringContext::load(&args.method)?;
    let id = load_bundle(&args.id)?;
    let ood = load_bundle(&args.ood)?;
    let id_scores = ctx.score(&id.matrix)?;
    let ood_scores = ctx.score(&ood.matrix)?;
    let report: EvalReport = evaluate(&id_scores, &ood_scores, args.tpr, ctx.accuracy(&id)?)?;

    let tpr_label = format_percent(args.tpr);
    println!("method      {}", ctx.method);
    println!("FPR@{tpr_label}   {}", format_percent(report.fpr_at_tpr));
    println!("AUROC       {}", format_percent(report.auroc));
    if let Some(acc) = report.id_accuracy {
        println!("ID ACC      {}", format_percent(acc));
    }
    println!("threshold   {}", report.threshold.lambda);
    println!("N_id/N_ood  {}/{}", report.n_id, report.n_ood);
    write_json_out(args.out.as_deref(), "eval", &report)
}

fn cmd_calibrate(args: CalibrateArgs) -> CliResult<()> {
    check_tpr(args.tpr)?;
    let ctx = ScoringContext::load(&args.method)?;
    let id = load_bundle(&args.id)?;
    let threshold: Threshold = calibrate_threshold(&ctx.score(&id.matrix)?, args.tpr)?;
    println!(
        "{} threshold at TPR {}: {}",
        threshold.method,
        format_percent(args.tpr),
        threshold.lambda
    );
    write_json_out(args.out.as_deref(), "calibrate", threshold)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"))
}

fn cmd_bound(args: BoundArgs) -> CliResult<()> {
    check_tpr(args.tpr)?;
    let tau = temperature(args.tau)?;
    let bank = load_concept_bank(&args.concepts)?;
    let id = load_sims(&args.id, &bank)?;
    let ood = load_sims(&args.ood, &bank)?;
    let report: TheoremReport = verify_theorem(&id, &ood, tau, args.tpr)?;

    let c = &report.constants;
    let s = &report.s_hat_y2_sensitivity;
    println!("K           {}", c.k);
    println!("tau         {}", c.tau);
    println!("lambda      {:.6}", c.lambda);
    println!("lambda_wo   {:.6}", c.lambda_wo);
    println!("delta       {:.6}", c.delta);
    println!(
        "s_hat_y2    {:.6} (min {:.6}, max {:.6})",
        c.s_hat_y2, s.min, s.max
    );
    println!(
        "T           {} (s_hat_y2 min: {}, max: {})",
        fmt_opt(c.t),
        fmt_opt(s.t_at_min),
        fmt_opt(s.t_at_max)
    );
    println!("FPR softmax {}", format_percent(report.fpr_softmax));
    println!("FPR raw     {}", format_percent(report.fpr_wo));
    for note in &report.notes {
        println!("note: {note}");
    }
    println!(
        "verdict: tau > T is {}; FPR(tau, lambda) <= FPR_wo(lambda_wo) is {}",
        report.bound_satisfied, report.conclusion_holds
    );
    write_json_out(args.out.as_deref(), "bound", &report)
}

fn cmd_sweep(args: SweepArgs) -> CliResult<()> {
    check_tpr(args.tpr)?;
    let taus = args
        .taus
        .iter()
        .map(|&t| temperature(t))
        .collect::<CliResult<Vec<_>>>()?;
    let bank = load_concept_bank(&args.concepts)?;
    let id = load_sims(&args.id, &bank)?;
    let ood = load_sims(&args.ood, &bank)?;
    let rows: Vec<SweepEntry> = temperature_sweep(&id, &ood, &taus, args.tpr)?;
    println!("{:>12}  {:>8}  {:>8}", "tau", "FPR", "AUROC");
    for r in &rows {
        let tau = r
            .tau
            .map_or_else(|| "no-softmax".to_string(), |t| t.to_string());
        println!(
            "{tau:>12}  {:>8}  {:>8}",
            format_percent(r.fpr),
            format_percent(r.auroc)
        );
    }
    write_json_out(args.out.as_deref(), "sweep", &rows)
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let config = SyntheticTaskConfig {
        num_classes: args.classes,
        dim: args.dim,
        n_id_per_class: args.n_id_per_class,
        n_ood: args.n_ood,
        kappa: args.kappa,
        seed: args.seed,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let task = make_synthetic_task(config)?;
    let source = format!(
        "simulator seed={} K={} d={} kappa={}",
        config.seed, config.num_classes, config.dim, config.kappa
    );
    let out = &args.out;
    write_concept_bank(out.join("concepts"), &task.concepts, &source)?;
    write_bundle(
        out.join("id_test"),
        &task.id_features,
        Some((&task.id_labels, config.num_classes)),
        Role::IdTest,
        &source,
    )?;
    write_bundle(
        out.join("ood_test"),
        &task.ood_features,
        None,
        Role::OodTest,
        &source,
    )?;
    let config_path = out.join("task.json");
    let text = serde_json::to_string_pretty(&config).map_err(|e| Error::json(&config_path, e))?;
    fs::write(&config_path, text + "\n").map_err(|e| Error::io(&config_path, e))?;
    println!(
        "wrote {} concepts, {} ID and {} OOD rows (d={}) to {}",
        config.num_classes,
        task.id_features.rows(),
        task.ood_features.rows(),
        config.dim,
        out.display()
    );
    Ok(())
}

fn cmd_ensemble(args: EnsembleArgs) -> CliResult<()> {
    let banks = args
        .templates
        .iter()
        .map(load_concept_bank)
        .collect::<Result<Vec<_>, _>>()?;
    let merged = ensemble_concept_banks(&banks, !args.no_renormalize)?;
    let source = format!("ensemble of {} concept banks", banks.len());
    write_concept_bank(&args.out, &merged, &source)?;
    println!(
        "ensembled {} banks ({} classes, d={}) into {}",
        banks.len(),
        merged.num_classes(),
        merged.dim(),
        args.out.display()
    );
    Ok(())
}

fn cmd_maha_fit(args: MahaFitArgs) -> CliResult<()> {
    let bundle = load_bundle(&args.id)?;
    let labels = bundle
        .labels
        .as_ref()
        .ok_or_else(|| usage(format!("{} has no labels", args.id.display())))?;
    let k = args
        .classes
        .or(bundle.manifest.num_classes)
        .ok_or_else(|| usage("number of classes unknown; pass --classes"))?;
    let model = fit_mahalanobis(&bundle.matrix, labels, k, args.ridge)?;
    if model.is_underdetermined() {
        eprintln!(
            "warning: {} samples for d={}; the covariance is rank-deficient and the ridge dominates",
            model.num_samples, model.dim
        );
    }
    println!(
        "fit {} class means on {} samples (d={}, ridge={:e})",
        model.num_classes, model.num_samples, model.dim, model.ridge
    );
    write_report(&args.out, "maha-fit", &model)?;
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Score(a) => cmd_score(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Ensemble(a) => cmd_ensemble(a),
        Command::MahaFit(a) => cmd_maha_fit(a),
    }
}

/// Caps the global thread pool from `OODKIT_THREADS`, if set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            usage(format!(
                "{THREADS_ENV} must be a positive integer, got {value:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(format!("cannot configure thread pool: {e}")))
}
