//! The `actseg` command line: data generation, training, evaluation tables,
//! pose imitation and embedding dumps. Every command is a pure function of
//! its config file, flags and seed.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 config error.

mod config;

pub use config::{DataSection, EmbeddingSection, EvalSection, ImitateSection, PipelineSection, RunConfig, SequenceSection};

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use rand_distr::{Distribution, Normal};

use crate::data::{
    confusion_matrix, generate_synthetic, load_dataset, save_dataset, segmentation_accuracy, split_leave_one_out, Dataset,
    Demonstration, MANIFEST_FILE,
};
use crate::embedding::{embeddings_to_csv, pca2d_dump, Encoder, Pca2dRow};
use crate::error::{Error, Result};
use crate::imitation::{decode_demos, pose_metrics, train_pose_decoder, trajectory_csv, PoseMetrics, PoseScope};
use crate::numerics::seeded_rng;
use crate::pipeline::{
    label_fraction_sweep, pretrain_encoder, run_alternation, segment_demos, accuracy_grid, trace_to_csv, Embedder,
    SweepRow,
};
use crate::seqmodels::{SegmentLabel, SequenceModel};

pub const ENCODER_FILE: &str = "encoder.model";
pub const SEQUENCE_FILE: &str = "sequence.model";

#[derive(Debug, Parser)]
#[command(name = "actseg", version, about = "Semi-supervised action segmentation and pose imitation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset (manifest plus one CSV per demonstration).
    GenData(Common),
    /// Pretrain the encoder, alternate with the sequence model, save both.
    Train(Common),
    /// Score saved models, the embedding × sequence-model grid, or a labeled-fraction sweep.
    Eval(EvalArgs),
    /// Train pose decoders on a frozen encoder and report pose errors.
    Imitate(ModelArgs),
    /// Dump per-frame embeddings and their 2-D PCA projection.
    EmbedDump(ModelArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run config; every key is optional and unknown keys are rejected.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory or its manifest file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `seed` (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `pipeline.rounds` (default 3).
    #[arg(long)]
    pub rounds: Option<usize>,
    /// triplet, npairs or m2v_t (default triplet).
    #[arg(long)]
    pub loss: Option<String>,
    /// knn, hmm, hsmm, crf or rnn (default rnn).
    #[arg(long)]
    pub seq_model: Option<String>,
    /// Share of labeled demonstrations kept visible (default 1.0).
    #[arg(long)]
    pub labeled_fraction: Option<f64>,
    /// Standard deviation of Gaussian noise added to features at evaluation
    /// (default 0 for eval, 0.15 for imitate).
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Pseudo-labeled frames kept per class per round (default 100).
    #[arg(long)]
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory written by `train`. Without it the encoder is pretrained here.
    #[arg(long)]
    pub models: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Emit the embedding × sequence-model grid.
    #[arg(long)]
    pub grid: bool,
    /// Comma-separated labeled fractions to sweep.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Vec<f64>,
}

impl Common {
    /// Config file with flag overrides applied, validated.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_path(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.rounds {
            c.pipeline.rounds = v;
        }
        if let Some(v) = &self.loss {
            c.embedding.loss = v.clone();
        }
        if let Some(v) = &self.seq_model {
            c.sequence.model = v.clone();
        }
        if let Some(v) = self.labeled_fraction {
            c.pipeline.labeled_fraction = v;
        }
        if let Some(v) = self.noise_sigma {
            c.eval.noise_sigma = v;
            c.imitate.noise_sigma = v;
        }
        if let Some(v) = self.top_k {
            c.pipeline.top_k = v;
        }
        c.validate()?;
        Ok(c)
    }

    fn dataset(&self) -> Result<Dataset> {
        let path = self
            .data
            .as_ref()
            .ok_or_else(|| Error::Config("--data is required".into()))?;
        let manifest = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.clone() };
        load_dataset(&manifest)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        Ok(&self.out)
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    Ok(p)
}

fn split(c: &RunConfig, ds: &Dataset) -> Result<(Dataset, Dataset)> {
    split_leave_one_out(ds, c.data.held_out)
}

/// Copies of `demos` with i.i.d. Gaussian noise of standard deviation `sigma` on every feature.
pub fn with_feature_noise(demos: &[Demonstration], sigma: f64, seed: u64) -> Vec<Demonstration> {
    if sigma == 0.0 {
        return demos.to_vec();
    }
    let n = Normal::new(0.0, sigma).expect("sigma validated non-negative");
    let mut rng = seeded_rng(seed);
    demos
        .iter()
        .map(|d| d.map_features(|_, v| v.iter().map(|x| x + n.sample(&mut rng)).collect()))
        .collect()
}

fn flat_truth(demos: &[Demonstration]) -> Result<Vec<SegmentLabel>> {
    let mut out = Vec::new();
    for d in demos {
        out.extend(
            d.evaluation_labels()
                .ok_or_else(|| Error::InvalidArgument(format!("demo {} has no ground truth", d.id)))?,
        );
    }
    Ok(out)
}

fn accuracy_and_confusion(
    embedder: &Embedder,
    model: &SequenceModel,
    demos: &[Demonstration],
    classes: usize,
) -> Result<(f64, String)> {
    let pred: Vec<SegmentLabel> = segment_demos(embedder, model, demos)?.concat();
    let truth = flat_truth(demos)?;
    let cm = confusion_matrix(&pred, &truth, classes)?;
    let acc = segmentation_accuracy(&pred, &truth)?;
    Ok((acc, cm.to_csv()))
}

fn encoder_for(args: &ModelArgs, c: &RunConfig, train: &Dataset) -> Result<Encoder> {
    match &args.models {
        Some(dir) => Encoder::load(&dir.join(ENCODER_FILE)),
        None => Ok(pretrain_encoder(&train.demos, &c.pipeline()?)?.encoder),
    }
}

pub fn cmd_gen_data(args: &Common) -> Result<String> {
    let c = args.run_config()?;
    let ds = generate_synthetic(&c.synthetic()?)?;
    let manifest = save_dataset(&ds, args.out_dir()?)?;
    Ok(format!(
        "demos {} frames {} classes {} manifest {}\n",
        ds.demos.len(),
        ds.total_frames(),
        ds.classes,
        manifest.display()
    ))
}

pub fn cmd_train(args: &Common) -> Result<String> {
    let c = args.run_config()?;
    let ds = args.dataset()?;
    let (train, val) = split(&c, &ds)?;
    let res = run_alternation(&train, &val, &c.pipeline()?)?;
    let out = args.out_dir()?;
    res.encoder.save(&out.join(ENCODER_FILE))?;
    res.model.save(&out.join(SEQUENCE_FILE))?;
    write(out, "trace.csv", &trace_to_csv(&res.trace))?;
    let mut pseudo = String::from("demo_id,frame,label,confidence\n");
    for p in &res.pseudo_labels {
        writeln!(pseudo, "{},{},{},{:.12e}", p.demo_id, p.frame_index, p.label, p.confidence).unwrap();
    }
    write(out, "pseudo_labels.csv", &pseudo)?;
    let (acc, cm) = accuracy_and_confusion(&Embedder::Encoder(res.encoder.clone()), &res.model, &val.demos, ds.classes)?;
    write(out, "confusion.csv", &cm)?;
    let report = format!(
        "val_accuracy = {acc:.6}\nrounds_run = {}\nconfusion_matrix = \"confusion.csv\"\ntrace = \"trace.csv\"\n\n# config\n{}",
        res.trace.len(),
        c.to_toml()
    );
    write(out, "report.txt", &report)?;
    Ok(format!("{}val_accuracy {acc:.6}\n", trace_to_csv(&res.trace)))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<String> {
    let common = &args.model.common;
    let mut c = common.run_config()?;
    if args.grid {
        c.eval.grid = true;
    }
    if !args.sweep.is_empty() {
        c.eval.sweep_fractions = args.sweep.clone();
        c.validate()?;
    }
    if args.model.models.is_none() && !c.eval.grid && c.eval.sweep_fractions.is_empty() {
        return Err(Error::Config("nothing to evaluate: pass --models, --grid or --sweep".into()));
    }
    let ds = common.dataset()?;
    let (train, test) = split(&c, &ds)?;
    let pipeline = c.pipeline()?;
    let out = common.out_dir()?;
    let mut stdout = String::new();
    if let Some(dir) = &args.model.models {
        let embedder = Embedder::Encoder(Encoder::load(&dir.join(ENCODER_FILE))?);
        let model = SequenceModel::load(&dir.join(SEQUENCE_FILE))?;
        let mut table = String::from("noise_sigma,accuracy\n");
        let mut sigmas = vec![0.0];
        if c.eval.noise_sigma > 0.0 {
            sigmas.push(c.eval.noise_sigma);
        }
        for (i, &s) in sigmas.iter().enumerate() {
            let demos = with_feature_noise(&test.demos, s, c.seed);
            let (acc, cm) = accuracy_and_confusion(&embedder, &model, &demos, ds.classes)?;
            if i == 0 {
                write(out, "confusion_eval.csv", &cm)?;
            }
            writeln!(table, "{s},{acc:.6}").unwrap();
        }
        write(out, "eval.csv", &table)?;
        stdout.push_str(&table);
    }
    if c.eval.grid {
        let (rows, cols) = c.grid_axes()?;
        let grid = accuracy_grid(&train, &test, &rows, &cols, &pipeline)?;
        write(out, "grid.csv", &grid.to_csv())?;
        stdout.push_str(&grid.to_csv());
    }
    if !c.eval.sweep_fractions.is_empty() {
        let rows = label_fraction_sweep(&train, &test, &c.eval.sweep_fractions, &c.eval.sweep_seeds, &pipeline)?;
        write(out, "sweep.csv", &SweepRow::to_csv(&rows))?;
        stdout.push_str(&SweepRow::to_csv(&rows));
    }
    Ok(stdout)
}

fn metrics_line(out: &mut String, scope: &str, who: &str, sigma: f64, m: &PoseMetrics) {
    writeln!(
        out,
        "{scope},{who},{sigma},{:.6},{:.6},{}",
        m.rmse_position_cm, m.median_quat_loss, m.frames
    )
    .unwrap();
}

pub fn cmd_imitate(args: &ModelArgs) -> Result<String> {
    let c = args.common.run_config()?;
    let ds = args.common.dataset()?;
    if ds.demos.iter().any(|d| d.poses().is_none()) {
        return Err(Error::InvalidArgument("dataset lacks end-effector poses".into()));
    }
    let (train, test) = split(&c, &ds)?;
    let encoder = encoder_for(args, &c, &train)?;
    let dec_cfg = c.pose_decoder()?;
    let out = args.common.out_dir()?;
    let mut sigmas = vec![0.0];
    if c.imitate.noise_sigma > 0.0 {
        sigmas.push(c.imitate.noise_sigma);
    }
    let mut table = String::from("scope,demonstrator,noise_sigma,rmse_position_cm,median_quat_loss,frames\n");
    for scope in [PoseScope::Pooled, PoseScope::PerDemonstrator] {
        let fit = train_pose_decoder(&encoder, &train.demos, scope, &dec_cfg, c.imitate.epochs, c.seed)?;
        fit.decoders.to_archive().save(&out.join(format!("pose_{}.model", scope.name())))?;
        for &s in &sigmas {
            let pred = decode_demos(&fit.decoders, &encoder, &test.demos, s, c.seed)?;
            if scope == PoseScope::PerDemonstrator {
                for who in test.demonstrators() {
                    let (p, d): (Vec<_>, Vec<_>) = pred
                        .iter()
                        .zip(&test.demos)
                        .filter(|(_, d)| d.demonstrator == who)
                        .map(|(p, d)| (p.clone(), d.clone()))
                        .unzip();
                    metrics_line(&mut table, scope.name(), &who.to_string(), s, &pose_metrics(&p, &d)?);
                }
                if s == 0.0 {
                    write(out, "trajectory.csv", &trajectory_csv(&test.demos, &pred))?;
                }
            }
            metrics_line(&mut table, scope.name(), "all", s, &pose_metrics(&pred, &test.demos)?);
        }
    }
    write(out, "pose_metrics.csv", &table)?;
    Ok(table)
}

pub fn cmd_embed_dump(args: &ModelArgs) -> Result<String> {
    let c = args.common.run_config()?;
    let ds = args.common.dataset()?;
    let (train, _) = split(&c, &ds)?;
    let encoder = encoder_for(args, &c, &train)?;
    let mut emb = Vec::new();
    let mut labels = Vec::new();
    for d in &ds.demos {
        emb.extend(encoder.embed_demo(d)?);
        match d.evaluation_labels() {
            Some(l) => labels.extend(l.into_iter().map(Some)),
            None => labels.extend(std::iter::repeat_n(None, d.len())),
        }
    }
    let out = args.common.out_dir()?;
    write(out, "embeddings.csv", &embeddings_to_csv(&emb, &labels)?)?;
    write(out, "pca2d.csv", &Pca2dRow::to_csv(&pca2d_dump(&emb, &labels)?))?;
    Ok(format!("frames {} dim {}\n", emb.len(), encoder.dim()))
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        _ => 1,
    }
}

pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Imitate(a) => cmd_imitate(a),
        Command::EmbedDump(a) => cmd_embed_dump(a),
    }
}

/// Parses `args`, runs the command, prints its summary and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let defaults = format!("Config file keys and their defaults:\n\n{}", RunConfig::default().to_toml());
    let parsed = Cli::command()
        .after_long_help(defaults.clone())
        .mut_subcommands(|sub| sub.after_long_help(defaults.clone()))
        .try_get_matches_from(args)
        .and_then(|m| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
