use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{Array2, ArrayView1};
use serde::Serialize;

use anomalens::config::Settings;
use anomalens::contribution::{estimate_contribution, top_k_dimensions, ContributionConfig, ContributionResult};
use anomalens::datagen::{
    gen_multimodal, gen_simulated, inject_fault, load_nslkdd, random_faults, read_events_csv, read_matrix_csv,
    write_events_csv, write_matrix_csv, FaultDirection, FaultSpec, MultimodalConfig, NslKddSchema, SimConfig, TrafficClass,
};
use anomalens::detector::{train_detector, AeArchitecture, PcaBaseline};
use anomalens::eval::{event_tpr_fpr, normal_bin_mask, roc_auc, threshold_for_fpr, EventWindowConfig};
use anomalens::experiments::{
    experiment_multimodal, experiment_nslkdd, experiment_sim61, write_rows, MultimodalParams, NslKddParams, Sim61Params,
    DATA_DIR_ENV,
};
use anomalens::multimodal::{mae_estimate_contribution, train_mae, MaeArchitecture, MaeTrainConfig, ModalitySpec};
use anomalens::neuralnet::{Activation, TrainConfig};
use anomalens::persist::{load_model, save_model, Model};
use anomalens::rng::derive_seed;
use anomalens::{Error, Result};

#[derive(Parser)]
#[command(name = "anomalens", version, about = "Explainable autoencoder anomaly detection")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Settings file (TOML with `module.key` entries).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed; falls back to the config file, then ANOMALENS_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a detector on a headered CSV (or one CSV per data type).
    Train(TrainArgs),
    /// Score records with a saved model.
    Score(ScoreArgs),
    /// Estimate contribution degrees for one record.
    Explain(ExplainArgs),
    /// AUROC of a score column against labels.
    EvalRoc(EvalRocArgs),
    /// Event-window TPR and FPR of a score series.
    EvalEvents(EvalEventsArgs),
    /// Write synthetic data sets.
    Simulate(SimulateArgs),
    /// One-hot encode the intrusion benchmark files into numeric CSVs.
    IngestNslkdd(IngestArgs),
    /// Run a packaged experiment.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Autoencoder,
    Multimodal,
    Pca,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value = "autoencoder")]
    kind: ModelKind,
    /// Training CSV; for multimodal models give `name=path` once per type.
    #[arg(long, required = true)]
    data: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    /// Hidden widths (autoencoder), second-layer widths (multimodal) or component count (pca).
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Shared width of a multimodal model.
    #[arg(long)]
    shared: Option<usize>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    /// Records to score; `name=path` per type with `--multimodal`.
    #[arg(long, required = true)]
    data: Vec<String>,
    /// Expect a multimodal model and write per-type MSE columns.
    #[arg(long)]
    multimodal: bool,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, required = true)]
    data: Vec<String>,
    /// Zero-based row of the data file to explain.
    #[arg(long, default_value_t = 0)]
    row: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalRocArgs {
    /// CSV with a `score` column (as written by `score`).
    #[arg(long)]
    scores: PathBuf,
    /// CSV with an `anomalous` column (0/1 or true/false).
    #[arg(long)]
    labels: PathBuf,
    /// Column of `scores` to use.
    #[arg(long, default_value = "score")]
    column: String,
    /// Write the ROC curve here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalEventsArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    events: PathBuf,
    #[arg(long, default_value = "score")]
    column: String,
    /// Fixed threshold; otherwise one is chosen for `--target-fpr` on normal bins.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    target_fpr: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimMode {
    Sim61,
    Multimodal,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    mode: SimMode,
    #[arg(long)]
    out: PathBuf,
    /// Faulty test records (sim61) or injected faults (multimodal).
    #[arg(long)]
    faults: Option<usize>,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentName {
    Sim61,
    Nslkdd,
    Multimodal,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    name: ExperimentName,
    #[arg(long)]
    out: PathBuf,
    /// Shrink the sim61 problem (0.1 gives 100 dims and 1,000 records).
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Run all four sim61 parameter cells instead of the headline one.
    #[arg(long)]
    grid: bool,
    /// Directory holding the intrusion benchmark files.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Train on at most this many benchmark normals.
    #[arg(long)]
    subsample: Option<usize>,
    /// Also write long-format tables for plotting.
    #[arg(long)]
    emit_plotdata: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let settings = Settings::load(cli.common.config.as_deref())?;
    let seed = settings.seed(cli.common.seed)?;
    match cli.command {
        Command::Train(a) => train(&settings, seed, a),
        Command::Score(a) => score(a),
        Command::Explain(a) => explain(&settings, a),
        Command::EvalRoc(a) => eval_roc(a),
        Command::EvalEvents(a) => eval_events(&settings, a),
        Command::Simulate(a) => simulate(&settings, seed, a),
        Command::IngestNslkdd(a) => ingest(a),
        Command::Experiment(a) => experiment(&settings, seed, a),
    }
}

/// `name=path` pairs in the order given.
fn named_paths(items: &[String]) -> Result<Vec<(String, PathBuf)>> {
    items
        .iter()
        .map(|s| match s.split_once('=') {
            Some((n, p)) if !n.is_empty() && !p.is_empty() => Ok((n.to_string(), PathBuf::from(p))),
            _ => Err(Error::InvalidInput(format!("expected name=path, got '{s}'"))),
        })
        .collect()
}

fn single_path(items: &[String]) -> Result<&Path> {
    match items {
        [one] => Ok(Path::new(one)),
        _ => Err(Error::InvalidInput("expected exactly one --data file".into())),
    }
}

fn train_config(settings: &Settings, seed: u64) -> Result<TrainConfig> {
    let mut cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    settings.apply_train(&mut cfg)?;
    Ok(cfg)
}

fn contribution_config(settings: &Settings) -> Result<ContributionConfig> {
    let mut cfg = ContributionConfig::default();
    settings.apply_contribution(&mut cfg)?;
    Ok(cfg)
}

fn train(settings: &Settings, seed: u64, a: TrainArgs) -> Result<()> {
    let cfg = train_config(settings, seed)?;
    let model = match a.kind {
        ModelKind::Autoencoder => {
            let (names, data) = read_matrix_csv(single_path(&a.data)?)?;
            let hidden = match a.hidden {
                Some(h) => h,
                None => settings.usize_list("model.hidden")?.unwrap_or_else(|| vec![10]),
            };
            let hidden_act = settings.activation("model.hidden_activation")?.unwrap_or(Activation::Relu);
            let out_act = settings.activation("model.output_activation")?.unwrap_or(Activation::Identity);
            let mut activations = vec![hidden_act; hidden.len()];
            activations.push(out_act);
            let arch = AeArchitecture { hidden, activations };
            let (det, report) = train_detector(data.view(), &arch, &cfg)?;
            eprintln!(
                "trained autoencoder: final loss {:.6e}, threshold {:.6e}",
                report.final_loss().unwrap_or(f64::NAN),
                det.threshold
            );
            Model::Autoencoder(det.with_feature_names(names))
        }
        ModelKind::Pca => {
            let (_, data) = read_matrix_csv(single_path(&a.data)?)?;
            let m = match a.hidden.as_deref() {
                Some([m]) => *m,
                Some(_) => return Err(Error::InvalidInput("pca takes one component count".into())),
                None => 10,
            };
            Model::Pca(PcaBaseline::fit(data.view(), m)?)
        }
        ModelKind::Multimodal => {
            let files = named_paths(&a.data)?;
            let mut names = Vec::new();
            let mut data = Vec::new();
            let mut features = Vec::new();
            for (name, path) in &files {
                let (cols, m) = read_matrix_csv(path)?;
                names.push(name.clone());
                features.push(cols);
                data.push(m);
            }
            let second = match a.hidden {
                Some(h) => h,
                None => settings
                    .usize_list("multimodal.second")?
                    .unwrap_or_else(|| data.iter().map(|d| (d.ncols() / 5).max(1)).collect()),
            };
            if second.len() != data.len() {
                return Err(Error::InvalidInput(format!(
                    "{} second-layer widths for {} data types",
                    second.len(),
                    data.len()
                )));
            }
            let shared = match a.shared.or(settings.usize("multimodal.shared")?) {
                Some(s) => s,
                None => (second.iter().sum::<usize>() / 2).max(1),
            };
            let types = names
                .iter()
                .zip(&data)
                .zip(&second)
                .map(|((n, d), &s)| ModalitySpec::new(n, d.ncols(), s))
                .collect();
            let arch = MaeArchitecture::new(types, shared);
            let mut mcfg = MaeTrainConfig {
                pretrain: cfg.clone(),
                finetune: TrainConfig {
                    seed: derive_seed(seed, 1),
                    ..cfg.clone()
                },
                pretraining: settings.bool("multimodal.pretraining")?.unwrap_or(true),
            };
            if let Some(e) = settings.usize("multimodal.pretrain_epochs")? {
                mcfg.pretrain.epochs = e;
            }
            if let Some(e) = settings.usize("multimodal.finetune_epochs")? {
                mcfg.finetune.epochs = e;
            }
            let views: Vec<_> = data.iter().map(|d| d.view()).collect();
            let (model, _) = train_mae(&views, &arch, &mcfg)?;
            eprintln!("trained multimodal autoencoder: weights {:?}, threshold {:.6e}", model.weights, model.threshold);
            Model::Multimodal(model.with_feature_names(features))
        }
    };
    save_model(&a.out, &model)
}

fn output(out: Option<&Path>) -> Result<csv::Writer<Box<dyn std::io::Write>>> {
    let sink: Box<dyn std::io::Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn read_typed(files: &[(String, PathBuf)], expected: &[&str]) -> Result<Vec<Array2<f64>>> {
    if files.len() != expected.len() {
        return Err(Error::InvalidInput(format!("model has types {expected:?}; pass one --data name=path for each")));
    }
    expected
        .iter()
        .map(|name| {
            let (_, path) = files
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| Error::InvalidInput(format!("missing --data for type '{name}'")))?;
            Ok(read_matrix_csv(path)?.1)
        })
        .collect()
}

fn score(a: ScoreArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let mut w = output(a.out.as_deref())?;
    match (&model, a.multimodal) {
        (Model::Multimodal(m), true) => {
            let names = m.type_names();
            let data = read_typed(&named_paths(&a.data)?, &names)?;
            let mut header = vec!["index".to_string(), "score".into()];
            header.extend(names.iter().map(|n| format!("mse_{n}")));
            header.push("anomalous".into());
            w.write_record(&header)?;
            let views: Vec<_> = data.iter().map(|d| d.view()).collect();
            for (i, s) in m.score_rows(&views)?.into_iter().enumerate() {
                let mut row = vec![i.to_string(), format!("{:?}", s.wmse)];
                row.extend(s.per_type.iter().map(|v| format!("{v:?}")));
                row.push(u8::from(s.wmse > m.threshold).to_string());
                w.write_record(&row)?;
            }
        }
        (Model::Multimodal(_), false) => {
            return Err(Error::InvalidInput("multimodal model: pass --multimodal".into()));
        }
        (_, true) => return Err(Error::InvalidInput(format!("--multimodal needs a multimodal model, got {}", model.kind()))),
        (Model::Autoencoder(det), false) => {
            let (_, data) = read_matrix_csv(single_path(&a.data)?)?;
            w.write_record(["index", "score", "anomalous"])?;
            for (i, s) in det.score_rows(data.view())?.into_iter().enumerate() {
                w.write_record([i.to_string(), format!("{s:?}"), u8::from(s > det.threshold).to_string()])?;
            }
        }
        (Model::Pca(p), false) => {
            let (_, data) = read_matrix_csv(single_path(&a.data)?)?;
            w.write_record(["index", "score"])?;
            for (i, s) in p.score_rows(data.view())?.into_iter().enumerate() {
                w.write_record([i.to_string(), format!("{s:?}")])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn row_of(data: &Array2<f64>, row: usize) -> Result<ArrayView1<'_, f64>> {
    if row >= data.nrows() {
        return Err(Error::InvalidInput(format!("row {row} out of range ({} rows)", data.nrows())));
    }
    Ok(data.row(row))
}

fn write_explanation(
    out: Option<&Path>,
    result: &ContributionResult,
    labels: &[(String, String)],
    with_type: bool,
) -> Result<()> {
    let mut sink: Box<dyn std::io::Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    };
    writeln!(
        sink,
        "# lambda_used={:?},iterations={},final_mse={:?},converged={}",
        result.lambda_used, result.iterations, result.final_mse, result.converged
    )?;
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["dimension_index"];
    if with_type {
        header.push("data_type");
    }
    header.extend(["feature_name", "eta", "abs_rank"]);
    w.write_record(&header)?;
    let ranked = top_k_dimensions(result.eta.view(), result.eta.len());
    let mut rank = vec![0; result.eta.len()];
    for (r, e) in ranked.entries.iter().enumerate() {
        rank[e.index] = r + 1;
    }
    for (i, v) in result.eta.iter().enumerate() {
        let (ty, name) = &labels[i];
        let mut row = vec![i.to_string()];
        if with_type {
            row.push(ty.clone());
        }
        row.extend([name.clone(), format!("{v:?}"), rank[i].to_string()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn explain(settings: &Settings, a: ExplainArgs) -> Result<()> {
    let cfg = contribution_config(settings)?;
    match load_model(&a.model)? {
        Model::Autoencoder(det) => {
            let (cols, data) = read_matrix_csv(single_path(&a.data)?)?;
            let result = estimate_contribution(&det, row_of(&data, a.row)?, &cfg)?;
            let names = if det.feature_names.is_empty() { cols } else { det.feature_names.clone() };
            let labels: Vec<_> = names.into_iter().map(|n| (String::new(), n)).collect();
            write_explanation(a.out.as_deref(), &result, &labels, false)
        }
        Model::Multimodal(m) => {
            let names: Vec<String> = m.type_names().iter().map(|s| s.to_string()).collect();
            let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
            let data = read_typed(&named_paths(&a.data)?, &refs)?;
            let record = data.iter().map(|d| row_of(d, a.row)).collect::<Result<Vec<_>>>()?;
            let result = mae_estimate_contribution(&m, &record, &cfg)?;
            let mut labels = Vec::new();
            for (k, d) in data.iter().enumerate() {
                for j in 0..d.ncols() {
                    let feature = m.feature_names.get(k).and_then(|f| f.get(j)).cloned().unwrap_or_else(|| format!("x{j}"));
                    labels.push((names[k].clone(), feature));
                }
            }
            write_explanation(a.out.as_deref(), &result.combined, &labels, true)
        }
        Model::Pca(_) => Err(Error::InvalidInput("contribution estimation needs an autoencoder model".into())),
    }
}

fn read_column(path: &Path, column: &str) -> Result<Vec<String>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    let idx = r
        .headers()?
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::Data {
            path: path.to_path_buf(),
            line: 1,
            message: format!("no column '{column}'"),
        })?;
    let mut out = Vec::new();
    for rec in r.records() {
        out.push(rec?.get(idx).unwrap_or("").to_string());
    }
    Ok(out)
}

fn parse_scores(path: &Path, column: &str) -> Result<Vec<f64>> {
    read_column(path, column)?
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.trim().parse().map_err(|_| Error::Data {
                path: path.to_path_buf(),
                line: i + 2,
                message: format!("'{s}' is not a number"),
            })
        })
        .collect()
}

fn eval_roc(a: EvalRocArgs) -> Result<()> {
    let scores = parse_scores(&a.scores, &a.column)?;
    let labels = read_column(&a.labels, "anomalous")?
        .iter()
        .enumerate()
        .map(|(i, s)| match s.trim() {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            other => Err(Error::Data {
                path: a.labels.clone(),
                line: i + 2,
                message: format!("label '{other}' is not 0/1"),
            }),
        })
        .collect::<Result<Vec<_>>>()?;
    if labels.len() != scores.len() {
        return Err(Error::InvalidInput(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    let roc = roc_auc(&scores, &labels)?;
    println!("auroc,{:?}", roc.auroc);
    if let Some(out) = a.out {
        write_rows(&out, &roc.points)?;
    }
    Ok(())
}

fn eval_events(settings: &Settings, a: EvalEventsArgs) -> Result<()> {
    let scores = parse_scores(&a.scores, &a.column)?;
    let events = read_events_csv(&a.events)?;
    let window = EventWindowConfig {
        window: a.window.or(settings.usize("eval.window")?).unwrap_or(5),
        mask: Vec::new(),
    };
    let threshold = match a.threshold {
        Some(t) => t,
        None => {
            let target = a.target_fpr.or(settings.f64("eval.target_fpr")?).unwrap_or(0.03);
            let mask = normal_bin_mask(scores.len(), &events, &window);
            let normal: Vec<f64> = scores.iter().zip(&mask).filter(|(_, m)| **m).map(|(s, _)| *s).collect();
            threshold_for_fpr(&normal, target)?
        }
    };
    let m = event_tpr_fpr(&scores, threshold, &events, &window);
    println!("threshold,tpr,fpr,detected,events,zero_events");
    println!(
        "{threshold:?},{:?},{:?},{},{},{}",
        m.tpr,
        m.fpr,
        m.detected.iter().filter(|d| **d).count(),
        events.len(),
        m.zero_events
    );
    Ok(())
}

fn sim_config(settings: &Settings, seed: u64) -> Result<SimConfig> {
    let mut c = SimConfig {
        seed,
        ..SimConfig::default()
    };
    if let Some(v) = settings.usize("sim.n_components")? {
        c.n_components = v;
    }
    if let Some(v) = settings.usize("sim.dims_per_component")? {
        c.dims_per_component = v;
    }
    if let Some(v) = settings.f64("sim.beta")? {
        c.beta = v;
    }
    if let Some(v) = settings.f64("sim.gamma")? {
        c.gamma = v;
    }
    if let Some(v) = settings.usize("sim.n_records")? {
        c.n_records = v;
    }
    if let Some(v) = settings.string("sim.layout")? {
        c.layout = serde_json::from_value(serde_json::Value::String(v.clone()))
            .map_err(|_| Error::Config(format!("'sim.layout': unknown layout '{v}'")))?;
    }
    c.validate()?;
    Ok(c)
}

fn multimodal_params(settings: &Settings, seed: u64) -> Result<MultimodalParams> {
    let mut p = MultimodalParams {
        seed,
        ..MultimodalParams::default()
    };
    if let Some(v) = settings.u64("multimodal.structure_seed")? {
        p.generator.structure_seed = v;
    }
    if let Some(v) = settings.usize("multimodal.n_train")? {
        p.n_train = v;
    }
    if let Some(v) = settings.usize("multimodal.n_test")? {
        p.n_test = v;
    }
    if let Some(v) = settings.usize_list("multimodal.second")? {
        p.second = v;
    }
    if let Some(v) = settings.usize("multimodal.shared")? {
        p.shared = v;
    }
    if let Some(v) = settings.usize("multimodal.pretrain_epochs")? {
        p.train.pretrain.epochs = v;
    }
    if let Some(v) = settings.usize("multimodal.finetune_epochs")? {
        p.train.finetune.epochs = v;
    }
    if let Some(v) = settings.f64("multimodal.learning_rate")? {
        p.train.pretrain.learning_rate = v;
        p.train.finetune.learning_rate = v;
    }
    if let Some(v) = settings.usize("multimodal.batch_size")? {
        p.train.pretrain.batch_size = v;
        p.train.finetune.batch_size = v;
    }
    if let Some(v) = settings.bool("multimodal.pretraining")? {
        p.train.pretraining = v;
    }
    if let Some(v) = settings.usize("multimodal.n_faults")? {
        p.n_faults = v;
    }
    if let Some(v) = settings.usize("multimodal.trials")? {
        p.trials = v;
    }
    if let Some(v) = settings.usize("multimodal.comparison_seeds")? {
        p.comparison_seeds = v;
    }
    if let Some(v) = settings.f64("multimodal.spike_magnitude")? {
        p.spike_magnitude = v;
    }
    if let Some(v) = settings.f64("eval.target_fpr")? {
        p.target_fpr = v;
    }
    if let Some(v) = settings.usize("eval.window")? {
        p.window.window = v;
    }
    settings.apply_contribution(&mut p.contribution)?;
    Ok(p)
}

fn simulate(settings: &Settings, seed: u64, a: SimulateArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out)?;
    match a.mode {
        SimMode::Sim61 => {
            let sim = sim_config(settings, seed)?;
            let names = sim.feature_names();
            write_matrix_csv(&a.out.join("train.csv"), &names, &gen_simulated(&sim)?)?;
            let n_test = a.faults.unwrap_or(1);
            let spec = FaultSpec {
                n_faulty: settings.usize("sim61.n_faulty")?.unwrap_or(10).min(sim.dims_per_component - 1),
                direction: FaultDirection::Increase,
                component: None,
            };
            let mut test = Array2::zeros((n_test, sim.total_dims()));
            let mut events = Vec::new();
            for t in 0..n_test {
                let clean = sim.record((sim.n_records + t) as u64);
                let (faulty, mut label) = inject_fault(clean.view(), &sim, &spec, derive_seed(seed, t as u64))?;
                label.timestamp = t;
                test.row_mut(t).assign(&faulty);
                events.push(label);
            }
            write_matrix_csv(&a.out.join("test.csv"), &names, &test)?;
            write_events_csv(&a.out.join("events.csv"), &events)?;
        }
        SimMode::Multimodal => {
            let p = multimodal_params(settings, seed)?;
            let cfg: &MultimodalConfig = &p.generator;
            let train = gen_multimodal(cfg, p.n_train, seed, &[])?;
            let faults = random_faults(cfg, p.n_test, a.faults.unwrap_or(p.n_faults), derive_seed(seed, 1));
            let test = gen_multimodal(cfg, p.n_test, derive_seed(seed, 2), &faults)?;
            for (k, name) in train.names.iter().enumerate() {
                write_matrix_csv(&a.out.join(format!("train_{name}.csv")), &train.feature_names[k], &train.data[k])?;
                write_matrix_csv(&a.out.join(format!("test_{name}.csv")), &test.feature_names[k], &test.data[k])?;
            }
            write_events_csv(&a.out.join("events.csv"), &test.events)?;
        }
    }
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct LabelRow<'a> {
    class: &'a str,
    attack: &'a str,
    anomalous: u8,
}

fn ingest(a: IngestArgs) -> Result<()> {
    let schema = NslKddSchema::standard();
    let train = load_nslkdd(&a.train, &schema, None)?;
    let test = load_nslkdd(&a.test, &schema, Some(&train.vocabulary))?;
    std::fs::create_dir_all(&a.out)?;
    for (name, d) in [("train", &train), ("test", &test)] {
        write_matrix_csv(&a.out.join(format!("{name}.csv")), &d.feature_names, &d.vectors)?;
        let rows: Vec<_> = d
            .labels
            .iter()
            .zip(&d.attack_names)
            .map(|(c, attack)| LabelRow {
                class: c.name(),
                attack,
                anomalous: u8::from(*c != TrafficClass::Normal),
            })
            .collect();
        write_rows(&a.out.join(format!("{name}_labels.csv")), &rows)?;
    }
    let normals = train.rows_of(TrafficClass::Normal);
    eprintln!(
        "{} training records ({} normal), {} test records, {} features",
        train.labels.len(),
        normals.len(),
        test.labels.len(),
        train.feature_names.len()
    );
    Ok(())
}

fn experiment(settings: &Settings, seed: u64, a: ExperimentArgs) -> Result<()> {
    match a.name {
        ExperimentName::Sim61 => {
            if !(a.scale > 0.0 && a.scale <= 1.0) {
                return Err(Error::InvalidInput(format!("--scale must be in (0, 1], got {}", a.scale)));
            }
            let base = if a.grid { Sim61Params::full_grid() } else { Sim61Params::full_scale() };
            let mut p = base.with_scale(a.scale);
            p.seed = seed;
            if let Some(v) = settings.usize("sim61.runs")? {
                p.runs = v;
            }
            settings.apply_train(&mut p.train)?;
            settings.apply_contribution(&mut p.contribution)?;
            let report = experiment_sim61(&p)?;
            report.write(&a.out, &p, a.emit_plotdata)?;
            println!("metric,n_faulty,beta,gamma,recall,precision");
            for s in &report.summary {
                println!("{},{},{},{},{:.4},{:.4}", s.metric, s.n_faulty, s.beta, s.gamma, s.recall.mean, s.precision.mean);
            }
            if !report.all_exceeded() {
                eprintln!("warning: the MSE stayed below the threshold in some runs");
            }
        }
        ExperimentName::Nslkdd => {
            let dir = match a.data_dir.or(settings.string("nslkdd.data_dir")?.map(PathBuf::from)) {
                Some(d) => d,
                None => std::env::var_os(DATA_DIR_ENV).map(PathBuf::from).ok_or_else(|| {
                    Error::InvalidInput(format!("pass --data-dir or set {DATA_DIR_ENV}"))
                })?,
            };
            let mut p = NslKddParams::new(dir);
            p.subsample = a.subsample.or(settings.usize("nslkdd.subsample")?);
            if let Some(s) = settings.usize_list("nslkdd.seeds")? {
                p.seeds = s.into_iter().map(|v| v as u64).collect();
            } else {
                p.seeds = (0..5).map(|i| derive_seed(seed, i)).collect();
            }
            if let Some(m) = settings.usize("nslkdd.pca_components")? {
                p.pca_components = m;
            }
            settings.apply_train(&mut p.train)?;
            settings.apply_contribution(&mut p.contribution)?;
            let report = experiment_nslkdd(&p)?;
            report.write(&a.out, &p, a.emit_plotdata)?;
            println!("ae_auroc_max,{:.4}", report.ae_auroc_max);
            println!("pca_auroc,{:.4}", report.pca_auroc_max);
            for class in [TrafficClass::Dos, TrafficClass::U2r] {
                println!("{} top features: {}", class.name(), report.top_features(class, 10).join(" "));
            }
        }
        ExperimentName::Multimodal => {
            let p = multimodal_params(settings, seed)?;
            let report = experiment_multimodal(&p)?;
            report.write(&a.out, &p, a.emit_plotdata)?;
            let c = &report.comparison;
            println!("data_type,mae,mae_without_pretraining,per_type_ae");
            for (k, t) in c.types.iter().enumerate() {
                println!("{t},{:.6e},{:.6e},{:.6e}", c.mae[k], c.mae_without_pretraining[k], c.per_type_ae[k]);
            }
            println!("learnability trials separated: {}/{}", report.separating_trials(), report.trials.len());
            println!("mae tpr {:.3} fpr {:.3}", report.mae.tpr, report.mae.fpr);
            println!("merged ae tpr {:.3} fpr {:.3}", report.merged.tpr, report.merged.fpr);
        }
    }
    Ok(())
}
