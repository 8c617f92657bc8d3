use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tgc_core::fusion::predicted_label;
use tgc_core::layers::Aggregator;
use tgc_core::tensor::{gradcheck, relative_error, GradcheckReport, ParamSet};
use tgc_core::textpipe::encode;
use tgc_core::train::{evaluate, holdout_split};
use tgc_core::{
    Checkpoint, GraphConfig, LayerKind, ModalitySpec, Mode, Model, ModelConfig, ModelParams, Preprocessor, RunConfig, Sample,
    StopwordList, Tensor, TrainConfig, Trainer, Vocabulary,
};

use crate::dataset::{load_vector, Dataset, ModalitySource};
use crate::error::{CliError, CliResult};
use crate::report::{Report, WALL_TIME_KEY};

/// Gradient-check tolerance on the maximum relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_EPS: f64 = 1e-4;
/// Instances drawn per layout before a nonsmooth one is reported as is.
pub const GRADCHECK_MAX_DRAWS: usize = 5;

#[derive(Debug, Parser)]
#[command(name = "tgc", version, about = "Text classification over word co-occurrence graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the vocabulary and encoded corpus and print corpus statistics.
    Preprocess {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for vocab.tsv and corpus.tsv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a checkpoint plus a run report.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "out-model")]
        out_model: PathBuf,
        /// Report path; defaults to `<out-model>.report.tsv`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a labeled dataset.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Classify one raw text.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        text: String,
        /// `name=path` to a little-endian f32 file, or `name=[1.0,2.0]`.
        #[arg(long = "modality", value_name = "NAME=SOURCE")]
        modalities: Vec<String>,
    },
    /// Compare analytic gradients with finite differences on small random instances.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corrupts one analytic gradient entry (test hook).
        #[arg(long, hide = true)]
        inject_grad_error: bool,
    },
    /// Train full, gnn-only and mmc-only models with one seed and compare them.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Preprocess { data, config, out: dir } => preprocess(&data, config.as_deref(), &dir, out),
        Command::Train {
            data,
            config,
            out_model,
            report,
        } => train(&data, config.as_deref(), &out_model, report.as_deref(), out),
        Command::Eval { data, model, report } => eval(&data, &model, report.as_deref(), out),
        Command::Predict { model, text, modalities } => predict(&model, &text, &modalities, out),
        Command::Gradcheck {
            config,
            seed,
            inject_grad_error,
        } => gradcheck_cmd(config.as_deref(), seed, inject_grad_error, out),
        Command::Ablate { data, config, report } => ablate(&data, config.as_deref(), report.as_deref(), out),
    }
}

/// Reads the config; a relative `stopwords_file` resolves against the config's directory.
pub fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input("IoError", format!("{}: {e}", path.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(sw) = &cfg.stopwords_file {
        if sw.is_relative() {
            cfg.stopwords_file = Some(path.parent().unwrap_or(Path::new("")).join(sw));
        }
    }
    Ok(cfg)
}

/// Worker threads from `TGC_THREADS`, default 1.
pub fn threads_from_env() -> CliResult<usize> {
    match std::env::var("TGC_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(tgc_core::Error::Config(format!("TGC_THREADS must be a positive integer, got {v:?}")).into()),
        },
    }
}

fn stopwords(cfg: &RunConfig) -> CliResult<StopwordList> {
    match &cfg.stopwords_file {
        None => Ok(StopwordList::default()),
        Some(p) => StopwordList::from_file(p)
            .map_err(|e| CliError::input("IoError", format!("{}: {e}", p.display()))),
    }
}

/// Dataset plus everything derived from it before training.
struct Corpus {
    ds: Dataset,
    classes: Vec<String>,
    class_index: HashMap<String, usize>,
    tokens: Vec<Vec<String>>,
    stopwords: StopwordList,
}

impl Corpus {
    fn load(data: &Path, cfg: &RunConfig) -> CliResult<Self> {
        let ds = Dataset::load(data)?;
        let classes = ds.labels();
        if classes.len() < 2 {
            return Err(CliError::input(
                "ConfigError",
                format!("training data needs at least 2 distinct labels, found {}", classes.len()),
            ));
        }
        let stopwords = stopwords(cfg)?;
        let pre = Preprocessor::new(stopwords.clone());
        let tokens = ds.records.iter().map(|r| pre.process(&r.text)).collect();
        let class_index = classes.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        Ok(Corpus {
            ds,
            classes,
            class_index,
            tokens,
            stopwords,
        })
    }

    fn vocab(&self, idx: &[usize], min_count: usize) -> CliResult<Vocabulary> {
        Ok(Vocabulary::from_token_docs(
            idx.iter().map(|&i| self.tokens[i].as_slice()),
            min_count,
        )?)
    }
}

/// Turns records into model inputs using a fixed vocabulary and class list.
#[allow(clippy::too_many_arguments)]
fn build_samples(
    ds: &Dataset,
    idx: &[usize],
    tokens: &[Vec<String>],
    vocab: &Vocabulary,
    class_index: &HashMap<String, usize>,
    specs: &[ModalitySpec],
    graph: &GraphConfig,
) -> CliResult<Vec<Sample>> {
    idx.iter()
        .map(|&i| {
            let r = &ds.records[i];
            let line = ds.lines[i];
            let label = *class_index.get(&r.label).ok_or_else(|| {
                CliError::input(
                    "UnknownLabel",
                    format!("line {line}, record {:?}: label {:?} is not known to the model", r.id, r.label),
                )
            })?;
            let mods = ds.modality_vectors(i, specs)?;
            Sample::prepare(&encode(&tokens[i], vocab), mods, label, graph)
                .map_err(|e| CliError::in_record(e, line, &r.id))
        })
        .collect()
}

/// Initializes from the run seed and trains for the configured epochs.
fn fit(model_cfg: ModelConfig, train_cfg: &TrainConfig, data: &[Sample]) -> CliResult<(Model<f32>, Vec<f64>)> {
    let model = Model::new(model_cfg, &mut ChaCha8Rng::seed_from_u64(train_cfg.seed))?;
    let mut tcfg = train_cfg.clone();
    tcfg.threads = threads_from_env()?;
    let mut trainer = Trainer::new(model, tcfg)?;
    let losses = (0..train_cfg.epochs)
        .map(|e| trainer.train_epoch(data, e))
        .collect::<tgc_core::Result<Vec<f64>>>()?;
    Ok((trainer.into_model(), losses))
}

fn emit(report: &Report, path: Option<&Path>, out: &mut dyn Write) -> CliResult<()> {
    out.write_all(report.to_tsv().as_bytes())?;
    if let Some(p) = path {
        report.save(p)?;
    }
    Ok(())
}

fn preprocess(data: &Path, config: Option<&Path>, dir: &Path, out: &mut dyn Write) -> CliResult<()> {
    let cfg = load_config(config)?;
    let corpus = Corpus::load(data, &cfg)?;
    let all: Vec<usize> = (0..corpus.ds.records.len()).collect();
    let vocab = corpus.vocab(&all, cfg.min_count)?;
    std::fs::create_dir_all(dir)?;

    let mut vocab_tsv = String::new();
    for (id, (tok, df)) in vocab.entries().enumerate() {
        vocab_tsv.push_str(&format!("{}\t{tok}\t{df}\n", id + 1));
    }
    std::fs::write(dir.join("vocab.tsv"), vocab_tsv)?;

    let mut corpus_tsv = String::new();
    let (mut nodes, mut edges, mut graphs) = (0usize, 0usize, 0usize);
    for (i, r) in corpus.ds.records.iter().enumerate() {
        let ids = encode(&corpus.tokens[i], &vocab);
        let label = corpus.class_index[&r.label];
        let joined: Vec<String> = ids.iter().map(usize::to_string).collect();
        corpus_tsv.push_str(&format!("{}\t{label}\t{}\n", r.id, joined.join(" ")));
        if !ids.is_empty() {
            let g = tgc_core::graph::build_graph(&ids, &cfg.graph)?;
            nodes += g.node_count();
            edges += g.edge_count();
            graphs += 1;
        }
    }
    std::fs::write(dir.join("corpus.tsv"), corpus_tsv)?;

    let mut report = Report::new();
    report.push("command", "preprocess");
    report.push("docs", corpus.ds.records.len());
    report.push("empty_docs", corpus.ds.records.len() - graphs);
    report.push("classes", corpus.classes.join(","));
    report.push("vocab_size", vocab.len());
    report.push("mean_graph_nodes", nodes as f64 / graphs.max(1) as f64);
    report.push("mean_graph_edges", edges as f64 / graphs.max(1) as f64);
    emit(&report, None, out)
}

fn train(
    data: &Path,
    config: Option<&Path>,
    out_model: &Path,
    report_path: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let start = Instant::now();
    let mut cfg = load_config(config)?;
    let corpus = Corpus::load(data, &cfg)?;
    cfg.modalities = corpus.ds.resolve_modalities(&cfg.modalities)?;
    let all: Vec<usize> = (0..corpus.ds.records.len()).collect();
    let vocab = corpus.vocab(&all, cfg.min_count)?;
    let model_cfg = cfg.model_config(vocab.len(), corpus.classes.len());
    let samples = build_samples(
        &corpus.ds,
        &all,
        &corpus.tokens,
        &vocab,
        &corpus.class_index,
        model_cfg.active_modalities(),
        &cfg.graph,
    )?;
    let (model, losses) = fit(model_cfg, &cfg.train, &samples)?;
    let metrics = evaluate(&model, &samples)?;

    let ckpt = Checkpoint::new(cfg.clone(), corpus.classes.clone(), vocab, corpus.stopwords, model)?;
    ckpt.save(out_model)?;

    let mut report = Report::new();
    report.push("command", "train");
    report.push("seed", cfg.train.seed);
    report.config("", &cfg);
    report.push("docs", samples.len());
    report.push("vocab_size", ckpt.vocab.len());
    report.push("classes", corpus.classes.join(","));
    report.losses("", &losses);
    report.metrics("train.", &metrics, &corpus.classes);
    report.push(WALL_TIME_KEY, start.elapsed().as_secs_f64());
    let default_path = PathBuf::from(format!("{}.report.tsv", out_model.display()));
    emit(&report, Some(report_path.unwrap_or(&default_path)), out)
}

fn eval(data: &Path, model_path: &Path, report_path: Option<&Path>, out: &mut dyn Write) -> CliResult<()> {
    let start = Instant::now();
    let ckpt = Checkpoint::load(model_path)?;
    let ds = Dataset::load(data)?;
    let pre = ckpt.preprocessor();
    let tokens: Vec<Vec<String>> = ds.records.iter().map(|r| pre.process(&r.text)).collect();
    let class_index = ckpt.classes.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
    let all: Vec<usize> = (0..ds.records.len()).collect();
    let samples = build_samples(
        &ds,
        &all,
        &tokens,
        &ckpt.vocab,
        &class_index,
        ckpt.model.cfg.active_modalities(),
        &ckpt.config.graph,
    )?;
    let metrics = evaluate(&ckpt.model, &samples)?;
    let mut report = Report::new();
    report.push("command", "eval");
    report.push("seed", ckpt.config.train.seed);
    report.push("docs", samples.len());
    report.metrics("", &metrics, &ckpt.classes);
    report.push(WALL_TIME_KEY, start.elapsed().as_secs_f64());
    emit(&report, report_path, out)
}

fn parse_modality_arg(arg: &str) -> CliResult<(String, ModalitySource)> {
    let (name, src) = arg
        .split_once('=')
        .ok_or_else(|| CliError::input("ModalityError", format!("expected NAME=SOURCE, got {arg:?}")))?;
    let src = if src.trim_start().starts_with('[') {
        let values: Vec<f32> = serde_json::from_str(src)
            .map_err(|e| CliError::input("ModalityError", format!("modality {name:?}: {e}")))?;
        ModalitySource::Inline(values)
    } else {
        ModalitySource::Path(src.to_string())
    };
    Ok((name.to_string(), src))
}

fn predict(model_path: &Path, text: &str, modality_args: &[String], out: &mut dyn Write) -> CliResult<()> {
    let ckpt = Checkpoint::load(model_path)?;
    let mut given: HashMap<String, ModalitySource> = HashMap::new();
    for arg in modality_args {
        let (name, src) = parse_modality_arg(arg)?;
        given.insert(name, src);
    }
    let active = ckpt.model.cfg.active_modalities();
    if let Some(extra) = given.keys().find(|k| !ckpt.config.modalities.iter().any(|m| &m.name == *k)) {
        return Err(CliError::input("ModalityError", format!("model has no modality {extra:?}")));
    }
    let mods = active
        .iter()
        .map(|spec| {
            let src = given.get(&spec.name).ok_or_else(|| {
                CliError::input("ModalityError", format!("missing required modality {:?}", spec.name))
            })?;
            let v = load_vector(src, Path::new(""), Some(spec))?;
            Ok(Tensor::from_vec(&[1, v.len()], v)?)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let ids = encode(&ckpt.preprocessor().process(text), &ckpt.vocab);
    let sample = Sample::prepare(&ids, mods, 0, &ckpt.config.graph)?;
    let probs = ckpt.model.predict(&sample)?;
    writeln!(out, "label\t{}", ckpt.classes[predicted_label(&probs)])?;
    for (name, p) in ckpt.classes.iter().zip(probs.data()) {
        writeln!(out, "prob.{name}\t{p:.6}")?;
    }
    Ok(())
}

/// One gradient check: a random 3–5 node document pair for the given layout.
pub fn gradcheck_instance(
    mode: Mode,
    kind: LayerKind,
    aggregator: Aggregator,
    base: &RunConfig,
    rng: &mut ChaCha8Rng,
    inject: bool,
) -> CliResult<InstanceCheck> {
    let vocab_size = 6;
    let cfg = ModelConfig {
        mode,
        layer_kind: kind,
        vocab_size,
        classes: 3,
        d_embed: 4,
        widths: vec![5, 3],
        modalities: vec![
            ModalitySpec { name: "a".into(), dim: 3 },
            ModalitySpec { name: "b".into(), dim: 2 },
        ],
        d_fuse: 3,
        slope: base.leaky_slope,
        sage_sample_size: 2,
        sage_aggregator: aggregator,
        graph: GraphConfig {
            window_size: 2,
            ..base.graph.clone()
        },
        sample_seed: rng.gen(),
    };
    let mut model: Model<f64> = Model::new(cfg, rng)?;
    for v in model.params.embedding.data_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let mut docs = Vec::new();
    for _ in 0..2 {
        let n = rng.gen_range(3..=5);
        let mut ids: Vec<usize> = rand::seq::index::sample(rng, vocab_size + 1, n).into_vec();
        for _ in 0..2 {
            let extra = ids[rng.gen_range(0..n)];
            ids.insert(rng.gen_range(0..=ids.len()), extra);
        }
        let mods = [3, 2]
            .iter()
            .map(|&d| Tensor::from_vec(&[1, d], (0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect()))
            .collect::<tgc_core::Result<Vec<_>>>()?;
        docs.push(Sample::prepare(&ids, mods, rng.gen_range(0..3), &model.cfg.graph)?);
    }
    let batch: Vec<&Sample> = docs.iter().collect();
    let seeds: Vec<u64> = (0..batch.len()).map(|_| rng.gen()).collect();
    let mut grads = model.params.zeros_like();
    model.batch_loss_and_grad(&batch, &seeds, &mut grads)?;
    if inject {
        grads.head.b.data_mut()[0] += 1.0;
    }
    let cfg = model.cfg.clone();
    let mut params = model.params.clone();
    let loss = |p: &ModelParams<f64>| {
        Model {
            cfg: cfg.clone(),
            params: p.clone(),
        }
        .batch_loss(&batch, &seeds)
    };
    let report = gradcheck(&mut params, &grads, GRADCHECK_EPS, loss)?;
    let smooth = match &report.worst {
        Some((name, idx)) if report.max_rel_error >= GRADCHECK_TOLERANCE => {
            let coarse = central_difference(&mut params, name, *idx, GRADCHECK_EPS, loss)?;
            let fine = central_difference(&mut params, name, *idx, GRADCHECK_EPS / 100.0, loss)?;
            relative_error(coarse, fine) < GRADCHECK_TOLERANCE
        }
        _ => true,
    };
    Ok(InstanceCheck { report, smooth })
}

/// A finite-difference comparison, and whether the loss looked smooth at the
/// worst entry. Central differences at two step sizes disagree when the step
/// straddles a max-pool tie or a LeakyReLU corner.
pub struct InstanceCheck {
    pub report: GradcheckReport,
    pub smooth: bool,
}

fn central_difference<F>(params: &mut ModelParams<f64>, name: &str, idx: usize, eps: f64, loss: F) -> CliResult<f64>
where
    F: Fn(&ModelParams<f64>) -> tgc_core::Result<f64>,
{
    let ti = params
        .named_tensors()
        .iter()
        .position(|(n, _)| n == name)
        .expect("worst entry names a parameter");
    let orig = params.tensors_mut()[ti].data()[idx];
    params.tensors_mut()[ti].data_mut()[idx] = orig + eps;
    let plus = loss(params)?;
    params.tensors_mut()[ti].data_mut()[idx] = orig - eps;
    let minus = loss(params)?;
    params.tensors_mut()[ti].data_mut()[idx] = orig;
    Ok((plus - minus) / (2.0 * eps))
}

/// Every mode × layer kind, with both Sage aggregators.
pub fn gradcheck_layouts() -> Vec<(Mode, LayerKind, Aggregator)> {
    let mut out = Vec::new();
    for mode in Mode::ALL {
        for kind in LayerKind::ALL {
            out.push((mode, kind, Aggregator::Mean));
            if kind == LayerKind::Sage {
                out.push((mode, kind, Aggregator::Pooling));
            }
        }
    }
    out
}

fn gradcheck_cmd(config: Option<&Path>, seed: u64, inject: bool, out: &mut dyn Write) -> CliResult<()> {
    let cfg = load_config(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Option<(f64, String)> = None;
    let mut redraws = 0;
    for (mode, kind, agg) in gradcheck_layouts() {
        let mut rep = gradcheck_instance(mode, kind, agg, &cfg, &mut rng, inject)?;
        let mut draws = 1;
        while !rep.smooth && draws < GRADCHECK_MAX_DRAWS {
            rep = gradcheck_instance(mode, kind, agg, &cfg, &mut rng, inject)?;
            draws += 1;
        }
        redraws += draws - 1;
        let rep = rep.report;
        let layout = match kind {
            LayerKind::Sage => format!("{mode}\t{kind}-{}", agg.as_str()),
            _ => format!("{mode}\t{kind}"),
        };
        let param = rep.worst.as_ref().map_or("-".to_string(), |(n, i)| format!("{n}[{i}]"));
        writeln!(out, "gradcheck\t{layout}\t{:e}\t{param}", rep.max_rel_error)?;
        if worst.as_ref().map_or(true, |(e, _)| rep.max_rel_error > *e) {
            worst = Some((rep.max_rel_error, format!("{} ({})", param, layout.replace('\t', " "))));
        }
    }
    let (err, at) = worst.unwrap_or((0.0, "-".into()));
    writeln!(out, "nonsmooth_redraws\t{redraws}")?;
    writeln!(out, "max_rel_error\t{err:e}")?;
    if err < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(CliError::GradcheckFailed(format!(
            "max relative error {err:e} >= {GRADCHECK_TOLERANCE:e} at {at}"
        )))
    }
}

/// Display names of the three ablation rows.
pub fn ablation_row(mode: Mode) -> &'static str {
    match mode {
        Mode::Full => "GNN-MMC",
        Mode::GnnOnly => "GNN",
        Mode::MmcOnly => "MMC",
    }
}

fn ablate(data: &Path, config: Option<&Path>, report_path: Option<&Path>, out: &mut dyn Write) -> CliResult<()> {
    let start = Instant::now();
    let mut cfg = load_config(config)?;
    let corpus = Corpus::load(data, &cfg)?;
    cfg.modalities = corpus.ds.resolve_modalities(&cfg.modalities)?;
    if cfg.modalities.is_empty() {
        return Err(CliError::input(
            "NoModalities",
            "ablation needs at least one modality; without one mmc-only and gnn-only are degenerate",
        ));
    }
    let n = corpus.ds.records.len();
    let (train_idx, held_idx) = holdout_split(n, cfg.holdout_fraction, cfg.train.seed);
    let eval_idx = if held_idx.is_empty() { train_idx.clone() } else { held_idx };
    let vocab = corpus.vocab(&train_idx, cfg.min_count)?;
    let samples = |idx: &[usize]| {
        build_samples(
            &corpus.ds,
            idx,
            &corpus.tokens,
            &vocab,
            &corpus.class_index,
            &cfg.modalities,
            &cfg.graph,
        )
    };
    let (train_set, eval_set) = (samples(&train_idx)?, samples(&eval_idx)?);

    let mut report = Report::new();
    report.push("command", "ablate");
    report.push("seed", cfg.train.seed);
    report.config("", &cfg);
    report.push("train_docs", train_set.len());
    report.push("eval_docs", eval_set.len());
    let mut table = String::from("model\tacc\tf1\n");
    for mode in Mode::ALL {
        let mut mcfg = cfg.clone();
        mcfg.mode = mode;
        let (model, losses) = fit(mcfg.model_config(vocab.len(), corpus.classes.len()), &cfg.train, &train_set)?;
        let metrics = evaluate(&model, &eval_set)?;
        let prefix = format!("{mode}.");
        report.losses(&prefix, &losses);
        report.metrics(&prefix, &metrics, &corpus.classes);
        table.push_str(&format!(
            "{}\t{:.4}\t{:.4}\n",
            ablation_row(mode),
            metrics.accuracy,
            metrics.aggregate_f1
        ));
    }
    report.push(WALL_TIME_KEY, start.elapsed().as_secs_f64());
    report.set_table(table);
    emit(&report, report_path, out)
}
