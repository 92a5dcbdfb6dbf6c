use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use han_affect::analysis::analyze as analyze_corpus;
use han_affect::corpus::{
    build_vocabulary, read_session_jsonl, select_view, write_session_jsonl, EmbeddingTable, Label, ParseOptions,
    PretrainedVectors, Session,
};
use han_affect::lexicon::{load_lexicon, stack_lexica, LexiconStack};
use han_affect::model::{check_gradients, ClassWeights, HanParams, IndexedSession, Limits, WordEncoder};
use han_affect::seed;
use han_affect::synth::{generate, toy_corpus, SynthSpec};
use han_affect::training::{
    evaluate, kfold_split, run_cv, train_one, Metrics, ModelArtifact, ModelKind, Resources, TrainConfig,
};
use serde::Serialize;

use crate::config::{config_error, resolve, ConfigError, Needs, Overrides, RunConfig, SEED_ENV};

pub const GRADCHECK_THRESHOLD: f64 = 1e-4;
const GRADCHECK_STEP: f64 = 1e-5;

/// Every report is wrapped with the resolved config, its hash and the seed.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    config_hash: String,
    seed: u64,
    config: &'a RunConfig,
    report: T,
}

fn envelope<T: Serialize>(cfg: &RunConfig, report: T) -> Envelope<'_, T> {
    Envelope {
        config_hash: cfg.hash(),
        seed: cfg.train.seed,
        config: cfg,
        report,
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Writes the JSON next to other outputs, or prints it when there is no
/// output directory.
fn emit_json(cfg: &RunConfig, name: &str, json: &str) -> Result<()> {
    match &cfg.output_dir {
        Some(dir) => {
            let path = write_file(dir, name, json)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{json}"),
    }
    Ok(())
}

struct Inputs {
    sessions: Vec<Session>,
    stack: Option<LexiconStack>,
    embeddings: Option<PretrainedVectors>,
}

fn load_stack(cfg: &RunConfig) -> Result<Option<LexiconStack>> {
    if cfg.lexica.is_empty() {
        return Ok(None);
    }
    let lexica = cfg
        .lexica
        .iter()
        .map(|p| load_lexicon(p).with_context(|| format!("loading lexicon {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let stack = stack_lexica(lexica)?;
    Ok(Some(if cfg.scale_lexica { stack.min_max_scaled() } else { stack }))
}

fn load_inputs(cfg: &RunConfig, with_embeddings: bool) -> Result<Inputs> {
    let path = cfg.corpus.as_ref().ok_or_else(|| config_error("corpus", "a corpus path is required"))?;
    let options = ParseOptions {
        require_labels: true,
        phq8_threshold: cfg.phq8_threshold,
    };
    let sessions = read_session_jsonl(path, options).with_context(|| format!("reading corpus {}", path.display()))?;
    if cfg.train.model.needs_summary() {
        if let Some(s) = sessions.iter().find(|s| s.summary.is_none()) {
            return Err(config_error(
                "model",
                format!("{} requires summaries, session `{}` has none", cfg.train.model.as_str(), s.id),
            )
            .into());
        }
    }
    let stack = load_stack(cfg)?;
    let embeddings = match (&cfg.embeddings, with_embeddings) {
        (Some(p), true) => {
            let keep: HashSet<String> = sessions
                .iter()
                .flat_map(|s| s.turns.iter().flat_map(|t| t.tokens.iter()).chain(s.summary.iter().flatten()))
                .cloned()
                .collect();
            let v = PretrainedVectors::load(p, cfg.train.embedding_dim, Some(&keep))
                .with_context(|| format!("loading embeddings {}", p.display()))?;
            Some(v)
        }
        _ => None,
    };
    Ok(Inputs {
        sessions,
        stack,
        embeddings,
    })
}

fn metrics_table(m: &Metrics) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<14} {:>10} {:>10} {:>10} {:>8}", "class", "precision", "recall", "F1", "support");
    for (label, c) in Label::ALL.iter().zip(&m.per_class) {
        let _ = writeln!(
            out,
            "{:<14} {:>10.4} {:>10.4} {:>10.4} {:>8}",
            label.as_str(),
            c.precision,
            c.recall,
            c.f1,
            c.support
        );
    }
    let _ = writeln!(out, "macro-F1 {:.4}  UAR {:.4}  accuracy {:.4}", m.macro_f1, m.uar, m.accuracy);
    out
}

pub fn synth(spec_path: Option<&Path>, out: &Path, seed_flag: Option<u64>, env_seed: Option<&str>) -> Result<ExitCode> {
    let mut spec = match spec_path {
        Some(p) => {
            let text =
                fs::read_to_string(p).map_err(|e| config_error("spec", format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str::<SynthSpec>(&text).map_err(|e| config_error("spec", e))?
        }
        None => SynthSpec::default(),
    };
    if let Some(s) = env_seed {
        spec.seed = s
            .trim()
            .parse()
            .map_err(|_| config_error(SEED_ENV, format!("`{s}` is not a non-negative integer")))?;
    }
    if let Some(s) = seed_flag {
        spec.seed = s;
    }
    spec.validate().map_err(|e| ConfigError(format!("invalid spec: {e}")))?;
    let corpus = generate(&spec)?;
    for w in &corpus.warnings {
        eprintln!("warning: {w}");
    }

    let corpus_path = write_file(out, "corpus.jsonl", &write_session_jsonl(&corpus.sessions)?)?;
    let mut lexicon_paths = Vec::new();
    for lex in &corpus.lexica {
        lexicon_paths.push(write_file(&out.join("lexica"), &format!("{}.tsv", lex.name), &lex.to_tsv())?);
    }
    write_file(out, "spec.json", &to_json(&spec)?)?;
    let run = RunConfig {
        corpus: Some(corpus_path.clone()),
        lexica: lexicon_paths,
        categories: corpus.categories.clone(),
        output_dir: Some(out.join("runs")),
        train: TrainConfig {
            model: ModelKind::HanL,
            seed: spec.seed,
            ..TrainConfig::default()
        },
        ..RunConfig::default()
    };
    write_file(out, "config.json", &to_json(&run)?)?;
    println!(
        "wrote {} sessions to {} with {} lexica (seed {})",
        corpus.sessions.len(),
        corpus_path.display(),
        corpus.lexica.len(),
        spec.seed
    );
    Ok(ExitCode::SUCCESS)
}

pub fn analyze(overrides: &Overrides, env_seed: Option<&str>) -> Result<ExitCode> {
    let cfg = resolve(overrides, env_seed)?;
    cfg.validate(Needs {
        corpus: true,
        lexica: true,
        output: false,
    })?;
    let inputs = load_inputs(&cfg, false)?;
    let stack = inputs.stack.as_ref().expect("lexica validated");
    for (i, c) in cfg.categories.iter().enumerate() {
        stack
            .column(&c.lexicon, &c.category)
            .map_err(|e| config_error(&format!("categories[{i}]"), e))?;
    }
    let report = analyze_corpus(&inputs.sessions, stack, &cfg.categories, cfg.train.view)?;
    print!("{}", report.to_table());
    emit_json(&cfg, "analysis.json", &to_json(&envelope(&cfg, &report))?)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct TrainReport<'a> {
    model: ModelKind,
    train_size: usize,
    validation_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    history: Option<&'a han_affect::training::History>,
    #[serde(skip_serializing_if = "Option::is_none")]
    embedding_coverage: Option<f64>,
    validation: &'a Metrics,
}

const TRAIN_STREAM: u64 = 0x5452_4e31;

pub fn train(overrides: &Overrides, env_seed: Option<&str>) -> Result<ExitCode> {
    let cfg = resolve(overrides, env_seed)?;
    cfg.validate(Needs {
        corpus: true,
        lexica: false,
        output: true,
    })?;
    let inputs = load_inputs(&cfg, true)?;
    let t = &cfg.train;
    let viewed = inputs
        .sessions
        .iter()
        .map(|s| select_view(s, t.view))
        .collect::<han_affect::Result<Vec<_>>>()?;
    let labels = viewed.iter().map(Session::require_label).collect::<han_affect::Result<Vec<_>>>()?;
    let plan = kfold_split(&labels, t.folds, t.seed)?;
    let split = &plan.folds[0];
    let pick = |idx: &[usize]| idx.iter().map(|&i| viewed[i].clone()).collect::<Vec<_>>();
    let (train_set, val_set) = (pick(&split.train), pick(&split.validation));
    let resources = Resources {
        stack: inputs.stack.as_ref(),
        embeddings: inputs.embeddings.as_ref(),
    };
    let outcome = train_one(&train_set, &val_set, &resources, t, seed::derive(t.seed, &[TRAIN_STREAM]))?;
    let preds = outcome.model.predict(&val_set, resources.stack)?;
    let truth: Vec<Label> = split.validation.iter().map(|&i| labels[i]).collect();
    let metrics = evaluate(&preds, &truth)?;

    let dir = cfg.output_dir.as_ref().expect("output validated");
    let artifact = ModelArtifact::from_trained(&outcome.model, t.view);
    let model_path = write_file(dir, "model.json", &artifact.to_json()?)?;
    let report = TrainReport {
        model: t.model,
        train_size: train_set.len(),
        validation_size: val_set.len(),
        history: outcome.history.as_ref(),
        embedding_coverage: outcome.coverage.map(|c| c.fraction),
        validation: &metrics,
    };
    write_file(dir, "train_report.json", &to_json(&envelope(&cfg, &report))?)?;
    println!(
        "{} trained on {} sessions, validated on {}",
        t.model.display_name(),
        train_set.len(),
        val_set.len()
    );
    if let Some(h) = &outcome.history {
        println!("best epoch {} of {}", h.best_epoch, h.epochs.len());
    }
    print!("{}", metrics_table(&metrics));
    eprintln!("wrote {}", model_path.display());
    Ok(ExitCode::SUCCESS)
}

pub fn cv(overrides: &Overrides, env_seed: Option<&str>) -> Result<ExitCode> {
    let cfg = resolve(overrides, env_seed)?;
    cfg.validate(Needs {
        corpus: true,
        lexica: false,
        output: false,
    })?;
    let inputs = load_inputs(&cfg, true)?;
    let resources = Resources {
        stack: inputs.stack.as_ref(),
        embeddings: inputs.embeddings.as_ref(),
    };
    let (report, timing) = run_cv(&inputs.sessions, &resources, &cfg.train)?;
    let table = report.to_table();
    print!("{table}");
    println!("wall-clock {:.1}s", timing.total_seconds);
    let json = to_json(&envelope(&cfg, &report))?;
    emit_json(&cfg, "cv_report.json", &json)?;
    if let Some(dir) = &cfg.output_dir {
        write_file(dir, "cv_report.txt", &table)?;
        write_file(dir, "cv_timing.json", &to_json(&timing)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct EvalReport<'a> {
    checkpoint: &'a Path,
    sessions: usize,
    metrics: &'a Metrics,
}

pub fn eval(overrides: &Overrides, checkpoint: &Path, env_seed: Option<&str>) -> Result<ExitCode> {
    let cfg = resolve(overrides, env_seed)?;
    cfg.validate(Needs {
        corpus: true,
        lexica: false,
        output: false,
    })?;
    let text = fs::read_to_string(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    let artifact = ModelArtifact::from_json(&text)?;
    if artifact.conditioning() && cfg.lexica.is_empty() {
        return Err(config_error("lexica", "the checkpoint is a conditioned model and needs its lexica").into());
    }
    let view = artifact.view();
    let needs_stack = artifact.conditioning();
    let model = artifact.into_trained()?;
    let inputs = load_inputs(&cfg, false)?;
    let viewed = inputs
        .sessions
        .iter()
        .map(|s| select_view(s, view))
        .collect::<han_affect::Result<Vec<_>>>()?;
    let truth = viewed.iter().map(Session::require_label).collect::<han_affect::Result<Vec<_>>>()?;
    let preds = model.predict(&viewed, if needs_stack { inputs.stack.as_ref() } else { None })?;
    let metrics = evaluate(&preds, &truth)?;
    print!("{}", metrics_table(&metrics));
    let report = EvalReport {
        checkpoint,
        sessions: viewed.len(),
        metrics: &metrics,
    };
    if let Some(dir) = &cfg.output_dir {
        let path = write_file(dir, "eval_report.json", &to_json(&envelope(&cfg, &report))?)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct GradcheckReport {
    model: ModelKind,
    sessions: usize,
    parameters: usize,
    checked: usize,
    max_rel_error: f64,
    worst_index: usize,
    analytic: f64,
    numeric: f64,
    step: f64,
    threshold: f64,
    passed: bool,
    seconds: f64,
}

const GRADCHECK_SESSIONS: usize = 3;

pub fn gradcheck(overrides: &Overrides, samples: Option<usize>, env_seed: Option<&str>) -> Result<ExitCode> {
    let start = Instant::now();
    let use_toy = overrides.config.is_none() && overrides.corpus.is_none();
    let mut cfg = resolve(overrides, env_seed)?;
    let (sessions, stack) = if use_toy {
        let toy = toy_corpus()?;
        cfg.train.model = overrides
            .model
            .as_deref()
            .map(str::parse)
            .transpose()
            .map_err(|e| config_error("model", e))?
            .unwrap_or(ModelKind::HanLs);
        cfg.train.hidden = overrides.hidden.unwrap_or(4);
        cfg.train.attn_dim = overrides.attn_dim.unwrap_or(5);
        cfg.train.embedding_dim = overrides.embedding_dim.unwrap_or(6);
        cfg.train
            .validate()
            .map_err(|e| ConfigError(format!("invalid config: {}", e.to_string().trim_start_matches("invalid argument: "))))?;
        (toy.sessions, Some(stack_lexica(toy.lexica)?))
    } else {
        cfg.validate(Needs {
            corpus: true,
            lexica: false,
            output: false,
        })?;
        let inputs = load_inputs(&cfg, false)?;
        let mut sessions = inputs.sessions;
        sessions.truncate(GRADCHECK_SESSIONS);
        (sessions, inputs.stack)
    };
    let t = &cfg.train;
    let mut han = t
        .han_config(if t.model.needs_lexica() { stack.as_ref().map_or(0, LexiconStack::total_dim) } else { 0 })
        .ok_or_else(|| config_error("model", "gradient checks need a HAN model"))?;
    han.dropout = 0.0;
    han.train_embeddings = true;
    han.word_encoder = WordEncoder::BiGru;
    han.validate().map_err(|e| config_error("model", e))?;

    let viewed = sessions
        .iter()
        .map(|s| select_view(s, t.view))
        .collect::<han_affect::Result<Vec<_>>>()?;
    let vocab = build_vocabulary(&viewed, 1)?;
    let stack_ref = if han.conditioning { stack.as_ref() } else { None };
    let indexed: Vec<IndexedSession> =
        viewed.iter().map(|s| IndexedSession::new(s, &vocab, stack_ref, Limits::default())).collect();
    let mut rng = seed::rng(t.seed, &[]);
    let table = EmbeddingTable::random(&vocab, han.embedding_dim, &mut rng);
    let params = HanParams::init(&han, &table, &mut rng)?;
    let labels = viewed.iter().map(Session::require_label).collect::<han_affect::Result<Vec<_>>>()?;
    let weights = ClassWeights::balanced(&labels);
    let total = params.trainable(true).iter().map(|x| x.len()).sum::<usize>();
    let r = check_gradients(&indexed, &params, &han, &weights, samples.unwrap_or(usize::MAX), GRADCHECK_STEP, t.seed)?;
    let report = GradcheckReport {
        model: t.model,
        sessions: indexed.len(),
        parameters: total,
        checked: r.checked,
        max_rel_error: r.max_rel_error,
        worst_index: r.worst_index,
        analytic: r.analytic,
        numeric: r.numeric,
        step: GRADCHECK_STEP,
        threshold: GRADCHECK_THRESHOLD,
        passed: r.max_rel_error < GRADCHECK_THRESHOLD,
        seconds: start.elapsed().as_secs_f64(),
    };
    println!(
        "{}: max relative error {:.3e} over {} of {} parameters ({}), {:.1}s",
        t.model.display_name(),
        report.max_rel_error,
        report.checked,
        report.parameters,
        if report.passed { "pass" } else { "FAIL" },
        report.seconds
    );
    if let Some(dir) = &cfg.output_dir {
        write_file(dir, "gradcheck.json", &to_json(&envelope(&cfg, &report))?)?;
    }
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
