use std::fs;
use std::path::{Path, PathBuf};

use dialsum::corpus::{compute_stats, load_corpus, stats_csv, stats_table, utterance_density, Corpus, Format};
use dialsum::inference::{detokenize, summarize};
use dialsum::metrics::{corpus_rouge_text, format_table, table_csv, SystemResult};
use dialsum::model::{Model, ModelConfig};
use dialsum::preprocess::{import_tags, preprocess as tag_corpus};
use dialsum::selection::SelectionKind;
use dialsum::style::{
    build_styles, clusters_csv, feature_rank_csv, kmeans, pca_2d, rank_features_by_std, styles_csv, tfidf,
    tfidf_csv,
};
use dialsum::tagger::LexiconRuleTagger;
use dialsum::train::{prepare, prepare_dialogue, train as run_training, TrainConfig};
use dialsum::vocab::{build_vocab, Vocabulary};
use dialsum::{toy, Error};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::manifest::RunManifest;
use crate::{CliError, TrainArgs};

type Result<T> = std::result::Result<T, CliError>;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write(dir: &Path, name: &str, text: &str, manifest: &mut RunManifest) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    manifest.output(dir, name)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn format_of(path: &Path, format: Option<&str>) -> Result<Format> {
    Ok(match format {
        Some(f) => f.parse()?,
        None => Format::from_path(path),
    })
}

/// Load a corpus and tag it with the bundled tagger if it is not tagged yet.
fn load_tagged(path: &Path) -> Result<Corpus> {
    let corpus = load_corpus(path, Format::from_path(path))?;
    if corpus.is_tagged() {
        return Ok(corpus);
    }
    Ok(tag_corpus(&corpus, &LexiconRuleTagger::bundled())?)
}

pub fn toy(out: &Path, args: Vec<String>) -> Result<()> {
    create_dir(out)?;
    let mut manifest = RunManifest::new("toy", args, json!({}), None);
    let (train, dev, test) = toy::splits();
    for (name, split) in [("train.json", train), ("dev.json", dev), ("test.json", test)] {
        write(out, name, &(split.to_raw_json() + "\n"), &mut manifest)?;
    }
    manifest.write(out)?;
    Ok(())
}

pub fn stats(
    paths: &[PathBuf],
    format: Option<&str>,
    bin_width: Option<usize>,
    out: Option<&Path>,
    args: Vec<String>,
) -> Result<()> {
    let mut all = Vec::with_capacity(paths.len());
    let mut corpora = Vec::with_capacity(paths.len());
    for p in paths {
        let corpus = load_corpus(p, format_of(p, format)?)?;
        all.push(compute_stats(&corpus)?);
        corpora.push(corpus);
    }
    print!("{}", stats_table(&all));
    let Some(out) = out else { return Ok(()) };
    create_dir(out)?;
    let config = json!({ "format": format, "bin_width": bin_width });
    let mut manifest = RunManifest::new("stats", args, config, None);
    for p in paths {
        manifest.input(p)?;
    }
    write(out, "stats.csv", &stats_csv(&all), &mut manifest)?;
    if let Some(width) = bin_width {
        let mut csv = String::from("split,turns_from,conversations\n");
        for c in &corpora {
            for (lower, count) in utterance_density(c, width)? {
                csv.push_str(&format!("{},{lower},{count}\n", c.split));
            }
        }
        write(out, "density.csv", &csv, &mut manifest)?;
    }
    manifest.write(out)?;
    Ok(())
}

pub fn preprocess(
    input: &Path,
    format: Option<&str>,
    lexicons: Option<&Path>,
    annotations: Option<&Path>,
    out: &Path,
    args: Vec<String>,
) -> Result<()> {
    let corpus = load_corpus(input, format_of(input, format)?)?;
    let annotated = match annotations {
        Some(a) => import_tags(&tokenized(&corpus)?, a)?,
        None => {
            let tagger = match lexicons {
                Some(dir) => LexiconRuleTagger::from_dir(dir)?,
                None => LexiconRuleTagger::bundled(),
            };
            tag_corpus(&corpus, &tagger)?
        }
    };
    create_dir(out)?;
    let config = json!({
        "format": format,
        "lexicons": lexicons.map(|p| p.display().to_string()),
        "import_tags": annotations.map(|p| p.display().to_string()),
    });
    let mut manifest = RunManifest::new("preprocess", args, config, None);
    manifest.input(input)?;
    if let Some(a) = annotations {
        manifest.input(a)?;
    }
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("corpus");
    let name = format!("{stem}.jsonl");
    write(out, &name, &annotated.to_annotated_jsonl(), &mut manifest)?;
    manifest.write(out)?;
    Ok(())
}

/// Imported tags replace the tagger, but turns still need tokens to be
/// matched against.
fn tokenized(corpus: &Corpus) -> Result<Corpus> {
    let mut out = corpus.clone();
    for d in &mut out.dialogues {
        for t in &mut d.turns {
            if t.tokens.is_none() {
                let mut tokens = dialsum::tokenize::tokenize(&t.raw_text);
                if tokens.is_empty() {
                    tokens.push("<empty>".to_string());
                }
                t.tokens = Some(tokens);
            }
        }
    }
    Ok(out)
}

/// Network shape overrides; everything else comes from the vocabulary and
/// the training configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ShapeConfig {
    d_model: usize,
    n_enc_layers: usize,
    n_dec_layers: usize,
    n_heads: usize,
    d_ff: usize,
    dropout: f64,
}

impl Default for ShapeConfig {
    fn default() -> Self {
        let d = ModelConfig::desk(0);
        Self {
            d_model: d.d_model,
            n_enc_layers: d.n_enc_layers,
            n_dec_layers: d.n_dec_layers,
            n_heads: d.n_heads,
            d_ff: d.d_ff,
            dropout: d.dropout,
        }
    }
}

fn resolve_train_config(t: &TrainArgs) -> Result<TrainConfig> {
    let mut c: TrainConfig = match &t.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = t.seed {
        c.seed = v;
    }
    if let Some(v) = &t.input_type {
        c.input_type = v.parse::<SelectionKind>()?;
    }
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = t.$f { c.$f = v; } )* };
    }
    set!(n, lambda, beam, epochs, lr, batch_size, patience, max_len, summary_max_len);
    c.validate()?;
    Ok(c)
}

pub fn train(t: &TrainArgs, args: Vec<String>) -> Result<()> {
    let config = resolve_train_config(t)?;
    let shape: ShapeConfig = match &t.model_config {
        Some(p) => read_json(p)?,
        None => ShapeConfig::default(),
    };
    if t.min_freq == 0 {
        return Err(CliError::Usage("--min-freq must be at least 1".into()));
    }
    let train_corpus = load_tagged(&t.train)?;
    let dev_corpus = load_tagged(&t.dev)?;
    let vocab = build_vocab(&train_corpus, t.min_freq)?;
    let model_config = ModelConfig {
        d_model: shape.d_model,
        n_enc_layers: shape.n_enc_layers,
        n_dec_layers: shape.n_dec_layers,
        n_heads: shape.n_heads,
        d_ff: shape.d_ff,
        dropout: shape.dropout,
        max_len: config.max_len.max(config.summary_max_len + 1),
        seed: config.seed,
        ..ModelConfig::desk(vocab.len())
    };
    let model = Model::new(model_config.clone())?;
    let train_set = prepare(&train_corpus, &vocab, &config)?;
    let dev_set = prepare(&dev_corpus, &vocab, &config)?;

    create_dir(&t.out)?;
    let resolved = json!({ "train": config, "model": model_config, "min_freq": t.min_freq });
    let mut manifest = RunManifest::new("train", args, resolved, Some(config.seed));
    manifest.input(&t.train)?;
    manifest.input(&t.dev)?;
    for p in [&t.config, &t.model_config].into_iter().flatten() {
        manifest.input(p)?;
    }

    let mut log = String::new();
    let outcome = run_training(model, &train_set, &dev_set, &vocab, &config, |r| {
        eprintln!(
            "epoch {:>3}  l_ds {:.4}  l_pos {:.4}  l_total {:.4}  dev R1 {:.4}",
            r.loss.epoch, r.loss.l_ds, r.loss.l_pos, r.loss.l_total, r.dev_rouge1
        );
        log.push_str(&serde_json::to_string(r).expect("record serializes"));
        log.push('\n');
    })?;
    eprintln!(
        "best epoch {} (dev ROUGE-1 F1 {:.4})",
        outcome.best_epoch, outcome.best_dev_rouge1
    );

    outcome.model.save(t.out.join("model.json"), outcome.steps as u64)?;
    manifest.output(&t.out, "model.json")?;
    vocab.save(t.out.join("vocab.json"))?;
    manifest.output(&t.out, "vocab.json")?;
    let train_config = serde_json::to_string_pretty(&config).map_err(Error::from)? + "\n";
    write(&t.out, "train_config.json", &train_config, &mut manifest)?;
    write(&t.out, "train_log.jsonl", &log, &mut manifest)?;
    manifest.write(&t.out)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct Prediction {
    id: String,
    summary: String,
    logprob: f64,
    n_words: usize,
}

pub fn generate(model_dir: &Path, corpus: &Path, beam: Option<usize>, out: &Path, args: Vec<String>) -> Result<()> {
    let config: TrainConfig = read_json(&model_dir.join("train_config.json"))?;
    let vocab = Vocabulary::load(model_dir.join("vocab.json"))?;
    let model_path = model_dir.join("model.json");
    let (model, _) = Model::load(&model_path, None)?;
    if model.config().vocab_size != vocab.len() {
        return Err(Error::ConfigMismatch(format!(
            "model has {} token rows, vocabulary has {} entries",
            model.config().vocab_size,
            vocab.len()
        ))
        .into());
    }
    let beam = beam.unwrap_or(config.beam);
    if beam == 0 {
        return Err(CliError::Usage("--beam must be at least 1".into()));
    }
    let data = load_tagged(corpus)?;
    let strategy = config.strategy()?;
    let mut lines = String::new();
    for d in &data.dialogues {
        let p = prepare_dialogue(d, &vocab, strategy, config.max_len, config.summary_max_len)?;
        let decoded = summarize(&model, &p.example.input, beam, config.summary_max_len)?;
        let words = vocab.decode(decoded.content());
        let pred = Prediction {
            id: p.id,
            summary: detokenize(&words),
            logprob: decoded.logprob,
            n_words: words.len(),
        };
        lines.push_str(&serde_json::to_string(&pred).map_err(Error::from)?);
        lines.push('\n');
    }

    create_dir(out)?;
    let mut manifest = RunManifest::new("generate", args, json!({ "beam": beam, "train": config }), None);
    for p in [&model_path, &model_dir.join("vocab.json"), &model_dir.join("train_config.json")] {
        manifest.input(p)?;
    }
    manifest.input(corpus)?;
    write(out, "predictions.jsonl", &lines, &mut manifest)?;
    manifest.write(out)?;
    Ok(())
}

fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                Error::Malformed {
                    record: i,
                    field: "prediction".into(),
                    message: e.to_string(),
                }
                .into()
            })
        })
        .collect()
}

pub fn evaluate(predictions: &[String], references: &Path, out: Option<&Path>, args: Vec<String>) -> Result<()> {
    let refs = load_corpus(references, Format::from_path(references))?;
    let mut rows = Vec::with_capacity(predictions.len());
    let mut inputs = Vec::with_capacity(predictions.len());
    for entry in predictions {
        let (name, path) = match entry.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(entry);
                let name = p
                    .parent()
                    .and_then(|d| d.file_name())
                    .and_then(|s| s.to_str())
                    .unwrap_or("system")
                    .to_string();
                (name, p)
            }
        };
        let preds = read_predictions(&path)?;
        if preds.len() != refs.len() {
            return Err(Error::Precondition(format!(
                "{}: {} predictions for {} references",
                path.display(),
                preds.len(),
                refs.len()
            ))
            .into());
        }
        let mut pairs = Vec::with_capacity(preds.len());
        for (p, d) in preds.iter().zip(&refs.dialogues) {
            if p.id != d.id {
                return Err(Error::Precondition(format!(
                    "{}: prediction `{}` does not line up with reference `{}`",
                    path.display(),
                    p.id,
                    d.id
                ))
                .into());
            }
            pairs.push((p.summary.clone(), d.summary_tokens.join(" ")));
        }
        rows.push(SystemResult {
            system: name,
            report: corpus_rouge_text(&pairs)?,
            bert_score: None,
        });
        inputs.push(path);
    }
    let table = format_table(&rows);
    print!("{table}");
    let Some(out) = out else { return Ok(()) };
    create_dir(out)?;
    let mut manifest = RunManifest::new("evaluate", args, json!({ "predictions": predictions }), None);
    for p in &inputs {
        manifest.input(p)?;
    }
    manifest.input(references)?;
    write(out, "report.txt", &table, &mut manifest)?;
    write(out, "rouge.csv", &table_csv(&rows), &mut manifest)?;
    manifest.write(out)?;
    Ok(())
}

pub fn analyze_styles(
    corpus: &Path,
    k: usize,
    seed: u64,
    top_k: usize,
    max_iter: usize,
    out: &Path,
    args: Vec<String>,
) -> Result<()> {
    let data = load_tagged(corpus)?;
    let styles = build_styles(&data)?;
    let t = tfidf(&styles)?;
    let clusters = kmeans(&t.weights, k, seed, max_iter)?;
    let projection = pca_2d(&t.weights)?;
    let ranks = rank_features_by_std(&clusters, &t.weights, top_k)?;

    create_dir(out)?;
    let config = json!({ "k": k, "seed": seed, "top_k": top_k, "max_iter": max_iter });
    let mut manifest = RunManifest::new("analyze-styles", args, config, Some(seed));
    manifest.input(corpus)?;
    write(out, "styles.csv", &styles_csv(&styles), &mut manifest)?;
    write(out, "tfidf.csv", &tfidf_csv(&t), &mut manifest)?;
    write(out, "clusters.csv", &clusters_csv(&t.speakers, &clusters), &mut manifest)?;
    write(out, "pca.csv", &dialsum::style::pca_csv(&t.speakers, &projection), &mut manifest)?;
    write(out, "feature_rank.csv", &feature_rank_csv(&ranks), &mut manifest)?;
    manifest.write(out)?;
    Ok(())
}
