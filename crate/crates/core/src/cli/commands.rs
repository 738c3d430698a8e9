use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;

use crate::autodiff::Checkpoint;
use crate::cli::RunConfig;
use crate::correction::{
    apply_correction, build_training_set, select_confused_pair, train_mlp2, ConfusedPair, Mlp2, Mlp2Config,
    Mlp2Summary,
};
use crate::corpus::{encode_abstract, load_embeddings, write_rct_with_labels, Abstract, Label, Vocabulary};
use crate::docmodel::{Document, Prediction, SsnModel};
use crate::error::{Error, Result};
use crate::eval::{confusion, percent, report, ConfusionMatrix, EvalReport};
use crate::layers::glorot_init;
use crate::optim::Adam;
use crate::ModelRng;

pub const MODEL_FILE: &str = "model.ckpt";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const CONFIG_FILE: &str = "config.json";
pub const LOG_FILE: &str = "train.log";
pub const CORRECTION_FILE: &str = "correction.ckpt";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path.display().to_string(), e)
}

fn gold_of(abs: &Abstract) -> Result<Vec<Label>> {
    abs.gold_labels()
        .ok_or_else(|| Error::Data(format!("abstract {} has unlabeled sentences", abs.id)))
}

pub fn to_documents(abstracts: &[Abstract], vocab: &Vocabulary) -> Result<Vec<Document>> {
    abstracts
        .iter()
        .map(|a| {
            Ok(Document {
                sentences: encode_abstract(a, vocab),
                gold: gold_of(a)?.iter().map(|l| l.index()).collect(),
            })
        })
        .collect()
}

pub fn predict_all(model: &SsnModel, vocab: &Vocabulary, abstracts: &[Abstract]) -> Result<Vec<Prediction>> {
    abstracts.iter().map(|a| model.predict(&encode_abstract(a, vocab))).collect()
}

/// Confusion of `predictions` against the gold labels of `abstracts`.
pub fn confusion_of(abstracts: &[Abstract], predictions: &[Vec<Label>]) -> Result<ConfusionMatrix> {
    if abstracts.len() != predictions.len() {
        return Err(Error::Data(format!(
            "{} abstracts but {} predicted abstracts",
            abstracts.len(),
            predictions.len()
        )));
    }
    let mut cm = ConfusionMatrix::new();
    for (a, p) in abstracts.iter().zip(predictions) {
        let gold = gold_of(a)?;
        if gold.len() != p.len() {
            return Err(Error::Data(format!(
                "abstract {}: {} gold labels but {} predictions",
                a.id,
                gold.len(),
                p.len()
            )));
        }
        cm.merge(&confusion(&gold, p)?);
    }
    Ok(cm)
}

pub fn evaluate_model(
    model: &SsnModel,
    vocab: &Vocabulary,
    abstracts: &[Abstract],
) -> Result<(ConfusionMatrix, Vec<Prediction>)> {
    let predictions = predict_all(model, vocab, abstracts)?;
    let labels: Vec<Vec<Label>> = predictions.iter().map(|p| p.labels.clone()).collect();
    Ok((confusion_of(abstracts, &labels)?, predictions))
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: SsnModel,
    pub vocab: Vocabulary,
    pub log: Vec<String>,
    pub best_epoch: usize,
}

/// Train with early stopping on validation weighted F1 (training F1 when
/// there is no validation corpus). The returned model holds the best
/// parameters seen.
pub fn train_model(
    config: &RunConfig,
    train: &[Abstract],
    dev: Option<&[Abstract]>,
    sink: &mut dyn Write,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Data("training corpus is empty".into()));
    }
    let mut rng = ModelRng::seed_from_u64(config.seed);
    let vocab = Vocabulary::build(train, config.min_count)?;
    let mut log = Vec::new();
    let mut emit = |line: String, log: &mut Vec<String>| -> Result<()> {
        writeln!(sink, "{line}").map_err(|e| Error::io("writing training log", e))?;
        log.push(line);
        Ok(())
    };
    let matrix = match &config.embedding_file {
        Some(path) if config.embedding_mode.needs_pretrained() => {
            let loaded = load_embeddings(path, &vocab, config.embedding_dim, &mut rng)?;
            emit(format!("vocab={} coverage={:.4}", vocab.len(), loaded.coverage), &mut log)?;
            loaded.matrix
        }
        _ => {
            emit(format!("vocab={} coverage=none", vocab.len()), &mut log)?;
            glorot_init(&[vocab.len(), config.embedding_dim], &mut rng)
        }
    };
    let docs = to_documents(train, &vocab)?;
    if let Some(dev) = dev {
        for a in dev {
            gold_of(a)?;
        }
    }
    let mut model = SsnModel::new(config.model_config(vocab.len()), matrix, &mut rng)?;
    let mut adam = Adam::new(config.adam())?;
    let val_corpus = dev.unwrap_or(train);

    let mut best: Option<(f64, usize, crate::autodiff::ParamStore)> = None;
    let mut stale = 0;
    for epoch in 1..=config.epochs {
        let stats = model.train_epoch(&docs, &mut adam, &mut rng)?;
        let train_acc = model.accuracy(&docs)?;
        let (cm, _) = evaluate_model(&model, &vocab, val_corpus)?;
        let val_f1 = report(&cm)?.weighted_f1;
        emit(
            format!(
                "epoch={epoch} loss={:.6} train_acc={train_acc:.6} val_f1={val_f1:.6}",
                stats.mean_loss
            ),
            &mut log,
        )?;
        if best.as_ref().is_none_or(|(f, _, _)| val_f1 > *f) {
            best = Some((val_f1, epoch, model.store.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let (best_f1, best_epoch, store) = best.expect("at least one epoch ran");
    model.store = store;
    let train_acc = model.accuracy(&docs)?;
    emit(
        format!("best_epoch={best_epoch} train_acc={train_acc:.6} val_f1={best_f1:.6}"),
        &mut log,
    )?;
    Ok(TrainOutcome {
        model,
        vocab,
        log,
        best_epoch,
    })
}

pub fn save_model_dir(dir: &Path, outcome: &TrainOutcome, config: &RunConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let run = serde_json::to_value(config).expect("run config serializes");
    outcome.model.to_checkpoint_with(run).save(&dir.join(MODEL_FILE))?;
    let vocab = dir.join(VOCAB_FILE);
    fs::write(&vocab, outcome.vocab.to_tsv()).map_err(io_err(&vocab))?;
    let cfg = dir.join(CONFIG_FILE);
    let json = serde_json::to_string_pretty(config).expect("run config serializes");
    fs::write(&cfg, json + "\n").map_err(io_err(&cfg))?;
    let log = dir.join(LOG_FILE);
    fs::write(&log, outcome.log.join("\n") + "\n").map_err(io_err(&log))?;
    Ok(())
}

pub fn load_model_dir(dir: &Path) -> Result<(SsnModel, Vocabulary)> {
    let model = SsnModel::from_checkpoint(&Checkpoint::load(&dir.join(MODEL_FILE))?)?;
    let path = dir.join(VOCAB_FILE);
    let vocab = Vocabulary::from_tsv(&fs::read_to_string(&path).map_err(io_err(&path))?)?;
    if vocab.len() != model.embeddings.vocab_size() {
        return Err(Error::Checkpoint(format!(
            "vocabulary has {} entries but the embedding table has {}",
            vocab.len(),
            model.embeddings.vocab_size()
        )));
    }
    Ok((model, vocab))
}

/// RCT text with predicted labels; with `scores`, each sentence line gets
/// the five softmax scores appended as extra tab-separated columns.
pub fn format_predictions(abstracts: &[Abstract], predictions: &[Prediction], scores: bool) -> String {
    let labels: Vec<Vec<Label>> = predictions.iter().map(|p| p.labels.clone()).collect();
    let text = write_rct_with_labels(abstracts, &labels);
    if !scores {
        return text;
    }
    let mut vectors = predictions.iter().flat_map(|p| p.scores.iter());
    let mut out = String::with_capacity(text.len() * 2);
    for line in text.lines() {
        out.push_str(line);
        if !line.is_empty() && !line.starts_with("###") {
            if let Some(v) = vectors.next() {
                for x in v {
                    out.push_str(&format!("\t{x:.6}"));
                }
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug)]
pub struct CorrectionOutcome {
    pub pair: ConfusedPair,
    pub routed_examples: usize,
    pub summary: Mlp2Summary,
    pub mlp: Mlp2,
    pub base: EvalReport,
    pub corrected: EvalReport,
    pub base_labels: Vec<Vec<Label>>,
    pub corrected_labels: Vec<Vec<Label>>,
}

/// Select the confused pair on `dev`, train the correction network on the
/// routed dev sentences, and re-label `test`.
pub fn run_correction(
    model: &SsnModel,
    vocab: &Vocabulary,
    dev: &[Abstract],
    test: &[Abstract],
    config: &Mlp2Config,
    seed: u64,
) -> Result<CorrectionOutcome> {
    let (dev_cm, dev_pred) = evaluate_model(model, vocab, dev)?;
    let pair = select_confused_pair(&dev_cm)?;
    let predicted: Vec<Label> = dev_pred.iter().flat_map(|p| p.labels.iter().copied()).collect();
    let scores: Vec<Vec<f64>> = dev_pred.iter().flat_map(|p| p.scores.iter().cloned()).collect();
    let mut gold = Vec::with_capacity(predicted.len());
    for a in dev {
        gold.extend(gold_of(a)?);
    }
    let examples = build_training_set(&predicted, &scores, &gold, &pair)?;
    let mut rng = ModelRng::seed_from_u64(seed);
    let (mlp, summary) = train_mlp2(&examples, pair, config, &mut rng)?;

    let (test_cm, test_pred) = evaluate_model(model, vocab, test)?;
    let base_labels: Vec<Vec<Label>> = test_pred.iter().map(|p| p.labels.clone()).collect();
    let corrected_labels = test_pred
        .iter()
        .map(|p| apply_correction(&p.labels, &p.scores, &mlp))
        .collect::<Result<Vec<_>>>()?;
    let corrected_cm = confusion_of(test, &corrected_labels)?;
    Ok(CorrectionOutcome {
        pair,
        routed_examples: examples.len(),
        summary,
        mlp,
        base: report(&test_cm)?,
        corrected: report(&corrected_cm)?,
        base_labels,
        corrected_labels,
    })
}

/// Base and corrected metrics for the two pair labels side by side.
pub fn format_correction(outcome: &CorrectionOutcome) -> String {
    let mut out = format!(
        "pair={}/{} mass={} routed={} mlp_epochs={}\n",
        outcome.pair.a, outcome.pair.b, outcome.pair.mass, outcome.routed_examples, outcome.summary.epochs
    );
    out.push_str(&format!(
        "{:<14}{:>9}{:>9}{:>9}{:>9}{:>9}{:>9}\n",
        "label", "base_p", "base_r", "base_f1", "corr_p", "corr_r", "corr_f1"
    ));
    for label in [outcome.pair.a, outcome.pair.b] {
        let (b, c) = (outcome.base.class(label), outcome.corrected.class(label));
        out.push_str(&format!(
            "{:<14}{:>9}{:>9}{:>9}{:>9}{:>9}{:>9}\n",
            label.as_str(),
            percent(b.precision),
            percent(b.recall),
            percent(b.f1),
            percent(c.precision),
            percent(c.recall),
            percent(c.f1)
        ));
    }
    out.push_str(&format!(
        "{:<14}{:>9}{:>9}{:>9}{:>9}{:>9}{:>9}\n",
        "weighted avg",
        percent(outcome.base.weighted_precision),
        percent(outcome.base.weighted_recall),
        percent(outcome.base.weighted_f1),
        percent(outcome.corrected.weighted_precision),
        percent(outcome.corrected.weighted_recall),
        percent(outcome.corrected.weighted_f1)
    ));
    out
}
