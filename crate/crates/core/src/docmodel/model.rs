use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Checkpoint, NodeId, ParamStore, Tape, Tensor};
use crate::corpus::Label;
use crate::docmodel::head::{softmax_rows, HeadRegistry, HeadSpec, SequenceHead};
use crate::docmodel::rules::{constrained_decode, OrderRules};
use crate::docmodel::{crf::viterbi_decode, EmissionNet};
use crate::encoder::{EncoderRegistry, EncoderSpec, SentenceEncoder};
use crate::error::{Error, Result};
use crate::layers::{dropout, EmbeddingMode, EmbeddingTable};
use crate::optim::Adam;
use crate::ModelRng;

const HEADER_KIND: &str = "ssn-model";

/// Which decoder turns emissions into labels at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// Whatever the sequence head decodes with.
    #[default]
    Head,
    Viterbi,
    Rules,
}

/// Everything needed to rebuild a model's architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: String,
    pub head: String,
    pub decode: DecodeMode,
    pub embedding_mode: EmbeddingMode,
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub hidden: usize,
    pub attention_dim: usize,
    pub num_aspects: usize,
    pub doc_hidden: usize,
    pub emission_hidden: usize,
    pub start_end: bool,
    pub dropout: f64,
    pub labels: Vec<Label>,
    pub rules: OrderRules,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("vocabulary size", self.vocab_size),
            ("embedding dim", self.embedding_dim),
            ("hidden", self.hidden),
            ("attention dim", self.attention_dim),
            ("aspects", self.num_aspects),
            ("doc hidden", self.doc_hidden),
            ("emission hidden", self.emission_hidden),
        ];
        if let Some((what, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{what} must be >= 1")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.labels != Label::ALL {
            return Err(Error::Config(format!("unsupported label order {:?}", self.labels)));
        }
        self.rules.validate()
    }
}

/// One training example: token indices per sentence and gold label indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub sentences: Vec<Vec<usize>>,
    pub gold: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<Label>,
    /// Softmax of the emission scores, one 5-vector per sentence.
    pub scores: Vec<Vec<f64>>,
}

/// Embeddings, sentence encoder, emission network and sequence head over a
/// single parameter store.
#[derive(Debug)]
pub struct SsnModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub embeddings: EmbeddingTable,
    pub encoder: Box<dyn SentenceEncoder>,
    pub emission: EmissionNet,
    pub head: Box<dyn SequenceHead>,
}

impl SsnModel {
    pub fn new(config: ModelConfig, embedding_matrix: Tensor, rng: &mut ModelRng) -> Result<Self> {
        Self::with_registries(
            config,
            embedding_matrix,
            rng,
            &EncoderRegistry::default(),
            &HeadRegistry::default(),
        )
    }

    pub fn with_registries(
        config: ModelConfig,
        embedding_matrix: Tensor,
        rng: &mut ModelRng,
        encoders: &EncoderRegistry,
        heads: &HeadRegistry,
    ) -> Result<Self> {
        config.validate()?;
        if embedding_matrix.shape() != [config.vocab_size, config.embedding_dim] {
            return Err(Error::Shape(format!(
                "embedding matrix {:?} does not match vocabulary {} x dim {}",
                embedding_matrix.shape(),
                config.vocab_size,
                config.embedding_dim
            )));
        }
        if config.decode == DecodeMode::Viterbi && config.head != "crf" {
            return Err(Error::Config("viterbi decoding needs the crf head".into()));
        }
        let mut store = ParamStore::new();
        let embeddings = EmbeddingTable::new(&mut store, "embeddings", embedding_matrix, config.embedding_mode)?;
        let spec = EncoderSpec {
            input_dim: config.embedding_dim,
            hidden: config.hidden,
            attention_dim: config.attention_dim,
            num_aspects: config.num_aspects,
        };
        let encoder = encoders.build(&config.encoder, &spec, &mut store, rng)?;
        let emission = EmissionNet::new(
            &mut store,
            encoder.output_dim(),
            config.doc_hidden,
            config.emission_hidden,
            Label::COUNT,
            rng,
        )?;
        let head_spec = HeadSpec {
            num_labels: Label::COUNT,
            start_end: config.start_end,
            rules: config.rules.clone(),
        };
        let head = heads.build(&config.head, &head_spec, &mut store)?;
        Ok(SsnModel {
            config,
            store,
            embeddings,
            encoder,
            emission,
            head,
        })
    }

    /// Raw emission scores (`m x K`). Dropout is applied only when `rng` is
    /// given.
    pub fn emissions(&self, tape: &mut Tape, sentences: &[Vec<usize>], mut rng: Option<&mut ModelRng>) -> Result<NodeId> {
        if sentences.is_empty() {
            return Err(Error::InvalidArgument("cannot score an empty document".into()));
        }
        let rate = if rng.is_some() { self.config.dropout } else { 0.0 };
        let mut vectors = Vec::with_capacity(sentences.len());
        for tokens in sentences {
            let e = self.embeddings.embed(tape, tokens)?;
            let mut v = self.encoder.encode(tape, e)?;
            if let Some(r) = rng.as_deref_mut() {
                v = dropout(tape, v, rate, r)?;
            }
            vectors.push(v);
        }
        let mut states = self.emission.document_states(tape, &vectors)?;
        if let Some(r) = rng {
            states = dropout(tape, states, rate, r)?;
        }
        self.emission.scores_from_states(tape, states)
    }

    pub fn decode(&self, emissions: &Tensor) -> Result<Vec<usize>> {
        match self.config.decode {
            DecodeMode::Head => self.head.decode(&self.store, emissions),
            DecodeMode::Rules => constrained_decode(&softmax_rows(emissions), &self.config.rules),
            DecodeMode::Viterbi => {
                let crf = self
                    .head
                    .crf()
                    .ok_or_else(|| Error::Config("viterbi decoding needs the crf head".into()))?;
                viterbi_decode(emissions, &crf.scores(&self.store))
            }
        }
    }

    pub fn predict(&self, sentences: &[Vec<usize>]) -> Result<Prediction> {
        let mut tape = Tape::new(&self.store);
        let r = self.emissions(&mut tape, sentences, None)?;
        let emissions = tape.value(r);
        let labels = self
            .decode(emissions)?
            .into_iter()
            .map(|i| Label::from_index(i).expect("decoders return valid label indices"))
            .collect();
        Ok(Prediction {
            labels,
            scores: softmax_rows(emissions).to_rows(),
        })
    }

    /// One pass over `docs` in an order shuffled by `rng`, one Adam step per
    /// document. Accuracy counts the decoded labels of each forward pass
    /// before its update.
    pub fn train_epoch(&mut self, docs: &[Document], adam: &mut Adam, rng: &mut ModelRng) -> Result<EpochStats> {
        if docs.is_empty() {
            return Err(Error::Data("training corpus is empty".into()));
        }
        let mut order: Vec<usize> = (0..docs.len()).collect();
        order.shuffle(rng);
        let (mut loss_sum, mut correct, mut total) = (0.0, 0usize, 0usize);
        for &d in &order {
            let doc = &docs[d];
            let (loss, grads, predicted) = {
                let mut tape = Tape::new(&self.store);
                let r = self.emissions(&mut tape, &doc.sentences, Some(rng)).map_err(|e| numeric(d, e))?;
                let loss = self.head.loss(&mut tape, r, &doc.gold).map_err(|e| numeric(d, e))?;
                let value = tape.scalar(loss)?;
                if !value.is_finite() {
                    return Err(Error::Numeric(format!("document {d}: loss is {value}")));
                }
                let predicted = self.decode(tape.value(r))?;
                (value, tape.backward(loss)?, predicted)
            };
            self.store.accumulate(&grads);
            adam.step(&mut self.store).map_err(|e| numeric(d, e))?;
            loss_sum += loss;
            correct += predicted.iter().zip(&doc.gold).filter(|(p, g)| p == g).count();
            total += doc.gold.len();
        }
        Ok(EpochStats {
            mean_loss: loss_sum / docs.len() as f64,
            accuracy: correct as f64 / total as f64,
        })
    }

    /// Fraction of sentences whose decoded label matches gold.
    pub fn accuracy(&self, docs: &[Document]) -> Result<f64> {
        let (mut correct, mut total) = (0usize, 0usize);
        for doc in docs {
            let p = self.predict(&doc.sentences)?;
            correct += p.labels.iter().zip(&doc.gold).filter(|(l, &g)| l.index() == g).count();
            total += doc.gold.len();
        }
        Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        self.to_checkpoint_with(serde_json::Value::Null)
    }

    /// Checkpoint whose header also carries `run`, free-form settings of
    /// the run that produced the model.
    pub fn to_checkpoint_with(&self, run: serde_json::Value) -> Checkpoint {
        let header = serde_json::json!({ "kind": HEADER_KIND, "config": self.config, "run": run });
        Checkpoint::from_store(&self.store, header.to_string())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let header: serde_json::Value = serde_json::from_str(&ckpt.header)
            .map_err(|e| Error::Checkpoint(format!("header is not JSON: {e}")))?;
        if header["kind"] != HEADER_KIND {
            return Err(Error::Checkpoint(format!("not a model checkpoint (kind {})", header["kind"])));
        }
        let config: ModelConfig = serde_json::from_value(header["config"].clone())
            .map_err(|e| Error::Checkpoint(format!("bad model config in header: {e}")))?;
        let matrix = Tensor::zeros(&[config.vocab_size.max(1), config.embedding_dim.max(1)]);
        let mut rng = <ModelRng as rand::SeedableRng>::seed_from_u64(0);
        let mut model = SsnModel::new(config, matrix, &mut rng)?;
        ckpt.restore_into(&mut model.store)?;
        Ok(model)
    }
}

fn numeric(doc: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(msg) | Error::Numeric(msg) => Error::Numeric(format!("document {doc}: {msg}")),
        other => other,
    }
}
