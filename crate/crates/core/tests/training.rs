use rand::SeedableRng;
use ssn::corpus::{encode_abstract, Label, Vocabulary};
use ssn::docmodel::{DecodeMode, Document, ModelConfig, OrderRules, SsnModel};
use ssn::layers::{glorot_init, EmbeddingMode};
use ssn::optim::{Adam, AdamConfig};
use ssn::synth::{generate, SynthConfig};
use ssn::{Error, ModelRng};

fn corpus(seed: u64) -> (Vec<Document>, usize) {
    let docs = generate(&SynthConfig::default(), &mut ModelRng::seed_from_u64(seed)).unwrap();
    let vocab = Vocabulary::build(&docs, 1).unwrap();
    let data = docs
        .iter()
        .map(|a| Document {
            sentences: encode_abstract(a, &vocab),
            gold: a.gold_labels().unwrap().iter().map(|l| l.index()).collect(),
        })
        .collect();
    (data, vocab.len())
}

fn config(vocab: usize, mode: EmbeddingMode) -> ModelConfig {
    ModelConfig {
        encoder: "self-attention".into(),
        head: "crf".into(),
        decode: DecodeMode::Head,
        embedding_mode: mode,
        vocab_size: vocab,
        embedding_dim: 8,
        hidden: 8,
        attention_dim: 8,
        num_aspects: 2,
        doc_hidden: 8,
        emission_hidden: 8,
        start_end: true,
        dropout: 0.0,
        labels: Label::ALL.to_vec(),
        rules: OrderRules::monotone(),
    }
}

#[test]
fn median_loss_does_not_increase_early() {
    let (docs, vocab) = corpus(5);
    let mut curves = Vec::new();
    for seed in 0..5 {
        let mut rng = ModelRng::seed_from_u64(seed);
        let matrix = glorot_init(&[vocab, 8], &mut rng);
        let mut model = SsnModel::new(config(vocab, EmbeddingMode::RandomFinetune), matrix, &mut rng).unwrap();
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        curves.push(
            (0..5)
                .map(|_| model.train_epoch(&docs, &mut adam, &mut rng).unwrap().mean_loss)
                .collect::<Vec<_>>(),
        );
    }
    let median: Vec<f64> = (0..5)
        .map(|e| {
            let mut v: Vec<f64> = curves.iter().map(|c| c[e]).collect();
            v.sort_by(f64::total_cmp);
            v[2]
        })
        .collect();
    assert!(median.windows(2).all(|w| w[1] <= w[0]), "{median:?}");
}

#[test]
fn frozen_embeddings_survive_an_epoch() {
    let (docs, vocab) = corpus(6);
    let mut rng = ModelRng::seed_from_u64(1);
    let matrix = glorot_init(&[vocab, 8], &mut rng);
    let mut model = SsnModel::new(config(vocab, EmbeddingMode::PretrainedFrozen), matrix.clone(), &mut rng).unwrap();
    let mut adam = Adam::new(AdamConfig::default()).unwrap();
    let before = model.store.value(model.embeddings.matrix).clone();
    model.train_epoch(&docs, &mut adam, &mut rng).unwrap();
    assert_eq!(model.store.value(model.embeddings.matrix), &before);
    assert_eq!(before, matrix);
}

#[test]
fn predictions_have_one_label_and_distribution_per_sentence() {
    let (docs, vocab) = corpus(7);
    let mut rng = ModelRng::seed_from_u64(2);
    for decode in [DecodeMode::Head, DecodeMode::Viterbi, DecodeMode::Rules] {
        let mut c = config(vocab, EmbeddingMode::RandomFinetune);
        c.decode = decode;
        let model = SsnModel::new(c, glorot_init(&[vocab, 8], &mut rng), &mut rng).unwrap();
        for doc in docs.iter().take(5) {
            let p = model.predict(&doc.sentences).unwrap();
            assert_eq!(p.labels.len(), doc.sentences.len());
            assert_eq!(p.scores.len(), doc.sentences.len());
            for v in &p.scores {
                assert_eq!(v.len(), 5);
                assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            if decode == DecodeMode::Rules {
                assert!(p.labels.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}

#[test]
fn checkpoint_round_trip_and_header_checks() {
    let (docs, vocab) = corpus(8);
    let mut rng = ModelRng::seed_from_u64(3);
    let model = SsnModel::new(config(vocab, EmbeddingMode::RandomFinetune), glorot_init(&[vocab, 8], &mut rng), &mut rng).unwrap();
    let bytes = model.to_checkpoint().to_bytes();
    let back = SsnModel::from_checkpoint(&ssn::autodiff::Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
    assert_eq!(back.config, model.config);
    assert_eq!(back.predict(&docs[0].sentences).unwrap(), model.predict(&docs[0].sentences).unwrap());

    let mut other = model.to_checkpoint();
    other.header = "{\"kind\":\"something-else\"}".into();
    assert!(matches!(SsnModel::from_checkpoint(&other), Err(Error::Checkpoint(_))));
}

#[test]
fn viterbi_decode_needs_a_crf() {
    let mut rng = ModelRng::seed_from_u64(4);
    let mut c = config(10, EmbeddingMode::RandomFinetune);
    c.head = "rules".into();
    c.decode = DecodeMode::Viterbi;
    let err = SsnModel::new(c, glorot_init(&[10, 8], &mut rng), &mut rng).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert_eq!(Error::Numeric("x".into()).exit_code(), 3);
    assert_eq!(Error::Data("x".into()).exit_code(), 2);
}
