use std::time::Instant;

use headcheck_core::{Label, LabeledExample, Predictor};
use headcheck_models::classifiers::spec::{TrainablePart, ENCODER_BASE, ENCODER_DISTILLED, LSTM_LM};
use headcheck_models::classifiers::{
    distill_encoder, pretrain_encoder, pretrain_lstm_lm, train, Backbones, ClassifierSpec, EncoderConfig, LstmLmConfig,
    PretrainOptions, TrainedModel,
};
use headcheck_models::ModelError;
use headcheck_testkit::{separable_fixture, split_fixture, MARKER};

fn fixture() -> (Vec<LabeledExample>, Vec<LabeledExample>) {
    split_fixture(separable_fixture(1500, 21), 0.2)
}

fn small_encoder() -> EncoderConfig {
    EncoderConfig { d_model: 64, ff: 256, layers: 2, ..Default::default() }
}

fn backbones(train: &[LabeledExample]) -> Backbones {
    let texts: Vec<String> = train.iter().map(|e| e.text.clone()).collect();
    let opts = PretrainOptions { epochs: 2, seed: 1, lr: 2e-3, batch_size: 32, vocab_size: 5000 };
    let mut reg = Backbones::new();
    reg.insert(pretrain_lstm_lm(LSTM_LM, &texts, &LstmLmConfig::default(), &opts).unwrap());
    let base = pretrain_encoder(ENCODER_BASE, &texts, &small_encoder(), &opts).unwrap();
    let distilled = distill_encoder(ENCODER_DISTILLED, &base, &texts, &PretrainOptions { epochs: 1, ..opts }).unwrap();
    reg.insert(base);
    reg.insert(distilled);
    reg
}

fn dev_accuracy(model: &TrainedModel, dev: &[LabeledExample]) -> f64 {
    let texts: Vec<String> = dev.iter().map(|e| e.text.clone()).collect();
    let preds = model.predict(&texts).unwrap();
    preds.iter().zip(dev).filter(|(p, e)| p.label == e.label).count() as f64 / dev.len() as f64
}

#[test]
fn default_specs_carry_the_documented_hyperparameters() {
    let ClassifierSpec::Cnn(c) = ClassifierSpec::cnn() else { panic!() };
    assert_eq!((c.filters, c.kernel_size, c.embed_dim, c.epochs), ([8, 4], 3, 75, 5));
    let ClassifierSpec::Bilstm(b) = ClassifierSpec::bilstm() else { panic!() };
    assert_eq!((b.units, b.embed_dim, b.spatial_dropout, b.epochs), (35, 100, 0.33, 5));
    let ClassifierSpec::BilstmAttention(a) = ClassifierSpec::bilstm_attention() else { panic!() };
    assert_eq!(a.recurrent, b);
    let ClassifierSpec::Ulmfit(u) = ClassifierSpec::ulmfit() else { panic!() };
    let stages: Vec<_> = u.stages.iter().map(|s| (s.trainable, s.lr, s.epochs)).collect();
    assert_eq!(
        stages,
        [(TrainablePart::Recurrent, 0.01, 1), (TrainablePart::All, 7.5e-5, 1), (TrainablePart::Head, 0.05, 1)]
    );
    for (spec, backbone) in [(ClassifierSpec::bert(), ENCODER_BASE), (ClassifierSpec::distilbert(), ENCODER_DISTILLED)] {
        let ClassifierSpec::Transformer(t) = spec else { panic!() };
        assert_eq!((t.lr, t.epochs, t.backbone.as_str()), (4e-5, 1, backbone));
    }
    let rows: Vec<_> = ClassifierSpec::table_rows().into_iter().map(|(r, _)| r).collect();
    assert_eq!(rows.len(), 8);
    for (row, spec) in ClassifierSpec::table_rows() {
        assert_eq!(ClassifierSpec::by_name(row).unwrap(), spec);
    }
}

#[test]
fn specs_roundtrip_through_json() {
    for (_, spec) in ClassifierSpec::table_rows() {
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ClassifierSpec>(&json).unwrap(), spec);
    }
}

#[test]
fn single_class_training_set_is_rejected() {
    let (train_set, dev) = fixture();
    let only_real: Vec<_> = train_set.into_iter().filter(|e| e.label == Label::Real).collect();
    let err = train(&ClassifierSpec::naive_bayes(), &only_real, &dev, 0, &Backbones::new()).err().unwrap();
    assert!(matches!(err, ModelError::DegenerateTrainingSet(_)), "{err}");
}

#[test]
fn transfer_specs_require_their_backbone() {
    let (train_set, dev) = fixture();
    for spec in [ClassifierSpec::ulmfit(), ClassifierSpec::bert(), ClassifierSpec::distilbert()] {
        let err = train(&spec, &train_set, &dev, 0, &Backbones::new()).err().unwrap();
        assert!(matches!(err, ModelError::MissingBackbone(_)), "{err}");
    }
}

#[test]
fn baselines_are_deterministic_and_use_train_vocabulary_only() {
    let (train_set, dev) = fixture();
    let dev_only = "kookaburra wombat";
    let mut dev = dev;
    dev.push(LabeledExample { text: dev_only.into(), label: Label::Real, year: 2015 });
    for spec in [ClassifierSpec::naive_bayes(), ClassifierSpec::elastic_net()] {
        let a = train(&spec, &train_set, &dev, 3, &Backbones::new()).unwrap();
        let b = train(&spec, &train_set, &dev, 3, &Backbones::new()).unwrap();
        assert_eq!(serde_json::to_string(&a.manifest).unwrap(), serde_json::to_string(&b.manifest).unwrap());
        assert!(a.vocab().get("kookaburra").is_none());
        let texts: Vec<String> = dev.iter().map(|e| e.text.clone()).collect();
        let pa = a.predict(&texts).unwrap();
        assert_eq!(pa, b.predict(&texts).unwrap());
        for p in &pa {
            assert!((0.0..=1.0).contains(&p.score));
            assert_eq!(p.label == Label::Generated, p.score >= 0.5);
        }
        assert!(a.predict(&[]).unwrap().is_empty());
    }
}

#[test]
fn neural_model_roundtrips_through_disk() {
    let (train_set, dev) = fixture();
    let reg = Backbones::new();
    let model = train(&ClassifierSpec::cnn(), &train_set, &dev, 9, &reg).unwrap();
    assert_eq!(model.manifest.epoch_log.len(), 5);
    let dir = tempfile::tempdir().unwrap();
    model.save(dir.path()).unwrap();
    let loaded = TrainedModel::load(dir.path(), &reg).unwrap();
    let texts: Vec<String> = dev.iter().take(50).map(|e| e.text.clone()).collect();
    let a = model.predict(&texts).unwrap();
    let b = loaded.predict(&texts).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x.score - y.score).abs() < 1e-6);
    }
    assert!(model.predict(&[]).unwrap().is_empty());
}

/// Full-size separability for every spec lives in the acceptance suite; this
/// is the quick version with small backbones.
#[test]
fn every_spec_learns_the_marker_fixture() {
    let (train_set, dev) = fixture();
    let t0 = Instant::now();
    let reg = backbones(&train_set);
    eprintln!("backbones ready in {:.1?}", t0.elapsed());
    for (row, spec) in ClassifierSpec::table_rows() {
        let t = Instant::now();
        let model = train(&spec, &train_set, &dev, 5, &reg).unwrap();
        let acc = dev_accuracy(&model, &dev);
        eprintln!("{row:>18}: dev accuracy {acc:.4} in {:.1?}", t.elapsed());
        assert_eq!(model.manifest.dev_accuracy, Some(acc));
        assert!(model.manifest.epoch_log.iter().all(|e| e.train_loss.is_finite()));
        match spec {
            ClassifierSpec::Transformer(_) => assert!(acc > 0.55, "{row}: {acc}"),
            _ => {
                assert!(acc >= 0.99, "{row}: {acc}");
                let preds = model.predict(&[format!("council {MARKER} plan")]).unwrap();
                assert_eq!(preds[0].label, Label::Generated, "{row}");
            }
        }
    }
}
