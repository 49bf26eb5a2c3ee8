use wristkey_core::eval::{
    codebook_for, fit_model, infer_session, prepare_segments, run_experiment, ExperimentConfig, ModelKind,
    Protocol, Scheme,
};
use wristkey_core::nn::{load_model, save_model};
use wristkey_core::synth::{generate_pair, generate_session, SynthConfig};
use wristkey_core::{read_session, write_session};

fn quick() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        hidden_units: 16,
        transfer_epochs: 40,
        ..ExperimentConfig::default()
    };
    cfg.train.epochs = 40;
    cfg
}

fn synth(instances: usize) -> SynthConfig {
    SynthConfig {
        instances,
        ..SynthConfig::default()
    }
}

#[test]
fn stored_session_trains_saves_and_infers() {
    let dir = tempfile::tempdir().unwrap();
    let session = generate_session(&synth(8)).unwrap();
    write_session(&session, &dir.path().join("s")).unwrap();
    let session = read_session(&dir.path().join("s")).unwrap();
    let cfg = quick();

    let (model, trace) = fit_model(std::slice::from_ref(&session), Scheme::PH, ModelKind::FnnSigmoid, &cfg).unwrap();
    assert_eq!(trace.len(), 40);
    assert!(trace.last() < trace.first());
    assert_eq!(model.scheme.as_deref(), Some("p-h"));
    let path = dir.path().join("model.xml");
    save_model(&model, &path).unwrap();
    let model = load_model(&path).unwrap();

    let predictions = infer_session(&model, &session, &cfg).unwrap();
    let detected = prepare_segments(&session, Scheme::PH, &cfg).unwrap().detected.unwrap();
    assert_eq!(predictions.len(), detected);
    for p in &predictions {
        let sum: f64 = p.distribution.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&p.reliability));
    }
    // Scored against the nearest true keystroke, training data is mostly
    // recognised.
    let correct = predictions
        .iter()
        .filter(|p| {
            let truth = session.labels.iter().min_by_key(|l| (l.t - p.t).abs()).unwrap();
            truth.label == p.label
        })
        .count();
    assert!(correct as f64 >= 0.8 * predictions.len() as f64, "{correct}/{}", predictions.len());
}

#[test]
fn every_scheme_segments_every_keystroke() {
    let session = generate_session(&synth(5)).unwrap();
    let cfg = ExperimentConfig::default();
    for scheme in Scheme::ALL {
        let p = prepare_segments(&session, scheme, &cfg).unwrap();
        assert_eq!(p.segments.len(), session.labels.len(), "{scheme}");
        assert_eq!(p.detected.is_some(), scheme.heuristic());
        let expected: &[&str] = if scheme.preprocessed() {
            &["calibrate", "median", "butterworth-lowpass", "kalman", "normalize"]
        } else {
            &["calibrate"]
        };
        assert_eq!(p.trace.gyroscope, expected);
        for s in &p.segments {
            assert_eq!((s.len(), s.dim), (50, 6));
        }
    }
}

#[test]
fn cross_validation_is_reproducible() {
    let session = generate_session(&synth(5)).unwrap();
    let cfg = quick();
    let a = run_experiment(std::slice::from_ref(&session), &[], Scheme::RT, ModelKind::FnnTanh, &cfg).unwrap();
    let b = run_experiment(std::slice::from_ref(&session), &[], Scheme::RT, ModelKind::FnnTanh, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.protocol, Protocol::CrossValidation);
    assert_eq!(a.models_trained, 5);
    assert_eq!(a.evaluation.confusion.total(), 60);
    assert!(a.evaluation.f1_mean > 5.0 / 12.0, "{}", a.evaluation.f1_mean);
}

#[test]
fn transfer_trains_once_and_scores_the_other_family() {
    let (a, b) = generate_pair(&synth(4).noiseless(), 1).unwrap();
    assert_eq!(codebook_for(std::slice::from_ref(&a)).unwrap(), codebook_for(std::slice::from_ref(&b)).unwrap());
    let r = run_experiment(&[a], &[b], Scheme::PT, ModelKind::FnnSigmoid, &quick()).unwrap();
    assert_eq!(r.protocol, Protocol::Transfer);
    assert_eq!((r.models_trained, r.epochs), (1, 40));
    assert_eq!(r.evaluation.confusion.total(), 48);
}

#[test]
fn bad_inputs_are_rejected() {
    let session = generate_session(&synth(2)).unwrap();
    let mut cfg = quick();
    cfg.folds = 1;
    assert!(run_experiment(std::slice::from_ref(&session), &[], Scheme::PT, ModelKind::FnnTanh, &cfg).is_err());
    let one_key = SynthConfig {
        alphabet: vec!["5".into()],
        ..synth(10)
    };
    let s = generate_session(&one_key).unwrap();
    assert!(codebook_for(&[s]).is_err());
}
