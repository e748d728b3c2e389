use miafex::dataset::{ImageSample, Split};
use miafex::model::{loss_and_grad, ModelConfig, ModelParams};
use miafex::numerics::RngState;
use miafex::synthetic::grating_images;
use miafex::trainer::{batch_gradient, evaluate, train, NadamConfig, TrainConfig};
use miafex::Error;

fn small_config() -> ModelConfig {
    ModelConfig {
        image_size: (16, 16),
        patch_size: 8,
        embed_dim: 16,
        num_layers: 1,
        num_heads: 2,
        num_classes: 3,
        ..ModelConfig::default()
    }
}

fn small_data(seed: u64) -> Vec<ImageSample<f64>> {
    grating_images(3, 4, (16, 16), 0.1, Split::Train, seed)
}

#[test]
fn batch_gradient_is_mean_of_sample_gradients() {
    let cfg = small_config();
    let params = ModelParams::<f64>::init(&cfg, &mut RngState::new(3)).unwrap();
    let data = small_data(4);
    let idx = [5, 0, 7, 2, 9];
    let (loss, grad) = batch_gradient(&data, &idx, &params).unwrap();

    let mut mean_loss = 0.0;
    let mut sums: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
    for &i in &idx {
        let (l, g) = loss_and_grad(&data[i].pixels, data[i].label, &params).unwrap();
        mean_loss += l / idx.len() as f64;
        for (s, t) in sums.iter_mut().zip(g.tensors()) {
            for (a, b) in s.iter_mut().zip(t.data()) {
                *a += b / idx.len() as f64;
            }
        }
    }
    assert!((loss - mean_loss).abs() < 1e-12);
    for (s, t) in sums.iter().zip(grad.tensors()) {
        for (a, b) in s.iter().zip(t.data()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn zero_epochs_returns_input() {
    let cfg = small_config();
    let params = ModelParams::<f64>::init(&cfg, &mut RngState::new(1)).unwrap();
    let tc = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let (out, curve) = train(params.clone(), &small_data(1), &tc, &NadamConfig::default()).unwrap();
    assert_eq!(out, params);
    assert!(curve.is_empty());
}

#[test]
fn empty_dataset_rejected() {
    let params = ModelParams::<f64>::init(&small_config(), &mut RngState::new(1)).unwrap();
    let r = train(params, &[], &TrainConfig::default(), &NadamConfig::default());
    assert!(matches!(r, Err(Error::Domain(_))));
}

#[test]
fn label_out_of_range_rejected() {
    let params = ModelParams::<f64>::init(&small_config(), &mut RngState::new(1)).unwrap();
    let mut data = small_data(2);
    data[3].label = 7;
    assert!(train(params, &data, &TrainConfig::default(), &NadamConfig::default()).is_err());
}

#[test]
fn seeded_training_is_reproducible() {
    let cfg = small_config();
    let tc = TrainConfig {
        epochs: 3,
        batch_size: 5,
        seed: 9,
        shuffle: true,
    };
    let run = || {
        let p = ModelParams::<f64>::init(&cfg, &mut RngState::new(2)).unwrap();
        train(p, &small_data(5), &tc, &NadamConfig::default()).unwrap()
    };
    let (pa, ca) = run();
    let (pb, cb) = run();
    assert_eq!(ca, cb);
    assert_eq!(pa, pb);
    assert_eq!(ca.len(), 3);
    assert!(ca.losses.iter().all(|l| l.is_finite()));
}

#[test]
fn training_lowers_loss() {
    let cfg = small_config();
    let p = ModelParams::<f64>::init(&cfg, &mut RngState::new(6)).unwrap();
    let tc = TrainConfig {
        epochs: 20,
        batch_size: 4,
        seed: 1,
        shuffle: true,
    };
    let nc = NadamConfig {
        learning_rate: 1e-3,
        ..NadamConfig::default()
    };
    let data = grating_images(3, 10, (16, 16), 0.1, Split::Train, 7);
    let (trained, curve) = train(p, &data, &tc, &nc).unwrap();
    assert!(
        curve.last().unwrap() < 0.5 * curve.first().unwrap(),
        "{:?}",
        curve.losses
    );
    let eval = evaluate(&trained, &small_data(8)).unwrap();
    assert!(eval.accuracy > 0.9, "{}", eval.accuracy);
}

#[test]
fn evaluation_accuracy_is_confusion_trace() {
    let cfg = small_config();
    let p = ModelParams::<f64>::init(&cfg, &mut RngState::new(11)).unwrap();
    let data = small_data(12);
    let e = evaluate(&p, &data).unwrap();
    assert_eq!(e.predictions.len(), data.len());
    assert_eq!(e.confusion.total(), data.len() as u64);
    assert_eq!(e.accuracy, e.confusion.trace() as f64 / data.len() as f64);
    let correct = e.predictions.iter().zip(&data).filter(|(p, s)| **p == s.label).count();
    assert_eq!(e.confusion.trace(), correct as u64);
}

#[test]
fn single_wrong_prediction_scores_zero() {
    let cfg = small_config();
    let p = ModelParams::<f64>::init(&cfg, &mut RngState::new(11)).unwrap();
    let mut sample = small_data(12).remove(0);
    let pred = evaluate(&p, std::slice::from_ref(&sample)).unwrap().predictions[0];
    sample.label = (pred + 1) % 3;
    assert_eq!(evaluate(&p, &[sample]).unwrap().accuracy, 0.0);
}
