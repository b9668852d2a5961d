use super::*;
use crate::nn::checkpoint::Checkpoint;
use crate::nn::tensor::Tensor;
use crate::synth::{phantom, PhantomConfig};
use crate::volcore::{Dims, LabelMap, Spacing, Volume};
use crate::Error;

fn small_spec(classes: usize) -> UNetSpec {
    UNetSpec {
        base_features: 8,
        depth: 2,
        num_classes: classes,
        input_size: 32,
        ..UNetSpec::default()
    }
}

fn cases(n: usize, slices: usize) -> Vec<TrainCase> {
    (0..n)
        .map(|i| {
            let cfg = PhantomConfig {
                slices,
                infarct: i % 2 == 1,
                ..PhantomConfig::default()
            };
            let (v, l) = phantom(&cfg, &format!("c{i}"), i as u64).unwrap();
            TrainCase::new(v, l).unwrap()
        })
        .collect()
}

// Independent closed form: conv k*k*cin*cout + cout, BN 2c, SE 2*c*h + h + c.
fn closed_form_count(depth: usize, base: usize, classes: usize) -> usize {
    let conv = |i: usize, o: usize, k: usize| i * o * k * k + o;
    let se = |c: usize| {
        let h = (c / 16).max(2);
        2 * c * h + h + c
    };
    let block = |i: usize, o: usize| conv(i, o, 3) + 2 * o + se(o);
    let stage = |i: usize, o: usize| block(i, o) + block(o, o);
    let mut total = 0;
    let mut cin = 1;
    for l in 0..=depth {
        total += stage(cin, base << l);
        cin = base << l;
    }
    for l in 0..depth {
        let (wide, narrow) = (base << (l + 1), base << l);
        total += wide * narrow * 4 + narrow + stage(2 * narrow, narrow);
    }
    total + conv(base, classes, 1)
}

#[test]
fn parameter_count_matches_closed_form_and_frozen_values() {
    for (d, f, k, frozen) in [(4, 32, 3, 7_877_659), (4, 32, 4, 7_877_692), (2, 8, 4, 30_488), (2, 32, 3, 474_635)] {
        let spec = UNetSpec {
            depth: d,
            base_features: f,
            num_classes: k,
            input_size: 32,
            ..UNetSpec::default()
        };
        let net = UNet::<f32>::new(spec, 0).unwrap();
        assert_eq!(net.params.count(), closed_form_count(d, f, k));
        assert_eq!(net.params.count(), frozen);
    }
}

#[test]
fn default_depth_forward_shape() {
    let model = SegModel::build(SegRole::Anatomical, UNetSpec::default(), 1).unwrap();
    let x = Tensor::new(vec![1, 1, 256, 256], vec![0.1f32; 256 * 256]).unwrap();
    let p = model.probabilities(x).unwrap();
    assert_eq!(p.shape(), &[1, 3, 256, 256]);
}

#[test]
fn small_forward_is_simplex() {
    let model = SegModel::build(SegRole::Pathological, small_spec(4), 2).unwrap();
    let data: Vec<f32> = (0..2 * 32 * 32).map(|i| ((i * 37) % 101) as f32 / 50.0 - 1.0).collect();
    let p = model.probabilities(Tensor::new(vec![2, 1, 32, 32], data).unwrap()).unwrap();
    assert_eq!(p.shape(), &[2, 4, 32, 32]);
    let hw = 32 * 32;
    for n in 0..2 {
        for i in 0..hw {
            let s: f32 = (0..4).map(|c| p.data()[(n * 4 + c) * hw + i]).sum();
            assert!((s - 1.0).abs() < 1e-5);
        }
    }
}

#[test]
fn indivisible_size_rejected() {
    let spec = UNetSpec {
        input_size: 30,
        ..small_spec(3)
    };
    assert!(matches!(UNet::<f32>::new(spec, 0), Err(Error::Config(_))));
    assert!(SegModel::build(SegRole::Anatomical, small_spec(4), 0).is_err());
}

#[test]
fn same_seed_same_parameters() {
    let a = UNet::<f32>::new(small_spec(3), 9).unwrap();
    let b = UNet::<f32>::new(small_spec(3), 9).unwrap();
    let c = UNet::<f32>::new(small_spec(3), 10).unwrap();
    assert_eq!(a.params.tensors(), b.params.tensors());
    assert_ne!(a.params.tensors(), c.params.tensors());
}

#[test]
fn role_class_mapping() {
    let a: Vec<usize> = (0..=4).map(|l| SegRole::Anatomical.class_of_label(l)).collect();
    let p: Vec<usize> = (0..=4).map(|l| SegRole::Pathological.class_of_label(l)).collect();
    assert_eq!(a, [0, 1, 2, 2, 2]);
    assert_eq!(p, [0, 0, 1, 2, 3]);
}

#[test]
fn constant_logits_predict_class_zero() {
    let mut model = SegModel::build(SegRole::Anatomical, small_spec(3), 3).unwrap();
    let head = *model.net.head();
    model.net.params.get_mut(head.w).data_mut().fill(0.0);
    model.net.params.get_mut(head.b).data_mut().fill(0.0);
    let (v, _) = phantom(&PhantomConfig::default(), "x", 0).unwrap();
    let pred = model.predict_case(&v).unwrap();
    assert!(pred.labels().iter().all(|&c| c == 0));
}

#[test]
fn argmax_prefers_lower_index_on_ties() {
    let probs = [0.4f32, 0.2, 0.4, 0.4, 0.4, 0.4];
    // pixel 0 ties across all classes, pixel 1 ties between classes 1 and 2
    assert_eq!(argmax_channels(&probs, 1, 3, 2), vec![0, 1]);
}

#[test]
fn predict_case_stacks_slices() {
    let model = SegModel::build(SegRole::Anatomical, small_spec(3), 4).unwrap();
    let cfg = PhantomConfig {
        slices: 11,
        ..PhantomConfig::default()
    };
    let (v, _) = phantom(&cfg, "s", 5).unwrap();
    let whole = model.predict_case(&v).unwrap();
    assert!(whole.labels().iter().all(|&c| c < 3));
    let hw = 32 * 32;
    for s in 0..11 {
        let one = Volume::new(Dims::new(1, 32, 32).unwrap(), Spacing::unit(), v.slice(s).to_vec(), "one").unwrap();
        let p = model.predict_case(&one).unwrap();
        assert_eq!(p.labels(), &whole.labels()[s * hw..(s + 1) * hw]);
    }
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let mut model = SegModel::build(SegRole::Pathological, small_spec(4), 6).unwrap();
    let cfg = TrainConfig {
        max_epochs: 2,
        early_stop_patience: 2,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let data = cases(2, 2);
    train(&mut model, &data, &[], &cfg).unwrap();
    let bytes = model.to_checkpoint(None).to_bytes();
    let back = SegModel::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
    assert_eq!(back.role, SegRole::Pathological);
    assert_eq!(back.net.running, model.net.running);
    let a = model.predict_case(&data[0].image).unwrap();
    let b = back.predict_case(&data[0].image).unwrap();
    assert_eq!(a.labels(), b.labels());
}

#[test]
fn training_is_deterministic() {
    let data = cases(2, 3);
    let cfg = TrainConfig {
        max_epochs: 3,
        early_stop_patience: 3,
        batch_size: 2,
        seed: 11,
        augment_flips: true,
        ..TrainConfig::default()
    };
    let run = || {
        let mut m = SegModel::build(SegRole::Anatomical, small_spec(3), 7).unwrap();
        let h = train(&mut m, &data, &data[..1], &cfg).unwrap();
        (h.to_csv(), m.net.params.tensors().to_vec())
    };
    let (h1, p1) = run();
    let (h2, p2) = run();
    assert_eq!(h1, h2);
    assert_eq!(p1, p2);
    assert_eq!(h1.lines().next(), Some("epoch,train_loss,val_loss"));
    assert_eq!(h1.lines().count(), 4);
}

#[test]
fn zero_patience_stops_at_first_non_improvement_and_restores_best() {
    let data = cases(2, 2);
    let cfg = TrainConfig {
        max_epochs: 40,
        early_stop_patience: 0,
        lr: 0.05,
        batch_size: 1,
        ..TrainConfig::default()
    };
    let mut model = SegModel::build(SegRole::Anatomical, small_spec(3), 8).unwrap();
    let h = train(&mut model, &data, &data[1..], &cfg).unwrap();
    let vals: Vec<f64> = h.epochs.iter().map(|r| r.val_loss).collect();
    for w in vals.windows(2).take(vals.len().saturating_sub(2)) {
        assert!(w[1] < w[0], "stopped late: {vals:?}");
    }
    if h.stopped_early {
        let n = vals.len();
        assert!(vals[n - 1] >= vals[n - 2]);
        assert_eq!(h.best_epoch, n - 1);
    }
    assert!(h.epochs.iter().all(|r| r.val_loss >= h.best_val_loss));
    let again = monitor_loss(&model, &data[1..], &cfg).unwrap();
    assert_eq!(again, h.best_val_loss);
}

#[test]
fn empty_training_set_is_config_error() {
    let mut model = SegModel::build(SegRole::Anatomical, small_spec(3), 0).unwrap();
    assert!(matches!(train(&mut model, &[], &[], &TrainConfig::default()), Err(Error::Config(_))));
}

#[test]
fn train_config_validation() {
    let bad = TrainConfig {
        early_stop_patience: 600,
        ..TrainConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = TrainConfig {
        batch_size: 0,
        ..TrainConfig::default()
    };
    assert!(bad.validate().is_err());
    assert!(TrainConfig::default().validate().is_ok());
}

#[test]
fn mismatched_case_rejected() {
    let (v, _) = phantom(&PhantomConfig::default(), "m", 0).unwrap();
    let l = LabelMap::zeros(Dims::new(1, 32, 32).unwrap(), Spacing::unit());
    assert!(TrainCase::new(v, l).is_err());
}
