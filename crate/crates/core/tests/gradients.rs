use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pnnkit::training::finite_difference_audit;
use pnnkit::{Mode, Model, PnnConfig, PnnModel, VdnnConfig, VdnnModel, Wiring};

fn batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

#[test]
fn every_wiring_passes_the_audit() {
    let x = batch(4, 16, 1);
    let labels = [0, 2, 1, 2];
    for wiring in Wiring::ALL {
        let model = PnnModel::<f64>::init(PnnConfig::new(16, 4, 3, 3).with_wiring(wiring), 9).unwrap();
        let report = finite_difference_audit(&model, x.view(), &labels, 1e-6).unwrap();
        assert!(
            report.max_relative_error < 1e-5,
            "{wiring}: {} at {}[{}]",
            report.max_relative_error,
            report.worst_block,
            report.worst_index
        );
    }
}

#[test]
fn vdnn_passes_the_audit() {
    let x = batch(4, 16, 2);
    let model = VdnnModel::<f64>::init(VdnnConfig::new(16, 3, 3), 4).unwrap();
    let report = finite_difference_audit(&model, x.view(), &[1, 0, 2, 1], 1e-6).unwrap();
    assert!(report.max_relative_error < 1e-5, "{report:?}");
}

#[test]
fn coarse_step_is_less_accurate() {
    let x = batch(4, 16, 3);
    let labels = [0, 1, 2, 0];
    let model = PnnModel::<f64>::init(PnnConfig::new(16, 4, 3, 3), 2).unwrap();
    let fine = finite_difference_audit(&model, x.view(), &labels, 1e-6).unwrap();
    let coarse = finite_difference_audit(&model, x.view(), &labels, 1e-2).unwrap();
    assert!(coarse.max_absolute_error > fine.max_absolute_error);
}

#[test]
fn duplicated_sample_leaves_frozen_gradients_unchanged() {
    let model = PnnModel::<f64>::init(PnnConfig::new(12, 3, 3, 3), 6).unwrap();
    let x = batch(3, 12, 4);
    let labels = [0, 1, 2];
    // Appending copies of every row keeps each sample's weight in the mean.
    let doubled = ndarray::concatenate(ndarray::Axis(0), &[x.view(), x.view()]).unwrap();
    let doubled_labels = [0, 1, 2, 0, 1, 2];

    let (_, c1) = model.forward(x.view(), Mode::Infer).unwrap();
    let (_, c2) = model.forward(doubled.view(), Mode::Infer).unwrap();
    let g1 = model.backward(&c1, &labels).unwrap();
    let g2 = model.backward(&c2, &doubled_labels).unwrap();
    for (a, b) in g1.blocks().iter().zip(g2.blocks().iter()) {
        for (u, v) in a.values.iter().zip(b.values.iter()) {
            assert!((u - v).abs() < 1e-10, "{}: {u} vs {v}", a.name);
        }
    }
}

#[test]
fn last_layer_is_silent_when_the_classifier_ignores_it() {
    let config = PnnConfig::new(10, 3, 3, 2);
    let mut model = PnnModel::<f64>::init(config, 8).unwrap();
    let start = 10 + 3 * 2;
    model
        .network_mut()
        .classifier_mut()
        .weight
        .slice_mut(s![.., start..start + 3])
        .fill(0.0);
    let x = batch(5, 10, 5);
    let labels = [0, 1, 1, 0, 1];
    let (_, cache) = model.forward(x.view(), Mode::Train).unwrap();
    let grads = model.backward(&cache, &labels).unwrap();

    let last = &grads.hidden[2];
    for v in last.weight.iter().chain(&last.bias).chain(&last.gamma).chain(&last.beta) {
        assert_eq!(*v, 0.0);
    }
    assert!(grads.hidden[1].weight.iter().any(|v| *v != 0.0));
    assert!(grads.hidden[0].weight.iter().any(|v| *v != 0.0));
}

#[test]
fn deep_progressive_layers_keep_receiving_gradient() {
    let model = PnnModel::<f64>::init(PnnConfig::new(64, 8, 8, 4), 3).unwrap();
    let x = batch(8, 64, 6);
    let labels = [0, 1, 2, 3, 0, 1, 2, 3];
    let (_, cache) = model.forward(x.view(), Mode::Train).unwrap();
    let grads = model.backward(&cache, &labels).unwrap();
    for (n, layer) in grads.hidden.iter().enumerate() {
        let norm: f64 = layer.weight.iter().map(|v| v.abs()).sum();
        assert!(norm > 1e-8, "layer {} gradient vanished", n + 1);
    }
}

#[test]
fn parameter_gradients_match_full_backward() {
    let model = PnnModel::<f64>::init(PnnConfig::new(16, 4, 3, 3), 1).unwrap();
    let x = batch(6, 16, 7);
    let labels = [0, 1, 2, 2, 1, 0];
    let (_, cache) = model.forward(x.view(), Mode::Train).unwrap();
    let full = model.backward(&cache, &labels).unwrap();
    let params = model.parameter_gradients(&cache, &labels).unwrap();
    assert_eq!(full.blocks().len(), params.blocks().len());
    for (a, b) in full.blocks().iter().zip(params.blocks().iter()) {
        assert_eq!(a.values, b.values);
    }
    assert_eq!(full.input.dim(), (6, 16));
}

#[test]
fn single_precision_agrees_with_double() {
    let config = PnnConfig::new(16, 4, 3, 3);
    let m64 = PnnModel::<f64>::init(config.clone(), 5).unwrap();
    let m32 = PnnModel::<f32>::init(config, 5).unwrap();
    let x = batch(4, 16, 8);
    let (p64, _) = m64.forward(x.view(), Mode::Train).unwrap();
    let (p32, _) = m32.forward(x.mapv(|v| v as f32).view(), Mode::Train).unwrap();
    for (a, b) in p64.iter().zip(p32.iter()) {
        assert!((a - *b as f64).abs() < 1e-4);
    }
}
