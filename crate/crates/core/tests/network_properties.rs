use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pnnkit::{Mode, Model, PnnConfig, PnnModel, PnnModelF32, StoragePrecision, VdnnConfig, VdnnModel};

#[test]
fn one_unit_network_matches_hand_computation() {
    let mut model = PnnModel::<f64>::zeros(PnnConfig::new(2, 1, 1, 2)).unwrap();
    {
        let net = model.network_mut();
        let layer = &mut net.hidden_mut()[0];
        layer.linear.weight = array![[0.5, -1.0]];
        layer.linear.bias = array![0.25];
        layer.norm.running_mean = array![0.5];
        layer.norm.running_var = array![4.0];
        layer.norm.gamma = array![2.0];
        layer.norm.beta = array![-0.5];
        let c = net.classifier_mut();
        c.weight = array![[1.0, 0.0, 0.5], [0.0, 1.0, -1.0]];
        c.bias = array![0.1, -0.2];
    }
    let x = array![[2.0, 0.5]];
    let (p, _) = model.forward(x.view(), Mode::Infer).unwrap();

    let z: f64 = 0.5 * 2.0 - 1.0 * 0.5 + 0.25;
    let h = 2.0 * (z.max(0.0) - 0.5) / (4.0f64 + 1e-5).sqrt() - 0.5;
    let l0 = 2.0 + 0.5 * h + 0.1;
    let l1 = 0.5 - h - 0.2;
    let e0 = l0.exp() / (l0.exp() + l1.exp());
    assert!((p[[0, 0]] - e0).abs() < 1e-12);
    assert!((p[[0, 1]] - (1.0 - e0)).abs() < 1e-12);
}

#[test]
fn layer_one_weights_are_centred() {
    let k = 1000;
    let model = PnnModel::<f64>::init(PnnConfig::new(k, 100, 1, 2), 17).unwrap();
    let w = &model.network().hidden()[0].linear.weight;
    let n = w.len() as f64;
    let mean = w.sum() / n;
    let bound = (6.0 / k as f64).sqrt();
    let standard_error = bound / 3f64.sqrt() / n.sqrt();
    assert!(mean.abs() < 3.0 * standard_error, "mean {mean}, se {standard_error}");
    assert!(w.iter().all(|v| v.abs() <= bound));
}

#[test]
fn identical_seeds_give_identical_models() {
    let a = VdnnModel::<f64>::init(VdnnConfig::new(32, 3, 4), 3).unwrap();
    let b = VdnnModel::<f64>::init(VdnnConfig::new(32, 3, 4), 3).unwrap();
    assert_eq!(a, b);
    let c = VdnnModel::<f64>::init(VdnnConfig::new(32, 3, 4), 4).unwrap();
    assert_ne!(a, c);
}

#[test]
fn container_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let model = PnnModel::<f64>::init(PnnConfig::new(20, 5, 4, 3), 12).unwrap();
    let path = dir.path().join("m.pnn");
    model.save(&path).unwrap();
    assert_eq!(PnnModel::<f64>::load(&path).unwrap(), model);

    let narrow = dir.path().join("m32.pnn");
    model.save_with(&narrow, StoragePrecision::F32).unwrap();
    let back = PnnModel::<f64>::load(&narrow).unwrap();
    let as_f32 = PnnModelF32::load(&narrow).unwrap();
    for (a, b) in back.network().hidden()[0]
        .linear
        .weight
        .iter()
        .zip(as_f32.network().hidden()[0].linear.weight.iter())
    {
        assert_eq!(*a as f32, *b);
    }

    let vd = VdnnModel::<f32>::init(VdnnConfig::new(16, 2, 2), 1).unwrap();
    let vpath = dir.path().join("m.vdnn");
    vd.save(&vpath).unwrap();
    assert_eq!(VdnnModel::<f32>::load(&vpath).unwrap(), vd);
}

#[test]
fn truncated_container_is_rejected_before_reading_tensors() {
    let model = PnnModel::<f64>::init(PnnConfig::new(20, 5, 2, 3), 1).unwrap();
    let bytes = model.to_bytes();
    let err = PnnModel::<f64>::decode(&bytes[..bytes.len() / 3]).unwrap_err();
    assert!(err.to_string().contains("payload"), "{err}");
    let mut wrong = bytes.clone();
    wrong[0] = b'X';
    assert!(PnnModel::<f64>::decode(&wrong).unwrap_err().to_string().contains("magic"));
}

fn input(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-3.0..3.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn probabilities_are_distributions(
        k in 2usize..24,
        h in 1usize..6,
        d in 1usize..5,
        c in 2usize..6,
        b in 2usize..7,
        seed in any::<u64>(),
    ) {
        let model = PnnModel::<f64>::init(PnnConfig::new(k, h, d, c), seed).unwrap();
        let x = input(b, k, seed ^ 1);
        for mode in [Mode::Train, Mode::Infer] {
            let (p, _) = model.forward(x.view(), mode).unwrap();
            for row in p.rows() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-6);
                prop_assert!(row.iter().all(|v| *v >= 0.0));
            }
        }
    }

    #[test]
    fn vdnn_probabilities_are_distributions(k in 8usize..64, d in 1usize..4, seed in any::<u64>()) {
        let config = VdnnConfig::new(k, d, 3);
        prop_assume!(config.validate().is_ok());
        let model = VdnnModel::<f64>::init(config, seed).unwrap();
        let (p, _) = model.forward(input(3, k, seed).view(), Mode::Train).unwrap();
        for row in p.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn inference_is_row_independent(seed in any::<u64>()) {
        let model = PnnModel::<f64>::init(PnnConfig::new(10, 3, 3, 3), seed).unwrap();
        let x = input(5, 10, seed);
        let (all, _) = model.forward(x.view(), Mode::Infer).unwrap();
        let (one, _) = model.forward(x.slice(ndarray::s![2..3, ..]), Mode::Infer).unwrap();
        for (a, b) in all.row(2).iter().zip(one.row(0).iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
