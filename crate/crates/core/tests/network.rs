mod common;

use common::*;
use pitomo_core::network::*;
use pitomo_core::nn::Tensor;
use pitomo_core::Error;
use proptest::prelude::*;

fn all_specs(n: usize, numz: usize, numr: usize) -> Vec<ModelSpec> {
    let mut v = Vec::new();
    for backbone in [Backbone::Vgg, Backbone::Res] {
        for pi in [false, true] {
            for act in [Activation::Relu, Activation::Softplus] {
                v.push(ModelSpec::new(backbone, pi, act, n, numz, numr));
            }
        }
    }
    v
}

#[test]
fn shape_contract() {
    for spec in all_specs(3, 9, 7) {
        let model = Model::<f64>::new(spec, 1).unwrap();
        let x = random_tensor(&[2, 3], &mut rng(2));
        let block = random_tensor(&[3, 9, 7], &mut rng(3)).map(f64::abs);
        let pi = spec.use_pi.then(|| model.pi_features(&block).unwrap());
        if let Some(pi) = &pi {
            assert_eq!(pi.shape(), &[24, 3, 3]);
        }
        let y = model.predict(&x, pi.as_ref()).unwrap();
        assert_eq!(y.shape(), &[2, 63]);
        if spec.use_pi {
            assert_eq!(model.backbone_features(&x).unwrap().shape(), &[2, 24, 3, 3]);
            assert!(matches!(model.predict(&x, None), Err(Error::MissingPi)));
        }
        let wrong = Tensor::<f64>::zeros(&[2, 4]);
        assert!(matches!(model.predict(&wrong, pi.as_ref()), Err(Error::ShapeMismatch { .. })));
    }
}

#[test]
fn built_counts_equal_analytic_counts() {
    for spec in all_specs(4, 10, 11) {
        let a = Model::<f32>::new(spec, 1).unwrap();
        let b = Model::<f32>::new(spec, 2).unwrap();
        assert_eq!(a.parameter_count(), spec.parameter_count());
        assert_eq!(a.parameter_count(), b.parameter_count());
        let names = |m: &Model<f32>| m.params().iter().map(|p| p.name.clone()).collect::<Vec<_>>();
        assert_eq!(names(&a), names(&b));
        let table: usize = spec.layer_table().iter().map(|l| l.params).sum();
        assert_eq!(table, spec.parameter_count());
    }
}

#[test]
fn target_parameter_totals() {
    let cases = [
        (Backbone::Vgg, false, 40, 32, 36, 7_620_672),
        (Backbone::Vgg, false, 92, 75, 50, 54_620_796),
        (Backbone::Vgg, true, 40, 32, 36, 9_438_432),
        (Backbone::Vgg, true, 92, 75, 50, 64_226_700),
        (Backbone::Res, false, 40, 32, 36, 13_071_792),
        (Backbone::Res, false, 92, 75, 50, 230_353_860),
        (Backbone::Res, true, 40, 32, 36, 10_834_512),
        (Backbone::Res, true, 92, 75, 50, 71_599_764),
    ];
    for (backbone, pi, n, numz, numr, expected) in cases {
        let spec = ModelSpec::new(backbone, pi, Activation::Softplus, n, numz, numr);
        assert_eq!(spec.parameter_count(), expected, "{}", spec.name());
    }
}

#[test]
fn spatial_underflow_is_rejected() {
    let spec = ModelSpec::new(Backbone::Vgg, false, Activation::Relu, 4, 3, 8);
    assert!(matches!(spec.validate(), Err(Error::SpatialUnderflow(_))));
    assert!(Model::<f32>::new(spec, 0).is_err());
    let res = ModelSpec::new(Backbone::Res, false, Activation::Relu, 4, 3, 8);
    assert!(res.validate().is_ok());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let spec = ModelSpec::new(Backbone::Res, true, Activation::Softplus, 3, 8, 8);
    let mut model = Model::<f32>::new(spec, 4).unwrap();
    // give the running statistics non-default values
    let x = random_tensor(&[4, 3], &mut rng(5)).cast::<f32>();
    let block = random_tensor(&[3, 8, 8], &mut rng(6)).map(f64::abs).cast::<f32>();
    model.forward(&x, Some(&block)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let extra = Tensor::from_vec(&[2], vec![1.5f32, -2.0]);
    save_checkpoint(&model, &path, &[("note".into(), &extra)], serde_json::json!({"k": 1})).unwrap();
    let ck = load_checkpoint_for(&path, &spec).unwrap();
    for (a, b) in model.params().iter().zip(ck.model.params()) {
        assert_eq!(a.value.data(), b.value.data(), "{}", a.name);
    }
    for (a, b) in model.buffers().iter().zip(ck.model.buffers()) {
        assert_eq!(a.value.data(), b.value.data(), "{}", a.name);
    }
    assert_eq!(ck.extra["note"].data(), extra.data());
    assert_eq!(ck.meta["k"], 1);

    let again = dir.path().join("again.ckpt");
    save_checkpoint(&ck.model, &again, &[("note".into(), &extra)], serde_json::json!({"k": 1})).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());

    let other = ModelSpec::new(Backbone::Vgg, true, Activation::Softplus, 3, 8, 8);
    assert!(matches!(load_checkpoint_for(&path, &other), Err(Error::SpecMismatch(_))));

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Format { .. })));
    std::fs::write(&path, b"not a checkpoint").unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Format { .. })));
}

#[test]
fn fusion_scales_linearly_with_pi() {
    let mut g = rng(7);
    let features = random_tensor(&[3, 4, 3, 3], &mut g);
    let pi = random_tensor(&[4, 3, 3], &mut g);
    let fused = fuse(&features, &pi).unwrap();
    let scaled = fuse(&features, &pi.map(|v| 2.0 * v)).unwrap();
    for (a, b) in fused.data().iter().zip(scaled.data()) {
        assert_eq!(2.0 * a, *b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn softplus_head_is_strictly_positive(seed in any::<u64>(), scale in 0.1f64..50.0) {
        let spec = ModelSpec::new(Backbone::Vgg, true, Activation::Softplus, 2, 6, 6);
        let mut model = Model::<f64>::new(spec, seed).unwrap();
        let mut g = rng(seed);
        for p in model.params_mut() {
            let shape = p.value.shape().to_vec();
            p.value = random_tensor(&shape, &mut g).map(|v| scale * v);
        }
        let x = random_tensor(&[4, 2], &mut g).map(|v| scale * v);
        let block = random_tensor(&[2, 6, 6], &mut g);
        let pi = model.pi_features(&block).unwrap();
        let y = model.predict(&x, Some(&pi)).unwrap();
        prop_assert!(y.data().iter().all(|v| *v > 0.0));
    }
}
