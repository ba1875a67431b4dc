//! Finite-difference gradient cases shared by the gradient tests and the
//! acceptance run. Each case reports its worst relative error.

use pitomo_core::network::*;
use pitomo_core::nn::*;

use super::{gradient_error, layer_gradient_error, random_tensor, rng};

fn randomize(layer: &mut dyn Layer<f64>, seed: u64) {
    let mut rng = rng(seed);
    let mut ps = Vec::new();
    layer.params_mut(&mut ps);
    for p in ps {
        let shape = p.value.shape().to_vec();
        p.value = random_tensor(&shape, &mut rng);
    }
}

fn case(name: &str, layer: &mut dyn Layer<f64>, input_shape: &[usize], seed: u64) -> (String, f64) {
    let x = random_tensor(input_shape, &mut rng(seed + 1000));
    (name.to_string(), layer_gradient_error(layer, &x, seed, 60))
}

pub fn conv_cases() -> Vec<(String, f64)> {
    let mut r = rng(1);
    vec![
        case("conv 3x3", &mut Conv2d::<f64>::new("c", 3, 4, 3, 1, 1, &mut r), &[2, 3, 5, 6], 1),
        case("conv 3x3 s2", &mut Conv2d::<f64>::new("c", 2, 3, 3, 2, 1, &mut r), &[2, 2, 7, 6], 2),
        case("conv 1x1 s2", &mut Conv2d::<f64>::new("c", 3, 2, 1, 2, 0, &mut r), &[3, 3, 5, 5], 3),
    ]
}

pub fn batch_norm_cases() -> Vec<(String, f64)> {
    let mut bn = BatchNorm2d::<f64>::new("bn", 3);
    randomize(&mut bn, 4);
    vec![case("batch norm", &mut bn, &[4, 3, 3, 2], 4)]
}

pub fn pool_cases() -> Vec<(String, f64)> {
    vec![
        case("max pool", &mut MaxPool2d::new(), &[2, 2, 5, 7], 5),
        case("adaptive pool down", &mut AdaptiveMaxPool2d::new(3, 3), &[2, 2, 8, 7], 6),
        case("adaptive pool up", &mut AdaptiveMaxPool2d::new(3, 3), &[2, 2, 2, 2], 7),
    ]
}

pub fn dense_cases() -> Vec<(String, f64)> {
    let mut r = rng(8);
    vec![
        case("linear", &mut Linear::<f64>::new("fc", 7, 5, &mut r), &[3, 7], 8),
        case("relu", &mut Relu::new(), &[3, 9], 9),
        case("softplus", &mut Softplus::new(), &[3, 9], 10),
        case("flatten", &mut Flatten::new(), &[2, 2, 3, 3], 11),
    ]
}

pub fn residual_cases() -> Vec<(String, f64)> {
    let mut r = rng(12);
    [(3, 3, 1, true), (3, 5, 2, true), (2, 4, 1, false)]
        .into_iter()
        .map(|(cin, cout, stride, bn)| {
            let mut block = ResidualBlock::<f64>::new("res", cin, cout, stride, bn, &mut r);
            randomize(&mut block, 13);
            case(&format!("residual {cin}->{cout} s{stride}"), &mut block, &[3, cin, 6, 5], 13)
        })
        .collect()
}

pub fn input_cases() -> Vec<(String, f64)> {
    let mut affine = PixelAffine::<f64>::new("input", 3, 4);
    randomize(&mut affine, 14);
    vec![
        case("pixel affine", &mut affine, &[2, 5], 14),
        case("broadcast", &mut Broadcast { numz: 3, numr: 4 }, &[2, 5], 15),
    ]
}

/// Every parameter tensor of a whole model (fusion and side chain only exist
/// inside one), probed on up to 12 coordinates each.
pub fn model_cases(spec: ModelSpec, seed: u64) -> Vec<(String, f64)> {
    const H: f64 = 1e-6;
    let mut model = Model::<f64>::new(spec, seed).unwrap();
    let mut g = rng(seed + 1);
    for p in model.params_mut() {
        if p.name.ends_with(".bias") {
            let shape = p.value.shape().to_vec();
            p.value = random_tensor(&shape, &mut g).map(|v| 0.1 * v);
        }
    }
    let x = random_tensor(&[3, spec.n], &mut g).map(|v| v.abs() + 0.1);
    let block = random_tensor(&[spec.n, spec.numz, spec.numr], &mut g).map(|v| v.abs());
    let pi = spec.use_pi.then_some(&block);
    let out = model.forward(&x, pi).unwrap();
    let r = random_tensor(out.shape(), &mut g);
    model.zero_grad();
    model.forward(&x, pi).unwrap();
    model.backward(&r);
    let analytic: Vec<(String, Vec<f64>)> =
        model.params().iter().map(|p| (p.name.clone(), p.grad.data().to_vec())).collect();

    let objective = |model: &mut Model<f64>| -> f64 {
        let y = model.forward(&x, pi).unwrap();
        y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
    };
    let mut out = Vec::new();
    for (k, (name, grad)) in analytic.iter().enumerate() {
        let picks: Vec<usize> = (0..grad.len().min(12)).map(|i| (i * 7919) % grad.len()).collect();
        let (mut an, mut fd) = (Vec::new(), Vec::new());
        for &i in &picks {
            let shift = |model: &mut Model<f64>, d: f64| model.params_mut()[k].value.data_mut()[i] += d;
            shift(&mut model, H);
            let fp = objective(&mut model);
            shift(&mut model, -2.0 * H);
            let fm = objective(&mut model);
            shift(&mut model, H);
            an.push(grad[i]);
            fd.push((fp - fm) / (2.0 * H));
        }
        out.push((format!("{} {name}", spec.name()), gradient_error(&an, &fd)));
    }
    out
}

/// The four backbone/PI combinations on a tiny grid.
pub fn all_model_cases() -> Vec<(String, f64)> {
    [
        (Backbone::Vgg, true, Activation::Softplus),
        (Backbone::Vgg, false, Activation::Relu),
        (Backbone::Res, true, Activation::Relu),
        (Backbone::Res, false, Activation::Softplus),
    ]
    .into_iter()
    .flat_map(|(backbone, pi, act)| model_cases(ModelSpec::new(backbone, pi, act, 2, 6, 5), 21))
    .collect()
}

/// `L = Σ r ⊙ fuse(f, p)` against the product rule: `∂L/∂f = r ⊙ p`,
/// `∂L/∂p = Σ_batch r ⊙ f`; central differences with h = 1e-5.
pub fn fuse_case() -> (String, f64) {
    const H: f64 = 1e-5;
    let mut g = rng(40);
    let f = random_tensor(&[3, 4, 3, 3], &mut g);
    let p = random_tensor(&[4, 3, 3], &mut g);
    let r = random_tensor(&[3, 4, 3, 3], &mut g);
    let loss = |f: &Tensor<f64>, p: &Tensor<f64>| -> f64 {
        fuse(f, p).unwrap().data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
    };
    let per = p.len();
    let grad_f: Vec<f64> = (0..f.len()).map(|i| r.data()[i] * p.data()[i % per]).collect();
    let grad_p: Vec<f64> = (0..per)
        .map(|k| (0..3).map(|b| r.data()[b * per + k] * f.data()[b * per + k]).sum())
        .collect();
    let central = |t: &Tensor<f64>, i: usize, other: &Tensor<f64>, first: bool| {
        let (mut plus, mut minus) = (t.clone(), t.clone());
        plus.data_mut()[i] += H;
        minus.data_mut()[i] -= H;
        let (lp, lm) = if first {
            (loss(&plus, other), loss(&minus, other))
        } else {
            (loss(other, &plus), loss(other, &minus))
        };
        (lp - lm) / (2.0 * H)
    };
    let fd_f: Vec<f64> = (0..f.len()).map(|i| central(&f, i, &p, true)).collect();
    let fd_p: Vec<f64> = (0..per).map(|i| central(&p, i, &f, false)).collect();
    let err = gradient_error(&grad_f, &fd_f).max(gradient_error(&grad_p, &fd_p));
    ("fuse".to_string(), err)
}
