//! Analytic gradients against central finite differences, in f64.

mod common;

use common::*;
use pitomo_core::geometry::ContributionMatrix;
use pitomo_core::objective::{loss2, pilf, LossConfig};

const TOL: f64 = 1e-4;

fn assert_all(cases: Vec<(String, f64)>) {
    for (name, err) in cases {
        assert!(err <= TOL, "{name}: relative gradient error {err:.3e}");
    }
}

#[test]
fn conv2d() {
    assert_all(gradcheck::conv_cases());
}

#[test]
fn batch_norm() {
    assert_all(gradcheck::batch_norm_cases());
}

#[test]
fn pooling() {
    assert_all(gradcheck::pool_cases());
}

#[test]
fn dense_and_activations() {
    assert_all(gradcheck::dense_cases());
}

#[test]
fn residual_blocks() {
    assert_all(gradcheck::residual_cases());
}

#[test]
fn input_layers() {
    assert_all(gradcheck::input_cases());
}

#[test]
fn fusion_product_rule() {
    assert_all(vec![gradcheck::fuse_case()]);
}

#[test]
fn full_models_including_fusion() {
    assert_all(gradcheck::all_model_cases());
}

#[test]
fn loss2_gradient_is_adjoint_residual() {
    let mut g = rng(30);
    let c = ContributionMatrix::from_parts(4, 2, 3, random_tensor(&[24], &mut g).map(f64::abs).into_data()).unwrap();
    let pred = random_tensor(&[2, 6], &mut g).into_data();
    let x = random_tensor(&[2, 4], &mut g).into_data();
    let l = loss2(&pred, &x, &c).unwrap();
    // 2/N₂ · Cᵀ(C·pred − x) per sample, with N₂ = batch · n
    for b in 0..2 {
        let p = &pred[b * 6..b * 6 + 6];
        let resid: Vec<f64> = c
            .rows()
            .zip(&x[b * 4..b * 4 + 4])
            .map(|(row, xi)| row.iter().zip(p).map(|(w, v)| w * v).sum::<f64>() - xi)
            .collect();
        for cell in 0..6 {
            let expect: f64 = (0..4).map(|i| c.row(i)[cell] * resid[i]).sum::<f64>() * 2.0 / 8.0;
            assert!((l.grad[b * 6 + cell] - expect).abs() < 1e-14);
        }
    }
    let fd: Vec<f64> = (0..pred.len())
        .map(|i| {
            let mut p = pred.clone();
            p[i] += 1e-6;
            let fp = loss2(&p, &x, &c).unwrap().value;
            p[i] -= 2e-6;
            let fm = loss2(&p, &x, &c).unwrap().value;
            (fp - fm) / 2e-6
        })
        .collect();
    assert!(max_rel_diff(&l.grad, &fd) <= TOL);
}

#[test]
fn undetached_pilf_matches_finite_differences() {
    let mut g = rng(31);
    let c = ContributionMatrix::from_parts(3, 2, 2, random_tensor(&[12], &mut g).map(f64::abs).into_data()).unwrap();
    let pred = random_tensor(&[2, 4], &mut g).into_data();
    let label = random_tensor(&[2, 4], &mut g).into_data();
    let x = random_tensor(&[2, 3], &mut g).into_data();
    let cfg = LossConfig { c1: 0.618, lambda: 0.0, detach_weight: false };
    let terms = pilf(&pred, &label, &x, &c, 0.0, &cfg).unwrap();
    let fd: Vec<f64> = (0..pred.len())
        .map(|i| {
            let mut p = pred.clone();
            p[i] += 1e-6;
            let fp = pilf(&p, &label, &x, &c, 0.0, &cfg).unwrap().total;
            p[i] -= 2e-6;
            let fm = pilf(&p, &label, &x, &c, 0.0, &cfg).unwrap().total;
            (fp - fm) / 2e-6
        })
        .collect();
    assert!(max_rel_diff(&terms.grad, &fd) <= TOL);
}
