//! Every differentiable operation is compared against central finite
//! differences in double precision.

use noisesim_autodiff::{ConvParams, Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-6;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Norm-wise relative error between the tape gradient and central
/// differences, for every input.
fn check<F>(inputs: &[Tensor<f64>], f: F) -> f64
where
    F: for<'g> Fn(&[Var<'g, f64>]) -> Var<'g, f64>,
{
    let g = Graph::new();
    let vars: Vec<_> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let loss = f(&vars);
    let grads = g.backward(loss);
    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.get(&vars[i]).cloned().unwrap_or_else(|| Tensor::zeros(input.shape()));
        let mut numeric = vec![0.0; input.numel()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let eval = |delta: f64| {
                let g = Graph::new();
                let vars: Vec<_> = inputs
                    .iter()
                    .enumerate()
                    .map(|(k, t)| {
                        let mut t = t.clone();
                        if k == i {
                            t.data_mut()[j] += delta;
                        }
                        g.constant(t)
                    })
                    .collect();
                f(&vars).item()
            };
            *slot = (eval(STEP) - eval(-STEP)) / (2.0 * STEP);
        }
        let diff: f64 = analytic
            .data()
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = analytic.data().iter().map(|a| a * a).sum::<f64>().sqrt()
            .max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt())
            .max(1e-12);
        worst = worst.max(diff / scale);
    }
    worst
}

/// Weighted sum so that every output element gets a distinct cotangent.
fn project<'g>(y: Var<'g, f64>) -> Var<'g, f64> {
    let shape = y.shape();
    let w = Tensor::from_fn(&shape, |i| ((i as f64) * 0.731).sin() + 0.1);
    y.mul_const(&w).unwrap().sum_all()
}

#[test]
fn elementwise_ops_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&mut rng, &[3, 4]);
    let b = random(&mut rng, &[3, 4]).map(|v| v + 2.5);
    let pos = a.map(|v| v.abs() + 0.3);
    let cases: Vec<(&str, Box<dyn for<'g> Fn(&[Var<'g, f64>]) -> Var<'g, f64>>)> = vec![
        ("add", Box::new(|v| project(v[0].add(&v[1]).unwrap()))),
        ("sub", Box::new(|v| project(v[0].sub(&v[1]).unwrap()))),
        ("mul", Box::new(|v| project(v[0].mul(&v[1]).unwrap()))),
        ("div", Box::new(|v| project(v[0].div(&v[1]).unwrap()))),
        ("relu", Box::new(|v| project(v[0].relu()))),
        ("leaky", Box::new(|v| project(v[0].leaky_relu(0.2)))),
        ("sigmoid", Box::new(|v| project(v[0].sigmoid()))),
        ("tanh", Box::new(|v| project(v[0].tanh()))),
        ("exp", Box::new(|v| project(v[0].exp()))),
        ("abs", Box::new(|v| project(v[0].abs()))),
        ("square", Box::new(|v| project(v[0].square()))),
        ("scale", Box::new(|v| project(v[0].scale(-1.7).add_scalar(0.3)))),
        ("mean", Box::new(|v| v[0].square().mean_all())),
    ];
    for (name, f) in &cases {
        let err = check(&[a.clone(), b.clone()], f);
        assert!(err < TOL, "{name}: {err}");
    }
    let err = check(&[pos.clone()], |v| project(v[0].ln()));
    assert!(err < TOL, "ln: {err}");
    let err = check(&[pos.clone()], |v| project(v[0].sqrt()));
    assert!(err < TOL, "sqrt: {err}");
    let err = check(&[pos], |v| project(v[0].ln_floor(1e-7)));
    assert!(err < TOL, "ln_floor: {err}");
}

#[test]
fn matrix_ops_match_finite_differences() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&mut rng, &[3, 5]);
        let b = random(&mut rng, &[5, 4]);
        let bt = random(&mut rng, &[4, 5]);
        let bias = random(&mut rng, &[4]);
        assert!(check(&[a.clone(), b], |v| project(v[0].matmul(&v[1]).unwrap())) < TOL);
        assert!(
            check(&[a.clone(), bt, bias], |v| project(v[0].linear(&v[1], Some(&v[2])).unwrap()))
                < TOL
        );
        assert!(check(&[a.clone()], |v| project(v[0].log_softmax_rows().unwrap())) < TOL);
        assert!(check(&[a.clone()], |v| project(v[0].l2_normalize_rows(1e-12).unwrap())) < TOL);
        assert!(
            check(&[a.clone()], |v| {
                v[0].log_softmax_rows().unwrap().select_per_row(&[4, 0, 2]).unwrap().sum_all()
            }) < TOL
        );
        assert!(check(&[a.clone()], |v| project(v[0].gather_cols(&[0, 0, 4, 1, 2, 3], 2).unwrap())) < TOL);
        let c = random(&mut rng, &[2, 5]);
        assert!(check(&[a.clone(), c], |v| project(v[0].concat_rows(&v[1]).unwrap())) < TOL);
        assert!(check(&[a], |v| project(v[0].frames(4, 3, 5).unwrap())) < TOL);
    }
}

#[test]
fn spatial_ops_match_finite_differences() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = random(&mut rng, &[2, 3, 5, 6]);
        let s = random(&mut rng, &[2, 3]);
        let b = random(&mut rng, &[2, 3]);
        assert!(check(&[x.clone()], |v| project(v[0].reflect_pad2d(2).unwrap())) < TOL);
        assert!(check(&[x.clone()], |v| project(v[0].pad2d((1, 0, 3, 2)).unwrap())) < TOL);
        assert!(check(&[x.clone()], |v| project(v[0].crop2d(1, 3, 2, 4).unwrap())) < TOL);
        assert!(check(&[x.clone()], |v| project(v[0].instance_norm(1e-5).unwrap())) < TOL);
        assert!(check(&[x.clone()], |v| project(v[0].mean_hw().unwrap())) < TOL);
        assert!(
            check(&[x.clone(), s, b], |v| project(v[0].channel_affine(&v[1], &v[2]).unwrap()))
                < TOL
        );
        assert!(
            check(&[x.clone()], |v| project(v[0].gather_positions(1, &[0, 7, 7, 29]).unwrap())) < TOL
        );
        assert!(check(&[x.clone()], |v| project(v[0].narrow_batch(1, 1).unwrap())) < TOL);
        let y = random(&mut rng, &[1, 3, 5, 6]);
        assert!(check(&[x, y], |v| project(Var::concat_batch(&[v[1], v[0], v[1]]).unwrap())) < TOL);
    }
}

#[test]
fn convolutions_match_finite_differences() {
    let configs = [
        (ConvParams::new(1, 1), (0, 0)),
        (ConvParams::new(2, 1), (1, 0)),
        (ConvParams { stride: (1, 2), pad: (0, 1) }, (0, 1)),
    ];
    for (seed, (p, op)) in configs.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed as u64);
        let x = random(&mut rng, &[2, 2, 7, 6]);
        let w = random(&mut rng, &[3, 2, 3, 3]);
        let b = random(&mut rng, &[3]);
        let err = check(&[x.clone(), w.clone(), b.clone()], |v| {
            project(v[0].conv2d(&v[1], Some(&v[2]), p).unwrap())
        });
        assert!(err < TOL, "conv2d {p:?}: {err}");
        let wt = random(&mut rng, &[2, 3, 3, 3]);
        let err = check(&[x, wt, b], |v| {
            project(v[0].conv_transpose2d(&v[1], Some(&v[2]), p, op).unwrap())
        });
        assert!(err < TOL, "conv_transpose2d {p:?}: {err}");
    }
}

#[test]
fn rectangular_kernels_match_finite_differences() {
    let p = ConvParams { stride: (1, 3), pad: (0, 0) };
    let mut rng = ChaCha8Rng::seed_from_u64(210);
    let x = random(&mut rng, &[2, 2, 1, 14]);
    let w = random(&mut rng, &[3, 2, 1, 5]);
    let b = random(&mut rng, &[3]);
    let err = check(&[x, w, b.clone()], |v| project(v[0].conv2d(&v[1], Some(&v[2]), p).unwrap()));
    assert!(err < TOL, "conv2d: {err}");
    let y = random(&mut rng, &[2, 2, 1, 4]);
    let wt = random(&mut rng, &[2, 3, 1, 5]);
    let err = check(&[y, wt, b], |v| {
        project(v[0].conv_transpose2d(&v[1], Some(&v[2]), p, (0, 0)).unwrap())
    });
    assert!(err < TOL, "conv_transpose2d: {err}");
}

#[test]
fn gradients_accumulate_over_reused_nodes() {
    let g = Graph::<f64>::new();
    let x = g.variable(Tensor::new(&[2], vec![1.5, -0.5]).unwrap());
    let y = x.mul(&x).unwrap().add(&x).unwrap().sum_all();
    let grads = g.backward(y);
    assert_eq!(grads.get(&x).unwrap().data(), &[4.0, 0.0]);
}

#[test]
fn constants_receive_no_gradient() {
    let g = Graph::<f64>::new();
    let c = g.constant(Tensor::ones(&[3]));
    let x = g.variable(Tensor::ones(&[3]));
    let y = c.mul(&x).unwrap().sum_all();
    let grads = g.backward(y);
    assert!(grads.get(&c).is_none());
    assert!(grads.get(&x).is_some());
}
