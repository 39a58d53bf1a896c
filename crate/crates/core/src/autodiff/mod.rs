//! Reverse-mode automatic differentiation over small dense tensors.
//!
//! The engine records exactly what the generator and its losses need:
//! strided 1D convolution, nearest-neighbour upsampling, leaky ReLU, fixed
//! linear maps (measurement operators), squared error, total variation and
//! a few scalar combinators. Everything is `f64`.

pub(crate) mod kernels;
mod tape;
mod tensor;

pub use tape::{squared_error, total_variation, Gradients, LinearMap, NodeId, Tape};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn randn(rng: &mut crate::rng::Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn rel_err(analytic: f64, numeric: f64) -> f64 {
        (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
    }

    /// Central difference of `f` along coordinate `i` of `x`.
    fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[i] += h;
        minus[i] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    }

    fn signal(tape: &mut Tape, c: usize, l: usize, v: Vec<f64>) -> NodeId {
        tape.leaf(Tensor::signal(c, l, v).unwrap())
    }

    fn conv_value(x: &[f64], cin: usize, w: &[f64], cout: usize, k: usize, pad: usize) -> Vec<f64> {
        let mut tape = Tape::new();
        let xi = signal(&mut tape, cin, x.len() / cin, x.to_vec());
        let wi = tape.leaf(Tensor::new(w.to_vec(), vec![cout, cin, k]).unwrap());
        let bi = tape.leaf(Tensor::zeros(&[cout]));
        let y = tape.conv1d(xi, wi, bi, 1, pad).unwrap();
        tape.value(y).values().to_vec()
    }

    #[test]
    fn conv1d_identity_kernel() {
        let out = conv_value(&[1.0, 2.0, 3.0], 1, &[1.0], 1, 1, 0);
        assert_eq!(out, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn conv1d_box_filter_with_zero_padding() {
        let out = conv_value(&[1.0, 1.0, 1.0], 1, &[1.0, 1.0, 1.0], 1, 3, 1);
        assert_eq!(out, vec![2.0, 3.0, 2.0]);
    }

    #[test]
    fn conv1d_rejects_channel_mismatch() {
        let mut tape = Tape::new();
        let x = signal(&mut tape, 2, 4, vec![0.0; 8]);
        let w = tape.leaf(Tensor::zeros(&[1, 3, 1]));
        let b = tape.leaf(Tensor::zeros(&[1]));
        assert!(matches!(
            tape.conv1d(x, w, b, 1, 0),
            Err(crate::Error::Shape(_))
        ));
        let w = tape.leaf(Tensor::zeros(&[1, 2, 7]));
        assert!(tape.conv1d(x, w, b, 1, 1).is_err());
    }

    #[test]
    fn conv1d_strided_output_length() {
        let mut tape = Tape::new();
        let x = signal(&mut tape, 1, 10, vec![1.0; 10]);
        let w = tape.leaf(Tensor::new(vec![1.0; 3], vec![1, 1, 3]).unwrap());
        let b = tape.leaf(Tensor::zeros(&[1]));
        let y = tape.conv1d(x, w, b, 2, 1).unwrap();
        // floor((10 + 2 - 3) / 2) + 1
        assert_eq!(tape.value(y).shape(), &[1, 5]);
    }

    #[test]
    fn conv1d_gradients_match_finite_differences() {
        let mut rng = seeded(11);
        let (cin, cout, k, l) = (2, 4, 3, 16);
        let x = randn(&mut rng, cin * l);
        let w = randn(&mut rng, cout * cin * k);
        let b = randn(&mut rng, cout);
        let target = randn(&mut rng, cout * l);

        // loss = |y - target|^2 + sum(y)
        let loss = |x: &[f64], w: &[f64], b: &[f64]| -> (f64, Vec<Vec<f64>>) {
            let mut tape = Tape::new();
            let xi = signal(&mut tape, cin, l, x.to_vec());
            let wi = tape.leaf(Tensor::new(w.to_vec(), vec![cout, cin, k]).unwrap());
            let bi = tape.leaf(Tensor::new(b.to_vec(), vec![cout]).unwrap());
            let y = tape.conv1d(xi, wi, bi, 1, 1).unwrap();
            let sq = tape.mse_loss(y, &target).unwrap();
            let total = tape.sum(y).unwrap();
            let out = tape.add(sq, total).unwrap();
            let v = tape.value(out).values()[0];
            let g = tape.backward(out).unwrap();
            (
                v,
                vec![
                    g.get(xi).unwrap().values().to_vec(),
                    g.get(wi).unwrap().values().to_vec(),
                    g.get(bi).unwrap().values().to_vec(),
                ],
            )
        };
        let (_, grads) = loss(&x, &w, &b);
        let h = 1e-5;
        let fw = |wv: &[f64]| loss(&x, wv, &b).0;
        for i in 0..w.len() {
            let num = central_diff(&fw, &w, i, h);
            assert!(
                rel_err(grads[1][i], num) < 1e-4,
                "w[{i}]: {} vs {num}",
                grads[1][i]
            );
        }
        let fx = |xv: &[f64]| loss(xv, &w, &b).0;
        for i in 0..x.len() {
            let num = central_diff(&fx, &x, i, h);
            assert!(rel_err(grads[0][i], num) < 1e-4, "x[{i}]");
        }
        let fb = |bv: &[f64]| loss(&x, &w, bv).0;
        for i in 0..b.len() {
            let num = central_diff(&fb, &b, i, h);
            assert!(rel_err(grads[2][i], num) < 1e-4, "b[{i}]");
        }
    }

    #[test]
    fn upsample_values_and_errors() {
        let mut tape = Tape::new();
        let x = signal(&mut tape, 1, 2, vec![1.0, 2.0]);
        let y = tape.upsample_nearest(x, 2).unwrap();
        assert_eq!(tape.value(y).values(), &[1.0, 1.0, 2.0, 2.0]);
        let same = tape.upsample_nearest(x, 1).unwrap();
        assert_eq!(tape.value(same), tape.value(x));
        assert!(tape.upsample_nearest(x, 0).is_err());
    }

    #[test]
    fn upsample_gradient_of_sum_is_factor() {
        let x = randn(&mut seeded(3), 6);
        let f = |v: &[f64]| {
            let mut tape = Tape::new();
            let xi = signal(&mut tape, 2, 3, v.to_vec());
            let y = tape.upsample_nearest(xi, 3).unwrap();
            let s = tape.sum(y).unwrap();
            let g = tape.backward(s).unwrap();
            (
                tape.value(s).values()[0],
                g.get(xi).unwrap().values().to_vec(),
            )
        };
        let (_, grad) = f(&x);
        for i in 0..x.len() {
            let num = central_diff(&|v| f(v).0, &x, i, 1e-5);
            assert!((num - 3.0).abs() < 1e-8);
            assert_eq!(grad[i], 3.0);
        }
    }

    #[test]
    fn leaky_relu_values() {
        let mut tape = Tape::new();
        let x = signal(&mut tape, 1, 3, vec![-1.0, 0.0, 2.0]);
        let y = tape.leaky_relu(x, 0.1).unwrap();
        assert_eq!(tape.value(y).values(), &[-0.1, 0.0, 2.0]);
        let id = tape.leaky_relu(x, 1.0).unwrap();
        assert_eq!(tape.value(id), tape.value(x));
    }

    #[test]
    fn leaky_relu_gradient_matches_finite_differences() {
        let mut rng = seeded(5);
        let x: Vec<f64> = randn(&mut rng, 40)
            .into_iter()
            .filter(|v| v.abs() > 1e-3)
            .collect();
        let n = x.len();
        let f = |v: &[f64]| {
            let mut tape = Tape::new();
            let xi = signal(&mut tape, 1, n, v.to_vec());
            let y = tape.leaky_relu(xi, 0.2).unwrap();
            let l = tape.mse_loss(y, &vec![0.5; n]).unwrap();
            let g = tape.backward(l).unwrap();
            (
                tape.value(l).values()[0],
                g.get(xi).unwrap().values().to_vec(),
            )
        };
        let (_, grad) = f(&x);
        for i in 0..n {
            let num = central_diff(&|v| f(v).0, &x, i, 1e-5);
            assert!(rel_err(grad[i], num) < 1e-4);
        }
        // subgradient at exactly zero takes the identity branch
        let (_, g0) = {
            let mut tape = Tape::new();
            let xi = signal(&mut tape, 1, 1, vec![0.0]);
            let y = tape.leaky_relu(xi, 0.2).unwrap();
            let s = tape.sum(y).unwrap();
            let g = tape.backward(s).unwrap();
            ((), g.get(xi).unwrap().values()[0])
        };
        assert_eq!(g0, 1.0);
    }

    #[test]
    fn mse_loss_values_and_errors() {
        let mut tape = Tape::new();
        let p = signal(&mut tape, 1, 2, vec![1.0, 0.0]);
        let l = tape.mse_loss(p, &[0.0, 0.0]).unwrap();
        assert_eq!(tape.value(l).values()[0], 1.0);
        let z = tape.mse_loss(p, &[1.0, 0.0]).unwrap();
        assert_eq!(tape.value(z).values()[0], 0.0);
        assert!(tape.mse_loss(p, &[0.0]).is_err());
    }

    #[test]
    fn mse_loss_gradient_matches_finite_differences() {
        let mut rng = seeded(9);
        let p = randn(&mut rng, 32);
        let t = randn(&mut rng, 32);
        let f = |v: &[f64]| {
            let mut tape = Tape::new();
            let pi = signal(&mut tape, 1, 32, v.to_vec());
            let l = tape.mse_loss(pi, &t).unwrap();
            let g = tape.backward(l).unwrap();
            (
                tape.value(l).values()[0],
                g.get(pi).unwrap().values().to_vec(),
            )
        };
        let (_, grad) = f(&p);
        for i in 0..32 {
            let num = central_diff(&|v| f(v).0, &p, i, 1e-5);
            assert!(rel_err(grad[i], num) < 1e-6, "{} vs {num}", grad[i]);
            assert!((grad[i] - 2.0 * (p[i] - t[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn tv_loss_values_and_errors() {
        let mut tape = Tape::new();
        let c = signal(&mut tape, 1, 5, vec![3.0; 5]);
        let l = tape.tv_loss(c).unwrap();
        assert_eq!(tape.value(l).values()[0], 0.0);
        let b = signal(&mut tape, 1, 3, vec![0.0, 1.0, 0.0]);
        let l = tape.tv_loss(b).unwrap();
        assert_eq!(tape.value(l).values()[0], 2.0);
        let one = signal(&mut tape, 1, 1, vec![1.0]);
        assert!(tape.tv_loss(one).is_err());
    }

    #[test]
    fn tv_loss_gradient_matches_finite_differences() {
        let x = randn(&mut seeded(21), 64);
        let f = |v: &[f64]| {
            let mut tape = Tape::new();
            let xi = signal(&mut tape, 1, 64, v.to_vec());
            let l = tape.tv_loss(xi).unwrap();
            let g = tape.backward(l).unwrap();
            (
                tape.value(l).values()[0],
                g.get(xi).unwrap().values().to_vec(),
            )
        };
        let (_, grad) = f(&x);
        let near_kink = |i: usize| {
            (i > 0 && (x[i] - x[i - 1]).abs() < 1e-6)
                || (i + 1 < 64 && (x[i + 1] - x[i]).abs() < 1e-6)
        };
        let mut checked = 0;
        for i in (0..64).filter(|&i| !near_kink(i)) {
            let num = central_diff(&|v| f(v).0, &x, i, 1e-5);
            assert!(rel_err(grad[i], num) < 1e-4 || (grad[i] == 0.0 && num.abs() < 1e-8));
            checked += 1;
        }
        assert!(checked > 50);
    }

    #[test]
    fn backward_on_a_constant() {
        let mut tape = Tape::new();
        let c = tape.leaf(Tensor::scalar(4.0));
        let g = tape.backward(c).unwrap();
        assert_eq!(g.get(c).unwrap().values(), &[1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = signal(&mut tape, 1, 3, vec![1.0, 2.0, 3.0]);
        assert!(matches!(tape.backward(x), Err(crate::Error::Shape(_))));
    }

    #[test]
    fn composed_conv_relu_mse_graph() {
        let mut rng = seeded(77);
        let (cin, cout, k, l) = (3, 5, 3, 12);
        let x = randn(&mut rng, cin * l);
        let params = randn(&mut rng, cout * cin * k + cout);
        let target = randn(&mut rng, cout * l);
        let f = |p: &[f64]| {
            let mut tape = Tape::new();
            let xi = signal(&mut tape, cin, l, x.clone());
            let wi =
                tape.leaf(Tensor::new(p[..cout * cin * k].to_vec(), vec![cout, cin, k]).unwrap());
            let bi = tape.leaf(Tensor::new(p[cout * cin * k..].to_vec(), vec![cout]).unwrap());
            let y = tape.conv1d(xi, wi, bi, 1, 1).unwrap();
            let a = tape.leaky_relu(y, 0.2).unwrap();
            let loss = tape.mse_loss(a, &target).unwrap();
            let g = tape.backward(loss).unwrap();
            let mut grad = g.get(wi).unwrap().values().to_vec();
            grad.extend_from_slice(g.get(bi).unwrap().values());
            // keep only coordinates whose pre-activations sit away from 0
            let pre = tape.value(y).values().to_vec();
            (tape.value(loss).values()[0], grad, pre)
        };
        let (_, grad, pre) = f(&params);
        assert!(
            pre.iter().all(|v| v.abs() > 1e-3),
            "rerun with another seed"
        );
        for i in 0..params.len() {
            let num = central_diff(&|p| f(p).0, &params, i, 1e-5);
            assert!(
                rel_err(grad[i], num) < 1e-4,
                "param {i}: {} vs {num}",
                grad[i]
            );
        }
    }

    #[test]
    fn gradients_accumulate_over_two_consumers() {
        let x = randn(&mut seeded(2), 8);
        // f(x) = |x|^2 + 3·tv(x), both branches read the same node
        let f = |v: &[f64]| {
            let mut tape = Tape::new();
            let xi = signal(&mut tape, 1, 8, v.to_vec());
            let a = tape.mse_loss(xi, &[0.0; 8]).unwrap();
            let t = tape.tv_loss(xi).unwrap();
            let t3 = tape.scale(t, 3.0).unwrap();
            let l = tape.add(a, t3).unwrap();
            let g = tape.backward(l).unwrap();
            (
                tape.value(l).values()[0],
                g.get(xi).unwrap().values().to_vec(),
            )
        };
        let (_, grad) = f(&x);
        for i in 0..8 {
            let num = central_diff(&|v| f(v).0, &x, i, 1e-5);
            assert!(rel_err(grad[i], num) < 1e-4);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = seeded(4);
        let x = randn(&mut rng, 4 * 33);
        let w = randn(&mut rng, 6 * 4 * 3);
        assert_eq!(
            conv_value(&x, 4, &w, 6, 3, 1),
            conv_value(&x, 4, &w, 6, 3, 1)
        );
    }

    proptest! {
        #[test]
        fn tv_is_absolutely_homogeneous_and_shift_invariant(
            x in prop::collection::vec(-10.0f64..10.0, 2..40),
            a in -5.0f64..5.0,
            c in -5.0f64..5.0,
        ) {
            let base = total_variation(&x).unwrap();
            let scaled: Vec<f64> = x.iter().map(|v| a * v).collect();
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            prop_assert!((total_variation(&scaled).unwrap() - a.abs() * base).abs() < 1e-9 * (1.0 + base));
            prop_assert!((total_variation(&shifted).unwrap() - base).abs() < 1e-9 * (1.0 + base));
        }

        #[test]
        fn squared_error_is_a_symmetric_nonnegative_distance(
            pair in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..40),
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pair.into_iter().unzip();
            let d = squared_error(&x, &y).unwrap();
            prop_assert_eq!(d, squared_error(&y, &x).unwrap());
            prop_assert!(d >= 0.0);
            prop_assert_eq!(d == 0.0, x == y);
            prop_assert_eq!(squared_error(&x, &x).unwrap(), 0.0);
        }
    }
}
