use frontal_core::autodiff::{conv_extent, deconv_extent, grad_check, Tape};
use frontal_core::rng::seeded_uniform;
use frontal_core::Tensor;
use proptest::prelude::*;

/// Geometry where a convolution over `big` exactly tiles, giving `small`.
#[derive(Debug, Clone, Copy)]
struct Geo {
    big: usize,
    small: usize,
    k: usize,
    stride: usize,
    pad: usize,
}

fn geometry() -> impl Strategy<Value = Geo> {
    (1usize..=8, 1usize..=4, 1usize..=2, 0usize..=2).prop_filter_map("exact tiling", |(big, k, stride, pad)| {
        let small = conv_extent(big, k, stride, pad).ok()?;
        Some(Geo { big, small, k, stride, pad })
    })
}

fn inner(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

proptest! {
    #[test]
    fn transposed_extent_inverts_exact_convolution(g in geometry()) {
        prop_assert_eq!(deconv_extent(g.small, g.k, g.stride, g.pad).unwrap(), g.big);
    }

    #[test]
    fn deconvolution_is_the_adjoint_of_convolution(
        g in geometry(),
        small_c in 1usize..3,
        big_c in 1usize..3,
        seed in any::<u64>(),
    ) {
        let kernel = seeded_uniform(&[small_c, big_c, g.k, g.k], -1.0, 1.0, seed).unwrap();
        let x = seeded_uniform(&[2, big_c, g.big, g.big], -1.0, 1.0, seed ^ 1).unwrap();
        let y = seeded_uniform(&[2, small_c, g.small, g.small], -1.0, 1.0, seed ^ 2).unwrap();
        let mut tape = Tape::new();
        let (kv, xv, yv) = (tape.constant(kernel.clone()), tape.constant(x.clone()), tape.constant(y.clone()));
        let cx = tape.conv2d(xv, kv, g.stride, g.pad).unwrap();
        let dy = tape.deconv2d(yv, kv, g.stride, g.pad).unwrap();
        prop_assert_eq!(tape.value(cx).shape(), y.shape());
        prop_assert_eq!(tape.value(dy).shape(), x.shape());
        let lhs = inner(tape.value(cx), &y);
        let rhs = inner(&x, tape.value(dy));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn convolution_gradients_match_differences(g in geometry(), seed in any::<u64>()) {
        let kernel = seeded_uniform(&[2, 1, g.k, g.k], -1.0, 1.0, seed).unwrap();
        let x = seeded_uniform(&[1, 1, g.big, g.big], -1.0, 1.0, seed ^ 3).unwrap();
        let w = seeded_uniform(&[1, 2, g.small, g.small], -1.0, 1.0, seed ^ 4).unwrap();
        let by_input = grad_check(|t, xv| {
            let kv = t.constant(kernel.clone());
            let wv = t.constant(w.clone());
            let y = t.conv2d(xv, kv, g.stride, g.pad)?;
            let p = t.mul(y, wv)?;
            t.sum(p)
        }, &x, 1e-6).unwrap();
        let by_kernel = grad_check(|t, kv| {
            let xv = t.constant(x.clone());
            let wv = t.constant(w.clone());
            let y = t.conv2d(xv, kv, g.stride, g.pad)?;
            let p = t.mul(y, wv)?;
            t.sum(p)
        }, &kernel, 1e-6).unwrap();
        prop_assert!(by_input < 1e-6 && by_kernel < 1e-6);
    }

    #[test]
    fn deconvolution_gradients_match_differences(g in geometry(), seed in any::<u64>()) {
        let kernel = seeded_uniform(&[1, 2, g.k, g.k], -1.0, 1.0, seed).unwrap();
        let x = seeded_uniform(&[1, 1, g.small, g.small], -1.0, 1.0, seed ^ 5).unwrap();
        let w = seeded_uniform(&[1, 2, g.big, g.big], -1.0, 1.0, seed ^ 6).unwrap();
        let err = grad_check(|t, kv| {
            let xv = t.constant(x.clone());
            let wv = t.constant(w.clone());
            let y = t.deconv2d(xv, kv, g.stride, g.pad)?;
            let p = t.mul(y, wv)?;
            t.sum(p)
        }, &kernel, 1e-6).unwrap();
        prop_assert!(err < 1e-6);
    }

    #[test]
    fn smooth_activations_match_differences(values in proptest::collection::vec(-3.0f64..3.0, 1..12)) {
        let n = values.len();
        let x = Tensor::new(vec![1, n], values).unwrap();
        let elu = grad_check(|t, v| { let y = t.elu(v)?; let y = t.mul(y, y)?; t.sum(y) }, &x, 1e-6).unwrap();
        let tanh = grad_check(|t, v| { let y = t.tanh(v)?; let y = t.mul(y, v)?; t.sum(y) }, &x, 1e-6).unwrap();
        prop_assert!(elu < 1e-6 && tanh < 1e-6);
    }

    #[test]
    fn upsampling_then_sum_scales_by_four(values in proptest::collection::vec(-1.0f64..1.0, 4)) {
        let x = Tensor::new(vec![1, 1, 2, 2], values.clone()).unwrap();
        let mut tape = Tape::new();
        let xv = tape.param(x);
        let up = tape.upsample2x(xv).unwrap();
        prop_assert_eq!(tape.value(up).shape(), &[1, 1, 4, 4]);
        let s = tape.sum(up).unwrap();
        let total: f64 = values.iter().sum();
        prop_assert!((tape.value(s).item().unwrap() - 4.0 * total).abs() < 1e-12);
        let grads = tape.backward(s).unwrap();
        prop_assert!(grads.get(xv).unwrap().iter().all(|&g| g == 4.0));
    }
}

#[test]
fn gradients_only_cover_requested_paths() {
    let mut tape = Tape::new();
    let a = tape.param(Tensor::scalar(2.0));
    let b = tape.param(Tensor::scalar(3.0));
    let ab = tape.mul(a, b).unwrap();
    let out = tape.add(ab, a).unwrap();
    let g = tape.gradients(out, &[a]).unwrap();
    assert_eq!(g.get(a).unwrap(), &[4.0]);
    assert!(g.get(b).is_none());
    let full = tape.backward(out).unwrap();
    assert_eq!(full.get(b).unwrap(), &[2.0]);
}

#[test]
fn non_scalar_root_is_rejected() {
    let mut tape = Tape::new();
    let a = tape.param(Tensor::zeros(&[2]).unwrap());
    assert!(tape.gradients(a, &[a]).is_err());
}
