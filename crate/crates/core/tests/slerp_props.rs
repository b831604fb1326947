use frontal_core::slerp::{
    arc_angle, interpolation_path, lerp, median_pair, path_parameters, schedule_count, slerp, LatentEmbedding,
};
use frontal_core::Error;
use proptest::prelude::*;

fn vector(dim: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    dim.prop_flat_map(|d| proptest::collection::vec(-1.0f64..1.0, d))
}

/// Two same-dimension vectors that are well away from zero and from antipodal.
fn pair() -> impl Strategy<Value = (LatentEmbedding, LatentEmbedding)> {
    (2usize..24)
        .prop_flat_map(|d| (proptest::collection::vec(-1.0f64..1.0, d), proptest::collection::vec(-1.0f64..1.0, d)))
        .prop_filter("non-degenerate pair", |(a, b)| {
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            let cos = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
            na > 1e-2 && nb > 1e-2 && cos > -0.999
        })
        .prop_map(|(a, b)| (LatentEmbedding::new(a).unwrap(), LatentEmbedding::new(b).unwrap()))
}

fn unit(z: &LatentEmbedding) -> LatentEmbedding {
    let n = z.norm();
    LatentEmbedding::new(z.values().iter().map(|v| v / n).collect()).unwrap()
}

fn max_diff(a: &LatentEmbedding, b: &LatentEmbedding) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn endpoints_are_bit_exact((z0, z1) in pair()) {
        prop_assert_eq!(slerp(&z0, &z1, 0.0).unwrap(), z0.clone());
        prop_assert_eq!(slerp(&z0, &z1, 1.0).unwrap(), z1);
    }

    #[test]
    fn unit_inputs_stay_on_the_sphere((z0, z1) in pair(), t in 0.0f64..=1.0) {
        let s = slerp(&unit(&z0), &unit(&z1), t).unwrap();
        prop_assert!((s.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn reversing_the_arc((z0, z1) in pair(), t in 0.0f64..=1.0) {
        let a = slerp(&z0, &z1, t).unwrap();
        let b = slerp(&z1, &z0, 1.0 - t).unwrap();
        prop_assert!(max_diff(&a, &b) < 1e-12);
    }

    #[test]
    fn angle_is_linear_in_t((z0, z1) in pair(), t in 0.0f64..=1.0) {
        let (u0, u1) = (unit(&z0), unit(&z1));
        let omega = arc_angle(&u0, &u1).unwrap();
        let s = slerp(&u0, &u1, t).unwrap();
        prop_assert!((arc_angle(&u0, &s).unwrap() - t * omega).abs() < 1e-6);
    }

    #[test]
    fn parallel_inputs_fall_back_to_lerp(v in vector(2..10), scale in 0.5f64..2.0, t in 0.0f64..=1.0) {
        prop_assume!(v.iter().map(|x| x * x).sum::<f64>() > 1e-4);
        let z0 = LatentEmbedding::new(v.clone()).unwrap();
        let z1 = LatentEmbedding::new(v.iter().map(|x| x * scale).collect()).unwrap();
        prop_assert!(max_diff(&slerp(&z0, &z1, t).unwrap(), &lerp(&z0, &z1, t).unwrap()) < 1e-12);
    }

    #[test]
    fn antipodal_is_a_domain_error(v in vector(2..10)) {
        prop_assume!(v.iter().map(|x| x * x).sum::<f64>() > 1e-4);
        let z0 = LatentEmbedding::new(v.clone()).unwrap();
        let z1 = LatentEmbedding::new(v.iter().map(|x| -x).collect()).unwrap();
        prop_assert!(matches!(slerp(&z0, &z1, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn path_matches_pointwise_slerp((z0, z1) in pair(), n in 2usize..16) {
        let path = interpolation_path(&z0, &z1, n).unwrap();
        let ts = path_parameters(n).unwrap();
        prop_assert_eq!(path.len(), n);
        prop_assert_eq!(&path[0], &z0);
        prop_assert_eq!(&path[n - 1], &z1);
        for (p, t) in path.iter().zip(ts) {
            prop_assert_eq!(p, &slerp(&z0, &z1, t).unwrap());
        }
    }

    #[test]
    fn median_pair_is_centred(n in 2usize..40) {
        let items: Vec<usize> = (0..n).collect();
        let m = median_pair(&items).unwrap();
        if n % 2 == 0 {
            prop_assert_eq!(m.indices, (n / 2 - 1, n / 2));
            prop_assert!(!m.degenerate);
        } else {
            prop_assert_eq!(m.indices, (n / 2, n / 2));
            prop_assert!(m.degenerate);
        }
        prop_assert_eq!(m.indices.0 + m.indices.1, n - 1);
    }

    #[test]
    fn schedule_count_of_exact_ratios(n in 1usize..200) {
        prop_assert_eq!(schedule_count(1.0, 0.0, 1.0 / n as f64).unwrap(), n);
    }
}

#[test]
#[allow(clippy::approx_constant)]
fn hand_values() {
    let e = |v: &[f64]| LatentEmbedding::new(v.to_vec()).unwrap();
    let mid = slerp(&e(&[1.0, 0.0]), &e(&[0.0, 1.0]), 0.5).unwrap();
    assert!((mid.values()[0] - 0.70711).abs() < 1e-5 && (mid.values()[1] - 0.70711).abs() < 1e-5);
    assert_eq!(schedule_count(1.0, 0.0, 0.1).unwrap(), 10);
    assert_eq!(frontal_core::slerp::angle_step(50.0, -50.0, 10).unwrap(), 10.0);
}
