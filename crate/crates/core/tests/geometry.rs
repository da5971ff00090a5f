mod common;

use std::time::Instant;

use common::{geometry_suite, max_abs_diff, CURVATURES};
use medmam_core::manifold::{
    exp_map, geodesic_distance, log_map, mobius_add, parallel_transport, project, raw, BallPoint, Curvature,
    TangentVec, TransportMode,
};
use proptest::prelude::*;

#[test]
fn thousand_trials_per_property() {
    let start = Instant::now();
    let r = geometry_suite(1000, 7);
    let secs = start.elapsed().as_secs_f64();
    println!("{r:?} in {secs:.2}s");
    assert!(r.exp_log_round_trip < 1e-9);
    assert!(r.log_exp_round_trip < 1e-9);
    assert!(r.mobius_identity < 1e-12);
    assert!(r.mobius_inverse < 1e-12);
    assert!(r.mobius_left_cancellation < 1e-12);
    assert!(r.gyro_isometry < 1e-9);
    assert_eq!(r.projection_violations, 0);
    assert_eq!(r.paper_identity_violations, 0);
    assert!(secs < 10.0);
}

fn curvature() -> impl Strategy<Value = Curvature> {
    prop::sample::select(CURVATURES.to_vec()).prop_map(|c| Curvature::new(c).unwrap())
}

/// A point strictly inside the ball, given as a direction and a fraction of
/// the radius.
fn point(dim: usize, c: Curvature, max_frac: f64) -> impl Strategy<Value = BallPoint> {
    (prop::collection::vec(-1.0f64..1.0, dim), 0.0..max_frac).prop_map(move |(v, f)| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let coords = if n < 1e-12 { vec![0.0; v.len()] } else { v.iter().map(|x| x / n * f * c.radius()).collect() };
        BallPoint::new(coords, c).unwrap()
    })
}

fn pair(max_frac: f64) -> impl Strategy<Value = (BallPoint, BallPoint)> {
    (curvature(), 1usize..8).prop_flat_map(move |(c, d)| (point(d, c, max_frac), point(d, c, max_frac)))
}

proptest! {
    #[test]
    fn projection_lands_inside(c in curvature(), z in prop::collection::vec(-1e8f64..1e8, 1..10)) {
        let p = project(&z, c).unwrap();
        let n = p.coords().iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(n < c.radius());
    }

    #[test]
    fn projection_fixes_interior_points((x, _) in pair(0.99)) {
        let c = x.curvature();
        prop_assert_eq!(project(x.coords(), c).unwrap(), x);
    }

    #[test]
    fn distance_is_a_symmetric_nonnegative_function((x, y) in pair(0.9)) {
        let dxy = geodesic_distance(&x, &y).unwrap();
        let dyx = geodesic_distance(&y, &x).unwrap();
        prop_assert!(dxy >= 0.0);
        prop_assert!((dxy - dyx).abs() <= 1e-9 * dxy.max(1.0));
        prop_assert!(geodesic_distance(&x, &x).unwrap() < 1e-7);
    }

    #[test]
    fn log_map_length_is_the_distance((x, y) in pair(0.9)) {
        let v = log_map(&x, &y).unwrap();
        let d = geodesic_distance(&x, &y).unwrap();
        prop_assert!((v.riemannian_norm() - d).abs() <= 1e-8 * d.max(1.0));
    }

    #[test]
    fn exp_of_log_returns_the_target((x, y) in pair(0.9)) {
        let back = exp_map(&x, &log_map(&x, &y).unwrap()).unwrap();
        prop_assert!(max_abs_diff(back.coords(), y.coords()) < 1e-9);
    }

    #[test]
    fn mobius_addition_keeps_points_inside((x, y) in pair(0.999)) {
        let s = mobius_add(&x, &y).unwrap();
        let n = s.coords().iter().map(|t| t * t).sum::<f64>().sqrt();
        prop_assert!(n < x.curvature().radius());
    }

    #[test]
    fn gyro_transport_preserves_riemannian_length(
        (u, v) in pair(0.9),
        seed in any::<u64>(),
    ) {
        let w: Vec<f64> = (0..u.dim()).map(|i| ((seed >> (i % 60)) & 0xff) as f64 / 64.0 - 2.0).collect();
        let w = TangentVec::new(u.clone(), w).unwrap();
        let t = parallel_transport(&u, &v, &w, TransportMode::Gyro).unwrap();
        let (a, b) = (w.riemannian_norm(), t.riemannian_norm());
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-12));
    }

    #[test]
    fn gyro_transport_round_trips((u, v) in pair(0.9)) {
        let w = TangentVec::new(u.clone(), vec![0.3; u.dim()]).unwrap();
        let there = parallel_transport(&u, &v, &w, TransportMode::Gyro).unwrap();
        let back = parallel_transport(&v, &u, &there, TransportMode::Gyro).unwrap();
        prop_assert!(max_abs_diff(back.components(), w.components()) < 1e-9);
    }

    #[test]
    fn paper_transport_to_the_origin_is_exact((u, _) in pair(0.9)) {
        let o = BallPoint::origin(u.dim(), u.curvature());
        let w = TangentVec::new(u.clone(), (0..u.dim()).map(|i| i as f64 - 1.5).collect()).unwrap();
        let t = parallel_transport(&u, &o, &w, TransportMode::Paper).unwrap();
        prop_assert_eq!(t.components(), w.components());
    }
}

#[test]
fn paper_transport_is_not_an_isometry() {
    let c = Curvature::new(1.0).unwrap();
    let u = BallPoint::new(vec![0.2, 0.1], c).unwrap();
    let v = BallPoint::new(vec![-0.5, 0.3], c).unwrap();
    let w = TangentVec::new(u.clone(), vec![1.0, -1.0]).unwrap();
    let t = parallel_transport(&u, &v, &w, TransportMode::Paper).unwrap();
    assert!((t.riemannian_norm() - w.riemannian_norm()).abs() > 1e-3);
}

#[test]
fn contract_errors_for_mismatched_inputs() {
    let c = Curvature::new(0.1).unwrap();
    assert!(BallPoint::new(vec![10.0, 0.0], c).is_err());
    assert!(BallPoint::new(vec![f64::NAN], c).is_err());
    let x = BallPoint::new(vec![0.1, 0.2], c).unwrap();
    let y = BallPoint::new(vec![0.1, 0.2, 0.3], c).unwrap();
    assert!(mobius_add(&x, &y).is_err());
    let other = BallPoint::new(vec![0.1, 0.2], Curvature::new(1.0).unwrap()).unwrap();
    assert!(log_map(&x, &other).is_err());
    let z = BallPoint::new(vec![0.0, 0.2], c).unwrap();
    let v = TangentVec::new(z, vec![1.0, 0.0]).unwrap();
    assert!(exp_map(&x, &v).is_err());
    assert!(Curvature::new(0.0).is_err());
    assert!(Curvature::new(-1.0).is_err());
}

#[test]
fn hand_checked_values() {
    // At c = 1 the distance from the origin to (r, 0) is 2 artanh(r).
    let c = Curvature::new(1.0).unwrap();
    let o = BallPoint::origin(2, c);
    let x = BallPoint::new(vec![0.5, 0.0], c).unwrap();
    let d = geodesic_distance(&o, &x).unwrap();
    assert!((d - 2.0 * 0.5f64.atanh()).abs() < 1e-14);
    // 0.5 (+) 0.5 on a line is (0.5 + 0.5) / (1 + 0.25) = 0.8.
    let s = raw::mobius_add(&[0.5], &[0.5], 1.0);
    assert!((s[0] - 0.8).abs() < 1e-15);
    // Conformal factor at the origin is 2.
    assert_eq!(o.conformal_factor(), 2.0);
}
