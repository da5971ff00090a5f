//! Straight-line reimplementations of the forward passes, written against
//! the formulas rather than the library's layer helpers, plus hand-composed
//! geometry values.

mod common;

use common::{gauss, max_abs_diff, rng};
use medmam_core::diffcore::Param;
use medmam_core::manifold::{Curvature, TransportMode};
use medmam_core::medmam::{
    cross_space_compress, embedded_difference, euclid_fuse, manifold_diff, medmam_forward, medmam_forward_batch,
    FeatureBundle, MedMamParams,
};
use medmam_core::semantics::{itm_loss, sample_negatives, ItmHead};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matvec(w: &Param, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = (w.value.shape()[0], w.value.shape()[1]);
    assert_eq!(cols, x.len());
    let a = w.value.data();
    let mut y = vec![0.0; rows];
    for i in 0..rows {
        let mut s = 0.0;
        for j in 0..cols {
            s += a[i * cols + j] * x[j];
        }
        y[i] = s;
    }
    y
}

fn plus(mut a: Vec<f64>, b: &Param) -> Vec<f64> {
    for (x, y) in a.iter_mut().zip(b.value.data()) {
        *x += y;
    }
    a
}

fn relu(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| if x > 0.0 { x } else { 0.0 }).collect()
}

fn layer_norm(v: &[f64], gamma: &Param, beta: &Param) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let s = var.max(1e-5).sqrt();
    let (g, b) = (gamma.value.data(), beta.value.data());
    (0..v.len()).map(|i| (v[i] - mean) / s * g[i] + b[i]).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn euclid(f1: &[f64], f2: &[f64], p: &MedMamParams) -> (Vec<f64>, f64) {
    let de: Vec<f64> = (0..f1.len()).map(|i| f2[i] - f1[i]).collect();
    let mut x = f1.to_vec();
    x.extend_from_slice(f2);
    x.extend_from_slice(&de);
    let ctx = layer_norm(&relu(matvec(&p.w_c, &x)), &p.ln_c_gamma, &p.ln_c_beta);
    let logit = matvec(&p.w_a, &x)[0] + p.b_1.value.data()[0];
    let alpha = 1.0 / (1.0 + (-logit).exp());
    let fe = (0..de.len()).map(|i| alpha * ctx[i] + (1.0 - alpha) * de[i]).collect();
    (fe, alpha)
}

fn compress(a: &[f64], b: &[f64], p: &MedMamParams) -> Vec<f64> {
    let mut x = a.to_vec();
    x.extend_from_slice(b);
    let z = layer_norm(&relu(plus(matvec(&p.w_1, &x), &p.b_2)), &p.ln_z_gamma, &p.ln_z_beta);
    plus(matvec(&p.w_2, &z), &p.b_3)
}

fn mobius(x: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let (xy, xx, yy) = (dot(x, y), dot(x, x), dot(y, y));
    let a = 1.0 + 2.0 * c * xy + c * yy;
    let b = 1.0 - c * xx;
    let den = 1.0 + 2.0 * c * xy + c * c * xx * yy;
    (0..x.len()).map(|i| (a * x[i] + b * y[i]) / den).collect()
}

fn lambda(x: &[f64], c: f64) -> f64 {
    2.0 / (1.0 - c * dot(x, x))
}

fn project(z: &[f64], c: f64) -> Vec<f64> {
    let r = 1.0 / c.sqrt();
    let n = dot(z, z).sqrt();
    let y: Vec<f64> = if n <= r { z.to_vec() } else { z.iter().map(|t| t / n).collect() };
    let m = dot(&y, &y).sqrt();
    if m >= r {
        y.iter().map(|t| t / m * (1.0 - 1e-5) * r).collect()
    } else {
        y
    }
}

fn log_map(x: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let nx: Vec<f64> = x.iter().map(|t| -t).collect();
    let m = mobius(&nx, y, c);
    let nm = dot(&m, &m).sqrt();
    if nm == 0.0 {
        return vec![0.0; x.len()];
    }
    let k = 2.0 / (c.sqrt() * lambda(x, c)) * (c.sqrt() * nm).atanh() / nm;
    m.iter().map(|t| k * t).collect()
}

fn transport(u: &[f64], v: &[f64], w: &[f64], c: f64, mode: TransportMode) -> Vec<f64> {
    match mode {
        TransportMode::Paper => {
            let k = (1.0 - c.sqrt() * dot(v, v).sqrt()).powi(2) / (1.0 - c * dot(u, w));
            (0..w.len()).map(|i| w[i] - k * v[i]).collect()
        }
        TransportMode::Gyro => {
            // gyr[a, b] w = -(a + b) + (a + (b + w)) with a = v, b = -u
            let nu: Vec<f64> = u.iter().map(|t| -t).collect();
            let ab: Vec<f64> = mobius(v, &nu, c).iter().map(|t| -t).collect();
            let g = mobius(&ab, &mobius(v, &mobius(&nu, w, c), c), c);
            let k = lambda(u, c) / lambda(v, c);
            g.iter().map(|t| k * t).collect()
        }
    }
}

fn stream(x: &[f64], s: &medmam_core::medmam::StreamMlp) -> Vec<f64> {
    plus(matvec(&s.w_out, &relu(plus(matvec(&s.w_in, x), &s.b_in))), &s.b_out)
}

fn delta_h(f1: &[f64], f2: &[f64], p: &MedMamParams, mode: TransportMode) -> Vec<f64> {
    let c = p.curvature_value();
    let x1 = project(&stream(f1, &p.stream1), c);
    let x2 = project(&stream(f2, &p.stream2), c);
    transport(&x1, &x2, &log_map(&x1, &x2, c), c, mode)
}

fn seed0_params(d: usize) -> MedMamParams {
    MedMamParams::init(d, Curvature::trainable(0.1).unwrap(), &mut rng(0)).unwrap()
}

fn bundles(d: usize, seed: u64) -> (FeatureBundle, FeatureBundle) {
    let mut r = rng(seed);
    (
        FeatureBundle::new(gauss(&mut r, 3 * d), 0).unwrap(),
        FeatureBundle::new(gauss(&mut r, 3 * d), 0).unwrap(),
    )
}

#[test]
fn euclid_fuse_matches_scalar_loops() {
    let p = seed0_params(4);
    for s in 0..10 {
        let (f1, f2) = bundles(4, 100 + s);
        let (fe, alpha) = euclid_fuse(&f1, &f2, &p).unwrap();
        let (want, want_alpha) = euclid(&f1.values, &f2.values, &p);
        assert!(max_abs_diff(&fe, &want) < 1e-12);
        assert!((alpha - want_alpha).abs() < 1e-12);
        assert!(alpha > 0.0 && alpha < 1.0);
    }
}

#[test]
fn compress_matches_scalar_loops() {
    let p = seed0_params(2);
    let mut r = rng(5);
    for _ in 0..10 {
        let (a, b) = (gauss(&mut r, 6), gauss(&mut r, 6));
        let got = cross_space_compress(&a, &b, &p).unwrap();
        assert_eq!(got.len(), 4);
        assert!(max_abs_diff(&got, &compress(&a, &b, &p)) < 1e-12);
    }
}

#[test]
fn manifold_diff_matches_scalar_loops() {
    let p = seed0_params(4);
    for mode in [TransportMode::Paper, TransportMode::Gyro] {
        for s in 0..10 {
            let (f1, f2) = bundles(4, 200 + s);
            let got = manifold_diff(&f1, &f2, &p, mode).unwrap();
            assert!(max_abs_diff(&got, &delta_h(&f1.values, &f2.values, &p, mode)) < 1e-10);
        }
    }
}

#[test]
fn full_forward_matches_composed_oracle() {
    let p = seed0_params(4);
    for mode in [TransportMode::Paper, TransportMode::Gyro] {
        for s in 0..4 {
            let (f1, f2) = bundles(4, s);
            let out = medmam_forward(&f1, &f2, &p, mode).unwrap();
            let (fe, _) = euclid(&f1.values, &f2.values, &p);
            let dh = delta_h(&f1.values, &f2.values, &p, mode);
            let want = compress(&fe, &dh, &p);
            assert!(max_abs_diff(&out.f_fused, &want) < 1e-10, "{mode:?} sample {s}");
        }
    }
}

#[test]
fn paper_and_gyro_modes_disagree_but_stay_finite() {
    let p = seed0_params(4);
    let (f1, f2) = bundles(4, 9);
    let a = manifold_diff(&f1, &f2, &p, TransportMode::Paper).unwrap();
    let b = manifold_diff(&f1, &f2, &p, TransportMode::Gyro).unwrap();
    assert!(a.iter().chain(&b).all(|x| x.is_finite()));
    assert!(max_abs_diff(&a, &b) > 1e-6);
}

#[test]
fn delta_h_from_origin_hand_values() {
    // log_0((0.5, 0)) at c = 1 is (artanh 0.5, 0). Gyro transport from the
    // origin scales by lambda_0 / lambda_v = 2 / (8/3) = 0.75; paper transport
    // subtracts (1 - 0.5)^2 v = (0.125, 0).
    let z1 = [0.0, 0.0, 0.0];
    let z2 = [0.5, 0.0, 0.0];
    let log = 0.5f64.atanh();
    let g = embedded_difference(&z1, &z2, 1.0, TransportMode::Gyro).unwrap();
    assert!(max_abs_diff(&g, &[0.75 * log, 0.0, 0.0]) < 1e-14);
    let p = embedded_difference(&z1, &z2, 1.0, TransportMode::Paper).unwrap();
    assert!(max_abs_diff(&p, &[log - 0.125, 0.0, 0.0]) < 1e-14);
}

fn householder(v: &[f64], x: &[f64]) -> Vec<f64> {
    let k = 2.0 * dot(v, x) / dot(v, v);
    (0..x.len()).map(|i| x[i] - k * v[i]).collect()
}

#[test]
fn gyro_difference_is_rotation_equivariant() {
    let mut r = rng(11);
    for c in [0.01f64, 0.1, 1.0] {
        for _ in 0..200 {
            let scale = 0.6 / c.sqrt();
            let z1: Vec<f64> = gauss(&mut r, 6).iter().map(|t| t * scale / 3.0).collect();
            let z2: Vec<f64> = gauss(&mut r, 6).iter().map(|t| t * scale / 3.0).collect();
            let (h1, h2) = (gauss(&mut r, 6), gauss(&mut r, 6));
            let rot = |x: &[f64]| householder(&h2, &householder(&h1, x));
            let base = embedded_difference(&z1, &z2, c, TransportMode::Gyro).unwrap();
            let turned = embedded_difference(&rot(&z1), &rot(&z2), c, TransportMode::Gyro).unwrap();
            let err = max_abs_diff(&turned, &rot(&base));
            assert!(err < 1e-9 * base.iter().map(|t| t.abs()).fold(1.0, f64::max), "c = {c}: {err}");
        }
    }
}

#[test]
fn batched_forward_is_a_per_sample_map() {
    let p = seed0_params(3);
    let pairs: Vec<_> = (0..6).map(|s| bundles(3, 40 + s)).collect();
    let out = medmam_forward_batch(&pairs, &p, TransportMode::Paper).unwrap();
    let mut perm = pairs.clone();
    perm.reverse();
    let out_rev = medmam_forward_batch(&perm, &p, TransportMode::Paper).unwrap();
    for (i, o) in out.iter().enumerate() {
        assert_eq!(o, &out_rev[pairs.len() - 1 - i]);
        assert_eq!(o, &medmam_forward(&pairs[i].0, &pairs[i].1, &p, TransportMode::Paper).unwrap());
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[test]
fn itm_matches_scalar_loops() {
    let d = 3;
    let mut r = rng(0);
    let head = ItmHead::init(2 * d, &mut r);
    let fused: Vec<Vec<f64>> = (0..4).map(|_| gauss(&mut r, 2 * d)).collect();
    let text: Vec<Vec<f64>> = (0..4).map(|_| gauss(&mut r, 2 * d)).collect();
    let neg = sample_negatives(4, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let w = head.w.value.data();
    let b = head.b.value.data()[0];
    let logit = |f: &[f64], t: &[f64]| {
        let mut x = f.to_vec();
        x.extend_from_slice(t);
        dot(w, &x) + b
    };
    let mut total = 0.0;
    for i in 0..4 {
        total += softplus(-logit(&fused[i], &text[i]));
        total += softplus(logit(&fused[i], &text[neg[i]]));
    }
    let want = total / 8.0;
    let got = itm_loss(&fused, &text, &head, 0).unwrap();
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}
