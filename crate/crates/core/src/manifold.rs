//! Poincaré-ball geometry with positive curvature parameter `c` (sectional
//! curvature `-c`, ball radius `1/sqrt(c)`).
//!
//! Two layers live here:
//!
//! * [`raw`] works on plain `&[f64]` slices and carries the hand-written
//!   vector-Jacobian products used by the training pipeline.
//! * The typed API ([`BallPoint`], [`TangentVec`], [`project`], [`log_map`],
//!   ...) validates invariants and is what callers outside the pipeline use.
//!
//! Two parallel transports are provided. [`TransportMode::Paper`] is the
//! closed form `w - (1 - sqrt(c)|v|)^2 / (1 - c<u,w>) * v`, taken verbatim.
//! [`TransportMode::Gyro`] is the gyrovector transport
//! `(lambda_u / lambda_v) * gyr[v, -u] w`, which is a Riemannian isometry and
//! serves as the reference the audit compares against.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::vecops::{dot, norm, norm_sq};

/// Relative shrink applied when a projected point lands on or outside the ball.
pub const BOUNDARY_EPS: f64 = 1e-5;
/// `|1 - c<u,w>|` at or below this is a singular paper-mode transport.
pub const SINGULARITY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Curvature {
    c: f64,
    trainable: bool,
}

impl Curvature {
    /// Lower clamp applied after every trainable update.
    pub const MIN: f64 = 1e-6;
    pub const DEFAULT: f64 = 0.1;

    pub fn new(c: f64) -> Result<Self> {
        if !c.is_finite() || c <= 0.0 {
            return Err(Error::contract(format!("curvature must be finite and > 0, got {c}")));
        }
        Ok(Self { c, trainable: false })
    }

    pub fn trainable(c: f64) -> Result<Self> {
        Ok(Self { trainable: true, ..Self::new(c)? })
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.c
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }

    /// Ball radius `1/sqrt(c)`.
    pub fn radius(&self) -> f64 {
        1.0 / self.c.sqrt()
    }

    /// Apply an optimizer update, keeping `c >= MIN`. No-op when frozen.
    pub fn update(&mut self, proposed: f64) {
        if self.trainable && proposed.is_finite() {
            self.c = proposed.max(Self::MIN);
        }
    }
}

impl Default for Curvature {
    fn default() -> Self {
        Self { c: Self::DEFAULT, trainable: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    #[default]
    Paper,
    Gyro,
}

impl std::str::FromStr for TransportMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "gyro" => Ok(Self::Gyro),
            other => Err(Error::contract(format!("unknown transport mode {other:?}"))),
        }
    }
}

/// A point strictly inside the ball of its curvature.
#[derive(Debug, Clone, PartialEq)]
pub struct BallPoint {
    coords: Vec<f64>,
    c: Curvature,
}

impl BallPoint {
    pub fn new(coords: Vec<f64>, c: Curvature) -> Result<Self> {
        ensure_finite("ball point", &coords)?;
        let n = norm(&coords);
        if n >= c.radius() {
            return Err(Error::contract(format!(
                "point norm {n} is not inside the ball of radius {}",
                c.radius()
            )));
        }
        Ok(Self { coords, c })
    }

    pub fn origin(dim: usize, c: Curvature) -> Self {
        Self { coords: vec![0.0; dim], c }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn curvature(&self) -> Curvature {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// Conformal factor `lambda_x = 2 / (1 - c|x|^2)`.
    pub fn conformal_factor(&self) -> f64 {
        raw::conformal_factor(&self.coords, self.c.value())
    }

    pub fn neg(&self) -> Self {
        Self {
            coords: self.coords.iter().map(|x| -x).collect(),
            c: self.c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentVec {
    base: BallPoint,
    components: Vec<f64>,
}

impl TangentVec {
    pub fn new(base: BallPoint, components: Vec<f64>) -> Result<Self> {
        ensure_finite("tangent vector", &components)?;
        if components.len() != base.dim() {
            return Err(Error::contract(format!(
                "tangent vector has length {} but its base point has dimension {}",
                components.len(),
                base.dim()
            )));
        }
        Ok(Self { base, components })
    }

    pub fn zero(base: BallPoint) -> Self {
        let components = vec![0.0; base.dim()];
        Self { base, components }
    }

    pub fn base(&self) -> &BallPoint {
        &self.base
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn into_components(self) -> Vec<f64> {
        self.components
    }

    /// Euclidean norm of the components.
    pub fn norm(&self) -> f64 {
        norm(&self.components)
    }

    /// Length in the metric at the base point: `lambda_x * |v|`.
    pub fn riemannian_norm(&self) -> f64 {
        self.base.conformal_factor() * self.norm()
    }
}

fn check_pair(op: &str, x: &BallPoint, y: &BallPoint) -> Result<()> {
    if x.c.value() != y.c.value() {
        return Err(Error::contract(format!(
            "{op}: curvature mismatch ({} vs {})",
            x.c.value(),
            y.c.value()
        )));
    }
    if x.dim() != y.dim() {
        return Err(Error::contract(format!(
            "{op}: dimension mismatch ({} vs {})",
            x.dim(),
            y.dim()
        )));
    }
    Ok(())
}

/// Map an arbitrary vector into the ball.
///
/// Vectors with `|z| <= 1/sqrt(c)` are returned unchanged; longer ones are
/// divided by their norm. A result that still sits on or outside the ball
/// (only possible for `c >= 1`) is pulled to radius `(1 - 1e-5)/sqrt(c)`.
pub fn project(z: &[f64], c: Curvature) -> Result<BallPoint> {
    ensure_finite("project input", z)?;
    Ok(BallPoint {
        coords: raw::project(z, c.value()),
        c,
    })
}

pub fn mobius_add(x: &BallPoint, y: &BallPoint) -> Result<BallPoint> {
    check_pair("mobius_add", x, y)?;
    let c = x.c.value();
    let out = raw::safeguard(raw::mobius_add(&x.coords, &y.coords, c), c);
    Ok(BallPoint { coords: out, c: x.c })
}

/// Tangent vector at `x` pointing along the geodesic to `y`, with Riemannian
/// length equal to the geodesic distance. `log_map(x, x)` is zero.
pub fn log_map(x: &BallPoint, y: &BallPoint) -> Result<TangentVec> {
    check_pair("log_map", x, y)?;
    let v = raw::log_map(&x.coords, &y.coords, x.c.value());
    Ok(TangentVec {
        base: x.clone(),
        components: v,
    })
}

pub fn exp_map(x: &BallPoint, v: &TangentVec) -> Result<BallPoint> {
    check_pair("exp_map", x, &v.base)?;
    if v.base.coords != x.coords {
        return Err(Error::contract("exp_map: tangent vector is not based at x"));
    }
    let c = x.c.value();
    Ok(BallPoint {
        coords: raw::exp_map(&x.coords, &v.components, c),
        c: x.c,
    })
}

pub fn geodesic_distance(x: &BallPoint, y: &BallPoint) -> Result<f64> {
    check_pair("geodesic_distance", x, y)?;
    Ok(raw::distance(&x.coords, &y.coords, x.c.value()))
}

/// Move `w` (based at `u`) into the tangent space at `v`.
pub fn parallel_transport(
    u: &BallPoint,
    v: &BallPoint,
    w: &TangentVec,
    mode: TransportMode,
) -> Result<TangentVec> {
    check_pair("parallel_transport", u, v)?;
    check_pair("parallel_transport", u, &w.base)?;
    if w.base.coords != u.coords {
        return Err(Error::contract("parallel_transport: w is not based at u"));
    }
    let c = u.c.value();
    let out = match mode {
        TransportMode::Paper => raw::transport_paper(&u.coords, &v.coords, &w.components, c)?,
        TransportMode::Gyro => raw::transport_gyro(&u.coords, &v.coords, &w.components, c),
    };
    Ok(TangentVec {
        base: v.clone(),
        components: out,
    })
}

/// Random point with norm uniform in `[0, max_frac * radius)`.
pub fn random_point<R: Rng + ?Sized>(rng: &mut R, dim: usize, c: Curvature, max_frac: f64) -> BallPoint {
    let dir = random_unit(rng, dim);
    let r = c.radius() * max_frac * rng.random::<f64>();
    BallPoint {
        coords: dir.into_iter().map(|x| x * r).collect(),
        c,
    }
}

pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Slice-level geometry plus vector-Jacobian products.
///
/// Every `*_vjp` takes the forward inputs and an output cotangent `g` and
/// returns the input cotangents, including the one for the curvature.
pub mod raw {
    use super::*;
    use crate::vecops::axpy;

    #[inline]
    pub fn conformal_factor(x: &[f64], c: f64) -> f64 {
        2.0 / (1.0 - c * norm_sq(x))
    }

    fn shrink_radius(c: f64) -> f64 {
        (1.0 - BOUNDARY_EPS) / c.sqrt()
    }

    /// Pull a point lying on or outside the ball back to `(1 - 1e-5)` of the radius.
    pub fn safeguard(mut y: Vec<f64>, c: f64) -> Vec<f64> {
        let ny = norm(&y);
        if ny >= 1.0 / c.sqrt() {
            let k = shrink_radius(c) / ny;
            y.iter_mut().for_each(|v| *v *= k);
        }
        y
    }

    pub fn project(z: &[f64], c: f64) -> Vec<f64> {
        let n = norm(z);
        let y = if n <= 1.0 / c.sqrt() {
            z.to_vec()
        } else {
            z.iter().map(|v| v / n).collect()
        };
        safeguard(y, c)
    }

    pub fn project_vjp(z: &[f64], c: f64, g: &[f64]) -> (Vec<f64>, f64) {
        let r = 1.0 / c.sqrt();
        let n = norm(z);
        let above = n > r;
        let y: Vec<f64> = if above { z.iter().map(|v| v / n).collect() } else { z.to_vec() };
        let ny = norm(&y);
        let mut gc = 0.0;
        let gy = if ny >= r {
            // out = (1-eps) * r * y/|y|
            let yh: Vec<f64> = y.iter().map(|v| v / ny).collect();
            let proj = dot(&yh, g);
            let k = (1.0 - BOUNDARY_EPS) * r / ny;
            let gr = (1.0 - BOUNDARY_EPS) * proj;
            gc += gr * (-0.5 * c.powf(-1.5));
            g.iter().zip(&yh).map(|(gi, yi)| k * (gi - yi * proj)).collect()
        } else {
            g.to_vec()
        };
        let gz = if above {
            let zh: Vec<f64> = z.iter().map(|v| v / n).collect();
            let proj = dot(&zh, &gy);
            gy.iter().zip(&zh).map(|(gi, zi)| (gi - zi * proj) / n).collect()
        } else {
            gy
        };
        (gz, gc)
    }

    struct MobiusTerms {
        xy: f64,
        x2: f64,
        y2: f64,
        a: f64,
        b: f64,
        d: f64,
    }

    fn mobius_terms(x: &[f64], y: &[f64], c: f64) -> MobiusTerms {
        let xy = dot(x, y);
        let x2 = norm_sq(x);
        let y2 = norm_sq(y);
        MobiusTerms {
            xy,
            x2,
            y2,
            a: 1.0 + 2.0 * c * xy + c * y2,
            b: 1.0 - c * x2,
            d: 1.0 + 2.0 * c * xy + c * c * x2 * y2,
        }
    }

    pub fn mobius_add(x: &[f64], y: &[f64], c: f64) -> Vec<f64> {
        let t = mobius_terms(x, y, c);
        x.iter()
            .zip(y)
            .map(|(xi, yi)| (t.a * xi + t.b * yi) / t.d)
            .collect()
    }

    pub fn mobius_add_vjp(x: &[f64], y: &[f64], c: f64, g: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let t = mobius_terms(x, y, c);
        let out = mobius_add(x, y, c);
        let g_d = -dot(g, &out) / t.d;
        let g_a = dot(g, x) / t.d;
        let g_b = dot(g, y) / t.d;
        let mut gx: Vec<f64> = g.iter().map(|v| t.a * v / t.d).collect();
        let mut gy: Vec<f64> = g.iter().map(|v| t.b * v / t.d).collect();

        let mut g_xy = 2.0 * c * g_a;
        let mut g_y2 = c * g_a;
        let mut gc = (2.0 * t.xy + t.y2) * g_a;

        let mut g_x2 = -c * g_b;
        gc += -t.x2 * g_b;

        g_xy += 2.0 * c * g_d;
        g_x2 += c * c * t.y2 * g_d;
        g_y2 += c * c * t.x2 * g_d;
        gc += (2.0 * t.xy + 2.0 * c * t.x2 * t.y2) * g_d;

        axpy(&mut gx, g_xy, y);
        axpy(&mut gx, 2.0 * g_x2, x);
        axpy(&mut gy, g_xy, x);
        axpy(&mut gy, 2.0 * g_y2, y);
        (gx, gy, gc)
    }

    const ATANH_CLAMP: f64 = 1.0 - 1e-15;

    /// `atanh(q) / q`, continuous at 0.
    fn atanh_ratio(q: f64) -> f64 {
        if q < 1e-4 {
            let q2 = q * q;
            1.0 + q2 / 3.0 + q2 * q2 / 5.0
        } else {
            q.min(ATANH_CLAMP).atanh() / q
        }
    }

    fn atanh_ratio_deriv(q: f64) -> f64 {
        if q < 1e-3 {
            let q2 = q * q;
            q * (2.0 / 3.0 + q2 * (4.0 / 5.0 + q2 * 6.0 / 7.0))
        } else {
            let qc = q.min(ATANH_CLAMP);
            (qc / (1.0 - qc * qc) - qc.atanh()) / (q * q)
        }
    }

    /// `log_x(y) = (1 - c|x|^2) * atanh(sqrt(c)|m|)/(sqrt(c)|m|) * m`, `m = (-x) (+) y`.
    pub fn log_map(x: &[f64], y: &[f64], c: f64) -> Vec<f64> {
        let nx: Vec<f64> = x.iter().map(|v| -v).collect();
        let m = mobius_add(&nx, y, c);
        let q = c.sqrt() * norm(&m);
        let k = (1.0 - c * norm_sq(x)) * atanh_ratio(q);
        m.into_iter().map(|v| v * k).collect()
    }

    pub fn log_map_vjp(x: &[f64], y: &[f64], c: f64, g: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let s = c.sqrt();
        let nx: Vec<f64> = x.iter().map(|v| -v).collect();
        let m = mobius_add(&nx, y, c);
        let nm = norm(&m);
        let q = s * nm;
        let x2 = norm_sq(x);
        let phi = atanh_ratio(q);
        let k = (1.0 - c * x2) * phi;

        let g_k = dot(g, &m);
        let mut gm: Vec<f64> = g.iter().map(|v| k * v).collect();
        let g_phi = g_k * (1.0 - c * x2);
        let g_x2 = -c * phi * g_k;
        let mut gc = -x2 * phi * g_k;
        let g_q = g_phi * atanh_ratio_deriv(q);
        let g_s = g_q * nm;
        if nm > 0.0 {
            axpy(&mut gm, g_q * s / nm, &m);
        }
        gc += g_s / (2.0 * s);

        let (g_nx, gy, gc_m) = mobius_add_vjp(&nx, y, c, &gm);
        gc += gc_m;
        let mut gx: Vec<f64> = g_nx.iter().map(|v| -v).collect();
        axpy(&mut gx, 2.0 * g_x2, x);
        (gx, gy, gc)
    }

    pub fn exp_map(x: &[f64], v: &[f64], c: f64) -> Vec<f64> {
        let nv = norm(v);
        if nv == 0.0 {
            return x.to_vec();
        }
        let s = c.sqrt();
        let lambda = conformal_factor(x, c);
        let t = (s * lambda * nv / 2.0).tanh() / (s * nv);
        let second: Vec<f64> = v.iter().map(|vi| vi * t).collect();
        safeguard(mobius_add(x, &second, c), c)
    }

    pub fn distance(x: &[f64], y: &[f64], c: f64) -> f64 {
        let s = c.sqrt();
        let nx: Vec<f64> = x.iter().map(|v| -v).collect();
        let m = mobius_add(&nx, y, c);
        2.0 / s * (s * norm(&m)).min(ATANH_CLAMP).atanh()
    }

    pub fn transport_paper(u: &[f64], v: &[f64], w: &[f64], c: f64) -> Result<Vec<f64>> {
        let inner = dot(u, w);
        let denominator = 1.0 - c * inner;
        if denominator.abs() <= SINGULARITY_EPS {
            return Err(Error::Singularity { inner, denominator });
        }
        let p = (1.0 - c.sqrt() * norm(v)).powi(2);
        let coef = p / denominator;
        Ok(w.iter().zip(v).map(|(wi, vi)| wi - coef * vi).collect())
    }

    pub fn transport_paper_vjp(
        u: &[f64],
        v: &[f64],
        w: &[f64],
        c: f64,
        g: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
        let s = c.sqrt();
        let nv = norm(v);
        let uw = dot(u, w);
        let den = 1.0 - c * uw;
        let t = s * nv;
        let p = (1.0 - t).powi(2);
        let coef = p / den;

        let mut gw = g.to_vec();
        let g_coef = -dot(g, v);
        let mut gv: Vec<f64> = g.iter().map(|x| -coef * x).collect();
        let g_p = g_coef / den;
        let g_den = -g_coef * p / (den * den);

        let g_t = g_p * (-2.0 * (1.0 - t));
        let g_s = g_t * nv;
        if nv > 0.0 {
            axpy(&mut gv, g_t * s / nv, v);
        }
        let gc = -uw * g_den + g_s / (2.0 * s);
        let g_uw = -c * g_den;
        let gu: Vec<f64> = w.iter().map(|x| g_uw * x).collect();
        axpy(&mut gw, g_uw, u);
        (gu, gv, gw, gc)
    }

    struct GyrTerms {
        a2: f64,
        b2: f64,
        ab: f64,
        aw: f64,
        bw: f64,
        ca: f64,
        cb: f64,
        d: f64,
    }

    fn gyr_terms(a: &[f64], b: &[f64], w: &[f64], c: f64) -> GyrTerms {
        let a2 = norm_sq(a);
        let b2 = norm_sq(b);
        let ab = dot(a, b);
        let aw = dot(a, w);
        let bw = dot(b, w);
        let c2 = c * c;
        GyrTerms {
            a2,
            b2,
            ab,
            aw,
            bw,
            ca: -c2 * aw * b2 + c * bw + 2.0 * c2 * ab * bw,
            cb: -c2 * bw * a2 - c * aw,
            d: 1.0 + 2.0 * c * ab + c2 * a2 * b2,
        }
    }

    /// Gyration `gyr[a, b] w`, a linear orthogonal map of `w`.
    pub fn gyration(a: &[f64], b: &[f64], w: &[f64], c: f64) -> Vec<f64> {
        let t = gyr_terms(a, b, w, c);
        w.iter()
            .zip(a.iter().zip(b))
            .map(|(wi, (ai, bi))| wi + 2.0 * (t.ca * ai + t.cb * bi) / t.d)
            .collect()
    }

    fn gyration_vjp(
        a: &[f64],
        b: &[f64],
        w: &[f64],
        c: f64,
        g: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
        let t = gyr_terms(a, b, w, c);
        let c2 = c * c;
        let k = 2.0 / t.d;
        let ga_dot = dot(g, a);
        let gb_dot = dot(g, b);
        let g_ca = k * ga_dot;
        let g_cb = k * gb_dot;
        let mut ga: Vec<f64> = g.iter().map(|x| k * t.ca * x).collect();
        let mut gb: Vec<f64> = g.iter().map(|x| k * t.cb * x).collect();
        let mut gw = g.to_vec();
        let g_d = -2.0 * (t.ca * ga_dot + t.cb * gb_dot) / (t.d * t.d);

        let mut g_aw = -c2 * t.b2 * g_ca;
        let mut g_b2 = -c2 * t.aw * g_ca;
        let mut g_bw = (c + 2.0 * c2 * t.ab) * g_ca;
        let mut g_ab = 2.0 * c2 * t.bw * g_ca;
        let mut gc = (-2.0 * c * t.aw * t.b2 + t.bw + 4.0 * c * t.ab * t.bw) * g_ca;

        g_bw += -c2 * t.a2 * g_cb;
        let mut g_a2 = -c2 * t.bw * g_cb;
        g_aw += -c * g_cb;
        gc += (-2.0 * c * t.bw * t.a2 - t.aw) * g_cb;

        g_ab += 2.0 * c * g_d;
        g_a2 += c2 * t.b2 * g_d;
        g_b2 += c2 * t.a2 * g_d;
        gc += (2.0 * t.ab + 2.0 * c * t.a2 * t.b2) * g_d;

        axpy(&mut ga, 2.0 * g_a2, a);
        axpy(&mut ga, g_ab, b);
        axpy(&mut ga, g_aw, w);
        axpy(&mut gb, 2.0 * g_b2, b);
        axpy(&mut gb, g_ab, a);
        axpy(&mut gb, g_bw, w);
        axpy(&mut gw, g_aw, a);
        axpy(&mut gw, g_bw, b);
        (ga, gb, gw, gc)
    }

    /// `(lambda_u / lambda_v) * gyr[v, -u] w`
    pub fn transport_gyro(u: &[f64], v: &[f64], w: &[f64], c: f64) -> Vec<f64> {
        let nu: Vec<f64> = u.iter().map(|x| -x).collect();
        let ratio = (1.0 - c * norm_sq(v)) / (1.0 - c * norm_sq(u));
        gyration(v, &nu, w, c).into_iter().map(|x| ratio * x).collect()
    }

    pub fn transport_gyro_vjp(
        u: &[f64],
        v: &[f64],
        w: &[f64],
        c: f64,
        g: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
        let nu: Vec<f64> = u.iter().map(|x| -x).collect();
        let u2 = norm_sq(u);
        let v2 = norm_sq(v);
        let den = 1.0 - c * u2;
        let ratio = (1.0 - c * v2) / den;
        let gyr = gyration(v, &nu, w, c);

        let g_ratio = dot(g, &gyr);
        let g_gyr: Vec<f64> = g.iter().map(|x| ratio * x).collect();
        let (ga, gb, gw, gc_gyr) = gyration_vjp(v, &nu, w, c, &g_gyr);

        let mut gu: Vec<f64> = gb.iter().map(|x| -x).collect();
        let mut gv = ga;
        axpy(&mut gu, 2.0 * g_ratio * c * (1.0 - c * v2) / (den * den), u);
        axpy(&mut gv, 2.0 * g_ratio * (-c / den), v);
        let gc = gc_gyr + g_ratio * (u2 - v2) / (den * den);
        (gu, gv, gw, gc)
    }

    pub fn transport(
        mode: TransportMode,
        u: &[f64],
        v: &[f64],
        w: &[f64],
        c: f64,
    ) -> Result<Vec<f64>> {
        match mode {
            TransportMode::Paper => transport_paper(u, v, w, c),
            TransportMode::Gyro => Ok(transport_gyro(u, v, w, c)),
        }
    }

    pub fn transport_vjp(
        mode: TransportMode,
        u: &[f64],
        v: &[f64],
        w: &[f64],
        c: f64,
        g: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
        match mode {
            TransportMode::Paper => transport_paper_vjp(u, v, w, c, g),
            TransportMode::Gyro => transport_gyro_vjp(u, v, w, c, g),
        }
    }
}
