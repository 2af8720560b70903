//! Named test surfaces with exact charts.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};
use std::sync::Arc;

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use super::{AnalyticChart, Contact, Domain, ParametricSurface, WetRegion};
use crate::conformal::{phi, xi_r_generic, Cap};
use crate::error::{Error, Result};
use crate::jet::{Jet, Real};

/// Builtin surfaces addressable by name and parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum SurfaceParams {
    /// Totally geodesic disc in `B_R(e_0)` meeting the boundary at angle `γ`.
    HalfEquator { radius: f64, gamma: f64 },
    /// `S¹(1/√2) × S¹(1/√2) ∩ {x_0 ≥ 0}`, a free boundary annulus in the hemisphere.
    HalfCliffordTorus,
    /// The closed Clifford torus.
    CliffordTorus,
    /// Flat square `[0, side]²` on the Clifford torus.
    FlatSquare { side: f64 },
    /// Flat disc of the given radius on the Clifford torus.
    FlatDisc { radius: f64 },
    /// `Ξ_R ∘ Φ_y` applied to the flat unit disc of `B³`.
    DiscInBall { radius: f64, y: [f64; 3] },
    /// Cap of angular radius `angle` on the barrier `∂B_R(e_0)` about `center ⊥ e_0`.
    CapBoundaryWet { radius: f64, center: [f64; 3], angle: f64 },
}

impl SurfaceParams {
    pub fn build(&self) -> Result<ParametricSurface> {
        match *self {
            SurfaceParams::HalfEquator { radius, gamma } => half_equator(radius, gamma),
            SurfaceParams::HalfCliffordTorus => Ok(half_clifford_torus()),
            SurfaceParams::CliffordTorus => Ok(clifford_torus()),
            SurfaceParams::FlatSquare { side } => flat_square(side),
            SurfaceParams::FlatDisc { radius } => flat_disc(radius),
            SurfaceParams::DiscInBall { radius, y } => disc_in_ball(radius, y),
            SurfaceParams::CapBoundaryWet { radius, center, angle } => {
                let c = Vector4::new(0.0, center[0], center[1], center[2]);
                let n = c.norm();
                if !(n > 0.0) {
                    return Err(Error::Domain("cap center must be nonzero".into()));
                }
                let c = c / n;
                let (f1, f2) = complete_frame(&c);
                barrier_cap(radius, c, f1, f2, angle, "cap_boundary_wet")
            }
        }
    }
}

/// Look up a builtin surface by name with positional parameters.
pub fn builtin_surface(name: &str, params: &[f64]) -> Result<ParametricSurface> {
    let p = |i: usize, default: f64| params.get(i).copied().unwrap_or(default);
    let spec = match name {
        "half_equator" | "half-equator" | "hemisphere" => {
            SurfaceParams::HalfEquator { radius: p(0, FRAC_PI_2), gamma: p(1, FRAC_PI_2) }
        }
        "half_clifford_torus" | "half-clifford" | "half_clifford" => SurfaceParams::HalfCliffordTorus,
        "clifford_torus" | "clifford" => SurfaceParams::CliffordTorus,
        "flat_square" | "flat-square" => SurfaceParams::FlatSquare { side: p(0, 1.0) },
        "flat_disc" | "flat-disc" => SurfaceParams::FlatDisc { radius: p(0, 1.0) },
        "disc_in_ball" | "disc-in-ball" => {
            SurfaceParams::DiscInBall { radius: p(0, FRAC_PI_2), y: [p(1, 0.0), p(2, 0.0), p(3, 0.0)] }
        }
        "cap_boundary_wet" | "cap-boundary-wet" => SurfaceParams::CapBoundaryWet {
            radius: p(0, FRAC_PI_2),
            center: [p(1, 0.0), p(2, 0.0), p(3, 1.0)],
            angle: p(4, FRAC_PI_4),
        },
        other => return Err(Error::UnknownSurface(other.to_string())),
    };
    spec.build()
}

fn e(i: usize) -> Vector4<f64> {
    let mut v = Vector4::zeros();
    v[i] = 1.0;
    v
}

/// Two unit vectors completing `(e_0, c)` to an orthonormal frame.
fn complete_frame(c: &Vector4<f64>) -> (Vector4<f64>, Vector4<f64>) {
    let mut basis = vec![e(0), *c];
    let mut out = vec![];
    for i in 1..4 {
        let mut v = e(i);
        for b in &basis {
            v -= b * v.dot(b);
        }
        if v.norm() > 1e-6 {
            let v = v.normalize();
            basis.push(v);
            out.push(v);
        }
        if out.len() == 2 {
            break;
        }
    }
    (out[0], out[1])
}

fn combine<T: Real>(coef: &[T], basis: &[Vector4<f64>]) -> [T; 4] {
    std::array::from_fn(|i| {
        coef.iter().zip(basis).fold(T::cst(0.0), |acc, (&c, b)| if b[i] == 0.0 { acc } else { acc + c.scale(b[i]) })
    })
}

/// Orient so that `ν` agrees with `target` at parameter `(u, v)`.
fn orient(mut s: ParametricSurface, u: f64, v: f64, target: &Vector4<f64>) -> Result<ParametricSurface> {
    let g = s.geometry(u, v)?;
    if g.nu.dot(target) < 0.0 {
        s.orientation = -s.orientation;
    }
    Ok(s)
}

/// Disc of angular radius `angle` on `∂B_R(e_0)` about `c`, charted by `Ξ`.
///
/// Its boundary at loop parameter `τ` is
/// `cos R e_0 + sin R (cos θ c + sin θ (cos 2πτ f_1 + sin 2πτ f_2))`.
pub fn barrier_cap(
    radius: f64,
    c: Vector4<f64>,
    f1: Vector4<f64>,
    f2: Vector4<f64>,
    angle: f64,
    name: &str,
) -> Result<ParametricSurface> {
    if !(radius > 0.0 && radius < PI && angle > 0.0 && angle < PI) {
        return Err(Error::Domain("barrier cap needs R, θ in (0, π)".into()));
    }
    let (sr, cr) = radius.sin_cos();
    let chart = AnalyticChart(move |u: Jet, v: Jet| {
        let w = xi_r_generic(&[u, v], angle);
        let mut x = combine(&[w[0], w[1], w[2]], &[c * sr, f1 * sr, f2 * sr]);
        x[0] = x[0] + Jet::constant(cr);
        x
    });
    Ok(ParametricSurface {
        name: name.to_string(),
        chart: Arc::new(chart),
        domain: Domain::Disc { radius: 1.0 },
        contact: None,
        wet: vec![],
        orientation: 1.0,
        rotationally_symmetric: true,
        minimal: false,
    })
}

/// Totally geodesic half-equator in `B_R(e_0)` with contact angle `γ`.
pub fn half_equator(radius: f64, gamma: f64) -> Result<ParametricSurface> {
    if !(radius > 0.0 && radius < PI) {
        return Err(Error::Domain(format!("R = {radius} outside (0, π)")));
    }
    if !(gamma > 0.0 && gamma <= FRAC_PI_2 + 1e-15) {
        return Err(Error::Domain(format!("γ = {gamma} outside (0, π/2]")));
    }
    let sin_d = radius.sin() * gamma.cos();
    let cos_d = (1.0 - sin_d * sin_d).sqrt();
    let n = e(0) * sin_d + e(3) * cos_d;
    let ehat = e(0) * cos_d - e(3) * sin_d;
    let rho0 = (radius.cos() / cos_d).clamp(-1.0, 1.0).acos();
    let basis = [ehat, e(1), e(2)];
    let chart = AnalyticChart(move |u: Jet, v: Jet| {
        let w = xi_r_generic(&[u, v], rho0);
        combine(&w, &basis)
    });
    let cap = Cap::polar(4, radius)?;
    let s = ParametricSurface {
        name: format!("half_equator(R={radius}, gamma={gamma})"),
        chart: Arc::new(chart),
        domain: Domain::Disc { radius: 1.0 },
        contact: Some(Contact { cap, gamma }),
        wet: vec![],
        orientation: 1.0,
        rotationally_symmetric: true,
        minimal: true,
    };
    let mut s = orient(s, 0.0, 0.0, &(-n))?;
    // Wet cap on the barrier about +e_3 with cos θ = −tan δ cot R.
    let cos_w = -(sin_d / cos_d) / radius.tan();
    let theta = cos_w.clamp(-1.0, 1.0).acos();
    let wet = barrier_cap(radius, e(3), e(1), e(2), theta, "half_equator_wet")?;
    s.wet.push(WetRegion { surface: wet, loop_id: 0 });
    Ok(s)
}

fn clifford_chart() -> AnalyticChart<impl Fn(Jet, Jet) -> [Jet; 4] + Send + Sync> {
    AnalyticChart(|u: Jet, v: Jet| {
        let r = FRAC_1_SQRT_2;
        [u.cos().scale(r), u.sin().scale(r), v.cos().scale(r), v.sin().scale(r)]
    })
}

/// The half Clifford torus `{x_0 ≥ 0}` with its two wet discs on the equator.
pub fn half_clifford_torus() -> ParametricSurface {
    let cap = Cap::polar(4, FRAC_PI_2).expect("valid cap");
    let left = barrier_cap(FRAC_PI_2, -e(1), e(2), -e(3), FRAC_PI_4, "half_clifford_wet_left").expect("valid");
    let right = barrier_cap(FRAC_PI_2, e(1), e(2), e(3), FRAC_PI_4, "half_clifford_wet_right").expect("valid");
    ParametricSurface {
        name: "half_clifford_torus".into(),
        chart: Arc::new(clifford_chart()),
        domain: Domain::Rect { u: (-FRAC_PI_2, FRAC_PI_2), v: (0.0, 2.0 * PI), periodic_u: false, periodic_v: true },
        contact: Some(Contact { cap, gamma: FRAC_PI_2 }),
        wet: vec![WetRegion { surface: left, loop_id: 0 }, WetRegion { surface: right, loop_id: 1 }],
        orientation: 1.0,
        rotationally_symmetric: true,
        minimal: true,
    }
}

/// The closed Clifford torus.
pub fn clifford_torus() -> ParametricSurface {
    ParametricSurface {
        name: "clifford_torus".into(),
        chart: Arc::new(clifford_chart()),
        domain: Domain::Rect { u: (0.0, 2.0 * PI), v: (0.0, 2.0 * PI), periodic_u: true, periodic_v: true },
        contact: None,
        wet: vec![],
        orientation: 1.0,
        rotationally_symmetric: true,
        minimal: true,
    }
}

fn flat_chart() -> AnalyticChart<impl Fn(Jet, Jet) -> [Jet; 4] + Send + Sync> {
    AnalyticChart(|u: Jet, v: Jet| {
        let r = FRAC_1_SQRT_2;
        let (a, b) = (u.scale(SQRT_2), v.scale(SQRT_2));
        [a.cos().scale(r), a.sin().scale(r), b.cos().scale(r), b.sin().scale(r)]
    })
}

/// Isometric flat square on the Clifford torus.
pub fn flat_square(side: f64) -> Result<ParametricSurface> {
    if !(side > 0.0 && side < PI * SQRT_2) {
        return Err(Error::Domain("side must lie in (0, √2π)".into()));
    }
    Ok(ParametricSurface {
        name: format!("flat_square({side})"),
        chart: Arc::new(flat_chart()),
        domain: Domain::Rect { u: (0.0, side), v: (0.0, side), periodic_u: false, periodic_v: false },
        contact: None,
        wet: vec![],
        orientation: 1.0,
        rotationally_symmetric: false,
        minimal: true,
    })
}

/// Isometric flat disc on the Clifford torus.
pub fn flat_disc(radius: f64) -> Result<ParametricSurface> {
    if !(radius > 0.0 && radius < PI / SQRT_2) {
        return Err(Error::Domain("radius must lie in (0, π/√2)".into()));
    }
    Ok(ParametricSurface {
        name: format!("flat_disc({radius})"),
        chart: Arc::new(flat_chart()),
        domain: Domain::Disc { radius },
        contact: None,
        wet: vec![],
        orientation: 1.0,
        rotationally_symmetric: true,
        minimal: true,
    })
}

/// The flat unit disc of `B³`, moved by `Φ_y` and mapped into `B_R(e_0)` by `Ξ_R`.
pub fn disc_in_ball(radius: f64, y: [f64; 3]) -> Result<ParametricSurface> {
    if !(radius > 0.0 && radius < PI) {
        return Err(Error::Domain(format!("R = {radius} outside (0, π)")));
    }
    let ny = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
    if ny >= 1.0 {
        return Err(Error::Domain("|y| must be < 1".into()));
    }
    let chart = AnalyticChart(move |u: Jet, v: Jet| {
        let q = phi(&y, &[u, v, Jet::constant(0.0)]);
        let x = xi_r_generic(&q, radius);
        [x[0], x[1], x[2], x[3]]
    });
    let symmetric = y[0] == 0.0 && y[1] == 0.0;
    Ok(ParametricSurface {
        name: format!("disc_in_ball(R={radius}, y={y:?})"),
        chart: Arc::new(chart),
        domain: Domain::Disc { radius: 1.0 },
        contact: Some(Contact { cap: Cap::polar(4, radius)?, gamma: FRAC_PI_2 }),
        wet: vec![],
        orientation: 1.0,
        rotationally_symmetric: symmetric,
        minimal: ny == 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::quadrature::{integrate_boundary, integrate_interior, integrate_wet, QuadOptions};
    use crate::surface::{check_boundary_curvature_identities, wet_consistency};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn half_equator_areas() {
        let q = QuadOptions::default();
        for &g in &[PI / 6.0, PI / 3.0, FRAC_PI_2] {
            let s = half_equator(FRAC_PI_2, g).unwrap();
            let a = integrate_interior(&s, &q, |_| 1.0).unwrap();
            let l = integrate_boundary(&s, &q, |_| 1.0).unwrap();
            let w = integrate_wet(&s, &q, |_| 1.0).unwrap();
            assert!(rel(a, 2.0 * PI) < 1e-10, "{a}");
            assert!(rel(l, 2.0 * PI) < 1e-10, "{l}");
            assert!(rel(w, 2.0 * PI) < 1e-10, "{w}");
        }
    }

    #[test]
    fn half_equator_frames_balance() {
        for &(r, g) in &[(FRAC_PI_2, PI / 3.0), (1.0, PI / 4.0), (2.0, 1.2), (0.7, FRAC_PI_2)] {
            let s = half_equator(r, g).unwrap();
            let rep = check_boundary_curvature_identities(&s, 16).unwrap();
            assert!(rep.angle < 1e-10, "angle {rep:?}");
            assert!(rep.balance < 1e-10);
            assert!(rep.max_residual() < 1e-8, "{rep:?}");
            let wc = wet_consistency(&s, 16).unwrap();
            assert!(wc.max_gap < 1e-12, "{wc:?}");
            assert!(wc.max_balance < 1e-10, "{wc:?}");
            for k in 0..5 {
                let c = s.geometry(0.1 * k as f64, -0.05 * k as f64).unwrap().curvature();
                assert!(c.a_norm2 < 1e-20);
                assert!((c.k - 1.0).abs() < 1e-12);
            }
        }
        let s = half_equator(0.8, FRAC_PI_2).unwrap();
        let f = s.boundary_frame(0, 0.3).unwrap();
        assert!((f.kappa_sigma - 1.0 / 0.8f64.tan()).abs() < 1e-10);
        assert!((f.eta - f.eta_bar.unwrap()).norm() < 1e-10);
    }

    #[test]
    fn half_clifford_geometry() {
        let s = half_clifford_torus();
        let q = QuadOptions::default();
        let a = integrate_interior(&s, &q, |_| 1.0).unwrap();
        let l = integrate_boundary(&s, &q, |_| 1.0).unwrap();
        assert!(rel(a, PI * PI) < 1e-10);
        assert!(rel(l, 2.0 * SQRT_2 * PI) < 1e-10);
        let c = s.geometry(0.3, 1.0).unwrap().curvature();
        assert!(c.h.abs() < 1e-12 && (c.a_norm2 - 2.0).abs() < 1e-12 && c.k.abs() < 1e-12);
        for l in 0..2 {
            let f = s.checked_boundary_frame(l, 0.37).unwrap();
            assert!((f.eta - f.eta_bar.unwrap()).norm() < 1e-10);
            assert!((f.a_eta_eta.abs() - 1.0).abs() < 1e-10);
            assert!(f.kappa_sigma.abs() < 1e-10);
        }
        let rep = check_boundary_curvature_identities(&s, 16).unwrap();
        assert!(rep.max_residual() < 1e-10);
        let wc = wet_consistency(&s, 16).unwrap();
        assert!(wc.max_gap < 1e-12, "{wc:?}");
    }

    #[test]
    fn clifford_and_flat() {
        let q = QuadOptions::default();
        let s = clifford_torus();
        assert!(s.is_closed());
        assert!(rel(integrate_interior(&s, &q, |_| 1.0).unwrap(), 2.0 * PI * PI) < 1e-10);
        let sq = flat_square(1.0).unwrap();
        assert!(rel(integrate_interior(&sq, &q, |_| 1.0).unwrap(), 1.0) < 1e-12);
        let d = flat_disc(1.0).unwrap();
        assert!(rel(integrate_interior(&d, &q, |_| 1.0).unwrap(), PI) < 1e-12);
        assert!(rel(integrate_boundary(&d, &q, |_| 1.0).unwrap(), 2.0 * PI) < 1e-12);
        assert!(builtin_surface("nope", &[]).is_err());
    }

    #[test]
    fn disc_in_ball_is_capillary() {
        let s = disc_in_ball(0.9, [0.2, -0.1, 0.15]).unwrap();
        let rep = check_boundary_curvature_identities(&s, 12).unwrap();
        assert!(rep.angle < 1e-9, "{rep:?}");
        assert!(rep.max_residual() < 1e-8, "{rep:?}");
        let q = QuadOptions::default();
        let s0 = disc_in_ball(0.9, [0.0; 3]).unwrap();
        let a = integrate_interior(&s0, &q, |_| 1.0).unwrap();
        assert!(rel(a, 2.0 * PI * (1.0 - 0.9f64.cos())) < 1e-10);
    }
}
