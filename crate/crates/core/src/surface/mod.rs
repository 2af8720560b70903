//! Parametric surfaces in `S³` with boundary on a spherical cap.
//!
//! A surface is a single chart over a rectangle or a disc, optional contact
//! data (the cap `B_R(o)` and the angle `γ`), and an optional wet surface
//! made of one region per boundary loop. Normal and second fundamental form
//! follow `A(X,Y) = ⟨∇̄_X ν, Y⟩ = −⟨∇̄_X Y, ν⟩`.

pub mod builtin;
pub mod mesh;
pub mod quadrature;

use std::sync::Arc;

use nalgebra::{DVector, Matrix2, Vector4};

use crate::conformal::{cap_image, Cap, MoebiusMap};
use crate::error::{Error, Result};
use crate::jet::Jet;

pub use builtin::{builtin_surface, SurfaceParams};
pub use mesh::{mesh_parametric, TriMesh};
pub use quadrature::{integrate, QuadOptions, Region};

/// Central-difference step for sampled charts.
pub const H_FD: f64 = 1e-5;

/// A map from chart parameters to `S³ ⊂ R⁴` with first and second derivatives.
pub trait Immersion: Send + Sync {
    fn eval(&self, u: f64, v: f64) -> Result<[Jet; 4]>;
}

/// Chart written against [`Jet`]; derivatives are exact.
pub struct AnalyticChart<F>(pub F);

impl<F> Immersion for AnalyticChart<F>
where
    F: Fn(Jet, Jet) -> [Jet; 4] + Send + Sync,
{
    fn eval(&self, u: f64, v: f64) -> Result<[Jet; 4]> {
        let (ju, jv) = Jet::vars(u, v);
        Ok((self.0)(ju, jv))
    }
}

/// Chart known only by values; derivatives by central differences.
pub struct SampledChart<F> {
    pub f: F,
    pub h: f64,
}

impl<F> Immersion for SampledChart<F>
where
    F: Fn(f64, f64) -> [f64; 4] + Send + Sync,
{
    fn eval(&self, u: f64, v: f64) -> Result<[Jet; 4]> {
        let h = self.h;
        let c = (self.f)(u, v);
        let up = (self.f)(u + h, v);
        let um = (self.f)(u - h, v);
        let vp = (self.f)(u, v + h);
        let vm = (self.f)(u, v - h);
        let pp = (self.f)(u + h, v + h);
        let pm = (self.f)(u + h, v - h);
        let mp = (self.f)(u - h, v + h);
        let mm = (self.f)(u - h, v - h);
        Ok(std::array::from_fn(|i| Jet {
            v: c[i],
            d: [(up[i] - um[i]) / (2.0 * h), (vp[i] - vm[i]) / (2.0 * h)],
            h: [
                (up[i] - 2.0 * c[i] + um[i]) / (h * h),
                (pp[i] - pm[i] - mp[i] + mm[i]) / (4.0 * h * h),
                (vp[i] - 2.0 * c[i] + vm[i]) / (h * h),
            ],
        }))
    }
}

/// A Möbius map applied to a base chart; derivatives stay exact.
pub struct PushedChart {
    pub map: MoebiusMap,
    pub base: Arc<dyn Immersion>,
}

impl Immersion for PushedChart {
    fn eval(&self, u: f64, v: f64) -> Result<[Jet; 4]> {
        let b = self.base.eval(u, v)?;
        let out = self.map.apply_generic(&b);
        Ok([out[0], out[1], out[2], out[3]])
    }
}

/// `ε ν` of a base chart. First derivatives come from the Weingarten
/// equation; second derivatives by central differences of those.
pub struct GaussChart {
    pub base: Arc<dyn Immersion>,
    pub orientation: f64,
    pub epsilon: f64,
    pub h: f64,
}

impl GaussChart {
    fn first(&self, u: f64, v: f64) -> Result<(Vector4<f64>, [Vector4<f64>; 2])> {
        let jets = self.base.eval(u, v)?;
        let g = LocalGeometry::from_jets(&jets, self.orientation)?;
        let s = g.shape_operator();
        let xs = [g.xu, g.xv];
        let d = std::array::from_fn(|i| (xs[0] * s[(0, i)] + xs[1] * s[(1, i)]) * self.epsilon);
        Ok((g.nu * self.epsilon, d))
    }
}

impl Immersion for GaussChart {
    fn eval(&self, u: f64, v: f64) -> Result<[Jet; 4]> {
        let h = self.h;
        let (n, d) = self.first(u, v)?;
        let (_, du_p) = self.first(u + h, v)?;
        let (_, du_m) = self.first(u - h, v)?;
        let (_, dv_p) = self.first(u, v + h)?;
        let (_, dv_m) = self.first(u, v - h)?;
        Ok(std::array::from_fn(|i| {
            let huu = (du_p[0][i] - du_m[0][i]) / (2.0 * h);
            let huv = 0.5 * ((du_p[1][i] - du_m[1][i]) + (dv_p[0][i] - dv_m[0][i])) / (2.0 * h);
            let hvv = (dv_p[1][i] - dv_m[1][i]) / (2.0 * h);
            Jet { v: n[i], d: [d[0][i], d[1][i]], h: [huu, huv, hvv] }
        }))
    }
}

/// Parameter domain of a chart.
#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    Rect { u: (f64, f64), v: (f64, f64), periodic_u: bool, periodic_v: bool },
    Disc { radius: f64 },
}

impl Domain {
    pub fn contains(&self, u: f64, v: f64) -> bool {
        let eps = 1e-12;
        match *self {
            Domain::Rect { u: (u0, u1), v: (v0, v1), periodic_u, periodic_v } => {
                (periodic_u || (u >= u0 - eps && u <= u1 + eps)) && (periodic_v || (v >= v0 - eps && v <= v1 + eps))
            }
            Domain::Disc { radius } => u * u + v * v <= radius * radius * (1.0 + eps),
        }
    }

    /// Boundary loops traversed counter-clockwise in the parameter plane.
    pub fn boundary_loops(&self) -> Vec<BoundaryLoop> {
        match *self {
            Domain::Disc { radius } => vec![BoundaryLoop { segments: vec![Segment::Circle { radius }] }],
            Domain::Rect { u: (u0, u1), v: (v0, v1), periodic_u, periodic_v } => {
                let line = |a: [f64; 2], b: [f64; 2]| Segment::Line { a, b };
                match (periodic_u, periodic_v) {
                    (true, true) => vec![],
                    (false, true) => vec![
                        BoundaryLoop { segments: vec![line([u0, v1], [u0, v0])] },
                        BoundaryLoop { segments: vec![line([u1, v0], [u1, v1])] },
                    ],
                    (true, false) => vec![
                        BoundaryLoop { segments: vec![line([u0, v0], [u1, v0])] },
                        BoundaryLoop { segments: vec![line([u1, v1], [u0, v1])] },
                    ],
                    (false, false) => vec![BoundaryLoop {
                        segments: vec![
                            line([u0, v0], [u1, v0]),
                            line([u1, v0], [u1, v1]),
                            line([u1, v1], [u0, v1]),
                            line([u0, v1], [u0, v0]),
                        ],
                    }],
                }
            }
        }
    }
}

/// Piece of a boundary loop in parameter space.
#[derive(Clone, Debug, PartialEq)]
pub enum Segment {
    Line {
        a: [f64; 2],
        b: [f64; 2],
    },
    /// Full counter-clockwise circle about the origin starting on the positive `u` axis.
    Circle {
        radius: f64,
    },
}

impl Segment {
    fn eval(&self, s: f64) -> ([f64; 2], [f64; 2]) {
        match *self {
            Segment::Line { a, b } => {
                let d = [b[0] - a[0], b[1] - a[1]];
                ([a[0] + s * d[0], a[1] + s * d[1]], d)
            }
            Segment::Circle { radius } => {
                let th = 2.0 * std::f64::consts::PI * s;
                let k = 2.0 * std::f64::consts::PI * radius;
                ([radius * th.cos(), radius * th.sin()], [-k * th.sin(), k * th.cos()])
            }
        }
    }
}

/// A closed boundary curve `τ ∈ [0, 1) ↦ (u, v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryLoop {
    pub segments: Vec<Segment>,
}

impl BoundaryLoop {
    /// Parameter point and its `τ`-derivative.
    pub fn eval(&self, tau: f64) -> ([f64; 2], [f64; 2]) {
        let n = self.segments.len();
        let t = tau.rem_euclid(1.0) * n as f64;
        let k = (t.floor() as usize).min(n - 1);
        let (p, d) = self.segments[k].eval(t - k as f64);
        (p, [d[0] * n as f64, d[1] * n as f64])
    }
}

/// Contact data: the barrier cap and the declared angle.
#[derive(Clone, Debug, PartialEq)]
pub struct Contact {
    pub cap: Cap,
    pub gamma: f64,
}

/// One component of the wet surface, bounding boundary loop `loop_id` of `Σ`.
///
/// The region's own boundary loop 0 is aligned with the surface loop at equal `τ`.
#[derive(Clone)]
pub struct WetRegion {
    pub surface: ParametricSurface,
    pub loop_id: usize,
}

/// A parametric surface with optional contact and wet-surface data.
#[derive(Clone)]
pub struct ParametricSurface {
    pub name: String,
    pub chart: Arc<dyn Immersion>,
    pub domain: Domain,
    pub contact: Option<Contact>,
    pub wet: Vec<WetRegion>,
    /// `±1`, multiplies the cross-product normal.
    pub orientation: f64,
    /// Declared metadata: the surface is invariant under a rotation family.
    pub rotationally_symmetric: bool,
    /// Declared metadata: the surface is minimal.
    pub minimal: bool,
}

impl std::fmt::Debug for ParametricSurface {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParametricSurface")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("contact", &self.contact)
            .field("wet_regions", &self.wet.len())
            .finish()
    }
}

fn jets_to(j: &[Jet; 4], f: impl Fn(&Jet) -> f64) -> Vector4<f64> {
    Vector4::new(f(&j[0]), f(&j[1]), f(&j[2]), f(&j[3]))
}

/// The generalised cross product of three vectors in `R⁴`.
pub fn cross4(a: &Vector4<f64>, b: &Vector4<f64>, c: &Vector4<f64>) -> Vector4<f64> {
    let det3 = |i: usize, j: usize, k: usize| {
        a[i] * (b[j] * c[k] - b[k] * c[j]) - a[j] * (b[i] * c[k] - b[k] * c[i]) + a[k] * (b[i] * c[j] - b[j] * c[i])
    };
    Vector4::new(det3(1, 2, 3), -det3(0, 2, 3), det3(0, 1, 3), -det3(0, 1, 2))
}

/// Position, derivatives, normal and fundamental forms at a chart point.
#[derive(Clone, Debug)]
pub struct LocalGeometry {
    pub x: Vector4<f64>,
    pub xu: Vector4<f64>,
    pub xv: Vector4<f64>,
    pub xuu: Vector4<f64>,
    pub xuv: Vector4<f64>,
    pub xvv: Vector4<f64>,
    pub nu: Vector4<f64>,
    pub g: Matrix2<f64>,
    pub a: Matrix2<f64>,
}

impl LocalGeometry {
    pub fn from_jets(j: &[Jet; 4], orientation: f64) -> Result<Self> {
        let x = jets_to(j, |t| t.v);
        let xu = jets_to(j, |t| t.d[0]);
        let xv = jets_to(j, |t| t.d[1]);
        let xuu = jets_to(j, |t| t.h[0]);
        let xuv = jets_to(j, |t| t.h[1]);
        let xvv = jets_to(j, |t| t.h[2]);
        let g = Matrix2::new(xu.dot(&xu), xu.dot(&xv), xu.dot(&xv), xv.dot(&xv));
        let det = g.determinant();
        if !(det > 1e-10 * (1.0 + g.trace() * g.trace())) {
            return Err(Error::Degenerate(format!("first fundamental form det {det:e}")));
        }
        let n = cross4(&x, &xu, &xv);
        let nn = n.norm();
        if !(nn > 0.0) {
            return Err(Error::Degenerate("normal vanishes".into()));
        }
        let nu = n * (orientation / nn);
        let a = Matrix2::new(-xuu.dot(&nu), -xuv.dot(&nu), -xuv.dot(&nu), -xvv.dot(&nu));
        Ok(LocalGeometry { x, xu, xv, xuu, xuv, xvv, nu, g, a })
    }

    /// `g⁻¹ A`, the matrix of the shape operator in the coordinate frame.
    pub fn shape_operator(&self) -> Matrix2<f64> {
        self.g.try_inverse().unwrap_or_else(Matrix2::zeros) * self.a
    }

    pub fn sqrt_det_g(&self) -> f64 {
        self.g.determinant().sqrt()
    }

    /// Tangent vector `x_u X_0 + x_v X_1`.
    pub fn push(&self, xi: [f64; 2]) -> Vector4<f64> {
        self.xu * xi[0] + self.xv * xi[1]
    }

    /// `A(X, Y)` for parameter-space vectors.
    pub fn second_form(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        let xv = nalgebra::Vector2::new(x[0], x[1]);
        let yv = nalgebra::Vector2::new(y[0], y[1]);
        xv.dot(&(self.a * yv))
    }

    /// Parameter-space vector whose pushforward is the tangential part of `w`.
    pub fn pull(&self, w: &Vector4<f64>) -> [f64; 2] {
        let rhs = nalgebra::Vector2::new(self.xu.dot(w), self.xv.dot(w));
        let s = self.g.try_inverse().unwrap_or_else(Matrix2::zeros) * rhs;
        [s[0], s[1]]
    }

    pub fn curvature(&self) -> CurvaturePack {
        let s = self.shape_operator();
        let h = s.trace();
        let a2 = (s * s).trace();
        CurvaturePack {
            g: self.g,
            a: self.a,
            h,
            a_norm2: a2,
            traceless_norm2: a2 - 0.5 * h * h,
            k: 1.0 + s.determinant(),
            x: self.x,
            nu: self.nu,
            sqrt_det_g: self.sqrt_det_g(),
        }
    }
}

/// Curvature data at a parameter point.
#[derive(Clone, Debug)]
pub struct CurvaturePack {
    pub g: Matrix2<f64>,
    pub a: Matrix2<f64>,
    /// Mean curvature `tr_g A`.
    pub h: f64,
    /// `|A|²`.
    pub a_norm2: f64,
    /// `|Å|² = |A|² − H²/2`.
    pub traceless_norm2: f64,
    /// Gauss curvature `1 + det_g A`.
    pub k: f64,
    pub x: Vector4<f64>,
    pub nu: Vector4<f64>,
    pub sqrt_det_g: f64,
}

/// Orthonormal frames along the boundary and the curvature data they carry.
#[derive(Clone, Debug)]
pub struct BoundaryFrame {
    pub loop_id: usize,
    pub tau: f64,
    pub uv: [f64; 2],
    pub x: Vector4<f64>,
    /// Unit tangent of `∂Σ` in the loop direction.
    pub tangent: Vector4<f64>,
    /// `|dx/dτ|`.
    pub speed: f64,
    pub eta: Vector4<f64>,
    pub nu: Vector4<f64>,
    pub eta_bar: Option<Vector4<f64>>,
    pub nu_bar: Option<Vector4<f64>>,
    pub gamma_measured: Option<f64>,
    /// Curvature vector of `∂Σ` in `S³`.
    pub curvature: Vector4<f64>,
    /// `A(η, η)`.
    pub a_eta_eta: f64,
    /// `A(T, T)`.
    pub a_tt: f64,
    /// Mean curvature `H` of `Σ` at the point.
    pub h: f64,
    /// Geodesic curvature `h^η(T,T)` of `∂Σ` in `Σ`.
    pub kappa_sigma: f64,
    /// `h^ν̄(T,T)` of `∂Σ` in the barrier.
    pub kappa_barrier: Option<f64>,
    /// Outward parameter-space conormal.
    pub eta_param: [f64; 2],
}

impl ParametricSurface {
    pub fn geometry(&self, u: f64, v: f64) -> Result<LocalGeometry> {
        LocalGeometry::from_jets(&self.chart.eval(u, v)?, self.orientation)
    }

    pub fn point(&self, u: f64, v: f64) -> Result<Vector4<f64>> {
        let j = self.chart.eval(u, v)?;
        Ok(jets_to(&j, |t| t.v))
    }

    pub fn loops(&self) -> Vec<BoundaryLoop> {
        self.domain.boundary_loops()
    }

    pub fn is_closed(&self) -> bool {
        self.loops().is_empty()
    }

    pub fn radius(&self) -> Option<f64> {
        self.contact.as_ref().map(|c| c.cap.radius())
    }

    pub fn gamma(&self) -> Option<f64> {
        self.contact.as_ref().map(|c| c.gamma)
    }

    /// Boundary frame at loop parameter `τ`.
    pub fn boundary_frame(&self, loop_id: usize, tau: f64) -> Result<BoundaryFrame> {
        let loops = self.loops();
        let lp = loops.get(loop_id).ok_or_else(|| Error::Domain(format!("no boundary loop {loop_id}")))?;
        let (uv, d) = lp.eval(tau);
        let geo = self.geometry(uv[0], uv[1])?;
        let c1 = geo.push(d);
        let speed = c1.norm();
        let t = c1 / speed;
        // Outward normal in the parameter plane for counter-clockwise loops.
        let out = [d[1], -d[0]];
        let w = geo.push(out);
        let eta_raw = w - t * t.dot(&w);
        let eta = eta_raw / eta_raw.norm();
        let nu = geo.nu;
        // c'' = x_ij d^i d^j (loop segments are affine or circular in τ).
        let (_, d2) = second_param_derivative(lp, tau);
        let c2 = geo.xuu * (d[0] * d[0]) + geo.xuv * (2.0 * d[0] * d[1]) + geo.xvv * (d[1] * d[1]) + geo.push(d2);
        let mut kv = c2 / (speed * speed);
        let x = geo.x;
        kv -= x * kv.dot(&x);
        kv -= t * kv.dot(&t);
        let eta_p = geo.pull(&eta);
        let t_p = geo.pull(&t);
        let a_ee = geo.second_form(eta_p, eta_p);
        let a_tt = geo.second_form(t_p, t_p);
        let h = geo.shape_operator().trace();
        let mut frame = BoundaryFrame {
            loop_id,
            tau,
            uv,
            x,
            tangent: t,
            speed,
            eta,
            nu,
            eta_bar: None,
            nu_bar: None,
            gamma_measured: None,
            curvature: kv,
            a_eta_eta: a_ee,
            a_tt,
            h,
            kappa_sigma: -kv.dot(&eta),
            kappa_barrier: None,
            eta_param: eta_p,
        };
        if let Some(c) = &self.contact {
            let o = c.cap.center().coords();
            let o4 = Vector4::new(o[0], o[1], o[2], o[3]);
            let eb = (o4 - x * x.dot(&o4)) * (-1.0 / c.cap.radius().sin());
            let gm = eta.dot(&eb).atan2(nu.dot(&eb));
            let nb = nu * gm.sin() - eta * gm.cos();
            frame.kappa_barrier = Some(-kv.dot(&nb));
            frame.eta_bar = Some(eb);
            frame.nu_bar = Some(nb);
            frame.gamma_measured = Some(gm);
        }
        Ok(frame)
    }

    /// Boundary frame that also enforces the declared contact angle.
    pub fn checked_boundary_frame(&self, loop_id: usize, tau: f64) -> Result<BoundaryFrame> {
        let f = self.boundary_frame(loop_id, tau)?;
        if let (Some(c), Some(gm)) = (&self.contact, f.gamma_measured) {
            if (gm - c.gamma).abs() > 1e-4 {
                return Err(Error::Inconsistent(format!(
                    "contact angle {gm} at loop {loop_id}, τ = {tau} differs from declared {}",
                    c.gamma
                )));
            }
        }
        Ok(f)
    }

    /// Image under a Möbius map; the cap and wet regions are carried along.
    pub fn pushforward(&self, map: &MoebiusMap) -> Result<ParametricSurface> {
        let contact = match &self.contact {
            Some(c) => Some(Contact { cap: cap_image(map, &c.cap)?, gamma: c.gamma }),
            None => None,
        };
        let wet = self
            .wet
            .iter()
            .map(|w| Ok(WetRegion { surface: w.surface.pushforward(map)?, loop_id: w.loop_id }))
            .collect::<Result<Vec<_>>>()?;
        Ok(ParametricSurface {
            name: format!("{}*", self.name),
            chart: Arc::new(PushedChart { map: map.clone(), base: self.chart.clone() }),
            domain: self.domain.clone(),
            contact,
            wet,
            orientation: self.orientation,
            rotationally_symmetric: self.rotationally_symmetric,
            minimal: false,
        })
    }

    /// Wet-region point aligned with boundary loop `loop_id` at `τ`.
    pub fn wet_boundary_point(&self, region: usize, tau: f64) -> Result<Vector4<f64>> {
        let w = &self.wet[region];
        let lp = &w.surface.loops()[0];
        let (uv, _) = lp.eval(tau);
        w.surface.point(uv[0], uv[1])
    }

    /// Outward conormal of the wet region's boundary, at `τ`.
    pub fn wet_conormal(&self, region: usize, tau: f64) -> Result<Vector4<f64>> {
        let f = self.wet[region].surface.boundary_frame(0, tau)?;
        Ok(f.eta)
    }
}

fn second_param_derivative(lp: &BoundaryLoop, tau: f64) -> ([f64; 2], [f64; 2]) {
    let n = lp.segments.len() as f64;
    let t = tau.rem_euclid(1.0) * n;
    let k = (t.floor() as usize).min(lp.segments.len() - 1);
    match lp.segments[k] {
        Segment::Line { .. } => ([0.0; 2], [0.0; 2]),
        Segment::Circle { radius } => {
            let th = 2.0 * std::f64::consts::PI * (t - k as f64);
            let k2 = (2.0 * std::f64::consts::PI * n).powi(2) * radius;
            ([0.0; 2], [-k2 * th.cos(), -k2 * th.sin()])
        }
    }
}

/// Residuals of the boundary curvature identities at sampled boundary points.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundaryIdentityReport {
    pub samples: usize,
    /// `k_S(T,T) − cos γ A(T,T) − sin γ h^η(T,T)`.
    pub first: f64,
    /// `A(T,T) − cos γ k_S(T,T) − sin γ h^ν̄(T,T)`.
    pub second: f64,
    /// Both equalities of the three-way corollary.
    pub corollary: f64,
    /// Largest `|γ_measured − γ|`.
    pub angle: f64,
    /// Largest balance defect `|sin γ η̄ − η − cos γ ν̄|`.
    pub balance: f64,
    pub max_kappa_sigma: f64,
    pub min_kappa_sigma: f64,
}

impl BoundaryIdentityReport {
    pub fn max_residual(&self) -> f64 {
        self.first.max(self.second).max(self.corollary)
    }
}

/// Evaluate the traced boundary curvature identities at `samples` points per loop.
pub fn check_boundary_curvature_identities(s: &ParametricSurface, samples: usize) -> Result<BoundaryIdentityReport> {
    let c = s.contact.as_ref().ok_or_else(|| Error::Domain("surface has no contact data".into()))?;
    let cot_r = 1.0 / c.cap.radius().tan();
    let gam = c.gamma;
    let (sg, cg) = gam.sin_cos();
    let mut rep = BoundaryIdentityReport {
        min_kappa_sigma: f64::INFINITY,
        max_kappa_sigma: f64::NEG_INFINITY,
        ..Default::default()
    };
    for l in 0..s.loops().len() {
        for k in 0..samples {
            let tau = (k as f64 + 0.5) / samples as f64;
            let f = s.boundary_frame(l, tau)?;
            let eb = f.eta_bar.unwrap();
            let nb = f.nu_bar.unwrap();
            let k_tt = -f.curvature.dot(&eb);
            let hs = f.kappa_barrier.unwrap();
            let first = k_tt - cg * f.a_tt - sg * f.kappa_sigma;
            let second = f.a_tt - cg * k_tt - sg * hs;
            // H − A(η,η) = A(T,T) in two dimensions; H^S − k_S(ν̄,ν̄) = cot R.
            let lhs = cot_r - cg * (f.h - f.a_eta_eta) - sg * f.kappa_sigma;
            let cor_a = cg * (f.h - f.a_eta_eta) - (cot_r - sg * f.kappa_sigma);
            let cor_b = (cot_r / sg - f.kappa_sigma) - (cg * cg / sg * cot_r + cg * hs);
            let cor_b = if sg > 1e-12 { cor_b * sg } else { 0.0 };
            rep.first = rep.first.max(first.abs()).max(lhs.abs());
            rep.second = rep.second.max(second.abs());
            rep.corollary = rep.corollary.max(cor_a.abs()).max(cor_b.abs());
            rep.angle = rep.angle.max((f.gamma_measured.unwrap() - gam).abs());
            rep.balance = rep.balance.max((eb * sg - f.eta - nb * cg).norm());
            rep.max_kappa_sigma = rep.max_kappa_sigma.max(f.kappa_sigma);
            rep.min_kappa_sigma = rep.min_kappa_sigma.min(f.kappa_sigma);
            rep.samples += 1;
        }
    }
    Ok(rep)
}

/// Compare `Σ`'s boundary with each wet region's boundary and check the balance law there.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WetConsistency {
    pub max_gap: f64,
    pub max_balance: f64,
}

pub fn wet_consistency(s: &ParametricSurface, samples: usize) -> Result<WetConsistency> {
    let c = s.contact.as_ref().ok_or_else(|| Error::Domain("surface has no contact data".into()))?;
    let (sg, cg) = c.gamma.sin_cos();
    let mut out = WetConsistency::default();
    for (r, w) in s.wet.iter().enumerate() {
        for k in 0..samples {
            let tau = (k as f64 + 0.5) / samples as f64;
            let f = s.boundary_frame(w.loop_id, tau)?;
            let p = s.wet_boundary_point(r, tau)?;
            out.max_gap = out.max_gap.max((p - f.x).norm());
            let nb = s.wet_conormal(r, tau)?;
            let eb = f.eta_bar.unwrap();
            out.max_balance = out.max_balance.max((eb * sg - f.eta - nb * cg).norm());
        }
    }
    Ok(out)
}

/// Convert a length-4 `DVector` to `Vector4`.
pub fn to_v4(v: &DVector<f64>) -> Vector4<f64> {
    Vector4::new(v[0], v[1], v[2], v[3])
}

/// Convert a `Vector4` to a `DVector`.
pub fn from_v4(v: &Vector4<f64>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Real;

    #[test]
    fn cross_product_is_orthogonal() {
        let a = Vector4::new(1.0, 0.2, -0.3, 0.5);
        let b = Vector4::new(0.1, 1.0, 0.4, -0.2);
        let c = Vector4::new(-0.3, 0.2, 1.0, 0.7);
        let n = cross4(&a, &b, &c);
        assert!(n.dot(&a).abs() < 1e-14);
        assert!(n.dot(&b).abs() < 1e-14);
        assert!(n.dot(&c).abs() < 1e-14);
        let e = |i| {
            let mut v = Vector4::zeros();
            v[i] = 1.0;
            v
        };
        assert_eq!(cross4(&e(0), &e(1), &e(2)), -e(3));
    }

    #[test]
    fn sampled_matches_analytic() {
        let analytic = AnalyticChart(|u: Jet, v: Jet| {
            let r = std::f64::consts::FRAC_1_SQRT_2;
            [u.cos().scale(r), u.sin().scale(r), v.cos().scale(r), v.sin().scale(r)]
        });
        let sampled = SampledChart {
            f: |u: f64, v: f64| {
                let r = std::f64::consts::FRAC_1_SQRT_2;
                [r * u.cos(), r * u.sin(), r * v.cos(), r * v.sin()]
            },
            h: H_FD,
        };
        let a = analytic.eval(0.3, 1.1).unwrap();
        let s = sampled.eval(0.3, 1.1).unwrap();
        for i in 0..4 {
            assert!((a[i].d[0] - s[i].d[0]).abs() < 1e-9);
            assert!((a[i].h[0] - s[i].h[0]).abs() < 1e-4);
            assert!((a[i].h[1] - s[i].h[1]).abs() < 1e-4);
        }
    }

    #[test]
    fn loops_are_ccw() {
        let d = Domain::Rect { u: (0.0, 1.0), v: (0.0, 2.0), periodic_u: false, periodic_v: true };
        let loops = d.boundary_loops();
        assert_eq!(loops.len(), 2);
        let (p, dp) = loops[0].eval(0.25);
        assert_eq!(p[0], 0.0);
        assert!(dp[1] < 0.0);
        let (p, dp) = loops[1].eval(0.25);
        assert_eq!(p[0], 1.0);
        assert!(dp[1] > 0.0);
        let disc = Domain::Disc { radius: 1.0 };
        let (p, dp) = disc.boundary_loops()[0].eval(0.0);
        assert_eq!(p, [1.0, 0.0]);
        assert!(dp[1] > 0.0);
    }
}
