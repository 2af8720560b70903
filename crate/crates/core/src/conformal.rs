//! The conformal group of the round sphere and of its geodesic caps.
//!
//! Points of `S^n` are unit vectors in `R^{n+1}` with `e_0` the distinguished
//! pole. A [`MoebiusMap`] is stored as `rotation ∘ Φ_y` where `Φ_y` is the
//! fractional-linear map of the unit ball with `Φ_y(0) = y`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{dot, Real};

const UNIT_TOL: f64 = 1e-12;

/// A point of the unit sphere `S^n ⊂ R^{n+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpherePoint(DVector<f64>);

impl SpherePoint {
    /// Wrap a vector that is already of unit length.
    pub fn new(coords: DVector<f64>) -> Result<Self> {
        let n = coords.norm();
        if (n - 1.0).abs() > UNIT_TOL * 100.0 {
            return Err(Error::Domain(format!("point has norm {n}, expected 1")));
        }
        Ok(SpherePoint(coords))
    }

    /// Normalise an arbitrary nonzero vector onto the sphere.
    pub fn normalize(coords: DVector<f64>) -> Result<Self> {
        let n = coords.norm();
        if !(n > 1e-300) || !n.is_finite() {
            return Err(Error::Degenerate("cannot normalise a zero vector".into()));
        }
        Ok(SpherePoint(coords / n))
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(x))
    }

    /// The basis vector `e_i` of `R^{dim}`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[i] = 1.0;
        SpherePoint(v)
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    /// Ambient dimension `n + 1`.
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Geodesic distance on the sphere.
    pub fn distance(&self, other: &SpherePoint) -> f64 {
        let c = self.0.dot(&other.0);
        let s = (&self.0 - &other.0 * c).norm();
        s.atan2(c)
    }
}

/// `rotation ∘ Φ_y` for a rotation in `SO(n+1)` and `|y| < 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct MoebiusMap {
    rotation: DMatrix<f64>,
    y: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct MoebiusRepr {
    rotation: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Serialize for MoebiusMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.dim();
        let rotation = (0..n).map(|i| (0..n).map(|j| self.rotation[(i, j)]).collect()).collect();
        MoebiusRepr { rotation, y: self.y.iter().copied().collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MoebiusMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = MoebiusRepr::deserialize(d)?;
        let n = r.y.len();
        if r.rotation.len() != n || r.rotation.iter().any(|row| row.len() != n) {
            return Err(serde::de::Error::custom("rotation must be square and match y"));
        }
        let rot = DMatrix::from_fn(n, n, |i, j| r.rotation[i][j]);
        MoebiusMap::new(rot, DVector::from_vec(r.y)).map_err(serde::de::Error::custom)
    }
}

/// `Φ_y(x)` on the closed unit ball, generic over the scalar type.
pub fn phi<T: Real>(y: &[f64], x: &[T]) -> Vec<T> {
    let yy: f64 = y.iter().map(|v| v * v).sum();
    let xy = x.iter().zip(y).fold(T::cst(0.0), |acc, (&xi, &yi)| acc + xi.scale(yi));
    let xx = dot(x, x);
    let one = T::cst(1.0);
    let num_y = one + xy.scale(2.0) + xx;
    let den = one + xy.scale(2.0) + xx.scale(yy);
    let inv = T::cst(1.0) / den;
    x.iter().zip(y).map(|(&xi, &yi)| (xi.scale(1.0 - yy) + num_y.scale(yi)) * inv).collect()
}

impl MoebiusMap {
    pub fn new(rotation: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let n = y.len();
        if rotation.nrows() != n || rotation.ncols() != n {
            return Err(Error::Domain("rotation size does not match y".into()));
        }
        let ortho = (rotation.transpose() * &rotation - DMatrix::identity(n, n)).amax();
        if ortho > 1e-10 {
            return Err(Error::Domain(format!("rotation not orthogonal (defect {ortho:e})")));
        }
        if rotation.determinant() < 0.0 {
            return Err(Error::Domain("rotation has determinant -1".into()));
        }
        if y.norm() >= 1.0 {
            return Err(Error::Domain(format!("|y| = {} must be < 1", y.norm())));
        }
        Ok(MoebiusMap { rotation, y })
    }

    pub fn identity(dim: usize) -> Self {
        MoebiusMap { rotation: DMatrix::identity(dim, dim), y: DVector::zeros(dim) }
    }

    /// Pure translation `Φ_y`.
    pub fn translation(y: DVector<f64>) -> Result<Self> {
        let n = y.len();
        Self::new(DMatrix::identity(n, n), y)
    }

    /// Pure rotation.
    pub fn rotation_only(rotation: DMatrix<f64>) -> Result<Self> {
        let n = rotation.nrows();
        Self::new(rotation, DVector::zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Apply to a point of the closed ball with arbitrary scalar type.
    pub fn apply_generic<T: Real>(&self, x: &[T]) -> Vec<T> {
        let p = phi(self.y.as_slice(), x);
        let n = self.dim();
        (0..n)
            .map(|i| {
                (0..n).fold(T::cst(0.0), |acc, j| {
                    let r = self.rotation[(i, j)];
                    if r == 0.0 {
                        acc
                    } else {
                        acc + p[j].scale(r)
                    }
                })
            })
            .collect()
    }

    /// Apply to a point of the closed ball.
    pub fn apply_ball(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let yy = self.y.norm_squared();
        let den = 1.0 + 2.0 * x.dot(&self.y) + x.norm_squared() * yy;
        if den < 1e-14 {
            return Err(Error::Degenerate(format!("Möbius denominator {den:e}")));
        }
        Ok(DVector::from_vec(self.apply_generic(x.as_slice())))
    }

    /// Row-major flat copy of the rotation.
    pub fn rotation_rows(&self) -> Vec<f64> {
        let n = self.dim();
        (0..n * n).map(|k| self.rotation[(k / n, k % n)]).collect()
    }
}

/// `rotation ∘ Φ_y(x)` for a point of the sphere.
pub fn moebius_apply(map: &MoebiusMap, x: &SpherePoint) -> Result<SpherePoint> {
    if x.dim() != map.dim() {
        return Err(Error::Domain("dimension mismatch".into()));
    }
    let out = map.apply_ball(x.coords())?;
    // Renormalise away rounding; the map preserves the sphere exactly.
    SpherePoint::normalize(out)
}

/// Inverse of `Θ ∘ Φ_y`, which is `Θᵀ ∘ Φ_{-Θy}` by equivariance.
pub fn moebius_inverse(map: &MoebiusMap) -> MoebiusMap {
    let rt = map.rotation.transpose();
    let y = -(&map.rotation * &map.y);
    MoebiusMap { rotation: rt, y }
}

/// Nearest rotation in Frobenius norm, via the polar decomposition.
fn nearest_rotation(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = m.clone().svd(true, true);
    let s = &svd.singular_values;
    let smax = s.max();
    let smin = s.min();
    if !(smin > 0.0) || smax / smin > 1e12 {
        return Err(Error::Numeric(format!("frame fit ill-conditioned (condition number {:e})", smax / smin)));
    }
    let u = svd.u.ok_or_else(|| Error::Numeric("SVD failed".into()))?;
    let vt = svd.v_t.ok_or_else(|| Error::Numeric("SVD failed".into()))?;
    Ok(u * vt)
}

/// Recover `(Θ, y)` from a map known only pointwise.
///
/// Writing `h = Θ ∘ Φ_y = Φ_{Θy} ∘ Θ`, the image of the origin is `w = Θy`
/// and `Φ_{-w} ∘ h` is linear; its values on `0, e_0, …, e_n` give `Θ`.
pub fn fit_from_frame(dim: usize, h: impl Fn(&DVector<f64>) -> Result<DVector<f64>>) -> Result<MoebiusMap> {
    let w = h(&DVector::zeros(dim))?;
    if w.norm() >= 1.0 {
        return Err(Error::Numeric("fitted translation left the ball".into()));
    }
    let back = MoebiusMap { rotation: DMatrix::identity(dim, dim), y: -&w };
    let mut cols = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let mut e = DVector::zeros(dim);
        e[i] = 1.0;
        let img = back.apply_ball(&h(&e)?)?;
        cols.set_column(i, &img);
    }
    let rotation = nearest_rotation(&cols)?;
    let y = rotation.transpose() * w;
    MoebiusMap::new(rotation, y)
}

/// `f ∘ g`, computed by frame fitting.
pub fn moebius_compose(f: &MoebiusMap, g: &MoebiusMap) -> Result<MoebiusMap> {
    if f.dim() != g.dim() {
        return Err(Error::Domain("dimension mismatch".into()));
    }
    fit_from_frame(f.dim(), |x| f.apply_ball(&g.apply_ball(x)?))
}

/// Linear scale factor `e^φ = (1−|y|²)/(1+2⟨x,y⟩+|x|²|y|²)` of the map at `x`.
pub fn conformal_factor(map: &MoebiusMap, x: &DVector<f64>) -> f64 {
    let yy = map.y.norm_squared();
    (1.0 - yy) / (1.0 + 2.0 * x.dot(&map.y) + x.norm_squared() * yy)
}

/// Euclidean gradient of `log e^φ` at `x`.
pub fn log_conformal_factor_gradient(map: &MoebiusMap, x: &DVector<f64>) -> DVector<f64> {
    let yy = map.y.norm_squared();
    let den = 1.0 + 2.0 * x.dot(&map.y) + x.norm_squared() * yy;
    -(&map.y * 2.0 + x * (2.0 * yy)) / den
}

/// A geodesic ball `B_R(o)` in `S^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cap {
    center: SpherePoint,
    radius: f64,
}

impl Cap {
    pub fn new(center: SpherePoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius < std::f64::consts::PI) {
            return Err(Error::Domain(format!("cap radius {radius} outside (0, π)")));
        }
        Ok(Cap { center, radius })
    }

    /// `B_R(e_0)` in `S^{dim-1}`.
    pub fn polar(dim: usize, radius: f64) -> Result<Self> {
        Self::new(SpherePoint::basis(dim, 0), radius)
    }

    pub fn center(&self) -> &SpherePoint {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    /// Signed height of `x` above the boundary hyperplane, `⟨x,o⟩ − cos R`.
    pub fn level(&self, x: &DVector<f64>) -> f64 {
        x.dot(self.center.coords()) - self.radius.cos()
    }

    /// Outward unit normal `η̄ = −csc R · V_o(x)` of the boundary sphere at `x`.
    pub fn outward_normal(&self, x: &DVector<f64>) -> DVector<f64> {
        let o = self.center.coords();
        let v = o - x * x.dot(o);
        v * (-1.0 / self.radius.sin())
    }

    /// `2n` boundary points along an orthonormal frame of `T_o S^n`.
    pub fn boundary_frame_points(&self) -> Vec<DVector<f64>> {
        let o = self.center.coords();
        let tangents = orthonormal_complement(o);
        let (s, c) = self.radius.sin_cos();
        let mut pts = Vec::with_capacity(2 * tangents.len());
        for t in &tangents {
            pts.push(o * c + t * s);
            pts.push(o * c - t * s);
        }
        pts
    }
}

/// `s_R = tan((π/2 − R)/2)`, the translation parameter that moves the hemisphere onto `B_R(e_0)`.
pub fn s_r(radius: f64) -> f64 {
    ((std::f64::consts::FRAC_PI_2 - radius) / 2.0).tan()
}

/// An orthonormal basis of the orthogonal complement of a unit vector.
pub fn orthonormal_complement(o: &DVector<f64>) -> Vec<DVector<f64>> {
    let n = o.len();
    let mut basis: Vec<DVector<f64>> = vec![o.clone()];
    let mut out = Vec::with_capacity(n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    // Try the coordinate axes least aligned with o first.
    order.sort_by(|&a, &b| o[a].abs().partial_cmp(&o[b].abs()).unwrap().then(a.cmp(&b)));
    for i in order {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let c = v.dot(b);
                v -= b * c;
            }
        }
        let nv = v.norm();
        if nv > 1e-6 {
            v /= nv;
            basis.push(v.clone());
            out.push(v);
        }
        if out.len() == n - 1 {
            break;
        }
    }
    out
}

/// Recover the cap bounded by a set of points on a round `(n−1)`-sphere,
/// with interior orientation fixed by `inside`.
pub fn cap_from_boundary(points: &[DVector<f64>], inside: &DVector<f64>) -> Result<Cap> {
    let n = inside.len();
    let k = points.len();
    if k < n {
        return Err(Error::Domain("not enough boundary points to fit a cap".into()));
    }
    let mean = points.iter().fold(DVector::zeros(n), |acc, p| acc + p) / k as f64;
    let mut rows = DMatrix::zeros(k, n);
    for (i, p) in points.iter().enumerate() {
        rows.set_row(i, &(p - &mean).transpose());
    }
    let svd = rows.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::Numeric("SVD failed in cap fit".into()))?;
    let (imin, _) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let mut o: DVector<f64> = vt.row(imin).transpose();
    o /= o.norm();
    let mut c = mean.dot(&o);
    if inside.dot(&o) < c {
        o = -o;
        c = -c;
    }
    let s = points.iter().map(|p| (p - &o * c).norm()).sum::<f64>() / k as f64;
    Cap::new(SpherePoint::new(o)?, s.atan2(c))
}

/// Image of a cap under a Möbius map.
pub fn cap_image(map: &MoebiusMap, cap: &Cap) -> Result<Cap> {
    let pts = cap.boundary_frame_points().iter().map(|p| map.apply_ball(p)).collect::<Result<Vec<_>>>()?;
    let inside = map.apply_ball(cap.center().coords())?;
    cap_from_boundary(&pts, &inside)
}

/// The conformal field `V_a(x) = a − ⟨x,a⟩x` and its flow.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSpec {
    direction: SpherePoint,
}

impl FlowSpec {
    pub fn new(direction: SpherePoint) -> Self {
        FlowSpec { direction }
    }

    pub fn from_slice(a: &[f64]) -> Result<Self> {
        Ok(FlowSpec { direction: SpherePoint::normalize(DVector::from_column_slice(a))? })
    }

    pub fn direction(&self) -> &SpherePoint {
        &self.direction
    }

    pub fn dim(&self) -> usize {
        self.direction.dim()
    }

    /// `u_a(x) = ⟨x, a⟩`.
    pub fn u(&self, x: &DVector<f64>) -> f64 {
        x.dot(self.direction.coords())
    }

    /// `V_a(x)`.
    pub fn field(&self, x: &DVector<f64>) -> DVector<f64> {
        let a = self.direction.coords();
        a - x * x.dot(a)
    }

    /// `Ψ^a_t = Φ_{tanh(t/2) a}`.
    pub fn map(&self, t: f64) -> MoebiusMap {
        let s = (t / 2.0).tanh();
        let n = self.dim();
        MoebiusMap { rotation: DMatrix::identity(n, n), y: self.direction.coords() * s }
    }
}

/// `u_a(Ψ_t x)` as a function of `u_a(x)`.
pub fn u_along_flow(u0: f64, t: f64) -> f64 {
    let s = (t / 2.0).tanh();
    (2.0 * s + (1.0 + s * s) * u0) / (1.0 + s * s + 2.0 * s * u0)
}

pub fn flow_point(spec: &FlowSpec, t: f64, x: &SpherePoint) -> Result<SpherePoint> {
    moebius_apply(&spec.map(t), x)
}

/// `cot R_t = cot R cosh t − cos α csc R sinh t` with `cos α = −⟨o, a⟩`.
pub fn moving_cot_radius(spec: &FlowSpec, cap: &Cap, t: f64) -> f64 {
    let r = cap.radius();
    let cos_alpha = -spec.u(cap.center().coords());
    (r.cos() * t.cosh() - cos_alpha * t.sinh()) / r.sin()
}

/// `d/dt cot R_t`.
pub fn moving_cot_radius_dt(spec: &FlowSpec, cap: &Cap, t: f64) -> f64 {
    let r = cap.radius();
    let cos_alpha = -spec.u(cap.center().coords());
    (r.cos() * t.sinh() - cos_alpha * t.cosh()) / r.sin()
}

/// `R_t` from the closed form, in `(0, π)`.
pub fn moving_radius(spec: &FlowSpec, cap: &Cap, t: f64) -> f64 {
    let r = cap.radius();
    let cos_alpha = -spec.u(cap.center().coords());
    let num = r.cos() * t.cosh() - cos_alpha * t.sinh();
    r.sin().atan2(num)
}

/// Image of a cap under the flow, reconstructed from tracked boundary diameters.
pub fn flow_cap(spec: &FlowSpec, t: f64, cap: &Cap) -> Result<Cap> {
    let out = cap_image(&spec.map(t), cap)?;
    let expected = moving_radius(spec, cap, t);
    let err = (out.radius() - expected).abs();
    if err > 1e-9 {
        return Err(Error::Inconsistent(format!(
            "tracked radius {} disagrees with closed form {} by {err:e}",
            out.radius(),
            expected
        )));
    }
    Ok(out)
}

/// `⟨η̄_t, V_a⟩ = −d/dt cot R_t + u_a cot R_t` at a point of `∂B_{R_t}(o_t)`.
pub fn cap_normal_pairing(spec: &FlowSpec, t: f64, cap: &Cap, x: &SpherePoint) -> Result<f64> {
    let moved = flow_cap(spec, t, cap)?;
    let lvl = moved.level(x.coords());
    if lvl.abs() > 1e-8 {
        return Err(Error::Domain(format!("point is {lvl:e} off the moved cap boundary")));
    }
    let cot = moving_cot_radius(spec, cap, t);
    Ok(-moving_cot_radius_dt(spec, cap, t) + spec.u(x.coords()) * cot)
}

/// Direct evaluation of `⟨−csc R_t V_{o_t}(x), V_a(x)⟩`.
pub fn cap_normal_pairing_geometric(spec: &FlowSpec, moved: &Cap, x: &SpherePoint) -> f64 {
    moved.outward_normal(x.coords()).dot(&spec.field(x.coords()))
}

/// `Y = (|y|² cos R e_0 + sin R y)/(sin²R + |y|² cos²R)`, the image of the origin.
pub fn slice_image(radius: f64, y: &DVector<f64>) -> DVector<f64> {
    let (s, c) = radius.sin_cos();
    let yy = y.norm_squared();
    let mut out = y * s;
    out[0] += yy * c;
    out / (s * s + yy * c * c)
}

/// Whether `⟨y, e_0⟩ = |y|² c` within `tol`.
pub fn lies_on_slice(y: &DVector<f64>, c: f64, tol: f64) -> bool {
    (y[0] - y.norm_squared() * c).abs() <= tol
}

fn check_fixes_e0(rotation: &DMatrix<f64>) -> Result<()> {
    let n = rotation.nrows();
    let e0 = SpherePoint::basis(n, 0).into_inner();
    let d = (rotation * &e0 - &e0).amax();
    if d > 1e-10 {
        return Err(Error::Domain("rotation must fix e_0".into()));
    }
    Ok(())
}

/// `Θ ∘ Φ_{s_R e_0} ∘ Φ_y ∘ Φ_{−s_R e_0}`, a conformal automorphism of `B_R(e_0)`.
pub fn conf_cap_element(radius: f64, rotation: &DMatrix<f64>, y: &DVector<f64>) -> Result<MoebiusMap> {
    let n = y.len();
    if y[0].abs() > 1e-12 {
        return Err(Error::Domain("y must be orthogonal to e_0".into()));
    }
    if y.norm() >= 1.0 {
        return Err(Error::Domain("|y| must be < 1".into()));
    }
    check_fixes_e0(rotation)?;
    let mut sv = DVector::zeros(n);
    sv[0] = s_r(radius);
    let up = MoebiusMap::translation(sv.clone())?;
    let down = MoebiusMap::translation(-sv)?;
    let mid = MoebiusMap::translation(y.clone())?;
    let rot = MoebiusMap::rotation_only(rotation.clone())?;
    fit_from_frame(n, |x| {
        let a = down.apply_ball(x)?;
        let b = mid.apply_ball(&a)?;
        let c = up.apply_ball(&b)?;
        rot.apply_ball(&c)
    })
}

/// Rotation of the `(e_0, e)` plane taking `e_0` to `cos β e_0 + sin β e`.
pub fn plane_rotation(dim: usize, e: &DVector<f64>, beta: f64) -> DMatrix<f64> {
    let e0 = SpherePoint::basis(dim, 0).into_inner();
    let (s, c) = beta.sin_cos();
    DMatrix::identity(dim, dim)
        + (&e0 * e0.transpose() + e * e.transpose()) * (c - 1.0)
        + (e * e0.transpose() - &e0 * e.transpose()) * s
}

/// A flow direction, time and rotation whose composite `Θ ∘ Ψ^a_t` maps 0 to `Y`.
#[derive(Clone, Debug)]
pub struct FlowRealization {
    pub spec: FlowSpec,
    pub t: f64,
    pub rotation: DMatrix<f64>,
}

impl FlowRealization {
    /// The composite map `Θ ∘ Φ_{tanh(t/2) a}`.
    pub fn map(&self) -> Result<MoebiusMap> {
        let s = (self.t / 2.0).tanh();
        MoebiusMap::new(self.rotation.clone(), self.spec.direction().coords() * s)
    }
}

/// Realise a slice point `Y ∈ S_{cos R}` by a flow followed by a rotation.
pub fn realize_by_flow(y: &DVector<f64>, radius: f64) -> Result<FlowRealization> {
    let n = y.len();
    if !lies_on_slice(y, radius.cos(), 1e-10) {
        return Err(Error::Domain("Y is not on the slice S_{cos R}".into()));
    }
    let mut sbar = y.norm();
    if sbar == 0.0 {
        return Ok(FlowRealization {
            spec: FlowSpec::new(SpherePoint::basis(n, 1)),
            t: 0.0,
            rotation: DMatrix::identity(n, n),
        });
    }
    if sbar > 1.0 - 1e-12 {
        log::warn!("|Y| = {sbar} clamped to 1 - 1e-12");
        sbar = 1.0 - 1e-12;
    }
    let mut perp = y.clone();
    perp[0] = 0.0;
    let pn = perp.norm();
    let e1 = if pn > 0.0 { perp / pn } else { SpherePoint::basis(n, 1).into_inner() };
    let alpha = pn.atan2(y[0]);
    let mut a = &e1 * alpha.sin();
    a[0] -= alpha.cos();
    let rotation = plane_rotation(n, &e1, -(std::f64::consts::PI - 2.0 * alpha));
    Ok(FlowRealization { spec: FlowSpec::new(SpherePoint::normalize(a)?), t: 2.0 * sbar.atanh(), rotation })
}

/// Inverse stereographic projection `Ξ(z) = ((1−|z|²)e_0 + 2z)/(1+|z|²)`.
pub fn stereographic_generic<T: Real>(z: &[T]) -> Vec<T> {
    let zz = dot(z, z);
    let one = T::cst(1.0);
    let inv = one / (one + zz);
    let mut out = Vec::with_capacity(z.len() + 1);
    out.push((one - zz) * inv);
    out.extend(z.iter().map(|&zi| zi.scale(2.0) * inv));
    out
}

pub fn stereographic(z: &DVector<f64>) -> SpherePoint {
    let v = DVector::from_vec(stereographic_generic(z.as_slice()));
    SpherePoint(v.normalize())
}

/// `Ξ_R = Φ_{s_R e_0} ∘ Ξ`, generic over the scalar type.
pub fn xi_r_generic<T: Real>(z: &[T], radius: f64) -> Vec<T> {
    let p = stereographic_generic(z);
    let mut y = vec![0.0; z.len() + 1];
    y[0] = s_r(radius);
    phi(&y, &p)
}

pub fn xi_r(z: &DVector<f64>, radius: f64) -> SpherePoint {
    let v = DVector::from_vec(xi_r_generic(z.as_slice(), radius));
    SpherePoint(v.normalize())
}

/// Metric factor of `Ξ_R`: `2 sin R/(1+|z|²+(1−|z|²)cos R)`.
pub fn f_r(z: &DVector<f64>, radius: f64) -> f64 {
    let zz = z.norm_squared();
    2.0 * radius.sin() / (1.0 + zz + (1.0 - zz) * radius.cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        v.normalize()
    }

    fn random_ball(rng: &mut ChaCha8Rng, n: usize, rmax: f64) -> DVector<f64> {
        random_unit(rng, n) * rng.gen_range(0.0..rmax)
    }

    pub(crate) fn random_rotation(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let mut q = m.qr().q();
        if q.determinant() < 0.0 {
            let c = -q.column(0);
            q.set_column(0, &c);
        }
        q
    }

    #[test]
    fn apply_hand_example() {
        let map = MoebiusMap::translation(DVector::from_vec(vec![0.5, 0.0, 0.0, 0.0])).unwrap();
        let x = SpherePoint::basis(4, 1);
        let out = moebius_apply(&map, &x).unwrap();
        let expect = [0.8, 0.6, 0.0, 0.0];
        for i in 0..4 {
            assert!((out.coords()[i] - expect[i]).abs() < 1e-15);
        }
        let back = moebius_apply(&moebius_inverse(&map), &out).unwrap();
        assert!((back.coords() - x.coords()).amax() < 1e-14);
    }

    #[test]
    fn identity_and_ray() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = SpherePoint::new(random_unit(&mut rng, 4)).unwrap();
        let id = MoebiusMap::identity(4);
        assert_eq!(moebius_apply(&id, &x).unwrap(), x);
        let y = random_ball(&mut rng, 4, 0.9);
        let s = y.norm();
        let yhat = &y / s;
        let map = MoebiusMap::translation(y.clone()).unwrap();
        // The ray point itself is fixed.
        let xr = SpherePoint::new(yhat.clone()).unwrap();
        let out = moebius_apply(&map, &xr).unwrap();
        assert!((out.coords() - &yhat).amax() < 1e-14);
        // A point with u = s moves to the closed-form value.
        let perp = orthonormal_complement(&yhat)[0].clone();
        let xs = SpherePoint::new(&yhat * s + perp * (1.0 - s * s).sqrt()).unwrap();
        let out = moebius_apply(&map, &xs).unwrap();
        let lhs = out.coords().dot(&yhat);
        let rhs = (2.0 * s + (1.0 + s * s) * s) / (1.0 + s * s + 2.0 * s * s);
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn inverse_and_compose() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let f = MoebiusMap::new(random_rotation(&mut rng, 4), random_ball(&mut rng, 4, 0.9)).unwrap();
            let g = MoebiusMap::new(random_rotation(&mut rng, 4), random_ball(&mut rng, 4, 0.9)).unwrap();
            let fi = moebius_inverse(&f);
            let fg = moebius_compose(&f, &g).unwrap();
            for _ in 0..5 {
                let x = SpherePoint::new(random_unit(&mut rng, 4)).unwrap();
                let back = moebius_apply(&fi, &moebius_apply(&f, &x).unwrap()).unwrap();
                assert!((back.coords() - x.coords()).amax() < 1e-10);
                let a = moebius_apply(&fg, &x).unwrap();
                let b = moebius_apply(&f, &moebius_apply(&g, &x).unwrap()).unwrap();
                assert!((a.coords() - b.coords()).amax() < 1e-10);
            }
        }
        let y = DVector::from_vec(vec![0.1, -0.3, 0.2, 0.4]);
        let c = moebius_compose(&MoebiusMap::translation(y.clone()).unwrap(), &MoebiusMap::translation(-y).unwrap())
            .unwrap();
        assert!(c.y().norm() < 1e-12);
        assert!((c.rotation() - DMatrix::identity(4, 4)).amax() < 1e-12);
        let r1 = random_rotation(&mut rng, 4);
        let r2 = random_rotation(&mut rng, 4);
        let c = moebius_compose(
            &MoebiusMap::rotation_only(r1.clone()).unwrap(),
            &MoebiusMap::rotation_only(r2.clone()).unwrap(),
        )
        .unwrap();
        assert!(c.y().norm() < 1e-12);
        assert!((c.rotation() - r1 * r2).amax() < 1e-12);
    }

    #[test]
    fn invalid_maps_rejected() {
        assert!(MoebiusMap::translation(DVector::from_vec(vec![1.0, 0.0])).is_err());
        let refl = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0]));
        assert!(MoebiusMap::rotation_only(refl).is_err());
    }

    #[test]
    fn conformal_factor_matches_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let map = MoebiusMap::new(random_rotation(&mut rng, 4), random_ball(&mut rng, 4, 0.8)).unwrap();
            let x = random_unit(&mut rng, 4);
            let h = 1e-6;
            let mut jac = DMatrix::zeros(4, 4);
            for j in 0..4 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let col = (map.apply_ball(&xp).unwrap() - map.apply_ball(&xm).unwrap()) / (2.0 * h);
                jac.set_column(j, &col);
            }
            let ef = conformal_factor(&map, &x);
            for s in jac.singular_values().iter() {
                assert!((s - ef).abs() < 1e-6 * (1.0 + ef), "{s} vs {ef}");
            }
        }
        let map = MoebiusMap::translation(DVector::from_vec(vec![0.3, 0.4, 0.0])).unwrap();
        assert!((conformal_factor(&map, &DVector::zeros(3)) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn flow_closed_form() {
        let spec = FlowSpec::new(SpherePoint::basis(4, 0));
        let x = SpherePoint::basis(4, 2);
        let t = 3f64.ln();
        let xt = flow_point(&spec, t, &x).unwrap();
        assert!((spec.u(xt.coords()) - 0.8).abs() < 1e-12);
        let a = SpherePoint::basis(4, 0);
        let fixed = flow_point(&spec, 1.7, &a).unwrap();
        assert!((fixed.coords() - a.coords()).amax() < 1e-14);
    }

    #[test]
    fn flow_matches_rk4() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = FlowSpec::new(SpherePoint::new(random_unit(&mut rng, 4)).unwrap());
        let x0 = random_unit(&mut rng, 4);
        let mut x = x0.clone();
        let dt = 1e-3;
        for step in 1..=2000 {
            let k1 = spec.field(&x);
            let k2 = spec.field(&(&x + &k1 * (dt / 2.0)));
            let k3 = spec.field(&(&x + &k2 * (dt / 2.0)));
            let k4 = spec.field(&(&x + &k3 * dt));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            if step % 250 == 0 {
                let t = step as f64 * dt;
                let exact = flow_point(&spec, t, &SpherePoint::new(x0.clone()).unwrap()).unwrap();
                assert!((exact.coords() - &x).amax() < 1e-8);
                let u = u_along_flow(spec.u(&x0), t);
                assert!((u - spec.u(exact.coords())).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn flow_cap_cases() {
        let cap = Cap::polar(4, std::f64::consts::FRAC_PI_2).unwrap();
        let spec = FlowSpec::new(SpherePoint::basis(4, 1));
        for &t in &[0.3, 1.0, 2.5] {
            let c = flow_cap(&spec, t, &cap).unwrap();
            assert!((c.radius() - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
            assert!((c.center().coords() - cap.center().coords()).amax() < 1e-10);
        }
        let cap = Cap::polar(4, std::f64::consts::FRAC_PI_3).unwrap();
        let t = 0.7;
        let c = flow_cap(&spec, t, &cap).unwrap();
        let expect = (1.0 / 3f64.sqrt()) * t.cosh();
        assert!((1.0 / c.radius().tan() - expect).abs() < 1e-9);
    }

    #[test]
    fn pairing_signs() {
        let r = 1.1;
        let cap = Cap::polar(4, r).unwrap();
        let spec = FlowSpec::new(SpherePoint::basis(4, 0));
        assert!((moving_cot_radius_dt(&spec, &cap, 0.0) - 1.0 / r.sin()).abs() < 1e-14);
        let x = SpherePoint::from_slice(&[r.cos(), r.sin(), 0.0, 0.0]).unwrap();
        let p = cap_normal_pairing(&spec, 0.0, &cap, &x).unwrap();
        let g = cap_normal_pairing_geometric(&spec, &cap, &x);
        assert!((p - g).abs() < 1e-12);
        assert!((p + r.sin()).abs() < 1e-12);
        let off = SpherePoint::basis(4, 0);
        assert!(cap_normal_pairing(&spec, 0.0, &cap, &off).is_err());
    }

    #[test]
    fn cap_elements_and_slice() {
        let r = std::f64::consts::FRAC_PI_2;
        let y = DVector::from_vec(vec![0.0, 0.5, 0.0, 0.0]);
        let yimg = slice_image(r, &y);
        assert!((yimg - &y).amax() < 1e-15);
        let id = conf_cap_element(0.8, &DMatrix::identity(4, 4), &DVector::zeros(4)).unwrap();
        assert!(id.y().norm() < 1e-12);
        assert!(conf_cap_element(0.8, &DMatrix::identity(4, 4), &DVector::from_vec(vec![0.1, 0.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn realize_hemisphere_case() {
        let y = DVector::from_vec(vec![0.0, 0.6, 0.0, 0.0]);
        let real = realize_by_flow(&y, std::f64::consts::FRAC_PI_2).unwrap();
        assert!((real.spec.direction().coords()[1] - 1.0).abs() < 1e-14);
        assert!((real.t - 2.0 * 0.6f64.atanh()).abs() < 1e-14);
        assert!((&real.rotation - DMatrix::identity(4, 4)).amax() < 1e-14);
        let zero = realize_by_flow(&DVector::zeros(4), 1.0).unwrap();
        assert_eq!(zero.t, 0.0);
        let off = DVector::from_vec(vec![0.3, 0.1, 0.0, 0.0]);
        assert!(realize_by_flow(&off, 1.0).is_err());
    }

    #[test]
    fn stereographic_factors() {
        let z0 = DVector::zeros(3);
        let p = stereographic(&z0);
        assert!((p.coords()[0] - 1.0).abs() < 1e-15);
        assert!((f_r(&z0, std::f64::consts::FRAC_PI_2) - 2.0).abs() < 1e-15);
        let r = 0.9;
        assert!((f_r(&z0, r) - 2.0 * (r / 2.0).tan()).abs() < 1e-14);
        let z = DVector::from_vec(vec![0.3, -0.2, 0.1]);
        let h = 1e-6;
        let mut jac = DMatrix::zeros(4, 3);
        for j in 0..3 {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += h;
            zm[j] -= h;
            let col = (xi_r(&zp, r).into_inner() - xi_r(&zm, r).into_inner()) / (2.0 * h);
            jac.set_column(j, &col);
        }
        for s in jac.singular_values().iter() {
            assert!((s - f_r(&z, r)).abs() < 1e-6);
        }
        let p = xi_r(&z, r);
        assert!(p.coords()[0] >= r.cos() - 1e-14);
        let small: f64 = 1e-3;
        assert!((f_r(&z, small) / small.sin() - 1.0).abs() < 1e-5);
    }
}
