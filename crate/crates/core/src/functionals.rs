//! Energies of surfaces in spherical caps, their monotonicity along conformal
//! flows, Gauss–Bonnet identities, the blowup bound and the Euclidean limit.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;
use std::sync::Arc;

use log::warn;
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

use crate::conformal::{flow_cap, phi, xi_r_generic, Cap, FlowSpec, MoebiusMap};
use crate::error::{Error, Result};
use crate::format::fmt17;
use crate::jet::Jet;
use crate::surface::quadrature::{
    boundary_nodes, integrate_boundary, integrate_interior, integrate_wet, interior_nodes,
};
use crate::surface::{mesh_parametric, AnalyticChart, Contact, Domain, ParametricSurface, QuadOptions};

/// Components of `E^R` and `E^{R,γ}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyValue {
    pub area: f64,
    /// `|S⁻|` summed over wet regions; absent without wet data.
    pub wet_area: Option<f64>,
    pub boundary_length: f64,
    pub e_r: f64,
    /// Absent when `γ < π/2` and no wet surface is attached.
    pub e_r_gamma: Option<f64>,
    pub radius_used: f64,
    pub gamma_used: f64,
}

fn radius_gamma(s: &ParametricSurface) -> Result<(f64, f64)> {
    match &s.contact {
        Some(c) => Ok((c.cap.radius(), c.gamma)),
        None if s.is_closed() => Ok((FRAC_PI_2, FRAC_PI_2)),
        None => Err(Error::Domain(format!("{} has boundary but no contact data", s.name))),
    }
}

/// Energies by quadrature.
pub fn energy_with(s: &ParametricSurface, opts: &QuadOptions) -> Result<EnergyValue> {
    let (r, g) = radius_gamma(s)?;
    let area = integrate_interior(s, opts, |_| 1.0)?;
    let boundary_length = integrate_boundary(s, opts, |_| 1.0)?;
    let wet_area = if s.wet.is_empty() { None } else { Some(integrate_wet(s, opts, |_| 1.0)?) };
    let cot = r.cos() / r.sin();
    let e_r = area + cot * boundary_length;
    let wet_term = match wet_area {
        Some(w) => Some(g.cos() / (r.sin() * r.sin()) * w),
        None if g == FRAC_PI_2 => Some(0.0),
        None => None,
    };
    let e_r_gamma = wet_term.map(|w| area + w + g.sin() * cot * boundary_length);
    Ok(EnergyValue { area, wet_area, boundary_length, e_r, e_r_gamma, radius_used: r, gamma_used: g })
}

pub fn energy(s: &ParametricSurface) -> Result<EnergyValue> {
    energy_with(s, &QuadOptions::default())
}

/// `E^{R,γ}`, failing when the wet surface it needs is missing.
pub fn energy_r_gamma(s: &ParametricSurface) -> Result<f64> {
    energy(s)?
        .e_r_gamma
        .ok_or_else(|| Error::Domain(format!("{} needs a wet surface for the capillary energy", s.name)))
}

/// Capillary area `A^γ = |Σ| + cos γ |S⁻|` of a surface in the hemisphere.
pub fn capillary_area(s: &ParametricSurface) -> Result<f64> {
    let (r, _) = radius_gamma(s)?;
    if (r - FRAC_PI_2).abs() > 1e-12 {
        return Err(Error::Domain("capillary area is defined in the hemisphere".into()));
    }
    energy_r_gamma(s)
}

/// Which monotonicity statement a configuration falls under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MonotoneKind {
    /// `e^{−C_H t} E^{R_t}(Σ_t)` for free boundary surfaces.
    FreeBoundary,
    /// `E^{R_t,γ}(Σ_t, S⁻_t)` for capillary minimal surfaces with wet surface.
    Capillary,
    /// `|Σ_t| + cos γ W(t)` in the hemisphere with `a ⊥ e_0`.
    Hemisphere,
}

pub fn select_theorem(s: &ParametricSurface, spec: &FlowSpec) -> Result<MonotoneKind> {
    let (r, g) = radius_gamma(s)?;
    if (g - FRAC_PI_2).abs() < 1e-12 {
        return Ok(MonotoneKind::FreeBoundary);
    }
    let a0 = spec.direction().coords()[0];
    if (r - FRAC_PI_2).abs() < 1e-12 && a0.abs() < 1e-12 {
        return Ok(MonotoneKind::Hemisphere);
    }
    if !s.wet.is_empty() {
        return Ok(MonotoneKind::Capillary);
    }
    Err(Error::Refused(format!(
        "no monotonicity statement covers {} with γ = {g} and R = {r} without a wet surface",
        s.name
    )))
}

/// `∫_{∂Σ_t} ⟨ν̄_t, V_a⟩ dσ_t`.
fn boundary_flux(s: &ParametricSurface, spec: &FlowSpec, t: f64, opts: &QuadOptions) -> Result<f64> {
    let moved = s.pushforward(&spec.map(t))?;
    let a = spec.direction().coords();
    let a4 = nalgebra::Vector4::new(a[0], a[1], a[2], a[3]);
    integrate_boundary(&moved, opts, |f| {
        let v = a4 - f.x * f.x.dot(&a4);
        f.nu_bar.map_or(0.0, |nb| nb.dot(&v))
    })
}

/// Local wetting energy `W(t) = ∫_0^t ∫_{∂Σ_τ} ⟨ν̄_τ, V_a⟩` by the trapezoid
/// rule with `substeps` subintervals per grid interval.
pub fn wetting_energy_local(
    s: &ParametricSurface,
    spec: &FlowSpec,
    times: &[f64],
    substeps: usize,
    opts: &QuadOptions,
) -> Result<Vec<f64>> {
    if s.contact.is_none() {
        return Err(Error::Domain("wetting energy needs contact data".into()));
    }
    let substeps = substeps.max(1);
    let mut nodes = vec![];
    for (i, &t) in times.iter().enumerate() {
        if i == 0 {
            nodes.push(t);
            continue;
        }
        let t0 = times[i - 1];
        for k in 1..=substeps {
            nodes.push(t0 + (t - t0) * k as f64 / substeps as f64);
        }
    }
    let flux: Vec<f64> = nodes.par_iter().map(|&t| boundary_flux(s, spec, t, opts)).collect::<Result<Vec<_>>>()?;
    let mut w = vec![0.0; times.len()];
    let mut acc = 0.0;
    for i in 1..times.len() {
        for k in 0..substeps {
            let j = (i - 1) * substeps + k;
            acc += 0.5 * (nodes[j + 1] - nodes[j]) * (flux[j] + flux[j + 1]);
        }
        w[i] = acc;
    }
    Ok(w)
}

/// `sup |H|` over interior quadrature nodes.
pub fn sup_mean_curvature(s: &ParametricSurface, opts: &QuadOptions) -> Result<f64> {
    interior_nodes(&s.domain, opts)
        .par_iter()
        .map(|&(u, v, _)| Ok(s.geometry(u, v)?.curvature().h.abs()))
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Energies and the monotone quantity along `Ψ^a_t`.
#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityTrace {
    pub kind: MonotoneKind,
    pub times: Vec<f64>,
    pub energies: Vec<EnergyValue>,
    #[serde(skip)]
    pub caps: Vec<Option<Cap>>,
    /// Local wetting energy; zeros without contact data.
    pub w: Vec<f64>,
    pub c_h: f64,
    pub quantity: Vec<f64>,
    /// Forward-difference slope above which a step is flagged.
    pub slope_tol: f64,
    /// `(t_i, slope)` for flagged steps.
    pub violations: Vec<(f64, f64)>,
}

impl MonotonicityTrace {
    /// CSV with header `t,R_t,area,wet,boundary,E,monotone_quantity,slope_flag`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,R_t,area,wet,boundary,E,monotone_quantity,slope_flag\n");
        for i in 0..self.times.len() {
            let e = &self.energies[i];
            let flag = self.violations.iter().any(|v| v.0 == self.times[i]);
            let energy = match self.kind {
                MonotoneKind::FreeBoundary => e.e_r,
                _ => e.e_r_gamma.unwrap_or(f64::NAN),
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                fmt17(self.times[i]),
                fmt17(e.radius_used),
                fmt17(e.area),
                fmt17(e.wet_area.unwrap_or(0.0)),
                fmt17(e.boundary_length),
                fmt17(energy),
                fmt17(self.quantity[i]),
                u8::from(flag)
            );
        }
        s
    }

    pub fn is_monotone(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Options for [`monotonicity_trace`].
#[derive(Clone, Debug)]
pub struct TraceOptions {
    pub quad: QuadOptions,
    /// `C_H`; defaults to the measured `sup |H|` plus 10%.
    pub c_h: Option<f64>,
    pub substeps: usize,
    /// Fixed slope tolerance; defaults to a quadrature-error estimate.
    pub slope_tol: Option<f64>,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions { quad: QuadOptions::default(), c_h: None, substeps: 8, slope_tol: None }
    }
}

/// Evaluate the monotone quantity selected by [`select_theorem`] on a time grid.
pub fn monotonicity_trace(
    s: &ParametricSurface,
    spec: &FlowSpec,
    times: &[f64],
    opts: &TraceOptions,
) -> Result<MonotonicityTrace> {
    if times.is_empty() || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("time grid must be nonempty and increasing".into()));
    }
    let kind = select_theorem(s, spec)?;
    let measured = sup_mean_curvature(s, &opts.quad)?;
    let c_h = match opts.c_h {
        Some(c) => {
            if c < measured - 1e-9 {
                warn!("C_H = {c} is below the measured sup |H| = {measured}");
            }
            c
        }
        None => 1.1 * measured,
    };
    let base_cap = s.contact.as_ref().map(|c| c.cap.clone());
    let rows: Vec<(EnergyValue, Option<Cap>)> = times
        .par_iter()
        .map(|&t| {
            let moved = s.pushforward(&spec.map(t))?;
            let cap = moved.contact.as_ref().map(|c| c.cap.clone());
            if let (Some(b), Some(c)) = (&base_cap, &cap) {
                let expect = flow_cap(spec, t, b)?;
                let d = (expect.center().coords() - c.center().coords()).amax() + (expect.radius() - c.radius()).abs();
                if d > 1e-9 {
                    return Err(Error::Inconsistent(format!("cap at t = {t} differs from the flowed cap by {d:e}")));
                }
            }
            Ok((energy_with(&moved, &opts.quad)?, cap))
        })
        .collect::<Result<Vec<_>>>()?;
    let (energies, caps): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let w = if s.contact.is_some() {
        wetting_energy_local(s, spec, times, opts.substeps, &opts.quad)?
    } else {
        vec![0.0; times.len()]
    };
    let quantity: Vec<f64> = match kind {
        MonotoneKind::FreeBoundary => times.iter().zip(&energies).map(|(t, e)| (-c_h * t).exp() * e.e_r).collect(),
        MonotoneKind::Capillary => energies.iter().map(|e| e.e_r_gamma.unwrap_or(f64::NAN)).collect(),
        MonotoneKind::Hemisphere => energies.iter().zip(&w).map(|(e, w)| e.area + e.gamma_used.cos() * w).collect(),
    };
    // Quadrature error estimate from halving the cell count at the last time.
    let coarse = QuadOptions { cells: (opts.quad.cells / 2).max(1), ..opts.quad.clone() };
    let last = s.pushforward(&spec.map(*times.last().unwrap()))?;
    let e_coarse = energy_with(&last, &coarse)?;
    let e_fine = energies.last().unwrap();
    let quad_err = (e_coarse.area - e_fine.area).abs() + (e_coarse.boundary_length - e_fine.boundary_length).abs();
    let scale = quantity[0].abs().max(1.0);
    let dt_min = times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let slope_tol = opts
        .slope_tol
        .unwrap_or_else(|| (1e-7 * scale).max(if dt_min.is_finite() { 10.0 * quad_err / dt_min } else { 0.0 }));
    let mut violations = vec![];
    for i in 1..times.len() {
        let slope = (quantity[i] - quantity[i - 1]) / (times[i] - times[i - 1]);
        if slope > slope_tol {
            violations.push((times[i - 1], slope));
        }
    }
    Ok(MonotonicityTrace { kind, times: times.to_vec(), energies, caps, w, c_h, quantity, slope_tol, violations })
}

/// Gauss–Bonnet and conformal-invariance identities for `Σ` and `Ψ_*Σ`.
#[derive(Clone, Debug, Serialize)]
pub struct WillmoreReport {
    pub euler_characteristic: i64,
    pub wet_euler_characteristic: Option<i64>,
    /// `∫K + ∫k_g − 2πχ` on `Σ`.
    pub gauss_bonnet_base: f64,
    pub gauss_bonnet_image: f64,
    /// `∫|Å|²` on `Σ` minus the same on `Σ_*`.
    pub traceless_change: f64,
    pub willmore_image: f64,
    /// Free-boundary identity residual; present when `γ = π/2`.
    pub free_boundary_residual: Option<f64>,
    /// Capillary identity residual; present with wet data or `γ = π/2`.
    pub capillary_residual: Option<f64>,
}

fn gauss_bonnet(s: &ParametricSurface, chi: i64, opts: &QuadOptions) -> Result<f64> {
    let k = integrate_interior(s, opts, |c| c.k)?;
    let kg = integrate_boundary(s, opts, |f| f.kappa_sigma)?;
    Ok(k + kg - 2.0 * PI * chi as f64)
}

/// Check the identities relating `Σ` and its image under `map`.
///
/// Euler characteristics come from a coarse mesh so the check does not feed
/// curvature integrals back into itself.
pub fn willmore_identity_report(s: &ParametricSurface, map: &MoebiusMap, opts: &QuadOptions) -> Result<WillmoreReport> {
    let chi = mesh_parametric(s, 0.3)?.euler_characteristic();
    let wet_chi = if s.wet.is_empty() {
        None
    } else {
        let mut c = 0;
        for w in &s.wet {
            c += mesh_parametric(&w.surface, 0.3)?.euler_characteristic();
        }
        Some(c)
    };
    let img = s.pushforward(map)?;
    let gb0 = gauss_bonnet(s, chi, opts)?;
    let gb1 = gauss_bonnet(&img, chi, opts)?;
    let t0 = integrate_interior(s, opts, |c| c.traceless_norm2)?;
    let t1 = integrate_interior(&img, opts, |c| c.traceless_norm2)?;
    let will = integrate_interior(&img, opts, |c| c.h * c.h)?;
    let e0 = energy_with(s, opts)?;
    let e1 = energy_with(&img, opts)?;
    let (r0, r1, g) = (e0.radius_used, e1.radius_used, e0.gamma_used);
    let cot = |r: f64| r.cos() / r.sin();
    let base = e0.area - e1.area - 0.25 * will;
    let free = if (g - FRAC_PI_2).abs() < 1e-12 {
        Some(base + cot(r0) * e0.boundary_length - cot(r1) * e1.boundary_length)
    } else {
        None
    };
    let cap = match (e0.wet_area, e1.wet_area) {
        (Some(w0), Some(w1)) => Some(
            base + g.cos() * (w0 / r0.sin().powi(2) - w1 / r1.sin().powi(2))
                + g.sin() * (cot(r0) * e0.boundary_length - cot(r1) * e1.boundary_length),
        ),
        _ => free,
    };
    Ok(WillmoreReport {
        euler_characteristic: chi,
        wet_euler_characteristic: wet_chi,
        gauss_bonnet_base: gb0,
        gauss_bonnet_image: gb1,
        traceless_change: t0 - t1,
        willmore_image: will,
        free_boundary_residual: free,
        capillary_residual: cap,
    })
}

/// `E^{π/2,γ}` against the blowup value `2π(1 + cos γ)`.
#[derive(Clone, Debug, Serialize)]
pub struct BlowupReport {
    pub energy: f64,
    pub bound: f64,
    pub margin: f64,
    pub holds: bool,
}

pub fn blowup_bound_check(s: &ParametricSurface) -> Result<BlowupReport> {
    let (r, g) = radius_gamma(s)?;
    if (r - FRAC_PI_2).abs() > 1e-9 {
        return Err(Error::Domain("blowup bound applies to surfaces in the hemisphere".into()));
    }
    let energy = energy_r_gamma(s)?;
    let bound = 2.0 * PI * (1.0 + g.cos());
    let margin = energy - bound;
    Ok(BlowupReport { energy, bound, margin, holds: margin >= -1e-6 })
}

type EuclideanChart = dyn Fn(Jet, Jet) -> [Jet; 3] + Send + Sync;

/// A surface in the Euclidean unit ball `B³`.
#[derive(Clone)]
pub struct EuclideanSurface {
    pub name: String,
    pub chart: Arc<EuclideanChart>,
    pub domain: Domain,
}

impl std::fmt::Debug for EuclideanSurface {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EuclideanSurface").field("name", &self.name).finish()
    }
}

fn tangent(j: &[Jet; 3], k: usize) -> Vector3<f64> {
    Vector3::new(j[0].d[k], j[1].d[k], j[2].d[k])
}

impl EuclideanSurface {
    /// `Φ_y` applied to the flat unit disc `{z_3 = 0}`.
    pub fn flat_disc(y: [f64; 3]) -> Result<Self> {
        if (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]) >= 1.0 {
            return Err(Error::Domain("|y| must be < 1".into()));
        }
        Ok(EuclideanSurface {
            name: format!("flat_disc(y={y:?})"),
            chart: Arc::new(move |u: Jet, v: Jet| {
                let q = phi(&y, &[u, v, Jet::constant(0.0)]);
                [q[0], q[1], q[2]]
            }),
            domain: Domain::Disc { radius: 1.0 },
        })
    }

    fn eval(&self, u: f64, v: f64) -> [Jet; 3] {
        let (ju, jv) = Jet::vars(u, v);
        (self.chart)(ju, jv)
    }

    /// Euclidean area.
    pub fn area(&self, opts: &QuadOptions) -> f64 {
        interior_nodes(&self.domain, opts)
            .iter()
            .map(|&(u, v, w)| {
                let j = self.eval(u, v);
                w * tangent(&j, 0).cross(&tangent(&j, 1)).norm()
            })
            .sum()
    }

    /// Euclidean boundary length.
    pub fn boundary_length(&self, opts: &QuadOptions) -> f64 {
        let loops = self.domain.boundary_loops();
        boundary_nodes(loops.len(), opts)
            .iter()
            .map(|&(l, tau, w)| {
                let (uv, d) = loops[l].eval(tau);
                let j = self.eval(uv[0], uv[1]);
                w * (tangent(&j, 0) * d[0] + tangent(&j, 1) * d[1]).norm()
            })
            .sum()
    }

    /// `Ξ_R` image in `B_R(e_0)`, free boundary by construction.
    pub fn in_cap(&self, radius: f64) -> Result<ParametricSurface> {
        if !(radius > 0.0 && radius < PI) {
            return Err(Error::Domain(format!("R = {radius} outside (0, π)")));
        }
        let chart = self.chart.clone();
        Ok(ParametricSurface {
            name: format!("{} in B_{radius}", self.name),
            chart: Arc::new(AnalyticChart(move |u: Jet, v: Jet| {
                let z = chart(u, v);
                let x = xi_r_generic(&z, radius);
                [x[0], x[1], x[2], x[3]]
            })),
            domain: self.domain.clone(),
            contact: Some(Contact { cap: Cap::polar(4, radius)?, gamma: FRAC_PI_2 }),
            wet: vec![],
            orientation: 1.0,
            rotationally_symmetric: false,
            minimal: false,
        })
    }
}

/// `(1 − cos R)/sin R · artanh |Y|` for the slice point of `y`.
pub fn limit_factor(radius: f64, y: &[f64]) -> f64 {
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (s, c) = radius.sin_cos();
    let big_y = ny / (s * s + ny * ny * c * c).sqrt();
    (1.0 - c) / s * big_y.min(1.0 - 1e-16).atanh()
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitRow {
    pub radius: f64,
    /// `(sin R)^{−2} |Σ_R|`.
    pub area_rescaled: f64,
    /// `(sin R)^{−1} |∂Σ_R|`.
    pub boundary_rescaled: f64,
    /// `E^R(Σ_R)`.
    pub energy: f64,
    pub factor: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitTable {
    pub euclidean_area: f64,
    pub euclidean_boundary: f64,
    pub rows: Vec<LimitRow>,
    /// Least-squares slope of `log |error|` against `log R`.
    pub area_order: Option<f64>,
    pub boundary_order: Option<f64>,
}

fn fitted_order(rs: &[f64], errs: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        rs.iter().zip(errs).filter(|(r, e)| **e > 1e-13 && **r < 1.0).map(|(r, e)| (r.ln(), e.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Rescaled areas and lengths of `Ξ_R(Σ)` as `R → 0`.
///
/// The limits are the Euclidean values computed directly from the chart.
pub fn euclidean_limit_trace(
    surface: &EuclideanSurface,
    radii: &[f64],
    y: Option<&[f64]>,
    opts: &QuadOptions,
) -> Result<LimitTable> {
    let euclidean_area = surface.area(opts);
    let euclidean_boundary = surface.boundary_length(opts);
    let rows = radii
        .par_iter()
        .map(|&r| {
            let s = surface.in_cap(r)?;
            let e = energy_with(&s, opts)?;
            let sr = r.sin();
            Ok(LimitRow {
                radius: r,
                area_rescaled: e.area / (sr * sr),
                boundary_rescaled: e.boundary_length / sr,
                energy: e.e_r,
                factor: y.map(|y| limit_factor(r, y)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rs: Vec<f64> = rows.iter().map(|r| r.radius).collect();
    let ea: Vec<f64> = rows.iter().map(|r| (r.area_rescaled - euclidean_area).abs()).collect();
    let eb: Vec<f64> = rows.iter().map(|r| (r.boundary_rescaled - euclidean_boundary).abs()).collect();
    Ok(LimitTable {
        euclidean_area,
        euclidean_boundary,
        area_order: fitted_order(&rs, &ea),
        boundary_order: fitted_order(&rs, &eb),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::builtin::{clifford_torus, disc_in_ball, half_clifford_torus, half_equator};

    #[test]
    fn half_equator_energy_and_blowup() {
        for g in [0.4, 1.0, FRAC_PI_2] {
            let s = half_equator(FRAC_PI_2, g).unwrap();
            let e = energy(&s).unwrap();
            let expect = 2.0 * PI * (1.0 + g.cos());
            assert!((e.e_r_gamma.unwrap() - expect).abs() < 1e-9, "{e:?}");
            let b = blowup_bound_check(&s).unwrap();
            assert!(b.margin.abs() < 1e-9 && b.holds);
            assert_eq!(capillary_area(&s).unwrap(), e.e_r_gamma.unwrap());
        }
    }

    #[test]
    fn energy_parts_add_up() {
        let s = half_equator(1.0, 1.2).unwrap();
        let e = energy(&s).unwrap();
        let (r, g) = (1.0f64, 1.2f64);
        let rebuilt =
            e.area + g.cos() / r.sin().powi(2) * e.wet_area.unwrap() + g.sin() * r.cos() / r.sin() * e.boundary_length;
        assert!((rebuilt - e.e_r_gamma.unwrap()).abs() < 1e-12);
        assert!((e.e_r - (e.area + r.cos() / r.sin() * e.boundary_length)).abs() < 1e-12);
    }

    #[test]
    fn clifford_energies() {
        let e = energy(&half_clifford_torus()).unwrap();
        assert!((e.e_r - PI * PI).abs() < 1e-9);
        assert_eq!(e.e_r, e.e_r_gamma.unwrap());
        let b = blowup_bound_check(&half_clifford_torus()).unwrap();
        assert!((b.margin - (PI * PI - 2.0 * PI)).abs() < 1e-9);
        let e = energy(&clifford_torus()).unwrap();
        assert!((e.e_r - 2.0 * PI * PI).abs() < 1e-9);
    }

    #[test]
    fn identity_map_residuals_vanish() {
        let s = half_clifford_torus();
        let r = willmore_identity_report(&s, &MoebiusMap::identity(4), &QuadOptions::default()).unwrap();
        assert_eq!(r.euler_characteristic, 0);
        assert!(r.free_boundary_residual.unwrap().abs() < 1e-10);
        assert!(r.gauss_bonnet_base.abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn euclidean_limit_of_flat_disc() {
        let d = EuclideanSurface::flat_disc([0.0; 3]).unwrap();
        let t =
            euclidean_limit_trace(&d, &[0.4, 0.2, 0.1, 0.05], Some(&[0.5, 0.0, 0.0]), &QuadOptions::default()).unwrap();
        assert!((t.euclidean_area - PI).abs() < 1e-12);
        assert!((t.euclidean_boundary - 2.0 * PI).abs() < 1e-12);
        let last = t.rows.last().unwrap();
        assert!((last.area_rescaled - PI).abs() < 1e-2);
        assert!((last.boundary_rescaled - 2.0 * PI).abs() < 1e-2);
        let order = t.area_order.unwrap();
        assert!((order - 2.0).abs() < 0.1, "{order}");
        // Same chart as the builtin.
        let e1 = energy(&d.in_cap(0.7).unwrap()).unwrap();
        let e2 = energy(&disc_in_ball(0.7, [0.0; 3]).unwrap()).unwrap();
        assert!((e1.area - e2.area).abs() < 1e-12);
    }

    #[test]
    fn limit_factor_vanishes() {
        let f: Vec<f64> = [1e-1, 1e-2, 1e-3, 1e-4].iter().map(|&r| limit_factor(r, &[0.5, 0.0, 0.0])).collect();
        assert!(f.windows(2).all(|w| w[1] < w[0]));
        assert!(f[3] < 1e-3);
    }
}
