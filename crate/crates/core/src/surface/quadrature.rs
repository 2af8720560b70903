//! Tensor Gauss–Legendre quadrature over chart domains and boundary loops.

use rayon::prelude::*;

use super::{BoundaryFrame, CurvaturePack, Domain, ParametricSurface};
use crate::error::Result;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Quadrature resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadOptions {
    /// Gauss points per axis per cell.
    pub order: usize,
    /// Cells per parameter axis (radial and angular for discs).
    pub cells: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { order: 8, cells: 16 }
    }
}

/// Where to integrate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Interior,
    Boundary,
    Wet,
}

/// Interior nodes `(u, v, weight)` including the parameter Jacobian for discs.
pub fn interior_nodes(domain: &Domain, opts: &QuadOptions) -> Vec<(f64, f64, f64)> {
    let (gx, gw) = gauss_legendre(opts.order);
    let n = opts.cells;
    let mut out = Vec::with_capacity(n * n * opts.order * opts.order);
    match *domain {
        Domain::Rect { u: (u0, u1), v: (v0, v1), .. } => {
            let (hu, hv) = ((u1 - u0) / n as f64, (v1 - v0) / n as f64);
            for cu in 0..n {
                for cv in 0..n {
                    for (a, wa) in gx.iter().zip(&gw) {
                        for (b, wb) in gx.iter().zip(&gw) {
                            let u = u0 + hu * (cu as f64 + 0.5 * (a + 1.0));
                            let v = v0 + hv * (cv as f64 + 0.5 * (b + 1.0));
                            out.push((u, v, wa * wb * 0.25 * hu * hv));
                        }
                    }
                }
            }
        }
        Domain::Disc { radius } => {
            let hr = radius / n as f64;
            let nt = 2 * n;
            let ht = 2.0 * std::f64::consts::PI / nt as f64;
            for cr in 0..n {
                for ct in 0..nt {
                    for (a, wa) in gx.iter().zip(&gw) {
                        for (b, wb) in gx.iter().zip(&gw) {
                            let r = hr * (cr as f64 + 0.5 * (a + 1.0));
                            let t = ht * (ct as f64 + 0.5 * (b + 1.0));
                            out.push((r * t.cos(), r * t.sin(), wa * wb * 0.25 * hr * ht * r));
                        }
                    }
                }
            }
        }
    }
    out
}

/// Boundary nodes `(loop, τ, weight in τ)`.
pub fn boundary_nodes(nloops: usize, opts: &QuadOptions) -> Vec<(usize, f64, f64)> {
    let (gx, gw) = gauss_legendre(opts.order);
    let n = 4 * opts.cells;
    let h = 1.0 / n as f64;
    let mut out = Vec::with_capacity(nloops * n * opts.order);
    for l in 0..nloops {
        for c in 0..n {
            for (a, wa) in gx.iter().zip(&gw) {
                out.push((l, h * (c as f64 + 0.5 * (a + 1.0)), 0.5 * h * wa));
            }
        }
    }
    out
}

/// `∫_Σ f dμ`, summed in a fixed order for reproducibility.
pub fn integrate_interior<F>(s: &ParametricSurface, opts: &QuadOptions, f: F) -> Result<f64>
where
    F: Fn(&CurvaturePack) -> f64 + Sync,
{
    let nodes = interior_nodes(&s.domain, opts);
    let chunk = opts.order * opts.order;
    let parts: Vec<Result<f64>> = nodes
        .par_chunks(chunk)
        .map(|cell| {
            let mut acc = 0.0;
            for &(u, v, w) in cell {
                let c = s.geometry(u, v)?.curvature();
                acc += w * c.sqrt_det_g * f(&c);
            }
            Ok(acc)
        })
        .collect();
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total)
}

/// `∫_{∂Σ} f dσ`.
pub fn integrate_boundary<F>(s: &ParametricSurface, opts: &QuadOptions, f: F) -> Result<f64>
where
    F: Fn(&BoundaryFrame) -> f64 + Sync,
{
    let nodes = boundary_nodes(s.loops().len(), opts);
    if nodes.is_empty() {
        return Ok(0.0);
    }
    let parts: Vec<Result<f64>> = nodes
        .par_chunks(opts.order)
        .map(|cell| {
            let mut acc = 0.0;
            for &(l, tau, w) in cell {
                let fr = s.boundary_frame(l, tau)?;
                acc += w * fr.speed * f(&fr);
            }
            Ok(acc)
        })
        .collect();
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total)
}

/// `∫_{S⁻} f dμ`, summed over wet regions with multiplicity.
pub fn integrate_wet<F>(s: &ParametricSurface, opts: &QuadOptions, f: F) -> Result<f64>
where
    F: Fn(&CurvaturePack) -> f64 + Sync,
{
    let mut total = 0.0;
    for w in &s.wet {
        total += integrate_interior(&w.surface, opts, &f)?;
    }
    Ok(total)
}

/// Integrate a pointwise function of position over the chosen region.
pub fn integrate<F>(s: &ParametricSurface, region: Region, opts: &QuadOptions, f: F) -> Result<f64>
where
    F: Fn(&nalgebra::Vector4<f64>) -> f64 + Sync,
{
    match region {
        Region::Interior => integrate_interior(s, opts, |c| f(&c.x)),
        Region::Boundary => integrate_boundary(s, opts, |b| f(&b.x)),
        Region::Wet => integrate_wet(s, opts, |c| f(&c.x)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rules_are_exact() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for p in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} p={p} {q} vs {exact}");
            }
        }
    }

    #[test]
    fn disc_nodes_integrate_area() {
        let nodes = interior_nodes(&Domain::Disc { radius: 2.0 }, &QuadOptions::default());
        let a: f64 = nodes.iter().map(|n| n.2).sum();
        assert!((a - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        let m: f64 = nodes.iter().map(|n| n.2 * (n.0 * n.0 + n.1 * n.1)).sum();
        assert!((m - 8.0 * std::f64::consts::PI).abs() < 1e-11);
    }
}
