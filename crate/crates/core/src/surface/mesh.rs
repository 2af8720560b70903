//! Structured triangulations of chart domains for P1 finite elements.

use std::collections::HashSet;
use std::fmt::Write as _;

use nalgebra::{Matrix2, Vector4};
use rayon::prelude::*;

use super::{BoundaryLoop, Domain, ParametricSurface, Segment};
use crate::error::{Error, Result};
use crate::format::fmt17;

/// Triangle mesh in parameter space with immersed positions.
#[derive(Clone, Debug)]
pub struct TriMesh {
    pub uv: Vec<[f64; 2]>,
    pub pos: Vec<Vector4<f64>>,
    pub tris: Vec<[usize; 3]>,
    /// Parameter coordinates of each triangle's corners with periodic seams unwrapped.
    pub tri_uv: Vec<[[f64; 2]; 3]>,
    /// Metric at each triangle centroid.
    pub tri_metric: Vec<Matrix2<f64>>,
    /// `(i, j, loop)` in loop direction.
    pub boundary_edges: Vec<(usize, usize, usize)>,
    /// Length of each boundary edge in the induced metric.
    pub boundary_edge_len: Vec<f64>,
    /// `(loop, τ)` for boundary vertices.
    pub vertex_loop: Vec<Option<(usize, f64)>>,
    pub target_h: f64,
}

impl TriMesh {
    pub fn n_vertices(&self) -> usize {
        self.uv.len()
    }

    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.n_vertices()).filter(|&i| self.vertex_loop[i].is_none()).collect()
    }

    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.n_vertices()).filter(|&i| self.vertex_loop[i].is_some()).collect()
    }

    pub fn n_edges(&self) -> usize {
        let mut e = HashSet::new();
        for t in &self.tris {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                e.insert((a.min(b), a.max(b)));
            }
        }
        e.len()
    }

    /// `V − E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices() as i64 - self.n_edges() as i64 + self.tris.len() as i64
    }

    /// Parameter-space area and metric area of triangle `t`.
    pub fn triangle_areas(&self, t: usize) -> (f64, f64) {
        let [p0, p1, p2] = self.tri_uv[t];
        let a = 0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]));
        (a, a * self.tri_metric[t].determinant().sqrt())
    }

    pub fn area(&self) -> f64 {
        (0..self.tris.len()).map(|t| self.triangle_areas(t).1).sum()
    }

    pub fn boundary_length(&self) -> f64 {
        self.boundary_edge_len.iter().sum()
    }

    /// Plain-text dump: `v u v x0 x1 x2 x3`, `f i j k`, `be i j loop`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (p, x) in self.uv.iter().zip(&self.pos) {
            let cols = [p[0], p[1], x[0], x[1], x[2], x[3]].map(fmt17);
            let _ = writeln!(s, "v {}", cols.join(" "));
        }
        for t in &self.tris {
            let _ = writeln!(s, "f {} {} {}", t[0], t[1], t[2]);
        }
        for &(i, j, l) in &self.boundary_edges {
            let _ = writeln!(s, "be {i} {j} {l}");
        }
        s
    }
}

fn metric_length(s: &ParametricSurface, a: [f64; 2], b: [f64; 2], samples: usize) -> Result<f64> {
    let d = [b[0] - a[0], b[1] - a[1]];
    let mut total = 0.0;
    for k in 0..samples {
        let t = (k as f64 + 0.5) / samples as f64;
        let g = s.geometry(a[0] + t * d[0], a[1] + t * d[1])?;
        total += g.push(d).norm() / samples as f64;
    }
    Ok(total)
}

/// `τ` of a parameter point lying on a loop.
fn loop_tau(lp: &BoundaryLoop, p: [f64; 2]) -> f64 {
    let n = lp.segments.len();
    let mut best = (f64::INFINITY, 0.0);
    for (k, seg) in lp.segments.iter().enumerate() {
        let (dist, s) = match *seg {
            Segment::Line { a, b } => {
                let d = [b[0] - a[0], b[1] - a[1]];
                let len2 = d[0] * d[0] + d[1] * d[1];
                let s = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0);
                let q = [a[0] + s * d[0] - p[0], a[1] + s * d[1] - p[1]];
                ((q[0] * q[0] + q[1] * q[1]).sqrt(), s)
            }
            Segment::Circle { radius } => {
                let th = p[1].atan2(p[0]).rem_euclid(2.0 * std::f64::consts::PI);
                (((p[0] * p[0] + p[1] * p[1]).sqrt() - radius).abs(), th / (2.0 * std::f64::consts::PI))
            }
        };
        if dist < best.0 - 1e-14 {
            best = (dist, (k as f64 + s) / n as f64);
        }
    }
    best.1.rem_euclid(1.0)
}

/// Triangulate the surface's chart domain with edges of metric length about `target_h`.
pub fn mesh_parametric(s: &ParametricSurface, target_h: f64) -> Result<TriMesh> {
    if !(target_h > 0.0) {
        return Err(Error::Domain("target_h must be positive".into()));
    }
    let (uv, tris, tri_uv, boundary_edges) = match s.domain {
        Domain::Rect { u: (u0, u1), v: (v0, v1), periodic_u, periodic_v } => {
            let mut lu: f64 = 0.0;
            let mut lv: f64 = 0.0;
            for k in 0..8 {
                let fv = v0 + (v1 - v0) * (k as f64 + 0.5) / 8.0;
                let fu = u0 + (u1 - u0) * (k as f64 + 0.5) / 8.0;
                lu = lu.max(metric_length(s, [u0, fv], [u1, fv], 64)?);
                lv = lv.max(metric_length(s, [fu, v0], [fu, v1], 64)?);
            }
            let nu = ((lu / target_h).ceil() as usize).max(if periodic_u { 3 } else { 1 });
            let nv = ((lv / target_h).ceil() as usize).max(if periodic_v { 3 } else { 1 });
            rect_mesh(u0, u1, v0, v1, nu, nv, periodic_u, periodic_v)
        }
        Domain::Disc { radius } => {
            let mut lr: f64 = 0.0;
            for k in 0..8 {
                let th = 2.0 * std::f64::consts::PI * k as f64 / 8.0;
                lr = lr.max(metric_length(s, [0.0, 0.0], [radius * th.cos(), radius * th.sin()], 64)?);
            }
            let nr = ((lr / target_h).ceil() as usize).max(2);
            let mut counts = Vec::with_capacity(nr);
            for k in 1..=nr {
                let r = radius * k as f64 / nr as f64;
                let mut circ = 0.0;
                let m = 64;
                for i in 0..m {
                    let a = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
                    let b = 2.0 * std::f64::consts::PI * (i + 1) as f64 / m as f64;
                    circ += metric_length(s, [r * a.cos(), r * a.sin()], [r * b.cos(), r * b.sin()], 2)?;
                }
                counts.push(((circ / target_h).ceil() as usize).max(6));
            }
            disc_mesh(radius, &counts)
        }
    };
    let pos: Vec<Vector4<f64>> = uv.par_iter().map(|p| s.point(p[0], p[1])).collect::<Result<Vec<_>>>()?;
    let tri_metric: Vec<Matrix2<f64>> = tri_uv
        .par_iter()
        .map(|t| {
            let c = [(t[0][0] + t[1][0] + t[2][0]) / 3.0, (t[0][1] + t[1][1] + t[2][1]) / 3.0];
            Ok(s.geometry(c[0], c[1])?.g)
        })
        .collect::<Result<Vec<_>>>()?;
    let loops = s.loops();
    let mut vertex_loop = vec![None; uv.len()];
    let mut boundary_edge_len = Vec::with_capacity(boundary_edges.len());
    for &(i, j, l) in &boundary_edges {
        for &k in &[i, j] {
            if vertex_loop[k].is_none() {
                vertex_loop[k] = Some((l, loop_tau(&loops[l], uv[k])));
            }
        }
        let (a, mut b) = (uv[i], uv[j]);
        // Seam edges of periodic directions are measured across the seam.
        if let Domain::Rect { u: (u0, u1), v: (v0, v1), periodic_u, periodic_v } = s.domain {
            for (k, per, len) in [(0, periodic_u, u1 - u0), (1, periodic_v, v1 - v0)] {
                if per {
                    b[k] -= len * ((b[k] - a[k]) / len).round();
                }
            }
        }
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        let g = s.geometry(mid[0], mid[1])?;
        boundary_edge_len.push(g.push([b[0] - a[0], b[1] - a[1]]).norm());
    }
    let mesh = TriMesh { uv, pos, tris, tri_uv, tri_metric, boundary_edges, boundary_edge_len, vertex_loop, target_h };
    for t in 0..mesh.tris.len() {
        let (_, a) = mesh.triangle_areas(t);
        if !(a > 1e-12) {
            return Err(Error::Degenerate(format!("triangle {t} has metric area {a:e}")));
        }
    }
    Ok(mesh)
}

type RawMesh = (Vec<[f64; 2]>, Vec<[usize; 3]>, Vec<[[f64; 2]; 3]>, Vec<(usize, usize, usize)>);

#[allow(clippy::too_many_arguments)]
fn rect_mesh(u0: f64, u1: f64, v0: f64, v1: f64, nu: usize, nv: usize, pu: bool, pv: bool) -> RawMesh {
    let cu = if pu { nu } else { nu + 1 };
    let cv = if pv { nv } else { nv + 1 };
    let at = |i: usize, j: usize| [u0 + (u1 - u0) * i as f64 / nu as f64, v0 + (v1 - v0) * j as f64 / nv as f64];
    let idx = |i: usize, j: usize| (i % cu) * cv + (j % cv);
    let mut uv = Vec::with_capacity(cu * cv);
    for i in 0..cu {
        for j in 0..cv {
            uv.push(at(i, j));
        }
    }
    let mut tris = Vec::with_capacity(2 * nu * nv);
    let mut tri_uv = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            let (a, b, c, d) = ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1));
            let pair = if (i + j) % 2 == 0 { [[a, b, c], [a, c, d]] } else { [[a, b, d], [b, c, d]] };
            for t in pair {
                tris.push([idx(t[0].0, t[0].1), idx(t[1].0, t[1].1), idx(t[2].0, t[2].1)]);
                tri_uv.push([at(t[0].0, t[0].1), at(t[1].0, t[1].1), at(t[2].0, t[2].1)]);
            }
        }
    }
    let mut be = Vec::new();
    match (pu, pv) {
        (true, true) => {}
        (false, true) => {
            for j in 0..nv {
                be.push((idx(0, j + 1), idx(0, j), 0));
            }
            for j in 0..nv {
                be.push((idx(nu, j), idx(nu, j + 1), 1));
            }
        }
        (true, false) => {
            for i in 0..nu {
                be.push((idx(i, 0), idx(i + 1, 0), 0));
            }
            for i in 0..nu {
                be.push((idx(i + 1, nv), idx(i, nv), 1));
            }
        }
        (false, false) => {
            for i in 0..nu {
                be.push((idx(i, 0), idx(i + 1, 0), 0));
            }
            for j in 0..nv {
                be.push((idx(nu, j), idx(nu, j + 1), 0));
            }
            for i in (0..nu).rev() {
                be.push((idx(i + 1, nv), idx(i, nv), 0));
            }
            for j in (0..nv).rev() {
                be.push((idx(0, j + 1), idx(0, j), 0));
            }
        }
    }
    (uv, tris, tri_uv, be)
}

fn disc_mesh(radius: f64, counts: &[usize]) -> RawMesh {
    let two_pi = 2.0 * std::f64::consts::PI;
    let nr = counts.len();
    let mut uv = vec![[0.0, 0.0]];
    let mut start = vec![0usize];
    for (k, &n) in counts.iter().enumerate() {
        start.push(uv.len());
        let r = radius * (k + 1) as f64 / nr as f64;
        // Stagger alternate rings to keep triangles well shaped.
        let off = if k % 2 == 1 { 0.5 } else { 0.0 };
        for m in 0..n {
            let th = two_pi * (m as f64 + off) / n as f64;
            uv.push([r * th.cos(), r * th.sin()]);
        }
    }
    let angle = |p: [f64; 2]| p[1].atan2(p[0]).rem_euclid(two_pi);
    let mut tris = Vec::new();
    let n1 = counts[0];
    for m in 0..n1 {
        tris.push([0, start[1] + m, start[1] + (m + 1) % n1]);
    }
    for k in 1..nr {
        let (na, nb) = (counts[k - 1], counts[k]);
        let (sa, sb) = (start[k], start[k + 1]);
        // Merge the two rings by angle, starting from each ring's first vertex.
        let ang_a: Vec<f64> = (0..=na).map(|m| angle(uv[sa + m % na]) + if m == na { two_pi } else { 0.0 }).collect();
        let ang_b: Vec<f64> = (0..=nb).map(|m| angle(uv[sb + m % nb]) + if m == nb { two_pi } else { 0.0 }).collect();
        let (mut i, mut j) = (0usize, 0usize);
        while i < na || j < nb {
            let adv_a = if i == na {
                false
            } else if j == nb {
                true
            } else {
                ang_a[i + 1] < ang_b[j + 1]
            };
            if adv_a {
                tris.push([sa + i % na, sa + (i + 1) % na, sb + j % nb]);
                i += 1;
            } else {
                tris.push([sa + i % na, sb + j % nb, sb + (j + 1) % nb]);
                j += 1;
            }
        }
    }
    for t in tris.iter_mut() {
        let (p0, p1, p2) = (uv[t[0]], uv[t[1]], uv[t[2]]);
        let a = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        if a < 0.0 {
            t.swap(1, 2);
        }
    }
    let tri_uv = tris.iter().map(|t| [uv[t[0]], uv[t[1]], uv[t[2]]]).collect();
    let so = start[nr];
    let no = counts[nr - 1];
    let be = (0..no).map(|m| (so + m, so + (m + 1) % no, 0)).collect();
    (uv, tris, tri_uv, be)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::builtin::{clifford_torus, flat_disc, half_clifford_torus, half_equator};
    use std::f64::consts::PI;

    #[test]
    fn seam_edges_have_short_length() {
        let m = mesh_parametric(&half_clifford_torus(), 0.2).unwrap();
        let longest = m.boundary_edge_len.iter().cloned().fold(0.0, f64::max);
        assert!(longest < 0.25, "{longest}");
        assert!((m.boundary_length() - 2.0 * 2f64.sqrt() * PI).abs() < 1e-2);
    }

    #[test]
    fn euler_characteristics() {
        let m = mesh_parametric(&half_clifford_torus(), 0.1).unwrap();
        assert_eq!(m.euler_characteristic(), 0);
        let expect = (PI / 2f64.sqrt() / 0.1).ceil() * (2f64.sqrt() * PI / 0.1).ceil();
        assert!((m.n_vertices() as f64 - expect).abs() / expect < 0.1);
        let m = mesh_parametric(&clifford_torus(), 0.2).unwrap();
        assert_eq!(m.euler_characteristic(), 0);
        assert!(m.boundary_edges.is_empty());
        let m = mesh_parametric(&flat_disc(1.0).unwrap(), 0.1).unwrap();
        assert_eq!(m.euler_characteristic(), 1);
        let m = mesh_parametric(&half_equator(1.0, 1.0).unwrap(), 0.1).unwrap();
        assert_eq!(m.euler_characteristic(), 1);
    }

    #[test]
    fn boundary_loops_close() {
        for s in [half_clifford_torus(), flat_disc(0.8).unwrap()] {
            let m = mesh_parametric(&s, 0.1).unwrap();
            let mut out_deg = vec![0i32; m.n_vertices()];
            for &(i, j, _) in &m.boundary_edges {
                out_deg[i] += 1;
                out_deg[j] -= 1;
            }
            assert!(out_deg.iter().all(|&d| d == 0));
            // Every boundary edge belongs to exactly one triangle, with matching orientation.
            for &(i, j, _) in &m.boundary_edges {
                let n = m.tris.iter().filter(|t| (0..3).any(|k| t[k] == i && t[(k + 1) % 3] == j)).count();
                assert_eq!(n, 1);
            }
        }
    }

    #[test]
    fn area_converges_quadratically() {
        let s = half_equator(PI / 2.0, PI / 2.0).unwrap();
        let e1 = (mesh_parametric(&s, 0.2).unwrap().area() - 2.0 * PI).abs();
        let e2 = (mesh_parametric(&s, 0.1).unwrap().area() - 2.0 * PI).abs();
        let order = (e1 / e2).log2();
        assert!(order > 1.7, "order {order} ({e1:e}, {e2:e})");
    }

    #[test]
    fn dump_format() {
        let m = mesh_parametric(&flat_disc(0.5).unwrap(), 0.25).unwrap();
        let d = m.dump();
        assert!(d.lines().any(|l| l.starts_with("v ")));
        assert!(d.lines().any(|l| l.starts_with("f ")));
        assert!(d.lines().any(|l| l.starts_with("be ")));
        assert!(d.ends_with('\n'));
    }
}
