//! P1 finite-element realisation of the forms `Q_{p,q}` and their Robin,
//! Dirichlet and modified Steklov spectra.

use log::warn;
use nalgebra::{DMatrix, DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::fmt17;
use crate::linalg::{lowest_eigenpairs, pcg, solve_gevp, CsrMatrix, EigOptions, Eigen, EnvelopeCholesky};
use crate::surface::TriMesh;

/// Default constant in `zero_tol = C_z·h²`.
pub const ZERO_TOL_CONSTANT: f64 = 5.0;

/// Discrete form `Q(u) = ∫(|∇u|² − p u²) − ∫_∂ q u²`.
#[derive(Clone, Debug)]
pub struct FormSpec {
    pub mesh: TriMesh,
    /// Interior coefficient at each vertex.
    pub p: Vec<f64>,
    /// Boundary coefficient at each vertex; entries at interior vertices are ignored.
    pub q: Vec<f64>,
}

impl FormSpec {
    pub fn new(mesh: TriMesh, p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        let n = mesh.n_vertices();
        if p.len() != n || q.len() != n {
            return Err(Error::Domain(format!(
                "coefficient lengths {} and {} do not match {n} vertices",
                p.len(),
                q.len()
            )));
        }
        if p.iter().chain(&q).any(|v| !v.is_finite()) {
            return Err(Error::Domain("form coefficients must be finite".into()));
        }
        if mesh.tris.is_empty() {
            return Err(Error::Domain("mesh has no triangles".into()));
        }
        Ok(FormSpec { mesh, p, q })
    }

    pub fn constant(mesh: TriMesh, p: f64, q: f64) -> Result<Self> {
        let n = mesh.n_vertices();
        Self::new(mesh, vec![p; n], vec![q; n])
    }
}

/// Assembled P1 matrices of a form.
#[derive(Clone, Debug)]
pub struct AssembledForm {
    pub k: CsrMatrix,
    pub m: CsrMatrix,
    pub mp: CsrMatrix,
    pub b: CsrMatrix,
    pub bq: CsrMatrix,
    pub interior: Vec<usize>,
    pub boundary: Vec<usize>,
    pub zero_tol: f64,
    pub n_components: usize,
}

impl AssembledForm {
    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    /// `K − M_p`, the interior part of the form.
    pub fn interior_form(&self) -> CsrMatrix {
        CsrMatrix::lin_comb(&[(1.0, &self.k), (-1.0, &self.mp)])
    }

    /// `K − M_p − B_q`.
    pub fn q_matrix(&self) -> CsrMatrix {
        CsrMatrix::lin_comb(&[(1.0, &self.k), (-1.0, &self.mp), (-1.0, &self.bq)])
    }

    pub fn q_value(&self, u: &[f64]) -> f64 {
        self.k.quad(u) - self.mp.quad(u) - self.bq.quad(u)
    }

    pub fn with_zero_tol(mut self, zero_tol: f64) -> Self {
        self.zero_tol = zero_tol;
        self
    }

    pub fn is_closed(&self) -> bool {
        self.boundary.is_empty()
    }
}

fn element_matrices(uv: &[[f64; 2]; 3], g: &Matrix2<f64>) -> Result<(f64, [[f64; 3]; 3])> {
    let j = Matrix2::new(uv[1][0] - uv[0][0], uv[2][0] - uv[0][0], uv[1][1] - uv[0][1], uv[2][1] - uv[0][1]);
    let det = j.determinant();
    let dg = g.determinant();
    if !(det > 0.0) || !(dg > 0.0) {
        return Err(Error::Degenerate(format!("element with parameter area {det:e} and metric determinant {dg:e}")));
    }
    let ji = j.try_inverse().ok_or_else(|| Error::Degenerate("singular element".into()))?;
    let gi = g.try_inverse().ok_or_else(|| Error::Degenerate("singular metric".into()))?;
    let g1 = ji.row(0).transpose();
    let g2 = ji.row(1).transpose();
    let grads = [-g1 - g2, g1, g2];
    let area = 0.5 * det * dg.sqrt();
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = area * (grads[a].transpose() * gi * grads[b])[0];
        }
    }
    Ok((area, k))
}

fn components(n: usize, tris: &[[usize; 3]]) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for t in tris {
        for k in 1..3 {
            let (a, b) = (find(&mut parent, t[0]), find(&mut parent, t[k]));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

type Trip = Vec<(usize, usize, f64)>;

/// Assemble stiffness, consistent mass, weighted mass and boundary matrices.
pub fn assemble(form: &FormSpec) -> Result<AssembledForm> {
    let mesh = &form.mesh;
    let n = mesh.n_vertices();
    let p = &form.p;
    let chunks: Vec<Result<(Trip, Trip, Trip)>> = (0..mesh.tris.len())
        .collect::<Vec<_>>()
        .par_chunks(512)
        .map(|ts| {
            let (mut kt, mut mt, mut pt) = (Vec::new(), Vec::new(), Vec::new());
            for &t in ts {
                let tri = mesh.tris[t];
                let (area, ke) = element_matrices(&mesh.tri_uv[t], &mesh.tri_metric[t])?;
                for a in 0..3 {
                    for b in 0..3 {
                        kt.push((tri[a], tri[b], ke[a][b]));
                        mt.push((tri[a], tri[b], area * if a == b { 2.0 } else { 1.0 } / 12.0));
                        let mut w = 0.0;
                        for c in 0..3 {
                            let mult = match (a == b, b == c, a == c) {
                                (true, true, _) => 1.0 / 10.0,
                                (false, false, false) => 1.0 / 60.0,
                                _ => 1.0 / 30.0,
                            };
                            w += p[tri[c]] * mult;
                        }
                        pt.push((tri[a], tri[b], area * w));
                    }
                }
            }
            Ok((kt, mt, pt))
        })
        .collect();
    let (mut kt, mut mt, mut pt) = (Vec::new(), Vec::new(), Vec::new());
    for c in chunks {
        let (a, b, d) = c?;
        kt.extend(a);
        mt.extend(b);
        pt.extend(d);
    }
    let (mut bt, mut bqt) = (Vec::new(), Vec::new());
    for (e, &(i, j, _)) in mesh.boundary_edges.iter().enumerate() {
        let l = mesh.boundary_edge_len[e];
        if !(l > 0.0) {
            return Err(Error::Degenerate(format!("boundary edge {e} has length {l:e}")));
        }
        let (qi, qj) = (form.q[i], form.q[j]);
        bt.extend([(i, i, l / 3.0), (j, j, l / 3.0), (i, j, l / 6.0), (j, i, l / 6.0)]);
        bqt.extend([
            (i, i, l * (qi / 4.0 + qj / 12.0)),
            (j, j, l * (qj / 4.0 + qi / 12.0)),
            (i, j, l * (qi + qj) / 12.0),
            (j, i, l * (qi + qj) / 12.0),
        ]);
    }
    let h = mesh.target_h;
    Ok(AssembledForm {
        k: CsrMatrix::from_triplets(n, n, kt),
        m: CsrMatrix::from_triplets(n, n, mt),
        mp: CsrMatrix::from_triplets(n, n, pt),
        b: CsrMatrix::from_triplets(n, n, bt),
        bq: CsrMatrix::from_triplets(n, n, bqt),
        interior: mesh.interior_vertices(),
        boundary: mesh.boundary_vertices(),
        zero_tol: ZERO_TOL_CONSTANT * h * h,
        n_components: components(n, &mesh.tris),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumKind {
    Robin,
    Dirichlet,
    Steklov,
}

/// Sign classification `(negative, zero, positive)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

impl Counts {
    pub fn classify(values: &[f64], zero_tol: f64) -> Self {
        let mut c = Counts::default();
        for &v in values {
            if v < -zero_tol {
                c.negative += 1;
            } else if v > zero_tol {
                c.positive += 1;
            } else {
                c.zero += 1;
            }
        }
        c
    }
}

/// Eigenvalues with per-vertex eigenfunctions.
#[derive(Clone, Debug)]
pub struct SpectrumReport {
    pub kind: SpectrumKind,
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenfunctions on all mesh vertices.
    pub eigenfunctions: DMatrix<f64>,
    pub zero_tol: f64,
    pub counts: Counts,
    /// Dimension of the Dirichlet kernel deflated from a Steklov problem.
    pub deflated: usize,
}

/// Serializable part of a [`SpectrumReport`].
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumSummary {
    pub kind: SpectrumKind,
    pub eigenvalues: Vec<f64>,
    pub counts: Counts,
    pub zero_tol: f64,
}

impl SpectrumReport {
    pub fn summary(&self) -> SpectrumSummary {
        SpectrumSummary {
            kind: self.kind,
            eigenvalues: self.eigenvalues.clone(),
            counts: self.counts,
            zero_tol: self.zero_tol,
        }
    }

    /// CSV with one row per vertex and one column per eigenfunction.
    pub fn eigenfunction_csv(&self) -> String {
        let k = self.eigenfunctions.ncols();
        let mut s = String::from("vertex");
        for j in 0..k {
            s.push_str(&format!(",phi{j}"));
        }
        s.push('\n');
        for i in 0..self.eigenfunctions.nrows() {
            s.push_str(&i.to_string());
            for j in 0..k {
                s.push(',');
                s.push_str(&fmt17(self.eigenfunctions[(i, j)]));
            }
            s.push('\n');
        }
        s
    }
}

fn scatter(n: usize, idx: &[usize], v: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, v.ncols());
    for (r, &i) in idx.iter().enumerate() {
        for c in 0..v.ncols() {
            out[(i, c)] = v[(r, c)];
        }
    }
    out
}

/// Lowest `count` eigenpairs of `(K − M_p − B_q) v = λ M v`.
pub fn robin_spectrum(form: &AssembledForm, count: usize) -> Result<SpectrumReport> {
    let eig = lowest_eigenpairs(&form.q_matrix(), &form.m, count.min(form.n()), &EigOptions::default())?;
    Ok(SpectrumReport {
        kind: SpectrumKind::Robin,
        counts: Counts::classify(&eig.values, form.zero_tol),
        eigenvalues: eig.values,
        eigenfunctions: eig.vectors,
        zero_tol: form.zero_tol,
        deflated: 0,
    })
}

fn dirichlet_eigen(form: &AssembledForm, count: usize) -> Result<Eigen> {
    if form.interior.is_empty() {
        return Err(Error::Domain("mesh has no interior vertices".into()));
    }
    let a = form.interior_form().submatrix(&form.interior, &form.interior);
    let m = form.m.submatrix(&form.interior, &form.interior);
    lowest_eigenpairs(&a, &m, count.min(form.interior.len()), &EigOptions::default())
}

/// Lowest `count` eigenpairs with `u = 0` on the boundary.
pub fn dirichlet_spectrum(form: &AssembledForm, count: usize) -> Result<SpectrumReport> {
    let eig = dirichlet_eigen(form, count)?;
    Ok(SpectrumReport {
        kind: SpectrumKind::Dirichlet,
        counts: Counts::classify(&eig.values, form.zero_tol),
        eigenvalues: eig.values,
        eigenfunctions: scatter(form.n(), &form.interior, &eig.vectors),
        zero_tol: form.zero_tol,
        deflated: 0,
    })
}

/// Dirichlet eigenpairs up to and including the first one above `zero_tol`.
fn dirichlet_through_gap(form: &AssembledForm) -> Result<Eigen> {
    let ni = form.interior.len();
    let mut count = 8.min(ni);
    loop {
        let eig = dirichlet_eigen(form, count)?;
        if eig.values.last().is_some_and(|&v| v > form.zero_tol) || count == ni {
            return Ok(eig);
        }
        count = (2 * count).min(ni);
    }
}

/// Solver for `A_II x = b` on data compatible with the Dirichlet kernel.
struct InteriorSolver {
    a: CsrMatrix,
    direct: Option<EnvelopeCholesky>,
    precond: Option<EnvelopeCholesky>,
    /// Deflated modes, `M`-orthonormal.
    w: DMatrix<f64>,
    mw: DMatrix<f64>,
    lambda: Vec<f64>,
    kernel: Vec<bool>,
    mu: f64,
}

impl InteriorSolver {
    fn new(form: &AssembledForm, eig: &Eigen) -> Result<Self> {
        let idx = &form.interior;
        let a = form.interior_form().submatrix(idx, idx);
        let m = form.m.submatrix(idx, idx);
        let ni = idx.len();
        let tol = form.zero_tol;
        if eig.values[0] > tol {
            if let Ok(f) = EnvelopeCholesky::factor(&a) {
                return Ok(InteriorSolver {
                    a,
                    direct: Some(f),
                    precond: None,
                    w: DMatrix::zeros(ni, 0),
                    mw: DMatrix::zeros(ni, 0),
                    lambda: vec![],
                    kernel: vec![],
                    mu: 0.0,
                });
            }
        }
        let nd = eig.values.iter().take_while(|&&v| v <= tol).count();
        let mu = eig.values.get(nd).copied().ok_or_else(|| Error::Singular {
            kernel_dim: nd,
            detail: "every interior mode lies at or below zero".into(),
        })?;
        let w = eig.vectors.columns(0, nd).into_owned();
        let mw = m.mul_dense(&w);
        let sigma = eig.values[0] - 1.0;
        let shifted = CsrMatrix::lin_comb(&[(1.0, &a), (-sigma, &m)]);
        let precond = EnvelopeCholesky::factor(&shifted).map_err(|e| Error::Singular {
            kernel_dim: nd,
            detail: format!("shifted interior factorisation failed: {e}"),
        })?;
        let lambda = eig.values[..nd].to_vec();
        let kernel = lambda.iter().map(|v| v.abs() <= tol).collect();
        Ok(InteriorSolver { a, direct: None, precond: Some(precond), w, mw, lambda, kernel, mu })
    }

    fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if let Some(f) = &self.direct {
            return Ok(f.solve(b));
        }
        let bv = DVector::from_column_slice(b);
        let c = self.w.transpose() * &bv;
        let mut x = DVector::zeros(b.len());
        for k in 0..c.len() {
            if !self.kernel[k] {
                x += self.w.column(k) * (c[k] / self.lambda[k]);
            }
        }
        let r = &bv - &self.mw * &c;
        let shift: Vec<f64> = self.lambda.iter().map(|l| self.mu - l).collect();
        let apply = |v: &[f64]| {
            let mut y = self.a.mul_vec(v);
            let coef = self.mw.transpose() * DVector::from_column_slice(v);
            for k in 0..coef.len() {
                let s = shift[k] * coef[k];
                for (yi, mi) in y.iter_mut().zip(self.mw.column(k).iter()) {
                    *yi += s * mi;
                }
            }
            y
        };
        let pre = self.precond.as_ref().unwrap();
        let xp = pcg(apply, |v| pre.solve(v), r.as_slice(), 1e-13, 5000)?;
        Ok((x + DVector::from_vec(xp)).data.into())
    }
}

/// Orthonormal basis of the Euclidean complement of the columns of `g`.
fn complement_basis(n: usize, g: &DMatrix<f64>) -> DMatrix<f64> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for c in 0..g.ncols() {
        let mut v = g.column(c).into_owned();
        for _ in 0..2 {
            for b in &basis {
                v -= b * b.dot(&v);
            }
        }
        let nv = v.norm();
        if nv > 1e-10 * g.column(c).norm().max(f64::MIN_POSITIVE) {
            basis.push(v / nv);
        }
    }
    let nc = basis.len();
    for i in 0..n {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                v -= b * b.dot(&v);
            }
        }
        let nv = v.norm();
        if nv > 1e-6 {
            basis.push(v / nv);
        }
        if basis.len() == n {
            break;
        }
    }
    DMatrix::from_columns(&basis[nc..])
}

/// Data of the Dirichlet-to-Robin reduction.
struct Reduction {
    /// Harmonic extension operator: interior values `= ext · f`.
    ext: DMatrix<f64>,
    /// `S − B_q` on boundary dofs.
    s_minus_bq: DMatrix<f64>,
    b: DMatrix<f64>,
    /// Neumann traces `(A w)_Γ` of the Dirichlet kernel.
    g: DMatrix<f64>,
    lambda_d0: f64,
}

fn reduce(form: &AssembledForm) -> Result<Reduction> {
    let gam = &form.boundary;
    let idx = &form.interior;
    if gam.is_empty() {
        return Err(Error::Domain("Steklov problem needs a nonempty boundary".into()));
    }
    let a = form.interior_form();
    let a_gg = a.submatrix(gam, gam).to_dense();
    let b = form.b.submatrix(gam, gam).to_dense();
    let bq = form.bq.submatrix(gam, gam).to_dense();
    let nb = gam.len();
    if idx.is_empty() {
        return Ok(Reduction {
            ext: DMatrix::zeros(0, nb),
            s_minus_bq: a_gg - bq,
            b,
            g: DMatrix::zeros(nb, 0),
            lambda_d0: f64::INFINITY,
        });
    }
    let eig = dirichlet_through_gap(form)?;
    let solver = InteriorSolver::new(form, &eig)?;
    let a_ig = a.submatrix(idx, gam);
    let cols: Vec<Result<Vec<f64>>> = (0..nb)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![0.0; nb];
            e[j] = 1.0;
            let rhs: Vec<f64> = a_ig.mul_vec(&e).iter().map(|v| -v).collect();
            solver.solve(&rhs)
        })
        .collect();
    let mut ext = DMatrix::zeros(idx.len(), nb);
    for (j, c) in cols.into_iter().enumerate() {
        let c = c.map_err(|e| Error::Singular {
            kernel_dim: solver.kernel.iter().filter(|&&k| k).count(),
            detail: format!("interior solve failed after deflation: {e}"),
        })?;
        ext.set_column(j, &DVector::from_vec(c));
    }
    let a_gi = a.submatrix(gam, idx);
    let mut s = a_gg + a_gi.mul_dense(&ext);
    s = (&s + s.transpose()) * 0.5;
    let kernel_cols: Vec<usize> = (0..solver.kernel.len()).filter(|&k| solver.kernel[k]).collect();
    let w0 = solver.w.select_columns(&kernel_cols);
    let g = a_gi.mul_dense(&w0);
    Ok(Reduction { ext, s_minus_bq: s - bq, b, g, lambda_d0: eig.values[0] })
}

/// Modified Steklov spectrum `(∂_η − q) u = λ u` of `(Δ + p)`-harmonic functions.
///
/// When the Dirichlet problem has a kernel, boundary data are restricted to
/// the complement of its discrete Neumann traces and the interior solve is
/// deflated.
pub fn steklov_spectrum(form: &AssembledForm, count: usize) -> Result<SpectrumReport> {
    let r = reduce(form)?;
    let nb = form.boundary.len();
    let z = complement_basis(nb, &r.g);
    let a = z.transpose() * &r.s_minus_bq * &z;
    let bz = z.transpose() * &r.b * &z;
    let eig = solve_gevp(&((&a + a.transpose()) * 0.5), &((&bz + bz.transpose()) * 0.5), z.ncols())?;
    let counts = Counts::classify(&eig.values, form.zero_tol);
    let k = count.min(eig.values.len());
    let f = &z * eig.vectors.columns(0, k);
    let interior = &r.ext * &f;
    let mut phi = scatter(form.n(), &form.boundary, &f);
    for (row, &i) in form.interior.iter().enumerate() {
        for c in 0..k {
            phi[(i, c)] = interior[(row, c)];
        }
    }
    Ok(SpectrumReport {
        kind: SpectrumKind::Steklov,
        eigenvalues: eig.values[..k].to_vec(),
        eigenfunctions: phi,
        zero_tol: form.zero_tol,
        counts,
        deflated: r.g.ncols(),
    })
}

/// Index bookkeeping by Dirichlet plus Steklov counts and by Robin counts.
#[derive(Clone, Debug, Serialize)]
pub struct IndexReport {
    pub a: usize,
    pub b: usize,
    pub ind: usize,
    pub ind_robin: usize,
    pub nullity: usize,
    pub agreement: bool,
    pub zero_tol: f64,
    pub warnings: Vec<String>,
}

/// All eigenvalues of the pencil below `2·zero_tol`, plus one above.
fn values_through(a: &CsrMatrix, m: &CsrMatrix, zero_tol: f64) -> Result<Vec<f64>> {
    let n = a.nrows();
    let mut count = 16.min(n);
    loop {
        let eig = lowest_eigenpairs(a, m, count, &EigOptions::default())?;
        if eig.values.last().is_some_and(|&v| v > 2.0 * zero_tol) || count == n {
            return Ok(eig.values);
        }
        count = (2 * count).min(n);
    }
}

fn ambiguity(kind: &str, values: &[f64], tol: f64, warnings: &mut Vec<String>) {
    for v in values {
        if v.abs() > tol && v.abs() < 2.0 * tol {
            let w = format!("{kind} eigenvalue {v:.6e} is within a factor 2 of zero_tol {tol:.3e}");
            warn!("{w}");
            warnings.push(w);
        }
    }
}

/// Count the index two ways.
///
/// On a closed mesh only the Robin count is available and `a` reports it.
pub fn index_count(form: &AssembledForm) -> Result<IndexReport> {
    let tol = form.zero_tol;
    let mut warnings = Vec::new();
    let robin = values_through(&form.q_matrix(), &form.m, tol)?;
    ambiguity("Robin", &robin, tol, &mut warnings);
    let rc = Counts::classify(&robin, tol);
    if form.is_closed() {
        return Ok(IndexReport {
            a: rc.negative,
            b: 0,
            ind: rc.negative,
            ind_robin: rc.negative,
            nullity: rc.zero,
            agreement: true,
            zero_tol: tol,
            warnings,
        });
    }
    let (a, dir) = if form.interior.is_empty() {
        (0, vec![])
    } else {
        let ai = form.interior_form().submatrix(&form.interior, &form.interior);
        let mi = form.m.submatrix(&form.interior, &form.interior);
        let d = values_through(&ai, &mi, tol)?;
        (d.iter().filter(|&&v| v <= tol).count(), d)
    };
    ambiguity("Dirichlet", &dir, tol, &mut warnings);
    let st = steklov_spectrum(form, 0)?;
    let b = st.counts.negative;
    let ind = a + b;
    Ok(IndexReport {
        a,
        b,
        ind,
        ind_robin: rc.negative,
        nullity: st.counts.zero,
        agreement: ind == rc.negative,
        zero_tol: tol,
        warnings,
    })
}

/// One inequality of the comparison lemma evaluated on trials.
#[derive(Clone, Debug, Serialize)]
pub struct ComparisonItem {
    pub name: String,
    pub applicable: bool,
    pub trials: usize,
    /// Smallest `lhs − rhs` over trials, normalised by `‖u‖²_M + ‖u‖²_B`.
    pub min_slack: f64,
    /// Allowed slack floor.
    pub floor: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    pub lambda_d0: f64,
    pub steklov: Vec<f64>,
    pub items: Vec<ComparisonItem>,
    pub passed: bool,
}

/// Random per-vertex trial vectors.
pub fn random_trials(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

/// Check the comparison inequalities, first-Steklov simplicity and
/// extension minimality on the supplied trials.
pub fn comparison_check(form: &AssembledForm, trials: &[Vec<f64>]) -> Result<ComparisonReport> {
    let tol = form.zero_tol;
    let red = reduce(form)?;
    let nb = form.boundary.len();
    let z = complement_basis(nb, &red.g);
    let st = steklov_spectrum(form, nb)?;
    let l0 = red.lambda_d0;
    let lam_s = st.eigenvalues.clone();
    let phi0: Vec<f64> = form.boundary.iter().map(|&i| st.eigenfunctions[(i, 0)]).collect();
    let a = form.interior_form();
    let dir0 = if form.interior.is_empty() { f64::INFINITY } else { dirichlet_eigen(form, 1)?.values[0] };
    let norm = |u: &[f64]| form.m.quad(u) + form.b.quad(u);
    let bq_lam = |u: &[f64], l: f64| form.bq.quad(u) + l * form.b.quad(u);
    // Q(v) ≥ λ^D_0‖v‖² bounds how far below zero a discretely negative kernel can pull.
    let kernel_floor = |v_norm: f64| -1e-8 - (-dir0).max(0.0) * v_norm;
    let extend = |f: &[f64]| -> Vec<f64> {
        let fv = DVector::from_column_slice(f);
        let inner = &red.ext * &fv;
        let mut u = vec![0.0; form.n()];
        for (k, &i) in form.boundary.iter().enumerate() {
            u[i] = f[k];
        }
        for (k, &i) in form.interior.iter().enumerate() {
            u[i] = inner[k];
        }
        u
    };
    let trace = |u: &[f64]| -> Vec<f64> { form.boundary.iter().map(|&i| u[i]).collect() };
    let set_trace = |u: &mut [f64], f: &[f64]| {
        for (k, &i) in form.boundary.iter().enumerate() {
            u[i] = f[k];
        }
    };
    let project_z = |f: &[f64]| -> Vec<f64> {
        let fv = DVector::from_column_slice(f);
        (&z * (z.transpose() * fv)).data.into()
    };
    let b_gam = &red.b;
    let mut items = Vec::new();
    let mut run =
        |name: &str, applicable: bool, floor_of: &dyn Fn(&[f64]) -> f64, slack_of: &dyn Fn(&mut Vec<f64>) -> f64| {
            let mut min_slack = f64::INFINITY;
            let mut passed = true;
            let mut floor = -1e-8;
            if applicable {
                for t in trials {
                    let mut u = t.clone();
                    let s = slack_of(&mut u);
                    let fl = floor_of(&u);
                    let nu = norm(&u).max(f64::MIN_POSITIVE);
                    min_slack = min_slack.min(s / nu);
                    floor = f64::min(floor, fl / nu);
                    if s < fl {
                        passed = false;
                    }
                }
            }
            items.push(ComparisonItem {
                name: name.into(),
                applicable,
                trials: if applicable { trials.len() } else { 0 },
                min_slack: if applicable { min_slack } else { 0.0 },
                floor,
                passed,
            });
        };
    let plain = |_: &[f64]| -1e-8;
    run("dirichlet_bound", !form.interior.is_empty(), &plain, &|u| {
        set_trace(u, &vec![0.0; nb]);
        a.quad(u) - dir0 * form.m.quad(u)
    });
    let pos = l0 > tol;
    let zero = l0.abs() <= tol;
    let ext_floor = |u: &[f64]| {
        let e = extend(&trace(u));
        let v: Vec<f64> = u.iter().zip(&e).map(|(x, y)| x - y).collect();
        kernel_floor(form.m.quad(&v))
    };
    run("steklov_bottom", pos && !lam_s.is_empty(), &plain, &|u| a.quad(u) - bq_lam(u, lam_s[0]));
    run("steklov_second", pos && lam_s.len() > 1, &plain, &|u| {
        let mut f = trace(u);
        let bphi = b_gam * DVector::from_column_slice(&phi0);
        let c: f64 = f.iter().zip(bphi.iter()).map(|(x, y)| x * y).sum();
        for (fi, pi) in f.iter_mut().zip(&phi0) {
            *fi -= c * pi;
        }
        set_trace(u, &f);
        a.quad(u) - bq_lam(u, lam_s[1])
    });
    run("steklov_kernel_orthogonal", zero && !lam_s.is_empty(), &ext_floor, &|u| {
        let f = project_z(&trace(u));
        set_trace(u, &f);
        a.quad(u) - bq_lam(u, lam_s[0])
    });
    run("extension_minimal", l0 >= -tol, &ext_floor, &|u| {
        let f = if zero { project_z(&trace(u)) } else { trace(u) };
        set_trace(u, &f);
        let e = extend(&f);
        a.quad(u) - a.quad(&e)
    });
    let gap_applicable = pos && form.n_components == 1 && lam_s.len() > 1;
    let gap = if gap_applicable { lam_s[1] - lam_s[0] } else { 0.0 };
    items.push(ComparisonItem {
        name: "steklov_simple".into(),
        applicable: gap_applicable,
        trials: 0,
        min_slack: gap,
        floor: tol,
        passed: !gap_applicable || gap > tol,
    });
    let passed = items.iter().all(|i| i.passed);
    Ok(ComparisonReport { lambda_d0: l0, steklov: lam_s, items, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::builtin::{flat_disc, flat_square};
    use crate::surface::mesh_parametric;
    use std::f64::consts::PI;

    fn square_form(h: f64, p: f64, q: f64) -> AssembledForm {
        let m = mesh_parametric(&flat_square(1.0).unwrap(), h).unwrap();
        assemble(&FormSpec::constant(m, p, q).unwrap()).unwrap()
    }

    #[test]
    fn constants_in_stiffness_kernel() {
        let f = square_form(0.1, 0.0, 0.0);
        assert!(f.k.row_sums().iter().all(|s| s.abs() < 1e-12));
        assert!(f.k.asymmetry() < 1e-12 && f.m.asymmetry() < 1e-12 && f.bq.asymmetry() < 1e-12);
        let one = vec![1.0; f.n()];
        assert!(f.q_value(&one).abs() < 1e-12);
        assert!((f.m.quad(&one) - 1.0).abs() < 1e-10);
        assert!((f.b.quad(&one) - 4.0).abs() < 1e-10);
    }

    #[test]
    fn constant_p_is_mass_multiple() {
        let f = square_form(0.2, 3.0, 0.0);
        let u: Vec<f64> = (0..f.n()).map(|i| (i as f64 * 0.37).sin()).collect();
        let lhs = f.q_value(&u);
        let rhs = f.k.quad(&u) - 3.0 * f.m.quad(&u);
        assert!((lhs - rhs).abs() < 1e-10 * rhs.abs().max(1.0));
    }

    #[test]
    fn q_shift_only_touches_boundary() {
        let f0 = square_form(0.2, 1.0, 0.5);
        let f1 = square_form(0.2, 1.0, 1.25);
        let u: Vec<f64> = (0..f0.n()).map(|i| (i as f64 * 0.11).cos()).collect();
        let d = f1.q_value(&u) - f0.q_value(&u);
        assert!((d + 0.75 * f0.b.quad(&u)).abs() < 1e-10);
    }

    #[test]
    fn square_dirichlet_and_robin() {
        let f = square_form(0.05, 0.0, 0.0);
        let d = dirichlet_spectrum(&f, 3).unwrap();
        assert!((d.eigenvalues[0] - 2.0 * PI * PI).abs() < 0.02 * 2.0 * PI * PI, "{:?}", d.eigenvalues);
        assert!((d.eigenvalues[1] - 5.0 * PI * PI).abs() < 0.04 * 5.0 * PI * PI);
        let r = robin_spectrum(&f, 3).unwrap();
        assert!(r.eigenvalues[0].abs() < 1e-8);
        assert!((r.eigenvalues[1] - PI * PI).abs() < 0.02 * PI * PI);
        let v = d.eigenfunctions.column(0);
        assert!(f.boundary.iter().all(|&i| v[i] == 0.0));
    }

    #[test]
    fn coercive_for_very_negative_p() {
        let f = square_form(0.1, -1e6, 0.0);
        let d = dirichlet_spectrum(&f, 1).unwrap();
        assert!(d.eigenvalues[0] > 0.0);
    }

    #[test]
    fn disc_steklov() {
        let m = mesh_parametric(&flat_disc(1.0).unwrap(), 0.06).unwrap();
        let f = assemble(&FormSpec::constant(m, 0.0, 0.0).unwrap()).unwrap();
        let s = steklov_spectrum(&f, 5).unwrap();
        let expect = [0.0, 1.0, 1.0, 2.0, 2.0];
        for (l, e) in s.eigenvalues.iter().zip(expect) {
            assert!((l - e).abs() <= 0.02 * f64::max(e, 1.0), "{:?}", s.eigenvalues);
        }
        assert_eq!(s.deflated, 0);
        // Eigenfunctions are discretely harmonic with unit boundary norm.
        let a = f.interior_form();
        for c in 0..5 {
            let v: Vec<f64> = s.eigenfunctions.column(c).iter().copied().collect();
            let av = a.mul_vec(&v);
            assert!(f.interior.iter().all(|&i| av[i].abs() < 1e-9));
            assert!((f.b.quad(&v) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn almost_coercive() {
        let m = mesh_parametric(&flat_disc(1.0).unwrap(), 0.15).unwrap();
        let n = m.n_vertices();
        let p: Vec<f64> = (0..n).map(|i| 2.0 + (i as f64).sin()).collect();
        let q: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
        let alpha = p.iter().chain(&q).cloned().fold(f64::MIN, f64::max) + 1.0;
        let f = assemble(&FormSpec::new(m, p, q).unwrap()).unwrap();
        for u in random_trials(n, 50, 3) {
            let h1 = f.k.quad(&u) + f.m.quad(&u);
            assert!(f.q_value(&u) >= h1 - alpha * (f.m.quad(&u) + f.b.quad(&u)) - 1e-10);
        }
    }

    #[test]
    fn comparison_on_disc() {
        let m = mesh_parametric(&flat_disc(1.0).unwrap(), 0.12).unwrap();
        let n = m.n_vertices();
        let f = assemble(&FormSpec::constant(m, 1.0, 0.3).unwrap()).unwrap();
        let rep = comparison_check(&f, &random_trials(n, 30, 9)).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.items.iter().find(|i| i.name == "steklov_simple").unwrap().applicable);
    }

    #[test]
    fn closed_torus_index() {
        let m = mesh_parametric(&crate::surface::builtin::clifford_torus(), 0.1).unwrap();
        let f = assemble(&FormSpec::constant(m, 4.0, 0.0).unwrap()).unwrap();
        let r = index_count(&f).unwrap();
        assert_eq!(r.ind, 5);
        assert_eq!(r.nullity, 4);
    }
}
