//! Property suites behind `capflow verify` and the acceptance target.

use std::f64::consts::{FRAC_PI_2, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use serde::Serialize;

use capflow_core::conformal::{
    cap_image, conf_cap_element, conformal_factor, flow_cap, flow_point, lies_on_slice, moebius_apply, moebius_inverse,
    moving_radius, realize_by_flow, slice_image, u_along_flow, Cap, FlowSpec, MoebiusMap, SpherePoint,
};
use capflow_core::functionals::{
    blowup_bound_check, energy, euclidean_limit_trace, monotonicity_trace, willmore_identity_report, EuclideanSurface,
    TraceOptions,
};
use capflow_core::index_lab::{
    build_index_problem, conformal_balance, dual_annulus, dual_form_identity_check, dual_params,
    verify_coordinate_eigenfunctions, verify_gauss_eigenfunctions, BalanceOptions, Flavor,
};
use capflow_core::spectral::{assemble, index_count, robin_spectrum, steklov_spectrum, FormSpec, IndexReport};
use capflow_core::surface::builtin::{clifford_torus, flat_disc, half_clifford_torus, half_equator};
use capflow_core::surface::{mesh_parametric, BoundaryFrame, ParametricSurface, QuadOptions};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn unit(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)).normalize()
}

fn ball(rng: &mut ChaCha8Rng, n: usize, rmax: f64) -> DVector<f64> {
    unit(rng, n) * rng.gen_range(0.0..rmax)
}

fn rotation(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut q = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
    if q.determinant() < 0.0 {
        let c = -q.column(0);
        q.set_column(0, &c);
    }
    q
}

/// Random element of the conformal group of `B_R(e_0)`.
fn cap_map(radius: f64, rng: &mut ChaCha8Rng) -> MoebiusMap {
    let mut rot = DMatrix::identity(4, 4);
    rot.view_mut((1, 1), (3, 3)).copy_from(&rotation(rng, 3));
    let mut y = ball(rng, 3, 0.7).insert_row(0, 0.0);
    y[0] = 0.0;
    conf_cap_element(radius, &rot, &y).expect("valid cap element")
}

fn close(l: f64, e: f64) -> bool {
    (l - e).abs() <= 0.02 * e.abs().max(1.0)
}

fn c1_conformal_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let y = ball(&mut rng, 4, 0.95);
        let x = SpherePoint::new(unit(&mut rng, 4)).map_err(err)?;
        let fwd = MoebiusMap::translation(y.clone()).map_err(err)?;
        let back = MoebiusMap::translation(-y).map_err(err)?;
        let round = moebius_apply(&fwd, &moebius_apply(&back, &x).map_err(err)?).map_err(err)?;
        worst = worst.max((round.coords() - x.coords()).amax());
        // Image of a cap is a cap: its boundary points stay equidistant from the new center.
        let cap = Cap::new(SpherePoint::new(unit(&mut rng, 4)).map_err(err)?, rng.gen_range(0.2..2.9)).map_err(err)?;
        let map = MoebiusMap::new(rotation(&mut rng, 4), ball(&mut rng, 4, 0.9)).map_err(err)?;
        let img = cap_image(&map, &cap).map_err(err)?;
        for p in cap.boundary_frame_points() {
            let q = moebius_apply(&map, &SpherePoint::new(p).map_err(err)?).map_err(err)?;
            worst = worst.max((q.distance(img.center()) - img.radius()).abs());
        }
    }
    ensure(worst < 1e-9, || format!("max defect {worst:.3e}"))?;
    Ok(format!("max defect {worst:.2e} over 100 triples"))
}

fn c2_flow_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let (mut ode, mut closed): (f64, f64) = (0.0, 0.0);
    for _ in 0..5 {
        let spec = FlowSpec::new(SpherePoint::new(unit(&mut rng, 4)).map_err(err)?);
        let x0 = unit(&mut rng, 4);
        let mut x = x0.clone();
        let dt = 1e-3;
        for step in 1..=2000 {
            let k1 = spec.field(&x);
            let k2 = spec.field(&(&x + &k1 * (dt / 2.0)));
            let k3 = spec.field(&(&x + &k2 * (dt / 2.0)));
            let k4 = spec.field(&(&x + &k3 * dt));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            if step % 100 == 0 {
                let t = step as f64 * dt;
                let exact = flow_point(&spec, t, &SpherePoint::new(x0.clone()).map_err(err)?).map_err(err)?;
                ode = ode.max((exact.coords() - &x).amax());
                closed = closed.max((u_along_flow(spec.u(&x0), t) - spec.u(exact.coords())).abs());
            }
        }
    }
    ensure(ode < 1e-8 && closed < 1e-12, || format!("RK4 {ode:.3e}, closed form {closed:.3e}"))?;
    Ok(format!("RK4 gap {ode:.2e}, u_a gap {closed:.2e}"))
}

fn c3_cap_evolution() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let cap = Cap::polar(4, rng.gen_range(0.2..2.9)).map_err(err)?;
        let spec = FlowSpec::new(SpherePoint::new(unit(&mut rng, 4)).map_err(err)?);
        let t = rng.gen_range(0.0..2.0);
        let moved = flow_cap(&spec, t, &cap).map_err(err)?;
        worst = worst.max((moved.radius() - moving_radius(&spec, &cap, t)).abs());
    }
    let hemi = Cap::polar(4, FRAC_PI_2).map_err(err)?;
    let mut preserve: f64 = 0.0;
    for _ in 0..20 {
        let mut a = unit(&mut rng, 4);
        a[0] = 0.0;
        let spec = FlowSpec::new(SpherePoint::normalize(a).map_err(err)?);
        let t = rng.gen_range(0.0..2.0);
        preserve = preserve.max((flow_cap(&spec, t, &hemi).map_err(err)?.radius() - FRAC_PI_2).abs());
    }
    ensure(worst < 1e-9 && preserve < 1e-10, || format!("radius {worst:.3e}, hemisphere {preserve:.3e}"))?;
    Ok(format!("radius gap {worst:.2e}, hemisphere drift {preserve:.2e}"))
}

fn c4_flow_correspondence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let radius = rng.gen_range(0.3..2.8);
        let mut y = ball(&mut rng, 4, 0.9);
        y[0] = 0.0;
        let big = slice_image(radius, &y);
        if !lies_on_slice(&big, radius.cos(), 1e-10) {
            return Err("slice image off the slice".into());
        }
        let real = realize_by_flow(&big, radius).map_err(err)?;
        let map = real.map().map_err(err)?;
        let origin_img = map.apply_ball(&DVector::zeros(4)).map_err(err)?;
        worst = worst.max((origin_img - &big).amax());
        let cap = Cap::polar(4, radius).map_err(err)?;
        let img = cap_image(&map, &cap).map_err(err)?;
        worst = worst.max((img.radius() - radius).abs());
        worst = worst.max((img.center().coords() - cap.center().coords()).amax());
    }
    ensure(worst < 1e-9, || format!("max defect {worst:.3e}"))?;
    Ok(format!("max defect {worst:.2e} over 50 slice points"))
}

fn c5_monotonicity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let times: Vec<f64> = (0..=8).map(|i| i as f64 / 8.0).collect();
    let surfaces = [half_clifford_torus(), half_equator(FRAC_PI_2, 1.0).map_err(err)?];
    let mut runs = 0;
    for s in &surfaces {
        for _ in 0..5 {
            let spec = FlowSpec::new(SpherePoint::new(unit(&mut rng, 4)).map_err(err)?);
            let tr = monotonicity_trace(s, &spec, &times, &TraceOptions::default()).map_err(err)?;
            ensure(tr.is_monotone(), || format!("{} a={:?}: {:?}", s.name, spec.direction(), tr.violations))?;
            runs += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{runs} traces monotone within 60 s"))
}

fn c6_conformal_maximisation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut worst = f64::NEG_INFINITY;
    for (s, radius) in [(half_clifford_torus(), FRAC_PI_2), (half_equator(FRAC_PI_2, 1.1).map_err(err)?, FRAC_PI_2)] {
        let e0 = energy(&s).map_err(err)?.e_r_gamma.ok_or("no capillary energy")?;
        for _ in 0..50 {
            let m = cap_map(radius, &mut rng);
            let e = energy(&s.pushforward(&m).map_err(err)?).map_err(err)?.e_r_gamma.ok_or("no energy")?;
            worst = worst.max(e - e0);
        }
    }
    ensure(worst <= 1e-6, || format!("excess {worst:.3e}"))?;
    Ok(format!("largest excess {worst:.2e} over 100 images"))
}

fn c7_willmore_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let q = QuadOptions::default();
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let r = willmore_identity_report(&half_clifford_torus(), &cap_map(FRAC_PI_2, &mut rng), &q).map_err(err)?;
        worst = worst.max(r.free_boundary_residual.ok_or("no free boundary residual")?.abs());
        let he = half_equator(FRAC_PI_2, FRAC_PI_2).map_err(err)?;
        let r = willmore_identity_report(&he, &cap_map(FRAC_PI_2, &mut rng), &q).map_err(err)?;
        worst = worst.max(r.free_boundary_residual.ok_or("no free boundary residual")?.abs());
    }
    for g in [0.6, 1.2] {
        let s = half_equator(FRAC_PI_2, g).map_err(err)?;
        let r = willmore_identity_report(&s, &cap_map(FRAC_PI_2, &mut rng), &q).map_err(err)?;
        worst = worst.max(r.capillary_residual.ok_or("no capillary residual")?.abs());
    }
    ensure(worst < 1e-4, || format!("residual {worst:.3e}"))?;
    Ok(format!("max residual {worst:.2e}"))
}

fn c8_blowup() -> Outcome {
    let mut worst: f64 = 0.0;
    for g in [PI / 6.0, PI / 3.0, FRAC_PI_2] {
        let r = blowup_bound_check(&half_equator(FRAC_PI_2, g).map_err(err)?).map_err(err)?;
        ensure(r.holds, || format!("γ={g}: {r:?}"))?;
        worst = worst.max(r.margin.abs());
    }
    ensure(worst < 1e-8, || format!("margin {worst:.3e}"))?;
    Ok(format!("equality margin {worst:.2e}"))
}

fn c9_euclidean_limit() -> Outcome {
    let mut notes = vec![];
    for y in [[0.0; 3], [0.2, 0.0, 0.3]] {
        let disc = EuclideanSurface::flat_disc(y).map_err(err)?;
        let t = euclidean_limit_trace(&disc, &[0.4, 0.2, 0.1, 0.05], None, &QuadOptions::default()).map_err(err)?;
        let ao = t.area_order.ok_or("no area order")?;
        ensure(ao >= 1.9, || format!("y={y:?}: area order {ao:.3}"))?;
        // A free-boundary disc has its boundary on the cap sphere, so the rescaled length is exact.
        let exact = t.rows.iter().all(|r| (r.boundary_rescaled - t.euclidean_boundary).abs() < 1e-12);
        let bo = t.boundary_order;
        ensure(exact || bo.is_some_and(|o| o >= 1.9), || format!("y={y:?}: boundary order {bo:?}"))?;
        notes.push(format!(
            "area order {ao:.2}, length {}",
            if exact { "exact".into() } else { format!("order {:.2}", bo.unwrap_or(0.0)) }
        ));
    }
    Ok(notes.join("; "))
}

fn c10_spectral_oracles() -> Outcome {
    let check = |name: &str, got: &[f64], want: &[f64]| {
        ensure(got.len() >= want.len() && got.iter().zip(want).all(|(l, e)| close(*l, *e)), || {
            format!("{name}: {got:?} vs {want:?}")
        })
    };
    let hemi = half_equator(FRAC_PI_2, FRAC_PI_2).map_err(err)?;
    let f = assemble(&FormSpec::constant(mesh_parametric(&hemi, 0.05).map_err(err)?, 2.0, 0.0).map_err(err)?)
        .map_err(err)?;
    check("hemisphere", &robin_spectrum(&f, 6).map_err(err)?.eigenvalues, &[-2.0, 0.0, 0.0, 4.0, 4.0, 4.0])?;
    let f =
        build_index_problem(&half_clifford_torus(), Flavor::Spectral, 0.05).map_err(err)?.assemble().map_err(err)?;
    check("half clifford", &robin_spectrum(&f, 4).map_err(err)?.eigenvalues, &[-2.0, 0.0, 0.0, 0.0])?;
    let disc = flat_disc(1.0).map_err(err)?;
    let f = assemble(&FormSpec::constant(mesh_parametric(&disc, 0.05).map_err(err)?, 0.0, 0.0).map_err(err)?)
        .map_err(err)?;
    check("disc steklov", &steklov_spectrum(&f, 5).map_err(err)?.eigenvalues, &[0.0, 1.0, 1.0, 2.0, 2.0])?;
    Ok("hemisphere Robin, half Clifford Robin and disc Steklov within 2%".into())
}

/// Index reports of the six (surface, flavor) pairs at h = 0.05.
type PairReports = Result<Vec<(String, Flavor, IndexReport)>, String>;

fn six_pairs() -> &'static PairReports {
    static CELL: OnceLock<PairReports> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut out = vec![];
        for (name, s) in [
            ("half_equator", half_equator(FRAC_PI_2, FRAC_PI_2).map_err(err)?),
            ("half_clifford_torus", half_clifford_torus()),
        ] {
            for fl in Flavor::ALL {
                let f = build_index_problem(&s, fl, 0.05).map_err(err)?.assemble().map_err(err)?;
                out.push((name.to_string(), fl, index_count(&f).map_err(err)?));
            }
        }
        Ok(out)
    })
}

fn c11_index_sum() -> Outcome {
    let pairs = six_pairs().as_ref().map_err(Clone::clone)?;
    for (name, fl, r) in pairs {
        ensure(r.a + r.b == r.ind_robin && r.agreement, || format!("{name} {fl:?}: {r:?}"))?;
    }
    Ok(format!(
        "ind = a + b = Robin count on {} pairs: {}",
        pairs.len(),
        pairs.iter().map(|(n, f, r)| format!("{n}/{}={}", f.as_str(), r.ind)).collect::<Vec<_>>().join(", ")
    ))
}

fn c12_index_values() -> Outcome {
    let pairs = six_pairs().as_ref().map_err(Clone::clone)?;
    let find = |n: &str, f: Flavor| pairs.iter().find(|p| p.0 == n && p.1 == f).map(|p| p.2.clone()).ok_or("missing");
    let he = find("half_equator", Flavor::Morse)?;
    ensure(he.ind == 1, || format!("half equator ind {}", he.ind))?;
    let hs = find("half_clifford_torus", Flavor::Spectral)?;
    ensure(hs.ind == 1 && hs.nullity == 3, || format!("half Clifford Q^S {hs:?}"))?;
    let ha = find("half_clifford_torus", Flavor::Morse)?;
    ensure(ha.ind == 4, || format!("half Clifford Q^A {ha:?}"))?;
    let f = build_index_problem(&clifford_torus(), Flavor::Morse, 0.05).map_err(err)?.assemble().map_err(err)?;
    let cl = index_count(&f).map_err(err)?;
    ensure(cl.ind == 5, || format!("Clifford {cl:?}"))?;
    Ok(format!("half equator 1, half Clifford Q^S 1 (nullity {}), Q^A {}, Clifford {}", hs.nullity, ha.ind, cl.ind))
}

fn c13_dual_identities() -> Outcome {
    let r = dual_form_identity_check(&half_clifford_torus(), 20, 113).map_err(err)?;
    ensure(r.morse_residual < 1e-4 && r.modified_residual < 1e-4, || format!("{r:?}"))?;
    let (rt, gt) = dual_params(FRAC_PI_2, PI / 3.0, 1.0);
    let p = (rt.cos() + (PI / 3.0).cos()).abs().max((rt.sin() * gt.sin() - (PI / 3.0).sin()).abs());
    ensure(p < 1e-8 && (rt - 2.0 * PI / 3.0).abs() < 1e-8 && (gt - FRAC_PI_2).abs() < 1e-8, || {
        format!("dual params {rt} {gt}")
    })?;
    let d = dual_annulus(&half_clifford_torus(), None).map_err(err)?;
    ensure(d.metric_residual < 1e-5 && d.angle_residual < 1e-5, || format!("{:?}", d.summary()))?;
    Ok(format!("Q^A residual {:.1e}, Q^A_* residual {:.1e}", r.morse_residual, r.modified_residual))
}

fn c14_eigenfunction_lemmas() -> Outcome {
    let mut orders = vec![];
    for s in [half_clifford_torus(), half_equator(FRAC_PI_2, FRAC_PI_2).map_err(err)?] {
        for gauss in [false, true] {
            let run = |h: f64| {
                if gauss {
                    verify_gauss_eigenfunctions(&s, h)
                } else {
                    verify_coordinate_eigenfunctions(&s, h)
                }
            };
            let (a, b) = (run(0.1).map_err(err)?, run(0.05).map_err(err)?);
            let (ra, rb) = (a.max_interior_residual(), b.max_interior_residual());
            if ra < 1e-12 {
                // Exact eigenfunctions of the discrete problem (constant normal).
                ensure(rb < 1e-12, || format!("{}: {ra:e} then {rb:e}", s.name))?;
                continue;
            }
            let p = (ra / rb).log2();
            ensure(p >= 1.8, || format!("{} gauss={gauss}: order {p:.3}", s.name))?;
            orders.push(p);
        }
    }
    Ok(format!("observed orders {}", orders.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>().join(", ")))
}

fn c15_balancing() -> Outcome {
    let y0 = DVector::from_vec(vec![0.0, 0.2, -0.1, 0.15]);
    let f = conf_cap_element(FRAC_PI_2, &DMatrix::identity(4, 4), &y0).map_err(err)?;
    let finv = moebius_inverse(&f);
    let s: ParametricSurface = half_clifford_torus().pushforward(&f).map_err(err)?;
    let w = move |fr: &BoundaryFrame| conformal_factor(&finv, &DVector::from_column_slice(fr.x.as_slice()));
    let b = conformal_balance(&s, &w, &BalanceOptions::default()).map_err(err)?;
    let gap = (1..4).map(|k| (b.y[k] + y0[k]).abs()).fold(0.0, f64::max);
    ensure(b.residual < 1e-8 && b.iterations <= 50 && gap < 1e-6, || format!("{b:?}"))?;
    Ok(format!("residual {:.1e} after {} Newton steps, |y + y0| = {gap:.1e}", b.residual, b.iterations))
}

/// Named group of checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Conformal,
    Functionals,
    Spectral,
    Index,
    All,
}

pub struct Check {
    pub id: usize,
    pub suite: Suite,
    pub name: &'static str,
    pub run: fn() -> Outcome,
}

pub const CHECKS: [Check; 15] = [
    Check { id: 1, suite: Suite::Conformal, name: "conformal algebra", run: c1_conformal_algebra },
    Check { id: 2, suite: Suite::Conformal, name: "flow exactness", run: c2_flow_exactness },
    Check { id: 3, suite: Suite::Conformal, name: "cap evolution", run: c3_cap_evolution },
    Check { id: 4, suite: Suite::Conformal, name: "flow correspondence", run: c4_flow_correspondence },
    Check { id: 5, suite: Suite::Functionals, name: "monotonicity", run: c5_monotonicity },
    Check { id: 6, suite: Suite::Functionals, name: "conformal maximisation", run: c6_conformal_maximisation },
    Check { id: 7, suite: Suite::Functionals, name: "Willmore-route identities", run: c7_willmore_identities },
    Check { id: 8, suite: Suite::Functionals, name: "blowup bound", run: c8_blowup },
    Check { id: 9, suite: Suite::Functionals, name: "Euclidean limit", run: c9_euclidean_limit },
    Check { id: 10, suite: Suite::Spectral, name: "spectral oracles", run: c10_spectral_oracles },
    Check { id: 11, suite: Suite::Spectral, name: "index sum", run: c11_index_sum },
    Check { id: 12, suite: Suite::Spectral, name: "index values", run: c12_index_values },
    Check { id: 13, suite: Suite::Index, name: "dual identities", run: c13_dual_identities },
    Check { id: 14, suite: Suite::Index, name: "eigenfunction residuals", run: c14_eigenfunction_lemmas },
    Check { id: 15, suite: Suite::Index, name: "conformal balancing", run: c15_balancing },
];

/// Outcome of one check.
#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub message: String,
    #[serde(skip)]
    pub seconds: f64,
}

impl CheckResult {
    /// `PASS  n name: message` without timing, so reruns print identical lines.
    pub fn line(&self) -> String {
        format!("{} {:>2} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.id, self.name, self.message)
    }
}

/// Run one check, turning panics into failures.
pub fn run_check(c: &Check) -> CheckResult {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panic: {msg}"))
    });
    let (passed, message) = match outcome {
        Ok(m) => (true, m),
        Err(m) => (false, m),
    };
    CheckResult { id: c.id, name: c.name, passed, message, seconds: start.elapsed().as_secs_f64() }
}

/// Checks belonging to `suite`.
pub fn select(suite: Suite) -> impl Iterator<Item = &'static Check> {
    CHECKS.iter().filter(move |c| suite == Suite::All || c.suite == suite)
}
