use capflow_core::conformal::{conf_cap_element, FlowSpec, MoebiusMap};
use capflow_core::functionals::{
    energy, energy_with, monotonicity_trace, wetting_energy_local, willmore_identity_report, MonotoneKind, TraceOptions,
};
use capflow_core::surface::builtin::{disc_in_ball, half_clifford_torus, half_equator};
use capflow_core::surface::{ParametricSurface, QuadOptions};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, PI};

fn grid(tmax: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| tmax * i as f64 / n as f64).collect()
}

fn random_cap_map(radius: f64, rng: &mut ChaCha8Rng) -> MoebiusMap {
    let m = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
    let svd = m.svd(true, true);
    let mut q = svd.u.unwrap() * svd.v_t.unwrap();
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    let mut rot = DMatrix::identity(4, 4);
    rot.view_mut((1, 1), (3, 3)).copy_from(&q);
    let dir = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0)).normalize();
    let len = rng.gen_range(0.0..0.7);
    let y = DVector::from_vec(vec![0.0, dir[0] * len, dir[1] * len, dir[2] * len]);
    conf_cap_element(radius, &rot, &y).unwrap()
}

#[test]
fn half_clifford_area_decreases() {
    let s = half_clifford_torus();
    let spec = FlowSpec::from_slice(&[0.0, 1.0, 0.0, 0.0]).unwrap();
    let opts = TraceOptions { c_h: Some(0.0), ..Default::default() };
    let tr = monotonicity_trace(&s, &spec, &grid(1.0, 10), &opts).unwrap();
    assert_eq!(tr.kind, MonotoneKind::FreeBoundary);
    assert!(tr.is_monotone(), "{:?}", tr.violations);
    assert!(tr.energies.windows(2).all(|w| w[1].area < w[0].area));
    assert!(tr.caps.iter().all(|c| (c.as_ref().unwrap().radius() - FRAC_PI_2).abs() < 1e-9));
}

#[test]
fn half_equator_preserved_by_in_plane_flow() {
    let s = half_equator(FRAC_PI_2, FRAC_PI_2).unwrap();
    let spec = FlowSpec::from_slice(&[0.0, 1.0, 0.0, 0.0]).unwrap();
    let tr = monotonicity_trace(&s, &spec, &grid(1.0, 5), &TraceOptions::default()).unwrap();
    let q0 = tr.quantity[0];
    assert!(tr.quantity.iter().all(|q| (q - q0).abs() < 1e-8), "{:?}", tr.quantity);
}

#[test]
fn euclidean_disc_family_is_almost_monotone() {
    for r in [0.3, 0.8, 1.3] {
        let s = disc_in_ball(r, [0.0; 3]).unwrap();
        let spec = FlowSpec::from_slice(&[0.3, 0.5, 0.2, 0.4]).unwrap();
        let c_h = 2.0 * (1.0 - r.cos()) / r.sin();
        let opts = TraceOptions { c_h: Some(c_h), ..Default::default() };
        let tr = monotonicity_trace(&s, &spec, &grid(1.5, 10), &opts).unwrap();
        assert!(tr.is_monotone(), "R={r}: {:?}", tr.violations);
    }
}

#[test]
fn wetting_energy_matches_wet_area() {
    let s = half_equator(FRAC_PI_2, 1.0).unwrap();
    let spec = FlowSpec::from_slice(&[0.0, 0.3, 0.0, 1.0]).unwrap();
    let times = grid(1.0, 8);
    let q = QuadOptions::default();
    let w = wetting_energy_local(&s, &spec, &times, 32, &q).unwrap();
    let w0 = energy(&s).unwrap().wet_area.unwrap();
    for (t, wt) in times.iter().zip(&w) {
        let moved = s.pushforward(&spec.map(*t)).unwrap();
        let wa = energy_with(&moved, &q).unwrap().wet_area.unwrap();
        assert!((wa - w0 - wt).abs() < 1e-5, "t={t}: {} vs {wt}", wa - w0);
    }
    // Second order in the time step.
    let coarse = wetting_energy_local(&s, &spec, &[0.0, 1.0], 4, &q).unwrap()[1];
    let fine = wetting_energy_local(&s, &spec, &[0.0, 1.0], 8, &q).unwrap()[1];
    let exact = energy_with(&s.pushforward(&spec.map(1.0)).unwrap(), &q).unwrap().wet_area.unwrap() - w0;
    let order = ((coarse - exact) / (fine - exact)).abs().log2();
    assert!(order > 1.8, "{order}");
    let tr = monotonicity_trace(&s, &spec, &times, &TraceOptions::default()).unwrap();
    assert_eq!(tr.kind, MonotoneKind::Hemisphere);
    assert!(tr.is_monotone(), "{:?}", tr.violations);
}

#[test]
fn capillary_energy_non_increasing() {
    let s = half_equator(1.0, 1.0).unwrap();
    for a in [[0.2, 0.5, -0.3, 0.7], [-0.5, 0.1, 0.2, -0.8], [1.0, 0.0, 0.0, 0.0]] {
        let spec = FlowSpec::from_slice(&a).unwrap();
        let tr = monotonicity_trace(&s, &spec, &grid(1.0, 8), &TraceOptions::default()).unwrap();
        assert_eq!(tr.kind, MonotoneKind::Capillary);
        assert!(tr.is_monotone(), "a={a:?}: {:?}", tr.violations);
    }
}

#[test]
fn willmore_identities_under_cap_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let q = QuadOptions::default();
    let s = half_clifford_torus();
    for _ in 0..3 {
        let m = random_cap_map(FRAC_PI_2, &mut rng);
        let r = willmore_identity_report(&s, &m, &q).unwrap();
        assert!(r.free_boundary_residual.unwrap().abs() < 1e-4, "{r:?}");
        assert!(r.gauss_bonnet_image.abs() < 1e-4, "{r:?}");
        assert!(r.traceless_change.abs() < 1e-4, "{r:?}");
    }
    for g in [0.6, 1.2] {
        let s = half_equator(FRAC_PI_2, g).unwrap();
        let m = random_cap_map(FRAC_PI_2, &mut rng);
        let r = willmore_identity_report(&s, &m, &q).unwrap();
        assert!(r.capillary_residual.unwrap().abs() < 1e-4, "{r:?}");
        assert_eq!(r.wet_euler_characteristic, Some(1));
    }
}

fn maximised(s: &ParametricSurface, radius: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e0 = energy(s).unwrap().e_r_gamma.unwrap();
    for _ in 0..50 {
        let m = random_cap_map(radius, &mut rng);
        let e = energy(&s.pushforward(&m).unwrap()).unwrap().e_r_gamma.unwrap();
        assert!(e <= e0 + 1e-6, "{e} > {e0}");
    }
}

#[test]
fn conformal_maximisation() {
    maximised(&half_clifford_torus(), FRAC_PI_2, 1);
    maximised(&half_equator(1.0, FRAC_PI_2).unwrap(), 1.0, 2);
    maximised(&half_equator(0.8, 0.7).unwrap(), 0.8, 3);
    maximised(&half_equator(FRAC_PI_2, 1.1).unwrap(), FRAC_PI_2, 4);
    let e = energy(&half_equator(FRAC_PI_2, 1.1).unwrap()).unwrap().e_r_gamma.unwrap();
    assert!((e - 2.0 * PI * (1.0 + 1.1f64.cos())).abs() < 1e-9);
}
