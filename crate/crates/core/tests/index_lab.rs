use capflow_core::conformal::{conf_cap_element, conformal_factor, moebius_inverse};
use capflow_core::index_lab::*;
use capflow_core::spectral::index_count;
use capflow_core::surface::builtin::{clifford_torus, half_clifford_torus, half_equator};
use capflow_core::surface::{BoundaryFrame, ParametricSurface};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::{FRAC_PI_2, PI};

fn order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

fn converges(s: &ParametricSurface, gauss: bool) {
    let run = |h| {
        if gauss {
            verify_gauss_eigenfunctions(s, h).unwrap()
        } else {
            verify_coordinate_eigenfunctions(s, h).unwrap()
        }
    };
    let (a, b) = (run(0.1), run(0.05));
    for (c, f) in a.components.iter().zip(&b.components) {
        if c.interior_residual > 1e-12 {
            let p = order(c.interior_residual, f.interior_residual);
            assert!(p > 1.8, "{} component {}: order {p}", s.name, c.component);
        }
        if let Some(r) = f.boundary_relation {
            assert!(r < 1e-8, "{} component {}: relation {r}", s.name, c.component);
        }
    }
    if let Some(v) = b.boundary_value {
        assert!(v < 1e-8);
    }
}

#[test]
fn coordinate_eigenfunctions() {
    converges(&half_clifford_torus(), false);
    converges(&half_equator(FRAC_PI_2, FRAC_PI_2).unwrap(), false);
    converges(&half_equator(1.0, FRAC_PI_2).unwrap(), false);
    // Recovered boundary fluxes converge at first order.
    let s = half_clifford_torus();
    let e: Vec<f64> = [0.2, 0.1]
        .iter()
        .map(|&h| verify_coordinate_eigenfunctions(&s, h).unwrap().components[1].recovered_flux_error.unwrap())
        .collect();
    assert!(order(e[0], e[1]) > 0.8, "{e:?}");
}

#[test]
fn gauss_eigenfunctions() {
    converges(&half_clifford_torus(), true);
    converges(&half_equator(FRAC_PI_2, PI / 3.0).unwrap(), true);
    let r = verify_gauss_eigenfunctions(&half_clifford_torus(), 0.05).unwrap();
    assert_eq!(r.span_rank, 4);
    let q: Vec<f64> = r.components[1..].iter().map(|c| c.steklov_quotient.unwrap()).collect();
    let r2 = verify_gauss_eigenfunctions(&half_clifford_torus(), 0.1).unwrap();
    for (c, f) in r2.components[1..].iter().zip(&q) {
        assert!(order(c.steklov_quotient.unwrap(), *f) > 1.8);
    }
    let tg = verify_gauss_eigenfunctions(&half_equator(FRAC_PI_2, PI / 3.0).unwrap(), 0.1).unwrap();
    assert!(tg.max_interior_residual() < 1e-12);
}

#[test]
fn dual_identities_on_half_clifford() {
    let r = dual_form_identity_check(&half_clifford_torus(), 20, 11).unwrap();
    assert!(r.morse_residual < 1e-4 && r.modified_residual < 1e-4, "{r:?}");
    assert!(r.interior_residual < 1e-4, "{r:?}");
    let target = -2.0 * PI * PI;
    assert!((r.constant_modified - target).abs() < 1e-4 * target.abs());
    assert!((r.constant_dual_spectral - target).abs() < 1e-4 * target.abs());
}

#[test]
fn dual_of_dual_is_isometric() {
    let base = half_clifford_torus();
    let d = dual_annulus(&base, None).unwrap();
    let dd = dual_annulus(&d.dual, None).unwrap();
    for &(u, v) in &[(0.3, 0.4), (-1.0, 2.0), (1.2, 5.0)] {
        let g0 = base.geometry(u, v).unwrap().g;
        let g2 = dd.dual.geometry(u, v).unwrap().g;
        assert!((g0 - g2).norm() < 1e-6, "{g0} {g2}");
    }
}

#[test]
fn balance_recovers_inverse() {
    let y0 = DVector::from_vec(vec![0.0, 0.2, -0.1, 0.15]);
    let f = conf_cap_element(FRAC_PI_2, &DMatrix::identity(4, 4), &y0).unwrap();
    let finv = moebius_inverse(&f);
    let s = half_clifford_torus().pushforward(&f).unwrap();
    // Transport the arclength of the balanced surface so that F⁻¹ balances.
    let w = move |fr: &BoundaryFrame| conformal_factor(&finv, &DVector::from_column_slice(fr.x.as_slice()));
    let b = conformal_balance(&s, &w, &BalanceOptions::default()).unwrap();
    assert!(b.residual < 1e-8 && b.iterations <= 50, "{b:?}");
    for k in 1..4 {
        assert!((b.y[k] + y0[k]).abs() < 1e-6, "{:?}", b.y);
    }
}

#[test]
fn index_reports() {
    let he = urbano_report(&half_equator(FRAC_PI_2, FRAC_PI_2).unwrap(), 0.05).unwrap();
    assert_eq!(he.ind, 1);
    let hc = urbano_report(&half_clifford_torus(), 0.05).unwrap();
    assert_eq!((hc.ind, hc.modified_ind0, hc.spectral_ind), (4, 4, 1));
    assert!(hc.rotationally_symmetric);
    let cl = urbano_report(&clifford_torus(), 0.05).unwrap();
    assert_eq!(cl.ind, 5);
    for r in [&he, &hc, &cl] {
        assert!(r.consistent_with_theorems.iter().all(|&b| b), "{r:?}");
        assert_eq!(r.ind, r.ind_robin);
    }
}

#[test]
fn index_sum_on_builtin_pairs() {
    for s in [half_equator(FRAC_PI_2, FRAC_PI_2).unwrap(), half_clifford_torus()] {
        for fl in Flavor::ALL {
            let f = build_index_problem(&s, fl, 0.05).unwrap().assemble().unwrap();
            let r = index_count(&f).unwrap();
            assert_eq!(r.a + r.b, r.ind_robin, "{} {fl:?}: {r:?}", s.name);
        }
    }
}
