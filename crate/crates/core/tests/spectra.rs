use capflow_core::spectral::{
    assemble, comparison_check, dirichlet_spectrum, index_count, random_trials, robin_spectrum, steklov_spectrum,
    AssembledForm, FormSpec,
};
use capflow_core::surface::builtin::{half_clifford_torus, half_equator};
use capflow_core::surface::mesh_parametric;
use std::f64::consts::PI;

fn close(l: f64, e: f64) -> bool {
    (l - e).abs() <= 0.02 * e.abs().max(1.0)
}

fn form(s: &capflow_core::surface::ParametricSurface, h: f64, p: f64, q: f64) -> AssembledForm {
    let m = mesh_parametric(s, h).unwrap();
    assemble(&FormSpec::constant(m, p, q).unwrap()).unwrap()
}

#[test]
fn hemisphere_spectra_and_index() {
    let f = form(&half_equator(PI / 2.0, PI / 2.0).unwrap(), 0.05, 2.0, 0.0);
    let r = robin_spectrum(&f, 6).unwrap();
    for (l, e) in r.eigenvalues.iter().zip([-2.0, 0.0, 0.0, 4.0, 4.0, 4.0]) {
        assert!(close(*l, e), "{:?}", r.eigenvalues);
    }
    let d = dirichlet_spectrum(&f, 1).unwrap();
    assert!(d.eigenvalues[0].abs() <= f.zero_tol, "{:?}", d.eigenvalues);
    let idx = index_count(&f).unwrap();
    assert_eq!((idx.ind, idx.nullity, idx.a, idx.b), (1, 2, 1, 0), "{idx:?}");
    assert!(idx.agreement);
    let rep = comparison_check(&f, &random_trials(f.n(), 100, 1)).unwrap();
    assert!(rep.passed, "{rep:?}");
}

#[test]
fn half_clifford_forms() {
    let s = half_clifford_torus();
    let fs = form(&s, 0.05, 2.0, 0.0);
    let r = robin_spectrum(&fs, 5).unwrap();
    for (l, e) in r.eigenvalues.iter().zip([-2.0, 0.0, 0.0, 0.0, 2.0]) {
        assert!(close(*l, e), "{:?}", r.eigenvalues);
    }
    let st = steklov_spectrum(&fs, 4).unwrap();
    assert_eq!(st.deflated, 1);
    assert_eq!(st.counts.negative, 0, "{:?}", st.eigenvalues);
    assert_eq!(st.counts.zero, 3, "{:?}", st.eigenvalues);
    let idx = index_count(&fs).unwrap();
    assert_eq!((idx.a, idx.b, idx.ind, idx.nullity), (1, 0, 1, 3), "{idx:?}");
    assert!(idx.agreement);

    let fa = form(&s, 0.05, 4.0, 0.0);
    let d = dirichlet_spectrum(&fa, 3).unwrap();
    for (l, e) in d.eigenvalues.iter().zip([-2.0, 0.0, 0.0]) {
        assert!(close(*l, e), "{:?}", d.eigenvalues);
    }
    let idx = index_count(&fa).unwrap();
    assert_eq!((idx.ind, idx.ind_robin), (4, 4), "{idx:?}");
    assert!(idx.agreement);
}

#[test]
fn half_equator_bottom_steklov() {
    for r in [0.7, 1.1] {
        let f = form(&half_equator(r, PI / 2.0).unwrap(), 0.05, 2.0, 1.0 / r.tan());
        let st = steklov_spectrum(&f, 2).unwrap();
        let e = -r.tan() - 1.0 / r.tan();
        assert!(close(st.eigenvalues[0], e), "R={r}: {:?} vs {e}", st.eigenvalues);
        assert!(close(st.eigenvalues[1], 0.0), "R={r}: {:?}", st.eigenvalues);
    }
}
