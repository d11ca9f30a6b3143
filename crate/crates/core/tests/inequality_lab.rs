use friedrichs::field::generate::BoundaryCondition;
use friedrichs::field::{membership_mask, Grid, GridField, Region};
use friedrichs::geometry::{gallery_level, Domain};
use friedrichs::lab::*;
use friedrichs::Error;
use proptest::prelude::*;

fn square() -> Domain {
    gallery_level("unit_square", None).unwrap()
}

fn cfg(level: u8, iters: usize) -> LabConfig {
    LabConfig { grid_level: level, ascent_iters: iters, ..LabConfig::default() }
}

fn lab(dom: &Domain, which: Inequality, bc: BoundaryCondition, p: f64, level: u8) -> Lab {
    Lab::new(dom, which, bc, p, &cfg(level, 0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ratios_are_scale_invariant(alpha in prop_oneof![-50.0..-0.01f64, 0.01..50.0f64], seed in 0u64..100, p in 1.2..4.0f64) {
        let dom = square();
        let l = lab(&dom, Inequality::Gaffney, BoundaryCondition::TangentialZero, p, 5);
        let v = l.field(&l.coefficients(seed)).unwrap();
        let mut w = v.clone();
        w.scale(alpha);
        for which in [Inequality::Friedrichs, Inequality::Gaffney] {
            let (a, b) = (ratio(&v, p, which).unwrap().get(), ratio(&w, p, which).unwrap().get());
            prop_assert!((a - b).abs() <= 1e-12 * a, "{a} {b}");
        }
        prop_assert!(friedrichs_ratio(&v, p).unwrap().get() <= gaffney_ratio(&v, p).unwrap().get());
    }
}

#[test]
fn slowly_varying_field_has_friedrichs_ratio_near_one() {
    let dom = square();
    let g = Grid::covering(&dom, 6);
    let v = GridField::from_fn(g, 2, membership_mask(&g, &dom), Region::Interior, |x, o| {
        o[0] = 1.0 + 0.01 * x[0];
        o[1] = -0.5;
    });
    let r = friedrichs_ratio(&v, 2.0).unwrap();
    // ‖∇v‖ = 0.01 and ‖div v‖ = 0.01 against ‖v‖ ≈ 1.12.
    let f = (1.0f64 + 0.01 + 0.01 * 0.01 / 3.0 + 0.25).sqrt();
    let want = (f * f + 1e-4).sqrt() / (f + 0.01);
    assert!((r.get() - want).abs() < 1e-3, "{} vs {want}", r.get());
    assert!(r.get() > 0.98 && r.get() < 1.0);
}

#[test]
fn zero_and_empty_fields_are_rejected() {
    let dom = square();
    let g = Grid::covering(&dom, 4);
    let z = GridField::zeros(g, 2, membership_mask(&g, &dom));
    assert!(gaffney_ratio(&z, 2.0).is_err());
    let outside = gallery_level("l_shape", None).unwrap();
    let mut m = (*membership_mask(&g, &outside)).clone();
    m.iter_mut().for_each(|c| *c = friedrichs::field::NodeClass::Exterior);
    let e = GridField::zeros(g, 2, std::sync::Arc::new(m));
    assert!(matches!(gaffney_ratio(&e, 2.0), Err(Error::EmptyRegion(_))));
}

#[test]
fn divergence_and_curl_free_field_is_an_unbounded_candidate() {
    // A constant field has no div and no curl; it violates the boundary
    // conditions, which is exactly why the Gaffney ratio has nothing to divide by.
    let dom = square();
    let g = Grid::covering(&dom, 5);
    let v = GridField::from_fn(g, 2, membership_mask(&g, &dom), Region::Interior, |_, o| o.fill(1.0));
    let r = gaffney_ratio(&v, 2.0).unwrap();
    assert_eq!(r.value, None);
    assert_eq!(r.get(), f64::INFINITY);
}

#[test]
fn single_sample_estimate_is_that_fields_ratio() {
    let dom = square();
    let c = cfg(6, 0);
    let e = estimate_constant(&dom, Inequality::Gaffney, BoundaryCondition::NormalZero, 2.0, 1, 11, &c).unwrap();
    let l = Lab::new(&dom, Inequality::Gaffney, BoundaryCondition::NormalZero, 2.0, &c).unwrap();
    let r = gaffney_ratio(&l.field(&l.coefficients(11)).unwrap(), 2.0).unwrap();
    assert_eq!(e.max_ratio, r.value);
    assert_eq!(e.sample_ratios, vec![r.value]);
    assert!(e.ascent.is_empty());
}

#[test]
fn estimate_is_a_running_max() {
    let dom = gallery_level("l_shape", None).unwrap();
    let c = cfg(6, 0);
    let mut last = 0.0;
    let mut all = Vec::new();
    for s in 1..=6 {
        let e = estimate_constant(&dom, Inequality::Friedrichs, BoundaryCondition::TangentialZero, 3.0, s, 4, &c).unwrap();
        let m = e.max_ratio.unwrap();
        assert!(m >= last);
        last = m;
        all = e.sample_ratios;
    }
    assert_eq!(last, all.iter().map(|r| r.unwrap()).fold(0.0, f64::max));
}

#[test]
fn samples_must_be_positive() {
    let e = estimate_constant(&square(), Inequality::Gaffney, BoundaryCondition::NormalZero, 2.0, 0, 1, &cfg(5, 0));
    assert!(matches!(e, Err(Error::InvalidParam(m)) if m.contains("samples must be ≥ 1")));
    let e = estimate_constant(&square(), Inequality::Gaffney, BoundaryCondition::None, 2.0, 1, 1, &cfg(5, 0));
    assert!(e.is_err());
}

#[test]
fn analytic_gradient_matches_differences() {
    let dom = gallery_level("l_shape", None).unwrap();
    for (which, bc, p) in [
        (Inequality::Gaffney, BoundaryCondition::NormalZero, 2.0),
        (Inequality::Friedrichs, BoundaryCondition::TangentialZero, 1.5),
        (Inequality::Friedrichs, BoundaryCondition::NormalZero, 3.0),
    ] {
        let l = lab(&dom, which, bc, p, 5);
        let c = l.coefficients(3);
        let (r, g) = l.ratio_and_gradient(&c).unwrap();
        assert!((r - l.ratio_of(&c).unwrap().get()).abs() < 1e-10 * r);
        let scale = c.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let e = 1e-6 * scale;
        let gmax = g.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for k in (0..c.len()).step_by(5) {
            let (mut cp, mut cm) = (c.clone(), c.clone());
            cp[k] += e;
            cm[k] -= e;
            let fd = (l.ratio_of(&cp).unwrap().get() - l.ratio_of(&cm).unwrap().get()) / (2.0 * e);
            assert!((fd - g[k]).abs() <= 1e-5 * gmax, "{which} {bc} k={k}: {fd} vs {}", g[k]);
        }
    }
}

#[test]
fn ascent_is_monotone_and_stops_at_a_maximizer() {
    let dom = gallery_level("l_shape", None).unwrap();
    let l = lab(&dom, Inequality::Gaffney, BoundaryCondition::TangentialZero, 2.5, 5);
    let tr = maximize_ratio(&l, &l.coefficients(2), 60).unwrap();
    assert!(tr.ratios.len() > 1);
    assert!(tr.ratios.windows(2).all(|w| w[1] >= w[0]), "{:?}", tr.ratios);
    assert!((l.ratio_of(&tr.coefficients).unwrap().get() - tr.final_ratio()).abs() < 1e-10 * tr.final_ratio());
    // Restarting at the end point barely moves.
    let again = maximize_ratio(&l, &tr.coefficients, 5).unwrap();
    let (a, b) = (again.ratios[0], again.final_ratio());
    assert!((b - a) <= 1e-3 * a, "{a} -> {b}");
    assert!(matches!(
        maximize_ratio(&Lab::new(&dom, Inequality::Gaffney, BoundaryCondition::TangentialZero, f64::INFINITY, &cfg(5, 0)).unwrap(), &tr.coefficients, 3),
        Err(Error::InvalidParam(_))
    ));
    assert!(maximize_ratio(&l, &vec![0.0; l.dim()], 3).is_err());
}

#[test]
fn lanczos_oracle_matches_dense_solve() {
    let dom = square();
    for bc in [BoundaryCondition::NormalZero, BoundaryCondition::TangentialZero] {
        let g = Grid::covering(&dom, 5);
        let w = default_collar_width(&dom, &g);
        let s = spectral_oracle_p2(&dom, g, bc, w).unwrap();
        let d = dense_oracle_p2(&dom, g, bc, w).unwrap();
        assert!((s.gaffney_constant_p2 - d).abs() < 1e-8 * d, "{bc}: {} vs {d}", s.gaffney_constant_p2);
        // The eigenfield attains the constant.
        let r = gaffney_ratio(&s.eigenfield.unwrap(), 2.0).unwrap().get();
        assert!((r - d).abs() < 1e-6 * d, "{r} vs {d}");
    }
}

#[test]
fn convex_oracle_is_close_to_one_and_bounds_the_ascent() {
    let dom = square();
    let c = cfg(5, 60);
    let g = Grid::covering(&dom, 5);
    let w = default_collar_width(&dom, &g);
    let oracle = spectral_oracle_p2(&dom, g, BoundaryCondition::NormalZero, w).unwrap().gaffney_constant_p2;
    assert!((1.0..=1.05).contains(&oracle), "{oracle}");
    let e = estimate_constant(&dom, Inequality::Gaffney, BoundaryCondition::NormalZero, 2.0, 8, 0, &c).unwrap();
    let m = e.max_ratio.unwrap();
    // Sampled fields lie in the oracle's space.
    assert!(m <= oracle * (1.0 + 1e-9), "{m} > {oracle}");
    assert!((oracle - m) / oracle < 0.02, "{m} vs {oracle}");
    for t in &e.ascent {
        assert!(t.ratios.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn oracle_rejects_singular_or_unsupported_settings() {
    let cube = gallery_level("unit_cube", None).unwrap();
    let g = Grid::covering(&cube, 4);
    assert!(matches!(
        spectral_oracle_p2(&cube, g, BoundaryCondition::NormalZero, 0.15),
        Err(Error::SingularConstraint(_))
    ));
    let sq = square();
    let g = Grid::covering(&sq, 5);
    assert!(spectral_oracle_p2(&sq, g, BoundaryCondition::None, 0.1).is_err());
}

#[test]
fn three_dimensional_tangential_oracle_is_finite() {
    let cube = gallery_level("unit_cube", None).unwrap();
    let g = Grid::covering(&cube, 4);
    let s = spectral_oracle_p2(&cube, g, BoundaryCondition::TangentialZero, 0.15).unwrap();
    assert!(s.gaffney_constant_p2.is_finite() && s.gaffney_constant_p2 >= 1.0);
}

#[test]
fn witness_finds_no_counterexamples() {
    let dom = gallery_level("l_shape", None).unwrap();
    for bc in [BoundaryCondition::NormalZero, BoundaryCondition::TangentialZero] {
        let w = contradiction_witness(&dom, bc, 2.0, 40, 100, 1e-6, &cfg(6, 0)).unwrap();
        assert_eq!(w.counterexamples, 0);
        assert_eq!(w.flagged, 0);
        assert!(w.epsilon_w < 1.0 && w.min_defect > 1e-6);
    }
}

#[test]
fn study_rows_serialize_to_csv() {
    let rows = koch_study(&[0, 1], &[BoundaryCondition::NormalZero], &[2.0], 2, 0, &cfg(6, 0)).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.finite));
    let mut buf = Vec::new();
    write_study_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("koch_level,inequality,bc,p,"));
    assert_eq!(text.lines().count(), 3);
}
