use friedrichs::field::generate::{generate_test_field, BoundaryCondition, FieldGenerator, FieldSpec};
use friedrichs::field::ops::*;
use friedrichs::field::{membership_mask, Grid, GridField, NodeClass, Region, Selector};
use friedrichs::geometry::{gallery_level, Domain};
use proptest::prelude::*;

fn setup(tag: &str, level: u8) -> (Domain, Grid) {
    let dom = gallery_level(tag, None).unwrap();
    let g = Grid::covering(&dom, level);
    (dom, g)
}

fn field(dom: &Domain, g: Grid, nc: usize, f: impl Fn(&[f64; 3], &mut [f64]) + Sync) -> GridField {
    GridField::from_fn(g, nc, membership_mask(&g, dom), Region::Interior, f)
}

/// Interior nodes whose axis neighbours are all interior.
fn central_nodes(f: &GridField) -> Vec<usize> {
    let g = f.grid;
    (0..g.len())
        .filter(|&i| {
            let p = g.unflat(i);
            f.mask[i] == NodeClass::Interior
                && (0..g.n).all(|a| {
                    p[a] > 0
                        && p[a] + 1 < g.dims[a]
                        && f.mask[i - g.stride(a)] == NodeClass::Interior
                        && f.mask[i + g.stride(a)] == NodeClass::Interior
                })
        })
        .collect()
}

#[test]
fn constant_field_has_zero_gradient() {
    let (dom, g) = setup("l_shape", 5);
    let f = field(&dom, g, 2, |_, o| o.fill(4.25));
    let d = discrete_grad(&f, &Selector::whole(&g, Region::Interior));
    assert!(d.field.values.iter().all(|v| *v == 0.0));
}

#[test]
fn identity_field_has_identity_gradient() {
    let (dom, g) = setup("unit_square", 5);
    let f = field(&dom, g, 2, |x, o| o.copy_from_slice(&x[..2]));
    let d = discrete_grad(&f, &Selector::whole(&g, Region::Interior)).strict().unwrap();
    for i in central_nodes(&f) {
        assert_eq!(d.at(i), &[1.0, 0.0, 0.0, 1.0]);
    }
}

#[test]
fn gradient_is_second_order() {
    let err = |level: u8| {
        let (dom, g) = setup("unit_square", level);
        let f = field(&dom, g, 2, |x, o| {
            o[0] = (3.0 * x[1]).sin();
            o[1] = 0.0;
        });
        let d = discrete_grad(&f, &Selector::whole(&g, Region::Interior));
        let mut e: f64 = 0.0;
        for i in 0..g.len() {
            if f.mask[i] == NodeClass::Interior {
                let x = g.point(i);
                e = e.max((d.field.at(i)[1] - 3.0 * (3.0 * x[1]).cos()).abs());
            }
        }
        e
    };
    let r = err(5) / err(6);
    assert!((3.5..=4.5).contains(&r), "ratio {r}");
}

#[test]
fn rotation_field_div_and_curl() {
    let (dom, g) = setup("l_shape", 5);
    let f = field(&dom, g, 2, |x, o| {
        o[0] = -x[1];
        o[1] = x[0];
    });
    let sel = Selector::whole(&g, Region::Interior);
    let div = discrete_div(&f, &sel).unwrap().field;
    let curl = discrete_curl(&f, &sel).unwrap().field;
    for i in central_nodes(&f) {
        assert!(div.values[i].abs() < 1e-13);
        assert!((curl.values[i] - 2.0).abs() < 1e-13);
    }
}

#[test]
fn gradient_of_quadratic_is_curl_free() {
    let (dom, g) = setup("unit_cube", 4);
    // φ = x² + 3xy − yz + 2z² + x
    let f = field(&dom, g, 3, |x, o| {
        o[0] = 2.0 * x[0] + 3.0 * x[1] + 1.0;
        o[1] = 3.0 * x[0] - x[2];
        o[2] = -x[1] + 4.0 * x[2];
    });
    let curl = discrete_curl(&f, &Selector::whole(&g, Region::Interior)).unwrap().field;
    for i in central_nodes(&f) {
        assert!(curl.at(i).iter().all(|c| c.abs() < 1e-12));
    }
}

#[test]
fn collar_potentials_have_vanishing_discrete_identities() {
    for tag in ["unit_square", "unit_cube"] {
        let (dom, g) = setup(tag, if tag == "unit_cube" { 5 } else { 6 });
        let spec = FieldSpec { modes: 4, collar_width: 4.0 * g.h(), seed: 3 };
        let sel = Selector::whole(&g, Region::Interior);
        let v = generate_test_field(&dom, g, BoundaryCondition::NormalZero, &spec).unwrap();
        let scale = v.max_abs(Region::Interior) / g.h();
        let div = discrete_div(&v, &sel).unwrap().field;
        assert!(div.max_abs(Region::Interior) < 1e-12 * scale);
        let w = generate_test_field(&dom, g, BoundaryCondition::TangentialZero, &spec).unwrap();
        let curl = discrete_curl(&w, &sel).unwrap().field;
        assert!(curl.max_abs(Region::Interior) < 1e-12 * w.max_abs(Region::Interior) / g.h());
    }
}

#[test]
fn lp_norm_examples() {
    let (dom, g) = setup("unit_square", 8);
    let sel = Selector::whole(&g, Region::Interior);
    let one = field(&dom, g, 1, |_, o| o[0] = 1.0);
    assert!((lp_norm(&one, 2.0, &sel).unwrap() - 1.0).abs() < 4.0 * g.h());
    let s = field(&dom, g, 1, |x, o| o[0] = (std::f64::consts::PI * x[0]).sin());
    assert!((lp_norm(&s, 2.0, &sel).unwrap() - 0.5f64.sqrt()).abs() < 1e-3);
    let mut spike = field(&dom, g, 1, |_, o| o[0] = 0.5);
    let i = (0..g.len()).find(|&i| spike.mask[i] == NodeClass::Interior).unwrap();
    spike.values[i] = -7.0;
    assert_eq!(lp_norm(&spike, f64::INFINITY, &sel).unwrap(), 7.0);
}

#[test]
fn norm_report_invariants() {
    let (dom, g) = setup("koch_snowflake", 6);
    let spec = FieldSpec { modes: 4, collar_width: 0.0, seed: 1 };
    let v = generate_test_field(&dom, g, BoundaryCondition::None, &spec).unwrap();
    for p in [1.0, 1.5, 2.0, 3.0, f64::INFINITY] {
        let r = norm_report(&v, p, &Selector::whole(&g, Region::Interior)).unwrap();
        assert!(r.w1p >= r.lp_field && r.w1p >= r.lp_grad);
        assert!(r.lp_div >= 0.0 && r.lp_curl >= 0.0);
        let direct = lp_norm(&v, p, &Selector::whole(&g, Region::Interior)).unwrap();
        assert!((direct - r.lp_field).abs() <= 1e-12 * direct);
    }
}

#[test]
fn normal_zero_fields_have_zero_flux() {
    let (dom, g) = setup("l_shape", 7);
    let spec = FieldSpec { modes: 5, collar_width: 0.03, seed: 11 };
    let v = generate_test_field(&dom, g, BoundaryCondition::NormalZero, &spec).unwrap();
    let div = discrete_div(&v, &Selector::whole(&g, Region::Interior)).unwrap().field;
    let flux: f64 = div.values.iter().sum::<f64>() * g.cell_volume();
    let scale = lp_norm(&v, 1.0, &Selector::whole(&g, Region::Interior)).unwrap() / g.h();
    assert!(flux.abs() < 1e-12 * scale, "flux {flux}");
}

#[test]
fn tangential_zero_fields_vanish_next_to_the_boundary() {
    let (dom, g) = setup("koch_snowflake", 7);
    let spec = FieldSpec { modes: 4, collar_width: 0.03, seed: 5 };
    let v = generate_test_field(&dom, g, BoundaryCondition::TangentialZero, &spec).unwrap();
    let mut checked = 0;
    for i in 0..g.len() {
        if v.mask[i] != NodeClass::Interior {
            continue;
        }
        let p = g.unflat(i);
        let near = (0..2).any(|a| {
            let s = g.stride(a);
            (p[a] > 0 && v.mask[i - s] != NodeClass::Interior)
                || (p[a] + 1 < g.dims[a] && v.mask[i + s] != NodeClass::Interior)
        });
        if near {
            assert_eq!(v.at(i), &[0.0, 0.0]);
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn generation_is_deterministic() {
    let (dom, g) = setup("koch_snowflake", 6);
    let spec = FieldSpec { modes: 4, collar_width: 0.05, seed: 77 };
    let a = generate_test_field(&dom, g, BoundaryCondition::NormalZero, &spec).unwrap();
    let b = generate_test_field(&dom, g, BoundaryCondition::NormalZero, &spec).unwrap();
    assert_eq!(a.values, b.values);
    let c = generate_test_field(&dom, g, BoundaryCondition::NormalZero, &FieldSpec { seed: 78, ..spec }).unwrap();
    assert_ne!(a.values, c.values);
}

fn smooth_v(x: &[f64; 3]) -> (f64, [f64; 3]) {
    let a = 2.0 * x[0] + x[1];
    let b = x[0] * x[1];
    (
        a.sin() * b.cos(),
        [2.0 * a.cos() * b.cos() - a.sin() * b.sin() * x[1], a.cos() * b.cos() - a.sin() * b.sin() * x[0], 0.0],
    )
}

#[test]
fn green_residual_converges_at_second_order() {
    let res = |level: u8| {
        let (dom, g) = setup("unit_square", level);
        let spec = FieldSpec { modes: 5, collar_width: 0.0625, seed: 21 };
        let u = generate_test_field(&dom, g, BoundaryCondition::NormalZero, &spec).unwrap();
        let (v, gv) = sample_scalar_with_gradient(g, u.mask.clone(), smooth_v);
        discrete_green_residual(&u, &v, Some(&gv)).unwrap()
    };
    let r = res(6) / res(7);
    assert!((3.0..=5.0).contains(&r), "ratio {r}");
}

#[test]
fn green_residual_of_zero_is_zero() {
    let (dom, g) = setup("l_shape", 5);
    let u = field(&dom, g, 2, |_, o| o.fill(0.0));
    let (v, gv) = sample_scalar_with_gradient(g, u.mask.clone(), smooth_v);
    assert_eq!(discrete_green_residual(&u, &v, Some(&gv)).unwrap(), 0.0);
}

#[test]
fn unconstrained_fields_report_a_boundary_term() {
    let (dom, g) = setup("unit_square", 6);
    let u = field(&dom, g, 2, |x, o| o.copy_from_slice(&x[..2]));
    let (v, gv) = sample_scalar_with_gradient(g, u.mask.clone(), |_| (1.0, [0.0; 3]));
    // ∫ div u = boundary flux = 2 for u = x.
    let r = discrete_green_residual(&u, &v, Some(&gv)).unwrap();
    assert!((r - 2.0).abs() < 0.1, "{r}");
}

#[test]
fn generator_is_linear_in_coefficients() {
    let (dom, g) = setup("l_shape", 6);
    let gen = FieldGenerator::new(&dom, g, BoundaryCondition::NormalZero, 3, 0.05).unwrap();
    let c: Vec<f64> = (0..gen.dim()).map(|k| (k as f64 * 0.37).sin()).collect();
    let whole = gen.field(&c).unwrap();
    let mut sum = GridField::zeros(g, 2, whole.mask.clone());
    for (k, ck) in c.iter().enumerate() {
        sum.axpy(*ck, &gen.column(k).unwrap()).unwrap();
    }
    for (a, b) in whole.values.iter().zip(&sum.values) {
        assert!((a - b).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn affine_exactness(a in prop::array::uniform6(-5.0f64..5.0)) {
        let (dom, g) = setup("l_shape", 4);
        let f = field(&dom, g, 2, |x, o| {
            o[0] = a[0] + a[1] * x[0] + a[2] * x[1];
            o[1] = a[3] + a[4] * x[0] + a[5] * x[1];
        });
        let sel = Selector::whole(&g, Region::Interior);
        let d = discrete_grad(&f, &sel).field;
        let div = discrete_div(&f, &sel).unwrap().field;
        let curl = discrete_curl(&f, &sel).unwrap().field;
        for i in central_nodes(&f) {
            let j = d.at(i);
            for (x, y) in j.iter().zip([a[1], a[2], a[4], a[5]]) {
                prop_assert!((x - y).abs() < 1e-11);
            }
            prop_assert!((div.values[i] - a[1] - a[5]).abs() < 1e-11);
            prop_assert!((curl.values[i] - a[4] + a[2]).abs() < 1e-11);
        }
    }

    #[test]
    fn norm_monotone_and_homogeneous(seed in 0u64..1000, s in -4.0f64..4.0, p in 1.0f64..4.0) {
        let (dom, g) = setup("koch_snowflake", 5);
        let spec = FieldSpec { modes: 3, collar_width: 0.0, seed };
        let v = generate_test_field(&dom, g, BoundaryCondition::None, &spec).unwrap();
        let all = Selector::whole(&g, Region::Interior);
        let half = Selector { hi: [g.dims[0] / 2 + 1, g.dims[1], 1], ..all };
        let n_all = lp_norm(&v, p, &all).unwrap();
        prop_assert!(lp_norm(&v, p, &half).unwrap() <= n_all * (1.0 + 1e-12));
        let mut w = v.clone();
        w.scale(s);
        prop_assert!((lp_norm(&w, p, &all).unwrap() - s.abs() * n_all).abs() <= 1e-12 * n_all.max(1e-300));
    }
}
