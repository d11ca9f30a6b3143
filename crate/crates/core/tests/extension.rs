use std::sync::{Arc, OnceLock};

use friedrichs::extension::*;
use friedrichs::field::generate::{BoundaryCondition, FieldGenerator};
use friedrichs::field::{membership_mask, Grid, GridField, NodeClass, Region};
use friedrichs::geometry::{gallery_level, Domain};
use friedrichs::Error;

const MAX_LEVEL: u8 = 6;
const GRID_LEVEL: u8 = 8;

fn square() -> &'static (Domain, Arc<Scaffold>) {
    static S: OnceLock<(Domain, Arc<Scaffold>)> = OnceLock::new();
    S.get_or_init(|| {
        let dom = gallery_level("unit_square", None).unwrap();
        let sc = Arc::new(Scaffold::build(&dom, MAX_LEVEL).unwrap());
        (dom, sc)
    })
}

fn field(dom: &Domain, level: u8, f: impl Fn(&[f64; 3], &mut [f64]) + Sync) -> GridField {
    let g = Grid::covering(dom, level);
    GridField::from_fn(g, dom.n, membership_mask(&g, dom), Region::Interior, f)
}

fn random(dom: &Domain, level: u8, bc: BoundaryCondition, seed: u64) -> GridField {
    let g = Grid::covering(dom, level);
    let w = if bc == BoundaryCondition::None { 0.0 } else { 0.03 };
    FieldGenerator::new(dom, g, bc, 4, w).unwrap().random(seed).unwrap()
}

/// Grid nodes lying in the closed union of the W₃ cubes.
fn w3_nodes(sc: &Scaffold, g: &Grid) -> Vec<usize> {
    (0..g.len())
        .filter(|&i| {
            let x = g.point(i);
            sc.w2.locate(&x).is_some_and(|k| sc.w3_pos[k].is_some())
        })
        .collect()
}

#[test]
fn interior_values_are_copied() {
    let (dom, sc) = square();
    let v = random(dom, GRID_LEVEL, BoundaryCondition::None, 1);
    let asm = extend_with(sc, &v).unwrap();
    for i in 0..v.grid.len() {
        if v.mask[i] == NodeClass::Interior {
            assert_eq!(asm.ev.mask[i], NodeClass::Interior);
            assert_eq!(asm.ev.at(i), v.at(i));
        }
    }
}

#[test]
fn constants_are_reproduced_on_w3() {
    let (dom, sc) = square();
    let v = field(dom, GRID_LEVEL, |_, o| o.copy_from_slice(&[2.0, -0.5]));
    let asm = extend_with(sc, &v).unwrap();
    let nodes = w3_nodes(sc, &v.grid);
    assert!(!nodes.is_empty());
    for i in nodes {
        let e = asm.ev.at(i);
        assert!((e[0] - 2.0).abs() < 1e-10 && (e[1] + 0.5).abs() < 1e-10, "{e:?}");
    }
    let rep = asm.report(2.0).unwrap();
    let ext = asm.exterior_norms(2.0).unwrap();
    for &id in &sc.w3_ids {
        // Derivatives of a constant vanish where the partition sums to one.
        assert!(ext[id].linf(friedrichs::affine::GRAD) < 1e-9);
    }
    assert!(rep.global.corol1_ratio.unwrap().is_finite());
    assert!(rep.violations.is_empty());
}

#[test]
fn symmetric_affine_is_reproduced_on_w3() {
    let (dom, sc) = square();
    let aff = |x: &[f64; 3], o: &mut [f64]| {
        o[0] = 0.5 + 2.0 * x[0] + 0.25 * x[1];
        o[1] = -1.0 + 0.25 * x[0] - x[1];
    };
    let v = field(dom, GRID_LEVEL, aff);
    let asm = extend_with(sc, &v).unwrap();
    for i in w3_nodes(sc, &v.grid) {
        let x = v.grid.point(i);
        let mut want = [0.0; 2];
        aff(&x, &mut want);
        let e = asm.ev.at(i);
        assert!((e[0] - want[0]).abs() < 1e-10 && (e[1] - want[1]).abs() < 1e-10);
    }
}

#[test]
fn extension_is_linear() {
    let (dom, sc) = square();
    let u = random(dom, GRID_LEVEL, BoundaryCondition::None, 2);
    let v = random(dom, GRID_LEVEL, BoundaryCondition::None, 3);
    let (a, b) = (1.75, -0.6);
    let mut w = u.clone();
    w.scale(a);
    w.axpy(b, &v).unwrap();
    let (eu, ev, ew) = (extend_with(sc, &u).unwrap(), extend_with(sc, &v).unwrap(), extend_with(sc, &w).unwrap());
    let scale = u.max_abs(Region::All).max(v.max_abs(Region::All));
    for i in 0..w.values.len() {
        let lin = a * eu.ev.values[i] + b * ev.ev.values[i];
        assert!((ew.ev.values[i] - lin).abs() <= 1e-12 * scale, "{i}");
    }
}

#[test]
fn zero_field_extends_to_zero() {
    let (dom, sc) = square();
    let v = field(dom, GRID_LEVEL, |_, o| o.fill(0.0));
    let asm = extend_with(sc, &v).unwrap();
    assert!(asm.ev.values.iter().all(|x| *x == 0.0));
    let rep = asm.report(2.0).unwrap();
    assert_eq!(rep.global.corol1_ratio, Some(0.0));
    assert_eq!(rep.global.corol2_ratio, Some(0.0));
    assert!(rep.global.degenerate && !rep.global.violation);
    assert!(rep.extremes.iter().all(|e| e.max_ratio == 0.0));
    assert!(rep.violations.is_empty());
}

#[test]
fn support_stays_near_w3() {
    let (dom, sc) = square();
    let v = random(dom, GRID_LEVEL, BoundaryCondition::None, 4);
    let asm = extend_with(sc, &v).unwrap();
    let g = v.grid;
    for i in 0..g.len() {
        if asm.ev.mask[i] == NodeClass::Interior || asm.ev.at(i).iter().all(|x| *x == 0.0) {
            continue;
        }
        let x = g.point(i);
        assert!((0..sc.w3.len()).any(|j| sc.pu.in_support(j, &x)), "node {i} at {x:?}");
    }
}

#[test]
fn changes_stay_local() {
    let (dom, sc) = square();
    let v = random(dom, GRID_LEVEL, BoundaryCondition::None, 5);
    let base = extend_with(sc, &v).unwrap();
    // Perturb v inside one reflected cube.
    let s = sc.refl.pairs[sc.w3.len() / 2].star;
    let cube = sc.w1.cubes[s];
    let mut w = v.clone();
    for i in 0..w.grid.len() {
        let x = w.grid.point(i);
        if w.mask[i] == NodeClass::Interior && cube.contains_point(&x, 2) {
            w.values[2 * i] += 1.0 + x[1];
        }
    }
    let moved = extend_with(sc, &w).unwrap();
    let mut changed_outside = 0;
    for i in 0..w.grid.len() {
        if w.mask[i] == NodeClass::Interior || base.ev.at(i) == moved.ev.at(i) {
            continue;
        }
        changed_outside += 1;
        let x = w.grid.point(i);
        if let Some(k) = sc.w2.locate(&x) {
            match sc.w3_pos[k] {
                Some(j) => assert!(sc.f_sets[j].contains(&s), "cube {k}"),
                None => assert!(sc.touching[k].iter().any(|&j| sc.refl.pairs[j].star == s)),
            }
        }
    }
    assert!(changed_outside > 0);
}

#[test]
fn far_cubes_obey_size_bound_and_vanish_when_isolated() {
    let (dom, sc) = square();
    let v = random(dom, GRID_LEVEL, BoundaryCondition::NormalZero, 6);
    let asm = extend_with(sc, &v).unwrap();
    let rep = asm.report(2.0).unwrap();
    assert!(rep.size_bound_failures.is_empty());
    assert!(rep.violations.is_empty(), "{:?}", rep.violations);
    let ext = asm.exterior_norms(2.0).unwrap();
    let mut isolated = 0;
    for k in 0..sc.w2.len() {
        if sc.touching[k].is_empty() {
            isolated += 1;
            assert_eq!(ext[k].max, [0.0; 4]);
        }
    }
    assert!(isolated > 0);
    for e in &rep.extremes {
        assert!(e.max_ratio.is_finite(), "{e:?}");
    }
}

#[test]
fn global_ratios_are_stable_under_refinement() {
    let (dom, sc) = square();
    let mut r = Vec::new();
    // The collar ramp needs about sixteen nodes across before the fits settle.
    for level in [9, 10] {
        let v = random(dom, level, BoundaryCondition::NormalZero, 7);
        let g = extend_with(sc, &v).unwrap().report(2.0).unwrap().global;
        r.push((g.corol1_ratio.unwrap(), g.corol2_ratio.unwrap()));
    }
    assert!(r[0].0 > 0.0 && r[0].1 > 0.0);
    assert!((r[1].0 / r[0].0 - 1.0).abs() < 0.25, "{r:?}");
    assert!((r[1].1 / r[0].1 - 1.0).abs() < 0.25, "{r:?}");
}

#[test]
fn batch_matches_single() {
    let (dom, sc) = square();
    let a = extend_with(sc, &random(dom, GRID_LEVEL, BoundaryCondition::None, 8)).unwrap();
    let b = extend_with(sc, &random(dom, GRID_LEVEL, BoundaryCondition::None, 9)).unwrap();
    let both = exterior_norms_batch(&[&a, &b], 2.0).unwrap();
    assert_eq!(both[1], b.exterior_norms(2.0).unwrap());
}

#[test]
fn bad_inputs_are_rejected() {
    let (dom, sc) = square();
    let coarse = field(dom, MAX_LEVEL, |_, o| o.fill(1.0));
    assert!(matches!(extend_with(sc, &coarse), Err(Error::GridMismatch(_))));
    let koch = gallery_level("koch_snowflake", Some(3)).unwrap();
    assert!(matches!(Scaffold::build(&koch, 6), Err(Error::EmptyW3)));
    let other = gallery_level("l_shape", None).unwrap();
    let v = field(&other, GRID_LEVEL, |_, o| o.fill(1.0));
    assert!(matches!(extend_with(sc, &v), Err(Error::GridMismatch(_))));
}
