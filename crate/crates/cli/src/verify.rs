//! The full invariant suite for one domain.

use std::sync::Arc;

use friedrichs::affine::{check_identities, fit_affine, gradient_comparison, AffineRegion};
use friedrichs::extension::{extend_with, Scaffold};
use friedrichs::field::generate::{BoundaryCondition, FieldGenerator};
use friedrichs::field::ops::discrete_div;
use friedrichs::field::{Grid, NodeClass, Region, Selector};
use friedrichs::lab::{default_collar_width, friedrichs_ratio, gaffney_ratio};
use friedrichs::whitney::{whitney_decompose, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::commands::{invariant_failure, whitney_checks};
use crate::report::{write_report, Check};
use crate::{Cli, Failure, VerifyArgs};

const PARTITION_POINTS: usize = 10_000;
const PARTITION_FD_POINTS: usize = 200;

pub fn verify(cli: &Cli, a: &VerifyArgs) -> Result<(), Failure> {
    let dom = a.domain.load()?;
    let n = dom.n;
    let max_level = a.max_level.unwrap_or(if n == 2 { 7 } else { 4 });
    let grid_level = a.grid_level.unwrap_or(max_level + 2);
    let mut checks = Vec::new();

    let mut w1 = whitney_decompose(&dom, Side::Interior, max_level)?;
    let w2 = whitney_decompose(&dom, Side::Complement, max_level)?;
    let faulted = if a.inject_fault { w1.inject_size_fault() } else { None };
    checks.extend(whitney_checks("W1", &w1.check()));
    checks.extend(whitney_checks("W2", &w2.check()));
    if faulted.is_some() {
        // The rest of the suite runs on a clean decomposition.
        w1 = whitney_decompose(&dom, Side::Interior, max_level)?;
    }
    drop((w1, w2));

    let sc = Arc::new(Scaffold::build(&dom, max_level)?);
    let bad: usize = sc
        .refl
        .pairs
        .iter()
        .filter(|p| !(1.0..=4.0).contains(&p.size_ratio) || p.dist_ratio > sc.refl.c_refl)
        .count();
    checks.push(Check::new(
        "(numero)",
        "reflected cube size within [ℓ(Q), 4ℓ(Q)] and distance within C_refl·ℓ(Q)",
        bad == 0,
        json!({"violations": bad, "c_refl": sc.refl.c_refl, "w3_cubes": sc.w3.len()}),
    ));
    let max_partners = sc.partners.iter().map(Vec::len).max().unwrap_or(0);
    checks.push(Check::new(
        "(finito)",
        "bounded overlap of the chain unions",
        sc.overlap.max_multiplicity <= max_partners + 1,
        json!({"max_multiplicity": sc.overlap.max_multiplicity, "max_chain_len": sc.chains.max_len}),
    ));
    checks.extend(partition_checks(&sc, a.seed));

    let grid = Grid::covering(&dom, grid_level);
    let w = default_collar_width(&dom, &grid);
    let v = FieldGenerator::new(&dom, grid, BoundaryCondition::NormalZero, 4, w)?.random(a.seed)?;
    let vmax = v.max_abs(Region::Interior);

    let stars = sc.stars();
    let fits: Vec<_> = stars
        .par_iter()
        .map(|&s| {
            let reg = AffineRegion::cube(sc.w1.cubes[s]);
            let p = fit_affine(&v, &reg)?;
            let id = check_identities(&v, &reg, &p);
            let gc = gradient_comparison(&v, &reg, 2.0)?;
            Ok((id, gc))
        })
        .collect::<Result<_, friedrichs::Error>>()?;
    let gmax = {
        let sel = Selector::whole(&grid, Region::Interior);
        friedrichs::field::ops::norm_report(&v, f64::INFINITY, &sel)?.lp_grad
    };
    let asym = fits.iter().filter(|(i, _)| !i.symmetric || !i.curl_free).count();
    let mean = fits.iter().map(|(i, _)| i.mean_residual).fold(0.0, f64::max);
    let trace = fits.iter().map(|(i, _)| i.trace_defect).fold(0.0, f64::max);
    let pinf = fits.iter().map(|(_, g)| g.ratio_inf).fold(0.0, f64::max);
    checks.push(Check::new("(definizioni)", "fitted gradient part is symmetric", asym == 0, json!({"asymmetric": asym, "fits": fits.len()})));
    checks.push(Check::new("(prop2)", "mean of u − P vanishes", mean <= 1e-10 * vmax, json!({"max_mean_residual": mean, "u_max": vmax})));
    checks.push(Check::new("(diveP)", "trace of B equals the mean divergence", trace <= 1e-9 * gmax.max(f64::MIN_POSITIVE), json!({"max_defect": trace})));
    checks.push(Check::new("(stimaPinf)", "‖∇P‖∞ ≤ ‖∇u‖∞", pinf <= 1.02, json!({"max_ratio": pinf})));

    let sel = Selector::whole(&grid, Region::Interior);
    let div = discrete_div(&v, &sel)?.field;
    let flux: f64 = (0..grid.len()).filter(|&i| v.mask[i] == NodeClass::Interior).map(|i| div.values[i]).sum::<f64>() * grid.cell_volume();
    checks.push(Check::new("(mediadive)", "divergence of a zero-normal field integrates to zero", flux.abs() <= 1e-10 * gmax, json!({"flux": flux})));

    let asm = extend_with(&sc, &v)?;
    let copied = (0..grid.len()).filter(|&i| v.mask[i] == NodeClass::Interior).all(|i| asm.ev.at(i) == v.at(i));
    checks.push(Check::new("(Ev)", "Ev equals v on Ω", copied, json!(null)));
    let rep = asm.report(2.0)?;
    let g = &rep.global;
    checks.push(Check::new("(corol1)", "Lp extension bound finite", !g.violation && g.corol1_ratio.is_some(), json!(g.corol1_ratio)));
    checks.push(Check::new("(corol2)", "W1∞ extension bound finite", !g.violation && g.corol2_ratio.is_some(), json!(g.corol2_ratio)));
    for e in &rep.extremes {
        let bad = rep.violations.len();
        checks.push(Check::new(&e.tag, "per-cube estimate finite", bad == 0 && e.max_ratio.is_finite(), json!({"max_ratio": e.max_ratio, "cube": e.cube})));
    }
    checks.push(Check::new(
        "(stimalunghezza)",
        "contributors to far cubes are at least a quarter of their size",
        rep.size_bound_failures.is_empty(),
        json!({"failures": rep.size_bound_failures.len()}),
    ));
    let fr = friedrichs_ratio(&v, 2.0)?;
    let ga = gaffney_ratio(&v, 2.0)?;
    checks.push(Check::new("(friedrichs)", "ratio finite for a collar field", fr.value.is_some(), json!(fr.value)));
    checks.push(Check::new("(gaffney)", "ratio finite for a collar field", ga.value.is_some(), json!(ga.value)));

    let failed = checks.iter().filter(|c| !c.passed).count();
    let result = json!({
        "label": dom.label(),
        "max_level": max_level,
        "grid_level": grid_level,
        "collar_width": w,
        "injected_fault": faulted,
        "checked": checks.len(),
        "failed": failed,
        "passed": failed == 0,
        "checks": checks,
    });
    write_report(cli, "verify", "verify.json", result)?;
    invariant_failure(&checks)
}

fn partition_checks(sc: &Scaffold, seed: u64) -> Vec<Check> {
    let n = sc.dom.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<[f64; 3]> = (0..PARTITION_POINTS)
        .map(|_| {
            let c = sc.w3[rng.random_range(0..sc.w3.len())];
            let lo = c.lo(n);
            let mut x = [0.0; 3];
            for a in 0..n {
                x[a] = lo[a] + rng.random::<f64>() * c.edge();
            }
            x
        })
        .collect();
    let mut sum_err: f64 = 0.0;
    let mut outside = 0;
    let mut c_phi: f64 = 0.0;
    for x in &pts {
        let phis = sc.pu.eval(x);
        sum_err = sum_err.max((phis.iter().map(|p| p.value).sum::<f64>() - 1.0).abs());
        for p in &phis {
            if !sc.pu.in_support(p.j, x) {
                outside += 1;
            }
            let g = p.grad[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
            c_phi = c_phi.max(g * sc.pu.bumps[p.j].edge);
        }
    }
    // Finite differences of the gradients on a subset.
    let mut fd_err: f64 = 0.0;
    for x in pts.iter().take(PARTITION_FD_POINTS) {
        for p in sc.pu.eval(x) {
            let e = 1e-7 * sc.pu.bumps[p.j].edge;
            let val = |y: &[f64; 3]| sc.pu.eval(y).iter().find(|q| q.j == p.j).map_or(0.0, |q| q.value);
            for a in 0..n {
                let (mut xp, mut xm) = (*x, *x);
                xp[a] += e;
                xm[a] -= e;
                let fd = (val(&xp) - val(&xm)) / (2.0 * e);
                let scale = c_phi / sc.pu.bumps[p.j].edge;
                fd_err = fd_err.max((fd - p.grad[a]).abs() / scale);
            }
        }
    }
    vec![
        Check::new("(partition)", "Σφ_j = 1 on the W3 cubes", sum_err <= 1e-12, json!({"max_error": sum_err, "points": pts.len()})),
        Check::new("(partition)", "φ_j vanishes outside its support box", outside == 0, json!({"outside": outside})),
        Check::new("(partition)", "|∇φ_j|·ℓ(Q_j) bounded; gradients match differences", fd_err <= 1e-6, json!({"c_phi": c_phi, "fd_relative_error": fd_err})),
    ]
}
