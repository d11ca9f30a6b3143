use std::fmt::Write as _;
use std::io::Write;

use friedrichs::affine::write_fits_csv;
use friedrichs::extension::extend;
use friedrichs::field::generate::{BoundaryCondition, FieldGenerator};
use friedrichs::field::io::{read_binary, write_binary, write_csv};
use friedrichs::field::Grid;
use friedrichs::geometry::dset::{dset_check, geometric_radii};
use friedrichs::geometry::probe::epsilon_delta_probe;
use friedrichs::geometry::Domain;
use friedrichs::lab::{
    contradiction_witness, default_collar_width, estimate_with, koch_study, spectral_oracle_p2, write_study_csv, Lab,
    LabConfig,
};
use friedrichs::reflection::{build_chains, build_reflection, overlap_statistic, w3_partners};
use friedrichs::whitney::{select_w3_ids, w3_threshold, whitney_decompose, Side, WhitneyCheck, WhitneyDecomposition};
use friedrichs::Error;
use serde::Serialize;
use serde_json::json;

use crate::report::{create, out_path, write_report, Check};
use crate::{Cli, Command, Failure};

pub fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Decompose(a) => decompose(cli, a),
        Command::Extend(a) => extend_cmd(cli, a),
        Command::Estimate(a) => estimate(cli, a),
        Command::Verify(a) => crate::verify::verify(cli, a),
        Command::Probe(a) => probe(cli, a),
        Command::Dset(a) => dset(cli, a),
        Command::Study(a) => study(cli, a),
        Command::Oracle(a) => oracle(cli, a),
        Command::Witness(a) => witness(cli, a),
        Command::GenField(a) => gen_field(cli, a),
    }
}

/// Exit code 2 naming the failed tags.
pub fn invariant_failure(checks: &[Check]) -> Result<(), Failure> {
    let bad: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.tag.as_str()).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        let mut tags = bad.clone();
        tags.dedup();
        Err(Failure { code: 2, message: format!("invariant violated: {}", tags.join(", ")) })
    }
}

#[derive(Serialize)]
pub struct DecompositionSummary {
    pub side: Side,
    pub cubes: usize,
    pub per_level: Vec<(u8, usize)>,
    pub truncated_cells: usize,
    pub check: WhitneyCheck,
}

pub fn summarize(w: &WhitneyDecomposition, check: WhitneyCheck) -> DecompositionSummary {
    DecompositionSummary {
        side: w.side,
        cubes: w.len(),
        per_level: w.cubes_per_level(),
        truncated_cells: w.truncated.len(),
        check,
    }
}

/// One check per Whitney property for a decomposition called `name`.
pub fn whitney_checks(name: &str, c: &WhitneyCheck) -> Vec<Check> {
    let bad = c.violated_tags();
    vec![
        Check::new(
            "(w1)",
            &format!("{name}: 1 ≤ dist/ℓ ≤ 4√n"),
            !bad.contains(&"(w1)"),
            json!({"violations": c.w1_violations.len(), "min_ratio": c.min_dist_ratio, "max_ratio": c.max_dist_ratio}),
        ),
        Check::new("(w2)", &format!("{name}: cubes do not overlap"), !bad.contains(&"(w2)"), json!({"overlapping_cells": c.w2_violations})),
        Check::new(
            "(w3)",
            &format!("{name}: touching cubes differ in size by at most 4"),
            !bad.contains(&"(w3)"),
            json!({"violations": c.w3_violations.len(), "adjacency_errors": c.adjacency_errors}),
        ),
    ]
}

fn decompose(cli: &Cli, a: &crate::DecomposeArgs) -> Result<(), Failure> {
    let dom = a.domain.load()?;
    let w1 = whitney_decompose(&dom, Side::Interior, a.max_level)?;
    let w2 = whitney_decompose(&dom, Side::Complement, a.max_level)?;
    let (c1, c2) = (w1.check(), w2.check());
    let mut checks = whitney_checks("W1", &c1);
    checks.extend(whitney_checks("W2", &c2));
    let w3_ids = select_w3_ids(&w2, &dom);
    let in_w3: std::collections::HashSet<usize> = w3_ids.iter().copied().collect();
    w1.write_csv(create(&out_path(cli, "w1.csv")?)?, &|_| false)?;
    w2.write_csv(create(&out_path(cli, "w2.csv")?)?, &|i| in_w3.contains(&i))?;
    let mut reflection = serde_json::Value::Null;
    if !w3_ids.is_empty() {
        let w3: Vec<_> = w3_ids.iter().map(|&i| w2.cubes[i]).collect();
        let refl = build_reflection(&w1, &w3)?;
        let partners = w3_partners(&w2, &w3_ids);
        let chains = build_chains(&refl, &w1, &partners)?;
        let overlap = overlap_statistic(&chains, &refl, w1.len());
        let bad: Vec<usize> = (0..refl.pairs.len())
            .filter(|&j| !(1.0..=4.0).contains(&refl.pairs[j].size_ratio) || refl.pairs[j].dist_ratio > refl.c_refl)
            .collect();
        checks.push(Check::new(
            "(numero)",
            "reflected cube size within [ℓ(Q), 4ℓ(Q)] and distance within C_refl·ℓ(Q)",
            bad.is_empty(),
            json!({"violations": bad.len(), "c_refl": refl.c_refl}),
        ));
        checks.push(Check::new(
            "(finito)",
            "bounded overlap of the chain unions",
            overlap.max_multiplicity <= partners.iter().map(Vec::len).max().unwrap_or(0) + 1,
            json!({"max_multiplicity": overlap.max_multiplicity, "max_union_overlap": overlap.max_union_overlap}),
        ));
        let mut csv = String::from("w3_id,level");
        for k in 0..dom.n {
            let _ = write!(csv, ",k{}", k + 1);
        }
        csv.push_str(",star,size_ratio,dist_ratio\n");
        for (j, p) in refl.pairs.iter().enumerate() {
            let _ = write!(csv, "{},{}", w3_ids[j], p.cube.level);
            for k in 0..dom.n {
                let _ = write!(csv, ",{}", p.cube.index[k]);
            }
            let _ = writeln!(csv, ",{},{},{:.17e}", p.star, p.size_ratio, p.dist_ratio);
        }
        create(&out_path(cli, "reflection.csv")?)?.write_all(csv.as_bytes())?;
        reflection = json!({
            "c_refl": refl.c_refl,
            "max_chain_len": chains.max_len,
            "overlap": overlap,
        });
    }
    let result = json!({
        "domain": dom.descriptor,
        "label": dom.label(),
        "max_level": a.max_level,
        "w1": summarize(&w1, c1),
        "w2": summarize(&w2, c2),
        "w3_threshold": w3_threshold(&dom),
        "w3_cubes": w3_ids.len(),
        "reflection": reflection,
        "violations": checks.iter().filter(|c| !c.passed).count(),
        "checks": checks,
    });
    write_report(cli, "decompose", "decompose.json", result)?;
    invariant_failure(&checks)
}

fn extend_cmd(cli: &Cli, a: &crate::ExtendArgs) -> Result<(), Failure> {
    let dom = a.domain.load()?;
    if !a.input.with_extension("json").exists() && !a.input.exists() {
        return Err(Failure { code: 1, message: format!("input field {} not found", a.input.display()) });
    }
    let v = read_binary(&a.input)?;
    let asm = extend(&v, &dom, a.max_level)?;
    let rep = asm.report(a.p)?;
    let (bin, _) = write_binary(&asm.ev, &out_path(cli, "ev")?)?;
    let sc = &asm.scaffold;
    let cubes: Vec<_> = sc.refl.pairs.iter().map(|p| sc.w1.cubes[p.star]).collect();
    let ids: Vec<usize> = sc.refl.pairs.iter().map(|p| p.star).collect();
    write_fits_csv(create(&out_path(cli, "fits.csv")?)?, &ids, &cubes, &asm.fits)?;
    let checks = vec![
        Check::new("(corol1)", "Lp extension bound finite", !rep.global.violation && rep.global.corol1_ratio.is_some(), json!(rep.global.corol1_ratio)),
        Check::new("(corol2)", "W1∞ extension bound finite", !rep.global.violation && rep.global.corol2_ratio.is_some(), json!(rep.global.corol2_ratio)),
        Check::new("(stimalunghezza)", "contributors to far cubes are at least a quarter of their size", rep.size_bound_failures.is_empty(), json!(rep.size_bound_failures.len())),
        Check::new("(stima1)-(stima4)", "per-cube estimates finite", rep.violations.is_empty(), json!(rep.violations.len())),
    ];
    let result = json!({
        "label": dom.label(),
        "ev_file": bin.display().to_string(),
        "report": rep,
        "checks": checks,
    });
    write_report(cli, "extend", "extension.json", result)?;
    invariant_failure(&checks)
}

fn lab_config(a: &crate::EstimateArgs) -> LabConfig {
    LabConfig {
        grid_level: a.grid_level,
        modes: a.modes,
        collar_width: a.collar_width,
        ascent_iters: a.ascent_iters,
        ascent_starts: a.ascent_starts,
    }
}

fn estimate(cli: &Cli, a: &crate::EstimateArgs) -> Result<(), Failure> {
    if a.samples == 0 {
        return Err(Error::InvalidParam("samples must be ≥ 1".into()).into());
    }
    let dom = a.domain.load()?;
    let cfg = lab_config(a);
    let lab = Lab::new(&dom, a.inequality.into(), a.bc.into(), a.p, &cfg)?;
    let mut est = estimate_with(&lab, a.samples, a.seed, &cfg)?;
    let (bin, _) = write_binary(&lab.field(&est.maximizer)?, &out_path(cli, "maximizer")?)?;
    est.maximizer_file = Some(bin.file_name().unwrap().to_string_lossy().into_owned());
    let tag = lab.inequality.tag();
    write_report(cli, "estimate", "estimate.json", json!({"tag": tag, "estimate": est}))?;
    Ok(())
}

fn probe(cli: &Cli, a: &crate::ProbeArgs) -> Result<(), Failure> {
    let dom = a.domain.load()?;
    let w = whitney_decompose(&dom, Side::Interior, a.max_level)?;
    let r = epsilon_delta_probe(&dom, &w, a.pairs, a.seed)?;
    write_report(cli, "probe", "probe.json", json!({"label": dom.label(), "epsilon": dom.epsilon, "delta": dom.delta, "probe": r}))?;
    Ok(())
}

fn default_radii(dom: &Domain) -> Vec<f64> {
    let rmax = dom.diameter() / 8.0;
    geometric_radii(rmax, rmax / 64.0, 6)
}

fn dset(cli: &Cli, a: &crate::DsetArgs) -> Result<(), Failure> {
    let dom = a.domain.load()?;
    let radii = if a.radii.is_empty() { default_radii(&dom) } else { a.radii.clone() };
    let r = dset_check(&dom, &radii, a.points, a.samples, a.seed)?;
    write_report(cli, "dset", "dset.json", json!({"label": dom.label(), "d_expected": dom.boundary_dim, "report": r}))?;
    Ok(())
}

fn study(cli: &Cli, a: &crate::StudyArgs) -> Result<(), Failure> {
    let cfg = LabConfig { grid_level: a.grid_level, ascent_iters: a.ascent_iters, ..LabConfig::default() };
    let bcs: Vec<BoundaryCondition> = a.bc.iter().map(|&b| b.into()).collect();
    let rows = koch_study(&a.levels, &bcs, &a.p, a.samples, a.seed, &cfg)?;
    write_study_csv(&rows, create(&out_path(cli, "study.csv")?)?)?;
    write_report(cli, "study", "study.json", json!({"rows": rows}))?;
    Ok(())
}

fn oracle(cli: &Cli, a: &crate::OracleArgs) -> Result<(), Failure> {
    let dom = a.domain.load()?;
    let grid = Grid::covering(&dom, a.grid_level);
    let w = a.collar_width.unwrap_or_else(|| default_collar_width(&dom, &grid));
    let r = spectral_oracle_p2(&dom, grid, a.bc.into(), w)?;
    let (bin, _) = write_binary(r.eigenfield.as_ref().unwrap(), &out_path(cli, "eigenfield")?)?;
    write_report(
        cli,
        "oracle",
        "oracle.json",
        json!({"label": dom.label(), "h": grid.h(), "collar_width": w, "oracle": r, "eigenfield_file": bin.file_name().unwrap().to_string_lossy()}),
    )?;
    Ok(())
}

fn witness(cli: &Cli, a: &crate::WitnessArgs) -> Result<(), Failure> {
    let dom = a.domain.load()?;
    let cfg = LabConfig { grid_level: a.grid_level, ..LabConfig::default() };
    let r = contradiction_witness(&dom, a.bc.into(), a.p, a.fields, a.seed, a.tol, &cfg)?;
    let checks = vec![Check::new(
        "(gaffney)",
        "fields with tiny div and curl have tiny W1p norm",
        r.counterexamples == 0,
        json!({"counterexamples": r.counterexamples, "epsilon_w": r.epsilon_w}),
    )];
    write_report(cli, "witness", "witness.json", json!({"witness": r, "checks": checks}))?;
    invariant_failure(&checks)
}

fn gen_field(cli: &Cli, a: &crate::GenFieldArgs) -> Result<(), Failure> {
    let dom = a.domain.load()?;
    let grid = Grid::covering(&dom, a.grid_level);
    let bc: BoundaryCondition = a.bc.into();
    let w = match (bc, a.collar_width) {
        (BoundaryCondition::None, _) => 0.0,
        (_, Some(w)) => w,
        (_, None) => default_collar_width(&dom, &grid),
    };
    let f = FieldGenerator::new(&dom, grid, bc, a.modes, w)?.random(a.seed)?;
    let (bin, json_path) = write_binary(&f, &out_path(cli, &a.name)?)?;
    let mut files = vec![bin.display().to_string(), json_path.display().to_string()];
    if a.csv {
        let p = out_path(cli, &format!("{}.csv", a.name))?;
        write_csv(&f, create(&p)?)?;
        files.push(p.display().to_string());
    }
    write_report(
        cli,
        "gen-field",
        &format!("{}.report.json", a.name),
        json!({"label": dom.label(), "h": grid.h(), "collar_width": w, "files": files}),
    )?;
    Ok(())
}
