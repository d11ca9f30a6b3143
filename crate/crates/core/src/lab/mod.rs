//! Empirical Friedrichs and Gaffney constants: ratios of grid norms for
//! collar fields, seeded sampling, ratio ascent in potential space, and an
//! exact `p = 2` eigenvalue oracle.

pub mod linalg;
pub mod spectral;

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::generate::{random_coefficients, BoundaryCondition, FieldGenerator};
use crate::field::ops::{curl_of, div_of, jacobian_at, magnitude, norm_report, w1p_combine, NormReport};
use crate::field::{Grid, GridField, NodeClass, Region, Selector};
use crate::geometry::{Descriptor, Domain};

pub use spectral::{dense_oracle_p2, spectral_oracle_p2, SpectralResult};

/// Denominators below this multiple of `‖v‖` mark an unbounded direction.
pub const UNBOUNDED_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inequality {
    /// `‖v‖_{W^{1,p}} ≤ C(‖v‖ + ‖curl v‖ + ‖div v‖)`.
    Friedrichs,
    /// `‖v‖_{W^{1,p}} ≤ C(‖curl v‖ + ‖div v‖)`.
    Gaffney,
}

impl Inequality {
    pub fn tag(self) -> &'static str {
        match self {
            Inequality::Friedrichs => "(friedrichs)",
            Inequality::Gaffney => "(gaffney)",
        }
    }
}

impl std::str::FromStr for Inequality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "friedrichs" => Ok(Self::Friedrichs),
            "gaffney" => Ok(Self::Gaffney),
            other => Err(Error::InvalidParam(format!("unknown inequality `{other}`"))),
        }
    }
}

impl std::fmt::Display for Inequality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Friedrichs => "friedrichs",
            Self::Gaffney => "gaffney",
        })
    }
}

/// `‖v‖_{W^{1,p}}` over a denominator. `value` is `None` for an
/// unbounded-direction candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub numerator: f64,
    pub denominator: f64,
    pub value: Option<f64>,
}

impl Ratio {
    fn new(numerator: f64, denominator: f64, field: f64) -> Self {
        let value = (denominator > UNBOUNDED_TOL * field).then(|| numerator / denominator);
        Ratio { numerator, denominator, value }
    }

    /// The ratio, with unbounded candidates as `+∞`.
    pub fn get(&self) -> f64 {
        self.value.unwrap_or(f64::INFINITY)
    }
}

fn ratio_from(r: &NormReport, which: Inequality) -> Result<Ratio> {
    if r.w1p == 0.0 {
        return Err(Error::InvalidParam("field vanishes on Ω".into()));
    }
    let d = r.lp_curl + r.lp_div + if which == Inequality::Friedrichs { r.lp_field } else { 0.0 };
    Ok(Ratio::new(r.w1p, d, r.lp_field))
}

/// `ratio` for a field on its interior nodes.
pub fn ratio(v: &GridField, p: f64, which: Inequality) -> Result<Ratio> {
    ratio_from(&norm_report(v, p, &Selector::whole(&v.grid, Region::Interior))?, which)
}

pub fn friedrichs_ratio(v: &GridField, p: f64) -> Result<Ratio> {
    ratio(v, p, Inequality::Friedrichs)
}

pub fn gaffney_ratio(v: &GridField, p: f64) -> Result<Ratio> {
    ratio(v, p, Inequality::Gaffney)
}

/// Sampling and ascent settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabConfig {
    pub grid_level: u8,
    /// Cosine modes per axis; 6 in 2D and 3 in 3D when absent.
    pub modes: Option<usize>,
    /// Collar width; see [`default_collar_width`] when absent.
    pub collar_width: Option<f64>,
    pub ascent_iters: usize,
    pub ascent_starts: usize,
}

impl Default for LabConfig {
    fn default() -> Self {
        LabConfig { grid_level: 7, modes: None, collar_width: None, ascent_iters: 40, ascent_starts: 3 }
    }
}

/// `min(0.45 r, max(4h, r/8))` with `r` the inradius.
pub fn default_collar_width(dom: &Domain, grid: &Grid) -> f64 {
    let r = dom.inradius_estimate();
    (0.45 * r).min((4.0 * grid.h()).max(r / 8.0))
}

/// Column values and Jacobians at the interior nodes, one block per
/// generator coefficient.
struct Columns {
    nodes: usize,
    vals: Vec<Vec<f64>>,
    jacs: Vec<Vec<f64>>,
}

const COLUMN_BUDGET: usize = 768 << 20;

/// A domain, boundary condition, exponent and inequality with the collar
/// field generator on a fixed grid.
pub struct Lab {
    pub inequality: Inequality,
    pub bc: BoundaryCondition,
    pub p: f64,
    pub descriptor: Descriptor,
    pub label: String,
    pub generator: FieldGenerator,
    pub collar_width: f64,
    pub modes: usize,
    pub grid_level: u8,
    interior: Vec<usize>,
    columns: OnceLock<Columns>,
}

impl Lab {
    pub fn new(dom: &Domain, inequality: Inequality, bc: BoundaryCondition, p: f64, cfg: &LabConfig) -> Result<Self> {
        if bc == BoundaryCondition::None {
            return Err(Error::InvalidParam("sampled constants need normal_zero or tangential_zero".into()));
        }
        if !(p > 1.0) {
            return Err(Error::InvalidParam(format!("exponent must exceed 1, got {p}")));
        }
        let grid = Grid::covering(dom, cfg.grid_level);
        let collar_width = cfg.collar_width.unwrap_or_else(|| default_collar_width(dom, &grid));
        let modes = cfg.modes.unwrap_or(if dom.n == 2 { 6 } else { 3 });
        let generator = FieldGenerator::new(dom, grid, bc, modes, collar_width)?;
        let interior = (0..grid.len()).filter(|&i| generator.mask[i] == NodeClass::Interior).collect::<Vec<_>>();
        if interior.is_empty() {
            return Err(Error::EmptyRegion("no interior nodes".into()));
        }
        Ok(Lab {
            inequality,
            bc,
            p,
            descriptor: dom.descriptor.clone(),
            label: dom.label(),
            generator,
            collar_width,
            modes,
            grid_level: cfg.grid_level,
            interior,
            columns: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    pub fn grid(&self) -> &Grid {
        &self.generator.grid
    }

    pub fn coefficients(&self, seed: u64) -> Vec<f64> {
        random_coefficients(&self.generator.basis, self.generator.potentials(), seed)
    }

    pub fn field(&self, c: &[f64]) -> Result<GridField> {
        self.generator.field(c)
    }

    /// Ratio of the field with coefficients `c`, from the grid norms.
    pub fn ratio_of(&self, c: &[f64]) -> Result<Ratio> {
        ratio(&self.field(c)?, self.p, self.inequality)
    }

    fn columns(&self) -> Result<&Columns> {
        let n = self.grid().n;
        let m = self.interior.len();
        let bytes = self.dim() * m * (n + n * n) * 8;
        if bytes > COLUMN_BUDGET {
            return Err(Error::InvalidParam(format!(
                "ascent needs {} MiB of columns; lower the modes or the grid level",
                bytes >> 20
            )));
        }
        Ok(self.columns.get_or_init(|| {
            let sel = Selector::whole(self.grid(), Region::Interior);
            let (vals, jacs): (Vec<_>, Vec<_>) = (0..self.dim())
                .into_par_iter()
                .map(|k| {
                    let f = self.generator.column(k).expect("column index in range");
                    let mut v = Vec::with_capacity(m * n);
                    let mut j = vec![0.0; m * n * n];
                    for (r, &i) in self.interior.iter().enumerate() {
                        v.extend_from_slice(f.at(i));
                        jacobian_at(&f, &sel, i, &mut j[r * n * n..(r + 1) * n * n]);
                    }
                    (v, j)
                })
                .unzip();
            Columns { nodes: m, vals, jacs }
        }))
    }

    /// Ratio and its gradient in coefficient space, from cached columns.
    pub fn ratio_and_gradient(&self, c: &[f64]) -> Result<(f64, Vec<f64>)> {
        if c.len() != self.dim() {
            return Err(Error::InvalidParam(format!("expected {} coefficients, got {}", self.dim(), c.len())));
        }
        let cols = self.columns()?;
        let n = self.grid().n;
        let nn = n * n;
        let m = cols.nodes;
        let mut v = vec![0.0; m * n];
        let mut j = vec![0.0; m * nn];
        for (k, &ck) in c.iter().enumerate() {
            if ck != 0.0 {
                v.iter_mut().zip(&cols.vals[k]).for_each(|(a, b)| *a += ck * b);
                j.iter_mut().zip(&cols.jacs[k]).for_each(|(a, b)| *a += ck * b);
            }
        }
        let p = self.p;
        let pw = |x: f64| if x > 0.0 { x.powf(p) } else { 0.0 };
        // |x|^{p−2} as a multiplier of x.
        let pm = |x: f64| if x > 0.0 { x.powf(p - 2.0) } else { 0.0 };
        let (mut sf, mut sg, mut sd, mut sc) = (0.0, 0.0, 0.0, 0.0);
        for r in 0..m {
            let jr = &j[r * nn..(r + 1) * nn];
            let mut cu = [0.0; 3];
            let kc = curl_of(jr, n, &mut cu);
            sf += pw(magnitude(&v[r * n..(r + 1) * n]));
            sg += pw(magnitude(jr));
            sd += pw(div_of(jr, n).abs());
            sc += pw(magnitude(&cu[..kc]));
        }
        let vol = self.grid().cell_volume();
        let norm = |s: f64| (s * vol).powf(1.0 / p);
        let (f, g, dv, cl) = (norm(sf), norm(sg), norm(sd), norm(sc));
        let num = w1p_combine(f, g, p);
        let fr = self.inequality == Inequality::Friedrichs;
        let den = cl + dv + if fr { f } else { 0.0 };
        if num == 0.0 || den <= UNBOUNDED_TOL * f {
            return Err(Error::Numerical("ratio undefined at this iterate".into()));
        }
        let r = num / den;
        // dR = (dN − R dD)/D with d‖x‖ = ‖x‖^{1−p} hⁿ Σ|x|^{p−2} x·dx.
        let inv = |x: f64| if x > 0.0 { x.powf(1.0 - p) } else { 0.0 };
        let wn = inv(num) * vol / den;
        let (wf, wd, wc) = (inv(f) * vol * r / den, inv(dv) * vol * r / den, inv(cl) * vol * r / den);
        let mut av = vec![0.0; m * n];
        let mut aj = vec![0.0; m * nn];
        for row in 0..m {
            let vr = &v[row * n..(row + 1) * n];
            let jr = &j[row * nn..(row + 1) * nn];
            let fv = pm(magnitude(vr));
            let mut coef_v = wn * fv;
            if fr {
                coef_v -= wf * fv;
            }
            for a in 0..n {
                av[row * n + a] = coef_v * vr[a];
            }
            let gm = wn * pm(magnitude(jr));
            let ajr = &mut aj[row * nn..(row + 1) * nn];
            for e in 0..nn {
                ajr[e] = gm * jr[e];
            }
            let d = div_of(jr, n);
            let dd = wd * pm(d.abs()) * d;
            for a in 0..n {
                ajr[a * n + a] -= dd;
            }
            let mut cu = [0.0; 3];
            let kc = curl_of(jr, n, &mut cu);
            let cm = wc * pm(magnitude(&cu[..kc]));
            let at = |c: usize, a: usize| c * n + a;
            if n == 2 {
                ajr[at(1, 0)] -= cm * cu[0];
                ajr[at(0, 1)] += cm * cu[0];
            } else {
                ajr[at(2, 1)] -= cm * cu[0];
                ajr[at(1, 2)] += cm * cu[0];
                ajr[at(0, 2)] -= cm * cu[1];
                ajr[at(2, 0)] += cm * cu[1];
                ajr[at(1, 0)] -= cm * cu[2];
                ajr[at(0, 1)] += cm * cu[2];
            }
        }
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let grad = (0..self.dim()).into_par_iter().map(|k| dot(&av, &cols.vals[k]) + dot(&aj, &cols.jacs[k])).collect();
        Ok((r, grad))
    }
}

/// One ratio-ascent run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AscentTrace {
    /// Ratio after each accepted step, starting with the initial value.
    pub ratios: Vec<f64>,
    /// Relative step length of each accepted step.
    pub steps: Vec<f64>,
    pub converged: bool,
    /// Final coefficients, scaled so that `‖v‖_{W^{1,p}} = 1`.
    pub coefficients: Vec<f64>,
}

impl AscentTrace {
    pub fn final_ratio(&self) -> f64 {
        *self.ratios.last().unwrap()
    }
}

/// Relative gain below which the ascent counts as stationary.
const ASCENT_TOL: f64 = 1e-9;

/// Normalized gradient ascent on the ratio over generator coefficients with
/// backtracking. Every accepted step increases the ratio; the run converges
/// when no step improves it by more than a relative `1e−9`.
pub fn maximize_ratio(lab: &Lab, init: &[f64], iters: usize) -> Result<AscentTrace> {
    if lab.p.is_infinite() {
        return Err(Error::InvalidParam("ratio ascent needs a finite exponent".into()));
    }
    if init.iter().all(|x| *x == 0.0) {
        return Err(Error::InvalidParam("ascent needs a nonzero start".into()));
    }
    let normalize = |c: &[f64]| -> Result<(Vec<f64>, f64)> {
        let r = norm_report(&lab.field(c)?, lab.p, &Selector::whole(lab.grid(), Region::Interior))?;
        if r.w1p == 0.0 {
            return Err(Error::InvalidParam("start field vanishes on Ω".into()));
        }
        Ok((c.iter().map(|x| x / r.w1p).collect(), r.w1p))
    };
    let mut c = normalize(init)?.0;
    let (mut r, mut g) = lab.ratio_and_gradient(&c)?;
    let mut trace = AscentTrace { ratios: vec![r], steps: Vec::new(), converged: false, coefficients: c.clone() };
    let mut t = 0.25;
    for _ in 0..iters {
        let cn = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if gn * cn <= ASCENT_TOL * r {
            trace.converged = true;
            break;
        }
        let mut accepted = None;
        while t > 1e-10 {
            let trial: Vec<f64> = c.iter().zip(&g).map(|(x, d)| x + t * cn / gn * d).collect();
            if let Ok((rt, gt)) = lab.ratio_and_gradient(&trial) {
                if rt > r {
                    accepted = Some((trial, rt, gt));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((trial, rt, gt)) = accepted else {
            trace.converged = true;
            break;
        };
        let gain = rt - r;
        let (cs, scale) = normalize(&trial)?;
        c = cs;
        // The ratio is scale-invariant, so the gradient rescales inversely.
        g = gt.iter().map(|x| x * scale).collect();
        r = rt;
        trace.ratios.push(r);
        trace.steps.push(t);
        trace.coefficients.clone_from(&c);
        if gain <= ASCENT_TOL * r {
            trace.converged = true;
            break;
        }
        t = (2.0 * t).min(1.0);
    }
    Ok(trace)
}

/// Sampled and ascended constant for one domain, inequality, bc and exponent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub inequality: Inequality,
    pub bc: BoundaryCondition,
    /// `None` stands for ∞.
    pub p: Option<f64>,
    pub domain: Descriptor,
    pub label: String,
    pub grid_level: u8,
    pub h: f64,
    pub collar_width: f64,
    pub modes: usize,
    pub samples: usize,
    pub seed: u64,
    /// Largest ratio seen; `None` if some field was an unbounded candidate.
    pub max_ratio: Option<f64>,
    /// Largest ratio among the samples alone.
    pub sampled_max: Option<f64>,
    pub sample_ratios: Vec<Option<f64>>,
    pub unbounded_candidates: usize,
    pub ascent: Vec<AscentTrace>,
    /// Coefficients of the best field found.
    pub maximizer: Vec<f64>,
    /// Set by callers that dump the maximizer field.
    #[serde(default)]
    pub maximizer_file: Option<String>,
}

/// Max ratio over `samples` seeded collar fields (seeds `seed..seed+samples`),
/// refined by ascent from the best few when the exponent is finite.
pub fn estimate_with(lab: &Lab, samples: usize, seed: u64, cfg: &LabConfig) -> Result<ConstantEstimate> {
    if samples == 0 {
        return Err(Error::InvalidParam("samples must be ≥ 1".into()));
    }
    let ratios: Vec<Ratio> = (0..samples as u64)
        .into_par_iter()
        .map(|i| lab.ratio_of(&lab.coefficients(seed + i)))
        .collect::<Result<_>>()?;
    let unbounded = ratios.iter().filter(|r| r.value.is_none()).count();
    let mut order: Vec<usize> = (0..samples).collect();
    order.sort_by(|&a, &b| ratios[b].get().total_cmp(&ratios[a].get()).then(a.cmp(&b)));
    let best = order[0];
    let sampled_max = ratios[best].value;
    let mut max_ratio = sampled_max;
    let mut maximizer = lab.coefficients(seed + best as u64);
    let mut ascent = Vec::new();
    if lab.p.is_finite() && cfg.ascent_iters > 0 && unbounded == 0 {
        for &i in order.iter().take(cfg.ascent_starts) {
            let tr = maximize_ratio(lab, &lab.coefficients(seed + i as u64), cfg.ascent_iters)?;
            if max_ratio.is_some_and(|m| tr.final_ratio() > m) {
                max_ratio = Some(tr.final_ratio());
                maximizer = tr.coefficients.clone();
            }
            ascent.push(tr);
        }
    }
    Ok(ConstantEstimate {
        inequality: lab.inequality,
        bc: lab.bc,
        p: lab.p.is_finite().then_some(lab.p),
        domain: lab.descriptor.clone(),
        label: lab.label.clone(),
        grid_level: lab.grid_level,
        h: lab.grid().h(),
        collar_width: lab.collar_width,
        modes: lab.modes,
        samples,
        seed,
        max_ratio,
        sampled_max,
        sample_ratios: ratios.iter().map(|r| r.value).collect(),
        unbounded_candidates: unbounded,
        ascent,
        maximizer,
        maximizer_file: None,
    })
}

pub fn estimate_constant(
    dom: &Domain,
    inequality: Inequality,
    bc: BoundaryCondition,
    p: f64,
    samples: usize,
    seed: u64,
    cfg: &LabConfig,
) -> Result<ConstantEstimate> {
    let lab = Lab::new(dom, inequality, bc, p, cfg)?;
    estimate_with(&lab, samples, seed, cfg)
}

/// Fields whose `‖div v‖ + ‖curl v‖` is tiny relative to `‖v‖_{W^{1,p}}`.
///
/// Fields are scaled to `‖v‖_{W^{1,p}} = 1`. A field is flagged when its
/// defect `‖div v‖ + ‖curl v‖` is at most `tol`. With `C` the largest sampled
/// Gaffney ratio, the threshold is `ε_w = C·tol`: a flagged field that is a
/// genuine member of the space would need `‖v‖_{W^{1,p}} ≤ ε_w`, which fails
/// for the normalized field whenever `ε_w < 1`. Flagged fields with
/// `ε_w < 1` are therefore counterexamples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessReport {
    pub label: String,
    pub bc: BoundaryCondition,
    pub p: Option<f64>,
    pub fields: usize,
    pub seed: u64,
    pub tol: f64,
    pub c_est: f64,
    pub epsilon_w: f64,
    pub flagged: usize,
    pub counterexamples: usize,
    /// Smallest defect over all fields.
    pub min_defect: f64,
}

pub fn contradiction_witness(
    dom: &Domain,
    bc: BoundaryCondition,
    p: f64,
    fields: usize,
    seed: u64,
    tol: f64,
    cfg: &LabConfig,
) -> Result<WitnessReport> {
    let lab = Lab::new(dom, Inequality::Gaffney, bc, p, cfg)?;
    let ratios: Vec<Ratio> =
        (0..fields as u64).into_par_iter().map(|i| lab.ratio_of(&lab.coefficients(seed + i))).collect::<Result<_>>()?;
    let defects: Vec<f64> = ratios.iter().map(|r| r.denominator / r.numerator).collect();
    let c_est = ratios.iter().map(|r| r.get()).fold(0.0, f64::max);
    let epsilon_w = c_est * tol;
    let flagged = defects.iter().filter(|&&d| d <= tol).count();
    Ok(WitnessReport {
        label: lab.label.clone(),
        bc,
        p: p.is_finite().then_some(p),
        fields,
        seed,
        tol,
        c_est,
        epsilon_w,
        flagged,
        counterexamples: if epsilon_w < 1.0 { flagged } else { 0 },
        min_defect: defects.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// One row of the constant-versus-prefractal-level study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyRow {
    pub koch_level: i64,
    pub inequality: Inequality,
    pub bc: BoundaryCondition,
    pub p: f64,
    pub grid_level: u8,
    pub h: f64,
    pub collar_width: f64,
    pub samples: usize,
    pub sampled_max: Option<f64>,
    pub max_ratio: Option<f64>,
    pub finite: bool,
}

/// Gaffney constants on `koch_snowflake(k)` for every level, bc and exponent.
pub fn koch_study(
    levels: &[i64],
    bcs: &[BoundaryCondition],
    ps: &[f64],
    samples: usize,
    seed: u64,
    cfg: &LabConfig,
) -> Result<Vec<StudyRow>> {
    let mut rows = Vec::new();
    for &k in levels {
        let dom = crate::geometry::gallery_level("koch_snowflake", Some(k))?;
        for &bc in bcs {
            for &p in ps {
                let e = estimate_constant(&dom, Inequality::Gaffney, bc, p, samples, seed, cfg)?;
                rows.push(StudyRow {
                    koch_level: k,
                    inequality: Inequality::Gaffney,
                    bc,
                    p,
                    grid_level: e.grid_level,
                    h: e.h,
                    collar_width: e.collar_width,
                    samples,
                    sampled_max: e.sampled_max,
                    max_ratio: e.max_ratio,
                    finite: e.max_ratio.is_some_and(f64::is_finite),
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_study_csv<W: std::io::Write>(rows: &[StudyRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
