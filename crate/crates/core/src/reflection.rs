//! Reflected cubes for W₃, chains of touching interior cubes between them,
//! and the chain overlap statistic.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::whitney::{DyadicCube, WhitneyDecomposition};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReflectionPair {
    pub cube: DyadicCube,
    /// Id of `Q*` in W₁.
    pub star: usize,
    /// `ℓ(Q*)/ℓ(Q)`, one of 1, 2, 4.
    pub size_ratio: f64,
    /// `dist(Q, Q*)/ℓ(Q)`.
    pub dist_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReflectionMap {
    /// One entry per W₃ cube, in the order they were given.
    pub pairs: Vec<ReflectionPair>,
    /// Largest `dist(Q, Q*)/ℓ(Q)` over all pairs.
    pub c_refl: f64,
}

/// Dense per-level lookup of W₁ cubes by index.
struct LevelIndex {
    level: u8,
    lo: [i64; 3],
    dims: [usize; 3],
    ids: Vec<u32>,
}

impl LevelIndex {
    fn get(&self, k: [i64; 3]) -> Option<usize> {
        let mut off = [0usize; 3];
        for a in 0..3 {
            let r = k[a] - self.lo[a];
            if r < 0 || r >= self.dims[a] as i64 {
                return None;
            }
            off[a] = r as usize;
        }
        let v = self.ids[(off[2] * self.dims[1] + off[1]) * self.dims[0] + off[0]];
        (v != u32::MAX).then_some(v as usize)
    }
}

fn level_indices(w1: &WhitneyDecomposition) -> BTreeMap<u8, LevelIndex> {
    let n = w1.n;
    let mut by_level: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, c) in w1.cubes.iter().enumerate() {
        by_level.entry(c.level).or_default().push(i);
    }
    by_level
        .into_iter()
        .map(|(level, ids)| {
            let mut lo = [0i64; 3];
            let mut hi = [1i64; 3];
            for a in 0..n {
                lo[a] = ids.iter().map(|&i| w1.cubes[i].index[a]).min().unwrap();
                hi[a] = ids.iter().map(|&i| w1.cubes[i].index[a]).max().unwrap() + 1;
            }
            let dims = [(hi[0] - lo[0]) as usize, (hi[1] - lo[1]) as usize, (hi[2] - lo[2]) as usize];
            let mut idx = LevelIndex { level, lo, dims, ids: vec![u32::MAX; dims[0] * dims[1] * dims[2]] };
            for &i in &ids {
                let k = w1.cubes[i].index;
                let o = [
                    (k[0] - lo[0]) as usize,
                    (k[1] - lo[1]) as usize,
                    (k[2] - lo[2]) as usize,
                ];
                idx.ids[(o[2] * dims[1] + o[1]) * dims[0] + o[0]] = i as u32;
            }
            (level, idx)
        })
        .collect()
}

/// Picks, for each W₃ cube `Q`, the W₁ cube `S` with `ℓ(S) ∈ [ℓ(Q), 4ℓ(Q)]`
/// closest to `Q`; ties go to the smallest `(level, index)`.
pub fn build_reflection(w1: &WhitneyDecomposition, w3: &[DyadicCube]) -> Result<ReflectionMap> {
    let n = w1.n;
    let levels = level_indices(w1);
    // Window radius beyond which nothing can be found.
    let span = levels
        .values()
        .map(|li| li.dims.iter().copied().max().unwrap() as i64)
        .max()
        .unwrap_or(0);
    let pairs: Vec<Result<ReflectionPair>> = w3
        .par_iter()
        .map(|q| {
            let mut best: Option<(i64, DyadicCube, usize)> = None;
            let bands: Vec<&LevelIndex> = (0..=2u8)
                .filter_map(|t| q.level.checked_sub(t).and_then(|l| levels.get(&l)))
                .collect();
            let max_r = span + 2;
            let mut r = 0i64;
            loop {
                for li in &bands {
                    let s = q.level - li.level;
                    let mut c = [0i64; 3];
                    for a in 0..n {
                        c[a] = q.index[a] >> s;
                    }
                    for_each_ring(c, r, n, |k| {
                        if let Some(id) = li.get(k) {
                            let cand = w1.cubes[id];
                            let g = q.gap2(&cand, n);
                            let better = match &best {
                                None => true,
                                Some((bg, bc, _)) => (g, cand.level, cand.index) < (*bg, bc.level, bc.index),
                            };
                            if better {
                                best = Some((g, cand, id));
                            }
                        }
                    });
                }
                // Unvisited cubes are at least `r` cells of Q's size away.
                if let Some((g, _, _)) = best {
                    if g < r * r {
                        break;
                    }
                }
                if r > max_r {
                    break;
                }
                r += 1;
            }
            match best {
                Some((_, s, id)) => Ok(ReflectionPair {
                    cube: *q,
                    star: id,
                    size_ratio: s.edge() / q.edge(),
                    dist_ratio: q.distance(&s, n) / q.edge(),
                }),
                None => Err(Error::NoReflection(format!("{q:?}"))),
            }
        })
        .collect();
    let pairs: Vec<ReflectionPair> = pairs.into_iter().collect::<Result<_>>()?;
    let c_refl = pairs.iter().map(|p| p.dist_ratio).fold(0.0, f64::max);
    Ok(ReflectionMap { pairs, c_refl })
}

/// Visits the integer points at Chebyshev distance exactly `r` from `c`.
fn for_each_ring(c: [i64; 3], r: i64, n: usize, mut f: impl FnMut([i64; 3])) {
    if r == 0 {
        f(c);
        return;
    }
    if n == 2 {
        for y in -r..=r {
            if y.abs() == r {
                for x in -r..=r {
                    f([c[0] + x, c[1] + y, c[2]]);
                }
            } else {
                f([c[0] - r, c[1] + y, c[2]]);
                f([c[0] + r, c[1] + y, c[2]]);
            }
        }
    } else {
        for z in -r..=r {
            for y in -r..=r {
                if z.abs() == r || y.abs() == r {
                    for x in -r..=r {
                        f([c[0] + x, c[1] + y, c[2] + z]);
                    }
                } else {
                    f([c[0] - r, c[1] + y, c[2] + z]);
                    f([c[0] + r, c[1] + y, c[2] + z]);
                }
            }
        }
    }
}

/// Chains between reflected cubes of touching W₃ cubes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainSet {
    /// W₃ positions `(j, k)` with `j < k` whose cubes touch.
    pub pairs: Vec<(usize, usize)>,
    /// W₁ ids from `Q_j*` to `Q_k*`, parallel to `pairs`.
    pub chains: Vec<Vec<usize>>,
    /// Touching W₃ partners of each W₃ position, ascending.
    pub partners: Vec<Vec<usize>>,
    /// Longest chain length `m` (1 when every pair shares its reflected cube).
    pub max_len: usize,
}

impl ChainSet {
    /// `F(Q_j)`: W₁ ids in the union of the chains from `Q_j` to its partners
    /// and `Q_j*` itself.
    pub fn union_for(&self, j: usize, refl: &ReflectionMap) -> Vec<usize> {
        let mut out = vec![refl.pairs[j].star];
        for &k in &self.partners[j] {
            out.extend_from_slice(self.chain(j, k).as_slice());
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Chain from `Q_j*` to `Q_k*` (W₁ ids), reversing the stored one if needed.
    pub fn chain(&self, j: usize, k: usize) -> Vec<usize> {
        let (a, b, rev) = if j < k { (j, k, false) } else { (k, j, true) };
        let pos = self.pairs.binary_search(&(a, b)).expect("pair of touching W3 cubes");
        let mut c = self.chains[pos].clone();
        if rev {
            c.reverse();
        }
        c
    }
}

/// Touching pairs among the W₃ cubes, given their ids in W₂.
pub fn w3_partners(w2: &WhitneyDecomposition, w3_ids: &[usize]) -> Vec<Vec<usize>> {
    let pos: HashMap<usize, usize> = w3_ids.iter().enumerate().map(|(p, &id)| (id, p)).collect();
    w3_ids
        .iter()
        .map(|&id| {
            let mut v: Vec<usize> =
                w2.adjacency[id].iter().filter_map(|&o| pos.get(&(o as usize)).copied()).collect();
            v.sort_unstable();
            v
        })
        .collect()
}

/// Shortest touching-cube paths in W₁ between reflected cubes of every touching
/// W₃ pair; `partners[j]` lists the W₃ positions touching `j`.
pub fn build_chains(refl: &ReflectionMap, w1: &WhitneyDecomposition, partners: &[Vec<usize>]) -> Result<ChainSet> {
    let per_source: Vec<Result<Vec<((usize, usize), Vec<usize>)>>> = (0..partners.len())
        .into_par_iter()
        .map(|j| {
            let targets: Vec<usize> = partners[j].iter().copied().filter(|&k| k > j).collect();
            if targets.is_empty() {
                return Ok(Vec::new());
            }
            let src = refl.pairs[j].star;
            let mut want: HashMap<usize, Vec<usize>> = HashMap::new();
            for &k in &targets {
                want.entry(refl.pairs[k].star).or_default().push(k);
            }
            let mut parent: HashMap<usize, usize> = HashMap::from([(src, src)]);
            let mut found: HashMap<usize, Vec<usize>> = HashMap::new();
            let mut remaining = want.len();
            let trace = |parent: &HashMap<usize, usize>, t: usize| {
                let mut path = vec![t];
                let mut w = t;
                while w != src {
                    w = parent[&w];
                    path.push(w);
                }
                path.reverse();
                path
            };
            if want.contains_key(&src) {
                found.insert(src, vec![src]);
                remaining -= 1;
            }
            let mut q = VecDeque::from([src]);
            while remaining > 0 {
                let Some(u) = q.pop_front() else { break };
                for &v in &w1.adjacency[u] {
                    let v = v as usize;
                    if parent.contains_key(&v) {
                        continue;
                    }
                    parent.insert(v, u);
                    if want.contains_key(&v) {
                        found.insert(v, trace(&parent, v));
                        remaining -= 1;
                    }
                    q.push_back(v);
                }
            }
            if remaining > 0 {
                return Err(Error::ChainDisconnected);
            }
            let mut out = Vec::new();
            for &k in &targets {
                out.push(((j, k), found[&refl.pairs[k].star].clone()));
            }
            Ok(out)
        })
        .collect();
    let mut pairs = Vec::new();
    let mut chains = Vec::new();
    for r in per_source {
        for (p, c) in r? {
            pairs.push(p);
            chains.push(c);
        }
    }
    let max_len = chains.iter().map(|c| c.len()).max().unwrap_or(1);
    Ok(ChainSet { pairs, chains, partners: partners.to_vec(), max_len })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverlapStatistic {
    /// `max_j max_x Σ_k χ_{∪F_{j,k}}(x)` over W₃ positions `j`.
    pub max_multiplicity: usize,
    /// `(multiplicity, number of W₃ cubes attaining it)`.
    pub histogram: Vec<(usize, usize)>,
    /// Largest number of sets `F(Q_j)` sharing one W₁ cube.
    pub max_union_overlap: usize,
}

/// Overlap of the chains attached to each W₃ cube (the self chain `[Q_j*]`
/// is included).
pub fn overlap_statistic(chains: &ChainSet, refl: &ReflectionMap, w1_len: usize) -> OverlapStatistic {
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    let mut global = vec![0u32; w1_len];
    let mut max_multiplicity = 0;
    for j in 0..chains.partners.len() {
        let mut count: HashMap<usize, usize> = HashMap::new();
        *count.entry(refl.pairs[j].star).or_insert(0) += 1;
        for &k in &chains.partners[j] {
            let mut c = chains.chain(j, k);
            c.sort_unstable();
            c.dedup();
            for id in c {
                *count.entry(id).or_insert(0) += 1;
            }
        }
        let m = count.values().copied().max().unwrap_or(0);
        max_multiplicity = max_multiplicity.max(m);
        *hist.entry(m).or_insert(0) += 1;
        for id in chains.union_for(j, refl) {
            global[id] += 1;
        }
    }
    OverlapStatistic {
        max_multiplicity,
        histogram: hist.into_iter().collect(),
        max_union_overlap: global.into_iter().max().unwrap_or(0) as usize,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::gallery_level;
    use crate::whitney::{select_w3_ids, whitney_decompose, Side};

    fn brute(w1: &WhitneyDecomposition, q: &DyadicCube) -> usize {
        let n = w1.n;
        (0..w1.len())
            .filter(|&i| {
                let l = w1.cubes[i].level;
                l <= q.level && q.level - l <= 2
            })
            .min_by_key(|&i| {
                let c = w1.cubes[i];
                (q.gap2(&c, n), c.level, c.index)
            })
            .unwrap()
    }

    #[test]
    fn matches_exhaustive_scan() {
        for (tag, lvl, m) in [("unit_square", None, 7u8), ("koch_snowflake", Some(3), 8), ("l_shape", None, 7)] {
            let dom = gallery_level(tag, lvl).unwrap();
            let w1 = whitney_decompose(&dom, Side::Interior, m).unwrap();
            let w2 = whitney_decompose(&dom, Side::Complement, m).unwrap();
            let ids = select_w3_ids(&w2, &dom);
            let w3: Vec<DyadicCube> = ids.iter().map(|&i| w2.cubes[i]).collect();
            let r = build_reflection(&w1, &w3).unwrap();
            for p in &r.pairs {
                assert_eq!(p.star, brute(&w1, &p.cube), "{tag}");
                assert!(p.size_ratio >= 1.0 && p.size_ratio <= 4.0);
                assert!(p.dist_ratio <= r.c_refl);
            }
            let again = build_reflection(&w1, &w3).unwrap();
            assert_eq!(
                r.pairs.iter().map(|p| p.star).collect::<Vec<_>>(),
                again.pairs.iter().map(|p| p.star).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn chains_touch_and_are_shortest() {
        let dom = gallery_level("unit_square", None).unwrap();
        let w1 = whitney_decompose(&dom, Side::Interior, 7).unwrap();
        let w2 = whitney_decompose(&dom, Side::Complement, 7).unwrap();
        let ids = select_w3_ids(&w2, &dom);
        let w3: Vec<DyadicCube> = ids.iter().map(|&i| w2.cubes[i]).collect();
        let refl = build_reflection(&w1, &w3).unwrap();
        let partners = w3_partners(&w2, &ids);
        let cs = build_chains(&refl, &w1, &partners).unwrap();
        for (c, &(j, k)) in cs.chains.iter().zip(&cs.pairs) {
            assert!(w3[j].touches(&w3[k], 2));
            assert_eq!(c[0], refl.pairs[j].star);
            assert_eq!(*c.last().unwrap(), refl.pairs[k].star);
            for s in c.windows(2) {
                assert!(w1.cubes[s[0]].touches(&w1.cubes[s[1]], 2));
            }
            assert_eq!(c.len(), w1.path(c[0], *c.last().unwrap()).unwrap().len());
        }
        let ov = overlap_statistic(&cs, &refl, w1.len());
        assert!(ov.max_multiplicity >= 1);
    }

    #[test]
    fn lone_cube_has_unit_multiplicity() {
        let dom = gallery_level("unit_square", None).unwrap();
        let w1 = whitney_decompose(&dom, Side::Interior, 6).unwrap();
        let q = DyadicCube::new(6, [-2, 20, 0]);
        let refl = build_reflection(&w1, &[q]).unwrap();
        let cs = build_chains(&refl, &w1, &[vec![]]).unwrap();
        assert_eq!(cs.max_len, 1);
        let ov = overlap_statistic(&cs, &refl, w1.len());
        assert_eq!(ov.max_multiplicity, 1);
        assert_eq!(ov.histogram, vec![(1, 1)]);
    }
}
