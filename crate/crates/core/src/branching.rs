//! Scale analysis: uniform sets, branching functions, Lipschitz partitioning,
//! and the multi-scale decomposition.
//!
//! The scale ladder is dyadic (`rho_j = 2^-j`), so each cell has at most `2^n`
//! children per step and "uniform with error 2 per step" is exactly
//! assertable: at every ladder level the child counts of all occupied cells
//! lie in one dyadic band `[w, 2w)`.
//!
//! The Lipschitz partition runs in exact rational arithmetic (every f64 input
//! is a dyadic rational), so its four conclusions are asserted exactly, not
//! within a float tolerance.

use crate::dyadic::{covering_count, CellSet, DyadicScale};
use crate::rat::{bq_from_f64, bq_log2, bq_to_f64, BQ};
use crate::setclass::cmin_with_exponent;
use crate::{param_err, Error, Result};
use num_traits::{One, Zero};
use serde::Serialize;
use std::collections::BTreeMap;

/// Piecewise-linear profile of covering numbers across scales.
///
/// Samples are exact rationals; `ys` are normalized so that a set in
/// dimension n has slopes in `[0, n]`.
#[derive(Debug, Clone)]
pub struct BranchingFunction {
    pub xs: Vec<BQ>,
    pub ys: Vec<BQ>,
}

impl BranchingFunction {
    pub fn new(xs: Vec<BQ>, ys: Vec<BQ>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return param_err("branching function needs >= 2 samples".to_string());
        }
        if !xs[0].is_zero() || !xs[xs.len() - 1].is_one() {
            return param_err("branching function domain must be [0,1]".to_string());
        }
        for i in 1..xs.len() {
            if xs[i] <= xs[i - 1] {
                return param_err("sample xs must be strictly increasing".to_string());
            }
            if ys[i] < ys[i - 1] {
                return param_err("branching function must be non-decreasing".to_string());
            }
        }
        if !ys[0].is_zero() {
            return param_err("branching function must vanish at 0".to_string());
        }
        Ok(BranchingFunction { xs, ys })
    }

    pub fn from_f64(samples: &[(f64, f64)]) -> Result<Self> {
        let xs = samples.iter().map(|(x, _)| bq_from_f64(*x)).collect();
        let ys = samples.iter().map(|(_, y)| bq_from_f64(*y)).collect();
        BranchingFunction::new(xs, ys)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Max slope between consecutive samples.
    pub fn max_slope(&self) -> BQ {
        let mut m = BQ::zero();
        for i in 1..self.xs.len() {
            let s = (&self.ys[i] - &self.ys[i - 1]) / (&self.xs[i] - &self.xs[i - 1]);
            if s > m {
                m = s;
            }
        }
        m
    }

    /// Rescale values by `1/n` so the profile is 1-Lipschitz.
    pub fn normalized(&self, n: u8) -> BranchingFunction {
        let d = bq_from_f64(n as f64);
        BranchingFunction {
            xs: self.xs.clone(),
            ys: self.ys.iter().map(|y| y / &d).collect(),
        }
    }

    /// Sup distance on the common sample grid (requires equal xs).
    pub fn sup_distance(&self, other: &BranchingFunction) -> Option<BQ> {
        if self.xs != other.xs {
            return None;
        }
        let mut m = BQ::zero();
        for (a, b) in self.ys.iter().zip(&other.ys) {
            let d = if a >= b { a - b } else { b - a };
            if d > m {
                m = d;
            }
        }
        Some(m)
    }
}

// ---------------------------------------------------------------------------
// Uniformization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct UniformizeOutcome {
    pub set: CellSet,
    /// Realized `#E' / #E`.
    pub kept_ratio: f64,
    /// Winning dyadic band (lower endpoint of child count) per ladder level,
    /// finest first.
    pub bands: Vec<u64>,
}

/// Per-level child-count spread of a set: `(level, min, max)` over occupied
/// cells; "uniform with error 2 per step" means `max < 2*min` at every level.
pub fn uniform_step_profile(e: &CellSet) -> Vec<(u32, u64, u64)> {
    let k = e.k;
    let coords: Vec<[u32; 3]> = e.coords().collect();
    let mut out = Vec::new();
    for j in 0..k {
        let mut children: BTreeMap<u64, std::collections::BTreeSet<u64>> = BTreeMap::new();
        for c in &coords {
            let p = key_at(e.n, c, k, j);
            let ch = key_at(e.n, c, k, j + 1);
            children.entry(p).or_default().insert(ch);
        }
        let min = children.values().map(|s| s.len() as u64).min().unwrap_or(0);
        let max = children.values().map(|s| s.len() as u64).max().unwrap_or(0);
        out.push((j, min, max));
    }
    out
}

pub fn is_step_uniform(e: &CellSet) -> bool {
    uniform_step_profile(e).iter().all(|(_, min, max)| *max < 2 * min.max(&1))
}

fn key_at(n: u8, c: &[u32; 3], k: u32, level: u32) -> u64 {
    let shift = k - level;
    crate::dyadic::encode(n, level.max(1), [c[0] >> shift, c[1] >> shift, c[2] >> shift])
}

/// Extract a subset that is uniform with error 2 at every ladder step, by
/// bottom-up dyadic pigeonholing on child counts. The winning band at each
/// level maximizes retained delta-cell mass; whole subtrees are removed, so
/// finer levels stay exactly in-band once processed.
pub fn uniformize(e: &CellSet) -> Result<UniformizeOutcome> {
    if e.is_empty() {
        return Err(Error::Domain("uniformize of empty set".into()));
    }
    let k = e.k;
    let total = e.len();
    let mut coords: Vec<[u32; 3]> = e.coords().collect();
    let mut bands = Vec::new();

    for j in (0..k).rev() {
        // child count and delta-mass per level-j parent
        let mut children: BTreeMap<u64, std::collections::BTreeSet<u64>> = BTreeMap::new();
        let mut mass: BTreeMap<u64, u64> = BTreeMap::new();
        for c in &coords {
            let p = key_at(e.n, c, k, j);
            children.entry(p).or_default().insert(key_at(e.n, c, k, j + 1));
            *mass.entry(p).or_default() += 1;
        }
        // dyadic bands on child count (counts <= 2^n, so <= n+1 bands)
        let mut band_mass: BTreeMap<u32, u64> = BTreeMap::new();
        for (p, ch) in &children {
            let band = (ch.len() as u64).ilog2();
            *band_mass.entry(band).or_default() += mass[p];
        }
        let (&best_band, _) = band_mass
            .iter()
            .max_by_key(|(band, m)| (**m, u32::MAX - **band))
            .expect("nonempty");
        bands.push(1u64 << best_band);
        coords.retain(|c| {
            let p = key_at(e.n, c, k, j);
            (children[&p].len() as u64).ilog2() == best_band
        });
    }
    bands.reverse();
    let set = CellSet::from_coords(e.n, e.scale(), coords)?;
    debug_assert!(is_step_uniform(&set));
    Ok(UniformizeOutcome {
        kept_ratio: set.len() as f64 / total as f64,
        set,
        bands,
    })
}

// ---------------------------------------------------------------------------
// Branching function of a set
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BranchingOutcome {
    pub beta: BranchingFunction,
    /// Raw covering counts along the ladder, coarsest (rho=1) first.
    pub counts: Vec<u64>,
    pub uniform_warning: bool,
}

/// `beta(j/k) = log2(|E|_{2^-j}) / k` on the dyadic ladder. Warns (does not
/// fail) when `E` is not step-uniform.
pub fn branching_function(e: &CellSet) -> Result<BranchingOutcome> {
    if e.is_empty() {
        return Err(Error::Domain("branching function of empty set".into()));
    }
    let k = e.k;
    let kq = bq_from_f64(k as f64);
    let mut xs = Vec::with_capacity(k as usize + 1);
    let mut ys = Vec::with_capacity(k as usize + 1);
    let mut counts = Vec::with_capacity(k as usize + 1);
    for j in 0..=k {
        let count = if j == 0 {
            1
        } else {
            covering_count(e, DyadicScale::new(j)?)?
        };
        counts.push(count);
        xs.push(bq_from_f64(j as f64) / &kq);
        ys.push(bq_log2(count) / &kq);
    }
    Ok(BranchingOutcome {
        beta: BranchingFunction::new(xs, ys)?,
        counts,
        uniform_warning: !is_step_uniform(e),
    })
}

// ---------------------------------------------------------------------------
// Family-level clustering
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct ClusterOutcome {
    pub member_indices: Vec<usize>,
    pub representative: usize,
    pub rep_beta: BranchingFunction,
    pub epsilon: f64,
    /// The lemma's worst-case retention bound (reported, not asserted).
    pub lemma_bound: f64,
}

/// Greedy epsilon-ball clustering of branching functions with
/// `epsilon = 1/|log delta|`; returns the largest cluster.
pub fn cluster_branching(family: &[CellSet]) -> Result<ClusterOutcome> {
    if family.is_empty() {
        return Err(Error::Domain("cluster_branching of empty family".into()));
    }
    let k = family[0].k;
    let n = family[0].n;
    for e in family {
        if e.k != k || e.n != n {
            return Err(Error::ScaleMismatch("family members at mixed scales".into()));
        }
    }
    let betas: Vec<BranchingFunction> = family
        .iter()
        .map(|e| branching_function(e).map(|o| o.beta))
        .collect::<Result<_>>()?;
    let eps = bq_from_f64(1.0 / k as f64);
    let mut best: (usize, Vec<usize>) = (0, vec![]);
    for (i, bi) in betas.iter().enumerate() {
        let members: Vec<usize> = betas
            .iter()
            .enumerate()
            .filter(|(_, bj)| bi.sup_distance(bj).map(|d| d <= eps).unwrap_or(false))
            .map(|(j, _)| j)
            .collect();
        if members.len() > best.1.len() {
            best = (i, members);
        }
    }
    let lemma_bound =
        family.len() as f64 / ((n as f64) * (k as f64).log2().max(1.0) * k as f64).powi(k as i32);
    Ok(ClusterOutcome {
        representative: best.0,
        rep_beta: betas[best.0].clone(),
        member_indices: best.1,
        epsilon: 1.0 / k as f64,
        lemma_bound,
    })
}

// ---------------------------------------------------------------------------
// Lipschitz partition
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct PlanBlock {
    #[serde(rename = "A_lo")]
    pub a_lo: f64,
    #[serde(rename = "A_hi")]
    pub a_hi: f64,
    pub slope: f64,
}

/// Partition of `[0,1]` into blocks with strictly increasing slopes.
#[derive(Debug, Clone, Serialize)]
pub struct MultiScalePlan {
    pub eta: f64,
    pub blocks: Vec<PlanBlock>,
    #[serde(skip)]
    pub exact: Vec<(BQ, BQ, BQ)>,
}

impl MultiScalePlan {
    pub fn h(&self) -> usize {
        self.blocks.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Greedy sweep: at each block start take the minimal forward chord slope
/// over the sample points, then extend the block to the last sample whose
/// chord stays within `slope + eta`. All four conclusions of the partition
/// lemma then hold in exact arithmetic:
///
/// 1. block length >= eta0/eta with eta0 = eta^(2/eta);
/// 2. f(x) >= f(A_h) + s_h (x - A_h) - eta (A_{h+1} - A_h) on the block;
/// 3. f(A_{h+1}) <= f(A_h) + (s_h + 3 eta)(A_{h+1} - A_h);
/// 4. s_H >= f(1) - f(0) - eta;
///
/// plus strict slope increase (each step grows by more than eta).
pub fn lipschitz_partition(beta: &BranchingFunction, eta: f64) -> Result<MultiScalePlan> {
    if !(0.0..0.5).contains(&eta) || eta <= 0.0 {
        return param_err(format!("eta={eta} outside (0, 1/2)"));
    }
    let one = BQ::one();
    if beta.max_slope() > one {
        return param_err("lipschitz_partition input must be 1-Lipschitz".to_string());
    }
    let eta_q = bq_from_f64(eta);
    let xs = &beta.xs;
    let ys = &beta.ys;
    let last = xs.len() - 1;

    let chord = |a: usize, b: usize| -> BQ { (&ys[b] - &ys[a]) / (&xs[b] - &xs[a]) };

    let mut exact: Vec<(BQ, BQ, BQ)> = Vec::new();
    let mut a = 0usize;
    while a < last {
        let mut s = chord(a, a + 1);
        for idx in a + 2..=last {
            let c = chord(a, idx);
            if c < s {
                s = c;
            }
        }
        let threshold = &s + &eta_q;
        let mut b = a + 1;
        for idx in (a + 1..=last).rev() {
            if chord(a, idx) <= threshold {
                b = idx;
                break;
            }
        }
        exact.push((xs[a].clone(), xs[b].clone(), s));
        a = b;
    }

    let plan = MultiScalePlan {
        eta,
        blocks: exact
            .iter()
            .map(|(lo, hi, s)| PlanBlock {
                a_lo: bq_to_f64(lo),
                a_hi: bq_to_f64(hi),
                slope: bq_to_f64(s),
            })
            .collect(),
        exact,
    };
    // The construction is supposed to guarantee the conclusions; a violation
    // is an internal bug, not a data error.
    if let Err(e) = check_partition_conclusions(beta, &plan) {
        return Err(Error::Internal(format!("partition construction violated its own lemma: {e}")));
    }
    Ok(plan)
}

/// Exact check of the four partition conclusions plus slope monotonicity.
/// Independent of the construction; used by tests and the acceptance suite.
pub fn check_partition_conclusions(beta: &BranchingFunction, plan: &MultiScalePlan) -> Result<()> {
    let eta = bq_from_f64(plan.eta);
    let eta0_over_eta = {
        // eta0 = eta^(2/eta); at eta <= 0.3 this is far below any sample
        // spacing, so an f64 upper bound is ample.
        let e0 = plan.eta.powf(2.0 / plan.eta);
        bq_from_f64((e0 / plan.eta) * (1.0 + 1e-9))
    };
    let xs = &beta.xs;
    let ys = &beta.ys;
    let val = |x: &BQ| -> BQ {
        let i = xs.iter().position(|xx| xx == x).expect("block endpoint on sample grid");
        ys[i].clone()
    };
    if plan.exact.is_empty() {
        return Err(Error::Internal("empty partition".into()));
    }
    let three = bq_from_f64(3.0);
    let mut prev_slope: Option<BQ> = None;
    for (h, (lo, hi, s)) in plan.exact.iter().enumerate() {
        let len = hi - lo;
        if len < eta0_over_eta {
            return Err(Error::Internal(format!("block {h} shorter than eta0/eta")));
        }
        if s < &BQ::zero() || s > &BQ::one() {
            return Err(Error::Internal(format!("slope of block {h} outside [0,1]")));
        }
        if let Some(p) = &prev_slope {
            if s <= p {
                return Err(Error::Internal(format!("slopes not strictly increasing at block {h}")));
            }
        }
        prev_slope = Some(s.clone());
        let f_lo = val(lo);
        let f_hi = val(hi);
        // (3) upper endpoint bound
        if &f_hi - &f_lo > (s + &three * &eta) * &len {
            return Err(Error::Internal(format!("upper endpoint bound fails at block {h}")));
        }
        // (2) lower chord bound at every sample point inside the block
        for (x, y) in xs.iter().zip(ys.iter()) {
            if x >= lo && x <= hi {
                let lower = &f_lo + s * (x - lo) - &eta * &len;
                if y < &lower {
                    return Err(Error::Internal(format!("lower chord bound fails at block {h}")));
                }
            }
        }
    }
    // (4) final slope
    let (_, _, s_last) = plan.exact.last().unwrap();
    let range = &ys[ys.len() - 1] - &ys[0];
    if s_last < &(range - &eta) {
        return Err(Error::Internal("final slope below f(1) - f(0) - eta".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Multi-scale decomposition
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct BlockCertificate {
    pub member: usize,
    pub block: usize,
    /// Item (2): measured log-ratio and its bound.
    pub log_ratio: f64,
    pub log_ratio_bound: f64,
    /// Item (3): worst rescaled Frostman constant over coarse cells, and bound.
    pub worst_cmin: f64,
    pub cmin_bound: f64,
    pub pass: bool,
    pub violated_item: Option<u8>,
}

#[derive(Debug, Serialize)]
pub struct MultiScaleOutcome {
    pub plan: MultiScalePlan,
    /// Ladder levels of the block boundaries.
    pub levels: Vec<u32>,
    pub certificates: Vec<BlockCertificate>,
    /// Item (4) per member: `s_H >= log_{1/delta} #E - eta`.
    pub final_slope_ok: Vec<bool>,
    /// Whether `|log delta| * eta0(eta) > 2` held (reported, not enforced).
    pub precondition_met: bool,
    pub all_pass: bool,
}

impl MultiScaleOutcome {
    pub fn ensure_all_pass(&self) -> Result<()> {
        if let Some(c) = self.certificates.iter().find(|c| !c.pass) {
            return Err(Error::Certificate {
                member: c.member,
                block: c.block,
                item: c.violated_item.unwrap_or(0),
                detail: format!(
                    "log_ratio {:.4} (bound {:.4}), worst C {:.4} (bound {:.4})",
                    c.log_ratio, c.log_ratio_bound, c.worst_cmin, c.cmin_bound
                ),
            });
        }
        if let Some(m) = self.final_slope_ok.iter().position(|ok| !ok) {
            return Err(Error::Certificate {
                member: m,
                block: self.plan.h() - 1,
                item: 4,
                detail: "final slope below log_{1/delta} #E - eta".into(),
            });
        }
        Ok(())
    }
}

/// Decompose a family sharing a uniform branching function and certify the
/// four items of the decomposition on every member and block.
pub fn multiscale_decompose(family: &[CellSet], eta: f64) -> Result<MultiScaleOutcome> {
    if family.is_empty() {
        return Err(Error::Domain("multiscale_decompose of empty family".into()));
    }
    let n = family[0].n;
    let k = family[0].k;
    let cluster = cluster_branching(family)?;
    if cluster.member_indices.len() != family.len() {
        return Err(Error::Precondition(format!(
            "family does not share a branching function within 1/|log delta|: cluster holds {}/{}",
            cluster.member_indices.len(),
            family.len()
        )));
    }
    let normalized = cluster.rep_beta.normalized(n);
    let plan = lipschitz_partition(&normalized, eta)?;
    let precondition_met = (k as f64) * eta.powf(2.0 / eta) > 2.0;

    // block boundaries are on the sample grid j/k by construction
    let levels: Vec<u32> = {
        let mut v: Vec<u32> = plan
            .exact
            .iter()
            .map(|(lo, _, _)| (bq_to_f64(lo) * k as f64).round() as u32)
            .collect();
        v.push(k);
        v
    };

    let mut certificates = Vec::new();
    let mut final_slope_ok = Vec::new();
    for (mi, e) in family.iter().enumerate() {
        let counts: Vec<u64> = (0..=k)
            .map(|j| {
                if j == 0 {
                    Ok(1)
                } else {
                    covering_count(e, DyadicScale::new(j)?)
                }
            })
            .collect::<Result<_>>()?;
        for (h, (lo, hi, s)) in plan.exact.iter().enumerate() {
            let (j_lo, j_hi) = (levels[h], levels[h + 1]);
            let len = bq_to_f64(&(hi - lo));
            let slope = bq_to_f64(s) * n as f64;
            // item (2)
            let log_ratio = ((counts[j_hi as usize] as f64).log2()
                - (counts[j_lo as usize] as f64).log2())
                / k as f64;
            let log_ratio_bound = (slope + 4.0 * eta) * len;
            // item (3): every block of E inside a coarse cell, rescaled
            let cmin_bound = (4.0f64 * eta * len * k as f64).exp2() * 4f64.powi(n as i32);
            let mut worst_cmin: f64 = 0.0;
            let mut child_total = 0u64;
            for block in blocks_within_coarse_cells(e, j_lo, j_hi)? {
                child_total += block.len();
                let cmin = cmin_with_exponent(&block, slope);
                worst_cmin = worst_cmin.max(cmin);
            }
            // consistency: item (3) bookkeeping reproduces item (2) counts
            debug_assert_eq!(child_total, counts[j_hi as usize]);
            let item2_ok = log_ratio <= log_ratio_bound + 1e-9;
            let item3_ok = worst_cmin <= cmin_bound * (1.0 + 1e-9);
            certificates.push(BlockCertificate {
                member: mi,
                block: h,
                log_ratio,
                log_ratio_bound,
                worst_cmin,
                cmin_bound,
                pass: item2_ok && item3_ok,
                violated_item: if !item2_ok {
                    Some(2)
                } else if !item3_ok {
                    Some(3)
                } else {
                    None
                },
            });
        }
        // item (4)
        let s_h = bq_to_f64(&plan.exact.last().unwrap().2) * n as f64;
        let target = (e.len() as f64).log2() / k as f64 - eta * n as f64;
        final_slope_ok.push(s_h >= target - 1e-9);
    }

    let all_pass = certificates.iter().all(|c| c.pass) && final_slope_ok.iter().all(|b| *b);
    Ok(MultiScaleOutcome {
        plan,
        levels,
        certificates,
        final_slope_ok,
        precondition_met,
        all_pass,
    })
}

/// The coverings of `E` inside each occupied level-`j_lo` cell, re-expressed
/// at level `j_hi` and dilated to `[0,1]^n` (a `CellSet` at scale
/// `j_hi - j_lo`).
fn blocks_within_coarse_cells(e: &CellSet, j_lo: u32, j_hi: u32) -> Result<Vec<CellSet>> {
    if j_hi <= j_lo {
        return param_err("empty block".to_string());
    }
    let k = e.k;
    let gap = j_hi - j_lo;
    let mut groups: BTreeMap<u64, Vec<[u32; 3]>> = BTreeMap::new();
    for c in e.coords() {
        let parent = key_at(e.n, &c, k, j_lo);
        let child = [
            (c[0] >> (k - j_hi)) & ((1 << gap) - 1),
            (c[1] >> (k - j_hi)) & ((1 << gap) - 1),
            (c[2] >> (k - j_hi)) & ((1 << gap) - 1),
        ];
        groups.entry(parent).or_default().push(child);
    }
    groups
        .into_values()
        .map(|coords| CellSet::from_coords(e.n, DyadicScale::new(gap)?, coords))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;
    use rand::Rng;

    fn scale(k: u32) -> DyadicScale {
        DyadicScale::new(k).unwrap()
    }

    #[test]
    fn uniformize_keeps_full_grid() {
        let e = CellSet::full(2, scale(4));
        let out = uniformize(&e).unwrap();
        assert_eq!(out.set, e);
        assert_eq!(out.kept_ratio, 1.0);
    }

    #[test]
    fn uniformize_majority_band_wins() {
        // full left half union a single cell in the right half
        let k = 5;
        let mut coords: Vec<[u32; 3]> = Vec::new();
        for i in 0..16u32 {
            for j in 0..32u32 {
                coords.push([i, j, 0]);
            }
        }
        coords.push([24, 7, 0]);
        let e = CellSet::from_coords(2, scale(k), coords.clone()).unwrap();
        let out = uniformize(&e).unwrap();
        coords.pop();
        let left = CellSet::from_coords(2, scale(k), coords).unwrap();
        assert_eq!(out.set, left);
    }

    #[test]
    fn uniformize_random_set_is_step_uniform() {
        let mut r = rng(17);
        let cells: Vec<u64> = (0..4096).filter(|_| r.gen::<f64>() < 0.5).collect();
        let e = CellSet::new(2, scale(6), cells).unwrap();
        let out = uniformize(&e).unwrap();
        assert!(is_step_uniform(&out.set));
        assert!(out.kept_ratio > 0.05, "kept {}", out.kept_ratio);
    }

    #[test]
    fn branching_of_full_grid_is_linear() {
        let e = CellSet::full(2, scale(5));
        let out = branching_function(&e).unwrap();
        assert!(!out.uniform_warning);
        // beta(x) = 2x at every sample
        for (x, y) in out.beta.xs.iter().zip(&out.beta.ys) {
            assert_eq!(y, &(x * bq_from_f64(2.0)));
        }
    }

    #[test]
    fn branching_of_singleton_is_zero() {
        let e = CellSet::from_coords(2, scale(5), vec![[9, 22, 0]]).unwrap();
        let out = branching_function(&e).unwrap();
        assert!(out.beta.ys.iter().all(|y| y.is_zero()));
    }

    #[test]
    fn branching_of_line_neighborhood_is_near_diagonal() {
        // N_delta of a grid-aligned vertical line at delta=2^-6 (width 2)
        let k = 6;
        let line =
            crate::tubes::DiscreteLine::from_real(2, scale(k), [0.5, 0.0], [0.0, 0.0]).unwrap();
        let e = crate::tubes::rasterize_tube(&line).unwrap();
        let out = branching_function(&e).unwrap();
        for (j, y) in out.beta.ys.iter().enumerate() {
            let x = j as f64 / k as f64;
            assert!(
                (bq_to_f64(y) - x).abs() <= 1.0 / 6.0 + 1e-9,
                "beta({x}) = {} too far from x",
                bq_to_f64(y)
            );
        }
    }

    #[test]
    fn cluster_of_identical_sets_keeps_everything() {
        let e = CellSet::full(2, scale(4));
        let family = vec![e.clone(), e.clone(), e];
        let out = cluster_branching(&family).unwrap();
        assert_eq!(out.member_indices.len(), 3);
    }

    #[test]
    fn cluster_separates_grid_from_singleton() {
        let full = CellSet::full(2, scale(4));
        let single = CellSet::from_coords(2, scale(4), vec![[3, 3, 0]]).unwrap();
        let mut family = vec![full; 8];
        family.push(single);
        let out = cluster_branching(&family).unwrap();
        assert_eq!(out.member_indices.len(), 8);
        assert!(out.member_indices.iter().all(|&i| i < 8));
    }

    #[test]
    fn partition_of_linear_function() {
        let beta = BranchingFunction::from_f64(&[(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)]).unwrap();
        let plan = lipschitz_partition(&beta, 0.1).unwrap();
        assert_eq!(plan.h(), 1);
        assert_eq!(plan.blocks[0].slope, 1.0);
        check_partition_conclusions(&beta, &plan).unwrap();
    }

    #[test]
    fn partition_of_flat_function() {
        let beta = BranchingFunction::from_f64(&[(0.0, 0.0), (1.0, 0.0)]).unwrap();
        let plan = lipschitz_partition(&beta, 0.1).unwrap();
        assert_eq!(plan.h(), 1);
        assert_eq!(plan.blocks[0].slope, 0.0);
    }

    #[test]
    fn partition_two_slopes() {
        // slope 1/2 then 1: s_1 < s_2 with a breakpoint near 1/2
        let beta =
            BranchingFunction::from_f64(&[(0.0, 0.0), (0.5, 0.25), (1.0, 0.75)]).unwrap();
        let plan = lipschitz_partition(&beta, 0.05).unwrap();
        assert_eq!(plan.h(), 2);
        assert!(plan.blocks[0].slope < plan.blocks[1].slope);
        check_partition_conclusions(&beta, &plan).unwrap();
    }

    fn random_lipschitz(seed: u64, samples: usize) -> BranchingFunction {
        let mut r = rng(seed);
        let mut xs = vec![0.0];
        let mut ys = vec![0.0];
        for i in 1..=samples {
            xs.push(i as f64 / samples as f64);
            let dx = 1.0 / samples as f64;
            let slope: f64 = r.gen_range(0.0..=1.0);
            ys.push(ys[ys.len() - 1] + slope * dx);
        }
        BranchingFunction::from_f64(&xs.iter().copied().zip(ys).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn partition_conclusions_hold_for_random_functions() {
        for seed in 0..40 {
            let beta = random_lipschitz(seed, 16);
            for eta in [0.1, 0.05] {
                let plan = lipschitz_partition(&beta, eta).unwrap();
                check_partition_conclusions(&beta, &plan).unwrap();
            }
        }
    }

    /// Random tree with a fixed child-count profile: exactly `c_j` children
    /// per occupied level-j cell, so every member shares one branching
    /// function.
    pub(crate) fn profile_tree(n: u8, k: u32, profile: &[u32], seed: u64) -> CellSet {
        assert_eq!(profile.len(), k as usize);
        let mut r = rng(seed);
        let mut nodes: Vec<[u32; 3]> = vec![[0, 0, 0]];
        for (j, &c) in profile.iter().enumerate() {
            let _ = j;
            let mut next = Vec::new();
            for node in &nodes {
                let mut options: Vec<[u32; 3]> = Vec::new();
                let reps = |d: u8| if d < n { 2 } else { 1 };
                for i0 in 0..reps(0) {
                    for i1 in 0..reps(1) {
                        for i2 in 0..reps(2) {
                            options.push([
                                node[0] * 2 + i0,
                                node[1] * 2 + i1,
                                node[2] * 2 + i2,
                            ]);
                        }
                    }
                }
                for _ in 0..c {
                    let pick = r.gen_range(0..options.len());
                    next.push(options.swap_remove(pick));
                }
            }
            nodes = next;
        }
        CellSet::from_coords(n, DyadicScale::new(k).unwrap(), nodes).unwrap()
    }

    #[test]
    fn multiscale_full_grid_single_block() {
        let family = vec![CellSet::full(2, scale(5))];
        let out = multiscale_decompose(&family, 0.1).unwrap();
        assert_eq!(out.plan.h(), 1);
        assert!((out.plan.blocks[0].slope * 2.0 - 2.0).abs() <= 0.1 + 1e-9);
        out.ensure_all_pass().unwrap();
    }

    #[test]
    fn multiscale_line_neighborhood_final_slope_is_one() {
        let k = 6;
        let mut coords = Vec::new();
        for j in 0..64u32 {
            coords.push([31, j, 0]);
        }
        let family = vec![CellSet::from_coords(2, scale(k), coords).unwrap()];
        let out = multiscale_decompose(&family, 0.1).unwrap();
        out.ensure_all_pass().unwrap();
        let s_last = out.plan.blocks.last().unwrap().slope * 2.0;
        assert!((s_last - 1.0).abs() <= 0.2, "s_H = {s_last}");
    }

    #[test]
    fn multiscale_profile_trees_pass_all_items() {
        let k = 6;
        for seed in 0..5u64 {
            let mut r = rng(1000 + seed);
            let profile: Vec<u32> = (0..k).map(|_| r.gen_range(1..=4)).collect();
            let family: Vec<CellSet> =
                (0..4).map(|m| profile_tree(2, k, &profile, seed * 31 + m)).collect();
            let out = multiscale_decompose(&family, 0.1).unwrap();
            out.ensure_all_pass().unwrap();
        }
    }
}
