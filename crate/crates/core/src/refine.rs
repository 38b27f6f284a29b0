//! Pigeonholing and refinement subroutines: dyadic pigeonholing, rich-point
//! refinement, the broad-narrow direction split, and high-multiplicity
//! excision.
//!
//! Every pigeonhole records its loss factor in a slack ledger so downstream
//! checks can bound the total polylog loss explicitly instead of hiding it
//! in an "up to constants" convention.

use crate::dyadic::CellSet;
use crate::rat::q_to_f64;
use crate::tubes::ShadedFamily;
use crate::{Error, Result};
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Default, Serialize)]
pub struct SlackLedger {
    pub entries: Vec<SlackEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlackEntry {
    pub op: String,
    pub factor: f64,
}

impl SlackLedger {
    pub fn push(&mut self, op: impl Into<String>, factor: f64) {
        self.entries.push(SlackEntry {
            op: op.into(),
            factor,
        });
    }

    /// Product of all recorded factors.
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.factor).product()
    }

    pub fn merged(&self, other: &SlackLedger) -> SlackLedger {
        let mut entries = self.entries.clone();
        entries.extend(other.entries.clone());
        SlackLedger { entries }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PigeonholeOutcome<T> {
    /// Lower endpoint of the winning dyadic band `[w, 2w)`.
    pub band_low: f64,
    pub items: Vec<T>,
    pub band_count: usize,
    /// Retained weight / total weight.
    pub retained: f64,
    pub ledger: SlackLedger,
}

/// Dyadic pigeonhole: group items by weight band `[2^i, 2^{i+1})` and return
/// the band with the largest total weight. Retained weight is at least
/// `total / band_count >= total / (2 * band_count)`.
pub fn dyadic_pigeonhole<T: Clone>(
    items: &[T],
    weight: impl Fn(&T) -> f64,
) -> Result<PigeonholeOutcome<T>> {
    if items.is_empty() {
        return Err(Error::Domain("pigeonhole of empty list".into()));
    }
    let mut bands: BTreeMap<i32, (f64, Vec<T>)> = BTreeMap::new();
    let mut total = 0.0;
    for it in items {
        let w = weight(it);
        if !(w > 0.0) {
            return Err(Error::Domain(format!("non-positive weight {w}")));
        }
        total += w;
        let band = w.log2().floor() as i32;
        let e = bands.entry(band).or_insert((0.0, Vec::new()));
        e.0 += w;
        e.1.push(it.clone());
    }
    let band_count = bands.len();
    let (&band, _) = bands
        .iter()
        .max_by(|a, b| a.1 .0.partial_cmp(&b.1 .0).expect("finite weights"))
        .expect("nonempty");
    let (mass, items) = bands.remove(&band).expect("present");
    let mut ledger = SlackLedger::default();
    ledger.push("dyadic_pigeonhole", 2.0 * band_count as f64);
    Ok(PigeonholeOutcome {
        band_low: (band as f64).exp2(),
        items,
        band_count,
        retained: mass / total,
        ledger,
    })
}

// ---------------------------------------------------------------------------
// Rich-point refinement
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct RichnessProfile {
    pub mu: u64,
    pub rich_set: CellSet,
    /// Exact multiplicity map over `E_L` (cell index -> #lines shading it).
    pub multiplicity: BTreeMap<u64, u32>,
}

#[derive(Debug, Serialize)]
pub struct RichPointOutcome {
    pub profile: RichnessProfile,
    pub family: ShadedFamily,
    /// Which input lines survived the line-level pigeonhole.
    pub kept_lines: Vec<usize>,
    pub ledger: SlackLedger,
    /// `mu ~ |E_{L,Y'}|^{-1} sum |Y'(l)|` realized ratio (item 4).
    pub mu_balance: f64,
}

/// Pigeonhole the multiplicity over `E_L` into a band `[mu, 2 mu)`, restrict
/// every shading to the rich set, then pigeonhole lines by retained mass.
pub fn rich_point_refinement(f: &ShadedFamily) -> Result<RichPointOutcome> {
    if f.is_empty() || f.shadings.iter().all(|y| y.is_empty()) {
        return Err(Error::Domain("rich_point_refinement of empty shadings".into()));
    }
    let mult = f.multiplicity_map();
    // band on multiplicity weighted by multiplicity mass: integral of #L(x)
    let cells: Vec<(u64, u32)> = mult.iter().map(|(c, m)| (*c, *m)).collect();
    let mut bands: BTreeMap<u32, (u64, Vec<u64>)> = BTreeMap::new();
    for (c, m) in &cells {
        let band = m.ilog2();
        let e = bands.entry(band).or_insert((0, Vec::new()));
        e.0 += *m as u64;
        e.1.push(*c);
    }
    let band_count = bands.len();
    let (&band, _) = bands.iter().max_by_key(|(_, (mass, _))| *mass).expect("nonempty");
    let (_, rich_cells) = bands.remove(&band).expect("present");
    let mu = 1u64 << band;
    let rich_set = CellSet::new(f.n, f.scale(), rich_cells)?;

    let mut ledger = SlackLedger::default();
    ledger.push("rich_point_multiplicity_bands", 2.0 * band_count as f64);

    // restrict shadings to the rich set
    let restricted: Vec<CellSet> = f
        .shadings
        .iter()
        .map(|y| y.intersect(&rich_set))
        .collect::<Result<_>>()?;

    // line-level pigeonhole on retained mass (drop empty lines first)
    let nonempty: Vec<usize> = (0..f.len()).filter(|&i| !restricted[i].is_empty()).collect();
    if nonempty.is_empty() {
        return Err(Error::Internal("rich set misses every shading".into()));
    }
    let picked = dyadic_pigeonhole(&nonempty, |&i| restricted[i].len() as f64)?;
    ledger.push("rich_point_line_bands", 2.0 * picked.band_count as f64);
    let kept_lines = picked.items.clone();

    let family = ShadedFamily::new(
        kept_lines.iter().map(|&i| f.lines[i]).collect(),
        kept_lines.iter().map(|&i| restricted[i].clone()).collect(),
        f.meta.clone(),
    )?;

    // items (2) and (4), asserted
    let union = family.union()?;
    for &c in union.cells() {
        let m = mult[&c] as u64;
        debug_assert!(m >= mu && m < 2 * mu, "multiplicity {m} outside [{mu}, {})", 2 * mu);
        if m < mu || m >= 2 * mu {
            return Err(Error::Internal("rich band violated on E_{L,Y'}".into()));
        }
    }
    let mu_balance = {
        let total = q_to_f64(family.total_shading_measure());
        let union_measure = q_to_f64(union.measure());
        if union_measure > 0.0 {
            total / union_measure / mu as f64
        } else {
            0.0
        }
    };

    Ok(RichPointOutcome {
        profile: RichnessProfile {
            mu,
            rich_set,
            multiplicity: mult,
        },
        family,
        kept_lines,
        ledger,
        mu_balance,
    })
}

// ---------------------------------------------------------------------------
// Broad-narrow split
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct BroadNarrowOutcome {
    /// Splitting scale in direction space (sup norm on b), in [10*delta, 1].
    pub rho: f64,
    /// Indices (into the multiplicity set L(x)) of the narrow refinement.
    pub refined: Vec<usize>,
    pub l1: Vec<usize>,
    pub l2: Vec<usize>,
    /// Cross angles lie in `[rho/c_factor, rho]`.
    pub c_factor: f64,
    pub degenerate: bool,
    pub ledger: SlackLedger,
}

/// Find the direction scale at which the lines through `x` split into two
/// angularly separated subfamilies. Base-2 variant: descend max-count
/// direction boxes; at the first level where the count drops, split the box
/// into quarters along its widest axis and take the two extreme groups.
pub fn broad_narrow(f: &ShadedFamily, x: u64) -> Result<BroadNarrowOutcome> {
    let delta = f.scale().delta();
    let through: Vec<usize> = (0..f.len()).filter(|&i| f.shadings[i].contains(x)).collect();
    if through.len() < 2 {
        return Ok(BroadNarrowOutcome {
            rho: 10.0 * delta,
            refined: through.clone(),
            l1: through,
            l2: vec![],
            c_factor: 4.0,
            degenerate: true,
            ledger: SlackLedger::default(),
        });
    }
    let nh = (f.n - 1) as usize;
    let bs: Vec<[i64; 2]> = through.iter().map(|&i| f.lines[i].bu).collect();

    // sup-diameter of the direction set in delta-units
    let mut diameter = 0i64;
    for i in 0..bs.len() {
        for j in i + 1..bs.len() {
            let d = (0..nh).map(|t| (bs[i][t] - bs[j][t]).abs()).max().unwrap_or(0);
            diameter = diameter.max(d);
        }
    }
    if diameter <= 2 {
        return Ok(BroadNarrowOutcome {
            rho: 10.0 * delta,
            refined: through.clone(),
            l1: through,
            l2: vec![],
            c_factor: 4.0,
            degenerate: true,
            ledger: SlackLedger::default(),
        });
    }

    // descend max-count boxes of halving width
    let max_box_count = |w: i64| -> (usize, [i64; 2]) {
        let mut best = (0usize, [0i64; 2]);
        for anchor in &bs {
            // candidate box corner at each point
            let count = bs
                .iter()
                .filter(|b| (0..nh).all(|t| b[t] >= anchor[t] && b[t] - anchor[t] <= w))
                .count();
            if count > best.0 {
                best = (count, *anchor);
            }
        }
        best
    };

    let levels = (diameter as f64 / 2.0).log2().ceil() as usize + 1;
    let drop = 1.0 - 1.0 / (2.0 * (levels as f64 + 1.0));
    let mut w = diameter;
    let mut cur = bs.len();
    let mut corner = [0i64; 2];
    let mut split: Option<(i64, [i64; 2], usize)> = None;
    for _ in 0..=levels {
        let (cnt, c) = max_box_count(w);
        if (cnt as f64) < drop * cur as f64 {
            split = Some((w * 2, corner, cur));
            break;
        }
        cur = cnt;
        corner = c;
        if w <= 2 {
            break;
        }
        w /= 2;
    }

    let (w, corner, refined_count) = match split {
        Some(s) => s,
        None => {
            // counts never dropped: the mass sits in one near-delta box
            let (_, c) = max_box_count(2);
            let refined: Vec<usize> = through
                .iter()
                .copied()
                .filter(|&i| (0..nh).all(|t| f.lines[i].bu[t] >= c[t] && f.lines[i].bu[t] - c[t] <= 2))
                .collect();
            return Ok(BroadNarrowOutcome {
                rho: 10.0 * delta,
                refined: refined.clone(),
                l1: refined,
                l2: vec![],
                c_factor: 4.0,
                degenerate: true,
                ledger: SlackLedger::default(),
            });
        }
    };

    // L'(x): lines in the (parent) box of width w at `corner`
    let refined: Vec<usize> = through
        .iter()
        .copied()
        .filter(|&i| (0..nh).all(|t| f.lines[i].bu[t] >= corner[t] && f.lines[i].bu[t] - corner[t] <= w))
        .collect();
    debug_assert!(refined.len() >= refined_count.min(2));

    // split along the widest axis of the refined set into quarters
    let mut spread_axis = 0usize;
    let mut spread = -1i64;
    let mut lo = [i64::MAX; 2];
    let mut hi = [i64::MIN; 2];
    for &i in &refined {
        for t in 0..nh {
            lo[t] = lo[t].min(f.lines[i].bu[t]);
            hi[t] = hi[t].max(f.lines[i].bu[t]);
        }
    }
    for t in 0..nh {
        if hi[t] - lo[t] > spread {
            spread = hi[t] - lo[t];
            spread_axis = t;
        }
    }
    let q = |i: usize| -> u8 {
        let v = f.lines[i].bu[spread_axis] - lo[spread_axis];
        // quarter index 0..3 along the spread axis
        ((4 * v.max(0)) / (spread.max(1) + 1)).min(3) as u8
    };
    let q1: Vec<usize> = refined.iter().copied().filter(|&i| q(i) == 0).collect();
    let q4: Vec<usize> = refined.iter().copied().filter(|&i| q(i) == 3).collect();
    let (l1, l2) = if q1.len() >= q4.len() {
        let l2: Vec<usize> = refined.iter().copied().filter(|&i| q(i) >= 2).collect();
        (q1, l2)
    } else {
        let l2: Vec<usize> = refined.iter().copied().filter(|&i| q(i) <= 1).collect();
        (q4, l2)
    };
    let mut ledger = SlackLedger::default();
    ledger.push("broad_narrow_descent", 4.0 * (levels as f64 + 1.0));

    Ok(BroadNarrowOutcome {
        rho: (w as f64 * delta).clamp(10.0 * delta, 1.0),
        refined,
        l1,
        l2,
        c_factor: 4.0,
        degenerate: false,
        ledger,
    })
}

// ---------------------------------------------------------------------------
// High-multiplicity excision
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ExcisionOutcome {
    pub low_multiplicity_set: CellSet,
    pub removed_fraction: f64,
    pub mu: f64,
    pub max_multiplicity: u32,
}

/// Keep the cells of `E_L` with `#L(x) <= mu`; return the removed measure
/// fraction. The threshold is applied without a polylog allowance, so the
/// removed-fraction comparison downstream is the strict form.
pub fn excise_high_multiplicity(f: &ShadedFamily, mu: f64) -> Result<ExcisionOutcome> {
    if f.meta.lambda.is_none() || f.meta.eps1.is_none() {
        return Err(Error::Precondition(
            "excision requires density and two-ends certificates in family metadata".into(),
        ));
    }
    let mult = f.multiplicity_map();
    if mult.is_empty() {
        return Err(Error::Domain("excision of empty union".into()));
    }
    let total = mult.len() as f64;
    let kept: Vec<u64> = mult
        .iter()
        .filter(|(_, &m)| (m as f64) <= mu)
        .map(|(&c, _)| c)
        .collect();
    let removed_fraction = 1.0 - kept.len() as f64 / total;
    Ok(ExcisionOutcome {
        low_multiplicity_set: CellSet::new(f.n, f.scale(), kept)?,
        removed_fraction,
        mu,
        max_multiplicity: mult.values().copied().max().unwrap_or(0),
    })
}
