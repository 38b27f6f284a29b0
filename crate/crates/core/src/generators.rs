//! Seeded family generators. Every generator asserts the certificates its
//! name promises (density, two-ends, separation) through the independent
//! validators before returning; nothing self-certifies.

use crate::dyadic::{CellSet, DyadicScale};
use crate::tubes::{
    is_directionally_separated, rasterize_tube, row_profile, DiscreteLine, FamilyMeta, ShadedFamily,
};
use crate::seed::rng;
use crate::{param_err, Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

fn scale(k: u32) -> Result<DyadicScale> {
    DyadicScale::new(k)
}

/// Rows selected with one pick per stratum so that any short window holds a
/// near-proportional share of the picks. The generated shadings are two-ends
/// by construction; validators confirm.
fn stratified_rows(occupied: &[u32], want: usize, r: &mut ChaCha8Rng) -> Vec<u32> {
    let n = occupied.len();
    let want = want.clamp(1, n);
    let mut picks = Vec::with_capacity(want);
    for j in 0..want {
        let lo = j * n / want;
        let hi = ((j + 1) * n / want).max(lo + 1);
        picks.push(occupied[r.gen_range(lo..hi)]);
    }
    picks.sort_unstable();
    picks.dedup();
    picks
}

/// Shade a tube with a lambda-dense, spread row selection. When `rows_hint`
/// is provided (height-aligned families) those rows are used where the tube
/// is occupied, topped up to reach the density target.
fn shade_tube(
    tube: &CellSet,
    lambda: f64,
    rows_hint: Option<&[u32]>,
    r: &mut ChaCha8Rng,
) -> Result<CellSet> {
    let rows = row_profile(tube);
    let occupied: Vec<u32> = rows
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > 0)
        .map(|(i, _)| i as u32)
        .collect();
    if occupied.is_empty() {
        return Err(Error::Internal("shading an empty tube".into()));
    }
    let target = (lambda * tube.len() as f64).ceil() as u64;
    let mut selected: Vec<u32> = match rows_hint {
        Some(hint) => hint.iter().copied().filter(|i| rows[*i as usize] > 0).collect(),
        None => {
            let per_row = tube.len() as f64 / occupied.len() as f64;
            let want = ((target as f64) / per_row).ceil() as usize;
            stratified_rows(&occupied, want, r)
        }
    };
    // top up at the largest gaps until the measure target is met
    let mut have: u64 = selected.iter().map(|&i| rows[i as usize]).sum();
    let mut guard = 0;
    while have < target && selected.len() < occupied.len() {
        guard += 1;
        if guard > occupied.len() + 4 {
            break;
        }
        let mut best: Option<(u32, u32)> = None; // (gap, row)
        for w in occupied.windows(2) {
            let in_sel = |x: u32| selected.binary_search(&x).is_ok();
            if in_sel(w[0]) != in_sel(w[1]) {
                continue;
            }
            let mid = (w[0] + w[1]) / 2;
            if !in_sel(mid) {
                let gap = selected
                    .iter()
                    .map(|&s| s.abs_diff(mid))
                    .min()
                    .unwrap_or(u32::MAX);
                if best.map(|(g, _)| gap > g).unwrap_or(true) {
                    best = Some((gap, mid));
                }
            }
        }
        let row = match best {
            Some((_, row)) => row,
            None => match occupied.iter().find(|i| selected.binary_search(i).is_err()) {
                Some(&row) => row,
                None => break,
            },
        };
        selected.push(row);
        selected.sort_unstable();
        have += rows[row as usize];
    }
    let t_axis = (tube.n - 1) as usize;
    let cells: Vec<u64> = tube
        .coords()
        .filter(|c| selected.binary_search(&c[t_axis]).is_ok())
        .map(|c| crate::dyadic::encode(tube.n, tube.k, c))
        .collect();
    CellSet::new(tube.n, tube.scale(), cells)
}

fn finish_family(
    lines: Vec<DiscreteLine>,
    shadings: Vec<CellSet>,
    lambda: f64,
    eps1: f64,
    eps2: f64,
) -> Result<ShadedFamily> {
    let fam = ShadedFamily::new(
        lines,
        shadings,
        FamilyMeta {
            lambda: Some(lambda),
            eps1: Some(eps1),
            eps2: Some(eps2),
            two_ends_c: Some(1.0),
        },
    )?;
    if fam.is_empty() {
        return Ok(fam);
    }
    fam.validate_containment()?;
    fam.validate_density(lambda)?;
    fam.validate_two_ends(eps1, eps2, 1.0)?;
    Ok(fam)
}

// ---------------------------------------------------------------------------
// Random direction-separated families
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomTwoEndsParams {
    pub n: u8,
    pub k: u32,
    pub count: usize,
    pub lambda: f64,
    pub eps1: f64,
    pub eps2: f64,
    /// Share one row pattern across lines (used by the slicing experiment).
    pub height_aligned: bool,
}

pub fn gen_random_two_ends(p: &RandomTwoEndsParams, seed: u64) -> Result<ShadedFamily> {
    let sc = scale(p.k)?;
    let s = sc.side() as i64;
    if p.count == 0 {
        return ShadedFamily::new(vec![], vec![], Default::default());
    }
    if !(0.0 < p.lambda && p.lambda <= 1.0) {
        return param_err(format!("lambda={} outside (0,1]", p.lambda));
    }
    let dir_capacity = (s + 1).pow(p.n as u32 - 1) as usize;
    if p.count > dir_capacity / 2 {
        return Err(Error::Capacity(format!(
            "{} lines exceed the directional capacity {} at this scale",
            p.count, dir_capacity
        )));
    }
    let mut r = rng(seed);
    let mut lines = Vec::new();
    let mut used: std::collections::BTreeSet<[i64; 2]> = std::collections::BTreeSet::new();
    let nh = (p.n - 1) as usize;
    while lines.len() < p.count {
        let mut bu = [0i64; 2];
        for d in bu.iter_mut().take(nh) {
            *d = r.gen_range(-s / 2..=s / 2);
        }
        if !used.insert(bu) {
            continue;
        }
        // keep the tube inside the box for all heights
        let mut au = [0i64; 2];
        for d in 0..nh {
            let lo = 0.max(-bu[d]);
            let hi = s.min(s - bu[d]);
            au[d] = r.gen_range(lo..=hi);
        }
        lines.push(DiscreteLine::new(p.n, sc, au, bu)?);
    }
    let aligned_rows: Option<Vec<u32>> = if p.height_aligned {
        let all: Vec<u32> = (0..sc.side() as u32).collect();
        let want = (p.lambda * 3.0 * sc.side() as f64).ceil() as usize;
        Some(stratified_rows(&all, want, &mut r))
    } else {
        None
    };
    let shadings: Vec<CellSet> = lines
        .iter()
        .map(|l| {
            let tube = rasterize_tube(l)?;
            shade_tube(&tube, p.lambda, aligned_rows.as_deref(), &mut r)
        })
        .collect::<Result<_>>()?;
    let fam = finish_family(lines, shadings, p.lambda, p.eps1, p.eps2)?;
    if !is_directionally_separated(&fam.lines) {
        return Err(Error::Internal("generator produced non-separated directions".into()));
    }
    Ok(fam)
}

// ---------------------------------------------------------------------------
// Bush
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BushParams {
    pub n: u8,
    pub k: u32,
    pub count: usize,
    pub lambda: f64,
    pub eps1: f64,
    pub eps2: f64,
}

/// Lines through a common root point at height 1/2, with delta-separated
/// spread directions.
pub fn gen_bush(p: &BushParams, seed: u64) -> Result<ShadedFamily> {
    let sc = scale(p.k)?;
    let s = sc.side() as i64;
    if p.count == 0 {
        return ShadedFamily::new(vec![], vec![], Default::default());
    }
    let nh = (p.n - 1) as usize;
    let max_dirs = ((s / 2 + 1).pow(nh as u32)) as usize;
    if p.count > max_dirs {
        return Err(Error::Capacity(format!("bush of {} exceeds {max_dirs} directions", p.count)));
    }
    let mut r = rng(seed);
    // spread direction grid over [-S/4, S/4]
    let per_axis = (p.count as f64).powf(1.0 / nh as f64).ceil() as i64;
    let stride = (s / 2 / per_axis.max(1)).max(1);
    let mut dirs = Vec::new();
    'outer: for i in 0..per_axis {
        for j in 0..if nh == 2 { per_axis } else { 1 } {
            let mut bu = [0i64; 2];
            bu[0] = -s / 4 + i * stride;
            if nh == 2 {
                bu[1] = -s / 4 + j * stride;
            }
            dirs.push(bu);
            if dirs.len() == p.count {
                break 'outer;
            }
        }
    }
    let lines: Vec<DiscreteLine> = dirs
        .iter()
        .map(|bu| {
            // a = root - t0 * b with root at the box center, t0 = 1/2
            let mut au = [0i64; 2];
            for d in 0..nh {
                au[d] = (s / 2 - bu[d] / 2).clamp(0, s);
            }
            DiscreteLine::new(p.n, sc, au, *bu)
        })
        .collect::<Result<_>>()?;
    let shadings: Vec<CellSet> = lines
        .iter()
        .map(|l| {
            let tube = rasterize_tube(l)?;
            shade_tube(&tube, p.lambda, None, &mut r)
        })
        .collect::<Result<_>>()?;
    finish_family(lines, shadings, p.lambda, p.eps1, p.eps2)
}

// ---------------------------------------------------------------------------
// Hairbrush
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HairbrushParams {
    pub k: u32,
    pub bristles: usize,
    pub lambda: f64,
    pub eps1: f64,
    pub eps2: f64,
}

/// A 3D hairbrush: bristles intersect the vertical stem at spread heights
/// with delta-separated directions.
pub fn gen_hairbrush(p: &HairbrushParams, seed: u64) -> Result<ShadedFamily> {
    let sc = scale(p.k)?;
    let s = sc.side() as i64;
    let mut r = rng(seed);
    let stem = DiscreteLine::new(3, sc, [s / 2, s / 2], [0, 0])?;
    let mut lines = vec![stem];
    let mut used = std::collections::BTreeSet::new();
    used.insert([0i64, 0]);
    let mut guard = 0;
    while lines.len() < p.bristles + 1 {
        guard += 1;
        if guard > 100 * (p.bristles + 1) {
            return Err(Error::Capacity(format!(
                "could not place {} separated bristles at k={}",
                p.bristles, p.k
            )));
        }
        let bu = [r.gen_range(-s / 2..=s / 2), r.gen_range(-s / 2..=s / 2)];
        if bu[0].abs().max(bu[1].abs()) < 2 || !used.insert(bu) {
            continue;
        }
        // intersection height on the stem
        let t_units = r.gen_range(0..=s);
        let mut au = [0i64; 2];
        let mut ok = true;
        for d in 0..2 {
            au[d] = s / 2 - (t_units * bu[d]) / s;
            if au[d] < 0 || au[d] > s {
                ok = false;
            }
        }
        if !ok {
            used.remove(&bu);
            continue;
        }
        lines.push(DiscreteLine::new(3, sc, au, bu)?);
    }
    let shadings: Vec<CellSet> = lines
        .iter()
        .map(|l| {
            let tube = rasterize_tube(l)?;
            shade_tube(&tube, p.lambda, None, &mut r)
        })
        .collect::<Result<_>>()?;
    finish_family(lines, shadings, p.lambda, p.eps1, p.eps2)
}

// ---------------------------------------------------------------------------
// Well-spaced tubes (n = 2)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WellSpacedParams {
    pub k: u32,
    /// Number of directions; positions per direction fill the unit interval.
    pub dirs: u32,
    pub positions: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct WellSpacedFamily {
    pub lines: Vec<DiscreteLine>,
    pub dirs: u32,
    pub positions: u32,
}

/// Anisotropic product-grid duals: `positions` offsets at spacing
/// `2^k/positions`, `dirs` directions at spacing `2^(k-1)/dirs` in units.
/// This is the lattice-example structure; `validate_well_spaced` checks the
/// grid census (at most one dual point per grid box).
pub fn gen_well_spaced(p: &WellSpacedParams, seed: u64) -> Result<WellSpacedFamily> {
    let sc = scale(p.k)?;
    let s = sc.side() as i64;
    if p.dirs == 0 || p.positions == 0 {
        return param_err("need at least one direction and position".to_string());
    }
    let ub = (s / 2) / p.dirs as i64;
    let ua = s / p.positions as i64;
    if ub == 0 || ua == 0 {
        return Err(Error::Capacity(format!(
            "{} x {} duals exceed the grid at k={}",
            p.positions, p.dirs, p.k
        )));
    }
    let mut r = rng(seed);
    let mut lines = Vec::new();
    for j in 0..p.dirs as i64 {
        let bu = -s / 4 + j * ub + ub / 2;
        for i in 0..p.positions as i64 {
            // jitter inside the grid box keeps the census exact while breaking
            // arithmetic alignment of crossing heights
            let jitter = if ua > 1 { r.gen_range(0..ua) } else { 0 };
            let au = (i * ua + jitter).clamp(0, s);
            lines.push(DiscreteLine::new(2, sc, [au, 0], [bu, 0])?);
        }
    }
    Ok(WellSpacedFamily {
        lines,
        dirs: p.dirs,
        positions: p.positions,
    })
}

/// Grid census: every `ua x ub` box of dual space holds at most one line.
pub fn validate_well_spaced(f: &WellSpacedFamily, k: u32) -> Result<()> {
    let s = 1i64 << k;
    let ua = s / f.positions as i64;
    let ub = (s / 2) / f.dirs as i64;
    let mut seen = std::collections::BTreeSet::new();
    for l in &f.lines {
        let cell = (l.au[0] / ua.max(1), l.bu[0].div_euclid(ub.max(1)));
        if !seen.insert(cell) {
            return Err(Error::Precondition(format!(
                "two duals in grid box {cell:?}: family is not well-spaced"
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Lattice example
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LatticeParams {
    pub n: u8,
    #[serde(rename = "N")]
    pub size: i64,
    pub k: [i64; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct LatticeExample {
    pub points: u64,
    pub lines: u64,
    pub incidences: u64,
}

/// The integer lattice configuration: points `[0,N] x prod [0, k_j N]`,
/// lines `(a,0) + R (1,b)` with `a_j in [1, k_j N]`, `b_j in [1, k_j]`.
/// Incidences are counted by brute force.
pub fn gen_lattice_example(p: &LatticeParams) -> Result<LatticeExample> {
    if !(2..=3).contains(&p.n) || p.size < 1 || p.k[0] < 1 || (p.n == 3 && p.k[1] < 1) {
        return param_err(format!("bad lattice parameters {p:?}"));
    }
    let nh = (p.n - 1) as usize;
    let mut points: u64 = (p.size + 1) as u64;
    let mut line_count: u64 = 1;
    for d in 0..nh {
        points *= (p.k[d] * p.size + 1) as u64;
        line_count *= (p.k[d] * p.size) as u64 * p.k[d] as u64;
    }
    if points.saturating_mul(line_count) > (1u64 << 42) {
        return Err(Error::Capacity(format!("lattice of {points} points x {line_count} lines too large")));
    }
    // brute force: for each line and each t, is the point inside the box?
    let mut incidences = 0u64;
    let mut a = [1i64; 2];
    let mut b = [1i64; 2];
    loop {
        // count t in [0, N] with a_d + t b_d in [0, k_d N] for all d
        for t in 0..=p.size {
            let inside = (0..nh).all(|d| {
                let x = a[d] + t * b[d];
                x >= 0 && x <= p.k[d] * p.size
            });
            if inside {
                incidences += 1;
            }
        }
        // advance the (a, b) odometer
        let mut d = 0;
        loop {
            if d == nh {
                return Ok(LatticeExample {
                    points,
                    lines: line_count,
                    incidences,
                });
            }
            b[d] += 1;
            if b[d] <= p.k[d] {
                break;
            }
            b[d] = 1;
            a[d] += 1;
            if a[d] <= p.k[d] * p.size {
                break;
            }
            a[d] = 1;
            d += 1;
        }
    }
}
