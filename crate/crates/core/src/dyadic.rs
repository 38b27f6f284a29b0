//! Dyadic grid arithmetic: scales, cell sets, covering numbers, refinement.
//!
//! A `CellSet` is a union of half-open dyadic cells `prod [i_d*delta, (i_d+1)*delta)`
//! inside `[0,1]^n`. "delta-balls" from the source definitions are realized as
//! these cells; the dyadic-cell cover replaces the minimal metric-ball cover,
//! which is correct up to a factor `4^n` and exact on its own terms. Measures
//! are exact rationals `count * delta^n`.

use crate::rat::{measure, Q};
use crate::{param_err, Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Scale `delta = 2^-k`, `k >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DyadicScale {
    k: u32,
}

impl DyadicScale {
    pub fn new(k: u32) -> Result<Self> {
        if k == 0 || k > 24 {
            return param_err(format!("scale exponent k={k} out of range [1,24]"));
        }
        Ok(DyadicScale { k })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn delta(&self) -> f64 {
        (self.k as f64 * -(std::f64::consts::LN_2)).exp()
    }

    /// Grid side `2^k`.
    pub fn side(&self) -> u64 {
        1u64 << self.k
    }
}

/// A union of dyadic cells of one scale in `[0,1]^n`, `n` in {1,2,3}.
///
/// Cells are stored as sorted flat indices, row-major with the first
/// coordinate slowest: `idx = ((x1*side) + x2)*side + x3` for n=3.
/// The JSON form `{n, k, cells}` round-trips bit-exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSet {
    pub n: u8,
    pub k: u32,
    cells: Vec<u64>,
}

impl CellSet {
    pub fn new(n: u8, scale: DyadicScale, mut cells: Vec<u64>) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return param_err(format!("dimension n={n} not in {{1,2,3}}"));
        }
        let bound = 1u64 << (n as u32 * scale.k());
        cells.sort_unstable();
        cells.dedup();
        if let Some(&c) = cells.last() {
            if c >= bound {
                return param_err(format!("cell index {c} outside grid of {bound} cells"));
            }
        }
        Ok(CellSet {
            n,
            k: scale.k(),
            cells,
        })
    }

    pub fn empty(n: u8, scale: DyadicScale) -> Self {
        CellSet {
            n,
            k: scale.k(),
            cells: Vec::new(),
        }
    }

    /// Full grid at this scale.
    pub fn full(n: u8, scale: DyadicScale) -> Self {
        let count = 1u64 << (n as u32 * scale.k());
        CellSet {
            n,
            k: scale.k(),
            cells: (0..count).collect(),
        }
    }

    pub fn from_coords(n: u8, scale: DyadicScale, coords: impl IntoIterator<Item = [u32; 3]>) -> Result<Self> {
        let side = scale.side();
        let mut cells = Vec::new();
        for c in coords {
            for d in 0..n as usize {
                if c[d] as u64 >= side {
                    return param_err(format!("coordinate {} outside grid side {side}", c[d]));
                }
            }
            cells.push(encode(n, scale.k(), c));
        }
        CellSet::new(n, scale, cells)
    }

    pub fn scale(&self) -> DyadicScale {
        DyadicScale { k: self.k }
    }

    pub fn len(&self) -> u64 {
        self.cells.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[u64] {
        &self.cells
    }

    pub fn contains(&self, idx: u64) -> bool {
        self.cells.binary_search(&idx).is_ok()
    }

    pub fn coords(&self) -> impl Iterator<Item = [u32; 3]> + '_ {
        let (n, k) = (self.n, self.k);
        self.cells.iter().map(move |&c| decode(n, k, c))
    }

    /// Exact measure `delta^n * #cells`.
    pub fn measure(&self) -> Q {
        measure(self.len(), self.n, self.k)
    }

    /// Cell centers in `[0,1]^n` (unused coordinates zero).
    pub fn centers(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        let delta = self.scale().delta();
        let n = self.n as usize;
        self.coords().map(move |c| {
            let mut x = [0.0; 3];
            for d in 0..n {
                x[d] = (c[d] as f64 + 0.5) * delta;
            }
            x
        })
    }

    pub fn union(&self, other: &CellSet) -> Result<CellSet> {
        self.check_compatible(other)?;
        let mut cells = self.cells.clone();
        cells.extend_from_slice(&other.cells);
        CellSet::new(self.n, self.scale(), cells)
    }

    pub fn intersect(&self, other: &CellSet) -> Result<CellSet> {
        self.check_compatible(other)?;
        let cells = self
            .cells
            .iter()
            .copied()
            .filter(|c| other.contains(*c))
            .collect();
        CellSet::new(self.n, self.scale(), cells)
    }

    pub fn minus(&self, other: &CellSet) -> Result<CellSet> {
        self.check_compatible(other)?;
        let cells = self
            .cells
            .iter()
            .copied()
            .filter(|c| !other.contains(*c))
            .collect();
        CellSet::new(self.n, self.scale(), cells)
    }

    pub fn is_subset_of(&self, other: &CellSet) -> Result<bool> {
        self.check_compatible(other)?;
        Ok(self.cells.iter().all(|c| other.contains(*c)))
    }

    fn check_compatible(&self, other: &CellSet) -> Result<()> {
        if self.n != other.n || self.k != other.k {
            return Err(Error::ScaleMismatch(format!(
                "(n={},k={}) vs (n={},k={})",
                self.n, self.k, other.n, other.k
            )));
        }
        Ok(())
    }

    /// Re-express this set at a finer scale `k' >= k` (each cell becomes its
    /// `2^(n*(k'-k))` children).
    pub fn expand_to(&self, fine: DyadicScale) -> Result<CellSet> {
        if fine.k() < self.k {
            return param_err("expand_to requires a finer scale".to_string());
        }
        let shift = fine.k() - self.k;
        let step = 1u32 << shift;
        let mut coords = Vec::new();
        for c in self.coords() {
            let mut child = [0u32; 3];
            let base: Vec<u32> = (0..self.n).map(|d| c[d as usize] << shift).collect();
            // enumerate the child box
            let reps = |d: usize| if d < self.n as usize { step } else { 1 };
            for i0 in 0..reps(0) {
                for i1 in 0..reps(1) {
                    for i2 in 0..reps(2) {
                        child[0] = base[0] + i0;
                        if self.n > 1 {
                            child[1] = base[1] + i1;
                        }
                        if self.n > 2 {
                            child[2] = base[2] + i2;
                        }
                        coords.push(child);
                    }
                }
            }
        }
        CellSet::from_coords(self.n, fine, coords)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<CellSet> {
        let set: CellSet = serde_json::from_str(s)?;
        // re-validate invariants on the way in
        CellSet::new(set.n, DyadicScale::new(set.k)?, set.cells)
    }
}

pub fn encode(n: u8, k: u32, c: [u32; 3]) -> u64 {
    let side = 1u64 << k;
    match n {
        1 => c[0] as u64,
        2 => c[0] as u64 * side + c[1] as u64,
        _ => (c[0] as u64 * side + c[1] as u64) * side + c[2] as u64,
    }
}

pub fn decode(n: u8, k: u32, idx: u64) -> [u32; 3] {
    let side = 1u64 << k;
    match n {
        1 => [idx as u32, 0, 0],
        2 => [(idx / side) as u32, (idx % side) as u32, 0],
        _ => [
            (idx / (side * side)) as u32,
            ((idx / side) % side) as u32,
            (idx % side) as u32,
        ],
    }
}

fn check_coarser(e: &CellSet, rho: DyadicScale) -> Result<u32> {
    if rho.k() > e.k {
        return param_err(format!(
            "covering scale rho=2^-{} finer than set scale 2^-{}",
            rho.k(),
            e.k
        ));
    }
    Ok(e.k - rho.k())
}

/// Number of dyadic `rho`-cells meeting `E` (the covering number `|E|_rho`).
pub fn covering_count(e: &CellSet, rho: DyadicScale) -> Result<u64> {
    let shift = check_coarser(e, rho)?;
    let mut parents = BTreeSet::new();
    for c in e.coords() {
        parents.insert(encode(e.n, rho.k(), [c[0] >> shift, c[1] >> shift, c[2] >> shift]));
    }
    Ok(parents.len() as u64)
}

/// The covering set `(E)_rho` as a `CellSet` at scale `rho`.
pub fn covering_set(e: &CellSet, rho: DyadicScale) -> Result<CellSet> {
    let shift = check_coarser(e, rho)?;
    let coords: Vec<[u32; 3]> = e
        .coords()
        .map(|c| [c[0] >> shift, c[1] >> shift, c[2] >> shift])
        .collect();
    CellSet::from_coords(e.n, rho, coords)
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementCheck {
    pub holds: bool,
    pub is_subset: bool,
    pub ratio: f64,
}

/// Is `e2` a `>= c`-refinement of `e1`? Returns the verdict and `#E2/#E1`.
pub fn is_refinement(e2: &CellSet, e1: &CellSet, c: f64) -> Result<RefinementCheck> {
    let is_subset = e2.is_subset_of(e1)?;
    let ratio = if e1.is_empty() {
        0.0
    } else {
        e2.len() as f64 / e1.len() as f64
    };
    Ok(RefinementCheck {
        holds: is_subset && ratio >= c && !e1.is_empty(),
        is_subset,
        ratio,
    })
}
