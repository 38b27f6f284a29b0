//! Independent brute-force oracles.
//!
//! These deliberately avoid the production code paths: coverings are found by
//! enumerating every coarse cell of the grid, Frostman constants by scanning
//! all lattice points, incidences by testing every (point, line) pair. They
//! exist so the fast implementations can be checked against first principles
//! and are used only by tests and the acceptance suite.

use crate::dyadic::{CellSet, DyadicScale};

/// `|E|_rho` by enumerating all `rho`-cells of the grid and testing overlap.
pub fn covering_count_by_enumeration(e: &CellSet, rho: DyadicScale) -> u64 {
    let shift = e.k - rho.k();
    let side = rho.side();
    let n = e.n;
    let coords: Vec<[u32; 3]> = e.coords().collect();
    let mut count = 0;
    let reps = |d: u8| if d < n { side } else { 1 };
    for i0 in 0..reps(0) {
        for i1 in 0..reps(1) {
            for i2 in 0..reps(2) {
                let cell = [i0 as u32, i1 as u32, i2 as u32];
                let hit = coords.iter().any(|c| {
                    (0..n as usize).all(|d| (c[d] >> shift) == cell[d])
                });
                if hit {
                    count += 1;
                }
            }
        }
    }
    count
}

/// Number of cells of `E` intersecting the closed sup-norm ball `B(x, r)`,
/// with `x` given in half-units (center of cell i is `2i+1`) and `r` in
/// half-units. Exact integer arithmetic.
pub fn cells_in_sup_ball(e: &CellSet, x_half: [i64; 3], r_half: i64) -> u64 {
    e.coords()
        .filter(|c| {
            (0..e.n as usize).all(|d| {
                let lo = 2 * c[d] as i64;
                let hi = lo + 2;
                // half-open cell [lo, hi) vs closed interval [x-r, x+r]
                lo <= x_half[d] + r_half && hi > x_half[d] - r_half
            })
        })
        .count() as u64
}

/// Brute-force least Frostman constant for the standard variant, scanning
/// x over ALL lattice points (cell corners and centers) and r over dyadic
/// radii in `[delta, 1]`.
pub fn frostman_bruteforce_standard(e: &CellSet, s: f64) -> f64 {
    if e.is_empty() {
        return 0.0;
    }
    let k = e.k;
    let side = 1i64 << k;
    let total = e.len() as f64;
    let n = e.n;
    let mut worst: f64 = 0.0;
    // lattice points at half-unit resolution: 0, 1/2 delta steps
    let reps = |d: u8| if d < n { 2 * side + 1 } else { 1 };
    for j in 0..=k {
        let r_half = 1i64 << (k - j + 1); // r = 2^-j in half-units
        let r = (r_half as f64) / (2.0 * side as f64);
        for x0 in 0..reps(0) {
            for x1 in 0..reps(1) {
                for x2 in 0..reps(2) {
                    let x = [x0, x1, x2];
                    let cnt = cells_in_sup_ball(e, x, r_half) as f64;
                    let c = cnt / (r.powf(s) * total);
                    if c > worst {
                        worst = c;
                    }
                }
            }
        }
    }
    worst
}

/// Exhaustive incidence count `I(P, L)` testing every (point, line) pair.
/// Points and lines are in the integer lattice convention of the generators:
/// a point `p` lies on `(a, b)` iff `p_rest = a + p_0 * b` coordinatewise.
pub fn lattice_incidences_by_pairs(
    points: &[[i64; 3]],
    lines: &[([i64; 2], [i64; 2])],
    n: u8,
) -> u64 {
    let mut count = 0u64;
    for p in points {
        for (a, b) in lines {
            let on = (0..(n - 1) as usize).all(|d| p[d + 1] == a[d] + p[0] * b[d]);
            if on {
                count += 1;
            }
        }
    }
    count
}
