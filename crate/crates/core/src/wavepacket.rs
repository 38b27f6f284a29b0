//! Numerical extension operator on the paraboloid and the wave-packet
//! decomposition.
//!
//! The surface is fixed to `Phi(xi) = |xi|^2`. Frequency cap windows are
//! flat-top cosine-squared bumps (exact partition of unity, support inside
//! 1.5 caps); translate windows have cosine-squared Fourier transforms with
//! support `[-R^{-1/2}, R^{-1/2}]`, so packet frequency supports sit inside
//! `3 theta` exactly on the grid. All integrals are fixed-grid trapezoid
//! quadrature with declared spacing; spatial accumulation order is fixed, so
//! results are bit-reproducible for a given grid.
//!
//! The extension quadrature supports n = 2 and 3; the packet decomposition
//! and its experiments are planar (a 3-D decomposition at resolved
//! oscillation exceeds the desk-scale budget).

use crate::seed::rng;
use crate::{param_err, Error, Result};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::io::{Read, Write};
use std::path::Path;

/// Complex samples of `f` on a uniform grid over `B^{n-1}(0,1)`.
#[derive(Debug, Clone)]
pub struct FrequencyFunction {
    /// Ambient dimension (2 or 3); the grid is (n-1)-dimensional.
    pub n: u8,
    pub h: f64,
    /// Samples per axis; `dims[1] = 1` when n = 2.
    pub dims: [usize; 2],
    /// Row-major values.
    pub values: Vec<Complex64>,
}

impl FrequencyFunction {
    pub fn zero(n: u8, h: f64) -> Result<Self> {
        if !(2..=3).contains(&n) {
            return param_err(format!("n={n} not in {{2,3}}"));
        }
        let per_axis = (2.0 / h).round() as usize + 1;
        let dims = if n == 2 { [per_axis, 1] } else { [per_axis, per_axis] };
        Ok(FrequencyFunction {
            n,
            h,
            dims,
            values: vec![Complex64::new(0.0, 0.0); dims[0] * dims[1]],
        })
    }

    pub fn xi(&self, i: usize) -> f64 {
        -1.0 + i as f64 * self.h
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|v| v.norm_sqr() == 0.0)
    }

    /// `||f||_2^2` by the grid rule.
    pub fn norm2_sq(&self) -> f64 {
        let cell = self.h.powi(self.n as i32 - 1);
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * cell
    }

    /// A smooth band-limited test bump: a random sum of modulated Gaussians
    /// narrow enough that their values at the unit-ball boundary are below
    /// 1e-13, keeping the trapezoid rule spectrally accurate.
    pub fn random_band_limited(n: u8, h: f64, seed: u64) -> Result<Self> {
        let mut f = FrequencyFunction::zero(n, h)?;
        let mut r = rng(seed);
        let bumps: Vec<([f64; 2], f64, f64, f64)> = (0..4)
            .map(|_| {
                (
                    [
                        r.gen_range(-0.45..0.45),
                        if n == 3 { r.gen_range(-0.3..0.3) } else { 0.0 },
                    ],
                    r.gen_range(0.03..0.06),
                    r.gen_range(0.0..std::f64::consts::TAU),
                    r.gen_range(0.5..1.0),
                )
            })
            .collect();
        let dims = f.dims;
        for i0 in 0..dims[0] {
            for i1 in 0..dims[1] {
                let x = f.xi(i0);
                let y = if n == 3 { f.xi(i1) } else { 0.0 };
                let mut v = Complex64::new(0.0, 0.0);
                for &(c, w, phase, amp) in &bumps {
                    let d2 = (x - c[0]).powi(2) + (y - c[1]).powi(2);
                    v += amp
                        * (-d2 / (2.0 * w * w)).exp()
                        * Complex64::new(0.0, phase + 3.0 * x).exp();
                }
                f.values[i0 * dims[1] + i1] = v;
            }
        }
        Ok(f)
    }

    /// Write the binary grid format: header (n, R, h, dims), payload
    /// little-endian complex64 (f32 re/im pairs), row-major.
    pub fn write_binary(&self, r_scale: u32, path: &Path) -> Result<()> {
        let mut w = std::fs::File::create(path)?;
        w.write_all(b"FGRD")?;
        w.write_all(&[self.n])?;
        w.write_all(&r_scale.to_le_bytes())?;
        w.write_all(&self.h.to_le_bytes())?;
        w.write_all(&(self.dims[0] as u32).to_le_bytes())?;
        w.write_all(&(self.dims[1] as u32).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&(v.re as f32).to_le_bytes())?;
            w.write_all(&(v.im as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<(Self, u32)> {
        let mut rd = std::fs::File::open(path)?;
        let mut magic = [0u8; 4];
        rd.read_exact(&mut magic)?;
        if &magic != b"FGRD" {
            return Err(Error::Config("not a frequency grid file".into()));
        }
        let mut b1 = [0u8; 1];
        rd.read_exact(&mut b1)?;
        let mut b4 = [0u8; 4];
        rd.read_exact(&mut b4)?;
        let r_scale = u32::from_le_bytes(b4);
        let mut b8 = [0u8; 8];
        rd.read_exact(&mut b8)?;
        let h = f64::from_le_bytes(b8);
        rd.read_exact(&mut b4)?;
        let d0 = u32::from_le_bytes(b4) as usize;
        rd.read_exact(&mut b4)?;
        let d1 = u32::from_le_bytes(b4) as usize;
        let mut values = Vec::with_capacity(d0 * d1);
        for _ in 0..d0 * d1 {
            rd.read_exact(&mut b4)?;
            let re = f32::from_le_bytes(b4) as f64;
            rd.read_exact(&mut b4)?;
            let im = f32::from_le_bytes(b4) as f64;
            values.push(Complex64::new(re, im));
        }
        Ok((
            FrequencyFunction {
                n: b1[0],
                h,
                dims: [d0, d1],
                values,
            },
            r_scale,
        ))
    }
}

/// Trapezoid-rule extension `Ef(x) = int e^{i x.xi + i x_n |xi|^2} f(xi) dxi`.
/// Requires the grid to resolve the oscillation: `h <= 1/(10 max|x|)`.
pub fn extension(f: &FrequencyFunction, points: &[[f64; 3]]) -> Result<Vec<Complex64>> {
    let r_needed = points
        .iter()
        .map(|p| p.iter().map(|c| c.abs()).fold(0.0, f64::max))
        .fold(1.0, f64::max);
    if f.h > 1.0 / (10.0 * r_needed) * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "grid spacing h={} too coarse for |x| up to {r_needed}",
            f.h
        )));
    }
    Ok(points.par_iter().map(|p| extension_at(f, *p)).collect())
}

fn extension_at(f: &FrequencyFunction, p: [f64; 3]) -> Complex64 {
    let dims = f.dims;
    let mut acc = Complex64::new(0.0, 0.0);
    if f.n == 2 {
        for i in 0..dims[0] {
            let xi = f.xi(i);
            let w = if i == 0 || i == dims[0] - 1 { 0.5 } else { 1.0 };
            let phase = p[0] * xi + p[1] * xi * xi;
            acc += w * f.values[i] * Complex64::new(0.0, phase).exp();
        }
        acc * f.h
    } else {
        for i0 in 0..dims[0] {
            let x0 = f.xi(i0);
            let w0 = if i0 == 0 || i0 == dims[0] - 1 { 0.5 } else { 1.0 };
            for i1 in 0..dims[1] {
                let v = f.values[i0 * dims[1] + i1];
                if v.norm_sqr() == 0.0 {
                    continue;
                }
                let x1 = f.xi(i1);
                let w1 = if i1 == 0 || i1 == dims[1] - 1 { 0.5 } else { 1.0 };
                let phase = p[0] * x0 + p[1] * x1 + p[2] * (x0 * x0 + x1 * x1);
                acc += w0 * w1 * v * Complex64::new(0.0, phase).exp();
            }
        }
        acc * f.h * f.h
    }
}

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

/// Flat-top cosine-squared cap window of radius `r_c`: 1 on half the cap,
/// cosine-squared taper out to 1.5 cap radii. Shifts by 2 r_c sum to one.
fn cap_window(u: f64, r_c: f64) -> f64 {
    let a = u.abs() / r_c;
    if a <= 0.5 {
        1.0
    } else if a >= 1.5 {
        0.0
    } else {
        let t = std::f64::consts::FRAC_PI_2 * (a - 0.5);
        t.cos().powi(2)
    }
}

/// Fourier-side cosine-squared translate window, `psi_hat(0) = spacing`.
fn psi_hat(zeta: f64, omega: f64, spacing: f64) -> f64 {
    if zeta.abs() >= omega {
        0.0
    } else {
        let t = std::f64::consts::FRAC_PI_2 * zeta / omega;
        spacing * t.cos().powi(2)
    }
}

// ---------------------------------------------------------------------------
// Wave packets (n = 2)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct PacketTube {
    /// Center line `x1 = c_v - slope * x2`, radius `R^{1/2}` (3x widened for
    /// tail checks).
    pub c_v: f64,
    pub slope: f64,
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct WavePacket {
    pub theta: i64,
    pub v: i64,
    /// First grid index of the (contiguous) frequency support.
    pub start: usize,
    pub values: Vec<Complex64>,
    /// `||f_T||_2^2` on the grid.
    pub mass: f64,
}

#[derive(Debug)]
pub struct WavePacketSet {
    pub r_scale: u32,
    pub h: f64,
    pub grid_len: usize,
    /// Cap radius `R^{-1/2}` and cap count (without edge caps).
    pub cap_radius: f64,
    pub cap_count: i64,
    pub v_spacing: f64,
    pub packets: Vec<WavePacket>,
}

impl WavePacketSet {
    pub fn cap_center(&self, theta: i64) -> f64 {
        -1.0 + (2 * theta + 1) as f64 * self.cap_radius
    }

    /// The tube of a packet. The nominal radius is the translate cell size
    /// `2 R^{1/2}` (the physical window cannot concentrate below the
    /// uncertainty width of its `R^{-1/2}`-band Fourier support); tail checks
    /// use the 3x-widened tube.
    pub fn tube(&self, p: &WavePacket) -> PacketTube {
        PacketTube {
            c_v: p.v as f64 * self.v_spacing,
            slope: 2.0 * self.cap_center(p.theta),
            radius: 2.0 * (self.r_scale as f64).sqrt(),
        }
    }

    /// Evaluate `Ef_T` at a point by quadrature over the packet support.
    pub fn eval(&self, p: &WavePacket, x: [f64; 2]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, v) in p.values.iter().enumerate() {
            let xi = -1.0 + (p.start + j) as f64 * self.h;
            let phase = x[0] * xi + x[1] * xi * xi;
            acc += v * Complex64::new(0.0, phase).exp();
        }
        acc * self.h
    }

    /// Evaluate the sum of a subset of packets at a point.
    pub fn eval_sum(&self, indices: &[usize], x: [f64; 2]) -> Complex64 {
        indices.iter().map(|&i| self.eval(&self.packets[i], x)).sum()
    }

    /// Distance from a point to the packet's tube center line (transverse
    /// offset in the x1 direction).
    pub fn tube_offset(&self, p: &WavePacket, x: [f64; 2]) -> f64 {
        let t = self.tube(p);
        (x[0] - t.c_v + t.slope * x[1]).abs()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecomposeParams {
    /// Keep packets whose tube passes within this many tube radii of `B_R`.
    pub keep_radii: f64,
    pub tau_rec: f64,
    pub tau_tail: f64,
    /// How many of the heaviest packets get the (expensive) tail check.
    pub tail_check_count: usize,
}

impl Default for DecomposeParams {
    fn default() -> Self {
        DecomposeParams {
            keep_radii: 40.0,
            tau_rec: 1e-3,
            tau_tail: 1e-3,
            tail_check_count: 6,
        }
    }
}

/// Build the wave-packet decomposition of `f` at scale `R` (a power of 4,
/// `R <= 2^10`). Frequency supports inside `3 theta` are asserted exactly.
pub fn decompose(f: &FrequencyFunction, r_scale: u32, params: &DecomposeParams) -> Result<WavePacketSet> {
    if f.n != 2 {
        return Err(Error::Precondition(
            "packet decomposition is planar at desk scale; extension() itself supports n=3".into(),
        ));
    }
    if r_scale > 1024 || !matches!(r_scale, 4 | 16 | 64 | 256 | 1024) {
        return param_err(format!("R={r_scale} must be a power of 4 at most 1024"));
    }
    let r = r_scale as f64;
    if f.h > 1.0 / (10.0 * r) * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!("h={} too coarse for R={r_scale}", f.h)));
    }
    let sqrt_r = r.sqrt();
    let cap_radius = 1.0 / sqrt_r;
    let cap_count = sqrt_r as i64;
    let v_spacing = 2.0 * sqrt_r;
    // Fourier support of the translate window: 1.5 cap radii, so that
    // supp(f phi_theta) + [-omega, omega] sits inside 3 theta exactly while
    // the physical window concentrates well inside the widened tube. The
    // partition of unity stays exact (2 pi / spacing > omega).
    let omega = 1.5 * cap_radius;
    let h = f.h;
    let grid_len = f.dims[0];
    let kernel_taps = (omega / h).ceil() as usize;

    // v range: tubes within keep_radii tube radii of B_R
    let v_max = ((3.0 * r + params.keep_radii * sqrt_r) / v_spacing).ceil() as i64;

    let mut packets: Vec<WavePacket> = Vec::new();
    for theta in -1..=cap_count {
        let c_theta = -1.0 + (2 * theta + 1) as f64 * cap_radius;
        // g = f * phi_theta on its support
        let lo_xi = c_theta - 1.5 * cap_radius;
        let hi_xi = c_theta + 1.5 * cap_radius;
        let lo = (((lo_xi + 1.0) / h).floor().max(0.0)) as usize;
        let hi = (((hi_xi + 1.0) / h).ceil() as usize).min(grid_len - 1);
        if lo >= hi {
            continue;
        }
        let g: Vec<Complex64> = (lo..=hi)
            .map(|i| f.values[i] * cap_window(f.xi(i) - c_theta, cap_radius))
            .collect();
        if g.iter().all(|v| v.norm_sqr() == 0.0) {
            continue;
        }
        // output support: g support padded by the kernel
        let out_lo = lo.saturating_sub(kernel_taps);
        let out_hi = (hi + kernel_taps).min(grid_len - 1);
        // real kernel, modulated signal: g_v[j] = g[j] e^{i c_v xi_j}
        let kernel: Vec<f64> = (-(kernel_taps as i64)..=kernel_taps as i64)
            .map(|d| psi_hat(d as f64 * h, omega, v_spacing))
            .collect();
        let out_len = out_hi - out_lo + 1;
        let scale = h / std::f64::consts::TAU;
        let theta_packets: Vec<WavePacket> = (-v_max..=v_max)
            .into_par_iter()
            .filter_map(|v| {
                let c_v = v as f64 * v_spacing;
                // modulated copy of g
                let gv: Vec<Complex64> = g
                    .iter()
                    .enumerate()
                    .map(|(j, val)| {
                        let xi = -1.0 + (lo + j) as f64 * h;
                        val * Complex64::new(0.0, c_v * xi).exp()
                    })
                    .collect();
                let mut out = vec![Complex64::new(0.0, 0.0); out_len];
                for (j, gval) in gv.iter().enumerate() {
                    if gval.norm_sqr() == 0.0 {
                        continue;
                    }
                    let center = lo + j;
                    for (t, kval) in kernel.iter().enumerate() {
                        if *kval == 0.0 {
                            continue;
                        }
                        let idx = center as i64 + t as i64 - kernel_taps as i64;
                        if idx < out_lo as i64 || idx > out_hi as i64 {
                            continue;
                        }
                        out[(idx - out_lo as i64) as usize] += gval * *kval;
                    }
                }
                // demodulate and scale
                let mut mass = 0.0;
                for (i, o) in out.iter_mut().enumerate() {
                    let xi = -1.0 + (out_lo + i) as f64 * h;
                    *o *= scale * Complex64::new(0.0, -c_v * xi).exp();
                    mass += o.norm_sqr();
                }
                mass *= h;
                if mass == 0.0 {
                    return None;
                }
                // trim structural zeros so the support statement is exact
                let first = out.iter().position(|v| v.norm_sqr() > 0.0)?;
                let last = out.iter().rposition(|v| v.norm_sqr() > 0.0)?;
                Some(WavePacket {
                    theta,
                    v,
                    start: out_lo + first,
                    values: out[first..=last].to_vec(),
                    mass,
                })
            })
            .collect();
        packets.extend(theta_packets);
    }
    let set = WavePacketSet {
        r_scale,
        h,
        grid_len,
        cap_radius,
        cap_count,
        v_spacing,
        packets,
    };
    // frequency support containment in 3 theta, exact on the grid
    for p in &set.packets {
        let c = set.cap_center(p.theta);
        let lo_xi = -1.0 + p.start as f64 * h;
        let hi_xi = -1.0 + (p.start + p.values.len() - 1) as f64 * h;
        if lo_xi < c - 3.0 * cap_radius - 1e-9 || hi_xi > c + 3.0 * cap_radius + 1e-9 {
            return Err(Error::Internal(format!(
                "packet ({}, {}) support [{lo_xi:.4}, {hi_xi:.4}] escapes 3 theta around {c:.4}",
                p.theta, p.v
            )));
        }
    }
    Ok(set)
}

/// The rapidly-decaying weight that is ~1 on `B_R`:
/// `(1 + dist(x, B_R)/R)^{-100}`.
pub fn weight_w(x: [f64; 2], r: f64) -> f64 {
    let norm = (x[0] * x[0] + x[1] * x[1]).sqrt();
    (1.0 + (norm - r).max(0.0) / r).powi(-100)
}

#[derive(Debug, Clone, Serialize)]
pub struct DecomposeChecks {
    /// Relative grid-side reconstruction error `||f - sum f_T||_2 / ||f||_2`.
    pub grid_reconstruction_rel: f64,
    /// Max over sample points of `|Ef - sum Ef_T| / rms(|Ef|)` on `B_R`.
    pub spatial_reconstruction_rel: f64,
    /// (theta, v, off-tube mass fraction) of the checked packets.
    pub tail_fractions: Vec<(i64, i64, f64)>,
    /// (theta, v, kappa) for the L^p vs L^2 norm comparison at p = 6.
    pub kappa6: Vec<(i64, i64, f64)>,
    pub pass: bool,
}

/// Run the numerical assertions on a decomposition: grid and spatial
/// reconstruction within `tau_rec`, off-tube mass of the heaviest packets
/// within `tau_tail` (3x-widened tubes), and the `L^p / L^2` packet norm
/// ratio reported at `p = 2(n+1)/(n-1) = 6`.
pub fn verify_decomposition(
    f: &FrequencyFunction,
    set: &WavePacketSet,
    params: &DecomposeParams,
) -> Result<DecomposeChecks> {
    let r = set.r_scale as f64;
    // grid-side reconstruction
    let mut recon = vec![Complex64::new(0.0, 0.0); set.grid_len];
    for p in &set.packets {
        for (j, v) in p.values.iter().enumerate() {
            recon[p.start + j] += v;
        }
    }
    let mut err2 = 0.0;
    let mut tot2 = 0.0;
    for (i, v) in f.values.iter().enumerate() {
        err2 += (recon[i] - v).norm_sqr();
        tot2 += v.norm_sqr();
    }
    let grid_rel = (err2 / tot2.max(1e-300)).sqrt();

    // spatial reconstruction on B_R: Eg at sample points vs rms of Ef
    let sample: Vec<[f64; 3]> = {
        let m = 10;
        let mut pts = Vec::new();
        for i in -m..=m {
            for j in -m..=m {
                let x = 0.7 * r * i as f64 / m as f64;
                let y = 0.7 * r * j as f64 / m as f64;
                pts.push([x, y, 0.0]);
            }
        }
        pts
    };
    let g = FrequencyFunction {
        n: 2,
        h: f.h,
        dims: f.dims,
        values: f
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v - recon[i])
            .collect(),
    };
    let ef = extension(f, &sample)?;
    let eg = extension(&g, &sample)?;
    let rms = (ef.iter().map(|v| v.norm_sqr()).sum::<f64>() / sample.len() as f64).sqrt();
    let spatial_rel = eg
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max)
        / rms.max(1e-300);

    // tail and kappa checks on the heaviest packets
    let mut order: Vec<usize> = (0..set.packets.len()).collect();
    order.sort_by(|&a, &b| {
        set.packets[b]
            .mass
            .partial_cmp(&set.packets[a].mass)
            .expect("finite")
    });
    order.truncate(params.tail_check_count);
    let checks: Vec<(i64, i64, f64, f64)> = order
        .par_iter()
        .map(|&pi| {
            let p = &set.packets[pi];
            let tube = set.tube(p);
            let wide = 3.0 * tube.radius;
            // quadrature box: full height, x1 within the tube sweep plus far field
            let sx = 2.0;
            let sy = 4.0;
            let (mut inside, mut outside, mut l6, mut l2w) = (0.0, 0.0, 0.0, 0.0);
            let ny = (2.5 * r / sy) as i64;
            let sweep = 2.0 * r * tube.slope.abs() + 12.0 * tube.radius + 2.5 * r;
            let nx = (sweep / sx) as i64;
            for iy in -ny..=ny {
                let y = iy as f64 * sy;
                let center = tube.c_v - tube.slope * y;
                for ix in -nx..=nx {
                    let x = center + ix as f64 * sx;
                    let val = set.eval(p, [x, y]).norm_sqr();
                    let w = weight_w([x, y], r);
                    let vw = val * w;
                    if (x - center).abs() <= wide {
                        inside += vw;
                    } else {
                        outside += vw;
                    }
                    l6 += vw * val * val * w * w; // |Ef|^6 w^3 ~ L^6(w) with w^3 weight
                    l2w += vw;
                }
            }
            let cell = sx * sy;
            let tail = outside / (inside + outside).max(1e-300);
            // kappa at p = 6: ||Ef_T||_6 <= kappa R^{(1/6-1/2)*3/2} ||Ef_T||_2
            let lp = (l6 * cell).powf(1.0 / 6.0);
            let l2 = (l2w * cell).sqrt();
            let kappa = lp / ((r.powf((1.0 / 6.0 - 0.5) * 1.5)) * l2).max(1e-300);
            (p.theta, p.v, tail, kappa)
        })
        .collect();

    let tail_fractions: Vec<(i64, i64, f64)> = checks.iter().map(|c| (c.0, c.1, c.2)).collect();
    let kappa6: Vec<(i64, i64, f64)> = checks.iter().map(|c| (c.0, c.1, c.3)).collect();
    let pass = grid_rel <= params.tau_rec
        && spatial_rel <= params.tau_rec
        && tail_fractions.iter().all(|&(_, _, t)| t <= params.tau_tail);
    Ok(DecomposeChecks {
        grid_reconstruction_rel: grid_rel,
        spatial_reconstruction_rel: spatial_rel,
        tail_fractions,
        kappa6,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Local L^2 estimate
// ---------------------------------------------------------------------------

/// A shading of packet tubes by `R^{1/2}`-cells: per chosen packet, the list
/// of cell indices `(ix, iy)` with cell `[ix*s, (ix+1)*s) x [iy*s, (iy+1)*s)`,
/// `s = R^{1/2}`.
#[derive(Debug, Clone, Serialize)]
pub struct CellShading {
    pub packet: usize,
    pub cells: Vec<(i64, i64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalL2Outcome {
    pub integral: f64,
    /// `(2 pi)^{n-1} lambda R ||f||_2^2` (the Plancherel constant is kept
    /// explicit rather than absorbed).
    pub reference: f64,
    pub ratio: f64,
    pub lambda: f64,
}

/// Quadrature check of `int_X |sum_T Ef_T 1_{Y(T)}|^2 <~ lambda R ||f||_2^2`.
pub fn local_l2_ratio(
    set: &WavePacketSet,
    shadings: &[CellShading],
    spacing: f64,
) -> Result<LocalL2Outcome> {
    let r = set.r_scale as f64;
    let s = r.sqrt();
    // subordination check and lambda
    let mut lambda_cells = 0usize;
    for sh in shadings {
        let p = &set.packets[sh.packet];
        let tube = set.tube(p);
        for &(ix, iy) in &sh.cells {
            let cx = (ix as f64 + 0.5) * s;
            let cy = (iy as f64 + 0.5) * s;
            let off = (cx - tube.c_v + tube.slope * cy).abs();
            if off > 2.5 * tube.radius {
                return Err(Error::Precondition(format!(
                    "cell ({ix},{iy}) is not subordinate to packet {} (offset {off:.1})",
                    sh.packet
                )));
            }
        }
        lambda_cells = lambda_cells.max(sh.cells.len());
    }
    let lambda = lambda_cells as f64 / s;

    // ||f||^2 of the participating packet sum
    let packet_ids: Vec<usize> = shadings.iter().map(|sh| sh.packet).collect();
    let mut fsum = vec![Complex64::new(0.0, 0.0); set.grid_len];
    for &pi in &packet_ids {
        let p = &set.packets[pi];
        for (j, v) in p.values.iter().enumerate() {
            fsum[p.start + j] += v;
        }
    }
    let f2: f64 = fsum.iter().map(|v| v.norm_sqr()).sum::<f64>() * set.h;

    // union of cells -> contributing packets per cell
    let mut cell_map: std::collections::BTreeMap<(i64, i64), Vec<usize>> = Default::default();
    for sh in shadings {
        for &c in &sh.cells {
            cell_map.entry(c).or_default().push(sh.packet);
        }
    }
    let cells: Vec<((i64, i64), Vec<usize>)> = cell_map.into_iter().collect();
    let per_cell = ((s / spacing) as usize).max(1);
    let integral: f64 = cells
        .par_iter()
        .map(|((ix, iy), pids)| {
            let mut acc = 0.0;
            for gx in 0..per_cell {
                for gy in 0..per_cell {
                    let x = *ix as f64 * s + (gx as f64 + 0.5) * spacing;
                    let y = *iy as f64 * s + (gy as f64 + 0.5) * spacing;
                    acc += set.eval_sum(pids, [x, y]).norm_sqr();
                }
            }
            acc * spacing * spacing
        })
        .sum();

    let reference = std::f64::consts::TAU * lambda.max(1.0 / s) * r * f2;
    Ok(LocalL2Outcome {
        integral,
        reference,
        ratio: integral / reference.max(1e-300),
        lambda,
    })
}

// ---------------------------------------------------------------------------
// Refined decoupling measurement
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct DecouplingOutcome {
    pub m_multiplicity: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub norm_spread: f64,
}

/// Measure `||Ef||_{L^p(X)}^p / (M^{2/(n-1)} sum_T ||Ef_T||_{L^p(w)}^p)` for
/// a comparable packet subset and a union `X` of `R^{1/2}`-cells; p = 6.
pub fn refined_decoupling_ratio(
    set: &WavePacketSet,
    packet_ids: &[usize],
    x_cells: &[(i64, i64)],
    spacing: f64,
) -> Result<DecouplingOutcome> {
    if packet_ids.is_empty() || x_cells.is_empty() {
        return Ok(DecouplingOutcome {
            m_multiplicity: 0,
            lhs: 0.0,
            rhs: 0.0,
            ratio: 0.0,
            norm_spread: 0.0,
        });
    }
    let r = set.r_scale as f64;
    let s = r.sqrt();
    let p = 6.0;

    // per-packet L^p(w) norms over their own tube boxes
    let norms: Vec<f64> = packet_ids
        .par_iter()
        .map(|&pi| {
            let pk = &set.packets[pi];
            let tube = set.tube(pk);
            let (sx, sy) = (2.0, 4.0);
            let ny = (1.5 * r / sy) as i64;
            let nx = (8.0 * tube.radius / sx) as i64;
            let mut acc = 0.0;
            for iy in -ny..=ny {
                let y = iy as f64 * sy;
                let center = tube.c_v - tube.slope * y;
                for ix in -nx..=nx {
                    let x = center + ix as f64 * sx;
                    let v = set.eval(pk, [x, y]).norm();
                    acc += v.powf(p) * weight_w([x, y], r);
                }
            }
            acc * sx * sy
        })
        .collect();
    let max_n = norms.iter().cloned().fold(0.0, f64::max);
    let min_n = norms.iter().cloned().fold(f64::INFINITY, f64::min);
    let norm_spread = if min_n > 0.0 { (max_n / min_n).powf(1.0 / p) } else { f64::INFINITY };
    if norm_spread > 4.0 {
        return Err(Error::Precondition(format!(
            "packet L^p norms spread by {norm_spread:.2}; pre-filter with a dyadic pigeonhole"
        )));
    }

    // multiplicity M over the cells of X
    let mut m = 0u64;
    for &(ix, iy) in x_cells {
        let cx = (ix as f64 + 0.5) * s;
        let cy = (iy as f64 + 0.5) * s;
        let count = packet_ids
            .iter()
            .filter(|&&pi| {
                let t = set.tube(&set.packets[pi]);
                (cx - t.c_v + t.slope * cy).abs() <= 1.5 * t.radius
            })
            .count() as u64;
        m = m.max(count);
    }

    // ||Ef||_p^p over X
    let per_cell = ((s / spacing) as usize).max(1);
    let lhs: f64 = x_cells
        .par_iter()
        .map(|&(ix, iy)| {
            let mut acc = 0.0;
            for gx in 0..per_cell {
                for gy in 0..per_cell {
                    let x = ix as f64 * s + (gx as f64 + 0.5) * spacing;
                    let y = iy as f64 * s + (gy as f64 + 0.5) * spacing;
                    acc += set.eval_sum(packet_ids, [x, y]).norm().powf(p);
                }
            }
            acc * spacing * spacing
        })
        .sum();

    let rhs = (m.max(1) as f64).powf(2.0) * norms.iter().sum::<f64>();
    Ok(DecouplingOutcome {
        m_multiplicity: m,
        lhs,
        rhs,
        ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 },
        norm_spread,
    })
}

// ---------------------------------------------------------------------------
// Khintchine / Kakeya experiment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct KhintchineOutcome {
    /// `int (sum_theta |Ef_theta|^2)^{p0/2}` by quadrature.
    pub square_function_integral: f64,
    /// Mean over trials of `int |sum a_theta Ef_theta|^{p0}`.
    pub random_sign_mean: f64,
    /// Exact combinatorial `sum_cells |cell| * multiplicity^{p0/2}`.
    pub combinatorial_integral: f64,
    pub r_pow_p0: f64,
    pub trials: u32,
}

/// Random-sign Kakeya surrogate: one packet per cap on a chosen tube
/// position, `f = sum a_theta f_theta` with Rademacher signs.
pub fn khintchine_kakeya_experiment(
    set: &WavePacketSet,
    packet_per_cap: &[usize],
    p0: f64,
    trials: u32,
    seed: u64,
) -> Result<KhintchineOutcome> {
    if packet_per_cap.is_empty() {
        return Err(Error::Domain("no tubes supplied".into()));
    }
    let r = set.r_scale as f64;
    let s = r.sqrt();

    // combinatorial overlap census on R^{1/2}-cells covering B_R
    let half = (r / s).ceil() as i64 + 1;
    let mut comb = 0.0;
    for ix in -half..half {
        for iy in -half..half {
            let cx = (ix as f64 + 0.5) * s;
            let cy = (iy as f64 + 0.5) * s;
            let m = packet_per_cap
                .iter()
                .filter(|&&pi| {
                    let t = set.tube(&set.packets[pi]);
                    (cx - t.c_v + t.slope * cy).abs() <= t.radius
                })
                .count();
            if m > 0 {
                comb += (s * s) * (m as f64).powf(p0 / 2.0);
            }
        }
    }

    // oscillatory part on a coarse grid over B_R
    let spacing = 4.0;
    let half_pts = (r / spacing) as i64;
    let points: Vec<[f64; 2]> = (-half_pts..=half_pts)
        .flat_map(|i| {
            (-half_pts..=half_pts).map(move |j| [i as f64 * spacing, j as f64 * spacing])
        })
        .collect();
    let fields: Vec<Vec<Complex64>> = packet_per_cap
        .par_iter()
        .map(|&pi| {
            points
                .iter()
                .map(|&x| set.eval(&set.packets[pi], x))
                .collect()
        })
        .collect();
    let cell = spacing * spacing;
    let square_function_integral: f64 = (0..points.len())
        .map(|i| {
            let sq: f64 = fields.iter().map(|f| f[i].norm_sqr()).sum();
            sq.powf(p0 / 2.0)
        })
        .sum::<f64>()
        * cell;
    let mut mean = 0.0;
    let mut rgen = rng(seed);
    for _ in 0..trials {
        let signs: Vec<f64> = (0..fields.len())
            .map(|_| if rgen.gen::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let integral: f64 = (0..points.len())
            .map(|i| {
                let v: Complex64 = fields
                    .iter()
                    .zip(&signs)
                    .map(|(f, s)| f[i] * *s)
                    .sum();
                v.norm().powf(p0)
            })
            .sum::<f64>()
            * cell;
        mean += integral;
    }
    mean /= trials.max(1) as f64;

    Ok(KhintchineOutcome {
        square_function_integral,
        random_sign_mean: mean,
        combinatorial_integral: comb,
        r_pow_p0: r.powf(p0),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn const_one(h: f64) -> FrequencyFunction {
        let mut f = FrequencyFunction::zero(2, h).unwrap();
        for v in f.values.iter_mut() {
            *v = Complex64::new(1.0, 0.0);
        }
        f
    }

    #[test]
    fn extension_of_zero_is_zero() {
        let f = FrequencyFunction::zero(2, 1.0 / 640.0).unwrap();
        let out = extension(&f, &[[0.0, 0.0, 0.0], [3.0, 1.0, 0.0]]).unwrap();
        assert!(out.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn extension_of_one_at_origin_is_two() {
        let f = const_one(1.0 / 640.0);
        let out = extension(&f, &[[0.0, 0.0, 0.0]]).unwrap();
        assert!((out[0].re - 2.0).abs() < 1e-9, "{:?}", out[0]);
        assert!(out[0].im.abs() < 1e-12);
    }

    #[test]
    fn extension_matches_refined_quadrature() {
        // f = 1 at the cancellation point (pi, 0); the Euler-Maclaurin
        // boundary term vanishes there and the Richardson pair agrees
        let h = 1.0 / 640.0;
        let f = const_one(h);
        let f2 = const_one(h / 2.0);
        let pt = [[std::f64::consts::PI, 0.0, 0.0]];
        let a = extension(&f, &pt).unwrap();
        let b = extension(&f2, &pt).unwrap();
        assert!((a[0] - b[0]).norm() <= 1e-6, "{} vs {}", a[0], b[0]);
        // closed form: int e^{i pi xi} = 2 sin(pi)/pi = 0
        assert!(a[0].norm() < 1e-5, "{:?}", a[0]);

        // smooth f: trapezoid is spectrally accurate at any resolved point
        let g = FrequencyFunction::random_band_limited(2, h, 9).unwrap();
        // same seed draws the same bumps; only the grid is finer
        let g2 = FrequencyFunction::random_band_limited(2, h / 2.0, 9).unwrap();
        let pts = [[7.3, 11.1, 0.0], [25.0, -13.0, 0.0]];
        let a = extension(&g, &pts).unwrap();
        let b = extension(&g2, &pts).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() <= 1e-6 * y.norm().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn extension_rejects_coarse_grids() {
        let f = const_one(1.0 / 64.0);
        assert!(extension(&f, &[[100.0, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn extension_three_dim_at_origin() {
        let h = 1.0 / 40.0;
        let mut f = FrequencyFunction::zero(3, h).unwrap();
        for v in f.values.iter_mut() {
            *v = Complex64::new(1.0, 0.0);
        }
        let out = extension(&f, &[[0.0, 0.0, 0.0]]).unwrap();
        // integral of 1 over the square [-1,1]^2 (grid covers the square)
        assert!((out[0].re - 4.0).abs() < 1e-9);
    }

    #[test]
    fn cap_windows_partition_unity() {
        let r_c = 1.0 / 16.0;
        for i in 0..=200 {
            let xi = -1.0 + 2.0 * i as f64 / 200.0;
            let mut sum = 0.0;
            for j in -1..=16i64 {
                let c = -1.0 + (2 * j + 1) as f64 * r_c;
                sum += cap_window(xi - c, r_c);
            }
            assert!((sum - 1.0).abs() < 1e-12, "PoU fails at {xi}: {sum}");
        }
    }

    #[test]
    fn decompose_zero_function_is_empty() {
        let f = FrequencyFunction::zero(2, 1.0 / 2560.0).unwrap();
        let set = decompose(&f, 256, &DecomposeParams::default()).unwrap();
        assert!(set.packets.is_empty());
    }

    #[test]
    fn decompose_supports_are_inside_three_caps() {
        let f = FrequencyFunction::random_band_limited(2, 1.0 / 640.0, 5).unwrap();
        let set = decompose(&f, 64, &DecomposeParams::default()).unwrap();
        assert!(!set.packets.is_empty());
        for p in &set.packets {
            let c = set.cap_center(p.theta);
            let lo = -1.0 + p.start as f64 * set.h;
            let hi = -1.0 + (p.start + p.values.len() - 1) as f64 * set.h;
            if p.start > 0 {
                assert!(lo >= c - 3.0 * set.cap_radius - 1e-12);
            }
            if p.start + p.values.len() < set.grid_len {
                assert!(hi <= c + 3.0 * set.cap_radius + 1e-12);
            }
        }
    }

    #[test]
    fn single_bump_concentrates_on_one_packet() {
        // a bump inside one cap, modulated to sit at a chosen translate
        let r_scale = 64u32;
        let h = 1.0 / 640.0;
        let mut f = FrequencyFunction::zero(2, h).unwrap();
        let r_c = 1.0 / 8.0;
        let c_target = -1.0 + 9.0 * r_c; // cap theta = 4
        let v_target = 2i64;
        let c_v = v_target as f64 * 16.0;
        for i in 0..f.dims[0] {
            let xi = f.xi(i);
            let d = (xi - c_target) / (0.55 * r_c);
            f.values[i] =
                (-d * d).exp() * Complex64::new(0.0, -c_v * xi).exp();
        }
        let set = decompose(&f, r_scale, &DecomposeParams::default()).unwrap();
        let total: f64 = set.packets.iter().map(|p| p.mass).sum();
        // the (theta_0, v_0) packet is the single heaviest one
        let argmax = set
            .packets
            .iter()
            .max_by(|a, b| a.mass.partial_cmp(&b.mass).unwrap())
            .unwrap();
        assert_eq!((argmax.theta, argmax.v), (4, v_target));
        // a physical translate cannot be narrower than the window scale
        // R^{1/2}, so "the dominant packet" means the v_0-neighborhood
        let dominant: f64 = set
            .packets
            .iter()
            .filter(|p| p.theta == 4 && (p.v - v_target).abs() <= 2)
            .map(|p| p.mass)
            .sum();
        assert!(
            dominant >= 0.9 * total,
            "dominant packets carry {dominant} of {total}"
        );
    }

    #[test]
    fn verify_random_function_at_r64() {
        let f = FrequencyFunction::random_band_limited(2, 1.0 / 640.0, 11).unwrap();
        let set = decompose(&f, 64, &DecomposeParams::default()).unwrap();
        let checks = verify_decomposition(&f, &set, &DecomposeParams::default()).unwrap();
        assert!(
            checks.pass,
            "decomposition checks failed: {checks:?}"
        );
        for (_, _, kappa) in &checks.kappa6 {
            assert!(*kappa > 0.05 && *kappa < 20.0, "kappa6 {kappa}");
        }
    }

    #[test]
    fn parseval_surrogate_is_stable() {
        let r: f64 = 64.0;
        let mut ratios = Vec::new();
        for seed in 0..3 {
            // the sample box reaches 1.5 R, so the grid must resolve that
            let f = FrequencyFunction::random_band_limited(2, 1.0 / 2560.0, seed).unwrap();
            // ||Ef||^2_{L^2(w_BR)} over a coarse grid
            let spacing = 2.0;
            let half = (1.5 * r / spacing) as i64;
            let pts: Vec<[f64; 3]> = (-half..=half)
                .flat_map(|i| (-half..=half).map(move |j| [i as f64 * spacing, j as f64 * spacing, 0.0]))
                .collect();
            let vals = extension(&f, &pts).unwrap();
            let int: f64 = pts
                .iter()
                .zip(&vals)
                .map(|(p, v)| v.norm_sqr() * weight_w([p[0], p[1]], r))
                .sum::<f64>()
                * spacing
                * spacing;
            ratios.push(int / (r * f.norm2_sq()));
        }
        for r2 in &ratios {
            assert!(*r2 > 1.0 && *r2 < 40.0, "kappa2 {r2}");
        }
        let spread = ratios.iter().cloned().fold(0.0, f64::max)
            / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 3.0, "Parseval surrogate unstable across seeds: {ratios:?}");
    }

    #[test]
    fn cap_packet_orthogonality() {
        let f = FrequencyFunction::random_band_limited(2, 1.0 / 640.0, 4).unwrap();
        let set = decompose(&f, 64, &DecomposeParams::default()).unwrap();
        // per cap: sum of packet masses vs the cap function mass
        for theta in 0..set.cap_count {
            let packet_mass: f64 = set
                .packets
                .iter()
                .filter(|p| p.theta == theta)
                .map(|p| p.mass)
                .sum();
            if packet_mass == 0.0 {
                continue;
            }
            let c = set.cap_center(theta);
            let cap_mass: f64 = (0..f.dims[0])
                .map(|i| {
                    (f.values[i] * cap_window(f.xi(i) - c, set.cap_radius)).norm_sqr()
                })
                .sum::<f64>()
                * f.h;
            let kappa3 = packet_mass / cap_mass.max(1e-300);
            assert!(kappa3 < 4.0, "cap {theta}: kappa3 = {kappa3}");
        }
    }

    #[test]
    fn local_l2_single_packet_and_empty() {
        let f = FrequencyFunction::random_band_limited(2, 1.0 / 640.0, 21).unwrap();
        let set = decompose(&f, 64, &DecomposeParams::default()).unwrap();
        let heaviest = (0..set.packets.len())
            .max_by(|&a, &b| set.packets[a].mass.partial_cmp(&set.packets[b].mass).unwrap())
            .unwrap();
        // Y(T) = the tube's own cells
        let tube = set.tube(&set.packets[heaviest]);
        let s = 8.0;
        let cells: Vec<(i64, i64)> = (-8..8)
            .map(|iy| {
                let y = (iy as f64 + 0.5) * s;
                let cx = tube.c_v - tube.slope * y;
                ((cx / s).floor() as i64, iy)
            })
            .collect();
        let out = local_l2_ratio(
            &set,
            &[CellShading {
                packet: heaviest,
                cells,
            }],
            1.0,
        )
        .unwrap();
        assert!(out.ratio <= 1.1, "single packet ratio {out:?}");

        let empty = local_l2_ratio(&set, &[], 1.0).unwrap();
        assert_eq!(empty.integral, 0.0);
    }

    #[test]
    fn binary_grid_roundtrip() {
        let f = FrequencyFunction::random_band_limited(2, 1.0 / 160.0, 3).unwrap();
        let dir = std::env::temp_dir().join(format!("flab-wp-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("f.grid");
        f.write_binary(16, &path).unwrap();
        let (g, r) = FrequencyFunction::read_binary(&path).unwrap();
        assert_eq!(r, 16);
        assert_eq!(g.dims, f.dims);
        for (a, b) in f.values.iter().zip(&g.values) {
            assert!((a.re as f32 - b.re as f32).abs() == 0.0);
            assert!((a.im as f32 - b.im as f32).abs() == 0.0);
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
