//! Exact-rational exponent arithmetic: restriction exponents, Kakeya
//! numerology, interpolation identities, multiplicity thresholds, and the
//! conjectured Furstenberg exponents.
//!
//! Everything here is exact `Ratio<i128>` arithmetic; floats never enter.
//! Conjecture-grade formulas are tagged so reports cannot silently cite them
//! as theorems.

use crate::rat::{q, q_frac, Q};
use crate::{Error, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Grade {
    Theorem,
    Conjecture,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExponentValue {
    pub value: Q,
    pub branch: Option<String>,
    pub grade: Grade,
}

/// Restriction exponent p(n): `22/7` in three dimensions, `(154n+6)/(77n-95)`
/// for n >= 4. Also returns the residual against the asymptotic form
/// `2 + 28/(11 n)`.
pub fn p_of_n(n: u32) -> Result<(Q, Q)> {
    match n {
        0..=2 => Err(Error::Domain(
            "p(n) needs n >= 3; the planar exponent p >= 4 is reported separately".into(),
        )),
        3 => {
            let p = q_frac(22, 7);
            let asym = q(2) + q_frac(28, 33);
            Ok((p, p - asym))
        }
        _ => {
            let n = n as i128;
            let p = q_frac(154 * n + 6, 77 * n - 95);
            let asym = q(2) + q_frac(28, 11 * n);
            Ok((p, p - asym))
        }
    }
}

/// The planar restriction exponent.
pub fn planar_exponent() -> Q {
    q(4)
}

/// Kakeya dimension implied by a restriction exponent in three dimensions:
/// `s(p0) = (6 - p0)/(p0 - 2)` for `p0 in (2, 6)`.
pub fn kakeya_dim_from_restriction(p0: Q) -> Result<Q> {
    if p0 <= q(2) || p0 >= q(6) {
        return Err(Error::Domain(format!("p0={p0} outside (2,6)")));
    }
    Ok((q(6) - p0) / (p0 - q(2)))
}

/// Inverse of `kakeya_dim_from_restriction`: `p0(s) = (6 + 2s)/(1 + s)`.
pub fn restriction_from_kakeya_dim(s: Q) -> Result<Q> {
    if s <= q(0) {
        return Err(Error::Domain(format!("s={s} must be positive")));
    }
    Ok((q(6) + q(2) * s) / (q(1) + s))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub enum HolderSpec {
    /// Explicit weights (w1, w2 = 1 - w1).
    Weights(Q),
    /// Solve for the weights that hit a target combined exponent.
    TargetExponent(Q),
    /// Solve for the weights that hit a target p.
    TargetP(Q),
}

#[derive(Debug, Clone, Serialize)]
pub struct HolderResult {
    pub p: Q,
    pub exponent: Q,
    pub w1: Q,
    pub w2: Q,
}

/// Holder interpolation of two estimates `(p_i, e_i)` (e.g. powers of
/// `lambda R`): `p = w1 p1 + w2 p2`, combined exponent `w1 e1 + w2 e2`.
pub fn interpolate_holder(p1: Q, e1: Q, p2: Q, e2: Q, spec: HolderSpec) -> Result<HolderResult> {
    if p1 == p2 {
        return Err(Error::Domain("interpolation requires p1 != p2".into()));
    }
    let w1 = match spec {
        HolderSpec::Weights(w1) => w1,
        HolderSpec::TargetExponent(target) => {
            if e1 == e2 {
                return Err(Error::Domain("constant exponent cannot hit a different target".into()));
            }
            (target - e2) / (e1 - e2)
        }
        HolderSpec::TargetP(target) => (target - p2) / (p1 - p2),
    };
    let w2 = q(1) - w1;
    if w1 < q(0) || w1 > q(1) {
        return Err(Error::Domain(format!("infeasible target: weight w1={w1} outside [0,1]")));
    }
    Ok(HolderResult {
        p: w1 * p1 + w2 * p2,
        exponent: w1 * e1 + w2 * e2,
        w1,
        w2,
    })
}

/// The exponent regimes the lab evaluates.
#[derive(Debug, Clone, Copy, Serialize)]
pub enum Regime {
    /// Planar Furstenberg estimate: union measure `lambda delta *
    /// delta^{-min{t, (s+t)/2, 1}}`.
    PlanarFurstenberg { s: Q, t: Q },
    /// Two-ends union bound `lambda^{(n-1)/2}`.
    TwoEndsDensityPower { n: u32 },
    /// Three-dimensional Furstenberg conjecture: covering exponent
    /// `min{s + 2t, t + 2s, 2 + s}`.
    FurstenbergThreeD { s: Q, t: Q },
    /// n-dimensional version: `min{s + (n-1)t, (n-1)t/2 + (n+1)s/2, n-1+s}`.
    FurstenbergN { n: u32, s: Q, t: Q },
}

/// Evaluate a regime's exponent with the argmin branch labeled.
pub fn furstenberg_exponent(regime: Regime) -> Result<ExponentValue> {
    let min3 = |branches: [(Q, &str); 3]| {
        let mut best = branches[0];
        for b in &branches[1..] {
            if b.0 < best.0 {
                best = *b;
            }
        }
        (best.0, best.1.to_string())
    };
    match regime {
        Regime::PlanarFurstenberg { s, t } => {
            check_range(s, q(0), q(1), "s")?;
            check_range(t, q(0), q(2), "t")?;
            let (v, b) = min3([
                (t, "tube-count branch"),
                ((s + t) / q(2), "mixed branch"),
                (q(1), "full-dimension branch"),
            ]);
            Ok(ExponentValue {
                value: v,
                branch: Some(b),
                grade: Grade::Theorem,
            })
        }
        Regime::TwoEndsDensityPower { n } => {
            if n < 2 {
                return Err(Error::Domain("n >= 2".into()));
            }
            Ok(ExponentValue {
                value: q_frac(n as i128 - 1, 2),
                branch: None,
                grade: Grade::Conjecture,
            })
        }
        Regime::FurstenbergThreeD { s, t } => {
            check_range(s, q(0), q(3), "s")?;
            check_range(t, q(0), q(2), "t")?;
            let (v, b) = min3([
                (s + q(2) * t, "lattice branch"),
                (t + q(2) * s, "bush branch"),
                (q(2) + s, "hyperplane branch"),
            ]);
            Ok(ExponentValue {
                value: v,
                branch: Some(b),
                grade: Grade::Conjecture,
            })
        }
        Regime::FurstenbergN { n, s, t } => {
            if n < 2 {
                return Err(Error::Domain("n >= 2".into()));
            }
            check_range(t, q(0), q(2), "t")?;
            let nn = q(n as i128);
            let (v, b) = min3([
                (s + (nn - q(1)) * t, "lattice branch"),
                ((nn - q(1)) * t / q(2) + (nn + q(1)) * s / q(2), "bush branch"),
                (nn - q(1) + s, "hyperplane branch"),
            ]);
            Ok(ExponentValue {
                value: v,
                branch: Some(b),
                grade: Grade::Conjecture,
            })
        }
    }
}

fn check_range(v: Q, lo: Q, hi: Q, name: &str) -> Result<()> {
    if v <= lo || v > hi {
        return Err(Error::Domain(format!("{name}={v} outside ({lo}, {hi}]")));
    }
    Ok(())
}

/// Which excision threshold a configuration calls for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MuRule {
    /// n=3 hairbrush-based: `mu = delta^{-2 eps1} m lambda^{-3/4} delta^{-1/2}`.
    HairbrushThreeD,
    /// General n bush-based: `mu = delta^{-2 eps1} m delta^{-(n-1)/2}`.
    BushGeneral,
    /// General n, dense regime `lambda >= delta^{1/4}`:
    /// `mu = delta^{-2 eps1} m lambda^{-(2n+7)/7} delta^{-(3n-3)/7}`.
    DenseGeneral,
}

#[derive(Debug, Clone, Serialize)]
pub struct MuThreshold {
    pub rule: MuRule,
    /// Exponent of delta in `mu / m` with `lambda = delta^{lambda_exp}`.
    pub delta_exponent: Q,
}

impl MuThreshold {
    /// Numeric value at `delta = 2^-k` with parallelism `m`.
    pub fn value(&self, k: u32, m: u64) -> f64 {
        let e = crate::rat::q_to_f64(self.delta_exponent);
        m as f64 * (-(k as f64) * e).exp2()
    }
}

/// The excision thresholds, as exact delta-exponents. The `lambda` vs
/// `delta^{1/4}` case split for the general rule is applied automatically.
pub fn mu_thresholds(n: u32, lambda_exp: Q, eps1: Q) -> Result<Vec<MuThreshold>> {
    if lambda_exp < q(0) {
        return Err(Error::Domain("lambda <= 1 required (exponent >= 0)".into()));
    }
    let mut out = Vec::new();
    if n == 3 {
        out.push(MuThreshold {
            rule: MuRule::HairbrushThreeD,
            delta_exponent: -q(2) * eps1 - q_frac(3, 4) * lambda_exp - q_frac(1, 2),
        });
    }
    let nn = n as i128;
    out.push(MuThreshold {
        rule: MuRule::BushGeneral,
        delta_exponent: -q(2) * eps1 - q_frac(nn - 1, 2),
    });
    if lambda_exp <= q_frac(1, 4) {
        out.push(MuThreshold {
            rule: MuRule::DenseGeneral,
            delta_exponent: -q(2) * eps1 - q_frac(2 * nn + 7, 7) * lambda_exp - q_frac(3 * nn - 3, 7),
        });
    }
    Ok(out)
}

/// All named exponents for a parameter tuple, for the CLI table.
pub fn exponent_table(n: u32, s: Q, t: Q, lambda_exp: Q, p0: Q) -> Vec<(String, String, Grade)> {
    let mut rows: Vec<(String, String, Grade)> = Vec::new();
    if let Ok((p, residual)) = p_of_n(n) {
        rows.push(("p(n)".into(), format!("{p} (residual vs 2+28/(11n): {residual})"), Grade::Theorem));
    }
    if let Ok(s_k) = kakeya_dim_from_restriction(p0) {
        rows.push((format!("kakeya dim s({p0})"), format!("{s_k}"), Grade::Theorem));
    }
    if let Ok(v) = furstenberg_exponent(Regime::PlanarFurstenberg { s, t }) {
        rows.push((
            "planar furstenberg min{t,(s+t)/2,1}".into(),
            format!("{} [{}]", v.value, v.branch.unwrap_or_default()),
            Grade::Theorem,
        ));
    }
    if let Ok(v) = furstenberg_exponent(Regime::FurstenbergThreeD { s, t }) {
        rows.push((
            "3d furstenberg min{s+2t,t+2s,2+s}".into(),
            format!("{} [{}]", v.value, v.branch.unwrap_or_default()),
            Grade::Conjecture,
        ));
    }
    if let Ok(v) = furstenberg_exponent(Regime::FurstenbergN { n, s, t }) {
        rows.push((
            "n-dim furstenberg".into(),
            format!("{} [{}]", v.value, v.branch.unwrap_or_default()),
            Grade::Conjecture,
        ));
    }
    if let Ok(v) = furstenberg_exponent(Regime::TwoEndsDensityPower { n }) {
        rows.push(("two-ends density power (n-1)/2".into(), format!("{}", v.value), Grade::Conjecture));
    }
    if let Ok(mus) = mu_thresholds(n, lambda_exp, q(0)) {
        for mu in mus {
            rows.push((
                format!("mu threshold {:?} (eps1=0)", mu.rule),
                format!("delta^({})", mu.delta_exponent),
                Grade::Theorem,
            ));
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_of_three_is_twentytwo_sevenths() {
        let (p, _) = p_of_n(3).unwrap();
        assert_eq!(p, q_frac(22, 7));
    }

    #[test]
    fn p_of_four_exact() {
        let (p, _) = p_of_n(4).unwrap();
        assert_eq!(p, q_frac(622, 213));
    }

    #[test]
    fn asymptotic_coefficient() {
        // p(n) = 2 + 196/(77n - 95) and the residual against 2 + 28/(11n) is
        // exactly 2660 / (11n (77n - 95)), an O(n^-2) term: the asymptotic
        // coefficient is 28/11.
        for n in 4..=20u32 {
            let (p, residual) = p_of_n(n).unwrap();
            let nn = n as i128;
            assert_eq!(p, q(2) + q_frac(196, 77 * nn - 95));
            assert_eq!(residual, q_frac(2660, 11 * nn * (77 * nn - 95)));
        }
    }

    #[test]
    fn kakeya_dim_examples() {
        assert_eq!(kakeya_dim_from_restriction(q_frac(22, 7)).unwrap(), q_frac(5, 2));
        assert_eq!(kakeya_dim_from_restriction(q_frac(16, 5)).unwrap(), q_frac(7, 3));
        assert!(kakeya_dim_from_restriction(q(6)).is_err());
    }

    #[test]
    fn kakeya_dim_roundtrip() {
        for (num, den) in [(5i128, 2i128), (7, 3), (1, 1), (12, 5)] {
            let s = q_frac(num, den);
            let p = restriction_from_kakeya_dim(s).unwrap();
            assert_eq!(kakeya_dim_from_restriction(p).unwrap(), s);
        }
    }

    #[test]
    fn holder_interpolation_examples() {
        // l4/l2 with weights (4/7, 3/7) lands at p = 22/7
        let r = interpolate_holder(q(4), q_frac(-3, 4), q(2), q(1), HolderSpec::Weights(q_frac(4, 7)))
            .unwrap();
        assert_eq!(r.p, q_frac(22, 7));
        // l6/l2 at weights (1/2, 1/2) lands at p = 4
        let r = interpolate_holder(q(6), q(-1), q(2), q(1), HolderSpec::Weights(q_frac(1, 2))).unwrap();
        assert_eq!(r.p, q(4));
        assert_eq!(r.exponent, q(0));
        // identity weights
        let r = interpolate_holder(q(6), q(-1), q(2), q(1), HolderSpec::Weights(q(1))).unwrap();
        assert_eq!(r.p, q(6));
    }

    #[test]
    fn case_one_parameters_reproduce_p_n() {
        // interpolation between p=2 (exponent from L2) and the decoupling
        // endpoint p_n = 2(n+1)/(n-1) with weight t = 49(n-1)/(77n-95) on the
        // endpoint reproduces p(n) exactly
        for n in 4..=12i128 {
            let p_n = q_frac(2 * (n + 1), n - 1);
            let t = q_frac(49 * (n - 1), 77 * n - 95);
            let r = interpolate_holder(p_n, q(0), q(2), q(0), HolderSpec::Weights(t)).unwrap();
            let (p, _) = p_of_n(n as u32).unwrap();
            assert_eq!(r.p, p, "n={n}");
        }
    }

    #[test]
    fn furstenberg_symmetric_ties() {
        let v = furstenberg_exponent(Regime::PlanarFurstenberg { s: q(1), t: q(1) }).unwrap();
        assert_eq!(v.value, q(1));
        let v = furstenberg_exponent(Regime::FurstenbergThreeD { s: q(1), t: q(1) }).unwrap();
        assert_eq!(v.value, q(3));
        assert_eq!(v.grade, Grade::Conjecture);
    }

    #[test]
    fn furstenberg_n_branch_selection() {
        let v = furstenberg_exponent(Regime::FurstenbergN {
            n: 4,
            s: q_frac(1, 2),
            t: q(1),
        })
        .unwrap();
        assert_eq!(v.value, q_frac(11, 4));
        assert_eq!(v.branch.unwrap(), "bush branch");
    }

    #[test]
    fn mu_threshold_examples() {
        // n=3, lambda = delta^{1/2}, eps1 = 0: hairbrush exponent -7/8
        let mus = mu_thresholds(3, q_frac(1, 2), q(0)).unwrap();
        let hb = mus.iter().find(|m| m.rule == MuRule::HairbrushThreeD).unwrap();
        assert_eq!(hb.delta_exponent, q_frac(-7, 8));
        // lambda = 1: mu = m delta^{-1/2}
        let mus = mu_thresholds(3, q(0), q(0)).unwrap();
        let hb = mus.iter().find(|m| m.rule == MuRule::HairbrushThreeD).unwrap();
        assert_eq!(hb.delta_exponent, q_frac(-1, 2));
        // n=5, lambda = delta^{1/8}: dense branch present (lambda >= delta^{1/4})
        let mus = mu_thresholds(5, q_frac(1, 8), q(0)).unwrap();
        assert!(mus.iter().any(|m| m.rule == MuRule::DenseGeneral));
        // n=5, lambda = delta^{1/2}: dense branch absent
        let mus = mu_thresholds(5, q_frac(1, 2), q(0)).unwrap();
        assert!(!mus.iter().any(|m| m.rule == MuRule::DenseGeneral));
    }

    #[test]
    fn mu_numeric_value() {
        let mus = mu_thresholds(3, q_frac(1, 2), q_frac(3, 10)).unwrap();
        let hb = mus.iter().find(|m| m.rule == MuRule::HairbrushThreeD).unwrap();
        // exponent = -0.6 - 3/8 - 1/2 = -1.475; at k=5, m=1: 2^(5*1.475)
        let v = hb.value(5, 1);
        assert!((v - (5.0f64 * 1.475).exp2()).abs() < 1e-9);
    }
}
