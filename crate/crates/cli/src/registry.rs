//! Experiment registry: which experiments exist, what grade of statement
//! they check, and which subcommand family they belong to. Assert mode is
//! only legal for theorem-grade checkers; conjecture-grade formulas run as
//! counterexample hunters in search mode.

use crate::config::ModeArg;
use flab_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grade {
    Theorem,
    Measurement,
    Conjecture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Incidence,
    Fourier,
}

pub struct Entry {
    pub name: &'static str,
    pub grade: Grade,
    pub kind: Kind,
    pub about: &'static str,
}

pub const REGISTRY: &[Entry] = &[
    Entry {
        name: "two_ends_furstenberg_2d",
        grade: Grade::Theorem,
        kind: Kind::Incidence,
        about: "planar two-ends union lower bound",
    },
    Entry {
        name: "hairbrush_3d",
        grade: Grade::Theorem,
        kind: Kind::Incidence,
        about: "3D hairbrush union lower bound",
    },
    Entry {
        name: "bush_nd",
        grade: Grade::Theorem,
        kind: Kind::Incidence,
        about: "bush union lower bound, any dimension",
    },
    Entry {
        name: "excision",
        grade: Grade::Theorem,
        kind: Kind::Incidence,
        about: "high-multiplicity excision removes a small fraction",
    },
    Entry {
        name: "lattice_numerology",
        grade: Grade::Theorem,
        kind: Kind::Incidence,
        about: "lattice incidence exponent fit",
    },
    Entry {
        name: "well_spaced_census",
        grade: Grade::Theorem,
        kind: Kind::Incidence,
        about: "rich-cell census of well-spaced tubes",
    },
    Entry {
        name: "sums_diffs",
        grade: Grade::Theorem,
        kind: Kind::Incidence,
        about: "sums-and-differences projection identities and growth",
    },
    Entry {
        name: "six_slice",
        grade: Grade::Measurement,
        kind: Kind::Incidence,
        about: "six-slice projection experiment",
    },
    Entry {
        name: "convex_wolff",
        grade: Grade::Conjecture,
        kind: Kind::Incidence,
        about: "convex-Wolff deficiency search",
    },
    Entry {
        name: "furstenberg_exponents",
        grade: Grade::Conjecture,
        kind: Kind::Incidence,
        about: "conjectured union exponents vs measured unions",
    },
    Entry {
        name: "wave_packets",
        grade: Grade::Theorem,
        kind: Kind::Fourier,
        about: "decomposition reconstruction/tail/support checks",
    },
    Entry {
        name: "local_l2",
        grade: Grade::Measurement,
        kind: Kind::Fourier,
        about: "local L2 shading estimate ratio",
    },
    Entry {
        name: "refined_decoupling",
        grade: Grade::Measurement,
        kind: Kind::Fourier,
        about: "refined decoupling ratio harness",
    },
    Entry {
        name: "khintchine",
        grade: Grade::Measurement,
        kind: Kind::Fourier,
        about: "random-sign Kakeya surrogate",
    },
];

pub fn lookup(name: &str) -> Result<&'static Entry> {
    REGISTRY
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::Config(format!("unknown experiment {name:?}; see `flab report --list`")))
}

pub fn validate_mode(entry: &Entry, mode: ModeArg) -> Result<()> {
    if mode == ModeArg::Assert && entry.grade != Grade::Theorem {
        return Err(Error::Config(format!(
            "mode=assert is only legal for theorem-grade checkers; {} is {:?}-grade",
            entry.name, entry.grade
        )));
    }
    Ok(())
}
