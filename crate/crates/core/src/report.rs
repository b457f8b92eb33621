//! Verification reports shared by every check.

use std::fmt;

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Pass,
    Fail,
    /// Empirical-constant estimate; never affects the exit status.
    Info,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Info => "INFO",
        })
    }
}

/// Both sides of an inequality (or identity) with its verdict.
///
/// `rhs` already includes `constant_used`; `margin = rhs - lhs`, and the
/// check passes when `margin >= -tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub inequality_id: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub constant_used: f64,
    pub best_constant_estimate: f64,
    pub tolerance: f64,
    pub status: Status,
    pub inputs_digest: String,
    /// Named auxiliary quantities, in insertion order.
    pub details: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn inequality(id: impl Into<String>, lhs: f64, rhs: f64, constant_used: f64, tolerance: f64) -> Self {
        let margin = rhs - lhs;
        let status = if margin >= -tolerance { Status::Pass } else { Status::Fail };
        VerificationReport {
            inequality_id: id.into(),
            lhs,
            rhs,
            margin,
            constant_used,
            best_constant_estimate: f64::NAN,
            tolerance,
            status,
            inputs_digest: String::new(),
            details: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Two-sided check `|lhs - rhs| <= tolerance`; `margin` is `tolerance - |lhs - rhs|`.
    pub fn identity(id: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let mut r = Self::inequality(id, lhs, rhs, 1.0, tolerance);
        let residual = (lhs - rhs).abs();
        r.margin = tolerance - residual;
        r.status = if residual <= tolerance { Status::Pass } else { Status::Fail };
        r
    }

    /// Marks the report as an empirical estimate.
    pub fn informational(mut self) -> Self {
        self.status = Status::Info;
        self
    }

    pub fn with_best(mut self, best: f64) -> Self {
        self.best_constant_estimate = best;
        self
    }

    pub fn with_digest(mut self, digest: impl Into<String>) -> Self {
        self.inputs_digest = digest.into();
        self
    }

    pub fn detail(mut self, name: impl Into<String>, value: f64) -> Self {
        self.details.push((name.into(), value));
        self
    }

    pub fn note(mut self, text: impl Into<String>) -> Self {
        self.notes.push(text.into());
        self
    }

    /// Downgrades to FAIL when `ok` is false (for auxiliary conditions).
    pub fn require(mut self, ok: bool, why: impl Into<String>) -> Self {
        if !ok && self.status != Status::Info {
            self.status = Status::Fail;
            self.notes.push(why.into());
        }
        self
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }

    pub fn gates(&self) -> bool {
        self.status != Status::Info
    }

    pub fn detail_value(&self, name: &str) -> Option<f64> {
        self.details.iter().find(|(k, _)| k == name).map(|&(_, v)| v)
    }
}

/// Short hash of several input digests, order-sensitive.
pub fn combine_digests<S: AsRef<str>>(parts: &[S]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_ref().as_bytes());
        h.update([0u8]);
    }
    hex::encode(&h.finalize()[..8])
}
