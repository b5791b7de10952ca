//! Signed margins of inequality checks.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_margin(margin: f64, tol: f64) -> Verdict {
        if margin >= -tol {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        }
    }
}

/// Where a margin was attained.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub s: Option<f64>,
    pub t: Option<f64>,
    /// Interior time for time-integrated checks.
    pub r: Option<f64>,
    pub x: Option<usize>,
    pub y: Option<usize>,
    /// Test function identifier(s).
    pub function: Option<String>,
    pub alpha: Option<f64>,
}

impl Witness {
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                parts.push(format!("{k}={v}"));
            }
        };
        push("s", self.s.map(|v| format!("{v}")));
        push("t", self.t.map(|v| format!("{v}")));
        push("r", self.r.map(|v| format!("{v}")));
        push("x", self.x.map(|v| v.to_string()));
        push("y", self.y.map(|v| v.to_string()));
        push("u", self.function.clone());
        push("alpha", self.alpha.map(|v| format!("{v}")));
        parts.join(";")
    }
}

/// Minimum of `RHS - LHS` over an evaluation grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub id: String,
    pub margin: f64,
    pub witness: Witness,
    pub tol: f64,
    pub verdict: Verdict,
    /// Description of what was scanned.
    pub grid: String,
    /// Number of scalar comparisons behind the minimum.
    pub evaluations: usize,
}

impl CheckReport {
    pub fn new(id: impl Into<String>, margin: f64, witness: Witness, tol: f64, grid: impl Into<String>, evaluations: usize) -> Self {
        CheckReport {
            id: id.into(),
            margin,
            witness,
            tol,
            verdict: Verdict::from_margin(margin, tol),
            grid: grid.into(),
            evaluations,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Combines two reports of the same check, keeping the smaller margin;
    /// ties keep `self`.
    pub fn merge(mut self, other: CheckReport) -> CheckReport {
        let evaluations = self.evaluations + other.evaluations;
        if other.margin < self.margin {
            self = CheckReport {
                evaluations,
                ..other
            };
        } else {
            self.evaluations = evaluations;
        }
        self.verdict = Verdict::from_margin(self.margin, self.tol);
        self
    }
}
