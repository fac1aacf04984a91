use std::fmt;
use std::str::FromStr;

/// The two commutative semirings the solvers work over.
///
/// Both share the carrier `[0, +inf]`, the multiplicative identity 1 and the
/// additive identity 0. They differ only in the additive operation: `Real`
/// sums, `Viterbi` takes the maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Semiring {
    #[default]
    Real,
    Viterbi,
}

impl Semiring {
    pub const fn zero(self) -> f64 {
        0.0
    }

    pub const fn one(self) -> f64 {
        1.0
    }

    #[inline]
    pub fn add(self, a: f64, b: f64) -> f64 {
        match self {
            Semiring::Real => a + b,
            Semiring::Viterbi => a.max(b),
        }
    }

    /// Multiplication with the measure-theoretic convention `0 * inf = 0`.
    #[inline]
    pub fn mul(self, a: f64, b: f64) -> f64 {
        if a == 0.0 || b == 0.0 {
            0.0
        } else {
            a * b
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Semiring::Real => "real",
            Semiring::Viterbi => "viterbi",
        }
    }
}

impl fmt::Display for Semiring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Semiring {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(Semiring::Real),
            "viterbi" => Ok(Semiring::Viterbi),
            other => Err(format!("unknown semiring `{other}` (expected real or viterbi)")),
        }
    }
}
