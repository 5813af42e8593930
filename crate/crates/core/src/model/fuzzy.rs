//! T-norm / t-conorm families and their (sub)gradients.
//!
//! At non-differentiable points the left branch is taken: `min(p, q)` picks
//! `p` when `p <= q`, `max(p, q)` picks `p` when `p >= q`.
//!
//! The product operators are clamped to the interval spanned by the Goedel
//! and Lukasiewicz operators. The clamp is the identity in exact arithmetic
//! and keeps the pointwise ordering of the families exact in floating point.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OperatorFamily {
    #[default]
    Product,
    Lukasiewicz,
    Goedel,
}

impl OperatorFamily {
    pub const ALL: [OperatorFamily; 3] = [OperatorFamily::Product, OperatorFamily::Lukasiewicz, OperatorFamily::Goedel];

    pub fn as_str(self) -> &'static str {
        match self {
            OperatorFamily::Product => "product",
            OperatorFamily::Lukasiewicz => "lukasiewicz",
            OperatorFamily::Goedel => "goedel",
        }
    }

    /// Disjunction (t-conorm).
    pub fn or(self, a: f64, b: f64) -> f64 {
        match self {
            OperatorFamily::Product => {
                let lo = OperatorFamily::Goedel.or(a, b);
                let hi = OperatorFamily::Lukasiewicz.or(a, b);
                (a + b - a * b).max(lo).min(hi)
            }
            OperatorFamily::Lukasiewicz => {
                if 1.0 <= a + b {
                    1.0
                } else {
                    a + b
                }
            }
            OperatorFamily::Goedel => {
                if a >= b {
                    a
                } else {
                    b
                }
            }
        }
    }

    /// Conjunction (t-norm).
    pub fn and(self, a: f64, b: f64) -> f64 {
        match self {
            OperatorFamily::Product => {
                let lo = OperatorFamily::Lukasiewicz.and(a, b);
                let hi = OperatorFamily::Goedel.and(a, b);
                (a * b).max(lo).min(hi)
            }
            OperatorFamily::Lukasiewicz => {
                let v = luk_and_sum(a, b);
                if 0.0 >= v {
                    0.0
                } else {
                    v
                }
            }
            OperatorFamily::Goedel => {
                if a <= b {
                    a
                } else {
                    b
                }
            }
        }
    }

    /// Partial derivatives of [`or`](Self::or) with respect to `a` and `b`.
    pub fn or_grad(self, a: f64, b: f64) -> (f64, f64) {
        match self {
            OperatorFamily::Product => (1.0 - b, 1.0 - a),
            OperatorFamily::Lukasiewicz => {
                if 1.0 <= a + b {
                    (0.0, 0.0)
                } else {
                    (1.0, 1.0)
                }
            }
            OperatorFamily::Goedel => {
                if a >= b {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            }
        }
    }

    pub fn and_grad(self, a: f64, b: f64) -> (f64, f64) {
        match self {
            OperatorFamily::Product => (b, a),
            OperatorFamily::Lukasiewicz => {
                if 0.0 >= luk_and_sum(a, b) {
                    (0.0, 0.0)
                } else {
                    (1.0, 1.0)
                }
            }
            OperatorFamily::Goedel => {
                if a <= b {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            }
        }
    }

    /// Distance from `(a, b)` to the nearest kink of this family's operators.
    pub fn kink_distance(self, a: f64, b: f64) -> f64 {
        match self {
            OperatorFamily::Product => f64::INFINITY,
            OperatorFamily::Lukasiewicz => (a + b - 1.0).abs(),
            OperatorFamily::Goedel => (a - b).abs(),
        }
    }
}

/// `a + b - 1`, evaluated as `min - (1 - max)` so that it is symmetric and
/// returns `a` exactly when `b = 1`.
fn luk_and_sum(a: f64, b: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    lo - (1.0 - hi)
}

impl std::str::FromStr for OperatorFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "product" => Ok(OperatorFamily::Product),
            "lukasiewicz" | "łukasiewicz" => Ok(OperatorFamily::Lukasiewicz),
            "goedel" | "godel" | "gödel" => Ok(OperatorFamily::Goedel),
            other => Err(format!("unknown operator family `{other}`")),
        }
    }
}
