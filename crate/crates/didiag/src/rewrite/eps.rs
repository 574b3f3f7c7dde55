//! Symbolic error budgets and their numeric evaluation.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One summand of a budget.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "atom", rename_all = "snake_case", deny_unknown_fields)]
pub enum Atom {
    /// `func(scale · base)`, e.g. `eps(2,N)` for ε(2N).
    Eps { func: String, scale: u64, base: String },
    /// `√(2 · inner)`.
    Sqrt2Eps { inner: EpsExpr },
    Const { value: f64 },
    /// `Σ_{i≥0} func(2^i · base)`.
    Series { func: String, base: String },
}

impl Atom {
    fn rank(&self) -> u8 {
        match self {
            Atom::Eps { .. } => 0,
            Atom::Series { .. } => 1,
            Atom::Sqrt2Eps { .. } => 2,
            Atom::Const { .. } => 3,
        }
    }
}

impl PartialEq for Atom {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Atom {}

impl PartialOrd for Atom {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Atom {
    fn cmp(&self, other: &Self) -> Ordering {
        use Atom::*;
        match (self, other) {
            (Eps { func: f, scale: s, base: b }, Eps { func: g, scale: t, base: c }) => (f, b, s).cmp(&(g, c, t)),
            (Series { func: f, base: b }, Series { func: g, base: c }) => (f, b).cmp(&(g, c)),
            (Sqrt2Eps { inner: a }, Sqrt2Eps { inner: b }) => a.cmp(b),
            (Const { value: a }, Const { value: b }) => a.total_cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Eps { func, scale, base } => write!(f, "{func}({scale},{base})"),
            Atom::Sqrt2Eps { inner } => write!(f, "sqrt(2*({inner}))"),
            Atom::Const { value } => write!(f, "{value}"),
            Atom::Series { func, base } => write!(f, "series({func},{base})"),
        }
    }
}

/// A budget: a multiset of atoms kept sorted, so equality is symbolic equality.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsExpr {
    terms: Vec<Atom>,
}

impl EpsExpr {
    pub fn zero() -> Self {
        EpsExpr::default()
    }

    pub fn atom(a: Atom) -> Self {
        EpsExpr { terms: vec![a] }
    }

    pub fn eps(scale: u64, base: &str) -> Self {
        Self::atom(Atom::Eps { func: "eps".into(), scale, base: base.into() })
    }

    pub fn delta(scale: u64, base: &str) -> Self {
        Self::atom(Atom::Eps { func: "delta".into(), scale, base: base.into() })
    }

    pub fn constant(value: f64) -> Self {
        if value == 0.0 {
            Self::zero()
        } else {
            Self::atom(Atom::Const { value })
        }
    }

    pub fn series(func: &str, base: &str) -> Self {
        Self::atom(Atom::Series { func: func.into(), base: base.into() })
    }

    pub fn sqrt2(inner: EpsExpr) -> Self {
        Self::atom(Atom::Sqrt2Eps { inner })
    }

    /// `Σ_{i=0}^{n-1} eps(2^i, base)`.
    pub fn gamma(base: &str, n: u32) -> Self {
        (0..n).fold(Self::zero(), |acc, i| acc.plus(&Self::eps(1 << i, base)))
    }

    pub fn terms(&self) -> &[Atom] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn plus(&self, other: &EpsExpr) -> EpsExpr {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        terms.sort();
        EpsExpr { terms }
    }
}

impl std::ops::Add for EpsExpr {
    type Output = EpsExpr;
    fn add(self, rhs: EpsExpr) -> EpsExpr {
        self.plus(&rhs)
    }
}

impl fmt::Display for EpsExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self.terms.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// A concrete error function of one argument.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum EpsFn {
    /// `c · 2^{-a x}`
    Exp2 { c: f64, a: f64 },
    /// `c · x^{-p}`
    InversePower { c: f64, p: f64 },
    Constant { c: f64 },
}

impl EpsFn {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            EpsFn::Exp2 { c, a } => c * (-a * x).exp2(),
            EpsFn::InversePower { c, p } => c * x.powf(-p),
            EpsFn::Constant { c } => c,
        }
    }

    /// Bound on `Σ_{i>k} f(2^i x)`, if one is available.
    fn series_tail(&self, x: f64, k: u32) -> Option<f64> {
        let next = x * 2f64.powi(k as i32 + 1);
        match *self {
            EpsFn::Exp2 { a, .. } if a > 0.0 => {
                // successive terms shrink by 2^{-a·2^i·x}, at least the first such ratio
                let ratio = (-a * next).exp2();
                Some(self.eval(next) / (1.0 - ratio))
            }
            EpsFn::InversePower { p, .. } if p > 0.0 => Some(self.eval(next) / (1.0 - (-p).exp2())),
            EpsFn::Constant { c: 0.0 } => Some(0.0),
            _ => None,
        }
    }
}

impl FromStr for EpsFn {
    type Err = String;

    /// `exp2:c:a`, `pow:c:p` or `const:c`.
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| t.parse::<f64>().map_err(|e| format!("bad number `{t}` in `{s}`: {e}"));
        match parts.as_slice() {
            ["exp2", c, a] => Ok(EpsFn::Exp2 { c: num(c)?, a: num(a)? }),
            ["pow", c, p] => Ok(EpsFn::InversePower { c: num(c)?, p: num(p)? }),
            ["const", c] => Ok(EpsFn::Constant { c: num(c)? }),
            _ => Err(format!("unknown error function `{s}`; expected exp2:c:a, pow:c:p or const:c")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BudgetError {
    #[error("series {series} has no tail bound under this error function (partial sum {partial})")]
    Divergent { series: String, partial: f64 },
    #[error("error function is negative at {0}")]
    Negative(f64),
}

/// Evaluate a budget with every base symbol set to `n`. Series are summed to `k_max`
/// and closed off with a tail bound, so the result is an upper bound for them.
pub fn budget_eval(e: &EpsExpr, f: &EpsFn, n: f64, k_max: u32) -> Result<f64, BudgetError> {
    let at = |x: f64| {
        let v = f.eval(x);
        if v < 0.0 {
            Err(BudgetError::Negative(x))
        } else {
            Ok(v)
        }
    };
    let mut total = 0.0;
    for a in e.terms() {
        total += match a {
            Atom::Eps { scale, .. } => at(*scale as f64 * n)?,
            Atom::Const { value } => *value,
            Atom::Sqrt2Eps { inner } => (2.0 * budget_eval(inner, f, n, k_max)?).sqrt(),
            Atom::Series { .. } => {
                let mut partial = 0.0;
                for i in 0..=k_max {
                    partial += at(n * 2f64.powi(i as i32))?;
                }
                match f.series_tail(n, k_max) {
                    Some(t) => partial + t,
                    None => return Err(BudgetError::Divergent { series: a.to_string(), partial }),
                }
            }
        };
    }
    Ok(total)
}
