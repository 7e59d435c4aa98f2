//! Closed-form oracle for a two-state chain.
//!
//! The nominal chain never moves (`P = I`) and starts with `μ({1}) = p`. The
//! perturbed chain flips state with probability `ε` each step and starts with
//! `μ̃({1}) = p − δ`. Writing `f_n = 1 − (1 − ε)ⁿ`, the nominal path measure
//! sits on the two constant paths and the exact distance falls into one of
//! three regimes:
//!
//! ```text
//! A:  δ(1 − f_n) < −p f_n         ‖ℙⁿ − ℙ̃ⁿ‖ = 2(1 − p) f_n − 2δ(1 − f_n)
//! B:  otherwise                   ‖ℙⁿ − ℙ̃ⁿ‖ = 2 f_n
//! C:  δ(1 − f_n) > (1 − p) f_n    ‖ℙⁿ − ℙ̃ⁿ‖ = 2p f_n + 2δ(1 − f_n)
//! ```
//!
//! The multiplicative bound with `c_0 = 2|δ|` and `c_k = 2ε` reads
//! `2 − 2(1 − |δ|)(1 − ε)ⁿ`.

use std::fmt;

use crate::bounds::{multiplicative_bound, PerturbationBudget};
use crate::error::{Error, Result};
use crate::kernel::FiniteKernel;
use crate::measure::{AtomSpace, ProbMeasure};
use crate::product::KernelSequence;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoStateSpec {
    pub p: f64,
    pub eps: f64,
    pub delta: f64,
    pub n: usize,
}

impl TwoStateSpec {
    pub fn new(p: f64, eps: f64, delta: f64, n: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::OutOfRange {
                name: "p",
                value: p,
                range: "[0, 1]",
            });
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::OutOfRange {
                name: "eps",
                value: eps,
                range: "(0, 1)",
            });
        }
        if !(delta > p - 1.0 && delta < p) {
            return Err(Error::OutOfRange {
                name: "delta",
                value: delta,
                range: "(p - 1, p)",
            });
        }
        Ok(TwoStateSpec { p, eps, delta, n })
    }

    /// `(1 − ε)ⁿ = 1 − f_n`.
    pub fn survival(&self) -> f64 {
        (1.0 - self.eps).powi(self.n as i32)
    }

    /// `f_n(ε) = 1 − (1 − ε)ⁿ`.
    pub fn f_n(&self) -> f64 {
        1.0 - self.survival()
    }

    /// Perturbation constants `(2|δ|, 2ε, …, 2ε)`.
    pub fn budget(&self) -> PerturbationBudget {
        let mut c = vec![2.0 * self.delta.abs()];
        c.extend(std::iter::repeat_n(2.0 * self.eps, self.n));
        PerturbationBudget::new(c).expect("constants lie in [0, 2]")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Case {
    A,
    B,
    C,
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::A => "A",
            Case::B => "B",
            Case::C => "C",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaseResult {
    pub case: Case,
    pub f_n: f64,
    pub exact_tv: f64,
    pub bound: f64,
}

impl CaseResult {
    pub fn gap(&self) -> f64 {
        self.bound - self.exact_tv
    }
}

fn case_of(p: f64, delta: f64, f: f64, s: f64) -> Case {
    // boundary values belong to B
    if delta * s < -p * f {
        Case::A
    } else if delta * s > (1.0 - p) * f {
        Case::C
    } else {
        Case::B
    }
}

pub fn classify_case(spec: &TwoStateSpec) -> CaseResult {
    let TwoStateSpec { p, delta, .. } = *spec;
    let s = spec.survival();
    let f = 1.0 - s;
    let case = case_of(p, delta, f, s);
    let exact_tv = match case {
        Case::A => 2.0 * (1.0 - p) * f - 2.0 * delta * s,
        Case::B => 2.0 * f,
        Case::C => 2.0 * p * f + 2.0 * delta * s,
    };
    CaseResult {
        case,
        f_n: f,
        exact_tv,
        bound: 2.0 * (f + delta.abs() * s),
    }
}

/// Nominal and perturbed Markov sequences of horizon `spec.n` on `{0, 1}`.
pub fn build_chain(spec: &TwoStateSpec) -> (KernelSequence, KernelSequence) {
    let s = AtomSpace::range(2).expect("two atoms");
    let e = spec.eps;
    let p = FiniteKernel::identity(&s);
    let p_t = FiniteKernel::from_matrix(&s, &s, &[vec![1.0 - e, e], vec![e, 1.0 - e]])
        .expect("valid flip matrix");
    let mu = ProbMeasure::from_weights(&s, vec![1.0 - spec.p, spec.p]).expect("valid initial law");
    let q = spec.p - spec.delta;
    let mu_t = ProbMeasure::from_weights(&s, vec![1.0 - q, q]).expect("valid perturbed law");
    (
        KernelSequence::homogeneous(mu, &p, spec.n).expect("chained spaces"),
        KernelSequence::homogeneous(mu_t, &p_t, spec.n).expect("chained spaces"),
    )
}

/// Bound from the generic multiplicative formula with `spec.budget()`.
pub fn generic_bound(spec: &TwoStateSpec) -> f64 {
    multiplicative_bound(&spec.budget())
}

/// Smallest `N` such that every horizon `n ≥ N` falls in case B.
///
/// `f_n / (1 − f_n) = (1 − ε)^{−n} − 1` grows monotonically in `n`, so once
/// case B holds it holds forever.
pub fn case_b_threshold(p: f64, eps: f64, delta: f64) -> Result<usize> {
    TwoStateSpec::new(p, eps, delta, 0)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::OutOfRange {
            name: "p",
            value: p,
            range: "(0, 1)",
        });
    }
    let in_b = |n: usize| {
        let spec = TwoStateSpec { p, eps, delta, n };
        let s = spec.survival();
        case_of(p, delta, 1.0 - s, s) == Case::B
    };
    // continuous estimate: (1 − ε)^{−n} ≥ 1 + δ/(1 − p) for δ > 0,
    // or ≥ 1 − δ/p for δ < 0
    let ratio = if delta > 0.0 {
        1.0 + delta / (1.0 - p)
    } else {
        1.0 - delta / p
    };
    let guess = (ratio.ln() / -(1.0 - eps).ln()).ceil().max(0.0);
    let mut n = if guess.is_finite() { guess as usize } else { 0 };
    while !in_b(n) {
        n += 1;
    }
    while n > 0 && in_b(n - 1) {
        n -= 1;
    }
    Ok(n)
}
