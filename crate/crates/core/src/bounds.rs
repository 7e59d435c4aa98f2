//! Total-variation perturbation bounds for product measures.
//!
//! Given per-step budgets `‖P^k − P̃^k‖ ≤ c_k`:
//!
//! ```text
//! linear:          ‖ℙⁿ − ℙ̃ⁿ‖ ≤ Σ_k c_k
//! multiplicative:  ‖ℙⁿ − ℙ̃ⁿ‖ ≤ 2 − 2 ∏_k (1 − c_k / 2)
//! overlap:         ‖ℙⁿ ∧ ℙ̃ⁿ‖ ≥ ∏_k a_k,   a_k = inf_ω ‖P^k_ω ∧ P̃^k_ω‖
//! ```
//!
//! The multiplicative bound never exceeds the linear one and saturates at 2,
//! while the linear bound grows without limit in `n`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::measure::{meet_mass, tv_distance};
use crate::product::{ionescu_tulcea, EnumerationOptions, KernelSequence, Path};

/// Slack allowed when comparing a quantity against a bound.
pub const BOUND_TOL: f64 = 1e-12;

/// Per-step constants `c_0, …, c_n` with each `c_k ∈ [0, 2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationBudget(Vec<f64>);

impl PerturbationBudget {
    pub fn new(constants: Vec<f64>) -> Result<Self> {
        if constants.is_empty() {
            return Err(Error::EmptyBudget);
        }
        let constants = constants
            .into_iter()
            .map(|c| {
                if !(-BOUND_TOL..=2.0 + BOUND_TOL).contains(&c) {
                    Err(Error::OutOfRange {
                        name: "perturbation constant",
                        value: c,
                        range: "[0, 2]",
                    })
                } else {
                    Ok(c.clamp(0.0, 2.0))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PerturbationBudget(constants))
    }

    pub fn constants(&self) -> &[f64] {
        &self.0
    }

    /// Horizon `n` covered by the budget (`n + 1` constants).
    pub fn horizon(&self) -> usize {
        self.0.len() - 1
    }

    /// The overlap terms `1 − c_k / 2` matching each constant.
    pub fn overlaps(&self) -> Vec<f64> {
        self.0.iter().map(|c| 1.0 - 0.5 * c).collect()
    }
}

/// `Σ c_k`, unclipped.
pub fn linear_bound(budget: &PerturbationBudget) -> f64 {
    budget.0.iter().sum()
}

/// `2 − 2 ∏ (1 − c_k / 2)`.
pub fn multiplicative_bound(budget: &PerturbationBudget) -> f64 {
    2.0 - 2.0 * budget.overlaps().iter().product::<f64>()
}

/// `∏ a_k` for overlap terms in `[0, 1]`.
pub fn overlap_lower_bound(overlaps: &[f64]) -> Result<f64> {
    for &a in overlaps {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::OutOfRange {
                name: "overlap",
                value: a,
                range: "[0, 1]",
            });
        }
    }
    Ok(overlaps.iter().product())
}

/// `(multiplicative, linear)` for the same budget.
pub fn bound_comparison_check(budget: &PerturbationBudget) -> (f64, f64) {
    (multiplicative_bound(budget), linear_bound(budget))
}

/// Which histories the supremum in `‖P^k − P̃^k‖` ranges over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HistoryScope {
    /// Histories with positive probability under either sequence.
    #[default]
    Reachable,
    /// Every history in `Ω_{k−1}`.
    All,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportOptions {
    /// Also enumerate both product measures and record the exact distance.
    pub exact: bool,
    pub enumeration: EnumerationOptions,
    pub scope: HistoryScope,
    /// Replaces the computed constants: step `k` uses entry `min(k, len − 1)`.
    pub budget_override: Option<Vec<f64>>,
}

/// Bounds assembled for one pair of kernel sequences at one horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub horizon: usize,
    pub budget: PerturbationBudget,
    /// Per-step `a_k`, from the kernel rows.
    pub overlaps: Vec<f64>,
    pub linear_bound: f64,
    pub multiplicative_bound: f64,
    pub overlap_lower_bound: f64,
    pub exact_tv: Option<f64>,
    pub exact_meet: Option<f64>,
}

impl BoundReport {
    pub fn from_parts(
        budget: PerturbationBudget,
        overlaps: Vec<f64>,
        exact_tv: Option<f64>,
        exact_meet: Option<f64>,
    ) -> Result<Self> {
        let overlap_lower_bound = overlap_lower_bound(&overlaps)?;
        Ok(BoundReport {
            horizon: budget.horizon(),
            linear_bound: linear_bound(&budget),
            multiplicative_bound: multiplicative_bound(&budget),
            overlap_lower_bound,
            budget,
            overlaps,
            exact_tv,
            exact_meet,
        })
    }

    /// Descriptions of every inequality the report fails.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.multiplicative_bound > self.linear_bound + BOUND_TOL {
            out.push(format!(
                "multiplicative bound {} exceeds linear bound {}",
                self.multiplicative_bound, self.linear_bound
            ));
        }
        if let Some(tv) = self.exact_tv {
            if tv > self.multiplicative_bound + BOUND_TOL {
                out.push(format!(
                    "exact distance {tv} exceeds multiplicative bound {}",
                    self.multiplicative_bound
                ));
            }
            if tv > self.linear_bound + BOUND_TOL {
                out.push(format!(
                    "exact distance {tv} exceeds linear bound {}",
                    self.linear_bound
                ));
            }
        }
        if let Some(meet) = self.exact_meet {
            if meet < self.overlap_lower_bound - BOUND_TOL {
                out.push(format!(
                    "exact overlap {meet} is below the product of overlaps {}",
                    self.overlap_lower_bound
                ));
            }
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::BoundViolation(v.join("; ")))
        }
    }
}

/// Histories (or last states, once only Markov steps remain) that the
/// supremum of each step ranges over.
struct HistoryScan<'a> {
    seq: &'a KernelSequence,
    seq_t: &'a KernelSequence,
    scope: HistoryScope,
    /// Last step that looks at more than the previous coordinate.
    last_history_step: usize,
}

impl<'a> HistoryScan<'a> {
    fn new(seq: &'a KernelSequence, seq_t: &'a KernelSequence, scope: HistoryScope) -> Self {
        let last_history_step = (1..=seq.horizon())
            .filter(|&k| !seq.step(k).is_markov() || !seq_t.step(k).is_markov())
            .max()
            .unwrap_or(0);
        HistoryScan {
            seq,
            seq_t,
            scope,
            last_history_step,
        }
    }

    /// Row index pairs `(i, ĩ)` to compare at each step `1..=n`.
    fn row_pairs(&self, n: usize) -> Vec<BTreeSet<(usize, usize)>> {
        let mut out = Vec::with_capacity(n);
        match self.scope {
            HistoryScope::All => {
                for k in 1..=n {
                    out.push(self.all_rows(k));
                }
            }
            HistoryScope::Reachable => {
                let mut own = support_paths(self.seq);
                let mut other = support_paths(self.seq_t);
                let mut states: Option<(BTreeSet<u32>, BTreeSet<u32>)> = None;
                for k in 1..=n {
                    if k <= self.last_history_step {
                        let union: BTreeSet<&Path> = own.iter().chain(other.iter()).collect();
                        out.push(
                            union
                                .into_iter()
                                .map(|h| (self.seq.row_index(k, h), self.seq_t.row_index(k, h)))
                                .collect(),
                        );
                        own = step_paths(self.seq, k, &own);
                        other = step_paths(self.seq_t, k, &other);
                    } else {
                        let (s, s_t) = states.get_or_insert_with(|| {
                            (
                                own.iter().map(|h| h[k - 1]).collect(),
                                other.iter().map(|h| h[k - 1]).collect(),
                            )
                        });
                        out.push(s.union(s_t).map(|&x| (x as usize, x as usize)).collect());
                        *s = step_states(self.seq, k, s);
                        *s_t = step_states(self.seq_t, k, s_t);
                    }
                }
            }
        }
        out
    }

    fn all_rows(&self, k: usize) -> BTreeSet<(usize, usize)> {
        if k > self.last_history_step {
            return (0..self.seq.spaces()[k - 1].len())
                .map(|x| (x, x))
                .collect();
        }
        let dims: Vec<usize> = self.seq.spaces()[..k].iter().map(|s| s.len()).collect();
        let mut rows = BTreeSet::new();
        let mut h = vec![0u32; k];
        loop {
            rows.insert((self.seq.row_index(k, &h), self.seq_t.row_index(k, &h)));
            // odometer over Ω_{k−1}
            let mut i = k;
            loop {
                if i == 0 {
                    return rows;
                }
                i -= 1;
                h[i] += 1;
                if (h[i] as usize) < dims[i] {
                    break;
                }
                h[i] = 0;
            }
        }
    }
}

fn support_paths(seq: &KernelSequence) -> BTreeSet<Path> {
    seq.initial()
        .weights()
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(i, _)| vec![i as u32])
        .collect()
}

fn step_paths(seq: &KernelSequence, k: usize, paths: &BTreeSet<Path>) -> BTreeSet<Path> {
    let mut next = BTreeSet::new();
    for h in paths {
        for (y, &w) in seq.row(k, h).weights().iter().enumerate() {
            if w > 0.0 {
                let mut p = h.clone();
                p.push(y as u32);
                next.insert(p);
            }
        }
    }
    next
}

fn step_states(seq: &KernelSequence, k: usize, states: &BTreeSet<u32>) -> BTreeSet<u32> {
    let kernel = seq.step(k).kernel();
    let mut next = BTreeSet::new();
    for &x in states {
        for (y, &w) in kernel.row(x as usize).weights().iter().enumerate() {
            if w > 0.0 {
                next.insert(y as u32);
            }
        }
    }
    next
}

/// Tight per-step constants `c_k = sup ‖P^k_ω − P̃^k_ω‖` and overlaps
/// `a_k = inf ‖P^k_ω ∧ P̃^k_ω‖`, each computed directly from the rows.
pub fn step_constants(
    seq: &KernelSequence,
    seq_t: &KernelSequence,
    n: usize,
    scope: HistoryScope,
) -> Result<(Vec<f64>, Vec<f64>)> {
    seq.require_compatible(seq_t)?;
    if n > seq.horizon() {
        return Err(Error::HorizonExceeded {
            requested: n,
            available: seq.horizon(),
        });
    }
    let mut c = vec![tv_distance(seq.initial(), seq_t.initial())?];
    let mut a = vec![meet_mass(seq.initial(), seq_t.initial())?];
    let scan = HistoryScan::new(seq, seq_t, scope);
    for (k, rows) in (1..=n).zip(scan.row_pairs(n)) {
        let (ks, ks_t) = (seq.step(k).kernel(), seq_t.step(k).kernel());
        let mut sup = 0.0_f64;
        let mut inf = 1.0_f64;
        for (i, i_t) in rows {
            sup = sup.max(tv_distance(ks.row(i), ks_t.row(i_t))?);
            inf = inf.min(meet_mass(ks.row(i), ks_t.row(i_t))?);
        }
        c.push(sup);
        a.push(inf.clamp(0.0, 1.0));
    }
    Ok((c, a))
}

/// Assembles the bounds for horizon `n`, optionally against the exact
/// distance, and fails if any inequality is violated.
pub fn make_report(
    seq: &KernelSequence,
    seq_t: &KernelSequence,
    n: usize,
    opts: &ReportOptions,
) -> Result<BoundReport> {
    let (tight, overlaps) = step_constants(seq, seq_t, n, opts.scope)?;
    let constants = match &opts.budget_override {
        Some(list) if !list.is_empty() => (0..=n).map(|k| list[k.min(list.len() - 1)]).collect(),
        Some(_) => return Err(Error::EmptyBudget),
        None => tight,
    };
    let budget = PerturbationBudget::new(constants)?;
    let (exact_tv, exact_meet) = if opts.exact {
        let p = ionescu_tulcea(seq, n, &opts.enumeration)?;
        let p_t = ionescu_tulcea(seq_t, n, &opts.enumeration)?;
        (Some(p.tv_distance(&p_t)?), Some(p.meet_mass(&p_t)?))
    } else {
        (None, None)
    };
    let report = BoundReport::from_parts(budget, overlaps, exact_tv, exact_meet)?;
    report.check()?;
    Ok(report)
}
