//! Exact product measures `μ ⊗ K` and finite-horizon Ionescu-Tulcea products
//! `ℙⁿ = P⁰ ⊗ P¹ ⊗ … ⊗ Pⁿ` of history-dependent kernels.
//!
//! Trajectories are keyed by their coordinate indices into the component
//! spaces; the key order is row-major over the canonical atom orders.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kernel::FiniteKernel;
use crate::measure::{accurate_sum, Atom, AtomSpace, ProbMeasure, SignedMeasure, MASS_TOL};

/// Default cap on the number of trajectories an enumeration may produce.
pub const DEFAULT_CAP: usize = 10_000_000;

/// Trajectory key: index of each coordinate in its component space.
pub type Path = Vec<u32>;

/// Sparse probability measure on `Ω_n = X_0 × … × X_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryMeasure {
    spaces: Vec<AtomSpace>,
    weights: BTreeMap<Path, f64>,
    approximate: bool,
}

impl TrajectoryMeasure {
    /// Horizon-0 measure equal to `mu`.
    pub fn from_initial(mu: &ProbMeasure) -> Self {
        let weights = mu
            .weights()
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, &w)| (vec![i as u32], w))
            .collect();
        TrajectoryMeasure {
            spaces: vec![mu.space().clone()],
            weights,
            approximate: false,
        }
    }

    pub(crate) fn from_parts(spaces: Vec<AtomSpace>, weights: BTreeMap<Path, f64>) -> Self {
        TrajectoryMeasure {
            spaces,
            weights,
            approximate: false,
        }
    }

    pub fn horizon(&self) -> usize {
        self.spaces.len() - 1
    }

    pub fn spaces(&self) -> &[AtomSpace] {
        &self.spaces
    }

    /// Number of trajectories with positive weight.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Set when small weights were pruned; the measure is then an approximation.
    pub fn is_approximate(&self) -> bool {
        self.approximate
    }

    pub fn get(&self, path: &[u32]) -> f64 {
        self.weights.get(path).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Path, f64)> + '_ {
        self.weights.iter().map(|(k, &w)| (k, w))
    }

    pub fn mass(&self) -> f64 {
        accurate_sum(self.weights.values().copied())
    }

    /// Tuple atom `(x_0, …, x_n)` for a path.
    pub fn label(&self, path: &[u32]) -> Atom {
        Atom::tuple(
            path.iter()
                .zip(&self.spaces)
                .map(|(&i, s)| s.atom(i as usize).clone()),
        )
    }

    /// Image under the projection onto the sorted coordinates `coords`.
    pub fn marginal(&self, coords: &[usize]) -> Result<TrajectoryMeasure> {
        if coords.is_empty() || coords.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidCoordinates);
        }
        if let Some(&c) = coords.iter().find(|&&c| c > self.horizon()) {
            return Err(Error::CoordinateOutOfRange {
                coord: c,
                horizon: self.horizon(),
            });
        }
        let mut weights: BTreeMap<Path, f64> = BTreeMap::new();
        for (path, &w) in &self.weights {
            let key: Path = coords.iter().map(|&c| path[c]).collect();
            *weights.entry(key).or_insert(0.0) += w;
        }
        Ok(TrajectoryMeasure {
            spaces: coords.iter().map(|&c| self.spaces[c].clone()).collect(),
            weights,
            approximate: self.approximate,
        })
    }

    fn require_shape(&self, other: &TrajectoryMeasure) -> Result<()> {
        if self.spaces != other.spaces {
            return Err(Error::SpaceMismatch(
                "trajectory measures have different horizons or component spaces".into(),
            ));
        }
        Ok(())
    }

    /// Visits the union of both supports in canonical order.
    fn merge<F: FnMut(f64, f64)>(&self, other: &TrajectoryMeasure, mut f: F) {
        let mut a = self.weights.iter().peekable();
        let mut b = other.weights.iter().peekable();
        loop {
            match (a.peek(), b.peek()) {
                (Some((ka, &wa)), Some((kb, &wb))) => match ka.cmp(kb) {
                    std::cmp::Ordering::Less => {
                        f(wa, 0.0);
                        a.next();
                    }
                    std::cmp::Ordering::Greater => {
                        f(0.0, wb);
                        b.next();
                    }
                    std::cmp::Ordering::Equal => {
                        f(wa, wb);
                        a.next();
                        b.next();
                    }
                },
                (Some((_, &wa)), None) => {
                    f(wa, 0.0);
                    a.next();
                }
                (None, Some((_, &wb))) => {
                    f(0.0, wb);
                    b.next();
                }
                (None, None) => break,
            }
        }
    }

    /// `‖ℙⁿ − ℙ̃ⁿ‖ = Σ_ω |ℙⁿ({ω}) − ℙ̃ⁿ({ω})|`.
    pub fn tv_distance(&self, other: &TrajectoryMeasure) -> Result<f64> {
        self.require_shape(other)?;
        let mut terms = Vec::with_capacity(self.len().max(other.len()));
        self.merge(other, |a, b| terms.push((a - b).abs()));
        Ok(accurate_sum(terms))
    }

    /// `‖ℙⁿ ∧ ℙ̃ⁿ‖ = Σ_ω min(ℙⁿ({ω}), ℙ̃ⁿ({ω}))`.
    pub fn meet_mass(&self, other: &TrajectoryMeasure) -> Result<f64> {
        self.require_shape(other)?;
        let mut terms = Vec::with_capacity(self.len().min(other.len()));
        self.merge(other, |a, b| terms.push(a.min(b)));
        Ok(accurate_sum(terms))
    }

    /// Dense probability measure on the product space; only sensible for small
    /// horizons.
    pub fn to_measure(&self) -> Result<ProbMeasure> {
        let space = AtomSpace::product(&self.spaces)?;
        let dims: Vec<usize> = self.spaces.iter().map(AtomSpace::len).collect();
        let mut w = vec![0.0; space.len()];
        for (path, &v) in &self.weights {
            w[flat_index(path, &dims)] += v;
        }
        ProbMeasure::new(SignedMeasure::from_raw(&space, w))
    }
}

/// Exact total variation between two trajectory measures of identical shape.
pub fn trajectory_tv(a: &TrajectoryMeasure, b: &TrajectoryMeasure) -> Result<f64> {
    a.tv_distance(b)
}

pub(crate) fn flat_index(path: &[u32], dims: &[usize]) -> usize {
    path.iter()
        .zip(dims)
        .fold(0usize, |acc, (&i, &d)| acc * d + i as usize)
}

/// One step `P^k : Ω_{k−1} → 𝒫(X_k)` of a kernel sequence.
#[derive(Clone, Debug, PartialEq)]
pub enum StepKernel {
    /// Depends on the last coordinate only; source is `X_{k−1}`.
    Markov(FiniteKernel),
    /// Depends on the whole history; source is the product `X_0 × … × X_{k−1}`
    /// with tuples in row-major order.
    History(FiniteKernel),
}

impl StepKernel {
    pub fn kernel(&self) -> &FiniteKernel {
        match self {
            StepKernel::Markov(k) | StepKernel::History(k) => k,
        }
    }

    pub fn target(&self) -> &AtomSpace {
        self.kernel().target()
    }

    pub fn is_markov(&self) -> bool {
        matches!(self, StepKernel::Markov(_))
    }
}

/// Initial law `P⁰` on `X_0` and kernels `P¹, P², …`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSequence {
    initial: ProbMeasure,
    steps: Vec<StepKernel>,
    spaces: Vec<AtomSpace>,
}

impl KernelSequence {
    pub fn new(initial: ProbMeasure, steps: Vec<StepKernel>) -> Result<Self> {
        let mut spaces = vec![initial.space().clone()];
        for (i, step) in steps.iter().enumerate() {
            let k = i + 1;
            let kernel = step.kernel();
            match step {
                StepKernel::Markov(_) => {
                    if kernel.source() != &spaces[k - 1] {
                        return Err(Error::StepMismatch {
                            step: k,
                            reason:
                                "Markov kernel source differs from the previous component space"
                                    .into(),
                        });
                    }
                }
                StepKernel::History(_) => {
                    let expected: usize = spaces.iter().map(AtomSpace::len).product();
                    if kernel.source().len() != expected {
                        return Err(Error::StepMismatch {
                            step: k,
                            reason: format!(
                                "history kernel has {} rows, expected {expected}",
                                kernel.source().len()
                            ),
                        });
                    }
                    if kernel.source() != &AtomSpace::product(&spaces)? {
                        return Err(Error::StepMismatch {
                            step: k,
                            reason:
                                "history kernel source is not the product of the previous spaces"
                                    .into(),
                        });
                    }
                }
            }
            spaces.push(kernel.target().clone());
        }
        Ok(KernelSequence {
            initial,
            steps,
            spaces,
        })
    }

    /// Time-homogeneous Markov chain run for `horizon` steps.
    pub fn homogeneous(
        initial: ProbMeasure,
        kernel: &FiniteKernel,
        horizon: usize,
    ) -> Result<Self> {
        Self::new(initial, vec![StepKernel::Markov(kernel.clone()); horizon])
    }

    pub fn initial(&self) -> &ProbMeasure {
        &self.initial
    }

    /// Number of kernel steps after the initial law.
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Step `k ≥ 1`.
    pub fn step(&self, k: usize) -> &StepKernel {
        &self.steps[k - 1]
    }

    pub fn steps(&self) -> &[StepKernel] {
        &self.steps
    }

    /// Component spaces `X_0, …, X_horizon`.
    pub fn spaces(&self) -> &[AtomSpace] {
        &self.spaces
    }

    /// Index of the row of step `k` used after `history = (x_0, …, x_{k−1})`.
    pub fn row_index(&self, k: usize, history: &[u32]) -> usize {
        match &self.steps[k - 1] {
            StepKernel::Markov(_) => history[k - 1] as usize,
            StepKernel::History(_) => {
                let dims: Vec<usize> = self.spaces[..k].iter().map(AtomSpace::len).collect();
                flat_index(&history[..k], &dims)
            }
        }
    }

    /// `P^k_h`, the law of `x_k` given the history `h`.
    pub fn row(&self, k: usize, history: &[u32]) -> &ProbMeasure {
        self.steps[k - 1].kernel().row(self.row_index(k, history))
    }

    pub(crate) fn require_compatible(&self, other: &KernelSequence) -> Result<()> {
        if self.steps.len() != other.steps.len() {
            return Err(Error::SpaceMismatch(format!(
                "sequences have {} and {} steps",
                self.steps.len(),
                other.steps.len()
            )));
        }
        for (k, (a, b)) in self.spaces.iter().zip(&other.spaces).enumerate() {
            if a != b {
                return Err(Error::StepMismatch {
                    step: k,
                    reason: "component spaces differ between the sequences".into(),
                });
            }
        }
        Ok(())
    }
}

/// Enumeration limits for [`ionescu_tulcea`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnumerationOptions {
    /// Maximum number of trajectories any intermediate measure may reach.
    pub cap: usize,
    /// Trajectories lighter than this are dropped and the result is flagged
    /// approximate. Zero keeps the computation exact.
    pub prune_below: f64,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        EnumerationOptions {
            cap: DEFAULT_CAP,
            prune_below: 0.0,
        }
    }
}

/// `μ ⊗ K` on `X × Y`: weight `μ({x}) · K_x({y})` at `(x, y)`.
pub fn product_measure(mu: &ProbMeasure, kernel: &FiniteKernel) -> Result<TrajectoryMeasure> {
    mu.space().require(
        kernel.source(),
        "kernel source differs from the measure's space",
    )?;
    let mut weights = BTreeMap::new();
    for (i, &w) in mu.weights().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (j, &k) in kernel.row(i).weights().iter().enumerate() {
            let v = w * k;
            if v != 0.0 {
                weights.insert(vec![i as u32, j as u32], v);
            }
        }
    }
    Ok(TrajectoryMeasure {
        spaces: vec![mu.space().clone(), kernel.target().clone()],
        weights,
        approximate: false,
    })
}

/// Extends a horizon-`k − 1` measure by step `k` of `seq`.
fn extend(
    current: &TrajectoryMeasure,
    seq: &KernelSequence,
    k: usize,
    opts: &EnumerationOptions,
) -> Result<TrajectoryMeasure> {
    let target = seq.spaces[k].clone();
    let required = current.len() as u128 * target.len() as u128;
    if required > opts.cap as u128 {
        return Err(Error::EnumerationCap {
            step: k,
            required,
            cap: opts.cap,
        });
    }
    let mut weights = BTreeMap::new();
    let mut approximate = current.approximate;
    for (path, &w) in &current.weights {
        let row = seq.row(k, path);
        for (j, &p) in row.weights().iter().enumerate() {
            let v = w * p;
            if v == 0.0 {
                continue;
            }
            if v < opts.prune_below {
                approximate = true;
                continue;
            }
            let mut next = Vec::with_capacity(path.len() + 1);
            next.extend_from_slice(path);
            next.push(j as u32);
            weights.insert(next, v);
        }
    }
    let mut spaces = current.spaces.clone();
    spaces.push(target);
    Ok(TrajectoryMeasure {
        spaces,
        weights,
        approximate,
    })
}

/// Finite-dimensional marginal `ℙⁿ = ⨂_{k=0}^n P^k`.
pub fn ionescu_tulcea(
    seq: &KernelSequence,
    n: usize,
    opts: &EnumerationOptions,
) -> Result<TrajectoryMeasure> {
    if n > seq.horizon() {
        return Err(Error::HorizonExceeded {
            requested: n,
            available: seq.horizon(),
        });
    }
    let mut current = TrajectoryMeasure::from_initial(&seq.initial);
    if current.len() > opts.cap {
        return Err(Error::EnumerationCap {
            step: 0,
            required: current.len() as u128,
            cap: opts.cap,
        });
    }
    for k in 1..=n {
        current = extend(&current, seq, k, opts)?;
    }
    if !current.approximate {
        let mass = current.mass();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::MassOutOfTolerance { mass });
        }
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two() -> AtomSpace {
        AtomSpace::range(2).unwrap()
    }

    fn flip(eps: f64) -> FiniteKernel {
        FiniteKernel::from_matrix(
            &two(),
            &two(),
            &[vec![1.0 - eps, eps], vec![eps, 1.0 - eps]],
        )
        .unwrap()
    }

    fn half() -> ProbMeasure {
        ProbMeasure::uniform(&two())
    }

    #[test]
    fn product_with_identity() {
        let q = product_measure(&half(), &FiniteKernel::identity(&two())).unwrap();
        assert_eq!(q.len(), 2);
        assert_eq!(q.get(&[0, 0]), 0.5);
        assert_eq!(q.get(&[1, 1]), 0.5);
        assert_eq!(q.get(&[0, 1]), 0.0);
    }

    #[test]
    fn product_with_constant_kernel_is_independent() {
        let s = AtomSpace::range(3).unwrap();
        let mu = ProbMeasure::from_weights(&two(), vec![0.3, 0.7]).unwrap();
        let rho = ProbMeasure::from_weights(&s, vec![0.2, 0.5, 0.3]).unwrap();
        let q = product_measure(&mu, &FiniteKernel::constant(&two(), &rho)).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(
                    q.get(&[i, j]),
                    mu.weight_at(i as usize) * rho.weight_at(j as usize)
                );
            }
        }
    }

    #[test]
    fn product_with_point_mass_lifts_row() {
        let mu = ProbMeasure::point_mass(&two(), &Atom::Int(1)).unwrap();
        let k = flip(0.25);
        let q = product_measure(&mu, &k).unwrap();
        assert_eq!(q.get(&[1, 0]), 0.25);
        assert_eq!(q.get(&[1, 1]), 0.75);
        assert_eq!(q.len(), 2);
    }

    #[test]
    fn product_rejects_mismatched_source() {
        let mu = ProbMeasure::uniform(&AtomSpace::range(3).unwrap());
        assert!(product_measure(&mu, &flip(0.1)).is_err());
    }

    #[test]
    fn horizon_zero_is_initial() {
        let mu = ProbMeasure::from_weights(&two(), vec![0.3, 0.7]).unwrap();
        let seq = KernelSequence::homogeneous(mu.clone(), &flip(0.1), 3).unwrap();
        let t = ionescu_tulcea(&seq, 0, &EnumerationOptions::default()).unwrap();
        assert_eq!(t, TrajectoryMeasure::from_initial(&mu));
        assert_eq!(t.to_measure().unwrap().weights(), mu.weights());
    }

    #[test]
    fn deterministic_kernels_give_one_path() {
        let s = AtomSpace::range(3).unwrap();
        let shift = FiniteKernel::from_matrix(
            &s,
            &s,
            &[
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
                vec![1.0, 0.0, 0.0],
            ],
        )
        .unwrap();
        let mu = ProbMeasure::point_mass(&s, &Atom::Int(2)).unwrap();
        let seq = KernelSequence::homogeneous(mu, &shift, 4).unwrap();
        let t = ionescu_tulcea(&seq, 4, &EnumerationOptions::default()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get(&[2, 0, 1, 2, 0]), 1.0);
    }

    #[test]
    fn identity_chain_stays_constant() {
        let seq = KernelSequence::homogeneous(half(), &FiniteKernel::identity(&two()), 2).unwrap();
        let t = ionescu_tulcea(&seq, 2, &EnumerationOptions::default()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get(&[0, 0, 0]), 0.5);
        assert_eq!(t.get(&[1, 1, 1]), 0.5);
    }

    #[test]
    fn horizon_and_cap_errors() {
        let seq = KernelSequence::homogeneous(half(), &flip(0.1), 2).unwrap();
        assert_eq!(
            ionescu_tulcea(&seq, 3, &EnumerationOptions::default()),
            Err(Error::HorizonExceeded {
                requested: 3,
                available: 2
            })
        );
        let opts = EnumerationOptions {
            cap: 4,
            prune_below: 0.0,
        };
        assert!(matches!(
            ionescu_tulcea(&seq, 2, &opts),
            Err(Error::EnumerationCap { step: 2, .. })
        ));
    }

    #[test]
    fn pruning_flags_approximation() {
        let seq = KernelSequence::homogeneous(half(), &flip(0.01), 3).unwrap();
        let opts = EnumerationOptions {
            cap: DEFAULT_CAP,
            prune_below: 1e-3,
        };
        let t = ionescu_tulcea(&seq, 3, &opts).unwrap();
        assert!(t.is_approximate());
        assert!(t.mass() < 1.0);
        let exact = ionescu_tulcea(&seq, 3, &EnumerationOptions::default()).unwrap();
        assert!(!exact.is_approximate());
    }

    #[test]
    fn marginal_examples() {
        let seq = KernelSequence::homogeneous(half(), &flip(0.1), 1).unwrap();
        let t = ionescu_tulcea(&seq, 1, &EnumerationOptions::default()).unwrap();
        assert_eq!(t.marginal(&[0, 1]).unwrap(), t);
        let m = t.marginal(&[1]).unwrap();
        assert!((m.get(&[0]) - 0.5).abs() < 1e-15);
        assert!((m.get(&[1]) - 0.5).abs() < 1e-15);
        assert_eq!(t.marginal(&[]), Err(Error::InvalidCoordinates));
        assert_eq!(t.marginal(&[1, 0]), Err(Error::InvalidCoordinates));
        assert!(matches!(
            t.marginal(&[2]),
            Err(Error::CoordinateOutOfRange { coord: 2, .. })
        ));
    }

    #[test]
    fn trajectory_tv_examples() {
        let s = two();
        let id = KernelSequence::homogeneous(half(), &FiniteKernel::identity(&s), 2).unwrap();
        let pert = KernelSequence::homogeneous(half(), &flip(0.1), 2).unwrap();
        let o = EnumerationOptions::default();
        let a = ionescu_tulcea(&id, 2, &o).unwrap();
        let b = ionescu_tulcea(&pert, 2, &o).unwrap();
        assert_eq!(trajectory_tv(&a, &a).unwrap(), 0.0);
        assert!((trajectory_tv(&a, &b).unwrap() - 0.38).abs() < 1e-12);

        let zero = KernelSequence::homogeneous(
            ProbMeasure::point_mass(&s, &Atom::Int(0)).unwrap(),
            &FiniteKernel::identity(&s),
            2,
        )
        .unwrap();
        let one = KernelSequence::homogeneous(
            ProbMeasure::point_mass(&s, &Atom::Int(1)).unwrap(),
            &FiniteKernel::identity(&s),
            2,
        )
        .unwrap();
        let d = trajectory_tv(
            &ionescu_tulcea(&zero, 2, &o).unwrap(),
            &ionescu_tulcea(&one, 2, &o).unwrap(),
        );
        assert_eq!(d.unwrap(), 2.0);
        assert!(trajectory_tv(&a, &a.marginal(&[0, 1]).unwrap()).is_err());
    }

    #[test]
    fn history_kernel_validation() {
        let s = two();
        let bad = FiniteKernel::identity(&AtomSpace::range(3).unwrap());
        let err = KernelSequence::new(
            half(),
            vec![StepKernel::Markov(flip(0.1)), StepKernel::History(bad)],
        );
        assert!(matches!(err, Err(Error::StepMismatch { step: 2, .. })));

        let h = AtomSpace::product(&[s.clone(), s.clone()]).unwrap();
        let rows = vec![half(); 4];
        let k = FiniteKernel::new(&h, &s, rows).unwrap();
        let seq = KernelSequence::new(
            half(),
            vec![StepKernel::Markov(flip(0.1)), StepKernel::History(k)],
        )
        .unwrap();
        assert_eq!(seq.row_index(2, &[1, 0]), 2);
        assert_eq!(seq.row_index(1, &[1]), 1);
    }
}
