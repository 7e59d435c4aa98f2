//! Finite-support signed measures.
//!
//! Every measure lives on an [`AtomSpace`], an ordered list of distinct atoms.
//! Weights are stored densely in the canonical atom order, so an atom without
//! an explicit weight carries weight zero. On a finite space the Hahn-Jordan
//! decomposition is the pointwise sign split, the total variation norm is the
//! sum of absolute weights and the meet `ν ∧ ν̃ = ν − (ν − ν̃)⁻` is the
//! atomwise minimum.
//!
//! Sub-σ-algebras of a finite space are exactly the σ-algebras generated by a
//! [`Partition`]; [`tv_distance_on_partition`] measures the distance of two
//! probability measures restricted to such a coarser σ-algebra.

use std::collections::HashMap;
use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Neumaier-compensated sum.
pub(crate) fn accurate_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let (mut sum, mut comp) = (0.0_f64, 0.0_f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Weights with magnitude below this are stored as exact zeros.
pub const NEG_TOL: f64 = 1e-12;

/// Admissible deviation of a probability measure's total mass from 1.
pub const MASS_TOL: f64 = 1e-9;

/// Opaque label of a point in a finite space.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    Int(i64),
    Name(Arc<str>),
    Tuple(Arc<[Atom]>),
}

impl Atom {
    pub fn name(s: &str) -> Self {
        Atom::Name(Arc::from(s))
    }

    pub fn tuple(parts: impl IntoIterator<Item = Atom>) -> Self {
        Atom::Tuple(parts.into_iter().collect())
    }

    pub fn pair(a: Atom, b: Atom) -> Self {
        Atom::Tuple(Arc::from(vec![a, b]))
    }
}

impl From<i64> for Atom {
    fn from(v: i64) -> Self {
        Atom::Int(v)
    }
}

impl From<&str> for Atom {
    fn from(s: &str) -> Self {
        Atom::name(s)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Int(v) => write!(f, "{v}"),
            Atom::Name(s) => write!(f, "{s}"),
            Atom::Tuple(parts) => {
                f.write_str("(")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{p}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug)]
struct SpaceInner {
    atoms: Vec<Atom>,
    index: HashMap<Atom, usize>,
}

/// Ordered finite set of distinct atoms. Cheap to clone.
#[derive(Clone, Debug)]
pub struct AtomSpace(Arc<SpaceInner>);

impl AtomSpace {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptySpace);
        }
        let mut index = HashMap::with_capacity(atoms.len());
        for (i, a) in atoms.iter().enumerate() {
            if index.insert(a.clone(), i).is_some() {
                return Err(Error::DuplicateAtom(a.to_string()));
            }
        }
        Ok(AtomSpace(Arc::new(SpaceInner { atoms, index })))
    }

    /// The space `{0, 1, …, k − 1}` of integer atoms.
    pub fn range(k: usize) -> Result<Self> {
        Self::new((0..k as i64).map(Atom::Int).collect())
    }

    /// Cartesian product with tuple atoms in row-major order (last factor fastest).
    pub fn product(factors: &[AtomSpace]) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::EmptySpace);
        }
        let mut tuples: Vec<Vec<Atom>> = vec![Vec::new()];
        for f in factors {
            let mut next = Vec::with_capacity(tuples.len() * f.len());
            for t in &tuples {
                for a in f.atoms() {
                    let mut t2 = t.clone();
                    t2.push(a.clone());
                    next.push(t2);
                }
            }
            tuples = next;
        }
        Self::new(tuples.into_iter().map(Atom::tuple).collect())
    }

    /// `Z × Z`, the carrier of couplings on `Z`.
    pub fn square(&self) -> Self {
        Self::product(&[self.clone(), self.clone()]).expect("square of a valid space")
    }

    pub fn len(&self) -> usize {
        self.0.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.0.atoms
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.0.atoms[i]
    }

    pub fn index_of(&self, atom: &Atom) -> Option<usize> {
        self.0.index.get(atom).copied()
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.0.index.contains_key(atom)
    }

    pub(crate) fn require(&self, other: &AtomSpace, context: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::SpaceMismatch(context.to_string()))
        }
    }
}

impl PartialEq for AtomSpace {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.atoms == other.0.atoms
    }
}

impl Eq for AtomSpace {}

fn clean(atom: &Atom, w: f64) -> Result<f64> {
    if !w.is_finite() {
        return Err(Error::NonFiniteWeight {
            atom: atom.to_string(),
            weight: w,
        });
    }
    Ok(if w.abs() < NEG_TOL { 0.0 } else { w })
}

/// Real-weighted measure on a finite [`AtomSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct SignedMeasure {
    space: AtomSpace,
    weights: Vec<f64>,
}

impl SignedMeasure {
    /// Builds a measure from weights listed in canonical atom order.
    pub fn from_weights(space: &AtomSpace, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != space.len() {
            return Err(Error::WeightCount {
                expected: space.len(),
                actual: weights.len(),
            });
        }
        let weights = weights
            .iter()
            .zip(space.atoms())
            .map(|(&w, a)| clean(a, w))
            .collect::<Result<Vec<_>>>()?;
        Ok(SignedMeasure {
            space: space.clone(),
            weights,
        })
    }

    /// Builds a measure from `(atom, weight)` pairs; repeated atoms accumulate.
    pub fn from_pairs<I>(space: &AtomSpace, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Atom, f64)>,
    {
        let mut weights = vec![0.0; space.len()];
        for (a, w) in pairs {
            let i = space
                .index_of(&a)
                .ok_or_else(|| Error::UnknownAtom(a.to_string()))?;
            weights[i] += w;
        }
        Self::from_weights(space, weights)
    }

    /// Nonnegative weights produced by exact products; skips the dust clamp,
    /// which only guards sign splits.
    pub(crate) fn from_raw(space: &AtomSpace, weights: Vec<f64>) -> Self {
        debug_assert_eq!(weights.len(), space.len());
        SignedMeasure {
            space: space.clone(),
            weights,
        }
    }

    pub fn zero(space: &AtomSpace) -> Self {
        SignedMeasure {
            space: space.clone(),
            weights: vec![0.0; space.len()],
        }
    }

    pub fn space(&self) -> &AtomSpace {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, atom: &Atom) -> f64 {
        self.space.index_of(atom).map_or(0.0, |i| self.weights[i])
    }

    pub fn weight_at(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// `ν(X)`.
    pub fn mass(&self) -> f64 {
        accurate_sum(self.weights.iter().copied())
    }

    /// Atoms with nonzero weight, in canonical order.
    pub fn support(&self) -> impl Iterator<Item = (&Atom, f64)> + '_ {
        self.space
            .atoms()
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w != 0.0)
            .map(|(a, &w)| (a, w))
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }

    fn zip_with(&self, other: &SignedMeasure, op: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.space
            .require(&other.space, "measures live on different atom spaces")?;
        let w = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(&a, &b)| op(a, b))
            .collect();
        SignedMeasure::from_weights(&self.space, w)
    }

    /// `ν − ν̃`.
    pub fn sub(&self, other: &SignedMeasure) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// `ν + ν̃`.
    pub fn add(&self, other: &SignedMeasure) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        SignedMeasure::from_weights(&self.space, self.weights.iter().map(|w| w * c).collect())
    }

    /// Mutually singular nonnegative parts `(ν⁺, ν⁻)` with `ν = ν⁺ − ν⁻`.
    pub fn hahn_jordan(&self) -> (SignedMeasure, SignedMeasure) {
        let pos = self.weights.iter().map(|&w| w.max(0.0)).collect();
        let neg = self.weights.iter().map(|&w| (-w).max(0.0)).collect();
        (
            SignedMeasure {
                space: self.space.clone(),
                weights: pos,
            },
            SignedMeasure {
                space: self.space.clone(),
                weights: neg,
            },
        )
    }

    /// `‖ν‖ = ν⁺(X) + ν⁻(X)`.
    pub fn tv_norm(&self) -> f64 {
        accurate_sum(self.weights.iter().map(|w| w.abs()))
    }

    /// `ν ∧ ν̃`, the atomwise minimum.
    pub fn meet(&self, other: &SignedMeasure) -> Result<Self> {
        self.zip_with(other, f64::min)
    }

    /// Pushforward `f_*ν` along a map into `target`.
    ///
    /// Every atom of the source space must be mapped into `target`, including
    /// atoms of zero weight.
    pub fn image<F>(&self, f: F, target: &AtomSpace) -> Result<SignedMeasure>
    where
        F: Fn(&Atom) -> Atom,
    {
        let mut weights = vec![0.0; target.len()];
        for (a, &w) in self.space.atoms().iter().zip(&self.weights) {
            let b = f(a);
            let j = target
                .index_of(&b)
                .ok_or_else(|| Error::UnknownAtom(format!("{b} (image of {a})")))?;
            weights[j] += w;
        }
        SignedMeasure::from_weights(target, weights)
    }
}

/// Nonnegative measure with total mass within [`MASS_TOL`] of 1.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMeasure(SignedMeasure);

impl ProbMeasure {
    /// Validates a signed measure as a probability measure. Masses outside
    /// tolerance are rejected, never renormalized; see [`ProbMeasure::normalize`].
    pub fn new(measure: SignedMeasure) -> Result<Self> {
        for (a, &w) in measure.space.atoms().iter().zip(&measure.weights) {
            if w < 0.0 {
                return Err(Error::NegativeWeight {
                    atom: a.to_string(),
                    weight: w,
                });
            }
        }
        let mass = measure.mass();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::MassOutOfTolerance { mass });
        }
        Ok(ProbMeasure(measure))
    }

    pub fn from_weights(space: &AtomSpace, weights: Vec<f64>) -> Result<Self> {
        Self::new(SignedMeasure::from_weights(space, weights)?)
    }

    pub fn from_pairs<I>(space: &AtomSpace, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Atom, f64)>,
    {
        Self::new(SignedMeasure::from_pairs(space, pairs)?)
    }

    /// Rescales a nonnegative measure of positive mass to mass 1.
    pub fn normalize(measure: &SignedMeasure) -> Result<Self> {
        let mass = measure.mass();
        if !mass.is_finite() || mass <= 0.0 {
            return Err(Error::Unnormalizable(mass));
        }
        Self::new(measure.scale(1.0 / mass)?)
    }

    pub fn point_mass(space: &AtomSpace, atom: &Atom) -> Result<Self> {
        Self::from_pairs(space, [(atom.clone(), 1.0)])
    }

    pub fn uniform(space: &AtomSpace) -> Self {
        let w = 1.0 / space.len() as f64;
        ProbMeasure(SignedMeasure {
            space: space.clone(),
            weights: vec![w; space.len()],
        })
    }

    pub fn as_signed(&self) -> &SignedMeasure {
        &self.0
    }

    pub fn into_signed(self) -> SignedMeasure {
        self.0
    }

    /// Independent product `ν ⊗ ρ` on `X × Y`.
    pub fn product(&self, other: &ProbMeasure) -> ProbMeasure {
        let space = AtomSpace::product(&[self.space().clone(), other.space().clone()])
            .expect("product of valid spaces");
        let mut weights = Vec::with_capacity(space.len());
        for &a in self.weights() {
            for &b in other.weights() {
                weights.push(a * b);
            }
        }
        ProbMeasure(SignedMeasure::from_raw(&space, weights))
    }
}

impl Deref for ProbMeasure {
    type Target = SignedMeasure;

    fn deref(&self) -> &SignedMeasure {
        &self.0
    }
}

/// Total variation `‖μ − μ̃‖` of two measures on the same space.
pub fn tv_distance(a: &SignedMeasure, b: &SignedMeasure) -> Result<f64> {
    a.space
        .require(&b.space, "measures live on different atom spaces")?;
    Ok(accurate_sum(
        a.weights.iter().zip(&b.weights).map(|(x, y)| (x - y).abs()),
    ))
}

/// Mass of the meet `‖μ ∧ μ̃‖`, computed atomwise.
pub fn meet_mass(a: &SignedMeasure, b: &SignedMeasure) -> Result<f64> {
    a.space
        .require(&b.space, "measures live on different atom spaces")?;
    Ok(accurate_sum(
        a.weights.iter().zip(&b.weights).map(|(x, y)| x.min(*y)),
    ))
}

/// Both sides of `‖μ ∧ μ̃‖ = 1 − ½‖μ − μ̃‖`, as `(lhs, rhs)`.
pub fn tv_min_identity_check(mu: &ProbMeasure, mu_t: &ProbMeasure) -> Result<(f64, f64)> {
    let lhs = mu.meet(mu_t)?.mass();
    let rhs = 1.0 - 0.5 * mu.sub(mu_t)?.tv_norm();
    Ok((lhs, rhs))
}

/// Partition of a finite space into nonempty disjoint blocks; generates a
/// sub-σ-algebra whose sets are the unions of blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    space: AtomSpace,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(space: &AtomSpace, blocks: Vec<Vec<Atom>>) -> Result<Self> {
        let mut owner = vec![None; space.len()];
        let mut idx_blocks = Vec::with_capacity(blocks.len());
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidPartition(format!("block {b} is empty")));
            }
            let mut ids = Vec::with_capacity(block.len());
            for a in block {
                let i = space
                    .index_of(a)
                    .ok_or_else(|| Error::UnknownAtom(a.to_string()))?;
                if let Some(prev) = owner[i] {
                    return Err(Error::InvalidPartition(format!(
                        "atom {a} appears in blocks {prev} and {b}"
                    )));
                }
                owner[i] = Some(b);
                ids.push(i);
            }
            idx_blocks.push(ids);
        }
        if let Some(i) = owner.iter().position(Option::is_none) {
            return Err(Error::InvalidPartition(format!(
                "atom {} is not covered",
                space.atom(i)
            )));
        }
        Ok(Partition {
            space: space.clone(),
            blocks: idx_blocks,
        })
    }

    /// The single-block partition generating `{∅, X}`.
    pub fn trivial(space: &AtomSpace) -> Self {
        Partition {
            space: space.clone(),
            blocks: vec![(0..space.len()).collect()],
        }
    }

    /// Singleton blocks, generating the full power set.
    pub fn discrete(space: &AtomSpace) -> Self {
        Partition {
            space: space.clone(),
            blocks: (0..space.len()).map(|i| vec![i]).collect(),
        }
    }

    pub fn space(&self) -> &AtomSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> impl Iterator<Item = Vec<&Atom>> + '_ {
        self.blocks
            .iter()
            .map(|b| b.iter().map(|&i| self.space.atom(i)).collect())
    }

    /// True when every block of `self` lies inside a block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        if self.space != coarser.space {
            return false;
        }
        let mut owner = vec![0; self.space.len()];
        for (b, block) in coarser.blocks.iter().enumerate() {
            for &i in block {
                owner[i] = b;
            }
        }
        self.blocks
            .iter()
            .all(|block| block.iter().all(|&i| owner[i] == owner[block[0]]))
    }
}

/// `2 · sup_A |μ(A) − μ̃(A)|` with `A` ranging over unions of partition blocks.
///
/// On the quotient space the supremum is attained at the union of blocks where
/// `μ` exceeds `μ̃`, which gives `Σ_B |μ(B) − μ̃(B)|`.
pub fn tv_distance_on_partition(
    mu: &ProbMeasure,
    mu_t: &ProbMeasure,
    part: &Partition,
) -> Result<f64> {
    mu.space()
        .require(mu_t.space(), "measures live on different atom spaces")?;
    mu.space()
        .require(&part.space, "partition is over a different atom space")?;
    Ok(part
        .blocks
        .iter()
        .map(|b| {
            let d: f64 = b.iter().map(|&i| mu.weights[i] - mu_t.weights[i]).sum();
            d.abs()
        })
        .sum())
}
