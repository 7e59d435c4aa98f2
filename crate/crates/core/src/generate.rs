//! Seeded random measures, kernels and kernel-sequence pairs.

use rand::Rng;

use crate::kernel::{DensityKernel, FiniteKernel};
use crate::measure::{AtomSpace, ProbMeasure, SignedMeasure};
use crate::product::{KernelSequence, StepKernel};

/// Shape of a random nominal/perturbed pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomChainSpec {
    pub states: usize,
    pub horizon: usize,
    /// Mixing weight of the fresh randomness in the perturbed laws, in `[0, 1]`.
    pub scale: f64,
    /// Use full-history kernels from step 2 on.
    pub history: bool,
    /// Probability that an individual weight is forced to zero.
    pub zero_prob: f64,
}

fn random_weights<R: Rng>(rng: &mut R, m: usize, zero_prob: f64) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..m)
            .map(|_| {
                if zero_prob > 0.0 && rng.random::<f64>() < zero_prob {
                    0.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let total: f64 = w.iter().sum();
        if total > 1e-3 {
            return w.into_iter().map(|x| x / total).collect();
        }
    }
}

pub fn random_measure<R: Rng>(rng: &mut R, space: &AtomSpace, zero_prob: f64) -> ProbMeasure {
    let w = random_weights(rng, space.len(), zero_prob);
    ProbMeasure::new(SignedMeasure::from_raw(space, w)).expect("normalized weights")
}

pub fn random_kernel<R: Rng>(
    rng: &mut R,
    source: &AtomSpace,
    target: &AtomSpace,
    zero_prob: f64,
) -> FiniteKernel {
    let rows = (0..source.len())
        .map(|_| random_measure(rng, target, zero_prob))
        .collect();
    FiniteKernel::new(source, target, rows).expect("rows on the target space")
}

/// `(1 − t) μ + t ρ` for a fresh random `ρ`.
pub fn perturb_measure<R: Rng>(
    rng: &mut R,
    mu: &ProbMeasure,
    t: f64,
    zero_prob: f64,
) -> ProbMeasure {
    let rho = random_measure(rng, mu.space(), zero_prob);
    let w = mu
        .weights()
        .iter()
        .zip(rho.weights())
        .map(|(a, b)| (1.0 - t) * a + t * b)
        .collect();
    ProbMeasure::new(SignedMeasure::from_raw(mu.space(), w))
        .expect("mixture of probability measures")
}

pub fn perturb_kernel<R: Rng>(
    rng: &mut R,
    k: &FiniteKernel,
    t: f64,
    zero_prob: f64,
) -> FiniteKernel {
    let rows = k
        .rows()
        .iter()
        .map(|r| perturb_measure(rng, r, t, zero_prob))
        .collect();
    FiniteKernel::new(k.source(), k.target(), rows).expect("rows on the target space")
}

/// Nominal sequence and its perturbation, sharing the state space
/// `{0, …, states − 1}` at every coordinate.
pub fn random_pair<R: Rng>(
    rng: &mut R,
    spec: &RandomChainSpec,
) -> (KernelSequence, KernelSequence) {
    let s = AtomSpace::range(spec.states).expect("at least one state");
    let mu = random_measure(rng, &s, spec.zero_prob);
    let mu_t = perturb_measure(rng, &mu, spec.scale, spec.zero_prob);
    let mut steps = Vec::with_capacity(spec.horizon);
    let mut steps_t = Vec::with_capacity(spec.horizon);
    for k in 1..=spec.horizon {
        if spec.history && k >= 2 {
            let source = AtomSpace::product(&vec![s.clone(); k]).expect("nonempty factors");
            let kern = random_kernel(rng, &source, &s, spec.zero_prob);
            let kern_t = perturb_kernel(rng, &kern, spec.scale, spec.zero_prob);
            steps.push(StepKernel::History(kern));
            steps_t.push(StepKernel::History(kern_t));
        } else {
            let kern = random_kernel(rng, &s, &s, spec.zero_prob);
            let kern_t = perturb_kernel(rng, &kern, spec.scale, spec.zero_prob);
            steps.push(StepKernel::Markov(kern));
            steps_t.push(StepKernel::Markov(kern_t));
        }
    }
    (
        KernelSequence::new(mu, steps).expect("chained spaces"),
        KernelSequence::new(mu_t, steps_t).expect("chained spaces"),
    )
}

/// Density kernel against `base` with rows drawn at random.
pub fn random_density_kernel<R: Rng>(
    rng: &mut R,
    source: &AtomSpace,
    base: &ProbMeasure,
    zero_prob: f64,
) -> DensityKernel {
    let density = (0..source.len())
        .map(|_| {
            // pick row weights first, then divide by λ where λ is positive
            let w = random_weights(rng, base.space().len(), zero_prob);
            let mut row: Vec<f64> = w
                .iter()
                .zip(base.weights())
                .map(|(&x, &l)| if l > 0.0 { x / l } else { 0.0 })
                .collect();
            let mass: f64 = row.iter().zip(base.weights()).map(|(k, l)| k * l).sum();
            if mass > 0.0 {
                row.iter_mut().for_each(|k| *k /= mass);
            } else {
                row = vec![1.0; row.len()];
            }
            row
        })
        .collect();
    DensityKernel::new(source, base, density).expect("rows integrate to one")
}
