//! Couplings of finite measures and the sequential coupling of two kernel
//! sequences.
//!
//! The γ-coupling of `(ν, ν̃)` places the meet `ν ∧ ν̃` on the diagonal and
//! spreads the remaining mass as the normalized product
//! `(ν − ν̃)⁺ ⊗ (ν − ν̃)⁻ / (1 − ‖ν ∧ ν̃‖)`. It is maximal: its diagonal mass
//! equals `‖ν ∧ ν̃‖`.
//!
//! The sequential coupling of two product measures uses the γ-coupling of the
//! next-step laws while the two histories agree and the independent coupling
//! once they differ.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::FiniteKernel;
use crate::measure::{accurate_sum, AtomSpace, ProbMeasure, SignedMeasure};
use crate::product::{
    product_measure, EnumerationOptions, KernelSequence, Path, TrajectoryMeasure,
};

/// Atomwise tolerance on coupling marginals.
pub const MARGINAL_TOL: f64 = 1e-12;

/// Meet masses at or above `1 − INDICATOR_TOL` count as 1: the off-diagonal
/// term of the γ-coupling is then dropped.
pub const INDICATOR_TOL: f64 = 1e-12;

/// Joint law on `Z × Z` with certified marginals.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    space: AtomSpace,
    joint: ProbMeasure,
    left: ProbMeasure,
    right: ProbMeasure,
}

fn marginals(joint: &[f64], m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut left = vec![0.0; m];
    let mut right = vec![0.0; m];
    for i in 0..m {
        for j in 0..m {
            let w = joint[i * m + j];
            left[i] += w;
            right[j] += w;
        }
    }
    (left, right)
}

fn max_deviation(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

impl Coupling {
    /// Checks that `joint` lives on `Z × Z` and has marginals `left` and `right`.
    pub fn new(joint: ProbMeasure, left: ProbMeasure, right: ProbMeasure) -> Result<Self> {
        let space = left.space().clone();
        space.require(right.space(), "coupled measures live on different spaces")?;
        joint.space().require(
            &space.square(),
            "joint law is not on the square of the marginal space",
        )?;
        let (l, r) = marginals(joint.weights(), space.len());
        let dl = max_deviation(&l, left.weights());
        if dl > MARGINAL_TOL {
            return Err(Error::CouplingMarginal {
                side: "left",
                deviation: dl,
            });
        }
        let dr = max_deviation(&r, right.weights());
        if dr > MARGINAL_TOL {
            return Err(Error::CouplingMarginal {
                side: "right",
                deviation: dr,
            });
        }
        Ok(Coupling {
            space,
            joint,
            left,
            right,
        })
    }

    pub fn space(&self) -> &AtomSpace {
        &self.space
    }

    pub fn joint(&self) -> &ProbMeasure {
        &self.joint
    }

    pub fn left(&self) -> &ProbMeasure {
        &self.left
    }

    pub fn right(&self) -> &ProbMeasure {
        &self.right
    }

    /// Weight of the pair `(i, j)` of atom indices.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.joint.weight_at(i * self.space.len() + j)
    }

    /// Marginals recomputed from the joint law.
    pub fn marginals(&self) -> (Vec<f64>, Vec<f64>) {
        marginals(self.joint.weights(), self.space.len())
    }
}

/// Joint weights of the γ-coupling on the row-major pair grid.
fn gamma_weights(a: &[f64], b: &[f64]) -> Vec<f64> {
    let m = a.len();
    let mut joint = vec![0.0; m * m];
    let mut overlap = 0.0;
    for i in 0..m {
        let w = a[i].min(b[i]);
        joint[i * m + i] = w;
        overlap += w;
    }
    if overlap < 1.0 - INDICATOR_TOL {
        let norm = 1.0 - overlap;
        for i in 0..m {
            let pos = a[i] - b[i];
            if pos <= 0.0 {
                continue;
            }
            for j in 0..m {
                let neg = b[j] - a[j];
                if neg > 0.0 {
                    joint[i * m + j] = pos * neg / norm;
                }
            }
        }
    }
    joint
}

/// The γ-coupling `γ(ν, ν̃)`.
pub fn gamma_coupling(nu: &ProbMeasure, nu_t: &ProbMeasure) -> Result<Coupling> {
    nu.space()
        .require(nu_t.space(), "coupled measures live on different spaces")?;
    let w = gamma_weights(nu.weights(), nu_t.weights());
    let joint = ProbMeasure::new(SignedMeasure::from_raw(&nu.space().square(), w))?;
    Coupling::new(joint, nu.clone(), nu_t.clone())
}

/// The independent coupling `ν ⊗ ν̃`.
pub fn product_coupling(nu: &ProbMeasure, nu_t: &ProbMeasure) -> Result<Coupling> {
    nu.space()
        .require(nu_t.space(), "coupled measures live on different spaces")?;
    let joint = ProbMeasure::new(SignedMeasure::from_raw(
        &nu.space().square(),
        nu.product(nu_t).weights().to_vec(),
    ))?;
    Coupling::new(joint, nu.clone(), nu_t.clone())
}

/// `ℙ(π = π̃)`, the mass the coupling puts on the diagonal.
pub fn diagonal_mass(c: &Coupling) -> f64 {
    (0..c.space.len()).map(|i| c.weight(i, i)).sum()
}

/// Kernel `κ : X² → 𝒫(Y²)` coupling the rows of `K` and `K̃`: γ-coupling on
/// the diagonal, independent coupling off it.
#[derive(Clone, Debug)]
pub struct CouplingKernel {
    left: FiniteKernel,
    right: FiniteKernel,
    rows: Vec<Coupling>,
}

impl CouplingKernel {
    pub fn left_kernel(&self) -> &FiniteKernel {
        &self.left
    }

    pub fn right_kernel(&self) -> &FiniteKernel {
        &self.right
    }

    /// `κ_{x x̃}` for source indices `x`, `x̃`.
    pub fn row(&self, x: usize, x_t: usize) -> &Coupling {
        &self.rows[x * self.left.source().len() + x_t]
    }
}

pub fn sequential_coupling_kernel(k: &FiniteKernel, k_t: &FiniteKernel) -> Result<CouplingKernel> {
    k.source()
        .require(k_t.source(), "kernels have different source spaces")?;
    k.target()
        .require(k_t.target(), "kernels have different target spaces")?;
    let n = k.source().len();
    let mut rows = Vec::with_capacity(n * n);
    for x in 0..n {
        for x_t in 0..n {
            rows.push(if x == x_t {
                gamma_coupling(k.row(x), k_t.row(x_t))?
            } else {
                product_coupling(k.row(x), k_t.row(x_t))?
            });
        }
    }
    Ok(CouplingKernel {
        left: k.clone(),
        right: k_t.clone(),
        rows,
    })
}

/// Kernel whose every row is the independent coupling `K_x ⊗ K̃_x̃`.
pub fn independent_coupling_kernel(k: &FiniteKernel, k_t: &FiniteKernel) -> Result<CouplingKernel> {
    k.source()
        .require(k_t.source(), "kernels have different source spaces")?;
    k.target()
        .require(k_t.target(), "kernels have different target spaces")?;
    let n = k.source().len();
    let rows = (0..n * n)
        .map(|i| product_coupling(k.row(i / n), k_t.row(i % n)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CouplingKernel {
        left: k.clone(),
        right: k_t.clone(),
        rows,
    })
}

/// `ℚ = m ⊗ κ`, relabelled from `X² × Y²` to `(X × Y)²`, with marginals
/// certified against `μ ⊗ K` and `μ̃ ⊗ K̃`.
pub fn coupled_product(m: &Coupling, kappa: &CouplingKernel) -> Result<Coupling> {
    m.space().require(
        kappa.left.source(),
        "coupling kernel source differs from the coupled space",
    )?;
    let nx = m.space().len();
    let ny = kappa.left.target().len();
    let nz = nx * ny;
    let mut w = vec![0.0; nz * nz];
    for x in 0..nx {
        for x_t in 0..nx {
            let mw = m.weight(x, x_t);
            if mw == 0.0 {
                continue;
            }
            let row = kappa.row(x, x_t);
            for y in 0..ny {
                for y_t in 0..ny {
                    let kw = row.weight(y, y_t);
                    if kw != 0.0 {
                        w[(x * ny + y) * nz + (x_t * ny + y_t)] = mw * kw;
                    }
                }
            }
        }
    }
    let left = product_measure(m.left(), &kappa.left)?.to_measure()?;
    let right = product_measure(m.right(), &kappa.right)?.to_measure()?;
    let joint = ProbMeasure::new(SignedMeasure::from_raw(&left.space().square(), w))?;
    Coupling::new(joint, left, right)
}

/// Sparse coupling of two trajectory measures on `Ω_n × Ω_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SequentialCoupling {
    spaces: Vec<AtomSpace>,
    weights: BTreeMap<(Path, Path), f64>,
}

impl SequentialCoupling {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mass(&self) -> f64 {
        accurate_sum(self.weights.values().copied())
    }

    pub fn diagonal_mass(&self) -> f64 {
        accurate_sum(
            self.weights
                .iter()
                .filter(|((a, b), _)| a == b)
                .map(|(_, &w)| w),
        )
    }

    fn project(&self, right: bool) -> TrajectoryMeasure {
        let mut out: BTreeMap<Path, f64> = BTreeMap::new();
        for ((a, b), &w) in &self.weights {
            let key = if right { b } else { a };
            *out.entry(key.clone()).or_insert(0.0) += w;
        }
        TrajectoryMeasure::from_parts(self.spaces.clone(), out)
    }

    pub fn left_marginal(&self) -> TrajectoryMeasure {
        self.project(false)
    }

    pub fn right_marginal(&self) -> TrajectoryMeasure {
        self.project(true)
    }
}

fn check_pair(seq: &KernelSequence, seq_t: &KernelSequence, n: usize) -> Result<()> {
    seq.require_compatible(seq_t)?;
    if n > seq.horizon() {
        return Err(Error::HorizonExceeded {
            requested: n,
            available: seq.horizon(),
        });
    }
    Ok(())
}

fn push(path: &[u32], x: usize) -> Path {
    let mut p = Vec::with_capacity(path.len() + 1);
    p.extend_from_slice(path);
    p.push(x as u32);
    p
}

/// Exact sequential coupling of `ℙⁿ` and `ℙ̃ⁿ`, enumerated pair by pair.
pub fn sequential_coupling(
    seq: &KernelSequence,
    seq_t: &KernelSequence,
    n: usize,
    opts: &EnumerationOptions,
) -> Result<SequentialCoupling> {
    check_pair(seq, seq_t, n)?;
    let m0 = seq.spaces()[0].len();
    let g = gamma_weights(seq.initial().weights(), seq_t.initial().weights());
    let mut weights: BTreeMap<(Path, Path), f64> = BTreeMap::new();
    for (idx, &w) in g.iter().enumerate() {
        if w > 0.0 {
            weights.insert((vec![(idx / m0) as u32], vec![(idx % m0) as u32]), w);
        }
    }
    for k in 1..=n {
        let m = seq.spaces()[k].len();
        let required = weights.len() as u128 * (m * m) as u128;
        if required > opts.cap as u128 {
            return Err(Error::EnumerationCap {
                step: k,
                required,
                cap: opts.cap,
            });
        }
        let mut next = BTreeMap::new();
        for ((h, h_t), &w) in &weights {
            let a = seq.row(k, h).weights();
            let b = seq_t.row(k, h_t).weights();
            let row = if h == h_t {
                gamma_weights(a, b)
            } else {
                a.iter()
                    .flat_map(|&x| b.iter().map(move |&y| x * y))
                    .collect()
            };
            for (idx, &v) in row.iter().enumerate() {
                let v = w * v;
                if v != 0.0 {
                    next.insert((push(h, idx / m), push(h_t, idx % m)), v);
                }
            }
        }
        weights = next;
    }
    Ok(SequentialCoupling {
        spaces: seq.spaces()[..=n].to_vec(),
        weights,
    })
}

/// Diagonal mass of the sequential coupling, tracking only agreeing histories.
///
/// A pair of histories that has split never returns to the diagonal, so the
/// recursion `D_k(h, y) = D_{k−1}(h) · min(P^k_h(y), P̃^k_h(y))` suffices.
pub fn coupled_diagonal_mass(
    seq: &KernelSequence,
    seq_t: &KernelSequence,
    n: usize,
    opts: &EnumerationOptions,
) -> Result<f64> {
    check_pair(seq, seq_t, n)?;
    let mut diag: Vec<(Path, f64)> = seq
        .initial()
        .weights()
        .iter()
        .zip(seq_t.initial().weights())
        .enumerate()
        .filter_map(|(i, (a, b))| {
            let w = a.min(*b);
            (w > 0.0).then(|| (vec![i as u32], w))
        })
        .collect();
    for k in 1..=n {
        let m = seq.spaces()[k].len();
        let required = diag.len() as u128 * m as u128;
        if required > opts.cap as u128 {
            return Err(Error::EnumerationCap {
                step: k,
                required,
                cap: opts.cap,
            });
        }
        let mut next = Vec::with_capacity(diag.len() * m);
        for (h, w) in &diag {
            let a = seq.row(k, h).weights();
            let b = seq_t.row(k, h).weights();
            for y in 0..m {
                let v = w * a[y].min(b[y]);
                if v > 0.0 {
                    next.push((push(h, y), v));
                }
            }
        }
        diag = next;
    }
    Ok(accurate_sum(diag.iter().map(|(_, w)| *w)))
}

/// Monte Carlo estimate of the sequential coupling's diagonal mass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub samples: u64,
    pub hits: u64,
    pub estimate: f64,
    /// Normal-approximation standard error `√(p̂(1 − p̂)/N)`.
    pub half_width: f64,
}

/// Samples per independent substream. Shard `s` draws from
/// `ChaCha8Rng::seed_from_u64(seed)` switched to stream `s`, so results do
/// not depend on how shards are scheduled across threads.
pub const SHARD_SIZE: u64 = 8192;

/// Inverse-CDF table over a pair grid, skipping zero cells.
struct PairTable {
    cells: Vec<u32>,
    cumulative: Vec<f64>,
}

impl PairTable {
    fn new(weights: &[f64]) -> Self {
        let mut cells = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                cells.push(i as u32);
                cumulative.push(acc);
            }
        }
        PairTable { cells, cumulative }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("nonempty coupling support");
        let u = rng.random::<f64>() * total;
        let pos = self.cumulative.partition_point(|&c| c <= u);
        self.cells[pos.min(self.cells.len() - 1)] as usize
    }
}

fn run_shard(
    seq: &KernelSequence,
    seq_t: &KernelSequence,
    n: usize,
    initial: &PairTable,
    seed: u64,
    shard: u64,
    count: u64,
) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard);
    let m0 = seq.spaces()[0].len();
    let mut tables: HashMap<(usize, usize, usize), PairTable> = HashMap::new();
    let mut hits = 0;
    let mut history: Vec<u32> = Vec::with_capacity(n + 1);
    'sample: for _ in 0..count {
        history.clear();
        let cell = initial.draw(&mut rng);
        let (x, x_t) = (cell / m0, cell % m0);
        if x != x_t {
            continue;
        }
        history.push(x as u32);
        for k in 1..=n {
            let m = seq.spaces()[k].len();
            let key = (k, seq.row_index(k, &history), seq_t.row_index(k, &history));
            let table = tables.entry(key).or_insert_with(|| {
                PairTable::new(&gamma_weights(
                    seq.step(k).kernel().row(key.1).weights(),
                    seq_t.step(k).kernel().row(key.2).weights(),
                ))
            });
            let cell = table.draw(&mut rng);
            let (y, y_t) = (cell / m, cell % m);
            // once the histories differ the pair is off the diagonal for good
            if y != y_t {
                continue 'sample;
            }
            history.push(y as u32);
        }
        hits += 1;
    }
    hits
}

/// Estimates `ℚ(x_k = x̃_k for all k ≤ n)` by simulating coupled trajectory
/// pairs: `(x_0, x̃_0) ~ γ(P⁰, P̃⁰)`, then the γ-coupling of the next-step
/// laws while the histories agree.
pub fn coupled_sampler(
    seq: &KernelSequence,
    seq_t: &KernelSequence,
    n: usize,
    samples: u64,
    seed: u64,
) -> Result<McEstimate> {
    check_pair(seq, seq_t, n)?;
    if samples == 0 {
        return Err(Error::ZeroSamples);
    }
    let initial = PairTable::new(&gamma_weights(
        seq.initial().weights(),
        seq_t.initial().weights(),
    ));
    let shards = samples.div_ceil(SHARD_SIZE);
    let hits: u64 = (0..shards)
        .into_par_iter()
        .map(|s| {
            let count = SHARD_SIZE.min(samples - s * SHARD_SIZE);
            run_shard(seq, seq_t, n, &initial, seed, s, count)
        })
        .sum();
    let p = hits as f64 / samples as f64;
    Ok(McEstimate {
        samples,
        hits,
        estimate: p,
        half_width: (p * (1.0 - p) / samples as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::product::{ionescu_tulcea, StepKernel};

    fn two() -> AtomSpace {
        AtomSpace::range(2).unwrap()
    }

    fn pm(w: &[f64]) -> ProbMeasure {
        ProbMeasure::from_weights(&AtomSpace::range(w.len()).unwrap(), w.to_vec()).unwrap()
    }

    fn flip(eps: f64) -> FiniteKernel {
        FiniteKernel::from_matrix(
            &two(),
            &two(),
            &[vec![1.0 - eps, eps], vec![eps, 1.0 - eps]],
        )
        .unwrap()
    }

    #[test]
    fn gamma_of_identical_measures_is_diagonal() {
        let nu = pm(&[0.2, 0.3, 0.5]);
        let c = gamma_coupling(&nu, &nu).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { nu.weight_at(i) } else { 0.0 };
                assert_eq!(c.weight(i, j), expect);
            }
        }
        assert_eq!(diagonal_mass(&c), 1.0);
    }

    #[test]
    fn gamma_worked_example() {
        let c = gamma_coupling(&pm(&[0.5, 0.5]), &pm(&[0.8, 0.2])).unwrap();
        assert_eq!(c.weight(0, 0), 0.5);
        assert_eq!(c.weight(1, 1), 0.2);
        assert!((c.weight(1, 0) - 0.3).abs() < 1e-15);
        assert_eq!(c.weight(0, 1), 0.0);
        assert!((diagonal_mass(&c) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn gamma_of_singular_measures_is_product() {
        let a = pm(&[0.4, 0.6, 0.0]);
        let b = pm(&[0.0, 0.0, 1.0]);
        let g = gamma_coupling(&a, &b).unwrap();
        let p = product_coupling(&a, &b).unwrap();
        assert_eq!(g.joint(), p.joint());
        assert_eq!(diagonal_mass(&g), 0.0);
    }

    #[test]
    fn coupling_rejects_wrong_marginals() {
        let a = pm(&[0.5, 0.5]);
        let b = pm(&[0.8, 0.2]);
        let joint = gamma_coupling(&a, &a).unwrap().joint().clone();
        assert!(matches!(
            Coupling::new(joint, a.clone(), b),
            Err(Error::CouplingMarginal { side: "right", .. })
        ));
        assert!(gamma_coupling(&a, &pm(&[0.2, 0.3, 0.5])).is_err());
    }

    #[test]
    fn kernel_rows() {
        let id = FiniteKernel::identity(&two());
        let p = flip(0.1);
        let kappa = sequential_coupling_kernel(&id, &p).unwrap();
        let r = kappa.row(0, 0);
        assert!((r.weight(0, 0) - 0.9).abs() < 1e-15);
        assert!((r.weight(0, 1) - 0.1).abs() < 1e-15);
        assert_eq!(r.weight(1, 0), 0.0);
        assert_eq!(r.weight(1, 1), 0.0);
        let off = kappa.row(0, 1);
        assert_eq!(off, &product_coupling(id.row(0), p.row(1)).unwrap());

        let same = sequential_coupling_kernel(&p, &p).unwrap();
        assert_eq!(diagonal_mass(same.row(1, 1)), 1.0);
    }

    #[test]
    fn coupled_product_diagonal_case() {
        let mu = pm(&[0.3, 0.7]);
        let p = flip(0.25);
        let m = gamma_coupling(&mu, &mu).unwrap();
        let q = coupled_product(&m, &sequential_coupling_kernel(&p, &p).unwrap()).unwrap();
        assert!((diagonal_mass(&q) - 1.0).abs() < 1e-15);
        assert_eq!(q.left(), q.right());
    }

    #[test]
    fn coupled_product_of_products_is_independent() {
        let a = pm(&[0.3, 0.7]);
        let b = pm(&[0.6, 0.4]);
        let k = flip(0.1);
        let k_t = flip(0.35);
        let m = product_coupling(&a, &b).unwrap();
        let q = coupled_product(&m, &independent_coupling_kernel(&k, &k_t).unwrap()).unwrap();
        let left = product_measure(&a, &k).unwrap().to_measure().unwrap();
        let right = product_measure(&b, &k_t).unwrap().to_measure().unwrap();
        let expect = product_coupling(&left, &right).unwrap();
        for (x, y) in q.joint().weights().iter().zip(expect.joint().weights()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn coupled_product_lower_bound_example() {
        // p = 0.5, ε = 0.1, δ = 0.1
        let mu = pm(&[0.5, 0.5]);
        let mu_t = pm(&[0.6, 0.4]);
        let m = gamma_coupling(&mu, &mu_t).unwrap();
        let kappa =
            sequential_coupling_kernel(&FiniteKernel::identity(&two()), &flip(0.1)).unwrap();
        let q = coupled_product(&m, &kappa).unwrap();
        // oracle: diagonal pairs (x, x) carry min(μ, μ̃)(x) · min(1, 0.9)
        let exact = (0.5 + 0.4) * 0.9;
        assert!((diagonal_mass(&q) - exact).abs() < 1e-15);
        assert!(diagonal_mass(&q) >= 0.81 - 1e-12);
    }

    #[test]
    fn diagonal_mass_extremes() {
        let a = pm(&[1.0, 0.0]);
        let b = pm(&[0.0, 1.0]);
        assert_eq!(diagonal_mass(&product_coupling(&a, &b).unwrap()), 0.0);
        assert_eq!(diagonal_mass(&gamma_coupling(&a, &a).unwrap()), 1.0);
    }

    fn twostate(delta: f64, eps: f64, n: usize) -> (KernelSequence, KernelSequence) {
        let seq = KernelSequence::homogeneous(pm(&[0.5, 0.5]), &FiniteKernel::identity(&two()), n)
            .unwrap();
        let seq_t =
            KernelSequence::homogeneous(pm(&[0.5 + delta, 0.5 - delta]), &flip(eps), n).unwrap();
        (seq, seq_t)
    }

    #[test]
    fn sequential_coupling_marginals_and_diagonal() {
        let (a, b) = twostate(0.1, 0.2, 3);
        let o = EnumerationOptions::default();
        let c = sequential_coupling(&a, &b, 3, &o).unwrap();
        let pa = ionescu_tulcea(&a, 3, &o).unwrap();
        let pb = ionescu_tulcea(&b, 3, &o).unwrap();
        for (m, p) in [(c.left_marginal(), &pa), (c.right_marginal(), &pb)] {
            assert!(m.tv_distance(p).unwrap() < 1e-12);
        }
        let d = coupled_diagonal_mass(&a, &b, 3, &o).unwrap();
        assert!((c.diagonal_mass() - d).abs() < 1e-14);
        // (0.5 + 0.4) · 0.8³
        assert!((d - 0.9 * 0.512).abs() < 1e-14);
        assert!(d <= pa.meet_mass(&pb).unwrap() + 1e-12);
    }

    #[test]
    fn sampler_identical_sequences_always_meet() {
        let (a, _) = twostate(0.0, 0.1, 4);
        let est = coupled_sampler(&a, &a, 4, 1000, 7).unwrap();
        assert_eq!(est.hits, 1000);
        assert_eq!(est.estimate, 1.0);
        assert_eq!(est.half_width, 0.0);
    }

    #[test]
    fn sampler_horizon_zero_matches_meet() {
        let a = KernelSequence::new(pm(&[0.5, 0.5]), vec![]).unwrap();
        let b = KernelSequence::new(pm(&[0.8, 0.2]), vec![]).unwrap();
        let est = coupled_sampler(&a, &b, 0, 20_000, 11).unwrap();
        assert!((est.estimate - 0.7).abs() <= 3.0 * est.half_width);
    }

    #[test]
    fn sampler_is_reproducible_and_validates() {
        let (a, b) = twostate(0.05, 0.1, 3);
        let x = coupled_sampler(&a, &b, 3, 30_000, 5).unwrap();
        let y = coupled_sampler(&a, &b, 3, 30_000, 5).unwrap();
        assert_eq!(x, y);
        assert_eq!(coupled_sampler(&a, &b, 3, 0, 5), Err(Error::ZeroSamples));
        assert!(matches!(
            coupled_sampler(&a, &b, 4, 10, 5),
            Err(Error::HorizonExceeded { .. })
        ));
    }

    #[test]
    fn sampler_handles_history_kernels() {
        let s = two();
        let h = AtomSpace::product(&[s.clone(), s.clone()]).unwrap();
        let rows = vec![
            pm(&[0.3, 0.7]),
            pm(&[0.5, 0.5]),
            pm(&[0.9, 0.1]),
            pm(&[0.2, 0.8]),
        ];
        let full = FiniteKernel::new(&h, &s, rows).unwrap();
        let a = KernelSequence::new(
            pm(&[0.4, 0.6]),
            vec![StepKernel::Markov(flip(0.2)), StepKernel::History(full)],
        )
        .unwrap();
        let b = KernelSequence::homogeneous(pm(&[0.5, 0.5]), &flip(0.3), 2).unwrap();
        let exact = coupled_diagonal_mass(&a, &b, 2, &EnumerationOptions::default()).unwrap();
        let est = coupled_sampler(&a, &b, 2, 100_000, 3).unwrap();
        assert!((est.estimate - exact).abs() <= 3.0 * est.half_width);
    }
}
