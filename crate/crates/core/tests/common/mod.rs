//! Brute-force reference computations shared by the integration tests.
//! They read raw probability tables out of the model types and redo every
//! computation with plain loops.
#![allow(dead_code)]

use std::collections::HashMap;

use tvbound::product::KernelSequence;

/// Plain tables of a kernel sequence on `{0, …, k − 1}` at every coordinate.
pub struct RawChain {
    pub k: usize,
    pub initial: Vec<f64>,
    /// `(markov, rows)` per step.
    pub steps: Vec<(bool, Vec<Vec<f64>>)>,
}

impl RawChain {
    pub fn of(seq: &KernelSequence) -> Self {
        RawChain {
            k: seq.spaces()[0].len(),
            initial: seq.initial().weights().to_vec(),
            steps: seq
                .steps()
                .iter()
                .map(|s| {
                    (
                        s.is_markov(),
                        s.kernel()
                            .rows()
                            .iter()
                            .map(|r| r.weights().to_vec())
                            .collect(),
                    )
                })
                .collect(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Row used by step `k` (1-based) after `history`.
    pub fn row(&self, k: usize, history: &[u32]) -> &[f64] {
        let (markov, rows) = &self.steps[k - 1];
        let idx = if *markov {
            history[k - 1] as usize
        } else {
            history[..k]
                .iter()
                .fold(0usize, |acc, &x| acc * self.k + x as usize)
        };
        &rows[idx]
    }

    pub fn path_prob(&self, path: &[u32]) -> f64 {
        let mut p = self.initial[path[0] as usize];
        for k in 1..path.len() {
            p *= self.row(k, path)[path[k] as usize];
        }
        p
    }
}

/// Every path of length `len` over `{0, …, k − 1}` in row-major order.
pub fn odometer(k: usize, len: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut path = vec![0u32; len];
    loop {
        out.push(path.clone());
        let mut i = len;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            path[i] += 1;
            if (path[i] as usize) < k {
                break;
            }
            path[i] = 0;
        }
    }
}

/// Full path law up to horizon `n`, zero-probability paths included.
pub fn path_law(chain: &RawChain, n: usize) -> HashMap<Vec<u32>, f64> {
    odometer(chain.k, n + 1)
        .into_iter()
        .map(|p| {
            let w = chain.path_prob(&p);
            (p, w)
        })
        .collect()
}

/// Nonnegative terms added smallest first.
pub fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn overlap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.min(*y)).sum()
}

/// Exact TV distance and meet mass of two path laws at horizon `n`.
pub fn path_tv_and_meet(a: &RawChain, b: &RawChain, n: usize) -> (f64, f64) {
    let mut d = Vec::new();
    let mut m = Vec::new();
    for p in odometer(a.k, n + 1) {
        let (x, y) = (a.path_prob(&p), b.path_prob(&p));
        d.push((x - y).abs());
        m.push(x.min(y));
    }
    (sorted_sum(d), sorted_sum(m))
}

/// Per-step constants `(c_k, a_k)` with the supremum over every history.
pub fn all_history_constants(a: &RawChain, b: &RawChain, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut c = vec![tv(&a.initial, &b.initial)];
    let mut o = vec![overlap(&a.initial, &b.initial)];
    for k in 1..=n {
        let mut ck: f64 = 0.0;
        let mut ok: f64 = 1.0;
        for h in odometer(a.k, k) {
            ck = ck.max(tv(a.row(k, &h), b.row(k, &h)));
            ok = ok.min(overlap(a.row(k, &h), b.row(k, &h)));
        }
        c.push(ck);
        o.push(ok);
    }
    (c, o)
}

/// Diagonal mass of the step-by-step maximal coupling: the pair stays
/// together at step `k` with probability `min(P_h(y), P̃_h(y))` summed over `y`.
pub fn coupled_diagonal(a: &RawChain, b: &RawChain, n: usize) -> f64 {
    odometer(a.k, n + 1)
        .iter()
        .map(|p| {
            let mut w = a.initial[p[0] as usize].min(b.initial[p[0] as usize]);
            for k in 1..=n {
                let y = p[k] as usize;
                w *= a.row(k, p)[y].min(b.row(k, p)[y]);
            }
            w
        })
        .sum()
}
