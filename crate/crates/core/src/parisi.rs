//! The chain-wise Parisi functional.
//!
//! For a chain with level sets `T_1..T_n`, coordinates are laid out in chain
//! order (all of `T_1`, then `T_2`, ...), first level most significant. The
//! table of `φ_k` then lives on a prefix of that layout and the `T_k` block is
//! the fastest-varying part of its index, so the backward recursion
//!
//! ```text
//! φ_(k-1)(x) = (1/m_k) log Σ_y exp(m_k φ_k(x, y)) μ^(T_k)(y)
//! ```
//!
//! reduces contiguous runs. `P(m) = (log 2 / n) Σ 1/m_k + φ_0`.

use std::f64::consts::LN_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chains::{enumerate_chains, Chain};
use crate::error::{GremError, Result};
use crate::isotonic::project_monotone_box;
use crate::model::{index_map, phi_table, product_weights, ModelSpec, SubsetId};

/// Lower clamp for every component of `m`.
pub const M_FLOOR: f64 = 1e-6;
/// Stop once the projected-gradient step is shorter than this.
pub const PG_TOLERANCE: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 100_000;
pub const MULTI_STARTS: usize = 8;
/// Random starts must land within this of the reported minimum.
pub const CERTIFY_TOLERANCE: f64 = 1e-7;
/// Chain values closer than this count as tied; the earlier chain wins.
pub const TIE_TOLERANCE: f64 = 1e-12;

const START_SEED_BASE: u64 = 0x5eed_0f_c4a1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParisiPoint {
    pub chain: Chain,
    pub m: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParisiResult {
    pub point: ParisiPoint,
    pub converged: bool,
    /// Every random start reached the same value.
    pub certified: bool,
    pub iterations: usize,
    /// Values reached from each random start.
    pub start_values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalParisi {
    /// Index into `chains` of the minimal chain.
    pub best: usize,
    pub chains: Vec<ParisiResult>,
}

impl GlobalParisi {
    pub fn best(&self) -> &ParisiResult {
        &self.chains[self.best]
    }

    pub fn value(&self) -> f64 {
        self.best().point.value
    }
}

/// `φ_k` for `k = 0..=n`, each in chain-order layout. `levels[0]` has one entry.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiStack {
    pub levels: Vec<Vec<f64>>,
}

impl PhiStack {
    pub fn phi0(&self) -> f64 {
        self.levels[0][0]
    }
}

/// Per-chain data reused across evaluations: the re-indexed interaction
/// table and the log-weights of each level block.
#[derive(Clone, Debug)]
pub struct ChainEvaluator {
    chain: Chain,
    alphabet_size: usize,
    phi: Vec<f64>,
    /// `log μ^(T_k)(y)` for each level, indexed `k-1`.
    log_block: Vec<Vec<f64>>,
    /// Per level `k`, the map from chain-order prefix index to canonical
    /// index over `prefix_coords(k)`, indexed `k-1`.
    to_canonical: Vec<Vec<usize>>,
}

impl ChainEvaluator {
    pub fn new(spec: &ModelSpec, chain: &Chain) -> Result<Self> {
        if chain.n() != spec.n() {
            return Err(GremError::ShapeMismatch(format!(
                "chain over {} species, model has {}",
                chain.n(),
                spec.n()
            )));
        }
        let s = spec.alphabet_size();
        let levels = chain.levels();
        let order: Vec<SubsetId> = levels.concat();
        let canonical = spec.subsets();
        let map = index_map(s, &order, &canonical);
        let table = phi_table(spec);
        let phi = map.iter().map(|&c| table[c]).collect();
        let log_block = levels
            .iter()
            .map(|level| {
                product_weights(level.iter().map(|&j| spec.mu(j)))
                    .into_iter()
                    .map(f64::ln)
                    .collect()
            })
            .collect();
        let to_canonical = (1..=chain.n())
            .map(|k| {
                let prefix = &order[..(1 << k) - 1];
                index_map(s, prefix, chain.prefix_coords(k).members())
            })
            .collect();
        Ok(ChainEvaluator {
            chain: chain.clone(),
            alphabet_size: s,
            phi,
            log_block,
            to_canonical,
        })
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn n(&self) -> usize {
        self.chain.n()
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    /// Number of cells in the `T_k` block.
    pub fn block_len(&self, k: usize) -> usize {
        self.log_block[k - 1].len()
    }

    /// Chain-order index to canonical index over `prefix_coords(k)`.
    pub fn canonical_map(&self, k: usize) -> &[usize] {
        &self.to_canonical[k - 1]
    }

    pub fn clamp(&self, m: &[f64]) -> Result<Vec<f64>> {
        if m.len() != self.n() {
            return Err(GremError::ShapeMismatch(format!(
                "m has {} components, chain has {} levels",
                m.len(),
                self.n()
            )));
        }
        if m.iter().any(|v| v.is_nan()) {
            return Err(GremError::InvalidArgument("m contains NaN".into()));
        }
        Ok(m.iter().map(|v| v.clamp(M_FLOOR, 1.0)).collect())
    }

    /// Backward recursion from `φ_n` down to the scalar `φ_0`. `m` must be
    /// clamped already.
    pub fn stack(&self, m: &[f64]) -> PhiStack {
        let n = self.n();
        let mut levels = vec![Vec::new(); n + 1];
        levels[n] = self.phi.clone();
        for k in (1..=n).rev() {
            let mk = m[k - 1];
            let logw = &self.log_block[k - 1];
            let upper = &levels[k];
            let lower: Vec<f64> = upper
                .chunks_exact(logw.len())
                .map(|row| {
                    let shift = row
                        .iter()
                        .zip(logw)
                        .map(|(p, w)| mk * p + w)
                        .fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = row.iter().zip(logw).map(|(p, w)| (mk * p + w - shift).exp()).sum();
                    (shift + sum.ln()) / mk
                })
                .collect();
            levels[k - 1] = lower;
        }
        PhiStack { levels }
    }

    /// `log K_k(x, y)` in a dense `source × block` table.
    pub fn log_kernel(&self, stack: &PhiStack, m: &[f64], k: usize) -> Vec<f64> {
        let mk = m[k - 1];
        let logw = &self.log_block[k - 1];
        let lower = &stack.levels[k - 1];
        stack.levels[k]
            .chunks_exact(logw.len())
            .zip(lower)
            .flat_map(|(row, base)| row.iter().zip(logw).map(move |(p, w)| w + mk * (p - base)))
            .collect()
    }

    /// Chain-order level laws `G_1..G_n`, with `G_k = G_(k-1) ⊗ K_k`.
    pub fn level_laws(&self, stack: &PhiStack, m: &[f64]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.n());
        let mut prev = vec![1.0];
        for k in 1..=self.n() {
            let kernel = self.log_kernel(stack, m, k);
            let b = self.block_len(k);
            let next: Vec<f64> = kernel
                .iter()
                .enumerate()
                .map(|(i, lk)| prev[i / b] * lk.exp())
                .collect();
            out.push(next.clone());
            prev = next;
        }
        out
    }

    /// `Σ_x G_(k-1)(x) H(K_k(x, ·) | μ^(T_k))` for each level.
    pub fn level_entropies(&self, stack: &PhiStack, m: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n());
        let mut prev = vec![1.0];
        for k in 1..=self.n() {
            let mk = m[k - 1];
            let logw = &self.log_block[k - 1];
            let b = logw.len();
            let lower = &stack.levels[k - 1];
            let mut h = 0.0;
            let mut next = Vec::with_capacity(prev.len() * b);
            for (x, row) in stack.levels[k].chunks_exact(b).enumerate() {
                let mut hx = 0.0;
                for (p, w) in row.iter().zip(logw) {
                    let log_ratio = mk * (p - lower[x]);
                    let kxy = (w + log_ratio).exp();
                    if kxy > 0.0 {
                        hx += kxy * log_ratio;
                    }
                    next.push(prev[x] * kxy);
                }
                h += prev[x] * hx;
            }
            out.push(h);
            prev = next;
        }
        out
    }

    pub fn value(&self, m: &[f64]) -> f64 {
        let stack = self.stack(m);
        penalty(m) + stack.phi0()
    }

    pub fn value_and_grad(&self, m: &[f64]) -> (f64, Vec<f64>) {
        let stack = self.stack(m);
        let c = LN_2 / self.n() as f64;
        let grad = self
            .level_entropies(&stack, m)
            .into_iter()
            .zip(m)
            .map(|(h, mk)| (h - c) / (mk * mk))
            .collect();
        (penalty(m) + stack.phi0(), grad)
    }

    fn point(&self, m: Vec<f64>) -> ParisiPoint {
        let (value, grad) = self.value_and_grad(&m);
        ParisiPoint {
            chain: self.chain.clone(),
            m,
            value,
            grad,
        }
    }

    /// Projected gradient descent with backtracking from `start`.
    fn descend(&self, start: &[f64]) -> Descent {
        let project = |x: &[f64]| project_monotone_box(x, M_FLOOR, 1.0);
        let mut m = project(start);
        let (mut v, mut g) = self.value_and_grad(&m);
        let mut step = 1.0;
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        for iter in 0..MAX_ITERATIONS {
            let target: Vec<f64> = m.iter().zip(&g).map(|(a, b)| a - b).collect();
            let pg = dist(&m, &project(&target));
            if pg < PG_TOLERANCE {
                return Descent { m, value: v, converged: true, iterations: iter };
            }
            // Barzilai-Borwein trial step, then halve until sufficient decrease.
            if let Some((pm, pgrad)) = &prev {
                let s: Vec<f64> = m.iter().zip(pm).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g.iter().zip(pgrad).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 0.0 {
                    step = (dot(&s, &s) / sy).clamp(1e-14, 1e6);
                } else {
                    step = (step * 4.0).min(1e6);
                }
            }
            let slack = 8.0 * f64::EPSILON * v.abs().max(1.0);
            let accepted = loop {
                let trial: Vec<f64> = m.iter().zip(&g).map(|(a, b)| a - step * b).collect();
                let cand = project(&trial);
                let d: Vec<f64> = cand.iter().zip(&m).map(|(a, b)| a - b).collect();
                let dd = dot(&d, &d);
                if dd == 0.0 {
                    break None;
                }
                let cv = self.value(&cand);
                if cv <= v + dot(&g, &d) + dd / (2.0 * step) + slack {
                    break Some(cand);
                }
                step *= 0.5;
                if step < 1e-18 {
                    break None;
                }
            };
            let Some(next) = accepted else {
                return Descent { m, value: v, converged: false, iterations: iter };
            };
            prev = Some((m, g));
            m = next;
            (v, g) = self.value_and_grad(&m);
        }
        let target: Vec<f64> = m.iter().zip(&g).map(|(a, b)| a - b).collect();
        let converged = dist(&m, &project(&target)) < PG_TOLERANCE;
        Descent { m, value: v, converged, iterations: MAX_ITERATIONS }
    }

    /// Minimizes over `{ε ≤ m_1 ≤ … ≤ m_n ≤ 1}` from `m = (1,…,1)` and from
    /// seeded random starts, reporting the best point.
    pub fn minimize(&self, seed: u64) -> ParisiResult {
        let n = self.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let starts: Vec<Vec<f64>> = (0..MULTI_STARTS)
            .map(|_| {
                let mut s: Vec<f64> = (0..n).map(|_| rng.random_range(M_FLOOR..=1.0)).collect();
                s.sort_by(f64::total_cmp);
                s
            })
            .collect();
        let primary = self.descend(&vec![1.0; n]);
        let others: Vec<Descent> = starts.iter().map(|s| self.descend(s)).collect();
        let mut best = &primary;
        for d in &others {
            if d.value < best.value {
                best = d;
            }
        }
        let certified = others.iter().all(|d| (d.value - best.value).abs() <= CERTIFY_TOLERANCE);
        ParisiResult {
            point: self.point(best.m.clone()),
            converged: best.converged,
            certified,
            iterations: primary.iterations + others.iter().map(|d| d.iterations).sum::<usize>(),
            start_values: others.iter().map(|d| d.value).collect(),
        }
    }
}

struct Descent {
    m: Vec<f64>,
    value: f64,
    converged: bool,
    iterations: usize,
}

fn penalty(m: &[f64]) -> f64 {
    LN_2 / m.len() as f64 * m.iter().map(|v| 1.0 / v).sum::<f64>()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// `φ_n..φ_0` at `m`, components clamped to `[ε, 1]`.
pub fn phi_stack(spec: &ModelSpec, chain: &Chain, m: &[f64]) -> Result<PhiStack> {
    let ev = ChainEvaluator::new(spec, chain)?;
    let m = ev.clamp(m)?;
    Ok(ev.stack(&m))
}

pub fn parisi_value(spec: &ModelSpec, chain: &Chain, m: &[f64]) -> Result<f64> {
    let ev = ChainEvaluator::new(spec, chain)?;
    let m = ev.clamp(m)?;
    Ok(ev.value(&m))
}

/// Analytic gradient `∂_j P = (H_j − log 2 / n) / m_j²`, with `H_j` the
/// averaged entropy of the level-`j` kernel against `μ^(T_j)`.
pub fn parisi_grad(spec: &ModelSpec, chain: &Chain, m: &[f64]) -> Result<Vec<f64>> {
    let ev = ChainEvaluator::new(spec, chain)?;
    let m = ev.clamp(m)?;
    Ok(ev.value_and_grad(&m).1)
}

/// Seed for the random starts of the chain at position `index` in
/// lexicographic order.
pub fn start_seed(index: usize) -> u64 {
    START_SEED_BASE ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

pub fn minimize_parisi(spec: &ModelSpec, chain: &Chain) -> Result<ParisiResult> {
    let index = enumerate_chains(spec.n())?
        .iter()
        .position(|c| c == chain)
        .ok_or_else(|| GremError::ShapeMismatch("chain does not match the model".into()))?;
    Ok(ChainEvaluator::new(spec, chain)?.minimize(start_seed(index)))
}

/// Minimizes every chain in parallel. Output order and tie-breaking are
/// independent of scheduling.
pub fn global_parisi_min(spec: &ModelSpec) -> Result<GlobalParisi> {
    let chains = enumerate_chains(spec.n())?;
    let results = chains
        .par_iter()
        .enumerate()
        .map(|(i, c)| Ok(ChainEvaluator::new(spec, c)?.minimize(start_seed(i))))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.point.value < results[best].point.value - TIE_TOLERANCE {
            best = i;
        }
    }
    Ok(GlobalParisi { best, chains: results })
}
