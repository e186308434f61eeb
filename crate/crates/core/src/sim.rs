//! Exact finite-volume free energies by enumerating all `2^N` configurations.
//!
//! A configuration is a spin `α_s ∈ [0, 2^(N/n))` per species. The disorder
//! symbol of subset `J` at sample `i` is drawn from `μ_J` by a stateless
//! keyed hash of `(seed, J, scope, α_scope, i)`, where `scope` is the species
//! set whose spins index the draw: `J` itself for the exact model and the
//! chain's nested set `A_(k_J)` for the coarse-grained one. Nothing is
//! stored between runs and re-keying costs nothing.
//!
//! Enumeration recurses over species in chain order. At depth `d` every
//! subset of level `T_d` adds its per-sample flat-index offsets to a running
//! index buffer, so a leaf only sums `φ` over `N` precomputed indices. Work is
//! split into a fixed number of outer-spin chunks whose partial log-sum-exp
//! states are merged in order, making results independent of thread count.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chains::Chain;
use crate::error::{GremError, Result};
use crate::model::{phi_table, JointMeasure, ModelSpec, SubsetId};

/// Environment variable overriding the enumeration budget.
pub const BUDGET_ENV: &str = "GREMLAB_BUDGET";
/// Number of outer-spin chunks the enumeration is split into.
const OUTER_CHUNKS: u64 = 256;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// Identifies one disorder draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DisorderKey {
    pub seed: u64,
    pub subset: SubsetId,
    /// Species whose spins form `alpha`.
    pub scope: SubsetId,
    /// Spins of the scope species in increasing species order, mixed radix
    /// `2^(N/n)` with the lowest species most significant.
    pub alpha: u64,
    pub sample: u32,
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl DisorderKey {
    /// 64 hashed bits of the key.
    pub fn hash(&self) -> u64 {
        let fields = [
            (self.subset.mask() as u64) | (self.scope.mask() as u64) << 16,
            self.alpha,
            self.sample as u64,
        ];
        fields
            .iter()
            .fold(mix(self.seed.wrapping_add(GOLDEN)), |h, f| mix(h.wrapping_add(GOLDEN) ^ f))
    }

    /// Uniform variate in `[0, 1)` with 53 random bits.
    pub fn uniform(&self) -> f64 {
        (self.hash() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Inverse-CDF sample from `law` at the key's uniform variate.
pub fn draw_symbol(key: &DisorderKey, law: &[f64]) -> usize {
    symbol_from_cdf(key.uniform(), &cumulative(law))
}

fn cumulative(law: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    law.iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

fn symbol_from_cdf(u: f64, cdf: &[f64]) -> usize {
    match cdf.iter().position(|&c| u < c) {
        Some(s) => s,
        // Rounding left the total just under u: take the last charged symbol.
        None => (0..cdf.len())
            .rev()
            .find(|&s| cdf[s] > if s == 0 { 0.0 } else { cdf[s - 1] })
            .unwrap_or(0),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    #[serde(rename = "N")]
    pub volume: usize,
    pub seed: u64,
    pub chain: Option<Chain>,
    /// `(1/N) log(2^(-N) Σ_α e^(H_N(α)))`.
    pub free_energy: f64,
    pub wall_time_secs: f64,
}

/// Default cap on `N·2^N`: the value at `N = 24, 24, 18, 16` for
/// `n = 1, 2, 3, 4`.
pub fn default_budget(n: usize) -> u128 {
    let nmax: u32 = match n {
        1 | 2 => 24,
        3 => 18,
        _ => 16,
    };
    nmax as u128 * (1u128 << nmax)
}

/// The budget from [`BUDGET_ENV`], falling back to [`default_budget`].
pub fn budget(n: usize) -> Result<u128> {
    match std::env::var(BUDGET_ENV) {
        Ok(v) => v
            .trim()
            .parse::<u128>()
            .map_err(|_| GremError::InvalidArgument(format!("{BUDGET_ENV}='{v}' is not an integer"))),
        Err(_) => Ok(default_budget(n)),
    }
}

fn check_volume(spec: &ModelSpec, volume: usize, budget: u128) -> Result<()> {
    let n = spec.n();
    if volume == 0 || volume % n != 0 {
        return Err(GremError::VolumeNotDivisible { volume, species: n });
    }
    let work = if volume >= 120 {
        u128::MAX
    } else {
        volume as u128 * (1u128 << volume)
    };
    if work > budget {
        return Err(GremError::BudgetExceeded { volume, work, budget });
    }
    Ok(())
}

struct SubsetPlan {
    subset: SubsetId,
    scope: SubsetId,
    /// Scope species other than the outer one, increasing.
    local_species: Vec<usize>,
    /// Offset of symbol 1 in the flat index.
    stride: u32,
    cdf: Vec<f64>,
    blockwise: bool,
}

struct Plan {
    volume: usize,
    seed: u64,
    bits: usize,
    /// Species enumerated at each depth.
    order: Vec<usize>,
    /// Subsets whose offsets are added at each depth.
    levels: Vec<Vec<SubsetPlan>>,
}

impl Plan {
    fn new(spec: &ModelSpec, volume: usize, seed: u64, chain: &Chain, coarse: bool) -> Self {
        let n = spec.n();
        let s = spec.alphabet_size() as u32;
        let coords = spec.coords();
        let outer = chain.perm()[0];
        let levels = (1..=n)
            .map(|k| {
                chain
                    .level(k)
                    .into_iter()
                    .map(|j| {
                        let scope = if coarse { chain.nested_set(k) } else { j };
                        SubsetPlan {
                            subset: j,
                            scope,
                            local_species: scope.species().filter(|&x| x != outer).collect(),
                            stride: s.pow((coords - 1 - j.index()) as u32),
                            cdf: cumulative(spec.mu(j)),
                            blockwise: scope.contains(outer),
                        }
                    })
                    .collect()
            })
            .collect();
        Plan {
            volume,
            seed,
            bits: volume / n,
            order: chain.perm().to_vec(),
            levels,
        }
    }

    fn radix(&self) -> u64 {
        1u64 << self.bits
    }

    /// Offsets of one row: the draws at `alpha` for samples `0..N`.
    fn fill_row(&self, sp: &SubsetPlan, alpha: u64, out: &mut Vec<u32>) {
        for i in 0..self.volume {
            let key = DisorderKey {
                seed: self.seed,
                subset: sp.subset,
                scope: sp.scope,
                alpha,
                sample: i as u32,
            };
            out.push(symbol_from_cdf(key.uniform(), &sp.cdf) as u32 * sp.stride);
        }
    }

    /// Composite scope index from the spins of the scope species.
    fn scope_alpha(&self, sp: &SubsetPlan, spins: &[u64]) -> u64 {
        sp.scope.species().fold(0, |acc, x| (acc << self.bits) | spins[x])
    }

    /// All rows of `sp` with the outer spin fixed (blockwise) or free.
    fn rows(&self, sp: &SubsetPlan, outer_spin: u64) -> Vec<u32> {
        let outer = self.order[0];
        let count = 1usize << (self.bits * sp.local_species.len());
        let mut spins = vec![0u64; self.order.len() + 1];
        spins[outer] = outer_spin;
        let mut out = Vec::with_capacity(count * self.volume);
        for r in 0..count as u64 {
            let mut rest = r;
            for &x in sp.local_species.iter().rev() {
                spins[x] = rest & (self.radix() - 1);
                rest >>= self.bits;
            }
            self.fill_row(sp, self.scope_alpha(sp, &spins), &mut out);
        }
        out
    }

    fn row_index(&self, sp: &SubsetPlan, spins: &[u64]) -> usize {
        sp.local_species.iter().fold(0, |acc, &x| (acc << self.bits) | spins[x]) as usize
    }

    /// Visits every configuration, passing its `N` flat indices to `leaf`.
    fn enumerate<A, L, M>(&self, init: impl Fn() -> A + Sync, leaf: L, merge: M) -> A
    where
        A: Send,
        L: Fn(&mut A, &[u32]) + Sync,
        M: Fn(&mut A, A),
    {
        let global: Vec<Vec<Vec<u32>>> = self
            .levels
            .iter()
            .map(|lv| {
                lv.iter()
                    .map(|sp| if sp.blockwise { Vec::new() } else { self.rows(sp, 0) })
                    .collect()
            })
            .collect();
        let radix = self.radix();
        let chunk = radix.div_ceil(OUTER_CHUNKS).max(1);
        let chunks: Vec<(u64, u64)> = (0..radix.div_ceil(chunk))
            .map(|c| (c * chunk, ((c + 1) * chunk).min(radix)))
            .collect();
        let parts: Vec<A> = chunks
            .par_iter()
            .map(|&(lo, hi)| {
                let mut acc = init();
                let depth_count = self.order.len();
                let mut buffers = vec![vec![0u32; self.volume]; depth_count + 1];
                let mut spins = vec![0u64; depth_count + 1];
                for outer_spin in lo..hi {
                    let block: Vec<Vec<Vec<u32>>> = self
                        .levels
                        .iter()
                        .map(|lv| {
                            lv.iter()
                                .map(|sp| if sp.blockwise { self.rows(sp, outer_spin) } else { Vec::new() })
                                .collect()
                        })
                        .collect();
                    spins[self.order[0]] = outer_spin;
                    self.descend(0, &mut spins, &mut buffers, &global, &block, &mut acc, &leaf);
                }
                acc
            })
            .collect();
        let mut parts = parts.into_iter();
        let mut total = parts.next().expect("at least one chunk");
        for p in parts {
            merge(&mut total, p);
        }
        total
    }

    /// Adds the level-`depth` offsets to the running indices, then recurses
    /// over the next species. The outer spin is set by the caller.
    #[allow(clippy::too_many_arguments)]
    fn descend<A>(
        &self,
        depth: usize,
        spins: &mut [u64],
        buffers: &mut [Vec<u32>],
        global: &[Vec<Vec<u32>>],
        block: &[Vec<Vec<u32>>],
        acc: &mut A,
        leaf: &impl Fn(&mut A, &[u32]),
    ) {
        if depth == self.order.len() {
            return leaf(acc, &buffers[depth]);
        }
        let spin_range = if depth == 0 { 0..1 } else { 0..self.radix() };
        for spin in spin_range {
            if depth > 0 {
                spins[self.order[depth]] = spin;
            }
            let (head, tail) = buffers.split_at_mut(depth + 1);
            let next = &mut tail[0];
            next.copy_from_slice(&head[depth]);
            for (c, sp) in self.levels[depth].iter().enumerate() {
                let table = if sp.blockwise { &block[depth][c] } else { &global[depth][c] };
                let r = self.row_index(sp, spins);
                for (b, o) in next.iter_mut().zip(&table[r * self.volume..(r + 1) * self.volume]) {
                    *b += o;
                }
            }
            self.descend(depth + 1, spins, buffers, global, block, acc, leaf);
        }
    }
}

/// Streaming log-sum-exp as `(max, Σ e^(x − max))`.
#[derive(Clone, Copy, Debug)]
struct Lse {
    max: f64,
    sum: f64,
}

impl Lse {
    fn new() -> Self {
        Lse { max: f64::NEG_INFINITY, sum: 0.0 }
    }

    fn push(&mut self, x: f64) {
        if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    fn merge(&mut self, o: Lse) {
        if o.max == f64::NEG_INFINITY {
            return;
        }
        if o.max > self.max {
            self.sum = self.sum * (self.max - o.max).exp() + o.sum;
            self.max = o.max;
        } else {
            self.sum += o.sum * (o.max - self.max).exp();
        }
    }

    fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

fn free_energy_impl(spec: &ModelSpec, volume: usize, seed: u64, chain: Option<&Chain>, budget: u128) -> Result<SimResult> {
    check_volume(spec, volume, budget)?;
    if let Some(c) = chain {
        if c.n() != spec.n() {
            return Err(GremError::ShapeMismatch("chain does not match the model".into()));
        }
    }
    let start = Instant::now();
    let identity = Chain::identity(spec.n());
    let plan = Plan::new(spec, volume, seed, chain.unwrap_or(&identity), chain.is_some());
    let phi = phi_table(spec);
    let lse = plan.enumerate(
        Lse::new,
        |acc, idx| acc.push(idx.iter().map(|&k| phi[k as usize]).sum()),
        |a, b| a.merge(b),
    );
    let free_energy = (lse.value() - volume as f64 * std::f64::consts::LN_2) / volume as f64;
    Ok(SimResult {
        volume,
        seed,
        chain: chain.cloned(),
        free_energy,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Quenched free energy of one disorder realization.
pub fn free_energy_exact(spec: &ModelSpec, volume: usize, seed: u64) -> Result<SimResult> {
    free_energy_impl(spec, volume, seed, None, budget(spec.n())?)
}

/// Same enumeration with subset `J` keyed by the spins of `A_(k_J)`.
pub fn free_energy_chain(spec: &ModelSpec, chain: &Chain, volume: usize, seed: u64) -> Result<SimResult> {
    free_energy_impl(spec, volume, seed, Some(chain), budget(spec.n())?)
}

/// As [`free_energy_exact`] / [`free_energy_chain`] with an explicit budget.
pub fn free_energy_with_budget(
    spec: &ModelSpec,
    chain: Option<&Chain>,
    volume: usize,
    seed: u64,
    budget: u128,
) -> Result<SimResult> {
    free_energy_impl(spec, volume, seed, chain, budget)
}

/// Runs each volume in turn.
pub fn sweep(spec: &ModelSpec, chain: Option<&Chain>, volumes: &[usize], seed: u64) -> Result<Vec<SimResult>> {
    let budget = budget(spec.n())?;
    volumes
        .iter()
        .map(|&v| free_energy_impl(spec, v, seed, chain, budget))
        .collect()
}

/// Number of configurations whose empirical measure lies strictly within
/// total-variation distance `radius` of `center`. Any radius of at least 1
/// covers everything.
pub fn count_in_ball(spec: &ModelSpec, volume: usize, seed: u64, center: &JointMeasure, radius: f64) -> Result<u64> {
    count_in_ball_with_budget(spec, volume, seed, center, radius, budget(spec.n())?)
}

pub fn count_in_ball_with_budget(
    spec: &ModelSpec,
    volume: usize,
    seed: u64,
    center: &JointMeasure,
    radius: f64,
    budget: u128,
) -> Result<u64> {
    check_volume(spec, volume, budget)?;
    if !center.is_joint() || center.n() != spec.n() || center.alphabet_size() != spec.alphabet_size() {
        return Err(GremError::ShapeMismatch("center does not match the model".into()));
    }
    if radius.is_nan() {
        return Err(GremError::InvalidArgument("radius is NaN".into()));
    }
    if radius >= 1.0 {
        return Ok(1u64 << volume);
    }
    if radius <= 0.0 {
        return Ok(0);
    }
    let plan = Plan::new(spec, volume, seed, &Chain::identity(spec.n()), false);
    let c = center.weights();
    let step = 1.0 / volume as f64;
    Ok(plan.enumerate(
        || 0u64,
        |acc, idx| {
            let mut cells: Vec<u32> = idx.to_vec();
            cells.sort_unstable();
            // TV over the support of L, plus the center mass it misses.
            let mut diff = 0.0;
            let mut covered = 0.0;
            let mut i = 0;
            while i < cells.len() {
                let mut j = i;
                while j < cells.len() && cells[j] == cells[i] {
                    j += 1;
                }
                let q = c[cells[i] as usize];
                diff += ((j - i) as f64 * step - q).abs();
                covered += q;
                i = j;
            }
            let tv = 0.5 * (diff + (1.0 - covered).max(0.0));
            if tv < radius {
                *acc += 1;
            }
        },
        |a, b| *a += b,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{product_measure, PhiSpec};

    fn spec(n: usize, table: Vec<f64>) -> ModelSpec {
        ModelSpec::new(n, 2, None, vec![vec![0.5, 0.5]; (1 << n) - 1], PhiSpec::Table(table)).unwrap()
    }

    fn key(i: u32) -> DisorderKey {
        DisorderKey {
            seed: 9,
            subset: SubsetId::singleton(1),
            scope: SubsetId::singleton(1),
            alpha: 3,
            sample: i,
        }
    }

    #[test]
    fn draws_are_deterministic() {
        let law = [0.3, 0.3, 0.4];
        assert_eq!(draw_symbol(&key(4), &law), draw_symbol(&key(4), &law));
        for i in 0..1000 {
            assert_eq!(draw_symbol(&key(i), &[1.0, 0.0]), 0);
            assert_eq!(draw_symbol(&key(i), &[0.0, 0.0, 1.0]), 2);
        }
    }

    #[test]
    fn cdf_rounding_falls_back_to_last_charged_symbol() {
        let cdf = [0.5, 0.9999999999999999, 0.9999999999999999];
        assert_eq!(symbol_from_cdf(0.99999999999999995, &cdf), 1);
    }

    #[test]
    fn trivial_free_energies() {
        let r = free_energy_exact(&spec(2, vec![0.0; 8]), 8, 1).unwrap();
        assert_eq!(r.free_energy, 0.0);
        let r = free_energy_exact(&spec(2, vec![0.75; 8]), 8, 1).unwrap();
        assert!((r.free_energy - 0.75).abs() < 1e-14);
    }

    #[test]
    fn volume_checks() {
        let s = spec(2, vec![0.0; 8]);
        assert!(matches!(free_energy_exact(&s, 7, 0), Err(GremError::VolumeNotDivisible { .. })));
        assert!(matches!(free_energy_exact(&s, 0, 0), Err(GremError::VolumeNotDivisible { .. })));
        assert!(matches!(
            free_energy_with_budget(&s, None, 12, 0, 1000),
            Err(GremError::BudgetExceeded { .. })
        ));
        assert!(default_budget(3) < default_budget(2));
    }

    #[test]
    fn ball_edge_radii() {
        let s = spec(1, vec![0.0, 1.0]);
        let mu = product_measure(&s);
        assert_eq!(count_in_ball(&s, 10, 3, &mu, 1.0).unwrap(), 1024);
        assert_eq!(count_in_ball(&s, 10, 3, &mu, 0.0).unwrap(), 0);
    }

    #[test]
    fn lse_merge_matches_direct() {
        let xs = [3.0, -1.0, 700.0, 2.5, 699.0];
        let mut a = Lse::new();
        xs.iter().for_each(|x| a.push(*x));
        let mut b = Lse::new();
        let mut c = Lse::new();
        xs[..2].iter().for_each(|x| b.push(*x));
        xs[2..].iter().for_each(|x| c.push(*x));
        b.merge(c);
        let direct = 700.0 + xs.iter().map(|x| (x - 700.0).exp()).sum::<f64>().ln();
        assert!((a.value() - direct).abs() < 1e-12);
        assert!((b.value() - direct).abs() < 1e-12);
    }
}
