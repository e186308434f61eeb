//! Instance generators and independently coded oracles shared by the
//! integration tests. Nothing here calls the solvers under test.

#![allow(dead_code)]

use std::f64::consts::LN_2;

use gremlab::model::PhiSpec;
use gremlab::sim::{draw_symbol, DisorderKey};
use gremlab::{ModelSpec, SubsetId};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

pub fn table_spec(n: usize, s: usize, mu: Vec<Vec<f64>>, table: Vec<f64>) -> ModelSpec {
    ModelSpec::new(n, s, None, mu, PhiSpec::Table(table)).expect("valid test model")
}

/// `n = 1`, uniform binary `μ`, `φ = (0, 1)`.
pub fn rem() -> ModelSpec {
    table_spec(1, 2, vec![vec![0.5, 0.5]], vec![0.0, 1.0])
}

pub fn zero_field(n: usize) -> ModelSpec {
    table_spec(n, 2, vec![vec![0.5, 0.5]; (1 << n) - 1], vec![0.0; 1 << ((1 << n) - 1)])
}

/// Flat Dirichlet(1, …, 1) draw.
pub fn dirichlet(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// `μ_J` Dirichlet(1, …, 1), `φ` entries uniform in `[-amp, amp]`.
pub fn random_instance(rng: &mut impl Rng, n: usize, s: usize, amp: f64) -> ModelSpec {
    let coords = (1 << n) - 1;
    let mu = (0..coords).map(|_| dirichlet(rng, s)).collect();
    let table = (0..s.pow(coords as u32)).map(|_| rng.random_range(-amp..=amp)).collect();
    table_spec(n, s, mu, table)
}

fn lse(terms: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `F_N` by a direct double loop: every configuration, every sample, every
/// subset drawn afresh from its key.
pub fn naive_free_energy(spec: &ModelSpec, volume: usize, seed: u64) -> f64 {
    let n = spec.n();
    let s = spec.alphabet_size();
    let radix = 1u64 << (volume / n);
    let subsets: Vec<SubsetId> = (1..1u16 << n).map(|m| SubsetId::new(m, n).unwrap()).collect();
    let table = gremlab::model::phi_table(spec);
    let mut terms = Vec::with_capacity(1 << volume);
    for config in 0..1u64 << volume {
        // Species 1 is the most significant digit of `config`.
        let spins: Vec<u64> = (0..n).map(|k| (config / radix.pow((n - 1 - k) as u32)) % radix).collect();
        let mut h = 0.0;
        for i in 0..volume {
            let mut idx = 0;
            for &j in &subsets {
                let alpha = j.species().fold(0u64, |a, sp| a * radix + spins[sp - 1]);
                let key = DisorderKey {
                    seed,
                    subset: j,
                    scope: j,
                    alpha,
                    sample: i as u32,
                };
                idx = idx * s + draw_symbol(&key, spec.mu(j));
            }
            h += table[idx];
        }
        terms.push(h);
    }
    (lse(terms.into_iter()) - volume as f64 * LN_2) / volume as f64
}

/// Single-species Parisi functional straight from its definition.
pub fn parisi_one(spec: &ModelSpec, m: f64) -> f64 {
    let mu = spec.mu(SubsetId::full(1));
    let phi = gremlab::model::phi_table(spec);
    LN_2 / m + lse((0..mu.len()).map(|x| m * phi[x] + mu[x].ln())) / m
}

/// Two-species Parisi functional for the chain with first species `first`.
/// Coordinates are `(x_1, x_2, x_12)`.
pub fn parisi_two(spec: &ModelSpec, first: usize, m1: f64, m2: f64) -> f64 {
    let s = spec.alphabet_size();
    let phi = gremlab::model::phi_table(spec);
    let mu1 = spec.mu(SubsetId::singleton(1));
    let mu2 = spec.mu(SubsetId::singleton(2));
    let mu12 = spec.mu(SubsetId::full(2));
    let (lead, other) = if first == 1 { (mu1, mu2) } else { (mu2, mu1) };
    let at = |a: usize, b: usize, c: usize| {
        let (x1, x2) = if first == 1 { (a, b) } else { (b, a) };
        phi[(x1 * s + x2) * s + c]
    };
    let phi1: Vec<f64> = (0..s)
        .map(|a| {
            let mut terms = Vec::new();
            for b in 0..s {
                for c in 0..s {
                    terms.push(m2 * at(a, b, c) + other[b].ln() + mu12[c].ln());
                }
            }
            lse(terms.into_iter()) / m2
        })
        .collect();
    let phi0 = lse((0..s).map(|a| m1 * phi1[a] + lead[a].ln())) / m1;
    LN_2 / 2.0 * (1.0 / m1 + 1.0 / m2) + phi0
}

/// Minimum of `f` over `[1e-6, 1]` by a uniform scan at `step`.
pub fn scan_one(f: impl Fn(f64) -> f64, step: f64) -> (f64, f64) {
    let count = ((1.0 - 1e-6) / step).ceil() as usize;
    (0..=count)
        .map(|i| (1e-6 + i as f64 * step).min(1.0))
        .map(|m| (f(m), m))
        .fold((f64::INFINITY, 1.0), |a, b| if b.0 < a.0 { b } else { a })
}

/// Minimum over `1e-6 ≤ m1 ≤ m2 ≤ 1` by a coarse scan at 1e-3 followed by a
/// fine scan at 1e-5 around the coarse winner.
pub fn scan_two(f: impl Fn(f64, f64) -> f64) -> (f64, [f64; 2]) {
    let grid = |lo1: f64, hi1: f64, lo2: f64, hi2: f64, step: f64| {
        let mut best = (f64::INFINITY, [1.0, 1.0]);
        let n1 = ((hi1 - lo1) / step).round() as usize;
        let n2 = ((hi2 - lo2) / step).round() as usize;
        for i in 0..=n1 {
            let a = (lo1 + i as f64 * step).clamp(1e-6, 1.0);
            for j in 0..=n2 {
                let b = (lo2 + j as f64 * step).clamp(1e-6, 1.0);
                if a > b {
                    continue;
                }
                let v = f(a, b);
                if v < best.0 {
                    best = (v, [a, b]);
                }
            }
        }
        best
    };
    let (_, [a, b]) = grid(1e-6, 1.0, 1e-6, 1.0, 1e-3);
    let w = 2e-3;
    grid(a - w, a + w, b - w, b + w, 1e-5)
}

/// `(φ · ν − H(ν|μ), max cap violation)` for `n = 2` measures over
/// `(x_1, x_2, x_12)`.
pub fn gibbs_terms(spec: &ModelSpec, nu: &[f64]) -> (f64, f64) {
    let s = spec.alphabet_size();
    let phi = gremlab::model::phi_table(spec);
    let mu1 = spec.mu(SubsetId::singleton(1));
    let mu2 = spec.mu(SubsetId::singleton(2));
    let mu12 = spec.mu(SubsetId::full(2));
    let mut m1 = vec![0.0; s];
    let mut m2 = vec![0.0; s];
    let mut value = 0.0;
    let mut h = 0.0;
    for a in 0..s {
        for b in 0..s {
            for c in 0..s {
                let p = nu[(a * s + b) * s + c];
                m1[a] += p;
                m2[b] += p;
                if p > 0.0 {
                    value += p * phi[(a * s + b) * s + c];
                    h += p * (p / (mu1[a] * mu2[b] * mu12[c])).ln();
                }
            }
        }
    }
    let kl = |p: &[f64], q: &[f64]| -> f64 {
        p.iter().zip(q).filter(|(x, _)| **x > 0.0).map(|(x, y)| x * (x / y).ln()).sum()
    };
    let violation = (kl(&m1, mu1) - LN_2 / 2.0)
        .max(kl(&m2, mu2) - LN_2 / 2.0)
        .max(h - LN_2);
    (value - h, violation)
}

/// Lower bound on the capped Gibbs value for `n = 2`: the best of `samples`
/// flat Dirichlet draws, then `refine` rounds of random multiplicative
/// perturbation with an adaptive scale. An infeasible candidate is pulled
/// back along the segment to `μ`, which lies strictly inside the capped set,
/// so the search can slide along active caps. Only improvements are kept;
/// the scale shrinks when few moves succeed and resets periodically.
pub fn brute_force_gibbs(spec: &ModelSpec, rng: &mut impl Rng, samples: usize, refine: usize) -> f64 {
    let len = spec.joint_len();
    let mu = gremlab::model::product_measure(spec).weights().to_vec();
    let mut best = mu.clone();
    let mut best_value = gibbs_terms(spec, &best).0;
    for _ in 0..samples {
        let nu = dirichlet(rng, len);
        let (v, g) = gibbs_terms(spec, &nu);
        if g <= 0.0 && v > best_value {
            best = nu;
            best_value = v;
        }
    }
    let toward_mu = |nu: &[f64], s: f64| -> Vec<f64> { mu.iter().zip(nu).map(|(m, p)| m + s * (p - m)).collect() };
    let mut scale = 0.3;
    let mut accepted = 0;
    for it in 1..=refine {
        let mut cand = best.clone();
        if rng.random_bool(0.5) {
            // Move a random fraction of one atom's mass onto another.
            let i = rng.random_range(0..len);
            let j = (i + rng.random_range(1..len)) % len;
            let delta = (scale * rng.random::<f64>()).min(1.0) * cand[i];
            cand[i] -= delta;
            cand[j] += delta;
        } else {
            cand.iter_mut().for_each(|p| {
                let z: f64 = StandardNormal.sample(rng);
                *p *= (scale * z).exp();
            });
            let z: f64 = cand.iter().sum();
            cand.iter_mut().for_each(|p| *p /= z);
        }
        if gibbs_terms(spec, &cand).1 > 0.0 {
            let (mut inside, mut outside) = (0.0, 1.0);
            for _ in 0..50 {
                let mid = 0.5 * (inside + outside);
                if gibbs_terms(spec, &toward_mu(&cand, mid)).1 <= 0.0 {
                    inside = mid;
                } else {
                    outside = mid;
                }
            }
            cand = toward_mu(&cand, inside);
        }
        let (v, g) = gibbs_terms(spec, &cand);
        if g <= 0.0 && v > best_value {
            best = cand;
            best_value = v;
            accepted += 1;
        }
        if it % 200 == 0 {
            if accepted < 4 {
                scale = (scale * 0.7f64).max(1e-9);
            } else if accepted > 40 {
                scale *= 1.5;
            }
            accepted = 0;
        }
        // Restart the scale so a collapsed search can escape a kink.
        if it % 10_000 == 0 {
            scale = 0.3;
        }
    }
    best_value
}
