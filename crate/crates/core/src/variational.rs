//! Entropy-capped Gibbs principle:
//!
//! ```text
//! g = sup { ∫φ dν − H(ν|μ) : H(ν^(P_J) | μ^(P_J)) ≤ (|J|/n) log 2 for all J }
//! ```
//!
//! The unconstrained maximizer is the exponential tilt `ν ∝ e^φ μ`; when it
//! violates a cap, an augmented Lagrangian over the caps is maximized by
//! entropic mirror ascent, restarted from several interior points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{check_constraints, check_constraints_with, entropy_cap, reference_measure, rel_entropy};
use crate::error::{GremError, Result};
use crate::gibbs::global_tilt;
use crate::model::{index_map, phi_table, product_measure, CoordinateSet, JointMeasure, ModelSpec, SubsetId};

/// Feasibility band for a returned solution.
pub const SOLUTION_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Augmented-Lagrangian penalty.
    pub rho: f64,
    pub restarts: usize,
    /// Stationarity tolerance of the inner mirror ascent.
    pub inner_tolerance: f64,
    /// Stop once every cap satisfies complementary slackness to this level.
    pub outer_tolerance: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    /// Restart values must agree to this level for certification.
    pub agreement: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rho: 10.0,
            restarts: 16,
            inner_tolerance: 1e-9,
            outer_tolerance: 1e-8,
            max_inner: 20_000,
            max_outer: 2_000,
            agreement: 1e-6,
            seed: 0x61b5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsSolveResult {
    pub nu_star: JointMeasure,
    pub value: f64,
    /// Caps holding with slack at most the solution tolerance.
    pub active_set: Vec<SubsetId>,
    /// Cap multipliers in canonical subset order (zero on the tilt path).
    pub multipliers: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub certified: bool,
    /// The exponential tilt was feasible and returned directly.
    pub tilt_feasible: bool,
    pub restart_values: Vec<f64>,
}

/// `(e^φ μ / ∫ e^φ dμ, log ∫ e^φ dμ)`.
pub fn unconstrained_tilt(spec: &ModelSpec) -> (JointMeasure, f64) {
    let (w, value) = global_tilt(spec);
    let nu = JointMeasure::from_parts(spec.n(), spec.alphabet_size(), CoordinateSet::full(spec.n()), w);
    (nu, value)
}

/// `∫φ dν − H(ν|μ)` on the capped set, `−∞` outside it.
pub fn gibbs_objective(nu: &JointMeasure, spec: &ModelSpec) -> Result<f64> {
    if !check_constraints(nu, spec)?.feasible {
        return Ok(f64::NEG_INFINITY);
    }
    unconstrained_objective(nu, spec)
}

/// `∫φ dν − H(ν|μ)` without the caps.
pub fn unconstrained_objective(nu: &JointMeasure, spec: &ModelSpec) -> Result<f64> {
    let mu = product_measure(spec);
    let energy: f64 = nu.weights().iter().zip(phi_table(spec)).map(|(a, b)| a * b).sum();
    Ok(energy - rel_entropy(nu, &mu)?)
}

pub fn solve_gibbs(spec: &ModelSpec) -> Result<GibbsSolveResult> {
    solve_gibbs_with(spec, &SolverConfig::default())
}

pub fn solve_gibbs_with(spec: &ModelSpec, config: &SolverConfig) -> Result<GibbsSolveResult> {
    if config.restarts == 0 || !(config.rho > 0.0) {
        return Err(GremError::InvalidArgument("solver needs a positive penalty and at least one restart".into()));
    }
    let (tilt, tilt_value) = unconstrained_tilt(spec);
    let report = check_constraints(&tilt, spec)?;
    if report.feasible {
        return Ok(GibbsSolveResult {
            active_set: report.tight(SOLUTION_TOLERANCE),
            nu_star: tilt,
            value: tilt_value,
            multipliers: vec![0.0; spec.coords()],
            iterations: 0,
            converged: true,
            certified: true,
            tilt_feasible: true,
            restart_values: Vec::new(),
        });
    }

    let problem = Problem::new(spec);
    let runs: Vec<Run> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 {
                problem.log_mu.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(r as u64));
                problem
                    .log_mu
                    .iter()
                    .map(|lm| lm + rng.random_range(-2.0..2.0))
                    .collect()
            };
            problem.solve(start, config)
        })
        .collect();

    let feasible = |run: &Run| run.max_violation <= SOLUTION_TOLERANCE;
    let mut best: Option<&Run> = None;
    for run in &runs {
        if !feasible(run) {
            continue;
        }
        if best.is_none_or(|b| run.value > b.value) {
            best = Some(run);
        }
    }
    // No restart reached the caps: report the least-violating one.
    let best = best.unwrap_or_else(|| {
        runs.iter()
            .min_by(|a, b| a.max_violation.total_cmp(&b.max_violation))
            .expect("at least one restart")
    });
    let certified = runs
        .iter()
        .all(|r| r.converged && feasible(r) && (r.value - best.value).abs() <= config.agreement);
    let nu_star = JointMeasure::from_parts(
        spec.n(),
        spec.alphabet_size(),
        CoordinateSet::full(spec.n()),
        best.nu.clone(),
    );
    let report = check_constraints_with(&nu_star, spec, SOLUTION_TOLERANCE)?;
    Ok(GibbsSolveResult {
        active_set: report.tight(SOLUTION_TOLERANCE),
        value: best.value,
        multipliers: best.lambda.clone(),
        iterations: runs.iter().map(|r| r.iterations).sum(),
        converged: best.converged && report.feasible,
        certified,
        tilt_feasible: false,
        restart_values: runs.iter().map(|r| r.value).collect(),
        nu_star,
    })
}

struct Problem {
    phi: Vec<f64>,
    /// `log μ`, `−∞` off the support.
    log_mu: Vec<f64>,
    /// Per subset `J`: full index to `P_J` index.
    maps: Vec<Vec<usize>>,
    log_mu_marg: Vec<Vec<f64>>,
    caps: Vec<f64>,
}

struct State {
    lv: Vec<f64>,
    nu: Vec<f64>,
    log_marg: Vec<Vec<f64>>,
    g: Vec<f64>,
    objective: f64,
}

struct Run {
    nu: Vec<f64>,
    value: f64,
    lambda: Vec<f64>,
    max_violation: f64,
    iterations: usize,
    converged: bool,
}

impl Problem {
    fn new(spec: &ModelSpec) -> Self {
        let s = spec.alphabet_size();
        let full = spec.subsets();
        let mu = product_measure(spec);
        let mut maps = Vec::new();
        let mut log_mu_marg = Vec::new();
        let mut caps = Vec::new();
        for j in spec.subsets() {
            let pj = CoordinateSet::powerset(j);
            maps.push(index_map(s, &full, pj.members()));
            log_mu_marg.push(reference_measure(spec, &pj).weights().iter().map(|w| w.ln()).collect());
            caps.push(entropy_cap(j, spec.n()));
        }
        Problem {
            phi: phi_table(spec).to_vec(),
            log_mu: mu.weights().iter().map(|w| w.ln()).collect(),
            maps,
            log_mu_marg,
            caps,
        }
    }

    fn state(&self, mut lv: Vec<f64>) -> State {
        let shift = lv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = lv.iter().map(|l| (l - shift).exp()).sum();
        let log_z = shift + z.ln();
        lv.iter_mut().for_each(|l| *l -= log_z);
        let nu: Vec<f64> = lv.iter().map(|l| l.exp()).collect();
        let mut log_marg = Vec::with_capacity(self.maps.len());
        let mut g = Vec::with_capacity(self.maps.len());
        for (c, map) in self.maps.iter().enumerate() {
            let mut m = vec![0.0; self.log_mu_marg[c].len()];
            for (p, &t) in nu.iter().zip(map) {
                m[t] += p;
            }
            let mut h = 0.0;
            for (p, lm) in m.iter().zip(&self.log_mu_marg[c]) {
                if *p > 0.0 {
                    h += p * (p.ln() - lm);
                }
            }
            g.push(h - self.caps[c]);
            log_marg.push(m.into_iter().map(f64::ln).collect());
        }
        let mut objective = 0.0;
        for ((p, l), (f, lm)) in nu.iter().zip(&lv).zip(self.phi.iter().zip(&self.log_mu)) {
            if *p > 0.0 {
                objective += p * (f - (l - lm));
            }
        }
        State {
            lv,
            nu,
            log_marg,
            g,
            objective,
        }
    }

    fn augmented(&self, st: &State, lambda: &[f64], rho: f64) -> f64 {
        let penalty: f64 = st
            .g
            .iter()
            .zip(lambda)
            .map(|(g, l)| ((l + rho * g).max(0.0).powi(2) - l * l) / (2.0 * rho))
            .sum();
        st.objective - penalty
    }

    /// Gradient of the augmented objective, defined up to an additive constant.
    fn direction(&self, st: &State, weights: &[f64]) -> Vec<f64> {
        (0..st.nu.len())
            .map(|x| {
                if st.nu[x] <= 0.0 {
                    return 0.0;
                }
                let mut d = self.phi[x] - (st.lv[x] - self.log_mu[x]);
                for (c, w) in weights.iter().enumerate() {
                    if *w > 0.0 {
                        let t = self.maps[c][x];
                        d -= w * (st.log_marg[c][t] - self.log_mu_marg[c][t]);
                    }
                }
                d
            })
            .collect()
    }

    fn weights(&self, st: &State, lambda: &[f64], rho: f64) -> Vec<f64> {
        st.g.iter().zip(lambda).map(|(g, l)| (l + rho * g).max(0.0)).collect()
    }

    /// Maximizes the augmented objective at fixed multipliers.
    fn inner(&self, mut st: State, lambda: &[f64], config: &SolverConfig) -> (State, usize) {
        let rho = config.rho;
        let mut value = self.augmented(&st, lambda, rho);
        let mut d = self.direction(&st, &self.weights(&st, lambda, rho));
        let mut eta: f64 = 1.0;
        for it in 0..config.max_inner {
            let variance = weighted_variance(&st.nu, &d);
            if variance.sqrt() < config.inner_tolerance {
                return (st, it);
            }
            eta = (eta * 2.0).min(1.0);
            loop {
                let lv: Vec<f64> = st.lv.iter().zip(&d).map(|(l, v)| l + eta * v).collect();
                let cand = self.state(lv);
                let cand_value = self.augmented(&cand, lambda, rho);
                let cand_d = self.direction(&cand, &self.weights(&cand, lambda, rho));
                let noise = 64.0 * f64::EPSILON * value.abs().max(1.0);
                let accept = if eta * variance > noise {
                    // Relative smoothness: gain at least the linear model minus KL/η.
                    let mut linear = 0.0;
                    let mut kl = 0.0;
                    for x in 0..cand.nu.len() {
                        if cand.nu[x] > 0.0 {
                            linear += d[x] * (cand.nu[x] - st.nu[x]);
                            kl += cand.nu[x] * (cand.lv[x] - st.lv[x]);
                        }
                    }
                    cand_value >= value + linear - kl.max(0.0) / eta - noise
                } else {
                    // Gains are below rounding; require the slope along the
                    // step to stay nonnegative instead.
                    weighted_covariance(&cand.nu, &cand_d, &d) >= 0.0
                };
                if accept {
                    st = cand;
                    value = cand_value;
                    d = cand_d;
                    break;
                }
                eta *= 0.5;
                if eta < 1e-16 {
                    return (st, it);
                }
            }
        }
        (st, config.max_inner)
    }

    fn solve(&self, start: Vec<f64>, config: &SolverConfig) -> Run {
        let mut st = self.state(start);
        let mut lambda = vec![0.0; self.caps.len()];
        let mut iterations = 0;
        let mut converged = false;
        for _ in 0..config.max_outer {
            let (next, its) = self.inner(st, &lambda, config);
            st = next;
            iterations += its;
            let mut kkt: f64 = 0.0;
            for (l, g) in lambda.iter_mut().zip(&st.g) {
                *l = (*l + config.rho * g).max(0.0);
                kkt = kkt.max((-*l / config.rho).max(*g).abs());
            }
            if kkt < config.outer_tolerance {
                converged = true;
                break;
            }
        }
        Run {
            value: st.objective,
            max_violation: st.g.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0),
            nu: st.nu,
            lambda,
            iterations,
            converged,
        }
    }
}

fn weighted_covariance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ma: f64 = p.iter().zip(a).map(|(w, v)| w * v).sum();
    let mb: f64 = p.iter().zip(b).map(|(w, v)| w * v).sum();
    p.iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * (x - ma) * (y - mb))
        .sum()
}

fn weighted_variance(p: &[f64], a: &[f64]) -> f64 {
    weighted_covariance(p, a, a)
}
