//! Relative entropy over dense measures: marginals, the chain-rule split,
//! the per-subset entropy caps and the two-configuration pair rate.

use serde::{Deserialize, Serialize};

use crate::error::{GremError, Result};
use crate::model::{index_map, product_weights, CoordinateSet, JointMeasure, ModelSpec, SubsetId};

/// Slack band used when deciding feasibility of the entropy caps.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-8;
/// Total-variation band inside which two marginals count as equal.
pub const MARGINAL_MATCH_TOLERANCE: f64 = 1e-10;

/// Sums `nu` onto the coordinates in `coords`, which must all be
/// coordinates of `nu`.
pub fn marginal(nu: &JointMeasure, coords: &CoordinateSet) -> Result<JointMeasure> {
    if coords.is_empty() {
        return Err(GremError::EmptyCoordinates);
    }
    if !coords.is_subset_of(nu.coords()) {
        return Err(GremError::ShapeMismatch(
            "marginal coordinates are not coordinates of the measure".into(),
        ));
    }
    if coords == nu.coords() {
        return Ok(nu.clone());
    }
    let map = index_map(nu.alphabet_size(), nu.coords().members(), coords.members());
    let len = nu.alphabet_size().pow(coords.len() as u32);
    let mut out = vec![0.0; len];
    for (w, &t) in nu.weights().iter().zip(&map) {
        out[t] += w;
    }
    Ok(JointMeasure::from_parts(nu.n(), nu.alphabet_size(), coords.clone(), out))
}

/// `Σ ν log(ν/ρ)` with `0 log 0 = 0`; `+∞` when `ν` charges a null cell of `ρ`.
pub fn rel_entropy(nu: &JointMeasure, reference: &JointMeasure) -> Result<f64> {
    nu.check_same_shape(reference)?;
    Ok(rel_entropy_weights(nu.weights(), reference.weights()))
}

pub(crate) fn rel_entropy_weights(nu: &[f64], reference: &[f64]) -> f64 {
    let mut h = 0.0;
    for (&p, &q) in nu.iter().zip(reference) {
        if p > 0.0 {
            if q <= 0.0 {
                return f64::INFINITY;
            }
            h += p * (p / q).ln();
        }
    }
    h
}

/// The product of the base laws over `coords`.
pub fn reference_measure(spec: &ModelSpec, coords: &CoordinateSet) -> JointMeasure {
    let weights = product_weights(coords.iter().map(|j| spec.mu(j)));
    JointMeasure::from_parts(spec.n(), spec.alphabet_size(), coords.clone(), weights)
}

/// `ν^B ⊗ μ^(B^c)`: keeps the law of `ν` on `B` and replaces the conditional
/// law of the remaining coordinates by the reference product `mu`.
pub fn semi_direct(nu: &JointMeasure, b: &CoordinateSet, mu: &JointMeasure) -> Result<JointMeasure> {
    nu.check_same_shape(mu)?;
    let nu_b = marginal(nu, b)?;
    let rest = nu.coords().minus(b);
    if rest.is_empty() {
        return Ok(nu_b);
    }
    let mu_rest = marginal(mu, &rest)?;
    let s = nu.alphabet_size();
    let map_b = index_map(s, nu.coords().members(), b.members());
    let map_rest = index_map(s, nu.coords().members(), rest.members());
    let weights = map_b
        .iter()
        .zip(&map_rest)
        .map(|(&i, &k)| nu_b.weights()[i] * mu_rest.weights()[k])
        .collect();
    Ok(JointMeasure::from_parts(nu.n(), s, nu.coords().clone(), weights))
}

/// `(H(ν^B|μ^B), H(ν | ν^B ⊗ μ^(B^c)))`. Their sum is `H(ν|μ)` when `mu` is
/// a product measure.
pub fn chain_rule_terms(nu: &JointMeasure, b: &CoordinateSet, mu: &JointMeasure) -> Result<(f64, f64)> {
    let outer = rel_entropy(&marginal(nu, b)?, &marginal(mu, b)?)?;
    let inner = rel_entropy(nu, &semi_direct(nu, b, mu)?)?;
    Ok((outer, inner))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintEntry {
    pub subset: SubsetId,
    /// `+∞` when the measure charges a reference-null cell.
    #[serde(with = "crate::report::ext_float")]
    pub value: f64,
    pub cap: f64,
    #[serde(with = "crate::report::ext_float")]
    pub slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub entries: Vec<ConstraintEntry>,
    pub tolerance: f64,
    pub feasible: bool,
}

impl ConstraintReport {
    pub fn entry(&self, j: SubsetId) -> Option<&ConstraintEntry> {
        self.entries.iter().find(|e| e.subset == j)
    }

    pub fn min_slack(&self) -> f64 {
        self.entries.iter().map(|e| e.slack).fold(f64::INFINITY, f64::min)
    }

    /// Subsets whose slack lies within `band` of zero.
    pub fn tight(&self, band: f64) -> Vec<SubsetId> {
        self.entries
            .iter()
            .filter(|e| e.slack.abs() <= band)
            .map(|e| e.subset)
            .collect()
    }
}

/// `(|J|/n) log 2`.
pub fn entropy_cap(j: SubsetId, n: usize) -> f64 {
    j.len() as f64 / n as f64 * std::f64::consts::LN_2
}

pub fn check_constraints(nu: &JointMeasure, spec: &ModelSpec) -> Result<ConstraintReport> {
    check_constraints_with(nu, spec, CONSTRAINT_TOLERANCE)
}

/// Evaluates `H(ν^(P_J) | μ^(P_J)) ≤ (|J|/n) log 2` for every subset `J`.
pub fn check_constraints_with(nu: &JointMeasure, spec: &ModelSpec, tolerance: f64) -> Result<ConstraintReport> {
    if !nu.is_joint() || nu.n() != spec.n() || nu.alphabet_size() != spec.alphabet_size() {
        return Err(GremError::ShapeMismatch("measure does not match the model".into()));
    }
    let mut entries = Vec::with_capacity(spec.coords());
    for j in spec.subsets() {
        let coords = CoordinateSet::powerset(j);
        let value = rel_entropy(&marginal(nu, &coords)?, &reference_measure(spec, &coords))?;
        let cap = entropy_cap(j, spec.n());
        entries.push(ConstraintEntry {
            subset: j,
            value,
            cap,
            slack: cap - value,
        });
    }
    let feasible = entries.iter().all(|e| e.slack >= -tolerance);
    Ok(ConstraintReport {
        entries,
        tolerance,
        feasible,
    })
}

/// Joint rate of two empirical measures whose configurations share exactly
/// the species in `a`. Infinite unless their `P_A`-marginals agree.
pub fn pair_rate(nu: &JointMeasure, theta: &JointMeasure, a: SubsetId, spec: &ModelSpec) -> Result<f64> {
    nu.check_same_shape(theta)?;
    if !nu.is_joint() || nu.n() != spec.n() || nu.alphabet_size() != spec.alphabet_size() {
        return Err(GremError::ShapeMismatch("measure does not match the model".into()));
    }
    let pa = CoordinateSet::powerset(a);
    let nu_a = marginal(nu, &pa)?;
    let theta_a = marginal(theta, &pa)?;
    if nu_a.tv_distance(&theta_a)? > MARGINAL_MATCH_TOLERANCE {
        return Ok(f64::INFINITY);
    }
    let shared = rel_entropy(&nu_a, &reference_measure(spec, &pa))?;
    if a == SubsetId::full(spec.n()) {
        return Ok(shared);
    }
    let mu = reference_measure(spec, nu.coords());
    let own = rel_entropy(nu, &semi_direct(nu, &pa, &mu)?)?;
    let other = rel_entropy(theta, &semi_direct(theta, &pa, &mu)?)?;
    Ok(shared + own + other)
}
