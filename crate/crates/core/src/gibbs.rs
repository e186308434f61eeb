//! The generalized Gibbs measure of a chain, `G = γ ⊗ K_2 ⊗ … ⊗ K_n`.
//!
//! `γ` is the tilted law of the first level and `K_j` the tilted conditional
//! law of the level-`j` block given all earlier levels. Kernel rows are
//! indexed by the chain-order prefix (see [`crate::parisi`]); level
//! marginals and the flattened measure use canonical coordinates.

use serde::{Deserialize, Serialize};

use crate::chains::Chain;
use crate::entropy::{check_constraints, reference_measure, rel_entropy, semi_direct, ConstraintReport};
use crate::error::{GremError, Result};
use crate::model::{CoordinateSet, JointMeasure, ModelSpec, SubsetId};
use crate::parisi::ChainEvaluator;

/// Dense conditional law: `sources` rows, each a distribution over
/// `targets` cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub level: usize,
    pub sources: usize,
    pub targets: usize,
    pub weights: Vec<f64>,
}

impl Kernel {
    pub fn row(&self, x: usize) -> &[f64] {
        &self.weights[x * self.targets..(x + 1) * self.targets]
    }

    /// Largest `|Σ_y K(x, y) − 1|` over rows.
    pub fn row_defect(&self) -> f64 {
        self.weights
            .chunks_exact(self.targets)
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsStructure {
    pub chain: Chain,
    pub m: Vec<f64>,
    /// Law of the single level-1 coordinate `A_1`.
    pub gamma: Vec<f64>,
    /// `K_2..K_n`.
    pub kernels: Vec<Kernel>,
    /// `G_1..G_n` over `prefix_coords(j)`; the last is the full measure.
    pub level_marginals: Vec<JointMeasure>,
}

impl GibbsStructure {
    pub fn n(&self) -> usize {
        self.chain.n()
    }

    /// `G_j` for `j` in `1..=n`.
    pub fn level_marginal(&self, j: usize) -> &JointMeasure {
        &self.level_marginals[j - 1]
    }
}

/// Builds `γ`, the kernels and the level marginals at `m` (clamped).
pub fn build_gibbs(spec: &ModelSpec, chain: &Chain, m: &[f64]) -> Result<GibbsStructure> {
    let ev = ChainEvaluator::new(spec, chain)?;
    let m = ev.clamp(m)?;
    let stack = ev.stack(&m);
    let s = spec.alphabet_size();
    let gamma: Vec<f64> = ev.log_kernel(&stack, &m, 1).into_iter().map(f64::exp).collect();
    let kernels = (2..=ev.n())
        .map(|k| Kernel {
            level: k,
            sources: stack.levels[k - 1].len(),
            targets: ev.block_len(k),
            weights: ev.log_kernel(&stack, &m, k).into_iter().map(f64::exp).collect(),
        })
        .collect();
    let level_marginals = ev
        .level_laws(&stack, &m)
        .into_iter()
        .enumerate()
        .map(|(i, law)| reindex(&ev, spec.n(), s, i + 1, &law))
        .collect();
    Ok(GibbsStructure {
        chain: chain.clone(),
        m,
        gamma,
        kernels,
        level_marginals,
    })
}

fn reindex(ev: &ChainEvaluator, n: usize, s: usize, k: usize, chain_order: &[f64]) -> JointMeasure {
    let map = ev.canonical_map(k);
    let mut w = vec![0.0; chain_order.len()];
    for (c, &v) in chain_order.iter().enumerate() {
        w[map[c]] = v;
    }
    JointMeasure::from_parts(n, s, ev.chain().prefix_coords(k), w)
}

/// Multiplies out `γ(x_1) Π_j K_j(x_(<j), x_j)` and returns the result in
/// canonical coordinates.
pub fn flatten(gs: &GibbsStructure, spec: &ModelSpec) -> Result<JointMeasure> {
    if gs.chain.n() != spec.n() {
        return Err(GremError::ShapeMismatch("structure does not match the model".into()));
    }
    let mut law = gs.gamma.clone();
    for kernel in &gs.kernels {
        if kernel.sources != law.len() {
            return Err(GremError::ShapeMismatch(format!("kernel {} has the wrong source size", kernel.level)));
        }
        law = law
            .iter()
            .enumerate()
            .flat_map(|(x, &p)| kernel.row(x).iter().map(move |k| p * k))
            .collect();
    }
    let ev = ChainEvaluator::new(spec, &gs.chain)?;
    Ok(reindex(&ev, spec.n(), spec.alphabet_size(), spec.n(), &law))
}

/// `H(G_j | G_(j-1) ⊗ μ^(T_j))` from the stored level marginals.
pub fn level_entropy(gs: &GibbsStructure, spec: &ModelSpec, j: usize) -> Result<f64> {
    let gj = gs.level_marginal(j);
    let reference = reference_measure(spec, gj.coords());
    if j == 1 {
        return rel_entropy(gj, &reference);
    }
    let prefix = gs.chain.prefix_coords(j - 1);
    rel_entropy(gj, &semi_direct(gj, &prefix, &reference)?)
}

/// Entropy caps evaluated at the flattened measure.
pub fn audit_constraints(gs: &GibbsStructure, spec: &ModelSpec) -> Result<ConstraintReport> {
    check_constraints(&flatten(gs, spec)?, spec)
}

/// The caps of the chain's own nested sets `A_1..A_n` within `report`.
pub fn chain_constraints<'a>(
    report: &'a ConstraintReport,
    chain: &Chain,
) -> Vec<&'a crate::entropy::ConstraintEntry> {
    (1..=chain.n())
        .filter_map(|k| report.entry(chain.nested_set(k)))
        .collect()
}

/// The chain whose first `|J|` nested sets run through the species of `J`
/// and which agrees with `chain` from level `k_J` upward.
pub fn swap_chain(chain: &Chain, j: SubsetId) -> Result<Chain> {
    let n = chain.n();
    if !j.is_subset_of(SubsetId::full(n)) {
        return Err(GremError::InvalidArgument(format!("{j} is not a subset of the chain's species")));
    }
    let kj = chain.level_of(j);
    let head = &chain.perm()[..kj];
    let mut perm: Vec<usize> = head.iter().copied().filter(|&s| j.contains(s)).collect();
    perm.extend(head.iter().copied().filter(|&s| !j.contains(s)));
    perm.extend_from_slice(&chain.perm()[kj..]);
    let out = Chain::new(perm)?;
    debug_assert_eq!(out.nested_set(j.len()), j);
    debug_assert_eq!(out.nested_set(kj), chain.nested_set(kj));
    Ok(out)
}

/// Normalized tilt `e^φ μ / ∫ e^φ dμ` over the full tensor.
pub(crate) fn global_tilt(spec: &ModelSpec) -> (Vec<f64>, f64) {
    let mu = reference_measure(spec, &CoordinateSet::full(spec.n()));
    let phi = crate::model::phi_table(spec);
    let shift = phi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = phi.iter().zip(mu.weights()).map(|(p, q)| q * (p - shift).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= z);
    (w, shift + z.ln())
}
