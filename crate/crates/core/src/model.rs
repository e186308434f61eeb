//! Problem instances: species subsets, the finite alphabet, per-subset base
//! laws, the interaction function and the dense coordinate layout shared by
//! every tensor in the crate.
//!
//! A joint tensor over `S^(2^n - 1)` is stored flat and row-major: coordinate
//! `c` (the `c`-th subset in increasing-mask order) is digit `c` of a
//! mixed-radix number whose first coordinate is the most significant.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{GremError, Result};
use crate::expr::{self, PhiExpr};

pub const MAX_SPECIES: usize = 4;
/// Largest dense joint tensor a model may require.
pub const MAX_TENSOR_LEN: usize = 1 << 24;

const MU_SUM_TOLERANCE: f64 = 1e-12;
const MEASURE_SUM_TOLERANCE: f64 = 1e-10;

/// A nonempty set of species, stored as a bitmask (bit `j-1` set iff species
/// `j` belongs to the set).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct SubsetId(u16);

impl SubsetId {
    pub fn new(mask: u16, n: usize) -> Result<Self> {
        if mask == 0 || (n < 16 && mask >= 1 << n) {
            return Err(GremError::InvalidArgument(format!(
                "subset mask {mask:#b} is not a nonempty subset of {{1..{n}}}"
            )));
        }
        Ok(SubsetId(mask))
    }

    pub fn full(n: usize) -> Self {
        SubsetId(((1u32 << n) - 1) as u16)
    }

    /// `{species}` for a 1-based species number.
    pub fn singleton(species: usize) -> Self {
        SubsetId(1 << (species - 1))
    }

    pub fn from_species(species: impl IntoIterator<Item = usize>) -> Self {
        SubsetId(species.into_iter().fold(0, |m, s| m | 1 << (s - 1)))
    }

    pub fn mask(self) -> u16 {
        self.0
    }

    /// Position of this subset in the canonical coordinate order.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(index: usize) -> Self {
        SubsetId(index as u16 + 1)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, species: usize) -> bool {
        self.0 & (1 << (species - 1)) != 0
    }

    pub fn is_subset_of(self, other: SubsetId) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: SubsetId) -> SubsetId {
        SubsetId(self.0 | other.0)
    }

    /// Member species in increasing order, 1-based.
    pub fn species(self) -> impl Iterator<Item = usize> {
        (0..16).filter(move |b| self.0 & (1 << b) != 0).map(|b| b + 1)
    }

    /// Concatenated species digits, e.g. `"12"` for `{1,2}`.
    pub fn label(self) -> String {
        self.species().map(|s| char::from(b'0' + s as u8)).collect()
    }

    /// Inverse of [`SubsetId::label`]: digits `1..=n`, strictly increasing.
    pub fn parse_label(label: &str, n: usize) -> Result<Self> {
        let bad = || GremError::InvalidArgument(format!("'{label}' does not name a subset of {{1..{n}}}"));
        if label.is_empty() {
            return Err(bad());
        }
        let mut prev = 0;
        let mut mask = 0u16;
        for c in label.chars() {
            let d = c.to_digit(10).ok_or_else(bad)? as usize;
            if d == 0 || d <= prev || d > n {
                return Err(bad());
            }
            prev = d;
            mask |= 1 << (d - 1);
        }
        Ok(SubsetId(mask))
    }
}

impl fmt::Display for SubsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.species().map(|s| s.to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

impl Serialize for SubsetId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for SubsetId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let label = String::deserialize(d)?;
        SubsetId::parse_label(&label, 9).map_err(serde::de::Error::custom)
    }
}

/// All `2^n - 1` nonempty subsets of `{1..n}` in canonical order.
pub fn all_subsets(n: usize) -> Vec<SubsetId> {
    (1..(1u32 << n)).map(|m| SubsetId(m as u16)).collect()
}

/// A set of subset-coordinates, kept in canonical order.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoordinateSet(Vec<SubsetId>);

impl CoordinateSet {
    pub fn new(members: impl IntoIterator<Item = SubsetId>) -> Self {
        let mut v: Vec<SubsetId> = members.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        CoordinateSet(v)
    }

    pub fn empty() -> Self {
        CoordinateSet(Vec::new())
    }

    pub fn full(n: usize) -> Self {
        CoordinateSet(all_subsets(n))
    }

    /// `P_J`: every nonempty subset of `j`.
    pub fn powerset(j: SubsetId) -> Self {
        CoordinateSet(
            (1..=j.mask())
                .filter(|m| m & !j.mask() == 0)
                .map(SubsetId)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn members(&self) -> &[SubsetId] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = SubsetId> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, j: SubsetId) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn position(&self, j: SubsetId) -> Option<usize> {
        self.0.binary_search(&j).ok()
    }

    pub fn is_subset_of(&self, other: &CoordinateSet) -> bool {
        self.iter().all(|j| other.contains(j))
    }

    /// Members of `self` not in `other`.
    pub fn minus(&self, other: &CoordinateSet) -> CoordinateSet {
        CoordinateSet(self.iter().filter(|j| !other.contains(*j)).collect())
    }

    pub fn union(&self, other: &CoordinateSet) -> CoordinateSet {
        CoordinateSet::new(self.iter().chain(other.iter()))
    }
}

/// Number of cells of a dense tensor with `coords` coordinates.
pub fn tensor_len(alphabet_size: usize, coords: usize) -> Option<usize> {
    let mut len: usize = 1;
    for _ in 0..coords {
        len = len.checked_mul(alphabet_size)?;
    }
    Some(len)
}

/// Row-major mixed-radix encoding of a symbol tuple.
pub fn flat_index(symbols: &[usize], alphabet_size: usize) -> Result<usize> {
    let mut idx = 0usize;
    for (coordinate, &symbol) in symbols.iter().enumerate() {
        if symbol >= alphabet_size {
            return Err(GremError::SymbolOutOfRange {
                coordinate,
                symbol,
                alphabet_size,
            });
        }
        idx = idx * alphabet_size + symbol;
    }
    Ok(idx)
}

/// Inverse of [`flat_index`] for tuples of length `coords`.
pub fn unflatten_index(mut index: usize, coords: usize, alphabet_size: usize) -> Vec<usize> {
    let mut out = vec![0; coords];
    for slot in out.iter_mut().rev() {
        *slot = index % alphabet_size;
        index /= alphabet_size;
    }
    out
}

/// For every flat index over the ordered coordinates `from`, the flat index of
/// its restriction to the ordered coordinates `to`. Every member of `to` must
/// occur in `from`; `to` may list them in any order.
pub(crate) fn index_map(alphabet_size: usize, from: &[SubsetId], to: &[SubsetId]) -> Vec<usize> {
    let target_stride = |j: &SubsetId| -> usize {
        match to.iter().position(|t| t == j) {
            Some(p) => alphabet_size.pow((to.len() - 1 - p) as u32),
            None => 0,
        }
    };
    debug_assert!(to.iter().all(|t| from.contains(t)));
    let mut map = vec![0usize];
    for j in from {
        let stride = target_stride(j);
        let mut next = Vec::with_capacity(map.len() * alphabet_size);
        for &base in &map {
            for s in 0..alphabet_size {
                next.push(base + s * stride);
            }
        }
        map = next;
    }
    map
}

/// Product of per-coordinate laws over the ordered coordinates `coords`.
pub(crate) fn product_weights<'a>(factors: impl IntoIterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut w = vec![1.0];
    for f in factors {
        let mut next = Vec::with_capacity(w.len() * f.len());
        for &a in &w {
            for &b in f {
                next.push(a * b);
            }
        }
        w = next;
    }
    w
}

/// How the interaction function was supplied.
#[derive(Clone, Debug, PartialEq)]
pub enum PhiSource {
    Table,
    Expr { text: String, expr: PhiExpr },
}

/// The interaction function as given in a model file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhiSpec {
    Table(Vec<f64>),
    Expr(String),
}

/// A complete problem instance. Immutable once built; the interaction
/// function is always tabulated over the full joint alphabet.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    n: usize,
    alphabet_size: usize,
    alphabet_values: Vec<f64>,
    mu: Vec<Vec<f64>>,
    phi: PhiSource,
    table: Vec<f64>,
}

impl ModelSpec {
    /// `mu[c]` is the law of the `c`-th subset in canonical order.
    pub fn new(
        n: usize,
        alphabet_size: usize,
        alphabet_values: Option<Vec<f64>>,
        mu: Vec<Vec<f64>>,
        phi: PhiSpec,
    ) -> Result<Self> {
        if !(1..=MAX_SPECIES).contains(&n) {
            return Err(GremError::SpeciesOutOfRange(n));
        }
        if alphabet_size < 2 {
            return Err(GremError::InvalidModel(format!(
                "alphabet_size must be at least 2, got {alphabet_size}"
            )));
        }
        let coords = (1 << n) - 1;
        let len = match tensor_len(alphabet_size, coords) {
            Some(l) if l <= MAX_TENSOR_LEN => l,
            _ => {
                return Err(GremError::InvalidModel(format!(
                    "{alphabet_size}^{coords} joint cells exceed the dense limit of {MAX_TENSOR_LEN}"
                )))
            }
        };
        let alphabet_values =
            alphabet_values.unwrap_or_else(|| (0..alphabet_size).map(|s| s as f64).collect());
        if alphabet_values.len() != alphabet_size || alphabet_values.iter().any(|v| !v.is_finite()) {
            return Err(GremError::InvalidModel(format!(
                "alphabet_values must hold {alphabet_size} finite reals"
            )));
        }
        if mu.len() != coords {
            return Err(GremError::InvalidModel(format!(
                "expected {coords} base laws, got {}",
                mu.len()
            )));
        }
        for (c, law) in mu.iter().enumerate() {
            let label = SubsetId::from_index(c).label();
            if law.len() != alphabet_size {
                return Err(GremError::InvalidModel(format!(
                    "mu[{label}] has {} entries, expected {alphabet_size}",
                    law.len()
                )));
            }
            if law.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(GremError::InvalidModel(format!(
                    "mu[{label}] has a negative or non-finite entry"
                )));
            }
            let total: f64 = law.iter().sum();
            if (total - 1.0).abs() > MU_SUM_TOLERANCE {
                return Err(GremError::InvalidModel(format!(
                    "mu[{label}] sums to {total}, not 1"
                )));
            }
        }

        let (phi, table) = match phi {
            PhiSpec::Table(table) => {
                if table.len() != len {
                    return Err(GremError::InvalidModel(format!(
                        "phi table has {} entries, expected {alphabet_size}^{coords} = {len}",
                        table.len()
                    )));
                }
                if let Some(i) = table.iter().position(|v| !v.is_finite()) {
                    return Err(GremError::InvalidModel(format!(
                        "phi table entry {i} is not finite"
                    )));
                }
                (PhiSource::Table, table)
            }
            PhiSpec::Expr(text) => {
                let expr = expr::parse(&text)?;
                if let Some(v) = expr.variables().into_iter().find(|v| v.mask() >= 1 << n) {
                    return Err(GremError::InvalidModel(format!(
                        "expression variable x{} is not a subset of {{1..{n}}}",
                        v.label()
                    )));
                }
                let table = tabulate(&expr, n, alphabet_size, &alphabet_values)?;
                (PhiSource::Expr { text, expr }, table)
            }
        };

        Ok(ModelSpec {
            n,
            alphabet_size,
            alphabet_values,
            mu,
            phi,
            table,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        file.into_spec()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn alphabet_values(&self) -> &[f64] {
        &self.alphabet_values
    }

    /// Number of subset coordinates, `2^n - 1`.
    pub fn coords(&self) -> usize {
        (1 << self.n) - 1
    }

    pub fn joint_len(&self) -> usize {
        self.table.len()
    }

    pub fn subsets(&self) -> Vec<SubsetId> {
        all_subsets(self.n)
    }

    pub fn mu(&self, j: SubsetId) -> &[f64] {
        &self.mu[j.index()]
    }

    pub fn phi_source(&self) -> &PhiSource {
        &self.phi
    }

    pub fn flat_index(&self, symbols: &[usize]) -> Result<usize> {
        if symbols.len() != self.coords() {
            return Err(GremError::ShapeMismatch(format!(
                "expected {} symbols, got {}",
                self.coords(),
                symbols.len()
            )));
        }
        flat_index(symbols, self.alphabet_size)
    }

    /// The model description in file form.
    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            n: self.n,
            alphabet_size: self.alphabet_size,
            alphabet_values: Some(self.alphabet_values.clone()),
            mu: self
                .subsets()
                .into_iter()
                .map(|j| (j.label(), self.mu(j).to_vec()))
                .collect(),
            phi: match &self.phi {
                PhiSource::Table => PhiSpec::Table(self.table.clone()),
                PhiSource::Expr { text, .. } => PhiSpec::Expr(text.clone()),
            },
        }
    }

    /// SHA-256 over the canonical JSON form of the model.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(&self.to_file()).expect("model file serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

fn tabulate(expr: &PhiExpr, n: usize, alphabet_size: usize, values: &[f64]) -> Result<Vec<f64>> {
    let coords = (1 << n) - 1;
    let len = tensor_len(alphabet_size, coords).expect("checked by caller");
    let mut symbols = vec![0usize; coords];
    let mut assignment = vec![values[0]; coords];
    let mut table = Vec::with_capacity(len);
    for _ in 0..len {
        table.push(expr.evaluate(&assignment)?);
        // odometer, last coordinate fastest
        for c in (0..coords).rev() {
            symbols[c] += 1;
            if symbols[c] < alphabet_size {
                assignment[c] = values[symbols[c]];
                break;
            }
            symbols[c] = 0;
            assignment[c] = values[0];
        }
    }
    Ok(table)
}

/// The interaction function tabulated in canonical flat order.
pub fn phi_table(spec: &ModelSpec) -> &[f64] {
    &spec.table
}

/// `mu = ⊗_J mu_J` over all coordinates.
pub fn product_measure(spec: &ModelSpec) -> JointMeasure {
    let weights = product_weights(spec.subsets().into_iter().map(|j| spec.mu(j)));
    JointMeasure {
        n: spec.n,
        alphabet_size: spec.alphabet_size,
        coords: CoordinateSet::full(spec.n),
        weights,
    }
}

/// On-disk model description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub n: usize,
    pub alphabet_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphabet_values: Option<Vec<f64>>,
    /// Keys are subset labels: concatenated increasing species digits.
    pub mu: BTreeMap<String, Vec<f64>>,
    pub phi: PhiSpec,
}

impl ModelFile {
    pub fn into_spec(self) -> Result<ModelSpec> {
        if !(1..=MAX_SPECIES).contains(&self.n) {
            return Err(GremError::SpeciesOutOfRange(self.n));
        }
        let mut mu = vec![None; (1 << self.n) - 1];
        for (label, law) in self.mu {
            let j = SubsetId::parse_label(&label, self.n)
                .map_err(|_| GremError::InvalidModel(format!("mu key '{label}' is not a subset label")))?;
            mu[j.index()] = Some(law);
        }
        let mu = mu
            .into_iter()
            .enumerate()
            .map(|(c, law)| {
                law.ok_or_else(|| {
                    GremError::InvalidModel(format!(
                        "missing base law for subset {}",
                        SubsetId::from_index(c).label()
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ModelSpec::new(self.n, self.alphabet_size, self.alphabet_values, mu, self.phi)
    }
}

/// A probability tensor over a set of subset-coordinates. The full joint
/// measure has every subset of `{1..n}` as a coordinate; marginals carry
/// fewer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointMeasure {
    n: usize,
    alphabet_size: usize,
    coords: CoordinateSet,
    weights: Vec<f64>,
}

impl JointMeasure {
    pub fn new(n: usize, alphabet_size: usize, coords: CoordinateSet, weights: Vec<f64>) -> Result<Self> {
        let m = Self::unchecked(n, alphabet_size, coords, weights)?;
        if m.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(GremError::InvalidArgument("measure has a negative or non-finite weight".into()));
        }
        let total: f64 = m.weights.iter().sum();
        if (total - 1.0).abs() > MEASURE_SUM_TOLERANCE {
            return Err(GremError::InvalidArgument(format!("measure sums to {total}, not 1")));
        }
        Ok(m)
    }

    /// Full joint measure over every subset coordinate.
    pub fn joint(n: usize, alphabet_size: usize, weights: Vec<f64>) -> Result<Self> {
        Self::new(n, alphabet_size, CoordinateSet::full(n), weights)
    }

    /// Normalizes nonnegative weights.
    pub fn from_unnormalized(
        n: usize,
        alphabet_size: usize,
        coords: CoordinateSet,
        mut weights: Vec<f64>,
    ) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(GremError::InvalidArgument("weights have no positive finite mass".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(n, alphabet_size, coords, weights)
    }

    pub fn point_mass(n: usize, alphabet_size: usize, coords: CoordinateSet, symbols: &[usize]) -> Result<Self> {
        if symbols.len() != coords.len() {
            return Err(GremError::ShapeMismatch(format!(
                "{} symbols for {} coordinates",
                symbols.len(),
                coords.len()
            )));
        }
        let idx = flat_index(symbols, alphabet_size)?;
        let len = tensor_len(alphabet_size, coords.len()).expect("sized tensor");
        let mut weights = vec![0.0; len];
        weights[idx] = 1.0;
        Self::new(n, alphabet_size, coords, weights)
    }

    fn unchecked(n: usize, alphabet_size: usize, coords: CoordinateSet, weights: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|j| j.mask() as usize >= 1 << n) {
            return Err(GremError::InvalidArgument(format!(
                "coordinates are not subsets of {{1..{n}}}"
            )));
        }
        let expected = tensor_len(alphabet_size, coords.len());
        if expected != Some(weights.len()) {
            return Err(GremError::ShapeMismatch(format!(
                "{} weights for {alphabet_size}^{} cells",
                weights.len(),
                coords.len()
            )));
        }
        Ok(JointMeasure {
            n,
            alphabet_size,
            coords,
            weights,
        })
    }

    pub(crate) fn from_parts(n: usize, alphabet_size: usize, coords: CoordinateSet, weights: Vec<f64>) -> Self {
        debug_assert_eq!(tensor_len(alphabet_size, coords.len()), Some(weights.len()));
        JointMeasure {
            n,
            alphabet_size,
            coords,
            weights,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn coords(&self) -> &CoordinateSet {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn is_joint(&self) -> bool {
        self.coords.len() == (1 << self.n) - 1
    }

    pub fn weight_of(&self, symbols: &[usize]) -> Result<f64> {
        if symbols.len() != self.coords.len() {
            return Err(GremError::ShapeMismatch("symbol tuple length".into()));
        }
        Ok(self.weights[flat_index(symbols, self.alphabet_size)?])
    }

    /// Total-variation distance `½ Σ |p - q|`.
    pub fn tv_distance(&self, other: &JointMeasure) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(0.5
            * self
                .weights
                .iter()
                .zip(&other.weights)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }

    pub(crate) fn check_same_shape(&self, other: &JointMeasure) -> Result<()> {
        if self.alphabet_size != other.alphabet_size || self.coords != other.coords {
            return Err(GremError::ShapeMismatch(
                "measures live on different coordinates or alphabets".into(),
            ));
        }
        Ok(())
    }
}
