//! End-to-end verification: the Parisi minimum over chains, the capped Gibbs
//! value, their identity `p = g + log 2`, the constraint audit of the winning
//! chain and an optional finite-volume series, gathered into one report.

use std::f64::consts::LN_2;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::chains::Chain;
use crate::entropy::{chain_rule_terms, reference_measure, ConstraintReport};
use crate::error::Result;
use crate::gibbs::{audit_constraints, build_gibbs, level_entropy};
use crate::model::{CoordinateSet, ModelSpec, SubsetId};
use crate::parisi::{global_parisi_min, ChainEvaluator};
use crate::sim;
use crate::variational::{solve_gibbs_with, SolverConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Finite-difference step for the gradient check.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// `|p − (g + log 2)|`.
    pub identity: f64,
    /// Relative error of the analytic gradient against central differences.
    pub gradient: f64,
    /// Entropy chain-rule and gradient-entropy identities.
    pub entropy: f64,
    /// `|F_N − g|` at the largest simulated volume.
    pub mc_gap: f64,
    /// Slack band of the constraint audit.
    pub constraint: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            identity: 1e-4,
            gradient: 1e-6,
            entropy: 1e-10,
            mc_gap: 0.05,
            constraint: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Identity,
    ConstraintAudit,
    Gradient,
    Entropy,
    Certification,
    MonteCarlo,
}

impl Criterion {
    pub const ALL: [Criterion; 6] = [
        Criterion::Identity,
        Criterion::ConstraintAudit,
        Criterion::Gradient,
        Criterion::Entropy,
        Criterion::Certification,
        Criterion::MonteCarlo,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub volumes: Vec<usize>,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub disabled: Vec<Criterion>,
    pub solver: SolverConfig,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            volumes: Vec::new(),
            seed: 0,
            tolerances: Tolerances::default(),
            disabled: Vec::new(),
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainEntry {
    pub chain: Chain,
    pub m: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub converged: bool,
    pub certified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParisiSection {
    pub chains: Vec<ChainEntry>,
    pub best_chain: Chain,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsSection {
    pub g: f64,
    pub active_set: Vec<SubsetId>,
    pub tilt_feasible: bool,
    pub converged: bool,
    pub certified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McPoint {
    #[serde(rename = "N")]
    pub volume: usize,
    #[serde(rename = "F_N")]
    pub free_energy: f64,
    pub target: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub criterion: Criterion,
    pub enabled: bool,
    pub passed: bool,
    /// The measured quantity compared against `tolerance`.
    pub measured: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub model_digest: String,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub parisi: ParisiSection,
    pub gibbs: GibbsSection,
    pub identity_residual: f64,
    pub constraint_audit: ConstraintReport,
    pub montecarlo: Vec<McPoint>,
    pub criteria: Vec<CriterionResult>,
    /// Failures of individual stages; the report is partial when nonempty.
    pub errors: Vec<String>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn criterion(&self, c: Criterion) -> Option<&CriterionResult> {
        self.criteria.iter().find(|r| r.criterion == c)
    }

    /// 0 when every enabled criterion passed, 1 when one failed, 2 when a
    /// stage errored.
    pub fn exit_code(&self) -> i32 {
        if !self.errors.is_empty() {
            2
        } else if self.passed {
            0
        } else {
            1
        }
    }
}

/// Worst relative error `‖a − b‖_∞ / ‖b‖_∞` between the analytic gradient
/// and central differences over all chains, at a fixed interior `m`.
pub fn gradient_check(spec: &ModelSpec, chains: &[Chain], m: &[f64]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for c in chains {
        let ev = ChainEvaluator::new(spec, c)?;
        let (_, grad) = ev.value_and_grad(m);
        let fd: Vec<f64> = (0..m.len())
            .map(|k| {
                let mut up = m.to_vec();
                let mut down = m.to_vec();
                up[k] += FD_STEP;
                down[k] -= FD_STEP;
                (ev.value(&up) - ev.value(&down)) / (2.0 * FD_STEP)
            })
            .collect();
        worst = worst.max(relative_error(&grad, &fd));
    }
    Ok(worst)
}

/// `‖a − b‖_∞ / ‖b‖_∞`, or the absolute error when `b` vanishes.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Interior probe point `m_k = k / (n + 1)`.
pub fn interior_probe(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 / (n + 1) as f64).collect()
}

pub fn run_verify(spec: &ModelSpec, config: &VerifyConfig) -> Result<VerifyReport> {
    let tol = &config.tolerances;
    let global = global_parisi_min(spec)?;
    let gibbs = solve_gibbs_with(spec, &config.solver)?;
    let best = global.best();
    let p = best.point.value;
    let g = gibbs.value;
    let identity_residual = (p - (g + LN_2)).abs();

    let gs = build_gibbs(spec, &best.point.chain, &best.point.m)?;
    let audit = audit_constraints(&gs, spec)?;

    let chains: Vec<Chain> = global.chains.iter().map(|r| r.point.chain.clone()).collect();
    let gradient_error = gradient_check(spec, &chains, &interior_probe(spec.n()))?;

    // Chain rule on the Gibbs solution for every P_J, and the
    // gradient-entropy link on the winning chain.
    let mu = reference_measure(spec, &CoordinateSet::full(spec.n()));
    let total = crate::entropy::rel_entropy(&gibbs.nu_star, &mu)?;
    let mut entropy_error: f64 = 0.0;
    for j in spec.subsets() {
        let (a, b) = chain_rule_terms(&gibbs.nu_star, &CoordinateSet::powerset(j), &mu)?;
        entropy_error = entropy_error.max((a + b - total).abs());
    }
    let mut link_error: f64 = 0.0;
    for k in 1..=spec.n() {
        let h = level_entropy(&gs, spec, k)?;
        let mk = best.point.m[k - 1];
        link_error = link_error.max((h - (mk * mk * best.point.grad[k - 1] + LN_2 / spec.n() as f64)).abs());
    }

    let mut errors = Vec::new();
    let mut montecarlo = Vec::new();
    for &v in &config.volumes {
        match sim::free_energy_exact(spec, v, config.seed) {
            Ok(r) => montecarlo.push(McPoint {
                volume: v,
                free_energy: r.free_energy,
                target: g,
                gap: (r.free_energy - g).abs(),
            }),
            Err(e) => errors.push(format!("simulation at N={v}: {e}")),
        }
    }

    let certified = global.chains.iter().all(|r| r.converged && r.certified) && gibbs.converged && gibbs.certified;
    let mc_gap = montecarlo.last().map_or(f64::INFINITY, |m| m.gap);
    let min_slack = audit.min_slack();
    let mut criteria = Vec::new();
    let mut push = |criterion: Criterion, measured: f64, tolerance: f64, passed: bool| {
        let enabled = !config.disabled.contains(&criterion)
            && !(criterion == Criterion::MonteCarlo && config.volumes.is_empty());
        criteria.push(CriterionResult {
            criterion,
            enabled,
            passed,
            measured,
            tolerance,
        });
    };
    push(Criterion::Identity, identity_residual, tol.identity, identity_residual <= tol.identity);
    push(Criterion::ConstraintAudit, min_slack, -tol.constraint, min_slack >= -tol.constraint);
    push(Criterion::Gradient, gradient_error, tol.gradient, gradient_error <= tol.gradient);
    let entropy_measured = entropy_error.max(link_error);
    push(Criterion::Entropy, entropy_measured, tol.entropy, entropy_measured <= tol.entropy);
    push(Criterion::Certification, if certified { 0.0 } else { 1.0 }, 0.0, certified);
    push(Criterion::MonteCarlo, mc_gap, tol.mc_gap, mc_gap <= tol.mc_gap);
    let passed = criteria.iter().all(|c| !c.enabled || c.passed);

    Ok(VerifyReport {
        schema_version: SCHEMA_VERSION,
        model_digest: spec.digest(),
        seed: config.seed,
        tolerances: tol.clone(),
        parisi: ParisiSection {
            chains: global
                .chains
                .iter()
                .map(|r| ChainEntry {
                    chain: r.point.chain.clone(),
                    m: r.point.m.clone(),
                    value: r.point.value,
                    grad: r.point.grad.clone(),
                    converged: r.converged,
                    certified: r.certified,
                })
                .collect(),
            best_chain: best.point.chain.clone(),
            p,
        },
        gibbs: GibbsSection {
            g,
            active_set: gibbs.active_set.clone(),
            tilt_feasible: gibbs.tilt_feasible,
            converged: gibbs.converged,
            certified: gibbs.certified,
        },
        identity_residual,
        constraint_audit: audit,
        montecarlo,
        criteria,
        passed: passed && errors.is_empty(),
        errors,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Pretty JSON whose floats always carry 17 significant digits.
pub struct FloatFormatter {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl FloatFormatter {
    pub fn new() -> Self {
        FloatFormatter {
            inner: serde_json::ser::PrettyFormatter::new(),
        }
    }
}

impl Default for FloatFormatter {
    fn default() -> Self {
        Self::new()
    }
}

impl serde_json::ser::Formatter for FloatFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(w, "{value:.16e}")
        } else {
            w.write_all(b"null")
        }
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Serializes `value` as pretty JSON with 17-significant-digit floats.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FloatFormatter::new());
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// The finite-volume series as CSV; header only when the series is empty.
pub fn series_csv(points: &[McPoint]) -> String {
    let mut out = String::from("N,F_N,target,gap\n");
    for p in points {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e}\n",
            p.volume, p.free_energy, p.target, p.gap
        ));
    }
    out
}

pub fn emit(report: &VerifyReport, format: Format, out: &mut impl Write) -> Result<()> {
    let text = match format {
        Format::Json => to_json(report)?,
        Format::Csv => series_csv(&report.montecarlo),
    };
    out.write_all(text.as_bytes())?;
    Ok(())
}

/// Serde adapter writing non-finite floats as the strings `"inf"`, `"-inf"`
/// and `"nan"`.
pub mod ext_float {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("not a float: {other}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PhiSpec;

    fn zero_spec() -> ModelSpec {
        ModelSpec::new(2, 2, None, vec![vec![0.5, 0.5]; 3], PhiSpec::Expr("0".into())).unwrap()
    }

    #[test]
    fn zero_field_report() {
        let r = run_verify(&zero_spec(), &VerifyConfig::default()).unwrap();
        assert!((r.parisi.p - LN_2).abs() < 1e-12);
        assert_eq!(r.gibbs.g, 0.0);
        assert!(r.identity_residual <= 1e-9);
        assert!(r.constraint_audit.feasible);
        assert!(r.passed, "{:?}", r.criteria);
        assert_eq!(r.exit_code(), 0);
        assert!(!r.criterion(Criterion::MonteCarlo).unwrap().enabled);
    }

    #[test]
    fn float_format_has_seventeen_digits() {
        let s = to_json(&vec![LN_2, 0.0, -1.5]).unwrap();
        assert!(s.contains("6.9314718055994529e-1"), "{s}");
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![LN_2, 0.0, -1.5]);
    }

    #[test]
    fn empty_series_is_header_only() {
        assert_eq!(series_csv(&[]), "N,F_N,target,gap\n");
    }

    #[test]
    fn relative_error_norms() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((relative_error(&[1.0, 2.1], &[1.0, 2.0]) - 0.05).abs() < 1e-15);
        assert_eq!(relative_error(&[1e-3], &[0.0]), 1e-3);
    }
}
