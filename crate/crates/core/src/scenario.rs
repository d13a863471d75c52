//! Scenario files: a JSON document names a command and its parameters.
//! Running it produces `report.json` and, for some commands, CSV series.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cstar_space::{evaluate_state, AlgebraElement, BaseSpace, State};
use crate::error::{Error, Result};
use crate::hilbert_module::{inner_product, ModuleVector, Submodule};
use crate::linalg::{self, CMat, C64};
use crate::localization::{check_core, localize_module, localize_operator, CoreTargets, CORE_TOL};
use crate::perturbation_sums::{
    build_sum_operator, kato_rellich_check, matrix_from_rows, relative_bound_estimate, verify_sum, wust_check, Perturbation,
    PerturbationProblem, SumModelSpec,
};
use crate::regularity::{
    classify_lambda, classify_t_lambda, graph_embedding_adjointability, local_global_check,
    measure_localization_analysis, pure_states, LambdaClassification, LambdaSpec, RegularityVerdict, SYM_TOL,
};
use crate::separation::{
    find_separating_state, flattening_combination, hat_function, pure_state_counterexample, SeparationProblem,
};
use crate::unbounded_ops::{
    build_boundary_field, build_dirac_interval, build_extension, default_tau, OperatorRep,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    ClassifyLambda,
    Separate,
    Localize,
    CheckRegularity,
    VerifySum,
    Perturb,
    DemoCounterexample,
    CoreCheck,
}

impl std::str::FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.to_string()))
            .map_err(|_| Error::input(format!("unknown command `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Defect threshold; defaults depend on the operator.
    pub tau: Option<f64>,
    pub tol_algebra: Option<f64>,
    pub tol_density: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub command: Command,
    #[serde(default)]
    pub params: Value,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// A numeric series destined for a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn xy(name: &str, points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        Series {
            name: name.into(),
            header: vec!["x".into(), "value".into()],
            rows: points.into_iter().map(|(x, v)| vec![x, v]).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Value,
    pub series: Vec<Series>,
}

const DEFAULT_SEED: u64 = 0;
const DENSE_TAU: f64 = 1e-8;
const ALGEBRA_TOL: f64 = 1e-10;

/// Which unbounded operator a scenario talks about.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    DiracMin { nodes: usize },
    DiracMax { nodes: usize },
    DiracExtension { nodes: usize, lambda: C64 },
    /// `T_Λ` over a grid of `grid_nodes` points of the interval of `Λ`.
    BoundaryField {
        lambda: LambdaSpec,
        grid_nodes: usize,
        fiber_nodes: usize,
    },
    /// Matrices per node, row by row.
    Diagonal {
        space: BaseSpace,
        matrices: Vec<Vec<Vec<C64>>>,
    },
    Multiplication { element: AlgebraElement, fiber_dim: usize },
}

impl OperatorSpec {
    /// The operator and the defect threshold that suits it.
    pub fn build(&self) -> Result<(OperatorRep, f64)> {
        match self {
            OperatorSpec::DiracMin { nodes } => Ok((build_dirac_interval(*nodes, "box")?.min, default_tau(*nodes))),
            OperatorSpec::DiracMax { nodes } => Ok((build_dirac_interval(*nodes, "box")?.max, default_tau(*nodes))),
            OperatorSpec::DiracExtension { nodes, lambda } => {
                let pair = build_dirac_interval(*nodes, "box")?;
                Ok((build_extension(&pair.data, *lambda)?, default_tau(*nodes)))
            }
            OperatorSpec::BoundaryField {
                lambda,
                grid_nodes,
                fiber_nodes,
            } => {
                let space = BaseSpace::grid(lambda.a, lambda.b, *grid_nodes)?;
                let (t, _, _) = build_boundary_field(lambda, &space, *fiber_nodes)?;
                Ok((t, default_tau(*fiber_nodes)))
            }
            OperatorSpec::Diagonal { space, matrices } => {
                space.validate()?;
                if matrices.len() != space.len() {
                    return Err(Error::DimensionMismatch {
                        expected: space.len(),
                        found: matrices.len(),
                    });
                }
                let mats = matrices.iter().map(|m| matrix_from_rows(m)).collect::<Result<Vec<_>>>()?;
                Ok((OperatorRep::diagonal(space, mats)?, DENSE_TAU))
            }
            OperatorSpec::Multiplication { element, fiber_dim } => {
                if *fiber_dim == 0 {
                    return Err(Error::input("fiber dimension must be positive"));
                }
                Ok((OperatorRep::multiplication(element, *fiber_dim), DENSE_TAU))
            }
        }
    }
}

/// `V` in `T + V`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationSpec {
    Zero,
    /// `V = a T`.
    Scaled { a: f64 },
    /// `V = s T + β T (1 + T²)^{-1/2}`.
    ScaledPlusTransform { s: f64, beta: f64 },
    /// Bounded matrices per node, row by row.
    Bounded { matrices: Vec<Vec<Vec<C64>>> },
    /// Multiplication by the polynomial `Σ c_j t^j` on Dirac fibers.
    Polynomial { coefficients: Vec<f64> },
    Sum { parts: Vec<PerturbationSpec> },
}

impl PerturbationSpec {
    pub fn build(&self, t: &OperatorRep) -> Result<Perturbation> {
        match self {
            PerturbationSpec::Zero => Perturbation::zero(t),
            PerturbationSpec::Scaled { a } => Perturbation::scaled(t, *a),
            PerturbationSpec::ScaledPlusTransform { s, beta } => Perturbation::scaled_plus_transform(t, *s, *beta),
            PerturbationSpec::Bounded { matrices } => {
                let mats = matrices.iter().map(|m| matrix_from_rows(m)).collect::<Result<Vec<_>>>()?;
                Perturbation::bounded(t, &mats)
            }
            PerturbationSpec::Polynomial { coefficients } => {
                let c = coefficients.clone();
                Perturbation::multiplication(t, move |x| c.iter().rev().fold(0.0, |acc, a| acc * x + a))
            }
            PerturbationSpec::Sum { parts } => {
                let mut acc = Perturbation::zero(t)?;
                for p in parts {
                    acc = acc.add(&p.build(t)?)?;
                }
                Ok(acc)
            }
        }
    }
}

fn params<T: DeserializeOwned>(v: &Value) -> Result<T> {
    Ok(serde_json::from_value(v.clone())?)
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Some(b), Value::Object(e)) = (base.as_object_mut(), extra) {
        b.extend(e);
    }
    base
}

/// Runs a scenario. `seed` overrides the seed stored in the scenario.
pub fn run_scenario(scenario: &Scenario, seed: Option<u64>) -> Result<Outcome> {
    let seed = seed.or(scenario.seed).unwrap_or(DEFAULT_SEED);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = scenario.tolerances;
    let p = &scenario.params;
    let (body, series) = match scenario.command {
        Command::ClassifyLambda => classify_lambda_cmd(params(p)?, tol)?,
        Command::Separate => separate_cmd(params(p)?)?,
        Command::Localize => localize_cmd(params(p)?, tol)?,
        Command::CheckRegularity => check_regularity_cmd(params(p)?, tol, &mut rng)?,
        Command::VerifySum => verify_sum_cmd(params(p)?, tol, &mut rng)?,
        Command::Perturb => perturb_cmd(params(p)?, tol, &mut rng)?,
        Command::DemoCounterexample => demo_counterexample_cmd(params(p)?)?,
        Command::CoreCheck => core_check_cmd(params(p)?, tol)?,
    };
    let head = json!({
        "command": scenario.command,
        "seed": seed,
        "tolerances": tol,
    });
    Ok(Outcome {
        report: merge(head, body),
        series,
    })
}

/// `(x, value)` or `(index, eigenvalue, residual)` rows with a header and
/// 15 significant digits.
pub fn emit_plot_data(path: &Path, series: &Series) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(&series.header).map_err(csv_error)?;
    for row in &series.rows {
        w.write_record(row.iter().map(|v| format!("{v:.14e}"))).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Solver(format!("csv: {other:?}")),
    }
}

pub fn write_outcome(out: &Path, outcome: &Outcome) -> Result<()> {
    fs::create_dir_all(out)?;
    let text = serde_json::to_string_pretty(&outcome.report)?;
    fs::write(out.join("report.json"), text + "\n")?;
    for s in &outcome.series {
        emit_plot_data(&out.join(format!("{}.csv", s.name)), s)?;
    }
    Ok(())
}

/// Reads, runs and writes a scenario; returns the process exit code. Errors
/// are reported in `report.json` as well as returned.
pub fn run_scenario_file(path: &Path, out: &Path, seed: Option<u64>, command: Option<Command>) -> (i32, Option<Error>) {
    let result = (|| -> Result<Outcome> {
        let text = fs::read_to_string(path)?;
        let scenario = Scenario::from_json(&text)?;
        if let Some(c) = command {
            if c != scenario.command {
                return Err(Error::input(format!(
                    "command {:?} does not match the scenario's {:?}",
                    c, scenario.command
                )));
            }
        }
        run_scenario(&scenario, seed)
    })();
    match result.and_then(|o| write_outcome(out, &o)) {
        Ok(()) => (0, None),
        Err(e) => {
            let code = e.exit_code();
            let report = json!({ "error": e.to_string(), "exit_code": code });
            let _ = fs::create_dir_all(out)
                .and_then(|_| fs::write(out.join("report.json"), serde_json::to_string_pretty(&report).unwrap_or_default() + "\n"));
            (code, Some(e))
        }
    }
}

/// Eigenvalues of a Hermitian fiber with the residuals `‖Mv - λv‖`.
fn spectrum_series(name: &str, m: &CMat) -> Series {
    let (vals, vecs) = linalg::hermitian_eigen(m);
    let rows = vals
        .iter()
        .enumerate()
        .map(|(k, &l)| {
            let v = vecs.column(k);
            let r = (m * v - v * C64::from(l)).norm();
            vec![k as f64, l, r]
        })
        .collect();
    Series {
        name: name.into(),
        header: vec!["index".into(), "eigenvalue".into(), "residual".into()],
        rows,
    }
}

/// Spectrum of the fiber at the first node; empty when that fiber is not a
/// selfadjoint operator.
fn fiber_spectrum(t: &OperatorRep, name: &str) -> Series {
    let m = t
        .fiber_at(0)
        .ok()
        .and_then(|f| f.to_relation().operator_form().ok())
        .filter(|m| linalg::hermitian_residual(m) <= 1e-8);
    match m {
        Some(m) => spectrum_series(name, &m),
        None => Series {
            name: name.into(),
            header: vec!["index".into(), "eigenvalue".into(), "residual".into()],
            rows: Vec::new(),
        },
    }
}

// ---------------------------------------------------------------- commands

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifyParams {
    lambda: LambdaSpec,
    /// Grid for the numeric cross-check at pure states.
    #[serde(default)]
    grid_nodes: Option<usize>,
    #[serde(default = "default_fiber_nodes")]
    fiber_nodes: usize,
}

fn default_fiber_nodes() -> usize {
    64
}

#[derive(Serialize)]
struct PointWitness {
    refutes: &'static str,
    point: f64,
    detail: String,
}

fn symbolic_witnesses(c: &LambdaClassification) -> Vec<PointWitness> {
    let v = classify_t_lambda(c);
    let interior: Option<f64> = c.cells.iter().find(|k| k.singular).map(|k| 0.5 * (k.lo + k.hi));
    let boundary = c.boundary().first().copied();
    let extendable = c.reg_inf().first().map(|(p, _)| *p);
    let singular = c.ssupp_r().first().copied();
    let mut out = Vec::new();
    let mut push = |refutes: &'static str, point: Option<f64>, what: &str| {
        if let Some(point) = point {
            out.push(PointWitness {
                refutes,
                point,
                detail: format!("{what} at {point}: {:?}", c.locate(point)),
            });
        }
    };
    if !v.regular {
        push("regular", boundary, "boundary point of the singular support");
    }
    if !v.selfadjoint {
        push("selfadjoint", interior.or(extendable), "interior or extendable singular point");
    }
    if !v.selfadjoint_regular {
        push("selfadjoint_regular", boundary.or(interior), "singular point");
    }
    if !v.adjoint_selfadjoint_regular {
        push("adjoint_selfadjoint_regular", interior.or(singular), "non-extendable singular point");
    }
    out
}

fn verdict_disagreements(a: &crate::regularity::SymbolicVerdict, b: &RegularityVerdict) -> Vec<&'static str> {
    let mut out = Vec::new();
    for (name, x, y) in [
        ("regular", a.regular, b.regular),
        ("selfadjoint", a.selfadjoint, b.selfadjoint),
        ("selfadjoint_regular", a.selfadjoint_regular, b.selfadjoint_regular),
        (
            "adjoint_selfadjoint_regular",
            a.adjoint_selfadjoint_regular,
            b.adjoint_selfadjoint_regular,
        ),
    ] {
        if x != y {
            out.push(name);
        }
    }
    out
}

fn classify_lambda_cmd(p: ClassifyParams, tol: Tolerances) -> Result<(Value, Vec<Series>)> {
    let c = classify_lambda(&p.lambda)?;
    let v = classify_t_lambda(&c);
    let mut body = json!({
        "regular": v.regular,
        "selfadjoint": v.selfadjoint,
        "selfadjoint_regular": v.selfadjoint_regular,
        "adjoint_selfadjoint_regular": v.adjoint_selfadjoint_regular,
        "singular_support": c.describe_ssupp(),
        "classification": to_value(&c)?,
        "witnesses": to_value(&symbolic_witnesses(&c))?,
    });
    if let Some(n) = p.grid_nodes {
        let space = BaseSpace::grid(p.lambda.a, p.lambda.b, n)?;
        let (t, _, _) = build_boundary_field(&p.lambda, &space, p.fiber_nodes)?;
        let tau = tol.tau.unwrap_or_else(|| default_tau(p.fiber_nodes));
        let numeric = local_global_check(&t, &pure_states(&space), tau)?;
        let disagreements = verdict_disagreements(&v, &numeric);
        body = merge(
            body,
            json!({
                "numeric": to_value(&numeric)?,
                "routes_agree": disagreements.is_empty(),
                "disagreements": disagreements,
            }),
        );
    }
    Ok((body, Vec::new()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SeparateParams {
    problem: SeparationProblem,
}

fn separate_cmd(p: SeparateParams) -> Result<(Value, Vec<Series>)> {
    let cert = find_separating_state(&p.problem)?;
    Ok((json!({ "separated": true, "certificate": to_value(&cert)? }), Vec::new()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LocalizeParams {
    space: BaseSpace,
    fiber_dim: usize,
    state: State,
    #[serde(default)]
    vectors: Vec<ModuleVector>,
    #[serde(default)]
    operator: Option<OperatorSpec>,
}

fn localize_cmd(p: LocalizeParams, tol: Tolerances) -> Result<(Value, Vec<Series>)> {
    let loc = localize_module(&p.space, p.fiber_dim, &p.state)?;
    let tol_alg = tol.tol_algebra.unwrap_or(ALGEBRA_TOL);
    let mut isometry = Vec::new();
    let mut witnesses = Vec::new();
    for (k, x) in p.vectors.iter().enumerate() {
        let local = loc.map(x)?.norm_squared();
        let global = evaluate_state(&p.state, &inner_product(x, x)?)?.re;
        let residual = (local - global).abs() / (1.0 + global.abs());
        if residual > tol_alg {
            witnesses.push(json!({ "refutes": "isometric", "vector": k, "residual": residual }));
        }
        isometry.push(json!({ "vector": k, "local_norm_sq": local, "state_value": global, "residual": residual }));
    }
    let mut body = json!({
        "localization": to_value(&loc)?,
        "isometric": witnesses.is_empty(),
        "isometry": isometry,
        "witnesses": witnesses,
    });
    if let Some(spec) = p.operator {
        let (t, default) = spec.build()?;
        if t.space != p.space || t.fiber_dim()? != p.fiber_dim {
            return Err(Error::input("operator does not act on the given module"));
        }
        let tau = tol.tau.unwrap_or(default);
        let l = localize_operator(&t, &loc)?;
        let sym = l.fiber.symmetry_residual();
        let defect = l.fiber.defect(tau, SYM_TOL).ok();
        body = merge(
            body,
            json!({
                "local_operator": {
                    "label": l.fiber.label(),
                    "hilbert_dim": l.fiber.hilbert_dim(),
                    "param_dim": l.fiber.param_dim(),
                    "symmetry_residual": sym,
                    "defects": defect.as_ref().map(|d| [d.n_plus, d.n_minus]),
                    "sigma_min": defect.as_ref().map(|d| d.margin()),
                    "tau": tau,
                }
            }),
        );
    }
    Ok((body, Vec::new()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegularityParams {
    operator: OperatorSpec,
    #[serde(default)]
    states: Option<Vec<State>>,
    /// For boundary fields: a measure whose localization is analysed.
    #[serde(default)]
    measure: Option<State>,
    #[serde(default)]
    adjointability_samples: Option<usize>,
    #[serde(default = "default_samples")]
    samples: usize,
}

fn default_samples() -> usize {
    32
}

fn check_regularity_cmd(p: RegularityParams, tol: Tolerances, rng: &mut ChaCha8Rng) -> Result<(Value, Vec<Series>)> {
    let (t, default) = p.operator.build()?;
    let tau = tol.tau.unwrap_or(default);
    let states = p.states.unwrap_or_else(|| pure_states(&t.space));
    for s in &states {
        s.validate(&t.space)?;
    }
    let verdict = local_global_check(&t, &states, tau)?;
    let mut body = to_value(&verdict)?;
    if let Some(mu) = p.measure {
        let OperatorSpec::BoundaryField {
            lambda, fiber_nodes, ..
        } = &p.operator
        else {
            return Err(Error::input("measure analysis needs a boundary_field operator"));
        };
        let report = measure_localization_analysis(lambda, &t.space, &mu, *fiber_nodes, tau, p.samples, rng)?;
        body = merge(body, json!({ "measure_analysis": to_value(&report)? }));
    }
    if let Some(samples) = p.adjointability_samples {
        let report = graph_embedding_adjointability(&t, &states, samples, tol.tol_density.unwrap_or(1e-8), rng)?;
        body = merge(body, json!({ "adjointability": to_value(&report)? }));
    }
    let series = vec![fiber_spectrum(&t, "spectrum")];
    Ok((body, series))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SumParams {
    model: SumModelSpec,
    #[serde(default)]
    core: Option<Submodule>,
    mu_grid: Vec<f64>,
    #[serde(default = "default_n_list")]
    n_list: Vec<f64>,
    #[serde(default)]
    states: Option<Vec<State>>,
}

fn default_n_list() -> Vec<f64> {
    vec![1.0, 10.0, 100.0, 1000.0]
}

fn verify_sum_cmd(p: SumParams, tol: Tolerances, rng: &mut ChaCha8Rng) -> Result<(Value, Vec<Series>)> {
    let tau = tol.tau.unwrap_or(DENSE_TAU);
    let report = verify_sum(&p.model, p.core, &p.mu_grid, &p.n_list, p.states, tau, rng)?;
    let v = &report.verdict;
    let mut witnesses = to_value(&v.local.witnesses)?;
    if let (Some(w), Some(c)) = (witnesses.as_array_mut(), &report.comparison.witness) {
        w.push(to_value(c)?);
    }
    if !report.stable_under_doubling {
        if let Some(w) = witnesses.as_array_mut() {
            w.push(json!({
                "refutes": "stable_under_doubling",
                "detail": format!("doubled truncation gives selfadjoint_regular = {:?}", report.doubled_selfadjoint_regular),
            }));
        }
    }
    let body = json!({
        "selfadjoint_regular": v.selfadjoint_regular,
        "comparison_holds": report.comparison.holds,
        "stable_under_doubling": report.stable_under_doubling,
        "rn_decreasing": report.rn.decreasing,
        "witnesses": witnesses,
        "details": to_value(&report)?,
    });
    let d = build_sum_operator(&report.problem.model)?;
    let series = vec![fiber_spectrum(&d, "spectrum")];
    Ok((body, series))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PerturbParams {
    operator: OperatorSpec,
    perturbation: PerturbationSpec,
    /// Claimed `(a, b)`; estimated from samples when absent.
    #[serde(default)]
    a: Option<f64>,
    #[serde(default)]
    b: Option<f64>,
    #[serde(default)]
    states: Option<Vec<State>>,
    #[serde(default = "default_samples")]
    samples: usize,
}

fn refusal(e: Error) -> Result<Value> {
    match e {
        Error::Hypothesis(msg) => Ok(json!({ "refused": msg })),
        other => Err(other),
    }
}

fn perturb_cmd(p: PerturbParams, tol: Tolerances, rng: &mut ChaCha8Rng) -> Result<(Value, Vec<Series>)> {
    let (t, default) = p.operator.build()?;
    let tau = tol.tau.unwrap_or(default);
    let v = p.perturbation.build(&t)?;
    let claimed = p.a.zip(p.b);
    let estimate = relative_bound_estimate(&t, &v, claimed, p.samples, rng)?;
    let (a, b) = claimed.unwrap_or((estimate.a_hat, estimate.b_hat));
    let problem = PerturbationProblem { t, v, a, b };
    let states = p.states.unwrap_or_else(|| pure_states(&problem.t.space));
    let kato = kato_rellich_check(&problem, &states, tau).map_or_else(refusal, |r| to_value(&r))?;
    let wust = wust_check(&problem, &states, p.samples, tau, rng).map_or_else(refusal, |r| to_value(&r))?;
    let verdict = |v: &Value| v.get("selfadjoint_regular").and_then(Value::as_bool);
    let (kv, wv) = (verdict(&kato), verdict(&wust));
    if kv.is_none() && wv.is_none() {
        return Err(Error::Hypothesis(format!(
            "neither criterion applies: {} / {}",
            kato["refused"], wust["refused"]
        )));
    }
    let selfadjoint_regular = kv.unwrap_or(false) || wv.unwrap_or(false);
    let mut witnesses = Vec::new();
    for (name, r) in [("kato_rellich", &kato), ("wust", &wust)] {
        if let Some(w) = r.get("local").and_then(|l| l.get("witnesses")).and_then(Value::as_array) {
            witnesses.extend(w.iter().cloned());
        }
        if let Some(msg) = r.get("refused") {
            witnesses.push(json!({ "refutes": name, "detail": msg }));
        }
    }
    let body = json!({
        "a": a,
        "b": b,
        "estimate": to_value(&estimate)?,
        "kato_rellich": kato,
        "wust": wust,
        "selfadjoint_regular": selfadjoint_regular,
        "criteria_agree": kv.zip(wv).map(|(x, y)| x == y),
        "witnesses": if selfadjoint_regular { Vec::new() } else { witnesses },
    });
    Ok((body, Vec::new()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DemoParams {
    #[serde(default = "default_count")]
    count: usize,
    #[serde(default)]
    grid_nodes: Option<usize>,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
}

fn default_count() -> usize {
    10
}

fn default_epsilon() -> f64 {
    0.1
}

fn demo_counterexample_cmd(p: DemoParams) -> Result<(Value, Vec<Series>)> {
    // Smallest grid of at least 1000 intervals resolving every hat.
    let period = 2 * p.count + 2;
    let nodes = p.grid_nodes.unwrap_or(period * 1000_usize.div_ceil(period) + 1);
    let space = BaseSpace::unit_grid(nodes)?;
    let coords = space.coords();
    let hat = hat_function(0.5, 4, &space)?;
    let (combo, flat) = flattening_combination(p.count, &space)?;
    let counter = pure_state_counterexample(p.epsilon, &BaseSpace::unit_grid(101)?)?;
    let within = flat.max_value <= flat.bound;
    let mut witnesses = Vec::new();
    if !within {
        let k = combo.values.iter().enumerate().max_by(|a, b| a.1.re.total_cmp(&b.1.re)).map(|(k, _)| k).unwrap_or(0);
        witnesses.push(json!({ "refutes": "within_bound", "x": coords[k], "value": combo.values[k].re }));
    }
    let series = vec![
        Series::xy("hat", coords.iter().zip(&hat.values).map(|(&x, v)| (x, v.re))),
        Series::xy("flattening", coords.iter().zip(&combo.values).map(|(&x, v)| (x, v.re))),
        Series::xy("pointwise_counterexample", counter.per_node.iter().map(|n| (n.x, n.value))),
    ];
    let body = json!({
        "grid_nodes": nodes,
        "within_bound": within,
        "flattening": to_value(&flat)?,
        "counterexample": to_value(&counter)?,
        "witnesses": witnesses,
    });
    Ok((body, series))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CoreParams {
    operator: OperatorSpec,
    core: Submodule,
    #[serde(default)]
    states: Option<Vec<State>>,
}

fn core_check_cmd(p: CoreParams, tol: Tolerances) -> Result<(Value, Vec<Series>)> {
    let (t, _) = p.operator.build()?;
    let states = p.states.unwrap_or_else(|| pure_states(&t.space));
    let reports = check_core(&t, &p.core, &states, &CoreTargets::Domain, tol.tol_density.unwrap_or(CORE_TOL))?;
    let witnesses: Vec<_> = reports.iter().filter(|r| !r.is_core).cloned().collect();
    let body = json!({
        "is_core": witnesses.is_empty(),
        "reports": to_value(&reports)?,
        "witnesses": to_value(&witnesses)?,
    });
    Ok((body, Vec::new()))
}

/// Fibers of a field of Hermitian matrices for examples and tests.
pub fn diagonal_spec(space: &BaseSpace, mats: &[CMat]) -> OperatorSpec {
    OperatorSpec::Diagonal {
        space: space.clone(),
        matrices: mats
            .iter()
            .map(|m| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect())
            .collect(),
    }
}
