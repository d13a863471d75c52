//! Acceptance criteria, run in order inside one test so the PASS/FAIL lines
//! come out together and timings are not distorted by parallel tests.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use locglob::cstar_space::{evaluate_state, is_positive, AlgebraElement, BaseSpace, State};
use locglob::hilbert_module::{graph_inner_product, inner_product, ModuleVector, Submodule};
use locglob::linalg::{self, c, CMat, C64};
use locglob::localization::{localize_module, localize_operator};
use locglob::perturbation_sums::{
    kato_rellich_check, random_agreement_instance, verify_sum, wust_check, Perturbation, PerturbationProblem,
    SumModelSpec,
};
use locglob::regularity::lambda::{Breakpoint, LambdaExpr, PointClass, RegionMode};
use locglob::regularity::{
    classify_lambda, classify_t_lambda, defect_indices, local_global_check, measure_localization_analysis,
    pure_states, LambdaSpec, SYM_TOL,
};
use locglob::separation::{
    convex_inequality_check, find_separating_state, flattening_combination, hat_function,
    pure_state_counterexample, CertificateKind, ConvexSet, SeparationProblem,
};
use locglob::unbounded_ops::{
    build_boundary_field, build_dirac_interval, build_extension, default_tau, dirac::phi_constant,
    dirac::zeta_exact, FiberOp, OperatorRep,
};
use locglob::Error;

/// Collects named checks; a criterion passes when all of them hold.
#[derive(Default)]
struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    fn time_limit(&mut self, start: Instant, limit: Duration) {
        let t = start.elapsed();
        self.note(format!("runtime {:.2}s (limit {}s)", t.as_secs_f64(), limit.as_secs()));
        self.check(t <= limit, format!("runtime {:.2}s exceeds {}s", t.as_secs_f64(), limit.as_secs()));
    }
}

fn unimodular(rng: &mut ChaCha8Rng) -> C64 {
    C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
}

fn deficiency_structure(c: &mut Checks) {
    let start = Instant::now();
    let nodes = 2000;
    let tau = default_tau(nodes);
    let pair = build_dirac_interval(nodes, "box").unwrap();
    let loc = localize_module(&pair.min.space, nodes - 1, &State::pure(0)).unwrap();
    let dmin = defect_indices(&localize_operator(&pair.min, &loc).unwrap(), tau).unwrap();
    c.check(dmin.indices() == (1, 1), format!("D_min defect {:?}", dmin.indices()));
    c.note(format!("D_min defect {:?}, margin {:.3e}", dmin.indices(), dmin.margin()));
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_margin = f64::INFINITY;
    for _ in 0..20 {
        let lambda = unimodular(&mut rng);
        let d = build_extension(&pair.data, lambda).unwrap();
        let r = defect_indices(&localize_operator(&d, &loc).unwrap(), tau).unwrap();
        c.check(r.indices() == (0, 0), format!("D_{lambda} defect {:?}", r.indices()));
        worst_margin = worst_margin.min(r.margin());
    }
    c.note(format!("20 extensions with defect (0,0), smallest margin {worst_margin:.3e}"));

    let data = &pair.data;
    let half = 0.5f64.sqrt();
    for (name, v) in [("φ+", data.l2_norm_plus), ("φ-", data.l2_norm_minus)] {
        c.check((v - half).abs() <= 1e-3, format!("‖{name}‖ = {v}"));
        c.note(format!("‖{name}‖ = {v:.12}"));
    }
    // Midpoint values against c·e^{-t}.
    let g = data.grid;
    let embedded = g.embed(&data.phi_plus);
    let err: f64 = (0..g.cells())
        .map(|j| {
            let v = embedded[j] / g.h().sqrt();
            let exact = phi_constant() * (-g.midpoint(j)).exp();
            (v - exact).norm_sqr() * g.h()
        })
        .sum::<f64>()
        .sqrt();
    c.check(err <= 1e-2, format!("φ+ L² error {err}"));
    c.note(format!("φ+ vs c·e^(-t): L² error {err:.3e}"));
    c.time_limit(start, Duration::from_secs(30));
}

/// Eigenvalues of the periodic box scheme `J^{-1} A`, assembled here from the
/// difference formulas alone.
fn periodic_box_oracle(cells: usize) -> Vec<f64> {
    let h = 1.0 / cells as f64;
    let mut j = DMatrix::<C64>::zeros(cells, cells);
    let mut a = DMatrix::<C64>::zeros(cells, cells);
    for k in 0..cells {
        let next = (k + 1) % cells;
        j[(k, k)] += C64::from(0.5 * h.sqrt());
        j[(k, next)] += C64::from(0.5 * h.sqrt());
        a[(k, k)] += c(0.0, 1.0 / h.sqrt());
        a[(k, next)] += c(0.0, -1.0 / h.sqrt());
    }
    let m = j.try_inverse().unwrap() * a;
    let m = (&m + m.adjoint()) * C64::from(0.5);
    linalg::hermitian_eigen(&m).0
}

fn nearest(values: &[f64], x: f64) -> f64 {
    values.iter().copied().min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs())).unwrap()
}

fn extension_spectra(c: &mut Checks) {
    let start = Instant::now();
    let nodes = 400;
    let pair = build_dirac_interval(nodes, "box").unwrap();
    let one = C64::from(1.0);
    let zeta = pair.data.zeta(one);
    c.check((zeta - zeta_exact(one)).norm() < 1e-6, format!("ζ(1) = {zeta}"));
    c.note(format!("ζ(1) = {:.3e}{:+.3e}i against (λ+e)/(λe+1) = 1", zeta.re, zeta.im));
    let d1 = build_extension(&pair.data, one).unwrap();
    let spec = d1.fiber_at(0).unwrap().to_relation().spectrum().unwrap();
    let oracle = periodic_box_oracle(nodes - 1);
    let mut worst: f64 = 0.0;
    let mut oracle_gap: f64 = 0.0;
    for k in -5i32..=5 {
        let target = std::f64::consts::TAU * k as f64;
        let got = nearest(&spec, target);
        let o = nearest(&oracle, target);
        let rel = if k == 0 { got.abs() } else { ((got - target) / target).abs() };
        worst = worst.max(rel);
        oracle_gap = oracle_gap.max((got - o).abs() / (1.0 + o.abs()));
        c.check(rel <= 1e-2, format!("eigenvalue near 2π·{k}: {got}"));
    }
    c.check(oracle_gap < 1e-8, format!("library and dense oracle differ by {oracle_gap:.3e}"));
    c.note(format!(
        "worst relative error against 2πk, |k| ≤ 5: {worst:.3e}; dense oracle gap {oracle_gap:.3e}"
    ));
    c.time_limit(start, Duration::from_secs(10));
}

fn canonical_specs() -> Vec<(&'static str, LambdaSpec, [bool; 4])> {
    // (regular, selfadjoint, selfadjoint and regular, adjoint selfadjoint
    // and regular), read off from ssupp, its interior, ssupp_r and reg_∞.
    vec![
        ("continuous", LambdaSpec::linear(1.0, 0.0), [true, true, true, true]),
        ("no-limit jump at 0", LambdaSpec::oscillating_at_zero(), [false, true, false, false]),
        ("removable jump at 0", LambdaSpec::removable_jump_at_zero(), [false, false, false, true]),
        (
            "singular on [1/3, 2/3]",
            LambdaSpec::singular_block(1.0 / 3.0, 2.0 / 3.0),
            [false, false, false, false],
        ),
    ]
}

fn classification_table(c: &mut Checks) {
    let space = BaseSpace::unit_grid(31).unwrap();
    let fiber_nodes = 32;
    let tau = default_tau(fiber_nodes);
    for (name, spec, expected) in canonical_specs() {
        let cl = classify_lambda(&spec).unwrap();
        let v = classify_t_lambda(&cl);
        let sym = [v.regular, v.selfadjoint, v.selfadjoint_regular, v.adjoint_selfadjoint_regular];
        c.check(sym == expected, format!("{name}: symbolic {sym:?}, expected {expected:?}"));
        let (t, _, _) = build_boundary_field(&spec, &space, fiber_nodes).unwrap();
        let n = local_global_check(&t, &pure_states(&space), tau).unwrap();
        let num = [n.regular, n.selfadjoint, n.selfadjoint_regular, n.adjoint_selfadjoint_regular];
        c.check(num == sym, format!("{name}: numeric {num:?} vs symbolic {sym:?}"));
        let singular = |s: &State| match s {
            State::Pure { node } => !matches!(cl.locate(space.coord(*node)), PointClass::Regular { .. }),
            _ => false,
        };
        c.check(n.witnesses.iter().all(|w| singular(&w.state)), format!("{name}: witness off ssupp"));
        if !expected[2] {
            let w = n.witnesses.iter().find(|w| w.refutes == "selfadjoint_regular");
            let ok = w.is_some_and(|w| singular(&w.state) && w.defects == Some([1, 1]));
            c.check(ok, format!("{name}: no singular-point witness with defect (1,1)"));
            if let Some(w) = w {
                c.note(format!(
                    "{name}: {sym:?}; witness {} defect {:?}, σ_min {:.3e}",
                    w.state.describe(),
                    w.defects,
                    w.sigma_min
                ));
            }
        } else {
            c.note(format!("{name}: {sym:?}, no witnesses"));
        }
    }
}

fn measure_localization(c: &mut Checks) {
    let space = BaseSpace::unit_grid(21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // Lebesgue-type weights: no mass at the singular point 0.
    let mu = State::right_riemann(&space);
    let fiber_nodes = 32;
    let r = measure_localization_analysis(
        &LambdaSpec::oscillating_at_zero(),
        &space,
        &mu,
        fiber_nodes,
        default_tau(fiber_nodes),
        40,
        &mut rng,
    )
    .unwrap();
    c.check(r.hypotheses_hold, format!("hypotheses fail: {:?}", r.violations));
    c.check(r.measure_defect.indices() == (0, 0), format!("T^μ defect {:?}", r.measure_defect.indices()));
    let pure0 = r.pure_witnesses.iter().find(|w| w.state == State::pure(0));
    c.check(pure0.is_some_and(|w| w.defects == Some([1, 1])), "Pure(0) does not give defect (1,1)");
    c.note(format!(
        "T^μ defect {:?} with margin {:.3e}; Pure(0) defect {:?} with σ_min {:.3e}",
        r.measure_defect.indices(),
        r.measure_defect.margin(),
        pure0.and_then(|w| w.defects),
        pure0.map_or(f64::NAN, |w| w.sigma_min)
    ));
    c.note(format!(
        "orthogonality residual {:.3e}, converse residual {:.3e}",
        r.orthogonality_residual, r.converse_residual
    ));
}

fn random_module_vector(rng: &mut ChaCha8Rng, space: &BaseSpace, d: usize) -> ModuleVector {
    let values = (0..space.len())
        .map(|_| (0..d).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect())
        .collect();
    ModuleVector::new(space.clone(), d, values).unwrap()
}

/// `min_c ‖x0(p) - G(p) c‖²` by a least-squares solve.
fn brute_force_distance(gens: &[ModuleVector], x0: &ModuleVector, p: usize) -> f64 {
    let d = x0.fiber_dim;
    let g = CMat::from_fn(d, gens.len(), |i, j| gens[j].fiber(p)[i]);
    let x = x0.fiber(p);
    let sol = g.clone().svd(true, true).solve(&x, 1e-12).unwrap();
    (&x - g * sol).norm_squared()
}

fn separation(c: &mut Checks) {
    let grid = BaseSpace::unit_grid(221).unwrap();
    let (combo, r) = flattening_combination(10, &grid).unwrap();
    let max = combo.values.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max);
    c.check(max <= 0.1 + 1e-15, format!("flattening max {max}"));
    c.check(r.member_norms.iter().all(|n| (n - 1.0).abs() < 1e-15), "member norms differ from 1");
    c.note(format!("flattening N=10: max {max:.15}, {} members of norm 1", r.member_norms.len()));

    let space = BaseSpace::unit_grid(101).unwrap();
    let eps = 0.1;
    let r = pure_state_counterexample(eps, &space).unwrap();
    let f1 = hat_function(0.25, 5, &space).unwrap();
    let f2 = hat_function(0.75, 5, &space).unwrap();
    let mut worst: f64 = 0.0;
    for (p, node) in r.per_node.iter().enumerate() {
        let f = f1.values[p] * node.weight_left + f2.values[p] * (1.0 - node.weight_left);
        worst = worst.max(f.norm_sqr());
    }
    c.check(worst <= eps * eps + 1e-15, format!("pointwise value {worst}"));
    let hull_min = (0..=10_000)
        .map(|k| {
            let l = k as f64 / 10_000.0;
            f1.values.iter().zip(&f2.values).map(|(a, b)| (a * l + b * (1.0 - l)).norm()).fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min);
    c.check(hull_min >= 0.5 - 1e-6, format!("hull sup-norm {hull_min}"));
    c.check(r.min_hull_norm >= 0.5 - 1e-6, format!("reported hull sup-norm {}", r.min_hull_norm));
    c.note(format!(
        "ε = 0.1: worst ω_p(⟨f,f⟩) {worst:.3e} ≤ 1e-2; hull sup-norm {hull_min:.9}"
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_gap: f64 = 0.0;
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..=6);
        let d = rng.random_range(2..=4);
        let space = BaseSpace::finite(n).unwrap();
        let m = rng.random_range(1..d);
        let gens: Vec<ModuleVector> = (0..m).map(|_| random_module_vector(&mut rng, &space, d)).collect();
        let x0 = random_module_vector(&mut rng, &space, d);
        let brute = (0..n).map(|p| brute_force_distance(&gens, &x0, p)).fold(0.0, f64::max);
        let problem = SeparationProblem {
            set: ConvexSet::Submodule(Submodule::new(gens).unwrap()),
            x0,
        };
        let cert = find_separating_state(&problem).unwrap();
        let gap = (cert.margin - brute).abs() / (1.0 + brute);
        worst_gap = worst_gap.max(gap);
        if cert.kind != CertificateKind::PureState || gap > 1e-10 {
            mismatches += 1;
        }
    }
    c.check(mismatches == 0, format!("{mismatches} of 100 submodule problems disagree"));
    c.note(format!("100 submodule problems: pure certificates, worst margin gap {worst_gap:.3e}"));
}

fn defects_at(t: &OperatorRep, state: &State, tau: f64) -> Option<(usize, usize)> {
    let loc = localize_module(&t.space, t.fiber_dim().unwrap(), state).unwrap();
    let l = localize_operator(t, &loc).unwrap();
    l.fiber.defect(tau, SYM_TOL).ok().map(|d| d.indices())
}

fn random_measure(rng: &mut ChaCha8Rng, n: usize) -> State {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let s: f64 = w.iter().sum();
    State::measure(w.into_iter().map(|x| x / s).collect())
}

fn interior_jump() -> LambdaSpec {
    LambdaSpec {
        a: 0.0,
        b: 1.0,
        breakpoints: vec![Breakpoint::new(0.5, C64::from(1.0))],
        regions: vec![
            RegionMode::Continuous {
                expr: LambdaExpr::Constant { value: C64::from(1.0) },
            },
            RegionMode::Continuous {
                expr: LambdaExpr::Constant { value: C64::from(-1.0) },
            },
        ],
    }
}

fn local_global_suite(c: &mut Checks) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut models: Vec<(String, OperatorRep, f64)> = Vec::new();
    let pair = build_dirac_interval(64, "box").unwrap();
    for _ in 0..6 {
        let l = unimodular(&mut rng);
        models.push((format!("D_{l:.3}"), build_extension(&pair.data, l).unwrap(), default_tau(64)));
    }
    for n in [1, 3, 5] {
        let space = BaseSpace::finite(n).unwrap();
        let mats = (0..n).map(|_| linalg::random_hermitian(&mut rng, 4)).collect();
        models.push((format!("diagonal field on {n} points"), OperatorRep::diagonal(&space, mats).unwrap(), 1e-8));
    }
    let grid = BaseSpace::unit_grid(13).unwrap();
    for spec in [LambdaSpec::linear(1.0, 0.0), LambdaSpec::linear(-3.0, 0.4), LambdaSpec::constant(linalg::c(0.6, 0.8))] {
        let (t, _, _) = build_boundary_field(&spec, &grid, 24).unwrap();
        models.push(("continuous T_Λ".into(), t, default_tau(24)));
    }
    let mut sampled = 0;
    for (name, t, tau) in &models {
        let n = t.space.len();
        let mut states = pure_states(&t.space);
        states.extend((0..4).map(|_| random_measure(&mut rng, n)));
        let v = local_global_check(t, &states, *tau).unwrap();
        c.check(v.selfadjoint_regular, format!("{name} is not selfadjoint and regular"));
        for s in &states {
            let d = defects_at(t, s, *tau);
            c.check(d == Some((0, 0)), format!("{name} at {}: defect {d:?}", s.describe()));
            sampled += 1;
        }
    }
    c.note(format!("{} selfadjoint-regular models, {sampled} localizations all selfadjoint", models.len()));

    let nonregular = [
        ("no-limit jump", LambdaSpec::oscillating_at_zero()),
        ("removable jump", LambdaSpec::removable_jump_at_zero()),
        ("singular block", LambdaSpec::singular_block(1.0 / 3.0, 2.0 / 3.0)),
        ("singular block", LambdaSpec::singular_block(1.0 / 4.0, 1.0 / 2.0)),
        ("interior jump", interior_jump()),
    ];
    let grid = BaseSpace::unit_grid(25).unwrap();
    for (name, spec) in &nonregular {
        let (t, _, _) = build_boundary_field(spec, &grid, 24).unwrap();
        let v = local_global_check(&t, &pure_states(&grid), default_tau(24)).unwrap();
        c.check(!v.regular, format!("{name} reported regular"));
        let pure = v.witnesses.iter().any(|w| matches!(w.state, State::Pure { .. }));
        c.check(pure, format!("{name}: no pure-state witness"));
    }
    c.note(format!("{} non-regular models, each with a pure-state witness", nonregular.len()));

    let mut specs: Vec<LambdaSpec> = canonical_specs().into_iter().map(|(_, s, _)| s).collect();
    specs.extend(nonregular.iter().map(|(_, s)| s.clone()));
    specs.push(LambdaSpec::linear(2.0, 1.0));
    specs.push(LambdaSpec {
        a: 0.0,
        b: 1.0,
        breakpoints: Vec::new(),
        regions: vec![RegionMode::SingularEverywhere],
    });
    let mut disagreements = 0;
    for spec in &specs {
        let s = classify_t_lambda(&classify_lambda(spec).unwrap());
        let (t, _, _) = build_boundary_field(spec, &grid, 24).unwrap();
        let n = local_global_check(&t, &pure_states(&grid), default_tau(24)).unwrap();
        if (s.regular, s.selfadjoint, s.selfadjoint_regular, s.adjoint_selfadjoint_regular)
            != (n.regular, n.selfadjoint, n.selfadjoint_regular, n.adjoint_selfadjoint_regular)
        {
            disagreements += 1;
        }
    }
    c.check(disagreements == 0, format!("{disagreements} symbolic/numeric disagreements"));
    c.note(format!("{} Λ specs: {disagreements} symbolic/numeric disagreements", specs.len()));
}

fn perturbation(c: &mut Checks) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let nodes = 40;
    let tau = default_tau(nodes);
    let pair = build_dirac_interval(nodes, "box").unwrap();
    let t = build_extension(&pair.data, C64::from(1.0)).unwrap();
    let states = [State::pure(0)];
    let v = Perturbation::scaled_plus_transform(&t, -1.0, 0.5).unwrap();
    let p = PerturbationProblem {
        t: t.clone(),
        v,
        a: 1.0,
        b: 0.25 * (1.0 + 1e-9),
    };
    let refused = matches!(kato_rellich_check(&p, &states, tau), Err(Error::Hypothesis(_)));
    c.check(refused, "Kato–Rellich did not refuse a = 1");
    match wust_check(&p, &states, 200, tau, &mut rng) {
        Ok(w) => {
            c.check(w.selfadjoint_regular, "Wüst verdict is not selfadjoint-regular");
            c.check(w.localized_margin >= -1e-10, format!("localized margin {}", w.localized_margin));
            c.note(format!(
                "V = -T + ½·T(1+T²)^(-1/2): Kato–Rellich refuses, Wüst passes (margins {:.3e} / {:.3e} on {} samples)",
                w.inequality_margin, w.localized_margin, w.localized_samples
            ));
        }
        Err(e) => c.check(false, format!("Wüst check failed: {e}")),
    }

    let grid_space = BaseSpace::finite(3).unwrap();
    let diag = OperatorRep::diagonal(&grid_space, (0..3).map(|_| linalg::random_hermitian(&mut rng, 4)).collect())
        .unwrap();
    let mut agree = 0;
    let mut worst_local: f64 = f64::INFINITY;
    for k in 0..20 {
        let (base, st, tau) = if k % 2 == 0 {
            (&t, states.to_vec(), tau)
        } else {
            (&diag, pure_states(&grid_space), 1e-8)
        };
        let a = rng.random_range(0.0..0.95);
        let beta = rng.random_range(0.1..1.0);
        let p = random_agreement_instance(base, a, beta, &mut rng).unwrap();
        let kr = kato_rellich_check(&p, &st, tau);
        let w = wust_check(&p, &st, 50, tau, &mut rng);
        match (kr, w) {
            (Ok(kr), Ok(w)) => {
                worst_local = worst_local.min(w.localized_margin);
                if kr.selfadjoint_regular == w.selfadjoint_regular {
                    agree += 1;
                }
            }
            (kr, w) => c.check(false, format!("instance {k}: {:?} / {:?}", kr.err(), w.err())),
        }
    }
    c.check(agree == 20, format!("{agree} of 20 instances agree"));
    c.check(worst_local >= -1e-10, format!("localized inequality margin {worst_local}"));
    c.note(format!("20 instances with a < 1: {agree} agree; smallest localized margin {worst_local:.3e}"));
}

fn sum_operator(c: &mut Checks) {
    let mu_grid = [1.0, 2.0, 10.0, -1.0, -2.0, -10.0];
    let n_list = [1.0, 10.0, 100.0, 1000.0];
    // The criterion is stated at dim 200. The odd truncation 201 is run for
    // comparison only: there 0 ∈ σ(S), at even truncations it is not.
    for dim in [200usize, 201] {
        let primary = dim == 200;
        let mut sub = Checks::default();
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = SumModelSpec::Hermite { dim };
        let r = match verify_sum(&spec, None, &mu_grid, &n_list, None, 1e-8, &mut rng) {
            Ok(r) => r,
            Err(e) => {
                c.check(!primary, format!("dim {dim}: {e}"));
                continue;
            }
        };
        let elapsed = start.elapsed();
        let p = &r.problem;
        let mut worst_oracle: f64 = 0.0;
        let mut worst_literal: f64 = 0.0;
        for x in &p.x_norms {
            worst_oracle = worst_oracle.max((x.norm - x.resolvent_bound).abs());
            worst_literal = worst_literal.max((x.norm - 1.0 / x.mu.abs()).abs());
        }
        sub.check(worst_literal <= 1e-6, format!("dim {dim}: ‖X_μ‖ off 1/|μ| by {worst_literal:.3e}"));
        sub.check(worst_oracle <= 1e-6, format!("dim {dim}: ‖X_μ‖ off ‖[S,T]‖/dist(iμ,σ(S)) by {worst_oracle:.3e}"));
        let norms: Vec<String> = p.x_norms.iter().map(|x| format!("μ={}: {:.12}", x.mu, x.norm)).collect();
        c.note(format!(
            "dim {dim}: ‖X_μ‖ [{}]; max |‖X_μ‖-1/|μ|| = {worst_literal:.3e}, max |‖X_μ‖-‖[S,T]‖/dist(iμ,σ(S))| = {worst_oracle:.3e}",
            norms.join(", ")
        ));
        sub.check(p.adjoint_formula_residual < 1e-10, format!("adjoint formula residual {}", p.adjoint_formula_residual));
        let comm = p.commutation_residuals.iter().map(|m| m.residual).fold(0.0, f64::max);
        c.note(format!("dim {dim}: adjoint formula residual {:.3e}, commutation residual {comm:.3e}", p.adjoint_formula_residual));
        sub.check(r.rn.decreasing, format!("dim {dim}: ‖R_n ξ‖ not decreasing"));
        sub.check(r.rn.final_ratio <= 1e-2, format!("dim {dim}: ‖R_n ξ‖ ratio {}", r.rn.final_ratio));
        let rows: Vec<String> = r.rn.rows.iter().map(|row| format!("n={}: {:.3e}", row.n, row.rn_xi)).collect();
        c.note(format!("dim {dim}: ‖R_n ξ‖ [{}], ratio {:.3e}", rows.join(", "), r.rn.final_ratio));
        sub.check(r.comparison.holds, format!("dim {dim}: comparison inequalities fail"));

        let spectrum = &r.verdict.spectrum;
        let mut worst_spec: f64 = 0.0;
        for k in 0..=10 {
            let e = (2.0 * k as f64).sqrt();
            for target in [e, -e] {
                let got = nearest(spectrum, target);
                let err = if k == 0 { got.abs() } else { ((got - target) / target).abs() };
                worst_spec = worst_spec.max(err);
            }
        }
        sub.check(worst_spec <= 1e-2, format!("dim {dim}: D spectrum error {worst_spec:.3e}"));
        sub.check(
            r.verdict.localization_residual < 1e-10 && r.verdict.domain_dims_agree,
            format!("dim {dim}: localized-domain identity fails"),
        );
        sub.check(r.verdict.selfadjoint_regular, format!("dim {dim}: D is not selfadjoint and regular"));
        sub.check(r.stable_under_doubling, format!("dim {dim}: verdict changes under doubling"));
        sub.check(elapsed <= Duration::from_secs(60), format!("dim {dim}: runtime {:.1}s", elapsed.as_secs_f64()));
        c.note(format!(
            "dim {dim}: D spectrum error {worst_spec:.3e} (k ≤ 10), localization residual {:.1e}, selfadjoint+regular {}, runtime {:.1}s",
            r.verdict.localization_residual,
            r.verdict.selfadjoint_regular,
            elapsed.as_secs_f64()
        ));
        if primary {
            c.failures.extend(sub.failures);
        } else if sub.failures.is_empty() {
            c.note(format!("dim {dim} (comparison run): every check holds"));
        } else {
            c.note(format!("dim {dim} (comparison run) misses: {}", sub.failures.join("; ")));
        }
    }
}

/// `b - a ≥ 0` nodewise, relative to the size of `b`.
fn dominated(a: &AlgebraElement, b: &AlgebraElement) -> bool {
    let scale = 1.0 + b.norm() + a.norm();
    is_positive(&b.sub(a).unwrap(), 1e-12 * scale)
}

fn random_space(rng: &mut ChaCha8Rng) -> BaseSpace {
    if rng.random_bool(0.5) {
        BaseSpace::finite(rng.random_range(1..=5)).unwrap()
    } else {
        BaseSpace::unit_grid(rng.random_range(2..=9)).unwrap()
    }
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> State {
    if rng.random_bool(0.5) {
        State::pure(rng.random_range(0..n))
    } else {
        random_measure(rng, n)
    }
}

fn convex_weights(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn inner_product_suite(c: &mut Checks) {
    let trials = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut fails = [0usize; 5];

    for _ in 0..trials {
        let s = random_space(&mut rng);
        let d = rng.random_range(1..=4);
        let x = random_module_vector(&mut rng, &s, d);
        let y = random_module_vector(&mut rng, &s, d);
        let lhs = inner_product(&x, &y).unwrap().add(&inner_product(&y, &x).unwrap()).unwrap();
        let rhs = inner_product(&x, &x).unwrap().add(&inner_product(&y, &y).unwrap()).unwrap();
        if !dominated(&lhs, &rhs) {
            fails[0] += 1;
        }
    }

    for _ in 0..trials {
        let s = random_space(&mut rng);
        let d = rng.random_range(1..=4);
        let m = rng.random_range(1..=5);
        let ys: Vec<ModuleVector> = (0..m).map(|_| random_module_vector(&mut rng, &s, d)).collect();
        let l = convex_weights(&mut rng, m);
        let mut lhs = AlgebraElement::zero(&s);
        let mut rhs = AlgebraElement::zero(&s);
        for k in 0..m {
            rhs = rhs.add(&inner_product(&ys[k], &ys[k]).unwrap().scale(C64::from(l[k]))).unwrap();
            for j in 0..m {
                lhs = lhs.add(&inner_product(&ys[k], &ys[j]).unwrap().scale(C64::from(l[k] * l[j]))).unwrap();
            }
        }
        let x0 = random_module_vector(&mut rng, &s, d);
        let report = convex_inequality_check(&ys, &l, &x0).unwrap();
        if !dominated(&lhs, &rhs) || !report.holds() {
            fails[1] += 1;
        }
    }

    for _ in 0..trials {
        let s = random_space(&mut rng);
        let d = rng.random_range(1..=4);
        let m = rng.random_range(1..=5);
        let ys: Vec<ModuleVector> = (0..m).map(|_| random_module_vector(&mut rng, &s, d)).collect();
        let x0 = random_module_vector(&mut rng, &s, d);
        let l = convex_weights(&mut rng, m);
        let mut chain = AlgebraElement::zero(&s);
        let mut mean = ModuleVector::zero(&s, d);
        for k in 0..m {
            let r = ys[k].sub(&x0).unwrap();
            chain = chain.add(&inner_product(&r, &r).unwrap().scale(C64::from(l[k]))).unwrap();
            mean = mean.add(&ys[k].scale(C64::from(l[k]))).unwrap();
        }
        let gap = x0.sub(&mean).unwrap();
        let rhs = inner_product(&gap, &gap).unwrap();
        if !dominated(&rhs, &chain) {
            fails[2] += 1;
        }
    }

    // Graph norm of the localized operator against ω(⟨x,x⟩_T).
    let pair = build_dirac_interval(24, "box").unwrap();
    let grid = BaseSpace::unit_grid(9).unwrap();
    let (field, _, _) = build_boundary_field(&LambdaSpec::oscillating_at_zero(), &grid, 24).unwrap();
    let mut worst117: f64 = 0.0;
    for k in 0..trials {
        let t = match k % 3 {
            0 => {
                let s = random_space(&mut rng);
                let d = rng.random_range(1..=4);
                let mats = (0..s.len()).map(|_| linalg::random_cmat(&mut rng, d, d)).collect();
                OperatorRep::diagonal(&s, mats).unwrap()
            }
            1 => field.clone(),
            _ => {
                let s = random_space(&mut rng);
                let fibers = (0..s.len())
                    .map(|_| build_extension(&pair.data, unimodular(&mut rng)).unwrap().fiber_at(0).unwrap())
                    .collect::<Vec<FiberOp>>();
                OperatorRep::field(&s, fibers).unwrap()
            }
        };
        let state = random_state(&mut rng, t.space.len());
        let loc = localize_module(&t.space, t.fiber_dim().unwrap(), &state).unwrap();
        let l = localize_operator(&t, &loc).unwrap();
        let x = t.random_domain_vector(&mut rng).unwrap();
        let xi = l.map_domain(&x).unwrap();
        let local = l.fiber.embed(&xi).norm_squared() + l.fiber.apply(&xi).norm_squared();
        let global = evaluate_state(&state, &graph_inner_product(&t, &x, &x).unwrap()).unwrap().re;
        let err = (local - global).abs() / (1.0 + global.abs());
        worst117 = worst117.max(err);
        if err > 1e-9 {
            fails[3] += 1;
        }
    }

    let mut worst_iso: f64 = 0.0;
    for _ in 0..trials {
        let s = random_space(&mut rng);
        let d = rng.random_range(1..=4);
        let x = random_module_vector(&mut rng, &s, d);
        let state = random_state(&mut rng, s.len());
        let loc = localize_module(&s, d, &state).unwrap();
        let local = loc.map(&x).unwrap().norm_squared();
        let global = evaluate_state(&state, &inner_product(&x, &x).unwrap()).unwrap().re;
        let err = (local - global).abs() / (1.0 + global.abs());
        worst_iso = worst_iso.max(err);
        if err > 1e-10 {
            fails[4] += 1;
        }
    }

    let names = [
        "⟨x,y⟩+⟨y,x⟩ ≤ ⟨x,x⟩+⟨y,y⟩",
        "Σλkλl⟨yk,yl⟩ ≤ Σλk⟨yk,yk⟩",
        "convex-combination chain",
        "localized graph norm",
        "localization isometry",
    ];
    for (name, f) in names.iter().zip(fails) {
        c.check(f == 0, format!("{name}: {f} of {trials} trials fail"));
    }
    c.note(format!(
        "{trials} trials each, failures {fails:?}; worst graph-norm error {worst117:.2e}, worst isometry error {worst_iso:.2e}"
    ));
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn(&mut Checks)); 9] = [
        ("deficiency structure of the interval Dirac operator", deficiency_structure),
        ("extension spectra", extension_spectra),
        ("classification table for T_Λ", classification_table),
        ("selfadjoint localization at a measure, non-regular at a point", measure_localization),
        ("separation by states", separation),
        ("local-global suite", local_global_suite),
        ("perturbation criteria", perturbation),
        ("sum operator", sum_operator),
        ("inner-product property suite", inner_product_suite),
    ];
    let mut failed = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let mut checks = Checks::default();
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| run(&mut checks)));
        if let Err(e) = outcome {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            checks.failures.push(format!("panicked: {msg}"));
        }
        let verdict = if checks.failures.is_empty() { "PASS" } else { "FAIL" };
        println!("criterion {} {verdict}: {name} ({:.1}s)", k + 1, start.elapsed().as_secs_f64());
        for n in &checks.notes {
            println!("    {n}");
        }
        for f in &checks.failures {
            println!("    failed: {f}");
        }
        if !checks.failures.is_empty() {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
