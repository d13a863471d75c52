//! Boundary-condition functions `Λ : X → S¹` on an interval and their
//! regular / singular sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{C64, I};

const UNIMODULAR_TOL: f64 = 1e-12;
const LIMIT_TOL: f64 = 1e-9;
const POINT_TOL: f64 = 1e-12;

/// Closed-form description of `Λ` on an open region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaExpr {
    Constant { value: C64 },
    /// `exp(i (slope·x + offset))`
    Linear { slope: f64, offset: f64 },
    /// `exp(i scale / (x - center))`; `center` must not lie inside the region.
    Reciprocal { scale: f64, center: f64 },
    /// Phases at increasing sample points, interpolated linearly.
    Samples { xs: Vec<f64>, phases: Vec<f64> },
}

impl LambdaExpr {
    pub fn value(&self, x: f64) -> C64 {
        match self {
            LambdaExpr::Constant { value } => *value,
            LambdaExpr::Linear { slope, offset } => (I * (slope * x + offset)).exp(),
            LambdaExpr::Reciprocal { scale, center } => (I * (scale / (x - center))).exp(),
            LambdaExpr::Samples { xs, phases } => {
                let k = xs.partition_point(|&s| s <= x).clamp(1, xs.len() - 1);
                let t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
                (I * (phases[k - 1] * (1.0 - t) + phases[k] * t)).exp()
            }
        }
    }

    /// Limit of the expression at an endpoint `p` of a region.
    pub fn limit_at(&self, p: f64) -> Option<C64> {
        match self {
            LambdaExpr::Reciprocal { center, .. } if (p - center).abs() <= POINT_TOL => None,
            _ => Some(self.value(p)),
        }
    }

    fn validate(&self, lo: f64, hi: f64) -> Result<()> {
        match self {
            LambdaExpr::Constant { value } => check_unimodular(*value),
            LambdaExpr::Linear { slope, offset } if slope.is_finite() && offset.is_finite() => Ok(()),
            LambdaExpr::Reciprocal { scale, center } if scale.is_finite() => {
                if *center > lo + POINT_TOL && *center < hi - POINT_TOL {
                    Err(Error::input("reciprocal expression has its pole inside the region"))
                } else {
                    Ok(())
                }
            }
            LambdaExpr::Samples { xs, phases } => {
                if xs.len() < 2 || xs.len() != phases.len() || xs.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::input("sampled expression needs ≥ 2 increasing sample points"));
                }
                if xs[0] > lo + POINT_TOL || xs[xs.len() - 1] < hi - POINT_TOL {
                    return Err(Error::input("sample points must cover the region"));
                }
                Ok(())
            }
            _ => Err(Error::input("non-finite expression parameters")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RegionMode {
    Continuous { expr: LambdaExpr },
    /// Nowhere continuous on the region (declared, not sampled).
    SingularEverywhere,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LimitDecl {
    Exists { value: C64 },
    NoLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub at: f64,
    /// `Λ(p)`.
    pub value: C64,
    /// Limit declaration for every adjacent continuous region.
    #[serde(default)]
    pub limit: Option<LimitDecl>,
    #[serde(default)]
    pub left: Option<LimitDecl>,
    #[serde(default)]
    pub right: Option<LimitDecl>,
}

impl Breakpoint {
    pub fn new(at: f64, value: C64) -> Self {
        Self {
            at,
            value,
            limit: None,
            left: None,
            right: None,
        }
    }

    pub fn with_limit(mut self, limit: LimitDecl) -> Self {
        self.limit = Some(limit);
        self
    }
}

/// `Λ` on `[a, b]`: the open cells between consecutive points of
/// `{a} ∪ breakpoints ∪ {b}` each carry a region mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSpec {
    pub a: f64,
    pub b: f64,
    pub breakpoints: Vec<Breakpoint>,
    pub regions: Vec<RegionMode>,
}

fn check_unimodular(v: C64) -> Result<()> {
    if (v.norm() - 1.0).abs() > UNIMODULAR_TOL {
        return Err(Error::input(format!("value {v} is not unimodular")));
    }
    Ok(())
}

impl LambdaSpec {
    /// `Λ ≡ exp(i (slope x + offset))` on `[0, 1]`.
    pub fn linear(slope: f64, offset: f64) -> Self {
        Self {
            a: 0.0,
            b: 1.0,
            breakpoints: Vec::new(),
            regions: vec![RegionMode::Continuous {
                expr: LambdaExpr::Linear { slope, offset },
            }],
        }
    }

    pub fn constant(value: C64) -> Self {
        Self {
            a: 0.0,
            b: 1.0,
            breakpoints: Vec::new(),
            regions: vec![RegionMode::Continuous {
                expr: LambdaExpr::Constant { value },
            }],
        }
    }

    /// `Λ(x) = exp(i/x)` on `(0, 1]` and `Λ(0) = 1`: no limit at 0.
    pub fn oscillating_at_zero() -> Self {
        Self {
            a: 0.0,
            b: 1.0,
            breakpoints: vec![Breakpoint::new(0.0, C64::from(1.0)).with_limit(LimitDecl::NoLimit)],
            regions: vec![RegionMode::Continuous {
                expr: LambdaExpr::Reciprocal { scale: 1.0, center: 0.0 },
            }],
        }
    }

    /// `Λ ≡ 1` on `(0, 1]` and `Λ(0) = -1`: the limit at 0 exists but
    /// differs from the value.
    pub fn removable_jump_at_zero() -> Self {
        let one = C64::from(1.0);
        Self {
            a: 0.0,
            b: 1.0,
            breakpoints: vec![Breakpoint::new(0.0, C64::from(-1.0)).with_limit(LimitDecl::Exists { value: one })],
            regions: vec![RegionMode::Continuous {
                expr: LambdaExpr::Constant { value: one },
            }],
        }
    }

    /// `exp(ix)` outside `[lo, hi]`, nowhere continuous inside.
    pub fn singular_block(lo: f64, hi: f64) -> Self {
        let expr = LambdaExpr::Linear { slope: 1.0, offset: 0.0 };
        Self {
            a: 0.0,
            b: 1.0,
            breakpoints: vec![
                Breakpoint::new(lo, expr.value(lo)),
                Breakpoint::new(hi, expr.value(hi)),
            ],
            regions: vec![
                RegionMode::Continuous { expr: expr.clone() },
                RegionMode::SingularEverywhere,
                RegionMode::Continuous { expr },
            ],
        }
    }

    /// Increasing list of cell endpoints.
    pub fn points(&self) -> Vec<f64> {
        let mut pts = vec![self.a];
        for bp in &self.breakpoints {
            if (bp.at - pts[pts.len() - 1]).abs() > POINT_TOL {
                pts.push(bp.at);
            }
        }
        if (self.b - pts[pts.len() - 1]).abs() > POINT_TOL {
            pts.push(self.b);
        }
        pts
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a < self.b) {
            return Err(Error::input("Λ needs an interval with a < b"));
        }
        if self.breakpoints.windows(2).any(|w| w[0].at >= w[1].at) {
            return Err(Error::input("breakpoints must be strictly increasing"));
        }
        for bp in &self.breakpoints {
            if bp.at < self.a - POINT_TOL || bp.at > self.b + POINT_TOL {
                return Err(Error::input(format!("breakpoint {} lies outside [a, b]", bp.at)));
            }
            check_unimodular(bp.value)?;
            for d in [bp.limit, bp.left, bp.right].into_iter().flatten() {
                if let LimitDecl::Exists { value } = d {
                    check_unimodular(value)?;
                }
            }
        }
        let pts = self.points();
        if self.regions.len() != pts.len() - 1 {
            return Err(Error::input(format!(
                "{} regions given for {} cells",
                self.regions.len(),
                pts.len() - 1
            )));
        }
        for (k, r) in self.regions.iter().enumerate() {
            if let RegionMode::Continuous { expr } = r {
                expr.validate(pts[k], pts[k + 1])?;
            }
        }
        Ok(())
    }

    fn breakpoint_at(&self, x: f64) -> Option<&Breakpoint> {
        self.breakpoints.iter().find(|b| (b.at - x).abs() <= POINT_TOL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointClass {
    /// In `reg(Λ)`, with value `Λ(p)`.
    Regular { value: C64 },
    /// Interior point of the singular support.
    Interior,
    /// Boundary point where a continuous extension exists.
    Extendable { extension: C64 },
    /// Boundary point without a continuous extension.
    Singular,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellClass {
    pub lo: f64,
    pub hi: f64,
    pub singular: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaClassification {
    pub spec: LambdaSpec,
    pub points: Vec<(f64, PointClass)>,
    pub cells: Vec<CellClass>,
}

impl LambdaClassification {
    /// Classification of an arbitrary `x ∈ [a, b]`.
    pub fn locate(&self, x: f64) -> PointClass {
        if let Some((_, c)) = self.points.iter().find(|(p, _)| (p - x).abs() <= POINT_TOL) {
            return *c;
        }
        let k = self.cells.iter().position(|c| x > c.lo && x < c.hi).unwrap_or(self.cells.len() - 1);
        match &self.spec.regions[k] {
            RegionMode::Continuous { expr } => PointClass::Regular { value: expr.value(x) },
            RegionMode::SingularEverywhere => PointClass::Interior,
        }
    }

    pub fn ssupp_empty(&self) -> bool {
        !self.cells.iter().any(|c| c.singular)
            && self.points.iter().all(|(_, c)| matches!(c, PointClass::Regular { .. }))
    }

    pub fn interior_empty(&self) -> bool {
        !self.cells.iter().any(|c| c.singular)
            && !self.points.iter().any(|(_, c)| matches!(c, PointClass::Interior))
    }

    pub fn boundary(&self) -> Vec<f64> {
        self.points
            .iter()
            .filter(|(_, c)| matches!(c, PointClass::Extendable { .. } | PointClass::Singular))
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn reg_inf(&self) -> Vec<(f64, C64)> {
        self.points
            .iter()
            .filter_map(|(p, c)| match c {
                PointClass::Extendable { extension } => Some((*p, *extension)),
                _ => None,
            })
            .collect()
    }

    pub fn ssupp_r(&self) -> Vec<f64> {
        self.points
            .iter()
            .filter(|(_, c)| matches!(c, PointClass::Singular))
            .map(|(p, _)| *p)
            .collect()
    }

    /// Human-readable description of the singular support.
    pub fn describe_ssupp(&self) -> String {
        let mut parts = Vec::new();
        let mut k = 0;
        let singular_point = |c: &PointClass| !matches!(c, PointClass::Regular { .. });
        while k < self.cells.len() {
            if self.cells[k].singular {
                let lo = self.cells[k].lo;
                while k + 1 < self.cells.len() && self.cells[k + 1].singular {
                    k += 1;
                }
                parts.push(format!("[{}, {}]", lo, self.cells[k].hi));
            }
            k += 1;
        }
        for (p, c) in &self.points {
            let in_block = self.cells.iter().any(|cell| cell.singular && (cell.lo == *p || cell.hi == *p));
            if singular_point(c) && !in_block {
                parts.push(format!("{{{p}}}"));
            }
        }
        if parts.is_empty() {
            "∅".into()
        } else {
            parts.join(" ∪ ")
        }
    }
}

/// Limits at `p` from each adjacent continuous region, after reconciling
/// declared and computed limit data.
fn side_limits(spec: &LambdaSpec, pts: &[f64], k: usize) -> Result<(Vec<Option<C64>>, usize)> {
    let p = pts[k];
    let bp = spec.breakpoint_at(p);
    let mut limits = Vec::new();
    let mut singular_sides = 0;
    let sides = [(k > 0).then(|| k - 1), (k + 1 < pts.len()).then_some(k)];
    for (s, cell) in sides.into_iter().enumerate() {
        let Some(cell) = cell else { continue };
        let decl = bp.and_then(|b| if s == 0 { b.left.or(b.limit) } else { b.right.or(b.limit) });
        match &spec.regions[cell] {
            RegionMode::SingularEverywhere => {
                if bp.and_then(|b| if s == 0 { b.left } else { b.right }).is_some() {
                    return Err(Error::input(format!(
                        "limit declared at {p} on the side of a singular region"
                    )));
                }
                singular_sides += 1;
            }
            RegionMode::Continuous { expr } => {
                let computed = expr.limit_at(p);
                let lim = match (decl, computed) {
                    (None, c) => c,
                    (Some(LimitDecl::NoLimit), None) => None,
                    (Some(LimitDecl::Exists { value }), Some(c)) if (value - c).norm() <= LIMIT_TOL => Some(c),
                    _ => {
                        return Err(Error::input(format!(
                            "inconsistent limit declaration at {p}: declared {decl:?}, expression gives {computed:?}"
                        )))
                    }
                };
                limits.push(lim);
            }
        }
    }
    Ok((limits, singular_sides))
}

pub fn classify_lambda(spec: &LambdaSpec) -> Result<LambdaClassification> {
    spec.validate()?;
    let pts = spec.points();
    let cells: Vec<CellClass> = pts
        .windows(2)
        .zip(&spec.regions)
        .map(|(w, r)| CellClass {
            lo: w[0],
            hi: w[1],
            singular: matches!(r, RegionMode::SingularEverywhere),
        })
        .collect();
    let mut points = Vec::with_capacity(pts.len());
    for k in 0..pts.len() {
        let p = pts[k];
        let (limits, singular_sides) = side_limits(spec, &pts, k)?;
        let value = match spec.breakpoint_at(p) {
            Some(bp) => Some(bp.value),
            None => limits.first().copied().flatten(),
        };
        let class = if limits.is_empty() {
            PointClass::Interior
        } else if singular_sides == 0
            && value.is_some()
            && limits.iter().all(|l| matches!((l, value), (Some(l), Some(v)) if (l - v).norm() <= LIMIT_TOL))
        {
            PointClass::Regular { value: value.unwrap() }
        } else {
            let first = limits[0];
            match first {
                Some(v) if limits.iter().all(|l| matches!(l, Some(w) if (w - v).norm() <= LIMIT_TOL)) => {
                    PointClass::Extendable { extension: v }
                }
                _ => PointClass::Singular,
            }
        };
        points.push((p, class));
    }
    Ok(LambdaClassification {
        spec: spec.clone(),
        points,
        cells,
    })
}

/// Regularity statements about `T_Λ` and its adjoint read off the
/// classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SymbolicVerdict {
    /// `T_Λ` regular iff the singular support equals its interior.
    pub regular: bool,
    /// `T_Λ` selfadjoint iff the singular support has no interior and no
    /// extendable boundary points.
    pub selfadjoint: bool,
    /// `T_Λ` selfadjoint and regular iff `Λ` is continuous.
    pub selfadjoint_regular: bool,
    /// `T_Λ*` selfadjoint and regular iff the singular support consists of
    /// extendable points only.
    pub adjoint_selfadjoint_regular: bool,
}

pub fn classify_t_lambda(c: &LambdaClassification) -> SymbolicVerdict {
    let no_interior = c.interior_empty();
    SymbolicVerdict {
        regular: c.boundary().is_empty(),
        selfadjoint: no_interior && c.reg_inf().is_empty(),
        selfadjoint_regular: c.ssupp_empty(),
        adjoint_selfadjoint_regular: no_interior && c.ssupp_r().is_empty(),
    }
}
