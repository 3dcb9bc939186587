//! Convex bodies behind a membership oracle, and chord computation.
//!
//! Every body carries its dimension, a declared radius bound `R` with
//! `‖x‖ ≤ R` for all `x ∈ K`, and an interior point. Boxes, balls and
//! H-polytopes intersect lines analytically; user oracles fall back to
//! bisection on membership queries.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Relative tolerance of bisected chord endpoints.
pub const TOL_CHORD: f64 = 1e-9;

/// Directions shorter than this are rejected by [`ConvexBody::chord`].
pub const DIRECTION_NORM_FLOOR: f64 = 1e-14;

/// Membership calls allowed per bisected endpoint: `2⌈log₂(1/tol)⌉ + 4`.
pub fn bisection_budget() -> u32 {
    2 * (1.0 / TOL_CHORD).log2().ceil() as u32 + 4
}

pub type MembershipFn = Arc<dyn Fn(&DVector<f64>) -> bool + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BodyKind {
    Box,
    Ball,
    Simplex,
    HPolytope,
    Oracle,
}

impl fmt::Display for BodyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BodyKind::Box => "box",
            BodyKind::Ball => "ball",
            BodyKind::Simplex => "simplex",
            BodyKind::HPolytope => "hpolytope",
            BodyKind::Oracle => "oracle",
        };
        f.write_str(s)
    }
}

#[derive(Clone)]
enum Geometry {
    Box { lo: DVector<f64>, hi: DVector<f64> },
    Ball { center: DVector<f64>, radius: f64 },
    Halfspaces { a: DMatrix<f64>, b: DVector<f64> },
    Oracle(MembershipFn),
}

/// A bounded convex body with nonempty interior. Immutable once built.
#[derive(Clone)]
pub struct ConvexBody {
    kind: BodyKind,
    n: usize,
    geometry: Geometry,
    radius_bound: f64,
    interior_point: DVector<f64>,
    nu: Option<f64>,
}

impl fmt::Debug for ConvexBody {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConvexBody")
            .field("kind", &self.kind)
            .field("n", &self.n)
            .field("radius_bound", &self.radius_bound)
            .field("interior_point", &self.interior_point.as_slice())
            .finish()
    }
}

/// The segment `{x + ρu : ρ ∈ [rho_lo, rho_hi]}` of a line inside a body.
#[derive(Debug, Clone)]
pub struct Chord {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub rho_lo: f64,
    pub rho_hi: f64,
    /// Membership queries spent locating the endpoints (zero when analytic).
    pub oracle_calls: u32,
}

impl Chord {
    pub fn point_at(&self, rho: f64) -> DVector<f64> {
        &self.x + &self.u * rho
    }

    pub fn length(&self) -> f64 {
        self.rho_hi - self.rho_lo
    }
}

/// On-disk H-polytope description `{x : A x ≤ b}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HPolytopeFile {
    pub n: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, rename = "R", skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

impl HPolytopeFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Builds the body. Missing `x0`/`R` are filled from the vertex set,
    /// which is only enumerated for small problems.
    pub fn into_body(self) -> Result<ConvexBody> {
        let m = self.a.len();
        if m != self.b.len() {
            return Err(Error::InvalidInput(format!(
                "A has {m} rows but b has {} entries",
                self.b.len()
            )));
        }
        let mut flat = Vec::with_capacity(m * self.n);
        for row in &self.a {
            check_dim(self.n, row.len())?;
            flat.extend_from_slice(row);
        }
        let a = DMatrix::from_row_slice(m, self.n, &flat);
        let b = DVector::from_vec(self.b);
        let (x0, r) = match (self.x0, self.r) {
            (Some(x0), Some(r)) => (DVector::from_vec(x0), r),
            (x0, r) => {
                if binomial(m, self.n) > 2_000_000 {
                    return Err(Error::InvalidInput(
                        "x0 and R must be given for large polytopes".into(),
                    ));
                }
                let verts = polytope_vertices(&a, &b);
                if verts.len() <= self.n {
                    return Err(Error::InvalidInput(
                        "polytope is empty, unbounded or flat".into(),
                    ));
                }
                let x0 = match x0 {
                    Some(x0) => DVector::from_vec(x0),
                    None => {
                        verts.iter().fold(DVector::zeros(self.n), |acc, v| acc + v)
                            / verts.len() as f64
                    }
                };
                let r = r.unwrap_or_else(|| {
                    verts.iter().map(|v| v.norm()).fold(0.0, f64::max)
                });
                (x0, r)
            }
        };
        ConvexBody::hpolytope(a, b, x0, r)
    }
}

/// Serializable description of a body, as used by configs and fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BodySpec {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Simplex { n: usize },
    Hpoly { file: PathBuf },
}

impl BodySpec {
    pub fn build(&self) -> Result<ConvexBody> {
        match self {
            BodySpec::Box { lo, hi } => ConvexBody::new_box(lo.clone(), hi.clone()),
            BodySpec::Ball { center, radius } => ConvexBody::ball(center.clone(), *radius),
            BodySpec::Simplex { n } => ConvexBody::simplex(*n),
            BodySpec::Hpoly { file } => HPolytopeFile::load(file)?.into_body(),
        }
    }
}

impl ConvexBody {
    /// Axis-aligned box `∏ [lo_i, hi_i]`.
    pub fn new_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let n = lo.len();
        check_dim(n, hi.len())?;
        if n == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::InvalidInput("box needs finite lo < hi on every axis".into()));
        }
        let lo = DVector::from_vec(lo);
        let hi = DVector::from_vec(hi);
        let radius = lo
            .iter()
            .zip(hi.iter())
            .map(|(l, h)| l.abs().max(h.abs()).powi(2))
            .sum::<f64>()
            .sqrt();
        let center = (&lo + &hi) * 0.5;
        Ok(Self {
            kind: BodyKind::Box,
            n,
            geometry: Geometry::Box { lo, hi },
            radius_bound: radius,
            interior_point: center,
            nu: None,
        })
    }

    /// The cube `[lo, hi]^n`.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new_box(vec![lo; n], vec![hi; n])
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let n = center.len();
        if n == 0 || !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidInput("ball needs n > 0 and radius > 0".into()));
        }
        let center = DVector::from_vec(center);
        Ok(Self {
            kind: BodyKind::Ball,
            n,
            radius_bound: center.norm() + radius,
            interior_point: center.clone(),
            geometry: Geometry::Ball { center, radius },
            nu: None,
        })
    }

    pub fn unit_ball(n: usize) -> Result<Self> {
        Self::ball(vec![0.0; n], 1.0)
    }

    /// Standard simplex `{x ≥ 0, Σx ≤ 1}`.
    pub fn simplex(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        let mut a = DMatrix::zeros(n + 1, n);
        let mut b = DVector::zeros(n + 1);
        for i in 0..n {
            a[(i, i)] = -1.0;
            a[(n, i)] = 1.0;
        }
        b[n] = 1.0;
        let x0 = DVector::from_element(n, 1.0 / (n as f64 + 1.0));
        let mut body = Self::hpolytope(a, b, x0, 1.0)?;
        body.kind = BodyKind::Simplex;
        Ok(body)
    }

    /// H-polytope `{x : A x ≤ b}` with declared interior point and radius bound.
    pub fn hpolytope(
        a: DMatrix<f64>,
        b: DVector<f64>,
        interior_point: DVector<f64>,
        radius_bound: f64,
    ) -> Result<Self> {
        let n = a.ncols();
        if n == 0 || a.nrows() == 0 {
            return Err(Error::InvalidInput("polytope needs n > 0 and at least one row".into()));
        }
        check_dim(a.nrows(), b.len())?;
        check_dim(n, interior_point.len())?;
        let body = Self {
            kind: BodyKind::HPolytope,
            n,
            geometry: Geometry::Halfspaces { a, b },
            radius_bound,
            interior_point,
            nu: None,
        };
        body.validate_metadata()?;
        Ok(body)
    }

    /// Body known only through `member`. `n`, `R` and an interior point are
    /// mandatory since chord bracketing depends on them.
    pub fn from_oracle(
        n: usize,
        radius_bound: f64,
        interior_point: Vec<f64>,
        member: MembershipFn,
    ) -> Result<Self> {
        check_dim(n, interior_point.len())?;
        let body = Self {
            kind: BodyKind::Oracle,
            n,
            geometry: Geometry::Oracle(member),
            radius_bound,
            interior_point: DVector::from_vec(interior_point),
            nu: None,
        };
        body.validate_metadata()?;
        Ok(body)
    }

    fn validate_metadata(&self) -> Result<()> {
        if !(self.radius_bound > 0.0) || !self.radius_bound.is_finite() {
            return Err(Error::InvalidInput("radius bound must be positive".into()));
        }
        if !self.contains_raw(&self.interior_point) {
            return Err(Error::InvalidInput("declared interior point is outside the body".into()));
        }
        Ok(())
    }

    /// Overrides the entropic barrier parameter used by schedules.
    pub fn with_nu(mut self, nu: f64) -> Result<Self> {
        if !(nu >= 1.0) || !nu.is_finite() {
            return Err(Error::InvalidInput(format!("barrier parameter must be >= 1, got {nu}")));
        }
        self.nu = Some(nu);
        Ok(self)
    }

    /// Declared override of the entropic barrier parameter, if any.
    pub fn nu_override(&self) -> Option<f64> {
        self.nu
    }

    /// Barrier parameter used by the entropic schedule: the override, else `n`.
    pub fn entropic_nu(&self) -> f64 {
        self.nu.unwrap_or(self.n as f64)
    }

    pub fn kind(&self) -> BodyKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn radius_bound(&self) -> f64 {
        self.radius_bound
    }

    pub fn interior_point(&self) -> &DVector<f64> {
        &self.interior_point
    }

    /// `(A, b)` for simplex and H-polytope bodies.
    pub fn halfspaces(&self) -> Option<(&DMatrix<f64>, &DVector<f64>)> {
        match &self.geometry {
            Geometry::Halfspaces { a, b } => Some((a, b)),
            _ => None,
        }
    }

    pub fn box_bounds(&self) -> Option<(&DVector<f64>, &DVector<f64>)> {
        match &self.geometry {
            Geometry::Box { lo, hi } => Some((lo, hi)),
            _ => None,
        }
    }

    pub fn ball_geometry(&self) -> Option<(&DVector<f64>, f64)> {
        match &self.geometry {
            Geometry::Ball { center, radius } => Some((center, *radius)),
            _ => None,
        }
    }

    /// The same set written as `{A x ≤ b}`, for boxes and polytopes.
    pub fn to_hpolytope(&self) -> Option<ConvexBody> {
        match &self.geometry {
            Geometry::Box { lo, hi } => {
                let n = self.n;
                let mut a = DMatrix::zeros(2 * n, n);
                let mut b = DVector::zeros(2 * n);
                for i in 0..n {
                    a[(2 * i, i)] = -1.0;
                    b[2 * i] = -lo[i];
                    a[(2 * i + 1, i)] = 1.0;
                    b[2 * i + 1] = hi[i];
                }
                let mut body = ConvexBody::hpolytope(
                    a,
                    b,
                    self.interior_point.clone(),
                    self.radius_bound,
                )
                .ok()?;
                body.nu = self.nu;
                Some(body)
            }
            Geometry::Halfspaces { a, b } => {
                let mut body = ConvexBody::hpolytope(
                    a.clone(),
                    b.clone(),
                    self.interior_point.clone(),
                    self.radius_bound,
                )
                .ok()?;
                body.nu = self.nu;
                Some(body)
            }
            _ => None,
        }
    }

    /// Restriction `K ∩ {x_axis ≤ level}`. Supported for boxes and polytopes.
    ///
    /// The interior point is kept only when it still lies inside; otherwise
    /// a point on the cut segment is substituted, which is fine for quadrature
    /// but not a strict interior point.
    pub fn truncate_axis(&self, axis: usize, level: f64) -> Result<ConvexBody> {
        if axis >= self.n {
            return Err(Error::InvalidInput(format!("axis {axis} out of range")));
        }
        match &self.geometry {
            Geometry::Box { lo, hi } => {
                let mut hi = hi.clone();
                if level <= lo[axis] {
                    return Err(Error::InvalidInput("truncation leaves an empty body".into()));
                }
                hi[axis] = hi[axis].min(level);
                ConvexBody::new_box(lo.as_slice().to_vec(), hi.as_slice().to_vec())
            }
            Geometry::Halfspaces { a, b } => {
                let m = a.nrows();
                let mut a2 = a.clone().insert_row(m, 0.0);
                a2[(m, axis)] = 1.0;
                let b2 = b.clone().insert_row(m, level);
                let mut x0 = self.interior_point.clone();
                if x0[axis] > level {
                    x0[axis] = level;
                }
                Ok(ConvexBody {
                    kind: BodyKind::HPolytope,
                    n: self.n,
                    geometry: Geometry::Halfspaces { a: a2, b: b2 },
                    radius_bound: self.radius_bound,
                    interior_point: x0,
                    nu: self.nu,
                })
            }
            _ => Err(Error::Unsupported(format!(
                "axis truncation of a {} body",
                self.kind
            ))),
        }
    }

    /// Membership query.
    pub fn contains(&self, x: &DVector<f64>) -> Result<bool> {
        check_dim(self.n, x.len())?;
        Ok(self.contains_raw(x))
    }

    pub(crate) fn contains_raw(&self, x: &DVector<f64>) -> bool {
        match &self.geometry {
            Geometry::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .all(|(v, (l, h))| *l <= *v && *v <= *h),
            Geometry::Ball { center, radius } => (x - center).norm() <= *radius,
            Geometry::Halfspaces { a, b } => {
                (0..a.nrows()).all(|i| a.row(i).dot(&x.transpose()) <= b[i])
            }
            Geometry::Oracle(f) => f(x),
        }
    }

    /// Euclidean distance from `x` to the boundary, for analytic bodies.
    /// Negative outside. `None` for oracle bodies.
    pub fn boundary_distance(&self, x: &DVector<f64>) -> Option<f64> {
        match &self.geometry {
            Geometry::Box { lo, hi } => Some(
                x.iter()
                    .zip(lo.iter().zip(hi.iter()))
                    .map(|(v, (l, h))| (v - l).min(h - v))
                    .fold(f64::INFINITY, f64::min),
            ),
            Geometry::Ball { center, radius } => Some(radius - (x - center).norm()),
            Geometry::Halfspaces { a, b } => Some(
                (0..a.nrows())
                    .map(|i| {
                        let row = a.row(i);
                        (b[i] - row.dot(&x.transpose())) / row.norm()
                    })
                    .fold(f64::INFINITY, f64::min),
            ),
            Geometry::Oracle(_) => None,
        }
    }

    /// Upper bound on the diameter: `2R`.
    pub fn estimate_diameter(&self) -> f64 {
        2.0 * self.radius_bound
    }

    /// Intersection of the line through `x` along `u` with the body.
    pub fn chord(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<Chord> {
        self.check_chord_inputs(x, u)?;
        let (rho_lo, rho_hi) = match &self.geometry {
            Geometry::Box { lo, hi } => {
                let mut rlo = f64::NEG_INFINITY;
                let mut rhi = f64::INFINITY;
                for i in 0..self.n {
                    if u[i] != 0.0 {
                        let t1 = (lo[i] - x[i]) / u[i];
                        let t2 = (hi[i] - x[i]) / u[i];
                        rlo = rlo.max(t1.min(t2));
                        rhi = rhi.min(t1.max(t2));
                    }
                }
                (rlo, rhi)
            }
            Geometry::Ball { center, radius } => {
                let d = x - center;
                let qa = u.norm_squared();
                let qb = 2.0 * u.dot(&d);
                let qc = d.norm_squared() - radius * radius;
                let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
                // Stable pairing of the two roots.
                let sign = if qb >= 0.0 { 1.0 } else { -1.0 };
                let q = -0.5 * (qb + sign * disc);
                let (r1, r2) = if q != 0.0 { (q / qa, qc / q) } else { (0.0, 0.0) };
                (r1.min(r2), r1.max(r2))
            }
            Geometry::Halfspaces { a, b } => {
                let mut rlo = f64::NEG_INFINITY;
                let mut rhi = f64::INFINITY;
                for i in 0..a.nrows() {
                    let row = a.row(i);
                    let slack = (b[i] - row.dot(&x.transpose())).max(0.0);
                    let rate = row.dot(&u.transpose());
                    if rate > 0.0 {
                        rhi = rhi.min(slack / rate);
                    } else if rate < 0.0 {
                        rlo = rlo.max(slack / rate);
                    }
                }
                (rlo, rhi)
            }
            Geometry::Oracle(_) => return self.bisect_chord(x, u),
        };
        if !rho_lo.is_finite() || !rho_hi.is_finite() {
            return Err(Error::Numerical("line does not leave the body; is it bounded?".into()));
        }
        Ok(Chord {
            x: x.clone(),
            u: u.clone(),
            rho_lo,
            rho_hi,
            oracle_calls: 0,
        })
    }

    /// Chord located purely through membership queries, for any body kind.
    pub fn chord_bisect(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<Chord> {
        self.check_chord_inputs(x, u)?;
        self.bisect_chord(x, u)
    }

    fn check_chord_inputs(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
        check_dim(self.n, x.len())?;
        check_dim(self.n, u.len())?;
        let un = u.norm();
        if !(un >= DIRECTION_NORM_FLOOR) || !un.is_finite() {
            return Err(Error::InvalidInput(format!("degenerate direction (norm {un:e})")));
        }
        if !self.contains_raw(x) {
            return Err(Error::Precondition("chord base point is not in the body".into()));
        }
        Ok(())
    }

    fn bisect_chord(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<Chord> {
        let budget = bisection_budget();
        let un = u.norm();
        let bracket = (self.radius_bound + x.norm()) / un;
        let neg_u = -u;
        let mut fwd = Bisection::start(self, x, u, bracket)?;
        let mut bwd = Bisection::start(self, x, &neg_u, bracket)?;
        // Phase one: tolerance relative to the bracket.
        fwd.refine(self, x, u, TOL_CHORD * fwd.bracket, budget);
        bwd.refine(self, x, &neg_u, TOL_CHORD * bwd.bracket, budget);
        // Phase two: tolerance relative to the chord itself.
        let length = fwd.inside + bwd.inside;
        if length > 0.0 {
            fwd.refine(self, x, u, TOL_CHORD * length, budget);
            bwd.refine(self, x, &neg_u, TOL_CHORD * length, budget);
        }
        Ok(Chord {
            x: x.clone(),
            u: u.clone(),
            rho_lo: -bwd.inside,
            rho_hi: fwd.inside,
            oracle_calls: fwd.calls + bwd.calls,
        })
    }
}

struct Bisection {
    inside: f64,
    outside: f64,
    bracket: f64,
    calls: u32,
}

impl Bisection {
    fn start(body: &ConvexBody, x: &DVector<f64>, u: &DVector<f64>, bracket: f64) -> Result<Self> {
        let mut outside = bracket;
        let mut calls = 1;
        let mut doublings = 0;
        while body.contains_raw(&(x + u * outside)) {
            doublings += 1;
            if doublings > 8 {
                return Err(Error::InvalidInput(
                    "declared radius bound is far too small for this body".into(),
                ));
            }
            outside *= 2.0;
            calls += 1;
        }
        Ok(Self {
            inside: 0.0,
            outside,
            bracket: outside,
            calls,
        })
    }

    fn refine(&mut self, body: &ConvexBody, x: &DVector<f64>, u: &DVector<f64>, width: f64, budget: u32) {
        while self.outside - self.inside > width && self.calls < budget {
            let mid = 0.5 * (self.inside + self.outside);
            self.calls += 1;
            if body.contains_raw(&(x + u * mid)) {
                self.inside = mid;
            } else {
                self.outside = mid;
            }
        }
    }
}

pub(crate) fn binomial(m: usize, k: usize) -> u128 {
    if k > m {
        return 0;
    }
    let k = k.min(m - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (m - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Vertices of `{x : A x ≤ b}` by brute force over `n`-subsets of rows.
/// Intended for small problems (quadrature in ≤ 3 dimensions, file loading).
pub fn polytope_vertices(a: &DMatrix<f64>, b: &DVector<f64>) -> Vec<DVector<f64>> {
    let (m, n) = a.shape();
    let mut out: Vec<DVector<f64>> = Vec::new();
    if n == 0 || m < n {
        return out;
    }
    let scale = b.amax().max(1.0);
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let rows: Vec<_> = idx.iter().map(|&i| a.row(i)).collect();
        let sub = DMatrix::from_rows(&rows);
        let rhs = DVector::from_iterator(n, idx.iter().map(|&i| b[i]));
        let lu = sub.lu();
        if lu.determinant().abs() > 1e-12 {
            if let Some(v) = lu.solve(&rhs) {
                let feasible = (0..m).all(|i| a.row(i).dot(&v.transpose()) <= b[i] + 1e-10 * scale);
                if feasible && !out.iter().any(|w| (w - &v).amax() <= 1e-10 * scale) {
                    out.push(v);
                }
            }
        }
        // Next combination in lexicographic order.
        let mut k = n;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if idx[k] < m - n + k {
                idx[k] += 1;
                for j in k + 1..n {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}
