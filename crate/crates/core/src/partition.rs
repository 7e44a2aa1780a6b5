//! Proper partitions of ℝⁿ given by sign constraints on C¹ scalar fields.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::{Matrix, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("no region contains x = {0:?} (covering violated beyond tolerance)")]
    NoRegionContains(Vec<f64>),
    #[error("no crossing between regions {i} and {j} found after {draws} segment draws")]
    NoCrossingFound { i: usize, j: usize, draws: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("quadratic form is not symmetric (residual {0:e})")]
    NotSymmetric(f64),
    #[error("invalid partition: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, PartitionError>;

pub type FieldFn = Arc<dyn Fn(&Vector) -> (f64, Vector) + Send + Sync>;

/// A C¹ scalar field q with analytic gradient.
#[derive(Clone)]
pub enum ScalarField {
    /// q(x) = vᵀx
    Linear { v: Vector },
    /// q(x) = xᵀQx
    Quadratic { q: Matrix },
    /// Arbitrary field returning `(q(x), ∇q(x))`.
    Callback { dim: usize, f: FieldFn },
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear { v } => f.debug_struct("Linear").field("v", &v.as_slice()).finish(),
            Self::Quadratic { q } => f.debug_struct("Quadratic").field("q", q).finish(),
            Self::Callback { dim, .. } => f.debug_struct("Callback").field("dim", dim).finish_non_exhaustive(),
        }
    }
}

pub(crate) fn symmetry_residual(m: &Matrix) -> f64 {
    (m - m.transpose()).abs().max()
}

impl ScalarField {
    pub fn linear(v: Vector) -> Self {
        Self::Linear { v }
    }

    pub fn quadratic(q: Matrix) -> Result<Self> {
        if !q.is_square() {
            return Err(PartitionError::Invalid("quadratic form must be square".into()));
        }
        let r = symmetry_residual(&q);
        if r > 1e-12 {
            return Err(PartitionError::NotSymmetric(r));
        }
        Ok(Self::Quadratic { q })
    }

    pub fn callback(dim: usize, f: impl Fn(&Vector) -> (f64, Vector) + Send + Sync + 'static) -> Self {
        Self::Callback { dim, f: Arc::new(f) }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Linear { v } => v.len(),
            Self::Quadratic { q } => q.nrows(),
            Self::Callback { dim, .. } => *dim,
        }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        match self {
            Self::Linear { v } => v.dot(x),
            Self::Quadratic { q } => x.dot(&(q * x)),
            Self::Callback { f, .. } => f(x).0,
        }
    }

    pub fn value_and_gradient(&self, x: &Vector) -> (f64, Vector) {
        match self {
            Self::Linear { v } => (v.dot(x), v.clone()),
            Self::Quadratic { q } => {
                let qx = q * x;
                (x.dot(&qx), 2.0 * qx)
            }
            Self::Callback { f, .. } => f(x),
        }
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        self.value_and_gradient(x).1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    /// q(x) ≥ 0
    Ge,
    /// q(x) ≤ 0
    Le,
}

impl Sign {
    /// +1 for `Ge`, −1 for `Le`: the constraint reads `sign·q(x) ≥ 0`.
    pub fn factor(self) -> f64 {
        match self {
            Sign::Ge => 1.0,
            Sign::Le => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Constraint {
    pub field: usize,
    pub sign: Sign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub label: String,
    pub constraints: Vec<Constraint>,
}

/// Closed regions, each a conjunction of sign constraints over a shared
/// field list. Region indices are 0-based positions in `regions`.
#[derive(Debug, Clone)]
pub struct ProperPartition {
    dim: usize,
    fields: Vec<ScalarField>,
    regions: Vec<Region>,
}

/// Active region indices at a point (sorted, nonempty).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSet {
    pub indices: Vec<usize>,
    pub on_boundary: bool,
}

impl ActiveSet {
    pub fn is_singleton(&self) -> bool {
        self.indices.len() == 1
    }
}

/// Axis-aligned sampling box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxBounds {
    pub fn symmetric(dim: usize, r: f64) -> Self {
        Self { lo: vec![-r; dim], hi: vec![r; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vector {
        Vector::from_iterator(self.dim(), self.lo.iter().zip(&self.hi).map(|(&a, &b)| rng.gen_range(a..=b)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionReport {
    pub pass: bool,
    pub n: usize,
    pub covering_failures: Vec<Vec<f64>>,
    pub overlap_failures: Vec<(Vec<f64>, Vec<usize>)>,
}

/// Bisection target for surface points.
pub const SURFACE_TOL: f64 = 1e-10;
const INTERIOR_TOL: f64 = 1e-9;

impl ProperPartition {
    pub fn new(dim: usize, fields: Vec<ScalarField>, regions: Vec<Region>) -> Result<Self> {
        if regions.is_empty() {
            return Err(PartitionError::Invalid("at least one region required".into()));
        }
        for f in &fields {
            if f.dim() != dim {
                return Err(PartitionError::DimensionMismatch { expected: dim, got: f.dim() });
            }
        }
        let mut labels: Vec<&str> = regions.iter().map(|r| r.label.as_str()).collect();
        labels.sort_unstable();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(PartitionError::Invalid(format!("duplicated region label {:?}", w[0])));
        }
        for r in &regions {
            if let Some(c) = r.constraints.iter().find(|c| c.field >= fields.len()) {
                return Err(PartitionError::Invalid(format!(
                    "region {:?} references field {} of {}",
                    r.label,
                    c.field,
                    fields.len()
                )));
            }
        }
        Ok(Self { dim, fields, regions })
    }

    /// Two regions `{q ≥ 0}` (index 0) and `{q ≤ 0}` (index 1).
    pub fn split(field: ScalarField) -> Result<Self> {
        let dim = field.dim();
        Self::new(
            dim,
            vec![field],
            vec![
                Region { label: "1".into(), constraints: vec![Constraint { field: 0, sign: Sign::Ge }] },
                Region { label: "2".into(), constraints: vec![Constraint { field: 0, sign: Sign::Le }] },
            ],
        )
    }

    /// Single region covering ℝⁿ.
    pub fn whole(dim: usize) -> Self {
        Self { dim, fields: vec![], regions: vec![Region { label: "1".into(), constraints: vec![] }] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fields(&self) -> &[ScalarField] {
        &self.fields
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Smallest signed constraint value `sign·q(x)` of region `i` (+∞ when unconstrained).
    pub fn region_margin(&self, i: usize, x: &Vector) -> f64 {
        self.regions[i]
            .constraints
            .iter()
            .map(|c| c.sign.factor() * self.fields[c.field].value(x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, i: usize, x: &Vector, tol: f64) -> bool {
        self.region_margin(i, x) >= -tol
    }

    fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim {
            return Err(PartitionError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    /// Regions containing `x` with every constraint satisfied to slack `tol`.
    pub fn active_indices(&self, x: &Vector, tol: f64) -> Result<ActiveSet> {
        self.check_dim(x)?;
        let values: Vec<f64> = self.fields.iter().map(|f| f.value(x)).collect();
        let mut indices = Vec::new();
        let mut near = false;
        for (i, r) in self.regions.iter().enumerate() {
            let mut ok = true;
            for c in &r.constraints {
                let v = c.sign.factor() * values[c.field];
                if v < -tol {
                    ok = false;
                    break;
                }
            }
            if ok {
                indices.push(i);
                near |= r.constraints.iter().any(|c| values[c.field].abs() <= tol);
            }
        }
        if indices.is_empty() {
            return Err(PartitionError::NoRegionContains(x.as_slice().to_vec()));
        }
        let on_boundary = indices.len() >= 2 || near;
        Ok(ActiveSet { indices, on_boundary })
    }

    /// Fields whose sign separates regions `i` and `j`.
    pub fn shared_fields(&self, i: usize, j: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for a in &self.regions[i].constraints {
            for b in &self.regions[j].constraints {
                if a.field == b.field && a.sign != b.sign && !out.contains(&a.field) {
                    out.push(a.field);
                }
            }
        }
        out
    }

    /// Points on the common boundary of regions `i` and `j`, found by bisecting
    /// random segments whose endpoints lie strictly inside each region.
    pub fn surface_sample(&self, i: usize, j: usize, n: usize, bounds: &BoxBounds, seed: u64) -> Result<Vec<Vector>> {
        if i == j || i >= self.len() || j >= self.len() {
            return Err(PartitionError::Invalid(format!("bad region pair ({i}, {j})")));
        }
        if bounds.dim() != self.dim {
            return Err(PartitionError::DimensionMismatch { expected: self.dim, got: bounds.dim() });
        }
        if n == 0 {
            return Ok(vec![]);
        }
        let shared = self.shared_fields(i, j);
        if shared.is_empty() {
            return Err(PartitionError::Invalid(format!("regions {i} and {j} share no constraint field")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let max_draws = 1000 * n.max(10);
        let draw_inside = |rng: &mut ChaCha8Rng, k: usize| -> Option<Vector> {
            for _ in 0..1000 {
                let x = bounds.sample(rng);
                if self.region_margin(k, &x) > INTERIOR_TOL && self.active_indices(&x, 0.0).map_or(false, |a| a.is_singleton()) {
                    return Some(x);
                }
            }
            None
        };
        let mut out = Vec::with_capacity(n);
        let mut draws = 0;
        while out.len() < n {
            draws += 1;
            if draws > max_draws {
                return Err(PartitionError::NoCrossingFound { i, j, draws: draws - 1 });
            }
            let (Some(a), Some(b)) = (draw_inside(&mut rng, i), draw_inside(&mut rng, j)) else {
                return Err(PartitionError::NoCrossingFound { i, j, draws });
            };
            // Bisect on "inside region i" along the segment; the transition point
            // lies on ∂X_i. Accept only if it also belongs to region j.
            let mut lo = 0.0f64;
            let mut hi = 1.0f64;
            let at = |t: f64| &a + (&b - &a) * t;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if self.region_margin(i, &at(mid)) >= 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-16 {
                    break;
                }
            }
            let x = if shared_residual(self, &shared, &at(lo)) <= shared_residual(self, &shared, &at(hi)) {
                at(lo)
            } else {
                at(hi)
            };
            if shared_residual(self, &shared, &x) > SURFACE_TOL {
                continue;
            }
            match self.active_indices(&x, 1e-8) {
                Ok(act) if act.indices.contains(&i) && act.indices.contains(&j) => out.push(x),
                _ => continue,
            }
        }
        Ok(out)
    }

    /// Statistical check of covering and interior disjointness.
    pub fn validate(&self, n: usize, bounds: &BoxBounds, seed: u64) -> PartitionReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut covering_failures = Vec::new();
        let mut overlap_failures = Vec::new();
        for _ in 0..n {
            let x = bounds.sample(&mut rng);
            let inside: Vec<usize> =
                (0..self.len()).filter(|&i| self.region_margin(i, &x) >= -INTERIOR_TOL).collect();
            if inside.is_empty() {
                covering_failures.push(x.as_slice().to_vec());
                continue;
            }
            let strict: Vec<usize> = (0..self.len()).filter(|&i| self.region_margin(i, &x) > INTERIOR_TOL).collect();
            if strict.len() >= 2 {
                overlap_failures.push((x.as_slice().to_vec(), strict));
            }
        }
        PartitionReport {
            pass: covering_failures.is_empty() && overlap_failures.is_empty(),
            n,
            covering_failures,
            overlap_failures,
        }
    }
}

fn shared_residual(p: &ProperPartition, shared: &[usize], x: &Vector) -> f64 {
    shared.iter().map(|&k| p.fields[k].value(x).abs()).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn flower() -> ProperPartition {
        let q = Matrix::from_diagonal(&dvector![-1.0, 1.0]);
        ProperPartition::split(ScalarField::quadratic(q).unwrap()).unwrap()
    }

    #[test]
    fn active_index_examples() {
        let p = flower();
        let a = p.active_indices(&dvector![1.0, 0.0], 1e-9).unwrap();
        assert_eq!(a.indices, vec![1]);
        assert!(!a.on_boundary);
        let a = p.active_indices(&dvector![1.0, 1.0], 1e-9).unwrap();
        assert_eq!(a.indices, vec![0, 1]);
        assert!(a.on_boundary);
        let a = p.active_indices(&dvector![1.0, 1.0 + 1e-12], 1e-9).unwrap();
        assert_eq!(a.indices, vec![0, 1]);
    }

    #[test]
    fn no_region_contains_gap() {
        let f = ScalarField::linear(dvector![1.0]);
        let shifted = ScalarField::callback(1, |x: &Vector| (x[0] - 1.0, dvector![1.0]));
        let p = ProperPartition::new(
            1,
            vec![shifted, f],
            vec![
                Region { label: "a".into(), constraints: vec![Constraint { field: 0, sign: Sign::Ge }] },
                Region { label: "b".into(), constraints: vec![Constraint { field: 1, sign: Sign::Le }] },
            ],
        )
        .unwrap();
        assert!(matches!(p.active_indices(&dvector![0.5], 1e-9), Err(PartitionError::NoRegionContains(_))));
        let rep = p.validate(1000, &BoxBounds::symmetric(1, 2.0), 3);
        assert!(!rep.pass && !rep.covering_failures.is_empty() && rep.overlap_failures.is_empty());
    }

    #[test]
    fn duplicated_regions_overlap() {
        let f = ScalarField::linear(dvector![1.0, 0.0]);
        let c = vec![Constraint { field: 0, sign: Sign::Ge }];
        let p = ProperPartition::new(
            2,
            vec![f],
            vec![
                Region { label: "a".into(), constraints: c.clone() },
                Region { label: "b".into(), constraints: c },
            ],
        )
        .unwrap();
        let rep = p.validate(1000, &BoxBounds::symmetric(2, 1.0), 1);
        assert!(!rep.overlap_failures.is_empty());
    }

    #[test]
    fn duplicated_label_rejected() {
        let f = ScalarField::linear(dvector![1.0]);
        let r = |s| Region { label: "x".into(), constraints: vec![Constraint { field: 0, sign: s }] };
        assert!(matches!(
            ProperPartition::new(1, vec![f], vec![r(Sign::Ge), r(Sign::Le)]),
            Err(PartitionError::Invalid(_))
        ));
    }

    #[test]
    fn flower_validates_and_samples_surface() {
        let p = flower();
        assert!(p.validate(10_000, &BoxBounds::symmetric(2, 2.0), 11).pass);
        let pts = p.surface_sample(0, 1, 200, &BoxBounds::symmetric(2, 2.0), 5).unwrap();
        assert_eq!(pts.len(), 200);
        for x in &pts {
            assert!((x[1] * x[1] - x[0] * x[0]).abs() <= SURFACE_TOL);
            assert!(p.active_indices(x, 1e-8).unwrap().indices.len() >= 2);
        }
        assert!(p.surface_sample(0, 1, 0, &BoxBounds::symmetric(2, 2.0), 5).unwrap().is_empty());
        let again = p.surface_sample(0, 1, 200, &BoxBounds::symmetric(2, 2.0), 5).unwrap();
        assert_eq!(pts, again);
    }

    #[test]
    fn halfspace_surface() {
        let p = ProperPartition::split(ScalarField::linear(dvector![1.0, -2.0, 0.5])).unwrap();
        for x in p.surface_sample(1, 0, 50, &BoxBounds::symmetric(3, 1.0), 2).unwrap() {
            assert!((x[0] - 2.0 * x[1] + 0.5 * x[2]).abs() <= SURFACE_TOL);
        }
    }

    #[test]
    fn interior_points_single_index() {
        let p = flower();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = BoxBounds::symmetric(2, 3.0);
        for _ in 0..1000 {
            let x = b.sample(&mut rng);
            if p.fields()[0].value(&x).abs() > 1e-9 {
                assert!(p.active_indices(&x, 0.0).unwrap().is_singleton());
            }
        }
    }

    #[test]
    fn asymmetric_quadratic_rejected() {
        let q = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(ScalarField::quadratic(q), Err(PartitionError::NotSymmetric(_))));
    }
}
