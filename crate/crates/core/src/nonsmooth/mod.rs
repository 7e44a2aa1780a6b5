//! Piecewise-C¹ candidate functions, their Clarke gradient hulls, and the
//! Clarke and Lie set-valued derivatives along a Filippov hull.

pub mod lp;

use thiserror::Error;

use crate::partition::{BoxBounds, PartitionError, ProperPartition, ScalarField};
use crate::switched::FilippovHull;
use crate::{Matrix, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NonsmoothError {
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty gradient or hull vertex set")]
    EmptySet,
}

pub type Result<T> = std::result::Result<T, NonsmoothError>;

/// V(x) = V_j(x) on region j of its own partition.
#[derive(Debug, Clone)]
pub struct PiecewiseC1Fn {
    partition: ProperPartition,
    pieces: Vec<ScalarField>,
}

/// Vertices {∇V_j(x) : j active}; their hull is the Clarke gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientHull {
    pub x: Vector,
    pub indices: Vec<usize>,
    pub vertices: Vec<Vector>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivativeInterval {
    Interval { lo: f64, hi: f64 },
    Empty,
}

impl DerivativeInterval {
    /// Upper endpoint with max ∅ = −∞.
    pub fn max(&self) -> f64 {
        match self {
            Self::Interval { hi, .. } => *hi,
            Self::Empty => f64::NEG_INFINITY,
        }
    }

    /// Lower endpoint with min ∅ = +∞.
    pub fn min(&self) -> f64 {
        match self {
            Self::Interval { lo, .. } => *lo,
            Self::Empty => f64::INFINITY,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Self::Empty)
    }
}

/// Relative feasibility tolerance on the normalized equality residuals.
pub const LIE_FEAS_TOL: f64 = 1e-9;
/// Hulls up to this size use exact vertex enumeration; larger ones the LP.
pub const ENUMERATION_MAX: usize = 6;

impl PiecewiseC1Fn {
    pub fn new(partition: ProperPartition, pieces: Vec<ScalarField>) -> Result<Self> {
        if pieces.len() != partition.len() {
            return Err(NonsmoothError::DimensionMismatch(format!(
                "{} pieces for {} regions",
                pieces.len(),
                partition.len()
            )));
        }
        if let Some(p) = pieces.iter().find(|p| p.dim() != partition.dim()) {
            return Err(NonsmoothError::DimensionMismatch(format!(
                "piece of dim {} on a partition of dim {}",
                p.dim(),
                partition.dim()
            )));
        }
        Ok(Self { partition, pieces })
    }

    /// Piecewise quadratic V_j(x) = xᵀP_jx.
    pub fn quadratic(partition: ProperPartition, ps: Vec<Matrix>) -> Result<Self> {
        let pieces = ps.into_iter().map(ScalarField::quadratic).collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(partition, pieces)
    }

    pub fn partition(&self) -> &ProperPartition {
        &self.partition
    }

    pub fn pieces(&self) -> &[ScalarField] {
        &self.pieces
    }

    pub fn dim(&self) -> usize {
        self.partition.dim()
    }

    /// V(x) via the smallest active piece (pieces agree on overlaps).
    pub fn value(&self, x: &Vector) -> Result<f64> {
        let act = self.partition.active_indices(x, 0.0).or_else(|_| self.partition.active_indices(x, 1e-9))?;
        Ok(self.pieces[act.indices[0]].value(x))
    }

    pub fn gradient_hull(&self, x: &Vector, tol: f64) -> Result<GradientHull> {
        let act = self.partition.active_indices(x, tol)?;
        let vertices = act.indices.iter().map(|&j| self.pieces[j].gradient(x)).collect();
        Ok(GradientHull { x: x.clone(), indices: act.indices, vertices })
    }

    /// Clarke interval at the hull's base point.
    pub fn clarke_interval(&self, hull: &FilippovHull, tol: f64) -> Result<DerivativeInterval> {
        self.check_hull(hull)?;
        let g = self.gradient_hull(&hull.x, tol)?;
        clarke_interval_raw(&g.vertices, &hull.vertices)
    }

    /// Lie interval at the hull's base point; gradients active at `tol`.
    pub fn lie_interval(&self, hull: &FilippovHull, tol: f64) -> Result<DerivativeInterval> {
        self.check_hull(hull)?;
        let g = self.gradient_hull(&hull.x, tol)?;
        lie_interval_raw(&g.vertices, &hull.vertices)
    }

    fn check_hull(&self, hull: &FilippovHull) -> Result<()> {
        if hull.x.len() != self.dim() || hull.vertices.iter().any(|v| v.len() != self.dim()) {
            return Err(NonsmoothError::DimensionMismatch("hull dimension differs from V".into()));
        }
        Ok(())
    }

    /// Surface samples for every adjacent region pair of V's partition.
    pub fn adjacent_surface_samples(&self, n: usize, bounds: &BoxBounds, seed: u64) -> Result<Vec<((usize, usize), Vec<Vector>)>> {
        let mut out = Vec::new();
        let k = self.partition.len();
        for i in 0..k {
            for j in i + 1..k {
                if self.partition.shared_fields(i, j).is_empty() {
                    continue;
                }
                let pts = self.partition.surface_sample(i, j, n, bounds, seed ^ ((i as u64) << 32 | j as u64))?;
                out.push(((i, j), pts));
            }
        }
        Ok(out)
    }

    /// Max |V_i − V_j| over surface samples of the given pairs.
    pub fn continuity_check(&self, samples: &[((usize, usize), Vec<Vector>)], tol: f64) -> ContinuityReport {
        let mut worst = 0.0f64;
        let mut witness = None;
        let mut count = 0;
        for ((i, j), pts) in samples {
            for x in pts {
                count += 1;
                let d = (self.pieces[*i].value(x) - self.pieces[*j].value(x)).abs();
                if witness.is_none() || d > worst {
                    worst = d;
                    witness = Some((x.as_slice().to_vec(), *i, *j));
                }
            }
        }
        ContinuityReport {
            pass: worst <= tol,
            worst,
            witness,
            checked: count,
            warning: (count == 0).then(|| "no surface samples: continuity vacuously holds".to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityReport {
    pub pass: bool,
    pub worst: f64,
    pub witness: Option<(Vec<f64>, usize, usize)>,
    pub checked: usize,
    pub warning: Option<String>,
}

fn check_sets(grads: &[Vector], verts: &[Vector]) -> Result<()> {
    if grads.is_empty() || verts.is_empty() {
        return Err(NonsmoothError::EmptySet);
    }
    let n = grads[0].len();
    if grads.iter().chain(verts).any(|v| v.len() != n) {
        return Err(NonsmoothError::DimensionMismatch("gradient and hull vectors differ in length".into()));
    }
    Ok(())
}

/// min/max of ⟨p, f⟩ over vertex pairs (the bilinear form attains its
/// extremes over a product of polytopes at vertices).
pub fn clarke_interval_raw(grads: &[Vector], verts: &[Vector]) -> Result<DerivativeInterval> {
    check_sets(grads, verts)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in grads {
        for f in verts {
            let v = p.dot(f);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    Ok(DerivativeInterval::Interval { lo, hi })
}

/// Exact range of ⟨∇V_{j₀}, f(λ)⟩ over λ in the simplex subject to
/// ⟨∇V_j − ∇V_{j₀}, f(λ)⟩ = 0 for every other gradient, pivot j₀ = first.
pub fn lie_interval_raw(grads: &[Vector], verts: &[Vector]) -> Result<DerivativeInterval> {
    check_sets(grads, verts)?;
    let m = verts.len();
    let obj: Vec<f64> = verts.iter().map(|f| grads[0].dot(f)).collect();
    if grads.len() == 1 {
        let lo = obj.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = obj.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        return Ok(DerivativeInterval::Interval { lo, hi });
    }
    let gmax = grads.iter().map(|g| g.amax()).fold(0.0, f64::max);
    let fmax = verts.iter().map(|f| f.amax()).fold(0.0, f64::max);
    let scale = gmax * fmax;
    if scale == 0.0 {
        return Ok(DerivativeInterval::Interval { lo: 0.0, hi: 0.0 });
    }
    // rows: Σλ = 1, then the normalized equality constraints
    let mut rows: Vec<Vec<f64>> = vec![vec![1.0; m]];
    for g in &grads[1..] {
        let d = g - &grads[0];
        rows.push(verts.iter().map(|f| d.dot(f) / scale).collect());
    }
    if m <= ENUMERATION_MAX {
        Ok(enumerate_vertices(&rows, &obj))
    } else {
        Ok(lp_range(&rows, &obj))
    }
}

/// Tries every support subset: its least-squares solution is a candidate
/// vertex when it satisfies the constraints; every polytope vertex arises
/// from some subset with independent columns.
fn enumerate_vertices(rows: &[Vec<f64>], obj: &[f64]) -> DerivativeInterval {
    let m = obj.len();
    let r = rows.len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut rhs = Vector::zeros(r);
    rhs[0] = 1.0;
    for mask in 1u32..(1u32 << m) {
        let support: Vec<usize> = (0..m).filter(|&k| mask & (1 << k) != 0).collect();
        if support.len() > r {
            // vertices have at most `r` nonzero coordinates
            continue;
        }
        let a = Matrix::from_fn(r, support.len(), |i, j| rows[i][support[j]]);
        let Ok(sol) = a.clone().svd(true, true).solve(&rhs, 1e-13) else { continue };
        if sol.iter().any(|&v| v < -LIE_FEAS_TOL || !v.is_finite()) {
            continue;
        }
        let res = (&a * &sol - &rhs).amax();
        if res > LIE_FEAS_TOL {
            continue;
        }
        let val: f64 = support.iter().zip(sol.iter()).map(|(&k, &l)| obj[k] * l.max(0.0)).sum();
        lo = lo.min(val);
        hi = hi.max(val);
    }
    if lo > hi {
        DerivativeInterval::Empty
    } else {
        DerivativeInterval::Interval { lo, hi }
    }
}

fn lp_range(rows: &[Vec<f64>], obj: &[f64]) -> DerivativeInterval {
    let mut b = vec![0.0; rows.len()];
    b[0] = 1.0;
    let tol = LIE_FEAS_TOL * rows.len() as f64;
    let lo = match lp::solve(obj, rows, &b, tol) {
        lp::LpOutcome::Optimal { value, .. } => value,
        _ => return DerivativeInterval::Empty,
    };
    let neg: Vec<f64> = obj.iter().map(|v| -v).collect();
    let hi = match lp::solve(&neg, rows, &b, tol) {
        lp::LpOutcome::Optimal { value, .. } => -value,
        _ => return DerivativeInterval::Empty,
    };
    DerivativeInterval::Interval { lo, hi }
}

/// Dense LP path regardless of hull size (cross-checks the enumeration).
pub fn lie_interval_lp(grads: &[Vector], verts: &[Vector]) -> Result<DerivativeInterval> {
    check_sets(grads, verts)?;
    if grads.len() == 1 {
        return lie_interval_raw(grads, verts);
    }
    let gmax = grads.iter().map(|g| g.amax()).fold(0.0, f64::max);
    let fmax = verts.iter().map(|f| f.amax()).fold(0.0, f64::max);
    let scale = gmax * fmax;
    if scale == 0.0 {
        return Ok(DerivativeInterval::Interval { lo: 0.0, hi: 0.0 });
    }
    let obj: Vec<f64> = verts.iter().map(|f| grads[0].dot(f)).collect();
    let mut rows: Vec<Vec<f64>> = vec![vec![1.0; verts.len()]];
    for g in &grads[1..] {
        let d = g - &grads[0];
        rows.push(verts.iter().map(|f| d.dot(f) / scale).collect());
    }
    Ok(lp_range(&rows, &obj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::ProperPartition;
    use nalgebra::dvector;

    fn flower_v() -> PiecewiseC1Fn {
        let q = Matrix::from_diagonal(&dvector![-1.0, 1.0]);
        let p = ProperPartition::split(ScalarField::quadratic(q).unwrap()).unwrap();
        PiecewiseC1Fn::quadratic(p, vec![Matrix::from_diagonal(&dvector![5.0, 1.0]), Matrix::from_diagonal(&dvector![1.0, 5.0])])
            .unwrap()
    }

    fn flower_hull(z: Vector) -> FilippovHull {
        let a1 = Matrix::from_row_slice(2, 2, &[-0.1, 1.0, -5.0, -0.1]);
        let a2 = Matrix::from_row_slice(2, 2, &[-0.1, 5.0, -1.0, -0.1]);
        FilippovHull { vertices: vec![&a1 * &z, &a2 * &z], indices: vec![0, 1], x: z, u: dvector![0.0, 0.0] }
    }

    #[test]
    fn gradient_hull_examples() {
        let v = flower_v();
        let g = v.gradient_hull(&dvector![1.0, 1.0], 1e-9).unwrap();
        assert_eq!(g.vertices, vec![dvector![10.0, 2.0], dvector![2.0, 10.0]]);
        let g = v.gradient_hull(&dvector![1.0, 0.0], 1e-9).unwrap();
        assert_eq!(g.vertices, vec![dvector![2.0, 0.0]]);
        let g = v.gradient_hull(&dvector![0.0, 0.0], 1e-9).unwrap();
        assert!(g.vertices.iter().all(|p| p.amax() == 0.0));
    }

    #[test]
    fn flower_clarke_and_lie() {
        let v = flower_v();
        let h = flower_hull(dvector![1.0, 1.0]);
        match v.clarke_interval(&h, 1e-9).unwrap() {
            DerivativeInterval::Interval { lo, hi } => {
                assert!((lo + 49.2).abs() < 1e-12 && (hi - 46.8).abs() < 1e-12);
            }
            e => panic!("{e:?}"),
        }
        assert_eq!(v.lie_interval(&h, 1e-9).unwrap(), DerivativeInterval::Empty);
        assert_eq!(lie_interval_lp(&v.gradient_hull(&h.x, 1e-9).unwrap().vertices, &h.vertices).unwrap(), DerivativeInterval::Empty);
    }

    #[test]
    fn smooth_point_lie_equals_clarke() {
        let g = vec![dvector![1.0, -2.0]];
        let f = vec![dvector![0.5, 0.5], dvector![-1.0, 3.0]];
        assert_eq!(lie_interval_raw(&g, &f).unwrap(), clarke_interval_raw(&g, &f).unwrap());
        let same = vec![dvector![1.0, -2.0], dvector![1.0, -2.0]];
        assert_eq!(lie_interval_raw(&same, &f).unwrap(), clarke_interval_raw(&g, &f).unwrap());
        let zero = vec![dvector![0.0, 0.0], dvector![0.0, 0.0]];
        assert_eq!(clarke_interval_raw(&g, &zero).unwrap(), DerivativeInterval::Interval { lo: 0.0, hi: 0.0 });
        assert_eq!(lie_interval_raw(&same, &zero).unwrap(), DerivativeInterval::Interval { lo: 0.0, hi: 0.0 });
    }

    #[test]
    fn lie_segment_hand_case() {
        // g₁ = (1,0), g₂ = (0,1); f₁ = (1,−1), f₂ = (−1,3): λ·2 − (1−λ)·4 = 0 ⇒ λ = 2/3,
        // f = (1/3, 1/3), value 1/3.
        let g = vec![dvector![1.0, 0.0], dvector![0.0, 1.0]];
        let f = vec![dvector![1.0, -1.0], dvector![-1.0, 3.0]];
        match lie_interval_raw(&g, &f).unwrap() {
            DerivativeInterval::Interval { lo, hi } => {
                assert!((lo - 1.0 / 3.0).abs() < 1e-12 && (hi - 1.0 / 3.0).abs() < 1e-12);
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn pivot_independence() {
        let g = vec![dvector![1.0, 0.3, 0.0], dvector![0.2, 1.0, -0.5], dvector![0.0, 0.1, 1.0]];
        let f = vec![dvector![1.0, -1.0, 0.5], dvector![-1.0, 2.0, 0.1], dvector![0.3, -0.2, -2.0], dvector![2.0, 1.0, 1.0]];
        let base = lie_interval_raw(&g, &f).unwrap();
        let perm = vec![g[2].clone(), g[0].clone(), g[1].clone()];
        let other = lie_interval_raw(&perm, &f).unwrap();
        match (base, other) {
            (DerivativeInterval::Interval { lo: a, hi: b }, DerivativeInterval::Interval { lo: c, hi: d }) => {
                assert!((a - c).abs() < 1e-9 && (b - d).abs() < 1e-9);
            }
            (x, y) => assert_eq!(x, y),
        }
    }

    #[test]
    fn lp_fallback_on_large_hull() {
        let g = vec![dvector![1.0, 0.0], dvector![0.0, 1.0]];
        let f: Vec<Vector> = (0..8).map(|k| {
            let a = k as f64 * 0.7;
            dvector![a.cos() * 2.0, a.sin() + 0.1]
        }).collect();
        let a = lie_interval_raw(&g, &f).unwrap();
        let b = lie_interval_lp(&g, &f).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }

    #[test]
    fn continuity_detects_perturbation() {
        let v = flower_v();
        let b = BoxBounds::symmetric(2, 2.0);
        let samples = v.adjacent_surface_samples(200, &b, 7).unwrap();
        assert!(v.continuity_check(&samples, 1e-8).pass);
        let q = Matrix::from_diagonal(&dvector![-1.0, 1.0]);
        let p = ProperPartition::split(ScalarField::quadratic(q).unwrap()).unwrap();
        let bad = PiecewiseC1Fn::quadratic(
            p,
            vec![Matrix::from_diagonal(&dvector![5.0, 1.0]), Matrix::from_diagonal(&dvector![1.1, 5.0])],
        )
        .unwrap();
        let rep = bad.continuity_check(&samples, 1e-8);
        assert!(!rep.pass && rep.witness.is_some());
        let empty = v.continuity_check(&[], 1e-8);
        assert!(empty.pass && empty.warning.is_some());
    }
}
