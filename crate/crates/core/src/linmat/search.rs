//! Best-effort randomized search for LMI certificate data given fixed
//! controller and observer gains. Verification, not this search, is the
//! contract: anything returned here has already passed both verifiers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    observer_lmi_matrices, plant_lmi_matrices, lmi_residual, verify_observer_lmis, verify_plant_lmis, ControllerDesign,
    LinearSwitchedPlant, LinmatError, Result, SymMatrix, VERIFY_TOL,
};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub k: Matrix,
    pub l1: Matrix,
    pub l2: Matrix,
    pub iterations: usize,
    pub seed: u64,
    /// Fraction of the achieved LMI slack spent on a_x and a_e.
    pub margin_share: f64,
    pub eps_share: f64,
}

impl SearchOptions {
    pub fn new(k: Matrix, l1: Matrix, l2: Matrix) -> Self {
        Self { k, l1, l2, iterations: 10_000, seed: 0, margin_share: 0.9, eps_share: super::DEFAULT_EPS_SHARE }
    }
}

/// Decision vector: upper triangle of P₁, then μ_Q, μ₁, μ₂, μ₁₂, μ₂₁; P₂ is
/// P₁ − μ_Q Q so the continuity equality holds exactly.
struct Layout {
    n: usize,
}

impl Layout {
    fn tri(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    fn len(&self) -> usize {
        self.tri() + 5
    }

    fn p1(&self, th: &[f64]) -> Matrix {
        let mut p = Matrix::zeros(self.n, self.n);
        let mut k = 0;
        for i in 0..self.n {
            for j in i..self.n {
                p[(i, j)] = th[k];
                p[(j, i)] = th[k];
                k += 1;
            }
        }
        p
    }

    fn initial(&self) -> Vec<f64> {
        let mut th = vec![0.0; self.len()];
        let mut k = 0;
        for i in 0..self.n {
            for j in i..self.n {
                th[k] = if i == j { 1.0 } else { 0.0 };
                k += 1;
            }
        }
        th
    }

    /// Rescale to trace(P₁) = n; every LMI is homogeneous of degree one.
    fn normalize(&self, th: &mut [f64]) {
        let tr = self.p1(th).trace();
        if tr > 0.0 {
            let s = self.n as f64 / tr;
            th.iter_mut().for_each(|v| *v *= s);
        }
    }
}

fn design_from(layout: &Layout, th: &[f64], q: &Matrix, opts: &SearchOptions, a_x: f64, a_e: f64) -> ControllerDesign {
    let t = layout.tri();
    let p1 = layout.p1(th);
    let p2 = &p1 - q * th[t];
    let n = layout.n;
    ControllerDesign {
        k: opts.k.clone(),
        l1: opts.l1.clone(),
        l2: opts.l2.clone(),
        p1: SymMatrix::symmetrized(p1),
        p2: SymMatrix::symmetrized(p2),
        pe: SymMatrix::symmetrized(Matrix::identity(n, n)),
        mu1: th[t + 1].abs(),
        mu2: th[t + 2].abs(),
        mu12: th[t + 3],
        mu21: th[t + 4],
        mu_q: th[t],
        a_x,
        a_e,
        eps_share: opts.eps_share,
    }
}

const PD_FLOOR: f64 = 0.05;

fn objective(plant: &LinearSwitchedPlant, layout: &Layout, th: &[f64], q: &Matrix, opts: &SearchOptions) -> Result<f64> {
    let d = design_from(layout, th, q, opts, 0.0, 1.0);
    let lmis = plant_lmi_matrices(plant, &d)?.iter().map(|(_, m)| lmi_residual(m)).fold(f64::NEG_INFINITY, f64::max);
    let pd = (PD_FLOOR - d.p1.lambda_min()).max(PD_FLOOR - d.p2.lambda_min());
    Ok(lmis.max(pd))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub design: ControllerDesign,
    /// max λmax of the plant LMIs at a_x = 0 (negative = feasible).
    pub objective: f64,
    pub accepted_steps: usize,
}

/// Coordinate-wise random descent on the worst plant LMI eigenvalue, then
/// a_x and a_e chosen to spend `margin_share` of the available slack.
pub fn search_design(plant: &LinearSwitchedPlant, opts: &SearchOptions) -> Result<SearchOutcome> {
    let q = match &plant.q {
        super::SwitchingForm::Quadratic { q } => q.matrix().clone(),
        super::SwitchingForm::Linear { .. } => return Err(LinmatError::HalfspaceUnsupported),
    };
    if !(opts.margin_share > 0.0 && opts.margin_share < 1.0) {
        return Err(LinmatError::InvalidParameter("margin_share must lie in (0, 1)".into()));
    }
    let layout = Layout { n: plant.n() };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best = layout.initial();
    let mut f_best = objective(plant, &layout, &best, &q, opts)?;
    let mut step = 0.5;
    let mut stale = 0;
    let mut accepted = 0;
    for _ in 0..opts.iterations {
        let c = rng.gen_range(0..layout.len());
        let mut cand = best.clone();
        cand[c] += step * rng.gen_range(-1.0..=1.0);
        layout.normalize(&mut cand);
        let f = objective(plant, &layout, &cand, &q, opts)?;
        if f < f_best {
            best = cand;
            f_best = f;
            accepted += 1;
            stale = 0;
        } else {
            stale += 1;
            if stale >= 100 {
                step = (step * 0.7).max(1e-6);
                stale = 0;
            }
        }
    }
    if !(f_best < -VERIFY_TOL) {
        return Err(LinmatError::UnverifiedDesign(format!("search stalled at worst plant eigenvalue {f_best:e}")));
    }
    let probe = design_from(&layout, &best, &q, opts, 0.0, 0.0);
    let obs = observer_lmi_matrices(plant, &probe)?.iter().map(|(_, m)| lmi_residual(m)).fold(f64::NEG_INFINITY, f64::max);
    if !(obs < -VERIFY_TOL) {
        return Err(LinmatError::UnverifiedDesign(format!("observer gains leave eigenvalue {obs:e} with Pe = I")));
    }
    let design = design_from(&layout, &best, &q, opts, -f_best * opts.margin_share, -obs * opts.margin_share);
    for rep in [verify_plant_lmis(plant, &design, VERIFY_TOL)?, verify_observer_lmis(plant, &design, VERIFY_TOL)?] {
        if !rep.pass {
            return Err(LinmatError::UnverifiedDesign("search result failed verification".into()));
        }
    }
    Ok(SearchOutcome { design, objective: f_best, accepted_steps: accepted })
}
