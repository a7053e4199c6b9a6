//! Primal-dual interior-point method for a single PSD block plus a
//! nonnegative orthant:
//!
//! ```text
//! min  <C, X> + c_l^T x   s.t.  <A_i, X> + a_i^T x = b_i,  X >= 0,  x >= 0
//! ```
//!
//! Infeasible-start path following with the HKM search direction and a
//! Mehrotra predictor-corrector. Problem sizes here are a few hundred at
//! most, so the Schur complement is formed and factored densely.

use nalgebra::{Cholesky, DMatrix, DVector};

/// Real symmetric matrix in one of two storage forms.
#[derive(Debug, Clone, PartialEq)]
pub enum SymMat {
    /// Upper-triangle entries `(i, j, v)` with `i <= j`; `(j, i)` is implied.
    Sparse(Vec<(usize, usize, f64)>),
    Dense(DMatrix<f64>),
}

impl SymMat {
    pub fn zero() -> Self {
        SymMat::Sparse(Vec::new())
    }

    pub fn entry(i: usize, j: usize, v: f64) -> Self {
        SymMat::Sparse(vec![(i.min(j), i.max(j), v)])
    }

    /// `<M, X>` for symmetric `X`.
    pub fn dot(&self, x: &DMatrix<f64>) -> f64 {
        match self {
            SymMat::Sparse(e) => e
                .iter()
                .map(|&(i, j, v)| if i == j { v * x[(i, i)] } else { 2.0 * v * x[(i, j)] })
                .sum(),
            SymMat::Dense(m) => m.component_mul(x).sum(),
        }
    }

    pub fn add_scaled_to(&self, target: &mut DMatrix<f64>, s: f64) {
        match self {
            SymMat::Sparse(e) => {
                for &(i, j, v) in e {
                    target[(i, j)] += s * v;
                    if i != j {
                        target[(j, i)] += s * v;
                    }
                }
            }
            SymMat::Dense(m) => *target += m * s,
        }
    }

    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        self.add_scaled_to(&mut m, 1.0);
        m
    }

    pub fn norm(&self) -> f64 {
        match self {
            SymMat::Sparse(e) => e
                .iter()
                .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
                .sum::<f64>()
                .sqrt(),
            SymMat::Dense(m) => m.norm(),
        }
    }

    pub fn scaled(&self, s: f64) -> SymMat {
        match self {
            SymMat::Sparse(e) => SymMat::Sparse(e.iter().map(|&(i, j, v)| (i, j, v * s)).collect()),
            SymMat::Dense(m) => SymMat::Dense(m * s),
        }
    }

    /// `D M D` for diagonal `D`.
    pub fn congruence(&self, d: &DVector<f64>) -> SymMat {
        match self {
            SymMat::Sparse(e) => SymMat::Sparse(e.iter().map(|&(i, j, v)| (i, j, v * d[i] * d[j])).collect()),
            SymMat::Dense(m) => SymMat::Dense(DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * d[i] * d[j])),
        }
    }

    /// Entries with both triangles spelled out.
    fn expanded(&self) -> Vec<(usize, usize, f64)> {
        match self {
            SymMat::Sparse(e) => {
                let mut out = Vec::with_capacity(2 * e.len());
                for &(i, j, v) in e {
                    out.push((i, j, v));
                    if i != j {
                        out.push((j, i, v));
                    }
                }
                out
            }
            SymMat::Dense(_) => Vec::new(),
        }
    }
}

/// Standard-form problem data.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub n: usize,
    pub c: SymMat,
    pub a: Vec<SymMat>,
    pub b: DVector<f64>,
    /// Objective coefficient of each orthant variable.
    pub lp_cost: Vec<f64>,
    /// Nonzeros `(row, coef)` of each orthant variable's column.
    pub lp_cols: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Stopped short of the target accuracy with small residuals.
    InaccurateOptimal,
    Infeasible,
    Unbounded,
    MaxIterations,
    NumericalFailure,
}

impl SolveStatus {
    pub fn is_usable(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::InaccurateOptimal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub eps: f64,
    pub max_iterations: usize,
    pub step_fraction: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            eps: 1e-8,
            max_iterations: 100,
            step_fraction: 0.95,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub iterations: usize,
    pub x: DMatrix<f64>,
    pub lp_x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DMatrix<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Relative residuals and gap at exit, in the equilibrated problem.
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
}

struct Scaled {
    prob: SdpProblem,
    row_scale: DVector<f64>,
    obj_scale: f64,
}

/// Rows scaled to unit norm, objective scaled to norm at most one.
fn equilibrate(p: &SdpProblem) -> Scaled {
    let m = p.a.len();
    let mut lp_row_sq = vec![0.0; m];
    for col in &p.lp_cols {
        for &(r, v) in col {
            lp_row_sq[r] += v * v;
        }
    }
    let row_scale = DVector::from_fn(m, |i, _| {
        let nrm = (p.a[i].norm().powi(2) + lp_row_sq[i]).sqrt();
        if nrm > 0.0 {
            1.0 / nrm
        } else {
            1.0
        }
    });
    let c_norm = (p.c.norm().powi(2) + p.lp_cost.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let obj_scale = if c_norm > 1.0 { 1.0 / c_norm } else { 1.0 };
    let prob = SdpProblem {
        n: p.n,
        c: p.c.scaled(obj_scale),
        a: p.a.iter().enumerate().map(|(i, a)| a.scaled(row_scale[i])).collect(),
        b: p.b.component_mul(&row_scale),
        lp_cost: p.lp_cost.iter().map(|v| v * obj_scale).collect(),
        lp_cols: p
            .lp_cols
            .iter()
            .map(|col| col.iter().map(|&(r, v)| (r, v * row_scale[r])).collect())
            .collect(),
    };
    Scaled {
        prob,
        row_scale,
        obj_scale,
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest `alpha` with `X + alpha dX` PSD, or infinity.
fn max_step_psd(chol_x: &Cholesky<f64, nalgebra::Dyn>, dx: &DMatrix<f64>) -> f64 {
    let l = chol_x.l();
    let Some(linv_dx) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(m) = l.solve_lower_triangular(&linv_dx.transpose()) else {
        return 0.0;
    };
    let lam_min = symmetrize(&m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if lam_min >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lam_min
    }
}

fn max_step_lp(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

struct Workspace<'a> {
    p: &'a SdpProblem,
    expanded: Vec<Vec<(usize, usize, f64)>>,
    dense_idx: Vec<usize>,
}

impl<'a> Workspace<'a> {
    fn new(p: &'a SdpProblem) -> Self {
        let expanded = p.a.iter().map(|a| a.expanded()).collect();
        let dense_idx = p
            .a
            .iter()
            .enumerate()
            .filter(|(_, a)| matches!(a, SymMat::Dense(_)))
            .map(|(i, _)| i)
            .collect();
        Workspace {
            p,
            expanded,
            dense_idx,
        }
    }

    fn op(&self, x: &DMatrix<f64>, lp: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::from_fn(self.p.a.len(), |i, _| self.p.a[i].dot(x));
        for (k, col) in self.p.lp_cols.iter().enumerate() {
            for &(r, v) in col {
                out[r] += v * lp[k];
            }
        }
        out
    }

    fn adjoint(&self, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let mut m = DMatrix::zeros(self.p.n, self.p.n);
        for (i, a) in self.p.a.iter().enumerate() {
            if y[i] != 0.0 {
                a.add_scaled_to(&mut m, y[i]);
            }
        }
        let lp = DVector::from_fn(self.p.lp_cols.len(), |k, _| {
            self.p.lp_cols[k].iter().map(|&(r, v)| v * y[r]).sum()
        });
        (m, lp)
    }

    /// `M_ij = Tr(A_i X A_j Z^-1) + sum_k a_ik a_jk x_k / z_k`.
    fn schur(&self, x: &DMatrix<f64>, zinv: &DMatrix<f64>, lp_ratio: &DVector<f64>) -> DMatrix<f64> {
        let m = self.p.a.len();
        let mut s = DMatrix::zeros(m, m);
        // Dense rows: G_j = X A_j Z^-1, then Tr(A_i G_j) for every i.
        for &j in &self.dense_idx {
            let SymMat::Dense(aj) = &self.p.a[j] else { unreachable!() };
            let g = x * aj * zinv;
            for i in 0..m {
                let v = match &self.p.a[i] {
                    SymMat::Dense(ai) => ai.component_mul(&g.transpose()).sum(),
                    SymMat::Sparse(_) => self.expanded[i].iter().map(|&(a, b, w)| w * g[(b, a)]).sum(),
                };
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        for i in 0..m {
            if matches!(self.p.a[i], SymMat::Dense(_)) {
                continue;
            }
            for j in i..m {
                if matches!(self.p.a[j], SymMat::Dense(_)) {
                    continue;
                }
                let mut v = 0.0;
                for &(a, b, wi) in &self.expanded[i] {
                    for &(c, d, wj) in &self.expanded[j] {
                        v += wi * wj * x[(b, c)] * zinv[(d, a)];
                    }
                }
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        for (k, col) in self.p.lp_cols.iter().enumerate() {
            for &(r1, v1) in col {
                for &(r2, v2) in col {
                    s[(r1, r2)] += v1 * v2 * lp_ratio[k];
                }
            }
        }
        s
    }
}

fn dot_sym(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

/// Solves the problem; never panics on bad data, reports through the status.
pub fn solve(problem: &SdpProblem, settings: &SolverSettings) -> SdpSolution {
    let scaled = equilibrate(problem);
    let p = &scaled.prob;
    let ws = Workspace::new(p);
    let n = p.n;
    let m = p.a.len();
    let nl = p.lp_cols.len();
    let nf = n as f64;

    let c_dense = p.c.to_dense(n);
    let c_lp = DVector::from_vec(p.lp_cost.clone());
    let b_norm = p.b.norm();
    let c_norm = (c_dense.norm_squared() + c_lp.norm_squared()).sqrt();

    // Starting point in the spirit of SDPT3's default.
    let a_max = p.a.iter().map(|a| a.norm()).fold(0.0, f64::max);
    let xi = (0..m)
        .map(|i| (1.0 + p.b[i].abs()) / (1.0 + p.a[i].norm()))
        .fold(10.0f64.max(nf.sqrt()), |acc, v| acc.max(nf * v));
    let eta = 10.0f64.max(nf.sqrt()).max(a_max).max(c_norm);
    let mut x = DMatrix::identity(n, n) * xi;
    let mut z = DMatrix::identity(n, n) * eta;
    let mut xl = DVector::from_element(nl, xi);
    let mut zl = DVector::from_element(nl, eta);
    let mut y = DVector::zeros(m);

    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    let (mut pinf, mut dinf, mut gap) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let (mut pobj, mut dobj) = (0.0, 0.0);
    let dof = nf + nl as f64;
    // Best residual so far and the iteration it was reached at.
    let mut best_merit = (f64::INFINITY, 0usize);
    let mut best_mu = (f64::INFINITY, 0usize);
    // Iterate with the smallest worst residual, returned when the solve
    // ends without converging.
    let mut best: Option<Snapshot> = None;

    for it in 0..=settings.max_iterations {
        iterations = it;
        let rp = &p.b - ws.op(&x, &xl);
        let (aty, aty_l) = ws.adjoint(&y);
        let rd = &c_dense - aty - &z;
        let rd = symmetrize(&rd);
        let rdl = &c_lp - aty_l - &zl;
        pobj = dot_sym(&c_dense, &x) + c_lp.dot(&xl);
        dobj = p.b.dot(&y);
        let compl = dot_sym(&x, &z) + xl.dot(&zl);
        let mu = compl / dof;
        pinf = rp.norm() / (1.0 + b_norm);
        dinf = (rd.norm_squared() + rdl.norm_squared()).sqrt() / (1.0 + c_norm);
        gap = compl.max((pobj - dobj).abs()) / (1.0 + pobj.abs() + dobj.abs());

        if pinf < settings.eps && dinf < settings.eps && gap < settings.eps {
            status = SolveStatus::Optimal;
            break;
        }
        log::trace!("it {it}: pobj {pobj:.6e} dobj {dobj:.6e} pinf {pinf:.2e} dinf {dinf:.2e} gap {gap:.2e} mu {mu:.2e}");
        let merit = pinf.max(dinf).max(gap);
        if best.as_ref().is_none_or(|b| merit < b.merit) {
            best = Some(Snapshot {
                x: x.clone(),
                xl: xl.clone(),
                y: y.clone(),
                z: z.clone(),
                pobj,
                dobj,
                residuals: (pinf, dinf, gap),
                merit,
            });
        }
        if merit < 0.5 * best_merit.0 {
            best_merit = (merit, it);
        }
        // Shrinking complementarity counts as progress while it still makes
        // up a fair share of the gap and is above roundoff level.
        let mu_rel = mu / (1.0 + pobj.abs() + dobj.abs());
        if mu < 0.5 * best_mu.0 && compl >= 0.1 * (pobj - dobj).abs() && mu_rel > MU_FLOOR {
            best_mu = (mu, it);
        }
        if it - best_merit.1 >= STALL_ITERATIONS && it - best_mu.1 >= STALL_ITERATIONS {
            status = fallback_status(pinf, dinf, gap);
            break;
        }
        let x_tr = x.trace() + xl.sum();
        if x_tr > 1e12 && pobj < -1e8 && pinf < 1e-6 {
            status = SolveStatus::Unbounded;
            break;
        }
        if y.norm() > 1e12 && dobj > 1e8 && dinf < 1e-6 {
            status = SolveStatus::Infeasible;
            break;
        }
        if it == settings.max_iterations {
            status = if pinf < 1e-6 && dinf < 1e-6 && gap < 1e-4 {
                SolveStatus::InaccurateOptimal
            } else {
                SolveStatus::MaxIterations
            };
            break;
        }

        let Some(chol_z) = factor_interior(&mut z) else {
            log::trace!("dual iterate lost definiteness");
            status = fallback_status(pinf, dinf, gap);
            break;
        };
        let zinv = symmetrize(&chol_z.inverse());
        let lp_ratio = xl.component_div(&zl);
        let schur = ws.schur(&x, &zinv, &lp_ratio);
        let Some(chol_m) = factor_schur(schur) else {
            log::trace!("Schur complement singular");
            status = fallback_status(pinf, dinf, gap);
            break;
        };
        let Some(chol_x) = factor_interior(&mut x) else {
            log::trace!("primal iterate lost definiteness");
            status = fallback_status(pinf, dinf, gap);
            break;
        };

        let x_rd_zinv = &x * &rd * &zinv;
        let direction = |k: &DMatrix<f64>, kl: &DVector<f64>| {
            // k = target - X - (second-order term) Z^-1 (not symmetric); kl likewise.
            let t = symmetrize(&(k - &x_rd_zinv));
            let mut rhs = rp.clone();
            for (i, a) in p.a.iter().enumerate() {
                rhs[i] -= a.dot(&t);
            }
            for (kk, col) in p.lp_cols.iter().enumerate() {
                let v = kl[kk] - xl[kk] * rdl[kk] / zl[kk];
                for &(r, c) in col {
                    rhs[r] -= c * v;
                }
            }
            let dy = chol_m.solve(&rhs);
            let (atdy, atdy_l) = ws.adjoint(&dy);
            let dz = &rd - atdy;
            let dx = symmetrize(&(k - &x * &dz * &zinv));
            let dzl = &rdl - atdy_l;
            let dxl = DVector::from_fn(nl, |i, _| kl[i] - xl[i] * dzl[i] / zl[i]);
            (dx, dxl, dy, dz, dzl)
        };

        // Predictor.
        let k_aff = -&x;
        let kl_aff = -&xl;
        let (dx_a, dxl_a, _, dz_a, dzl_a) = direction(&k_aff, &kl_aff);
        let ap = max_step_psd(&chol_x, &dx_a).min(max_step_lp(&xl, &dxl_a)).min(1.0);
        let ad = max_step_psd(&chol_z, &dz_a).min(max_step_lp(&zl, &dzl_a)).min(1.0);
        let mu_aff = (dot_sym(&(&x + &dx_a * ap), &(&z + &dz_a * ad))
            + (&xl + &dxl_a * ap).dot(&(&zl + &dzl_a * ad)))
            / dof;
        let sigma = if mu > 0.0 { (mu_aff / mu).max(0.0).powi(3).min(1.0) } else { 0.0 };

        // Corrector.
        let k = &zinv * (sigma * mu) - &x - &dx_a * &dz_a * &zinv;
        let kl = DVector::from_fn(nl, |i, _| (sigma * mu - dxl_a[i] * dzl_a[i]) / zl[i] - xl[i]);
        let (dx, dxl, dy, dz, dzl) = direction(&k, &kl);
        let ap = (settings.step_fraction * max_step_psd(&chol_x, &dx).min(max_step_lp(&xl, &dxl))).min(1.0);
        let ad = (settings.step_fraction * max_step_psd(&chol_z, &dz).min(max_step_lp(&zl, &dzl))).min(1.0);
        if ap < 1e-12 && ad < 1e-12 {
            log::trace!("step lengths vanished");
            status = fallback_status(pinf, dinf, gap);
            break;
        }
        x += &dx * ap;
        x = symmetrize(&x);
        xl += &dxl * ap;
        y += &dy * ad;
        z += &dz * ad;
        z = symmetrize(&z);
        zl += &dzl * ad;
    }

    let unfinished = matches!(
        status,
        SolveStatus::MaxIterations | SolveStatus::NumericalFailure | SolveStatus::InaccurateOptimal
    );
    if let Some(b) = best.filter(|b| unfinished && b.merit < pinf.max(dinf).max(gap)) {
        (x, xl, y, z, pobj, dobj) = (b.x, b.xl, b.y, b.z, b.pobj, b.dobj);
        (pinf, dinf, gap) = b.residuals;
        let fallback = fallback_status(pinf, dinf, gap);
        if status != SolveStatus::MaxIterations || fallback == SolveStatus::InaccurateOptimal {
            status = fallback;
        }
    }

    let y_unscaled = y.component_mul(&scaled.row_scale) / scaled.obj_scale;
    SdpSolution {
        status,
        iterations,
        x,
        lp_x: xl,
        y: y_unscaled,
        z: z / scaled.obj_scale,
        primal_objective: pobj / scaled.obj_scale,
        dual_objective: dobj / scaled.obj_scale,
        primal_infeasibility: pinf,
        dual_infeasibility: dinf,
        relative_gap: gap,
    }
}

struct Snapshot {
    x: DMatrix<f64>,
    xl: DVector<f64>,
    y: DVector<f64>,
    z: DMatrix<f64>,
    pobj: f64,
    dobj: f64,
    residuals: (f64, f64, f64),
    merit: f64,
}

/// Iterations without halving the worst residual or the complementarity
/// before giving up.
const STALL_ITERATIONS: usize = 10;
const MU_FLOOR: f64 = 1e-14;

/// Cholesky factor of an iterate that should be positive definite. Near a
/// low-rank optimum roundoff can push the smallest eigenvalue to zero, so a
/// tiny multiple of the identity is added until the factorization succeeds.
fn factor_interior(m: &mut DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = m.trace().abs().max(1e-300) / m.nrows() as f64;
    for rel in [1e-14, 1e-12, 1e-10] {
        let mut shifted = m.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += rel * scale;
        }
        if let Some(c) = Cholesky::new(shifted.clone()) {
            *m = shifted;
            return Some(c);
        }
    }
    None
}

fn factor_schur(mut s: DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let d = s.diagonal().amax().max(1e-300);
    let mut added = 0.0;
    for rel in [1e-14, 1e-11, 1e-8] {
        for i in 0..s.nrows() {
            s[(i, i)] += rel * d - added;
        }
        added = rel * d;
        if let Some(c) = Cholesky::new(s.clone()) {
            return Some(c);
        }
    }
    None
}

fn fallback_status(pinf: f64, dinf: f64, gap: f64) -> SolveStatus {
    if pinf < 1e-6 && dinf < 1e-6 && gap < 1e-4 {
        SolveStatus::InaccurateOptimal
    } else {
        SolveStatus::NumericalFailure
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp_free(n: usize, c: SymMat, a: Vec<SymMat>, b: Vec<f64>) -> SdpProblem {
        SdpProblem {
            n,
            c,
            b: DVector::from_vec(b),
            a,
            lp_cost: vec![],
            lp_cols: vec![],
        }
    }

    #[test]
    fn trace_minimization() {
        // min <C, X> s.t. trace X = 1: smallest eigenvalue of C.
        let c = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.5, 0.0, 0.5, 3.0]);
        let prob = lp_free(
            3,
            SymMat::Dense(c.clone()),
            vec![SymMat::Sparse(vec![(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)])],
            vec![1.0],
        );
        let sol = solve(&prob, &SolverSettings::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        let lmin = c.symmetric_eigenvalues().min();
        assert!((sol.primal_objective - lmin).abs() < 1e-7, "{} vs {lmin}", sol.primal_objective);
    }

    #[test]
    fn maxcut_triangle() {
        // max <L/4, X>, diag X = 1, on a triangle: value 9/4.
        let l = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0]);
        let prob = lp_free(
            3,
            SymMat::Dense(l * -0.25),
            (0..3).map(|i| SymMat::entry(i, i, 1.0)).collect(),
            vec![1.0; 3],
        );
        let sol = solve(&prob, &SolverSettings::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.primal_objective + 2.25).abs() < 1e-7);
    }

    #[test]
    fn lp_part() {
        // min x1 + 2 x2 s.t. x1 + x2 = 1 plus a trivial 1x1 block X = 1.
        let prob = SdpProblem {
            n: 1,
            c: SymMat::zero(),
            a: vec![SymMat::zero(), SymMat::entry(0, 0, 1.0)],
            b: DVector::from_vec(vec![1.0, 1.0]),
            lp_cost: vec![1.0, 2.0],
            lp_cols: vec![vec![(0, 1.0)], vec![(0, 1.0)]],
        };
        let sol = solve(&prob, &SolverSettings::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.lp_x[0] - 1.0).abs() < 1e-7);
        assert!(sol.lp_x[1].abs() < 1e-7);
    }

    #[test]
    fn detects_infeasible() {
        // X00 = -1 with X PSD.
        let prob = lp_free(2, SymMat::zero(), vec![SymMat::entry(0, 0, 1.0)], vec![-1.0]);
        let sol = solve(&prob, &SolverSettings::default());
        assert!(!sol.status.is_usable(), "{:?}", sol.status);
    }

    #[test]
    fn detects_unbounded() {
        // min -X00 with only X11 = 1.
        let prob = lp_free(2, SymMat::entry(0, 0, -1.0), vec![SymMat::entry(1, 1, 1.0)], vec![1.0]);
        let sol = solve(&prob, &SolverSettings::default());
        assert!(!sol.status.is_usable(), "{:?}", sol.status);
    }

    #[test]
    fn symmat_forms_agree() {
        let s = SymMat::Sparse(vec![(0, 1, 0.5), (2, 2, 3.0)]);
        let d = SymMat::Dense(s.to_dense(3));
        let x = DMatrix::from_fn(3, 3, |i, j| 1.0 + (i + j) as f64);
        assert!((s.dot(&x) - d.dot(&x)).abs() < 1e-14);
        assert!((s.norm() - d.norm()).abs() < 1e-14);
        let w = DVector::from_vec(vec![2.0, 0.5, 1.0]);
        assert!((s.congruence(&w).to_dense(3) - d.congruence(&w).to_dense(3)).norm() < 1e-14);
    }
}
