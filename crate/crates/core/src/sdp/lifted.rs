//! Homogenized SDP instances for the transmit and receive steps and the
//! slack-variable (ratio) updates that drive them.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::solver::{self, SdpProblem, SolveStatus, SolverSettings, SymMat};
use crate::error::{Error, Result};
use crate::signal::{BlockForm, LambdaTable, NoiseTerm, QuadraticForms, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Power { p: usize },
    AmplitudeLower { index: usize },
    AmplitudeUpper { index: usize },
    Homogenization,
    Margin { p: usize, q: usize, target: usize },
    /// `Psi[i, i] <= Psi[i, border]`, valid because amplitudes lie in `[0, 1]`.
    DiagonalCut { index: usize },
    Other,
}

/// `Tr(A Psi) - margin * tau  (sense)  bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceConstraint {
    pub kind: ConstraintKind,
    pub matrix: SymMat,
    pub sense: Sense,
    pub bound: f64,
    pub margin: f64,
}

/// Maximize `Tr(objective Psi) + tau` subject to the trace constraints and
/// `Psi >= 0`. `tau >= 0` only exists when some constraint carries a margin.
#[derive(Debug, Clone)]
pub struct LiftedSdp {
    pub dim: usize,
    pub objective: SymMat,
    pub constraints: Vec<TraceConstraint>,
    /// Expected magnitude of each coordinate; the solver works on
    /// `diag(scale)^-1 Psi diag(scale)^-1`.
    pub scale: DVector<f64>,
}

impl LiftedSdp {
    pub fn new(dim: usize) -> Self {
        LiftedSdp {
            dim,
            objective: SymMat::zero(),
            constraints: Vec::new(),
            scale: DVector::from_element(dim, 1.0),
        }
    }

    pub fn border(&self) -> usize {
        self.dim - 1
    }

    pub fn push(&mut self, kind: ConstraintKind, matrix: SymMat, sense: Sense, bound: f64) {
        self.constraints.push(TraceConstraint {
            kind,
            matrix,
            sense,
            bound,
            margin: 0.0,
        });
    }

    pub fn has_margin(&self) -> bool {
        self.constraints.iter().any(|c| c.margin != 0.0)
    }

    /// Trace constraints plus the PSD constraint.
    pub fn constraint_count(&self) -> usize {
        self.constraints.len() + 1
    }

    pub fn count_of(&self, pred: impl Fn(&ConstraintKind) -> bool) -> usize {
        self.constraints.iter().filter(|c| pred(&c.kind)).count()
    }

    /// Largest violation of the trace constraints at `(psi, tau)`.
    pub fn max_violation(&self, psi: &DMatrix<f64>, tau: f64) -> f64 {
        self.constraints
            .iter()
            .map(|c| {
                let lhs = c.matrix.dot(psi) - c.margin * tau;
                match c.sense {
                    Sense::Le => (lhs - c.bound).max(0.0),
                    Sense::Ge => (c.bound - lhs).max(0.0),
                    Sense::Eq => (lhs - c.bound).abs(),
                }
            })
            .fold(0.0, f64::max)
    }

    /// Coordinate-triplet text dump for cross-checking with other solvers.
    pub fn to_triplets(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dim {}", self.dim);
        let _ = writeln!(out, "constraints {}", self.constraints.len());
        write_matrix(&mut out, "objective", &self.objective, self.dim);
        for (i, c) in self.constraints.iter().enumerate() {
            let sense = match c.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(
                out,
                "constraint {i} {:?} {sense} {:e} margin {:e}",
                c.kind, c.bound, c.margin
            );
            write_matrix(&mut out, "matrix", &c.matrix, self.dim);
        }
        out
    }

    pub fn dump(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_triplets()).map_err(|e| Error::io(path, e))
    }
}

fn write_matrix(out: &mut String, label: &str, m: &SymMat, dim: usize) {
    let entries: Vec<(usize, usize, f64)> = match m {
        SymMat::Sparse(e) => e.clone(),
        SymMat::Dense(d) => (0..dim)
            .flat_map(|i| (i..dim).map(move |j| (i, j)))
            .filter(|&(i, j)| d[(i, j)] != 0.0)
            .map(|(i, j)| (i, j, d[(i, j)]))
            .collect(),
    };
    let _ = writeln!(out, "{label} {}", entries.len());
    for (i, j, v) in entries {
        let _ = writeln!(out, "{i} {j} {v:e}");
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    /// Add `Psi[i,i] <= Psi[i,border]` for every amplitude coordinate.
    pub diagonal_cuts: bool,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions { diagonal_cuts: true }
    }
}

fn check_hermitian(f: &BlockForm, what: &str) -> Result<()> {
    let tol = 1e-10 * (1.0 + f.matrix.norm());
    if f.hermitian_error() > tol {
        return Err(Error::NonHermitian(format!("{what} at offset {}", f.offset)));
    }
    Ok(())
}

/// Real part of a Hermitian block, zero-padded into the lifted dimension.
fn padded(f: &BlockForm, dim: usize, scale: f64, target: &mut DMatrix<f64>) {
    let n = f.size();
    let mut view = target.view_mut((f.offset, f.offset), (n, n));
    for j in 0..n {
        for i in 0..n {
            view[(i, j)] += scale * f.matrix[(i, j)].re;
        }
    }
    debug_assert!(f.offset + n < dim);
}

fn amplitude_rows(sdp: &mut LiftedSdp, n: usize, options: &AssemblyOptions) {
    let border = sdp.border();
    for i in 0..n {
        let x = SymMat::entry(i, border, 0.5);
        sdp.push(ConstraintKind::AmplitudeLower { index: i }, x.clone(), Sense::Ge, 0.0);
        sdp.push(ConstraintKind::AmplitudeUpper { index: i }, x, Sense::Le, 1.0);
    }
    if options.diagonal_cuts {
        for i in 0..n {
            sdp.push(
                ConstraintKind::DiagonalCut { index: i },
                SymMat::Sparse(vec![(i, i, 1.0), (i, border, -0.5)]),
                Sense::Le,
                0.0,
            );
        }
    }
}

fn margin_rows(sdp: &mut LiftedSdp, forms: &QuadraticForms, lambda: &LambdaTable) -> Result<()> {
    let dim = sdp.dim;
    let border = sdp.border();
    for p in 0..forms.p {
        for q in 0..forms.q {
            for lt in 0..forms.l_t {
                let lam = lambda.get(p, q, lt);
                let mut f = DMatrix::zeros(dim, dim);
                padded(forms.signal_form(p, q, lt), dim, 1.0, &mut f);
                for l in (0..forms.l).filter(|l| *l != lt) {
                    padded(forms.signal_form(p, q, l), dim, -lam, &mut f);
                }
                match forms.noise_term(p, q) {
                    NoiseTerm::Constant(c) => f[(border, border)] -= lam * c,
                    NoiseTerm::Form(nf) => padded(nf, dim, -lam, &mut f),
                }
                let scaled = DMatrix::from_fn(dim, dim, |i, j| f[(i, j)] * sdp.scale[i] * sdp.scale[j]);
                let nrm = scaled.norm();
                let f = if nrm > 0.0 { f / nrm } else { f };
                sdp.constraints.push(TraceConstraint {
                    kind: ConstraintKind::Margin { p, q, target: lt },
                    matrix: SymMat::Dense(f),
                    sense: Sense::Ge,
                    bound: 0.0,
                    margin: 1.0,
                });
            }
        }
    }
    Ok(())
}

fn check_lambda(forms: &QuadraticForms, lambda: &LambdaTable) -> Result<()> {
    if lambda.p != forms.p || lambda.q != forms.q || lambda.l_t != forms.l_t {
        return Err(Error::DimensionMismatch("ratio table does not match forms".into()));
    }
    if lambda.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidConfig("ratio entries must be finite and >= 0".into()));
    }
    Ok(())
}

pub fn assemble_tx_sdp(forms: &QuadraticForms, lambda: &LambdaTable, p_max: f64) -> Result<LiftedSdp> {
    assemble_tx_sdp_with(forms, lambda, p_max, &AssemblyOptions::default())
}

/// Transmit step: power caps, amplitude box, homogenization and one margin
/// row per `(p, q, target)`.
pub fn assemble_tx_sdp_with(
    forms: &QuadraticForms,
    lambda: &LambdaTable,
    p_max: f64,
    options: &AssemblyOptions,
) -> Result<LiftedSdp> {
    if forms.side != Side::Transmit {
        return Err(Error::InvalidConfig("transmit step needs transmit forms".into()));
    }
    check_lambda(forms, lambda)?;
    for f in forms.signal.iter().chain(forms.power.iter()) {
        check_hermitian(f, "transmit form")?;
    }
    let n = forms.dim;
    let mut sdp = LiftedSdp::new(n + 1);
    sdp.scale.rows_mut(0, n).copy_from(&forms.amplitude_scale);
    for (p, c) in forms.power.iter().enumerate() {
        let entries = (0..c.size())
            .map(|i| (c.offset + i, c.offset + i, c.matrix[(i, i)].re))
            .filter(|e| e.2 != 0.0)
            .collect();
        sdp.push(ConstraintKind::Power { p }, SymMat::Sparse(entries), Sense::Le, p_max);
    }
    amplitude_rows(&mut sdp, n, options);
    sdp.push(ConstraintKind::Homogenization, SymMat::entry(n, n, 1.0), Sense::Eq, 1.0);
    margin_rows(&mut sdp, forms, lambda)?;
    Ok(sdp)
}

pub fn assemble_rx_sdp(forms: &QuadraticForms, xi: &LambdaTable) -> Result<LiftedSdp> {
    assemble_rx_sdp_with(forms, xi, &AssemblyOptions::default())
}

/// Receive step: amplitude box, homogenization and margin rows; there is no
/// power cap on the receive side.
pub fn assemble_rx_sdp_with(
    forms: &QuadraticForms,
    xi: &LambdaTable,
    options: &AssemblyOptions,
) -> Result<LiftedSdp> {
    if forms.side != Side::Receive {
        return Err(Error::InvalidConfig("receive step needs receive forms".into()));
    }
    check_lambda(forms, xi)?;
    for f in &forms.signal {
        check_hermitian(f, "receive form")?;
    }
    let n = forms.dim;
    let mut sdp = LiftedSdp::new(n + 1);
    amplitude_rows(&mut sdp, n, options);
    sdp.push(ConstraintKind::Homogenization, SymMat::entry(n, n, 1.0), Sense::Eq, 1.0);
    margin_rows(&mut sdp, forms, xi)?;
    Ok(sdp)
}

#[derive(Debug, Clone)]
pub struct SdpOutcome {
    pub psi: DMatrix<f64>,
    pub margin: f64,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub max_violation: f64,
}

/// Solves a lifted instance. Statuses other than optimal (or inaccurate
/// optimal) are returned as errors carrying the solver diagnostics.
pub fn solve_sdp(problem: &LiftedSdp, settings: &SolverSettings) -> Result<SdpOutcome> {
    let d = &problem.scale;
    let with_margin = problem.has_margin();
    let mut lp_cost = Vec::new();
    let mut lp_cols: Vec<Vec<(usize, f64)>> = Vec::new();
    if with_margin {
        lp_cost.push(-1.0);
        lp_cols.push(Vec::new());
    }
    let mut a = Vec::with_capacity(problem.constraints.len());
    let mut b = Vec::with_capacity(problem.constraints.len());
    for (i, c) in problem.constraints.iter().enumerate() {
        a.push(c.matrix.congruence(d));
        b.push(c.bound);
        if c.margin != 0.0 {
            lp_cols[0].push((i, -c.margin));
        }
        match c.sense {
            Sense::Eq => {}
            Sense::Le => {
                lp_cost.push(0.0);
                lp_cols.push(vec![(i, 1.0)]);
            }
            Sense::Ge => {
                lp_cost.push(0.0);
                lp_cols.push(vec![(i, -1.0)]);
            }
        }
    }
    let prob = SdpProblem {
        n: problem.dim,
        c: problem.objective.congruence(d).scaled(-1.0),
        a,
        b: DVector::from_vec(b),
        lp_cost,
        lp_cols,
    };
    let sol = solver::solve(&prob, settings);
    if !sol.status.is_usable() {
        return Err(Error::Solver {
            status: sol.status,
            iterations: sol.iterations,
            detail: format!(
                "pinf {:.2e}, dinf {:.2e}, gap {:.2e}",
                sol.primal_infeasibility, sol.dual_infeasibility, sol.relative_gap
            ),
        });
    }
    let psi = DMatrix::from_fn(problem.dim, problem.dim, |i, j| {
        0.5 * (sol.x[(i, j)] + sol.x[(j, i)]) * d[i] * d[j]
    });
    let margin = if with_margin { sol.lp_x[0] } else { 0.0 };
    Ok(SdpOutcome {
        objective: problem.objective.dot(&psi) + margin,
        max_violation: problem.max_violation(&psi, margin),
        psi,
        margin,
        status: sol.status,
        iterations: sol.iterations,
    })
}

/// Ratio update for every pair and target at the lifted point.
pub fn svr_update_lambda(forms: &QuadraticForms, psi: &DMatrix<f64>) -> Result<LambdaTable> {
    forms.ratios(psi)
}

/// Worst target of the per-target pair averages.
pub fn svr_update_u(lambda: &LambdaTable) -> f64 {
    let pq = (lambda.p * lambda.q) as f64;
    (0..lambda.l_t)
        .map(|lt| {
            let mut s = 0.0;
            for p in 0..lambda.p {
                for q in 0..lambda.q {
                    s += lambda.get(p, q, lt);
                }
            }
            s / pq
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrState {
    pub lambda: LambdaTable,
    pub u: f64,
    pub iteration: usize,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub solver: SolverSettings,
    pub assembly: AssemblyOptions,
}

impl Default for SvrSettings {
    fn default() -> Self {
        SvrSettings {
            tolerance: 1e-5,
            max_iterations: 30,
            solver: SolverSettings::default(),
            assembly: AssemblyOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SvrOutcome {
    pub psi: DMatrix<f64>,
    pub state: SvrState,
    pub statuses: Vec<SolveStatus>,
    pub ipm_iterations: usize,
    /// Iterates rejected because their objective fell below the incumbent.
    pub rejected: usize,
}

/// Alternates SDP solves and ratio updates on one side, starting from
/// `psi0`, until the objective settles.
pub fn svr_solve(
    forms: &QuadraticForms,
    psi0: &DMatrix<f64>,
    p_max: Option<f64>,
    settings: &SvrSettings,
) -> Result<SvrOutcome> {
    let mut psi = psi0.clone();
    // An all-zero start carries no signal: every ratio is zero.
    let zero_start = psi.iter().all(|v| *v == 0.0);
    let lambda = if zero_start {
        LambdaTable::zeros(forms.p, forms.q, forms.l_t)
    } else {
        svr_update_lambda(forms, &psi)?
    };
    let u = svr_update_u(&lambda);
    let mut state = SvrState {
        lambda,
        u,
        iteration: 0,
        history: vec![u],
    };
    let mut statuses = Vec::new();
    let mut ipm_iterations = 0;
    let mut rejected = 0;
    while state.iteration < settings.max_iterations {
        state.iteration += 1;
        let sdp = match forms.side {
            Side::Transmit => assemble_tx_sdp_with(
                forms,
                &state.lambda,
                p_max.unwrap_or(f64::INFINITY),
                &settings.assembly,
            )?,
            Side::Receive => assemble_rx_sdp_with(forms, &state.lambda, &settings.assembly)?,
        };
        let out = match solve_sdp(&sdp, &settings.solver) {
            Ok(out) => out,
            // Close to the fixed point the best margin tends to zero and the
            // problem degenerates. The incumbent is feasible with zero
            // margin, so it is kept.
            Err(Error::Solver { status, iterations, .. }) if !zero_start || state.history.len() > 1 => {
                log::debug!("inner solve stopped with {status:?} after {iterations} iterations; keeping incumbent");
                statuses.push(status);
                ipm_iterations += iterations;
                break;
            }
            Err(e) => return Err(e),
        };
        statuses.push(out.status);
        ipm_iterations += out.iterations;
        let lambda = svr_update_lambda(forms, &out.psi)?;
        let u_new = svr_update_u(&lambda);
        if u_new < state.u {
            // Solver noise can only lose ground here; keep the incumbent.
            rejected += 1;
            break;
        }
        let delta = u_new - state.u;
        psi = out.psi;
        state.lambda = lambda;
        state.u = u_new;
        state.history.push(u_new);
        if delta <= settings.tolerance * u_new.max(1.0) {
            break;
        }
    }
    Ok(SvrOutcome {
        psi,
        state,
        statuses,
        ipm_iterations,
        rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> LiftedSdp {
        let mut sdp = LiftedSdp::new(2);
        sdp.objective = SymMat::entry(0, 0, 1.0);
        let x = SymMat::entry(0, 1, 0.5);
        sdp.push(ConstraintKind::AmplitudeLower { index: 0 }, x.clone(), Sense::Ge, 0.0);
        sdp.push(ConstraintKind::AmplitudeUpper { index: 0 }, x, Sense::Le, 1.0);
        sdp.push(ConstraintKind::Homogenization, SymMat::entry(1, 1, 1.0), Sense::Eq, 1.0);
        sdp
    }

    #[test]
    fn toy_optimum_is_all_ones() {
        // Without the diagonal cut the toy is unbounded in Psi[0,0]; with it
        // the optimum is the all-ones matrix.
        let mut sdp = toy();
        sdp.push(
            ConstraintKind::DiagonalCut { index: 0 },
            SymMat::Sparse(vec![(0, 0, 1.0), (0, 1, -0.5)]),
            Sense::Le,
            0.0,
        );
        let out = solve_sdp(&sdp, &SolverSettings::default()).unwrap();
        assert!((out.objective - 1.0).abs() < 1e-6, "{}", out.objective);
        assert!((out.psi.clone() - DMatrix::from_element(2, 2, 1.0)).amax() < 1e-5);
        assert!(out.max_violation < 1e-6);
    }

    #[test]
    fn toy_grid_search_agrees() {
        // Rank-one parametrization psi in [0,1]: max psi^2 = 1 at psi = 1.
        let best = (0..=100)
            .map(|k| k as f64 / 100.0)
            .map(|v| v * v)
            .fold(0.0, f64::max);
        assert_eq!(best, 1.0);
    }

    #[test]
    fn zero_objective_is_feasible() {
        let mut sdp = toy();
        sdp.objective = SymMat::zero();
        let out = solve_sdp(&sdp, &SolverSettings::default()).unwrap();
        assert_eq!(out.margin, 0.0);
        assert!(out.max_violation < 1e-6);
        assert!(out.psi.symmetric_eigenvalues().min() > -1e-8);
    }

    #[test]
    fn duplicate_constraint_same_optimum() {
        let mut sdp = toy();
        let cut = SymMat::Sparse(vec![(0, 0, 1.0), (0, 1, -0.5)]);
        sdp.push(ConstraintKind::Other, cut.clone(), Sense::Le, 0.0);
        let a = solve_sdp(&sdp, &SolverSettings::default()).unwrap();
        sdp.push(ConstraintKind::Other, cut, Sense::Le, 0.0);
        let b = solve_sdp(&sdp, &SolverSettings::default()).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-6);
    }

    #[test]
    fn unbounded_toy_is_reported() {
        let sdp = toy();
        let err = solve_sdp(&sdp, &SolverSettings::default()).unwrap_err();
        assert!(matches!(err, Error::Solver { .. }));
    }

    #[test]
    fn svr_u_examples() {
        let t = LambdaTable {
            p: 1,
            q: 1,
            l_t: 1,
            values: vec![0.7],
        };
        assert_eq!(svr_update_u(&t), 0.7);
        let t = LambdaTable {
            p: 2,
            q: 1,
            l_t: 3,
            values: vec![0.4; 6],
        };
        assert!((svr_update_u(&t) - 0.4).abs() < 1e-15);
        // Target rows [1, 3] and [2, 2] across the two pairs: min of row means.
        let t = LambdaTable {
            p: 2,
            q: 1,
            l_t: 2,
            values: vec![1.0, 2.0, 3.0, 2.0],
        };
        assert_eq!(svr_update_u(&t), 2.0);
        let t = LambdaTable {
            p: 2,
            q: 1,
            l_t: 2,
            values: vec![1.0, 2.0, 2.0, 3.0],
        };
        assert_eq!(svr_update_u(&t), 1.5);
    }

    #[test]
    fn triplet_dump_lists_entries() {
        let sdp = toy();
        let text = sdp.to_triplets();
        assert!(text.starts_with("dim 2\nconstraints 3\n"));
        assert!(text.contains("0 1 5e-1"));
    }
}
