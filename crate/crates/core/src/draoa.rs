//! Alternating transmit/receive amplitude optimization with Gaussian
//! randomization rounding.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{trial_rng, Scene, StreamPurpose};
use crate::sdp::{svr_solve, AssemblyOptions, SolveStatus, SolverSettings, SvrSettings};
use crate::signal::{
    lift, receive_forms, sinr_per_pair, transmit_forms, Amplitudes, BeamformerSet, SignalModel, SinrReport,
};

/// How transmit and receive rounding candidates are paired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Every transmit candidate against every receive candidate.
    Exhaustive,
    /// Top `k` of each side ranked by its one-sided objective.
    Shortlist(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoundingConfig {
    pub tx_samples: usize,
    pub rx_samples: usize,
    pub pairing: Pairing,
    /// Divide samples by their homogenization coordinate before clipping.
    /// Off by default: the coordinate is close to an independent unit
    /// normal when the amplitude block is small, and the ratio then blows
    /// samples up into the clip.
    pub dehomogenize: bool,
    /// Also consider the border column of each lifted matrix as a candidate.
    pub include_mean: bool,
    /// Also consider the leading eigenvector of each amplitude block.
    pub include_principal: bool,
    /// After the best pair is found, swap single panel blocks between
    /// candidates while that improves the objective.
    pub block_search: bool,
}

impl Default for RoundingConfig {
    fn default() -> Self {
        RoundingConfig {
            tx_samples: 100,
            rx_samples: 100,
            pairing: Pairing::Exhaustive,
            dehomogenize: false,
            include_mean: true,
            include_principal: true,
            block_search: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DraoaConfig {
    pub eps_outer: f64,
    pub max_outer: usize,
    pub inner_tolerance: f64,
    pub max_inner: usize,
    pub eps_ipm: f64,
    pub max_ipm_iterations: usize,
    pub diagonal_cuts: bool,
    pub rounding: RoundingConfig,
    /// Re-run the alternation from a rounded candidate that beats the
    /// relaxed value, at most this many times.
    pub max_restarts: usize,
    pub rng_seed: u64,
}

impl Default for DraoaConfig {
    fn default() -> Self {
        DraoaConfig {
            eps_outer: 1e-3,
            max_outer: 20,
            inner_tolerance: 1e-5,
            max_inner: 30,
            eps_ipm: 1e-8,
            max_ipm_iterations: 100,
            diagonal_cuts: true,
            rounding: RoundingConfig::default(),
            max_restarts: 3,
            rng_seed: 0,
        }
    }
}

impl DraoaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_outer > 0.0) || !(self.inner_tolerance > 0.0) || !(self.eps_ipm > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::InvalidConfig("iteration caps must be at least 1".into()));
        }
        if self.rounding.tx_samples == 0 || self.rounding.rx_samples == 0 {
            return Err(Error::InvalidConfig("rounding needs at least one sample per side".into()));
        }
        if let Pairing::Shortlist(0) = self.rounding.pairing {
            return Err(Error::InvalidConfig("shortlist size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn svr_settings(&self) -> SvrSettings {
        SvrSettings {
            tolerance: self.inner_tolerance,
            max_iterations: self.max_inner,
            solver: SolverSettings {
                eps: self.eps_ipm,
                max_iterations: self.max_ipm_iterations,
                ..SolverSettings::default()
            },
            assembly: AssemblyOptions {
                diagonal_cuts: self.diagonal_cuts,
            },
        }
    }
}

/// One outer iteration of the alternation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub restart: usize,
    pub outer: usize,
    pub u_t: f64,
    pub u_r: f64,
    pub inner_t: usize,
    pub inner_r: usize,
    pub statuses_t: Vec<SolveStatus>,
    pub statuses_r: Vec<SolveStatus>,
    pub ipm_iterations: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundingStats {
    pub tx_candidates: usize,
    pub rx_candidates: usize,
    pub discarded_tx: usize,
    pub fallback_used: bool,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DraoaResult {
    pub beamformers: BeamformerSet,
    pub report: SinrReport,
    pub worst_case_sinr: f64,
    pub worst_case_sinr_db: f64,
    /// Relaxed objective of the final alternation.
    pub relaxed_bound: f64,
    pub trace: Vec<IterationRecord>,
    /// `U^t(1), U^r(1), U^t(2), ...` across all alternations in order.
    pub u_chain: Vec<f64>,
    pub rounding: RoundingStats,
    /// Lifted transmit and receive matrices of the final alternation.
    pub lifted_t: DMatrix<f64>,
    pub lifted_r: DMatrix<f64>,
    pub sdp_solves: usize,
    pub ipm_iterations: usize,
}

struct Alternation {
    psi_t: DMatrix<f64>,
    psi_r: DMatrix<f64>,
    u: f64,
}

fn alternate(
    model: &SignalModel,
    mut psi_t: DMatrix<f64>,
    mut psi_r: DMatrix<f64>,
    config: &DraoaConfig,
    restart: usize,
    trace: &mut Vec<IterationRecord>,
    chain: &mut Vec<f64>,
) -> Result<Alternation> {
    let svr = config.svr_settings();
    let mut u = 0.0;
    for outer in 1..=config.max_outer {
        let tf = transmit_forms(model, Amplitudes::Lifted(&psi_r));
        let out_t = svr_solve(&tf, &psi_t, Some(model.p_max), &svr)?;
        psi_t = out_t.psi;
        let u_t = out_t.state.u;
        chain.push(u_t);

        let rf = receive_forms(model, Amplitudes::Lifted(&psi_t));
        let out_r = svr_solve(&rf, &psi_r, None, &svr)?;
        psi_r = out_r.psi;
        let u_r = out_r.state.u;
        chain.push(u_r);
        u = u_r;

        trace.push(IterationRecord {
            restart,
            outer,
            u_t,
            u_r,
            inner_t: out_t.state.iteration,
            inner_r: out_r.state.iteration,
            ipm_iterations: out_t.ipm_iterations + out_r.ipm_iterations,
            rejected: out_t.rejected + out_r.rejected,
            statuses_t: out_t.statuses,
            statuses_r: out_r.statuses,
        });
        log::debug!("restart {restart} outer {outer}: U^t = {u_t:.6e}, U^r = {u_r:.6e}");
        if (u_r - u_t).abs() <= config.eps_outer {
            break;
        }
    }
    Ok(Alternation { psi_t, psi_r, u })
}

/// Runs the optimizer on a scene with the expected-noise model.
pub fn run_draoa(scene: &Scene, config: &DraoaConfig) -> Result<DraoaResult> {
    let model = SignalModel::new(scene)?;
    run_draoa_on(&model, config)
}

/// Runs the optimizer on a prepared signal model.
pub fn run_draoa_on(model: &SignalModel, config: &DraoaConfig) -> Result<DraoaResult> {
    config.validate()?;
    let mut trace = Vec::new();
    let mut chain = Vec::new();
    let result = optimize(model, config, &mut trace, &mut chain);
    result.map_err(|e| Error::Aborted {
        source: Box::new(e),
        trace: trace.clone(),
    })
}

fn optimize(
    model: &SignalModel,
    config: &DraoaConfig,
    trace: &mut Vec<IterationRecord>,
    chain: &mut Vec<f64>,
) -> Result<DraoaResult> {
    let n_t = model.p * model.n_t;
    let n_r = model.q * model.n_r;
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    init_rng.set_stream(StreamPurpose::Optimizer as u64);
    let r0 = DVector::from_fn(n_r, |_, _| init_rng.random::<f64>());

    let mut state = alternate(
        model,
        DMatrix::zeros(n_t + 1, n_t + 1),
        lift(&r0),
        config,
        0,
        trace,
        chain,
    )?;
    let mut incumbent: Option<(BeamformerSet, f64)> = None;
    let mut stats = RoundingStats::default();
    let mut restart = 0;
    let best = loop {
        let round = gaussian_rounding_with(
            &state.psi_t,
            &state.psi_r,
            model,
            &config.rounding,
            config.rng_seed.wrapping_add(restart as u64),
            incumbent.as_ref().map(|(b, _)| b),
        )?;
        stats.tx_candidates += round.tx_candidates;
        stats.rx_candidates += round.rx_candidates;
        stats.discarded_tx += round.discarded_tx;
        stats.fallback_used |= round.fallback_used;
        let objective = round.objective;
        let cand = round.beamformers;
        if objective <= state.u + 1e-9 * state.u.abs().max(1.0) {
            break cand;
        }
        // A rank-one point beat the relaxed value: continue the ascent from it.
        restart += 1;
        let seed_t = lift(&cand.psi_t);
        let seed_r = lift(&cand.psi_r);
        state = alternate(model, seed_t, seed_r, config, restart, trace, chain)?;
        incumbent = Some((cand.clone(), objective));
        if restart >= config.max_restarts {
            // The warm-started ascent can only end at or above the candidate.
            break cand;
        }
    };
    stats.restarts = restart;

    let report = evaluate_final(model, &best)?;
    let sdp_solves = trace
        .iter()
        .map(|r| r.statuses_t.len() + r.statuses_r.len())
        .sum();
    let ipm_iterations = trace.iter().map(|r| r.ipm_iterations).sum();
    Ok(DraoaResult {
        worst_case_sinr: report.worst_case,
        worst_case_sinr_db: report.worst_case_db,
        relaxed_bound: state.u,
        beamformers: best,
        report,
        trace: trace.clone(),
        u_chain: chain.clone(),
        rounding: stats,
        lifted_t: state.psi_t,
        lifted_r: state.psi_r,
        sdp_solves,
        ipm_iterations,
    })
}

/// True objective of a rounded beamformer set.
pub fn evaluate_final(model: &SignalModel, bf: &BeamformerSet) -> Result<SinrReport> {
    sinr_per_pair(model, bf)
}

#[derive(Debug, Clone)]
pub struct RoundingOutcome {
    pub beamformers: BeamformerSet,
    pub objective: f64,
    pub tx_candidates: usize,
    pub rx_candidates: usize,
    pub discarded_tx: usize,
    pub fallback_used: bool,
}

/// `L` with `L L^T = Psi`, negative eigenvalues floored to zero.
fn psd_factor(psi: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (psi + psi.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let floor = 1e-12 * eig.eigenvalues.amax();
    let mut l = eig.eigenvectors;
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        let s = if *lam > floor { lam.sqrt() } else { 0.0 };
        l.column_mut(j).scale_mut(s);
    }
    l
}

fn sample_candidate<R: Rng + ?Sized>(factor: &DMatrix<f64>, dehomogenize: bool, rng: &mut R) -> DVector<f64> {
    let dim = factor.nrows();
    let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let zeta = factor * z;
    let n = dim - 1;
    let t = zeta[n];
    let core = zeta.rows(0, n);
    if dehomogenize && t.abs() >= 1e-6 {
        core.map(|v| (v / t).abs().clamp(0.0, 1.0))
    } else {
        core.map(|v| v.clamp(0.0, 1.0))
    }
}

fn border_column(psi: &DMatrix<f64>) -> DVector<f64> {
    let n = psi.nrows() - 1;
    let t = psi[(n, n)];
    DVector::from_fn(n, |i, _| {
        let v = if t > 0.0 { psi[(i, n)] / t } else { psi[(i, n)] };
        v.clamp(0.0, 1.0)
    })
}

/// Leading eigenvector of the amplitude block, sign-folded and scaled so
/// its largest entry is one.
fn principal_direction(psi: &DMatrix<f64>) -> DVector<f64> {
    let n = psi.nrows() - 1;
    let core = psi.view((0, 0), (n, n));
    let sym = (core + core.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let k = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(k).abs();
    let m = v.max();
    if m > 0.0 {
        v / m
    } else {
        v
    }
}

/// Scales the whole vector up or down so the tightest panel sits on the
/// power cap, keeping entries within one.
fn fit_power(model: &SignalModel, psi_t: &mut DVector<f64>) {
    let worst = (0..model.p)
        .map(|p| model.tx_power(p, Amplitudes::Vector(psi_t)) / model.p_max)
        .fold(0.0, f64::max);
    if worst > 0.0 {
        let mut s = worst.sqrt().recip();
        let m = psi_t.max();
        if m * s > 1.0 {
            s = 1.0 / m;
        }
        psi_t.scale_mut(s * (1.0 - 1e-12));
    }
    repair_power(model, psi_t);
}

fn tx_power_ok(model: &SignalModel, psi_t: &DVector<f64>) -> bool {
    (0..model.p).all(|p| model.tx_power(p, Amplitudes::Vector(psi_t)) <= model.p_max)
}

/// Scales each over-budget panel down onto the power cap.
fn repair_power(model: &SignalModel, psi_t: &mut DVector<f64>) {
    for p in 0..model.p {
        let power = model.tx_power(p, Amplitudes::Vector(psi_t));
        if power > model.p_max {
            let s = (model.p_max / power).sqrt() * (1.0 - 1e-12);
            psi_t.rows_mut(p * model.n_t, model.n_t).scale_mut(s);
        }
    }
}

struct TxGains(Vec<f64>);
struct RxGains {
    gains: Vec<f64>,
    noise: Vec<f64>,
}

fn tx_gains(model: &SignalModel, psi: &DVector<f64>) -> TxGains {
    TxGains(
        (0..model.p)
            .flat_map(|p| (0..model.l).map(move |l| (p, l)))
            .map(|(p, l)| model.tx_gain(p, l, Amplitudes::Vector(psi)))
            .collect(),
    )
}

fn rx_gains(model: &SignalModel, psi: &DVector<f64>) -> RxGains {
    RxGains {
        gains: (0..model.q)
            .flat_map(|q| (0..model.l).map(move |l| (q, l)))
            .map(|(q, l)| model.rx_gain(q, l, Amplitudes::Vector(psi)))
            .collect(),
        noise: (0..model.p)
            .flat_map(|p| (0..model.q).map(move |q| (p, q)))
            .map(|(p, q)| model.noise(p, q, Amplitudes::Vector(psi)))
            .collect(),
    }
}

/// Worst-case average SINR from precomputed one-sided gains.
fn pair_objective(model: &SignalModel, t: &TxGains, r: &RxGains) -> f64 {
    let mut worst = f64::INFINITY;
    let mut sig = vec![0.0; model.l];
    let mut sums = vec![0.0; model.l_t];
    for p in 0..model.p {
        for q in 0..model.q {
            let mut total = 0.0;
            for l in 0..model.l {
                sig[l] = model.weight(p, q, l) * t.0[p * model.l + l] * r.gains[q * model.l + l];
                total += sig[l];
            }
            let noise = r.noise[p * model.q + q];
            for lt in 0..model.l_t {
                let den = total - sig[lt] + noise;
                if den > 0.0 {
                    sums[lt] += sig[lt] / den;
                }
            }
        }
    }
    for s in sums {
        worst = worst.min(s / (model.p * model.q) as f64);
    }
    worst
}

pub fn gaussian_rounding(
    psi_t: &DMatrix<f64>,
    psi_r: &DMatrix<f64>,
    model: &SignalModel,
    config: &RoundingConfig,
    seed: u64,
) -> Result<RoundingOutcome> {
    gaussian_rounding_with(psi_t, psi_r, model, config, seed, None)
}

/// Draws transmit and receive candidates from the lifted matrices, keeps the
/// feasible ones and returns the pair with the best true objective. An
/// incumbent, when given, competes with the samples.
pub fn gaussian_rounding_with(
    psi_t: &DMatrix<f64>,
    psi_r: &DMatrix<f64>,
    model: &SignalModel,
    config: &RoundingConfig,
    seed: u64,
    incumbent: Option<&BeamformerSet>,
) -> Result<RoundingOutcome> {
    let n_t = model.p * model.n_t;
    let n_r = model.q * model.n_r;
    if psi_t.nrows() != n_t + 1 || psi_r.nrows() != n_r + 1 {
        return Err(Error::DimensionMismatch("lifted matrices do not match the model".into()));
    }
    let mut tx_rng = trial_rng(seed, 0, StreamPurpose::Optimizer);
    tx_rng.set_stream(0x7478);
    let mut rx_rng = trial_rng(seed, 0, StreamPurpose::Optimizer);
    rx_rng.set_stream(0x7278);

    let ft = psd_factor(psi_t);
    let fr = psd_factor(psi_r);

    let mut tx: Vec<DVector<f64>> = Vec::new();
    let mut rejected: Vec<DVector<f64>> = Vec::new();
    if config.include_mean {
        let mut m = border_column(psi_t);
        repair_power(model, &mut m);
        tx.push(m);
    }
    if config.include_principal {
        let mut v = principal_direction(psi_t);
        fit_power(model, &mut v);
        tx.push(v);
    }
    if let Some(b) = incumbent {
        tx.push(b.psi_t.clone());
    }
    for _ in 0..config.tx_samples {
        let c = sample_candidate(&ft, config.dehomogenize, &mut tx_rng);
        if tx_power_ok(model, &c) {
            tx.push(c);
        } else {
            rejected.push(c);
        }
    }
    let discarded_tx = rejected.len();
    let mut fallback_used = false;
    if tx.is_empty() {
        // Every sample broke the power cap: shrink the strongest one.
        let rx_view = Amplitudes::Lifted(psi_r);
        let tf = transmit_forms(model, rx_view);
        let score = |c: &DVector<f64>| -> f64 {
            let l = lift(c);
            tf.ratios(&l).map(|t| crate::sdp::svr_update_u(&t)).unwrap_or(0.0)
        };
        let mut best = rejected
            .iter()
            .max_by(|a, b| score(a).total_cmp(&score(b)))
            .cloned()
            .expect("at least one sample drawn");
        repair_power(model, &mut best);
        log::warn!("all {discarded_tx} transmit samples exceeded the power cap; scaled the best one down");
        tx.push(best);
        fallback_used = true;
    }

    let mut rx: Vec<DVector<f64>> = Vec::new();
    if config.include_mean {
        rx.push(border_column(psi_r));
    }
    if config.include_principal {
        rx.push(principal_direction(psi_r));
    }
    if let Some(b) = incumbent {
        rx.push(b.psi_r.clone());
    }
    for _ in 0..config.rx_samples {
        rx.push(sample_candidate(&fr, config.dehomogenize, &mut rx_rng));
    }

    let tg: Vec<TxGains> = tx.iter().map(|c| tx_gains(model, c)).collect();
    let rg: Vec<RxGains> = rx.iter().map(|c| rx_gains(model, c)).collect();

    let (tx_idx, rx_idx): (Vec<usize>, Vec<usize>) = match config.pairing {
        Pairing::Exhaustive => ((0..tx.len()).collect(), (0..rx.len()).collect()),
        Pairing::Shortlist(k) => {
            let lifted_r = rx_gains_lifted(model, psi_r);
            let lifted_t = tx_gains_lifted(model, psi_t);
            let mut ti: Vec<usize> = (0..tx.len()).collect();
            let mut ri: Vec<usize> = (0..rx.len()).collect();
            let ts: Vec<f64> = tg.iter().map(|t| pair_objective(model, t, &lifted_r)).collect();
            let rs: Vec<f64> = rg.iter().map(|r| pair_objective(model, &lifted_t, r)).collect();
            ti.sort_by(|a, b| ts[*b].total_cmp(&ts[*a]).then(a.cmp(b)));
            ri.sort_by(|a, b| rs[*b].total_cmp(&rs[*a]).then(a.cmp(b)));
            ti.truncate(k);
            ri.truncate(k);
            (ti, ri)
        }
    };

    let mut best = (tx_idx[0], rx_idx[0], f64::NEG_INFINITY);
    for &i in &tx_idx {
        for &j in &rx_idx {
            let v = pair_objective(model, &tg[i], &rg[j]);
            if v > best.2 {
                best = (i, j, v);
            }
        }
    }
    let (psi_t, psi_r, objective) = if config.block_search {
        block_search(model, &tx, &rx, &tg, &rg, best)
    } else {
        (tx[best.0].clone(), rx[best.1].clone(), best.2)
    };
    let beamformers = BeamformerSet::new(psi_t, psi_r, model.n_t, model.n_r)?;
    Ok(RoundingOutcome {
        beamformers,
        objective,
        tx_candidates: tx.len(),
        rx_candidates: rx.len(),
        discarded_tx,
        fallback_used,
    })
}

/// Coordinate ascent over panel blocks. Transmit gains of panel `p` and the
/// receive gains and noise of panel `q` depend on that panel's block only,
/// and the power cap is per panel, so any mix of feasible candidates is
/// feasible.
fn block_search(
    model: &SignalModel,
    tx: &[DVector<f64>],
    rx: &[DVector<f64>],
    tg: &[TxGains],
    rg: &[RxGains],
    start: (usize, usize, f64),
) -> (DVector<f64>, DVector<f64>, f64) {
    let (p_n, q_n, l_n) = (model.p, model.q, model.l);
    let mut ct = vec![start.0; p_n];
    let mut cr = vec![start.1; q_n];
    let compose_t = |ct: &[usize]| {
        TxGains((0..p_n * l_n).map(|k| tg[ct[k / l_n]].0[k]).collect())
    };
    let compose_r = |cr: &[usize]| RxGains {
        gains: (0..q_n * l_n).map(|k| rg[cr[k / l_n]].gains[k]).collect(),
        noise: (0..p_n * q_n).map(|k| rg[cr[k % q_n]].noise[k]).collect(),
    };
    let mut best = start.2;
    for _ in 0..BLOCK_SWEEPS {
        let mut improved = false;
        for p in 0..p_n {
            let r = compose_r(&cr);
            let mut trial = ct.clone();
            for g in 0..tx.len() {
                trial[p] = g;
                let v = pair_objective(model, &compose_t(&trial), &r);
                if v > best {
                    best = v;
                    ct[p] = g;
                    improved = true;
                }
            }
        }
        for q in 0..q_n {
            let t = compose_t(&ct);
            let mut trial = cr.clone();
            for h in 0..rx.len() {
                trial[q] = h;
                let v = pair_objective(model, &t, &compose_r(&trial));
                if v > best {
                    best = v;
                    cr[q] = h;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    let psi_t = DVector::from_fn(p_n * model.n_t, |i, _| tx[ct[i / model.n_t]][i]);
    let psi_r = DVector::from_fn(q_n * model.n_r, |i, _| rx[cr[i / model.n_r]][i]);
    (psi_t, psi_r, best)
}

const BLOCK_SWEEPS: usize = 10;

fn tx_gains_lifted(model: &SignalModel, psi: &DMatrix<f64>) -> TxGains {
    TxGains(
        (0..model.p)
            .flat_map(|p| (0..model.l).map(move |l| (p, l)))
            .map(|(p, l)| model.tx_gain(p, l, Amplitudes::Lifted(psi)))
            .collect(),
    )
}

fn rx_gains_lifted(model: &SignalModel, psi: &DMatrix<f64>) -> RxGains {
    RxGains {
        gains: (0..model.q)
            .flat_map(|q| (0..model.l).map(move |l| (q, l)))
            .map(|(q, l)| model.rx_gain(q, l, Amplitudes::Lifted(psi)))
            .collect(),
        noise: (0..model.p)
            .flat_map(|p| (0..model.q).map(move |q| (p, q)))
            .map(|(p, q)| model.noise(p, q, Amplitudes::Lifted(psi)))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::tests_support::small_scene;

    fn fast_config() -> DraoaConfig {
        DraoaConfig {
            rounding: RoundingConfig {
                tx_samples: 30,
                rx_samples: 30,
                ..RoundingConfig::default()
            },
            ..DraoaConfig::default()
        }
    }

    #[test]
    fn rank_one_input_recovers_candidate() {
        let scene = small_scene(1, 1, (2, 2), true);
        let model = SignalModel::new(&scene).unwrap();
        let mut bf = BeamformerSet::uniform(1, 1, 4, 4, 0.6).unwrap();
        bf.psi_t.fill(0.004);
        bf.psi_r[2] = 0.1;
        let cfg = RoundingConfig {
            include_mean: false,
            include_principal: false,
            dehomogenize: true,
            tx_samples: 5,
            rx_samples: 5,
            ..RoundingConfig::default()
        };
        let out = gaussian_rounding(&lift(&bf.psi_t), &lift(&bf.psi_r), &model, &cfg, 9).unwrap();
        assert!((&out.beamformers.psi_t - &bf.psi_t).amax() < 1e-9);
        assert!((&out.beamformers.psi_r - &bf.psi_r).amax() < 1e-9);
    }

    #[test]
    fn rank_one_input_keeps_objective_with_defaults() {
        let scene = small_scene(1, 1, (2, 2), true);
        let model = SignalModel::new(&scene).unwrap();
        let mut bf = BeamformerSet::uniform(1, 1, 4, 4, 0.6).unwrap();
        bf.psi_t.fill(0.004);
        bf.psi_r[2] = 0.1;
        let own = SinrReport::from_terms(&model.pair_terms(Amplitudes::Vector(&bf.psi_t), Amplitudes::Vector(&bf.psi_r)))
            .unwrap()
            .worst_case;
        let out =
            gaussian_rounding(&lift(&bf.psi_t), &lift(&bf.psi_r), &model, &RoundingConfig::default(), 9).unwrap();
        assert!(out.objective >= 0.99 * own, "{} vs {own}", out.objective);
    }

    #[test]
    fn sample_clipping() {
        // Lifted point with entries 1.3 and -0.2 along the border.
        let v = DVector::from_vec(vec![1.3, -0.2, 1.0]);
        let psi = &v * v.transpose();
        let f = psd_factor(&psi);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = sample_candidate(&f, false, &mut rng);
        assert!(c.iter().all(|x| (0.0..=1.0).contains(x)));
        let c = sample_candidate(&f, true, &mut rng);
        assert!((c[0] - 1.0).abs() < 1e-12);
        assert!((c[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn single_sample_each_side() {
        let scene = small_scene(1, 1, (2, 2), false);
        let model = SignalModel::new(&scene).unwrap();
        let bf = BeamformerSet::uniform(1, 1, 4, 4, 0.01).unwrap();
        let cfg = RoundingConfig {
            include_mean: false,
            include_principal: false,
            tx_samples: 1,
            rx_samples: 1,
            ..RoundingConfig::default()
        };
        let out = gaussian_rounding(&lift(&bf.psi_t), &lift(&bf.psi_r), &model, &cfg, 3).unwrap();
        assert_eq!((out.tx_candidates, out.rx_candidates), (1, 1));
    }

    #[test]
    fn huge_eps_runs_one_outer_iteration() {
        let scene = small_scene(1, 1, (1, 2), true);
        let cfg = DraoaConfig {
            eps_outer: 1e9,
            max_restarts: 0,
            ..fast_config()
        };
        let r = run_draoa(&scene, &cfg).unwrap();
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn deterministic_and_bounded() {
        let scene = small_scene(1, 2, (1, 2), true);
        let cfg = fast_config();
        let a = run_draoa(&scene, &cfg).unwrap();
        let b = run_draoa(&scene, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.worst_case_sinr <= a.relaxed_bound + 1e-6);
        for w in a.u_chain.windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "{:?}", a.u_chain);
        }
        for p in 0..a.beamformers.p() {
            assert!(model_power(&scene, &a.beamformers, p) <= scene.p_max + 1e-10);
        }
    }

    fn model_power(scene: &Scene, bf: &BeamformerSet, p: usize) -> f64 {
        let model = SignalModel::new(scene).unwrap();
        model.tx_power(p, Amplitudes::Vector(&bf.psi_t))
    }
}
