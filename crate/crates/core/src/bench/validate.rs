//! Invariant suite over random tiny instances: an independent SINR oracle
//! built from the raw received-signal matrices, optimizer monotonicity,
//! relaxation bound, feasibility and rank-one rounding recovery.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{Placement, PointConfig, ReflectionMode, ScenarioSpec};
use crate::draoa::{gaussian_rounding, run_draoa_on, DraoaConfig, RoundingConfig};
use crate::error::{Error, Result};
use crate::scenario::{make_waveforms, shift_matrix, Scene};
use crate::signal::{lift, sinr_per_pair, tx_radiated, Amplitudes, BeamformerSet, PairTerms, SignalModel, SinrReport};

/// Tolerance on the per-panel power cap, relative to the cap.
pub const POWER_TOLERANCE: f64 = 1e-10;
/// Tolerance on the non-decreasing U chain.
pub const CHAIN_TOLERANCE: f64 = 1e-6;
/// Slack allowed between the rounded objective and the relaxed value.
pub const BOUND_TOLERANCE: f64 = 1e-6;

/// Random scene with at most two panels per side, at most four elements
/// per panel and at most three scatterers, one or two of them targets.
pub fn random_tiny_scene(seed: u64) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = rng.random_range(1..=2);
    let q = rng.random_range(1..=2);
    let n = rng.random_range(1..=4);
    let l_t = rng.random_range(1..=2);
    let l_c = rng.random_range(0..=3 - l_t);
    let mut point = || {
        [
            rng.random_range(0.0..2.0),
            rng.random_range(0.0..2.0),
            rng.random_range(0.5..3.0),
        ]
    };
    let targets: Vec<[f64; 3]> = (0..l_t).map(|_| point()).collect();
    let clutters: Vec<[f64; 3]> = (0..l_c).map(|_| point()).collect();
    let spec = ScenarioSpec {
        n_tx: p,
        n_rx: q,
        elements_per_panel: n,
        targets,
        clutters,
        reflections: ReflectionMode::Realized,
        placement: Placement::default(),
        ..Default::default()
    };
    spec.build_scene(
        PointConfig {
            n_tx: p,
            n_rx: q,
            elements_per_panel: n,
        },
        seed,
        0,
    )
}

/// Expected signal energies and noise powers computed from the matrices of
/// the received-signal model: `X_p` from the waveguide and waveforms, the
/// receive combiner `(diag(psi_q) (Q o Gamma))^T`, steering outer products
/// and delay shifts, with unit-variance reflections scaled by their variance.
pub fn brute_force_terms(scene: &Scene, bf: &BeamformerSet) -> Result<PairTerms> {
    let (p_n, q_n, l_n) = (scene.p(), scene.q(), scene.n_scatterers());
    let wg = scene.waveguide();
    let steering = scene.steering_table()?;
    let waveforms = make_waveforms(p_n, scene.snapshots_tx)?;
    let tx_resp: Vec<_> = scene.tx_panels.iter().map(|pn| wg.response(pn)).collect::<Result<_>>()?;
    let rx_resp: Vec<_> = scene.rx_panels.iter().map(|pn| wg.response(pn)).collect::<Result<_>>()?;
    let x: Vec<DMatrix<Complex64>> = (0..p_n)
        .map(|p| {
            let s = waveforms.stacked(p, tx_resp[p].n_feeds());
            tx_radiated(&tx_resp[p], &bf.tx(p).into_owned(), &s)
        })
        .collect::<Result<_>>()?;
    let combiner: Vec<DMatrix<Complex64>> = (0..q_n)
        .map(|q| {
            let d = DMatrix::from_diagonal(&bf.rx(q).map(Complex64::from));
            (d * rx_resp[q].feed_matrix()).transpose()
        })
        .collect();
    let mut signal = Vec::with_capacity(p_n * q_n * l_n);
    let mut noise = Vec::with_capacity(p_n * q_n);
    for p in 0..p_n {
        for q in 0..q_n {
            for l in 0..l_n {
                let a_p: &DVector<Complex64> = &steering.tx[p][l].entries;
                let a_q: &DVector<Complex64> = &steering.rx[q][l].entries;
                let big_a = a_q * a_p.transpose();
                let j = shift_matrix(scene.delay(p, q, l), scene.snapshots_tx, scene.snapshots_rx)?
                    .matrix
                    .map(Complex64::from);
                let v = &combiner[q] * big_a * &x[p] * j;
                signal.push(scene.pair_variance(p, q, l) * v.norm_squared());
            }
            noise.push(scene.noise_power * scene.snapshots_rx as f64 * combiner[q].norm_squared());
        }
    }
    Ok(PairTerms {
        p: p_n,
        q: q_n,
        l: l_n,
        l_t: scene.n_targets(),
        signal,
        noise,
    })
}

/// Beamformer with uniform random amplitudes, scaled per panel onto the
/// power cap when it exceeds it.
pub fn random_feasible_beamformers(model: &SignalModel, rng: &mut impl Rng) -> Result<BeamformerSet> {
    let mut psi_t = DVector::from_fn(model.p * model.n_t, |_, _| rng.random::<f64>());
    let psi_r = DVector::from_fn(model.q * model.n_r, |_, _| rng.random::<f64>());
    for p in 0..model.p {
        let power = model.tx_power(p, Amplitudes::Vector(&psi_t));
        if power > model.p_max {
            let s = (model.p_max / power).sqrt() * (1.0 - 1e-12);
            psi_t.rows_mut(p * model.n_t, model.n_t).scale_mut(s);
        }
    }
    BeamformerSet::new(psi_t, psi_r, model.n_t, model.n_r)
}

/// Describes the first violated constraint, if any.
pub fn feasibility_violation(model: &SignalModel, bf: &BeamformerSet) -> Option<String> {
    if let Some(v) = bf.psi_t.iter().chain(bf.psi_r.iter()).find(|v| !(0.0..=1.0).contains(*v)) {
        return Some(format!("amplitude {v} outside [0, 1]"));
    }
    (0..model.p).find_map(|p| {
        let power = model.tx_power(p, Amplitudes::Vector(&bf.psi_t));
        (power > model.p_max * (1.0 + POWER_TOLERANCE))
            .then(|| format!("panel {p} radiates {power:e} over the cap {:e}", model.p_max))
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.into(),
            passed,
            detail,
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Largest relative error between the model's SINR table and the brute
/// force one over `instances` random scenes and beamformers.
pub fn consistency_error(instances: usize, seed: u64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..instances {
        let scene = random_tiny_scene(seed.wrapping_add(i as u64))?;
        let model = SignalModel::new(&scene)?;
        let bf = random_feasible_beamformers(&model, &mut rng)?;
        let fast = sinr_per_pair(&model, &bf)?;
        let slow = SinrReport::from_terms(&brute_force_terms(&scene, &bf)?)?;
        for (a, b) in fast.per_pair.iter().zip(&slow.per_pair) {
            worst = worst.max(rel_err(*a, *b));
        }
        worst = worst.max(rel_err(fast.worst_case, slow.worst_case));
    }
    Ok(worst)
}

/// Per-run findings of the optimizer checks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerFindings {
    pub runs: usize,
    pub chain_drops: Vec<String>,
    pub bound_violations: Vec<String>,
    pub infeasible: Vec<String>,
    pub over_budget: Vec<String>,
    pub failures: Vec<String>,
}

/// Runs the optimizer on `instances` random tiny scenes and records every
/// monotonicity, bound, feasibility and iteration-budget violation.
pub fn optimizer_findings(instances: usize, seed: u64, config: &DraoaConfig) -> Result<OptimizerFindings> {
    let mut f = OptimizerFindings::default();
    for i in 0..instances {
        let s = seed.wrapping_add(i as u64);
        let scene = random_tiny_scene(s)?;
        let model = SignalModel::new(&scene)?;
        let cfg = DraoaConfig { rng_seed: s, ..*config };
        f.runs += 1;
        let r = match run_draoa_on(&model, &cfg) {
            Ok(r) => r,
            Err(e) => {
                f.failures.push(format!("instance {i}: {e}"));
                continue;
            }
        };
        if let Some(w) = r
            .u_chain
            .windows(2)
            .find(|w| w[1] < w[0] - CHAIN_TOLERANCE * w[0].abs().max(1.0))
        {
            f.chain_drops.push(format!("instance {i}: {} -> {}", w[0], w[1]));
        }
        if r.worst_case_sinr > r.relaxed_bound + BOUND_TOLERANCE {
            f.bound_violations
                .push(format!("instance {i}: {} > {}", r.worst_case_sinr, r.relaxed_bound));
        }
        if let Some(v) = feasibility_violation(&model, &r.beamformers) {
            f.infeasible.push(format!("instance {i}: {v}"));
        }
        let per_pass = r.trace.iter().filter(|t| t.restart == 0).count();
        if per_pass > cfg.max_outer {
            f.over_budget.push(format!("instance {i}: {per_pass} outer iterations"));
        }
    }
    Ok(f)
}

/// Smallest ratio of the rounded objective to the objective of the
/// feasible point a rank-one lifted input was built from.
pub fn rank_one_recovery(instances: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for i in 0..instances {
        let scene = random_tiny_scene(seed.wrapping_add(i as u64))?;
        let model = SignalModel::new(&scene)?;
        let bf = random_feasible_beamformers(&model, &mut rng)?;
        let own = sinr_per_pair(&model, &bf)?.worst_case;
        if !(own > 0.0) {
            continue;
        }
        let out = gaussian_rounding(&lift(&bf.psi_t), &lift(&bf.psi_r), &model, &RoundingConfig::default(), i as u64)?;
        worst = worst.min(out.objective / own);
    }
    if worst.is_finite() {
        Ok(worst)
    } else {
        Err(Error::InvalidConfig("no instance with a positive objective".into()))
    }
}

/// The whole suite with the given instance counts.
pub fn run_suite(consistency: usize, optimizer: usize, seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let err = consistency_error(consistency, seed)?;
    checks.push(Check::new(
        "signal chain matches brute force",
        err < 1e-8,
        format!("{consistency} instances, max relative error {err:.3e}"),
    ));
    let f = optimizer_findings(optimizer, seed, &DraoaConfig::default())?;
    let summary = |v: &Vec<String>| if v.is_empty() { "none".to_string() } else { v.join("; ") };
    checks.push(Check::new("optimizer runs complete", f.failures.is_empty(), summary(&f.failures)));
    checks.push(Check::new(
        "U chain non-decreasing",
        f.chain_drops.is_empty(),
        summary(&f.chain_drops),
    ));
    checks.push(Check::new(
        "rounded objective below relaxed value",
        f.bound_violations.is_empty(),
        summary(&f.bound_violations),
    ));
    checks.push(Check::new(
        "returned beamformers feasible",
        f.infeasible.is_empty(),
        summary(&f.infeasible),
    ));
    checks.push(Check::new(
        "outer iterations within budget",
        f.over_budget.is_empty(),
        summary(&f.over_budget),
    ));
    let ratio = rank_one_recovery(consistency.min(20), seed)?;
    checks.push(Check::new(
        "rank-one rounding recovers the point",
        ratio >= 0.99,
        format!("worst ratio {ratio:.6}"),
    ));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_scenes_respect_size_limits() {
        for s in 0..30 {
            let scene = random_tiny_scene(s).unwrap();
            assert!(scene.p() <= 2 && scene.q() <= 2);
            assert!(scene.tx_panels[0].n_elements() <= 4);
            assert!(scene.n_scatterers() <= 3 && scene.n_targets() >= 1);
        }
    }

    #[test]
    fn brute_force_agrees_on_a_few_instances() {
        assert!(consistency_error(5, 11).unwrap() < 1e-8);
    }

    #[test]
    fn infeasible_point_is_reported() {
        let scene = random_tiny_scene(3).unwrap();
        let model = SignalModel::new(&scene).unwrap();
        let mut bf = BeamformerSet::uniform(model.p, model.q, model.n_t, model.n_r, 0.0).unwrap();
        assert!(feasibility_violation(&model, &bf).is_none());
        bf.psi_r[0] = 1.5;
        assert!(feasibility_violation(&model, &bf).unwrap().contains("outside"));
    }
}
