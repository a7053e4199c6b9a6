//! Distributed phased-MIMO baseline and the cost/power equivalence used to
//! compare it against RHS subarrays.

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rhs::{grid_coordinates, near_square_shape, ElementGrid, RhsPanel};
use crate::scenario::{make_waveforms, shift_matrix, steering_vector, Scene};
use crate::signal::{PairTerms, SinrReport};

/// Power and hardware-cost ratios between RHS and phased elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    /// Fraction of consumed power an RHS radiates.
    pub eta_rhs: f64,
    /// Fraction of consumed power a phased array radiates.
    pub eta_phased: f64,
    /// Cost of one phased element over one RHS element.
    pub delta: f64,
    pub phased_unit_cost: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            eta_rhs: 0.25,
            eta_phased: 0.04,
            delta: 10.0,
            phased_unit_cost: 10.0,
        }
    }
}

impl CostModel {
    pub fn with_delta(delta: f64) -> Self {
        CostModel {
            delta,
            ..CostModel::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0 && v <= 1.0;
        if !ok(self.eta_rhs) || !ok(self.eta_phased) {
            return Err(Error::InvalidConfig("efficiencies must lie in (0, 1]".into()));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::InvalidConfig("cost ratio must be > 0".into()));
        }
        if !(self.phased_unit_cost.is_finite() && self.phased_unit_cost > 0.0) {
            return Err(Error::InvalidConfig("phased unit cost must be > 0".into()));
        }
        Ok(())
    }

    pub fn rhs_unit_cost(&self) -> f64 {
        self.phased_unit_cost / self.delta
    }
}

/// Per-panel element counts and radiated powers at equal cost and power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalentConfig {
    pub n_rhs_per_panel: usize,
    pub n_phased_per_panel: usize,
    /// Radiated power of each RHS transmit panel.
    pub rhs_radiated: f64,
    /// Radiated power of each phased transmit subarray.
    pub phased_radiated: f64,
    pub rhs_cost: f64,
    pub phased_cost: f64,
}

fn floor_count(x: f64) -> usize {
    (x + 1e-9).floor().max(0.0) as usize
}

/// Sizes both array types for a per-panel cost budget and a total consumed
/// power budget shared by `p` transmit panels.
pub fn equivalent_config(
    cost_budget: f64,
    power_budget: f64,
    cost: &CostModel,
    p: usize,
    _q: usize,
) -> Result<EquivalentConfig> {
    cost.validate()?;
    if !(cost_budget.is_finite() && cost_budget > 0.0) || !(power_budget.is_finite() && power_budget > 0.0) {
        return Err(Error::BudgetTooSmall("budgets must be positive".into()));
    }
    if p == 0 {
        return Err(Error::InvalidConfig("need at least one transmit panel".into()));
    }
    let n_phased = floor_count(cost_budget / cost.phased_unit_cost);
    let n_rhs = floor_count(cost_budget / cost.rhs_unit_cost());
    if n_phased == 0 || n_rhs == 0 {
        return Err(Error::BudgetTooSmall(format!(
            "cost {cost_budget} buys no phased element at unit cost {}",
            cost.phased_unit_cost
        )));
    }
    Ok(EquivalentConfig {
        n_rhs_per_panel: n_rhs,
        n_phased_per_panel: n_phased,
        rhs_radiated: cost.eta_rhs * power_budget / p as f64,
        phased_radiated: cost.eta_phased * power_budget / p as f64,
        rhs_cost: n_rhs as f64 * cost.rhs_unit_cost(),
        phased_cost: n_phased as f64 * cost.phased_unit_cost,
    })
}

/// Phase-only subarray with the same grid conventions as an RHS panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasedSubarray {
    pub n_x: usize,
    pub n_y: usize,
    pub element_spacing: f64,
    pub center: Vector3<f64>,
    pub orientation: [Vector3<f64>; 2],
    /// Unit-modulus element weights.
    pub weights: DVector<Complex64>,
}

impl PhasedSubarray {
    pub fn new(n_x: usize, n_y: usize, element_spacing: f64, center: Vector3<f64>) -> Result<Self> {
        if n_x == 0 || n_y == 0 || !(element_spacing.is_finite() && element_spacing > 0.0) {
            return Err(Error::InvalidPanel("phased subarray needs elements and spacing > 0".into()));
        }
        Ok(PhasedSubarray {
            n_x,
            n_y,
            element_spacing,
            center,
            orientation: [Vector3::x(), Vector3::y()],
            weights: DVector::from_element(n_x * n_y, Complex64::new(1.0, 0.0)),
        })
    }

    /// Same placement as `panel`, `n` elements on a near-square grid.
    pub fn matching(panel: &RhsPanel, n: usize, element_spacing: f64) -> Result<Self> {
        let (nx, ny) = near_square_shape(n);
        let mut s = PhasedSubarray::new(nx, ny, element_spacing, panel.center)?;
        s.orientation = panel.orientation;
        Ok(s)
    }

    pub fn n_elements(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn set_weights(&mut self, w: DVector<Complex64>) -> Result<()> {
        if w.len() != self.n_elements() {
            return Err(Error::DimensionMismatch("weight count differs from element count".into()));
        }
        if w.iter().any(|c| (c.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::InvalidBeamformer("phased weights must be unit modulus".into()));
        }
        self.weights = w;
        Ok(())
    }
}

impl ElementGrid for PhasedSubarray {
    fn center(&self) -> Vector3<f64> {
        self.center
    }

    fn element_offsets(&self) -> Vec<Vector3<f64>> {
        grid_coordinates(self.n_x, self.n_y, self.element_spacing)
            .into_iter()
            .map(|[x, y]| self.orientation[0] * x + self.orientation[1] * y)
            .collect()
    }
}

/// A scene whose panels are replaced by phased subarrays.
#[derive(Debug, Clone)]
pub struct PhasedScene {
    /// Scatterers, constants, variances and delays.
    pub scene: Scene,
    pub tx: Vec<PhasedSubarray>,
    pub rx: Vec<PhasedSubarray>,
    /// Radiated power of each transmit subarray.
    pub radiated_power: f64,
}

impl PhasedScene {
    /// Phased subarrays of `n` elements at the RHS panel placements, spaced
    /// half a wavelength apart.
    pub fn from_scene(scene: &Scene, n: usize, radiated_power: f64) -> Result<Self> {
        scene.validate()?;
        if n == 0 {
            return Err(Error::BudgetTooSmall("phased subarray needs at least one element".into()));
        }
        let spacing = scene.wavelength / 2.0;
        let build = |panels: &[RhsPanel]| -> Result<Vec<PhasedSubarray>> {
            panels.iter().map(|p| PhasedSubarray::matching(p, n, spacing)).collect()
        };
        Ok(PhasedScene {
            tx: build(&scene.tx_panels)?,
            rx: build(&scene.rx_panels)?,
            scene: scene.clone(),
            radiated_power,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiveRule {
    /// Conjugate steering toward the selected target.
    #[default]
    Conventional,
    /// MVDR weights toward the selected target, projected onto unit modulus.
    Adaptive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhasedOutcome {
    pub tx_weights: Vec<DVector<Complex64>>,
    /// Common element excitation amplitude `sqrt(P_rad / N)`.
    pub tx_excitation: f64,
    pub tx_targets: Vec<usize>,
    pub rx_weights: Vec<DVector<Complex64>>,
    pub rx_targets: Vec<usize>,
    pub report: SinrReport,
}

fn unit_phase(v: &DVector<Complex64>) -> DVector<Complex64> {
    v.map(|c| if c.norm() > 0.0 { c / c.norm() } else { Complex64::new(1.0, 0.0) })
}

struct PhasedTables {
    /// `|a_p^l^T x_p|^2`, `[p][l]`.
    tx_gain: Vec<Vec<f64>>,
    /// `sigma^2 ||s_p J||^2`, indexed `(p, q, l)`.
    weight: Vec<f64>,
}

fn tables(ps: &PhasedScene, tx_weights: &[DVector<Complex64>], excitation: f64) -> Result<PhasedTables> {
    let scene = &ps.scene;
    let (p, q, l) = (ps.tx.len(), ps.rx.len(), scene.n_scatterers());
    let mut tx_gain = vec![vec![0.0; l]; p];
    for (pi, sub) in ps.tx.iter().enumerate() {
        for (li, s) in scene.scatterers.iter().enumerate() {
            let a = steering_vector(sub, &s.position, scene.wavelength)?;
            let x = &tx_weights[pi] * Complex64::from(excitation);
            tx_gain[pi][li] = (a.transpose() * x)[(0, 0)].norm_sqr();
        }
    }
    let wf = make_waveforms(p, scene.snapshots_tx)?;
    let mut weight = Vec::with_capacity(p * q * l);
    for pi in 0..p {
        for qi in 0..q {
            for li in 0..l {
                let j = shift_matrix(scene.delay(pi, qi, li), scene.snapshots_tx, scene.snapshots_rx)?;
                let sj = wf.signals[pi].transpose() * j.matrix.map(Complex64::from);
                weight.push(scene.pair_variance(pi, qi, li) * sj.norm_squared());
            }
        }
    }
    Ok(PhasedTables { tx_gain, weight })
}

fn rx_steering(ps: &PhasedScene) -> Result<Vec<Vec<DVector<Complex64>>>> {
    ps.rx
        .iter()
        .map(|sub| {
            ps.scene
                .scatterers
                .iter()
                .map(|s| steering_vector(sub, &s.position, ps.scene.wavelength))
                .collect()
        })
        .collect()
}

fn terms(ps: &PhasedScene, t: &PhasedTables, rx_gain: &[Vec<f64>], rx_norm: &[f64]) -> PairTerms {
    let scene = &ps.scene;
    let (p, q, l) = (ps.tx.len(), ps.rx.len(), scene.n_scatterers());
    let mut signal = Vec::with_capacity(p * q * l);
    let mut noise = Vec::with_capacity(p * q);
    for pi in 0..p {
        for qi in 0..q {
            for li in 0..l {
                signal.push(t.weight[(pi * q + qi) * l + li] * t.tx_gain[pi][li] * rx_gain[qi][li]);
            }
            noise.push(scene.noise_power * scene.snapshots_rx as f64 * rx_norm[qi]);
        }
    }
    PairTerms {
        p,
        q,
        l,
        l_t: scene.n_targets(),
        signal,
        noise,
    }
}

/// SINR of a phased configuration with explicit weights.
pub fn phased_sinr(
    ps: &PhasedScene,
    tx_weights: &[DVector<Complex64>],
    rx_weights: &[DVector<Complex64>],
) -> Result<SinrReport> {
    let n_t = ps.tx[0].n_elements();
    let excitation = (ps.radiated_power / n_t as f64).sqrt();
    let t = tables(ps, tx_weights, excitation)?;
    let steer = rx_steering(ps)?;
    let rx_gain: Vec<Vec<f64>> = steer
        .iter()
        .zip(rx_weights)
        .map(|(a, w)| a.iter().map(|al| (w.transpose() * al)[(0, 0)].norm_sqr()).collect())
        .collect();
    let rx_norm: Vec<f64> = rx_weights.iter().map(|w| w.norm_squared()).collect();
    SinrReport::from_terms(&terms(ps, &t, &rx_gain, &rx_norm))
}

/// Conjugate transmit steering with round-robin target assignment; receive
/// weights chosen jointly over per-subarray target assignments to maximize
/// the worst-case average SINR.
pub fn phased_mimo_beamform(ps: &PhasedScene, rule: ReceiveRule) -> Result<PhasedOutcome> {
    let scene = &ps.scene;
    let l_t = scene.n_targets();
    let n_t = ps.tx[0].n_elements();
    let excitation = (ps.radiated_power / n_t as f64).sqrt();

    let tx_targets: Vec<usize> = (0..ps.tx.len()).map(|p| p % l_t).collect();
    let tx_weights: Vec<DVector<Complex64>> = ps
        .tx
        .iter()
        .zip(&tx_targets)
        .map(|(sub, &l)| {
            steering_vector(sub, &scene.scatterers[l].position, scene.wavelength).map(|a| a.map(|c| c.conj()))
        })
        .collect::<Result<_>>()?;
    let t = tables(ps, &tx_weights, excitation)?;
    let steer = rx_steering(ps)?;

    // Candidate receive weights per subarray, one per target.
    let candidates: Vec<Vec<DVector<Complex64>>> = steer
        .iter()
        .enumerate()
        .map(|(qi, a)| {
            (0..l_t)
                .map(|lt| match rule {
                    ReceiveRule::Conventional => a[lt].map(|c| c.conj()),
                    ReceiveRule::Adaptive => mvdr_weights(ps, &t, a, qi, lt),
                })
                .collect()
        })
        .collect();

    let q = ps.rx.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut assign = vec![0usize; q];
    loop {
        let rx_gain: Vec<Vec<f64>> = (0..q)
            .map(|qi| {
                let w = &candidates[qi][assign[qi]];
                steer[qi].iter().map(|al| (w.transpose() * al)[(0, 0)].norm_sqr()).collect()
            })
            .collect();
        let rx_norm: Vec<f64> = (0..q).map(|qi| candidates[qi][assign[qi]].norm_squared()).collect();
        let v = terms(ps, &t, &rx_gain, &rx_norm).objective();
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, assign.clone()));
        }
        // Next assignment in lexicographic order.
        let mut k = 0;
        while k < q {
            assign[k] += 1;
            if assign[k] < l_t {
                break;
            }
            assign[k] = 0;
            k += 1;
        }
        if k == q {
            break;
        }
    }
    let rx_targets = best.expect("at least one assignment").1;
    let rx_weights: Vec<_> = rx_targets
        .iter()
        .enumerate()
        .map(|(qi, &lt)| candidates[qi][lt].clone())
        .collect();
    let report = phased_sinr(ps, &tx_weights, &rx_weights)?;
    Ok(PhasedOutcome {
        tx_weights,
        tx_excitation: excitation,
        tx_targets,
        rx_weights,
        rx_targets,
        report,
    })
}

fn mvdr_weights(
    ps: &PhasedScene,
    t: &PhasedTables,
    steer: &[DVector<Complex64>],
    qi: usize,
    lt: usize,
) -> DVector<Complex64> {
    let scene = &ps.scene;
    let (p, q, l) = (ps.tx.len(), ps.rx.len(), scene.n_scatterers());
    let n = steer[0].len();
    let mut r = DMatrix::<Complex64>::identity(n, n) * Complex64::from(scene.noise_power * scene.snapshots_rx as f64);
    for li in (0..l).filter(|li| *li != lt) {
        let c: f64 = (0..p).map(|pi| t.weight[(pi * q + qi) * l + li] * t.tx_gain[pi][li]).sum();
        r += &steer[li] * steer[li].adjoint() * Complex64::from(c);
    }
    let v = r
        .cholesky()
        .map(|ch| ch.solve(&steer[lt]))
        .unwrap_or_else(|| steer[lt].clone());
    unit_phase(&v.map(|c| c.conj()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scatterer;

    fn scene_with(n_panels: (usize, usize), targets: &[Vector3<f64>], clutter: Option<Vector3<f64>>) -> Scene {
        let panel = |c: Vector3<f64>| RhsPanel::new(1, 1, 0.01 / 3.0, 1, c).unwrap();
        let mut scatterers: Vec<_> = targets.iter().map(|p| Scatterer::target(*p, 1.6e-5)).collect();
        if let Some(c) = clutter {
            scatterers.push(Scatterer::clutter(c, 1.6e-5));
        }
        Scene {
            tx_panels: (0..n_panels.0).map(|i| panel(Vector3::new(0.5 * i as f64, 0.0, 0.0))).collect(),
            rx_panels: (0..n_panels.1).map(|i| panel(Vector3::new(0.0, 0.5 * i as f64 + 0.3, 0.0))).collect(),
            scatterers,
            wavelength: 0.01,
            carrier: 30e9,
            refractive_index: 3f64.sqrt(),
            attenuation: 5.0,
            noise_power: 4e-6,
            p_max: 4e-3,
            snapshots_tx: 4,
            snapshots_rx: 4,
            rng_seed: 1,
        }
    }

    #[test]
    fn equivalent_config_examples() {
        let c = equivalent_config(10.0 * 4.0, 16e-3, &CostModel::with_delta(10.0), 1, 1).unwrap();
        assert_eq!((c.n_phased_per_panel, c.n_rhs_per_panel), (4, 40));
        assert!((c.rhs_cost - c.phased_cost).abs() < 1e-12);
        let c = equivalent_config(30.0, 16e-3, &CostModel::with_delta(1.0), 1, 1).unwrap();
        assert_eq!(c.n_phased_per_panel, c.n_rhs_per_panel);
        let c = equivalent_config(10.0, 16e-3, &CostModel::default(), 1, 1).unwrap();
        assert!((c.rhs_radiated - 4e-3).abs() < 1e-15);
        assert!((c.phased_radiated - 0.64e-3).abs() < 1e-15);
        let c = equivalent_config(10.0, 32e-3, &CostModel::default(), 2, 2).unwrap();
        assert!((c.rhs_radiated - 4e-3).abs() < 1e-15);
        assert!(matches!(
            equivalent_config(5.0, 16e-3, &CostModel::default(), 1, 1),
            Err(Error::BudgetTooSmall(_))
        ));
    }

    #[test]
    fn single_element_matches_scalar_chain() {
        let tgt = Vector3::new(0.3, 0.4, 1.0);
        let scene = scene_with((1, 1), &[tgt], None);
        let ps = PhasedScene::from_scene(&scene, 1, 0.64e-3).unwrap();
        let out = phased_mimo_beamform(&ps, ReceiveRule::Conventional).unwrap();
        assert!((out.tx_weights[0][0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        let expected = 1.6e-5 * 0.64e-3 / (4e-6 * 4.0);
        assert!((out.report.worst_case - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn broadside_receive_gain_is_coherent() {
        let tgt = Vector3::new(0.0, 0.0, 3.0);
        let scene = scene_with((1, 1), &[tgt], None);
        let gain = |n: usize| {
            let ps = PhasedScene::from_scene(&scene, n, 1e-3).unwrap();
            let steer = rx_steering(&ps).unwrap();
            let w = steer[0][0].map(|c| c.conj());
            (w.transpose() * &steer[0][0])[(0, 0)].norm_sqr()
        };
        assert!((gain(1) - 1.0).abs() < 1e-12);
        assert!((gain(4) - 16.0).abs() < 1e-9);
    }

    #[test]
    fn weights_are_unit_modulus_and_phase_invariant() {
        let scene = scene_with(
            (2, 2),
            &[Vector3::new(0.5, 2.0, 1.0), Vector3::new(1.0, 1.5, 1.0)],
            Some(Vector3::new(1.0, 2.0, 2.0)),
        );
        let ps = PhasedScene::from_scene(&scene, 4, 0.64e-3).unwrap();
        for rule in [ReceiveRule::Conventional, ReceiveRule::Adaptive] {
            let out = phased_mimo_beamform(&ps, rule).unwrap();
            for w in out.tx_weights.iter().chain(&out.rx_weights) {
                assert!(w.iter().all(|c| (c.norm() - 1.0).abs() < 1e-12));
            }
            let rot = Complex64::from_polar(1.0, 0.7);
            let tx: Vec<_> = out.tx_weights.iter().map(|w| w * rot).collect();
            let rx: Vec<_> = out.rx_weights.iter().map(|w| w * rot.conj()).collect();
            let r = phased_sinr(&ps, &tx, &rx).unwrap();
            for (a, b) in r.per_pair.iter().zip(&out.report.per_pair) {
                assert!((a - b).abs() < 1e-10 * b.max(1e-300));
            }
        }
    }

    #[test]
    fn grid_matches_rhs_conventions() {
        let s = PhasedSubarray::new(2, 1, 0.005, Vector3::zeros()).unwrap();
        let pos = s.element_positions();
        assert!((pos[0].x + 0.0025).abs() < 1e-15 && (pos[1].x - 0.0025).abs() < 1e-15);
        let mut s = s;
        assert!(s.set_weights(DVector::from_element(2, Complex64::new(0.5, 0.0))).is_err());
    }
}
