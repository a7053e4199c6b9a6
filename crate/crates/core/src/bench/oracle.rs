//! Exhaustive grid search over amplitudes for tiny scenes, used to check
//! how close the optimizer gets to the global optimum.

use std::time::Instant;

use nalgebra::DVector;

use super::spec::{PointConfig, ReflectionMode, ScenarioSpec};
use crate::draoa::{run_draoa_on, DraoaConfig, DraoaResult};
use crate::error::{Error, Result};
use crate::scenario::Scene;
use crate::signal::{Amplitudes, BeamformerSet, PairTerms, SignalModel};

/// Largest number of grid points allowed per side.
pub const MAX_GRID_POINTS: usize = 2_000_000;

#[derive(Debug, Clone)]
pub struct GridOptimum {
    pub beamformers: BeamformerSet,
    pub objective: f64,
    pub tx_points: usize,
    pub tx_feasible: usize,
    pub rx_points: usize,
}

/// Single transmit and receive panel with two elements each, one target and
/// one clutter, and a power cap at half the full-amplitude power so the
/// constraint binds.
pub fn oracle_scene() -> Result<Scene> {
    let spec = ScenarioSpec {
        n_tx: 1,
        n_rx: 1,
        elements_per_panel: 2,
        targets: vec![[0.5, 2.0, 1.0]],
        clutters: vec![[1.0, 2.0, 2.0]],
        reflections: ReflectionMode::Expected,
        placement: super::spec::Placement {
            tx_centers: Some(vec![[0.2, 0.3, 0.0]]),
            rx_centers: Some(vec![[1.6, 0.4, 0.0]]),
            ..Default::default()
        },
        ..Default::default()
    };
    let point = PointConfig {
        n_tx: 1,
        n_rx: 1,
        elements_per_panel: 2,
    };
    let mut scene = spec.build_scene(point, 0, 0)?;
    let model = SignalModel::new(&scene)?;
    let full = DVector::from_element(model.n_t, 1.0);
    scene.p_max = 0.5 * model.tx_power(0, Amplitudes::Vector(&full));
    Ok(scene)
}

fn grid_levels(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidConfig(format!("grid step {step} outside (0, 1]")));
    }
    let n = (1.0 / step).round() as usize;
    Ok((0..=n).map(|i| (i as f64 * step).min(1.0)).collect())
}

/// Calls `f` with every point of `levels^dim`.
fn for_each_point(levels: &[f64], dim: usize, mut f: impl FnMut(&DVector<f64>)) -> Result<usize> {
    let count = levels
        .len()
        .checked_pow(dim as u32)
        .filter(|c| *c <= MAX_GRID_POINTS)
        .ok_or_else(|| Error::InvalidConfig(format!("grid of {} levels in {dim} dimensions is too large", levels.len())))?;
    let mut idx = vec![0usize; dim];
    let mut x = DVector::from_element(dim, levels[0]);
    for _ in 0..count {
        f(&x);
        for d in 0..dim {
            idx[d] += 1;
            if idx[d] < levels.len() {
                x[d] = levels[idx[d]];
                break;
            }
            idx[d] = 0;
            x[d] = levels[0];
        }
    }
    Ok(count)
}

/// Maximizes the worst-case average SINR over all amplitude vectors on a
/// grid with the given step, subject to the per-panel power caps.
pub fn grid_search(model: &SignalModel, step: f64) -> Result<GridOptimum> {
    let levels = grid_levels(step)?;
    let mut tx: Vec<(DVector<f64>, Vec<f64>)> = Vec::new();
    let tx_points = for_each_point(&levels, model.p * model.n_t, |x| {
        let feasible = (0..model.p).all(|p| model.tx_power(p, Amplitudes::Vector(x)) <= model.p_max * (1.0 + 1e-12));
        if feasible {
            let g = (0..model.p)
                .flat_map(|p| (0..model.l).map(move |l| (p, l)))
                .map(|(p, l)| model.tx_gain(p, l, Amplitudes::Vector(x)))
                .collect();
            tx.push((x.clone(), g));
        }
    })?;
    let mut rx: Vec<(DVector<f64>, Vec<f64>, Vec<f64>)> = Vec::new();
    let rx_points = for_each_point(&levels, model.q * model.n_r, |x| {
        let g = (0..model.q)
            .flat_map(|q| (0..model.l).map(move |l| (q, l)))
            .map(|(q, l)| model.rx_gain(q, l, Amplitudes::Vector(x)))
            .collect();
        let noise = (0..model.p)
            .flat_map(|p| (0..model.q).map(move |q| (p, q)))
            .map(|(p, q)| model.noise(p, q, Amplitudes::Vector(x)))
            .collect();
        rx.push((x.clone(), g, noise));
    })?;
    let mut terms = PairTerms {
        p: model.p,
        q: model.q,
        l: model.l,
        l_t: model.l_t,
        signal: vec![0.0; model.p * model.q * model.l],
        noise: vec![0.0; model.p * model.q],
    };
    let mut best: Option<(usize, usize, f64)> = None;
    for (i, (_, tg)) in tx.iter().enumerate() {
        for (j, (_, rg, noise)) in rx.iter().enumerate() {
            for p in 0..model.p {
                for q in 0..model.q {
                    for l in 0..model.l {
                        terms.signal[(p * model.q + q) * model.l + l] =
                            model.weight(p, q, l) * tg[p * model.l + l] * rg[q * model.l + l];
                    }
                }
            }
            terms.noise.copy_from_slice(noise);
            let v = terms.objective();
            if v.is_finite() && best.is_none_or(|b| v > b.2) {
                best = Some((i, j, v));
            }
        }
    }
    let (i, j, objective) = best.ok_or_else(|| Error::InvalidConfig("no feasible grid point".into()))?;
    Ok(GridOptimum {
        beamformers: BeamformerSet::new(tx[i].0.clone(), rx[j].0.clone(), model.n_t, model.n_r)?,
        objective,
        tx_points,
        tx_feasible: tx.len(),
        rx_points,
    })
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub grid: GridOptimum,
    pub draoa: DraoaResult,
    /// Optimizer objective over the grid optimum.
    pub ratio: f64,
    pub grid_seconds: f64,
    pub draoa_seconds: f64,
}

/// Runs the optimizer and the grid search on the same scene.
pub fn compare_with_grid(scene: &Scene, step: f64, config: &DraoaConfig) -> Result<OracleReport> {
    let model = SignalModel::new(scene)?;
    let started = Instant::now();
    let grid = grid_search(&model, step)?;
    let grid_seconds = started.elapsed().as_secs_f64();
    let started = Instant::now();
    let draoa = run_draoa_on(&model, config)?;
    let draoa_seconds = started.elapsed().as_secs_f64();
    Ok(OracleReport {
        ratio: draoa.worst_case_sinr / grid.objective,
        grid,
        draoa,
        grid_seconds,
        draoa_seconds,
    })
}
