//! Experiment specification: TOML schema, defaults, validation and hashing.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{CostModel, ReceiveRule};
use crate::draoa::DraoaConfig;
use crate::error::{Error, Result};
use crate::rhs::{near_square_shape, RhsPanel};
use crate::scenario::{draw_reflections, sample_positions, trial_rng, Scatterer, Scene, StreamPurpose};

/// How reflection statistics enter each trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectionMode {
    /// Design against the variances, score against the trial's drawn
    /// `|beta|^2`.
    #[default]
    Fading,
    /// Design and score against the drawn `|beta|^2`.
    Realized,
    /// Design and score against the variances.
    Expected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Placement {
    pub box_min: [f64; 3],
    pub box_max: [f64; 3],
    /// Fixed centers; when set they replace the random draw.
    pub tx_centers: Option<Vec<[f64; 3]>>,
    pub rx_centers: Option<Vec<[f64; 3]>>,
}

impl Default for Placement {
    fn default() -> Self {
        Placement {
            box_min: [0.0, 0.0, 0.0],
            box_max: [2.0, 2.0, 0.0],
            tx_centers: None,
            rx_centers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub carrier_hz: f64,
    /// Defaults to `c / carrier`, rounded to 1 cm at 30 GHz.
    pub wavelength: f64,
    pub p_max: f64,
    /// RHS element pitch in wavelengths.
    pub spacing_wavelengths: f64,
    pub n_feeds: usize,
    pub refractive_index: f64,
    pub attenuation: f64,
    pub noise_power: f64,
    pub snr_db: f64,
    pub inr_db: f64,
    pub snapshots_tx: usize,
    pub snapshots_rx: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    pub elements_per_panel: usize,
    pub targets: Vec<[f64; 3]>,
    pub clutters: Vec<[f64; 3]>,
    pub reflections: ReflectionMode,
    pub placement: Placement,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            carrier_hz: 30e9,
            wavelength: 0.01,
            p_max: 4e-3,
            spacing_wavelengths: 1.0 / 3.0,
            n_feeds: 5,
            refractive_index: 3f64.sqrt(),
            attenuation: 5.0,
            noise_power: 4e-6,
            snr_db: 6.0,
            inr_db: 6.0,
            snapshots_tx: 16,
            snapshots_rx: 16,
            n_tx: 2,
            n_rx: 2,
            elements_per_panel: 16,
            targets: vec![[0.5, 2.0, 1.0], [1.0, 1.5, 1.0]],
            clutters: vec![[1.0, 2.0, 2.0]],
            reflections: ReflectionMode::Fading,
            placement: Placement::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Per-panel hardware cost in RHS-element units.
    CostBudget,
    /// Number of transmit panels; `series` lists receive-panel counts.
    NTx,
    /// Number of receive panels; `series` optionally lists fixed element totals.
    NRx,
    /// Total element count; `series` lists receive-panel counts.
    NSumAllocation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default)]
    pub series: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSpec {
    pub enabled: bool,
    pub deltas: Vec<f64>,
    pub rule: ReceiveRule,
    pub cost: CostModel,
    /// Consumed power per transmit panel.
    pub consumed_power: f64,
}

impl Default for BaselineSpec {
    fn default() -> Self {
        BaselineSpec {
            enabled: false,
            deltas: vec![6.0, 8.0, 10.0],
            rule: ReceiveRule::Conventional,
            cost: CostModel::default(),
            consumed_power: 16e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub trace: bool,
    pub overwrite: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: PathBuf::from("results"),
            trace: true,
            overwrite: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_name")]
    pub name: String,
    /// Free text copied into the output metadata.
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub scenario: ScenarioSpec,
    pub sweep: SweepSpec,
    #[serde(default)]
    pub draoa: DraoaConfig,
    #[serde(default)]
    pub baseline: BaselineSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_trials() -> usize {
    20
}

fn default_workers() -> usize {
    1
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Spec(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Spec(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        let s = &self.scenario;
        if s.targets.is_empty() {
            return bad("scenario.targets must not be empty".into());
        }
        for (name, v) in [
            ("carrier_hz", s.carrier_hz),
            ("wavelength", s.wavelength),
            ("p_max", s.p_max),
            ("spacing_wavelengths", s.spacing_wavelengths),
            ("refractive_index", s.refractive_index),
            ("noise_power", s.noise_power),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("scenario.{name} must be > 0"));
            }
        }
        if !(s.attenuation.is_finite() && s.attenuation >= 0.0) {
            return bad("scenario.attenuation must be >= 0".into());
        }
        if s.n_feeds == 0 || s.n_tx == 0 || s.n_rx == 0 || s.elements_per_panel == 0 {
            return bad("scenario counts must be at least 1".into());
        }
        if s.snapshots_rx < s.snapshots_tx {
            return bad("scenario.snapshots_rx must be >= snapshots_tx".into());
        }
        let sw = &self.sweep;
        if sw.values.is_empty() {
            return bad("sweep.values must not be empty".into());
        }
        if sw.values.windows(2).any(|w| w[1] <= w[0]) {
            return bad("sweep.values must be strictly increasing".into());
        }
        if sw.series.windows(2).any(|w| w[1] <= w[0]) {
            return bad("sweep.series must be strictly increasing".into());
        }
        if sw.values.iter().chain(&sw.series).any(|v| !(v.is_finite() && *v >= 1.0)) {
            return bad("sweep values must be finite and >= 1".into());
        }
        let integral = |v: &f64| v.fract() == 0.0;
        let counts_integral = match sw.axis {
            SweepAxis::CostBudget => sw.values.iter().all(integral),
            _ => sw.values.iter().chain(&sw.series).all(integral),
        };
        if !counts_integral {
            return bad("sweep counts must be whole numbers".into());
        }
        if matches!(sw.axis, SweepAxis::NSumAllocation) && sw.series.is_empty() {
            return bad("n_sum_allocation needs sweep.series (receive-panel counts)".into());
        }
        if self.baseline.enabled {
            self.baseline.cost.validate()?;
            if self.baseline.deltas.is_empty() || self.baseline.deltas.iter().any(|d| !(*d > 0.0)) {
                return bad("baseline.deltas must be positive".into());
            }
        }
        self.draoa.validate().map_err(|e| Error::Spec(e.to_string()))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring fields that do not
    /// affect results (output location, worker count).
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output = OutputSpec::default();
        canon.workers = 1;
        let json = serde_json::to_string(&canon).expect("spec serializes");
        hex_digest(json.as_bytes())
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentSpec::from_toml(&text).map_err(|e| match e {
        Error::Spec(m) => Error::Spec(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// One concrete configuration on the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub elements_per_panel: usize,
}

impl ScenarioSpec {
    pub fn element_spacing(&self) -> f64 {
        self.spacing_wavelengths * self.wavelength
    }

    pub fn target_var(&self) -> f64 {
        self.noise_power * 10f64.powf(self.snr_db / 10.0)
    }

    pub fn clutter_var(&self) -> f64 {
        self.noise_power * 10f64.powf(self.inr_db / 10.0)
    }

    fn centers(&self, seed: u64, trial: u64, count_tx: usize, count_rx: usize) -> Result<(Vec<Vector3<f64>>, Vec<Vector3<f64>>)> {
        let pl = &self.placement;
        // A fixed-size pool keeps the first panels identical as counts grow.
        let pool = count_tx.max(count_rx).max(8);
        let mut rng = trial_rng(seed, trial, StreamPurpose::Geometry);
        let lo = Vector3::from(pl.box_min);
        let hi = Vector3::from(pl.box_max);
        let tx_pool = sample_positions(pool, lo, hi, &mut rng);
        let rx_pool = sample_positions(pool, lo, hi, &mut rng);
        let pick = |fixed: &Option<Vec<[f64; 3]>>, pool: Vec<Vector3<f64>>, n: usize, what: &str| -> Result<Vec<Vector3<f64>>> {
            match fixed {
                Some(c) if c.len() < n => Err(Error::Spec(format!(
                    "placement lists {} {what} centers, {n} needed",
                    c.len()
                ))),
                Some(c) => Ok(c.iter().take(n).map(|v| Vector3::from(*v)).collect()),
                None => Ok(pool.into_iter().take(n).collect()),
            }
        };
        Ok((
            pick(&pl.tx_centers, tx_pool, count_tx, "transmit")?,
            pick(&pl.rx_centers, rx_pool, count_rx, "receive")?,
        ))
    }

    /// Scene the beamformers are designed on.
    pub fn build_scene(&self, point: PointConfig, seed: u64, trial: u64) -> Result<Scene> {
        self.scene_with(point, seed, trial, self.reflections == ReflectionMode::Realized)
    }

    /// Scene the designed beamformers are scored on.
    pub fn evaluation_scene(&self, point: PointConfig, seed: u64, trial: u64) -> Result<Scene> {
        self.scene_with(point, seed, trial, self.reflections != ReflectionMode::Expected)
    }

    fn scene_with(&self, point: PointConfig, seed: u64, trial: u64, realized: bool) -> Result<Scene> {
        let (tx_c, rx_c) = self.centers(seed, trial, point.n_tx, point.n_rx)?;
        let (nx, ny) = near_square_shape(point.elements_per_panel);
        let spacing = self.element_spacing();
        let mk = |c: &Vector3<f64>| RhsPanel::new(nx, ny, spacing, self.n_feeds, *c);
        let mut scatterers: Vec<Scatterer> = self
            .targets
            .iter()
            .map(|p| Scatterer::target(Vector3::from(*p), self.target_var()))
            .collect();
        scatterers.extend(
            self.clutters
                .iter()
                .map(|p| Scatterer::clutter(Vector3::from(*p), self.clutter_var())),
        );
        let mut scene = Scene {
            tx_panels: tx_c.iter().map(mk).collect::<Result<_>>()?,
            rx_panels: rx_c.iter().map(mk).collect::<Result<_>>()?,
            scatterers,
            wavelength: self.wavelength,
            carrier: self.carrier_hz,
            refractive_index: self.refractive_index,
            attenuation: self.attenuation,
            noise_power: self.noise_power,
            p_max: self.p_max,
            snapshots_tx: self.snapshots_tx.max(point.n_tx),
            snapshots_rx: self.snapshots_rx.max(self.snapshots_tx.max(point.n_tx)),
            rng_seed: seed,
        };
        if realized {
            let beta = draw_reflections(&scene, trial);
            for (l, s) in scene.scatterers.iter_mut().enumerate() {
                s.per_pair_var = Some(
                    (0..point.n_tx)
                        .map(|p| (0..point.n_rx).map(|q| beta.get(p, q, l).norm_sqr().max(1e-300)).collect())
                        .collect(),
                );
            }
        }
        scene.validate()?;
        Ok(scene)
    }
}
