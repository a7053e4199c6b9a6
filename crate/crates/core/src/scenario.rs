//! World model: subarray placement, scatterers and their reflection
//! statistics, steering vectors, orthogonal waveforms and delay shifts.

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rhs::{ElementGrid, RhsPanel, WaveguideParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScattererKind {
    Target,
    Clutter,
}

/// A point target or clutter patch.
#[derive(Debug, Clone, PartialEq)]
pub struct Scatterer {
    pub position: Vector3<f64>,
    pub kind: ScattererKind,
    /// Variance of the reflection coefficient.
    pub reflect_var: f64,
    /// Optional `P x Q` table overriding `reflect_var` per transceiver pair.
    pub per_pair_var: Option<Vec<Vec<f64>>>,
    /// Optional `P x Q` table of delays in samples; zero when absent.
    pub delays: Option<Vec<Vec<usize>>>,
}

impl Scatterer {
    pub fn target(position: Vector3<f64>, reflect_var: f64) -> Self {
        Scatterer {
            position,
            kind: ScattererKind::Target,
            reflect_var,
            per_pair_var: None,
            delays: None,
        }
    }

    pub fn clutter(position: Vector3<f64>, reflect_var: f64) -> Self {
        Scatterer {
            kind: ScattererKind::Clutter,
            ..Scatterer::target(position, reflect_var)
        }
    }
}

/// Identifies a panel inside a scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PanelId {
    Tx(usize),
    Rx(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub tx_panels: Vec<RhsPanel>,
    pub rx_panels: Vec<RhsPanel>,
    /// Targets first, then clutter.
    pub scatterers: Vec<Scatterer>,
    pub wavelength: f64,
    pub carrier: f64,
    pub refractive_index: f64,
    pub attenuation: f64,
    /// Receiver noise variance, W.
    pub noise_power: f64,
    /// Per-transmitter radiated power cap, W.
    pub p_max: f64,
    pub snapshots_tx: usize,
    pub snapshots_rx: usize,
    pub rng_seed: u64,
}

impl Scene {
    pub fn p(&self) -> usize {
        self.tx_panels.len()
    }

    pub fn q(&self) -> usize {
        self.rx_panels.len()
    }

    pub fn n_scatterers(&self) -> usize {
        self.scatterers.len()
    }

    pub fn n_targets(&self) -> usize {
        self.scatterers
            .iter()
            .filter(|s| s.kind == ScattererKind::Target)
            .count()
    }

    pub fn n_clutters(&self) -> usize {
        self.n_scatterers() - self.n_targets()
    }

    /// Total element count `P N_t + Q N_r`.
    pub fn n_sum(&self) -> usize {
        self.tx_panels.iter().map(RhsPanel::n_elements).sum::<usize>()
            + self.rx_panels.iter().map(RhsPanel::n_elements).sum::<usize>()
    }

    pub fn waveguide(&self) -> WaveguideParams {
        WaveguideParams {
            wavelength: self.wavelength,
            refractive_index: self.refractive_index,
            attenuation: self.attenuation,
        }
    }

    /// `sigma_pq^l^2`.
    pub fn pair_variance(&self, p: usize, q: usize, l: usize) -> f64 {
        let s = &self.scatterers[l];
        s.per_pair_var
            .as_ref()
            .map(|t| t[p][q])
            .unwrap_or(s.reflect_var)
    }

    pub fn delay(&self, p: usize, q: usize, l: usize) -> usize {
        self.scatterers[l]
            .delays
            .as_ref()
            .map(|t| t[p][q])
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScene(m));
        if self.tx_panels.is_empty() || self.rx_panels.is_empty() {
            return bad("need at least one transmit and one receive panel".into());
        }
        for p in self.tx_panels.iter().chain(&self.rx_panels) {
            p.validate()?;
        }
        let n_t = self.tx_panels[0].n_elements();
        let n_r = self.rx_panels[0].n_elements();
        if self.tx_panels.iter().any(|p| p.n_elements() != n_t)
            || self.rx_panels.iter().any(|p| p.n_elements() != n_r)
        {
            return bad("all panels of one side must have the same element count".into());
        }
        if self.n_targets() == 0 {
            return bad("need at least one target".into());
        }
        let lt = self.n_targets();
        if self.scatterers[..lt]
            .iter()
            .any(|s| s.kind != ScattererKind::Target)
        {
            return bad("targets must precede clutter".into());
        }
        for (l, s) in self.scatterers.iter().enumerate() {
            if !(s.reflect_var.is_finite() && s.reflect_var > 0.0) {
                return bad(format!("scatterer {l}: reflection variance must be > 0"));
            }
            if !s.position.iter().all(|c| c.is_finite()) {
                return bad(format!("scatterer {l}: non-finite position"));
            }
            if let Some(t) = &s.per_pair_var {
                if t.len() != self.p() || t.iter().any(|r| r.len() != self.q()) {
                    return bad(format!("scatterer {l}: per-pair variance table must be P x Q"));
                }
                if t.iter().flatten().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return bad(format!("scatterer {l}: per-pair variances must be > 0"));
                }
            }
            if let Some(t) = &s.delays {
                if t.len() != self.p() || t.iter().any(|r| r.len() != self.q()) {
                    return bad(format!("scatterer {l}: delay table must be P x Q"));
                }
                if let Some(&d) = t.iter().flatten().find(|d| **d + self.snapshots_tx > self.snapshots_rx) {
                    return Err(Error::DelayOutOfRange {
                        delay: d,
                        snapshots_tx: self.snapshots_tx,
                        snapshots_rx: self.snapshots_rx,
                    });
                }
            }
        }
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return bad("wavelength must be > 0".into());
        }
        if !(self.noise_power.is_finite() && self.noise_power > 0.0) {
            return bad("noise power must be > 0".into());
        }
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            return bad("power cap must be > 0".into());
        }
        if self.snapshots_tx < self.p() {
            return Err(Error::InsufficientSnapshots {
                waveforms: self.p(),
                snapshots: self.snapshots_tx,
            });
        }
        if self.snapshots_rx < self.snapshots_tx {
            return bad("I_r must be at least I_t".into());
        }
        if !(self.attenuation.is_finite() && self.attenuation >= 0.0) {
            return bad("attenuation factor must be >= 0".into());
        }
        Ok(())
    }

    /// Steering vectors of every scatterer seen from every panel.
    pub fn steering_table(&self) -> Result<SteeringTable> {
        let build = |panels: &[RhsPanel], side: fn(usize) -> PanelId| -> Result<Vec<Vec<SteeringVector>>> {
            panels
                .iter()
                .enumerate()
                .map(|(i, panel)| {
                    self.scatterers
                        .iter()
                        .enumerate()
                        .map(|(l, s)| {
                            Ok(SteeringVector {
                                entries: steering_vector(panel, &s.position, self.wavelength)?,
                                panel_id: side(i),
                                scatterer_id: l,
                            })
                        })
                        .collect()
                })
                .collect()
        };
        Ok(SteeringTable {
            tx: build(&self.tx_panels, PanelId::Tx)?,
            rx: build(&self.rx_panels, PanelId::Rx)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub entries: DVector<Complex64>,
    pub panel_id: PanelId,
    pub scatterer_id: usize,
}

/// `tx[p][l]` and `rx[q][l]`.
#[derive(Debug, Clone)]
pub struct SteeringTable {
    pub tx: Vec<Vec<SteeringVector>>,
    pub rx: Vec<Vec<SteeringVector>>,
}

/// Far-field steering vector: `exp(+j 2 pi / lambda * u . r_n)` with `u` the
/// unit direction from the grid center to the scatterer and `r_n` the
/// element offset.
pub fn steering_vector<G: ElementGrid + ?Sized>(
    grid: &G,
    scatterer_position: &Vector3<f64>,
    wavelength: f64,
) -> Result<DVector<Complex64>> {
    let range = scatterer_position - grid.center();
    let r = range.norm();
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::DegenerateGeometry(
            "scatterer coincides with the panel center".into(),
        ));
    }
    let u = range / r;
    let k = 2.0 * PI / wavelength;
    let offsets = grid.element_offsets();
    Ok(DVector::from_iterator(
        offsets.len(),
        offsets
            .iter()
            .map(|o| Complex64::from_polar(1.0, k * u.dot(o))),
    ))
}

/// Mutually orthogonal transmit waveforms, one per transmit panel.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformSet {
    /// `s_p`, each of length `I_t`, with `s_p s_p^H = 1`.
    pub signals: Vec<DVector<Complex64>>,
    /// Scale applied to the Fourier rows, `1/sqrt(I_t)`.
    pub normalization: f64,
}

impl WaveformSet {
    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn snapshots(&self) -> usize {
        self.signals.first().map_or(0, |s| s.len())
    }

    /// `S_p`: `s_p` stacked once per feed, `K x I_t`.
    pub fn stacked(&self, p: usize, feeds: usize) -> DMatrix<Complex64> {
        let s = &self.signals[p];
        DMatrix::from_fn(feeds, s.len(), |_, i| s[i])
    }

    /// `G[p, p'] = s_p s_p'^H`.
    pub fn gram(&self) -> DMatrix<Complex64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |a, b| {
            self.signals[a]
                .iter()
                .zip(self.signals[b].iter())
                .map(|(x, y)| x * y.conj())
                .sum()
        })
    }
}

/// Rows of the unitary DFT basis of size `I_t`.
pub fn make_waveforms(p: usize, snapshots_tx: usize) -> Result<WaveformSet> {
    if snapshots_tx < p || snapshots_tx == 0 {
        return Err(Error::InsufficientSnapshots {
            waveforms: p,
            snapshots: snapshots_tx,
        });
    }
    let norm = 1.0 / (snapshots_tx as f64).sqrt();
    let signals = (0..p)
        .map(|row| {
            DVector::from_fn(snapshots_tx, |i, _| {
                let phase = 2.0 * PI * ((row * i) % snapshots_tx) as f64 / snapshots_tx as f64;
                Complex64::from_polar(norm, phase)
            })
        })
        .collect();
    Ok(WaveformSet {
        signals,
        normalization: norm,
    })
}

/// `I_t x I_r` delay selector with `J[n, n + d] = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftMatrix {
    pub matrix: DMatrix<f64>,
    pub delay: usize,
}

pub fn shift_matrix(delay: usize, snapshots_tx: usize, snapshots_rx: usize) -> Result<ShiftMatrix> {
    if delay + snapshots_tx > snapshots_rx {
        return Err(Error::DelayOutOfRange {
            delay,
            snapshots_tx,
            snapshots_rx,
        });
    }
    let mut matrix = DMatrix::zeros(snapshots_tx, snapshots_rx);
    for n in 0..snapshots_tx {
        matrix[(n, n + delay)] = 1.0;
    }
    Ok(ShiftMatrix { matrix, delay })
}

/// Independent random streams per (seed, trial, purpose).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Geometry = 1,
    Reflections = 2,
    Optimizer = 3,
    Noise = 4,
}

pub fn trial_rng(seed: u64, trial: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial.wrapping_mul(16).wrapping_add(purpose as u64));
    rng
}

/// `P x Q x L` table of reflection coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionTable {
    pub p: usize,
    pub q: usize,
    pub l: usize,
    pub values: Vec<Complex64>,
}

impl ReflectionTable {
    pub fn get(&self, p: usize, q: usize, l: usize) -> Complex64 {
        self.values[(p * self.q + q) * self.l + l]
    }

    /// `|beta|^2` per scatterer as `P x Q` tables.
    pub fn power_tables(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.l)
            .map(|l| {
                (0..self.p)
                    .map(|p| (0..self.q).map(|q| self.get(p, q, l).norm_sqr()).collect())
                    .collect()
            })
            .collect()
    }
}

/// Circularly-symmetric complex Gaussian `beta_pq^l ~ CN(0, sigma_pq^l^2)`,
/// reproducible per `(scene.rng_seed, trial)`.
pub fn draw_reflections(scene: &Scene, trial: u64) -> ReflectionTable {
    let mut rng = trial_rng(scene.rng_seed, trial, StreamPurpose::Reflections);
    draw_reflections_with(scene, &mut rng)
}

pub fn draw_reflections_with<R: Rng + ?Sized>(scene: &Scene, rng: &mut R) -> ReflectionTable {
    let (p, q, l) = (scene.p(), scene.q(), scene.n_scatterers());
    let mut values = Vec::with_capacity(p * q * l);
    for pi in 0..p {
        for qi in 0..q {
            for li in 0..l {
                let s = (scene.pair_variance(pi, qi, li) / 2.0).sqrt();
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                values.push(Complex64::new(s * re, s * im));
            }
        }
    }
    ReflectionTable { p, q, l, values }
}

/// `n` points uniform in the axis-aligned box `[lo, hi]`.
pub fn sample_positions<R: Rng + ?Sized>(
    n: usize,
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    rng: &mut R,
) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| Vector3::from_fn(|i, _| lo[i] + (hi[i] - lo[i]) * rng.random::<f64>()))
        .collect()
}
