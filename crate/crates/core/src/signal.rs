//! Signal algebra of the RHS radar: radiated signals, matched-filter
//! outputs, per-pair SINR, and the quadratic forms the optimizer works with.
//!
//! With the same waveform injected into every feed, the radiated signal of
//! transmit panel `p` collapses to `diag(psi_p) g_p s_p`, where `g_p` holds the
//! row sums of `Q o Gamma`. The echo of scatterer `l` at receiver `q` after the
//! matched filter for waveform `p` is therefore
//!
//! ```text
//! beta * (V_q^l^T psi_q) (u_p^l^T psi_p) s_p J
//! ```
//!
//! with `u_p^l = a_p^l o g_p` and `V_q^l = diag(a_q^l) (Q_q o Gamma_q)`.
//! Its energy factors into a transmit gain times a receive gain, which is
//! what makes every SINR term bilinear in the lifted matrices
//! `Psi^t = [psi^t; 1][psi^t; 1]^T` and `Psi^r`.

use nalgebra::{DMatrix, DVector, DVectorView};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rhs::WaveguideResponse;
use crate::scenario::{make_waveforms, shift_matrix, ReflectionTable, Scene, SteeringTable, WaveformSet};

/// Stacked real amplitude vectors of all transmit and receive panels.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    /// Length `P N_t`.
    pub psi_t: DVector<f64>,
    /// Length `Q N_r`.
    pub psi_r: DVector<f64>,
    pub n_t: usize,
    pub n_r: usize,
}

impl BeamformerSet {
    pub fn new(psi_t: DVector<f64>, psi_r: DVector<f64>, n_t: usize, n_r: usize) -> Result<Self> {
        let bf = BeamformerSet {
            psi_t,
            psi_r,
            n_t,
            n_r,
        };
        bf.validate()?;
        Ok(bf)
    }

    pub fn uniform(p: usize, q: usize, n_t: usize, n_r: usize, value: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(p * n_t, value),
            DVector::from_element(q * n_r, value),
            n_t,
            n_r,
        )
    }

    pub fn p(&self) -> usize {
        self.psi_t.len() / self.n_t
    }

    pub fn q(&self) -> usize {
        self.psi_r.len() / self.n_r
    }

    pub fn tx(&self, p: usize) -> DVectorView<'_, f64> {
        self.psi_t.rows(p * self.n_t, self.n_t)
    }

    pub fn rx(&self, q: usize) -> DVectorView<'_, f64> {
        self.psi_r.rows(q * self.n_r, self.n_r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0
            || self.n_r == 0
            || self.psi_t.len() % self.n_t != 0
            || self.psi_r.len() % self.n_r != 0
            || self.psi_t.is_empty()
            || self.psi_r.is_empty()
        {
            return Err(Error::DimensionMismatch(format!(
                "beamformer lengths {} / {} do not tile panels of {} / {} elements",
                self.psi_t.len(),
                self.psi_r.len(),
                self.n_t,
                self.n_r
            )));
        }
        let bad = self
            .psi_t
            .iter()
            .chain(self.psi_r.iter())
            .find(|v| !(0.0..=1.0).contains(*v));
        if let Some(v) = bad {
            return Err(Error::InvalidBeamformer(format!(
                "amplitude {v} outside [0, 1]"
            )));
        }
        Ok(())
    }
}

/// Amplitudes of one side, either as a plain vector or as a lifted
/// `(n+1) x (n+1)` matrix whose last row/column is the homogenization slot.
#[derive(Debug, Clone, Copy)]
pub enum Amplitudes<'a> {
    Vector(&'a DVector<f64>),
    Lifted(&'a DMatrix<f64>),
}

impl Amplitudes<'_> {
    /// `x^T M x` over the block starting at `offset`, or `Tr(M Psi_block)`.
    fn quad(&self, offset: usize, m: &DMatrix<f64>) -> f64 {
        let n = m.nrows();
        match self {
            Amplitudes::Vector(x) => {
                let v = x.rows(offset, n);
                (m * v).dot(&v)
            }
            Amplitudes::Lifted(psi) => psi.view((offset, offset), (n, n)).component_mul(m).sum(),
        }
    }
}

/// Rank-one lift `[x; 1][x; 1]^T`.
pub fn lift(x: &DVector<f64>) -> DMatrix<f64> {
    let mut v = x.clone().resize_vertically(x.len() + 1, 0.0);
    v[x.len()] = 1.0;
    &v * v.transpose()
}

/// Hermitian matrix `conj(x) x^T`, so that `psi^T H psi = |x^T psi|^2` for real `psi`.
fn outer_conj(x: &DVector<Complex64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(x.len(), x.len(), |i, j| x[i].conj() * x[j])
}

/// `sum_k conj(V[:,k]) V[:,k]^T`, so that `psi^T H psi = ||V^T psi||^2`.
fn gram_conj(v: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(v.nrows(), v.nrows(), |i, j| {
        (0..v.ncols()).map(|k| v[(i, k)].conj() * v[(j, k)]).sum()
    })
}

fn real_part(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    m.map(|c| c.re)
}

#[derive(Debug, Clone)]
pub struct TxPanelModel {
    pub response: WaveguideResponse,
    /// Row sums of `Q o Gamma`.
    pub feed_sum: DVector<Complex64>,
    /// Diagonal of the per-panel power form.
    pub power_diag: DVector<f64>,
    /// `u_p^l = a_p^l o g_p`, one per scatterer.
    pub gain_vectors: Vec<DVector<Complex64>>,
    /// `Re(conj(u) u^T)` per scatterer.
    pub gain_forms: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct RxPanelModel {
    pub response: WaveguideResponse,
    /// `V_q^l = diag(a_q^l) (Q o Gamma)`, `N_r x K_r`, one per scatterer.
    pub chains: Vec<DMatrix<Complex64>>,
    /// `Re(sum_k conj(V_k) V_k^T)` per scatterer.
    pub gain_forms: Vec<DMatrix<f64>>,
}

/// How the receiver noise enters the SINR denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseModel {
    /// Noise covariance `sigma_n^2 I`, evaluated in expectation.
    #[default]
    Expected,
    /// One noise realization per pair drawn from the given trial stream.
    Sampled { trial: u64 },
}

/// Everything the SINR and the optimizer need, precomputed from a scene.
#[derive(Debug, Clone)]
pub struct SignalModel {
    pub p: usize,
    pub q: usize,
    pub l: usize,
    pub l_t: usize,
    pub n_t: usize,
    pub n_r: usize,
    pub p_max: f64,
    pub noise_power: f64,
    pub snapshots_rx: usize,
    pub tx: Vec<TxPanelModel>,
    pub rx: Vec<RxPanelModel>,
    pub waveforms: WaveformSet,
    pub steering: SteeringTable,
    /// `sigma_pq^l^2 * ||s_p J_pq^l||^2`, indexed `(p, q, l)`.
    pub weights: Vec<f64>,
    /// Receive noise forms per `(p, q)`, `N_r x N_r`.
    pub noise_forms: Vec<DMatrix<f64>>,
}

impl SignalModel {
    pub fn new(scene: &Scene) -> Result<Self> {
        Self::with_noise(scene, NoiseModel::Expected)
    }

    pub fn with_noise(scene: &Scene, noise: NoiseModel) -> Result<Self> {
        scene.validate()?;
        let (p, q, l) = (scene.p(), scene.q(), scene.n_scatterers());
        let waveforms = make_waveforms(p, scene.snapshots_tx)?;
        let steering = scene.steering_table()?;
        let wg = scene.waveguide();

        let tx = scene
            .tx_panels
            .iter()
            .enumerate()
            .map(|(pi, panel)| {
                let response = wg.response(panel)?;
                let feed_sum = response.feed_sum();
                let power_diag = power_form(&response, &waveforms, pi, 1)?.matrix.diagonal().map(|c| c.re);
                let gain_vectors: Vec<_> = steering.tx[pi]
                    .iter()
                    .map(|a| a.entries.component_mul(&feed_sum))
                    .collect();
                let gain_forms = gain_vectors.iter().map(|u| real_part(&outer_conj(u))).collect();
                Ok(TxPanelModel {
                    response,
                    feed_sum,
                    power_diag,
                    gain_vectors,
                    gain_forms,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let rx = scene
            .rx_panels
            .iter()
            .enumerate()
            .map(|(qi, panel)| {
                let response = wg.response(panel)?;
                let g = response.feed_matrix();
                let chains: Vec<_> = steering.rx[qi]
                    .iter()
                    .map(|a| {
                        DMatrix::from_fn(g.nrows(), g.ncols(), |n, k| a.entries[n] * g[(n, k)])
                    })
                    .collect();
                let gain_forms = chains.iter().map(|v| real_part(&gram_conj(v))).collect();
                Ok(RxPanelModel {
                    response,
                    chains,
                    gain_forms,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut weights = Vec::with_capacity(p * q * l);
        for pi in 0..p {
            for qi in 0..q {
                for li in 0..l {
                    let j = shift_matrix(scene.delay(pi, qi, li), scene.snapshots_tx, scene.snapshots_rx)?;
                    let s = waveforms.signals[pi].transpose().map(Complex64::from);
                    let sj = s * j.matrix.map(Complex64::from);
                    weights.push(scene.pair_variance(pi, qi, li) * sj.norm_squared());
                }
            }
        }

        let noise_scale = scene.noise_power * scene.snapshots_rx as f64;
        let noise_forms = match noise {
            NoiseModel::Expected => {
                let forms: Vec<_> = rx
                    .iter()
                    .map(|r| DMatrix::from_diagonal(&(r.response.feed_energy() * noise_scale)))
                    .collect();
                (0..p).flat_map(|_| forms.iter().cloned()).collect()
            }
            NoiseModel::Sampled { trial } => {
                let mut rng = crate::scenario::trial_rng(
                    scene.rng_seed,
                    trial,
                    crate::scenario::StreamPurpose::Noise,
                );
                let mut forms = Vec::with_capacity(p * q);
                for _ in 0..p {
                    for r in &rx {
                        let n = sample_noise(r.response.n_elements(), scene.snapshots_rx, scene.noise_power, &mut rng);
                        forms.push(sampled_noise_form(&r.response.feed_matrix(), &n));
                    }
                }
                forms
            }
        };

        Ok(SignalModel {
            p,
            q,
            l,
            l_t: scene.n_targets(),
            n_t: scene.tx_panels[0].n_elements(),
            n_r: scene.rx_panels[0].n_elements(),
            p_max: scene.p_max,
            noise_power: scene.noise_power,
            snapshots_rx: scene.snapshots_rx,
            tx,
            rx,
            waveforms,
            steering,
            weights,
            noise_forms,
        })
    }

    #[inline]
    pub fn weight(&self, p: usize, q: usize, l: usize) -> f64 {
        self.weights[(p * self.q + q) * self.l + l]
    }

    pub fn noise_form(&self, p: usize, q: usize) -> &DMatrix<f64> {
        &self.noise_forms[p * self.q + q]
    }

    /// `|u_p^l^T psi_p|^2` (or its lifted trace).
    pub fn tx_gain(&self, p: usize, l: usize, amp: Amplitudes<'_>) -> f64 {
        amp.quad(p * self.n_t, &self.tx[p].gain_forms[l])
    }

    /// `||V_q^l^T psi_q||^2` (or its lifted trace).
    pub fn rx_gain(&self, q: usize, l: usize, amp: Amplitudes<'_>) -> f64 {
        amp.quad(q * self.n_r, &self.rx[q].gain_forms[l])
    }

    pub fn noise(&self, p: usize, q: usize, amp: Amplitudes<'_>) -> f64 {
        amp.quad(q * self.n_r, self.noise_form(p, q))
    }

    /// Radiated power of transmit panel `p`.
    pub fn tx_power(&self, p: usize, amp: Amplitudes<'_>) -> f64 {
        let d = &self.tx[p].power_diag;
        match amp {
            Amplitudes::Vector(x) => x
                .rows(p * self.n_t, self.n_t)
                .iter()
                .zip(d.iter())
                .map(|(v, c)| v * v * c)
                .sum(),
            Amplitudes::Lifted(psi) => (0..self.n_t)
                .map(|n| psi[(p * self.n_t + n, p * self.n_t + n)] * d[n])
                .sum(),
        }
    }

    /// Signal energies and noise powers for all pairs.
    pub fn pair_terms(&self, tx: Amplitudes<'_>, rx: Amplitudes<'_>) -> PairTerms {
        let tx_gain: Vec<f64> = (0..self.p)
            .flat_map(|p| (0..self.l).map(move |l| (p, l)))
            .map(|(p, l)| self.tx_gain(p, l, tx))
            .collect();
        let rx_gain: Vec<f64> = (0..self.q)
            .flat_map(|q| (0..self.l).map(move |l| (q, l)))
            .map(|(q, l)| self.rx_gain(q, l, rx))
            .collect();
        let mut signal = Vec::with_capacity(self.p * self.q * self.l);
        let mut noise = Vec::with_capacity(self.p * self.q);
        for p in 0..self.p {
            for q in 0..self.q {
                for l in 0..self.l {
                    signal.push(self.weight(p, q, l) * tx_gain[p * self.l + l] * rx_gain[q * self.l + l]);
                }
                noise.push(self.noise(p, q, rx));
            }
        }
        PairTerms {
            p: self.p,
            q: self.q,
            l: self.l,
            l_t: self.l_t,
            signal,
            noise,
        }
    }

    pub fn check_beamformers(&self, bf: &BeamformerSet) -> Result<()> {
        bf.validate()?;
        if bf.n_t != self.n_t || bf.n_r != self.n_r || bf.p() != self.p || bf.q() != self.q {
            return Err(Error::DimensionMismatch(format!(
                "beamformers sized for P={} Q={} N_t={} N_r={}, scene has P={} Q={} N_t={} N_r={}",
                bf.p(),
                bf.q(),
                bf.n_t,
                bf.n_r,
                self.p,
                self.q,
                self.n_t,
                self.n_r
            )));
        }
        Ok(())
    }
}

/// Per-pair signal energies `(p, q, l)` and noise powers `(p, q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTerms {
    pub p: usize,
    pub q: usize,
    pub l: usize,
    pub l_t: usize,
    pub signal: Vec<f64>,
    pub noise: Vec<f64>,
}

impl PairTerms {
    #[inline]
    pub fn signal(&self, p: usize, q: usize, l: usize) -> f64 {
        self.signal[(p * self.q + q) * self.l + l]
    }

    /// Worst-case average SINR without building a report.
    pub fn objective(&self) -> f64 {
        let mut worst = f64::INFINITY;
        for lt in 0..self.l_t {
            let mut acc = 0.0;
            for p in 0..self.p {
                for q in 0..self.q {
                    let total: f64 = (0..self.l).map(|l| self.signal(p, q, l)).sum();
                    let s = self.signal(p, q, lt);
                    let den = total - s + self.noise[p * self.q + q];
                    acc += if den > 0.0 { s / den } else { 0.0 };
                }
            }
            worst = worst.min(acc / (self.p * self.q) as f64);
        }
        worst
    }
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Per-pair SINR table, per-target averages and the worst case.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrReport {
    pub p: usize,
    pub q: usize,
    pub l_t: usize,
    /// Indexed `(p, q, l_t)`, linear.
    pub per_pair: Vec<f64>,
    pub per_target: Vec<f64>,
    pub worst_case: f64,
    pub per_target_db: Vec<f64>,
    pub worst_case_db: f64,
}

impl SinrReport {
    pub fn from_terms(terms: &PairTerms) -> Result<Self> {
        let (p, q, l, l_t) = (terms.p, terms.q, terms.l, terms.l_t);
        let mut per_pair = vec![0.0; p * q * l_t];
        for pi in 0..p {
            for qi in 0..q {
                let total: f64 = (0..l).map(|li| terms.signal(pi, qi, li)).sum();
                let noise = terms.noise[pi * q + qi];
                for lt in 0..l_t {
                    let s = terms.signal(pi, qi, lt);
                    let den = total - s + noise;
                    if den <= 0.0 {
                        return Err(Error::DegenerateReceiveChain { p: pi, q: qi });
                    }
                    per_pair[(pi * q + qi) * l_t + lt] = s / den;
                }
            }
        }
        let per_target: Vec<f64> = (0..l_t)
            .map(|lt| {
                (0..p * q).map(|pq| per_pair[pq * l_t + lt]).sum::<f64>() / (p * q) as f64
            })
            .collect();
        let worst_case = per_target.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(SinrReport {
            p,
            q,
            l_t,
            per_target_db: per_target.iter().map(|v| to_db(*v)).collect(),
            worst_case_db: to_db(worst_case),
            per_pair,
            per_target,
            worst_case,
        })
    }

    pub fn pair(&self, p: usize, q: usize, lt: usize) -> f64 {
        self.per_pair[(p * self.q + q) * self.l_t + lt]
    }
}

/// SINR of every target through every transceiver pair.
pub fn sinr_per_pair(model: &SignalModel, bf: &BeamformerSet) -> Result<SinrReport> {
    model.check_beamformers(bf)?;
    SinrReport::from_terms(&model.pair_terms(
        Amplitudes::Vector(&bf.psi_t),
        Amplitudes::Vector(&bf.psi_r),
    ))
}

/// `X_p = diag(psi_p) (Q o Gamma) S_p`, `N_t x I_t`.
pub fn tx_radiated(
    response: &WaveguideResponse,
    psi_p: &DVector<f64>,
    waveform: &DMatrix<Complex64>,
) -> Result<DMatrix<Complex64>> {
    if psi_p.len() != response.n_elements() || waveform.nrows() != response.n_feeds() {
        return Err(Error::DimensionMismatch(format!(
            "psi has {} entries and S has {} rows for a {}x{} waveguide",
            psi_p.len(),
            waveform.nrows(),
            response.n_elements(),
            response.n_feeds()
        )));
    }
    if psi_p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidBeamformer("amplitude outside [0, 1]".into()));
    }
    let psi = DMatrix::from_diagonal(&psi_p.map(Complex64::from));
    Ok(psi * response.feed_matrix() * waveform)
}

/// A Hermitian block embedded at `[offset.., offset..]` of a larger matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockForm {
    pub offset: usize,
    pub matrix: DMatrix<Complex64>,
}

impl BlockForm {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// `x^H M x` for a real stacked vector.
    pub fn quad(&self, x: &DVector<f64>) -> f64 {
        let v = x.rows(self.offset, self.size()).map(Complex64::from);
        (v.adjoint() * &self.matrix * v)[(0, 0)].re
    }

    /// `Tr(M' Psi)` where `M'` is the form zero-padded to `Psi`'s size.
    pub fn trace_with(&self, psi: &DMatrix<f64>) -> f64 {
        let n = self.size();
        psi.view((self.offset, self.offset), (n, n))
            .component_mul(&self.matrix.map(|c| c.re))
            .sum()
    }

    pub fn embed(&self, dim: usize) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(dim, dim);
        m.view_mut((self.offset, self.offset), (self.size(), self.size()))
            .copy_from(&self.matrix);
        m
    }

    pub fn scaled(&self, s: f64) -> BlockForm {
        BlockForm {
            offset: self.offset,
            matrix: self.matrix.map(|c| c * s),
        }
    }

    pub fn hermitian_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).norm()
    }
}

/// `C_p`: per-element radiated energy of panel `p` on the diagonal of block `p`
/// of the `(P N_t)`-dimensional stacked space.
pub fn power_form(
    response: &WaveguideResponse,
    waveforms: &WaveformSet,
    p: usize,
    _n_panels: usize,
) -> Result<BlockForm> {
    if p >= waveforms.len() {
        return Err(Error::DimensionMismatch(format!(
            "no waveform for transmit panel {p}"
        )));
    }
    let radiated = response.feed_matrix() * waveforms.stacked(p, response.n_feeds());
    let gram = &radiated * radiated.adjoint();
    let n = response.n_elements();
    let diag = DMatrix::from_fn(n, n, |i, j| if i == j { gram[(i, i)] } else { Complex64::from(0.0) });
    Ok(BlockForm {
        offset: p * n,
        matrix: diag,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Transmit,
    Receive,
}

/// Noise part of a ratio denominator.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseTerm {
    /// Fixed by the other side's amplitudes.
    Constant(f64),
    /// Quadratic in the free side.
    Form(BlockForm),
}

impl NoiseTerm {
    fn eval_lifted(&self, psi: &DMatrix<f64>) -> f64 {
        match self {
            NoiseTerm::Constant(c) => *c * psi[(psi.nrows() - 1, psi.ncols() - 1)],
            NoiseTerm::Form(f) => f.trace_with(psi),
        }
    }
}

/// `P x Q x L_t` table of SVR ratio variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaTable {
    pub p: usize,
    pub q: usize,
    pub l_t: usize,
    pub values: Vec<f64>,
}

impl LambdaTable {
    pub fn zeros(p: usize, q: usize, l_t: usize) -> Self {
        LambdaTable {
            p,
            q,
            l_t,
            values: vec![0.0; p * q * l_t],
        }
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize, lt: usize) -> f64 {
        self.values[(p * self.q + q) * self.l_t + lt]
    }
}

/// Quadratic forms of one side with the other side held fixed.
#[derive(Debug, Clone)]
pub struct QuadraticForms {
    pub side: Side,
    /// Stacked dimension of the free side, `P N_t` or `Q N_r`.
    pub dim: usize,
    pub p: usize,
    pub q: usize,
    pub l: usize,
    pub l_t: usize,
    /// `C_p` (transmit side only).
    pub power: Vec<BlockForm>,
    pub p_max: Option<f64>,
    /// Per-scatterer signal forms indexed `(p, q, l)`; `r_sig` or `m_sig`.
    pub signal: Vec<BlockForm>,
    /// Noise per `(p, q)`.
    pub noise: Vec<NoiseTerm>,
    /// Per-element scale hint for the lifted variable.
    pub amplitude_scale: DVector<f64>,
}

impl QuadraticForms {
    pub fn signal_form(&self, p: usize, q: usize, l: usize) -> &BlockForm {
        &self.signal[(p * self.q + q) * self.l + l]
    }

    /// `sum_{l != lt}` of the signal forms: `R^I` / the interference part of `M^IN`.
    pub fn interference_form(&self, p: usize, q: usize, lt: usize) -> BlockForm {
        let first = self.signal_form(p, q, 0);
        let mut m = DMatrix::zeros(first.size(), first.size());
        for l in (0..self.l).filter(|l| *l != lt) {
            m += &self.signal_form(p, q, l).matrix;
        }
        BlockForm {
            offset: first.offset,
            matrix: m,
        }
    }

    pub fn noise_term(&self, p: usize, q: usize) -> &NoiseTerm {
        &self.noise[p * self.q + q]
    }

    /// Ratio update: `Tr(R^lt' Psi) / (Tr(R^I' Psi) + noise)` for every pair and target.
    pub fn ratios(&self, psi: &DMatrix<f64>) -> Result<LambdaTable> {
        if psi.nrows() != self.dim + 1 || psi.ncols() != self.dim + 1 {
            return Err(Error::DimensionMismatch(format!(
                "lifted matrix is {}x{}, expected {}",
                psi.nrows(),
                psi.ncols(),
                self.dim + 1
            )));
        }
        let mut values = Vec::with_capacity(self.p * self.q * self.l_t);
        for p in 0..self.p {
            for q in 0..self.q {
                let sig: Vec<f64> = (0..self.l)
                    .map(|l| self.signal_form(p, q, l).trace_with(psi))
                    .collect();
                let total: f64 = sig.iter().sum();
                let noise = self.noise_term(p, q).eval_lifted(psi);
                for lt in 0..self.l_t {
                    let den = total - sig[lt] + noise;
                    if den <= 0.0 {
                        return Err(Error::DegeneratePair { p, q });
                    }
                    values.push((sig[lt] / den).max(0.0));
                }
            }
        }
        Ok(LambdaTable {
            p: self.p,
            q: self.q,
            l_t: self.l_t,
            values,
        })
    }
}

/// Transmit-side forms `C_p`, `R_pq^l` and the noise constants with the
/// receive amplitudes fixed.
pub fn transmit_forms(model: &SignalModel, rx: Amplitudes<'_>) -> QuadraticForms {
    let n_t = model.n_t;
    let mut signal = Vec::with_capacity(model.p * model.q * model.l);
    let mut noise = Vec::with_capacity(model.p * model.q);
    for p in 0..model.p {
        for q in 0..model.q {
            for l in 0..model.l {
                let coef = model.weight(p, q, l) * model.rx_gain(q, l, rx);
                signal.push(BlockForm {
                    offset: p * n_t,
                    matrix: outer_conj(&model.tx[p].gain_vectors[l]) * Complex64::from(coef),
                });
            }
            noise.push(NoiseTerm::Constant(model.noise(p, q, rx)));
        }
    }
    let power: Vec<_> = (0..model.p)
        .map(|p| BlockForm {
            offset: p * n_t,
            matrix: DMatrix::from_diagonal(&model.tx[p].power_diag.map(Complex64::from)),
        })
        .collect();
    // Amplitudes cannot exceed what the power cap allows on a single element.
    let amplitude_scale = DVector::from_iterator(
        model.p * n_t,
        (0..model.p).flat_map(|p| {
            model.tx[p]
                .power_diag
                .iter()
                .map(|c| if *c > 0.0 { (model.p_max / c).sqrt().min(1.0) } else { 1.0 })
                .collect::<Vec<_>>()
        }),
    );
    QuadraticForms {
        side: Side::Transmit,
        dim: model.p * n_t,
        p: model.p,
        q: model.q,
        l: model.l,
        l_t: model.l_t,
        power,
        p_max: Some(model.p_max),
        signal,
        noise,
        amplitude_scale,
    }
}

/// Receive-side forms `M_pq^l` and the noise forms with the transmit
/// amplitudes fixed.
pub fn receive_forms(model: &SignalModel, tx: Amplitudes<'_>) -> QuadraticForms {
    let n_r = model.n_r;
    let mut signal = Vec::with_capacity(model.p * model.q * model.l);
    let mut noise = Vec::with_capacity(model.p * model.q);
    for p in 0..model.p {
        for q in 0..model.q {
            for l in 0..model.l {
                let coef = model.weight(p, q, l) * model.tx_gain(p, l, tx);
                signal.push(BlockForm {
                    offset: q * n_r,
                    matrix: gram_conj(&model.rx[q].chains[l]) * Complex64::from(coef),
                });
            }
            noise.push(NoiseTerm::Form(BlockForm {
                offset: q * n_r,
                matrix: model.noise_form(p, q).map(Complex64::from),
            }));
        }
    }
    QuadraticForms {
        side: Side::Receive,
        dim: model.q * n_r,
        p: model.p,
        q: model.q,
        l: model.l,
        l_t: model.l_t,
        power: Vec::new(),
        p_max: None,
        signal,
        noise,
        amplitude_scale: DVector::from_element(model.q * n_r, 1.0),
    }
}

/// Complex white noise with per-entry variance `sigma2`, `rows x cols`.
pub fn sample_noise<R: Rng + ?Sized>(rows: usize, cols: usize, sigma2: f64, rng: &mut R) -> DMatrix<Complex64> {
    let s = (sigma2 / 2.0).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(s * re, s * im)
    })
}

/// `Re(sum_{i,k} conj(b_ik) b_ik^T)` with `b_ik = G[:,k] o N[:,i]`, so that
/// `psi^T F psi = ||(diag(psi) G)^T N||_F^2`.
fn sampled_noise_form(g: &DMatrix<Complex64>, noise: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = g.nrows();
    let mut f = DMatrix::zeros(n, n);
    for i in 0..noise.ncols() {
        for k in 0..g.ncols() {
            let b = DVector::from_fn(n, |r, _| g[(r, k)] * noise[(r, i)]);
            f += real_part(&outer_conj(&b));
        }
    }
    f
}

/// Deterministic part of the echo of scatterer `l` in `Y_pq` with `beta`
/// factored out: `(diag(psi_q) G_q)^T A_pq^l X_p J_pq^l`, `K_r x I_r`.
pub fn signal_term(
    scene: &Scene,
    model: &SignalModel,
    bf: &BeamformerSet,
    p: usize,
    q: usize,
    l: usize,
) -> Result<DMatrix<Complex64>> {
    let tx = &model.tx[p];
    let x_p = tx_radiated(
        &tx.response,
        &bf.tx(p).into_owned(),
        &model.waveforms.stacked(p, tx.response.n_feeds()),
    )?;
    let a_q = &model.steering.rx[q][l].entries;
    let a_p = &model.steering.tx[p][l].entries;
    let a = a_q * a_p.transpose();
    let j = shift_matrix(scene.delay(p, q, l), scene.snapshots_tx, scene.snapshots_rx)?
        .matrix
        .map(Complex64::from);
    let chain = DMatrix::from_diagonal(&bf.rx(q).map(Complex64::from)) * model.rx[q].response.feed_matrix();
    Ok(chain.transpose() * a * x_p * j)
}

/// Matched-filter outputs `Y_pq`, indexed `p * Q + q`. With `noise = None`
/// the noise matrix is omitted (its power is accounted analytically).
pub fn matched_filter_output(
    scene: &Scene,
    model: &SignalModel,
    bf: &BeamformerSet,
    reflections: &ReflectionTable,
    mut noise: Option<&mut dyn rand::RngCore>,
) -> Result<Vec<DMatrix<Complex64>>> {
    model.check_beamformers(bf)?;
    if reflections.p != model.p || reflections.q != model.q || reflections.l != model.l {
        return Err(Error::DimensionMismatch("reflection table does not match scene".into()));
    }
    let mut out = Vec::with_capacity(model.p * model.q);
    for p in 0..model.p {
        for q in 0..model.q {
            let k_r = model.rx[q].response.n_feeds();
            let mut y = DMatrix::zeros(k_r, scene.snapshots_rx);
            for l in 0..model.l {
                y += signal_term(scene, model, bf, p, q, l)? * reflections.get(p, q, l);
            }
            if let Some(rng) = noise.as_deref_mut() {
                let n = sample_noise(model.n_r, scene.snapshots_rx, scene.noise_power, rng);
                let chain = DMatrix::from_diagonal(&bf.rx(q).map(Complex64::from))
                    * model.rx[q].response.feed_matrix();
                y += chain.transpose() * n;
            }
            out.push(y);
        }
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests_support {
    use crate::rhs::RhsPanel;
    use crate::scenario::{Scatterer, Scene};
    use nalgebra::Vector3;

    pub(crate) fn small_scene(p: usize, q: usize, n: (usize, usize), clutter: bool) -> Scene {
        let spacing = 0.01 / 3.0;
        let tx: Vec<_> = (0..p)
            .map(|i| RhsPanel::new(n.0, n.1, spacing, 3, Vector3::new(0.4 * i as f64, 0.0, 0.0)).unwrap())
            .collect();
        let rx: Vec<_> = (0..q)
            .map(|i| RhsPanel::new(n.0, n.1, spacing, 3, Vector3::new(1.0, 0.3 * i as f64 + 0.2, 0.0)).unwrap())
            .collect();
        let mut scatterers = vec![
            Scatterer::target(Vector3::new(0.5, 2.0, 1.0), 1.6e-5),
            Scatterer::target(Vector3::new(1.0, 1.5, 1.0), 1.6e-5),
        ];
        if clutter {
            scatterers.push(Scatterer::clutter(Vector3::new(1.0, 2.0, 2.0), 1.6e-5));
        }
        Scene {
            tx_panels: tx,
            rx_panels: rx,
            scatterers,
            wavelength: 0.01,
            carrier: 30e9,
            refractive_index: 3f64.sqrt(),
            attenuation: 5.0,
            noise_power: 4e-6,
            p_max: 4e-3,
            snapshots_tx: 4,
            snapshots_rx: 6,
            rng_seed: 3,
        }
    }
}
