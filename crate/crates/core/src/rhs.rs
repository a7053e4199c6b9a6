//! Geometry and waveguide physics of a single reconfigurable holographic
//! surface (RHS) subarray.
//!
//! An RHS panel is a rectangular grid of metamaterial elements fed by `K`
//! feeds attached to one edge. The reference wave travels inside the
//! waveguide from every feed to every element, picking up a phase shift
//! `exp(-j 2 pi nu D / lambda)` and an amplitude attenuation `exp(-a D)`,
//! where `D` is the in-plane feed-to-element distance.
//!
//! Element ordering is x-major: element `n = ix * n_y + iy`. Every module
//! that indexes elements (steering vectors, beamformers, quadratic forms)
//! relies on this ordering.

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-12;

/// Anything with a rectangular element grid placed in the world.
pub trait ElementGrid {
    fn center(&self) -> Vector3<f64>;
    /// World-frame offsets of every element from the grid center, x-major.
    fn element_offsets(&self) -> Vec<Vector3<f64>>;

    fn element_positions(&self) -> Vec<Vector3<f64>> {
        let c = self.center();
        self.element_offsets().into_iter().map(|o| c + o).collect()
    }
}

/// In-plane coordinates of an `n_x` by `n_y` grid centered on the origin.
pub fn grid_coordinates(n_x: usize, n_y: usize, spacing: f64) -> Vec<[f64; 2]> {
    let x0 = (n_x as f64 - 1.0) / 2.0;
    let y0 = (n_y as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(n_x * n_y);
    for ix in 0..n_x {
        for iy in 0..n_y {
            out.push([(ix as f64 - x0) * spacing, (iy as f64 - y0) * spacing]);
        }
    }
    out
}

/// Split `n` elements into the most square `(n_x, n_y)` grid with `n_x <= n_y`.
pub fn near_square_shape(n: usize) -> (usize, usize) {
    let mut best = (1, n);
    let mut nx = 1;
    while nx * nx <= n {
        if n % nx == 0 {
            best = (nx, n / nx);
        }
        nx += 1;
    }
    best
}

/// `k` feeds spaced uniformly along the lower (`y = -n_y*spacing/2`) edge.
pub fn edge_feeds(n_x: usize, n_y: usize, spacing: f64, k: usize) -> Vec<[f64; 2]> {
    let width = n_x as f64 * spacing;
    let y = -(n_y as f64) * spacing / 2.0;
    (0..k)
        .map(|i| [-width / 2.0 + (i as f64 + 0.5) * width / k as f64, y])
        .collect()
}

fn check_orthonormal(axes: &[Vector3<f64>; 2]) -> Result<()> {
    let [u, v] = axes;
    if (u.norm() - 1.0).abs() > ORTHONORMAL_TOL
        || (v.norm() - 1.0).abs() > ORTHONORMAL_TOL
        || u.dot(v).abs() > ORTHONORMAL_TOL
    {
        return Err(Error::InvalidPanel(format!(
            "orientation axes are not orthonormal: {u:?}, {v:?}"
        )));
    }
    Ok(())
}

/// One RHS subarray.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsPanel {
    pub n_x: usize,
    pub n_y: usize,
    /// Element pitch in meters.
    pub element_spacing: f64,
    /// Feed coordinates in the panel plane, meters.
    pub feed_positions: Vec<[f64; 2]>,
    pub center: Vector3<f64>,
    /// Two orthonormal axes spanning the panel plane.
    pub orientation: [Vector3<f64>; 2],
}

impl RhsPanel {
    /// Panel in the world x/y plane (facing +z) with `n_feeds` feeds on one edge.
    pub fn new(
        n_x: usize,
        n_y: usize,
        element_spacing: f64,
        n_feeds: usize,
        center: Vector3<f64>,
    ) -> Result<Self> {
        let panel = RhsPanel {
            n_x,
            n_y,
            element_spacing,
            feed_positions: edge_feeds(n_x, n_y, element_spacing, n_feeds),
            center,
            orientation: [Vector3::x(), Vector3::y()],
        };
        panel.validate()?;
        Ok(panel)
    }

    pub fn with_orientation(mut self, orientation: [Vector3<f64>; 2]) -> Result<Self> {
        self.orientation = orientation;
        self.validate()?;
        Ok(self)
    }

    pub fn with_feeds(mut self, feeds: Vec<[f64; 2]>) -> Result<Self> {
        self.feed_positions = feeds;
        self.validate()?;
        Ok(self)
    }

    pub fn n_elements(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn n_feeds(&self) -> usize {
        self.feed_positions.len()
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.orientation[0].cross(&self.orientation[1])
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x == 0 || self.n_y == 0 {
            return Err(Error::InvalidPanel(format!(
                "grid must be at least 1x1, got {}x{}",
                self.n_x, self.n_y
            )));
        }
        if self.feed_positions.is_empty() {
            return Err(Error::InvalidPanel("panel needs at least one feed".into()));
        }
        if !(self.element_spacing.is_finite() && self.element_spacing > 0.0) {
            return Err(Error::InvalidPanel(format!(
                "element spacing must be positive, got {}",
                self.element_spacing
            )));
        }
        if !self.center.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidPanel("non-finite panel center".into()));
        }
        check_orthonormal(&self.orientation)?;
        let half_x = self.n_x as f64 * self.element_spacing / 2.0;
        let half_y = self.n_y as f64 * self.element_spacing / 2.0;
        let slack = 1e-12 * (half_x + half_y);
        for (k, f) in self.feed_positions.iter().enumerate() {
            if !(f[0].is_finite() && f[1].is_finite())
                || f[0].abs() > half_x + slack
                || f[1].abs() > half_y + slack
            {
                return Err(Error::InvalidPanel(format!(
                    "feed {k} at {f:?} lies outside the {:.4}x{:.4} m panel",
                    2.0 * half_x,
                    2.0 * half_y
                )));
            }
        }
        Ok(())
    }

    /// In-plane element coordinates, x-major.
    pub fn local_positions(&self) -> Vec<[f64; 2]> {
        grid_coordinates(self.n_x, self.n_y, self.element_spacing)
    }

    /// In-plane feed-to-element distances, `N x K`.
    pub fn feed_distances(&self) -> DMatrix<f64> {
        let elems = self.local_positions();
        DMatrix::from_fn(elems.len(), self.n_feeds(), |n, k| {
            let e = elems[n];
            let f = self.feed_positions[k];
            ((e[0] - f[0]).powi(2) + (e[1] - f[1]).powi(2)).sqrt()
        })
    }

    pub fn translated(&self, by: Vector3<f64>) -> Self {
        RhsPanel {
            center: self.center + by,
            ..self.clone()
        }
    }
}

impl ElementGrid for RhsPanel {
    fn center(&self) -> Vector3<f64> {
        self.center
    }

    fn element_offsets(&self) -> Vec<Vector3<f64>> {
        let [u, v] = self.orientation;
        self.local_positions()
            .into_iter()
            .map(|[x, y]| u * x + v * y)
            .collect()
    }
}

/// Row-major grid of element world positions, x-major ordering.
pub fn element_positions(panel: &RhsPanel) -> Vec<Vector3<f64>> {
    panel.element_positions()
}

/// Waveguide constants shared by all panels of a scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveguideParams {
    pub wavelength: f64,
    /// Refractive index `nu` of the waveguide.
    pub refractive_index: f64,
    /// Amplitude attenuation factor `a`, 1/m.
    pub attenuation: f64,
}

/// Phase shift and attenuation from every feed to every element.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveguideResponse {
    /// `N x K`, unit modulus.
    pub q_matrix: DMatrix<Complex64>,
    /// `N x K`, entries in (0, 1].
    pub gamma_matrix: DMatrix<f64>,
    pub distances: DMatrix<f64>,
    pub refractive_index: f64,
    pub attenuation_factor: f64,
    pub wavelength: f64,
}

impl WaveguideResponse {
    pub fn n_elements(&self) -> usize {
        self.q_matrix.nrows()
    }

    pub fn n_feeds(&self) -> usize {
        self.q_matrix.ncols()
    }

    /// Hadamard product `Q o Gamma`.
    pub fn feed_matrix(&self) -> DMatrix<Complex64> {
        self.q_matrix
            .zip_map(&self.gamma_matrix, |q, g| q * Complex64::from(g))
    }

    /// Per-element amplitude when the same unit signal drives every feed:
    /// row sums of `Q o Gamma`.
    pub fn feed_sum(&self) -> DVector<Complex64> {
        let g = self.feed_matrix();
        DVector::from_fn(g.nrows(), |n, _| g.row(n).sum())
    }

    /// Per-element `sum_k gamma_{n,k}^2`, the receive-noise weight.
    pub fn feed_energy(&self) -> DVector<f64> {
        DVector::from_fn(self.gamma_matrix.nrows(), |n, _| {
            self.gamma_matrix.row(n).iter().map(|g| g * g).sum()
        })
    }
}

/// Builds `Q` and `Gamma` for a panel.
pub fn waveguide_response(
    panel: &RhsPanel,
    wavelength: f64,
    nu: f64,
    a: f64,
) -> Result<WaveguideResponse> {
    if !(wavelength.is_finite() && wavelength > 0.0) {
        return Err(Error::InvalidPanel(format!(
            "wavelength must be positive, got {wavelength}"
        )));
    }
    if !(a.is_finite() && a >= 0.0) || !nu.is_finite() {
        return Err(Error::InvalidPanel(format!(
            "invalid waveguide constants nu = {nu}, a = {a}"
        )));
    }
    panel.validate()?;
    let distances = panel.feed_distances();
    if distances.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidPanel("non-finite feed distance".into()));
    }
    let q_matrix = distances.map(|d| Complex64::from_polar(1.0, -2.0 * PI * nu * d / wavelength));
    let gamma_matrix = distances.map(|d| (-a * d).exp());
    Ok(WaveguideResponse {
        q_matrix,
        gamma_matrix,
        distances,
        refractive_index: nu,
        attenuation_factor: a,
        wavelength,
    })
}

impl WaveguideParams {
    pub fn response(&self, panel: &RhsPanel) -> Result<WaveguideResponse> {
        waveguide_response(panel, self.wavelength, self.refractive_index, self.attenuation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAMBDA: f64 = 0.01;

    #[test]
    fn single_element_sits_at_center() {
        let p = RhsPanel::new(1, 1, LAMBDA / 3.0, 1, Vector3::zeros()).unwrap();
        let pos = element_positions(&p);
        assert_eq!(pos.len(), 1);
        assert_eq!(pos[0], Vector3::zeros());
    }

    #[test]
    fn two_by_one_is_symmetric() {
        let p = RhsPanel::new(2, 1, 1.0 / 300.0, 1, Vector3::zeros()).unwrap();
        let pos = element_positions(&p);
        assert!((pos[0].x + 1.0 / 600.0).abs() < 1e-15);
        assert!((pos[1].x - 1.0 / 600.0).abs() < 1e-15);
        assert!(pos.iter().all(|q| q.y == 0.0 && q.z == 0.0));
    }

    #[test]
    fn ten_by_eight_min_distance_is_spacing() {
        let s = LAMBDA / 3.0;
        let p = RhsPanel::new(10, 8, s, 5, Vector3::new(0.3, -1.0, 2.0)).unwrap();
        let pos = element_positions(&p);
        assert_eq!(pos.len(), 80);
        let mut min = f64::INFINITY;
        for i in 0..pos.len() {
            for j in i + 1..pos.len() {
                min = min.min((pos[i] - pos[j]).norm());
            }
        }
        assert!((min - s).abs() < 1e-12, "min pairwise distance {min}");
    }

    #[test]
    fn zero_distance_gives_unit_response() {
        let p = RhsPanel::new(1, 1, LAMBDA / 3.0, 1, Vector3::zeros())
            .unwrap()
            .with_feeds(vec![[0.0, 0.0]])
            .unwrap();
        let w = waveguide_response(&p, LAMBDA, 3f64.sqrt(), 5.0).unwrap();
        assert_eq!(w.q_matrix[(0, 0)], Complex64::new(1.0, 0.0));
        assert_eq!(w.gamma_matrix[(0, 0)], 1.0);
    }

    #[test]
    fn full_phase_cycle() {
        let nu = 3f64.sqrt();
        let d = LAMBDA / nu;
        // 2x1 panel with one feed at the left element, right element is D = spacing away.
        let p = RhsPanel::new(2, 1, d, 1, Vector3::zeros())
            .unwrap()
            .with_feeds(vec![[-d / 2.0, 0.0]])
            .unwrap();
        let w = waveguide_response(&p, LAMBDA, nu, 0.0).unwrap();
        let q = w.q_matrix[(1, 0)];
        assert!((q - Complex64::new(1.0, 0.0)).norm() < 1e-12, "{q}");
    }

    #[test]
    fn attenuation_scalar() {
        // a = 5, D = 0.1 m
        let p = RhsPanel::new(2, 1, 0.1, 1, Vector3::zeros())
            .unwrap()
            .with_feeds(vec![[-0.05, 0.0]])
            .unwrap();
        let w = waveguide_response(&p, LAMBDA, 3f64.sqrt(), 5.0).unwrap();
        assert!((w.gamma_matrix[(1, 0)] - 0.606531).abs() < 1e-6);
        assert!((w.gamma_matrix[(1, 0)] - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn response_invariants_hold() {
        let p = RhsPanel::new(4, 5, LAMBDA / 3.0, 5, Vector3::zeros()).unwrap();
        let w = waveguide_response(&p, LAMBDA, 3f64.sqrt(), 5.0).unwrap();
        for n in 0..w.n_elements() {
            for k in 0..w.n_feeds() {
                let d = w.distances[(n, k)];
                assert!((w.q_matrix[(n, k)].norm() - 1.0).abs() < 1e-12);
                let g = w.gamma_matrix[(n, k)];
                assert!(g > 0.0 && g <= 1.0);
                assert_eq!(g == 1.0, d == 0.0);
                assert!((g - (-5.0 * d).exp()).abs() < 1e-15);
            }
        }
        // Monotone attenuation across all entry pairs.
        let d: Vec<_> = w.distances.iter().copied().collect();
        let g: Vec<_> = w.gamma_matrix.iter().copied().collect();
        for i in 0..d.len() {
            for j in 0..d.len() {
                if d[i] + 1e-12 < d[j] {
                    assert!(g[i] > g[j]);
                } else if d[i] < d[j] {
                    assert!(g[i] >= g[j]);
                }
            }
        }
    }

    #[test]
    fn tx_and_rx_reciprocity() {
        let tx = RhsPanel::new(3, 3, LAMBDA / 3.0, 5, Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let rx = tx.translated(Vector3::new(-0.5, 1.0, 0.0));
        let a = waveguide_response(&tx, LAMBDA, 3f64.sqrt(), 5.0).unwrap();
        let b = waveguide_response(&rx, LAMBDA, 3f64.sqrt(), 5.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ordering_is_stable() {
        let p = RhsPanel::new(3, 4, LAMBDA / 3.0, 2, Vector3::new(0.1, 0.2, 0.3)).unwrap();
        assert_eq!(element_positions(&p), element_positions(&p));
        // x-major: the second element moves along y.
        let local = p.local_positions();
        assert_eq!(local[0][0], local[1][0]);
        assert!(local[1][1] > local[0][1]);
    }

    #[test]
    fn rejects_bad_panels() {
        assert!(RhsPanel::new(0, 2, 0.01, 1, Vector3::zeros()).is_err());
        assert!(RhsPanel::new(2, 2, 0.0, 1, Vector3::zeros()).is_err());
        assert!(RhsPanel::new(2, 2, 0.01, 0, Vector3::zeros()).is_err());
        let p = RhsPanel::new(2, 2, 0.01, 1, Vector3::zeros()).unwrap();
        assert!(p.clone().with_feeds(vec![[0.5, 0.0]]).is_err());
        assert!(p
            .with_orientation([Vector3::x(), Vector3::new(0.1, 1.0, 0.0)])
            .is_err());
    }

    #[test]
    fn near_square_shapes() {
        assert_eq!(near_square_shape(40), (5, 8));
        assert_eq!(near_square_shape(16), (4, 4));
        assert_eq!(near_square_shape(7), (1, 7));
        assert_eq!(near_square_shape(1), (1, 1));
    }
}
