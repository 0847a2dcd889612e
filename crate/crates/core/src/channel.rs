//! Line-of-sight channels between uniform linear arrays.
//!
//! The base station array sits at the origin along the y-axis. Receivers are
//! ULAs parallel to it whose midpoint is given in polar form (distance from
//! the origin, azimuth measured from the x-axis towards +y). Two models are
//! provided: the spherical-wave near-field channel, where every element pair
//! has its own distance, and the planar-wave far-field baseline built from
//! classical steering vectors.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{ensure_finite, ComplexMatrix};

/// Propagation speed used for wavelengths and path loss (m/s).
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

pub fn wavelength(f: f64) -> f64 {
    SPEED_OF_LIGHT / f
}

pub type Vec3 = [f64; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Position of a receiver midpoint relative to the base-station midpoint.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PolarLocation {
    /// Meters.
    pub distance: f64,
    /// Radians, in (-π/2, π/2); zero is broadside.
    pub azimuth: f64,
}

impl PolarLocation {
    pub fn new(distance: f64, azimuth: f64) -> Result<Self> {
        if !(distance > 0.0 && distance.is_finite()) {
            return Err(Error::Geometry(format!("distance must be positive, got {distance}")));
        }
        if !(azimuth.abs() < PI / 2.0) {
            return Err(Error::Geometry(format!("azimuth must lie in (-pi/2, pi/2), got {azimuth}")));
        }
        Ok(Self { distance, azimuth })
    }

    pub fn from_degrees(distance: f64, azimuth_deg: f64) -> Result<Self> {
        Self::new(distance, azimuth_deg.to_radians())
    }

    pub fn to_cartesian(&self) -> Vec3 {
        [
            self.distance * self.azimuth.cos(),
            self.distance * self.azimuth.sin(),
            0.0,
        ]
    }
}

/// Uniform linear array.
///
/// Element `m` sits at `center + (m - (n-1)/2) * spacing * axis`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    pub num_elements: usize,
    pub spacing: f64,
    pub center: Vec3,
    /// Unit vector.
    pub axis: Vec3,
}

impl ArrayGeometry {
    pub fn new(num_elements: usize, spacing: f64, center: Vec3, axis: Vec3) -> Result<Self> {
        if num_elements == 0 {
            return Err(Error::Geometry("array needs at least one element".into()));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Geometry(format!("spacing must be positive, got {spacing}")));
        }
        let len = norm(axis);
        if !(len > 0.0 && len.is_finite()) {
            return Err(Error::Geometry("array axis must be a nonzero vector".into()));
        }
        Ok(Self {
            num_elements,
            spacing,
            center,
            axis: [axis[0] / len, axis[1] / len, axis[2] / len],
        })
    }

    /// Base-station array: midpoint at the origin, elements along +y.
    pub fn base_station(num_elements: usize, spacing: f64) -> Result<Self> {
        Self::new(num_elements, spacing, [0.0; 3], [0.0, 1.0, 0.0])
    }

    /// Receiver array parallel to the base station, midpoint at `location`.
    pub fn receiver(num_elements: usize, spacing: f64, location: PolarLocation) -> Result<Self> {
        Self::new(num_elements, spacing, location.to_cartesian(), [0.0, 1.0, 0.0])
    }

    /// Signed element offset `m - (n-1)/2`, in units of the spacing.
    pub fn offset(&self, index: usize) -> f64 {
        index as f64 - (self.num_elements as f64 - 1.0) / 2.0
    }

    pub fn element_position(&self, index: usize) -> Vec3 {
        let s = self.offset(index) * self.spacing;
        [
            self.center[0] + s * self.axis[0],
            self.center[1] + s * self.axis[1],
            self.center[2] + s * self.axis[2],
        ]
    }

    /// Physical length spanned by the elements.
    pub fn aperture(&self) -> f64 {
        (self.num_elements as f64 - 1.0) * self.spacing
    }

    fn check_index(&self, index: usize) -> Result<()> {
        if index < self.num_elements {
            Ok(())
        } else {
            Err(Error::Geometry(format!(
                "element index {index} out of range for a {}-element array",
                self.num_elements
            )))
        }
    }
}

/// Distance from the transmit-array midpoint to receiver element `rx_index`
/// (the per-row phase reference) and the sine of its azimuth with respect to
/// the transmit axis.
pub fn reference_polar(tx: &ArrayGeometry, rx: &ArrayGeometry, rx_index: usize) -> (f64, f64) {
    let rel = sub(rx.element_position(rx_index), tx.center);
    let d_ref = norm(rel);
    (d_ref, dot(rel, tx.axis) / d_ref)
}

/// Distance between transmit element `tx_index` and receiver element
/// `rx_index`, using the law-of-cosines form
/// `sqrt(d_ref² + (m̃d)² − 2 m̃d d_ref sinθ)`.
pub fn pair_distance(
    tx: &ArrayGeometry,
    tx_index: usize,
    rx: &ArrayGeometry,
    rx_index: usize,
) -> Result<f64> {
    tx.check_index(tx_index)?;
    rx.check_index(rx_index)?;
    let (d_ref, sin_theta) = reference_polar(tx, rx, rx_index);
    let s = tx.offset(tx_index) * tx.spacing;
    let sq = d_ref * d_ref + s * s - 2.0 * s * d_ref * sin_theta;
    let d = sq.max(0.0).sqrt();
    if !(d > f64::EPSILON * (d_ref + s.abs())) || !d.is_finite() {
        return Err(Error::Geometry(format!(
            "transmit element {tx_index} and receive element {rx_index} are co-located"
        )));
    }
    Ok(d)
}

/// Which propagation model produced a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelModel {
    Near,
    Far,
}

impl std::str::FromStr for ChannelModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "near" => Ok(ChannelModel::Near),
            "far" => Ok(ChannelModel::Far),
            other => Err(Error::Argument(format!("unknown channel model `{other}` (expected near|far)"))),
        }
    }
}

/// Receive × transmit channel together with the geometry that produced it.
#[derive(Debug, Clone)]
pub struct ChannelMatrix {
    pub matrix: ComplexMatrix,
    pub carrier_frequency: f64,
    pub model: ChannelModel,
    pub tx: ArrayGeometry,
    pub rx: ArrayGeometry,
}

impl ChannelMatrix {
    pub fn rx_count(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn tx_count(&self) -> usize {
        self.matrix.ncols()
    }

    /// `H / σ`, the noise-normalized matrix the optimizers work with.
    pub fn noise_normalized(&self, noise_power: f64) -> ComplexMatrix {
        &self.matrix * Complex64::new(noise_power.sqrt().recip(), 0.0)
    }
}

fn check_frequency(f: f64) -> Result<()> {
    if f > 0.0 && f.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("carrier frequency must be positive, got {f}")))
    }
}

/// Spherical-wave LoS channel.
///
/// Entry `(r, m)` is `(1/√M)·c/(4π f d_{r,m})·exp(−j 2πf/c (d_{r,m} − d_r))`
/// where `d_r` is the distance from the transmit midpoint to receive element
/// `r`. The centre transmit element therefore has zero phase in every row.
pub fn nearfield_channel(tx: &ArrayGeometry, rx: &ArrayGeometry, f: f64) -> Result<ChannelMatrix> {
    check_frequency(f)?;
    let k = 2.0 * PI * f / SPEED_OF_LIGHT;
    let norm_tx = (tx.num_elements as f64).sqrt().recip();
    let mut h = ComplexMatrix::zeros(rx.num_elements, tx.num_elements);
    for r in 0..rx.num_elements {
        let (d_ref, sin_theta) = reference_polar(tx, rx, r);
        for m in 0..tx.num_elements {
            let d = pair_distance(tx, m, rx, r)?;
            let s = tx.offset(m) * tx.spacing;
            // d - d_ref without cancellation
            let path_difference = (s * s - 2.0 * s * d_ref * sin_theta) / (d + d_ref);
            let gain = norm_tx * SPEED_OF_LIGHT / (4.0 * PI * f * d);
            h[(r, m)] = Complex64::from_polar(gain, -k * path_difference);
        }
    }
    ensure_finite("nearfield_channel", &h)?;
    Ok(ChannelMatrix {
        matrix: h,
        carrier_frequency: f,
        model: ChannelModel::Near,
        tx: tx.clone(),
        rx: rx.clone(),
    })
}

/// Planar-wave baseline.
///
/// All entries share the path loss of the midpoint-to-midpoint distance
/// `d_ref`; the phase is the product of a transmit steering term
/// `exp(+j k m̃ d_tx sinθ)` and a receive term `exp(−j k m̃_r d_rx sinθ)`,
/// with `θ` the azimuth of the receiver midpoint. The transmit sign matches
/// the first-order expansion of the near-field phase so both models agree
/// beyond the Rayleigh distance.
pub fn farfield_channel(tx: &ArrayGeometry, rx: &ArrayGeometry, f: f64) -> Result<ChannelMatrix> {
    check_frequency(f)?;
    let rel = sub(rx.center, tx.center);
    let d_ref = norm(rel);
    if !(d_ref > 0.0) {
        return Err(Error::Geometry("receiver midpoint coincides with transmitter".into()));
    }
    let sin_theta = dot(rel, tx.axis) / d_ref;
    let k = 2.0 * PI * f / SPEED_OF_LIGHT;
    let gain = (tx.num_elements as f64).sqrt().recip() * SPEED_OF_LIGHT / (4.0 * PI * f * d_ref);
    let h = ComplexMatrix::from_fn(rx.num_elements, tx.num_elements, |r, m| {
        let phase = k * sin_theta * (tx.offset(m) * tx.spacing - rx.offset(r) * rx.spacing);
        Complex64::from_polar(gain, phase)
    });
    ensure_finite("farfield_channel", &h)?;
    Ok(ChannelMatrix {
        matrix: h,
        carrier_frequency: f,
        model: ChannelModel::Far,
        tx: tx.clone(),
        rx: rx.clone(),
    })
}

pub fn build_channel(
    model: ChannelModel,
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    f: f64,
) -> Result<ChannelMatrix> {
    match model {
        ChannelModel::Near => nearfield_channel(tx, rx, f),
        ChannelModel::Far => farfield_channel(tx, rx, f),
    }
}

/// `2 (D₁ + D₂)² / λ`.
pub fn rayleigh_distance(aperture_tx: f64, aperture_rx: f64, f: f64) -> Result<f64> {
    check_frequency(f)?;
    if aperture_tx < 0.0 || aperture_rx < 0.0 {
        return Err(Error::Argument("apertures must be non-negative".into()));
    }
    let total = aperture_tx + aperture_rx;
    Ok(2.0 * total * total / wavelength(f))
}
