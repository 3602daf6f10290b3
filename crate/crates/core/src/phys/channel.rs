//! Wireless channels: Rayleigh direct links, Rician UE→UAV links with the
//! reflecting-array response, deterministic UAV→CU links, and their
//! composition into the effective per-user channel at the CU.

use ndarray::{Array2, Array3, Array4};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::topology::{dist3, NetworkTopology, UavPose};
use crate::error::{Error, Result};
use crate::rng::complex_normal;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Large-scale propagation and receiver parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Linear path gain at the 1 m reference distance.
    pub ref_path_gain: f64,
    /// Exponent of the NLoS ground links (UE → CU).
    pub pathloss_exp_nlos: f64,
    /// Exponent of the LoS links through the air (UE → UAV, UAV → CU).
    pub pathloss_exp_los: f64,
    /// When set, every link uses this exponent.
    pub single_exponent: Option<f64>,
    /// Rician factor per sub-carrier (linear); its length fixes `N`.
    pub rician_k: Vec<f64>,
    /// Receiver noise power in watts.
    pub noise_power: f64,
    /// Sub-carrier bandwidth in Hz.
    pub bandwidth: f64,
    pub carrier_frequency: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.ref_path_gain > 0.0
            && self.nlos_exponent() >= 2.0
            && self.los_exponent() >= 2.0
            && !self.rician_k.is_empty()
            && self.rician_k.iter().all(|k| *k >= 0.0 && k.is_finite())
            && self.noise_power > 0.0
            && self.bandwidth > 0.0
            && self.carrier_frequency > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("channel parameters out of range".into()))
        }
    }

    pub fn num_subcarriers(&self) -> usize {
        self.rician_k.len()
    }

    pub fn nlos_exponent(&self) -> f64 {
        self.single_exponent.unwrap_or(self.pathloss_exp_nlos)
    }

    pub fn los_exponent(&self) -> f64 {
        self.single_exponent.unwrap_or(self.pathloss_exp_los)
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    /// Power gain `rho * d^(-alpha)`.
    pub fn path_gain(&self, distance: f64, exponent: f64) -> f64 {
        self.ref_path_gain * distance.powf(-exponent)
    }
}

/// Per-UAV, per-element reflection amplitudes and phases (`J x L` each).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReflectionConfig {
    pub amplitude: Array2<f64>,
    pub phase: Array2<f64>,
}

impl ReflectionConfig {
    pub fn uniform(num_uavs: usize, num_elements: usize, amplitude: f64, phase: f64) -> Self {
        Self {
            amplitude: Array2::from_elem((num_uavs, num_elements), amplitude),
            phase: Array2::from_elem((num_uavs, num_elements), phase),
        }
    }

    pub fn num_uavs(&self) -> usize {
        self.amplitude.nrows()
    }

    pub fn num_elements(&self) -> usize {
        self.amplitude.ncols()
    }

    /// Diagonal entry `beta * exp(i theta)` of the reflection matrix.
    pub fn coefficient(&self, j: usize, l: usize) -> Complex64 {
        Complex64::from_polar(self.amplitude[[j, l]], self.phase[[j, l]])
    }
}

/// Uniform linear array response for direction cosine `psi`.
pub fn steering_vector(num_elements: usize, spacing: f64, wavelength: f64, psi: f64) -> Vec<Complex64> {
    let k = 2.0 * std::f64::consts::PI / wavelength * spacing * psi;
    (0..num_elements).map(|l| Complex64::from_polar(1.0, -k * l as f64)).collect()
}

/// Direct UE → CU channels, indexed `[n, m, u]`.
pub fn sample_direct_channel<R: Rng + ?Sized>(
    topo: &NetworkTopology,
    params: &ChannelParams,
    rng: &mut R,
) -> Array3<Complex64> {
    let (n_sc, m_ant, users) = (params.num_subcarriers(), topo.num_antennas, topo.num_users());
    let amp: Vec<f64> = topo
        .user_positions
        .iter()
        .map(|p| params.path_gain(topo.distance_to_cu(*p), params.nlos_exponent()).sqrt())
        .collect();
    let mut h = Array3::zeros((n_sc, m_ant, users));
    for n in 0..n_sc {
        for m in 0..m_ant {
            for u in 0..users {
                h[[n, m, u]] = complex_normal(rng) * amp[u];
            }
        }
    }
    h
}

/// UE → UAV channels, indexed `[j, n, l, u]`.
pub fn sample_ue_uav_channel<R: Rng + ?Sized>(
    topo: &NetworkTopology,
    pose: &UavPose,
    params: &ChannelParams,
    rng: &mut R,
) -> Array4<Complex64> {
    let (n_sc, l_el, users) = (params.num_subcarriers(), topo.num_elements, topo.num_users());
    let lambda = params.wavelength();
    let spacing = topo.element_spacing * lambda;
    let mut h = Array4::zeros((pose.num_uavs(), n_sc, l_el, users));
    for j in 0..pose.num_uavs() {
        let q = pose.position(j);
        let geometry: Vec<(f64, Vec<Complex64>)> = topo
            .user_positions
            .iter()
            .map(|a| {
                let d = dist3(*a, q);
                let psi = (a[0] - q[0]) / d;
                let amp = params.path_gain(d, params.los_exponent()).sqrt();
                (amp, steering_vector(l_el, spacing, lambda, psi))
            })
            .collect();
        for n in 0..n_sc {
            let kappa = params.rician_k[n];
            let w_los = (kappa / (1.0 + kappa)).sqrt();
            let w_nlos = (1.0 / (1.0 + kappa)).sqrt();
            for (u, (amp, los)) in geometry.iter().enumerate() {
                for l in 0..l_el {
                    let nlos = complex_normal(rng);
                    h[[j, n, l, u]] = (los[l] * w_los + nlos * w_nlos) * *amp;
                }
            }
        }
    }
    h
}

/// Deterministic UAV → CU channels, indexed `[j, m, l]`.
///
/// The array response has no antenna dependence, so every row of `G_j` is the
/// same.
pub fn uav_cu_channel(topo: &NetworkTopology, pose: &UavPose, params: &ChannelParams) -> Result<Array3<Complex64>> {
    let lambda = params.wavelength();
    let spacing = topo.element_spacing * lambda;
    let mut g = Array3::zeros((pose.num_uavs(), topo.num_antennas, topo.num_elements));
    for j in 0..pose.num_uavs() {
        let q = pose.position(j);
        let d = topo.distance_to_cu(q);
        if d <= 0.0 {
            return Err(Error::Geometry(format!("UAV {j} coincides with the central unit")));
        }
        let psi = (q[0] - topo.cu_position[0]) / d;
        let amp = params.path_gain(d, params.los_exponent()).sqrt();
        let resp = steering_vector(topo.num_elements, spacing, lambda, psi);
        for m in 0..topo.num_antennas {
            for (l, r) in resp.iter().enumerate() {
                g[[j, m, l]] = r * amp;
            }
        }
    }
    Ok(g)
}

/// All channel tensors of one slot plus the composed effective channel
/// `[n, m, u]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub direct: Array3<Complex64>,
    pub ue_uav: Array4<Complex64>,
    pub uav_cu: Array3<Complex64>,
    pub effective: Array3<Complex64>,
}

impl ChannelRealization {
    pub fn num_subcarriers(&self) -> usize {
        self.effective.shape()[0]
    }

    pub fn num_users(&self) -> usize {
        self.effective.shape()[2]
    }

    /// `||h_eff(u, n)||^2` summed over receive antennas.
    pub fn gain(&self, u: usize, n: usize) -> f64 {
        let m_ant = self.effective.shape()[1];
        (0..m_ant).map(|m| self.effective[[n, m, u]].norm_sqr()).sum()
    }

    /// Largest relative deviation between the stored effective channel and a
    /// fresh composition under `reflection`.
    pub fn recompose_error(&self, reflection: &ReflectionConfig) -> Result<f64> {
        let fresh = compose(&self.direct, &self.ue_uav, &self.uav_cu, reflection)?;
        let scale = self.effective.iter().map(|c| c.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        Ok(fresh
            .iter()
            .zip(self.effective.iter())
            .map(|(a, b)| (a - b).norm() / scale)
            .fold(0.0, f64::max))
    }

    pub fn is_finite(&self) -> bool {
        let fin = |c: &Complex64| c.re.is_finite() && c.im.is_finite();
        self.direct.iter().all(fin)
            && self.ue_uav.iter().all(fin)
            && self.uav_cu.iter().all(fin)
            && self.effective.iter().all(fin)
    }
}

fn compose(
    direct: &Array3<Complex64>,
    ue_uav: &Array4<Complex64>,
    uav_cu: &Array3<Complex64>,
    reflection: &ReflectionConfig,
) -> Result<Array3<Complex64>> {
    let [n_sc, m_ant, users] = [direct.shape()[0], direct.shape()[1], direct.shape()[2]];
    let [j_uav, n2, l_el, u2] = [ue_uav.shape()[0], ue_uav.shape()[1], ue_uav.shape()[2], ue_uav.shape()[3]];
    let [j2, m2, l2] = [uav_cu.shape()[0], uav_cu.shape()[1], uav_cu.shape()[2]];
    if n2 != n_sc
        || u2 != users
        || j2 != j_uav
        || m2 != m_ant
        || l2 != l_el
        || reflection.num_uavs() != j_uav
        || reflection.num_elements() != l_el
    {
        return Err(Error::Dimension(format!(
            "direct {:?}, ue-uav {:?}, uav-cu {:?}, reflection {}x{}",
            direct.shape(),
            ue_uav.shape(),
            uav_cu.shape(),
            reflection.num_uavs(),
            reflection.num_elements()
        )));
    }
    let mut eff = direct.clone();
    let mut weights = vec![Complex64::new(0.0, 0.0); l_el];
    for j in 0..j_uav {
        let theta: Vec<Complex64> = (0..l_el).map(|l| reflection.coefficient(j, l)).collect();
        for n in 0..n_sc {
            for u in 0..users {
                for l in 0..l_el {
                    weights[l] = ue_uav[[j, n, l, u]].conj() * theta[l];
                }
                for m in 0..m_ant {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for l in 0..l_el {
                        acc += weights[l] * uav_cu[[j, m, l]];
                    }
                    eff[[n, m, u]] += acc;
                }
            }
        }
    }
    Ok(eff)
}

/// `h_eff(u, n) = sum_j h_{u,j,n}^H Theta_j G_j + h_direct(u, n)`, taken as an
/// M-vector per user and sub-carrier.
pub fn compose_effective_channel(
    direct: Array3<Complex64>,
    ue_uav: Array4<Complex64>,
    uav_cu: Array3<Complex64>,
    reflection: &ReflectionConfig,
) -> Result<ChannelRealization> {
    let effective = compose(&direct, &ue_uav, &uav_cu, reflection)?;
    Ok(ChannelRealization { direct, ue_uav, uav_cu, effective })
}

/// Expected SNR of user `u` at transmit power `power` when every UAV steers
/// its array coherently toward it. Used for observations and baseline
/// preferences, never for rates.
pub fn expected_snr(topo: &NetworkTopology, params: &ChannelParams, pose: &UavPose, u: usize, amplitude: f64, power: f64) -> f64 {
    let a = topo.user_positions[u];
    let m = topo.num_antennas as f64;
    let l = topo.num_elements as f64;
    let kappa = params.rician_k.iter().sum::<f64>() / params.rician_k.len() as f64;
    let direct = params.path_gain(topo.distance_to_cu(a), params.nlos_exponent());
    let cascade: f64 = (0..pose.num_uavs())
        .map(|j| {
            let q = pose.position(j);
            let g1 = params.path_gain(dist3(a, q), params.los_exponent());
            let g2 = params.path_gain(topo.distance_to_cu(q), params.los_exponent());
            g1 * g2 * amplitude * amplitude * (l * l * kappa / (1.0 + kappa) + l / (1.0 + kappa))
        })
        .sum();
    m * (direct + cascade) * power / params.noise_power
}
