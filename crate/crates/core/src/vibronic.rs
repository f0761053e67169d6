//! Electron-phonon coupling and the zero-temperature emission lineshape.
//!
//! Pipeline: mass-weighted displacements projected on ground-state modes
//! (ΔQ_λ), partial Huang-Rhys factors S_λ, the Gaussian-broadened spectral
//! density S(ħω), and the generating function g(t) = exp(S(t) − S(0)) whose
//! Fourier transform is the sideband.
//!
//! Normalization conventions:
//! * every Gaussian term of S(ħω) carries area S_λ, so ∫S(ħω) = Σ S_λ;
//! * S(t) = ∫ S(ħω) e^{−iωt} d(ħω), hence S(0) = Σ S_λ and the zero-phonon
//!   weight of the unbroadened lineshape is exactly e^{−S}.
//!
//! Energies are in meV throughout. Grids are handled in units of the grid
//! spacing Δ: the phonon-energy axis ε_k = kΔ is sampled on a periodic FFT
//! grid, and time only appears implicitly as the conjugate index.

use std::f64::consts::PI;

use nalgebra::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::model::{validate_pair, GeometryPair, ModelError, Spectrum};
use crate::phonons::PhononBasis;
use crate::units::{HBAR_SQ, MEV_PER_EV};

type C64 = Complex<f64>;

/// ħ in meV·ps.
const HBAR_MEV_PS: f64 = 0.658_211_956_9;
const MIN_FFT_LEN: usize = 8192;
/// Fraction of the unbroadened spectral weight allowed outside the window.
const MAX_OUTSIDE_WEIGHT: f64 = 1e-3;
/// Gaussian terms are evaluated out to this many σ.
const GAUSS_REACH: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VibronicError {
    #[error("mode set covers {modes} atoms but the geometry has {sites}")]
    DimensionMismatch { modes: usize, sites: usize },
    #[error("grid spacing {spacing} meV exceeds sigma/3 = {limit} meV")]
    GridTooCoarse { spacing: f64, limit: f64 },
    #[error("{:.3}% of the spectral weight falls outside the energy window", 100.0 * .outside_fraction)]
    WindowTooNarrow { outside_fraction: f64 },
    #[error("invalid lineshape configuration: {0}")]
    InvalidConfig(String),
    #[error("no peaks found")]
    NoPeaks,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// ΔQ_λ (√amu·Å) for every mode of a basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeProjection {
    pub energies: Vec<f64>,
    pub delta_q: Vec<f64>,
}

impl ModeProjection {
    /// Σ_λ ΔQ_λ²
    pub fn sum_of_squares(&self) -> f64 {
        self.delta_q.iter().map(|q| q * q).sum()
    }
}

/// Per-mode coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeCoupling {
    /// ħω_λ, meV
    pub energy: f64,
    /// ΔQ_λ, √amu·Å
    pub delta_q: f64,
    /// S_λ
    pub hr: f64,
    /// Set for modes with ħω_λ ≤ 0; they never contribute to the lineshape.
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VibronicCoupling {
    modes: Vec<ModeCoupling>,
    total_hr: f64,
}

impl VibronicCoupling {
    fn from_modes(modes: Vec<ModeCoupling>) -> Self {
        let total_hr = modes.iter().map(|m| m.hr).sum();
        Self { modes, total_hr }
    }

    /// Coupling specified directly by (energy meV, S_λ) pairs. ΔQ_λ is
    /// back-computed for positive energies.
    pub fn from_hr_factors(entries: &[(f64, f64)]) -> Result<Self, VibronicError> {
        let modes = entries
            .iter()
            .map(|&(energy, hr)| {
                if !(hr >= 0.0) || !hr.is_finite() || !energy.is_finite() {
                    return Err(VibronicError::InvalidConfig(format!("mode at {energy} meV has S = {hr}")));
                }
                let excluded = energy <= 0.0;
                if excluded && hr > 0.0 {
                    return Err(VibronicError::InvalidConfig(format!(
                        "mode at {energy} meV is not a real vibration but has S = {hr}"
                    )));
                }
                let delta_q = if excluded { 0.0 } else { (2.0 * HBAR_SQ * hr / (energy / MEV_PER_EV)).sqrt() };
                Ok(ModeCoupling { energy, delta_q, hr, excluded })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_modes(modes))
    }

    pub fn modes(&self) -> &[ModeCoupling] {
        &self.modes
    }

    /// S = Σ S_λ
    pub fn total_hr(&self) -> f64 {
        self.total_hr
    }

    /// Highest energy among real (non-excluded) modes, 0 if none.
    pub fn max_energy(&self) -> f64 {
        self.modes.iter().filter(|m| !m.excluded).map(|m| m.energy).fold(0.0, f64::max)
    }

    /// Modes with energy above `cutoff` meV removed.
    pub fn truncated(&self, cutoff: f64) -> Self {
        Self::from_modes(self.modes.iter().filter(|m| m.energy <= cutoff).copied().collect())
    }

    /// Indices of modes excluded from the lineshape.
    pub fn excluded_modes(&self) -> Vec<usize> {
        (0..self.modes.len()).filter(|&i| self.modes[i].excluded).collect()
    }

    fn active(&self) -> impl Iterator<Item = &ModeCoupling> {
        self.modes.iter().filter(|m| !m.excluded && m.hr > 0.0)
    }
}

/// ΔQ_λ = Σ_α √m_α (R_e,α − R_g,α)·u_λ,α using the ground-state modes.
///
/// Each eigenvector is defined up to a phase; the projection is reported as
/// its modulus carrying the sign of its dominant real or imaginary part, so
/// real eigenvectors give the plain signed projection.
pub fn delta_q(pair: &GeometryPair, basis: &PhononBasis) -> Result<ModeProjection, VibronicError> {
    let sites = pair.ground().n_atoms();
    if basis.n_atoms() != sites {
        return Err(VibronicError::DimensionMismatch { modes: basis.n_atoms(), sites });
    }
    let displacements = validate_pair(pair)?;
    let weighted: Vec<f64> = pair
        .ground()
        .sites()
        .iter()
        .zip(&displacements)
        .flat_map(|(site, d)| {
            let w = site.mass.sqrt();
            [w * d.x, w * d.y, w * d.z]
        })
        .collect();
    let u = basis.eigenvectors();
    let delta_q = (0..basis.n_modes())
        .map(|lam| {
            let z: C64 = weighted.iter().enumerate().map(|(r, &x)| u[(r, lam)].conj() * x).sum();
            let sign = if z.re.abs() >= z.im.abs() { z.re.signum() } else { z.im.signum() };
            if z.im == 0.0 {
                z.re
            } else {
                sign * z.norm()
            }
        })
        .collect();
    Ok(ModeProjection { energies: basis.frequencies().to_vec(), delta_q })
}

/// S_λ = ħω_λ·ΔQ_λ²/(2ħ²); modes with ħω_λ ≤ 0 get S_λ = 0 and are flagged.
pub fn hr_factors(projection: &ModeProjection) -> VibronicCoupling {
    let modes = projection
        .energies
        .iter()
        .zip(&projection.delta_q)
        .map(|(&energy, &dq)| {
            let excluded = energy <= 0.0;
            let hr = if excluded { 0.0 } else { (energy / MEV_PER_EV) * (dq * dq) / (2.0 * HBAR_SQ) };
            ModeCoupling { energy, delta_q: dq, hr, excluded }
        })
        .collect();
    VibronicCoupling::from_modes(modes)
}

/// Zero-phonon weight e^{−S}.
pub fn debye_waller(coupling: &VibronicCoupling) -> f64 {
    (-coupling.total_hr()).exp()
}

/// Photon-energy window of an emission spectrum, in meV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyWindow {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineshapeConfig {
    /// Gaussian broadening of the spectral density, meV.
    pub sigma: f64,
    /// ZPL photon energy, meV.
    pub zpl_energy: f64,
    /// Grid spacing, meV. Must not exceed sigma/3.
    pub spacing: f64,
    /// Explicit window; when unset it is derived from the coupling.
    pub window: Option<EnergyWindow>,
    /// Lorentzian half-width γ of the time-domain damping exp(−γ|t|/ħ), meV.
    pub zpl_width: f64,
    /// Multiply by (photon energy)³.
    pub cubic_prefactor: bool,
}

impl LineshapeConfig {
    pub fn new(zpl_energy: f64) -> Self {
        Self { sigma: 5.0, zpl_energy, spacing: 0.5, window: None, zpl_width: 1.0, cubic_prefactor: true }
    }

    fn check_grid(&self) -> Result<(), VibronicError> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(VibronicError::InvalidConfig(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.spacing > 0.0) || !self.spacing.is_finite() {
            return Err(VibronicError::InvalidConfig(format!("spacing must be positive, got {}", self.spacing)));
        }
        let limit = self.sigma / 3.0;
        if self.spacing > limit * (1.0 + 1e-12) {
            return Err(VibronicError::GridTooCoarse { spacing: self.spacing, limit });
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), VibronicError> {
        self.check_grid()?;
        if !(self.zpl_energy > 0.0) || !self.zpl_energy.is_finite() {
            return Err(VibronicError::InvalidConfig(format!("ZPL energy must be positive, got {}", self.zpl_energy)));
        }
        if !(self.zpl_width >= 0.0) || !self.zpl_width.is_finite() {
            return Err(VibronicError::InvalidConfig(format!("ZPL width must be non-negative, got {}", self.zpl_width)));
        }
        Ok(())
    }
}

/// Window as grid offsets from the ZPL: photon energies zpl + mΔ for
/// m in −red..=blue.
#[derive(Debug, Clone, Copy, PartialEq)]
struct GridWindow {
    red: usize,
    blue: usize,
}

/// Minimum window: [zpl − 10·max phonon, zpl + 5σ], widened on the red side
/// to mean shift + 8 standard deviations of the sideband when that is larger.
fn resolve_window(coupling: &VibronicCoupling, config: &LineshapeConfig) -> Result<GridWindow, VibronicError> {
    let step = config.spacing;
    let zpl = config.zpl_energy;
    let required_red = 10.0 * coupling.max_energy();
    let required_blue = 5.0 * config.sigma;
    let (red_extent, blue_extent) = match config.window {
        Some(w) => {
            if w.min > zpl - required_red + 1e-9 || w.max < zpl + required_blue - 1e-9 {
                return Err(VibronicError::InvalidConfig(format!(
                    "window [{}, {}] meV must cover [{}, {}] meV",
                    w.min,
                    w.max,
                    zpl - required_red,
                    zpl + required_blue
                )));
            }
            (zpl - w.min, w.max - zpl)
        }
        None => {
            let mean: f64 = coupling.active().map(|m| m.hr * m.energy).sum();
            let var: f64 = coupling
                .active()
                .map(|m| m.hr * (m.energy * m.energy + config.sigma * config.sigma))
                .sum();
            (required_red.max(mean + 8.0 * var.sqrt()), required_blue)
        }
    };
    let mut red = (red_extent / step - 1e-9).ceil().max(0.0) as usize;
    // Photon energies stay positive.
    let max_red = ((zpl / step) - 1e-9).floor().max(0.0) as usize;
    if red > max_red {
        red = max_red.saturating_sub(1);
    }
    let blue = (blue_extent / step - 1e-9).ceil().max(0.0) as usize;
    Ok(GridWindow { red, blue })
}

fn gaussian(x: f64, sigma: f64) -> f64 {
    (-(x * x) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt())
}

/// Spectral density S(ħω) = Σ_λ S_λ·N(ħω; ħω_λ, σ) on a phonon-energy grid
/// wide enough to hold every Gaussian, so the area equals Σ S_λ.
pub fn spectral_density(coupling: &VibronicCoupling, config: &LineshapeConfig) -> Result<Spectrum, VibronicError> {
    config.check_grid()?;
    let step = config.spacing;
    let sigma = config.sigma;
    let lowest = coupling.active().map(|m| m.energy).fold(0.0, f64::min);
    let k_lo = ((lowest - 8.0 * sigma) / step).floor() as i64;
    let k_hi = ((coupling.max_energy() + 8.0 * sigma) / step).ceil() as i64;
    let mut values = vec![0.0; (k_hi - k_lo + 1) as usize];
    for m in coupling.active() {
        for (idx, v) in values.iter_mut().enumerate() {
            let e = (k_lo + idx as i64) as f64 * step;
            *v += m.hr * gaussian(e - m.energy, sigma);
        }
    }
    let area = values.iter().sum::<f64>() * step;
    Ok(Spectrum::on_grid(k_lo as f64 * step, step, values, config.zpl_energy, area)?)
}

/// Periodic density samples on the FFT grid: bin k holds ε = kΔ for
/// k < n/2 and (k − n)Δ above.
fn density_on_fft_grid(coupling: &VibronicCoupling, sigma: f64, step: f64, n: usize) -> Vec<f64> {
    let mut s = vec![0.0; n];
    let half = (n / 2) as i64;
    for m in coupling.active() {
        let center = m.energy / step;
        let reach = GAUSS_REACH * sigma / step;
        let lo = (center - reach).floor() as i64;
        let hi = (center + reach).ceil() as i64;
        for k in lo.max(-half + 1)..=hi.min(half - 1) {
            let idx = k.rem_euclid(n as i64) as usize;
            s[idx] += m.hr * gaussian(k as f64 * step - m.energy, sigma);
        }
    }
    s
}

/// Lorentzian of half-width γ integrated over each bin and folded onto the
/// periodic grid; sums to one.
fn lorentzian_kernel(gamma: f64, step: f64, n: usize) -> Vec<f64> {
    let mut kernel = vec![0.0; n];
    if gamma == 0.0 {
        kernel[0] = 1.0;
        return kernel;
    }
    let period = n as f64 * step;
    let cdf = |x: f64| (x / gamma).atan() / PI;
    let half = (n / 2) as i64;
    for k in -half..half {
        let idx = k.rem_euclid(n as i64) as usize;
        let center = k as f64 * step;
        kernel[idx] = (-4..=4)
            .map(|p| {
                let c = center + p as f64 * period;
                cdf(c + 0.5 * step) - cdf(c - 0.5 * step)
            })
            .sum();
    }
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|x| *x /= total);
    kernel
}

fn fft_len(window: GridWindow) -> usize {
    let span = 2 * (window.red + window.blue + 1);
    span.max(MIN_FFT_LEN).next_power_of_two()
}

/// S(t) sampled on the FFT time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeCorrelation {
    /// Time step in ps; sample j ≥ len/2 is at negative time (j − len)·dt.
    pub dt_ps: f64,
    pub values: Vec<C64>,
}

/// S(t) = ∫ S(ħω) e^{−iωt} d(ħω) by discrete Fourier transform of the
/// spectral density.
pub fn time_correlation(coupling: &VibronicCoupling, config: &LineshapeConfig) -> Result<TimeCorrelation, VibronicError> {
    config.validate()?;
    let window = resolve_window(coupling, config)?;
    let n = fft_len(window);
    Ok(TimeCorrelation { dt_ps: 2.0 * PI * HBAR_MEV_PS / (n as f64 * config.spacing), values: s_of_t(coupling, config, n) })
}

fn s_of_t(coupling: &VibronicCoupling, config: &LineshapeConfig, n: usize) -> Vec<C64> {
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let mut buf: Vec<C64> = density_on_fft_grid(coupling, config.sigma, config.spacing, n)
        .into_iter()
        .map(|x| C64::new(x * config.spacing, 0.0))
        .collect();
    forward.process(&mut buf);
    buf
}

fn lineshape_in_window(
    coupling: &VibronicCoupling,
    config: &LineshapeConfig,
    window: GridWindow,
) -> Result<Spectrum, VibronicError> {
    let n = fft_len(window);
    let step = config.spacing;
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);

    let s_t = s_of_t(coupling, config, n);
    let s0 = s_t[0].re;
    let g: Vec<C64> = s_t.iter().map(|s| (s - s0).exp()).collect();

    // Weight check on the undamped spectrum: A0 = IFFT(g)/n sums to g(0) = 1.
    let mut a0 = g.clone();
    inverse.process(&mut a0);
    let inside: f64 = (0..=window.red)
        .map(|k| a0[k].re)
        .chain((1..=window.blue).map(|k| a0[n - k].re))
        .sum::<f64>()
        / n as f64;
    let outside_fraction = 1.0 - inside;
    if outside_fraction >= MAX_OUTSIDE_WEIGHT {
        return Err(VibronicError::WindowTooNarrow { outside_fraction });
    }

    // ZPL damping as a convolution with the binned Lorentzian.
    let mut damping: Vec<C64> = lorentzian_kernel(config.zpl_width, step, n)
        .into_iter()
        .map(|x| C64::new(x, 0.0))
        .collect();
    forward.process(&mut damping);
    let mut a: Vec<C64> = g.iter().zip(&damping).map(|(g, d)| g * d).collect();
    inverse.process(&mut a);

    let zpl = config.zpl_energy;
    let mut intensities = Vec::with_capacity(window.red + window.blue + 1);
    for m in -(window.red as i64)..=(window.blue as i64) {
        let idx = (-m).rem_euclid(n as i64) as usize;
        let mut value = (a[idx].re / n as f64 / step).max(0.0);
        if config.cubic_prefactor {
            let photon = zpl + m as f64 * step;
            value *= (photon / zpl).powi(3);
        }
        intensities.push(value);
    }
    let area: f64 = intensities.iter().sum::<f64>() * step;
    intensities.iter_mut().for_each(|x| *x /= area);
    let start = zpl - window.red as f64 * step;
    let energies = (0..intensities.len()).map(|k| start + k as f64 * step).collect();
    let normalized_area = intensities.iter().sum::<f64>() * step;
    Ok(Spectrum::new(energies, intensities, zpl, normalized_area)?)
}

/// Emission lineshape L(ħω), area-normalized to one.
pub fn lineshape(coupling: &VibronicCoupling, config: &LineshapeConfig) -> Result<Spectrum, VibronicError> {
    config.validate()?;
    let window = resolve_window(coupling, config)?;
    lineshape_in_window(coupling, config, window)
}

/// Lineshape keeping only modes with ħω_λ ≤ `cutoff` meV. The energy window
/// is the one the full coupling would use, so spectra for different cutoffs
/// share a grid.
pub fn partial_lineshape(
    coupling: &VibronicCoupling,
    config: &LineshapeConfig,
    cutoff: f64,
) -> Result<Spectrum, VibronicError> {
    config.validate()?;
    let window = resolve_window(coupling, config)?;
    lineshape_in_window(&coupling.truncated(cutoff), config, window)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// meV
    pub energy: f64,
    /// Distance to the previous (higher-energy) peak, meV.
    pub spacing: Option<f64>,
}

/// Peaks below this fraction of the strongest one are ignored.
const PEAK_FLOOR: f64 = 1e-3;

/// Local maxima of a spectrum, ordered from high to low energy.
///
/// The intensities are smoothed with a 5-point quadratic Savitzky-Golay
/// filter, maxima found by three-point comparison, and each position refined
/// by a parabola through the maximum and its neighbours.
pub fn peak_spacing(spectrum: &Spectrum) -> Result<Vec<Peak>, VibronicError> {
    let y = spectrum.intensities();
    let n = y.len();
    let mut smooth = y.to_vec();
    for k in 2..n.saturating_sub(2) {
        smooth[k] = (-3.0 * y[k - 2] + 12.0 * y[k - 1] + 17.0 * y[k] + 12.0 * y[k + 1] - 3.0 * y[k + 2]) / 35.0;
    }
    let floor = PEAK_FLOOR * smooth.iter().copied().fold(0.0, f64::max);
    let step = spectrum.spacing();
    let energies = spectrum.energies();
    let mut positions: Vec<f64> = (1..n.saturating_sub(1))
        .filter(|&k| smooth[k] > smooth[k - 1] && smooth[k] >= smooth[k + 1] && smooth[k] > floor)
        .map(|k| {
            let (l, c, r) = (smooth[k - 1], smooth[k], smooth[k + 1]);
            let curvature = l - 2.0 * c + r;
            let offset = if curvature < 0.0 { 0.5 * (l - r) / curvature } else { 0.0 };
            energies[k] + offset * step
        })
        .collect();
    if positions.is_empty() {
        return Err(VibronicError::NoPeaks);
    }
    positions.reverse();
    Ok(positions
        .iter()
        .enumerate()
        .map(|(i, &energy)| Peak { energy, spacing: (i > 0).then(|| positions[i - 1] - energy) })
        .collect())
}

/// Offset below `zpl_energy` of the first peak lying more than `tolerance`
/// meV under it.
pub fn first_sideband_offset(peaks: &[Peak], zpl_energy: f64, tolerance: f64) -> Option<f64> {
    peaks.iter().find(|p| p.energy < zpl_energy - tolerance).map(|p| zpl_energy - p.energy)
}
