//! Single-activation-energy quenching fit,
//! y(T) = y(0) / (1 + C·exp(−E_A / k_B T)).

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use thiserror::Error;

use crate::units::BOLTZMANN_MEV;

pub const MIN_POINTS: usize = 4;
const MAX_ITERATIONS: usize = 500;
const GRADIENT_TOL: f64 = 1e-10;
const GRID_C: (f64, f64, usize) = (1e-2, 1e3, 51);
const GRID_EA: (f64, f64, usize) = (1.0, 500.0, 61);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThermalError {
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("{n} points; at least {MIN_POINTS} are needed")]
    TooFewPoints { n: usize },
    #[error("all values are equal")]
    DegenerateData,
    #[error("refinement did not converge in {iterations} iterations (gradient norm {gradient:.3e})")]
    NonConvergence { iterations: usize, gradient: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalPoint {
    /// K
    pub temperature: f64,
    pub value: f64,
    pub sigma: Option<f64>,
}

impl ThermalPoint {
    pub fn new(temperature: f64, value: f64) -> Self {
        Self { temperature, value, sigma: None }
    }

    pub fn with_sigma(temperature: f64, value: f64, sigma: f64) -> Self {
        Self { temperature, value, sigma: Some(sigma) }
    }
}

/// Temperature series sorted by increasing temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalSeries {
    points: Vec<ThermalPoint>,
    label: String,
}

impl ThermalSeries {
    pub fn new(mut points: Vec<ThermalPoint>, label: impl Into<String>) -> Result<Self, ThermalError> {
        if points.len() < MIN_POINTS {
            return Err(ThermalError::TooFewPoints { n: points.len() });
        }
        for p in &points {
            if !(p.temperature > 0.0) || !p.temperature.is_finite() {
                return Err(ThermalError::InvalidSeries(format!("temperature {} K must be positive", p.temperature)));
            }
            if !p.value.is_finite() {
                return Err(ThermalError::InvalidSeries(format!("non-finite value at {} K", p.temperature)));
            }
            if let Some(s) = p.sigma {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(ThermalError::InvalidSeries(format!("uncertainty {s} at {} K must be positive", p.temperature)));
                }
            }
        }
        if points.iter().any(|p| p.sigma.is_some()) != points.iter().all(|p| p.sigma.is_some()) {
            return Err(ThermalError::InvalidSeries("uncertainties must be given for all points or none".into()));
        }
        points.sort_by(|a, b| a.temperature.total_cmp(&b.temperature));
        if let Some(w) = points.windows(2).find(|w| w[1].temperature <= w[0].temperature) {
            return Err(ThermalError::InvalidSeries(format!("duplicate temperature {} K", w[0].temperature)));
        }
        Ok(Self { points, label: label.into() })
    }

    pub fn points(&self) -> &[ThermalPoint] {
        &self.points
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn weights(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.sigma.map_or(1.0, |s| 1.0 / (s * s))).collect()
    }
}

/// amplitude / (1 + c·exp(−e_a / k_B T)), e_a in meV, T in K.
pub fn model_eval(amplitude: f64, c: f64, e_a: f64, temperature: f64) -> f64 {
    amplitude / (1.0 + c * (-e_a / (BOLTZMANN_MEV * temperature)).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrheniusFit {
    pub amplitude: f64,
    pub c: f64,
    /// meV
    pub e_a: f64,
    /// Covariance of (amplitude, c, e_a), scaled by the residual variance.
    pub covariance: Matrix3<f64>,
    /// Unweighted RMS of the residuals.
    pub rms_residual: f64,
    /// Weighted sum of squared residuals, the quantity minimized.
    pub cost: f64,
    pub iterations: usize,
}

impl ArrheniusFit {
    pub fn sigma_amplitude(&self) -> f64 {
        self.covariance[(0, 0)].max(0.0).sqrt()
    }

    pub fn sigma_c(&self) -> f64 {
        self.covariance[(1, 1)].max(0.0).sqrt()
    }

    pub fn sigma_e_a(&self) -> f64 {
        self.covariance[(2, 2)].max(0.0).sqrt()
    }
}

/// Normalized problem: values divided by their largest magnitude and weights
/// rescaled to unit mean, which keeps the convergence test scale-free.
struct Problem {
    temps: Vec<f64>,
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl Problem {
    fn shape(&self, c: f64, e_a: f64) -> Vec<f64> {
        self.temps.iter().map(|&t| model_eval(1.0, c, e_a, t)).collect()
    }

    /// Best amplitude for fixed (c, e_a) and the resulting cost.
    fn profile(&self, c: f64, e_a: f64) -> (f64, f64) {
        let f = self.shape(c, e_a);
        let num: f64 = (0..f.len()).map(|i| self.weights[i] * self.values[i] * f[i]).sum();
        let den: f64 = (0..f.len()).map(|i| self.weights[i] * f[i] * f[i]).sum();
        let amplitude = num / den;
        (amplitude, self.cost(amplitude, c, e_a))
    }

    fn cost(&self, amplitude: f64, c: f64, e_a: f64) -> f64 {
        self.temps
            .iter()
            .zip(&self.values)
            .zip(&self.weights)
            .map(|((&t, &y), &w)| {
                let r = model_eval(amplitude, c, e_a, t) - y;
                w * r * r
            })
            .sum()
    }

    /// Weighted residuals and Jacobian in (amplitude, ln c, ln e_a).
    fn linearize(&self, theta: &Vector3<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (amplitude, c, e_a) = (theta[0], theta[1].exp(), theta[2].exp());
        let n = self.temps.len();
        let mut r = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, 3);
        for i in 0..n {
            let sw = self.weights[i].sqrt();
            let kt = BOLTZMANN_MEV * self.temps[i];
            let boltz = (-e_a / kt).exp();
            let denom = 1.0 + c * boltz;
            let f = 1.0 / denom;
            r[i] = sw * (amplitude * f - self.values[i]);
            let df_dlnc = -c * boltz / (denom * denom);
            let df_dlne = c * boltz * (e_a / kt) / (denom * denom);
            j[(i, 0)] = sw * f;
            j[(i, 1)] = sw * amplitude * df_dlnc;
            j[(i, 2)] = sw * amplitude * df_dlne;
        }
        (r, j)
    }
}

fn log_grid((lo, hi, n): (f64, f64, usize)) -> Vec<f64> {
    (0..n).map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// One coarse-grid node: the profiled amplitude and weighted cost at (c, e_a).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridNode {
    pub c: f64,
    pub e_a: f64,
    pub amplitude: f64,
    pub cost: f64,
}

fn normalize(series: &ThermalSeries) -> Result<(Problem, f64), ThermalError> {
    let values: Vec<f64> = series.points.iter().map(|p| p.value).collect();
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let scale = lo.abs().max(hi.abs());
    if scale == 0.0 || hi - lo <= 1e-12 * scale {
        return Err(ThermalError::DegenerateData);
    }
    let weights = series.weights();
    let mean_w = weights.iter().sum::<f64>() / weights.len() as f64;
    Ok((
        Problem {
            temps: series.points.iter().map(|p| p.temperature).collect(),
            values: values.iter().map(|v| v / scale).collect(),
            weights: weights.iter().map(|w| w / mean_w).collect(),
        },
        scale,
    ))
}

/// Coarse log grid over c ∈ [10⁻², 10³] and e_a ∈ [1, 500] meV with the
/// amplitude solved linearly at each node. Costs are in the original units.
pub fn grid_search(series: &ThermalSeries) -> Result<Vec<GridNode>, ThermalError> {
    let (problem, scale) = normalize(series)?;
    let weights = series.weights();
    let mean_w = weights.iter().sum::<f64>() / weights.len() as f64;
    let mut nodes = Vec::with_capacity(GRID_C.2 * GRID_EA.2);
    for &c in &log_grid(GRID_C) {
        for &e_a in &log_grid(GRID_EA) {
            let (amplitude, cost) = problem.profile(c, e_a);
            nodes.push(GridNode { c, e_a, amplitude: amplitude * scale, cost: cost * scale * scale * mean_w });
        }
    }
    Ok(nodes)
}

/// Weighted least-squares fit: grid search followed by damped Gauss-Newton
/// refinement in (amplitude, ln c, ln e_a).
pub fn fit(series: &ThermalSeries, initial: Option<(f64, f64, f64)>) -> Result<ArrheniusFit, ThermalError> {
    let (problem, scale) = normalize(series)?;

    let mut start = None::<(f64, f64, f64, f64)>;
    for &c in &log_grid(GRID_C) {
        for &e_a in &log_grid(GRID_EA) {
            let (amplitude, cost) = problem.profile(c, e_a);
            if cost.is_finite() && start.map_or(true, |s| cost < s.3) {
                start = Some((amplitude, c, e_a, cost));
            }
        }
    }
    if let Some((a, c, e)) = initial {
        if a.is_finite() && c > 0.0 && e > 0.0 {
            let cost = problem.cost(a / scale, c, e);
            if start.map_or(true, |s| cost < s.3) {
                start = Some((a / scale, c, e, cost));
            }
        }
    }
    let (a0, c0, e0, _) = start.expect("grid is non-empty");

    let mut theta = Vector3::new(a0, c0.ln(), e0.ln());
    let mut cost = problem.cost(theta[0], theta[1].exp(), theta[2].exp());
    let mut mu = 1e-3;
    let mut iterations = 0;
    let mut gradient;
    loop {
        let (r, j) = problem.linearize(&theta);
        let jtj_dyn = j.transpose() * &j;
        let g_dyn = j.transpose() * &r;
        let jtj = Matrix3::from_fn(|a, b| jtj_dyn[(a, b)]);
        let g = Vector3::new(g_dyn[0], g_dyn[1], g_dyn[2]);
        gradient = g.norm();
        if gradient < GRADIENT_TOL {
            break;
        }
        if iterations >= MAX_ITERATIONS {
            return Err(ThermalError::NonConvergence { iterations, gradient });
        }
        iterations += 1;
        let mut stalled = true;
        for _ in 0..30 {
            let mut damped = jtj;
            for k in 0..3 {
                damped[(k, k)] += mu * jtj[(k, k)].max(1e-300);
            }
            let step = match damped.lu().solve(&(-g)) {
                Some(s) => s,
                None => {
                    mu *= 10.0;
                    continue;
                }
            };
            let trial = theta + step;
            let trial_cost = problem.cost(trial[0], trial[1].exp(), trial[2].exp());
            if trial_cost.is_finite() && trial_cost <= cost {
                let moved = trial != theta;
                theta = trial;
                cost = trial_cost;
                mu = (mu / 3.0).max(1e-12);
                stalled = !moved;
                break;
            }
            mu *= 4.0;
        }
        if stalled {
            // No representable step lowers the cost any further.
            let (r, j) = problem.linearize(&theta);
            gradient = (j.transpose() * r).norm();
            if gradient < GRADIENT_TOL.sqrt() {
                break;
            }
        }
    }

    let amplitude = theta[0] * scale;
    let c = theta[1].exp();
    let e_a = theta[2].exp();

    // Covariance in natural parameters and original units.
    let weights = series.weights();
    let n = series.points.len();
    let mut jac = DMatrix::zeros(n, 3);
    let mut wss = 0.0;
    let mut ss = 0.0;
    for (i, p) in series.points.iter().enumerate() {
        let sw = weights[i].sqrt();
        let kt = BOLTZMANN_MEV * p.temperature;
        let boltz = (-e_a / kt).exp();
        let denom = 1.0 + c * boltz;
        jac[(i, 0)] = sw / denom;
        jac[(i, 1)] = -sw * amplitude * boltz / (denom * denom);
        jac[(i, 2)] = sw * amplitude * c * boltz / (kt * denom * denom);
        let resid = model_eval(amplitude, c, e_a, p.temperature) - p.value;
        wss += weights[i] * resid * resid;
        ss += resid * resid;
    }
    let info = jac.transpose() * &jac;
    let info_inv = info
        .clone()
        .try_inverse()
        .or_else(|| info.pseudo_inverse(1e-14).ok())
        .unwrap_or_else(|| DMatrix::zeros(3, 3));
    let dof = n.saturating_sub(3).max(1) as f64;
    let cov = info_inv * (wss / dof);
    let mut covariance = Matrix3::from_fn(|a, b| cov[(a, b)]);
    covariance = 0.5 * (covariance + covariance.transpose());

    Ok(ArrheniusFit {
        amplitude,
        c,
        e_a,
        covariance,
        rms_residual: (ss / n as f64).sqrt(),
        cost: wss,
        iterations,
    })
}
