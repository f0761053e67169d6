//! Second-order force constants from displacement/force snapshots.
//!
//! The harmonic model F_i = −Σ_j Φ(i,j)·u_j is linear in the off-diagonal
//! pair blocks once the self blocks are tied to them by the acoustic sum
//! rule, so each snapshot contributes 3N rows to an ordinary (ridge) least
//! squares problem with nine unknowns per pair inside the cutoff.

use rayon::prelude::*;
use thiserror::Error;

use nalgebra::{DMatrix, DVector};

use crate::model::{CrystalStructure, ForceConstants, Mat3, Vec3};
use crate::phonons::enforce_asr;

const PARAMS_PER_PAIR: usize = 9;
/// Fraction of snapshots (rounded up) held out for validation.
const HOLDOUT_FRACTION: f64 = 0.1;
pub const DEFAULT_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("invalid training data: {0}")]
    InvalidInput(String),
    #[error("design matrix has rank {rank} for {parameters} parameters and no regularization")]
    SingularFit { rank: usize, parameters: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

/// Displacements (Å) from the reference structure and the resulting forces (eV/Å).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSnapshot {
    displacements: Vec<Vec3>,
    forces: Vec<Vec3>,
}

impl TrainingSnapshot {
    pub fn new(displacements: Vec<Vec3>, forces: Vec<Vec3>) -> Result<Self, FitError> {
        if displacements.len() != forces.len() {
            return Err(FitError::InvalidInput(format!(
                "{} displacements but {} forces",
                displacements.len(),
                forces.len()
            )));
        }
        if displacements.iter().chain(&forces).any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(FitError::InvalidInput("non-finite entry".into()));
        }
        Ok(Self { displacements, forces })
    }

    /// Forces of a known harmonic model, F = −Φ·u.
    pub fn from_model(fc: &ForceConstants, displacements: Vec<Vec3>) -> Result<Self, FitError> {
        let forces = predict_forces(fc, &displacements);
        Self::new(displacements, forces)
    }

    pub fn displacements(&self) -> &[Vec3] {
        &self.displacements
    }

    pub fn forces(&self) -> &[Vec3] {
        &self.forces
    }

    pub fn n_atoms(&self) -> usize {
        self.displacements.len()
    }

    /// Atoms displaced by at least half the cutoff; large displacements make
    /// the harmonic fit less reliable.
    pub fn large_displacements(&self, cutoff: f64) -> Vec<usize> {
        (0..self.n_atoms()).filter(|&i| self.displacements[i].norm() >= 0.5 * cutoff).collect()
    }
}

/// F = −Φ·u for a full force-constant set.
pub fn predict_forces(fc: &ForceConstants, displacements: &[Vec3]) -> Vec<Vec3> {
    let mut forces = vec![Vec3::zeros(); displacements.len()];
    for (i, j, block) in fc.pairs() {
        forces[i] -= block * displacements[j];
        if i != j {
            forces[j] -= block.transpose() * displacements[i];
        }
    }
    forces
}

/// Free parameters: one full 3×3 block per atom pair inside the cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    n_atoms: usize,
    cutoff: f64,
    pairs: Vec<(usize, usize)>,
}

impl FeatureMap {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn n_parameters(&self) -> usize {
        PARAMS_PER_PAIR * self.pairs.len()
    }

    /// Index of parameter (a, b) of pair `p`.
    pub fn parameter_index(p: usize, a: usize, b: usize) -> usize {
        PARAMS_PER_PAIR * p + 3 * a + b
    }

    fn without(&self, drop: usize) -> Self {
        let mut pairs = self.pairs.clone();
        pairs.remove(drop);
        Self { pairs, ..self.clone() }
    }
}

/// Pairs i < j whose shortest (minimum-image) separation is within `cutoff` Å.
pub fn build_features(structure: &CrystalStructure, cutoff: f64) -> Result<FeatureMap, FitError> {
    if !(cutoff > 0.0) {
        return Err(FitError::InvalidInput(format!("cutoff must be positive, got {cutoff}")));
    }
    let pos = structure.positions();
    let n = structure.n_atoms();
    let pairs = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .filter(|&(i, j)| structure.minimum_image(&(pos[j] - pos[i])).norm() <= cutoff)
        .collect();
    Ok(FeatureMap { n_atoms: n, cutoff, pairs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub fc: ForceConstants,
    /// RMS force residual on the held-out snapshots, meV/Å. With a single
    /// snapshot nothing can be held out and this is the training residual.
    pub rmse_validation: f64,
    pub rmse_training: f64,
    pub holdout: bool,
    pub n_parameters_initial: usize,
    pub n_parameters_final: usize,
    pub cutoff: f64,
    /// Rank of the training design matrix.
    pub rank: usize,
    /// Pairs kept in the final model.
    pub pairs: Vec<(usize, usize)>,
}

/// Design matrix rows for one snapshot: 3N force components.
fn snapshot_rows(snapshot: &TrainingSnapshot, features: &FeatureMap) -> DMatrix<f64> {
    let n = snapshot.n_atoms();
    let u = snapshot.displacements();
    let mut rows = DMatrix::zeros(3 * n, features.n_parameters());
    for (p, &(i, j)) in features.pairs.iter().enumerate() {
        let rel = u[j] - u[i];
        for a in 0..3 {
            for b in 0..3 {
                let col = FeatureMap::parameter_index(p, a, b);
                rows[(3 * i + a, col)] -= rel[b];
                rows[(3 * j + b, col)] += rel[a];
            }
        }
    }
    rows
}

fn design(snapshots: &[TrainingSnapshot], features: &FeatureMap) -> (DMatrix<f64>, DVector<f64>) {
    let blocks: Vec<DMatrix<f64>> = snapshots.par_iter().map(|s| snapshot_rows(s, features)).collect();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut a = DMatrix::zeros(rows, features.n_parameters());
    let mut offset = 0;
    for b in &blocks {
        a.rows_mut(offset, b.nrows()).copy_from(b);
        offset += b.nrows();
    }
    let targets = DVector::from_iterator(
        rows,
        snapshots.iter().flat_map(|s| s.forces().iter().flat_map(|f| [f.x, f.y, f.z])),
    );
    (a, targets)
}

fn rmse_mev(fc: &ForceConstants, snapshots: &[TrainingSnapshot]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for s in snapshots {
        for (pred, obs) in predict_forces(fc, s.displacements()).iter().zip(s.forces()) {
            sum += (pred - obs).norm_squared();
            count += 3;
        }
    }
    if count == 0 {
        return 0.0;
    }
    1000.0 * (sum / count as f64).sqrt()
}

struct Solution {
    fc: ForceConstants,
    rank: usize,
}

fn solve(training: &[TrainingSnapshot], features: &FeatureMap, ridge: f64) -> Result<Solution, FitError> {
    let p = features.n_parameters();
    if p == 0 {
        return Ok(Solution { fc: ForceConstants::new(features.n_atoms), rank: 0 });
    }
    let (a, b) = design(training, features);
    let n_rows = a.nrows();
    let svd = a.svd(true, true);
    let s = &svd.singular_values;
    let s_max = s.iter().copied().fold(0.0, f64::max);
    let tol = s_max * n_rows.max(p) as f64 * f64::EPSILON;
    let rank = s.iter().filter(|&&x| x > tol).count();
    let lambda = ridge * s.iter().map(|x| x * x).sum::<f64>() / p as f64;
    if rank == 0 || (rank < p && lambda == 0.0) {
        return Err(FitError::SingularFit { rank, parameters: p });
    }
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
    let ub = u.transpose() * &b;
    let mut coeffs = DVector::zeros(s.len());
    for k in 0..s.len() {
        if s[k] > tol || lambda > 0.0 {
            coeffs[k] = s[k] * ub[k] / (s[k] * s[k] + lambda);
        }
    }
    let x = v_t.transpose() * coeffs;

    let mut fc = ForceConstants::new(features.n_atoms);
    for (idx, &(i, j)) in features.pairs.iter().enumerate() {
        let block = Mat3::from_fn(|a, b| x[FeatureMap::parameter_index(idx, a, b)]);
        fc.insert(i, j, block).expect("feature indices are in range");
    }
    Ok(Solution { fc: enforce_asr(&fc), rank })
}

fn check_snapshots(snapshots: &[TrainingSnapshot], features: &FeatureMap) -> Result<(), FitError> {
    if let Some(s) = snapshots.iter().find(|s| s.n_atoms() != features.n_atoms) {
        return Err(FitError::InvalidInput(format!(
            "snapshot has {} atoms, structure has {}",
            s.n_atoms(),
            features.n_atoms
        )));
    }
    Ok(())
}

fn split(snapshots: &[TrainingSnapshot]) -> (&[TrainingSnapshot], &[TrainingSnapshot]) {
    let n = snapshots.len();
    let held = ((n as f64) * HOLDOUT_FRACTION).ceil() as usize;
    snapshots.split_at(n - held)
}

/// Ridge least-squares fit. The last ⌈10%⌉ of the snapshots are held out
/// for validation when there are at least two.
pub fn fit(snapshots: &[TrainingSnapshot], features: &FeatureMap, ridge: f64) -> Result<FitReport, FitError> {
    if snapshots.is_empty() {
        return Err(FitError::InsufficientData("no snapshots".into()));
    }
    if !(ridge >= 0.0) {
        return Err(FitError::InvalidInput(format!("ridge must be non-negative, got {ridge}")));
    }
    check_snapshots(snapshots, features)?;
    let (training, validation, holdout) = if snapshots.len() >= 2 {
        let (t, v) = split(snapshots);
        (t, v, true)
    } else {
        (snapshots, snapshots, false)
    };
    let sol = solve(training, features, ridge)?;
    Ok(FitReport {
        rmse_validation: rmse_mev(&sol.fc, validation),
        rmse_training: rmse_mev(&sol.fc, training),
        holdout,
        n_parameters_initial: features.n_parameters(),
        n_parameters_final: features.n_parameters(),
        cutoff: features.cutoff,
        rank: sol.rank,
        pairs: features.pairs.clone(),
        fc: sol.fc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfeOptions {
    /// Stop once the kept fraction of pair blocks reaches this value.
    pub target_fraction: f64,
    /// Allowed rise of the validation RMSE over the full model, meV/Å.
    pub tolerance: f64,
    pub ridge: f64,
}

impl Default for RfeOptions {
    fn default() -> Self {
        Self { target_fraction: 0.0, tolerance: 1.0, ridge: DEFAULT_RIDGE }
    }
}

/// Recursive feature elimination over whole pair blocks.
///
/// Starting from the full model, the pair block with the smallest Frobenius
/// norm is dropped and the model refitted, until the held-out RMSE exceeds
/// the full model's by more than `tolerance` or the target fraction of
/// blocks is reached. The sparsest model within tolerance is returned (ties
/// go to the lower RMSE).
pub fn rfe(snapshots: &[TrainingSnapshot], features: &FeatureMap, options: RfeOptions) -> Result<FitReport, FitError> {
    if snapshots.len() < 2 {
        return Err(FitError::InsufficientData(format!(
            "{} snapshot(s); at least two are needed to hold out a validation set",
            snapshots.len()
        )));
    }
    if !(options.tolerance >= 0.0) || !(0.0..=1.0).contains(&options.target_fraction) {
        return Err(FitError::InvalidInput(format!("invalid RFE options {options:?}")));
    }
    check_snapshots(snapshots, features)?;
    let (training, validation) = split(snapshots);
    let initial_pairs = features.pairs.len();
    let min_pairs = (options.target_fraction * initial_pairs as f64).ceil() as usize;

    let full = solve(training, features, options.ridge)?;
    let full_rmse = rmse_mev(&full.fc, validation);
    let limit = full_rmse + options.tolerance;
    let mut best = (features.clone(), full, full_rmse);
    let mut current = best.0.clone();
    let mut current_fc = best.1.fc.clone();

    while current.pairs.len() > min_pairs {
        let drop = current
            .pairs
            .iter()
            .enumerate()
            .map(|(k, &(i, j))| (k, current_fc.block(i, j).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k)
            .expect("non-empty pair list");
        let reduced = current.without(drop);
        let sol = match solve(training, &reduced, options.ridge) {
            Ok(sol) => sol,
            Err(FitError::SingularFit { .. }) => break,
            Err(e) => return Err(e),
        };
        let rmse = rmse_mev(&sol.fc, validation);
        if rmse > limit {
            break;
        }
        current_fc = sol.fc.clone();
        current = reduced;
        let sparser = current.pairs.len() < best.0.pairs.len();
        if sparser || rmse < best.2 {
            best = (current.clone(), sol, rmse);
        }
    }

    let (kept, sol, rmse) = best;
    Ok(FitReport {
        rmse_training: rmse_mev(&sol.fc, training),
        rmse_validation: rmse,
        holdout: true,
        n_parameters_initial: features.n_parameters(),
        n_parameters_final: kept.n_parameters(),
        cutoff: features.cutoff,
        rank: sol.rank,
        pairs: kept.pairs,
        fc: sol.fc,
    })
}
