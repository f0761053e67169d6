//! Lattice dynamics: dynamical matrix, diagonalization, acoustic sum rule
//! and supercell band unfolding.
//!
//! Force-constant blocks for periodic structures lump every periodic image of
//! a pair together. When the dynamical matrix is built away from Γ the block
//! is attributed to the shortest image vector(s) of the pair, split evenly
//! when several images are equally short.

use std::ops::Range;

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{CrystalStructure, ForceConstants, Mat3, Vec3};
use crate::units::{eigenvalue_to_mev, mev_to_eigenvalue};

pub type C64 = Complex<f64>;

/// Modes whose energies differ by less than this are treated as degenerate (meV).
pub const DEGENERACY_TOL_MEV: f64 = 1e-6;
/// Same, expressed on eigenvalues (eV/Å²/amu); only matters near zero energy.
const DEGENERACY_TOL_EIGENVALUE: f64 = 1e-10;
/// Relative tolerance when deciding two periodic images are equally short.
const IMAGE_TIE_TOL: f64 = 1e-6;
const HERMITIAN_TOL: f64 = 1e-6;
const COMMENSURATE_TOL: f64 = 1e-6;
const ORTHONORMAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhononError {
    #[error("force constants and structure are inconsistent: {0}")]
    InconsistentIndices(String),
    #[error("matrix is not Hermitian (max asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },
    #[error("supercell lattice is not an integer multiple of the primitive lattice (residual {residual:.3e} Å)")]
    NotCommensurate { residual: f64 },
    #[error("no supercell mode set is commensurate with path point {index}")]
    NoMatchingQpoint { index: usize },
    #[error("invalid phonon basis: {0}")]
    InvalidBasis(String),
}

/// Mode energies and mass-weighted eigenvectors at one wavevector.
#[derive(Debug, Clone, PartialEq)]
pub struct PhononBasis {
    qpoint: Vec3,
    frequencies: Vec<f64>,
    eigenvectors: DMatrix<C64>,
}

impl PhononBasis {
    /// `eigenvectors` holds one mode per column, components ordered (atom, x/y/z).
    /// Energies in meV must be ascending; negative values denote imaginary modes.
    pub fn new(qpoint: Vec3, frequencies: Vec<f64>, eigenvectors: DMatrix<C64>) -> Result<Self, PhononError> {
        let n = eigenvectors.nrows();
        if n % 3 != 0 || eigenvectors.ncols() != n || frequencies.len() != n {
            return Err(PhononError::InvalidBasis(format!(
                "{} energies with a {}x{} eigenvector matrix",
                frequencies.len(),
                eigenvectors.nrows(),
                eigenvectors.ncols()
            )));
        }
        if frequencies.windows(2).any(|w| w[1] < w[0]) {
            return Err(PhononError::InvalidBasis("energies are not ascending".into()));
        }
        let basis = Self { qpoint, frequencies, eigenvectors };
        let residual = basis.orthonormality_residual();
        if residual >= ORTHONORMAL_TOL {
            return Err(PhononError::InvalidBasis(format!("eigenvectors not orthonormal (residual {residual:.3e})")));
        }
        Ok(basis)
    }

    /// Reduced wavevector in the reciprocal basis of the cell it was computed for.
    pub fn qpoint(&self) -> Vec3 {
        self.qpoint
    }

    /// Mode energies in meV, ascending.
    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn eigenvectors(&self) -> &DMatrix<C64> {
        &self.eigenvectors
    }

    pub fn n_modes(&self) -> usize {
        self.frequencies.len()
    }

    pub fn n_atoms(&self) -> usize {
        self.frequencies.len() / 3
    }

    pub fn mode(&self, index: usize) -> DVector<C64> {
        self.eigenvectors.column(index).into_owned()
    }

    /// Indices of modes with negative (imaginary) energies.
    pub fn imaginary_modes(&self) -> Vec<usize> {
        (0..self.n_modes()).filter(|&i| self.frequencies[i] < 0.0).collect()
    }

    /// max |⟨u_λ, u_μ⟩ − δ_λμ|
    pub fn orthonormality_residual(&self) -> f64 {
        let gram = self.eigenvectors.adjoint() * &self.eigenvectors;
        let mut worst = 0.0f64;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((gram[(i, j)] - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    /// Index ranges of degenerate mode clusters, in ascending energy order.
    pub fn degenerate_clusters(&self) -> Vec<Range<usize>> {
        degenerate_clusters(&self.frequencies)
    }

    /// Replaces the eigenvectors, keeping energies and q-point. Used to apply
    /// a different gauge within degenerate clusters.
    pub fn with_eigenvectors(&self, eigenvectors: DMatrix<C64>) -> Result<Self, PhononError> {
        Self::new(self.qpoint, self.frequencies.clone(), eigenvectors)
    }
}

/// Groups sorted energies into runs of (numerically) degenerate modes.
pub fn degenerate_clusters(energies: &[f64]) -> Vec<Range<usize>> {
    let mut clusters = Vec::new();
    let mut start = 0;
    for i in 1..=energies.len() {
        let split = i == energies.len() || {
            let (a, b) = (energies[i - 1], energies[i]);
            (b - a).abs() >= DEGENERACY_TOL_MEV
                && (mev_to_eigenvalue(b) - mev_to_eigenvalue(a)).abs() >= DEGENERACY_TOL_EIGENVALUE
        };
        if split {
            clusters.push(start..i);
            start = i;
        }
    }
    clusters
}

/// Acoustic sum rule: makes Σ_j block(i, j) vanish for every atom while
/// keeping block(i, j) = block(j, i)ᵀ.
///
/// The antisymmetric parts of the stored off-diagonal blocks are projected
/// onto the nearest set (least squares) whose per-atom sums are symmetric;
/// self blocks are then replaced by minus the sum of the off-diagonal row.
/// Symmetric parts and the sparsity pattern never change, and when every
/// per-atom sum is already symmetric only the self blocks are rewritten.
pub fn enforce_asr(fc: &ForceConstants) -> ForceConstants {
    let n = fc.n_atoms();
    let edges: Vec<(usize, usize, Mat3)> = fc.off_diagonal().map(|(i, j, m)| (i, j, *m)).collect();

    // Antisymmetric part of a block as an axial vector (A12, A20, A01).
    let axial = |m: &Mat3| {
        let a = 0.5 * (m - m.transpose());
        Vec3::new(a[(1, 2)], a[(2, 0)], a[(0, 1)])
    };
    let from_axial = |v: &Vec3| Mat3::new(0.0, v.z, -v.y, -v.z, 0.0, v.x, v.y, -v.x, 0.0);

    let mut divergence = vec![Vec3::zeros(); n];
    for (i, j, m) in &edges {
        let a = axial(m);
        divergence[*i] += a;
        divergence[*j] -= a;
    }
    let scale = edges.iter().map(|(_, _, m)| m.abs().max()).fold(0.0, f64::max);
    let needs_projection = divergence.iter().any(|d| d.abs().max() > 0.0) && scale > 0.0;

    let mut corrected: Vec<(usize, usize, Mat3)> = edges.clone();
    if needs_projection {
        // Graph Laplacian over stored pairs; φ solves Lφ = div per component
        // and the edge flows become a − (φ_i − φ_j).
        let mut laplacian = DMatrix::<f64>::zeros(n, n);
        for (i, j, _) in &edges {
            laplacian[(*i, *i)] += 1.0;
            laplacian[(*j, *j)] += 1.0;
            laplacian[(*i, *j)] -= 1.0;
            laplacian[(*j, *i)] -= 1.0;
        }
        let pinv = laplacian
            .svd(true, true)
            .pseudo_inverse(1e-10 * n as f64)
            .expect("SVD of a real Laplacian with both factors requested");
        let div = DMatrix::from_fn(n, 3, |i, c| divergence[i][c]);
        let phi = pinv * div;
        for (i, j, m) in corrected.iter_mut() {
            let grad = Vec3::new(phi[(*i, 0)] - phi[(*j, 0)], phi[(*i, 1)] - phi[(*j, 1)], phi[(*i, 2)] - phi[(*j, 2)]);
            *m -= from_axial(&grad);
        }
    }

    let mut row = vec![Mat3::zeros(); n];
    for (i, j, m) in &corrected {
        row[*i] += m;
        row[*j] += m.transpose();
    }
    let mut out = ForceConstants::new(n);
    for (i, j, m) in corrected {
        out.insert(i, j, m).expect("indices come from a valid ForceConstants");
    }
    for (i, sum) in row.iter().enumerate() {
        let self_block = -0.5 * (sum + sum.transpose());
        if fc.contains(i, i) || self_block.iter().any(|&x| x != 0.0) {
            out.insert(i, i, self_block).expect("index in range");
        }
    }
    out
}

/// Mass-weighted dynamical matrix at a reduced wavevector (reciprocal basis
/// of `structure`), in eV/Å²/amu.
///
/// D[(i,a),(j,b)] = Σ_L block(i, j)[a,b]·exp(i q·d_L)/√(m_i m_j), with d_L
/// running over the shortest image vectors from i to j (weights 1/#images).
/// Non-periodic structures ignore `q`.
pub fn dynamical_matrix(
    fc: &ForceConstants,
    structure: &CrystalStructure,
    q_reduced: &Vec3,
) -> Result<DMatrix<C64>, PhononError> {
    let n = structure.n_atoms();
    if fc.n_atoms() != n {
        return Err(PhononError::InconsistentIndices(format!(
            "force constants cover {} atoms, structure has {n}",
            fc.n_atoms()
        )));
    }
    let q = if structure.is_periodic() { structure.q_cartesian(q_reduced) } else { Vec3::zeros() };
    let masses = structure.masses();
    let positions = structure.positions();
    let mut d = DMatrix::<C64>::zeros(3 * n, 3 * n);
    for (i, j, block) in fc.pairs() {
        let phase = if i == j {
            C64::new(1.0, 0.0)
        } else {
            let sep = positions[j] - positions[i];
            let tol = IMAGE_TIE_TOL * (1.0 + sep.norm());
            let images = structure.shortest_images(&sep, tol);
            let sum: C64 = images.iter().map(|r| C64::from_polar(1.0, q.dot(r))).sum();
            sum / images.len() as f64
        };
        let inv_mass = 1.0 / (masses[i] * masses[j]).sqrt();
        for a in 0..3 {
            for b in 0..3 {
                let v = phase * (block[(a, b)] * inv_mass);
                d[(3 * i + a, 3 * j + b)] = v;
                d[(3 * j + b, 3 * i + a)] = v.conj();
            }
        }
    }
    Ok(d)
}

/// Diagonalizes a Hermitian dynamical matrix. Eigenvalues map to energies
/// ħ√λ in meV (negative for λ < 0), sorted ascending. Real input matrices
/// produce real eigenvectors.
pub fn diagonalize(d: &DMatrix<C64>, qpoint: Vec3) -> Result<PhononBasis, PhononError> {
    let n = d.nrows();
    if d.ncols() != n {
        return Err(PhononError::InvalidBasis(format!("matrix is {}x{}", n, d.ncols())));
    }
    let scale = d.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let mut asymmetry = 0.0f64;
    for i in 0..n {
        for j in 0..=i {
            asymmetry = asymmetry.max((d[(i, j)] - d[(j, i)].conj()).norm());
        }
    }
    if asymmetry / scale > HERMITIAN_TOL {
        return Err(PhononError::NotHermitian { asymmetry });
    }
    let hermitian = (d + d.adjoint()) * C64::new(0.5, 0.0);
    let is_real = hermitian.iter().all(|z| z.im == 0.0);

    let (values, vectors): (Vec<f64>, DMatrix<C64>) = if is_real {
        let eig = hermitian.map(|z| z.re).symmetric_eigen();
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors.map(|x| C64::new(x, 0.0)))
    } else {
        let eig = hermitian.symmetric_eigen();
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let frequencies = order.iter().map(|&k| eigenvalue_to_mev(values[k])).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);
    PhononBasis::new(qpoint, frequencies, eigenvectors)
}

/// Dynamical matrix plus diagonalization at one reduced q-point.
pub fn phonons_at(
    fc: &ForceConstants,
    structure: &CrystalStructure,
    q_reduced: &Vec3,
) -> Result<PhononBasis, PhononError> {
    diagonalize(&dynamical_matrix(fc, structure, q_reduced)?, *q_reduced)
}

/// [`phonons_at`] over many q-points, evaluated in parallel.
pub fn phonons_along(
    fc: &ForceConstants,
    structure: &CrystalStructure,
    qpoints: &[Vec3],
) -> Result<Vec<PhononBasis>, PhononError> {
    qpoints.par_iter().map(|q| phonons_at(fc, structure, q)).collect()
}

/// Supercell spectral weights projected onto primitive-cell wavevectors.
#[derive(Debug, Clone, PartialEq)]
pub struct UnfoldedWeights {
    /// Reduced wavevectors in the primitive reciprocal basis.
    pub path: Vec<Vec3>,
    /// Per path point: (energy meV, weight) for every supercell mode.
    pub weights: Vec<Vec<(f64, f64)>>,
}

impl UnfoldedWeights {
    pub fn total_weight(&self, index: usize) -> f64 {
        self.weights[index].iter().map(|(_, w)| w).sum()
    }
}

/// Integer matrix M with supercell rows = M · primitive rows.
pub fn supercell_matrix(supercell: &Mat3, primitive: &Mat3) -> Result<Mat3, PhononError> {
    let inv = primitive
        .try_inverse()
        .ok_or(PhononError::NotCommensurate { residual: f64::INFINITY })?;
    let m = (supercell * inv).map(|x| x.round());
    let residual = (supercell - m * primitive).abs().max();
    if residual > COMMENSURATE_TOL || m.determinant().abs() < 0.5 {
        return Err(PhononError::NotCommensurate { residual });
    }
    Ok(m)
}

/// Assigns every supercell atom to a primitive-cell site by its wrapped
/// fractional position in the primitive lattice.
fn primitive_sublattices(supercell: &CrystalStructure, primitive: &Mat3) -> Vec<usize> {
    let to_frac = primitive.transpose().try_inverse().expect("commensurate primitive lattice is invertible");
    let mut reps: Vec<Vec3> = Vec::new();
    supercell
        .sites()
        .iter()
        .map(|s| {
            let f = (to_frac * s.position).map(|x| x - x.floor());
            let found = reps.iter().position(|r| {
                let d = (f - r).map(|x| x - x.round());
                d.abs().max() < 1e-4
            });
            found.unwrap_or_else(|| {
                reps.push(f);
                reps.len() - 1
            })
        })
        .collect()
}

/// Unfolds supercell modes onto primitive wavevectors.
///
/// For each path point Q a supercell mode set with wavevector k ≡ Q (modulo
/// the supercell reciprocal lattice) must be present in `bases`. The weight
/// of mode λ is Σ_{s,a} |Σ_{α∈s} u_{λ,αa} e^{i(k−Q)·r_α}|² / n_s over
/// primitive sites s (with n_s supercell atoms) and polarizations a. Within
/// a degenerate cluster the weights are the eigenvalues of the projector
/// compressed to the cluster, which makes them independent of the gauge the
/// eigensolver picked. Weights lie in [0, 1] and sum to 3·(primitive sites)
/// over all modes at each Q.
pub fn unfold(
    bases: &[PhononBasis],
    supercell: &CrystalStructure,
    primitive: &Mat3,
    path: &[Vec3],
) -> Result<UnfoldedWeights, PhononError> {
    supercell_matrix(supercell.lattice(), primitive)?;
    let n = supercell.n_atoms();
    if let Some(b) = bases.iter().find(|b| b.n_atoms() != n) {
        return Err(PhononError::InconsistentIndices(format!(
            "mode set has {} atoms, supercell has {n}",
            b.n_atoms()
        )));
    }
    let sublattice = primitive_sublattices(supercell, primitive);
    let n_sites = sublattice.iter().max().map_or(0, |m| m + 1);
    let mut occupancy = vec![0usize; n_sites];
    for &s in &sublattice {
        occupancy[s] += 1;
    }
    let prim_reciprocal = primitive.try_inverse().expect("checked invertible").transpose() * (2.0 * std::f64::consts::PI);
    let positions = supercell.positions();

    let weights = path
        .par_iter()
        .enumerate()
        .map(|(index, q_red)| {
            let q_cart = prim_reciprocal.transpose() * q_red;
            let basis = bases
                .iter()
                .find(|b| {
                    let k_cart = supercell.q_cartesian(&b.qpoint());
                    let diff = supercell.lattice() * (q_cart - k_cart) / (2.0 * std::f64::consts::PI);
                    diff.map(|x| (x - x.round()).abs()).max() < 1e-6
                })
                .ok_or(PhononError::NoMatchingQpoint { index })?;
            let k_cart = supercell.q_cartesian(&basis.qpoint());
            let phases: Vec<C64> = positions.iter().map(|r| C64::from_polar(1.0, (k_cart - q_cart).dot(r))).collect();

            // Projections p[(s,a), λ], scaled by 1/√n_s.
            let modes = basis.eigenvectors();
            let mut proj = DMatrix::<C64>::zeros(3 * n_sites, basis.n_modes());
            for (alpha, &s) in sublattice.iter().enumerate() {
                let w = phases[alpha] / (occupancy[s] as f64).sqrt();
                for a in 0..3 {
                    for lam in 0..basis.n_modes() {
                        proj[(3 * s + a, lam)] += modes[(3 * alpha + a, lam)] * w;
                    }
                }
            }

            let mut entries = Vec::with_capacity(basis.n_modes());
            for cluster in basis.degenerate_clusters() {
                let block = proj.columns(cluster.start, cluster.len());
                let compressed = block.adjoint() * block;
                let mut w: Vec<f64> = if cluster.len() == 1 {
                    vec![compressed[(0, 0)].re]
                } else {
                    compressed.symmetric_eigen().eigenvalues.iter().copied().collect()
                };
                w.sort_by(|a, b| a.total_cmp(b));
                for (offset, weight) in w.into_iter().enumerate() {
                    entries.push((basis.frequencies()[cluster.start + offset], weight));
                }
            }
            Ok(entries)
        })
        .collect::<Result<Vec<_>, PhononError>>()?;
    Ok(UnfoldedWeights { path: path.to_vec(), weights })
}

/// Computes the supercell modes at every path point and unfolds them.
pub fn unfold_force_constants(
    fc: &ForceConstants,
    supercell: &CrystalStructure,
    primitive: &Mat3,
    path: &[Vec3],
) -> Result<UnfoldedWeights, PhononError> {
    supercell_matrix(supercell.lattice(), primitive)?;
    let prim_reciprocal = primitive.try_inverse().expect("checked invertible").transpose() * (2.0 * std::f64::consts::PI);
    let ks: Vec<Vec3> = path
        .iter()
        .map(|q| supercell.lattice() * (prim_reciprocal.transpose() * q) / (2.0 * std::f64::consts::PI))
        .collect();
    let bases = phonons_along(fc, supercell, &ks)?;
    unfold(&bases, supercell, primitive, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AtomSite;
    use crate::units::HBAR_SQ;

    fn chain_structure(masses: &[f64], a: f64) -> CrystalStructure {
        let n = masses.len();
        let sites = masses
            .iter()
            .enumerate()
            .map(|(i, &m)| AtomSite::new(format!("A{i}"), m, Vec3::new(a * i as f64 / n as f64, 0.0, 0.0)))
            .collect();
        CrystalStructure::new(Mat3::from_diagonal(&Vec3::new(a, 10.0, 10.0)), sites, true).unwrap()
    }

    fn xx(k: f64) -> Mat3 {
        let mut m = Mat3::zeros();
        m[(0, 0)] = k;
        m
    }

    #[test]
    fn zero_matrix_gives_zero_energies() {
        let basis = diagonalize(&DMatrix::zeros(6, 6), Vec3::zeros()).unwrap();
        assert!(basis.frequencies().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut d = DMatrix::<C64>::zeros(3, 3);
        d[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(diagonalize(&d, Vec3::zeros()), Err(PhononError::NotHermitian { .. })));
    }

    #[test]
    fn inconsistent_indices() {
        let s = chain_structure(&[1.0, 2.0], 3.0);
        let fc = ForceConstants::new(3);
        assert!(matches!(dynamical_matrix(&fc, &s, &Vec3::zeros()), Err(PhononError::InconsistentIndices(_))));
    }

    #[test]
    fn negative_eigenvalues_become_negative_energies() {
        let mut d = DMatrix::<C64>::zeros(3, 3);
        d[(0, 0)] = C64::new(-0.5, 0.0);
        d[(1, 1)] = C64::new(0.5, 0.0);
        let basis = diagonalize(&d, Vec3::zeros()).unwrap();
        let e = (HBAR_SQ * 0.5).sqrt() * 1000.0;
        assert!((basis.frequencies()[0] + e).abs() < 1e-12);
        assert!((basis.frequencies()[2] - e).abs() < 1e-12);
        assert_eq!(basis.imaginary_modes(), vec![0]);
    }

    #[test]
    fn asr_fixed_point() {
        let mut fc = ForceConstants::new(2);
        fc.insert(0, 1, xx(-2.0)).unwrap();
        fc.insert(0, 0, xx(2.0)).unwrap();
        fc.insert(1, 1, xx(2.0)).unwrap();
        let out = enforce_asr(&fc);
        assert!(out.max_abs_difference(&fc) < 1e-15);
    }

    #[test]
    fn asr_restores_three_zero_modes_in_toy_spring_model() {
        // Two atoms joined by an isotropic spring, self terms 10% too stiff.
        let s = chain_structure(&[12.0, 28.0], 6.0);
        let mut fc = ForceConstants::new(2);
        fc.insert(0, 1, Mat3::identity() * -3.0).unwrap();
        fc.insert(0, 0, Mat3::identity() * 3.3).unwrap();
        fc.insert(1, 1, Mat3::identity() * 3.3).unwrap();
        let before = phonons_at(&fc, &s, &Vec3::zeros()).unwrap();
        assert!(before.frequencies().iter().all(|e| e.abs() > 1.0));
        let fixed = enforce_asr(&fc);
        let after = phonons_at(&fixed, &s, &Vec3::zeros()).unwrap();
        let zeros = after.frequencies().iter().filter(|e| e.abs() < 1e-6).count();
        assert_eq!(zeros, 3);
        // Remaining triplet: k(1/m1 + 1/m2) with k = 3 eV/Å² in every direction.
        let expected = (HBAR_SQ * 3.0 * (1.0 / 12.0 + 1.0 / 28.0)).sqrt() * 1000.0;
        for e in &after.frequencies()[3..] {
            assert!((e - expected).abs() < 1e-9 * expected);
        }
    }

    #[test]
    fn asr_projects_asymmetric_blocks() {
        let mut fc = ForceConstants::new(3);
        fc.insert(0, 1, Mat3::new(1.0, 0.3, 0.0, -0.1, 2.0, 0.0, 0.0, 0.5, 1.0)).unwrap();
        fc.insert(1, 2, Mat3::new(0.5, 0.0, 0.2, 0.0, 0.5, 0.0, 0.0, 0.0, 0.5)).unwrap();
        let out = enforce_asr(&fc);
        for sum in out.row_sums() {
            assert!(sum.abs().max() < 1e-12, "{sum}");
        }
        let dense = out.to_dense();
        assert!((&dense - dense.transpose()).abs().max() < 1e-15);
        assert!(!out.contains(0, 2));
    }

    #[test]
    fn monoatomic_chain_zone_boundary() {
        // Two-atom cell of a monoatomic chain: supercell Γ carries the
        // primitive zone-boundary mode at ħ·2√(k/m).
        let (k, m) = (4.0, 28.0855);
        let s = chain_structure(&[m, m], 5.0);
        let mut fc = ForceConstants::new(2);
        fc.insert(0, 1, xx(-2.0 * k)).unwrap();
        let fc = enforce_asr(&fc);
        let basis = phonons_at(&fc, &s, &Vec3::zeros()).unwrap();
        let expected = 2.0 * (HBAR_SQ * k / m).sqrt() * 1000.0;
        let top = *basis.frequencies().last().unwrap();
        assert!((top - expected).abs() < 1e-8 * expected);
    }

    #[test]
    fn dynamical_matrix_time_reversal() {
        let s = chain_structure(&[12.0, 28.0], 4.3);
        let mut fc = ForceConstants::new(2);
        fc.insert(0, 1, Mat3::new(-3.0, 0.2, 0.0, 0.2, -1.0, 0.1, 0.0, 0.1, -0.5)).unwrap();
        let fc = enforce_asr(&fc);
        let q = Vec3::new(0.23, -0.1, 0.4);
        let plus = dynamical_matrix(&fc, &s, &q).unwrap();
        let minus = dynamical_matrix(&fc, &s, &-q).unwrap();
        assert!((plus - minus.conjugate()).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn commensurability() {
        let prim = Mat3::identity() * 3.0;
        assert!(supercell_matrix(&(Mat3::identity() * 6.0), &prim).is_ok());
        assert!(matches!(
            supercell_matrix(&(Mat3::identity() * 6.5), &prim),
            Err(PhononError::NotCommensurate { .. })
        ));
    }

    #[test]
    fn clusters_group_near_degenerate_modes() {
        let c = degenerate_clusters(&[-1e-7, 0.0, 2e-7, 10.0, 10.0 + 1e-8, 12.0]);
        assert_eq!(c, vec![0..3, 3..5, 5..6]);
    }
}
