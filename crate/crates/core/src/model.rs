//! Domain types shared by the rest of the crate.
//!
//! Atom identity is the position of a site in [`CrystalStructure::sites`];
//! every per-atom array downstream (masses, displacements, force-constant
//! blocks, eigenvector components) is indexed the same way.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix3, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

const LATTICE_MATCH_TOL: f64 = 1e-6;
const SPACING_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("site {index}: {reason}")]
    InvalidSite { index: usize, reason: String },
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("structure has no sites")]
    EmptyStructure,
    #[error("ground and excited structures do not match: {0}")]
    MismatchedStructures(String),
    #[error("site {site}: displacement {magnitude:.6} Å is not below half the shortest lattice vector ({limit:.6} Å)")]
    WrapAmbiguity { site: usize, magnitude: f64, limit: f64 },
    #[error("invalid force constants: {0}")]
    InvalidForceConstants(String),
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomSite {
    pub species: String,
    /// amu
    pub mass: f64,
    /// Cartesian, Å
    pub position: Vec3,
}

impl AtomSite {
    pub fn new(species: impl Into<String>, mass: f64, position: Vec3) -> Self {
        Self { species: species.into(), mass, position }
    }
}

/// Lattice (row vectors, Å) plus an ordered list of sites.
#[derive(Debug, Clone, PartialEq)]
pub struct CrystalStructure {
    lattice: Mat3,
    sites: Vec<AtomSite>,
    periodic: bool,
}

impl CrystalStructure {
    pub fn new(lattice: Mat3, sites: Vec<AtomSite>, periodic: bool) -> Result<Self, ModelError> {
        if sites.is_empty() {
            return Err(ModelError::EmptyStructure);
        }
        if lattice.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::InvalidLattice("non-finite entry".into()));
        }
        if periodic && !(lattice.determinant() > 0.0) {
            return Err(ModelError::InvalidLattice(format!(
                "determinant {} must be positive for a periodic structure",
                lattice.determinant()
            )));
        }
        for (index, site) in sites.iter().enumerate() {
            if !(site.mass > 0.0) || !site.mass.is_finite() {
                return Err(ModelError::InvalidSite { index, reason: format!("mass {} must be positive", site.mass) });
            }
            if site.position.iter().any(|x| !x.is_finite()) {
                return Err(ModelError::InvalidSite { index, reason: "non-finite position".into() });
            }
        }
        Ok(Self { lattice, sites, periodic })
    }

    pub fn lattice(&self) -> &Mat3 {
        &self.lattice
    }

    pub fn sites(&self) -> &[AtomSite] {
        &self.sites
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn n_atoms(&self) -> usize {
        self.sites.len()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.sites.iter().map(|s| s.mass).collect()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.sites.iter().map(|s| s.position).collect()
    }

    /// Fractional coordinates of a Cartesian vector.
    pub fn to_fractional(&self, cart: &Vec3) -> Vec3 {
        let inv = self.lattice.transpose().try_inverse().unwrap_or_else(Mat3::zeros);
        inv * cart
    }

    pub fn to_cartesian(&self, frac: &Vec3) -> Vec3 {
        self.lattice.transpose() * frac
    }

    /// Reciprocal lattice rows b_j with a_i·b_j = 2π δ_ij (Å⁻¹).
    pub fn reciprocal(&self) -> Mat3 {
        let inv = self.lattice.try_inverse().unwrap_or_else(Mat3::zeros);
        inv.transpose() * (2.0 * std::f64::consts::PI)
    }

    /// Cartesian wavevector (Å⁻¹) for a reduced wavevector in this lattice's reciprocal basis.
    pub fn q_cartesian(&self, q_reduced: &Vec3) -> Vec3 {
        self.reciprocal().transpose() * q_reduced
    }

    pub fn shortest_lattice_vector(&self) -> f64 {
        (0..3).map(|i| self.lattice.row(i).norm()).fold(f64::INFINITY, f64::min)
    }

    /// Shortest periodic image of a Cartesian difference vector. Returns the
    /// vector unchanged for non-periodic structures.
    pub fn minimum_image(&self, d: &Vec3) -> Vec3 {
        self.shortest_images(d, 0.0)[0]
    }

    /// All periodic images of `d` whose length is within `tol` Å of the
    /// shortest one, ordered by increasing length.
    pub fn shortest_images(&self, d: &Vec3, tol: f64) -> Vec<Vec3> {
        if !self.periodic {
            return vec![*d];
        }
        let frac = self.to_fractional(d);
        let base = frac.map(|x| x.round());
        let mut candidates = Vec::with_capacity(27);
        for i in -1..=1 {
            for j in -1..=1 {
                for k in -1..=1 {
                    let shift = base - Vec3::new(i as f64, j as f64, k as f64);
                    candidates.push(d - self.to_cartesian(&shift));
                }
            }
        }
        candidates.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
        let best = candidates[0].norm();
        candidates.retain(|c| c.norm() <= best + tol);
        candidates
    }
}

/// Ground- and excited-state geometries of the same defect supercell.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryPair {
    ground: CrystalStructure,
    excited: CrystalStructure,
}

impl GeometryPair {
    pub fn new(ground: CrystalStructure, excited: CrystalStructure) -> Result<Self, ModelError> {
        if ground.n_atoms() != excited.n_atoms() {
            return Err(ModelError::MismatchedStructures(format!(
                "site count {} vs {}",
                ground.n_atoms(),
                excited.n_atoms()
            )));
        }
        if ground.periodic != excited.periodic {
            return Err(ModelError::MismatchedStructures("periodicity differs".into()));
        }
        if (ground.lattice - excited.lattice).abs().max() > LATTICE_MATCH_TOL {
            return Err(ModelError::MismatchedStructures("lattices differ".into()));
        }
        for (i, (g, e)) in ground.sites.iter().zip(&excited.sites).enumerate() {
            if g.species != e.species {
                return Err(ModelError::MismatchedStructures(format!(
                    "site {i}: species {} vs {}",
                    g.species, e.species
                )));
            }
            if (g.mass - e.mass).abs() > 1e-9 * g.mass {
                return Err(ModelError::MismatchedStructures(format!("site {i}: mass {} vs {}", g.mass, e.mass)));
            }
        }
        Ok(Self { ground, excited })
    }

    pub fn ground(&self) -> &CrystalStructure {
        &self.ground
    }

    pub fn excited(&self) -> &CrystalStructure {
        &self.excited
    }
}

/// Per-site displacement R_e − R_g (Å), minimum-image when periodic.
pub fn validate_pair(pair: &GeometryPair) -> Result<Vec<Vec3>, ModelError> {
    let ground = &pair.ground;
    let limit = 0.5 * ground.shortest_lattice_vector();
    ground
        .sites
        .iter()
        .zip(&pair.excited.sites)
        .enumerate()
        .map(|(site, (g, e))| {
            let d = ground.minimum_image(&(e.position - g.position));
            if ground.periodic && d.norm() >= limit {
                return Err(ModelError::WrapAmbiguity { site, magnitude: d.norm(), limit });
            }
            Ok(d)
        })
        .collect()
}

/// Second-order force constants as pairwise 3×3 blocks (eV/Å²).
///
/// Only one of each transposed pair is stored (`i <= j`); `block(j, i)` is
/// the transpose of `block(i, j)`. For periodic structures a block holds the
/// summed interaction of `i` with every periodic image of `j`. Missing blocks
/// are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceConstants {
    n_atoms: usize,
    blocks: BTreeMap<(usize, usize), Mat3>,
}

impl ForceConstants {
    pub fn new(n_atoms: usize) -> Self {
        Self { n_atoms, blocks: BTreeMap::new() }
    }

    /// Builds from (i, j, block) entries. Both orientations of a pair may be
    /// given as long as they are transposes of each other.
    pub fn from_blocks(
        n_atoms: usize,
        entries: impl IntoIterator<Item = (usize, usize, Mat3)>,
    ) -> Result<Self, ModelError> {
        let mut fc = Self::new(n_atoms);
        for (i, j, m) in entries {
            let (key, canon) = if i <= j { ((i, j), m) } else { ((j, i), m.transpose()) };
            fc.check_indices(i, j)?;
            if let Some(existing) = fc.blocks.get(&key) {
                let scale = 1.0 + existing.abs().max();
                if (existing - canon).abs().max() > 1e-8 * scale {
                    return Err(ModelError::InvalidForceConstants(format!(
                        "block ({i},{j}) is not the transpose of its counterpart"
                    )));
                }
                continue;
            }
            fc.insert(key.0, key.1, canon)?;
        }
        Ok(fc)
    }

    fn check_indices(&self, i: usize, j: usize) -> Result<(), ModelError> {
        if i >= self.n_atoms || j >= self.n_atoms {
            return Err(ModelError::InvalidForceConstants(format!(
                "block ({i},{j}) out of range for {} atoms",
                self.n_atoms
            )));
        }
        Ok(())
    }

    /// Sets block (i, j); the (j, i) block becomes its transpose. Self blocks
    /// are symmetrized.
    pub fn insert(&mut self, i: usize, j: usize, block: Mat3) -> Result<(), ModelError> {
        self.check_indices(i, j)?;
        if block.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::InvalidForceConstants(format!("block ({i},{j}) has non-finite entries")));
        }
        let (key, canon) = match i.cmp(&j) {
            std::cmp::Ordering::Less => ((i, j), block),
            std::cmp::Ordering::Greater => ((j, i), block.transpose()),
            std::cmp::Ordering::Equal => ((i, i), 0.5 * (block + block.transpose())),
        };
        self.blocks.insert(key, canon);
        Ok(())
    }

    pub fn remove(&mut self, i: usize, j: usize) {
        self.blocks.remove(&(i.min(j), i.max(j)));
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn block(&self, i: usize, j: usize) -> Mat3 {
        if i <= j {
            self.blocks.get(&(i, j)).copied().unwrap_or_else(Mat3::zeros)
        } else {
            self.blocks.get(&(j, i)).map(|m| m.transpose()).unwrap_or_else(Mat3::zeros)
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.blocks.contains_key(&(i.min(j), i.max(j)))
    }

    /// Stored blocks with `i <= j`, in index order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, &Mat3)> {
        self.blocks.iter().map(|(&(i, j), m)| (i, j, m))
    }

    /// Off-diagonal stored blocks only.
    pub fn off_diagonal(&self) -> impl Iterator<Item = (usize, usize, &Mat3)> {
        self.pairs().filter(|(i, j, _)| i != j)
    }

    /// Full 3N×3N real matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = 3 * self.n_atoms;
        let mut out = DMatrix::zeros(n, n);
        for (i, j, m) in self.pairs() {
            for a in 0..3 {
                for b in 0..3 {
                    out[(3 * i + a, 3 * j + b)] = m[(a, b)];
                    out[(3 * j + b, 3 * i + a)] = m[(a, b)];
                }
            }
        }
        out
    }

    /// Builds from a dense 3N×3N matrix, symmetrizing it and dropping zero blocks.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self, ModelError> {
        if m.nrows() != m.ncols() || m.nrows() % 3 != 0 {
            return Err(ModelError::InvalidForceConstants(format!(
                "dense matrix {}x{} is not 3N×3N",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows() / 3;
        let mut fc = Self::new(n);
        for i in 0..n {
            for j in i..n {
                let block = Mat3::from_fn(|a, b| 0.5 * (m[(3 * i + a, 3 * j + b)] + m[(3 * j + b, 3 * i + a)]));
                if block.iter().any(|&x| x != 0.0) {
                    fc.insert(i, j, block)?;
                }
            }
        }
        Ok(fc)
    }

    /// Σ_j block(i, j) for every atom i.
    pub fn row_sums(&self) -> Vec<Mat3> {
        let mut sums = vec![Mat3::zeros(); self.n_atoms];
        for (i, j, m) in self.pairs() {
            sums[i] += m;
            if i != j {
                sums[j] += m.transpose();
            }
        }
        sums
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n_atoms: self.n_atoms,
            blocks: self.blocks.iter().map(|(&k, m)| (k, m * factor)).collect(),
        }
    }

    pub fn max_abs_difference(&self, other: &Self) -> f64 {
        let keys: std::collections::BTreeSet<_> = self.blocks.keys().chain(other.blocks.keys()).collect();
        keys.into_iter()
            .map(|&(i, j)| (self.block(i, j) - other.block(i, j)).abs().max())
            .fold(0.0, f64::max)
    }
}

/// Uniformly gridded spectrum (energies in meV).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    energies: Vec<f64>,
    intensities: Vec<f64>,
    zpl_energy: f64,
    normalization: f64,
}

impl Spectrum {
    pub fn new(
        energies: Vec<f64>,
        intensities: Vec<f64>,
        zpl_energy: f64,
        normalization: f64,
    ) -> Result<Self, ModelError> {
        if energies.len() != intensities.len() {
            return Err(ModelError::InvalidSpectrum(format!(
                "{} energies but {} intensities",
                energies.len(),
                intensities.len()
            )));
        }
        if energies.len() < 2 {
            return Err(ModelError::InvalidSpectrum("need at least two grid points".into()));
        }
        let spacing = (energies[energies.len() - 1] - energies[0]) / (energies.len() - 1) as f64;
        if !(spacing > 0.0) {
            return Err(ModelError::InvalidSpectrum("energies must increase".into()));
        }
        for w in energies.windows(2) {
            if ((w[1] - w[0]) - spacing).abs() > SPACING_REL_TOL * spacing.max(w[1].abs()) {
                return Err(ModelError::InvalidSpectrum(format!("non-uniform spacing near {} meV", w[0])));
            }
        }
        if let Some(bad) = intensities.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
            return Err(ModelError::InvalidSpectrum(format!("intensity {bad} is negative or non-finite")));
        }
        Ok(Self { energies, intensities, zpl_energy, normalization })
    }

    /// Grid `start + k·spacing` for k in 0..intensities.len().
    pub fn on_grid(
        start: f64,
        spacing: f64,
        intensities: Vec<f64>,
        zpl_energy: f64,
        normalization: f64,
    ) -> Result<Self, ModelError> {
        let energies = (0..intensities.len()).map(|k| start + k as f64 * spacing).collect();
        Self::new(energies, intensities, zpl_energy, normalization)
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn zpl_energy(&self) -> f64 {
        self.zpl_energy
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        (self.energies[self.len() - 1] - self.energies[0]) / (self.len() - 1) as f64
    }

    /// Rectangle-rule area Σ I·ΔE.
    pub fn integral(&self) -> f64 {
        self.intensities.iter().sum::<f64>() * self.spacing()
    }

    /// Area of the grid points with energy in `[lo, hi)`.
    pub fn integral_between(&self, lo: f64, hi: f64) -> f64 {
        self.energies
            .iter()
            .zip(&self.intensities)
            .filter(|(e, _)| **e >= lo && **e < hi)
            .map(|(_, i)| i)
            .sum::<f64>()
            * self.spacing()
    }

    /// Linear interpolation of the intensity at `energy`; zero off-grid.
    pub fn value_at(&self, energy: f64) -> f64 {
        let x = (energy - self.energies[0]) / self.spacing();
        if x < 0.0 || x > (self.len() - 1) as f64 {
            return 0.0;
        }
        let k = (x.floor() as usize).min(self.len() - 2);
        let t = x - k as f64;
        self.intensities[k] * (1.0 - t) + self.intensities[k + 1] * t
    }

    pub fn max_intensity(&self) -> f64 {
        self.intensities.iter().copied().fold(0.0, f64::max)
    }
}
