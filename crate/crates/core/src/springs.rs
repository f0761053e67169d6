//! Central-force spring networks, used to build synthetic force constants
//! with known answers.

use crate::model::{CrystalStructure, ForceConstants, Mat3, Vec3};
use crate::phonons::enforce_asr;

/// Periodic images of `j` seen from `i` (separation vectors) with length in (0, cutoff].
pub fn images_within(structure: &CrystalStructure, i: usize, j: usize, cutoff: f64) -> Vec<Vec3> {
    let sites = structure.sites();
    let base = sites[j].position - sites[i].position;
    if !structure.is_periodic() {
        return if base.norm() > 0.0 && base.norm() <= cutoff { vec![base] } else { Vec::new() };
    }
    let lat = structure.lattice();
    let rows: Vec<Vec3> = (0..3).map(|r| lat.row(r).transpose()).collect();
    let volume = lat.determinant().abs();
    let reach: Vec<i64> = (0..3)
        .map(|r| {
            let height = volume / rows[(r + 1) % 3].cross(&rows[(r + 2) % 3]).norm();
            (cutoff / height).ceil() as i64 + 1
        })
        .collect();
    let frac = structure.to_fractional(&base).map(|x| x.round());
    let mut out = Vec::new();
    for a in -reach[0]..=reach[0] {
        for b in -reach[1]..=reach[1] {
            for c in -reach[2]..=reach[2] {
                let shift = Vec3::new(a as f64, b as f64, c as f64) - frac;
                let d = base + structure.to_cartesian(&shift);
                let len = d.norm();
                if len > 1e-9 && len <= cutoff {
                    out.push(d);
                }
            }
        }
    }
    out
}

/// Force constants of central springs between every pair of sites closer
/// than `cutoff`, with stiffness `k(distance)` in eV/Å². Images of the same
/// pair are summed into one block; self blocks follow from the sum rule.
pub fn central_springs(structure: &CrystalStructure, cutoff: f64, stiffness: impl Fn(f64) -> f64) -> ForceConstants {
    let n = structure.n_atoms();
    let mut fc = ForceConstants::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut block = Mat3::zeros();
            for d in images_within(structure, i, j, cutoff) {
                let u = d / d.norm();
                block -= stiffness(d.norm()) * u * u.transpose();
            }
            if block.iter().any(|&x| x != 0.0) {
                fc.insert(i, j, block).expect("indices in range");
            }
        }
    }
    enforce_asr(&fc)
}
