//! Unit conventions: lengths in Å, masses in amu, force constants in eV/Å²,
//! spectral energies in meV.

/// ħ² in amu·Å²·eV (CODATA 2018).
///
/// An eigenvalue λ of the mass-weighted dynamical matrix, in eV/Å²/amu, maps
/// to a mode energy ħω = √(ħ²·λ) in eV.
pub const HBAR_SQ: f64 = 4.180_159_279_778_997e-3;

/// Boltzmann constant in meV/K.
pub const BOLTZMANN_MEV: f64 = 0.086_173_332_621_451_78;

pub const MEV_PER_EV: f64 = 1000.0;

/// Mode energy in meV for a dynamical-matrix eigenvalue in eV/Å²/amu.
/// Negative eigenvalues come back as negative energies.
pub fn eigenvalue_to_mev(lambda: f64) -> f64 {
    let e = (HBAR_SQ * lambda.abs()).sqrt() * MEV_PER_EV;
    if lambda < 0.0 {
        -e
    } else {
        e
    }
}

/// Inverse of [`eigenvalue_to_mev`].
pub fn mev_to_eigenvalue(energy_mev: f64) -> f64 {
    let e = energy_mev / MEV_PER_EV;
    e.signum() * e * e / HBAR_SQ
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalue_round_trip() {
        for e in [-12.5, 0.0, 1e-3, 36.0, 120.0] {
            let back = eigenvalue_to_mev(mev_to_eigenvalue(e));
            assert!((back - e).abs() < 1e-12 * (1.0 + e.abs()), "{e} -> {back}");
        }
    }
}
