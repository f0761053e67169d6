#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vibroline::ifcfit::TrainingSnapshot;
use vibroline::model::{Mat3, Vec3};
use vibroline::units::HBAR_SQ;
use vibroline::{CrystalStructure, ForceConstants};

pub const ZPL: f64 = 1350.0;

/// Mode energies of the four-mode fixture, meV.
pub const FOUR_MODE_ENERGIES: [f64; 4] = [31.3, 35.3, 73.45, 74.4];
/// Shares of the total Huang-Rhys factor, chosen by a coarse grid search over
/// shares in steps of 0.1 (all modes at least 0.1) for the first sideband
/// peak closest to 36 meV below the ZPL.
pub const FOUR_MODE_SHARES: [f64; 4] = [0.1, 0.6, 0.2, 0.1];
pub const TOTAL_HR: f64 = 2.785;

pub fn four_mode_coupling() -> Vec<(f64, f64)> {
    FOUR_MODE_ENERGIES.iter().zip(FOUR_MODE_SHARES).map(|(&e, w)| (e, w * TOTAL_HR)).collect()
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_vibroline"))
}

pub fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args).env_remove("VIBROLINE_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// (code, module, name) from the first `ERROR:` line on standard error.
pub fn error_tag(out: &Output) -> Option<(i32, String, String)> {
    let text = stderr(out);
    let line = text.lines().find(|l| l.starts_with("ERROR:"))?;
    let mut parts = line.splitn(5, ':').skip(1);
    let code = parts.next()?.parse().ok()?;
    let module = parts.next()?.to_string();
    let name = parts.next()?.to_string();
    Some((code, module, name))
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

pub fn write_structure(path: &Path, s: &CrystalStructure) {
    let mut out = String::from(if s.is_periodic() { "fixture\n" } else { "fixture periodic=false\n" });
    for r in 0..3 {
        let l = s.lattice();
        let _ = writeln!(out, "{} {} {}", l[(r, 0)], l[(r, 1)], l[(r, 2)]);
    }
    let _ = writeln!(out, "{}", s.n_atoms());
    for a in s.sites() {
        let _ = writeln!(out, "{} {} {} {} {}", a.species, a.mass, a.position.x, a.position.y, a.position.z);
    }
    fs::write(path, out).unwrap();
}

pub fn write_fc(path: &Path, fc: &ForceConstants) {
    let mut out = format!("{}\n", fc.n_atoms());
    for (i, j, b) in fc.pairs() {
        let _ = writeln!(out, "{i} {j}");
        for r in 0..3 {
            let _ = writeln!(out, "{} {} {}", b[(r, 0)], b[(r, 1)], b[(r, 2)]);
        }
    }
    fs::write(path, out).unwrap();
}

pub fn write_snapshots(path: &Path, snapshots: &[TrainingSnapshot]) {
    let mut out = String::new();
    for (k, s) in snapshots.iter().enumerate() {
        let _ = writeln!(out, "snapshot {k}");
        for (d, f) in s.displacements().iter().zip(s.forces()) {
            let _ = writeln!(out, "{} {} {} {} {} {}", d.x, d.y, d.z, f.x, f.y, f.z);
        }
    }
    fs::write(path, out).unwrap();
}

pub fn write_lattice(path: &Path, l: &Mat3) {
    let mut out = String::new();
    for r in 0..3 {
        let _ = writeln!(out, "{} {} {}", l[(r, 0)], l[(r, 1)], l[(r, 2)]);
    }
    fs::write(path, out).unwrap();
}

pub fn write_qpoints(path: &Path, qs: &[Vec3]) {
    let mut out = String::new();
    for q in qs {
        let _ = writeln!(out, "{} {} {}", q.x, q.y, q.z);
    }
    fs::write(path, out).unwrap();
}

pub struct LineshapeFiles {
    pub ground: PathBuf,
    pub excited: PathBuf,
    pub fc: PathBuf,
}

/// Independent Einstein oscillators, one atom per (energy meV, S) entry,
/// each displaced along x so that its three degenerate modes carry S.
/// The force constants are self blocks only, so the sum rule must be off.
pub fn einstein_fixture(dir: &Path, modes: &[(f64, f64)], displace: bool) -> LineshapeFiles {
    let mass = 28.0855;
    let mut ground = String::from("einstein periodic=false\n30 0 0\n0 30 0\n0 0 30\n");
    let mut excited = ground.clone();
    let _ = writeln!(ground, "{}", modes.len());
    let _ = writeln!(excited, "{}", modes.len());
    let mut fc = format!("{}\n", modes.len());
    for (k, &(e, s)) in modes.iter().enumerate() {
        let x = 4.0 * k as f64;
        let d = if displace { (2.0 * HBAR_SQ * s / (e / 1000.0 * mass)).sqrt() } else { 0.0 };
        let _ = writeln!(ground, "Si {mass} {x} 0 0");
        let _ = writeln!(excited, "Si {mass} {} 0 0", x + d);
        let stiffness = mass * (e / 1000.0).powi(2) / HBAR_SQ;
        let _ = writeln!(fc, "{k} {k}\n{stiffness} 0 0\n0 {stiffness} 0\n0 0 {stiffness}");
    }
    let files = LineshapeFiles { ground: dir.join("ground.txt"), excited: dir.join("excited.txt"), fc: dir.join("fc.txt") };
    fs::write(&files.ground, ground).unwrap();
    fs::write(&files.excited, excited).unwrap();
    fs::write(&files.fc, fc).unwrap();
    files
}

/// Periodic diatomic chain along x: cell length 2·spacing, isotropic
/// nearest-neighbour springs of stiffness k in every direction.
pub fn diatomic_chain(dir: &Path, k: f64, m1: f64, m2: f64, spacing: f64) -> (PathBuf, PathBuf) {
    let structure = format!(
        "diatomic chain\n{} 0 0\n0 12 0\n0 0 12\n2\nA {m1} 0 0 0\nB {m2} {spacing} 0 0\n",
        2.0 * spacing
    );
    // Both images of the partner lie at ±spacing, so the lumped block is −2k·I.
    let fc = format!("2\n0 1\n{} 0 0\n0 {} 0\n0 0 {}\n", -2.0 * k, -2.0 * k, -2.0 * k);
    let s = dir.join("chain.txt");
    let f = dir.join("chain_fc.txt");
    fs::write(&s, structure).unwrap();
    fs::write(&f, fc).unwrap();
    (s, f)
}

/// Simple-cubic nearest-neighbour model in a reps³ supercell of edge `a`,
/// longitudinal and transverse stiffness 6 and 1.7 eV/Å².
pub fn cubic_model(a: f64, reps: usize, mass: f64, vacancy: bool) -> (CrystalStructure, ForceConstants) {
    use vibroline::springs::images_within;
    use vibroline::AtomSite;
    let mut sites = Vec::new();
    for x in 0..reps {
        for y in 0..reps {
            for z in 0..reps {
                if vacancy && x + y + z == 0 {
                    continue;
                }
                sites.push(AtomSite::new("X", mass, Vec3::new(x as f64, y as f64, z as f64) * a));
            }
        }
    }
    let s = CrystalStructure::new(Mat3::from_diagonal_element(a * reps as f64), sites, true).unwrap();
    let n = s.n_atoms();
    let mut fc = ForceConstants::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut block = Mat3::zeros();
            for d in images_within(&s, i, j, a * 1.01) {
                let u = d / d.norm();
                block -= 6.0 * u * u.transpose() + 1.7 * (Mat3::identity() - u * u.transpose());
            }
            if block.iter().any(|&x| x != 0.0) {
                fc.insert(i, j, block).unwrap();
            }
        }
    }
    (s, vibroline::phonons::enforce_asr(&fc))
}

/// Primitive-cell energies of [`cubic_model`] by direct neighbour sum, sorted.
pub fn cubic_primitive_energies(q_red: &Vec3, mass: f64) -> Vec<f64> {
    let phase = q_red.map(|x| 1.0 - (2.0 * std::f64::consts::PI * x).cos());
    let mut e: Vec<f64> = (0..3)
        .map(|p| {
            let lambda: f64 = 2.0 / mass * (0..3).map(|b| if b == p { 6.0 } else { 1.7 } * phase[b]).sum::<f64>();
            1000.0 * (4.180_159_279_778_997e-3 * lambda.max(0.0)).sqrt()
        })
        .collect();
    e.sort_by(f64::total_cmp);
    e
}

pub fn cubic_path() -> Vec<Vec3> {
    let mut path = Vec::new();
    for k in 0..=5 {
        path.push(Vec3::new(0.1 * k as f64, 0.0, 0.0));
    }
    for k in 1..=5 {
        path.push(Vec3::new(0.5, 0.1 * k as f64, 0.0));
    }
    for k in 1..=5 {
        path.push(Vec3::new(0.5, 0.5, 0.1 * k as f64));
    }
    path.push(Vec3::new(0.17, 0.31, 0.05));
    path
}

/// CSV body rows split into fields.
pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

pub fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// 2×2×2 simple-cubic cell with jittered sites and two species.
pub fn jittered_cube(seed: u64) -> CrystalStructure {
    use rand::{Rng, SeedableRng};
    use vibroline::AtomSite;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut sites = Vec::new();
    for x in 0..2 {
        for y in 0..2 {
            for z in 0..2 {
                let base = Vec3::new(x as f64, y as f64, z as f64) * 3.0;
                let jitter = Vec3::from_fn(|_, _| rng.random_range(-0.1..0.1));
                let (sym, mass) = if (x + y + z) % 2 == 0 { ("Si", 28.0855) } else { ("C", 12.011) };
                sites.push(AtomSite::new(sym, mass, base + jitter));
            }
        }
    }
    CrystalStructure::new(Mat3::from_diagonal_element(6.0), sites, true).unwrap()
}

/// Central springs decaying with distance, cutoff 3.5 Å.
pub fn spring_generator(s: &CrystalStructure) -> ForceConstants {
    vibroline::springs::central_springs(s, 3.5, |d| 8.0 * (-(d - 3.0)).exp())
}

/// Gaussian displacements (0.03 Å) with model forces plus optional
/// Gaussian force noise in eV/Å.
pub fn spring_snapshots(fc: &ForceConstants, count: usize, noise: f64, seed: u64) -> Vec<TrainingSnapshot> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let disp = Normal::new(0.0, 0.03).unwrap();
    let force_noise = Normal::new(0.0, noise.max(1e-300)).unwrap();
    (0..count)
        .map(|_| {
            let u: Vec<Vec3> = (0..fc.n_atoms()).map(|_| Vec3::from_fn(|_, _| disp.sample(&mut rng))).collect();
            let clean = TrainingSnapshot::from_model(fc, u.clone()).unwrap();
            let forces = clean
                .forces()
                .iter()
                .map(|f| if noise > 0.0 { f + Vec3::from_fn(|_, _| force_noise.sample(&mut rng)) } else { *f })
                .collect();
            TrainingSnapshot::new(u, forces).unwrap()
        })
        .collect()
}

/// Four-bilayer hexagonal SiC-like cell.
pub fn sic_4h() -> CrystalStructure {
    use vibroline::AtomSite;
    let (a, c) = (3.08, 10.08);
    let lattice = Mat3::new(a, 0.0, 0.0, -a / 2.0, a * 3f64.sqrt() / 2.0, 0.0, 0.0, 0.0, c);
    let stacking = [(0.0, 0.0, 0.0), (1.0 / 3.0, 2.0 / 3.0, 0.25), (0.0, 0.0, 0.5), (2.0 / 3.0, 1.0 / 3.0, 0.75)];
    let mut sites = Vec::new();
    for &(x, y, z) in &stacking {
        for (sym, mass, dz) in [("Si", 28.0855, 0.0), ("C", 12.011, 3.0 / 16.0)] {
            let frac = Vec3::new(x, y, z + dz);
            sites.push(AtomSite::new(sym, mass, lattice.transpose() * frac));
        }
    }
    CrystalStructure::new(lattice, sites, true).unwrap()
}

/// Arrhenius-type data `A/(1 + C·exp(−E/kT))` on an even temperature grid.
pub fn write_thermal(path: &Path, a: f64, c: f64, e_a: f64, temps: &[f64], noise: Option<&[f64]>) {
    let mut out = String::from("T_K,value\n");
    for (k, &t) in temps.iter().enumerate() {
        let mut y = vibroline::thermal::model_eval(a, c, e_a, t);
        if let Some(n) = noise {
            y *= 1.0 + n[k];
        }
        let _ = writeln!(out, "{t},{y}");
    }
    fs::write(path, out).unwrap();
}

/// (energy, intensity) columns of a spectrum CSV.
pub fn spectrum(path: &Path) -> (Vec<f64>, Vec<f64>) {
    csv_rows(path).iter().map(|r| (r[0].parse::<f64>().unwrap(), r[1].parse::<f64>().unwrap())).unzip()
}

/// `y_more/y_more(ZPL) − y_less/y_less(ZPL)` on a shared grid.
pub fn zpl_scaled_excess(energies: &[f64], y_less: &[f64], y_more: &[f64]) -> Vec<f64> {
    let zpl_bin = energies
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - ZPL).abs().total_cmp(&(b.1 - ZPL).abs()))
        .map(|(i, _)| i)
        .unwrap();
    y_more.iter().zip(y_less).map(|(a, b)| a / y_more[zpl_bin] - b / y_less[zpl_bin]).collect()
}

/// Offsets below the ZPL of strict local maxima within [lo, hi] meV.
pub fn local_maxima_offsets(energies: &[f64], y: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    (1..y.len() - 1)
        .filter(|&i| y[i] > y[i - 1] && y[i] > y[i + 1])
        .map(|i| ZPL - energies[i])
        .filter(|o| (lo..=hi).contains(o))
        .collect()
}
