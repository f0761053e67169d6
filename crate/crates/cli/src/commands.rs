use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use vibroline::ifcfit::{self, build_features, RfeOptions, DEFAULT_RIDGE};
use vibroline::model::Vec3;
use vibroline::phonons::{enforce_asr, phonons_along, phonons_at, unfold_force_constants};
use vibroline::thermal;
use vibroline::vibronic::{
    debye_waller, delta_q, first_sideband_offset, hr_factors, lineshape, partial_lineshape, peak_spacing, EnergyWindow,
};
use vibroline::{GeometryPair, LineshapeConfig, Spectrum, VibronicCoupling, VibronicError};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::formats::{self, fmt12, round12, write_text};
use crate::{ArrheniusArgs, FitIfcArgs, LineshapeArgs, PartialArgs, PhononsArgs, UnfoldArgs};

pub const PHONONS_KEYS: &[&str] = &["output_dir", "structure", "fc", "qpoints", "asr", "eigenvectors"];
pub const LINESHAPE_KEYS: &[&str] = &[
    "output_dir", "ground", "excited", "fc", "zpl", "sigma", "spacing", "gamma", "window_min", "window_max", "cubic", "asr",
];
pub const PARTIAL_KEYS: &[&str] = &[
    "output_dir", "ground", "excited", "fc", "zpl", "sigma", "spacing", "gamma", "window_min", "window_max", "cubic", "asr",
    "cutoffs",
];
pub const FIT_IFC_KEYS: &[&str] =
    &["output_dir", "structure", "snapshots", "cutoff", "ridge", "rfe", "rfe_target", "rfe_tolerance"];
pub const ARRHENIUS_KEYS: &[&str] = &["output_dir", "data", "guess_amplitude", "guess_c", "guess_ea"];
pub const UNFOLD_KEYS: &[&str] = &["output_dir", "fc", "supercell", "primitive", "path", "asr"];

/// Output directory from the flag, the config file, or the working directory.
pub fn output_dir(flag: Option<PathBuf>, config: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = config.get::<PathBuf>("output_dir", flag)?.unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    write_text(path, &text)
}

fn num(x: f64) -> Value {
    json!(round12(x))
}

fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

pub fn phonons(args: &PhononsArgs, config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let structure_path: PathBuf = config.require("structure", args.structure.clone())?;
    let fc_path: PathBuf = config.require("fc", args.fc.clone())?;
    let structure = formats::read_structure(&structure_path)?;
    let mut fc = formats::read_force_constants(&fc_path, Some(structure.n_atoms()))?;
    if config.switch("asr", args.no_asr, false, true)? {
        fc = enforce_asr(&fc);
    }
    let mut qpoints = match config.get::<PathBuf>("qpoints", args.qpoints.clone())? {
        Some(path) => formats::read_qpoints(&path)?,
        None => Vec::new(),
    };
    if qpoints.is_empty() {
        eprintln!("note: no q-points given, using Γ = (0, 0, 0)");
        qpoints.push(Vec3::zeros());
    }
    let bases = phonons_along(&fc, &structure, &qpoints)?;

    let mut csv = String::from("qx,qy,qz,mode_index,energy_meV\n");
    for (q, basis) in qpoints.iter().zip(&bases) {
        for (m, e) in basis.frequencies().iter().enumerate() {
            let _ = writeln!(csv, "{},{},{},{m},{}", fmt12(q.x), fmt12(q.y), fmt12(q.z), fmt12(*e));
        }
        let imaginary = basis.imaginary_modes();
        if imaginary.iter().any(|&m| basis.frequencies()[m] < -1e-3) {
            eprintln!(
                "note: {} imaginary mode(s) at q = ({}, {}, {})",
                imaginary.len(),
                fmt12(q.x),
                fmt12(q.y),
                fmt12(q.z)
            );
        }
    }
    write_text(&out.join("phonons.csv"), &csv)?;

    if config.switch("eigenvectors", args.eigenvectors, true, false)? {
        let mut csv = String::from("q_index,mode_index,atom_index,x_re,x_im,y_re,y_im,z_re,z_im\n");
        for (qi, basis) in bases.iter().enumerate() {
            let u = basis.eigenvectors();
            for m in 0..basis.n_modes() {
                for a in 0..basis.n_atoms() {
                    let c: Vec<String> =
                        (0..3).flat_map(|k| [fmt12(u[(3 * a + k, m)].re), fmt12(u[(3 * a + k, m)].im)]).collect();
                    let _ = writeln!(csv, "{qi},{m},{a},{}", c.join(","));
                }
            }
        }
        write_text(&out.join("phonons_eigenvectors.csv"), &csv)?;
    }
    Ok(())
}

struct Coupled {
    coupling: VibronicCoupling,
    config: LineshapeConfig,
}

fn coupling_from_files(args: &LineshapeArgs, config: &RunConfig) -> Result<Coupled, CliError> {
    let ground_path: PathBuf = config.require("ground", args.ground.clone())?;
    let excited_path: PathBuf = config.require("excited", args.excited.clone())?;
    let fc_path: PathBuf = config.require("fc", args.fc.clone())?;
    let zpl: f64 = config.require("zpl", args.zpl)?;

    let mut settings = LineshapeConfig::new(zpl);
    settings.sigma = config.get("sigma", args.sigma)?.unwrap_or(settings.sigma);
    settings.spacing = config.get("spacing", args.spacing)?.unwrap_or(settings.spacing);
    settings.zpl_width = config.get("gamma", args.gamma)?.unwrap_or(settings.zpl_width);
    settings.cubic_prefactor = config.switch("cubic", args.no_cubic, false, true)?;
    let lo: Option<f64> = config.get("window_min", args.window_min)?;
    let hi: Option<f64> = config.get("window_max", args.window_max)?;
    settings.window = match (lo, hi) {
        (Some(min), Some(max)) => Some(EnergyWindow { min, max }),
        (None, None) => None,
        _ => return Err(CliError::usage("window_min and window_max must be given together")),
    };

    let ground = formats::read_structure(&ground_path)?;
    let excited = formats::read_structure(&excited_path)?;
    let pair = GeometryPair::new(ground, excited)?;
    let mut fc = formats::read_force_constants(&fc_path, Some(pair.ground().n_atoms()))?;
    if config.switch("asr", args.no_asr, false, true)? {
        fc = enforce_asr(&fc);
    }
    let basis = phonons_at(&fc, pair.ground(), &Vec3::zeros())?;
    let coupling = hr_factors(&delta_q(&pair, &basis)?);
    let real_imaginary = coupling.modes().iter().filter(|m| m.energy < -1e-3).count();
    if real_imaginary > 0 {
        eprintln!("note: {real_imaginary} imaginary mode(s) excluded from the coupling");
    }
    Ok(Coupled { coupling, config: settings })
}

fn spectrum_csv(spectrum: &Spectrum) -> String {
    let mut csv = String::from("energy_meV,intensity\n");
    for (e, i) in spectrum.energies().iter().zip(spectrum.intensities()) {
        let _ = writeln!(csv, "{},{}", fmt12(*e), fmt12(*i));
    }
    csv
}

/// Peak offset of the first sideband below the ZPL and the spacings between
/// consecutive peaks.
fn peak_summary(spectrum: &Spectrum, config: &LineshapeConfig) -> Result<(Option<f64>, Vec<f64>), CliError> {
    match peak_spacing(spectrum) {
        Ok(peaks) => {
            let tolerance = 2.0 * config.spacing + config.zpl_width;
            let offset = first_sideband_offset(&peaks, config.zpl_energy, tolerance);
            Ok((offset, peaks.iter().filter_map(|p| p.spacing).collect()))
        }
        Err(VibronicError::NoPeaks) => Ok((None, Vec::new())),
        Err(e) => Err(e.into()),
    }
}

fn modes_csv(coupling: &VibronicCoupling) -> String {
    let mut csv = String::from("mode_index,energy_meV,delta_q,hr,excluded\n");
    for (k, m) in coupling.modes().iter().enumerate() {
        let _ = writeln!(csv, "{k},{},{},{},{}", fmt12(m.energy), fmt12(m.delta_q), fmt12(m.hr), m.excluded);
    }
    csv
}

pub fn lineshape_cmd(args: &LineshapeArgs, config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let Coupled { coupling, config: settings } = coupling_from_files(args, config)?;
    let spectrum = lineshape(&coupling, &settings)?;
    let (offset, spacings) = peak_summary(&spectrum, &settings)?;
    write_text(&out.join("lineshape.csv"), &spectrum_csv(&spectrum))?;
    write_text(&out.join("lineshape_modes.csv"), &modes_csv(&coupling))?;
    let summary = json!({
        "total_hr": num(coupling.total_hr()),
        "dw_factor": num(debye_waller(&coupling)),
        "zpl_energy_meV": num(settings.zpl_energy),
        "first_peak_offset_meV": opt_num(offset),
        "peak_spacings_meV": spacings.iter().map(|&s| num(s)).collect::<Vec<_>>(),
        "n_modes": coupling.modes().len(),
        "excluded_modes": coupling.excluded_modes(),
    });
    write_json(&out.join("lineshape.json"), &summary)
}

pub fn partial_cmd(args: &PartialArgs, config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let cutoffs = config
        .list("cutoffs", args.cutoffs.as_deref())?
        .ok_or_else(|| CliError::usage("missing required setting cutoffs (flag --cutoffs or config key cutoffs)"))?;
    if cutoffs.is_empty() {
        return Err(CliError::usage("cutoffs list is empty"));
    }
    let Coupled { coupling, config: settings } = coupling_from_files(&args.common, config)?;
    let mut entries = Vec::with_capacity(cutoffs.len());
    for &cutoff in &cutoffs {
        let spectrum = partial_lineshape(&coupling, &settings, cutoff)?;
        let kept = coupling.truncated(cutoff);
        let (offset, spacings) = peak_summary(&spectrum, &settings)?;
        write_text(&out.join(format!("lineshape_cutoff{}.csv", fmt12(cutoff))), &spectrum_csv(&spectrum))?;
        entries.push(json!({
            "cutoff_meV": num(cutoff),
            "total_hr": num(kept.total_hr()),
            "dw_factor": num(debye_waller(&kept)),
            "first_peak_offset_meV": opt_num(offset),
            "peak_spacings_meV": spacings.iter().map(|&s| num(s)).collect::<Vec<_>>(),
        }));
    }
    let summary = json!({
        "zpl_energy_meV": num(settings.zpl_energy),
        "full_total_hr": num(coupling.total_hr()),
        "partials": entries,
    });
    write_json(&out.join("partial.json"), &summary)
}

pub fn fit_ifc(args: &FitIfcArgs, config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let structure_path: PathBuf = config.require("structure", args.structure.clone())?;
    let snapshots_path: PathBuf = config.require("snapshots", args.snapshots.clone())?;
    let cutoff: f64 = config.require("cutoff", args.cutoff)?;
    let ridge: f64 = config.get("ridge", args.ridge)?.unwrap_or(DEFAULT_RIDGE);
    let use_rfe = config.switch("rfe", args.rfe, true, false)?;

    let structure = formats::read_structure(&structure_path)?;
    let snapshots = formats::read_snapshots(&snapshots_path, structure.n_atoms())?;
    let features = build_features(&structure, cutoff)?;
    for (k, s) in snapshots.iter().enumerate() {
        let large = s.large_displacements(cutoff);
        if !large.is_empty() {
            eprintln!("warning: snapshot {k} has {} displacement(s) above cutoff/2", large.len());
        }
    }
    let report = if use_rfe {
        let defaults = RfeOptions::default();
        let options = RfeOptions {
            target_fraction: config.get("rfe_target", args.rfe_target)?.unwrap_or(defaults.target_fraction),
            tolerance: config.get("rfe_tolerance", args.rfe_tolerance)?.unwrap_or(defaults.tolerance),
            ridge,
        };
        ifcfit::rfe(&snapshots, &features, options)?
    } else {
        ifcfit::fit(&snapshots, &features, ridge)?
    };
    write_text(&out.join("fitted_fc.txt"), &formats::format_force_constants(&report.fc))?;
    let summary = json!({
        "rmse_validation_meV_per_A": num(report.rmse_validation),
        "rmse_training_meV_per_A": num(report.rmse_training),
        "holdout": report.holdout,
        "n_parameters_initial": report.n_parameters_initial,
        "n_parameters_final": report.n_parameters_final,
        "n_pairs_final": report.pairs.len(),
        "rank": report.rank,
        "cutoff_A": num(report.cutoff),
        "ridge": num(ridge),
        "rfe": use_rfe,
        "n_snapshots": snapshots.len(),
    });
    write_json(&out.join("fit_report.json"), &summary)
}

pub fn arrhenius(args: &ArrheniusArgs, config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let data: PathBuf = config.require("data", args.data.clone())?;
    let series = formats::read_thermal(&data)?;
    let guess = match (
        config.get::<f64>("guess_amplitude", args.guess_amplitude)?,
        config.get::<f64>("guess_c", args.guess_c)?,
        config.get::<f64>("guess_ea", args.guess_ea)?,
    ) {
        (Some(a), Some(c), Some(e)) => Some((a, c, e)),
        (None, None, None) => None,
        _ => return Err(CliError::usage("guess_amplitude, guess_c and guess_ea must be given together")),
    };
    let fit = thermal::fit(&series, guess)?;
    let summary = json!({
        "amplitude": num(fit.amplitude),
        "c": num(fit.c),
        "e_a_meV": num(fit.e_a),
        "sigma_amplitude": num(fit.sigma_amplitude()),
        "sigma_c": num(fit.sigma_c()),
        "sigma_e_a_meV": num(fit.sigma_e_a()),
        "rms_residual": num(fit.rms_residual),
        "n_points": series.points().len(),
        "label": series.label(),
    });
    write_json(&out.join("arrhenius.json"), &summary)
}

pub fn unfold(args: &UnfoldArgs, config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let fc_path: PathBuf = config.require("fc", args.fc.clone())?;
    let supercell_path: PathBuf = config.require("supercell", args.supercell.clone())?;
    let primitive_path: PathBuf = config.require("primitive", args.primitive.clone())?;
    let path_file: PathBuf = config.require("path", args.path.clone())?;

    let supercell = formats::read_structure(&supercell_path)?;
    let primitive = formats::read_lattice(&primitive_path)?;
    let path = formats::read_qpoints(&path_file)?;
    let mut fc = formats::read_force_constants(&fc_path, Some(supercell.n_atoms()))?;
    if config.switch("asr", args.no_asr, false, true)? {
        fc = enforce_asr(&fc);
    }
    let unfolded = unfold_force_constants(&fc, &supercell, &primitive, &path)?;
    let mut csv = String::from("path_index,qx,qy,qz,energy_meV,weight\n");
    for (i, (q, entries)) in unfolded.path.iter().zip(&unfolded.weights).enumerate() {
        for &(e, w) in entries {
            let _ = writeln!(csv, "{i},{},{},{},{},{}", fmt12(q.x), fmt12(q.y), fmt12(q.z), fmt12(e), fmt12(w));
        }
    }
    write_text(&out.join("unfold.csv"), &csv)
}
