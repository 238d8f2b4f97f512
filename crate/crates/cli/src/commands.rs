use std::fs;
use std::path::Path;

use funcmed::config::{parse_model_config, ModelConfig};
use funcmed::funcdata::{build_grid, FunctionalSample, TimeGrid};
use funcmed::inference::{
    bootstrap_effects, cross_validate_mediation, select_delta, BandMethod, BootstrapBands, Contrast, DeltaGrids,
    EffectBands,
};
use funcmed::mediation::{effect_curves, fit_mediation, FittedMediation, MediationSpec};
use funcmed::quadrature::Window;
use funcmed::regression::CoefficientEstimate;
use funcmed::simulate::{canonical_hrf, gen_dataset_with, DesignParams, SimTruth, TruthKind};
use serde::Serialize;

use crate::args::*;
use crate::failure::Failure;
use crate::output::OutputDir;

type Res<T> = Result<T, Failure>;

fn read_input(path: &Path) -> Res<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Failure::usage(format!("input file not found: {}", path.display())),
        _ => Failure::io(path, e),
    })
}

fn load_sample(path: &Path) -> Res<FunctionalSample> {
    let bytes = read_input(path)?;
    FunctionalSample::read_csv_bytes(&bytes).map_err(|e| Failure::core(&path.display().to_string(), e))
}

fn load_config(path: &Path) -> Res<ModelConfig> {
    let bytes = read_input(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Failure::usage(format!("{}: not UTF-8", path.display())))?;
    parse_model_config(&text).map_err(|e| Failure::core(&path.display().to_string(), e))
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Res<T> {
    let bytes = read_input(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

struct Data {
    z: FunctionalSample,
    m: FunctionalSample,
    y: FunctionalSample,
    config: ModelConfig,
    spec: MediationSpec,
}

fn load_data(args: &DataArgs) -> Res<Data> {
    let config = load_config(&args.config)?;
    let z = load_sample(&args.z)?;
    let m = load_sample(&args.m)?;
    let y = load_sample(&args.y)?;
    let spec = config
        .to_spec(z.grid().domain_length())
        .map_err(|e| Failure::core(&args.config.display().to_string(), e))?;
    Ok(Data { z, m, y, config, spec })
}

fn core<T>(context: &str, r: funcmed::Result<T>) -> Res<T> {
    r.map_err(|e| Failure::core(context, e))
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Res<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Failure::internal(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.into_inner().map_err(|e| Failure::internal(e.to_string()))
}

fn sample_bytes(s: &FunctionalSample) -> Res<Vec<u8>> {
    let mut buf = Vec::new();
    core("writing curves", s.write_csv(&mut buf))?;
    Ok(buf)
}

/// Curve: `t,value`. Surface: `s,t,value,extrapolated` over the full grid,
/// flagging points outside the influence band.
fn coefficient_csv(est: &CoefficientEstimate, grid: &TimeGrid) -> Res<Vec<u8>> {
    let times = grid.times();
    match est {
        CoefficientEstimate::Curve { .. } => {
            let rows = times
                .iter()
                .map(|&t| {
                    core("evaluating curve", est.eval(funcmed::regression::EvalPoint::At(t))).map(|(v, _)| (t, v))
                })
                .collect::<Res<Vec<_>>>()?;
            csv_bytes(
                &["t", "value"],
                rows.into_iter().map(|(t, v)| vec![t.to_string(), v.to_string()]),
            )
        }
        CoefficientEstimate::Surface { window, .. } => {
            let funcmed::regression::GridCoefficient::Surface { values, .. } =
                core("evaluating surface", est.on_grid(grid))?
            else {
                unreachable!("surface estimates sample to surfaces")
            };
            let n = times.len();
            let rows = (0..n).flat_map(|j| (0..n).map(move |k| (j, k))).map(|(j, k)| {
                let (s, t) = (times[j], times[k]);
                vec![
                    s.to_string(),
                    t.to_string(),
                    values[(j, k)].to_string(),
                    u8::from(!window.contains(s, t)).to_string(),
                ]
            });
            csv_bytes(&["s", "t", "value", "extrapolated"], rows)
        }
    }
}

fn write_coefficients(out: &mut OutputDir, fit: &FittedMediation) -> Res<()> {
    for (name, est) in [("alpha", fit.alpha()), ("gamma", fit.gamma()), ("beta", fit.beta())] {
        out.write(&format!("coefficients/{name}.csv"), &coefficient_csv(est, &fit.grid)?)?;
    }
    Ok(())
}

fn unit_effects_csv(fit: &FittedMediation) -> Res<Vec<u8>> {
    let n = fit.grid.n_points();
    let e = core("effects", effect_curves(fit, &vec![1.0; n], &vec![0.0; n]))?;
    let mut buf = Vec::new();
    core("writing effects", e.write_csv(&mut buf))?;
    Ok(buf)
}

fn band_bytes(b: &EffectBands) -> Res<Vec<u8>> {
    let mut buf = Vec::new();
    core("writing bands", b.write_csv(&mut buf))?;
    Ok(buf)
}

/// `bands.csv` for a single contrast, otherwise one file per subject.
fn write_bands(out: &mut OutputDir, bands: &BootstrapBands) -> Res<()> {
    if let [only] = bands.bands.as_slice() {
        if only.label == "contrast" {
            return out.write("bands.csv", &band_bytes(only)?);
        }
    }
    let width = bands.bands.len().to_string().len();
    for (i, b) in bands.bands.iter().enumerate() {
        out.write_labeled(
            &format!("bands/subject_{i:0width$}.csv"),
            &band_bytes(b)?,
            Some(b.label.clone()),
        )?;
    }
    Ok(())
}

fn parse_windows(flag: &str, items: &[String]) -> Res<Vec<Window>> {
    items
        .iter()
        .map(|s| {
            s.parse::<Window>()
                .map_err(|e| Failure::usage(format!("--{flag}: {e}")))
        })
        .collect()
}

fn check_aligned(fit: &FittedMediation, z: &FunctionalSample, path: &Path) -> Res<()> {
    if *z.grid() != fit.grid {
        return Err(Failure::usage(format!(
            "{}: time grid ({} points, dt {}) differs from the fit's ({} points, dt {})",
            path.display(),
            z.grid().n_points(),
            z.grid().dt(),
            fit.grid.n_points(),
            fit.grid.dt()
        )));
    }
    Ok(())
}

// --- commands -----------------------------------------------------------------

#[derive(Serialize)]
struct TruthRecord {
    #[serde(flatten)]
    kind: TruthKind,
    seed: u64,
    n_subjects: usize,
    n_time: usize,
    tr: f64,
    noise_sd: f64,
    iti: f64,
    p_case: f64,
}

pub fn simulate(a: &SimulateArgs) -> Res<()> {
    let grid = core("grid", build_grid(a.n_time, a.tr))?;
    let domain = grid.domain_length();
    let truth = match (a.model, &a.delta) {
        (SimModel::Concurrent, None) => SimTruth::concurrent(domain, a.noise_sd),
        (SimModel::Concurrent, Some(_)) => return Err(Failure::usage("--delta applies to the historical model only")),
        (SimModel::Historical, None) => return Err(Failure::usage("--model historical requires --delta")),
        (SimModel::Historical, Some(d)) => {
            let w: Window = d.parse().map_err(|e| Failure::usage(format!("--delta: {e}")))?;
            if w.is_degenerate() {
                return Err(Failure::usage("--delta must be positive for the historical model"));
            }
            SimTruth::historical(domain, w, a.noise_sd)
        }
    };
    if !(a.p_case >= 0.0 && a.p_case <= 1.0) {
        return Err(Failure::usage(format!("--p-case must lie in [0, 1], got {}", a.p_case)));
    }
    if !(a.iti > 0.0 && a.iti.is_finite()) {
        return Err(Failure::usage(format!("--iti must be positive, got {}", a.iti)));
    }
    let params = DesignParams {
        iti: a.iti,
        p_case: a.p_case,
        hrf: core("hrf", canonical_hrf(0.1))?,
    };
    let ds = core("simulation", gen_dataset_with(&truth, a.n, &grid, &params, a.seed))?;

    let mut out = OutputDir::create(&a.out)?;
    out.write("z.csv", &sample_bytes(&ds.z)?)?;
    out.write("m.csv", &sample_bytes(&ds.m)?)?;
    out.write("y.csv", &sample_bytes(&ds.y)?)?;
    out.write_json(
        "truth.json",
        &TruthRecord {
            kind: truth.kind.clone(),
            seed: a.seed,
            n_subjects: a.n,
            n_time: a.n_time,
            tr: a.tr,
            noise_sd: a.noise_sd,
            iti: a.iti,
            p_case: a.p_case,
        },
    )?;
    let ids = ds.z.ids();
    let rows = ds.designs.iter().enumerate().flat_map(|(i, d)| {
        d.onsets
            .iter()
            .zip(&d.conditions)
            .map(move |(o, c)| vec![ids[i].clone(), o.to_string(), c.to_string()])
    });
    out.write("design.csv", &csv_bytes(&["subject", "onset", "condition"], rows)?)?;
    finish(out, "simulate", Some(a.seed), &a.out)
}

pub fn fit(a: &FitArgs) -> Res<()> {
    let d = load_data(&a.data)?;
    let fitted = core("fit", fit_mediation(&d.z, &d.m, &d.y, &d.spec))?;
    log::info!(
        "{} fit; conditioning {:.3e} (mediator), {:.3e} (outcome)",
        d.spec.combo(),
        fitted.mediator_fit.diagnostics.condition_estimate,
        fitted.outcome_fit.diagnostics.condition_estimate
    );
    let mut out = OutputDir::create(&a.out)?;
    out.write_json("fit.json", &fitted)?;
    write_coefficients(&mut out, &fitted)?;
    finish(out, "fit", None, &a.out)
}

pub fn effects(a: &EffectsArgs) -> Res<()> {
    let fitted: FittedMediation = load_json(&a.fit)?;
    let mut out = OutputDir::create(&a.out)?;
    if a.per_subject {
        let zp = a.z.as_ref().expect("clap enforces --z with --per-subject");
        let z = load_sample(zp)?;
        check_aligned(&fitted, &z, zp)?;
        let (de, ie) = core("effects", fitted.paths().and_then(|p| p.per_subject(&z)))?;
        let times = fitted.grid.times();
        let rows = z.ids().iter().enumerate().flat_map(|(i, id)| {
            let (de, ie, times) = (&de, &ie, &times);
            (0..times.len()).map(move |k| {
                vec![
                    id.clone(),
                    times[k].to_string(),
                    de.values()[(i, k)].to_string(),
                    ie.values()[(i, k)].to_string(),
                ]
            })
        });
        out.write(
            "effects_per_subject.csv",
            &csv_bytes(&["subject", "t", "de", "ie"], rows)?,
        )?;
    } else {
        out.write("effects.csv", &unit_effects_csv(&fitted)?)?;
    }
    finish(out, "effects", None, &a.out)
}

pub fn bootstrap(a: &BootstrapArgs) -> Res<()> {
    let d = load_data(&a.data)?;
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(Failure::usage(format!("--level must lie in (0, 1), got {}", a.level)));
    }
    let n = d.z.grid().n_points();
    let contrast = if a.per_subject {
        Contrast::PerSubject
    } else {
        Contrast::Pair {
            z: vec![1.0; n],
            z_prime: vec![0.0; n],
        }
    };
    let method = match a.method {
        Method::Percentile => BandMethod::Percentile,
        Method::BiasCorrected => BandMethod::BiasCorrected,
    };
    let fitted = core("fit", fit_mediation(&d.z, &d.m, &d.y, &d.spec))?;
    let bands = core(
        "bootstrap",
        bootstrap_effects(&d.z, &d.m, &d.y, &d.spec, &contrast, a.b, a.level, method, a.seed),
    )?;
    let mut out = OutputDir::create(&a.out)?;
    out.write_json("fit.json", &fitted)?;
    out.write_json("bootstrap.json", &bands)?;
    write_bands(&mut out, &bands)?;
    finish(out, "bootstrap", Some(a.seed), &a.out)
}

pub fn cv(a: &CvArgs) -> Res<()> {
    let d = load_data(&a.data)?;
    let result = core(
        "cross-validation",
        cross_validate_mediation(&d.z, &d.m, &d.y, &d.spec, a.grid.as_deref(), a.folds, a.seed),
    )?;
    log::info!(
        "selected mediator {:?}, outcome {:?}",
        result.mediator.selected_lambdas,
        result.outcome.selected_lambdas
    );
    let mut out = OutputDir::create(&a.out)?;
    out.write_json("cv.json", &result)?;
    out.write_json("tuned_config.json", &d.config.with_lambdas_of(&result.spec))?;
    finish(out, "cv", Some(a.seed), &a.out)
}

pub fn select_delta_cmd(a: &SelectDeltaArgs) -> Res<()> {
    let d = load_data(&a.data)?;
    let shared = a.grid.as_ref().map(|g| parse_windows("grid", g)).transpose()?;
    let pick = |flag: &str, own: &Option<Vec<String>>| -> Res<Vec<Window>> {
        match own {
            Some(g) => parse_windows(flag, g),
            None => Ok(shared
                .clone()
                .expect("clap requires --grid when a per-path grid is missing")),
        }
    };
    let grids = DeltaGrids {
        mz: pick("grid-mz", &a.grid_mz)?,
        yz: pick("grid-yz", &a.grid_yz)?,
        ym: pick("grid-ym", &a.grid_ym)?,
    };
    let sel = core(
        "window selection",
        select_delta(&d.z, &d.m, &d.y, &d.spec, &grids, a.folds, a.seed),
    )?;
    log::info!(
        "selected windows: MZ {}, YZ {}, YM {}",
        sel.selected_mz,
        sel.selected_yz,
        sel.selected_ym
    );
    let mut table = Vec::new();
    core("writing table", sel.write_csv(&mut table))?;
    let mut out = OutputDir::create(&a.out)?;
    out.write("delta_selection.csv", &table)?;
    out.write_json("delta_selection.json", &sel)?;
    finish(out, "select-delta", Some(a.seed), &a.out)
}

pub fn report(a: &ReportArgs) -> Res<()> {
    let fitted: FittedMediation = load_json(&a.fit)?;
    let boot: Option<BootstrapBands> = a.bootstrap.as_deref().map(load_json).transpose()?;
    let mut out = OutputDir::create(&a.out)?;
    write_coefficients(&mut out, &fitted)?;
    out.write("effects.csv", &unit_effects_csv(&fitted)?)?;
    if let Some(b) = &boot {
        write_bands(&mut out, b)?;
    }
    finish(out, "report", boot.map(|b| b.seed), &a.out)
}

fn finish(out: OutputDir, command: &str, seed: Option<u64>, dir: &Path) -> Res<()> {
    let n = out.finish(command, seed)?;
    println!("{command}: wrote {n} files and manifest.json to {}", dir.display());
    Ok(())
}
