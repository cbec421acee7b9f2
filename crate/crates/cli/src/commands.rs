//! Subcommand implementations.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use pztrigger_core::camera::{
    CameraGeometry, CherenkovImage, DEFAULT_BOUNDARY_THR, DEFAULT_CORE_THR, DEFAULT_PITCH,
    DEFAULT_RINGS, ParticleClass, build_geometry, clean_image, generate_event, hillas,
    map_to_unit_disk, read_events_jsonl, read_geometry_json, write_events_jsonl,
    write_geometry_json,
};
use pztrigger_core::fixedpoint::{
    agreement_report, export_trigger, fx_pipeline, quantize_pixels, write_agreement_csv,
};
use pztrigger_core::fixedpoint::trigger::{read_trigger_binary, write_trigger_binary};
use pztrigger_core::modelsel::{GridSpec, evaluate, fit_normalized, grid_search, write_grid_csv};
use pztrigger_core::pzernike::{
    DEFAULT_N_MAX, FeatureRow, FeatureTable, build_basis_table, feature_vector, moments,
    read_features_csv, reconstruct, write_basis_binary, write_features_csv,
};
use pztrigger_core::rng::SplitMix64;
use pztrigger_core::svm::{LabeledDataset, SmoParams, SvmModel};

use crate::config::{FileConfig, base_profile};
use crate::{CameraArgs, CleaningArgs, CliError, Command};

/// Fixed default seed used by every command unless overridden.
const DEFAULT_SEED: u64 = 42;

type CmdResult = Result<(), CliError>;

pub fn run(command: Command, config: &FileConfig) -> CmdResult {
    match command {
        Command::Gen {
            camera,
            gammas,
            hadrons,
            seed,
            out,
            write_geometry,
        } => cmd_gen(config, &camera, gammas, hadrons, seed, &out, write_geometry.as_deref()),
        Command::Extract {
            camera,
            cleaning,
            events,
            n_max,
            out,
            basis_out,
        } => cmd_extract(config, &camera, &cleaning, &events, n_max, &out, basis_out.as_deref()),
        Command::Hillas {
            camera,
            cleaning,
            events,
            out,
        } => cmd_hillas(config, &camera, &cleaning, &events, &out),
        Command::Train {
            features,
            c,
            gamma,
            tol,
            max_passes,
            seed,
            out,
        } => cmd_train(config, &features, c, gamma, tol, max_passes, seed, &out),
        Command::Gridsearch {
            features,
            grid_out,
            model_out,
            log2c_min,
            log2c_max,
            log2c_step,
            log2g_min,
            log2g_max,
            log2g_step,
            fine_radius,
            fine_step,
            folds,
            fraction,
            seed,
        } => {
            let mut spec = GridSpec::default();
            if let Some(grid) = &config.grid {
                grid.apply(&mut spec);
            }
            let overrides = [
                (log2c_min, &mut spec.log2c_range.0),
                (log2c_max, &mut spec.log2c_range.1),
                (log2c_step, &mut spec.log2c_step),
                (log2g_min, &mut spec.log2gamma_range.0),
                (log2g_max, &mut spec.log2gamma_range.1),
                (log2g_step, &mut spec.log2gamma_step),
                (fine_radius, &mut spec.fine_radius),
                (fine_step, &mut spec.fine_step),
            ];
            for (value, slot) in overrides {
                if let Some(v) = value {
                    *slot = v;
                }
            }
            if let Some(v) = folds {
                spec.folds = v;
            }
            if let Some(v) = fraction {
                spec.fraction = v;
            }
            spec.seed = seed.or(config.seed).unwrap_or(spec.seed);
            cmd_gridsearch(&features, &grid_out, model_out.as_deref(), &spec)
        }
        Command::Predict {
            model,
            features,
            out,
        } => cmd_predict(&model, &features, &out),
        Command::Evaluate {
            model,
            features,
            out,
        } => cmd_evaluate(&model, &features, out.as_deref()),
        Command::FxpExport {
            camera,
            model,
            n_max,
            profile,
            dual_format,
            basis_format,
            out,
        } => cmd_fxp_export(
            config,
            &camera,
            &model,
            n_max,
            &profile,
            dual_format.as_deref(),
            basis_format.as_deref(),
            &out,
        ),
        Command::FxpRun {
            camera,
            cleaning,
            trigger,
            model,
            events,
            n_max,
            out,
            gate,
            agreement_min,
            deviation_max,
            deviation_window,
        } => cmd_fxp_run(
            config,
            &camera,
            &cleaning,
            &trigger,
            &model,
            &events,
            n_max,
            &out,
            gate,
            agreement_min,
            deviation_max,
            deviation_window,
        ),
        Command::Bench {
            camera,
            count,
            n_max,
            seed,
        } => cmd_bench(config, &camera, count, n_max, seed),
        Command::Reconstruct {
            camera,
            cleaning,
            events,
            event_index,
            n_max,
            out,
        } => cmd_reconstruct(config, &camera, &cleaning, &events, event_index, n_max, &out),
    }
}

// ---------------------------------------------------------------------------
// Shared resolution helpers
// ---------------------------------------------------------------------------

fn require_exists(path: &Path) -> Result<(), CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!(
            "input path {} does not exist",
            path.display()
        )));
    }
    Ok(())
}

fn resolve_geometry(config: &FileConfig, args: &CameraArgs) -> Result<CameraGeometry, CliError> {
    if let Some(path) = &args.geometry {
        if args.rings.is_some() || args.pitch.is_some() {
            return Err(CliError::Usage(
                "--geometry conflicts with --rings/--pitch".into(),
            ));
        }
        require_exists(path)?;
        let file = File::open(path)?;
        return Ok(read_geometry_json(BufReader::new(file))?);
    }
    let rings = args.rings.or(config.rings).unwrap_or(DEFAULT_RINGS);
    let pitch = args.pitch.or(config.pixel_pitch).unwrap_or(DEFAULT_PITCH);
    Ok(build_geometry(rings, pitch)?)
}

fn resolve_cleaning(config: &FileConfig, args: &CleaningArgs) -> (f64, f64) {
    (
        args.core_thr.or(config.core_thr).unwrap_or(DEFAULT_CORE_THR),
        args.boundary_thr
            .or(config.boundary_thr)
            .unwrap_or(DEFAULT_BOUNDARY_THR),
    )
}

fn resolve_n_max(config: &FileConfig, flag: Option<u32>) -> u32 {
    flag.or(config.n_max).unwrap_or(DEFAULT_N_MAX)
}

fn resolve_seed(config: &FileConfig, flag: Option<u64>) -> u64 {
    flag.or(config.seed).unwrap_or(DEFAULT_SEED)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn read_events(path: &Path) -> Result<Vec<CherenkovImage>, CliError> {
    require_exists(path)?;
    let file = File::open(path)?;
    Ok(read_events_jsonl(BufReader::new(file))?)
}

fn read_features(path: &Path) -> Result<FeatureTable, CliError> {
    require_exists(path)?;
    let file = File::open(path)?;
    Ok(read_features_csv(BufReader::new(file))?)
}

fn read_model(path: &Path) -> Result<SvmModel, CliError> {
    require_exists(path)?;
    let file = File::open(path)?;
    Ok(SvmModel::read_json(BufReader::new(file))?)
}

fn labeled_dataset(table: &FeatureTable) -> Result<LabeledDataset, CliError> {
    let rows = table.labeled();
    if rows.is_empty() {
        return Err(CliError::Usage(
            "features file contains no labeled rows".into(),
        ));
    }
    Ok(LabeledDataset::from_rows(&rows)?)
}

fn clean_all(
    events: &[CherenkovImage],
    geometry: &CameraGeometry,
    core: f64,
    boundary: f64,
) -> Result<Vec<CherenkovImage>, CliError> {
    events
        .iter()
        .map(|ev| clean_image(ev, geometry, core, boundary).map_err(CliError::from))
        .collect()
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    config: &FileConfig,
    camera: &CameraArgs,
    gammas: u64,
    hadrons: u64,
    seed: Option<u64>,
    out: &Path,
    write_geometry: Option<&Path>,
) -> CmdResult {
    let geometry = resolve_geometry(config, camera)?;
    let params = config.generator.clone().unwrap_or_default();
    params.validate()?;
    let master = resolve_seed(config, seed);

    let mut stream = SplitMix64::new(master);
    let mut events = Vec::with_capacity((gammas + hadrons) as usize);
    for (count, class) in [(gammas, ParticleClass::Gamma), (hadrons, ParticleClass::Hadron)] {
        for _ in 0..count {
            let event_seed = stream.next_u64();
            let mut ev = generate_event(class, &params, &geometry, event_seed)?;
            ev.event_id = events.len() as u64;
            events.push(ev);
        }
    }

    let mut w = create(out)?;
    write_events_jsonl(&events, &mut w)?;
    w.flush()?;
    if let Some(path) = write_geometry {
        let mut w = create(path)?;
        write_geometry_json(&geometry, &mut w)?;
        w.flush()?;
    }
    println!(
        "wrote {} events ({gammas} gamma / {hadrons} hadron) to {}",
        events.len(),
        out.display()
    );
    Ok(())
}

fn cmd_extract(
    config: &FileConfig,
    camera: &CameraArgs,
    cleaning: &CleaningArgs,
    events_path: &Path,
    n_max: Option<u32>,
    out: &Path,
    basis_out: Option<&Path>,
) -> CmdResult {
    let geometry = resolve_geometry(config, camera)?;
    let (core, boundary) = resolve_cleaning(config, cleaning);
    let n_max = resolve_n_max(config, n_max);
    let events = read_events(events_path)?;

    let mapping = map_to_unit_disk(&geometry);
    let table = build_basis_table(&mapping, n_max)?;

    let mut rows = Vec::with_capacity(events.len());
    for ev in &events {
        let cleaned = clean_image(ev, &geometry, core, boundary)?;
        let features = feature_vector(&moments(&cleaned, &table)?);
        rows.push(FeatureRow {
            event_id: ev.event_id,
            label: ev.label,
            features,
        });
    }

    let mut w = create(out)?;
    write_features_csv(&rows, table.n_pairs(), &mut w)?;
    w.flush()?;
    if let Some(path) = basis_out {
        let mut w = create(path)?;
        write_basis_binary(&table, &mut w)?;
        w.flush()?;
    }
    println!(
        "extracted {} feature rows ({} features each) to {}",
        rows.len(),
        table.n_pairs(),
        out.display()
    );
    Ok(())
}

fn cmd_hillas(
    config: &FileConfig,
    camera: &CameraArgs,
    cleaning: &CleaningArgs,
    events_path: &Path,
    out: &Path,
) -> CmdResult {
    let geometry = resolve_geometry(config, camera)?;
    let (core, boundary) = resolve_cleaning(config, cleaning);
    let events = read_events(events_path)?;

    let mut w = create(out)?;
    w.write_all(b"event_id,label,size,cog_x,cog_y,length,width,dist,alpha_deg\n")?;
    let mut skipped = 0usize;
    for ev in &events {
        let cleaned = clean_image(ev, &geometry, core, boundary)?;
        if cleaned.total_intensity() <= 0.0 {
            skipped += 1;
            continue;
        }
        let h = hillas(&cleaned, &geometry)?;
        let label = ev.label.map_or("", |c| c.name());
        w.write_all(
            format!(
                "{},{label},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                ev.event_id, h.size, h.cog[0], h.cog[1], h.length, h.width, h.dist, h.alpha_deg
            )
            .as_bytes(),
        )?;
    }
    w.flush()?;
    if skipped > 0 {
        eprintln!("skipped {skipped} events with no pixels after cleaning");
    }
    println!("wrote Hillas parameters to {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    config: &FileConfig,
    features: &Path,
    c: f64,
    gamma: f64,
    tol: f64,
    max_passes: u32,
    seed: Option<u64>,
    out: &Path,
) -> CmdResult {
    let table = read_features(features)?;
    let data = labeled_dataset(&table)?;
    let params = SmoParams {
        c,
        gamma,
        tol,
        max_passes,
        seed: resolve_seed(config, seed),
    };
    let model = fit_normalized(&data, &params)?;
    if !model.converged {
        eprintln!("warning: training did not converge within the sweep budget");
    }
    let mut w = create(out)?;
    model.write_json(&mut w)?;
    w.flush()?;
    println!(
        "trained on {} rows: {} support vectors, bias {:.6}, converged: {} -> {}",
        data.len(),
        model.n_support_vectors(),
        model.bias,
        model.converged,
        out.display()
    );
    Ok(())
}

fn cmd_gridsearch(
    features: &Path,
    grid_out: &Path,
    model_out: Option<&Path>,
    spec: &GridSpec,
) -> CmdResult {
    let table = read_features(features)?;
    let data = labeled_dataset(&table)?;
    let result = grid_search(&data, spec)?;

    let mut w = create(grid_out)?;
    write_grid_csv(&result.cells, &mut w)?;
    w.flush()?;
    let best = result
        .cells
        .iter()
        .find(|cell| cell.log2c == result.best_log2c && cell.log2gamma == result.best_log2gamma)
        .expect("best cell is in the grid");
    println!(
        "best cell: log2C={} log2gamma={} (C={:.6}, gamma={:.6}), CV accuracy {:.4}",
        result.best_log2c,
        result.best_log2gamma,
        result.best_c(),
        result.best_gamma(),
        best.cv_accuracy
    );

    if let Some(path) = model_out {
        let params = SmoParams {
            c: result.best_c(),
            gamma: result.best_gamma(),
            seed: spec.seed,
            ..SmoParams::new(1.0, 1.0)
        };
        let model = fit_normalized(&data, &params)?;
        let mut w = create(path)?;
        model.write_json(&mut w)?;
        w.flush()?;
        println!(
            "trained at the best cell on all {} rows -> {}",
            data.len(),
            path.display()
        );
    }
    Ok(())
}

fn cmd_predict(model_path: &Path, features: &Path, out: &Path) -> CmdResult {
    let model = read_model(model_path)?;
    let table = read_features(features)?;
    let mut w = create(out)?;
    w.write_all(b"event_id,label,decision\n")?;
    for row in &table.rows {
        let decision = model.decision_value_raw(&row.features)?;
        let label = if decision >= 0.0 {
            ParticleClass::Gamma
        } else {
            ParticleClass::Hadron
        };
        w.write_all(format!("{},{},{decision:.16e}\n", row.event_id, label.name()).as_bytes())?;
    }
    w.flush()?;
    println!("wrote {} predictions to {}", table.rows.len(), out.display());
    Ok(())
}

fn cmd_evaluate(model_path: &Path, features: &Path, out: Option<&Path>) -> CmdResult {
    let model = read_model(model_path)?;
    let table = read_features(features)?;
    let data = labeled_dataset(&table)?;
    let metrics = evaluate(&model, &data)?;
    print!("{}", metrics.table());
    if let Some(path) = out {
        let mut w = create(path)?;
        metrics.write_json(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_fxp_export(
    config: &FileConfig,
    camera: &CameraArgs,
    model_path: &Path,
    n_max: Option<u32>,
    profile_name: &str,
    dual_format: Option<&str>,
    basis_format: Option<&str>,
    out: &Path,
) -> CmdResult {
    let model = read_model(model_path)?;
    let geometry = resolve_geometry(config, camera)?;
    let n_max = resolve_n_max(config, n_max);
    let table = build_basis_table(&map_to_unit_disk(&geometry), n_max)?;

    let mut profile = base_profile(profile_name)?;
    if let Some(export) = &config.export {
        if let Some(name) = &export.profile {
            profile = base_profile(name)?;
        }
        export.apply(&mut profile)?;
    }
    if let Some(text) = dual_format {
        profile.dual_coeffs = pztrigger_core::fixedpoint::QFormat::parse(text)?;
    }
    if let Some(text) = basis_format {
        profile.basis = pztrigger_core::fixedpoint::QFormat::parse(text)?;
    }

    let (trigger, report) = export_trigger(&model, &table, &profile)?;
    let mut w = create(out)?;
    write_trigger_binary(&trigger, &mut w)?;
    w.flush()?;
    println!(
        "exported trigger: {} pixels x {} features, {} support vectors -> {}",
        trigger.n_pixels(),
        trigger.n_features(),
        trigger.n_support_vectors(),
        out.display()
    );
    for (table_name, max_err, saturations) in &report.tables {
        println!("  {table_name}: max quantization error {max_err:.3e}, saturations {saturations}");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_fxp_run(
    config: &FileConfig,
    camera: &CameraArgs,
    cleaning: &CleaningArgs,
    trigger_path: &Path,
    model_path: &Path,
    events_path: &Path,
    n_max: Option<u32>,
    out: &Path,
    gate: bool,
    agreement_min: f64,
    deviation_max: f64,
    deviation_window: f64,
) -> CmdResult {
    require_exists(trigger_path)?;
    let trigger = read_trigger_binary(BufReader::new(File::open(trigger_path)?))?;
    let model = read_model(model_path)?;
    let geometry = resolve_geometry(config, camera)?;
    let (core, boundary) = resolve_cleaning(config, cleaning);
    let n_max = resolve_n_max(config, n_max);
    let table = build_basis_table(&map_to_unit_disk(&geometry), n_max)?;
    let events = read_events(events_path)?;
    let cleaned = clean_all(&events, &geometry, core, boundary)?;

    let report = agreement_report(&model, &table, &trigger, &cleaned)?;
    let mut w = create(out)?;
    write_agreement_csv(&report, &mut w)?;
    w.flush()?;

    println!(
        "events {}, label agreement {:.4}, max |dev| {:.3e} (budget {:.3e}), mean |dev| {:.3e}, saturated {}",
        report.rows.len(),
        report.agreement(),
        report.max_abs_err,
        report.error_budget,
        report.mean_abs_err,
        report.saturated_events
    );

    if gate {
        if report.agreement() < agreement_min {
            return Err(CliError::Gate(format!(
                "label agreement {:.4} below {agreement_min}",
                report.agreement()
            )));
        }
        let worst_in_window = report
            .rows
            .iter()
            .filter(|r| r.float_decision.abs() <= deviation_window)
            .fold(0.0f64, |m, r| m.max(r.abs_err));
        if worst_in_window > deviation_max {
            return Err(CliError::Gate(format!(
                "deviation {worst_in_window:.3e} exceeds {deviation_max} inside |decision| <= {deviation_window}"
            )));
        }
        println!("gate passed");
    }
    Ok(())
}

fn cmd_bench(
    config: &FileConfig,
    camera: &CameraArgs,
    count: usize,
    n_max: Option<u32>,
    seed: Option<u64>,
) -> CmdResult {
    let geometry = resolve_geometry(config, camera)?;
    let n_max = resolve_n_max(config, n_max);
    let seed = resolve_seed(config, seed);
    let params = config.generator.clone().unwrap_or_default();
    let table = build_basis_table(&map_to_unit_disk(&geometry), n_max)?;

    // Self-contained setup: a small trained model, then `count` fresh events.
    let mut stream = SplitMix64::new(seed);
    let train_n = 200usize;
    let mut rows = Vec::with_capacity(train_n);
    let mut labels = Vec::with_capacity(train_n);
    for i in 0..train_n {
        let class = if i % 2 == 0 {
            ParticleClass::Gamma
        } else {
            ParticleClass::Hadron
        };
        let ev = generate_event(class, &params, &geometry, stream.next_u64())?;
        let cleaned = clean_image(&ev, &geometry, DEFAULT_CORE_THR, DEFAULT_BOUNDARY_THR)?;
        rows.push(feature_vector(&moments(&cleaned, &table)?));
        labels.push(class.sign());
    }
    let model = fit_normalized(
        &LabeledDataset::new(rows, labels)?,
        &SmoParams { seed, ..SmoParams::new(8.0, 0.5) },
    )?;
    let (trigger, _) = export_trigger(&model, &table, &base_profile("standard")?)?;

    let mut events = Vec::with_capacity(count);
    for i in 0..count {
        let class = if i % 2 == 0 {
            ParticleClass::Gamma
        } else {
            ParticleClass::Hadron
        };
        let ev = generate_event(class, &params, &geometry, stream.next_u64())?;
        events.push(clean_image(&ev, &geometry, DEFAULT_CORE_THR, DEFAULT_BOUNDARY_THR)?);
    }
    let quantized: Vec<Vec<i64>> = events.iter().map(|e| quantize_pixels(&e.pixels).0).collect();

    let timeit = |mut f: Box<dyn FnMut(usize)>| -> Vec<u64> {
        let mut laps = Vec::with_capacity(events.len());
        for i in 0..events.len() {
            let t = Instant::now();
            f(i);
            laps.push(t.elapsed().as_nanos() as u64);
        }
        laps.sort_unstable();
        laps
    };

    let mut float_acc = 0.0f64;
    let float_laps = timeit(Box::new(|i| {
        let f = feature_vector(&moments(&events[i], &table).unwrap());
        float_acc += model.decision_value_raw(&f).unwrap();
    }));
    let mut fx_acc = 0i64;
    let fx_laps = timeit(Box::new(|i| {
        fx_acc = fx_acc.wrapping_add(fx_pipeline(&trigger, &quantized[i]).unwrap().decision_raw);
    }));
    std::hint::black_box((float_acc, fx_acc));

    let summary = |name: &str, laps: &[u64]| {
        let total: u64 = laps.iter().sum();
        let events_per_s = laps.len() as f64 / (total as f64 * 1e-9);
        let p50 = laps[laps.len() / 2] as f64 / 1000.0;
        let p99 = laps[(laps.len() * 99) / 100] as f64 / 1000.0;
        println!("{name}: {events_per_s:.0} events/s, p50 {p50:.1} us, p99 {p99:.1} us");
    };
    println!("benchmark over {} events ({} pixels, {} features, {} support vectors):",
        events.len(), geometry.n_pixels(), table.n_pairs(), model.n_support_vectors());
    summary("float pipeline", &float_laps);
    summary("fixed pipeline", &fx_laps);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_reconstruct(
    config: &FileConfig,
    camera: &CameraArgs,
    cleaning: &CleaningArgs,
    events_path: &Path,
    event_index: usize,
    n_max: Option<u32>,
    out: &Path,
) -> CmdResult {
    let geometry = resolve_geometry(config, camera)?;
    let (core, boundary) = resolve_cleaning(config, cleaning);
    let n_max = resolve_n_max(config, n_max);
    let events = read_events(events_path)?;
    let Some(event) = events.get(event_index) else {
        return Err(CliError::Usage(format!(
            "event index {event_index} out of range ({} events)",
            events.len()
        )));
    };
    let cleaned = clean_image(event, &geometry, core, boundary)?;
    let mapping = map_to_unit_disk(&geometry);
    let table = build_basis_table(&mapping, n_max)?;
    let ms = moments(&cleaned, &table)?;
    let recon = reconstruct(&ms, &mapping, n_max)?;

    let mut w = create(out)?;
    w.write_all(b"pixel,x,y,cleaned,reconstructed\n")?;
    for (p, (pos, value)) in geometry.positions().iter().zip(&recon).enumerate() {
        w.write_all(
            format!(
                "{p},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                pos[0], pos[1], cleaned.pixels[p], value
            )
            .as_bytes(),
        )?;
    }
    w.flush()?;

    let norm: f64 = cleaned.pixels.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        let err: f64 = cleaned
            .pixels
            .iter()
            .zip(&recon)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            / norm;
        println!(
            "event {} reconstructed at order {n_max}: relative L2 error {err:.4} -> {}",
            event.event_id,
            out.display()
        );
    } else {
        println!("event {} is empty after cleaning -> {}", event.event_id, out.display());
    }
    Ok(())
}

