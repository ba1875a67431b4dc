use std::fs;
use std::path::{Path, PathBuf};

use pitomo_core::datastore::{
    assess_quality, assess_samples, read_cmatrix, read_dataset, split, write_cmatrix, write_dataset, Dataset,
};
use pitomo_core::geometry::{build_cmatrix, load_chords, two_camera_chords, ContributionMatrix};
use pitomo_core::network::{load_checkpoint, save_checkpoint, Model, ModelSpec};
use pitomo_core::phantom::{generate_samples, samples_to_dataset};
use pitomo_core::trainer::{
    evaluate, predict_dataset, table_csv, train_from, EvalReport, TrainConfig, TrainState,
};
use serde::Serialize;

use crate::config::*;
use crate::error::{CliError, CliResult};

pub struct Globals {
    pub out: PathBuf,
    pub seed: Option<u64>,
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::config(e.to_string()))?;
    text.push('\n');
    write(path, text)
}

fn require_exists(path: &Path, what: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::config(format!("{what} not found: {}", path.display())))
    }
}

pub fn gen_cmatrix(config: &Path, g: &Globals) -> CliResult<()> {
    let (cfg, base): (GenCmatrixConfig, _) = load(config)?;
    cfg.grid.validate()?;
    let chords = match (&cfg.chords_file, cfg.two_camera) {
        (Some(file), None) => {
            let file = resolve(&base, file);
            require_exists(&file, "chords file")?;
            load_chords(&file).map_err(|e| match e {
                pitomo_core::Error::Io { .. } => CliError::io(&file, e),
                other => CliError::config(format!("{}: {other}", file.display())),
            })?
        }
        (None, Some(count)) => two_camera_chords(&cfg.grid, count),
        _ => return Err(CliError::config("exactly one of chords_file and two_camera is required")),
    };
    if cfg.subrays == 0 {
        return Err(CliError::config("subrays must be at least 1"));
    }
    let c = build_cmatrix(&cfg.grid, &chords, cfg.subrays)?;
    create_dir(&g.out)?;
    write_cmatrix(&c, Some(&cfg.grid), Some(cfg.subrays), &g.out)?;

    let sums = c.row_sums();
    let min = sums.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = sums.iter().cloned().fold(0.0, f64::max);
    println!(
        "cmatrix ({}, {}, {}) written to {}",
        c.n(),
        c.numz(),
        c.numr(),
        g.out.display()
    );
    println!("row sums: min {min:.6e} max {max:.6e} mean {:.6e}", sums.iter().sum::<f64>() / sums.len() as f64);
    let zero = c.zero_rows();
    if !zero.is_empty() {
        eprintln!("warning: {} chord(s) miss the grid: {zero:?}", zero.len());
    }
    Ok(())
}

pub fn gen_phantom(config: &Path, g: &Globals) -> CliResult<()> {
    let (cfg, base): (GenPhantomConfig, _) = load(config)?;
    let (c, manifest) = read_cmatrix(resolve(&base, &cfg.cmatrix))?;
    let grid = cfg
        .grid
        .or(manifest.grid)
        .ok_or_else(|| CliError::config("grid missing from both config and cmatrix manifest"))?;
    let base_seed = g.seed.unwrap_or(cfg.base_seed);
    let samples = generate_samples(&grid, &c, &cfg.rule, &cfg.noise, cfg.count, base_seed)?;
    let in_memory = assess_samples(&samples, &c)?;
    let dataset = samples_to_dataset(&samples, &grid, &cfg.rule, &cfg.noise, base_seed)?;
    let stored = assess_quality(&dataset, &c)?;
    create_dir(&g.out)?;
    write_dataset(&dataset, &g.out)?;
    println!("{} samples written to {}", dataset.m(), g.out.display());
    println!("eps_bar {:.6e} (f64) {:.6e} (stored f32)", in_memory.eps_bar, stored.eps_bar);
    println!("content hash {}", dataset.content_hash());
    Ok(())
}

#[derive(Serialize)]
struct AssessOutput {
    m: usize,
    eps_bar: f64,
    worst_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_sample_eps: Option<Vec<f64>>,
}

pub fn assess(config: &Path, per_sample: bool, g: &Globals) -> CliResult<()> {
    let (cfg, base): (AssessConfig, _) = load(config)?;
    let dataset = read_dataset(resolve(&base, &cfg.dataset))?;
    let (c, _) = read_cmatrix(resolve(&base, &cfg.cmatrix))?;
    let report = assess_quality(&dataset, &c)?;
    let out = AssessOutput {
        m: dataset.m(),
        eps_bar: report.eps_bar,
        worst_index: report.worst_index,
        per_sample_eps: (cfg.per_sample || per_sample).then_some(report.per_sample_eps),
    };
    create_dir(&g.out)?;
    write_json(&g.out.join("quality.json"), &out)?;
    println!("eps_bar {:.6e} worst sample {}", out.eps_bar, out.worst_index);
    Ok(())
}

fn load_split(base: &Path, dataset: &Path, cmatrix: &Path, s: SplitConfig) -> CliResult<([Dataset; 3], ContributionMatrix)> {
    let d = read_dataset(resolve(base, dataset))?;
    let (c, _) = read_cmatrix(resolve(base, cmatrix))?;
    d.check_cmatrix(&c)?;
    let (tr, va, te) = split(&d, s.ratios, s.seed)?;
    Ok(([tr, va, te], c))
}

fn write_history(run: &Path, state: &TrainState) -> CliResult<()> {
    write(&run.join("history.jsonl"), state.history.to_jsonl()?)
}

pub fn train(config: &Path, resume: bool, g: &Globals) -> CliResult<()> {
    let (mut cfg, base): (TrainRunConfig, _) = load(config)?;
    if let Some(seed) = g.seed {
        cfg.train.seed = seed;
    }
    cfg.train.validate()?;
    if cfg.name.is_empty() || cfg.name.contains(['/', '\\']) {
        return Err(CliError::config(format!("invalid run name {:?}", cfg.name)));
    }
    let ([tr, va, _], c) = load_split(&base, &cfg.dataset, &cfg.cmatrix, cfg.split)?;
    let m = cfg.model;
    let spec = ModelSpec {
        backbone: m.backbone,
        use_pi: m.use_pi,
        final_activation: m.final_activation,
        n: tr.n(),
        numz: tr.numz(),
        numr: tr.numr(),
        input_repr: m.input_repr,
        batch_norm: m.batch_norm,
    };
    let run = g.out.join("runs").join(&cfg.name);
    let state_path = run.join("state.ckpt");
    let best_path = run.join("best.ckpt");

    let mut state = if resume {
        let (state, stored): (TrainState, TrainConfig) = TrainState::load(&state_path)?;
        if stored != cfg.train {
            return Err(CliError::config("train config differs from the one stored in the run"));
        }
        if *state.model.spec() != spec {
            return Err(CliError::config("model spec differs from the one stored in the run"));
        }
        log::info!("resuming {} at epoch {}", cfg.name, state.next_epoch);
        state
    } else {
        TrainState::new(Model::new(spec, cfg.train.seed)?, &cfg.train)
    };
    create_dir(&run)?;
    write_json(&run.join("config.json"), &cfg)?;

    let tc = cfg.train.clone();
    let result = train_from(&mut state, &tr, &va, &c, &tc, |s| {
        let last = s.history.epochs.last().map(|r| r.epoch);
        if s.history.best_epoch.is_some() && s.history.best_epoch == last {
            save_checkpoint(&s.model, &best_path, &[], serde_json::to_value(s.history.epochs.last())?)?;
        }
        s.save(&tc, &state_path)?;
        if let Err(e) = write_history(&run, s) {
            log::warn!("{e}");
        }
        Ok(())
    });
    write_history(&run, &state)?;
    result?;

    // the state now holds the restored best weights
    let best = state.history.best_epoch.and_then(|e| state.history.epochs.iter().find(|r| r.epoch == e));
    let meta = serde_json::to_value(best).map_err(|e| CliError::config(e.to_string()))?;
    save_checkpoint(&state.model, &best_path, &[], meta)?;
    if let Some(b) = best {
        println!(
            "{}: best epoch {} valid loss {:.6e} (E1 {:.4e}, E2 {:.4e}); stopped: {:?}",
            cfg.name,
            b.epoch,
            b.valid_loss,
            b.e1_valid,
            b.e2_valid,
            state.history.stop_reason
        );
    }
    println!("checkpoint {}", best_path.display());
    Ok(())
}

pub fn eval(config: &Path, samples: Option<usize>, g: &Globals) -> CliResult<()> {
    let (cfg, base): (EvalConfig, _) = load(config)?;
    if cfg.models.is_empty() {
        return Err(CliError::config("no models to evaluate"));
    }
    let test = match cfg.part {
        Part::All => {
            let d = read_dataset(resolve(&base, &cfg.dataset))?;
            let (c, _) = read_cmatrix(resolve(&base, &cfg.cmatrix))?;
            d.check_cmatrix(&c)?;
            (d, c)
        }
        part => {
            let ([tr, va, te], c) = load_split(&base, &cfg.dataset, &cfg.cmatrix, cfg.split)?;
            let d = match part {
                Part::Train => tr,
                Part::Valid => va,
                _ => te,
            };
            (d, c)
        }
    };
    let (test, c) = test;
    let dumps = samples.unwrap_or(cfg.samples);

    create_dir(&g.out)?;
    let mut reports: Vec<EvalReport> = Vec::new();
    for entry in &cfg.models {
        let path = resolve(&base, &entry.checkpoint);
        let model = load_checkpoint(&path)?.model;
        let mut report = evaluate(&model, &test, &c, dumps, &cfg.dataset_name)?;
        if let Some(label) = &entry.label {
            report.model = label.clone();
        }
        let preds = predict_dataset(&model, &test, &c)?;
        let pred_dir = g.out.join("predictions");
        create_dir(&pred_dir)?;
        let bytes: Vec<u8> = preds.iter().flat_map(|v| v.to_le_bytes()).collect();
        write(&pred_dir.join(format!("{}.f32", report.model)), bytes)?;

        if !report.samples.is_empty() {
            let dir = g.out.join("samples").join(&report.model);
            create_dir(&dir)?;
            for s in &report.samples {
                write_json(&dir.join(format!("sample_{:05}.json", s.index)), s)?;
            }
        }
        println!("{}: E1 {:.4e} E2 {:.4e}", report.model, report.e1, report.e2);
        reports.push(report);
    }
    let table = table_csv(&reports);
    for r in &mut reports {
        r.samples.clear();
    }
    write_json(&g.out.join("report.json"), &reports)?;
    write(&g.out.join("tables.csv"), table)?;
    Ok(())
}

#[derive(Serialize)]
struct BackprojectOutput {
    m: usize,
    n: usize,
    values: Vec<Vec<f64>>,
}

pub fn backproject(config: &Path, g: &Globals) -> CliResult<()> {
    let (cfg, base): (BackprojectConfig, _) = load(config)?;
    let (c, _) = read_cmatrix(resolve(&base, &cfg.cmatrix))?;
    let path = resolve(&base, &cfg.predictions);
    let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
    let stride = 4 * c.cells();
    if bytes.is_empty() || bytes.len() % stride != 0 {
        return Err(CliError::config(format!(
            "{}: {} bytes is not a whole number of {}-cell fields",
            path.display(),
            bytes.len(),
            c.cells()
        )));
    }
    let values = bytes
        .chunks(stride)
        .map(|field| {
            let field: Vec<f64> = field
                .chunks_exact(4)
                .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
                .collect();
            c.forward_project(&field)
        })
        .collect::<pitomo_core::Result<Vec<_>>>()?;
    let out = BackprojectOutput { m: values.len(), n: c.n(), values };
    create_dir(&g.out)?;
    write_json(&g.out.join("backprojection.json"), &out)?;
    println!("{} back-projections of length {} written", out.m, out.n);
    Ok(())
}
