use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use serde_json::{json, Value};
use utdv_core::eigen::{find_eigenfunction, EigenOptions};
use utdv_core::gaussian::{mean_entropy, WeightDistribution};
use utdv_core::io;
use utdv_core::kspace::{default_acs_fraction, generate_phantom, rss, SamplingMask};
use utdv_core::metrics::{report_csv, MetricReport};
use utdv_core::recon::{posterior_sample, reconstruct_tdv};
use utdv_core::regularizer::Registry;
use utdv_core::tdv::{init_params, SegmentKind};
use utdv_core::train::{log_csv, measure, Checkpoint, DeterministicTrainer, StepReport, StochasticTrainer};
use utdv_core::{ComplexField, Domain, Image};

use crate::config::RunConfig;
use crate::{CliError, CliResult, EigenArgs, EvalArgs, GenDataArgs, InspectCovArgs, MaskArgs, ReconstructArgs};
use crate::{TrainArgs, TrainBayesArgs, TrainCommon, UncertaintyArgs};

/// Display window for standard-deviation maps.
const STD_WINDOW: f64 = 0.02;

/// Stream of the seed reserved for parameter initialization; the trainers
/// use streams 0 and 1.
const INIT_STREAM: u64 = 2;

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn print_json(value: &impl Serialize) -> CliResult<()> {
    println!("{}", serde_json::to_string(value).map_err(utdv_core::Error::from)?);
    Ok(())
}

fn default_steps(desk: bool) -> usize {
    if desk {
        5
    } else {
        15
    }
}

/// Files in `dir` named `{prefix}*.{ext}`, sorted by name.
fn list_files(dir: &Path, prefix: &str, ext: &str) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with(prefix) && p.extension().is_some_and(|e| e == ext)
        })
        .collect();
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("out").to_string()
}

fn unit_window_pgm(path: &Path, x: &Image) -> CliResult<()> {
    let hi = x.max();
    io::write_pgm16(path, x, 0.0, if hi > 0.0 { hi } else { 1.0 })?;
    Ok(())
}

pub fn gen_data(a: &GenDataArgs) -> CliResult<()> {
    let (w, h) = (a.width.unwrap_or(a.size), a.height.unwrap_or(a.size));
    create_dir(&a.out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    for i in 0..a.count {
        let y = generate_phantom(w, h, a.coils, &mut rng)?;
        io::write_field(&a.out.join(format!("img_{i:04}.cfld")), &y)?;
        io::write_image(&a.out.join(format!("ref_{i:04}.rfld")), &rss(&y))?;
        if let Some(r) = a.acceleration {
            let acs = a.acs_fraction.unwrap_or_else(|| default_acs_fraction(r));
            let s = measure(y, r, acs, a.noise_sigma, &mut rng)?;
            io::write_field(&a.out.join(format!("z_{i:04}.cfld")), &s.z)?;
            io::write_mask(&a.out.join(format!("mask_{i:04}.json")), &s.mask)?;
        }
    }
    let manifest = json!({
        "count": a.count,
        "width": w,
        "height": h,
        "coils": a.coils,
        "seed": a.seed,
        "acceleration": a.acceleration,
        "acs_fraction": a.acs_fraction,
        "noise_sigma": a.noise_sigma,
    });
    io::write_json(&a.out.join("manifest.json"), &manifest)?;
    Ok(())
}

pub fn mask(a: &MaskArgs) -> CliResult<()> {
    let acs = a.acs_fraction.unwrap_or_else(|| default_acs_fraction(a.acceleration));
    let m = SamplingMask::generate(a.lines, a.acceleration, acs, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    io::write_mask(&a.out, &m)?;
    Ok(())
}

fn load_images(dir: &Path) -> CliResult<Vec<ComplexField>> {
    let files = list_files(dir, "img_", "cfld")?;
    if files.is_empty() {
        return Err(CliError::Usage(format!("no img_*.cfld files in {}", dir.display())));
    }
    files.iter().map(|f| Ok(io::read_field(f)?)).collect()
}

/// Merge the optional config file, presets and explicit flags.
fn resolve_run(c: &TrainCommon, desk: bool) -> CliResult<(RunConfig, Vec<ComplexField>)> {
    let file = c.config.as_deref().map(RunConfig::read).transpose()?;
    let data = c
        .data
        .clone()
        .or_else(|| file.as_ref().and_then(|f| f.data.clone()))
        .ok_or_else(|| CliError::Usage("--data (or 'data' in --config) is required".into()))?;
    let images = load_images(&data)?;
    let mut run = file.unwrap_or_else(|| RunConfig::defaults(desk, images[0].coils()));
    run.data = Some(data);
    if let Some(out) = &c.out {
        run.out = Some(out.clone());
    }
    if let Some(n) = c.iterations {
        run.train.total_iterations = n;
    }
    if let Some(s) = c.seed {
        run.seed = s;
    }
    if let Some(r) = c.acceleration {
        run.mask.acceleration = r;
    }
    if run.out.is_none() {
        return Err(CliError::Usage("--out (or 'out' in --config) is required".into()));
    }
    Ok((run, images))
}

fn write_run_config(run: &RunConfig) -> CliResult<()> {
    let out = run.out.as_ref().expect("resolved");
    io::write_json(&out.with_extension("run.json"), run)?;
    Ok(())
}

fn finish_log(c: &TrainCommon, log: &[StepReport]) -> CliResult<()> {
    if let Some(path) = &c.log {
        io::write_atomic(path, log_csv(log).as_bytes())?;
    }
    Ok(())
}

fn summary(log: &[StepReport], out: &Path) -> Value {
    json!({
        "iterations": log.last().map_or(0, |r| r.iteration + 1),
        "final_loss": log.last().map(|r| r.loss),
        "final_entropy": log.last().and_then(|r| r.entropy),
        "out": out,
    })
}

pub fn train(a: &TrainArgs, desk: bool) -> CliResult<()> {
    let c = &a.common;
    let (run, images) = resolve_run(c, desk)?;
    run.validate()?;
    let mut trainer = match &c.resume {
        Some(path) => DeterministicTrainer::resume(images, Checkpoint::read(path)?)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
            rng.set_stream(INIT_STREAM);
            let params = init_params(&run.net, &mut rng)?;
            DeterministicTrainer::new(images, params, run.resolved_train())?
        }
    };
    let every = c.checkpoint_every.max(1);
    let log = trainer.run(|t, r| {
        if let Some(path) = &c.checkpoint {
            if (r.iteration + 1) % every == 0 || t.is_done() {
                t.checkpoint().write(path)?;
            }
        }
        Ok(())
    })?;
    let out = run.out.clone().expect("resolved");
    io::write_params(&out, trainer.params())?;
    write_run_config(&run)?;
    finish_log(c, &log)?;
    print_json(&summary(&log, &out))
}

pub fn train_bayes(a: &TrainBayesArgs, desk: bool) -> CliResult<()> {
    let c = &a.common;
    let (mut run, images) = resolve_run(c, desk)?;
    if let Some(b) = a.beta {
        run.train.beta = b;
    }
    if let Some(al) = a.alpha {
        run.train.alpha = al;
    }
    if let Some(init) = &a.init {
        run.init = Some(init.clone());
    }
    run.validate()?;
    let mut trainer = match &c.resume {
        Some(path) => StochasticTrainer::resume(images, Checkpoint::read(path)?)?,
        None => {
            let mu = match &run.init {
                Some(path) => {
                    let p = io::read_params(path)?;
                    if p.config() != &run.net {
                        return Err(CliError::Schema(format!(
                            "initial model {} has a different architecture than the run configuration",
                            path.display()
                        )));
                    }
                    p
                }
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
                    rng.set_stream(INIT_STREAM);
                    init_params(&run.net, &mut rng)?
                }
            };
            StochasticTrainer::new(images, mu, run.resolved_train())?
        }
    };
    let every = c.checkpoint_every.max(1);
    let log = trainer.run(|t, r| {
        if let Some(path) = &c.checkpoint {
            if (r.iteration + 1) % every == 0 || t.is_done() {
                t.checkpoint().write(path)?;
            }
        }
        Ok(())
    })?;
    let out = run.out.clone().expect("resolved");
    io::write_distribution(&out, trainer.distribution())?;
    write_run_config(&run)?;
    finish_log(c, &log)?;
    print_json(&summary(&log, &out))
}

pub fn reconstruct(a: &ReconstructArgs, desk: bool) -> CliResult<()> {
    let params = io::read_params(&a.model)?;
    let z = io::read_field(&a.input)?;
    let m = io::read_mask(&a.mask)?;
    let x = reconstruct_tdv(&z, &m, &params, a.steps.unwrap_or(default_steps(desk)))?;
    io::write_field(&a.out, &x)?;
    let mag = rss(&x);
    if let Some(p) = &a.rss {
        io::write_image(p, &mag)?;
    }
    if let Some(p) = &a.pgm {
        unit_window_pgm(p, &mag)?;
    }
    Ok(())
}

struct Item {
    name: String,
    z: PathBuf,
    mask: PathBuf,
    reference: Option<PathBuf>,
}

fn uncertainty_items(a: &UncertaintyArgs) -> CliResult<Vec<Item>> {
    match (&a.data, &a.input, &a.mask) {
        (Some(dir), None, None) => {
            let zs = list_files(dir, "z_", "cfld")?;
            if zs.is_empty() {
                return Err(CliError::Usage(format!("no z_*.cfld files in {}", dir.display())));
            }
            Ok(zs
                .into_iter()
                .map(|z| {
                    let id = stem(&z).trim_start_matches("z_").to_string();
                    let reference = dir.join(format!("ref_{id}.rfld"));
                    Item {
                        name: stem(&z),
                        mask: dir.join(format!("mask_{id}.json")),
                        reference: reference.exists().then_some(reference),
                        z,
                    }
                })
                .collect())
        }
        (None, Some(z), Some(m)) => Ok(vec![Item {
            name: stem(z),
            z: z.clone(),
            mask: m.clone(),
            reference: a.reference.clone(),
        }]),
        _ => Err(CliError::Usage("give either --data, or --in together with --mask".into())),
    }
}

/// Mean k-space std over acquired and over non-acquired lines.
fn line_means(std: &Image, m: &SamplingMask) -> (f64, f64) {
    let w = std.width();
    let (mut acq, mut na, mut non, mut nn) = (0.0, 0usize, 0.0, 0usize);
    for (i, v) in std.data().iter().enumerate() {
        if m.is_acquired(i / w) {
            acq += v;
            na += 1;
        } else {
            non += v;
            nn += 1;
        }
    }
    let mean = |s: f64, n: usize| if n > 0 { s / n as f64 } else { f64::NAN };
    (mean(acq, na), mean(non, nn))
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn uncertainty(a: &UncertaintyArgs, desk: bool) -> CliResult<()> {
    let dist = io::read_distribution(&a.dist)?;
    let steps = a.steps.unwrap_or(default_steps(desk));
    let items = uncertainty_items(a)?;
    create_dir(&a.out_dir)?;
    let mut rows = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let z = io::read_field(&item.z)?;
        let m = io::read_mask(&item.mask)?;
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        rng.set_stream(i as u64);
        let stats = posterior_sample(&z, &m, &dist, steps, a.n, &mut rng)?;
        let base = a.out_dir.join(&item.name);
        let path = |suffix: &str| PathBuf::from(format!("{}_{suffix}", base.display()));
        io::write_image(&path("mean.rfld"), &stats.mean_rss)?;
        io::write_image(&path("std.rfld"), &stats.std_rss)?;
        io::write_image(&path("kspace_mean.rfld"), &stats.kspace.mean)?;
        io::write_image(&path("kspace_std.rfld"), &stats.kspace.std)?;
        unit_window_pgm(&path("mean.pgm"), &stats.mean_rss)?;
        io::write_pgm16(&path("std.pgm"), &stats.std_rss, 0.0, STD_WINDOW)?;
        let (acq, non) = line_means(&stats.kspace.std, &m);
        let metrics = match &item.reference {
            Some(r) => {
                let reference = io::read_image(r)?;
                json!({
                    "mean": MetricReport::compute(&stats.mean_rss, &reference)?,
                    "single_sample": MetricReport::compute(&stats.samples[0], &reference)?,
                })
            }
            None => Value::Null,
        };
        rows.push(json!({
            "name": item.name,
            "metrics": metrics,
            "mean_std": stats.std_rss.mean(),
            "kspace_std_acquired": finite_or_null(acq),
            "kspace_std_unacquired": finite_or_null(non),
        }));
    }
    let summary = json!({
        "n": a.n,
        "steps": steps,
        "seed": a.seed,
        "entropy": mean_entropy(&dist),
        "images": rows,
    });
    io::write_json(&a.out_dir.join("summary.json"), &summary)?;
    print_json(&summary)
}

fn random_field(a: &EigenArgs) -> ComplexField {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let n = a.width * a.height * a.coils;
    let data = (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            num_complex::Complex64::new(re, im)
        })
        .collect();
    ComplexField::from_vec(a.width, a.height, a.coils, Domain::Image, data).expect("extent matches")
}

pub fn eigen(a: &EigenArgs) -> CliResult<()> {
    let registry = Registry::default();
    let options: Value = match &a.model {
        Some(path) => {
            if a.regularizer != "tdv" {
                return Err(CliError::Usage("--model only applies to the tdv regularizer".into()));
            }
            json!({ "path": path })
        }
        None => serde_json::from_str(&a.options).map_err(|e| CliError::Schema(format!("--options: {e}")))?,
    };
    let reg = registry.build(&a.regularizer, &options)?;
    let v0 = match &a.init {
        Some(p) => io::read_field(p)?,
        None => random_field(a),
    };
    let opts = EigenOptions {
        max_iters: a.max_iters,
        tol: a.tol,
        step: a.step,
    };
    let r = find_eigenfunction(&v0, reg.as_ref(), opts)?;
    create_dir(&a.out_dir)?;
    io::write_field(&a.out_dir.join("v.cfld"), &r.v)?;
    let mag = rss(&r.v);
    io::write_image(&a.out_dir.join("v.rfld"), &mag)?;
    unit_window_pgm(&a.out_dir.join("v.pgm"), &mag)?;
    let result = json!({
        "regularizer": a.regularizer,
        "lambda": r.lambda,
        "residual": r.residual,
        "iterations": r.iterations,
    });
    io::write_json(&a.out_dir.join("result.json"), &result)?;
    print_json(&result)
}

/// RFLD as is, CFLD reduced by root-sum-of-squares.
fn read_magnitude(path: &Path) -> CliResult<Image> {
    let head = fs::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if head.starts_with(io::FIELD_MAGIC) {
        Ok(rss(&io::decode_field(&head)?))
    } else {
        Ok(io::read_image(path)?)
    }
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    let pred = read_magnitude(&a.pred)?;
    let reference = read_magnitude(&a.reference)?;
    let report = MetricReport::compute(&pred, &reference)?;
    if let Some(p) = &a.csv {
        io::write_atomic(p, report_csv(&[(stem(&a.pred), report)]).as_bytes())?;
    }
    print_json(&report)
}

fn segment_label(kind: SegmentKind) -> String {
    match kind {
        SegmentKind::K1 { macroblock, block } => format!("k1_m{macroblock}_b{block}"),
        SegmentKind::K2 { macroblock, block } => format!("k2_m{macroblock}_b{block}"),
        other => format!("{other:?}").to_lowercase(),
    }
}

pub fn inspect_cov(a: &InspectCovArgs) -> CliResult<()> {
    let dist: WeightDistribution = io::read_distribution(&a.dist)?;
    let mut csv = String::from("segment,row,col,value\n");
    let covs = dist.segment_covariances();
    for (kind, c) in &covs {
        let label = segment_label(*kind);
        for i in 0..c.nrows() {
            for j in 0..c.ncols() {
                csv.push_str(&format!("{label},{i},{j},{}\n", c[(i, j)]));
            }
        }
    }
    io::write_atomic(&a.out, csv.as_bytes())?;
    print_json(&json!({
        "segments": covs.len(),
        "entropy": mean_entropy(&dist),
        "alpha": dist.alpha(),
    }))
}
