use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use curvemrf::inference::{build_pairwise_model, build_restricted_lp, dynamic_range, infer_with, InferenceResult};
use curvemrf::io::{decode_ppm, encode_ppm, labeling_to_pgm, lower_bound_csv, min_marginal_map, ColorImage};
use curvemrf::learning::{evaluate_approximation, train_alg2, train_from_config, Alg2Config, TrainingConfig};
use curvemrf::pipeline::{fit_stroke_models, inpaint, segmentation_model};
use curvemrf::shapes::{boundary_count, sample_circle, sample_fourier, CurvatureSampling, ShapeSample};
use curvemrf::tasks::baseline::run_scenario;
use curvemrf::tasks::{SeedMask, SeedTag, StrokeScript};
use curvemrf::{default_big, BinaryLabeling, Dims, PatternBank};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::*;
use crate::error::{CliError, Result};

/// Recorded next to every run's outputs; `curvemrf rerun` replays it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    /// Library-level settings derived from the arguments.
    #[serde(default)]
    pub resolved: serde_json::Value,
}

impl Manifest {
    fn new(command: Command, resolved: serde_json::Value) -> Self {
        Self {
            tool: "curvemrf".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command,
            resolved,
        }
    }
}

/// Files of one run, written only once everything has succeeded.
struct Outputs {
    dir: PathBuf,
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(CliError::MissingOutputDir(dir.to_path_buf()));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn add(&mut self, name: impl AsRef<Path>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.as_ref().to_path_buf(), bytes.into()));
    }

    fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }

    fn commit(self) -> Result<()> {
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            }
            fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        }
        log::info!("wrote {} files to {}", self.files.len(), self.dir.display());
        Ok(())
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn load_bank(path: &Path) -> Result<PatternBank> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(PatternBank::from_json(&text)?)
}

pub fn check_size(dims: Dims, allow_large: bool) -> Result<()> {
    if !allow_large && (dims.width > MAX_SIDE || dims.height > MAX_SIDE) {
        return Err(CliError::Invalid(format!(
            "{}×{} exceeds {MAX_SIDE}×{MAX_SIDE}; pass --allow-large to run anyway",
            dims.width, dims.height
        )));
    }
    Ok(())
}

fn logging_progress(every: usize) -> impl FnMut(usize, f64) -> bool {
    move |pass, lb| {
        if pass % every == 0 {
            log::info!("pass {pass}: lower bound {lb:.6}");
        }
        true
    }
}

pub fn run(command: &Command) -> Result<()> {
    match command {
        Command::Train(a) => train(a),
        Command::EvalApprox(a) => eval_approx(a),
        Command::Inpaint(a) => cmd_inpaint(a),
        Command::Segment(a) => segment(a),
        Command::Baseline(a) => baseline(a),
        Command::Serve(a) => crate::serve::serve(a),
        Command::RasterizeStrokes(a) => rasterize_strokes(a),
        Command::Rerun(a) => rerun(a),
    }
}

pub fn training_config(a: &TrainArgs) -> Result<TrainingConfig> {
    let bins = a.curvature_bins;
    if bins == 0 {
        return Err(CliError::Invalid("--curvature-bins must be positive".into()));
    }
    let orientations = match (a.orientations, a.patterns) {
        (Some(o), Some(p)) if o * bins != p => {
            return Err(CliError::Invalid(format!(
                "--patterns {p} does not equal {o} orientations × {bins} curvature bins"
            )))
        }
        (Some(o), _) => o,
        (None, Some(p)) if p % bins != 0 => {
            return Err(CliError::Invalid(format!("--patterns {p} is not a multiple of {bins} curvature bins")))
        }
        (None, Some(p)) => p / bins,
        (None, None) => 8,
    };
    Ok(TrainingConfig {
        n_samples: a.samples,
        n_test_samples: a.test_samples.unwrap_or(a.samples),
        n_orientations: orientations,
        n_curvature_bins: bins,
        side: a.side,
        f_max: a.f_max,
        big: default_big(a.f_max),
        max_iterations: a.iterations,
        seed: a.seed,
        curvature_sampling: match a.curvature_exponent {
            Some(exponent) => CurvatureSampling::Power { exponent },
            None => CurvatureSampling::Uniform,
        },
    })
}

fn fourier_shapes(n: usize, size: usize, f_max: f64, seed: u64) -> Result<Vec<ShapeSample>> {
    let dims = Dims::new(size, size);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = (0..n).map(|_| sample_fourier(&mut rng, dims)).collect::<curvemrf::Result<Vec<_>>>()?;
    Ok(shapes
        .into_par_iter()
        .map(|s| ShapeSample::new(s, dims, f_max))
        .collect::<curvemrf::Result<_>>()?)
}

fn train(a: &TrainArgs) -> Result<()> {
    let mut out = Outputs::new(&a.out)?;
    let cfg = training_config(a)?;
    let (bank, trace) = train_from_config(&cfg)?;
    log::info!(
        "alg1: training error {:.6} -> {:.6}",
        trace.train[0],
        trace.train[trace.train.len() - 1]
    );
    out.add("trace.csv", trace.to_csv());
    let bank = match a.alg2_shapes {
        Some(n) => {
            let shapes = fourier_shapes(n, a.shape_size, cfg.f_max, cfg.seed.wrapping_add(0x5eed))?;
            let images: Vec<BinaryLabeling> = shapes.iter().map(|s| s.labeling().clone()).collect();
            let targets: Vec<f64> = shapes.iter().map(|s| s.true_total_cost).collect();
            let alg2 = Alg2Config {
                refit_weights: a.alg2_refit_weights,
                max_iterations: a.alg2_iterations,
            };
            let (refit, objective) = train_alg2(&images, &targets, &bank, alg2)?;
            let mut csv = String::from("iteration,objective\n");
            for (i, v) in objective.iter().enumerate() {
                writeln!(csv, "{i},{v}").unwrap();
            }
            out.add("alg2_trace.csv", csv);
            out.add("bank_alg1.json", bank.to_json()? + "\n");
            refit
        }
        None => bank,
    };
    out.add("bank.json", bank.to_json()? + "\n");
    out.add_json(
        "manifest.json",
        &Manifest::new(Command::Train(a.clone()), serde_json::to_value(&cfg)?),
    )?;
    out.commit()
}

fn eval_approx(a: &EvalArgs) -> Result<()> {
    let mut out = Outputs::new(&a.out)?;
    let bank = load_bank(&a.bank)?;
    let dims = Dims::new(a.size, a.size);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let shapes = (0..a.n)
        .map(|_| match a.shapes {
            ShapeClass::Circles => sample_circle(&mut rng, dims, a.r_min, a.r_max),
            ShapeClass::Fourier => sample_fourier(&mut rng, dims),
        })
        .collect::<curvemrf::Result<Vec<_>>>()?;
    let samples: Vec<ShapeSample> = shapes
        .into_par_iter()
        .map(|s| ShapeSample::new(s, dims, bank.f_max))
        .collect::<curvemrf::Result<_>>()?;
    let (rows, summary) = evaluate_approximation(&bank, &samples)?;
    let mut csv = String::from(
        "index,true_cost,true_length,model_cost,boundary_count,true_cost_per_length,model_cost_per_length\n",
    );
    for (i, r) in rows.iter().enumerate() {
        writeln!(
            csv,
            "{i},{},{},{},{},{},{}",
            r.true_cost,
            r.true_length,
            r.model_cost,
            r.boundary_count,
            r.true_cost / r.true_length,
            r.model_cost / r.true_length
        )
        .unwrap();
    }
    println!(
        "correlation {:.4}, mean signed relative error {:.4}, mean absolute relative error {:.4}",
        summary.correlation, summary.mean_signed_relative_error, summary.mean_absolute_relative_error
    );
    out.add("approx.csv", csv);
    out.add_json("summary.json", &summary)?;
    out.add_json("manifest.json", &Manifest::new(Command::EvalApprox(a.clone()), json!({})))?;
    out.commit()
}

fn result_json(result: &InferenceResult, x: &BinaryLabeling) -> serde_json::Value {
    json!({
        "energy": result.energy,
        "lower_bound": result.lower_bound,
        "passes": result.passes,
        "source": result.source,
        "lp_objective": result.lp_objective,
        "lp_skipped": result.lp_skipped,
        "boundary_count": boundary_count(x),
        "foreground_pixels": x.foreground_count(),
    })
}

fn add_lp_dump(out: &mut Outputs, name: &str, model: &curvemrf::EnergyModel, result: &InferenceResult, a: &InferenceArgs) {
    let pm = build_pairwise_model(model);
    let mm = &result.min_marginals;
    match build_restricted_lp(&pm, mm, a.relative_threshold * dynamic_range(mm)) {
        Ok(r) => out.add(name, r.lp.to_lp_format()),
        Err(e) => log::warn!("no LP dump: {e}"),
    }
}

fn cmd_inpaint(a: &InpaintArgs) -> Result<()> {
    let mut out = Outputs::new(&a.out)?;
    let bank = load_bank(&a.bank)?;
    let mask = SeedMask::from_pgm(&read(&a.mask)?)?;
    check_size(mask.dims(), a.inference.allow_large)?;
    let opts = a.inference.options();
    let (model, result) = inpaint(&bank, &mask, &opts, &mut logging_progress(50))?;
    let x = &result.labeling;
    let mut summary = result_json(&result, x);
    summary["constraints_satisfied"] = mask.is_satisfied_by(x).into();
    println!("energy {:.6}, lower bound {:.6}", result.energy, result.lower_bound);
    out.add("labeling.pgm", labeling_to_pgm(x));
    out.add("lower_bound.csv", lower_bound_csv(&result.lower_bound_trace));
    out.add("min_marginals.pgm", min_marginal_map(&result.min_marginals, model.dims()));
    out.add_json("result.json", &summary)?;
    if a.inference.dump_lp {
        add_lp_dump(&mut out, "restricted.lp", &model, &result, &a.inference);
    }
    out.add_json(
        "manifest.json",
        &Manifest::new(Command::Inpaint(a.clone()), serde_json::to_value(&opts)?),
    )?;
    out.commit()
}

/// Foreground tinted red at half opacity.
pub fn overlay(image: &ColorImage, x: &BinaryLabeling) -> Vec<u8> {
    let pixels = image
        .pixels
        .iter()
        .zip(x.labels())
        .map(|(p, &l)| if l == 1 { [0.5 * p[0] + 0.5, 0.5 * p[1], 0.5 * p[2]] } else { *p })
        .collect();
    encode_ppm(&ColorImage::new(image.dims, pixels).expect("same dimensions"))
}

fn segment(a: &SegmentArgs) -> Result<()> {
    let mut out = Outputs::new(&a.out)?;
    if a.lambda.is_empty() {
        return Err(CliError::Invalid("--lambda needs at least one value".into()));
    }
    let bank = load_bank(&a.bank)?;
    let image = decode_ppm(&read(&a.image)?)?;
    let seeds = SeedMask::from_pgm(&read(&a.strokes)?)?;
    check_size(image.dims, a.inference.allow_large)?;
    if seeds.dims() != image.dims {
        return Err(CliError::Invalid("strokes and image differ in size".into()));
    }
    let opts = a.inference.options();
    let (fg, bg) = fit_stroke_models(&image, &seeds, a.components, a.seed)?;
    let sweep = a.lambda.len() > 1;
    let mut csv = String::from("lambda,energy,lower_bound,boundary_count,non_increasing\n");
    let mut previous: Option<usize> = None;
    for (i, &lambda) in a.lambda.iter().enumerate() {
        let model = segmentation_model(&image, &seeds, &bank, &fg, &bg, lambda)?;
        let result = infer_with(&model, &opts, &mut logging_progress(50))?;
        let x = &result.labeling;
        let prefix = if sweep { PathBuf::from(format!("lambda_{i}")) } else { PathBuf::new() };
        let mut summary = result_json(&result, x);
        summary["lambda"] = lambda.into();
        summary["foreground_log_likelihood"] = fg.log_likelihood_trace.last().copied().into();
        summary["background_log_likelihood"] = bg.log_likelihood_trace.last().copied().into();
        let count = boundary_count(x);
        let monotone = previous.is_none_or(|p| count <= p);
        if !monotone {
            log::warn!("boundary count rose to {count} at λ = {lambda}");
        }
        previous = Some(count);
        writeln!(csv, "{lambda},{},{},{count},{monotone}", result.energy, result.lower_bound).unwrap();
        println!("λ {lambda}: energy {:.6}, boundary count {count}", result.energy);
        out.add(prefix.join("labeling.pgm"), labeling_to_pgm(x));
        out.add(prefix.join("overlay.ppm"), overlay(&image, x));
        out.add(prefix.join("lower_bound.csv"), lower_bound_csv(&result.lower_bound_trace));
        out.add(prefix.join("min_marginals.pgm"), min_marginal_map(&result.min_marginals, image.dims));
        let mut text = serde_json::to_string_pretty(&summary)?;
        text.push('\n');
        out.add(prefix.join("result.json"), text);
        if a.inference.dump_lp {
            add_lp_dump(&mut out, &prefix.join("restricted.lp").to_string_lossy(), &model, &result, &a.inference);
        }
    }
    if sweep {
        out.add("sweep.csv", csv);
    }
    out.add_json(
        "manifest.json",
        &Manifest::new(Command::Segment(a.clone()), serde_json::to_value(&opts)?),
    )?;
    out.commit()
}

fn baseline(a: &BaselineArgs) -> Result<()> {
    let mut out = Outputs::new(&a.out)?;
    let report = run_scenario(a.scenario.into())?;
    let mut csv = String::from("x,y\n");
    for (x, y) in &report.path {
        writeln!(csv, "{x},{y}").unwrap();
    }
    match report.staircase_cost {
        Some(s) => println!("cost {:.6}, staircase {s:.6}", report.cost),
        None => println!("cost {:.6}", report.cost),
    }
    out.add("path.csv", csv);
    out.add_json("report.json", &report)?;
    out.add_json("manifest.json", &Manifest::new(Command::Baseline(a.clone()), json!({})))?;
    out.commit()
}

fn rasterize_strokes(a: &StrokeArgs) -> Result<()> {
    let parent = match a.out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let file = a
        .out
        .file_name()
        .ok_or_else(|| CliError::Invalid("--out must name a file".into()))?;
    let mut out = Outputs::new(&parent)?;
    let text = fs::read_to_string(&a.script).map_err(|e| CliError::io(&a.script, e))?;
    let script: StrokeScript = serde_json::from_str(&text)?;
    let mask = script.rasterize()?;
    println!(
        "{} foreground, {} background, {} free",
        mask.count(SeedTag::Foreground),
        mask.count(SeedTag::Background),
        mask.count(SeedTag::Free)
    );
    out.add(file, mask.to_pgm());
    let mut manifest = file.to_os_string();
    manifest.push(".manifest.json");
    out.add_json(
        &manifest.to_string_lossy(),
        &Manifest::new(Command::RasterizeStrokes(a.clone()), json!({})),
    )?;
    out.commit()
}

fn rerun(a: &RerunArgs) -> Result<()> {
    let text = fs::read_to_string(&a.manifest).map_err(|e| CliError::io(&a.manifest, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let mut command = manifest.command;
    if let Some(dir) = &a.out {
        match &mut command {
            Command::Train(c) => c.out = dir.clone(),
            Command::EvalApprox(c) => c.out = dir.clone(),
            Command::Inpaint(c) => c.out = dir.clone(),
            Command::Segment(c) => c.out = dir.clone(),
            Command::Baseline(c) => c.out = dir.clone(),
            Command::RasterizeStrokes(c) => {
                c.out = dir.join(c.out.file_name().unwrap_or_default());
            }
            Command::Serve(_) | Command::Rerun(_) => {}
        }
    }
    if matches!(command, Command::Rerun(_)) {
        return Err(CliError::Invalid("a manifest cannot record a rerun".into()));
    }
    run(&command)
}
