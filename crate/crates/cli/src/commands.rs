use std::fs;
use std::io::BufReader;
use std::path::Path;

use contour_refine::contour::sketch_to_mask;
use contour_refine::metrics::{compare_meshes, MetricConfig, MetricRow};
use contour_refine::refine::{optimize, StepRecord, StopReason};
use contour_refine::shape::BuiltinSpec;
use contour_refine::synth::{generate_dataset, manifest_path, read_manifest, sample_codes, DatasetConfig};
use contour_refine::{
    initialize_code, BinaryImage, Camera, CameraSpec, Error, LatentCode, Mesh, Objective, RefinementConfig,
    RefinementTrace, TemplateMesh,
};
use rayon::prelude::*;

use crate::{
    EditArgs, EvalArgs, Failure, ObjectiveKind, Outcome, ReconstructArgs, SynthArgs, TemplateArgs, TemplateSource,
};

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn context<'a>(what: &'static str, path: &'a Path) -> impl FnOnce(Error) -> Failure + 'a {
    move |e| match Failure::from(e) {
        Failure::Input(m) => Failure::Input(format!("{what} {}: {m}", path.display())),
        other => other,
    }
}

fn load_template(src: &TemplateSource) -> Result<TemplateMesh, Failure> {
    match &src.template {
        Some(dir) => TemplateMesh::load_dir(dir).map_err(context("template", dir)),
        None => Ok(TemplateMesh::builtin()),
    }
}

fn load_camera(path: &Path) -> Result<Camera, Failure> {
    CameraSpec::load(path).map_err(context("camera", path))
}

fn load_image(path: &Path) -> Result<BinaryImage, Failure> {
    BinaryImage::load(path).map_err(context("image", path))
}

fn check_size(image: &BinaryImage, camera: &Camera) -> Outcome {
    if (image.width(), image.height()) != (camera.width(), camera.height()) {
        return Err(Failure::Input(format!(
            "image is {}x{} but the camera renders {}x{}",
            image.width(),
            image.height(),
            camera.width(),
            camera.height()
        )));
    }
    Ok(())
}

/// Trace of a run that keeps its start: the start's evaluation only.
fn start_only(objective: &Objective, template: &TemplateMesh, camera: &Camera, code: &LatentCode) -> Result<RefinementTrace, Failure> {
    let e = objective.evaluate(template, camera, code)?;
    Ok(RefinementTrace {
        records: vec![StepRecord {
            step: 0,
            terms: e.terms,
            grad_norm: e.grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
            code: None,
        }],
        best_step: 0,
        stop: StopReason::Completed,
    })
}

fn refine(
    start: &LatentCode,
    objective: &Objective,
    template: &TemplateMesh,
    camera: &Camera,
    config: &RefinementConfig,
) -> Result<(LatentCode, RefinementTrace), Failure> {
    if config.steps == 0 {
        return Ok((start.clone(), start_only(objective, template, camera, start)?));
    }
    Ok(optimize(start, objective, template, camera, config)?)
}

/// Writes the result files only once everything has been computed.
fn write_result(out: &Path, template: &TemplateMesh, code: &LatentCode, trace: &RefinementTrace) -> Outcome {
    let mesh = template.decode(code)?;
    let csv = trace.to_csv()?;
    fs::create_dir_all(out)?;
    fs::write(out.join("mesh.obj"), mesh.to_obj_string())?;
    code.save(out.join("code.bin"))?;
    fs::write(out.join("trace.csv"), csv)?;
    println!(
        "loss {:.6} -> {:.6} at step {} ({:?}); wrote {}",
        trace.initial_loss(),
        trace.best_loss(),
        trace.best_step,
        trace.stop,
        out.display()
    );
    Ok(())
}

pub fn synth(a: SynthArgs) -> Outcome {
    let template = load_template(&a.template)?;
    let shapes = if a.codes.is_empty() {
        sample_codes(&template, a.shapes, a.seed)
    } else {
        a.codes
            .iter()
            .map(|p| {
                let code = LatentCode::load(p).map_err(context("code", p))?;
                template.check_code(&code).map_err(context("code", p))?;
                Ok(code)
            })
            .collect::<Result<_, Failure>>()?
    };
    if a.views == 0 || a.resolution == 0 {
        return Err(Failure::Input("views and resolution must be positive".into()));
    }
    let config = DatasetConfig {
        views_per_shape: a.views,
        seed: a.seed,
        width: a.resolution,
        height: a.resolution,
        ..Default::default()
    };
    let records = generate_dataset(&template, &shapes, &config, &a.out)?;
    println!("{} samples in {}", records.len(), a.out.join("manifest.jsonl").display());
    Ok(())
}

pub fn reconstruct(a: ReconstructArgs) -> Outcome {
    let template = load_template(&a.template)?;
    let camera = load_camera(&a.camera)?;
    let sketch = load_image(&a.sketch)?;
    check_size(&sketch, &camera)?;
    if sketch.stroke_count() == 0 {
        return Err(Error::EmptySketch.into());
    }
    let config = RefinementConfig {
        steps: a.steps.steps,
        step_size: a.steps.step_size,
        ..Default::default()
    };
    if config.steps > 0 {
        config.validate()?;
    }
    let start = initialize_code(&sketch, &camera, &template, a.starts, a.seed)?;
    let objective = match a.objective {
        ObjectiveKind::Chamfer => Objective::chamfer_from_sketch(&sketch)?,
        ObjectiveKind::Silhouette => match sketch_to_mask(&sketch) {
            Ok(mask) => Objective::silhouette(mask)?,
            Err(e @ Error::OpenContour(_)) => {
                eprintln!("warning: {e}; falling back to the chamfer objective");
                Objective::chamfer_from_sketch(&sketch)?
            }
            Err(e) => return Err(e.into()),
        },
    };
    let (code, trace) = refine(&start, &objective, &template, &camera, &config)?;
    write_result(&a.out, &template, &code, &trace)
}

pub fn edit(a: EditArgs) -> Outcome {
    let template = load_template(&a.template)?;
    let camera = load_camera(&a.camera)?;
    let code0 = LatentCode::load(&a.code).map_err(context("code", &a.code))?;
    template.check_code(&code0)?;
    let stroke = load_image(&a.stroke)?;
    check_size(&stroke, &camera)?;
    let config = RefinementConfig {
        steps: a.steps.steps,
        step_size: a.steps.step_size,
        t: a.t,
        lambda_mask: a.lambda_mask,
        lambda_normal: a.lambda_normal,
        ..Default::default()
    };
    if config.steps > 0 {
        config.validate()?;
    }
    let objective = Objective::partial_edit(&template, &camera, &code0, &stroke, &config)?;
    let (code, trace) = refine(&code0, &objective, &template, &camera, &config)?;
    write_result(&a.out, &template, &code, &trace)
}

fn read_mesh(path: &Path) -> Result<Mesh, Error> {
    Mesh::read_obj(BufReader::new(fs::File::open(path)?))
}

pub fn eval(a: EvalArgs) -> Outcome {
    let template = load_template(&a.template)?;
    let records = read_manifest(&a.manifest).map_err(context("manifest", &a.manifest))?;
    if a.samples == 0 || a.resolution == Some(0) {
        return Err(Failure::Input("samples and resolution must be positive".into()));
    }
    let config = MetricConfig {
        samples: a.samples,
        seed: a.seed,
    };
    let rows: Vec<MetricRow> = records
        .par_iter()
        .map(|r| {
            let flagged = |status: String| MetricRow {
                sample: r.sample,
                cd_l2_e3: None,
                nc_e2: None,
                status,
            };
            let pred_path = a.predictions.join(format!("{:05}.obj", r.sample));
            if !pred_path.exists() {
                return flagged("missing prediction".into());
            }
            let truth = LatentCode::load(manifest_path(&a.manifest, &r.code)).and_then(|c| template.decode(&c));
            let camera = r.camera.to_camera().and_then(|c| match a.resolution {
                Some(s) => c.with_size(s, s),
                None => Ok(c),
            });
            match (read_mesh(&pred_path), truth, camera) {
                (Ok(pred), Ok(truth), Ok(camera)) => compare_meshes(r.sample, &pred, &truth, &camera, &config),
                (Err(e), _, _) => flagged(format!("prediction: {e}")),
                (_, Err(e), _) => flagged(format!("ground truth: {e}")),
                (_, _, Err(e)) => flagged(format!("camera: {e}")),
            }
        })
        .collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        w.serialize(row).map_err(|e| Failure::Input(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Input(e.to_string()))?;
    match &a.out {
        Some(path) => fs::write(path, &bytes)?,
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    let ok: Vec<&MetricRow> = rows.iter().filter(|r| r.status == "ok").collect();
    let mean = |f: fn(&MetricRow) -> Option<f64>| ok.iter().filter_map(|r| f(r)).sum::<f64>() / ok.len().max(1) as f64;
    eprintln!(
        "{} of {} samples scored; mean CD-l2 x1e3 {:.4}, mean NC x100 {:.2}",
        ok.len(),
        rows.len(),
        mean(|r| r.cd_l2_e3),
        mean(|r| r.nc_e2)
    );
    Ok(())
}

pub fn template(a: TemplateArgs) -> Outcome {
    let spec = BuiltinSpec {
        segments: a.segments,
        k: a.k,
        library_size: a.library,
        seed: a.seed,
    };
    if spec.segments == 0 || spec.k == 0 || spec.k >= spec.library_size {
        return Err(Failure::Input("need segments >= 1 and 1 <= k < library".into()));
    }
    let t = TemplateMesh::builtin_with(spec);
    t.save_dir(&a.out)?;
    let frozen = t.sigma().iter().filter(|&&s| s == 0.0).count();
    println!("template with {} modes ({} frozen) in {}", t.k(), frozen, a.out.display());
    Ok(())
}
