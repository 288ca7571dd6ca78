use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::shape::{LatentCode, TemplateMesh};

use super::objective::{Linearization, LossTerms, Objective};
use super::RefinementConfig;

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    pub fn new(k: usize, config: &RefinementConfig) -> Self {
        Adam {
            m: vec![0.0; k],
            v: vec![0.0; k],
            t: 0,
            lr: config.step_size,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step_scaled(params, grad, &vec![1.0; params.len()]);
    }

    /// Update in the coordinates `params[i] / scale[i]`: equivalent to
    /// running [`Adam::step`] on those coordinates and mapping back.
    /// Coordinates with zero scale do not move.
    pub fn step_scaled(&mut self, params: &mut [f64], grad: &[f64], scale: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i] * scale[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= scale[i] * self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub terms: LossTerms,
    pub grad_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub code: Option<LatentCode>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Ran the configured number of steps.
    Completed,
    /// The windowed mean loss stopped improving.
    Converged,
    /// The gradient vanished exactly.
    ZeroGradient,
    /// The observer asked to stop.
    Cancelled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub records: Vec<StepRecord>,
    /// Step whose code was returned.
    pub best_step: usize,
    pub stop: StopReason,
}

#[derive(Serialize)]
struct CsvRow {
    step: usize,
    loss: f64,
    chamfer: f64,
    silhouette: f64,
    mask: f64,
    normal: f64,
    grad_norm: f64,
}

impl RefinementTrace {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.terms.total).collect()
    }

    pub fn initial_loss(&self) -> f64 {
        self.records.first().map_or(f64::NAN, |r| r.terms.total)
    }

    pub fn best_loss(&self) -> f64 {
        self.records
            .iter()
            .find(|r| r.step == self.best_step)
            .map_or(f64::NAN, |r| r.terms.total)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(CsvRow {
                step: r.step,
                loss: r.terms.total,
                chamfer: r.terms.chamfer,
                silhouette: r.terms.silhouette,
                mask: r.terms.mask,
                normal: r.terms.normal,
                grad_norm: r.grad_norm,
            })
            .map_err(|e| Error::format("trace", e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::format("trace", e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::format("trace", e.to_string()))
    }
}

/// Runs [`optimize_with`] without an observer.
pub fn optimize(
    code0: &LatentCode,
    objective: &Objective,
    template: &TemplateMesh,
    camera: &Camera,
    config: &RefinementConfig,
) -> Result<(LatentCode, RefinementTrace)> {
    optimize_with(code0, objective, template, camera, config, |_| ControlFlow::Continue(()))
}

/// Minimizes `objective` from `code0` with Adam, clamping the code to the
/// template's box after every update. Adam works on the code divided by the
/// per-mode spread, so `step_size` is in spreads and a low-variance mode
/// moves proportionally less. The loss is evaluated at `steps + 1`
/// codes (the start and after each update) and the code with the lowest
/// loss is returned; ties keep the earliest. `observer` sees every record
/// and may stop the run.
pub fn optimize_with(
    code0: &LatentCode,
    objective: &Objective,
    template: &TemplateMesh,
    camera: &Camera,
    config: &RefinementConfig,
    mut observer: impl FnMut(&StepRecord) -> ControlFlow<()>,
) -> Result<(LatentCode, RefinementTrace)> {
    config.validate()?;
    template.check_code(code0)?;
    let mut code = code0.clone();
    template.clamp(&mut code);
    let mut adam = Adam::new(code.len(), config);
    let mut lin: Option<Linearization> = None;
    let mut records = Vec::new();
    let mut best = (f64::INFINITY, code.clone(), 0usize);
    let mut losses = Vec::with_capacity(config.steps + 1);
    let mut stop = StopReason::Completed;

    for step in 0..=config.steps {
        if step % config.reanchor_every == 0 || lin.is_none() {
            lin = Some(
                objective
                    .linearize(template, camera, &code)
                    .map_err(|e| e.at_step(step))?,
            );
        }
        let eval = lin
            .as_ref()
            .expect("linearized above")
            .evaluate(template, camera, &code)
            .map_err(|e| e.at_step(step))?;
        if !eval.terms.total.is_finite() {
            return Err(Error::NonFinite("loss").at_step(step));
        }
        if eval.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient").at_step(step));
        }
        let record = StepRecord {
            step,
            terms: eval.terms,
            grad_norm: eval.grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
            code: config.record_codes.then(|| code.clone()),
        };
        if eval.terms.total < best.0 {
            best = (eval.terms.total, code.clone(), step);
        }
        losses.push(eval.terms.total);
        let flow = observer(&record);
        records.push(record);
        if flow.is_break() {
            stop = StopReason::Cancelled;
            break;
        }
        if step == config.steps {
            break;
        }
        if eval.grad.iter().all(|&g| g == 0.0) {
            stop = StopReason::ZeroGradient;
            break;
        }
        let window = config.early_stop_window;
        if window > 0 && step + 1 >= 2 * window {
            let recent = &losses[step + 1 - window..=step];
            let before = &losses[step + 1 - 2 * window..step + 1 - window];
            let mean = |w: &[f64]| w.iter().sum::<f64>() / w.len() as f64;
            let (m0, m1) = (mean(before), mean(recent));
            let gain = (m0 - m1) / m0.abs().max(f64::MIN_POSITIVE);
            if gain < config.early_stop_tol {
                stop = StopReason::Converged;
                break;
            }
        }
        adam.step_scaled(&mut code.0, &eval.grad, template.sigma());
        template.clamp(&mut code);
    }

    Ok((
        best.1,
        RefinementTrace {
            records,
            best_step: best.2,
            stop,
        },
    ))
}
