//! In-memory session state, the one-job rule and job execution.

use std::collections::{BTreeMap, VecDeque};
use std::ops::ControlFlow;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use contour_refine::refine::{optimize_with, StepRecord, StopReason};
use contour_refine::{
    initialize_code, rasterize, BinaryImage, Camera, CameraSpec, Error, LatentCode, Objective, Point3,
    RefinementConfig, TemplateMesh,
};
use serde::Serialize;

use crate::error::ApiError;
use crate::store::{HistoryEntry, Op, SessionDir, SessionRecord};

/// Points of the loss trace kept for polling clients.
pub const TRACE_TAIL: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
    Cancelled,
}

impl JobStatus {
    pub fn is_done(self) -> bool {
        !matches!(self, JobStatus::Queued | JobStatus::Running)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TracePoint {
    pub step: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Progress {
    pub step: usize,
    pub steps: usize,
    pub loss: Option<f64>,
}

/// Normal-map change of an edit, split by the stroke's locality mask.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Locality {
    /// Mean |n1 - n0| over pixels farther than `t` from the stroke that
    /// either rendering covers.
    pub far_normal_change: f64,
    pub near_normal_change: f64,
    pub far_pixels: usize,
    pub near_pixels: usize,
    pub stroke_chamfer_before: f64,
    pub stroke_chamfer_after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JobResult {
    pub code: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub best_step: usize,
    pub steps_run: usize,
    pub stop: StopReason,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub locality: Option<Locality>,
}

#[derive(Clone, Debug, Serialize)]
pub struct JobView {
    pub id: String,
    pub kind: Op,
    pub status: JobStatus,
    pub progress: Progress,
    pub trace_tail: Vec<TracePoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<JobResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Job {
    view: JobView,
    tail: VecDeque<TracePoint>,
    cancel: Arc<AtomicBool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SessionView {
    pub id: String,
    pub template: String,
    pub camera: CameraSpec,
    pub code: Vec<f64>,
    pub history: Vec<HistoryEntry>,
    pub can_undo: bool,
    pub running_job: Option<String>,
}

struct State {
    record: SessionRecord,
    /// Code after each history entry.
    codes: Vec<LatentCode>,
    camera: Camera,
    jobs: BTreeMap<String, Job>,
    running: Option<String>,
    next_job: usize,
}

pub struct Session {
    pub id: String,
    pub template: Arc<TemplateMesh>,
    dir: SessionDir,
    state: Mutex<State>,
}

/// Work handed to the pool; everything validated up front.
pub enum Work {
    Reconstruct {
        sketch: BinaryImage,
        objective: Objective,
        camera: Camera,
        config: RefinementConfig,
        starts: usize,
        seed: u64,
    },
    Edit {
        objective: Objective,
        camera: Camera,
        code0: LatentCode,
        config: RefinementConfig,
    },
}

impl Work {
    fn op(&self) -> Op {
        match self {
            Work::Reconstruct { .. } => Op::Reconstruct,
            Work::Edit { .. } => Op::Edit,
        }
    }

    fn steps(&self) -> usize {
        match self {
            Work::Reconstruct { config, .. } | Work::Edit { config, .. } => config.steps,
        }
    }
}

impl Session {
    pub fn create(
        dir: SessionDir,
        id: String,
        template_id: String,
        template: Arc<TemplateMesh>,
        camera: Camera,
    ) -> Result<Session, ApiError> {
        dir.create()?;
        let code = LatentCode::zeros(template.k());
        let rel = dir.write_code(0, &code).map_err(|e| ApiError::Internal(e.to_string()))?;
        let record = SessionRecord {
            id: id.clone(),
            template: template_id,
            camera: camera.spec(),
            history: vec![HistoryEntry { op: Op::Create, code: rel, job: None }],
        };
        dir.write_record(&record)?;
        Ok(Session::from_parts(dir, template, record, vec![code], camera))
    }

    /// Rebuilds a persisted session; `template` must be the one it names.
    pub fn load(dir: SessionDir, record: SessionRecord, template: Arc<TemplateMesh>) -> contour_refine::Result<Session> {
        let camera = record.camera.to_camera()?;
        if record.history.is_empty() {
            return Err(Error::format("session", "empty history"));
        }
        let codes = record
            .history
            .iter()
            .map(|e| {
                let code = dir.read_code(&e.code)?;
                template.check_code(&code)?;
                Ok(code)
            })
            .collect::<contour_refine::Result<Vec<_>>>()?;
        Ok(Session::from_parts(dir, template, record, codes, camera))
    }

    fn from_parts(
        dir: SessionDir,
        template: Arc<TemplateMesh>,
        record: SessionRecord,
        codes: Vec<LatentCode>,
        camera: Camera,
    ) -> Session {
        Session {
            id: record.id.clone(),
            template,
            dir,
            state: Mutex::new(State {
                record,
                codes,
                camera,
                jobs: BTreeMap::new(),
                running: None,
                next_job: 1,
            }),
        }
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn view(&self) -> SessionView {
        let s = self.lock();
        SessionView {
            id: self.id.clone(),
            template: s.record.template.clone(),
            camera: s.record.camera.clone(),
            code: s.codes.last().expect("history is never empty").0.clone(),
            history: s.record.history.clone(),
            can_undo: s.record.undo_stack().len() > 1,
            running_job: s.running.clone(),
        }
    }

    /// Current code and camera, read together.
    pub fn current(&self) -> (LatentCode, Camera) {
        let s = self.lock();
        (s.codes.last().expect("history is never empty").clone(), s.camera.clone())
    }

    /// Registers a job unless one is running. Edits read their `code0` here,
    /// under the same lock.
    pub fn begin_job(&self, make: impl FnOnce(&LatentCode, &Camera) -> Result<Work, ApiError>) -> Result<(String, Work, Arc<AtomicBool>), ApiError> {
        let mut s = self.lock();
        if let Some(j) = &s.running {
            return Err(ApiError::Conflict(format!("job {j} is still running on this session")));
        }
        let work = make(s.codes.last().expect("history is never empty"), &s.camera)?;
        let id = format!("job-{:04}", s.next_job);
        s.next_job += 1;
        let cancel = Arc::new(AtomicBool::new(false));
        let view = JobView {
            id: id.clone(),
            kind: work.op(),
            status: JobStatus::Queued,
            progress: Progress { step: 0, steps: work.steps(), loss: None },
            trace_tail: Vec::new(),
            result: None,
            error: None,
        };
        s.jobs.insert(id.clone(), Job { view, tail: VecDeque::new(), cancel: cancel.clone() });
        s.running = Some(id.clone());
        Ok((id, work, cancel))
    }

    pub fn job(&self, id: &str) -> Option<JobView> {
        let s = self.lock();
        s.jobs.get(id).map(|j| {
            let mut v = j.view.clone();
            v.trace_tail = j.tail.iter().copied().collect();
            v
        })
    }

    /// Asks a running job to stop; it does so at its next step.
    pub fn cancel(&self, id: &str) -> Result<JobView, ApiError> {
        {
            let s = self.lock();
            let job = s.jobs.get(id).ok_or_else(|| ApiError::NotFound(format!("no job {id}")))?;
            if job.view.status.is_done() {
                return Err(ApiError::Conflict(format!("job {id} already finished")));
            }
            job.cancel.store(true, Ordering::SeqCst);
        }
        Ok(self.job(id).expect("job exists"))
    }

    pub fn undo(&self) -> Result<SessionView, ApiError> {
        {
            let mut s = self.lock();
            if let Some(j) = &s.running {
                return Err(ApiError::Conflict(format!("job {j} is still running on this session")));
            }
            let stack = s.record.undo_stack();
            if stack.len() < 2 {
                return Err(ApiError::Conflict("nothing to undo".into()));
            }
            let restored = stack[stack.len() - 2];
            let entry = HistoryEntry { op: Op::Undo, code: s.record.history[restored].code.clone(), job: None };
            let code = s.codes[restored].clone();
            let mut record = s.record.clone();
            record.history.push(entry);
            self.dir.write_record(&record)?;
            s.record = record;
            s.codes.push(code);
        }
        Ok(self.view())
    }

    fn set_running(&self, id: &str) {
        if let Some(j) = self.lock().jobs.get_mut(id) {
            j.view.status = JobStatus::Running;
        }
    }

    fn observe(&self, id: &str, r: &StepRecord) {
        let mut s = self.lock();
        if let Some(j) = s.jobs.get_mut(id) {
            j.view.progress.step = r.step;
            j.view.progress.loss = Some(r.terms.total);
            j.tail.push_back(TracePoint { step: r.step, loss: r.terms.total });
            if j.tail.len() > TRACE_TAIL {
                j.tail.pop_front();
            }
        }
    }

    fn finish(&self, id: &str, status: JobStatus, result: Option<JobResult>, error: Option<String>) {
        let mut s = self.lock();
        if let Some(j) = s.jobs.get_mut(id) {
            j.view.status = status;
            j.view.result = result;
            j.view.error = error;
        }
        s.running = None;
    }

    /// Persists `code` as the session's new state, then swaps it in.
    fn commit(&self, op: Op, job: &str, code: LatentCode) -> Result<(), String> {
        let mut s = self.lock();
        let index = s.codes.len();
        let rel = self.dir.write_code(index, &code).map_err(|e| e.to_string())?;
        let mut record = s.record.clone();
        record.history.push(HistoryEntry { op, code: rel, job: Some(job.to_string()) });
        self.dir.write_record(&record).map_err(|e| e.to_string())?;
        s.record = record;
        s.codes.push(code);
        Ok(())
    }

    pub fn save_image(&self, name: &str, image: &BinaryImage) {
        if let Ok(png) = image.to_png() {
            let _ = self.dir.write_image(name, &png);
        }
    }

    /// Runs `work` to completion on the calling thread.
    pub fn run(&self, id: &str, work: Work, cancel: &AtomicBool) {
        self.set_running(id);
        let op = work.op();
        let outcome = self.execute(id, work, cancel);
        match outcome {
            Ok(None) => self.finish(id, JobStatus::Cancelled, None, None),
            Ok(Some(result)) => match self.commit(op, id, LatentCode(result.code.clone())) {
                Ok(()) => self.finish(id, JobStatus::Succeeded, Some(result), None),
                Err(e) => self.finish(id, JobStatus::Failed, None, Some(format!("could not persist: {e}"))),
            },
            Err(e) => self.finish(id, JobStatus::Failed, None, Some(e.to_string())),
        }
    }

    fn execute(&self, id: &str, work: Work, cancel: &AtomicBool) -> contour_refine::Result<Option<JobResult>> {
        let t = &*self.template;
        let observer = |r: &StepRecord| {
            self.observe(id, r);
            if cancel.load(Ordering::SeqCst) {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        };
        match work {
            Work::Reconstruct { sketch, objective, camera, config, starts, seed } => {
                let start = initialize_code(&sketch, &camera, t, starts, seed)?;
                if cancel.load(Ordering::SeqCst) {
                    return Ok(None);
                }
                let (code, trace) = optimize_with(&start, &objective, t, &camera, &config, observer)?;
                if trace.stop == StopReason::Cancelled {
                    return Ok(None);
                }
                Ok(Some(JobResult {
                    code: code.0,
                    initial_loss: trace.initial_loss(),
                    final_loss: trace.best_loss(),
                    best_step: trace.best_step,
                    steps_run: trace.records.len() - 1,
                    stop: trace.stop,
                    locality: None,
                }))
            }
            Work::Edit { objective, camera, code0, config } => {
                let (code, trace) = optimize_with(&code0, &objective, t, &camera, &config, observer)?;
                if trace.stop == StopReason::Cancelled {
                    return Ok(None);
                }
                let locality = match &objective {
                    Objective::Partial(p) => {
                        let best = trace.records.iter().find(|r| r.step == trace.best_step);
                        Some(locality(
                            t,
                            &camera,
                            &code0,
                            &code,
                            p.locality(),
                            trace.records[0].terms.chamfer,
                            best.map_or(f64::NAN, |r| r.terms.chamfer),
                        )?)
                    }
                    _ => None,
                };
                Ok(Some(JobResult {
                    code: code.0,
                    initial_loss: trace.initial_loss(),
                    final_loss: trace.best_loss(),
                    best_step: trace.best_step,
                    steps_run: trace.records.len() - 1,
                    stop: trace.stop,
                    locality,
                }))
            }
        }
    }
}

fn locality(
    template: &TemplateMesh,
    camera: &Camera,
    code0: &LatentCode,
    code: &LatentCode,
    mask: &[f64],
    before: f64,
    after: f64,
) -> contour_refine::Result<Locality> {
    let n0 = rasterize(&template.decode(code0)?, camera).normals;
    let n1 = rasterize(&template.decode(code)?, camera).normals;
    let (mut far, mut near) = ((0.0, 0usize), (0.0, 0usize));
    for ((a, b), &l) in n0.iter().zip(&n1).zip(mask) {
        if *a == Point3::zeros() && *b == Point3::zeros() {
            continue;
        }
        let slot = if l > 0.5 { &mut far } else { &mut near };
        slot.0 += (b - a).norm();
        slot.1 += 1;
    }
    let mean = |(s, n): (f64, usize)| if n == 0 { 0.0 } else { s / n as f64 };
    Ok(Locality {
        far_normal_change: mean(far),
        near_normal_change: mean(near),
        far_pixels: far.1,
        near_pixels: near.1,
        stroke_chamfer_before: before,
        stroke_chamfer_after: after,
    })
}
