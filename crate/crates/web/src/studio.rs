//! Page-side state of the demo: a sketch canvas, the current code with its
//! undo history, and the view it is drawn in.

use contour_refine::refine::StopReason;
use contour_refine::{
    initialize_code, optimize, rasterize, BinaryImage, Camera, Error, LatentCode, Objective, RefinementConfig,
    Result, TemplateMesh,
};
use serde::Serialize;

/// Outcome of one refinement, handed to the page as JSON.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub steps_run: usize,
    pub stop: StopReason,
    /// Per-step loss, for the page's plot.
    pub losses: Vec<f64>,
}

pub struct Studio {
    template: TemplateMesh,
    camera: Camera,
    code: LatentCode,
    history: Vec<LatentCode>,
    sketch: BinaryImage,
    strokes: Vec<Vec<usize>>,
}

const BACKGROUND: [u8; 4] = [250, 250, 247, 255];
const INK: [u8; 4] = [25, 25, 35, 255];

impl Studio {
    /// Square canvas of `size` pixels looking at the built-in template.
    pub fn new(size: usize, azimuth_deg: f64, elevation_deg: f64) -> Result<Studio> {
        Studio::with_template(TemplateMesh::builtin(), size, azimuth_deg, elevation_deg)
    }

    pub fn with_template(template: TemplateMesh, size: usize, azimuth_deg: f64, elevation_deg: f64) -> Result<Studio> {
        let camera = Camera::framing(azimuth_deg.to_radians(), elevation_deg.to_radians(), size, size, 1.0)?;
        let code = LatentCode::zeros(template.k());
        Ok(Studio {
            template,
            camera,
            code,
            history: Vec::new(),
            sketch: BinaryImage::blank(size, size),
            strokes: Vec::new(),
        })
    }

    pub fn size(&self) -> usize {
        self.camera.width()
    }

    pub fn camera(&self) -> &Camera {
        &self.camera
    }

    pub fn code(&self) -> &LatentCode {
        &self.code
    }

    pub fn sketch(&self) -> &BinaryImage {
        &self.sketch
    }

    pub fn template(&self) -> &TemplateMesh {
        &self.template
    }

    pub fn set_view(&mut self, azimuth_deg: f64, elevation_deg: f64) -> Result<()> {
        self.camera = self.camera.with_view(azimuth_deg.to_radians(), elevation_deg.to_radians())?;
        Ok(())
    }

    pub fn begin_stroke(&mut self) {
        self.strokes.push(Vec::new());
    }

    /// Inks a round-nibbed segment in pixel coordinates; off-canvas parts
    /// are dropped. Starts a stroke if none is open.
    pub fn draw_line(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, pen: f64) {
        if self.strokes.is_empty() {
            self.begin_stroke();
        }
        let r = (pen / 2.0).max(0.5);
        let n = ((x1 - x0).hypot(y1 - y0) * 2.0).ceil().max(1.0) as usize;
        let (w, h) = (self.sketch.width(), self.sketch.height());
        for i in 0..=n {
            let s = i as f64 / n as f64;
            let (cx, cy) = (x0 + (x1 - x0) * s, y0 + (y1 - y0) * s);
            let (lo_x, hi_x) = ((cx - r).floor().max(0.0), (cx + r).ceil().min(w as f64 - 1.0));
            let (lo_y, hi_y) = ((cy - r).floor().max(0.0), (cy + r).ceil().min(h as f64 - 1.0));
            if lo_x > hi_x || lo_y > hi_y {
                continue;
            }
            for y in lo_y as usize..=hi_y as usize {
                for x in lo_x as usize..=hi_x as usize {
                    let inside = (x as f64 + 0.5 - cx).hypot(y as f64 + 0.5 - cy) <= r;
                    if inside && self.sketch.get(x, y) != 0 {
                        self.sketch.set(x, y, 0);
                        self.strokes.last_mut().expect("stroke opened above").push(y * w + x);
                    }
                }
            }
        }
    }

    /// Removes the pixels the last stroke inked.
    pub fn undo_stroke(&mut self) -> bool {
        let Some(stroke) = self.strokes.pop() else {
            return false;
        };
        let w = self.sketch.width();
        for i in stroke {
            self.sketch.set(i % w, i / w, 1);
        }
        true
    }

    pub fn clear_sketch(&mut self) {
        self.sketch = BinaryImage::blank(self.sketch.width(), self.sketch.height());
        self.strokes.clear();
    }

    fn accept(&mut self, code: LatentCode) {
        self.history.push(std::mem::replace(&mut self.code, code));
        self.clear_sketch();
    }

    /// Fits the whole shape to the sketch as seen from the current view.
    pub fn reconstruct(&mut self, steps: usize, starts: usize) -> Result<RunSummary> {
        let config = RefinementConfig { steps, ..Default::default() };
        config.validate()?;
        let start = initialize_code(&self.sketch, &self.camera, &self.template, starts, 0)?;
        let objective = Objective::chamfer_from_sketch(&self.sketch)?;
        self.run(&start, &objective, &config)
    }

    /// Treats the sketch as an editing stroke over the current shape.
    pub fn edit(&mut self, steps: usize, t: f64) -> Result<RunSummary> {
        let config = RefinementConfig { steps, t, ..Default::default() };
        config.validate()?;
        if self.sketch.stroke_count() == 0 {
            return Err(Error::EmptySketch);
        }
        let objective = Objective::partial_edit(&self.template, &self.camera, &self.code, &self.sketch, &config)?;
        let start = self.code.clone();
        self.run(&start, &objective, &config)
    }

    fn run(&mut self, start: &LatentCode, objective: &Objective, config: &RefinementConfig) -> Result<RunSummary> {
        let (code, trace) = optimize(start, objective, &self.template, &self.camera, config)?;
        let summary = RunSummary {
            initial_loss: trace.initial_loss(),
            final_loss: trace.best_loss(),
            steps_run: trace.records.len() - 1,
            stop: trace.stop,
            losses: trace.losses(),
        };
        self.accept(code);
        Ok(summary)
    }

    pub fn undo(&mut self) -> bool {
        match self.history.pop() {
            Some(code) => {
                self.code = code;
                true
            }
            None => false,
        }
    }

    pub fn can_undo(&self) -> bool {
        !self.history.is_empty()
    }

    /// RGBA frame: the shaded current shape with the sketch inked on top.
    pub fn render_rgba(&self) -> Result<Vec<u8>> {
        let buffers = rasterize(&self.template.decode(&self.code)?, &self.camera);
        let light = [-0.4, -0.5, -0.77];
        let mut out = Vec::with_capacity(buffers.normals.len() * 4);
        for (i, n) in buffers.normals.iter().enumerate() {
            let px = if self.sketch.values()[i] == 0 {
                INK
            } else if buffers.mask.values()[i] == 1 {
                let lambert = (n.x * light[0] + n.y * light[1] + n.z * light[2]).abs();
                let v = (70.0 + 170.0 * lambert) as u8;
                [v / 2 + 40, v / 2 + 70, v, 255]
            } else {
                BACKGROUND
            };
            out.extend_from_slice(&px);
        }
        Ok(out)
    }

    /// Current mesh as OBJ text, for download.
    pub fn mesh_obj(&self) -> Result<String> {
        Ok(self.template.decode(&self.code)?.to_obj_string())
    }
}
