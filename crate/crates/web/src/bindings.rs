use wasm_bindgen::prelude::*;

use crate::studio::Studio;

fn js(e: contour_refine::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = Studio)]
pub struct JsStudio(Studio);

#[wasm_bindgen(js_class = Studio)]
impl JsStudio {
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, azimuth_deg: f64, elevation_deg: f64) -> Result<JsStudio, JsError> {
        Studio::new(size, azimuth_deg, elevation_deg).map(JsStudio).map_err(js)
    }

    pub fn size(&self) -> usize {
        self.0.size()
    }

    #[wasm_bindgen(js_name = setView)]
    pub fn set_view(&mut self, azimuth_deg: f64, elevation_deg: f64) -> Result<(), JsError> {
        self.0.set_view(azimuth_deg, elevation_deg).map_err(js)
    }

    #[wasm_bindgen(js_name = beginStroke)]
    pub fn begin_stroke(&mut self) {
        self.0.begin_stroke();
    }

    #[wasm_bindgen(js_name = drawLine)]
    pub fn draw_line(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, pen: f64) {
        self.0.draw_line(x0, y0, x1, y1, pen);
    }

    #[wasm_bindgen(js_name = undoStroke)]
    pub fn undo_stroke(&mut self) -> bool {
        self.0.undo_stroke()
    }

    #[wasm_bindgen(js_name = clearSketch)]
    pub fn clear_sketch(&mut self) {
        self.0.clear_sketch();
    }

    /// JSON run summary.
    pub fn reconstruct(&mut self, steps: usize, starts: usize) -> Result<String, JsError> {
        let s = self.0.reconstruct(steps, starts).map_err(js)?;
        serde_json::to_string(&s).map_err(|e| JsError::new(&e.to_string()))
    }

    /// JSON run summary.
    pub fn edit(&mut self, steps: usize, t: f64) -> Result<String, JsError> {
        let s = self.0.edit(steps, t).map_err(js)?;
        serde_json::to_string(&s).map_err(|e| JsError::new(&e.to_string()))
    }

    pub fn undo(&mut self) -> bool {
        self.0.undo()
    }

    #[wasm_bindgen(js_name = canUndo)]
    pub fn can_undo(&self) -> bool {
        self.0.can_undo()
    }

    /// `size * size * 4` bytes for an `ImageData`.
    pub fn render(&self) -> Result<Vec<u8>, JsError> {
        self.0.render_rgba().map_err(js)
    }

    #[wasm_bindgen(js_name = meshObj)]
    pub fn mesh_obj(&self) -> Result<String, JsError> {
        self.0.mesh_obj().map_err(js)
    }

    pub fn code(&self) -> Vec<f64> {
        self.0.code().0.clone()
    }
}
