//! On-disk session layout: `<root>/sessions/<id>/session.json`, one
//! `codes/NNNN.bin` per accepted code and the uploaded images under
//! `images/`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use contour_refine::{CameraSpec, LatentCode};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Create,
    Reconstruct,
    Edit,
    Undo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub op: Op,
    /// Code file relative to the session directory; the session's code
    /// after this operation.
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub job: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub template: String,
    pub camera: CameraSpec,
    pub history: Vec<HistoryEntry>,
}

impl SessionRecord {
    /// History indices still on the undo stack, oldest first. Undo pops the
    /// most recent code-producing entry; the creation entry never pops.
    pub fn undo_stack(&self) -> Vec<usize> {
        let mut stack = Vec::new();
        for (i, e) in self.history.iter().enumerate() {
            match e.op {
                Op::Undo => {
                    if stack.len() > 1 {
                        stack.pop();
                    }
                }
                _ => stack.push(i),
            }
        }
        stack
    }
}

/// A session directory.
#[derive(Clone, Debug)]
pub struct SessionDir {
    path: PathBuf,
}

impl SessionDir {
    pub fn new(root: &Path, id: &str) -> Self {
        SessionDir { path: root.join(id) }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn create(&self) -> io::Result<()> {
        fs::create_dir_all(self.path.join("codes"))?;
        fs::create_dir_all(self.path.join("images"))
    }

    /// Writes a new code file and returns its relative name.
    pub fn write_code(&self, index: usize, code: &LatentCode) -> contour_refine::Result<String> {
        let rel = format!("codes/{index:04}.bin");
        code.save(self.path.join(&rel))?;
        Ok(rel)
    }

    pub fn read_code(&self, rel: &str) -> contour_refine::Result<LatentCode> {
        LatentCode::load(self.path.join(rel))
    }

    pub fn write_image(&self, name: &str, png: &[u8]) -> io::Result<()> {
        fs::write(self.path.join("images").join(name), png)
    }

    /// Replaces `session.json` via a rename so readers never see half a file.
    pub fn write_record(&self, record: &SessionRecord) -> io::Result<()> {
        let tmp = self.path.join("session.json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(record)?)?;
        fs::rename(tmp, self.path.join("session.json"))
    }

    pub fn read_record(&self) -> io::Result<SessionRecord> {
        let bytes = fs::read(self.path.join("session.json"))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Session directories under `root`, sorted by name.
pub fn list_sessions(root: &Path) -> io::Result<Vec<SessionDir>> {
    if !root.exists() {
        return Ok(Vec::new());
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.join("session.json").is_file())
        .collect();
    dirs.sort();
    Ok(dirs.into_iter().map(|path| SessionDir { path }).collect())
}
