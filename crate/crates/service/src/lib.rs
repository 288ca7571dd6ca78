//! HTTP session service for interactive reconstruction and editing.
//!
//! All endpoints live under `/v1`. Images travel as base64 PNG (or PGM)
//! strings in JSON bodies; a `data:` URL prefix is accepted. Long
//! operations return a job handle to poll.

mod api;
pub mod error;
pub mod session;
pub mod store;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use contour_refine::TemplateMesh;

pub use api::router;
pub use error::{ApiError, FieldError};
pub use session::{JobResult, JobStatus, JobView, Locality, Session, SessionView};

pub const BUILTIN_TEMPLATE: &str = "builtin";

pub struct ServiceConfig {
    /// Sessions persist under `<root>/sessions`.
    pub root: PathBuf,
    /// Optimization worker threads; rayon's default when `None`.
    pub threads: Option<usize>,
    /// Templates by id, in addition to the built-in one.
    pub templates: BTreeMap<String, Arc<TemplateMesh>>,
}

impl ServiceConfig {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ServiceConfig { root: root.into(), threads: None, templates: BTreeMap::new() }
    }
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

struct Inner {
    sessions_root: PathBuf,
    templates: BTreeMap<String, Arc<TemplateMesh>>,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    pool: rayon::ThreadPool,
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("session store: {0}")]
    Io(#[from] std::io::Error),
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl AppState {
    /// Opens the store and reloads every persisted session. Sessions whose
    /// template is unknown or whose files do not load are skipped and
    /// reported on stderr.
    pub fn open(config: ServiceConfig) -> Result<AppState, StartupError> {
        let mut templates = config.templates;
        templates
            .entry(BUILTIN_TEMPLATE.to_string())
            .or_insert_with(|| Arc::new(TemplateMesh::builtin()));
        let sessions_root = config.root.join("sessions");
        std::fs::create_dir_all(&sessions_root)?;

        let mut sessions = HashMap::new();
        for dir in store::list_sessions(&sessions_root)? {
            let loaded = dir.read_record().map_err(|e| e.to_string()).and_then(|record| {
                let template = templates
                    .get(&record.template)
                    .cloned()
                    .ok_or_else(|| format!("unknown template {:?}", record.template))?;
                Session::load(dir.clone(), record, template).map_err(|e| e.to_string())
            });
            match loaded {
                Ok(s) => {
                    sessions.insert(s.id.clone(), Arc::new(s));
                }
                Err(e) => eprintln!("skipping session {}: {e}", dir.path().display()),
            }
        }

        let mut pool = rayon::ThreadPoolBuilder::new().thread_name(|i| format!("refine-{i}"));
        if let Some(n) = config.threads {
            pool = pool.num_threads(n);
        }
        Ok(AppState(Arc::new(Inner {
            sessions_root,
            templates,
            sessions: RwLock::new(sessions),
            pool: pool.build()?,
        })))
    }

    pub fn session(&self, id: &str) -> Option<Arc<Session>> {
        self.0.sessions.read().unwrap_or_else(|p| p.into_inner()).get(id).cloned()
    }

    pub fn session_count(&self) -> usize {
        self.0.sessions.read().unwrap_or_else(|p| p.into_inner()).len()
    }

    fn template(&self, id: &str) -> Option<Arc<TemplateMesh>> {
        self.0.templates.get(id).cloned()
    }

    fn insert(&self, session: Session) -> Arc<Session> {
        let s = Arc::new(session);
        self.0
            .sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(s.id.clone(), s.clone());
        s
    }
}
