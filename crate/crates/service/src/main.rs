use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use contour_refine::TemplateMesh;
use contour_refine_service::{router, AppState, ServiceConfig};

const THREADS_ENV: &str = "CONTOUR_REFINE_THREADS";

/// Serves the /v1 session API.
#[derive(Parser, Debug)]
#[command(name = "contour-refine-serve", version, about)]
struct Args {
    /// Directory holding persisted sessions.
    #[arg(long, default_value = "sessions-data")]
    root: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Extra template as `id=dir`; repeatable.
    #[arg(long = "template", value_parser = parse_template)]
    templates: Vec<(String, PathBuf)>,
}

fn parse_template(s: &str) -> Result<(String, PathBuf), String> {
    let (id, dir) = s.split_once('=').ok_or("expected id=dir")?;
    Ok((id.to_string(), PathBuf::from(dir)))
}

fn threads() -> Result<Option<usize>, String> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(raw) => raw
            .trim()
            .parse()
            .ok()
            .filter(|&n: &usize| n > 0)
            .map(Some)
            .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got {raw:?}")),
    }
}

fn config(args: &Args) -> Result<ServiceConfig, String> {
    let mut templates = BTreeMap::new();
    for (id, dir) in &args.templates {
        let t = TemplateMesh::load_dir(dir).map_err(|e| format!("template {id}: {e}"))?;
        templates.insert(id.clone(), Arc::new(t));
    }
    Ok(ServiceConfig { root: args.root.clone(), threads: threads()?, templates })
}

#[tokio::main]
async fn main() -> ExitCode {
    let args = Args::parse();
    let state = match config(&args).and_then(|c| AppState::open(c).map_err(|e| e.to_string())) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let listener = match tokio::net::TcpListener::bind(args.addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: bind {}: {e}", args.addr);
            return ExitCode::from(2);
        }
    };
    eprintln!("serving {} sessions on http://{}/v1", state.session_count(), args.addr);
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    if let Err(e) = axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
