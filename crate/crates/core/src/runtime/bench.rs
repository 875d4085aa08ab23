use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use super::{ActionCommand, Session, SessionError};
use crate::taxonomy::Taxonomy;
use crate::world::SceneDoc;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub steps: u64,
    pub objects: usize,
    /// Steps per second, averaged over measurement windows.
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub windows: Vec<f64>,
    pub final_digest: String,
}

/// Steps an idle agent with `Noop` actions and reports wall-clock throughput.
pub fn bench(scene: &SceneDoc, taxonomy: Arc<Taxonomy>, steps: u64) -> Result<BenchReport, SessionError> {
    let steps = steps.max(100);
    let mut session = Session::idle(scene, taxonomy, 0)?;
    let window = (steps / 10).max(10);
    let mut windows = Vec::new();
    let mut done = 0;
    while done < steps {
        let n = window.min(steps - done);
        let t0 = Instant::now();
        for _ in 0..n {
            session.step(&[ActionCommand::Noop])?;
        }
        let secs = t0.elapsed().as_secs_f64().max(1e-9);
        windows.push(n as f64 / secs);
        done += n;
    }
    let min = windows.iter().copied().fold(f64::INFINITY, f64::min);
    let max = windows.iter().copied().fold(0.0, f64::max);
    let mean = (windows.iter().sum::<f64>() / windows.len() as f64).clamp(min, max);
    Ok(BenchReport {
        steps,
        objects: session.world().object_count(),
        mean,
        min,
        max,
        windows,
        final_digest: session.world().digest_hex(),
    })
}
