//! Overlapped segment solves: each enlarged window `A_k(δ)` is solved on its
//! own, the overlap is discarded and the kept blocks are concatenated.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::objective::{BoundaryMode, WindowedObjective};
use crate::path::PathVector;
use crate::plan::{build_segment_plan, SegmentPlan};
use crate::solver::{solve_map, solve_windowed, SolveReport, SolverConfig};

#[derive(Debug, Clone, Serialize)]
pub struct SegmentReport {
    pub segment: usize,
    pub window_start: usize,
    pub window_end: usize,
    pub boundary_mode: BoundaryMode,
    #[serde(flatten)]
    pub report: SolveReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParallelSolveReport {
    #[serde(skip)]
    pub stitched: PathVector,
    pub per_segment: Vec<SegmentReport>,
    pub plan: SegmentPlan,
    pub wall_clock_seconds: f64,
}

/// Solves every enlarged window of `plan` and stitches the kept blocks.
///
/// Segments are dealt to `workers` threads round-robin; each segment's arithmetic
/// is independent of the assignment, so the output does not depend on `workers`.
/// `mode` overrides the per-window default of [`BoundaryMode::default_for`].
pub fn solve_parallel(
    model: &ModelSpec,
    plan: &SegmentPlan,
    cfg: &SolverConfig,
    workers: usize,
    mode: Option<BoundaryMode>,
) -> Result<ParallelSolveReport> {
    if plan.horizon != model.horizon() {
        return Err(Error::Plan(format!(
            "plan horizon {} does not match model horizon {}",
            plan.horizon,
            model.horizon()
        )));
    }
    if workers == 0 {
        return Err(Error::Plan("at least one worker is required".into()));
    }
    cfg.validate()?;
    let started = Instant::now();
    let l = plan.num_segments;
    let workers = workers.min(l);
    let run = |k: usize| -> Result<SegmentReport> {
        let window = plan.enlarged[k];
        let mode = mode.unwrap_or_else(|| BoundaryMode::default_for(model, window));
        let obj = WindowedObjective::new(model, window, mode)?;
        let report = solve_windowed(&obj, cfg, None)?;
        Ok(SegmentReport {
            segment: k,
            window_start: window.start,
            window_end: window.end,
            boundary_mode: mode,
            report,
        })
    };

    let mut results: Vec<Option<Result<SegmentReport>>> = (0..l).map(|_| None).collect();
    if workers == 1 {
        for (k, slot) in results.iter_mut().enumerate() {
            *slot = Some(run(k));
        }
    } else {
        let run = &run;
        let collected: Vec<Vec<(usize, Result<SegmentReport>)>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| scope.spawn(move || (w..l).step_by(workers).map(|k| (k, run(k))).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("segment worker panicked"))
                .collect()
        });
        for (k, r) in collected.into_iter().flatten() {
            results[k] = Some(r);
        }
    }

    let mut failures = Vec::new();
    let mut per_segment = Vec::with_capacity(l);
    for (k, r) in results.into_iter().enumerate() {
        match r.expect("every segment is scheduled") {
            Ok(rep) => per_segment.push(rep),
            Err(e) => failures.push((k, e.to_string())),
        }
    }
    if !failures.is_empty() {
        return Err(Error::SegmentFailures(failures));
    }

    let d = model.dim();
    let mut stitched = Vec::with_capacity((model.horizon() + 1) * d);
    for (seg, rep) in plan.segments.iter().zip(&per_segment) {
        let offset = seg.start - rep.window_start;
        let sol = rep.report.solution.as_slice();
        stitched.extend_from_slice(&sol[offset * d..(offset + seg.len()) * d]);
    }
    Ok(ParallelSolveReport {
        stitched: PathVector::from_flat(d, stitched)?,
        per_segment,
        plan: plan.clone(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

/// `‖candidate − reference‖ / ‖reference‖` over the whole path.
pub fn relative_error(candidate: &PathVector, reference: &PathVector) -> Result<f64> {
    candidate.check_shape(reference)?;
    let num: f64 = candidate
        .as_slice()
        .iter()
        .zip(reference.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let den: f64 = reference.as_slice().iter().map(|b| b * b).sum();
    if den == 0.0 {
        return Err(Error::Division("reference path is identically zero".into()));
    }
    Ok((num / den).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub delta: usize,
    pub rel_error: f64,
    pub wall_clock_s: f64,
    pub speedup: f64,
    /// Squared error of the stitched path on the first segment.
    pub first_segment_sq_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub reference_wall_clock_s: f64,
    #[serde(skip)]
    pub reference: PathVector,
}

/// Relative error of the parallel scheme against the full solve for each overlap.
pub fn sweep_delta(
    model: &ModelSpec,
    num_segments: usize,
    deltas: &[usize],
    cfg: &SolverConfig,
    workers: usize,
    mode: Option<BoundaryMode>,
) -> Result<SweepResult> {
    if deltas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Plan("deltas must be sorted".into()));
    }
    let reference = solve_map(model, cfg, None)?;
    let d = model.dim();
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let plan = build_segment_plan(model.horizon(), num_segments, delta)?;
        let par = solve_parallel(model, &plan, cfg, workers, mode)?;
        let first = plan.segments[0].len() * d;
        let first_segment_sq_error = par.stitched.as_slice()[..first]
            .iter()
            .zip(&reference.solution.as_slice()[..first])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        rows.push(SweepRow {
            delta,
            rel_error: relative_error(&par.stitched, &reference.solution)?,
            wall_clock_s: par.wall_clock_seconds,
            speedup: reference.wall_clock_seconds / par.wall_clock_seconds,
            first_segment_sq_error,
        });
    }
    Ok(SweepResult {
        rows,
        reference_wall_clock_s: reference.wall_clock_seconds,
        reference: reference.solution,
    })
}
