//! The `flow`, `perturb` and `spectrum` subcommands.
//!
//! A flow run writes into its output directory:
//! `config.json`, `series.jsonl` (one [`TimeSeriesRecord`] per sample),
//! `steps.jsonl` (functionals after every accepted step), `checkpoints/`,
//! `summary.json` and optionally `decay.svg`.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use g2flow::diagnostics::{
    diagnostic_snapshot, fit_decay_rate, hitchin_functional, hitchin_functional_wedge, lambda1_exact_forms, lowest_rayleigh_quotient,
    tail_window, DecayFit, TimeSeriesRecord,
};
use g2flow::flow::{run_flow, FlowKind, FlowSink, FlowState, StopReason};
use g2flow::g2algebra::G2Structure;
use g2flow::lattice::checkpoint::{read_field, write_field};
use g2flow::riemann::Gauge;
use serde::{Deserialize, Serialize};

use crate::config::{Prepared, RunConfig};
use crate::plot::decay_svg;
use crate::CliError;

pub const SERIES: &str = "series.jsonl";
pub const STEPS: &str = "steps.jsonl";
pub const SUMMARY: &str = "summary.json";
pub const PLOT: &str = "decay.svg";
pub const CHECKPOINTS: &str = "checkpoints";
pub const CONFIG_COPY: &str = "config.json";

/// Functionals after one accepted step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub hitchin_h: f64,
    pub total_volume: f64,
}

/// Metadata stored with each checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub kind: FlowKind,
    pub gauge: Gauge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub kind: FlowKind,
    pub gauge: Gauge,
    pub stop: StopReason,
    pub steps: usize,
    pub dt: f64,
    pub t_final: f64,
    pub samples: usize,
    /// `λ₁` of the flat reference on exact 3-forms.
    pub lambda1: f64,
    /// `λ₁/2`, the proven lower bound on the decay rate of `‖θ‖²`.
    pub bound_rate: f64,
    /// `2λ₁`, the linearized decay rate of `‖θ‖²` for a lowest mode.
    pub linearized_rate: f64,
    pub fit: Option<DecayFit>,
    /// Samples used by the fit; zero when no fit was possible.
    pub fit_samples: usize,
    pub fit_note: Option<String>,
    /// `max ‖θ(t)‖² / (e^{−λ₁t/2} ‖θ(0)‖²)` over the samples.
    pub bound_ratio_max: Option<f64>,
    pub theta_zero: bool,
    pub final_c0_theta: f64,
    /// Smallest change of `ℋ` between consecutive accepted steps.
    pub hitchin_min_step_change: Option<f64>,
    /// Smallest change of the total volume between consecutive accepted steps.
    pub volume_min_step_change: Option<f64>,
    pub max_harmonic_residual: f64,
    pub max_rhs_cross_residual: f64,
    pub max_metric_log_band: f64,
    pub initial: TimeSeriesRecord,
    #[serde(rename = "final")]
    pub last: TimeSeriesRecord,
}

struct DiskSink {
    series: BufWriter<File>,
    steps: BufWriter<File>,
    checkpoints: PathBuf,
    gauge: Gauge,
}

fn append(path: &Path) -> std::io::Result<BufWriter<File>> {
    Ok(BufWriter::new(OpenOptions::new().create(true).append(true).open(path)?))
}

fn json_line<T: Serialize>(out: &mut BufWriter<File>, value: &T) -> g2flow::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

impl FlowSink for DiskSink {
    fn sample(&mut self, state: &FlowState) -> g2flow::Result<()> {
        json_line(&mut self.series, &diagnostic_snapshot(state))?;
        self.series.flush()?;
        Ok(())
    }

    fn accepted(&mut self, state: &FlowState) -> g2flow::Result<()> {
        let s = &state.structure;
        let rec = StepRecord { step: state.step, t: state.t, hitchin_h: hitchin_functional_wedge(s), total_volume: hitchin_functional(s) };
        json_line(&mut self.steps, &rec)
    }

    fn checkpoint(&mut self, state: &FlowState, dt: f64) -> g2flow::Result<Option<PathBuf>> {
        self.series.flush()?;
        self.steps.flush()?;
        write_checkpoint(&self.checkpoints, state, dt, self.gauge).map(Some)
    }
}

fn write_checkpoint(dir: &Path, state: &FlowState, dt: f64, gauge: Gauge) -> g2flow::Result<PathBuf> {
    let meta = CheckpointMeta { step: state.step, t: state.t, dt, kind: state.kind, gauge };
    write_field(dir, &format!("step_{:08}", state.step), state.structure.phi(), serde_json::to_value(meta)?)
}

/// The checkpoint with the largest step in `dir`, if any.
pub fn latest_checkpoint(dir: &Path) -> Option<PathBuf> {
    let mut best: Option<(usize, PathBuf)> = None;
    for entry in fs::read_dir(dir).ok()?.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(step) = name.strip_prefix("step_").and_then(|s| s.strip_suffix(".json")).and_then(|s| s.parse::<usize>().ok()) else {
            continue;
        };
        if best.as_ref().is_none_or(|(b, _)| step > *b) {
            best = Some((step, entry.path()));
        }
    }
    best.map(|(_, p)| p)
}

/// Keeps the lines of a JSON-lines file whose `step` satisfies `keep`.
fn truncate_jsonl(path: &Path, keep: impl Fn(usize) -> bool) -> Result<(), CliError> {
    if !path.exists() {
        return Ok(());
    }
    #[derive(Deserialize)]
    struct Step {
        step: usize,
    }
    let mut kept = String::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        let rec: Step = serde_json::from_str(&line).map_err(|e| CliError::Integration(format!("corrupt {}: {e}", path.display())))?;
        if keep(rec.step) {
            kept.push_str(&line);
            kept.push('\n');
        }
    }
    fs::write(path, kept)?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        out.push(serde_json::from_str(&line?).map_err(|e| CliError::Integration(format!("corrupt {}: {e}", path.display())))?);
    }
    Ok(out)
}

/// Restores the state stored in a checkpoint.
fn resume_state(path: &Path, prepared: &Prepared) -> Result<(FlowState, f64), CliError> {
    let (phi, sidecar) = read_field(path, Some(&prepared.lattice))?;
    let meta: CheckpointMeta =
        serde_json::from_value(sidecar.meta).map_err(|e| CliError::Integration(format!("checkpoint metadata: {e}")))?;
    if meta.kind != prepared.config.kind || meta.gauge != prepared.gauge {
        return Err(CliError::Config("checkpoint was written by a run with a different flow kind or gauge".into()));
    }
    let structure = G2Structure::new(phi)?;
    let mut state = FlowState::new(structure, prepared.reference.clone(), meta.kind);
    state.gauge = meta.gauge;
    state.t = meta.t;
    state.step = meta.step;
    Ok((state, meta.dt))
}

/// Runs the configured flow, resuming from the latest checkpoint when
/// asked and one exists.
pub fn cmd_flow(config: RunConfig, resume: bool) -> Result<FlowSummary, CliError> {
    let prepared = config.prepare()?;
    let dir = prepared.config.output.dir.clone();
    fs::create_dir_all(&dir)?;
    let ckpt_dir = dir.join(CHECKPOINTS);
    let (series_path, steps_path, config_path) = (dir.join(SERIES), dir.join(STEPS), dir.join(CONFIG_COPY));

    let resume_from = if resume { latest_checkpoint(&ckpt_dir) } else { None };
    let (state, dt) = match &resume_from {
        Some(path) => {
            let stored = RunConfig::load(&config_path)?;
            if stored != prepared.config {
                return Err(CliError::Config(format!("{} differs from the run being resumed", config_path.display())));
            }
            let (state, dt) = resume_state(path, &prepared)?;
            let step = state.step;
            truncate_jsonl(&series_path, |s| s < step)?;
            truncate_jsonl(&steps_path, |s| s <= step)?;
            (state, Some(dt))
        }
        None => {
            if ckpt_dir.exists() {
                fs::remove_dir_all(&ckpt_dir)?;
            }
            for p in [&series_path, &steps_path, &dir.join(SUMMARY), &dir.join(PLOT)] {
                if p.exists() {
                    fs::remove_file(p)?;
                }
            }
            fs::write(&config_path, prepared.config.to_json())?;
            let mut state = FlowState::new(prepared.initial.clone(), prepared.reference.clone(), prepared.config.kind);
            state.gauge = prepared.gauge;
            (state, None)
        }
    };
    let dt_now = dt.unwrap_or_else(|| prepared.control.resolve_dt(&state.structure));
    let start_checkpoint = match resume_from {
        Some(p) => p,
        None => write_checkpoint(&ckpt_dir, &state, dt_now, prepared.gauge)?,
    };

    let mut sink = DiskSink { series: append(&series_path)?, steps: append(&steps_path)?, checkpoints: ckpt_dir.clone(), gauge: prepared.gauge };
    let result = run_flow(state, &prepared.control, Some(dt_now), &mut sink);
    sink.series.flush()?;
    sink.steps.flush()?;
    drop(sink);
    let outcome = result.map_err(|e| match e {
        g2flow::Error::StepFailed { t, halvings, reason, checkpoint } => {
            g2flow::Error::StepFailed { t, halvings, reason, checkpoint: checkpoint.or(Some(start_checkpoint)) }
        }
        other => other,
    })?;
    write_checkpoint(&ckpt_dir, &outcome.state, outcome.dt, prepared.gauge)?;

    let summary = summarize(&prepared, outcome.stop, outcome.dt, &read_jsonl(&series_path)?, &read_jsonl(&steps_path)?)?;
    fs::write(dir.join(SUMMARY), serde_json::to_string_pretty(&summary).map_err(|e| CliError::Integration(e.to_string()))?)?;
    if prepared.config.output.plot {
        let series: Vec<(f64, f64)> = read_jsonl::<TimeSeriesRecord>(&series_path)?.iter().map(|r| (r.t, r.l2_theta)).collect();
        let title = format!("{:?} flow, n = {}, dt = {:.3e}", prepared.config.kind, prepared.lattice.n(), outcome.dt);
        fs::write(dir.join(PLOT), decay_svg(&series, &title))?;
    }
    Ok(summary)
}

fn min_step_change(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    v.windows(2).map(|w| w[1] - w[0]).reduce(f64::min)
}

fn summarize(prepared: &Prepared, stop: StopReason, dt: f64, records: &[TimeSeriesRecord], steps: &[StepRecord]) -> Result<FlowSummary, CliError> {
    let initial = records.first().cloned().ok_or_else(|| CliError::Integration("empty series".into()))?;
    let last = records.last().cloned().expect("non-empty");
    let lambda1 = lambda1_exact_forms(&prepared.lattice);
    let series: Vec<(f64, f64)> = records.iter().map(|r| (r.t, r.l2_theta)).collect();
    let (fit, fit_note) = if initial.l2_theta == 0.0 {
        (None, Some("initial perturbation is zero".to_string()))
    } else {
        match fit_decay_rate(&series, tail_window(&series), lambda1) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        }
    };
    let bound_ratio_max = (initial.l2_theta > 0.0).then(|| {
        records.iter().map(|r| r.l2_theta / ((-lambda1 * r.t / 2.0).exp() * initial.l2_theta)).fold(0.0, f64::max)
    });
    // the initial state precedes the first accepted step
    let h0 = hitchin_functional_wedge(&prepared.initial);
    let v0 = hitchin_functional(&prepared.initial);
    let from_start = steps.first().is_none_or(|s| s.step == 1);
    let h_iter = from_start.then_some(h0).into_iter().chain(steps.iter().map(|s| s.hitchin_h));
    let v_iter = from_start.then_some(v0).into_iter().chain(steps.iter().map(|s| s.total_volume));
    let max = |f: fn(&TimeSeriesRecord) -> f64| records.iter().map(f).fold(0.0, f64::max);
    Ok(FlowSummary {
        kind: prepared.config.kind,
        gauge: prepared.gauge,
        stop,
        steps: last.step.max(steps.last().map_or(0, |s| s.step)),
        dt,
        t_final: steps.last().map_or(last.t, |s| s.t.max(last.t)),
        samples: records.len(),
        lambda1,
        bound_rate: lambda1 / 2.0,
        linearized_rate: 2.0 * lambda1,
        fit_samples: fit.as_ref().map_or(0, |f| f.samples),
        fit,
        fit_note,
        bound_ratio_max,
        theta_zero: last.l2_theta == 0.0,
        final_c0_theta: last.ck_theta[0],
        hitchin_min_step_change: min_step_change(h_iter),
        volume_min_step_change: min_step_change(v_iter),
        max_harmonic_residual: max(|r| r.harmonic_residual),
        max_rhs_cross_residual: max(|r| r.rhs_cross_residual),
        max_metric_log_band: max(|r| r.metric_log_band),
        initial,
        last,
    })
}

/// Result of the `perturb` subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbReport {
    pub checkpoint: PathBuf,
    pub l2_theta: f64,
    pub c0_theta: f64,
    pub max_closedness: f64,
}

/// Validates the configuration and writes the initial structure as a
/// checkpoint without running.
pub fn cmd_perturb(config: RunConfig) -> Result<PerturbReport, CliError> {
    let prepared = config.prepare()?;
    let mut state = FlowState::new(prepared.initial.clone(), prepared.reference.clone(), prepared.config.kind);
    state.gauge = prepared.gauge;
    let dt = prepared.control.resolve_dt(&state.structure);
    let meta = CheckpointMeta { step: 0, t: 0.0, dt, kind: state.kind, gauge: state.gauge };
    let path = write_field(
        &prepared.config.output.dir,
        "initial",
        state.structure.phi(),
        serde_json::to_value(meta).map_err(|e| CliError::Integration(e.to_string()))?,
    )?;
    let theta = state.theta();
    Ok(PerturbReport {
        checkpoint: path,
        l2_theta: g2flow::flow::theta_l2_squared(&state),
        c0_theta: g2flow::diagnostics::ck_norms(&theta)[0],
        max_closedness: state.structure.phi().exterior_derivative().max_abs(),
    })
}

/// Analytic and discrete values of `λ₁`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub lambda1_analytic: f64,
    pub lambda1_discrete: f64,
    pub difference: f64,
    pub tolerance: f64,
}

pub const SPECTRUM_TOL: f64 = 1e-8;

/// Compares `(2π/L)²` with the discrete Rayleigh quotient of the lowest
/// exact mode; fails when they differ by more than [`SPECTRUM_TOL`].
pub fn cmd_spectrum(config: RunConfig) -> Result<SpectrumReport, CliError> {
    let lattice = g2flow::lattice::Lattice::from_spec(&config.lattice).map_err(|e| CliError::Config(e.to_string()))?;
    spectrum_of(&lattice)
}

pub fn spectrum_of(lattice: &Arc<g2flow::lattice::Lattice>) -> Result<SpectrumReport, CliError> {
    let analytic = lambda1_exact_forms(lattice);
    let discrete = lowest_rayleigh_quotient(lattice);
    let report = SpectrumReport { lambda1_analytic: analytic, lambda1_discrete: discrete, difference: (analytic - discrete).abs(), tolerance: SPECTRUM_TOL };
    if report.difference.is_nan() || report.difference > SPECTRUM_TOL {
        return Err(CliError::Identity(format!("lambda1 analytic {analytic} vs discrete {discrete}")));
    }
    Ok(report)
}
