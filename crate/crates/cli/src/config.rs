//! Run configuration: a single JSON document.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use g2flow::flow::{perturbed_model, FlowKind, ModePerturbation, StepControl};
use g2flow::g2algebra::G2Structure;
use g2flow::lattice::{Lattice, LatticeSpec};
use g2flow::riemann::Gauge;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: LatticeSpec,
    pub kind: FlowKind,
    /// Terms of the potential `β`; the initial structure is `φ₀ + dβ`.
    #[serde(default)]
    pub perturbations: Vec<ModePerturbation>,
    pub control: ControlConfig,
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
}

/// Time-stepping policy and gauge choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfl_coefficient: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_dt: Option<f64>,
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_halvings: Option<u32>,
    /// Selects the combined gauge vector with this constant; the harmonic
    /// gauge is used when absent.
    #[serde(rename = "deturck_A", default, skip_serializing_if = "Option::is_none")]
    pub deturck_a: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default = "default_plot")]
    pub plot: bool,
}

fn default_sample_every() -> usize {
    10
}

fn default_plot() -> bool {
    true
}

/// A validated configuration with its lattice and structures built.
pub struct Prepared {
    pub config: RunConfig,
    pub lattice: Arc<Lattice>,
    pub reference: Arc<G2Structure>,
    pub initial: G2Structure,
    pub control: StepControl,
    pub gauge: Gauge,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("cannot parse config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn step_control(&self) -> StepControl {
        let c = &self.control;
        let mut s = StepControl::new(c.t_end);
        s.dt = c.dt;
        if let Some(v) = c.cfl_coefficient {
            s.cfl_coefficient = v;
        }
        if let Some(v) = c.max_dt {
            s.max_dt = v;
        }
        if let Some(v) = c.checkpoint_every {
            s.checkpoint_every = v;
        }
        if let Some(v) = c.stop_tolerance {
            s.stop_tolerance = v;
        }
        if let Some(v) = c.max_halvings {
            s.max_halvings = v;
        }
        s.sample_every = self.output.sample_every;
        s
    }

    pub fn gauge(&self) -> Gauge {
        match self.control.deturck_a {
            Some(a) => Gauge::Combined { a },
            None => Gauge::Harmonic,
        }
    }

    fn validate_control(&self) -> Result<(), CliError> {
        let c = self.step_control();
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::Config(format!("control.{name} must be positive and finite, got {v}")))
            }
        };
        if let Some(dt) = c.dt {
            positive("dt", dt)?;
        }
        positive("cfl_coefficient", c.cfl_coefficient)?;
        positive("max_dt", c.max_dt)?;
        if !(c.t_end >= 0.0 && c.t_end.is_finite()) {
            return Err(CliError::Config(format!("control.t_end must be finite and non-negative, got {}", c.t_end)));
        }
        if c.stop_tolerance.is_nan() || c.stop_tolerance < 0.0 {
            return Err(CliError::Config("control.stop_tolerance must be non-negative".into()));
        }
        if c.checkpoint_every == 0 {
            return Err(CliError::Config("control.checkpoint_every must be positive".into()));
        }
        if self.output.sample_every == 0 {
            return Err(CliError::Config("output.sample_every must be positive".into()));
        }
        if let Some(a) = self.control.deturck_a {
            if !a.is_finite() {
                return Err(CliError::Config("control.deturck_A must be finite".into()));
            }
        }
        Ok(())
    }

    /// Checks every field and builds the initial and reference structures.
    pub fn prepare(self) -> Result<Prepared, CliError> {
        self.validate_control()?;
        let lattice = Lattice::from_spec(&self.lattice).map_err(|e| CliError::Config(e.to_string()))?;
        for p in &self.perturbations {
            p.validate(&lattice).map_err(|e| CliError::Config(e.to_string()))?;
        }
        let initial = perturbed_model(&lattice, &self.perturbations)
            .map_err(|e| CliError::Config(format!("initial structure rejected: {e}")))?;
        let reference = Arc::new(G2Structure::model(&lattice));
        Ok(Prepared { control: self.step_control(), gauge: self.gauge(), lattice, reference, initial, config: self })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "lattice": {"active_axes": [1], "n": 16, "period": 6.283185307179586},
        "kind": "deturck",
        "perturbations": [{"mode": [1, 0, 0, 0, 0, 0, 0], "component": [2, 3], "amplitude": 0.001}],
        "control": {"t_end": 1.0},
        "output": {"dir": "out"}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.output.sample_every, 10);
        assert!(c.output.plot);
        assert_eq!(c.seed, 0);
        assert_eq!(c.gauge(), Gauge::Harmonic);
        assert_eq!(c.step_control(), StepControl::new(1.0));
    }

    #[test]
    fn round_trip_is_identity() {
        let mut c = RunConfig::from_json(MINIMAL).unwrap();
        c.control.deturck_a = Some(-0.125);
        c.control.dt = Some(0.01);
        let again = RunConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.gauge(), Gauge::Combined { a: -0.125 });
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = MINIMAL.replace("\"t_end\"", "\"t_stop\": 2, \"t_end\"");
        assert!(matches!(RunConfig::from_json(&bad), Err(CliError::Config(_))));
    }

    #[test]
    fn inactive_modes_and_large_amplitudes_fail_validation() {
        let off_axis = MINIMAL.replace("[1, 0, 0, 0, 0, 0, 0]", "[0, 1, 0, 0, 0, 0, 0]");
        assert!(matches!(RunConfig::from_json(&off_axis).unwrap().prepare(), Err(CliError::Config(_))));
        let huge = MINIMAL.replace("0.001", "50.0");
        let err = RunConfig::from_json(&huge).unwrap().prepare().err().unwrap();
        assert!(err.to_string().contains("not positive"), "{err}");
    }
}
