//! One interface over every assignment mechanism the harness can run, so
//! the replication loop and the streaming front end stay design-agnostic.

use crate::config::{DesignChoice, ExperimentConfig};
use crate::CliError;
use bwd::baselines::BaselineState;
use bwd::tree::TreeDesign;
use bwd::walk::WalkState;
use bwd::DesignParams;

/// What one assignment produced, in design-neutral terms.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Arm index in 0..k.
    pub group: usize,
    /// Signed label for two-arm walks (+1 = arm 1), absent otherwise.
    pub z: Option<i8>,
    /// Walk increment when the step defined one.
    pub eta: Option<f64>,
    /// True when this step hit a threshold or capacity event.
    pub was_overflow: bool,
}

/// A live design instance for a single replication.
pub enum DesignDriver {
    Walk { state: WalkState, params: DesignParams },
    Tree { tree: TreeDesign },
    Baseline { state: BaselineState, was_fallback: bool },
}

impl DesignDriver {
    /// Instantiates the configured design with the given stream seed.
    /// `External` has no driver; the runner scores its file directly.
    pub fn build(config: &ExperimentConfig, seed: u64) -> Result<Self, CliError> {
        let d = config.d();
        match config.design {
            DesignChoice::Bwd if config.k == 2 => {
                let params = DesignParams::new(
                    config.n,
                    d,
                    config.q(),
                    config.phi,
                    config.delta,
                    config.policy,
                )
                .map_err(|e| CliError::Config(e.to_string()))?;
                Ok(DesignDriver::Walk { state: WalkState::new(d, seed), params })
            }
            DesignChoice::Bwd => {
                let tree = TreeDesign::build(
                    &config.probs,
                    config.n,
                    d,
                    config.phi,
                    config.delta,
                    config.policy,
                    seed,
                )
                .map_err(|e| CliError::Config(e.to_string()))?;
                Ok(DesignDriver::Tree { tree })
            }
            DesignChoice::External => Err(CliError::Config(
                "external assignments are scored from a file, not generated".into(),
            )),
            _ => {
                let kind = config.design.baseline_kind().expect("remaining arms are baselines");
                let mut state =
                    BaselineState::new(kind, &config.probs, config.n, d, config.delta, seed)
                        .map_err(|e| CliError::Config(e.to_string()))?;
                if let Some(bias) = config.efron_bias {
                    state = state
                        .with_efron_bias(bias)
                        .map_err(|e| CliError::Config(e.to_string()))?;
                }
                if let Some(rho) = config.smith_rho {
                    state = state
                        .with_smith_rho(rho)
                        .map_err(|e| CliError::Config(e.to_string()))?;
                }
                Ok(DesignDriver::Baseline { state, was_fallback: false })
            }
        }
    }

    /// Assigns one unit. Covariates must already satisfy the design's norm
    /// contract; violations surface as runtime errors.
    pub fn step(&mut self, x: &[f64]) -> Result<StepOutcome, CliError> {
        match self {
            DesignDriver::Walk { state, params } => {
                let a = state
                    .assign(x, params)
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
                Ok(StepOutcome {
                    group: usize::from(a.z > 0),
                    z: Some(a.z),
                    eta: a.eta,
                    was_overflow: a.was_overflow,
                })
            }
            DesignDriver::Tree { tree } => {
                let a = tree.assign(x).map_err(|e| CliError::Runtime(e.to_string()))?;
                Ok(StepOutcome {
                    group: a.group,
                    z: None,
                    eta: None,
                    was_overflow: a.overflow_on_path,
                })
            }
            DesignDriver::Baseline { state, was_fallback } => {
                let group = state.assign(x).map_err(|e| CliError::Runtime(e.to_string()))?;
                // The only baseline event worth flagging: the Alweiss walk
                // freezing into coin flips. Report it on the transition step.
                let now = state.fallback_active();
                let was_overflow = now && !*was_fallback;
                *was_fallback = now;
                Ok(StepOutcome { group, z: None, eta: None, was_overflow })
            }
        }
    }
}
