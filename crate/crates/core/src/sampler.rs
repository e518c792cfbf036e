//! Gradient-descent transport of a white-noise measure onto the
//! microcanonical set `{x : ‖Φ_d(x) − y‖ ≤ ε}`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{EnergySpec, EnergyVector};
use crate::error::{Error, Result};
use crate::grid::{translate, PeriodicSignal};

/// Step sizes `κ_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepSchedule {
    /// `κ_n = step`.
    Constant { step: f64 },
    /// `κ_n = initial / (1 + rate·n)`.
    Decaying { initial: f64, rate: f64 },
    /// Armijo backtracking: accept `κ` once
    /// `E(x − κg) ≤ E(x) − armijo·κ‖g‖²`, shrinking by `shrink` otherwise.
    /// Each search starts from the previous accepted step times `grow`; the
    /// very first one from `E/‖g‖²`.
    Backtracking { armijo: f64, shrink: f64, grow: f64 },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Backtracking {
            armijo: 1e-4,
            shrink: 0.5,
            grow: 2.0,
        }
    }
}

impl StepSchedule {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Constant { step } => step > 0.0 && step.is_finite(),
            StepSchedule::Decaying { initial, rate } => {
                initial > 0.0 && initial.is_finite() && rate >= 0.0 && rate.is_finite()
            }
            StepSchedule::Backtracking { armijo, shrink, grow } => {
                armijo > 0.0 && armijo < 1.0 && shrink > 0.0 && shrink < 1.0 && grow >= 1.0 && grow.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid step schedule {self:?}")))
        }
    }
}

/// Stopping threshold on `‖Φ_d(x) − y‖`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tolerance {
    Absolute(f64),
    /// `ε = r·‖y‖`.
    Relative(f64),
}

impl Tolerance {
    pub fn resolve(self, y: &EnergyVector) -> f64 {
        match self {
            Tolerance::Absolute(eps) => eps,
            Tolerance::Relative(r) => r * y.norm(),
        }
    }

    fn validate(self) -> Result<()> {
        let (Tolerance::Absolute(v) | Tolerance::Relative(v)) = self;
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("tolerance must be positive, got {v}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescentConfig {
    pub max_iters: usize,
    pub schedule: StepSchedule,
    pub tolerance: Tolerance,
    pub seed: u64,
    pub record_trace: bool,
    /// Abort once `E(x_n)` exceeds this multiple of `E(x_0)`.
    pub divergence_factor: f64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            schedule: StepSchedule::default(),
            tolerance: Tolerance::Relative(1e-2),
            seed: 0,
            record_trace: true,
            divergence_factor: 10.0,
        }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.tolerance.validate()?;
        if !(self.divergence_factor > 1.0) {
            return Err(Error::Config("divergence_factor must exceed 1".into()));
        }
        Ok(())
    }
}

/// State at iteration `n`; `kappa` is the step taken from `x_n`, zero on the
/// final row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub kappa: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DescentTrace {
    pub rows: Vec<TraceRow>,
    /// Steps actually taken.
    pub iterations: usize,
    /// `‖Φ_d(x) − y‖` at the returned state.
    pub final_distance: f64,
    pub target_norm: f64,
    pub converged: bool,
}

impl DescentTrace {
    pub fn relative_distance(&self) -> f64 {
        self.final_distance / self.target_norm
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let map = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["iter", "E", "grad_norm", "kappa"]).map_err(map)?;
        for r in &self.rows {
            w.write_record([
                r.iter.to_string(),
                format!("{:e}", r.objective),
                format!("{:e}", r.grad_norm),
                format!("{:e}", r.kappa),
            ])
            .map_err(map)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))?;
        Ok(())
    }
}

/// Per-iteration batch summary: `r_n = mean √E(x_n)` and the mean step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BatchTrace {
    pub r: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl BatchTrace {
    /// Trajectories that stopped early keep contributing their final state
    /// with zero step.
    pub fn merge(traces: &[DescentTrace]) -> Result<Self> {
        if traces.is_empty() || traces.iter().any(|t| t.rows.is_empty()) {
            return Err(Error::Degenerate("batch trace needs recorded rows".into()));
        }
        let len = traces.iter().map(|t| t.rows.len()).max().unwrap_or(0);
        let count = traces.len() as f64;
        let mut r = vec![0.0; len];
        let mut kappa = vec![0.0; len];
        for t in traces {
            for n in 0..len {
                let row = t.rows.get(n).copied().unwrap_or(TraceRow {
                    kappa: 0.0,
                    ..*t.rows.last().expect("non-empty")
                });
                r[n] += row.objective.sqrt() / count;
                kappa[n] += row.kappa / count;
            }
        }
        Ok(Self { r, kappa })
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// I.i.d. Gaussian white noise with the empirical mean and variance of `x̄`;
/// sample `i` uses its own stream of `seed`.
pub fn init_white_noise(reference: &PeriodicSignal, count: usize, seed: u64) -> Result<Vec<PeriodicSignal>> {
    if count == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let mean = reference.mean();
    let variance = reference.variance();
    if !(variance > 0.0) {
        return Err(Error::Degenerate(
            "reference signal is constant; the initial white noise would have zero variance".into(),
        ));
    }
    let normal = Normal::new(mean, variance.sqrt()).map_err(|e| Error::Degenerate(e.to_string()))?;
    let shape = reference.shape();
    Ok((0..count)
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let values = (0..shape.len()).map(|_| normal.sample(&mut rng)).collect();
            PeriodicSignal::from_raw(shape, values)
        })
        .collect())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|g| g * g).sum::<f64>().sqrt()
}

fn step(x: &[f64], g: &[f64], kappa: f64) -> Vec<f64> {
    x.iter().zip(g).map(|(a, b)| a - kappa * b).collect()
}

/// Iterate `x_{n+1} = x_n − κ_n ∇E(x_n)` until `‖Φ_d(x_n) − y‖ ≤ ε` or
/// `max_iters` steps.
pub fn descend(
    x0: &PeriodicSignal,
    y: &EnergyVector,
    spec: &EnergySpec,
    cfg: &DescentConfig,
) -> Result<(PeriodicSignal, DescentTrace)> {
    cfg.validate()?;
    let shape = spec.shape();
    let eps = cfg.tolerance.resolve(y);
    let mut eval = spec.evaluate(x0, y)?;
    let mut x = x0.values().to_vec();
    let initial = eval.objective;
    let mut trace = DescentTrace {
        target_norm: y.norm(),
        ..DescentTrace::default()
    };
    let mut last_kappa: Option<f64> = None;
    let diverged = |n: usize, e: f64| -> Result<()> {
        if !e.is_finite() {
            return Err(Error::Divergence {
                iteration: n,
                reason: "objective is not finite; the step schedule is too aggressive".into(),
            });
        }
        if e > cfg.divergence_factor * initial {
            return Err(Error::Divergence {
                iteration: n,
                reason: format!(
                    "objective {e:.3e} exceeds {} times its initial value {initial:.3e}",
                    cfg.divergence_factor
                ),
            });
        }
        Ok(())
    };
    diverged(0, initial)?;

    let mut n = 0;
    loop {
        let e = eval.objective;
        let grad_norm = norm(eval.gradient.values());
        let reached = (2.0 * e).sqrt() <= eps;
        if reached || n >= cfg.max_iters || grad_norm == 0.0 {
            trace.converged = reached;
            if cfg.record_trace {
                trace.rows.push(TraceRow {
                    iter: n,
                    objective: e,
                    grad_norm,
                    kappa: 0.0,
                });
            }
            break;
        }
        let g = eval.gradient.values();
        let (kappa, next) = match cfg.schedule {
            StepSchedule::Constant { step: k } => {
                let xn = step(&x, g, k);
                let ev = spec.finish(spec.forward(&xn, true), y);
                (k, Some((xn, ev)))
            }
            StepSchedule::Decaying { initial: k0, rate } => {
                let k = k0 / (1.0 + rate * n as f64);
                let xn = step(&x, g, k);
                let ev = spec.finish(spec.forward(&xn, true), y);
                (k, Some((xn, ev)))
            }
            StepSchedule::Backtracking { armijo, shrink, grow } => {
                let gg = grad_norm * grad_norm;
                let mut k = last_kappa.map_or(e / gg, |k| k * grow);
                let mut accepted = None;
                // 200 halvings span every representable step size
                for _ in 0..200 {
                    let xn = step(&x, g, k);
                    let (trial, forward) = spec.forward_objective(&xn, y);
                    if trial <= e - armijo * k * gg {
                        accepted = Some((xn, spec.finish(forward, y)));
                        break;
                    }
                    k *= shrink;
                    if k * grad_norm <= f64::EPSILON * norm(&x).max(f64::MIN_POSITIVE) {
                        break;
                    }
                }
                (k, accepted)
            }
        };
        let Some((xn, ev)) = next else {
            // no step decreases E at machine precision: a stationary point
            trace.converged = false;
            if cfg.record_trace {
                trace.rows.push(TraceRow {
                    iter: n,
                    objective: e,
                    grad_norm,
                    kappa: 0.0,
                });
            }
            break;
        };
        if cfg.record_trace {
            trace.rows.push(TraceRow {
                iter: n,
                objective: e,
                grad_norm,
                kappa,
            });
        }
        n += 1;
        diverged(n, ev.objective)?;
        last_kappa = Some(kappa);
        x = xn;
        eval = ev;
    }
    trace.iterations = n;
    trace.final_distance = (2.0 * eval.objective).sqrt();
    Ok((PeriodicSignal::from_raw(shape, x), trace))
}

/// Output of [`synthesize`].
#[derive(Clone, Debug)]
pub struct Synthesis {
    pub target: EnergyVector,
    pub samples: Vec<PeriodicSignal>,
    pub traces: Vec<DescentTrace>,
}

/// Fit `y = Φ_d(x̄)` and transport `count` white-noise samples onto it,
/// concurrently and independently.
pub fn synthesize(
    reference: &PeriodicSignal,
    spec: &EnergySpec,
    count: usize,
    cfg: &DescentConfig,
) -> Result<Synthesis> {
    cfg.validate()?;
    let target = spec.eval_phi(reference)?;
    let init = init_white_noise(reference, count, cfg.seed)?;
    let results: Vec<(PeriodicSignal, DescentTrace)> = init
        .par_iter()
        .map(|x0| descend(x0, &target, spec, cfg))
        .collect::<Result<_>>()?;
    let (samples, traces) = results.into_iter().unzip();
    Ok(Synthesis {
        target,
        samples,
        traces,
    })
}

/// `max |descend(T_τ x₀) − T_τ descend(x₀)|`.
pub fn check_shift_equivariance(
    x0: &PeriodicSignal,
    offset: &[isize],
    y: &EnergyVector,
    spec: &EnergySpec,
    cfg: &DescentConfig,
) -> Result<f64> {
    let (direct, _) = descend(x0, y, spec, cfg)?;
    let (shifted, _) = descend(&translate(x0, offset), y, spec, cfg)?;
    let expected = translate(&direct, offset);
    Ok(shifted
        .values()
        .iter()
        .zip(expected.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Shape;

    #[test]
    fn constant_reference_is_rejected() {
        let x = PeriodicSignal::new(Shape::line(8).unwrap(), vec![2.0; 8]).unwrap();
        assert!(matches!(init_white_noise(&x, 3, 0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = DescentConfig {
            schedule: StepSchedule::Constant { step: 0.0 },
            ..DescentConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.schedule = StepSchedule::default();
        cfg.tolerance = Tolerance::Absolute(-1.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_from_toml() {
        let cfg: DescentConfig = toml::from_str(
            "max_iters = 20\nseed = 3\ntolerance = { absolute = 1e-3 }\n[schedule]\nkind = \"constant\"\nstep = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.max_iters, 20);
        assert_eq!(cfg.schedule, StepSchedule::Constant { step: 0.5 });
        assert_eq!(cfg.tolerance, Tolerance::Absolute(1e-3));
        assert_eq!(cfg.divergence_factor, 10.0);
    }

    #[test]
    fn merged_trace_pads_finished_runs() {
        let row = |iter, objective: f64, kappa| TraceRow {
            iter,
            objective,
            grad_norm: 1.0,
            kappa,
        };
        let a = DescentTrace {
            rows: vec![row(0, 4.0, 0.5), row(1, 1.0, 0.0)],
            ..Default::default()
        };
        let b = DescentTrace {
            rows: vec![row(0, 16.0, 0.25), row(1, 9.0, 0.25), row(2, 4.0, 0.0)],
            ..Default::default()
        };
        let m = BatchTrace::merge(&[a, b]).unwrap();
        assert_eq!(m.r, vec![3.0, 2.0, 1.5]);
        assert_eq!(m.kappa, vec![0.375, 0.125, 0.0]);
    }
}
