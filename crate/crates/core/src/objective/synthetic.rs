//! Closed-form test surfaces with known optima.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{config_hash, EvalFailure, Objective, ObjectiveError};
use crate::space::{Configuration, SearchSpace, VariableSpec};

/// Global minimum value of the Branin function.
pub const BRANIN_MINIMUM: f64 = 0.397887;

/// Nominal cost charged per synthetic evaluation, in seconds.
const SYNTHETIC_COST: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    ConditionalQuadratic,
    Branin,
    SeparableQuadratic,
}

/// One arm of the conditional quadratic: loss = offset + (u - u*)² + (v - v*)².
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub name: String,
    pub offset: f64,
    pub optimum: (f64, f64),
}

impl ArmSpec {
    pub fn new(name: &str, offset: f64, optimum: (f64, f64)) -> Self {
        Self {
            name: name.to_string(),
            offset,
            optimum,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    /// Arms of the conditional quadratic.
    #[serde(default)]
    pub arms: Vec<ArmSpec>,
    /// Optimum of the first variable group (`y0, y1, …`) of the separable quadratic.
    #[serde(default)]
    pub y_optimum: Vec<f64>,
    /// Optimum of the second variable group (`z0, z1, …`).
    #[serde(default)]
    pub z_optimum: Vec<f64>,
    /// Standard deviation of additive Gaussian observation noise.
    #[serde(default)]
    pub noise: f64,
}

#[derive(Clone, Debug)]
pub struct SyntheticObjective {
    name: String,
    kind: SyntheticKind,
    params: SyntheticParams,
    space: SearchSpace,
}

impl SyntheticObjective {
    pub fn new(name: &str, kind: SyntheticKind, params: SyntheticParams) -> Result<Self, ObjectiveError> {
        if !(params.noise >= 0.0) || !params.noise.is_finite() {
            return Err(ObjectiveError::InvalidParams(format!("noise sigma {} < 0", params.noise)));
        }
        let space = match kind {
            SyntheticKind::ConditionalQuadratic => {
                if params.arms.is_empty() {
                    return Err(ObjectiveError::InvalidParams("conditional quadratic needs arms".into()));
                }
                let mut names: Vec<&str> = params.arms.iter().map(|a| a.name.as_str()).collect();
                names.sort_unstable();
                if names.windows(2).any(|w| w[0] == w[1]) {
                    return Err(ObjectiveError::InvalidParams("duplicate arm names".into()));
                }
                let choices: Vec<&str> = params.arms.iter().map(|a| a.name.as_str()).collect();
                SearchSpace::new(
                    name,
                    vec![
                        VariableSpec::cat("arm", &choices),
                        VariableSpec::real("u", -5.0, 5.0),
                        VariableSpec::real("v", -5.0, 5.0),
                    ],
                )?
                .with_roles(Some("arm"), &["u"])?
            }
            SyntheticKind::Branin => SearchSpace::new(
                name,
                vec![VariableSpec::real("x1", -5.0, 10.0), VariableSpec::real("x2", 0.0, 15.0)],
            )?,
            SyntheticKind::SeparableQuadratic => {
                if params.y_optimum.is_empty() || params.z_optimum.is_empty() {
                    return Err(ObjectiveError::InvalidParams(
                        "separable quadratic needs both variable groups".into(),
                    ));
                }
                let ys: Vec<String> = (0..params.y_optimum.len()).map(|i| format!("y{i}")).collect();
                let zs: Vec<String> = (0..params.z_optimum.len()).map(|i| format!("z{i}")).collect();
                let vars = ys.iter().chain(&zs).map(|n| VariableSpec::real(n, -5.0, 5.0)).collect();
                let features: Vec<&str> = ys.iter().map(String::as_str).collect();
                SearchSpace::new(name, vars)?.with_roles(None, &features)?
            }
        };
        Ok(Self {
            name: name.to_string(),
            kind,
            params,
            space,
        })
    }

    pub fn kind(&self) -> SyntheticKind {
        self.kind
    }

    pub fn params(&self) -> &SyntheticParams {
        &self.params
    }

    /// Noiseless loss.
    pub fn true_loss(&self, config: &Configuration) -> Result<f64, EvalFailure> {
        let num = |name: &str| {
            config
                .get(name)
                .and_then(|v| v.as_f64())
                .ok_or_else(|| EvalFailure::failed(format!("missing numeric variable `{name}`")))
        };
        match self.kind {
            SyntheticKind::ConditionalQuadratic => {
                let arm_name = config
                    .get("arm")
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| EvalFailure::failed("missing `arm`"))?;
                let arm = self
                    .params
                    .arms
                    .iter()
                    .find(|a| a.name == arm_name)
                    .ok_or_else(|| EvalFailure::failed(format!("unknown arm `{arm_name}`")))?;
                let (u, v) = (num("u")?, num("v")?);
                Ok(arm.offset + (u - arm.optimum.0).powi(2) + (v - arm.optimum.1).powi(2))
            }
            SyntheticKind::Branin => Ok(branin(num("x1")?, num("x2")?)),
            SyntheticKind::SeparableQuadratic => {
                let mut total = 0.0;
                for (i, opt) in self.params.y_optimum.iter().enumerate() {
                    total += (num(&format!("y{i}"))? - opt).powi(2);
                }
                for (i, opt) in self.params.z_optimum.iter().enumerate() {
                    total += (num(&format!("z{i}"))? - opt).powi(2);
                }
                Ok(total)
            }
        }
    }

    /// Known global minimum of the noiseless surface.
    pub fn optimum_loss(&self) -> f64 {
        match self.kind {
            SyntheticKind::ConditionalQuadratic => self
                .params
                .arms
                .iter()
                .map(|a| a.offset)
                .fold(f64::INFINITY, f64::min),
            SyntheticKind::Branin => BRANIN_MINIMUM,
            SyntheticKind::SeparableQuadratic => 0.0,
        }
    }
}

impl Objective for SyntheticObjective {
    fn name(&self) -> &str {
        &self.name
    }

    fn space(&self) -> &SearchSpace {
        &self.space
    }

    fn evaluate(&self, config: &Configuration, _fidelity: f64, seed: u64) -> Result<f64, EvalFailure> {
        let loss = self.true_loss(config)?;
        if self.params.noise == 0.0 {
            return Ok(loss);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ config_hash(config));
        let noise = Normal::new(0.0, self.params.noise).expect("valid sigma");
        Ok(loss + noise.sample(&mut rng))
    }

    fn cost_estimate(&self, _config: &Configuration) -> Option<f64> {
        Some(SYNTHETIC_COST)
    }

    fn loss_floor(&self) -> Option<f64> {
        // additive noise can undershoot the noiseless minimum
        (self.params.noise == 0.0).then(|| self.optimum_loss())
    }
}

/// The standard Branin–Hoo function on [-5, 10] × [0, 15].
pub fn branin(x1: f64, x2: f64) -> f64 {
    let a = 1.0;
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let r = 6.0;
    let s = 10.0;
    let t = 1.0 / (8.0 * PI);
    a * (x2 - b * x1 * x1 + c * x1 - r).powi(2) + s * (1.0 - t) * x1.cos() + s
}

fn conditional(name: &str, arms: Vec<ArmSpec>, noise: f64) -> SyntheticObjective {
    SyntheticObjective::new(
        name,
        SyntheticKind::ConditionalQuadratic,
        SyntheticParams {
            arms,
            noise,
            ..Default::default()
        },
    )
    .expect("bundled benchmark is valid")
}

/// Names accepted by [`benchmark`].
pub fn benchmark_names() -> Vec<&'static str> {
    let mut names = vec![
        "conditional_quadratic_3",
        "conditional_quadratic_adversarial",
        "separable_quadratic",
        "branin",
    ];
    names.extend(SUITE_NAMES);
    names
}

const SUITE_NAMES: [&str; 6] = ["suite_cq3", "suite_cq4", "suite_cq5", "suite_cq3_noisy", "suite_cq4_far", "suite_cq6"];

/// Bundled synthetic benchmarks by name.
pub fn benchmark(name: &str) -> Option<SyntheticObjective> {
    let arm = ArmSpec::new;
    Some(match name {
        "conditional_quadratic_3" => conditional(
            name,
            vec![
                arm("a1", 0.0, (1.0, -1.0)),
                arm("a2", 0.5, (-2.0, 1.5)),
                arm("a3", 1.0, (0.5, 2.0)),
            ],
            0.0,
        ),
        // defaults (u, v) = (0, 0) rank a2 first although a1 holds the optimum
        "conditional_quadratic_adversarial" => conditional(
            name,
            vec![
                arm("a1", 0.0, (3.5, 3.5)),
                arm("a2", 0.5, (0.0, 0.0)),
                arm("a3", 1.0, (0.5, -0.5)),
            ],
            0.0,
        ),
        "separable_quadratic" => SyntheticObjective::new(
            name,
            SyntheticKind::SeparableQuadratic,
            SyntheticParams {
                y_optimum: vec![1.5, -2.0],
                z_optimum: vec![-1.0, 0.5],
                ..Default::default()
            },
        )
        .expect("valid"),
        "branin" => SyntheticObjective::new(name, SyntheticKind::Branin, SyntheticParams::default()).expect("valid"),
        "suite_cq3" => conditional(
            name,
            vec![
                arm("a1", 0.2, (2.0, 1.0)),
                arm("a2", 0.0, (-1.5, -2.5)),
                arm("a3", 0.6, (0.0, 3.0)),
            ],
            0.0,
        ),
        "suite_cq4" => conditional(
            name,
            vec![
                arm("a1", 0.9, (0.0, 0.0)),
                arm("a2", 0.6, (1.0, 1.0)),
                arm("a3", 0.3, (-3.0, 2.0)),
                arm("a4", 0.0, (2.5, -3.5)),
            ],
            0.0,
        ),
        "suite_cq5" => conditional(
            name,
            vec![
                arm("a1", 0.4, (-1.0, 1.0)),
                arm("a2", 0.8, (3.0, 3.0)),
                arm("a3", 0.0, (1.0, -4.0)),
                arm("a4", 1.2, (-4.0, -1.0)),
                arm("a5", 1.6, (0.5, 0.5)),
            ],
            0.0,
        ),
        "suite_cq3_noisy" => conditional(
            name,
            vec![
                arm("a1", 0.0, (-2.0, 2.0)),
                arm("a2", 0.5, (2.0, -2.0)),
                arm("a3", 1.0, (0.0, 0.0)),
            ],
            0.01,
        ),
        "suite_cq4_far" => conditional(
            name,
            vec![
                arm("a1", 0.0, (4.0, -4.0)),
                arm("a2", 0.25, (-4.0, 4.0)),
                arm("a3", 0.5, (4.0, 4.0)),
                arm("a4", 0.75, (-4.0, -4.0)),
            ],
            0.0,
        ),
        "suite_cq6" => conditional(
            name,
            (0..6)
                .map(|i| {
                    let t = i as f64;
                    ArmSpec::new(&format!("a{}", i + 1), 0.3 * ((i + 3) % 6) as f64, (3.0 * (t * 1.3).sin(), 3.0 * (t * 0.7).cos()))
                })
                .collect(),
            0.0,
        ),
        _ => return None,
    })
}

/// The six-task conditional suite used for plan comparison.
pub fn synthetic_suite() -> Vec<SyntheticObjective> {
    SUITE_NAMES.iter().map(|n| benchmark(n).expect("suite member")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(pairs: &[(&str, crate::space::Value)]) -> Configuration {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn conditional_quadratic_minimum() {
        let obj = benchmark("conditional_quadratic_3").unwrap();
        let c = cfg(&[("arm", "a1".into()), ("u", 1.0.into()), ("v", (-1.0).into())]);
        assert_eq!(obj.evaluate(&c, 1.0, 0).unwrap(), 0.0);
        assert_eq!(obj.optimum_loss(), 0.0);
        let other = cfg(&[("arm", "a2".into()), ("u", (-2.0).into()), ("v", 1.5.into())]);
        assert_eq!(obj.evaluate(&other, 1.0, 0).unwrap(), 0.5);
    }

    #[test]
    fn branin_at_known_minimizer() {
        assert!((branin(PI, 2.275) - BRANIN_MINIMUM).abs() < 1e-4);
        assert!((branin(-PI, 12.275) - BRANIN_MINIMUM).abs() < 1e-4);
    }

    #[test]
    fn separable_at_optimum() {
        let obj = benchmark("separable_quadratic").unwrap();
        let c = cfg(&[
            ("y0", 1.5.into()),
            ("y1", (-2.0).into()),
            ("z0", (-1.0).into()),
            ("z1", 0.5.into()),
        ]);
        assert_eq!(obj.evaluate(&c, 1.0, 9).unwrap(), 0.0);
        assert_eq!(obj.space().feature_variables(), &["y0".to_string(), "y1".to_string()]);
    }

    #[test]
    fn rejects_duplicate_arms_and_negative_noise() {
        let dup = SyntheticParams {
            arms: vec![ArmSpec::new("a", 0.0, (0.0, 0.0)), ArmSpec::new("a", 1.0, (0.0, 0.0))],
            ..Default::default()
        };
        assert!(SyntheticObjective::new("d", SyntheticKind::ConditionalQuadratic, dup).is_err());
        let neg = SyntheticParams {
            noise: -1.0,
            ..Default::default()
        };
        assert!(SyntheticObjective::new("n", SyntheticKind::Branin, neg).is_err());
    }

    #[test]
    fn noisy_mean_converges() {
        let sigma = 0.3;
        let obj = SyntheticObjective::new(
            "noisy",
            SyntheticKind::ConditionalQuadratic,
            SyntheticParams {
                arms: vec![ArmSpec::new("a", 0.25, (0.0, 0.0))],
                noise: sigma,
                ..Default::default()
            },
        )
        .unwrap();
        let c = cfg(&[("arm", "a".into()), ("u", 0.5.into()), ("v", 0.0.into())]);
        let truth = obj.true_loss(&c).unwrap();
        let mean = (0..1000).map(|s| obj.evaluate(&c, 1.0, s).unwrap()).sum::<f64>() / 1000.0;
        assert!((mean - truth).abs() <= 4.0 * sigma / 1000f64.sqrt(), "{mean} vs {truth}");
        assert_eq!(obj.evaluate(&c, 1.0, 5).unwrap(), obj.evaluate(&c, 1.0, 5).unwrap());
        assert_eq!(obj.loss_floor(), None);
    }

    #[test]
    fn suite_has_six_conditional_tasks() {
        let suite = synthetic_suite();
        assert_eq!(suite.len(), 6);
        for task in &suite {
            assert_eq!(task.space().algorithm_variable(), Some("arm"));
        }
        for name in benchmark_names() {
            assert!(benchmark(name).is_some(), "{name}");
        }
    }
}
