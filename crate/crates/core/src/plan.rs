//! Execution plans: trees of blocks built from a coarse shape, the recursive
//! executor, plan enumeration, and the progressive (top-down) strategy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::{Block, BlockError, BlockParams, Budget, Directive, Evaluator, Record};
use crate::objective::Objective;
use crate::space::{Configuration, Domain, SearchSpace, SpaceError, Value};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("invalid plan ({rule}): {detail}")]
    Invalid { rule: &'static str, detail: String },
    #[error("cannot enumerate plans: {0}")]
    Enumeration(String),
    #[error("no successful evaluation in {evaluations} attempts; last failure: {last_failure}")]
    NoSuccess { evaluations: usize, last_failure: String },
    #[error("progressive strategy: {0}")]
    Progressive(String),
    #[error(transparent)]
    Block(#[from] BlockError),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

fn invalid(rule: &'static str, detail: impl Into<String>) -> PlanError {
    PlanError::Invalid {
        rule,
        detail: detail.into(),
    }
}

/// Coarse plan shapes. `Custom` carries an explicit tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PlanShape {
    J,
    C,
    A,
    AC,
    CA,
    Custom(PlanNode),
}

/// Explicit plan tree. Conditioning nodes take one child template applied to
/// every arm; alternating nodes take exactly two children.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanNode {
    Joint,
    Conditioning {
        variable: String,
        #[serde(default)]
        children: Vec<PlanNode>,
    },
    Alternating {
        first: Vec<String>,
        #[serde(default)]
        children: Vec<PlanNode>,
    },
}

impl PlanNode {
    fn to_directive(&self) -> Result<Directive, PlanError> {
        match self {
            PlanNode::Joint => Ok(Directive::Joint),
            PlanNode::Conditioning { variable, children } => match children.as_slice() {
                [] => Err(invalid("leaf-must-be-joint", format!("conditioning on `{variable}` has no child"))),
                [child] => Ok(Directive::conditioning(variable, child.to_directive()?)),
                _ => Err(invalid("conditioning-arity", "a conditioning node takes exactly one child template")),
            },
            PlanNode::Alternating { first, children } => match children.as_slice() {
                [] => Err(invalid("leaf-must-be-joint", "alternating node has no children")),
                [a, b] => Ok(Directive::Alternating {
                    first: first.clone(),
                    first_child: Box::new(a.to_directive()?),
                    second_child: Box::new(b.to_directive()?),
                }),
                _ => Err(invalid("alternating-arity", "an alternating node takes exactly two children")),
            },
        }
    }
}

/// What to build: a shape plus the labels it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanSpec {
    pub shape: PlanShape,
    /// Conditioning variable for C, AC and CA; defaults to the space's algorithm variable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditioning: Option<String>,
    /// Feature-stage side of the alternating partition; defaults to the space's feature variables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
    /// Restricts the conditioning block to these arms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arms: Option<Vec<String>>,
}

impl PlanSpec {
    pub fn new(shape: PlanShape) -> Self {
        Self {
            shape,
            conditioning: None,
            features: None,
            arms: None,
        }
    }

    /// Short label: `J`, `C`, `A`, `AC`, `CA` or `custom`.
    pub fn label(&self) -> &'static str {
        match self.shape {
            PlanShape::J => "J",
            PlanShape::C => "C",
            PlanShape::A => "A",
            PlanShape::AC => "AC",
            PlanShape::CA => "CA",
            PlanShape::Custom(_) => "custom",
        }
    }

    /// Parses a plan label (case-insensitive).
    pub fn from_label(label: &str) -> Option<Self> {
        let shape = match label.to_ascii_uppercase().as_str() {
            "J" => PlanShape::J,
            "C" => PlanShape::C,
            "A" => PlanShape::A,
            "AC" => PlanShape::AC,
            "CA" => PlanShape::CA,
            _ => return None,
        };
        Some(Self::new(shape))
    }

    fn conditioning_variable(&self, space: &SearchSpace) -> Result<String, PlanError> {
        let name = self
            .conditioning
            .clone()
            .or_else(|| space.algorithm_variable().map(str::to_string))
            .ok_or_else(|| invalid("conditioning-variable", "no conditioning variable named and none designated"))?;
        let spec = space
            .variable(&name)
            .ok_or_else(|| invalid("conditioning-variable", format!("`{name}` is not a variable")))?;
        if !matches!(spec.domain, Domain::Cat { .. }) {
            return Err(invalid("conditioning-variable", format!("`{name}` is not categorical")));
        }
        if spec.condition.is_some() {
            return Err(invalid("conditioning-variable", format!("`{name}` is conditional")));
        }
        Ok(name)
    }

    fn feature_group(&self, space: &SearchSpace) -> Result<Vec<String>, PlanError> {
        let features = self.features.clone().unwrap_or_else(|| space.feature_variables().to_vec());
        if features.is_empty() {
            return Err(invalid("partition", "no feature-stage variables for the alternating split"));
        }
        for f in &features {
            if space.variable(f).is_none() {
                return Err(invalid("partition", format!("`{f}` is not a variable")));
            }
        }
        if features.len() == space.len() {
            return Err(invalid("partition", "the feature side covers every variable"));
        }
        Ok(features)
    }

    /// The block directive this spec describes over `space`.
    pub fn to_directive(&self, space: &SearchSpace) -> Result<Directive, PlanError> {
        let cond = |child: Directive| -> Result<Directive, PlanError> {
            Ok(Directive::Conditioning {
                variable: self.conditioning_variable(space)?,
                values: self.arms.clone(),
                child: Box::new(child),
            })
        };
        let alt = |first: Vec<String>, a: Directive, b: Directive| Directive::Alternating {
            first,
            first_child: Box::new(a),
            second_child: Box::new(b),
        };
        match &self.shape {
            PlanShape::J => Ok(Directive::Joint),
            PlanShape::C => cond(Directive::Joint),
            PlanShape::A => Ok(alt(self.feature_group(space)?, Directive::Joint, Directive::Joint)),
            PlanShape::AC => {
                let features = self.feature_group(space)?;
                let algo = self.conditioning_variable(space)?;
                if features.contains(&algo) {
                    return Err(invalid("partition", "the algorithm variable must sit on the hyperparameter side"));
                }
                Ok(alt(features, Directive::Joint, cond(Directive::Joint)?))
            }
            PlanShape::CA => {
                let features = self.feature_group(space)?;
                cond(alt(features, Directive::Joint, Directive::Joint))
            }
            PlanShape::Custom(node) => node.to_directive(),
        }
    }
}

/// Builds the block tree for `spec` over `space`. Nothing is evaluated.
pub fn build_plan(spec: &PlanSpec, space: &SearchSpace, params: BlockParams, seed: u64) -> Result<Block, PlanError> {
    let directive = spec.to_directive(space)?;
    Ok(Block::new(space, &Configuration::new(), &directive, params, seed)?)
}

/// Outcome of one optimization run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub best_config: Configuration,
    pub best_loss: f64,
    pub history: Vec<Record>,
    pub wall_seconds: f64,
    pub evaluations: usize,
}

impl RunResult {
    pub fn best_reward(&self) -> f64 {
        -self.best_loss
    }

    /// Best loss after each evaluation (+∞ until the first success).
    pub fn incumbent_trace(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.history
            .iter()
            .map(|r| {
                if let Some(l) = r.observation.loss {
                    best = best.min(l);
                }
                best
            })
            .collect()
    }
}

fn no_success(records: &[Record]) -> PlanError {
    PlanError::NoSuccess {
        evaluations: records.len(),
        last_failure: records
            .last()
            .map(|r| format!("{:?}", r.observation.status).to_lowercase())
            .unwrap_or_else(|| "nothing evaluated".into()),
    }
}

/// Pulls `root` until the budget is spent.
pub fn execute(root: &mut Block, env: &mut Evaluator<'_>) -> Result<(), PlanError> {
    while !env.is_exhausted() {
        match root.do_next(env) {
            Ok(()) | Err(BlockError::Exhausted) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

fn finish(env: Evaluator<'_>, best: Option<(Configuration, f64)>) -> Result<RunResult, PlanError> {
    let wall_seconds = env.elapsed();
    let records = env.into_records();
    let Some((best_config, reward)) = best else {
        return Err(no_success(&records));
    };
    Ok(RunResult {
        best_config,
        best_loss: -reward,
        evaluations: records.len(),
        history: records,
        wall_seconds,
    })
}

/// Builds and executes `spec` on `objective` under `budget`.
pub fn run(
    spec: &PlanSpec,
    objective: &dyn Objective,
    budget: Budget,
    params: BlockParams,
    seed: u64,
) -> Result<RunResult, PlanError> {
    let root = build_plan(spec, objective.space(), params, seed)?;
    run_block(root, objective, budget, seed)
}

/// Executes an already built (and possibly customized) tree.
pub fn run_block(mut root: Block, objective: &dyn Objective, budget: Budget, seed: u64) -> Result<RunResult, PlanError> {
    let mut env = Evaluator::new(objective, budget, seed);
    execute(&mut root, &mut env)?;
    let best = root.best_full().ok();
    debug_assert_eq!(
        best.as_ref().map(|b| b.1),
        env.best_record().and_then(|r| r.observation.reward())
    );
    finish(env, best)
}

/// The coarse plans applicable to `space`, with warnings for degenerate labelings.
pub fn enumerate_plans(space: &SearchSpace) -> Result<(Vec<PlanSpec>, Vec<String>), PlanError> {
    let algo = space
        .algorithm_variable()
        .filter(|a| matches!(space.variable(a).map(|v| &v.domain), Some(Domain::Cat { .. })));
    let features = !space.feature_variables().is_empty();
    let shapes = match (algo.is_some(), features) {
        (true, true) => {
            return Ok((
                [PlanShape::J, PlanShape::C, PlanShape::A, PlanShape::AC, PlanShape::CA]
                    .into_iter()
                    .map(PlanSpec::new)
                    .collect(),
                Vec::new(),
            ))
        }
        (false, true) => (
            vec![PlanShape::J, PlanShape::A],
            "no categorical algorithm variable: only J and A apply",
        ),
        (true, false) => (
            vec![PlanShape::J, PlanShape::C],
            "no feature-stage variables: only J and C apply",
        ),
        (false, false) => {
            return Err(PlanError::Enumeration(
                "space declares neither an algorithm variable nor feature variables".into(),
            ))
        }
    };
    Ok((shapes.0.into_iter().map(PlanSpec::new).collect(), vec![shapes.1.to_string()]))
}

/// Stage budget shares of the progressive strategy.
pub const DEFAULT_STAGE_FRACTIONS: [f64; 3] = [0.3, 0.35, 0.35];

/// Top-down traversal of the CA space: screen algorithms at defaults, tune
/// the feature stage for the winner, then tune the winner's hyperparameters.
pub fn run_progressive(
    objective: &dyn Objective,
    budget: Budget,
    fractions: [f64; 3],
    params: BlockParams,
    seed: u64,
) -> Result<RunResult, PlanError> {
    if fractions.iter().any(|f| !(*f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(PlanError::Progressive(format!("stage fractions {fractions:?} must be positive and sum to 1")));
    }
    let space = objective.space();
    let spec = PlanSpec::new(PlanShape::CA);
    let algo = spec.conditioning_variable(space)?;
    let features = spec.feature_group(space)?;
    let Some(Domain::Cat { choices }) = space.variable(&algo).map(|v| v.domain.clone()) else {
        unreachable!("checked categorical");
    };
    let (total, per_eval) = match budget {
        Budget::Evaluations(n) => (n as f64, true),
        Budget::Seconds(s) => (s, false),
    };
    let cut1 = if per_eval {
        (total * fractions[0]).floor()
    } else {
        total * fractions[0]
    };
    let cut2 = if per_eval {
        cut1 + (total * fractions[1]).floor()
    } else {
        total * (fractions[0] + fractions[1])
    };
    if per_eval && (cut1 as usize) < choices.len() {
        return Err(PlanError::Progressive(format!(
            "stage-1 budget {} is below the {} algorithm values",
            cut1,
            choices.len()
        )));
    }

    let mut env = Evaluator::new(objective, budget, seed);
    let stage1 = vec!["root".to_string(), "stage1".to_string()];
    let mut sums = vec![(0.0, 0usize); choices.len()];
    let mut i = 0;
    while env.consumed() < cut1 || i < choices.len() {
        let k = i % choices.len();
        let mut assignment = Configuration::new();
        assignment.insert(algo.clone(), Value::Cat(choices[k].clone()));
        let mut path = stage1.clone();
        path.push(format!("{algo}={}", choices[k]));
        match env.evaluate(&assignment, &path) {
            Ok(r) => {
                if let Some(l) = r.observation.loss {
                    sums[k].0 += l;
                    sums[k].1 += 1;
                }
            }
            Err(BlockError::Exhausted) => break,
            Err(e) => return Err(e.into()),
        }
        i += 1;
    }
    let mut winner: Option<(usize, f64)> = None;
    for (k, &(sum, n)) in sums.iter().enumerate() {
        if n > 0 {
            let mean = sum / n as f64;
            if winner.is_none_or(|(_, m)| mean < m) {
                winner = Some((k, mean));
            }
        }
    }
    let Some((winner, _)) = winner else {
        return Err(no_success(env.records()));
    };
    let mut fixed = Configuration::new();
    fixed.insert(algo.clone(), Value::Cat(choices[winner].clone()));
    let arm = space.substitute(&fixed)?;
    let defaults = arm.space.default_configuration();
    let hyper: Vec<String> = arm.space.names().filter(|n| !features.contains(n)).cloned().collect();

    let mut stage2_fixed = fixed.merged(&defaults.restricted(hyper.iter()));
    let mut block = Block::new(space, &stage2_fixed, &Directive::Joint, params, seed ^ 2)?;
    while env.consumed() < cut2 && !env.is_exhausted() {
        match block.do_next(&mut env) {
            Ok(()) | Err(BlockError::Exhausted) => {}
            Err(e) => return Err(e.into()),
        }
    }
    let best_features = match block.get_current_best() {
        Ok((c, _)) => c,
        Err(_) => defaults.restricted(features.iter()),
    };
    stage2_fixed = fixed.merged(&best_features);
    let mut block = Block::new(space, &stage2_fixed, &Directive::Joint, params, seed ^ 3)?;
    execute(&mut block, &mut env)?;

    let winner_value = Value::Cat(choices[winner].clone());
    let best = env
        .records()
        .iter()
        .filter(|r| r.observation.config.get(&algo) == Some(&winner_value))
        .filter_map(|r| r.observation.loss.map(|l| (r, l)))
        .fold(None::<(&Record, f64)>, |acc, (r, l)| match acc {
            Some((_, b)) if b <= l => acc,
            _ => Some((r, l)),
        })
        .map(|(r, l)| (r.observation.config.clone(), -l));
    finish(env, best)
}
