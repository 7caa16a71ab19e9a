//! Building blocks: joint (BO leaf), conditioning (bandit over a categorical
//! variable with dominance elimination) and alternating (two variable groups
//! arbitrated by expected utility improvement).

mod env;

use std::collections::VecDeque;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{Configuration, Domain, SearchSpace, SpaceError, Value};
use crate::surrogate::{suggest, suggest_with, GpFactory, SurrogateFactory};

pub use env::{Budget, Evaluator, Record};
pub(crate) use env::splitmix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlockError {
    #[error("budget exhausted")]
    Exhausted,
    #[error("invalid directive: {0}")]
    Directive(String),
    #[error("no successful observation yet")]
    EmptyHistory,
    #[error("`{0}` is not a variable of the search space")]
    UnknownVariable(String),
    #[error("`{0}` is a free variable of this block and cannot be fixed")]
    FreeVariable(String),
    #[error("operation requires a {expected} block")]
    WrongKind { expected: &'static str },
    #[error("arm `{0}` already present or repeated")]
    DuplicateArm(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// How a block decomposes its free variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Directive {
    Joint,
    /// One child per value of the categorical `variable`, optionally restricted to `values`.
    Conditioning {
        variable: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<String>>,
        child: Box<Directive>,
    },
    /// `first` names the first group; every other free variable forms the second.
    /// Names that are not free in this block are ignored. If either group ends
    /// up empty the block is built from the other group's directive alone.
    Alternating {
        first: Vec<String>,
        first_child: Box<Directive>,
        second_child: Box<Directive>,
    },
}

impl Directive {
    pub fn conditioning(variable: &str, child: Directive) -> Self {
        Directive::Conditioning {
            variable: variable.to_string(),
            values: None,
            child: Box::new(child),
        }
    }

    pub fn alternating(first: &[&str], first_child: Directive, second_child: Directive) -> Self {
        Directive::Alternating {
            first: first.iter().map(|s| s.to_string()).collect(),
            first_child: Box::new(first_child),
            second_child: Box::new(second_child),
        }
    }

    /// True when every leaf of the described tree is joint.
    pub fn is_well_formed(&self) -> bool {
        match self {
            Directive::Joint => true,
            Directive::Conditioning { child, .. } => child.is_well_formed(),
            Directive::Alternating {
                first_child,
                second_child,
                ..
            } => first_child.is_well_formed() && second_child.is_well_formed(),
        }
    }
}

/// Per-block tuning constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    /// Plays per arm per conditioning round, and warm-up rounds of alternating blocks.
    pub rounds: usize,
    /// Smoothing window for EU growth rates.
    pub window: usize,
    /// Number of recent pulls averaged by EUI.
    pub eui_window: usize,
    /// Initial configurations queued by a joint block (defaults first).
    pub init_configs: usize,
    /// Let joint surrogates also learn from observations made under earlier
    /// values of re-fixed context variables, with those variables as inputs.
    #[serde(default)]
    pub context_aware: bool,
}

impl Default for BlockParams {
    fn default() -> Self {
        Self {
            rounds: 5,
            window: 3,
            eui_window: 8,
            init_configs: 3,
            context_aware: true,
        }
    }
}

/// Bounds on the reward attainable with `horizon` more budget units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsEstimate {
    pub lower: f64,
    pub upper: f64,
    pub horizon: f64,
}

/// Mean recent per-pull reward improvement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EuiEstimate {
    pub value: f64,
}

/// EU bounds from a best-reward curve.
///
/// The growth rate over the last `min(window, n-1)` pulls is extrapolated over
/// `⌊k / mean_cost⌋` further pulls and capped at `ceiling`. With a single pull
/// nothing is known about growth and the upper bound is the ceiling.
pub fn eu_bounds(curve: &[f64], mean_cost: f64, k: f64, window: usize, ceiling: f64) -> BoundsEstimate {
    let n = curve.len();
    assert!(n > 0, "EU bounds need at least one pull");
    let r = curve[n - 1];
    let upper = if n == 1 {
        ceiling
    } else {
        let c = window.min(n - 1).max(1);
        let prev = curve[n - 1 - c];
        let omega = if prev == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            (r - prev) / c as f64
        };
        let pulls = if mean_cost > 0.0 {
            (k / mean_cost).floor()
        } else if k > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if omega <= 0.0 || pulls <= 0.0 {
            r
        } else {
            (r + omega * pulls).min(ceiling)
        }
    };
    BoundsEstimate {
        lower: r,
        upper: upper.max(r),
        horizon: k,
    }
}

/// Mean of the clamped improvements over the last `window` pulls; +∞ before any improvement is observable.
pub fn eui(curve: &[f64], window: usize) -> EuiEstimate {
    if curve.len() < 2 {
        return EuiEstimate { value: f64::INFINITY };
    }
    let improvements: Vec<f64> = curve
        .windows(2)
        .map(|w| match (w[0] == f64::NEG_INFINITY, w[1] == f64::NEG_INFINITY) {
            (true, true) => 0.0,
            (true, false) => f64::INFINITY,
            _ => (w[1] - w[0]).max(0.0),
        })
        .collect();
    let recent = &improvements[improvements.len().saturating_sub(window.max(1))..];
    EuiEstimate {
        value: recent.iter().sum::<f64>() / recent.len() as f64,
    }
}

/// Active flags after dominance elimination: child `i` is dropped iff some
/// other child's lower bound exceeds its upper bound. The child with the
/// largest lower bound always survives.
pub fn eliminate_dominated(bounds: &[BoundsEstimate]) -> Vec<bool> {
    let leader = bounds
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |acc, (i, b)| match acc {
            Some((_, l)) if l >= b.lower => acc,
            _ => Some((i, b.lower)),
        })
        .map(|(i, _)| i);
    bounds
        .iter()
        .enumerate()
        .map(|(i, b)| Some(i) == leader || !bounds.iter().enumerate().any(|(j, o)| j != i && b.upper < o.lower))
        .collect()
}

/// Alternating arbitration: the first child wins ties.
pub fn choose_alternating(first: EuiEstimate, second: EuiEstimate) -> usize {
    if first.value >= second.value {
        0
    } else {
        1
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Incumbent {
    /// Full normalized configuration.
    config: Configuration,
    reward: f64,
    iter: usize,
}

fn better<'a>(a: Option<&'a Incumbent>, b: Option<&'a Incumbent>) -> Option<&'a Incumbent> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.reward > x.reward || (y.reward == x.reward && y.iter < x.iter) {
            y
        } else {
            x
        }),
        (x, None) => x,
        (None, y) => y,
    }
}

struct JointState {
    queue: VecDeque<Configuration>,
    /// Observations lying in the current context slice: free assignment and loss.
    slice: Vec<(Configuration, Option<f64>)>,
    /// History prefix already scanned for slice membership.
    scanned: usize,
    epoch: usize,
    own_evaluations: usize,
    incumbent: Option<Incumbent>,
    surrogate: Arc<dyn SurrogateFactory>,
    /// Context variables re-fixed through `set_var`.
    dynamic: Vec<String>,
    /// Space over the free and dynamic variables, when context-aware.
    model_space: Option<SearchSpace>,
    /// Full configurations agreeing with the static context, when context-aware.
    family: Vec<(Configuration, Option<f64>)>,
}

struct ConditioningState {
    variable: String,
    values: Vec<String>,
    children: Vec<Block>,
    active: Vec<bool>,
    child: Directive,
}

struct AlternatingState {
    groups: [Vec<String>; 2],
    children: Vec<Block>,
    warmup_steps: usize,
}

enum Kind {
    Joint(JointState),
    Conditioning(ConditioningState),
    Alternating(AlternatingState),
}

/// A node of an execution plan owning one sub-problem.
pub struct Block {
    path: Vec<String>,
    root: Arc<SearchSpace>,
    /// Free variables of this block.
    space: SearchSpace,
    /// Values of every fixed variable (conditioning values, partner groups).
    context: Configuration,
    params: BlockParams,
    seed: u64,
    rng: ChaCha8Rng,
    /// Best subtree reward after each of this block's pulls.
    curve: Vec<f64>,
    /// Budget units consumed by each pull.
    pull_costs: Vec<f64>,
    kind: Kind,
}

impl std::fmt::Debug for Block {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.describe())
    }
}

fn child_seed(seed: u64, index: usize) -> u64 {
    splitmix(seed ^ splitmix(index as u64 + 1))
}

impl Block {
    /// Builds the block tree for `directive` over `root` with `fixed` substituted. Nothing is evaluated.
    pub fn new(
        root: &SearchSpace,
        fixed: &Configuration,
        directive: &Directive,
        params: BlockParams,
        seed: u64,
    ) -> Result<Block, BlockError> {
        let sub = root.substitute(fixed)?;
        Self::build(
            Arc::new(root.clone()),
            sub.space,
            sub.fixed,
            directive,
            params,
            seed,
            vec!["root".to_string()],
        )
    }

    /// [`Block::new`] over the evaluator's objective; an alternating root also runs its warm-up rounds.
    pub fn init(
        env: &mut Evaluator<'_>,
        fixed: &Configuration,
        directive: &Directive,
        params: BlockParams,
        seed: u64,
    ) -> Result<Block, BlockError> {
        let mut block = Self::new(env.objective().space(), fixed, directive, params, seed)?;
        while block.warmup_pending() {
            block.do_next(env)?;
        }
        Ok(block)
    }

    fn build(
        root: Arc<SearchSpace>,
        space: SearchSpace,
        context: Configuration,
        directive: &Directive,
        params: BlockParams,
        seed: u64,
        path: Vec<String>,
    ) -> Result<Block, BlockError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kind = match directive {
            Directive::Joint => {
                let mut queue = VecDeque::new();
                if space.is_empty() {
                    queue.push_back(Configuration::new());
                } else {
                    queue.push_back(space.default_configuration());
                    queue.extend(space.sample(&mut rng, params.init_configs.saturating_sub(1)));
                }
                Kind::Joint(JointState {
                    queue,
                    slice: Vec::new(),
                    scanned: 0,
                    epoch: 0,
                    own_evaluations: 0,
                    incumbent: None,
                    surrogate: Arc::new(GpFactory::default()),
                    dynamic: Vec::new(),
                    model_space: None,
                    family: Vec::new(),
                })
            }
            Directive::Conditioning {
                variable,
                values,
                child,
            } => {
                let spec = space
                    .variable(variable)
                    .ok_or_else(|| BlockError::Directive(format!("conditioning variable `{variable}` is not free")))?;
                let Domain::Cat { choices } = &spec.domain else {
                    return Err(BlockError::Directive(format!(
                        "conditioning variable `{variable}` is not categorical"
                    )));
                };
                if spec.condition.is_some() {
                    return Err(BlockError::Directive(format!(
                        "conditioning variable `{variable}` is itself conditional"
                    )));
                }
                let values = match values {
                    None => choices.clone(),
                    Some(v) => {
                        if v.is_empty() {
                            return Err(BlockError::Directive("conditioning on an empty value set".into()));
                        }
                        for (i, x) in v.iter().enumerate() {
                            if !choices.contains(x) {
                                return Err(BlockError::Directive(format!("`{x}` is not a value of `{variable}`")));
                            }
                            if v[..i].contains(x) {
                                return Err(BlockError::DuplicateArm(x.clone()));
                            }
                        }
                        v.clone()
                    }
                };
                let mut state = ConditioningState {
                    variable: variable.clone(),
                    values: Vec::new(),
                    children: Vec::new(),
                    active: Vec::new(),
                    child: (**child).clone(),
                };
                for value in values {
                    let arm = Self::build_arm(&root, &space, &context, &state, &value, params, seed, &path)?;
                    state.values.push(value);
                    state.children.push(arm);
                    state.active.push(true);
                }
                Kind::Conditioning(state)
            }
            Directive::Alternating {
                first,
                first_child,
                second_child,
            } => {
                for name in first {
                    if root.variable(name).is_none() {
                        return Err(BlockError::UnknownVariable(name.clone()));
                    }
                }
                let g1: Vec<String> = space.names().filter(|n| first.contains(n)).cloned().collect();
                let g2: Vec<String> = space.names().filter(|n| !first.contains(n)).cloned().collect();
                if g1.is_empty() || g2.is_empty() {
                    let only = if g1.is_empty() { second_child } else { first_child };
                    return Self::build(root, space, context, only, params, seed, path);
                }
                for v in space.variables() {
                    if let Some(c) = &v.condition {
                        if space.variable(&c.parent).is_some() && first.contains(&v.name) != first.contains(&c.parent) {
                            return Err(BlockError::Directive(format!(
                                "`{}` and its parent `{}` are split across groups",
                                v.name, c.parent
                            )));
                        }
                    }
                }
                let defaults = space.default_configuration();
                let mut children = Vec::with_capacity(2);
                for (i, (other, directive)) in [(&g2, first_child), (&g1, second_child)].into_iter().enumerate() {
                    let fixed = defaults.restricted(other.iter());
                    let sub = space.substitute(&fixed)?;
                    let mut child_path = path.clone();
                    child_path.push(format!("alt{}", i + 1));
                    children.push(Self::build(
                        root.clone(),
                        sub.space,
                        context.merged(&sub.fixed),
                        directive,
                        params,
                        child_seed(seed, i),
                        child_path,
                    )?);
                }
                Kind::Alternating(AlternatingState {
                    groups: [g1, g2],
                    children,
                    warmup_steps: 0,
                })
            }
        };
        Ok(Block {
            path,
            root,
            space,
            context,
            params,
            seed,
            rng,
            curve: Vec::new(),
            pull_costs: Vec::new(),
            kind,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn build_arm(
        root: &Arc<SearchSpace>,
        space: &SearchSpace,
        context: &Configuration,
        state: &ConditioningState,
        value: &str,
        params: BlockParams,
        seed: u64,
        path: &[String],
    ) -> Result<Block, BlockError> {
        let mut fixed = Configuration::new();
        fixed.insert(state.variable.clone(), Value::Cat(value.to_string()));
        let sub = space.substitute(&fixed)?;
        let mut child_path = path.to_vec();
        child_path.push(format!("{}={}", state.variable, value));
        Self::build(
            root.clone(),
            sub.space,
            context.merged(&sub.fixed),
            &state.child,
            params,
            child_seed(seed, state.children.len()),
            child_path,
        )
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            Kind::Joint(_) => "joint",
            Kind::Conditioning(_) => "conditioning",
            Kind::Alternating(_) => "alternating",
        }
    }

    pub fn path(&self) -> &[String] {
        &self.path
    }

    /// Free variables of this block.
    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn context(&self) -> &Configuration {
        &self.context
    }

    pub fn params(&self) -> BlockParams {
        self.params
    }

    pub fn children(&self) -> &[Block] {
        match &self.kind {
            Kind::Joint(_) => &[],
            Kind::Conditioning(s) => &s.children,
            Kind::Alternating(s) => &s.children,
        }
    }

    /// Number of `do_next` calls completed on this block.
    pub fn pull_count(&self) -> usize {
        self.curve.len()
    }

    pub fn reward_curve(&self) -> &[f64] {
        &self.curve
    }

    pub fn pull_costs(&self) -> &[f64] {
        &self.pull_costs
    }

    /// Evaluations issued by the joint leaves of this subtree.
    pub fn own_evaluations(&self) -> usize {
        match &self.kind {
            Kind::Joint(j) => j.own_evaluations,
            _ => self.children().iter().map(Block::own_evaluations).sum(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match &self.kind {
            Kind::Joint(_) => 1,
            _ => self.children().iter().map(Block::leaf_count).sum(),
        }
    }

    /// Conditioning variable, its arm values and their active flags.
    pub fn arms(&self) -> Option<(&str, &[String], &[bool])> {
        match &self.kind {
            Kind::Conditioning(s) => Some((&s.variable, &s.values, &s.active)),
            _ => None,
        }
    }

    /// The two variable groups of an alternating block.
    pub fn groups(&self) -> Option<&[Vec<String>; 2]> {
        match &self.kind {
            Kind::Alternating(s) => Some(&s.groups),
            _ => None,
        }
    }

    /// Number of context epochs a joint block has seen (starts at 0).
    pub fn epoch(&self) -> Option<usize> {
        match &self.kind {
            Kind::Joint(j) => Some(j.epoch),
            _ => None,
        }
    }

    /// Successful observations the surrogate of a joint block was last fitted on (or would be).
    pub fn training_points(&self) -> Option<usize> {
        let Kind::Joint(j) = &self.kind else { return None };
        let ok = |v: &[(Configuration, Option<f64>)]| v.iter().filter(|p| p.1.is_some()).count();
        Some(if j.model_space.is_some() { ok(&j.family) } else { ok(&j.slice) })
    }

    /// Replaces the surrogate of a joint block.
    pub fn set_surrogate(&mut self, factory: Arc<dyn SurrogateFactory>) -> Result<(), BlockError> {
        match &mut self.kind {
            Kind::Joint(j) => {
                j.surrogate = factory;
                Ok(())
            }
            _ => Err(BlockError::WrongKind { expected: "joint" }),
        }
    }

    fn warmup_pending(&self) -> bool {
        matches!(&self.kind, Kind::Alternating(a) if a.warmup_steps < 2 * self.params.rounds)
    }

    fn best(&self) -> Option<&Incumbent> {
        match &self.kind {
            Kind::Joint(j) => j.incumbent.as_ref(),
            _ => self.children().iter().fold(None, |acc, c| better(acc, c.best())),
        }
    }

    /// Best reward in the subtree, if any evaluation succeeded.
    pub fn best_reward(&self) -> Option<f64> {
        self.best().map(|i| i.reward)
    }

    /// Best assignment of this block's free variables and its reward.
    pub fn get_current_best(&self) -> Result<(Configuration, f64), BlockError> {
        let inc = self.best().ok_or(BlockError::EmptyHistory)?;
        Ok((inc.config.restricted(self.space.names()), inc.reward))
    }

    /// Best full configuration (including fixed context) and its reward.
    pub fn best_full(&self) -> Result<(Configuration, f64), BlockError> {
        let inc = self.best().ok_or(BlockError::EmptyHistory)?;
        Ok((inc.config.clone(), inc.reward))
    }

    /// Expected-utility bounds given `k` more budget units.
    pub fn get_eu(&self, k: f64, ceiling: f64) -> Result<BoundsEstimate, BlockError> {
        let reward = self.best_reward().ok_or(BlockError::EmptyHistory)?;
        if self.curve.is_empty() {
            return Ok(BoundsEstimate {
                lower: reward,
                upper: ceiling.max(reward),
                horizon: k,
            });
        }
        let mean_cost = self.pull_costs.iter().sum::<f64>() / self.pull_costs.len() as f64;
        let mut curve = self.curve.clone();
        // evaluations from an interrupted pull still count
        *curve.last_mut().expect("non-empty") = reward.max(curve[curve.len() - 1]);
        Ok(eu_bounds(&curve, mean_cost, k, self.params.window, ceiling))
    }

    pub fn get_eui(&self) -> EuiEstimate {
        eui(&self.curve, self.params.eui_window)
    }

    /// Fixes (or re-fixes) context variables. Changing any value starts a new
    /// context epoch: observations made under the old values no longer train
    /// the surrogates below this block.
    pub fn set_var(&mut self, vars: &Configuration) -> Result<(), BlockError> {
        for name in vars.names() {
            if self.space.variable(name).is_some() {
                return Err(BlockError::FreeVariable(name.clone()));
            }
            if self.root.variable(name).is_none() {
                return Err(BlockError::UnknownVariable(name.clone()));
            }
        }
        let vars = self.root.check_partial(vars)?;
        if vars.iter().all(|(k, v)| self.context.get(k) == Some(v)) {
            return Ok(());
        }
        self.context = self.context.merged(&vars);
        match &mut self.kind {
            Kind::Joint(j) => {
                j.epoch += 1;
                j.slice.clear();
                j.scanned = 0;
                if self.params.context_aware {
                    for name in vars.names() {
                        if !j.dynamic.contains(name) {
                            j.dynamic.push(name.clone());
                        }
                    }
                    let fixed = self.context.restricted(self.context.names().filter(|n| !j.dynamic.contains(n)));
                    j.model_space = Some(self.root.substitute(&fixed)?.space);
                    j.family.clear();
                }
            }
            Kind::Conditioning(s) => {
                for c in &mut s.children {
                    c.set_var(&vars)?;
                }
            }
            Kind::Alternating(s) => {
                for c in &mut s.children {
                    c.set_var(&vars)?;
                }
            }
        }
        Ok(())
    }

    /// Appends one active child per new conditioning value.
    pub fn extend_arms(&mut self, new_values: &[String]) -> Result<(), BlockError> {
        let Kind::Conditioning(state) = &mut self.kind else {
            return Err(BlockError::WrongKind {
                expected: "conditioning",
            });
        };
        let Some(Domain::Cat { choices }) = self.space.variable(&state.variable).map(|v| &v.domain) else {
            unreachable!("conditioning variable is a free categorical");
        };
        for (i, v) in new_values.iter().enumerate() {
            if state.values.contains(v) || new_values[..i].contains(v) {
                return Err(BlockError::DuplicateArm(v.clone()));
            }
            if !choices.contains(v) {
                return Err(BlockError::Directive(format!("`{v}` is not a value of `{}`", state.variable)));
            }
        }
        for v in new_values {
            let arm = Self::build_arm(
                &self.root,
                &self.space,
                &self.context,
                state,
                v,
                self.params,
                self.seed,
                &self.path,
            )?;
            state.values.push(v.clone());
            state.children.push(arm);
            state.active.push(true);
        }
        Ok(())
    }

    /// One optimization iteration.
    pub fn do_next(&mut self, env: &mut Evaluator<'_>) -> Result<(), BlockError> {
        let before = env.consumed();
        let rounds = self.params.rounds;
        match &mut self.kind {
            Kind::Joint(j) => {
                Self::joint_step(j, &self.root, &self.space, &self.context, &self.path, &mut self.rng, env)?
            }
            Kind::Conditioning(s) => {
                for _ in 0..rounds {
                    for i in 0..s.children.len() {
                        if s.active[i] {
                            s.children[i].do_next(env)?;
                        }
                    }
                }
                let k = env.remaining();
                let ceiling = env.reward_ceiling();
                let candidates: Vec<usize> =
                    (0..s.children.len()).filter(|&i| s.active[i] && s.children[i].best().is_some()).collect();
                let bounds: Vec<BoundsEstimate> = candidates
                    .iter()
                    .map(|&i| s.children[i].get_eu(k, ceiling).expect("candidate has an observation"))
                    .collect();
                for (flag, &i) in eliminate_dominated(&bounds).into_iter().zip(&candidates) {
                    // under-sampled arms are exempt
                    if !flag && s.children[i].pull_count() >= rounds {
                        s.active[i] = false;
                    }
                }
            }
            Kind::Alternating(s) => {
                if s.warmup_steps < 2 * rounds {
                    let c = s.warmup_steps % 2;
                    s.children[c].do_next(env)?;
                    s.warmup_steps += 1;
                    if let Ok((best, _)) = s.children[c].get_current_best() {
                        s.children[1 - c].set_var(&best)?;
                    }
                } else {
                    let c = choose_alternating(s.children[0].get_eui(), s.children[1].get_eui());
                    if let Ok((best, _)) = s.children[1 - c].get_current_best() {
                        s.children[c].set_var(&best)?;
                    }
                    s.children[c].do_next(env)?;
                }
            }
        }
        self.curve.push(self.best_reward().unwrap_or(f64::NEG_INFINITY));
        self.pull_costs.push(env.consumed() - before);
        Ok(())
    }

    fn joint_step(
        j: &mut JointState,
        root: &SearchSpace,
        space: &SearchSpace,
        context: &Configuration,
        path: &[String],
        rng: &mut ChaCha8Rng,
        env: &mut Evaluator<'_>,
    ) -> Result<(), BlockError> {
        let records = env.records();
        for r in &records[j.scanned..] {
            let config = &r.observation.config;
            let free = config.restricted(space.names());
            if root.normalize(&context.merged(&free)) == *config {
                j.slice.push((free, r.observation.loss));
            }
            if let Some(model_space) = &j.model_space {
                let own = config.restricted(model_space.names());
                if root.normalize(&context.merged(&own)) == *config {
                    j.family.push((config.clone(), r.observation.loss));
                }
            }
        }
        j.scanned = records.len();

        let seen = |slice: &[(Configuration, Option<f64>)], c: &Configuration| slice.iter().any(|(f, _)| f == c);
        let free = if space.is_empty() {
            Configuration::new()
        } else {
            let mut pick = None;
            while let Some(c) = j.queue.pop_front() {
                if !seen(&j.slice, &c) {
                    pick = Some(c);
                    break;
                }
            }
            match pick {
                Some(c) => c,
                None => Self::propose(j, space, context, rng),
            }
        };
        let record = env.evaluate(&context.merged(&free), path)?;
        j.own_evaluations += 1;
        if let Some(reward) = record.observation.reward() {
            if j.incumbent.as_ref().is_none_or(|inc| reward > inc.reward) {
                j.incumbent = Some(Incumbent {
                    config: record.observation.config.clone(),
                    reward,
                    iter: record.iter,
                });
            }
        }
        Ok(())
    }

    fn propose(j: &JointState, space: &SearchSpace, context: &Configuration, rng: &mut ChaCha8Rng) -> Configuration {
        let random = |rng: &mut ChaCha8Rng| {
            for _ in 0..32 {
                let c = space.sample_one(rng);
                if !j.slice.iter().any(|(f, _)| f == &c) {
                    return c;
                }
            }
            space.sample_one(rng)
        };
        let history: Vec<(Configuration, f64)> =
            j.slice.iter().map(|(c, l)| (c.clone(), l.unwrap_or(f64::INFINITY))).collect();
        if let Some(model_space) = &j.model_space {
            let ok: Vec<(Vec<f64>, f64)> = j
                .family
                .iter()
                .filter_map(|(c, l)| l.map(|l| (model_space.encode(c), l)))
                .collect();
            if ok.is_empty() {
                return random(rng);
            }
            let slice_best = history.iter().map(|h| h.1).fold(f64::INFINITY, f64::min);
            let best_loss = if slice_best.is_finite() {
                slice_best
            } else {
                ok.iter().map(|p| p.1).fold(f64::INFINITY, f64::min)
            };
            let (xs, ys): (Vec<Vec<f64>>, Vec<f64>) = ok.into_iter().unzip();
            return match j.surrogate.fit(&xs, &ys, rng) {
                Ok(model) => {
                    let encode = |c: &Configuration| model_space.encode(&context.merged(c));
                    suggest_with(space, model.as_ref(), &history, best_loss, &encode, rng)
                }
                Err(_) => random(rng),
            };
        }
        let ok: Vec<(Vec<f64>, f64)> = j
            .slice
            .iter()
            .filter_map(|(c, l)| l.map(|l| (space.encode(c), l)))
            .collect();
        if ok.is_empty() {
            return random(rng);
        }
        let (xs, ys): (Vec<Vec<f64>>, Vec<f64>) = ok.into_iter().unzip();
        match j.surrogate.fit(&xs, &ys, rng) {
            Ok(model) => suggest(space, model.as_ref(), &history, rng),
            Err(_) => random(rng),
        }
    }

    /// Indented one-line-per-block rendering of the subtree.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        self.describe_into(&mut out, 0, "");
        out
    }

    fn describe_into(&self, out: &mut String, depth: usize, note: &str) {
        let label = self.path.last().map_or("", String::as_str);
        let vars: Vec<&str> = self.space.names().map(String::as_str).collect();
        out.push_str(&format!(
            "{}{} [{}{}] pulls={} vars={{{}}}\n",
            "  ".repeat(depth),
            label,
            self.kind_name(),
            note,
            self.pull_count(),
            vars.join(", ")
        ));
        if let Kind::Conditioning(s) = &self.kind {
            for (c, active) in s.children.iter().zip(&s.active) {
                c.describe_into(out, depth + 1, if *active { "" } else { ", eliminated" });
            }
        } else {
            for c in self.children() {
                c.describe_into(out, depth + 1, "");
            }
        }
    }
}
