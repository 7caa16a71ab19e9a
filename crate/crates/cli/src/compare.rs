use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use volcano::blocks::{BlockParams, Budget};
use volcano::objective::Objective;
use volcano::plan::{enumerate_plans, run, PlanSpec};

use crate::CliError;

/// Losses closer than this share a rank.
pub const RANK_TOLERANCE: f64 = 1e-6;

/// Δ = (old − new) / max(new, old): positive when `loss_new` improves on `loss_old`.
pub fn relative_improvement(loss_new: f64, loss_old: f64) -> Result<f64, CliError> {
    if !(loss_new > 0.0 && loss_old > 0.0) || !loss_new.is_finite() || !loss_old.is_finite() {
        return Err(CliError::Usage(format!(
            "relative improvement needs positive finite losses, got {loss_new} and {loss_old}"
        )));
    }
    Ok((loss_old - loss_new) / loss_new.max(loss_old))
}

/// Ranks (1 = lowest value). Values within `tolerance` of the first member of
/// their sorted run share the average of the tied positions.
pub fn tied_ranks(values: &[f64], tolerance: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] - values[order[i]] <= tolerance {
            j += 1;
        }
        // positions i+1 ..= j
        let shared = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = shared;
        }
        i = j;
    }
    ranks
}

/// One (task, plan, seed) run of a comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunCell {
    pub task: String,
    pub plan: String,
    pub seed: u64,
    pub best_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tasks: Vec<String>,
    pub plans: Vec<String>,
    pub seeds: Vec<u64>,
    pub budget: Budget,
    /// `[task][plan][seed]`.
    pub best_losses: Vec<Vec<Vec<f64>>>,
    /// `[task][plan]`, mean over seeds.
    pub mean_losses: Vec<Vec<f64>>,
    /// `[task][plan]`.
    pub ranks: Vec<Vec<f64>>,
    pub average_ranks: Vec<f64>,
    /// `[task][plan]`: improvement of each plan's mean loss over plan J's, when both are positive.
    pub relative_improvement_vs_j: Vec<Vec<Option<f64>>>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn average_rank(&self, plan: &str) -> Option<f64> {
        self.plans.iter().position(|p| p == plan).map(|i| self.average_ranks[i])
    }

    /// Assembles a report from per-(task, plan, seed) best losses.
    pub fn from_losses(
        tasks: Vec<String>,
        plans: Vec<String>,
        seeds: Vec<u64>,
        budget: Budget,
        best_losses: Vec<Vec<Vec<f64>>>,
        warnings: Vec<String>,
    ) -> Self {
        let mean_losses: Vec<Vec<f64>> = best_losses
            .iter()
            .map(|per_plan| per_plan.iter().map(|l| l.iter().sum::<f64>() / l.len().max(1) as f64).collect())
            .collect();
        let ranks: Vec<Vec<f64>> = mean_losses.iter().map(|m| tied_ranks(m, RANK_TOLERANCE)).collect();
        let average_ranks = (0..plans.len())
            .map(|p| ranks.iter().map(|r| r[p]).sum::<f64>() / ranks.len().max(1) as f64)
            .collect();
        let j = plans.iter().position(|p| p == "J");
        let relative_improvement_vs_j = mean_losses
            .iter()
            .map(|m| {
                m.iter()
                    .map(|&l| j.and_then(|j| relative_improvement(l, m[j]).ok()))
                    .collect()
            })
            .collect();
        Self {
            tasks,
            plans,
            seeds,
            budget,
            best_losses,
            mean_losses,
            ranks,
            average_ranks,
            relative_improvement_vs_j,
            warnings,
        }
    }
}

/// A comparison that hit a run error; `cells` holds every run's outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonFailure {
    pub error: CliError,
    pub cells: Vec<RunCell>,
}

/// Runs every plan applicable to all tasks on every task and seed, in parallel.
pub fn compare_plans(
    tasks: &[&dyn Objective],
    budget: Budget,
    seeds: &[u64],
    params: BlockParams,
) -> Result<Report, ComparisonFailure> {
    let fail = |error: CliError| ComparisonFailure {
        error,
        cells: Vec::new(),
    };
    if tasks.is_empty() || seeds.is_empty() {
        return Err(fail(CliError::Usage("compare-plans needs at least one task and one seed".into())));
    }
    if !budget.is_positive() {
        return Err(fail(CliError::Usage(format!("budget must be positive, got {budget:?}"))));
    }
    let mut warnings = Vec::new();
    let mut plans: Option<Vec<PlanSpec>> = None;
    for t in tasks {
        let (specs, w) = enumerate_plans(t.space()).map_err(|e| fail(CliError::Usage(format!("{}: {e}", t.name()))))?;
        warnings.extend(w.into_iter().map(|w| format!("{}: {w}", t.name())));
        plans = Some(match plans {
            None => specs,
            Some(prev) => {
                let before = prev.len().max(specs.len());
                let kept: Vec<PlanSpec> = prev.into_iter().filter(|p| specs.contains(p)).collect();
                if kept.len() < before {
                    warnings.push(format!("{}: ranking only plans shared by every task", t.name()));
                }
                kept
            }
        });
    }
    let plans = plans.unwrap_or_default();
    let jobs: Vec<(usize, usize, u64)> = (0..tasks.len())
        .flat_map(|t| (0..plans.len()).flat_map(move |p| seeds.iter().map(move |&s| (t, p, s))))
        .collect();
    let cells: Vec<RunCell> = jobs
        .par_iter()
        .map(|&(t, p, seed)| {
            let outcome = run(&plans[p], tasks[t], budget, params, seed);
            RunCell {
                task: tasks[t].name().to_string(),
                plan: plans[p].label().to_string(),
                seed,
                best_loss: outcome.as_ref().ok().map(|r| r.best_loss),
                error: outcome.err().map(|e| e.to_string()),
            }
        })
        .collect();
    if let Some(bad) = cells.iter().find(|c| c.error.is_some()) {
        return Err(ComparisonFailure {
            error: CliError::Runtime(format!(
                "{} / plan {} / seed {}: {}",
                bad.task,
                bad.plan,
                bad.seed,
                bad.error.as_deref().unwrap_or_default()
            )),
            cells,
        });
    }
    let mut losses = vec![vec![Vec::with_capacity(seeds.len()); plans.len()]; tasks.len()];
    for (cell, &(t, p, _)) in cells.iter().zip(&jobs) {
        losses[t][p].push(cell.best_loss.expect("no errors"));
    }
    Ok(Report::from_losses(
        tasks.iter().map(|t| t.name().to_string()).collect(),
        plans.iter().map(|p| p.label().to_string()).collect(),
        seeds.to_vec(),
        budget,
        losses,
        warnings,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_improvement_examples() {
        assert_eq!(relative_improvement(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(relative_improvement(1.0, 2.0).unwrap(), 0.5);
        assert_eq!(relative_improvement(2.0, 1.0).unwrap(), -0.5);
        assert!(relative_improvement(0.0, 1.0).is_err());
        assert!(relative_improvement(1.0, -1.0).is_err());
        for (a, b) in [(1e-3, 1e3), (1e3, 1e-3), (3.0, 7.0)] {
            let d = relative_improvement(a, b).unwrap();
            assert!(d > -1.0 && d < 1.0);
        }
    }

    #[test]
    fn ranks_share_ties() {
        assert_eq!(tied_ranks(&[0.3, 0.1, 0.2], RANK_TOLERANCE), [3.0, 1.0, 2.0]);
        assert_eq!(tied_ranks(&[0.5, 0.5], RANK_TOLERANCE), [1.5, 1.5]);
        assert_eq!(tied_ranks(&[0.2, 0.2 + 5e-7, 0.1], RANK_TOLERANCE), [2.5, 2.5, 1.0]);
        assert_eq!(tied_ranks(&[1.0, 1.0, 1.0], RANK_TOLERANCE), [2.0, 2.0, 2.0]);
    }

    #[test]
    fn report_average_ranks() {
        let plans: Vec<String> = ["J", "C", "CA"].iter().map(|s| s.to_string()).collect();
        let losses = vec![
            vec![vec![0.3], vec![0.2], vec![0.1]],
            vec![vec![0.3, 0.5], vec![0.4, 0.4], vec![0.2, 0.2]],
        ];
        let r = Report::from_losses(
            vec!["t1".into(), "t2".into()],
            plans,
            vec![0],
            Budget::Evaluations(1),
            losses,
            vec![],
        );
        assert_eq!(r.ranks, [[3.0, 2.0, 1.0], [2.5, 2.5, 1.0]]);
        assert_eq!(r.average_rank("J"), Some(2.75));
        assert_eq!(r.average_rank("CA"), Some(1.0));
        assert_eq!(r.relative_improvement_vs_j[0][0], Some(0.0));
        let ca = r.relative_improvement_vs_j[0][2].unwrap();
        assert!((ca - 2.0 / 3.0).abs() < 1e-12);
    }
}
