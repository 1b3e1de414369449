use std::collections::BTreeSet;
use std::sync::Arc;

use log::debug;

use super::induce::{ensure_nec_atoms_sat, induce_op_to_cover, induce_prec_and_del_effs, strip_prec_and_del_effs};
use super::{objective, partition_data, structure_key, LearnError, LearnedModel, LearnerConfig, Namer};
use crate::consistency::{compute_coverage, sorted_by_name, AbstractDemo, CoverageReport};
use crate::symbolic::Operator;

const J_EPS: f64 = 1e-12;

/// Record of one hill-climbing run.
#[derive(Clone, Debug, Default)]
pub struct HillClimbTrace {
    /// Objective after initialization and after every accepted step.
    pub accepted_j: Vec<f64>,
    /// Inner-loop iterations summed over all coverage improvements.
    pub improve_iterations: usize,
    /// Coverage improvements that failed and were treated as rejected.
    pub improve_failures: usize,
    pub deletions_accepted: usize,
}

fn covered_key(ops: &[Arc<Operator>]) -> BTreeSet<String> {
    ops.iter().map(|o| structure_key(o)).collect()
}

/// Drops operators that explain no data, unless that would lose coverage, in
/// which case only operators unused by every covered suffix are dropped.
fn prune_null_data(
    ops: Vec<Arc<Operator>>,
    demos: &[AbstractDemo],
    cov: &CoverageReport,
    cfg: &LearnerConfig,
) -> Vec<Arc<Operator>> {
    let data = partition_data(&ops, demos, Some(cov), cfg.keep_bonus);
    let with_data: Vec<Arc<Operator>> = ops
        .iter()
        .zip(&data)
        .filter(|(_, d)| !d.is_empty())
        .map(|(o, _)| Arc::clone(o))
        .collect();
    if with_data.len() == ops.len() {
        return ops;
    }
    if compute_coverage(&with_data, demos, cfg.keep_bonus).covered_count >= cov.covered_count {
        return with_data;
    }
    let used: BTreeSet<&str> = cov.suffixes.iter().flatten().map(|g| g.name()).collect();
    ops.iter().filter(|o| used.contains(o.name.as_str())).cloned().collect()
}

/// Proposes an operator set that covers strictly more transitions than
/// `ops`, or returns `ops` unchanged if everything is covered. Also returns
/// the number of inner iterations used.
pub fn improve_coverage(
    ops: &[Arc<Operator>],
    demos: &[AbstractDemo],
    cfg: &LearnerConfig,
    namer: &mut Namer,
) -> Result<(Vec<Arc<Operator>>, usize), LearnError> {
    let keep = cfg.keep_bonus;
    let init = compute_coverage(ops, demos, keep);
    if init.is_complete() {
        return Ok((ops.to_vec(), 0));
    }
    let total: usize = demos.iter().map(AbstractDemo::len).sum();
    let bound = cfg.max_improve_iters.unwrap_or(10 * total).max(1);
    let mut current: Vec<Arc<Operator>> = ops.to_vec();
    let mut cov = init.clone();
    let mut last_key: Option<(BTreeSet<String>, usize)> = None;
    for iteration in 1..=bound {
        let (d, i, alpha_unc) = cov.uncovered.clone().ok_or(LearnError::Stalled {
            covered: cov.covered_count,
        })?;
        let (new_op, _) = induce_op_to_cover(&demos[d].transitions[i], &alpha_unc, namer);
        let new_name = new_op.name.clone();
        log::trace!(
            "uncovered demo {d} step {i}: {} | prev {:?} | next {:?} | alpha {:?}\n{}",
            demos[d].transitions[i].action,
            demos[d].transitions[i]
                .s_prev
                .iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>(),
            demos[d].transitions[i]
                .s_next
                .iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>(),
            alpha_unc.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
            new_op
        );
        let mut candidate: Vec<Arc<Operator>> = current.iter().map(|o| Arc::new(strip_prec_and_del_effs(o))).collect();
        candidate.push(Arc::new(new_op));

        let data = partition_data(&candidate, demos, Some(&cov), keep);
        let (mut candidate, data) = induce_prec_and_del_effs(&candidate, data, demos);
        // An identical older operator may absorb the new one; repair whichever
        // operator now explains the uncovered transition.
        let target = data
            .iter()
            .position(|ds| ds.iter().any(|a| a.demo == d && a.index == i))
            .or_else(|| candidate.iter().position(|o| o.name == new_name));
        if let Some(pos) = target {
            let copies = ensure_nec_atoms_sat(&candidate[pos], &data[pos], demos, &cov, &candidate, namer);
            candidate.extend(copies.into_iter().map(Arc::new));
        }
        let data = partition_data(&candidate, demos, Some(&cov), keep);
        let (candidate, _) = induce_prec_and_del_effs(&candidate, data, demos);

        let next_cov = compute_coverage(&candidate, demos, keep);
        debug!(
            "improve iteration {iteration}: {} ops, covered {} (initial {})",
            candidate.len(),
            next_cov.covered_count,
            init.covered_count
        );
        if next_cov.covered_count > init.covered_count {
            let pruned = prune_null_data(candidate, demos, &next_cov, cfg);
            return Ok((pruned, iteration));
        }
        let key = (covered_key(&candidate), next_cov.covered_count);
        if last_key.as_ref() == Some(&key) {
            return Err(LearnError::Stalled {
                covered: next_cov.covered_count,
            });
        }
        last_key = Some(key);
        current = candidate;
        cov = next_cov;
    }
    Err(LearnError::SafetyBoundExceeded(bound))
}

/// The variant of `ops` without its `k`-th operator in name order, with
/// preconditions and deletes re-induced for the rest.
fn deletion_variant(
    ops: &[Arc<Operator>],
    k: usize,
    demos: &[AbstractDemo],
    cov: &CoverageReport,
    cfg: &LearnerConfig,
) -> Vec<Arc<Operator>> {
    let victim = &sorted_by_name(ops)[k].name;
    let rest: Vec<Arc<Operator>> = ops
        .iter()
        .filter(|o| &o.name != victim)
        .map(|o| Arc::new(strip_prec_and_del_effs(o)))
        .collect();
    let data = partition_data(&rest, demos, Some(cov), cfg.keep_bonus);
    induce_prec_and_del_effs(&rest, data, demos).0
}

/// All single-deletion variants of `ops`, in operator-name order.
pub fn reduce_complexity(
    ops: &[Arc<Operator>],
    demos: &[AbstractDemo],
    cfg: &LearnerConfig,
) -> Vec<Vec<Arc<Operator>>> {
    let cov = compute_coverage(ops, demos, cfg.keep_bonus);
    (0..ops.len())
        .map(|k| deletion_variant(ops, k, demos, &cov, cfg))
        .collect()
}

/// Hill climbing from the empty set: alternate a coverage-improving proposal
/// and single-operator deletions, accepting only strict decreases of the
/// objective, until a full round changes nothing.
pub fn hill_climb(demos: &[AbstractDemo], cfg: &LearnerConfig) -> Result<(LearnedModel, HillClimbTrace), LearnError> {
    if demos.is_empty() {
        return Err(LearnError::NoData);
    }
    let lambda = cfg.lambda_for(demos);
    let keep = cfg.keep_bonus;
    let mut namer = Namer::default();
    let mut trace = HillClimbTrace::default();
    let mut ops: Vec<Arc<Operator>> = Vec::new();
    let mut cov = compute_coverage(&ops, demos, keep);
    let mut j = objective(&cov, ops.len(), lambda);
    trace.accepted_j.push(j);
    loop {
        let mut improved = false;
        match improve_coverage(&ops, demos, cfg, &mut namer) {
            Ok((proposal, iterations)) => {
                trace.improve_iterations += iterations;
                let pcov = compute_coverage(&proposal, demos, keep);
                let pj = objective(&pcov, proposal.len(), lambda);
                if pj < j - J_EPS {
                    debug!("accepted coverage step: J {j:.6} -> {pj:.6}, {} ops", proposal.len());
                    ops = proposal;
                    cov = pcov;
                    j = pj;
                    trace.accepted_j.push(j);
                    improved = true;
                }
            }
            Err(e) => {
                debug!("coverage step rejected: {e}");
                trace.improve_failures += 1;
            }
        }
        for k in 0..ops.len() {
            let variant = deletion_variant(&ops, k, demos, &cov, cfg);
            let vcov = compute_coverage(&variant, demos, keep);
            let vj = objective(&vcov, variant.len(), lambda);
            if vj < j - J_EPS {
                debug!("accepted deletion: J {j:.6} -> {vj:.6}, {} ops", variant.len());
                ops = variant;
                cov = vcov;
                j = vj;
                trace.accepted_j.push(j);
                trace.deletions_accepted += 1;
                improved = true;
                break;
            }
        }
        if !improved {
            break;
        }
    }
    let datasets = partition_data(&ops, demos, Some(&cov), keep);
    Ok((
        LearnedModel {
            ops,
            datasets,
            coverage: cov.normalized,
        },
        trace,
    ))
}
