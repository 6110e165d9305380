//! Ordering generators: fault-based greedy, coverage-based greedy, random
//! permutations and the greedy "optimal" ordering on the validation set.
//!
//! Both greedy variants share one additional-coverage loop: repeatedly pick
//! the MR that covers the most not-yet-covered units (faults, statements or
//! branches), breaking ties uniformly at random with the seeded generator.
//! The loop stops once no remaining MR adds anything. MRs left over at that
//! point are appended by descending total unit count, again with seeded
//! ties, so every output is a full permutation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::model::{
    CoverageCriterion, CoverageProfile, DatasetMeta, DatasetRole, KillMatrix, Method, MrId,
    MrOrdering,
};
use crate::seeding::{rng_from_seed, SeededRng};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PrioritizeError {
    #[error("cannot prioritize an empty MR set")]
    EmptyMatrix,

    #[error("coverage profile has no {0} coverage")]
    MissingCriterion(CoverageCriterion),

    #[error("number of random orderings must be at least 1")]
    ZeroOrderings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Chosen for its marginal gain.
    Greedy,
    /// Appended after the greedy loop stopped, by total unit count.
    Residual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GreedyStep {
    pub chosen: MrId,
    /// Units newly covered by `chosen`.
    pub marginal_gain: usize,
    /// Every candidate that scored equal to `chosen` at this step.
    pub tie_set: Vec<MrId>,
    pub phase: Phase,
}

/// Audit trail of a greedy ordering, one step per output position.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct GreedyTrace {
    pub steps: Vec<GreedyStep>,
}

impl GreedyTrace {
    pub fn gains(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.marginal_gain).collect()
    }

    /// True when no step had to break a tie.
    pub fn is_tie_free(&self) -> bool {
        self.steps.iter().all(|s| s.tie_set.len() == 1)
    }
}

struct RawStep {
    chosen: usize,
    gain: usize,
    ties: Vec<usize>,
    phase: Phase,
}

fn pick(ties: &[usize], rng: &mut SeededRng) -> usize {
    if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.random_range(0..ties.len())]
    }
}

/// Additional-coverage greedy over `rows[i]` = unit indices covered by MR `i`.
fn greedy(rows: &[Vec<usize>], num_units: usize, rng: &mut SeededRng) -> Vec<RawStep> {
    let mut covered = vec![false; num_units];
    let mut remaining: Vec<usize> = (0..rows.len()).collect();
    let mut steps = Vec::with_capacity(rows.len());

    while !remaining.is_empty() {
        let gains: Vec<usize> = remaining
            .iter()
            .map(|&i| rows[i].iter().filter(|&&u| !covered[u]).count())
            .collect();
        let best = gains.iter().copied().max().unwrap_or(0);
        if best == 0 {
            break;
        }
        let ties: Vec<usize> = remaining
            .iter()
            .zip(&gains)
            .filter_map(|(&i, &g)| (g == best).then_some(i))
            .collect();
        let chosen = pick(&ties, rng);
        for &u in &rows[chosen] {
            covered[u] = true;
        }
        remaining.retain(|&i| i != chosen);
        steps.push(RawStep {
            chosen,
            gain: best,
            ties,
            phase: Phase::Greedy,
        });
    }

    // Nothing left adds coverage: order the rest by their own totals.
    while !remaining.is_empty() {
        let best = remaining.iter().map(|&i| rows[i].len()).max().unwrap_or(0);
        let ties: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| rows[i].len() == best)
            .collect();
        let chosen = pick(&ties, rng);
        remaining.retain(|&i| i != chosen);
        steps.push(RawStep {
            chosen,
            gain: 0,
            ties,
            phase: Phase::Residual,
        });
    }
    steps
}

fn finish(
    mrs: &[MrId],
    steps: Vec<RawStep>,
    method: Method,
    seed: u64,
    role: DatasetRole,
) -> (MrOrdering, GreedyTrace) {
    let order: Vec<MrId> = steps.iter().map(|s| mrs[s.chosen].clone()).collect();
    let trace = GreedyTrace {
        steps: steps
            .into_iter()
            .map(|s| GreedyStep {
                chosen: mrs[s.chosen].clone(),
                marginal_gain: s.gain,
                tie_set: s.ties.iter().map(|&i| mrs[i].clone()).collect(),
                phase: s.phase,
            })
            .collect(),
    };
    let ordering = MrOrdering::new(order, mrs, method, Some(seed), DatasetMeta::unlabeled(role))
        .expect("greedy emits every MR exactly once");
    (ordering, trace)
}

fn kill_rows(km: &KillMatrix) -> Vec<Vec<usize>> {
    (0..km.num_mrs()).map(|i| km.kills_of(i)).collect()
}

/// Greedy ordering by faults revealed in the prioritizing matrix.
pub fn fault_based_order(
    fp: &KillMatrix,
    seed: u64,
) -> Result<(MrOrdering, GreedyTrace), PrioritizeError> {
    if fp.is_empty() {
        return Err(PrioritizeError::EmptyMatrix);
    }
    let steps = greedy(&kill_rows(fp), fp.num_faults(), &mut rng_from_seed(seed));
    Ok(finish(
        fp.mrs(),
        steps,
        Method::FaultBased,
        seed,
        DatasetRole::Prioritizing,
    ))
}

/// The same greedy run directly on the validation matrix; an upper-bound
/// reference for the other orderings.
pub fn optimal_order(
    fv: &KillMatrix,
    seed: u64,
) -> Result<(MrOrdering, GreedyTrace), PrioritizeError> {
    if fv.is_empty() {
        return Err(PrioritizeError::EmptyMatrix);
    }
    let steps = greedy(&kill_rows(fv), fv.num_faults(), &mut rng_from_seed(seed));
    Ok(finish(
        fv.mrs(),
        steps,
        Method::Optimal,
        seed,
        DatasetRole::Validation,
    ))
}

/// Greedy additional-coverage ordering over statement or branch units.
pub fn coverage_based_order(
    cov: &CoverageProfile,
    criterion: CoverageCriterion,
    seed: u64,
) -> Result<(MrOrdering, GreedyTrace), PrioritizeError> {
    let sets = cov
        .units(criterion)
        .ok_or(PrioritizeError::MissingCriterion(criterion))?;
    if cov.mrs().is_empty() {
        return Err(PrioritizeError::EmptyMatrix);
    }
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for unit in sets.iter().flatten() {
        let next = index.len();
        index.entry(unit.as_str()).or_insert(next);
    }
    let rows: Vec<Vec<usize>> = sets
        .iter()
        .map(|s| s.iter().map(|u| index[u.as_str()]).collect())
        .collect();
    let steps = greedy(&rows, index.len(), &mut rng_from_seed(seed));
    let method = match criterion {
        CoverageCriterion::Statement => Method::StatementCoverage,
        CoverageCriterion::Branch => Method::BranchCoverage,
    };
    Ok(finish(
        cov.mrs(),
        steps,
        method,
        seed,
        DatasetRole::Prioritizing,
    ))
}

/// `n` uniform random permutations of `mrs`. Ordering `i` is shuffled by a
/// generator seeded with `seed + i` (wrapping), so any subset of indices can
/// be regenerated independently.
pub fn random_orders(
    mrs: &[MrId],
    n: usize,
    seed: u64,
) -> Result<Vec<MrOrdering>, PrioritizeError> {
    if n == 0 {
        return Err(PrioritizeError::ZeroOrderings);
    }
    Ok((0..n as u64)
        .map(|i| random_order(mrs, seed.wrapping_add(i)))
        .collect())
}

pub fn random_order(mrs: &[MrId], seed: u64) -> MrOrdering {
    let mut order = mrs.to_vec();
    order.shuffle(&mut rng_from_seed(seed));
    MrOrdering::new(
        order,
        mrs,
        Method::Random,
        Some(seed),
        DatasetMeta::unlabeled(DatasetRole::Validation),
    )
    .expect("shuffle preserves the set")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FaultId, UnitSet};
    use proptest::prelude::*;

    fn mr(s: &str) -> MrId {
        MrId::new(s).unwrap()
    }

    fn names(o: &MrOrdering) -> Vec<&str> {
        o.order().iter().map(MrId::as_str).collect()
    }

    /// `rows[i]` lists the 1-based fault numbers killed by MR `names[i]`.
    fn km(names: &[&str], nfaults: usize, rows: &[&[usize]]) -> KillMatrix {
        let table = rows
            .iter()
            .map(|r| (1..=nfaults).map(|f| r.contains(&f)).collect())
            .collect();
        KillMatrix::from_table(
            names.iter().map(|n| mr(n)).collect(),
            (1..=nfaults)
                .map(|f| FaultId::new(format!("f{f}")).unwrap())
                .collect(),
            table,
        )
        .unwrap()
    }

    #[test]
    fn three_mr_example() {
        // B and C both add only f4 at step 2, so the seed picks between them.
        let fp = km(&["A", "B", "C"], 4, &[&[1, 2, 3], &[3, 4], &[4]]);
        for seed in 0..20 {
            let (order, trace) = fault_based_order(&fp, seed).unwrap();
            assert_eq!(trace.gains(), vec![3, 1, 0]);
            assert_eq!(order.order()[0].as_str(), "A");
            assert_eq!(trace.steps[1].tie_set, vec![mr("B"), mr("C")]);
            assert_eq!(trace.steps[2].phase, Phase::Residual);
            let got = names(&order);
            assert!(got == ["A", "B", "C"] || got == ["A", "C", "B"]);
        }
    }

    #[test]
    fn three_mr_example_seed_7() {
        let fp = km(&["A", "B", "C"], 4, &[&[1, 2, 3], &[3, 4], &[4]]);
        let (order, _) = fault_based_order(&fp, 7).unwrap();
        assert_eq!(names(&order), ["A", "B", "C"]);
    }

    #[test]
    fn tie_free_example_is_fixed() {
        let fp = km(&["A", "B", "C"], 6, &[&[1, 2, 3, 4], &[4, 5, 6], &[6]]);
        for seed in 0..10 {
            let (order, trace) = fault_based_order(&fp, seed).unwrap();
            assert_eq!(names(&order), ["A", "B", "C"]);
            assert_eq!(trace.gains(), vec![4, 2, 0]);
            assert!(trace.is_tie_free());
        }
    }

    #[test]
    fn single_mr_and_empty() {
        let fp = km(&["A"], 1, &[&[1]]);
        assert_eq!(names(&fault_based_order(&fp, 0).unwrap().0), ["A"]);
        let empty = KillMatrix::from_table(vec![], vec![], vec![]).unwrap();
        assert_eq!(
            fault_based_order(&empty, 0).unwrap_err(),
            PrioritizeError::EmptyMatrix
        );
        assert_eq!(
            optimal_order(&empty, 0).unwrap_err(),
            PrioritizeError::EmptyMatrix
        );
    }

    #[test]
    fn perfect_tie_is_reproducible() {
        let fp = km(&["A", "B"], 1, &[&[1], &[1]]);
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..32 {
            let a = fault_based_order(&fp, seed).unwrap();
            let b = fault_based_order(&fp, seed).unwrap();
            assert_eq!(a, b);
            seen.insert(names(&a.0).join(""));
        }
        // both outcomes occur across seeds
        assert_eq!(seen.len(), 2);
    }

    #[test]
    fn optimal_tie_example() {
        // A and B both kill two faults: step 1 is a tie; whichever wins, the
        // other MR or C finishes coverage at step 2.
        let fv = km(&["A", "B", "C"], 3, &[&[1, 2], &[2, 3], &[3]]);
        let mut firsts = std::collections::BTreeSet::new();
        for seed in 0..32 {
            let (order, trace) = optimal_order(&fv, seed).unwrap();
            assert_eq!(trace.steps[0].tie_set, vec![mr("A"), mr("B")]);
            assert_eq!(trace.gains()[..2], [2, 1]);
            assert_eq!(order.method, Method::Optimal);
            firsts.insert(order.order()[0].clone());
            let covered: usize = order
                .top(2)
                .iter()
                .flat_map(|m| fv.kills_of(fv.mr_index(m).unwrap()))
                .collect::<std::collections::BTreeSet<_>>()
                .len();
            assert_eq!(covered, 3);
        }
        assert_eq!(firsts.len(), 2);
    }

    #[test]
    fn optimal_matches_fault_based_on_same_input() {
        let m = km(&["A", "B", "C"], 6, &[&[1, 2, 3, 4], &[4, 5, 6], &[6]]);
        let a = fault_based_order(&m, 1).unwrap();
        let b = optimal_order(&m, 2).unwrap();
        assert_eq!(a.0.order(), b.0.order());
        assert_eq!(a.1, b.1);
    }

    fn cov(entries: &[(&str, &[&str])]) -> CoverageProfile {
        let mrs = entries.iter().map(|(m, _)| mr(m)).collect();
        let sets: Vec<UnitSet> = entries
            .iter()
            .map(|(_, us)| us.iter().map(|u| u.to_string()).collect())
            .collect();
        CoverageProfile::new(mrs, Some(sets), None).unwrap()
    }

    #[test]
    fn coverage_examples() {
        let c = cov(&[
            ("A", &["s1", "s2", "s3"]),
            ("B", &["s3", "s4"]),
            ("C", &["s4"]),
        ]);
        let (order, trace) = coverage_based_order(&c, CoverageCriterion::Statement, 7).unwrap();
        assert_eq!(trace.gains(), vec![3, 1, 0]);
        assert_eq!(names(&order), ["A", "B", "C"]);
        assert_eq!(order.method, Method::StatementCoverage);

        let c = cov(&[("A", &[]), ("B", &["s1"])]);
        let (order, trace) = coverage_based_order(&c, CoverageCriterion::Statement, 0).unwrap();
        assert_eq!(names(&order), ["B", "A"]);
        assert_eq!(trace.gains(), vec![1, 0]);

        assert_eq!(
            coverage_based_order(&c, CoverageCriterion::Branch, 0).unwrap_err(),
            PrioritizeError::MissingCriterion(CoverageCriterion::Branch)
        );
    }

    #[test]
    fn identical_coverage_is_all_ties() {
        let c = cov(&[
            ("A", &["s1"]),
            ("B", &["s1"]),
            ("C", &["s1"]),
            ("D", &["s1"]),
        ]);
        let (order, trace) = coverage_based_order(&c, CoverageCriterion::Statement, 3).unwrap();
        assert_eq!(order.len(), 4);
        assert!(trace
            .steps
            .iter()
            .all(|s| s.tie_set.len() > 1 || s == trace.steps.last().unwrap()));
        let distinct: std::collections::BTreeSet<Vec<MrId>> = (0..50)
            .map(|s| {
                coverage_based_order(&c, CoverageCriterion::Statement, s)
                    .unwrap()
                    .0
                    .order()
                    .to_vec()
            })
            .collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn random_examples() {
        let one = random_orders(&[mr("A")], 1, 9).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(names(&one[0]), ["A"]);

        let mrs: Vec<MrId> = (1..=8).map(|i| mr(&format!("MR{i}"))).collect();
        let a = random_orders(&mrs, 100, 42).unwrap();
        let b = random_orders(&mrs, 100, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);

        let two = random_orders(&[mr("A"), mr("B")], 3, 0).unwrap();
        for o in &two {
            let mut n = names(o);
            n.sort();
            assert_eq!(n, ["A", "B"]);
        }
        assert_eq!(
            random_orders(&mrs, 0, 0).unwrap_err(),
            PrioritizeError::ZeroOrderings
        );
    }

    #[test]
    fn random_sub_seed_rule() {
        let mrs: Vec<MrId> = (1..=6).map(|i| mr(&format!("MR{i}"))).collect();
        let batch = random_orders(&mrs, 10, u64::MAX - 3).unwrap();
        for (i, o) in batch.iter().enumerate() {
            let single = random_order(&mrs, (u64::MAX - 3).wrapping_add(i as u64));
            assert_eq!(o, &single);
        }
    }

    fn arb_matrix() -> impl Strategy<Value = KillMatrix> {
        (1usize..=8, 0usize..=30).prop_flat_map(|(m, f)| {
            proptest::collection::vec(proptest::collection::vec(any::<bool>(), f), m).prop_map(
                move |table| {
                    KillMatrix::from_table(
                        (0..m).map(|i| mr(&format!("MR{i}"))).collect(),
                        (0..f)
                            .map(|i| FaultId::new(format!("f{i}")).unwrap())
                            .collect(),
                        table,
                    )
                    .unwrap()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn output_is_full_permutation(km in arb_matrix(), seed in any::<u64>()) {
            let (order, trace) = fault_based_order(&km, seed).unwrap();
            prop_assert!(crate::model::same_mr_set(order.order(), km.mrs()));
            prop_assert_eq!(trace.steps.len(), km.num_mrs());
            for s in &trace.steps {
                prop_assert!(s.tie_set.contains(&s.chosen));
            }
        }

        #[test]
        fn first_pick_has_max_row_count(km in arb_matrix(), seed in any::<u64>()) {
            let (order, _) = fault_based_order(&km, seed).unwrap();
            let best = (0..km.num_mrs()).map(|i| km.kill_count(i)).max().unwrap();
            let first = km.mr_index(&order.order()[0]).unwrap();
            prop_assert_eq!(km.kill_count(first), best);
        }

        #[test]
        fn same_seed_same_order(km in arb_matrix(), seed in any::<u64>()) {
            prop_assert_eq!(fault_based_order(&km, seed).unwrap(), fault_based_order(&km, seed).unwrap());
        }
    }
}
