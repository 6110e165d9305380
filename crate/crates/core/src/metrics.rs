//! Evaluation measures: detection curves, random-baseline averaging,
//! relative improvement, effective MR set size and time to detect a fault.

use std::collections::HashMap;

use serde::Serialize;

use crate::model::{same_mr_set, CostProfile, DetectionCurve, KillMatrix, MrId, MrOrdering};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("ordering and kill matrix cover different MR sets")]
    MrSetMismatch,

    #[error("curve lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("no curves to average")]
    EmptyList,

    #[error("curve needs at least two points, got {0}")]
    CurveTooShort(usize),

    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),

    #[error("no cost recorded for {0}")]
    MissingCost(MrId),

    #[error("validation matrix has no killable faults")]
    NoKillableFaults,

    #[error("baseline time must be positive")]
    ZeroBaseline,
}

/// What the detection percentage is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    /// Every fault in the validation matrix.
    #[default]
    AllFaults,
    /// Only faults some MR kills.
    Killable,
}

fn mr_rows(order: &MrOrdering, fv: &KillMatrix) -> Result<Vec<usize>, MetricsError> {
    if !same_mr_set(order.order(), fv.mrs()) {
        return Err(MetricsError::MrSetMismatch);
    }
    let index: HashMap<&MrId, usize> = fv.mrs().iter().enumerate().map(|(i, m)| (m, i)).collect();
    Ok(order.order().iter().map(|m| index[m]).collect())
}

/// Percentage of all validation faults killed by each prefix of `order`.
pub fn detection_curve(
    order: &MrOrdering,
    fv: &KillMatrix,
) -> Result<DetectionCurve, MetricsError> {
    detection_curve_over(order, fv, Denominator::AllFaults)
}

/// [`detection_curve`] with a choice of denominator. A zero denominator
/// yields an all-zero curve.
pub fn detection_curve_over(
    order: &MrOrdering,
    fv: &KillMatrix,
    denominator: Denominator,
) -> Result<DetectionCurve, MetricsError> {
    let rows = mr_rows(order, fv)?;
    let total = match denominator {
        Denominator::AllFaults => fv.num_faults(),
        Denominator::Killable => (0..fv.num_faults()).filter(|&c| fv.is_killable(c)).count(),
    };
    let mut killed = vec![false; fv.num_faults()];
    let mut count = 0usize;
    let mut values = Vec::with_capacity(rows.len());
    for r in rows {
        for (slot, &k) in killed.iter_mut().zip(fv.row(r)) {
            if k && !*slot {
                *slot = true;
                count += 1;
            }
        }
        values.push(if total == 0 {
            0.0
        } else {
            100.0 * count as f64 / total as f64
        });
    }
    Ok(DetectionCurve::new(values))
}

/// Pointwise arithmetic mean.
pub fn mean_curve(curves: &[DetectionCurve]) -> Result<DetectionCurve, MetricsError> {
    let first = curves.first().ok_or(MetricsError::EmptyList)?;
    let len = first.len();
    let mut sums = vec![0.0; len];
    for c in curves {
        if c.len() != len {
            return Err(MetricsError::LengthMismatch(len, c.len()));
        }
        for (s, v) in sums.iter_mut().zip(c.values()) {
            *s += v;
        }
    }
    let n = curves.len() as f64;
    Ok(DetectionCurve::new(
        sums.into_iter().map(|s| s / n).collect(),
    ))
}

/// `100 * (target - baseline) / baseline` per set size.
///
/// A zero baseline gives 0 when the target is also zero and `f64::INFINITY`
/// otherwise (a negative target over a zero baseline cannot occur for
/// percentages, but would give `-inf`).
pub fn relative_improvement(
    target: &DetectionCurve,
    baseline: &DetectionCurve,
) -> Result<Vec<f64>, MetricsError> {
    if target.len() != baseline.len() {
        return Err(MetricsError::LengthMismatch(target.len(), baseline.len()));
    }
    Ok(target
        .values()
        .iter()
        .zip(baseline.values())
        .map(|(&t, &b)| {
            if b == 0.0 {
                if t == 0.0 {
                    0.0
                } else {
                    f64::INFINITY.copysign(t)
                }
            } else {
                100.0 * (t - b) / b
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "size")]
pub enum SetSize {
    Size(usize),
    NotMet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveSetSize {
    pub threshold: f64,
    pub size: SetSize,
}

impl EffectiveSetSize {
    pub fn size(&self) -> Option<usize> {
        match self.size {
            SetSize::Size(m) => Some(m),
            SetSize::NotMet => None,
        }
    }
}

/// Smallest prefix size `m` whose next step gains strictly less than
/// `threshold` percentage points.
pub fn effective_set_size(
    curve: &DetectionCurve,
    threshold: f64,
) -> Result<EffectiveSetSize, MetricsError> {
    if curve.len() < 2 {
        return Err(MetricsError::CurveTooShort(curve.len()));
    }
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(MetricsError::InvalidThreshold(threshold));
    }
    let size = curve
        .values()
        .windows(2)
        .position(|w| w[1] - w[0] < threshold)
        .map_or(SetSize::NotMet, |i| SetSize::Size(i + 1));
    Ok(EffectiveSetSize { threshold, size })
}

/// Mean time to detect a killable fault when MRs run sequentially in `order`.
///
/// A fault first killed by the MR at position `k` costs the sum of the costs
/// of positions `1..=k`.
pub fn avg_time_to_detect(
    order: &MrOrdering,
    fv: &KillMatrix,
    cost: &CostProfile,
) -> Result<f64, MetricsError> {
    let rows = mr_rows(order, fv)?;
    let mut elapsed = 0.0;
    let mut killed = vec![false; fv.num_faults()];
    let mut total = 0.0;
    let mut killable = 0usize;
    for (mr, r) in order.order().iter().zip(rows) {
        elapsed += cost
            .get(mr)
            .ok_or_else(|| MetricsError::MissingCost(mr.clone()))?;
        for (slot, &k) in killed.iter_mut().zip(fv.row(r)) {
            if k && !*slot {
                *slot = true;
                total += elapsed;
                killable += 1;
            }
        }
    }
    if killable == 0 {
        return Err(MetricsError::NoKillableFaults);
    }
    Ok(total / killable as f64)
}

/// Percentage by which `target_avg` undercuts `baseline_avg`.
pub fn time_reduction(target_avg: f64, baseline_avg: f64) -> Result<f64, MetricsError> {
    if baseline_avg.is_nan() || baseline_avg <= 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok(100.0 * (baseline_avg - target_avg) / baseline_avg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DatasetMeta, DatasetRole, FaultId, Method};
    use crate::prioritize::random_orders;
    use proptest::prelude::*;

    fn mr(s: &str) -> MrId {
        MrId::new(s).unwrap()
    }

    fn km(names: &[&str], nfaults: usize, rows: &[&[usize]]) -> KillMatrix {
        KillMatrix::from_table(
            names.iter().map(|n| mr(n)).collect(),
            (1..=nfaults)
                .map(|f| FaultId::new(format!("f{f}")).unwrap())
                .collect(),
            rows.iter()
                .map(|r| (1..=nfaults).map(|f| r.contains(&f)).collect())
                .collect(),
        )
        .unwrap()
    }

    fn ord(names: &[&str]) -> MrOrdering {
        let v: Vec<MrId> = names.iter().map(|n| mr(n)).collect();
        MrOrdering::new(
            v.clone(),
            &v,
            Method::External,
            None,
            DatasetMeta::unlabeled(DatasetRole::Validation),
        )
        .unwrap()
    }

    fn curve(v: &[f64]) -> DetectionCurve {
        DetectionCurve::new(v.to_vec())
    }

    #[test]
    fn curve_examples() {
        let fv = km(&["A", "B"], 4, &[&[1, 2], &[2, 3]]);
        let c = detection_curve(&ord(&["A", "B"]), &fv).unwrap();
        assert_eq!(c.values(), &[50.0, 75.0]);

        let c = detection_curve_over(&ord(&["A", "B"]), &fv, Denominator::Killable).unwrap();
        assert_eq!(c.values(), &[100.0 * 2.0 / 3.0, 100.0]);

        let dead = km(&["A", "B"], 3, &[&[], &[]]);
        assert_eq!(
            detection_curve(&ord(&["B", "A"]), &dead).unwrap().values(),
            &[0.0, 0.0]
        );

        let all = km(&["A"], 3, &[&[1, 2, 3]]);
        assert_eq!(
            detection_curve(&ord(&["A"]), &all).unwrap().values(),
            &[100.0]
        );

        assert_eq!(
            detection_curve(&ord(&["A", "C"]), &fv).unwrap_err(),
            MetricsError::MrSetMismatch
        );
    }

    #[test]
    fn mean_examples() {
        let m = mean_curve(&[curve(&[0.0, 100.0]), curve(&[100.0, 100.0])]).unwrap();
        assert_eq!(m.values(), &[50.0, 100.0]);
        let one = curve(&[10.0, 20.0]);
        assert_eq!(mean_curve(std::slice::from_ref(&one)).unwrap(), one);
        assert_eq!(mean_curve(&[]).unwrap_err(), MetricsError::EmptyList);
        assert_eq!(
            mean_curve(&[curve(&[1.0]), curve(&[1.0, 2.0])]).unwrap_err(),
            MetricsError::LengthMismatch(1, 2)
        );
    }

    #[test]
    fn improvement_examples() {
        let x = curve(&[10.0, 50.0, 100.0]);
        assert_eq!(relative_improvement(&x, &x).unwrap(), vec![0.0; 3]);
        assert_eq!(
            relative_improvement(&curve(&[30.0]), &curve(&[10.0])).unwrap(),
            vec![200.0]
        );
        assert_eq!(
            relative_improvement(&curve(&[5.0]), &curve(&[0.0])).unwrap(),
            vec![f64::INFINITY]
        );
        assert_eq!(
            relative_improvement(&curve(&[0.0]), &curve(&[0.0])).unwrap(),
            vec![0.0]
        );
        assert!(relative_improvement(&curve(&[0.0]), &curve(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn effective_size_examples() {
        let c = curve(&[60.0, 80.0, 90.0, 93.0]);
        assert_eq!(effective_set_size(&c, 5.0).unwrap().size, SetSize::Size(3));
        assert_eq!(effective_set_size(&c, 2.5).unwrap().size, SetSize::NotMet);
        assert_eq!(
            effective_set_size(&curve(&[70.0, 70.0]), 0.1)
                .unwrap()
                .size(),
            Some(1)
        );
        assert_eq!(
            effective_set_size(&curve(&[70.0]), 5.0).unwrap_err(),
            MetricsError::CurveTooShort(1)
        );
        assert!(effective_set_size(&c, 0.0).is_err());
        // strict: a gap equal to the threshold does not qualify
        assert_eq!(
            effective_set_size(&curve(&[10.0, 15.0, 17.0]), 5.0)
                .unwrap()
                .size(),
            Some(2)
        );
    }

    #[test]
    fn time_examples() {
        let fv = km(&["A", "B"], 3, &[&[1], &[2]]);
        let cost = CostProfile::new([(mr("A"), 10.0), (mr("B"), 20.0)]).unwrap();
        assert_eq!(
            avg_time_to_detect(&ord(&["A", "B"]), &fv, &cost).unwrap(),
            20.0
        );

        let fv = km(&["A", "B"], 3, &[&[1, 2, 3], &[2]]);
        assert_eq!(
            avg_time_to_detect(&ord(&["A", "B"]), &fv, &cost).unwrap(),
            10.0
        );

        let partial = CostProfile::new([(mr("A"), 10.0)]).unwrap();
        assert_eq!(
            avg_time_to_detect(&ord(&["A", "B"]), &fv, &partial).unwrap_err(),
            MetricsError::MissingCost(mr("B"))
        );
        let dead = km(&["A", "B"], 2, &[&[], &[]]);
        assert_eq!(
            avg_time_to_detect(&ord(&["A", "B"]), &dead, &cost).unwrap_err(),
            MetricsError::NoKillableFaults
        );
    }

    #[test]
    fn time_tail_is_irrelevant() {
        // C never kills a fault first, so appending it changes nothing.
        let two = km(&["A", "B"], 3, &[&[1], &[2, 3]]);
        let three = km(&["A", "B", "C"], 3, &[&[1], &[2, 3], &[1, 3]]);
        let cost = CostProfile::new([(mr("A"), 3.0), (mr("B"), 4.0), (mr("C"), 100.0)]).unwrap();
        assert_eq!(
            avg_time_to_detect(&ord(&["A", "B"]), &two, &cost).unwrap(),
            avg_time_to_detect(&ord(&["A", "B", "C"]), &three, &cost).unwrap()
        );
    }

    #[test]
    fn reduction_values() {
        assert_eq!(time_reduction(141.0, 244.0).unwrap().round(), 42.0);
        assert_eq!(time_reduction(58.0, 149.0).unwrap().round(), 61.0);
        assert_eq!(time_reduction(5.0, 5.0).unwrap(), 0.0);
        assert_eq!(
            time_reduction(5.0, 0.0).unwrap_err(),
            MetricsError::ZeroBaseline
        );
    }

    fn arb_matrix() -> impl Strategy<Value = KillMatrix> {
        (1usize..=8, 1usize..=30).prop_flat_map(|(m, f)| {
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
        fn curves_monotone_with_common_end(km in arb_matrix(), seed in any::<u64>()) {
            let curves: Vec<DetectionCurve> = random_orders(km.mrs(), 20, seed)
                .unwrap()
                .iter()
                .map(|o| detection_curve(o, &km).unwrap())
                .collect();
            let end = curves[0].last().unwrap();
            for c in &curves {
                prop_assert!(c.is_non_decreasing());
                prop_assert!(c.values().iter().all(|v| (0.0..=100.0).contains(v)));
                prop_assert_eq!(c.last().unwrap(), end);
            }
            let mean = mean_curve(&curves).unwrap();
            for (m, v) in mean.values().iter().enumerate() {
                let lo = curves.iter().map(|c| c.values()[m]).fold(f64::INFINITY, f64::min);
                let hi = curves.iter().map(|c| c.values()[m]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(*v >= lo - 1e-9 && *v <= hi + 1e-9);
            }
        }

        #[test]
        fn effective_size_antitone(
            steps in proptest::collection::vec(0.0f64..20.0, 1..12),
            hi in 0.1f64..20.0,
            frac in 0.01f64..1.0,
        ) {
            let mut acc = 0.0;
            let mut values = vec![0.0];
            for s in steps { acc += s; values.push(acc); }
            let c = DetectionCurve::new(values);
            let lo = hi * frac;
            let big = effective_set_size(&c, hi).unwrap();
            let small = effective_set_size(&c, lo).unwrap();
            if let (Some(a), Some(b)) = (big.size(), small.size()) {
                prop_assert!(a <= b);
                prop_assert!(a >= 1 && b < c.len());
            }
        }
    }
}
