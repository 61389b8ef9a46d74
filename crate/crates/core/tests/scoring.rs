use gridsentry_core::attack::{AttackSpec, LabelMatrix};
use gridsentry_core::metrics::{detection_delay, evaluate};
use proptest::prelude::*;

fn labels(n: usize, len: usize) -> impl Strategy<Value = LabelMatrix> {
    proptest::collection::vec(0u8..2, n * len).prop_map(move |v| LabelMatrix::from_values(n, len, v).unwrap())
}

fn pair() -> impl Strategy<Value = (LabelMatrix, LabelMatrix, Vec<usize>)> {
    (1usize..7, 1usize..30).prop_flat_map(|(n, len)| {
        (labels(n, len), labels(n, len), Just((0..n).collect::<Vec<usize>>()).prop_shuffle())
    })
}

fn permute_rows(m: &LabelMatrix, perm: &[usize]) -> LabelMatrix {
    let mut out = LabelMatrix::zeros(m.n(), m.len());
    for (new, &old) in perm.iter().enumerate() {
        for t in 0..m.len() {
            out.set(new, t, m.get(old, t));
        }
    }
    out
}

/// Specs on a single row about 40 samples long, plus a matching truth.
fn delay_case() -> impl Strategy<Value = (Vec<AttackSpec>, LabelMatrix, LabelMatrix, LabelMatrix)> {
    let len = 40;
    (
        proptest::collection::vec((0..len, 0..len), 1..4),
        labels(2, len),
        labels(2, len),
    )
        .prop_map(move |(windows, pred, extra)| {
            let specs: Vec<AttackSpec> = windows
                .into_iter()
                .map(|(a, b)| AttackSpec::fdia(vec![1], a.min(b), a.max(b), 0, 0.02))
                .collect();
            let mut truth = LabelMatrix::zeros(2, len);
            for s in &specs {
                truth.mark(&[0], s.window());
            }
            (specs, truth, pred, extra)
        })
}

proptest! {
    #[test]
    fn evaluate_commutes_with_bus_relabelling((pred, truth, perm) in pair()) {
        let a = evaluate(&pred, &truth).unwrap();
        let b = evaluate(&permute_rows(&pred, &perm), &permute_rows(&truth, &perm)).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            prop_assert_eq!(b.per_bus_accuracy[new], a.per_bus_accuracy[old]);
        }
        prop_assert_eq!(a.accuracy, b.accuracy);
        prop_assert_eq!(a.f1, b.f1);
        prop_assert_eq!(a.false_alarm_rate, b.false_alarm_rate);
        prop_assert_eq!(a.confusion, b.confusion);
    }

    #[test]
    fn fractions_are_consistent((pred, truth, _) in pair()) {
        let r = evaluate(&pred, &truth).unwrap();
        let c = r.confusion;
        let total = (c.tp + c.fp + c.fn_ + c.tn) as f64;
        let error = (c.fp + c.fn_) as f64 / total;
        prop_assert_eq!(r.accuracy + error, 1.0);
        for v in [r.accuracy, r.precision, r.recall, r.f1, r.false_alarm_rate] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let silent = evaluate(&LabelMatrix::zeros(truth.n(), truth.len()), &truth).unwrap();
        prop_assert_eq!(silent.false_alarm_rate, 0.0);
    }

    #[test]
    fn more_alarms_never_delay_detection((specs, truth, pred, extra) in delay_case()) {
        let ids = [1u32, 2];
        let before = detection_delay(&pred, &truth, &specs, &ids).unwrap();
        let mut tighter = pred.clone();
        tighter.union(&extra);
        let after = detection_delay(&tighter, &truth, &specs, &ids).unwrap();
        for (b, a) in before.delays.iter().zip(&after.delays) {
            match (b, a) {
                (Some(b), Some(a)) => prop_assert!(a <= b),
                (Some(_), None) => prop_assert!(false, "detection lost"),
                _ => {}
            }
        }
    }
}
