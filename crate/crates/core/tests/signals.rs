use gridsentry_core::attack::{apply_fdia, apply_ramp, AttackSpec, LabelMatrix};
use gridsentry_core::estimation::{wls_estimate, DcMeasurementModel};
use gridsentry_core::grid::{parse_case, CaseData};
use gridsentry_core::rng::{stream, Stage};
use gridsentry_core::scenario::{dc_power_flow, generate_series, LoadProfile, MeasurementSeries};
use proptest::prelude::*;
use rand::Rng;

fn case14() -> CaseData {
    parse_case(include_str!("../../../data/case14.m")).unwrap()
}

fn random_series(seed: u64, len: usize) -> MeasurementSeries {
    let case = case14();
    let m: Vec<f64> = {
        let mut rng = stream(seed, Stage::Schedule);
        (0..len).map(|_| rng.random_range(0.5..1.5)).collect()
    };
    let profile = LoadProfile::new(m, 30.0).unwrap();
    generate_series(&case, &profile, 1e-3, &mut stream(seed, Stage::Noise)).unwrap()
}

fn spec_strategy(len: usize) -> impl Strategy<Value = AttackSpec> {
    (
        proptest::collection::btree_set(1u32..=14, 1..4),
        0..len,
        0..len,
        0u8..2,
        0.0f64..0.05,
    )
        .prop_map(|(targets, a, b, sign, x)| AttackSpec::fdia(targets.into_iter().collect(), a.min(b), a.max(b), sign, x))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noiseless_columns_balance(seed in any::<u64>(), len in 1usize..40) {
        let case = case14();
        let mut rng = stream(seed, Stage::Schedule);
        let m: Vec<f64> = (0..len).map(|_| rng.random_range(0.1..3.0)).collect();
        let s = generate_series(&case, &LoadProfile::new(m, 30.0).unwrap(), 0.0, &mut stream(seed, Stage::Noise)).unwrap();
        for t in 0..len {
            prop_assert!(s.column(t).iter().sum::<f64>().abs() <= 1e-9);
        }
    }

    #[test]
    fn fdia_touches_only_labelled_cells_and_inverts(seed in any::<u64>(), spec in spec_strategy(50)) {
        let clean = random_series(seed, 50);
        let (attacked, labels) = apply_fdia(&clean, &spec).unwrap();
        let offset = spec.signed_offset();
        for bus in 0..clean.n() {
            let targeted = spec.targets.contains(&clean.bus_ids()[bus]);
            for t in 0..clean.len() {
                let inside = targeted && spec.window().contains(&t);
                prop_assert_eq!(labels.get(bus, t), u8::from(inside));
                if inside {
                    prop_assert_eq!(attacked.get(bus, t), clean.get(bus, t) + offset);
                    // Undoing the offset is exact up to the rounding of one addition.
                    let back = attacked.get(bus, t) - offset;
                    prop_assert!((back - clean.get(bus, t)).abs() <= f64::EPSILON * attacked.get(bus, t).abs().max(offset.abs()));
                } else {
                    prop_assert_eq!(attacked.get(bus, t).to_bits(), clean.get(bus, t).to_bits());
                }
            }
        }
    }

    #[test]
    fn ramp_starts_continuously(seed in any::<u64>(), spec in spec_strategy(50), slope in 1e-5f64..1e-3) {
        let clean = random_series(seed, 50);
        let ramp = AttackSpec::ramp(spec.targets.clone(), spec.t_start, spec.t_end, slope, 0.0);
        let (attacked, labels) = apply_ramp(&clean, &ramp, &mut stream(seed, Stage::AttackNoise)).unwrap();
        let mut expected = LabelMatrix::zeros(clean.n(), clean.len());
        let rows: Vec<usize> = ramp.targets.iter().map(|id| clean.bus_index(*id).unwrap()).collect();
        expected.mark(&rows, ramp.window());
        prop_assert_eq!(&labels, &expected);
        for &r in &rows {
            prop_assert_eq!(attacked.get(r, ramp.t_start), clean.get(r, ramp.t_start));
        }
        for bus in (0..clean.n()).filter(|b| !rows.contains(b)) {
            prop_assert_eq!(attacked.row(bus), clean.row(bus));
        }
    }

    #[test]
    fn wls_residual_is_weighted_orthogonal(seed in any::<u64>(), sigma in 1e-4f64..1e-2) {
        let model = DcMeasurementModel::new(&case14());
        let mut rng = stream(seed, Stage::Estimation);
        let z: Vec<f64> = (0..model.measurement_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let problem = model.problem(z, sigma).unwrap();
        let est = wls_estimate(&problem).unwrap();
        let h = &problem.h;
        for j in 0..h.cols() {
            let g: f64 = (0..h.rows()).map(|i| h[(i, j)] * est.residual[i] / problem.r_diag[i]).sum();
            let scale: f64 = (0..h.rows()).map(|i| (h[(i, j)] * est.residual[i] / problem.r_diag[i]).abs()).sum();
            prop_assert!(g.abs() <= 1e-9 * scale, "column {}: {}", j, g);
        }
    }

    #[test]
    fn larger_corruption_never_shrinks_residual(m in 0.5f64..1.5, row in 0usize..34, a in -0.5f64..0.5, grow in 1.0f64..4.0) {
        let case = case14();
        let model = DcMeasurementModel::new(&case);
        let sol = dc_power_flow(&case, m).unwrap();
        let z: Vec<f64> = sol.injections.iter().chain(&sol.flows).copied().collect();
        let norm = |e: f64| {
            let mut z = z.clone();
            let k = row % z.len();
            z[k] += e;
            wls_estimate(&model.problem(z, 1e-3).unwrap()).unwrap().residual_norm
        };
        prop_assert!(norm(a * grow) >= norm(a) - 1e-12);
    }
}
