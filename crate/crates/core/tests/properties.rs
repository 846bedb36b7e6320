use ibturbo::hw::{self, GateCostTable};
use ibturbo::sim::{read_results_csv, snr_at_ber, write_results_csv, ResultRow};
use ibturbo::turbo::TurboSchedule;
use proptest::prelude::*;

fn row(snr_db: f64, ber: f64, elapsed: f64) -> ResultRow {
    ResultRow {
        snr_db,
        frames: 10,
        bit_errors: 3,
        frame_errors: 1,
        ber,
        fer: 0.1,
        ber_stderr: 0.0,
        feedback_info: "0.0000;0.5000".into(),
        elapsed,
        config_hash: "00ff".into(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn result_rows_round_trip_through_csv(snr in -5.0f64..20.0, ber in 0.0f64..0.5, elapsed in 0.0f64..100.0) {
        let rows = vec![row(snr, ber, elapsed)];
        let mut buf = Vec::new();
        write_results_csv(&rows, &mut buf).unwrap();
        let back = read_results_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, rows);
    }

    #[test]
    fn outcome_equality_ignores_elapsed(a in 0.0f64..10.0, b in 0.0f64..10.0) {
        prop_assert!(row(1.0, 0.01, a).same_outcome(&row(1.0, 0.01, b)));
        prop_assert!(!row(1.0, 0.01, a).same_outcome(&row(1.0, 0.02, a)));
    }

    /// The crossing lies inside the bracketing interval and moves right as
    /// the curve shifts right.
    #[test]
    fn ber_crossing_is_bracketed_and_shift_covariant(
        b0 in -4.0f64..-3.1,
        b1 in -2.9f64..-1.0,
        shift in -2.0f64..2.0,
    ) {
        let rows = vec![row(1.0, 10f64.powf(b1), 0.0), row(2.0, 10f64.powf(b0), 0.0)];
        let s = snr_at_ber(&rows, 1e-3).unwrap();
        prop_assert!((1.0..=2.0).contains(&s));
        let moved: Vec<ResultRow> = rows.iter().map(|r| ResultRow { snr_db: r.snr_db + shift, ..r.clone() }).collect();
        prop_assert!((snr_at_ber(&moved, 1e-3).unwrap() - s - shift).abs() < 1e-9);
    }

    #[test]
    fn schedules_round_trip_through_text(iters in prop::collection::vec(1usize..30, 1..5)) {
        let s = TurboSchedule::new(iters.clone(), true).unwrap();
        let back: TurboSchedule = s.to_string().parse().unwrap();
        prop_assert_eq!(back.n_it(), iters.len() - 1);
        prop_assert_eq!(back.budget(), iters.iter().sum::<usize>());
    }

    /// Wider metrics never store less, at any sub-block length.
    #[test]
    fn memory_cost_grows_with_metric_width(w in 2u32..12, extra in 1u32..8, half in 1usize..200) {
        let g = GateCostTable::default();
        let block = hw::BlockCost { logic: 1000, levels: 12, io_bits: 20 };
        let model = |w: u32| hw::CostModel {
            label: String::new(),
            iterations: vec![hw::IterationBlocks {
                alpha: block,
                beta: block,
                final_update: block,
                w_alpha: w,
                w_beta: w,
                w_e: 4,
            }],
            d_p: hw::DEFAULT_DP,
            gates: g,
        };
        let n_b = 2 * half;
        let small = hw::pipeline_memory_cost(&model(w), n_b, 10).unwrap();
        let large = hw::pipeline_memory_cost(&model(w + extra), n_b, 10).unwrap();
        prop_assert!(small.xi_memory <= large.xi_memory);
        prop_assert!((small.xi_update - large.xi_update).abs() < 1e-9);
    }
}
