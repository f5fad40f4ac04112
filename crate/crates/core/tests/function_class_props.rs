use chaining::function_class::{
    approx_step, dyadic_select, interpolation_bounds, xi_functional, ApproxCase, ApproxParams, PLFunction,
    SelectionParams,
};
use proptest::prelude::*;

/// Piecewise linear functions with total variation at most 1.
fn pl_function() -> impl Strategy<Value = PLFunction> {
    (1u32..=8).prop_flat_map(|res| {
        prop::collection::vec(-1.0f64..1.0, (1usize << res) + 1).prop_map(move |v| {
            let f = PLFunction::new(res, v).unwrap();
            let tv = f.total_variation();
            if tv > 1.0 {
                f.scaled(1.0 / tv)
            } else {
                f
            }
        })
    })
}

fn failures(c: &chaining::report::Checks) -> Vec<String> {
    c.failures().map(|f| format!("{}: {} > {} {}", f.name, f.lhs, f.rhs, f.detail)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interpolation_residual_bound(f in pl_function(), a in 0.0f64..1.0, b in 0.0f64..1.0, theta in 0.2f64..2.0) {
        let n = f.pieces();
        let lo = ((a.min(b) * n as f64) as usize).min(n - 1);
        let hi = ((a.max(b) * n as f64).ceil() as usize).clamp(lo + 1, n);
        let rep = interpolation_bounds(&f, lo, hi, theta).unwrap();
        prop_assert!(rep.checks.all_passed(), "{:?}", failures(&rep.checks));
    }

    #[test]
    fn xi_is_convex_and_below_identity(f in pl_function(), theta in 0.2f64..2.0) {
        let rep = xi_functional(&f, theta).unwrap();
        prop_assert!(rep.checks.all_passed(), "{:?}", failures(&rep.checks));
        prop_assert!(rep.total <= rep.variation + 1e-12);
    }

    #[test]
    fn selection_counts_meet_closed_forms(f in pl_function(), ell0 in 0u32..4, di in 0usize..3) {
        let params = SelectionParams::new([1.1, 1.25, 1.4][di], 0.3).unwrap();
        let fam = dyadic_select(&f, params, ell0).unwrap();
        prop_assert!(fam.checks.all_passed(), "{:?}", failures(&fam.checks));
        // The bound applies past the starting level.
        for (count, bound) in fam.counts.iter().zip(&fam.count_bounds).skip(1) {
            prop_assert!((*count as f64) <= *bound);
        }
    }

    #[test]
    fn approximation_step_dichotomy(f in pl_function(), ri in 0usize..2, k in 0i32..3, log_n in 1.0f64..256.0) {
        let params = ApproxParams {
            r: [4.0, 8.0][ri],
            k,
            l: 1.0,
            log_n,
            selection: SelectionParams::default(),
        };
        let step = approx_step(&f, &params).unwrap();
        let rep = &step.report;
        prop_assert!(rep.checks.all_passed(), "{:?}", failures(&rep.checks));
        let reduce = ["subfamily mass", "reduction residual identity", "xi drop positive"];
        let interp = ["interpolation distance", "parameter count"];
        let (present, absent) = match rep.case {
            ApproxCase::Reduce => (&reduce[..], &interp[..]),
            ApproxCase::Interpolate => (&interp[..], &reduce[..]),
        };
        for name in present {
            prop_assert!(rep.checks.get(name).is_some(), "missing {name}");
        }
        for name in absent {
            prop_assert!(rep.checks.get(name).is_none(), "unexpected {name}");
        }
    }
}
