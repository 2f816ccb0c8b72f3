//! Measure derivative-to-primal cost ratios over a size sweep and check a
//! growth rule.
//!
//! cargo run --release --example cost_sweep

use chad::bench::{regression_check, AnyMode, Family, Rule};
use chad::chad::Mode;
use chad::hoc::HoMode;

fn main() {
    chad::with_big_stack(|| {
        let runs = [
            (Family::TMagic, AnyMode::FirstOrder(Mode::Monadic), 64, 4096),
            (Family::TMagic, AnyMode::FirstOrder(Mode::NaiveTreeMap), 64, 4096),
            (Family::TN, AnyMode::HigherOrder(HoMode::NaiveHo), 4, 10),
            (Family::TN, AnyMode::HigherOrder(HoMode::Defunctionalise), 64, 1024),
        ];
        for (family, mode, lo, hi) in runs {
            let rule = Rule::default_for(family, mode);
            let report = regression_check(family, mode, &rule.sweep(lo, hi).unwrap(), rule).unwrap();
            println!("{family} / {mode} ({rule}): {}", if report.pass { "pass" } else { "fail" });
            for row in &report.rows {
                println!("  n = {:5}  primal {:8}  derivative {:9}  adjusted ratio {:7.2}",
                    row.n, row.m.cost_primal, row.m.cost_derivative, row.m.adjusted_ratio);
            }
        }
    });
}
