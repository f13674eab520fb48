//! One line per acceptance criterion. Exits non-zero if any criterion fails.

use std::process::ExitCode;

use grape_core::verify::{self, CriterionResult};

type Check<'a> = (&'static str, Box<dyn Fn() -> grape_core::Result<CriterionResult> + 'a>);

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temp dir");
    let checks: Vec<Check> = vec![
        ("update-rule oracle", Box::new(|| verify::update_oracle(1000, 0))),
        ("simplex conservation", Box::new(|| verify::simplex_conservation(0))),
        ("roi taylor scaling", Box::new(|| Ok(verify::taylor_scaling()))),
        (
            "worst-task convergence",
            Box::new(|| {
                Ok(CriterionResult::combine(
                    "worst-task convergence",
                    &verify::theorem1(0)?,
                ))
            }),
        ),
        (
            "variance monotonicity",
            Box::new(|| Ok(CriterionResult::combine("variance monotonicity", &verify::theorem2(0)?))),
        ),
        ("dro prioritization", Box::new(verify::prioritization)),
        ("pcgrad property", Box::new(|| verify::pcgrad_property(200, 0))),
        (
            "overhead identity",
            Box::new(|| {
                let parts = [verify::overhead_identity()?, verify::overhead_closed_form(20, 0)?];
                Ok(CriterionResult::combine("overhead identity", &parts))
            }),
        ),
        ("multilingual analog", Box::new(|| Ok(verify::multilingual(10)?.0))),
        ("gradient contract", Box::new(|| verify::gradient_contract(100, 0))),
        ("determinism", Box::new(|| verify::determinism(dir.path()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let line = match check() {
            Ok(r) => {
                failed += usize::from(!r.passed);
                format!("{:>2}. {r}", i + 1)
            }
            Err(e) => {
                failed += 1;
                format!("{:>2}. FAIL {name}: error: {e}", i + 1)
            }
        };
        println!("{line}");
    }
    println!(
        "acceptance: {} of {} criteria passed",
        checks.len() - failed,
        checks.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
