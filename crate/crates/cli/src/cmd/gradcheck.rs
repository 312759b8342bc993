use serde_json::json;

use datnet::training::{grad_audit, AuditModule};

use crate::args::GradcheckArgs;
use crate::exit::{CliError, CliResult};
use crate::manifest::RunContext;

pub const REPORT_JSON: &str = "gradcheck.json";

pub fn run(ctx: &RunContext, a: &GradcheckArgs) -> CliResult<()> {
    let modules: Vec<AuditModule> = if a.module == "all" {
        AuditModule::ALL.to_vec()
    } else {
        a.module
            .split(',')
            .map(|m| m.trim().parse())
            .collect::<Result<_, _>>()?
    };
    if !(a.eps > 0.0 && a.eps.is_finite()) || !(a.tol > 0.0) {
        return Err(CliError::config("--eps and --tol must be positive"));
    }
    let dims = format!("{}x{}x{}", a.dims.channels, a.dims.freq, a.dims.frames);
    if let Some(out) = &a.out {
        let config = json!({ "modules": modules.iter().map(|m| m.name()).collect::<Vec<_>>(), "dims": dims, "eps": a.eps, "tol": a.tol });
        ctx.begin("gradcheck", out, config, Some(a.seed))?;
    }

    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for m in modules {
        let r = grad_audit(m, a.dims, a.eps, a.seed)?;
        let pass = r.passes(a.tol);
        println!(
            "{:<26} max_rel_error {:.3e}  checked {:>5}  {}",
            m.name(),
            r.max_rel_error,
            r.checked,
            if pass { "PASS" } else { "FAIL" }
        );
        if !pass {
            println!("{:<26} worst element {}", "", r.worst);
            failed.push(m.name());
        }
        rows.push(json!({
            "module": m.name(),
            "max_rel_error": r.max_rel_error,
            "worst": r.worst,
            "checked": r.checked,
            "pass": pass,
        }));
    }
    if let Some(out) = &a.out {
        std::fs::write(out.join(REPORT_JSON), serde_json::to_string_pretty(&rows)?)?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::numeric(format!(
            "gradient mismatch above {:e} in {}",
            a.tol,
            failed.join(", ")
        )))
    }
}
