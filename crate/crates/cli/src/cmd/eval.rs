use rayon::prelude::*;
use serde_json::json;

use datnet::evaluation::{cases_from_grid, score, CaseResult, MetricReport, NOISY_SYSTEM};
use datnet::network::Model;

use crate::args::EvalArgs;
use crate::data::load_mixed_set;
use crate::exit::{CliError, CliResult};
use crate::manifest::RunContext;

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";
const PARTITION: &str = "test";

pub fn run(ctx: &RunContext, a: &EvalArgs) -> CliResult<()> {
    let set = load_mixed_set(&a.test_manifest)?;
    let model = a.ckpt.as_ref().map(Model::load).transpose()?;
    let system = if a.oracle { "oracle" } else { a.system.as_str() };
    if system == NOISY_SYSTEM {
        return Err(CliError::config(format!("system name {NOISY_SYSTEM:?} is reserved")));
    }
    let config = json!({
        "ckpt": a.ckpt,
        "oracle": a.oracle,
        "test_manifest": a.test_manifest,
        "system": system,
        "model": model.as_ref().map(|m| &m.config),
    });
    ctx.begin("eval", &a.out, config, None)?;

    let cases = cases_from_grid(&set.corpus, &set.noise, &set.recipes, PARTITION)?;
    let scored: Vec<[CaseResult; 2]> = cases
        .par_iter()
        .map(|c| -> CliResult<[CaseResult; 2]> {
            let estimate = match &model {
                Some(m) => m.enhance(&c.noisy)?,
                None => c.clean.clone(),
            };
            let row = |name: &str, scores| CaseResult {
                partition: c.partition.clone(),
                noise_kind: c.noise_kind.clone(),
                snr_db: c.snr_db,
                system: name.to_string(),
                scores,
            };
            Ok([
                row(NOISY_SYSTEM, score(&c.clean, &c.noisy)?),
                row(system, score(&c.clean, &estimate)?),
            ])
        })
        .collect::<CliResult<_>>()?;
    let results: Vec<CaseResult> = scored.into_iter().flatten().collect();
    let report = MetricReport::from_cases(&results)?;
    report.write_csv(a.out.join(REPORT_CSV))?;
    report.write_json(a.out.join(REPORT_JSON))?;

    println!(
        "{:<16} {:>7} {:<10} {:>4} {:>9} {:>7} {:>8}",
        "noise", "snr", "system", "n", "sisdr", "stoi", "lsd"
    );
    for r in report.rows.iter().chain(&report.aggregates) {
        let snr = r.snr_db.map_or("all".to_string(), |s| format!("{s:+.1}"));
        println!(
            "{:<16} {:>7} {:<10} {:>4} {:>9.3} {:>7.4} {:>8.4}",
            r.noise_kind, snr, r.system, r.n, r.sisdr_db, r.stoi, r.lsd_db
        );
    }
    if report.has_nan() {
        return Err(CliError::numeric("report contains NaN metrics"));
    }
    Ok(())
}
