use serde_json::json;

use datnet::network::{Model, ModelConfig, Variant};
use datnet::params::Parameters;

use crate::args::ParamsArgs;
use crate::cmd::train::{apply_model_overrides, read_json, RunConfig};
use crate::exit::CliResult;
use crate::manifest::RunContext;

pub const REPORT_JSON: &str = "params.json";

/// Accepts a bare model configuration or a full training configuration.
pub fn resolve(a: &ParamsArgs) -> CliResult<ModelConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            let v: serde_json::Value = read_json(p)?;
            if v.get("model").is_some() {
                serde_json::from_value::<RunConfig>(v)?.model
            } else {
                serde_json::from_value(v)?
            }
        }
        None => ModelConfig::reference(Variant::Base),
    };
    apply_model_overrides(&mut cfg, &a.model);
    cfg.validate()?;
    Ok(cfg)
}

/// Parameter counts grouped by layer: the first path component, plus the
/// index for repeated blocks (`encoder.3`, `datrnn.0`, `in_proj`).
pub fn layer_counts(model: &Model) -> Vec<(String, usize)> {
    let mut out: Vec<(String, usize)> = Vec::new();
    for (name, n) in model.tensor_sizes() {
        let mut parts = name.split('.');
        let head = parts.next().unwrap_or_default();
        let layer = match parts.next() {
            Some(i) if i.chars().all(|c| c.is_ascii_digit()) => format!("{head}.{i}"),
            _ => head.to_string(),
        };
        match out.last_mut() {
            Some((l, total)) if *l == layer => *total += n,
            _ => out.push((layer, n)),
        }
    }
    out
}

fn with_variant(cfg: &ModelConfig, variant: Variant) -> ModelConfig {
    ModelConfig { variant, ..cfg.clone() }
}

pub fn run(ctx: &RunContext, a: &ParamsArgs) -> CliResult<()> {
    let cfg = resolve(a)?;
    if a.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    if let Some(out) = &a.out {
        ctx.begin("params", out, serde_json::to_value(&cfg)?, Some(cfg.seed))?;
    }
    let model = Model::build(&cfg)?;
    let layers = layer_counts(&model);
    println!("{:<16} {:>12}", "layer", "params");
    for (layer, n) in &layers {
        println!("{layer:<16} {n:>12}");
    }
    let total = model.count_params();
    println!("{:<16} {:>12}", format!("total ({})", cfg.variant), total);

    let base = Model::build(&with_variant(&cfg, Variant::Base))?.count_params();
    let light = Model::build(&with_variant(&cfg, Variant::L))?.count_params();
    let ratio = base as f64 / light as f64;
    println!("base {base}  l {light}  ratio {ratio:.3}");

    if let Some(out) = &a.out {
        let report = json!({
            "variant": cfg.variant,
            "layers": layers.iter().map(|(l, n)| json!({ "layer": l, "params": n })).collect::<Vec<_>>(),
            "total": total,
            "base_total": base,
            "l_total": light,
            "base_to_l_ratio": ratio,
        });
        std::fs::write(out.join(REPORT_JSON), serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}
