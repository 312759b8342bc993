use rayon::prelude::*;
use serde_json::json;

use datnet::network::Model;
use datnet::signal_io::{load_wav, write_wav};

use crate::args::EnhanceArgs;
use crate::data::list_wavs;
use crate::exit::{CliError, CliResult};
use crate::manifest::RunContext;

pub fn run(ctx: &RunContext, a: &EnhanceArgs) -> CliResult<()> {
    let inputs = if a.input.is_dir() {
        list_wavs(&a.input)?
    } else if a.input.is_file() {
        vec![a.input.clone()]
    } else {
        return Err(CliError::io(format!("{} does not exist", a.input.display())));
    };
    let model = Model::load(&a.ckpt)?;
    let config = json!({
        "ckpt": a.ckpt,
        "input": a.input,
        "model": model.config,
        "encoding": format!("{:?}", a.encoding).to_lowercase(),
    });
    ctx.begin("enhance", &a.out, config, Some(model.config.seed))?;
    inputs.par_iter().try_for_each(|path| -> CliResult<()> {
        let enhanced = model.enhance(&load_wav(path)?)?;
        if enhanced.samples.iter().any(|v| !v.is_finite()) {
            return Err(CliError::numeric(format!("non-finite output for {}", path.display())));
        }
        let name = path.file_name().expect("listed files have names");
        write_wav(a.out.join(name), &enhanced, a.encoding.into())?;
        Ok(())
    })?;
    println!("enhanced {} files into {}", inputs.len(), a.out.display());
    Ok(())
}
