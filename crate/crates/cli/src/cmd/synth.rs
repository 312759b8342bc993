use serde_json::json;

use datnet::signal_io::{make_synthetic_corpus, write_wav};

use crate::args::SynthArgs;
use crate::data::CLEAN_DIR;
use crate::exit::{CliError, CliResult};
use crate::manifest::RunContext;

pub fn run(ctx: &RunContext, a: &SynthArgs) -> CliResult<()> {
    if a.n == 0 {
        return Err(CliError::config("--n must be at least 1"));
    }
    let config = json!({ "n": a.n, "encoding": format!("{:?}", a.encoding).to_lowercase() });
    ctx.begin("synth", &a.out, config, Some(a.seed))?;
    let dir = a.out.join(CLEAN_DIR);
    std::fs::create_dir_all(&dir)?;
    let corpus = make_synthetic_corpus(a.n, a.seed)?;
    let mut seconds = 0.0;
    for u in &corpus {
        write_wav(dir.join(format!("{}.wav", u.id)), &u.clean, a.encoding.into())?;
        seconds += u.clean.duration_secs();
    }
    println!(
        "wrote {} utterances ({seconds:.1} s) to {}",
        corpus.len(),
        dir.display()
    );
    Ok(())
}
