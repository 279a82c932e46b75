use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use capgen::captioner::Variant;
use capgen::features::read_features;
use capgen::train::read_checkpoint;

use crate::failure::{CmdResult, Failure};
use crate::settings;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Decode {
    Greedy,
    Beam,
}

#[derive(clap::Args)]
pub struct Args {
    #[arg(long)]
    checkpoint: PathBuf,
    /// ICFE feature file.
    #[arg(long)]
    features: PathBuf,
    #[arg(long, value_enum, default_value_t = Decode::Greedy)]
    decode: Decode,
    #[arg(long, default_value_t = 3)]
    beam_width: usize,
    /// Longest caption, in words.
    #[arg(long, default_value_t = 16)]
    n_max: usize,
    /// Write per-step attention weights here (soft attention only).
    #[arg(long)]
    dump_attention: Option<PathBuf>,
}

pub fn run(a: Args) -> CmdResult<u8> {
    settings::echo(
        "caption",
        &[
            ("checkpoint", a.checkpoint.display().to_string()),
            ("features", a.features.display().to_string()),
            ("decode", format!("{:?}", a.decode).to_lowercase()),
            ("beam_width", a.beam_width.to_string()),
            ("n_max", a.n_max.to_string()),
            (
                "dump_attention",
                a.dump_attention.as_ref().map_or("none".into(), |p| p.display().to_string()),
            ),
        ],
    );
    let ckpt = read_checkpoint::<f64>(&a.checkpoint)?;
    if a.dump_attention.is_some() && ckpt.model.variant() == Variant::EncoderDecoder {
        return Err(Failure::usage(
            "--dump-attention needs a soft_attention checkpoint; this one is encoder_decoder",
        ));
    }
    let vocab = ckpt
        .vocab
        .as_ref()
        .ok_or_else(|| Failure::data("checkpoint carries no vocabulary"))?;
    let sets = read_features::<f64>(&a.features)?;

    let mut alphas = String::new();
    for f in &sets {
        let d = match a.decode {
            Decode::Greedy => ckpt.model.greedy_decode(f, a.n_max)?,
            Decode::Beam => ckpt.model.beam_decode(f, a.beam_width, a.n_max)?,
        };
        println!("{}\t{}\t{:.6}", f.image_id, vocab.decode(&d.tokens).join(" "), d.log_prob);
        for (t, alpha) in d.alphas.iter().enumerate() {
            let word = d.tokens.get(t).and_then(|&i| vocab.token(i)).unwrap_or("<END>");
            let values: Vec<String> = alpha.iter().map(|x| format!("{x:.9}")).collect();
            let _ = writeln!(alphas, "{}\t{t}\t{word}\t{}", f.image_id, values.join(" "));
        }
    }
    if let Some(path) = &a.dump_attention {
        fs::write(path, alphas).map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(0)
}
