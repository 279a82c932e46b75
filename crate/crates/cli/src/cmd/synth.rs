use std::fs;
use std::path::PathBuf;

use capgen::features::{generate_synthetic_dataset, write_features, write_manifest};
use capgen::text::{build_vocab, tokenize};

use crate::failure::{CmdResult, Failure};
use crate::settings;

#[derive(clap::Args)]
pub struct Args {
    /// Number of images.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Side length of the square images, in pixels.
    #[arg(long, default_value_t = 32)]
    image_size: usize,
    /// Patch grid of the toy encoder; each image yields grid² annotations.
    #[arg(long, default_value_t = 4)]
    grid: usize,
}

pub fn run(a: Args) -> CmdResult<u8> {
    settings::echo(
        "synth",
        &[
            ("n", a.n.to_string()),
            ("seed", a.seed.to_string()),
            ("out_dir", a.out_dir.display().to_string()),
            ("image_size", a.image_size.to_string()),
            ("grid", a.grid.to_string()),
        ],
    );
    let ds = generate_synthetic_dataset(a.n, a.seed, a.image_size, a.grid)?;

    let images = a.out_dir.join("images");
    fs::create_dir_all(&images)
        .map_err(|e| Failure::data(format!("cannot create {}: {e}", images.display())))?;
    for s in &ds.samples {
        s.image.write_pnm(&images.join(format!("{}.ppm", s.id)))?;
    }
    write_manifest(&ds.manifest(), &a.out_dir.join("manifest.tsv"))?;
    write_features(&ds.features::<f64>()?, &a.out_dir.join("features.icfe"))?;

    let train_captions: Vec<Vec<String>> = ds
        .split(capgen::features::Split::Train)
        .flat_map(|s| s.captions.iter().map(|c| tokenize(c)))
        .collect();
    build_vocab(&train_captions, 1)?.save(&a.out_dir.join("vocab.txt"))?;

    let mut refs = String::new();
    for s in &ds.samples {
        for c in &s.captions {
            refs.push_str(&format!("{}\tR\t{c}\n", s.id));
        }
    }
    let path = a.out_dir.join("references.txt");
    fs::write(&path, refs).map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display())))?;

    println!("wrote {} images to {}", ds.samples.len(), a.out_dir.display());
    Ok(0)
}
