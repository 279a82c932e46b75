use std::path::PathBuf;

use capgen::augment::{random_perspective, Image};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::failure::CmdResult;
use crate::settings;

/// Augmented panels shown next to the original.
const VARIANTS: usize = 7;
const COLUMNS: usize = 4;

#[derive(clap::Args)]
pub struct Args {
    /// Input PPM image.
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Largest corner displacement as a fraction of the image side.
    #[arg(long, default_value_t = 0.3)]
    distortion: f64,
    /// Output PPM path.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(a: Args) -> CmdResult<u8> {
    settings::echo(
        "augment",
        &[
            ("image", a.image.display().to_string()),
            ("seed", a.seed.to_string()),
            ("distortion", a.distortion.to_string()),
            ("out", a.out.display().to_string()),
        ],
    );
    let img = Image::read_pnm(&a.image)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut panels = vec![img.clone()];
    for _ in 0..VARIANTS {
        panels.push(random_perspective(&img, a.distortion, &mut rng)?);
    }
    Image::tile(&panels, COLUMNS)?.write_pnm(&a.out)?;
    Ok(0)
}
