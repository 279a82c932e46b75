use std::path::PathBuf;

use capgen::gradcheck::{self, GradcheckConfig};

use crate::failure::CmdResult;
use crate::settings;

#[derive(clap::Args)]
pub struct Args {
    /// key=value file overriding the tiny default model.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one option; applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = settings::parse_assignment)]
    overrides: Vec<(String, String)>,
    /// Perturb one analytic gradient element before comparing.
    #[arg(long, hide = true)]
    corrupt_gradient: bool,
}

pub fn run(a: Args) -> CmdResult<u8> {
    let mut cfg = GradcheckConfig::default();
    if let Some(path) = &a.config {
        for (k, v) in settings::read_pairs(path)? {
            cfg.set(&k, &v)?;
        }
    }
    for (k, v) in &a.overrides {
        cfg.set(k, v)?;
    }
    settings::echo("gradcheck", &cfg.to_pairs());
    let report = gradcheck::run(&cfg, a.corrupt_gradient)?;
    println!("{report}");
    Ok(if report.passed() { 0 } else { 1 })
}
