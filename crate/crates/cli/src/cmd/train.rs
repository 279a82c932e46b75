use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use capgen::augment::Image;
use capgen::captioner::{CaptionModel, Variant};
use capgen::features::{read_features, read_manifest, FeatureSet, ManifestRecord, Split};
use capgen::text::{build_vocab, load_embedding_file, tokenize, Vocabulary};
use capgen::train::{encode_captions, write_checkpoint, Checkpoint, TrainConfig, Trainer, TrainingData, TrainingItem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::failure::{CmdResult, Failure};
use crate::settings;

#[derive(clap::Args)]
pub struct Args {
    /// Dataset directory with manifest.tsv and features.icfe.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "soft_attention")]
    variant: String,
    /// key=value file overriding the training defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one option; applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = settings::parse_assignment)]
    overrides: Vec<(String, String)>,
    #[arg(long)]
    out_checkpoint: PathBuf,
    /// Epoch log path; defaults to the checkpoint path with a `.log` suffix.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Text word vectors used to initialize the embedding table.
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

pub const LOG_HEADER: &str = "epoch,train_loss,val_loss,val_bleu4,action";

struct Dataset {
    records: Vec<ManifestRecord>,
    features: HashMap<String, FeatureSet<f64>>,
    images: Option<PathBuf>,
    vocab: Vocabulary,
}

fn load_dataset(dir: &Path) -> CmdResult<Dataset> {
    let manifest = dir.join("manifest.tsv");
    let features = dir.join("features.icfe");
    if !dir.is_dir() || !manifest.is_file() || !features.is_file() {
        return Err(Failure::usage(format!(
            "no dataset at {}: expected manifest.tsv and features.icfe",
            dir.display()
        )));
    }
    let records = read_manifest(&manifest)?;
    let features = read_features::<f64>(&features)?
        .into_iter()
        .map(|f| (f.image_id.clone(), f))
        .collect();
    let vocab_path = dir.join("vocab.txt");
    let vocab = if vocab_path.is_file() {
        Vocabulary::load(&vocab_path)?
    } else {
        let caps: Vec<Vec<String>> = records
            .iter()
            .filter(|r| r.split == Split::Train)
            .flat_map(|r| r.captions.iter().map(|c| tokenize(c)))
            .collect();
        build_vocab(&caps, 1)?
    };
    let images = dir.join("images");
    Ok(Dataset {
        records,
        features,
        images: images.is_dir().then_some(images),
        vocab,
    })
}

fn items(ds: &Dataset, split: Split, n_max: usize) -> CmdResult<Vec<TrainingItem<f64>>> {
    ds.records
        .iter()
        .filter(|r| r.split == split)
        .map(|r| {
            let features = ds
                .features
                .get(&r.id)
                .ok_or_else(|| Failure::data(format!("no features for image {:?}", r.id)))?
                .clone();
            let image = match &ds.images {
                Some(dir) => Some(Image::read_pnm(&dir.join(format!("{}.ppm", r.id)))?),
                None => None,
            };
            Ok(TrainingItem {
                id: r.id.clone(),
                features,
                image,
                captions: encode_captions(&ds.vocab, &r.captions, n_max)?,
            })
        })
        .collect()
}

fn grid_of(ds: &Dataset) -> CmdResult<usize> {
    let Some(f) = ds.features.values().next() else {
        return Err(Failure::data("feature file is empty"));
    };
    let l = f.locations();
    let g = (l as f64).sqrt().round() as usize;
    if ds.images.is_some() && g * g != l {
        return Err(Failure::data(format!(
            "{l} annotations per image do not form a square patch grid"
        )));
    }
    Ok(g)
}

pub fn run(a: Args) -> CmdResult<u8> {
    let variant: Variant = a.variant.parse()?;
    let mut cfg = TrainConfig::default();
    if let Some(path) = &a.config {
        for (k, v) in settings::read_pairs(path)? {
            cfg.set(&k, &v)?;
        }
    }
    for (k, v) in &a.overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    let log_path = a.log.clone().unwrap_or_else(|| {
        let mut p = a.out_checkpoint.clone().into_os_string();
        p.push(".log");
        PathBuf::from(p)
    });
    let mut echo = vec![
        ("data", a.data.display().to_string()),
        ("variant", variant.to_string()),
        ("out_checkpoint", a.out_checkpoint.display().to_string()),
        ("log", log_path.display().to_string()),
        (
            "embeddings",
            a.embeddings.as_ref().map_or("none".into(), |p| p.display().to_string()),
        ),
    ];
    echo.extend(cfg.to_pairs());
    settings::echo("train", &echo);

    let ds = load_dataset(&a.data)?;
    let data = TrainingData {
        train: items(&ds, Split::Train, cfg.n_max)?,
        val: items(&ds, Split::Val, cfg.n_max)?,
        grid: grid_of(&ds)?,
    };
    if data.train.is_empty() {
        return Err(Failure::usage("the dataset has no training images"));
    }
    let feature_dim = data.train[0].features.dim();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = CaptionModel::new(cfg.model_config(variant, ds.vocab.len(), feature_dim), &mut rng)?;
    if let Some(path) = &a.embeddings {
        model.set_embeddings(load_embedding_file(path, &ds.vocab, cfg.embed_dim, &mut rng)?)?;
    }

    let mut trainer = Trainer::new(model, cfg.clone())?;
    let mut log = format!("{LOG_HEADER}\n");
    let summary = trainer.fit(&data, |r| {
        println!("{}", r.log_line());
        log.push_str(&r.log_line());
        log.push('\n');
    })?;
    fs::write(&log_path, log).map_err(|e| Failure::data(format!("cannot write {}: {e}", log_path.display())))?;

    write_checkpoint(
        &a.out_checkpoint,
        &Checkpoint {
            model: trainer.model,
            optimizer: Some(trainer.optimizer),
            vocab: Some(ds.vocab),
            train_config: Some(cfg),
        },
    )?;
    match summary.best_epoch {
        Some(e) => eprintln!("# trained {} epochs; kept weights of epoch {e}", summary.epochs_run),
        None => eprintln!("# trained {} epochs", summary.epochs_run),
    }
    Ok(0)
}
