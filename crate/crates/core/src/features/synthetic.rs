//! Seeded shapes-and-colours images with templated, position-aware captions.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{toy_patch_encode, FeatureSet, ManifestRecord};
use crate::augment::Image;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    Square,
    Circle,
    Triangle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VerticalHalf {
    Top,
    Bottom,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Square, Shape::Circle, Shape::Triangle];

    pub fn word(self) -> &'static str {
        match self {
            Shape::Square => "square",
            Shape::Circle => "circle",
            Shape::Triangle => "triangle",
        }
    }

    /// Whether offset `(dx, dy)` from the centre lies inside a shape of
    /// half-extent `r`.
    fn covers(self, dx: f64, dy: f64, r: f64) -> bool {
        match self {
            Shape::Square => dx.abs() <= r && dy.abs() <= r,
            Shape::Circle => dx * dx + dy * dy <= r * r,
            Shape::Triangle => dy.abs() <= r && dx.abs() <= (dy + r) / 2.0,
        }
    }
}

impl Color {
    pub const ALL: [Color; 4] = [Color::Red, Color::Green, Color::Blue, Color::Yellow];

    pub fn word(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
        }
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Red => [220, 40, 40],
            Color::Green => [40, 200, 40],
            Color::Blue => [40, 40, 220],
            Color::Yellow => [230, 220, 40],
        }
    }
}

impl VerticalHalf {
    pub fn word(self) -> &'static str {
        match self {
            VerticalHalf::Top => "top",
            VerticalHalf::Bottom => "bottom",
        }
    }
}

/// One rendered object. `column` is 0 (left), 1 (centre) or 2 (right).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Placement {
    pub shape: Shape,
    pub color: Color,
    pub half: VerticalHalf,
    pub column: usize,
}

impl Placement {
    fn phrase(&self) -> String {
        format!("a {} {}", self.color.word(), self.shape.word())
    }
}

/// Construction record of one image: one object, or two stacked
/// vertically (the first in the top half).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Scene {
    pub objects: Vec<Placement>,
}

impl Scene {
    /// Five paraphrases. Relations are vertical only, so a horizontal flip
    /// never falsifies a caption.
    pub fn captions(&self) -> Vec<String> {
        match self.objects.as_slice() {
            [one] => {
                let (p, h) = (one.phrase(), one.half.word());
                vec![
                    format!("{p} at the {h}"),
                    format!("there is {p} at the {h}"),
                    format!("{p} near the {h} of the image"),
                    format!("the image has {p} at the {h}"),
                    format!("{p} in the {h} half"),
                ]
            }
            [top, bottom] => {
                let (t, b) = (top.phrase(), bottom.phrase());
                vec![
                    format!("{t} above {b}"),
                    format!("{b} below {t}"),
                    format!("there is {t} above {b}"),
                    format!("{t} is above {b}"),
                    format!("the image has {b} below {t}"),
                ]
            }
            _ => unreachable!("scenes hold one or two objects"),
        }
    }

    pub fn render(&self, size: usize) -> Image {
        let mut img = Image::filled(size, size, 3, 0).expect("positive size");
        let s = size as f64;
        let r = s / 6.0 - 0.5;
        for obj in &self.objects {
            let cy = match obj.half {
                VerticalHalf::Top => s / 4.0,
                VerticalHalf::Bottom => 3.0 * s / 4.0,
            };
            let cx = (2 * obj.column + 1) as f64 * s / 6.0;
            for row in 0..size {
                for col in 0..size {
                    let (dx, dy) = (col as f64 + 0.5 - cx, row as f64 + 0.5 - cy);
                    if obj.shape.covers(dx, dy, r) {
                        img.pixel_mut(row, col).copy_from_slice(&obj.color.rgb());
                    }
                }
            }
        }
        img
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    pub id: String,
    pub image: Image,
    pub captions: Vec<String>,
    pub scene: Scene,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub samples: Vec<SyntheticSample>,
    pub image_size: usize,
    pub grid: usize,
}

impl SyntheticDataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &SyntheticSample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn features<S: Scalar>(&self) -> Result<Vec<FeatureSet<S>>> {
        self.samples
            .iter()
            .map(|s| toy_patch_encode(s.id.clone(), &s.image, self.grid))
            .collect()
    }

    pub fn manifest(&self) -> Vec<ManifestRecord> {
        self.samples
            .iter()
            .map(|s| ManifestRecord {
                id: s.id.clone(),
                split: s.split,
                captions: s.captions.clone(),
            })
            .collect()
    }
}

fn random_placement(rng: &mut ChaCha8Rng, half: VerticalHalf) -> Placement {
    Placement {
        shape: *Shape::ALL.choose(rng).expect("non-empty"),
        color: *Color::ALL.choose(rng).expect("non-empty"),
        half,
        column: rng.gen_range(0..3),
    }
}

/// Draws `n` scenes, renders them at `image_size²`, and assigns the first
/// 80% to train and 10% each to validation and test.
pub fn generate_synthetic_dataset(
    n: usize,
    seed: u64,
    image_size: usize,
    grid: usize,
) -> Result<SyntheticDataset> {
    if n < 3 {
        return Err(Error::Domain(format!(
            "a synthetic dataset needs at least 3 images, got {n}"
        )));
    }
    if grid == 0 || image_size < grid || image_size < 6 {
        return Err(Error::Domain(format!(
            "image size {image_size} is too small for a {grid}x{grid} grid"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let held_out = (n / 10).max(1);
    let n_train = n - 2 * held_out;
    let samples = (0..n)
        .map(|i| {
            let objects = if rng.gen_bool(0.5) {
                let half = if rng.gen_bool(0.5) {
                    VerticalHalf::Top
                } else {
                    VerticalHalf::Bottom
                };
                vec![random_placement(&mut rng, half)]
            } else {
                vec![
                    random_placement(&mut rng, VerticalHalf::Top),
                    random_placement(&mut rng, VerticalHalf::Bottom),
                ]
            };
            let scene = Scene { objects };
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + held_out {
                Split::Val
            } else {
                Split::Test
            };
            SyntheticSample {
                id: format!("img{i:05}"),
                image: scene.render(image_size),
                captions: scene.captions(),
                scene,
                split,
            }
        })
        .collect();
    Ok(SyntheticDataset {
        samples,
        image_size,
        grid,
    })
}
