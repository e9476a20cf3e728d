use modeconnect::data_io::{
    gen_synthetic, load_csv, load_idx_pair, normalize_splits, Dataset, Split,
};
use modeconnect::rng::{derive_seed, stream};
use modeconnect::{Error, Result};

use crate::config::DataConfig;

pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
    pub heldout: Option<Dataset>,
}

impl Splits {
    pub fn heldout(&self) -> Result<&Dataset> {
        self.heldout.as_ref().ok_or_else(|| {
            Error::InvalidConfig("this command needs a held-out split in the data section".into())
        })
    }
}

/// Synthetic splits are drawn from separate sub-streams of the data seed.
/// File-backed splits are normalized with statistics of the train split.
pub fn load(config: &DataConfig, root_seed: u64) -> Result<Splits> {
    match config {
        DataConfig::Synthetic {
            kind,
            noise,
            train_size,
            test_size,
            heldout_size,
            seed,
        } => {
            let root = seed.unwrap_or(root_seed);
            let draw = |n, s, split| {
                gen_synthetic(*kind, n, *noise, derive_seed(root, s)).map(|d| d.with_split(split))
            };
            Ok(Splits {
                train: draw(*train_size, stream::DATA_TRAIN, Split::Train)?,
                test: draw(*test_size, stream::DATA_TEST, Split::Test)?,
                heldout: heldout_size
                    .map(|n| draw(n, stream::DATA_HELDOUT, Split::Heldout))
                    .transpose()?,
            })
        }
        DataConfig::Csv {
            train,
            test,
            heldout,
            label_column,
            class_count,
        } => {
            let train = load_csv(train, label_column, *class_count, Split::Train)?;
            // the test and held-out files must agree with the train split on the class count
            let classes = Some(class_count.unwrap_or(train.class_count()));
            let mut others = vec![load_csv(test, label_column, classes, Split::Test)?];
            if let Some(h) = heldout {
                others.push(load_csv(h, label_column, classes, Split::Heldout)?);
            }
            finish(train, others)
        }
        DataConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            heldout_images,
            heldout_labels,
        } => {
            let train = load_idx_pair(train_images, train_labels, Split::Train)?;
            let mut others = vec![load_idx_pair(test_images, test_labels, Split::Test)?];
            match (heldout_images, heldout_labels) {
                (Some(i), Some(l)) => others.push(load_idx_pair(i, l, Split::Heldout)?),
                (None, None) => {}
                _ => {
                    return Err(Error::InvalidConfig(
                        "held-out IDX data needs both an image and a label file".into(),
                    ))
                }
            }
            finish(train, others)
        }
    }
}

fn finish(train: Dataset, others: Vec<Dataset>) -> Result<Splits> {
    let (train, mut others) = normalize_splits(train, others)?;
    let heldout = (others.len() == 2).then(|| others.pop().expect("two splits"));
    let test = others.pop().expect("test split");
    Ok(Splits {
        train,
        test,
        heldout,
    })
}
