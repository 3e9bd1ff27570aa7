//! Dataset loading, standardization and task-stream generation.

pub mod electricity;
pub mod idx;
pub mod protocols;
pub mod standardize;
pub mod stream;

use std::path::{Path, PathBuf};
use std::sync::Arc;

pub use electricity::{load_electricity, ElectricityData, ELECTRICITY_ROWS};
pub use idx::{load_idx, load_splits, ImageSet, ImageSplits};
pub use protocols::{ClassIndex, GeometricSupport, StandardizeMode, TaskSegment};
pub use standardize::{Running, Standardizer};
pub use stream::{
    Example, FeatureSource, ImageSource, ItemMeta, StreamManifest, StreamSpec, TableSource,
    TaskStream,
};

use crate::error::{NctlError, Result};

/// Environment variable naming the dataset root directory.
pub const DATA_DIR_ENV: &str = "NCTL_DATA_DIR";

/// Dataset layout under one root:
/// `mnist/`, `fashion-mnist/` (IDX files) and `electricity.csv`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataRoot(pub PathBuf);

impl DataRoot {
    /// `explicit` if given, else `$NCTL_DATA_DIR`, else `./data`.
    pub fn resolve(explicit: Option<&Path>) -> Self {
        match explicit {
            Some(p) => Self(p.to_path_buf()),
            None => Self(
                std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from("data"), PathBuf::from),
            ),
        }
    }

    pub fn mnist(&self) -> PathBuf {
        self.0.join("mnist")
    }

    pub fn fashion(&self) -> PathBuf {
        self.0.join("fashion-mnist")
    }

    pub fn electricity(&self) -> PathBuf {
        self.0.join("electricity.csv")
    }
}

pub fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(NctlError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset path does not exist"),
        ))
    }
}

/// An image dataset with standardization statistics from its training split.
#[derive(Clone)]
pub struct PreparedImages {
    pub train: Arc<ImageSet>,
    pub test: Arc<ImageSet>,
    pub standardizer: Arc<Standardizer>,
}

impl PreparedImages {
    pub fn new(splits: ImageSplits) -> Self {
        let train = Arc::new(splits.train);
        let mut acc = Running::new(train.dim());
        for i in 0..train.len() {
            acc.push(&train.scaled(i));
        }
        let standardizer = acc.snapshot();
        Self {
            train,
            test: Arc::new(splits.test),
            standardizer: Arc::new(standardizer),
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        require(dir)?;
        Ok(Self::new(load_splits(dir)?))
    }

    pub fn train_source(&self) -> ImageSource {
        ImageSource {
            set: self.train.clone(),
            standardizer: self.standardizer.clone(),
        }
    }

    pub fn test_source(&self) -> ImageSource {
        ImageSource {
            set: self.test.clone(),
            standardizer: self.standardizer.clone(),
        }
    }
}
