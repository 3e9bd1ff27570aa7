#![allow(dead_code)]

use std::path::PathBuf;

use nctl::data::{load_idx, ImageSet, ImageSplits, PreparedImages};

pub fn testdata(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("testdata")
        .join(name)
}

fn slice(set: &ImageSet, from: usize, to: usize) -> ImageSet {
    let dim = set.dim();
    let mut pixels = Vec::with_capacity((to - from) * dim);
    for i in from..to {
        pixels.extend_from_slice(set.pixels(i));
    }
    ImageSet::new(set.rows, set.cols, pixels, set.labels()[from..to].to_vec()).unwrap()
}

/// The vendored 10 000-image MNIST subset: the first 8 000 images as the
/// training split, the rest as the test split.
pub fn vendored_mnist() -> PreparedImages {
    let all = load_idx(
        &testdata("mnist-subset-images-idx3-ubyte.gz"),
        &testdata("mnist-subset-labels-idx1-ubyte.gz"),
    )
    .unwrap();
    PreparedImages::new(ImageSplits {
        train: slice(&all, 0, 8000),
        test: slice(&all, 8000, all.len()),
    })
}
