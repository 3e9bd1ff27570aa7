mod common;

use std::sync::Arc;

use nctl::config::ModelConfig;
use nctl::data::protocols::{pair_index, stream_from_segments};
use nctl::data::{ClassIndex, FeatureSource, StreamSpec, TaskSegment};
use nctl::saliency::*;
use nctl::NctlError;
use nctl_core::{local_ensemble_average, local_ensemble_sample, EffectiveWeights, NctlNetwork};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[test]
fn pgm_header_and_scaling() {
    let bytes = pgm_bytes(&[0.0, 1.0, 2.0, 4.0, -4.0, 4.0], 2, 3);
    let header = b"P5\n3 2\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(&bytes[header.len()..], &[128, 159, 191, 255, 0, 255]);
    let flat = pgm_bytes(&[3.0; 4], 2, 2);
    assert!(flat[flat.len() - 4..].iter().all(|&b| b == 0));
}

#[test]
fn only_image_sized_maps_are_drawn() {
    assert_eq!(image_shape(784).unwrap(), (28, 28));
    let err = image_shape(5).unwrap_err();
    assert!(matches!(err, NctlError::UnsupportedShape(_)));
    assert_eq!(err.exit_code(), 2);
    let dir = tempfile::tempdir().unwrap();
    assert!(write_pgm(&dir.path().join("x.pgm"), &[0.0; 5]).is_err());
    write_pgm(&dir.path().join("y.pgm"), &[0.5; 784]).unwrap();
    assert_eq!(
        std::fs::read(dir.path().join("y.pgm")).unwrap().len(),
        13 + 784
    );
}

#[test]
fn csv_lists_weights_then_bias() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    write_csv(
        &path,
        &EffectiveWeights {
            weights: vec![0.5, -2.0],
            bias: 1.0,
        },
    )
    .unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index,weight");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("bias,"));
    let w: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(w, -2.0);
}

#[test]
fn raw_space_map_gives_the_same_logit() {
    let images = common::vendored_mnist();
    let std = &images.standardizer;
    let e = EffectiveWeights {
        weights: (0..784)
            .map(|i| ((i * 37 % 11) as f64 - 5.0) / 10.0)
            .collect(),
        bias: 0.3,
    };
    let raw = to_raw_space(&e, std);
    for i in [0, 17, 999] {
        let x = images.train.scaled(i);
        let z = std.transform(&x);
        // constant pixels standardize to 0 and get raw weight 0
        assert!((e.logit(&z) - raw.logit(&x)).abs() < 1e-9);
    }
}

#[test]
fn correlation_basics() {
    assert!((correlation(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-12);
    assert!((correlation(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    assert_eq!(correlation(&[1.0, 1.0], &[0.0, 5.0]), 0.0);
}

fn one_vs_three() -> (NctlNetwork, Vec<Vec<f64>>, Vec<f64>) {
    let images = common::vendored_mnist();
    let source = images.train_source();
    let index = ClassIndex::new(&images.train);
    let seg = TaskSegment {
        pair: pair_index(1, 3).unwrap(),
        len: 1000,
        sample_seed: 4,
    };
    let spec = StreamSpec {
        protocol: "saliency".into(),
        seed: 0,
        params: json!({}),
    };
    let stream = stream_from_segments(Arc::new(source.clone()), &index, &[seg], spec);
    let model = ModelConfig::free_split();
    let mut net = NctlNetwork::new(model.nctl(784, 1024, 0).unwrap()).unwrap();
    for ex in stream.examples() {
        net.learn(&ex.features, ex.label).unwrap();
    }
    let inputs: Vec<Vec<f64>> = stream.meta()[..100]
        .iter()
        .map(|m| source.features(m))
        .collect();
    let class_mean = |c: u8| -> Vec<f64> {
        let rows: Vec<Vec<f64>> = index.0[c as usize]
            .iter()
            .map(|&i| std_row(&images, i))
            .collect();
        (0..784)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
            .collect()
    };
    let (m1, m3) = (class_mean(1), class_mean(3));
    let diff = m1.iter().zip(&m3).map(|(a, b)| (a - b).abs()).collect();
    (net, inputs, diff)
}

fn std_row(images: &nctl::data::PreparedImages, i: usize) -> Vec<f64> {
    images.standardizer.transform(&images.train.scaled(i))
}

#[test]
fn one_vs_three_saliency_tracks_discriminative_pixels() {
    let (net, inputs, diff) = one_vs_three();
    let map = mean_saliency(&net.map_network(), &inputs).unwrap();
    let magnitude: Vec<f64> = map.weights.iter().map(|w| w.abs()).collect();
    let r = correlation(&magnitude, &diff);
    eprintln!("1-vs-3 saliency correlation {r:.3}");
    assert!(r > 0.0, "correlation {r}");

    // Ensembles: samples are valid networks over the same inputs, and the
    // average is deterministic.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..4 {
        let g = local_ensemble_sample(&[&net], &mut rng).unwrap();
        assert_eq!(mean_saliency(&g, &inputs[..5]).unwrap().weights.len(), 784);
    }
    let a = local_ensemble_average(&[&net]).unwrap();
    let b = local_ensemble_average(&[&net]).unwrap();
    assert_eq!(
        mean_saliency(&a, &inputs[..5]).unwrap(),
        mean_saliency(&b, &inputs[..5]).unwrap()
    );
}
