use std::fs;
use std::path::Path;

use henet::arch::{build_henet, Mode, NetworkConfig};
use henet::data::{
    load_cifar10, load_cifar100, load_model, save_model, synth_dataset, write_cifar100_file, write_cifar10_dir,
    LabeledDataset, CIFAR100_RECORD, CIFAR10_RECORD, IMAGE_BYTES,
};
use henet::{Error, ErrorCategory, Tensor};

/// `count` CIFAR-10 records whose label and pixels derive from `offset + index`.
fn cifar10_bytes(count: usize, offset: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(count * CIFAR10_RECORD);
    for i in offset..offset + count {
        out.push((i % 10) as u8);
        out.extend(std::iter::repeat_n((i % 251) as u8, IMAGE_BYTES));
    }
    out
}

fn write_full_cifar10(dir: &Path) {
    for b in 0..5 {
        fs::write(
            dir.join(format!("data_batch_{}.bin", b + 1)),
            cifar10_bytes(10_000, b * 10_000),
        )
        .unwrap();
    }
    fs::write(dir.join("test_batch.bin"), cifar10_bytes(10_000, 50_000)).unwrap();
}

#[test]
fn full_cifar10_layout_loads_every_record_in_order() {
    let dir = tempfile::tempdir().unwrap();
    write_full_cifar10(dir.path());
    let (train, test) = load_cifar10(dir.path()).unwrap();
    assert_eq!(train.len(), 50_000);
    assert_eq!(test.len(), 10_000);
    assert_eq!(train.class_count(), 10);
    for i in [0, 9_999, 10_000, 31_337, 49_999] {
        assert_eq!(train.label(i), i % 10);
        assert!(train.image(i).iter().all(|&p| p == (i % 251) as u8));
    }
    assert_eq!(test.label(0), 0);
    assert_eq!(test.image(0)[0], (50_000 % 251) as u8);
}

#[test]
fn truncated_file_names_the_partial_record() {
    let dir = tempfile::tempdir().unwrap();
    write_full_cifar10(dir.path());
    let path = dir.path().join("data_batch_3.bin");
    let mut bytes = cifar10_bytes(7, 0);
    bytes.extend_from_slice(&[1, 2, 3]);
    fs::write(&path, bytes).unwrap();
    let err = load_cifar10(dir.path()).unwrap_err();
    match &err {
        Error::Truncated {
            path: p,
            record,
            trailing,
            record_size,
        } => {
            assert_eq!(p, &path);
            assert_eq!((*record, *trailing, *record_size), (7, 3, CIFAR10_RECORD));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(err.category(), ErrorCategory::Data);
    assert!(err.to_string().contains("record 7"));
}

#[test]
fn missing_file_and_bad_label_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_cifar10(dir.path()).unwrap_err();
    assert_eq!(err.category(), ErrorCategory::Data);
    assert!(err.to_string().contains("data_batch_1.bin"));

    write_full_cifar10(dir.path());
    let mut bytes = cifar10_bytes(3, 0);
    bytes[2 * CIFAR10_RECORD] = 10;
    fs::write(dir.path().join("test_batch.bin"), bytes).unwrap();
    let err = load_cifar10(dir.path()).unwrap_err();
    assert_eq!(err.category(), ErrorCategory::Data);
    assert!(err.to_string().contains("record 2 has label 10"), "{err}");
}

#[test]
fn cifar100_keeps_fine_labels_and_ignores_coarse() {
    let dir = tempfile::tempdir().unwrap();
    let images: Vec<u8> = (0..4 * IMAGE_BYTES).map(|i| (i % 256) as u8).collect();
    let ds = LabeledDataset::new(images, vec![99, 0, 57, 3], 100).unwrap();
    write_cifar100_file(&dir.path().join("train.bin"), &ds, |i| (19 - i) as u8).unwrap();
    write_cifar100_file(&dir.path().join("test.bin"), &ds.take(2), |_| 250).unwrap();
    assert_eq!(
        fs::metadata(dir.path().join("train.bin")).unwrap().len(),
        4 * CIFAR100_RECORD as u64
    );
    let (train, test) = load_cifar100(dir.path()).unwrap();
    assert_eq!(train.labels(), &[99, 0, 57, 3]);
    assert_eq!(test.labels(), &[99, 0]);
    assert_eq!(train.class_count(), 100);
    assert_eq!(train.image(2), ds.image(2));
}

#[test]
fn synthetic_data_round_trips_through_cifar10_files() {
    let dir = tempfile::tempdir().unwrap();
    let train = synth_dataset(23, 10, 1).unwrap();
    let test = synth_dataset(5, 10, 2).unwrap();
    let written = write_cifar10_dir(dir.path(), &train, &test).unwrap();
    assert_eq!(written.len(), 6);
    let (tr, te) = load_cifar10(dir.path()).unwrap();
    assert_eq!(tr, train);
    assert_eq!(te, test);
}

#[test]
fn model_file_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    let cfg = NetworkConfig {
        num_classes: 7,
        ..NetworkConfig::with_repeat(1)
    };
    let mut g = build_henet::<f32>(&cfg, 9).unwrap();
    g.set_input_mean(vec![0.4, 0.5, 0.6]).unwrap();
    for (_, b) in g.buffers_mut() {
        for (i, v) in b.data_mut().iter_mut().enumerate() {
            *v += 0.01 * (i % 5) as f32;
        }
    }
    save_model(&g, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, g);
    let x = Tensor::from_fn(g.input_shape(), |[_, c, h, w]| ((c + 2 * h + 3 * w) % 11) as f32 / 11.0);
    let bits = |t: Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(
        bits(g.forward(&x, Mode::Infer).unwrap()),
        bits(back.forward(&x, Mode::Infer).unwrap())
    );

    let mut bytes = fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    fs::write(&path, &bytes).unwrap();
    let err = load_model(&path).unwrap_err();
    assert_eq!(err.category(), ErrorCategory::Data);

    fs::write(&path, &bytes[..mid]).unwrap();
    assert_eq!(load_model(&path).unwrap_err().category(), ErrorCategory::Data);
    let err = load_model(&dir.path().join("absent.bin")).unwrap_err();
    assert_eq!(err.category(), ErrorCategory::Io);
}
