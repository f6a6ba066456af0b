mod common;

use common::*;
use rp_plrm::io::{diabetes_fixture, diabetes_spec, load_csv, sha256_hex, write_dataset_csv, DatasetSpec, ResponseSpec};
use rp_plrm::{fit, Error, FitOptions, TuningAlpha};
use std::io::Write;

fn label_spec(path: &std::path::Path, predictors: &[&str], categories: Option<&[&str]>) -> DatasetSpec {
    DatasetSpec {
        path: path.to_path_buf(),
        response: ResponseSpec::Label {
            column: "y".into(),
            categories: categories.map(|c| c.iter().map(|s| s.to_string()).collect()),
        },
        predictors: predictors.iter().map(|s| s.to_string()).collect(),
    }
}

#[test]
fn written_data_reloads_to_a_bit_identical_fit() {
    let data = simulate(120, 2, &BETA0, 2, 81);
    let names = vec!["x1".to_string(), "x2".to_string()];
    let cats = vec!["a".to_string(), "b".to_string(), "c".to_string()];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let mut file = std::fs::File::create(&path).unwrap();
    write_dataset_csv(&mut file, &data.design(), &data.response(), &names, &cats, "y").unwrap();
    file.flush().unwrap();

    let loaded = load_csv(&label_spec(&path, &["x1", "x2"], Some(&["a", "b", "c"]))).unwrap();
    assert_eq!(loaded.design.as_slice(), data.design().as_slice());
    assert_eq!(loaded.response, data.response());
    assert_eq!(loaded.digest, sha256_hex(&std::fs::read(&path).unwrap()));

    let alpha = TuningAlpha::new(0.3).unwrap();
    let a = fit(&data.design(), &data.response(), alpha, &FitOptions::default()).unwrap();
    let b = fit(&loaded.design, &loaded.response, alpha, &FitOptions::default()).unwrap();
    assert_eq!(a.beta_hat.as_slice(), b.beta_hat.as_slice());
}

#[test]
fn three_labels_in_given_order() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("abc.csv");
    std::fs::write(&path, "x,y\n0.5,b\n-1,c\n2,a\n").unwrap();
    let d = load_csv(&label_spec(&path, &["x"], Some(&["a", "b", "c"]))).unwrap();
    assert_eq!(d.response.n_categories(), 3);
    assert_eq!(d.response.categories(), &[1, 2, 0]);
    assert_eq!(d.categories.last().unwrap(), "c");
    assert_eq!(d.design.row(1), &[1.0, -1.0]);

    let first_seen = load_csv(&label_spec(&path, &["x"], None)).unwrap();
    assert_eq!(first_seen.categories, vec!["b", "c", "a"]);
}

#[test]
fn malformed_rows_cite_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "x,y\n0.5,a\n1.5\n2,b\n").unwrap();
    match load_csv(&label_spec(&path, &["x"], Some(&["a", "b"]))).unwrap_err() {
        Error::Data { line, .. } => assert_eq!(line, 3),
        e => panic!("unexpected {e:?}"),
    }
    std::fs::write(&path, "x,y\n0.5,a\nnope,b\n").unwrap();
    match load_csv(&label_spec(&path, &["x"], Some(&["a", "b"]))).unwrap_err() {
        Error::Data { line, .. } => assert_eq!(line, 3),
        e => panic!("unexpected {e:?}"),
    }
    std::fs::write(&path, "x,y\n0.5,a\n1,z\n").unwrap();
    assert!(load_csv(&label_spec(&path, &["x"], Some(&["a", "b"]))).is_err());
    assert!(load_csv(&label_spec(&dir.path().join("missing.csv"), &["x"], None)).is_err());
}

#[test]
fn bundled_diabetes_matches_a_file_copy() {
    let bundled = diabetes_fixture().unwrap();
    assert_eq!((bundled.design.n_rows(), bundled.design.n_predictors(), bundled.response.n_categories()), (145, 2, 3));
    assert_eq!(bundled.response.counts(), vec![76, 36, 33]);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("diabetes.csv");
    std::fs::write(&path, include_bytes!("../fixtures/diabetes.csv")).unwrap();
    let from_file = load_csv(&diabetes_spec(&path)).unwrap();
    assert_eq!(from_file.digest, bundled.digest);
    assert_eq!(from_file.design.as_slice(), bundled.design.as_slice());
}
