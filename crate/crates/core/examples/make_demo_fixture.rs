//! Regenerates the demo network and its test set under `fixtures/`.
//!
//! cargo run --release -p aimc --example make_demo_fixture [spread]

use std::fs::File;
use std::path::Path;

use aimc::inference::{accuracy, argmax_columns, train, Dataset, TrainConfig};

const SEED: u64 = 2024;

fn main() -> aimc::Result<()> {
    let spread: f64 = std::env::args().nth(1).map_or(0.35, |s| s.parse().expect("spread"));
    let train_set = Dataset::synthetic(3000, 16, 10, spread, SEED, 0);
    let test_set = Dataset::synthetic(1000, 16, 10, spread, SEED, 1);
    let mlp = train(&train_set, 10, &TrainConfig::default())?;
    let pred = argmax_columns(mlp.forward(test_set.features.t()).view());
    println!("train {:.2}%  test {:.2}%", mlp.train_accuracy, accuracy(&pred, &test_set.labels));
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    mlp.to_json(File::create(dir.join("demo_mlp.json"))?)?;
    test_set.write_csv(File::create(dir.join("demo_test.csv"))?)?;
    Ok(())
}
