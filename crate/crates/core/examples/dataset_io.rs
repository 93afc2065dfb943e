//! Synthetic phantom datasets written to disk and loaded back.

use modl::data::{load_dataset, make_phantom, write_dataset, DatasetSpec, PhantomSpec, Split};

pub fn run_example() -> modl::Result<()> {
    let phantom = make_phantom::<f32>(&PhantomSpec::new(32, 32, 5));
    let peak = phantom.data().iter().map(|v| v.norm()).fold(0.0, f32::max);
    println!("phantom peak magnitude {peak:.3}");

    let dir = std::env::temp_dir().join(format!("modl-dataset-example-{}", std::process::id()));
    let spec = DatasetSpec {
        h: 32,
        w: 32,
        n_train: 4,
        n_val: 2,
        n_test: 2,
        coils: 2,
        ..DatasetSpec::default()
    };
    let manifest = write_dataset(&dir, &spec)?;
    println!("wrote {} records under {}", manifest.entries.len(), dir.display());

    let ds = load_dataset::<f64>(&dir)?;
    for split in [Split::Train, Split::Val, Split::Test] {
        println!("{split}: {} samples", ds.samples(split).len());
    }
    std::fs::remove_dir_all(&dir).map_err(|e| modl::Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
