//! Driving the command-line interface in-process.

use modl::commands::main_with_args;

pub fn run_example() -> modl::Result<()> {
    let out = std::env::temp_dir().join(format!("modl-cli-example-{}", std::process::id()));
    let out = out.to_string_lossy().into_owned();
    let common = [
        "modl",
        "--set",
        "h=16",
        "--set",
        "w=16",
        "--set",
        "n_train=2",
        "--set",
        "n_val=1",
        "--set",
        "n_test=1",
    ];
    let run = |extra: &[&str]| {
        let args: Vec<&str> = common.iter().chain(extra).copied().collect();
        main_with_args(args)
    };
    assert_eq!(run(&["--dump-config", "train"]), 0);
    assert_eq!(
        run(&["--out", &out, "mask-gen", "--shape", "32", "32", "--accel", "4"]),
        0
    );
    assert_eq!(run(&["--set", "epochs=0", "--set", "K=2", "--out", &out, "train"]), 0);
    println!("outputs in {out}");
    std::fs::remove_dir_all(&out).map_err(|e| modl::Error::Io {
        path: out.clone().into(),
        source: e,
    })?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
