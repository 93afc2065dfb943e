//! Finite-difference verification of every reverse pass.

use modl::gradcheck::{rows_csv, run_all};

pub fn run_example() -> modl::Result<()> {
    let rows = run_all(0)?;
    print!("{}", rows_csv(&rows));
    let failed = rows.iter().filter(|r| !r.pass).count();
    println!("{} checks, {failed} failed", rows.len());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
