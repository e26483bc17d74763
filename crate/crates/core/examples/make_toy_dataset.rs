//! Writes the small synthetic dataset used by the tests, ready for
//! `corrbench generate --data_dir <dir>`.
//!
//!     cargo run --example make_toy_dataset -- /tmp/toy

use std::path::PathBuf;

use corrbench::toy::{write_toy_dataset, ToySpec};

fn main() {
    let dir: PathBuf = std::env::args_os().nth(1).map_or_else(|| "toy-data".into(), PathBuf::from);
    match write_toy_dataset(&dir, ToySpec::default()) {
        Ok(manifest) => println!("{}", manifest.display()),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
