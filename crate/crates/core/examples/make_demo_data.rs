//! Writes a small synthetic database + test split.
//!
//!     cargo run -p ijip-core --example make_demo_data -- demo [--aux]

use std::path::PathBuf;

use ijip_core::synthetic::SyntheticSpec;

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "demo".into()));
    let aux = args.any(|a| a == "--aux");
    let spec = SyntheticSpec {
        aux,
        ..SyntheticSpec::default()
    };
    let files = spec.generate().write(&dir).expect("writing demo data");
    println!("{}", files.db_manifest.display());
    println!("{}", files.test_manifest.display());
}
