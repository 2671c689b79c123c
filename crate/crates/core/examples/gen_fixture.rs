//! Regenerates `fixtures/mini_digits.csv`.
//!
//! cargo run -p kmtl-core --example gen_fixture > crates/core/fixtures/mini_digits.csv

fn main() {
    print!("{}", kmtl::env::mini_digits());
}
