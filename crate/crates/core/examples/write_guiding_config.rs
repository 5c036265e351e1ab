//! Prints the built-in guiding configuration as JSON.
//!
//! `cargo run --example write_guiding_config > configs/guiding.json`

fn main() {
    println!("{}", disagg::experiment::guiding::config().to_json());
}
