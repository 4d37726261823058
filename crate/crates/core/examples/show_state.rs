//! Prints the creation script of a generated database state.
//!
//! `cargo run -p coddtest --example show_state -- 42`
fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let state = coddtest::state_gen::generate_state(seed, &Default::default());
    for stmt in &state.creation_script {
        println!("{stmt};");
    }
}
