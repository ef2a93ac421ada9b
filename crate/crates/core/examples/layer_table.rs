//! Per-layer output shapes and parameter counts of the default architecture.

use offlang::model::{format_summary, ModelArch};

fn main() {
    let arch = ModelArch { vocab_size: 21_251, ..ModelArch::default() };
    print!("{}", format_summary(&arch.layer_summary()));
    let with_users = ModelArch { use_user_count: true, ..arch };
    println!("\nwith user count: {} parameters", with_users.total_params());
}
