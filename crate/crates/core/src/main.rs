use clap::Parser;

use poisson_stein::cli::{main_with, Cli};

fn main() {
    std::process::exit(main_with(Cli::parse()));
}
