use clap::Parser;

fn main() {
    std::process::exit(pileup::cli::main_with(pileup::cli::Cli::parse()));
}
