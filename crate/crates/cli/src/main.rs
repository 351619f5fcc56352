use clap::Parser;

fn main() {
    std::process::exit(ktori_cli::run(ktori_cli::Cli::parse()));
}
