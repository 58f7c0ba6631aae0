use clap::Parser;

fn main() {
    let cli = optimal_load::cli::Cli::parse();
    std::process::exit(optimal_load::cli::run(cli));
}
