use clap::Parser;

fn main() {
    let cli = steingmm::cli::Cli::parse();
    std::process::exit(steingmm::cli::run(cli));
}
