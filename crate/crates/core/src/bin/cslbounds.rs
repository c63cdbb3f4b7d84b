use clap::Parser;

fn main() {
    let cli = cslbounds::cli::Cli::parse();
    std::process::exit(cslbounds::cli::run(cli));
}
