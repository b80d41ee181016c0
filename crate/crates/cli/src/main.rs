use clap::Parser;

fn main() {
    let cli = genbrown_cli::Cli::parse();
    std::process::exit(genbrown_cli::run(cli));
}
