use clap::Parser;

fn main() {
    let cli = reassembly_cli::Cli::parse();
    let status = reassembly_cli::run(cli);
    std::process::exit(status.code());
}
