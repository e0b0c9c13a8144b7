fn main() {
    std::process::exit(spofolio_cli::run(std::env::args()));
}
