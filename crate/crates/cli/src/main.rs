fn main() {
    std::process::exit(kinespike_cli::run(std::env::args().collect()));
}
