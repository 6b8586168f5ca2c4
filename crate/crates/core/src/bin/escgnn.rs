fn main() {
    std::process::exit(geoscatter::cli::run(std::env::args_os()));
}
