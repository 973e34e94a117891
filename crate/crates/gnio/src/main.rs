fn main() {
    std::process::exit(gnio::cli::run());
}
