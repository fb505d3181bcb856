fn main() {
    std::process::exit(ufofdm::cli::run());
}
