fn main() {
    std::process::exit(nlsmooth::cli::run());
}
