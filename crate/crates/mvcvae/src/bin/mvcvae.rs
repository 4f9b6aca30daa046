fn main() {
    std::process::exit(mvcvae::cli::run());
}
