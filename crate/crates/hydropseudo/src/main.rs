fn main() {
    std::process::exit(hydropseudo::cli::run_from_env());
}
