fn main() {
    std::process::exit(concept_space::cli::run(std::env::args_os()));
}
