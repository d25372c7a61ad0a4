fn main() {
    std::process::exit(implicit_stability::cli::main());
}
