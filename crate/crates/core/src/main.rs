fn main() {
    std::process::exit(adopt_lab::cli::main());
}
