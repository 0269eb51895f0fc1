fn main() {
    std::process::exit(almost_barrier::cli::main());
}
