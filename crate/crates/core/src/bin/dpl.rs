fn main() {
    std::process::exit(diamond_polymer::cli::main());
}
