fn main() {
    std::process::exit(henet::cli::main());
}
