fn main() {
    std::process::exit(fairdiv::cli::main());
}
