fn main() {
    std::process::exit(meshgmm::cli::main());
}
