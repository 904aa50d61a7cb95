fn main() {
    std::process::exit(airway_recon::cli::main());
}
