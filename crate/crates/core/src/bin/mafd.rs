fn main() {
    std::process::exit(monge_ampere_fd::cli::main());
}
