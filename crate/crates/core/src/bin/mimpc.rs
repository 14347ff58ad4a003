fn main() {
    std::process::exit(mimpc::cli::main());
}
