fn main() {
    std::process::exit(sfi_lab::cli::main());
}
