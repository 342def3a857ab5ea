fn main() {
    std::process::exit(forcematch::cli::main());
}
