fn main() {
    std::process::exit(xqgram::cli::main());
}
