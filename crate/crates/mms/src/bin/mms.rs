fn main() {
    std::process::exit(mms::cli::main());
}
