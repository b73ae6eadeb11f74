fn main() {
    std::process::exit(seqdesign::cli::main());
}
