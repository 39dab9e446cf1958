fn main() {
    std::process::exit(wolfbench::cli::main_entry());
}
