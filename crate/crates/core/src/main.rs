fn main() {
    std::process::exit(softgconv::cli::main_exit_code());
}
