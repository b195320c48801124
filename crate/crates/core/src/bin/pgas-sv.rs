fn main() {
    std::process::exit(pgas_sv::cli::main_with_args(std::env::args_os()));
}
