fn main() {
    std::process::exit(modl::commands::main_with_args(std::env::args_os()));
}
