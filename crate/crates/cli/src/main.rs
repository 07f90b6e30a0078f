fn main() {
    std::process::exit(fdxsim_cli::main_with_args(std::env::args_os()));
}
