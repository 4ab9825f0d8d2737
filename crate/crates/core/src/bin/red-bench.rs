fn main() {
    std::process::exit(red_bench::cli::main_with_args(std::env::args_os()));
}
