fn main() {
    std::process::exit(weakshift::main_with_args(std::env::args_os()));
}
