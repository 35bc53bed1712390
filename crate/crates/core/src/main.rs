fn main() {
    std::process::exit(lora_eh::cli::main_with_args(std::env::args_os()));
}
