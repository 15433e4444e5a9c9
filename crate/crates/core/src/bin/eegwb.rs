fn main() {
    std::process::exit(eeg_workbench::cli::main_with_args(std::env::args_os()));
}
