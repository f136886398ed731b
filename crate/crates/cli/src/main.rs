fn main() -> std::process::ExitCode {
    ctrlbot_cli::main_exit()
}
