use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(rigid_frames_cli::run(std::env::args_os()))
}
