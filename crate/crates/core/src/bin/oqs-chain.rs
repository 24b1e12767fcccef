// SPDX-License-Identifier: Apache-2.0

//! `oqs-chain` command-line entry point.

fn main() -> std::process::ExitCode {
    oqs_chain::cli::main_with_args(std::env::args_os())
}
