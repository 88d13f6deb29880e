// SPDX-License-Identifier: Apache-2.0

fn main() {
    std::process::exit(frac_lqr::cli::run(std::env::args_os()));
}
