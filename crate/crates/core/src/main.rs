use alid::synth_eval::mem::PeakAlloc;

#[global_allocator]
static ALLOC: PeakAlloc = PeakAlloc::new();

fn main() {
    std::process::exit(alid::cli::run(std::env::args_os(), Some(&ALLOC)));
}
