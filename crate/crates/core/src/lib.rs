pub mod bench;
pub mod chad;
pub mod cli;
pub mod cotangent;
pub mod eval;
pub mod evm;
pub mod hoc;
pub mod lang;
pub mod oracle;

/// Runs `f` on a thread with a 1 GiB stack. Evaluation, typechecking and
/// transformation recurse on term depth, which reaches the tens of
/// thousands for the larger benchmark programs.
pub fn with_big_stack<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    std::thread::scope(|s| {
        std::thread::Builder::new()
            .stack_size(1 << 30)
            .spawn_scoped(s, f)
            .expect("spawn evaluation thread")
            .join()
            .unwrap_or_else(|e| std::panic::resume_unwind(e))
    })
}
