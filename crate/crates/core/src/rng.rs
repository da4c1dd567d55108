//! Seeded random streams.
//!
//! Every stochastic routine draws from a ChaCha8 stream keyed by
//! `(master seed, key, index)`, where the index is a replicate or block
//! number. Workers only decide which indices they run, so results depend
//! on the seed alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream `index` of family `key`.
pub fn stream(master: u64, key: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(master ^ splitmix(key)));
    rng.set_stream(index);
    rng
}

/// Run `f(worker)` for every worker and collect the results in worker order.
///
/// With one worker the closure runs on the calling thread.
pub fn run_workers<T, F>(workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = workers.max(1);
    if workers == 1 {
        return vec![f(0)];
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers).map(|w| s.spawn({
            let f = &f;
            move || f(w)
        })).collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Split `0..n` into `workers` contiguous chunks.
pub fn chunk(n: usize, workers: usize, worker: usize) -> std::ops::Range<usize> {
    let workers = workers.max(1);
    let base = n / workers;
    let extra = n % workers;
    let start = worker * base + worker.min(extra);
    let len = base + usize::from(worker < extra);
    start..start + len
}
