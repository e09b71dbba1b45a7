//! Input generators shared by the criterion benches.

use spikeshot_core::event_io::{Event, EventStream, Polarity};

/// `n` events spread over `duration` µs on a `side x side` sensor, from a
/// fixed linear congruential sequence so runs are comparable.
pub fn event_stream(n: usize, side: u16, duration: u64) -> EventStream {
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut next = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        state >> 33
    };
    let events = (0..n)
        .map(|_| {
            let t = next() % duration.max(1);
            let x = (next() % side as u64) as u16;
            let y = (next() % side as u64) as u16;
            Event::new(t, x, y, Polarity::from_bit(next() & 1 == 1))
        })
        .collect();
    EventStream::new(side, side, events).expect("generated events are in bounds")
}

/// N-MNIST style `.bin` bytes for `n` events.
pub fn nmnist_bytes(n: usize) -> Vec<u8> {
    let s = event_stream(n, 34, 300_000);
    s.events()
        .iter()
        .flat_map(|e| {
            let t = e.t as u32;
            [
                e.x as u8,
                e.y as u8,
                ((e.polarity.as_u8()) << 7) | ((t >> 16) & 0x7F) as u8,
                (t >> 8) as u8,
                t as u8,
            ]
        })
        .collect()
}

/// AEDAT 2.0 bytes (header plus DVS128 records) for `n` events.
pub fn aedat_bytes(n: usize) -> Vec<u8> {
    let s = event_stream(n, 128, 1_000_000);
    let mut out = b"#!AER-DAT2.0\r\n# generated\r\n".to_vec();
    for e in s.events() {
        let addr = ((e.y as u32) << 8) | ((e.x as u32) << 1) | (1 - e.polarity.as_u8() as u32);
        out.extend_from_slice(&addr.to_be_bytes());
        out.extend_from_slice(&(e.t as u32).to_be_bytes());
    }
    out
}
