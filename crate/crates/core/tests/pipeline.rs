use std::collections::HashMap;
use std::io::Cursor;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spikeye::dataset::Session;
use spikeye::events::{
    bin_events, read_events, write_events, BinnedSession, Event, Polarity, GRID_AREA, GRID_WIDTH,
};
use spikeye::labels::{interpolate_labels, read_label_rows, write_label_rows, LabelRow, LabelTrack};
use spikeye::spline::NaturalCubicSpline;

fn random_events(n: usize, span_us: u64, seed: u64) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ev: Vec<Event> = (0..n)
        .map(|_| {
            let p = if rng.gen_bool(0.5) { Polarity::On } else { Polarity::Off };
            Event::new(rng.gen_range(0..span_us), rng.gen_range(0..640), rng.gen_range(0..480), p)
        })
        .collect();
    ev.sort_by_key(|e| e.t);
    ev
}

/// Counts per (bin, channel, grid y, grid x) by hand.
fn recount(events: &[Event], origin_us: u64, n_bins: u64) -> HashMap<(u64, usize, usize, usize), u32> {
    let mut m = HashMap::new();
    for e in events {
        if e.t < origin_us || e.t >= origin_us + n_bins * 1000 {
            continue;
        }
        let bin = (e.t - origin_us) / 1000;
        let ch = if e.p == Polarity::On { 0 } else { 1 };
        *m.entry((bin, ch, e.y as usize / 8, e.x as usize / 8)).or_insert(0) += 1;
    }
    m
}

#[test]
fn ten_thousand_events_recount() {
    let events = random_events(10_000, 250_000, 3);
    let expected = recount(&events, 0, 250);
    let binned = bin_events(&events, 1, 250).unwrap();
    assert_eq!(binned.dropped, 0);
    let mut seen = 0;
    for (k, f) in binned.frames.iter().enumerate() {
        for (i, &c) in f.counts().iter().enumerate() {
            let key = (k as u64, i / GRID_AREA, (i % GRID_AREA) / GRID_WIDTH, i % GRID_WIDTH);
            assert_eq!(c, expected.get(&key).copied().unwrap_or(0), "{key:?}");
            seen += c as usize;
        }
    }
    assert_eq!(seen, 10_000);

    // The sparse session store agrees, including with a shifted origin.
    let origin = 37_000;
    let expected = recount(&events, origin, 200);
    let session = BinnedSession::from_events(&events, origin, 200);
    for k in 0..200 {
        let f = session.frame(k);
        for (i, &c) in f.counts().iter().enumerate() {
            let key = (k as u64, i / GRID_AREA, (i % GRID_AREA) / GRID_WIDTH, i % GRID_WIDTH);
            assert_eq!(c, expected.get(&key).copied().unwrap_or(0));
        }
    }
}

#[test]
fn csv_round_trips() {
    let events = random_events(500, 10_000, 9);
    let mut buf = Vec::new();
    write_events(&mut buf, &events).unwrap();
    assert_eq!(read_events(Cursor::new(&buf)).unwrap(), events);

    let rows: Vec<LabelRow> = (0..20)
        .map(|i| LabelRow { t_us: i * 10_000, x: 100.0 + i as f64, y: 200.5, blink: i == 7, line: 0 })
        .collect();
    let mut buf = Vec::new();
    write_label_rows(&mut buf, &rows).unwrap();
    let back = read_label_rows(Cursor::new(&buf)).unwrap();
    assert_eq!(back.len(), rows.len());
    for (a, b) in back.iter().zip(&rows) {
        assert_eq!((a.t_us, a.x, a.y, a.blink), (b.t_us, b.x, b.y, b.blink));
    }
}

#[test]
fn zero_polarity_reads_as_negative() {
    let ev = read_events(Cursor::new("t_us,x,y,p\n5,1,2,0\n")).unwrap();
    assert_eq!(ev[0].p, Polarity::Off);
}

#[test]
fn session_pairs_upsampled_labels_with_frames() {
    let events = random_events(2_000, 100_000, 4);
    let rows: Vec<LabelRow> = (0..10)
        .map(|i| LabelRow { t_us: i * 10_000, x: 320.0, y: 240.0, blink: false, line: 0 })
        .collect();
    let track = LabelTrack::from_rows(&rows, 8.0).unwrap();
    let s = Session::from_raw("r", &events, &track).unwrap();
    assert_eq!(s.len(), 91);
    assert!(s.label_points().iter().all(|p| (p.x - 40.0).abs() < 1e-12 && (p.y - 30.0).abs() < 1e-12));
    let binned = bin_events(&events, 1, 91).unwrap();
    for k in 0..91 {
        assert_eq!(s.frames.frame(k).counts(), binned.frames[k].counts());
    }
}

proptest! {
    #[test]
    fn spline_interpolates_its_knots(values in prop::collection::vec(-100.0f64..100.0, 4..40)) {
        let knots: Vec<f64> = (0..values.len()).map(|i| i as f64 * 10.0).collect();
        let s = NaturalCubicSpline::fit(&knots, &values).unwrap();
        for (t, v) in knots.iter().zip(&values) {
            prop_assert!((s.eval(*t) - v).abs() <= 1e-9 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn upsampling_keeps_sample_times(n in 4usize..30, x0 in 0.0f64..600.0) {
        let rows: Vec<LabelRow> = (0..n)
            .map(|i| LabelRow { t_us: i as u64 * 10_000, x: x0 + i as f64, y: 240.0, blink: false, line: 0 })
            .collect();
        let track = LabelTrack::from_rows(&rows, 8.0).unwrap();
        let up = interpolate_labels(&track, 1000.0).unwrap();
        prop_assert_eq!(up.len(), (n - 1) * 10 + 1);
        for i in 0..n {
            prop_assert!((up.samples[i * 10].x - track.samples[i].x).abs() < 1e-9);
        }
    }
}
