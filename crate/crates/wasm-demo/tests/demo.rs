use phasetopic_wasm::{
    filter_response, simulate_series, topic_sweep, BurstRequest, SeriesRequest, SweepRequest,
};

fn two_waves() -> SeriesRequest {
    SeriesRequest {
        bursts: vec![
            BurstRequest {
                day: 20,
                slope: 5.0,
                plateau: 40.0,
            },
            BurstRequest {
                day: 50,
                slope: 20.0,
                plateau: 200.0,
            },
        ],
        ..SeriesRequest::default()
    }
}

#[test]
fn series_matches_its_oracle_and_partitions_the_window() {
    let reply = simulate_series(&two_waves()).unwrap();
    assert_eq!(reply.volume.len(), 90);
    assert_eq!(reply.dates[0], "2020-01-01");
    assert_eq!(reply.boundaries, reply.oracle_boundaries);
    assert_eq!(reply.boundaries[0], 20);
    assert!(reply.velocity[0].is_none() && reply.acceleration[1].is_none());
    assert_eq!(reply.phases.first().unwrap().start, 0);
    assert_eq!(reply.phases.last().unwrap().end, 89);
    for w in reply.phases.windows(2) {
        assert_eq!(w[0].end + 1, w[1].start);
    }
}

#[test]
fn bad_series_requests_are_errors() {
    let req = SeriesRequest {
        anchor: 0,
        ..SeriesRequest::default()
    };
    assert!(simulate_series(&req).is_err());
    let req = SeriesRequest {
        anchor: 200,
        ..SeriesRequest::default()
    };
    assert!(simulate_series(&req).is_err());
}

#[test]
fn measured_response_follows_the_closed_form() {
    let reply = filter_response(0.2, 41).unwrap();
    assert_eq!(reply.frequency.len(), 41);
    assert!((reply.measured[0] - 1.0).abs() < 1e-9);
    for (a, m) in reply.analytic.iter().zip(&reply.measured).take(40) {
        assert!((a - m).abs() < 0.02, "{a} vs {m}");
    }
    assert!(reply.measured[40] < 0.05);
    assert!(filter_response(1.5, 10).is_err());
}

#[test]
fn sweep_reports_every_k_and_is_deterministic() {
    let req = SweepRequest {
        docs: 240,
        k_max: 4,
        epochs: 20,
        ..SweepRequest::default()
    };
    let a = topic_sweep(&req).unwrap();
    let ks: Vec<usize> = a.perplexity.iter().map(|(k, _)| *k).collect();
    assert_eq!(ks, vec![2, 3, 4]);
    assert_eq!(a.top_words.len(), a.k_star);
    assert_eq!(a.planted.len(), 3);
    let b = topic_sweep(&req).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert!(topic_sweep(&SweepRequest { topics: 0, ..req }).is_err());
}
