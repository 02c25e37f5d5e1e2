//! Properties checked by the fuzz targets. Every parser must reject bad
//! input with an error rather than a panic, and whatever it accepts must
//! survive a write/parse round trip.

use lite_mot::cli::{parse_config_text, RunConfig};
use lite_mot::ingest::{parse_det, parse_gt, parse_results, parse_seqinfo, write_det, write_gt, write_results, write_seqinfo};
use lite_mot::lite::FeatureMap;

fn text(data: &[u8]) -> Option<&str> {
    std::str::from_utf8(data).ok()
}

pub fn check_gt(data: &[u8]) {
    let Some(t) = text(data) else { return };
    if let Ok(records) = parse_gt(t) {
        let again = parse_gt(&write_gt(&records)).expect("written ground truth parses");
        assert_eq!(records, again);
    }
}

pub fn check_det(data: &[u8]) {
    let Some(t) = text(data) else { return };
    if let Ok(dets) = parse_det(t) {
        let again = parse_det(&write_det(&dets)).expect("written detections parse");
        assert_eq!(dets.len(), again.len());
        for (a, b) in dets.iter().zip(&again) {
            assert_eq!((a.frame, a.bbox, a.confidence), (b.frame, b.bbox, b.confidence));
            assert_eq!(a.descriptor.is_some(), b.descriptor.is_some());
        }
    }
}

pub fn check_results(data: &[u8]) {
    let Some(t) = text(data) else { return };
    let Ok(records) = parse_results(t) else { return };
    let written = write_results(&records);
    // Two-decimal output cannot represent extents below 0.01.
    if records.iter().all(|r| r.bbox.w >= 0.01 && r.bbox.h >= 0.01) {
        let again = parse_results(&written).expect("written results parse");
        assert_eq!(write_results(&again), written, "two-decimal output is a fixed point");
    }
}

pub fn check_seqinfo(data: &[u8]) {
    let Some(t) = text(data) else { return };
    if let Ok(meta) = parse_seqinfo(t) {
        assert_eq!(parse_seqinfo(&write_seqinfo(&meta)).expect("written seqinfo parses"), meta);
    }
}

pub fn check_feature_map(data: &[u8]) {
    if let Ok(fm) = FeatureMap::from_bytes(data) {
        assert_eq!(fm.to_bytes(), data);
    }
}

pub fn check_run_config(data: &[u8]) {
    let Some(t) = text(data) else { return };
    let _ = parse_config_text(t);
    if let Ok(cfg) = RunConfig::from_text(t) {
        let written = cfg.to_text();
        let again = RunConfig::from_text(&written).expect("written config parses");
        assert_eq!(again.to_text(), written);
    }
}
