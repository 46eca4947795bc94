//! Measure offline degradation and online features over the archetype
//! corpora, then grid-search the online thresholds.
//!
//! cargo run --release --example calibrate

use rayon::prelude::*;

use vertmem::classifier::{
    calibrate, classify_features, classify_offline, sample_app, CalibrationSample, SamplerConfig, Thresholds,
};
use vertmem::hierarchy::HierarchyConfig;
use vertmem::mapping::AddressMapping;
use vertmem::workloads::{gen, randomized_corpus, ArchetypeKind, ArchetypeParams};
use vertmem::AppId;

fn main() {
    let m = AddressMapping::default();
    let h = HierarchyConfig::default();
    let base = Thresholds::default();
    let sampler = SamplerConfig::default();
    let mut corpus: Vec<ArchetypeParams> = ArchetypeKind::ALL
        .iter()
        .flat_map(|&k| (0..5).map(move |s| ArchetypeParams::canonical(k, s)))
        .collect();
    corpus.extend(randomized_corpus(100, 7));
    let rows: Vec<_> = corpus
        .par_iter()
        .map(|p| {
            let t = gen(p, "a").unwrap();
            let v = classify_offline(&t, &m, &h, &base).unwrap();
            let ev = sample_app(&t, AppId(0), &m, &sampler).unwrap();
            (*p, v, ev.mean_hot_pages().unwrap(), ev.wpd().unwrap())
        })
        .collect();
    let samples: Vec<CalibrationSample> = rows
        .iter()
        .map(|(_, v, h, w)| CalibrationSample {
            hot_pages: *h,
            wpd: *w,
            label: v.category,
        })
        .collect();
    let (t, correct) = calibrate(&samples, &base);
    println!("{t:?}");
    println!("agreement {correct}/{}", samples.len());
    for (i, (p, v, h, w)) in rows.iter().enumerate() {
        let online = classify_features(*h, *w, &t);
        let mark = if online == v.category { "" } else { "  MISMATCH" };
        println!(
            "{i:3} {:?} pages={} acc={} reuse={} d={:.4} offline={} h={:.1} w={:.3} online={}{}",
            p.kind, p.working_set_pages, p.access_count, p.reuse, v.degradation, v.category, h, w, online, mark
        );
    }
}
