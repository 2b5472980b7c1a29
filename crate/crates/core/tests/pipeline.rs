use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use stem_core::align::{align_tags, AlignParams};
use stem_core::pipeline::{call_peaks, CallParams};
use stem_core::survival::{SurvivalTable, TableParams};
use stem_core::tags::{dedup_tags, shift_and_count, Strand, TagRecord};
use stem_core::{ChromSizes, CountTrack};

const TAG_LEN: u64 = 36;

fn tag(chrom: &str, loc: u64, strand: Strand) -> TagRecord {
    match strand {
        Strand::Forward => TagRecord::new(chrom, loc, loc + TAG_LEN, strand).unwrap(),
        Strand::Reverse => TagRecord::new(chrom, loc + 1 - TAG_LEN, loc + 1, strand).unwrap(),
    }
}

fn strand_of(b: bool) -> Strand {
    if b {
        Strand::Forward
    } else {
        Strand::Reverse
    }
}

proptest! {
    #[test]
    fn shifted_counts_match_hand_shifting(
        raw in prop::collection::vec((0u64..2_000, any::<bool>()), 0..300),
        shift in 0u64..150,
    ) {
        let len = 2_000u64;
        let tags: Vec<TagRecord> = raw
            .iter()
            .filter(|(loc, _)| *loc >= TAG_LEN)
            .map(|&(loc, fwd)| tag("c", loc.min(len - TAG_LEN), strand_of(fwd)))
            .collect();
        let tags = dedup_tags(&tags);
        let mut sizes = ChromSizes::new();
        sizes.insert("c", len);
        let out = shift_and_count(&tags, shift, &sizes);

        let mut expected: BTreeMap<u64, u32> = BTreeMap::new();
        let mut dropped = 0;
        for t in &tags {
            let loc = t.location() as i64;
            let moved = match t.strand {
                Strand::Forward => loc + shift as i64,
                Strand::Reverse => loc - shift as i64,
            };
            if (0..len as i64).contains(&moved) {
                *expected.entry(moved as u64).or_default() += 1;
            } else {
                dropped += 1;
            }
        }
        let counts = out.track.get("c").unwrap();
        prop_assert_eq!(out.dropped_boundary, dropped);
        prop_assert_eq!(counts.total() + dropped, tags.len() as u64);
        let got: BTreeMap<u64, u32> = counts.iter().collect();
        prop_assert_eq!(got, expected);
    }
}

struct Fixture {
    ip: Vec<TagRecord>,
    control: Vec<TagRecord>,
    sizes: ChromSizes,
    sites: Vec<(String, u64)>,
}

// binding sites every 3 kb on two chromosomes, fragments of 124 bp whose
// centres scatter narrowly around the site with a broad minority
fn fixture() -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let half = 62.0;
    let core = Normal::new(0.0f64, 40.0).unwrap();
    let tail = Normal::new(0.0f64, 200.0).unwrap();
    let mut sizes = ChromSizes::new();
    sizes.insert("chrA", 600_000);
    sizes.insert("chrB", 300_000);
    let mut ip = Vec::new();
    let mut control = Vec::new();
    let mut sites = Vec::new();
    for (chrom, len) in [("chrA", 600_000u64), ("chrB", 300_000)] {
        for s in (20_000..len - 20_000).step_by(3_000) {
            sites.push((chrom.to_string(), s));
            for _ in 0..300 {
                let spread = if rng.random_bool(0.7) { core } else { tail };
                let centre = s as f64 + spread.sample(&mut rng);
                if rng.random_bool(0.5) {
                    ip.push(tag(chrom, (centre - half).round() as u64, Strand::Forward));
                } else {
                    ip.push(tag(chrom, (centre + half).round() as u64, Strand::Reverse));
                }
            }
        }
        for _ in 0..len / 500 {
            let loc = rng.random_range(TAG_LEN..len - TAG_LEN);
            ip.push(tag(chrom, loc, strand_of(rng.random_bool(0.5))));
            let loc = rng.random_range(TAG_LEN..len - TAG_LEN);
            control.push(tag(chrom, loc, strand_of(rng.random_bool(0.5))));
        }
    }
    Fixture {
        ip,
        control,
        sizes,
        sites,
    }
}

fn quick_params() -> CallParams {
    CallParams {
        table: TableParams {
            n_lambda: 30,
            n_u: 60,
            min_length: 20_000,
            min_maxima: 300,
            ..TableParams::default()
        },
        q: 0.05,
        seed: 3,
        ..CallParams::default()
    }
}

fn counts(tags: &[TagRecord], shift: u64, sizes: &ChromSizes) -> CountTrack {
    shift_and_count(&dedup_tags(tags), shift, sizes).track
}

#[test]
fn align_then_call_finds_the_sites() {
    let f = fixture();
    let ip_tags = dedup_tags(&f.ip);
    let align = align_tags(
        &ip_tags,
        &f.sizes,
        None,
        &AlignParams {
            n_peaks: 150,
            ..AlignParams::default()
        },
    )
    .unwrap();
    assert_eq!(align.kernel.len(), 801);
    // peak selection on the tentatively shifted track pulls slightly toward 100
    assert!((62..=66).contains(&align.shift), "shift {}", align.shift);

    let ip = counts(&f.ip, align.shift, &f.sizes);
    let control = counts(&f.control, align.shift, &f.sizes);
    let params = quick_params();
    let out = call_peaks(&ip, &control, &align.kernel, None, &params).unwrap();

    let hits: Vec<_> = out.significant().collect();
    assert!(hits.len() as f64 >= 0.9 * f.sites.len() as f64, "{} significant", hits.len());
    let on_site = hits
        .iter()
        .filter(|p| f.sites.iter().any(|(c, s)| *c == p.chrom && p.position.abs_diff(*s) <= 200))
        .count();
    assert!(on_site as f64 >= 0.95 * hits.len() as f64);
    for (i, p) in out.peaks.iter().enumerate() {
        assert_eq!(p.rank, i + 1);
        assert!((0.0..=1.0).contains(&p.p));
        assert!(p.lambda0_plus >= p.lambda0);
    }
    assert_eq!(out.report.significant, hits.len());
}

#[test]
fn supplied_table_reproduces_the_call() {
    let f = fixture();
    let kernel = stem_core::Kernel::reference_shape(801).unwrap();
    let ip = counts(&f.ip, 62, &f.sizes);
    let control = counts(&f.control, 62, &f.sizes);
    let params = quick_params();
    let first = call_peaks(&ip, &control, &kernel, None, &params).unwrap();

    let mut json = Vec::new();
    first.table.as_ref().unwrap().write_json(&mut json).unwrap();
    let table = SurvivalTable::read_json(json.as_slice()).unwrap();
    let second = call_peaks(&ip, &control, &kernel, Some(&table), &params).unwrap();
    assert_eq!(first.peaks, second.peaks);

    let again = call_peaks(&ip, &control, &kernel, None, &params).unwrap();
    assert_eq!(first.peaks, again.peaks);
}
