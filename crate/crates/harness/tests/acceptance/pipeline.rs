//! Dataset pipeline: dynamic masking, serialization, determinism and
//! stream synchronization.

use std::fs;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use vichan_core::dataset::{
    build_dataset, generate_area, mask_dynamic, read_dataset, synchronize, write_dataset, AreaSpec, DatasetConfig, Palette,
    Triplet, MASKED_CLASSES, MAX_SYNC_OFFSET_S,
};
use vichan_harness::experiments::{run_dynamic_removal, ExperimentOptions};
use vichan_harness::RunOptions;

use crate::Verdict;

const SYNC_TRIALS: usize = 200;
const MAX_STREAM_RECORDS: usize = 50;

fn small_config(seed: u64, per_area: usize) -> DatasetConfig {
    let area = |id, tx_height_m| AreaSpec { id, tx_height_m, snapshots: Some(per_area) };
    DatasetConfig { seed, areas: vec![area(1, 33.0), area(2, 34.0), area(4, 3.0)], ..DatasetConfig::default() }
}

pub fn dynamic_removal() -> Verdict {
    let cfg = small_config(21, 16);
    // Panorama level: every masked-class pixel becomes void at depth 1.
    let (mut masked_pixels, mut bad_pixels) = (0usize, 0usize);
    for area in &cfg.areas {
        for raw in generate_area(&cfg, area).unwrap() {
            let m = mask_dynamic(&raw.panorama);
            for (i, &c) in raw.panorama.semantic.iter().enumerate() {
                let was_masked = MASKED_CLASSES.iter().any(|k| *k as u8 == c);
                let still = MASKED_CLASSES.iter().any(|k| *k as u8 == m.semantic[i]);
                masked_pixels += usize::from(was_masked);
                bad_pixels += usize::from(still || (was_masked && m.depth[i] != 1.0) || (!was_masked && m.depth[i] != raw.panorama.depth[i]));
            }
        }
    }

    // Model inputs: no palette colour of a masked class survives encoding.
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    build_dataset(&cfg, &data).unwrap();
    let (masked, manifest) = read_dataset(&data.join("masked")).unwrap();
    let palette = Palette::default();
    let banned: Vec<[f32; 3]> = MASKED_CLASSES.iter().map(|c| palette.color_f32(*c as u8).unwrap()).collect();
    let plane = 224 * 224;
    let mut banned_inputs = 0;
    for s in &masked {
        for px in 0..plane {
            let rgb = [s.semantic[px], s.semantic[plane + px], s.semantic[2 * plane + px]];
            banned_inputs += usize::from(banned.contains(&rgb));
        }
    }

    // Paired run: both variants train and both curves are written.
    let mut overrides = toml::Table::new();
    overrides.insert("backbone".into(), toml::Value::String("compact-conv".into()));
    overrides.insert("max_epochs".into(), toml::Value::Integer(2));
    let opts = ExperimentOptions { overrides, run: RunOptions { plots: true, progress: false }, ..ExperimentOptions::default() };
    let out = tmp.path().join("exp2");
    let report = run_dynamic_removal(&data, &out, &opts);
    let curves = fs::read_to_string(out.join("curves.csv")).unwrap_or_default();
    let rows = |variant: &str| curves.lines().filter(|l| l.starts_with(&format!("{variant},"))).count();
    let (raw_rows, masked_rows) = (rows("raw"), rows("masked"));
    let figure = out.join("plots/training_curves.svg").is_file();

    let ok = masked_pixels > 0
        && bad_pixels == 0
        && manifest.masked
        && banned_inputs == 0
        && report.is_ok()
        && raw_rows == 2
        && masked_rows == 2
        && figure;
    Verdict::new(
        ok,
        format!(
            "{masked_pixels} masked panorama pixels, {bad_pixels} wrong; {banned_inputs} masked-class input pixels in {} samples; \
             curves raw {raw_rows} / masked {masked_rows} epochs, figure {figure}, experiment {}",
            masked.len(),
            report.map(|_| "ok".to_string()).unwrap_or_else(|e| e.to_string())
        ),
    )
}

fn same_files(a: &Path, b: &Path) -> usize {
    let mut differing = 0;
    for sub in ["samples", "labels"] {
        let mut names: Vec<_> = fs::read_dir(a.join(sub)).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        for n in names {
            differing += usize::from(fs::read(a.join(sub).join(&n)).unwrap() != fs::read(b.join(sub).join(&n)).unwrap_or_default());
        }
    }
    differing + usize::from(fs::read(a.join("manifest")).unwrap() != fs::read(b.join("manifest")).unwrap())
}

/// Every assignment of records, maximising matches and then minimising the
/// total offset.
fn exhaustive(c: &[f64], img: &[f64], gps: &[f64], max: f64) -> Vec<Triplet> {
    struct Search<'a> {
        c: &'a [f64],
        img: &'a [f64],
        gps: &'a [f64],
        max: f64,
        used_i: Vec<bool>,
        used_g: Vec<bool>,
        cur: Vec<Triplet>,
        best: (usize, f64, Vec<Triplet>),
    }
    impl Search<'_> {
        fn go(&mut self, k: usize, cost: f64) {
            if self.cur.len() + (self.c.len() - k) < self.best.0 {
                return;
            }
            if k == self.c.len() {
                if self.cur.len() > self.best.0 || (self.cur.len() == self.best.0 && cost < self.best.1) {
                    self.best = (self.cur.len(), cost, self.cur.clone());
                }
                return;
            }
            self.go(k + 1, cost);
            for i in 0..self.img.len() {
                let di = (self.img[i] - self.c[k]).abs();
                if self.used_i[i] || di > self.max {
                    continue;
                }
                for g in 0..self.gps.len() {
                    let dg = (self.gps[g] - self.c[k]).abs();
                    if self.used_g[g] || dg > self.max {
                        continue;
                    }
                    self.used_i[i] = true;
                    self.used_g[g] = true;
                    self.cur.push(Triplet { channel: k, image: i, gps: g });
                    self.go(k + 1, cost + di + dg);
                    self.cur.pop();
                    self.used_i[i] = false;
                    self.used_g[g] = false;
                }
            }
        }
    }
    let mut s = Search {
        c,
        img,
        gps,
        max,
        used_i: vec![false; img.len()],
        used_g: vec![false; gps.len()],
        cur: Vec::new(),
        best: (0, f64::INFINITY, Vec::new()),
    };
    s.go(0, 0.0);
    s.best.2
}

/// Half-second cadence with up to ±0.12 s jitter and dropped records.
fn stream(rng: &mut StdRng, slots: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(slots);
    for i in 0..slots {
        let jitter = rng.random_range(-0.12..0.12);
        if rng.random_bool(0.85) {
            out.push(i as f64 * 0.5 + jitter);
        }
    }
    out
}

pub fn pipeline_integrity() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(9, 6);
    let a = tmp.path().join("a");
    let built = build_dataset(&cfg, &a).unwrap();
    let again = build_dataset(&cfg, &tmp.path().join("b")).unwrap();
    let other = build_dataset(&small_config(10, 6), &tmp.path().join("c")).unwrap();
    let hashes_match = built.manifest.content_hash == again.manifest.content_hash
        && built.masked_manifest.as_ref().map(|m| &m.content_hash) == again.masked_manifest.as_ref().map(|m| &m.content_hash);
    let hashes_differ = built.manifest.content_hash != other.manifest.content_hash;

    let (samples, manifest) = read_dataset(&a).unwrap();
    let copy = tmp.path().join("copy");
    write_dataset(&samples, manifest.clone(), &built.drops, &copy).unwrap();
    let differing = same_files(&a, &copy);
    let (reread, _) = read_dataset(&copy).unwrap();
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let values_equal = reread.len() == samples.len()
        && reread.iter().zip(&samples).all(|(x, y)| bits(&x.semantic) == bits(&y.semantic) && bits(&x.depth) == bits(&y.depth) && x == y);

    let keeps = synchronize(&[1.0], &[1.05], &[0.95], MAX_SYNC_OFFSET_S).len() == 1;
    let drops = synchronize(&[1.0], &[1.15], &[1.01], MAX_SYNC_OFFSET_S).is_empty();

    let mut rng = StdRng::seed_from_u64(8);
    let mut disagreements = 0;
    let mut matched = 0;
    for _ in 0..SYNC_TRIALS {
        let slots = rng.random_range(1..=MAX_STREAM_RECORDS / 3);
        let (c, i, g) = (stream(&mut rng, slots), stream(&mut rng, slots), stream(&mut rng, slots));
        assert!(c.len() + i.len() + g.len() <= MAX_STREAM_RECORDS);
        let got = synchronize(&c, &i, &g, MAX_SYNC_OFFSET_S);
        matched += got.len();
        disagreements += usize::from(got != exhaustive(&c, &i, &g, MAX_SYNC_OFFSET_S));
    }

    Verdict::new(
        hashes_match && hashes_differ && differing == 0 && values_equal && keeps && drops && disagreements == 0,
        format!(
            "{} samples: {differing} files differ after write/read/write, values equal {values_equal}; same-seed hash match {hashes_match}, \
             other seed differs {hashes_differ}; 0.05 s kept {keeps}, 0.15 s dropped {drops}; matcher disagreed on \
             {disagreements}/{SYNC_TRIALS} streams ({matched} triplets)",
            samples.len()
        ),
    )
}
