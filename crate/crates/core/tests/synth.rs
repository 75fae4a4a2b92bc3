//! Synthetic dataset: annotations against the rendered audio.

use std::fs;

use tfd_sed::data::{pool_labels, strong_label_matrix};
use tfd_sed::synth::{synth, synth_clip, SynthSpec, CLASS_NAMES};

const SR: usize = 16_000;
/// Samples per pooled label frame: hop 256 times a time pool of 4.
const FRAME: usize = 1024;

#[test]
fn silent_background_energy_matches_labels_within_one_frame() {
    let spec = SynthSpec {
        noise_rms: 0.0,
        ..SynthSpec::default()
    };
    let classes = CLASS_NAMES.len();
    for i in 0..40 {
        let clip = synth_clip(&spec, "strong", i, "x.wav");
        let n_frames = 10 * SR / 256 + 1;
        let y = pool_labels(&strong_label_matrix(&clip.events, classes, n_frames, 256.0 / SR as f64), classes, 4);
        let tp = n_frames / 4;
        let any_label = |p: usize| (0..classes).any(|c| y[c * tp + p] > 0.0);
        let energy = |p: usize| clip.samples[p * FRAME..((p + 1) * FRAME).min(clip.samples.len())].iter().any(|v| *v != 0.0);
        for p in 0..tp {
            if energy(p) != any_label(p) {
                let near = |f: &dyn Fn(usize) -> bool| (p.saturating_sub(1)..=(p + 1).min(tp - 1)).any(f);
                assert!(
                    near(&any_label) && near(&energy),
                    "clip {} frame {}: energy {} label {}",
                    i,
                    p,
                    energy(p),
                    any_label(p)
                );
            }
        }
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let spec = SynthSpec {
        clips: [2, 2, 2, 1, 1],
        ..SynthSpec::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synth(&spec, a.path()).unwrap();
    synth(&spec, b.path()).unwrap();
    let mut files = Vec::new();
    let mut stack = vec![a.path().to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    assert!(files.len() >= 8 + 5);
    for f in files {
        let rel = f.strip_prefix(a.path()).unwrap();
        assert_eq!(fs::read(&f).unwrap(), fs::read(b.path().join(rel)).unwrap(), "{:?}", rel);
    }

    let other = SynthSpec { seed: 1, ..spec };
    let c = tempfile::tempdir().unwrap();
    synth(&other, c.path()).unwrap();
    let wav = |root: &std::path::Path| fs::read(root.join("audio/strong/strong_0000.wav")).unwrap();
    assert_ne!(wav(a.path()), wav(c.path()));
}

#[test]
fn zero_events_give_silence_and_empty_rows() {
    let spec = SynthSpec {
        min_events: 0,
        max_events: 0,
        noise_rms: 0.0,
        ..SynthSpec::default()
    };
    let clip = synth_clip(&spec, "test", 0, "x.wav");
    assert!(clip.events.is_empty());
    assert!(clip.samples.iter().all(|v| *v == 0.0));
}
