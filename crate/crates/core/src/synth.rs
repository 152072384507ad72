//! Synthetic emotion-like corpus with disjoint label spaces.
//!
//! A 2-D latent point `z` drawn uniformly from `[-1, 1]^2` drives three
//! targets: `emotion` (the quadrant of `z`, four classes), `arousal` and
//! `valence` (the two coordinates plus Gaussian noise). The features are a
//! random linear embedding of `z` plus Gaussian noise. The cross-labeling
//! corpus is split into four files: all three targets, emotion only,
//! arousal/valence only, and unlabeled.

use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::arff::{write_arff, ArffRelation, ArffValue, AttributeDecl};

pub const EMOTIONS: [&str; 4] = ["ang", "hap", "sad", "neu"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub cross_instances: usize,
    pub test_instances: usize,
    pub feature_dim: usize,
    pub feature_noise: f64,
    pub target_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            cross_instances: 2500,
            test_instances: 500,
            feature_dim: 10,
            feature_noise: 0.1,
            target_noise: 0.1,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    /// Four files: (relation, number of trailing targets).
    pub files: Vec<(ArffRelation, usize)>,
    /// Fully labeled held-out set with all three targets.
    pub test: ArffRelation,
}

/// Quadrant class of a latent point: arousal is the first coordinate,
/// valence the second.
pub fn quadrant(z: [f64; 2]) -> usize {
    match (z[0] >= 0.0, z[1] >= 0.0) {
        (true, false) => 0,  // ang: high arousal, negative valence
        (true, true) => 1,   // hap
        (false, false) => 2, // sad
        (false, true) => 3,  // neu
    }
}

struct Instance {
    features: Vec<f64>,
    emotion: usize,
    arousal: f64,
    valence: f64,
}

fn feature_attrs(dim: usize) -> Vec<AttributeDecl> {
    (1..=dim).map(|j| AttributeDecl::numeric(format!("f{j}"))).collect()
}

fn relation(name: &str, dim: usize, instances: &[Instance], emotion: bool, av: bool) -> (ArffRelation, usize) {
    let mut attrs = feature_attrs(dim);
    if emotion {
        attrs.push(AttributeDecl::nominal("emotion", EMOTIONS));
    }
    if av {
        attrs.push(AttributeDecl::numeric("arousal"));
        attrs.push(AttributeDecl::numeric("valence"));
    }
    let mut rel = ArffRelation::new(name, attrs);
    for inst in instances {
        let mut row: Vec<ArffValue> = inst.features.iter().map(|&x| ArffValue::Num(x)).collect();
        if emotion {
            row.push(ArffValue::Nom(inst.emotion));
        }
        if av {
            row.push(ArffValue::Num(inst.arousal));
            row.push(ArffValue::Num(inst.valence));
        }
        rel.rows.push(row);
    }
    let targets = usize::from(emotion) + 2 * usize::from(av);
    (rel, targets)
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let embedding: Vec<[f64; 2]> =
        (0..spec.feature_dim).map(|_| [std_normal.sample(&mut rng), std_normal.sample(&mut rng)]).collect();
    let offset: Vec<f64> = (0..spec.feature_dim).map(|_| 0.5 * std_normal.sample(&mut rng)).collect();

    let draw = |rng: &mut ChaCha8Rng| {
        let z = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
        let features = embedding
            .iter()
            .zip(&offset)
            .map(|(w, b)| w[0] * z[0] + w[1] * z[1] + b + spec.feature_noise * std_normal.sample(rng))
            .collect();
        Instance {
            features,
            emotion: quadrant(z),
            arousal: z[0] + spec.target_noise * std_normal.sample(rng),
            valence: z[1] + spec.target_noise * std_normal.sample(rng),
        }
    };
    let cross: Vec<Instance> = (0..spec.cross_instances).map(|_| draw(&mut rng)).collect();
    let test: Vec<Instance> = (0..spec.test_instances).map(|_| draw(&mut rng)).collect();

    let n = spec.cross_instances;
    let bounds: Vec<usize> = (0..=4).map(|q| q * n / 4).collect();
    let part = |q: usize| &cross[bounds[q]..bounds[q + 1]];
    let d = spec.feature_dim;
    SyntheticCorpus {
        files: vec![
            relation("session1_all", d, part(0), true, true),
            relation("session2_emotion", d, part(1), true, false),
            relation("session3_av", d, part(2), false, true),
            relation("session4_unlabeled", d, part(3), false, false),
        ],
        test: relation("session5_test", d, &test, true, true).0,
    }
}

pub const FILE_NAMES: [&str; 4] = ["session1_all.arff", "session2_emotion.arff", "session3_av.arff", "session4_unlabeled.arff"];
pub const TEST_FILE_NAME: &str = "session5_test.arff";

/// Writes the corpus as ARFF files plus a ready-to-run `config.txt` into `dir`.
/// `extra_config` lines are appended to the generated configuration.
pub fn write_corpus(dir: &Path, corpus: &SyntheticCorpus, extra_config: &str) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut config = String::from("# synthetic cross-labeling corpus\n");
    for (i, ((rel, targets), name)) in corpus.files.iter().zip(FILE_NAMES).enumerate() {
        std::fs::write(dir.join(name), write_arff(rel))?;
        config.push_str(&format!("dataset.{}.file = {name}\ndataset.{}.num_targets = {targets}\n", i + 1, i + 1));
    }
    std::fs::write(dir.join(TEST_FILE_NAME), write_arff(&corpus.test))?;
    config.push_str(&format!("test.file = {TEST_FILE_NAME}\noutput.dir = out\n"));
    config.push_str(extra_config);
    std::fs::write(dir.join("config.txt"), config)
}
