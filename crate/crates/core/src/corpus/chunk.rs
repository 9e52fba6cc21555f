use std::ops::Range;

use super::Corpus;

/// Splits `0..len` into consecutive ranges of at most `chunk_len`.
pub fn chunk_ranges(len: usize, chunk_len: usize) -> Vec<Range<usize>> {
    assert!(chunk_len >= 1, "chunk_len must be positive");
    (0..len)
        .step_by(chunk_len)
        .map(|s| s..(s + chunk_len).min(len))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneChunks {
    /// Global scene index in corpus order.
    pub scene: usize,
    /// Token ranges into the flattened scene stream.
    pub chunks: Vec<Range<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub scenes: Vec<SceneChunks>,
}

/// Groups scenes, in corpus order, into batches of `scenes_per_batch` and
/// splits each scene's token stream into chunks of at most `chunk_len`.
/// Chunks never cross a scene boundary.
pub fn chunk_scenes(corpus: &Corpus, chunk_len: usize, scenes_per_batch: usize) -> Vec<Batch> {
    assert!(scenes_per_batch >= 1, "scenes_per_batch must be positive");
    let scenes: Vec<SceneChunks> = corpus
        .scenes()
        .enumerate()
        .map(|(i, s)| SceneChunks {
            scene: i,
            chunks: chunk_ranges(s.num_tokens(), chunk_len),
        })
        .collect();
    scenes
        .chunks(scenes_per_batch)
        .map(|c| Batch { scenes: c.to_vec() })
        .collect()
}
