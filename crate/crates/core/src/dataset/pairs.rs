use super::{DatasetError, DemonstrationEpisode, EpisodeFrame, TrainingPair};

/// Action chunk length: one second at 30 Hz.
pub const DEFAULT_CHUNK: usize = 30;
pub const DEFAULT_STRIDE: usize = 1;

/// Slides a window over `episode`: pair `i` takes the state at frame
/// `i * stride` and the `k` following frames as its action chunk. Windows
/// that would run past the last frame are dropped.
pub fn extract_pairs(
    episode: &DemonstrationEpisode,
    k: usize,
    stride: usize,
) -> Result<Vec<TrainingPair>, DatasetError> {
    extract_pairs_with(episode, k, stride, |f| f.state.to_vector().to_vec())
}

/// [`extract_pairs`] with a custom proprio input per frame; the action chunk
/// always stays in the unified layout.
pub fn extract_pairs_with<F>(
    episode: &DemonstrationEpisode,
    k: usize,
    stride: usize,
    proprio: F,
) -> Result<Vec<TrainingPair>, DatasetError>
where
    F: Fn(&EpisodeFrame) -> Vec<f64>,
{
    if k == 0 || stride == 0 {
        return Err(DatasetError::InvalidArgument(format!(
            "chunk length and stride must be positive (k={k}, stride={stride})"
        )));
    }
    let n = episode.len();
    if n < k + 1 {
        return Err(DatasetError::EpisodeTooShort {
            frames: n,
            needed: k + 1,
        });
    }
    let count = (n - 1 - k) / stride + 1;
    Ok((0..count)
        .map(|i| {
            let s = i * stride;
            let f = &episode.frames[s];
            TrainingPair {
                episode_id: episode.id.clone(),
                start: s,
                embodiment_tag: episode.embodiment_tag.clone(),
                state: proprio(f),
                feature: f.feature.clone(),
                action_chunk: episode.frames[s + 1..=s + k]
                    .iter()
                    .map(|a| a.state.to_vector())
                    .collect(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{EpisodeKind, EpisodeMetadata};
    use crate::geometry::{Pose, RotationMatrix, Vec3};
    use crate::unified::UnifiedState;

    /// Frame `i` carries `i` in the left wrist x and in its feature.
    fn labeled(n: usize) -> DemonstrationEpisode {
        let frames = (0..n)
            .map(|i| {
                let w = Pose::from_translation(Vec3::new(i as f64, 0.0, 0.0));
                EpisodeFrame {
                    t: i as f64 / 30.0,
                    state: UnifiedState::from_poses(&RotationMatrix::identity(), &w, &w, [Vec3::zeros(); 10]),
                    feature: vec![i as f64],
                    joints: Vec::new(),
                }
            })
            .collect();
        DemonstrationEpisode {
            id: "lab".into(),
            embodiment_tag: "t".into(),
            kind: EpisodeKind::Human,
            instruction: String::new(),
            frames,
            metadata: EpisodeMetadata {
                device: String::new(),
                scene: String::new(),
                duration_s: 0.0,
                retimed: true,
                alpha_applied: 4.0,
            },
        }
    }

    #[test]
    fn pair_counts() {
        assert_eq!(extract_pairs(&labeled(4), 3, 1).unwrap().len(), 1);
        assert_eq!(extract_pairs(&labeled(10), 3, 1).unwrap().len(), 7);
        assert!(matches!(
            extract_pairs(&labeled(3), 3, 1),
            Err(DatasetError::EpisodeTooShort { frames: 3, needed: 4 })
        ));
        for n in 4..40 {
            for k in 1..4 {
                for stride in 1..5 {
                    let pairs = extract_pairs(&labeled(n), k, stride).unwrap();
                    assert_eq!(pairs.len(), (n - 1 - k) / stride + 1);
                }
            }
        }
    }

    #[test]
    fn pair_contents_follow_index_arithmetic() {
        let ep = labeled(23);
        let (k, stride) = (4, 3);
        for (i, p) in extract_pairs(&ep, k, stride).unwrap().iter().enumerate() {
            assert_eq!(p.start, i * stride);
            assert_eq!(p.state[18], (i * stride) as f64);
            assert_eq!(p.feature, vec![(i * stride) as f64]);
            assert_eq!(p.action_chunk.len(), k);
            for (j, a) in p.action_chunk.iter().enumerate() {
                assert_eq!(a[18], (i * stride + j + 1) as f64);
            }
            // never reaches past the episode
            assert!(p.action_chunk.last().unwrap()[18] < 23.0);
        }
    }
}
