use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::representation::FeatureSequence;

fn class_counts(seq: &FeatureSequence, num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; num_classes];
    for a in &seq.annotations {
        counts[a.class_id] += 1;
    }
    counts
}

/// Picks whole training videos until every class has exactly `shots`
/// annotated instances.
///
/// Videos are visited in a seeded random order and kept only if they do not
/// push any class past its quota. Classes still short after that pass are
/// filled from the remaining videos with the surplus annotations removed.
pub fn sample_few_shot(
    videos: &[FeatureSequence],
    shots: usize,
    num_classes: usize,
    rng: &mut Rng,
) -> Result<Vec<FeatureSequence>> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be at least 1".into()));
    }
    let mut available = vec![0; num_classes];
    for v in videos {
        for a in &v.annotations {
            if a.class_id >= num_classes {
                return Err(Error::UnknownClass {
                    class_id: a.class_id,
                    num_classes,
                });
            }
            available[a.class_id] += 1;
        }
    }
    if let Some((c, &n)) = available.iter().enumerate().find(|(_, &n)| n < shots) {
        return Err(Error::NotEnoughShots {
            class_id: c,
            available: n,
            required: shots,
        });
    }

    let mut order: Vec<usize> = (0..videos.len()).collect();
    rng.shuffle(&mut order);
    let mut have = vec![0; num_classes];
    let mut taken = vec![false; videos.len()];
    let mut picked = Vec::new();
    for &i in &order {
        let counts = class_counts(&videos[i], num_classes);
        let useful = counts.iter().zip(&have).any(|(&n, &h)| n > 0 && h < shots);
        let fits = counts.iter().zip(&have).all(|(&n, &h)| h + n <= shots);
        if useful && fits {
            have.iter_mut().zip(&counts).for_each(|(h, n)| *h += n);
            taken[i] = true;
            picked.push(videos[i].clone());
        }
    }

    for &i in &order {
        if have.iter().all(|&h| h == shots) {
            break;
        }
        if taken[i] {
            continue;
        }
        let counts = class_counts(&videos[i], num_classes);
        if !counts.iter().zip(&have).any(|(&n, &h)| n > 0 && h < shots) {
            continue;
        }
        let mut seq = videos[i].clone();
        seq.annotations.retain(|a| {
            let keep = have[a.class_id] < shots;
            if keep {
                have[a.class_id] += 1;
            }
            keep
        });
        taken[i] = true;
        picked.push(seq);
    }
    Ok(picked)
}
