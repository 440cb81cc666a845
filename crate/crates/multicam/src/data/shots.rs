//! Run-length conversion between per-frame annotations and shot lists.

use super::{DataError, EditAnnotation, Shot};

/// Run-length encode an annotation. Concatenating the shots reproduces
/// the annotation exactly.
pub fn shots_from_annotation(ann: &EditAnnotation) -> Result<Vec<Shot>, DataError> {
    if ann.is_empty() {
        return Err(DataError::EmptyAnnotation);
    }
    let sel = ann.selected();
    let mut shots = Vec::new();
    let mut start = 0usize;
    for i in 1..=sel.len() {
        if i == sel.len() || sel[i] != sel[start] {
            shots.push(Shot {
                start,
                end: i,
                track: usize::from(sel[start]),
            });
            start = i;
        }
    }
    Ok(shots)
}

/// Exact inverse of [`shots_from_annotation`]: shots must abut, cover
/// `[0, frames)`, and change track at every boundary.
pub fn annotation_from_shots(shots: &[Shot], frames: usize) -> Result<EditAnnotation, DataError> {
    if shots.is_empty() {
        return Err(DataError::BadShot {
            frame: 0,
            reason: "no shots".into(),
        });
    }
    if shots[0].start != 0 {
        return Err(DataError::BadShot {
            frame: shots[0].start,
            reason: format!("first shot starts at {}, expected 0", shots[0].start),
        });
    }
    let mut selected = Vec::with_capacity(frames);
    let mut prev: Option<&Shot> = None;
    for shot in shots {
        if shot.start >= shot.end {
            return Err(DataError::BadShot {
                frame: shot.start,
                reason: format!("empty shot [{}, {})", shot.start, shot.end),
            });
        }
        if let Some(p) = prev {
            if shot.start != p.end {
                return Err(DataError::BadShot {
                    frame: p.end,
                    reason: format!(
                        "gap or overlap: shot ends at {} but next starts at {}",
                        p.end, shot.start
                    ),
                });
            }
            if shot.track == p.track {
                return Err(DataError::BadShot {
                    frame: shot.start,
                    reason: format!("adjacent shots share track {}", shot.track),
                });
            }
        }
        let track = u16::try_from(shot.track).map_err(|_| DataError::BadShot {
            frame: shot.start,
            reason: format!("track {} exceeds u16", shot.track),
        })?;
        selected.extend(std::iter::repeat_n(track, shot.frames()));
        prev = Some(shot);
    }
    if selected.len() != frames {
        return Err(DataError::BadShot {
            frame: selected.len(),
            reason: format!("shots cover {} frames, expected {frames}", selected.len()),
        });
    }
    let tracks = shots.iter().map(|s| s.track).max().unwrap_or(0) + 1;
    EditAnnotation::new(selected, tracks)
}
