//! Dataset directory layout and the split manifest. A dataset directory
//! holds `shapes/` and `skeletons/` with matching `<class>-<index>.png`
//! filenames; the class is the part before the last hyphen. The manifest is
//! plain text, one `<id>\t<train|val>` line per pair, sorted by id.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use skelex_core::data::DatasetSplit;
use skelex_core::Pair;

use crate::error::CliError;
use crate::png_io;

pub const SHAPES_DIR: &str = "shapes";
pub const SKELETONS_DIR: &str = "skeletons";

/// Class encoded in an id: substring before the last hyphen, or the whole
/// id when there is none.
pub fn class_of(id: &str) -> &str {
    match id.rfind('-') {
        Some(pos) => &id[..pos],
        None => id,
    }
}

/// Sorted PNG stems directly inside a directory.
fn png_stems(dir: &Path) -> Result<Vec<String>, CliError> {
    let mut stems = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let path = entry.path();
        if path.extension().map(|e| e == "png").unwrap_or(false) {
            match path.file_stem().and_then(|s| s.to_str()) {
                Some(stem) => stems.push(stem.to_string()),
                None => return Err(CliError::Data(format!("{}: non-UTF-8 filename", path.display()))),
            }
        }
    }
    stems.sort_unstable();
    Ok(stems)
}

/// Load every shape/skeleton pair of a dataset directory, sorted by id.
/// Shapes without a skeleton (and the reverse) are reported by id.
pub fn scan(dir: &Path) -> Result<Vec<Pair>, CliError> {
    let shapes_dir = dir.join(SHAPES_DIR);
    let skeletons_dir = dir.join(SKELETONS_DIR);
    let shapes = png_stems(&shapes_dir)?;
    let skeletons: BTreeSet<String> = png_stems(&skeletons_dir)?.into_iter().collect();

    let shape_set: BTreeSet<&String> = shapes.iter().collect();
    let orphans: Vec<&String> = skeletons.iter().filter(|s| !shape_set.contains(s)).collect();
    if !orphans.is_empty() {
        return Err(CliError::Data(format!(
            "skeletons without shapes: {}",
            join_ids(orphans.into_iter())
        )));
    }
    let missing: Vec<&String> = shapes.iter().filter(|s| !skeletons.contains(*s)).collect();
    if !missing.is_empty() {
        return Err(CliError::Data(format!(
            "shapes without skeletons: {}",
            join_ids(missing.into_iter())
        )));
    }

    let mut pairs = Vec::with_capacity(shapes.len());
    for id in shapes {
        let shape = png_io::load_mask(&shapes_dir.join(format!("{id}.png")))?;
        let skeleton = png_io::load_mask(&skeletons_dir.join(format!("{id}.png")))?;
        let class = class_of(&id).to_string();
        pairs.push(Pair::new(id, class, shape, skeleton).map_err(CliError::from)?);
    }
    Ok(pairs)
}

fn join_ids<'a, I: Iterator<Item = &'a String>>(ids: I) -> String {
    let all: Vec<&str> = ids.map(|s| s.as_str()).collect();
    if all.len() > 8 {
        format!("{} and {} more", all[..8].join(", "), all.len() - 8)
    } else {
        all.join(", ")
    }
}

/// Write pairs into a dataset directory, creating `shapes/` and
/// `skeletons/` as needed. Existing files for other ids are left alone.
pub fn write_pairs(dir: &Path, pairs: &[Pair]) -> Result<(), CliError> {
    let shapes_dir = dir.join(SHAPES_DIR);
    let skeletons_dir = dir.join(SKELETONS_DIR);
    fs::create_dir_all(&shapes_dir).map_err(|e| CliError::io(&shapes_dir, e))?;
    fs::create_dir_all(&skeletons_dir).map_err(|e| CliError::io(&skeletons_dir, e))?;
    for pair in pairs {
        png_io::save_mask(&shapes_dir.join(format!("{}.png", pair.id)), &pair.shape)?;
        png_io::save_mask(&skeletons_dir.join(format!("{}.png", pair.id)), &pair.skeleton)?;
    }
    Ok(())
}

/// Serialize a split as manifest text, sorted by id.
pub fn manifest_text(split: &DatasetSplit) -> String {
    let mut rows: Vec<(&str, &str)> = split
        .train
        .iter()
        .map(|id| (id.as_str(), "train"))
        .chain(split.validation.iter().map(|id| (id.as_str(), "val")))
        .collect();
    rows.sort_unstable();
    let mut out = String::new();
    for (id, tag) in rows {
        let _ = writeln!(out, "{id}\t{tag}");
    }
    out
}

pub fn write_manifest(path: &Path, split: &DatasetSplit) -> Result<(), CliError> {
    fs::write(path, manifest_text(split)).map_err(|e| CliError::io(path, e))
}

/// Read a manifest back into (train ids, val ids), both sorted.
pub fn read_manifest(path: &Path) -> Result<(Vec<String>, Vec<String>), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (id, tag) = line.split_once('\t').ok_or_else(|| {
            CliError::Data(format!("{}:{}: expected `<id>\\t<train|val>`", path.display(), lineno + 1))
        })?;
        match tag {
            "train" => train.push(id.to_string()),
            "val" => val.push(id.to_string()),
            other => {
                return Err(CliError::Data(format!(
                    "{}:{}: unknown subset `{other}`",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// Pairs whose ids appear in `ids`, in id order. Every id must exist.
pub fn select_pairs(pairs: &[Pair], ids: &[String]) -> Result<Vec<Pair>, CliError> {
    let by_id: std::collections::BTreeMap<&str, &Pair> =
        pairs.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        match by_id.get(id.as_str()) {
            Some(p) => out.push((*p).clone()),
            None => return Err(CliError::Data(format!("manifest id `{id}` not found in the dataset"))),
        }
    }
    Ok(out)
}

/// Drop pairs with an empty shape or skeleton, naming each dropped id on
/// stderr. Empty masks carry no trainable signal and an empty skeleton
/// makes the overlap term degenerate.
pub fn drop_empty(pairs: Vec<Pair>) -> Vec<Pair> {
    pairs
        .into_iter()
        .filter(|p| {
            let keep = p.shape.foreground() > 0 && p.skeleton.foreground() > 0;
            if !keep {
                eprintln!("warning: skipping `{}`: empty shape or skeleton", p.id);
            }
            keep
        })
        .collect()
}

/// Fabricate a pair with simple nonempty masks, for tests.
#[cfg(test)]
pub fn test_pair(id: &str, h: usize, w: usize) -> Pair {
    let mut shape = skelex_core::Mask::zeros(h, w);
    let mut skeleton = skelex_core::Mask::zeros(h, w);
    for y in h / 4..h * 3 / 4 {
        for x in w / 4..w * 3 / 4 {
            shape.set(y, x, 1.0);
        }
        skeleton.set(y, w / 2, 1.0);
    }
    Pair::new(id.to_string(), class_of(id).to_string(), shape, skeleton).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use skelex_core::Mask;

    #[test]
    fn scan_returns_sorted_pairs_with_classes() {
        let dir = tempfile::tempdir().unwrap();
        let pairs = vec![test_pair("rect-1", 8, 8), test_pair("ellipse-0", 8, 8), test_pair("rect-0", 8, 8)];
        write_pairs(dir.path(), &pairs).unwrap();
        let scanned = scan(dir.path()).unwrap();
        let ids: Vec<&str> = scanned.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["ellipse-0", "rect-0", "rect-1"]);
        assert_eq!(scanned[0].class, "ellipse");
        assert_eq!(scanned[2].class, "rect");
        assert_eq!(scanned[1].shape, pairs[2].shape);
    }

    #[test]
    fn scan_reports_unmatched_ids() {
        let dir = tempfile::tempdir().unwrap();
        write_pairs(dir.path(), &[test_pair("rect-0", 8, 8)]).unwrap();
        fs::remove_file(dir.path().join(SKELETONS_DIR).join("rect-0.png")).unwrap();
        let pair = test_pair("rect-1", 8, 8);
        png_io::save_mask(&dir.path().join(SKELETONS_DIR).join("rect-1.png"), &pair.skeleton).unwrap();
        let err = scan(dir.path()).unwrap_err();
        match err {
            CliError::Data(msg) => {
                assert!(msg.contains("rect-1"), "{msg}");
            }
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn manifest_round_trips_and_is_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.tsv");
        let split = DatasetSplit {
            train: vec!["b-1".into(), "a-0".into()],
            validation: vec!["a-1".into()],
            seed: 7,
        };
        write_manifest(&path, &split).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "a-0\ttrain\na-1\tval\nb-1\ttrain\n");
        let (train, val) = read_manifest(&path).unwrap();
        assert_eq!(train, ["a-0", "b-1"]);
        assert_eq!(val, ["a-1"]);
    }

    #[test]
    fn malformed_manifest_line_is_located() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.tsv");
        fs::write(&path, "a-0\ttrain\nbroken line\n").unwrap();
        let err = read_manifest(&path).unwrap_err();
        match err {
            CliError::Data(msg) => assert!(msg.contains(":2:"), "{msg}"),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn select_pairs_rejects_unknown_ids() {
        let pairs = vec![test_pair("rect-0", 8, 8)];
        assert!(select_pairs(&pairs, &["rect-0".into()]).is_ok());
        assert!(select_pairs(&pairs, &["rect-9".into()]).is_err());
    }

    #[test]
    fn class_parsing_keeps_hyphenated_class_names() {
        assert_eq!(class_of("rect-12"), "rect");
        assert_eq!(class_of("l-shape-3"), "l-shape");
        assert_eq!(class_of("rect-aug4"), "rect");
        assert_eq!(class_of("plain"), "plain");
    }

    #[test]
    fn drop_empty_filters_blank_masks() {
        let mut empty = test_pair("rect-0", 8, 8);
        empty.skeleton = Mask::zeros(8, 8);
        let kept = drop_empty(vec![empty, test_pair("rect-1", 8, 8)]);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, "rect-1");
    }
}
