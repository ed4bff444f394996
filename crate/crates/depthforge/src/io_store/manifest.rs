use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use super::IoError;
use crate::camrig::NUM_VIEWS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// One manifest row: a single view of a single object.
#[derive(Debug, Clone)]
pub struct ManifestRecord {
    pub object_id: String,
    pub class_id: usize,
    pub class_name: String,
    pub split: Split,
    pub view_id: u8,
    pub path: PathBuf,
}

/// One object with its full set of 20 per-view depth-map paths,
/// indexed by view id.
#[derive(Debug, Clone)]
pub struct ManifestObject {
    pub object_id: String,
    pub class_id: usize,
    pub class_name: String,
    pub split: Split,
    pub view_paths: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub objects: Vec<ManifestObject>,
    pub n_classes: usize,
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestObject> {
        self.objects.iter().filter(move |o| o.split == split)
    }

    pub fn class_names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.n_classes];
        for o in &self.objects {
            names[o.class_id] = o.class_name.clone();
        }
        names
    }
}

const HEADER: [&str; 6] = ["object_id", "class_id", "class_name", "split", "view_id", "path"];

/// Parses and validates manifest CSV: every object must carry views
/// 0..20 exactly once, and class ids must be dense from 0.
pub fn parse_manifest<R: Read>(reader: R) -> Result<Manifest, IoError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    {
        let headers = csv
            .headers()
            .map_err(|e| IoError::MalformedRecord { line: 1, reason: e.to_string() })?;
        let got: Vec<&str> = headers.iter().collect();
        if got != HEADER {
            return Err(IoError::MalformedRecord {
                line: 1,
                reason: format!("expected header {HEADER:?}, got {got:?}"),
            });
        }
    }

    let mut records: Vec<ManifestRecord> = Vec::new();
    for (i, row) in csv.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| IoError::MalformedRecord { line, reason: e.to_string() })?;
        if row.len() != 6 {
            return Err(IoError::MalformedRecord {
                line,
                reason: format!("expected 6 fields, got {}", row.len()),
            });
        }
        let class_id: usize = row[1].parse().map_err(|_| IoError::MalformedRecord {
            line,
            reason: format!("bad class_id `{}`", &row[1]),
        })?;
        let split = Split::parse(&row[3]).ok_or_else(|| IoError::MalformedRecord {
            line,
            reason: format!("bad split `{}` (train|val|test)", &row[3]),
        })?;
        let view_id: u8 = row[4].parse().map_err(|_| IoError::MalformedRecord {
            line,
            reason: format!("bad view_id `{}`", &row[4]),
        })?;
        if view_id as usize >= NUM_VIEWS {
            return Err(IoError::MalformedRecord {
                line,
                reason: format!("view_id {view_id} outside 0..{NUM_VIEWS}"),
            });
        }
        if row[0].is_empty() || row[5].is_empty() {
            return Err(IoError::MalformedRecord {
                line,
                reason: "empty object_id or path".into(),
            });
        }
        records.push(ManifestRecord {
            object_id: row[0].to_string(),
            class_id,
            class_name: row[2].to_string(),
            split,
            view_id,
            path: PathBuf::from(&row[5]),
        });
    }
    group_records(records)
}

fn group_records(records: Vec<ManifestRecord>) -> Result<Manifest, IoError> {
    let mut grouped: BTreeMap<String, Vec<ManifestRecord>> = BTreeMap::new();
    for r in records {
        grouped.entry(r.object_id.clone()).or_default().push(r);
    }
    let mut objects = Vec::with_capacity(grouped.len());
    let mut max_class = 0usize;
    let mut class_present: Vec<bool> = Vec::new();
    for (object_id, rows) in grouped {
        let mut paths: Vec<Option<PathBuf>> = vec![None; NUM_VIEWS];
        let class_id = rows[0].class_id;
        let class_name = rows[0].class_name.clone();
        let split = rows[0].split;
        for r in &rows {
            if r.class_id != class_id || r.split != split {
                return Err(IoError::MalformedRecord {
                    line: 0,
                    reason: format!("object `{object_id}` has inconsistent class or split"),
                });
            }
            let slot = &mut paths[r.view_id as usize];
            if slot.is_some() {
                return Err(IoError::DuplicateView {
                    object_id,
                    view_id: r.view_id,
                });
            }
            *slot = Some(r.path.clone());
        }
        let mut view_paths = Vec::with_capacity(NUM_VIEWS);
        for (v, p) in paths.into_iter().enumerate() {
            match p {
                Some(p) => view_paths.push(p),
                None => {
                    return Err(IoError::MissingView {
                        object_id,
                        view_id: v as u8,
                    })
                }
            }
        }
        max_class = max_class.max(class_id);
        if class_present.len() <= max_class {
            class_present.resize(max_class + 1, false);
        }
        class_present[class_id] = true;
        objects.push(ManifestObject {
            object_id,
            class_id,
            class_name,
            split,
            view_paths,
        });
    }
    if objects.is_empty() {
        return Err(IoError::EmptyGeometry);
    }
    if let Some(missing) = class_present.iter().position(|p| !p) {
        return Err(IoError::NonDenseClassIds { missing });
    }
    Ok(Manifest {
        objects,
        n_classes: class_present.len(),
    })
}

pub fn read_manifest(path: &Path) -> Result<Manifest, IoError> {
    parse_manifest(std::fs::File::open(path)?)
}

pub fn write_manifest(records: &[ManifestRecord], path: &Path) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record(HEADER).map_err(csv_io)?;
    for r in records {
        write_row(&mut w, r)?;
    }
    w.flush()?;
    Ok(())
}

/// Appends rows, creating the file with a header when absent.
pub fn append_manifest_rows(records: &[ManifestRecord], path: &Path) -> Result<(), IoError> {
    let fresh = !path.exists();
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(HEADER).map_err(csv_io)?;
    }
    for r in records {
        write_row(&mut w, r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_row<W: std::io::Write>(w: &mut csv::Writer<W>, r: &ManifestRecord) -> Result<(), IoError> {
    w.write_record([
        r.object_id.as_str(),
        &r.class_id.to_string(),
        r.class_name.as_str(),
        r.split.as_str(),
        &r.view_id.to_string(),
        &r.path.display().to_string(),
    ])
    .map_err(csv_io)
}

fn csv_io(e: csv::Error) -> IoError {
    IoError::MalformedRecord {
        line: 0,
        reason: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(object: &str, class_id: usize, views: std::ops::Range<u8>) -> String {
        let mut s = String::new();
        for v in views {
            s.push_str(&format!(
                "{object},{class_id},chair,train,{v},maps/{object}_{v}.dfdm\n"
            ));
        }
        s
    }

    fn with_header(body: &str) -> String {
        format!("object_id,class_id,class_name,split,view_id,path\n{body}")
    }

    #[test]
    fn full_manifest_parses_and_groups() {
        let text = with_header(&(rows("a", 0, 0..20) + &rows("b", 1, 0..20)));
        let m = parse_manifest(text.as_bytes()).unwrap();
        assert_eq!(m.objects.len(), 2);
        assert_eq!(m.n_classes, 2);
        assert_eq!(m.objects[0].view_paths.len(), 20);
        assert_eq!(m.class_names(), vec!["chair".to_string(), "chair".to_string()]);
    }

    #[test]
    fn duplicate_views_are_rejected() {
        let mut body = rows("a", 0, 0..20);
        body.push_str("a,0,chair,train,7,maps/dup.dfdm\n");
        let err = parse_manifest(with_header(&body).as_bytes()).unwrap_err();
        assert!(matches!(err, IoError::DuplicateView { view_id: 7, .. }), "{err}");
    }

    #[test]
    fn missing_views_are_rejected() {
        let err = parse_manifest(with_header(&rows("a", 0, 0..19)).as_bytes()).unwrap_err();
        assert!(matches!(err, IoError::MissingView { view_id: 19, .. }), "{err}");
    }

    #[test]
    fn sparse_class_ids_are_rejected() {
        let text = with_header(&(rows("a", 0, 0..20) + &rows("b", 2, 0..20)));
        let err = parse_manifest(text.as_bytes()).unwrap_err();
        assert!(matches!(err, IoError::NonDenseClassIds { missing: 1 }), "{err}");
    }

    #[test]
    fn bad_rows_carry_line_numbers() {
        let text = with_header("a,zero,chair,train,0,p.dfdm\n");
        let err = parse_manifest(text.as_bytes()).unwrap_err();
        assert!(matches!(err, IoError::MalformedRecord { line: 2, .. }), "{err}");
        let text = with_header("a,0,chair,dev,0,p.dfdm\n");
        assert!(parse_manifest(text.as_bytes()).is_err());
        let text = with_header("a,0,chair,train,21,p.dfdm\n");
        assert!(parse_manifest(text.as_bytes()).is_err());
    }

    #[test]
    fn round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let records: Vec<ManifestRecord> = (0..20)
            .map(|v| ManifestRecord {
                object_id: "obj".into(),
                class_id: 0,
                class_name: "lamp".into(),
                split: Split::Test,
                view_id: v,
                path: format!("maps/obj_{v}.dfdm").into(),
            })
            .collect();
        write_manifest(&records, &path).unwrap();
        let m = read_manifest(&path).unwrap();
        assert_eq!(m.objects.len(), 1);
        assert_eq!(m.objects[0].split, Split::Test);

        // Appending a second object preserves the first.
        let more: Vec<ManifestRecord> = (0..20)
            .map(|v| ManifestRecord {
                object_id: "obj2".into(),
                class_id: 0,
                class_name: "lamp".into(),
                split: Split::Train,
                view_id: v,
                path: format!("maps/obj2_{v}.dfdm").into(),
            })
            .collect();
        append_manifest_rows(&more, &path).unwrap();
        let m = read_manifest(&path).unwrap();
        assert_eq!(m.objects.len(), 2);
    }
}
