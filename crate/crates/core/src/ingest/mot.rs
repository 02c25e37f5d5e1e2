//! MOT-Challenge text formats: `seqinfo.ini`, `gt.txt`, `det.txt`, and tracker result files.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{read_text, IngestError, SequenceMeta};
use crate::types::{BBox, Descriptor, Detection};

/// A malformed line. `line` is 1-based; 0 refers to the file as a whole.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ParseError {}

/// One ground-truth row: `frame,id,x,y,w,h,considered,class,visibility`.
#[derive(Debug, Clone, PartialEq)]
pub struct GtRecord {
    pub frame: u32,
    pub id: i64,
    pub bbox: BBox,
    /// Column 7; entries marked 0 are ignored by evaluation.
    pub considered: bool,
    pub class_id: i32,
    pub visibility: f64,
}

/// One tracker output row: `frame,id,x,y,w,h,conf,-1,-1,-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub frame: u32,
    pub id: i64,
    pub bbox: BBox,
    pub confidence: f64,
}

/// A parsed MOT sequence directory.
#[derive(Debug, Clone, PartialEq)]
pub struct MotSequence {
    pub root: PathBuf,
    pub meta: SequenceMeta,
    pub gt: Option<Vec<GtRecord>>,
    pub detections: Vec<Detection>,
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

struct Fields<'a> {
    line: usize,
    parts: Vec<&'a str>,
}

impl<'a> Fields<'a> {
    fn split(line: usize, text: &'a str, min: usize) -> Result<Self, ParseError> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        if parts.len() < min {
            return Err(ParseError::new(
                line,
                format!("expected at least {min} comma-separated fields, found {}", parts.len()),
            ));
        }
        Ok(Self { line, parts })
    }

    fn len(&self) -> usize {
        self.parts.len()
    }

    fn float(&self, i: usize, name: &str) -> Result<f64, ParseError> {
        let raw = self.parts[i];
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(ParseError::new(self.line, format!("field {} ({name}): not a finite number: {raw:?}", i + 1))),
        }
    }

    fn float_or(&self, i: usize, name: &str, default: f64) -> Result<f64, ParseError> {
        if i < self.parts.len() {
            self.float(i, name)
        } else {
            Ok(default)
        }
    }

    fn integer(&self, i: usize, name: &str) -> Result<i64, ParseError> {
        let v = self.float(i, name)?;
        if v.fract() != 0.0 || v.abs() > 9.0e15 {
            return Err(ParseError::new(self.line, format!("field {} ({name}): not an integer: {v}", i + 1)));
        }
        Ok(v as i64)
    }

    fn frame(&self, limit: Option<u32>) -> Result<u32, ParseError> {
        let f = self.integer(0, "frame")?;
        if f < 1 || f > i64::from(u32::MAX) {
            return Err(ParseError::new(self.line, format!("frame index {f} is not 1-based")));
        }
        if let Some(n) = limit {
            if f > i64::from(n) {
                return Err(ParseError::new(self.line, format!("frame {f} beyond sequence length {n}")));
            }
        }
        Ok(f as u32)
    }

    fn bbox(&self) -> Result<BBox, ParseError> {
        let b = BBox::new(
            self.float(2, "x")?,
            self.float(3, "y")?,
            self.float(4, "w")?,
            self.float(5, "h")?,
        );
        if !b.is_valid() {
            return Err(ParseError::new(self.line, format!("box {b} has a non-positive extent")));
        }
        Ok(b)
    }
}

/// Parses `seqinfo.ini`. Requires `name`, `imWidth`, `imHeight`, `frameRate`, `seqLength`.
pub fn parse_seqinfo(text: &str) -> Result<SequenceMeta, ParseError> {
    let (mut name, mut width, mut height, mut rate, mut length) = (None, None, None, None, None);
    for (n, line) in lines(text) {
        if line.starts_with('[') || line.starts_with(';') || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ParseError::new(n, format!("expected key=value, found {line:?}")));
        };
        let value = value.trim();
        let positive_int = |v: &str| -> Result<u32, ParseError> {
            match v.parse::<u32>() {
                Ok(x) if x > 0 => Ok(x),
                _ => Err(ParseError::new(n, format!("{}: expected a positive integer, found {v:?}", key.trim()))),
            }
        };
        match key.trim() {
            "name" => name = Some(value.to_string()),
            "imWidth" => width = Some(positive_int(value)?),
            "imHeight" => height = Some(positive_int(value)?),
            "seqLength" => length = Some(positive_int(value)?),
            "frameRate" => match value.parse::<f64>() {
                Ok(r) if r > 0.0 && r.is_finite() => rate = Some(r),
                _ => return Err(ParseError::new(n, format!("frameRate: expected a positive number, found {value:?}"))),
            },
            _ => {}
        }
    }
    let missing = |k: &str| ParseError::new(0, format!("missing key {k}"));
    Ok(SequenceMeta {
        name: name.filter(|s| !s.is_empty()).ok_or_else(|| missing("name"))?,
        width: width.ok_or_else(|| missing("imWidth"))?,
        height: height.ok_or_else(|| missing("imHeight"))?,
        frame_rate: rate.ok_or_else(|| missing("frameRate"))?,
        num_frames: length.ok_or_else(|| missing("seqLength"))?,
    })
}

pub fn write_seqinfo(meta: &SequenceMeta) -> String {
    format!(
        "[Sequence]\nname={}\nimDir=img1\nframeRate={}\nseqLength={}\nimWidth={}\nimHeight={}\nimExt=.jpg\n",
        meta.name, meta.frame_rate, meta.num_frames, meta.width, meta.height
    )
}

/// Parses a ground-truth file. Missing trailing columns default to
/// considered = 1, class = 1, visibility = 1.
pub fn parse_gt(text: &str) -> Result<Vec<GtRecord>, ParseError> {
    parse_gt_limited(text, None)
}

pub(crate) fn parse_gt_limited(text: &str, limit: Option<u32>) -> Result<Vec<GtRecord>, ParseError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in lines(text) {
        let f = Fields::split(n, line, 6)?;
        let frame = f.frame(limit)?;
        let id = f.integer(1, "id")?;
        if !seen.insert((frame, id)) {
            return Err(ParseError::new(n, format!("duplicate entry for frame {frame}, id {id}")));
        }
        let considered = f.float_or(6, "considered", 1.0)? != 0.0;
        let class_id = if f.len() > 7 { f.integer(7, "class")? as i32 } else { 1 };
        out.push(GtRecord {
            frame,
            id,
            bbox: f.bbox()?,
            considered,
            class_id,
            visibility: f.float_or(8, "visibility", 1.0)?,
        });
    }
    Ok(out)
}

/// Formats ground truth with shortest round-trip float formatting.
pub fn write_gt(records: &[GtRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.frame,
            r.id,
            r.bbox.x,
            r.bbox.y,
            r.bbox.w,
            r.bbox.h,
            u8::from(r.considered),
            r.class_id,
            r.visibility
        );
    }
    s
}

/// Parses a detection file. The id column is ignored and confidences are
/// clamped into `[0, 1]`. Columns after the tenth, when present, hold an
/// appearance descriptor, stored L2-normalized.
pub fn parse_det(text: &str) -> Result<Vec<Detection>, ParseError> {
    parse_det_limited(text, None)
}

pub(crate) fn parse_det_limited(text: &str, limit: Option<u32>) -> Result<Vec<Detection>, ParseError> {
    let mut out = Vec::new();
    let mut last_frame = 0;
    for (n, line) in lines(text) {
        let f = Fields::split(n, line, 7)?;
        let frame = f.frame(limit)?;
        if frame < last_frame {
            return Err(ParseError::new(n, format!("frame {frame} after frame {last_frame}: detections must be ordered by frame")));
        }
        last_frame = frame;
        let confidence = f.float(6, "confidence")?.clamp(0.0, 1.0);
        let mut det = Detection::new(frame, f.bbox()?, confidence);
        if f.len() > 10 {
            let raw = (10..f.len())
                .map(|i| f.float(i, "descriptor"))
                .collect::<Result<Vec<f64>, _>>()?;
            det.descriptor = Some(Descriptor::normalized(raw));
        }
        out.push(det);
    }
    Ok(out)
}

/// Formats detections in `det.txt` layout, appending descriptors when present.
pub fn write_det(detections: &[Detection]) -> String {
    let mut s = String::new();
    for d in detections {
        let b = &d.bbox;
        let _ = write!(s, "{},-1,{},{},{},{},{},-1,-1,-1", d.frame, b.x, b.y, b.w, b.h, d.confidence);
        if let Some(desc) = &d.descriptor {
            for v in desc.values() {
                let _ = write!(s, ",{v}");
            }
        }
        s.push('\n');
    }
    s
}

pub fn parse_results(text: &str) -> Result<Vec<ResultRecord>, ParseError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in lines(text) {
        let f = Fields::split(n, line, 6)?;
        let frame = f.frame(None)?;
        let id = f.integer(1, "id")?;
        if !seen.insert((frame, id)) {
            return Err(ParseError::new(n, format!("duplicate entry for frame {frame}, id {id}")));
        }
        out.push(ResultRecord {
            frame,
            id,
            bbox: f.bbox()?,
            confidence: f.float_or(6, "confidence", 1.0)?,
        });
    }
    Ok(out)
}

/// Appends one result line with two-decimal fixed-point coordinates.
pub fn write_result_line(out: &mut String, r: &ResultRecord) {
    let b = &r.bbox;
    let _ = writeln!(
        out,
        "{},{},{:.2},{:.2},{:.2},{:.2},{:.2},-1,-1,-1",
        r.frame, r.id, b.x, b.y, b.w, b.h, r.confidence
    );
}

pub fn write_results(records: &[ResultRecord]) -> String {
    let mut s = String::new();
    records.iter().for_each(|r| write_result_line(&mut s, r));
    s
}

/// Reads `seqinfo.ini`, `det/det.txt` (or `det_override`) and, when present, `gt/gt.txt`.
pub fn parse_mot_dir(root: &Path) -> Result<MotSequence, IngestError> {
    parse_mot_dir_with(root, None)
}

pub fn parse_mot_dir_with(root: &Path, det_override: Option<&Path>) -> Result<MotSequence, IngestError> {
    let seqinfo = root.join("seqinfo.ini");
    let meta = parse_seqinfo(&read_text(&seqinfo)?).map_err(|e| IngestError::parse(&seqinfo, e))?;
    let det_path = det_override.map_or_else(|| root.join("det").join("det.txt"), Path::to_path_buf);
    let detections =
        parse_det_limited(&read_text(&det_path)?, Some(meta.num_frames)).map_err(|e| IngestError::parse(&det_path, e))?;
    let gt_path = root.join("gt").join("gt.txt");
    let gt = if gt_path.exists() {
        Some(parse_gt_limited(&read_text(&gt_path)?, Some(meta.num_frames)).map_err(|e| IngestError::parse(&gt_path, e))?)
    } else {
        None
    };
    Ok(MotSequence {
        root: root.to_path_buf(),
        meta,
        gt,
        detections,
    })
}

/// Reads only the ground truth and metadata of a sequence directory.
pub(crate) fn parse_gt_dir(root: &Path) -> Result<(SequenceMeta, Vec<GtRecord>), IngestError> {
    let seqinfo = root.join("seqinfo.ini");
    let meta = parse_seqinfo(&read_text(&seqinfo)?).map_err(|e| IngestError::parse(&seqinfo, e))?;
    let gt_path = root.join("gt").join("gt.txt");
    let gt = parse_gt_limited(&read_text(&gt_path)?, Some(meta.num_frames)).map_err(|e| IngestError::parse(&gt_path, e))?;
    Ok((meta, gt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::fs;

    const SEQINFO: &str = "[Sequence]\nname=MOT17-02-FRCNN\nimDir=img1\nframeRate=30\nseqLength=2\nimWidth=1920\nimHeight=1080\nimExt=.jpg\n";

    #[test]
    fn gt_line_columns() {
        let r = parse_gt("1,1,912.0,484.0,97.0,109.0,0,7,1\n").unwrap();
        assert_eq!(r.len(), 1);
        let r = &r[0];
        assert_eq!((r.frame, r.id), (1, 1));
        assert_eq!(r.bbox, BBox::new(912.0, 484.0, 97.0, 109.0));
        assert!(!r.considered);
        assert_eq!(r.class_id, 7);
        assert_eq!(r.visibility, 1.0);
    }

    #[test]
    fn det_ignores_id_and_reads_confidence() {
        let d = parse_det("3,-1,10,20,30,40,0.87,-1,-1,-1\n").unwrap();
        assert_eq!(d[0].frame, 3);
        assert_eq!(d[0].confidence, 0.87);
        assert!(d[0].descriptor.is_none());
        let d = parse_det("3,5,10,20,30,40,1.7\n").unwrap();
        assert_eq!(d[0].confidence, 1.0);
    }

    #[test]
    fn det_descriptor_columns() {
        let d = parse_det("1,-1,0,0,5,5,0.9,-1,-1,-1,3,4\n").unwrap();
        let desc = d[0].descriptor.as_ref().unwrap();
        assert_eq!(desc.values(), &[0.6, 0.8]);
    }

    #[test]
    fn malformed_lines_report_location() {
        let e = parse_gt("1,1,0,0,5,5,1,1,1\n\n2,1,0,zz,5,5\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.message.contains("y"));
        let e = parse_gt("1,1,0,0,0,5\n").unwrap_err();
        assert!(e.message.contains("non-positive"));
        let e = parse_gt("0,1,0,0,1,5\n").unwrap_err();
        assert!(e.message.contains("1-based"));
        let e = parse_gt("1,1,0,0,1\n").unwrap_err();
        assert!(e.message.contains("at least 6"));
        let e = parse_gt("1.5,1,0,0,1,5\n").unwrap_err();
        assert!(e.message.contains("integer"));
        let e = parse_det("2,-1,0,0,1,1,0.5\n1,-1,0,0,1,1,0.5\n").unwrap_err();
        assert_eq!(e.line, 2);
        let e = parse_gt("1,1,0,0,1,5\n1,1,3,3,1,5\n").unwrap_err();
        assert!(e.message.contains("duplicate"));
        let e = parse_det("1,-1,0,0,1,1,nan\n").unwrap_err();
        assert!(e.message.contains("confidence"));
    }

    #[test]
    fn seqinfo_fields_and_errors() {
        let m = parse_seqinfo(SEQINFO).unwrap();
        assert_eq!(m.name, "MOT17-02-FRCNN");
        assert_eq!((m.width, m.height, m.num_frames), (1920, 1080, 2));
        assert_eq!(m.frame_rate, 30.0);
        assert_eq!(parse_seqinfo(&write_seqinfo(&m)).unwrap(), m);
        let e = parse_seqinfo("[Sequence]\nname=x\n").unwrap_err();
        assert!(e.message.contains("missing key"));
        let e = parse_seqinfo("[Sequence]\nimWidth=-3\n").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn two_frame_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        fs::write(root.join("seqinfo.ini"), SEQINFO).unwrap();
        fs::create_dir_all(root.join("gt")).unwrap();
        fs::create_dir_all(root.join("det")).unwrap();
        fs::write(root.join("gt/gt.txt"), "1,1,10,20,30,60,1,1,0.8\n2,1,12,20,30,60,1,1,0.9\n1,2,100,50,20,40,1,1,1\n").unwrap();
        fs::write(root.join("det/det.txt"), "1,-1,11,21,29,59,0.95,-1,-1,-1\n2,-1,13,20,30,61,0.4,-1,-1,-1\n").unwrap();
        let seq = parse_mot_dir(root).unwrap();
        assert_eq!(seq.meta.num_frames, 2);
        let gt = seq.gt.unwrap();
        assert_eq!(gt.len(), 3);
        assert_eq!(gt[1], GtRecord { frame: 2, id: 1, bbox: BBox::new(12.0, 20.0, 30.0, 60.0), considered: true, class_id: 1, visibility: 0.9 });
        assert_eq!(seq.detections.len(), 2);
        assert_eq!(seq.detections[1].bbox, BBox::new(13.0, 20.0, 30.0, 61.0));
        assert_eq!(seq.detections[1].confidence, 0.4);

        fs::write(root.join("det/det.txt"), "3,-1,11,21,29,59,0.95\n").unwrap();
        let e = parse_mot_dir(root).unwrap_err();
        assert!(matches!(e, IngestError::Parse { line: 1, .. }), "{e}");
        fs::remove_file(root.join("det/det.txt")).unwrap();
        assert!(matches!(parse_mot_dir(root), Err(IngestError::MissingFile(_))));
    }

    #[test]
    fn result_lines_use_two_decimals() {
        let r = ResultRecord { frame: 4, id: 2, bbox: BBox::new(1.234, 5.0, 10.005, 20.5), confidence: 0.9 };
        assert_eq!(write_results(&[r]), "4,2,1.23,5.00,10.01,20.50,0.90,-1,-1,-1\n");
    }

    fn gt_record() -> impl Strategy<Value = GtRecord> {
        (1u32..500, -5i64..500, -1e3..1e3f64, -1e3..1e3f64, 0.01..500.0f64, 0.01..500.0f64, any::<bool>(), 1i32..13, 0.0..1.0f64)
            .prop_map(|(frame, id, x, y, w, h, considered, class_id, visibility)| GtRecord {
                frame, id, bbox: BBox::new(x, y, w, h), considered, class_id, visibility,
            })
    }

    proptest! {
        #[test]
        fn gt_parse_write_parse(records in proptest::collection::vec(gt_record(), 0..20)) {
            let mut seen = HashSet::new();
            let records: Vec<GtRecord> = records.into_iter().filter(|r| seen.insert((r.frame, r.id))).collect();
            let once = parse_gt(&write_gt(&records)).unwrap();
            prop_assert_eq!(&once, &records);
            prop_assert_eq!(parse_gt(&write_gt(&once)).unwrap(), once);
        }

        #[test]
        fn results_write_is_idempotent(records in proptest::collection::vec(gt_record(), 0..20)) {
            let mut seen = HashSet::new();
            let rs: Vec<ResultRecord> = records
                .into_iter()
                .filter(|r| seen.insert((r.frame, r.id)))
                .map(|r| ResultRecord { frame: r.frame, id: r.id, bbox: BBox::new(r.bbox.x, r.bbox.y, r.bbox.w + 1.0, r.bbox.h + 1.0), confidence: r.visibility })
                .collect();
            let text = write_results(&rs);
            let parsed = parse_results(&text).unwrap();
            prop_assert_eq!(parsed.len(), rs.len());
            prop_assert_eq!(write_results(&parsed), text);
        }
    }
}
