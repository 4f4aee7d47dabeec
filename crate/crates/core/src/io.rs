//! Dataset file formats.
//!
//! * RSSI log: `t_seconds,beacon_id,rssi_dbm`
//! * Groundtruth: `t_seconds,x,y,z`
//! * Labels: `t_seconds,beacon_id,los` with `los` in {0, 1}
//! * Filter trace: `t,est_x,est_y,ess,resampled` with `resampled` in {0, 1}
//! * Beacon map: TOML `[[beacons]]` tables with `id`, `x`, `y`, `z`, or a
//!   CSV file `beacon_id,x,y,z` when the extension is `.csv`.
//!
//! CSV headers are optional: a first row with no numeric field is skipped.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::TraceRow;
use crate::types::{Beacon, BeaconMap, Groundtruth, GroundtruthPose, Label, RssiObservation};

/// A per-observation LOS label as written by the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRecord {
    pub t: f64,
    pub beacon_id: String,
    pub label: Label,
}

fn read_rows(path: &Path, columns: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 1);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if i == 0 && looks_like_header(&rec) {
            continue;
        }
        if rec.len() != columns {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("expected {columns} fields, found {}", rec.len()),
            });
        }
        rows.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(rows)
}

// A header row has no numeric field; a row like "x,b1,-58" is treated as
// data so it can be reported as malformed.
fn looks_like_header(rec: &csv::StringRecord) -> bool {
    rec.len() > 1 && rec.iter().all(|f| f.parse::<f64>().is_err() && !f.is_empty())
}

fn parse_f64(path: &Path, line: usize, field: &str, what: &str) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("cannot parse {what} from {field:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("{what} is not finite"),
        });
    }
    Ok(v)
}

/// Reads an RSSI log in file order. Beacon ids are not validated here.
pub fn load_rssi_log(path: impl AsRef<Path>) -> Result<Vec<RssiObservation>> {
    let path = path.as_ref();
    read_rows(path, 3)?
        .into_iter()
        .map(|(line, f)| {
            Ok(RssiObservation {
                t: parse_f64(path, line, &f[0], "timestamp")?,
                beacon_id: f[1].clone(),
                rssi: parse_f64(path, line, &f[2], "rssi")?,
            })
        })
        .collect()
}

pub fn write_rssi_log(path: impl AsRef<Path>, obs: &[RssiObservation]) -> Result<()> {
    let mut out = String::from("t_seconds,beacon_id,rssi_dbm\n");
    for o in obs {
        out.push_str(&format!("{},{},{}\n", o.t, o.beacon_id, o.rssi));
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

pub fn load_groundtruth(path: impl AsRef<Path>) -> Result<Groundtruth> {
    let path = path.as_ref();
    let poses = read_rows(path, 4)?
        .into_iter()
        .map(|(line, f)| {
            Ok(GroundtruthPose {
                t: parse_f64(path, line, &f[0], "timestamp")?,
                position: [
                    parse_f64(path, line, &f[1], "x")?,
                    parse_f64(path, line, &f[2], "y")?,
                    parse_f64(path, line, &f[3], "z")?,
                ],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Groundtruth::new(poses)
}

pub fn write_groundtruth(path: impl AsRef<Path>, gt: &Groundtruth) -> Result<()> {
    let mut out = String::from("t_seconds,x,y,z\n");
    for p in gt.poses() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.t, p.position[0], p.position[1], p.position[2]
        ));
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<LabelRecord>> {
    let path = path.as_ref();
    read_rows(path, 3)?
        .into_iter()
        .map(|(line, f)| {
            let label = match f[2].as_str() {
                "1" => Label::Los,
                "0" => Label::Nlos,
                other => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        msg: format!("los flag must be 0 or 1, got {other:?}"),
                    })
                }
            };
            Ok(LabelRecord {
                t: parse_f64(path, line, &f[0], "timestamp")?,
                beacon_id: f[1].clone(),
                label,
            })
        })
        .collect()
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[LabelRecord]) -> Result<()> {
    let mut out = String::from("t_seconds,beacon_id,los\n");
    for l in labels {
        out.push_str(&format!(
            "{},{},{}\n",
            l.t,
            l.beacon_id,
            u8::from(l.label.is_los())
        ));
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

#[derive(Serialize, Deserialize)]
struct BeaconFile {
    beacons: Vec<Beacon>,
}

/// Loads a beacon map. Any TOML document with a `[[beacons]]` array works,
/// so scenario files double as beacon maps.
pub fn load_beacon_map(path: impl AsRef<Path>) -> Result<BeaconMap> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let entries = read_rows(path, 4)?
            .into_iter()
            .map(|(line, f)| {
                Ok(Beacon {
                    id: f[0].clone(),
                    x: parse_f64(path, line, &f[1], "x")?,
                    y: parse_f64(path, line, &f[2], "y")?,
                    z: parse_f64(path, line, &f[3], "z")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        return BeaconMap::new(entries);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: BeaconFile = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    BeaconMap::new(file.beacons)
}

pub fn write_beacon_map(path: impl AsRef<Path>, map: &BeaconMap) -> Result<()> {
    let file = BeaconFile {
        beacons: map.entries().to_vec(),
    };
    let text = toml::to_string(&file).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(path.as_ref(), text.as_bytes())
}

pub fn write_trace(path: impl AsRef<Path>, rows: &[TraceRow]) -> Result<()> {
    let mut out = String::from("t,est_x,est_y,ess,resampled\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.t, r.est[0], r.est[1], r.ess, r.resampled as u8
        ));
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRow>> {
    let path = path.as_ref();
    read_rows(path, 5)?
        .into_iter()
        .map(|(line, f)| {
            let resampled = match f[4].as_str() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        msg: format!("resampled flag must be 0 or 1, found {other:?}"),
                    })
                }
            };
            Ok(TraceRow {
                t: parse_f64(path, line, &f[0], "timestamp")?,
                est: [
                    parse_f64(path, line, &f[1], "est_x")?,
                    parse_f64(path, line, &f[2], "est_y")?,
                ],
                ess: parse_f64(path, line, &f[3], "ess")?,
                resampled,
            })
        })
        .collect()
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn parses_single_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "log.csv", "0.10,b1,-58\n");
        let obs = load_rssi_log(&p).unwrap();
        assert_eq!(obs, vec![RssiObservation::new(0.10, "b1", -58.0)]);
    }

    #[test]
    fn empty_file_is_empty_log() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "log.csv", "");
        assert!(load_rssi_log(&p).unwrap().is_empty());
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "log.csv", "x,b1,-58\n");
        match load_rssi_log(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        let p = write(&dir, "log2.csv", "t_seconds,beacon_id,rssi_dbm\n0.1,b1,-50\n0.2,b1,abc\n");
        match load_rssi_log(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn header_is_optional() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "log.csv", "t_seconds,beacon_id,rssi_dbm\n0.5,b2,-61.5\n");
        let obs = load_rssi_log(&p).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].beacon_id, "b2");
    }

    #[test]
    fn unknown_beacons_accepted_at_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "log.csv", "0.1,nobody,-70\n");
        assert_eq!(load_rssi_log(&p).unwrap()[0].beacon_id, "nobody");
    }

    #[test]
    fn beacon_map_formats() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = write(
            &dir,
            "beacons.toml",
            "[[beacons]]\nid = \"a\"\nx = 1.0\ny = 2.0\nz = 3.0\n",
        );
        let csv_path = write(&dir, "beacons.csv", "beacon_id,x,y,z\na,1,2,3\n");
        let a = load_beacon_map(&toml_path).unwrap();
        let b = load_beacon_map(&csv_path).unwrap();
        assert_eq!(a, b);
        let out = dir.path().join("out.toml");
        write_beacon_map(&out, &a).unwrap();
        assert_eq!(load_beacon_map(&out).unwrap(), a);
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let labels = vec![
            LabelRecord {
                t: 0.1,
                beacon_id: "a".into(),
                label: Label::Los,
            },
            LabelRecord {
                t: 0.2,
                beacon_id: "b".into(),
                label: Label::Nlos,
            },
        ];
        let p = dir.path().join("labels.csv");
        write_labels(&p, &labels).unwrap();
        assert_eq!(load_labels(&p).unwrap(), labels);
    }

    #[test]
    fn groundtruth_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let gt = Groundtruth::new(vec![
            GroundtruthPose {
                t: 0.0,
                position: [0.1, 0.2, 1.0],
            },
            GroundtruthPose {
                t: 0.1,
                position: [0.12, 0.2, 1.0],
            },
        ])
        .unwrap();
        let p = dir.path().join("gt.csv");
        write_groundtruth(&p, &gt).unwrap();
        assert_eq!(load_groundtruth(&p).unwrap(), gt);
    }
}
