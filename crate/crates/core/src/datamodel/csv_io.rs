use std::fs::File;
use std::path::Path;

use super::{Covariates, Dataset, EstimateRecord, Estimand, OutcomeKind, TruthSet};
use crate::error::{Error, Result};

pub const RECORD_COLUMNS: [&str; 9] = [
    "replicate", "estimator", "framework", "ey1", "ey0", "ate", "rr", "logcor", "converged",
];

/// Shortest decimal text that parses back to the same double.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => fmt_f64(v),
        _ => String::new(),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_cell(text: &str, row: usize, column: &str) -> Result<f64> {
    let t = text.trim();
    // f64::from_str accepts "inf" and "NaN"; neither is admissible here.
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::BadCell {
            row,
            column: column.to_string(),
            value: text.to_string(),
        }),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Headers)
        .from_reader(open(path)?))
}

/// Reads a numeric covariate file. Row numbers in errors count data rows
/// from 1 (the header is not counted).
///
/// When `schema` is given the header must contain exactly those columns (in
/// any order); the returned matrix uses the schema's column order.
pub fn load_covariates_csv(path: &Path, schema: Option<&[&str]>) -> Result<Covariates> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let order: Vec<usize> = match schema {
        None => (0..header.len()).collect(),
        Some(cols) => {
            let missing: Vec<String> = cols
                .iter()
                .filter(|c| !header.iter().any(|h| h == *c))
                .map(|c| c.to_string())
                .collect();
            let extra: Vec<String> = header
                .iter()
                .filter(|h| !cols.contains(&h.as_str()))
                .cloned()
                .collect();
            if !missing.is_empty() || !extra.is_empty() {
                return Err(Error::SchemaMismatch { missing, extra });
            }
            cols.iter()
                .map(|c| header.iter().position(|h| h == c).unwrap())
                .collect()
        }
    };
    let names: Vec<String> = order.iter().map(|&j| header[j].clone()).collect();
    let mut data = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for &j in &order {
            data.push(parse_cell(&rec[j], i + 1, &header[j])?);
        }
    }
    Covariates::new(names, data)
}

pub fn write_covariates_csv(path: &Path, w: &Covariates) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    wtr.write_record(w.names())?;
    for i in 0..w.nrows() {
        wtr.write_record(w.row(i).iter().map(|v| fmt_f64(*v)))?;
    }
    wtr.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes covariate columns followed by `A` and `Y`.
pub fn write_dataset_csv(path: &Path, d: &Dataset) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    let mut header: Vec<&str> = d.w.names().iter().map(String::as_str).collect();
    header.extend(["A", "Y"]);
    wtr.write_record(&header)?;
    for i in 0..d.n() {
        let mut row: Vec<String> = d.w.row(i).iter().map(|v| fmt_f64(*v)).collect();
        row.push(d.a[i].to_string());
        row.push(fmt_f64(d.y[i]));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a dataset written by [`write_dataset_csv`]: covariates plus `A`
/// and `Y` columns.
pub fn load_dataset_csv(path: &Path, kind: OutcomeKind) -> Result<Dataset> {
    let all = load_covariates_csv(path, None)?;
    let ia = all.column_index("A");
    let iy = all.column_index("Y");
    let (Some(ia), Some(iy)) = (ia, iy) else {
        let missing = [("A", ia), ("Y", iy)]
            .iter()
            .filter(|(_, i)| i.is_none())
            .map(|(c, _)| c.to_string())
            .collect();
        return Err(Error::SchemaMismatch {
            missing,
            extra: vec![],
        });
    };
    let wcols: Vec<usize> = (0..all.ncols()).filter(|&j| j != ia && j != iy).collect();
    let names = wcols.iter().map(|&j| all.names()[j].clone()).collect();
    let mut data = Vec::with_capacity(all.nrows() * wcols.len());
    let mut a = Vec::with_capacity(all.nrows());
    let mut y = Vec::with_capacity(all.nrows());
    for i in 0..all.nrows() {
        let row = all.row(i);
        data.extend(wcols.iter().map(|&j| row[j]));
        let av = row[ia];
        if av != 0.0 && av != 1.0 {
            return Err(Error::BadCell {
                row: i + 1,
                column: "A".into(),
                value: av.to_string(),
            });
        }
        a.push(av as u8);
        y.push(row[iy]);
    }
    let mut w = Covariates::new(names, data)?;
    if w.ncols() == 0 {
        w = Covariates::empty(a.len());
    }
    Dataset::new(w, a, y, kind)
}

pub fn write_records_csv(path: &Path, records: &[EstimateRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    wtr.write_record(RECORD_COLUMNS)?;
    for r in records {
        wtr.write_record([
            r.replicate_index.to_string(),
            r.estimator.to_string(),
            r.framework.to_string(),
            fmt_opt(Some(r.ey1)),
            fmt_opt(Some(r.ey0)),
            fmt_opt(Some(r.ate)),
            fmt_opt(r.rr),
            fmt_opt(r.logcor),
            r.converged.to_string(),
        ])?;
    }
    wtr.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One `estimand,value` row per estimand; absent truths have an empty value.
pub fn write_truths_csv(path: &Path, t: &TruthSet) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    wtr.write_record(["estimand", "value"])?;
    for e in Estimand::ALL {
        wtr.write_record([e.as_str().to_string(), fmt_opt(t.value(*e))])?;
    }
    wtr.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_truths_csv(path: &Path) -> Result<TruthSet> {
    let mut rdr = reader(path)?;
    let mut vals = [None; 5];
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = || Error::BadCell {
            row: i + 1,
            column: "estimand".into(),
            value: rec.get(0).unwrap_or("").to_string(),
        };
        let e: Estimand = rec.get(0).ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        let v = rec.get(1).unwrap_or("").trim();
        let slot = Estimand::ALL.iter().position(|x| *x == e).expect("listed estimand");
        vals[slot] = if v.is_empty() { None } else { Some(parse_cell(v, i + 1, "value")?) };
    }
    let get = |e: Estimand| vals[Estimand::ALL.iter().position(|x| *x == e).expect("listed estimand")];
    let req = |e: Estimand| {
        get(e).ok_or_else(|| Error::SchemaMismatch {
            missing: vec![e.as_str().to_string()],
            extra: vec![],
        })
    };
    Ok(TruthSet {
        ey1: req(Estimand::Ey1)?,
        ey0: req(Estimand::Ey0)?,
        ate: req(Estimand::Ate)?,
        rr: get(Estimand::Rr),
        logcor: get(Estimand::Logcor),
    })
}

pub fn read_records_csv(path: &Path) -> Result<Vec<EstimateRecord>> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != RECORD_COLUMNS {
        let missing = RECORD_COLUMNS
            .iter()
            .filter(|c| !header.iter().any(|h| h == *c))
            .map(|c| c.to_string())
            .collect();
        let extra = header
            .iter()
            .filter(|h| !RECORD_COLUMNS.contains(&h.as_str()))
            .cloned()
            .collect();
        return Err(Error::SchemaMismatch { missing, extra });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let bad = |col: &str, v: &str| Error::BadCell {
            row,
            column: col.to_string(),
            value: v.to_string(),
        };
        let num = |j: usize| -> Result<Option<f64>> {
            if rec[j].trim().is_empty() {
                Ok(None)
            } else {
                parse_cell(&rec[j], row, RECORD_COLUMNS[j]).map(Some)
            }
        };
        out.push(EstimateRecord {
            replicate_index: rec[0].trim().parse().map_err(|_| bad("replicate", &rec[0]))?,
            estimator: rec[1].trim().parse().map_err(|_| bad("estimator", &rec[1]))?,
            framework: rec[2].trim().parse().map_err(|_| bad("framework", &rec[2]))?,
            ey1: num(3)?.unwrap_or(f64::NAN),
            ey0: num(4)?.unwrap_or(f64::NAN),
            ate: num(5)?.unwrap_or(f64::NAN),
            rr: num(6)?,
            logcor: num(7)?,
            converged: rec[8].trim().parse().map_err(|_| bad("converged", &rec[8]))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{EstimatorId, Framework};
    use proptest::prelude::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
        p
    }

    #[test]
    fn parses_simple_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "w.csv", "w1,w2\n1,2\n3,4\n5,6\n");
        let w = load_covariates_csv(&p, None).unwrap();
        assert_eq!(w.names(), &["w1", "w2"]);
        assert_eq!(w.nrows(), 3);
        assert_eq!(w.data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn accepts_crlf() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "w.csv", "w1,w2\r\n1,2\r\n3,4\r\n");
        let w = load_covariates_csv(&p, None).unwrap();
        assert_eq!(w.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn bad_cell_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "w.csv", "w1,w2\n1,2\n3,abc\n");
        match load_covariates_csv(&p, None).unwrap_err() {
            Error::BadCell { row, column, value } => {
                assert_eq!(row, 2);
                assert_eq!(column, "w2");
                assert_eq!(value, "abc");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rejects_non_finite_and_thousands_separators() {
        let dir = tempfile::tempdir().unwrap();
        for cell in ["NaN", "inf", "-Infinity", "1,000"] {
            let p = write(&dir, "w.csv", &format!("w1\n\"{cell}\"\n"));
            assert!(matches!(load_covariates_csv(&p, None), Err(Error::BadCell { .. })), "{cell}");
        }
    }

    #[test]
    fn schema_mismatch_lists_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "w.csv", "w1,w3\n1,2\n");
        match load_covariates_csv(&p, Some(&["w1", "w2"])).unwrap_err() {
            Error::SchemaMismatch { missing, extra } => {
                assert_eq!(missing, vec!["w2"]);
                assert_eq!(extra, vec!["w3"]);
            }
            e => panic!("unexpected {e}"),
        }
        let p = write(&dir, "w2.csv", "b,a\n1,2\n");
        let w = load_covariates_csv(&p, Some(&["a", "b"])).unwrap();
        assert_eq!(w.names(), &["a", "b"]);
        assert_eq!(w.data(), &[2.0, 1.0]);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_covariates_csv(Path::new("/nonexistent/x.csv"), None).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn truths_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let t = TruthSet::from_means(0.31, 0.12, OutcomeKind::Binary);
        write_truths_csv(&p, &t).unwrap();
        assert_eq!(read_truths_csv(&p).unwrap(), t);
        let c = TruthSet::from_means(12.0, 10.0, OutcomeKind::Continuous);
        write_truths_csv(&p, &c).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().contains("rr,\n"));
        assert_eq!(read_truths_csv(&p).unwrap(), c);
    }

    #[test]
    fn records_round_trip_with_empty_optionals() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let recs = vec![
            EstimateRecord {
                replicate_index: 0,
                estimator: EstimatorId::Tmle,
                framework: Framework::GenerateTreatment,
                ey1: 0.3,
                ey0: 0.1,
                ate: 0.19999999999999998,
                rr: Some(3.0000000000000004),
                logcor: None,
                converged: true,
            },
            EstimateRecord {
                replicate_index: 1,
                estimator: EstimatorId::Msm,
                framework: Framework::SampleTreatment,
                ey1: f64::NAN,
                ey0: f64::NAN,
                ate: f64::NAN,
                rr: None,
                logcor: None,
                converged: false,
            },
        ];
        write_records_csv(&p, &recs).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("replicate,estimator,framework,ey1,ey0,ate,rr,logcor,converged\n"));
        assert!(text.contains("1,msm,sample_treatment,,,,,,false"));
        let back = read_records_csv(&p).unwrap();
        assert_eq!(back[0], recs[0]);
        assert!(back[1].ate.is_nan() && !back[1].converged);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn covariate_csv_round_trip_is_bitwise(
            rows in prop::collection::vec(prop::collection::vec(
                prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 3), 1..20)
        ) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("w.csv");
            let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
            let w = Covariates::from_rows(names, &rows).unwrap();
            write_covariates_csv(&p, &w).unwrap();
            let back = load_covariates_csv(&p, None).unwrap();
            let bits = |c: &Covariates| c.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back), bits(&w));
        }
    }
}
