use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    AdmissionWindow, Cohort, CohortError, GemsaCode, PatientRecord, Provenance, Recourse, Result,
    Sex, TriageLevel, Vitals,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortFormat {
    /// Comma-delimited table with a header row.
    DelimitedTable,
    /// One JSON object per line.
    RecordPerLine,
}

impl FromStr for CohortFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" | "delimited" | "delimited_table" => Ok(CohortFormat::DelimitedTable),
            "jsonl" | "record_per_line" => Ok(CohortFormat::RecordPerLine),
            other => Err(format!("unknown cohort format `{other}`")),
        }
    }
}

/// On-disk row layout shared by both formats.
#[derive(Debug, Serialize, Deserialize)]
struct RawRow {
    case_id: String,
    age: u32,
    sex: String,
    admission_window: String,
    recourse: String,
    comorbidity_any: u8,
    comorbidity_vascular: u8,
    sbp: f64,
    dbp: f64,
    hr: f64,
    temp: f64,
    eva: f64,
    spo2: f64,
    o2: f64,
    #[serde(default)]
    history_text: String,
    #[serde(default)]
    nurse_triage: String,
    #[serde(default)]
    gold_triage: String,
    #[serde(default)]
    gemsa: String,
}

fn parse_flag(v: u8, name: &str) -> Result<bool, String> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(format!("{name} must be 0 or 1, got {other}")),
    }
}

fn parse_opt_level(s: &str) -> Result<Option<TriageLevel>, String> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

impl RawRow {
    fn into_record(self) -> Result<PatientRecord, String> {
        let record = PatientRecord {
            case_id: self.case_id,
            age: self.age,
            sex: self.sex.parse()?,
            admission_window: self.admission_window.parse::<AdmissionWindow>()?,
            recourse: self.recourse.parse::<Recourse>()?,
            comorbidity_any: parse_flag(self.comorbidity_any, "comorbidity_any")?,
            comorbidity_vascular: parse_flag(self.comorbidity_vascular, "comorbidity_vascular")?,
            vitals: Vitals {
                sbp: self.sbp,
                dbp: self.dbp,
                hr: self.hr,
                temp: self.temp,
                eva: self.eva,
                spo2: self.spo2,
                o2: self.o2,
            },
            history_text: if self.history_text.is_empty() { None } else { Some(self.history_text) },
            nurse_triage: parse_opt_level(&self.nurse_triage)?,
            gold_triage: parse_opt_level(&self.gold_triage)?,
            gemsa: self.gemsa.parse::<GemsaCode>()?,
        };
        record.validate()?;
        Ok(record)
    }

    fn from_record(r: &PatientRecord) -> Self {
        RawRow {
            case_id: r.case_id.clone(),
            age: r.age,
            sex: Sex::token(r.sex).to_string(),
            admission_window: r.admission_window.token().to_string(),
            recourse: r.recourse.token().to_string(),
            comorbidity_any: r.comorbidity_any as u8,
            comorbidity_vascular: r.comorbidity_vascular as u8,
            sbp: r.vitals.sbp,
            dbp: r.vitals.dbp,
            hr: r.vitals.hr,
            temp: r.vitals.temp,
            eva: r.vitals.eva,
            spo2: r.vitals.spo2,
            o2: r.vitals.o2,
            history_text: r.history_text.clone().unwrap_or_default(),
            nurse_triage: r.nurse_triage.map(|l| l.token().to_string()).unwrap_or_default(),
            gold_triage: r.gold_triage.map(|l| l.token().to_string()).unwrap_or_default(),
            gemsa: r.gemsa.token().to_string(),
        }
    }
}

/// Parses a cohort file. Row order is preserved; any bad row aborts the load.
pub fn ingest_cohort<R: Read>(source: R, format: CohortFormat) -> Result<Cohort> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut push = |line: usize, raw: RawRow, records: &mut Vec<PatientRecord>| -> Result<()> {
        let record = raw
            .into_record()
            .map_err(|reason| CohortError::MalformedRow { line, reason })?;
        if !seen.insert(record.case_id.clone()) {
            return Err(CohortError::DuplicateCaseId(record.case_id));
        }
        records.push(record);
        Ok(())
    };

    match format {
        CohortFormat::DelimitedTable => {
            let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
            for (i, row) in reader.deserialize::<RawRow>().enumerate() {
                let raw = row.map_err(|e| CohortError::MalformedRow {
                    line: e.position().map(|p| p.line() as usize).unwrap_or(i + 2),
                    reason: e.to_string(),
                })?;
                push(i + 2, raw, &mut records)?;
            }
        }
        CohortFormat::RecordPerLine => {
            for (i, line) in BufReader::new(source).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let raw: RawRow = serde_json::from_str(&line).map_err(|e| {
                    CohortError::MalformedRow { line: i + 1, reason: e.to_string() }
                })?;
                push(i + 1, raw, &mut records)?;
            }
        }
    }

    if records.is_empty() {
        return Err(CohortError::EmptySource);
    }
    Ok(Cohort { records, provenance: Provenance::Ingested })
}

/// Writes a cohort in either on-disk format. Floats use shortest round-trip
/// formatting, so `ingest_cohort` reproduces every field.
pub fn write_cohort<W: Write>(cohort: &Cohort, format: CohortFormat, mut sink: W) -> Result<()> {
    match format {
        CohortFormat::DelimitedTable => {
            let mut writer = csv::Writer::from_writer(sink);
            for r in &cohort.records {
                writer.serialize(RawRow::from_record(r)).map_err(csv_io)?;
            }
            writer.flush()?;
        }
        CohortFormat::RecordPerLine => {
            for r in &cohort.records {
                serde_json::to_writer(&mut sink, &RawRow::from_record(r))
                    .map_err(std::io::Error::other)?;
                sink.write_all(b"\n")?;
            }
            sink.flush()?;
        }
    }
    Ok(())
}

fn csv_io(e: csv::Error) -> CohortError {
    CohortError::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "case_id,age,sex,admission_window,recourse,comorbidity_any,comorbidity_vascular,sbp,dbp,hr,temp,eva,spo2,o2,history_text,nurse_triage,gold_triage,gemsa\n";

    fn table(rows: &[&str]) -> String {
        let mut s = HEADER.to_string();
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    #[test]
    fn three_row_table() {
        let src = table(&[
            "a,40,M,06-14,TRAUMA,0,0,130,80,80,37.0,3,98,0,\"chute, douleur poignet\",4,4,2",
            "b,65,F,21-06,CARDIO,1,1,160,95,110,37.2,6,94,2,douleur thoracique,2,2,4",
            "c,30,F,14-21,ABDO,0,0,120,70,90,38.1,5,99,0,,3B,3B,",
        ]);
        let cohort = ingest_cohort(src.as_bytes(), CohortFormat::DelimitedTable).unwrap();
        assert_eq!(cohort.len(), 3);
        assert_eq!(cohort.provenance, Provenance::Ingested);
        assert_eq!(cohort.records[0].history_text.as_deref(), Some("chute, douleur poignet"));
        assert_eq!(cohort.records[2].gold_triage, Some(TriageLevel::T3B));
        assert_eq!(cohort.records[2].gold_triage.unwrap().rank(), 4);
        assert_eq!(cohort.records[2].history_text, None);
        assert_eq!(cohort.records[2].gemsa, GemsaCode::Unspecified);
        let ids: Vec<_> = cohort.records.iter().map(|r| r.case_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn minor_rejected() {
        let src = table(&["a,17,M,06-14,TRAUMA,0,0,130,80,80,37.0,3,98,0,,4,4,2"]);
        match ingest_cohort(src.as_bytes(), CohortFormat::DelimitedTable) {
            Err(CohortError::MalformedRow { line, reason }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("age"), "{reason}");
            }
            other => panic!("expected MalformedRow, got {other:?}"),
        }
    }

    #[test]
    fn unknown_tokens_rejected() {
        for bad in [
            "a,40,X,06-14,TRAUMA,0,0,130,80,80,37.0,3,98,0,,4,4,2",
            "a,40,M,06-15,TRAUMA,0,0,130,80,80,37.0,3,98,0,,4,4,2",
            "a,40,M,06-14,SURGERY,0,0,130,80,80,37.0,3,98,0,,4,4,2",
            "a,40,M,06-14,TRAUMA,2,0,130,80,80,37.0,3,98,0,,4,4,2",
            "a,40,M,06-14,TRAUMA,0,0,130,80,80,37.0,3,98,0,,3C,4,2",
            "a,40,M,06-14,TRAUMA,0,0,130,80,80,37.0,3,98,0,,4,4,9",
            "a,40,M,06-14,TRAUMA,0,0,130,80,80,37.0,3,101,0,,4,4,2",
        ] {
            let src = table(&[bad]);
            assert!(
                matches!(
                    ingest_cohort(src.as_bytes(), CohortFormat::DelimitedTable),
                    Err(CohortError::MalformedRow { .. })
                ),
                "{bad}"
            );
        }
    }

    #[test]
    fn duplicate_and_empty() {
        let row = "a,40,M,06-14,TRAUMA,0,0,130,80,80,37.0,3,98,0,,4,4,2";
        let src = table(&[row, row]);
        assert!(matches!(
            ingest_cohort(src.as_bytes(), CohortFormat::DelimitedTable),
            Err(CohortError::DuplicateCaseId(id)) if id == "a"
        ));
        assert!(matches!(
            ingest_cohort(HEADER.as_bytes(), CohortFormat::DelimitedTable),
            Err(CohortError::EmptySource)
        ));
        assert!(matches!(
            ingest_cohort("\n\n".as_bytes(), CohortFormat::RecordPerLine),
            Err(CohortError::EmptySource)
        ));
    }

    #[test]
    fn record_per_line_parses() {
        let line = r#"{"case_id":"z","age":50,"sex":"F","admission_window":"21-06","recourse":"NEURO","comorbidity_any":1,"comorbidity_vascular":0,"sbp":150.5,"dbp":90,"hr":100,"temp":36.8,"eva":0,"spo2":97,"o2":0,"history_text":"cephalees","nurse_triage":"3A","gold_triage":"2","gemsa":"4"}"#;
        let cohort = ingest_cohort(line.as_bytes(), CohortFormat::RecordPerLine).unwrap();
        let r = &cohort.records[0];
        assert_eq!(r.nurse_triage, Some(TriageLevel::T3A));
        assert_eq!(r.gold_triage, Some(TriageLevel::T2));
        assert_eq!(r.gemsa, GemsaCode::G4);
        assert_eq!(r.vitals.sbp, 150.5);
    }
}
