//! Household CSV files.
//!
//! Columns: `household_id,village_id,price,wealth,children,female_edu,
//! loc_x,loc_y,outcome,participant`. The location columns may be omitted or
//! left blank. Villages keep the order in which they first appear.

use crate::error::{Error, Result};
use crate::model::{Dataset, Household, Village};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

pub const CSV_COLUMNS: [&str; 10] = [
    "household_id",
    "village_id",
    "price",
    "wealth",
    "children",
    "female_edu",
    "loc_x",
    "loc_y",
    "outcome",
    "participant",
];

const COVARIATES: [&str; 2] = ["children", "female_edu"];

fn parse_f64(s: &str, col: &str, line: u64) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::input(format!("line {line}: column {col}: cannot parse `{s}` as a number")))
}

fn parse_flag(s: &str, col: &str, line: u64) -> Result<bool> {
    match s.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(Error::input(format!("line {line}: column {col}: expected 0 or 1, got `{other}`"))),
    }
}

/// Reads a dataset. `village_sizes` overrides the household total of a
/// village; otherwise every listed row counts toward it.
pub fn read_dataset_from<R: Read>(reader: R, village_sizes: &BTreeMap<u32, usize>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut pos: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, h) in headers.iter().enumerate() {
        let Some(&name) = CSV_COLUMNS.iter().find(|c| **c == h) else {
            return Err(Error::input(format!("unknown column `{h}`")));
        };
        if pos.insert(name, i).is_some() {
            return Err(Error::input(format!("duplicate column `{h}`")));
        }
    }
    for c in CSV_COLUMNS {
        if !pos.contains_key(c) && c != "loc_x" && c != "loc_y" {
            return Err(Error::input(format!("missing column `{c}`")));
        }
    }
    if pos.contains_key("loc_x") != pos.contains_key("loc_y") {
        return Err(Error::input("loc_x and loc_y must appear together"));
    }
    let mut order: Vec<u32> = Vec::new();
    let mut groups: BTreeMap<u32, Vec<Household>> = BTreeMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row as u64 + 2;
        let get = |c: &str| pos.get(c).and_then(|&i| rec.get(i)).unwrap_or("");
        let id = get("household_id")
            .parse::<u64>()
            .map_err(|_| Error::input(format!("line {line}: invalid household_id")))?;
        let village_id = get("village_id")
            .parse::<u32>()
            .map_err(|_| Error::input(format!("line {line}: invalid village_id")))?;
        let covariates = COVARIATES
            .iter()
            .map(|c| parse_f64(get(c), c, line))
            .collect::<Result<Vec<_>>>()?;
        let (lx, ly) = (get("loc_x"), get("loc_y"));
        let location = match (lx.is_empty(), ly.is_empty()) {
            (true, true) => None,
            (false, false) => Some([parse_f64(lx, "loc_x", line)?, parse_f64(ly, "loc_y", line)?]),
            _ => return Err(Error::input(format!("line {line}: only one location coordinate given"))),
        };
        let h = Household {
            id,
            village_id,
            price: parse_f64(get("price"), "price", line)?,
            wealth: parse_f64(get("wealth"), "wealth", line)?,
            covariates,
            location,
            outcome: parse_flag(get("outcome"), "outcome", line)?,
            participant: parse_flag(get("participant"), "participant", line)?,
        };
        if !groups.contains_key(&village_id) {
            order.push(village_id);
        }
        groups.entry(village_id).or_default().push(h);
    }
    if order.is_empty() {
        return Err(Error::input("CSV has no rows"));
    }
    let villages = order
        .into_iter()
        .map(|id| {
            let hs = groups.remove(&id).unwrap_or_default();
            let total = village_sizes.get(&id).copied().unwrap_or(hs.len());
            Village::new(id, hs, total)
        })
        .collect();
    Dataset::new(villages, COVARIATES.iter().map(|s| s.to_string()).collect())
}

pub fn read_dataset(path: &Path, village_sizes: &BTreeMap<u32, usize>) -> Result<Dataset> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::input(format!("cannot open {}: {e}", path.display())))?;
    read_dataset_from(f, village_sizes)
}

/// Writes a dataset with full round-trip precision.
pub fn write_dataset_to<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    if ds.covariate_names != COVARIATES {
        return Err(Error::input(format!(
            "CSV output needs covariates {:?}, dataset has {:?}",
            COVARIATES, ds.covariate_names
        )));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_COLUMNS)?;
    for v in &ds.villages {
        for h in &v.households {
            let (lx, ly) = match h.location {
                Some(l) => (l[0].to_string(), l[1].to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([
                h.id.to_string(),
                h.village_id.to_string(),
                h.price.to_string(),
                h.wealth.to_string(),
                h.covariates[0].to_string(),
                h.covariates[1].to_string(),
                lx,
                ly,
                (h.outcome as u8).to_string(),
                (h.participant as u8).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_dataset_to(ds, f)
}
