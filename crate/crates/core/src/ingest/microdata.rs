use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{csv_writer, write_err, CsvInput, IngestError, Value};

/// Derived household variable: number of linked person records.
pub const N_PERSONS: &str = "n_persons";

const FIXED_COLUMNS: [&str; 4] = ["record_id", "household_serial", "role", "weight"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Categorical,
    Ordinal,
    Continuous,
}

impl VariableKind {
    pub fn is_numeric(&self) -> bool {
        !matches!(self, VariableKind::Categorical)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableLevel {
    Household,
    Person,
    /// Inferred from which record roles carry values.
    #[default]
    Any,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableDecl {
    pub name: String,
    pub kind: VariableKind,
    #[serde(default)]
    pub level: VariableLevel,
}

/// Sidecar schema declaring the kind of every characteristic column.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub variables: Vec<VariableDecl>,
}

impl Schema {
    pub fn kind(&self, name: &str) -> Option<VariableKind> {
        if name == N_PERSONS {
            return Some(VariableKind::Ordinal);
        }
        self.variables.iter().find(|v| v.name == name).map(|v| v.kind)
    }

    fn decl(&self, name: &str) -> Option<&VariableDecl> {
        self.variables.iter().find(|v| v.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordRole {
    Household,
    Person,
}

/// One row of microdata before linkage.
#[derive(Debug, Clone, PartialEq)]
pub struct MicrodataRecord {
    pub record_id: String,
    pub household_serial: String,
    pub role: RecordRole,
    pub weight: f64,
    pub characteristics: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HouseholdRecord {
    pub record_id: String,
    pub serial: String,
    pub weight: f64,
    pub values: BTreeMap<String, Value>,
    /// Indices into [`MicrodataTable::persons`].
    pub persons: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonRecord {
    pub record_id: String,
    pub household: usize,
    pub weight: f64,
    pub values: BTreeMap<String, Value>,
}

/// Linked household/person microdata.
#[derive(Debug, Clone, PartialEq)]
pub struct MicrodataTable {
    schema: Schema,
    households: Vec<HouseholdRecord>,
    persons: Vec<PersonRecord>,
    household_vars: Vec<String>,
    person_vars: Vec<String>,
    ranges: BTreeMap<String, f64>,
}

/// Linkage failure; `index` is the offending record's position in the input.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RecordError {
    pub index: usize,
    pub rule: String,
}

impl MicrodataTable {
    /// Links records: every person must reference exactly one household.
    pub fn from_records(schema: Schema, records: Vec<MicrodataRecord>) -> Result<Self, String> {
        Self::link(schema, records).map_err(|e| format!("record {}: {}", e.index + 1, e.rule))
    }

    pub(crate) fn link(schema: Schema, records: Vec<MicrodataRecord>) -> Result<Self, RecordError> {
        let mut ids = HashSet::new();
        let mut by_serial: HashMap<String, usize> = HashMap::new();
        let mut households = Vec::new();
        let mut pending_persons = Vec::new();

        for (index, rec) in records.into_iter().enumerate() {
            let fail = |rule: String| RecordError { index, rule };
            if rec.record_id.is_empty() {
                return Err(fail("empty record_id".into()));
            }
            if !ids.insert(rec.record_id.clone()) {
                return Err(fail(format!("duplicate record_id `{}`", rec.record_id)));
            }
            if !rec.weight.is_finite() || rec.weight < 0.0 {
                return Err(fail(format!("weight must be nonnegative, got {}", rec.weight)));
            }
            for (name, value) in &rec.characteristics {
                let Some(decl) = schema.decl(name) else {
                    return Err(fail(format!("characteristic `{name}` is not declared in the schema")));
                };
                match (decl.kind.is_numeric(), value) {
                    (true, Value::Category(s)) => {
                        return Err(fail(format!("`{name}` is {:?} but value {s:?} is not numeric", decl.kind)));
                    }
                    (true, Value::Number(x)) if !x.is_finite() => {
                        return Err(fail(format!("`{name}` value is not finite")));
                    }
                    _ => {}
                }
                let level_ok = matches!(
                    (decl.level, rec.role),
                    (VariableLevel::Any, _)
                        | (VariableLevel::Household, RecordRole::Household)
                        | (VariableLevel::Person, RecordRole::Person)
                );
                if !level_ok {
                    return Err(fail(format!("`{name}` is a {:?}-level variable", decl.level).to_lowercase()));
                }
            }
            match rec.role {
                RecordRole::Household => {
                    if by_serial.insert(rec.household_serial.clone(), households.len()).is_some() {
                        return Err(fail(format!("second household record for serial `{}`", rec.household_serial)));
                    }
                    households.push(HouseholdRecord {
                        record_id: rec.record_id,
                        serial: rec.household_serial,
                        weight: rec.weight,
                        values: rec.characteristics,
                        persons: Vec::new(),
                    });
                }
                RecordRole::Person => pending_persons.push((index, rec)),
            }
        }

        let mut persons = Vec::with_capacity(pending_persons.len());
        for (index, rec) in pending_persons {
            let Some(&h) = by_serial.get(&rec.household_serial) else {
                return Err(RecordError {
                    index,
                    rule: format!(
                        "person `{}` references unknown household_serial `{}`",
                        rec.record_id, rec.household_serial
                    ),
                });
            };
            households[h].persons.push(persons.len());
            persons.push(PersonRecord {
                record_id: rec.record_id,
                household: h,
                weight: rec.weight,
                values: rec.characteristics,
            });
        }

        let used = |f: &dyn Fn(&str) -> bool| -> Vec<String> {
            schema.variables.iter().map(|v| v.name.clone()).filter(|n| f(n)).collect()
        };
        let household_vars = used(&|n| {
            schema.decl(n).unwrap().level == VariableLevel::Household
                || households.iter().any(|h| h.values.contains_key(n))
        });
        let person_vars = used(&|n| {
            schema.decl(n).unwrap().level == VariableLevel::Person
                || persons.iter().any(|p| p.values.contains_key(n))
        });

        let mut ranges = BTreeMap::new();
        for decl in schema.variables.iter().filter(|v| v.kind.is_numeric()) {
            let vals = households
                .iter()
                .map(|h| &h.values)
                .chain(persons.iter().map(|p| &p.values))
                .filter_map(|m| m.get(&decl.name).and_then(Value::as_number));
            if let Some(r) = range_of(vals) {
                ranges.insert(decl.name.clone(), r);
            }
        }
        if let Some(r) = range_of(households.iter().map(|h| h.persons.len() as f64)) {
            ranges.insert(N_PERSONS.to_string(), r);
        }

        Ok(Self {
            schema,
            households,
            persons,
            household_vars,
            person_vars,
            ranges,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn households(&self) -> &[HouseholdRecord] {
        &self.households
    }

    pub fn persons(&self) -> &[PersonRecord] {
        &self.persons
    }

    /// Household-level characteristic columns, in schema order.
    pub fn household_vars(&self) -> &[String] {
        &self.household_vars
    }

    /// Person-level characteristic columns, in schema order.
    pub fn person_vars(&self) -> &[String] {
        &self.person_vars
    }

    /// Range r_i = max − min over every record carrying the variable.
    pub fn range(&self, var: &str) -> Option<f64> {
        self.ranges.get(var).copied()
    }

    pub fn ranges(&self) -> &BTreeMap<String, f64> {
        &self.ranges
    }

    pub fn is_empty(&self) -> bool {
        self.households.is_empty()
    }

    /// A household characteristic, including the derived [`N_PERSONS`].
    pub fn household_value(&self, h: usize, var: &str) -> Option<Value> {
        let hh = &self.households[h];
        match hh.values.get(var) {
            Some(v) => Some(v.clone()),
            None if var == N_PERSONS => Some(Value::Number(hh.persons.len() as f64)),
            None => None,
        }
    }

    pub fn max_household_size(&self) -> usize {
        self.households.iter().map(|h| h.persons.len()).max().unwrap_or(0)
    }

    /// Flatten back to records: all households, then all persons, each in
    /// table order (so relinking reproduces the same table).
    pub fn to_records(&self) -> Vec<MicrodataRecord> {
        let households = self.households.iter().map(|h| MicrodataRecord {
            record_id: h.record_id.clone(),
            household_serial: h.serial.clone(),
            role: RecordRole::Household,
            weight: h.weight,
            characteristics: h.values.clone(),
        });
        let persons = self.persons.iter().map(|p| MicrodataRecord {
            record_id: p.record_id.clone(),
            household_serial: self.households[p.household].serial.clone(),
            role: RecordRole::Person,
            weight: p.weight,
            characteristics: p.values.clone(),
        });
        households.chain(persons).collect()
    }
}

fn range_of(vals: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut lo, mut hi, mut any) = (f64::INFINITY, f64::NEG_INFINITY, false);
    for v in vals {
        lo = lo.min(v);
        hi = hi.max(v);
        any = true;
    }
    any.then_some(hi - lo)
}

/// Default sidecar location: `households.csv` → `households.schema.json`.
pub fn schema_path_for(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("schema.json")
}

pub fn load_schema(path: &Path) -> Result<Schema, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    let schema: Schema = serde_json::from_str(&text)
        .map_err(|e| IngestError::at(path, e.line() as u64, format!("invalid schema: {e}")))?;
    let mut names = HashSet::new();
    for v in &schema.variables {
        if FIXED_COLUMNS.contains(&v.name.as_str()) || v.name == N_PERSONS {
            return Err(IngestError::file(path, format!("`{}` is a reserved column name", v.name)));
        }
        if !names.insert(&v.name) {
            return Err(IngestError::file(path, format!("variable `{}` declared twice", v.name)));
        }
    }
    Ok(schema)
}

/// Reads `record_id,household_serial,role,weight,<characteristics…>` plus its
/// schema sidecar (`schema`, or [`schema_path_for`] when `None`).
pub fn load_microdata(path: &Path, schema: Option<&Path>) -> Result<MicrodataTable, IngestError> {
    let schema_path = schema.map(Path::to_path_buf).unwrap_or_else(|| schema_path_for(path));
    let schema = load_schema(&schema_path)?;
    let mut input = CsvInput::open(path, &FIXED_COLUMNS)?;
    let path = input.path().to_path_buf();
    let idx: Vec<usize> = FIXED_COLUMNS.iter().map(|c| input.column(c).unwrap()).collect();
    let mut characteristic_cols = Vec::new();
    for (i, name) in input.headers().iter().enumerate() {
        if FIXED_COLUMNS.contains(&name) {
            continue;
        }
        let Some(kind) = schema.kind(name) else {
            return Err(IngestError::at(&path, 1, format!("column `{name}` is not declared in {}", schema_path.display())));
        };
        characteristic_cols.push((i, name.to_string(), kind));
    }

    let mut records = Vec::new();
    let mut lines = Vec::new();
    for row in input.rows() {
        let (line, rec) = row?;
        let role = match rec[idx[2]].to_ascii_lowercase().as_str() {
            "household" => RecordRole::Household,
            "person" => RecordRole::Person,
            other => {
                return Err(IngestError::at(&path, line, format!("role must be household or person, got `{other}`")));
            }
        };
        let weight = match &rec[idx[3]] {
            "" => 1.0,
            raw => super::parse_nonneg(&path, line, "weight", raw)?,
        };
        let mut characteristics = BTreeMap::new();
        for (i, name, kind) in &characteristic_cols {
            let raw = &rec[*i];
            if raw.is_empty() {
                continue;
            }
            let value = if kind.is_numeric() {
                match raw.parse::<f64>() {
                    Ok(x) if x.is_finite() => Value::Number(x),
                    _ => {
                        return Err(IngestError::at(&path, line, format!("`{name}` is {kind:?} but {raw:?} is not a finite number")));
                    }
                }
            } else {
                Value::Category(raw.to_string())
            };
            characteristics.insert(name.clone(), value);
        }
        records.push(MicrodataRecord {
            record_id: rec[idx[0]].to_string(),
            household_serial: rec[idx[1]].to_string(),
            role,
            weight,
            characteristics,
        });
        lines.push(line);
    }
    MicrodataTable::link(schema, records).map_err(|e| IngestError::at(&path, lines[e.index], e.rule))
}

/// Writes the CSV (not the schema sidecar).
pub fn write_microdata(path: &Path, table: &MicrodataTable) -> Result<(), IngestError> {
    let mut w = csv_writer(path)?;
    let vars: Vec<&str> = table.schema.variables.iter().map(|v| v.name.as_str()).collect();
    let header: Vec<&str> = FIXED_COLUMNS.iter().copied().chain(vars.iter().copied()).collect();
    w.write_record(&header).map_err(|e| write_err(path, e))?;
    for rec in table.to_records() {
        let mut row = vec![
            rec.record_id,
            rec.household_serial,
            match rec.role {
                RecordRole::Household => "household".into(),
                RecordRole::Person => "person".into(),
            },
            rec.weight.to_string(),
        ];
        for v in &vars {
            row.push(rec.characteristics.get(*v).map(ToString::to_string).unwrap_or_default());
        }
        w.write_record(&row).map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| IngestError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const SCHEMA: &str = r#"{"variables":[
        {"name":"hh_income","kind":"continuous","level":"household"},
        {"name":"tenure","kind":"categorical","level":"household"},
        {"name":"age","kind":"ordinal","level":"person"},
        {"name":"sex","kind":"categorical"}
    ]}"#;

    fn write_pair(dir: &Path, csv: &str) -> PathBuf {
        let p = dir.join("micro.csv");
        std::fs::File::create(&p).unwrap().write_all(csv.as_bytes()).unwrap();
        std::fs::write(dir.join("micro.schema.json"), SCHEMA).unwrap();
        p
    }

    #[test]
    fn links_household_and_persons() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_pair(
            dir.path(),
            "record_id,household_serial,role,weight,hh_income,tenure,age,sex\n\
             H1,S1,household,2,55000,own,,\n\
             P1,S1,person,,,,20,f\n\
             P2,S1,person,,,,50,m\n",
        );
        let t = load_microdata(&p, None).unwrap();
        assert_eq!(t.households().len(), 1);
        assert_eq!(t.households()[0].persons, vec![0, 1]);
        assert_eq!(t.households()[0].weight, 2.0);
        assert_eq!(t.persons()[1].household, 0);
        assert_eq!(t.household_vars(), ["hh_income", "tenure"]);
        assert_eq!(t.person_vars(), ["age", "sex"]);
        assert_eq!(t.household_value(0, N_PERSONS), Some(Value::Number(2.0)));
        assert_eq!(t.max_household_size(), 2);
    }

    #[test]
    fn ordinal_range() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_pair(
            dir.path(),
            "record_id,household_serial,role,weight,age\n\
             H1,S1,household,1,\n\
             P1,S1,person,1,20\nP2,S1,person,1,50\nP3,S1,person,1,80\n",
        );
        let t = load_microdata(&p, None).unwrap();
        assert_eq!(t.range("age"), Some(60.0));
        assert_eq!(t.range(N_PERSONS), Some(0.0));
    }

    #[test]
    fn orphan_person_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_pair(
            dir.path(),
            "record_id,household_serial,role,weight,age\nH1,S1,household,1,\nP1,S9,person,1,30\n",
        );
        let msg = load_microdata(&p, None).unwrap_err().to_string();
        assert!(msg.contains(":3:") && msg.contains("S9"), "{msg}");
    }

    #[test]
    fn non_numeric_ordinal_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_pair(
            dir.path(),
            "record_id,household_serial,role,weight,age\nH1,S1,household,1,\nP1,S1,person,1,old\n",
        );
        let msg = load_microdata(&p, None).unwrap_err().to_string();
        assert!(msg.contains("age") && msg.contains(":3:"), "{msg}");
    }

    #[test]
    fn undeclared_column_and_bad_role() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_pair(dir.path(), "record_id,household_serial,role,weight,shoe\nH1,S1,household,1,9\n");
        assert!(load_microdata(&p, None).unwrap_err().to_string().contains("shoe"));
        let p = write_pair(dir.path(), "record_id,household_serial,role,weight\nH1,S1,house,1\n");
        assert!(load_microdata(&p, None).unwrap_err().to_string().contains("role"));
        let p = write_pair(dir.path(), "record_id,household_serial,role,weight\nH1,S1,household,-1\n");
        assert!(load_microdata(&p, None).is_err());
    }

    #[test]
    fn level_mismatch_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_pair(dir.path(), "record_id,household_serial,role,weight,age\nH1,S1,household,1,40\n");
        assert!(load_microdata(&p, None).unwrap_err().to_string().contains("person-level"));
    }

    #[test]
    fn write_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_pair(
            dir.path(),
            "record_id,household_serial,role,weight,hh_income,tenure,age,sex\n\
             H1,S1,household,1.5,55000.25,\"own, outright\",,\n\
             P1,S1,person,,,,20,f\n\
             H2,S2,household,1,12,rent,,\n\
             P2,S2,person,,,,7,m\nP3,S2,person,3,,,41,\n",
        );
        let t = load_microdata(&p, None).unwrap();
        let out = dir.path().join("again.csv");
        write_microdata(&out, &t).unwrap();
        let again = load_microdata(&out, Some(&dir.path().join("micro.schema.json"))).unwrap();
        assert_eq!(again, t);
    }
}
