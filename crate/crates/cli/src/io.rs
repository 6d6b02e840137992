//! CSV ingestion and export of family datasets.
//!
//! Layout: `pedigree.csv` (family_id, member_id, role, child_type),
//! `phenotype.csv` (family_id, member_id, value), `genotype.csv`
//! (family_id, member_id, one column per SNP) and an optional
//! `covariates.csv` shaped like the genotype file. Families are kept in
//! pedigree-file order and members in the order they are listed there.
//! Empty cells and `NA` mark missing values; families with any missing
//! value are dropped and reported.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use csv::{ReaderBuilder, StringRecord, Trim};
use nalgebra::{DMatrix, DVector};
use qevalue::dataset::{Dataset, Family};
use qevalue::pedigree::{ChildType, Member, PedigreeSpec, Role};

use crate::error::{CliError, Result};

pub const PEDIGREE_FILE: &str = "pedigree.csv";
pub const PHENOTYPE_FILE: &str = "phenotype.csv";
pub const GENOTYPE_FILE: &str = "genotype.csv";
pub const COVARIATE_FILE: &str = "covariates.csv";

#[derive(Debug, Clone)]
pub struct DataPaths {
    pub pedigree: PathBuf,
    pub phenotype: PathBuf,
    pub genotype: PathBuf,
    pub covariates: Option<PathBuf>,
}

impl DataPaths {
    /// Standard file names inside `dir`; covariates only if the file exists.
    pub fn in_dir(dir: &Path) -> Self {
        let covariates = dir.join(COVARIATE_FILE);
        Self {
            pedigree: dir.join(PEDIGREE_FILE),
            phenotype: dir.join(PHENOTYPE_FILE),
            genotype: dir.join(GENOTYPE_FILE),
            covariates: covariates.exists().then_some(covariates),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileSummary {
    pub path: PathBuf,
    pub rows: usize,
    pub columns: usize,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    pub files: Vec<FileSummary>,
    /// Families removed because of missing values.
    pub dropped_families: Vec<String>,
}

type Key = (String, String);

struct Table {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<(u64, StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(CliError::io(path))?;
        let mut reader = ReaderBuilder::new().trim(Trim::All).from_reader(file);
        let headers: Vec<String> = reader.headers().map_err(CliError::csv(path))?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(CliError::csv(path))?;
            let line = record.position().map_or(0, |p| p.line());
            rows.push((line, record));
        }
        Ok(Self { path: path.to_path_buf(), headers, rows })
    }

    fn summary(&self) -> FileSummary {
        FileSummary { path: self.path.clone(), rows: self.rows.len(), columns: self.headers.len() }
    }

    fn error(&self, line: u64, column: &str, message: impl Into<String>) -> CliError {
        CliError::Parse { path: self.path.clone(), line, column: column.to_string(), message: message.into() }
    }

    fn require_leading(&self, expected: &[&str]) -> Result<()> {
        for (i, name) in expected.iter().enumerate() {
            if self.headers.get(i).map(String::as_str) != Some(*name) {
                return Err(self.error(1, name, format!("expected column {} to be {name:?}", i + 1)));
            }
        }
        Ok(())
    }

    fn key(&self, line: u64, record: &StringRecord) -> Result<Key> {
        let family = record.get(0).unwrap_or_default();
        let member = record.get(1).unwrap_or_default();
        if family.is_empty() {
            return Err(self.error(line, "family_id", "empty family id"));
        }
        if member.is_empty() {
            return Err(self.error(line, "member_id", "empty member id"));
        }
        Ok((family.to_string(), member.to_string()))
    }

    /// `(family, member) → values` for the columns after the two id columns.
    fn keyed_values(&self, parse: impl Fn(&str) -> std::result::Result<f64, String>) -> Result<HashMap<Key, (u64, Vec<Option<f64>>)>> {
        let width = self.headers.len();
        let mut out = HashMap::with_capacity(self.rows.len());
        for (line, record) in &self.rows {
            if record.len() != width {
                return Err(self.error(*line, "", format!("expected {width} fields, found {}", record.len())));
            }
            let key = self.key(*line, record)?;
            let values = record
                .iter()
                .enumerate()
                .skip(2)
                .map(|(c, cell)| {
                    if is_missing(cell) {
                        Ok(None)
                    } else {
                        parse(cell).map(Some).map_err(|m| self.error(*line, &self.headers[c], m))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            if out.insert(key.clone(), (*line, values)).is_some() {
                return Err(self.error(*line, "member_id", format!("duplicate row for member {} of family {}", key.1, key.0)));
            }
        }
        Ok(out)
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("NA")
}

fn parse_number(cell: &str) -> std::result::Result<f64, String> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("{cell:?} is not a finite number")),
    }
}

fn parse_genotype(cell: &str) -> std::result::Result<f64, String> {
    let v = parse_number(cell)?;
    if v == 0.0 || v == 1.0 || v == 2.0 {
        Ok(v)
    } else {
        Err(format!("genotype {cell} outside {{0, 1, 2}}"))
    }
}

fn read_pedigrees(table: &Table) -> Result<Vec<(String, Vec<Member>)>> {
    table.require_leading(&["family_id", "member_id", "role", "child_type"])?;
    let mut order: Vec<(String, Vec<Member>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (line, record) in &table.rows {
        let (family, member) = table.key(*line, record)?;
        let role_cell = record.get(2).unwrap_or_default();
        let type_cell = record.get(3).unwrap_or_default();
        let role = match role_cell.to_ascii_lowercase().as_str() {
            "parent" => Role::Parent,
            "child" => {
                let ct: ChildType = type_cell
                    .parse()
                    .map_err(|_| table.error(*line, "child_type", format!("unknown child type {type_cell:?}")))?;
                Role::Child(ct)
            }
            _ => return Err(table.error(*line, "role", format!("role {role_cell:?} is neither parent nor child"))),
        };
        let slot = *index.entry(family.clone()).or_insert_with(|| {
            order.push((family.clone(), Vec::new()));
            order.len() - 1
        });
        let members = &mut order[slot].1;
        if members.iter().any(|m| m.id == member) {
            return Err(table.error(*line, "member_id", format!("member {member} listed twice in family {family}")));
        }
        members.push(Member { id: member, role });
    }
    Ok(order)
}

/// Read and cross-check the input files.
pub fn ingest(paths: &DataPaths) -> Result<Ingested> {
    let ped_table = Table::read(&paths.pedigree)?;
    let pheno_table = Table::read(&paths.phenotype)?;
    let geno_table = Table::read(&paths.genotype)?;
    let cov_table = paths.covariates.as_deref().map(Table::read).transpose()?;

    let pedigrees = read_pedigrees(&ped_table)?;
    pheno_table.require_leading(&["family_id", "member_id", "value"])?;
    if pheno_table.headers.len() != 3 {
        return Err(pheno_table.error(1, "", "phenotype file must have exactly three columns"));
    }
    geno_table.require_leading(&["family_id", "member_id"])?;
    let pheno = pheno_table.keyed_values(parse_number)?;
    let geno = geno_table.keyed_values(parse_genotype)?;
    let snp_ids: Vec<String> = geno_table.headers[2..].to_vec();
    let (cov, covariate_ids) = match &cov_table {
        Some(t) => {
            t.require_leading(&["family_id", "member_id"])?;
            (Some(t.keyed_values(parse_number)?), t.headers[2..].to_vec())
        }
        None => (None, Vec::new()),
    };

    let known: HashMap<Key, ()> = pedigrees
        .iter()
        .flat_map(|(f, ms)| ms.iter().map(move |m| ((f.clone(), m.id.clone()), ())))
        .collect();
    let mut tables: Vec<(&Table, &HashMap<Key, (u64, Vec<Option<f64>>)>)> = vec![(&pheno_table, &pheno), (&geno_table, &geno)];
    if let (Some(t), Some(c)) = (&cov_table, &cov) {
        tables.push((t, c));
    }
    for (table, values) in &tables {
        let mut stray: Vec<(u64, &Key)> = values.iter().filter(|(k, _)| !known.contains_key(*k)).map(|(k, (l, _))| (*l, k)).collect();
        stray.sort();
        if let Some((line, (f, m))) = stray.first() {
            return Err(table.error(*line, "member_id", format!("member {m} of family {f} is not in the pedigree file")));
        }
    }

    let p_g = snp_ids.len();
    let p = covariate_ids.len();
    let mut families = Vec::with_capacity(pedigrees.len());
    let mut dropped = Vec::new();
    for (family_id, members) in pedigrees {
        let n = members.len();
        let lookup = |table: &Table, values: &HashMap<Key, (u64, Vec<Option<f64>>)>, member: &str| -> Result<Vec<Option<f64>>> {
            values
                .get(&(family_id.clone(), member.to_string()))
                .map(|(_, v)| v.clone())
                .ok_or_else(|| {
                    CliError::Validation(format!(
                        "{}: no row for member {member} of family {family_id}",
                        table.path.display()
                    ))
                })
        };
        let mut y = Vec::with_capacity(n);
        let mut g = Vec::with_capacity(n * p_g);
        let mut c = Vec::with_capacity(n * p);
        for m in &members {
            y.extend(lookup(&pheno_table, &pheno, &m.id)?);
            g.extend(lookup(&geno_table, &geno, &m.id)?);
            if let (Some(t), Some(values)) = (&cov_table, &cov) {
                c.extend(lookup(t, values, &m.id)?);
            }
        }
        let complete = |v: &[Option<f64>]| v.iter().all(Option::is_some);
        if !(complete(&y) && complete(&g) && complete(&c)) {
            dropped.push(family_id);
            continue;
        }
        let unwrap = |v: Vec<Option<f64>>| v.into_iter().map(Option::unwrap).collect::<Vec<f64>>();
        let pedigree = PedigreeSpec::new(family_id, members)?;
        families.push(Family {
            pedigree,
            phenotype: DVector::from_vec(unwrap(y)),
            genotypes: DMatrix::from_row_slice(n, p_g, &unwrap(g)),
            covariates: DMatrix::from_row_slice(n, p, &unwrap(c)),
        });
    }
    let mut files = vec![ped_table.summary(), pheno_table.summary(), geno_table.summary()];
    if let Some(t) = &cov_table {
        files.push(t.summary());
    }
    let dataset = Dataset::new(families, snp_ids, covariate_ids)?;
    Ok(Ingested { dataset, files, dropped_families: dropped })
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(CliError::io(path))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_matrix(path: &Path, ds: &Dataset, ids: &[String], pick: impl Fn(&Family) -> &DMatrix<f64>) -> Result<()> {
    let mut w = create(path)?;
    let header: Vec<&str> = ["family_id", "member_id"].into_iter().chain(ids.iter().map(String::as_str)).collect();
    w.write_record(&header).map_err(CliError::csv(path))?;
    for fam in ds.families() {
        let m = pick(fam);
        for (r, member) in fam.pedigree.members().iter().enumerate() {
            let mut row = vec![fam.pedigree.family_id().to_string(), member.id.clone()];
            row.extend(m.row(r).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(CliError::csv(path))?;
        }
    }
    w.flush().map_err(CliError::io(path))
}

/// Write `ds` in the ingest layout; returns the paths written.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<DataPaths> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let paths = DataPaths {
        pedigree: dir.join(PEDIGREE_FILE),
        phenotype: dir.join(PHENOTYPE_FILE),
        genotype: dir.join(GENOTYPE_FILE),
        covariates: (ds.p_cov() > 0).then(|| dir.join(COVARIATE_FILE)),
    };

    let mut w = create(&paths.pedigree)?;
    w.write_record(["family_id", "member_id", "role", "child_type"]).map_err(CliError::csv(&paths.pedigree))?;
    for fam in ds.families() {
        for m in fam.pedigree.members() {
            let (role, ct) = match m.role {
                Role::Parent => ("parent", String::new()),
                Role::Child(ct) => ("child", ct.to_string()),
            };
            w.write_record([fam.pedigree.family_id(), &m.id, role, &ct]).map_err(CliError::csv(&paths.pedigree))?;
        }
    }
    w.flush().map_err(CliError::io(&paths.pedigree))?;

    let mut w = create(&paths.phenotype)?;
    w.write_record(["family_id", "member_id", "value"]).map_err(CliError::csv(&paths.phenotype))?;
    for fam in ds.families() {
        for (m, y) in fam.pedigree.members().iter().zip(fam.phenotype.iter()) {
            w.write_record([fam.pedigree.family_id(), &m.id, &y.to_string()]).map_err(CliError::csv(&paths.phenotype))?;
        }
    }
    w.flush().map_err(CliError::io(&paths.phenotype))?;

    write_matrix(&paths.genotype, ds, ds.snp_ids(), |f| &f.genotypes)?;
    if let Some(path) = &paths.covariates {
        write_matrix(path, ds, ds.covariate_ids(), |f| &f.covariates)?;
    }
    Ok(paths)
}

/// Optional `snp_id,position` map; positions are passed through verbatim.
pub fn read_snp_map(path: &Path) -> Result<HashMap<String, String>> {
    let table = Table::read(path)?;
    table.require_leading(&["snp_id", "position"])?;
    let mut map = HashMap::new();
    for (line, record) in &table.rows {
        let id = record.get(0).unwrap_or_default();
        if id.is_empty() {
            return Err(table.error(*line, "snp_id", "empty SNP id"));
        }
        if map.insert(id.to_string(), record.get(1).unwrap_or_default().to_string()).is_some() {
            return Err(table.error(*line, "snp_id", format!("SNP {id} listed twice")));
        }
    }
    Ok(map)
}

/// Write a text file in one call.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(CliError::io(path))?;
    f.write_all(text.as_bytes()).map_err(CliError::io(path))
}
