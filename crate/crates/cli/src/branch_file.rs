//! Reading start rows back from branch files written by `eq-continue` or
//! `lc-continue` (CSV or JSON).

use anyhow::{anyhow, bail, Context, Result};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    /// Point index, or an event tag such as `H` or `PD`.
    pub tag: String,
    pub param: f64,
    pub period: Option<f64>,
    pub state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchFile {
    pub param_name: String,
    pub cycle: bool,
    pub rows: Vec<Row>,
}

impl BranchFile {
    pub fn parse(text: &str, labels: &[String]) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            parse_json(text, labels)
        } else {
            parse_csv(text, labels)
        }
    }

    /// The `occurrence`-th row (from 1) tagged `tag`.
    pub fn find(&self, tag: &str, occurrence: usize) -> Option<&Row> {
        self.rows
            .iter()
            .filter(|r| r.tag == tag)
            .nth(occurrence.checked_sub(1)?)
    }
}

fn parse_csv(text: &str, labels: &[String]) -> Result<BranchFile> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| anyhow!("empty branch file"))?
        .split(',')
        .map(str::trim)
        .collect();
    if header.len() < 2 || header[0] != "index" {
        bail!("not a branch file: the header must start with `index,<parameter>`");
    }
    let column = |name: &str| header.iter().position(|h| *h == name);
    let state_cols = labels
        .iter()
        .map(|l| column(l).ok_or_else(|| anyhow!("branch file has no column `{l}` of this model")))
        .collect::<Result<Vec<_>>>()?;
    let period_col = column("period");
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != header.len() {
            bail!("row {}: expected {} fields, found {}", n + 2, header.len(), fields.len());
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .with_context(|| format!("row {}: `{}` is not a number", n + 2, fields[i]))
        };
        rows.push(Row {
            tag: fields[0].to_string(),
            param: num(1)?,
            period: period_col.map(num).transpose()?,
            state: state_cols.iter().map(|&c| num(c)).collect::<Result<_>>()?,
        });
    }
    Ok(BranchFile {
        param_name: header[1].to_string(),
        cycle: period_col.is_some(),
        rows,
    })
}

fn parse_json(text: &str, labels: &[String]) -> Result<BranchFile> {
    let v: Value = serde_json::from_str(text).context("invalid branch JSON")?;
    let file_labels: Vec<String> = serde_json::from_value(v["labels"].clone())
        .context("branch JSON needs a `labels` array")?;
    if file_labels != labels {
        bail!("branch file labels do not match this model");
    }
    let param_name = v["parameter"]
        .as_str()
        .ok_or_else(|| anyhow!("branch JSON needs a `parameter` name"))?
        .to_string();
    let cycle = v["kind"] == "limit_cycle";
    let row = |tag: String, r: &Value| -> Result<Row> {
        Ok(Row {
            tag,
            param: r["param"].as_f64().ok_or_else(|| anyhow!("row without `param`"))?,
            period: r["period"].as_f64(),
            state: serde_json::from_value(r["state"].clone()).context("row without `state`")?,
        })
    };
    let mut rows = Vec::new();
    for (i, p) in v["points"].as_array().into_iter().flatten().enumerate() {
        rows.push(row(i.to_string(), p)?);
    }
    for e in v["events"].as_array().into_iter().flatten() {
        let tag = e["type"].as_str().ok_or_else(|| anyhow!("event without `type`"))?;
        rows.push(row(tag.to_string(), e)?);
    }
    Ok(BranchFile {
        param_name,
        cycle,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> Vec<String> {
        vec!["x".into(), "x_aux01".into()]
    }

    #[test]
    fn reads_equilibrium_csv() {
        let csv = "index,tau,x,x_aux01,n_unstable,psi_fold,psi_hopf,psi_bp\n\
                   0,5.0e-1,1.0e0,1.0e0,0,1,1,1\n\
                   H,1.2e0,1.0e0,1.0e0,0,1,0,1\n";
        let b = BranchFile::parse(csv, &labels()).unwrap();
        assert_eq!(b.param_name, "tau");
        assert!(!b.cycle);
        let h = b.find("H", 1).unwrap();
        assert_eq!((h.param, h.period), (1.2, None));
        assert_eq!(h.state, vec![1.0, 1.0]);
        assert!(b.find("H", 2).is_none());
        assert!(b.find("H", 0).is_none());
    }

    #[test]
    fn reads_cycle_csv_and_rejects_foreign_labels() {
        let csv = "index,tau,period,n_unstable_multipliers,psi_pd,psi_lpc,x,x_aux01\n\
                   PD,3.5e0,6.0e0,0,0,1,2.0e0,3.0e0\n";
        let b = BranchFile::parse(csv, &labels()).unwrap();
        assert!(b.cycle);
        let pd = b.find("PD", 1).unwrap();
        assert_eq!(pd.period, Some(6.0));
        assert_eq!(pd.state, vec![2.0, 3.0]);
        assert!(BranchFile::parse(csv, &["y".to_string()]).is_err());
    }

    #[test]
    fn reads_json() {
        let json = r#"{"kind":"equilibrium","parameter":"tau","labels":["x","x_aux01"],
            "points":[{"param":0.5,"state":[1.0,1.0]}],
            "events":[{"type":"H","param":1.2,"state":[1.0,1.0]}]}"#;
        let b = BranchFile::parse(json, &labels()).unwrap();
        assert_eq!(b.find("0", 1).unwrap().param, 0.5);
        assert_eq!(b.find("H", 1).unwrap().param, 1.2);
    }
}
