//! File formats: forum CSVs, trajectory CSVs, summary and plan JSON.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exposure::{PostRecord, Quality, ViewRecord};
use crate::graph::StudentId;
use crate::interventions::Intervention;
use crate::sim::{ReplicaSummary, Trajectory};

pub const POSTS_HEADER: [&str; 5] = ["post_id", "author", "week", "votes", "label"];
pub const VIEWS_HEADER: [&str; 3] = ["viewer", "post_id", "week"];

/// Rounds to `digits` significant digits; `None` keeps full precision.
pub fn round_sig(x: f64, digits: Option<usize>) -> f64 {
    match digits {
        _ if x == 0.0 => 0.0,
        Some(d) if x.is_finite() => {
            let s = format!("{:.*e}", d.saturating_sub(1), x);
            s.parse().unwrap_or(x)
        }
        _ => x,
    }
}

/// Shortest decimal that reads back as `round_sig(x, digits)`.
pub fn fmt_num(x: f64, digits: Option<usize>) -> String {
    let r = round_sig(x, digits);
    if r == 0.0 {
        // no "-0"
        "0".to_string()
    } else {
        r.to_string()
    }
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers()?;
    if header.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::parse(
            1,
            crate::error::ParseErrorKind::Other(format!("expected header {}", expected.join(","))),
        ));
    }
    Ok(())
}

fn reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(source)
}

fn field_err(line: u64, msg: String) -> Error {
    Error::parse(line as usize, crate::error::ParseErrorKind::Other(msg))
}

fn id_field(line: u64, raw: &str) -> Result<StudentId> {
    StudentId::new(raw).map_err(|_| field_err(line, format!("invalid student id {raw:?}")))
}

fn num_field<T: std::str::FromStr>(line: u64, name: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| field_err(line, format!("invalid {name} {raw:?}")))
}

fn token_field(line: u64, name: &str, raw: &str) -> Result<String> {
    if StudentId::is_valid(raw) {
        Ok(raw.to_string())
    } else {
        Err(field_err(line, format!("invalid {name} {raw:?}")))
    }
}

/// Reads `post_id,author,week,votes,label`; `label` is empty, `Good` or `Bad`.
pub fn read_posts<R: Read>(source: R) -> Result<Vec<PostRecord>> {
    let mut rdr = reader(source);
    check_header(&mut rdr, &POSTS_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let label = match &rec[4] {
            "" => None,
            l => Some(l.parse::<Quality>().map_err(|e| field_err(line, e.to_string()))?),
        };
        out.push(PostRecord {
            post_id: token_field(line, "post_id", &rec[0])?,
            author: id_field(line, &rec[1])?,
            week: num_field(line, "week", &rec[2])?,
            votes: num_field(line, "votes", &rec[3])?,
            quality_label: label,
        });
    }
    Ok(out)
}

/// Reads `viewer,post_id,week`.
pub fn read_views<R: Read>(source: R) -> Result<Vec<ViewRecord>> {
    let mut rdr = reader(source);
    check_header(&mut rdr, &VIEWS_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push(ViewRecord {
            viewer: id_field(line, &rec[0])?,
            post_id: token_field(line, "post_id", &rec[1])?,
            week: num_field(line, "week", &rec[2])?,
        });
    }
    Ok(out)
}

pub fn write_posts<W: Write>(posts: &[PostRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(POSTS_HEADER)?;
    for p in posts {
        let label = p.quality_label.map(|q| q.to_string()).unwrap_or_default();
        wtr.write_record([
            p.post_id.as_str(),
            p.author.as_str(),
            &p.week.to_string(),
            &p.votes.to_string(),
            &label,
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_views<W: Write>(views: &[ViewRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(VIEWS_HEADER)?;
    for v in views {
        wtr.write_record([v.viewer.as_str(), v.post_id.as_str(), &v.week.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `week,S,A,R`, one row per recorded week.
pub fn write_trajectory_csv<W: Write>(t: &Trajectory, mut w: W) -> Result<()> {
    writeln!(w, "week,S,A,R")?;
    for c in &t.weekly_counts {
        writeln!(w, "{},{},{},{}", c.week, c.susceptible, c.affected, c.removed)?;
    }
    Ok(())
}

/// `week,student,from,to,cause`; `cause` is empty for seeds and removals.
pub fn write_transitions_csv<W: Write>(t: &Trajectory, mut w: W) -> Result<()> {
    writeln!(w, "week,student,from,to,cause")?;
    for tr in &t.transitions {
        let cause = tr.cause.as_ref().map(StudentId::as_str).unwrap_or("");
        writeln!(w, "{},{},{},{},{}", tr.week, tr.student, tr.from, tr.to, cause)?;
    }
    Ok(())
}

/// The exported subset of a [`ReplicaSummary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryExport {
    pub mean_final_removed: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub extinct_fraction: f64,
    pub replicas: u64,
    pub seed: u64,
}

impl SummaryExport {
    pub fn from_summary(s: &ReplicaSummary, digits: Option<usize>) -> Self {
        Self {
            mean_final_removed: round_sig(s.mean_final_removed, digits),
            q05: round_sig(s.q05, digits),
            q50: round_sig(s.q50, digits),
            q95: round_sig(s.q95, digits),
            extinct_fraction: round_sig(s.extinct_fraction, digits),
            replicas: s.replicas,
            seed: s.seed,
        }
    }
}

pub fn write_summary_json<W: Write>(s: &ReplicaSummary, digits: Option<usize>, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, &SummaryExport::from_summary(s, digits))?;
    writeln!(w)?;
    Ok(())
}

pub fn read_plan<R: Read>(source: R) -> Result<Vec<Intervention>> {
    Ok(serde_json::from_reader(source)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_graph;
    use crate::sim::{run, run_replicas, SimConfig};

    #[test]
    fn rounding() {
        assert_eq!(round_sig(4.0 / 9.0, Some(6)), 0.444444);
        assert_eq!(round_sig(4.0 / 9.0, None), 4.0 / 9.0);
        assert_eq!(fmt_num(0.7, Some(6)), "0.7");
        assert_eq!(fmt_num(1234567.0, Some(6)), "1234570");
        assert_eq!(fmt_num(-0.0, Some(6)), "0");
        assert!(round_sig(-0.0, None).is_sign_positive());
        assert_eq!(fmt_num(0.1 + 0.2, Some(6)), "0.3");
        assert_eq!(fmt_num(0.1 + 0.2, None), "0.30000000000000004");
    }

    #[test]
    fn posts_and_views_parse() {
        let posts = "post_id,author,week,votes,label\np1,alice,0,4,\np2,alice,1,-2,Bad\np3,bob,1,9,Good\n";
        let posts = read_posts(posts.as_bytes()).unwrap();
        assert_eq!(posts.len(), 3);
        assert_eq!(posts[1].votes, -2);
        assert_eq!(posts[1].quality_label, Some(Quality::Bad));
        assert_eq!(posts[0].quality_label, None);

        let mut buf = Vec::new();
        write_posts(&posts, &mut buf).unwrap();
        assert_eq!(read_posts(buf.as_slice()).unwrap(), posts);

        let views = read_views("viewer,post_id,week\ncarol,p1,2\n".as_bytes()).unwrap();
        assert_eq!(views[0].viewer.as_str(), "carol");
        let mut buf = Vec::new();
        write_views(&views, &mut buf).unwrap();
        assert_eq!(read_views(buf.as_slice()).unwrap(), views);
    }

    #[test]
    fn bad_csv_rows() {
        assert!(read_posts("id,author,week,votes,label\n".as_bytes()).is_err());
        let err = read_posts("post_id,author,week,votes,label\np1,a,0,4,\np2,a,x,1,\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(read_posts("post_id,author,week,votes,label\np1,a,0,4,Meh\n".as_bytes()).is_err());
        assert!(read_posts("post_id,author,week,votes,label\np1,a,0\n".as_bytes()).is_err());
        assert!(read_views("viewer,post_id,week\n,p1,0\n".as_bytes()).is_err());
    }

    #[test]
    fn trajectory_exports() {
        let g = parse_graph("a b 1\nb c 1").unwrap();
        let cfg = SimConfig { replicas: 1, ..SimConfig::default() };
        let t = run(&g, &[StudentId::new("a").unwrap()], &cfg).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&t, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "week,S,A,R\n0,2,1,0\n1,1,1,1\n2,0,1,2\n3,0,0,3\n");
        let mut buf = Vec::new();
        write_transitions_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("week,student,from,to,cause\n0,a,S,A,\n1,b,S,A,a\n1,a,A,R,\n"));

        let s = run_replicas(&g, &[StudentId::new("a").unwrap()], &cfg).unwrap();
        let mut buf = Vec::new();
        write_summary_json(&s, Some(6), &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        for key in ["mean_final_removed", "q05", "q50", "q95", "extinct_fraction", "replicas", "seed"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["mean_final_removed"], 3.0);
    }
}
