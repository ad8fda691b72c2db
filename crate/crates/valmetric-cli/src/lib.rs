//! Command implementations behind the `valmetric` binary, plus the HTTP router.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use valmetric::aggregation::{seed_from_env, AggregationSpec};
use valmetric::catalog;
use valmetric::evaluate::{evaluate, Dataset, Report};
use valmetric::model::{Answer, Domain, Fingerprint};
use valmetric::recommend::{DecisionGraph, MetricPool, Session, TranscriptEntry};
use valmetric::Error;

pub mod server;

/// Process exit code for a library error: 1 computation, 2 input or schema.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Undefined(_) | Error::Computation(_) => 1,
        Error::Invalid(_) | Error::Schema(_) | Error::MissingItems(_) | Error::Incompatible(_) | Error::OutOfFrontier(_) => 2,
    }
}

pub fn read_file(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> Result<T, Error> {
    serde_json::from_str(text).map_err(|e| Error::Schema(format!("{what}: {e}")))
}

/// Parse `DG6.1=DSC` style guide choices.
pub fn parse_guides(raw: &[String]) -> Result<Vec<(String, String)>, Error> {
    raw.iter()
        .map(|g| match g.split_once('=') {
            Some((k, v)) if !k.is_empty() && !v.is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
            _ => Err(Error::invalid(format!("--guide expects ID=OPTION, got {g:?}"))),
        })
        .collect()
}

/// Where the starting answers of `recommend` come from.
pub enum Source {
    Fingerprint(PathBuf),
    Transcript(PathBuf),
    Interactive,
}

/// Final session state of a recommend run.
pub struct Outcome {
    pub session: Session,
    pub pool: MetricPool,
}

/// Build a session from the source, apply guide choices, and produce the pool.
pub fn recommend_cmd(
    source: Source,
    guides: &[(String, String)],
    input: &mut dyn BufRead,
    prompt: &mut dyn Write,
) -> Result<Outcome, Error> {
    let g = DecisionGraph::standard();
    let mut session = match source {
        Source::Fingerprint(p) => {
            let v: serde_json::Value = parse_json("fingerprint", &read_file(&p)?)?;
            Session::with_fingerprint(Fingerprint::from_json(v)?)
        }
        Source::Transcript(p) => {
            let t: Vec<TranscriptEntry> = parse_json("transcript", &read_file(&p)?)?;
            Session::replay(g, &t)?
        }
        Source::Interactive => interactive(g, input, prompt)?,
    };
    if !guides.is_empty() {
        // Missing items take precedence over guide errors.
        session.pool(g)?;
    }
    for (id, opt) in guides {
        session.guide(g, id, opt)?;
    }
    let pool = session.pool(g)?.pool;
    Ok(Outcome { session, pool })
}

/// Parse a typed answer for an item domain from free text.
pub fn parse_answer(domain: Domain, text: &str) -> Result<Answer, Error> {
    let t = text.trim();
    match domain {
        Domain::Bool => match t.to_ascii_lowercase().as_str() {
            "y" | "yes" | "true" | "1" => Ok(Answer::Flag(true)),
            "n" | "no" | "false" | "0" => Ok(Answer::Flag(false)),
            _ => Err(Error::invalid(format!("expected yes or no, got {t:?}"))),
        },
        Domain::Count { min } => match t.parse::<u32>() {
            Ok(n) if n >= min => Ok(Answer::Count(n)),
            _ => Err(Error::invalid(format!("expected an integer >= {min}, got {t:?}"))),
        },
        Domain::Choice { options } => {
            if let Ok(i) = t.parse::<usize>() {
                if (1..=options.len()).contains(&i) {
                    return Ok(Answer::Choice(options[i - 1].into()));
                }
            }
            options
                .iter()
                .find(|o| o.eq_ignore_ascii_case(t))
                .map(|o| Answer::Choice((*o).into()))
                .ok_or_else(|| Error::invalid(format!("expected one of {}, got {t:?}", options.join(", "))))
        }
    }
}

fn read_line(input: &mut dyn BufRead) -> Result<String, Error> {
    let mut line = String::new();
    let n = input.read_line(&mut line).map_err(|e| Error::Computation(format!("stdin: {e}")))?;
    if n == 0 {
        return Err(Error::invalid("input ended before the questionnaire was complete"));
    }
    Ok(line)
}

fn io(e: std::io::Error) -> Error {
    Error::Computation(format!("output: {e}"))
}

/// Ask questions until the traversal completes, then offer each pending guide.
/// Invalid answers are asked again.
fn interactive(g: &DecisionGraph, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<Session, Error> {
    let mut s = Session::new();
    while let Some(q) = s.next_question(g)? {
        writeln!(out, "\n[{}] {}\n  why: {}", q.item, q.prompt, q.why).map_err(io)?;
        match q.domain {
            Domain::Bool => write!(out, "  (y/n) > "),
            Domain::Count { min } => write!(out, "  (integer >= {min}) > "),
            Domain::Choice { options } => {
                for (i, o) in options.iter().enumerate() {
                    writeln!(out, "  {}. {o}", i + 1).map_err(io)?;
                }
                write!(out, "  > ")
            }
        }
        .map_err(io)?;
        out.flush().map_err(io)?;
        let line = read_line(input)?;
        match parse_answer(q.domain, &line).and_then(|a| s.answer(g, &q.item, a)) {
            Ok(()) => {}
            Err(e @ (Error::Invalid(_) | Error::Schema(_))) => writeln!(out, "  ! {e}").map_err(io)?,
            Err(e) => return Err(e),
        }
    }
    loop {
        let pending = s.pending_guides(g)?;
        let Some(guide) = pending.first() else { break };
        writeln!(out, "\n[{}] {}", guide.id, guide.title).map_err(io)?;
        if !guide.note.is_empty() {
            writeln!(out, "  {}", guide.note).map_err(io)?;
        }
        for (i, o) in guide.options.iter().enumerate() {
            writeln!(out, "  {}. {} ({})", i + 1, o.id, o.label).map_err(io)?;
            for p in &o.pros {
                writeln!(out, "       + {p}").map_err(io)?;
            }
            for c in &o.cons {
                writeln!(out, "       - {c}").map_err(io)?;
            }
        }
        write!(out, "  > ").map_err(io)?;
        out.flush().map_err(io)?;
        let line = read_line(input)?;
        let t = line.trim();
        let opt = t
            .parse::<usize>()
            .ok()
            .and_then(|i| guide.options.get(i.wrapping_sub(1)))
            .map(|o| o.id.clone())
            .unwrap_or_else(|| t.to_string());
        if let Err(e) = s.guide(g, &guide.id.clone(), &opt) {
            writeln!(out, "  ! {e}").map_err(io)?;
        }
    }
    Ok(s)
}

/// Human-readable pool summary with cheat-sheet notes.
pub fn summary(pool: &MetricPool) -> String {
    let mut s = format!("Recommended metrics for {} (graph {})\n", pool.category.as_str(), pool.graph_version);
    let mut sections: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for e in &pool.entries {
        let key = serde_json::to_value(e.section).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let mut line = e.metric.clone();
        if let Some(m) = catalog::metric(&e.metric) {
            line = format!("{} ({}): {}", m.id, m.name, m.definition);
        }
        if e.optional {
            line.push_str(" [optional]");
        }
        sections.entry(key).or_default().push(line);
    }
    for (sec, lines) in sections {
        s.push_str(&format!("\n{sec}\n"));
        for l in lines {
            s.push_str(&format!("  - {l}\n"));
        }
    }
    if let Some(d) = &pool.detection {
        s.push_str(&format!("\ndetection: {}\n", serde_json::to_string(d).unwrap_or_default()));
    }
    for g in &pool.pending {
        let opts: Vec<&str> = g.options.iter().map(|o| o.id.as_str()).collect();
        s.push_str(&format!("\npending choice {}: {} [{}] (use --guide {}=<option>)\n", g.id, g.title, opts.join(" | "), g.id));
    }
    if !pool.warnings.is_empty() {
        s.push_str("\nwarnings\n");
        for w in &pool.warnings {
            s.push_str(&format!("  ! {w}\n"));
        }
    }
    s
}

/// Inputs of `evaluate`, already read from disk or a request body.
pub struct EvalInputs {
    pub dataset: Dataset,
    pub pool: MetricPool,
    pub aggregation: AggregationSpec,
}

impl EvalInputs {
    pub fn from_texts(data: &str, pool: &str, agg: Option<&str>) -> Result<Self, Error> {
        let dataset = Dataset::from_json(data)?;
        let pool = MetricPool::from_json(pool)?;
        let aggregation: AggregationSpec = match agg {
            Some(t) => parse_json("aggregation", t)?,
            None => AggregationSpec::default(),
        };
        aggregation.validate()?;
        Ok(Self { dataset, pool, aggregation })
    }

    pub fn run(&self) -> Result<Report, Error> {
        evaluate(&self.dataset, &self.pool, &self.aggregation, seed_from_env())
    }
}

pub fn evaluate_cmd(data: &Path, pool: &Path, agg: Option<&Path>, out: &Path) -> Result<Report, Error> {
    let agg_text = agg.map(read_file).transpose()?;
    let inputs = EvalInputs::from_texts(&read_file(data)?, &read_file(pool)?, agg_text.as_deref())?;
    let report = inputs.run()?;
    report.write(out)?;
    Ok(report)
}

pub fn export_graph() -> String {
    DecisionGraph::standard().to_json()
}
