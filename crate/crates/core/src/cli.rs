//! `escher` command line. [`run`] is the whole program minus process exit so
//! tests can drive it with in-memory streams.
//!
//! Exit codes: 0 success, 1 domain error (error name first on stderr),
//! 2 usage or IO error.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::converter::ConverterRegistry;
use crate::per::{history_from_repository, parse_histories, report, EvolutionHistory};
use crate::release::store::{self, HandlerWrite, ProjectLock, StoreError, Stored};
use crate::release::{register_transformer, release, ClassChange, Repository};
use crate::runtime::{
    deserialize, eval_invariant, retrieve, serialize, InputMap, InvariantOutcome,
    RetrieveOptions, RuntimeError,
};
use crate::schema::{parse_schema, render_schema, ClassSchema};
use crate::smo::diff_schemas;
use crate::transformer::{generate_transformer, parse_transformer, render_transformer};
use crate::value::parse_value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Text,
    Machine,
}

#[derive(Debug, Parser)]
#[command(name = "escher", version, about = "Schema evolution for persistent objects")]
pub struct Cli {
    /// Project directory holding escher.manifest.
    #[arg(long, global = true, default_value = ".")]
    pub project: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Skip invariant and attachment checks during migration.
    #[arg(long, global = true)]
    pub no_assert: bool,
    /// Only use a transformer registered for the exact version pair.
    #[arg(long, global = true)]
    pub strict_direct: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a class schema and print its canonical form.
    Parse { file: PathBuf },
    /// List the schema modification operators between two versions.
    Diff { old: PathBuf, new: PathBuf },
    /// Generate an object transformer between two schema versions.
    Gen {
        old: PathBuf,
        new: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Release a working set of `.esc` files into the project.
    Release { working_dir: PathBuf },
    /// Register a hand-written transformer in the project.
    Register {
        file: PathBuf,
        #[arg(long)]
        overwrite: bool,
    },
    /// Migrate an object file to the versions of a release or explicit targets.
    Migrate {
        objects: PathBuf,
        #[arg(long, conflicts_with = "to")]
        to_release: Option<u32>,
        /// CLASS=VERSION
        #[arg(long, value_name = "CLASS=VERSION")]
        to: Vec<String>,
        /// CLASS.attr=VALUE, VALUE in object file literal syntax.
        #[arg(long, value_name = "CLASS.ATTR=VALUE", num_args = 1..)]
        inputs: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute PER from a history file, or for every class in the project.
    Per { hist: Option<PathBuf> },
    /// Check the objects of a class against its schema's invariant.
    Check { objects: PathBuf, schema: PathBuf },
}

enum Failure {
    Domain(String),
    Usage(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Domain(_) => 1,
            Failure::Usage(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Domain(m) | Failure::Usage(m) => m,
        }
    }
}

fn domain(e: impl ToString) -> Failure {
    Failure::Domain(e.to_string())
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        if e.is_io() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Domain(e.to_string())
        }
    }
}

impl From<RuntimeError> for Failure {
    fn from(e: RuntimeError) -> Self {
        domain(e)
    }
}

type CmdResult = Result<(), Failure>;

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "{}", f.message());
            f.code()
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("IoError {}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| Failure::Usage(format!("IoError {}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, text: &str) -> CmdResult {
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::Usage(format!("IoError <stdout>: {e}")))
}

fn load_schema(path: &Path) -> Result<ClassSchema, Failure> {
    parse_schema(&read(path)?).map_err(domain)
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let registry = ConverterRegistry::builtins();
    match &cli.command {
        Command::Parse { file } => emit(out, &render_schema(&load_schema(file)?)),
        Command::Diff { old, new } => {
            let t = diff_schemas(&load_schema(old)?, &load_schema(new)?).map_err(domain)?;
            emit(out, &t.report())
        }
        Command::Gen { old, new, out: dest } => {
            let t = diff_schemas(&load_schema(old)?, &load_schema(new)?).map_err(domain)?;
            let generated = generate_transformer(&t, &registry);
            if cli.format == Format::Text {
                for w in generated.warnings() {
                    let _ = writeln!(err, "warning: {w}");
                }
            }
            let text = render_transformer(&generated);
            match dest {
                Some(p) => write_file(p, &text),
                None => emit(out, &text),
            }
        }
        Command::Release { working_dir } => cmd_release(cli, working_dir, &registry, out),
        Command::Register { file, overwrite } => {
            let t = parse_transformer(&read(file)?, &registry).map_err(domain)?;
            let _lock = ProjectLock::acquire(&cli.project)?;
            let previous = store::load(&cli.project, &registry)?;
            let key = (t.class_name.clone(), t.from_version, t.to_version);
            let repo = register_transformer(&previous.repo, t, *overwrite).map_err(domain)?;
            store::save(&cli.project, &previous, &repo, &BTreeSet::from([key.clone()]))?;
            emit(out, &format!("registered {} {} {}\n", key.0, key.1, key.2))
        }
        Command::Migrate {
            objects,
            to_release,
            to,
            inputs,
            out: dest,
        } => {
            let stored = store::load(&cli.project, &registry)?;
            let graph = deserialize(&read(objects)?)?;
            let targets = resolve_targets(&stored.repo, *to_release, to)?;
            let inputs = parse_inputs(inputs)?;
            let options = RetrieveOptions {
                check_assertions: !cli.no_assert,
                allow_composition: !cli.strict_direct,
            };
            let migrated = retrieve(&graph, &stored.repo, &targets, &inputs, &registry, options)?;
            if cli.format == Format::Text {
                for w in &migrated.warnings {
                    let _ = writeln!(err, "warning: {w}");
                }
            }
            let text = serialize(&migrated.graph);
            match dest {
                Some(p) => write_file(p, &text),
                None => emit(out, &text),
            }
        }
        Command::Per { hist } => {
            let histories: Vec<EvolutionHistory> = match hist {
                Some(p) => parse_histories(&read(p)?).map_err(domain)?,
                None => {
                    let repo = store::load(&cli.project, &registry)?.repo;
                    repo.classes()
                        .into_iter()
                        .map(|c| history_from_repository(&repo, c))
                        .collect::<Result<_, _>>()
                        .map_err(domain)?
                }
            };
            if cli.format == Format::Text {
                for h in histories.iter().filter(|h| h.versions == 1) {
                    let _ = writeln!(err, "note: {} has a single version; PER taken as 1", h.class_name);
                }
            }
            emit(out, &report(&histories).map_err(domain)?)
        }
        Command::Check { objects, schema } => {
            let schema = load_schema(schema)?;
            let graph = deserialize(&read(objects)?)?;
            let mut lines = String::new();
            let mut checked = 0;
            for r in graph.records.iter().filter(|r| r.class_name == schema.name) {
                if r.version != schema.version {
                    return Err(domain(RuntimeError::RecordMismatch(format!(
                        "object {} is {} version {}, schema is version {}",
                        r.id, r.class_name, r.version, schema.version
                    ))));
                }
                if let InvariantOutcome::Fail(tag) = eval_invariant(r, &schema)? {
                    return Err(domain(RuntimeError::InvariantViolation {
                        class: schema.name.clone(),
                        id: r.id,
                        tag,
                    }));
                }
                lines.push_str(&format!("ok {} {}\n", schema.name, r.id));
                checked += 1;
            }
            match cli.format {
                Format::Machine => emit(out, &lines),
                Format::Text => emit(
                    out,
                    &format!("{checked} {} object(s) satisfy the invariant\n", schema.name),
                ),
            }
        }
    }
}

fn resolve_targets(
    repo: &Repository,
    to_release: Option<u32>,
    to: &[String],
) -> Result<BTreeMap<String, u32>, Failure> {
    if !to.is_empty() {
        let mut targets = BTreeMap::new();
        for arg in to {
            let (class, v) = arg
                .split_once('=')
                .ok_or_else(|| Failure::Usage(format!("--to expects CLASS=VERSION, got `{arg}`")))?;
            let v: u32 = v
                .parse()
                .map_err(|_| Failure::Usage(format!("bad version in `{arg}`")))?;
            targets.insert(class.to_string(), v);
        }
        return Ok(targets);
    }
    let release = match to_release {
        Some(n) => repo
            .release(n)
            .ok_or_else(|| domain(format!("UnknownRelease {n}")))?,
        None => repo
            .latest_release()
            .ok_or_else(|| domain("UnknownRelease (project has no releases)"))?,
    };
    Ok(release
        .schemas
        .iter()
        .map(|(c, s)| (c.clone(), s.version))
        .collect())
}

fn parse_inputs(args: &[String]) -> Result<InputMap, Failure> {
    let mut map = InputMap::new();
    for arg in args {
        let bad = || Failure::Usage(format!("--inputs expects CLASS.attr=VALUE, got `{arg}`"));
        let (key, value) = arg.split_once('=').ok_or_else(bad)?;
        let (class, attr) = key.split_once('.').ok_or_else(bad)?;
        let value = parse_value(value).map_err(|e| Failure::Usage(format!("bad value in `{arg}`: {e}")))?;
        map.insert((class.to_string(), attr.to_string()), value);
    }
    Ok(map)
}

/// Rewrites (or inserts) the `version` header of a schema source, keeping
/// everything else byte for byte.
pub fn set_version_header(source: &str, version: u32) -> String {
    let mut lines: Vec<String> = source.lines().map(str::to_string).collect();
    let header = format!("version {version}");
    let first = lines.iter().position(|l| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with("--")
    });
    match first {
        Some(i) if lines[i].trim_start().starts_with("version") => {
            let line = &lines[i];
            let indent = &line[..line.len() - line.trim_start().len()];
            let rest = line.trim_start()["version".len()..].trim_start();
            let tail = rest.trim_start_matches(|c: char| c.is_ascii_digit());
            lines[i] = format!("{indent}{header}{tail}");
        }
        _ => lines.insert(0, header),
    }
    let mut out = lines.join("\n");
    if source.ends_with('\n') || source.is_empty() {
        out.push('\n');
    }
    out
}

fn cmd_release(
    cli: &Cli,
    working_dir: &Path,
    registry: &ConverterRegistry,
    out: &mut dyn Write,
) -> CmdResult {
    let mut sources: BTreeMap<String, (PathBuf, String)> = BTreeMap::new();
    let mut working_set = BTreeMap::new();
    let entries = fs::read_dir(working_dir)
        .map_err(|e| Failure::Usage(format!("IoError {}: {e}", working_dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "esc"))
        .collect();
    paths.sort();
    for path in paths {
        let src = read(&path)?;
        let schema = parse_schema(&src).map_err(|e| domain(format!("{e} ({})", path.display())))?;
        if working_set.contains_key(&schema.name) {
            return Err(domain(format!("DuplicateClass {}", schema.name)));
        }
        sources.insert(schema.name.clone(), (path, src));
        working_set.insert(schema.name.clone(), schema);
    }

    fs::create_dir_all(&cli.project)
        .map_err(|e| Failure::Usage(format!("IoError {}: {e}", cli.project.display())))?;
    let _lock = ProjectLock::acquire(&cli.project)?;
    let previous = if store::is_project(&cli.project) {
        store::load(&cli.project, registry)?
    } else {
        let name = fs::canonicalize(&cli.project)
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "project".into());
        Stored {
            repo: Repository::new(name),
            digests: BTreeMap::new(),
        }
    };
    let outcome = release(&previous.repo, &working_set, registry).map_err(domain)?;
    let Some(number) = outcome.release_number else {
        return emit(out, "no-op\n");
    };
    let (_, writes) = store::save(&cli.project, &previous, &outcome.repo, &BTreeSet::new())?;

    // Keep the developer's working copies in step with the released tags.
    for (class, schema) in &outcome.repo.release(number).expect("new release").schemas {
        let (path, src) = &sources[class];
        if working_set[class].version != schema.version {
            write_file(path, &set_version_header(src, schema.version))?;
        }
    }

    let mut text = String::new();
    let machine = cli.format == Format::Machine;
    text.push_str(&format!("release {number}\n"));
    for change in &outcome.changes {
        let line = match (change, machine) {
            (ClassChange::Unchanged { class, version }, true) => format!("unchanged {class} {version}"),
            (ClassChange::Changed { class, from, to }, true) => format!("changed {class} {from} {to}"),
            (ClassChange::Added { class }, true) => format!("added {class} 1"),
            (ClassChange::Dropped { class, version }, true) => format!("dropped {class} {version}"),
            (ClassChange::Unchanged { class, version }, false) => {
                format!("  {class} unchanged at version {version}")
            }
            (ClassChange::Changed { class, from, to }, false) => {
                format!("  {class} changed: version {from} -> {to}")
            }
            (ClassChange::Added { class }, false) => format!("  {class} added at version 1"),
            (ClassChange::Dropped { class, version }, false) => {
                format!("  {class} dropped (last version {version})")
            }
        };
        text.push_str(&line);
        text.push('\n');
    }
    for (class, from, to) in &outcome.stubs {
        let kept = writes.contains(&HandlerWrite::KeptUserFile(class.clone(), *from, *to));
        let line = match (kept, machine) {
            (false, true) => format!("stub {class} {from} {to}"),
            (true, true) => format!("kept {class} {from} {to}"),
            (false, false) => format!("  generated transformer {class} {from} -> {to}"),
            (true, false) => format!("  kept hand-edited transformer {class} {from} -> {to}"),
        };
        text.push_str(&line);
        text.push('\n');
    }
    emit(out, &text)
}
