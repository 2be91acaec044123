//! Command-line front end. Most subcommands talk to a running gateway;
//! `up` starts one and `demo` runs the headless demo in-process.
//!
//! Exit codes: 0 on success, 1 for domain or connection errors, 2 for
//! usage errors.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use reqwest::blocking::{Client, RequestBuilder};
use serde_json::{json, Value};
use thiserror::Error;

use crate::agent::AgentListener;
use crate::gateway::{Gateway, GatewayConfig};
use crate::scenario::{prepare, run_headless, Scenario};
use crate::service::{CellService, ServiceConfig};
use crate::skills::SkillStore;

#[derive(Debug, Parser)]
#[command(name = "reconcell", version, about = "Simulated reconfigurable robot workcell")]
pub struct Cli {
    /// Gateway base URL.
    #[arg(long, global = true, env = "RECONCELL_URL", default_value = "http://127.0.0.1:8080")]
    pub url: String,
    /// Print raw JSON documents.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bring up a cell from a scenario and serve it.
    Up(UpArgs),
    /// List modules.
    Cell,
    #[command(subcommand)]
    Module(ModuleCmd),
    #[command(subcommand)]
    Skills(SkillsCmd),
    #[command(subcommand)]
    Teach(TeachCmd),
    #[command(subcommand)]
    Seq(SeqCmd),
    /// Advance a manually clocked cell.
    Advance { seconds: f64 },
    /// Run the demo scenario headless, in-process.
    Demo {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Persist skills here instead of in memory.
        #[arg(long)]
        store: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct UpArgs {
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Simulated seconds per wall second; 0 for a manual clock.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    /// Accept module agents on this address.
    #[arg(long)]
    pub agents: Option<SocketAddr>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Serve these files under `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Play the scenario's teach steps and compile its run sequence
    /// before serving.
    #[arg(long)]
    pub prepare: bool,
}

#[derive(Debug, Subcommand)]
pub enum ModuleCmd {
    /// Attach a simulated module from a JSON spec file.
    Attach { spec: PathBuf },
    Detach { module: String },
    Show { module: String },
    /// Send a command and print its result.
    Cmd {
        module: String,
        verb: String,
        /// Parameters as a JSON object.
        #[arg(default_value = "{}")]
        params: String,
        /// Wait up to this many seconds for the result.
        #[arg(long, default_value_t = 30.0)]
        wait: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum SkillsCmd {
    Ls {
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        tag: Option<String>,
    },
    Show {
        name: String,
        #[arg(long)]
        version: Option<u32>,
    },
    /// Store a skill from a JSON file with `kind`, `payload` and `meta`.
    Put { name: String, file: PathBuf },
    Rm { name: String },
    History { name: String },
}

#[derive(Debug, Subcommand)]
pub enum TeachCmd {
    /// Record a demonstration and save it as a skill. Without `--tape`
    /// recording runs until Enter is pressed or `--seconds` elapse.
    Record {
        #[arg(long)]
        robot: String,
        #[arg(long)]
        save: String,
        /// Scripted stick and drag input to play while recording.
        #[arg(long)]
        tape: Option<PathBuf>,
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long)]
        seconds: Option<f64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum SeqCmd {
    /// Compile a sequence file.
    Compile {
        file: PathBuf,
        #[arg(long = "arg", value_parser = parse_kv)]
        args: Vec<(String, String)>,
    },
    Ls,
    Listing { name: String },
    Dot { name: String },
    Validate { name: String },
    /// Start a run and follow it to the end.
    Run {
        name: String,
        /// Compile this file first.
        #[arg(long)]
        file: Option<PathBuf>,
        #[arg(long = "arg", value_parser = parse_kv)]
        args: Vec<(String, String)>,
        #[arg(long, default_value_t = 600.0)]
        timeout: f64,
    },
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected key=value, got '{s}'"))
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{code}: {detail}")]
    Api { status: u16, code: String, detail: String, body: Value },
    #[error("cannot reach gateway: {0}")]
    Transport(String),
    #[error("{0}")]
    Failed(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Blocking client for the /v1 API.
pub struct Api {
    base: String,
    http: Client,
}

impl Api {
    pub fn new(base: &str) -> Api {
        Api {
            base: format!("{}/v1", base.trim_end_matches('/')),
            http: Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .expect("http client"),
        }
    }

    fn send(&self, req: RequestBuilder) -> CliResult<reqwest::blocking::Response> {
        let resp = req.send().map_err(|e| CliError::Transport(e.to_string()))?;
        if resp.status().is_success() {
            return Ok(resp);
        }
        let status = resp.status().as_u16();
        let body: Value = resp.json().unwrap_or(Value::Null);
        Err(CliError::Api {
            status,
            code: body["error"].as_str().unwrap_or("HttpError").to_string(),
            detail: body["detail"].as_str().unwrap_or("").to_string(),
            body,
        })
    }

    fn json(&self, req: RequestBuilder) -> CliResult<Value> {
        self.send(req)?.json().map_err(|e| CliError::Transport(e.to_string()))
    }

    pub fn get(&self, path: &str) -> CliResult<Value> {
        self.json(self.http.get(format!("{}{path}", self.base)))
    }

    pub fn get_text(&self, path: &str) -> CliResult<String> {
        self.send(self.http.get(format!("{}{path}", self.base)))?
            .text()
            .map_err(|e| CliError::Transport(e.to_string()))
    }

    pub fn post(&self, path: &str, body: &Value) -> CliResult<Value> {
        self.json(self.http.post(format!("{}{path}", self.base)).json(body))
    }

    pub fn put(&self, path: &str, body: &Value) -> CliResult<Value> {
        self.json(self.http.put(format!("{}{path}", self.base)).json(body))
    }

    pub fn delete(&self, path: &str) -> CliResult<Value> {
        self.json(self.http.delete(format!("{}{path}", self.base)))
    }
}

fn read_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_doc(out: &mut dyn Write, v: &Value) {
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(v).expect("json"));
}

/// Parses `args` and runs the command, writing to `out`. Returns the exit
/// code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            if cli.json {
                let body = match &e {
                    CliError::Api { body, .. } if body.is_object() => body.clone(),
                    _ => json!({"error": "CliError", "detail": e.to_string()}),
                };
                let _ = writeln!(err, "{body}");
            } else {
                let _ = writeln!(err, "error: {e}");
                if let CliError::Api { body, .. } = &e {
                    if let Some(findings) = body["report"]["findings"].as_array() {
                        for f in findings {
                            let _ = writeln!(err, "  {}", finding_line(f));
                        }
                    }
                }
            }
            e.exit_code()
        }
    }
}

fn finding_line(f: &Value) -> String {
    let mut parts = vec![f["severity"].as_str().unwrap_or("?").to_string()];
    if let Some(s) = f["state"].as_str() {
        parts.push(format!("[{s}]"));
    }
    parts.push(format!("{}: {}", f["kind"].as_str().unwrap_or(""), f["detail"].as_str().unwrap_or("")));
    parts.join(" ")
}

fn execute(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    let api = Api::new(&cli.url);
    let json = cli.json;
    match &cli.command {
        Command::Up(args) => up(args, out),
        Command::Demo { scenario, store } => demo(scenario.as_deref(), store.as_deref(), json, out),
        Command::Cell => {
            let cell = api.get("/cell")?;
            if json {
                write_doc(out, &cell);
                return Ok(());
            }
            let modules = cell["modules"].as_array().cloned().unwrap_or_default();
            let _ = writeln!(out, "{} modules", modules.len());
            for m in modules {
                let _ = writeln!(
                    out,
                    "  {:<6} {:<12} {:<13} {}",
                    m["module_id"].as_str().unwrap_or(""),
                    m["descriptor"]["name"].as_str().unwrap_or(""),
                    m["descriptor"]["kind"].as_str().unwrap_or(""),
                    m["state"].as_str().unwrap_or("")
                );
            }
            Ok(())
        }
        Command::Advance { seconds } => {
            let v = api.post("/sim/advance", &json!({"seconds": seconds}))?;
            if json {
                write_doc(out, &v);
            } else {
                let _ = writeln!(out, "sim time {:.2} s", v["sim_time"].as_f64().unwrap_or(0.0));
            }
            Ok(())
        }
        Command::Module(cmd) => module(&api, cmd, json, out),
        Command::Skills(cmd) => skills(&api, cmd, json, out),
        Command::Teach(cmd) => teach(&api, cmd, json, out),
        Command::Seq(cmd) => seq(&api, cmd, json, out),
    }
}

fn module(api: &Api, cmd: &ModuleCmd, json: bool, out: &mut dyn Write) -> CliResult<()> {
    match cmd {
        ModuleCmd::Attach { spec } => {
            let v = api.post("/modules", &read_json(spec)?)?;
            if json {
                write_doc(out, &v);
            } else {
                let _ = writeln!(out, "attached {} as {}", v["record"]["descriptor"]["name"], v["record"]["module_id"]);
            }
        }
        ModuleCmd::Detach { module } => {
            let v = api.delete(&format!("/modules/{module}"))?;
            if json {
                write_doc(out, &v);
            } else {
                let n = v["aborted"].as_array().map_or(0, Vec::len);
                let _ = writeln!(out, "detached {module} ({n} commands aborted)");
            }
        }
        ModuleCmd::Show { module } => write_doc(out, &api.get(&format!("/modules/{module}"))?),
        ModuleCmd::Cmd { module, verb, params, wait } => {
            let params: Value = serde_json::from_str(params).map_err(|e| CliError::Usage(format!("params: {e}")))?;
            let sent = api.post(&format!("/modules/{module}/cmd"), &json!({"verb": verb, "params": params}))?;
            let id = sent["cmd_id"].as_u64().unwrap_or(0);
            let mut result = sent["result"].clone();
            let deadline = Instant::now() + Duration::from_secs_f64(*wait);
            while result.is_null() {
                if Instant::now() > deadline {
                    return Err(CliError::Failed(format!("command {id} still running after {wait} s")));
                }
                std::thread::sleep(Duration::from_millis(50));
                match api.get(&format!("/commands/{id}")) {
                    Ok(r) => result = r,
                    Err(CliError::Api { status: 404, .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            if json {
                write_doc(out, &result);
            } else {
                let _ = writeln!(out, "{} {}", result["outcome"].as_str().unwrap_or("?"), result["result"]);
            }
            if result["outcome"] != "SUCCEEDED" {
                return Err(CliError::Failed(format!("command {id} {}", result["outcome"])));
            }
        }
    }
    Ok(())
}

fn skills(api: &Api, cmd: &SkillsCmd, json: bool, out: &mut dyn Write) -> CliResult<()> {
    match cmd {
        SkillsCmd::Ls { kind, tag } => {
            let mut query = Vec::new();
            if let Some(k) = kind {
                query.push(format!("kind={k}"));
            }
            if let Some(t) = tag {
                query.push(format!("tag={t}"));
            }
            let path = if query.is_empty() { "/skills".to_string() } else { format!("/skills?{}", query.join("&")) };
            let v = api.get(&path)?;
            if json {
                write_doc(out, &v);
                return Ok(());
            }
            for s in v["skills"].as_array().into_iter().flatten() {
                let _ = writeln!(
                    out,
                    "{:<20} v{:<3} {}",
                    s["name"].as_str().unwrap_or(""),
                    s["version"],
                    s["kind"].as_str().unwrap_or("")
                );
            }
        }
        SkillsCmd::Show { name, version } => {
            let path = match version {
                Some(v) => format!("/skills/{name}?version={v}"),
                None => format!("/skills/{name}"),
            };
            write_doc(out, &api.get(&path)?);
        }
        SkillsCmd::Put { name, file } => {
            let v = api.put(&format!("/skills/{name}"), &read_json(file)?)?;
            if json {
                write_doc(out, &v);
            } else {
                let _ = writeln!(out, "{name} v{}", v["version"]);
            }
        }
        SkillsCmd::Rm { name } => {
            let v = api.delete(&format!("/skills/{name}"))?;
            if json {
                write_doc(out, &v);
            } else {
                let _ = writeln!(out, "deleted {name}");
            }
        }
        SkillsCmd::History { name } => {
            let v = api.get(&format!("/skills/{name}/history"))?;
            if json {
                write_doc(out, &v);
                return Ok(());
            }
            for h in v.as_array().into_iter().flatten() {
                let _ = writeln!(out, "v{} {}", h["version"], h["meta"]["created_wallclock"].as_str().unwrap_or(""));
            }
        }
    }
    Ok(())
}

fn teach(api: &Api, cmd: &TeachCmd, json: bool, out: &mut dyn Write) -> CliResult<()> {
    let TeachCmd::Record { robot, save, tape, rate, seconds } = cmd;
    let session = match tape {
        Some(file) => {
            let tape = read_json(file)?;
            let rate = rate.unwrap_or(50.0);
            let v = api.post("/teach/tape", &json!({"robot": robot, "tape": tape, "record": rate}))?;
            let id = v["session_id"]
                .as_u64()
                .ok_or_else(|| CliError::Failed("tape did not start a recording".into()))?;
            let limit = v["duration"].as_f64().unwrap_or(0.0) + 60.0;
            let start = Instant::now();
            loop {
                let s = api.get(&format!("/teach/sessions/{id}"))?;
                if s["tape_active"] == false {
                    break;
                }
                if start.elapsed().as_secs_f64() > limit {
                    return Err(CliError::Failed(
                        "tape still playing; is the cell clock running? try `reconcell advance`".into(),
                    ));
                }
                std::thread::sleep(Duration::from_millis(50));
            }
            id
        }
        None => {
            let v = api.post("/teach/record/start", &json!({"robot": robot, "rate": rate}))?;
            let id = v["session_id"].as_u64().unwrap_or(0);
            match seconds {
                Some(s) => std::thread::sleep(Duration::from_secs_f64(*s)),
                None => {
                    let _ = writeln!(out, "recording {robot}; press Enter to stop");
                    let _ = out.flush();
                    let mut line = String::new();
                    let _ = std::io::stdin().lock().read_line(&mut line);
                }
            }
            id
        }
    };
    // a tape stops its own recording when it runs out
    let current = api.get(&format!("/teach/sessions/{session}"))?;
    let mut stopped = if current["state"] == "RECORDING" {
        api.post("/teach/record/stop", &json!({"session_id": session}))?
    } else {
        current
    };
    if stopped["duration"].is_null() {
        let n = stopped["samples"].as_f64().unwrap_or(0.0);
        let rate = stopped["sample_rate"].as_f64().unwrap_or(1.0);
        stopped["duration"] = json!((n - 1.0).max(0.0) / rate);
    }
    let saved = api.post("/teach/save", &json!({"session_id": session, "name": save}))?;
    if json {
        write_doc(out, &json!({"session": stopped, "skill": saved}));
    } else {
        let _ = writeln!(
            out,
            "saved {save} v{} ({} samples, {:.2} s)",
            saved["version"],
            stopped["samples"],
            stopped["duration"].as_f64().unwrap_or(0.0)
        );
    }
    Ok(())
}

fn compile(api: &Api, file: &Path, args: &[(String, String)]) -> CliResult<Value> {
    let source = std::fs::read_to_string(file).map_err(|e| CliError::Usage(format!("{}: {e}", file.display())))?;
    let args: BTreeMap<_, _> = args.iter().cloned().collect();
    api.post("/sequences", &json!({"source": source, "args": args}))
}

fn seq(api: &Api, cmd: &SeqCmd, json: bool, out: &mut dyn Write) -> CliResult<()> {
    match cmd {
        SeqCmd::Compile { file, args } => {
            let ir = compile(api, file, args)?;
            if json {
                write_doc(out, &ir);
            } else {
                let n = ir["states"].as_array().map_or(0, Vec::len);
                let _ = writeln!(
                    out,
                    "compiled {} ({n} states, source {})",
                    ir["name"].as_str().unwrap_or(""),
                    ir["metadata"]["source_hash"].as_str().unwrap_or("")
                );
            }
        }
        SeqCmd::Ls => {
            let v = api.get("/sequences")?;
            if json {
                write_doc(out, &v);
            } else {
                for name in v["sequences"].as_array().into_iter().flatten() {
                    let _ = writeln!(out, "{}", name.as_str().unwrap_or(""));
                }
            }
        }
        SeqCmd::Listing { name } => {
            let _ = write!(out, "{}", api.get_text(&format!("/sequences/{name}/listing"))?);
        }
        SeqCmd::Dot { name } => {
            let _ = write!(out, "{}", api.get_text(&format!("/sequences/{name}/dot"))?);
        }
        SeqCmd::Validate { name } => {
            let v = api.post(&format!("/sequences/{name}/validate"), &json!({}))?;
            if json {
                write_doc(out, &v);
            } else {
                for f in v["findings"].as_array().into_iter().flatten() {
                    let _ = writeln!(out, "{}", finding_line(f));
                }
                let _ = writeln!(out, "{}", if v["runnable"] == true { "runnable" } else { "not runnable" });
            }
            if v["runnable"] != true {
                return Err(CliError::Failed(format!("{name} does not validate")));
            }
        }
        SeqCmd::Run { name, file, args, timeout } => {
            if let Some(file) = file {
                compile(api, file, args)?;
            } else if !args.is_empty() {
                return Err(CliError::Usage("--arg needs --file; arguments bind at compile time".into()));
            }
            let report = follow_run(api, name, *timeout, json, out)?;
            if json {
                write_doc(out, &report);
            } else {
                let _ = writeln!(
                    out,
                    "{} {} at {:.2} s",
                    name,
                    report["final_outcome"].as_str().unwrap_or("?"),
                    report["end_time"].as_f64().unwrap_or(0.0)
                );
            }
            if report["final_outcome"] != crate::assembler::END_SUCCESS {
                return Err(CliError::Failed(format!("run ended in {}", report["final_outcome"])));
            }
        }
    }
    Ok(())
}

/// Starts a run and follows its events until it finishes.
fn follow_run(api: &Api, name: &str, timeout: f64, json: bool, out: &mut dyn Write) -> CliResult<Value> {
    let started = api.post(&format!("/sequences/{name}/run"), &json!({}))?;
    let run_id = started["run_id"].as_u64().unwrap_or(0);
    let mut from = started["first_seq"].as_u64().unwrap_or(0);
    let deadline = Instant::now() + Duration::from_secs_f64(timeout);
    loop {
        let page = api.get(&format!("/events?from_seq={from}&kinds=STATE_ENTERED,RUN_FINISHED"))?;
        for e in page["events"].as_array().into_iter().flatten() {
            if e["payload"]["run_id"].as_u64() != Some(run_id) {
                continue;
            }
            if !json && e["kind"] == "STATE_ENTERED" {
                let _ = writeln!(
                    out,
                    "{:>8.2}  {}",
                    e["sim_time"].as_f64().unwrap_or(0.0),
                    e["payload"]["state"].as_str().unwrap_or("")
                );
            }
            if e["kind"] == "RUN_FINISHED" {
                return api.get(&format!("/runs/{run_id}"));
            }
        }
        from = page["next_seq"].as_u64().unwrap_or(from);
        if Instant::now() > deadline {
            return Err(CliError::Failed(format!("run {run_id} still going after {timeout} s")));
        }
        std::thread::sleep(Duration::from_millis(100));
    }
}

fn load_scenario(path: Option<&Path>) -> CliResult<Scenario> {
    match path {
        Some(p) => Scenario::load(p).map_err(|e| CliError::Usage(e.to_string())),
        None => Ok(Scenario::demo()),
    }
}

fn open_store(path: Option<&Path>) -> CliResult<SkillStore> {
    match path {
        Some(p) => SkillStore::open(p).map_err(|e| CliError::Failed(e.to_string())),
        None => Ok(SkillStore::in_memory()),
    }
}

fn demo(path: Option<&Path>, store: Option<&Path>, json: bool, out: &mut dyn Write) -> CliResult<()> {
    let scenario = load_scenario(path)?;
    let started = Instant::now();
    let (_, report) = run_headless(&scenario, open_store(store)?, &mut |_| {}).map_err(|e| CliError::Failed(e.to_string()))?;
    let wall = started.elapsed().as_secs_f64();
    if json {
        let mut v = serde_json::to_value(&report).expect("report serializes");
        v["wall_seconds"] = json!(wall);
        write_doc(out, &v);
    } else {
        let _ = writeln!(out, "scenario {}", report.scenario);
        for (name, version) in &report.taught {
            let _ = writeln!(out, "taught   {name} v{version}");
        }
        if let Some(run) = &report.run {
            for r in &run.records {
                let _ = writeln!(
                    out,
                    "{:>8.2}  {:<16} {}",
                    r.enter_time,
                    r.state,
                    r.outcome.as_deref().unwrap_or("")
                );
            }
            let _ = writeln!(out, "outcome  {}", run.final_outcome.as_deref().unwrap_or("none"));
        }
        let _ = writeln!(out, "sim time {:.2} s, wall {:.2} s", report.sim_time, wall);
        let _ = writeln!(out, "events   {} (sha256 {})", report.event_count, report.event_digest);
    }
    if report.succeeded() {
        Ok(())
    } else {
        Err(CliError::Failed("demo did not reach END_SUCCESS".into()))
    }
}

fn up(args: &UpArgs, out: &mut dyn Write) -> CliResult<()> {
    if !(args.speed >= 0.0 && args.speed.is_finite()) {
        return Err(CliError::Usage("--speed must be a non-negative number".into()));
    }
    let scenario = load_scenario(args.scenario.as_deref())?;
    let store = open_store(args.store.as_deref())?;
    let cell = if args.prepare {
        let p = prepare(&scenario, store, &mut |_| {}).map_err(|e| CliError::Failed(e.to_string()))?;
        for (name, version) in &p.taught {
            let _ = writeln!(out, "taught {name} v{version}");
        }
        if let Some(name) = &p.run_sequence {
            let _ = writeln!(out, "compiled {name}");
        }
        p.cell
    } else {
        scenario.bring_up(store).map_err(|e| CliError::Failed(e.to_string()))?
    };
    let config = ServiceConfig {
        speed: (args.speed > 0.0).then_some(args.speed),
        ..ServiceConfig::default()
    };
    let service = CellService::spawn(cell, config);
    let _agents = match args.agents {
        Some(addr) => {
            let l = AgentListener::bind(addr, service.handle()).map_err(|e| CliError::Failed(format!("agents: {e}")))?;
            let _ = writeln!(out, "agents on {}", l.local_addr());
            Some(l)
        }
        None => None,
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Failed(e.to_string()))?;
    rt.block_on(async {
        let gateway = Gateway::start(
            GatewayConfig {
                listen: args.listen,
                static_dir: args.static_dir.clone(),
            },
            service.handle(),
        )
        .await
        .map_err(|e| CliError::Failed(format!("listen on {}: {e}", args.listen)))?;
        let _ = writeln!(out, "cell '{}' serving on {}", scenario.file.name, gateway.url());
        let _ = out.flush();
        gateway
            .run_until(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Failed(e.to_string()))
    })?;
    drop(service);
    Ok(())
}
