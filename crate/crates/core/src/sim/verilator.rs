//! Verilator driver.
//!
//! Build: `verilator --binary --timing --coverage-line --top-module tb ...`,
//! run the produced binary with `+seed=N`, then convert the coverage database
//! with `verilator_coverage --write-info` into LCOV for coverage-core.
//!
//! Tool paths come from `COVCLOSE_VERILATOR` and `COVCLOSE_VERILATOR_COVERAGE`
//! (defaults: `verilator`, `verilator_coverage` on `PATH`).

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

use super::classify::{
    classify_failure, log_excerpt, ExcerptPolicy, BUILD_FAILED_MARKER, RUN_FAILED_MARKER,
    TIMEOUT_MARKER,
};
use super::{SimBackend, SimError, SimOutcome, SimRequest, SimStatus, SIM_LOG};

pub const ENV_VERILATOR: &str = "COVCLOSE_VERILATOR";
pub const ENV_VERILATOR_COVERAGE: &str = "COVCLOSE_VERILATOR_COVERAGE";

const OBJ_DIR: &str = "obj_dir";
const BINARY: &str = "Vtb";
const COVERAGE_DB: &str = "coverage.dat";
const COVERAGE_INFO: &str = "coverage.info";

#[derive(Debug, Clone)]
pub struct VerilatorConfig {
    pub verilator: PathBuf,
    pub verilator_coverage: PathBuf,
    pub testbench_top: String,
    pub extra_args: Vec<String>,
    pub excerpt: ExcerptPolicy,
}

impl Default for VerilatorConfig {
    fn default() -> Self {
        VerilatorConfig {
            verilator: "verilator".into(),
            verilator_coverage: "verilator_coverage".into(),
            testbench_top: "tb".into(),
            extra_args: Vec::new(),
            excerpt: ExcerptPolicy::default(),
        }
    }
}

impl VerilatorConfig {
    pub fn from_env() -> Self {
        let mut c = VerilatorConfig::default();
        if let Some(v) = std::env::var_os(ENV_VERILATOR) {
            c.verilator = v.into();
        }
        if let Some(v) = std::env::var_os(ENV_VERILATOR_COVERAGE) {
            c.verilator_coverage = v.into();
        }
        c
    }
}

#[derive(Debug, Clone)]
pub struct VerilatorBackend {
    config: VerilatorConfig,
    version: String,
}

enum Exit {
    Code(i32),
    Killed,
}

impl VerilatorBackend {
    /// Probes both tools; fails with `BackendUnavailable` if either is missing.
    pub fn new(config: VerilatorConfig) -> Result<Self, SimError> {
        let version = probe(&config.verilator)?;
        probe(&config.verilator_coverage)?;
        Ok(VerilatorBackend { config, version })
    }

    pub fn from_env() -> Result<Self, SimError> {
        Self::new(VerilatorConfig::from_env())
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    fn tool(
        &self,
        cmd: &mut Command,
        ws: &Path,
        tag: &str,
        deadline: Instant,
        log: &mut String,
    ) -> Result<Exit, SimError> {
        let out_path = ws.join(format!("{tag}.log"));
        let out = File::create(&out_path).map_err(|e| SimError::io(&out_path, e))?;
        let err = out.try_clone().map_err(|e| SimError::io(&out_path, e))?;
        cmd.current_dir(ws)
            .stdin(Stdio::null())
            .stdout(Stdio::from(out))
            .stderr(Stdio::from(err));
        log::debug!("running {cmd:?}");

        let mut child = cmd.spawn().map_err(|e| {
            SimError::BackendUnavailable(format!("{}: {e}", cmd.get_program().to_string_lossy()))
        })?;
        let left = deadline.saturating_duration_since(Instant::now());
        let status = match child.wait_timeout(left).map_err(|e| SimError::io(ws, e))? {
            Some(s) => Exit::Code(s.code().unwrap_or(-1)),
            None => {
                let _ = child.kill();
                let _ = child.wait();
                Exit::Killed
            }
        };
        let text = std::fs::read(&out_path).map_err(|e| SimError::io(&out_path, e))?;
        log.push_str(&format!("== {tag} ==\n"));
        log.push_str(&String::from_utf8_lossy(&text));
        if !log.ends_with('\n') {
            log.push('\n');
        }
        Ok(status)
    }

    fn finish(
        &self,
        req: &SimRequest,
        log: String,
        status: Option<SimStatus>,
        artifact: Option<PathBuf>,
        start: Instant,
    ) -> Result<SimOutcome, SimError> {
        let log_path = req.workspace.join(SIM_LOG);
        std::fs::write(&log_path, &log).map_err(|e| SimError::io(&log_path, e))?;
        let (status, recognized, first) = match status {
            Some(SimStatus::Success) => (SimStatus::Success, true, None),
            Some(s) => (s, true, classify_failure(&log).first_error_line),
            None => {
                let c = classify_failure(&log);
                (c.status, c.recognized, c.first_error_line)
            }
        };
        Ok(SimOutcome {
            status,
            log_excerpt: log_excerpt(&log, first.as_deref(), self.config.excerpt),
            coverage_artifact: artifact,
            runtime_s: start.elapsed().as_secs_f64(),
            log_path: Some(log_path),
            recognized,
        })
    }
}

fn probe(tool: &Path) -> Result<String, SimError> {
    let out = Command::new(tool)
        .arg("--version")
        .stdin(Stdio::null())
        .output()
        .map_err(|e| SimError::BackendUnavailable(format!("{}: {e}", tool.display())))?;
    if !out.status.success() {
        return Err(SimError::BackendUnavailable(format!(
            "{} --version exited with {}",
            tool.display(),
            out.status
        )));
    }
    Ok(String::from_utf8_lossy(&out.stdout).trim().to_owned())
}

fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

impl SimBackend for VerilatorBackend {
    fn name(&self) -> &str {
        "verilator"
    }

    fn run(&self, req: &SimRequest) -> Result<SimOutcome, SimError> {
        req.check()?;
        let start = Instant::now();
        let deadline = start + Duration::from_secs(req.wall_timeout_s);
        let ws = absolute(&req.workspace);
        let mut log = String::new();

        let mut build = Command::new(&self.config.verilator);
        build.args([
            "--binary",
            "--timing",
            "--timescale",
            "1ns/1ps",
            "-Wno-fatal",
            "-Wno-lint",
            "-Wno-style",
        ]);
        if req.coverage_enabled {
            build.arg("--coverage-line");
        }
        build.arg("--top-module").arg(&self.config.testbench_top);
        build
            .arg("-Mdir")
            .arg(ws.join(OBJ_DIR))
            .arg("-o")
            .arg(BINARY);
        build.args(&self.config.extra_args);
        build.args(req.design_files.iter().map(|p| absolute(p)));
        build.arg(absolute(&req.testbench_file));
        match self.tool(&mut build, &ws, "build", deadline, &mut log)? {
            Exit::Killed => {
                log.push_str(&format!(
                    "{TIMEOUT_MARKER} after {} s (build)\n",
                    req.wall_timeout_s
                ));
                return self.finish(req, log, Some(SimStatus::Timeout), None, start);
            }
            Exit::Code(0) => {}
            Exit::Code(c) => {
                log.push_str(&format!("{BUILD_FAILED_MARKER} (exit {c})\n"));
                return self.finish(req, log, None, None, start);
            }
        }

        let mut run = Command::new(ws.join(OBJ_DIR).join(BINARY));
        run.arg(format!("+seed={}", req.seed));
        // Verilator treats seed 0 as "pick one", so shift by one
        run.arg(format!("+verilator+seed+{}", req.seed.saturating_add(1)));
        if req.coverage_enabled {
            run.arg(format!(
                "+verilator+coverage+file+{}",
                ws.join(COVERAGE_DB).display()
            ));
        }
        let run_exit = self.tool(&mut run, &ws, "run", deadline, &mut log)?;
        let watchdog = log.contains("TB_WATCHDOG");
        match run_exit {
            Exit::Killed => {
                log.push_str(&format!(
                    "{TIMEOUT_MARKER} after {} s (run)\n",
                    req.wall_timeout_s
                ));
                return self.finish(req, log, Some(SimStatus::Timeout), None, start);
            }
            Exit::Code(0) if watchdog => {
                return self.finish(req, log, Some(SimStatus::Timeout), None, start)
            }
            Exit::Code(0) => {}
            Exit::Code(c) => {
                log.push_str(&format!("{RUN_FAILED_MARKER} (exit {c})\n"));
                return self.finish(req, log, None, None, start);
            }
        }

        if !req.coverage_enabled {
            return self.finish(req, log, Some(SimStatus::Success), None, start);
        }
        let mut conv = Command::new(&self.config.verilator_coverage);
        conv.arg("--write-info")
            .arg(ws.join(COVERAGE_INFO))
            .arg(ws.join(COVERAGE_DB));
        match self.tool(&mut conv, &ws, "coverage", deadline, &mut log)? {
            Exit::Code(0) => {}
            Exit::Killed => {
                log.push_str(&format!(
                    "{TIMEOUT_MARKER} after {} s (coverage)\n",
                    req.wall_timeout_s
                ));
                return self.finish(req, log, Some(SimStatus::Timeout), None, start);
            }
            Exit::Code(c) => {
                let _ = std::fs::write(ws.join(SIM_LOG), &log);
                return Err(SimError::BackendUnavailable(format!(
                    "verilator_coverage exited with {c}"
                )));
            }
        }
        let info = ws.join(COVERAGE_INFO);
        if !info.is_file() {
            return Err(SimError::io(&info, "verilator_coverage produced no output"));
        }
        self.finish(req, log, Some(SimStatus::Success), Some(info), start)
    }
}
