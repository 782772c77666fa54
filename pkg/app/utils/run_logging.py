# app/utils/run_logging.py
import json
import logging
import os
import socket
import sys
import traceback
from dataclasses import asdict, dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from app.config.settings import LOG_BATCH_SIZE

_STANDARD_ATTRIBUTES = {
    'name', 'msg', 'args', 'levelname', 'levelno', 'pathname', 'filename', 'module', 'lineno',
    'funcName', 'created', 'msecs', 'relativeCreated', 'thread', 'threadName', 'processName',
    'process', 'message', 'exc_info', 'exc_text', 'stack_info', 'taskName',
}


@dataclass
class RunLogEntry:
    """Data model for one line of run_log.jsonl"""
    timestamp: str
    level: str
    message: str
    logger_name: str
    module: str
    function: str
    line_number: int
    process_id: int
    thread_id: int
    hostname: str
    command: str
    seed: Optional[int] = None
    exception_type: Optional[str] = None
    exception_message: Optional[str] = None
    stack_trace: Optional[str] = None
    extra_data: Optional[Dict[str, Any]] = None


class RunLogHandler(logging.Handler):
    """Buffered handler writing one JSON object per record to a run log file"""

    def __init__(self, log_path: os.PathLike, batch_size: int = LOG_BATCH_SIZE, command: Optional[str] = None,
                 seed: Optional[int] = None):
        super().__init__()
        self.log_path = Path(log_path)
        self.hostname = socket.gethostname()
        self.command = command or os.path.basename(sys.argv[0]) or "tensor_radon"
        self.seed = seed
        self.batch_size = batch_size
        self.log_buffer: List[Dict[str, Any]] = []

    def emit(self, record: logging.LogRecord):
        """Buffer log records and append them in batches"""
        try:
            self.log_buffer.append(asdict(self._create_log_entry(record)))
            if len(self.log_buffer) >= self.batch_size:
                self.flush()
        except Exception:
            self.handleError(record)

    def _create_log_entry(self, record: logging.LogRecord) -> RunLogEntry:
        """Create RunLogEntry from logging record"""
        log_entry = RunLogEntry(
            timestamp=datetime.fromtimestamp(record.created).isoformat(),
            level=record.levelname,
            message=record.getMessage(),
            logger_name=record.name,
            module=getattr(record, 'module', 'unknown'),
            function=getattr(record, 'funcName', 'unknown'),
            line_number=getattr(record, 'lineno', 0),
            process_id=getattr(record, 'process', 0),
            thread_id=getattr(record, 'thread', 0),
            hostname=self.hostname,
            command=self.command,
            seed=self.seed,
        )

        # Add exception information
        if record.exc_info:
            exc_type, exc_value, exc_traceback = record.exc_info
            log_entry.exception_type = exc_type.__name__ if exc_type else None
            log_entry.exception_message = str(exc_value) if exc_value else None
            log_entry.stack_trace = ''.join(traceback.format_exception(
                exc_type, exc_value, exc_traceback
            )) if exc_traceback else None

        extra_data = {
            key: str(value) for key, value in record.__dict__.items() if key not in _STANDARD_ATTRIBUTES
        }
        if extra_data:
            log_entry.extra_data = extra_data
        return log_entry

    def flush(self):
        """Append buffered entries to the log file"""
        if not self.log_buffer:
            return
        self.acquire()
        try:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.log_path, "a", encoding="utf-8") as handle:
                for entry in self.log_buffer:
                    handle.write(json.dumps(entry) + "\n")
            self.log_buffer.clear()
        except OSError as e:
            # Fallback to stderr if the run directory is not writable
            print(f"Failed to flush run log to {self.log_path}: {e}", file=sys.stderr)
        finally:
            self.release()

    def close(self):
        """Ensure all entries are written before closing"""
        self.flush()
        super().close()


def setup_run_logging(
    level: int = logging.INFO,
    log_path: Optional[os.PathLike] = None,
    console_logging: bool = True,
    batch_size: int = LOG_BATCH_SIZE,
    command: Optional[str] = None,
    seed: Optional[int] = None,
) -> Optional[RunLogHandler]:
    """
    Setup run logging configuration

    Args:
        level: Logging level
        log_path: run_log.jsonl location; no file handler when omitted
        console_logging: Whether to also log to console
        batch_size: Records buffered before each write
        command: Subcommand stamped on every run log line
        seed: Run seed stamped on every run log line

    Returns:
        The run log handler, if one was installed
    """
    # Clear existing handlers
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()

    handlers: List[logging.Handler] = []
    run_handler = None
    if log_path is not None:
        # JSON lines are built from the record, no formatter needed
        run_handler = RunLogHandler(log_path, batch_size=batch_size, command=command, seed=seed)
        run_handler.setLevel(level)
        handlers.append(run_handler)

    if console_logging:
        prefix = f"[{command} seed={seed}] " if command else ""
        console_handler = logging.StreamHandler()
        console_handler.setLevel(level)
        console_handler.setFormatter(logging.Formatter(f"%(asctime)s - %(levelname)s - {prefix}%(message)s"))
        handlers.append(console_handler)

    # Configure root logger
    logging.basicConfig(level=level, handlers=handlers, force=True)

    # Reduce noise from plotting and numerics libraries
    for logger_name in ["matplotlib", "numexpr", "PIL"]:
        logging.getLogger(logger_name).setLevel(logging.WARNING)

    return run_handler


# Context manager for timing one stage of a run
class RunStage:
    """
    Log the start, verdict and duration of a run stage.

    The completion record reads "Completed: <stage> (duration: ..s, verdict: ..)"
    and carries stage, duration, verdict and the given fields (command,
    seed, m, ...) as extra data; report_printer parses it back.
    """

    def __init__(self, stage: str, logger: logging.Logger = None, **fields):
        self.stage = stage
        self.logger = logger or logging.getLogger(__name__)
        self.fields = fields
        self.verdict: Optional[str] = None
        self.start_time = None
        self.duration = 0.0

    def record_verdict(self, ok: bool) -> bool:
        self.verdict = "pass" if ok else "fail"
        return ok

    def __enter__(self):
        self.start_time = datetime.now()
        self.logger.info(f"Starting: {self.stage}", extra={"stage": self.stage, "stage_start": True, **self.fields})
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.duration = (datetime.now() - self.start_time).total_seconds()
        extra = {"stage": self.stage, "duration": self.duration, **self.fields}

        if exc_type is None:
            suffix = f", verdict: {self.verdict}" if self.verdict else ""
            self.logger.info(
                f"Completed: {self.stage} (duration: {self.duration:.2f}s{suffix})",
                extra={"stage_complete": True, "verdict": self.verdict, **extra}
            )
        else:
            self.logger.error(
                f"{self.stage} failed after {self.duration:.2f}s: {exc_val}",
                exc_info=(exc_type, exc_val, exc_tb),
                extra={"stage_error": True, **extra}
            )

        return False  # Don't suppress the exception


def log_exit_code(command: str, code: int, logger: logging.Logger = None):
    """Last record of a run: the process exit code"""
    logger = logger or logging.getLogger(__name__)
    level = logging.INFO if code == 0 else logging.WARNING
    logger.log(level, f"{command} exited with code {code}", extra={"exit_code": code, "run_complete": True})


def log_artifact_write(kind: str, path: os.PathLike, count: int = None, logger: logging.Logger = None):
    """Log an artifact written to disk"""
    logger = logger or logging.getLogger(__name__)
    message = f"Wrote {kind} {path}"
    if count is not None:
        message += f" ({count} values)"

    logger.info(
        message,
        extra={
            "artifact_kind": kind,
            "artifact_path": str(path),
            "count": count,
            "artifact_write": True
        }
    )
