# app/utils/report_printer.py
import json
from datetime import datetime
from pathlib import Path
from typing import Dict, Optional, Sequence

import pandas as pd

from app.models.reports import SuiteResult, Verdict

SUMMARY_COLUMNS = ["suite", "metric", "value", "threshold", "verdict", "seconds", "note"]


class RunReportPrinter:
    """Summary tables and run log analysis for one output directory"""

    def __init__(self, output_dir: Path):
        self.output_dir = Path(output_dir)

    def summary_frame(self, results: Sequence[SuiteResult]) -> pd.DataFrame:
        """One row per suite"""
        rows = [result.model_dump(mode="json") for result in results]
        return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)

    def write_summary(self, results: Sequence[SuiteResult], filename: str = "summary.csv") -> Path:
        """Write the plot-ready summary table"""
        path = self.output_dir / filename
        path.parent.mkdir(parents=True, exist_ok=True)
        self.summary_frame(results).to_csv(path, index=False, float_format="%.6e")
        return path

    def read_run_log(self) -> pd.DataFrame:
        """Load run_log.jsonl; an empty frame when no log was written"""
        path = self.output_dir / "run_log.jsonl"
        if not path.exists():
            return pd.DataFrame()
        with open(path, encoding="utf-8") as handle:
            entries = [json.loads(line) for line in handle if line.strip()]
        return pd.json_normalize(entries)

    def get_stage_performance(self) -> pd.DataFrame:
        """Duration statistics of the stages that completed"""
        logs = self.read_run_log()
        column = "extra_data.stage_complete"
        if logs.empty or column not in logs:
            return pd.DataFrame(columns=["stage", "runs", "avg_duration", "max_duration"])
        done = logs[logs[column].notna()].copy()
        done["stage"] = done["message"].str.extract(r"Completed: (.*) \(duration", expand=False)
        done["duration"] = done["extra_data.duration"].astype(float)
        table = done.groupby("stage")["duration"].agg(["count", "mean", "max"]).reset_index()
        table.columns = ["stage", "runs", "avg_duration", "max_duration"]
        return table.sort_values("avg_duration", ascending=False)

    def get_error_summary(self) -> Dict:
        """Errors of the run grouped by function and exception type"""
        logs = self.read_run_log()
        if logs.empty:
            return {"total_errors": 0, "error_breakdown": []}
        errors = logs[logs["level"].isin(["ERROR", "CRITICAL"])]
        if errors.empty:
            return {"total_errors": 0, "error_breakdown": []}
        grouped = errors.fillna({"exception_type": "-"}).groupby(["function", "exception_type"]).size()
        breakdown = [
            {"function": function, "exception_type": exc, "count": int(count)}
            for (function, exc), count in grouped.sort_values(ascending=False).items()
        ]
        return {"total_errors": len(breakdown), "error_breakdown": breakdown}

    def print_summary(self, title: str, results: Sequence[SuiteResult], show_log: bool = True):
        """Print a banner report of suite results and the run log"""
        print(f"\n{'='*60}")
        print(f"{title.upper()}")
        print(f"{'='*60}")
        print(f"Generated: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
        print(f"Output: {self.output_dir}")

        print(f"\n{'SUITES':-^60}")
        print(f"{'Suite':<25} {'Value':<10} {'Bound':<10} {'Verdict':<7} {'s':<6}")
        print("-" * 60)
        for result in results:
            print(
                f"{result.suite:<25} {result.value:<10.2e} {result.threshold:<10.1e} "
                f"{result.verdict.value:<7} {result.seconds:<6.1f}"
            )
        failed = [result.suite for result in results if result.verdict == Verdict.failed]
        print(f"\nPassed: {len(results) - len(failed)}/{len(results)}")
        if failed:
            print(f"Failed: {', '.join(failed)}")

        if not show_log:
            return
        performance = self.get_stage_performance()
        if not performance.empty:
            print(f"\n{'STAGE PERFORMANCE':-^60}")
            print(f"{'Stage':<25} {'Count':<8} {'Avg(s)':<8} {'Max(s)':<8}")
            print("-" * 50)
            for row in performance.head(10).itertuples():
                print(f"{row.stage[:25]:<25} {row.runs:<8} {row.avg_duration:<8.2f} {row.max_duration:<8.2f}")

        errors = self.get_error_summary()
        if errors["total_errors"]:
            print(f"\n{'ERRORS':-^60}")
            for item in errors["error_breakdown"][:5]:
                print(f"- {item['function']}: {item['exception_type']} ({item['count']} times)")


def print_report(report, title: Optional[str] = None):
    """Print a single checker report as key/value lines"""
    data = report.model_dump(mode="json")
    print(f"\n{'='*60}")
    print(f"{(title or type(report).__name__).upper()}")
    print(f"{'='*60}")
    for key, value in data.items():
        if isinstance(value, (dict, list)):
            value = json.dumps(value)
            if len(value) > 80:
                value = value[:77] + "..."
        print(f"{key:<25} {value}")