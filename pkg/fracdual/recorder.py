"""
Experiment Recorder and Report Writer
Keeps the step log, checks and tabular rows of one experiment run and writes
them as report.json, results.csv and summary.md
"""

import csv
import json
import math
import os
import time
from dataclasses import dataclass
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional, Union

CSV_HEADER = ["experiment", "N", "s", "param", "level", "value", "flag"]


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


def _format_number(value: Union[int, float, str]) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:.12e}"
    return str(value)


class ExperimentRecorder:
    """Event log, embedded assertions and output files for one experiment"""

    def __init__(self, output_dir: str, experiment: str, dim: int, order: float, config_echo: Optional[Dict] = None):
        self.output_dir = output_dir
        self.experiment = experiment
        self.dim = dim
        self.order = order
        self.config_echo = config_echo or {}
        self.execution_log: List[Dict[str, Any]] = []
        self.rows: List[List[str]] = []
        self.checks: List[Check] = []
        self.results: Dict[str, Any] = {}
        self._started = time.perf_counter()

        # Create output directory if it doesn't exist
        os.makedirs(output_dir, exist_ok=True)

    # -- event log -----------------------------------------------------

    def _log(self, event: str, step: str, **extra):
        entry = {
            "timestamp": datetime.now().isoformat(),
            "elapsed": round(time.perf_counter() - self._started, 6),
            "event": event,
            "step": step,
        }
        entry.update(extra)
        self.execution_log.append(entry)

    def log_step_start(self, step: str):
        self._log("step_start", step)
        print(f"🚀 Starting {step}")

    def log_step_completion(self, step: str, detail: str = ""):
        self._log("step_completion", step, detail=detail)
        print(f"✅ Completed {step}" + (f": {detail}" if detail else ""))

    # -- results -------------------------------------------------------

    def add_row(self, param: str, level: Union[int, float, str], value: float, flag: bool):
        """One CSV row; the row layout never carries timestamps"""
        self.rows.append(
            [
                self.experiment,
                str(self.dim),
                f"{self.order:.12g}",
                param,
                _format_number(level),
                _format_number(float(value)),
                _format_number(bool(flag)),
            ]
        )

    def check(self, name: str, passed: bool, detail: str = "") -> bool:
        passed = bool(passed)
        self.checks.append(Check(name, passed, detail))
        self._log("check", name, passed=passed, detail=detail)
        if not passed:
            print(f"❌ Check failed: {name} {detail}".rstrip())
        return passed

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def first_failure(self) -> Optional[str]:
        return next((c.name for c in self.checks if not c.passed), None)

    # -- output --------------------------------------------------------

    def report(self, error: Optional[str] = None) -> Dict[str, Any]:
        return {
            "experiment": self.experiment,
            "config": self.config_echo,
            "results": self.results,
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks],
            "passed": self.passed and error is None,
            "first_failure": self.first_failure,
            "error": error,
            "wall_time": round(time.perf_counter() - self._started, 6),
            "execution_log": self.execution_log,
        }

    def save(self, error: Optional[str] = None) -> Dict[str, Any]:
        """Write report.json, results.csv and summary.md once, at the end"""
        report = self.report(error)

        json_file = os.path.join(self.output_dir, "report.json")
        with open(json_file, "w", encoding="utf-8") as f:
            json.dump(_jsonable(report), f, indent=2, ensure_ascii=False, allow_nan=False)

        csv_file = os.path.join(self.output_dir, "results.csv")
        with open(csv_file, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            writer.writerows(self.rows)

        md_file = os.path.join(self.output_dir, "summary.md")
        self._save_markdown_report(md_file, report)

        print(f"📁 All outputs saved to {self.output_dir}/")
        return report

    def _save_markdown_report(self, filepath: str, report: Dict[str, Any]):
        content = f"# Experiment Report: {self.experiment}\n\n"
        content += f"**N:** {self.dim}  **s:** {self.order:g}\n"
        content += f"**Wall time:** {report['wall_time']:.2f} s\n"
        content += f"**Status:** {'PASS' if report['passed'] else 'FAIL'}\n\n"
        if report["error"]:
            content += f"**Error:** {report['error']}\n\n"

        content += "## Checks\n\n"
        for c in self.checks:
            mark = "x" if c.passed else " "
            content += f"- [{mark}] {c.name}" + (f": {c.detail}" if c.detail else "") + "\n"

        content += "\n## Results\n\n```json\n"
        content += json.dumps(_jsonable(self.results), indent=2, allow_nan=False)
        content += "\n```\n"

        with open(filepath, "w", encoding="utf-8") as f:
            f.write(content)

    def print_execution_summary(self):
        """Print a summary of the run"""
        print("\n" + "=" * 60)
        print(f"🔍 EXPERIMENT SUMMARY: {self.experiment}")
        print("=" * 60)

        for i, c in enumerate(self.checks, 1):
            print(f"{i}. {'✅' if c.passed else '❌'} {c.name}" + (f" ({c.detail})" if c.detail else ""))

        print(f"\n📊 {len(self.rows)} result rows, {sum(c.passed for c in self.checks)}/{len(self.checks)} checks passed")
        print(f"📁 Detailed outputs saved in: {self.output_dir}/")
        print("=" * 60)


def _jsonable(value: Any) -> Any:
    """Plain JSON values; non-finite floats become the strings "inf", "-inf" and "nan"."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "tolist"):
        return _jsonable(value.tolist())
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    return str(value)


def run_with_recording(recorder: ExperimentRecorder, runner: Callable[[ExperimentRecorder], None]) -> Dict[str, Any]:
    """
    Run an experiment body against a recorder, saving the report even when
    the body raises

    Returns the saved report dict
    """
    print(f"🎬 Starting experiment {recorder.experiment}...")

    try:
        runner(recorder)
    except Exception as e:
        print(f"❌ Error during experiment: {e}")
        # Still try to save what we have
        recorder.save(error=f"{type(e).__name__}: {e}")
        raise

    report = recorder.save()
    recorder.print_execution_summary()
    return report
