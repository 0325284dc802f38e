import re
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))
sys.path.insert(0, str(Path(__file__).resolve().parent))

CRITERIA = {
    "a1": "heatmap contract (exact round-trip, unit peak, sigma falloff)",
    "a2": "fulcrum invariant under 1e5-step control fuzz",
    "a3": "contact oracle equivalence on 50 random scenes",
    "a4": "fig7 disambiguation (same pixels, opposite verdicts)",
    "a5": "fig6 feedback contract (red/green writes + restoration)",
    "a6": "suturing arc geometry and monotone bite depth",
    "a7": "determinism: record/replay byte-identity + tamper detection",
    "a8": "temporal filter majority stability (exhaustive)",
    "a9": "headless 3600-tick run inside real-time budget",
}

_acceptance_results = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    match = re.search(r"test_acceptance\.py::test_(a\d+)_", report.nodeid)
    if match:
        _acceptance_results[match.group(1)] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for key in sorted(CRITERIA):
        if key not in _acceptance_results:
            continue
        outcome = _acceptance_results[key]
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{key.upper()}] {status} - {CRITERIA[key]}")
