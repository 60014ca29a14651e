"""Prints one verdict line per acceptance criterion at the end of a run."""

_CRITERIA = {}


def register_criterion(number: int, label: str):
    _CRITERIA[number] = label


def pytest_terminal_summary(terminalreporter):
    results = {}
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            name = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" in name:
                num = int(name.split("test_criterion_")[1].split("_")[0])
                worst = results.get(num, "passed")
                results[num] = status if status != "passed" else worst
    if not results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num in sorted(results):
        verdict = "PASS" if results[num] == "passed" else "FAIL"
        label = _CRITERIA.get(num, "")
        terminalreporter.write_line(f"criterion {num:2d}: {verdict}  {label}")
