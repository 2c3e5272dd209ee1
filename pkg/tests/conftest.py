"""Print one pass/fail line per acceptance criterion at the end of the run."""

CRITERIA = {
    1: "unequal variances, K_A=3, K_B=9: EV/Welch inflate FDR, EB methods control it, B-F has no power",
    2: "equal variances, K_B=K_A: all methods control FDR, VREPB power matches EV",
    3: "oracle-prior p-values are uniform under hierarchical nulls",
    4: "plug-in p-values approach the oracle ones as n grows",
    5: "fixed variance ratios: average null rejection rate stays at the nominal level",
    6: "NPMLE optimality certificate and random simplex perturbations",
    7: "identity oracles: pooled-t reconstruction, point-mass prior, B-F Monte Carlo, unit weights",
    8: "special functions against quadrature; densities integrate to one",
}

_outcomes = {}
_criterion_of = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            _criterion_of[item.nodeid] = mark.args[0]


def pytest_runtest_logreport(report):
    n = _criterion_of.get(report.nodeid)
    if n is None:
        return
    if report.failed:
        _outcomes[n] = False
    elif report.when == "call":
        _outcomes.setdefault(n, True)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, text in CRITERIA.items():
        if n in _outcomes:
            status = "PASS" if _outcomes[n] else "FAIL"
        else:
            status = "NOT RUN"
        terminalreporter.write_line(f"criterion {n}: {status}  {text}")
