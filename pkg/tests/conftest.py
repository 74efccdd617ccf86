import re

CRITERIA = {
    1: "routing algorithms match exhaustive oracles",
    2: "tree churn preserves controller invariants",
    3: "multicast copy dominance per link",
    4: "weight estimator exact to one ulp",
    5: "PSNR pipeline anchors and monotonicity",
    6: "loss ordering across load levels",
    7: "service continuity where baselines deny clients",
    8: "per-class PSNR separation at medium load",
    9: "byte-identical reruns",
    10: "behavior model stationary fraction",
}


def pytest_terminal_summary(terminalreporter):
    results = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, ()):
            m = re.search(r"test_acceptance\.py::test_criterion_(\d+)",
                          getattr(rep, "nodeid", ""))
            if not m:
                continue
            if outcome == "passed" and getattr(rep, "when", "call") != "call":
                continue
            key = int(m.group(1))
            results[key] = (outcome == "passed"
                            and results.get(key, True))
    if not results:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for k in sorted(results):
        status = "PASS" if results[k] else "FAIL"
        terminalreporter.write_line(
            f"  criterion {k:2d}: {status} - {CRITERIA.get(k, '')}")
