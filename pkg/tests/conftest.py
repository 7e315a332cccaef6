import sys

from hypothesis import settings

# reproducible CI runs: examples are derived from the test source, not a clock seed
settings.register_profile("ci", derandomize=True, print_blob=True)
settings.load_profile("ci")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
            terminalreporter.write_line(lines[key])
