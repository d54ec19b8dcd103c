import mpmath as mp
import pytest


@pytest.fixture(scope="session")
def hp():
    """High-precision Poisson oracle: returns (pmf list, helpers) evaluated with mpmath."""
    return HighPrecision()


class HighPrecision:
    dps = 120

    def masses(self, mu, upto):
        with mp.workdps(self.dps):
            m = mp.mpf(mu)
            p = [mp.e ** (-m)]
            for k in range(1, upto + 1):
                p.append(p[-1] * m / k)
            return p

    def _cut(self, mu):
        return int(mu + 40 * (mu ** 0.5) + 200)

    def truncated(self, mu, q):
        """(E[min(Y,q)], E[min(Y,q)^2]) as mpf."""
        with mp.workdps(self.dps):
            p = self.masses(mu, q - 1)
            below = mp.fsum(p)
            m1 = mp.fsum(k * p[k] for k in range(q)) + q * (1 - below)
            m2 = mp.fsum(k * k * p[k] for k in range(q)) + q * q * (1 - below)
            return m1, m2

    def survival(self, mu, n):
        with mp.workdps(self.dps):
            return 1 - mp.fsum(self.masses(mu, n - 1)) if n > 0 else mp.mpf(1)


_criteria: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria[report.nodeid.split("::")[-1]] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria):
        number = int(name.split("_")[2])
        label = " ".join(name.split("_")[3:])
        terminalreporter.write_line(f"criterion {number:2d}  {_criteria[name]}  {label}")
