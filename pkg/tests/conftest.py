import pytest

from cipherloop import paillier
from cipherloop.crypto_core import Rng
from cipherloop.dgk import dgk_keygen

_REPORT: list[tuple[str, bool, str]] = []


@pytest.fixture
def rng():
    return Rng(12345)


@pytest.fixture(scope="session")
def ahe_keys():
    return paillier.keygen(512, Rng(7))


@pytest.fixture(scope="session")
def small_ahe_keys():
    return paillier.keygen(256, Rng(8))


@pytest.fixture(scope="session")
def tiny_dgk():
    """u = 257: full decryption by table, room for 6-bit comparisons."""
    return dgk_keygen(128, 16, Rng(9), plaintext_bits=8)


@pytest.fixture(scope="session")
def dgk_keys():
    return dgk_keygen(384, 80, Rng(10))


@pytest.fixture(scope="session")
def acceptance_report():
    def record(criterion: str, passed: bool, detail: str = "") -> None:
        _REPORT.append((criterion, passed, detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(_REPORT, key=lambda r: int(r[0].split()[0])):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {criterion}" + (f" -- {detail}" if detail else ""))
